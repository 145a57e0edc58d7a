//! Corruption, the repair loss, and the training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{TimeSeries, WindowIndex};
use crate::error::{Error, Result};
use crate::inference::fit_score_stats;
use crate::model::{JuReNet, NetDims, OutputInit};
use crate::numerics::{
    first_diff, first_diff_adjoint, huber, huber_backward, AdamWConfig, Batch3, DEFAULT_HUBER_DELTA,
};
use crate::scoring::{ScoreStats, ScoreWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Standard deviation of the additive Gaussian corruption.
    pub sigma: f64,
    /// Probability of zeroing a whole channel of a window.
    pub mask_p: f64,
    /// Weight of the first-difference term in the loss.
    pub lambda_diff: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub train_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sigma: 0.1,
            mask_p: 0.05,
            lambda_diff: 0.25,
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 128,
            max_epochs: 30,
            patience: 3,
            val_fraction: 0.2,
            seed: 0,
            train_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bad.push("sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.mask_p) {
            bad.push("mask_p must lie in [0, 1]");
        }
        if !(self.lambda_diff >= 0.0 && self.lambda_diff.is_finite()) {
            bad.push("lambda_diff must be >= 0");
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            bad.push("lr must be > 0 and weight_decay >= 0");
        }
        if self.batch_size == 0 || self.train_stride == 0 {
            bad.push("batch_size and train_stride must be positive");
        }
        if self.patience == 0 {
            bad.push("patience must be >= 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            bad.push("val_fraction must lie in (0, 1)");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Network hyperparameters other than the channel count, which comes from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub kernel: usize,
    pub n_blocks: usize,
    pub output_init: OutputInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            kernel: 5,
            n_blocks: 1,
            output_init: OutputInit::Zero,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, channels: usize) -> NetDims {
        NetDims::new(channels, self.hidden, self.kernel, self.n_blocks)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Validation loss of the initial network, before any update.
    pub initial_val_loss: f64,
    /// Mean training loss of each completed epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss after each completed epoch.
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were kept; 0 means the initial network.
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    pub n_train_windows: usize,
    pub n_val_windows: usize,
    pub seconds: f64,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss
            .iter()
            .copied()
            .fold(self.initial_val_loss, f64::min)
    }
}

/// Equality ignores wall-clock time.
impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.initial_val_loss.to_bits() == other.initial_val_loss.to_bits()
            && bits(&self.train_loss) == bits(&other.train_loss)
            && bits(&self.val_loss) == bits(&other.val_loss)
            && self.best_epoch == other.best_epoch
            && self.stopped_epoch == other.stopped_epoch
            && self.n_train_windows == other.n_train_windows
            && self.n_val_windows == other.n_val_windows
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Adds `sigma`-scaled Gaussian noise to every entry, then zeroes each
/// (window, channel) pair with probability `mask_p`. The input is untouched.
pub fn corrupt<R: Rng + ?Sized>(x: &Batch3, sigma: f64, mask_p: f64, rng: &mut R) -> Batch3 {
    let mut out = x.clone();
    for v in out.as_slice_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * e;
    }
    let (b, w, c) = out.dims();
    let mut view = out.view_mut();
    for bi in 0..b {
        for ch in 0..c {
            if rng.random::<f64>() < mask_p {
                for t in 0..w {
                    view[[bi, t, ch]] = 0.0;
                }
            }
        }
    }
    out
}

/// Amplitude Huber plus `lambda_diff` times first-difference Huber, and its
/// gradient with respect to `repair`.
pub fn repair_loss(repair: &Batch3, clean: &Batch3, lambda_diff: f64) -> Result<(f64, Batch3)> {
    repair.ensure_same_shape(clean, "repair loss")?;
    let amp = huber(repair, clean, DEFAULT_HUBER_DELTA)?;
    let mut grad = huber_backward(repair, clean, DEFAULT_HUBER_DELTA)?;
    if lambda_diff == 0.0 {
        return Ok((amp, grad));
    }
    let dr = first_diff(repair)?;
    let dc = first_diff(clean)?;
    let diff = huber(&dr, &dc, DEFAULT_HUBER_DELTA)?;
    let gd = first_diff_adjoint(&huber_backward(&dr, &dc, DEFAULT_HUBER_DELTA)?);
    for (g, &d) in grad.as_slice_mut().iter_mut().zip(gd.as_slice()) {
        *g += lambda_diff * d;
    }
    Ok((amp + lambda_diff * diff, grad))
}

/// Independent RNG streams derived from the master seed.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_VAL: u64 = 3;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: JuReNet,
    pub report: TrainReport,
    pub score_stats: ScoreStats,
}

/// Splits window positions into chronological train and validation parts.
fn split_windows(n: usize, val_fraction: f64) -> Result<(usize, usize)> {
    if n < 2 {
        return Err(Error::Config(format!(
            "series yields {n} window(s); at least 2 are needed for a validation split"
        )));
    }
    let n_val = (((n as f64) * val_fraction).round() as usize).clamp(1, n - 1);
    Ok((n - n_val, n_val))
}

fn validation_loss(
    net: &JuReNet,
    series: &TimeSeries,
    index: &WindowIndex,
    positions: std::ops::Range<usize>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_VAL));
    let mut total = 0.0;
    let mut count = 0usize;
    let pos: Vec<usize> = positions.collect();
    for chunk in pos.chunks(cfg.batch_size) {
        let clean = index.gather(series, chunk.iter().copied());
        let noisy = corrupt(&clean, cfg.sigma, cfg.mask_p, &mut rng);
        let repair = net.repair(&noisy)?;
        let (loss, _) = repair_loss(&repair, &clean, cfg.lambda_diff)?;
        total += loss * chunk.len() as f64;
        count += chunk.len();
    }
    let loss = total / count as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("validation loss is {loss}")));
    }
    Ok(loss)
}

/// Trains a fresh network on an already normalized series.
pub fn train(
    series: &TimeSeries,
    model: &ModelConfig,
    window: usize,
    weights: &ScoreWeights,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let dims = model.dims(series.channels());
    let net = JuReNet::init_with(dims, derive_seed(cfg.seed, STREAM_INIT), model.output_init)?;
    train_from(net, series, window, weights, cfg)
}

/// Trains `net` in place of a fresh initialization.
pub fn train_from(
    mut net: JuReNet,
    series: &TimeSeries,
    window: usize,
    weights: &ScoreWeights,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    weights.validate()?;
    if window < 2 {
        return Err(Error::Config(format!(
            "window must be at least 2, got {window}"
        )));
    }
    if series.channels() != net.dims().channels {
        return Err(Error::Config(format!(
            "series has {} channels, network expects {}",
            series.channels(),
            net.dims().channels
        )));
    }
    let started = Instant::now();
    let index = WindowIndex::new(series.len(), window, cfg.train_stride)?;
    let (n_train, n_val) = split_windows(index.len(), cfg.val_fraction)?;
    let adam = cfg.adamw();

    let initial_val_loss = validation_loss(&net, series, &index, n_train..index.len(), cfg)?;
    let mut best_val = initial_val_loss;
    let mut best_epoch = 0;
    let mut best_params = net.flat_parameters();
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut stopped_epoch = 0;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TRAIN));
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let clean = index.gather(series, chunk.iter().copied());
            let noisy = corrupt(&clean, cfg.sigma, cfg.mask_p, &mut rng);
            let (repair, cache) = net.forward(&noisy)?;
            let (loss, grad) = repair_loss(&repair, &clean, cfg.lambda_diff)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss became {loss} in epoch {epoch}"
                )));
            }
            let grads = net.backward(&cache, &grad)?;
            net.set_gradients(&grads)?;
            net.adamw_step(&adam)?;
            total += loss * chunk.len() as f64;
        }
        train_loss.push(total / n_train as f64);
        let v = validation_loss(&net, series, &index, n_train..index.len(), cfg)?;
        val_loss.push(v);
        stopped_epoch = epoch;
        if v < best_val {
            best_val = v;
            best_epoch = epoch;
            best_params = net.flat_parameters();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    net.set_flat_parameters(&best_params)?;

    let score_stats = fit_score_stats(
        &net,
        series,
        window,
        cfg.train_stride,
        weights,
        cfg.batch_size,
    )?;

    let report = TrainReport {
        initial_val_loss,
        train_loss,
        val_loss,
        best_epoch,
        stopped_epoch,
        n_train_windows: n_train,
        n_val_windows: n_val,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        net,
        report,
        score_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn random_batch(seed: u64, b: usize, w: usize, c: usize) -> Batch3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Batch3::new(Array3::from_shape_fn((b, w, c), |_| {
            rng.random_range(-1.0..1.0)
        }))
    }

    #[test]
    fn corruption_edge_cases() {
        let x = random_batch(1, 3, 10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(corrupt(&x, 0.0, 0.0, &mut rng), x);
        let masked = corrupt(&x, 0.3, 1.0, &mut rng);
        assert!(masked.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corruption_noise_statistics() {
        let x = random_batch(2, 100, 100, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = corrupt(&x, 0.1, 0.0, &mut rng);
        let d: Vec<f64> = noisy
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 0.002, "{mean}");
        assert!((std - 0.1).abs() <= 0.003, "{std}");
    }

    #[test]
    fn corruption_masks_whole_channels() {
        let x = Batch3::new(Array3::from_elem((200, 8, 3), 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = corrupt(&x, 0.0, 0.5, &mut rng);
        let mut masked = 0;
        for b in 0..200 {
            for c in 0..3 {
                let col: Vec<f64> = (0..8).map(|t| out.array()[[b, t, c]]).collect();
                assert!(col.iter().all(|&v| v == 0.0) || col.iter().all(|&v| v == 1.0));
                masked += (col[0] == 0.0) as usize;
            }
        }
        assert!((200..400).contains(&masked), "{masked}");
    }

    #[test]
    fn corruption_resamples_with_stream_position() {
        let x = random_batch(5, 2, 6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = corrupt(&x, 0.1, 0.05, &mut rng);
        let b = corrupt(&x, 0.1, 0.05, &mut rng);
        assert_ne!(a, b);
    }

    #[test]
    fn loss_cases() {
        let x = random_batch(7, 2, 5, 2);
        let (l, g) = repair_loss(&x, &x, 0.25).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));

        let y = random_batch(8, 2, 5, 2);
        let (l0, _) = repair_loss(&x, &y, 0.0).unwrap();
        assert_eq!(l0, huber(&x, &y, 1.0).unwrap());

        let r = Batch3::from_vec(1, 3, 1, vec![0.0, 0.0, 0.0]).unwrap();
        let c = Batch3::from_vec(1, 3, 1, vec![0.0, 1.0, 0.0]).unwrap();
        let (l, _) = repair_loss(&r, &c, 0.25).unwrap();
        assert!((l - (1.0 / 6.0 + 0.25 * 0.5)).abs() < 1e-15);
        assert!((l - 0.291_666_666_666_666_7).abs() < 1e-15);

        assert!(matches!(
            repair_loss(&x, &Batch3::zeros(2, 4, 2), 0.25),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let r = random_batch(9, 2, 6, 2);
        let mut c = random_batch(10, 2, 6, 2);
        // Push some errors into the linear branch.
        c.as_slice_mut()
            .iter_mut()
            .step_by(3)
            .for_each(|v| *v *= 4.0);
        let (_, g) = repair_loss(&r, &c, 0.25).unwrap();
        let h = 1e-6;
        for i in 0..r.as_slice().len() {
            let mut p = r.clone();
            p.as_slice_mut()[i] += h;
            let mut m = r.clone();
            m.as_slice_mut()[i] -= h;
            let num = (repair_loss(&p, &c, 0.25).unwrap().0 - repair_loss(&m, &c, 0.25).unwrap().0)
                / (2.0 * h);
            let an = g.as_slice()[i];
            assert!(
                (an - num).abs() <= 1e-5 * an.abs().max(num.abs()).max(1e-6),
                "{i}: {an} {num}"
            );
        }
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        for (seed, blocks) in [(21u64, 1usize), (22, 2)] {
            let dims = NetDims::new(2, 8, 5, blocks);
            let mut net = JuReNet::init_with(dims, seed, OutputInit::FanIn).unwrap();
            let x = random_batch(seed + 100, 2, 12, 2);
            let mut clean = random_batch(seed + 200, 2, 12, 2);
            clean
                .as_slice_mut()
                .iter_mut()
                .step_by(5)
                .for_each(|v| *v *= 3.0);
            let (repair, cache) = net.forward(&x).unwrap();
            let (_, g) = repair_loss(&repair, &clean, 0.25).unwrap();
            let grads = net.backward(&cache, &g).unwrap();
            let analytic: Vec<f64> = grads
                .arrays()
                .iter()
                .flat_map(|a| a.iter().copied().collect::<Vec<_>>())
                .collect();
            let theta = net.flat_parameters();
            assert_eq!(analytic.len(), theta.len());
            let h = 1e-6;
            let eval = |net: &mut JuReNet, p: &[f64]| {
                net.set_flat_parameters(p).unwrap();
                repair_loss(&net.repair(&x).unwrap(), &clean, 0.25)
                    .unwrap()
                    .0
            };
            for i in 0..theta.len() {
                let mut p = theta.clone();
                p[i] += h;
                let up = eval(&mut net, &p);
                p[i] -= 2.0 * h;
                let down = eval(&mut net, &p);
                let num = (up - down) / (2.0 * h);
                let an = analytic[i];
                let scale = an.abs().max(num.abs()).max(1e-6);
                assert!((an - num).abs() <= 1e-4 * scale, "param {i}: {an} vs {num}");
            }
            net.set_flat_parameters(&theta).unwrap();
            for i in 0..x.as_slice().len() {
                let mut p = x.clone();
                p.as_slice_mut()[i] += h;
                let up = repair_loss(&net.repair(&p).unwrap(), &clean, 0.25)
                    .unwrap()
                    .0;
                p.as_slice_mut()[i] -= 2.0 * h;
                let down = repair_loss(&net.repair(&p).unwrap(), &clean, 0.25)
                    .unwrap()
                    .0;
                let num = (up - down) / (2.0 * h);
                let an = grads.input.as_slice()[i];
                let scale = an.abs().max(num.abs()).max(1e-6);
                assert!((an - num).abs() <= 1e-4 * scale, "input {i}: {an} vs {num}");
            }
        }
    }

    fn constant_series(t: usize, c: usize, level: f64) -> TimeSeries {
        TimeSeries::new("const", Array2::from_elem((t, c), level), None).unwrap()
    }

    fn small_model() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_identity() {
        let series = constant_series(60, 2, 0.5);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&series, &small_model(), 20, &ScoreWeights::default(), &cfg).unwrap();
        let x = random_batch(11, 2, 20, 2);
        assert_eq!(out.net.repair(&x).unwrap(), x);
        assert!(out.score_stats.median.is_finite() && out.score_stats.iqr.is_finite());
        assert_eq!(out.report.best_epoch, 0);
    }

    #[test]
    fn too_short_series_is_a_config_error() {
        let series = constant_series(20, 1, 0.0);
        let r = train(
            &series,
            &small_model(),
            20,
            &ScoreWeights::default(),
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let r = train(
            &series,
            &small_model(),
            30,
            &ScoreWeights::default(),
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn clean_identity_optimum_stays_put() {
        let series = TimeSeries::new(
            "sine",
            Array2::from_shape_fn((80, 2), |(t, c)| ((t as f64) * 0.3 + c as f64).sin()),
            None,
        )
        .unwrap();
        let cfg = TrainConfig {
            sigma: 0.0,
            mask_p: 0.0,
            max_epochs: 3,
            patience: 5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let out = train(&series, &small_model(), 20, &ScoreWeights::default(), &cfg).unwrap();
        assert_eq!(out.report.initial_val_loss, 0.0);
        assert!(out.net.proj_out.weight.value.iter().all(|&v| v == 0.0));
        assert!(out.net.proj_out.bias.value.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn denoises_a_constant_series() {
        let series = constant_series(400, 1, 0.3);
        let cfg = TrainConfig {
            max_epochs: 6,
            patience: 6,
            batch_size: 32,
            mask_p: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&series, &small_model(), 32, &ScoreWeights::default(), &cfg).unwrap();
        assert!(out.report.best_val_loss() < out.report.initial_val_loss);
        assert!(out.report.val_loss[0] < out.report.initial_val_loss);

        let clean = Batch3::new(Array3::from_elem((64, 32, 1), 0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noisy = corrupt(&clean, 0.1, 0.0, &mut rng);
        let repaired = out.net.repair(&noisy).unwrap();
        let err = |a: &Batch3| {
            a.as_slice().iter().map(|v| (v - 0.3).abs()).sum::<f64>() / a.as_slice().len() as f64
        };
        assert!(
            err(&repaired) < err(&noisy),
            "{} vs {}",
            err(&repaired),
            err(&noisy)
        );
    }

    #[test]
    fn early_stopping_respects_patience_and_determinism() {
        let series = TimeSeries::new(
            "sine",
            Array2::from_shape_fn((150, 1), |(t, _)| (t as f64 * 0.2).sin()),
            None,
        )
        .unwrap();
        let cfg = TrainConfig {
            max_epochs: 12,
            patience: 2,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train(&series, &small_model(), 20, &ScoreWeights::default(), &cfg).unwrap();
        let b = train(&series, &small_model(), 20, &ScoreWeights::default(), &cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.net, b.net);
        assert!(a.report.stopped_epoch - a.report.best_epoch <= cfg.patience);
        assert_eq!(a.report.val_loss.len(), a.report.stopped_epoch);
        let min = a
            .report
            .val_loss
            .iter()
            .copied()
            .fold(a.report.initial_val_loss, f64::min);
        assert_eq!(a.report.best_val_loss(), min);
        assert_eq!(a.report.n_train_windows + a.report.n_val_windows, 131);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            mask_p: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
