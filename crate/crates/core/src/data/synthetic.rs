//! Synthetic train/test pairs with one injected anomaly each.
//!
//! Normal data is a two-tone periodic latent shared by all channels (per
//! channel gain, small independent noise), so channels are strongly
//! correlated. The `Manifold` kind instead embeds a `d`-dimensional white
//! Gaussian latent linearly into `C` channels without observation noise, so
//! every timestep lies exactly on a `d`-dimensional subspace and the best
//! repair of isotropic corruption is a projection onto it.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::TimeSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    /// Values jump above the training envelope by `magnitude`.
    AmplitudeSpike,
    /// Trapezoidal level drift peaking at `magnitude`.
    TrendShift,
    /// White noise of standard deviation `magnitude` on top of the signal.
    GradientNoise,
    /// The shared latent changes sign on the upper half of the channels,
    /// leaving every marginal distribution intact.
    CorrelationBreak,
    /// Points on a `d`-dimensional linear manifold; the anomaly leaves it.
    Manifold,
}

impl AnomalyKind {
    pub const TYPOLOGY: [AnomalyKind; 4] = [
        AnomalyKind::AmplitudeSpike,
        AnomalyKind::TrendShift,
        AnomalyKind::GradientNoise,
        AnomalyKind::CorrelationBreak,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AnomalyKind::AmplitudeSpike => "amplitude_spike",
            AnomalyKind::TrendShift => "trend_shift",
            AnomalyKind::GradientNoise => "gradient_noise",
            AnomalyKind::CorrelationBreak => "correlation_break",
            AnomalyKind::Manifold => "manifold",
        }
    }
}

impl std::str::FromStr for AnomalyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            AnomalyKind::AmplitudeSpike,
            AnomalyKind::TrendShift,
            AnomalyKind::GradientNoise,
            AnomalyKind::CorrelationBreak,
            AnomalyKind::Manifold,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown anomaly kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: AnomalyKind,
    /// Length of each of the train and test series.
    pub length: usize,
    pub channels: usize,
    /// Period of the fast tone; the slow tone has three times this period.
    pub period: f64,
    pub amplitude: f64,
    pub noise_std: f64,
    pub anomaly_start: usize,
    pub anomaly_len: usize,
    /// Kind-specific strength, in units of `amplitude`.
    pub magnitude: f64,
    /// Intrinsic dimension for the `Manifold` kind.
    pub intrinsic_dim: usize,
}

impl SyntheticSpec {
    /// Default configuration for `kind` at `T = 2000`.
    pub fn new(kind: AnomalyKind) -> Self {
        let (channels, start, len, magnitude) = match kind {
            AnomalyKind::AmplitudeSpike => (2, 1210, 8, 2.0),
            AnomalyKind::TrendShift => (2, 1150, 150, 2.5),
            AnomalyKind::GradientNoise => (2, 1200, 100, 0.6),
            AnomalyKind::CorrelationBreak => (2, 1100, 300, 1.0),
            AnomalyKind::Manifold => (12, 1200, 100, 1.5),
        };
        SyntheticSpec {
            kind,
            length: 2000,
            channels,
            period: 50.0,
            amplitude: 1.0,
            noise_std: if kind == AnomalyKind::Manifold {
                0.0
            } else {
                0.05
            },
            anomaly_start: start,
            anomaly_len: len,
            magnitude,
            intrinsic_dim: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 || self.channels == 0 {
            return Err(Error::Config(format!(
                "synthetic series needs length >= 2 and at least one channel: {self:?}"
            )));
        }
        if self.anomaly_len > 0 && self.anomaly_start + self.anomaly_len > self.length {
            return Err(Error::Config(format!(
                "anomaly span {}..{} lies outside a series of length {}",
                self.anomaly_start,
                self.anomaly_start + self.anomaly_len,
                self.length
            )));
        }
        if !(self.period > 0.0 && self.amplitude > 0.0 && self.noise_std >= 0.0) {
            return Err(Error::Config("period, amplitude must be positive".into()));
        }
        if self.kind == AnomalyKind::CorrelationBreak && self.channels < 2 {
            return Err(Error::Config(
                "correlation break needs at least 2 channels".into(),
            ));
        }
        if self.kind == AnomalyKind::Manifold
            && (self.intrinsic_dim == 0 || self.intrinsic_dim > self.channels)
        {
            return Err(Error::Config(format!(
                "manifold dimension {} must lie in 1..={} (channels)",
                self.intrinsic_dim, self.channels
            )));
        }
        Ok(())
    }
}

struct Structure {
    gains: Vec<f64>,
    phase_fast: f64,
    phase_slow: f64,
    /// `C × d` embedding for `Manifold`.
    embedding: Option<Array2<f64>>,
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((rows, cols));
    for j in 0..cols {
        let mut v: Array1<f64> = (0..rows).map(|_| StandardNormal.sample(rng)).collect();
        for k in 0..j {
            let qk = q.column(k);
            let proj = v.dot(&qk);
            v.scaled_add(-proj, &qk);
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

fn draw_structure(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Structure {
    let tau = std::f64::consts::TAU;
    let gains = (0..spec.channels)
        .map(|_| rng.random_range(0.8..1.2))
        .collect();
    let phase_fast = rng.random_range(0.0..tau);
    let phase_slow = rng.random_range(0.0..tau);
    let embedding = (spec.kind == AnomalyKind::Manifold).then(|| {
        let d = spec.intrinsic_dim;
        let scale = (spec.channels as f64 / d as f64).sqrt();
        orthonormal_columns(rng, spec.channels, d) * scale
    });
    Structure {
        gains,
        phase_fast,
        phase_slow,
        embedding,
    }
}

/// Clean signal for absolute times `t0..t0+len`.
fn base_signal(
    spec: &SyntheticSpec,
    s: &Structure,
    t0: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let tau = std::f64::consts::TAU;
    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).expect("finite noise std");
    let mut out = Array2::zeros((spec.length, spec.channels));
    for i in 0..spec.length {
        let t = (t0 + i) as f64;
        match &s.embedding {
            Some(a) => {
                let z: Array1<f64> = (0..spec.intrinsic_dim)
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                let x = a.dot(&z) * spec.amplitude;
                out.row_mut(i).assign(&x);
            }
            None => {
                let latent = (tau * t / spec.period + s.phase_fast).sin()
                    + 0.5 * (tau * t / (3.0 * spec.period) + s.phase_slow).sin();
                for c in 0..spec.channels {
                    out[[i, c]] = spec.amplitude * s.gains[c] * latent;
                }
            }
        }
        for c in 0..spec.channels {
            out[[i, c]] += noise.sample(rng);
        }
    }
    out
}

fn inject(
    spec: &SyntheticSpec,
    s: &Structure,
    train: &Array2<f64>,
    test: &mut Array2<f64>,
    rng: &mut ChaCha8Rng,
) {
    let (start, len) = (spec.anomaly_start, spec.anomaly_len);
    let amp = spec.amplitude;
    let mag = spec.magnitude * amp;
    match spec.kind {
        AnomalyKind::AmplitudeSpike => {
            for c in 0..spec.channels {
                let envelope = train.column(c).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for t in start..start + len {
                    test[[t, c]] = envelope + mag;
                }
            }
        }
        AnomalyKind::TrendShift => {
            let ramp = (len / 4).max(1) as f64;
            for i in 0..len {
                let up = (i as f64 + 1.0) / ramp;
                let down = (len - i) as f64 / ramp;
                let level = mag * up.min(down).min(1.0);
                for c in 0..spec.channels {
                    test[[start + i, c]] += level;
                }
            }
        }
        AnomalyKind::GradientNoise => {
            let burst = Normal::new(0.0, mag).expect("finite magnitude");
            for t in start..start + len {
                for c in 0..spec.channels {
                    test[[t, c]] += burst.sample(rng);
                }
            }
        }
        AnomalyKind::CorrelationBreak => {
            // Negate the shared latent (not the noise) on the upper channels.
            let half = spec.channels / 2;
            let clean = base_signal(
                &SyntheticSpec {
                    noise_std: 0.0,
                    ..spec.clone()
                },
                s,
                spec.length,
                rng,
            );
            for t in start..start + len {
                for c in half..spec.channels {
                    test[[t, c]] -= 2.0 * clean[[t, c]];
                }
            }
        }
        AnomalyKind::Manifold => {
            let a = s.embedding.as_ref().expect("manifold structure");
            // Unit direction orthogonal to the embedding when one exists.
            let mut u: Array1<f64> = (0..spec.channels)
                .map(|_| StandardNormal.sample(rng))
                .collect();
            if spec.intrinsic_dim < spec.channels {
                for col in a.columns() {
                    let proj = u.dot(&col) / col.dot(&col);
                    u.scaled_add(-proj, &col);
                }
            }
            let norm = u.dot(&u).sqrt();
            u /= norm;
            for t in start..start + len {
                let mut row = test.row_mut(t);
                row.scaled_add(mag * (spec.channels as f64).sqrt(), &u);
            }
        }
    }
}

/// Generates `(train, test)`. The train series is clean; the test series
/// continues the same process in time and carries labels for the span.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(TimeSeries, TimeSeries)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let structure = draw_structure(spec, &mut rng);
    let train = base_signal(spec, &structure, 0, &mut rng);
    let mut test = base_signal(spec, &structure, spec.length, &mut rng);
    let mut labels = vec![0u8; spec.length];
    if spec.anomaly_len > 0 {
        inject(spec, &structure, &train, &mut test, &mut rng);
        labels[spec.anomaly_start..spec.anomaly_start + spec.anomaly_len].fill(1);
    }
    let name = format!("{}_s{seed}", spec.kind.name());
    Ok((
        TimeSeries::new(format!("{name}_train"), train, None)?,
        TimeSeries::new(format!("{name}_test"), test, Some(labels))?,
    ))
}
