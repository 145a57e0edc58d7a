//! The repair network: input projection, depthwise-separable residual
//! block(s), zero-initialized output projection, and a global skip.
//!
//! ```text
//! h₀      = proj_in(x)                       (1×1, C → H)
//! hᵢ₊₁    = hᵢ + GELU(PW(DW(hᵢ)))            (DW: K×1 per channel, PW: 1×1 H → H)
//! repair  = x + proj_out(hₙ)                 (1×1, H → C, zero at init)
//! ```

use ndarray::{Array, Array1, Array2, ArrayView, Dimension, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    conv1x1_backward, conv1x1_forward, depthwise_conv_backward, depthwise_conv_forward,
    gelu_backward, gelu_forward, AdamWConfig, Batch3, ParamTensor,
};

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub channels: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub n_blocks: usize,
}

impl NetDims {
    pub fn new(channels: usize, hidden: usize, kernel: usize, n_blocks: usize) -> Self {
        NetDims {
            channels,
            hidden,
            kernel,
            n_blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.hidden == 0 || self.n_blocks == 0 {
            return Err(Error::Config(format!(
                "channels, hidden width and block count must be positive: {self:?}"
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count:
    /// `2HC + C + H + n·(H² + (K+2)H)`, i.e. `2HC + H² + (K+3)H + C` for one block.
    pub fn parameter_count(&self) -> usize {
        let (c, h, k) = (self.channels, self.hidden, self.kernel);
        2 * h * c + c + h + self.n_blocks * (h * h + (k + 2) * h)
    }
}

/// How the output projection starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputInit {
    /// Weights and bias zero, so the network starts as the identity.
    #[default]
    Zero,
    /// Same fan-in uniform draw as every other layer.
    FanIn,
}

/// A pointwise projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub weight: ParamTensor<ndarray::Ix2>,
    pub bias: ParamTensor<ndarray::Ix1>,
}

/// One depthwise-separable residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub dw_kernel: ParamTensor<ndarray::Ix2>,
    pub dw_bias: ParamTensor<ndarray::Ix1>,
    pub pw_weight: ParamTensor<ndarray::Ix2>,
    pub pw_bias: ParamTensor<ndarray::Ix1>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JuReNet {
    dims: NetDims,
    pub proj_in: Projection,
    pub blocks: Vec<Block>,
    pub proj_out: Projection,
}

/// Intermediates recorded by [`JuReNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Batch3,
    block_inputs: Vec<Batch3>,
    dw_outputs: Vec<Batch3>,
    pw_outputs: Vec<Batch3>,
    last_hidden: Batch3,
}

/// Projection gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub dw_kernel: Array2<f64>,
    pub dw_bias: Array1<f64>,
    pub pw_weight: Array2<f64>,
    pub pw_bias: Array1<f64>,
}

/// Everything [`JuReNet::backward`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub proj_in: ProjectionGrads,
    pub blocks: Vec<BlockGrads>,
    pub proj_out: ProjectionGrads,
    /// Gradient with respect to the network input.
    pub input: Batch3,
}

impl Gradients {
    /// Gradient arrays in parameter declaration order.
    pub fn arrays(&self) -> Vec<ArrayView<'_, f64, IxDyn>> {
        let mut out = vec![
            self.proj_in.weight.view().into_dyn(),
            self.proj_in.bias.view().into_dyn(),
        ];
        for b in &self.blocks {
            out.push(b.dw_kernel.view().into_dyn());
            out.push(b.dw_bias.view().into_dyn());
            out.push(b.pw_weight.view().into_dyn());
            out.push(b.pw_bias.view().into_dyn());
        }
        out.push(self.proj_out.weight.view().into_dyn());
        out.push(self.proj_out.bias.view().into_dyn());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|a| a.iter().all(|v| v.is_finite()))
    }
}

fn fan_in_uniform<D: Dimension>(rng: &mut ChaCha8Rng, shape: D, fan_in: usize) -> Array<f64, D> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
}

impl Projection {
    fn init(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize) -> Self {
        Projection {
            weight: ParamTensor::new(fan_in_uniform(rng, ndarray::Ix2(c_in, c_out), c_in)),
            bias: ParamTensor::new(fan_in_uniform(rng, ndarray::Ix1(c_out), c_in)),
        }
    }

    fn zeros(c_in: usize, c_out: usize) -> Self {
        Projection {
            weight: ParamTensor::new(Array2::zeros((c_in, c_out))),
            bias: ParamTensor::new(Array1::zeros(c_out)),
        }
    }

    fn forward(&self, x: &Batch3) -> Result<Batch3> {
        conv1x1_forward(x, &self.weight.value, &self.bias.value)
    }
}

impl Block {
    fn init(rng: &mut ChaCha8Rng, hidden: usize, kernel: usize) -> Self {
        Block {
            dw_kernel: ParamTensor::new(fan_in_uniform(rng, ndarray::Ix2(kernel, hidden), kernel)),
            dw_bias: ParamTensor::new(fan_in_uniform(rng, ndarray::Ix1(hidden), kernel)),
            pw_weight: ParamTensor::new(fan_in_uniform(rng, ndarray::Ix2(hidden, hidden), hidden)),
            pw_bias: ParamTensor::new(fan_in_uniform(rng, ndarray::Ix1(hidden), hidden)),
        }
    }
}

impl JuReNet {
    /// Seeded initialization with a zero output projection.
    pub fn init(dims: NetDims, seed: u64) -> Result<Self> {
        Self::init_with(dims, seed, OutputInit::Zero)
    }

    pub fn init_with(dims: NetDims, seed: u64, output: OutputInit) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj_in = Projection::init(&mut rng, dims.channels, dims.hidden);
        let blocks = (0..dims.n_blocks)
            .map(|_| Block::init(&mut rng, dims.hidden, dims.kernel))
            .collect();
        let proj_out = match output {
            OutputInit::Zero => Projection::zeros(dims.hidden, dims.channels),
            OutputInit::FanIn => Projection::init(&mut rng, dims.hidden, dims.channels),
        };
        Ok(JuReNet {
            dims,
            proj_in,
            blocks,
            proj_out,
        })
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    /// Number of scalar parameters, counted from the stored arrays.
    pub fn parameter_count(&self) -> usize {
        self.parameter_arrays().iter().map(|a| a.len()).sum()
    }

    /// Parameter values in declaration order:
    /// `proj_in.{w,b}`, then per block `dw.{k,b}`, `pw.{w,b}`, then `proj_out.{w,b}`.
    pub fn parameter_arrays(&self) -> Vec<ArrayView<'_, f64, IxDyn>> {
        let mut out = vec![
            self.proj_in.weight.value.view().into_dyn(),
            self.proj_in.bias.value.view().into_dyn(),
        ];
        for b in &self.blocks {
            out.push(b.dw_kernel.value.view().into_dyn());
            out.push(b.dw_bias.value.view().into_dyn());
            out.push(b.pw_weight.value.view().into_dyn());
            out.push(b.pw_bias.value.view().into_dyn());
        }
        out.push(self.proj_out.weight.value.view().into_dyn());
        out.push(self.proj_out.bias.value.view().into_dyn());
        out
    }

    /// Flat copy of every parameter value in declaration order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.parameter_arrays()
            .iter()
            .flat_map(|a| a.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Overwrites every parameter value from a flat slice in declaration order.
    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameter values, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        fn fill<D: Dimension>(p: &mut ParamTensor<D>, rest: &mut &[f64]) {
            let (head, tail) = rest.split_at(p.len());
            p.value.iter_mut().zip(head).for_each(|(d, s)| *d = *s);
            *rest = tail;
        }
        let mut rest = values;
        fill(&mut self.proj_in.weight, &mut rest);
        fill(&mut self.proj_in.bias, &mut rest);
        for b in &mut self.blocks {
            fill(&mut b.dw_kernel, &mut rest);
            fill(&mut b.dw_bias, &mut rest);
            fill(&mut b.pw_weight, &mut rest);
            fill(&mut b.pw_bias, &mut rest);
        }
        fill(&mut self.proj_out.weight, &mut rest);
        fill(&mut self.proj_out.bias, &mut rest);
        Ok(())
    }

    pub fn forward(&self, x: &Batch3) -> Result<(Batch3, ForwardCache)> {
        if x.channels() != self.dims.channels {
            return Err(Error::Dimension(format!(
                "input has {} channels, network expects {}",
                x.channels(),
                self.dims.channels
            )));
        }
        let mut h = self.proj_in.forward(x)?;
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut dw_outputs = Vec::with_capacity(self.blocks.len());
        let mut pw_outputs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let d = depthwise_conv_forward(&h, &block.dw_kernel.value, &block.dw_bias.value)?;
            let p = conv1x1_forward(&d, &block.pw_weight.value, &block.pw_bias.value)?;
            let mut next = gelu_forward(&p);
            for (o, &hv) in next.as_slice_mut().iter_mut().zip(h.as_slice()) {
                *o += hv;
            }
            block_inputs.push(h);
            dw_outputs.push(d);
            pw_outputs.push(p);
            h = next;
        }
        let mut repair = self.proj_out.forward(&h)?;
        for (r, &xv) in repair.as_slice_mut().iter_mut().zip(x.as_slice()) {
            *r += xv;
        }
        let cache = ForwardCache {
            input: x.clone(),
            block_inputs,
            dw_outputs,
            pw_outputs,
            last_hidden: h,
        };
        Ok((repair, cache))
    }

    /// Forward pass without keeping intermediates.
    pub fn repair(&self, x: &Batch3) -> Result<Batch3> {
        self.forward(x).map(|(r, _)| r)
    }

    /// Chain rule back through the network, including both skip paths.
    pub fn backward(&self, cache: &ForwardCache, grad_repair: &Batch3) -> Result<Gradients> {
        if grad_repair.dims() != cache.input.dims() || cache.block_inputs.len() != self.blocks.len()
        {
            return Err(Error::Dimension(format!(
                "backward: gradient {:?} does not match cached forward {:?}",
                grad_repair.dims(),
                cache.input.dims()
            )));
        }
        let out = conv1x1_backward(&cache.last_hidden, &self.proj_out.weight.value, grad_repair)?;
        let proj_out = ProjectionGrads {
            weight: out.weight,
            bias: out.bias,
        };
        let mut grad_h = out.input;

        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let grad_p = gelu_backward(&cache.pw_outputs[i], &grad_h)?;
            let pw = conv1x1_backward(&cache.dw_outputs[i], &block.pw_weight.value, &grad_p)?;
            let dw =
                depthwise_conv_backward(&cache.block_inputs[i], &block.dw_kernel.value, &pw.input)?;
            for (g, &d) in grad_h.as_slice_mut().iter_mut().zip(dw.input.as_slice()) {
                *g += d;
            }
            blocks.push(BlockGrads {
                dw_kernel: dw.kernel,
                dw_bias: dw.bias,
                pw_weight: pw.weight,
                pw_bias: pw.bias,
            });
        }
        blocks.reverse();

        let inp = conv1x1_backward(&cache.input, &self.proj_in.weight.value, &grad_h)?;
        let mut grad_input = grad_repair.clone();
        for (g, &d) in grad_input
            .as_slice_mut()
            .iter_mut()
            .zip(inp.input.as_slice())
        {
            *g += d;
        }
        Ok(Gradients {
            proj_in: ProjectionGrads {
                weight: inp.weight,
                bias: inp.bias,
            },
            blocks,
            proj_out,
            input: grad_input,
        })
    }

    /// Copies `grads` into every parameter's gradient slot.
    pub fn set_gradients(&mut self, grads: &Gradients) -> Result<()> {
        if grads.blocks.len() != self.blocks.len() {
            return Err(Error::Dimension("gradient block count mismatch".into()));
        }
        self.proj_in.weight.set_grad(&grads.proj_in.weight)?;
        self.proj_in.bias.set_grad(&grads.proj_in.bias)?;
        for (b, g) in self.blocks.iter_mut().zip(&grads.blocks) {
            b.dw_kernel.set_grad(&g.dw_kernel)?;
            b.dw_bias.set_grad(&g.dw_bias)?;
            b.pw_weight.set_grad(&g.pw_weight)?;
            b.pw_bias.set_grad(&g.pw_bias)?;
        }
        self.proj_out.weight.set_grad(&grads.proj_out.weight)?;
        self.proj_out.bias.set_grad(&grads.proj_out.bias)?;
        Ok(())
    }

    /// AdamW step on every parameter using the stored gradients.
    pub fn adamw_step(&mut self, cfg: &AdamWConfig) -> Result<()> {
        self.proj_in.weight.adamw_step(cfg)?;
        self.proj_in.bias.adamw_step(cfg)?;
        for b in &mut self.blocks {
            b.dw_kernel.adamw_step(cfg)?;
            b.dw_bias.adamw_step(cfg)?;
            b.pw_weight.adamw_step(cfg)?;
            b.pw_bias.adamw_step(cfg)?;
        }
        self.proj_out.weight.adamw_step(cfg)?;
        self.proj_out.bias.adamw_step(cfg)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{depthwise_conv_forward, gelu};
    use ndarray::Array3;

    fn random_batch(seed: u64, b: usize, w: usize, c: usize) -> Batch3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Batch3::new(Array3::from_shape_fn((b, w, c), |_| {
            rng.random_range(-2.0..2.0)
        }))
    }

    fn enumerate_count(net: &JuReNet) -> usize {
        let mut n = 0;
        n += net.proj_in.weight.value.len() + net.proj_in.bias.value.len();
        for b in &net.blocks {
            n += b.dw_kernel.value.len() + b.dw_bias.value.len();
            n += b.pw_weight.value.len() + b.pw_bias.value.len();
        }
        n + net.proj_out.weight.value.len() + net.proj_out.bias.value.len()
    }

    #[test]
    fn default_univariate_count() {
        let net = JuReNet::init(NetDims::new(1, 128, 5, 1), 0).unwrap();
        assert_eq!(net.parameter_count(), 17_665);
        assert_eq!(enumerate_count(&net), 17_665);
    }

    #[test]
    fn count_formula_matches_enumeration() {
        for (c, h) in [(1, 8), (3, 16), (5, 128)] {
            for k in [1, 3, 5, 7] {
                let dims = NetDims::new(c, h, k, 1);
                let net = JuReNet::init(dims, 1).unwrap();
                assert_eq!(enumerate_count(&net), 2 * h * c + h * h + (k + 3) * h + c);
                assert_eq!(dims.parameter_count(), enumerate_count(&net));
                let two = JuReNet::init(NetDims::new(c, h, k, 2), 1).unwrap();
                assert_eq!(
                    enumerate_count(&two) - enumerate_count(&net),
                    h * h + (k + 2) * h
                );
            }
        }
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(matches!(
            JuReNet::init(NetDims::new(0, 8, 5, 1), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            JuReNet::init(NetDims::new(1, 8, 4, 1), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            JuReNet::init(NetDims::new(1, 8, 5, 0), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fresh_net_is_identity() {
        let net = JuReNet::init(NetDims::new(3, 16, 5, 1), 7).unwrap();
        for seed in 0..20 {
            let x = random_batch(seed, 2, 11, 3);
            assert_eq!(net.repair(&x).unwrap(), x);
        }
        assert!(net.proj_out.weight.value.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = JuReNet::init(NetDims::new(2, 8, 5, 1), 42).unwrap();
        let b = JuReNet::init(NetDims::new(2, 8, 5, 1), 42).unwrap();
        let c = JuReNet::init(NetDims::new(2, 8, 5, 1), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let net = JuReNet::init(NetDims::new(2, 8, 5, 1), 0).unwrap();
        assert!(matches!(
            net.forward(&Batch3::zeros(1, 6, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn residual_scales_linearly_in_output_projection() {
        let mut net = JuReNet::init(NetDims::new(2, 6, 5, 1), 3).unwrap();
        let x = random_batch(9, 1, 10, 2);
        let template = fan_in_uniform(&mut ChaCha8Rng::seed_from_u64(5), ndarray::Ix2(6, 2), 6);
        let mut deltas = Vec::new();
        for eps in [1e-3, 2e-3, 4e-3] {
            net.proj_out.weight.value = &template * eps;
            let r = net.repair(&x).unwrap();
            deltas.push(&r.into_inner() - x.array());
        }
        let ratio = |a: &Array3<f64>, b: &Array3<f64>| {
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| (p - 2.0 * q).abs())
                .fold(0.0, f64::max)
        };
        assert!(ratio(&deltas[1], &deltas[0]) < 1e-15);
        assert!(ratio(&deltas[2], &deltas[1]) < 1e-15);
    }

    #[test]
    fn forward_matches_manual_layer_composition() {
        let dims = NetDims::new(3, 7, 5, 1);
        let mut net = JuReNet::init(dims, 11).unwrap();
        net.proj_out = Projection::init(&mut ChaCha8Rng::seed_from_u64(12), 7, 3);
        let x = random_batch(13, 2, 9, 3);
        let repair = net.repair(&x).unwrap();

        let (b, w, c) = x.dims();
        let h = 7;
        let xa = x.array();
        let wi = &net.proj_in.weight.value;
        let bi = &net.proj_in.bias.value;
        let mut h0 = Array3::<f64>::zeros((b, w, h));
        for ((bb, t, j), v) in h0.indexed_iter_mut() {
            *v = bi[j] + (0..c).map(|i| xa[[bb, t, i]] * wi[[i, j]]).sum::<f64>();
        }
        let blk = &net.blocks[0];
        let d = depthwise_conv_forward(
            &Batch3::new(h0.clone()),
            &blk.dw_kernel.value,
            &blk.dw_bias.value,
        )
        .unwrap();
        let mut h1 = h0.clone();
        for ((bb, t, j), v) in h1.indexed_iter_mut() {
            let p = blk.pw_bias.value[j]
                + (0..h)
                    .map(|i| d.array()[[bb, t, i]] * blk.pw_weight.value[[i, j]])
                    .sum::<f64>();
            *v += gelu(p);
        }
        let wo = &net.proj_out.weight.value;
        let bo = &net.proj_out.bias.value;
        for ((bb, t, j), &r) in repair.array().indexed_iter() {
            let expected =
                xa[[bb, t, j]] + bo[j] + (0..h).map(|i| h1[[bb, t, i]] * wo[[i, j]]).sum::<f64>();
            assert!((r - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let net = JuReNet::init_with(NetDims::new(2, 8, 5, 2), 1, OutputInit::FanIn).unwrap();
        let x = random_batch(2, 2, 12, 2);
        let (_, cache) = net.forward(&x).unwrap();
        let grads = net.backward(&cache, &Batch3::zeros(2, 12, 2)).unwrap();
        assert!(grads.arrays().iter().all(|a| a.iter().all(|&v| v == 0.0)));
        assert!(grads.input.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_network_passes_gradient_straight_through() {
        let mut net = JuReNet::init(NetDims::new(2, 8, 5, 1), 1).unwrap();
        let zeros = vec![0.0; net.parameter_count()];
        net.set_flat_parameters(&zeros).unwrap();
        let x = random_batch(3, 2, 12, 2);
        let g = random_batch(4, 2, 12, 2);
        let (_, cache) = net.forward(&x).unwrap();
        assert_eq!(net.backward(&cache, &g).unwrap().input, g);
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let net = JuReNet::init(NetDims::new(2, 8, 5, 1), 1).unwrap();
        let (_, cache) = net.forward(&random_batch(3, 2, 12, 2)).unwrap();
        assert!(matches!(
            net.backward(&cache, &Batch3::zeros(2, 10, 2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn flat_parameter_round_trip() {
        let net = JuReNet::init_with(NetDims::new(2, 4, 3, 2), 5, OutputInit::FanIn).unwrap();
        let flat = net.flat_parameters();
        let mut other = JuReNet::init(NetDims::new(2, 4, 3, 2), 99).unwrap();
        other.set_flat_parameters(&flat).unwrap();
        assert_eq!(other.flat_parameters(), flat);
        assert!(other.set_flat_parameters(&flat[1..]).is_err());
    }
}
