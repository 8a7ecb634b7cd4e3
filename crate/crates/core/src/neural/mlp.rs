use rand::Rng;

use crate::error::{Error, Result};

/// Dense network with ReLU hidden layers and a linear output layer.
///
/// Parameters live in one flat vector. Layer `l` stores its weight matrix
/// row-major as `n_out × n_in`, followed by `n_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Intermediate activations of a batched forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `activations[0]` is the input, `activations[l + 1]` the post-activation
    /// output of layer `l`; all row-major `batch × width`.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// C (m×n) = alpha·A(m×k)·B(k×n) + beta·C with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], (rsa, csa): (isize, isize), b: &[f64], (rsb, csb): (isize, isize), beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe matrices that lie within the given
    // slices; every caller derives them from the same shape as the slices.
    unsafe {
        matrixmultiply::dgemm(m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

impl MlpParams {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::validate_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Uniform ±sqrt(6 / (n_in + n_out)) weights, zero biases.
    pub fn init<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes)?;
        let mut off = 0;
        for w in layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for x in &mut p.params[off..off + n_in * n_out] {
                *x = rng.gen_range(-bound..bound);
            }
            off += n_in * n_out + n_out;
        }
        Ok(p)
    }

    pub fn from_parts(layer_sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        Self::validate_sizes(&layer_sizes)?;
        let expected = param_count(&layer_sizes);
        if params.len() != expected {
            return Err(Error::Shape {
                context: "mlp parameter vector",
                expected,
                actual: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "mlp parameters",
                index: i,
            });
        }
        Ok(Self { layer_sizes, params })
    }

    fn validate_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config("layer_sizes", "need at least two non-zero widths"));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Offsets of (weights, biases) for layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let off: usize = self.layer_sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        (off, off + n_in * n_out)
    }

    /// Mutable view of one weight/bias entry, for hand-built nets in tests.
    pub fn weight_mut(&mut self, layer: usize, out: usize, inp: usize) -> &mut f64 {
        let (w, _) = self.layer_offsets(layer);
        let n_in = self.layer_sizes[layer];
        &mut self.params[w + out * n_in + inp]
    }

    pub fn bias_mut(&mut self, layer: usize, out: usize) -> &mut f64 {
        let (_, b) = self.layer_offsets(layer);
        &mut self.params[b + out]
    }

    /// Forward pass over a row-major `batch × input_dim` matrix.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<ForwardCache> {
        let n0 = self.input_dim();
        if input.len() != batch * n0 {
            return Err(Error::Shape {
                context: "mlp forward input",
                expected: batch * n0,
                actual: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layer_sizes.len());
        activations.push(input.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let bias = &self.params[b_off..b_off + n_out];
            let mut out = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                out.extend_from_slice(bias);
            }
            // out += X · Wᵀ
            gemm(
                batch,
                n_in,
                n_out,
                1.0,
                &activations[l],
                (n_in as isize, 1),
                &self.params[w_off..b_off],
                (1, n_in as isize),
                1.0,
                &mut out,
            );
            if l < last {
                for x in &mut out {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
            }
            activations.push(out);
        }
        Ok(ForwardCache { batch, activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_batch(input, 1)?;
        Ok(cache.activations.pop().unwrap())
    }

    /// Reverse-mode pass. `output_grad` is `batch × output_dim`. Returns the
    /// parameter gradient summed over the batch and the input gradient.
    pub fn backward_batch(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pg = vec![0.0; self.params.len()];
        let ig = self.backward_into(cache, output_grad, Some(&mut pg))?;
        Ok((pg, ig))
    }

    /// Input gradient only; skips the weight-gradient products.
    pub fn input_gradient(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Vec<f64>> {
        self.backward_into(cache, output_grad, None)
    }

    fn backward_into(&self, cache: &ForwardCache, output_grad: &[f64], mut pg: Option<&mut Vec<f64>>) -> Result<Vec<f64>> {
        let batch = cache.batch;
        let expected = batch * self.output_dim();
        if output_grad.len() != expected {
            return Err(Error::Shape {
                context: "mlp backward output gradient",
                expected,
                actual: output_grad.len(),
            });
        }
        if cache.activations.len() != self.layer_sizes.len() || cache.activations[0].len() != batch * self.input_dim() {
            return Err(Error::Shape {
                context: "mlp backward cache",
                expected: self.layer_sizes.len(),
                actual: cache.activations.len(),
            });
        }
        let mut delta = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let x = &cache.activations[l];
            if let Some(pg) = pg.as_deref_mut() {
                // dW (n_out × n_in) = δᵀ · X
                gemm(
                    n_out,
                    batch,
                    n_in,
                    1.0,
                    &delta,
                    (1, n_out as isize),
                    x,
                    (n_in as isize, 1),
                    0.0,
                    &mut pg[w_off..b_off],
                );
                let db = &mut pg[b_off..b_off + n_out];
                for row in delta.chunks_exact(n_out) {
                    for (d, r) in db.iter_mut().zip(row) {
                        *d += r;
                    }
                }
            }
            // dX (batch × n_in) = δ · W
            let mut dx = vec![0.0; batch * n_in];
            gemm(
                batch,
                n_out,
                n_in,
                1.0,
                &delta,
                (n_out as isize, 1),
                &self.params[w_off..b_off],
                (n_in as isize, 1),
                0.0,
                &mut dx,
            );
            if l > 0 {
                // ReLU mask from the post-activation of the previous layer
                for (g, a) in dx.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// Single-sample backward pass.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.forward_batch(input, 1)?;
        self.backward_batch(&cache, output_grad)
    }

    /// `self ← (1 − tau)·self + tau·online`.
    pub fn polyak_from(&mut self, online: &MlpParams, tau: f64) {
        debug_assert_eq!(self.layer_sizes, online.layer_sizes);
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t += tau * (o - *t);
        }
    }
}
