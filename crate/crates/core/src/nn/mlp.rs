use rand::Rng;

use crate::error::{Error, Result};

/// Layer widths of the Q-network: state, two hidden layers, one output per action.
pub const Q_LAYERS: [usize; 4] = [480, 256, 128, 7];

/// All weights and biases in one flat buffer. Layer `l` stores its
/// `out × in` weight matrix row-major followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

/// Output of a batched backward pass.
#[derive(Clone, Debug)]
pub struct BatchGrad {
    /// Gradient of the mean of ½(y − Q(s, a))² over the batch.
    pub grad: Vec<f64>,
    /// Mean of ½(y − Q(s, a))².
    pub loss: f64,
    /// y − Q(s, a) per sample, before any update.
    pub residuals: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn copy_params(src: &MlpParams) -> MlpParams {
    src.clone()
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(MlpParams { sizes: sizes.to_vec(), data: vec![0.0; param_count(sizes)] })
    }

    /// Weights and biases drawn from U(−1/√fan_in, 1/√fan_in).
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let n = w[0] * w[1] + w[1];
            for x in &mut p.data[off..off + n] {
                *x = rng.gen_range(-bound..bound);
            }
            off += n;
        }
        Ok(p)
    }

    pub fn from_flat(sizes: &[usize], data: Vec<f64>) -> Result<Self> {
        let p = Self::zeros(sizes)?;
        if data.len() != p.data.len() {
            return Err(Error::Dimension { expected: p.data.len(), got: data.len() });
        }
        Ok(MlpParams { sizes: p.sizes, data })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// (weight offset, bias offset) of each layer.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let o = (off, off + w[0] * w[1]);
                off += w[0] * w[1] + w[1];
                o
            })
            .collect()
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let (w, b) = self.offsets()[layer];
        &mut self.data[w..b]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (_, b) = self.offsets()[layer];
        let n = self.sizes[layer + 1];
        &mut self.data[b..b + n]
    }

    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(state, 1)
    }

    /// Q-values for `n` row-major inputs, returned row-major `n × outputs`.
    pub fn forward_batch(&self, states: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_input(states, n)?;
        let acts = self.activations(states, n);
        Ok(acts.into_iter().last().unwrap())
    }

    fn check_input(&self, states: &[f64], n: usize) -> Result<()> {
        let expected = n * self.input_len();
        if states.len() != expected {
            return Err(Error::Dimension { expected, got: states.len() });
        }
        Ok(())
    }

    /// Per-layer outputs; hidden layers after the ReLU, the last one linear.
    fn activations(&self, states: &[f64], n: usize) -> Vec<Vec<f64>> {
        let offsets = self.offsets();
        let n_layers = offsets.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(states.to_vec());
        for (l, &(w_off, b_off)) in offsets.iter().enumerate() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let bias = &self.data[b_off..b_off + fan_out];
            let mut z = Vec::with_capacity(n * fan_out);
            for _ in 0..n {
                z.extend_from_slice(bias);
            }
            let input = &acts[l];
            // z += input · Wᵀ
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    fan_in,
                    fan_out,
                    1.0,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    self.data[w_off..].as_ptr(),
                    1,
                    fan_in as isize,
                    1.0,
                    z.as_mut_ptr(),
                    fan_out as isize,
                    1,
                );
            }
            if l + 1 < n_layers {
                for x in &mut z {
                    *x = x.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Gradient of ½(y − Q(s, a))² for one sample. Only output `action`
    /// receives error.
    pub fn backward(&self, state: &[f64], action: usize, target: f64) -> Result<Vec<f64>> {
        Ok(self.backward_batch(state, &[action], &[target])?.grad)
    }

    /// Mean-reduced gradient over a batch of (state, action, target).
    pub fn backward_batch(&self, states: &[f64], actions: &[usize], targets: &[f64]) -> Result<BatchGrad> {
        self.backward_batch_huber(states, actions, targets, f64::INFINITY)
    }

    /// As [`MlpParams::backward_batch`] with the Huber loss: quadratic for
    /// residuals up to `clip`, linear beyond.
    pub fn backward_batch_huber(&self, states: &[f64], actions: &[usize], targets: &[f64], clip: f64) -> Result<BatchGrad> {
        let n = actions.len();
        if targets.len() != n {
            return Err(Error::Dimension { expected: n, got: targets.len() });
        }
        self.check_input(states, n)?;
        let n_out = self.output_len();
        if let Some(&a) = actions.iter().find(|&&a| a >= n_out) {
            return Err(Error::Dimension { expected: n_out, got: a + 1 });
        }
        let acts = self.activations(states, n);
        let offsets = self.offsets();
        let q = acts.last().unwrap();

        let mut delta = vec![0.0; n * n_out];
        let mut residuals = Vec::with_capacity(n);
        let mut loss = 0.0;
        let scale = 1.0 / n as f64;
        for i in 0..n {
            let r = targets[i] - q[i * n_out + actions[i]];
            residuals.push(r);
            if r.abs() <= clip {
                loss += 0.5 * r * r;
            } else {
                loss += clip * (r.abs() - 0.5 * clip);
            }
            delta[i * n_out + actions[i]] = -r.clamp(-clip, clip) * scale;
        }
        loss *= scale;

        let mut grad = vec![0.0; self.data.len()];
        for l in (0..offsets.len()).rev() {
            let (w_off, b_off) = offsets[l];
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            // dW = deltaᵀ · input
            unsafe {
                matrixmultiply::dgemm(
                    fan_out,
                    n,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    fan_out as isize,
                    input.as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    grad[w_off..].as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            let gb = &mut grad[b_off..b_off + fan_out];
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev = (delta · W) ⊙ relu'(input)
            let mut prev = vec![0.0; n * fan_in];
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    fan_out,
                    fan_in,
                    1.0,
                    delta.as_ptr(),
                    fan_out as isize,
                    1,
                    self.data[w_off..].as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
            for (d, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = prev;
        }
        Ok(BatchGrad { grad, loss, residuals })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
