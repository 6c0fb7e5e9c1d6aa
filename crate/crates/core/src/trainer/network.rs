//! Small tanh MLP whose last hidden layer, extended with the cycle
//! embedding slot, feeds a bias-free softmax head.

use rand::Rng;

use crate::error::{FlareError, Result};
use crate::losses::HeadState;
use crate::types::NUM_CLASSES;

/// Layer sizes of the network. The head sees `hidden.last() + 1` inputs; the
/// extra slot carries the cycle embedding (or zero when it is disabled).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        if input_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(FlareError::InvalidConfig(format!(
                "invalid architecture: input {input_dim}, hidden {hidden:?}"
            )));
        }
        Ok(Self { input_dim, hidden })
    }

    /// Width of the head input `h`.
    pub fn head_input(&self) -> usize {
        self.hidden.last().copied().unwrap_or(0) + 1
    }

    fn layer_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ins = std::iter::once(self.input_dim).chain(self.hidden.iter().copied());
        ins.zip(self.hidden.iter().copied())
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().map(|(i, o)| o * i + o).sum::<usize>() + NUM_CLASSES * self.head_input()
    }

    fn head_offset(&self) -> usize {
        self.layer_dims().map(|(i, o)| o * i + o).sum()
    }
}

/// Flat parameter vector: per hidden layer `W (out × in)` then `b (out)`,
/// followed by the head `W (4 × head_input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    arch: Architecture,
    data: Vec<f64>,
}

impl Params {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        Self {
            arch,
            data: vec![0.0; n],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng>(arch: Architecture, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(arch.param_count());
        for (fan_in, out) in arch.layer_dims() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            data.extend((0..out * fan_in).map(|_| rng.random_range(-bound..bound)));
            data.extend(std::iter::repeat_n(0.0, out));
        }
        let bound = 1.0 / (arch.head_input() as f64).sqrt();
        data.extend((0..NUM_CLASSES * arch.head_input()).map(|_| rng.random_range(-bound..bound)));
        Self { arch, data }
    }

    pub fn from_vec(arch: Architecture, data: Vec<f64>) -> Result<Self> {
        if data.len() != arch.param_count() {
            return Err(FlareError::DimensionMismatch {
                expected: arch.param_count(),
                got: data.len(),
            });
        }
        Ok(Self { arch, data })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.data[self.arch.head_offset()..]
    }
}

/// Activations kept for backpropagation.
pub(crate) struct ForwardCache {
    /// Input followed by every hidden layer's post-tanh activations.
    activations: Vec<Vec<f64>>,
    pub(crate) head: HeadState,
}

pub(crate) fn forward_cached(params: &Params, features: &[f64], phi: f64) -> Result<ForwardCache> {
    let arch = &params.arch;
    if features.len() != arch.input_dim {
        return Err(FlareError::DimensionMismatch {
            expected: arch.input_dim,
            got: features.len(),
        });
    }
    let mut activations = Vec::with_capacity(arch.hidden.len() + 1);
    activations.push(features.to_vec());
    let mut offset = 0;
    for (fan_in, out) in arch.layer_dims() {
        let w = &params.data[offset..offset + out * fan_in];
        let b = &params.data[offset + out * fan_in..offset + out * fan_in + out];
        offset += out * fan_in + out;
        let input = activations.last().expect("input present");
        let next: Vec<f64> = (0..out)
            .map(|o| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let pre: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b[o];
                pre.tanh()
            })
            .collect();
        activations.push(next);
    }
    let mut h = activations.last().expect("hidden layer present").clone();
    h.push(phi);
    let head = HeadState::new(h, params.head_weights().to_vec())?;
    Ok(ForwardCache { activations, head })
}

/// Gradient of a scalar loss with respect to all parameters, given its
/// gradient with respect to the logits of this sample.
pub(crate) fn backward(
    params: &Params,
    cache: &ForwardCache,
    logit_grad: &[f64; NUM_CLASSES],
) -> Vec<f64> {
    let arch = &params.arch;
    let mut grad = vec![0.0; params.data.len()];

    let head_in = arch.head_input();
    let head_off = arch.head_offset();
    let h = cache.head.hidden();
    let wh = params.head_weights();
    let mut upstream = vec![0.0; head_in - 1];
    for (k, gk) in logit_grad.iter().enumerate() {
        for l in 0..head_in {
            grad[head_off + k * head_in + l] = gk * h[l];
        }
        for (l, u) in upstream.iter_mut().enumerate() {
            *u += gk * wh[k * head_in + l];
        }
    }

    let dims: Vec<(usize, usize)> = arch.layer_dims().collect();
    let mut offset = head_off;
    for (layer, &(fan_in, out)) in dims.iter().enumerate().rev() {
        offset -= out * fan_in + out;
        let a = &cache.activations[layer + 1];
        let input = &cache.activations[layer];
        let dpre: Vec<f64> = upstream
            .iter()
            .zip(a)
            .map(|(u, a)| u * (1.0 - a * a))
            .collect();
        let w = &params.data[offset..offset + out * fan_in];
        let mut next = vec![0.0; fan_in];
        for o in 0..out {
            let row = offset + o * fan_in;
            for i in 0..fan_in {
                grad[row + i] = dpre[o] * input[i];
                next[i] += dpre[o] * w[o * fan_in + i];
            }
            grad[offset + out * fan_in + o] = dpre[o];
        }
        upstream = next;
    }
    grad
}
