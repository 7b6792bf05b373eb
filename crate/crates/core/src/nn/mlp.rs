//! Dense ReLU networks over a flat parameter vector.
//!
//! Parameter layout is layer-major; within a layer the weight matrix comes
//! first (row-major, shape `out x in`) followed by the bias vector. A network
//! `4 -> 8 -> 3` therefore stores `W0 (8x4), b0 (8), W1 (3x8), b1 (3)`.
//!
//! Every hidden layer applies ReLU; the output layer is linear. All passes are
//! batched: inputs are `batch x input_dim` row-major.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::{gemm, MatRef, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Shape of one dense layer and where its parameters live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn end(&self) -> usize {
        self.bias_offset + self.out_dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Flat weights and biases of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T = f32>(pub Vec<T>);

impl<T: Scalar> ParameterVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Element-type conversion (used to lift training weights to `f64`).
    pub fn cast<U: Scalar>(&self) -> ParameterVector<U> {
        ParameterVector(self.0.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config(format!(
                "network dimensions must be positive: {} -> {:?} -> {}",
                self.input_dim, self.hidden_dims, self.output_dim
            )));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let shape = LayerShape {
                    in_dim: w[0],
                    out_dim: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = shape.end();
                shape
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().last().map_or(0, LayerShape::end)
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector<T> {
        let mut params = ParameterVector::zeros(self.param_count());
        for layer in self.layers() {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            let w = &mut params.0[layer.weight_offset..layer.bias_offset];
            for v in w {
                *v = T::of(rng.random_range(-bound..=bound));
            }
        }
        params
    }

    fn check_params<T>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, network needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Batched forward pass. `inputs` holds `batch` rows of `input_dim`.
    pub fn forward<T: Scalar>(
        &self,
        params: &[T],
        inputs: &[T],
        batch: usize,
    ) -> Result<ForwardTrace<T>> {
        self.check_params(params)?;
        if inputs.len() != batch * self.input_dim {
            return Err(Error::config(format!(
                "input has {} values, expected {} rows of {}",
                inputs.len(),
                batch,
                self.input_dim
            )));
        }
        let layers = self.layers();
        let mut pre = Vec::with_capacity(layers.len());
        let mut post: Vec<Vec<T>> = Vec::with_capacity(layers.len() - 1);
        for (idx, layer) in layers.iter().enumerate() {
            let x = if idx == 0 { inputs } else { &post[idx - 1][..] };
            let w = &params[layer.weight_offset..layer.bias_offset];
            let b = &params[layer.bias_offset..layer.end()];
            let mut z = Vec::with_capacity(batch * layer.out_dim);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            gemm(
                MatRef::new(x, batch, layer.in_dim),
                MatRef::new(w, layer.out_dim, layer.in_dim).t(),
                T::one(),
                &mut z,
            );
            if idx + 1 < layers.len() {
                post.push(z.iter().map(|&v| v.max(T::zero())).collect());
            }
            pre.push(z);
        }
        Ok(ForwardTrace {
            batch,
            input: inputs.to_vec(),
            pre,
            post,
        })
    }

    /// Backpropagates `output_grad` (`batch x output_dim`) through a trace.
    ///
    /// Parameter gradients are *added* into `param_grad` when given; the
    /// input gradient is returned when `want_input_grad` is set. The ReLU
    /// subgradient at zero is taken as zero.
    pub fn backward_into<T: Scalar>(
        &self,
        params: &[T],
        trace: &ForwardTrace<T>,
        output_grad: &[T],
        mut param_grad: Option<&mut [T]>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<T>>> {
        self.check_params(params)?;
        let layers = self.layers();
        let batch = trace.batch;
        if trace.pre.len() != layers.len()
            || trace.post.len() + 1 != layers.len()
            || trace.input.len() != batch * self.input_dim
            || layers
                .iter()
                .zip(&trace.pre)
                .any(|(l, z)| z.len() != batch * l.out_dim)
        {
            return Err(Error::Internal(
                "forward trace does not belong to this network".into(),
            ));
        }
        if output_grad.len() != batch * self.output_dim {
            return Err(Error::Internal(format!(
                "output gradient has {} values, expected {}",
                output_grad.len(),
                batch * self.output_dim
            )));
        }
        if let Some(g) = param_grad.as_deref() {
            self.check_params(g)?;
        }

        let mut upstream = output_grad.to_vec();
        for idx in (0..layers.len()).rev() {
            let layer = layers[idx];
            let x = if idx == 0 {
                &trace.input[..]
            } else {
                &trace.post[idx - 1][..]
            };
            if let Some(g) = param_grad.as_deref_mut() {
                let (gw, rest) = g[layer.weight_offset..layer.end()].split_at_mut(layer.bias_offset - layer.weight_offset);
                gemm(
                    MatRef::new(&upstream, batch, layer.out_dim).t(),
                    MatRef::new(x, batch, layer.in_dim),
                    T::one(),
                    gw,
                );
                for row in upstream.chunks_exact(layer.out_dim) {
                    for (gb, &d) in rest.iter_mut().zip(row) {
                        *gb = *gb + d;
                    }
                }
            }
            if idx == 0 && !want_input_grad {
                return Ok(None);
            }
            let w = &params[layer.weight_offset..layer.bias_offset];
            let mut dx = vec![T::zero(); batch * layer.in_dim];
            gemm(
                MatRef::new(&upstream, batch, layer.out_dim),
                MatRef::new(w, layer.out_dim, layer.in_dim),
                T::zero(),
                &mut dx,
            );
            if idx == 0 {
                return Ok(Some(dx));
            }
            for (d, &z) in dx.iter_mut().zip(&trace.pre[idx - 1]) {
                if z <= T::zero() {
                    *d = T::zero();
                }
            }
            upstream = dx;
        }
        unreachable!("network has at least one layer")
    }

    /// Gradients with respect to parameters and inputs.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        trace: &ForwardTrace<T>,
        output_grad: &[T],
    ) -> Result<(ParameterVector<T>, Vec<T>)> {
        let mut grad = ParameterVector::zeros(self.param_count());
        let input_grad = self
            .backward_into(params, trace, output_grad, Some(&mut grad.0), true)?
            .unwrap_or_default();
        Ok((grad, input_grad))
    }
}

/// Cached activations of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    batch: usize,
    input: Vec<T>,
    /// Pre-activation of every layer; the last entry is the network output.
    pre: Vec<Vec<T>>,
    /// ReLU outputs of the hidden layers.
    post: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[T] {
        self.pre.last().expect("at least one layer")
    }

    pub fn layer_count(&self) -> usize {
        self.pre.len()
    }

    pub fn into_output(mut self) -> Vec<T> {
        self.pre.pop().expect("at least one layer")
    }
}
