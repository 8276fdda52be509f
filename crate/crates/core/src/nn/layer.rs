use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub(crate) fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Embedding {
        vocab_size: usize,
        dim: usize,
    },
    /// Valid-padding 1-D convolution with a fused ReLU.
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel_width: usize,
    },
    GlobalMaxPool1d,
    Flatten,
    Dense {
        input: usize,
        output: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    Concatenate,
}

impl Layer {
    pub fn embedding(vocab_size: usize, dim: usize) -> Self {
        Layer::Embedding { vocab_size, dim }
    }

    pub fn conv1d(in_channels: usize, filters: usize, kernel_width: usize) -> Self {
        Layer::Conv1d {
            in_channels,
            filters,
            kernel_width,
        }
    }

    pub fn dense(input: usize, output: usize, activation: Activation) -> Self {
        Layer::Dense {
            input,
            output,
            activation,
        }
    }

    pub fn dropout(rate: f64) -> Self {
        Layer::Dropout { rate }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Layer::Embedding { .. } => "Embedding",
            Layer::Conv1d { .. } => "Conv1D",
            Layer::GlobalMaxPool1d => "GlobalMaxPool1D",
            Layer::Flatten => "Flatten",
            Layer::Dense { .. } => "Dense",
            Layer::Dropout { .. } => "Dropout",
            Layer::Concatenate => "Concatenate",
        }
    }

    /// `(suffix, shape)` of each parameter tensor, in storage order.
    pub(crate) fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Layer::Embedding { vocab_size, dim } => vec![("weight", vec![vocab_size, dim])],
            Layer::Conv1d {
                in_channels,
                filters,
                kernel_width,
            } => vec![
                ("weight", vec![filters, kernel_width, in_channels]),
                ("bias", vec![filters]),
            ],
            Layer::Dense { input, output, .. } => {
                vec![("weight", vec![output, input]), ("bias", vec![output])]
            }
            _ => Vec::new(),
        }
    }

    /// Per-sample output shape for the given per-sample input shapes.
    pub(crate) fn output_shape(&self, name: &str, inputs: &[Vec<usize>]) -> Result<Vec<usize>> {
        let single = || -> Result<&Vec<usize>> {
            match inputs {
                [one] => Ok(one),
                _ => Err(Error::shape(
                    name,
                    format!("{} takes exactly one input, got {}", self.type_name(), inputs.len()),
                )),
            }
        };
        match *self {
            Layer::Embedding { vocab_size, dim } => {
                let s = single()?;
                if s.len() != 1 {
                    return Err(Error::shape(name, format!("embedding expects [L] ids, got {s:?}")));
                }
                if vocab_size == 0 || dim == 0 {
                    return Err(Error::shape(name, "embedding sizes must be positive"));
                }
                Ok(vec![s[0], dim])
            }
            Layer::Conv1d {
                in_channels,
                filters,
                kernel_width,
            } => {
                let s = single()?;
                if s.len() != 2 || s[1] != in_channels {
                    return Err(Error::shape(
                        name,
                        format!("conv1d expects [L, {in_channels}], got {s:?}"),
                    ));
                }
                if kernel_width == 0 || filters == 0 {
                    return Err(Error::shape(name, "conv1d sizes must be positive"));
                }
                if kernel_width > s[0] {
                    return Err(Error::shape(
                        name,
                        format!("kernel width {kernel_width} exceeds sequence length {}", s[0]),
                    ));
                }
                Ok(vec![s[0] - kernel_width + 1, filters])
            }
            Layer::GlobalMaxPool1d => {
                let s = single()?;
                if s.len() != 2 || s[0] == 0 {
                    return Err(Error::shape(name, format!("max-pool expects [T, F], got {s:?}")));
                }
                Ok(vec![s[1]])
            }
            Layer::Flatten => Ok(vec![single()?.iter().product()]),
            Layer::Dense { input, output, .. } => {
                let s = single()?;
                if s.len() != 1 || s[0] != input {
                    return Err(Error::shape(
                        name,
                        format!("dense expects [{input}], got {s:?}"),
                    ));
                }
                if output == 0 {
                    return Err(Error::shape(name, "dense output width must be positive"));
                }
                Ok(vec![output])
            }
            Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::shape(name, format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(single()?.clone())
            }
            Layer::Concatenate => {
                if inputs.is_empty() {
                    return Err(Error::shape(name, "concatenate needs at least one input"));
                }
                if let Some(bad) = inputs.iter().find(|s| s.len() != 1) {
                    return Err(Error::shape(
                        name,
                        format!("concatenate expects flat inputs, got {bad:?}"),
                    ));
                }
                Ok(vec![inputs.iter().map(|s| s[0]).sum()])
            }
        }
    }
}
