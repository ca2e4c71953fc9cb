use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, ForwardCache, Mlp, MlpSpec};
use super::{Matrix, NnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEncoderSpec {
    pub input_dim: usize,
    pub trunk_hidden: Vec<usize>,
    pub trunk_width: usize,
    pub head_hidden: Vec<usize>,
    pub target_dim: usize,
    pub residual_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

/// Shared trunk feeding two parameter-disjoint heads: the target embedding
/// and the residual embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEncoder {
    pub trunk: Mlp,
    pub target_head: Mlp,
    pub residual_head: Mlp,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    trunk: ForwardCache,
    target: ForwardCache,
    residual: ForwardCache,
}

/// Flat gradients for each encoder part.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub trunk: Vec<f64>,
    pub target_head: Vec<f64>,
    pub residual_head: Vec<f64>,
}

impl SplitEncoder {
    pub fn new<R: Rng + ?Sized>(spec: &SplitEncoderSpec, rng: &mut R) -> Result<Self, NnError> {
        let trunk = MlpSpec {
            input_dim: spec.input_dim,
            hidden_dims: spec.trunk_hidden.clone(),
            output_dim: spec.trunk_width,
            activation: spec.activation,
            dropout_rate: spec.dropout_rate,
            activate_output: true,
        };
        let head = |out| MlpSpec {
            input_dim: spec.trunk_width,
            hidden_dims: spec.head_hidden.clone(),
            output_dim: out,
            activation: spec.activation,
            dropout_rate: spec.dropout_rate,
            activate_output: false,
        };
        Ok(Self {
            trunk: Mlp::new(trunk, rng)?,
            target_head: Mlp::new(head(spec.target_dim), rng)?,
            residual_head: Mlp::new(head(spec.residual_dim), rng)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn target_dim(&self) -> usize {
        self.target_head.output_dim()
    }

    pub fn residual_dim(&self) -> usize {
        self.residual_head.output_dim()
    }

    /// Inference: `(z_tar, z_res)` from one trunk pass.
    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix), NnError> {
        let h = self.trunk.predict(x)?;
        Ok((self.target_head.predict(&h)?, self.residual_head.predict(&h)?))
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Matrix,
        mut rng: Option<&mut R>,
    ) -> Result<(Matrix, Matrix, EncoderCache), NnError> {
        let (h, trunk) = self.trunk.forward(x, rng.as_deref_mut())?;
        let (z_tar, target) = self.target_head.forward(&h, rng.as_deref_mut())?;
        let (z_res, residual) = self.residual_head.forward(&h, rng)?;
        Ok((z_tar, z_res, EncoderCache { trunk, target, residual }))
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            trunk: vec![0.0; self.trunk.param_count()],
            target_head: vec![0.0; self.target_head.param_count()],
            residual_head: vec![0.0; self.residual_head.param_count()],
        }
    }

    /// Backpropagates both embedding gradients; the trunk receives their sum.
    pub fn backward(
        &self,
        cache: &EncoderCache,
        grad_tar: &Matrix,
        grad_res: &Matrix,
        grads: &mut EncoderGrads,
    ) -> Result<Matrix, NnError> {
        let mut gh = self.target_head.backward(&cache.target, grad_tar, &mut grads.target_head)?;
        gh += &self.residual_head.backward(&cache.residual, grad_res, &mut grads.residual_head)?;
        self.trunk.backward(&cache.trunk, &gh, &mut grads.trunk)
    }
}
