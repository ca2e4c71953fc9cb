use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{shape_err, Matrix, NnError};

const LEAKY_SLOPE: f64 = 0.01;
const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Fixed negative slope of 0.01.
    LeakyRelu,
    /// One learned negative slope per layer.
    Prelu,
    Identity,
}

/// Layer pattern `Linear -> activation -> Dropout` for every hidden layer,
/// then a final `Linear`. With `activate_output` the final layer is followed
/// by the activation and dropout as well (used for encoder trunks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub activate_output: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
            dropout_rate: 0.0,
            activate_output: false,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(NnError::InvalidSpec("all layer widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::InvalidSpec(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    fn layout(&self) -> Vec<LayerSlots> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        let n_layers = dims.len() - 1;
        let mut offset = 0;
        let mut out = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (i, o) = (dims[l], dims[l + 1]);
            let activated = l + 1 < n_layers || self.activate_output;
            let w = offset..offset + i * o;
            offset = w.end;
            let b = offset..offset + o;
            offset = b.end;
            let slope = if activated && self.activation == Activation::Prelu {
                offset += 1;
                Some(offset - 1)
            } else {
                None
            };
            out.push(LayerSlots {
                in_dim: i,
                out_dim: o,
                w,
                b,
                slope,
                activated: activated && self.activation != Activation::Identity,
            });
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().last().map_or(0, |l| l.slope.map_or(l.b.end, |s| s + 1))
    }
}

#[derive(Debug, Clone)]
struct LayerSlots {
    in_dim: usize,
    out_dim: usize,
    w: Range<usize>,
    b: Range<usize>,
    slope: Option<usize>,
    activated: bool,
}

/// Intermediate values of one training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    layout: Vec<LayerSlots>,
}

impl PartialEq for LayerSlots {
    fn eq(&self, other: &Self) -> bool {
        self.w == other.w && self.b == other.b && self.slope == other.slope
    }
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = NnError;

    fn try_from(r: MlpRepr) -> Result<Self, NnError> {
        Mlp::from_params(r.spec, r.params)
    }
}

impl From<Mlp> for MlpRepr {
    fn from(m: Mlp) -> Self {
        MlpRepr {
            spec: m.spec,
            params: m.params,
        }
    }
}

impl Mlp {
    /// He-style uniform init scaled by fan-in; biases start at zero.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, NnError> {
        spec.validate()?;
        let layout = spec.layout();
        let mut params = vec![0.0; spec.param_count()];
        for l in &layout {
            let bound = (6.0 / l.in_dim as f64).sqrt();
            for p in &mut params[l.w.clone()] {
                *p = rng.random_range(-bound..bound);
            }
            if let Some(s) = l.slope {
                params[s] = PRELU_INIT;
            }
        }
        Ok(Self { spec, params, layout })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self, NnError> {
        spec.validate()?;
        let expected = spec.param_count();
        if params.len() != expected {
            return Err(NnError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        let layout = spec.layout();
        Ok(Self { spec, params, layout })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn weight(&self, l: &LayerSlots) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((l.in_dim, l.out_dim), &self.params[l.w.clone()]).expect("layout")
    }

    fn bias(&self, l: &LayerSlots) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[l.b.clone()])
    }

    fn negative_slope(&self, l: &LayerSlots) -> f64 {
        match (self.spec.activation, l.slope) {
            (Activation::Prelu, Some(s)) => self.params[s],
            _ => LEAKY_SLOPE,
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<(), NnError> {
        if x.ncols() != self.spec.input_dim {
            return Err(shape_err(
                format!("{} input columns", self.spec.input_dim),
                format!("{} columns", x.ncols()),
            ));
        }
        Ok(())
    }

    /// Inference pass: no dropout, nothing cached.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix, NnError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layout {
            let mut z = h.dot(&self.weight(l));
            z += &self.bias(l);
            if l.activated {
                let a = self.negative_slope(l);
                z.mapv_inplace(|v| if v > 0.0 { v } else { a * v });
            }
            h = z;
        }
        Ok(h)
    }

    /// Training-mode pass. Dropout is applied only when `rng` is given and
    /// the spec has a nonzero rate.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Matrix,
        mut rng: Option<&mut R>,
    ) -> Result<(Matrix, ForwardCache), NnError> {
        self.check_input(x)?;
        let n = self.layout.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let rate = self.spec.dropout_rate;
        let mut h = x.clone();
        for l in &self.layout {
            let mut z = h.dot(&self.weight(l));
            z += &self.bias(l);
            let mut out = z.clone();
            let mut mask = None;
            if l.activated {
                let a = self.negative_slope(l);
                out.mapv_inplace(|v| if v > 0.0 { v } else { a * v });
                if rate > 0.0 {
                    if let Some(r) = rng.as_deref_mut() {
                        let keep = 1.0 / (1.0 - rate);
                        let m = Matrix::from_shape_fn(out.raw_dim(), |_| {
                            if r.random::<f64>() < rate {
                                0.0
                            } else {
                                keep
                            }
                        });
                        out *= &m;
                        mask = Some(m);
                    }
                }
            }
            cache.inputs.push(std::mem::replace(&mut h, out));
            cache.pre.push(z);
            cache.masks.push(mask);
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input batch.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix, grads: &mut [f64]) -> Result<Matrix, NnError> {
        if grads.len() != self.params.len() {
            return Err(NnError::ParamCount {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let last = self.layout.last().expect("at least one layer");
        let rows = cache.inputs[0].nrows();
        if grad_out.dim() != (rows, last.out_dim) {
            return Err(shape_err(
                format!("({rows}, {})", last.out_dim),
                format!("{:?}", grad_out.dim()),
            ));
        }
        let mut delta = grad_out.clone();
        for (idx, l) in self.layout.iter().enumerate().rev() {
            if let Some(m) = &cache.masks[idx] {
                delta *= m;
            }
            if l.activated {
                let a = self.negative_slope(l);
                let pre = &cache.pre[idx];
                if let Some(s) = l.slope {
                    let mut ds = 0.0;
                    Zip::from(&delta).and(pre).for_each(|&d, &z| {
                        if z <= 0.0 {
                            ds += d * z;
                        }
                    });
                    grads[s] += ds;
                }
                Zip::from(&mut delta).and(pre).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d *= a;
                    }
                });
            }
            let input = &cache.inputs[idx];
            {
                let mut gw = ArrayViewMut2::from_shape((l.in_dim, l.out_dim), &mut grads[l.w.clone()])
                    .expect("layout");
                general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut gw);
            }
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            for (g, v) in grads[l.b.clone()].iter_mut().zip(gb.iter()) {
                *g += v;
            }
            delta = delta.dot(&self.weight(l).t());
        }
        Ok(delta)
    }
}

/// A network mapping an embedding to class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub net: Mlp,
    pub class_count: usize,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, NnError> {
        let class_count = spec.output_dim;
        Ok(Self {
            net: Mlp::new(spec, rng)?,
            class_count,
        })
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix, NnError> {
        self.net.predict(x)
    }

    pub fn predict_classes(&self, x: &Matrix) -> Result<Vec<usize>, NnError> {
        Ok(super::argmax_rows(&self.net.predict(x)?))
    }
}
