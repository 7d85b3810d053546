//! One-hidden-layer perceptrons for the two generators and two critics,
//! with hand-derived backward passes.
//!
//! Shapes follow the row-major batch convention: inputs are `[B × in]`,
//! `w1` is `[in × hidden]`, `w2` is `[hidden × out]`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::SoftmaxClassifier;
use crate::data::ClassId;
use crate::rng::{self, Rng};

pub const DEFAULT_HIDDEN_DIM: usize = 4096;
pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Slope of the leaky rectifier on the hidden layer.
    pub negative_slope: f64,
    pub output_activation: OutputActivation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub shape: NetworkShape,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Intermediate values of a forward pass needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Array2<f64>,
    pre_hidden: Array2<f64>,
    hidden: Array2<f64>,
    pre_output: Array2<f64>,
}

/// Gradients with the same layout as the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpGrads {
    pub fn zeros(shape: &NetworkShape) -> Self {
        Self {
            w1: Array2::zeros((shape.input_dim, shape.hidden_dim)),
            b1: Array1::zeros(shape.hidden_dim),
            w2: Array2::zeros((shape.hidden_dim, shape.output_dim)),
            b2: Array1::zeros(shape.output_dim),
        }
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// All entries in the fixed order w1, b1, w2, b2.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
    }
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

fn leaky_slope(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

impl Mlp {
    pub fn zeros(shape: NetworkShape) -> Self {
        assert!(
            shape.input_dim >= 1 && shape.hidden_dim >= 1 && shape.output_dim >= 1,
            "network dims must be >= 1: {shape:?}"
        );
        Self {
            shape,
            w1: Array2::zeros((shape.input_dim, shape.hidden_dim)),
            b1: Array1::zeros(shape.hidden_dim),
            w2: Array2::zeros((shape.hidden_dim, shape.output_dim)),
            b2: Array1::zeros(shape.output_dim),
        }
    }

    /// Zero-mean Gaussian weights with variance `1 / fan_in`, zero biases.
    pub fn init(shape: NetworkShape, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(shape);
        let mut fill = |w: &mut Array2<f64>| {
            let std = (1.0 / w.nrows() as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            w.mapv_inplace(|_| dist.sample(rng));
        };
        fill(&mut net.w1);
        fill(&mut net.w2);
        net
    }

    fn check_input(&self, x: &ArrayView2<f64>) {
        assert_eq!(
            x.ncols(),
            self.shape.input_dim,
            "input has {} columns, network expects {}",
            x.ncols(),
            self.shape.input_dim
        );
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        self.check_input(&x);
        let slope = self.shape.negative_slope;
        let pre_hidden = x.dot(&self.w1) + &self.b1;
        let hidden = pre_hidden.mapv(|v| leaky(v, slope));
        let pre_output = hidden.dot(&self.w2) + &self.b2;
        let output = match self.shape.output_activation {
            OutputActivation::Relu => pre_output.mapv(|v| v.max(0.0)),
            OutputActivation::None => pre_output.clone(),
        };
        let cache = MlpCache {
            input: x.to_owned(),
            pre_hidden,
            hidden,
            pre_output,
        };
        (output, cache)
    }

    /// Back-propagate `d_output` (gradient of a scalar w.r.t. the output)
    /// through the cached pass. Returns parameter and input gradients.
    pub fn backward(&self, cache: &MlpCache, d_output: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        assert_eq!(d_output.dim(), cache.pre_output.dim(), "output gradient shape");
        let slope = self.shape.negative_slope;
        let d_pre_out = match self.shape.output_activation {
            OutputActivation::Relu => {
                let mut d = d_output.clone();
                Zip::from(&mut d)
                    .and(&cache.pre_output)
                    .for_each(|g, &z| if z <= 0.0 { *g = 0.0 });
                d
            }
            OutputActivation::None => d_output.clone(),
        };
        let w2 = cache.hidden.t().dot(&d_pre_out);
        let b2 = d_pre_out.sum_axis(Axis(0));
        let mut d_pre_hidden = d_pre_out.dot(&self.w2.t());
        Zip::from(&mut d_pre_hidden)
            .and(&cache.pre_hidden)
            .for_each(|g, &z| *g *= leaky_slope(z, slope));
        let w1 = cache.input.t().dot(&d_pre_hidden);
        let b1 = d_pre_hidden.sum_axis(Axis(0));
        let d_input = d_pre_hidden.dot(&self.w1.t());
        (MlpGrads { w1, b1, w2, b2 }, d_input)
    }

    /// Per-row gradient of a scalar critic's output w.r.t. its input,
    /// `[B × in]`. Also returns the hidden mask-weighted matrix
    /// `M[r, j] = leaky'(z_rj) · w2[j]` used by the penalty backward pass.
    fn critic_input_gradients(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        assert_eq!(self.shape.output_dim, 1, "critic must have a scalar output");
        assert_eq!(
            self.shape.output_activation,
            OutputActivation::None,
            "critic output must be linear"
        );
        self.check_input(&x);
        let slope = self.shape.negative_slope;
        let pre_hidden = x.dot(&self.w1) + &self.b1;
        let mask = pre_hidden.mapv(|z| leaky_slope(z, slope));
        let weighted = &mask * &self.w2.column(0);
        let grads = weighted.dot(&self.w1.t());
        (grads, mask, weighted)
    }

    /// `∇_x critic(x)` row by row.
    pub fn input_gradients(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.critic_input_gradients(x).0
    }

    /// Gradient penalty `mean_r (‖∇_x critic(x_r)[cols]‖₂ − 1)²` restricted
    /// to the input columns `cols`, together with its gradient w.r.t. the
    /// critic parameters.
    ///
    /// The hidden mask is piecewise constant in the parameters, so the
    /// second-order terms through the rectifier vanish almost everywhere
    /// and the biases receive no gradient.
    pub fn gradient_penalty_with_grads(
        &self,
        x: ArrayView2<f64>,
        cols: std::ops::Range<usize>,
    ) -> (f64, MlpGrads) {
        let (full, mask, weighted) = self.critic_input_gradients(x);
        let b = full.nrows() as f64;
        let mut upstream = Array2::<f64>::zeros(full.dim());
        let mut penalty = 0.0;
        for (g_row, mut u_row) in full
            .slice(s![.., cols.clone()])
            .rows()
            .into_iter()
            .zip(upstream.slice_mut(s![.., cols.clone()]).rows_mut())
        {
            let norm = g_row.dot(&g_row).sqrt();
            penalty += (norm - 1.0).powi(2);
            if norm > 0.0 {
                let coef = 2.0 * (norm - 1.0) / (norm * b);
                u_row.assign(&(&g_row * coef));
            }
        }
        penalty /= b;

        let mut grads = MlpGrads::zeros(&self.shape);
        grads.w1 = upstream.t().dot(&weighted);
        let d_weighted = upstream.dot(&self.w1);
        grads
            .w2
            .column_mut(0)
            .assign(&(&d_weighted * &mask).sum_axis(Axis(0)));
        (penalty, grads)
    }

    pub fn all_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }

    /// Mutable access to every parameter in the order of [`MlpGrads::values`].
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

/// Network dimensions shared by the four adversarial networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub feature_dim: usize,
    pub attribute_dim: usize,
    pub hidden_dim: usize,
    pub negative_slope: f64,
    /// Output activation of the visual→semantic generator.
    pub gen_vs_output: OutputActivation,
}

impl Architecture {
    pub fn new(feature_dim: usize, attribute_dim: usize, hidden_dim: usize) -> Self {
        Self {
            feature_dim,
            attribute_dim,
            hidden_dim,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            gen_vs_output: OutputActivation::Relu,
        }
    }

    fn shape(&self, input_dim: usize, output_dim: usize, out: OutputActivation) -> NetworkShape {
        NetworkShape {
            input_dim,
            hidden_dim: self.hidden_dim,
            output_dim,
            negative_slope: self.negative_slope,
            output_activation: out,
        }
    }

    /// Semantic+noise → visual; input is `a ‖ z`.
    pub fn gen_sv(&self) -> NetworkShape {
        self.shape(2 * self.attribute_dim, self.feature_dim, OutputActivation::Relu)
    }

    pub fn gen_vs(&self) -> NetworkShape {
        self.shape(self.feature_dim, self.attribute_dim, self.gen_vs_output)
    }

    /// Conditional visual critic; input is `x ‖ a`.
    pub fn disc_v(&self) -> NetworkShape {
        self.shape(self.feature_dim + self.attribute_dim, 1, OutputActivation::None)
    }

    pub fn disc_s(&self) -> NetworkShape {
        self.shape(self.attribute_dim, 1, OutputActivation::None)
    }
}

/// Parameters of the four adversarial networks and the frozen seen-class
/// classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub g_sv: Mlp,
    pub g_vs: Mlp,
    pub d_v: Mlp,
    pub d_s: Mlp,
    pub cls_seen: SoftmaxClassifier,
}

impl ModelParams {
    /// Fan-in scaled initialization. The seen-class classifier starts at
    /// zero over `seen_classes` and is replaced by pretraining.
    pub fn init(arch: Architecture, seen_classes: &[ClassId], seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let g_sv = Mlp::init(arch.gen_sv(), &mut rng);
        let g_vs = Mlp::init(arch.gen_vs(), &mut rng);
        let d_v = Mlp::init(arch.disc_v(), &mut rng);
        let d_s = Mlp::init(arch.disc_s(), &mut rng);
        Self {
            arch,
            g_sv,
            g_vs,
            d_v,
            d_s,
            cls_seen: SoftmaxClassifier::zeros(arch.feature_dim, seen_classes.to_vec()),
        }
    }

    pub fn zeros(arch: Architecture, seen_classes: &[ClassId]) -> Self {
        Self {
            arch,
            g_sv: Mlp::zeros(arch.gen_sv()),
            g_vs: Mlp::zeros(arch.gen_vs()),
            d_v: Mlp::zeros(arch.disc_v()),
            d_s: Mlp::zeros(arch.disc_s()),
            cls_seen: SoftmaxClassifier::zeros(arch.feature_dim, seen_classes.to_vec()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.g_sv.all_finite()
            && self.g_vs.all_finite()
            && self.d_v.all_finite()
            && self.d_s.all_finite()
            && self.cls_seen.all_finite()
    }
}

/// Convenience constructor from dims and a seed.
pub fn init_params(
    feature_dim: usize,
    attribute_dim: usize,
    n_seen: usize,
    hidden_dim: usize,
    seed: u64,
) -> ModelParams {
    let seen: Vec<ClassId> = (0..n_seen).collect();
    ModelParams::init(Architecture::new(feature_dim, attribute_dim, hidden_dim), &seen, seed)
}

pub fn concat_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    assert_eq!(a.nrows(), b.nrows(), "row counts differ");
    concatenate(Axis(1), &[a, b]).expect("row counts checked")
}

pub fn gen_sv_forward(params: &ModelParams, attributes: ArrayView2<f64>, noise: ArrayView2<f64>) -> Array2<f64> {
    params.g_sv.forward(concat_cols(attributes, noise).view())
}

pub fn gen_vs_forward(params: &ModelParams, visual: ArrayView2<f64>) -> Array2<f64> {
    params.g_vs.forward(visual)
}

pub fn disc_v_forward(params: &ModelParams, visual: ArrayView2<f64>, attributes: ArrayView2<f64>) -> Array1<f64> {
    params
        .d_v
        .forward(concat_cols(visual, attributes).view())
        .column(0)
        .to_owned()
}

pub fn disc_s_forward(params: &ModelParams, attributes: ArrayView2<f64>) -> Array1<f64> {
    params.d_s.forward(attributes).column(0).to_owned()
}

pub fn classifier_forward(cls: &SoftmaxClassifier, visual: ArrayView2<f64>) -> Array2<f64> {
    cls.probabilities(visual)
}
