//! Loss terms of the primal (semantic→visual) and dual (visual→semantic)
//! adversarial games, each available as a plain value and, for the four
//! composite objectives, with analytic parameter gradients.
//!
//! Per-class centroids are estimated inside the mini-batch: rows are
//! grouped by label and only classes present in the batch contribute.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classifier::{cross_entropy, SoftmaxClassifier};
use crate::data::{ClassId, FeatureBatch};
use crate::networks::{concat_cols, Mlp, MlpGrads, ModelParams};
use crate::rng;

/// Weights of the regularizers in the four objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Gradient penalty of the visual critic.
    pub lambda1: f64,
    /// Seen-class classification loss on synthesized features.
    pub lambda2: f64,
    /// Visual consistency in the semantic→visual generator objective.
    pub lambda3: f64,
    /// Gradient penalty of the semantic critic.
    pub lambda4: f64,
    /// Semantic centroid regularization.
    pub lambda5: f64,
    /// Visual consistency in the visual→semantic generator objective.
    pub lambda6: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 10.0,
            lambda2: 0.01,
            lambda3: 0.01,
            lambda4: 10.0,
            lambda5: 0.1,
            lambda6: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("lambda5", self.lambda5),
            ("lambda6", self.lambda6),
        ];
        match all.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            Some((name, v)) => Err(crate::Error::validation(format!(
                "{name} must be a finite value >= 0, got {v}"
            ))),
            None => Ok(()),
        }
    }
}

/// Which pair the visual critic scores for the reconstructed attributes
/// in the semantic→visual generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconPairing {
    /// Real features of the same instance with the reconstructed attributes.
    #[default]
    Literal,
    /// Cycle features `G_SV(a', z')` with the reconstructed attributes.
    Cycle,
}

/// A fully specified generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: LossWeights,
    /// When false only the primal GAN is active: no reconstruction term
    /// and no visual consistency.
    pub dual: bool,
    pub recon_pairing: ReconPairing,
}

impl Objective {
    pub fn new(weights: LossWeights) -> Self {
        Self {
            weights,
            dual: true,
            recon_pairing: ReconPairing::Literal,
        }
    }
}

fn mean(v: &Array1<f64>) -> f64 {
    v.mean().unwrap_or(0.0)
}

/// Mean negative log-probability of the true class under the frozen
/// classifier.
pub fn classification_loss(cls: &SoftmaxClassifier, synth_visual: ArrayView2<f64>, labels: &[ClassId]) -> f64 {
    classification_loss_with_grad(cls, synth_visual, labels).0
}

/// Loss and its gradient w.r.t. the input features.
pub fn classification_loss_with_grad(
    cls: &SoftmaxClassifier,
    synth_visual: ArrayView2<f64>,
    labels: &[ClassId],
) -> (f64, Array2<f64>) {
    assert_eq!(synth_visual.nrows(), labels.len(), "one label per row");
    let cols = cls.columns_for(labels);
    let probs = cls.probabilities(synth_visual);
    let loss = cross_entropy(&probs, &cols);
    let mut d = probs;
    for (mut row, &c) in d.rows_mut().into_iter().zip(&cols) {
        row[c] -= 1.0;
    }
    d /= labels.len() as f64;
    (loss, d.dot(&cls.weights.t()))
}

/// Arithmetic mean over rows. Panics on an empty matrix.
pub fn class_centroid(features: ArrayView2<f64>) -> Array1<f64> {
    assert!(features.nrows() >= 1, "centroid of an empty class");
    features.mean_axis(Axis(0)).expect("non-empty")
}

/// Row indices per class, in ascending class order.
pub fn group_by_class(labels: &[ClassId]) -> BTreeMap<ClassId, Vec<usize>> {
    let mut groups: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    groups
}

/// Real rows of each class present in `labels`.
pub fn real_visual_by_class(visual: ArrayView2<f64>, labels: &[ClassId]) -> BTreeMap<ClassId, Array2<f64>> {
    group_by_class(labels)
        .into_iter()
        .map(|(c, rows)| (c, visual.select(Axis(0), &rows)))
        .collect()
}

/// `mean_c ‖centroid_c(rows) − target_c‖₂` over the classes present in
/// `labels`, with its gradient w.r.t. `rows`.
fn centroid_gap_with_grad(
    rows: ArrayView2<f64>,
    labels: &[ClassId],
    target: impl Fn(ClassId) -> Array1<f64>,
) -> (f64, Array2<f64>) {
    assert_eq!(rows.nrows(), labels.len(), "one label per row");
    let groups = group_by_class(labels);
    let n_classes = groups.len() as f64;
    let mut grad = Array2::zeros(rows.dim());
    let mut loss = 0.0;
    for (c, members) in groups {
        let centroid = class_centroid(rows.select(Axis(0), &members).view());
        let gap = centroid - target(c);
        let dist = gap.dot(&gap).sqrt();
        loss += dist;
        if dist > 0.0 {
            let per_row = gap / (dist * members.len() as f64 * n_classes);
            for &r in &members {
                grad.row_mut(r).assign(&per_row);
            }
        }
    }
    if n_classes > 0.0 {
        loss /= n_classes;
    }
    (loss, grad)
}

/// Semantic centroid regularization: reconstructed attributes of each
/// class should average to that class's true attribute vector.
pub fn semantic_centroid_loss(
    recon_attrs: ArrayView2<f64>,
    labels: &[ClassId],
    attributes: ArrayView2<f64>,
    seen_classes: &[ClassId],
) -> f64 {
    semantic_centroid_with_grad(recon_attrs, labels, attributes, seen_classes).0
}

pub fn semantic_centroid_with_grad(
    recon_attrs: ArrayView2<f64>,
    labels: &[ClassId],
    attributes: ArrayView2<f64>,
    seen_classes: &[ClassId],
) -> (f64, Array2<f64>) {
    assert_eq!(recon_attrs.ncols(), attributes.ncols(), "attribute width");
    assert!(
        labels.iter().all(|c| seen_classes.contains(c)),
        "semantic centroid loss is defined over seen classes only"
    );
    centroid_gap_with_grad(recon_attrs, labels, |c| attributes.row(c).to_owned())
}

/// Visual consistency: the centroid of cycle-generated features of each
/// class should match the centroid of that class's real features.
pub fn visual_consistency_loss(
    cycle_visual: ArrayView2<f64>,
    labels: &[ClassId],
    real_visual_by_class: &BTreeMap<ClassId, Array2<f64>>,
) -> f64 {
    visual_consistency_with_grad(cycle_visual, labels, real_visual_by_class).0
}

pub fn visual_consistency_with_grad(
    cycle_visual: ArrayView2<f64>,
    labels: &[ClassId],
    real_visual_by_class: &BTreeMap<ClassId, Array2<f64>>,
) -> (f64, Array2<f64>) {
    let targets: BTreeMap<ClassId, Array1<f64>> = real_visual_by_class
        .iter()
        .map(|(&c, rows)| (c, class_centroid(rows.view())))
        .collect();
    centroid_gap_with_grad(cycle_visual, labels, |c| {
        targets
            .get(&c)
            .unwrap_or_else(|| panic!("class {c} has no real visual features"))
            .clone()
    })
}

/// Anything whose input gradient can be evaluated row by row.
pub trait Critic {
    fn input_gradients(&self, x: ArrayView2<f64>) -> Array2<f64>;
}

impl Critic for Mlp {
    fn input_gradients(&self, x: ArrayView2<f64>) -> Array2<f64> {
        Mlp::input_gradients(self, x)
    }
}

/// Conditional visual critic with its attribute input bound; gradients are
/// taken w.r.t. the visual part only.
pub struct ConditionedCritic<'a> {
    pub net: &'a Mlp,
    pub condition: ArrayView2<'a, f64>,
}

impl Critic for ConditionedCritic<'_> {
    fn input_gradients(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let full = self.net.input_gradients(concat_cols(x, self.condition).view());
        full.slice(s![.., ..x.ncols()]).to_owned()
    }
}

/// `critic(v) = w · v`.
pub struct LinearCritic {
    pub weights: Array1<f64>,
}

impl Critic for LinearCritic {
    fn input_gradients(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let row: ArrayView1<f64> = self.weights.view();
        row.broadcast(x.dim()).expect("width matches").to_owned()
    }
}

/// Per-row interpolation `α·real + (1−α)·fake` with `α ~ U(0, 1)` drawn
/// from `mix_seed`.
pub fn interpolate(real: ArrayView2<f64>, fake: ArrayView2<f64>, mix_seed: u64) -> Array2<f64> {
    assert_eq!(real.dim(), fake.dim(), "real and fake shapes differ");
    let mut r = rng::seeded(mix_seed);
    let mut out = fake.to_owned();
    for (mut row, real_row) in out.rows_mut().into_iter().zip(real.rows()) {
        let alpha: f64 = r.random();
        row *= 1.0 - alpha;
        row.scaled_add(alpha, &real_row);
    }
    out
}

/// `mean_r (‖∇ critic(x̂_r)‖₂ − 1)²` at interpolants between real and fake.
pub fn gradient_penalty(critic: &impl Critic, real: ArrayView2<f64>, fake: ArrayView2<f64>, mix_seed: u64) -> f64 {
    let mixed = interpolate(real, fake, mix_seed);
    let grads = critic.input_gradients(mixed.view());
    let total: f64 = grads
        .rows()
        .into_iter()
        .map(|g| (g.dot(&g).sqrt() - 1.0).powi(2))
        .sum();
    total / grads.nrows() as f64
}

/// Components of a critic objective. `total = fake − real + λ·penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticTerms {
    pub fake: f64,
    pub real: f64,
    pub penalty: f64,
    pub total: f64,
}

fn critic_score_grads(net: &Mlp, real_in: ArrayView2<f64>, fake_in: ArrayView2<f64>) -> (f64, f64, MlpGrads) {
    let (real_scores, real_cache) = net.forward_cached(real_in);
    let (fake_scores, fake_cache) = net.forward_cached(fake_in);
    let real_mean = mean(&real_scores.column(0).to_owned());
    let fake_mean = mean(&fake_scores.column(0).to_owned());
    let (mut grads, _) = net.backward(
        &fake_cache,
        &Array2::from_elem(fake_scores.dim(), 1.0 / fake_scores.nrows() as f64),
    );
    let (real_grads, _) = net.backward(
        &real_cache,
        &Array2::from_elem(real_scores.dim(), 1.0 / real_scores.nrows() as f64),
    );
    grads.add_scaled(&real_grads, -1.0);
    (fake_mean, real_mean, grads)
}

/// Visual critic objective; `synth_visual` is held constant.
pub fn disc_v_loss(
    params: &ModelParams,
    batch: &FeatureBatch,
    synth_visual: ArrayView2<f64>,
    weights: &LossWeights,
    mix_seed: u64,
) -> f64 {
    disc_v_loss_and_grad(params, batch, synth_visual, weights, mix_seed).0.total
}

pub fn disc_v_loss_and_grad(
    params: &ModelParams,
    batch: &FeatureBatch,
    synth_visual: ArrayView2<f64>,
    weights: &LossWeights,
    mix_seed: u64,
) -> (CriticTerms, MlpGrads) {
    let a = batch.attributes.view();
    let real_in = concat_cols(batch.visual.view(), a);
    let fake_in = concat_cols(synth_visual, a);
    let (fake, real, mut grads) = critic_score_grads(&params.d_v, real_in.view(), fake_in.view());

    let mixed = interpolate(batch.visual.view(), synth_visual, mix_seed);
    let k = mixed.ncols();
    let (penalty, penalty_grads) = params
        .d_v
        .gradient_penalty_with_grads(concat_cols(mixed.view(), a).view(), 0..k);
    grads.add_scaled(&penalty_grads, weights.lambda1);
    let terms = CriticTerms {
        fake,
        real,
        penalty,
        total: fake - real + weights.lambda1 * penalty,
    };
    (terms, grads)
}

/// Semantic critic objective; `recon_attrs` is held constant.
pub fn disc_s_loss(
    params: &ModelParams,
    batch: &FeatureBatch,
    recon_attrs: ArrayView2<f64>,
    weights: &LossWeights,
    mix_seed: u64,
) -> f64 {
    disc_s_loss_and_grad(params, batch, recon_attrs, weights, mix_seed).0.total
}

pub fn disc_s_loss_and_grad(
    params: &ModelParams,
    batch: &FeatureBatch,
    recon_attrs: ArrayView2<f64>,
    weights: &LossWeights,
    mix_seed: u64,
) -> (CriticTerms, MlpGrads) {
    let real_in = batch.attributes.view();
    let (fake, real, mut grads) = critic_score_grads(&params.d_s, real_in, recon_attrs);
    let mixed = interpolate(real_in, recon_attrs, mix_seed);
    let l = mixed.ncols();
    let (penalty, penalty_grads) = params.d_s.gradient_penalty_with_grads(mixed.view(), 0..l);
    grads.add_scaled(&penalty_grads, weights.lambda4);
    let terms = CriticTerms {
        fake,
        real,
        penalty,
        total: fake - real + weights.lambda4 * penalty,
    };
    (terms, grads)
}

/// Gradients of a generator objective w.r.t. both generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorGrads {
    pub g_sv: MlpGrads,
    pub g_vs: MlpGrads,
}

/// Components of the semantic→visual generator objective (unweighted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSvTerms {
    /// `−E[D_V(x', a)]`
    pub adv_fake: f64,
    /// `−E[D_V(x, a')]`, zero without the dual GAN.
    pub adv_recon: f64,
    pub cls: f64,
    pub vc: f64,
    /// `λ2 · cls`
    pub weighted_cls: f64,
    /// `λ3 · vc`
    pub weighted_vc: f64,
    pub total: f64,
}

/// Components of the visual→semantic generator objective (unweighted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenVsTerms {
    /// `−E[D_S(a')]`
    pub adv: f64,
    pub sc: f64,
    pub vc: f64,
    /// `λ5 · sc`
    pub weighted_sc: f64,
    /// `λ6 · vc`
    pub weighted_vc: f64,
    pub total: f64,
}

pub fn gen_sv_loss(params: &ModelParams, batch: &FeatureBatch, objective: &Objective) -> f64 {
    gen_sv_loss_and_grad(params, batch, objective).0.total
}

pub fn gen_sv_loss_and_grad(
    params: &ModelParams,
    batch: &FeatureBatch,
    objective: &Objective,
) -> (GenSvTerms, GeneratorGrads) {
    let w = &objective.weights;
    let b = batch.len() as f64;
    let k = params.arch.feature_dim;
    let l = params.arch.attribute_dim;
    let score_grad = Array2::from_elem((batch.len(), 1), -1.0 / b);

    let (synth, synth_cache) = params
        .g_sv
        .forward_cached(concat_cols(batch.attributes.view(), batch.noise.view()).view());
    let (fake_scores, fake_cache) = params
        .d_v
        .forward_cached(concat_cols(synth.view(), batch.attributes.view()).view());
    let (cls, d_synth_cls) = classification_loss_with_grad(&params.cls_seen, synth.view(), &batch.labels);

    let mut g_sv = MlpGrads::zeros(&params.g_sv.shape);
    let mut g_vs = MlpGrads::zeros(&params.g_vs.shape);
    let mut d_synth = d_synth_cls * w.lambda2;
    let (_, d_fake_in) = params.d_v.backward(&fake_cache, &score_grad);
    d_synth += &d_fake_in.slice(s![.., ..k]);

    let mut adv_recon = 0.0;
    let mut vc = 0.0;
    if objective.dual {
        let (recon, recon_cache) = params.g_vs.forward_cached(synth.view());
        let (cycle, cycle_cache) = params
            .g_sv
            .forward_cached(concat_cols(recon.view(), batch.cycle_noise.view()).view());
        let real_by_class = real_visual_by_class(batch.visual.view(), &batch.labels);
        let (vc_value, d_cycle_vc) = visual_consistency_with_grad(cycle.view(), &batch.labels, &real_by_class);
        vc = vc_value;
        let mut d_cycle = d_cycle_vc * w.lambda3;

        let paired_visual = match objective.recon_pairing {
            ReconPairing::Literal => batch.visual.view(),
            ReconPairing::Cycle => cycle.view(),
        };
        let (recon_scores, recon_score_cache) = params
            .d_v
            .forward_cached(concat_cols(paired_visual, recon.view()).view());
        adv_recon = -mean(&recon_scores.column(0).to_owned());
        let (_, d_recon_in) = params.d_v.backward(&recon_score_cache, &score_grad);
        let mut d_recon = d_recon_in.slice(s![.., k..]).to_owned();
        if objective.recon_pairing == ReconPairing::Cycle {
            d_cycle += &d_recon_in.slice(s![.., ..k]);
        }

        let (cycle_grads, d_cycle_in) = params.g_sv.backward(&cycle_cache, &d_cycle);
        g_sv.add_scaled(&cycle_grads, 1.0);
        d_recon += &d_cycle_in.slice(s![.., ..l]);
        let (recon_grads, d_synth_recon) = params.g_vs.backward(&recon_cache, &d_recon);
        g_vs.add_scaled(&recon_grads, 1.0);
        d_synth += &d_synth_recon;
    }

    let (synth_grads, _) = params.g_sv.backward(&synth_cache, &d_synth);
    g_sv.add_scaled(&synth_grads, 1.0);

    let adv_fake = -mean(&fake_scores.column(0).to_owned());
    let terms = GenSvTerms {
        adv_fake,
        adv_recon,
        cls,
        vc,
        weighted_cls: w.lambda2 * cls,
        weighted_vc: w.lambda3 * vc,
        total: adv_fake + adv_recon + w.lambda2 * cls + w.lambda3 * vc,
    };
    (terms, GeneratorGrads { g_sv, g_vs })
}

pub fn gen_vs_loss(params: &ModelParams, batch: &FeatureBatch, objective: &Objective) -> f64 {
    gen_vs_loss_and_grad(params, batch, objective).0.total
}

pub fn gen_vs_loss_and_grad(
    params: &ModelParams,
    batch: &FeatureBatch,
    objective: &Objective,
) -> (GenVsTerms, GeneratorGrads) {
    let w = &objective.weights;
    let b = batch.len() as f64;
    let l = params.arch.attribute_dim;

    let (synth, synth_cache) = params
        .g_sv
        .forward_cached(concat_cols(batch.attributes.view(), batch.noise.view()).view());
    let (recon, recon_cache) = params.g_vs.forward_cached(synth.view());
    let (cycle, cycle_cache) = params
        .g_sv
        .forward_cached(concat_cols(recon.view(), batch.cycle_noise.view()).view());
    let (scores, score_cache) = params.d_s.forward_cached(recon.view());

    let seen = &params.cls_seen.classes;
    let (sc, d_recon_sc) =
        semantic_centroid_with_grad(recon.view(), &batch.labels, batch_attribute_table(batch).view(), seen);
    let real_by_class = real_visual_by_class(batch.visual.view(), &batch.labels);
    let (vc, d_cycle_vc) = visual_consistency_with_grad(cycle.view(), &batch.labels, &real_by_class);

    let mut g_sv = MlpGrads::zeros(&params.g_sv.shape);
    let (cycle_grads, d_cycle_in) = params.g_sv.backward(&cycle_cache, &(d_cycle_vc * w.lambda6));
    g_sv.add_scaled(&cycle_grads, 1.0);
    let (_, d_score_in) = params
        .d_s
        .backward(&score_cache, &Array2::from_elem((batch.len(), 1), -1.0 / b));
    let d_recon = d_recon_sc * w.lambda5 + d_score_in + d_cycle_in.slice(s![.., ..l]);
    let (g_vs, d_synth) = params.g_vs.backward(&recon_cache, &d_recon);
    let (synth_grads, _) = params.g_sv.backward(&synth_cache, &d_synth);
    g_sv.add_scaled(&synth_grads, 1.0);

    let adv = -mean(&scores.column(0).to_owned());
    let terms = GenVsTerms {
        adv,
        sc,
        vc,
        weighted_sc: w.lambda5 * sc,
        weighted_vc: w.lambda6 * vc,
        total: adv + w.lambda5 * sc + w.lambda6 * vc,
    };
    (terms, GeneratorGrads { g_sv, g_vs })
}

/// Attribute table indexed by class id, reconstructed from the batch rows
/// (rows of absent classes are zero and never read).
fn batch_attribute_table(batch: &FeatureBatch) -> Array2<f64> {
    let rows = batch.labels.iter().max().map_or(0, |&m| m + 1);
    let mut table = Array2::zeros((rows, batch.attributes.ncols()));
    for (i, &c) in batch.labels.iter().enumerate() {
        table.row_mut(c).assign(&batch.attributes.row(i));
    }
    table
}
