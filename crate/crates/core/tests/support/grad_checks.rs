//! Analytic parameter gradients of every objective against central
//! finite differences of independently composed loss values.

use dascn_core::gradcheck::{central_difference, max_relative_error};
use dascn_core::losses::{
    disc_s_loss_and_grad, disc_v_loss_and_grad, gen_sv_loss_and_grad, gen_vs_loss_and_grad, interpolate, LossWeights,
    Objective, ReconPairing,
};
use dascn_core::networks::{concat_cols, gen_sv_forward, gen_vs_forward, Mlp, MlpGrads, ModelParams, OutputActivation};

use super::*;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-3;
pub const KINK_MARGIN: f64 = 1e-3;
const TRIALS: std::ops::Range<u64> = 0..6;

pub const CHECKS: &[(&str, Check)] = &[
    ("classification term w.r.t. sv generator", classification),
    ("semantic centroid term w.r.t. both generators", semantic_centroid),
    ("visual consistency term w.r.t. both generators", visual_consistency),
    ("visual critic objective w.r.t. visual critic", visual_critic),
    ("sv generator objective w.r.t. both generators (literal)", sv_generator_literal),
    ("sv generator objective w.r.t. both generators (cycle)", sv_generator_cycle),
    ("single-GAN sv generator objective", sv_generator_single),
    ("semantic critic objective w.r.t. semantic critic", semantic_critic),
    ("vs generator objective w.r.t. both generators", vs_generator),
];

#[derive(Clone, Copy)]
enum Group {
    GenSv,
    GenVs,
    DiscV,
    DiscS,
}

impl Group {
    fn name(self) -> &'static str {
        match self {
            Group::GenSv => "g_sv",
            Group::GenVs => "g_vs",
            Group::DiscV => "d_v",
            Group::DiscS => "d_s",
        }
    }

    fn net(self, p: &ModelParams) -> &Mlp {
        match self {
            Group::GenSv => &p.g_sv,
            Group::GenVs => &p.g_vs,
            Group::DiscV => &p.d_v,
            Group::DiscS => &p.d_s,
        }
    }

    fn with(self, p: &ModelParams, net: &Mlp) -> ModelParams {
        let mut q = p.clone();
        match self {
            Group::GenSv => q.g_sv = net.clone(),
            Group::GenVs => q.g_vs = net.clone(),
            Group::DiscV => q.d_v = net.clone(),
            Group::DiscS => q.d_s = net.clone(),
        }
        q
    }
}

/// Worst relative error of `analytic` for `group` against differences of `value`.
fn compare(p: &ModelParams, group: Group, analytic: &MlpGrads, value: impl Fn(&ModelParams) -> f64) -> Result<f64, String> {
    let numeric = central_difference(group.net(p), STEP, |net| value(&group.with(p, net)));
    let analytic: Vec<f64> = analytic.values().collect();
    let err = max_relative_error(&analytic, &numeric);
    ensure(err <= TOL, || format!("{}: relative error {err:.3e}", group.name()))?;
    Ok(err)
}

/// Smallest distance of any rectifier input from its kink.
fn kink_margin(net: &Mlp, x: ndarray::ArrayView2<f64>) -> f64 {
    let pre_hidden = x.dot(&net.w1) + &net.b1;
    let mut margin = pre_hidden.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if net.shape.output_activation == OutputActivation::Relu {
        let slope = net.shape.negative_slope;
        let hidden = pre_hidden.mapv(|v| if v > 0.0 { v } else { slope * v });
        let pre_out = hidden.dot(&net.w2) + &net.b2;
        margin = pre_out.iter().fold(margin, |m, v| m.min(v.abs()));
    }
    margin
}

/// Margin over every network evaluation the objectives make, including
/// penalty interpolants for the mixing seed `trial`.
fn case_margin(p: &ModelParams, b: &FeatureBatch, trial: u64) -> f64 {
    let a = b.attributes.view();
    let sv_in = concat_cols(a, b.noise.view());
    let synth = p.g_sv.forward(sv_in.view());
    let recon = p.g_vs.forward(synth.view());
    let cycle_in = concat_cols(recon.view(), b.cycle_noise.view());
    let cycle = p.g_sv.forward(cycle_in.view());
    let mixed_v = interpolate(b.visual.view(), synth.view(), trial);
    let mixed_s = interpolate(a, recon.view(), trial);
    [
        kink_margin(&p.g_sv, sv_in.view()),
        kink_margin(&p.g_vs, synth.view()),
        kink_margin(&p.g_sv, cycle_in.view()),
        kink_margin(&p.d_v, concat_cols(synth.view(), a).view()),
        kink_margin(&p.d_v, concat_cols(b.visual.view(), a).view()),
        kink_margin(&p.d_v, concat_cols(b.visual.view(), recon.view()).view()),
        kink_margin(&p.d_v, concat_cols(cycle.view(), recon.view()).view()),
        kink_margin(&p.d_v, concat_cols(mixed_v.view(), a).view()),
        kink_margin(&p.d_s, a),
        kink_margin(&p.d_s, recon.view()),
        kink_margin(&p.d_s, mixed_s.view()),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Random case whose rectifier inputs all sit at least `KINK_MARGIN` from
/// zero, so no difference stencil straddles a kink.
fn case(trial: u64) -> (ModelParams, FeatureBatch) {
    (0..)
        .map(|redraw: u64| {
            let seed = trial * 1000 + redraw;
            let shape = Shape::random(1000 + seed);
            let p = random_params(shape, seed);
            let b = random_batch(shape, &attribute_table(shape, seed + 7), seed + 11);
            (p, b)
        })
        .find(|(p, b)| case_margin(p, b, trial) > KINK_MARGIN)
        .expect("some draw clears the margin")
}

fn summary(worst: f64) -> CheckResult {
    Ok(format!("max relative error {worst:.2e}"))
}

fn only(w: LossWeights) -> Objective {
    Objective::new(w)
}

fn zero_critics(mut p: ModelParams) -> ModelParams {
    p.d_v = Mlp::zeros(p.d_v.shape);
    p.d_s = Mlp::zeros(p.d_s.shape);
    p
}

fn classification() -> CheckResult {
    let mut worst: f64 = 0.0;
    for t in TRIALS {
        let (p, b) = case(t);
        let p = zero_critics(p);
        let obj = Objective { dual: false, ..only(LossWeights { lambda2: 1.0, ..no_weights() }) };
        let (_, g) = gen_sv_loss_and_grad(&p, &b, &obj);
        worst = worst.max(compare(&p, Group::GenSv, &g.g_sv, |q| {
            let synth = gen_sv_forward(q, b.attributes.view(), b.noise.view());
            dascn_core::losses::classification_loss(&q.cls_seen, synth.view(), &b.labels)
        })?);
    }
    summary(worst)
}

fn semantic_centroid() -> CheckResult {
    let mut worst: f64 = 0.0;
    for t in TRIALS {
        let (p, b) = case(t);
        let p = zero_critics(p);
        let obj = only(LossWeights { lambda5: 1.0, ..no_weights() });
        let (_, g) = gen_vs_loss_and_grad(&p, &b, &obj);
        let value = |q: &ModelParams| {
            let recon = gen_vs_forward(q, gen_sv_forward(q, b.attributes.view(), b.noise.view()).view());
            dascn_core::losses::semantic_centroid_loss(
                recon.view(),
                &b.labels,
                table_from_batch(&b).view(),
                &q.cls_seen.classes,
            )
        };
        worst = worst.max(compare(&p, Group::GenVs, &g.g_vs, value)?);
        worst = worst.max(compare(&p, Group::GenSv, &g.g_sv, value)?);
    }
    summary(worst)
}

fn visual_consistency() -> CheckResult {
    let mut worst: f64 = 0.0;
    for t in TRIALS {
        let (p, b) = case(t);
        let p = zero_critics(p);
        let obj = only(LossWeights { lambda6: 1.0, ..no_weights() });
        let (_, g) = gen_vs_loss_and_grad(&p, &b, &obj);
        let real = dascn_core::losses::real_visual_by_class(b.visual.view(), &b.labels);
        let value = |q: &ModelParams| {
            let synth = gen_sv_forward(q, b.attributes.view(), b.noise.view());
            let cycle = gen_sv_forward(q, gen_vs_forward(q, synth.view()).view(), b.cycle_noise.view());
            dascn_core::losses::visual_consistency_loss(cycle.view(), &b.labels, &real)
        };
        worst = worst.max(compare(&p, Group::GenVs, &g.g_vs, value)?);
        worst = worst.max(compare(&p, Group::GenSv, &g.g_sv, value)?);
    }
    summary(worst)
}

fn visual_critic() -> CheckResult {
    let mut worst: f64 = 0.0;
    for t in TRIALS {
        let (p, b) = case(t);
        let synth = gen_sv_forward(&p, b.attributes.view(), b.noise.view());
        let w = LossWeights::default();
        let (_, g) = disc_v_loss_and_grad(&p, &b, synth.view(), &w, t);
        worst = worst.max(compare(&p, Group::DiscV, &g, |q| composed_disc_v(q, &b, synth.view(), &w, t))?);
    }
    summary(worst)
}

fn semantic_critic() -> CheckResult {
    let mut worst: f64 = 0.0;
    for t in TRIALS {
        let (p, b) = case(t);
        let recon = gen_vs_forward(&p, gen_sv_forward(&p, b.attributes.view(), b.noise.view()).view());
        let w = LossWeights::default();
        let (_, g) = disc_s_loss_and_grad(&p, &b, recon.view(), &w, t);
        worst = worst.max(compare(&p, Group::DiscS, &g, |q| composed_disc_s(q, &b, recon.view(), &w, t))?);
    }
    summary(worst)
}

fn sv_generator(pairing: ReconPairing, dual: bool) -> CheckResult {
    let mut worst: f64 = 0.0;
    for t in TRIALS {
        let (p, b) = case(t);
        let obj = Objective { recon_pairing: pairing, dual, ..Objective::new(LossWeights::default()) };
        let (_, g) = gen_sv_loss_and_grad(&p, &b, &obj);
        let value = |q: &ModelParams| composed_gen_sv(q, &b, &obj);
        worst = worst.max(compare(&p, Group::GenSv, &g.g_sv, value)?);
        worst = worst.max(compare(&p, Group::GenVs, &g.g_vs, value)?);
    }
    summary(worst)
}

fn sv_generator_literal() -> CheckResult {
    sv_generator(ReconPairing::Literal, true)
}

fn sv_generator_cycle() -> CheckResult {
    sv_generator(ReconPairing::Cycle, true)
}

fn sv_generator_single() -> CheckResult {
    sv_generator(ReconPairing::Literal, false)
}

fn vs_generator() -> CheckResult {
    let mut worst: f64 = 0.0;
    for t in TRIALS {
        let (p, b) = case(t);
        let obj = Objective::new(LossWeights::default());
        let (_, g) = gen_vs_loss_and_grad(&p, &b, &obj);
        let value = |q: &ModelParams| composed_gen_vs(q, &b, &obj);
        worst = worst.max(compare(&p, Group::GenVs, &g.g_vs, value)?);
        worst = worst.max(compare(&p, Group::GenSv, &g.g_sv, value)?);
    }
    summary(worst)
}
