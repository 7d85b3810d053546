//! Worked examples and oracle comparisons for every loss term.

use ndarray::{array, Array1, Array2, Axis};

use dascn_core::classifier::SoftmaxClassifier;
use dascn_core::gradcheck::random_matrix;
use dascn_core::losses::{
    class_centroid, classification_loss, disc_s_loss_and_grad, disc_v_loss_and_grad, gen_sv_loss_and_grad,
    gen_vs_loss_and_grad, gradient_penalty, semantic_centroid_loss, visual_consistency_loss, ConditionedCritic,
    LinearCritic, LossWeights, Objective, ReconPairing,
};
use dascn_core::networks::{gen_sv_forward, gen_vs_forward, Architecture, Mlp, ModelParams};

use super::*;

pub const TOL: f64 = 1e-10;
const SEEDS: std::ops::Range<u64> = 0..8;

pub const EXAMPLES: &[(&str, Check)] = &[
    ("classification: certain classifier gives 0", cls_certain_is_zero),
    ("classification: zero classifier gives log 4", cls_zero_is_log4),
    ("centroid: single row", centroid_single_row),
    ("centroid: (0,0),(2,4) -> (1,2)", centroid_two_rows),
    ("semantic centroid: exact reconstruction gives 0", sc_exact_is_zero),
    ("semantic centroid: arithmetic example gives 1", sc_arithmetic),
    ("visual consistency: equal centroids give 0", vc_equal_is_zero),
    ("visual consistency: arithmetic example gives 2", vc_arithmetic),
    ("penalty: unit linear critic gives 0", penalty_unit_linear),
    ("penalty: zero critic gives 1", penalty_zero_critic),
    ("penalty: slope-3 critic gives 4", penalty_slope_three),
    ("visual critic: identical inputs, unit critic give 0", disc_v_identical_unit),
    ("visual critic: zero critic gives lambda1", disc_v_zero_critic),
    ("semantic critic: identical inputs, unit critic give 0", disc_s_identical_unit),
    ("semantic critic: zero critic gives lambda4", disc_s_zero_critic),
    ("sv generator: no weights, zero critic give 0", gen_sv_all_off),
    ("sv generator: only lambda2 isolates classification", gen_sv_isolates_cls),
    ("vs generator: no weights, zero critic give 0", gen_vs_all_off),
    ("vs generator: only lambda5 isolates semantic centroid", gen_vs_isolates_sc),
];

pub const ORACLES: &[(&str, Check)] = &[
    ("classification matches per-sample oracle", cls_oracle),
    ("centroid matches summation oracle", centroid_oracle),
    ("semantic centroid matches grouping oracle", sc_oracle),
    ("visual consistency matches grouping oracle", vc_oracle),
    ("penalty matches numeric input-gradient oracle", penalty_oracle),
    ("visual critic matches composition", disc_v_composition),
    ("semantic critic matches composition", disc_s_composition),
    ("sv generator matches composition (literal pairing)", gen_sv_composition_literal),
    ("sv generator matches composition (cycle pairing)", gen_sv_composition_cycle),
    ("single-GAN sv generator matches composition", gen_sv_composition_single),
    ("vs generator matches composition", gen_vs_composition),
    ("logged weighted terms equal weight times term", weighted_terms),
    ("regularizers are nonnegative", regularizers_nonnegative),
    ("centroid losses ignore row order", centroid_permutation_invariance),
];

pub const PENALTY_FIXTURES: &[(&str, Check)] = &[
    ("unit-gradient linear critic -> 0 +- 1e-10", penalty_unit_linear),
    ("zero critic -> 1 +- 1e-10", penalty_zero_critic),
    ("slope-3 linear critic -> 4 +- 1e-8", penalty_slope_three),
];

fn done() -> CheckResult {
    Ok(String::new())
}

fn default_objective() -> Objective {
    Objective::new(LossWeights::default())
}

/// Network with identity activations computing `x[col]` exactly.
fn unit_critic(shape: dascn_core::networks::NetworkShape, col: usize) -> Mlp {
    let mut net = Mlp::zeros(shape);
    net.w1[[col, 0]] = 1.0;
    net.w2[[0, 0]] = 1.0;
    net
}

/// Small fixture whose critics are linear with a unit gradient.
fn linear_fixture() -> (ModelParams, FeatureBatch) {
    let shape = Shape { k: 5, l: 3, hidden: 4, batch: 6, n_seen: 2 };
    let mut arch = Architecture::new(shape.k, shape.l, shape.hidden);
    arch.negative_slope = 1.0;
    let mut params = ModelParams::init(arch, &[0, 1], 3);
    params.d_v = unit_critic(arch.disc_v(), 0);
    params.d_s = unit_critic(arch.disc_s(), 0);
    let batch = random_batch(shape, &attribute_table(shape, 4), 5);
    (params, batch)
}

fn zero_critics(mut p: ModelParams) -> ModelParams {
    p.d_v = Mlp::zeros(p.d_v.shape);
    p.d_s = Mlp::zeros(p.d_s.shape);
    p
}

fn cls_certain_is_zero() -> CheckResult {
    let mut cls = SoftmaxClassifier::zeros(3, vec![0, 1, 2]);
    cls.weights = Array2::eye(3) * 2000.0;
    let x = Array2::eye(3);
    let loss = classification_loss(&cls, x.view(), &[0, 1, 2]);
    ensure(loss == 0.0, || format!("loss {loss}"))?;
    done()
}

fn cls_zero_is_log4() -> CheckResult {
    let cls = SoftmaxClassifier::zeros(6, vec![0, 1, 2, 3]);
    for seed in SEEDS {
        let x = random_matrix(5, 6, seed);
        let loss = classification_loss(&cls, x.view(), &[0, 1, 2, 3, 1]);
        ensure_close("uniform loss", loss, 4f64.ln(), 1e-14)?;
    }
    done()
}

fn cls_oracle() -> CheckResult {
    for seed in SEEDS {
        let shape = Shape::random(seed);
        let p = random_params(shape, seed);
        let b = random_batch(shape, &attribute_table(shape, seed), seed);
        let got = classification_loss(&p.cls_seen, b.visual.view(), &b.labels);
        let want = oracle_cross_entropy(&p.cls_seen.weights, &p.cls_seen.bias, b.visual.view(), &b.labels);
        ensure_close("cross entropy", got, want, TOL)?;
    }
    done()
}

fn centroid_single_row() -> CheckResult {
    let row = array![[1.5, -2.0, 3.25]];
    ensure(class_centroid(row.view()) == row.row(0), || "centroid differs".into())?;
    done()
}

fn centroid_two_rows() -> CheckResult {
    let c = class_centroid(array![[0.0, 0.0], [2.0, 4.0]].view());
    ensure(c == array![1.0, 2.0], || format!("{c}"))?;
    done()
}

fn centroid_oracle() -> CheckResult {
    for seed in SEEDS {
        let m = random_matrix(1 + seed as usize, 7, seed);
        let diff = (&class_centroid(m.view()) - &oracle_centroid(m.view())).mapv(f64::abs);
        ensure(diff.iter().all(|&d| d <= TOL), || format!("max diff {}", diff.fold(0.0, |a: f64, &b| a.max(b))))?;
    }
    done()
}

fn sc_exact_is_zero() -> CheckResult {
    let table = array![[0.1, 0.9], [0.4, 0.2], [0.7, 0.5]];
    let labels = [2, 0, 1, 0];
    let recon = table.select(Axis(0), &labels);
    let loss = semantic_centroid_loss(recon.view(), &labels, table.view(), &[0, 1, 2]);
    ensure(loss == 0.0, || format!("loss {loss}"))?;
    done()
}

fn sc_arithmetic() -> CheckResult {
    let loss = semantic_centroid_loss(array![[0.0, 0.0], [2.0, 0.0]].view(), &[0, 0], array![[0.0, 0.0]].view(), &[0]);
    ensure(loss == 1.0, || format!("loss {loss}"))?;
    done()
}

fn sc_oracle() -> CheckResult {
    for seed in SEEDS {
        let shape = Shape::random(seed);
        let table = attribute_table(shape, seed);
        let b = random_batch(shape, &table, seed);
        let recon = random_matrix(shape.batch, shape.l, seed + 50);
        let seen: Vec<_> = (0..shape.n_seen).collect();
        let got = semantic_centroid_loss(recon.view(), &b.labels, table.view(), &seen);
        let want = oracle_centroid_gap(recon.view(), &b.labels, |c| table.row(c).to_owned());
        ensure_close("semantic centroid", got, want, TOL)?;
    }
    done()
}

fn vc_equal_is_zero() -> CheckResult {
    let real = BTreeMap::from([(0, array![[0.0, 1.0], [2.0, 3.0]]), (4, array![[5.0, 5.0]])]);
    let cycle = array![[1.0, 2.0], [5.0, 5.0], [1.0, 2.0]];
    let loss = visual_consistency_loss(cycle.view(), &[0, 4, 0], &real);
    ensure(loss == 0.0, || format!("loss {loss}"))?;
    done()
}

fn vc_arithmetic() -> CheckResult {
    let real = BTreeMap::from([(0, array![[0.0, 0.0], [2.0, 0.0]])]);
    let loss = visual_consistency_loss(array![[3.0, 0.0]].view(), &[0], &real);
    ensure(loss == 2.0, || format!("loss {loss}"))?;
    done()
}

fn vc_oracle() -> CheckResult {
    for seed in SEEDS {
        let shape = Shape::random(seed);
        let b = random_batch(shape, &attribute_table(shape, seed), seed);
        let real = real_visual_by_class(b.visual.view(), &b.labels);
        let cycle = random_matrix(shape.batch, shape.k, seed + 60);
        let got = visual_consistency_loss(cycle.view(), &b.labels, &real);
        let want = oracle_centroid_gap(cycle.view(), &b.labels, |c| oracle_centroid(real[&c].view()));
        ensure_close("visual consistency", got, want, TOL)?;
    }
    done()
}

fn penalty_unit_linear() -> CheckResult {
    for seed in SEEDS {
        let w = random_matrix(1, 6, seed).row(0).to_owned();
        let critic = LinearCritic { weights: &w / w.dot(&w).sqrt() };
        let p = gradient_penalty(&critic, random_matrix(5, 6, seed + 1).view(), random_matrix(5, 6, seed + 2).view(), seed);
        ensure_close("penalty", p, 0.0, 1e-10)?;
    }
    done()
}

fn penalty_zero_critic() -> CheckResult {
    let critic = LinearCritic { weights: Array1::zeros(4) };
    for seed in SEEDS {
        let p = gradient_penalty(&critic, random_matrix(3, 4, seed).view(), random_matrix(3, 4, seed + 9).view(), seed);
        ensure_close("penalty", p, 1.0, 1e-10)?;
    }
    done()
}

fn penalty_slope_three() -> CheckResult {
    let mut w = Array1::zeros(5);
    w[0] = 3.0;
    let critic = LinearCritic { weights: w };
    for seed in SEEDS {
        let p = gradient_penalty(&critic, random_matrix(4, 5, seed).view(), random_matrix(4, 5, seed + 9).view(), seed);
        ensure_close("penalty", p, 4.0, 1e-8)?;
    }
    done()
}

fn penalty_oracle() -> CheckResult {
    for seed in SEEDS {
        let shape = Shape::random(seed);
        let p = random_params(shape, seed);
        let b = random_batch(shape, &attribute_table(shape, seed), seed);
        let fake = random_matrix(shape.batch, shape.k, seed + 70).mapv(f64::abs);
        let a = b.attributes.view();
        let critic = ConditionedCritic { net: &p.d_v, condition: a };
        let got = gradient_penalty(&critic, b.visual.view(), fake.view(), seed);

        let mixed = dascn_core::losses::interpolate(b.visual.view(), fake.view(), seed);
        let grads = numeric_input_gradients(
            |x| dascn_core::networks::disc_v_forward(&p, x, a),
            mixed.view(),
            shape.k,
        );
        let want = grads
            .rows()
            .into_iter()
            .map(|g| (g.dot(&g).sqrt() - 1.0).powi(2))
            .sum::<f64>()
            / shape.batch as f64;
        ensure_close("penalty", got, want, 1e-6)?;
    }
    done()
}

fn disc_v_identical_unit() -> CheckResult {
    let (p, b) = linear_fixture();
    let (terms, _) = disc_v_loss_and_grad(&p, &b, b.visual.view(), &LossWeights::default(), 7);
    ensure(terms.total == 0.0 && terms.penalty == 0.0, || format!("{terms:?}"))?;
    done()
}

fn disc_v_zero_critic() -> CheckResult {
    let (p, b) = linear_fixture();
    let p = zero_critics(p);
    let fake = random_matrix(b.len(), p.arch.feature_dim, 1);
    let w = LossWeights::default();
    let (terms, _) = disc_v_loss_and_grad(&p, &b, fake.view(), &w, 7);
    ensure(terms.total == w.lambda1, || format!("{terms:?}"))?;
    done()
}

fn disc_s_identical_unit() -> CheckResult {
    let (p, b) = linear_fixture();
    let (terms, _) = disc_s_loss_and_grad(&p, &b, b.attributes.view(), &LossWeights::default(), 7);
    ensure(terms.total == 0.0 && terms.penalty == 0.0, || format!("{terms:?}"))?;
    done()
}

fn disc_s_zero_critic() -> CheckResult {
    let (p, b) = linear_fixture();
    let p = zero_critics(p);
    let fake = random_matrix(b.len(), p.arch.attribute_dim, 1);
    let w = LossWeights::default();
    let (terms, _) = disc_s_loss_and_grad(&p, &b, fake.view(), &w, 7);
    ensure(terms.total == w.lambda4, || format!("{terms:?}"))?;
    done()
}

fn random_case(seed: u64) -> (ModelParams, FeatureBatch) {
    let shape = Shape::random(seed);
    let p = random_params(shape, seed);
    let b = random_batch(shape, &attribute_table(shape, seed + 1), seed + 2);
    (p, b)
}

fn disc_v_composition() -> CheckResult {
    for seed in SEEDS {
        let (p, b) = random_case(seed);
        let synth = gen_sv_forward(&p, b.attributes.view(), b.noise.view());
        let w = LossWeights::default();
        let (terms, _) = disc_v_loss_and_grad(&p, &b, synth.view(), &w, seed);
        ensure_close("visual critic", terms.total, composed_disc_v(&p, &b, synth.view(), &w, seed), TOL)?;
    }
    done()
}

fn disc_s_composition() -> CheckResult {
    for seed in SEEDS {
        let (p, b) = random_case(seed);
        let recon = gen_vs_forward(&p, gen_sv_forward(&p, b.attributes.view(), b.noise.view()).view());
        let w = LossWeights::default();
        let (terms, _) = disc_s_loss_and_grad(&p, &b, recon.view(), &w, seed);
        ensure_close("semantic critic", terms.total, composed_disc_s(&p, &b, recon.view(), &w, seed), TOL)?;
    }
    done()
}

fn gen_sv_all_off() -> CheckResult {
    let (p, b) = random_case(3);
    let p = zero_critics(p);
    let obj = Objective::new(no_weights());
    let (terms, _) = gen_sv_loss_and_grad(&p, &b, &obj);
    ensure(terms.total == 0.0, || format!("{terms:?}"))?;
    done()
}

fn gen_sv_isolates_cls() -> CheckResult {
    for seed in SEEDS {
        let (p, b) = random_case(seed);
        let p = zero_critics(p);
        let obj = Objective::new(LossWeights { lambda2: 0.37, ..no_weights() });
        let (terms, _) = gen_sv_loss_and_grad(&p, &b, &obj);
        let synth = gen_sv_forward(&p, b.attributes.view(), b.noise.view());
        let want = 0.37 * classification_loss(&p.cls_seen, synth.view(), &b.labels);
        ensure(terms.total == want, || format!("{} vs {want}", terms.total))?;
    }
    done()
}

fn gen_vs_all_off() -> CheckResult {
    let (p, b) = random_case(4);
    let p = zero_critics(p);
    let (terms, _) = gen_vs_loss_and_grad(&p, &b, &Objective::new(no_weights()));
    ensure(terms.total == 0.0, || format!("{terms:?}"))?;
    done()
}

fn gen_vs_isolates_sc() -> CheckResult {
    for seed in SEEDS {
        let (p, b) = random_case(seed);
        let p = zero_critics(p);
        let obj = Objective::new(LossWeights { lambda5: 0.1, ..no_weights() });
        let (terms, _) = gen_vs_loss_and_grad(&p, &b, &obj);
        let recon = gen_vs_forward(&p, gen_sv_forward(&p, b.attributes.view(), b.noise.view()).view());
        let sc = semantic_centroid_loss(recon.view(), &b.labels, table_from_batch(&b).view(), &p.cls_seen.classes);
        ensure(terms.total == 0.1 * sc, || format!("{} vs {}", terms.total, 0.1 * sc))?;
    }
    done()
}

fn gen_sv_composition(pairing: ReconPairing, dual: bool) -> CheckResult {
    for seed in SEEDS {
        let (p, b) = random_case(seed);
        let obj = Objective { recon_pairing: pairing, dual, ..default_objective() };
        let (terms, _) = gen_sv_loss_and_grad(&p, &b, &obj);
        ensure_close("sv generator", terms.total, composed_gen_sv(&p, &b, &obj), TOL)?;
    }
    done()
}

fn gen_sv_composition_literal() -> CheckResult {
    gen_sv_composition(ReconPairing::Literal, true)
}

fn gen_sv_composition_cycle() -> CheckResult {
    gen_sv_composition(ReconPairing::Cycle, true)
}

fn gen_sv_composition_single() -> CheckResult {
    gen_sv_composition(ReconPairing::Literal, false)
}

fn gen_vs_composition() -> CheckResult {
    for seed in SEEDS {
        let (p, b) = random_case(seed);
        let obj = default_objective();
        let (terms, _) = gen_vs_loss_and_grad(&p, &b, &obj);
        ensure_close("vs generator", terms.total, composed_gen_vs(&p, &b, &obj), TOL)?;
    }
    done()
}

fn weighted_terms() -> CheckResult {
    for seed in SEEDS {
        let (p, b) = random_case(seed);
        let obj = default_objective();
        let w = obj.weights;
        let (sv, _) = gen_sv_loss_and_grad(&p, &b, &obj);
        let (vs, _) = gen_vs_loss_and_grad(&p, &b, &obj);
        ensure(sv.weighted_cls == w.lambda2 * sv.cls && sv.weighted_vc == w.lambda3 * sv.vc, || format!("{sv:?}"))?;
        ensure(vs.weighted_sc == w.lambda5 * vs.sc && vs.weighted_vc == w.lambda6 * vs.vc, || format!("{vs:?}"))?;
        ensure_close("sv sum", sv.total, sv.adv_fake + sv.adv_recon + sv.weighted_cls + sv.weighted_vc, TOL)?;
        ensure_close("vs sum", vs.total, vs.adv + vs.weighted_sc + vs.weighted_vc, TOL)?;
    }
    done()
}

fn regularizers_nonnegative() -> CheckResult {
    for seed in 0..64 {
        let (p, b) = random_case(seed);
        let obj = default_objective();
        let (sv, _) = gen_sv_loss_and_grad(&p, &b, &obj);
        let (vs, _) = gen_vs_loss_and_grad(&p, &b, &obj);
        let synth = gen_sv_forward(&p, b.attributes.view(), b.noise.view());
        let (dv, _) = disc_v_loss_and_grad(&p, &b, synth.view(), &obj.weights, seed);
        let all = [sv.cls, sv.vc, vs.sc, vs.vc, dv.penalty];
        ensure(all.iter().all(|&v| v >= 0.0), || format!("seed {seed}: {all:?}"))?;
    }
    done()
}

fn centroid_permutation_invariance() -> CheckResult {
    for seed in SEEDS {
        let shape = Shape::random(seed);
        let table = attribute_table(shape, seed);
        let b = random_batch(shape, &table, seed);
        let recon = random_matrix(shape.batch, shape.l, seed + 5);
        let order: Vec<usize> = (0..shape.batch).rev().collect();
        let labels_rev: Vec<_> = order.iter().map(|&i| b.labels[i]).collect();
        let recon_rev = recon.select(Axis(0), &order);
        let seen: Vec<_> = (0..shape.n_seen).collect();
        let sc = semantic_centroid_loss(recon.view(), &b.labels, table.view(), &seen);
        let sc_rev = semantic_centroid_loss(recon_rev.view(), &labels_rev, table.view(), &seen);
        ensure_close("semantic centroid", sc, sc_rev, 1e-12)?;
        let real = real_visual_by_class(b.visual.view(), &b.labels);
        let vc = visual_consistency_loss(b.visual.view(), &b.labels, &real);
        let vc_rev = visual_consistency_loss(b.visual.select(Axis(0), &order).view(), &labels_rev, &real);
        ensure_close("visual consistency", vc, vc_rev, 1e-12)?;
    }
    done()
}
