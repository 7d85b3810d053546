//! Alternating optimization of the two critics and two generators.
//!
//! Each iteration takes one mini-batch and performs `n1` visual-critic
//! updates, `n2` semantic-critic updates, then one update of the
//! semantic→visual generator followed by one of the visual→semantic
//! generator. The seen-class classifier is fit once up front and stays
//! frozen.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::classifier::{FitConfig, FitSummary, SoftmaxClassifier};
use crate::data::{batch_iterator, DatasetBundle, FeatureBatch};
use crate::error::{Error, Result};
use crate::losses::{
    disc_s_loss_and_grad, disc_v_loss_and_grad, gen_sv_loss_and_grad, gen_vs_loss_and_grad, CriticTerms,
    GenSvTerms, GenVsTerms, LossWeights, Objective, ReconPairing,
};
use crate::networks::{
    gen_sv_forward, gen_vs_forward, Architecture, ModelParams, OutputActivation, DEFAULT_HIDDEN_DIM,
    DEFAULT_NEGATIVE_SLOPE,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, Rng};

/// Ablation switch selecting which components are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Single conditional WGAN with classification loss; no dual GAN.
    BaselineSingleGan,
    /// Dual GAN without either consistency regularizer.
    DualOnly,
    /// Dual GAN with semantic centroid regularization only.
    NoVc,
    /// Dual GAN with visual consistency only.
    NoSc,
    #[default]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaselineSingleGan,
        Variant::DualOnly,
        Variant::NoVc,
        Variant::NoSc,
        Variant::Full,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::BaselineSingleGan => "baseline_single_gan",
            Variant::DualOnly => "dual_only",
            Variant::NoVc => "no_vc",
            Variant::NoSc => "no_sc",
            Variant::Full => "full",
        }
    }

    /// Row label used in ablation tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            Variant::BaselineSingleGan => "WGAN-baseline",
            Variant::DualOnly => "Dual-WGAN",
            Variant::NoVc => "Dual-WGAN + L_SC",
            Variant::NoSc => "Dual-WGAN + L_VC",
            Variant::Full => "DASCN",
        }
    }

    pub fn is_dual(&self) -> bool {
        *self != Variant::BaselineSingleGan
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown variant {s:?}")))
    }
}

/// Whether critic steps within one iteration reuse the generator noise of
/// the batch or draw fresh noise per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticNoise {
    #[default]
    Shared,
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub batch_size: usize,
    /// Visual critic steps per iteration.
    pub n1: usize,
    /// Semantic critic steps per iteration.
    pub n2: usize,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub hidden_dim: usize,
    pub negative_slope: f64,
    pub gen_vs_output: OutputActivation,
    pub variant: Variant,
    pub recon_pairing: ReconPairing,
    /// Keep the classification term in the single-GAN baseline.
    pub baseline_classification: bool,
    pub critic_noise: CriticNoise,
    /// Fit settings of the frozen seen-class classifier.
    pub classifier: FitConfig,
    pub normalize_features: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            batch_size: 64,
            n1: 5,
            n2: 5,
            epochs: 50,
            optimizer: AdamConfig::default(),
            hidden_dim: DEFAULT_HIDDEN_DIM,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            gen_vs_output: OutputActivation::Relu,
            variant: Variant::Full,
            recon_pairing: ReconPairing::Literal,
            baseline_classification: true,
            critic_noise: CriticNoise::Shared,
            classifier: FitConfig::default(),
            normalize_features: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let checks = [
            ("batch_size", self.batch_size >= 1),
            ("n1", self.n1 >= 1),
            ("n2", self.n2 >= 1),
            ("epochs", self.epochs >= 1),
            ("hidden_dim", self.hidden_dim >= 1),
            (
                "optimizer.learning_rate",
                self.optimizer.learning_rate > 0.0 && self.optimizer.learning_rate.is_finite(),
            ),
            ("negative_slope", self.negative_slope.is_finite()),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((field, _)) => Err(Error::validation(format!("train.{field} is out of range"))),
            None => Ok(()),
        }
    }

    pub fn architecture(&self, feature_dim: usize, attribute_dim: usize) -> Architecture {
        Architecture {
            feature_dim,
            attribute_dim,
            hidden_dim: self.hidden_dim,
            negative_slope: self.negative_slope,
            gen_vs_output: self.gen_vs_output,
        }
    }

    /// Loss weights after the variant masks its disabled terms.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        match self.variant {
            Variant::Full => {}
            Variant::NoSc => w.lambda5 = 0.0,
            Variant::NoVc => {
                w.lambda3 = 0.0;
                w.lambda6 = 0.0;
            }
            Variant::DualOnly => {
                w.lambda3 = 0.0;
                w.lambda5 = 0.0;
                w.lambda6 = 0.0;
            }
            Variant::BaselineSingleGan => {
                w.lambda3 = 0.0;
                w.lambda4 = 0.0;
                w.lambda5 = 0.0;
                w.lambda6 = 0.0;
                if !self.baseline_classification {
                    w.lambda2 = 0.0;
                }
            }
        }
        w
    }

    pub fn objective(&self) -> Objective {
        Objective {
            weights: self.effective_weights(),
            dual: self.variant.is_dual(),
            recon_pairing: self.recon_pairing,
        }
    }
}

/// Loss terms of one optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum StepLoss {
    CriticVisual(CriticTerms),
    CriticSemantic(CriticTerms),
    GenSv(GenSvTerms),
    GenVs(GenVsTerms),
}

impl StepLoss {
    fn named_values(&self) -> Vec<(&'static str, f64)> {
        match self {
            StepLoss::CriticVisual(t) | StepLoss::CriticSemantic(t) => {
                vec![("fake", t.fake), ("real", t.real), ("penalty", t.penalty), ("total", t.total)]
            }
            StepLoss::GenSv(t) => vec![
                ("adv_fake", t.adv_fake),
                ("adv_recon", t.adv_recon),
                ("cls", t.cls),
                ("vc", t.vc),
                ("total", t.total),
            ],
            StepLoss::GenVs(t) => vec![("adv", t.adv), ("sc", t.sc), ("vc", t.vc), ("total", t.total)],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StepLoss::CriticVisual(_) => "critic_visual",
            StepLoss::CriticSemantic(_) => "critic_semantic",
            StepLoss::GenSv(_) => "gen_sv",
            StepLoss::GenVs(_) => "gen_vs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: StepLoss,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub train_accuracy: f64,
    pub steps: usize,
    pub final_loss: f64,
}

impl From<FitSummary> for ClassifierSummary {
    fn from(s: FitSummary) -> Self {
        Self {
            train_accuracy: s.train_accuracy,
            steps: s.steps,
            final_loss: s.final_loss,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub effective_weights: Option<LossWeights>,
    pub classifier: Option<ClassifierSummary>,
    pub records: Vec<StepRecord>,
    /// Wall-clock seconds per iteration; excluded from equality.
    #[serde(skip)]
    pub iteration_seconds: Vec<f64>,
}

impl PartialEq for TrainLog {
    fn eq(&self, other: &Self) -> bool {
        self.effective_weights == other.effective_weights
            && self.classifier == other.classifier
            && self.records == other.records
    }
}

impl TrainLog {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration + 1)
    }

    /// Line-delimited JSON: a header line, then one line per step.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let header = serde_json::json!({
            "record": "header",
            "effective_weights": self.effective_weights,
            "classifier": self.classifier,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::json("train log", e))?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Fit the seen-class softmax classifier on real training features.
pub fn pretrain_classifier(bundle: &DatasetBundle, config: &TrainConfig) -> Result<(SoftmaxClassifier, FitSummary)> {
    let (cls, summary) = SoftmaxClassifier::fit(
        bundle.visual_train.view(),
        &bundle.labels_train,
        &bundle.seen_classes,
        &config.classifier,
    )?;
    log::info!(
        "seen-class classifier: train accuracy {:.4} after {} steps",
        summary.train_accuracy,
        summary.steps
    );
    Ok((cls, summary))
}

fn check_finite(iteration: usize, kind: &str, loss: &StepLoss) -> Result<()> {
    match loss.named_values().into_iter().find(|(_, v)| !v.is_finite()) {
        Some((name, _)) => Err(Error::Divergence {
            iteration,
            term: format!("{kind}.{name}"),
        }),
        None => Ok(()),
    }
}

/// Owns parameters and optimizer state for one training run.
pub struct Trainer {
    params: ModelParams,
    objective: Objective,
    config: TrainConfig,
    opt_g_sv: Adam,
    opt_g_vs: Adam,
    opt_d_v: Adam,
    opt_d_s: Adam,
    mix_rng: Rng,
    noise_rng: Rng,
    iteration: usize,
    epoch: usize,
    log: TrainLog,
}

impl Trainer {
    /// Initialize networks and pretrain the seen-class classifier.
    pub fn new(bundle: &DatasetBundle, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        bundle.validate()?;
        let arch = config.architecture(bundle.feature_dim(), bundle.attribute_dim());
        let mut params = ModelParams::init(arch, &bundle.seen_classes, rng::derive_seed(config.seed, rng::INIT));
        let (cls, summary) = pretrain_classifier(bundle, config)?;
        params.cls_seen = cls;
        let adam = |net| Adam::new(net, config.optimizer);
        let objective = config.objective();
        let log = TrainLog {
            effective_weights: Some(objective.weights),
            classifier: Some(summary.into()),
            ..TrainLog::default()
        };
        log::info!("effective loss weights: {:?}", objective.weights);
        Ok(Self {
            opt_g_sv: adam(&params.g_sv),
            opt_g_vs: adam(&params.g_vs),
            opt_d_v: adam(&params.d_v),
            opt_d_s: adam(&params.d_s),
            params,
            objective,
            config: config.clone(),
            mix_rng: rng::seeded(rng::derive_seed(config.seed, "penalty")),
            noise_rng: rng::seeded(rng::derive_seed(config.seed, rng::NOISE)),
            iteration: 0,
            epoch: 0,
            log,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    fn record(&mut self, loss: StepLoss, grad_norm: f64) -> Result<()> {
        check_finite(self.iteration, loss.kind(), &loss)?;
        if !grad_norm.is_finite() {
            return Err(Error::Divergence {
                iteration: self.iteration,
                term: format!("{}.grad_norm", loss.kind()),
            });
        }
        self.log.records.push(StepRecord {
            iteration: self.iteration,
            epoch: self.epoch,
            loss,
            grad_norm,
        });
        Ok(())
    }

    fn check_params(&self, which: &str) -> Result<()> {
        let net = match which {
            "d_v" => &self.params.d_v,
            "d_s" => &self.params.d_s,
            "g_sv" => &self.params.g_sv,
            _ => &self.params.g_vs,
        };
        if net.all_finite() {
            Ok(())
        } else {
            Err(Error::Divergence {
                iteration: self.iteration,
                term: format!("{which} parameters"),
            })
        }
    }

    fn critic_noise(&mut self, batch: &FeatureBatch) -> Array2<f64> {
        match self.config.critic_noise {
            CriticNoise::Shared => batch.noise.clone(),
            CriticNoise::Fresh => rng::standard_normal(&mut self.noise_rng, batch.len(), batch.noise.ncols()),
        }
    }

    /// One visual-critic update against features generated from `noise`.
    pub fn critic_visual_step(&mut self, batch: &FeatureBatch, noise: &Array2<f64>) -> Result<()> {
        let synth = gen_sv_forward(&self.params, batch.attributes.view(), noise.view());
        let mix = self.mix_rng.next_u64();
        let (terms, grads) = disc_v_loss_and_grad(&self.params, batch, synth.view(), &self.objective.weights, mix);
        self.opt_d_v.step(&mut self.params.d_v, &grads);
        self.record(StepLoss::CriticVisual(terms), grads.norm())?;
        self.check_params("d_v")
    }

    /// One semantic-critic update against reconstructions `G_VS(G_SV(a, z))`.
    pub fn critic_semantic_step(&mut self, batch: &FeatureBatch, noise: &Array2<f64>) -> Result<()> {
        let synth = gen_sv_forward(&self.params, batch.attributes.view(), noise.view());
        let recon = gen_vs_forward(&self.params, synth.view());
        let mix = self.mix_rng.next_u64();
        let (terms, grads) = disc_s_loss_and_grad(&self.params, batch, recon.view(), &self.objective.weights, mix);
        self.opt_d_s.step(&mut self.params.d_s, &grads);
        self.record(StepLoss::CriticSemantic(terms), grads.norm())?;
        self.check_params("d_s")
    }

    pub fn generator_sv_step(&mut self, batch: &FeatureBatch) -> Result<()> {
        let (terms, grads) = gen_sv_loss_and_grad(&self.params, batch, &self.objective);
        self.opt_g_sv.step(&mut self.params.g_sv, &grads.g_sv);
        self.record(StepLoss::GenSv(terms), grads.g_sv.norm())?;
        self.check_params("g_sv")
    }

    pub fn generator_vs_step(&mut self, batch: &FeatureBatch) -> Result<()> {
        let (terms, grads) = gen_vs_loss_and_grad(&self.params, batch, &self.objective);
        self.opt_g_vs.step(&mut self.params.g_vs, &grads.g_vs);
        self.record(StepLoss::GenVs(terms), grads.g_vs.norm())?;
        self.check_params("g_vs")
    }

    /// Full iteration on one mini-batch.
    pub fn iteration(&mut self, batch: &FeatureBatch) -> Result<()> {
        let started = Instant::now();
        for _ in 0..self.config.n1 {
            let noise = self.critic_noise(batch);
            self.critic_visual_step(batch, &noise)?;
        }
        if self.objective.dual {
            for _ in 0..self.config.n2 {
                let noise = self.critic_noise(batch);
                self.critic_semantic_step(batch, &noise)?;
            }
        }
        self.generator_sv_step(batch)?;
        if self.objective.dual {
            self.generator_vs_step(batch)?;
        }
        self.iteration += 1;
        self.log.iteration_seconds.push(started.elapsed().as_secs_f64());
        Ok(())
    }

    pub fn run_epoch(&mut self, bundle: &DatasetBundle) -> Result<()> {
        let shuffle = rng::derive_indexed(rng::derive_seed(self.config.seed, rng::SHUFFLE), self.epoch as u64);
        for batch in batch_iterator(bundle, self.config.batch_size, shuffle) {
            self.iteration(&batch)?;
        }
        self.epoch += 1;
        Ok(())
    }

    pub fn finish(self) -> (ModelParams, TrainLog) {
        (self.params, self.log)
    }
}

/// Train all networks on `bundle`. Deterministic given `config.seed`.
pub fn train(bundle: &DatasetBundle, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    let mut trainer = Trainer::new(bundle, config)?;
    for _ in 0..config.epochs {
        trainer.run_epoch(bundle)?;
    }
    Ok(trainer.finish())
}
