//! Pseudo-feature synthesis from the trained semantic→visual generator and
//! the final softmax classifier over seen ∪ unseen classes.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::{FitConfig, FitSummary, SoftmaxClassifier};
use crate::data::{ClassId, DatasetBundle};
use crate::error::{Error, Result};
use crate::networks::{gen_sv_forward, ModelParams};
use crate::rng;

pub const DEFAULT_PER_CLASS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub classes: Vec<ClassId>,
    pub n_per_class: usize,
    pub seed: u64,
}

/// Which rows the final classifier is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalTrainingSet {
    /// Synthesized rows for every class.
    SyntheticOnly,
    /// Synthesized rows for every class plus real training rows of seen
    /// classes.
    #[default]
    SyntheticPlusRealSeen,
}

/// Generate `n_per_class` rows per requested class, in request order.
pub fn synthesize_features(
    params: &ModelParams,
    bundle: &DatasetBundle,
    request: &SynthesisRequest,
) -> Result<(Array2<f64>, Vec<ClassId>)> {
    if request.n_per_class == 0 {
        return Err(Error::validation("n_per_class must be >= 1"));
    }
    if let Some(c) = request.classes.iter().find(|&&c| c >= bundle.class_count()) {
        return Err(Error::validation(format!("class {c} has no attribute row")));
    }
    let labels: Vec<ClassId> = request
        .classes
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, request.n_per_class))
        .collect();
    let attrs = bundle.attributes_for(&labels);
    let mut r = rng::seeded(request.seed);
    let noise = rng::standard_normal(&mut r, labels.len(), bundle.attribute_dim());
    Ok((gen_sv_forward(params, attrs.view(), noise.view()), labels))
}

/// Fit the softmax classifier over `all_classes`.
pub fn fit_gzsl_classifier(
    features: ArrayView2<f64>,
    labels: &[ClassId],
    all_classes: &[ClassId],
    config: &FitConfig,
) -> Result<(SoftmaxClassifier, FitSummary)> {
    SoftmaxClassifier::fit(features, labels, all_classes, config)
}

/// Synthesize for every class of the bundle and fit the final classifier.
pub fn build_gzsl_classifier(
    params: &ModelParams,
    bundle: &DatasetBundle,
    n_per_class: usize,
    seed: u64,
    training_set: FinalTrainingSet,
    config: &FitConfig,
) -> Result<(SoftmaxClassifier, FitSummary)> {
    let all = bundle.all_classes();
    let request = SynthesisRequest {
        classes: all.clone(),
        n_per_class,
        seed,
    };
    let (mut x, mut y) = synthesize_features(params, bundle, &request)?;
    if training_set == FinalTrainingSet::SyntheticPlusRealSeen {
        x = concatenate(Axis(0), &[x.view(), bundle.visual_train.view()]).expect("same width");
        y.extend_from_slice(&bundle.labels_train);
    }
    fit_gzsl_classifier(x.view(), &y, &all, config)
}

/// Argmax class per row; ties go to the lowest class id.
pub fn predict(classifier: &SoftmaxClassifier, visual: ArrayView2<f64>) -> Vec<ClassId> {
    classifier.predict(visual)
}
