//! Linear softmax classifier over an explicit, ascending list of class ids.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::ClassId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    /// `[K × n_classes]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Class id of each output column, strictly ascending.
    pub classes: Vec<ClassId>,
}

/// Full-batch gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_steps: usize,
    /// Stop once the gradient norm drops below this.
    pub grad_tol: f64,
    /// Fixed step size; `None` picks `1 / L` from the curvature bound of
    /// the standardized problem.
    pub learning_rate: Option<f64>,
    pub weight_decay: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_steps: 1000,
            grad_tol: 1e-5,
            learning_rate: None,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSummary {
    pub steps: usize,
    pub final_loss: f64,
    pub grad_norm: f64,
    pub train_accuracy: f64,
}

pub(crate) fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

impl SoftmaxClassifier {
    pub fn zeros(feature_dim: usize, mut classes: Vec<ClassId>) -> Self {
        classes.sort_unstable();
        classes.dedup();
        Self {
            weights: Array2::zeros((feature_dim, classes.len())),
            bias: Array1::zeros(classes.len()),
            classes,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn column_of(&self, class: ClassId) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(
            x.ncols(),
            self.weights.nrows(),
            "classifier expects {} features, got {}",
            self.weights.nrows(),
            x.ncols()
        );
        x.dot(&self.weights) + &self.bias
    }

    pub fn probabilities(&self, x: ArrayView2<f64>) -> Array2<f64> {
        softmax_rows(self.logits(x))
    }

    /// Argmax class per row; ties resolve to the lowest class id.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<ClassId> {
        argmax_rows(&self.logits(x))
            .into_iter()
            .map(|col| self.classes[col])
            .collect()
    }

    /// Output column of each label. Panics on labels the classifier does
    /// not cover.
    pub fn columns_for(&self, labels: &[ClassId]) -> Vec<usize> {
        labels
            .iter()
            .map(|&c| {
                self.column_of(c)
                    .unwrap_or_else(|| panic!("label {c} is not a classifier class"))
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Fit by full-batch gradient descent on mean cross-entropy, starting
    /// from zero. Features are standardized internally and the solution is
    /// folded back into raw-feature weights.
    pub fn fit(
        x: ArrayView2<f64>,
        labels: &[ClassId],
        classes: &[ClassId],
        config: &FitConfig,
    ) -> Result<(Self, FitSummary)> {
        let mut model = Self::zeros(x.ncols(), classes.to_vec());
        if x.nrows() != labels.len() || x.nrows() == 0 {
            return Err(Error::validation(format!(
                "classifier fit needs matching non-empty rows and labels ({} vs {})",
                x.nrows(),
                labels.len()
            )));
        }
        for &c in &model.classes {
            if !labels.contains(&c) {
                return Err(Error::validation(format!("class {c} has no training rows")));
            }
        }
        let cols: Vec<usize> = labels
            .iter()
            .map(|&c| {
                model
                    .column_of(c)
                    .ok_or_else(|| Error::validation(format!("label {c} is not in the class set")))
            })
            .collect::<Result<_>>()?;

        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x
            .var_axis(Axis(0), 0.0)
            .mapv(|v| if v > 1e-24 { v.sqrt() } else { 1.0 });
        let z = (&x - &mean) / &std;

        let lr = config.learning_rate.unwrap_or_else(|| {
            // Softmax cross-entropy curvature is at most half the top
            // eigenvalue of the (bias-augmented) second-moment matrix.
            let top = top_eigenvalue_second_moment(&z) + 1.0;
            1.0 / (0.5 * top + config.weight_decay)
        });

        let k = model.n_classes();
        let mut w = Array2::<f64>::zeros((z.ncols(), k));
        let mut b = Array1::<f64>::zeros(k);
        let mut steps = 0;
        let mut grad_norm = f64::INFINITY;
        let mut loss = f64::NAN;
        while steps < config.max_steps {
            let probs = softmax_rows(z.dot(&w) + &b);
            loss = cross_entropy(&probs, &cols);
            let mut d = probs;
            for (mut row, &c) in d.rows_mut().into_iter().zip(&cols) {
                row[c] -= 1.0;
            }
            d /= n;
            let gw = z.t().dot(&d) + &w * config.weight_decay;
            let gb = d.sum_axis(Axis(0));
            grad_norm = (gw.iter().chain(&gb).map(|v| v * v).sum::<f64>()).sqrt();
            if grad_norm < config.grad_tol {
                break;
            }
            w.scaled_add(-lr, &gw);
            b.scaled_add(-lr, &gb);
            steps += 1;
        }

        // logits = ((x - μ) / σ) w + b = x (w / σ) + (b - μ·(w / σ))
        let raw_w = &w / &std.view().insert_axis(Axis(1));
        model.bias = b - mean.dot(&raw_w);
        model.weights = raw_w;
        if !model.all_finite() {
            return Err(Error::validation("classifier fit produced non-finite weights"));
        }
        let predictions = model.predict(x);
        let correct = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
        let summary = FitSummary {
            steps,
            final_loss: loss,
            grad_norm,
            train_accuracy: correct as f64 / n,
        };
        Ok((model, summary))
    }
}

pub(crate) fn cross_entropy(probs: &Array2<f64>, cols: &[usize]) -> f64 {
    let total: f64 = probs
        .rows()
        .into_iter()
        .zip(cols)
        .map(|(row, &c)| -row[c].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / cols.len() as f64
}

/// Column index of the maximum per row, first index on ties.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Power iteration on `zᵀz / n` from a fixed start vector.
fn top_eigenvalue_second_moment(z: &Array2<f64>) -> f64 {
    let n = z.nrows() as f64;
    let mut v = Array1::from_elem(z.ncols(), 1.0 / (z.ncols() as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..50 {
        let next = z.t().dot(&z.dot(&v)) / n;
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = next / norm;
    }
    // Power iteration under-estimates slightly before convergence.
    lambda * 1.05
}
