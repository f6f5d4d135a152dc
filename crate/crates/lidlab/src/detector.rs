//! Logistic-regression detectors over LID feature vectors.
//!
//! The detector is deliberately the simplest thing that works: features are
//! standardized by the pooled training mean/std, then a logistic regression
//! is fit by full-batch gradient descent from zero initialization — no
//! stochasticity anywhere, so training is exactly reproducible. Positives
//! are adversarial examples, negatives are clean and noisy ones.

use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use crate::error::{Error, Result};

/// Floor applied to per-feature standard deviations to avoid division by
/// (near-)zero; features that hit it are reported as flagged.
pub const STD_FLOOR: f64 = 1e-12;

/// Training hyperparameters for [`train_detector`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Posterior threshold for calling an example adversarial.
    pub threshold: f64,
    /// Training is full-batch from a zero initialization, so no randomness is
    /// consumed; the seed is part of the hyperparameter record so that saved
    /// configurations stay complete.
    pub seed: u64,
}

impl Default for DetectorHyperparams {
    fn default() -> Self {
        DetectorHyperparams {
            learning_rate: 0.1,
            epochs: 1000,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl DetectorHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "detector learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("detector epochs must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "detector threshold must lie strictly inside (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// A trained detector: logistic regression weights over standardized
/// features, plus the standardization statistics themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub threshold: f64,
}

/// [`train_detector`] output: the model plus indices of features whose
/// standard deviation hit [`STD_FLOOR`].
#[derive(Debug, Clone)]
pub struct DetectorTraining {
    pub model: DetectorModel,
    pub floored_features: Vec<usize>,
}

/// Headline evaluation metrics for one detector on one test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub auc: f64,
    pub detection_rate: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn validate_features(rows: &[Vec<f64>], dim: usize, what: &'static str) -> Result<()> {
    for row in rows {
        if row.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "{what} feature vector of length {}, expected {dim}",
                row.len()
            )));
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "detector features",
            });
        }
    }
    Ok(())
}

/// Fit a logistic-regression detector: positives (adversarial) against
/// negatives (clean + noisy). Features are standardized by the pooled mean
/// and population standard deviation of all training rows; weights start at
/// zero and are updated by `epochs` full-batch gradient steps on the mean
/// logistic loss.
pub fn train_detector(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    hp: &DetectorHyperparams,
) -> Result<DetectorTraining> {
    hp.validate()?;
    if positives.is_empty() {
        return Err(Error::EmptyClass("positive"));
    }
    if negatives.is_empty() {
        return Err(Error::EmptyClass("negative"));
    }
    let dim = positives[0].len();
    if dim == 0 {
        return Err(Error::EmptyInput("feature dimension"));
    }
    validate_features(positives, dim, "positive")?;
    validate_features(negatives, dim, "negative")?;

    let n = positives.len() + negatives.len();
    let all = || positives.iter().chain(negatives.iter());

    let mut means = vec![0.0; dim];
    for row in all() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    let mut vars = vec![0.0; dim];
    for row in all() {
        for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
            let d = v - m;
            *s += d * d;
        }
    }
    let mut floored = Vec::new();
    let mut stds = vec![0.0; dim];
    for (j, (s, var)) in stds.iter_mut().zip(&vars).enumerate() {
        let std = (var / n as f64).sqrt();
        if std < STD_FLOOR {
            floored.push(j);
            *s = STD_FLOOR;
        } else {
            *s = std;
        }
    }

    // Standardize once up front.
    let standardize = |row: &Vec<f64>| -> Vec<f64> {
        row.iter()
            .zip(&means)
            .zip(&stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    };
    let pos_std: Vec<Vec<f64>> = positives.iter().map(standardize).collect();
    let neg_std: Vec<Vec<f64>> = negatives.iter().map(standardize).collect();

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let inv_n = 1.0 / n as f64;
    let mut grad_w = vec![0.0; dim];
    for _ in 0..hp.epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (rows, y) in [(&pos_std, 1.0), (&neg_std, 0.0)] {
            for row in rows.iter() {
                let z = weights
                    .iter()
                    .zip(row)
                    .map(|(w, f)| w * f)
                    .sum::<f64>()
                    + bias;
                let err = sigmoid(z) - y;
                for (g, f) in grad_w.iter_mut().zip(row) {
                    *g += err * f;
                }
                grad_b += err;
            }
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= hp.learning_rate * g * inv_n;
        }
        bias -= hp.learning_rate * grad_b * inv_n;
    }

    Ok(DetectorTraining {
        model: DetectorModel {
            weights,
            bias,
            feature_means: means,
            feature_stds: stds,
            threshold: hp.threshold,
        },
        floored_features: floored,
    })
}

impl DetectorModel {
    /// Posterior probability that `features` is adversarial.
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "feature vector of length {}, detector expects {}",
                features.len(),
                self.weights.len()
            )));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "DetectorModel::score",
            });
        }
        let z = features
            .iter()
            .zip(&self.weights)
            .zip(&self.feature_means)
            .zip(&self.feature_stds)
            .map(|(((v, w), m), s)| w * (v - m) / s)
            .sum::<f64>()
            + self.bias;
        Ok(sigmoid(z))
    }

    /// True when the score reaches the threshold (boundary counts as
    /// detected).
    pub fn detects(&self, features: &[f64]) -> Result<bool> {
        Ok(self.score(features)? >= self.threshold)
    }

    /// Save as a key-value CSV. Values use Rust's shortest-roundtrip float
    /// formatting, so a load reproduces the model bit for bit.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "name,value")?;
        writeln!(w, "dim,{}", self.weights.len())?;
        writeln!(w, "bias,{}", self.bias)?;
        writeln!(w, "threshold,{}", self.threshold)?;
        for (j, v) in self.weights.iter().enumerate() {
            writeln!(w, "weight_{j},{v}")?;
        }
        for (j, v) in self.feature_means.iter().enumerate() {
            writeln!(w, "mean_{j},{v}")?;
        }
        for (j, v) in self.feature_stds.iter().enumerate() {
            writeln!(w, "std_{j},{v}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a model written by [`DetectorModel::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "name,value" {
            return Err(Error::MalformedFile {
                path: display,
                reason: format!("unexpected header {header:?}"),
            });
        }
        let mut pairs = std::collections::HashMap::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let (name, value) = line.split_once(',').ok_or_else(|| Error::MalformedFile {
                path: display.clone(),
                reason: format!("line without comma: {line:?}"),
            })?;
            pairs.insert(name.to_string(), value.to_string());
        }
        let get = |name: &str| -> Result<f64> {
            pairs
                .get(name)
                .ok_or_else(|| Error::MalformedFile {
                    path: display.clone(),
                    reason: format!("missing field {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::MalformedFile {
                    path: display.clone(),
                    reason: format!("bad float for {name}: {e}"),
                })
        };
        let dim = get("dim")? as usize;
        let bias = get("bias")?;
        let threshold = get("threshold")?;
        let mut weights = Vec::with_capacity(dim);
        let mut feature_means = Vec::with_capacity(dim);
        let mut feature_stds = Vec::with_capacity(dim);
        for j in 0..dim {
            weights.push(get(&format!("weight_{j}"))?);
            feature_means.push(get(&format!("mean_{j}"))?);
            feature_stds.push(get(&format!("std_{j}"))?);
        }
        Ok(DetectorModel {
            weights,
            bias,
            feature_means,
            feature_stds,
            threshold,
        })
    }
}

/// Area under the ROC curve by the rank statistic (Mann-Whitney U with
/// average ranks); tied positive/negative scores count half. Equivalent to
/// brute-force counting of concordant pairs.
pub fn auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() {
        return Err(Error::EmptyClass("positive"));
    }
    if neg_scores.is_empty() {
        return Err(Error::EmptyClass("negative"));
    }
    if !pos_scores
        .iter()
        .chain(neg_scores.iter())
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite { context: "auc" });
    }
    let mut all: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Tied block occupies 1-based ranks i+1 ..= j; all members get the
        // average rank.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos = pos_scores.len() as f64;
    let n_neg = neg_scores.len() as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// Fraction of feature vectors the model flags as adversarial.
pub fn detection_rate(model: &DetectorModel, adversarial: &[Vec<f64>]) -> Result<f64> {
    if adversarial.is_empty() {
        return Err(Error::EmptyClass("adversarial"));
    }
    let mut detected = 0usize;
    for row in adversarial {
        if model.detects(row)? {
            detected += 1;
        }
    }
    Ok(detected as f64 / adversarial.len() as f64)
}

/// True-positive rate at the largest threshold whose false-positive rate
/// does not exceed `target_fpr`. A secondary operating-point metric; the
/// headline detection rate uses the posterior threshold.
pub fn tpr_at_fpr(pos_scores: &[f64], neg_scores: &[f64], target_fpr: f64) -> Result<f64> {
    if pos_scores.is_empty() {
        return Err(Error::EmptyClass("positive"));
    }
    if neg_scores.is_empty() {
        return Err(Error::EmptyClass("negative"));
    }
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(Error::Config(format!(
            "target FPR must lie in [0, 1], got {target_fpr}"
        )));
    }
    let mut neg_desc = neg_scores.to_vec();
    neg_desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let allowed = (target_fpr * neg_desc.len() as f64).floor() as usize;
    let tau = if allowed >= neg_desc.len() {
        f64::NEG_INFINITY
    } else {
        neg_desc[allowed]
    };
    let tp = pos_scores.iter().filter(|&&s| s > tau).count();
    Ok(tp as f64 / pos_scores.len() as f64)
}

/// AUC plus detection rate of a model on a labeled test set.
pub fn evaluate(
    model: &DetectorModel,
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
) -> Result<DetectionMetrics> {
    let pos_scores: Vec<f64> = positives
        .iter()
        .map(|f| model.score(f))
        .collect::<Result<_>>()?;
    let neg_scores: Vec<f64> = negatives
        .iter()
        .map(|f| model.score(f))
        .collect::<Result<_>>()?;
    Ok(DetectionMetrics {
        auc: auc(&pos_scores, &neg_scores)?,
        detection_rate: detection_rate(model, positives)?,
        n_pos: positives.len(),
        n_neg: negatives.len(),
    })
}
