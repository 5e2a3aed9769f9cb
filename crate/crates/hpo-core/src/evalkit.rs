//! Classification metrics for the two oversight tasks: confusion matrices,
//! accuracy, per-class and macro F1, bootstrap confidence intervals,
//! majority voting, and the failure-mode breakdown of the guidance task.
//!
//! Everything here is pure; bootstrap replicas draw from per-replica RNGs
//! derived deterministically from the master seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::PhaseMeans;
use crate::model::LabelVector;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions vs {golds} golds")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("empty input")]
    EmptyInput,
    #[error("empty sample")]
    EmptySample,
    #[error("expected a {expected}x{expected} matrix, got {actual}x{actual}")]
    WrongDimension { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Square grid of counts; rows are actual classes, columns are predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Builds a matrix by counting aligned (gold, pred) pairs.
    pub fn from_pairs(
        preds: &[usize],
        golds: &[usize],
        num_classes: usize,
    ) -> Result<Self, EvalError> {
        if preds.len() != golds.len() {
            return Err(EvalError::LengthMismatch {
                preds: preds.len(),
                golds: golds.len(),
            });
        }
        if num_classes == 0 {
            return Err(EvalError::InvalidParameter(
                "num_classes must be positive".to_string(),
            ));
        }
        let mut counts = vec![vec![0u64; num_classes]; num_classes];
        for (&p, &g) in preds.iter().zip(golds) {
            for &label in [p, g].iter() {
                if label >= num_classes {
                    return Err(EvalError::LabelOutOfRange { label, num_classes });
                }
            }
            counts[g][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    /// Wraps raw counts; the grid must be square and non-empty.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let n = counts.len();
        if n == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        for row in &counts {
            if row.len() != n {
                return Err(EvalError::WrongDimension {
                    expected: n,
                    actual: row.len(),
                });
            }
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// Count of examples with actual class `actual` predicted as `predicted`.
    pub fn count(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Precision for one class; 0/0 is defined as 0.
    pub fn precision(&self, class: usize) -> f64 {
        let tp = self.counts[class][class] as f64;
        let predicted: u64 = (0..self.num_classes()).map(|a| self.counts[a][class]).sum();
        if predicted == 0 {
            0.0
        } else {
            tp / predicted as f64
        }
    }

    /// Recall for one class; 0/0 is defined as 0.
    pub fn recall(&self, class: usize) -> f64 {
        let tp = self.counts[class][class] as f64;
        let actual: u64 = self.counts[class].iter().sum();
        if actual == 0 {
            0.0
        } else {
            tp / actual as f64
        }
    }

    /// Per-class F1 scores (harmonic mean of precision and recall,
    /// with 0/0 defined as 0).
    pub fn per_class_f1(&self) -> Result<Vec<f64>, EvalError> {
        if self.total() == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        Ok((0..self.num_classes())
            .map(|c| {
                let p = self.precision(c);
                let r = self.recall(c);
                if p + r == 0.0 {
                    0.0
                } else {
                    2.0 * p * r / (p + r)
                }
            })
            .collect())
    }

    /// Unweighted mean of the per-class F1 scores.
    pub fn macro_f1(&self) -> Result<f64, EvalError> {
        let f1 = self.per_class_f1()?;
        Ok(f1.iter().sum::<f64>() / f1.len() as f64)
    }

    /// Aligned plain-text table, actual classes as rows and predicted as
    /// columns.
    pub fn to_text_table(&self) -> String {
        let n = self.num_classes();
        let mut out = String::new();
        out.push_str(&format!("{:<14}", "Actual \\ Pred"));
        for c in 0..n {
            out.push_str(&format!("{c:>8}"));
        }
        out.push('\n');
        for (a, row) in self.counts.iter().enumerate() {
            out.push_str(&format!("{a:<14}"));
            for count in row {
                out.push_str(&format!("{count:>8}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean of the two task-level F1 scores.
pub fn combine_macro(mi_f1: f64, pg_f1: f64) -> f64 {
    (mi_f1 + pg_f1) / 2.0
}

/// Modal label; ties break toward the smallest label value.
pub fn majority_vote(labels: &[usize], num_classes: usize) -> Result<usize, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut counts = vec![0usize; num_classes];
    for &label in labels {
        if label >= num_classes {
            return Err(EvalError::LabelOutOfRange { label, num_classes });
        }
        counts[label] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    Ok(counts
        .iter()
        .position(|&c| c == best)
        .expect("non-empty counts have a maximum"))
}

/// Named off-diagonal cells of the 3x3 guidance-quality matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureModeBreakdown {
    /// Partial guidance misread as no guidance (actual 1, predicted 0).
    pub partial_to_none: u64,
    /// No guidance upgraded to partial (actual 0, predicted 1).
    pub over_correction: u64,
    /// Effective scaffolding underrated as partial (actual 2, predicted 1).
    pub effective_to_partial: u64,
}

pub fn failure_mode_breakdown(pg_cm: &ConfusionMatrix) -> Result<FailureModeBreakdown, EvalError> {
    if pg_cm.num_classes() != 3 {
        return Err(EvalError::WrongDimension {
            expected: 3,
            actual: pg_cm.num_classes(),
        });
    }
    Ok(FailureModeBreakdown {
        partial_to_none: pg_cm.count(1, 0),
        over_correction: pg_cm.count(0, 1),
        effective_to_partial: pg_cm.count(2, 1),
    })
}

/// Per-replica seed derivation: splitmix64 over the master seed and the
/// replica index, so replicas can be computed in any order (or in parallel)
/// without changing results.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Percentile bootstrap over example indices. `stat` maps a resampled index
/// multiset to a statistic; the returned interval is the
/// (alpha/2, 1 - alpha/2) percentile pair over `b` replicas.
pub fn bootstrap_ci_indexed<F>(
    n: usize,
    stat: F,
    b: u32,
    seed: u64,
    alpha: f64,
) -> Result<(f64, f64), EvalError>
where
    F: Fn(&[usize]) -> f64,
{
    if n == 0 || b == 0 {
        return Err(EvalError::EmptySample);
    }
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(EvalError::InvalidParameter(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    let mut replicas = Vec::with_capacity(b as usize);
    let mut indices = vec![0usize; n];
    for i in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        for slot in indices.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        replicas.push(stat(&indices));
    }
    replicas.sort_by(|a, b| a.partial_cmp(b).expect("bootstrap statistics must not be NaN"));
    Ok((
        percentile(&replicas, alpha / 2.0),
        percentile(&replicas, 1.0 - alpha / 2.0),
    ))
}

/// Bootstrap confidence interval for a metric over aligned prediction and
/// gold label lists. Deterministic for a fixed seed.
pub fn bootstrap_ci<F>(
    preds: &[usize],
    golds: &[usize],
    metric: F,
    b: u32,
    seed: u64,
    alpha: f64,
) -> Result<(f64, f64), EvalError>
where
    F: Fn(&[usize], &[usize]) -> f64,
{
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    bootstrap_ci_indexed(
        preds.len(),
        |indices| {
            let rp: Vec<usize> = indices.iter().map(|&i| preds[i]).collect();
            let rg: Vec<usize> = indices.iter().map(|&i| golds[i]).collect();
            metric(&rp, &rg)
        },
        b,
        seed,
        alpha,
    )
}

/// One scored example: the system's predicted labels next to the gold labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredExample {
    pub pred: LabelVector,
    pub gold: LabelVector,
}

/// Strict-mode metrics where unscored dialogues count as wrong on both
/// tasks: they enter accuracy denominators and per-class recall
/// denominators (as misses for their gold class) but never precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrictMetrics {
    pub mi_accuracy: f64,
    pub mi_f1: f64,
    pub pg_accuracy: f64,
    pub pg_f1: f64,
    pub macro_f1: f64,
}

/// Bootstrap settings for the report-level confidence interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicas: u32,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicas: 10_000,
            seed: 0,
            alpha: 0.05,
        }
    }
}

/// Aggregate evaluation report over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scored_count: usize,
    /// Dialogues on which the pipeline failed to produce a judgment.
    pub unscored_count: usize,
    /// Dialogues judged fine but lacking gold labels in the dataset.
    pub no_gold_count: usize,
    pub mi_accuracy: f64,
    pub mi_f1: f64,
    pub pg_accuracy: f64,
    pub pg_f1: f64,
    pub macro_f1: f64,
    /// Percentile bootstrap interval for `macro_f1`, resampled at dialogue
    /// granularity (both tasks jointly).
    pub bootstrap_ci: (f64, f64),
    pub mi_cm: ConfusionMatrix,
    pub pg_cm: ConfusionMatrix,
    pub failure_modes: FailureModeBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict: Option<StrictMetrics>,
    /// Mean per-phase latency in seconds. Excluded from persisted reports,
    /// which must be reproducible byte for byte.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<PhaseMeans>,
}

fn mi_class(label: &LabelVector) -> usize {
    label.mistake_identified as usize
}

fn pg_class(label: &LabelVector) -> usize {
    label.guidance_quality.as_u8() as usize
}

fn strict_macro_f1(cm: &ConfusionMatrix, unscored_golds_per_class: &[u64]) -> f64 {
    let n = cm.num_classes();
    let f1: Vec<f64> = (0..n)
        .map(|c| {
            let p = cm.precision(c);
            let tp = cm.count(c, c) as f64;
            let actual: u64 = (0..n).map(|pr| cm.count(c, pr)).sum::<u64>() + unscored_golds_per_class[c];
            let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect();
    f1.iter().sum::<f64>() / n as f64
}

impl EvalReport {
    /// Computes the full report from scored examples. `unscored_golds`
    /// carries gold labels of failed dialogues (for strict mode);
    /// `unscored_other` counts failed dialogues without gold.
    pub fn compute(
        scored: &[ScoredExample],
        unscored_golds: &[LabelVector],
        unscored_other: usize,
        no_gold_count: usize,
        bootstrap: BootstrapOptions,
    ) -> Result<Self, EvalError> {
        if scored.is_empty() {
            return Err(EvalError::EmptySample);
        }
        let mi_preds: Vec<usize> = scored.iter().map(|e| mi_class(&e.pred)).collect();
        let mi_golds: Vec<usize> = scored.iter().map(|e| mi_class(&e.gold)).collect();
        let pg_preds: Vec<usize> = scored.iter().map(|e| pg_class(&e.pred)).collect();
        let pg_golds: Vec<usize> = scored.iter().map(|e| pg_class(&e.gold)).collect();

        let mi_cm = ConfusionMatrix::from_pairs(&mi_preds, &mi_golds, 2)?;
        let pg_cm = ConfusionMatrix::from_pairs(&pg_preds, &pg_golds, 3)?;
        let mi_f1 = mi_cm.macro_f1()?;
        let pg_f1 = pg_cm.macro_f1()?;
        let macro_f1 = combine_macro(mi_f1, pg_f1);

        // Resample dialogues, not task labels: one draw selects the same
        // example for both tasks.
        let bootstrap_ci = bootstrap_ci_indexed(
            scored.len(),
            |indices| {
                let rm_p: Vec<usize> = indices.iter().map(|&i| mi_preds[i]).collect();
                let rm_g: Vec<usize> = indices.iter().map(|&i| mi_golds[i]).collect();
                let rp_p: Vec<usize> = indices.iter().map(|&i| pg_preds[i]).collect();
                let rp_g: Vec<usize> = indices.iter().map(|&i| pg_golds[i]).collect();
                let mi = ConfusionMatrix::from_pairs(&rm_p, &rm_g, 2)
                    .and_then(|cm| cm.macro_f1())
                    .unwrap_or(0.0);
                let pg = ConfusionMatrix::from_pairs(&rp_p, &rp_g, 3)
                    .and_then(|cm| cm.macro_f1())
                    .unwrap_or(0.0);
                combine_macro(mi, pg)
            },
            bootstrap.replicas,
            bootstrap.seed,
            bootstrap.alpha,
        )?;

        let strict = if unscored_golds.is_empty() && unscored_other == 0 {
            None
        } else {
            let denom = (scored.len() + unscored_golds.len() + unscored_other) as f64;
            let mut mi_unscored = [0u64; 2];
            let mut pg_unscored = [0u64; 3];
            for gold in unscored_golds {
                mi_unscored[mi_class(gold)] += 1;
                pg_unscored[pg_class(gold)] += 1;
            }
            let mi_f1_strict = strict_macro_f1(&mi_cm, &mi_unscored);
            let pg_f1_strict = strict_macro_f1(&pg_cm, &pg_unscored);
            Some(StrictMetrics {
                mi_accuracy: mi_cm.trace() as f64 / denom,
                mi_f1: mi_f1_strict,
                pg_accuracy: pg_cm.trace() as f64 / denom,
                pg_f1: pg_f1_strict,
                macro_f1: combine_macro(mi_f1_strict, pg_f1_strict),
            })
        };

        Ok(EvalReport {
            scored_count: scored.len(),
            unscored_count: unscored_golds.len() + unscored_other,
            no_gold_count,
            mi_accuracy: mi_cm.accuracy()?,
            mi_f1,
            pg_accuracy: pg_cm.accuracy()?,
            pg_f1,
            macro_f1,
            bootstrap_ci,
            mi_cm,
            pg_cm,
            failure_modes: failure_mode_breakdown(&pg_cm)?,
            strict,
            latency: None,
        })
    }

    /// Copy with the volatile latency block removed, fit for byte-stable
    /// persistence.
    pub fn without_latency(&self) -> Self {
        let mut report = self.clone();
        report.latency = None;
        report
    }
}
