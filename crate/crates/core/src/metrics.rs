//! Edit distance, character/word recognition rates and dataset-level
//! evaluation.
//!
//! CRR is reported as a success rate: one minus the summed edit distance
//! over the summed ground-truth length, clamped below at zero (the raw
//! complement is preserved in the report).

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::Repository;
use crate::model::{recognize, ModelError, TrainingState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty evaluation set")]
    EmptyCorpus,
    #[error("ground truth has no characters")]
    NoCharacters,
}

/// Unit-cost insert/delete/substitute distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn distance_totals(pairs: &[(&str, &str)]) -> (usize, usize) {
    let mut total_distance = 0;
    let mut total_chars = 0;
    for (truth, pred) in pairs {
        total_distance += levenshtein(pred, truth);
        total_chars += truth.chars().count();
    }
    (total_distance, total_chars)
}

/// Character recognition rate over (ground truth, prediction) pairs:
/// `1 - sum(distance) / sum(|truth|)`, clamped below at 0.
pub fn crr(pairs: &[(&str, &str)]) -> Result<f64, MetricsError> {
    let (dist, chars) = distance_totals(pairs);
    if chars == 0 {
        return Err(MetricsError::NoCharacters);
    }
    Ok((1.0 - dist as f64 / chars as f64).max(0.0))
}

/// Word recognition rate: exact transcript matches over the total count.
pub fn wrr(pairs: &[(&str, &str)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let hits = pairs.iter().filter(|(t, p)| t == p).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleEval {
    pub truth: String,
    pub prediction: String,
    pub distance: usize,
}

/// Aggregate results over one dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub samples: usize,
    pub total_chars: usize,
    pub total_distance: usize,
    /// Clamped character recognition rate in [0, 1].
    pub crr: f64,
    /// Unclamped complement; negative when predictions overshoot badly.
    pub crr_raw: f64,
    pub wrr: f64,
    pub per_sample: Vec<SampleEval>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "dataset,samples,total_chars,total_distance,crr,wrr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6}",
            self.dataset, self.samples, self.total_chars, self.total_distance, self.crr, self.wrr
        )
    }

    /// Build a report from already-recognized (truth, prediction) pairs.
    pub fn from_pairs(
        dataset: &str,
        pairs: Vec<(String, String)>,
    ) -> Result<Self, MetricsError> {
        if pairs.is_empty() {
            return Err(MetricsError::EmptyCorpus);
        }
        let samples = pairs.len();
        let (total_distance, total_chars, wrr) = {
            let borrowed: Vec<(&str, &str)> = pairs
                .iter()
                .map(|(t, p)| (t.as_str(), p.as_str()))
                .collect();
            let (d, c) = distance_totals(&borrowed);
            (d, c, wrr(&borrowed)?)
        };
        if total_chars == 0 {
            return Err(MetricsError::NoCharacters);
        }
        let crr_raw = 1.0 - total_distance as f64 / total_chars as f64;
        let per_sample = pairs
            .into_iter()
            .map(|(truth, prediction)| {
                let distance = levenshtein(&prediction, &truth);
                SampleEval {
                    truth,
                    prediction,
                    distance,
                }
            })
            .collect();
        Ok(Self {
            dataset: dataset.to_string(),
            samples,
            total_chars,
            total_distance,
            crr: crr_raw.max(0.0),
            crr_raw,
            wrr,
            per_sample,
        })
    }
}

/// Recognize every indexed record of the repository and aggregate CRR/WRR.
/// Deterministic for a fixed state; per-sample inference runs in parallel.
pub fn evaluate_dataset<T: Scalar>(
    state: &TrainingState<T>,
    repo: &Repository,
    indices: &[usize],
    dataset_label: &str,
) -> Result<EvalReport, ModelError> {
    if indices.is_empty() {
        return Err(ModelError::Metrics(MetricsError::EmptyCorpus.to_string()));
    }
    let pairs: Vec<(String, String)> = indices
        .par_iter()
        .map(|&i| -> Result<(String, String), ModelError> {
            let img = repo.image(i)?;
            let prediction = recognize(state, &img)?;
            Ok((repo.records()[i].word.clone(), prediction))
        })
        .collect::<Result<_, _>>()?;
    EvalReport::from_pairs(dataset_label, pairs).map_err(|e| ModelError::Metrics(e.to_string()))
}
