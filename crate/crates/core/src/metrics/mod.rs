//! Dual metrics (text accuracy, hallucination rate), bucket and perturbation
//! breakdowns, and calibration.

pub mod calibration;
pub mod render;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, ColorBucket, LogoRecord, ShapeBucket};
use crate::error::{Error, Result};
use crate::perturb::PerturbationKind;
use crate::querent::PredictionRecord;
use crate::seed::digest_hex;

pub use calibration::{brier, ece, reliability_curve, CalibrationBin, CalibrationReport};

/// A prediction together with the manifest record it refers to.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub logo: &'a LogoRecord,
    pub pred: &'a PredictionRecord,
}

impl Observation<'_> {
    /// Correctly handled: no text on a pure-symbol logo, exact match otherwise.
    pub fn correct(&self) -> bool {
        if self.logo.category == Category::PureSymbol {
            self.pred.y_hat == 0
        } else {
            self.pred.exact_match == Some(true)
        }
    }
}

/// Pair every prediction with its manifest record.
pub fn join<'a>(logos: &'a [LogoRecord], preds: &'a [PredictionRecord]) -> Result<Vec<Observation<'a>>> {
    let by_id: HashMap<&str, &LogoRecord> = logos.iter().map(|l| (l.id.as_str(), l)).collect();
    preds
        .iter()
        .map(|p| {
            let logo = by_id
                .get(p.logo_id.as_str())
                .ok_or_else(|| Error::UnknownLabel(p.logo_id.clone()))?;
            if p.exact_match.is_some() != logo.gt_text.is_some() {
                return Err(Error::RecordInvariant {
                    id: p.logo_id.clone(),
                    message: "exact_match must be present iff the logo has ground-truth text".into(),
                });
            }
            Ok(Observation { logo, pred: p })
        })
        .collect()
}

/// Exact-match accuracy over text-bearing observations.
pub fn acc_text(obs: &[Observation<'_>]) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("acc_text"));
    }
    let mut hits = 0usize;
    for o in obs {
        match o.pred.exact_match {
            Some(m) => hits += m as usize,
            None => return Err(Error::MissingExactMatch(o.pred.logo_id.clone())),
        }
    }
    Ok(hits as f64 / obs.len() as f64)
}

/// Fraction of pure-symbol observations on which text was emitted.
pub fn hall_rate(obs: &[Observation<'_>]) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("hall_rate"));
    }
    let mut hall = 0usize;
    for o in obs {
        if o.logo.category != Category::PureSymbol {
            return Err(Error::NotSymbol(o.logo.id.clone()));
        }
        hall += o.pred.y_hat as usize;
    }
    Ok(hall as f64 / obs.len() as f64)
}

pub fn no_hall(obs: &[Observation<'_>]) -> Result<f64> {
    hall_rate(obs).map(|h| 1.0 - h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketFamily {
    Color,
    Shape,
}

/// How distribution shares are normalized within a bucket family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareMode {
    /// Bucket's correctly handled count over the family's correctly handled total.
    #[default]
    Correct,
    /// Bucket's sample count over the family's sample count.
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    pub n: usize,
    pub correct: usize,
    /// Absent for buckets without samples.
    pub accuracy: Option<f64>,
    pub share: f64,
}

fn shares(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn bucket_label(o: &Observation<'_>, family: BucketFamily) -> Result<&'static str> {
    let missing = || Error::MissingBucket {
        id: o.logo.id.clone(),
        family: match family {
            BucketFamily::Color => "color",
            BucketFamily::Shape => "shape",
        },
    };
    Ok(match family {
        BucketFamily::Color => o.logo.color_bucket.ok_or_else(missing)?.label(),
        BucketFamily::Shape => o.logo.shape_bucket.ok_or_else(missing)?.label(),
    })
}

/// Per-bucket accuracy and distribution share. Rows come in the family's
/// canonical order and include empty buckets.
pub fn bucket_report(obs: &[Observation<'_>], family: BucketFamily, mode: ShareMode) -> Result<Vec<BucketRow>> {
    let labels: Vec<&'static str> = match family {
        BucketFamily::Color => ColorBucket::ALL.iter().map(|b| b.label()).collect(),
        BucketFamily::Shape => ShapeBucket::ALL.iter().map(|b| b.label()).collect(),
    };
    let mut n = vec![0usize; labels.len()];
    let mut correct = vec![0usize; labels.len()];
    for o in obs {
        let label = bucket_label(o, family)?;
        let i = labels.iter().position(|l| *l == label).expect("label from family");
        n[i] += 1;
        correct[i] += o.correct() as usize;
    }
    let s = match mode {
        ShareMode::Correct => shares(&correct),
        ShareMode::Samples => shares(&n),
    };
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, l)| BucketRow {
            bucket: l.to_string(),
            n: n[i],
            correct: correct[i],
            accuracy: (n[i] > 0).then(|| correct[i] as f64 / n[i] as f64),
            share: s[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub kind: PerturbationKind,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub errors: usize,
    pub error_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub rows: Vec<PerturbationRow>,
    /// Unweighted mean of the per-kind accuracies.
    pub total: f64,
}

/// Per-kind accuracy (no-hallucination for symbol logos) and share of all
/// errors. When there are no errors at all every share is 0.
pub fn perturbation_report(obs: &[Observation<'_>]) -> Result<PerturbationReport> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("perturbation_report"));
    }
    let mut n = [0usize; 9];
    let mut correct = [0usize; 9];
    for o in obs {
        let kind = o.pred.perturbation.ok_or_else(|| {
            Error::InvalidArgument(format!("prediction for {} has no perturbation kind", o.pred.logo_id))
        })?;
        let i = PerturbationKind::ALL.iter().position(|k| *k == kind).expect("known kind");
        n[i] += 1;
        correct[i] += o.correct() as usize;
    }
    let errors: Vec<usize> = (0..9).map(|i| n[i] - correct[i]).collect();
    let es = shares(&errors);
    let rows: Vec<PerturbationRow> = (0..9)
        .filter(|&i| n[i] > 0)
        .map(|i| PerturbationRow {
            kind: PerturbationKind::ALL[i],
            n: n[i],
            correct: correct[i],
            accuracy: correct[i] as f64 / n[i] as f64,
            errors: errors[i],
            error_share: es[i],
        })
        .collect();
    let total = rows.iter().map(|r| r.accuracy).sum::<f64>() / rows.len() as f64;
    Ok(PerturbationReport { rows, total })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub n: usize,
    pub accuracy: Option<f64>,
}

/// Everything reported for one model on one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    pub n: usize,
    pub n_text: usize,
    pub n_symbol: usize,
    pub acc_text: Option<f64>,
    pub hall: Option<f64>,
    pub no_hall: Option<f64>,
    /// Pure Symbol, Hybrid, Pure Text, Hard-60.
    pub categories: Vec<CategoryRow>,
    pub colors: Vec<BucketRow>,
    pub shapes: Vec<BucketRow>,
    pub share_mode: ShareMode,
    /// Digest of the sorted logo ids the report covers.
    pub population: String,
}

pub fn population_digest(obs: &[Observation<'_>]) -> String {
    let mut ids: Vec<&str> = obs.iter().map(|o| o.logo.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let joined = ids.join("\n");
    digest_hex([joined.as_bytes()])
}

fn rate(obs: &[&Observation<'_>]) -> Option<f64> {
    (!obs.is_empty()).then(|| obs.iter().filter(|o| o.correct()).count() as f64 / obs.len() as f64)
}

/// Table-1-style report. Color and shape rows cover pure-symbol logos only;
/// symbol logos without buckets are an error.
pub fn metrics_report(model_id: &str, obs: &[Observation<'_>], mode: ShareMode) -> Result<MetricsReport> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("metrics_report"));
    }
    let symbol: Vec<Observation<'_>> = obs.iter().copied().filter(|o| o.logo.category == Category::PureSymbol).collect();
    let text: Vec<Observation<'_>> = obs.iter().copied().filter(|o| o.logo.gt_text.is_some()).collect();
    let mut categories = Vec::new();
    for c in Category::ALL {
        let sel: Vec<&Observation<'_>> = obs.iter().filter(|o| o.logo.category == c).collect();
        categories.push(CategoryRow { category: c.label().into(), n: sel.len(), accuracy: rate(&sel) });
    }
    let hard: Vec<&Observation<'_>> = obs.iter().filter(|o| o.logo.hard60).collect();
    categories.push(CategoryRow { category: "Hard-60".into(), n: hard.len(), accuracy: rate(&hard) });

    let hall = if symbol.is_empty() { None } else { Some(hall_rate(&symbol)?) };
    Ok(MetricsReport {
        model_id: model_id.to_string(),
        n: obs.len(),
        n_text: text.len(),
        n_symbol: symbol.len(),
        acc_text: if text.is_empty() { None } else { Some(acc_text(&text)?) },
        hall,
        no_hall: hall.map(|h| 1.0 - h),
        categories,
        colors: bucket_report(&symbol, BucketFamily::Color, mode)?,
        shapes: bucket_report(&symbol, BucketFamily::Shape, mode)?,
        share_mode: mode,
        population: population_digest(obs),
    })
}
