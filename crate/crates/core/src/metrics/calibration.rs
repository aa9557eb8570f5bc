//! Reliability curves, expected calibration error and Brier score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean predicted probability; absent for empty bins.
    pub mean_prob: Option<f64>,
    /// Observed positive rate; absent for empty bins.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub brier: f64,
    pub n: usize,
}

fn check(probs: &[f64], labels: &[bool], bins: usize) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch { left: probs.len(), right: labels.len() });
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("calibration"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("prob[{i}] = {p} outside [0, 1]")));
    }
    Ok(())
}

/// Bin index for equal-width bins on [0, 1]; the last bin is closed.
pub fn bin_index(p: f64, bins: usize) -> usize {
    ((p * bins as f64).floor() as usize).min(bins - 1)
}

fn accumulate(probs: &[f64], labels: &[bool], bins: usize) -> Vec<(usize, f64, usize)> {
    let mut acc = vec![(0usize, 0.0f64, 0usize); bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = &mut acc[bin_index(p, bins)];
        b.0 += 1;
        b.1 += p;
        b.2 += y as usize;
    }
    acc
}

pub fn reliability_curve(probs: &[f64], labels: &[bool], bins: usize) -> Result<CalibrationReport> {
    check(probs, labels, bins)?;
    let acc = accumulate(probs, labels, bins);
    let bins_out = acc
        .iter()
        .enumerate()
        .map(|(i, &(count, sum_p, pos))| CalibrationBin {
            lo: i as f64 / bins as f64,
            hi: (i + 1) as f64 / bins as f64,
            count,
            mean_prob: (count > 0).then(|| sum_p / count as f64),
            rate: (count > 0).then(|| pos as f64 / count as f64),
        })
        .collect();
    Ok(CalibrationReport {
        bins: bins_out,
        ece: ece(probs, labels, bins)?,
        brier: brier(probs, labels)?,
        n: probs.len(),
    })
}

/// Count-weighted mean gap between confidence and observed rate per bin.
pub fn ece(probs: &[f64], labels: &[bool], bins: usize) -> Result<f64> {
    check(probs, labels, bins)?;
    let n = probs.len() as f64;
    Ok(accumulate(probs, labels, bins)
        .iter()
        .filter(|b| b.0 > 0)
        .map(|&(count, sum_p, pos)| (count as f64 / n) * (sum_p / count as f64 - pos as f64 / count as f64).abs())
        .sum())
}

pub fn brier(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check(probs, labels, 1)?;
    let n = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y as u8 as f64).powi(2))
        .sum::<f64>()
        / n)
}
