//! Choosing k by cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::fit::{fit_probe, unpack};
use super::{ablate_pooled, top_k, AblationMask, MaskOrigin, PooledFeature};
use crate::error::{Error, Result};

/// Relative slack when picking the smallest k close to the best.
pub const WITHIN_BEST: f64 = 0.01;
/// Below this best utility the curve is considered flat.
pub const STABILITY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub selected_k: usize,
    /// (k, mean held-out utility) in candidate order.
    pub utilities: Vec<(usize, f64)>,
    pub best_utility: f64,
    pub unstable: bool,
}

/// Utility of k: fit on the training part, zero the probe's top-k coordinates
/// and measure the mean drop in predicted hallucination probability over the
/// held-out positives. Averaged over folds that contain positives; picks the
/// smallest k whose utility is within 1% (relative) of the best.
pub fn cross_validate_k(features: &[PooledFeature], ks: &[usize], folds: usize, seed: u64, c: f64) -> Result<CvReport> {
    unpack(features)?;
    let d = features[0].z_bar.len();
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("candidate ks must be non-empty and strictly ascending".into()));
    }
    if ks[0] == 0 || *ks.last().expect("non-empty") > d {
        return Err(Error::InvalidArgument(format!("candidate ks must lie in 1..={d}")));
    }
    if folds < 2 || features.len() < 2 * folds {
        return Err(Error::InvalidArgument(format!(
            "{} samples are not enough for {folds}-fold cross-validation",
            features.len()
        )));
    }
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let mut sums = vec![0.0; ks.len()];
    let mut used = 0usize;
    for fold in 0..folds {
        let (mut train, mut held) = (Vec::new(), Vec::new());
        for (p, &i) in order.iter().enumerate() {
            if p % folds == fold {
                if features[i].label {
                    held.push(&features[i]);
                }
            } else {
                train.push(features[i].clone());
            }
        }
        if held.is_empty() {
            continue;
        }
        let probe = fit_probe(&train, c)?;
        let ranking = top_k(&probe.w, *ks.last().expect("non-empty"))?;
        let before: Vec<f64> = held.iter().map(|f| probe.predict_proba(&f.z_bar)).collect::<Result<_>>()?;
        for (slot, &k) in ks.iter().enumerate() {
            let mask = AblationMask::new(MaskOrigin::Probe, d, ranking[..k].to_vec(), None)?;
            let mut drop = 0.0;
            for (f, p) in held.iter().zip(&before) {
                drop += p - probe.predict_proba(&ablate_pooled(&f.z_bar, &mask)?)?;
            }
            sums[slot] += drop / held.len() as f64;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::SingleClass);
    }
    let utilities: Vec<(usize, f64)> = ks.iter().zip(&sums).map(|(&k, s)| (k, s / used as f64)).collect();
    let best = utilities.iter().map(|u| u.1).fold(f64::MIN, f64::max);
    let selected_k = utilities
        .iter()
        .find(|u| u.1 >= best - best.abs() * WITHIN_BEST)
        .expect("best is attained")
        .0;
    Ok(CvReport { selected_k, utilities, best_utility: best, unstable: best < STABILITY_MARGIN })
}
