//! Embedding-level diagnosis: pooling, the sparse probe, dimension selection,
//! ablation masks, metric deltas, k selection and PCA.

pub mod cv;
pub mod fit;
pub mod lemb;
pub mod pca;

use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

pub use cv::{cross_validate_k, CvReport};
pub use fit::{fit_probe, fit_probe_with, FitOptions, ProbeModel, DEFAULT_C};
pub use lemb::{EmbeddingMatrix, EmbeddingMeta};
pub use pca::{pca_2d, Pca2d};

/// Mean-pooled projector output for one logo, with its hallucination label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledFeature {
    pub logo_id: String,
    pub z_bar: Vec<f64>,
    pub label: bool,
}

/// Column means over all tokens, accumulated in f64.
pub fn pool(z: &EmbeddingMatrix) -> Vec<f64> {
    let d = z.d();
    let mut out = vec![0.0f64; d];
    for i in 0..z.n() {
        for (o, &v) in out.iter_mut().zip(z.row(i)) {
            *o += v as f64;
        }
    }
    let n = z.n() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Indices of the k largest scores, best first; ties go to the lower index.
fn argtop_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={}", scores.len())));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// The k coordinates with the largest |w|, best first.
pub fn top_k(w: &[f64], k: usize) -> Result<Vec<usize>> {
    let abs: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    argtop_k(&abs, k)
}

/// The k coordinates with the largest mean |activation| over every token of
/// every matrix, best first.
pub fn select_by_activation(embeddings: &[EmbeddingMatrix], k: usize) -> Result<Vec<usize>> {
    let first = embeddings.first().ok_or(Error::EmptyInput("select_by_activation"))?;
    let d = first.d();
    let mut sum = vec![0.0f64; d];
    let mut tokens = 0usize;
    for z in embeddings {
        if z.d() != d {
            return Err(Error::DimensionMismatch { expected: d, got: z.d() });
        }
        for i in 0..z.n() {
            for (s, &v) in sum.iter_mut().zip(z.row(i)) {
                *s += (v as f64).abs();
            }
        }
        tokens += z.n();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / tokens as f64).collect();
    argtop_k(&mean, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrigin {
    Probe,
    Activation,
    RandomPlacebo,
}

/// A set of embedding coordinates to zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationMask {
    pub origin: MaskOrigin,
    pub d: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub indices: Vec<usize>,
}

impl AblationMask {
    /// Sorts and checks the indices.
    pub fn new(origin: MaskOrigin, d: usize, mut indices: Vec<usize>, seed: Option<u64>) -> Result<Self> {
        indices.sort_unstable();
        if let Some(&i) = indices.iter().find(|&&i| i >= d) {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("mask indices must be unique".into()));
        }
        Ok(Self { origin, d, k: indices.len(), seed, indices })
    }

    pub fn validate(&self) -> Result<()> {
        let again = Self::new(self.origin, self.d, self.indices.clone(), self.seed)?;
        if again.indices != self.indices || self.k != self.indices.len() {
            return Err(Error::InvalidArgument("mask indices must be sorted and k must match".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }
}

/// Zero the masked columns in every token.
pub fn ablate(z: &EmbeddingMatrix, mask: &AblationMask) -> Result<EmbeddingMatrix> {
    if let Some(&i) = mask.indices.iter().find(|&&i| i >= z.d()) {
        return Err(Error::IndexOutOfRange { index: i, dim: z.d() });
    }
    let mut out = z.clone();
    let d = z.d();
    let vals = out.values_mut();
    for row in 0..z.n() {
        for &j in &mask.indices {
            vals[row * d + j] = 0.0;
        }
    }
    Ok(out)
}

/// Same masking applied to pooled vectors.
pub fn ablate_pooled(z: &[f64], mask: &AblationMask) -> Result<Vec<f64>> {
    let mut out = z.to_vec();
    for &j in &mask.indices {
        *out.get_mut(j).ok_or(Error::IndexOutOfRange { index: j, dim: z.len() })? = 0.0;
    }
    Ok(out)
}

/// k indices drawn uniformly without replacement from 0..d.
pub fn random_placebo(d: usize, k: usize, seed: u64) -> Result<AblationMask> {
    if k > d {
        return Err(Error::InvalidArgument(format!("placebo k = {k} exceeds d = {d}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, d, k).into_vec();
    AblationMask::new(MaskOrigin::RandomPlacebo, d, idx, Some(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// cond − base text accuracy.
    pub d_acc_text: Option<f64>,
    /// cond − base hallucination rate on pure-symbol logos.
    pub d_hall: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(b? - a?)
}

/// Signed metric changes from `base` to `cond`. Targeted ablation is expected
/// to give a negative hallucination delta with a small accuracy delta.
pub fn deltas(base: &MetricsReport, cond: &MetricsReport) -> Deltas {
    let mut warnings = Vec::new();
    if base.n != cond.n || base.population != cond.population {
        let w = format!(
            "population mismatch: base n={} ({}), condition n={} ({})",
            base.n,
            &base.population[..base.population.len().min(12)],
            cond.n,
            &cond.population[..cond.population.len().min(12)]
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    Deltas {
        d_acc_text: diff(base.acc_text, cond.acc_text),
        d_hall: diff(base.hall, cond.hall),
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(rows: &[Vec<f32>]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows("x", rows).unwrap()
    }

    #[test]
    fn pooling() {
        assert_eq!(pool(&m(&[vec![1.0, 3.0], vec![3.0, 5.0]])), vec![2.0, 4.0]);
        assert_eq!(pool(&m(&[vec![7.0, -1.0]])), vec![7.0, -1.0]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f32>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let p = pool(&m(&rows));
        for j in 0..4 {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j] as f64).collect();
            col.reverse();
            let oracle = col.iter().sum::<f64>() / 5.0;
            approx::assert_abs_diff_eq!(p[j], oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn top_k_examples() {
        let mut got = top_k(&[0.1, -0.9, 0.5], 2).unwrap();
        got.sort();
        assert_eq!(got, vec![1, 2]);
        assert_eq!(top_k(&[0.0; 4], 4).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(top_k(&[1.0, -1.0, 1.0], 2).unwrap(), vec![0, 1]);
        assert!(top_k(&[1.0], 0).is_err());
        assert!(top_k(&[1.0], 2).is_err());
    }

    #[test]
    fn activation_selection() {
        assert_eq!(select_by_activation(&[m(&[vec![0.0, 5.0], vec![0.0, 3.0]])], 1).unwrap(), vec![1]);
        assert_eq!(select_by_activation(&[m(&[vec![0.0; 5]])], 3).unwrap(), vec![0, 1, 2]);
        assert!(select_by_activation(&[], 1).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let batch: Vec<EmbeddingMatrix> = (0..3)
            .map(|_| m(&(0..4).map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect::<Vec<_>>()))
            .collect();
        // Brute force: score each column, then pick by repeated max.
        let mut score = vec![0.0f64; 6];
        for z in &batch {
            for i in 0..z.n() {
                for j in 0..6 {
                    score[j] += (z.row(i)[j] as f64).abs() / 12.0;
                }
            }
        }
        let mut left: Vec<usize> = (0..6).collect();
        let mut oracle = Vec::new();
        for _ in 0..3 {
            let (pos, _) = left
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |acc, (p, &j)| if score[j] > acc.1 { (p, score[j]) } else { acc });
            oracle.push(left.remove(pos));
        }
        assert_eq!(select_by_activation(&batch, 3).unwrap(), oracle);
    }

    #[test]
    fn ablation_examples() {
        let z = m(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let empty = AblationMask::new(MaskOrigin::Probe, 2, vec![], None).unwrap();
        assert_eq!(ablate(&z, &empty).unwrap(), z);
        let m0 = AblationMask::new(MaskOrigin::Probe, 2, vec![0], None).unwrap();
        assert_eq!(ablate(&z, &m0).unwrap().values(), &[0.0, 2.0, 0.0, 4.0]);
        let oob = AblationMask { origin: MaskOrigin::Probe, d: 5, k: 1, seed: None, indices: vec![3] };
        assert!(matches!(ablate(&z, &oob), Err(Error::IndexOutOfRange { .. })));
        assert!(AblationMask::new(MaskOrigin::Probe, 2, vec![1, 1], None).is_err());
    }

    #[test]
    fn placebo() {
        let full = random_placebo(7, 7, 3).unwrap();
        assert_eq!(full.indices, (0..7).collect::<Vec<_>>());
        assert_eq!(random_placebo(512, 32, 9).unwrap(), random_placebo(512, 32, 9).unwrap());
        assert_ne!(random_placebo(512, 32, 9).unwrap(), random_placebo(512, 32, 10).unwrap());
        assert!(random_placebo(3, 4, 0).is_err());
        assert_eq!(random_placebo(3, 2, 0).unwrap().origin, MaskOrigin::RandomPlacebo);
    }

    #[test]
    fn placebo_inclusion_frequency() {
        let (d, k, draws) = (20usize, 5usize, 10_000u64);
        let mut hits = vec![0usize; d];
        for s in 0..draws {
            for i in random_placebo(d, k, s).unwrap().indices {
                hits[i] += 1;
            }
        }
        let p = k as f64 / d as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - draws as f64 * p).abs() <= 3.0 * sd + 1.0, "{h}");
        }
    }

    #[test]
    fn mask_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mask.json");
        let mask = random_placebo(64, 8, 1).unwrap();
        mask.save(&p).unwrap();
        assert_eq!(AblationMask::load(&p).unwrap(), mask);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["origin"], "random_placebo");
        assert_eq!(v["k"], 8);
        std::fs::write(&p, r#"{"origin":"probe","d":4,"k":2,"indices":[3,1]}"#).unwrap();
        assert!(AblationMask::load(&p).is_err());
    }

    proptest! {
        #[test]
        fn ablate_is_idempotent_and_local(
            rows in proptest::collection::vec(proptest::collection::vec(-100.0f32..100.0, 6), 1..5),
            picks in proptest::collection::btree_set(0usize..6, 0..6),
        ) {
            let z = m(&rows);
            let mask = AblationMask::new(MaskOrigin::Probe, 6, picks.iter().copied().collect(), None).unwrap();
            let once = ablate(&z, &mask).unwrap();
            prop_assert_eq!(&ablate(&once, &mask).unwrap(), &once);
            for i in 0..z.n() {
                for j in 0..6 {
                    if picks.contains(&j) {
                        prop_assert_eq!(once.row(i)[j].to_bits(), 0.0f32.to_bits());
                    } else {
                        prop_assert_eq!(once.row(i)[j].to_bits(), z.row(i)[j].to_bits());
                    }
                }
            }
        }

        #[test]
        fn top_k_nested(w in proptest::collection::vec(-3i32..3, 2..30), k in 1usize..29) {
            let w: Vec<f64> = w.into_iter().map(f64::from).collect();
            prop_assume!(k < w.len());
            let a = top_k(&w, k).unwrap();
            let b = top_k(&w, k + 1).unwrap();
            prop_assert!(a.iter().all(|i| b.contains(i)));
            // full-sort oracle
            let mut order: Vec<usize> = (0..w.len()).collect();
            order.sort_by(|&x, &y| w[y].abs().partial_cmp(&w[x].abs()).unwrap().then(x.cmp(&y)));
            prop_assert_eq!(a, order[..k].to_vec());
        }
    }
}
