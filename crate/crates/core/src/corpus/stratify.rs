//! Equal-size, seeded group sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Category, ColorBucket, LogoRecord, ShapeBucket};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyBy {
    Category,
    Color,
    Shape,
    Hard60,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKey {
    Category(Category),
    Color(ColorBucket),
    Shape(ShapeBucket),
    Hard60(bool),
}

impl GroupKey {
    pub fn label(&self) -> String {
        match self {
            GroupKey::Category(c) => c.label().to_string(),
            GroupKey::Color(c) => c.label().to_string(),
            GroupKey::Shape(s) => s.label().to_string(),
            GroupKey::Hard60(true) => "Hard-60".to_string(),
            GroupKey::Hard60(false) => "Not Hard-60".to_string(),
        }
    }
}

impl StratifyBy {
    pub fn groups(self) -> Vec<GroupKey> {
        match self {
            StratifyBy::Category => Category::ALL.iter().map(|&c| GroupKey::Category(c)).collect(),
            StratifyBy::Color => ColorBucket::ALL.iter().map(|&c| GroupKey::Color(c)).collect(),
            StratifyBy::Shape => ShapeBucket::ALL.iter().map(|&s| GroupKey::Shape(s)).collect(),
            StratifyBy::Hard60 => vec![GroupKey::Hard60(true), GroupKey::Hard60(false)],
        }
    }

    fn key_of(self, r: &LogoRecord) -> Option<GroupKey> {
        match self {
            StratifyBy::Category => Some(GroupKey::Category(r.category)),
            StratifyBy::Color => r.color_bucket.map(GroupKey::Color),
            StratifyBy::Shape => r.shape_bucket.map(GroupKey::Shape),
            StratifyBy::Hard60 => Some(GroupKey::Hard60(r.hard60)),
        }
    }
}

/// Draw `per_group` records from every group of the family, uniformly without
/// replacement. Records missing the grouping bucket are ignored.
pub fn stratify(
    records: &[LogoRecord],
    by: StratifyBy,
    per_group: usize,
    seed: u64,
) -> Result<Vec<(GroupKey, Vec<LogoRecord>)>> {
    let groups = by.groups();
    let mut pools: Vec<Vec<&LogoRecord>> = vec![Vec::new(); groups.len()];
    for r in records {
        if let Some(k) = by.key_of(r) {
            let g = groups.iter().position(|g| *g == k).expect("key from family");
            pools[g].push(r);
        }
    }
    for (g, pool) in groups.iter().zip(&pools) {
        if pool.len() < per_group {
            return Err(Error::InsufficientGroup {
                group: g.label(),
                available: pool.len(),
                requested: per_group,
                shortfall: per_group - pool.len(),
            });
        }
    }
    Ok(groups
        .into_iter()
        .zip(pools)
        .map(|(g, pool)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "stratify", &g.label()));
            let picked = rand::seq::index::sample(&mut rng, pool.len(), per_group)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect();
            (g, picked)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn pool(counts: [usize; 6]) -> Vec<LogoRecord> {
        let mut out = Vec::new();
        for (ci, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(LogoRecord {
                    id: format!("c{ci}-{i}"),
                    image_path: PathBuf::from("x.png"),
                    category: Category::PureSymbol,
                    hard60: false,
                    gt_text: None,
                    color_bucket: Some(ColorBucket::ALL[ci]),
                    shape_bucket: None,
                    flags: vec![],
                });
            }
        }
        out
    }

    #[test]
    fn six_groups_of_fifty() {
        let recs = pool([60, 70, 80, 50, 90, 55]);
        let groups = stratify(&recs, StratifyBy::Color, 50, 9).unwrap();
        assert_eq!(groups.len(), 6);
        for (g, members) in &groups {
            assert_eq!(members.len(), 50);
            let GroupKey::Color(c) = g else { panic!() };
            assert!(members.iter().all(|m| m.color_bucket == Some(*c)));
            let mut ids: Vec<_> = members.iter().map(|m| &m.id).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 50);
        }
        assert_eq!(groups, stratify(&recs, StratifyBy::Color, 50, 9).unwrap());
        assert_ne!(groups, stratify(&recs, StratifyBy::Color, 50, 10).unwrap());
    }

    #[test]
    fn zero_per_group() {
        let groups = stratify(&pool([1, 0, 0, 0, 0, 0]), StratifyBy::Color, 0, 1).unwrap();
        assert_eq!(groups.len(), 6);
        assert!(groups.iter().all(|(_, m)| m.is_empty()));
    }

    #[test]
    fn shortfall_names_group() {
        let err = stratify(&pool([60, 60, 60, 60, 60, 10]), StratifyBy::Color, 50, 1).unwrap_err();
        match err {
            Error::InsufficientGroup { group, shortfall, .. } => {
                assert_eq!(group, "Green");
                assert_eq!(shortfall, 40);
            }
            other => panic!("{other:?}"),
        }
    }
}
