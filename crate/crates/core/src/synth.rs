//! Synthetic pooled embeddings with a planted sparse hallucination direction.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::calibration::{reliability_curve, CalibrationReport};
use crate::probe::{ablate_pooled, fit_probe, AblationMask, EmbeddingMatrix, EmbeddingMeta, PooledFeature};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian,
    /// Student-t rescaled to unit variance.
    StudentT { df: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedWorld {
    pub d: usize,
    /// Sorted planted coordinates.
    pub support: Vec<usize>,
    pub w_star: Vec<f64>,
    pub b_star: f64,
    pub noise: Noise,
    pub seed: u64,
}

/// Balanced world whose Bayes accuracy sits near 0.91.
pub const RECOVERY_NORM: f64 = 6.0;
pub const RECOVERY_BIAS: f64 = 0.0;
/// Negative-leaning world with a large gap between mean σ(η) and σ(b*).
pub const ABLATION_NORM: f64 = 10.0;
pub const ABLATION_BIAS: f64 = -3.0;

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl PlantedWorld {
    /// Random support of size `s`; equal-magnitude weights with random signs
    /// and Euclidean norm `signal_norm`.
    pub fn new(d: usize, s: usize, signal_norm: f64, b_star: f64, seed: u64) -> Result<Self> {
        if s == 0 || s > d {
            return Err(Error::InvalidArgument(format!("support size {s} must be in 1..={d}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth/world", ""));
        let mut support = rand::seq::index::sample(&mut rng, d, s).into_vec();
        support.sort_unstable();
        let a = signal_norm / (s as f64).sqrt();
        let mut w_star = vec![0.0; d];
        for &j in &support {
            w_star[j] = if rng.gen_bool(0.5) { a } else { -a };
        }
        Ok(Self { d, support, w_star, b_star, noise: Noise::Gaussian, seed })
    }

    /// d = 512, s = 32, balanced labels.
    pub fn recovery_preset(seed: u64) -> Self {
        Self::new(512, 32, RECOVERY_NORM, RECOVERY_BIAS, seed).expect("valid preset")
    }

    /// d = 512, s = 32, mostly negative labels.
    pub fn ablation_preset(seed: u64) -> Self {
        Self::new(512, 32, ABLATION_NORM, ABLATION_BIAS, seed).expect("valid preset")
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    pub fn s(&self) -> usize {
        self.support.len()
    }

    pub fn logit(&self, z: &[f64]) -> f64 {
        self.b_star + self.support.iter().map(|&j| self.w_star[j] * z[j]).sum::<f64>()
    }

    pub fn prob(&self, z: &[f64]) -> f64 {
        sigmoid(self.logit(z))
    }

    fn draw_z(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self.noise {
            Noise::Gaussian => (0..self.d).map(|_| StandardNormal.sample(rng)).collect(),
            Noise::StudentT { df } => {
                let t = StudentT::new(df).expect("df > 0");
                let scale = ((df - 2.0) / df).sqrt();
                (0..self.d).map(|_| t.sample(rng) * scale).collect()
            }
        }
    }

    fn stream(&self, domain: &str, m: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, domain, &m.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_star.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: self.w_star.len() });
        }
        if self.support.is_empty() || self.support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("support must be non-empty, sorted and unique".into()));
        }
        if let Some(&j) = self.support.iter().find(|&&j| j >= self.d) {
            return Err(Error::IndexOutOfRange { index: j, dim: self.d });
        }
        if let Some(j) = (0..self.d).find(|j| self.w_star[*j] != 0.0 && self.support.binary_search(j).is_err()) {
            return Err(Error::InvalidArgument(format!("w* is nonzero off the support at {j}")));
        }
        if let Noise::StudentT { df } = self.noise {
            if !(df > 2.0) {
                return Err(Error::InvalidArgument("Student-t df must exceed 2".into()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let w: Self = serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        w.validate()?;
        Ok(w)
    }
}

/// M labeled samples: z ~ noise, y ~ Bernoulli(σ(w*ᵀz + b*)).
pub fn generate(world: &PlantedWorld, m: usize) -> Vec<PooledFeature> {
    let mut rng = world.stream("synth/samples", m);
    (0..m)
        .map(|i| {
            let z = world.draw_z(&mut rng);
            let label = rng.gen::<f64>() < world.prob(&z);
            PooledFeature { logo_id: format!("synth-{i:06}"), z_bar: z, label }
        })
        .collect()
}

/// Accuracy of the generating model's own decisions, averaged over fresh samples.
pub fn bayes_accuracy(world: &PlantedWorld, m: usize) -> f64 {
    let mut rng = world.stream("synth/bayes", m);
    (0..m)
        .map(|_| {
            let p = world.prob(&world.draw_z(&mut rng));
            p.max(1.0 - p)
        })
        .sum::<f64>()
        / m as f64
}

/// |selected ∩ S| / |S|.
pub fn recovery_score(selected: &[usize], world: &PlantedWorld) -> f64 {
    let mut sel: Vec<usize> = selected.to_vec();
    sel.sort_unstable();
    sel.dedup();
    let hit = sel.iter().filter(|j| world.support.binary_search(j).is_ok()).count();
    hit as f64 / world.s() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationEffect {
    /// Mean σ(w*ᵀz + b*) on unmasked samples.
    pub before: f64,
    /// Same samples with the masked coordinates zeroed.
    pub after: f64,
}

impl AblationEffect {
    pub fn delta(&self) -> f64 {
        self.after - self.before
    }
}

pub fn simulate_ablation_effect(world: &PlantedWorld, mask: &AblationMask, m: usize) -> Result<AblationEffect> {
    if mask.d != world.d {
        return Err(Error::DimensionMismatch { expected: world.d, got: mask.d });
    }
    if m == 0 {
        return Err(Error::EmptyInput("simulate_ablation_effect"));
    }
    let mut rng = world.stream("synth/ablation", m);
    let (mut before, mut after) = (0.0, 0.0);
    for _ in 0..m {
        let z = world.draw_z(&mut rng);
        before += world.prob(&z);
        after += world.prob(&ablate_pooled(&z, mask)?);
    }
    Ok(AblationEffect { before: before / m as f64, after: after / m as f64 })
}

/// Calibration of a probe refit under one masking condition. The same fresh
/// samples and uniforms are used for every condition: features are masked,
/// labels come from the masked generating model, the probe is fit on the first
/// half and scored on the second.
pub fn condition_calibration(
    world: &PlantedWorld,
    mask: Option<&AblationMask>,
    m: usize,
    c: f64,
    bins: usize,
) -> Result<CalibrationReport> {
    if m < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 samples, got {m}")));
    }
    let mut rng = world.stream("synth/calibration", m);
    let mut data = Vec::with_capacity(m);
    for i in 0..m {
        let mut z = world.draw_z(&mut rng);
        let u: f64 = rng.gen();
        if let Some(mask) = mask {
            z = ablate_pooled(&z, mask)?;
        }
        let label = u < world.prob(&z);
        data.push(PooledFeature { logo_id: format!("cal-{i:06}"), z_bar: z, label });
    }
    let (train, test) = data.split_at(m / 2);
    let probe = fit_probe(train, c)?;
    let probs: Vec<f64> = test.iter().map(|f| probe.predict_proba(&f.z_bar)).collect::<Result<_>>()?;
    let labels: Vec<bool> = test.iter().map(|f| f.label).collect();
    reliability_curve(&probs, &labels, bins)
}

#[derive(Serialize)]
struct LabelLine<'a> {
    logo_id: &'a str,
    label: bool,
}

/// One N=1 LEMB file per sample plus `labels.jsonl` and `world.json`.
pub fn write_embeddings(dir: impl AsRef<Path>, world: &PlantedWorld, features: &[PooledFeature]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut labels = String::new();
    for f in features {
        let meta = EmbeddingMeta {
            logo_id: f.logo_id.clone(),
            source_model: "synth".into(),
            layer_tag: "planted".into(),
            extra: Default::default(),
        };
        let z: Vec<f32> = f.z_bar.iter().map(|&v| v as f32).collect();
        EmbeddingMatrix::new(meta, 1, world.d, z)?.write(dir.join(format!("{}.lemb", f.logo_id)))?;
        labels.push_str(&serde_json::to_string(&LabelLine { logo_id: &f.logo_id, label: f.label })?);
        labels.push('\n');
    }
    let lp = dir.join("labels.jsonl");
    std::fs::write(&lp, labels).map_err(|e| Error::io(&lp, e))?;
    world.save(dir.join("world.json"))
}
