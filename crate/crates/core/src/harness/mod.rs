//! Run configuration, artifact provenance and the stage runner.

mod diagnose;
mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ShareMode;
use crate::perturb::{PerturbationKind, RotationProfile};
use crate::querent::protocol::{prompt_text, DEFAULT_PROMPT_ID};
use crate::querent::ModelEndpoint;
use crate::seed::{derive_seed, digest_hex};
use crate::synth::{Noise, ABLATION_BIAS, ABLATION_NORM};

pub use diagnose::{
    diagnose, load_features, run_probe_stage, run_synth_check, CheckLine, ConditionDeltas, Diagnosis, ProbeOutcome,
    ProxyDeltas, SynthCheck,
};
pub use stages::{
    curate, perturb_corpus, predict_base, predict_perturbed, run_bias_stage, run_perturb_stage, score_predictions,
    PerturbLogLine, ScoreOutput,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Bias,
    Perturb,
    Probe,
    SynthCheck,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Bias => "bias",
            Stage::Perturb => "perturb",
            Stage::Probe => "probe",
            Stage::SynthCheck => "synth-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    /// Directory of `<logo_id>.lemb` files.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    /// JSONL of `{logo_id, label}`. When absent, labels come from the base
    /// predictions of `label_model` on pure-symbol logos.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub label_model: Option<String>,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Fixed mask size; cross-validated over `ks` when absent.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Prediction files recorded under base / targeted / placebo conditions.
    #[serde(default)]
    pub condition_predictions: Vec<PathBuf>,
}

fn default_c() -> f64 {
    crate::probe::DEFAULT_C
}
fn default_ks() -> Vec<usize> {
    vec![8, 16, 32, 64, 128]
}
fn default_folds() -> usize {
    5
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            embeddings: None,
            labels: None,
            label_model: None,
            c: default_c(),
            k: None,
            ks: default_ks(),
            folds: default_folds(),
            condition_predictions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_norm")]
    pub signal_norm: f64,
    #[serde(default = "default_bias")]
    pub bias: f64,
    /// Training samples written as embeddings.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_noise")]
    pub noise: Noise,
    #[serde(default = "default_s")]
    pub k: usize,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Monte-Carlo samples for the oracle ablation effect.
    #[serde(default = "default_eval")]
    pub eval_samples: usize,
    /// Samples per calibration condition (half train, half test).
    #[serde(default = "default_cal")]
    pub calibration_samples: usize,
}

fn default_d() -> usize {
    512
}
fn default_s() -> usize {
    32
}
fn default_norm() -> f64 {
    ABLATION_NORM
}
fn default_bias() -> f64 {
    ABLATION_BIAS
}
fn default_m() -> usize {
    5000
}
fn default_noise() -> Noise {
    Noise::Gaussian
}
fn default_eval() -> usize {
    20_000
}
fn default_cal() -> usize {
    4000
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            d: default_d(),
            s: default_s(),
            signal_norm: default_norm(),
            bias: default_bias(),
            m: default_m(),
            noise: default_noise(),
            k: default_s(),
            c: default_c(),
            eval_samples: default_eval(),
            calibration_samples: default_cal(),
        }
    }
}

fn default_prompt() -> String {
    DEFAULT_PROMPT_ID.to_string()
}
fn default_kinds() -> Vec<PerturbationKind> {
    PerturbationKind::ALL.to_vec()
}

/// Everything a run needs. Relative paths are resolved against the config
/// file's directory by [`RunConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub outdir: PathBuf,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub endpoints: Vec<ModelEndpoint>,
    #[serde(default)]
    pub rotation: RotationProfile,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<PerturbationKind>,
    #[serde(default = "default_prompt")]
    pub prompt_id: String,
    /// Root seed; every other seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub share_mode: ShareMode,
    /// Extra brand names for the free-form reply fallback.
    #[serde(default)]
    pub lexicon: Vec<String>,
    #[serde(default)]
    pub probe: ProbeSettings,
    #[serde(default)]
    pub synth: SynthSettings,
}

impl RunConfig {
    pub fn new(outdir: impl Into<PathBuf>) -> Self {
        Self {
            outdir: outdir.into(),
            manifest: None,
            endpoints: Vec::new(),
            rotation: RotationProfile::default(),
            kinds: default_kinds(),
            prompt_id: default_prompt(),
            seed: 0,
            stages: Vec::new(),
            share_mode: ShareMode::default(),
            lexicon: Vec::new(),
            probe: ProbeSettings::default(),
            synth: SynthSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse, resolve relative paths against the file's directory and validate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.outdir);
        for p in self.manifest.iter_mut() {
            fix(p);
        }
        for p in self.probe.embeddings.iter_mut().chain(self.probe.labels.iter_mut()) {
            fix(p);
        }
        for p in &mut self.probe.condition_predictions {
            fix(p);
        }
    }

    pub fn has_stage(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }

    /// Stage-aware checks; referenced inputs must exist.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if prompt_text(&self.prompt_id).is_none() {
            return cfg(format!("unknown prompt_id {:?}", self.prompt_id));
        }
        let needs_models = self.has_stage(Stage::Bias) || self.has_stage(Stage::Perturb);
        if needs_models {
            match &self.manifest {
                None => return cfg("bias and perturb stages need a manifest".into()),
                Some(m) if !m.is_file() => return cfg(format!("manifest {} does not exist", m.display())),
                _ => {}
            }
            if self.endpoints.is_empty() {
                return cfg("bias and perturb stages need at least one endpoint".into());
            }
        }
        let mut ids = std::collections::HashSet::new();
        for ep in &self.endpoints {
            ep.validate()?;
            if !ids.insert(ep.model_id.as_str()) {
                return cfg(format!("duplicate endpoint model_id {:?}", ep.model_id));
            }
            if let crate::querent::TransportConfig::Mock(m) = &ep.transport {
                m.validate().map_err(|e| Error::Config(format!("{}: {e}", ep.model_id)))?;
            }
        }
        if self.kinds.is_empty() && self.has_stage(Stage::Perturb) {
            return cfg("perturb stage needs at least one perturbation kind".into());
        }
        if self.has_stage(Stage::Probe) {
            let p = &self.probe;
            match &p.embeddings {
                None => return cfg("probe stage needs probe.embeddings".into()),
                Some(d) if !d.is_dir() => return cfg(format!("embedding directory {} does not exist", d.display())),
                _ => {}
            }
            if let Some(l) = &p.labels {
                if !l.is_file() {
                    return cfg(format!("label file {} does not exist", l.display()));
                }
            } else if p.label_model.is_none() {
                return cfg("probe stage needs probe.labels or probe.label_model".into());
            }
            for f in &p.condition_predictions {
                if !f.is_file() {
                    return cfg(format!("prediction file {} does not exist", f.display()));
                }
            }
        }
        if !(self.probe.c > 0.0) || !(self.synth.c > 0.0) {
            return cfg("C must be positive".into());
        }
        let s = &self.synth;
        if s.s == 0 || s.s > s.d || s.k > s.d {
            return cfg(format!("synth needs 1 <= s <= d and k <= d (d={}, s={}, k={})", s.d, s.s, s.k));
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form of the config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        digest_hex([json.as_slice()])
    }

    /// Every seed a run derives, keyed by use.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        m.insert("root".to_string(), self.seed);
        for (name, domain) in SEED_DOMAINS {
            m.insert(name.to_string(), derive_seed(self.seed, domain, ""));
        }
        m
    }

    pub fn derived_seed(&self, name: &str) -> u64 {
        let domain = SEED_DOMAINS.iter().find(|(n, _)| *n == name).expect("known seed name").1;
        derive_seed(self.seed, domain, "")
    }

    pub fn provenance(&self, stage: &str) -> Provenance {
        Provenance {
            stage: stage.to_string(),
            config_digest: self.digest(),
            seeds: self.seeds(),
            version: VERSION.to_string(),
        }
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.outdir.join(stage)
    }
}

const SEED_DOMAINS: [(&str, &str); 4] = [
    ("cv", "harness/cv"),
    ("placebo", "harness/placebo"),
    ("synth_world", "harness/synth-world"),
    ("stratify", "harness/stratify"),
];

/// Stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub version: String,
}

impl Provenance {
    fn one_line(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!(
            "stage={} config={} seeds[{}] logoscope={}",
            self.stage,
            self.config_digest,
            seeds.join(","),
            self.version
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub data: T,
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json_artifact<T: Serialize>(path: &Path, provenance: &Provenance, data: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        provenance: &'a Provenance,
        data: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Out { provenance, data })?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json_artifact<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Artifact<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// CSV with a leading `#` provenance line.
pub fn write_csv_artifact(path: &Path, provenance: &Provenance, body: &str) -> Result<()> {
    write_bytes(path, format!("# {}\n{body}", provenance.one_line()).as_bytes())
}

/// Markdown with a trailing HTML-comment provenance line.
pub fn write_markdown_artifact(path: &Path, provenance: &Provenance, body: &str) -> Result<()> {
    write_bytes(path, format!("{body}\n<!-- {} -->\n", provenance.one_line()).as_bytes())
}

/// File-name-safe form of a model id.
pub fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub stages: Vec<Stage>,
    pub notices: Vec<String>,
    /// Set when synth-check ran.
    pub synth_passed: Option<bool>,
}

/// Run the selected stages in pipeline order.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut summary = RunSummary::default();
    let mut stages = cfg.stages.clone();
    stages.sort();
    stages.dedup();
    if stages.is_empty() {
        let msg = "no stages selected; nothing to do".to_string();
        log::warn!("{msg}");
        summary.notices.push(msg);
        return Ok(summary);
    }
    for stage in stages {
        log::info!("running {} stage", stage.name());
        match stage {
            Stage::Bias => {
                run_bias_stage(cfg)?;
            }
            Stage::Perturb => {
                run_perturb_stage(cfg)?;
            }
            Stage::Probe => {
                run_probe_stage(cfg)?;
            }
            Stage::SynthCheck => {
                let check = run_synth_check(cfg)?;
                if !check.passed() {
                    summary.notices.push("synth-check failed one or more oracle checks".into());
                }
                summary.synth_passed = Some(check.passed());
            }
        }
        summary.stages.push(stage);
    }
    Ok(summary)
}
