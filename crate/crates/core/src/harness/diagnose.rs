//! Probe stage and the planted-world self check.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{slug, write_csv_artifact, write_json_artifact, ProbeSettings, RunConfig};
use crate::corpus::{load_manifest, Category};
use crate::error::{Error, Result};
use crate::metrics::calibration::{reliability_curve, CalibrationReport};
use crate::metrics::render::calibration_csv;
use crate::metrics::{join, metrics_report, MetricsReport};
use crate::probe::{
    ablate_pooled, cross_validate_k, deltas, fit_probe, pca_2d, pool, random_placebo, top_k, AblationMask, CvReport,
    Deltas, EmbeddingMatrix, MaskOrigin, Pca2d, PooledFeature, ProbeModel,
};
use crate::querent::{read_predictions, Condition, PredictionRecord};
use crate::synth::{
    bayes_accuracy, condition_calibration, generate, recovery_score, simulate_ablation_effect, write_embeddings,
    AblationEffect, Noise, PlantedWorld,
};

const BINS: usize = 10;

#[derive(Deserialize)]
struct LabelLine {
    logo_id: String,
    label: bool,
}

fn read_labels(path: &Path) -> Result<HashMap<String, bool>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: LabelLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(l.logo_id, l.label);
    }
    Ok(out)
}

/// Hallucination labels from a model's unperturbed base predictions on
/// pure-symbol logos.
fn labels_from_predictions(manifest: &Path, preds: &Path) -> Result<HashMap<String, bool>> {
    let logos = load_manifest(manifest)?;
    let symbol: std::collections::HashSet<&str> = logos
        .iter()
        .filter(|l| l.category == Category::PureSymbol)
        .map(|l| l.id.as_str())
        .collect();
    Ok(read_predictions(preds)?
        .into_iter()
        .filter(|p| p.perturbation.is_none() && p.condition == Condition::Base && symbol.contains(p.logo_id.as_str()))
        .map(|p| (p.logo_id, p.y_hat == 1))
        .collect())
}

/// Pool every `.lemb` file in `dir` (sorted by file name) and attach labels.
/// Files without a label are skipped; labels without a file are an error.
/// Also returns the mean |activation| per coordinate over all tokens.
pub fn load_features(dir: &Path, labels: &HashMap<String, bool>) -> Result<(Vec<PooledFeature>, Vec<f64>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lemb"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Embedding { path: dir.to_path_buf(), message: "no .lemb files".into() });
    }
    let mut features = Vec::new();
    let mut abs_sum: Vec<f64> = Vec::new();
    let mut tokens = 0usize;
    let mut skipped = 0usize;
    for f in &files {
        let m = EmbeddingMatrix::read(f)?;
        if abs_sum.is_empty() {
            abs_sum = vec![0.0; m.d()];
        }
        if m.d() != abs_sum.len() {
            return Err(Error::DimensionMismatch { expected: abs_sum.len(), got: m.d() });
        }
        let Some(&label) = labels.get(m.logo_id()) else {
            skipped += 1;
            continue;
        };
        for i in 0..m.n() {
            for (s, &v) in abs_sum.iter_mut().zip(m.row(i)) {
                *s += (v as f64).abs();
            }
        }
        tokens += m.n();
        features.push(PooledFeature { logo_id: m.logo_id().to_string(), z_bar: pool(&m), label });
    }
    if skipped > 0 {
        log::warn!("{skipped} embedding files have no label and were skipped");
    }
    if features.len() < labels.len() {
        let have: std::collections::HashSet<&str> = features.iter().map(|f| f.logo_id.as_str()).collect();
        let mut missing: Vec<&str> = labels.keys().map(String::as_str).filter(|id| !have.contains(id)).collect();
        missing.sort_unstable();
        return Err(Error::Embedding {
            path: dir.to_path_buf(),
            message: format!("{} labeled logos have no embeddings, first: {}", missing.len(), missing[0]),
        });
    }
    let mean_abs = abs_sum.iter().map(|s| s / tokens.max(1) as f64).collect();
    Ok((features, mean_abs))
}

/// Mean probe-predicted hallucination probability under each mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyDeltas {
    pub base: f64,
    pub targeted: f64,
    pub placebo: f64,
}

impl ProxyDeltas {
    pub fn d_targeted(&self) -> f64 {
        self.targeted - self.base
    }

    pub fn d_placebo(&self) -> f64 {
        self.placebo - self.base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub n: usize,
    pub positives: usize,
    pub d: usize,
    pub nnz: usize,
    pub converged: bool,
    pub cv: Option<CvReport>,
    pub k: usize,
    pub targeted: AblationMask,
    pub placebo: AblationMask,
    pub proxy: ProxyDeltas,
    pub pca_explained_ratio: [f64; 2],
    #[serde(skip)]
    pub probe: Option<ProbeModel>,
    #[serde(skip)]
    pub pca: Option<Pca2d>,
}

fn mean_prob(probe: &ProbeModel, features: &[PooledFeature], mask: &AblationMask) -> Result<f64> {
    let mut s = 0.0;
    for f in features {
        s += probe.predict_proba(&ablate_pooled(&f.z_bar, mask)?)?;
    }
    Ok(s / features.len() as f64)
}

/// Fit the probe, choose k, build targeted and placebo masks and score them
/// with the probe itself. Falls back to the highest mean-|activation|
/// coordinates when the probe keeps no weights.
pub fn diagnose(
    features: &[PooledFeature],
    mean_abs_activation: &[f64],
    settings: &ProbeSettings,
    cv_seed: u64,
    placebo_seed: u64,
) -> Result<Diagnosis> {
    let probe = fit_probe(features, settings.c)?;
    let d = probe.d;
    let cv = match settings.k {
        Some(_) => None,
        None => Some(cross_validate_k(features, &settings.ks, settings.folds, cv_seed, settings.c)?),
    };
    let k = settings.k.or(cv.as_ref().map(|c| c.selected_k)).expect("k or cv");
    if k > d {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds d = {d}")));
    }
    let targeted = if k == 0 {
        AblationMask::new(MaskOrigin::Probe, d, vec![], None)?
    } else if probe.nnz() == 0 {
        log::warn!("probe kept no weights; using activation-magnitude selection");
        AblationMask::new(MaskOrigin::Activation, d, top_k(mean_abs_activation, k)?, None)?
    } else {
        AblationMask::new(MaskOrigin::Probe, d, top_k(&probe.w, k)?, None)?
    };
    let placebo = random_placebo(d, k, placebo_seed)?;
    let none = AblationMask::new(MaskOrigin::Probe, d, vec![], None)?;
    let proxy = ProxyDeltas {
        base: mean_prob(&probe, features, &none)?,
        targeted: mean_prob(&probe, features, &targeted)?,
        placebo: mean_prob(&probe, features, &placebo)?,
    };
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.z_bar.clone()).collect();
    let pca = pca_2d(&points)?;
    Ok(Diagnosis {
        n: features.len(),
        positives: features.iter().filter(|f| f.label).count(),
        d,
        nnz: probe.nnz(),
        converged: probe.converged,
        cv,
        k,
        targeted,
        placebo,
        proxy,
        pca_explained_ratio: pca.explained_ratio,
        probe: Some(probe),
        pca: Some(pca),
    })
}

fn pca_csv(features: &[PooledFeature], pca: &Pca2d) -> String {
    let mut s = String::from("logo_id,label,pc1,pc2\n");
    for (f, c) in features.iter().zip(&pca.coords) {
        s.push_str(&format!("{},{},{:.6},{:.6}\n", f.logo_id, f.label as u8, c[0], c[1]));
    }
    s
}

fn write_diagnosis(cfg: &RunConfig, dir: &Path, stage: &str, features: &[PooledFeature], diag: &Diagnosis) -> Result<()> {
    let prov = cfg.provenance(stage);
    let probe = diag.probe.as_ref().expect("fitted probe");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    probe.save(dir.join("probe.json"))?;
    diag.targeted.save(dir.join("mask_targeted.json"))?;
    diag.placebo.save(dir.join("mask_placebo.json"))?;
    write_json_artifact(&dir.join("diagnosis.json"), &prov, diag)?;
    write_csv_artifact(&dir.join("pca.csv"), &prov, &pca_csv(features, diag.pca.as_ref().expect("pca")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionDeltas {
    pub model_id: String,
    pub targeted: Option<Deltas>,
    pub placebo: Option<Deltas>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub diagnosis: Diagnosis,
    pub deltas: Vec<ConditionDeltas>,
    pub calibration: Vec<(String, CalibrationReport)>,
}

/// Metric deltas and calibration from predictions recorded under each
/// ablation condition. Only unperturbed records are used.
fn condition_reports(
    manifest: &Path,
    files: &[PathBuf],
    cfg: &RunConfig,
) -> Result<(Vec<ConditionDeltas>, Vec<(String, CalibrationReport)>)> {
    let logos = load_manifest(manifest)?;
    let mut preds: Vec<PredictionRecord> = Vec::new();
    for f in files {
        preds.extend(read_predictions(f)?.into_iter().filter(|p| p.perturbation.is_none()));
    }
    let mut models: Vec<String> = Vec::new();
    for p in &preds {
        if !models.contains(&p.model_id) {
            models.push(p.model_id.clone());
        }
    }
    let symbol: std::collections::HashSet<&str> = logos
        .iter()
        .filter(|l| l.category == Category::PureSymbol)
        .map(|l| l.id.as_str())
        .collect();
    let mut out = Vec::new();
    let mut curves = Vec::new();
    for model in models {
        let report = |c: Condition| -> Result<Option<MetricsReport>> {
            let sel: Vec<PredictionRecord> =
                preds.iter().filter(|p| p.model_id == model && p.condition == c).cloned().collect();
            if sel.is_empty() {
                return Ok(None);
            }
            Ok(Some(metrics_report(&model, &join(&logos, &sel)?, cfg.share_mode)?))
        };
        let base = report(Condition::Base)?;
        let targeted = report(Condition::Targeted)?;
        let placebo = report(Condition::Placebo)?;
        if let Some(b) = &base {
            out.push(ConditionDeltas {
                model_id: model.clone(),
                targeted: targeted.as_ref().map(|t| deltas(b, t)),
                placebo: placebo.as_ref().map(|p| deltas(b, p)),
            });
        }
        for (name, c) in [("base", Condition::Base), ("targeted", Condition::Targeted), ("placebo", Condition::Placebo)] {
            let (probs, labels): (Vec<f64>, Vec<bool>) = preds
                .iter()
                .filter(|p| p.model_id == model && p.condition == c && symbol.contains(p.logo_id.as_str()))
                .filter_map(|p| p.prob.map(|q| (q, p.y_hat == 1)))
                .unzip();
            if !probs.is_empty() {
                curves.push((format!("{model}/{name}"), reliability_curve(&probs, &labels, BINS)?));
            }
        }
    }
    Ok((out, curves))
}

/// Pool embeddings, fit the probe, choose k, write masks, PCA data, and
/// (when condition predictions are configured) metric deltas and calibration.
pub fn run_probe_stage(cfg: &RunConfig) -> Result<ProbeOutcome> {
    let inner = || -> Result<ProbeOutcome> {
        let p = &cfg.probe;
        let emb = p.embeddings.as_ref().ok_or_else(|| Error::Config("probe.embeddings is not set".into()))?;
        let labels = match (&p.labels, &p.label_model) {
            (Some(l), _) => read_labels(l)?,
            (None, Some(model)) => {
                let manifest = cfg.manifest.as_ref().ok_or_else(|| Error::Config("label_model needs a manifest".into()))?;
                let preds = cfg.stage_dir("bias").join(format!("{}.predictions.jsonl", slug(model)));
                labels_from_predictions(manifest, &preds)?
            }
            (None, None) => return Err(Error::Config("probe needs labels or label_model".into())),
        };
        let (features, mean_abs) = load_features(emb, &labels)?;
        let diag = diagnose(&features, &mean_abs, p, cfg.derived_seed("cv"), cfg.derived_seed("placebo"))?;
        let dir = cfg.stage_dir("probe");
        write_diagnosis(cfg, &dir, "probe", &features, &diag)?;
        let (deltas, calibration) = if p.condition_predictions.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let manifest = cfg
                .manifest
                .as_ref()
                .ok_or_else(|| Error::Config("condition predictions need a manifest".into()))?;
            condition_reports(manifest, &p.condition_predictions, cfg)?
        };
        let prov = cfg.provenance("probe");
        if !deltas.is_empty() {
            write_json_artifact(&dir.join("deltas.json"), &prov, &deltas)?;
        }
        if !calibration.is_empty() {
            write_csv_artifact(&dir.join("calibration.csv"), &prov, &calibration_csv(&calibration))?;
        }
        Ok(ProbeOutcome { diagnosis: diag, deltas, calibration })
    };
    inner().map_err(|e| e.in_stage("probe"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCheck {
    pub d: usize,
    pub s: usize,
    pub signal_norm: f64,
    pub bias: f64,
    pub noise: Noise,
    pub world_seed: u64,
    pub m: usize,
    pub k: usize,
    pub bayes_accuracy: f64,
    pub recovery: f64,
    pub targeted: AblationEffect,
    pub placebo: AblationEffect,
    pub proxy: ProxyDeltas,
    pub calibration: Vec<(String, CalibrationReport)>,
    pub checks: Vec<CheckLine>,
}

impl SynthCheck {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Generate a planted world, push it through the embedding files and the
/// probe pipeline, and score the result against the generating model.
pub fn run_synth_check(cfg: &RunConfig) -> Result<SynthCheck> {
    let inner = || -> Result<SynthCheck> {
        let st = &cfg.synth;
        let world_seed = cfg.derived_seed("synth_world");
        let world = PlantedWorld::new(st.d, st.s, st.signal_norm, st.bias, world_seed)?.with_noise(st.noise);
        world.validate()?;
        let dir = cfg.stage_dir("synth-check");
        let emb = dir.join("embeddings");
        if emb.exists() {
            std::fs::remove_dir_all(&emb).map_err(|e| Error::io(&emb, e))?;
        }
        write_embeddings(&emb, &world, &generate(&world, st.m))?;

        let labels = read_labels(&emb.join("labels.jsonl"))?;
        let (features, mean_abs) = load_features(&emb, &labels)?;
        let settings = ProbeSettings { c: st.c, k: Some(st.k), ..ProbeSettings::default() };
        let diag = diagnose(&features, &mean_abs, &settings, cfg.derived_seed("cv"), cfg.derived_seed("placebo"))?;
        write_diagnosis(cfg, &dir, "synth-check", &features, &diag)?;

        let recovery = recovery_score(&diag.targeted.indices, &world);
        let targeted = simulate_ablation_effect(&world, &diag.targeted, st.eval_samples)?;
        let placebo = simulate_ablation_effect(&world, &diag.placebo, st.eval_samples)?;
        let calibration = vec![
            ("base".to_string(), condition_calibration(&world, None, st.calibration_samples, st.c, BINS)?),
            ("targeted".to_string(), condition_calibration(&world, Some(&diag.targeted), st.calibration_samples, st.c, BINS)?),
            ("placebo".to_string(), condition_calibration(&world, Some(&diag.placebo), st.calibration_samples, st.c, BINS)?),
        ];
        let line = |name: &str, value: f64, bound: &str, passed: bool| CheckLine {
            name: name.into(),
            value,
            bound: bound.into(),
            passed,
        };
        let checks = vec![
            line("recovery", recovery, ">= 0.9", recovery >= 0.9),
            line("targeted_delta", targeted.delta(), "<= -0.25", targeted.delta() <= -0.25),
            line("placebo_delta", placebo.delta(), "|.| <= 0.02", placebo.delta().abs() <= 0.02),
            line(
                "targeted_ece_change",
                calibration[1].1.ece - calibration[0].1.ece,
                "< 0",
                calibration[1].1.ece < calibration[0].1.ece,
            ),
        ];
        let check = SynthCheck {
            d: st.d,
            s: st.s,
            signal_norm: st.signal_norm,
            bias: st.bias,
            noise: st.noise,
            world_seed,
            m: st.m,
            k: diag.k,
            bayes_accuracy: bayes_accuracy(&world, st.eval_samples),
            recovery,
            targeted,
            placebo,
            proxy: diag.proxy.clone(),
            calibration,
            checks,
        };
        let prov = cfg.provenance("synth-check");
        write_json_artifact(&dir.join("report.json"), &prov, &check)?;
        write_csv_artifact(&dir.join("calibration.csv"), &prov, &calibration_csv(&check.calibration))?;
        for c in &check.checks {
            log::info!("synth-check {}: {:.4} ({}) {}", c.name, c.value, c.bound, if c.passed { "ok" } else { "FAIL" });
        }
        Ok(check)
    };
    inner().map_err(|e| e.in_stage("synth-check"))
}
