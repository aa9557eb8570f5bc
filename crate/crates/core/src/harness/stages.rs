//! Bias and perturbation stages.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{slug, write_bytes, write_csv_artifact, write_json_artifact, write_markdown_artifact, RunConfig};
use crate::corpus::{assign_buckets, load_manifest, LogoRecord};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::metrics::render::{error_share_csv, perturbation_markdown, table1_csv, table1_markdown};
use crate::metrics::{join, metrics_report, perturbation_report, MetricsReport, PerturbationReport};
use crate::perturb::{apply_perturbation_logged, derive_item_seed, Perturbation, PerturbationKind, PerturbationSpec, ResolvedParams};
use crate::querent::{write_predictions, Condition, PredictionRecord, QueryItem, Querent, ResponseCache, TransportConfig};

const TOTAL_NOTE: &str = "Total is the unweighted mean of the per-kind accuracies shown.";

/// Fill missing color/shape buckets from each record's image.
pub fn curate(records: &mut [LogoRecord]) -> Result<()> {
    for r in records.iter_mut() {
        if r.color_bucket.is_none() || r.shape_bucket.is_none() {
            let img = ImageBuffer::load(&r.image_path)?;
            assign_buckets(r, &img)?;
        }
    }
    Ok(())
}

fn load_logos(cfg: &RunConfig) -> Result<Vec<LogoRecord>> {
    let path = cfg.manifest.as_ref().ok_or_else(|| Error::Config("no manifest configured".into()))?;
    let mut logos = load_manifest(path)?;
    curate(&mut logos)?;
    Ok(logos)
}

fn load_images(logos: &[LogoRecord]) -> Result<HashMap<String, ImageBuffer>> {
    logos.iter().map(|l| Ok((l.id.clone(), ImageBuffer::load(&l.image_path)?))).collect()
}

/// Ground-truth texts, configured extras and any planted mock brands.
fn lexicon(cfg: &RunConfig, logos: &[LogoRecord]) -> Vec<String> {
    let mut set: BTreeSet<String> = logos.iter().filter_map(|l| l.gt_text.clone()).collect();
    set.extend(cfg.lexicon.iter().cloned());
    for ep in &cfg.endpoints {
        if let TransportConfig::Mock(m) = &ep.transport {
            set.extend(m.planted_priors.values().cloned());
        }
    }
    set.into_iter().collect()
}

fn predict_items(cfg: &RunConfig, logos: &[LogoRecord], items: &[QueryItem]) -> Result<Vec<(String, Vec<PredictionRecord>)>> {
    let by_id: HashMap<&str, &LogoRecord> = logos.iter().map(|l| (l.id.as_str(), l)).collect();
    let lex = lexicon(cfg, logos);
    let mut out = Vec::new();
    for ep in &cfg.endpoints {
        let cache = ResponseCache::open(cfg.outdir.join("cache").join(format!("{}.jsonl", slug(&ep.model_id))))?;
        let q = Querent::from_endpoint(ep.clone(), logos, &cache)?;
        let preds = q.predict(&by_id, items, &cfg.prompt_id, &lex)?;
        log::info!("{}: {} predictions, {} transport calls", ep.model_id, preds.len(), q.transport_calls());
        out.push((ep.model_id.clone(), preds));
    }
    Ok(out)
}

/// Unperturbed predictions for every endpoint, in endpoint order.
pub fn predict_base(
    cfg: &RunConfig,
    logos: &[LogoRecord],
    images: &HashMap<String, ImageBuffer>,
) -> Result<Vec<(String, Vec<PredictionRecord>)>> {
    let items: Vec<QueryItem> = logos
        .iter()
        .map(|l| QueryItem { logo_id: l.id.clone(), perturbation: None, image: images[&l.id].clone() })
        .collect();
    predict_items(cfg, logos, &items)
}

pub fn predict_perturbed(
    cfg: &RunConfig,
    logos: &[LogoRecord],
    perturbed: &[(PerturbLogLine, ImageBuffer)],
) -> Result<Vec<(String, Vec<PredictionRecord>)>> {
    let items: Vec<QueryItem> = perturbed
        .iter()
        .map(|(line, img)| QueryItem { logo_id: line.logo_id.clone(), perturbation: Some(line.kind), image: img.clone() })
        .collect();
    predict_items(cfg, logos, &items)
}

/// One audit line per perturbed image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbLogLine {
    pub logo_id: String,
    pub kind: PerturbationKind,
    pub seed: u64,
    pub params: ResolvedParams,
    pub image: PathBuf,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

fn provenance_sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().expect("file path").to_os_string();
    name.push(".provenance.json");
    path.with_file_name(name)
}

/// Perturb every logo with every configured kind. Images go to
/// `<outdir>/perturb/<kind>/<logo_id>.png`, the audit log to
/// `<outdir>/perturb/perturbations.jsonl`.
pub fn perturb_corpus(
    cfg: &RunConfig,
    logos: &[LogoRecord],
    images: &HashMap<String, ImageBuffer>,
) -> Result<Vec<(PerturbLogLine, ImageBuffer)>> {
    let dir = cfg.stage_dir("perturb");
    let mut out = Vec::with_capacity(logos.len() * cfg.kinds.len());
    for &kind in &cfg.kinds {
        let perturbation = Perturbation::standard(kind, cfg.rotation);
        for logo in logos {
            let seed = derive_item_seed(cfg.seed, &logo.id, kind);
            let spec = PerturbationSpec { perturbation, seed };
            let (img, params) = apply_perturbation_logged(&spec, &images[&logo.id])?;
            let rel = PathBuf::from(kind.as_str()).join(format!("{}.png", slug(&logo.id)));
            write_bytes(&dir.join(&rel), &img.encode_png()?)?;
            out.push((PerturbLogLine { logo_id: logo.id.clone(), kind, seed, params, image: rel }, img));
        }
    }
    let log_path = dir.join("perturbations.jsonl");
    let lines: Vec<&PerturbLogLine> = out.iter().map(|(l, _)| l).collect();
    write_jsonl(&log_path, &lines)?;
    write_json_artifact(&provenance_sidecar(&log_path), &cfg.provenance("perturb"), &lines.len())?;
    Ok(out)
}

fn save_predictions(cfg: &RunConfig, stage: &str, model: &str, preds: &[PredictionRecord]) -> Result<()> {
    let path = cfg.stage_dir(stage).join(format!("{}.predictions.jsonl", slug(model)));
    super::ensure_parent(&path)?;
    write_predictions(&path, preds)?;
    write_json_artifact(&provenance_sidecar(&path), &cfg.provenance(stage), &preds.len())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreOutput {
    pub reports: Vec<MetricsReport>,
    pub perturbation: Vec<(String, PerturbationReport)>,
}

/// Score base-condition predictions under `<outdir>/<stage>/`. Unperturbed
/// records feed the category/bucket report, perturbed ones the per-kind
/// report. Models keep their first-seen order.
pub fn score_predictions(cfg: &RunConfig, logos: &[LogoRecord], preds: &[PredictionRecord], stage: &str) -> Result<ScoreOutput> {
    let mut order: Vec<&str> = Vec::new();
    for p in preds {
        if !order.contains(&p.model_id.as_str()) {
            order.push(&p.model_id);
        }
    }
    let skipped = preds.iter().filter(|p| p.condition != Condition::Base).count();
    if skipped > 0 {
        log::warn!("ignoring {skipped} non-base-condition predictions while scoring");
    }
    let dir = cfg.stage_dir(stage);
    let prov = cfg.provenance(stage);
    let mut out = ScoreOutput::default();
    for model in order {
        let mine: Vec<PredictionRecord> = preds
            .iter()
            .filter(|p| p.model_id == model && p.condition == Condition::Base)
            .cloned()
            .collect();
        let (base, pert): (Vec<PredictionRecord>, Vec<PredictionRecord>) =
            mine.into_iter().partition(|p| p.perturbation.is_none());
        if !base.is_empty() {
            let report = metrics_report(model, &join(logos, &base)?, cfg.share_mode)?;
            write_json_artifact(&dir.join(format!("{}.report.json", slug(model))), &prov, &report)?;
            out.reports.push(report);
        }
        if !pert.is_empty() {
            let report = perturbation_report(&join(logos, &pert)?)?;
            write_json_artifact(&dir.join(format!("{}.perturbation.json", slug(model))), &prov, &report)?;
            out.perturbation.push((model.to_string(), report));
        }
    }
    if !out.reports.is_empty() {
        write_markdown_artifact(&dir.join("table1.md"), &prov, &table1_markdown(&out.reports))?;
        write_csv_artifact(&dir.join("table1.csv"), &prov, &table1_csv(&out.reports))?;
    }
    if !out.perturbation.is_empty() {
        let md = format!("{}\n{TOTAL_NOTE}\n", perturbation_markdown(&out.perturbation));
        write_markdown_artifact(&dir.join("perturbation.md"), &prov, &md)?;
        write_csv_artifact(&dir.join("error_shares.csv"), &prov, &error_share_csv(&out.perturbation))?;
    }
    Ok(out)
}

/// Query every endpoint on the unperturbed corpus and emit Table-1 reports.
pub fn run_bias_stage(cfg: &RunConfig) -> Result<Vec<MetricsReport>> {
    let inner = || -> Result<Vec<MetricsReport>> {
        let logos = load_logos(cfg)?;
        let images = load_images(&logos)?;
        let mut all = Vec::new();
        for (model, preds) in predict_base(cfg, &logos, &images)? {
            save_predictions(cfg, "bias", &model, &preds)?;
            all.extend(preds);
        }
        Ok(score_predictions(cfg, &logos, &all, "bias")?.reports)
    };
    inner().map_err(|e| e.in_stage("bias"))
}

/// Perturb the corpus, query every endpoint on the perturbed images and emit
/// per-kind accuracy and error-share reports.
pub fn run_perturb_stage(cfg: &RunConfig) -> Result<Vec<(String, PerturbationReport)>> {
    let inner = || -> Result<Vec<(String, PerturbationReport)>> {
        let logos = load_logos(cfg)?;
        let images = load_images(&logos)?;
        let perturbed = perturb_corpus(cfg, &logos, &images)?;
        let mut all = Vec::new();
        for (model, preds) in predict_perturbed(cfg, &logos, &perturbed)? {
            save_predictions(cfg, "perturb", &model, &preds)?;
            all.extend(preds);
        }
        Ok(score_predictions(cfg, &logos, &all, "perturb")?.perturbation)
    };
    inner().map_err(|e| e.in_stage("perturb"))
}
