mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use common::{write_corpus, CorpusSpec};
use logoscope::corpus::load_manifest;
use logoscope::harness::{self, load_features, read_json_artifact, Diagnosis, RunConfig, Stage};
use logoscope::metrics::MetricsReport;
use logoscope::perturb::PerturbationKind;
use logoscope::probe::EmbeddingMatrix;
use logoscope::querent::{
    read_predictions, write_predictions, Condition, DecodingParams, MockConfig, MockRates, ModelEndpoint, RetryPolicy, TransportConfig,
};

use logoscope::synth::{generate, write_embeddings, PlantedWorld};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mock(id: &str, cfg: MockConfig) -> ModelEndpoint {
    ModelEndpoint {
        model_id: id.into(),
        transport: TransportConfig::Mock(cfg),
        max_concurrency: 2,
        retry: RetryPolicy::default(),
        params: DecodingParams::default(),
    }
}

fn planted(manifest: &Path, seed: u64, rate: f64) -> MockConfig {
    let mut m = MockConfig::new(seed, rate);
    m.planted_priors = load_manifest(manifest)
        .unwrap()
        .into_iter()
        .filter(|l| l.gt_text.is_none())
        .map(|l| (l.id.clone(), format!("Planted {}", l.id)))
        .collect();
    m
}

fn config(out: &Path, manifest: &Path, stages: Vec<Stage>) -> RunConfig {
    let mut cfg = RunConfig::new(out);
    cfg.manifest = Some(manifest.to_path_buf());
    cfg.stages = stages;
    cfg.seed = 11;
    cfg
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in walk(dir) {
        out.insert(e.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&e).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn bias_stage_recovers_planted_rate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &CorpusSpec { symbols: 800, hybrids: 20, texts: 20, prefill_buckets: true });
    let mut cfg = config(&dir.path().join("out"), &manifest, vec![Stage::Bias]);
    cfg.endpoints = vec![mock("m", planted(&manifest, 3, 0.4))];
    harness::run(&cfg).unwrap();

    let r: MetricsReport = read_json_artifact(&dir.path().join("out/bias/m.report.json")).unwrap().data;
    let sd = (0.6 * 0.4 / 800.0f64).sqrt();
    assert!((r.no_hall.unwrap() - 0.6).abs() <= 3.0 * sd, "{:?}", r.no_hall);
    assert_eq!(r.acc_text, Some(1.0));
    assert_eq!((r.categories.len(), r.colors.len(), r.shapes.len()), (4, 6, 4));
    for rows in [&r.colors, &r.shapes] {
        approx::assert_relative_eq!(rows.iter().map(|b| b.share).sum::<f64>(), 1.0, epsilon = 1e-12);
    }
    let md = std::fs::read_to_string(dir.path().join("out/bias/table1.md")).unwrap();
    assert!(md.starts_with("| Type | m |"));
    assert!(md.trim_end().ends_with("-->"));
}

#[test]
fn one_report_column_per_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &CorpusSpec { symbols: 40, hybrids: 4, texts: 4, prefill_buckets: false });
    let mut cfg = config(&dir.path().join("out"), &manifest, vec![Stage::Bias]);
    let ids = ["alpha", "beta", "gamma/v2", "delta"];
    cfg.endpoints = ids.iter().enumerate().map(|(i, id)| mock(id, planted(&manifest, i as u64, 0.1 * i as f64))).collect();
    harness::run(&cfg).unwrap();
    let md = std::fs::read_to_string(dir.path().join("out/bias/table1.md")).unwrap();
    assert!(md.starts_with("| Type | alpha | beta | gamma/v2 | delta |"));
    let csv = std::fs::read_to_string(dir.path().join("out/bias/table1.csv")).unwrap();
    for id in ids {
        assert_eq!(csv.lines().filter(|l| l.starts_with(&format!("{id},"))).count(), 14);
    }
    assert!(dir.path().join("out/bias/gamma_v2.predictions.jsonl").is_file());
    // curation filled the buckets from the rendered images
    let r: MetricsReport = read_json_artifact(&dir.path().join("out/bias/alpha.report.json")).unwrap().data;
    assert_eq!(r.colors.iter().map(|b| b.n).sum::<usize>(), 40);
}

fn perturb_cfg(root: &Path, out: &str, hall: MockConfig) -> RunConfig {
    let manifest = root.join("manifest.jsonl");
    let mut cfg = config(&root.join(out), &manifest, vec![Stage::Perturb]);
    cfg.endpoints = vec![mock("m", hall)];
    cfg
}

fn perturb_rows(out: &Path) -> Vec<(PerturbationKind, f64)> {
    let r: logoscope::metrics::PerturbationReport = read_json_artifact(&out.join("perturb/m.perturbation.json")).unwrap().data;
    r.rows.iter().map(|row| (row.kind, row.accuracy)).collect()
}

#[test]
fn occlusion_conditional_mock_bottoms_out_on_occlusion() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &CorpusSpec { symbols: 60, hybrids: 0, texts: 0, prefill_buckets: true });
    let mut m = planted(&manifest, 5, 0.1);
    m.by_perturbation.insert("occlusion".into(), MockRates { hallucination_rate: Some(0.9), text_accuracy: None });
    let cfg = perturb_cfg(dir.path(), "out", m);
    harness::run(&cfg).unwrap();
    let rows = perturb_rows(&cfg.outdir);
    assert_eq!(rows.len(), 9);
    let (worst, _) = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(*worst, PerturbationKind::Occlusion);
    let md = std::fs::read_to_string(cfg.outdir.join("perturb/perturbation.md")).unwrap();
    assert!(md.contains("unweighted mean"));
}

#[test]
fn perfect_mock_gives_equal_columns() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &CorpusSpec { symbols: 12, hybrids: 6, texts: 6, prefill_buckets: true });
    let cfg = perturb_cfg(dir.path(), "out", planted(&manifest, 1, 0.0));
    harness::run(&cfg).unwrap();
    let rows = perturb_rows(&cfg.outdir);
    assert!(rows.iter().all(|(_, a)| *a == 1.0), "{rows:?}");
}

#[test]
fn reruns_are_byte_identical_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &CorpusSpec { symbols: 16, hybrids: 4, texts: 4, prefill_buckets: false });
    let mut cfg = perturb_cfg(dir.path(), "a", planted(&manifest, 2, 0.5));
    cfg.stages = vec![Stage::Perturb, Stage::Bias];
    harness::run(&cfg).unwrap();
    let cache = cfg.outdir.join("cache/m.jsonl");
    let first = tree(&cfg.outdir);
    let cached = std::fs::read(&cache).unwrap();
    // one entry per distinct image: symmetric shapes can coincide across kinds
    let mut distinct: std::collections::HashSet<&Vec<u8>> =
        first.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "png")).map(|(_, b)| b).collect();
    let base: Vec<Vec<u8>> = walk(&dir.path().join("images")).iter().map(|p| std::fs::read(p).unwrap()).collect();
    distinct.extend(base.iter());
    assert_eq!(String::from_utf8_lossy(&cached).lines().count(), distinct.len());

    // same outdir: everything served from the cache, nothing appended
    harness::run(&cfg).unwrap();
    assert_eq!(std::fs::read(&cache).unwrap(), cached);
    assert_eq!(tree(&cfg.outdir), first);

    // fresh outdir with the same config content gives the same perturbed images
    let mut again = cfg.clone();
    again.outdir = dir.path().join("b");
    harness::run(&again).unwrap();
    let a: BTreeMap<_, _> = first.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == "png")).collect();
    let b = tree(&again.outdir);
    assert_eq!(a.len(), 24 * 9);
    for (p, bytes) in a {
        assert_eq!(&b[p], bytes, "{}", p.display());
    }
}

#[test]
fn bad_configs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "outdir = \"out\"\nstages = [\"bias\"]\nmanifest = \"missing.jsonl\"\n").unwrap();
    assert_eq!(RunConfig::load(&path).unwrap_err().exit_code(), 2);
    std::fs::write(&path, "outdir = \"out\"\nstages = [\"telepathy\"]\n").unwrap();
    assert_eq!(RunConfig::load(&path).unwrap_err().exit_code(), 2);
    std::fs::write(&path, "outdir = \"out\"\nstages = [\"synth-check\"]\n").unwrap();
    assert_eq!(RunConfig::load(&path).unwrap().outdir, dir.path().join("out"));
}

fn small_world_embeddings(dir: &Path, m: usize) -> PathBuf {
    let world = PlantedWorld::new(64, 4, 6.0, -2.0, 9).unwrap();
    let emb = dir.join("emb");
    write_embeddings(&emb, &world, &generate(&world, m)).unwrap();
    emb
}

#[test]
fn empty_mask_gives_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_world_embeddings(dir.path(), 300);
    let mut cfg = RunConfig::new(dir.path().join("out"));
    cfg.stages = vec![Stage::Probe];
    cfg.probe.embeddings = Some(emb.clone());
    cfg.probe.labels = Some(emb.join("labels.jsonl"));
    cfg.probe.k = Some(0);
    harness::run(&cfg).unwrap();
    let d: Diagnosis = read_json_artifact(&cfg.outdir.join("probe/diagnosis.json")).unwrap().data;
    assert_eq!(d.k, 0);
    assert_eq!(d.proxy.d_targeted(), 0.0);
    assert_eq!(d.proxy.d_placebo(), 0.0);
    assert!(d.targeted.indices.is_empty());
}

#[test]
fn probe_stage_writes_masks_and_picks_k() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_world_embeddings(dir.path(), 600);
    let mut cfg = RunConfig::new(dir.path().join("out"));
    cfg.stages = vec![Stage::Probe];
    cfg.probe.embeddings = Some(emb.clone());
    cfg.probe.labels = Some(emb.join("labels.jsonl"));
    cfg.probe.c = 0.05;
    cfg.probe.ks = vec![2, 4, 8, 16];
    let out = harness::run_probe_stage(&cfg).unwrap();
    let d = &out.diagnosis;
    assert_eq!(d.cv.as_ref().unwrap().selected_k, d.k);
    assert!(d.proxy.d_targeted() < d.proxy.d_placebo());
    for f in ["probe.json", "mask_targeted.json", "mask_placebo.json", "diagnosis.json", "pca.csv"] {
        assert!(cfg.outdir.join("probe").join(f).is_file(), "{f}");
    }
    let pca = std::fs::read_to_string(cfg.outdir.join("probe/pca.csv")).unwrap();
    assert_eq!(pca.lines().count(), 2 + 600);
}

#[test]
fn features_need_embeddings_for_every_label() {
    let dir = tempfile::tempdir().unwrap();
    let emb = small_world_embeddings(dir.path(), 20);
    let mut labels: HashMap<String, bool> = HashMap::new();
    labels.insert("synth-000003".into(), true);
    let (fs, mean_abs) = load_features(&emb, &labels).unwrap();
    assert_eq!(fs.len(), 1);
    assert_eq!(mean_abs.len(), 64);
    labels.insert("ghost".into(), false);
    assert!(load_features(&emb, &labels).is_err());
    assert!(load_features(dir.path(), &labels).is_err());
}

/// Bias run labels the symbol logos, matching embeddings feed the probe, and
/// condition-tagged predictions produce metric deltas.
#[test]
fn labels_from_bias_predictions_and_condition_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &CorpusSpec { symbols: 120, hybrids: 10, texts: 10, prefill_buckets: true });
    let mut cfg = config(&dir.path().join("out"), &manifest, vec![Stage::Bias]);
    cfg.endpoints = vec![mock("m", planted(&manifest, 4, 0.5))];
    harness::run(&cfg).unwrap();
    let preds = read_predictions(cfg.outdir.join("bias/m.predictions.jsonl")).unwrap();

    let emb = dir.path().join("emb");
    std::fs::create_dir_all(&emb).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in preds.iter().filter(|p| p.logo_id.starts_with("sym")) {
        let rows: Vec<Vec<f32>> = (0..3)
            .map(|_| (0..16).map(|j| rng.gen_range(-1.0..1.0) + if j == 0 && p.y_hat == 1 { 2.0 } else { 0.0 }).collect())
            .collect();
        EmbeddingMatrix::from_rows(&p.logo_id, &rows).unwrap().write(emb.join(format!("{}.lemb", p.logo_id))).unwrap();
    }
    let mut conds = Vec::new();
    for (c, name) in [(Condition::Targeted, "targeted"), (Condition::Placebo, "placebo")] {
        let mut v = preds.clone();
        for p in &mut v {
            p.condition = c;
            if c == Condition::Targeted && p.logo_id.starts_with("sym") {
                p.y_hat = 0;
                p.emitted_text = None;
                p.prob = Some(0.0);
            }
        }
        let f = dir.path().join(format!("{name}.jsonl"));
        write_predictions(&f, &v).unwrap();
        conds.push(f);
    }
    conds.push(cfg.outdir.join("bias/m.predictions.jsonl"));

    cfg.stages = vec![Stage::Probe];
    cfg.probe.embeddings = Some(emb);
    cfg.probe.label_model = Some("m".into());
    cfg.probe.k = Some(1);
    cfg.probe.condition_predictions = conds;
    let out = harness::run_probe_stage(&cfg).unwrap();
    assert_eq!(out.diagnosis.n, 120);
    assert_eq!(out.diagnosis.targeted.indices, vec![0]);
    let d = &out.deltas[0];
    let base_hall = preds.iter().filter(|p| p.logo_id.starts_with("sym") && p.y_hat == 1).count() as f64 / 120.0;
    approx::assert_relative_eq!(d.targeted.as_ref().unwrap().d_hall.unwrap(), -base_hall, epsilon = 1e-12);
    assert_eq!(d.placebo.as_ref().unwrap().d_hall, Some(0.0));
    assert_eq!(out.calibration.len(), 3);
    assert!(cfg.outdir.join("probe/deltas.json").is_file());
    assert!(cfg.outdir.join("probe/calibration.csv").is_file());
}

#[test]
fn synth_check_passes_through_the_runner() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(dir.path());
    cfg.stages = vec![Stage::SynthCheck];
    let summary = harness::run(&cfg).unwrap();
    assert_eq!(summary.synth_passed, Some(true), "{:?}", summary.notices);
    let report = std::fs::read_to_string(dir.path().join("synth-check/report.json")).unwrap();
    assert!(report.contains("\"recovery\""));
    assert_eq!(walk(&dir.path().join("synth-check/embeddings")).len(), 5000 + 2);
}
