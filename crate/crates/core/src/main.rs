use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use logoscope::corpus::{load_manifest, stratify, write_manifest, StratifyBy};
use logoscope::harness::{self, RunConfig, Stage};
use logoscope::metrics::ShareMode;
use logoscope::perturb::{PerturbationKind, RotationProfile};
use logoscope::probe::{ablate, AblationMask, EmbeddingMatrix};
use logoscope::querent::read_predictions;
use logoscope::synth::Noise;
use logoscope::{Error, ImageBuffer, Result};

#[derive(Parser)]
#[command(name = "logoscope", version, about = "Logo hallucination diagnostics for vision-language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum By {
    Category,
    Color,
    Shape,
    Hard60,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rotation {
    FullCircle,
    Narrow,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shares {
    Correct,
    Samples,
}

#[derive(Subcommand)]
enum Command {
    /// Fill color/shape buckets and optionally draw equal-size groups.
    Curate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        stratify: Option<By>,
        #[arg(long, default_value_t = 10)]
        per_group: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write perturbed images and the perturbation log.
    Perturb {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Rotation::FullCircle)]
        rotation: Rotation,
        /// Comma-separated kinds; all nine by default.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<PerturbationKind>,
    },
    /// Query the configured endpoints and score the replies.
    Query {
        #[arg(long)]
        config: PathBuf,
        /// Query perturbed images instead of the originals.
        #[arg(long)]
        perturbed: bool,
    },
    /// Score existing prediction files.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, value_enum, default_value_t = Shares::Correct)]
        share_mode: Shares,
    },
    /// Fit the sparse probe, choose k and write masks.
    Probe {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = logoscope::probe::DEFAULT_C)]
        c: f64,
        /// Fixed mask size; cross-validated when omitted.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 16, 32, 64, 128])]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Zero the masked coordinates of every embedding file.
    Ablate {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Run the probe pipeline on a planted world and check it against the oracle.
    SynthCheck {
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        signal_norm: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        bias: Option<f64>,
        /// Student-t noise with this many degrees of freedom.
        #[arg(long)]
        student_t: Option<f64>,
    },
    /// Run the stages listed in a config file.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

fn images(logos: &[logoscope::corpus::LogoRecord]) -> Result<HashMap<String, ImageBuffer>> {
    logos.iter().map(|l| Ok((l.id.clone(), ImageBuffer::load(&l.image_path)?))).collect()
}

fn lemb_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lemb"))
        .collect();
    files.sort();
    Ok(files)
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Curate { manifest, out, stratify: by, per_group, seed } => {
            let mut logos = load_manifest(&manifest)?;
            harness::curate(&mut logos)?;
            if let Some(by) = by {
                let by = match by {
                    By::Category => StratifyBy::Category,
                    By::Color => StratifyBy::Color,
                    By::Shape => StratifyBy::Shape,
                    By::Hard60 => StratifyBy::Hard60,
                };
                let groups = stratify(&logos, by, per_group, seed)?;
                for (key, members) in &groups {
                    println!("{}\t{}", key.label(), members.len());
                }
                logos = groups.into_iter().flat_map(|(_, m)| m).collect();
            }
            write_manifest(&out, &logos)?;
            println!("wrote {} records to {}", logos.len(), out.display());
        }
        Command::Perturb { manifest, outdir, seed, rotation, kinds } => {
            let mut cfg = RunConfig::new(outdir);
            cfg.seed = seed;
            cfg.rotation = match rotation {
                Rotation::FullCircle => RotationProfile::FullCircle,
                Rotation::Narrow => RotationProfile::Narrow,
            };
            if !kinds.is_empty() {
                cfg.kinds = kinds;
            }
            let logos = load_manifest(&manifest)?;
            let out = harness::perturb_corpus(&cfg, &logos, &images(&logos)?)?;
            println!("wrote {} perturbed images under {}", out.len(), cfg.stage_dir("perturb").display());
        }
        Command::Query { config, perturbed } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.stages = vec![if perturbed { Stage::Perturb } else { Stage::Bias }];
            cfg.validate()?;
            harness::run(&cfg)?;
            println!("predictions and reports written under {}", cfg.outdir.display());
        }
        Command::Score { manifest, predictions, outdir, share_mode } => {
            let mut cfg = RunConfig::new(outdir);
            cfg.share_mode = match share_mode {
                Shares::Correct => ShareMode::Correct,
                Shares::Samples => ShareMode::Samples,
            };
            let mut logos = load_manifest(&manifest)?;
            harness::curate(&mut logos)?;
            let mut preds = Vec::new();
            for p in &predictions {
                preds.extend(read_predictions(p)?);
            }
            let out = harness::score_predictions(&cfg, &logos, &preds, "score")?;
            for r in &out.reports {
                let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.1}%", 100.0 * x));
                println!("{}\tacc_text {}\tno_hall {}", r.model_id, pct(r.acc_text), pct(r.no_hall));
            }
            for (m, r) in &out.perturbation {
                println!("{m}\tperturbation total {:.1}%", 100.0 * r.total);
            }
        }
        Command::Probe { embeddings, labels, outdir, c, k, ks, folds, seed } => {
            let mut cfg = RunConfig::new(outdir);
            cfg.seed = seed;
            cfg.stages = vec![Stage::Probe];
            cfg.probe.embeddings = Some(embeddings);
            cfg.probe.labels = Some(labels);
            cfg.probe.c = c;
            cfg.probe.k = k;
            cfg.probe.ks = ks;
            cfg.probe.folds = folds;
            cfg.validate()?;
            let d = harness::run_probe_stage(&cfg)?.diagnosis;
            println!("n {} positives {} nnz {} k {}", d.n, d.positives, d.nnz, d.k);
            println!(
                "probe proxy: base {:.4} targeted {:+.4} placebo {:+.4}",
                d.proxy.base,
                d.proxy.d_targeted(),
                d.proxy.d_placebo()
            );
        }
        Command::Ablate { embeddings, mask, outdir } => {
            let mask = AblationMask::load(&mask)?;
            std::fs::create_dir_all(&outdir).map_err(|e| Error::io(&outdir, e))?;
            let files = lemb_files(&embeddings)?;
            for f in &files {
                let z = EmbeddingMatrix::read(f)?;
                ablate(&z, &mask)?.write(outdir.join(f.file_name().expect("file name")))?;
            }
            println!("ablated {} coordinates in {} files", mask.k, files.len());
        }
        Command::SynthCheck { outdir, seed, m, d, s, signal_norm, bias, student_t } => {
            let mut cfg = RunConfig::new(outdir);
            cfg.seed = seed;
            cfg.stages = vec![Stage::SynthCheck];
            let st = &mut cfg.synth;
            st.m = m.unwrap_or(st.m);
            st.d = d.unwrap_or(st.d);
            if let Some(s) = s {
                st.s = s;
                st.k = s;
            }
            st.signal_norm = signal_norm.unwrap_or(st.signal_norm);
            st.bias = bias.unwrap_or(st.bias);
            if let Some(df) = student_t {
                st.noise = Noise::StudentT { df };
            }
            cfg.validate()?;
            let check = harness::run_synth_check(&cfg)?;
            for c in &check.checks {
                println!("{}\t{:.4}\t{}\t{}", c.name, c.value, c.bound, if c.passed { "pass" } else { "FAIL" });
            }
            return Ok(check.passed());
        }
        Command::Report { config } => {
            let cfg = RunConfig::load(&config)?;
            let summary = harness::run(&cfg)?;
            for n in &summary.notices {
                println!("{n}");
            }
            return Ok(summary.synth_passed != Some(false));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
