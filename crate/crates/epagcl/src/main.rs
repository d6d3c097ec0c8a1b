//! Command-line surface: dataset inspection, view generation, training,
//! evaluation, theory verification and synthetic data.
//!
//! Exit codes: 0 success, 1 usage error, 2 invariant or verification failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use epagcl::augment::{generate_views, select_candidate_edges, EpochSampler};
use epagcl::error::Result;
use epagcl::graph::{error_passing_rate_with, MassConvention};
use epagcl::io::{
    emit_metrics, load_dataset_dir, load_dataset_paths, load_features, load_labels,
    parse_config_file, save_checkpoint, save_dataset_dir, save_edge_list, save_features,
    DatasetBundle, MetricsRecord,
};
use epagcl::pipeline::{
    embed_with, evaluate, sbm_generate, train_with_mode, AugmentationMode, ProbeConfig, TrainConfig,
};
use epagcl::theory::{
    verify_identity_grid, verify_orientation_antisymmetry, verify_sign_law_exhaustive_with,
};

#[derive(Parser)]
#[command(
    name = "epagcl",
    version,
    about = "EPR-guided graph augmentation and contrastive learning"
)]
struct Cli {
    /// Override the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` training/augmentation config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for generated files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Clone, Copy, ValueEnum)]
enum MassArg {
    /// Plain 1/sqrt(d_i d_j) edge masses (for comparison).
    Raw,
    /// Masses from the self-loop-augmented operator entries (default).
    SelfLoopScaled,
}

impl From<MassArg> for MassConvention {
    fn from(m: MassArg) -> Self {
        match m {
            MassArg::Raw => MassConvention::Raw,
            MassArg::SelfLoopScaled => MassConvention::SelfLoopScaled,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adaptive,
    RandomAddBothViews,
}

impl From<ModeArg> for AugmentationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Adaptive => AugmentationMode::Adaptive,
            ModeArg::RandomAddBothViews => AugmentationMode::RandomAddBothViews,
        }
    }
}

/// Dataset source: a directory with edges.txt (+features.txt, labels.txt) or
/// explicit file paths.
#[derive(Args)]
struct DataArgs {
    #[arg(long, conflicts_with = "edges")]
    data: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<DatasetBundle> {
        let bundle = match (&self.data, &self.edges) {
            (Some(dir), _) => load_dataset_dir(dir)?,
            (None, Some(edges)) => load_dataset_paths(
                &edges
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "dataset".into()),
                edges,
                self.features.as_deref(),
                self.labels.as_deref(),
            )?,
            (None, None) => {
                return Err(epagcl::Error::invalid(
                    "data",
                    "provide --data <dir> or --edges <file>",
                ))
            }
        };
        eprintln!(
            "loaded {}: nodes={} edges={} features={} classes={}",
            bundle.name,
            bundle.summary.nodes,
            bundle.summary.edges,
            bundle
                .summary
                .feature_dim
                .map_or("none".into(), |f| f.to_string()),
            bundle
                .summary
                .classes
                .map_or("none".into(), |c| c.to_string()),
        );
        Ok(bundle)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Error passing rate of a labeled graph.
    Epr {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = MassArg::SelfLoopScaled)]
        masses: MassArg,
    },
    /// Drop/add weights and the candidate edge pool.
    Weights {
        #[command(flatten)]
        data: DataArgs,
        /// Dump per-edge weights instead of a summary.
        #[arg(long)]
        full: bool,
    },
    /// Generate the two augmented views for one epoch.
    Augment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        /// Also write masked feature files for both views.
        #[arg(long)]
        write_features: bool,
    },
    /// Train the encoder; writes checkpoint.json, metrics.json, embeddings.txt.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Adaptive)]
        mode: ModeArg,
        /// Export projected embeddings instead of encoder output.
        #[arg(long)]
        use_projected: bool,
        /// Probe the embeddings over this many fresh splits after training.
        #[arg(long, default_value_t = 0)]
        eval_runs: usize,
        /// Retrain the encoder (seed + run) for every evaluation run.
        #[arg(long)]
        retrain_per_run: bool,
    },
    /// Linear-probe stored embeddings over fresh splits.
    Eval {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 3000)]
        probe_epochs: usize,
        /// Explicit l2 penalty on the probe weights (the optimizer's weight
        /// decay stays 0).
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
    },
    /// Exhaustive sign checks, closed-form identities and orientation
    /// antisymmetry; nonzero exit on any violation.
    VerifyTheory {
        #[arg(long, default_value_t = 6)]
        max_nodes: usize,
        #[arg(long, default_value_t = 2)]
        class_count: usize,
        /// Per-class sizes for the constant-fraction constructions.
        #[arg(long, default_value = "12,24,48", value_delimiter = ',')]
        per_class: Vec<usize>,
        /// within/cross degree pairs, e.g. 3/1,2/1,2/2.
        #[arg(long, default_value = "3/1,2/1,2/2", value_delimiter = ',')]
        constructions: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        antisym_cases: usize,
        #[arg(long, default_value_t = 1e-10)]
        identity_tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        antisym_tol: f64,
        /// Mass convention for the sign sweep; plain-degree masses
        /// demonstrate where the sign law breaks.
        #[arg(long, value_enum, default_value_t = MassArg::SelfLoopScaled)]
        masses: MassArg,
    },
    /// Emit a stochastic block model dataset in the text formats.
    Sbm {
        #[arg(long, default_value = "200,200", value_delimiter = ',')]
        block_sizes: Vec<usize>,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::max_level()
    }
    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("[{}] {}", record.level(), record.args());
        }
    }
    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap's help/version output is a success path
            if err.use_stderr() {
                let _ = err.print();
                return ExitCode::from(1);
            }
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
    };
    let level = match cli.log_level {
        LogLevel::Off => log::LevelFilter::Off,
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(level);

    match run(cli) {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn effective_config(cli_config: &Option<PathBuf>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match cli_config {
        Some(path) => parse_config_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.augmentation.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let out_dir = cli.out_dir.clone();
    match cli.command {
        Command::Epr { data, masses } => {
            let bundle = data.load()?;
            let start = Instant::now();
            let report = error_passing_rate_with(&bundle.graph, masses.into())?;
            let seconds = start.elapsed().as_secs_f64();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "dataset": bundle.name,
                    "rate": report.rate,
                    "wrong_mass": report.wrong_mass,
                    "total_mass": report.total_mass,
                    "convention": report.convention,
                    "seconds": seconds,
                }))?
            );
            Ok(true)
        }
        Command::Weights { data, full } => {
            let bundle = data.load()?;
            let w = select_candidate_edges(&bundle.graph);
            let stats = |v: &[f64]| {
                if v.is_empty() {
                    json!(null)
                } else {
                    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
                    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    json!({"min": min, "mean": mean, "max": max})
                }
            };
            let mut out = json!({
                "dataset": bundle.name,
                "edges": bundle.graph.num_edges(),
                "top_k": w.candidate_nodes.len(),
                "candidates": w.add_candidates.len(),
                "drop_weights": stats(&w.drop_weights),
                "add_weights": stats(&w.add_weights),
            });
            if full {
                out["drop_weights_full"] = json!(w.drop_weights);
                out["add_candidates_full"] = json!(w.add_candidates);
                out["add_weights_full"] = json!(w.add_weights);
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(true)
        }
        Command::Augment {
            data,
            epoch,
            write_features,
        } => {
            let bundle = data.load()?;
            let cfg = effective_config(&cli.config, cli.seed)?;
            let weights = select_candidate_edges(&bundle.graph);
            let sampler = EpochSampler::new(cfg.augmentation.seed, epoch);
            let (v1, v2) = generate_views(&bundle.graph, &weights, &cfg.augmentation, &sampler)?;
            std::fs::create_dir_all(&out_dir)?;
            save_edge_list(&out_dir.join("view1_edges.txt"), &v1.edges)?;
            save_edge_list(&out_dir.join("view2_edges.txt"), &v2.edges)?;
            if write_features {
                if let (Some(f1), Some(f2)) = (&v1.features, &v2.features) {
                    save_features(&out_dir.join("view1_features.txt"), f1)?;
                    save_features(&out_dir.join("view2_features.txt"), f2)?;
                }
            }
            let l = bundle.graph.num_edges() as f64;
            let added2 = v2
                .edges
                .iter()
                .filter(|e| !bundle.graph.edges().contains(e))
                .count();
            let kept2 = v2.edges.len() - added2;
            let summary = json!({
                "dataset": bundle.name,
                "epoch": epoch,
                "original_edges": bundle.graph.num_edges(),
                "candidates": weights.add_candidates.len(),
                "view1": {
                    "edges": v1.edges.len(),
                    "realized_drop_fraction": 1.0 - v1.edges.len() as f64 / l,
                },
                "view2": {
                    "edges": v2.edges.len(),
                    "added": added2,
                    "realized_drop_fraction": 1.0 - kept2 as f64 / l,
                    "realized_add_fraction": if weights.add_candidates.is_empty() {
                        0.0
                    } else {
                        added2 as f64 / weights.add_candidates.len() as f64
                    },
                },
            });
            let text = serde_json::to_string_pretty(&summary)?;
            std::fs::write(out_dir.join("augment_summary.json"), &text)?;
            println!("{text}");
            Ok(true)
        }
        Command::Train {
            data,
            mode,
            use_projected,
            eval_runs,
            retrain_per_run,
        } => {
            let bundle = data.load()?;
            let cfg = effective_config(&cli.config, cli.seed)?;
            std::fs::create_dir_all(&out_dir)?;
            let output = train_with_mode(&bundle.graph, &cfg, mode.into())?;
            save_checkpoint(&out_dir.join("checkpoint.json"), &output.params)?;
            emit_metrics(
                &out_dir.join("metrics.json"),
                &MetricsRecord::new(cfg.clone(), output.history.clone()),
            )?;
            let h = embed_with(&bundle.graph, &output.params, use_projected)?;
            save_features(&out_dir.join("embeddings.txt"), &h)?;
            eprintln!(
                "trained {} epochs; final loss {:.6}",
                output.history.len(),
                output.history.last().map(|e| e.loss).unwrap_or(f64::NAN)
            );
            if eval_runs > 0 {
                let labels = bundle.graph.labels_required()?;
                let probe = ProbeConfig::default();
                let result = if retrain_per_run {
                    let mut accuracies = Vec::new();
                    let mut split_seeds = Vec::new();
                    for run in 0..eval_runs as u64 {
                        let mut run_cfg = cfg.clone();
                        run_cfg.seed = cfg.seed.wrapping_add(run);
                        run_cfg.augmentation.seed = run_cfg.seed;
                        let out = train_with_mode(&bundle.graph, &run_cfg, mode.into())?;
                        let h = embed_with(&bundle.graph, &out.params, use_projected)?;
                        let split_seed = cfg.seed.wrapping_add(run);
                        let split = epagcl::pipeline::random_split(h.rows(), split_seed)?;
                        let probe_cfg = ProbeConfig {
                            seed: split_seed,
                            ..probe.clone()
                        };
                        accuracies.push(epagcl::pipeline::linear_probe(
                            &h, labels, &split, &probe_cfg,
                        )?);
                        split_seeds.push(split_seed);
                    }
                    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
                    let std = if accuracies.len() > 1 {
                        (accuracies
                            .iter()
                            .map(|a| (a - mean) * (a - mean))
                            .sum::<f64>()
                            / (accuracies.len() as f64 - 1.0))
                            .sqrt()
                    } else {
                        0.0
                    };
                    epagcl::pipeline::EvalResult {
                        accuracies,
                        mean,
                        std,
                        split_seeds,
                    }
                } else {
                    evaluate(&h, labels, eval_runs, cfg.seed, &probe)?
                };
                let text = serde_json::to_string_pretty(&result)?;
                std::fs::write(out_dir.join("eval.json"), &text)?;
                println!("{text}");
            }
            Ok(true)
        }
        Command::Eval {
            embeddings,
            labels,
            runs,
            probe_epochs,
            l2,
        } => {
            let h = load_features(&embeddings)?;
            let labels = load_labels(&labels)?;
            let probe = ProbeConfig {
                epochs: probe_epochs,
                l2_penalty: l2,
                ..ProbeConfig::default()
            };
            let result = evaluate(&h, &labels, runs, cli.seed.unwrap_or(0), &probe)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(true)
        }
        Command::VerifyTheory {
            max_nodes,
            class_count,
            per_class,
            constructions,
            antisym_cases,
            identity_tol,
            antisym_tol,
            masses,
        } => {
            let pairs: Vec<(usize, usize)> = constructions
                .iter()
                .map(|s| {
                    let (a, b) = s.split_once('/').ok_or_else(|| {
                        epagcl::Error::invalid("constructions", format!("expected a/b, got {s:?}"))
                    })?;
                    Ok((
                        a.trim().parse().map_err(|_| {
                            epagcl::Error::invalid("constructions", format!("bad degree {a:?}"))
                        })?,
                        b.trim().parse().map_err(|_| {
                            epagcl::Error::invalid("constructions", format!("bad degree {b:?}"))
                        })?,
                    ))
                })
                .collect::<Result<_>>()?;

            let start = Instant::now();
            let sign = verify_sign_law_exhaustive_with(max_nodes, class_count, masses.into())?;
            let identity = verify_identity_grid(&pairs, &per_class)?;
            let antisym = verify_orientation_antisymmetry(antisym_cases, cli.seed.unwrap_or(7))?;
            let seconds = start.elapsed().as_secs_f64();

            let sign_ok = sign.violations.is_empty();
            let identity_ok = identity.max_residual <= identity_tol;
            let antisym_ok = antisym.max_abs_sum <= antisym_tol;
            let passed = sign_ok && identity_ok && antisym_ok;
            let report = json!({
                "sign_check": sign,
                "identity_check": identity,
                "antisymmetry_check": antisym,
                "identity_tolerance": identity_tol,
                "antisymmetry_tolerance": antisym_tol,
                "seconds": seconds,
                "passed": passed,
            });
            let text = serde_json::to_string_pretty(&report)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("verify_theory.json"), &text)?;
            println!("{text}");
            Ok(passed)
        }
        Command::Sbm {
            block_sizes,
            p_in,
            p_out,
            feature_dim,
            noise,
        } => {
            let seed = cli.seed.unwrap_or(0);
            let g = sbm_generate(&block_sizes, p_in, p_out, feature_dim, noise, seed)?;
            save_dataset_dir(&out_dir, &g)?;
            let epr = error_passing_rate_with(&g, MassConvention::default())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "nodes": g.num_nodes(),
                    "edges": g.num_edges(),
                    "feature_dim": feature_dim,
                    "epr": epr.rate,
                    "seed": seed,
                }))?
            );
            Ok(true)
        }
    }
}
