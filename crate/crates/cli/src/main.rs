use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shapeshift::adversarial::{evaluate_robust_accuracy, parse_epsilon, AttackConfig, Norm};
use shapeshift::dataset::{export_samples, import_samples, LabeledSample};
use shapeshift::distortions::{mean_amplitude_spectrum, Condition, DistortionKind, Distorter};
use shapeshift::metrics::{accuracy, consistency_of_records, read_records_csv, shape_bias, write_records_csv};
use shapeshift::model::{load_checkpoint, ModelParams};
use shapeshift::runner::{
    check_trend_input, check_trends, emit_report, generate_dataset, model_keys, prediction_records, reference_table,
    run, train_and_save, ExperimentConfig, ExperimentResult, MetricsConfig, TrendInput,
};
use shapeshift::spectrum::{dataset_profile, spectral_divergence, ProfileMode};
use shapeshift::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_TRENDS: u8 = 4;

#[derive(Parser)]
#[command(name = "shapeshift", version, about = "Shape bias, OOD robustness and spectra of adversarially trained classifiers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML). Defaults to the built-in desk-scale config.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent trainings and evaluations.
    #[arg(long, short, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train, test and cue-conflict splits as sample directories.
    GenerateDataset,
    /// Train model variants and write their checkpoints.
    Train {
        /// Training entry name; all entries when absent.
        #[arg(long)]
        model: Option<String>,
        /// Replica index; all replicas when absent.
        #[arg(long)]
        replica: Option<usize>,
    },
    /// Robust accuracy of a checkpoint under a PGD attack.
    AttackEval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "linf")]
        norm: Norm,
        /// Budget, e.g. `8/255` or `0.5`.
        #[arg(long)]
        epsilon: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Sample directory; the config's test split when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Leading samples to attack; all when absent.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Apply one distortion condition to a sample directory.
    Distort {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: DistortionKind,
        #[arg(long)]
        level: f64,
        /// Seed of stochastic kinds (defaults to the root seed).
        #[arg(long)]
        condition_seed: Option<u64>,
    },
    /// Radial spectrum profile of a sample directory.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        /// Second directory to compute the divergence against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "per-radius")]
        mode: Mode,
    },
    /// Predict a sample directory with a checkpoint, or compare two prediction files.
    Evaluate {
        #[arg(long, required_unless_present = "compare")]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "compare")]
        input: Option<PathBuf>,
        /// Two prediction CSVs over the same samples; prints their consistency.
        #[arg(long, num_args = 2, conflicts_with_all = ["checkpoint", "input"])]
        compare: Option<Vec<PathBuf>>,
    },
    /// Full pipeline followed by the report and trend checks.
    Run,
    /// Regenerate report files from a persisted result.
    Report {
        #[arg(long)]
        result: PathBuf,
    },
    /// Directional trend checks on a result, or on the reference table.
    CheckTrends {
        #[arg(long, required_unless_present = "reference")]
        result: Option<PathBuf>,
        /// Architecture of the embedded reference rows, e.g. `R50`.
        #[arg(long, conflicts_with = "result")]
        reference: Option<String>,
        /// Exit with status 4 when any check fails.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    PerRadius,
    Cumulative,
}

fn load_config(g: &Global) -> shapeshift::Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::desk_default(),
    };
    if let Some(o) = &g.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = g.seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: &Path) -> shapeshift::Result<ModelParams<f32>> {
    load_checkpoint(path)
}

fn config_test_split(cfg: &ExperimentConfig) -> shapeshift::Result<Vec<LabeledSample>> {
    Ok(generate_dataset(cfg)?.test)
}

fn execute(cli: Cli) -> shapeshift::Result<u8> {
    let g = &cli.global;
    match cli.command {
        Command::GenerateDataset => {
            let cfg = load_config(g)?;
            let ds = generate_dataset(&cfg)?;
            let root = cfg.output_dir.join("dataset");
            for (name, split) in [("train", &ds.train), ("test", &ds.test), ("cue_conflict", &ds.cue_conflict)] {
                export_samples(&root.join(name), split)?;
                println!("{name}: {} samples -> {}", split.len(), root.join(name).display());
            }
        }
        Command::Train { model, replica } => {
            let cfg = load_config(g)?;
            if let Some(m) = &model {
                if !cfg.training.iter().any(|e| &e.name == m) {
                    return Err(Error::Validation(format!("no training entry named `{m}`")));
                }
            }
            if let Some(r) = replica {
                if r >= cfg.replicas {
                    return Err(Error::Validation(format!("replica {r} out of range (replicas = {})", cfg.replicas)));
                }
            }
            let keys: Vec<_> = model_keys(&cfg)
                .into_iter()
                .filter(|k| model.as_ref().is_none_or(|m| &cfg.training[k.entry].name == m))
                .filter(|k| replica.is_none_or(|r| k.replica == r))
                .collect();
            let ds = generate_dataset(&cfg)?;
            let trained = train_and_save(&cfg, &ds, &keys, &cfg.output_dir, g.workers)?;
            for (k, m) in keys.iter().zip(&trained) {
                let last = m.history.last().map_or(f64::NAN, |h| h.eval_accuracy);
                println!(
                    "{} -> {} (test accuracy {last:.4})",
                    k.id(&cfg),
                    cfg.output_dir.join(k.checkpoint_path(&cfg)).display()
                );
            }
        }
        Command::AttackEval {
            checkpoint,
            norm,
            epsilon,
            steps,
            input,
            samples,
        } => {
            let params = load_model(&checkpoint)?;
            let mut set = match input {
                Some(dir) => import_samples(&dir)?,
                None => config_test_split(&load_config(g)?)?,
            };
            if let Some(n) = samples {
                set.truncate(n);
            }
            let attack = AttackConfig::new(norm, parse_epsilon(&epsilon)?, steps);
            attack.validate()?;
            let acc = evaluate_robust_accuracy(&params, &set, &attack)?;
            println!("{} steps={} samples={} robust_accuracy={acc}", attack.label(), steps, set.len());
        }
        Command::Distort {
            input,
            kind,
            level,
            condition_seed,
        } => {
            let seed = g.seed.unwrap_or(0);
            let cond = Condition::new(kind, level, kind.is_stochastic().then_some(condition_seed.unwrap_or(seed)))?;
            let set = import_samples(&input)?;
            let distorter = Distorter::with_target(mean_amplitude_spectrum(set.iter().map(|s| &s.image))?);
            let out = distorted_dir(g, &cond);
            export_samples(&out, &distorter.apply_set(&set, &cond)?)?;
            println!("{} -> {}", cond.id(), out.display());
        }
        Command::Spectrum { input, reference, mode } => {
            let mode = match mode {
                Mode::PerRadius => ProfileMode::PerRadius,
                Mode::Cumulative => ProfileMode::Cumulative,
            };
            let set = import_samples(&input)?;
            let profile = dataset_profile(set.iter().map(|s| &s.image), ProfileMode::PerRadius)?;
            let out_dir = g.output.clone().unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            let name = input.file_name().map_or("samples".into(), |n| n.to_string_lossy().into_owned());
            let path = out_dir.join(format!("spectrum-{name}.csv"));
            std::fs::write(&path, profile.to_mode(mode)?.to_csv()).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            println!("profile -> {}", path.display());
            if let Some(r) = reference {
                let other = import_samples(&r)?;
                let q = dataset_profile(other.iter().map(|s| &s.image), ProfileMode::PerRadius)?;
                let d = spectral_divergence(&q, &profile)?;
                println!("divergence total={} low={} mid={} high={}", d.total, d.low, d.mid, d.high);
            }
        }
        Command::Evaluate {
            checkpoint,
            input,
            compare,
        } => {
            if let Some(files) = compare {
                let a = read_records_csv(&files[0])?;
                let b = read_records_csv(&files[1])?;
                let c = consistency_of_records(&a, &b)?;
                println!(
                    "observed_equal={} both_correct={} expected_equal={} kappa={}",
                    c.observed_equal, c.both_correct, c.expected_equal, c.kappa
                );
                return Ok(0);
            }
            let (checkpoint, input) = (checkpoint.expect("required by clap"), input.expect("required by clap"));
            let params = load_model(&checkpoint)?;
            let set = import_samples(&input)?;
            let records = prediction_records(&params, &set)?;
            let out_dir = g.output.clone().unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            let stem = checkpoint.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            let path = out_dir.join(format!("predictions-{stem}.csv"));
            write_records_csv(&path, &records)?;
            println!("accuracy={} samples={} -> {}", accuracy(&records)?, records.len(), path.display());
            if records.iter().all(|r| r.texture_label.is_some()) {
                let b = shape_bias(&records)?;
                println!(
                    "shape_match_acc={} texture_match_acc={} shape_bias_ratio={}",
                    b.shape_match_acc, b.texture_match_acc, b.shape_bias_ratio
                );
            }
        }
        Command::Run => {
            let cfg = load_config(g)?;
            let result = run(&cfg, g.workers)?;
            let files = emit_report(&result, &cfg.output_dir)?;
            println!("config {} -> {} report files in {}", result.config_hash, files.len(), cfg.output_dir.display());
            print!("{}", check_trends(&result)?);
        }
        Command::Report { result } => {
            let r = ExperimentResult::load(&result)?;
            let dir = g
                .output
                .clone()
                .unwrap_or_else(|| result.parent().map(Path::to_path_buf).unwrap_or_default());
            let files = emit_report(&r, &dir)?;
            println!("{} report files in {}", files.len(), dir.display());
        }
        Command::CheckTrends {
            result,
            reference,
            strict,
        } => {
            let report = match (result, reference) {
                (Some(path), _) => check_trends(&ExperimentResult::load(&path)?)?,
                (None, Some(arch)) => {
                    check_trend_input(&TrendInput::from_reference(&reference_table(), &arch)?, &MetricsConfig::default())?
                }
                (None, None) => unreachable!("required by clap"),
            };
            print!("{report}");
            let failed = ['a', 'b', 'c'].iter().any(|&c| report.status(c) == shapeshift::runner::TrendStatus::Fail);
            if strict && failed {
                return Ok(EXIT_TRENDS);
            }
        }
    }
    Ok(0)
}

fn distorted_dir(g: &Global, cond: &Condition) -> PathBuf {
    g.output
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"))
        .join("distorted")
        .join(cond.id())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
