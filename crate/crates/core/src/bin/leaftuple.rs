use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use leaftuple::attack::AttackConfig;
use leaftuple::bench::{
    default_thresholds, emit_report, report_to_json, run_benchmark, AttackKind, BenchConfig,
    BenchError, ReportFormat,
};
use leaftuple::geometry::Norm;
use leaftuple::model_io::{LoadOptions, ModelFormat};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    L1,
    L2,
    Linf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AttackArg {
    Lt,
    NaiveLeaf,
    NaiveFeature,
    Oracle,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Auto,
    Xgboost,
    Native,
}

/// Minimal adversarial perturbations for tree ensembles.
#[derive(Parser, Debug)]
#[command(name = "leaftuple", version)]
struct Cli {
    /// Model file: XGBoost JSON dump or native JSON.
    #[arg(long)]
    model: PathBuf,
    /// Victim examples: LIBSVM text, or CSV with the label first.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "linf")]
    norm: NormArg,
    #[arg(long, value_enum, default_value = "lt")]
    attack: AttackArg,
    /// Attack only the first N examples.
    #[arg(long)]
    num_examples: Option<usize>,
    /// Random starts per example.
    #[arg(long, default_value_t = 20)]
    num_initial: usize,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inward nudge for points on open box sides.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Random restarts around converged points.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    noise_escape: bool,
    /// Trials without improvement before the noise escape stops.
    #[arg(long, default_value_t = 300)]
    noise_trials: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_stddev: f64,
    /// Stop scanning bound trees after the first feature group that improves.
    #[arg(long)]
    early_cutoff: bool,
    /// Partial-tuple limit of the exact oracle.
    #[arg(long, default_value_t = 1_000_000)]
    oracle_cap: u64,
    /// Comma-separated distances for the success-rate grid.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Report path; `.csv` writes per-example rows, anything else JSON.
    /// Without it the JSON report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// First feature index in LIBSVM files.
    #[arg(long, default_value_t = 0)]
    index_base: usize,
    /// Classes of an XGBoost dump.
    #[arg(long, default_value_t = 2)]
    num_classes: usize,
    /// Features of an XGBoost dump (default: largest split feature + 1).
    #[arg(long)]
    num_features: Option<usize>,
    #[arg(long, value_enum, default_value = "auto")]
    model_format: FormatArg,
    /// Margin offset of an XGBoost dump.
    #[arg(long, default_value_t = 0.0)]
    base_margin: f64,
}

impl Cli {
    fn bench_config(&self) -> BenchConfig {
        let mut ac = AttackConfig {
            norm: match self.norm {
                NormArg::L1 => Norm::L1,
                NormArg::L2 => Norm::L2,
                NormArg::Linf => Norm::Linf,
            },
            num_initial: self.num_initial,
            epsilon: self.epsilon,
            seed: self.seed,
            early_cutoff: self.early_cutoff,
            ..AttackConfig::default()
        };
        ac.noise_escape.enabled = self.noise_escape;
        ac.noise_escape.trial_budget = self.noise_trials;
        ac.noise_escape.stddev = self.noise_stddev;
        BenchConfig {
            attack: match self.attack {
                AttackArg::Lt => AttackKind::Lt,
                AttackArg::NaiveLeaf => AttackKind::NaiveLeaf,
                AttackArg::NaiveFeature => AttackKind::NaiveFeature,
                AttackArg::Oracle => AttackKind::Oracle,
            },
            attack_config: ac,
            num_examples: self.num_examples,
            threads: self.threads,
            oracle_cap: self.oracle_cap,
            thresholds: self.thresholds.clone().unwrap_or_else(default_thresholds),
        }
    }

    fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: match self.model_format {
                FormatArg::Auto => ModelFormat::Auto,
                FormatArg::Xgboost => ModelFormat::Xgboost,
                FormatArg::Native => ModelFormat::Native,
            },
            num_features: self.num_features,
            num_classes: self.num_classes,
            base_margin: self.base_margin,
            ..LoadOptions::default()
        }
    }
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    let report = run_benchmark(
        &cli.model,
        &cli.data,
        &cli.bench_config(),
        &cli.load_options(),
        cli.index_base,
    )?;
    match &cli.out {
        Some(path) => emit_report(&report, ReportFormat::for_path(path), path)?,
        None => println!("{}", report_to_json(&report)?),
    }
    let s = &report.summary;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    eprintln!(
        "{} examples, {} successful ({} already misclassified), mean distance {}, mean time {} ms",
        s.num_examples,
        s.num_success,
        s.num_already_misclassified,
        fmt(s.mean_distance),
        fmt(s.mean_wall_time_ms),
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                BenchError::Model(_) | BenchError::Data(_) | BenchError::Io { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
