use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use synthleak::provider::AttackLevel;
use synthleak::run::{
    cmd_attack, cmd_evaluate, cmd_generate, cmd_report, AttackReport, PredictorSource,
    ReportFormat, RunConfig,
};
use synthleak::selection::Weights;
use synthleak::{Error, Result};

/// Re-identification audits for tabular synthetic data.
#[derive(Parser)]
#[command(name = "synthleak", version)]
struct Cli {
    /// Log verbosity on stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank and select synthetic rows likely to reveal training records.
    Attack(RunArgs),
    /// Score an attack report against the training table.
    Evaluate {
        /// Attack report to score.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a copula sample of `multiplier x |synthetic|` rows.
    Generate(RunArgs),
    /// Print a summary of an attack or evaluation report.
    Report {
        #[arg(long)]
        report: PathBuf,
        /// text or markdown
        #[arg(long, default_value = "text")]
        format: String,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML config file supplying defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    training: Option<PathBuf>,
    #[arg(long)]
    external_samples: Option<PathBuf>,
    /// level-1, level-2 or level-3
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Distance and loss weights, e.g. `0.75,0.25`.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, overrides_with = "no_evolve")]
    evolve: bool,
    #[arg(long)]
    no_evolve: bool,
    #[arg(long)]
    n_gen: Option<usize>,
    #[arg(long)]
    pop_size: Option<usize>,
    #[arg(long)]
    crossover_prob: Option<f64>,
    #[arg(long)]
    mutation_prob: Option<f64>,
    #[arg(long)]
    eta_m: Option<f64>,
    /// builtin or external
    #[arg(long)]
    predictor: Option<String>,
    /// Prediction CSV for the external predictor.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    multiplier: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Run per-query evolution on one thread.
    #[arg(long)]
    sequential: bool,
}

fn parse_weights(s: &str) -> Result<Weights> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("weights must look like 0.75,0.25, got {s:?}")))?;
    match nums[..] {
        [d, l] => Weights::new(d, l).map_err(|e| Error::Config(e.to_string())),
        _ => Err(Error::Config(format!("weights need two values, got {s:?}"))),
    }
}

impl RunArgs {
    fn apply(self, mut c: RunConfig) -> Result<RunConfig> {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { c.$field = v; }
            )*};
        }
        set!(schema, synthetic, k, tau, multiplier, threshold, seed, output_dir);
        if self.training.is_some() {
            c.training = self.training;
        }
        if self.external_samples.is_some() {
            c.external_samples = self.external_samples;
        }
        if self.n_train.is_some() {
            c.n_train = self.n_train;
        }
        if let Some(l) = self.level {
            c.level = l.parse::<AttackLevel>()?;
        }
        if let Some(w) = self.weights {
            c.weights = parse_weights(&w)?;
        }
        if self.evolve {
            c.evolution.enabled = true;
        }
        if self.no_evolve {
            c.evolution.enabled = false;
        }
        let e = &mut c.evolution;
        if let Some(v) = self.n_gen {
            e.n_gen = v;
        }
        if let Some(v) = self.pop_size {
            e.pop_size = v;
        }
        if let Some(v) = self.crossover_prob {
            e.crossover_prob = v;
        }
        if self.mutation_prob.is_some() {
            e.mutation_prob = self.mutation_prob;
        }
        if let Some(v) = self.eta_m {
            e.eta_m = v;
        }
        if let Some(p) = self.predictor {
            c.predictor.source = p.parse::<PredictorSource>()?;
        }
        if self.predictions.is_some() {
            c.predictor.path = self.predictions;
        }
        if self.sequential {
            c.parallel = false;
        }
        Ok(c)
    }

    fn config(mut self, fallback: Option<RunConfig>) -> Result<RunConfig> {
        let base = match self.config.take() {
            Some(path) => RunConfig::load(path)?,
            None => fallback.unwrap_or_default(),
        };
        self.apply(base)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Attack(args) => {
            let config = args.config(None)?;
            let report = cmd_attack(&config)?;
            eprintln!(
                "recovered {} of {} rows; report in {}",
                report.recovered.entries.len(),
                report.recovered.n_recon,
                config.output_dir.display()
            );
        }
        Command::Evaluate { report, run } => {
            // without --config the attack's own echoed config is the base
            let fallback = if run.config.is_none() {
                Some(AttackReport::load(&report)?.config)
            } else {
                None
            };
            let config = run.config(fallback)?;
            let training = config.training.clone().ok_or_else(|| {
                Error::Config("evaluate needs a training table (--training)".into())
            })?;
            let m = cmd_evaluate(&report, &training, &config)?;
            eprintln!(
                "unique samples {}, hit rate {}, mean DCR {}",
                m.unique_samples,
                synthleak::decimal::format(m.hit_rate),
                synthleak::decimal::format(m.dcr_mean)
            );
        }
        Command::Generate(args) => {
            let config = args.config(None)?;
            let path = cmd_generate(&config)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Report { report, format } => {
            let format: ReportFormat = format.parse()?;
            print!("{}", cmd_report(&report, format)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            let record = serde_json::json!({
                "error": {
                    "class": class.as_str(),
                    "exit_code": class.exit_code(),
                    "message": e.to_string(),
                }
            });
            eprintln!("{record}");
            ExitCode::from(class.exit_code())
        }
    }
}
