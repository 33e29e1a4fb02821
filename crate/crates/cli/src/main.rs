use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metalab_cli::commands::{self, AblationAxis};
use metalab_cli::{CliError, RunConfig, SEED_ENV};
use metalab_tensor::checkpoint;

#[derive(Parser)]
#[command(name = "metalab", version, args_override_self = true, about = "CIELab-grouped few-shot meta-learning at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train and keep the checkpoint with the best validation accuracy.
    Train(ConfigArgs),
    /// Meta-test a checkpoint on the test split.
    Eval(EvalArgs),
    /// Train and evaluate once per value of one hyperparameter.
    Ablate(AblateArgs),
    /// Finite-difference checks of every primitive and of the full loss.
    Gradcheck(GradcheckArgs),
    /// Render the synthetic dataset to `<out>/{train,val,test}/<class>/<n>.png`.
    SynthData(SynthArgs),
    /// Write the L, a and b planes of one image as grayscale PNGs.
    DumpLab(DumpLabArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `synthetic` or a dataset root directory.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Episodes per training batch.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    hidden_h: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    loss_gens: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// `constant` or `ramp`.
    #[arg(long)]
    gamma_mode: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    val_every: Option<usize>,
    #[arg(long)]
    val_episodes: Option<usize>,
    #[arg(long)]
    early_stop: Option<f64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `normalized` or `raw`.
    #[arg(long)]
    norm_mode: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Metrics file; standard output when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Any configuration key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        let s = |v: Option<&dyn ToString>| v.map(|x| x.to_string());
        push("dataset", self.dataset.clone());
        push("k_way", s(self.k.as_ref().map(|v| v as _)));
        push("n_shot", s(self.n.as_ref().map(|v| v as _)));
        push("q_query", s(self.q.as_ref().map(|v| v as _)));
        push("batch_episodes", s(self.b.as_ref().map(|v| v as _)));
        push("hidden_h", s(self.hidden_h.as_ref().map(|v| v as _)));
        push("embed_dim", s(self.embed_dim.as_ref().map(|v| v as _)));
        push("image_size", s(self.image_size.as_ref().map(|v| v as _)));
        push("generations", s(self.generations.as_ref().map(|v| v as _)));
        push("loss_gens", s(self.loss_gens.as_ref().map(|v| v as _)));
        push("lambda", s(self.lambda.as_ref().map(|v| v as _)));
        push("beta", s(self.beta.as_ref().map(|v| v as _)));
        push("gamma", s(self.gamma.as_ref().map(|v| v as _)));
        push("gamma_mode", self.gamma_mode.clone());
        push("lr", s(self.lr.as_ref().map(|v| v as _)));
        push("train_iters", s(self.iters.as_ref().map(|v| v as _)));
        push("val_every", s(self.val_every.as_ref().map(|v| v as _)));
        push("val_episodes", s(self.val_episodes.as_ref().map(|v| v as _)));
        push("early_stop", s(self.early_stop.as_ref().map(|v| v as _)));
        push("eval_episodes", s(self.eval_episodes.as_ref().map(|v| v as _)));
        push("workers", s(self.workers.as_ref().map(|v| v as _)));
        push("seed", s(self.seed.as_ref().map(|v| v as _)));
        push("norm_mode", self.norm_mode.clone());
        push("checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string()));
        push("metrics", self.metrics.as_ref().map(|p| p.display().to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            out.push((k.to_string(), v.to_string()));
        }
        Ok(out)
    }

    fn resolve(&self) -> Result<RunConfig, CliError> {
        let env_seed = std::env::var(SEED_ENV).ok();
        RunConfig::resolve(self.config.as_deref(), env_seed.as_deref(), &self.overrides()?)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Sweep the number of ways over `MIN..=MAX` (for example `5..10`).
    #[arg(long, value_name = "MIN..MAX")]
    k_sweep: Option<String>,
    /// Evaluate freshly initialized parameters instead of a checkpoint.
    #[arg(long)]
    untrained: bool,
    /// Also write the report rows as JSON lines here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write per-generation edge matrices of one test episode here (T ≤ 10).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// `hidden_h`, `embed_dim` or `generations`.
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    /// Curve file (JSON lines); standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DumpLabArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn parse_sweep(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("--k-sweep expects MIN..MAX, got `{s}`"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let data = commands::load_dataset(&cfg)?;
            let mut out = sink(cfg.metrics.as_ref())?;
            let outcome = commands::train(&cfg, &data, &mut out)?;
            checkpoint::save(&outcome.params, &cfg.checkpoint)?;
            let best = outcome
                .best_val
                .map(|(i, acc, ci)| format!("best val {acc:.4} ± {ci:.4} at iteration {i}"))
                .unwrap_or_else(|| "no validation".into());
            eprintln!("trained {} iterations, {best}; checkpoint {}", outcome.iterations, cfg.checkpoint.display());
        }
        Command::Eval(args) => {
            let cfg = args.config.resolve()?;
            let data = commands::load_dataset(&cfg)?;
            let params = if args.untrained { commands::init_params(&cfg)? } else { commands::load_checkpoint(&cfg)? };
            let ways = match &args.k_sweep {
                Some(s) => parse_sweep(s)?,
                None => vec![cfg.k_way],
            };
            let rows = commands::evaluate_params(&cfg, &data, &params, &ways)?;
            let mut report = args.report.as_ref().map(File::create).transpose()?.map(BufWriter::new);
            for row in &rows {
                println!("{row}");
                if let Some(r) = report.as_mut() {
                    metalab_cli::metrics::write_json_line(r, row)?;
                }
            }
            if let Some(path) = &args.trace {
                commands::trace_episode(&cfg, &data, &params, &mut BufWriter::new(File::create(path)?))?;
            }
        }
        Command::Ablate(args) => {
            let cfg = args.config.resolve()?;
            let axis: AblationAxis = args.axis.parse()?;
            let data = commands::load_dataset(&cfg)?;
            let mut out = sink(args.out.as_ref())?;
            commands::ablate(&cfg, &data, axis, &args.values, &mut out)?;
        }
        Command::Gradcheck(args) => {
            let summary = commands::gradcheck(args.trials, args.seed)?;
            for (name, err) in &summary.primitives {
                println!("{name:<24} worst rel err {err:.3e}");
            }
            println!("{:<24} worst rel err {:.3e}", "end-to-end L_total", summary.end_to_end_worst);
            if !summary.passed() {
                return Err(CliError::Numeric(format!("gradient check above tolerance {:e}", summary.tolerance)));
            }
            println!("all gradient checks below {:e} over {} trials", summary.tolerance, summary.trials);
        }
        Command::SynthData(args) => {
            let cfg = args.config.resolve()?;
            let n = commands::synth_data(&cfg, &args.out)?;
            eprintln!("wrote {n} images under {}", args.out.display());
        }
        Command::DumpLab(args) => {
            for stats in commands::dump_lab(&args.image, &args.out)? {
                println!("{}", serde_json::to_string(&stats).expect("plain record"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
