use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use nrx_core::harness::{self, Config};
use nrx_core::neural::neural_gradcheck;
use nrx_core::tensor::write_container;

#[derive(Parser)]
#[command(name = "nrx", version, about = "Train and evaluate MU-MIMO slot receivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set train.steps=100`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the neural receiver and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Training seed (overrides train.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Training log; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also save the checkpoint every N steps.
        #[arg(long, default_value_t = 1000)]
        checkpoint_every: usize,
    },
    /// Run the BER/SNR sweep and write a CSV table.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint of the neural receiver (needed when it is evaluated).
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the pilot pattern and positional-encoding planes.
    Inspect {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the planes as a tensor container.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare autodiff and finite-difference gradients of the full receiver.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 3)]
        seed: u64,
    },
}

fn load_config(args: &ConfigArgs, extra: &[String]) -> Result<Config> {
    let mut overrides = args.overrides.clone();
    overrides.extend_from_slice(extra);
    Config::load(&args.config, &overrides).with_context(|| format!("loading {}", args.config.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn train(cfg: ConfigArgs, out: PathBuf, seed: Option<u64>, log: Option<PathBuf>, every: usize) -> Result<()> {
    let extra: Vec<String> = seed.map(|s| format!("train.seed={s}")).into_iter().collect();
    let config = load_config(&cfg, &extra)?;
    let dump = harness::write_config_dump(&config, &out)?;
    info!("effective configuration written to {}", dump.display());
    let log_path = log.unwrap_or_else(|| sibling(&out, ".log.csv"));
    let mut log_file =
        BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let start = Instant::now();
    let seed = config.slot.pilot_seed;
    let mut window = 0.0;
    let rx = harness::run_training(&config, &mut log_file, |s, trainer| {
        window += s.loss;
        let done = s.step + 1;
        if done % 100 == 0 {
            info!(
                "step {done}/{}: mean loss {:.5} over last 100 steps, {:.1} s elapsed",
                config.train.steps,
                window / 100.0,
                start.elapsed().as_secs_f64()
            );
            window = 0.0;
        }
        if every > 0 && done % every == 0 {
            harness::save_checkpoint(&out, trainer.receiver(), seed, done)?;
        }
        Ok(())
    })?;
    log_file.flush()?;
    harness::save_checkpoint(&out, &rx, seed, config.train.steps)
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "trained {} parameters for {} steps in {:.1} s; checkpoint {}, log {}",
        rx.num_parameters(),
        config.train.steps,
        start.elapsed().as_secs_f64(),
        out.display(),
        log_path.display()
    );
    Ok(())
}

fn eval(cfg: ConfigArgs, ckpt: Option<PathBuf>, out: PathBuf) -> Result<()> {
    let config = load_config(&cfg, &[])?;
    let neural = match &ckpt {
        Some(p) => Some(harness::load_for_config(p, &config).with_context(|| format!("loading {}", p.display()))?),
        None if config.eval.receivers.iter().any(|r| r == "neural") => {
            bail!("receiver `neural` is listed in eval.receivers but no --ckpt was given")
        }
        None => None,
    };
    harness::write_config_dump(&config, &out)?;
    let rows = harness::run_eval_sweep(&config, neural.as_ref())?;
    let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    harness::write_csv(BufWriter::new(f), &rows)?;
    for r in &rows {
        println!("{}", r.csv_line());
    }
    Ok(())
}

fn inspect(cfg: ConfigArgs, out: Option<PathBuf>) -> Result<()> {
    let config = load_config(&cfg, &[])?;
    let c = harness::inspect(&config)?;
    for (k, v) in &c.header {
        println!("{k} = {v}");
    }
    for (name, t) in &c.tensors {
        println!("{name} {:?}", t.shape());
    }
    if let Some(path) = out {
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_container(BufWriter::new(f), &c)?;
        harness::write_config_dump(&config, &path)?;
    }
    Ok(())
}

fn gradcheck(tolerance: f64, step: f64, seed: u64) -> Result<()> {
    let results = neural_gradcheck(seed, step)?;
    let mut worst: f64 = 0.0;
    for r in &results {
        let flag = if r.relative_error < tolerance { "ok" } else { "FAIL" };
        println!(
            "{flag:4} {:32} {:6} scalars ({} across a ReLU kink)  rel err {:.3e}",
            r.name, r.scalars, r.kinked, r.relative_error
        );
        worst = worst.max(r.relative_error);
    }
    if worst >= tolerance {
        bail!("gradient check failed: worst relative error {worst:.3e} >= {tolerance:e}");
    }
    println!(
        "all {} parameter tensors within {tolerance:e} (worst {worst:.3e})",
        results.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            cfg,
            out,
            seed,
            log,
            checkpoint_every,
        } => train(cfg, out, seed, log, checkpoint_every),
        Command::Eval { cfg, ckpt, out } => eval(cfg, ckpt, out),
        Command::Inspect { cfg, out } => inspect(cfg, out),
        Command::Gradcheck { tolerance, step, seed } => gradcheck(tolerance, step, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
