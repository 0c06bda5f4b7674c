//! Configuration, checkpoints, training runs and Monte-Carlo evaluation
//! sweeps shared by the command-line front end and the test suites.

mod checkpoint;
mod config;
mod eval;

pub use checkpoint::{
    checkpoint_container, load_checkpoint, receiver_from_container, save_checkpoint, CheckpointMeta, CHECKPOINT_FORMAT,
    CHECKPOINT_FORMAT_VERSION,
};
pub use config::{Config, EvalConfig, SlotSection};
pub use eval::{lmmse_statistics, run_eval_sweep, slot_seed, write_csv, EvalRow, CSV_HEADER, CSV_NOTE, RECEIVERS};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::NeuralReceiver;
use crate::phy::{build_pilot_pattern, positional_encoding, PilotPattern, MAX_LAYERS};
use crate::tensor::{Container, Tensor};
use crate::training::{StepLog, Trainer, LOG_HEADER};

/// Path of the effective-config dump written next to an output file.
pub fn config_dump_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.toml");
    output.with_file_name(name)
}

pub fn write_config_dump(cfg: &Config, output: &Path) -> Result<PathBuf> {
    let path = config_dump_path(output);
    std::fs::write(&path, cfg.to_toml()?)?;
    Ok(path)
}

/// The training pilot pattern: `train.max_layers` layers from the pilot seed.
pub fn training_pattern(cfg: &Config) -> Result<PilotPattern> {
    build_pilot_pattern(&cfg.slot.slot_config(cfg.train.max_layers)?, cfg.slot.pilot_seed)
}

/// Fresh receiver with weights drawn from the training seed.
pub fn initial_receiver(cfg: &Config) -> Result<NeuralReceiver> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_stream(1);
    NeuralReceiver::new(cfg.model, cfg.slot.n_rx, cfg.slot.bits_per_symbol, &mut rng)
}

/// Train from scratch for `train.steps` steps, writing one log line per step
/// to `log` and calling `progress` after each step.
pub fn run_training<W: Write>(
    cfg: &Config,
    log: &mut W,
    mut progress: impl FnMut(&StepLog, &Trainer) -> Result<()>,
) -> Result<NeuralReceiver> {
    cfg.validate()?;
    let receiver = initial_receiver(cfg)?;
    let slot = cfg.slot.slot_config(cfg.train.max_layers)?;
    let mut trainer = Trainer::new(
        slot,
        cfg.channel.clone(),
        training_pattern(cfg)?,
        receiver,
        cfg.train.clone(),
    )?;
    writeln!(log, "{LOG_HEADER}")?;
    while trainer.steps_done() < cfg.train.steps {
        let s = trainer.step()?;
        writeln!(log, "{}", s.csv_line())?;
        progress(&s, &trainer)?;
    }
    log.flush()?;
    Ok(trainer.into_receiver())
}

/// Pilot pattern and positional-encoding planes of every layer as named
/// tensors: `pilots.layer{l}` holds `[N_F, N_S, 2]` (Re, Im; zero off-pilot),
/// `pe.layer{l}.raw` and `pe.layer{l}.encoded` the distance planes.
pub fn inspect(cfg: &Config) -> Result<Container> {
    let layers = cfg.train.max_layers.clamp(1, MAX_LAYERS);
    let pattern = build_pilot_pattern(&cfg.slot.slot_config(layers)?, cfg.slot.pilot_seed)?;
    let (nf, ns) = pattern.grid_size();
    let mut tensors = Vec::new();
    for l in 0..pattern.n_layers() {
        let lp = pattern.layer(l)?;
        let mut grid = vec![0.0; nf * ns * 2];
        for (&(f, s), v) in lp.positions.iter().zip(&lp.values) {
            grid[(f * ns + s) * 2] = v.re;
            grid[(f * ns + s) * 2 + 1] = v.im;
        }
        tensors.push((format!("pilots.layer{l}"), Tensor::new(vec![nf, ns, 2], grid)?));
        let pe = positional_encoding(&pattern, l)?;
        tensors.push((format!("pe.layer{l}.raw"), pe.raw));
        tensors.push((format!("pe.layer{l}.encoded"), pe.encoded));
    }
    let header = vec![
        ("pilot_scheme".to_string(), crate::phy::PILOT_SCHEME_ID.to_string()),
        ("pilot_seed".to_string(), cfg.slot.pilot_seed.to_string()),
        ("layers".to_string(), layers.to_string()),
    ];
    Ok(Container { header, tensors })
}

/// Load a checkpoint and check it against the configuration.
pub fn load_for_config(path: &Path, cfg: &Config) -> Result<NeuralReceiver> {
    let (rx, meta) = load_checkpoint(path)?;
    meta.check_against(cfg)?;
    if rx.num_parameters() == 0 {
        return Err(Error::Load("checkpoint holds no parameters".into()));
    }
    Ok(rx)
}
