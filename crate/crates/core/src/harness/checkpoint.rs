use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::{Hyperparams, NeuralReceiver};
use crate::phy::PILOT_SCHEME_ID;
use crate::tensor::{read_container, write_container, Container, ParamSet};

use super::config::Config;

pub const CHECKPOINT_FORMAT: &str = "nrx-checkpoint";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// What a checkpoint says about the weights it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub hyper: Hyperparams,
    pub n_rx: usize,
    pub bits_per_symbol: usize,
    pub pilot_scheme: String,
    pub pilot_seed: u64,
    pub steps: usize,
}

impl CheckpointMeta {
    /// Refuse weights that were trained for a different setup than `cfg`.
    pub fn check_against(&self, cfg: &Config) -> Result<()> {
        if self.bits_per_symbol != cfg.slot.bits_per_symbol {
            return Err(Error::Load(format!(
                "checkpoint was trained for {} bits per symbol, config uses {}",
                self.bits_per_symbol, cfg.slot.bits_per_symbol
            )));
        }
        if self.n_rx != cfg.slot.n_rx {
            return Err(Error::Load(format!(
                "checkpoint expects {} receive antennas, config has {}",
                self.n_rx, cfg.slot.n_rx
            )));
        }
        if self.pilot_seed != cfg.slot.pilot_seed {
            return Err(Error::Load(format!(
                "checkpoint was trained with pilot seed {}, config uses {}",
                self.pilot_seed, cfg.slot.pilot_seed
            )));
        }
        if self.hyper != cfg.model {
            return Err(Error::Load(format!(
                "checkpoint hyperparameters {:?} differ from config {:?}",
                self.hyper, cfg.model
            )));
        }
        Ok(())
    }
}

pub fn checkpoint_container(receiver: &NeuralReceiver, pilot_seed: u64, steps: usize) -> Result<Container> {
    let hyper = toml::to_string(receiver.hyper()).map_err(|e| Error::Config(e.to_string()))?;
    let header = vec![
        ("format".to_string(), CHECKPOINT_FORMAT.to_string()),
        ("format_version".to_string(), CHECKPOINT_FORMAT_VERSION.to_string()),
        ("pilot_scheme".to_string(), PILOT_SCHEME_ID.to_string()),
        ("pilot_seed".to_string(), pilot_seed.to_string()),
        ("n_rx".to_string(), receiver.n_rx().to_string()),
        ("bits_per_symbol".to_string(), receiver.bits_per_symbol().to_string()),
        ("steps".to_string(), steps.to_string()),
        ("hyperparams".to_string(), hyper),
    ];
    let tensors = receiver
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    Ok(Container { header, tensors })
}

/// Write through a temporary file in the same directory, then rename.
pub fn save_checkpoint(path: &Path, receiver: &NeuralReceiver, pilot_seed: u64, steps: usize) -> Result<()> {
    let c = checkpoint_container(receiver, pilot_seed, steps)?;
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_container(&mut w, &c)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn header<'a>(c: &'a Container, key: &str) -> Result<&'a str> {
    c.header_value(key)
        .ok_or_else(|| Error::Load(format!("checkpoint header lacks `{key}`")))
}

fn header_num<T: std::str::FromStr>(c: &Container, key: &str) -> Result<T> {
    let v = header(c, key)?;
    v.parse()
        .map_err(|_| Error::Load(format!("checkpoint header `{key}` = `{v}` is not a number")))
}

pub fn receiver_from_container(c: Container) -> Result<(NeuralReceiver, CheckpointMeta)> {
    if header(&c, "format")? != CHECKPOINT_FORMAT {
        return Err(Error::Load(format!("not a {CHECKPOINT_FORMAT} file")));
    }
    let version: u32 = header_num(&c, "format_version")?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Load(format!(
            "checkpoint format version {version}, this build reads {CHECKPOINT_FORMAT_VERSION}"
        )));
    }
    let pilot_scheme = header(&c, "pilot_scheme")?.to_string();
    if pilot_scheme != PILOT_SCHEME_ID {
        return Err(Error::Load(format!(
            "checkpoint uses pilot scheme `{pilot_scheme}`, this build implements `{PILOT_SCHEME_ID}`"
        )));
    }
    let hyper: Hyperparams = toml::from_str(header(&c, "hyperparams")?)
        .map_err(|e| Error::Load(format!("bad hyperparameters in checkpoint: {e}")))?;
    let meta = CheckpointMeta {
        hyper,
        n_rx: header_num(&c, "n_rx")?,
        bits_per_symbol: header_num(&c, "bits_per_symbol")?,
        pilot_scheme,
        pilot_seed: header_num(&c, "pilot_seed")?,
        steps: header_num(&c, "steps")?,
    };
    let mut params = ParamSet::new();
    for (name, t) in c.tensors {
        params
            .insert(name, t)
            .map_err(|e| Error::Load(format!("checkpoint tensors: {e}")))?;
    }
    let rx = NeuralReceiver::from_params(meta.hyper, meta.n_rx, meta.bits_per_symbol, params)?;
    Ok((rx, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<(NeuralReceiver, CheckpointMeta)> {
    let f = File::open(path).map_err(|e| Error::Load(format!("cannot open {}: {e}", path.display())))?;
    let c = read_container(BufReader::new(f)).map_err(|e| match e {
        Error::Load(m) => Error::Load(format!("{}: {m}", path.display())),
        other => other,
    })?;
    receiver_from_container(c)
}
