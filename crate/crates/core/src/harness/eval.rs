use std::io::Write;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::NoiseConfig;
use crate::classic::{ChannelStats, KBestConfig, LlrGrid, LmmseKBestReceiver, LsLmmseReceiver};
use crate::error::{Error, Result};
use crate::neural::NeuralReceiver;
use crate::phy::{build_pilot_pattern, PilotPattern, SlotConfig, MAX_LAYERS};
use crate::sim::simulate_slot;

use super::config::Config;

pub const RECEIVERS: [&str; 3] = ["ls-lmmse", "lmmse-kbest", "neural"];

pub const CSV_HEADER: &str = "receiver,n_layers,snr_db,bits,bit_errors,ber,slots,slot_errors,seconds";
pub const CSV_NOTE: &str =
    "# uncoded: slot_errors counts slots with any data bit in error and stands in for a transport-block error rate";

/// Monte-Carlo result of one (receiver, layer count, SNR) point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub receiver: String,
    pub n_layers: usize,
    pub snr_db: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub slots: u64,
    pub slot_errors: u64,
    pub seconds: f64,
}

impl EvalRow {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6e},{},{},{:.3}",
            self.receiver,
            self.n_layers,
            self.snr_db,
            self.bits,
            self.bit_errors,
            self.ber(),
            self.slots,
            self.slot_errors,
            self.seconds
        )
    }
}

pub fn write_csv<W: Write>(mut w: W, rows: &[EvalRow]) -> Result<()> {
    writeln!(w, "{CSV_NOTE}")?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    w.flush()?;
    Ok(())
}

// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of slot `slot` at a given point. Independent of the receiver, so all
/// receivers see the same slots.
pub fn slot_seed(master: u64, n_layers: usize, snr_index: usize, slot: u64) -> u64 {
    mix(mix(mix(mix(master) ^ n_layers as u64) ^ snr_index as u64) ^ slot)
}

enum Rx<'a> {
    LsLmmse(LsLmmseReceiver),
    KBest(LmmseKBestReceiver),
    Neural(&'a NeuralReceiver),
}

impl Rx<'_> {
    fn receive(
        &self,
        y: &crate::phy::ReceivedGrid,
        pattern: &PilotPattern,
        cfg: &SlotConfig,
        noise_var: f64,
    ) -> Result<LlrGrid> {
        match self {
            Rx::LsLmmse(r) => r.receive(y, pattern, cfg, noise_var),
            Rx::KBest(r) => r.receive(y, pattern, cfg),
            Rx::Neural(r) => r.infer(y, pattern, cfg, noise_var),
        }
    }
}

/// Channel statistics for the LMMSE channel estimator, drawn from the
/// configured channel with a seed derived from the evaluation seed.
pub fn lmmse_statistics(cfg: &Config) -> Result<ChannelStats> {
    let slot = cfg.slot.slot_config(1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.eval.seed ^ 0x57a7_5eed));
    ChannelStats::estimate_spec(&cfg.channel, &slot, cfg.eval.stats_samples, &mut rng)
}

/// Full sweep over layer counts, SNR points and receivers. `neural` is
/// required when the receiver list names it.
pub fn run_eval_sweep(cfg: &Config, neural: Option<&NeuralReceiver>) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    let e = &cfg.eval;
    if e.receivers.iter().any(|r| r == "neural") && neural.is_none() {
        return Err(Error::Config("receiver `neural` needs a checkpoint".into()));
    }
    if e.receivers.iter().any(|r| r == "lmmse-kbest") {
        if let Some(n) = e.n_layers.iter().find(|&&n| n > cfg.slot.n_rx) {
            return Err(Error::Config(format!(
                "lmmse-kbest needs at least as many receive antennas as layers: {n} layers, slot.n_rx = {}",
                cfg.slot.n_rx
            )));
        }
    }
    let pattern_all = build_pilot_pattern(&cfg.slot.slot_config(MAX_LAYERS)?, cfg.slot.pilot_seed)?;
    let stats = if e.receivers.iter().any(|r| r == "lmmse-kbest") {
        Some(lmmse_statistics(cfg)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &n_layers in &e.n_layers {
        let slot = cfg.slot.slot_config(n_layers)?;
        let pattern = pattern_all.truncated(n_layers)?;
        for (snr_index, &snr_db) in e.snr_db.iter().enumerate() {
            let noise = NoiseConfig::from_snr_db(snr_db);
            for name in &e.receivers {
                let rx = match name.as_str() {
                    "ls-lmmse" => Rx::LsLmmse(LsLmmseReceiver { llr_clip: e.llr_clip }),
                    "lmmse-kbest" => Rx::KBest(LmmseKBestReceiver::new(
                        stats.as_ref().expect("statistics prepared"),
                        &pattern,
                        noise.variance,
                        KBestConfig {
                            k: e.kbest_k,
                            llr_clip: e.llr_clip,
                        },
                    )?),
                    "neural" => {
                        let n = neural.expect("checked above");
                        n.check_contract(&slot)?;
                        Rx::Neural(n)
                    }
                    other => return Err(Error::Config(format!("unknown receiver `{other}`"))),
                };
                let row = run_point(cfg, name, &rx, &slot, &pattern, noise, snr_index)?;
                info!(
                    "{name} N_T={n_layers} {snr_db} dB: {} errors / {} bits over {} slots",
                    row.bit_errors, row.bits, row.slots
                );
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn run_point(
    cfg: &Config,
    name: &str,
    rx: &Rx<'_>,
    slot: &SlotConfig,
    pattern: &PilotPattern,
    noise: NoiseConfig,
    snr_index: usize,
) -> Result<EvalRow> {
    let e = &cfg.eval;
    let start = Instant::now();
    let (mut bits, mut bit_errors, mut slots, mut slot_errors) = (0u64, 0u64, 0u64, 0u64);
    while (bit_errors as usize) < e.min_errors && (slots as usize) < e.max_slots {
        let end = (slots + e.chunk_slots as u64).min(e.max_slots as u64);
        let results: Vec<(u64, u64)> = (slots..end)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(e.seed, slot.n_layers, snr_index, k));
                let model = cfg.channel.sample(&mut rng)?;
                let s = simulate_slot(slot, pattern, &model, noise, &mut rng)?;
                let llr = rx.receive(&s.y, pattern, slot, noise.variance)?;
                Ok((llr.bit_errors(&s.bits)? as u64, s.bits.bits.len() as u64))
            })
            .collect::<Result<_>>()?;
        for (errs, n) in results {
            bit_errors += errs;
            bits += n;
            slot_errors += u64::from(errs > 0);
        }
        slots = end;
    }
    Ok(EvalRow {
        receiver: name.to_string(),
        n_layers: slot.n_layers,
        snr_db: e.snr_db[snr_index],
        bits,
        bit_errors,
        slots,
        slot_errors,
        seconds: if e.timing { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}
