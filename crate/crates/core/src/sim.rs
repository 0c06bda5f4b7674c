//! End-to-end generation of one simulated slot.

use rand::Rng;

use crate::channel::{add_awgn, apply_channel, sample_channel, ChannelModel, ChannelRealization, NoiseConfig};
use crate::error::Result;
use crate::phy::{assemble_slot, BitGrid, PilotPattern, ReceivedGrid, ResourceGrid, SlotConfig};

#[derive(Debug, Clone)]
pub struct SlotSample {
    pub bits: BitGrid,
    pub tx: ResourceGrid,
    pub channel: ChannelRealization,
    pub noise: NoiseConfig,
    pub y: ReceivedGrid,
}

/// Random bits, channel draw and noise for one slot. Draw order: bits,
/// channel, noise.
pub fn simulate_slot(
    cfg: &SlotConfig,
    pattern: &PilotPattern,
    model: &ChannelModel,
    noise: NoiseConfig,
    rng: &mut impl Rng,
) -> Result<SlotSample> {
    cfg.validate()?;
    let bits = BitGrid::random(cfg, rng);
    let tx = assemble_slot(&bits, pattern, cfg)?;
    let channel = sample_channel(model, cfg, rng)?;
    let clean = apply_channel(&channel, &tx)?;
    let y = add_awgn(&clean, &noise, rng);
    Ok(SlotSample {
        bits,
        tx,
        channel,
        noise,
        y,
    })
}
