//! Fixtures shared by the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nrx_core::channel::{ChannelSpec, NoiseConfig};
use nrx_core::phy::{build_pilot_pattern, PilotPattern, SlotConfig};
use nrx_core::sim::{simulate_slot, SlotSample};

/// One simulated slot on a TDL-B channel at `snr_db`.
pub struct Fixture {
    pub cfg: SlotConfig,
    pub pattern: PilotPattern,
    pub noise: NoiseConfig,
    pub slot: SlotSample,
}

pub fn fixture(n_subcarriers: usize, n_layers: usize, n_rx: usize, snr_db: f64, seed: u64) -> Fixture {
    let cfg = SlotConfig::new(n_subcarriers, 14, n_layers, n_rx, 4).expect("valid slot");
    let pattern = build_pilot_pattern(&cfg, 0).expect("pilots");
    let noise = NoiseConfig::from_snr_db(snr_db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ChannelSpec::tdl("tdl-b", 100.0, 400.0)
        .sample(&mut rng)
        .expect("channel");
    let slot = simulate_slot(&cfg, &pattern, &model, noise, &mut rng).expect("slot");
    Fixture {
        cfg,
        pattern,
        noise,
        slot,
    }
}
