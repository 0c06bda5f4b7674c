use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{slot_features, BatchInput, Hyperparams, Mode, NeuralReceiver};
use crate::channel::{ChannelSpec, NoiseConfig};
use crate::error::Result;
use crate::phy::{build_pilot_pattern, SlotConfig};
use crate::sim::simulate_slot;
use crate::tensor::{finite_difference_check, GradCheck};
use crate::training::{batch_targets, bce_multi_loss};

/// Small network used by the end-to-end gradient check.
pub fn gradcheck_hyperparams() -> Hyperparams {
    Hyperparams {
        d_s: 8,
        d_m: 8,
        n_iterations: 2,
        message_hidden: 8,
        readout_hidden: 8,
        init_width: 8,
        state_width: 8,
    }
}

/// Autodiff against central differences through the complete training
/// forward (embedding, two iterations, read-outs, multi-iteration loss) on
/// two 12×14 slots with two layers sharing a CDM group, TDL-B channel.
pub fn neural_gradcheck(seed: u64, step: f64) -> Result<Vec<GradCheck>> {
    let cfg = SlotConfig::new(12, 14, 2, 2, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rx = NeuralReceiver::new(gradcheck_hyperparams(), cfg.n_rx, cfg.bits_per_symbol, &mut rng)?;
    let pattern = build_pilot_pattern(&cfg, seed)?;
    let spec = ChannelSpec::tdl("tdl-b", 100.0, 400.0);
    let mut inputs = Vec::new();
    let mut bits = Vec::new();
    for snr in [5.0, 15.0] {
        let noise = NoiseConfig::from_snr_db(snr);
        let model = spec.sample(&mut rng)?;
        let s = simulate_slot(&cfg, &pattern, &model, noise, &mut rng)?;
        inputs.push(slot_features(&s.y, &pattern, cfg.n_layers, noise.variance)?);
        bits.push(s.bits);
    }
    let batch = BatchInput::stack(&inputs)?;
    let (labels, mask) = batch_targets(&cfg, &bits.iter().collect::<Vec<_>>());
    finite_difference_check(rx.params(), step, |g, p| {
        let net = NeuralReceiver {
            params: p.clone(),
            ..rx.clone()
        };
        let logits = net.forward(g, &batch, 2, Mode::Training)?;
        bce_multi_loss(g, &logits, &labels, &mask)
    })
}
