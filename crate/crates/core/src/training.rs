//! Training loop: random layer count and SNR per batch, simulated slots,
//! multi-iteration BCE loss, Adam.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, NoiseConfig};
use crate::error::{Error, Result};
use crate::neural::{slot_features, BatchInput, Mode, NeuralReceiver};
use crate::phy::{PilotPattern, SlotConfig};
use crate::sim::simulate_slot;
use crate::tensor::{AdamConfig, AdamState, Graph, Var};

/// Header of the training log.
pub const LOG_HEADER: &str = "step,n_layers,mean_noise_db,loss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub max_layers: usize,
    pub seed: u64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip: f64,
    /// Average the loss over all iterations; otherwise last iteration only.
    pub multi_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 1e-3,
            steps: 20_000,
            snr_db_min: 0.0,
            snr_db_max: 20.0,
            max_layers: 4,
            seed: 1,
            grad_clip: 1.0,
            multi_loss: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} is invalid",
                self.learning_rate
            )));
        }
        if !(self.snr_db_min <= self.snr_db_max) || !self.snr_db_min.is_finite() || !self.snr_db_max.is_finite() {
            return Err(Error::Config(format!(
                "SNR range [{}, {}] dB is invalid",
                self.snr_db_min, self.snr_db_max
            )));
        }
        if self.max_layers == 0 {
            return Err(Error::Config("max_layers must be at least 1".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::Config(format!("grad_clip {} is invalid", self.grad_clip)));
        }
        Ok(())
    }
}

/// Active layer count in `[1, max]` with `P(k) ∝ k`.
pub fn sample_num_layers(max: usize, rng: &mut impl Rng) -> usize {
    let total = max * (max + 1) / 2;
    let mut u = rng.random_range(0..total);
    for k in 1..=max {
        if u < k {
            return k;
        }
        u -= k;
    }
    max
}

/// SNR uniform in dB over `[min, max]`.
pub fn sample_snr_db(min: f64, max: f64, rng: &mut impl Rng) -> f64 {
    if min == max {
        min
    } else {
        rng.random_range(min..max)
    }
}

/// Mean over iterations of the masked BCE of each iteration's logits.
pub fn bce_multi_loss(g: &mut Graph, logits: &[Var], labels: &[f64], mask: &[bool]) -> Result<Var> {
    let terms = logits
        .iter()
        .map(|&l| g.bce_with_logits(l, labels, Some(mask)))
        .collect::<Result<Vec<_>>>()?;
    let loss = g.mean(&terms)?;
    let v = g.value(loss).data()[0];
    if !v.is_finite() {
        return Err(Error::Numerical(format!("loss is {v}")));
    }
    Ok(loss)
}

/// Labels and loss mask of a batch in the `[G, N_F, N_S, m]` logit layout.
pub fn batch_targets(cfg: &SlotConfig, bits: &[&crate::phy::BitGrid]) -> (Vec<f64>, Vec<bool>) {
    let m = cfg.bits_per_symbol;
    let re_mask = cfg.data_mask();
    let mut labels = Vec::with_capacity(bits.len() * cfg.n_layers * cfg.n_res() * m);
    let mut mask = Vec::with_capacity(labels.capacity());
    for b in bits {
        labels.extend(b.full_grid_labels(cfg));
        for _ in 0..cfg.n_layers {
            for &d in &re_mask {
                mask.extend(std::iter::repeat_n(d, m));
            }
        }
    }
    (labels, mask)
}

/// Outcome of one optimisation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub n_layers: usize,
    pub mean_noise_db: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

impl StepLog {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.8}",
            self.step, self.n_layers, self.mean_noise_db, self.loss
        )
    }
}

#[derive(Debug)]
pub struct Trainer {
    slot: SlotConfig,
    channel: ChannelSpec,
    pattern: PilotPattern,
    config: TrainConfig,
    receiver: NeuralReceiver,
    adam: AdamState,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    /// `slot.n_layers` is ignored; each batch draws its own layer count and
    /// uses the first layers of `pattern`.
    pub fn new(
        slot: SlotConfig,
        channel: ChannelSpec,
        pattern: PilotPattern,
        receiver: NeuralReceiver,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        channel.validate()?;
        if pattern.n_layers() < config.max_layers {
            return Err(Error::Config(format!(
                "pilot pattern has {} layers, training needs {}",
                pattern.n_layers(),
                config.max_layers
            )));
        }
        let slot = slot.with_layers(config.max_layers)?;
        receiver.check_contract(&slot)?;
        let adam = AdamState::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            receiver.params(),
        );
        Ok(Self {
            slot,
            channel,
            pattern,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            receiver,
            adam,
            step: 0,
        })
    }

    pub fn receiver(&self) -> &NeuralReceiver {
        &self.receiver
    }

    pub fn into_receiver(self) -> NeuralReceiver {
        self.receiver
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Simulate a batch, run forward/backward and apply one Adam update.
    pub fn step(&mut self) -> Result<StepLog> {
        let n_layers = sample_num_layers(self.config.max_layers, &mut self.rng);
        let cfg = self.slot.with_layers(n_layers)?;
        let pattern = self.pattern.truncated(n_layers)?;
        let mut inputs = Vec::with_capacity(self.config.batch_size);
        let mut bits = Vec::with_capacity(self.config.batch_size);
        let mut noise_db = 0.0;
        for _ in 0..self.config.batch_size {
            let snr = sample_snr_db(self.config.snr_db_min, self.config.snr_db_max, &mut self.rng);
            let noise = NoiseConfig::from_snr_db(snr);
            noise_db += noise.n0_db();
            let model = self.channel.sample(&mut self.rng)?;
            let s = simulate_slot(&cfg, &pattern, &model, noise, &mut self.rng)?;
            inputs.push(slot_features(&s.y, &pattern, n_layers, noise.variance)?);
            bits.push(s.bits);
        }
        let batch = BatchInput::stack(&inputs)?;
        let (labels, mask) = batch_targets(&cfg, &bits.iter().collect::<Vec<_>>());

        let mut g = Graph::new();
        let iterations = self.receiver.hyper().n_iterations;
        let logits = self.receiver.forward(&mut g, &batch, iterations, Mode::Training)?;
        let used = if self.config.multi_loss {
            &logits[..]
        } else {
            &logits[logits.len() - 1..]
        };
        let loss = bce_multi_loss(&mut g, used, &labels, &mask)?;
        let loss_value = g.value(loss).data()[0];
        g.backward(loss, self.receiver.params_mut())?;

        let params = self.receiver.params_mut();
        let grad_norm = params.grad_norm();
        if !grad_norm.is_finite() {
            return Err(Error::Numerical(format!(
                "gradient norm is {grad_norm} at step {}",
                self.step
            )));
        }
        let clip = self.config.grad_clip;
        let clipped = clip > 0.0 && grad_norm > clip;
        if clipped {
            params.scale_grads(clip / grad_norm);
            debug!("step {}: gradient norm {grad_norm:.3} clipped to {clip}", self.step);
        }
        self.adam.step(params)?;
        let log = StepLog {
            step: self.step,
            n_layers,
            mean_noise_db: noise_db / self.config.batch_size as f64,
            loss: loss_value,
            grad_norm,
            clipped,
        };
        self.step += 1;
        Ok(log)
    }

    /// Run the remaining configured steps, passing each log to `on_step`.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepLog) -> Result<()>) -> Result<()> {
        let mut clipped = 0usize;
        while self.step < self.config.steps {
            let log = self.step()?;
            clipped += usize::from(log.clipped);
            on_step(&log)?;
        }
        if clipped > 0 {
            warn!("gradient clipping was active on {clipped} of {} steps", self.step);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{gradcheck_hyperparams, SlotInput};
    use crate::phy::{build_pilot_pattern, BitGrid};
    use crate::tensor::Tensor;

    fn tiny_slot() -> (SlotConfig, SlotInput, BitGrid) {
        let cfg = SlotConfig::new(12, 14, 1, 2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pattern = build_pilot_pattern(&cfg, 0).unwrap();
        let noise = NoiseConfig::from_snr_db(8.0);
        let model = ChannelSpec::flat_rayleigh().sample(&mut rng).unwrap();
        let s = simulate_slot(&cfg, &pattern, &model, noise, &mut rng).unwrap();
        (cfg, slot_features(&s.y, &pattern, 1, noise.variance).unwrap(), s.bits)
    }

    fn trainer(config: TrainConfig, channel: ChannelSpec) -> Trainer {
        let slot = SlotConfig::new(24, 14, config.max_layers, 2, 4).unwrap();
        let pattern = build_pilot_pattern(&slot, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let rx = NeuralReceiver::new(gradcheck_hyperparams(), 2, 4, &mut rng).unwrap();
        Trainer::new(slot, channel, pattern, rx, config).unwrap()
    }

    fn constant_loss(logits: Vec<f64>, labels: &[f64], mask: &[bool]) -> f64 {
        let mut g = Graph::new();
        let n = logits.len();
        let l = g.constant(Tensor::new(vec![n], logits).unwrap()).unwrap();
        let loss = bce_multi_loss(&mut g, &[l], labels, mask).unwrap();
        g.value(loss).data()[0]
    }

    #[test]
    fn layer_count_pmf_is_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[sample_num_layers(4, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        for k in 1..=4 {
            let p = k as f64 / 10.0;
            let f = counts[k] as f64 / n as f64;
            assert!((f - p).abs() < 0.01, "P({k}) = {f}, want {p}");
        }
        assert!((0..100).all(|_| sample_num_layers(1, &mut rng) == 1));
    }

    #[test]
    fn snr_histogram_is_flat_in_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, bins) = (100_000, 5);
        let mut hist = vec![0usize; bins];
        for _ in 0..n {
            let s = sample_snr_db(0.0, 20.0, &mut rng);
            assert!((0.0..20.0).contains(&s));
            hist[(s / 4.0) as usize] += 1;
        }
        let expected = (n / bins) as f64;
        for (i, &c) in hist.iter().enumerate() {
            assert!((c as f64 - expected).abs() / expected < 0.02, "bin {i}: {c}");
        }
        assert_eq!(sample_snr_db(7.0, 7.0, &mut rng), 7.0);
    }

    #[test]
    fn zero_logits_give_ln2() {
        let (cfg, _, bits) = tiny_slot();
        let (labels, mask) = batch_targets(&cfg, &[&bits]);
        let v = constant_loss(vec![0.0; labels.len()], &labels, &mask);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_logits_have_no_loss() {
        let (cfg, _, bits) = tiny_slot();
        let (labels, mask) = batch_targets(&cfg, &[&bits]);
        let clip = 20.0;
        let logits = labels.iter().map(|&b| if b > 0.5 { clip } else { -clip }).collect();
        assert!(constant_loss(logits, &labels, &mask) < 1e-8);
    }

    #[test]
    fn masked_labels_do_not_affect_loss() {
        let (cfg, input, bits) = tiny_slot();
        let (labels, mask) = batch_targets(&cfg, &[&bits]);
        let rx = NeuralReceiver::new(gradcheck_hyperparams(), 2, 4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let batch = BatchInput::stack(&[input]).unwrap();
        let loss = |labels: &[f64]| {
            let mut g = Graph::new();
            let out = rx.forward(&mut g, &batch, 2, Mode::Training).unwrap();
            let l = bce_multi_loss(&mut g, &out, labels, &mask).unwrap();
            g.value(l).data()[0]
        };
        let mut flipped = labels.clone();
        let mut n = 0;
        for (y, &keep) in flipped.iter_mut().zip(&mask) {
            if !keep {
                *y = 1.0 - *y;
                n += 1;
            }
        }
        assert_eq!(n, 2 * 12 * 4);
        assert_eq!(loss(&labels).to_bits(), loss(&flipped).to_bits());
    }

    #[test]
    fn loss_matches_hand_sum() {
        let (cfg, input, bits) = tiny_slot();
        let (labels, mask) = batch_targets(&cfg, &[&bits]);
        let rx = NeuralReceiver::new(gradcheck_hyperparams(), 2, 4, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let batch = BatchInput::stack(&[input]).unwrap();
        let mut g = Graph::new();
        let out = rx.forward(&mut g, &batch, 2, Mode::Training).unwrap();
        let loss = bce_multi_loss(&mut g, &out, &labels, &mask).unwrap();
        let mut total = 0.0;
        for &o in &out {
            let (mut sum, mut count) = (0.0, 0usize);
            for ((&l, &y), &keep) in g.value(o).data().iter().zip(&labels).zip(&mask) {
                if keep {
                    let p = 1.0 / (1.0 + (-l).exp());
                    sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    count += 1;
                }
            }
            assert_eq!(count, 12 * 12 * 4);
            total += sum / count as f64;
        }
        let hand = total / out.len() as f64;
        assert!((g.value(loss).data()[0] - hand).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_freezes_weights() {
        let mut t = trainer(
            TrainConfig {
                learning_rate: 0.0,
                max_layers: 2,
                ..TrainConfig::default()
            },
            ChannelSpec::flat_rayleigh(),
        );
        let before = t.receiver().params().clone();
        for _ in 0..3 {
            assert!(t.step().unwrap().loss.is_finite());
        }
        for (name, v) in before.iter() {
            assert_eq!(t.receiver().params().get(name).unwrap(), v);
        }
    }

    #[test]
    fn fixed_seed_reproduces_losses() {
        let cfg = TrainConfig {
            max_layers: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let run = || {
            let mut t = trainer(cfg.clone(), ChannelSpec::tdl("tdl-c", 300.0, 100.0));
            (0..5).map(|_| t.step().unwrap().csv_line()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn last_iteration_only_is_a_switch() {
        let base = TrainConfig {
            max_layers: 2,
            ..TrainConfig::default()
        };
        let multi = trainer(base.clone(), ChannelSpec::flat_rayleigh()).step().unwrap().loss;
        let last = trainer(
            TrainConfig {
                multi_loss: false,
                ..base
            },
            ChannelSpec::flat_rayleigh(),
        )
        .step()
        .unwrap()
        .loss;
        assert!(multi.is_finite() && last.is_finite());
        assert_ne!(multi, last);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                snr_db_min: 10.0,
                snr_db_max: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                max_layers: 0,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
