//! Neural slot receiver: per-layer CNN embedding, unrolled message passing
//! between layers with CNN state updates, and an MLP read-out to LLRs.

mod features;
mod gradcheck;

pub use features::{input_feature_count, slot_features, BatchInput, SlotInput, MIN_NOISE_DB};
pub use gradcheck::{gradcheck_hyperparams, neural_gradcheck};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::classic::LlrGrid;
use crate::error::{Error, Result};
use crate::phy::{PilotPattern, ReceivedGrid, SlotConfig};
use crate::tensor::{Graph, ParamSet, Tensor, Var};

/// Shape of the network. Conv widths are those of the two hidden separable
/// convolutions of the embedding and state-update CNNs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub d_s: usize,
    pub d_m: usize,
    pub n_iterations: usize,
    pub message_hidden: usize,
    pub readout_hidden: usize,
    pub init_width: usize,
    pub state_width: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            d_s: 32,
            d_m: 32,
            n_iterations: 2,
            message_hidden: 64,
            readout_hidden: 64,
            init_width: 64,
            state_width: 64,
        }
    }
}

impl Hyperparams {
    /// Conv widths 128 (embedding) and 256 (state update).
    pub fn paper_scale() -> Self {
        Self {
            d_s: 64,
            d_m: 64,
            message_hidden: 128,
            readout_hidden: 128,
            init_width: 128,
            state_width: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_s", self.d_s),
            ("d_m", self.d_m),
            ("n_iterations", self.n_iterations),
            ("message_hidden", self.message_hidden),
            ("readout_hidden", self.readout_hidden),
            ("init_width", self.init_width),
            ("state_width", self.state_width),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("hyperparameter {name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Whether read-outs are produced after every iteration (for the
/// multi-iteration loss) or only after the last one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Weights of the receiver together with the input contract they were built
/// for (receive antennas, bits per symbol).
#[derive(Debug, Clone)]
pub struct NeuralReceiver {
    hyper: Hyperparams,
    n_rx: usize,
    bits_per_symbol: usize,
    params: ParamSet,
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Tensor::from_fn(shape, |_| dist.sample(rng))
}

fn add_dense(p: &mut ParamSet, prefix: &str, idx: usize, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<()> {
    p.insert(format!("{prefix}.w{idx}"), glorot(&[d_in, d_out], d_in, d_out, rng))?;
    p.insert(format!("{prefix}.b{idx}"), Tensor::zeros(&[d_out]))
}

// Depthwise filters are initialised per channel (fan 9 in, 9 out).
fn add_sepconv(p: &mut ParamSet, prefix: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Result<()> {
    p.insert(format!("{prefix}.dw"), glorot(&[3, 3, c_in], 9, 9, rng))?;
    p.insert(format!("{prefix}.pw"), glorot(&[c_in, c_out], c_in, c_out, rng))?;
    p.insert(format!("{prefix}.b"), Tensor::zeros(&[c_out]))
}

/// Names of every parameter tensor, with shapes, for the given contract.
pub fn parameter_layout(hyper: &Hyperparams, n_rx: usize, bits_per_symbol: usize) -> Vec<(String, Vec<usize>)> {
    let mut v = Vec::new();
    let conv = |v: &mut Vec<(String, Vec<usize>)>, prefix: String, c_in: usize, c_out: usize| {
        v.push((format!("{prefix}.dw"), vec![3, 3, c_in]));
        v.push((format!("{prefix}.pw"), vec![c_in, c_out]));
        v.push((format!("{prefix}.b"), vec![c_out]));
    };
    let dense = |v: &mut Vec<(String, Vec<usize>)>, prefix: &str, idx: usize, d_in: usize, d_out: usize| {
        v.push((format!("{prefix}.w{idx}"), vec![d_in, d_out]));
        v.push((format!("{prefix}.b{idx}"), vec![d_out]));
    };
    let c_in = input_feature_count(n_rx);
    let h = hyper;
    conv(&mut v, "init.conv0".into(), c_in, h.init_width);
    conv(&mut v, "init.conv1".into(), h.init_width, h.init_width);
    conv(&mut v, "init.conv2".into(), h.init_width, h.d_s);
    for t in 0..h.n_iterations {
        let msg = format!("iter{t}.msg");
        dense(&mut v, &msg, 0, h.d_s, h.message_hidden);
        dense(&mut v, &msg, 1, h.message_hidden, h.d_m);
        conv(&mut v, format!("iter{t}.state.conv0"), h.d_m + 2 + h.d_s, h.state_width);
        conv(&mut v, format!("iter{t}.state.conv1"), h.state_width, h.state_width);
        conv(&mut v, format!("iter{t}.state.conv2"), h.state_width, h.d_s);
    }
    dense(&mut v, "readout", 0, h.d_s, h.readout_hidden);
    dense(&mut v, "readout", 1, h.readout_hidden, bits_per_symbol);
    v
}

impl NeuralReceiver {
    /// Glorot-uniform weights, zero biases.
    pub fn new(hyper: Hyperparams, n_rx: usize, bits_per_symbol: usize, rng: &mut impl Rng) -> Result<Self> {
        hyper.validate()?;
        if n_rx == 0 {
            return Err(Error::Config("n_rx must be at least 1".into()));
        }
        let mut p = ParamSet::new();
        let h = hyper;
        let c_in = input_feature_count(n_rx);
        add_sepconv(&mut p, "init.conv0", c_in, h.init_width, rng)?;
        add_sepconv(&mut p, "init.conv1", h.init_width, h.init_width, rng)?;
        add_sepconv(&mut p, "init.conv2", h.init_width, h.d_s, rng)?;
        for t in 0..h.n_iterations {
            let msg = format!("iter{t}.msg");
            add_dense(&mut p, &msg, 0, h.d_s, h.message_hidden, rng)?;
            add_dense(&mut p, &msg, 1, h.message_hidden, h.d_m, rng)?;
            add_sepconv(
                &mut p,
                &format!("iter{t}.state.conv0"),
                h.d_m + 2 + h.d_s,
                h.state_width,
                rng,
            )?;
            add_sepconv(
                &mut p,
                &format!("iter{t}.state.conv1"),
                h.state_width,
                h.state_width,
                rng,
            )?;
            add_sepconv(&mut p, &format!("iter{t}.state.conv2"), h.state_width, h.d_s, rng)?;
        }
        add_dense(&mut p, "readout", 0, h.d_s, h.readout_hidden, rng)?;
        add_dense(&mut p, "readout", 1, h.readout_hidden, bits_per_symbol, rng)?;
        Self::from_params(hyper, n_rx, bits_per_symbol, p)
    }

    /// Wrap existing weights after checking names and shapes against the
    /// layout implied by the contract.
    pub fn from_params(hyper: Hyperparams, n_rx: usize, bits_per_symbol: usize, params: ParamSet) -> Result<Self> {
        hyper.validate()?;
        let layout = parameter_layout(&hyper, n_rx, bits_per_symbol);
        for (name, shape) in &layout {
            let t = params
                .get(name)
                .map_err(|_| Error::Load(format!("missing parameter tensor `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Load(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        if let Some(extra) = params.names().find(|n| !layout.iter().any(|(l, _)| l == n)) {
            return Err(Error::Load(format!("unknown parameter tensor `{extra}`")));
        }
        Ok(Self {
            hyper,
            n_rx,
            bits_per_symbol,
            params,
        })
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn sepconv(&self, g: &mut Graph, x: Var, prefix: &str, relu: bool) -> Result<Var> {
        let dw = g.param(&self.params, &format!("{prefix}.dw"))?;
        let pw = g.param(&self.params, &format!("{prefix}.pw"))?;
        let b = g.param(&self.params, &format!("{prefix}.b"))?;
        let y = g.separable_conv2d(x, dw, pw, b)?;
        if relu {
            g.relu(y)
        } else {
            Ok(y)
        }
    }

    fn mlp(&self, g: &mut Graph, x: Var, prefix: &str) -> Result<Var> {
        let w0 = g.param(&self.params, &format!("{prefix}.w0"))?;
        let b0 = g.param(&self.params, &format!("{prefix}.b0"))?;
        let h = g.dense(x, w0, b0)?;
        let h = g.relu(h)?;
        let w1 = g.param(&self.params, &format!("{prefix}.w1"))?;
        let b1 = g.param(&self.params, &format!("{prefix}.b1"))?;
        g.dense(h, w1, b1)
    }

    /// Initial state `[G, N_F, N_S, d_S]` from the input features.
    pub fn cnn_init_embed(&self, g: &mut Graph, features: Var) -> Result<Var> {
        let c = *g.value(features).shape().last().unwrap_or(&0);
        let want = input_feature_count(self.n_rx);
        if c != want {
            return Err(Error::dim("input feature planes", want, c));
        }
        let x = self.sepconv(g, features, "init.conv0", true)?;
        let x = self.sepconv(g, x, "init.conv1", true)?;
        self.sepconv(g, x, "init.conv2", false)
    }

    /// Per-layer messages of iteration `t`, each layer receiving the mean of
    /// the messages of the other layers (zero for a single layer).
    pub fn message_pass_aggregate(&self, g: &mut Graph, state: Var, n_layers: usize, t: usize) -> Result<Var> {
        self.check_iteration(t)?;
        let m = self.mlp(g, state, &format!("iter{t}.msg"))?;
        g.others_mean(m, n_layers)
    }

    pub fn state_update(&self, g: &mut Graph, messages: Var, pe: Var, state: Var, t: usize) -> Result<Var> {
        self.check_iteration(t)?;
        let x = g.concat(&[messages, pe, state])?;
        let x = self.sepconv(g, x, &format!("iter{t}.state.conv0"), true)?;
        let x = self.sepconv(g, x, &format!("iter{t}.state.conv1"), true)?;
        let x = self.sepconv(g, x, &format!("iter{t}.state.conv2"), false)?;
        g.add(x, state)
    }

    /// Logits `[G, N_F, N_S, m]`; positive favours bit 1.
    pub fn readout(&self, g: &mut Graph, state: Var) -> Result<Var> {
        self.mlp(g, state, "readout")
    }

    fn check_iteration(&self, t: usize) -> Result<()> {
        if t >= self.hyper.n_iterations {
            return Err(Error::Contract(format!(
                "iteration {t} requested, network has {}",
                self.hyper.n_iterations
            )));
        }
        Ok(())
    }

    /// Full forward on a batch. Returns one logit tensor per iteration in
    /// training mode, only the last in inference mode. `iterations` may be
    /// smaller than the trained count.
    pub fn forward(&self, g: &mut Graph, input: &BatchInput, iterations: usize, mode: Mode) -> Result<Vec<Var>> {
        if iterations == 0 || iterations > self.hyper.n_iterations {
            return Err(Error::Contract(format!(
                "{iterations} iterations requested, network supports 1..={}",
                self.hyper.n_iterations
            )));
        }
        let x = g.constant(input.features.clone())?;
        let pe = g.constant(input.pe.clone())?;
        let mut s = self.cnn_init_embed(g, x)?;
        let mut out = Vec::new();
        for t in 0..iterations {
            let m = self.message_pass_aggregate(g, s, input.n_layers, t)?;
            s = self.state_update(g, m, pe, s, t)?;
            if mode == Mode::Training || t + 1 == iterations {
                out.push(self.readout(g, s)?);
            }
        }
        Ok(out)
    }

    /// LLRs of one received slot on its data REs.
    pub fn infer(&self, y: &ReceivedGrid, pattern: &PilotPattern, cfg: &SlotConfig, noise_var: f64) -> Result<LlrGrid> {
        self.infer_with(y, pattern, cfg, noise_var, self.hyper.n_iterations)
    }

    pub fn infer_with(
        &self,
        y: &ReceivedGrid,
        pattern: &PilotPattern,
        cfg: &SlotConfig,
        noise_var: f64,
        iterations: usize,
    ) -> Result<LlrGrid> {
        self.check_contract(cfg)?;
        let input = BatchInput::stack(&[slot_features(y, pattern, cfg.n_layers, noise_var)?])?;
        let mut g = Graph::new();
        let logits = self.forward(&mut g, &input, iterations, Mode::Inference)?;
        let v = g.value(*logits.last().expect("one read-out"));
        let m = cfg.bits_per_symbol;
        let mut out = LlrGrid::zeros(cfg);
        let res = cfg.data_res();
        for l in 0..cfg.n_layers {
            for (k, &(f, s)) in res.iter().enumerate() {
                let src = ((l * cfg.n_subcarriers + f) * cfg.n_symbols + s) * m;
                let dst = (l * out.n_data_res + k) * m;
                out.llrs[dst..dst + m].copy_from_slice(&v.data()[src..src + m]);
            }
        }
        Ok(out)
    }

    pub fn check_contract(&self, cfg: &SlotConfig) -> Result<()> {
        if cfg.n_rx != self.n_rx {
            return Err(Error::Contract(format!(
                "weights expect {} receive antennas, slot has {}",
                self.n_rx, cfg.n_rx
            )));
        }
        if cfg.bits_per_symbol != self.bits_per_symbol {
            return Err(Error::Contract(format!(
                "weights were built for {} bits per symbol, slot uses {}",
                self.bits_per_symbol, cfg.bits_per_symbol
            )));
        }
        Ok(())
    }
}
