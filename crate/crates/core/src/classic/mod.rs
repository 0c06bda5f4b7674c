//! Classical receivers: pilot-based channel estimation, LMMSE equalization,
//! K-best detection and max-log demapping.

mod detect;
mod estimate;
mod linalg;

pub use detect::{
    gaussian_maxlog, kbest_detect, lmmse_equalize, maxlog_demap, ml_oracle, Candidate, Equalized, KBestConfig,
    MlOutput, ML_MAX_HYPOTHESES, ZF_RIDGE,
};
pub use estimate::{
    interpolate_channel, lmmse_channel_estimate, ls_estimate, ChannelEstimate, ChannelStats, LmmseEstimator, LsMode,
    PilotEstimates,
};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phy::{BitGrid, Constellation, PilotPattern, ReceivedGrid, SlotConfig};

/// Soft bit estimates of one slot, `[layer][data RE][bit]`; positive values
/// favour bit 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrGrid {
    pub n_layers: usize,
    pub n_data_res: usize,
    pub bits_per_symbol: usize,
    pub llrs: Vec<f64>,
}

impl LlrGrid {
    pub fn zeros(cfg: &SlotConfig) -> Self {
        let n_data_res = cfg.data_res_per_layer();
        Self {
            n_layers: cfg.n_layers,
            n_data_res,
            bits_per_symbol: cfg.bits_per_symbol,
            llrs: vec![0.0; cfg.n_layers * n_data_res * cfg.bits_per_symbol],
        }
    }

    pub fn hard_bits(&self) -> Vec<u8> {
        self.llrs.iter().map(|&l| u8::from(l > 0.0)).collect()
    }

    pub fn bit_errors(&self, truth: &BitGrid) -> Result<usize> {
        if truth.bits.len() != self.llrs.len() {
            return Err(Error::dim("bits", self.llrs.len(), truth.bits.len()));
        }
        Ok(self
            .llrs
            .iter()
            .zip(&truth.bits)
            .filter(|(l, b)| u8::from(**l > 0.0) != **b)
            .count())
    }

    fn re_mut(&mut self, layer: usize, re: usize) -> &mut [f64] {
        let m = self.bits_per_symbol;
        let o = (layer * self.n_data_res + re) * m;
        &mut self.llrs[o..o + m]
    }
}

fn check_inputs(y: &ReceivedGrid, pattern: &PilotPattern, cfg: &SlotConfig) -> Result<()> {
    cfg.validate()?;
    if (y.n_subcarriers, y.n_symbols) != (cfg.n_subcarriers, cfg.n_symbols) {
        return Err(Error::dim("received subcarriers", cfg.n_subcarriers, y.n_subcarriers));
    }
    if y.n_rx != cfg.n_rx {
        return Err(Error::dim("receive antennas", cfg.n_rx, y.n_rx));
    }
    if pattern.n_layers() < cfg.n_layers {
        return Err(Error::dim("pilot layers", cfg.n_layers, pattern.n_layers()));
    }
    Ok(())
}

// Ĥ at (f, s) as an n_rx × n_tx matrix and the summed estimation-error variance.
fn stack_estimates(est: &[ChannelEstimate], f: usize, s: usize, h: &mut [Complex64]) -> f64 {
    let n_tx = est.len();
    let mut err = 0.0;
    for (t, e) in est.iter().enumerate() {
        for (r, v) in e.at(f, s).iter().enumerate() {
            h[r * n_tx + t] = *v;
        }
        err += e.err_var[f * e.n_symbols + s];
    }
    err
}

/// LS channel estimation with cover despreading and linear interpolation,
/// LMMSE equalization and Gaussian max-log demapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsLmmseReceiver {
    pub llr_clip: f64,
}

impl Default for LsLmmseReceiver {
    fn default() -> Self {
        Self { llr_clip: 20.0 }
    }
}

impl LsLmmseReceiver {
    pub fn receive(
        &self,
        y: &ReceivedGrid,
        pattern: &PilotPattern,
        cfg: &SlotConfig,
        noise_var: f64,
    ) -> Result<LlrGrid> {
        check_inputs(y, pattern, cfg)?;
        let est = (0..cfg.n_layers)
            .map(|l| {
                let ls = ls_estimate(y, pattern, l, LsMode::Despread)?;
                interpolate_channel(&ls, cfg.n_subcarriers, cfg.n_symbols, noise_var)
            })
            .collect::<Result<Vec<_>>>()?;
        equalize_and_demap(y, &est, cfg, noise_var, self.llr_clip)
    }
}

fn equalize_and_demap(
    y: &ReceivedGrid,
    est: &[ChannelEstimate],
    cfg: &SlotConfig,
    noise_var: f64,
    clip: f64,
) -> Result<LlrGrid> {
    let c = Constellation::new(cfg.bits_per_symbol)?;
    let n_tx = cfg.n_layers;
    let mut out = LlrGrid::zeros(cfg);
    let mut h = vec![Complex64::new(0.0, 0.0); cfg.n_rx * n_tx];
    for (k, (f, s)) in cfg.data_res().into_iter().enumerate() {
        let err = stack_estimates(est, f, s, &mut h);
        let eq = lmmse_equalize(y.at(f, s), &h, n_tx, noise_var + err)?;
        for t in 0..n_tx {
            let z = eq.x_hat[t] / eq.gain[t];
            gaussian_maxlog(z, eq.post_noise[t], &c, clip, out.re_mut(t, k));
        }
    }
    Ok(out)
}

/// LMMSE channel estimation from second-order statistics followed by K-best
/// detection with max-log demapping. Filters are built for one noise level.
#[derive(Debug, Clone)]
pub struct LmmseKBestReceiver {
    estimators: Vec<LmmseEstimator>,
    noise_var: f64,
    kbest: KBestConfig,
}

impl LmmseKBestReceiver {
    pub fn new(stats: &ChannelStats, pattern: &PilotPattern, noise_var: f64, kbest: KBestConfig) -> Result<Self> {
        kbest.validate()?;
        let estimators = (0..pattern.n_layers())
            .map(|l| LmmseEstimator::new(stats, pattern, l, noise_var, LsMode::Despread))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            estimators,
            noise_var,
            kbest,
        })
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Channel estimates of the first `cfg.n_layers` layers.
    pub fn estimate(&self, y: &ReceivedGrid, pattern: &PilotPattern, cfg: &SlotConfig) -> Result<Vec<ChannelEstimate>> {
        check_inputs(y, pattern, cfg)?;
        if self.estimators.len() < cfg.n_layers {
            return Err(Error::dim("prepared layers", cfg.n_layers, self.estimators.len()));
        }
        self.estimators[..cfg.n_layers]
            .iter()
            .map(|e| e.estimate(y, pattern))
            .collect()
    }

    pub fn receive(&self, y: &ReceivedGrid, pattern: &PilotPattern, cfg: &SlotConfig) -> Result<LlrGrid> {
        let est = self.estimate(y, pattern, cfg)?;
        let c = Constellation::new(cfg.bits_per_symbol)?;
        let n_tx = cfg.n_layers;
        let m = cfg.bits_per_symbol;
        let mut out = LlrGrid::zeros(cfg);
        let mut h = vec![Complex64::new(0.0, 0.0); cfg.n_rx * n_tx];
        for (k, (f, s)) in cfg.data_res().into_iter().enumerate() {
            let err = stack_estimates(&est, f, s, &mut h);
            let cands = kbest_detect(y.at(f, s), &h, n_tx, &c, self.kbest.k)?;
            let llrs = maxlog_demap(&cands, n_tx, &c, self.noise_var + err, self.kbest.llr_clip)?;
            for t in 0..n_tx {
                out.re_mut(t, k).copy_from_slice(&llrs[t * m..(t + 1) * m]);
            }
        }
        Ok(out)
    }
}
