//! Frequency-domain MIMO channels, `y = H x + w` per resource element.

mod spec;
mod tdl;

pub use spec::ChannelSpec;
pub use tdl::TdlProfile;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::phy::{ReceivedGrid, ResourceGrid, SlotConfig};

/// Sinusoids per tap in the sum-of-sinusoids Doppler model.
pub const JAKES_SINUSOIDS: usize = 32;
pub const DEFAULT_SUBCARRIER_SPACING: f64 = 30e3;
/// 30 kHz numerology symbol duration including the normal cyclic prefix.
pub const DEFAULT_SYMBOL_DURATION: f64 = (1.0 + 144.0 / 2048.0) / 30e3;

#[derive(Debug, Clone, PartialEq)]
pub struct TdlModel {
    pub profile: TdlProfile,
    /// RMS delay spread in seconds.
    pub delay_spread: f64,
    /// Maximum Doppler shift in Hz.
    pub doppler: f64,
    pub subcarrier_spacing: f64,
    pub symbol_duration: f64,
}

impl TdlModel {
    pub fn new(profile: TdlProfile, delay_spread: f64, doppler: f64) -> Self {
        Self {
            profile,
            delay_spread,
            doppler,
            subcarrier_spacing: DEFAULT_SUBCARRIER_SPACING,
            symbol_duration: DEFAULT_SYMBOL_DURATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// One i.i.d. CN(0, 1) matrix per slot, flat in time and frequency.
    FlatRayleighBlock,
    Tdl(TdlModel),
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelModel::FlatRayleighBlock => Ok(()),
            ChannelModel::Tdl(m) => {
                m.profile.validate()?;
                if !(m.delay_spread > 0.0 && m.delay_spread.is_finite()) {
                    return Err(Error::ModelValidation(format!(
                        "delay spread must be positive, got {}",
                        m.delay_spread
                    )));
                }
                if !(m.doppler >= 0.0 && m.doppler.is_finite()) {
                    return Err(Error::ModelValidation(format!("negative Doppler {}", m.doppler)));
                }
                if !(m.subcarrier_spacing > 0.0 && m.symbol_duration > 0.0) {
                    return Err(Error::ModelValidation("non-positive numerology".into()));
                }
                Ok(())
            }
        }
    }
}

/// Per-RE channel matrices, `[f][s][rx][tx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub h: Vec<Complex64>,
}

impl ChannelRealization {
    /// `N_RX × N_TX` matrix of RE `(f, s)`, row-major.
    pub fn matrix(&self, f: usize, s: usize) -> &[Complex64] {
        let n = self.n_rx * self.n_tx;
        let o = (f * self.n_symbols + s) * n;
        &self.h[o..o + n]
    }

    pub fn coeff(&self, f: usize, s: usize, rx: usize, tx: usize) -> Complex64 {
        self.matrix(f, s)[rx * self.n_tx + tx]
    }
}

pub(crate) fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw an independent realization for every (RX, TX) antenna pair.
pub fn sample_channel(model: &ChannelModel, cfg: &SlotConfig, rng: &mut impl Rng) -> Result<ChannelRealization> {
    model.validate()?;
    let (nf, ns, nr, nt) = (cfg.n_subcarriers, cfg.n_symbols, cfg.n_rx, cfg.n_tx());
    let mut h = vec![Complex64::new(0.0, 0.0); nf * ns * nr * nt];
    match model {
        ChannelModel::FlatRayleighBlock => {
            let mats: Vec<Complex64> = (0..nr * nt).map(|_| complex_normal(rng)).collect();
            for chunk in h.chunks_exact_mut(nr * nt) {
                chunk.copy_from_slice(&mats);
            }
        }
        ChannelModel::Tdl(m) => {
            let taps = m.profile.delays.len();
            let delays: Vec<f64> = m.profile.delays.iter().map(|d| d * m.delay_spread).collect();
            // phasor[f][k] = exp(-j 2π f_n τ_k), subcarriers centred on the carrier
            let mut phasor = vec![Complex64::new(0.0, 0.0); nf * taps];
            for f in 0..nf {
                let freq = (f as f64 - (nf / 2) as f64) * m.subcarrier_spacing;
                for (k, tau) in delays.iter().enumerate() {
                    phasor[f * taps + k] = Complex64::from_polar(1.0, -2.0 * PI * freq * tau);
                }
            }
            let mut gains = vec![Complex64::new(0.0, 0.0); ns * taps];
            for rx in 0..nr {
                for tx in 0..nt {
                    for (k, power) in m.profile.powers.iter().enumerate() {
                        let amp = (power / JAKES_SINUSOIDS as f64).sqrt();
                        let rays: Vec<(f64, f64)> = (0..JAKES_SINUSOIDS)
                            .map(|_| {
                                let aoa = rng.random_range(0.0..2.0 * PI);
                                let phase = rng.random_range(0.0..2.0 * PI);
                                (2.0 * PI * m.doppler * aoa.cos(), phase)
                            })
                            .collect();
                        for s in 0..ns {
                            let t = s as f64 * m.symbol_duration;
                            let g: Complex64 = rays
                                .iter()
                                .map(|(w, phase)| Complex64::from_polar(1.0, w * t + phase))
                                .sum();
                            gains[s * taps + k] = g * amp;
                        }
                    }
                    for f in 0..nf {
                        let ph = &phasor[f * taps..(f + 1) * taps];
                        for s in 0..ns {
                            let g = &gains[s * taps..(s + 1) * taps];
                            let v: Complex64 = ph.iter().zip(g).map(|(a, b)| a * b).sum();
                            h[((f * ns + s) * nr + rx) * nt + tx] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(ChannelRealization {
        n_subcarriers: nf,
        n_symbols: ns,
        n_rx: nr,
        n_tx: nt,
        h,
    })
}

/// Noiseless received grid `y = H x` for every RE.
pub fn apply_channel(h: &ChannelRealization, x: &ResourceGrid) -> Result<ReceivedGrid> {
    if x.n_layers != h.n_tx {
        return Err(Error::dim("transmit layers", h.n_tx, x.n_layers));
    }
    if x.n_subcarriers != h.n_subcarriers {
        return Err(Error::dim("subcarriers", h.n_subcarriers, x.n_subcarriers));
    }
    if x.n_symbols != h.n_symbols {
        return Err(Error::dim("symbols", h.n_symbols, x.n_symbols));
    }
    let mut y = ReceivedGrid::zeros(h.n_subcarriers, h.n_symbols, h.n_rx);
    let mut xv = vec![Complex64::new(0.0, 0.0); h.n_tx];
    for f in 0..h.n_subcarriers {
        for s in 0..h.n_symbols {
            for (t, v) in xv.iter_mut().enumerate() {
                *v = x.at(t, f, s);
            }
            let mat = h.matrix(f, s);
            let o = (f * h.n_symbols + s) * h.n_rx;
            for r in 0..h.n_rx {
                y.samples[o + r] = mat[r * h.n_tx..(r + 1) * h.n_tx]
                    .iter()
                    .zip(&xv)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
    }
    Ok(y)
}

/// Total complex noise variance per RE and antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub variance: f64,
}

impl NoiseConfig {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::Contract(format!("noise variance {variance} < 0")));
        }
        Ok(Self { variance })
    }

    /// Unit-energy symbols, so SNR = 1 / σ².
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            variance: 10f64.powf(-snr_db / 10.0),
        }
    }

    /// `10·log10(σ²)`, the value of the receiver's N0 feature plane.
    pub fn n0_db(&self) -> f64 {
        10.0 * self.variance.log10()
    }

    pub fn n0_plane(&self, n_subcarriers: usize, n_symbols: usize) -> Vec<f64> {
        vec![self.n0_db(); n_subcarriers * n_symbols]
    }
}

/// Adds circular complex Gaussian noise of variance σ² (σ²/2 per real
/// dimension) to every sample.
pub fn add_awgn(y: &ReceivedGrid, noise: &NoiseConfig, rng: &mut impl Rng) -> ReceivedGrid {
    let mut out = y.clone();
    if noise.variance == 0.0 {
        return out;
    }
    let std = noise.variance.sqrt();
    for v in &mut out.samples {
        *v += complex_normal(rng) * std;
    }
    out
}

/// Mean normalized correlation between subcarriers `lag` apart, averaged
/// over antenna pairs and symbols of the given realizations.
pub fn frequency_correlation(realizations: &[ChannelRealization], lag: usize) -> f64 {
    let (mut cross, mut power) = (Complex64::new(0.0, 0.0), 0.0);
    for h in realizations {
        let n = h.n_rx * h.n_tx;
        for f in 0..h.n_subcarriers.saturating_sub(lag) {
            for s in 0..h.n_symbols {
                let (a, b) = (h.matrix(f, s), h.matrix(f + lag, s));
                for i in 0..n {
                    cross += a[i] * b[i].conj();
                    power += 0.5 * (a[i].norm_sqr() + b[i].norm_sqr());
                }
            }
        }
    }
    cross.norm() / power
}

/// Mean normalized correlation between symbols `lag` apart.
pub fn time_correlation(realizations: &[ChannelRealization], lag: usize) -> f64 {
    let (mut cross, mut power) = (Complex64::new(0.0, 0.0), 0.0);
    for h in realizations {
        let n = h.n_rx * h.n_tx;
        for f in 0..h.n_subcarriers {
            for s in 0..h.n_symbols.saturating_sub(lag) {
                let (a, b) = (h.matrix(f, s), h.matrix(f, s + lag));
                for i in 0..n {
                    cross += a[i] * b[i].conj();
                    power += 0.5 * (a[i].norm_sqr() + b[i].norm_sqr());
                }
            }
        }
    }
    cross.norm() / power
}
