use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{sample_channel, ChannelModel, ChannelSpec};
use crate::error::{Error, Result};
use crate::phy::{PilotPattern, ReceivedGrid, SlotConfig};

/// How pilot REs are turned into LS estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsMode {
    /// `p*·y / |p|²` on every pilot RE independently.
    PerRe,
    /// Average the per-RE estimates over each adjacent pilot pair, which
    /// cancels the other layer of the same CDM group when the channel is
    /// flat across the pair.
    Despread,
}

/// LS channel estimates on the pilot REs of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotEstimates {
    pub n_rx: usize,
    pub positions: Vec<(usize, usize)>,
    /// `[position][rx]`.
    pub values: Vec<Complex64>,
    /// Noise variance of each estimate relative to σ².
    pub noise_scale: Vec<f64>,
}

impl PilotEstimates {
    pub fn at(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.n_rx..(i + 1) * self.n_rx]
    }
}

pub fn ls_estimate(y: &ReceivedGrid, pattern: &PilotPattern, layer: usize, mode: LsMode) -> Result<PilotEstimates> {
    let lp = pattern.layer(layer)?;
    if lp.positions.is_empty() {
        return Err(Error::Contract(format!("layer {layer} has no pilots")));
    }
    let nr = y.n_rx;
    let mut values = Vec::with_capacity(lp.positions.len() * nr);
    let mut noise_scale = Vec::with_capacity(lp.positions.len());
    for (&(f, s), p) in lp.positions.iter().zip(&lp.values) {
        let e = p.norm_sqr();
        if e == 0.0 {
            return Err(Error::Contract(format!("zero pilot at ({f}, {s}) of layer {layer}")));
        }
        values.extend(y.at(f, s).iter().map(|v| p.conj() * v / e));
        noise_scale.push(1.0 / e);
    }
    if mode == LsMode::Despread {
        for &(a, b) in &lp.pairs {
            for r in 0..nr {
                let avg = (values[a * nr + r] + values[b * nr + r]) * 0.5;
                values[a * nr + r] = avg;
                values[b * nr + r] = avg;
            }
            let ns = 0.25 * (noise_scale[a] + noise_scale[b]);
            noise_scale[a] = ns;
            noise_scale[b] = ns;
        }
    }
    Ok(PilotEstimates {
        n_rx: nr,
        positions: lp.positions.clone(),
        values,
        noise_scale,
    })
}

/// Per-layer channel estimate on every RE.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub n_rx: usize,
    /// `[f][s][rx]`.
    pub h: Vec<Complex64>,
    /// Estimation-error variance per RE and antenna, `[f][s]`.
    pub err_var: Vec<f64>,
}

impl ChannelEstimate {
    pub fn at(&self, f: usize, s: usize) -> &[Complex64] {
        let o = (f * self.n_symbols + s) * self.n_rx;
        &self.h[o..o + self.n_rx]
    }
}

// Linear weights of `x` between sorted knots, constant beyond the ends.
fn linear_weights(knots: &[usize], x: usize) -> [(usize, f64); 2] {
    let last = knots.len() - 1;
    if x <= knots[0] {
        return [(0, 1.0), (0, 0.0)];
    }
    if x >= knots[last] {
        return [(last, 1.0), (last, 0.0)];
    }
    let hi = knots.partition_point(|&k| k <= x);
    let (a, b) = (knots[hi - 1], knots[hi]);
    let w = (x - a) as f64 / (b - a) as f64;
    [(hi - 1, 1.0 - w), (hi, w)]
}

/// Linear interpolation of pilot estimates onto the whole grid: first along
/// frequency on each pilot symbol, then along time between pilot symbols,
/// holding the nearest value beyond the outermost pilots.
pub fn interpolate_channel(
    est: &PilotEstimates,
    n_subcarriers: usize,
    n_symbols: usize,
    noise_var: f64,
) -> Result<ChannelEstimate> {
    let mut symbols: Vec<usize> = est.positions.iter().map(|p| p.1).collect();
    symbols.sort_unstable();
    symbols.dedup();
    if symbols.is_empty() {
        return Err(Error::Contract("no pilot symbols to interpolate from".into()));
    }
    let nr = est.n_rx;
    // frequency interpolation on each pilot symbol: value and weight² sums
    let mut per_symbol: Vec<(Vec<Complex64>, Vec<f64>)> = Vec::with_capacity(symbols.len());
    for &s in &symbols {
        let mut idx: Vec<usize> = (0..est.positions.len()).filter(|&i| est.positions[i].1 == s).collect();
        idx.sort_by_key(|&i| est.positions[i].0);
        let knots: Vec<usize> = idx.iter().map(|&i| est.positions[i].0).collect();
        let mut vals = vec![Complex64::new(0.0, 0.0); n_subcarriers * nr];
        let mut var = vec![0.0; n_subcarriers];
        for f in 0..n_subcarriers {
            for (k, w) in linear_weights(&knots, f) {
                if w == 0.0 {
                    continue;
                }
                let i = idx[k];
                for r in 0..nr {
                    vals[f * nr + r] += est.at(i)[r] * w;
                }
                var[f] += w * w * est.noise_scale[i];
            }
        }
        per_symbol.push((vals, var));
    }
    let mut h = vec![Complex64::new(0.0, 0.0); n_subcarriers * n_symbols * nr];
    let mut err_var = vec![0.0; n_subcarriers * n_symbols];
    for s in 0..n_symbols {
        for (k, w) in linear_weights(&symbols, s) {
            if w == 0.0 {
                continue;
            }
            let (vals, var) = &per_symbol[k];
            for f in 0..n_subcarriers {
                let o = (f * n_symbols + s) * nr;
                for r in 0..nr {
                    h[o + r] += vals[f * nr + r] * w;
                }
                err_var[f * n_symbols + s] += w * w * var[f] * noise_var;
            }
        }
    }
    Ok(ChannelEstimate {
        n_subcarriers,
        n_symbols,
        n_rx: nr,
        h,
        err_var,
    })
}

/// Second-order channel statistics: frequency and time covariance of a
/// single channel coefficient, modelled as separable.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// `N_F × N_F`, row-major.
    pub freq_cov: Vec<Complex64>,
    /// `N_S × N_S`, row-major.
    pub time_cov: Vec<Complex64>,
}

impl ChannelStats {
    /// Monte-Carlo estimate over `samples` realizations of `model`.
    pub fn estimate(model: &ChannelModel, cfg: &SlotConfig, samples: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::estimate_with(cfg, samples, rng, |_| Ok(model.clone()))
    }

    /// Monte-Carlo estimate with a fresh model draw from `spec` per sample.
    pub fn estimate_spec(spec: &ChannelSpec, cfg: &SlotConfig, samples: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::estimate_with(cfg, samples, rng, |rng| spec.sample(rng))
    }

    fn estimate_with<R: Rng>(
        cfg: &SlotConfig,
        samples: usize,
        rng: &mut R,
        mut model: impl FnMut(&mut R) -> Result<ChannelModel>,
    ) -> Result<Self> {
        let (nf, ns) = (cfg.n_subcarriers, cfg.n_symbols);
        let single = SlotConfig {
            n_layers: 1,
            n_rx: 1,
            ..*cfg
        };
        let mut rf = vec![Complex64::new(0.0, 0.0); nf * nf];
        let mut rt = vec![Complex64::new(0.0, 0.0); ns * ns];
        for _ in 0..samples.max(1) {
            let m = model(rng)?;
            let h = sample_channel(&m, &single, rng)?;
            for s in 0..ns {
                for i in 0..nf {
                    let a = h.coeff(i, s, 0, 0);
                    for j in 0..nf {
                        rf[i * nf + j] += a * h.coeff(j, s, 0, 0).conj();
                    }
                }
            }
            for f in 0..nf {
                for a in 0..ns {
                    let x = h.coeff(f, a, 0, 0);
                    for b in 0..ns {
                        rt[a * ns + b] += x * h.coeff(f, b, 0, 0).conj();
                    }
                }
            }
        }
        let nfac = samples.max(1) as f64;
        rf.iter_mut().for_each(|v| *v /= nfac * ns as f64);
        rt.iter_mut().for_each(|v| *v /= nfac * nf as f64);
        // unit average power on each factor so the Kronecker product has power 1
        let pf = (0..nf).map(|i| rf[i * nf + i].re).sum::<f64>() / nf as f64;
        let pt = (0..ns).map(|i| rt[i * ns + i].re).sum::<f64>() / ns as f64;
        rf.iter_mut().for_each(|v| *v /= pf.max(f64::MIN_POSITIVE));
        rt.iter_mut().for_each(|v| *v /= pt.max(f64::MIN_POSITIVE));
        Ok(Self {
            n_subcarriers: nf,
            n_symbols: ns,
            freq_cov: rf,
            time_cov: rt,
        })
    }

    /// Covariance of a channel that is the same on every RE.
    pub fn constant(n_subcarriers: usize, n_symbols: usize) -> Self {
        Self {
            n_subcarriers,
            n_symbols,
            freq_cov: vec![Complex64::new(1.0, 0.0); n_subcarriers * n_subcarriers],
            time_cov: vec![Complex64::new(1.0, 0.0); n_symbols * n_symbols],
        }
    }

    fn cov(&self, a: usize, b: usize) -> Complex64 {
        let ns = self.n_symbols;
        let (fa, sa, fb, sb) = (a / ns, a % ns, b / ns, b % ns);
        self.freq_cov[fa * self.n_subcarriers + fb] * self.time_cov[sa * ns + sb]
    }
}

/// Precomputed LMMSE smoother for one layer at one noise level.
#[derive(Debug, Clone)]
pub struct LmmseEstimator {
    n_subcarriers: usize,
    n_symbols: usize,
    layer: usize,
    mode: LsMode,
    /// Observation groups: indices into the layer's pilot positions whose
    /// LS estimates are averaged into one observation.
    groups: Vec<Vec<usize>>,
    /// `[RE][observation]`.
    filter: Vec<Complex64>,
    err_var: Vec<f64>,
}

impl LmmseEstimator {
    pub fn new(
        stats: &ChannelStats,
        pattern: &PilotPattern,
        layer: usize,
        noise_var: f64,
        mode: LsMode,
    ) -> Result<Self> {
        let (nf, ns) = pattern.grid_size();
        if (stats.n_subcarriers, stats.n_symbols) != (nf, ns) {
            return Err(Error::dim("covariance subcarriers", nf, stats.n_subcarriers));
        }
        let lp = pattern.layer(layer)?;
        if lp.positions.is_empty() {
            return Err(Error::Contract(format!("layer {layer} has no pilots")));
        }
        let groups: Vec<Vec<usize>> = match mode {
            LsMode::PerRe => (0..lp.positions.len()).map(|i| vec![i]).collect(),
            LsMode::Despread => {
                let mut paired = vec![false; lp.positions.len()];
                let mut g: Vec<Vec<usize>> = lp
                    .pairs
                    .iter()
                    .map(|&(a, b)| {
                        paired[a] = true;
                        paired[b] = true;
                        vec![a, b]
                    })
                    .collect();
                g.extend((0..lp.positions.len()).filter(|i| !paired[*i]).map(|i| vec![i]));
                g
            }
        };
        let re_of = |i: usize| lp.positions[i].0 * ns + lp.positions[i].1;
        let n_obs = groups.len();
        let n_re = nf * ns;
        // R_hz[re][o] = mean over group members of R[re][member]
        let mut r_hz = vec![Complex64::new(0.0, 0.0); n_re * n_obs];
        for re in 0..n_re {
            for (o, g) in groups.iter().enumerate() {
                let sum: Complex64 = g.iter().map(|&i| stats.cov(re, re_of(i))).sum();
                r_hz[re * n_obs + o] = sum / g.len() as f64;
            }
        }
        let mut r_zz = DMatrix::<Complex64>::zeros(n_obs, n_obs);
        for (o1, g1) in groups.iter().enumerate() {
            for (o2, g2) in groups.iter().enumerate() {
                let mut sum = Complex64::new(0.0, 0.0);
                for &i in g1 {
                    for &j in g2 {
                        sum += stats.cov(re_of(i), re_of(j));
                    }
                }
                r_zz[(o1, o2)] = sum / (g1.len() * g2.len()) as f64;
            }
        }
        let trace: f64 = (0..n_obs).map(|o| r_zz[(o, o)].re).sum::<f64>() / n_obs as f64;
        let ridge = 1e-10 * trace.max(1e-300);
        for (o, g) in groups.iter().enumerate() {
            let scale = g.iter().map(|&i| 1.0 / lp.values[i].norm_sqr()).sum::<f64>() / (g.len() * g.len()) as f64;
            r_zz[(o, o)] += Complex64::new(noise_var * scale + ridge, 0.0);
        }
        let chol = r_zz
            .cholesky()
            .ok_or_else(|| Error::Numerical("observation covariance is not positive definite".into()))?;
        // W = R_hz R_zz⁻¹  ⇔  Wᴴ = R_zz⁻¹ R_hzᴴ
        let r_hz_h = DMatrix::from_fn(n_obs, n_re, |o, re| r_hz[re * n_obs + o].conj());
        let w_h = chol.solve(&r_hz_h);
        let mut filter = vec![Complex64::new(0.0, 0.0); n_re * n_obs];
        let mut err_var = vec![0.0; n_re];
        for re in 0..n_re {
            let mut explained = 0.0;
            for o in 0..n_obs {
                let w = w_h[(o, re)].conj();
                filter[re * n_obs + o] = w;
                explained += (w * r_hz[re * n_obs + o].conj()).re;
            }
            err_var[re] = (stats.cov(re, re).re - explained).max(0.0);
        }
        if filter.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("non-finite LMMSE filter".into()));
        }
        Ok(Self {
            n_subcarriers: nf,
            n_symbols: ns,
            layer,
            mode,
            groups,
            filter,
            err_var,
        })
    }

    pub fn estimate(&self, y: &ReceivedGrid, pattern: &PilotPattern) -> Result<ChannelEstimate> {
        let ls = ls_estimate(y, pattern, self.layer, LsMode::PerRe)?;
        let nr = y.n_rx;
        let n_obs = self.groups.len();
        let mut obs = vec![Complex64::new(0.0, 0.0); n_obs * nr];
        for (o, g) in self.groups.iter().enumerate() {
            for &i in g {
                for r in 0..nr {
                    obs[o * nr + r] += ls.at(i)[r];
                }
            }
            for r in 0..nr {
                obs[o * nr + r] /= g.len() as f64;
            }
        }
        let n_re = self.n_subcarriers * self.n_symbols;
        let mut h = vec![Complex64::new(0.0, 0.0); n_re * nr];
        for re in 0..n_re {
            let w = &self.filter[re * n_obs..(re + 1) * n_obs];
            for r in 0..nr {
                let mut acc = Complex64::new(0.0, 0.0);
                for (o, wv) in w.iter().enumerate() {
                    acc += wv * obs[o * nr + r];
                }
                h[re * nr + r] = acc;
            }
        }
        Ok(ChannelEstimate {
            n_subcarriers: self.n_subcarriers,
            n_symbols: self.n_symbols,
            n_rx: nr,
            h,
            err_var: self.err_var.clone(),
        })
    }

    pub fn mode(&self) -> LsMode {
        self.mode
    }
}

/// LMMSE channel estimate of one layer from second-order statistics.
pub fn lmmse_channel_estimate(
    y: &ReceivedGrid,
    pattern: &PilotPattern,
    layer: usize,
    stats: &ChannelStats,
    noise_var: f64,
    mode: LsMode,
) -> Result<ChannelEstimate> {
    LmmseEstimator::new(stats, pattern, layer, noise_var, mode)?.estimate(y, pattern)
}
