use num_complex::Complex64;

use super::linalg::{invert, qr_apply};
use crate::error::{Error, Result};
use crate::phy::Constellation;

/// Largest number of hypotheses the exhaustive ML detector will enumerate.
pub const ML_MAX_HYPOTHESES: usize = 1 << 16;

/// Smallest noise variance used when scaling LLRs.
const MIN_NOISE_VAR: f64 = 1e-12;

/// Ridge added to the LMMSE Gram matrix when σ² is (nearly) zero.
pub const ZF_RIDGE: f64 = 1e-12;

/// Output of the per-RE LMMSE equalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    /// `(ĤᴴĤ + σ²I)⁻¹ Ĥᴴ y`, one entry per layer.
    pub x_hat: Vec<Complex64>,
    /// Diagonal of `(ĤᴴĤ + σ²I)⁻¹ ĤᴴĤ`; `x_hat / gain` is unbiased.
    pub gain: Vec<f64>,
    /// Noise-plus-interference variance of the unbiased estimate.
    pub post_noise: Vec<f64>,
}

// [Re y; Im y] = [[Re H, -Im H]; [Im H, Re H]] [Re x; Im x]
fn real_valued(y: &[Complex64], h: &[Complex64], n_tx: usize) -> (Vec<f64>, Vec<f64>) {
    let n_rx = y.len();
    let (rows, cols) = (2 * n_rx, 2 * n_tx);
    let mut hr = vec![0.0; rows * cols];
    let mut yr = vec![0.0; rows];
    for r in 0..n_rx {
        yr[r] = y[r].re;
        yr[n_rx + r] = y[r].im;
        for t in 0..n_tx {
            let v = h[r * n_tx + t];
            hr[r * cols + t] = v.re;
            hr[r * cols + n_tx + t] = -v.im;
            hr[(n_rx + r) * cols + t] = v.im;
            hr[(n_rx + r) * cols + n_tx + t] = v.re;
        }
    }
    (hr, yr)
}

// Least-squares solve through QR of the real-valued model, so the
// conditioning of H is not squared. None when H is (numerically) rank
// deficient or has fewer rows than columns.
fn zero_forcing(y: &[Complex64], h: &[Complex64], n_tx: usize) -> Option<Vec<Complex64>> {
    let n_rx = y.len();
    if n_rx < n_tx {
        return None;
    }
    let (rows, cols) = (2 * n_rx, 2 * n_tx);
    let (hr, yr) = real_valued(y, h, n_tx);
    let (r, qty) = qr_apply(&hr, rows, cols, &yr);
    let diag: Vec<f64> = (0..cols).map(|i| r[i * cols + i].abs()).collect();
    let scale = diag.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 || diag.iter().any(|&d| d <= 1e-10 * scale) {
        return None;
    }
    let mut x = vec![0.0; cols];
    for i in (0..cols).rev() {
        let acc: f64 = (i + 1..cols).map(|j| r[i * cols + j] * x[j]).sum();
        x[i] = (qty[i] - acc) / r[i * cols + i];
    }
    Some((0..n_tx).map(|t| Complex64::new(x[t], x[n_tx + t])).collect())
}

/// LMMSE equalization of one RE. `h` is `n_rx × n_tx`, row-major. Below
/// [`ZF_RIDGE`] the noise variance is treated as zero and the result is the
/// zero-forcing solution; the ridge only steps in for rank-deficient `h`.
pub fn lmmse_equalize(y: &[Complex64], h: &[Complex64], n_tx: usize, noise_var: f64) -> Result<Equalized> {
    let n_rx = y.len();
    if h.len() != n_rx * n_tx {
        return Err(Error::dim("channel matrix entries", n_rx * n_tx, h.len()));
    }
    if noise_var < ZF_RIDGE {
        if let Some(x_hat) = zero_forcing(y, h, n_tx) {
            return Ok(Equalized {
                x_hat,
                gain: vec![1.0; n_tx],
                post_noise: vec![MIN_NOISE_VAR; n_tx],
            });
        }
    }
    let reg = noise_var.max(ZF_RIDGE);
    let mut gram = vec![Complex64::new(0.0, 0.0); n_tx * n_tx];
    let mut hy = vec![Complex64::new(0.0, 0.0); n_tx];
    for i in 0..n_tx {
        for r in 0..n_rx {
            hy[i] += h[r * n_tx + i].conj() * y[r];
        }
        for j in 0..n_tx {
            gram[i * n_tx + j] = (0..n_rx).map(|r| h[r * n_tx + i].conj() * h[r * n_tx + j]).sum();
        }
        gram[i * n_tx + i] += reg;
    }
    let inv = invert(&gram, n_tx).ok_or_else(|| Error::Numerical("singular LMMSE system".into()))?;
    let mut x_hat = vec![Complex64::new(0.0, 0.0); n_tx];
    let mut gain = vec![0.0; n_tx];
    let mut post_noise = vec![0.0; n_tx];
    for i in 0..n_tx {
        x_hat[i] = (0..n_tx).map(|j| inv[i * n_tx + j] * hy[j]).sum();
        let g = (1.0 - reg * inv[i * n_tx + i].re).clamp(1e-12, 1.0);
        gain[i] = g;
        post_noise[i] = ((1.0 - g) / g).max(MIN_NOISE_VAR);
    }
    Ok(Equalized {
        x_hat,
        gain,
        post_noise,
    })
}

/// Max-log LLRs of one symbol observed as `z = x + n`, `n ~ CN(0, noise_var)`.
/// Positive values favour bit 1.
pub fn gaussian_maxlog(z: Complex64, noise_var: f64, c: &Constellation, clip: f64, out: &mut [f64]) {
    let m = c.bits_per_symbol();
    let mut best = vec![[f64::INFINITY; 2]; m];
    for (idx, p) in c.points().iter().enumerate() {
        let d = (z - p).norm_sqr();
        for (i, b) in best.iter_mut().enumerate() {
            let slot = &mut b[c.bit(idx, i) as usize];
            if d < *slot {
                *slot = d;
            }
        }
    }
    let nv = noise_var.max(MIN_NOISE_VAR);
    for (o, b) in out.iter_mut().zip(&best) {
        *o = ((b[0] - b[1]) / nv).clamp(-clip, clip);
    }
}

/// K-best search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBestConfig {
    pub k: usize,
    /// LLR magnitude used when a bit hypothesis is missing from the list.
    pub llr_clip: f64,
}

impl Default for KBestConfig {
    fn default() -> Self {
        Self { k: 16, llr_clip: 20.0 }
    }
}

impl KBestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Contract("K-best list size must be at least 1".into()));
        }
        if self.llr_clip.is_nan() || self.llr_clip <= 0.0 {
            return Err(Error::Contract(format!(
                "LLR clip must be positive, got {}",
                self.llr_clip
            )));
        }
        Ok(())
    }
}

/// One surviving hypothesis: a constellation index per layer and its
/// metric `‖y − Hx‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub symbols: Vec<usize>,
    pub metric: f64,
}

fn check_dims(y: &[Complex64], h: &[Complex64], n_tx: usize) -> Result<usize> {
    let n_rx = y.len();
    if n_tx == 0 {
        return Err(Error::Contract("no layers to detect".into()));
    }
    if h.len() != n_rx * n_tx {
        return Err(Error::dim("channel matrix entries", n_rx * n_tx, h.len()));
    }
    Ok(n_rx)
}

/// Breadth-first K-best tree search on the real-valued decomposition of
/// `y = Hx + n`. Returns the survivors sorted by metric.
pub fn kbest_detect(
    y: &[Complex64],
    h: &[Complex64],
    n_tx: usize,
    c: &Constellation,
    k: usize,
) -> Result<Vec<Candidate>> {
    let n_rx = check_dims(y, h, n_tx)?;
    if k == 0 {
        return Err(Error::Contract("K-best list size must be at least 1".into()));
    }
    if n_rx < n_tx {
        return Err(Error::Unsupported(format!(
            "K-best needs n_rx >= n_tx, got {n_rx} < {n_tx}"
        )));
    }
    let (rows, cols) = (2 * n_rx, 2 * n_tx);
    let (hr, yr) = real_valued(y, h, n_tx);
    let (rmat, qty) = qr_apply(&hr, rows, cols, &yr);
    let residual: f64 = qty[cols..].iter().map(|v| v * v).sum();
    let levels = c.pam_levels();

    // (labels from level `depth` upward, partial metric)
    let mut survivors: Vec<(Vec<usize>, f64)> = vec![(vec![0; cols], 0.0)];
    for level in (0..cols).rev() {
        let mut next = Vec::with_capacity(survivors.len() * levels.len());
        for (labels, metric) in &survivors {
            let interference: f64 = ((level + 1)..cols)
                .map(|j| rmat[level * cols + j] * levels[labels[j]])
                .sum();
            for (lab, &a) in levels.iter().enumerate() {
                let e = qty[level] - interference - rmat[level * cols + level] * a;
                let mut l = labels.clone();
                l[level] = lab;
                next.push((l, metric + e * e));
            }
        }
        next.sort_by(|a, b| a.1.total_cmp(&b.1));
        next.truncate(k);
        survivors = next;
    }
    Ok(survivors
        .into_iter()
        .map(|(labels, metric)| Candidate {
            symbols: (0..n_tx).map(|t| c.join(labels[t], labels[n_tx + t])).collect(),
            metric: metric + residual,
        })
        .collect())
}

/// Max-log LLRs from a candidate list, `[layer][bit]`. A bit value absent
/// from the list gets `±clip` in the direction of the value present.
pub fn maxlog_demap(
    cands: &[Candidate],
    n_tx: usize,
    c: &Constellation,
    noise_var: f64,
    clip: f64,
) -> Result<Vec<f64>> {
    if cands.is_empty() {
        return Err(Error::Contract("empty candidate list".into()));
    }
    let m = c.bits_per_symbol();
    let mut best = vec![[f64::INFINITY; 2]; n_tx * m];
    for cand in cands {
        if cand.symbols.len() != n_tx {
            return Err(Error::dim("candidate layers", n_tx, cand.symbols.len()));
        }
        for (t, &sym) in cand.symbols.iter().enumerate() {
            for i in 0..m {
                let slot = &mut best[t * m + i][c.bit(sym, i) as usize];
                if cand.metric < *slot {
                    *slot = cand.metric;
                }
            }
        }
    }
    let nv = noise_var.max(MIN_NOISE_VAR);
    Ok(best
        .iter()
        .map(|b| match (b[0].is_finite(), b[1].is_finite()) {
            (true, true) => ((b[0] - b[1]) / nv).clamp(-clip, clip),
            (true, false) => -clip,
            _ => clip,
        })
        .collect())
}

/// Exhaustive maximum-likelihood detection.
#[derive(Debug, Clone, PartialEq)]
pub struct MlOutput {
    /// Constellation index per layer of the best hypothesis.
    pub decision: Vec<usize>,
    /// Unclipped max-log LLRs, `[layer][bit]`.
    pub llrs: Vec<f64>,
    /// `‖y − Hx‖²` of every hypothesis; hypothesis `i` has layer `t` symbol
    /// `(i / M^(n_tx-1-t)) % M`.
    pub metrics: Vec<f64>,
}

pub fn ml_oracle(y: &[Complex64], h: &[Complex64], n_tx: usize, c: &Constellation, noise_var: f64) -> Result<MlOutput> {
    let n_rx = check_dims(y, h, n_tx)?;
    let q = c.len();
    let total = (0..n_tx).try_fold(1usize, |acc, _| acc.checked_mul(q).filter(|v| *v <= ML_MAX_HYPOTHESES));
    let total =
        total.ok_or_else(|| Error::Guard(format!("{q}^{n_tx} hypotheses exceed the limit of {ML_MAX_HYPOTHESES}")))?;
    let mut metrics = Vec::with_capacity(total);
    let mut syms = vec![0usize; n_tx];
    for hyp in 0..total {
        let mut rem = hyp;
        for t in (0..n_tx).rev() {
            syms[t] = rem % q;
            rem /= q;
        }
        let mut d = 0.0;
        for r in 0..n_rx {
            let pred: Complex64 = (0..n_tx).map(|t| h[r * n_tx + t] * c.points()[syms[t]]).sum();
            d += (y[r] - pred).norm_sqr();
        }
        metrics.push(d);
    }
    let best = (0..total)
        .min_by(|&a, &b| metrics[a].total_cmp(&metrics[b]))
        .expect("non-empty");
    let decode = |hyp: usize| -> Vec<usize> {
        let mut rem = hyp;
        let mut s = vec![0; n_tx];
        for t in (0..n_tx).rev() {
            s[t] = rem % q;
            rem /= q;
        }
        s
    };
    let cands: Vec<Candidate> = (0..total)
        .map(|i| Candidate {
            symbols: decode(i),
            metric: metrics[i],
        })
        .collect();
    let llrs = maxlog_demap(&cands, n_tx, c, noise_var, f64::INFINITY)?;
    Ok(MlOutput {
        decision: decode(best),
        llrs,
        metrics,
    })
}
