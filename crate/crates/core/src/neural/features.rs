use crate::classic::{interpolate_channel, ls_estimate, LsMode};
use crate::error::{Error, Result};
use crate::phy::{positional_encoding, PilotPattern, ReceivedGrid};
use crate::tensor::Tensor;

/// Floor applied to the noise level before it is fed in dB.
pub const MIN_NOISE_DB: f64 = -50.0;

/// Planes per layer: Re/Im of Y, two PE planes, N0 in dB, Re/Im of the LS
/// bootstrap estimate.
pub fn input_feature_count(n_rx: usize) -> usize {
    4 * n_rx + 3
}

/// Network inputs of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInput {
    pub n_layers: usize,
    /// `[N_T, N_F, N_S, 4·N_RX + 3]`.
    pub features: Tensor,
    /// `[N_T, N_F, N_S, 2]`.
    pub pe: Tensor,
}

pub fn slot_features(y: &ReceivedGrid, pattern: &PilotPattern, n_layers: usize, noise_var: f64) -> Result<SlotInput> {
    if n_layers == 0 {
        return Err(Error::Contract("at least one active layer is required".into()));
    }
    if pattern.n_layers() < n_layers {
        return Err(Error::Contract(format!(
            "pilot pattern covers {} layers, {n_layers} active",
            pattern.n_layers()
        )));
    }
    let (nf, ns) = pattern.grid_size();
    if (y.n_subcarriers, y.n_symbols) != (nf, ns) {
        return Err(Error::dim("received grid subcarriers", nf, y.n_subcarriers));
    }
    if nf < 3 || ns < 3 {
        return Err(Error::Contract(format!(
            "grid {nf}x{ns} is smaller than the 3x3 kernel"
        )));
    }
    let nr = y.n_rx;
    let c = input_feature_count(nr);
    let n0_db = (10.0 * noise_var.log10()).max(MIN_NOISE_DB);
    let mut features = vec![0.0; n_layers * nf * ns * c];
    let mut pe_out = vec![0.0; n_layers * nf * ns * 2];
    for l in 0..n_layers {
        let pe = positional_encoding(pattern, l)?;
        let h = interpolate_channel(&ls_estimate(y, pattern, l, LsMode::PerRe)?, nf, ns, noise_var)?;
        for f in 0..nf {
            for s in 0..ns {
                let re = f * ns + s;
                let dst = &mut features[(l * nf * ns + re) * c..][..c];
                let yv = y.at(f, s);
                let hv = h.at(f, s);
                for r in 0..nr {
                    dst[r] = yv[r].re;
                    dst[nr + r] = yv[r].im;
                    dst[2 * nr + 3 + r] = hv[r].re;
                    dst[3 * nr + 3 + r] = hv[r].im;
                }
                let p = &pe.encoded.data()[re * 2..re * 2 + 2];
                dst[2 * nr] = p[0];
                dst[2 * nr + 1] = p[1];
                dst[2 * nr + 2] = n0_db;
                pe_out[(l * nf * ns + re) * 2..][..2].copy_from_slice(p);
            }
        }
    }
    Ok(SlotInput {
        n_layers,
        features: Tensor::new(vec![n_layers, nf, ns, c], features)?,
        pe: Tensor::new(vec![n_layers, nf, ns, 2], pe_out)?,
    })
}

/// Slots stacked along the leading axis, `G = B·N_T` with the layer index
/// varying fastest. All slots share the layer count and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput {
    pub batch: usize,
    pub n_layers: usize,
    pub features: Tensor,
    pub pe: Tensor,
}

impl BatchInput {
    pub fn stack(slots: &[SlotInput]) -> Result<Self> {
        let first = slots.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
        let (fs, ps) = (first.features.shape().to_vec(), first.pe.shape().to_vec());
        let mut features = Vec::with_capacity(first.features.len() * slots.len());
        let mut pe = Vec::with_capacity(first.pe.len() * slots.len());
        for s in slots {
            if s.features.shape() != fs.as_slice() || s.pe.shape() != ps.as_slice() {
                return Err(Error::Contract(format!(
                    "batch slots disagree in shape: {:?} vs {fs:?}",
                    s.features.shape()
                )));
            }
            features.extend_from_slice(s.features.data());
            pe.extend_from_slice(s.pe.data());
        }
        let g = first.n_layers * slots.len();
        Ok(Self {
            batch: slots.len(),
            n_layers: first.n_layers,
            features: Tensor::new(vec![g, fs[1], fs[2], fs[3]], features)?,
            pe: Tensor::new(vec![g, ps[1], ps[2], 2], pe)?,
        })
    }
}
