//! One slot of the uplink resource grid: dimensions, Gray QAM mapping,
//! DMRS-style pilot patterns with CDM groups, and the per-layer positional
//! pilot encoding fed to the neural receiver.
//!
//! Grid indexing is `(subcarrier, symbol)` with the symbol index fastest,
//! i.e. RE `(f, s)` lives at `f * n_symbols + s`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// OFDM symbols carrying DMRS within a 14-symbol slot.
pub const DMRS_SYMBOLS: [usize; 2] = [2, 11];
/// Largest number of layers the pilot scheme can separate.
pub const MAX_LAYERS: usize = 4;
/// Identifier of the pilot construction, stored in checkpoints.
pub const PILOT_SCHEME_ID: &str = "comb2-fdocc2-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotConfig {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub n_layers: usize,
    pub n_rx: usize,
    pub bits_per_symbol: usize,
}

impl SlotConfig {
    pub fn new(
        n_subcarriers: usize,
        n_symbols: usize,
        n_layers: usize,
        n_rx: usize,
        bits_per_symbol: usize,
    ) -> Result<Self> {
        let cfg = Self {
            n_subcarriers,
            n_symbols,
            n_layers,
            n_rx,
            bits_per_symbol,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers < 12 || self.n_subcarriers % 12 != 0 {
            return Err(Error::Unsupported(format!(
                "{} subcarriers is not a whole number of 12-subcarrier blocks",
                self.n_subcarriers
            )));
        }
        if self.n_symbols <= DMRS_SYMBOLS[1] {
            return Err(Error::Unsupported(format!(
                "slot needs at least {} symbols, got {}",
                DMRS_SYMBOLS[1] + 1,
                self.n_symbols
            )));
        }
        if !(1..=MAX_LAYERS).contains(&self.n_layers) {
            return Err(Error::Unsupported(format!(
                "{} layers (supported: 1..={MAX_LAYERS})",
                self.n_layers
            )));
        }
        if self.n_rx == 0 {
            return Err(Error::Unsupported("zero receive antennas".into()));
        }
        Constellation::new(self.bits_per_symbol)?;
        Ok(())
    }

    pub fn with_layers(mut self, n_layers: usize) -> Result<Self> {
        self.n_layers = n_layers;
        self.validate()?;
        Ok(self)
    }

    /// One transmit antenna per layer.
    pub fn n_tx(&self) -> usize {
        self.n_layers
    }

    pub fn n_res(&self) -> usize {
        self.n_subcarriers * self.n_symbols
    }

    pub fn is_dmrs_symbol(&self, s: usize) -> bool {
        DMRS_SYMBOLS.contains(&s)
    }

    pub fn data_res_per_layer(&self) -> usize {
        self.n_subcarriers * (self.n_symbols - DMRS_SYMBOLS.len())
    }

    /// Data RE coordinates in canonical order (subcarrier-major).
    pub fn data_res(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.data_res_per_layer());
        for f in 0..self.n_subcarriers {
            for s in (0..self.n_symbols).filter(|s| !self.is_dmrs_symbol(*s)) {
                v.push((f, s));
            }
        }
        v
    }

    /// Per-RE flag, true on data REs.
    pub fn data_mask(&self) -> Vec<bool> {
        (0..self.n_res())
            .map(|i| !self.is_dmrs_symbol(i % self.n_symbols))
            .collect()
    }
}

/// Gray-labelled square QAM with unit average energy, labelled as in
/// 3GPP TS 38.211: bit 0 is the MSB of the symbol index, even bits drive the
/// real part and odd bits the imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    bits: usize,
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(bits_per_symbol: usize) -> Result<Self> {
        if !matches!(bits_per_symbol, 2 | 4) {
            return Err(Error::Unsupported(format!(
                "{bits_per_symbol} bits per symbol (supported: 2, 4)"
            )));
        }
        let points = (0..1usize << bits_per_symbol)
            .map(|idx| {
                let b: Vec<u8> = (0..bits_per_symbol)
                    .map(|i| ((idx >> (bits_per_symbol - 1 - i)) & 1) as u8)
                    .collect();
                gray_point(&b)
            })
            .collect();
        Ok(Self {
            bits: bits_per_symbol,
            points,
        })
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Label bit `i` (0 = MSB) of point `index`.
    pub fn bit(&self, index: usize, i: usize) -> u8 {
        ((index >> (self.bits - 1 - i)) & 1) as u8
    }

    pub fn index_of(bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn map(&self, bits: &[u8]) -> Complex64 {
        self.points[Self::index_of(bits)]
    }

    /// Amplitude levels of one real dimension, indexed by the per-dimension
    /// label (see [`Self::join`]).
    pub fn pam_levels(&self) -> Vec<f64> {
        let per_dim = self.bits / 2;
        (0..1usize << per_dim)
            .map(|label| {
                let b: Vec<u8> = (0..per_dim).map(|i| ((label >> (per_dim - 1 - i)) & 1) as u8).collect();
                pam_level(&b, per_dim)
            })
            .collect()
    }

    /// Symbol index from per-dimension PAM labels (as enumerated by
    /// [`Self::pam_levels`]): real label bits go to even label positions,
    /// imaginary label bits to odd ones.
    pub fn join(&self, re_label: usize, im_label: usize) -> usize {
        let per_dim = self.bits / 2;
        let mut idx = 0;
        for i in 0..per_dim {
            let rb = (re_label >> (per_dim - 1 - i)) & 1;
            let ib = (im_label >> (per_dim - 1 - i)) & 1;
            idx = (idx << 2) | (rb << 1) | ib;
        }
        idx
    }

    /// Index of the point nearest to `z`.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

fn pam_level(bits: &[u8], per_dim: usize) -> f64 {
    let sign = |b: u8| 1.0 - 2.0 * b as f64;
    match per_dim {
        1 => sign(bits[0]) / 2f64.sqrt(),
        2 => sign(bits[0]) * (2.0 - sign(bits[1])) / 10f64.sqrt(),
        _ => unreachable!("validated bits per symbol"),
    }
}

fn gray_point(b: &[u8]) -> Complex64 {
    let per_dim = b.len() / 2;
    let re: Vec<u8> = b.iter().step_by(2).copied().collect();
    let im: Vec<u8> = b.iter().skip(1).step_by(2).copied().collect();
    Complex64::new(pam_level(&re, per_dim), pam_level(&im, per_dim))
}

/// Map a flat bit sequence (length a multiple of `m`) onto QAM symbols.
pub fn map_bits_to_symbols(bits: &[u8], m: usize) -> Result<Vec<Complex64>> {
    let c = Constellation::new(m)?;
    if bits.len() % m != 0 {
        return Err(Error::dim("bit count (multiple of bits per symbol)", m, bits.len() % m));
    }
    Ok(bits.chunks_exact(m).map(|b| c.map(b)).collect())
}

/// Pilots of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPilots {
    pub cdm_group: usize,
    /// Cover code applied to the second RE of each adjacent pilot pair.
    pub cover: [f64; 2],
    /// Pilot REs `(subcarrier, symbol)`, sorted by symbol then subcarrier.
    pub positions: Vec<(usize, usize)>,
    /// Pilot value at each position.
    pub values: Vec<Complex64>,
    /// Adjacent pilot pairs as indices into `positions`.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    n_subcarriers: usize,
    n_symbols: usize,
    layers: Vec<LayerPilots>,
}

impl PilotPattern {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> Result<&LayerPilots> {
        self.layers
            .get(l)
            .ok_or_else(|| Error::Contract(format!("no pilot pattern for layer {l}")))
    }

    pub fn layers(&self) -> &[LayerPilots] {
        &self.layers
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (self.n_subcarriers, self.n_symbols)
    }

    /// Pilot value of layer `l` at RE `(f, s)`, if it is one of its pilots.
    pub fn pilot_at(&self, l: usize, f: usize, s: usize) -> Option<Complex64> {
        let lp = self.layers.get(l)?;
        lp.positions.iter().position(|&p| p == (f, s)).map(|i| lp.values[i])
    }

    /// Restrict to the first `n` layers.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.layers.len() {
            return Err(Error::Contract(format!(
                "pattern has {} layers, {n} requested",
                self.layers.len()
            )));
        }
        Ok(Self {
            layers: self.layers[..n].to_vec(),
            ..*self
        })
    }

    /// Reorder layers by `perm` (new layer `i` is old layer `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            layers: perm.iter().map(|&i| self.layers[i].clone()).collect(),
            ..*self
        }
    }

    /// Build a pattern from explicit per-layer pilots (used for custom
    /// placements such as shifted combs).
    pub fn from_layers(n_subcarriers: usize, n_symbols: usize, layers: Vec<LayerPilots>) -> Result<Self> {
        for (l, lp) in layers.iter().enumerate() {
            if lp.positions.len() != lp.values.len() {
                return Err(Error::dim(
                    format!("pilot values of layer {l}"),
                    lp.positions.len(),
                    lp.values.len(),
                ));
            }
            if lp.positions.iter().any(|&(f, s)| f >= n_subcarriers || s >= n_symbols) {
                return Err(Error::Contract(format!("pilot of layer {l} outside the grid")));
            }
        }
        Ok(Self {
            n_subcarriers,
            n_symbols,
            layers,
        })
    }
}

/// Two CDM groups on interleaved subcarrier combs of the DMRS symbols.
/// Layers 0/1 use the even comb, layers 2/3 the odd comb; inside a group
/// the second layer applies the cover `[+1, −1]` over adjacent pilot pairs.
/// Base pilot values are QPSK drawn from `seed`, shared within a group.
pub fn build_pilot_pattern(cfg: &SlotConfig, seed: u64) -> Result<PilotPattern> {
    if cfg.n_layers > MAX_LAYERS {
        return Err(Error::Unsupported(format!(
            "{} layers exceed the {MAX_LAYERS} separable by two CDM groups",
            cfg.n_layers
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qpsk = Constellation::new(2)?;
    // base sequences for both groups are always drawn so that a layer's
    // pilots do not depend on how many layers are active
    let mut base: Vec<Vec<(usize, usize, Complex64)>> = Vec::new();
    for group in 0..2 {
        let mut seq = Vec::new();
        for &s in DMRS_SYMBOLS.iter() {
            for f in (group..cfg.n_subcarriers).step_by(2) {
                seq.push((f, s, qpsk.points()[rng.random_range(0..4)]));
            }
        }
        base.push(seq);
    }
    let layers = (0..cfg.n_layers)
        .map(|l| {
            let group = l / 2;
            let cover = if l % 2 == 0 { [1.0, 1.0] } else { [1.0, -1.0] };
            let seq = &base[group];
            let mut positions = Vec::with_capacity(seq.len());
            let mut values = Vec::with_capacity(seq.len());
            let mut pairs = Vec::new();
            for &s in DMRS_SYMBOLS.iter() {
                let on_symbol: Vec<_> = seq.iter().filter(|e| e.1 == s).collect();
                for (j, &&(f, s, q)) in on_symbol.iter().enumerate() {
                    if j % 2 == 1 {
                        pairs.push((positions.len() - 1, positions.len()));
                    }
                    positions.push((f, s));
                    values.push(q * cover[j % 2]);
                }
            }
            LayerPilots {
                cdm_group: group,
                cover,
                positions,
                values,
                pairs,
            }
        })
        .collect();
    Ok(PilotPattern {
        n_subcarriers: cfg.n_subcarriers,
        n_symbols: cfg.n_symbols,
        layers,
    })
}

/// Nearest-pilot distances of one layer, raw and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotEncoding {
    /// `[N_F, N_S, 2]`: (time distance in symbols, frequency distance in
    /// subcarriers).
    pub raw: Tensor,
    /// `raw` with each plane shifted and scaled to zero mean, unit variance.
    pub encoded: Tensor,
}

pub fn positional_encoding(pattern: &PilotPattern, layer: usize) -> Result<PilotEncoding> {
    let lp = pattern.layer(layer)?;
    if lp.positions.is_empty() {
        return Err(Error::Contract(format!("layer {layer} has no pilots")));
    }
    let (nf, ns) = pattern.grid_size();
    let mut raw = vec![0.0; nf * ns * 2];
    for f in 0..nf {
        for s in 0..ns {
            let dt = lp.positions.iter().map(|p| p.1.abs_diff(s)).min().expect("non-empty");
            let df = lp.positions.iter().map(|p| p.0.abs_diff(f)).min().expect("non-empty");
            raw[(f * ns + s) * 2] = dt as f64;
            raw[(f * ns + s) * 2 + 1] = df as f64;
        }
    }
    let mut encoded = raw.clone();
    let n = (nf * ns) as f64;
    for plane in 0..2 {
        let mean = raw.iter().skip(plane).step_by(2).sum::<f64>() / n;
        let var = raw
            .iter()
            .skip(plane)
            .step_by(2)
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        for v in encoded.iter_mut().skip(plane).step_by(2) {
            *v = if std > 0.0 { (*v - mean) / std } else { 0.0 };
        }
    }
    Ok(PilotEncoding {
        raw: Tensor::new(vec![nf, ns, 2], raw)?,
        encoded: Tensor::new(vec![nf, ns, 2], encoded)?,
    })
}

/// Information bits of every data RE and layer, `[layer][data RE][bit]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGrid {
    pub n_layers: usize,
    pub n_data_res: usize,
    pub bits_per_symbol: usize,
    pub bits: Vec<u8>,
}

impl BitGrid {
    pub fn random(cfg: &SlotConfig, rng: &mut impl Rng) -> Self {
        let n = cfg.n_layers * cfg.data_res_per_layer() * cfg.bits_per_symbol;
        Self {
            n_layers: cfg.n_layers,
            n_data_res: cfg.data_res_per_layer(),
            bits_per_symbol: cfg.bits_per_symbol,
            bits: (0..n).map(|_| rng.random_range(0..2u8)).collect(),
        }
    }

    pub fn layer(&self, l: usize) -> &[u8] {
        let per = self.n_data_res * self.bits_per_symbol;
        &self.bits[l * per..(l + 1) * per]
    }

    /// Labels on the full `[layer, f, s, bit]` grid (zeros on DMRS symbols).
    pub fn full_grid_labels(&self, cfg: &SlotConfig) -> Vec<f64> {
        let m = self.bits_per_symbol;
        let mut out = vec![0.0; self.n_layers * cfg.n_res() * m];
        let res = cfg.data_res();
        for l in 0..self.n_layers {
            let lb = self.layer(l);
            for (k, &(f, s)) in res.iter().enumerate() {
                let dst = ((l * cfg.n_subcarriers + f) * cfg.n_symbols + s) * m;
                for i in 0..m {
                    out[dst + i] = lb[k * m + i] as f64;
                }
            }
        }
        out
    }
}

/// Transmitted symbols of all layers, `[layer][f][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub n_layers: usize,
    pub symbols: Vec<Complex64>,
}

impl ResourceGrid {
    pub fn zeros(cfg: &SlotConfig) -> Self {
        Self {
            n_subcarriers: cfg.n_subcarriers,
            n_symbols: cfg.n_symbols,
            n_layers: cfg.n_layers,
            symbols: vec![Complex64::new(0.0, 0.0); cfg.n_layers * cfg.n_res()],
        }
    }

    pub fn layer(&self, l: usize) -> &[Complex64] {
        let n = self.n_subcarriers * self.n_symbols;
        &self.symbols[l * n..(l + 1) * n]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut [Complex64] {
        let n = self.n_subcarriers * self.n_symbols;
        &mut self.symbols[l * n..(l + 1) * n]
    }

    pub fn at(&self, l: usize, f: usize, s: usize) -> Complex64 {
        self.symbols[(l * self.n_subcarriers + f) * self.n_symbols + s]
    }
}

/// Received post-FFT samples, `[f][s][rx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedGrid {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub n_rx: usize,
    pub samples: Vec<Complex64>,
}

impl ReceivedGrid {
    pub fn zeros(n_subcarriers: usize, n_symbols: usize, n_rx: usize) -> Self {
        Self {
            n_subcarriers,
            n_symbols,
            n_rx,
            samples: vec![Complex64::new(0.0, 0.0); n_subcarriers * n_symbols * n_rx],
        }
    }

    pub fn at(&self, f: usize, s: usize) -> &[Complex64] {
        let o = (f * self.n_symbols + s) * self.n_rx;
        &self.samples[o..o + self.n_rx]
    }
}

/// Place pilots and mapped data of every layer on the grid. DMRS symbols
/// carry no data; REs of the other CDM group stay empty.
pub fn assemble_slot(bits: &BitGrid, pattern: &PilotPattern, cfg: &SlotConfig) -> Result<ResourceGrid> {
    if bits.n_layers != cfg.n_layers || pattern.n_layers() < cfg.n_layers {
        return Err(Error::dim(
            "layers",
            cfg.n_layers,
            bits.n_layers.min(pattern.n_layers()),
        ));
    }
    if pattern.grid_size() != (cfg.n_subcarriers, cfg.n_symbols) {
        return Err(Error::dim(
            "pilot pattern subcarriers",
            cfg.n_subcarriers,
            pattern.grid_size().0,
        ));
    }
    let expected = cfg.n_layers * cfg.data_res_per_layer() * cfg.bits_per_symbol;
    if bits.bits.len() != expected || bits.bits_per_symbol != cfg.bits_per_symbol {
        return Err(Error::dim("bit count", expected, bits.bits.len()));
    }
    let constellation = Constellation::new(cfg.bits_per_symbol)?;
    let m = cfg.bits_per_symbol;
    let res = cfg.data_res();
    let mut grid = ResourceGrid::zeros(cfg);
    for l in 0..cfg.n_layers {
        let lb = bits.layer(l);
        let ns = cfg.n_symbols;
        let layer = grid.layer_mut(l);
        for (k, &(f, s)) in res.iter().enumerate() {
            layer[f * ns + s] = constellation.map(&lb[k * m..(k + 1) * m]);
        }
        let lp = pattern.layer(l)?;
        for (&(f, s), &v) in lp.positions.iter().zip(&lp.values) {
            layer[f * ns + s] = v;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n_layers: usize) -> SlotConfig {
        SlotConfig::new(48, 14, n_layers, 4, 4).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SlotConfig::new(50, 14, 1, 4, 4).is_err());
        assert!(SlotConfig::new(12, 14, 5, 4, 4).is_err());
        assert!(SlotConfig::new(12, 14, 1, 4, 6).is_err());
        assert!(SlotConfig::new(12, 14, 4, 1, 2).is_ok());
    }

    #[test]
    fn gray_points_and_energy() {
        let q16 = Constellation::new(4).unwrap();
        let want = Complex64::new(1.0, 1.0) / 10f64.sqrt();
        assert!((q16.map(&[0, 0, 0, 0]) - want).norm() < 1e-15);
        let q4 = Constellation::new(2).unwrap();
        assert!((q4.map(&[0, 0]) - Complex64::new(1.0, 1.0) / 2f64.sqrt()).norm() < 1e-15);
        for c in [&q4, &q16] {
            let e = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / c.len() as f64;
            assert!((e - 1.0).abs() < 1e-14);
        }
        assert!(matches!(map_bits_to_symbols(&[0; 6], 6), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Constellation::new(4).unwrap();
        let d_min = 2.0 / 10f64.sqrt();
        for i in 0..16 {
            for j in 0..16 {
                let d = (c.points()[i] - c.points()[j]).norm();
                if (d - d_min).abs() < 1e-9 {
                    assert_eq!((i ^ j).count_ones(), 1);
                }
            }
        }
    }

    #[test]
    fn pam_join_reconstructs_points() {
        for m in [2, 4] {
            let c = Constellation::new(m).unwrap();
            let levels = c.pam_levels();
            for (ri, re) in levels.iter().enumerate() {
                for (ii, im) in levels.iter().enumerate() {
                    let p = c.points()[c.join(ri, ii)];
                    assert!((p - Complex64::new(*re, *im)).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pilots_only_on_dmrs_symbols() {
        let p = build_pilot_pattern(&cfg(4), 1).unwrap();
        for lp in p.layers() {
            assert!(lp.positions.iter().all(|&(_, s)| s == 2 || s == 11));
            assert!(lp.values.iter().all(|v| (v.norm() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn cdm_groups() {
        let p = build_pilot_pattern(&cfg(4), 9).unwrap();
        let (l0, l1, l2) = (p.layer(0).unwrap(), p.layer(1).unwrap(), p.layer(2).unwrap());
        assert!(l0.positions.iter().all(|pos| !l2.positions.contains(pos)));
        assert_eq!(l0.positions, l1.positions);
        for &(a, b) in &l0.pairs {
            let ip = l0.values[a].conj() * l1.values[a] + l0.values[b].conj() * l1.values[b];
            assert!(ip.norm() < 1e-14);
        }
        assert_eq!(l0.pairs.len() * 2, l0.positions.len());
        assert!(matches!(
            build_pilot_pattern(&SlotConfig { n_layers: 5, ..cfg(1) }, 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn pilots_reproducible_and_layer_count_independent() {
        let a = build_pilot_pattern(&cfg(4), 3).unwrap();
        let b = build_pilot_pattern(&cfg(2), 3).unwrap();
        assert_eq!(a.layers()[..2], b.layers()[..]);
        assert_eq!(a, build_pilot_pattern(&cfg(4), 3).unwrap());
    }

    #[test]
    fn time_distances_follow_dmrs_symbols() {
        let p = build_pilot_pattern(&cfg(1), 0).unwrap();
        let pe = positional_encoding(&p, 0).unwrap();
        let dt: Vec<f64> = (0..14).map(|s| pe.raw.data()[s * 2]).collect();
        let want = [2., 1., 0., 1., 2., 3., 4., 4., 3., 2., 1., 0., 1., 2.];
        assert_eq!(dt, want);
        let lp = p.layer(0).unwrap();
        for &(f, s) in &lp.positions {
            assert_eq!(pe.raw.data()[(f * 14 + s) * 2], 0.0);
        }
        // comb of spacing 2 starting at 0: odd subcarriers are one away
        assert_eq!(pe.raw.data()[(5 * 14 + 3) * 2 + 1], 1.0);
    }

    #[test]
    fn encoding_planes_are_standardized() {
        let p = build_pilot_pattern(&cfg(4), 0).unwrap();
        for l in 0..4 {
            let e = positional_encoding(&p, l).unwrap().encoded;
            for plane in 0..2 {
                let v: Vec<f64> = e.data().iter().skip(plane).step_by(2).copied().collect();
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
                assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_plane_encodes_to_zero() {
        // pilots on every subcarrier: frequency distance is zero everywhere
        let positions: Vec<_> = (0..12).flat_map(|f| [(f, 2), (f, 11)]).collect();
        let values = vec![Complex64::new(1.0, 0.0); positions.len()];
        let lp = LayerPilots {
            cdm_group: 0,
            cover: [1.0, 1.0],
            positions,
            values,
            pairs: vec![],
        };
        let p = PilotPattern::from_layers(12, 14, vec![lp]).unwrap();
        let e = positional_encoding(&p, 0).unwrap().encoded;
        assert!(e.data().iter().skip(1).step_by(2).all(|v| *v == 0.0));
        let empty = PilotPattern::from_layers(
            12,
            14,
            vec![LayerPilots {
                cdm_group: 0,
                cover: [1.0, 1.0],
                positions: vec![],
                values: vec![],
                pairs: vec![],
            }],
        )
        .unwrap();
        assert!(matches!(positional_encoding(&empty, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn encoding_ignores_pilot_values() {
        let a = build_pilot_pattern(&cfg(2), 1).unwrap();
        let b = build_pilot_pattern(&cfg(2), 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(positional_encoding(&a, 1).unwrap(), positional_encoding(&b, 1).unwrap());
    }

    #[test]
    fn slot_assembly() {
        let c = cfg(4);
        assert_eq!(c.data_res_per_layer(), 48 * 12);
        let p = build_pilot_pattern(&c, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits = BitGrid::random(&c, &mut rng);
        let grid = assemble_slot(&bits, &p, &c).unwrap();
        for l in 0..4 {
            let lp = p.layer(l).unwrap();
            for (&(f, s), v) in lp.positions.iter().zip(&lp.values) {
                assert_eq!(grid.at(l, f, s), *v);
            }
        }
        for &(f, s) in &p.layer(2).unwrap().positions {
            assert_eq!(grid.at(0, f, s), Complex64::new(0.0, 0.0));
        }
        let short = BitGrid {
            bits: bits.bits[1..].to_vec(),
            ..bits.clone()
        };
        assert!(matches!(assemble_slot(&short, &p, &c), Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn nearest_neighbour_demapping_recovers_bits(seed in any::<u64>(), m in prop::sample::select(vec![2usize, 4])) {
            let c = SlotConfig::new(12, 14, 2, 2, m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bits = BitGrid::random(&c, &mut rng);
            let p = build_pilot_pattern(&c, seed).unwrap();
            let grid = assemble_slot(&bits, &p, &c).unwrap();
            let con = Constellation::new(m).unwrap();
            for l in 0..2 {
                for (k, &(f, s)) in c.data_res().iter().enumerate() {
                    let idx = con.nearest(grid.at(l, f, s));
                    for i in 0..m {
                        prop_assert_eq!(con.bit(idx, i), bits.layer(l)[k * m + i]);
                    }
                }
            }
        }
    }
}
