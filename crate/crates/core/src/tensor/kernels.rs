// Raw numeric kernels shared by the graph ops. All buffers are row-major.

/// `c = a · b (+ c)` for `a: m×k`, `b: k×n`, either operand optionally
/// read transposed from its stored layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    // stored a is m×k, or k×m when transposed
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above describe exactly the m×k, k×n and m×n
    // extents of slices whose lengths are asserted to match.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a batch of `[H, W, C]` feature maps.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MapDims {
    pub groups: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl MapDims {
    fn offset(&self, g: usize, h: usize, w: usize) -> usize {
        ((g * self.height + h) * self.width + w) * self.channels
    }
}

// Neighbour offsets of the 3x3 window that stay inside [0, extent).
fn taps(pos: usize, extent: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..3usize).filter_map(move |i| {
        let p = pos as isize + i as isize - 1;
        (p >= 0 && (p as usize) < extent).then_some((i, p as usize))
    })
}

/// Per-channel 3x3 convolution with zero padding of one; output has the
/// input's spatial size. `kernel` is `[3, 3, C]`.
pub(crate) fn depthwise_forward(x: &[f64], kernel: &[f64], dims: MapDims, out: &mut [f64]) {
    let c = dims.channels;
    out.fill(0.0);
    for g in 0..dims.groups {
        for h in 0..dims.height {
            for w in 0..dims.width {
                let o = dims.offset(g, h, w);
                let dst = &mut out[o..o + c];
                for (i, hh) in taps(h, dims.height) {
                    for (j, ww) in taps(w, dims.width) {
                        let src = &x[dims.offset(g, hh, ww)..][..c];
                        let k = &kernel[(i * 3 + j) * c..][..c];
                        for ((d, s), kv) in dst.iter_mut().zip(src).zip(k) {
                            *d += s * kv;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`depthwise_forward`] given the upstream gradient `dout`.
/// Accumulates into `dx` (when requested) and `dkernel`.
pub(crate) fn depthwise_backward(
    x: &[f64],
    kernel: &[f64],
    dout: &[f64],
    dims: MapDims,
    mut dx: Option<&mut [f64]>,
    dkernel: &mut [f64],
) {
    let c = dims.channels;
    for g in 0..dims.groups {
        for h in 0..dims.height {
            for w in 0..dims.width {
                let o = dims.offset(g, h, w);
                let up = &dout[o..o + c];
                for (i, hh) in taps(h, dims.height) {
                    for (j, ww) in taps(w, dims.width) {
                        let src_off = dims.offset(g, hh, ww);
                        let k_off = (i * 3 + j) * c;
                        let src = &x[src_off..][..c];
                        let dk = &mut dkernel[k_off..][..c];
                        for ((d, s), u) in dk.iter_mut().zip(src).zip(up) {
                            *d += s * u;
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            let k = &kernel[k_off..][..c];
                            let dxs = &mut dx[src_off..][..c];
                            for ((d, kv), u) in dxs.iter_mut().zip(k).zip(up) {
                                *d += kv * u;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `-[b ln σ(l) + (1-b) ln σ(-l)]`, evaluated without overflow.
pub(crate) fn bce_with_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}
