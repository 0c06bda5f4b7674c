use super::kernels::{self, MapDims};
use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    SepConv {
        x: Var,
        dw: Var,
        pw: Var,
        b: Var,
        dims: MapDims,
        depthwise: Vec<f64>,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    OthersMean {
        x: Var,
        layers: usize,
    },
    Bce {
        logits: Var,
        labels: Vec<f64>,
        mask: Vec<bool>,
        count: usize,
    },
    Mean(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run computation record. Build it with a forward pass, call
/// [`Graph::backward`] once, then [`Graph::reset`] (or drop it) before the
/// next forward.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
    // Gates replayed by `relu` instead of the sign of its input, with a cursor.
    frozen_relu: Option<(Vec<bool>, usize)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph whose `relu` calls pass or block entries according to `pattern`
    /// (as returned by [`Graph::relu_pattern`]) rather than their sign. The
    /// recorded function is then smooth near the point that produced the
    /// pattern and has the same gradient there.
    pub fn with_relu_pattern(pattern: Vec<bool>) -> Self {
        Self {
            frozen_relu: Some((pattern, 0)),
            ..Self::default()
        }
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
        if let Some((_, cursor)) = &mut self.frozen_relu {
            *cursor = 0;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if self.consumed {
            return Err(Error::State(
                "graph already consumed by backward; reset it before recording".into(),
            ));
        }
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite output from {}", op_name(&op))));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Non-trainable input.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, false)
    }

    /// Records the current value of parameter `name`; its gradient lands in
    /// `params` on backward.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let t = params.get(name)?.clone();
        self.push(t, Op::Param(name.to_string()), true)
    }

    /// Affine map `x·W + b` along the trailing axis.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if ws.len() != 2 {
            return Err(Error::dim("dense weight rank", 2, ws.len()));
        }
        let (in_dim, out_dim) = (ws[0], ws[1]);
        let x_last = xs.last().copied().unwrap_or(0);
        if xs.is_empty() || x_last != in_dim {
            return Err(Error::dim(
                format!("dense input axis {}", xs.len().saturating_sub(1)),
                in_dim,
                x_last,
            ));
        }
        if bs.len() != 1 || bs[0] != out_dim {
            return Err(Error::dim("dense bias axis 0", out_dim, bs.iter().product()));
        }
        let rows = self.value(x).len() / in_dim;
        let mut shape = xs.to_vec();
        *shape.last_mut().expect("non-empty") = out_dim;
        let mut out = vec![0.0; rows * out_dim];
        let bias = self.value(b).data();
        for row in out.chunks_exact_mut(out_dim) {
            row.copy_from_slice(bias);
        }
        kernels::gemm(
            rows,
            in_dim,
            out_dim,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            &mut out,
            true,
        );
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(Tensor::new(shape, out)?, Op::Dense { x, w, b }, rg)
    }

    /// 3x3 depthwise convolution (zero padding, same size) followed by a 1x1
    /// pointwise mix and bias. `x` is `[H, W, C]` or `[G, H, W, C]`.
    pub fn separable_conv2d(&mut self, x: Var, dw: Var, pw: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let dims = match xs.as_slice() {
            [h, w, c] => MapDims {
                groups: 1,
                height: *h,
                width: *w,
                channels: *c,
            },
            [g, h, w, c] => MapDims {
                groups: *g,
                height: *h,
                width: *w,
                channels: *c,
            },
            _ => return Err(Error::dim("separable_conv2d input rank", 4, xs.len())),
        };
        if dims.height == 0 || dims.width == 0 {
            return Err(Error::Contract("separable_conv2d needs H >= 1 and W >= 1".into()));
        }
        let cin = dims.channels;
        let dws = self.value(dw).shape();
        if dws.len() != 3 || dws[0] != 3 || dws[1] != 3 {
            return Err(Error::Contract(format!(
                "depthwise kernel must be [3, 3, C], got {dws:?}"
            )));
        }
        if dws[2] != cin {
            return Err(Error::dim("depthwise kernel channel axis 2", cin, dws[2]));
        }
        let pws = self.value(pw).shape();
        if pws.len() != 2 || pws[0] != cin {
            return Err(Error::dim(
                "pointwise kernel axis 0",
                cin,
                pws.first().copied().unwrap_or(0),
            ));
        }
        let cout = pws[1];
        let bs = self.value(b).shape();
        if bs.len() != 1 || bs[0] != cout {
            return Err(Error::dim("separable_conv2d bias axis 0", cout, bs.iter().product()));
        }
        let sites = dims.groups * dims.height * dims.width;
        let mut depthwise = vec![0.0; sites * cin];
        kernels::depthwise_forward(self.value(x).data(), self.value(dw).data(), dims, &mut depthwise);
        let mut out = vec![0.0; sites * cout];
        let bias = self.value(b).data();
        for row in out.chunks_exact_mut(cout) {
            row.copy_from_slice(bias);
        }
        kernels::gemm(
            sites,
            cin,
            cout,
            &depthwise,
            false,
            self.value(pw).data(),
            false,
            &mut out,
            true,
        );
        let mut shape = xs;
        *shape.last_mut().expect("rank >= 3") = cout;
        let rg = self.needs(x) || self.needs(dw) || self.needs(pw) || self.needs(b);
        self.push(
            Tensor::new(shape, out)?,
            Op::SepConv {
                x,
                dw,
                pw,
                b,
                dims,
                depthwise,
            },
            rg,
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        let data = match &mut self.frozen_relu {
            None => v.data().iter().map(|a| a.max(0.0)).collect(),
            Some((gates, cursor)) => {
                let end = *cursor + v.len();
                let gates = gates.get(*cursor..end).ok_or_else(|| {
                    Error::Contract(format!(
                        "frozen ReLU pattern has {} gates, forward needs more",
                        gates.len()
                    ))
                })?;
                *cursor = end;
                v.data()
                    .iter()
                    .zip(gates)
                    .map(|(&a, &on)| if on { a } else { 0.0 })
                    .collect()
            }
        };
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let rg = self.needs(x);
        self.push(out, Op::Relu(x), rg)
    }

    /// Which ReLU inputs on the tape are strictly positive, in recording
    /// order. Two forwards with equal patterns lie on the same linear piece.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|&a| a > 0.0))
            .collect()
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|&a| kernels::sigmoid(a)).collect(),
        )?;
        let rg = self.needs(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_mismatch("add", va.shape(), vb.shape()));
        }
        let out = Tensor::new(
            va.shape().to_vec(),
            va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect(),
        )?;
        let rg = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let v = self.value(a);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x * factor).collect())?;
        let rg = self.needs(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// Concatenation along the trailing (feature) axis.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let lead = self.value(*first).shape();
        let lead = lead[..lead.len().saturating_sub(1)].to_vec();
        let mut widths = Vec::with_capacity(inputs.len());
        for (i, v) in inputs.iter().enumerate() {
            let s = self.value(*v).shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::Contract(format!(
                    "concat input {i} has leading shape {s:?}, expected {lead:?}"
                )));
            }
            widths.push(*s.last().expect("non-empty"));
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = vec![0.0; rows * total];
        let mut col = 0;
        for (v, &wd) in inputs.iter().zip(&widths) {
            let src = self.value(*v).data();
            for r in 0..rows {
                out[r * total + col..r * total + col + wd].copy_from_slice(&src[r * wd..(r + 1) * wd]);
            }
            col += wd;
        }
        let mut shape = lead;
        shape.push(total);
        let rg = inputs.iter().any(|v| self.needs(*v));
        self.push(Tensor::new(shape, out)?, Op::Concat(inputs.to_vec()), rg)
    }

    /// For `x` of shape `[B·L, ...]` grouped as `B` blocks of `L` layers,
    /// returns for every layer the mean over the other `L − 1` layers of the
    /// same block (zeros when `L == 1`).
    pub fn others_mean(&mut self, x: Var, layers: usize) -> Result<Var> {
        let v = self.value(x);
        let lead = v.shape().first().copied().unwrap_or(0);
        if layers == 0 || lead % layers != 0 {
            return Err(Error::dim("others_mean axis 0 (multiple of layers)", layers, lead));
        }
        let per = v.len() / lead;
        let blocks = lead / layers;
        let mut out = vec![0.0; v.len()];
        if layers > 1 {
            let inv = 1.0 / (layers - 1) as f64;
            let src = v.data();
            for blk in 0..blocks {
                for n in 0..layers {
                    let dst = &mut out[(blk * layers + n) * per..][..per];
                    for other in (0..layers).filter(|&o| o != n) {
                        let s = &src[(blk * layers + other) * per..][..per];
                        for (d, a) in dst.iter_mut().zip(s) {
                            *d += a;
                        }
                    }
                    for d in dst.iter_mut() {
                        *d *= inv;
                    }
                }
            }
        }
        let out = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.needs(x);
        self.push(out, Op::OthersMean { x, layers }, rg)
    }

    /// Mean binary cross-entropy of logits against 0/1 labels over the
    /// entries where `mask` is true. Returns a scalar.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64], mask: Option<&[bool]>) -> Result<Var> {
        let v = self.value(logits);
        if labels.len() != v.len() {
            return Err(Error::dim("bce labels length", v.len(), labels.len()));
        }
        let mask = match mask {
            Some(m) if m.len() != v.len() => return Err(Error::dim("bce mask length", v.len(), m.len())),
            Some(m) => m.to_vec(),
            None => vec![true; v.len()],
        };
        let count = mask.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(Error::Contract("bce mask selects no entries".into()));
        }
        let mut sum = 0.0;
        for ((&l, &b), &m) in v.data().iter().zip(labels).zip(&mask) {
            if m {
                sum += kernels::bce_with_logit(l, b);
            }
        }
        let rg = self.needs(logits);
        self.push(
            Tensor::scalar(sum / count as f64),
            Op::Bce {
                logits,
                labels: labels.to_vec(),
                mask,
                count,
            },
            rg,
        )
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("mean of zero tensors".into()))?;
        let shape = self.value(*first).shape().to_vec();
        let mut acc = vec![0.0; self.value(*first).len()];
        for v in inputs {
            let t = self.value(*v);
            if t.shape() != shape.as_slice() {
                return Err(shape_mismatch("mean", &shape, t.shape()));
            }
            for (a, x) in acc.iter_mut().zip(t.data()) {
                *a += x;
            }
        }
        let inv = 1.0 / inputs.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        let rg = inputs.iter().any(|v| self.needs(*v));
        self.push(Tensor::new(shape, acc)?, Op::Mean(inputs.to_vec()), rg)
    }

    /// Reverse sweep from a scalar `loss`; parameter gradients are added to
    /// the buffers in `params`. The graph is consumed afterwards.
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet) -> Result<()> {
        if self.consumed {
            return Err(Error::State(
                "backward already ran on this graph; run a new forward".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient at {}",
                    op_name(&node.op)
                )));
            }
            self.backprop_node(node, &g, &mut grads, params)?;
        }
        Ok(())
    }

    fn backprop_node(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        params: &mut ParamSet,
    ) -> Result<()> {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Param(name) => params.accumulate_grad(name, g)?,
            Op::Dense { x, w, b } => {
                let (in_dim, out_dim) = {
                    let s = nodes[w.0].value.shape();
                    (s[0], s[1])
                };
                let rows = g.len() / out_dim;
                if needs(*x) {
                    let dx = slot(grads, nodes, *x);
                    kernels::gemm(rows, out_dim, in_dim, g, false, nodes[w.0].value.data(), true, dx, true);
                }
                if needs(*w) {
                    let dw = slot(grads, nodes, *w);
                    kernels::gemm(in_dim, rows, out_dim, nodes[x.0].value.data(), true, g, false, dw, true);
                }
                if needs(*b) {
                    let db = slot(grads, nodes, *b);
                    for row in g.chunks_exact(out_dim) {
                        for (d, r) in db.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                }
            }
            Op::SepConv {
                x,
                dw,
                pw,
                b,
                dims,
                depthwise,
            } => {
                let cin = dims.channels;
                let cout = nodes[pw.0].value.shape()[1];
                let sites = g.len() / cout;
                if needs(*b) {
                    let db = slot(grads, nodes, *b);
                    for row in g.chunks_exact(cout) {
                        for (d, r) in db.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                }
                if needs(*pw) {
                    let dpw = slot(grads, nodes, *pw);
                    kernels::gemm(cin, sites, cout, depthwise, true, g, false, dpw, true);
                }
                if needs(*x) || needs(*dw) {
                    let mut dmid = vec![0.0; sites * cin];
                    kernels::gemm(
                        sites,
                        cout,
                        cin,
                        g,
                        false,
                        nodes[pw.0].value.data(),
                        true,
                        &mut dmid,
                        false,
                    );
                    let mut dk = vec![0.0; 9 * cin];
                    let xv = nodes[x.0].value.data();
                    let kv = nodes[dw.0].value.data();
                    if needs(*x) {
                        let dx = slot(grads, nodes, *x);
                        kernels::depthwise_backward(xv, kv, &dmid, *dims, Some(dx), &mut dk);
                    } else {
                        kernels::depthwise_backward(xv, kv, &dmid, *dims, None, &mut dk);
                    }
                    if needs(*dw) {
                        add_into(slot(grads, nodes, *dw), &dk);
                    }
                }
            }
            Op::Relu(x) => {
                // Nonzero output marks an open gate, also under a frozen pattern.
                let out = node.value.data();
                let dx = slot(grads, nodes, *x);
                for ((d, u), o) in dx.iter_mut().zip(g).zip(out) {
                    if *o != 0.0 {
                        *d += u;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let out = node.value.data();
                let dx = slot(grads, nodes, *x);
                for ((d, u), s) in dx.iter_mut().zip(g).zip(out) {
                    *d += u * s * (1.0 - s);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if needs(*v) {
                        add_into(slot(grads, nodes, *v), g);
                    }
                }
            }
            Op::Scale(a, f) => {
                let da = slot(grads, nodes, *a);
                for (d, u) in da.iter_mut().zip(g) {
                    *d += u * f;
                }
            }
            Op::Concat(inputs) => {
                let total = node.value.last_dim();
                let rows = g.len() / total.max(1);
                let mut col = 0;
                for v in inputs {
                    let wd = nodes[v.0].value.last_dim();
                    if needs(*v) {
                        let dv = slot(grads, nodes, *v);
                        for r in 0..rows {
                            let src = &g[r * total + col..r * total + col + wd];
                            for (d, s) in dv[r * wd..(r + 1) * wd].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    col += wd;
                }
            }
            Op::OthersMean { x, layers } => {
                let layers = *layers;
                if layers > 1 {
                    let lead = node.value.shape()[0];
                    let per = g.len() / lead;
                    let inv = 1.0 / (layers - 1) as f64;
                    let dx = slot(grads, nodes, *x);
                    for blk in 0..lead / layers {
                        for n in 0..layers {
                            let up = &g[(blk * layers + n) * per..][..per];
                            for other in (0..layers).filter(|&o| o != n) {
                                let d = &mut dx[(blk * layers + other) * per..][..per];
                                for (dd, u) in d.iter_mut().zip(up) {
                                    *dd += u * inv;
                                }
                            }
                        }
                    }
                } else {
                    slot(grads, nodes, *x);
                }
            }
            Op::Bce {
                logits,
                labels,
                mask,
                count,
            } => {
                let scale = g[0] / *count as f64;
                let lv = nodes[logits.0].value.data();
                let dl = slot(grads, nodes, *logits);
                for (((d, &l), &b), &m) in dl.iter_mut().zip(lv).zip(labels).zip(mask) {
                    if m {
                        *d += scale * (kernels::sigmoid(l) - b);
                    }
                }
            }
            Op::Mean(inputs) => {
                let inv = 1.0 / inputs.len() as f64;
                for v in inputs {
                    if needs(*v) {
                        let dv = slot(grads, nodes, *v);
                        for (d, u) in dv.iter_mut().zip(g) {
                            *d += u * inv;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn shape_mismatch(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Contract(format!("{op}: shapes {a:?} and {b:?} differ"))
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "constant",
        Op::Param(_) => "parameter",
        Op::Dense { .. } => "dense",
        Op::SepConv { .. } => "separable_conv2d",
        Op::Relu(_) => "relu",
        Op::Sigmoid(_) => "sigmoid",
        Op::Add(..) => "add",
        Op::Scale(..) => "scale",
        Op::Concat(_) => "concat",
        Op::OthersMean { .. } => "others_mean",
        Op::Bce { .. } => "bce_with_logits",
        Op::Mean(_) => "mean",
    }
}
