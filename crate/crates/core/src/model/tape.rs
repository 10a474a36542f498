//! Minimal reverse-mode automatic differentiation over row-major matrices.
//!
//! A [`Tape`] records one forward computation. Parameter tensors are read
//! straight out of [`Parameters`] (never copied); [`Tape::backward`] returns
//! the gradient with respect to the flat parameter vector.

use super::params::Parameters;

type NodeId = usize;

#[derive(Debug)]
enum Op {
    Param(usize),
    Const,
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `x + 1·b` for a `[1, cols]` row `b`.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    /// Row softmax; with `causal`, entry (i, j) is masked for j > i.
    Softmax(NodeId),
    Gather {
        table: NodeId,
        ids: Vec<u32>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    /// Mean cross-entropy over rows whose target is not `ignore`.
    CrossEntropy {
        logits: NodeId,
        targets: Vec<u32>,
        ignore: u32,
        probs: Vec<f64>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// `c += a · b` with `a: [n, k]`, `b: [k, m]`.
fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let row = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (cj, bj) in row.iter_mut().zip(brow) {
                *cj += av * bj;
            }
        }
    }
}

/// Dot product with four independent partial sums (fixed order, so
/// results are reproducible).
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `c += a · bᵀ` with `a: [n, k]`, `b: [m, k]`.
fn matmul_bt_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            c[i * m + j] += dot(arow, brow);
        }
    }
}

/// `c += aᵀ · b` with `a: [n, k]`, `b: [n, m]`.
fn matmul_at_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * m..(p + 1) * m];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += av * bj;
            }
        }
    }
}

pub struct Tape<'p> {
    params: &'p Parameters,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Parameters) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            param_nodes: vec![None; params.layout().len()],
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id].rows, self.nodes[id].cols)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        match self.nodes[id].op {
            Op::Param(t) => self.params.tensor_data(t),
            _ => &self.nodes[id].value,
        }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        self.nodes.len() - 1
    }

    /// Node for the named parameter tensor (created once per tape).
    pub fn param(&mut self, name: &str) -> NodeId {
        let t = self
            .params
            .tensor_index(name)
            .unwrap_or_else(|| panic!("unknown parameter tensor {name}"));
        if let Some(id) = self.param_nodes[t] {
            return id;
        }
        let spec = &self.params.layout()[t];
        let id = self.push(spec.rows, spec.cols, Vec::new(), Op::Param(t));
        self.param_nodes[t] = Some(id);
        id
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        assert_eq!(value.len(), rows * cols);
        self.push(rows, cols, value, Op::Const)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions");
        let mut out = vec![0.0; n * m];
        matmul_acc(self.value(a), self.value(b), &mut out, n, k, m);
        self.push(n, m, out, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_bt inner dimensions");
        let mut out = vec![0.0; n * m];
        matmul_bt_acc(self.value(a), self.value(b), &mut out, n, k, m);
        self.push(n, m, out, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b));
        let (r, c) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        self.push(r, c, out, Op::Add(a, b))
    }

    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(b), (1, c));
        let bias = self.value(b);
        let out = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(bias).map(|(v, b)| v + b))
            .collect();
        self.push(r, c, out, Op::AddRow(x, b))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v * s).collect();
        self.push(r, c, out, Op::Scale(x, s))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        self.push(r, c, out, Op::Gelu(x))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        assert_eq!(self.shape(gain), (1, c));
        assert_eq!(self.shape(bias), (1, c));
        let xs = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        self.push(
            r,
            c,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    pub fn softmax(&mut self, x: NodeId, causal: bool) -> NodeId {
        let (r, c) = self.shape(x);
        let xs = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let visible = if causal { (i + 1).min(c) } else { c };
            let row = &xs[i * c..i * c + visible];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..visible {
                let e = (row[j] - max).exp();
                out[i * c + j] = e;
                sum += e;
            }
            for v in &mut out[i * c..i * c + visible] {
                *v /= sum;
            }
        }
        self.push(r, c, out, Op::Softmax(x))
    }

    pub fn gather(&mut self, table: NodeId, ids: &[u32]) -> NodeId {
        let (rows, c) = self.shape(table);
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            let id = id as usize;
            assert!(id < rows, "gather index {id} out of range {rows}");
            out.extend_from_slice(&t[id * c..(id + 1) * c]);
        }
        self.push(
            ids.len(),
            c,
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.shape(x);
        assert!(start + len <= c);
        let out = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        self.push(r, len, out, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let r = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.shape(p).1;
                assert_eq!(self.shape(p).0, r);
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        self.push(r, total, out, Op::ConcatCols(parts.to_vec()))
    }

    /// Mean token cross-entropy; rows with target `ignore` do not count.
    /// An all-ignored batch has loss 0.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u32], ignore: u32) -> NodeId {
        let (r, c) = self.shape(logits);
        assert_eq!(targets.len(), r);
        let xs = self.value(logits);
        let mut probs = vec![0.0; r * c];
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - log_z).exp();
            }
            if targets[i] != ignore {
                total += log_z - row[targets[i] as usize];
                count += 1;
            }
        }
        let loss = if count > 0 { total / count as f64 } else { 0.0 };
        self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore,
                probs,
                count,
            },
        )
    }

    /// Back-propagates from the scalar node `loss`; returns d loss / d params
    /// in flat layout order.
    pub fn backward(&self, loss: NodeId) -> Vec<f64> {
        assert_eq!(self.shape(loss), (1, 1));
        let mut grads = Grads {
            nodes: self.nodes.iter().map(|_| Vec::new()).collect(),
            params: vec![0.0; self.params.len()],
            param_offset: self
                .nodes
                .iter()
                .map(|n| match n.op {
                    Op::Param(t) => Some(self.params.layout()[t].offset),
                    _ => None,
                })
                .collect(),
        };
        grads.nodes[loss] = vec![1.0];

        for id in (0..=loss).rev() {
            if grads.nodes[id].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads.nodes[id]);
            let node = &self.nodes[id];
            let (r, c) = (node.rows, node.cols);
            match &node.op {
                Op::Param(_) | Op::Const => {}
                Op::MatMul(a, b) => {
                    let (n, k) = self.shape(*a);
                    let m = c;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = grads.acc(*a, n * k);
                    matmul_bt_acc(&g, bv, ga, n, m, k);
                    let gb = grads.acc(*b, k * m);
                    matmul_at_acc(av, &g, gb, n, k, m);
                }
                Op::MatMulBt(a, b) => {
                    let (n, k) = self.shape(*a);
                    let m = c;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = grads.acc(*a, n * k);
                    matmul_acc(&g, bv, ga, n, m, k);
                    let gb = grads.acc(*b, m * k);
                    matmul_at_acc(&g, av, gb, n, m, k);
                }
                Op::Add(a, b) => {
                    for t in [*a, *b] {
                        for (x, y) in grads.acc(t, r * c).iter_mut().zip(&g) {
                            *x += y;
                        }
                    }
                }
                Op::AddRow(x, b) => {
                    for (d, v) in grads.acc(*x, r * c).iter_mut().zip(&g) {
                        *d += v;
                    }
                    let gb = grads.acc(*b, c);
                    for row in g.chunks(c) {
                        for (d, v) in gb.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
                Op::Scale(x, s) => {
                    for (d, v) in grads.acc(*x, r * c).iter_mut().zip(&g) {
                        *d += s * v;
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let gx = grads.acc(*x, r * c);
                    for i in 0..r * c {
                        gx[i] += g[i] * gelu_grad(xv[i]);
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gain).to_vec();
                    {
                        let gg = grads.acc(*gain, c);
                        for i in 0..r {
                            for j in 0..c {
                                gg[j] += g[i * c + j] * xhat[i * c + j];
                            }
                        }
                    }
                    {
                        let gb = grads.acc(*bias, c);
                        for row in g.chunks(c) {
                            for (d, v) in gb.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                    let gx = grads.acc(*x, r * c);
                    for i in 0..r {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..c {
                            let dh = g[i * c + j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * xhat[i * c + j];
                        }
                        mean_dh /= c as f64;
                        mean_dh_h /= c as f64;
                        for j in 0..c {
                            let dh = g[i * c + j] * gv[j];
                            gx[i * c + j] += rstd[i] * (dh - mean_dh - xhat[i * c + j] * mean_dh_h);
                        }
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let gx = grads.acc(*x, r * c);
                    for i in 0..r {
                        let yr = &y[i * c..(i + 1) * c];
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gx[i * c + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    let rows = self.shape(*table).0;
                    let gt = grads.acc(*table, rows * c);
                    for (i, &id) in ids.iter().enumerate() {
                        let id = id as usize;
                        for j in 0..c {
                            gt[id * c + j] += g[i * c + j];
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let xc = self.shape(*x).1;
                    let gx = grads.acc(*x, r * xc);
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * xc + start + j] += g[i * c + j];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let pc = self.shape(p).1;
                        let gp = grads.acc(p, r * pc);
                        for i in 0..r {
                            for j in 0..pc {
                                gp[i * pc + j] += g[i * c + col + j];
                            }
                        }
                        col += pc;
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    ignore,
                    probs,
                    count,
                } => {
                    if *count == 0 {
                        continue;
                    }
                    let (lr, lc) = self.shape(*logits);
                    let scale = g[0] / *count as f64;
                    let gl = grads.acc(*logits, lr * lc);
                    for i in 0..lr {
                        if targets[i] == *ignore {
                            continue;
                        }
                        for j in 0..lc {
                            gl[i * lc + j] += scale * probs[i * lc + j];
                        }
                        gl[i * lc + targets[i] as usize] -= scale;
                    }
                }
            }
        }
        grads.params
    }
}

/// Gradient buffers; parameter nodes accumulate straight into the flat
/// parameter gradient.
struct Grads {
    nodes: Vec<Vec<f64>>,
    params: Vec<f64>,
    param_offset: Vec<Option<usize>>,
}

impl Grads {
    fn acc(&mut self, id: NodeId, len: usize) -> &mut [f64] {
        if let Some(off) = self.param_offset[id] {
            return &mut self.params[off..off + len];
        }
        if self.nodes[id].is_empty() {
            self.nodes[id] = vec![0.0; len];
        }
        &mut self.nodes[id]
    }
}
