//! Reverse-mode differentiation over dense row-major matrices.
//!
//! Vector-valued features are stored as `[rows × 3·k]` with the coordinate
//! as the slower index (`c * k + channel`), so reshaping to `[3·rows × k]`
//! turns a channel-mixing linear map into a plain matrix product.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length");
        Tensor { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c = beta * c + a · b` with optional transposes; shapes are those of the
/// (possibly transposed) operands: `a` is m×k, `b` is k×n.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths checked above; strides describe dense row-major
    // storage of the stated shapes.
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const NORM_EPS: f64 = 1e-8;
const LN_EPS: f64 = 1e-5;

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Concat(Vec<Var>),
    ConcatVec(Vec<Var>),
    Gather(Var, Vec<usize>),
    Scatter { src: Var, index: Vec<usize>, weight: Option<Vec<f64>> },
    Silu(Var),
    Sigmoid(Var),
    VecNorm(Var),
    GateVec(Var, Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    VecNormalize { x: Var, scale: Vec<f64> },
    Reshape(Var),
    Mask(Var, Vec<f64>),
}

struct Node {
    op: Op,
    value: Option<Tensor>,
    needs_grad: bool,
}

/// Records operations on a forward pass and replays them backwards.
pub struct Tape<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params[*i],
            (_, Some(t)) => t,
            _ => unreachable!("node without value"),
        }
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows, t.cols)
    }

    fn push(&mut self, op: Op, value: Option<Tensor>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, Some(t), false)
    }

    pub fn param(&mut self, index: usize) -> Var {
        self.push(Op::Param(index), None, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimension");
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, &self.value(a).data, false, &self.value(b).data, false, &mut out.data, 0.0);
        let g = self.grad_flag(&[a, b]);
        self.push(Op::MatMul(a, b), Some(out), g)
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let mut out = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!((b.rows, b.cols), (1, out.cols), "bias shape");
        for row in out.data.chunks_mut(out.cols.max(1)) {
            for (x, y) in row.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        let g = self.grad_flag(&[a, bias]);
        self.push(Op::AddBias(a, bias), Some(out), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        let other = self.value(b);
        assert_eq!((out.rows, out.cols), (other.rows, other.cols), "add shapes");
        out.add_assign(other);
        let g = self.grad_flag(&[a, b]);
        self.push(Op::Add(a, b), Some(out), g)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat rows");
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + t.cols].copy_from_slice(t.row(r));
            }
            offset += t.cols;
        }
        let g = self.grad_flag(parts);
        self.push(Op::Concat(parts.to_vec()), Some(out), g)
    }

    /// Concatenates vector features along the channel axis.
    pub fn concat_vec(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let channels: Vec<usize> = parts.iter().map(|&p| self.shape(p).1 / 3).collect();
        let total: usize = channels.iter().sum();
        let mut out = Tensor::zeros(rows, 3 * total);
        let mut offset = 0;
        for (&p, &k) in parts.iter().zip(&channels) {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat_vec rows");
            for r in 0..rows {
                for c in 0..3 {
                    let dst = r * 3 * total + c * total + offset;
                    out.data[dst..dst + k].copy_from_slice(&t.data[r * 3 * k + c * k..r * 3 * k + (c + 1) * k]);
                }
            }
            offset += k;
        }
        let g = self.grad_flag(parts);
        self.push(Op::ConcatVec(parts.to_vec()), Some(out), g)
    }

    pub fn gather(&mut self, a: Var, index: &[usize]) -> Var {
        let t = self.value(a);
        let cols = t.cols;
        let mut out = Tensor::zeros(index.len(), cols);
        for (r, &i) in index.iter().enumerate() {
            out.data[r * cols..(r + 1) * cols].copy_from_slice(t.row(i));
        }
        let g = self.grad_flag(&[a]);
        self.push(Op::Gather(a, index.to_vec()), Some(out), g)
    }

    /// `out[index[e]] += weight[e] * a[e]` into `rows` output rows.
    pub fn scatter(&mut self, a: Var, index: &[usize], weight: Option<Vec<f64>>, rows: usize) -> Var {
        let t = self.value(a);
        let cols = t.cols;
        let mut out = Tensor::zeros(rows, cols);
        for (e, &i) in index.iter().enumerate() {
            let w = weight.as_ref().map_or(1.0, |w| w[e]);
            for (o, x) in out.data[i * cols..(i + 1) * cols].iter_mut().zip(t.row(e)) {
                *o += w * x;
            }
        }
        let g = self.grad_flag(&[a]);
        self.push(
            Op::Scatter {
                src: a,
                index: index.to_vec(),
                weight,
            },
            Some(out),
            g,
        )
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|&x| x * sigmoid(x)).collect();
        let out = Tensor::from_vec(t.rows, t.cols, data);
        let g = self.grad_flag(&[a]);
        self.push(Op::Silu(a), Some(out), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data.iter().map(|&x| sigmoid(x)).collect();
        let out = Tensor::from_vec(t.rows, t.cols, data);
        let g = self.grad_flag(&[a]);
        self.push(Op::Sigmoid(a), Some(out), g)
    }

    /// Per-channel Euclidean norm of vector features: `[r × 3k] -> [r × k]`.
    pub fn vec_norm(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let k = t.cols / 3;
        let mut out = Tensor::zeros(t.rows, k);
        for r in 0..t.rows {
            let row = t.row(r);
            for ch in 0..k {
                let s: f64 = (0..3).map(|c| row[c * k + ch] * row[c * k + ch]).sum();
                out.data[r * k + ch] = (s + NORM_EPS).sqrt();
            }
        }
        let g = self.grad_flag(&[a]);
        self.push(Op::VecNorm(a), Some(out), g)
    }

    /// Scales every vector channel by a per-row scalar gate: `[r × 3k] ⊙ [r × k]`.
    pub fn gate_vec(&mut self, v: Var, gate: Var) -> Var {
        let tv = self.value(v);
        let tg = self.value(gate);
        let k = tg.cols;
        assert_eq!((tv.rows, tv.cols), (tg.rows, 3 * k), "gate shapes");
        let mut out = tv.clone();
        for r in 0..tv.rows {
            for c in 0..3 {
                for ch in 0..k {
                    out.data[r * 3 * k + c * k + ch] *= tg.data[r * k + ch];
                }
            }
        }
        let g = self.grad_flag(&[v, gate]);
        self.push(Op::GateVec(v, gate), Some(out), g)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let t = self.value(x);
        let (rows, cols) = (t.rows, t.cols);
        let gv = &self.value(gain).data;
        let bv = &self.value(bias).data;
        let mut out = Tensor::zeros(rows, cols);
        let mut xhat = vec![0.0; rows * cols];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = gv[c] * h + bv[c];
            }
        }
        let g = self.grad_flag(&[x, gain, bias]);
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            Some(out),
            g,
        )
    }

    /// Divides each row of vector features by its root-mean-square channel norm.
    pub fn vec_normalize(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let k = (t.cols / 3).max(1);
        let mut out = t.clone();
        let mut scale = vec![0.0; t.rows];
        for r in 0..t.rows {
            let sq: f64 = t.row(r).iter().map(|v| v * v).sum();
            let s = (sq / k as f64 + NORM_EPS).sqrt();
            scale[r] = s;
            for v in &mut out.data[r * t.cols..(r + 1) * t.cols] {
                *v /= s;
            }
        }
        let g = self.grad_flag(&[x]);
        self.push(Op::VecNormalize { x, scale }, Some(out), g)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows * t.cols, rows * cols, "reshape size");
        let out = Tensor::from_vec(rows, cols, t.data.clone());
        let g = self.grad_flag(&[a]);
        self.push(Op::Reshape(a), Some(out), g)
    }

    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let t = self.value(a);
        assert_eq!(mask.len(), t.data.len());
        let data = t.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(t.rows, t.cols, data);
        let g = self.grad_flag(&[a]);
        self.push(Op::Mask(a, mask), Some(out), g)
    }

    /// Back-propagates `seed` from `output`, accumulating into `param_grads`.
    pub fn backward(&self, output: Var, seed: Tensor, param_grads: &mut [Tensor]) {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(i) => param_grads[*i].add_assign(&g),
                Op::MatMul(a, b) => {
                    let ta = self.value(*a);
                    let tb = self.value(*b);
                    let (m, k, n) = (ta.rows, ta.cols, tb.cols);
                    if self.nodes[a.0].needs_grad {
                        let mut ga = Tensor::zeros(m, k);
                        gemm(m, n, k, &g.data, false, &tb.data, true, &mut ga.data, 0.0);
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut gb = Tensor::zeros(k, n);
                        gemm(k, m, n, &ta.data, true, &g.data, false, &mut gb.data, 0.0);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.nodes[bias.0].needs_grad {
                        let mut gb = Tensor::zeros(1, g.cols);
                        for row in g.data.chunks(g.cols.max(1)) {
                            for (x, y) in gb.data.iter_mut().zip(row) {
                                *x += y;
                            }
                        }
                        accumulate(&mut grads, *bias, gb);
                    }
                    if self.nodes[a.0].needs_grad {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.nodes[b.0].needs_grad {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        if self.nodes[p.0].needs_grad {
                            let mut gp = Tensor::zeros(rows, cols);
                            for r in 0..rows {
                                gp.data[r * cols..(r + 1) * cols]
                                    .copy_from_slice(&g.data[r * g.cols + offset..r * g.cols + offset + cols]);
                            }
                            accumulate(&mut grads, p, gp);
                        }
                        offset += cols;
                    }
                }
                Op::ConcatVec(parts) => {
                    let total = g.cols / 3;
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let k = cols / 3;
                        if self.nodes[p.0].needs_grad {
                            let mut gp = Tensor::zeros(rows, cols);
                            for r in 0..rows {
                                for c in 0..3 {
                                    let src = r * 3 * total + c * total + offset;
                                    gp.data[r * cols + c * k..r * cols + (c + 1) * k]
                                        .copy_from_slice(&g.data[src..src + k]);
                                }
                            }
                            accumulate(&mut grads, p, gp);
                        }
                        offset += k;
                    }
                }
                Op::Gather(a, index) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Tensor::zeros(rows, cols);
                    for (r, &i) in index.iter().enumerate() {
                        for (x, y) in ga.data[i * cols..(i + 1) * cols].iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Scatter { src, index, weight } => {
                    let (rows, cols) = self.shape(*src);
                    let mut ga = Tensor::zeros(rows, cols);
                    for (e, &i) in index.iter().enumerate() {
                        let w = weight.as_ref().map_or(1.0, |w| w[e]);
                        for (x, y) in ga.data[e * cols..(e + 1) * cols].iter_mut().zip(g.row(i)) {
                            *x = w * y;
                        }
                    }
                    accumulate(&mut grads, *src, ga);
                }
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let data = x
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&x, &gy)| {
                            let s = sigmoid(x);
                            gy * s * (1.0 + x * (1.0 - s))
                        })
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(x.rows, x.cols, data));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("sigmoid value");
                    let data = y.data.iter().zip(&g.data).map(|(&y, &gy)| gy * y * (1.0 - y)).collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(y.rows, y.cols, data));
                }
                Op::VecNorm(a) => {
                    let x = self.value(*a);
                    let y = node.value.as_ref().expect("norm value");
                    let k = y.cols;
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        for c in 0..3 {
                            for ch in 0..k {
                                let i = r * 3 * k + c * k + ch;
                                ga.data[i] = g.data[r * k + ch] * x.data[i] / y.data[r * k + ch];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::GateVec(v, gate) => {
                    let tv = self.value(*v);
                    let tg = self.value(*gate);
                    let k = tg.cols;
                    if self.nodes[v.0].needs_grad {
                        let mut gv = g.clone();
                        for r in 0..tv.rows {
                            for c in 0..3 {
                                for ch in 0..k {
                                    gv.data[r * 3 * k + c * k + ch] *= tg.data[r * k + ch];
                                }
                            }
                        }
                        accumulate(&mut grads, *v, gv);
                    }
                    if self.nodes[gate.0].needs_grad {
                        let mut gg = Tensor::zeros(tg.rows, k);
                        for r in 0..tv.rows {
                            for c in 0..3 {
                                for ch in 0..k {
                                    let i = r * 3 * k + c * k + ch;
                                    gg.data[r * k + ch] += g.data[i] * tv.data[i];
                                }
                            }
                        }
                        accumulate(&mut grads, *gate, gg);
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let (rows, cols) = (g.rows, g.cols);
                    let gv = &self.value(*gain).data;
                    if self.nodes[gain.0].needs_grad || self.nodes[bias.0].needs_grad {
                        let mut gg = Tensor::zeros(1, cols);
                        let mut gb = Tensor::zeros(1, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                gg.data[c] += g.data[r * cols + c] * xhat[r * cols + c];
                                gb.data[c] += g.data[r * cols + c];
                            }
                        }
                        accumulate(&mut grads, *gain, gg);
                        accumulate(&mut grads, *bias, gb);
                    }
                    if self.nodes[x.0].needs_grad {
                        let mut gx = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            let mut mean_g = 0.0;
                            let mut mean_gx = 0.0;
                            for c in 0..cols {
                                let gh = g.data[r * cols + c] * gv[c];
                                mean_g += gh;
                                mean_gx += gh * xhat[r * cols + c];
                            }
                            mean_g /= cols as f64;
                            mean_gx /= cols as f64;
                            for c in 0..cols {
                                let gh = g.data[r * cols + c] * gv[c];
                                gx.data[r * cols + c] = rstd[r] * (gh - mean_g - xhat[r * cols + c] * mean_gx);
                            }
                        }
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::VecNormalize { x, scale } => {
                    let tx = self.value(*x);
                    let k = (tx.cols / 3).max(1) as f64;
                    let mut gx = Tensor::zeros(tx.rows, tx.cols);
                    for r in 0..tx.rows {
                        let s = scale[r];
                        let xr = tx.row(r);
                        let gr = g.row(r);
                        let dot: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let coeff = dot / (k * s * s * s);
                        for c in 0..tx.cols {
                            gx.data[r * tx.cols + c] = gr[c] / s - xr[c] * coeff;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Reshape(a) => {
                    let (rows, cols) = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::from_vec(rows, cols, g.data));
                }
                Op::Mask(a, m) => {
                    let data = g.data.iter().zip(m).map(|(x, m)| x * m).collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.rows, g.cols, data));
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
