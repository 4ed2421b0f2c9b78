//! Reverse-mode differentiation over dense f64 matrices.

use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One scored choice: `row` of the logits, softmax over columns `lo..hi`,
/// picking column `col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pick {
    pub row: usize,
    pub col: usize,
    pub lo: usize,
    pub hi: usize,
}

enum Op {
    Param(usize),
    Const,
    MatMul(Var, Var),
    /// a * b^T
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Affine(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<Mat> },
    GatherRows { src: Var, idx: Vec<Option<usize>> },
    ConcatCols(Var, Var),
    CoordEmbed { table: Var, slots: Var, bins: Vec<Vec<usize>> },
    LogSoftmaxPick { logits: Var, picks: Vec<Pick>, probs: Vec<Vec<f64>> },
    WeightedSum { x: Var, w: Vec<f64> },
    LogSigmoid(Var),
    ClipSurrogate { lp: Var, ref_lp: Vec<f64>, adv: Vec<f64>, eps: f64, beta: f64 },
}

struct Node {
    value: Mat,
    op: Op,
}

/// Records operations on one computation; parameters are borrowed.
pub struct Tape<'p> {
    params: &'p [Mat],
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const LN_EPS: f64 = 1e-5;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// log(sigmoid(x)) without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-row layer normalization without affine terms; returns (xhat, 1/std).
pub fn normalize_rows(x: &Mat) -> (Mat, Vec<f64>) {
    let (r, c) = x.shape();
    let mut xhat = Mat::zeros(r, c);
    let mut inv = Vec::with_capacity(r);
    for i in 0..r {
        let row = x.row(i);
        let mean = row.sum() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        for j in 0..c {
            xhat[(i, j)] = (x[(i, j)] - mean) * s;
        }
        inv.push(s);
    }
    (xhat, inv)
}

/// Row softmax restricted to `lo..hi`, in place on a scratch vector.
pub fn softmax_range(row: &[f64], lo: usize, hi: usize) -> Vec<f64> {
    let m = row[lo..hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = row[lo..hi].iter().map(|v| (v - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Multi-head scaled dot-product attention; `causal` masks future keys.
/// Returns the output and, per head, the attention probabilities.
pub fn attention(q: &Mat, k: &Mat, v: &Mat, heads: usize, causal: bool) -> (Mat, Vec<Mat>) {
    let (tq, d) = q.shape();
    let tk = k.nrows();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Mat::zeros(tq, d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.columns(h * dh, dh);
        let kh = k.columns(h * dh, dh);
        let vh = v.columns(h * dh, dh);
        let mut s = (qh * kh.transpose()) * scale;
        for i in 0..tq {
            let limit = if causal { i + 1 } else { tk };
            let m = (0..limit).map(|j| s[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..tk {
                let e = if j < limit { (s[(i, j)] - m).exp() } else { 0.0 };
                s[(i, j)] = e;
                z += e;
            }
            for j in 0..tk {
                s[(i, j)] /= z;
            }
        }
        out.columns_mut(h * dh, dh).copy_from(&(&s * vh));
        probs.push(s);
    }
    (out, probs)
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Self { params, param_vars: vec![None; params.len()], nodes: Vec::with_capacity(256) }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn param(&mut self, i: usize) -> Var {
        if let Some(v) = self.param_vars[i] {
            return v;
        }
        let v = self.push(self.params[i].clone(), Op::Param(i));
        self.param_vars[i] = Some(v);
        v
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b).transpose();
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a 1 x c row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        for mut rr in v.row_iter_mut() {
            rr += r;
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    /// `s * a + c` elementwise.
    pub fn affine(&mut self, a: Var, s: f64, c: f64) -> Var {
        let v = self.value(a).map(|x| s * x + c);
        self.push(v, Op::Affine(a, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (xhat, inv_std) = normalize_rows(self.value(x));
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut y = xhat.clone();
        for mut row in y.row_iter_mut() {
            row.component_mul_assign(g);
            row += b;
        }
        self.push(y, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Var {
        let (out, probs) = attention(self.value(q), self.value(k), self.value(v), heads, causal);
        self.push(out, Op::Attention { q, k, v, heads, probs })
    }

    /// Row `i` of the result is `src[idx[i]]`, or zeros for `None`.
    pub fn gather_rows(&mut self, src: Var, idx: Vec<Option<usize>>) -> Var {
        let s = self.value(src);
        let mut out = Mat::zeros(idx.len(), s.ncols());
        for (i, j) in idx.iter().enumerate() {
            if let Some(j) = j {
                out.row_mut(i).copy_from(&s.row(*j));
            }
        }
        self.push(out, Op::GatherRows { src, idx })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Mat::zeros(va.nrows(), va.ncols() + vb.ncols());
        out.columns_mut(0, va.ncols()).copy_from(va);
        out.columns_mut(va.ncols(), vb.ncols()).copy_from(vb);
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Row `i` is `sum_j table[bins[i][j]] * slots[j]` (elementwise product).
    pub fn coord_embed(&mut self, table: Var, slots: Var, bins: Vec<Vec<usize>>) -> Var {
        let (t, s) = (self.value(table), self.value(slots));
        let mut out = Mat::zeros(bins.len(), t.ncols());
        for (i, row) in bins.iter().enumerate() {
            for (j, &b) in row.iter().enumerate() {
                let term = t.row(b).component_mul(&s.row(j));
                let mut o = out.row_mut(i);
                o += term;
            }
        }
        self.push(out, Op::CoordEmbed { table, slots, bins })
    }

    /// Column vector of log-probabilities, one per pick.
    pub fn log_softmax_pick(&mut self, logits: Var, picks: Vec<Pick>) -> Var {
        let l = self.value(logits);
        let mut out = Mat::zeros(picks.len(), 1);
        let mut probs = Vec::with_capacity(picks.len());
        let mut row = vec![0.0; l.ncols()];
        for (i, p) in picks.iter().enumerate() {
            for (c, r) in row.iter_mut().enumerate() {
                *r = l[(p.row, c)];
            }
            let pr = softmax_range(&row, p.lo, p.hi);
            let m = row[p.lo..p.hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row[p.lo..p.hi].iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            out[(i, 0)] = row[p.col] - lse;
            probs.push(pr);
        }
        self.push(out, Op::LogSoftmaxPick { logits, picks, probs })
    }

    /// Scalar `sum_i w[i] * x[i]` over `x` in column-major order.
    pub fn weighted_sum(&mut self, x: Var, w: Vec<f64>) -> Var {
        let v: f64 = self.value(x).iter().zip(&w).map(|(a, b)| a * b).sum();
        self.push(Mat::from_element(1, 1, v), Op::WeightedSum { x, w })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        self.weighted_sum(x, vec![1.0; n])
    }

    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(log_sigmoid);
        self.push(v, Op::LogSigmoid(x))
    }

    /// Per-token clipped surrogate minus the KL estimator
    /// `min(rho A, clip(rho, 1-eps, 1+eps) A) - beta (1/rho + ln rho - 1)`,
    /// with `rho = exp(lp - ref_lp)`.
    pub fn clip_surrogate(&mut self, lp: Var, ref_lp: Vec<f64>, adv: Vec<f64>, eps: f64, beta: f64) -> Var {
        let l = self.value(lp);
        let v = Mat::from_fn(l.nrows(), 1, |i, _| {
            let log_rho = l[(i, 0)] - ref_lp[i];
            let rho = log_rho.exp();
            let a = adv[i];
            let surrogate = (rho * a).min(rho.clamp(1.0 - eps, 1.0 + eps) * a);
            surrogate - beta * ((-log_rho).exp() + log_rho - 1.0)
        });
        self.push(v, Op::ClipSurrogate { lp, ref_lp, adv, eps, beta })
    }

    /// Gradient of scalar `root` with respect to every parameter tensor that
    /// took part; entries for unused tensors are `None`.
    pub fn backward(&self, root: Var) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Mat::from_element(1, 1, 1.0));
        let mut out: Vec<Option<Mat>> = vec![None; self.params.len()];
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, d: Mat| match &mut grads[v.0] {
                Some(existing) => *existing += d,
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Param(i) => {
                    out[*i] = Some(g);
                }
                Op::Const => {}
                Op::MatMul(a, b) => {
                    acc(*a, &g * self.value(*b).transpose());
                    acc(*b, self.value(*a).transpose() * &g);
                }
                Op::MatMulT(a, b) => {
                    acc(*a, &g * self.value(*b));
                    acc(*b, g.transpose() * self.value(*a));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::AddRow(a, row) => {
                    let mut r = Mat::zeros(1, g.ncols());
                    for gr in g.row_iter() {
                        r += gr;
                    }
                    acc(*row, r);
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.component_mul(self.value(*b)));
                    acc(*b, g.component_mul(self.value(*a)));
                }
                Op::Scale(a, s) | Op::Affine(a, s) => acc(*a, g * *s),
                Op::Gelu(a) => {
                    let d = self.value(*a).map(gelu_grad);
                    acc(*a, g.component_mul(&d));
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gm = self.value(*gamma);
                    let (r, c) = g.shape();
                    let mut dx = Mat::zeros(r, c);
                    let mut dg = Mat::zeros(1, c);
                    let mut db = Mat::zeros(1, c);
                    for i in 0..r {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..c {
                            let dxh = g[(i, j)] * gm[(0, j)];
                            mean_d += dxh;
                            mean_dx += dxh * xhat[(i, j)];
                            dg[(0, j)] += g[(i, j)] * xhat[(i, j)];
                            db[(0, j)] += g[(i, j)];
                        }
                        mean_d /= c as f64;
                        mean_dx /= c as f64;
                        for j in 0..c {
                            let dxh = g[(i, j)] * gm[(0, j)];
                            dx[(i, j)] = inv_std[i] * (dxh - mean_d - xhat[(i, j)] * mean_dx);
                        }
                    }
                    acc(*x, dx);
                    acc(*gamma, dg);
                    acc(*beta, db);
                }
                Op::Attention { q, k, v, heads, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.ncols();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Mat::zeros(qv.nrows(), d);
                    let mut dk = Mat::zeros(kv.nrows(), d);
                    let mut dv = Mat::zeros(vv.nrows(), d);
                    for (h, p) in probs.iter().enumerate() {
                        let go = g.columns(h * dh, dh);
                        let dp = go * vv.columns(h * dh, dh).transpose();
                        dv.columns_mut(h * dh, dh).copy_from(&(p.transpose() * go));
                        let mut ds = dp.component_mul(p);
                        for i in 0..ds.nrows() {
                            let s: f64 = ds.row(i).sum();
                            for j in 0..ds.ncols() {
                                ds[(i, j)] -= p[(i, j)] * s;
                            }
                        }
                        ds *= scale;
                        dq.columns_mut(h * dh, dh).copy_from(&(&ds * kv.columns(h * dh, dh)));
                        dk.columns_mut(h * dh, dh).copy_from(&(ds.transpose() * qv.columns(h * dh, dh)));
                    }
                    acc(*q, dq);
                    acc(*k, dk);
                    acc(*v, dv);
                }
                Op::GatherRows { src, idx } => {
                    let s = self.value(*src);
                    let mut d = Mat::zeros(s.nrows(), s.ncols());
                    for (i, j) in idx.iter().enumerate() {
                        if let Some(j) = j {
                            let mut row = d.row_mut(*j);
                            row += g.row(i);
                        }
                    }
                    acc(*src, d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).ncols();
                    let cb = self.value(*b).ncols();
                    acc(*a, g.columns(0, ca).into_owned());
                    acc(*b, g.columns(ca, cb).into_owned());
                }
                Op::CoordEmbed { table, slots, bins } => {
                    let (t, s) = (self.value(*table), self.value(*slots));
                    let mut dt = Mat::zeros(t.nrows(), t.ncols());
                    let mut ds = Mat::zeros(s.nrows(), s.ncols());
                    for (i, row) in bins.iter().enumerate() {
                        let gi = g.row(i);
                        for (j, &b) in row.iter().enumerate() {
                            let mut r = dt.row_mut(b);
                            r += gi.component_mul(&s.row(j));
                            let mut r = ds.row_mut(j);
                            r += gi.component_mul(&t.row(b));
                        }
                    }
                    acc(*table, dt);
                    acc(*slots, ds);
                }
                Op::LogSoftmaxPick { logits, picks, probs } => {
                    let l = self.value(*logits);
                    let mut d = Mat::zeros(l.nrows(), l.ncols());
                    for (i, (p, pr)) in picks.iter().zip(probs).enumerate() {
                        let gi = g[(i, 0)];
                        if gi == 0.0 {
                            continue;
                        }
                        for (c, prob) in (p.lo..p.hi).zip(pr) {
                            d[(p.row, c)] -= gi * prob;
                        }
                        d[(p.row, p.col)] += gi;
                    }
                    acc(*logits, d);
                }
                Op::WeightedSum { x, w } => {
                    let s = g[(0, 0)];
                    let shape = self.value(*x).shape();
                    acc(*x, Mat::from_iterator(shape.0, shape.1, w.iter().map(|wi| wi * s)));
                }
                Op::LogSigmoid(x) => {
                    let d = self.value(*x).map(|v| sigmoid(-v));
                    acc(*x, g.component_mul(&d));
                }
                Op::ClipSurrogate { lp, ref_lp, adv, eps, beta } => {
                    let l = self.value(*lp);
                    let d = Mat::from_fn(l.nrows(), 1, |i, _| {
                        let log_rho = l[(i, 0)] - ref_lp[i];
                        let rho = log_rho.exp();
                        let a = adv[i];
                        let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
                        // The unclipped branch is active when it is the minimum;
                        // the clipped branch has zero slope outside the band.
                        let d_sur = if rho * a <= clipped * a || (rho > 1.0 - eps && rho < 1.0 + eps) {
                            rho * a
                        } else {
                            0.0
                        };
                        let d_kl = -(-log_rho).exp() + 1.0;
                        g[(i, 0)] * (d_sur - beta * d_kl)
                    });
                    acc(*lp, d);
                }
            }
        }
        out
    }
}
