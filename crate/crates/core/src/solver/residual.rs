//! Residual equations and their analytic partial derivatives.
//!
//! Each constraint is evaluated on a "local" parameter vector: the params of
//! its referenced primitives concatenated in reference order. Local
//! gradients are then scattered into the columns of the packed variable
//! vector; fixed primitives have no columns.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::sketch::{
    pack_parameters, residual_arity, validate_constraint, ConstraintInstance, ConstraintKind, ConstraintSequence,
    ParamIndex, PrimitiveKind, Sketch,
};

use ConstraintKind as K;
use PrimitiveKind as P;

/// Which key point of the second operand a point-coincidence targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KeyPoint {
    /// Point position, line start, circle/arc center.
    Origin,
    LineEnd,
    ArcStart,
    ArcEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    None,
    Key(KeyPoint),
    ExternalTangent,
    InternalTangent,
}

#[derive(Debug, Clone)]
struct Compiled {
    kind: ConstraintKind,
    refs: Vec<usize>,
    ops: Vec<PrimitiveKind>,
    value: f64,
    branch: Branch,
    rows: usize,
    width: usize,
}

/// A validated constraint system over a sketch's free parameters.
///
/// Discrete choices (which endpoint a coincidence attaches to, external vs.
/// internal circle tangency) are fixed from the sketch geometry at
/// construction and held for every later evaluation.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    sketch: Sketch,
    index: ParamIndex,
    items: Vec<Compiled>,
    rows: usize,
}

impl ConstraintSystem {
    pub fn new(sketch: &Sketch, constraints: &ConstraintSequence) -> Result<Self> {
        let index = ParamIndex::of(sketch);
        let mut items = Vec::with_capacity(constraints.len());
        let mut rows = 0;
        for c in constraints.iter() {
            validate_constraint(sketch, c)?;
            let ops: Vec<_> = c.refs.iter().map(|&r| sketch.kind(r)).collect();
            let n = residual_arity(c.kind, &ops)?;
            let width = ops.iter().map(|k| k.param_count()).sum();
            let mut item = Compiled {
                kind: c.kind,
                refs: c.refs.clone(),
                ops,
                value: c.value.unwrap_or(0.0),
                branch: Branch::None,
                rows: n,
                width,
            };
            item.branch = choose_branch(sketch, c, &item);
            rows += n;
            items.push(item);
        }
        Ok(Self { sketch: sketch.clone(), index, items, rows })
    }

    pub fn sketch(&self) -> &Sketch {
        &self.sketch
    }

    pub fn index(&self) -> &ParamIndex {
        &self.index
    }

    pub fn variable_count(&self) -> usize {
        self.index.len()
    }

    pub fn residual_count(&self) -> usize {
        self.rows
    }

    /// Rows contributed by each constraint, in sequence order.
    pub fn row_counts(&self) -> Vec<usize> {
        self.items.iter().map(|c| c.rows).collect()
    }

    pub fn initial_point(&self) -> Vec<f64> {
        pack_parameters(&self.sketch).0
    }

    fn gather(&self, item: &Compiled, x: &[f64], local: &mut Vec<f64>, cols: &mut Vec<Option<usize>>) {
        local.clear();
        cols.clear();
        for &r in &item.refs {
            match self.index.slice(r) {
                Some(range) => {
                    local.extend_from_slice(&x[range.clone()]);
                    cols.extend(range.map(Some));
                }
                None => {
                    let p = &self.sketch.primitives[r].params;
                    local.extend_from_slice(p);
                    cols.extend(std::iter::repeat_n(None, p.len()));
                }
            }
        }
    }

    pub fn residuals(&self, x: &[f64]) -> DVector<f64> {
        self.evaluate(x, false).0
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.evaluate(x, true).1
    }

    /// Residual vector and (optionally) the m x n Jacobian at `x`.
    pub fn evaluate(&self, x: &[f64], with_jacobian: bool) -> (DVector<f64>, DMatrix<f64>) {
        debug_assert_eq!(x.len(), self.index.len());
        let n = self.index.len();
        let mut r = DVector::zeros(self.rows);
        let mut jac = if with_jacobian { DMatrix::zeros(self.rows, n) } else { DMatrix::zeros(0, 0) };
        let mut local = Vec::with_capacity(10);
        let mut cols = Vec::with_capacity(10);
        let mut vals = [0.0; 2];
        let mut grads = [0.0; 20];
        let mut row = 0;
        for item in &self.items {
            self.gather(item, x, &mut local, &mut cols);
            let g = &mut grads[..item.rows * item.width];
            g.iter_mut().for_each(|v| *v = 0.0);
            eval_local(item, &local, &mut vals, g);
            for k in 0..item.rows {
                r[row + k] = vals[k];
                if with_jacobian {
                    for (j, col) in cols.iter().enumerate() {
                        if let Some(c) = *col {
                            jac[(row + k, c)] += g[k * item.width + j];
                        }
                    }
                }
            }
            row += item.rows;
        }
        (r, jac)
    }
}

/// Residuals of `constraints` at packed parameters `x`.
pub fn residuals(sketch: &Sketch, constraints: &ConstraintSequence, x: &[f64]) -> Result<Vec<f64>> {
    Ok(ConstraintSystem::new(sketch, constraints)?.residuals(x).iter().copied().collect())
}

/// Analytic m x n Jacobian of the residuals at `x`.
pub fn jacobian(sketch: &Sketch, constraints: &ConstraintSequence, x: &[f64]) -> Result<DMatrix<f64>> {
    Ok(ConstraintSystem::new(sketch, constraints)?.jacobian(x))
}

fn key_point(kind: PrimitiveKind, p: &[f64], key: KeyPoint) -> [f64; 2] {
    match (kind, key) {
        (P::Line, KeyPoint::LineEnd) => [p[2], p[3]],
        (P::Arc, KeyPoint::ArcStart) => [p[0] + p[2] * p[3].cos(), p[1] + p[2] * p[3].sin()],
        (P::Arc, KeyPoint::ArcEnd) => [p[0] + p[2] * p[4].cos(), p[1] + p[2] * p[4].sin()],
        _ => [p[0], p[1]],
    }
}

fn choose_branch(sketch: &Sketch, c: &ConstraintInstance, item: &Compiled) -> Branch {
    let params = |i: usize| &sketch.primitives[c.refs[i]].params;
    match (item.kind, item.ops.as_slice()) {
        (K::Coincident, [P::Point, other]) => {
            let keys: &[KeyPoint] = match other {
                P::Point | P::Circle => &[KeyPoint::Origin],
                P::Line => &[KeyPoint::Origin, KeyPoint::LineEnd],
                P::Arc => &[KeyPoint::Origin, KeyPoint::ArcStart, KeyPoint::ArcEnd],
            };
            let p = params(0);
            let dist = |k: &KeyPoint| {
                let q = key_point(*other, params(1), *k);
                (p[0] - q[0]).hypot(p[1] - q[1])
            };
            // Ties resolve to the earliest key point.
            let best = keys
                .iter()
                .copied()
                .fold((f64::INFINITY, KeyPoint::Origin), |acc, k| {
                    let d = dist(&k);
                    if d < acc.0 {
                        (d, k)
                    } else {
                        acc
                    }
                })
                .1;
            Branch::Key(best)
        }
        (K::Tangent, [a, b]) if a.is_round() && b.is_round() => {
            let (p, q) = (params(0), params(1));
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            let ext = d - (p[2] + q[2]);
            let int = d - (p[2] - q[2]).abs();
            if ext.abs() <= int.abs() {
                Branch::ExternalTangent
            } else {
                Branch::InternalTangent
            }
        }
        _ => Branch::None,
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates one constraint. `g` is row-major `rows x width`, pre-zeroed.
fn eval_local(item: &Compiled, p: &[f64], r: &mut [f64; 2], g: &mut [f64]) {
    let w = item.width;
    match item.kind {
        K::Coincident => {
            let other = item.ops[1];
            let key = match item.branch {
                Branch::Key(k) => k,
                _ => KeyPoint::Origin,
            };
            let q = &p[2..];
            let k = key_point(other, q, key);
            r[0] = p[0] - k[0];
            r[1] = p[1] - k[1];
            g[0] = 1.0;
            g[w + 1] = 1.0;
            match (other, key) {
                (P::Line, KeyPoint::LineEnd) => {
                    g[2 + 2] = -1.0;
                    g[w + 2 + 3] = -1.0;
                }
                (P::Arc, KeyPoint::ArcStart | KeyPoint::ArcEnd) => {
                    let ti = if key == KeyPoint::ArcStart { 3 } else { 4 };
                    let (rad, th) = (q[2], q[ti]);
                    g[2] = -1.0;
                    g[2 + 2] = -th.cos();
                    g[2 + ti] = rad * th.sin();
                    g[w + 2 + 1] = -1.0;
                    g[w + 2 + 2] = -th.sin();
                    g[w + 2 + ti] = -rad * th.cos();
                }
                _ => {
                    g[2] = -1.0;
                    g[w + 2 + 1] = -1.0;
                }
            }
        }
        K::Horizontal | K::Vertical => {
            let axis = if item.kind == K::Horizontal { 1 } else { 0 };
            if item.ops[0] == P::Line {
                r[0] = p[2 + axis] - p[axis];
                g[2 + axis] = 1.0;
                g[axis] = -1.0;
            } else {
                r[0] = p[axis] - p[2 + axis];
                g[axis] = 1.0;
                g[2 + axis] = -1.0;
            }
        }
        K::Parallel | K::Perpendicular => {
            let d1 = [p[2] - p[0], p[3] - p[1]];
            let d2 = [p[6] - p[4], p[7] - p[5]];
            // Gradient with respect to (d1x, d1y, d2x, d2y).
            let gd = if item.kind == K::Parallel {
                r[0] = d1[0] * d2[1] - d1[1] * d2[0];
                [d2[1], -d2[0], -d1[1], d1[0]]
            } else {
                r[0] = d1[0] * d2[0] + d1[1] * d2[1];
                [d2[0], d2[1], d1[0], d1[1]]
            };
            scatter_dirs(g, 0, &gd);
        }
        K::Tangent if item.ops[0] == P::Line => {
            let (ax, ay, bx, by) = (p[0], p[1], p[2], p[3]);
            let (cx, cy, rad) = (p[4], p[5], p[6]);
            let (ux, uy) = (bx - ax, by - ay);
            let (wx, wy) = (cx - ax, cy - ay);
            let cr = ux * wy - uy * wx;
            let len = ux.hypot(uy);
            let s = sign(cr);
            r[0] = cr.abs() / len - rad;
            let l3 = len * len * len;
            let du = [s * wy / len - cr.abs() * ux / l3, -s * wx / len - cr.abs() * uy / l3];
            let dw = [-s * uy / len, s * ux / len];
            g[0] = -du[0] - dw[0];
            g[1] = -du[1] - dw[1];
            g[2] = du[0];
            g[3] = du[1];
            g[4] = dw[0];
            g[5] = dw[1];
            g[6] = -1.0;
        }
        K::Tangent => {
            let o = item.ops[0].param_count();
            let (dx, dy) = (p[0] - p[o], p[1] - p[o + 1]);
            let d = dx.hypot(dy);
            let (ux, uy) = if d > 0.0 { (dx / d, dy / d) } else { (0.0, 0.0) };
            g[0] = ux;
            g[1] = uy;
            g[o] = -ux;
            g[o + 1] = -uy;
            let (r1, r2) = (p[2], p[o + 2]);
            if item.branch == Branch::InternalTangent {
                r[0] = d - (r1 - r2).abs();
                let s = sign(r1 - r2);
                g[2] = -s;
                g[o + 2] = s;
            } else {
                r[0] = d - (r1 + r2);
                g[2] = -1.0;
                g[o + 2] = -1.0;
            }
        }
        K::Midpoint => {
            r[0] = p[0] - 0.5 * (p[2] + p[4]);
            r[1] = p[1] - 0.5 * (p[3] + p[5]);
            g[0] = 1.0;
            g[2] = -0.5;
            g[4] = -0.5;
            g[w + 1] = 1.0;
            g[w + 3] = -0.5;
            g[w + 5] = -0.5;
        }
        K::Equal if item.ops[0] == P::Line => {
            let d1 = [p[2] - p[0], p[3] - p[1]];
            let d2 = [p[6] - p[4], p[7] - p[5]];
            let (l1, l2) = (d1[0].hypot(d1[1]), d2[0].hypot(d2[1]));
            r[0] = l1 - l2;
            let gd = [d1[0] / l1, d1[1] / l1, -d2[0] / l2, -d2[1] / l2];
            scatter_dirs(g, 0, &gd);
        }
        K::Equal => {
            let o = item.ops[0].param_count();
            r[0] = p[2] - p[o + 2];
            g[2] = 1.0;
            g[o + 2] = -1.0;
        }
        K::Concentric => {
            let o = item.ops[0].param_count();
            r[0] = p[0] - p[o];
            r[1] = p[1] - p[o + 1];
            g[0] = 1.0;
            g[o] = -1.0;
            g[w + 1] = 1.0;
            g[w + o + 1] = -1.0;
        }
        K::DistanceDim => {
            let (dx, dy) = (p[2] - p[0], p[3] - p[1]);
            let d = dx.hypot(dy);
            r[0] = d - item.value;
            if d > 0.0 {
                g[0] = -dx / d;
                g[1] = -dy / d;
                g[2] = dx / d;
                g[3] = dy / d;
            }
        }
        K::LengthDim => {
            let (dx, dy) = (p[2] - p[0], p[3] - p[1]);
            let d = dx.hypot(dy);
            r[0] = d - item.value;
            if d > 0.0 {
                g[0] = -dx / d;
                g[1] = -dy / d;
                g[2] = dx / d;
                g[3] = dy / d;
            }
        }
        K::RadiusDim => {
            r[0] = p[2] - item.value;
            g[2] = 1.0;
        }
        K::DiameterDim => {
            r[0] = 2.0 * p[2] - item.value;
            g[2] = 2.0;
        }
        K::AngleDim => {
            let d1 = [p[2] - p[0], p[3] - p[1]];
            let d2 = [p[6] - p[4], p[7] - p[5]];
            let cr = d1[0] * d2[1] - d1[1] * d2[0];
            let dt = d1[0] * d2[0] + d1[1] * d2[1];
            r[0] = cr.abs().atan2(dt) - item.value;
            let den = cr * cr + dt * dt;
            if den > 0.0 {
                let dcr = sign(cr) * dt / den;
                let ddt = -cr.abs() / den;
                let gd = [
                    dcr * d2[1] + ddt * d2[0],
                    -dcr * d2[0] + ddt * d2[1],
                    -dcr * d1[1] + ddt * d1[0],
                    dcr * d1[0] + ddt * d1[1],
                ];
                scatter_dirs(g, 0, &gd);
            }
        }
    }
}

/// Chains a gradient over two line directions (d = end - start) onto the
/// eight endpoint coordinates of row `row`.
fn scatter_dirs(g: &mut [f64], row: usize, gd: &[f64; 4]) {
    let base = row * 8;
    g[base] = -gd[0];
    g[base + 1] = -gd[1];
    g[base + 2] = gd[0];
    g[base + 3] = gd[1];
    g[base + 4] = -gd[2];
    g[base + 5] = -gd[3];
    g[base + 6] = gd[2];
    g[base + 7] = gd[3];
}
