//! Numerical constraint solving and sketch-state diagnosis.
//!
//! [`solve`] runs damped least squares from the input geometry, then reads
//! the sketch state off the Jacobian at the solution: row-rank deficiency
//! means redundant (over-constrained) equations, and the right nullspace
//! tells which primitives can still move.

mod rank;
mod residual;

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

pub use rank::{rank_analysis, RankAnalysis};
pub use residual::{jacobian, residuals, ConstraintSystem};

use crate::error::Result;
use crate::sketch::{unpack_parameters, ConstraintSequence, ParamIndex, PrimitiveKind, Sketch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Iteration budget; exhausting it marks the sketch not solvable.
    pub max_iterations: usize,
    /// Convergence threshold on the max-abs residual.
    pub residual_tol: f64,
    /// Relative singular-value cutoff.
    pub rank_tol: f64,
    /// Row-norm threshold for a primitive's nullspace components.
    pub nullspace_tol: f64,
    pub damping_init: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iterations: 200, residual_tol: 1e-8, rank_tol: 1e-7, nullspace_tol: 1e-6, damping_init: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    FullyConstrained,
    UnderConstrained,
    OverConstrained,
    NotSolvable,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::FullyConstrained, Category::UnderConstrained, Category::OverConstrained, Category::NotSolvable];

    pub fn short(self) -> &'static str {
        match self {
            Category::FullyConstrained => "FC",
            Category::UnderConstrained => "UC",
            Category::OverConstrained => "OC",
            Category::NotSolvable => "NS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchStatus {
    pub category: Category,
    /// Redundant equations, recorded even when another category wins.
    pub oc_flag: bool,
    pub stable: bool,
    pub per_entity_fc: BTreeMap<usize, bool>,
    pub fc_curve_fraction: f64,
    pub fc_point_fraction: f64,
}

impl SketchStatus {
    pub fn solvable(&self) -> bool {
        self.category != Category::NotSolvable
    }

    /// Fully constrained, not over-constrained, solvable (stability not considered).
    pub fn is_fc_clean(&self) -> bool {
        self.category == Category::FullyConstrained && !self.oc_flag
    }

    /// Fully constrained, not over-constrained, solvable and stable.
    pub fn is_success(&self) -> bool {
        self.is_fc_clean() && self.stable
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SketchStatus,
    pub solved_sketch: Option<Sketch>,
    pub iterations: usize,
    /// Max-abs residual at the final iterate.
    pub final_residual_norm: f64,
    pub rank_analysis: Option<RankAnalysis>,
}

/// Serialized form written by the `solve` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReportJson {
    pub category: Category,
    pub oc_flag: bool,
    pub stable: bool,
    pub fc_curve_fraction: f64,
    pub fc_point_fraction: f64,
    pub per_entity_fc: BTreeMap<usize, bool>,
    pub iterations: usize,
    pub final_residual_norm: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> SolveReportJson {
        SolveReportJson {
            category: self.status.category,
            oc_flag: self.status.oc_flag,
            stable: self.status.stable,
            fc_curve_fraction: self.status.fc_curve_fraction,
            fc_point_fraction: self.status.fc_point_fraction,
            per_entity_fc: self.status.per_entity_fc.clone(),
            iterations: self.iterations,
            final_residual_norm: self.final_residual_norm,
        }
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct Descent {
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// Levenberg-Marquardt with Nielsen's damping update.
fn descend(system: &ConstraintSystem, opts: &SolveOptions) -> Descent {
    let mut x = system.initial_point();
    let (mut r, mut jac) = system.evaluate(&x, true);
    let mut residual = max_abs(&r);
    if residual <= opts.residual_tol {
        return Descent { x, iterations: 0, residual, converged: true };
    }
    let n = x.len();
    if n == 0 {
        return Descent { x, iterations: 0, residual, converged: false };
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut jtj = jac.tr_mul(&jac);
    let mut grad = jac.tr_mul(&r);
    let scale = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(1e-12);
    let mut mu = opts.damping_init * scale;
    let mut nu = 2.0;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut a = jtj.clone();
        for i in 0..n {
            a[(i, i)] += mu;
        }
        let Some(chol) = Cholesky::new(a) else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let step = chol.solve(&(-&grad));
        let step_norm = step.norm();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm <= 1e-15 * (x_norm + 1e-15) || mu > 1e20 * scale {
            break;
        }
        let candidate: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let (r_new, j_new) = system.evaluate(&candidate, true);
        let cost_new = 0.5 * r_new.norm_squared();
        let predicted = 0.5 * step.dot(&(mu * &step - &grad));
        let rho = if predicted > 0.0 { (cost - cost_new) / predicted } else { -1.0 };
        if rho > 0.0 && cost_new.is_finite() {
            x = candidate;
            r = r_new;
            jac = j_new;
            cost = cost_new;
            jtj = jac.tr_mul(&jac);
            grad = jac.tr_mul(&r);
            residual = max_abs(&r);
            mu *= (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            if residual <= opts.residual_tol {
                return Descent { x, iterations, residual, converged: true };
            }
        } else {
            mu *= nu;
            nu *= 2.0;
        }
    }
    Descent { x, iterations, residual, converged: false }
}

/// Per-primitive fully-constrained flags plus curve and point fractions.
///
/// A free primitive is fully constrained iff every nullspace row in its
/// parameter slice has norm at most `nullspace_tol`; fixed primitives are
/// fully constrained by definition. An empty class counts as fraction 1.
pub fn entity_fc_status(
    analysis: &RankAnalysis,
    index: &ParamIndex,
    kinds: &[PrimitiveKind],
    nullspace_tol: f64,
) -> (BTreeMap<usize, bool>, f64, f64) {
    let basis = &analysis.nullspace_basis;
    let mut map = BTreeMap::new();
    for (id, _) in kinds.iter().enumerate() {
        let fc = match index.slice(id) {
            None => true,
            Some(range) => range.into_iter().all(|row| {
                let norm_sq: f64 = (0..basis.ncols()).map(|c| basis[(row, c)].powi(2)).sum();
                norm_sq.sqrt() <= nullspace_tol
            }),
        };
        map.insert(id, fc);
    }
    let fraction = |curves: bool| {
        let ids: Vec<usize> = (0..kinds.len()).filter(|&i| kinds[i].is_curve() == curves).collect();
        if ids.is_empty() {
            1.0
        } else {
            ids.iter().filter(|i| map[i]).count() as f64 / ids.len() as f64
        }
    };
    let (c, p) = (fraction(true), fraction(false));
    (map, c, p)
}

/// Table-1 category with precedence NS > OC > FC > UC.
pub fn classify(converged: bool, analysis: &RankAnalysis) -> Category {
    if !converged {
        Category::NotSolvable
    } else if analysis.redundant {
        Category::OverConstrained
    } else if analysis.nullity() == 0 {
        Category::FullyConstrained
    } else {
        Category::UnderConstrained
    }
}

/// True iff every tracked point stays in its cell of a `bins x bins` grid
/// over `before`'s canvas.
pub fn stability_check(before: &Sketch, after: &Sketch, bins: usize) -> bool {
    let canvas = before.canvas;
    before.primitives.iter().zip(&after.primitives).all(|(a, b)| {
        a.tracked_points().iter().zip(b.tracked_points()).all(|(p, q)| {
            (0..2).all(|axis| canvas.bin(p[axis], axis, bins) == canvas.bin(q[axis], axis, bins))
        })
    })
}

/// Stability grid used when a report is produced.
pub const DEFAULT_STABILITY_BINS: usize = 4;

/// Solves `constraints` starting from the sketch geometry and diagnoses the result.
pub fn solve(sketch: &Sketch, constraints: &ConstraintSequence, opts: &SolveOptions) -> Result<SolveReport> {
    solve_with_bins(sketch, constraints, opts, DEFAULT_STABILITY_BINS)
}

pub fn solve_with_bins(
    sketch: &Sketch,
    constraints: &ConstraintSequence,
    opts: &SolveOptions,
    bins: usize,
) -> Result<SolveReport> {
    let system = ConstraintSystem::new(sketch, constraints)?;
    Ok(solve_system(&system, opts, bins))
}

pub fn solve_system(system: &ConstraintSystem, opts: &SolveOptions, bins: usize) -> SolveReport {
    let sketch = system.sketch();
    let descent = descend(system, opts);
    let jac = system.jacobian(&descent.x);
    let analysis = rank_analysis(&jac, opts.rank_tol);
    let category = classify(descent.converged, &analysis);
    if !descent.converged {
        return SolveReport {
            status: SketchStatus {
                category,
                oc_flag: analysis.redundant,
                stable: false,
                per_entity_fc: BTreeMap::new(),
                fc_curve_fraction: 0.0,
                fc_point_fraction: 0.0,
            },
            solved_sketch: None,
            iterations: descent.iterations,
            final_residual_norm: descent.residual,
            rank_analysis: None,
        };
    }
    let solved = unpack_parameters(sketch, system.index(), &descent.x);
    let (per_entity_fc, fc_curve_fraction, fc_point_fraction) =
        entity_fc_status(&analysis, system.index(), &sketch.kinds(), opts.nullspace_tol);
    let stable = stability_check(sketch, &solved, bins);
    SolveReport {
        status: SketchStatus {
            category,
            oc_flag: analysis.redundant,
            stable,
            per_entity_fc,
            fc_curve_fraction,
            fc_point_fraction,
        },
        solved_sketch: Some(solved),
        iterations: descent.iterations,
        final_residual_norm: descent.residual,
        rank_analysis: Some(analysis),
    }
}

/// Adds items one at a time, dropping any that make the kept set not
/// solvable or redundant. Returns the kept sequence and the dropped indices.
pub fn incremental_apply(
    sketch: &Sketch,
    seq: &ConstraintSequence,
    opts: &SolveOptions,
) -> (ConstraintSequence, Vec<usize>) {
    let mut kept: Vec<usize> = Vec::new();
    let mut problematic = Vec::new();
    for i in 0..seq.len() {
        kept.push(i);
        let ok = match ConstraintSystem::new(sketch, &seq.subset(&kept)) {
            Ok(system) => {
                let report = solve_system(&system, opts, DEFAULT_STABILITY_BINS);
                report.status.solvable() && !report.status.oc_flag
            }
            Err(_) => false,
        };
        if !ok {
            kept.pop();
            problematic.push(i);
        }
    }
    (seq.subset(&kept), problematic)
}
