use serde::{Deserialize, Serialize};

use super::primitive::{PrimitiveKind, Sketch};
use crate::error::{Error, Result};

/// Longest constraint sequence the policy may emit.
pub const MAX_CONSTRAINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Coincident,
    Horizontal,
    Vertical,
    Parallel,
    Perpendicular,
    Tangent,
    Midpoint,
    Equal,
    Concentric,
    DistanceDim,
    LengthDim,
    RadiusDim,
    DiameterDim,
    AngleDim,
}

use ConstraintKind as K;
use PrimitiveKind as P;

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 14] = [
        K::Coincident,
        K::Horizontal,
        K::Vertical,
        K::Parallel,
        K::Perpendicular,
        K::Tangent,
        K::Midpoint,
        K::Equal,
        K::Concentric,
        K::DistanceDim,
        K::LengthDim,
        K::RadiusDim,
        K::DiameterDim,
        K::AngleDim,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_dimension(self) -> bool {
        matches!(self, K::DistanceDim | K::LengthDim | K::RadiusDim | K::DiameterDim | K::AngleDim)
    }

    /// Short mnemonic used in token names.
    pub fn mnemonic(self) -> &'static str {
        match self {
            K::Coincident => "COI",
            K::Horizontal => "HOR",
            K::Vertical => "VER",
            K::Parallel => "PAR",
            K::Perpendicular => "PER",
            K::Tangent => "TAN",
            K::Midpoint => "MID",
            K::Equal => "EQU",
            K::Concentric => "CON",
            K::DistanceDim => "DIST",
            K::LengthDim => "LEN",
            K::RadiusDim => "RAD",
            K::DiameterDim => "DIA",
            K::AngleDim => "ANG",
        }
    }

    /// Operand order does not matter for these kinds.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, K::Tangent | K::Midpoint)
    }

    pub fn max_arity(self) -> usize {
        match self {
            K::LengthDim | K::RadiusDim | K::DiameterDim => 1,
            _ => 2,
        }
    }

    /// Reference count once the first operand's kind is known. Horizontal and
    /// Vertical take one line or two points; every other kind has fixed arity.
    pub fn arity_given(self, first: PrimitiveKind) -> usize {
        match self {
            K::Horizontal | K::Vertical if first == P::Line => 1,
            _ => self.max_arity(),
        }
    }
}

/// Whether `kind` may be applied to operands of the given kinds.
pub fn is_legal(kind: ConstraintKind, ops: &[PrimitiveKind]) -> bool {
    let round = |k: PrimitiveKind| k.is_round();
    match (kind, ops) {
        (K::Coincident, [P::Point, _]) => true,
        (K::Horizontal | K::Vertical, [P::Line]) => true,
        (K::Horizontal | K::Vertical, [P::Point, P::Point]) => true,
        (K::Parallel | K::Perpendicular | K::AngleDim, [P::Line, P::Line]) => true,
        (K::Tangent, [P::Line, b]) => round(*b),
        (K::Tangent | K::Concentric, [a, b]) => round(*a) && round(*b),
        (K::Midpoint, [P::Point, P::Line]) => true,
        (K::Equal, [P::Line, P::Line]) => true,
        (K::Equal, [a, b]) => round(*a) && round(*b),
        (K::DistanceDim, [P::Point, P::Point]) => true,
        (K::LengthDim, [P::Line]) => true,
        (K::RadiusDim | K::DiameterDim, [a]) => round(*a),
        _ => false,
    }
}

/// Number of scalar residual equations contributed by `kind` on `ops`.
pub fn residual_arity(kind: ConstraintKind, ops: &[PrimitiveKind]) -> Result<usize> {
    if !is_legal(kind, ops) {
        return Err(Error::IllegalOperandKinds { kind, operands: ops.to_vec() });
    }
    Ok(match kind {
        K::Coincident | K::Midpoint | K::Concentric => 2,
        _ => 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintInstance {
    pub kind: ConstraintKind,
    pub refs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl ConstraintInstance {
    pub fn new(kind: ConstraintKind, refs: Vec<usize>) -> Self {
        Self { kind, refs, value: None }
    }

    pub fn dim(kind: ConstraintKind, refs: Vec<usize>, value: f64) -> Self {
        Self { kind, refs, value: Some(value) }
    }

    /// Identity for set comparisons: value dropped, refs sorted for symmetric kinds.
    pub fn canonical_key(&self) -> (ConstraintKind, Vec<usize>) {
        let mut refs = self.refs.clone();
        if self.kind.is_symmetric() {
            refs.sort_unstable();
        }
        (self.kind, refs)
    }
}

/// Ordered constraints and dimensions, at most [`MAX_CONSTRAINTS`] items.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintSequence {
    pub items: Vec<ConstraintInstance>,
}

impl ConstraintSequence {
    pub fn new(items: Vec<ConstraintInstance>) -> Result<Self> {
        if items.len() > MAX_CONSTRAINTS {
            return Err(Error::TooManyConstraints { count: items.len(), limit: MAX_CONSTRAINTS });
        }
        Ok(Self { items })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ConstraintInstance> {
        self.items.iter()
    }

    pub fn subset(&self, keep: &[usize]) -> Self {
        Self { items: keep.iter().map(|&i| self.items[i].clone()).collect() }
    }

    pub fn dimension_count(&self) -> usize {
        self.items.iter().filter(|c| c.kind.is_dimension()).count()
    }
}

impl FromIterator<ConstraintInstance> for ConstraintSequence {
    fn from_iter<I: IntoIterator<Item = ConstraintInstance>>(iter: I) -> Self {
        Self { items: iter.into_iter().collect() }
    }
}

fn operand_kinds(sketch: &Sketch, c: &ConstraintInstance) -> Result<Vec<PrimitiveKind>> {
    c.refs
        .iter()
        .map(|&r| {
            if r < sketch.len() {
                Ok(sketch.kind(r))
            } else {
                Err(Error::RefOutOfRange { reference: r, count: sketch.len() })
            }
        })
        .collect()
}

/// Checks arity, reference range, operand legality and value presence.
pub fn validate_constraint(sketch: &Sketch, c: &ConstraintInstance) -> Result<()> {
    let expected = match c.refs.first() {
        Some(&r) if r < sketch.len() => c.kind.arity_given(sketch.kind(r)),
        _ => c.kind.max_arity(),
    };
    if c.refs.len() != expected {
        return Err(Error::BadArity { kind: c.kind, expected, got: c.refs.len() });
    }
    let ops = operand_kinds(sketch, c)?;
    if !is_legal(c.kind, &ops) {
        return Err(Error::IllegalOperandKinds { kind: c.kind, operands: ops });
    }
    match (c.kind.is_dimension(), c.value) {
        (true, Some(v)) if v.is_finite() => {}
        (false, None) => {}
        _ => return Err(Error::MissingValue { kind: c.kind }),
    }
    for &r in &c.refs {
        sketch.primitives[r].check()?;
    }
    Ok(())
}

pub fn validate_sequence(sketch: &Sketch, seq: &ConstraintSequence) -> Result<()> {
    if seq.len() > MAX_CONSTRAINTS {
        return Err(Error::TooManyConstraints { count: seq.len(), limit: MAX_CONSTRAINTS });
    }
    seq.iter().try_for_each(|c| validate_constraint(sketch, c))
}

fn line_dir(p: &[f64]) -> [f64; 2] {
    [p[2] - p[0], p[3] - p[1]]
}

/// Angle in [0, π] between two direction vectors.
pub fn angle_between(d1: [f64; 2], d2: [f64; 2]) -> f64 {
    let cross = d1[0] * d2[1] - d1[1] * d2[0];
    let dot = d1[0] * d2[0] + d1[1] * d2[1];
    cross.abs().atan2(dot)
}

/// Current value of the quantity a dimension locks.
pub fn measure_dimension(sketch: &Sketch, dim: &ConstraintInstance) -> Result<f64> {
    let ops = operand_kinds(sketch, dim)?;
    if !dim.kind.is_dimension() || !is_legal(dim.kind, &ops) {
        return Err(Error::IllegalOperandKinds { kind: dim.kind, operands: ops });
    }
    let param = |i: usize| &sketch.primitives[dim.refs[i]].params;
    Ok(match dim.kind {
        K::DistanceDim => {
            let (a, b) = (param(0), param(1));
            (b[0] - a[0]).hypot(b[1] - a[1])
        }
        K::LengthDim => {
            let d = line_dir(param(0));
            d[0].hypot(d[1])
        }
        K::RadiusDim => param(0)[2],
        K::DiameterDim => 2.0 * param(0)[2],
        K::AngleDim => angle_between(line_dir(param(0)), line_dir(param(1))),
        _ => unreachable!("checked is_dimension"),
    })
}
