use std::f64::consts::TAU;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Most primitives a sketch may carry.
pub const MAX_PRIMITIVES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Point,
    Line,
    Circle,
    Arc,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [
        PrimitiveKind::Point,
        PrimitiveKind::Line,
        PrimitiveKind::Circle,
        PrimitiveKind::Arc,
    ];

    /// Number of scalar parameters: Point (x, y), Line (x1, y1, x2, y2),
    /// Circle (cx, cy, r), Arc (cx, cy, r, theta_start, theta_end).
    pub fn param_count(self) -> usize {
        match self {
            PrimitiveKind::Point => 2,
            PrimitiveKind::Line => 4,
            PrimitiveKind::Circle => 3,
            PrimitiveKind::Arc => 5,
        }
    }

    pub fn is_curve(self) -> bool {
        !matches!(self, PrimitiveKind::Point)
    }

    pub fn is_round(self) -> bool {
        matches!(self, PrimitiveKind::Circle | PrimitiveKind::Arc)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Parameters a primitive contributes to the solver's variable vector.
pub fn dof_of_primitive(kind: PrimitiveKind) -> usize {
    kind.param_count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: usize,
    pub kind: PrimitiveKind,
    pub params: Vec<f64>,
    #[serde(default)]
    pub fixed: bool,
}

impl Primitive {
    pub fn point(id: usize, x: f64, y: f64) -> Self {
        Self { id, kind: PrimitiveKind::Point, params: vec![x, y], fixed: false }
    }

    pub fn line(id: usize, x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { id, kind: PrimitiveKind::Line, params: vec![x1, y1, x2, y2], fixed: false }
    }

    pub fn circle(id: usize, cx: f64, cy: f64, r: f64) -> Self {
        Self { id, kind: PrimitiveKind::Circle, params: vec![cx, cy, r], fixed: false }
    }

    pub fn arc(id: usize, cx: f64, cy: f64, r: f64, start: f64, end: f64) -> Self {
        Self { id, kind: PrimitiveKind::Arc, params: vec![cx, cy, r, start, end], fixed: false }
    }

    pub fn fixed(mut self) -> Self {
        self.fixed = true;
        self
    }

    /// Variables this primitive contributes; fixed primitives contribute none.
    pub fn dof(&self) -> usize {
        if self.fixed {
            0
        } else {
            dof_of_primitive(self.kind)
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.params.len() != self.kind.param_count() {
            return Err(Error::InvalidSketch(format!(
                "primitive {} ({:?}) has {} params, expected {}",
                self.id,
                self.kind,
                self.params.len(),
                self.kind.param_count()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSketch(format!("primitive {} has non-finite params", self.id)));
        }
        match self.kind {
            PrimitiveKind::Line => {
                if self.params[0] == self.params[2] && self.params[1] == self.params[3] {
                    return Err(Error::DegeneratePrimitive { id: self.id, reason: "zero-length line" });
                }
            }
            PrimitiveKind::Circle | PrimitiveKind::Arc => {
                if self.params[2] <= 0.0 {
                    return Err(Error::DegeneratePrimitive { id: self.id, reason: "non-positive radius" });
                }
                if self.kind == PrimitiveKind::Arc && arc_sweep(self.params[3], self.params[4]) == 0.0 {
                    return Err(Error::DegeneratePrimitive { id: self.id, reason: "zero-sweep arc" });
                }
            }
            PrimitiveKind::Point => {}
        }
        Ok(())
    }

    /// Endpoints (line), center (circle), center and endpoints (arc), or the point itself.
    pub fn tracked_points(&self) -> Vec<[f64; 2]> {
        let p = &self.params;
        match self.kind {
            PrimitiveKind::Point => vec![[p[0], p[1]]],
            PrimitiveKind::Line => vec![[p[0], p[1]], [p[2], p[3]]],
            PrimitiveKind::Circle => vec![[p[0], p[1]]],
            PrimitiveKind::Arc => vec![
                [p[0], p[1]],
                [p[0] + p[2] * p[3].cos(), p[1] + p[2] * p[3].sin()],
                [p[0] + p[2] * p[4].cos(), p[1] + p[2] * p[4].sin()],
            ],
        }
    }

    /// Five points along the primitive's path.
    pub fn sample_points(&self) -> [[f64; 2]; 5] {
        let p = &self.params;
        let mut out = [[0.0; 2]; 5];
        for (k, slot) in out.iter_mut().enumerate() {
            let t = k as f64 / 4.0;
            *slot = match self.kind {
                PrimitiveKind::Point => [p[0], p[1]],
                PrimitiveKind::Line => [p[0] + t * (p[2] - p[0]), p[1] + t * (p[3] - p[1])],
                PrimitiveKind::Circle => {
                    let a = TAU * k as f64 / 5.0;
                    [p[0] + p[2] * a.cos(), p[1] + p[2] * a.sin()]
                }
                PrimitiveKind::Arc => {
                    let a = p[3] + t * arc_sweep(p[3], p[4]);
                    [p[0] + p[2] * a.cos(), p[1] + p[2] * a.sin()]
                }
            };
        }
        out
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let p = &self.params;
        match self.kind {
            PrimitiveKind::Point => ([p[0], p[1]], [p[0], p[1]]),
            PrimitiveKind::Line => ([p[0].min(p[2]), p[1].min(p[3])], [p[0].max(p[2]), p[1].max(p[3])]),
            PrimitiveKind::Circle | PrimitiveKind::Arc => {
                ([p[0] - p[2], p[1] - p[2]], [p[0] + p[2], p[1] + p[2]])
            }
        }
    }
}

/// Counter-clockwise sweep from `start` to `end`, in [0, 2π).
pub fn arc_sweep(start: f64, end: f64) -> f64 {
    (end - start).rem_euclid(TAU)
}

/// Axis-aligned frame used for quantization and stability bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Canvas {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn unit() -> Self {
        Self { min: [0.0, 0.0], max: [1.0, 1.0] }
    }

    /// Square frame centered on the geometry's bounding box, side 1.2x the
    /// larger bounding-box extent (10% margin per side).
    pub fn around(primitives: &[Primitive]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in primitives {
            let (a, b) = p.bounds();
            for axis in 0..2 {
                lo[axis] = lo[axis].min(a[axis]);
                hi[axis] = hi[axis].max(b[axis]);
            }
        }
        if !lo[0].is_finite() {
            return Self::unit();
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let half = if extent > 0.0 { 0.6 * extent } else { 0.5 };
        let cx = 0.5 * (lo[0] + hi[0]);
        let cy = 0.5 * (lo[1] + hi[1]);
        Self { min: [cx - half, cy - half], max: [cx + half, cy + half] }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    /// floor(bins * (coord - min) / extent), clamped to [0, bins - 1].
    pub fn bin(&self, coord: f64, axis: usize, bins: usize) -> usize {
        let t = (coord - self.min[axis]) / self.extent(axis);
        let b = (bins as f64 * t).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(bins - 1)
        }
    }
}

/// Query geometry: primitives with dense ids and at least one fixed anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub primitives: Vec<Primitive>,
    pub canvas: Canvas,
}

impl Sketch {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        let canvas = Canvas::around(&primitives);
        Self::with_canvas(primitives, canvas)
    }

    pub fn with_canvas(primitives: Vec<Primitive>, canvas: Canvas) -> Result<Self> {
        if primitives.len() > MAX_PRIMITIVES {
            return Err(Error::TooManyPrimitives { count: primitives.len(), limit: MAX_PRIMITIVES });
        }
        for (i, p) in primitives.iter().enumerate() {
            if p.id != i {
                return Err(Error::InvalidSketch(format!("primitive ids must be dense, found {} at {}", p.id, i)));
            }
            p.check()?;
        }
        if !primitives.iter().any(|p| p.fixed) {
            return Err(Error::InvalidSketch("at least one primitive must be fixed".into()));
        }
        if !(canvas.extent(0) > 0.0 && canvas.extent(1) > 0.0) {
            return Err(Error::InvalidSketch("canvas must have positive extent".into()));
        }
        Ok(Self { primitives, canvas })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn kind(&self, id: usize) -> PrimitiveKind {
        self.primitives[id].kind
    }

    pub fn kinds(&self) -> Vec<PrimitiveKind> {
        self.primitives.iter().map(|p| p.kind).collect()
    }

    /// Same primitives and canvas with parameters replaced.
    pub fn with_params(&self, params: &[Vec<f64>]) -> Sketch {
        let mut out = self.clone();
        for (p, v) in out.primitives.iter_mut().zip(params) {
            p.params.clone_from(v);
        }
        out
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Sketch {
        let mut out = self.clone();
        for p in &mut out.primitives {
            p.params[0] += dx;
            p.params[1] += dy;
            if p.kind == PrimitiveKind::Line {
                p.params[2] += dx;
                p.params[3] += dy;
            }
        }
        for axis in 0..2 {
            let d = if axis == 0 { dx } else { dy };
            out.canvas.min[axis] += d;
            out.canvas.max[axis] += d;
        }
        out
    }
}

/// Maps primitive id to its slice of the packed variable vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIndex {
    slots: Vec<Option<Range<usize>>>,
    len: usize,
}

impl ParamIndex {
    pub fn of(sketch: &Sketch) -> Self {
        let mut slots = Vec::with_capacity(sketch.len());
        let mut at = 0;
        for p in &sketch.primitives {
            if p.fixed {
                slots.push(None);
            } else {
                let n = p.kind.param_count();
                slots.push(Some(at..at + n));
                at += n;
            }
        }
        Self { slots, len: at }
    }

    pub fn slice(&self, id: usize) -> Option<Range<usize>> {
        self.slots[id].clone()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn primitive_count(&self) -> usize {
        self.slots.len()
    }

    /// Primitive owning variable `col`.
    pub fn owner(&self, col: usize) -> Option<usize> {
        self.slots.iter().position(|s| s.as_ref().is_some_and(|r| r.contains(&col)))
    }
}

/// Concatenates the parameters of all non-fixed primitives.
pub fn pack_parameters(sketch: &Sketch) -> (Vec<f64>, ParamIndex) {
    let index = ParamIndex::of(sketch);
    let mut x = Vec::with_capacity(index.len());
    for p in sketch.primitives.iter().filter(|p| !p.fixed) {
        x.extend_from_slice(&p.params);
    }
    (x, index)
}

/// Inverse of [`pack_parameters`]: writes `x` back into a copy of `sketch`.
pub fn unpack_parameters(sketch: &Sketch, index: &ParamIndex, x: &[f64]) -> Sketch {
    let mut out = sketch.clone();
    for (id, p) in out.primitives.iter_mut().enumerate() {
        if let Some(r) = index.slice(id) {
            p.params.copy_from_slice(&x[r]);
        }
    }
    out
}
