use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sketch::{
    measure_dimension, ConstraintInstance, ConstraintKind as K, ConstraintSequence, Primitive, Sketch,
};

/// Shape families of the synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Rectangle,
    LShape,
    Slot,
    Triangle,
    ConcentricCircles,
    Polyline,
    LineArcChain,
}

impl Template {
    pub const ALL: [Template; 7] = [
        Template::Rectangle,
        Template::LShape,
        Template::Slot,
        Template::Triangle,
        Template::ConcentricCircles,
        Template::Polyline,
        Template::LineArcChain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Rectangle => "rectangle",
            Template::LShape => "l_shape",
            Template::Slot => "slot",
            Template::Triangle => "triangle",
            Template::ConcentricCircles => "concentric_circles",
            Template::Polyline => "polyline",
            Template::LineArcChain => "line_arc_chain",
        }
    }

    pub fn from_name(name: &str) -> Option<Template> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Smallest and largest primitive count the template produces.
    pub fn primitive_range(self) -> (usize, usize) {
        match self {
            Template::Rectangle => (8, 8),
            Template::LShape => (12, 12),
            Template::Slot => (10, 10),
            Template::Triangle => (6, 6),
            Template::ConcentricCircles => (3, 5),
            Template::Polyline => (8, 8),
            Template::LineArcChain => (6, 6),
        }
    }
}

struct Recipe {
    prims: Vec<Primitive>,
    items: Vec<ConstraintInstance>,
}

impl Recipe {
    fn new() -> Self {
        Self { prims: Vec::new(), items: Vec::new() }
    }

    fn point(&mut self, x: f64, y: f64) -> usize {
        let id = self.prims.len();
        self.prims.push(Primitive::point(id, x, y));
        id
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2]) -> usize {
        let id = self.prims.len();
        self.prims.push(Primitive::line(id, a[0], a[1], b[0], b[1]));
        id
    }

    fn circle(&mut self, c: [f64; 2], r: f64) -> usize {
        let id = self.prims.len();
        self.prims.push(Primitive::circle(id, c[0], c[1], r));
        id
    }

    fn arc(&mut self, c: [f64; 2], r: f64, start: f64, end: f64) -> usize {
        let id = self.prims.len();
        self.prims.push(Primitive::arc(id, c[0], c[1], r, start, end));
        id
    }

    fn add(&mut self, kind: crate::sketch::ConstraintKind, refs: &[usize]) {
        self.items.push(ConstraintInstance::new(kind, refs.to_vec()));
    }

    /// Two-point chain: `a -> b` line with both ends pinned to the points.
    fn edge(&mut self, pts: &[[f64; 2]], a: usize, b: usize, ids: &[usize]) -> usize {
        let l = self.line(pts[a], pts[b]);
        self.add(K::Coincident, &[ids[a], l]);
        self.add(K::Coincident, &[ids[b], l]);
        l
    }

    fn finish(mut self) -> (Sketch, ConstraintSequence) {
        self.prims[0].fixed = true;
        let sketch = Sketch::new(self.prims).expect("templates build valid sketches");
        for c in &mut self.items {
            if c.kind.is_dimension() {
                c.value = Some(measure_dimension(&sketch, c).expect("recipe dimensions are legal"));
            }
        }
        let seq = ConstraintSequence::new(self.items).expect("recipes stay within the item limit");
        (sketch, seq)
    }
}

fn anchor(rng: &mut impl Rng) -> [f64; 2] {
    [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]
}

fn points(r: &mut Recipe, pts: &[[f64; 2]]) -> Vec<usize> {
    pts.iter().map(|p| r.point(p[0], p[1])).collect()
}

fn rectangle(rng: &mut impl Rng) -> Recipe {
    let [x, y] = anchor(rng);
    let (w, h) = (rng.gen_range(1.0..4.0), rng.gen_range(1.0..4.0));
    let pts = [[x, y], [x + w, y], [x + w, y + h], [x, y + h]];
    let mut r = Recipe::new();
    let ids = points(&mut r, &pts);
    let lines: Vec<usize> = (0..4).map(|i| r.edge(&pts, i, (i + 1) % 4, &ids)).collect();
    r.add(K::Horizontal, &[lines[0]]);
    r.add(K::Vertical, &[lines[1]]);
    r.add(K::Horizontal, &[lines[2]]);
    r.add(K::Vertical, &[lines[3]]);
    r.add(K::LengthDim, &[lines[0]]);
    r.add(K::LengthDim, &[lines[1]]);
    r
}

fn l_shape(rng: &mut impl Rng) -> Recipe {
    let [x, y] = anchor(rng);
    let (w, h) = (rng.gen_range(2.0..4.0), rng.gen_range(2.0..4.0));
    let (w1, h1) = (rng.gen_range(0.5..w - 0.5), rng.gen_range(0.5..h - 0.5));
    let pts = [[x, y], [x + w, y], [x + w, y + h1], [x + w1, y + h1], [x + w1, y + h], [x, y + h]];
    let mut r = Recipe::new();
    let ids = points(&mut r, &pts);
    let lines: Vec<usize> = (0..6).map(|i| r.edge(&pts, i, (i + 1) % 6, &ids)).collect();
    for (i, &l) in lines.iter().enumerate() {
        r.add(if i % 2 == 0 { K::Horizontal } else { K::Vertical }, &[l]);
    }
    for i in [0, 1, 2, 5] {
        r.add(K::LengthDim, &[lines[i]]);
    }
    r
}

fn slot(rng: &mut impl Rng) -> Recipe {
    let c1 = anchor(rng);
    let rad = rng.gen_range(0.4..1.2);
    let len = rng.gen_range(1.0..3.0);
    let c2 = [c1[0] + len, c1[1]];
    let mut r = Recipe::new();
    let p0 = r.point(c1[0], c1[1]);
    let a1 = r.arc(c1, rad, FRAC_PI_2, 3.0 * FRAC_PI_2);
    let a2 = r.arc(c2, rad, 3.0 * FRAC_PI_2, FRAC_PI_2);
    let top = r.line([c1[0], c1[1] + rad], [c2[0], c2[1] + rad]);
    let bottom = r.line([c1[0], c1[1] - rad], [c2[0], c2[1] - rad]);
    let q1 = r.point(c1[0], c1[1] + rad);
    let q2 = r.point(c1[0], c1[1] - rad);
    let q3 = r.point(c2[0], c2[1] - rad);
    let q4 = r.point(c2[0], c2[1] + rad);
    let p1 = r.point(c2[0], c2[1]);
    r.add(K::Coincident, &[p0, a1]);
    r.add(K::Coincident, &[p1, a2]);
    for (q, a, l) in [(q1, a1, top), (q2, a1, bottom), (q3, a2, bottom), (q4, a2, top)] {
        r.add(K::Coincident, &[q, a]);
        r.add(K::Coincident, &[q, l]);
    }
    for (c, q) in [(p0, q1), (p0, q2), (p1, q3), (p1, q4)] {
        r.add(K::Vertical, &[c, q]);
    }
    r.add(K::Horizontal, &[p0, p1]);
    r.add(K::RadiusDim, &[a1]);
    r.add(K::Equal, &[a1, a2]);
    r.add(K::DistanceDim, &[p0, p1]);
    r
}

fn triangle(rng: &mut impl Rng) -> Recipe {
    let [x, y] = anchor(rng);
    let b = rng.gen_range(1.5..4.0);
    let c = rng.gen_range(1.0..3.5);
    let theta = rng.gen_range(35f64..120.0).to_radians();
    let pts = [[x, y], [x + b, y], [x + c * theta.cos(), y + c * theta.sin()]];
    let mut r = Recipe::new();
    let ids = points(&mut r, &pts);
    let lines: Vec<usize> = (0..3).map(|i| r.edge(&pts, i, (i + 1) % 3, &ids)).collect();
    r.add(K::Horizontal, &[lines[0]]);
    r.add(K::LengthDim, &[lines[0]]);
    r.add(K::LengthDim, &[lines[2]]);
    r.add(K::AngleDim, &[lines[0], lines[2]]);
    r
}

fn concentric(rng: &mut impl Rng) -> Recipe {
    let c = anchor(rng);
    let r1 = rng.gen_range(0.5..1.5);
    let r2 = r1 + rng.gen_range(0.3..1.5);
    let mut r = Recipe::new();
    let p0 = r.point(c[0], c[1]);
    let k1 = r.circle(c, r1);
    let k2 = r.circle(c, r2);
    r.add(K::Coincident, &[p0, k1]);
    r.add(K::Concentric, &[k1, k2]);
    r.add(K::RadiusDim, &[k1]);
    r.add(K::DiameterDim, &[k2]);
    match rng.gen_range(0..3) {
        0 => {}
        1 => {
            let k3 = r.circle(c, r2 + rng.gen_range(0.3..1.0));
            r.add(K::Concentric, &[k2, k3]);
            r.add(K::RadiusDim, &[k3]);
        }
        _ => {
            let r3 = rng.gen_range(0.3..1.0);
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let qc = [c[0] + side * (r2 + r3), c[1]];
            let q = r.point(qc[0], qc[1]);
            let k3 = r.circle(qc, r3);
            r.add(K::Coincident, &[q, k3]);
            r.add(K::Horizontal, &[p0, q]);
            r.add(K::Tangent, &[k2, k3]);
            r.add(K::RadiusDim, &[k3]);
        }
    }
    r
}

fn polyline(rng: &mut impl Rng) -> Recipe {
    let [x, y] = anchor(rng);
    let a = rng.gen_range(1.0..3.5);
    let b = rng.gen_range(1.0..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let pts = [[x, y], [x + a, y], [x + a, y + b], [x + a + s * a, y + b]];
    let mut r = Recipe::new();
    let ids = points(&mut r, &pts);
    let ab = r.edge(&pts, 0, 1, &ids);
    let bc = r.edge(&pts, 1, 2, &ids);
    let cd = r.edge(&pts, 2, 3, &ids);
    let m = r.point(x + a, y + 0.5 * b);
    r.add(K::Midpoint, &[m, bc]);
    r.add(K::Horizontal, &[ab]);
    r.add(K::LengthDim, &[ab]);
    r.add(K::Perpendicular, &[ab, bc]);
    r.add(K::LengthDim, &[bc]);
    r.add(K::Parallel, &[cd, ab]);
    r.add(K::Equal, &[cd, ab]);
    r
}

fn line_arc_chain(rng: &mut impl Rng) -> Recipe {
    let [x, y] = anchor(rng);
    let len = rng.gen_range(1.0..3.0);
    let rad = rng.gen_range(0.5..1.5);
    let sweep = rng.gen_range(40f64..150.0).to_radians();
    let p1 = [x + len, y];
    let (center, start, end) = if rng.gen_bool(0.5) {
        ([p1[0], p1[1] + rad], -FRAC_PI_2, -FRAC_PI_2 + sweep)
    } else {
        ([p1[0], p1[1] - rad], FRAC_PI_2 - sweep, FRAC_PI_2)
    };
    let far = if start == -FRAC_PI_2 { end } else { start };
    let p2 = [center[0] + rad * far.cos(), center[1] + rad * far.sin()];
    let mut r = Recipe::new();
    let a = r.point(x, y);
    let l = r.line([x, y], p1);
    let arc = r.arc(center, rad, start.rem_euclid(2.0 * PI), end.rem_euclid(2.0 * PI));
    let b = r.point(p1[0], p1[1]);
    let c = r.point(p2[0], p2[1]);
    let o = r.point(center[0], center[1]);
    r.add(K::Coincident, &[a, l]);
    r.add(K::Coincident, &[b, l]);
    r.add(K::Coincident, &[b, arc]);
    r.add(K::Coincident, &[c, arc]);
    r.add(K::Coincident, &[o, arc]);
    r.add(K::Horizontal, &[l]);
    r.add(K::LengthDim, &[l]);
    // The center straight above or below the junction makes the arc tangent.
    r.add(K::Vertical, &[b, o]);
    r.add(K::RadiusDim, &[arc]);
    r.add(K::DistanceDim, &[b, c]);
    r
}

/// A random instance of `template` with its fully constrained recipe.
///
/// Exactly one point (primitive 0) is fixed; dimension values are measured
/// from the generated geometry, so the recipe is satisfied exactly.
pub fn generate_sketch(template: Template, rng: &mut impl Rng) -> (Sketch, ConstraintSequence) {
    let recipe = match template {
        Template::Rectangle => rectangle(rng),
        Template::LShape => l_shape(rng),
        Template::Slot => slot(rng),
        Template::Triangle => triangle(rng),
        Template::ConcentricCircles => concentric(rng),
        Template::Polyline => polyline(rng),
        Template::LineArcChain => line_arc_chain(rng),
    };
    recipe.finish()
}
