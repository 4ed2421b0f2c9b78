#![allow(dead_code)]

pub mod gradients;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketch_align::datagen::{generate_sketch, Template};
use sketch_align::sketch::{
    is_legal, measure_dimension, ConstraintInstance, ConstraintKind as K, ConstraintSequence, Primitive, Sketch,
};
use sketch_align::solver::Category;

/// A solver fixture with its hand-derived verdict. `dof` is the nullspace
/// dimension counted as free parameters minus independent equations; it is
/// `None` when the system has no solution.
pub struct Fixture {
    pub name: &'static str,
    pub sketch: Sketch,
    pub constraints: ConstraintSequence,
    pub category: Category,
    pub dof: Option<usize>,
}

fn c(kind: K, refs: &[usize]) -> ConstraintInstance {
    ConstraintInstance::new(kind, refs.to_vec())
}

fn d(kind: K, refs: &[usize], v: f64) -> ConstraintInstance {
    ConstraintInstance::dim(kind, refs.to_vec(), v)
}

fn fx(name: &'static str, prims: Vec<Primitive>, items: Vec<ConstraintInstance>, category: Category, dof: Option<usize>) -> Fixture {
    Fixture {
        name,
        sketch: Sketch::new(prims).expect("fixture sketch"),
        constraints: ConstraintSequence::new(items).expect("fixture constraints"),
        category,
        dof,
    }
}

fn origin() -> Primitive {
    Primitive::point(0, 0.0, 0.0).fixed()
}

pub fn fixtures() -> Vec<Fixture> {
    use Category::*;
    let p = || vec![origin(), Primitive::point(1, 4.0, 1.0)];
    let l1 = || Primitive::line(1, 0.1, 0.1, 3.0, 0.4);
    let two_lines = || vec![origin(), Primitive::line(1, 0.1, 0.0, 3.0, 0.1), Primitive::line(2, 3.0, 0.1, 3.2, 2.0)];
    let rings = || vec![origin(), Primitive::circle(1, 0.0, 0.05, 1.0), Primitive::circle(2, 0.1, 0.0, 2.0)];
    let chain = [
        c(K::Coincident, &[0, 1]),
        c(K::Horizontal, &[1]),
        d(K::LengthDim, &[1], 3.0),
        c(K::Perpendicular, &[1, 2]),
        d(K::LengthDim, &[2], 2.0),
    ];
    vec![
        fx("anchor only", vec![origin()], vec![], FullyConstrained, Some(0)),
        fx("free point", p(), vec![], UnderConstrained, Some(2)),
        fx("distance", p(), vec![d(K::DistanceDim, &[0, 1], 5.0)], UnderConstrained, Some(1)),
        fx("distance + horizontal", p(), vec![d(K::DistanceDim, &[0, 1], 5.0), c(K::Horizontal, &[0, 1])], FullyConstrained, Some(0)),
        fx(
            "distance + horizontal + vertical",
            p(),
            vec![d(K::DistanceDim, &[0, 1], 5.0), c(K::Horizontal, &[0, 1]), c(K::Vertical, &[0, 1])],
            NotSolvable,
            None,
        ),
        fx(
            "duplicate horizontal",
            p(),
            vec![d(K::DistanceDim, &[0, 1], 5.0), c(K::Horizontal, &[0, 1]), c(K::Horizontal, &[0, 1])],
            OverConstrained,
            Some(0),
        ),
        fx(
            "conflicting distances",
            p(),
            vec![d(K::DistanceDim, &[0, 1], 5.0), d(K::DistanceDim, &[0, 1], 3.0)],
            NotSolvable,
            None,
        ),
        fx("free line", vec![origin(), l1()], vec![], UnderConstrained, Some(4)),
        fx(
            "anchored horizontal line",
            vec![origin(), l1()],
            vec![c(K::Coincident, &[0, 1]), c(K::Horizontal, &[1])],
            UnderConstrained,
            Some(1),
        ),
        fx(
            "dimensioned horizontal line",
            vec![origin(), l1()],
            vec![c(K::Coincident, &[0, 1]), c(K::Horizontal, &[1]), d(K::LengthDim, &[1], 3.0)],
            FullyConstrained,
            Some(0),
        ),
        fx("centered circle", vec![origin(), Primitive::circle(1, 0.05, 0.0, 2.0)], vec![c(K::Coincident, &[0, 1])], UnderConstrained, Some(1)),
        fx(
            "dimensioned circle",
            vec![origin(), Primitive::circle(1, 0.05, 0.0, 2.0)],
            vec![c(K::Coincident, &[0, 1]), d(K::DiameterDim, &[1], 4.0)],
            FullyConstrained,
            Some(0),
        ),
        fx(
            "concentric rings",
            rings(),
            vec![c(K::Coincident, &[0, 1]), c(K::Concentric, &[1, 2]), d(K::RadiusDim, &[1], 1.0), d(K::RadiusDim, &[2], 2.0)],
            FullyConstrained,
            Some(0),
        ),
        fx(
            "equal rings with different radii",
            rings(),
            vec![
                c(K::Coincident, &[0, 1]),
                c(K::Concentric, &[1, 2]),
                d(K::RadiusDim, &[1], 1.0),
                d(K::RadiusDim, &[2], 2.0),
                c(K::Equal, &[1, 2]),
            ],
            NotSolvable,
            None,
        ),
        fx("floating perpendicular", two_lines(), chain.to_vec(), UnderConstrained, Some(2)),
        fx(
            "repeated perpendicular",
            two_lines(),
            chain.iter().cloned().chain([c(K::Perpendicular, &[2, 1])]).collect(),
            OverConstrained,
            Some(2),
        ),
        fx(
            "anchored arc",
            vec![origin(), Primitive::arc(1, 0.0, 0.05, 1.0, 0.0, 1.5)],
            vec![c(K::Coincident, &[0, 1]), d(K::RadiusDim, &[1], 1.0)],
            UnderConstrained,
            Some(2),
        ),
    ]
}

/// Template sketches: fully constrained, with every item independent.
pub fn template_fixtures(seed: u64) -> Vec<(Template, Sketch, ConstraintSequence)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Template::ALL.iter().map(|&t| {
        let (s, q) = generate_sketch(t, &mut rng);
        (t, s, q)
    }).collect()
}

/// A random sketch with 1 to `max_free` free primitives after a fixed anchor.
pub fn random_sketch(rng: &mut impl Rng, max_free: usize) -> Sketch {
    let mut prims = vec![Primitive::point(0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).fixed()];
    let n = rng.gen_range(1..=max_free);
    for id in 1..=n {
        let u: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-5.0..5.0));
        let r = rng.gen_range(0.5..3.0);
        let start = rng.gen_range(-3.0..3.0);
        let p = match id % 4 {
            0 => Primitive::point(id, u[0], u[1]),
            1 => Primitive::line(id, u[0], u[1], u[2], u[3]),
            2 => Primitive::circle(id, u[0], u[1], r),
            _ => Primitive::arc(id, u[0], u[1], r, start, start + rng.gen_range(0.5..4.0)),
        };
        prims.push(p);
    }
    match Sketch::new(prims) {
        Ok(s) => s,
        Err(_) => random_sketch(rng, max_free),
    }
}

/// Up to `count` random legal constraints; dimensions get values near the
/// measured ones so the system is consistent only approximately.
pub fn random_constraints(rng: &mut impl Rng, sketch: &Sketch, count: usize) -> ConstraintSequence {
    let kinds = sketch.kinds();
    let mut items = Vec::new();
    let mut tries = 0;
    while items.len() < count && tries < 50 * count {
        tries += 1;
        let kind = K::ALL[rng.gen_range(0..K::ALL.len())];
        let a = rng.gen_range(0..kinds.len());
        let arity = kind.arity_given(kinds[a]);
        let mut refs = vec![a];
        if arity == 2 {
            let b = rng.gen_range(0..kinds.len());
            if b == a {
                continue;
            }
            refs.push(b);
        }
        let ops: Vec<_> = refs.iter().map(|&r| kinds[r]).collect();
        if !is_legal(kind, &ops) {
            continue;
        }
        let mut item = ConstraintInstance::new(kind, refs);
        if kind.is_dimension() {
            let Ok(v) = measure_dimension(sketch, &item) else { continue };
            item.value = Some(v * rng.gen_range(0.8..1.2));
        }
        items.push(item);
    }
    ConstraintSequence::new(items).expect("bounded count")
}
