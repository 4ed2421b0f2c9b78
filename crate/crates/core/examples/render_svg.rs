//! Solves a partly constrained triangle and writes the SVG, colored by the
//! per-entity status, next to the original geometry.

use sketch_align::eval::render_svg;
use sketch_align::sketch::{ConstraintInstance, ConstraintKind as K, ConstraintSequence, Primitive, Sketch};
use sketch_align::solver::{solve, SolveOptions};

fn main() -> sketch_align::Result<()> {
    let sketch = Sketch::new(vec![
        Primitive::point(0, 0.0, 0.0).fixed(),
        Primitive::point(1, 3.0, 0.1),
        Primitive::point(2, 1.4, 2.0),
        Primitive::line(3, 0.0, 0.0, 3.0, 0.1),
        Primitive::line(4, 3.0, 0.1, 1.4, 2.0),
        Primitive::line(5, 1.4, 2.0, 0.0, 0.0),
    ])?;
    let mut items = Vec::new();
    for (corner, line) in [(0, 3), (1, 3), (1, 4), (2, 4), (2, 5), (0, 5)] {
        items.push(ConstraintInstance::new(K::Coincident, vec![corner, line]));
    }
    items.push(ConstraintInstance::new(K::Horizontal, vec![3]));
    items.push(ConstraintInstance::dim(K::LengthDim, vec![3], 3.0));
    let constraints = ConstraintSequence::new(items)?;
    let report = solve(&sketch, &constraints, &SolveOptions::default())?;
    let solved = report.solved_sketch.as_ref().unwrap_or(&sketch);
    let svg = render_svg(solved, &report.status, Some(&sketch));
    let path = std::env::temp_dir().join("sketch_align_triangle.svg");
    std::fs::write(&path, svg)?;
    println!("{:?}; per-entity FC {:?}", report.status.category, report.status.per_entity_fc);
    println!("wrote {}", path.display());
    Ok(())
}
