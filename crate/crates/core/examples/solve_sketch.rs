//! Builds an anchored rectangle, solves it, then appends a conflicting
//! dimension and lets `incremental_apply` drop the offending items.

use sketch_align::sketch::{ConstraintInstance, ConstraintKind as K, ConstraintSequence, Primitive, Sketch};
use sketch_align::solver::{incremental_apply, solve, SolveOptions};

fn main() -> sketch_align::Result<()> {
    let sketch = Sketch::new(vec![
        Primitive::point(0, 0.0, 0.0).fixed(),
        Primitive::point(1, 4.0, 0.1),
        Primitive::point(2, 4.1, 2.0),
        Primitive::point(3, 0.0, 2.1),
        Primitive::line(4, 0.0, 0.0, 4.0, 0.1),
        Primitive::line(5, 4.0, 0.1, 4.1, 2.0),
        Primitive::line(6, 4.1, 2.0, 0.0, 2.1),
        Primitive::line(7, 0.0, 2.1, 0.0, 0.0),
    ])?;
    let mut items = Vec::new();
    for (corner, line) in [(0, 4), (1, 4), (1, 5), (2, 5), (2, 6), (3, 6), (3, 7), (0, 7)] {
        items.push(ConstraintInstance::new(K::Coincident, vec![corner, line]));
    }
    items.push(ConstraintInstance::new(K::Horizontal, vec![4]));
    items.push(ConstraintInstance::new(K::Vertical, vec![5]));
    items.push(ConstraintInstance::new(K::Horizontal, vec![6]));
    items.push(ConstraintInstance::new(K::Vertical, vec![7]));
    items.push(ConstraintInstance::dim(K::LengthDim, vec![4], 4.0));
    items.push(ConstraintInstance::dim(K::LengthDim, vec![5], 2.0));
    let opts = SolveOptions::default();
    let report = solve(&sketch, &ConstraintSequence::new(items.clone())?, &opts)?;
    println!("rectangle: {}", serde_json::to_string(&report.to_json())?);

    // The right side cannot be both 2 and 3 long.
    items.push(ConstraintInstance::dim(K::LengthDim, vec![7], 3.0));
    items.push(ConstraintInstance::new(K::Horizontal, vec![4]));
    let noisy = ConstraintSequence::new(items)?;
    let report = solve(&sketch, &noisy, &opts)?;
    println!("with conflicts: {:?}", report.status.category);
    let (kept, dropped) = incremental_apply(&sketch, &noisy, &opts);
    let report = solve(&sketch, &kept, &opts)?;
    println!("dropped items {dropped:?}, kept set is {:?}", report.status.category);
    Ok(())
}
