mod common;

use std::time::Instant;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketch_align::sketch::{pack_parameters, residual_arity, unpack_parameters, validate_sequence};
use sketch_align::solver::{incremental_apply, solve, stability_check, Category, ConstraintSystem, SolveOptions};

/// Central differences of the residual vector.
fn fd_jacobian(system: &ConstraintSystem, x: &[f64], h: f64) -> nalgebra::DMatrix<f64> {
    let m = system.residual_count();
    let mut j = nalgebra::DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for col in 0..x.len() {
        xp[col] = x[col] + h;
        let up = system.residuals(&xp);
        xp[col] = x[col] - h;
        let down = system.residuals(&xp);
        xp[col] = x[col];
        for row in 0..m {
            j[(row, col)] = (up[row] - down[row]) / (2.0 * h);
        }
    }
    j
}

#[test]
fn analytic_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        let sketch = common::random_sketch(&mut rng, 6);
        let seq = common::random_constraints(&mut rng, &sketch, 8);
        if seq.is_empty() {
            continue;
        }
        let system = ConstraintSystem::new(&sketch, &seq).unwrap();
        let x = system.initial_point();
        let analytic = system.jacobian(&x);
        let numeric = fd_jacobian(&system, &x, 1e-6);
        let rel = (&analytic - &numeric).norm() / analytic.norm().max(1.0);
        assert!(rel < 1e-6, "relative error {rel:e} for {seq:?}");
        checked += 1;
    }
}

#[test]
fn fixtures_have_exact_categories_and_nullspace_dimension() {
    for f in common::fixtures() {
        let start = Instant::now();
        let r = solve(&f.sketch, &f.constraints, &SolveOptions::default()).unwrap();
        assert!(start.elapsed().as_secs_f64() < 1.0, "{} took too long", f.name);
        assert_eq!(r.status.category, f.category, "{}", f.name);
        if let Some(dof) = f.dof {
            assert_eq!(r.rank_analysis.as_ref().unwrap().nullity(), dof, "{}", f.name);
        }
    }
}

#[test]
fn dropping_independent_items_frees_their_rows() {
    for (t, sketch, seq) in common::template_fixtures(5) {
        let full = solve(&sketch, &seq, &SolveOptions::default()).unwrap();
        assert_eq!(full.status.category, Category::FullyConstrained, "{t:?}");
        let kinds = sketch.kinds();
        let rows = |i: usize| {
            let c = &seq.items[i];
            residual_arity(c.kind, &c.refs.iter().map(|&r| kinds[r]).collect::<Vec<_>>()).unwrap()
        };
        for k in 1..=3.min(seq.len()) {
            let keep: Vec<usize> = (k..seq.len()).collect();
            let r = solve(&sketch, &seq.subset(&keep), &SolveOptions::default()).unwrap();
            assert_eq!(r.iterations, 0, "{t:?}: geometry already satisfies a subset");
            let freed: usize = (0..k).map(rows).sum();
            assert_eq!(r.rank_analysis.unwrap().nullity(), freed, "{t:?} minus {k}");
        }
    }
}

#[test]
fn incremental_apply_keeps_solvable_non_redundant_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = SolveOptions::default();
    for _ in 0..60 {
        let sketch = common::random_sketch(&mut rng, 5);
        let seq = common::random_constraints(&mut rng, &sketch, 10);
        let (kept, dropped) = incremental_apply(&sketch, &seq, &opts);
        assert_eq!(kept.len() + dropped.len(), seq.len());
        let r = solve(&sketch, &kept, &opts).unwrap();
        assert!(r.status.solvable() && !r.status.oc_flag, "{:?}", r.status.category);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pack_then_unpack_is_identity(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sketch = common::random_sketch(&mut rng, 8);
        let (x, index) = pack_parameters(&sketch);
        prop_assert_eq!(unpack_parameters(&sketch, &index, &x), sketch);
    }

    #[test]
    fn stability_is_reflexive(seed in 0u64..10_000, bins in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sketch = common::random_sketch(&mut rng, 8);
        prop_assert!(stability_check(&sketch, &sketch, bins));
    }

    #[test]
    fn solved_geometry_satisfies_constraints(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sketch = common::random_sketch(&mut rng, 4);
        let seq = common::random_constraints(&mut rng, &sketch, 4);
        prop_assert!(validate_sequence(&sketch, &seq).is_ok());
        let r = solve(&sketch, &seq, &SolveOptions::default()).unwrap();
        if r.status.solvable() {
            let sys = ConstraintSystem::new(&sketch, &seq).unwrap();
            let res = sys.residuals(&pack_parameters(&r.solved_sketch.unwrap()).0);
            prop_assert!(res.amax() <= 1e-8);
        }
    }
}
