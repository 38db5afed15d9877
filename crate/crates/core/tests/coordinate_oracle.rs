mod common;

use common::{coordinate_surrogate, golden_split, random_coordinate_case};
use dsfa_core::loadings::solve_coordinate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn closed_form_matches_numerical_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fallbacks = 0;
    for i in 0..200 {
        let case = random_coordinate_case(&mut rng);
        let upd = solve_coordinate(&case.terms, &case.params, (0, 0, i)).unwrap();
        let f = |b: f64| coordinate_surrogate(&case, b);
        let oracle = golden_split(f, 10.0);
        if upd.fallback {
            fallbacks += 1;
        }
        let close = (upd.value - oracle).abs() < 1e-6;
        assert!(
            close || (upd.fallback && f(upd.value) <= f(oracle) + 1e-12),
            "case {i}: update {} vs oracle {oracle} ({:?})",
            upd.value,
            case
        );
    }
    assert!(fallbacks > 0, "the scenario mix should exercise negative thresholds");
}

#[test]
fn update_never_worse_than_zero_or_current() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..500 {
        let case = random_coordinate_case(&mut rng);
        let upd = solve_coordinate(&case.terms, &case.params, (0, 0, i)).unwrap();
        let f = |b: f64| coordinate_surrogate(&case, b);
        assert!(f(upd.value) <= f(0.0) + 1e-12);
        assert!(f(upd.value) <= f(case.terms.beta_prev) + 1e-12);
    }
}
