use dsfa_core::volatility::{extract_modes, smooth_with, FfbsState};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn ratios(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
    // Cheap deterministic positive values.
    DMatrix::from_fn(p, n, |j, t| 0.05 + ((seed as usize * 31 + j * 17 + t * 7) % 23) as f64 / 5.0)
}

proptest! {
    #[test]
    fn forward_recursions_hold(delta in 0.5f64..1.0, eta0 in 1.5f64..40.0, seed in 0u64..1000, n in 1usize..30) {
        let p = 3;
        let r = ratios(p, n, seed);
        let d0 = DVector::from_fn(p, |j, _| 0.5 + j as f64);
        let fs = FfbsState::filter_ratios(&r, delta, eta0, &d0);
        let mut eta_prev = eta0;
        let mut d_prev = d0.clone();
        let mut s_prev = d0.map(|d| d / eta0);
        for t in 0..n {
            prop_assert!((fs.eta[t] - (delta * eta_prev + 1.0)).abs() < 1e-12);
            for j in 0..p {
                let d = delta * d_prev[j] + s_prev[j] * r[(j, t)];
                prop_assert!((fs.d[(j, t)] - d).abs() < 1e-12 * d.max(1.0));
                prop_assert!((fs.s[(j, t)] - d / fs.eta[t]).abs() < 1e-12 * d.max(1.0));
                d_prev[j] = d;
                s_prev[j] = d / fs.eta[t];
            }
            eta_prev = fs.eta[t];
        }
    }

    #[test]
    fn backward_harmonic_mix_holds(delta in 0.5f64..1.0, seed in 0u64..1000, n in 1usize..30) {
        let r = ratios(2, n, seed);
        let fs = FfbsState::filter_ratios(&r, delta, 5.0, &DVector::from_element(2, 1.0));
        let sm = smooth_with(&fs, delta);
        prop_assert_eq!(sm.eta_smooth[n - 1], fs.eta[n - 1]);
        for t in 0..n - 1 {
            let eta = (1.0 - delta) * fs.eta[t] + delta * sm.eta_smooth[t + 1];
            prop_assert!((sm.eta_smooth[t] - eta).abs() < 1e-12);
            for j in 0..2 {
                let inv = (1.0 - delta) / fs.s[(j, t)] + delta / sm.s_smooth[(j, t + 1)];
                prop_assert!((sm.s_smooth[(j, t)] * inv - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn unit_discount_gives_constant_variances() {
    let fs = FfbsState::filter_ratios(&ratios(4, 25, 9), 1.0, 3.0, &DVector::from_element(4, 2.0));
    let vol = extract_modes(&smooth_with(&fs, 1.0)).unwrap();
    for j in 0..4 {
        let row = vol.sigma2.row(j);
        assert!(row.iter().all(|&v| v == row[24]));
    }
}

#[test]
fn three_step_hand_example() {
    // Filtered S = (1, 2, 4), constant eta, delta = 0.9.
    let fs = FfbsState {
        delta: 0.9,
        eta0: 10.0,
        d0: DVector::from_element(1, 10.0),
        eta: vec![10.0; 3],
        d: DMatrix::from_row_slice(1, 3, &[10.0, 20.0, 40.0]),
        s: DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 4.0]),
        eta_smooth: Vec::new(),
        s_smooth: DMatrix::zeros(1, 0),
    };
    let sm = smooth_with(&fs, 0.9);
    assert!((sm.s_smooth[(0, 1)] - 3.6364).abs() < 1e-4);
    assert!((sm.s_smooth[(0, 0)] - 2.8777).abs() < 1e-4);
}
