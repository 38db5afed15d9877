//! Derivative-free scalar minimization.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimizer of `f` on `[lo, hi]`, assuming `f`
/// is unimodal there. Stops when the bracket is narrower than
/// `tol * (1 + |x|)` and returns the best point evaluated.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a) <= tol * (1.0 + c.abs().max(d.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc <= fd { c } else { d };
    let mut fbest = f(best);
    for x in [a, b] {
        let fx = f(x);
        if fx < fbest {
            best = x;
            fbest = fx;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_and_kink_minima() {
        let x = golden_section(|x| (x - 1.3) * (x - 1.3), -10.0, 10.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-9);
        let x = golden_section(|x: f64| x.abs() + 0.1 * x * x, -10.0, 10.0, 1e-12);
        assert!(x.abs() < 1e-9);
        let x = golden_section(|x| x, 0.0, 2.0, 1e-12);
        assert_eq!(x, 0.0);
    }
}
