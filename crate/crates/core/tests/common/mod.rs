//! Shared helpers for the integration and acceptance suites.

use clawpart::{IcSpec, RunConfig};

/// The smooth benchmark problem: u0 = exp(-x²)cos(πx) under f(u) = u⁴/4.
pub fn gauss_cos_quartic(n: usize, t_end: f64, output_times: Vec<f64>) -> RunConfig {
    RunConfig {
        flux: "quartic".into(),
        domain: (-3.0, 3.0),
        n_particles: n,
        d_max_factor: 1.9,
        d_min: 0.0,
        t_end,
        output_times,
        entropy_fix: true,
        postprocess: false,
        seed: 0,
        curve_points: 16,
        initial_condition: IcSpec::GaussCos,
    }
}

/// Least-squares slope of ln(err) against ln(h) over the `points` finest
/// (smallest-h) entries.
pub fn fit_slope(hs: &[f64], errs: &[f64], points: usize) -> f64 {
    assert_eq!(hs.len(), errs.len());
    let mut pairs: Vec<(f64, f64)> = hs.iter().copied().zip(errs.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.truncate(points.max(2));
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (h, e) in &pairs {
        let (x, y) = (h.ln(), e.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Adaptive Simpson quadrature, independent of the library's integrator.
pub fn simpson_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}
