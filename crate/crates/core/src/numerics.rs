//! Scalar quadrature and safeguarded root finding used throughout the crate.

/// 15-point Kronrod abscissae on [-1, 1] (positive half; symmetric).
/// Every second entry (indices 1, 3, 5) plus the centre is a 7-point Gauss node.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Gauss–Kronrod 7/15 panel: returns (integral, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut sum_g = WG[3] * fc;
    let mut sum_k = WGK[7] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        sum_k += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            sum_g += WG[j / 2] * (f1 + f2);
        }
    }
    (sum_k * h, ((sum_k - sum_g) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over [a, b].
///
/// Panels are bisected until the local error estimate meets the (split)
/// absolute tolerance or the relative tolerance. Integrands in this crate
/// are smooth per panel, so the subdivision depth stays shallow.
pub(crate) fn integrate<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let mut total = 0.0;
    let mut panels = 0usize;
    let mut stack = vec![(a, b, abs_tol.max(1e-300))];
    while let Some((lo, hi, tol)) = stack.pop() {
        panels += 1;
        let (val, err) = gk15(f, lo, hi);
        let width_floor = (hi - lo).abs() <= 1e-14 * (lo.abs() + hi.abs() + 1.0);
        if err <= tol.max(rel_tol * val.abs()) || width_floor || panels > 20_000 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * tol));
            stack.push((mid, hi, 0.5 * tol));
        }
    }
    total
}

/// Newton iteration safeguarded by bisection (Numerical Recipes `rtsafe`).
///
/// `fdf` returns `(g(x), g'(x))`. Requires a sign change of `g` between `lo`
/// and `hi`. Steps that would leave the bracket, or that shrink too slowly,
/// fall back to bisection, so convergence is guaranteed for continuous `g`.
pub(crate) fn newton_bisect<F: Fn(f64) -> (f64, f64)>(
    fdf: &F,
    lo: f64,
    hi: f64,
    x0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64, String> {
    let (flo, _) = fdf(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let (fhi, _) = fdf(hi);
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(format!("no sign change on [{lo}, {hi}]"));
    }
    let (mut xl, mut xh) = if flo < 0.0 { (lo, hi) } else { (hi, lo) };
    let inside = (x0 - lo) * (x0 - hi) < 0.0;
    let mut x = if inside { x0 } else { 0.5 * (lo + hi) };
    let mut dx_old = (hi - lo).abs();
    let mut dx = dx_old;
    let (mut fx, mut dfx) = fdf(x);
    for _ in 0..max_iter {
        let newton_unsafe = ((x - xh) * dfx - fx) * ((x - xl) * dfx - fx) > 0.0
            || 2.0 * fx.abs() > (dx_old * dfx).abs();
        if newton_unsafe {
            dx_old = dx;
            dx = 0.5 * (xh - xl);
            x = xl + dx;
            if x == xl {
                return Ok(x);
            }
        } else {
            dx_old = dx;
            dx = fx / dfx;
            let prev = x;
            x -= dx;
            if prev == x {
                return Ok(x);
            }
        }
        if dx.abs() < tol {
            return Ok(x);
        }
        let (nf, ndf) = fdf(x);
        fx = nf;
        dfx = ndf;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            xl = x;
        } else {
            xh = x;
        }
    }
    // The bisection safeguard halves the bracket on every slow iteration, so
    // by here x is as converged as the iteration budget allows.
    Ok(x)
}

/// A few unguarded Newton steps to sharpen an already-converged root,
/// clamped to [lo, hi]. Drives the residual to rounding level so that
/// conservation audits see no tolerance-sized bias.
pub(crate) fn polish_root<F: Fn(f64) -> (f64, f64)>(
    fdf: &F,
    lo: f64,
    hi: f64,
    mut x: f64,
    rounds: usize,
) -> f64 {
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    for _ in 0..rounds {
        let (f, d) = fdf(x);
        if f == 0.0 || d == 0.0 || !d.is_finite() {
            break;
        }
        let step = f / d;
        if !step.is_finite() || step.abs() > hi - lo {
            break;
        }
        let nx = (x - step).max(lo).min(hi);
        if nx == x {
            break;
        }
        x = nx;
    }
    x
}

/// Plain bisection for a sign change of `f` on [lo, hi].
pub(crate) fn bisect<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, String> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    if fa == 0.0 {
        return Ok(a);
    }
    let fb = f(b);
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(format!("no sign change on [{lo}, {hi}]"));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
