//! The conservative interpolant between neighbouring particles and the
//! integral functionals built on it.
//!
//! Between two particles (x1,u1), (x2,u2) with no inflection value in
//! between, the position is an explicit function of the value:
//!
//! ```text
//! x(u) = x1 + (f'(u) - f'(u1)) / (f'(u2) - f'(u1)) * (x2 - x1)
//! ```
//!
//! Every point of this curve moves with its own characteristic speed, so the
//! interpolant is itself a solution of the conservation law between events.
//! Defining x as a function of u also makes vertical shock fronts (x1 = x2)
//! and rarefaction fans unremarkable.

use crate::error::{Error, Result};
use crate::flux::{AverageForm, FluxModel};
use crate::numerics;
use crate::state::{Particle, ParticleField};

/// An adjacent particle pair viewed as the conservative interpolant.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub left: Particle,
    pub right: Particle,
    flux: &'a FluxModel,
}

/// Borrow segment `i` (particles i, i+1) of a field.
pub fn segment(field: &ParticleField, i: usize) -> Segment<'_> {
    Segment {
        left: *field.particle(i),
        right: *field.particle(i + 1),
        flux: field.flux(),
    }
}

impl<'a> Segment<'a> {
    /// Validating constructor for segments built from loose particles.
    pub fn new(left: Particle, right: Particle, flux: &'a FluxModel) -> Result<Self> {
        if right.x < left.x {
            return Err(Error::Domain(format!(
                "segment endpoints out of order: {} > {}",
                left.x, right.x
            )));
        }
        if let Some(s) = flux.inflection_strictly_between(left.u, right.u) {
            return Err(Error::ConvexityViolation {
                lo: left.u.min(right.u),
                hi: left.u.max(right.u),
                inflection: s,
            });
        }
        Ok(Self { left, right, flux })
    }

    pub(crate) fn unchecked(left: Particle, right: Particle, flux: &'a FluxModel) -> Self {
        Self { left, right, flux }
    }

    fn speeds(&self) -> (f64, f64) {
        (self.flux.speed(self.left.u), self.flux.speed(self.right.u))
    }

    /// Position of value `u` on the interpolant. Requires u between the
    /// endpoint values and distinct endpoint values.
    pub fn x_of_u(&self, u: f64) -> Result<f64> {
        let (u1, u2) = (self.left.u, self.right.u);
        if u1 == u2 {
            return Err(Error::Domain(
                "x(u) is undefined on a constant segment".into(),
            ));
        }
        if u < u1.min(u2) || u > u1.max(u2) {
            return Err(Error::Domain(format!(
                "value {u} outside segment range [{}, {}]",
                u1.min(u2),
                u1.max(u2)
            )));
        }
        let (s1, s2) = self.speeds();
        let d = s2 - s1;
        let frac = if d == 0.0 {
            // Degenerate (linear flux): fall back to the straight chord.
            (u - u1) / (u2 - u1)
        } else {
            (self.flux.speed(u) - s1) / d
        };
        Ok(self.left.x + frac * (self.right.x - self.left.x))
    }

    /// Value at position `x`: the unique u with x(u) = x, by safeguarded
    /// Newton iteration on f'. Constant segments return their value.
    pub fn u_of_x(&self, x: f64) -> Result<f64> {
        let (u1, u2) = (self.left.u, self.right.u);
        if u1 == u2 {
            return Ok(u1);
        }
        let (x1, x2) = (self.left.x, self.right.x);
        if x < x1 || x > x2 {
            return Err(Error::Domain(format!(
                "position {x} outside segment [{x1}, {x2}]"
            )));
        }
        if x1 == x2 {
            return Err(Error::Domain(
                "u(x) is undefined on a zero-width segment".into(),
            ));
        }
        if x == x1 {
            return Ok(u1);
        }
        if x == x2 {
            return Ok(u2);
        }
        let (s1, s2) = self.speeds();
        let frac = (x - x1) / (x2 - x1);
        if s2 == s1 {
            return Ok(u1 + frac * (u2 - u1));
        }
        let target = s1 + frac * (s2 - s1);
        let g = |u: f64| (self.flux.speed(u) - target, self.flux.curvature(u));
        let tol = 1e-12 * (u1.abs() + u2.abs() + 1.0);
        let guess = u1 + frac * (u2 - u1);
        let root = numerics::newton_bisect(&g, u1.min(u2), u1.max(u2), guess, tol, 200)
            .map_err(Error::RootFind)?;
        Ok(numerics::polish_root(&g, u1.min(u2), u1.max(u2), root, 2))
    }

    /// Area under the interpolant: (x2 - x1) * a(u1, u2).
    pub fn area(&self) -> Result<f64> {
        Ok((self.right.x - self.left.x) * self.flux.average(self.left.u, self.right.u)?)
    }

    /// ∫ |u(x) - k| dx over the segment, computed in the u variable:
    /// (x2-x1)/[f'] * ∫ |u-k| f''(u) du, split at u = k. Constant-f''
    /// models use the exact uniform-weight formula.
    pub fn entropy(&self, k: f64) -> f64 {
        let (u1, u2) = (self.left.u, self.right.u);
        let gap = self.right.x - self.left.x;
        if u1 == u2 {
            return gap * (u1 - k).abs();
        }
        let (s1, s2) = self.speeds();
        let d = s2 - s1;
        if self.flux.average_form() == AverageForm::ClosedForm || d == 0.0 {
            let (a, b) = (u1.min(u2), u1.max(u2));
            let mean = if k <= a {
                0.5 * (a + b) - k
            } else if k >= b {
                k - 0.5 * (a + b)
            } else {
                0.5 * ((a - k).powi(2) + (b - k).powi(2)) / (b - a)
            };
            return gap * mean;
        }
        let f = |u: f64| (u - k).abs() * self.flux.curvature(u);
        let integral = if k > u1.min(u2) && k < u1.max(u2) {
            numerics::integrate(&f, u1, k, 1e-12, 1e-10)
                + numerics::integrate(&f, k, u2, 1e-12, 1e-10)
        } else {
            numerics::integrate(&f, u1, u2, 1e-12, 1e-10)
        };
        gap / d * integral
    }
}

/// Sum of segment areas between the first and last particle.
pub fn total_area(field: &ParticleField) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..field.len().saturating_sub(1) {
        total += segment(field, i).area()?;
    }
    Ok(total)
}

/// Σ |u_{i+1} - u_i|. The interpolant is monotone per segment, so this is
/// exactly the total variation of the interpolated solution.
pub fn total_variation(field: &ParticleField) -> f64 {
    field
        .particles()
        .windows(2)
        .map(|w| (w[1].u - w[0].u).abs())
        .sum()
}

/// ∫ |u(x) - k| dx between the first and last particle.
pub fn kruzkov_entropy(field: &ParticleField, k: f64) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..field.len().saturating_sub(1) {
        let seg = segment(field, i);
        if let Some(s) = field
            .flux()
            .inflection_strictly_between(seg.left.u, seg.right.u)
        {
            return Err(Error::ConvexityViolation {
                lo: seg.left.u.min(seg.right.u),
                hi: seg.left.u.max(seg.right.u),
                inflection: s,
            });
        }
        total += seg.entropy(k);
    }
    Ok(total)
}

/// Sample the interpolant as an ordered (x, u) polyline, uniformly in u per
/// segment. Vertical shock fronts come out as genuinely vertical polylines.
pub fn sample_curve(field: &ParticleField, points_per_segment: usize) -> Result<Vec<(f64, f64)>> {
    if points_per_segment < 2 {
        return Err(Error::Config(format!(
            "need at least 2 points per segment, got {points_per_segment}"
        )));
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    let push = |p: (f64, f64), out: &mut Vec<(f64, f64)>| {
        if out.last() != Some(&p) {
            out.push(p);
        }
    };
    for i in 0..field.len().saturating_sub(1) {
        let seg = segment(field, i);
        let (u1, u2) = (seg.left.u, seg.right.u);
        if u1 == u2 {
            push((seg.left.x, u1), &mut out);
            push((seg.right.x, u2), &mut out);
            continue;
        }
        for j in 0..points_per_segment {
            // Endpoints exactly; interior samples clamped against rounding
            // overshoot of the hull.
            let u = if j == 0 {
                u1
            } else if j == points_per_segment - 1 {
                u2
            } else {
                let frac = j as f64 / (points_per_segment - 1) as f64;
                (u1 + frac * (u2 - u1)).clamp(u1.min(u2), u1.max(u2))
            };
            let x = seg.x_of_u(u)?;
            push((x, u), &mut out);
        }
    }
    if field.len() == 1 {
        out.push((field.particle(0).x, field.particle(0).u));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::FluxModel;
    use proptest::prelude::*;

    fn seg(flux: &FluxModel, a: (f64, f64), b: (f64, f64)) -> Segment<'_> {
        Segment::new(Particle::new(a.0, a.1), Particle::new(b.0, b.1), flux).unwrap()
    }

    /// Composite Simpson in x; the independent oracle for the u-space
    /// integral routes below.
    fn simpson_in_x<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        let n = 2 * panels;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn x_of_u_hits_endpoints() {
        let q = FluxModel::quartic();
        let s = seg(&q, (0.25, 0.3), (2.0, 1.4));
        assert_eq!(s.x_of_u(0.3).unwrap(), 0.25);
        assert_eq!(s.x_of_u(1.4).unwrap(), 2.0);
    }

    #[test]
    fn burgers_interpolant_is_straight_line() {
        let b = FluxModel::burgers();
        let s = seg(&b, (0.0, 0.0), (2.0, 1.0));
        assert!((s.x_of_u(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((s.u_of_x(1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quartic_interpolant_values() {
        let q = FluxModel::quartic();
        let s = seg(&q, (0.0, 0.0), (1.0, 1.0));
        // x(u) = u^3 on this segment.
        assert!((s.x_of_u(0.5).unwrap() - 0.125).abs() < 1e-15);
        // u(0.5) = cbrt(0.5)
        let u = s.u_of_x(0.5).unwrap();
        assert!((u - 0.5f64.powf(1.0 / 3.0)).abs() < 1e-12, "{u}");
    }

    #[test]
    fn x_of_u_rejects_out_of_range_value() {
        let b = FluxModel::burgers();
        let s = seg(&b, (0.0, 0.0), (2.0, 1.0));
        assert!(s.x_of_u(1.5).is_err());
        assert!(s.u_of_x(2.5).is_err());
    }

    #[test]
    fn constant_segment_u_of_x() {
        let b = FluxModel::burgers();
        let s = seg(&b, (0.0, 0.7), (3.0, 0.7));
        assert_eq!(s.u_of_x(1.234).unwrap(), 0.7);
    }

    #[test]
    fn segment_area_examples() {
        let b = FluxModel::burgers();
        assert!((seg(&b, (0.0, 0.4), (5.0, 0.4)).area().unwrap() - 2.0).abs() < 1e-15);
        assert!((seg(&b, (0.0, 0.0), (2.0, 1.0)).area().unwrap() - 1.0).abs() < 1e-15);
        let q = FluxModel::quartic();
        assert!((seg(&q, (0.0, 0.0), (4.0, 1.0)).area().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn total_area_of_triangle_fields() {
        let b = FluxModel::burgers();
        let ps = vec![
            Particle::new(0.0, 0.0),
            Particle::new(1.0, 1.0),
            Particle::new(2.0, 0.0),
        ];
        let f = ParticleField::new(ps, 0.0, b, 10.0, 0.0).unwrap();
        assert!((total_area(&f).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(total_variation(&f), 2.0);

        let q = FluxModel::quartic();
        let ps = vec![
            Particle::new(0.0, 0.0),
            Particle::new(1.0, 1.0),
            Particle::new(2.0, 0.0),
        ];
        let f = ParticleField::new(ps, 0.0, q, 10.0, 0.0).unwrap();
        assert!((total_area(&f).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_field_tv_is_endpoint_difference() {
        let b = FluxModel::burgers();
        let ps = vec![
            Particle::new(0.0, -0.3),
            Particle::new(1.0, 0.1),
            Particle::new(2.0, 0.8),
        ];
        let f = ParticleField::new(ps, 0.0, b, 10.0, 0.0).unwrap();
        assert!((total_variation(&f) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn kruzkov_entropy_burgers_segment() {
        let b = FluxModel::burgers();
        let s = seg(&b, (0.0, 0.0), (2.0, 1.0));
        assert!((s.entropy(0.5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn kruzkov_entropy_below_min_is_area_minus_k_length() {
        let q = FluxModel::quartic();
        let ps = vec![
            Particle::new(0.0, 0.2),
            Particle::new(1.0, 0.9),
            Particle::new(3.0, 0.4),
        ];
        let f = ParticleField::new(ps, 0.0, q, 10.0, 0.0).unwrap();
        let k = -0.5;
        let e = kruzkov_entropy(&f, k).unwrap();
        let expect = total_area(&f).unwrap() - k * 3.0;
        assert!((e - expect).abs() < 1e-10, "{e} vs {expect}");
    }

    #[test]
    fn kruzkov_entropy_matches_x_space_quadrature() {
        let q = FluxModel::quartic();
        let s = seg(&q, (0.3, 0.2), (1.7, 1.1));
        for k in [0.1, 0.5, 0.65, 1.3] {
            let e = s.entropy(k);
            let oracle = simpson_in_x(|x| (s.u_of_x(x).unwrap() - k).abs(), 0.3, 1.7, 4096);
            assert!((e - oracle).abs() < 1e-8, "k = {k}: {e} vs {oracle}");
        }
    }

    #[test]
    fn segment_area_matches_x_space_quadrature() {
        let bl = FluxModel::buckley_leverett();
        let s = seg(&bl, (0.1, 0.45), (0.9, 0.95));
        let area = s.area().unwrap();
        let oracle = simpson_in_x(|x| s.u_of_x(x).unwrap(), 0.1, 0.9, 4096);
        assert!((area - oracle).abs() < 1e-8, "{area} vs {oracle}");
    }

    #[test]
    fn sample_curve_handles_shock_and_constant_segments() {
        let b = FluxModel::burgers();
        let ps = vec![
            Particle::new(0.0, 0.5),
            Particle::new(1.0, 0.5),
            Particle::new(1.0, -0.2),
            Particle::new(2.0, -0.2),
        ];
        let f = ParticleField::new(ps, 0.0, b, 10.0, 0.0).unwrap();
        let poly = sample_curve(&f, 5).unwrap();
        // Vertical front at x = 1.
        assert!(poly.iter().filter(|(x, _)| *x == 1.0).count() >= 5);
        // x never decreases along the polyline.
        for w in poly.windows(2) {
            assert!(w[1].0 >= w[0].0);
        }
        assert!(sample_curve(&f, 1).is_err());
    }

    proptest! {
        #[test]
        fn inversion_round_trip_quartic(
            u1 in 0.05f64..1.0,
            du in 0.05f64..1.0,
            frac in 0.0f64..1.0,
        ) {
            let q = FluxModel::quartic();
            let s = seg(&q, (0.0, u1), (1.3, u1 + du));
            let u = u1 + frac * du;
            let x = s.x_of_u(u).unwrap();
            let back = s.u_of_x(x).unwrap();
            prop_assert!((back - u).abs() < 1e-10, "{back} vs {u}");
        }

        #[test]
        fn interpolant_monotone_in_u(
            u1 in -1.5f64..-0.05,
            du in 0.05f64..1.0,
            f1 in 0.0f64..1.0,
            f2 in 0.0f64..1.0,
        ) {
            // Negative-side quartic segment: x(u) must be monotone.
            let q = FluxModel::quartic();
            let s = seg(&q, (0.0, u1 + du.min(-u1 - 0.01).max(0.0)), (2.0, u1));
            let (lo, hi) = (s.right.u, s.left.u);
            let (fa, fb) = (f1.min(f2), f1.max(f2));
            let ua = lo + fa * (hi - lo);
            let ub = lo + fb * (hi - lo);
            prop_assume!(ua < ub);
            let xa = s.x_of_u(ua).unwrap();
            let xb = s.x_of_u(ub).unwrap();
            // left.u = hi maps to x = 0, right.u = lo maps to x = 2: decreasing u -> increasing x
            prop_assert!(xb <= xa + 1e-12);
        }
    }
}
