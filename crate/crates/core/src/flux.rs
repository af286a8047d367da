//! Flux-function models and the nonlinear average that drives all area
//! bookkeeping.
//!
//! The area between two characteristic particles is `(x2 - x1) * a(u1, u2)`
//! where `a` is the f''-weighted mean of u,
//!
//! ```text
//! a(u1, u2) = [f'(u)u - f(u)] / [f'(u)]   (brackets: difference u1 -> u2)
//!           = ∫ f''(u) u du / ∫ f''(u) du
//! ```
//!
//! valid as long as f is strictly convex or concave between the two values.
//! Everything downstream (insertion, merging, entropy) reduces to evaluations
//! of `a` on inflection-free value intervals.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Closed interval. Used both for solution values and for positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ValueInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Config(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

impl fmt::Display for ValueInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// How the nonlinear average is evaluated for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageForm {
    /// f'' is constant (quadratic or linear flux): `a` is the arithmetic mean.
    ClosedForm,
    /// Boundary-term form `[f'u - f]/[f']`, with adaptive quadrature of the
    /// integral form as a fallback when the denominator cancels.
    Quadrature,
}

/// Convexity of the flux on an interval with no interior inflection point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convexity {
    Convex,
    Concave,
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A flux function together with its first two derivatives, the values where
/// f'' crosses (or touches) zero, and the admissible value range.
///
/// Models are immutable after construction and are shared behind an [`Arc`].
pub struct FluxModel {
    name: String,
    f: ScalarFn,
    df: ScalarFn,
    ddf: ScalarFn,
    inflection_points: Vec<f64>,
    admissible: (f64, f64),
    average_form: AverageForm,
}

impl fmt::Debug for FluxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FluxModel")
            .field("name", &self.name)
            .field("inflection_points", &self.inflection_points)
            .field("admissible", &self.admissible)
            .field("average_form", &self.average_form)
            .finish()
    }
}

impl FluxModel {
    /// Burgers flux f(u) = u²/2.
    pub fn burgers() -> Arc<Self> {
        Self::custom(
            "burgers",
            |u| 0.5 * u * u,
            |u| u,
            |_| 1.0,
            vec![],
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .expect("burgers model is valid")
    }

    /// Quartic flux f(u) = u⁴/4. f'' = 3u² touches zero at u = 0 without
    /// changing sign; the touch point is listed as an inflection point anyway
    /// so that no segment ever spans it and the merge logic stays uniform.
    pub fn quartic() -> Arc<Self> {
        Self::custom(
            "quartic",
            |u| 0.25 * u.powi(4),
            |u| u.powi(3),
            |u| 3.0 * u * u,
            vec![0.0],
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .expect("quartic model is valid")
    }

    /// Buckley–Leverett flux f(u) = u² / (u² + (1-u)²/2) on [0, 1]; a simple
    /// model of two-phase flow in a porous medium. f'' changes sign once in
    /// (0, 1); the crossing is located by bisection at construction.
    pub fn buckley_leverett() -> Arc<Self> {
        let h = |u: f64| u * u + 0.5 * (1.0 - u) * (1.0 - u);
        let ddf = move |u: f64| (3.0 * u.powi(3) - 4.5 * u * u + 0.5) / h(u).powi(3);
        let star = numerics::bisect(&ddf, 0.2, 0.6, 1e-15)
            .expect("Buckley-Leverett f'' changes sign once in (0.2, 0.6)");
        Self::custom(
            "buckley_leverett",
            move |u| u * u / h(u),
            move |u| u * (1.0 - u) / (h(u) * h(u)),
            ddf,
            vec![star],
            (0.0, 1.0),
        )
        .expect("Buckley-Leverett model is valid")
    }

    /// Linear advection f(u) = c·u. Degenerate (f'' = 0): particles never
    /// interact and the average is the arithmetic mean by continuity.
    pub fn linear(c: f64) -> Arc<Self> {
        Self::custom(
            "linear",
            move |u| c * u,
            move |_| c,
            |_| 0.0,
            vec![],
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .expect("linear model is valid")
    }

    /// Look up a built-in model by its CLI name.
    pub fn by_name(name: &str) -> Result<Arc<Self>> {
        match name {
            "burgers" => Ok(Self::burgers()),
            "quartic" => Ok(Self::quartic()),
            "buckley_leverett" => Ok(Self::buckley_leverett()),
            other => Err(Error::Config(format!(
                "unknown flux '{other}' (expected burgers | quartic | buckley_leverett)"
            ))),
        }
    }

    /// Build a user-defined model from (f, f', f'') plus the declared
    /// inflection points, and validate the triple. f' must be continuous
    /// and f'' piecewise continuous (the quadrature fallback of the average
    /// integrates f'').
    ///
    /// Validation performed:
    ///
    /// * f' and f'' are checked against central finite differences of f and
    ///   f' at sampled points (tolerance 1e-6),
    /// * f'' must not change sign away from a declared inflection point,
    /// * declared inflection points must be ordered, admissible, and have
    ///   f'' ≈ 0.
    ///
    /// Whether the average has a closed form is detected by probing f'' for
    /// constancy.
    pub fn custom<F, D, D2>(
        name: &str,
        f: F,
        df: D,
        ddf: D2,
        inflection_points: Vec<f64>,
        admissible: (f64, f64),
    ) -> Result<Arc<Self>>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(admissible.0 < admissible.1) {
            return Err(Error::Config(format!(
                "admissible range [{}, {}] is empty",
                admissible.0, admissible.1
            )));
        }
        let model = Self {
            name: name.to_string(),
            f: Box::new(f),
            df: Box::new(df),
            ddf: Box::new(ddf),
            inflection_points,
            admissible,
            average_form: AverageForm::Quadrature,
        };
        let mut model = model;
        model.validate_construction()?;
        model.average_form = model.detect_average_form();
        Ok(Arc::new(model))
    }

    fn probe_points(&self) -> Vec<f64> {
        let lo = self.admissible.0.max(-8.0);
        let hi = self.admissible.1.min(8.0);
        // Stay slightly inside so finite-difference stencils remain admissible.
        let pad = 1e-3 * (hi - lo);
        let (lo, hi) = (lo + pad, hi - pad);
        let n = 41;
        let mut pts: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        for &star in &self.inflection_points {
            for off in [-3e-3, 3e-3] {
                let p = star + off * (hi - lo).max(1.0);
                if p > lo && p < hi {
                    pts.push(p);
                }
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts
    }

    fn validate_construction(&self) -> Result<()> {
        for w in self.inflection_points.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config(
                    "inflection points must be strictly increasing".into(),
                ));
            }
        }
        for &star in &self.inflection_points {
            if star < self.admissible.0 || star > self.admissible.1 {
                return Err(Error::Config(format!(
                    "inflection point {star} outside the admissible range"
                )));
            }
        }

        let pts = self.probe_points();
        let h_base = 6e-6;
        let mut ddf_scale = 0.0f64;
        for &u in &pts {
            ddf_scale = ddf_scale.max((self.ddf)(u).abs());
        }
        for &u in &pts {
            let h = h_base * u.abs().max(1.0);
            if u - h < self.admissible.0 || u + h > self.admissible.1 {
                continue;
            }
            let fd1 = ((self.f)(u + h) - (self.f)(u - h)) / (2.0 * h);
            let d1 = (self.df)(u);
            if (fd1 - d1).abs() > 1e-6 * d1.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "df is not the derivative of f at u = {u}: {d1} vs finite difference {fd1}"
                )));
            }
            let fd2 = ((self.df)(u + h) - (self.df)(u - h)) / (2.0 * h);
            let d2 = (self.ddf)(u);
            if (fd2 - d2).abs() > 1e-6 * d2.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "ddf is not the derivative of df at u = {u}: {d2} vs finite difference {fd2}"
                )));
            }
        }

        // f'' at declared inflection points is (numerically) zero.
        let zero_tol = 1e-7 * ddf_scale.max(1e-12);
        for &star in &self.inflection_points {
            if (self.ddf)(star).abs() > zero_tol {
                return Err(Error::Config(format!(
                    "declared inflection point {star} has f'' = {}",
                    (self.ddf)(star)
                )));
            }
        }

        // No undeclared sign change of f'' between probe points. Probes with
        // f'' at rounding level are transparent: signs are compared across
        // them, so a zero crossing is never hidden by a probe landing on it.
        let sign_tol = 1e-9 * ddf_scale.max(1e-12);
        let mut last: Option<(f64, f64)> = None;
        for &u in &pts {
            let d = (self.ddf)(u);
            if d.abs() <= sign_tol {
                continue;
            }
            if let Some((a, da)) = last {
                if da.signum() != d.signum()
                    && !self
                        .inflection_points
                        .iter()
                        .any(|&s| s >= a - 1e-12 && s <= u + 1e-12)
                {
                    return Err(Error::Config(format!(
                        "f'' changes sign in ({a}, {u}) with no declared inflection point"
                    )));
                }
            }
            last = Some((u, d));
        }
        Ok(())
    }

    fn detect_average_form(&self) -> AverageForm {
        let pts = self.probe_points();
        let first = (self.ddf)(pts[0]);
        let scale = pts.iter().map(|&u| (self.ddf)(u).abs()).fold(0.0, f64::max);
        let constant = pts
            .iter()
            .all(|&u| ((self.ddf)(u) - first).abs() <= 1e-12 * scale.max(1e-30));
        if constant {
            AverageForm::ClosedForm
        } else {
            AverageForm::Quadrature
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn admissible(&self) -> (f64, f64) {
        self.admissible
    }

    pub fn average_form(&self) -> AverageForm {
        self.average_form
    }

    pub fn inflection_points(&self) -> &[f64] {
        &self.inflection_points
    }

    /// f(u), with the admissible-range check.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !u.is_finite() || u < self.admissible.0 || u > self.admissible.1 {
            return Err(Error::OutOfRange {
                value: u,
                lo: self.admissible.0,
                hi: self.admissible.1,
            });
        }
        Ok((self.f)(u))
    }

    /// Characteristic speed f'(u).
    pub fn speed(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    /// Curvature f''(u).
    pub fn curvature(&self, u: f64) -> f64 {
        (self.ddf)(u)
    }

    pub(crate) fn fval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    /// Inflection points strictly inside the interval, ordered.
    pub fn inflection_points_in(&self, interval: ValueInterval) -> Vec<f64> {
        self.inflection_points
            .iter()
            .copied()
            .filter(|&s| s > interval.lo && s < interval.hi)
            .collect()
    }

    /// First inflection point strictly between two (unordered) values.
    pub(crate) fn inflection_strictly_between(&self, u1: f64, u2: f64) -> Option<f64> {
        let (lo, hi) = (u1.min(u2), u1.max(u2));
        self.inflection_points
            .iter()
            .copied()
            .find(|&s| s > lo && s < hi)
    }

    /// Convexity of f on [lo, hi]. The interval must not strictly contain an
    /// inflection point (endpoints at an inflection value are fine). Regions
    /// where f'' vanishes identically report `Convex`.
    pub fn convexity_on(&self, lo: f64, hi: f64) -> Result<Convexity> {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        if let Some(s) = self.inflection_strictly_between(lo, hi) {
            return Err(Error::ConvexityViolation {
                lo,
                hi,
                inflection: s,
            });
        }
        for frac in [0.5, 0.25, 0.75, 0.1, 0.9] {
            let d = (self.ddf)(lo + frac * (hi - lo));
            if d > 0.0 {
                return Ok(Convexity::Convex);
            }
            if d < 0.0 {
                return Ok(Convexity::Concave);
            }
        }
        Ok(Convexity::Convex)
    }

    /// The nonlinear average a(u1, u2).
    ///
    /// Uses the arithmetic mean for constant-f'' models, otherwise the exact
    /// boundary form; falls back to quadrature of the integral form when the
    /// denominator `[f']` cancels (u1 ≈ u2). The result is clamped into the
    /// closed interval between the arguments.
    pub fn average(&self, u1: f64, u2: f64) -> Result<f64> {
        if let Some(s) = self.inflection_strictly_between(u1, u2) {
            return Err(Error::ConvexityViolation {
                lo: u1.min(u2),
                hi: u1.max(u2),
                inflection: s,
            });
        }
        Ok(self.average_in_region(u1, u2))
    }

    /// Average on an interval already known to be inflection-free.
    pub(crate) fn average_in_region(&self, u1: f64, u2: f64) -> f64 {
        if u1 == u2 {
            return u1;
        }
        match self.average_form {
            AverageForm::ClosedForm => 0.5 * (u1 + u2),
            AverageForm::Quadrature => {
                let (s1, s2) = ((self.df)(u1), (self.df)(u2));
                let den = s2 - s1;
                if den.abs() <= 1e-13 * s1.abs().max(s2.abs()).max(1.0) {
                    self.average_integral(u1, u2)
                } else {
                    let num = s2 * u2 - (self.f)(u2) - (s1 * u1 - (self.f)(u1));
                    clamp_between(num / den, u1, u2)
                }
            }
        }
    }

    /// The average evaluated by adaptive quadrature of the integral form
    /// `∫ f'' u du / ∫ f'' du`. Exposed for cross-validation against the
    /// closed/boundary forms.
    pub fn average_by_quadrature(&self, u1: f64, u2: f64) -> Result<f64> {
        if let Some(s) = self.inflection_strictly_between(u1, u2) {
            return Err(Error::ConvexityViolation {
                lo: u1.min(u2),
                hi: u1.max(u2),
                inflection: s,
            });
        }
        if u1 == u2 {
            return Ok(u1);
        }
        Ok(self.average_integral(u1, u2))
    }

    fn average_integral(&self, u1: f64, u2: f64) -> f64 {
        let num = numerics::integrate(&|u| (self.ddf)(u) * u, u1, u2, 1e-12, 1e-10);
        let den = numerics::integrate(&|u| (self.ddf)(u), u1, u2, 1e-12, 1e-10);
        if den == 0.0 {
            // Degenerate (f'' = 0 on the interval): continuity limit.
            return 0.5 * (u1 + u2);
        }
        clamp_between(num / den, u1, u2)
    }

    /// d/du of a(fixed, u) (equivalently a(u, fixed); `a` is symmetric).
    /// Tends to 1/2 as u -> fixed.
    pub(crate) fn average_partial(&self, fixed: f64, u: f64) -> f64 {
        if self.average_form == AverageForm::ClosedForm {
            return 0.5;
        }
        let d = (self.df)(u) - (self.df)(fixed);
        let scale = (self.df)(u).abs().max((self.df)(fixed).abs()).max(1.0);
        if d.abs() <= 1e-8 * scale {
            return 0.5;
        }
        let a = self.average_in_region(fixed, u);
        (self.ddf)(u) * (u - a) / d
    }

    /// Maximal inflection-free interval containing [lo, hi], bounded by the
    /// neighbouring inflection points and the admissible range.
    pub(crate) fn convex_region_around(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let mut a = self.admissible.0;
        let mut b = self.admissible.1;
        for &s in &self.inflection_points {
            if s <= lo && s > a {
                a = s;
            }
            if s >= hi && s < b {
                b = s;
            }
        }
        (a, b)
    }

    /// Invert f' on an inflection-free interval (f' is strictly monotone
    /// there). Returns an error when `target` is outside the attained range.
    pub(crate) fn speed_inverse_on(&self, target: f64, lo: f64, hi: f64) -> Result<f64> {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let g = |u: f64| ((self.df)(u) - target, (self.ddf)(u));
        let root = numerics::newton_bisect(&g, lo, hi, 0.5 * (lo + hi), 1e-13 * (1.0 + hi - lo), 200)
            .map_err(Error::RootFind)?;
        Ok(numerics::polish_root(&g, lo, hi, root, 2))
    }
}

fn clamp_between(v: f64, a: f64, b: f64) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    v.max(lo).min(hi)
}
