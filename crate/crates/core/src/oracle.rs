//! Independent reference solutions used only for validation: a first-order
//! Godunov finite-volume scheme (optionally a MUSCL-limited local
//! Lax-Friedrichs variant) on a fine grid, and closed-form similarity
//! solutions of convex-flux Riemann problems.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{GridConvention, GridFunction};
use crate::error::{Error, Result};
use crate::flux::{FluxModel, ValueInterval};
use crate::numerics;
use crate::state::InitialCondition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericalFlux {
    /// Exact Riemann flux for scalar laws via the min/max formula over the
    /// interface interval; valid for non-convex fluxes. First order.
    Godunov,
    /// Local Lax-Friedrichs with minmod-limited MUSCL reconstruction.
    /// Second order in space, forward Euler in time; experimental and used
    /// only as the coarse comparison scheme.
    LocalLaxFriedrichs,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FvConfig {
    pub cells: usize,
    pub cfl: f64,
    pub numerical_flux: NumericalFlux,
    pub domain: ValueInterval,
}

impl FvConfig {
    fn validate(&self) -> Result<()> {
        if self.cells < 10 {
            return Err(Error::Config(format!(
                "finite-volume grid needs at least 10 cells, got {}",
                self.cells
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("CFL must be in (0, 1], got {}", self.cfl)));
        }
        if !(self.domain.lo < self.domain.hi) {
            return Err(Error::Config("empty finite-volume domain".into()));
        }
        Ok(())
    }
}

const PAR_THRESHOLD: usize = 4096;

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Values of f at interior critical points of f' (used by the Godunov
/// min/max formula), precomputed once per run.
struct CriticalPoints {
    us: Vec<f64>,
    fs: Vec<f64>,
}

impl CriticalPoints {
    fn scan(flux: &FluxModel, lo: f64, hi: f64) -> Self {
        let mut us = Vec::new();
        if hi > lo {
            let n = 512;
            let mut prev_u = lo;
            let mut prev_s = flux.speed(lo);
            for j in 1..=n {
                let u = lo + (hi - lo) * j as f64 / n as f64;
                let s = flux.speed(u);
                if prev_s == 0.0 {
                    us.push(prev_u);
                } else if prev_s.signum() != s.signum() && s != 0.0 {
                    if let Ok(c) =
                        numerics::bisect(&|v| flux.speed(v), prev_u, u, 1e-14 * (hi - lo))
                    {
                        us.push(c);
                    }
                }
                prev_u = u;
                prev_s = s;
            }
        }
        let fs = us.iter().map(|&u| flux.fval(u)).collect();
        Self { us, fs }
    }

    /// Godunov flux from precomputed endpoint flux values: the min (max) of
    /// f over the interface interval is attained at an endpoint or at an
    /// interior critical point of f.
    fn godunov(&self, ul: f64, ur: f64, fl: f64, fr: f64) -> f64 {
        let want_min = ul <= ur;
        let (lo, hi) = if want_min { (ul, ur) } else { (ur, ul) };
        let mut best = if want_min { fl.min(fr) } else { fl.max(fr) };
        for (u, fu) in self.us.iter().zip(&self.fs) {
            if *u > lo && *u < hi {
                best = if want_min { best.min(*fu) } else { best.max(*fu) };
            }
        }
        best
    }
}

/// Largest characteristic speed attained anywhere in the value hull: f' is
/// stationary only at inflection points, so the maximum sits at a hull
/// endpoint or an interior inflection value. Required for a correct CFL
/// bound on non-convex fluxes, where interface Riemann fans visit values
/// faster than any cell average.
fn hull_max_speed(flux: &FluxModel, lo: f64, hi: f64) -> f64 {
    let mut s = flux.speed(lo).abs().max(flux.speed(hi).abs());
    for &star in flux.inflection_points() {
        if star > lo && star < hi {
            s = s.max(flux.speed(star).abs());
        }
    }
    s
}

/// Forward-Euler finite-volume solve with snapshots at several times.
/// `times` must be sorted and nonnegative; one cell-average grid function is
/// returned per requested time.
pub fn fv_solve_at_times(
    ic: &InitialCondition,
    flux: &FluxModel,
    cfg: &FvConfig,
    times: &[f64],
) -> Result<Vec<GridFunction>> {
    cfg.validate()?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(Error::Config("snapshot times must be sorted and >= 0".into()));
    }
    let n = cfg.cells;
    let dx = cfg.domain.length() / n as f64;
    let centers: Vec<f64> = (0..n)
        .map(|i| cfg.domain.lo + (i as f64 + 0.5) * dx)
        .collect();
    // Project the initial data onto cell averages (adaptive quadrature
    // resolves jumps landing inside a cell).
    let mut u: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = cfg.domain.lo + i as f64 * dx;
            numerics::integrate(&|x| ic.eval(x), a, a + dx, 1e-13 * dx, 1e-12) / dx
        })
        .collect();
    let (adm_lo, adm_hi) = flux.admissible();
    for &v in &u {
        if !v.is_finite() || v < adm_lo || v > adm_hi {
            return Err(Error::OutOfRange {
                value: v,
                lo: adm_lo,
                hi: adm_hi,
            });
        }
    }

    let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &u {
        umin = umin.min(v);
        umax = umax.max(v);
    }
    let crits = CriticalPoints::scan(flux, umin, umax);

    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0f64;
    let mut fluxes = vec![0.0f64; n + 1];
    let mut fvals = vec![0.0f64; n];
    for &target in times {
        while t < target {
            let (lo, hi) = if n >= PAR_THRESHOLD {
                u.par_iter().fold(
                    || (f64::INFINITY, f64::NEG_INFINITY),
                    |(a, b), &v| (a.min(v), b.max(v)),
                )
                .reduce(
                    || (f64::INFINITY, f64::NEG_INFINITY),
                    |(a, b), (c, d)| (a.min(c), b.max(d)),
                )
            } else {
                u.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                        (a.min(v), b.max(v))
                    })
            };
            let smax = hull_max_speed(flux, lo, hi);
            let mut dt = if smax > 0.0 {
                cfg.cfl * dx / smax
            } else {
                target - t
            };
            if t + dt > target {
                dt = target - t;
            }
            let ratio = dt * smax / dx;
            if ratio > 1.0 + 1e-9 {
                return Err(Error::CflViolation { ratio, t });
            }
            step(flux, cfg.numerical_flux, &crits, &u, &mut fvals, &mut fluxes);
            let lambda = dt / dx;
            if n >= PAR_THRESHOLD {
                u.par_iter_mut().enumerate().for_each(|(i, v)| {
                    *v -= lambda * (fluxes[i + 1] - fluxes[i]);
                });
            } else {
                for (i, v) in u.iter_mut().enumerate() {
                    *v -= lambda * (fluxes[i + 1] - fluxes[i]);
                }
            }
            t += dt;
        }
        out.push(GridFunction::new(
            centers.clone(),
            u.clone(),
            GridConvention::CellAverage,
        )?);
    }
    Ok(out)
}

/// Cell averages at `t_end`; see [`fv_solve_at_times`].
pub fn fv_solve(
    ic: &InitialCondition,
    flux: &FluxModel,
    cfg: &FvConfig,
    t_end: f64,
) -> Result<GridFunction> {
    if t_end < 0.0 {
        return Err(Error::Config(format!("negative end time {t_end}")));
    }
    Ok(fv_solve_at_times(ic, flux, cfg, &[t_end])?
        .pop()
        .expect("one snapshot requested"))
}

/// Interface fluxes with zero-gradient ghost cells. fluxes[i] sits between
/// cells i-1 and i.
fn step(
    flux: &FluxModel,
    scheme: NumericalFlux,
    crits: &CriticalPoints,
    u: &[f64],
    fvals: &mut [f64],
    fluxes: &mut [f64],
) {
    let n = u.len();
    let cell = |i: isize| -> f64 {
        if i < 0 {
            u[0]
        } else if i as usize >= n {
            u[n - 1]
        } else {
            u[i as usize]
        }
    };
    match scheme {
        NumericalFlux::Godunov => {
            // One flux evaluation per cell, shared by both interfaces.
            if n >= PAR_THRESHOLD {
                fvals
                    .par_iter_mut()
                    .zip(u.par_iter())
                    .for_each(|(f, &v)| *f = flux.fval(v));
            } else {
                for (f, &v) in fvals.iter_mut().zip(u.iter()) {
                    *f = flux.fval(v);
                }
            }
            let fcell = |i: isize| -> f64 {
                if i < 0 {
                    fvals[0]
                } else if i as usize >= n {
                    fvals[n - 1]
                } else {
                    fvals[i as usize]
                }
            };
            let compute = |i: usize| -> f64 {
                let i = i as isize;
                crits.godunov(cell(i - 1), cell(i), fcell(i - 1), fcell(i))
            };
            if n >= PAR_THRESHOLD {
                fluxes
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(i, f)| *f = compute(i));
            } else {
                for (i, f) in fluxes.iter_mut().enumerate() {
                    *f = compute(i);
                }
            }
        }
        NumericalFlux::LocalLaxFriedrichs => {
            let compute = |i: usize| -> f64 {
                let i = i as isize;
                // MUSCL values on both sides of the interface.
                let sl = 0.5 * minmod(cell(i - 1) - cell(i - 2), cell(i) - cell(i - 1));
                let sr = 0.5 * minmod(cell(i) - cell(i - 1), cell(i + 1) - cell(i));
                let ul = cell(i - 1) + sl;
                let ur = cell(i) - sr;
                let alpha = flux.speed(ul).abs().max(flux.speed(ur).abs());
                0.5 * (flux.fval(ul) + flux.fval(ur)) - 0.5 * alpha * (ur - ul)
            };
            if n >= PAR_THRESHOLD {
                fluxes
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(i, f)| *f = compute(i));
            } else {
                for (i, f) in fluxes.iter_mut().enumerate() {
                    *f = compute(i);
                }
            }
        }
    }
}

/// Self-similar solution u(x/t) of the Riemann problem with left state
/// `u_l` and right state `u_r`, valid when the flux has no inflection point
/// between the states: a shock when characteristics converge, otherwise a
/// rarefaction fan through (f')⁻¹.
pub fn exact_riemann(flux: &FluxModel, u_l: f64, u_r: f64, x_over_t: f64) -> Result<f64> {
    if u_l == u_r {
        return Ok(u_l);
    }
    if let Some(s) = flux.inflection_strictly_between(u_l, u_r) {
        return Err(Error::Unsupported(format!(
            "states straddle the inflection point {s}; use the finite-volume oracle"
        )));
    }
    let sl = flux.speed(u_l);
    let sr = flux.speed(u_r);
    if sl > sr {
        // Shock at the Rankine-Hugoniot speed.
        let s = (flux.fval(u_l) - flux.fval(u_r)) / (u_l - u_r);
        Ok(if x_over_t < s { u_l } else { u_r })
    } else if sr > sl {
        if x_over_t <= sl {
            Ok(u_l)
        } else if x_over_t >= sr {
            Ok(u_r)
        } else {
            flux.speed_inverse_on(x_over_t, u_l.min(u_r), u_l.max(u_r))
        }
    } else {
        // Equal speeds with distinct states: degenerate (linear flux);
        // the jump is simply advected.
        Ok(if x_over_t < sl { u_l } else { u_r })
    }
}
