//! Event-driven time advancement: pairwise collision times, the global next
//! event, and exact movement of all particles along characteristics.

use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::state::{Particle, ParticleField};

/// Relative tolerance below which two characteristic speeds count as equal.
const SPEED_TOL: f64 = 1e-14;

/// Relative tolerance for collision-time ties: all pairs this close to the
/// minimum are reported as colliding together.
const TIE_TOL: f64 = 1e-12;

/// The next collision: its time-from-now (infinite when no pair collides)
/// and every adjacent pair achieving it within the tie tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHorizon {
    pub dt: f64,
    pub pairs: Vec<usize>,
}

impl EventHorizon {
    pub fn none() -> Self {
        Self {
            dt: f64::INFINITY,
            pairs: Vec::new(),
        }
    }
}

/// Time until two adjacent particles collide: Δt = -(x2-x1)/(f'(u2)-f'(u1)).
///
/// `None` for pairs whose speeds are equal to tolerance, and for deviating
/// pairs (negative collision time) — including deviating pairs that are
/// momentarily coincident, which separate immediately.
pub fn collision_time(p1: &Particle, p2: &Particle, flux: &FluxModel) -> Option<f64> {
    let s1 = flux.speed(p1.u);
    let s2 = flux.speed(p2.u);
    let d = s2 - s1;
    if d.abs() <= SPEED_TOL * s1.abs().max(s2.abs()).max(1.0) {
        return None;
    }
    if d > 0.0 {
        return None;
    }
    Some((p2.x - p1.x).max(0.0) / -d)
}

/// Minimum collision time over all adjacent pairs, with ties.
pub fn next_event(field: &ParticleField) -> EventHorizon {
    let ps = field.particles();
    let flux = field.flux();
    let mut dt = f64::INFINITY;
    for w in ps.windows(2) {
        if let Some(t) = collision_time(&w[0], &w[1], flux) {
            if t < dt {
                dt = t;
            }
        }
    }
    if !dt.is_finite() {
        return EventHorizon::none();
    }
    let tie = TIE_TOL * dt.max(1.0);
    let mut pairs = Vec::new();
    for (i, w) in ps.windows(2).enumerate() {
        if let Some(t) = collision_time(&w[0], &w[1], flux) {
            if t <= dt + tie {
                pairs.push(i);
            }
        }
    }
    EventHorizon { dt, pairs }
}

/// Move every particle by f'(u)·dt and advance the clock. Values are
/// untouched, so the interpolated solution stays exact. `dt` must not exceed
/// the next collision time; pairs that land coincident (up to rounding) are
/// snapped to their common midpoint.
pub fn advance(field: &mut ParticleField, dt: f64) -> Result<()> {
    if !(dt >= 0.0) {
        return Err(Error::Precondition(format!("negative time step {dt}")));
    }
    if dt == 0.0 {
        return Ok(());
    }
    let horizon = next_event(field);
    if dt > horizon.dt * (1.0 + 1e-12) {
        return Err(Error::Overshoot {
            dt,
            dt_max: horizon.dt,
        });
    }
    let flux = field.flux().clone();
    for p in field.particles_mut() {
        p.x += flux.speed(p.u) * dt;
    }
    field.t += dt;

    // Colliding pairs reach identical positions only up to rounding; snap
    // sub-tolerance inversions so downstream gap tests see exact zeros.
    let ps = field.particles_mut();
    for i in 0..ps.len().saturating_sub(1) {
        let (a, b) = (ps[i].x, ps[i + 1].x);
        if b < a {
            let tol = 1e-12 * a.abs().max(b.abs()).max(1.0);
            if a - b <= tol {
                let mid = 0.5 * (a + b);
                ps[i].x = mid;
                ps[i + 1].x = mid;
            } else {
                return Err(Error::Domain(format!(
                    "ordering broken after advance at pair {i}: {a} > {b}"
                )));
            }
        }
    }
    Ok(())
}
