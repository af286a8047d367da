//! Conservative particle management: insertion into oversized expanding
//! gaps, merging of colliding pairs with TVD and entropy safeguards, the
//! five-particle merge around inflection particles, and the postprocessing
//! step that replaces merged particles by area-preserving jumps.
//!
//! Everything here manipulates areas through the nonlinear average, so each
//! operation conserves the integral of the solution to rounding.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::interpolation::{segment, Segment};
use crate::numerics;
use crate::state::{Particle, ParticleField};

const SPEED_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
pub struct ManagementConfig {
    pub d_max: f64,
    pub d_min: f64,
    /// Relative tolerance on the merged value u23.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub entropy_fix_enabled: bool,
    /// Bound on entropy-fix insertion rounds per merge.
    pub max_fix_rounds: usize,
}

impl ManagementConfig {
    pub fn new(d_max: f64, d_min: f64) -> Self {
        Self {
            d_max,
            d_min,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            entropy_fix_enabled: true,
            max_fix_rounds: 8,
        }
    }

    pub fn from_field(field: &ParticleField) -> Self {
        Self::new(field.d_max, field.d_min)
    }
}

/// Result of solving the merge condition for a colliding pair, before the
/// field is mutated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeOutcome {
    pub x: f64,
    pub u: f64,
    pub removed: (usize, usize),
    /// The sufficient condition keeping u23 between the pair values held.
    pub tv_safe: bool,
    /// The shock-resolution condition for entropy-safe merging held.
    pub entropy_safe: bool,
}

/// One management event, serialized as a JSON line in the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventRecord {
    Insert {
        t: f64,
        index: usize,
        x: f64,
        u: f64,
    },
    Merge {
        t: f64,
        index: usize,
        x: f64,
        u: f64,
        tv_safe: bool,
        entropy_safe: bool,
    },
    InflectionMerge {
        t: f64,
        index: usize,
        step: u8,
        x: f64,
        u: f64,
    },
    FixRetry {
        t: f64,
        index: usize,
        round: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EventCounts {
    pub inserts: usize,
    pub merges: usize,
    pub inflection_merges: usize,
    pub fix_retries: usize,
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: EventRecord) {
        self.records.push(r);
    }

    pub fn counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for r in &self.records {
            match r {
                EventRecord::Insert { .. } => c.inserts += 1,
                EventRecord::Merge { .. } => c.merges += 1,
                EventRecord::InflectionMerge { .. } => c.inflection_merges += 1,
                EventRecord::FixRetry { .. } => c.fix_retries += 1,
            }
        }
        c
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::Config(format!("event serialization: {e}")))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn speeds_equal(s1: f64, s2: f64) -> bool {
    (s2 - s1).abs() <= SPEED_TOL * s1.abs().max(s2.abs()).max(1.0)
}

fn is_deviating(l: &Particle, r: &Particle, flux: &FluxModel) -> bool {
    let (s1, s2) = (flux.speed(l.u), flux.speed(r.u));
    !speeds_equal(s1, s2) && s2 > s1
}

fn is_converging(l: &Particle, r: &Particle, flux: &FluxModel) -> bool {
    let (s1, s2) = (flux.speed(l.u), flux.speed(r.u));
    !speeds_equal(s1, s2) && s1 > s2
}

/// The midpoint-on-interpolant particle for segment (i, i+1).
fn insertion_particle(field: &ParticleField, i: usize) -> Result<Particle> {
    let l = *field.particle(i);
    let r = *field.particle(i + 1);
    let xm = 0.5 * (l.x + r.x);
    let um = if l.u == r.u {
        l.u
    } else {
        segment(field, i).u_of_x(xm)?
    };
    Ok(field.make_particle(xm, um))
}

/// Insert a new particle at the x-midpoint of segment (i, i+1), on the
/// conservative interpolant. The interpolant through the three resulting
/// points is pointwise identical to the original, so areas of both halves
/// sum exactly to the original segment area and the total variation is
/// unchanged.
pub fn insert_between(
    field: &mut ParticleField,
    i: usize,
    _cfg: &ManagementConfig,
    log: &mut EventLog,
) -> Result<()> {
    let l = *field.particle(i);
    let r = *field.particle(i + 1);
    if is_converging(&l, &r, field.flux()) {
        return Err(Error::Precondition(
            "insertion into a converging pair".into(),
        ));
    }
    let p = insertion_particle(field, i)?;
    field.insert_particle(i + 1, p);
    log.push(EventRecord::Insert {
        t: field.t,
        index: i + 1,
        x: p.x,
        u: p.u,
    });
    Ok(())
}

/// Constant-extension stand-in for a missing outer neighbour, consistent
/// with the outflow boundary convention.
fn virtual_left(of: &Particle, d: f64) -> Particle {
    Particle::new(of.x - d, of.u)
}

fn virtual_right(of: &Particle, d: f64) -> Particle {
    Particle::new(of.x + d, of.u)
}

/// Solve the merge condition for the pair (i, i+1): the new particle sits at
/// the pair's x-midpoint and its value is chosen so that the area between
/// the outer neighbours is unchanged,
///
/// ```text
/// (x23-x1) a(u1,u23) + (x4-x23) a(u23,u4)
///     = (x2-x1) a(u1,u2) + (x3-x2) a(u2,u3) + (x4-x3) a(u3,u4)
/// ```
///
/// by Newton iteration from (u2+u3)/2, safeguarded by bisection on the hull
/// of the four stencil values (where the left side is strictly monotone).
/// Does not mutate the field.
pub fn merge_value(
    field: &ParticleField,
    i: usize,
    cfg: &ManagementConfig,
) -> Result<MergeOutcome> {
    if i + 1 >= field.len() {
        return Err(Error::Precondition(format!(
            "pair index {i} out of range for {} particles",
            field.len()
        )));
    }
    let p2 = *field.particle(i);
    let p3 = *field.particle(i + 1);
    let p1 = if i > 0 {
        *field.particle(i - 1)
    } else {
        virtual_left(&p2, cfg.d_max)
    };
    let p4 = if i + 2 < field.len() {
        *field.particle(i + 2)
    } else {
        virtual_right(&p3, cfg.d_max)
    };
    let flux = field.flux();
    if is_deviating(&p2, &p3, flux) {
        return Err(Error::Precondition(
            "merge of a deviating pair".into(),
        ));
    }
    let quad = [p1, p2, p3, p4];
    let (x23, u23) = solve_merge_value(&quad, flux, cfg, i)?;
    let lo = quad.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
    let hi = quad.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
    let convexity = flux.convexity_on(lo, hi)?;
    // A coincident pair sharing its position with a neighbour sits on a
    // vertical segment; the merge then removes an interior point of that
    // segment and leaves the interpolant pointwise unchanged, so it is
    // exactly entropy- and TV-preserving no matter what the resolution
    // formula says. Simultaneous multi-particle collisions (sawtooth data)
    // produce exactly these configurations.
    let pointwise_exact = p2.x == p3.x && (p1.x == p2.x || p3.x == p4.x);
    Ok(MergeOutcome {
        x: x23,
        u: u23,
        removed: (i, i + 1),
        tv_safe: tvd_safety_check(&quad, flux) || pointwise_exact,
        entropy_safe: entropy_check(p1.u, u23, p4.u, convexity) || pointwise_exact,
    })
}

fn solve_merge_value(
    quad: &[Particle; 4],
    flux: &Arc<FluxModel>,
    cfg: &ManagementConfig,
    index: usize,
) -> Result<(f64, f64)> {
    let [p1, p2, p3, p4] = quad;
    let x23 = 0.5 * (p2.x + p3.x);
    if p2.u == p3.u {
        return Ok((x23, p2.u));
    }
    let lo = quad.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
    let hi = quad.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
    if let Some(s) = flux.inflection_strictly_between(lo, hi) {
        return Err(Error::ConvexityViolation {
            lo,
            hi,
            inflection: s,
        });
    }
    let a12 = flux.average_in_region(p1.u, p2.u);
    let a23 = flux.average_in_region(p2.u, p3.u);
    let a34 = flux.average_in_region(p3.u, p4.u);
    let rhs = (p2.x - p1.x) * a12 + (p3.x - p2.x) * a23 + (p4.x - p3.x) * a34;
    let wl = x23 - p1.x;
    let wr = p4.x - x23;
    if wl + wr == 0.0 {
        // Fully degenerate stencil (all positions coincident): the area
        // condition is vacuous; keep the pair's own average.
        return Ok((x23, a23));
    }
    let g = |u: f64| {
        let val = wl * flux.average_in_region(p1.u, u) + wr * flux.average_in_region(u, p4.u) - rhs;
        let d = wl * flux.average_partial(p1.u, u) + wr * flux.average_partial(p4.u, u);
        (val, d)
    };
    let tol = cfg.newton_tol * p2.u.abs().max(p3.u.abs()).max(1.0);
    let guess = 0.5 * (p2.u + p3.u);
    let u23 = numerics::newton_bisect(&g, lo, hi, guess, tol, cfg.newton_max_iter.max(1))
        .map_err(|e| Error::MergeInfeasible {
            index,
            reason: e,
        })?;
    let u23 = numerics::polish_root(&g, lo, hi, u23, 3);
    Ok((x23, u23.max(lo).min(hi)))
}

/// Sufficient condition for the merged value to land between the pair
/// values (and hence for the merge to be TVD):
///
/// ```text
/// (x3-x2)/|u3-u2| <= 1/16 (min|f''| / max|f''|)^6
///                    * min(x4-x2, x3-x1) / |max(u2,u3) - min(u1,u4)|
/// ```
///
/// with min/max of f'' over the hull of the four values. Holds trivially
/// for coincident or equal-valued pairs.
pub fn tvd_safety_check(quad: &[Particle; 4], flux: &FluxModel) -> bool {
    let [p1, p2, p3, p4] = quad;
    if p2.x == p3.x || p2.u == p3.u {
        return true;
    }
    let lo = quad.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
    let hi = quad.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
    let n = 256;
    let mut mn = f64::INFINITY;
    let mut mx: f64 = 0.0;
    for j in 0..=n {
        let u = lo + (hi - lo) * j as f64 / n as f64;
        let c = flux.curvature(u).abs();
        mn = mn.min(c);
        mx = mx.max(c);
    }
    let ratio = if mx == 0.0 { 1.0 } else { mn / mx };
    let lhs = (p3.x - p2.x) / (p3.u - p2.u).abs();
    let denom = (p2.u.max(p3.u) - p1.u.min(p4.u)).abs();
    let rhs = (1.0 / 16.0) * ratio.powi(6) * (p4.x - p2.x).min(p3.x - p1.x) / denom;
    lhs <= rhs
}

/// Shock-resolution condition for entropy-safe merging: for convex flux (where
/// u2 > u3 at a shock) the merged value must satisfy u1 >= u23 >= u4; all
/// inequalities reverse for concave flux. A rounding-level slack keeps
/// exactly-flat shock flanks from flapping.
pub fn entropy_check(u1: f64, u23: f64, u4: f64, convexity: crate::flux::Convexity) -> bool {
    let slack = 1e-12 * (1.0 + u1.abs().max(u23.abs()).max(u4.abs()));
    match convexity {
        crate::flux::Convexity::Convex => u1 >= u23 - slack && u23 >= u4 - slack,
        crate::flux::Convexity::Concave => u1 <= u23 + slack && u23 <= u4 + slack,
    }
}

/// Merge the colliding pair (i, i+1), enforcing the entropy condition a
/// posteriori: a merge whose value fails the resolution condition is
/// rejected, midpoint particles are inserted into the two flanking segments,
/// and the merge is re-attempted with the closer neighbours. Pairs involving
/// an inflection particle are routed to [`inflection_merge`].
pub fn merge_with_fix(
    field: &mut ParticleField,
    i: usize,
    cfg: &ManagementConfig,
    log: &mut EventLog,
) -> Result<()> {
    let l = *field.particle(i);
    let r = *field.particle(i + 1);
    if l.is_inflection && r.is_inflection {
        return Err(Error::Unsupported(
            "interaction of two inflection particles".into(),
        ));
    }
    if l.is_inflection || r.is_inflection {
        return inflection_merge(field, i, cfg, log);
    }

    let mut i = i;
    let mut round = 0usize;
    loop {
        match merge_value(field, i, cfg) {
            Ok(out) => {
                if out.entropy_safe || !cfg.entropy_fix_enabled {
                    let mut p = field.make_particle(out.x, out.u);
                    p.merged_origin = true;
                    field.set_particle(i, p);
                    field.remove_particle(i + 1);
                    log.push(EventRecord::Merge {
                        t: field.t,
                        index: i,
                        x: out.x,
                        u: out.u,
                        tv_safe: out.tv_safe,
                        entropy_safe: out.entropy_safe,
                    });
                    return Ok(());
                }
            }
            Err(Error::MergeInfeasible { .. }) => {}
            Err(e) => return Err(e),
        }
        if round >= cfg.max_fix_rounds {
            return Err(Error::UnresolvedMerge {
                index: i,
                rounds: round,
            });
        }
        log.push(EventRecord::FixRetry {
            t: field.t,
            index: i,
            round,
        });
        let mut progressed = false;
        if i > 0 && field.particle(i - 1).x < field.particle(i).x {
            let p = insertion_particle(field, i - 1)?;
            field.insert_particle(i, p);
            log.push(EventRecord::Insert {
                t: field.t,
                index: i,
                x: p.x,
                u: p.u,
            });
            i += 1;
            progressed = true;
        }
        if i + 2 < field.len() && field.particle(i + 1).x < field.particle(i + 2).x {
            let p = insertion_particle(field, i + 1)?;
            field.insert_particle(i + 2, p);
            log.push(EventRecord::Insert {
                t: field.t,
                index: i + 2,
                x: p.x,
                u: p.u,
            });
            progressed = true;
        }
        if !progressed {
            return Err(Error::UnresolvedMerge {
                index: i,
                rounds: round + 1,
            });
        }
        round += 1;
    }
}

/// Merge a colliding pair in which exactly one member is an inflection
/// particle. The inflection particle must survive, so five neighbours take
/// part and one of three successive repositioning steps is applied; each
/// conserves the area over the five-particle window exactly and removes one
/// particle.
///
/// The implementation works on a canonical view in which the inflection
/// particle is the right member of the pair; the mirrored orientation is
/// handled by reflecting positions, under which the area conditions are
/// invariant.
pub fn inflection_merge(
    field: &mut ParticleField,
    i: usize,
    cfg: &ManagementConfig,
    log: &mut EventLog,
) -> Result<()> {
    if i + 1 >= field.len() {
        return Err(Error::Precondition(format!(
            "pair index {i} out of range for {} particles",
            field.len()
        )));
    }
    let pl = *field.particle(i);
    let pr = *field.particle(i + 1);
    match (pl.is_inflection, pr.is_inflection) {
        (true, true) => {
            return Err(Error::Unsupported(
                "interaction of two inflection particles".into(),
            ))
        }
        (false, false) => {
            return Err(Error::Precondition(
                "inflection merge on a pair without an inflection particle".into(),
            ))
        }
        _ => {}
    }
    let flux = field.flux().clone();
    if !is_converging(&pl, &pr, &flux) {
        return Err(Error::Precondition("pair is not colliding".into()));
    }
    let mirror = pl.is_inflection;

    // Canonical slots 0..=4 index the five-particle stencil: the colliding
    // pair is (slot 1, slot 2) and slot 2 is the inflection particle.
    let len = field.len() as isize;
    let slot_field_index = |k: usize| -> isize {
        if mirror {
            i as isize + 2 - k as isize
        } else {
            i as isize - 1 + k as isize
        }
    };
    let view = |p: Particle| -> Particle {
        if mirror {
            Particle { x: -p.x, ..p }
        } else {
            p
        }
    };

    let mut idx: [Option<usize>; 5] = [None; 5];
    let mut q: [Particle; 5] = [Particle::new(0.0, 0.0); 5];
    for k in 0..5 {
        let j = slot_field_index(k);
        if j >= 0 && j < len {
            idx[k] = Some(j as usize);
            q[k] = view(*field.particle(j as usize));
        }
    }
    debug_assert!(idx[1].is_some() && idx[2].is_some());
    debug_assert!(q[2].is_inflection);
    if idx[0].is_none() {
        q[0] = virtual_left(&q[1], cfg.d_max);
    }
    if idx[3].is_none() {
        q[3] = virtual_right(&q[2], cfg.d_max);
    }
    if idx[4].is_none() {
        q[4] = virtual_right(&q[3], cfg.d_max);
    }

    let (x1, x2, x3, x4, x5) = (q[0].x, q[1].x, q[2].x, q[3].x, q[4].x);
    let (u1, u2, u3, u4, u5) = (q[0].u, q[1].u, q[2].u, q[3].u, q[4].u);
    let a12 = flux.average(u1, u2)?;
    let a23 = flux.average(u2, u3)?;
    let a13 = flux.average(u1, u3)?;
    let a34 = flux.average(u3, u4)?;
    let xtol = 1e-12 * x1.abs().max(x5.abs()).max(1.0);
    let c1 = (x2 - x1) * a12 + (x3 - x2) * a23 + (x4 - x3) * a34;

    // Step 1: remove the non-inflection pair member, shift the inflection
    // particle to xi in [x2, x4].
    let den1 = a13 - a34;
    if den1.abs() > 1e-12 * (a13.abs() + a34.abs() + 1.0) {
        let xi = (c1 + x1 * a13 - x4 * a34) / den1;
        if xi >= x2 - xtol && xi <= x4 + xtol {
            let xi = xi.max(x2).min(x4);
            return apply_inflection(field, &idx, mirror, &[(2, xi, u3)], 1, 1, i, log);
        }
    }

    let a45 = flux.average(u4, u5)?;
    let c2 = c1 + (x5 - x4) * a45;

    // Step 2: remove the pair member, shift the inflection particle and its
    // far-side neighbour together to xi in [x4, x5].
    if idx[3].is_some() {
        let den2 = a13 - a45;
        if den2.abs() > 1e-12 * (a13.abs() + a45.abs() + 1.0) {
            let xi = (c2 + x1 * a13 - x5 * a45) / den2;
            if xi >= x4 - xtol && xi <= x5 + xtol {
                let xi = xi.max(x4).min(x5);
                return apply_inflection(
                    field,
                    &idx,
                    mirror,
                    &[(2, xi, u3), (3, xi, u4)],
                    1,
                    2,
                    i,
                    log,
                );
            }
        }
    }

    // Step 3: remove the far-side neighbour instead, shift the inflection
    // particle to x5 and solve for the pair member's new value.
    if idx[3].is_none() || idx[4].is_none() {
        return Err(Error::Unsupported(
            "inflection merge fallback needs real far-side neighbours".into(),
        ));
    }
    let wl = x2 - x1;
    let wr = x5 - x2;
    let lo_hull = u1.min(u2).min(u3);
    let hi_hull = u1.max(u2).max(u3);
    let (mut rlo, mut rhi) = flux.convex_region_around(lo_hull, hi_hull);
    let pad = 10.0 * (hi_hull - lo_hull + 1.0);
    rlo = rlo.max(lo_hull - pad);
    rhi = rhi.min(hi_hull + pad);
    let g = |u: f64| {
        let val = wl * flux.average_in_region(u1, u) + wr * flux.average_in_region(u, u3) - c2;
        let d = wl * flux.average_partial(u1, u) + wr * flux.average_partial(u3, u);
        (val, d)
    };
    let tol = cfg.newton_tol * (u2.abs().max(1.0));
    let u2p = numerics::newton_bisect(&g, rlo, rhi, u2, tol, 200).map_err(|e| {
        Error::MergeInfeasible {
            index: i,
            reason: format!("inflection merge step 3: {e}"),
        }
    })?;
    let u2p = numerics::polish_root(&g, rlo, rhi, u2p, 3);
    apply_inflection(
        field,
        &idx,
        mirror,
        &[(1, x2, u2p), (2, x5, u3)],
        3,
        3,
        i,
        log,
    )
}

#[allow(clippy::too_many_arguments)]
fn apply_inflection(
    field: &mut ParticleField,
    idx: &[Option<usize>; 5],
    mirror: bool,
    updates: &[(usize, f64, f64)],
    remove_slot: usize,
    step: u8,
    pair_index: usize,
    log: &mut EventLog,
) -> Result<()> {
    let mut inflection_after = (f64::NAN, f64::NAN);
    for &(slot, x, u) in updates {
        let j = idx[slot].ok_or_else(|| {
            Error::Unsupported("inflection merge would move a virtual boundary particle".into())
        })?;
        let real_x = if mirror { -x } else { x };
        let mut p = *field.particle(j);
        p.x = real_x;
        p.u = u;
        p.is_inflection = field.flux().inflection_points().contains(&u);
        field.set_particle(j, p);
        if slot == 2 {
            inflection_after = (real_x, u);
        }
    }
    let j = idx[remove_slot].ok_or_else(|| {
        Error::Unsupported("inflection merge would remove a virtual boundary particle".into())
    })?;
    field.remove_particle(j);
    log.push(EventRecord::InflectionMerge {
        t: field.t,
        index: pair_index,
        step,
        x: inflection_after.0,
        u: inflection_after.1,
    });
    Ok(())
}

/// One full management pass: first insert midpoint particles into every
/// deviating gap wider than d_max (repeatedly, until none remains), then
/// merge every colliding pair with gap at most d_min (plus a rounding
/// allowance for pairs landed coincident by the event step), left to right.
pub fn management_pass(
    field: &mut ParticleField,
    cfg: &ManagementConfig,
    log: &mut EventLog,
) -> Result<()> {
    let mut i = 0;
    while i + 1 < field.len() {
        let l = *field.particle(i);
        let r = *field.particle(i + 1);
        if r.x - l.x > cfg.d_max && is_deviating(&l, &r, field.flux()) {
            insert_between(field, i, cfg, log)?;
            // Re-examine the left half of the split gap.
        } else {
            i += 1;
        }
    }
    loop {
        let mut pair = None;
        for i in 0..field.len().saturating_sub(1) {
            let l = field.particle(i);
            let r = field.particle(i + 1);
            let tol = cfg.d_min + 1e-12 * l.x.abs().max(r.x.abs()).max(1.0);
            if r.x - l.x <= tol && is_converging(l, r, field.flux()) {
                pair = Some(i);
                break;
            }
        }
        match pair {
            Some(i) => merge_with_fix(field, i, cfg, log)?,
            None => return Ok(()),
        }
    }
}

/// A plottable, evaluable piecewise solution: nodes connected by the
/// conservative interpolant, with coincident-x node pairs representing
/// jumps.
#[derive(Debug, Clone)]
pub struct PiecewiseSolution {
    nodes: Vec<(f64, f64)>,
    flux: Arc<FluxModel>,
    /// Field indices of merged particles that could not be reconstructed
    /// (overlapping clusters or infeasible extensions); they were kept in
    /// place unchanged.
    pub unreconstructed: Vec<usize>,
}

impl PiecewiseSolution {
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn flux(&self) -> &Arc<FluxModel> {
        &self.flux
    }

    /// Jump discontinuities as (x, u_left, u_right).
    pub fn jumps(&self) -> Vec<(f64, f64, f64)> {
        self.nodes
            .windows(2)
            .filter(|w| w[0].0 == w[1].0 && w[0].1 != w[1].1)
            .map(|w| (w[0].0, w[0].1, w[1].1))
            .collect()
    }

    pub fn support(&self) -> (f64, f64) {
        if self.nodes.is_empty() {
            (0.0, 0.0)
        } else {
            (self.nodes[0].0, self.nodes[self.nodes.len() - 1].0)
        }
    }

    /// Evaluate at x; constant extension outside the support, left limit at
    /// jumps.
    pub fn eval(&self, x: f64) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        if x <= self.nodes[0].0 {
            return self.nodes[0].1;
        }
        let last = self.nodes.len() - 1;
        if x >= self.nodes[last].0 {
            return self.nodes[last].1;
        }
        // First piece whose right endpoint reaches x.
        let k = self.nodes.partition_point(|n| n.0 < x);
        let (l, r) = (self.nodes[k - 1], self.nodes[k]);
        if l.0 == r.0 {
            return l.1;
        }
        let seg = Segment::unchecked(
            Particle::new(l.0, l.1),
            Particle::new(r.0, r.1),
            &self.flux,
        );
        seg.u_of_x(x)
            .unwrap_or_else(|_| l.1 + (x - l.0) / (r.0 - l.0) * (r.1 - l.1))
    }

    /// Ordered polyline through all pieces, uniform in u per piece.
    pub fn sample(&self, points_per_piece: usize) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let push = |p: (f64, f64), out: &mut Vec<(f64, f64)>| {
            if out.last() != Some(&p) {
                out.push(p);
            }
        };
        for w in self.nodes.windows(2) {
            let (l, r) = (w[0], w[1]);
            if l.1 == r.1 || l.0 == r.0 {
                push(l, &mut out);
                push(r, &mut out);
                continue;
            }
            let seg = Segment::unchecked(
                Particle::new(l.0, l.1),
                Particle::new(r.0, r.1),
                &self.flux,
            );
            let n = points_per_piece.max(2);
            for j in 0..n {
                let u = if j == 0 {
                    l.1
                } else if j == n - 1 {
                    r.1
                } else {
                    let frac = j as f64 / (n - 1) as f64;
                    (l.1 + frac * (r.1 - l.1)).clamp(l.1.min(r.1), l.1.max(r.1))
                };
                if let Ok(x) = seg.x_of_u(u) {
                    push((x, u), &mut out);
                }
            }
        }
        out
    }
}

/// Interpolant of a segment extended beyond its endpoints, used to rebuild
/// the outer smooth solution across a merged-particle wedge.
enum Extension {
    Constant(f64),
    Curve { base: Particle, tip: Particle },
}

impl Extension {
    /// Left side: extend the segment (prev, edge) forward past `edge`.
    fn from_outer(prev: Option<&Particle>, edge: &Particle) -> Option<Self> {
        match prev {
            None => Some(Extension::Constant(edge.u)),
            Some(p) if p.u == edge.u => Some(Extension::Constant(edge.u)),
            Some(p) if p.x == edge.x => None,
            Some(p) => Some(Extension::Curve {
                base: *p,
                tip: *edge,
            }),
        }
    }

    fn value_at(&self, x: f64, flux: &FluxModel) -> Option<f64> {
        match self {
            Extension::Constant(u) => Some(*u),
            Extension::Curve { base, tip } => {
                let (sa, sb) = (flux.speed(base.u), flux.speed(tip.u));
                if sb == sa {
                    let frac = (x - base.x) / (tip.x - base.x);
                    return Some(base.u + frac * (tip.u - base.u));
                }
                let target = sa + (x - base.x) / (tip.x - base.x) * (sb - sa);
                let (mut rlo, mut rhi) =
                    flux.convex_region_around(base.u.min(tip.u), base.u.max(tip.u));
                let pad = 10.0 * ((tip.u - base.u).abs() + 1.0);
                rlo = rlo.max(base.u.min(tip.u) - pad);
                rhi = rhi.min(base.u.max(tip.u) + pad);
                let (slo, shi) = (flux.speed(rlo), flux.speed(rhi));
                if target < slo.min(shi) || target > slo.max(shi) {
                    return None;
                }
                flux.speed_inverse_on(target, rlo, rhi).ok()
            }
        }
    }
}

/// Replace each isolated merged particle by a jump discontinuity placed so
/// that the area of the local wedge is preserved: the interpolants of the
/// segments just outside the wedge are extended to a common shock position.
/// Merged particles whose reconstruction regions overlap (within two
/// indices of another merged particle) or whose extensions are infeasible
/// are left in place and reported in `unreconstructed`.
pub fn postprocess_shocks(field: &ParticleField) -> Result<PiecewiseSolution> {
    let ps = field.particles();
    let flux = field.flux().clone();
    let merged: Vec<usize> = (0..ps.len()).filter(|&i| ps[i].merged_origin).collect();
    let mut replace: Vec<Option<(f64, f64, f64)>> = vec![None; ps.len()];
    let mut unreconstructed = Vec::new();
    for &i in &merged {
        let interior = i >= 1 && i + 1 < ps.len();
        let crowded = merged
            .iter()
            .any(|&j| j != i && (j as isize - i as isize).unsigned_abs() <= 2);
        if !interior || crowded {
            unreconstructed.push(i);
            continue;
        }
        match reconstruct_jump(ps, i, &flux) {
            Some(j) => replace[i] = Some(j),
            None => unreconstructed.push(i),
        }
    }
    let mut nodes = Vec::with_capacity(ps.len() + 2 * merged.len());
    for (i, p) in ps.iter().enumerate() {
        if let Some((xs, ul, ur)) = replace[i] {
            nodes.push((xs, ul));
            nodes.push((xs, ur));
        } else {
            nodes.push((p.x, p.u));
        }
    }
    Ok(PiecewiseSolution {
        nodes,
        flux,
        unreconstructed,
    })
}

fn reconstruct_jump(ps: &[Particle], i: usize, flux: &Arc<FluxModel>) -> Option<(f64, f64, f64)> {
    let l = ps[i - 1];
    let m = ps[i];
    let r = ps[i + 1];
    if !(l.x < m.x && m.x < r.x) {
        return None;
    }
    let left = Extension::from_outer((i >= 2).then(|| &ps[i - 2]), &l)?;
    let right_prev = (i + 2 < ps.len()).then(|| ps[i + 2]);
    // Mirror trick: extending (r, r_next) backwards is extending the
    // reversed pair forward.
    let right = match right_prev {
        None => Extension::Constant(r.u),
        Some(p) if p.u == r.u => Extension::Constant(r.u),
        Some(p) if p.x == r.x => return None,
        Some(p) => Extension::Curve { base: p, tip: r },
    };
    let wedge_area =
        (m.x - l.x) * flux.average(l.u, m.u).ok()? + (r.x - m.x) * flux.average(m.u, r.u).ok()?;
    let g = |xi: f64| -> Option<f64> {
        let um = left.value_at(xi, flux)?;
        let up = right.value_at(xi, flux)?;
        let area = (xi - l.x) * flux.average(l.u, um).ok()?
            + (r.x - xi) * flux.average(up, r.u).ok()?;
        Some(area - wedge_area)
    };
    let scale = wedge_area.abs().max(1.0);
    // Perfectly symmetric wedges balance exactly at the merged particle.
    if let Some(g0) = g(m.x) {
        if g0.abs() <= 1e-13 * scale {
            let um = left.value_at(m.x, flux)?;
            let up = right.value_at(m.x, flux)?;
            return Some((m.x, um, up));
        }
    }
    // Bracket a sign change of g on the wedge, then bisect.
    let n = 64;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for j in 0..=n {
        let xi = l.x + (r.x - l.x) * j as f64 / n as f64;
        if let Some(gv) = g(xi) {
            if let Some((pxi, pgv)) = prev {
                if pgv.signum() != gv.signum() {
                    bracket = Some((pxi, xi));
                    break;
                }
            }
            if gv == 0.0 {
                bracket = Some((xi, xi));
                break;
            }
            prev = Some((xi, gv));
        } else {
            prev = None;
        }
    }
    let (mut a, mut b) = bracket?;
    for _ in 0..100 {
        if (b - a).abs() <= 1e-12 * (r.x - l.x) {
            break;
        }
        let mid = 0.5 * (a + b);
        let gm = g(mid)?;
        let ga = g(a)?;
        if gm == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if gm.signum() == ga.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    let xs = 0.5 * (a + b);
    let um = left.value_at(xs, flux)?;
    let up = right.value_at(xs, flux)?;
    Some((xs, um, up))
}
