//! A meshfree solver for one-dimensional scalar conservation laws
//! `u_t + f(u)_x = 0`.
//!
//! Solution values are carried by particles that move exactly along
//! characteristics. Interactions are resolved by purely local particle
//! management: new particles are inserted into oversized expanding gaps, and
//! colliding pairs are merged so that the area under the solution is
//! conserved to rounding. Between particles the solution is described by a
//! conservative interpolant that is itself an exact solution of the PDE, so
//! away from merges the method has no numerical dissipation at all.
//!
//! The crate is organised around the pipeline:
//!
//! * [`flux`] — flux-function models and the nonlinear average `a(u1,u2)`
//!   that converts particle gaps into areas,
//! * [`state`] — the particle field, initial sampling and validation,
//! * [`dynamics`] — collision times and exact characteristic advancement,
//! * [`interpolation`] — the per-segment interpolant and the integral
//!   functionals (area, total variation, Kružkov entropy),
//! * [`management`] — conservative insertion, merging with TVD/entropy
//!   safeguards, the five-particle inflection merge, and shock
//!   reconstruction,
//! * [`diagnostics`] — time series and L1 error measurement,
//! * [`oracle`] — an independent finite-volume reference solver and exact
//!   Riemann solutions for validation,
//! * [`solver`] — the event-driven run loop tying it all together.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod flux;
pub mod interpolation;
pub mod management;
mod numerics;
pub mod oracle;
pub mod solver;
pub mod state;

pub use diagnostics::{
    l1_error, DiagnosticsSeries, FnProfile, GridConvention, GridFunction, Profile,
};
pub use dynamics::{advance, collision_time, next_event, EventHorizon};
pub use error::{Error, Result};
pub use flux::{AverageForm, Convexity, FluxModel, ValueInterval};
pub use interpolation::{
    kruzkov_entropy, sample_curve, segment, total_area, total_variation, Segment,
};
pub use management::{
    entropy_check, inflection_merge, insert_between, management_pass, merge_value,
    merge_with_fix, postprocess_shocks, tvd_safety_check, EventCounts, EventLog, EventRecord,
    ManagementConfig, MergeOutcome, PiecewiseSolution,
};
pub use oracle::{exact_riemann, fv_solve, fv_solve_at_times, FvConfig, NumericalFlux};
pub use solver::{run, EventLoop, IcSpec, RunConfig, RunResult, Step};
pub use state::{
    parse_snapshot_csv, sample_initial, Boundary, InitialCondition, Particle, ParticleField,
    Violation,
};
