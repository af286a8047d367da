//! The top-level event loop: advance to the earlier of the next collision
//! and the next output time, run particle management at events, snapshot and
//! record diagnostics at output times.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsSeries;
use crate::dynamics::{advance, next_event};
use crate::error::{Error, Result};
use crate::flux::{FluxModel, ValueInterval};
use crate::management::{
    management_pass, postprocess_shocks, EventLog, ManagementConfig, PiecewiseSolution,
};
use crate::state::{sample_initial, InitialCondition, ParticleField};

/// Built-in initial conditions, selectable from config files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IcSpec {
    /// exp(-x²) cos(πx)
    GaussCos,
    /// Step from `u_left` to `u_right` at `x_jump`.
    Riemann {
        u_left: f64,
        u_right: f64,
        x_jump: f64,
    },
    /// Two steps: levels[0] left of positions[0], levels[1] between,
    /// levels[2] right of positions[1].
    TwoJump {
        levels: [f64; 3],
        positions: [f64; 2],
    },
    /// Tent profile of the given height and half-width on a constant base.
    Triangle {
        center: f64,
        half_width: f64,
        height: f64,
        base: f64,
    },
    /// Zigzag alternating between levels[0] and levels[1] with `teeth`
    /// periods over the domain.
    Sawtooth { levels: [f64; 2], teeth: usize },
    Constant { value: f64 },
    /// Tabulated samples, linearly interpolated (constant beyond the ends).
    Samples { xs: Vec<f64>, us: Vec<f64> },
}

impl IcSpec {
    pub fn build(&self, domain: ValueInterval) -> Result<InitialCondition> {
        let ic: Box<dyn Fn(f64) -> f64 + Send + Sync> = match self {
            IcSpec::GaussCos => {
                Box::new(|x: f64| (-x * x).exp() * (std::f64::consts::PI * x).cos())
            }
            IcSpec::Riemann {
                u_left,
                u_right,
                x_jump,
            } => {
                let (l, r, x0) = (*u_left, *u_right, *x_jump);
                Box::new(move |x: f64| if x < x0 { l } else { r })
            }
            IcSpec::TwoJump { levels, positions } => {
                if !(positions[0] < positions[1]) {
                    return Err(Error::Config("two_jump positions must be increasing".into()));
                }
                let (l, p) = (*levels, *positions);
                Box::new(move |x: f64| {
                    if x < p[0] {
                        l[0]
                    } else if x < p[1] {
                        l[1]
                    } else {
                        l[2]
                    }
                })
            }
            IcSpec::Triangle {
                center,
                half_width,
                height,
                base,
            } => {
                if !(*half_width > 0.0) {
                    return Err(Error::Config("triangle half_width must be positive".into()));
                }
                let (c, w, h, b) = (*center, *half_width, *height, *base);
                Box::new(move |x: f64| b + h * (1.0 - (x - c).abs() / w).max(0.0))
            }
            IcSpec::Sawtooth { levels, teeth } => {
                if *teeth == 0 {
                    return Err(Error::Config("sawtooth needs at least one tooth".into()));
                }
                let (a, b) = (levels[0], levels[1]);
                let (lo, len) = (domain.lo, domain.length());
                let teeth = *teeth as f64;
                Box::new(move |x: f64| {
                    let phase = ((x - lo) / len * teeth).fract();
                    let tri = if phase < 0.5 {
                        2.0 * phase
                    } else {
                        2.0 * (1.0 - phase)
                    };
                    a + (b - a) * tri
                })
            }
            IcSpec::Constant { value } => {
                let v = *value;
                Box::new(move |_| v)
            }
            IcSpec::Samples { xs, us } => {
                if xs.len() != us.len() || xs.len() < 2 {
                    return Err(Error::Config(
                        "tabulated initial condition needs matching xs/us with >= 2 entries"
                            .into(),
                    ));
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(
                        "tabulated positions must be strictly increasing".into(),
                    ));
                }
                let (xs, us) = (xs.clone(), us.clone());
                Box::new(move |x: f64| {
                    if x <= xs[0] {
                        return us[0];
                    }
                    let n = xs.len();
                    if x >= xs[n - 1] {
                        return us[n - 1];
                    }
                    let k = xs.partition_point(|&g| g < x);
                    let f = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                    us[k - 1] + f * (us[k] - us[k - 1])
                })
            }
        };
        Ok(InitialCondition::new(ic, domain))
    }
}

fn default_d_max_factor() -> f64 {
    1.9
}

fn default_true() -> bool {
    true
}

fn default_curve_points() -> usize {
    16
}

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub flux: String,
    pub domain: (f64, f64),
    pub n_particles: usize,
    /// d_max as a multiple of the initial particle spacing.
    #[serde(default = "default_d_max_factor")]
    pub d_max_factor: f64,
    #[serde(default)]
    pub d_min: f64,
    pub t_end: f64,
    #[serde(default)]
    pub output_times: Vec<f64>,
    #[serde(default = "default_true")]
    pub entropy_fix: bool,
    #[serde(default)]
    pub postprocess: bool,
    /// Seed for property harnesses built on top of runs; the solver itself
    /// is deterministic and ignores it.
    #[serde(default)]
    pub seed: u64,
    /// Points per segment when exporting curve polylines.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    pub initial_condition: IcSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::Config(format!(
                "empty domain [{}, {}]",
                self.domain.0, self.domain.1
            )));
        }
        if self.n_particles < 2 {
            return Err(Error::Config("need at least 2 particles".into()));
        }
        if !(self.d_max_factor > 0.0) {
            return Err(Error::Config("d_max_factor must be positive".into()));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::Config("t_end must be nonnegative".into()));
        }
        if self
            .output_times
            .windows(2)
            .any(|w| w[1] < w[0])
        {
            return Err(Error::Config("output times must be sorted".into()));
        }
        if self
            .output_times
            .iter()
            .any(|&t| t < 0.0 || t > self.t_end)
        {
            return Err(Error::Config(
                "output times must lie within [0, t_end]".into(),
            ));
        }
        Ok(())
    }

    pub fn initial_spacing(&self) -> f64 {
        (self.domain.1 - self.domain.0) / (self.n_particles - 1) as f64
    }

    /// Sample the initial field and derive the management parameters.
    pub fn build_field(&self) -> Result<(ParticleField, ManagementConfig)> {
        self.validate()?;
        let flux = FluxModel::by_name(&self.flux)?;
        let domain = ValueInterval::new(self.domain.0, self.domain.1)?;
        let ic = self.initial_condition.build(domain)?;
        let d_max = self.d_max_factor * self.initial_spacing();
        let field = sample_initial(&ic, self.n_particles, flux, d_max, self.d_min)?;
        let mut cfg = ManagementConfig::from_field(&field);
        cfg.entropy_fix_enabled = self.entropy_fix;
        Ok((field, cfg))
    }

    pub fn initial_condition_fn(&self) -> Result<InitialCondition> {
        let domain = ValueInterval::new(self.domain.0, self.domain.1)?;
        self.initial_condition.build(domain)
    }
}

/// What one [`EventLoop::step`] call did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// Advanced to a collision and ran a management pass.
    Event,
    /// Arrived exactly at this output time (management already run).
    Output(f64),
    /// Reached t_end.
    Done,
}

/// Low-level driver around one field, exposing each event so callers can
/// instrument invariants between management passes. [`run`] composes it
/// into the standard artifact-producing loop.
pub struct EventLoop {
    pub field: ParticleField,
    pub cfg: ManagementConfig,
    pub log: EventLog,
    t_end: f64,
    outputs: Vec<f64>,
    next_output: usize,
    finished: bool,
}

impl EventLoop {
    pub fn new(
        field: ParticleField,
        cfg: ManagementConfig,
        t_end: f64,
        output_times: &[f64],
    ) -> Result<Self> {
        if output_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("output times must be sorted".into()));
        }
        if output_times.iter().any(|&t| t < field.t || t > t_end) {
            return Err(Error::Config(
                "output times must lie between the field time and t_end".into(),
            ));
        }
        Ok(Self {
            field,
            cfg,
            log: EventLog::new(),
            t_end,
            outputs: output_times.to_vec(),
            next_output: 0,
            finished: false,
        })
    }

    fn pending_output(&self) -> Option<f64> {
        self.outputs.get(self.next_output).copied()
    }

    /// Advance to the next reportable point: a collision event, an output
    /// time, or completion.
    pub fn step(&mut self) -> Result<Step> {
        if self.finished {
            return Ok(Step::Done);
        }
        loop {
            if let Some(out) = self.pending_output() {
                if self.field.t >= out {
                    // Landed exactly on the output (set below); refresh gaps
                    // and merge anything that arrived coincident with it.
                    management_pass(&mut self.field, &self.cfg, &mut self.log)?;
                    self.next_output += 1;
                    return Ok(Step::Output(out));
                }
            }
            if self.field.t >= self.t_end {
                self.finished = true;
                return Ok(Step::Done);
            }
            let target = self.pending_output().unwrap_or(self.t_end).min(self.t_end);
            let horizon = next_event(&self.field);
            let to_target = target - self.field.t;
            if horizon.dt < to_target {
                advance(&mut self.field, horizon.dt)?;
                management_pass(&mut self.field, &self.cfg, &mut self.log)?;
                return Ok(Step::Event);
            }
            advance(&mut self.field, to_target)?;
            // Kill accumulated rounding so snapshots land exactly.
            self.field.t = target;
        }
    }
}

/// Result of a full run: deep snapshots at the requested output times, the
/// diagnostics series recorded at those times (plus t = 0 and t_end), the
/// optional postprocessed solutions, and the event log.
#[derive(Debug)]
pub struct RunResult {
    pub snapshots: Vec<(f64, ParticleField)>,
    pub diagnostics: DiagnosticsSeries,
    pub postprocessed: Option<Vec<(f64, PiecewiseSolution)>>,
    pub log: EventLog,
}

/// Execute a configured run to completion.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    let (field, mgmt) = cfg.build_field()?;
    let (u_min, u_max) = field
        .particles()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.u), hi.max(p.u))
        });
    let mut diagnostics = DiagnosticsSeries::new(DiagnosticsSeries::default_grid(u_min, u_max));
    let mut snapshots = Vec::new();
    let mut postprocessed = cfg.postprocess.then(Vec::new);

    let mut el = EventLoop::new(field, mgmt, cfg.t_end, &cfg.output_times)?;
    let records_at_zero = cfg.output_times.first() == Some(&0.0);
    if !records_at_zero {
        diagnostics.record(&el.field, el.log.counts())?;
    }
    loop {
        match el.step()? {
            Step::Event => {}
            Step::Output(t) => {
                diagnostics.record(&el.field, el.log.counts())?;
                snapshots.push((t, el.field.clone()));
                if let Some(post) = postprocessed.as_mut() {
                    post.push((t, postprocess_shocks(&el.field)?));
                }
            }
            Step::Done => break,
        }
    }
    if cfg.output_times.last() != Some(&cfg.t_end) {
        diagnostics.record(&el.field, el.log.counts())?;
    }
    Ok(RunResult {
        snapshots,
        diagnostics,
        postprocessed,
        log: el.log,
    })
}
