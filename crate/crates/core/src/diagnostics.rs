//! Conservation/TV/entropy time series and L1 distances between solution
//! profiles (particle fields, postprocessed solutions, grid functions,
//! analytic references).

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interpolation::{kruzkov_entropy, segment, total_area, total_variation};
use crate::management::{EventCounts, PiecewiseSolution};
use crate::numerics;
use crate::state::ParticleField;

/// Anything evaluable as a function of x on a bounded support. Evaluation
/// outside the support extends the boundary values (outflow semantics);
/// `breakpoints` lists kinks/jumps used to subdivide integrals.
pub trait Profile {
    fn support(&self) -> (f64, f64);
    fn eval(&self, x: f64) -> f64;
    fn breakpoints(&self) -> Vec<f64>;
}

impl Profile for ParticleField {
    fn support(&self) -> (f64, f64) {
        if self.is_empty() {
            (0.0, 0.0)
        } else {
            (self.particle(0).x, self.particle(self.len() - 1).x)
        }
    }

    fn eval(&self, x: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        if x <= self.particle(0).x {
            return self.particle(0).u;
        }
        let last = self.len() - 1;
        if x >= self.particle(last).x {
            return self.particle(last).u;
        }
        let ps = self.particles();
        let k = ps.partition_point(|p| p.x < x);
        let (l, r) = (&ps[k - 1], &ps[k]);
        if l.x == r.x {
            return l.u;
        }
        segment(self, k - 1)
            .u_of_x(x)
            .unwrap_or_else(|_| l.u + (x - l.x) / (r.x - l.x) * (r.u - l.u))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.particles().iter().map(|p| p.x).collect()
    }
}

impl Profile for PiecewiseSolution {
    fn support(&self) -> (f64, f64) {
        PiecewiseSolution::support(self)
    }

    fn eval(&self, x: f64) -> f64 {
        PiecewiseSolution::eval(self, x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.nodes().iter().map(|n| n.0).collect()
    }
}

/// How the values of a [`GridFunction`] are to be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridConvention {
    /// Values are averages over cells centred at the grid points.
    CellAverage,
    /// Values are point samples, connected linearly.
    Pointwise,
}

/// Reference-solution carrier: values on an ordered grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
    pub convention: GridConvention,
}

impl GridFunction {
    pub fn new(xs: Vec<f64>, us: Vec<f64>, convention: GridConvention) -> Result<Self> {
        if xs.len() != us.len() {
            return Err(Error::Config(format!(
                "grid lengths differ: {} positions, {} values",
                xs.len(),
                us.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Config("grid needs at least 2 points".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid positions must be strictly increasing".into()));
        }
        Ok(Self {
            xs,
            us,
            convention,
        })
    }

    fn cell_edges(&self) -> Vec<f64> {
        let n = self.xs.len();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(self.xs[0] - 0.5 * (self.xs[1] - self.xs[0]));
        for w in self.xs.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(self.xs[n - 1] + 0.5 * (self.xs[n - 1] - self.xs[n - 2]));
        edges
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "x,u")?;
        for (x, u) in self.xs.iter().zip(&self.us) {
            writeln!(w, "{x},{u}")?;
        }
        Ok(())
    }
}

impl Profile for GridFunction {
    fn support(&self) -> (f64, f64) {
        match self.convention {
            GridConvention::CellAverage => {
                let e = self.cell_edges();
                (e[0], e[e.len() - 1])
            }
            GridConvention::Pointwise => (self.xs[0], self.xs[self.xs.len() - 1]),
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        match self.convention {
            GridConvention::CellAverage => {
                // Cell k owns [mid(k-1,k), mid(k,k+1)); resolved from the
                // neighbouring centres without materialising the edges.
                if x <= self.xs[0] {
                    return self.us[0];
                }
                if x >= self.xs[n - 1] {
                    return self.us[n - 1];
                }
                let k = self.xs.partition_point(|&c| c < x);
                let mid = 0.5 * (self.xs[k - 1] + self.xs[k]);
                if x < mid {
                    self.us[k - 1]
                } else {
                    self.us[k]
                }
            }
            GridConvention::Pointwise => {
                if x <= self.xs[0] {
                    return self.us[0];
                }
                if x >= self.xs[n - 1] {
                    return self.us[n - 1];
                }
                let k = self.xs.partition_point(|&g| g < x);
                let (x0, x1) = (self.xs[k - 1], self.xs[k]);
                let (u0, u1) = (self.us[k - 1], self.us[k]);
                u0 + (x - x0) / (x1 - x0) * (u1 - u0)
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.convention {
            GridConvention::CellAverage => self.cell_edges(),
            GridConvention::Pointwise => self.xs.clone(),
        }
    }
}

/// Closure-backed profile, handy for analytic references in tests and
/// validation runs.
pub struct FnProfile<F: Fn(f64) -> f64> {
    pub f: F,
    pub support: (f64, f64),
    pub breakpoints: Vec<f64>,
}

impl<F: Fn(f64) -> f64> Profile for FnProfile<F> {
    fn support(&self) -> (f64, f64) {
        self.support
    }

    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

/// ∫ |a(x) - b(x)| dx over the common support.
///
/// The integration range is subdivided at every breakpoint of either
/// profile; within each piece, sign changes of the difference are located by
/// bisection and the pieces are integrated by adaptive quadrature, so the
/// kink of |·| never degrades accuracy.
pub fn l1_error(a: &dyn Profile, b: &dyn Profile) -> Result<f64> {
    let (alo, ahi) = a.support();
    let (blo, bhi) = b.support();
    let lo = alo.max(blo);
    let hi = ahi.min(bhi);
    if !(lo < hi) {
        return Err(Error::DisjointSupports);
    }
    let mut cuts: Vec<f64> = Vec::new();
    cuts.push(lo);
    cuts.push(hi);
    for p in a.breakpoints().into_iter().chain(b.breakpoints()) {
        if p > lo && p < hi {
            cuts.push(p);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * x.abs().max(y.abs()).max(1.0));

    let diff = |x: f64| a.eval(x) - b.eval(x);
    let mut refined: Vec<f64> = Vec::with_capacity(2 * cuts.len());
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        refined.push(p);
        // Locate sign changes of the difference inside the piece.
        let n = 16;
        let mut prev_x = p;
        let mut prev_d = diff(p);
        for j in 1..=n {
            let x = p + (q - p) * j as f64 / n as f64;
            let d = diff(x);
            if prev_d != 0.0 && d != 0.0 && prev_d.signum() != d.signum() {
                if let Ok(root) =
                    numerics::bisect(&diff, prev_x, x, 1e-13 * (q - p).abs().max(1e-13))
                {
                    refined.push(root);
                }
            }
            prev_x = x;
            prev_d = d;
        }
    }
    refined.push(hi);
    refined.sort_by(|x, y| x.partial_cmp(y).unwrap());
    refined.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * x.abs().max(y.abs()).max(1.0));

    let mut total = 0.0;
    for w in refined.windows(2) {
        total += numerics::integrate(&|x| diff(x).abs(), w[0], w[1], 1e-13, 1e-9);
    }
    Ok(total)
}

/// Time series of the conserved and monotone quantities, plus cumulative
/// event counts, all aligned by record index.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub area: Vec<f64>,
    pub tv: Vec<f64>,
    pub entropy_grid: Vec<f64>,
    /// entropy[i][j] = ∫|u - k_j| dx at times[i].
    pub entropy: Vec<Vec<f64>>,
    pub events: Vec<EventCounts>,
}

impl DiagnosticsSeries {
    pub fn new(entropy_grid: Vec<f64>) -> Self {
        Self {
            times: Vec::new(),
            area: Vec::new(),
            tv: Vec::new(),
            entropy_grid,
            entropy: Vec::new(),
            events: Vec::new(),
        }
    }

    /// 17 equally spaced Kružkov levels spanning the data range padded by
    /// 10% on each side.
    pub fn default_grid(u_min: f64, u_max: f64) -> Vec<f64> {
        let range = (u_max - u_min).max(1e-12);
        let lo = u_min - 0.1 * range;
        let hi = u_max + 0.1 * range;
        (0..17)
            .map(|i| lo + (hi - lo) * i as f64 / 16.0)
            .collect()
    }

    /// Append one record for the field's current state.
    pub fn record(&mut self, field: &ParticleField, counts: EventCounts) -> Result<()> {
        self.times.push(field.t);
        self.area.push(total_area(field)?);
        self.tv.push(total_variation(field));
        let row: Result<Vec<f64>> = self
            .entropy_grid
            .iter()
            .map(|&k| kruzkov_entropy(field, k))
            .collect();
        self.entropy.push(row?);
        self.events.push(counts);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with one row per record: t, area, tv, entropy_k1..kn.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "t,area,tv")?;
        for j in 1..=self.entropy_grid.len() {
            write!(w, ",entropy_k{j}")?;
        }
        writeln!(w)?;
        for i in 0..self.times.len() {
            write!(w, "{},{},{}", self.times[i], self.area[i], self.tv[i])?;
            for v in &self.entropy[i] {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
