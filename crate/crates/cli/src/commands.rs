//! The four CLI verbs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clawpart::{
    advance, fv_solve_at_times, kruzkov_entropy, l1_error, next_event, sample_curve, segment,
    total_area, total_variation, DiagnosticsSeries, EventLoop, FluxModel, FvConfig,
    NumericalFlux, RunConfig, Step, ValueInterval,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{CliError, LoadedConfig};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        CliError::Run(format!("cannot write {}: {e}", path.display()))
    })?))
}

fn write_effective_config(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let mut w = create(&out.join("effective_config.json"))?;
    let text = serde_json::to_string_pretty(&cfg.doc)
        .map_err(|e| CliError::Run(format!("config echo: {e}")))?;
    writeln!(w, "{text}")?;
    Ok(())
}

fn write_polyline(path: &Path, pts: &[(f64, f64)]) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "x,u")?;
    for (x, u) in pts {
        writeln!(w, "{x},{u}")?;
    }
    Ok(())
}

pub fn cmd_run(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    write_effective_config(cfg, out)?;
    let res = clawpart::run(&cfg.run)?;

    let mut w = create(&out.join("snapshots.csv"))?;
    writeln!(w, "t,x,u,is_inflection,merged_origin")?;
    for (_, field) in &res.snapshots {
        field.write_snapshot_csv(&mut w, false)?;
    }
    drop(w);

    for (t, field) in &res.snapshots {
        let poly = sample_curve(field, cfg.run.curve_points)?;
        write_polyline(&out.join(format!("curve_t{t}.csv")), &poly)?;
    }
    if let Some(post) = &res.postprocessed {
        for (t, sol) in post {
            write_polyline(
                &out.join(format!("postprocessed_t{t}.csv")),
                &sol.sample(cfg.run.curve_points),
            )?;
        }
    }

    let mut w = create(&out.join("diagnostics.csv"))?;
    res.diagnostics.write_csv(&mut w)?;
    drop(w);

    let mut w = create(&out.join("diagnostics.json"))?;
    writeln!(
        w,
        "{}",
        serde_json::to_string_pretty(&res.diagnostics)
            .map_err(|e| CliError::Run(format!("diagnostics serialization: {e}")))?
    )?;
    drop(w);

    let mut w = create(&out.join("events.jsonl"))?;
    res.log.write_jsonl(&mut w)?;
    drop(w);

    let counts = res.log.counts();
    println!(
        "run complete: t_end = {}, {} snapshots, {} inserts, {} pair merges, {} inflection merges, {} fix retries",
        cfg.run.t_end,
        res.snapshots.len(),
        counts.inserts,
        counts.merges,
        counts.inflection_merges,
        counts.fix_retries,
    );
    Ok(())
}

fn fit_slope(hs: &[f64], errs: &[f64], points: usize) -> f64 {
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

pub fn cmd_converge(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let conv = cfg
        .converge
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [converge] section".into()))?;
    if conv.spacings.len() < 3 {
        return Err(CliError::Config(
            "convergence study needs at least 3 spacings".into(),
        ));
    }
    write_effective_config(cfg, out)?;
    let length = cfg.run.domain.1 - cfg.run.domain.0;
    let particles_for = |h: f64| -> usize { ((length / h).round() as usize).max(1) + 1 };

    let run_at = |n: usize| -> Result<clawpart::RunResult, CliError> {
        let mut rc: RunConfig = cfg.run.clone();
        rc.n_particles = n;
        rc.output_times = conv.times.clone();
        rc.t_end = conv.times.last().copied().unwrap_or(rc.t_end);
        rc.postprocess = true;
        Ok(clawpart::run(&rc)?)
    };

    let n_finest = particles_for(
        conv.spacings
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
    );
    let reference = run_at((n_finest - 1) * conv.reference_factor + 1)?;
    let ref_post = reference.postprocessed.as_ref().expect("postprocess on");

    let results: Vec<Result<_, CliError>> = conv
        .spacings
        .par_iter()
        .map(|&h| {
            let res = run_at(particles_for(h))?;
            let post = res.postprocessed.as_ref().expect("postprocess on");
            let mut rows = Vec::new();
            for (i, &t) in conv.times.iter().enumerate() {
                let raw = l1_error(&res.snapshots[i].1, &ref_post[i].1)?;
                let fixed = l1_error(&post[i].1, &ref_post[i].1)?;
                rows.push((h, t, raw, fixed));
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }

    let mut w = create(&out.join("errors.csv"))?;
    writeln!(w, "h,t,raw_error,postprocessed_error")?;
    for (h, t, raw, fixed) in &rows {
        writeln!(w, "{h},{t},{raw},{fixed}")?;
    }
    drop(w);

    #[derive(Serialize)]
    struct SlopeRow {
        t: f64,
        slope_raw: f64,
        slope_postprocessed: f64,
        fit_points: usize,
    }
    let mut slopes = Vec::new();
    for &t in &conv.times {
        let hs: Vec<f64> = rows.iter().filter(|r| r.1 == t).map(|r| r.0).collect();
        let raw: Vec<f64> = rows.iter().filter(|r| r.1 == t).map(|r| r.2).collect();
        let fixed: Vec<f64> = rows.iter().filter(|r| r.1 == t).map(|r| r.3).collect();
        slopes.push(SlopeRow {
            t,
            slope_raw: fit_slope(&hs, &raw, conv.fit_points),
            slope_postprocessed: fit_slope(&hs, &fixed, conv.fit_points),
            fit_points: conv.fit_points,
        });
    }

    let mut report = json!({ "slopes": slopes });
    if conv.fv_crosscheck_cells > 0 {
        let flux = FluxModel::by_name(&cfg.run.flux)?;
        let ic = cfg.run.initial_condition_fn()?;
        let t0 = conv.times[0];
        let fv = fv_solve_at_times(
            &ic,
            &flux,
            &FvConfig {
                cells: conv.fv_crosscheck_cells,
                cfl: 0.9,
                numerical_flux: NumericalFlux::Godunov,
                domain: ValueInterval::new(cfg.run.domain.0, cfg.run.domain.1)?,
            },
            &[t0],
        )?;
        let cross = l1_error(&reference.snapshots[0].1, &fv[0])?;
        report["fv_crosscheck"] = json!({
            "cells": conv.fv_crosscheck_cells,
            "t": t0,
            "l1": cross,
        });
        println!("fv cross-check at t = {t0}: L1 = {cross:.3e}");
    }
    let mut w = create(&out.join("slopes.json"))?;
    writeln!(w, "{}", serde_json::to_string_pretty(&report).unwrap())?;
    drop(w);

    for s in &slopes {
        println!(
            "t = {}: slope raw {:.2}, postprocessed {:.2}",
            s.t, s.slope_raw, s.slope_postprocessed
        );
    }
    Ok(())
}

pub fn cmd_compare(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let cmp = cfg
        .compare
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [compare] section".into()))?;
    write_effective_config(cfg, out)?;

    let mut rc = cfg.run.clone();
    rc.output_times = cmp.times.clone();
    rc.t_end = cmp.times.last().copied().unwrap_or(rc.t_end);
    let res = clawpart::run(&rc)?;

    let flux = FluxModel::by_name(&cfg.run.flux)?;
    let ic = cfg.run.initial_condition_fn()?;
    let domain = ValueInterval::new(cfg.run.domain.0, cfg.run.domain.1)?;
    let reference = fv_solve_at_times(
        &ic,
        &flux,
        &FvConfig {
            cells: cmp.reference_cells,
            cfl: cmp.reference_cfl,
            numerical_flux: NumericalFlux::Godunov,
            domain,
        },
        &cmp.times,
    )?;
    let coarse = fv_solve_at_times(
        &ic,
        &flux,
        &FvConfig {
            cells: cmp.fv_cells,
            cfl: cmp.fv_cfl,
            numerical_flux: NumericalFlux::LocalLaxFriedrichs,
            domain,
        },
        &cmp.times,
    )?;

    let mut w = create(&out.join("compare.csv"))?;
    writeln!(w, "t,particle_l1,fv_l1")?;
    for (i, &t) in cmp.times.iter().enumerate() {
        let ep = l1_error(&res.snapshots[i].1, &reference[i])?;
        let ef = l1_error(&coarse[i], &reference[i])?;
        writeln!(w, "{t},{ep},{ef}")?;
        println!("t = {t}: particle L1 {ep:.3e}, finite-volume L1 {ef:.3e}");
    }
    Ok(())
}

#[derive(Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: String,
}

pub fn cmd_validate(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    write_effective_config(cfg, out)?;
    let mut checks: Vec<Check> = Vec::new();
    let mut entropy_increases: Vec<serde_json::Value> = Vec::new();

    let (field, mgmt) = cfg.run.build_field()?;
    let flux = field.flux().clone();

    // Nonlinear-average properties on sampled pairs inside one convex
    // region of the configured flux.
    {
        let (alo, ahi) = flux.admissible();
        let lo = alo.max(-2.0);
        let hi = ahi.min(2.0);
        let mut regions = vec![lo];
        regions.extend(
            flux.inflection_points_in(ValueInterval::new(lo, hi).map_err(CliError::from)?),
        );
        regions.push(hi);
        let mut worst: f64 = 0.0;
        let mut mean_ok = true;
        let mut mono_ok = true;
        for w in regions.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(a < b) {
                continue;
            }
            let pad = 1e-6 * (b - a);
            let us: Vec<f64> = (0..5)
                .map(|k| a + pad + (b - a - 2.0 * pad) * k as f64 / 4.0)
                .collect();
            for i in 0..us.len() {
                for j in (i + 1)..us.len() {
                    let (u1, u2) = (us[i], us[j]);
                    let m = flux.average(u1, u2)?;
                    let m2 = flux.average(u2, u1)?;
                    worst = worst.max((m - m2).abs() / m.abs().max(1.0));
                    if u1 != u2 {
                        mean_ok &= m > u1.min(u2) && m < u1.max(u2);
                    }
                    if j + 1 < us.len() {
                        mono_ok &= flux.average(u1, us[j + 1])? > m;
                    }
                }
            }
        }
        checks.push(Check {
            name: "average_properties".into(),
            passed: worst <= 1e-12 && mean_ok && mono_ok,
            detail: format!("symmetry residual {worst:.2e}, mean {mean_ok}, monotone {mono_ok}"),
        });
    }

    // The interpolant moves with the characteristics: advance a copy and
    // compare x(u) against the shifted original.
    {
        let mut copy = field.clone();
        let horizon = next_event(&copy);
        let dt = if horizon.dt.is_finite() {
            0.5 * horizon.dt
        } else {
            0.1
        };
        let mut samples = Vec::new();
        for i in 0..copy.len().saturating_sub(1) {
            let seg = segment(&copy, i);
            if seg.left.u != seg.right.u {
                let u = 0.5 * (seg.left.u + seg.right.u);
                samples.push((u, seg.x_of_u(u)?, i));
            }
        }
        advance(&mut copy, dt)?;
        let mut worst: f64 = 0.0;
        for (u, x_before, i) in samples {
            let x_after = segment(&copy, i).x_of_u(u)?;
            worst = worst.max((x_after - (x_before + flux.speed(u) * dt)).abs());
        }
        checks.push(Check {
            name: "interpolant_solves_pde".into(),
            passed: worst <= 1e-12,
            detail: format!("max deviation {worst:.2e} over one event step"),
        });
    }

    // Conservation, TVD and entropy through the full run.
    {
        let (u_min, u_max) = field
            .particles()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.u), hi.max(p.u))
            });
        let grid = DiagnosticsSeries::default_grid(u_min, u_max);
        let entropies = |f: &clawpart::ParticleField| -> Result<Vec<f64>, CliError> {
            grid.iter()
                .map(|&k| kruzkov_entropy(f, k).map_err(CliError::from))
                .collect()
        };
        let area0 = total_area(&field)?;
        let mut el = EventLoop::new(field, mgmt, cfg.run.t_end, &cfg.run.output_times)?;
        let mut prev_tv = total_variation(&el.field);
        let mut prev_entropy = entropies(&el.field)?;
        let mut max_area_drift: f64 = 0.0;
        let mut max_tv_increase: f64 = f64::NEG_INFINITY;
        loop {
            match el.step().map_err(CliError::from)? {
                Step::Done => break,
                _ => {}
            }
            let area = total_area(&el.field)?;
            max_area_drift = max_area_drift.max((area - area0).abs() / area0.abs().max(1e-300));
            let tv = total_variation(&el.field);
            max_tv_increase = max_tv_increase.max(tv - prev_tv);
            prev_tv = tv;
            let ent = entropies(&el.field)?;
            for (j, (b, a)) in prev_entropy.iter().zip(&ent).enumerate() {
                if a - b > 1e-10 {
                    entropy_increases.push(json!({
                        "t": el.field.t,
                        "k": grid[j],
                        "increase": a - b,
                    }));
                }
            }
            prev_entropy = ent;
        }
        checks.push(Check {
            name: "conservation".into(),
            passed: max_area_drift <= 1e-12,
            detail: format!("max relative drift {max_area_drift:.2e}"),
        });
        checks.push(Check {
            name: "tvd".into(),
            passed: max_tv_increase <= 1e-12,
            detail: format!("max TV increase {max_tv_increase:.2e}"),
        });
        checks.push(Check {
            name: "entropy".into(),
            passed: entropy_increases.is_empty(),
            detail: format!("{} entropy increase events", entropy_increases.len()),
        });
        let violations = el.field.validate();
        checks.push(Check {
            name: "field_invariants".into(),
            passed: violations.is_empty(),
            detail: format!("{violations:?}"),
        });
    }

    let passed = checks.iter().all(|c| c.passed);
    let report = json!({
        "passed": passed,
        "checks": checks,
        "entropy_increase_events": entropy_increases,
    });
    let mut w = create(&out.join("validate_report.json"))?;
    writeln!(w, "{}", serde_json::to_string_pretty(&report).unwrap())?;
    drop(w);

    for c in report["checks"].as_array().unwrap() {
        println!(
            "{}: {} — {}",
            c["name"].as_str().unwrap(),
            if c["passed"].as_bool().unwrap() {
                "ok"
            } else {
                "FAILED"
            },
            c["detail"].as_str().unwrap()
        );
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Run("validation failed".into()))
    }
}
