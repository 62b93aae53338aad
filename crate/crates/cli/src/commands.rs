use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime};

use anyhow::{Context, Result};
use serde_json::json;

use ghost_turb_core::analytic::{
    bracket, cancellation_demo, coherence_factor, immunity_for_diameter, predicted_ghost_image, CoherenceParams,
};
use ghost_turb_core::correlator::{psf_metrics, run_simulation, ObjectMask, PsfMetrics, SimulationSetup};
use ghost_turb_core::io::{write_csv, write_pgm16};
use ghost_turb_core::source::make_source_grid;
use ghost_turb_core::turbulence::{coherence_length, weighted_path_integral};
use ghost_turb_core::{Error, Grid2D, ImageMap, OpticalConfig, Point2, TurbulenceModel};

use crate::config::{MaskSpec, RunConfig, WAVELENGTH_NOTE};
use crate::record::RunRecord;
use crate::Failure;

/// Below this many frames the per-pixel standard errors, and every
/// tolerance decision built on them, are not trustworthy.
const MIN_DECISION_FRAMES: u64 = 100;

/// Draws per row of the cancellation table.
const DEMO_DRAWS: u64 = 1_000_000;

struct Coherence {
    rho0: f64,
    weighted_integral: f64,
    from_override: bool,
}

fn coherence(cfg: &RunConfig) -> Result<Coherence> {
    let weighted_integral = weighted_path_integral(&cfg.profile);
    let (rho0, from_override) = match cfg.rho0_override {
        Some(r) => (r, true),
        None => (coherence_length(&cfg.profile, cfg.wavelength)?, false),
    };
    Ok(Coherence {
        rho0,
        weighted_integral,
        from_override,
    })
}

fn approx_length(m: f64) -> String {
    if m >= 0.01 {
        format!("{:.0} cm", m * 1e2)
    } else if m >= 1e-3 {
        format!("{:.0} mm", m * 1e3)
    } else {
        format!("{:.0} um", m * 1e6)
    }
}

pub fn rho0(cfg: &RunConfig) -> Result<(), Failure> {
    let c = coherence(cfg)?;
    let optics = OpticalConfig::new(cfg.wavelength, cfg.path_length)?;
    let verdict = immunity_for_diameter(cfg.source_diameter, c.rho0);
    let note = if (cfg.wavelength - 780e-9).abs() < 1e-15 {
        format!(" ({WAVELENGTH_NOTE})")
    } else {
        String::new()
    };
    println!("wavelength = {} nm{note}", cfg.wavelength * 1e9);
    println!("k = {:.6e} rad/m", optics.wave_number());
    println!("weighted integral = {:.6e} m^(1/3)", c.weighted_integral);
    if c.from_override {
        println!("(rho0 taken from the configured override, not the profile)");
    }
    if c.rho0.is_finite() {
        println!(
            "rho0 = {:.4} m (≈ {}); immune: {} (margin {:.2})",
            c.rho0,
            approx_length(c.rho0),
            verdict.immune,
            verdict.margin
        );
    } else {
        println!("rho0 = inf; immune: {}", verdict.immune);
    }
    Ok(())
}

fn optics(cfg: &RunConfig) -> Result<OpticalConfig> {
    Ok(OpticalConfig::new(cfg.wavelength, cfg.path_length)?)
}

fn reference_grid(cfg: &RunConfig) -> Result<Grid2D> {
    Ok(Grid2D::square(cfg.grid_n, cfg.grid_pitch)?)
}

fn object_grid(cfg: &RunConfig) -> Result<Grid2D> {
    Ok(Grid2D::square(cfg.object_grid_n, cfg.object_grid_pitch)?)
}

fn mask(cfg: &RunConfig) -> Result<ObjectMask> {
    let grid = object_grid(cfg)?;
    Ok(match &cfg.mask {
        MaskSpec::Point => ObjectMask::point(grid),
        MaskSpec::DoubleSlit {
            width,
            separation,
            height,
        } => ObjectMask::double_slit(grid, *width, *separation, *height)?,
        MaskSpec::ThreeBar { bar_width } => ObjectMask::three_bar(grid, *bar_width)?,
        MaskSpec::File(path) => ObjectMask::from_pgm(path, cfg.object_grid_pitch)?,
    })
}

fn setup(cfg: &RunConfig, rho0: f64, mask: ObjectMask) -> Result<SimulationSetup> {
    let sources = make_source_grid(cfg.source_diameter, cfg.source_pitch)?.with_power(cfg.source_power)?;
    Ok(SimulationSetup {
        optics: optics(cfg)?,
        sources,
        model: TurbulenceModel::new(rho0, cfg.screen_position_fraction, cfg.paths_independent)?,
        mask,
        reference: reference_grid(cfg)?,
        frames: cfg.frames,
        seed: cfg.seed,
    })
}

/// Object-plane point of a point mask and the reference pixel it images to.
fn point_object(cfg: &RunConfig) -> Result<(Point2, (usize, usize))> {
    let obj = object_grid(cfg)?;
    let p = obj.point(obj.nx() / 2, obj.ny() / 2);
    Ok((p, nearest_pixel(&reference_grid(cfg)?, p)))
}

fn nearest_pixel(grid: &Grid2D, p: Point2) -> (usize, usize) {
    let (fx, fy) = grid.fractional_index(p);
    let clamp = |f: f64, n: usize| (f.round().max(0.0) as usize).min(n - 1);
    (clamp(fx, grid.nx()), clamp(fy, grid.ny()))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_map(dir: &Path, stem: &str, map: &ImageMap) -> Result<()> {
    write_pgm16(&dir.join(format!("{stem}.pgm")), map)?;
    write_csv(&dir.join(format!("{stem}.csv")), map)?;
    Ok(())
}

fn write_psf_csv(path: &Path, result: &Result<PsfMetrics, Error>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "status",
        "peak_ix",
        "peak_iy",
        "peak_value",
        "fwhm_x_m",
        "fwhm_y_m",
        "fwhm_m",
        "fwhm_err_m",
        "second_moment_width_m",
    ])?;
    match result {
        Ok(m) => w.write_record([
            "ok".to_string(),
            m.peak.0.to_string(),
            m.peak.1.to_string(),
            m.peak_value.to_string(),
            m.fwhm_x.to_string(),
            m.fwhm_y.to_string(),
            m.fwhm().to_string(),
            m.fwhm_err().to_string(),
            m.second_moment_width.to_string(),
        ])?,
        Err(e) => {
            let mut row = vec![format!("no detection: {e}")];
            row.extend(std::iter::repeat_n(String::new(), 8));
            w.write_record(row)?
        }
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let c = coherence(cfg)?;
    let mask = mask(cfg)?;
    let is_point = matches!(cfg.mask, MaskSpec::Point);
    let setup = setup(cfg, c.rho0, mask)?;
    prepare_out(&cfg.out)?;

    eprintln!(
        "simulating {} frames, {} subsources, rho0 = {} m",
        cfg.frames,
        setup.sources.len(),
        c.rho0
    );
    let image = run_simulation(setup)?.finalize()?;
    write_map(&cfg.out, "ghost", &image.ghost)?;
    write_map(&cfg.out, "background", &image.background)?;
    write_map(&cfg.out, "stderr", &image.stderr)?;

    let through = if is_point { Some(point_object(cfg)?.1) } else { None };
    let metrics = psf_metrics(&image.ghost, Some(&image.stderr), through);
    write_psf_csv(&cfg.out.join("psf_metrics.csv"), &metrics)?;

    let summary = match &metrics {
        Ok(m) => json!({ "fwhm_m": m.fwhm(), "fwhm_err_m": m.fwhm_err(), "peak": [m.peak.0, m.peak.1] }),
        Err(e) => json!({ "psf": format!("no detection: {e}") }),
    };
    RunRecord::new("simulate", cfg, c.rho0, started, clock.elapsed())
        .outputs(&[
            "ghost.pgm",
            "ghost.csv",
            "background.pgm",
            "background.csv",
            "stderr.pgm",
            "stderr.csv",
            "psf_metrics.csv",
        ])
        .summary(summary)
        .write(&cfg.out)?;

    match metrics {
        Ok(m) => {
            println!(
                "FWHM = {:.2} um ± {:.2} um (x {:.2}, y {:.2})",
                m.fwhm() * 1e6,
                m.fwhm_err() * 1e6,
                m.fwhm_x * 1e6,
                m.fwhm_y * 1e6
            );
            Ok(())
        }
        Err(e) if is_point => Err(Failure::Insufficient(format!("{e}; rerun with more frames"))),
        Err(_) => {
            println!("ghost image written; the object is not a point, so no PSF width is reported");
            Ok(())
        }
    }
}

fn predicted(cfg: &RunConfig, rho0: f64) -> Result<ImageMap> {
    let sources = make_source_grid(cfg.source_diameter, cfg.source_pitch)?.with_power(cfg.source_power)?;
    let params = CoherenceParams::new(
        optics(cfg)?,
        rho0,
        cfg.source_radius,
        cfg.source_power,
        cfg.source_power,
    )?;
    let (rho_b, _) = point_object(cfg)?;
    Ok(predicted_ghost_image(rho_b, &sources, &reference_grid(cfg)?, &params).image)
}

pub fn analytic(cfg: &RunConfig) -> Result<(), Failure> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let c = coherence(cfg)?;
    let optics = optics(cfg)?;
    prepare_out(&cfg.out)?;

    let image = predicted(cfg, c.rho0)?;
    write_map(&cfg.out, "predicted_ghost", &image)?;
    let (_, through) = point_object(cfg)?;
    let metrics = psf_metrics(&image, None, Some(through));
    write_psf_csv(&cfg.out.join("predicted_psf_metrics.csv"), &metrics)?;

    // Bracket factor with ρ_b = ρ_p, out to three coherence lengths (or the
    // source diameter without turbulence), in steps of 1% of that scale.
    let (step, count) = if c.rho0.is_finite() {
        (c.rho0 / 100.0, 300)
    } else {
        (cfg.source_diameter / 100.0, 100)
    };
    let path = cfg.out.join("bracket_curve.csv");
    let mut w = csv::Writer::from_path(&path).context("bracket_curve.csv")?;
    w.write_record(["separation_m", "bracket", "coherence_factor"])
        .context("bracket_curve.csv")?;
    for i in 0..=count {
        let s = step * i as f64;
        let b = bracket(Point2::ORIGIN, Point2::ORIGIN, Point2::new(s, 0.0), Point2::ORIGIN, &optics, c.rho0);
        w.write_record([s.to_string(), b.to_string(), coherence_factor(s, c.rho0).to_string()])
            .context("bracket_curve.csv")?;
    }
    w.flush().context("bracket_curve.csv")?;

    let rows = cancellation_demo(cfg.seed, DEMO_DRAWS);
    let path = cfg.out.join("cancellation_demo.csv");
    let mut w = csv::Writer::from_path(&path).context("cancellation_demo.csv")?;
    w.write_record([
        "phases",
        "draws",
        "mean_corrected_lhs",
        "mean_turbulence_free_lhs",
        "max_relative_deviation",
    ])
    .context("cancellation_demo.csv")?;
    for r in &rows {
        w.write_record([
            r.label.to_string(),
            r.draws.to_string(),
            r.mean_corrected.to_string(),
            r.mean_turbulence_free.to_string(),
            r.max_relative_deviation.to_string(),
        ])
        .context("cancellation_demo.csv")?;
    }
    w.flush().context("cancellation_demo.csv")?;

    let fwhm = metrics.as_ref().ok().map(|m| m.fwhm());
    match fwhm {
        Some(f) => println!("predicted FWHM = {:.2} um", f * 1e6),
        None => println!("predicted PSF has no resolvable half maximum on this grid"),
    }
    let [independent, unit, dependent] = rows;
    println!(
        "cancellation: kappa-independent max relative deviation {:.1e}; mean LHS {:.4} (kappa-dependent) vs {:.4} (kappa-independent)",
        independent.max_relative_deviation, dependent.mean_corrected, unit.mean_corrected
    );

    RunRecord::new("analytic", cfg, c.rho0, started, clock.elapsed())
        .outputs(&[
            "predicted_ghost.pgm",
            "predicted_ghost.csv",
            "predicted_psf_metrics.csv",
            "bracket_curve.csv",
            "cancellation_demo.csv",
        ])
        .summary(json!({
            "predicted_fwhm_m": fwhm,
            "kappa_dependent_mean": dependent.mean_corrected,
            "kappa_independent_max_relative_deviation": independent.max_relative_deviation,
        }))
        .write(&cfg.out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowStatus {
    Ok,
    Insufficient,
    Fail,
}

impl RowStatus {
    fn label(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Insufficient => "insufficient",
            RowStatus::Fail => "fail",
        }
    }
}

struct Row {
    rho0: f64,
    mc: Option<PsfMetrics>,
    analytic: f64,
    tolerance: f64,
    status: RowStatus,
}

impl Row {
    fn relative_error(&self) -> Option<f64> {
        self.mc.map(|m| (m.fwhm() - self.analytic) / self.analytic)
    }
}

/// Within tolerance passes. Outside it, the row is undecided when three
/// standard errors of the simulated FWHM would reach back into tolerance.
fn classify(mc: &PsfMetrics, analytic: f64, tolerance: f64) -> RowStatus {
    let diff = (mc.fwhm() - analytic).abs();
    if diff <= tolerance * analytic {
        RowStatus::Ok
    } else if diff - 3.0 * mc.fwhm_err() <= tolerance * analytic {
        RowStatus::Insufficient
    } else {
        RowStatus::Fail
    }
}

fn mm_label(rho0: f64) -> String {
    if rho0.is_finite() {
        format!("{}", rho0 * 1e3)
    } else {
        "inf".to_string()
    }
}

pub fn compare(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.frames < MIN_DECISION_FRAMES {
        return Err(Failure::Insufficient(format!(
            "{} frames cannot support a tolerance decision; use at least {MIN_DECISION_FRAMES} (--frames)",
            cfg.frames
        )));
    }
    let started = SystemTime::now();
    let clock = Instant::now();
    prepare_out(&cfg.out)?;

    let mut sweep: Vec<f64> = match cfg.rho0_override {
        Some(r) => vec![f64::INFINITY, r],
        None => cfg.compare_rho0.clone(),
    };
    sweep.sort_by(|a, b| b.total_cmp(a));
    sweep.dedup();

    let (_, through) = point_object(cfg)?;
    let mut rows = Vec::with_capacity(sweep.len());
    for &rho0 in &sweep {
        eprintln!("rho0 = {} mm: {} frames", mm_label(rho0), cfg.frames);
        let analytic_image = predicted(cfg, rho0)?;
        let analytic = psf_metrics(&analytic_image, None, Some(through))
            .with_context(|| format!("predicted PSF at rho0 = {} mm", mm_label(rho0)))?
            .fwhm();
        let image = run_simulation(setup(cfg, rho0, ObjectMask::point(object_grid(cfg)?))?)?.finalize()?;
        let mc = psf_metrics(&image.ghost, Some(&image.stderr), Some(through));
        let tolerance = if rho0.is_infinite() {
            cfg.vacuum_tolerance
        } else {
            cfg.tolerance
        };
        let (mc, status) = match mc {
            Ok(m) => (Some(m), classify(&m, analytic, tolerance)),
            Err(e) if e.is_statistical() => (None, RowStatus::Insufficient),
            Err(e) => return Err(e.into()),
        };
        rows.push(Row {
            rho0,
            mc,
            analytic,
            tolerance,
            status,
        });
    }

    // Rows run from the largest ρ₀ down; the simulated FWHM may not shrink
    // by more than three combined standard errors along the way.
    let mut monotone = true;
    for pair in rows.windows(2) {
        if let (Some(a), Some(b)) = (pair[0].mc, pair[1].mc) {
            if b.fwhm() + 3.0 * a.fwhm_err().hypot(b.fwhm_err()) < a.fwhm() {
                monotone = false;
            }
        }
    }

    let path = cfg.out.join("compare.csv");
    let mut w = csv::Writer::from_path(&path).context("compare.csv")?;
    w.write_record([
        "rho0_mm",
        "fwhm_mc_m",
        "fwhm_mc_err_m",
        "fwhm_analytic_m",
        "relative_error",
        "tolerance",
        "status",
    ])
    .context("compare.csv")?;
    println!("{:>8} {:>14} {:>14} {:>10} {:>12}", "rho0_mm", "mc_fwhm_um", "analytic_um", "rel_err", "status");
    for r in &rows {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        w.write_record([
            mm_label(r.rho0),
            opt(r.mc.map(|m| m.fwhm())),
            opt(r.mc.map(|m| m.fwhm_err())),
            r.analytic.to_string(),
            opt(r.relative_error()),
            r.tolerance.to_string(),
            r.status.label().to_string(),
        ])
        .context("compare.csv")?;
        let mc = r.mc.map_or("-".to_string(), |m| format!("{:.1}±{:.1}", m.fwhm() * 1e6, m.fwhm_err() * 1e6));
        let rel = r.relative_error().map_or("-".to_string(), |e| format!("{:+.2}%", e * 100.0));
        println!(
            "{:>8} {:>14} {:>14.1} {:>10} {:>12}",
            mm_label(r.rho0),
            mc,
            r.analytic * 1e6,
            rel,
            r.status.label()
        );
    }
    w.flush().context("compare.csv")?;
    println!("monotone: {monotone}");

    RunRecord::new("compare", cfg, cfg.rho0_override.unwrap_or(f64::INFINITY), started, clock.elapsed())
        .outputs(&["compare.csv"])
        .summary(json!({
            "monotone": monotone,
            "rows": rows.iter().map(|r| json!({
                "rho0_mm": mm_label(r.rho0),
                "fwhm_mc_m": r.mc.map(|m| m.fwhm()),
                "fwhm_analytic_m": r.analytic,
                "status": r.status.label(),
            })).collect::<Vec<_>>(),
        }))
        .write(&cfg.out)?;

    let failed: Vec<String> = rows
        .iter()
        .filter(|r| r.status == RowStatus::Fail)
        .map(|r| mm_label(r.rho0))
        .collect();
    if !failed.is_empty() || !monotone {
        let mut msg = Vec::new();
        if !failed.is_empty() {
            msg.push(format!("rho0 = {} mm outside tolerance", failed.join(", ")));
        }
        if !monotone {
            msg.push("simulated FWHM is not monotone in rho0".to_string());
        }
        return Err(Failure::Tolerance(msg.join("; ")));
    }
    if rows.iter().any(|r| r.status == RowStatus::Insufficient) {
        return Err(Failure::Insufficient(
            "some rows are outside tolerance but within statistical error; rerun with more frames".into(),
        ));
    }
    Ok(())
}
