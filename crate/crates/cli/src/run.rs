//! Subcommand dispatch.

use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use sbmap_core::analysis::{self, SweepResult};
use sbmap_core::cumulants::{self, CumulantReport};
use sbmap_core::rwa;
use sbmap_core::sbm::MapSeries;

use crate::checks::{self, ChoiSummary};
use crate::config::{ConfigError, RunConfig};
use crate::output::{ArtifactWriter, Cell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    /// Exact RWA survival amplitude, generator and lock-in report.
    RwaExact,
    /// Resummed RWA reconstruction against the exact amplitude.
    RwaReconstruct,
    /// Cumulant identities and the λ⁸ scaling of the nested-form residual.
    CumulantCheck,
    /// Spin-boson map series, angle sweep and lock-in report.
    SbmRun,
    /// Angle sweep with envelope-normalized quadratures.
    Sweep,
    /// Quadrature shift, transverse selection, tail and basin reports.
    Analyze,
    /// Choi negativity along the map series.
    ChoiCheck,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::RwaExact,
        Subcommand::RwaReconstruct,
        Subcommand::CumulantCheck,
        Subcommand::SbmRun,
        Subcommand::Sweep,
        Subcommand::Analyze,
        Subcommand::ChoiCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::RwaExact => "rwa-exact",
            Subcommand::RwaReconstruct => "rwa-reconstruct",
            Subcommand::CumulantCheck => "cumulant-check",
            Subcommand::SbmRun => "sbm-run",
            Subcommand::Sweep => "sweep",
            Subcommand::Analyze => "analyze",
            Subcommand::ChoiCheck => "choi-check",
        }
    }
}

impl FromStr for Subcommand {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ConfigError::Invalid {
                field: "run.subcommand".into(),
                message: format!("unknown subcommand {s:?}"),
            })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] sbmap_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 1,
        }
    }
}

/// Where a finished run put its files.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub message: String,
}

/// A report that may have failed without aborting the run.
#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Outcome<T> {
    Ok(T),
    Err { error: String },
}

impl<T> From<sbmap_core::Result<T>> for Outcome<T> {
    fn from(r: sbmap_core::Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Err { error: e.to_string() },
        }
    }
}

/// Runs `cmd` for `cfg`, writing artifacts into `dir`.
pub fn run(cmd: Subcommand, cfg: &RunConfig, dir: &Path, threads: usize) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut w = ArtifactWriter::new(dir)?;
    let threads = threads.max(1);
    let message = match cmd {
        Subcommand::RwaExact => rwa_exact(cfg, &mut w)?,
        Subcommand::RwaReconstruct => rwa_reconstruct(cfg, &mut w)?,
        Subcommand::CumulantCheck => cumulant_check(cfg, &mut w)?,
        Subcommand::SbmRun => sbm_run(cfg, &mut w, threads)?,
        Subcommand::Sweep => sweep(cfg, &mut w, threads)?,
        Subcommand::Analyze => analyze(cfg, &mut w, threads)?,
        Subcommand::ChoiCheck => choi_check(cfg, &mut w, threads)?,
    };
    let dir = w.dir().to_path_buf();
    let manifest = w.finish(cmd.name(), cfg, threads, start.elapsed())?;
    Ok(RunSummary { dir, manifest, message })
}

fn rwa_exact(cfg: &RunConfig, w: &mut ArtifactWriter) -> Result<String, RunError> {
    let model = cfg.rwa_model();
    let series = checks::rwa_exact(cfg)?;
    let tc = rwa::two_component_series(&model, &series.times)?;
    let solver = series.solver.name();
    w.csv(
        "survival.csv",
        "survival",
        1,
        &["t", "re_f", "im_f", "abs_f", "arg_f", "two_component_re", "two_component_im", "solver"],
        series.times.iter().zip(&series.f).zip(&tc.f).map(|((&t, f), g)| {
            vec![
                t.into(),
                f.re.into(),
                f.im.into(),
                f.norm().into(),
                f.arg().into(),
                g.re.into(),
                g.im.into(),
                solver.into(),
            ]
        }),
    )?;
    let generator = rwa::exact_generator(&series)?;
    w.csv(
        "generator.csv",
        "generator",
        1,
        &["t", "spike", "l_pop", "l_coh_re", "l_coh_im"],
        generator.iter().map(|g| {
            let (p, c) = match &g.generator {
                Some(l) => (l.m[(0, 0)].re, l.m[(2, 2)]),
                None => (f64::NAN, f64::NAN.into()),
            };
            vec![g.t.into(), g.spike.into(), p.into(), c.re.into(), c.im.into()]
        }),
    )?;
    let report = checks::rwa_lock_in(cfg, &series)?;
    w.json("lockin.json", "rwa_lockin", 1, &report)?;
    Ok(format!(
        "{} samples; balance t_P = {}; extracted t_P = {}",
        series.len(),
        fmt_opt(report.balance.map(|b| b.numeric)),
        fmt_opt(report.extracted.map(|r| r.t_p)),
    ))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.2}"))
}

#[derive(Serialize)]
struct ReconstructionJson {
    t_p: Option<f64>,
    report: checks::ReconstructionReport,
}

fn rwa_reconstruct(cfg: &RunConfig, w: &mut ArtifactWriter) -> Result<String, RunError> {
    let model = cfg.rwa_model();
    let exact = checks::rwa_exact(cfg)?;
    let rec = rwa::reconstruct_rwa(&model, &exact.times)?;
    let t_p = rwa::lock_in_time(&model).ok().map(|l| l.numeric);
    let window_end = t_p.map_or(cfg.grid.t_max, |t| 2.0 * t);
    let report = checks::reconstruction_errors(&exact, &rec, window_end)?;
    w.csv(
        "reconstruction.csv",
        "reconstruction",
        1,
        &["t", "exact_re", "exact_im", "rec_re", "rec_im", "amplitude_error", "phase_error"],
        exact.times.iter().zip(&exact.f).zip(&rec.series.f).map(|((&t, e), r)| {
            vec![
                t.into(),
                e.re.into(),
                e.im.into(),
                r.re.into(),
                r.im.into(),
                (r.norm() / e.norm() - 1.0).abs().into(),
                checks::wrap_phase(r.arg() - e.arg()).abs().into(),
            ]
        }),
    )?;
    w.json("reconstruction.json", "reconstruction_report", 1, &ReconstructionJson { t_p, report })?;
    Ok(format!(
        "max amplitude error {:.3} at t = {:.1}; max phase error {:.3} rad at t = {:.1}",
        report.max_amplitude_error, report.t_amplitude, report.max_phase_error, report.t_phase
    ))
}

#[derive(Serialize)]
struct Scaling {
    t: f64,
    residual: f64,
    /// Same with `λ²/4`.
    residual_quarter: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct CumulantJson {
    probes: Vec<CumulantReport>,
    lambda8_scaling: Vec<Scaling>,
}

fn cumulant_check(cfg: &RunConfig, w: &mut ArtifactWriter) -> Result<String, RunError> {
    let model = cfg.rwa_model();
    let quarter = rwa::RwaModel {
        bath: model.bath.scaled(0.25),
        ..model
    };
    let mut probes = Vec::new();
    let mut scaling = Vec::new();
    for &t in &cfg.run.probe_times {
        probes.push(cumulants::cumulant_report(&model, t)?);
        let a = cumulants::nested_residual(&model, t)?.norm();
        let b = cumulants::nested_residual(&quarter, t)?.norm();
        scaling.push(Scaling {
            t,
            residual: a,
            residual_quarter: b,
            ratio: a / b,
        });
    }
    let worst = probes
        .iter()
        .flat_map(|p| p.delta_identity.iter().filter(|d| d.n <= 2))
        .map(|d| d.relative_residual())
        .fold(0.0, f64::max);
    let ratios: Vec<String> = scaling.iter().map(|s| format!("{:.1}", s.ratio)).collect();
    w.json(
        "cumulants.json",
        "cumulant_report",
        1,
        &CumulantJson {
            probes,
            lambda8_scaling: scaling,
        },
    )?;
    Ok(format!("λ⁸ ratios [{}]; worst Δ-identity residual (n ≤ 2) {worst:.2e}", ratios.join(", ")))
}

fn write_map_series(w: &mut ArtifactWriter, series: &MapSeries) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    for prefix in ["c", "phi"] {
        for r in 0..4 {
            for c in 0..4 {
                header.push(format!("{prefix}_{r}{c}_re"));
                header.push(format!("{prefix}_{r}{c}_im"));
            }
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv(
        "map_series.csv",
        "map_series",
        1,
        &header,
        (0..series.len()).map(|k| {
            let mut row: Vec<Cell> = vec![series.times[k].into()];
            for op in [&series.c[k], &series.phi_map[k]] {
                for r in 0..4 {
                    for c in 0..4 {
                        row.push(op.m[(r, c)].re.into());
                        row.push(op.m[(r, c)].im.into());
                    }
                }
            }
            row
        }),
    )?;
    w.json("map_meta.json", "map_meta", 1, &series.meta)
}

fn write_sweep(w: &mut ArtifactWriter, sw: &SweepResult) -> io::Result<()> {
    w.csv(
        "sweep.csv",
        "sweep",
        1,
        &["t", "phi", "sx", "sy", "sz"],
        (0..sw.times.len()).flat_map(|k| {
            (0..sw.phis.len()).map(move |j| {
                vec![
                    sw.times[k].into(),
                    sw.phis[j].into(),
                    sw.sx[k][j].into(),
                    sw.sy[k][j].into(),
                    sw.sz[k][j].into(),
                ]
            })
        }),
    )
}

fn write_tp_curve(w: &mut ArtifactWriter, lock: &checks::SbmLockIn) -> io::Result<()> {
    w.csv(
        "tp_phi.csv",
        "tp_phi",
        1,
        &["phi", "t_p"],
        lock.curve
            .phis
            .iter()
            .zip(&lock.curve.t_p)
            .map(|(&p, t)| vec![p.into(), t.unwrap_or(f64::NAN).into()]),
    )?;
    w.json("lockin.json", "sbm_lockin", 1, lock)
}

fn sbm_run(cfg: &RunConfig, w: &mut ArtifactWriter, threads: usize) -> Result<String, RunError> {
    let series = checks::integrate(cfg)?;
    write_map_series(w, &series)?;
    let sw = checks::sweep(&series, &cfg.phis(), &series.times, cfg.model.delta_phi, threads)?;
    write_sweep(w, &sw)?;
    let lock = checks::sbm_lock_in(cfg, &sw);
    write_tp_curve(w, &lock)?;
    Ok(format!("{} samples; median t_P = {}", series.len(), fmt_opt(lock.t_p)))
}

fn sweep(cfg: &RunConfig, w: &mut ArtifactWriter, threads: usize) -> Result<String, RunError> {
    let series = checks::integrate(cfg)?;
    w.json("map_meta.json", "map_meta", 1, &series.meta)?;
    let sw = checks::sweep(&series, &cfg.phis(), &series.times, cfg.model.delta_phi, threads)?;
    write_sweep(w, &sw)?;
    let norm = analysis::envelope_normalize(&sw);
    w.csv(
        "normalized.csv",
        "normalized_sweep",
        1,
        &["t", "phi", "sx", "sy", "envelope", "valid"],
        (0..norm.times.len()).flat_map(|k| {
            let norm = &norm;
            let phis = &sw.phis;
            (0..phis.len()).map(move |j| {
                vec![
                    norm.times[k].into(),
                    phis[j].into(),
                    norm.sx[k][j].into(),
                    norm.sy[k][j].into(),
                    norm.envelope[k].into(),
                    norm.valid[k].into(),
                ]
            })
        }),
    )?;
    let lock = checks::sbm_lock_in(cfg, &sw);
    write_tp_curve(w, &lock)?;
    Ok(format!("{} × {} sweep; median t_P = {}", sw.times.len(), sw.phis.len(), fmt_opt(lock.t_p)))
}

#[derive(Serialize)]
struct ShiftJson {
    #[serde(flatten)]
    report: Outcome<checks::ShiftReport>,
    note: &'static str,
}

fn analyze(cfg: &RunConfig, w: &mut ArtifactWriter, threads: usize) -> Result<String, RunError> {
    let series = checks::integrate(cfg)?;
    w.json("map_meta.json", "map_meta", 1, &series.meta)?;
    let phis = cfg.phis();
    let sw = checks::sweep(&series, &phis, &series.times, cfg.model.delta_phi, threads)?;
    let lock = checks::sbm_lock_in(cfg, &sw);
    write_tp_curve(w, &lock)?;
    let t_p = lock.t_p.ok_or_else(|| {
        sbmap_core::Error::Fit(format!(
            "t_P could not be extracted at any angle (t_max = {}); lengthen the run",
            cfg.grid.t_max
        ))
    })?;

    let shift = checks::quadrature_shift(cfg, &series, t_p, threads);
    let delta_phi = shift.as_ref().map_or(cfg.model.delta_phi, |s| s.shift.delta_phi);
    let shift_line = match &shift {
        Ok(s) => format!("δφ = {:.4} (configured {:.4})", s.shift.delta_phi, s.reference),
        Err(e) => format!("δφ failed: {e}"),
    };
    w.json(
        "shift.json",
        "quadrature_shift",
        1,
        &ShiftJson {
            report: shift.into(),
            note: checks::OMEGA_C_NOTE,
        },
    )?;

    let transverse: Outcome<_> = checks::transverse_selection(&series, &phis, delta_phi, t_p, threads).into();
    w.json("transverse.json", "transverse_selection", 1, &transverse)?;

    let tail: Outcome<_> = checks::sbm_tail(&series, cfg.bath.s, &phis, threads).into();
    w.json("tail.json", "tail_exponent", 1, &tail)?;

    let basins = checks::basins(cfg, cfg.run.basin_factor * t_p, delta_phi, threads);
    let basin_line = match &basins {
        Ok(b) => format!("{} basin segments, gaps/π {:?}", b.basin_segments(), b.gap_widths.iter().map(|g| g / std::f64::consts::PI).collect::<Vec<_>>()),
        Err(e) => format!("basins failed: {e}"),
    };
    let basins: Outcome<_> = basins.into();
    w.json("basins.json", "basins", 1, &basins)?;
    Ok(format!("t_P = {t_p:.1}; {shift_line}; {basin_line}"))
}

#[derive(Serialize)]
struct ChoiJson {
    t_p: Option<f64>,
    #[serde(flatten)]
    summary: ChoiSummary,
}

fn choi_check(cfg: &RunConfig, w: &mut ArtifactWriter, threads: usize) -> Result<String, RunError> {
    let series = checks::integrate(cfg)?;
    let sw = checks::sweep(&series, &analysis::angle_grid(16), &series.times, 0.0, threads)?;
    let t_p = checks::sbm_lock_in(cfg, &sw).t_p;
    let t_late = t_p.unwrap_or(cfg.grid.t_max);
    let report = checks::choi_with_transient(cfg, &series, t_late)?;
    w.csv(
        "choi.csv",
        "choi",
        1,
        &["t", "negativity"],
        report.times.iter().zip(&report.negativity).map(|(&t, &n)| vec![t.into(), n.into()]),
    )?;
    let summary = checks::choi_summary(&report, cfg.bath.omega_c);
    let line = format!(
        "min negativity {:.3e} at t = {:.3}; bound {} {}",
        summary.min,
        summary.t_min,
        summary.bound,
        if summary.pass { "met" } else { "violated" }
    );
    w.json("choi.json", "choi_report", 1, &ChoiJson { t_p, summary })?;
    Ok(line)
}
