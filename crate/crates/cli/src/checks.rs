//! Derived quantities shared by the subcommands and the acceptance harness.

use std::f64::consts::PI;
use std::thread;

use serde::{Deserialize, Serialize};

use sbmap_core::analysis::{
    self, BasinReport, ChoiReport, LockInReport, QuadratureShift, SweepResult, TpCurve, TpOptions,
};
use sbmap_core::rwa::{self, LockIn, Reconstruction, SurvivalSeries};
use sbmap_core::sbm::{self, MapSeries, Solver, TimeGrid};
use sbmap_core::{Complex64, Error, Result};

use crate::config::{RunConfig, RwaSolver, SbmSolver};

/// Gate on the Choi minimum.
pub const CHOI_BOUND: f64 = -1e-5;
/// Late-time Choi negativity must vanish to this level.
pub const CHOI_LATE: f64 = 1e-9;
/// Choi checks sample `[0, CHOI_EARLY/ω_c]` at the integration step.
pub const CHOI_EARLY: f64 = 10.0;
/// Gate on the normalized transverse residual.
pub const TRANSVERSE_LIMIT: f64 = 1e-3;
/// Angle count of the basin sweep.
pub const BASIN_PHI_COUNT: usize = 4096;
/// Sample spacing of the local basin series.
/// Samples per counter-rotating period in the basin average.
pub const BASIN_PERIOD_SAMPLES: usize = 16;

pub const OMEGA_C_NOTE: &str = "Reference shifts are reproduced with omega_c = 4; \
the value omega_c = 0.4 sometimes quoted alongside them is treated as a misprint.";

/// `0, h, 2h, …` up to the first sample at or beyond `t_max`.
pub fn sample_times(t_max: f64, h: f64) -> Vec<f64> {
    let n = (t_max / h - 1e-9).ceil() as usize;
    (0..=n).map(|k| k as f64 * h).collect()
}

pub fn tp_options(cfg: &RunConfig) -> TpOptions {
    TpOptions {
        t_start: cfg.tp_start(),
        slope_window: cfg.run.slope_window,
    }
}

fn solver(cfg: &RunConfig) -> Solver {
    match cfg.run.solver {
        SbmSolver::Rk4 => Solver::Rk4,
        SbmSolver::Quadrature => Solver::Quadrature,
    }
}

/// Map series on the configured grid.
pub fn integrate(cfg: &RunConfig) -> Result<MapSeries> {
    integrate_to(cfg, cfg.grid.t_max, cfg.sample_dt())
}

pub fn integrate_to(cfg: &RunConfig, t_max: f64, spacing: f64) -> Result<MapSeries> {
    let model = cfg.sbm_model();
    model.validate()?;
    let grid = TimeGrid::covering(t_max, cfg.grid.dt, spacing.max(cfg.grid.dt))?;
    sbm::integrate_correlator(&model, &grid, solver(cfg))
}

/// [`analysis::phi_sweep`] split into contiguous angle chunks, one per thread.
/// Every angle is evolved independently, so the result does not depend on
/// `threads`.
pub fn sweep(series: &MapSeries, phis: &[f64], times: &[f64], delta_phi: f64, threads: usize) -> Result<SweepResult> {
    let threads = threads.clamp(1, phis.len().max(1));
    if threads == 1 {
        return analysis::phi_sweep(series, phis, times, delta_phi);
    }
    let chunk = phis.len().div_ceil(threads);
    let parts: Vec<Result<SweepResult>> = thread::scope(|s| {
        let handles: Vec<_> = phis
            .chunks(chunk)
            .map(|c| s.spawn(move || analysis::phi_sweep(series, c, times, delta_phi)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut out = SweepResult {
        phis: phis.to_vec(),
        times: times.to_vec(),
        sx: vec![Vec::with_capacity(phis.len()); times.len()],
        sy: vec![Vec::with_capacity(phis.len()); times.len()],
        sz: vec![Vec::with_capacity(phis.len()); times.len()],
        delta_phi,
    };
    for part in parts {
        let part = part?;
        for k in 0..times.len() {
            out.sx[k].extend_from_slice(&part.sx[k]);
            out.sy[k].extend_from_slice(&part.sy[k]);
            out.sz[k].extend_from_slice(&part.sz[k]);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- RWA

/// Exact `f` on the configured sample grid.
pub fn rwa_exact(cfg: &RunConfig) -> Result<SurvivalSeries> {
    let model = cfg.rwa_model();
    let h = cfg.sample_dt();
    match cfg.run.rwa_solver {
        RwaSolver::Frequency => rwa::exact_f_frequency(&model, &sample_times(cfg.grid.t_max, h)),
        RwaSolver::Volterra => {
            let stride = (h / cfg.grid.dt).round().max(1.0) as usize;
            let steps = (cfg.grid.t_max / cfg.grid.dt).ceil() as usize;
            let steps = steps.div_ceil(stride) * stride;
            let full = rwa::exact_f_volterra(&model, cfg.grid.dt, steps)?.series;
            let pick = |v: &[Complex64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
            Ok(SurvivalSeries {
                times: full.times.iter().step_by(stride).copied().collect(),
                f: pick(&full.f),
                fdot: full.fdot.as_deref().map(pick),
                solver: full.solver,
                error_estimate: full.error_estimate,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLockSummary {
    pub t_lock: f64,
    pub max_after: f64,
    pub locked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSlip {
    pub t: f64,
    /// Jump of `arg(f e^{iΔt})` between neighbouring samples.
    pub jump: f64,
}

/// Lock-in diagnostics of an exact RWA series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwaLockInReport {
    pub balance: Option<LockIn>,
    pub balance_error: Option<String>,
    pub extracted: Option<LockInReport>,
    pub extract_error: Option<String>,
    /// Log-log slope of `|f|` over the last decade.
    pub tail_exponent: Option<f64>,
    pub expected_tail: f64,
    /// Phase of `f` against `C(t)` from `3 t_P`.
    pub phase_lock: Option<PhaseLockSummary>,
    /// Largest phase jump within `[t_P/2, 3t_P/2]`.
    pub phase_slip: Option<PhaseSlip>,
}

pub fn rwa_lock_in(cfg: &RunConfig, series: &SurvivalSeries) -> Result<RwaLockInReport> {
    let model = cfg.rwa_model();
    let bath = model.bath()?;
    let (balance, balance_error) = match rwa::lock_in_time(&model) {
        Ok(l) => (Some(l), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mags: Vec<f64> = series.f.iter().map(|z| z.norm()).collect();
    let (extracted, extract_error) = match analysis::extract_tp(&series.times[1..], &mags[1..], &tp_options(cfg)) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let tail_exponent = analysis::tail_exponent(&series.times[1..], &mags[1..]).ok();
    let t_p = balance.map(|b| b.numeric).or(extracted.map(|r| r.t_p));
    let mut phase_lock = None;
    let mut phase_slip = None;
    if let Some(t_p) = t_p {
        let t_max = *series.times.last().unwrap_or(&0.0);
        if t_max > 4.0 * t_p {
            let reference = series
                .times
                .iter()
                .map(|&t| bath.correlation(t))
                .collect::<Result<Vec<_>>>()?;
            if let Ok(r) = analysis::phase_lock_check(&series.times, &series.f, &reference, 3.0 * t_p) {
                phase_lock = Some(PhaseLockSummary {
                    t_lock: r.t_lock,
                    max_after: r.max_after,
                    locked: r.locked,
                });
            }
        }
        let (times, demod): (Vec<f64>, Vec<Complex64>) = series
            .times
            .iter()
            .zip(&series.f)
            .filter(|(t, _)| **t >= 0.5 * t_p && **t <= 1.5 * t_p)
            .map(|(&t, &f)| (t, f * Complex64::from_polar(1.0, model.delta * t)))
            .unzip();
        phase_slip = analysis::largest_phase_jump(&times, &demod).map(|(t, jump)| PhaseSlip { t, jump });
    }
    Ok(RwaLockInReport {
        balance,
        balance_error,
        extracted,
        extract_error,
        tail_exponent,
        expected_tail: -(cfg.bath.s + 1.0),
        phase_lock,
        phase_slip,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub window_end: f64,
    /// `max ||f_rec|/|f| - 1|` over the window.
    pub max_amplitude_error: f64,
    pub t_amplitude: f64,
    /// `max |arg f_rec - arg f|` over the window.
    pub max_phase_error: f64,
    pub t_phase: f64,
    pub quadrature_error: Option<f64>,
    pub amplitude_limit: f64,
    pub phase_limit: f64,
    pub pass: bool,
}

pub fn wrap_phase(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Pointwise errors of a reconstruction against the exact series on the same grid.
pub fn reconstruction_errors(exact: &SurvivalSeries, rec: &Reconstruction, window_end: f64) -> Result<ReconstructionReport> {
    if exact.times != rec.series.times {
        return Err(Error::Domain("exact and reconstructed grids differ".into()));
    }
    let (mut amp, mut t_amp, mut ph, mut t_ph) = (0.0, 0.0, 0.0, 0.0);
    for ((&t, e), r) in exact.times.iter().zip(&exact.f).zip(&rec.series.f) {
        if t > window_end {
            break;
        }
        let a = (r.norm() / e.norm() - 1.0).abs();
        let p = wrap_phase(r.arg() - e.arg()).abs();
        if a > amp {
            (amp, t_amp) = (a, t);
        }
        if p > ph {
            (ph, t_ph) = (p, t);
        }
    }
    Ok(ReconstructionReport {
        window_end,
        max_amplitude_error: amp,
        t_amplitude: t_amp,
        max_phase_error: ph,
        t_phase: t_ph,
        quadrature_error: rec.series.error_estimate,
        amplitude_limit: 0.15,
        phase_limit: 0.3,
        pass: amp <= 0.15 && ph <= 0.3,
    })
}

// ---------------------------------------------------------------- SBM

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmLockIn {
    pub options: TpOptions,
    pub curve: TpCurve,
    /// Median over the angles with a successful extraction.
    pub t_p: Option<f64>,
}

pub fn sbm_lock_in(cfg: &RunConfig, sweep: &SweepResult) -> SbmLockIn {
    let options = tp_options(cfg);
    let curve = analysis::tp_vs_phi(sweep, &options);
    let t_p = curve.median();
    SbmLockIn { options, curve, t_p }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub shift: QuadratureShift,
    pub t_p: f64,
    /// Configured `δφ` the extraction is compared with.
    pub reference: f64,
    pub relative_deviation: f64,
    pub omega_c: f64,
}

/// δφ from an unrotated sweep at `t_ref_factor · t_P`.
pub fn quadrature_shift(cfg: &RunConfig, series: &MapSeries, t_p: f64, threads: usize) -> Result<ShiftReport> {
    let t_ref = cfg.run.t_ref_factor * t_p;
    let phis = cfg.phis();
    let sw = sweep(series, &phis, &[t_ref, 1.5 * t_ref], 0.0, threads)?;
    let shift = analysis::extract_quadrature_shift(&sw, t_ref)?;
    let reference = cfg.model.delta_phi;
    Ok(ShiftReport {
        shift,
        t_p,
        reference,
        relative_deviation: if reference == 0.0 { f64::NAN } else { shift.delta_phi / reference - 1.0 },
        omega_c: cfg.bath.omega_c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseReport {
    pub delta_phi: f64,
    pub window: (f64, f64),
    /// Largest envelope-normalized `|⟨σy⟩|` in the window.
    pub max_sy: f64,
    pub t_max_sy: f64,
    /// Largest move of `argmax_φ ⟨σx⟩` from its position at the window start, in grid cells.
    pub argmax_drift: usize,
    pub decades: f64,
    pub pass: bool,
}

/// Normalized transverse residual and freezing of the locked pattern over
/// `[3 t_P, 10 t_P]` (clipped to the series).
pub fn transverse_selection(
    series: &MapSeries,
    phis: &[f64],
    delta_phi: f64,
    t_p: f64,
    threads: usize,
) -> Result<TransverseReport> {
    let sw = sweep(series, phis, &series.times, delta_phi, threads)?;
    let norm = analysis::envelope_normalize(&sw);
    let t_end = series.times.last().copied().unwrap_or(0.0);
    let window = (3.0 * t_p, (10.0 * t_p).min(t_end));
    if window.1 <= window.0 {
        return Err(Error::Domain(format!("series ends at {t_end}, before 3 t_P = {}", window.0)));
    }
    let n = phis.len();
    let argmax = |row: &[f64]| {
        (0..n)
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
            .unwrap_or(0)
    };
    let (mut max_sy, mut t_max_sy) = (0.0, window.0);
    let mut start = None;
    let mut drift = 0;
    for (k, &t) in norm.times.iter().enumerate() {
        if t < window.0 || t > window.1 || !norm.valid[k] {
            continue;
        }
        for v in &norm.sy[k] {
            if v.abs() > max_sy {
                (max_sy, t_max_sy) = (v.abs(), t);
            }
        }
        let j = argmax(&norm.sx[k]);
        let j0 = *start.get_or_insert(j);
        let d = j.abs_diff(j0);
        drift = drift.max(d.min(n - d));
    }
    let decades = (window.1 / window.0).log10();
    Ok(TransverseReport {
        delta_phi,
        window,
        max_sy,
        t_max_sy,
        argmax_drift: drift,
        decades,
        pass: max_sy <= TRANSVERSE_LIMIT && drift as f64 <= decades.max(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub exponent: f64,
    pub expected: f64,
    pub relative_error: f64,
    pub window: (f64, f64),
    pub pass: bool,
}

/// Last-decade log-log slope of the `φ`-envelope of `⟨σx⟩` (half its peak-to-peak range).
pub fn sbm_tail(series: &MapSeries, s: f64, phis: &[f64], threads: usize) -> Result<TailReport> {
    let times: Vec<f64> = series.times.iter().copied().filter(|&t| t > 0.0).collect();
    let sw = sweep(series, phis, &times, 0.0, threads)?;
    let env: Vec<f64> = sw
        .sx
        .iter()
        .map(|row| {
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            0.5 * (hi - lo)
        })
        .collect();
    tail_report(&times, &env, s)
}

pub fn tail_report(times: &[f64], values: &[f64], s: f64) -> Result<TailReport> {
    let exponent = analysis::tail_exponent(times, values)?;
    let expected = -(s + 1.0);
    let t_max = times.last().copied().unwrap_or(0.0);
    let relative_error = (exponent / expected - 1.0).abs();
    Ok(TailReport {
        exponent,
        expected,
        relative_error,
        window: (0.1 * t_max, t_max),
        pass: relative_error <= 0.05,
    })
}

/// Basin labels at `t_late`, averaged over one counter-rotating period.
///
/// The period is sampled at [`BASIN_PERIOD_SAMPLES`] equally spaced points
/// (half-open), so the breathing at `2Δ̃` averages out exactly instead of
/// leaving an end-point residual comparable to the gap contrast.
pub fn basins(cfg: &RunConfig, t_late: f64, delta_phi: f64, threads: usize) -> Result<BasinReport> {
    let model = cfg.sbm_model();
    model.validate()?;
    let window = PI / sbm::davies_rates(&model)?.delta_tilde;
    let n = BASIN_PERIOD_SAMPLES;
    let stride = (window / (n as f64 * cfg.grid.dt)).ceil() as usize;
    let spacing = window / n as f64;
    let grid = TimeGrid {
        dt: spacing / stride as f64,
        stride,
        samples: ((t_late + window) / spacing).ceil() as usize,
    };
    let local = sbm::integrate_correlator(&model, &grid, solver(cfg))?;
    let first = ((t_late / spacing).round() as usize).saturating_sub(n / 2);
    let times = local.times[first..first + n].to_vec();
    let centre = 0.5 * (times[0] + times[n - 1]);
    let sw = sweep(&local, &analysis::angle_grid(BASIN_PHI_COUNT), &times, delta_phi, threads)?;
    // picks exactly the n samples: their half-spread is (n-1)/2 spacings
    analysis::basin_classify(&sw, centre, (n as f64 - 0.5) * spacing)
}

/// Choi negativity of `series`, with `[0, CHOI_EARLY/ω_c]` resampled at the
/// integration step: the transient lives at `t ≲ 1/ω_c`, far below the usual
/// output spacing.
pub fn choi_with_transient(cfg: &RunConfig, series: &MapSeries, t_late: f64) -> Result<ChoiReport> {
    let early_end = (CHOI_EARLY / cfg.bath.omega_c).min(cfg.grid.t_max);
    let early = integrate_to(cfg, early_end, cfg.grid.dt)?;
    let mut report = analysis::choi_report(&early, t_late);
    let seam = report.times.last().copied().unwrap_or(0.0);
    let late = analysis::choi_report(series, t_late);
    for (&t, &n) in late.times.iter().zip(&late.negativity) {
        if t > seam {
            report.times.push(t);
            report.negativity.push(n);
        }
    }
    report.late_max_abs = late.late_max_abs;
    if late.min < report.min {
        (report.min, report.t_min) = (late.min, late.t_min);
    }
    report.last_negative = late.last_negative.filter(|&t| t > seam).or(report.last_negative);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiSummary {
    pub min: f64,
    pub t_min: f64,
    pub last_negative: Option<f64>,
    pub late_max_abs: f64,
    pub t_late: f64,
    pub bound: f64,
    /// Transient must end before `5/ω_c`.
    pub transient_limit: f64,
    pub bounded: bool,
    pub confined: bool,
    pub late_zero: bool,
    pub pass: bool,
}

pub fn choi_summary(report: &ChoiReport, omega_c: f64) -> ChoiSummary {
    let transient_limit = 5.0 / omega_c;
    let bounded = report.min >= CHOI_BOUND;
    let confined = report.last_negative.is_none_or(|t| t < transient_limit);
    let late_zero = report.late_max_abs <= CHOI_LATE;
    ChoiSummary {
        min: report.min,
        t_min: report.t_min,
        last_negative: report.last_negative,
        late_max_abs: report.late_max_abs,
        t_late: report.t_late,
        bound: CHOI_BOUND,
        transient_limit,
        bounded,
        confined,
        late_zero,
        pass: bounded && confined && late_zero,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_grid_covers_t_max() {
        let t = sample_times(10.0, 2.5);
        assert_eq!(t, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        assert_eq!(*sample_times(9.0, 2.5).last().unwrap(), 10.0);
    }

    #[test]
    fn phase_wrap() {
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_phase(-0.1) + 0.1).abs() < 1e-15);
    }
}
