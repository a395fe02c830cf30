//! Extraction procedures on simulated series.
//!
//! Angle convention: a sweep with rotation `δφ` prepares
//! `ρ(0) = ½(1 + cos φ σx' + sin φ σy')` with `σx' = cos δφ σx + sin δφ σy`,
//! `σy' = -sin δφ σx + cos δφ σy`, and reports `⟨σx'⟩, ⟨σy'⟩, ⟨σz⟩`. In the
//! bare frame the preparation azimuth is therefore `φ + δφ`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbm::{apply_map, MapSeries};
use crate::superop::{choi_negativity, QubitState};

/// Relative deviation of the local log-slope that ends the early window.
pub const SLOPE_DEVIATION: f64 = 0.2;

/// Allowed relative drift of δφ between `t_ref` and `1.5 t_ref`.
pub const SHIFT_DRIFT_LIMIT: f64 = 0.1;

/// Gap threshold in units of the residual transverse level.
pub const GAP_FACTOR: f64 = 3.0;

/// Envelope smoothing window as a fraction of the number of time samples.
pub const ENVELOPE_WINDOW: f64 = 0.05;

/// Bound on the phase-lock residual after `3 t_P`.
pub const PHASE_LOCK_LIMIT: f64 = 0.2;

/// Expectation values over an angle × time grid, indexed `[time][angle]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub phis: Vec<f64>,
    pub times: Vec<f64>,
    pub sx: Vec<Vec<f64>>,
    pub sy: Vec<Vec<f64>>,
    pub sz: Vec<Vec<f64>>,
    pub delta_phi: f64,
}

impl SweepResult {
    /// Index of the sample time closest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 {
            0
        } else if k >= self.times.len() {
            self.times.len() - 1
        } else if (self.times[k] - t).abs() < (t - self.times[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }

    /// Largest Bloch norm over the grid.
    pub fn max_bloch_norm(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.times.len() {
            for j in 0..self.phis.len() {
                let n = (self.sx[k][j].powi(2) + self.sy[k][j].powi(2) + self.sz[k][j].powi(2)).sqrt();
                worst = worst.max(n);
            }
        }
        worst
    }
}

/// Uniform angle grid on `[0, 2π)`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| TAU * j as f64 / n as f64).collect()
}

/// Evolves the rotated equatorial preparations through `series` at `times`.
pub fn phi_sweep(series: &MapSeries, phis: &[f64], times: &[f64], delta_phi: f64) -> Result<SweepResult> {
    if phis.is_empty() || times.is_empty() {
        return Err(Error::Domain("sweep needs at least one angle and one time".into()));
    }
    let (sd, cd) = delta_phi.sin_cos();
    let states: Vec<QubitState> = phis.iter().map(|&p| QubitState::equator(p + delta_phi)).collect();
    let n = times.len();
    let mut out = SweepResult {
        phis: phis.to_vec(),
        times: times.to_vec(),
        sx: Vec::with_capacity(n),
        sy: Vec::with_capacity(n),
        sz: Vec::with_capacity(n),
        delta_phi,
    };
    for &t in times {
        let map = series.map_at(t)?;
        let (mut x, mut y, mut z) = (Vec::with_capacity(phis.len()), Vec::new(), Vec::new());
        for rho in &states {
            let [bx, by, bz] = apply_map(&map, rho, t)?.state.bloch();
            x.push(cd * bx + sd * by);
            y.push(-sd * bx + cd * by);
            z.push(bz);
        }
        out.sx.push(x);
        out.sy.push(y);
        out.sz.push(z);
    }
    Ok(out)
}

/// Principal axis of a point cloud: `(angle, major, minor)` with the angle in
/// `(-π/2, π/2]` and `major`, `minor` the largest extents along and across it.
fn principal_axis(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a - mx, b - my);
        sxx += u * u;
        syy += v * v;
        sxy += u * v;
    }
    let mut theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if theta <= -PI / 2.0 {
        theta += PI;
    }
    let (s, c) = theta.sin_cos();
    let (mut major, mut minor): (f64, f64) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a - mx, b - my);
        major = major.max((c * u + s * v).abs());
        minor = minor.max((-s * u + c * v).abs());
    }
    (theta, major, minor)
}

/// Quadrature shift extracted from a δφ = 0 sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureShift {
    pub delta_phi: f64,
    pub slope: f64,
    pub t_ref: f64,
    /// δφ recomputed at `1.5 t_ref`.
    pub delta_phi_check: f64,
    /// `|check/δφ - 1|`.
    pub drift: f64,
    /// `drift ≤ SHIFT_DRIFT_LIMIT`.
    pub stable: bool,
    /// Minor-to-major extent of the `(sx, sy)` ellipse at `t_ref`.
    pub contrast: f64,
}

/// Total-least-squares angle of `sy` against `sx` at the sweep time nearest
/// `t`, in the sweep's own (rotated) frame, with the ellipse contrast.
pub fn quadrature_angle(sweep: &SweepResult, t: f64) -> Result<(f64, f64)> {
    let k = sweep.time_index(t);
    let (x, y) = (&sweep.sx[k], &sweep.sy[k]);
    let (theta, major, minor) = principal_axis(x, y);
    let scale = x.iter().chain(y).map(|v| v.abs()).fold(0.0, f64::max);
    if !(major > 0.0 && scale > 0.0) || !theta.is_finite() {
        return Err(Error::Fit(format!("degenerate sweep at t = {}", sweep.times[k])));
    }
    Ok((theta, minor / major))
}

/// `δφ = atan(slope)` from the sweep at `t_ref`, with a drift check at `1.5 t_ref`.
pub fn extract_quadrature_shift(sweep: &SweepResult, t_ref: f64) -> Result<QuadratureShift> {
    let (delta_phi, contrast) = quadrature_angle(sweep, t_ref)?;
    let (check, _) = quadrature_angle(sweep, 1.5 * t_ref)?;
    let drift = if delta_phi == 0.0 { (check - delta_phi).abs() } else { (check / delta_phi - 1.0).abs() };
    Ok(QuadratureShift {
        delta_phi,
        slope: delta_phi.tan(),
        t_ref: sweep.times[sweep.time_index(t_ref)],
        delta_phi_check: check,
        drift,
        stable: drift <= SHIFT_DRIFT_LIMIT,
        contrast,
    })
}

/// Windows and fits of the exponential/power-law intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockInReport {
    pub t_p: f64,
    /// Fitted early decay rate `γ` in `log|g| = a - γt`.
    pub exp_rate: f64,
    pub exp_intercept: f64,
    /// Fitted `p` in `log|g| = b - p log t`.
    pub tail_exponent: f64,
    pub tail_intercept: f64,
    pub early_window: (f64, f64),
    pub late_window: (f64, f64),
    /// RMS residuals of the two fits in `log|g|`.
    pub residuals: (f64, f64),
}

/// Options for [`extract_tp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpOptions {
    /// Start of the early window (`3/ω_c` by convention).
    pub t_start: f64,
    /// Width of the sliding window over which local log-slopes are taken.
    pub slope_window: f64,
}

/// Least-squares line `y = a + b x`, returning `(a, b, rms)`.
fn line_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum::<f64>() / nf).sqrt();
    Some((a, b, rms))
}

/// Log-log slope and intercept of `values` over `[lo, hi]`.
pub fn power_law_fit(times: &[f64], values: &[f64], lo: f64, hi: f64) -> Result<(f64, f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= lo && **t <= hi && **t > 0.0 && v.abs() > 0.0)
        .map(|(t, v)| (t.ln(), v.abs().ln()))
        .unzip();
    line_fit(&x, &y).ok_or_else(|| Error::Fit(format!("not enough points in [{lo}, {hi}]")))
}

/// Slope of `log|g|` against `log t` over the last decade of the series.
pub fn tail_exponent(times: &[f64], values: &[f64]) -> Result<f64> {
    let t_max = *times.last().ok_or_else(|| Error::Fit("empty series".into()))?;
    Ok(power_law_fit(times, values, 0.1 * t_max, t_max)?.1)
}

/// Intercept of the early exponential and late power-law fits of `|g|`.
pub fn extract_tp(times: &[f64], values: &[f64], opts: &TpOptions) -> Result<LockInReport> {
    if times.len() != values.len() || times.len() < 8 {
        return Err(Error::Fit("series too short".into()));
    }
    let t_max = times[times.len() - 1];
    let late = (0.1 * t_max, t_max);
    if opts.t_start + 2.0 * opts.slope_window >= late.0 {
        return Err(Error::Fit("early and late windows are not separable".into()));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let slope_over = |lo: f64, hi: f64| -> Option<f64> {
        let i0 = times.partition_point(|&t| t < lo);
        let i1 = times.partition_point(|&t| t <= hi);
        if i1 <= i0 + 1 || logs[i0..i1].iter().any(|v| !v.is_finite()) {
            return None;
        }
        line_fit(&times[i0..i1], &logs[i0..i1]).map(|f| f.1)
    };
    let w = opts.slope_window;
    let initial = slope_over(opts.t_start, opts.t_start + w)
        .filter(|s| *s < 0.0)
        .ok_or_else(|| Error::Fit("no initial exponential decay".into()))?;
    // Walk the sliding window until its slope leaves the ±20% band.
    let mut end = opts.t_start + w;
    let step = 0.25 * w;
    while end + step < late.0 {
        match slope_over(end + step - w, end + step) {
            Some(s) if (s / initial - 1.0).abs() <= SLOPE_DEVIATION => end += step,
            _ => break,
        }
    }
    let early = (opts.t_start, end);
    let pick = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> (Vec<f64>, Vec<f64>) {
        times
            .iter()
            .zip(&logs)
            .filter(|(t, v)| **t >= lo && **t <= hi && v.is_finite())
            .map(|(t, v)| (f(*t), *v))
            .unzip()
    };
    let (ex, ey) = pick(early.0, early.1, &|t| t);
    let (a, b, r1) = line_fit(&ex, &ey).ok_or_else(|| Error::Fit("early window too short".into()))?;
    let (lx, ly) = pick(late.0, late.1, &|t| t.ln());
    let (c, d, r2) = line_fit(&lx, &ly).ok_or_else(|| Error::Fit("late window too short".into()))?;
    // a + b t = c + d ln t; the exponential starts above the tail
    let h = |t: f64| (a + b * t) - (c + d * t.ln());
    let mut lo = opts.t_start.max(times[1]);
    if h(lo) <= 0.0 {
        return Err(Error::NoRoot("exponential fit starts below the tail fit".into()));
    }
    let mut hi = lo;
    while h(hi) > 0.0 {
        hi *= 1.25;
        if hi > 1e3 * t_max {
            return Err(Error::NoRoot("no crossover between the fitted regimes".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LockInReport {
        t_p: 0.5 * (lo + hi),
        exp_rate: -b,
        exp_intercept: a,
        tail_exponent: -d,
        tail_intercept: c,
        early_window: early,
        late_window: late,
        residuals: (r1, r2),
    })
}

/// `t_P(φ)` from `|2ρ12(t, φ)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpCurve {
    pub phis: Vec<f64>,
    /// `None` where the extraction failed.
    pub t_p: Vec<Option<f64>>,
    pub phi_peak: Option<f64>,
}

impl TpCurve {
    /// Median of the successful extractions.
    pub fn median(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.t_p.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[v.len() / 2])
    }
}

/// Runs [`extract_tp`] on the transverse magnitude of each preparation angle.
pub fn tp_vs_phi(sweep: &SweepResult, opts: &TpOptions) -> TpCurve {
    let mut t_p = Vec::with_capacity(sweep.phis.len());
    for j in 0..sweep.phis.len() {
        let mag: Vec<f64> = (0..sweep.times.len())
            .map(|k| sweep.sx[k][j].hypot(sweep.sy[k][j]))
            .collect();
        t_p.push(extract_tp(&sweep.times, &mag, opts).ok().map(|r| r.t_p));
    }
    let phi_peak = t_p
        .iter()
        .enumerate()
        .filter_map(|(j, v)| v.map(|t| (j, t)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| sweep.phis[j]);
    TpCurve {
        phis: sweep.phis.clone(),
        t_p,
        phi_peak,
    }
}

/// Envelope-normalized quadratures, indexed `[time][angle]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub times: Vec<f64>,
    pub sx: Vec<Vec<f64>>,
    pub sy: Vec<Vec<f64>>,
    /// Smoothed half peak-to-peak amplitude of `sx`.
    pub envelope: Vec<f64>,
    /// `false` where the envelope vanished.
    pub valid: Vec<bool>,
}

fn moving_median(x: &[f64], half: usize) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(x.len());
            let mut w: Vec<f64> = x[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        })
        .collect()
}

/// Cubic Savitzky–Golay smoothing with half-width `m`, shrinking symmetrically at the ends.
fn savitzky_golay_cubic(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let h = m.min(k).min(n - 1 - k);
            if h < 2 {
                return x[k];
            }
            let hf = h as f64;
            let norm = (4.0 * hf * hf - 1.0) * (2.0 * hf + 3.0);
            (-(h as i64)..=h as i64)
                .map(|i| {
                    let i2 = (i * i) as f64;
                    3.0 * (3.0 * hf * hf + 3.0 * hf - 1.0 - 5.0 * i2) / norm * x[(k as i64 + i) as usize]
                })
                .sum()
        })
        .collect()
}

/// Divides each time slice by a smoothed envelope of `sx`.
///
/// The envelope is half the peak-to-peak range of `sx` over `φ`. Its logarithm
/// is passed through a moving median and then a cubic Savitzky–Golay filter,
/// both with a window of `ENVELOPE_WINDOW` of the samples; outputs are clamped
/// to `[-1, 1]`.
pub fn envelope_normalize(sweep: &SweepResult) -> Normalized {
    let n = sweep.times.len();
    let raw: Vec<f64> = sweep
        .sx
        .iter()
        .map(|row| {
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            0.5 * (hi - lo)
        })
        .collect();
    let valid: Vec<bool> = raw.iter().map(|a| *a > 0.0 && a.is_finite()).collect();
    let floor = raw.iter().copied().filter(|a| *a > 0.0).fold(f64::INFINITY, f64::min);
    let logs: Vec<f64> = raw.iter().map(|a| if *a > 0.0 { a.ln() } else { floor.ln() }).collect();
    let half = ((ENVELOPE_WINDOW * n as f64) as usize / 2).max(1);
    let envelope: Vec<f64> = savitzky_golay_cubic(&moving_median(&logs, half), half)
        .into_iter()
        .map(f64::exp)
        .collect();
    let norm = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .zip(&envelope)
            .zip(&valid)
            .map(|((row, e), ok)| {
                row.iter()
                    .map(|v| if *ok { (v / e).clamp(-1.0, 1.0) } else { 0.0 })
                    .collect()
            })
            .collect()
    };
    Normalized {
        times: sweep.times.clone(),
        sx: norm(&sweep.sx),
        sy: norm(&sweep.sy),
        envelope,
        valid,
    }
}

/// Late-time attractor label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basin {
    Plus,
    Minus,
    Gap,
}

/// Contiguous run of one label on the angle grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: Basin,
    pub start: f64,
    pub end: f64,
    /// Width in φ, from interpolated threshold crossings for gaps.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub t: f64,
    pub window: f64,
    pub labels: Vec<Basin>,
    pub segments: Vec<Segment>,
    pub gap_widths: Vec<f64>,
    /// Angle of the locking axis in the sweep frame.
    pub axis: f64,
    /// Largest transverse extent across the locking axis.
    pub residual: f64,
    pub threshold_factor: f64,
}

impl BasinReport {
    pub fn basin_segments(&self) -> usize {
        self.segments.iter().filter(|s| s.label != Basin::Gap).count()
    }
}

/// `(sx, sy)` averaged over the sweep times within `window/2` of `t`
/// (the nearest slice alone if none fall inside).
pub fn averaged_slice(sweep: &SweepResult, t: f64, window: f64) -> (Vec<f64>, Vec<f64>) {
    let mut picks: Vec<usize> = (0..sweep.times.len())
        .filter(|&k| (sweep.times[k] - t).abs() <= 0.5 * window)
        .collect();
    if picks.is_empty() {
        picks.push(sweep.time_index(t));
    }
    let n = sweep.phis.len();
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    for &k in &picks {
        for j in 0..n {
            x[j] += sweep.sx[k][j];
            y[j] += sweep.sy[k][j];
        }
    }
    let w = picks.len() as f64;
    x.iter_mut().chain(y.iter_mut()).for_each(|v| *v /= w);
    (x, y)
}

/// Labels each angle by the sign of the locked component.
///
/// The slice is the sweep averaged over `window` around `t_late` (pass one
/// counter-rotating period `π/Δ̃` to remove the fast breathing of the
/// transverse ellipse, or 0 for the instantaneous slice). The locking axis is
/// the principal axis of the `(sx, sy)` cloud; the residual level is the
/// largest extent across it. An angle is a gap when its locked component is
/// below `GAP_FACTOR` times that level.
pub fn basin_classify(sweep: &SweepResult, t_late: f64, window: f64) -> Result<BasinReport> {
    let k = sweep.time_index(t_late);
    let (x, y) = averaged_slice(sweep, t_late, window);
    let (x, y) = (&x, &y);
    let (theta, major, minor) = principal_axis(x, y);
    if !(major > 0.0) {
        return Err(Error::Fit(format!("no transverse signal at t = {}", sweep.times[k])));
    }
    let (s, c) = theta.sin_cos();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let locked: Vec<f64> = x.iter().zip(y).map(|(a, b)| c * (a - mx) + s * (b - my)).collect();
    let threshold = GAP_FACTOR * minor;
    let labels: Vec<Basin> = locked
        .iter()
        .map(|&u| {
            if u.abs() <= threshold {
                Basin::Gap
            } else if u > 0.0 {
                Basin::Plus
            } else {
                Basin::Minus
            }
        })
        .collect();
    let phis = &sweep.phis;
    let dphi = if phis.len() > 1 { phis[1] - phis[0] } else { TAU };
    // φ where |locked| crosses the threshold between samples j and j+1
    let crossing = |j: usize| -> f64 {
        let (a, b) = (locked[j].abs() - threshold, locked[j + 1].abs() - threshold);
        if a == b {
            phis[j]
        } else {
            phis[j] + dphi * a / (a - b)
        }
    };
    let mut segments = Vec::new();
    let mut start = 0;
    for j in 1..=labels.len() {
        if j == labels.len() || labels[j] != labels[start] {
            let label = labels[start];
            let width = if label == Basin::Gap && start > 0 && j < labels.len() {
                crossing(j - 1) - crossing(start - 1)
            } else {
                (j - start) as f64 * dphi
            };
            segments.push(Segment {
                label,
                start: phis[start],
                end: phis[j - 1],
                width,
            });
            start = j;
        }
    }
    let gap_widths = segments.iter().filter(|s| s.label == Basin::Gap).map(|s| s.width).collect();
    Ok(BasinReport {
        t: sweep.times[k],
        window,
        labels,
        segments,
        gap_widths,
        axis: theta,
        residual: minor,
        threshold_factor: GAP_FACTOR,
    })
}

/// Choi negativity along a map series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiReport {
    pub times: Vec<f64>,
    pub negativity: Vec<f64>,
    pub min: f64,
    pub t_min: f64,
    /// Last time with negativity below `-1e-12`, if any.
    pub last_negative: Option<f64>,
    /// Largest `|negativity|` for `t ≥ t_late`.
    pub late_max_abs: f64,
    pub t_late: f64,
}

pub fn choi_report(series: &MapSeries, t_late: f64) -> ChoiReport {
    let negativity: Vec<f64> = series.phi_map.iter().map(choi_negativity).collect();
    let (mut min, mut t_min) = (0.0, 0.0);
    let mut last_negative = None;
    let mut late_max_abs: f64 = 0.0;
    for (&t, &n) in series.times.iter().zip(&negativity) {
        if n < min {
            min = n;
            t_min = t;
        }
        if n < -1e-12 {
            last_negative = Some(t);
        }
        if t >= t_late {
            late_max_abs = late_max_abs.max(n.abs());
        }
    }
    ChoiReport {
        times: series.times.clone(),
        negativity,
        min,
        t_min,
        last_negative,
        late_max_abs,
        t_late,
    }
}

/// Phase of a coherence relative to a reference phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLockReport {
    pub times: Vec<f64>,
    /// `arg(g) - arg(ref)` wrapped to `(-π, π]`, minus its late-time median.
    pub residual: Vec<f64>,
    pub t_lock: f64,
    /// Largest `|residual|` for `t ≥ t_lock`.
    pub max_after: f64,
    pub locked: bool,
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Residual phase of `values` against `reference`, referenced to its median
/// over `t ≥ t_lock`.
pub fn phase_lock_check(times: &[f64], values: &[Complex64], reference: &[Complex64], t_lock: f64) -> Result<PhaseLockReport> {
    if times.len() != values.len() || times.len() != reference.len() {
        return Err(Error::Domain("series lengths differ".into()));
    }
    let raw: Vec<f64> = values.iter().zip(reference).map(|(v, r)| wrap(v.arg() - r.arg())).collect();
    let mut late: Vec<f64> = times.iter().zip(&raw).filter(|(t, _)| **t >= t_lock).map(|(_, p)| *p).collect();
    if late.len() < 3 {
        return Err(Error::Fit("insufficient tail data".into()));
    }
    // circular median: median of the residuals about their mean direction
    let mean = late.iter().map(|p| Complex64::from_polar(1.0, *p)).sum::<Complex64>().arg();
    late.iter_mut().for_each(|p| *p = wrap(*p - mean));
    late.sort_by(f64::total_cmp);
    let centre = mean + late[late.len() / 2];
    let residual: Vec<f64> = raw.iter().map(|p| wrap(p - centre)).collect();
    let max_after = times
        .iter()
        .zip(&residual)
        .filter(|(t, _)| **t >= t_lock)
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max);
    Ok(PhaseLockReport {
        times: times.to_vec(),
        residual,
        t_lock,
        max_after,
        locked: max_after <= PHASE_LOCK_LIMIT,
    })
}

/// Largest jump of the phase of `values` between consecutive samples, and
/// where it happens: `(t, |jump|)`.
pub fn largest_phase_jump(times: &[f64], values: &[Complex64]) -> Option<(f64, f64)> {
    values
        .windows(2)
        .zip(times.windows(2))
        .map(|(v, t)| (0.5 * (t[0] + t[1]), wrap(v[1].arg() - v[0].arg()).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}
