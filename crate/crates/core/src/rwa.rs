//! Rotating-wave benchmark: the single-excitation survival amplitude `f(t)`.
//!
//! All reduced dynamics of the number-conserving model follows from `f`:
//! `ρ12(t) = f(t) ρ12(0)`, `ρ11(t) = |f(t)|² ρ11(0)`. The amplitude is
//! computed two ways (a frequency integral over the exact lineshape and a
//! Volterra solve in the interaction picture `f = e^{-iΔt} f'`), modelled by a
//! Markovian pole plus a correlator tail, and reconstructed from the resummed
//! time-local generator.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::{Bath, BathSpec};
use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::superop::{QubitState, Superop};
use crate::volterra;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Below this `|f|` the exact generator is withheld and flagged.
pub const SPIKE_FLOOR: f64 = 1e-8;

/// Richardson limit on the Volterra step-halving error estimate.
pub const VOLTERRA_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RwaModel {
    pub delta: f64,
    pub bath: BathSpec,
}

impl RwaModel {
    pub fn new(delta: f64, bath: BathSpec) -> Result<Self> {
        let m = Self { delta, bath };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Domain(format!("delta must be positive, got {}", self.delta)));
        }
        self.bath.validate()
    }

    pub fn bath(&self) -> Result<Bath> {
        self.validate()?;
        Bath::new(self.bath)
    }

    /// `J(Δ)`.
    pub fn rate(&self) -> Result<f64> {
        self.bath()?.thermal_spectral_density(self.delta)
    }

    /// `Δ̃ = Δ + S(Δ)/4`.
    pub fn renormalized_splitting(&self) -> Result<f64> {
        Ok(self.delta + self.bath()?.lamb_shift(self.delta)? / 4.0)
    }

    fn require_zero_temperature(&self) -> Result<()> {
        if self.bath.beta.is_infinite() {
            Ok(())
        } else {
            Err(Error::Domain("the RWA solvers are zero-temperature only".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Frequency,
    Volterra,
    Contour,
    TwoComponent,
    Reconstructed,
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Frequency => "frequency",
            Solver::Volterra => "volterra",
            Solver::Contour => "contour",
            Solver::TwoComponent => "two_component",
            Solver::Reconstructed => "reconstructed",
        }
    }
}

/// Samples of `f(t)` (Schrödinger picture).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub times: Vec<f64>,
    pub f: Vec<Complex64>,
    /// `df/dt`, when the solver provides it.
    pub fdot: Option<Vec<Complex64>>,
    pub solver: Solver,
    /// Solver-specific error estimate (absolute, on `f`).
    pub error_estimate: Option<f64>,
}

impl SurvivalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation of `f` at `t`.
    pub fn interpolate(&self, t: f64) -> Option<Complex64> {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 || (k == self.times.len() && t > *self.times.last()?) {
            return (self.times.first() == Some(&t)).then(|| self.f[0]);
        }
        if k == self.times.len() {
            return self.f.last().copied();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some(self.f[k - 1] * (1.0 - w) + self.f[k] * w)
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Domain("empty time grid".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::Domain(format!("time grid must start at 0, got {}", times[0])));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
        return Err(Error::Domain("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `f(t) = ∫₀^∞ e^{-iωt} g(ω) dω` with the exact lineshape
/// `g = J / (4π {[Δ - ω + S(ω)/4]² + [J/4]²})`.
///
/// The lineshape is tabulated once on 21-point Kronrod panels: geometric
/// panels towards `ω = 0` (where `J ∝ ω^s` controls the tail), a refined
/// window around the pole at `Δ̃`, and uniform panels narrower than one
/// oscillation period at the largest requested time, up to `40 ω_c`.
pub fn exact_f_frequency(model: &RwaModel, times: &[f64]) -> Result<SurvivalSeries> {
    model.require_zero_temperature()?;
    check_grid(times)?;
    let bath = model.bath()?;
    let delta = model.delta;
    let omega_c = model.bath.omega_c;
    let peak = resonance_peak(model, &bath)?;
    let width = bath.spectral_density(peak).max(1e-12) / 4.0;

    let t_max = times.last().copied().unwrap_or(0.0).max(1.0);
    let osc = TAU / t_max;
    let upper = 40.0 * omega_c;
    let coarse = 0.25 * peak.min(omega_c);
    let fine = (0.25 * width).min(osc);
    let window = (peak - 25.0 * width).max(0.5 * peak)..(peak + 25.0 * width);

    let mut edges = vec![0.0];
    let mut x = 1e-14 * omega_c;
    let near_zero = osc.min(coarse);
    while x < near_zero {
        edges.push(x);
        x *= 2.0;
    }
    x = near_zero;
    edges.push(x);
    let table = LambTable::new(&bath, near_zero, upper, coarse)?;
    let lamb = |w: f64| -> Result<f64> {
        if w < near_zero {
            Ok(bath.gamma_infinite(w.into())?.im)
        } else {
            Ok(table.eval(w))
        }
    };
    while x < upper {
        let step = if window.contains(&x) { fine } else { osc.min(coarse) };
        let next = if x < window.start && x + step > window.start {
            window.start
        } else {
            x + step
        };
        x = next.min(upper);
        edges.push(x);
    }

    let mut nodes = Vec::with_capacity(21 * edges.len());
    for pair in edges.windows(2) {
        for (w, wt) in quad::kronrod_nodes(pair[0], pair[1]) {
            let j = bath.spectral_density(w);
            let d = delta - w + lamb(w)? / 4.0;
            let g = j / (4.0 * PI * (d * d + j * j / 16.0));
            nodes.push((w, wt * g));
        }
    }

    let f = times
        .iter()
        .map(|&t| {
            nodes
                .iter()
                .map(|&(w, g)| Complex64::from_polar(g, -w * t))
                .sum()
        })
        .collect();
    Ok(SurvivalSeries {
        times: times.to_vec(),
        f,
        fdot: None,
        solver: Solver::Frequency,
        error_estimate: None,
    })
}

/// Chebyshev points per interpolation panel of [`LambTable`].
const LAMB_POINTS: usize = 16;

/// Piecewise Chebyshev interpolant of `S(ω)` on `[lo, hi]`, `lo > 0`.
///
/// `S` is analytic apart from the branch point at `ω = 0`; panels are never
/// wider than their distance from it, which keeps the interpolation error
/// near machine precision with `LAMB_POINTS + 1` samples each.
struct LambTable {
    starts: Vec<f64>,
    panels: Vec<(f64, f64, [f64; LAMB_POINTS + 1])>,
}

impl LambTable {
    fn new(bath: &Bath, lo: f64, hi: f64, max_width: f64) -> Result<Self> {
        let (mut starts, mut panels) = (Vec::new(), Vec::new());
        let mut a = lo;
        while a < hi {
            let b = (a + max_width).min(2.0 * a).min(hi);
            let mut v = [0.0; LAMB_POINTS + 1];
            for (k, slot) in v.iter_mut().enumerate() {
                let x = (PI * k as f64 / LAMB_POINTS as f64).cos();
                *slot = bath.gamma_infinite((0.5 * (a + b) + 0.5 * (b - a) * x).into())?.im;
            }
            starts.push(a);
            panels.push((a, b, v));
            a = b;
        }
        Ok(Self { starts, panels })
    }

    /// Barycentric evaluation on Chebyshev points of the second kind.
    fn eval(&self, w: f64) -> f64 {
        let p = self.starts.partition_point(|&a| a <= w).saturating_sub(1);
        let (a, b, v) = &self.panels[p];
        let x = (2.0 * w - a - b) / (b - a);
        let (mut num, mut den) = (0.0, 0.0);
        for (k, &fk) in v.iter().enumerate() {
            let node = (PI * k as f64 / LAMB_POINTS as f64).cos();
            if x == node {
                return fk;
            }
            let mut c = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == LAMB_POINTS {
                c *= 0.5;
            }
            let c = c / (x - node);
            num += c * fk;
            den += c;
        }
        num / den
    }
}

/// Pole-plus-cut representation of `f(t)` for `t > 0`.
///
/// With `E(z) = z - Δ + (i/4) Γ_z(∞)`, `f(t) = (i/2π) ∫ e^{-izt} / E(z+i0) dz`.
/// Deforming into the lower half plane leaves the second-sheet pole near
/// `Δ̃ - iJ_Δ/4`, a first-sheet bound state on the negative axis if one exists,
/// and a cut along the ray `arg z = -π/4` whose Laplace-type integral carries
/// the algebraic tail. The cost per time is independent of `t`.
#[derive(Debug, Clone)]
pub struct PoleExpansion {
    /// Second-sheet zero of `E`.
    pub pole: Complex64,
    /// `1/E'(pole)`.
    pub residue: Complex64,
    /// Bound-state energy and `1/E'` there.
    pub bound: Option<(f64, Complex64)>,
    delta: f64,
    bath: Bath,
}

const CUT_ANGLE: f64 = -0.25 * PI;

impl PoleExpansion {
    pub fn new(model: &RwaModel) -> Result<Self> {
        model.require_zero_temperature()?;
        let bath = model.bath()?;
        let delta = model.delta;
        let e2 = |z: Complex64| -> Result<(Complex64, Complex64)> {
            let a = bath.gamma_second_sheet(z, 0)?;
            let da = bath.gamma_second_sheet(z, 1)?;
            Ok((z - delta + 0.25 * I * a, ONE + 0.25 * I * da))
        };
        let mut z = Complex64::new(
            delta + bath.lamb_shift(delta)? / 4.0,
            -bath.spectral_density(delta) / 4.0,
        );
        let mut converged = false;
        for _ in 0..60 {
            if !(z.re > 0.0) {
                break;
            }
            let (e, de) = e2(z)?;
            let step = e / de;
            z -= step;
            if step.norm() < 1e-14 * z.norm() {
                converged = true;
                break;
            }
        }
        if !converged || !(z.re > 0.0) || z.arg() <= CUT_ANGLE || z.im > 0.0 {
            return Err(Error::NoRoot(format!("second-sheet pole not found (last iterate {z})")));
        }
        let residue = 1.0 / e2(z)?.1;

        let static_splitting = delta + bath.lamb_shift(0.0)? / 4.0;
        let bound = if static_splitting < 0.0 {
            let e1 = |w: f64| -> Result<f64> { Ok(w - delta - bath.lamb_shift(w)? / 4.0) };
            let mut lo = -delta;
            while e1(lo)? > 0.0 {
                lo *= 2.0;
                if lo < -1e8 {
                    return Err(Error::NoRoot("bound state not bracketed".into()));
                }
            }
            let (mut a, mut b) = (lo, 0.0);
            while b - a > 1e-14 * a.abs().max(1e-300) {
                let m = 0.5 * (a + b);
                if e1(m)? > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
                if m == a && m == b {
                    break;
                }
            }
            let w = 0.5 * (a + b);
            let de = ONE + 0.25 * I * bath.gamma_derivative(w.into(), f64::INFINITY, 1)?;
            Some((w, 1.0 / de))
        } else {
            None
        };
        Ok(Self { pole: z, residue, bound, delta, bath })
    }

    /// Markovian pole term.
    pub fn pole_term(&self, t: f64) -> Complex64 {
        self.residue * (-I * self.pole * t).exp()
    }

    pub fn bound_term(&self, t: f64) -> Complex64 {
        self.bound
            .map(|(w, r)| r * (-I * w * t).exp())
            .unwrap_or(ZERO)
    }

    /// Cut integral: the non-exponential remainder.
    pub fn cut_term(&self, t: f64) -> Result<Complex64> {
        let dir = Complex64::from_polar(1.0, CUT_ANGLE);
        let omega_c = self.bath.spec().omega_c;
        let mut failure = None;
        let f = |rho: f64| {
            let z = dir * rho;
            let value = (|| -> Result<Complex64> {
                // Across the cut the two sheets differ by 2J(z) exactly.
                let j = self.bath.spectral_density_continued(z);
                let e1 = z - self.delta + 0.25 * I * self.bath.gamma_advanced(z, 0)?;
                let e2 = e1 + 0.5 * I * j;
                Ok(-0.5 * I * j / (e1 * e2) * (-I * z * t).exp())
            })();
            value.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                ZERO
            })
        };
        let scale = 1.0 / (t * CUT_ANGLE.sin().abs() + CUT_ANGLE.cos() / omega_c);
        let tol = Tolerance::new(1e-10, 1e-18);
        let v = quad::integrate_semi_infinite(f, 0.0, scale, &tol)?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(I / (2.0 * PI) * dir * v.value)
    }

    pub fn eval(&self, t: f64) -> Result<Complex64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("time must be finite and non-negative, got {t}")));
        }
        Ok(self.pole_term(t) + self.bound_term(t) + self.cut_term(t)?)
    }
}

/// `f(t)` from the pole-plus-cut representation.
pub fn exact_f_contour(model: &RwaModel, times: &[f64]) -> Result<SurvivalSeries> {
    check_grid(times)?;
    let pe = PoleExpansion::new(model)?;
    let f = times.iter().map(|&t| pe.eval(t)).collect::<Result<_>>()?;
    Ok(SurvivalSeries {
        times: times.to_vec(),
        f,
        fdot: None,
        solver: Solver::Contour,
        error_estimate: None,
    })
}

/// Root of `Δ - ω + S(ω)/4` near `Δ + S(Δ)/4`.
pub fn resonance_peak(model: &RwaModel, bath: &Bath) -> Result<f64> {
    let d = |w: f64| -> Result<f64> { Ok(model.delta - w + bath.lamb_shift(w)? / 4.0) };
    let guess = model.delta + bath.lamb_shift(model.delta)? / 4.0;
    if guess <= 0.0 {
        return Err(Error::NoRoot(format!(
            "renormalized splitting {guess} is not positive"
        )));
    }
    let mut half = 0.05 * guess;
    for _ in 0..12 {
        let (lo, hi) = ((guess - half).max(1e-12), guess + half);
        let (dl, dh) = (d(lo)?, d(hi)?);
        if dl > 0.0 && dh < 0.0 {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-13 * b {
                let m = 0.5 * (a + b);
                if d(m)? > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        half *= 1.6;
        if guess - half <= 0.0 && half > 2.0 * guess {
            break;
        }
    }
    Err(Error::NoRoot("resonance of the RWA lineshape not bracketed".into()))
}

/// Output of the Volterra solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraSolution {
    pub series: SurvivalSeries,
    /// Interaction-picture amplitude `f'`.
    pub f_interaction: Vec<Complex64>,
    /// `df'/dt`.
    pub fdot_interaction: Vec<Complex64>,
}

/// Solves `f'(t) = 1 - (1/4) ∫₀ᵗ Γ_Δ(t-τ) f'(τ) dτ` on `t_k = kh`, `k ≤ steps`.
///
/// The step is checked by re-solving at `2h`; the Richardson estimate of the
/// error must stay below [`VOLTERRA_LIMIT`].
pub fn exact_f_volterra(model: &RwaModel, h: f64, steps: usize) -> Result<VolterraSolution> {
    model.require_zero_temperature()?;
    let bath = model.bath()?;
    let delta = model.delta;
    let scale = model.bath.omega_c.max(delta);
    if !(h > 0.0) || h * scale > 0.1 {
        return Err(Error::StepTooCoarse {
            estimate: h * scale,
            limit: 0.1,
        });
    }
    let n = steps + 1;
    let kernel = bath.gamma_grid(delta, h, steps)?;
    let coeff = Complex64::new(-0.25, 0.0);
    let fi = volterra::solve_second_kind(&vec![ONE; n], &kernel, h, coeff);

    let coarse_kernel: Vec<Complex64> = kernel.iter().step_by(2).copied().collect();
    let nc = coarse_kernel.len();
    let fc = volterra::solve_second_kind(&vec![ONE; nc], &coarse_kernel, 2.0 * h, coeff);
    let estimate = (0..nc)
        .map(|k| (fi[2 * k] - fc[k]).norm() / 15.0)
        .fold(0.0, f64::max);
    if estimate > VOLTERRA_LIMIT {
        return Err(Error::StepTooCoarse {
            estimate,
            limit: VOLTERRA_LIMIT,
        });
    }

    let cgrid = bath.correlation_grid(delta, h, steps)?;
    let fdot_i: Vec<Complex64> = volterra::convolve(&cgrid, &fi, h)
        .into_iter()
        .map(|x| -0.25 * x)
        .collect();

    let times: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let rot: Vec<Complex64> = times.iter().map(|&t| (-I * delta * t).exp()).collect();
    let f = (0..n).map(|k| rot[k] * fi[k]).collect();
    let fdot = (0..n)
        .map(|k| rot[k] * (fdot_i[k] - I * delta * fi[k]))
        .collect();
    Ok(VolterraSolution {
        series: SurvivalSeries {
            times,
            f,
            fdot: Some(fdot),
            solver: Solver::Volterra,
            error_estimate: Some(estimate),
        },
        f_interaction: fi,
        fdot_interaction: fdot_i,
    })
}

/// Pole and tail parameters of the two-component model.
#[derive(Debug, Clone)]
pub struct TwoComponent {
    /// `Δ̃ = Δ + S(Δ)/4`.
    pub splitting: f64,
    /// `J(Δ)/4`, the amplitude decay rate of the pole.
    pub decay: f64,
    /// `Δ + S(0)/4`.
    pub static_splitting: f64,
    bath: Bath,
}

impl TwoComponent {
    pub fn new(model: &RwaModel) -> Result<Self> {
        model.require_zero_temperature()?;
        let bath = model.bath()?;
        Ok(Self {
            splitting: model.delta + bath.lamb_shift(model.delta)? / 4.0,
            decay: bath.spectral_density(model.delta) / 4.0,
            static_splitting: model.delta + bath.lamb_shift(0.0)? / 4.0,
            bath,
        })
    }

    pub fn markov(&self, t: f64) -> Complex64 {
        (Complex64::new(-self.decay, -self.splitting) * t).exp()
    }

    pub fn tail(&self, t: f64) -> Result<Complex64> {
        let d = self.static_splitting;
        Ok(self.bath.correlation(t)? / (4.0 * d * d))
    }

    /// `ln|f_M(t)| - ln|f_C(t)|`.
    pub fn log_balance(&self, t: f64) -> Result<f64> {
        Ok(-self.decay * t - self.tail(t)?.norm().ln())
    }
}

/// `(f_M(t), f_C(t))`.
pub fn two_component(model: &RwaModel, t: f64) -> Result<(Complex64, Complex64)> {
    let tc = TwoComponent::new(model)?;
    Ok((tc.markov(t), tc.tail(t)?))
}

pub fn two_component_series(model: &RwaModel, times: &[f64]) -> Result<SurvivalSeries> {
    check_grid(times)?;
    let tc = TwoComponent::new(model)?;
    let f = times
        .iter()
        .map(|&t| Ok(tc.markov(t) + tc.tail(t)?))
        .collect::<Result<_>>()?;
    Ok(SurvivalSeries {
        times: times.to_vec(),
        f,
        fdot: None,
        solver: Solver::TwoComponent,
        error_estimate: None,
    })
}

/// Largest root of `h` on `[lo, hi]`, where `h` goes from positive to negative.
///
/// Scans a logarithmic grid downward from `hi` and bisects the first bracket.
pub fn balance_root<F>(mut h: F, lo: f64, hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    let points = 4000;
    let ratio = (hi / lo).powf(1.0 / points as f64);
    let mut b = hi;
    let mut hb = h(b)?;
    if hb > 0.0 {
        return Err(Error::NoRoot(format!("no crossing below t = {hi:e}")));
    }
    for _ in 0..points {
        let a = (b / ratio).max(lo);
        let ha = h(a)?;
        if ha > 0.0 {
            let (mut a, mut b) = (a, b);
            while b - a > 1e-13 * b {
                let m = 0.5 * (a + b);
                if h(m)? > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        b = a;
        hb = ha;
    }
    let _ = hb;
    Err(Error::NoRoot(format!("no crossing above t = {lo:e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockIn {
    /// Largest root of `|f_M| = |f_C|`.
    pub numeric: f64,
    /// `(s+1) T₂ ln(ω_c T₂)`.
    pub analytic: f64,
    pub t2: f64,
}

/// Lock-in time with the default `T₂ = 4/J(Δ)`.
pub fn lock_in_time(model: &RwaModel) -> Result<LockIn> {
    lock_in_time_with(model, None)
}

pub fn lock_in_time_with(model: &RwaModel, t2: Option<f64>) -> Result<LockIn> {
    let tc = TwoComponent::new(model)?;
    let j = 4.0 * tc.decay;
    if j / model.delta >= 0.2 {
        return Err(Error::Domain(format!(
            "lock-in estimate requires weak coupling, J(Δ)/Δ = {:.3}",
            j / model.delta
        )));
    }
    let numeric = balance_root(|t| tc.log_balance(t), 1.0 / model.bath.omega_c, 1e5 / model.delta)?;
    let t2 = t2.unwrap_or(4.0 / j);
    let analytic = (model.bath.s + 1.0) * t2 * (model.bath.omega_c * t2).ln();
    Ok(LockIn { numeric, analytic, t2 })
}

/// One sample of the exact time-local generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSample {
    pub t: f64,
    /// Withheld (`None`) at spike points.
    pub generator: Option<Superop>,
    pub spike: bool,
}

/// Exact generator built from `ḟ/f`.
///
/// Uses the series' `ḟ` if present, else fourth-order finite differences on
/// a uniform grid.
pub fn exact_generator(series: &SurvivalSeries) -> Result<Vec<GeneratorSample>> {
    let fdot = match &series.fdot {
        Some(d) => d.clone(),
        None => finite_difference(&series.times, &series.f)?,
    };
    Ok(series
        .times
        .iter()
        .zip(series.f.iter().zip(&fdot))
        .map(|(&t, (&f, &d))| {
            if f.norm() < SPIKE_FLOOR {
                return GeneratorSample { t, generator: None, spike: true };
            }
            let r = d / f;
            let pop = r + r.conj();
            let mut g = Superop::zero();
            g.m[(0, 0)] = pop;
            g.m[(3, 0)] = -pop;
            g.m[(1, 1)] = r.conj();
            g.m[(2, 2)] = r;
            GeneratorSample { t, generator: Some(g), spike: false }
        })
        .collect())
}

fn finite_difference(times: &[f64], f: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = times.len();
    if n < 5 {
        return Err(Error::Domain("need at least 5 samples for finite differences".into()));
    }
    let h = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::Domain("finite differences need a uniform grid".into()));
    }
    Ok((0..n)
        .map(|k| {
            let j = k.clamp(2, n - 3);
            let c = [f[j - 2], f[j - 1], f[j], f[j + 1], f[j + 2]];
            // derivative of the quartic through five points, evaluated at offset k - j
            let x = k as f64 - j as f64;
            let w = match x as i64 {
                -2 => [-25.0, 48.0, -36.0, 16.0, -3.0],
                -1 => [-3.0, -10.0, 18.0, -6.0, 1.0],
                0 => [1.0, -8.0, 0.0, 8.0, -1.0],
                1 => [-1.0, 6.0, -18.0, 10.0, 3.0],
                _ => [3.0, -16.0, 36.0, -48.0, 25.0],
            };
            c.iter().zip(w).map(|(v, w)| v * w).sum::<Complex64>() / (12.0 * h)
        })
        .collect())
}

/// `u(t) = Δ - (i/4) Γ_Δ(t)`.
pub fn renormalized_frequency(bath: &Bath, delta: f64, t: f64) -> Result<Complex64> {
    Ok(delta - 0.25 * I * bath.gamma_half(delta.into(), t)?)
}

/// `-(1/4) Γ_{u(t)}(t)`: the resummed interaction-picture rate `ḟ'/f'`.
pub fn resummed_rate(bath: &Bath, delta: f64, t: f64) -> Result<Complex64> {
    let u = renormalized_frequency(bath, delta, t)?;
    Ok(-0.25 * bath.gamma_half(u, t)?)
}

fn coherence_generator(pop: f64, coh: Complex64) -> Superop {
    let mut g = Superop::zero();
    g.m[(0, 0)] = Complex64::new(-pop, 0.0);
    g.m[(3, 0)] = Complex64::new(pop, 0.0);
    g.m[(1, 1)] = coh.conj();
    g.m[(2, 2)] = coh;
    g
}

/// Resummed Schrödinger-picture generator.
pub fn resummed_generator(model: &RwaModel, t: f64) -> Result<Superop> {
    let bath = model.bath()?;
    let gu = -4.0 * resummed_rate(&bath, model.delta, t)?;
    Ok(coherence_generator(0.5 * gu.re, -I * model.delta - 0.25 * gu))
}

/// Davies generator with `J_Δ` and `Δ̃ = Δ + S(Δ)/4`.
pub fn davies_generator_rwa(model: &RwaModel) -> Result<Superop> {
    let bath = model.bath()?;
    let j = bath.thermal_spectral_density(model.delta)?;
    let dt = model.delta + bath.lamb_shift(model.delta)? / 4.0;
    Ok(coherence_generator(0.5 * j, Complex64::new(-0.25 * j, -dt)))
}

/// Reconstructed amplitude with its accumulated quadrature error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub series: SurvivalSeries,
    /// `∫₀ᵗ [L(τ) - L₀]_{12,12} dτ` at each grid time.
    pub integral: Vec<Complex64>,
}

/// `Φ(t) = e^{L₀t} + e^{L₀t} ∫₀ᵗ [L(τ) - L₀] dτ`, read on the `ρ12` element.
pub fn reconstruct_rwa(model: &RwaModel, times: &[f64]) -> Result<Reconstruction> {
    model.require_zero_temperature()?;
    check_grid(times)?;
    let bath = model.bath()?;
    let l0 = davies_generator_rwa(model)?.m[(2, 2)];
    let delta = model.delta;
    let t0 = 1.0 / model.bath.omega_c;
    let tol = Tolerance::new(1e-9, 1e-13);

    let mut acc = ZERO;
    let mut err = 0.0;
    let mut integral = Vec::with_capacity(times.len());
    integral.push(ZERO);
    for pair in times.windows(2) {
        let mut failure = None;
        let f = |tau: f64| match resummed_rate(&bath, delta, tau) {
            Ok(r) => -I * delta + r - l0,
            Err(e) => {
                failure.get_or_insert(e);
                ZERO
            }
        };
        let mut breaks = vec![pair[0]];
        let mut x = pair[0].max(t0);
        while x < pair[1] && x < 64.0 * t0 {
            if x > pair[0] {
                breaks.push(x);
            }
            x *= 2.0;
        }
        breaks.push(pair[1]);
        let piece = quad::integrate_breaks(f, &breaks, &tol)?;
        if let Some(e) = failure {
            return Err(e);
        }
        acc += piece.value;
        err += piece.error;
        integral.push(acc);
    }
    let f = times
        .iter()
        .zip(&integral)
        .map(|(&t, &c)| (l0 * t).exp() * (ONE + c))
        .collect();
    Ok(Reconstruction {
        series: SurvivalSeries {
            times: times.to_vec(),
            f,
            fdot: None,
            solver: Solver::Reconstructed,
            error_estimate: Some(err),
        },
        integral,
    })
}

/// Long-time coherence correlator `-(1/4) Σ_{-Δ̃+iν₂}(t)` with `ν₂ = J_Δ/4`.
pub fn coherence_tail(model: &RwaModel, t: f64) -> Result<Complex64> {
    let bath = model.bath()?;
    let j = bath.spectral_density(model.delta);
    let dt = model.delta + bath.lamb_shift(model.delta)? / 4.0;
    Ok(-0.25 * bath.sigma_kernel(Complex64::new(-dt, 0.25 * j), t, 0.0)?)
}

/// Exact reduced state for `|Ψ(0)⟩ = c1|1⟩ + c2|2⟩`.
pub fn reduced_state_rwa(f: Complex64, c1: Complex64, c2: Complex64) -> Result<QubitState> {
    let norm = c1.norm_sqr() + c2.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("|c1|² + |c2|² = {norm}, expected 1")));
    }
    let p = (c1 * f).norm_sqr();
    let coh = c1 * c2.conj() * f;
    Ok(QubitState::unchecked(nalgebra::Matrix2::new(
        p.into(),
        coh,
        coh.conj(),
        (1.0 - p).into(),
    )))
}

/// Reduced state after RWA evolution of an arbitrary initial state.
pub fn evolve_state(rho0: &QubitState, f: Complex64) -> QubitState {
    let r = &rho0.rho;
    let p = r[(0, 0)] * f.norm_sqr();
    QubitState::unchecked(nalgebra::Matrix2::new(
        p,
        r[(0, 1)] * f,
        r[(1, 0)] * f.conj(),
        ONE - p,
    ))
}
