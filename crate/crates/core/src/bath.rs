//! Bath functions for an algebraic spectral density with exponential cutoff.
//!
//! `J(ω) = 2πλ² ω^s ω_c^{1-s} exp(-ω/ω_c)` for `ω > 0`. The vacuum correlation
//! function is evaluated in closed form, `C(t) = c0 (1 + i ω_c t)^{-(s+1)}`
//! with `c0 = 2λ² Γ(s+1) ω_c²`, which is analytic in the right half plane
//! apart from a branch point at `t = i/ω_c`.
//!
//! Half-sided transforms `∫₀ᵗ w(τ) C(τ) e^{iκτ} dτ` are the workhorse of every
//! other module. For large `|Re κ| t` the real-axis integral is replaced by
//! two rays parallel to the imaginary axis (upward for `Re κ > 0`, downward
//! for `Re κ < 0`) on which the integrand decays exponentially, so the cost
//! of an evaluation does not grow with `t`. The finite-temperature part of
//! the correlation function is handled by quadrature in frequency.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Inverse temperature. `Infinite` is zero temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Infinite,
    Finite(f64),
}

impl Beta {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Beta::Infinite)
    }

    /// Bose occupation `1/(e^{βν} - 1)` for `ν > 0`.
    pub fn occupation(&self, nu: f64) -> f64 {
        match *self {
            Beta::Infinite => 0.0,
            Beta::Finite(b) => 1.0 / (b * nu).exp_m1(),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Infinite => write!(f, "inf"),
            Beta::Finite(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Beta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(Beta::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("cannot parse beta from {s:?}")))
                .and_then(Beta::try_from),
        }
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;

    fn try_from(b: f64) -> Result<Self> {
        if b.is_infinite() && b > 0.0 {
            Ok(Beta::Infinite)
        } else if b.is_finite() && b > 0.0 {
            Ok(Beta::Finite(b))
        } else {
            Err(Error::Domain(format!("beta must be positive, got {b}")))
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Infinite => ser.serialize_str("inf"),
            Beta::Finite(b) => ser.serialize_f64(*b),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let raw = Raw::deserialize(de)?;
        let parsed = match raw {
            Raw::Num(b) => Beta::try_from(b),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Parameters of the bosonic environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    pub lambda2: f64,
    pub s: f64,
    pub omega_c: f64,
    pub beta: Beta,
}

impl BathSpec {
    pub fn zero_temperature(lambda2: f64, s: f64, omega_c: f64) -> Self {
        Self {
            lambda2,
            s,
            omega_c,
            beta: Beta::Infinite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("lambda2", self.lambda2)?;
        positive("s", self.s)?;
        positive("omega_c", self.omega_c)?;
        if let Beta::Finite(b) = self.beta {
            positive("beta", b)?;
        }
        Ok(())
    }

    /// Same bath with the coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lambda2: self.lambda2 * factor,
            ..*self
        }
    }
}

/// A sample of a complex time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexSample {
    pub t: f64,
    pub value: Complex64,
}

/// Central finite difference with a half-step Richardson refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDifference {
    /// Central difference with the nominal step.
    pub value: f64,
    /// Richardson extrapolation from the nominal and half steps.
    pub refined: f64,
}

impl FiniteDifference {
    pub fn discrepancy(&self) -> f64 {
        (self.value - self.refined).abs()
    }
}

/// Real-axis piece plus ray piece of a contour-deformed transform:
/// `value = head - e^{iκt} tail`.
#[derive(Debug, Clone, Copy)]
struct Split {
    head: Complex64,
    tail: Complex64,
}

/// Validated bath with cached constants and quadrature settings.
#[derive(Debug, Clone)]
pub struct Bath {
    spec: BathSpec,
    c0: f64,
    tol: Tolerance,
}

impl Bath {
    pub fn new(spec: BathSpec) -> Result<Self> {
        spec.validate()?;
        let c0 = 2.0 * spec.lambda2 * gamma(spec.s + 1.0) * spec.omega_c * spec.omega_c;
        let tol = Tolerance::new(1e-11, 1e-16 * c0);
        Ok(Self { spec, c0, tol })
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn spec(&self) -> &BathSpec {
        &self.spec
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    /// `C(0)` at zero temperature.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    fn t0(&self) -> f64 {
        1.0 / self.spec.omega_c
    }

    pub fn spectral_density(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        let BathSpec { lambda2, s, omega_c, .. } = self.spec;
        TAU * lambda2 * omega.powf(s) * omega_c.powf(1.0 - s) * (-omega / omega_c).exp()
    }

    /// `J(ω)/(1 - e^{-βω})`, continued to negative frequencies by detailed balance.
    pub fn thermal_spectral_density(&self, omega: f64) -> Result<f64> {
        match self.spec.beta {
            Beta::Infinite => Ok(self.spectral_density(omega)),
            Beta::Finite(b) => {
                if omega > 0.0 {
                    Ok(self.spectral_density(omega) / -(-b * omega).exp_m1())
                } else if omega < 0.0 {
                    Ok(self.spectral_density(-omega) / (-b * omega).exp_m1())
                } else {
                    let BathSpec { lambda2, s, .. } = self.spec;
                    if s == 1.0 {
                        Ok(TAU * lambda2 / b)
                    } else if s > 1.0 {
                        Ok(0.0)
                    } else {
                        Err(Error::Divergent(format!(
                            "J_beta(0) diverges for s = {s} < 1 at finite temperature"
                        )))
                    }
                }
            }
        }
    }

    /// Zero-temperature correlation function continued to complex time.
    pub fn vacuum_correlation(&self, z: Complex64) -> Complex64 {
        let base = Complex64::new(1.0, 0.0) + I * self.spec.omega_c * z;
        self.c0 * (-(self.spec.s + 1.0) * base.ln()).exp()
    }

    /// `C_β(t)`.
    pub fn correlation(&self, t: f64) -> Result<Complex64> {
        check_time(t)?;
        let vac = self.vacuum_correlation(t.into());
        match self.spec.beta {
            Beta::Infinite => Ok(vac),
            Beta::Finite(_) => {
                let th = self.thermal_integral(|nu| Complex64::new((nu * t).cos(), 0.0), None)?;
                Ok(vac + th)
            }
        }
    }

    /// `Γ_ω(t) = ∫₀ᵗ C_β(τ) e^{iωτ} dτ`; `t = ∞` gives `J_{β,ω} + i S_{β,ω}`.
    pub fn gamma_half(&self, omega: Complex64, t: f64) -> Result<Complex64> {
        check_horizon(t)?;
        if t.is_infinite() {
            return self.gamma_infinite(omega);
        }
        if t == 0.0 {
            return Ok(ZERO);
        }
        let vac = if omega == ZERO {
            self.gamma_zero_vacuum(t)
        } else {
            let sp = self.vacuum_split(omega, t, &|_| Complex64::new(1.0, 0.0))?;
            sp.head - (I * omega * t).exp() * sp.tail
        };
        match self.spec.beta {
            Beta::Infinite => Ok(vac),
            Beta::Finite(_) => {
                let th = self.thermal_integral(
                    |nu| 0.5 * (expint(I * (omega + nu), t) + expint(I * (omega - nu), t)),
                    Some(omega.re),
                )?;
                Ok(vac + th)
            }
        }
    }

    /// `Γ_ω(∞)`, defined for `Im ω ≥ 0`.
    pub fn gamma_infinite(&self, omega: Complex64) -> Result<Complex64> {
        if omega.im < 0.0 {
            return Err(Error::LowerHalfPlane { im: omega.im });
        }
        let vac = if omega == ZERO {
            -I * self.c0 / (self.spec.omega_c * self.spec.s)
        } else {
            self.vacuum_split(omega, f64::INFINITY, &|_| Complex64::new(1.0, 0.0))?
                .head
        };
        match self.spec.beta {
            Beta::Infinite => Ok(vac),
            Beta::Finite(_) => {
                if omega.im == 0.0 {
                    let w = omega.re;
                    let re = self.thermal_spectral_density(w)? - self.spectral_density(w);
                    let im = self.thermal_lamb_shift(w)?;
                    Ok(vac + Complex64::new(re, im))
                } else {
                    let th = self.thermal_integral(
                        |nu| 0.5 * I * (1.0 / (omega + nu) + 1.0 / (omega - nu)),
                        Some(omega.re),
                    )?;
                    Ok(vac + th)
                }
            }
        }
    }

    /// `∂ⁿΓ_ω(t)/∂ωⁿ = ∫₀ᵗ (iτ)ⁿ C(τ) e^{iωτ} dτ` at zero temperature.
    pub fn gamma_derivative(&self, omega: Complex64, t: f64, order: u32) -> Result<Complex64> {
        check_horizon(t)?;
        if !self.spec.beta.is_infinite() {
            return Err(Error::Domain(
                "frequency derivatives are implemented at zero temperature only".into(),
            ));
        }
        if t == 0.0 {
            return Ok(ZERO);
        }
        if t.is_infinite() && omega.im < 0.0 {
            return Err(Error::LowerHalfPlane { im: omega.im });
        }
        let n = order as i32;
        let w = move |z: Complex64| (I * z).powi(n);
        let sp = self.vacuum_split(omega, t, &w)?;
        if t.is_infinite() {
            Ok(sp.head)
        } else {
            Ok(sp.head - (I * omega * t).exp() * sp.tail)
        }
    }

    /// `S_{β,ω} = (1/π) P∫ J_{β,ν}/(ω - ν) dν`, by principal-value quadrature.
    pub fn lamb_shift(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(Error::Domain(format!("frequency must be finite, got {omega}")));
        }
        let vac = if omega == 0.0 {
            -2.0 * self.spec.lambda2 * self.spec.omega_c * gamma(self.spec.s)
        } else {
            self.principal_value(|nu| self.spectral_density(nu), omega)? / PI
        };
        Ok(vac + self.thermal_lamb_shift(omega)?)
    }

    /// `dS/dω` by central differences with step `h` and a half-step Richardson check.
    pub fn lamb_shift_slope(&self, omega: f64, h: f64) -> Result<FiniteDifference> {
        let d = |step: f64| -> Result<f64> {
            Ok((self.lamb_shift(omega + step)? - self.lamb_shift(omega - step)?) / (2.0 * step))
        };
        let coarse = d(h)?;
        let fine = d(0.5 * h)?;
        Ok(FiniteDifference {
            value: coarse,
            refined: (4.0 * fine - coarse) / 3.0,
        })
    }

    /// `J(z)` continued off the positive axis (principal branch of `z^s`).
    ///
    /// Across the positive real axis the second sheet of `Γ_z(∞)` exceeds the
    /// advanced branch by exactly `2J(z)`.
    pub fn spectral_density_continued(&self, z: Complex64) -> Complex64 {
        let BathSpec { lambda2, s, omega_c, .. } = self.spec;
        TAU * lambda2 * omega_c.powf(1.0 - s) * (s * z.ln() - z / omega_c).exp()
    }

    /// Continuation of `∂ⁿΓ_ω(∞)/∂ωⁿ` from the upper half plane across the
    /// positive real axis (the second sheet), for `Re ω > 0`. Zero temperature.
    pub fn gamma_second_sheet(&self, omega: Complex64, order: u32) -> Result<Complex64> {
        self.require_vacuum()?;
        if !(omega.re > 0.0) {
            return Err(Error::Domain(format!("second sheet needs Re ω > 0, got {omega}")));
        }
        let n = order as i32;
        self.head(omega, &move |z: Complex64| (I * z).powi(n))
    }

    /// `∂ⁿ/∂ωⁿ` of `-∫_{-∞}^0 C(τ) e^{iωτ} dτ` for `Im ω < 0`: the continuation
    /// of `Γ_ω(∞)` across the negative real axis. Zero temperature.
    pub fn gamma_advanced(&self, omega: Complex64, order: u32) -> Result<Complex64> {
        self.require_vacuum()?;
        if !(omega.im < 0.0) {
            return Err(Error::Domain(format!("advanced branch needs Im ω < 0, got {omega}")));
        }
        // Ray towards -∞ rotated to θ = π/2 - arg ω, where e^{iωτ} decays fastest;
        // the rotation from θ = π never crosses the cut above i/ω_c.
        let dir = Complex64::from_polar(1.0, 0.5 * PI - omega.arg());
        let n = order as i32;
        let scale = (1.0 / omega.norm()).min(self.t0());
        let f = |r: f64| {
            let z = dir * r;
            (I * z).powi(n) * self.vacuum_correlation(z) * (I * omega * z).exp()
        };
        Ok(dir * quad::integrate_semi_infinite(f, 0.0, scale, &self.tol)?.value)
    }

    fn require_vacuum(&self) -> Result<()> {
        if self.spec.beta.is_infinite() {
            Ok(())
        } else {
            Err(Error::Domain("analytic continuation is implemented at zero temperature only".into()))
        }
    }

    /// `Γ_ω(kh)` for `k = 0..n`, accumulated panel by panel with GK21.
    ///
    /// Each panel is far below the correlation time for the steps used by the
    /// Volterra solver, so the per-panel rule is exact to rounding.
    pub fn gamma_grid(&self, omega: impl Into<Complex64>, h: f64, n: usize) -> Result<Vec<Complex64>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("step must be positive, got {h}")));
        }
        let omega = omega.into();
        let mut out = Vec::with_capacity(n + 1);
        out.push(ZERO);
        let mut acc = ZERO;
        let mut failure = None;
        for k in 0..n {
            let a = k as f64 * h;
            let mut f = |x: f64| match self.correlation(x) {
                Ok(c) => c * (I * omega * x).exp(),
                Err(e) => {
                    failure.get_or_insert(e);
                    ZERO
                }
            };
            acc += quad::gk21(&mut f, a, a + h).0;
            out.push(acc);
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// `C_β(kh) e^{iωkh}` for `k = 0..n`.
    pub fn correlation_grid(&self, omega: f64, h: f64, n: usize) -> Result<Vec<Complex64>> {
        (0..=n)
            .map(|k| {
                let t = k as f64 * h;
                Ok(self.correlation(t)? * (I * omega * t).exp())
            })
            .collect()
    }

    /// `e^{-rt} ∫₀ᵗ τ C_β(t-τ) e^{iωτ} dτ`.
    pub fn sigma_kernel(&self, omega: Complex64, t: f64, pop_rate: f64) -> Result<Complex64> {
        check_time(t)?;
        check_rate(pop_rate)?;
        if t == 0.0 {
            return Ok(ZERO);
        }
        // Substituting σ = t - τ gives e^{iωt} ∫₀ᵗ (t - σ) C(σ) e^{-iωσ} dσ.
        let kappa = -omega;
        let sp = self.vacuum_split(kappa, t, &|z| t - z)?;
        let vac = (I * omega * t).exp() * sp.head - sp.tail;
        let th = match self.spec.beta {
            Beta::Infinite => ZERO,
            Beta::Finite(_) => self.thermal_integral(
                |nu| {
                    0.5 * ((I * nu * t).exp() * expint1(I * (omega - nu), t)
                        + (-I * nu * t).exp() * expint1(I * (omega + nu), t))
                },
                Some(omega.re.abs()),
            )?,
        };
        Ok((vac + th) * (-pop_rate * t).exp())
    }

    /// `e^{-rt} ∫₀ᵗ [sin(Δτ)/Δ] C_β(t-τ) e^{-kτ} dτ`.
    pub fn z_kernel(&self, delta: f64, k: f64, t: f64, pop_rate: f64) -> Result<Complex64> {
        check_time(t)?;
        check_rate(pop_rate)?;
        if !(delta.is_finite() && delta != 0.0) {
            return Err(Error::Domain(format!("delta must be finite and non-zero, got {delta}")));
        }
        if !k.is_finite() {
            return Err(Error::Domain(format!("k must be finite, got {k}")));
        }
        if t == 0.0 {
            return Ok(ZERO);
        }
        // sin(Δ(t-σ)) splits into two exponentials, each a half-sided transform
        // at κ = ∓Δ - ik; the e^{iκt} factors of the ray pieces cancel exactly.
        let one = |_: Complex64| Complex64::new(1.0, 0.0);
        let k1 = Complex64::new(-delta, -k);
        let k2 = Complex64::new(delta, -k);
        let a = self.vacuum_split(k1, t, &one)?;
        let b = self.vacuum_split(k2, t, &one)?;
        let pa = (Complex64::new(-k, delta) * t).exp();
        let pb = (Complex64::new(-k, -delta) * t).exp();
        let vac = (pa * a.head - a.tail - pb * b.head + b.tail) / (2.0 * I * delta);
        let th = match self.spec.beta {
            Beta::Infinite => ZERO,
            Beta::Finite(_) => self.thermal_integral(
                |nu| {
                    let mut acc = ZERO;
                    for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let rate = Complex64::new(-k, sa * delta - sb * nu);
                        acc += sa * (I * sb * nu * t).exp() * expint(rate, t);
                    }
                    acc / (4.0 * I * delta)
                },
                Some(delta),
            )?,
        };
        Ok((vac + th) * (-pop_rate * t).exp())
    }

    /// Closed form of `Γ_0(t)` at zero temperature.
    fn gamma_zero_vacuum(&self, t: f64) -> Complex64 {
        let BathSpec { s, omega_c, .. } = self.spec;
        let base = Complex64::new(1.0, omega_c * t);
        let pow = (-s * base.ln()).exp();
        self.c0 * (1.0 - pow) / (I * omega_c * s)
    }

    /// `∫₀ᵗ w(z) C(z) e^{iκz} dz` at zero temperature, split into real-axis
    /// and ray pieces. For `t = ∞` only the head is meaningful.
    fn vacuum_split(
        &self,
        kappa: Complex64,
        t: f64,
        w: &dyn Fn(Complex64) -> Complex64,
    ) -> Result<Split> {
        if t == 0.0 {
            return Ok(Split { head: ZERO, tail: ZERO });
        }
        let t0 = self.t0();
        if t.is_infinite() {
            if kappa.im < 0.0 {
                return Err(Error::LowerHalfPlane { im: kappa.im });
            }
            let head = if kappa.re == 0.0 {
                let f = |x: f64| w(x.into()) * self.vacuum_correlation(x.into()) * (I * kappa * x).exp();
                quad::integrate_semi_infinite(f, 0.0, t0, &self.tol)?.value
            } else {
                self.head(kappa, w)?
            };
            return Ok(Split { head, tail: ZERO });
        }
        if t <= 4.0 * t0 || kappa.re.abs() * t < TAU {
            return Ok(Split {
                head: self.direct(kappa, t, w)?,
                tail: ZERO,
            });
        }
        Ok(Split {
            head: self.head(kappa, w)?,
            tail: self.ray(kappa, t, kappa.re > 0.0, w)?,
        })
    }

    /// Analytic continuation of the transform to `t = ∞`.
    fn head(&self, kappa: Complex64, w: &dyn Fn(Complex64) -> Complex64) -> Result<Complex64> {
        if kappa.re > 0.0 {
            let t0 = self.t0();
            let near = self.direct(kappa, t0, w)?;
            Ok(near + (I * kappa * t0).exp() * self.ray(kappa, t0, true, w)?)
        } else {
            // The downward imaginary axis stays clear of the branch point.
            self.ray(kappa, 0.0, false, w)
        }
    }

    /// `e^{-iκt} ∫_t^{t ± i∞} w(z) C(z) e^{iκz} dz`.
    fn ray(
        &self,
        kappa: Complex64,
        t: f64,
        up: bool,
        w: &dyn Fn(Complex64) -> Complex64,
    ) -> Result<Complex64> {
        let dir = if up { I } else { -I };
        let scale = (1.0 / kappa.re.abs()).min(t.max(self.t0()));
        let f = |y: f64| {
            let z = Complex64::new(t, 0.0) + dir * y;
            w(z) * self.vacuum_correlation(z) * (I * kappa * dir * y).exp()
        };
        Ok(dir * quad::integrate_semi_infinite(f, 0.0, scale, &self.tol)?.value)
    }

    /// Real-axis quadrature over `[0, t]` with geometric breakpoints.
    fn direct(&self, kappa: Complex64, t: f64, w: &dyn Fn(Complex64) -> Complex64) -> Result<Complex64> {
        let mut breaks = vec![0.0];
        let mut x = self.t0();
        while x < t {
            breaks.push(x);
            x *= 2.0;
        }
        breaks.push(t);
        let f = |x: f64| w(x.into()) * self.vacuum_correlation(x.into()) * (I * kappa * x).exp();
        Ok(quad::integrate_breaks(f, &breaks, &self.tol)?.value)
    }

    /// `(2/π) ∫₀^∞ J(ν) n(ν) g(ν) dν`: the thermal excess over the vacuum.
    fn thermal_integral<F>(&self, g: F, feature: Option<f64>) -> Result<Complex64>
    where
        F: Fn(f64) -> Complex64,
    {
        let b = match self.spec.beta {
            Beta::Infinite => return Ok(ZERO),
            Beta::Finite(b) => b,
        };
        let omega_c = self.spec.omega_c;
        let top = 40.0 / (1.0 / omega_c + b);
        let mut breaks = vec![0.0, top.min(omega_c), top];
        if let Some(x) = feature {
            if x > 0.0 && x < top {
                breaks.push(x);
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let beta = self.spec.beta;
        let f = |nu: f64| {
            if nu <= 0.0 {
                return ZERO;
            }
            self.spectral_density(nu) * beta.occupation(nu) * g(nu)
        };
        let tol = Tolerance {
            max_intervals: 20_000,
            ..self.tol
        };
        Ok(quad::integrate_breaks(f, &breaks, &tol)?.value * (2.0 / PI))
    }

    /// Thermal excess of the Lamb shift, `(1/π) P∫ J n 2ω/(ω² - ν²) dν`.
    fn thermal_lamb_shift(&self, omega: f64) -> Result<f64> {
        let beta = match self.spec.beta {
            Beta::Infinite => return Ok(0.0),
            b => b,
        };
        if omega == 0.0 {
            return Ok(0.0);
        }
        let a = omega.abs();
        let h = |nu: f64| self.spectral_density(nu) * beta.occupation(nu) * 2.0 * omega / (a + nu);
        Ok(self.principal_value(h, a)? / PI)
    }

    /// `P∫₀^∞ h(ν)/(a - ν) dν` by singularity subtraction on `[0, 2a]`.
    fn principal_value<H>(&self, h: H, a: f64) -> Result<f64>
    where
        H: Fn(f64) -> f64,
    {
        let omega_c = self.spec.omega_c;
        let tol = Tolerance::new(1e-13, 1e-17 * self.c0).with_abs(1e-17 * self.c0);
        let re = |v: f64| Complex64::new(v, 0.0);
        if a <= 0.0 {
            let f = |nu: f64| re(h(nu) / (a - nu));
            let near = quad::integrate_breaks(f, &[0.0, 1e-6 * omega_c, 1e-3 * omega_c, omega_c], &tol)?;
            let far = quad::integrate_semi_infinite(f, omega_c, omega_c, &tol)?;
            return Ok((near.value + far.value).re);
        }
        let ha = h(a);
        let g = |nu: f64| {
            if nu == a {
                return ZERO;
            }
            re((h(nu) - ha) / (a - nu))
        };
        let mut breaks = vec![0.0, 1e-6 * a, 1e-3 * a, a, 2.0 * a];
        breaks.dedup();
        let near = quad::integrate_breaks(g, &breaks, &tol)?;
        let f = |nu: f64| re(h(nu) / (a - nu));
        let far = quad::integrate_semi_infinite(f, 2.0 * a, omega_c.max(a), &tol)?;
        Ok((near.value + far.value).re)
    }
}

/// Number of moments kept for anchored frequencies.
const SWEEP_MOMENTS: usize = 22;

/// Largest `|u - a| t` served from the moment expansion; beyond it the
/// contour evaluation is used.
const SWEEP_REACH: f64 = 1.0;

/// Half-sided transforms `Γ_u(t)` along an increasing time sweep.
///
/// Each anchor `a` carries the running moments `Mₙ(t) = ∫₀ᵗ (iτ)ⁿ/n! C(τ) e^{iaτ} dτ`,
/// accumulated panel by panel with GK21, so that for a nearby frequency
/// `Γ_u(t) = Σₙ (u - a)ⁿ Mₙ(t)`. The cost of a step does not depend on `t`.
#[derive(Debug, Clone)]
pub struct GammaSweep {
    bath: Bath,
    t: f64,
    anchors: Vec<Complex64>,
    moments: Vec<Vec<Complex64>>,
    max_panel: f64,
    fallbacks: usize,
}

impl GammaSweep {
    /// `anchors` pairs each anchor frequency with `true` if off-anchor
    /// evaluations are needed (otherwise only `Γ_a` itself is tracked).
    pub fn new(bath: &Bath, anchors: &[(Complex64, bool)]) -> Result<Self> {
        let mut widest = bath.spec.omega_c;
        for &(a, _) in anchors {
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::Domain(format!("anchor must be finite, got {a}")));
            }
            widest = widest.max(a.norm());
        }
        Ok(Self {
            bath: bath.clone(),
            t: 0.0,
            anchors: anchors.iter().map(|&(a, _)| a).collect(),
            moments: anchors
                .iter()
                .map(|&(_, full)| vec![ZERO; if full { SWEEP_MOMENTS } else { 1 }])
                .collect(),
            max_panel: 0.5 / widest,
            fallbacks: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn anchor(&self, k: usize) -> Complex64 {
        self.anchors[k]
    }

    /// Number of evaluations that fell back to the contour route.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// Moves the sweep forward to `t`.
    pub fn advance(&mut self, t: f64) -> Result<()> {
        check_time(t)?;
        if t < self.t {
            return Err(Error::Domain(format!("sweep cannot move back from {} to {t}", self.t)));
        }
        let span = t - self.t;
        if span == 0.0 {
            return Ok(());
        }
        let panels = (span / self.max_panel).ceil().max(1.0) as usize;
        let h = span / panels as f64;
        let start = self.t;
        for p in 0..panels {
            let a = start + p as f64 * h;
            let b = if p + 1 == panels { t } else { a + h };
            for (x, w) in quad::kronrod_nodes(a, b) {
                let c = self.bath.correlation(x)? * w;
                let ix = I * x;
                for (anchor, m) in self.anchors.iter().zip(self.moments.iter_mut()) {
                    let mut term = c * (I * anchor * x).exp();
                    m[0] += term;
                    for (n, slot) in m.iter_mut().enumerate().skip(1) {
                        term *= ix / n as f64;
                        *slot += term;
                    }
                }
            }
        }
        self.t = t;
        Ok(())
    }

    /// `Γ_a(t)` at anchor `k`.
    pub fn at_anchor(&self, k: usize) -> Complex64 {
        self.moments[k][0]
    }

    /// `Γ_u(t)` using anchor `k`.
    pub fn eval(&mut self, k: usize, u: Complex64) -> Result<Complex64> {
        let d = u - self.anchors[k];
        let m = &self.moments[k];
        if d == ZERO {
            return Ok(m[0]);
        }
        if m.len() == 1 || d.norm() * self.t > SWEEP_REACH {
            self.fallbacks += 1;
            return self.bath.gamma_half(u, self.t);
        }
        let mut acc = ZERO;
        for slot in m.iter().rev() {
            acc = acc * d + slot;
        }
        Ok(acc)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and non-negative, got {t}")))
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if t >= 0.0 && !t.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be non-negative, got {t}")))
    }
}

fn check_rate(r: f64) -> Result<()> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("population rate must be non-negative, got {r}")))
    }
}

/// `(e^z - 1)/z`, accurate near the origin.
pub(crate) fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..20 {
            term *= z / k as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `(e^z (z - 1) + 1)/z²`, i.e. `∫₀¹ u e^{zu} du`.
pub(crate) fn phi_moment(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.5, 0.0);
        for k in 1..20 {
            term *= z / k as f64;
            sum += term / (k + 2) as f64;
        }
        sum
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

/// `∫₀ᵗ e^{bτ} dτ`.
pub(crate) fn expint(b: Complex64, t: f64) -> Complex64 {
    t * phi1(b * t)
}

/// `∫₀ᵗ τ e^{bτ} dτ`.
pub(crate) fn expint1(b: Complex64, t: f64) -> Complex64 {
    t * t * phi_moment(b * t)
}
