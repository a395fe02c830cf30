//! Van Kampen cumulants of the RWA coherence generator through sixth order.
//!
//! Everything is expressed through `Γ_ω(τ)` on `[0, t]`. Time-ordered
//! integrals reduce to convolutions and cumulative integrals, evaluated on a
//! uniform grid with fourth-order Gregory weights and Richardson-extrapolated
//! from two step sizes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::Bath;
use crate::error::{Error, Result};
use crate::rwa::RwaModel;
use crate::volterra;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Grid step relative to the fastest scale `1/max(ω_c, |ω|)`.
const STEP_FRACTION: f64 = 0.05;

/// Relative frequency step for finite-difference `∂ⁿΓ/∂ωⁿ`.
const FD_STEP: f64 = 1e-3;

/// Iterates `f₁..f_n` of the interaction-picture Volterra equation and their
/// time derivatives, at a single time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterates {
    pub t: f64,
    pub f: Vec<Complex64>,
    pub fdot: Vec<Complex64>,
    /// Richardson error estimate (absolute, largest over all entries).
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    pub t: f64,
    pub omega: f64,
    pub k2: Complex64,
    pub k4: Complex64,
    pub k6: Complex64,
    /// `H_ω(t) = ∫₀ᵗ Δ(t, t-t₁) Δ(t, t₁) dt₁`.
    pub h: Complex64,
}

impl CumulantSet {
    pub fn sum(&self) -> Complex64 {
        self.k2 + self.k4 + self.k6
    }
}

/// `K₆` split by powers of `Δ(t, ·) = Γ_ω(t) - Γ_ω(·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct K6Pieces {
    pub linear: Complex64,
    pub quadratic: Complex64,
    pub cubic: Complex64,
}

impl K6Pieces {
    pub fn total(&self) -> Complex64 {
        self.linear + self.quadratic + self.cubic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaIdentity {
    pub n: u32,
    /// Time-ordered `n`-fold integral of `Δ(t, t - t_n)`.
    pub lhs: Complex64,
    /// `(-i)ⁿ/n! ∂ⁿΓ/∂ωⁿ` from finite differences.
    pub rhs: Complex64,
    /// The same from the exact moment transform.
    pub rhs_exact: Complex64,
}

impl DeltaIdentity {
    pub fn relative_residual(&self) -> f64 {
        (self.lhs - self.rhs).norm() / self.rhs.norm().max(f64::MIN_POSITIVE)
    }
}

// Slots of the per-grid evaluation.
const F: usize = 0;
const FDOT: usize = 3;
const H: usize = 6;
const K4_CLOSED: usize = 7;
const K6_LIN: usize = 8;
const K6_QUAD: usize = 9;
const K6_CUBIC: usize = 10;
const LHS: usize = 11;
const SLOTS: usize = 14;

type Slots = [Complex64; SLOTS];

/// `h Σ_j w_j y_j` over the whole grid.
fn integral(y: &[Complex64], h: f64) -> Complex64 {
    let n = y.len() - 1;
    y.iter()
        .enumerate()
        .map(|(j, v)| volterra::weight(n, j) * v)
        .sum::<Complex64>()
        * h
}

/// `∫₀^{τ_m} y` for every grid point.
fn cumulative(y: &[Complex64], h: f64) -> Vec<Complex64> {
    volterra::convolve(&vec![ONE; y.len()], y, h)
}

fn pointwise(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn evaluate_grid(bath: &Bath, omega: Complex64, t: f64, n: usize) -> Result<Slots> {
    let h = t / n as f64;
    let gamma = bath.gamma_grid(omega, h, n)?;
    let g_t = gamma[n];
    let d: Vec<Complex64> = gamma.iter().map(|g| g_t - g).collect();
    let dr: Vec<Complex64> = d.iter().rev().copied().collect();
    let tau: Vec<Complex64> = (0..=n).map(|k| Complex64::new(k as f64 * h, 0.0)).collect();

    let mut out = [ZERO; SLOTS];

    let g2 = volterra::convolve(&gamma, &gamma, h);
    let g3 = volterra::convolve(&gamma, &g2, h);
    let q = -0.25;
    let fdots = [
        gamma.iter().map(|g| q * g).collect::<Vec<_>>(),
        g2.iter().map(|g| q * q * g).collect(),
        g3.iter().map(|g| q * q * q * g).collect(),
    ];
    for (k, fd) in fdots.iter().enumerate() {
        out[FDOT + k] = fd[n];
        out[F + k] = integral(fd, h);
    }

    let d_dr = pointwise(&d, &dr);
    out[H] = integral(&d_dr, h);
    out[K4_CLOSED] = -integral(&pointwise(&dr, &gamma), h) / 16.0;

    let g2t = g_t * g_t;
    out[K6_LIN] = -g2t / 64.0 * integral(&pointwise(&tau, &d), h);

    let dd = volterra::convolve(&d, &d, h);
    let bc = cumulative(&dd, h)[n];
    let p = cumulative(&dr, h);
    let dp = integral(&pointwise(&d, &p), h);
    // ∬(da + cp) collapses to t·H.
    let da_cp = t * out[H];
    out[K6_QUAD] = -g_t / 64.0 * (bc - dp - da_cp);

    let abc = volterra::convolve(&d, &dd, h)[n];
    let qc = cumulative(&d_dr, h);
    let dcp = integral(&pointwise(&d, &qc), h);
    let r = cumulative(&d, h);
    let dca = integral(&pointwise(&d_dr, &r), h);
    out[K6_CUBIC] = (abc - dcp - dca) / 64.0;

    let mut weight = vec![ONE; n + 1];
    for k in 0..3 {
        if k > 0 {
            for (w, x) in weight.iter_mut().zip(&tau) {
                *w *= x / k as f64;
            }
        }
        out[LHS + k] = integral(&pointwise(&weight, &d), h);
    }
    Ok(out)
}

/// Richardson-combined grid evaluation and its error estimate.
fn evaluate(bath: &Bath, omega: Complex64, t: f64) -> Result<(Slots, f64)> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(([ZERO; SLOTS], 0.0));
    }
    let fastest = bath.spec().omega_c.max(omega.norm());
    let n = ((t * fastest / STEP_FRACTION).ceil() as usize).max(16);
    let coarse = evaluate_grid(bath, omega, t, n)?;
    let fine = evaluate_grid(bath, omega, t, 2 * n)?;
    let mut out = [ZERO; SLOTS];
    let mut err: f64 = 0.0;
    for k in 0..SLOTS {
        let diff = (fine[k] - coarse[k]) / 15.0;
        out[k] = fine[k] + diff;
        err = err.max(diff.norm());
    }
    Ok((out, err))
}

fn model_bath(model: &RwaModel) -> Result<Bath> {
    let bath = model.bath()?;
    if !model.bath.beta.is_infinite() {
        return Err(Error::Domain("cumulants are implemented at zero temperature only".into()));
    }
    Ok(bath)
}

fn omega_of(model: &RwaModel) -> Complex64 {
    Complex64::new(model.delta, 0.0)
}

/// `f₁..f_{n_max}` and `ḟ₁..ḟ_{n_max}` at time `t`.
pub fn volterra_iterates(model: &RwaModel, t: f64, n_max: usize) -> Result<Iterates> {
    if !(1..=3).contains(&n_max) {
        return Err(Error::Domain(format!("n_max must be 1, 2 or 3, got {n_max}")));
    }
    let bath = model_bath(model)?;
    let (v, error) = evaluate(&bath, omega_of(model), t)?;
    Ok(Iterates {
        t,
        f: v[F..F + n_max].to_vec(),
        fdot: v[FDOT..FDOT + n_max].to_vec(),
        error,
    })
}

/// `K_{2n} = ḟ_n - Σ_{j<n} K_{2n-2j} f_j` for as many orders as iterates given.
pub fn cumulant_recursion(f: &[Complex64], fdot: &[Complex64]) -> Vec<Complex64> {
    let mut k: Vec<Complex64> = Vec::with_capacity(fdot.len());
    for n in 0..fdot.len() {
        let mut kn = fdot[n];
        for j in 0..n {
            kn -= k[n - 1 - j] * f[j];
        }
        k.push(kn);
    }
    k
}

/// `K₂, K₄, K₆` from the iterates, together with `H_ω(t)`.
pub fn cumulants(model: &RwaModel, t: f64) -> Result<CumulantSet> {
    let bath = model_bath(model)?;
    let (v, _) = evaluate(&bath, omega_of(model), t)?;
    let k = cumulant_recursion(&v[F..F + 3], &v[FDOT..FDOT + 3]);
    Ok(CumulantSet {
        t,
        omega: model.delta,
        k2: k[0],
        k4: k[1],
        k6: k[2],
        h: v[H],
    })
}

/// `(1/16) ∫₀ᵗ [Γ(t-t₁) - Γ(t)] Γ(t₁) dt₁`.
pub fn k4_closed_form(model: &RwaModel, t: f64) -> Result<Complex64> {
    let bath = model_bath(model)?;
    Ok(evaluate(&bath, omega_of(model), t)?.0[K4_CLOSED])
}

/// Linear, quadratic and cubic parts of `K₆` in `Δ`, each by direct quadrature.
pub fn k6_pieces(model: &RwaModel, t: f64) -> Result<K6Pieces> {
    let bath = model_bath(model)?;
    let (v, _) = evaluate(&bath, omega_of(model), t)?;
    Ok(K6Pieces {
        linear: v[K6_LIN],
        quadratic: v[K6_QUAD],
        cubic: v[K6_CUBIC],
    })
}

/// `H_ω(t)` at a possibly complex frequency.
pub fn h_function(bath: &Bath, omega: Complex64, t: f64) -> Result<Complex64> {
    Ok(evaluate(bath, omega, t)?.0[H])
}

/// `∂ⁿΓ_ω(t)/∂ωⁿ` by Richardson-refined central differences with step `1e-3·|ω|`.
pub fn gamma_fd(bath: &Bath, omega: Complex64, t: f64, n: u32) -> Result<Complex64> {
    let step = FD_STEP * omega.norm().max(1.0);
    let g = |x: f64| bath.gamma_half(omega + x, t);
    let stencil = |h: f64| -> Result<Complex64> {
        Ok(match n {
            1 => (g(h)? - g(-h)?) / (2.0 * h),
            2 => (-g(2.0 * h)? + 16.0 * g(h)? - 30.0 * g(0.0)? + 16.0 * g(-h)? - g(-2.0 * h)?) / (12.0 * h * h),
            3 => (g(2.0 * h)? - 2.0 * g(h)? + 2.0 * g(-h)? - g(-2.0 * h)?) / (2.0 * h * h * h),
            _ => return Err(Error::Domain(format!("derivative order must be 1, 2 or 3, got {n}"))),
        })
    };
    let coarse = stencil(step)?;
    let fine = stencil(0.5 * step)?;
    let gain = if n == 2 { 16.0 } else { 4.0 };
    Ok((gain * fine - coarse) / (gain - 1.0))
}

/// `∂H_ω(t)/∂ω` by Richardson-refined central differences.
pub fn h_derivative(bath: &Bath, omega: Complex64, t: f64) -> Result<Complex64> {
    let step = FD_STEP * omega.norm().max(1.0);
    let d = |h: f64| -> Result<Complex64> {
        Ok((h_function(bath, omega + h, t)? - h_function(bath, omega - h, t)?) / (2.0 * h))
    };
    let coarse = d(step)?;
    let fine = d(0.5 * step)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Checks `∫_← Δ(t, t - t_n) = (-i)ⁿ/n! ∂ⁿΓ/∂ωⁿ` for `n = 1, 2, 3`.
pub fn delta_identity_check(model: &RwaModel, t: f64, n: u32) -> Result<DeltaIdentity> {
    if !(1..=3).contains(&n) {
        return Err(Error::Domain(format!("identity order must be 1, 2 or 3, got {n}")));
    }
    let bath = model_bath(model)?;
    let omega = omega_of(model);
    let (v, _) = evaluate(&bath, omega, t)?;
    let lhs = v[LHS + n as usize - 1];
    let factorial = (1..=n).product::<u32>() as f64;
    let pre = (-I).powu(n) / factorial;
    let (rhs, rhs_exact) = if t == 0.0 {
        (ZERO, ZERO)
    } else {
        (
            pre * gamma_fd(&bath, omega, t, n)?,
            pre * bath.gamma_derivative(omega, t, n)?,
        )
    };
    Ok(DeltaIdentity {
        n,
        lhs,
        rhs,
        rhs_exact,
    })
}

/// `-¼ Γ_{ω - (i/4)Γ_{ω - (i/4)Γ_ω}}(t) + (1/16) H_{ω - (i/4)Γ_ω}(t)`.
///
/// The cubic remainder `K₆^{Δ³}` is not included.
pub fn nested_generator(model: &RwaModel, t: f64) -> Result<Complex64> {
    let bath = model_bath(model)?;
    let omega = omega_of(model);
    if t == 0.0 {
        return Ok(ZERO);
    }
    let g = bath.gamma_half(omega, t)?;
    let u1 = omega - 0.25 * I * g;
    let g1 = bath.gamma_half(u1, t)?;
    let u2 = omega - 0.25 * I * g1;
    Ok(-0.25 * bath.gamma_half(u2, t)? + h_function(&bath, u1, t)? / 16.0)
}

/// The Taylor expansion of the nested form through sixth order, written with
/// `Γ, Γ', Γ'', H, H'` at the bare frequency (exact moments for `Γ⁽ⁿ⁾`).
pub fn collected_generator(model: &RwaModel, t: f64) -> Result<Complex64> {
    let bath = model_bath(model)?;
    let omega = omega_of(model);
    if t == 0.0 {
        return Ok(ZERO);
    }
    let g = bath.gamma_half(omega, t)?;
    let g1 = bath.gamma_derivative(omega, t, 1)?;
    let g2 = bath.gamma_derivative(omega, t, 2)?;
    let h = h_function(&bath, omega, t)?;
    let h1 = h_derivative(&bath, omega, t)?;
    Ok(-g / 4.0 + I * g * g1 / 16.0 + h / 16.0 + g * g * g2 / 128.0 + g / 64.0 * (g1 * g1 - I * h1))
}

/// `K₂ + K₄ + K₆ - nested - K₆^{Δ³}`, which is `O(λ⁸)`.
pub fn nested_residual(model: &RwaModel, t: f64) -> Result<Complex64> {
    let set = cumulants(model, t)?;
    let pieces = k6_pieces(model, t)?;
    Ok(set.sum() - nested_generator(model, t)? - pieces.cubic)
}

/// Identity residuals at one time, as reported by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantReport {
    pub t: f64,
    pub cumulants: CumulantSet,
    pub k6: K6Pieces,
    pub delta_identity: Vec<DeltaIdentity>,
    /// `|K₄(recursion) - K₄(closed form)|`.
    pub k4_closed_residual: f64,
    /// `|K₄ - (i/16)ΓΓ' - H/16|`.
    pub h_residual: f64,
    /// `|K₆ - (K₆^Δ + K₆^{Δ²} + K₆^{Δ³})|`.
    pub k6_split_residual: f64,
    /// `|K₆^Δ - Γ²Γ''/128|`.
    pub k6_linear_residual: f64,
    /// `K₂ + K₄ + K₆ - nested - K₆^{Δ³}`.
    pub nested_residual: Complex64,
    pub grid_error: f64,
}

pub fn cumulant_report(model: &RwaModel, t: f64) -> Result<CumulantReport> {
    let bath = model_bath(model)?;
    let omega = omega_of(model);
    let (v, grid_error) = evaluate(&bath, omega, t)?;
    let k = cumulant_recursion(&v[F..F + 3], &v[FDOT..FDOT + 3]);
    let set = CumulantSet {
        t,
        omega: model.delta,
        k2: k[0],
        k4: k[1],
        k6: k[2],
        h: v[H],
    };
    let pieces = K6Pieces {
        linear: v[K6_LIN],
        quadratic: v[K6_QUAD],
        cubic: v[K6_CUBIC],
    };
    let (g, g1, g2) = if t == 0.0 {
        (ZERO, ZERO, ZERO)
    } else {
        (
            bath.gamma_half(omega, t)?,
            bath.gamma_derivative(omega, t, 1)?,
            bath.gamma_derivative(omega, t, 2)?,
        )
    };
    let delta_identity = (1..=3)
        .map(|n| delta_identity_check(model, t, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(CumulantReport {
        t,
        cumulants: set,
        k6: pieces,
        delta_identity,
        k4_closed_residual: (set.k4 - v[K4_CLOSED]).norm(),
        h_residual: (set.k4 - I * g * g1 / 16.0 - set.h / 16.0).norm(),
        k6_split_residual: (set.k6 - pieces.total()).norm(),
        k6_linear_residual: (pieces.linear - g * g * g2 / 128.0).norm(),
        nested_residual: set.sum() - nested_generator(model, t)? - pieces.cubic,
        grid_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_matches_explicit_orders() {
        let f = [Complex64::new(0.3, -0.1), Complex64::new(0.05, 0.02), Complex64::new(-0.01, 0.004)];
        let fd = [Complex64::new(-0.2, 0.1), Complex64::new(0.07, -0.03), Complex64::new(0.002, 0.01)];
        let k = cumulant_recursion(&f, &fd);
        assert_eq!(k[0], fd[0]);
        assert!((k[1] - (fd[1] - f[0] * fd[0])).norm() < 1e-15);
        let k6 = fd[2] - f[0] * fd[1] - f[1] * fd[0] + f[0] * f[0] * fd[0];
        assert!((k[2] - k6).norm() < 1e-15);
    }

    #[test]
    fn cumulative_integral_of_linear_function() {
        let h = 0.1;
        let y: Vec<Complex64> = (0..=20).map(|k| Complex64::new(k as f64 * h, 0.0)).collect();
        let c = cumulative(&y, h);
        for (k, v) in c.iter().enumerate() {
            let t = k as f64 * h;
            assert!((v.re - 0.5 * t * t).abs() < 1e-12);
        }
        assert!((integral(&y, h).re - 2.0).abs() < 1e-12);
    }
}
