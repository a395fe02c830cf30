//! Spin–boson model: Davies baseline, resummed generator, and the regulated
//! map `Φ(t) = e^{L₀t} + C(t)`.
//!
//! `H_S = (Δ/2)σ_z`, system operator `A = ½(ξσ_z + σ_x)`. Level 1 is the
//! excited state, so `ω_12 = Δ` and the zero-temperature fixed point of the
//! Davies generator is `diag(0, 1)`.
//!
//! The correlator `C(t)` obeys `Ċ = L₀C + [L(t) - L₀]e^{L₀t}` with `C(0) = 0`.
//! Two integrators are provided: classical RK4 on a uniform grid, and an
//! exponential quadrature of `C(t) = ∫₀ᵗ e^{L₀(t-τ)}[L(τ) - L₀]e^{L₀τ} dτ` on
//! Kronrod panels. Both evaluate `Γ` at the renormalized frequencies through
//! a [`GammaSweep`], so the cost per unit time is independent of `t`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::{Bath, BathSpec, GammaSweep};
use crate::error::{Error, Result};
use crate::quad;
use crate::superop::{devectorize, vec_index, vectorize, QubitState, Superop};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest RK4 step in units of `1/ω_c`.
pub const RK4_MAX_STEP: f64 = 0.05;

/// Agreement required between the RK4 series and the quadrature cross-check.
pub const CROSS_CHECK_LIMIT: f64 = 1e-6;

/// Number of cross-check times.
pub const CROSS_CHECK_SAMPLES: usize = 8;

/// Largest trace deviation accepted by [`evolve`].
pub const TRACE_LIMIT: f64 = 1e-6;

/// Biased spin–boson model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmModel {
    pub delta: f64,
    pub xi: f64,
    pub bath: BathSpec,
}

impl SbmModel {
    pub fn new(delta: f64, xi: f64, bath: BathSpec) -> Result<Self> {
        let m = Self { delta, xi, bath };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Domain(format!("delta must be positive, got {}", self.delta)));
        }
        if !self.xi.is_finite() {
            return Err(Error::Domain(format!("xi must be finite, got {}", self.xi)));
        }
        self.bath.validate()
    }

    pub fn bath(&self) -> Result<Bath> {
        self.validate()?;
        Bath::new(self.bath)
    }

    /// `A = ½(ξσ_z + σ_x)`.
    pub fn coupling(&self) -> [[f64; 2]; 2] {
        [[0.5 * self.xi, 0.5], [0.5, -0.5 * self.xi]]
    }

    /// `(E₁, E₂) = (Δ/2, -Δ/2)`.
    pub fn energies(&self) -> [f64; 2] {
        [0.5 * self.delta, -0.5 * self.delta]
    }

    pub fn hamiltonian(&self) -> Superop {
        let e = self.energies();
        Superop::hamiltonian(&Matrix2::new(e[0].into(), ZERO, ZERO, e[1].into()))
    }

    /// Same model with the coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            bath: self.bath.scaled(factor),
            ..*self
        }
    }
}

/// Rates and shifts of the Davies generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaviesRates {
    /// `J_{β,Δ}` (emission).
    pub j_plus: f64,
    /// `J_{β,-Δ}` (absorption).
    pub j_minus: f64,
    /// `J_{β,0}`.
    pub j_zero: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub delta_tilde: f64,
}

pub fn davies_rates(model: &SbmModel) -> Result<DaviesRates> {
    let bath = model.bath()?;
    let d = model.delta;
    let j_plus = bath.thermal_spectral_density(d)?;
    let j_minus = bath.thermal_spectral_density(-d)?;
    let j_zero = if model.xi == 0.0 {
        0.0
    } else {
        bath.thermal_spectral_density(0.0)?
    };
    let delta_tilde = d + (bath.lamb_shift(d)? - bath.lamb_shift(-d)?) / 4.0;
    Ok(DaviesRates {
        j_plus,
        j_minus,
        j_zero,
        nu1: 0.5 * (j_plus + j_minus),
        nu2: 0.25 * (j_plus + j_minus) + model.xi * model.xi * j_zero,
        delta_tilde,
    })
}

/// Phase-covariant Davies generator `L₀`.
pub fn davies_generator(model: &SbmModel) -> Result<Superop> {
    Ok(DaviesFlow::new(&davies_rates(model)?).generator())
}

/// Closed-form `e^{L₀t}`.
#[derive(Debug, Clone, Copy)]
struct DaviesFlow {
    /// Excited → ground rate `J_Δ/2`.
    a: f64,
    /// Ground → excited rate `J_{-Δ}/2`.
    b: f64,
    /// `ρ21` eigenvalue `-ν₂ + iΔ̃`.
    coh: Complex64,
}

impl DaviesFlow {
    fn new(r: &DaviesRates) -> Self {
        Self {
            a: 0.5 * r.j_plus,
            b: 0.5 * r.j_minus,
            coh: Complex64::new(-r.nu2, r.delta_tilde),
        }
    }

    fn generator(&self) -> Superop {
        let mut g = Superop::zero();
        g.m[(0, 0)] = (-self.a).into();
        g.m[(0, 3)] = self.b.into();
        g.m[(3, 0)] = self.a.into();
        g.m[(3, 3)] = (-self.b).into();
        g.m[(1, 1)] = self.coh;
        g.m[(2, 2)] = self.coh.conj();
        g
    }

    fn at(&self, t: f64) -> Superop {
        let rate = self.a + self.b;
        // (1 - e^{-rt})/r, finite as r → 0
        let g = if rate == 0.0 { t } else { -(-rate * t).exp_m1() / rate };
        let mut e = Superop::zero();
        e.m[(0, 0)] = (1.0 - self.a * g).into();
        e.m[(0, 3)] = (self.b * g).into();
        e.m[(3, 0)] = (self.a * g).into();
        e.m[(3, 3)] = (1.0 - self.b * g).into();
        e.m[(1, 1)] = (self.coh * t).exp();
        e.m[(2, 2)] = (self.coh.conj() * t).exp();
        e
    }
}

/// `Γ` at the eight renormalized frequencies, indexed `[a][b][c]` for `ω_ab^{(c)}`.
type ShiftedGammas = [[[Complex64; 2]; 2]; 2];

/// `ω_ab^{(c)}(t)` from the bare transforms `bare[a][k] = Γ_{ω_ak}(t)`.
fn shifted_frequencies(model: &SbmModel, bare: &[[Complex64; 2]; 2]) -> ShiftedGammas {
    let a = model.coupling();
    let e = model.energies();
    let j0 = bare[0][0].re;
    let mut out = [[[ZERO; 2]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            let mut s = ZERO;
            for k in 0..2 {
                s += a[x][k] * a[x][k] * bare[x][k] - a[y][k] * a[y][k] * bare[y][k];
            }
            for c in 0..2 {
                let bias = 2.0 * j0 * a[c][c] * (a[y][y] - a[x][x]);
                out[x][y][c] = (e[x] - e[y]) - I * (s + bias);
            }
        }
    }
    out
}

/// `L(t) = -i[H_S, ·] + K(t)` given `g[a][b][c] = Γ_{ω_ab^{(c)}}(t)`.
fn assemble(model: &SbmModel, g: &ShiftedGammas) -> Superop {
    let a = model.coupling();
    let mut out = model.hamiltonian();
    for n in 0..2 {
        for m in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = a[n][i] * a[j][m] * (g[i][n][j] + g[j][m][i].conj());
                    if j == m {
                        for k in 0..2 {
                            v -= a[n][k] * a[k][i] * g[i][k][j];
                        }
                    }
                    if n == i {
                        for k in 0..2 {
                            v -= a[j][k] * a[k][m] * g[j][k][i].conj();
                        }
                    }
                    out.m[(vec_index(n, m), vec_index(i, j))] += v;
                }
            }
        }
    }
    out
}

/// Index of the bare frequency `E_a - E_k` among `(0, Δ, -Δ)`.
fn bare_slot(a: usize, k: usize) -> usize {
    match (a, k) {
        (0, 1) => 1,
        (1, 0) => 2,
        _ => 0,
    }
}

/// Resummed generator at a single time, by direct contour evaluation.
pub fn resummed_generator(model: &SbmModel, t: f64) -> Result<Superop> {
    let bath = model.bath()?;
    let d = model.delta;
    let gb = [
        bath.gamma_half(ZERO, t)?,
        bath.gamma_half(d.into(), t)?,
        bath.gamma_half((-d).into(), t)?,
    ];
    let bare = [[gb[0], gb[1]], [gb[2], gb[0]]];
    let w = shifted_frequencies(model, &bare);
    let mut seen: Vec<(Complex64, Complex64)> = Vec::with_capacity(8);
    let mut g = [[[ZERO; 2]; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            for c in 0..2 {
                let u = w[x][y][c];
                g[x][y][c] = match seen.iter().find(|(v, _)| *v == u) {
                    Some(&(_, val)) => val,
                    None => {
                        let val = bath.gamma_half(u, t)?;
                        seen.push((u, val));
                        val
                    }
                };
            }
        }
    }
    Ok(assemble(model, &g))
}

/// `L(t)` along an increasing time sweep.
struct GeneratorSweep {
    model: SbmModel,
    sweep: GammaSweep,
    /// Anchor index for each `ω_ab^{(c)}`.
    slots: [[[usize; 2]; 2]; 2],
}

impl GeneratorSweep {
    fn new(model: &SbmModel, bath: &Bath) -> Result<Self> {
        let d = model.delta;
        let mut anchors: Vec<(Complex64, bool)> =
            vec![(ZERO, false), (d.into(), false), ((-d).into(), false)];
        // Anchor each renormalized frequency at its t → ∞ value when that exists.
        let limits = [ZERO, Complex64::from(d), Complex64::from(-d)]
            .iter()
            .map(|&w| bath.gamma_infinite(w))
            .collect::<Result<Vec<_>>>()
            .ok();
        let targets = match limits {
            Some(l) => shifted_frequencies(model, &[[l[0], l[1]], [l[2], l[0]]]),
            None => {
                let e = model.energies();
                let mut w = [[[ZERO; 2]; 2]; 2];
                for (x, row) in w.iter_mut().enumerate() {
                    for (y, cell) in row.iter_mut().enumerate() {
                        *cell = [(e[x] - e[y]).into(); 2];
                    }
                }
                w
            }
        };
        let mut slots = [[[0usize; 2]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                for c in 0..2 {
                    let u = targets[x][y][c];
                    slots[x][y][c] = match anchors.iter().position(|&(v, full)| full && v == u) {
                        Some(p) => p,
                        None => {
                            anchors.push((u, true));
                            anchors.len() - 1
                        }
                    };
                }
            }
        }
        Ok(Self {
            model: *model,
            sweep: GammaSweep::new(bath, &anchors)?,
            slots,
        })
    }

    fn at(&mut self, t: f64) -> Result<Superop> {
        self.sweep.advance(t)?;
        let gb = [self.sweep.at_anchor(0), self.sweep.at_anchor(1), self.sweep.at_anchor(2)];
        let bare = [[gb[bare_slot(0, 0)], gb[bare_slot(0, 1)]], [gb[bare_slot(1, 0)], gb[bare_slot(1, 1)]]];
        let w = shifted_frequencies(&self.model, &bare);
        let mut g = [[[ZERO; 2]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                for c in 0..2 {
                    // diagonal frequencies vanish identically
                    g[x][y][c] = if w[x][y][c] == ZERO {
                        gb[0]
                    } else {
                        self.sweep.eval(self.slots[x][y][c], w[x][y][c])?
                    };
                }
            }
        }
        Ok(assemble(&self.model, &g))
    }
}

/// Integrator used for a [`MapSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Classical RK4 with step `dt`, cross-checked by quadrature.
    Rk4,
    /// Exponential quadrature on Kronrod panels.
    Quadrature,
}

/// Uniform output grid `t_k = k · dt · stride`, `k = 0..=samples`.
///
/// For RK4, `dt` is the integration step; for quadrature it only fixes the
/// sample spacing together with `stride`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub stride: usize,
    pub samples: usize,
}

impl TimeGrid {
    /// Grid reaching at least `t_max` with sample spacing close to `spacing`.
    pub fn covering(t_max: f64, dt: f64, spacing: f64) -> Result<Self> {
        if !(t_max > 0.0 && dt > 0.0 && spacing >= dt && t_max.is_finite()) {
            return Err(Error::Domain(format!(
                "invalid grid: t_max={t_max}, dt={dt}, spacing={spacing}"
            )));
        }
        let stride = (spacing / dt).round().max(1.0) as usize;
        let samples = (t_max / (dt * stride as f64)).ceil() as usize;
        Ok(Self { dt, stride, samples })
    }

    pub fn spacing(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.samples).map(|k| k as f64 * self.spacing()).collect()
    }

    pub fn t_max(&self) -> f64 {
        self.samples as f64 * self.spacing()
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.stride > 0 && self.samples > 0) {
            return Err(Error::Domain(format!("invalid grid {self:?}")));
        }
        Ok(())
    }
}

/// Settings and diagnostics attached to a map series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub model: SbmModel,
    pub grid: TimeGrid,
    pub solver: Solver,
    pub rates: DaviesRates,
    /// `(t, max |C_rk4 - C_quad|)` at the cross-check times.
    pub cross_check: Vec<(f64, f64)>,
    /// Largest trace defect of `Φ` over the series.
    pub trace_defect: f64,
    /// Largest Hermiticity-covariance defect of `Φ` over the series.
    pub hermiticity_defect: f64,
    /// Present when the population channels are unregulated (finite β)
    /// beyond the reported time.
    pub warning: Option<String>,
}

/// Sampled correlator and map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSeries {
    pub times: Vec<f64>,
    pub c: Vec<Superop>,
    pub phi_map: Vec<Superop>,
    pub meta: MapMeta,
}

impl MapSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `Φ(t)` by linear interpolation per entry.
    pub fn map_at(&self, t: f64) -> Result<Superop> {
        interpolate(&self.times, &self.phi_map, t)
    }

    /// `C(t)` by linear interpolation per entry.
    pub fn correlator_at(&self, t: f64) -> Result<Superop> {
        interpolate(&self.times, &self.c, t)
    }

    /// `e^{L₀t}` for the series' model.
    pub fn davies_map(&self, t: f64) -> Superop {
        DaviesFlow::new(&self.meta.rates).at(t)
    }

    /// Largest `|max_ij C_ij(t)|` change between consecutive samples; a
    /// crude smoothness indicator used by diagnostics.
    pub fn max_entry(&self, k: usize) -> f64 {
        self.c[k].m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn interpolate(times: &[f64], values: &[Superop], t: f64) -> Result<Superop> {
    let n = times.len();
    if n == 0 || !(t >= times[0] && t <= times[n - 1]) {
        return Err(Error::Domain(format!("time {t} outside the series")));
    }
    let k = times.partition_point(|&x| x <= t);
    if k >= n {
        return Ok(values[n - 1]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    Ok(Superop {
        m: values[k - 1].m * Complex64::from(1.0 - w) + values[k].m * Complex64::from(w),
    })
}

/// Integrates the correlator and assembles `Φ(t)` on `grid`.
pub fn integrate_correlator(model: &SbmModel, grid: &TimeGrid, solver: Solver) -> Result<MapSeries> {
    grid.validate()?;
    let bath = model.bath()?;
    let rates = davies_rates(model)?;
    let flow = DaviesFlow::new(&rates);
    let times = grid.times();
    let c = match solver {
        Solver::Rk4 => {
            let limit = RK4_MAX_STEP / model.bath.omega_c;
            if grid.dt > limit * (1.0 + 1e-12) {
                return Err(Error::Domain(format!(
                    "RK4 step {} exceeds {limit} (0.05/ω_c)",
                    grid.dt
                )));
            }
            rk4_correlator(model, &bath, &flow, grid)?
        }
        Solver::Quadrature => quadrature_correlator(model, &bath, &flow, &times)?,
    };
    let cross_check = match solver {
        Solver::Rk4 => {
            let picks = cross_check_indices(times.len());
            let at: Vec<f64> = picks.iter().map(|&k| times[k]).collect();
            let reference = quadrature_correlator(model, &bath, &flow, &at)?;
            let mut out = Vec::with_capacity(picks.len());
            for (&k, r) in picks.iter().zip(&reference) {
                let diff = (c[k].m - r.m).iter().map(|z| z.norm()).fold(0.0, f64::max);
                if diff.is_nan() || diff > CROSS_CHECK_LIMIT {
                    return Err(Error::Consistency(format!(
                        "RK4 and quadrature correlators differ by {diff:.3e} at t = {}",
                        times[k]
                    )));
                }
                out.push((times[k], diff));
            }
            out
        }
        Solver::Quadrature => Vec::new(),
    };
    let phi_map: Vec<Superop> = times.iter().zip(&c).map(|(&t, c)| flow.at(t) + *c).collect();
    let trace_defect = phi_map.iter().map(Superop::map_trace_defect).fold(0.0, f64::max);
    let hermiticity_defect = phi_map
        .iter()
        .map(Superop::hermiticity_covariance_defect)
        .fold(0.0, f64::max);
    let occupation = model.bath.beta.occupation(model.delta);
    let warning = (occupation > 0.0 && rates.nu2 > 0.0).then(|| {
        // unregulated population channels: T₂ · (Δ/k_BT)
        let horizon = model.delta / (rates.nu2 * occupation.recip().ln_1p());
        format!("finite-temperature population channels are unregulated beyond t ≈ {horizon:.4e}")
    });
    Ok(MapSeries {
        times,
        c,
        phi_map,
        meta: MapMeta {
            model: *model,
            grid: *grid,
            solver,
            rates,
            cross_check,
            trace_defect,
            hermiticity_defect,
            warning,
        },
    })
}

/// Eight sample indices spread over the grid, excluding `t = 0`.
fn cross_check_indices(n: usize) -> Vec<usize> {
    let last = n - 1;
    let mut picks: Vec<usize> = (1..=CROSS_CHECK_SAMPLES)
        .map(|j| (j * last).div_ceil(CROSS_CHECK_SAMPLES).max(1))
        .collect();
    picks.dedup();
    picks
}

fn rk4_correlator(model: &SbmModel, bath: &Bath, flow: &DaviesFlow, grid: &TimeGrid) -> Result<Vec<Superop>> {
    let l0 = flow.generator();
    let mut gen = GeneratorSweep::new(model, bath)?;
    let h = grid.dt;
    let mut source = |t: f64| -> Result<Superop> { Ok((gen.at(t)? - l0) * flow.at(t)) };
    let mut out = Vec::with_capacity(grid.samples + 1);
    let mut c = Superop::zero();
    out.push(c);
    let mut g0 = source(0.0)?;
    let half = Complex64::from(0.5 * h);
    let full = Complex64::from(h);
    for step in 0..grid.samples * grid.stride {
        let t = step as f64 * h;
        let gm = source(t + 0.5 * h)?;
        let g1 = source(t + h)?;
        let k1 = l0 * c + g0;
        let k2 = l0 * Superop { m: c.m + k1.m * half } + gm;
        let k3 = l0 * Superop { m: c.m + k2.m * half } + gm;
        let k4 = l0 * Superop { m: c.m + k3.m * full } + g1;
        c.m += (k1.m + (k2.m + k3.m) * Complex64::from(2.0) + k4.m) * Complex64::from(h / 6.0);
        g0 = g1;
        if (step + 1) % grid.stride == 0 {
            out.push(c);
        }
    }
    Ok(out)
}

/// `C(t)` at increasing `times` by `C(t+H) = e^{L₀H}C(t) + ∫ e^{L₀(t+H-τ)}[L(τ)-L₀]e^{L₀τ} dτ`.
fn quadrature_correlator(model: &SbmModel, bath: &Bath, flow: &DaviesFlow, times: &[f64]) -> Result<Vec<Superop>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Domain("times must be non-negative and increasing".into()));
    }
    let l0 = flow.generator();
    let mut gen = GeneratorSweep::new(model, bath)?;
    let t_c = 1.0 / model.bath.omega_c;
    let h_min = 0.5 * t_c;
    let h_max = (1.0 / model.delta).min(4.0 * t_c).max(h_min);
    let mut out = Vec::with_capacity(times.len());
    let mut c = Superop::zero();
    let mut t = 0.0;
    for &target in times {
        while t < target {
            let width = (0.5 * t).clamp(h_min, h_max).min(target - t);
            let end = if target - (t + width) < 1e-3 * h_min { target } else { t + width };
            let mut acc = Superop::zero();
            for (x, w) in quad::kronrod_nodes(t, end) {
                let g = (gen.at(x)? - l0) * flow.at(x);
                acc.m += (flow.at(end - x) * g).m * Complex64::from(w);
            }
            c = flow.at(end - t) * c + acc;
            t = end;
        }
        out.push(c);
    }
    Ok(out)
}

/// Correlator at arbitrary increasing times by exponential quadrature.
pub fn correlator_quadrature(model: &SbmModel, times: &[f64]) -> Result<Vec<Superop>> {
    let bath = model.bath()?;
    let flow = DaviesFlow::new(&davies_rates(model)?);
    quadrature_correlator(model, &bath, &flow, times)
}

/// Predicted `Q C(t) Q` block in `(ρ21, ρ12)` order.
pub fn qcq_asymptote(model: &SbmModel, t: f64) -> Result<Matrix2<Complex64>> {
    let r = davies_rates(model)?;
    if !(t * r.nu2 >= 5.0) {
        return Err(Error::Domain(format!(
            "asymptotic block requires t·ν₂ ≥ 5, got {:.3}",
            t * r.nu2
        )));
    }
    let bath = model.bath()?;
    let k = r.nu2 + r.j_zero * model.xi * model.xi;
    let pop = 2.0 * r.nu2 * model.bath.beta.occupation(model.delta);
    let sigma = bath.sigma_kernel(Complex64::new(-r.delta_tilde, k), t, pop)?;
    let z = bath.z_kernel(r.delta_tilde, k, t, pop)?;
    Ok(Matrix2::new(-sigma.conj(), z, z.conj(), -sigma) * Complex64::from(0.25))
}

/// `∂S/∂ω` at `ω = -Δ` from the exact frequency moment (zero temperature).
pub fn absorption_slope(model: &SbmModel) -> Result<f64> {
    let bath = model.bath()?;
    Ok(bath.gamma_derivative((-model.delta).into(), f64::INFINITY, 1)?.im)
}

/// Late-time population block `P C P`: the map adds `-∂S/∂ω /4` of
/// excited population (at `ω = -Δ`) whatever the input.
pub fn pcp_asymptote(model: &SbmModel) -> Result<Superop> {
    let w = -0.25 * absorption_slope(model)?;
    let mut out = Superop::zero();
    for col in [0, 3] {
        out.m[(0, col)] = w.into();
        out.m[(3, col)] = (-w).into();
    }
    Ok(out)
}

/// `(ξ/2)(S(0) - S(-Δ))/Δ`.
pub fn bias_coherence(model: &SbmModel) -> Result<f64> {
    let bath = model.bath()?;
    Ok(0.5 * model.xi * (bath.lamb_shift(0.0)? - bath.lamb_shift(-model.delta)?) / model.delta)
}

/// Late-time bias block `Q C P`.
pub fn qcp_asymptote(model: &SbmModel) -> Result<Superop> {
    let w = Complex64::from(bias_coherence(model)?);
    let mut out = Superop::zero();
    for row in [1, 2] {
        for col in [0, 3] {
            out.m[(row, col)] = w;
        }
    }
    Ok(out)
}

/// Zero-temperature mean-force state to second order.
pub fn mean_force_state(model: &SbmModel) -> Result<QubitState> {
    let p = -0.25 * absorption_slope(model)?;
    let c = Complex64::from(bias_coherence(model)?);
    Ok(QubitState::unchecked(Matrix2::new(p.into(), c, c, (1.0 - p).into())))
}

/// Evolved state with its Hermiticity defect before symmetrization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evolved {
    pub state: QubitState,
    pub hermiticity_defect: f64,
}

/// `Φ(t)ρ₀` with `Φ` linearly interpolated, then Hermitized.
pub fn evolve(series: &MapSeries, rho0: &QubitState, t: f64) -> Result<Evolved> {
    apply_map(&series.map_at(t)?, rho0, t)
}

/// `map·ρ₀` with the same trace check and Hermitization as [`evolve`];
/// `t` only labels the error.
pub fn apply_map(map: &Superop, rho0: &QubitState, t: f64) -> Result<Evolved> {
    let raw = devectorize(&map.apply(&vectorize(rho0)));
    let dev = (raw.trace() - rho0.trace()).norm();
    if dev.is_nan() || dev > TRACE_LIMIT {
        return Err(Error::Consistency(format!("trace deviates by {dev:.3e} at t = {t}")));
    }
    Ok(Evolved {
        state: raw.hermitized(),
        hermiticity_defect: raw.hermiticity_defect(),
    })
}

/// Locked `⟨σx⟩` predicted by the one-dimensional projection,
/// `prefactor · t^{-(s+1)} cos[φ - (s+1)π/2]`.
pub fn projection_predictor(model: &SbmModel, phi: f64, t: f64, prefactor: f64) -> f64 {
    let p = model.bath.s + 1.0;
    prefactor * t.powf(-p) * (phi - p * FRAC_PI_2).cos()
}

/// Least-squares prefactor for [`projection_predictor`] from `(φ, t, ⟨σx⟩)` samples.
pub fn fit_projection_prefactor(model: &SbmModel, samples: &[(f64, f64, f64)]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(phi, t, sx) in samples {
        let b = projection_predictor(model, phi, t, 1.0);
        num += b * sx;
        den += b * b;
    }
    if !(den > 0.0) {
        return Err(Error::Fit("projection basis vanishes on every sample".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ohmic() -> SbmModel {
        SbmModel::new(1.0, 0.0, BathSpec::zero_temperature(0.025, 1.0, 4.0)).unwrap()
    }

    #[test]
    fn flow_matches_matrix_exponential() {
        let m = SbmModel { xi: 0.05, ..ohmic() };
        let flow = DaviesFlow::new(&davies_rates(&m).unwrap());
        let g = flow.generator();
        for t in [0.0, 0.3, 7.0, 120.0] {
            let diff = (flow.at(t).m - g.expm(t).m).norm();
            assert!(diff < 1e-12, "t={t}: {diff}");
        }
    }

    #[test]
    fn sweep_generator_matches_direct() {
        let m = SbmModel { xi: 0.1, ..ohmic() };
        let bath = m.bath().unwrap();
        let mut gen = GeneratorSweep::new(&m, &bath).unwrap();
        for t in [0.05, 0.4, 3.0, 40.0] {
            let a = gen.at(t).unwrap();
            let b = resummed_generator(&m, t).unwrap();
            let diff = (a.m - b.m).norm() / b.m.norm();
            assert!(diff < 1e-9, "t={t}: {diff}");
        }
    }

    #[test]
    fn cross_check_picks() {
        assert_eq!(cross_check_indices(17), vec![2, 4, 6, 8, 10, 12, 14, 16]);
        assert_eq!(cross_check_indices(3), vec![1, 2]);
    }
}
