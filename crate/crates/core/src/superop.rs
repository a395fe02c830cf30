//! Qubit density matrices, their 4-vector form and 4×4 superoperators.
//!
//! Vectorization order is `(ρ11, ρ21, ρ12, ρ22)`, i.e. column stacking:
//! element `(n, m)` (zero-based) lives at index `n + 2m`.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Index of `ρ_{nm}` (zero-based) in the vectorized state.
pub const fn vec_index(n: usize, m: usize) -> usize {
    n + 2 * m
}

/// 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub rho: Matrix2<Complex64>,
}

impl QubitState {
    /// Validates Hermiticity (1e-12), unit trace (1e-12) and positivity (-1e-10).
    pub fn new(rho: Matrix2<Complex64>) -> Result<Self> {
        let state = Self { rho };
        let herm = (rho - rho.adjoint()).norm();
        if herm > 1e-12 {
            return Err(Error::Domain(format!("density matrix not Hermitian (defect {herm:.3e})")));
        }
        let tr = rho.trace();
        if (tr - ONE).norm() > 1e-12 {
            return Err(Error::Domain(format!("density matrix trace {tr} != 1")));
        }
        let lo = state.min_eigenvalue();
        if lo < -1e-10 {
            return Err(Error::Domain(format!("density matrix has eigenvalue {lo:.3e} < 0")));
        }
        Ok(state)
    }

    /// Wraps a matrix without validation (reconstructed maps may be slightly off).
    pub fn unchecked(rho: Matrix2<Complex64>) -> Self {
        Self { rho }
    }

    /// `½(1 + x σx + y σy + z σz)`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let rho = Matrix2::new(
            Complex64::new(0.5 * (1.0 + z), 0.0),
            Complex64::new(0.5 * x, -0.5 * y),
            Complex64::new(0.5 * x, 0.5 * y),
            Complex64::new(0.5 * (1.0 - z), 0.0),
        );
        Self::new(rho)
    }

    /// Transverse superposition with azimuth `phi`: `ρ21 = e^{iφ}/2`.
    pub fn equator(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::from_bloch(c, s, 0.0).expect("equatorial state is valid")
    }

    pub fn excited() -> Self {
        Self::from_bloch(0.0, 0.0, 1.0).expect("valid")
    }

    pub fn ground() -> Self {
        Self::from_bloch(0.0, 0.0, -1.0).expect("valid")
    }

    pub fn maximally_mixed() -> Self {
        Self::from_bloch(0.0, 0.0, 0.0).expect("valid")
    }

    /// `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
    pub fn bloch(&self) -> [f64; 3] {
        let r = &self.rho;
        [
            (r[(0, 1)] + r[(1, 0)]).re,
            (I * (r[(0, 1)] - r[(1, 0)])).re,
            (r[(0, 0)] - r[(1, 1)]).re,
        ]
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Frobenius norm of `ρ - ρ†`.
    pub fn hermiticity_defect(&self) -> f64 {
        (self.rho - self.rho.adjoint()).norm()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        let a = h[(0, 0)].re;
        let d = h[(1, 1)].re;
        let b = h[(0, 1)].norm();
        0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt()
    }

    /// Average with the adjoint.
    pub fn hermitized(&self) -> Self {
        Self {
            rho: (self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0),
        }
    }
}

/// Column-stacked density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VecState {
    pub v: Vector4<Complex64>,
}

pub fn vectorize(state: &QubitState) -> VecState {
    let r = &state.rho;
    VecState {
        v: Vector4::new(r[(0, 0)], r[(1, 0)], r[(0, 1)], r[(1, 1)]),
    }
}

pub fn devectorize(v: &VecState) -> QubitState {
    QubitState {
        rho: Matrix2::new(v.v[0], v.v[2], v.v[1], v.v[3]),
    }
}

/// Linear map on vectorized qubit states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Superop {
    pub m: Matrix4<Complex64>,
}

impl Superop {
    pub fn new(m: Matrix4<Complex64>) -> Self {
        Self { m }
    }

    pub fn zero() -> Self {
        Self { m: Matrix4::zeros() }
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix4::identity(),
        }
    }

    pub fn diagonal(d: [Complex64; 4]) -> Self {
        Self {
            m: Matrix4::from_diagonal(&Vector4::from(d)),
        }
    }

    /// `X ↦ A X B` on 2×2 matrices.
    pub fn sandwich(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> Self {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        Self { m: b.transpose().kronecker(a).fixed_view::<4, 4>(0, 0).into() }
    }

    /// `-i[H, ·]`.
    pub fn hamiltonian(h: &Matrix2<Complex64>) -> Self {
        let id = Matrix2::identity();
        let left = Self::sandwich(h, &id).m;
        let right = Self::sandwich(&id, h).m;
        Self {
            m: (left - right) * -I,
        }
    }

    pub fn apply(&self, v: &VecState) -> VecState {
        VecState { v: self.m * v.v }
    }

    pub fn apply_state(&self, rho: &QubitState) -> QubitState {
        devectorize(&self.apply(&vectorize(rho)))
    }

    pub fn compose(&self, other: &Superop) -> Superop {
        Superop { m: self.m * other.m }
    }

    pub fn commutator(&self, other: &Superop) -> Superop {
        Superop {
            m: self.m * other.m - other.m * self.m,
        }
    }

    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    /// Largest `|(row0 + row3)_j|` of a generator; zero for trace preservation.
    pub fn generator_trace_defect(&self) -> f64 {
        (0..4)
            .map(|j| (self.m[(0, j)] + self.m[(3, j)]).norm())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `row0 + row3` from `(1, 0, 0, 1)` for a map.
    pub fn map_trace_defect(&self) -> f64 {
        let target = [ONE, ZERO, ZERO, ONE];
        (0..4)
            .map(|j| (self.m[(0, j)] + self.m[(3, j)] - target[j]).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|m[σi][σj] - conj(m[i][j])|` with `σ` swapping indices 1 and 2.
    ///
    /// Zero iff the map sends Hermitian matrices to Hermitian matrices.
    pub fn hermiticity_covariance_defect(&self) -> f64 {
        let sigma = [0usize, 2, 1, 3];
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.m[(sigma[i], sigma[j])] - self.m[(i, j)].conj()).norm());
            }
        }
        worst
    }

    /// True if all couplings between populations and coherences, and between
    /// the two coherences, vanish.
    fn is_phase_covariant_block(&self) -> bool {
        let coupled = [
            (0, 1), (0, 2), (3, 1), (3, 2), (1, 0), (2, 0), (1, 3), (2, 3), (1, 2), (2, 1),
        ];
        coupled.iter().all(|&(i, j)| self.m[(i, j)] == ZERO)
    }

    /// `exp(t G)`.
    ///
    /// Phase-covariant generators (population block decoupled from diagonal
    /// coherences) use the exact block closed form; anything else goes through
    /// scaling and squaring with a degree-18 Taylor polynomial.
    pub fn expm(&self, t: f64) -> Superop {
        if self.is_phase_covariant_block() {
            let p = Matrix2::new(self.m[(0, 0)], self.m[(0, 3)], self.m[(3, 0)], self.m[(3, 3)]);
            let e = expm2(&(p * Complex64::new(t, 0.0)));
            let mut m = Matrix4::zeros();
            m[(0, 0)] = e[(0, 0)];
            m[(0, 3)] = e[(0, 1)];
            m[(3, 0)] = e[(1, 0)];
            m[(3, 3)] = e[(1, 1)];
            m[(1, 1)] = (self.m[(1, 1)] * t).exp();
            m[(2, 2)] = (self.m[(2, 2)] * t).exp();
            return Superop { m };
        }
        Superop {
            m: expm_taylor(&(self.m * Complex64::new(t, 0.0))),
        }
    }

    pub fn scale(&self, c: Complex64) -> Superop {
        Superop { m: self.m * c }
    }
}

impl std::ops::Add for Superop {
    type Output = Superop;
    fn add(self, rhs: Superop) -> Superop {
        Superop { m: self.m + rhs.m }
    }
}

impl std::ops::Sub for Superop {
    type Output = Superop;
    fn sub(self, rhs: Superop) -> Superop {
        Superop { m: self.m - rhs.m }
    }
}

impl std::ops::Mul for Superop {
    type Output = Superop;
    fn mul(self, rhs: Superop) -> Superop {
        Superop { m: self.m * rhs.m }
    }
}

/// Exact exponential of a 2×2 complex matrix.
pub fn expm2(a: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let mu = (a[(0, 0)] + a[(1, 1)]) * 0.5;
    let half = (a[(0, 0)] - a[(1, 1)]) * 0.5;
    let delta = (half * half + a[(0, 1)] * a[(1, 0)]).sqrt();
    // cosh(δ) and sinh(δ)/δ, with a series near δ = 0
    let (ch, sh) = if delta.norm() < 1e-4 {
        let d2 = delta * delta;
        (ONE + d2 / 2.0 + d2 * d2 / 24.0, ONE + d2 / 6.0 + d2 * d2 / 120.0)
    } else {
        (delta.cosh(), delta.sinh() / delta)
    };
    let shifted = a - Matrix2::from_diagonal_element(mu);
    (Matrix2::from_diagonal_element(ch) + shifted * sh) * mu.exp()
}

/// Scaling and squaring with a truncated Taylor series.
pub fn expm_taylor(a: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let norm = (0..4)
        .map(|j| (0..4).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = a * Complex64::new(0.5f64.powi(squarings), 0.0);
    let mut term = Matrix4::<Complex64>::identity();
    let mut sum = term;
    for k in 1..=18 {
        term = term * b / Complex64::new(k as f64, 0.0);
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Population and coherence projectors `(P, Q)` with `Q = diag(0, 1, 1, 0)`.
pub fn sector_projectors() -> (Superop, Superop) {
    let q = Superop::diagonal([ZERO, ONE, ONE, ZERO]);
    let p = Superop::identity() - q;
    (p, q)
}

/// Choi matrix `Λ = Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` (trace 2 for trace-preserving maps).
///
/// Row index `2i + a`, column index `2j + b`, with
/// `Λ[(i,a),(j,b)] = Φ(|i⟩⟨j|)[a,b] = m[vec(a,b), vec(i,j)]`.
pub fn choi(map: &Superop) -> Matrix4<Complex64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    out[(2 * i + a, 2 * j + b)] = map.m[(vec_index(a, b), vec_index(i, j))];
                }
            }
        }
    }
    out
}

/// Spectrum summary of a Choi matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiSummary {
    /// Sum of the negative eigenvalues of the Hermitian part (≤ 0).
    pub negativity: f64,
    /// Frobenius norm of `Λ - Λ†`.
    pub hermiticity_defect: f64,
    /// `true` if the defect exceeds 1e-8.
    pub non_hermitian_warning: bool,
}

pub fn choi_summary(map: &Superop) -> ChoiSummary {
    let c = choi(map);
    let defect = (c - c.adjoint()).norm();
    let herm = (c + c.adjoint()) * Complex64::new(0.5, 0.0);
    let negativity = herm
        .symmetric_eigenvalues()
        .iter()
        .filter(|&&x| x < 0.0)
        .sum();
    ChoiSummary {
        negativity,
        hermiticity_defect: defect,
        non_hermitian_warning: defect > 1e-8,
    }
}

pub fn choi_negativity(map: &Superop) -> f64 {
    choi_summary(map).negativity
}

/// Eigenvalues of the Hermitian part of the Choi matrix, ascending.
pub fn choi_spectrum(map: &Superop) -> [f64; 4] {
    let c = choi(map);
    let herm = (c + c.adjoint()) * Complex64::new(0.5, 0.0);
    let ev = herm.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorization_order() {
        let v = vectorize(&QubitState::maximally_mixed());
        assert_eq!(v.v, Vector4::new(0.5.into(), ZERO, ZERO, 0.5.into()));
        let plus = QubitState::from_bloch(1.0, 0.0, 0.0).unwrap();
        assert_eq!(vectorize(&plus).v, Vector4::new(0.5.into(), 0.5.into(), 0.5.into(), 0.5.into()));
        let phi = 0.7;
        let v = vectorize(&QubitState::equator(phi));
        assert!((v.v[1] - Complex64::from_polar(0.5, phi)).norm() < 1e-15);
        assert_eq!(vec_index(1, 0), 1);
    }

    #[test]
    fn sandwich_matches_direct_product() {
        let a = Matrix2::new(ONE, I, 2.0 * ONE, -ONE);
        let b = Matrix2::new(I, ZERO, ONE, 3.0 * ONE);
        let x = Matrix2::new(ONE, 2.0 * I, -I, 0.5 * ONE);
        let got = devectorize(&Superop::sandwich(&a, &b).apply(&vectorize(&QubitState::unchecked(x))));
        assert!((got.rho - a * x * b).norm() < 1e-14);
    }

    #[test]
    fn projector_algebra() {
        let (p, q) = sector_projectors();
        assert_eq!((p + q).m, Matrix4::identity());
        assert_eq!((p * q).m, Matrix4::zeros());
        assert_eq!((q * q).m, q.m);
        assert_eq!(q.apply(&vectorize(&QubitState::maximally_mixed())).v, Vector4::zeros());
    }

    #[test]
    fn expm2_matches_taylor() {
        let a = Matrix2::new(Complex64::new(-0.3, 0.2), Complex64::new(0.1, 0.0), Complex64::new(0.4, -1.0), Complex64::new(0.5, 0.0));
        let mut big = Matrix4::zeros();
        big.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        let t = expm_taylor(&big);
        let e = expm2(&a);
        assert!((t.fixed_view::<2, 2>(0, 0) - e).norm() < 1e-13);
        // degenerate (nilpotent) case
        let n = Matrix2::new(ZERO, ONE, ZERO, ZERO);
        assert!((expm2(&n) - Matrix2::new(ONE, ONE, ZERO, ONE)).norm() < 1e-15);
    }

    #[test]
    fn identity_choi() {
        let s = choi_spectrum(&Superop::identity());
        assert!((s[3] - 2.0).abs() < 1e-14);
        assert!(s[..3].iter().all(|x| x.abs() < 1e-14));
        assert!(choi_negativity(&Superop::identity()).abs() < 1e-14);
        assert!((choi(&Superop::identity()).trace() - 2.0).norm() < 1e-15);
    }

    #[test]
    fn transpose_map_is_not_cp() {
        // Transposition swaps ρ12 and ρ21.
        let mut m = Matrix4::zeros();
        m[(0, 0)] = ONE;
        m[(3, 3)] = ONE;
        m[(1, 2)] = ONE;
        m[(2, 1)] = ONE;
        let neg = choi_negativity(&Superop::new(m));
        assert!((neg + 1.0).abs() < 1e-14);
    }
}
