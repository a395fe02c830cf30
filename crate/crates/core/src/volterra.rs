//! Convolution-type Volterra equations on a uniform grid.
//!
//! Solves `y(t) = g(t) + c ∫₀ᵗ K(t-τ) y(τ) dτ` with fourth-order Gregory
//! end corrections (Simpson-type rules for the first few steps). The history
//! sum is built with divide-and-conquer FFT convolution, `O(N log² N)`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Blocks below this size use the direct quadratic history sum.
const BASE: usize = 64;

/// Quadrature weight of node `j` for the integral over `[0, nh]`.
pub fn weight(n: usize, j: usize) -> f64 {
    debug_assert!(j <= n);
    match n {
        0 => 0.0,
        1 => 0.5,
        2 => [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0][j],
        3 => [3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0][j],
        4 => [1.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0][j],
        _ => {
            const END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
            if j < 3 {
                END[j]
            } else if n - j < 3 {
                END[n - j]
            } else {
                1.0
            }
        }
    }
}

/// Nodes whose weight differs from one (all of them for `n ≤ 4`).
fn special_nodes(n: usize) -> impl Iterator<Item = usize> {
    let small = n <= 4;
    (0..=n).filter(move |&j| small || j < 3 || n - j < 3)
}

struct Convolver {
    planner: FftPlanner<f64>,
}

impl Convolver {
    fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }

    fn plans(&mut self, len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        (
            self.planner.plan_fft_forward(len),
            self.planner.plan_fft_inverse(len),
        )
    }

    /// Full linear convolution truncated to `out_len` terms.
    fn convolve(&mut self, a: &[Complex64], b: &[Complex64], out_len: usize) -> Vec<Complex64> {
        let len = (a.len() + b.len() - 1).next_power_of_two();
        let (fwd, inv) = self.plans(len);
        let mut fa = vec![ZERO; len];
        let mut fb = vec![ZERO; len];
        fa[..a.len()].copy_from_slice(a);
        fb[..b.len()].copy_from_slice(b);
        fwd.process(&mut fa);
        fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= y;
        }
        inv.process(&mut fa);
        let scale = 1.0 / len as f64;
        fa.truncate(out_len);
        fa.iter().map(|x| x * scale).collect()
    }
}

/// Solves `y_n = g_n + c h Σ_j w_j^{(n)} K_{n-j} y_j` for `n = 0..len`.
///
/// `kernel` must hold at least `forcing.len()` samples `K(0), K(h), …`.
/// The diagonal term `w_n K_0 y_n` is treated implicitly.
pub fn solve_second_kind(
    forcing: &[Complex64],
    kernel: &[Complex64],
    h: f64,
    coeff: Complex64,
) -> Vec<Complex64> {
    let n = forcing.len();
    assert!(kernel.len() >= n, "kernel shorter than forcing");
    let mut y = vec![ZERO; n];
    let mut history = vec![ZERO; n];
    let mut conv = Convolver::new();
    let ctx = Ctx {
        forcing,
        kernel,
        scale: coeff * h,
    };
    ctx.solve(&mut conv, &mut y, &mut history, 0, n);
    y
}

struct Ctx<'a> {
    forcing: &'a [Complex64],
    kernel: &'a [Complex64],
    scale: Complex64,
}

impl Ctx<'_> {
    fn solve(
        &self,
        conv: &mut Convolver,
        y: &mut [Complex64],
        history: &mut [Complex64],
        lo: usize,
        hi: usize,
    ) {
        if hi - lo <= BASE {
            for n in lo..hi {
                for j in lo..n {
                    history[n] += self.kernel[n - j] * y[j];
                }
                y[n] = self.close(n, history[n], y);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        self.solve(conv, y, history, lo, mid);
        let part = conv.convolve(&y[lo..mid], &self.kernel[..hi - lo], hi - lo);
        for n in mid..hi {
            history[n] += part[n - lo];
        }
        self.solve(conv, y, history, mid, hi);
    }

    /// `history` is the unit-weight sum over `j < n`.
    fn close(&self, n: usize, history: Complex64, y: &[Complex64]) -> Complex64 {
        let mut sum = history;
        for j in special_nodes(n).filter(|&j| j < n) {
            sum += (weight(n, j) - 1.0) * self.kernel[n - j] * y[j];
        }
        let diag = self.scale * weight(n, n) * self.kernel[0];
        (self.forcing[n] + self.scale * sum) / (Complex64::new(1.0, 0.0) - diag)
    }
}

/// `h Σ_j w_j^{(n)} K_{n-j} y_j` for every `n` (the same rule as the solver).
pub fn convolve(kernel: &[Complex64], y: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = y.len();
    assert!(kernel.len() >= n, "kernel shorter than samples");
    if n == 0 {
        return Vec::new();
    }
    let plain = Convolver::new().convolve(y, &kernel[..n], n);
    (0..n)
        .map(|m| {
            let mut acc = plain[m];
            for j in special_nodes(m) {
                acc += (weight(m, j) - 1.0) * kernel[m - j] * y[j];
            }
            acc * h
        })
        .collect()
}
