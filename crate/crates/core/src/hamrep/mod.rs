//! θ-Fourier-truncated quadratic Hamiltonians in modes 1..J.
//!
//! A [`QuadHam`] stores, per Fourier index k, the coefficient matrices of
//! Σ S20_ij z_i z_j + Σ H11_ij z_i z̄_j + Σ S02_ij z̄_i z̄_j. Mode j is stored at
//! matrix index j−1. The stacked Hessian in the ordering (z, z̄) is
//! [[2·S20, H11], [H11ᵀ, 2·S02]].

mod io;
mod quadham;
mod tl;

pub use io::{read_quadham, write_atomic, write_norm_csv, write_quadham, NormRow};
pub use quadham::{phase, poisson_bracket, series_diff_norm, BlockKind, Blocks, QuadHam, ToeplitzLimits, Weights};
pub use tl::{
    default_boundary, hessian_matrix, matmul, tl_matnorm, tl_matnorm_with, tl_seminorm, tl_seminorm_with, TLMatrix,
    TLReport,
};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Multi-index k ∈ Zⁿ.
pub type Mode = Vec<i32>;

/// Scalar θ-Fourier series.
pub type Series = BTreeMap<Mode, C64>;

pub fn l1(k: &[i32]) -> usize {
    k.iter().map(|x| x.unsigned_abs() as usize).sum()
}

pub fn add_modes(a: &[i32], b: &[i32]) -> Mode {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn neg_mode(a: &[i32]) -> Mode {
    a.iter().map(|x| -x).collect()
}

/// All k ∈ Zⁿ with |k|₁ ≤ cap, in lexicographic order.
pub fn modes_upto(n: usize, cap: usize) -> Vec<Mode> {
    let mut out = Vec::new();
    let mut cur = vec![0i32; n];
    fn rec(d: usize, left: i32, cur: &mut Vec<i32>, out: &mut Vec<Mode>) {
        if d == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in -left..=left {
            cur[d] = v;
            rec(d + 1, left - v.abs(), cur, out);
        }
        cur[d] = 0;
    }
    rec(0, cap as i32, &mut cur, &mut out);
    out
}

/// Σ_k |f̂(k)| e^{|k|₁ r}.
pub fn coeff_fourier_norm(series: &Series, r: f64) -> f64 {
    series.iter().map(|(k, c)| c.norm() * (l1(k) as f64 * r).exp()).sum()
}

/// Mode weight w_j = e^{a j} j^p for mode number j ≥ 1.
pub fn mode_weight(a: f64, p: f64, j: usize) -> f64 {
    (a * j as f64).exp() * (j as f64).powf(p)
}

/// Remainder check of a Fourier truncation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncationReport {
    /// ‖P − T_K P‖ on the strip r − 2σ.
    pub remainder_norm: f64,
    /// 32σ⁻²e^{−Kσ}‖P‖_r.
    pub bound: f64,
    pub holds: bool,
}

/// Splits P into T_K P (|k|₁ ≤ K) and the remainder, and checks the remainder
/// against 32σ⁻²e^{−Kσ}‖P‖.
pub fn truncate_fourier(p: &QuadHam, kk: usize, sigma: f64) -> Result<(QuadHam, QuadHam, TruncationReport)> {
    if kk == 0 {
        return Err(Error::Domain("truncation order K must be positive".into()));
    }
    if !(sigma > 0.0 && 2.0 * sigma < p.w.r) {
        return Err(Error::Domain(format!("truncation needs 0 < 2σ < r, got σ={sigma}, r={}", p.w.r)));
    }
    let (low, high) = p.split(kk);
    let remainder_norm = high.vf_norm_at(p.w.r - 2.0 * sigma);
    let bound = 32.0 / (sigma * sigma) * (-(kk as f64) * sigma).exp() * p.vf_norm();
    Ok((low, high, TruncationReport { remainder_norm, bound, holds: remainder_norm <= bound }))
}
