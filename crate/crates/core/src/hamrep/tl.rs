//! Töplitz–Lipschitz semi-norms on finite truncations.
//!
//! M1 is the smallest constant of the off-diagonal decay condition. M3 is the
//! Lipschitz-at-infinity constant along each diagonal of the 11-type blocks,
//! measured against a reference: the model-supplied limit when present, else
//! the deepest entry of that diagonal outside the bottom boundary layer of
//! width ⌈J/4⌉ (truncation corrupts the last rows of products).

use std::collections::BTreeMap;

use serde::Serialize;

use super::quadham::QuadHam;
use super::{add_modes, l1, Mode, Series};
use crate::error::{Error, Result};
use crate::linalg::{czero, j_times, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TLReport {
    pub m1: f64,
    pub m3: f64,
    pub combined: f64,
}

struct Block<'a> {
    mats: Vec<(&'a Mode, CMat)>,
    limits: Option<&'a BTreeMap<i64, Series>>,
}

pub fn default_boundary(j: usize) -> usize {
    j.div_ceil(4)
}

fn entry_norm(b: &Block, i: usize, j: usize, r: f64) -> f64 {
    b.mats.iter().map(|(k, m)| m[(i, j)].norm() * (l1(k) as f64 * r).exp()).sum()
}

fn diff_to_entry(b: &Block, i: usize, j: usize, i2: usize, j2: usize, r: f64) -> f64 {
    b.mats.iter().map(|(k, m)| (m[(i, j)] - m[(i2, j2)]).norm() * (l1(k) as f64 * r).exp()).sum()
}

fn diff_to_series(b: &Block, i: usize, j: usize, s: Option<&Series>, r: f64) -> f64 {
    let empty = Series::new();
    let s = s.unwrap_or(&empty);
    let mut total = 0.0;
    for (k, m) in &b.mats {
        let lim = s.get(*k).copied().unwrap_or(C64::new(0.0, 0.0));
        total += (m[(i, j)] - lim).norm() * (l1(k) as f64 * r).exp();
    }
    for (k, v) in s {
        if !b.mats.iter().any(|(kk, _)| *kk == k) {
            total += v.norm() * (l1(k) as f64 * r).exp();
        }
    }
    total
}

fn tl_core(jn: usize, r: f64, rho: f64, boundary: usize, b11: &[Block], b20: &[Block]) -> TLReport {
    let mut m1: f64 = 0.0;
    let mut m3: f64 = 0.0;
    for b in b11 {
        for i in 0..jn {
            for j in 0..jn {
                let d = i.abs_diff(j) as f64;
                m1 = m1.max(entry_norm(b, i, j, r) * (rho * d).exp());
            }
        }
        for d in -(jn as i64 - 1)..=(jn as i64 - 1) {
            let start = if d >= 0 { (d as usize, 0) } else { (0, (-d) as usize) };
            let len = jn - d.unsigned_abs() as usize;
            let wd = (rho * d.abs() as f64).exp();
            match b.limits {
                Some(lims) => {
                    for t in 1..len {
                        let (i, j) = (start.0 + t, start.1 + t);
                        m3 = m3.max(diff_to_series(b, i, j, lims.get(&d), r) * t as f64 * wd);
                    }
                }
                None => {
                    // trusted: max(i, j) < J − boundary
                    let trusted = (0..len).rfind(|&t| start.0.max(start.1) + t + boundary < jn);
                    let Some(tr) = trusted else { continue };
                    let (ri, rj) = (start.0 + tr, start.1 + tr);
                    for t in 1..tr {
                        let (i, j) = (start.0 + t, start.1 + t);
                        m3 = m3.max(diff_to_entry(b, i, j, ri, rj, r) * t as f64 * wd);
                    }
                }
            }
        }
    }
    for b in b20 {
        for i in 0..jn {
            for j in 0..jn {
                let s = (i + j + 2) as f64;
                m1 = m1.max(entry_norm(b, i, j, r) * (rho * s).exp());
            }
        }
    }
    TLReport { m1, m3, combined: m1.max(m3) }
}

/// ⟨P⟩_ρ on the truncation, using second derivatives of P.
pub fn tl_seminorm(p: &QuadHam, rho: f64) -> TLReport {
    tl_seminorm_with(p, rho, default_boundary(p.j))
}

pub fn tl_seminorm_with(p: &QuadHam, rho: f64, boundary: usize) -> TLReport {
    let two = C64::new(2.0, 0.0);
    let h11 = Block {
        mats: p.coeffs.iter().map(|(k, b)| (k, b.h11.clone())).collect(),
        limits: p.limits.as_ref().map(|l| &l.h11),
    };
    let s20 = Block { mats: p.coeffs.iter().map(|(k, b)| (k, &b.s20 * two)).collect(), limits: None };
    let s02 = Block { mats: p.coeffs.iter().map(|(k, b)| (k, &b.s02 * two)).collect(), limits: None };
    tl_core(p.j, p.w.r, rho, boundary, &[h11], &[s20, s02])
}

/// 2J×2J block matrix with θ-Fourier entries, stored stacked per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TLMatrix {
    pub n: usize,
    pub j: usize,
    pub k_cap: usize,
    pub r: f64,
    pub coeffs: BTreeMap<Mode, CMat>,
    pub limits11: Option<BTreeMap<i64, Series>>,
    pub limits22: Option<BTreeMap<i64, Series>>,
}

impl TLMatrix {
    pub fn zeros(n: usize, j: usize, k_cap: usize, r: f64) -> Self {
        TLMatrix { n, j, k_cap, r, coeffs: BTreeMap::new(), limits11: None, limits22: None }
    }

    pub fn identity(n: usize, j: usize, k_cap: usize, r: f64) -> Self {
        let mut m = Self::zeros(n, j, k_cap, r);
        m.coeffs.insert(vec![0; n], CMat::identity(2 * j, 2 * j));
        m
    }

    pub fn block(&self, k: &[i32], bi: usize, bj: usize) -> Option<CMat> {
        let j = self.j;
        self.coeffs.get(k).map(|m| m.view((bi * j, bj * j), (j, j)).into_owned())
    }

    fn blocks_of(&self, bi: usize, bj: usize) -> Vec<(&Mode, CMat)> {
        let j = self.j;
        self.coeffs.iter().map(|(k, m)| (k, m.view((bi * j, bj * j), (j, j)).into_owned())).collect()
    }

    pub fn sub(&self, o: &TLMatrix) -> TLMatrix {
        let mut out = self.clone();
        for (k, m) in &o.coeffs {
            let e = out.coeffs.entry(k.clone()).or_insert_with(|| czero(2 * self.j, 2 * self.j));
            *e -= m;
        }
        out.limits11 = None;
        out.limits22 = None;
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(crate::linalg::max_abs).fold(0.0, f64::max)
    }
}

/// A = 𝕁·∂²_Z F, blocks [[F_z̄z, F_z̄z̄], [−F_zz, −F_zz̄]].
pub fn hessian_matrix(f: &QuadHam) -> TLMatrix {
    let mut a = TLMatrix::zeros(f.n, f.j, f.k_cap, f.w.r);
    for (k, b) in &f.coeffs {
        a.coeffs.insert(k.clone(), j_times(&QuadHam::stacked(b)));
    }
    if let Some(l) = &f.limits {
        a.limits11 = Some(l.h11.iter().map(|(d, s)| (-d, s.clone())).collect());
        a.limits22 = Some(
            l.h11
                .iter()
                .map(|(d, s)| (*d, s.iter().map(|(k, v)| (k.clone(), -v)).collect()))
                .collect(),
        );
    }
    a
}

pub fn tl_matnorm(a: &TLMatrix, rho: f64) -> TLReport {
    tl_matnorm_with(a, rho, default_boundary(a.j))
}

pub fn tl_matnorm_with(a: &TLMatrix, rho: f64, boundary: usize) -> TLReport {
    let b11 = Block { mats: a.blocks_of(0, 0), limits: a.limits11.as_ref() };
    let b22 = Block { mats: a.blocks_of(1, 1), limits: a.limits22.as_ref() };
    let b12 = Block { mats: a.blocks_of(0, 1), limits: None };
    let b21 = Block { mats: a.blocks_of(1, 0), limits: None };
    tl_core(a.j, a.r, rho, boundary, &[b11, b22], &[b12, b21])
}

/// Block product with Fourier convolution, truncated at the smaller capacity.
pub fn matmul(a: &TLMatrix, b: &TLMatrix) -> Result<TLMatrix> {
    if a.n != b.n || a.j != b.j {
        return Err(Error::DimensionMismatch(format!("TL matrices ({}, {}) vs ({}, {})", a.n, a.j, b.n, b.j)));
    }
    let cap = a.k_cap.min(b.k_cap);
    let mut out = TLMatrix::zeros(a.n, a.j, cap, a.r);
    for (ka, ma) in &a.coeffs {
        for (kb, mb) in &b.coeffs {
            let k = add_modes(ka, kb);
            if l1(&k) > cap {
                continue;
            }
            let e = out.coeffs.entry(k).or_insert_with(|| czero(2 * a.j, 2 * a.j));
            *e += ma * mb;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamrep::Weights;

    #[test]
    fn identity_norm_is_one() {
        let id = TLMatrix::identity(1, 6, 2, 0.3);
        let rep = tl_matnorm(&id, 0.5);
        assert_eq!(rep.m1, 1.0);
        assert_eq!(rep.m3, 0.0);
    }

    #[test]
    fn exactly_toeplitz_diagonal_has_zero_m3() {
        let mut p = QuadHam::new(1, 8, 1, Weights { r: 0.2, s: 1.0, a: 0.0, p: 0.0 });
        for i in 0..7 {
            p.add_h11(&[0], i, i + 1, C64::new(0.5, 0.0));
            p.add_h11(&[0], i + 1, i, C64::new(0.5, 0.0));
        }
        let rep = tl_seminorm(&p, 0.4);
        assert!((rep.m1 - 0.5 * 0.4f64.exp()).abs() < 1e-15);
        assert_eq!(rep.m3, 0.0);
    }
}
