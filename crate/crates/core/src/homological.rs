//! The homological equation {N, F} + R = N̂ for quadratic R, solved
//! coefficientwise with explicit small-divisor checks.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::approxfn::{log_gamma_ab, ApproximationFunction, GammaQuery};
use crate::error::{DivisorKind, Error, Result};
use crate::hamrep::{l1, tl_seminorm, Blocks, Mode, QuadHam, Series, ToeplitzLimits};
use crate::linalg::{C64, I};
use crate::numeric::{kdot, KDot};
use crate::smalldiv::{Divisor, NormalForm};

#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub residual_norm: f64,
    /// Smallest |divisor|·Δ(|k|)/γ over touched divisors.
    pub worst_margin: f64,
    pub worst_divisor: Option<Divisor>,
    /// The smallest touched divisors, ascending by |value|.
    pub smallest: Vec<(Divisor, f64)>,
}

#[derive(Debug, Clone)]
pub struct HomologicalSolution {
    pub f: QuadHam,
    /// Ω̂_j: θ-means of the R^{11} diagonal.
    pub n_hat: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

const SMALLEST_KEPT: usize = 100;

struct Tracker {
    gamma: f64,
    worst: f64,
    arg: Option<Divisor>,
    smallest: Vec<(Divisor, f64)>,
}

impl Tracker {
    fn touch(&mut self, k: &Mode, i: usize, j: usize, kind: DivisorKind, v: f64, dk: f64, coeff: C64) -> Result<()> {
        let threshold = self.gamma / dk;
        if !(v.abs() >= threshold) {
            return Err(Error::DivisorViolation { k: k.clone(), i, j, kind, value: v, threshold });
        }
        let d = || Divisor { k: k.clone(), i, j, kind, value: v };
        let m = v.abs() / threshold;
        if m < self.worst {
            self.worst = m;
            self.arg = Some(d());
        }
        if self.smallest.len() < SMALLEST_KEPT || v.abs() < self.smallest.last().unwrap().0.value.abs() {
            let pos = self.smallest.partition_point(|(x, _)| x.value.abs() <= v.abs());
            self.smallest.insert(pos, (d(), coeff.norm()));
            self.smallest.truncate(SMALLEST_KEPT);
        }
        Ok(())
    }
}

/// Solves for F with [F] = 0. Only divisors with a nonzero numerator are
/// touched; each must satisfy |divisor| ≥ γ/Δ(|k|). Modes of R beyond K are
/// rejected.
pub fn solve(
    nf: &NormalForm,
    r: &QuadHam,
    delta: &ApproximationFunction,
    gamma: f64,
    kk: usize,
) -> Result<HomologicalSolution> {
    if nf.j() < r.j || nf.omega.len() != r.n {
        return Err(Error::DimensionMismatch(format!(
            "normal form (n={}, J={}) vs R (n={}, J={})",
            nf.omega.len(),
            nf.j(),
            r.n,
            r.j
        )));
    }
    let jn = r.j;
    let om: Vec<f64> = (0..jn).map(|i| nf.big_omega(i)).collect();
    let mut tr = Tracker { gamma, worst: f64::INFINITY, arg: None, smallest: Vec::new() };
    let mut f = r.zeros_like();
    let mut res = r.zeros_like();
    let zero_mode = vec![0i32; r.n];
    let mut n_hat = vec![0.0; jn];
    for (k, b) in &r.coeffs {
        if b.is_zero() {
            continue;
        }
        if l1(k) > kk {
            return Err(Error::Domain(format!("R has mode {k:?} beyond K = {kk}")));
        }
        let dk = delta.at(l1(k) as f64);
        let kw = KDot::new(k, &nf.omega);
        let mut nb = Blocks::zeros(jn);
        let mut rb = Blocks::zeros(jn);
        for i in 0..jn {
            for j in 0..jn {
                let c = b.h11[(i, j)];
                if k == &zero_mode && i == j {
                    n_hat[i] = c.re;
                    rb.h11[(i, j)] = C64::new(0.0, c.im);
                    continue;
                }
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                let v = kw.plus(&[om[i], -om[j]]);
                tr.touch(k, i + 1, j + 1, DivisorKind::Minus, v, dk, c)?;
                let x = c / (I * v);
                nb.h11[(i, j)] = x;
                rb.h11[(i, j)] = c - I * v * x;
            }
            for j in i..jn {
                let c = b.s20[(i, j)];
                if c.re != 0.0 || c.im != 0.0 {
                    let v = kw.plus(&[om[i], om[j]]);
                    tr.touch(k, i + 1, j + 1, DivisorKind::Plus, v, dk, c)?;
                    let x = c / (I * v);
                    nb.s20[(i, j)] = x;
                    nb.s20[(j, i)] = x;
                    rb.s20[(i, j)] = c - I * v * x;
                    rb.s20[(j, i)] = b.s20[(j, i)] - I * v * x;
                }
                let c = b.s02[(i, j)];
                if c.re != 0.0 || c.im != 0.0 {
                    let v = kw.plus(&[-om[i], -om[j]]);
                    tr.touch(k, i + 1, j + 1, DivisorKind::Plus, v, dk, c)?;
                    let x = c / (I * v);
                    nb.s02[(i, j)] = x;
                    nb.s02[(j, i)] = x;
                    rb.s02[(i, j)] = c - I * v * x;
                    rb.s02[(j, i)] = b.s02[(j, i)] - I * v * x;
                }
            }
        }
        if !nb.is_zero() {
            f.coeffs.insert(k.clone(), nb);
        }
        if !rb.is_zero() {
            res.coeffs.insert(k.clone(), rb);
        }
    }
    f.limits = solve_limits(nf, r);
    Ok(HomologicalSolution {
        f,
        n_hat,
        diagnostics: SolveDiagnostics {
            residual_norm: res.vf_norm(),
            worst_margin: tr.worst,
            worst_divisor: tr.arg,
            smallest: tr.smallest,
        },
    })
}

/// Limit equations along the diagonals: with Ω̆ → Ω̆_∞ the divisor of the
/// d-th diagonal tends to k·ω + d.
fn solve_limits(nf: &NormalForm, r: &QuadHam) -> Option<ToeplitzLimits> {
    let lims = r.limits.as_ref()?;
    nf.breve_limit?;
    let mut out = BTreeMap::new();
    for (d, s) in &lims.h11 {
        let mut fs = Series::new();
        for (k, c) in s {
            let v = kdot(k, &nf.omega) + *d as f64;
            if v == 0.0 {
                continue;
            }
            fs.insert(k.clone(), c / (I * v));
        }
        out.insert(*d, fs);
    }
    Some(ToeplitzLimits { h11: out })
}

/// {N, F} as a quadratic: coefficientwise −i(k·ω ± Ω_i ± Ω_j)F.
pub fn normal_form_bracket(nf: &NormalForm, f: &QuadHam) -> QuadHam {
    let jn = f.j;
    let om: Vec<f64> = (0..jn).map(|i| nf.big_omega(i)).collect();
    let mut out = f.zeros_like();
    for (k, b) in &f.coeffs {
        let kw = KDot::new(k, &nf.omega);
        let mut nb = Blocks::zeros(jn);
        for i in 0..jn {
            for j in 0..jn {
                let v = kw.plus(&[om[i], -om[j]]);
                nb.h11[(i, j)] = -I * v * b.h11[(i, j)];
                let v = kw.plus(&[om[i], om[j]]);
                nb.s20[(i, j)] = -I * v * b.s20[(i, j)];
                let v = kw.plus(&[-om[i], -om[j]]);
                nb.s02[(i, j)] = -I * v * b.s02[(i, j)];
            }
        }
        out.coeffs.insert(k.clone(), nb);
    }
    out.tail_norm = f.tail_norm;
    out
}

/// The diagonal normal-form correction Σ Ω̂_j z_j z̄_j as a QuadHam shaped like `like`.
pub fn diagonal_quadham(like: &QuadHam, n_hat: &[f64]) -> QuadHam {
    let mut out = like.zeros_like();
    let zero = vec![0i32; like.n];
    if n_hat.iter().any(|&x| x != 0.0) {
        for (i, &x) in n_hat.iter().enumerate() {
            out.add_h11(&zero, i, i, C64::new(x, 0.0));
        }
    }
    out
}

/// vf_norm of {N, F} + R − N̂.
pub fn residual(nf: &NormalForm, f: &QuadHam, r: &QuadHam, n_hat: &[f64]) -> Result<f64> {
    let mut res = normal_form_bracket(nf, f);
    res.axpy(C64::new(1.0, 0.0), r)?;
    res.axpy(C64::new(-1.0, 0.0), &diagonal_quadham(r, n_hat))?;
    res.tail_norm = 0.0;
    Ok(res.vf_norm())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimateReport {
    /// ‖X_F‖_{r−σ} / (γ^{−2} Γ₁₂(σ) ‖X_R‖_r).
    pub vf_ratio: f64,
    /// ⟨F⟩_ρ / (γ^{−3} Γ₁₃(σ) ⟨R⟩_ρ).
    pub tl_ratio: f64,
    /// Reported C₀ = n|ω| + 2 sup|ΔΩ̆| (finite-difference slope of Ω̆).
    pub c0: f64,
}

pub fn verify_estimate(
    sol: &HomologicalSolution,
    nf: &NormalForm,
    r: &QuadHam,
    delta: &ApproximationFunction,
    gamma: f64,
    sigma: f64,
    rho: f64,
) -> Result<EstimateReport> {
    if !(sigma > 0.0 && 5.0 * sigma < r.w.r) {
        return Err(Error::Domain(format!("verify_estimate needs 0 < 5σ < r, got σ={sigma}, r={}", r.w.r)));
    }
    let rn = r.vf_norm();
    let n = nf.omega.len() as f64;
    let wn = nf.omega.iter().map(|x| x * x).sum::<f64>().sqrt();
    let slope = nf.omega_breve.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let c0 = n * wn + 2.0 * slope;
    if rn == 0.0 {
        return Ok(EstimateReport { vf_ratio: 0.0, tl_ratio: 0.0, c0 });
    }
    let fn_ = sol.f.vf_norm_at(r.w.r - sigma);
    let (lg12, _) = log_gamma_ab(delta, GammaQuery { a: 1, b: 2, sigma })?;
    let vf_ratio = fn_ / rn * (2.0 * gamma.ln() - lg12).exp();
    let rt = tl_seminorm(r, rho).combined;
    let tl_ratio = if rt == 0.0 {
        0.0
    } else {
        let (lg13, _) = log_gamma_ab(delta, GammaQuery { a: 1, b: 3, sigma })?;
        tl_seminorm(&sol.f, rho).combined / rt * (3.0 * gamma.ln() - lg13).exp()
    };
    Ok(EstimateReport { vf_ratio, tl_ratio, c0 })
}

/// Diagnostics CSV rows: k, i, j, divisor, coefficient magnitude.
pub fn diagnostics_csv(d: &SolveDiagnostics) -> String {
    let mut s = String::from("k,i,j,kind,divisor,coeff_abs\n");
    for (x, c) in &d.smallest {
        let k: Vec<String> = x.k.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("{},{},{},{},{:.16e},{:.16e}\n", k.join(" "), x.i, x.j, x.kind.as_str(), x.value, c));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamrep::Weights;

    fn nf(omega: f64) -> NormalForm {
        NormalForm::new(vec![omega], vec![0.0, 0.0], 0.0)
    }

    #[test]
    fn zero_and_diagonal_inputs() {
        let r = QuadHam::new(1, 2, 2, Weights::default());
        let s = solve(&nf(2f64.sqrt()), &r, &ApproximationFunction::Constant, 0.01, 2).unwrap();
        assert!(s.f.is_zero() && s.n_hat == vec![0.0, 0.0]);
        let mut r = QuadHam::new(1, 2, 2, Weights::default());
        r.add_h11(&[0], 0, 0, C64::new(1.0, 0.0));
        let s = solve(&nf(2f64.sqrt()), &r, &ApproximationFunction::Constant, 0.01, 2).unwrap();
        assert!(s.f.is_zero());
        assert_eq!(s.n_hat, vec![1.0, 0.0]);
        assert_eq!(s.diagnostics.residual_norm, 0.0);
    }

    #[test]
    fn single_coefficient_oracle() {
        let mut r = QuadHam::new(1, 2, 2, Weights::default());
        r.add_h11(&[1], 0, 1, C64::new(1.0, 0.0));
        let err = solve(&nf(1.0), &r, &ApproximationFunction::Constant, 0.01, 2).unwrap_err();
        assert!(matches!(err, Error::DivisorViolation { kind: DivisorKind::Minus, .. }));
        let s = solve(&nf(2f64.sqrt()), &r, &ApproximationFunction::Constant, 0.01, 2).unwrap();
        let v = s.f.blocks(&[1]).unwrap().h11[(0, 1)];
        let want = C64::new(0.0, -(2f64.sqrt() + 1.0));
        assert!((v - want).norm() < 1e-14);
        assert!(s.diagnostics.residual_norm < 1e-15);
    }
}
