//! The KAM iteration: schedule, single steps and the full reduction.

use std::time::Instant;

use serde::Serialize;

use crate::approxfn::{feasible_t0, log_gamma_ab, xi_schedule, ApproximationFunction, GammaQuery, XiSchedule};
use crate::error::{Error, Result};
use crate::flow::{compose, flow_map, transform_flow, FlowConfig, SymplecticMap};
use crate::hamrep::{mode_weight, tl_seminorm, truncate_fourier, QuadHam};
use crate::homological::{diagonal_quadham, solve, SolveDiagnostics};
use crate::linalg::{CMat, C64};
use crate::smalldiv::NormalForm;

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleParams {
    pub gamma0: f64,
    pub rho0: f64,
    pub r0: f64,
    pub s0: f64,
    pub sigma_total: f64,
    pub kappa: f64,
    pub c_star: f64,
    pub eps0: f64,
    pub af: ApproximationFunction,
    pub nu_max: usize,
    pub k0: usize,
    pub k_cap: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct KamSchedule {
    pub params: ScheduleParams,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    /// log Γ_ν with Γ_ν = 2C*·Γ₂₃(σ_ν).
    pub log_big_gamma: Vec<f64>,
    pub log_eps: Vec<f64>,
    /// ceil((log C* − log(Γ_ν ε_ν^{1/2}))/σ_ν), before clamping.
    pub k_formula: Vec<f64>,
    /// clamp(max(K₀, formula), 1, K_cap).
    pub k_used: Vec<usize>,
    /// min{γ₀/4·(√Δ(1) − 1), (C*γ₀2⁵)^{3/2}}.
    pub smallness_gate: f64,
    pub gate_holds: bool,
    pub xi: XiSchedule,
}

pub fn build_schedule(p: &ScheduleParams) -> Result<KamSchedule> {
    if !(p.gamma0 > 0.0 && p.rho0 > 0.0 && p.r0 > 0.0 && p.s0 > 0.0 && p.eps0 > 0.0 && p.c_star > 0.0) {
        return Err(Error::Domain("schedule parameters must be positive".into()));
    }
    if p.k_cap == 0 {
        return Err(Error::Domain("K_cap must be positive".into()));
    }
    if !(3.0 * p.sigma_total < p.r0) {
        return Err(Error::Domain(format!("need 3σ < r₀, got σ={}, r₀={}", p.sigma_total, p.r0)));
    }
    let t0 = feasible_t0(&p.af, p.sigma_total, p.kappa)?;
    let xi = xi_schedule(&p.af, p.sigma_total, p.kappa, t0)?;
    let nu_n = p.nu_max + 1;
    let mut s = KamSchedule {
        params: p.clone(),
        gamma: Vec::new(),
        delta: Vec::new(),
        rho: Vec::new(),
        sigma: Vec::new(),
        r: Vec::new(),
        s: Vec::new(),
        log_big_gamma: Vec::new(),
        log_eps: Vec::new(),
        k_formula: Vec::new(),
        k_used: Vec::new(),
        smallness_gate: 0.0,
        gate_holds: false,
        xi,
    };
    let mut rho = p.rho0;
    let mut r = p.r0;
    let mut ss = p.s0;
    let mut log_eps = p.eps0.ln();
    for nu in 0..nu_n {
        let gamma = p.gamma0 / 2.0 * (1.0 + 2f64.powi(-(nu as i32)));
        let delta = 2f64.powi(-(nu as i32 + 4)) * p.rho0;
        let sigma = s.xi.sigma_at(nu);
        let (lg23, _) = log_gamma_ab(&p.af, GammaQuery { a: 2, b: 3, sigma })?;
        let lgg = (2.0 * p.c_star).ln() + lg23;
        let kf = ((p.c_star.ln() - (lgg + 0.5 * log_eps)) / sigma).ceil();
        let ku = (kf.max(p.k0 as f64)).clamp(1.0, p.k_cap as f64) as usize;
        s.gamma.push(gamma);
        s.delta.push(delta);
        s.rho.push(rho);
        s.sigma.push(sigma);
        s.r.push(r);
        s.s.push(ss);
        s.log_big_gamma.push(lgg);
        s.log_eps.push(log_eps);
        s.k_formula.push(kf);
        s.k_used.push(ku);
        rho -= 4.0 * delta;
        r -= 3.0 * sigma;
        ss /= 4.0;
        log_eps = lgg + p.kappa * log_eps;
        if log_eps < (1e-15f64).ln() {
            break;
        }
    }
    let g1 = p.gamma0 / 4.0 * ((0.5 * p.af.ld(1.0)).exp() - 1.0);
    let g2 = (p.c_star * p.gamma0 * 32.0).powf(1.5);
    s.smallness_gate = g1.min(g2);
    s.gate_holds = p.eps0 < s.smallness_gate;
    Ok(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub nu: usize,
    pub p_vf_pre: f64,
    pub p_tl_pre: f64,
    pub p_vf_post: f64,
    pub p_tl_post: f64,
    pub k_nu: usize,
    pub worst_margin: f64,
    pub phi_dev: f64,
    pub omega_update: f64,
    pub tail_norm: f64,
    pub residual: f64,
    pub truncation_remainder: f64,
    pub symplectic_defect: f64,
    pub wall_ms: f64,
}

impl StepReport {
    /// [P] before the step: vf_norm + ⟨P⟩_ρ.
    pub fn pre(&self) -> f64 {
        self.p_vf_pre + self.p_tl_pre
    }

    pub fn post(&self) -> f64 {
        self.p_vf_post + self.p_tl_post
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub grid: usize,
    pub quad_tol: f64,
    /// Flow smallness threshold as a multiple of σ_ν.
    pub flow_factor: f64,
}

impl StepOptions {
    pub fn for_capacity(k_cap: usize) -> Self {
        StepOptions { grid: 4 * k_cap + 1, quad_tol: 1e-12, flow_factor: 0.25 }
    }
}

pub struct StepOutput {
    pub nf: NormalForm,
    pub p: QuadHam,
    pub map: SymplecticMap,
    pub report: StepReport,
    pub diagnostics: SolveDiagnostics,
}

/// [P] = vf_norm(P) + ⟨P⟩_ρ.
pub fn bracket_norm(p: &QuadHam, rho: f64) -> f64 {
    p.vf_norm() + tl_seminorm(p, rho).combined
}

/// Weighted ℓ¹ operator norm of a stacked 2J×2J matrix.
fn weighted_op_norm(b: &CMat, a: f64, p: f64) -> f64 {
    let jn = b.nrows() / 2;
    let w: Vec<f64> = (0..2 * jn).map(|i| mode_weight(a, p, i % jn + 1)).collect();
    (0..2 * jn)
        .map(|c| (0..2 * jn).map(|r| w[r] * b[(r, c)].norm()).sum::<f64>() / w[c])
        .fold(0.0, f64::max)
}

pub fn kam_step(nf: &NormalForm, p: &QuadHam, sched: &KamSchedule, nu: usize, opts: &StepOptions) -> Result<StepOutput> {
    let start = Instant::now();
    let idx = nu.min(sched.gamma.len() - 1);
    let (gamma, sigma, rho, kk) = (sched.gamma[idx], sched.sigma[idx], sched.rho[idx], sched.k_used[idx]);
    let kk = kk.min(p.k_cap);
    let p_vf_pre = p.vf_norm();
    let p_tl_pre = tl_seminorm(p, rho).combined;
    let (r, _high, trunc) = truncate_fourier(p, kk, sigma)?;
    let sol = solve(nf, &r, &sched.params.af, gamma, kk)?;
    let cfg = FlowConfig { grid: opts.grid, tol: opts.quad_tol, threshold: Some(opts.flow_factor * sigma), rho };
    let map = flow_map(&sol.f, &cfg)?;
    let mut p_next = transform_flow(nf, p, &map)?;
    p_next.axpy(C64::new(-1.0, 0.0), &diagonal_quadham(p, &sol.n_hat))?;
    let mut nf_next = nf.clone();
    for (b, h) in nf_next.omega_breve.iter_mut().zip(&sol.n_hat) {
        *b += h;
    }
    let phi_dev = map.b.iter().map(|b| weighted_op_norm(b, p.w.a, p.w.p)).fold(0.0, f64::max);
    let report = StepReport {
        nu,
        p_vf_pre,
        p_tl_pre,
        p_vf_post: p_next.vf_norm(),
        p_tl_post: tl_seminorm(&p_next, rho).combined,
        k_nu: kk,
        worst_margin: sol.diagnostics.worst_margin,
        phi_dev,
        omega_update: sol.n_hat.iter().fold(0.0, |m, x| m.max(x.abs())),
        tail_norm: p_next.tail_norm,
        residual: sol.diagnostics.residual_norm,
        truncation_remainder: trunc.remainder_norm,
        symplectic_defect: map.symplectic_defect(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(StepOutput { nf: nf_next, p: p_next, map, report, diagnostics: sol.diagnostics })
}

pub struct Reduction {
    pub nf: NormalForm,
    pub p: QuadHam,
    pub chain: Vec<SymplecticMap>,
    pub table: Vec<StepReport>,
}

/// Iterates kam_step until [P] < stop_tol after a step, or ν_max steps.
pub fn reduce(
    nf0: &NormalForm,
    p0: &QuadHam,
    sched: &KamSchedule,
    opts: &StepOptions,
    nu_max: usize,
    stop_tol: f64,
) -> Result<Reduction> {
    let mut nf = nf0.clone();
    let mut p = p0.clone();
    let mut chain = Vec::new();
    let mut table = Vec::new();
    for nu in 0..nu_max.max(1) {
        let out = kam_step(&nf, &p, sched, nu, opts)?;
        let done = out.report.post() < stop_tol;
        nf = out.nf;
        p = out.p;
        chain.push(out.map);
        table.push(out.report);
        if done {
            break;
        }
    }
    Ok(Reduction { nf, p, chain, table })
}

/// Φ = Φ₁∘Φ₂∘⋯ on the common grid.
pub fn compose_transform(chain: &[SymplecticMap]) -> Result<SymplecticMap> {
    let (first, rest) = chain.split_first().ok_or_else(|| Error::GridMismatch("empty transformation chain".into()))?;
    let mut acc = first.clone();
    for m in rest {
        acc = compose(&acc, m)?;
    }
    Ok(acc)
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Convergence CSV; wall_ms is written only when `timing` is set.
pub fn convergence_csv(table: &[StepReport], timing: bool) -> String {
    let mut s = String::from("nu,P_vf_norm,P_tl,K_nu,worst_margin,phi_dev,omega_update,tail_norm,wall_ms\n");
    for r in table {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.nu,
            fmt_real(r.p_vf_post),
            fmt_real(r.p_tl_post),
            r.k_nu,
            fmt_real(r.worst_margin),
            fmt_real(r.phi_dev),
            fmt_real(r.omega_update),
            fmt_real(r.tail_norm),
            if timing { format!("{:.3}", r.wall_ms) } else { String::new() }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ScheduleParams {
        ScheduleParams {
            gamma0: 0.1,
            rho0: 0.05,
            r0: 1.0,
            s0: 1.0,
            sigma_total: 0.3,
            kappa: 4.0 / 3.0,
            c_star: 2.0,
            eps0: 1e-3,
            af: ApproximationFunction::power(0.5).unwrap(),
            nu_max: 3,
            k0: 8,
            k_cap: 8,
        }
    }

    #[test]
    fn schedule_sequences() {
        let s = build_schedule(&params()).unwrap();
        let want = [0.1, 0.075, 0.0625, 0.05625];
        for (g, w) in s.gamma.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!(s.rho.iter().all(|&r| r > 0.025));
        assert!(s.r.iter().all(|&r| r > 1.0 - 0.9));
        assert!(s.k_used.iter().all(|&k| k == 8));
    }
}
