//! The seeded property suite behind `selftest`. Each check draws random
//! instances, reduces them to one worst-case number and compares it with a
//! tolerance.

use kamreduce_core::approxfn::{feasible_t0, log_gamma_ab, validate_af, xi_schedule, ApproximationFunction, GammaQuery};
use kamreduce_core::flow::{compose, flow_map, transform_flow, transform_lie, transform_quadratic, FlowConfig, LIE_M_MAX};
use kamreduce_core::hamrep::{
    hessian_matrix, matmul, modes_upto, poisson_bracket, tl_matnorm, tl_seminorm, truncate_fourier, QuadHam, Weights,
};
use kamreduce_core::homological::{residual, solve};
use kamreduce_core::linalg::{max_abs, C64};
use kamreduce_core::smalldiv::{russmann_check, NormalForm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::SelftestConfig;
use crate::output::real;

type Runner = fn(&mut ChaCha8Rng, usize) -> Result<f64, String>;

pub struct CheckSpec {
    pub name: &'static str,
    /// Instances as a fraction of the configured count.
    pub share: f64,
    pub tolerance: f64,
    pub run: Runner,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub error: Option<String>,
}

pub fn checks() -> Vec<CheckSpec> {
    vec![
        CheckSpec { name: "bracket_antisymmetry", share: 1.0, tolerance: 1e-13, run: bracket_antisymmetry },
        CheckSpec { name: "bracket_jacobi", share: 1.0, tolerance: 1e-12, run: bracket_jacobi },
        CheckSpec { name: "bracket_bound", share: 1.0, tolerance: 4.0, run: bracket_bound },
        CheckSpec { name: "product_bound", share: 1.0, tolerance: 4.0, run: product_bound },
        CheckSpec { name: "af_identity", share: 1.0, tolerance: 1e-12, run: af_identity },
        CheckSpec { name: "cano_bound", share: 1.0, tolerance: 16.0, run: cano_bound },
        CheckSpec { name: "fourier_remainder", share: 1.0, tolerance: 32.0, run: fourier_remainder },
        CheckSpec { name: "expsum_bound", share: 1.0, tolerance: 4.0, run: expsum_bound },
        CheckSpec { name: "russmann_bound", share: 1.0, tolerance: 1.0, run: russmann_bound },
        CheckSpec { name: "gamma_lemma", share: 1.0, tolerance: 1e-9, run: gamma_lemma },
        CheckSpec { name: "xi_certificate", share: 1.0, tolerance: 1e-6, run: xi_certificate },
        CheckSpec { name: "af_axioms", share: 1.0, tolerance: 0.5, run: af_axioms },
        CheckSpec { name: "homological_exactness", share: 1.0, tolerance: 1e-12, run: homological_exactness },
        CheckSpec { name: "homological_linearity", share: 1.0, tolerance: 1e-12, run: homological_linearity },
        CheckSpec { name: "flow_symplecticity", share: 1.0, tolerance: 1e-10, run: flow_symplecticity },
        CheckSpec { name: "flow_lie_agreement", share: 0.5, tolerance: 1.0, run: flow_lie_agreement },
        CheckSpec { name: "flow_inverse", share: 1.0, tolerance: 1e-12, run: flow_inverse },
    ]
}

pub fn names() -> Vec<&'static str> {
    checks().iter().map(|c| c.name).collect()
}

fn check_seed(seed: u64, idx: usize) -> u64 {
    seed ^ (idx as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn run_suite(seed: u64, cfg: &SelftestConfig) -> Vec<CheckResult> {
    checks()
        .iter()
        .enumerate()
        .filter(|(_, c)| cfg.only.is_empty() || cfg.only.iter().any(|o| o == c.name))
        .map(|(idx, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(check_seed(seed, idx));
            let instances = ((cfg.instances as f64 * c.share).ceil() as usize).max(1);
            let tolerance = cfg.tolerances.get(c.name).copied().unwrap_or(c.tolerance) * cfg.tolerance_scale;
            let (worst, error) = match (c.run)(&mut rng, instances) {
                Ok(w) => (w, None),
                Err(e) => (f64::INFINITY, Some(e)),
            };
            CheckResult { name: c.name.to_string(), instances, worst, tolerance, passed: error.is_none() && worst <= tolerance, error }
        })
        .collect()
}

pub fn suite_csv(results: &[CheckResult]) -> String {
    let mut s = String::from("check,instances,worst,tolerance,passed\n");
    for r in results {
        s.push_str(&format!("{},{},{},{},{}\n", r.name, r.instances, real(r.worst), real(r.tolerance), r.passed));
    }
    s
}

fn cplx(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Random quadratic Hamiltonian with Fourier modes |k| ≤ kmax, off-diagonal
/// decay e^{−ρ₀|i−j|} in H11, e^{−ρ₀(i+j)} in S20/S02, and diagonals that
/// settle like 1/(1 + min(i, j)).
#[allow(clippy::too_many_arguments)]
fn random_ham(rng: &mut ChaCha8Rng, n: usize, jn: usize, kmax: usize, k_cap: usize, scale: f64, rho0: f64, w: Weights, with20: bool) -> QuadHam {
    let mut p = QuadHam::new(n, jn, k_cap, w);
    let diag_lim: Vec<C64> = (0..2 * jn).map(|_| cplx(rng)).collect();
    for k in modes_upto(n, kmax) {
        let env = scale * (-(k.iter().map(|x| x.unsigned_abs() as f64).sum::<f64>()) * 1.5 * w.r).exp();
        for i in 0..jn {
            for j in 0..jn {
                let d = i.abs_diff(j);
                let settle = diag_lim[(i as i64 - j as i64 + jn as i64) as usize % (2 * jn)] + cplx(rng) / (1.0 + i.min(j) as f64);
                let v = settle * env * (-rho0 * d as f64).exp();
                let v = if i == j && k.iter().all(|x| *x == 0) { C64::new(v.re, 0.0) } else { v };
                p.add_h11(&k, i, j, v);
                if with20 && i <= j {
                    let e = env * (-rho0 * (i + j + 2) as f64).exp();
                    p.set_s20(&k, i, j, cplx(rng) * e);
                    p.set_s02(&k, i, j, cplx(rng) * e);
                }
            }
        }
    }
    p
}

fn weights(rng: &mut ChaCha8Rng) -> Weights {
    Weights { r: rng.gen_range(0.2..1.0), s: 1.0, a: 0.0, p: 0.0 }
}

fn bracket_antisymmetry(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let r = random_ham(rng, 1, 6, 2, 4, 1.0, 0.3, w, true);
        let f = random_ham(rng, 1, 6, 2, 4, 1.0, 0.3, w, true);
        let a = poisson_bracket(&r, &f).map_err(|e| e.to_string())?;
        let b = poisson_bracket(&f, &r).map_err(|e| e.to_string())?;
        let s = a.add(&b).map_err(|e| e.to_string())?;
        worst = worst.max(s.vf_norm() / (r.vf_norm() * f.vf_norm()));
    }
    Ok(worst)
}

fn bracket_jacobi(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let br = |a: &QuadHam, b: &QuadHam| poisson_bracket(a, b).map_err(|e| e.to_string());
    for _ in 0..count {
        let w = weights(rng);
        let a = random_ham(rng, 1, 5, 1, 3, 1.0, 0.3, w, true);
        let b = random_ham(rng, 1, 5, 1, 3, 1.0, 0.3, w, true);
        let c = random_ham(rng, 1, 5, 1, 3, 1.0, 0.3, w, true);
        let t1 = br(&br(&a, &b)?, &c)?;
        let t2 = br(&br(&b, &c)?, &a)?;
        let t3 = br(&br(&c, &a)?, &b)?;
        let s = t1.add(&t2).and_then(|x| x.add(&t3)).map_err(|e| e.to_string())?;
        worst = worst.max(s.vf_norm() / (a.vf_norm() * b.vf_norm() * c.vf_norm()));
    }
    Ok(worst)
}

/// δ⟨{R,F}⟩_{ρ−δ} / (⟨R⟩_ρ⟨F⟩_ρ).
fn bracket_bound(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let rho = rng.gen_range(0.1..0.5);
        let delta = rng.gen_range(0.02..rho / 2.0);
        let r = random_ham(rng, 1, 8, 2, 4, 1.0, rho * 1.5, w, true);
        let f = random_ham(rng, 1, 8, 2, 4, 1.0, rho * 1.5, w, true);
        let b = poisson_bracket(&r, &f).map_err(|e| e.to_string())?;
        let lhs = tl_seminorm(&b, rho - delta).combined;
        let rhs = tl_seminorm(&r, rho).combined * tl_seminorm(&f, rho).combined;
        worst = worst.max(lhs * delta / rhs);
    }
    Ok(worst)
}

/// δ⟨⟨AB⟩⟩_{ρ−δ} / (⟨⟨A⟩⟩_ρ⟨⟨B⟩⟩_ρ).
fn product_bound(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let rho = rng.gen_range(0.1..0.5);
        let delta = rng.gen_range(0.02..rho / 2.0);
        let a = hessian_matrix(&random_ham(rng, 1, 8, 2, 4, 1.0, rho * 1.5, w, true));
        let b = hessian_matrix(&random_ham(rng, 1, 8, 2, 4, 1.0, rho * 1.5, w, true));
        let ab = matmul(&a, &b).map_err(|e| e.to_string())?;
        let lhs = tl_matnorm(&ab, rho - delta).combined;
        let rhs = tl_matnorm(&a, rho).combined * tl_matnorm(&b, rho).combined;
        worst = worst.max(lhs * delta / rhs);
    }
    Ok(worst)
}

/// |⟨⟨∂²F⟩⟩ − ⟨F⟩| / ⟨F⟩.
fn af_identity(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let rho = rng.gen_range(0.05..0.5);
        let f = random_ham(rng, 2, 6, 2, 2, 1.0, rho * 1.5, w, true);
        let a = tl_matnorm(&hessian_matrix(&f), rho).combined;
        let b = tl_seminorm(&f, rho).combined;
        worst = worst.max((a - b).abs() / b);
    }
    Ok(worst)
}

fn small_generator(rng: &mut ChaCha8Rng, jn: usize, k_cap: usize, rho: f64, size: f64, w: Weights) -> QuadHam {
    let f = random_ham(rng, 1, jn, 1, k_cap, 1.0, rho * 1.5, w, true);
    let norm = f.vf_norm() + tl_seminorm(&f, rho).combined;
    f.scaled(C64::new(size / norm, 0.0))
}

/// δ²⟨R∘X¹_F⟩_{ρ−3δ} / ⟨R⟩_ρ for generators below the flow threshold.
fn cano_bound(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let rho = rng.gen_range(0.1..0.5);
        let delta = rng.gen_range(0.01..rho / 4.0);
        let sigma = rng.gen_range(0.05..0.3);
        let r = random_ham(rng, 1, 8, 2, 4, 1.0, rho * 1.5, w, true);
        let scale = 0.25 * sigma * rng.gen_range(0.1..1.0);
        let f = small_generator(rng, 8, 4, rho, scale, w);
        let cfg = FlowConfig { grid: 17, tol: 1e-12, threshold: Some(0.25 * sigma), rho };
        let map = flow_map(&f, &cfg).map_err(|e| e.to_string())?;
        let out = transform_quadratic(&r, &map).map_err(|e| e.to_string())?;
        let lhs = tl_seminorm(&out, rho - 3.0 * delta).combined;
        worst = worst.max(lhs * delta * delta / tl_seminorm(&r, rho).combined);
    }
    Ok(worst)
}

/// ‖P − T_K P‖_{r−2σ} σ² e^{Kσ} / ‖P‖_r.
fn fourier_remainder(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = Weights { r: rng.gen_range(0.2..1.0), s: 1.0, a: 0.0, p: 0.0 };
        let sigma = w.r / 4.0;
        let mut p = QuadHam::new(1, 4, 24, w);
        for k in -24i32..=24 {
            let env = (-(k.unsigned_abs() as f64) * w.r * rng.gen_range(1.0..1.5)).exp();
            for i in 0..4 {
                for j in 0..4 {
                    p.add_h11(&[k], i, j, cplx(rng) * env);
                }
            }
        }
        let (_, _, rep) = truncate_fourier(&p, 8, sigma).map_err(|e| e.to_string())?;
        worst = worst.max(rep.remainder_norm * sigma * sigma * (8.0 * sigma).exp() / p.vf_norm());
    }
    Ok(worst)
}

/// δ·Σ_{|k|≤10⁴} e^{−δ(|i−k|+|k−j|)}.
fn expsum_bound(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let delta = rng.gen_range(0.05..1.0);
        let i: i64 = rng.gen_range(-50..=50);
        let j: i64 = rng.gen_range(-50..=50);
        let s: f64 = (-10_000i64..=10_000).map(|k| (-delta * ((i - k).abs() + (k - j).abs()) as f64).exp()).sum();
        worst = worst.max(s * delta);
    }
    Ok(worst)
}

/// measured / (bound + grid slack) for f with |f⁽q⁾| ≥ β on [0, 1].
fn russmann_bound(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let q: u32 = rng.gen_range(1..=3);
        let beta = rng.gen_range(0.5..2.0);
        let lead = beta * rng.gen_range(1.0..2.0) / (1..=q).product::<u32>() as f64;
        let t0 = rng.gen_range(0.0..1.0);
        let lower: Vec<f64> = (0..q).map(|_| rng.gen_range(-0.01..0.01)).collect();
        let eps = 10f64.powf(rng.gen_range(-4.0..-2.0));
        let f = move |t: f64| {
            let x = t - t0;
            lead * x.powi(q as i32) + lower.iter().enumerate().map(|(d, c)| c * x.powi(d as i32)).sum::<f64>()
        };
        let rep = russmann_check(f, 0.0, 1.0, q, beta, eps, 20_000);
        if !rep.precondition_verified {
            return Err(format!("derivative precondition failed for q={q}"));
        }
        worst = worst.max(rep.measured / (rep.bound + rep.slack));
    }
    Ok(worst)
}

/// LogDamped is monotone only for α ≤ 2.
fn random_af(rng: &mut ChaCha8Rng) -> ApproximationFunction {
    match rng.gen_range(0..4) {
        0 => ApproximationFunction::Power { alpha: rng.gen_range(0.2..0.8) },
        1 => ApproximationFunction::LogDamped { alpha: rng.gen_range(1.2..=2.0) },
        2 => ApproximationFunction::LogPower { alpha: rng.gen_range(1.2..3.0) },
        _ => ApproximationFunction::Constant,
    }
}

/// log Γ_{a,b}(σ) − log(σΓ_{a+1,b}(σ)), which must not be positive.
fn gamma_lemma(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let af = random_af(rng);
        let sigma = rng.gen_range(0.05..1.0);
        let a = rng.gen_range(1..=2);
        let b = rng.gen_range(1..=3);
        let (lo, _) = log_gamma_ab(&af, GammaQuery { a, b, sigma }).map_err(|e| e.to_string())?;
        let (hi, _) = log_gamma_ab(&af, GammaQuery { a: a + 1, b, sigma }).map_err(|e| e.to_string())?;
        worst = worst.max(lo - sigma.ln() - hi);
    }
    Ok(worst.max(0.0))
}

/// log Ξ − σT, which must not exceed log(1 + 10⁻⁶).
fn xi_certificate(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let (af, sigma) = match rng.gen_range(0..3) {
            0 => (ApproximationFunction::Power { alpha: rng.gen_range(0.2..0.7) }, rng.gen_range(0.1..1.0)),
            1 => (ApproximationFunction::LogDamped { alpha: rng.gen_range(1.9..=2.0) }, rng.gen_range(0.6..1.0)),
            _ => (ApproximationFunction::LogPower { alpha: rng.gen_range(2.5..3.5) }, rng.gen_range(0.1..1.0)),
        };
        let kappa = 4.0 / 3.0;
        let t0 = feasible_t0(&af, sigma, kappa).map_err(|e| e.to_string())?;
        let xi = xi_schedule(&af, sigma, kappa, t0).map_err(|e| e.to_string())?;
        worst = worst.max(xi.log_xi - xi.log_bound);
    }
    Ok(worst.max(0.0).exp_m1())
}

/// Count of failed axiom checks.
fn af_axioms(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut failed = 0usize;
    for _ in 0..count {
        let af = random_af(rng);
        if !validate_af(&af, 1e6, 512).map_err(|e| e.to_string())?.passed() {
            failed += 1;
        }
    }
    Ok(failed as f64)
}

fn random_nf(rng: &mut ChaCha8Rng, n: usize, jn: usize) -> NormalForm {
    let omega: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let breve: Vec<f64> = (0..jn).map(|j| rng.gen_range(-0.3..0.3) / (1.0 + j as f64)).collect();
    NormalForm::new(omega, breve, 0.5)
}

fn solvable(rng: &mut ChaCha8Rng, n: usize, jn: usize, kk: usize, r: &QuadHam) -> Result<(NormalForm, kamreduce_core::homological::HomologicalSolution), String> {
    for _ in 0..64 {
        let nf = random_nf(rng, n, jn);
        match solve(&nf, r, &ApproximationFunction::Constant, 1e-8, kk) {
            Ok(s) => return Ok((nf, s)),
            Err(kamreduce_core::Error::DivisorViolation { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        }
    }
    Err("no non-resonant normal form found".into())
}

/// ‖{N,F} + R − N̂‖ / ‖R‖.
fn homological_exactness(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let r = random_ham(rng, 2, 8, 3, 3, 1.0, 0.3, w, true);
        let (nf, sol) = solvable(rng, 2, 8, 3, &r)?;
        let res = residual(&nf, &sol.f, &r, &sol.n_hat).map_err(|e| e.to_string())?;
        worst = worst.max(res / r.vf_norm());
    }
    Ok(worst)
}

/// ‖F(aR₁ + bR₂) − aF(R₁) − bF(R₂)‖ / (‖aF(R₁)‖ + ‖bF(R₂)‖).
fn homological_linearity(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let r1 = random_ham(rng, 1, 8, 3, 3, 1.0, 0.3, w, true);
        let r2 = random_ham(rng, 1, 8, 3, 3, 1.0, 0.3, w, true);
        let (a, b) = (cplx(rng), cplx(rng));
        let (nf, s1) = solvable(rng, 1, 8, 3, &r1)?;
        let af = ApproximationFunction::Constant;
        let s2 = solve(&nf, &r2, &af, 1e-8, 3).map_err(|e| e.to_string())?;
        let mut mix = r1.scaled(a);
        mix.axpy(b, &r2).map_err(|e| e.to_string())?;
        let s = solve(&nf, &mix, &af, 1e-8, 3).map_err(|e| e.to_string())?;
        let fa = s1.f.scaled(a);
        let fb = s2.f.scaled(b);
        let d = s.f.sub(&fa).and_then(|x| x.sub(&fb)).map_err(|e| e.to_string())?;
        worst = worst.max(d.vf_norm() / (fa.vf_norm() + fb.vf_norm()));
    }
    Ok(worst)
}

fn flow_symplecticity(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let scale = rng.gen_range(1e-3..0.5);
        let f = small_generator(rng, 8, 4, 0.2, scale, w);
        let map = flow_map(&f, &FlowConfig { grid: 17, tol: 1e-12, threshold: None, rho: 0.2 }).map_err(|e| e.to_string())?;
        worst = worst.max(map.symplectic_defect());
    }
    Ok(worst)
}

/// ‖flow − Lie‖ / (10⁻¹²‖P‖ + 10⁻¹⁴ + Lie tail + aliasing tails).
fn flow_lie_agreement(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let nf = random_nf(rng, 1, 6);
        let scale = rng.gen_range(1e-3..1e-1);
        let p = random_ham(rng, 1, 6, 1, 8, scale, 0.3, w, true);
        let scale = rng.gen_range(1e-4..1e-2);
        let f = small_generator(rng, 6, 8, 0.2, scale, w);
        let map = flow_map(&f, &FlowConfig { grid: 33, tol: 1e-13, threshold: None, rho: 0.2 }).map_err(|e| e.to_string())?;
        let a = transform_flow(&nf, &p, &map).map_err(|e| e.to_string())?;
        let b = transform_lie(&nf, &p, &f, LIE_M_MAX, 1e-16).map_err(|e| e.to_string())?;
        let d = a.sub(&b.p).map_err(|e| e.to_string())?.vf_norm();
        let tol = 1e-12 * p.vf_norm().max(1.0) + 1e-14 + b.tail_bound + a.tail_norm + b.p.tail_norm;
        worst = worst.max(d / tol);
    }
    Ok(worst)
}

/// max |Φ_F∘Φ_{−F} − Id| over B and M.
fn flow_inverse(rng: &mut ChaCha8Rng, count: usize) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let w = weights(rng);
        let scale = rng.gen_range(1e-3..0.3);
        let f = small_generator(rng, 6, 4, 0.2, scale, w);
        let cfg = FlowConfig { grid: 17, tol: 1e-13, threshold: None, rho: 0.2 };
        let a = flow_map(&f, &cfg).map_err(|e| e.to_string())?;
        let b = flow_map(&f.scaled(C64::new(-1.0, 0.0)), &cfg).map_err(|e| e.to_string())?;
        let c = compose(&a, &b).map_err(|e| e.to_string())?;
        let db = c.b.iter().map(max_abs).fold(0.0, f64::max);
        let dm = c.m.iter().flatten().map(max_abs).fold(0.0, f64::max);
        worst = worst.max(db).max(dm);
    }
    Ok(worst)
}
