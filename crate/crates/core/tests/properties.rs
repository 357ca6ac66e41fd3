use kamreduce_core::approxfn::{log_gamma_ab, ApproximationFunction, GammaQuery};
use kamreduce_core::flow::{compose, flow_map, transform_flow, transform_lie, FlowConfig, SymplecticMap, LIE_M_MAX};
use kamreduce_core::hamrep::{modes_upto, poisson_bracket, tl_seminorm, QuadHam, Weights};
use kamreduce_core::homological::{residual, solve};
use kamreduce_core::kamloop::{build_schedule, ScheduleParams};
use kamreduce_core::linalg::C64;
use kamreduce_core::models::{normal_form, ModelKind};
use kamreduce_core::smalldiv::NormalForm;
use kamreduce_core::verify::{integrate_direct, integrate_reduced, sup_relative_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cplx(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn weights() -> Weights {
    Weights { r: 0.5, s: 1.0, a: 0.0, p: 0.0 }
}

/// Real quadratic Hamiltonian: H11(−k) = H11(k)^*ᵀ, S02(−k) = S20(k)^*.
fn random_real(seed: u64, n: usize, jn: usize, kmax: usize, k_cap: usize, scale: f64) -> QuadHam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = QuadHam::new(n, jn, k_cap, weights());
    for k in modes_upto(n, kmax) {
        let neg: Vec<i32> = k.iter().map(|x| -x).collect();
        if neg < k {
            continue;
        }
        let env = scale * (-(k.iter().map(|x| x.unsigned_abs()).sum::<u32>() as f64)).exp();
        for i in 0..jn {
            for j in 0..jn {
                let d = (-0.5 * i.abs_diff(j) as f64).exp() * env;
                let v = cplx(&mut rng) * d;
                if neg == k {
                    if i <= j {
                        let v = if i == j { C64::new(v.re, 0.0) } else { v };
                        p.add_h11(&k, i, j, v);
                        if i != j {
                            p.add_h11(&k, j, i, v.conj());
                        }
                    }
                } else {
                    p.add_h11(&k, i, j, v);
                    p.add_h11(&neg, j, i, v.conj());
                }
                if i <= j {
                    let e = env * (-0.5 * (i + j) as f64).exp();
                    let s = cplx(&mut rng) * e;
                    if neg == k {
                        p.set_s20(&k, i, j, s);
                        p.set_s02(&k, i, j, s.conj());
                    } else {
                        p.set_s20(&k, i, j, s);
                        p.set_s02(&neg, i, j, s.conj());
                        let t = cplx(&mut rng) * e;
                        p.set_s20(&neg, i, j, t);
                        p.set_s02(&k, i, j, t.conj());
                    }
                }
            }
        }
    }
    p
}

fn random_nf(seed: u64, n: usize, jn: usize) -> NormalForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let omega = (0..n).map(|_| rng.gen_range(1.0..2.0)).collect();
    let breve = (0..jn).map(|j| rng.gen_range(-0.3..0.3) / (1.0 + j as f64)).collect();
    NormalForm::new(omega, breve, 0.5)
}

fn diff(a: &QuadHam, b: &QuadHam) -> f64 {
    a.sub(b).unwrap().vf_norm()
}

fn max_entry(p: &QuadHam) -> f64 {
    p.coeffs
        .values()
        .flat_map(|b| b.h11.iter().chain(b.s20.iter()).chain(b.s02.iter()).map(|x| x.norm()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn bracket_is_antisymmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let f = random_real(s1, 1, 4, 2, 4, 1.0);
        let g = random_real(s2, 1, 4, 2, 4, 1.0);
        let fg = poisson_bracket(&f, &g).unwrap();
        let gf = poisson_bracket(&g, &f).unwrap();
        let sum = fg.add(&gf).unwrap();
        prop_assert!(sum.vf_norm() <= 1e-13 * fg.vf_norm().max(1.0));
    }

    #[test]
    fn bracket_satisfies_jacobi(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let f = random_real(s1, 1, 3, 1, 4, 1.0);
        let g = random_real(s2, 1, 3, 1, 4, 1.0);
        let h = random_real(s3, 1, 3, 1, 4, 1.0);
        let a = poisson_bracket(&f, &poisson_bracket(&g, &h).unwrap()).unwrap();
        let b = poisson_bracket(&g, &poisson_bracket(&h, &f).unwrap()).unwrap();
        let c = poisson_bracket(&h, &poisson_bracket(&f, &g).unwrap()).unwrap();
        let total = a.add(&b).unwrap().add(&c).unwrap();
        prop_assert!(total.vf_norm() <= 1e-12 * a.vf_norm().max(1.0));
    }

    #[test]
    fn homological_solution_removes_the_resonant_free_part(seed in any::<u64>()) {
        let r = random_real(seed, 2, 5, 2, 2, 1.0);
        let nf = random_nf(seed, 2, 5);
        let sol = match solve(&nf, &r, &ApproximationFunction::Constant, 1e-9, 2) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let res = residual(&nf, &sol.f, &r, &sol.n_hat).unwrap();
        prop_assert!(res <= 1e-12 * r.vf_norm());
        let zero = vec![0i32; 2];
        for i in 0..5 {
            let want = r.blocks(&zero).map(|b| b.h11[(i, i)].re).unwrap_or(0.0);
            prop_assert!((sol.n_hat[i] - want).abs() <= 1e-15 * want.abs().max(1.0));
        }
        prop_assert!(max_entry(&sol.f) > 0.0);
    }

    #[test]
    fn homological_solution_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let r1 = random_real(s1, 1, 5, 2, 2, 1.0);
        let r2 = random_real(s2, 1, 5, 2, 2, 1.0);
        let nf = random_nf(s1 ^ s2, 1, 5);
        let af = ApproximationFunction::Constant;
        let (Ok(f1), Ok(f2)) = (solve(&nf, &r1, &af, 1e-9, 2), solve(&nf, &r2, &af, 1e-9, 2)) else { return Ok(()) };
        let mut mix = r1.scaled(C64::new(a, 0.0));
        mix.axpy(C64::new(b, 0.0), &r2).unwrap();
        let fm = solve(&nf, &mix, &af, 1e-9, 2).unwrap();
        let mut expect = f1.f.scaled(C64::new(a, 0.0));
        expect.axpy(C64::new(b, 0.0), &f2.f).unwrap();
        prop_assert!(diff(&fm.f, &expect) <= 1e-12 * (expect.vf_norm() + 1e-300));
    }

    #[test]
    fn flow_is_symplectic_and_inverted_by_the_negated_generator(seed in any::<u64>(), size in 1e-3f64..0.3) {
        let f = random_real(seed, 1, 4, 1, 4, 1.0);
        let f = f.scaled(C64::new(size / (f.vf_norm() + tl_seminorm(&f, 0.2).combined), 0.0));
        let cfg = FlowConfig { grid: 17, tol: 1e-13, threshold: None, rho: 0.2 };
        let fwd = flow_map(&f, &cfg).unwrap();
        let back = flow_map(&f.scaled(C64::new(-1.0, 0.0)), &cfg).unwrap();
        prop_assert!(fwd.symplectic_defect() <= 1e-10);
        let id = compose(&fwd, &back).unwrap();
        let worst = id.b.iter().map(|m| m.iter().map(|x| x.norm()).fold(0.0, f64::max)).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-12);
        let worst_m = id.m.iter().flatten().map(|m| m.iter().map(|x| x.norm()).fold(0.0, f64::max)).fold(0.0, f64::max);
        prop_assert!(worst_m <= 1e-12);
    }
}

#[test]
fn flow_matches_truncated_lie_series() {
    for seed in 0..8u64 {
        let nf = random_nf(seed, 1, 4);
        let p = random_real(seed + 100, 1, 4, 1, 8, 1e-2);
        let f = random_real(seed + 200, 1, 4, 1, 8, 1.0);
        let f = f.scaled(C64::new(1e-3 / f.vf_norm(), 0.0));
        let map = flow_map(&f, &FlowConfig { grid: 33, tol: 1e-13, threshold: None, rho: 0.2 }).unwrap();
        let a = transform_flow(&nf, &p, &map).unwrap();
        let b = transform_lie(&nf, &p, &f, LIE_M_MAX, 1e-16).unwrap();
        let tol = 1e-12 * p.vf_norm().max(1.0) + b.tail_bound + a.tail_norm + b.p.tail_norm;
        assert!(diff(&a, &b.p) <= tol, "seed {seed}: {} > {tol}", diff(&a, &b.p));
    }
}

/// For Δ ≡ 1, Γ_a1(σ) = sup (1+t)^a e^{−tσ} = (a/σ)^a e^{σ−a} when a ≥ σ.
#[test]
fn gamma_constant_family_closed_form() {
    for &(a, sigma) in &[(1u32, 0.1), (2, 0.3), (3, 0.05), (2, 1.0)] {
        let (lg, t) = log_gamma_ab(&ApproximationFunction::Constant, GammaQuery { a, b: 1, sigma }).unwrap();
        let af = a as f64;
        let exact = af * (af / sigma).ln() + sigma - af;
        assert!((lg - exact).abs() <= 1e-9 * exact.abs().max(1.0), "a={a} σ={sigma}: {lg} vs {exact}");
        assert!((t - (af / sigma - 1.0)).abs() <= 1e-3 * (af / sigma));
    }
}

/// Brute-force maximization of 2 log(1+t) + 3t^α/α − tσ on a dense grid.
#[test]
fn gamma_power_family_matches_dense_search() {
    for &(alpha, sigma) in &[(0.5, 0.3), (0.3, 0.1), (0.7, 0.5)] {
        let af = ApproximationFunction::Power { alpha };
        let (lg, _) = log_gamma_ab(&af, GammaQuery { a: 2, b: 3, sigma }).unwrap();
        let g = |t: f64| 2.0 * t.ln_1p() + 3.0 * t.powf(alpha) / alpha - t * sigma;
        let best = (0..2_000_000).map(|i| g(i as f64 * 1e-3 * (1.0 + 40.0 / sigma))).fold(f64::NEG_INFINITY, f64::max);
        assert!(lg >= best - 1e-9 && lg <= best + 1e-6 * best.abs().max(1.0), "α={alpha} σ={sigma}: {lg} vs {best}");
    }
}

#[test]
fn schedule_follows_its_recursions() {
    let p = ScheduleParams {
        gamma0: 0.1,
        rho0: 0.05,
        r0: 1.0,
        s0: 1.0,
        sigma_total: 0.3,
        kappa: 4.0 / 3.0,
        c_star: 2.0,
        eps0: 1e-3,
        af: ApproximationFunction::power(0.5).unwrap(),
        nu_max: 4,
        k0: 8,
        k_cap: 8,
    };
    let s = build_schedule(&p).unwrap();
    for nu in 0..s.gamma.len() {
        let scale = 2f64.powi(-(nu as i32));
        assert!((s.gamma[nu] - 0.05 * (1.0 + scale)).abs() < 1e-15);
        assert!((s.delta[nu] - 0.05 * scale / 16.0).abs() < 1e-15);
        assert!(s.gamma[nu] >= p.gamma0 / 2.0 && s.rho[nu] >= p.rho0 / 2.0);
        assert!(s.r[nu] > 0.0 && s.s[nu] == 4f64.powi(-(nu as i32)));
        assert!((1..=8).contains(&s.k_used[nu]));
        if nu > 0 {
            let want = s.log_big_gamma[nu - 1] + p.kappa * s.log_eps[nu - 1];
            assert!((s.log_eps[nu] - want).abs() < 1e-12 * want.abs());
        }
    }
    assert!(s.xi.certified());
}

#[test]
fn wave_frequencies_are_square_roots() {
    for m in [0.5, 1.0, 3.0] {
        let nf = normal_form(ModelKind::Wave, m, &[1.0], 64);
        for j in 0..64 {
            let jj = (j + 1) as f64;
            assert!((nf.big_omega(j) - (jj * jj + m).sqrt()).abs() <= 4.0 * f64::EPSILON * jj);
        }
    }
}

/// With P = 0 the direct integration and the reduced reconstruction through
/// the identity map describe the same rotation.
#[test]
fn unperturbed_direct_and_reduced_agree() {
    let nf = normal_form(ModelKind::HalfWave, 0.0, &[1.3], 6);
    let p = QuadHam::new(1, 6, 2, weights());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z: Vec<C64> = (0..6).map(|_| cplx(&mut rng)).collect();
    let z0: Vec<C64> = z.iter().copied().chain(z.iter().map(|x| x.conj())).collect();
    let direct = integrate_direct(&nf, &p, &z0, 20.0, 20_000, 1000).unwrap();
    let id = SymplecticMap::identity(1, 6, 9);
    let reduced = integrate_reduced(&nf, &id, &z0, &direct.times, 0.0, 0.0).unwrap();
    assert!(sup_relative_error(&direct, &reduced, 0.0, 0.0).unwrap() <= 1e-9);
}

/// ż = iAz with A = [[Ω₁, c], [c, Ω₂]] from P = c(z₁z̄₂ + z₂z̄₁).
fn coupled_pair(steps: usize) -> (f64, f64) {
    let nf = NormalForm::new(vec![1.0], vec![0.0, 0.0], 1.0);
    let c = 0.3;
    let mut p = QuadHam::new(1, 2, 1, weights());
    p.add_h11(&[0], 0, 1, C64::new(c, 0.0));
    p.add_h11(&[0], 1, 0, C64::new(c, 0.0));
    let z0 = [C64::new(0.6, 0.2), C64::new(-0.1, 0.7)];
    let stacked: Vec<C64> = z0.iter().copied().chain(z0.iter().map(|x| x.conj())).collect();
    let t_end = 10.0;
    let traj = integrate_direct(&nf, &p, &stacked, t_end, steps, steps).unwrap();
    let a = nalgebra::Matrix2::new(C64::new(0.0, 1.0), C64::new(0.0, c), C64::new(0.0, c), C64::new(0.0, 2.0)) * C64::new(t_end, 0.0);
    let exact = a.exp() * nalgebra::Vector2::new(z0[0], z0[1]);
    let last = traj.states.last().unwrap();
    let err = ((last[0] - exact[0]).norm()).max((last[1] - exact[1]).norm());
    let conj = ((last[2] - last[0].conj()).norm()).max((last[3] - last[1].conj()).norm());
    (err, conj)
}

#[test]
fn rk4_matches_the_matrix_exponential_with_fourth_order() {
    let (fine, conj) = coupled_pair(4000);
    assert!(fine <= 1e-8, "{fine}");
    assert!(conj <= 1e-12);
    let (e1, _) = coupled_pair(200);
    let (e2, _) = coupled_pair(400);
    let ratio = e1 / e2;
    assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "ratio {ratio}");
}
