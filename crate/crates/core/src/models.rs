//! Mode-space Hamiltonians of the derivative wave and half-wave equations
//! with Dirichlet conditions, built from a potential V(θ, x) = Σ Ṽ_j(θ) cos jx.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamrep::{coeff_fourier_norm, l1, modes_upto, tl_seminorm, Mode, QuadHam, Series, TLReport, ToeplitzLimits, Weights};
use crate::linalg::C64;
use crate::smalldiv::NormalForm;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    pub n: usize,
    /// Ṽ_j at index j.
    pub tilde: Vec<Series>,
    pub a: f64,
    pub p: f64,
    /// Declared bound C_V on ‖V‖.
    pub c_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Wave,
    HalfWave,
}

fn one_harmonic(n: usize, c: f64) -> Series {
    let mut s = Series::new();
    let mut k = vec![0i32; n];
    s.insert(k.clone(), C64::new(c, 0.0));
    k[0] = 1;
    s.insert(k.clone(), C64::new(c / 2.0, 0.0));
    k[0] = -1;
    s.insert(k, C64::new(c / 2.0, 0.0));
    s
}

impl Potential {
    pub fn zero(n: usize) -> Self {
        Potential { n, tilde: vec![Series::new()], a: 0.0, p: 0.0, c_v: 0.0 }
    }

    /// Ṽ₁ = c(1 + cos θ₁); C_V is ‖V‖ on the strip r.
    pub fn single_cosine(n: usize, c: f64, a: f64, p: f64, r: f64) -> Self {
        let mut v = Potential { n, tilde: vec![Series::new(), one_harmonic(n, c)], a, p, c_v: 0.0 };
        v.c_v = v.norm(r);
        v
    }

    /// θ-independent Ṽ_l = c for one l.
    pub fn single_mode(n: usize, l: usize, c: f64) -> Self {
        let mut tilde = vec![Series::new(); l + 1];
        tilde[l].insert(vec![0; n], C64::new(c, 0.0));
        let mut v = Potential { n, tilde, a: 0.0, p: 0.0, c_v: 0.0 };
        v.c_v = v.norm(0.0);
        v
    }

    /// Ṽ_j = c e^{−2aj} j^{−p} (1 + cos θ₁) for 1 ≤ j ≤ j_v.
    pub fn geometric(n: usize, c: f64, a: f64, p: f64, r: f64, j_v: usize) -> Self {
        let mut tilde = vec![Series::new()];
        for j in 1..=j_v {
            let amp = c * (-2.0 * a * j as f64).exp() * (j as f64).powf(-p);
            tilde.push(one_harmonic(n, amp));
        }
        let mut v = Potential { n, tilde, a, p, c_v: 0.0 };
        v.c_v = v.norm(r);
        v
    }

    /// Seeded random real coefficients under the envelope
    /// c e^{−2aj} j^{−p} e^{−|k|r}, rescaled so that ‖V‖_r = c.
    #[allow(clippy::too_many_arguments)]
    pub fn random_analytic(n: usize, c: f64, a: f64, p: f64, r: f64, j_v: usize, k_v: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tilde = Vec::with_capacity(j_v + 1);
        for j in 0..=j_v {
            let env = if j == 0 { 1.0 } else { (-2.0 * a * j as f64).exp() * (j as f64).powf(-p) };
            let mut s = Series::new();
            for k in modes_upto(n, k_v) {
                let neg: Mode = k.iter().map(|x| -x).collect();
                if neg < k {
                    continue;
                }
                let mag = env * (-(l1(&k) as f64) * r).exp();
                let v = C64::new(rng.gen_range(-1.0..1.0), if neg == k { 0.0 } else { rng.gen_range(-1.0..1.0) }) * mag;
                s.insert(k.clone(), v);
                if neg != k {
                    s.insert(neg, v.conj());
                }
            }
            tilde.push(s);
        }
        let mut v = Potential { n, tilde, a, p, c_v: c };
        let nv = v.norm(r);
        if nv > 0.0 {
            for s in v.tilde.iter_mut() {
                for x in s.values_mut() {
                    *x *= c / nv;
                }
            }
        }
        v
    }

    pub fn v(&self, l: usize) -> Option<&Series> {
        self.tilde.get(l).filter(|s| !s.is_empty())
    }

    /// ‖V‖ = ‖Ṽ₀‖ + Σ_{j≥1} j^p e^{2aj} ‖Ṽ_j‖ at strip width r.
    pub fn norm(&self, r: f64) -> f64 {
        self.tilde
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let w = if j == 0 { 1.0 } else { (j as f64).powf(self.p) * (2.0 * self.a * j as f64).exp() };
                w * coeff_fourier_norm(s, r)
            })
            .sum()
    }

    /// Largest index with nonzero Ṽ_j.
    pub fn support(&self) -> usize {
        self.tilde.iter().rposition(|s| !s.is_empty()).unwrap_or(0)
    }

    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.tilde {
            for (k, v) in s {
                let neg: Mode = k.iter().map(|x| -x).collect();
                let w = s.get(&neg).copied().unwrap_or(C64::new(0.0, 0.0));
                worst = worst.max((v - w.conj()).norm());
            }
        }
        worst
    }

    fn modes(&self) -> Vec<Mode> {
        let mut m: Vec<Mode> = self.tilde.iter().flat_map(|s| s.keys().cloned()).collect();
        m.sort();
        m.dedup();
        m
    }
}

/// ∫V φ_iφ_j for mode numbers i, j ≥ 1 and one Fourier index:
/// Ṽ₀δ_ij + ½(Ṽ_{|i−j|}[i≠j] − Ṽ_{i+j}).
pub fn p_entry(v: &Potential, k: &[i32], i: usize, j: usize) -> C64 {
    let get = |l: usize| v.tilde.get(l).and_then(|s| s.get(k)).copied().unwrap_or(C64::new(0.0, 0.0));
    let mut x = -get(i + j) * 0.5;
    if i == j {
        x += get(0);
    } else {
        x += get(i.abs_diff(j)) * 0.5;
    }
    x
}

fn check_inputs(v: &Potential, j: usize) -> Result<()> {
    if j < 2 {
        return Err(Error::Domain(format!("model needs J >= 2, got {j}")));
    }
    if v.tilde.is_empty() {
        return Err(Error::Domain("potential has no coefficients".into()));
    }
    Ok(())
}

/// Message when the potential support is shorter than 2J.
pub fn support_warning(v: &Potential, j: usize) -> Option<String> {
    let jv = v.support();
    (jv < 2 * j).then(|| format!("potential support J_V = {jv} < 2J = {}; entries beyond it are zero", 2 * j))
}

fn build(kind: ModelKind, eps: f64, v: &Potential, jn: usize, k_cap: usize, w: Weights) -> QuadHam {
    let mut p = QuadHam::new(v.n, jn, k_cap, w);
    let mut over = QuadHam::new(v.n, jn, usize::MAX, w);
    for k in v.modes() {
        let target = if l1(&k) <= k_cap { &mut p } else { &mut over };
        for i in 0..jn {
            for j in 0..jn {
                let x = p_entry(v, &k, i + 1, j + 1);
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                target.add_h11(&k, i, j, x * eps);
                if kind == ModelKind::Wave && i <= j {
                    target.set_s20(&k, i, j, x * (eps / 2.0));
                    target.set_s02(&k, i, j, x * (eps / 2.0));
                }
            }
        }
    }
    p.prune();
    p.tail_norm = over.vf_norm();
    let mut lim = BTreeMap::new();
    for d in -(jn as i64 - 1)..=(jn as i64 - 1) {
        let l = d.unsigned_abs() as usize;
        let Some(s) = v.v(l) else { continue };
        let f = if d == 0 { eps } else { eps / 2.0 };
        let s: Series = s.iter().filter(|(k, _)| l1(k) <= k_cap).map(|(k, x)| (k.clone(), x * f)).collect();
        lim.insert(d, s);
    }
    p.limits = Some(ToeplitzLimits { h11: lim });
    p
}

/// λ_j = √(j² + m), S20 = S02 = (ε/2)p, H11 = εp.
pub fn wave_hamiltonian(m: f64, eps: f64, v: &Potential, jn: usize, k_cap: usize, w: Weights, omega: &[f64]) -> Result<(NormalForm, QuadHam)> {
    check_inputs(v, jn)?;
    if !(m >= 0.0) {
        return Err(Error::Domain(format!("mass must be non-negative, got {m}")));
    }
    check_omega(v, omega)?;
    Ok((normal_form(ModelKind::Wave, m, omega, jn), build(ModelKind::Wave, eps, v, jn, k_cap, w)))
}

/// λ_j = j, only H11 = εp.
pub fn halfwave_hamiltonian(eps: f64, v: &Potential, jn: usize, k_cap: usize, w: Weights, omega: &[f64]) -> Result<(NormalForm, QuadHam)> {
    check_inputs(v, jn)?;
    check_omega(v, omega)?;
    Ok((normal_form(ModelKind::HalfWave, 0.0, omega, jn), build(ModelKind::HalfWave, eps, v, jn, k_cap, w)))
}

/// Unperturbed normal form: Ω̆_j = λ_j − j, i.e. m/(√(j²+m) + j) for the
/// wave and 0 for the half-wave.
pub fn normal_form(kind: ModelKind, m: f64, omega: &[f64], jn: usize) -> NormalForm {
    let (breve, a0) = match kind {
        ModelKind::Wave => ((1..=jn).map(|j| m / (((j * j) as f64 + m).sqrt() + j as f64)).collect(), 1.0 + m),
        ModelKind::HalfWave => (vec![0.0; jn], 1.0),
    };
    let mut nf = NormalForm::new(omega.to_vec(), breve, a0);
    nf.breve_limit = Some(0.0);
    nf
}

fn check_omega(v: &Potential, omega: &[f64]) -> Result<()> {
    if omega.len() != v.n {
        return Err(Error::DimensionMismatch(format!("ω has {} entries, potential n = {}", omega.len(), v.n)));
    }
    Ok(())
}

pub fn build_model(kind: ModelKind, m: f64, eps: f64, v: &Potential, jn: usize, k_cap: usize, w: Weights, omega: &[f64]) -> Result<(NormalForm, QuadHam)> {
    match kind {
        ModelKind::Wave => wave_hamiltonian(m, eps, v, jn, k_cap, w, omega),
        ModelKind::HalfWave => halfwave_hamiltonian(eps, v, jn, k_cap, w, omega),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub a0: f64,
    pub max_breve: f64,
    pub asymptotics_holds: bool,
    pub potential_norm: f64,
    pub potential_holds: bool,
    pub vf_norm: f64,
    /// The bound with 12 and with 2⁴ in the constant; the larger is asserted.
    pub vf_bound_12: f64,
    pub vf_bound_16: f64,
    pub vf_holds: bool,
    pub eps0: f64,
    pub tl: TLReport,
    pub tl_holds: bool,
    pub reality_defect: f64,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.asymptotics_holds && self.potential_holds && self.vf_holds && self.tl_holds
    }
}

/// Checks |Ω̆_j| ≤ A₀, ‖V‖ ≤ C_V, the vf_norm bound and ⟨P⟩_{2a} ≤ ε₀.
pub fn verify_assumptions(kind: ModelKind, nf: &NormalForm, p: &QuadHam, v: &Potential, eps: f64) -> AssumptionReport {
    let (r, n, pw, a) = (p.w.r, p.n as f64, v.p, v.a);
    let geo = match kind {
        ModelKind::Wave => 18.0 * n / r,
        ModelKind::HalfWave => n / (2.0 * r),
    };
    let base = 2f64.powf(pw + 1.0);
    let vf_bound_12 = (base + 12.0 + geo) * v.c_v * eps;
    let vf_bound_16 = (base + 16.0 + geo) * v.c_v * eps;
    let eps0 = vf_bound_16;
    let vf = p.vf_norm();
    let rho = 2.0 * a;
    let tl = if rho > 0.0 {
        tl_seminorm(p, rho)
    } else {
        TLReport { m1: f64::NAN, m3: f64::NAN, combined: f64::NAN }
    };
    let max_breve = nf.omega_breve.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pn = v.norm(r);
    AssumptionReport {
        a0: nf.a0,
        max_breve,
        asymptotics_holds: nf.a0_holds(),
        potential_norm: pn,
        potential_holds: pn <= v.c_v * (1.0 + 1e-12),
        vf_norm: vf,
        vf_bound_12,
        vf_bound_16,
        vf_holds: vf <= vf_bound_16.max(vf_bound_12),
        eps0,
        tl,
        tl_holds: tl.combined <= eps0,
        reality_defect: p.reality_defect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_formula_examples() {
        let v = Potential::single_mode(1, 1, 1.0);
        assert_eq!(p_entry(&v, &[0], 1, 2), C64::new(0.5, 0.0));
        assert_eq!(p_entry(&v, &[0], 2, 2), C64::new(0.0, 0.0));
        assert_eq!(p_entry(&v, &[0], 1, 3), C64::new(0.0, 0.0));
        let v = Potential::single_mode(1, 2, 1.0);
        assert_eq!(p_entry(&v, &[0], 1, 1), C64::new(-0.5, 0.0));
        assert_eq!(p_entry(&v, &[0], 1, 3), C64::new(0.5, 0.0));
    }

    #[test]
    fn wave_frequencies() {
        let v = Potential::zero(1);
        let (nf, p) = wave_hamiltonian(1.0, 1e-3, &v, 40, 2, Weights::default(), &[1.0]).unwrap();
        assert!(p.is_zero());
        assert!((nf.omega_breve[0] - 0.41421356237309503).abs() < 1e-15);
        assert!((nf.omega_breve[39] * 80.0 - 1.0).abs() < 1e-3);
    }
}
