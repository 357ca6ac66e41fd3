//! Time-1 flows of quadratic generators. On each θ-grid point the flow acts
//! as Z ↦ L(θ)Z with L = exp(i𝕁S_F(θ)) and shifts the actions by
//! ½ZᵀM_h(θ)Z, M_h = −∫₀¹ L(τ)ᵀ ∂_{θ_h}S_F L(τ) dτ.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamrep::{l1, tl_seminorm, Mode, QuadHam, TLMatrix};
use crate::linalg::{czero, expm_minus_identity, j_times, max_abs, sympl_j, CMat, C64, I};
use crate::numeric::gauss_legendre01;
use crate::smalldiv::NormalForm;

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    /// Grid points per angle; must be odd.
    pub grid: usize,
    /// Quadrature agreement tolerance (max-abs, relative to ‖∂_θS_F‖).
    pub tol: f64,
    /// Smallness threshold on vf_norm(F) + ⟨F⟩_ρ; None disables the check.
    pub threshold: Option<f64>,
    pub rho: f64,
}

impl FlowConfig {
    pub fn for_capacity(k_cap: usize) -> Self {
        FlowConfig { grid: 4 * k_cap + 1, tol: 1e-12, threshold: None, rho: 0.1 }
    }
}

/// Per-point data of a symplectic linear map with action shift.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMap {
    pub n: usize,
    pub j: usize,
    pub grid: usize,
    /// B = L − I per grid point (last angle fastest).
    pub b: Vec<CMat>,
    /// M_h per grid point.
    pub m: Vec<Vec<CMat>>,
    pub quad_nodes: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MapReport {
    pub max_symplectic_defect: f64,
    pub max_deviation: f64,
    pub max_cond: f64,
}

pub fn theta_grid(n: usize, g: usize) -> Vec<Vec<f64>> {
    let step = 2.0 * std::f64::consts::PI / g as f64;
    let total = g.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            let mut th = vec![0.0; n];
            for h in (0..n).rev() {
                th[h] = (idx % g) as f64 * step;
                idx /= g;
            }
            th
        })
        .collect()
}

impl SymplecticMap {
    pub fn identity(n: usize, j: usize, grid: usize) -> Self {
        let pts = grid.pow(n as u32);
        SymplecticMap {
            n,
            j,
            grid,
            b: vec![czero(2 * j, 2 * j); pts],
            m: vec![vec![czero(2 * j, 2 * j); n]; pts],
            quad_nodes: 0,
        }
    }

    pub fn points(&self) -> usize {
        self.b.len()
    }

    pub fn l(&self, idx: usize) -> CMat {
        &self.b[idx] + CMat::identity(2 * self.j, 2 * self.j)
    }

    /// max over grid points of |LᵀJL − J|, evaluated as |BᵀJ + JB + BᵀJB|.
    pub fn symplectic_defect(&self) -> f64 {
        let jm = sympl_j(self.j);
        self.b
            .iter()
            .map(|b| {
                let bt = b.transpose();
                max_abs(&(&bt * &jm + &jm * b + &bt * &jm * b))
            })
            .fold(0.0, f64::max)
    }

    pub fn report(&self) -> MapReport {
        let mut max_dev: f64 = 0.0;
        let mut max_cond: f64 = 0.0;
        for idx in 0..self.points() {
            max_dev = max_dev.max(max_abs(&self.b[idx]));
            max_cond = max_cond.max(cond1(&self.l(idx)));
        }
        MapReport { max_symplectic_defect: self.symplectic_defect(), max_deviation: max_dev, max_cond }
    }

    /// Condition-number CSV: point, cond(L).
    pub fn cond_csv(&self) -> String {
        let mut s = String::from("point,cond\n");
        for idx in 0..self.points() {
            s.push_str(&format!("{},{:.16e}\n", idx, cond1(&self.l(idx))));
        }
        s
    }

    /// Fourier coefficients of B for all modes of the grid box.
    pub fn fourier_b(&self) -> BTreeMap<Mode, CMat> {
        dft(self.n, self.grid, &self.b)
    }

    /// L(θ) by trigonometric interpolation of the grid values.
    pub fn eval_l(&self, coeffs: &BTreeMap<Mode, CMat>, theta: &[f64]) -> CMat {
        let mut l = CMat::identity(2 * self.j, 2 * self.j);
        for (k, c) in coeffs {
            l += c * crate::hamrep::phase(k, theta);
        }
        l
    }

    /// Jacobian minus identity as a TL matrix, modes with |k|₁ ≤ k_cap.
    pub fn jacobian_minus_identity(&self, k_cap: usize, r: f64) -> TLMatrix {
        let mut t = TLMatrix::zeros(self.n, self.j, k_cap, r);
        for (k, c) in self.fourier_b() {
            if l1(&k) <= k_cap {
                t.coeffs.insert(k, c);
            }
        }
        t
    }
}

fn cond1(l: &CMat) -> f64 {
    let inv = crate::linalg::symplectic_inverse(l);
    crate::linalg::norm1(l) * crate::linalg::norm1(&inv)
}

/// Checks vf_norm(F) + ⟨F⟩_ρ against the smallness threshold.
pub fn check_smallness(f: &QuadHam, rho: f64, threshold: f64) -> Result<f64> {
    let size = f.vf_norm() + tl_seminorm(f, rho).combined;
    if !(size < threshold) {
        return Err(Error::FlowDomain { size, threshold });
    }
    Ok(size)
}

fn m_estimate(a: &CMat, d: &[CMat], nodes: usize) -> Vec<CMat> {
    let (xs, ws) = gauss_legendre01(nodes);
    let n2 = a.nrows();
    let mut out = vec![czero(n2, n2); d.len()];
    for (x, w) in xs.iter().zip(&ws) {
        let l = expm_minus_identity(&(a * C64::new(*x, 0.0))) + CMat::identity(n2, n2);
        let lt = l.transpose();
        for (o, dh) in out.iter_mut().zip(d) {
            *o -= &lt * dh * &l * C64::new(*w, 0.0);
        }
    }
    for o in out.iter_mut() {
        *o = (&*o + o.transpose()) * C64::new(0.5, 0.0);
    }
    out
}

pub fn flow_map(f: &QuadHam, cfg: &FlowConfig) -> Result<SymplecticMap> {
    if cfg.grid.is_multiple_of(2) || cfg.grid == 0 {
        return Err(Error::GridMismatch(format!("grid size must be odd, got {}", cfg.grid)));
    }
    if let Some(th) = cfg.threshold {
        check_smallness(f, cfg.rho, th)?;
    }
    let (n, jn) = (f.n, f.j);
    let derivs: Vec<QuadHam> = (0..n).map(|h| f.theta_derivative(h)).collect();
    let thetas = theta_grid(n, cfg.grid);
    let res: Vec<(CMat, Vec<CMat>, usize)> = thetas
        .par_iter()
        .map(|th| {
            let a = j_times(&f.eval_stacked(th)) * I;
            let b = expm_minus_identity(&a);
            let d: Vec<CMat> = derivs.iter().map(|q| q.eval_stacked(th)).collect();
            let scale = d.iter().map(max_abs).fold(0.0, f64::max);
            if scale == 0.0 {
                return (b, vec![czero(2 * jn, 2 * jn); n], 0);
            }
            let mut nodes = 8;
            let mut prev = m_estimate(&a, &d, 4);
            loop {
                let cur = m_estimate(&a, &d, nodes);
                let diff = cur.iter().zip(&prev).map(|(x, y)| max_abs(&(x - y))).fold(0.0, f64::max);
                if diff <= cfg.tol * scale || nodes >= 64 {
                    return (b, cur, nodes);
                }
                prev = cur;
                nodes *= 2;
            }
        })
        .collect();
    let quad_nodes = res.iter().map(|x| x.2).max().unwrap_or(0);
    let (b, m): (Vec<CMat>, Vec<Vec<CMat>>) = res.into_iter().map(|(b, m, _)| (b, m)).unzip();
    Ok(SymplecticMap { n, j: jn, grid: cfg.grid, b, m, quad_nodes })
}

/// Multi-dimensional DFT of grid values, returning coefficients for modes
/// −(G−1)/2..(G−1)/2 per angle.
pub fn dft(n: usize, g: usize, vals: &[CMat]) -> BTreeMap<Mode, CMat> {
    let half = (g / 2) as i32;
    let mut data: Vec<CMat> = vals.to_vec();
    let tw: Vec<Vec<C64>> = (0..g)
        .map(|m| {
            let freq = m as i32 - half;
            (0..g)
                .map(|q| {
                    let ang = -2.0 * std::f64::consts::PI * (freq as f64) * q as f64 / g as f64;
                    C64::new(ang.cos(), ang.sin()) / g as f64
                })
                .collect()
        })
        .collect();
    for h in 0..n {
        let stride = g.pow((n - 1 - h) as u32);
        let block = stride * g;
        let mut next = data.clone();
        let shape = (data[0].nrows(), data[0].ncols());
        next.par_iter_mut().enumerate().for_each(|(idx, out)| {
            let base = (idx / block) * block + idx % stride;
            let m = (idx % block) / stride;
            let mut acc = CMat::zeros(shape.0, shape.1);
            for q in 0..g {
                acc += &data[base + q * stride] * tw[m][q];
            }
            *out = acc;
        });
        data = next;
    }
    let mut out = BTreeMap::new();
    for (idx, c) in data.into_iter().enumerate() {
        let mut k = vec![0i32; n];
        let mut x = idx;
        for h in (0..n).rev() {
            k[h] = (x % g) as i32 - half;
            x /= g;
        }
        if max_abs(&c) > 0.0 {
            out.insert(k, c);
        }
    }
    out
}

fn stacked_normal_form(nf: &NormalForm, jn: usize) -> CMat {
    let mut s = czero(2 * jn, 2 * jn);
    for i in 0..jn {
        let o = C64::new(nf.big_omega(i), 0.0);
        s[(i, jn + i)] = o;
        s[(jn + i, i)] = o;
    }
    s
}

/// Grid values of BᵀS + SB + BᵀSB (+ Σω_h M_h when ω is given), i.e. of
/// LᵀSL − S plus the action shift.
fn pullback_delta<F>(map: &SymplecticMap, s_at: F, omega: Option<&[f64]>) -> Vec<CMat>
where
    F: Fn(&[f64]) -> CMat + Sync,
{
    let thetas = theta_grid(map.n, map.grid);
    thetas
        .par_iter()
        .enumerate()
        .map(|(idx, th)| {
            let s = s_at(th);
            let b = &map.b[idx];
            let sb = &s * b;
            let mut d = b.transpose() * &sb + &sb + sb.transpose();
            if let Some(w) = omega {
                for (h, mh) in map.m[idx].iter().enumerate() {
                    d += mh * C64::new(w[h], 0.0);
                }
            }
            d
        })
        .collect()
}

fn check_grid(p: &QuadHam, map: &SymplecticMap) -> Result<()> {
    if p.n != map.n || p.j != map.j {
        return Err(Error::GridMismatch(format!(
            "Hamiltonian (n={}, J={}) vs map (n={}, J={})",
            p.n, p.j, map.n, map.j
        )));
    }
    if map.grid < 2 * p.k_cap + 1 {
        return Err(Error::GridMismatch(format!("grid {} too coarse for K_cap {}", map.grid, p.k_cap)));
    }
    Ok(())
}

/// (N + P)∘Φ = N + P₊ on the grid; returns P₊. Modes beyond K_cap go to
/// the tail.
pub fn transform_flow(nf: &NormalForm, p: &QuadHam, map: &SymplecticMap) -> Result<QuadHam> {
    check_grid(p, map)?;
    let sn = stacked_normal_form(nf, p.j);
    let vals = pullback_delta(map, |th| &sn + p.eval_stacked(th), Some(&nf.omega));
    let delta = QuadHam::from_stacked(p.n, p.j, p.k_cap, p.w, &dft(map.n, map.grid, &vals));
    let mut out = p.clone();
    out.limits = None;
    let tail = delta.tail_norm;
    out.axpy(C64::new(1.0, 0.0), &delta)?;
    out.tail_norm += tail;
    Ok(out)
}

/// R∘Φ for a quadratic R without action terms.
pub fn transform_quadratic(r: &QuadHam, map: &SymplecticMap) -> Result<QuadHam> {
    check_grid(r, map)?;
    let vals = pullback_delta(map, |th| r.eval_stacked(th), None);
    let delta = QuadHam::from_stacked(r.n, r.j, r.k_cap, r.w, &dft(map.n, map.grid, &vals));
    let mut out = r.clone();
    out.limits = None;
    let tail = delta.tail_norm;
    out.axpy(C64::new(1.0, 0.0), &delta)?;
    out.tail_norm += tail;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LieResult {
    /// P₊ with (N + P)∘X¹_F = N + P₊.
    pub p: QuadHam,
    pub terms: usize,
    /// Geometric bound on the dropped terms.
    pub tail_bound: f64,
}

/// Default Lie-series order.
pub const LIE_M_MAX: usize = 20;

/// Σ_m ad_F^m(N + P)/m! with ad_F(G) = {G, F}, ad_F(ω·I) = −ω·∂_θF.
pub fn transform_lie(nf: &NormalForm, p: &QuadHam, f: &QuadHam, m_max: usize, tol: f64) -> Result<LieResult> {
    let mut nq = p.zeros_like();
    let zero = vec![0i32; p.n];
    for i in 0..p.j {
        nq.add_h11(&zero, i, i, C64::new(nf.big_omega(i), 0.0));
    }
    let mut h = nq.clone();
    h.axpy(C64::new(1.0, 0.0), p)?;
    let mut term = crate::hamrep::poisson_bracket(&h, f)?;
    term.axpy(C64::new(-1.0, 0.0), &f.omega_derivative(&nf.omega))?;
    let mut out = p.clone();
    out.limits = None;
    let mut prev = term.vf_norm();
    out.axpy(C64::new(1.0, 0.0), &term)?;
    let mut terms = 1;
    let mut tail_bound = 0.0;
    if prev == 0.0 {
        return Ok(LieResult { p: out, terms, tail_bound });
    }
    for m in 2..=m_max {
        let mut next = crate::hamrep::poisson_bracket(&term, f)?;
        next = next.scaled(C64::new(1.0 / m as f64, 0.0));
        let nn = next.vf_norm();
        if !(nn < prev) {
            return Err(Error::LieDivergence { m, norm: nn, prev });
        }
        out.axpy(C64::new(1.0, 0.0), &next)?;
        terms = m;
        let ratio = if prev > 0.0 { nn / prev } else { 0.0 };
        term = next;
        prev = nn;
        if nn <= tol * out.vf_norm().max(f64::MIN_POSITIVE) || nn == 0.0 {
            tail_bound = if ratio < 1.0 { nn * ratio / (1.0 - ratio) } else { nn };
            break;
        }
        tail_bound = if ratio < 1.0 { nn * ratio / (1.0 - ratio) } else { f64::INFINITY };
    }
    Ok(LieResult { p: out, terms, tail_bound })
}

/// Φ_a∘Φ_b: L = L_a L_b, M = M_b + L_bᵀ M_a L_b.
pub fn compose(a: &SymplecticMap, b: &SymplecticMap) -> Result<SymplecticMap> {
    if a.n != b.n || a.j != b.j || a.grid != b.grid {
        return Err(Error::GridMismatch("composed maps live on different grids".into()));
    }
    let nb: Vec<CMat> = a.b.iter().zip(&b.b).map(|(x, y)| x + y + x * y).collect();
    let nm: Vec<Vec<CMat>> = (0..a.points())
        .map(|idx| {
            let lb = b.l(idx);
            let lbt = lb.transpose();
            a.m[idx]
                .iter()
                .zip(&b.m[idx])
                .map(|(ma, mb)| {
                    let x = mb + &lbt * ma * &lb;
                    (&x + x.transpose()) * C64::new(0.5, 0.0)
                })
                .collect()
        })
        .collect();
    Ok(SymplecticMap { n: a.n, j: a.j, grid: a.grid, b: nb, m: nm, quad_nodes: a.quad_nodes.max(b.quad_nodes) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamrep::Weights;

    #[test]
    fn zero_generator_is_identity() {
        let f = QuadHam::new(1, 3, 2, Weights::default());
        let map = flow_map(&f, &FlowConfig::for_capacity(2)).unwrap();
        assert!(map.b.iter().all(|b| max_abs(b) == 0.0));
        assert!(map.m.iter().flatten().all(|m| max_abs(m) == 0.0));
    }

    #[test]
    fn constant_diagonal_generator_rotates_phase() {
        let mut f = QuadHam::new(1, 2, 1, Weights::default());
        f.add_h11(&[0], 0, 0, C64::new(0.3, 0.0));
        let map = flow_map(&f, &FlowConfig::for_capacity(1)).unwrap();
        let l = map.l(0);
        assert!((l[(0, 0)] - C64::new(0.0, 0.3).exp()).norm() < 1e-15);
        assert!((l[(2, 2)] - C64::new(0.0, -0.3).exp()).norm() < 1e-15);
        assert!((l[(1, 1)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dft_recovers_coefficients() {
        let mut f = QuadHam::new(2, 2, 2, Weights::default());
        f.add_h11(&[1, -1], 0, 1, C64::new(0.5, 0.25));
        f.add_h11(&[0, 2], 1, 1, C64::new(-1.0, 0.0));
        let g = 5;
        let vals: Vec<CMat> = theta_grid(2, g).iter().map(|t| f.eval_stacked(t)).collect();
        let c = dft(2, g, &vals);
        let back = QuadHam::from_stacked(2, 2, 2, f.w, &c);
        assert!(back.sub(&f).unwrap().vf_norm() < 1e-14);
    }
}
