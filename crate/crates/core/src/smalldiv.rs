//! Non-resonance margins, excluded-parameter fractions and the Rüssmann
//! sublevel-set bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approxfn::ApproximationFunction;
use crate::error::{DivisorKind, Error, Result};
use crate::hamrep::{l1, modes_upto, Mode};
use crate::numeric::{kdot, kdot_plus};

/// Tangential frequencies ω and normal frequencies Ω_j = j + Ω̆_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    pub omega: Vec<f64>,
    /// Ω̆_j at index j−1.
    pub omega_breve: Vec<f64>,
    pub a0: f64,
    /// Limit of Ω̆_j as j → ∞ when the model supplies it.
    pub breve_limit: Option<f64>,
}

impl NormalForm {
    pub fn new(omega: Vec<f64>, omega_breve: Vec<f64>, a0: f64) -> Self {
        NormalForm { omega, omega_breve, a0, breve_limit: None }
    }

    pub fn j(&self) -> usize {
        self.omega_breve.len()
    }

    /// Ω at 0-based index (mode number index+1).
    pub fn big_omega(&self, idx: usize) -> f64 {
        (idx + 1) as f64 + self.omega_breve[idx]
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.j()).map(|i| self.big_omega(i)).collect()
    }

    pub fn a0_holds(&self) -> bool {
        self.omega_breve.iter().all(|b| b.abs() <= self.a0)
    }

    /// Empirical minimal gap slope A₁ = min_j (Ω_{j+1} − Ω_j).
    pub fn min_gap(&self) -> f64 {
        let o = self.omegas();
        o.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// A₂ = (1 + 2A₁ + 2A₀)/A₁ with A₁ the empirical gap slope.
pub fn default_a2(nf: &NormalForm) -> f64 {
    let a1 = nf.min_gap();
    if !(a1 > 0.0) || !a1.is_finite() {
        return 1.0;
    }
    ((1.0 + 2.0 * a1 + 2.0 * nf.a0) / a1).max(1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceQuery {
    pub delta: ApproximationFunction,
    pub gamma: f64,
    pub k: usize,
    pub j: usize,
    pub a2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divisor {
    pub k: Mode,
    /// Mode numbers (1-based); 0 for the frequency family.
    pub i: usize,
    pub j: usize,
    pub kind: DivisorKind,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    pub worst: f64,
    pub argmin: Option<Divisor>,
}

/// min over all checked divisors of |divisor|·Δ(|k|), with its location.
fn min_weighted_divisor(
    omega: &[f64],
    nf: &NormalForm,
    delta: &ApproximationFunction,
    kmax: usize,
    jmax: usize,
    a2: f64,
) -> (f64, Option<Divisor>) {
    let jn = jmax.min(nf.j());
    let om: Vec<f64> = (0..jn).map(|i| nf.big_omega(i)).collect();
    let max_breve = nf.omega_breve[..jn].iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let mut best = f64::INFINITY;
    let mut arg: Option<Divisor> = None;
    let mut consider = |v: f64, dk: f64, k: &Mode, i: usize, j: usize, kind: DivisorKind, best: &mut f64| {
        let w = v.abs() * dk;
        if w < *best {
            *best = w;
            arg = Some(Divisor { k: k.clone(), i, j, kind, value: v });
        }
    };
    for k in modes_upto(omega.len(), kmax) {
        let kk = l1(&k);
        let dk = delta.at(kk as f64);
        let kw = kdot(&k, omega);
        if kk > 0 {
            consider(kw, dk, &k, 0, 0, DivisorKind::Frequency, &mut best);
        }
        for i in 0..jn {
            for j in i..jn {
                let lb = (i + j + 2) as f64 - 2.0 * max_breve - kw.abs();
                if lb * dk >= best {
                    break;
                }
                let v = kdot_plus(&k, omega, &[om[i], om[j]]);
                consider(v, dk, &k, i + 1, j + 1, DivisorKind::Plus, &mut best);
            }
        }
        if kk > 0 {
            let range = (a2 * kk as f64).floor() as usize;
            for i in 0..jn {
                let lo = i.saturating_sub(range);
                let hi = (i + range).min(jn - 1);
                for j in lo..=hi {
                    let v = kdot_plus(&k, omega, &[om[i], -om[j]]);
                    consider(v, dk, &k, i + 1, j + 1, DivisorKind::Minus, &mut best);
                }
            }
        }
    }
    (best, arg)
}

pub fn min_margin(omega: &[f64], nf: &NormalForm, q: &ResonanceQuery) -> MarginReport {
    let (v, arg) = min_weighted_divisor(omega, nf, &q.delta, q.k, q.j, q.a2);
    MarginReport { worst: v / q.gamma, argmin: arg }
}

/// Sample points 2π(g + ½)/grid per dimension.
fn grid_points(n: usize, grid: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..grid).map(|g| 2.0 * std::f64::consts::PI * (g as f64 + 0.5) / grid as f64).collect();
    let mut pts = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::with_capacity(pts.len() * grid);
        for p in &pts {
            for &x in &axis {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

/// Fractions of grid samples with margin < 1, one per γ. The weighted
/// minimum divisor is γ-independent, so it is evaluated once per sample.
pub fn excluded_fractions<B>(q: &ResonanceQuery, gammas: &[f64], n: usize, builder: B, grid: usize) -> Result<Vec<f64>>
where
    B: Fn(&[f64]) -> NormalForm + Sync,
{
    if grid == 0 || n == 0 {
        return Err(Error::Domain("excluded_fraction needs grid >= 1 and n >= 1".into()));
    }
    let pts = grid_points(n, grid);
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|w| {
            let nf = builder(w);
            min_weighted_divisor(w, &nf, &q.delta, q.k, q.j, q.a2).0
        })
        .collect();
    let total = vals.len() as f64;
    Ok(gammas.iter().map(|&g| vals.iter().filter(|&&v| v < g).count() as f64 / total).collect())
}

pub fn excluded_fraction<B>(q: &ResonanceQuery, n: usize, builder: B, grid: usize) -> Result<f64>
where
    B: Fn(&[f64]) -> NormalForm + Sync,
{
    Ok(excluded_fractions(q, &[q.gamma], n, builder, grid)?[0])
}

/// Union-bound envelope for n = 1 and ω-independent Ω: each divisor kω + c
/// with k ≠ 0 excludes at most 2γ/(Δ(|k|)|k|) around −c/k.
pub fn union_bound_n1(q: &ResonanceQuery, nf: &NormalForm) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let jn = q.j.min(nf.j());
    let om: Vec<f64> = (0..jn).map(|i| nf.big_omega(i)).collect();
    let mut total = 0.0;
    let mut add = |k: i32, c: f64| {
        let kk = k.unsigned_abs() as f64;
        let half = q.gamma / (q.delta.at(kk) * kk);
        let center = -c / k as f64;
        if center > -half && center < two_pi + half {
            total += 2.0 * half;
        }
    };
    for k in -(q.k as i32)..=(q.k as i32) {
        if k == 0 {
            if om.iter().any(|a| om.iter().any(|b| (a + b).abs() < q.gamma)) {
                return 1.0;
            }
            continue;
        }
        add(k, 0.0);
        for i in 0..jn {
            for j in i..jn {
                add(k, om[i] + om[j]);
            }
        }
        let range = (q.a2 * k.unsigned_abs() as f64).floor() as usize;
        for i in 0..jn {
            for j in i.saturating_sub(range)..=(i + range).min(jn - 1) {
                add(k, om[i] - om[j]);
            }
        }
    }
    (total / two_pi).min(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RussmannReport {
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
    /// False when sampled |f⁽q⁾| falls below β.
    pub precondition_verified: bool,
}

fn factorial(q: u32) -> f64 {
    (1..=q).map(|x| x as f64).product()
}

/// Grid measure of {t ∈ [a, b] : |f(t)| ≤ ε} against 4(q!ε/(2β))^{1/q}.
pub fn russmann_check<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, q: u32, beta: f64, eps: f64, samples: usize) -> RussmannReport {
    let h = (b - a) / samples as f64;
    let mut inside = 0usize;
    for s in 0..samples {
        if f(a + (s as f64 + 0.5) * h).abs() <= eps {
            inside += 1;
        }
    }
    let measured = inside as f64 * h;
    let bound = 4.0 * (factorial(q) * eps / (2.0 * beta)).powf(1.0 / q as f64);
    let slack = 2.0 * (q as f64 + 1.0) * h;
    // q-th forward differences on a coarse sub-grid
    let hd = ((b - a) / 2000.0).max(1e-4 * (b - a));
    let mut min_deriv = f64::INFINITY;
    let mut t = a;
    while t + q as f64 * hd <= b + 1e-15 {
        let mut d = 0.0;
        for m in 0..=q {
            let c = factorial(q) / (factorial(m) * factorial(q - m));
            let sign = if (q - m).is_multiple_of(2) { 1.0 } else { -1.0 };
            d += sign * c * f(t + m as f64 * hd);
        }
        min_deriv = min_deriv.min((d / hd.powi(q as i32)).abs());
        t += hd;
    }
    let precondition_verified = min_deriv >= beta * (1.0 - 1e-3);
    RussmannReport { measured, bound, slack, holds: measured <= bound + slack, precondition_verified }
}
