use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{add_modes, coeff_fourier_norm, l1, mode_weight, neg_mode, Mode, Series};
use crate::error::{Error, Result};
use crate::linalg::{czero, is_zero, CMat, C64, I};

/// Analyticity data: θ-strip r, ball radius s, mode weights e^{aj} j^p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub r: f64,
    pub s: f64,
    pub a: f64,
    pub p: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { r: 0.5, s: 1.0, a: 0.0, p: 0.0 }
    }
}

/// Coefficient matrices of one Fourier index.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub s20: CMat,
    pub h11: CMat,
    pub s02: CMat,
}

impl Blocks {
    pub fn zeros(j: usize) -> Self {
        Blocks { s20: czero(j, j), h11: czero(j, j), s02: czero(j, j) }
    }

    pub fn is_zero(&self) -> bool {
        is_zero(&self.s20) && is_zero(&self.h11) && is_zero(&self.s02)
    }

    fn axpy(&mut self, a: C64, o: &Blocks) {
        self.s20 += &o.s20 * a;
        self.h11 += &o.h11 * a;
        self.s02 += &o.s02 * a;
    }

    fn scale(&mut self, a: C64) {
        self.s20 *= a;
        self.h11 *= a;
        self.s02 *= a;
    }
}

/// Model-supplied limits of the H11 entries along each diagonal d = i − j.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToeplitzLimits {
    pub h11: BTreeMap<i64, Series>,
}

impl ToeplitzLimits {
    fn scaled(&self, a: C64) -> Self {
        ToeplitzLimits {
            h11: self.h11.iter().map(|(d, s)| (*d, s.iter().map(|(k, v)| (k.clone(), v * a)).collect())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadHam {
    pub n: usize,
    pub j: usize,
    pub k_cap: usize,
    pub w: Weights,
    pub coeffs: BTreeMap<Mode, Blocks>,
    pub tail_norm: f64,
    pub limits: Option<ToeplitzLimits>,
}

#[inline]
fn mul_add(acc: &mut CMat, a: &CMat, b: &CMat, za: bool, zb: bool, sign: f64) {
    if za || zb {
        return;
    }
    let prod = a * b;
    if sign > 0.0 {
        *acc += prod;
    } else {
        *acc -= prod;
    }
}

impl QuadHam {
    pub fn new(n: usize, j: usize, k_cap: usize, w: Weights) -> Self {
        QuadHam { n, j, k_cap, w, coeffs: BTreeMap::new(), tail_norm: 0.0, limits: None }
    }

    pub fn zeros_like(&self) -> Self {
        QuadHam::new(self.n, self.j, self.k_cap, self.w)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|b| b.is_zero())
    }

    pub fn blocks(&self, k: &[i32]) -> Option<&Blocks> {
        self.coeffs.get(k)
    }

    pub fn blocks_mut(&mut self, k: &[i32]) -> &mut Blocks {
        assert_eq!(k.len(), self.n, "mode dimension");
        assert!(l1(k) <= self.k_cap, "mode {k:?} beyond capacity {}", self.k_cap);
        let j = self.j;
        self.coeffs.entry(k.to_vec()).or_insert_with(|| Blocks::zeros(j))
    }

    /// H11(k)_{ij} += v (0-based indices).
    pub fn add_h11(&mut self, k: &[i32], i: usize, j: usize, v: C64) {
        self.blocks_mut(k).h11[(i, j)] += v;
    }

    /// S20(k)_{ij} = S20(k)_{ji} = v.
    pub fn set_s20(&mut self, k: &[i32], i: usize, j: usize, v: C64) {
        let b = self.blocks_mut(k);
        b.s20[(i, j)] = v;
        b.s20[(j, i)] = v;
    }

    /// S02(k)_{ij} = S02(k)_{ji} = v.
    pub fn set_s02(&mut self, k: &[i32], i: usize, j: usize, v: C64) {
        let b = self.blocks_mut(k);
        b.s02[(i, j)] = v;
        b.s02[(j, i)] = v;
    }

    pub fn insert_blocks(&mut self, k: &[i32], b: &Blocks) {
        self.blocks_mut(k).axpy(C64::new(1.0, 0.0), b);
    }

    fn check_compatible(&self, o: &QuadHam) -> Result<()> {
        if self.n != o.n || self.j != o.j {
            return Err(Error::DimensionMismatch(format!(
                "(n, J) = ({}, {}) vs ({}, {})",
                self.n, self.j, o.n, o.j
            )));
        }
        Ok(())
    }

    /// self += a·o; modes beyond self's capacity go to the tail.
    pub fn axpy(&mut self, a: C64, o: &QuadHam) -> Result<()> {
        self.check_compatible(o)?;
        let mut over = QuadHam::new(self.n, self.j, o.k_cap.max(self.k_cap), self.w);
        for (k, b) in &o.coeffs {
            if l1(k) <= self.k_cap {
                self.blocks_mut(k).axpy(a, b);
            } else {
                over.blocks_mut(k).axpy(a, b);
            }
        }
        self.tail_norm += a.norm() * o.tail_norm + over.vf_norm();
        self.limits = None;
        Ok(())
    }

    pub fn scaled(&self, a: C64) -> QuadHam {
        let mut out = self.clone();
        for b in out.coeffs.values_mut() {
            b.scale(a);
        }
        out.tail_norm *= a.norm();
        out.limits = self.limits.as_ref().map(|l| l.scaled(a));
        out
    }

    pub fn sub(&self, o: &QuadHam) -> Result<QuadHam> {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), o)?;
        Ok(out)
    }

    pub fn add(&self, o: &QuadHam) -> Result<QuadHam> {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), o)?;
        Ok(out)
    }

    /// Drops modes whose blocks are identically zero.
    pub fn prune(&mut self) {
        self.coeffs.retain(|_, b| !b.is_zero());
    }

    pub fn symmetrize(&mut self) {
        let half = C64::new(0.5, 0.0);
        for b in self.coeffs.values_mut() {
            b.s20 = (&b.s20 + b.s20.transpose()) * half;
            b.s02 = (&b.s02 + b.s02.transpose()) * half;
        }
    }

    /// max over k of |S02(k) − conj S20(−k)| and |H11(k) − H11(−k)^†|.
    pub fn reality_defect(&self) -> f64 {
        let zero = Blocks::zeros(self.j);
        let mut worst: f64 = 0.0;
        let keys: Vec<Mode> = self.coeffs.keys().cloned().collect();
        for k in keys.iter().chain(keys.iter().map(|k| neg_mode(k)).collect::<Vec<_>>().iter()) {
            let b = self.coeffs.get(k).unwrap_or(&zero);
            let m = neg_mode(k);
            let bm = self.coeffs.get(&m).unwrap_or(&zero);
            for (x, y) in b.s02.iter().zip(bm.s20.iter()) {
                worst = worst.max((x - y.conj()).norm());
            }
            let h = bm.h11.adjoint();
            for (x, y) in b.h11.iter().zip(h.iter()) {
                worst = worst.max((x - y).norm());
            }
        }
        worst
    }

    /// Fourier support bound max |k|₁ over stored nonzero modes.
    pub fn max_mode(&self) -> usize {
        self.coeffs.iter().filter(|(_, b)| !b.is_zero()).map(|(k, _)| l1(k)).max().unwrap_or(0)
    }

    /// (T_K P, P − T_K P) with T_K keeping |k|₁ ≤ K.
    pub fn split(&self, kk: usize) -> (QuadHam, QuadHam) {
        let mut low = self.zeros_like();
        let mut high = self.zeros_like();
        for (k, b) in &self.coeffs {
            if l1(k) <= kk {
                low.coeffs.insert(k.clone(), b.clone());
            } else {
                high.coeffs.insert(k.clone(), b.clone());
            }
        }
        low.tail_norm = self.tail_norm;
        low.limits = self.limits.clone();
        (low, high)
    }

    /// Stacked Hessian coefficient [[2S20, H11], [H11ᵀ, 2S02]] of one mode.
    pub fn stacked(b: &Blocks) -> CMat {
        let j = b.h11.nrows();
        let mut s = czero(2 * j, 2 * j);
        let two = C64::new(2.0, 0.0);
        s.view_mut((0, 0), (j, j)).copy_from(&(&b.s20 * two));
        s.view_mut((0, j), (j, j)).copy_from(&b.h11);
        s.view_mut((j, 0), (j, j)).copy_from(&b.h11.transpose());
        s.view_mut((j, j), (j, j)).copy_from(&(&b.s02 * two));
        s
    }

    /// Inverse of [`QuadHam::stacked`], symmetrizing the input.
    pub fn unstack(s: &CMat) -> Blocks {
        let j = s.nrows() / 2;
        let half = C64::new(0.5, 0.0);
        let q = s.view((0, 0), (j, j)).into_owned();
        let w = s.view((j, j), (j, j)).into_owned();
        let h = s.view((0, j), (j, j)).into_owned();
        let ht = s.view((j, 0), (j, j)).transpose();
        Blocks {
            s20: (&q + q.transpose()) * C64::new(0.25, 0.0),
            h11: (h + ht) * half,
            s02: (&w + w.transpose()) * C64::new(0.25, 0.0),
        }
    }

    /// Builds from stacked Hessian coefficients; modes beyond k_cap go to the tail.
    pub fn from_stacked(n: usize, j: usize, k_cap: usize, w: Weights, coeffs: &BTreeMap<Mode, CMat>) -> QuadHam {
        let mut out = QuadHam::new(n, j, k_cap, w);
        let mut over = QuadHam::new(n, j, usize::MAX, w);
        for (k, s) in coeffs {
            let b = Self::unstack(s);
            if l1(k) <= k_cap {
                out.coeffs.insert(k.clone(), b);
            } else {
                over.coeffs.insert(k.clone(), b);
            }
        }
        out.tail_norm = over.vf_norm();
        out
    }

    /// Stacked Hessian at angle θ.
    pub fn eval_stacked(&self, theta: &[f64]) -> CMat {
        let mut s = czero(2 * self.j, 2 * self.j);
        for (k, b) in &self.coeffs {
            let ph = phase(k, theta);
            s += Self::stacked(b) * ph;
        }
        s
    }

    /// ∂_{θ_h} P.
    pub fn theta_derivative(&self, h: usize) -> QuadHam {
        let mut out = self.zeros_like();
        for (k, b) in &self.coeffs {
            if k[h] == 0 {
                continue;
            }
            let mut nb = b.clone();
            nb.scale(I * k[h] as f64);
            out.coeffs.insert(k.clone(), nb);
        }
        out
    }

    /// Σ_h ω_h ∂_{θ_h} P.
    pub fn omega_derivative(&self, omega: &[f64]) -> QuadHam {
        let mut out = self.zeros_like();
        for (k, b) in &self.coeffs {
            let kw = crate::numeric::kdot(k, omega);
            if kw == 0.0 {
                continue;
            }
            let mut nb = b.clone();
            nb.scale(I * kw);
            out.coeffs.insert(k.clone(), nb);
        }
        out
    }

    /// Real θ-means of the H11 diagonal.
    pub fn mean_diagonal(&self) -> Vec<f64> {
        let zero = vec![0i32; self.n];
        match self.coeffs.get(&zero) {
            Some(b) => (0..self.j).map(|i| b.h11[(i, i)].re).collect(),
            None => vec![0.0; self.j],
        }
    }

    /// Scalar series of a single block entry.
    pub fn entry_series(&self, block: BlockKind, i: usize, j: usize) -> Series {
        let mut s = Series::new();
        for (k, b) in &self.coeffs {
            let v = match block {
                BlockKind::S20 => b.s20[(i, j)],
                BlockKind::H11 => b.h11[(i, j)],
                BlockKind::S02 => b.s02[(i, j)],
            };
            if v != C64::new(0.0, 0.0) {
                s.insert(k.clone(), v);
            }
        }
        s
    }

    /// Majorant norms of the second derivatives (2S20, H11, 2S02) and of the
    /// θ-derivative coefficients (S20, H11, S02), at strip width r.
    fn entry_norms(&self, r: f64) -> [Vec<f64>; 6] {
        let jn = self.j;
        let mut out: [Vec<f64>; 6] = Default::default();
        for o in out.iter_mut() {
            *o = vec![0.0; jn * jn];
        }
        for (k, b) in &self.coeffs {
            let kk = l1(k) as f64;
            let wgt = (kk * r).exp();
            for c in 0..jn {
                for rr in 0..jn {
                    let idx = rr * jn + c;
                    let (x, y, z) = (b.s20[(rr, c)].norm_sqr().sqrt(), b.h11[(rr, c)].norm_sqr().sqrt(), b.s02[(rr, c)].norm_sqr().sqrt());
                    out[0][idx] += 2.0 * x * wgt;
                    out[1][idx] += y * wgt;
                    out[2][idx] += 2.0 * z * wgt;
                    out[3][idx] += kk * x * wgt;
                    out[4][idx] += kk * y * wgt;
                    out[5][idx] += kk * z * wgt;
                }
            }
        }
        out
    }

    /// Implemented vector-field norm ‖X_P‖ on D(r, s).
    pub fn vf_norm(&self) -> f64 {
        self.vf_norm_at(self.w.r)
    }

    pub fn vf_norm_at(&self, r: f64) -> f64 {
        let (z, t) = self.vf_parts_at(r);
        z + t
    }

    /// (z/z̄ component, θ component).
    pub fn vf_parts_at(&self, r: f64) -> (f64, f64) {
        let jn = self.j;
        if self.coeffs.is_empty() {
            return (0.0, 0.0);
        }
        let [n20, n11, n02, t20, t11, t02] = self.entry_norms(r);
        let w: Vec<f64> = (1..=jn).map(|j| mode_weight(self.w.a, self.w.p, j)).collect();
        let at = |m: &Vec<f64>, i: usize, j: usize| m[i * jn + j];
        let mut first: f64 = 0.0;
        let mut second: f64 = 0.0;
        for i in 0..jn {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for j in 0..jn {
                // input z_i: outputs ∂/∂z_j (2S20_ji) and ∂/∂z̄_j (H11_ij)
                s1 += w[j] * (at(&n20, j, i) + at(&n11, i, j));
                // input z̄_i: outputs ∂/∂z_j (H11_ji) and ∂/∂z̄_j (2S02_ji)
                s2 += w[j] * (at(&n11, j, i) + at(&n02, j, i));
            }
            first = first.max(s1 / w[i]);
            second = second.max(s2 / w[i]);
        }
        let mut th = 0.0;
        for m in [&t20, &t11, &t02] {
            let mut mx: f64 = 0.0;
            for i in 0..jn {
                for j in 0..jn {
                    mx = mx.max(at(m, i, j) / (w[i] * w[j]));
                }
            }
            th += mx;
        }
        (first + second, th)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    S20,
    H11,
    S02,
}

pub fn phase(k: &[i32], theta: &[f64]) -> C64 {
    let a: f64 = k.iter().zip(theta).map(|(&k, &t)| k as f64 * t).sum();
    C64::new(a.cos(), a.sin())
}

/// Z-part Poisson bracket {R, F} of two I-independent quadratics, with
/// Hessian i(S_R𝕁S_F − S_F𝕁S_R) and Fourier convolution in θ.
pub fn poisson_bracket(r: &QuadHam, f: &QuadHam) -> Result<QuadHam> {
    r.check_compatible(f)?;
    let jn = r.j;
    struct Pre {
        p: CMat,
        q: CMat,
        qt: CMat,
        w: CMat,
        zp: bool,
        zq: bool,
        zw: bool,
    }
    let two = C64::new(2.0, 0.0);
    let pre = |b: &Blocks| Pre {
        p: &b.s20 * two,
        q: b.h11.clone(),
        qt: b.h11.transpose(),
        w: &b.s02 * two,
        zp: is_zero(&b.s20),
        zq: is_zero(&b.h11),
        zw: is_zero(&b.s02),
    };
    let rp: Vec<(&Mode, Pre)> = r.coeffs.iter().filter(|(_, b)| !b.is_zero()).map(|(k, b)| (k, pre(b))).collect();
    let fp: Vec<(&Mode, Pre)> = f.coeffs.iter().filter(|(_, b)| !b.is_zero()).map(|(k, b)| (k, pre(b))).collect();
    let mut acc: BTreeMap<Mode, [CMat; 4]> = BTreeMap::new();
    for (kr, a) in &rp {
        for (kf, b) in &fp {
            let k = add_modes(kr, kf);
            let e = acc.entry(k).or_insert_with(|| [czero(jn, jn), czero(jn, jn), czero(jn, jn), czero(jn, jn)]);
            // X11 = P_R Q_Fᵀ − Q_R P_F
            mul_add(&mut e[0], &a.p, &b.qt, a.zp, b.zq, 1.0);
            mul_add(&mut e[0], &a.q, &b.p, a.zq, b.zp, -1.0);
            // X12 = P_R W_F − Q_R Q_F
            mul_add(&mut e[1], &a.p, &b.w, a.zp, b.zw, 1.0);
            mul_add(&mut e[1], &a.q, &b.q, a.zq, b.zq, -1.0);
            // X21 = Q_Rᵀ Q_Fᵀ − W_R P_F
            mul_add(&mut e[2], &a.qt, &b.qt, a.zq, b.zq, 1.0);
            mul_add(&mut e[2], &a.w, &b.p, a.zw, b.zp, -1.0);
            // X22 = Q_Rᵀ W_F − W_R Q_F
            mul_add(&mut e[3], &a.qt, &b.w, a.zq, b.zw, 1.0);
            mul_add(&mut e[3], &a.w, &b.q, a.zw, b.zq, -1.0);
        }
    }
    let mut out = r.zeros_like();
    out.k_cap = r.k_cap.min(f.k_cap);
    let mut over = QuadHam::new(r.n, jn, usize::MAX, r.w);
    let hi = C64::new(0.0, 0.5);
    for (k, x) in acc {
        let b = Blocks {
            s20: (&x[0] + x[0].transpose()) * hi,
            h11: (&x[1] + x[2].transpose()) * I,
            s02: (&x[3] + x[3].transpose()) * hi,
        };
        if b.is_zero() {
            continue;
        }
        if l1(&k) <= out.k_cap {
            out.coeffs.insert(k, b);
        } else {
            over.coeffs.insert(k, b);
        }
    }
    out.tail_norm = r.tail_norm + f.tail_norm + over.vf_norm();
    Ok(out)
}

/// Norm of a scalar series difference a − b.
pub fn series_diff_norm(a: &Series, b: &Series, r: f64) -> f64 {
    let mut d = a.clone();
    for (k, v) in b {
        *d.entry(k.clone()).or_insert(C64::new(0.0, 0.0)) -= v;
    }
    coeff_fourier_norm(&d, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z1zb1() -> QuadHam {
        let mut p = QuadHam::new(1, 2, 2, Weights { r: 0.1, s: 1.0, a: 0.0, p: 0.0 });
        p.add_h11(&[0], 0, 0, C64::new(1.0, 0.0));
        p
    }

    #[test]
    fn vf_norm_hand_examples() {
        assert_eq!(z1zb1().vf_norm(), 2.0);
        let mut p = QuadHam::new(1, 2, 2, Weights { r: 0.1, s: 1.0, a: 0.0, p: 0.0 });
        p.add_h11(&[1], 0, 1, C64::new(1.0, 0.0));
        let (z, t) = p.vf_parts_at(0.1);
        assert!((z - 2.0 * 0.1f64.exp()).abs() < 1e-15);
        assert!((t - 0.1f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn bracket_of_hand_pair() {
        let mut r = QuadHam::new(1, 2, 2, Weights::default());
        r.add_h11(&[0], 0, 1, C64::new(1.0, 0.0));
        let mut f = QuadHam::new(1, 2, 2, Weights::default());
        f.add_h11(&[0], 1, 0, C64::new(1.0, 0.0));
        let b = poisson_bracket(&r, &f).unwrap();
        let h = &b.blocks(&[0]).unwrap().h11;
        assert_eq!(h[(0, 0)], C64::new(0.0, -1.0));
        assert_eq!(h[(1, 1)], C64::new(0.0, 1.0));
        assert_eq!(h[(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn stack_roundtrip() {
        let mut p = QuadHam::new(1, 3, 1, Weights::default());
        p.set_s20(&[1], 0, 2, C64::new(0.3, -0.1));
        p.add_h11(&[1], 1, 2, C64::new(0.2, 0.5));
        p.set_s02(&[1], 1, 1, C64::new(-0.7, 0.0));
        let b = p.blocks(&[1]).unwrap();
        assert_eq!(&QuadHam::unstack(&QuadHam::stacked(b)), b);
    }
}
