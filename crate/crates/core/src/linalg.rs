//! Dense complex matrices: Padé-13 scaling-and-squaring exponential and
//! symplectic helpers in the stacked (z, z̄) ordering.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn czero(n: usize, m: usize) -> CMat {
    CMat::zeros(n, m)
}

pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_zero(a: &CMat) -> bool {
    a.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// e^A − I by diagonal Padé(13) on A/2^s, recovering the difference directly
/// as (V−U)⁻¹·2U and squaring through B ← B² + 2B so that small A keeps full
/// relative accuracy in the result.
pub fn expm_minus_identity(a: &CMat) -> CMat {
    let n = a.nrows();
    let nrm = norm1(a);
    if nrm == 0.0 {
        return czero(n, n);
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * C64::new(2f64.powi(-s), 0.0);
    let id = CMat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |i: usize| C64::new(PADE13[i], 0.0);
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &a * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8)) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let q = &v - &u;
    let rhs = &u * C64::new(2.0, 0.0);
    let mut x = q.lu().solve(&rhs).expect("Padé denominator is nonsingular for ||A|| <= theta13");
    for _ in 0..s {
        let x2 = &x * &x;
        x = x2 + &x * C64::new(2.0, 0.0);
    }
    x
}

pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    expm_minus_identity(a) + CMat::identity(n, n)
}

/// The stacked symplectic unit [[0, I], [−I, 0]] of size 2J.
pub fn sympl_j(jn: usize) -> CMat {
    let mut m = czero(2 * jn, 2 * jn);
    for i in 0..jn {
        m[(i, jn + i)] = C64::new(1.0, 0.0);
        m[(jn + i, i)] = C64::new(-1.0, 0.0);
    }
    m
}

/// max |Lᵀ𝕁L − 𝕁|.
pub fn symplectic_defect(l: &CMat) -> f64 {
    let jn = l.nrows() / 2;
    let j = sympl_j(jn);
    max_abs(&(l.transpose() * &j * l - &j))
}

/// L⁻¹ = −𝕁Lᵀ𝕁 for symplectic L.
pub fn symplectic_inverse(l: &CMat) -> CMat {
    let jn = l.nrows() / 2;
    let j = sympl_j(jn);
    -(&j * l.transpose() * &j)
}

/// 𝕁·S for stacked S, computed by block moves.
pub fn j_times(s: &CMat) -> CMat {
    let n2 = s.nrows();
    let jn = n2 / 2;
    let mut out = czero(n2, s.ncols());
    for c in 0..s.ncols() {
        for r in 0..jn {
            out[(r, c)] = s[(jn + r, c)];
            out[(jn + r, c)] = -s[(r, c)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal() {
        let mut a = czero(2, 2);
        a[(0, 0)] = C64::new(0.0, 0.3);
        a[(1, 1)] = C64::new(-2.0, 0.0);
        let e = expm(&a);
        assert!((e[(0, 0)] - C64::new(0.0, 0.3).exp()).norm() < 1e-15);
        assert!((e[(1, 1)] - (-2f64).exp()).norm() < 1e-15);
    }

    #[test]
    fn expm_large_norm_nilpotent() {
        let mut a = czero(2, 2);
        a[(0, 1)] = C64::new(50.0, 0.0);
        let e = expm(&a);
        assert!((e[(0, 1)] - C64::new(50.0, 0.0)).norm() < 1e-12);
        assert!((e[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn expm1_relative_accuracy_for_tiny_input() {
        let mut a = czero(1, 1);
        a[(0, 0)] = C64::new(1e-12, 0.0);
        let b = expm_minus_identity(&a);
        assert!((b[(0, 0)].re / 1e-12f64.exp_m1() - 1.0).abs() < 1e-14);
    }
}
