//! Small numerical helpers shared across modules.

/// Error-free transformation a + b = s + e.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Error-free transformation a * b = p + e.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated dot product (Ogita–Rump–Oishi Dot2).
pub fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (p, ep) = two_prod(x, y);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}

/// k·ω with integer k, compensated.
pub fn kdot(k: &[i32], omega: &[f64]) -> f64 {
    let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
    dot2(&kf, omega)
}

/// Compensated sum of k·ω and extra real terms.
pub fn kdot_plus(k: &[i32], omega: &[f64], extra: &[f64]) -> f64 {
    KDot::new(k, omega).plus(extra)
}

/// k·ω kept as an unevaluated sum s + c, for repeated compensated shifts.
#[derive(Debug, Clone, Copy)]
pub struct KDot {
    s: f64,
    c: f64,
}

impl KDot {
    pub fn new(k: &[i32], omega: &[f64]) -> Self {
        let mut s = 0.0;
        let mut c = 0.0;
        for (&x, &y) in k.iter().zip(omega) {
            let (p, ep) = two_prod(x as f64, y);
            let (t, es) = two_sum(s, p);
            s = t;
            c += ep + es;
        }
        KDot { s, c }
    }

    #[inline]
    pub fn plus(&self, extra: &[f64]) -> f64 {
        let mut s = self.s;
        let mut c = self.c;
        for &e in extra {
            let (t, es) = two_sum(s, e);
            s = t;
            c += es;
        }
        s + c
    }
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre01(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..m {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = m as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Adaptive Simpson quadrature on [a, b].
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 24)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= (15.0 * tol).max(4.0 * f64::EPSILON * (left.abs() + right.abs())) {
        left + right + diff / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Integral of f over [a, b] in the variable u = ln t (f evaluated in t).
pub fn log_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let g = |u: f64| {
        let t = u.exp();
        f(t) * t
    };
    simpson(&g, a.ln(), b.ln(), tol)
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Golden-section maximization of f on [a, b].
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, rel: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..400 {
        if (b - a).abs() <= rel * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
