//! Approximation functions Δ and the calculus built on them: Γ_ab(σ) suprema,
//! the σ_ν product construction bounding Ξ(σ), and Brjuno sums.
//!
//! All families are stored and evaluated through log Δ, which keeps the large
//! values reached at t ~ 10⁹ representable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{golden_max, log_simpson};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AfSpec", into = "AfSpec")]
pub enum ApproximationFunction {
    /// Δ₁ = exp(t^α/α), 0 < α < 1.
    Power { alpha: f64 },
    /// Δ₂ = exp(t/(1 + log^α(1+t))), α > 1.
    LogDamped { alpha: f64 },
    /// Δ₃ = exp(t/log^α t), α > 1, continued linearly in log Δ below t = e^α.
    LogPower { alpha: f64 },
    Constant,
    /// Monotone piecewise-linear in (t, log Δ); flat beyond the last node.
    Tabulated { t: Vec<f64>, log_delta: Vec<f64> },
}

/// Config form: {"family": ..., "alpha": ..., "table": [[t, delta], ...]}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AfSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 2]>>,
}

impl TryFrom<AfSpec> for ApproximationFunction {
    type Error = Error;

    fn try_from(s: AfSpec) -> Result<Self> {
        let alpha = || s.alpha.ok_or_else(|| Error::Parse(format!("family {} needs alpha", s.family)));
        match s.family.as_str() {
            "power" => Self::power(alpha()?),
            "logdamped" => Self::log_damped(alpha()?),
            "logpower" => Self::log_power(alpha()?),
            "constant" => Ok(Self::Constant),
            "tabulated" => {
                let table = s.table.clone().ok_or_else(|| Error::Parse("tabulated family needs table".into()))?;
                Self::tabulated(&table)
            }
            other => Err(Error::Parse(format!("unknown approximation family {other:?}"))),
        }
    }
}

impl From<ApproximationFunction> for AfSpec {
    fn from(af: ApproximationFunction) -> Self {
        let (family, alpha, table) = match af {
            ApproximationFunction::Power { alpha } => ("power", Some(alpha), None),
            ApproximationFunction::LogDamped { alpha } => ("logdamped", Some(alpha), None),
            ApproximationFunction::LogPower { alpha } => ("logpower", Some(alpha), None),
            ApproximationFunction::Constant => ("constant", None, None),
            ApproximationFunction::Tabulated { t, log_delta } => (
                "tabulated",
                None,
                Some(t.iter().zip(&log_delta).map(|(&t, &l)| [t, l.exp()]).collect()),
            ),
        };
        AfSpec { family: family.into(), alpha, table }
    }
}

impl ApproximationFunction {
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("power family needs 0 < alpha < 1, got {alpha}")));
        }
        Ok(Self::Power { alpha })
    }

    pub fn log_damped(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::Domain(format!("logdamped family needs alpha > 1, got {alpha}")));
        }
        Ok(Self::LogDamped { alpha })
    }

    pub fn log_power(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::Domain(format!("logpower family needs alpha > 1, got {alpha}")));
        }
        Ok(Self::LogPower { alpha })
    }

    /// Table of (t, Δ(t)) nodes; must start at (0, 1) and be non-decreasing.
    pub fn tabulated(table: &[[f64; 2]]) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::Domain("tabulated family needs at least two nodes".into()));
        }
        if table[0] != [0.0, 1.0] {
            return Err(Error::Domain("tabulated family must start at (0, 1)".into()));
        }
        for w in table.windows(2) {
            if !(w[1][0] > w[0][0]) || w[1][1] < w[0][1] {
                return Err(Error::Domain("tabulated nodes must have increasing t and non-decreasing delta".into()));
            }
        }
        Ok(Self::Tabulated {
            t: table.iter().map(|p| p[0]).collect(),
            log_delta: table.iter().map(|p| p[1].ln()).collect(),
        })
    }

    /// Start of the range on which log Δ(t)/t is non-increasing.
    pub fn onset(&self) -> f64 {
        match self {
            Self::LogPower { alpha } => alpha.exp(),
            _ => 0.0,
        }
    }

    /// log Δ(t) for t ≥ 0 (unchecked).
    pub fn ld(&self, t: f64) -> f64 {
        match self {
            Self::Power { alpha } => t.powf(*alpha) / alpha,
            Self::LogDamped { alpha } => t / (1.0 + t.ln_1p().powf(*alpha)),
            Self::LogPower { alpha } => {
                let t0 = alpha.exp();
                if t <= t0 {
                    t / alpha.powf(*alpha)
                } else {
                    t / t.ln().powf(*alpha)
                }
            }
            Self::Constant => 0.0,
            Self::Tabulated { t: ts, log_delta } => {
                let n = ts.len();
                if t >= ts[n - 1] {
                    return log_delta[n - 1];
                }
                let i = ts.partition_point(|&x| x <= t) - 1;
                let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
                log_delta[i] + w * (log_delta[i + 1] - log_delta[i])
            }
        }
    }

    /// d/dt log Δ(t) (right derivative at kinks).
    pub fn dld(&self, t: f64) -> f64 {
        match self {
            Self::Power { alpha } => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    t.powf(alpha - 1.0)
                }
            }
            Self::LogDamped { alpha } => {
                let l = t.ln_1p();
                let den = 1.0 + l.powf(*alpha);
                let dden = if l > 0.0 { alpha * l.powf(alpha - 1.0) / (1.0 + t) } else { 0.0 };
                (den - t * dden) / (den * den)
            }
            Self::LogPower { alpha } => {
                let t0 = alpha.exp();
                if t < t0 {
                    1.0 / alpha.powf(*alpha)
                } else {
                    let l = t.ln();
                    (1.0 - alpha / l) / l.powf(*alpha)
                }
            }
            Self::Constant => 0.0,
            Self::Tabulated { t: ts, log_delta } => {
                let n = ts.len();
                if t >= ts[n - 1] {
                    return 0.0;
                }
                let i = ts.partition_point(|&x| x <= t) - 1;
                (log_delta[i + 1] - log_delta[i]) / (ts[i + 1] - ts[i])
            }
        }
    }

    pub fn log_delta(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("approximation function evaluated at t = {t}")));
        }
        Ok(self.ld(t))
    }

    /// Δ(|k|) as a plain value; callers pass |k|₁ ≥ 0.
    pub fn at(&self, t: f64) -> f64 {
        self.ld(t).exp()
    }
}

pub fn eval_delta(af: &ApproximationFunction, t: f64) -> Result<f64> {
    Ok(af.log_delta(t)?.exp())
}

/// Integral of f over [a, ∞) by decade chunks in log t, with a geometric
/// extrapolation of the chunk sequence past 10³⁰⁰. Returns (value, converged).
pub(crate) fn integrate_tail<F: Fn(f64) -> f64>(f: &F, a: f64) -> (f64, bool) {
    let mut lo = a;
    let mut total: f64 = 0.0;
    let mut prev: Option<f64> = None;
    let mut last = 0.0;
    let mut ratio = 0.0;
    let mut chunks = 0;
    while lo < 1e299 {
        let hi = lo * 10.0;
        let c = log_simpson(f, lo, hi, 1e-14 * (total.abs() + 1e-300).max(1e-30));
        total += c;
        if let Some(p) = prev {
            ratio = if p != 0.0 { c / p } else if c == 0.0 { 0.0 } else { f64::INFINITY };
        }
        prev = Some(c);
        last = c;
        chunks += 1;
        if !total.is_finite() {
            return (f64::INFINITY, false);
        }
        if chunks >= 3 && (c.abs() <= 1e-17 * total.abs() || c == 0.0) && ratio < 1.0 {
            return (total, true);
        }
        lo = hi;
    }
    if ratio < 0.999 {
        (total + last * ratio / (1.0 - ratio), true)
    } else {
        (f64::INFINITY, false)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub normalized: bool,
    pub monotone: bool,
    pub log_ratio_decreasing: bool,
    pub exponent: i32,
    /// ∫₁^{t_max} log Δ(t)/t^exponent dt.
    pub integral: f64,
    /// Estimated ∫_{t_max}^∞ of the same integrand.
    pub tail: f64,
    pub converged: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.normalized && self.monotone && self.log_ratio_decreasing && self.converged
    }
}

/// Checks the approximation-function axioms on a sampled grid, with the
/// Brjuno integrand log Δ(t)/t².
pub fn validate_af(af: &ApproximationFunction, t_max: f64, n_grid: usize) -> Result<ValidationReport> {
    validate_af_with(af, t_max, n_grid, 2)
}

pub fn validate_af_with(af: &ApproximationFunction, t_max: f64, n_grid: usize, exponent: i32) -> Result<ValidationReport> {
    if !(t_max > 1.0) || n_grid < 16 {
        return Err(Error::Domain("validate_af needs t_max > 1 and n_grid >= 16".into()));
    }
    let mut grid = vec![0.0];
    let lo = (1e-3f64).ln();
    let hi = t_max.ln();
    for i in 0..n_grid - 1 {
        grid.push((lo + (hi - lo) * i as f64 / (n_grid - 2) as f64).exp());
    }
    let vals: Vec<f64> = grid.iter().map(|&t| af.ld(t)).collect();
    let monotone = vals.windows(2).all(|w| w[1] >= w[0]);
    let onset = af.onset();
    let ratios: Vec<f64> = grid.iter().zip(&vals).filter(|(t, _)| **t > onset && **t > 0.0).map(|(t, v)| v / t).collect();
    let log_ratio_decreasing = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    let e = exponent;
    let f = move |t: f64| af.ld(t) / t.powi(e);
    let integral = log_simpson(&f, 1.0, t_max, 1e-12);
    let (tail, converged) = integrate_tail(&f, t_max);
    Ok(ValidationReport {
        normalized: af.ld(0.0) == 0.0,
        monotone,
        log_ratio_decreasing,
        exponent,
        integral,
        tail,
        converged,
    })
}

/// A request for Γ_ab(σ) = sup_{t≥0} (1+t)^a Δ^b(t) e^{−tσ}.
#[derive(Debug, Clone, Copy)]
pub struct GammaQuery {
    pub a: u32,
    pub b: u32,
    pub sigma: f64,
}

const GRID_POINTS: usize = 4096;

/// log Γ_ab(σ) and the maximizing t. The log grid starts on [0, 10⁹] and is
/// extended while the maximum sits on its upper edge.
pub fn log_gamma_ab(af: &ApproximationFunction, q: GammaQuery) -> Result<(f64, f64)> {
    log_gamma_ab_from(af, q, 1e9)
}

pub(crate) fn log_gamma_ab_from(af: &ApproximationFunction, q: GammaQuery, t_hi0: f64) -> Result<(f64, f64)> {
    if !(q.sigma > 0.0) {
        return Err(Error::Domain(format!("gamma_ab needs sigma > 0, got {}", q.sigma)));
    }
    let (a, b, s) = (q.a as f64, q.b as f64, q.sigma);
    let f = |t: f64| a * t.ln_1p() + b * af.ld(t) - s * t;
    let mut t_hi = t_hi0.max(1e9);
    loop {
        let lo = (1e-6f64).ln();
        let hi = t_hi.ln();
        let mut best = (0usize, f(0.0));
        let mut grid = Vec::with_capacity(GRID_POINTS);
        grid.push(0.0);
        for i in 0..GRID_POINTS - 1 {
            let t = (lo + (hi - lo) * i as f64 / (GRID_POINTS - 2) as f64).exp();
            grid.push(t);
            let v = f(t);
            if v > best.1 {
                best = (i + 1, v);
            }
        }
        let idx = best.0;
        if idx == GRID_POINTS - 1 {
            if t_hi >= 1e300 {
                return Err(Error::Overflow(format!(
                    "Γ_{}{}(σ={}) supremum not bracketed below t = 1e300",
                    q.a, q.b, q.sigma
                )));
            }
            t_hi = (t_hi * 1e6).min(1e300);
            continue;
        }
        let l = if idx == 0 { 0.0 } else { grid[idx - 1] };
        let r = grid[idx + 1];
        let (ts, vs) = golden_max(&f, l, r, 1e-12);
        return Ok(if vs > best.1 { (vs, ts) } else { (best.1, grid[idx]) });
    }
}

pub fn gamma_ab(af: &ApproximationFunction, q: GammaQuery) -> Result<f64> {
    let (lg, _) = log_gamma_ab(af, q)?;
    if lg > 709.0 {
        return Err(Error::Overflow(format!("Γ_{}{}(σ={}) = e^{lg:.3} exceeds f64", q.a, q.b, q.sigma)));
    }
    Ok(lg.exp())
}

/// The σ_ν construction t_ν = κ^{ν+1}T, σ_ν = δ(t_ν)/t_ν with
/// δ(t) = log((1+t)²Δ³(t)).
#[derive(Debug, Clone, Serialize)]
pub struct XiSchedule {
    pub sigma: f64,
    pub kappa: f64,
    pub t0: f64,
    pub precondition_integral: f64,
    pub sigmas: Vec<f64>,
    pub nodes: Vec<f64>,
    /// Bound on the sum of the σ_μ dropped by truncation.
    pub remainder: f64,
    /// Certified upper bound on log Ξ(σ): Σ κ_ν log Γ₂₃(σ_ν) + T·remainder.
    pub log_xi: f64,
    /// log of the target bound e^{σT}.
    pub log_bound: f64,
}

impl XiSchedule {
    pub fn sum(&self) -> f64 {
        self.sigmas.iter().sum::<f64>() + self.remainder
    }

    pub fn certified(&self) -> bool {
        self.log_xi <= self.log_bound + (1e-6f64).ln_1p()
    }

    /// σ_ν, falling back to the last stored value past truncation.
    pub fn sigma_at(&self, nu: usize) -> f64 {
        *self.sigmas.get(nu).unwrap_or_else(|| self.sigmas.last().unwrap())
    }
}

const XI_MAX_TERMS: usize = 400;

pub(crate) fn delta_fn(af: &ApproximationFunction, t: f64) -> f64 {
    2.0 * t.ln_1p() + 3.0 * af.ld(t)
}

/// (1/log κ) ∫_T^∞ δ(t)/t² dt.
pub fn xi_precondition(af: &ApproximationFunction, kappa: f64, t0: f64) -> f64 {
    let (v, ok) = integrate_tail(&|t: f64| delta_fn(af, t) / (t * t), t0);
    if ok {
        v / kappa.ln()
    } else {
        f64::INFINITY
    }
}

pub fn xi_schedule(af: &ApproximationFunction, sigma: f64, kappa: f64, t0: f64) -> Result<XiSchedule> {
    if !(sigma > 0.0 && kappa > 1.0 && t0 > 0.0) {
        return Err(Error::Domain("xi_schedule needs sigma > 0, kappa > 1, T > 0".into()));
    }
    let integral = xi_precondition(af, kappa, t0);
    if !(integral < sigma) {
        return Err(Error::InfeasibleSchedule { integral, sigma });
    }
    let mut sigmas = Vec::new();
    let mut nodes = Vec::new();
    let mut log_xi = 0.0;
    for nu in 0..XI_MAX_TERMS {
        let t = kappa.powi(nu as i32 + 1) * t0;
        if t > 1e290 {
            break;
        }
        let s = delta_fn(af, t) / t;
        let (lg, _) = log_gamma_ab_from(af, GammaQuery { a: 2, b: 3, sigma: s }, 100.0 * t)?;
        log_xi += kappa.powi(-(nu as i32 + 1)) * lg;
        sigmas.push(s);
        nodes.push(t);
        if s < 1e-15 * sigma {
            break;
        }
    }
    let t_last = *nodes.last().unwrap();
    let remainder = xi_precondition(af, kappa, t_last);
    log_xi += t0 * remainder;
    Ok(XiSchedule {
        sigma,
        kappa,
        t0,
        precondition_integral: integral,
        sigmas,
        nodes,
        remainder,
        log_xi,
        log_bound: sigma * t0,
    })
}

/// Smallest T = 2^m (m ≥ 0) for which the σ-schedule precondition holds.
pub fn feasible_t0(af: &ApproximationFunction, sigma: f64, kappa: f64) -> Result<f64> {
    let mut t = 1.0;
    while t < 1e12 {
        if xi_precondition(af, kappa, t) < sigma {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::InfeasibleSchedule { integral: xi_precondition(af, kappa, t), sigma })
}

/// #{k ∈ Zⁿ : |k|₁ = m}.
pub fn shell_count(n: usize, m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for j in 1..=n.min(m) {
        total += 2f64.powi(j as i32) * binom(n, j) * binom(m - 1, j - 1);
    }
    total
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct BrjunoSum {
    pub partial: f64,
    /// Bound on Σ_{|k|₁ > K_max}; infinite when tⁿ/√Δ(t) does not decay.
    pub tail_bound: f64,
    pub summable: bool,
}

pub fn brjuno_sum(af: &ApproximationFunction, n: usize, k_max: usize) -> Result<BrjunoSum> {
    if n == 0 || k_max == 0 {
        return Err(Error::Domain("brjuno_sum needs n >= 1 and K_max >= 1".into()));
    }
    let partial: f64 = (0..=k_max).map(|m| shell_count(n, m) * (-0.5 * af.ld(m as f64)).exp()).sum();
    let h = |t: f64| n as f64 * t.ln() - 0.5 * af.ld(t);
    let summable = h(1e12) < h(1e6) && h(1e12) < -50.0;
    if !summable {
        return Ok(BrjunoSum { partial, tail_bound: f64::INFINITY, summable });
    }
    let integrand = |t: f64| {
        let mut c = 1.0;
        for i in 1..=n {
            c *= (t + i as f64) / i as f64;
        }
        c * 0.5 * af.dld(t) * (-0.5 * af.ld(t)).exp()
    };
    let (v, ok) = integrate_tail(&integrand, k_max as f64);
    if !ok {
        return Err(Error::Overflow("Brjuno tail integral diverges".into()));
    }
    Ok(BrjunoSum { partial, tail_bound: 2f64.powi(n as i32) * v, summable })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_and_examples() {
        for af in [
            ApproximationFunction::power(0.5).unwrap(),
            ApproximationFunction::log_damped(2.0).unwrap(),
            ApproximationFunction::log_power(2.0).unwrap(),
            ApproximationFunction::Constant,
        ] {
            assert_eq!(eval_delta(&af, 0.0).unwrap(), 1.0);
        }
        assert_eq!(eval_delta(&ApproximationFunction::Constant, 7.3).unwrap(), 1.0);
        let p = ApproximationFunction::power(0.5).unwrap();
        assert!((eval_delta(&p, 1.0).unwrap() - 7.389_056_098_930_65).abs() < 1e-13);
        assert!(eval_delta(&p, -1.0).is_err());
    }

    #[test]
    fn shell_counts_small() {
        assert_eq!(shell_count(1, 3), 2.0);
        assert_eq!(shell_count(2, 3), 12.0);
        assert_eq!(shell_count(3, 1), 6.0);
    }

    #[test]
    fn gamma_constant_cases() {
        let c = ApproximationFunction::Constant;
        let g = gamma_ab(&c, GammaQuery { a: 1, b: 0, sigma: 1.0 }).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
        let g = gamma_ab(&c, GammaQuery { a: 1, b: 0, sigma: 0.5 }).unwrap();
        assert!((g - 2.0 * (-0.5f64).exp()).abs() < 1e-13);
    }
}
