//! Direct integration of the quasi-periodic linear system and its
//! reconstruction through the reducing transformation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::SymplecticMap;
use crate::hamrep::{mode_weight, Mode, QuadHam};
use crate::linalg::{j_times, symplectic_inverse, C64, I};
use crate::smalldiv::NormalForm;

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Stacked (z, z̄) states.
    pub states: Vec<Vec<C64>>,
    /// ‖z‖_{a,p} per sample.
    pub norms: Vec<f64>,
    pub unstable: bool,
}

/// ‖z‖_{a,p} = Σ e^{aj} j^p |z_j| over the z half of a stacked state.
pub fn ap_norm(z: &[C64], a: f64, p: f64) -> f64 {
    let jn = z.len() / 2;
    (0..jn).map(|j| mode_weight(a, p, j + 1) * z[j].norm()).sum()
}

/// max |z̄_j − conj(z_j)|.
pub fn conjugate_defect(z: &[C64]) -> f64 {
    let jn = z.len() / 2;
    (0..jn).map(|j| (z[jn + j] - z[j].conj()).norm()).fold(0.0, f64::max)
}

/// The step bound 0.1/(J + max|Ω|).
pub fn dt_rule(nf: &NormalForm) -> f64 {
    let om = nf.omegas().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    0.1 / (nf.j() as f64 + om)
}

struct SparseMode {
    k: Mode,
    entries: Vec<(usize, usize, C64)>,
}

/// Right-hand side i𝕁S(θ)Z split into the diagonal normal form and sparse
/// θ-dependent entries.
struct Rhs {
    jn: usize,
    omega_j: Vec<f64>,
    modes: Vec<SparseMode>,
}

impl Rhs {
    fn new(nf: &NormalForm, p: &QuadHam) -> Self {
        let jn = p.j;
        let modes = p
            .coeffs
            .iter()
            .filter(|(_, b)| !b.is_zero())
            .map(|(k, b)| {
                let a = j_times(&QuadHam::stacked(b)) * I;
                let mut entries = Vec::new();
                for r in 0..2 * jn {
                    for c in 0..2 * jn {
                        let v = a[(r, c)];
                        if v.re != 0.0 || v.im != 0.0 {
                            entries.push((r, c, v));
                        }
                    }
                }
                SparseMode { k: k.clone(), entries }
            })
            .collect();
        Rhs { jn, omega_j: nf.omegas()[..jn].to_vec(), modes }
    }

    fn apply(&self, phases: &[C64], z: &[C64], out: &mut [C64]) {
        let jn = self.jn;
        for j in 0..jn {
            out[j] = I * self.omega_j[j] * z[j];
            out[jn + j] = -I * self.omega_j[j] * z[jn + j];
        }
        for (m, ph) in self.modes.iter().zip(phases) {
            for &(r, c, v) in &m.entries {
                out[r] += v * ph * z[c];
            }
        }
    }
}

/// Classical RK4 for Ż = i𝕁S(ωt)Z with fixed step dt = T/steps, sampling
/// every `sample_every` steps. Mode phases advance by precomputed half-step
/// increments and are re-anchored every 1024 steps.
pub fn integrate_direct(
    nf: &NormalForm,
    p: &QuadHam,
    z0: &[C64],
    t_end: f64,
    steps: usize,
    sample_every: usize,
) -> Result<Trajectory> {
    let jn = p.j;
    if z0.len() != 2 * jn {
        return Err(Error::DimensionMismatch(format!("initial state has {} entries, need {}", z0.len(), 2 * jn)));
    }
    if steps == 0 || sample_every == 0 {
        return Err(Error::Domain("integrate_direct needs steps >= 1 and sample_every >= 1".into()));
    }
    let dt = t_end / steps as f64;
    let rhs = Rhs::new(nf, p);
    let kw: Vec<f64> = rhs.modes.iter().map(|m| crate::numeric::kdot(&m.k, &nf.omega)).collect();
    let half_inc: Vec<C64> = kw.iter().map(|w| C64::new(0.0, w * dt / 2.0).exp()).collect();
    let anchor = |t: f64| -> Vec<C64> { kw.iter().map(|w| C64::new(0.0, w * t).exp()).collect() };
    let n2 = 2 * jn;
    let mut z = z0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![C64::default(); n2], vec![C64::default(); n2], vec![C64::default(); n2], vec![C64::default(); n2], vec![C64::default(); n2]);
    let n0 = ap_norm(z0, p.w.a, p.w.p);
    let mut traj = Trajectory { times: vec![0.0], states: vec![z.clone()], norms: vec![n0], unstable: false };
    let mut ph = anchor(0.0);
    for step in 0..steps {
        let t = step as f64 * dt;
        if step % 1024 == 0 {
            ph = anchor(t);
        }
        let ph_mid: Vec<C64> = ph.iter().zip(&half_inc).map(|(a, b)| a * b).collect();
        let ph_end: Vec<C64> = ph_mid.iter().zip(&half_inc).map(|(a, b)| a * b).collect();
        let h = C64::new(dt, 0.0);
        rhs.apply(&ph, &z, &mut k1);
        for i in 0..n2 {
            tmp[i] = z[i] + k1[i] * h * 0.5;
        }
        rhs.apply(&ph_mid, &tmp, &mut k2);
        for i in 0..n2 {
            tmp[i] = z[i] + k2[i] * h * 0.5;
        }
        rhs.apply(&ph_mid, &tmp, &mut k3);
        for i in 0..n2 {
            tmp[i] = z[i] + k3[i] * h;
        }
        rhs.apply(&ph_end, &tmp, &mut k4);
        for i in 0..n2 {
            z[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * h / 6.0;
        }
        ph = ph_end;
        if (step + 1) % sample_every == 0 || step + 1 == steps {
            let nz = ap_norm(&z, p.w.a, p.w.p);
            if !(nz <= 1e6 * n0.max(f64::MIN_POSITIVE)) {
                traj.unstable = true;
            }
            traj.times.push((step + 1) as f64 * dt);
            traj.states.push(z.clone());
            traj.norms.push(nz);
            if traj.unstable {
                break;
            }
        }
    }
    Ok(traj)
}

/// Z(t) = L(ωt)·diag(e^{iΩ^∞t}, e^{−iΩ^∞t})·L(0)⁻¹Z₀.
pub fn integrate_reduced(nf_inf: &NormalForm, phi: &SymplecticMap, z0: &[C64], times: &[f64], a: f64, p: f64) -> Result<Trajectory> {
    let jn = phi.j;
    if z0.len() != 2 * jn {
        return Err(Error::DimensionMismatch(format!("initial state has {} entries, need {}", z0.len(), 2 * jn)));
    }
    let coeffs = phi.fourier_b();
    let theta0 = vec![0.0; phi.n];
    let l0 = phi.eval_l(&coeffs, &theta0);
    let znew0 = symplectic_inverse(&l0) * nalgebra::DVector::from_column_slice(z0);
    let om = nf_inf.omegas();
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new(), norms: Vec::new(), unstable: false };
    for &t in times {
        let mut zn = znew0.clone();
        for j in 0..jn {
            zn[j] *= C64::new(0.0, om[j] * t).exp();
            zn[jn + j] *= C64::new(0.0, -om[j] * t).exp();
        }
        let theta: Vec<f64> = nf_inf.omega.iter().map(|w| w * t).collect();
        let z = phi.eval_l(&coeffs, &theta) * zn;
        let zs: Vec<C64> = z.iter().copied().collect();
        traj.norms.push(ap_norm(&zs, a, p));
        traj.states.push(zs);
        traj.times.push(t);
    }
    Ok(traj)
}

/// max over samples of ‖z(t)‖_{a,p}/‖z(0)‖_{a,p}.
pub fn stability_ratio(traj: &Trajectory) -> Result<f64> {
    let n0 = *traj.norms.first().ok_or_else(|| Error::Domain("empty trajectory".into()))?;
    if n0 == 0.0 {
        return Err(Error::Domain("zero initial norm".into()));
    }
    Ok(traj.norms.iter().fold(0.0f64, |m, x| m.max(*x)) / n0)
}

/// sup_t ‖z_a(t) − z_b(t)‖_{a,p} / ‖z_a(0)‖_{a,p} over common samples.
pub fn sup_relative_error(x: &Trajectory, y: &Trajectory, a: f64, p: f64) -> Result<f64> {
    if x.times.len() != y.times.len() {
        return Err(Error::DimensionMismatch("trajectories sampled differently".into()));
    }
    let n0 = x.norms[0];
    let mut worst: f64 = 0.0;
    for (s, t) in x.states.iter().zip(&y.states) {
        let d: Vec<C64> = s.iter().zip(t).map(|(u, v)| u - v).collect();
        worst = worst.max(ap_norm(&d, a, p));
    }
    Ok(worst / n0)
}

/// Trajectory CSV: t, |z_j| per mode, norm.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let jn = traj.states.first().map(|s| s.len() / 2).unwrap_or(0);
    let mut s = String::from("t");
    for j in 1..=jn {
        s.push_str(&format!(",abs_z{j}"));
    }
    s.push_str(",norm\n");
    for ((t, z), n) in traj.times.iter().zip(&traj.states).zip(&traj.norms) {
        s.push_str(&format!("{t:.16e}"));
        for x in &z[..jn] {
            s.push_str(&format!(",{:.16e}", x.norm()));
        }
        s.push_str(&format!(",{n:.16e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamrep::Weights;

    #[test]
    fn free_rotation() {
        let nf = NormalForm::new(vec![1.0], vec![0.0, 0.5], 1.0);
        let p = QuadHam::new(1, 2, 1, Weights::default());
        let mut z0 = vec![C64::default(); 4];
        z0[0] = C64::new(1.0, 0.0);
        z0[2] = C64::new(1.0, 0.0);
        let steps = (100.0 / (dt_rule(&nf) / 4.0)).ceil() as usize;
        let tr = integrate_direct(&nf, &p, &z0, 100.0, steps, steps / 10).unwrap();
        let last = tr.states.last().unwrap();
        assert!((last[0] - C64::new(0.0, 100.0).exp()).norm() < 1e-8);
        assert!((last[0].norm() - 1.0).abs() < 1e-10);
        assert!((stability_ratio(&tr).unwrap() - 1.0).abs() < 1e-10);
    }
}
