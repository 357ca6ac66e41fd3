//! The check-frequency, reduce, measure and verify commands. Each writes its
//! files into the output directory and returns a summary for callers.

use std::path::Path;

use kamreduce_core::flow::SymplecticMap;
use kamreduce_core::hamrep::{write_quadham, QuadHam};
use kamreduce_core::homological::{diagnostics_csv, SolveDiagnostics};
use kamreduce_core::kamloop::{build_schedule, compose_transform, convergence_csv, kam_step, KamSchedule, StepReport};
use kamreduce_core::linalg::C64;
use kamreduce_core::models::{build_model, normal_form, support_warning, verify_assumptions, AssumptionReport};
use kamreduce_core::numeric::fit_slope;
use kamreduce_core::smalldiv::{default_a2, excluded_fractions, min_margin, NormalForm, ResonanceQuery};
use kamreduce_core::verify::{conjugate_defect, dt_rule, integrate_direct, integrate_reduced, stability_ratio, sup_relative_error, trajectory_csv};
use kamreduce_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{real, OutDir, TransformFile};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyRow {
    pub omega: Vec<f64>,
    pub worst_margin: f64,
    pub admissible: bool,
}

pub fn check_frequency(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<FrequencyRow>, CliError> {
    let fc = &cfg.frequency;
    if fc.omega_list.is_empty() {
        return Err(CliError::Config("frequency.omega_list is empty".into()));
    }
    if !(fc.gamma > 0.0) || fc.J == 0 {
        return Err(CliError::Config("frequency.gamma must be positive and frequency.J at least 1".into()));
    }
    if fc.omega_list.iter().any(|w| w.is_empty() || w.iter().any(|x| !x.is_finite())) {
        return Err(CliError::Config("every frequency vector must be non-empty and finite".into()));
    }
    let mut out = OutDir::create(out)?;
    let mut csv = String::from("omega,worst_margin,admissible,k,i,j,kind,divisor\n");
    let mut rows = Vec::new();
    for w in &fc.omega_list {
        let nf = normal_form(cfg.model.kind, cfg.model.m, w, fc.J);
        let a2 = fc.A2_override.unwrap_or_else(|| default_a2(&nf));
        let q = ResonanceQuery { delta: cfg.approximation.clone(), gamma: fc.gamma, k: fc.K, j: fc.J, a2 };
        let rep = min_margin(w, &nf, &q);
        let ws: Vec<String> = w.iter().map(|x| real(*x)).collect();
        let admissible = rep.worst >= 1.0;
        match &rep.argmin {
            Some(d) => {
                let k: Vec<String> = d.k.iter().map(|x| x.to_string()).collect();
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    ws.join(" "),
                    real(rep.worst),
                    admissible,
                    k.join(" "),
                    d.i,
                    d.j,
                    d.kind.as_str(),
                    real(d.value)
                ));
            }
            None => csv.push_str(&format!("{},{},{},,,,,\n", ws.join(" "), real(rep.worst), admissible)),
        }
        rows.push(FrequencyRow { omega: w.clone(), worst_margin: rep.worst, admissible });
    }
    out.write("frequency.csv", &csv)?;
    out.manifest("check-frequency", cfg, "ok", serde_json::json!({ "rows": rows }))?;
    Ok(rows)
}

/// State of a reduction, complete or stopped by a divisor violation.
pub struct ReductionRun {
    pub nf0: NormalForm,
    pub p0: QuadHam,
    pub schedule: KamSchedule,
    pub assumptions: AssumptionReport,
    pub warnings: Vec<String>,
    pub nf: NormalForm,
    pub p: QuadHam,
    pub table: Vec<StepReport>,
    pub chain: Vec<SymplecticMap>,
    pub diagnostics: Vec<SolveDiagnostics>,
    pub violation: Option<Error>,
}

impl ReductionRun {
    /// max_j |Ω^∞_j − Ω_j|.
    pub fn omega_shift(&self) -> f64 {
        self.nf.omega_breve.iter().zip(&self.nf0.omega_breve).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn composed(&self) -> Result<SymplecticMap, CliError> {
        Ok(compose_transform(&self.chain)?)
    }
}

pub fn run_reduction(cfg: &ExperimentConfig) -> Result<ReductionRun, CliError> {
    cfg.validate_model()?;
    let m = &cfg.model;
    let v = m.potential(cfg.seed)?;
    let (nf0, p0) = build_model(m.kind, m.m, m.epsilon, &v, m.J, m.K_cap, m.weights(), &m.omega)?;
    let schedule = build_schedule(&cfg.schedule_params())?;
    let assumptions = verify_assumptions(m.kind, &nf0, &p0, &v, m.epsilon);
    let mut warnings: Vec<String> = support_warning(&v, m.J).into_iter().collect();
    if !schedule.gate_holds {
        warnings.push(format!("epsilon {} is above the smallness gate {}", m.epsilon, schedule.smallness_gate));
    }
    let opts = cfg.step_options();
    let mut run = ReductionRun {
        nf: nf0.clone(),
        p: p0.clone(),
        nf0,
        p0,
        schedule,
        assumptions,
        warnings,
        table: Vec::new(),
        chain: Vec::new(),
        diagnostics: Vec::new(),
        violation: None,
    };
    for nu in 0..cfg.schedule.nu_max.max(1) {
        match kam_step(&run.nf, &run.p, &run.schedule, nu, &opts) {
            Ok(step) => {
                let done = step.report.post() < cfg.schedule.stop_tol;
                run.nf = step.nf;
                run.p = step.p;
                run.chain.push(step.map);
                run.table.push(step.report);
                run.diagnostics.push(step.diagnostics);
                if done {
                    break;
                }
            }
            Err(e @ Error::DivisorViolation { .. }) => {
                run.violation = Some(e);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(run)
}

fn steps_csv(table: &[StepReport]) -> String {
    let mut s = String::from(
        "nu,P_pre,P_post,P_vf_pre,P_tl_pre,P_vf_post,P_tl_post,K_nu,worst_margin,phi_dev,omega_update,tail_norm,residual,truncation_remainder,symplectic_defect\n",
    );
    for r in table {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.nu,
            real(r.pre()),
            real(r.post()),
            real(r.p_vf_pre),
            real(r.p_tl_pre),
            real(r.p_vf_post),
            real(r.p_tl_post),
            r.k_nu,
            real(r.worst_margin),
            real(r.phi_dev),
            real(r.omega_update),
            real(r.tail_norm),
            real(r.residual),
            real(r.truncation_remainder),
            real(r.symplectic_defect)
        ));
    }
    s
}

fn normal_form_csv(nf0: &NormalForm, nf: &NormalForm) -> String {
    let mut s = String::from("j,Omega_breve_0,Omega_breve_inf,Omega_inf\n");
    for j in 0..nf.j() {
        s.push_str(&format!("{},{},{},{}\n", j + 1, real(nf0.omega_breve[j]), real(nf.omega_breve[j]), real(nf.big_omega(j))));
    }
    s
}

fn divisors_csv(diags: &[SolveDiagnostics]) -> String {
    let mut s = String::from("nu,k,i,j,kind,divisor,coeff_abs\n");
    for (nu, d) in diags.iter().enumerate() {
        for line in diagnostics_csv(d).lines().skip(1) {
            s.push_str(&format!("{nu},{line}\n"));
        }
    }
    s
}

fn violation_csv(e: &Error) -> String {
    let mut s = String::from("k,i,j,kind,divisor,threshold\n");
    if let Error::DivisorViolation { k, i, j, kind, value, threshold } = e {
        let k: Vec<String> = k.iter().map(|x| x.to_string()).collect();
        s.push_str(&format!("{},{},{},{},{},{}\n", k.join(" "), i, j, kind.as_str(), real(*value), real(*threshold)));
    }
    s
}

pub fn reduce(cfg: &ExperimentConfig, out: &Path) -> Result<ReductionRun, CliError> {
    let run = run_reduction(cfg)?;
    let mut out = OutDir::create(out)?;
    out.write("convergence.csv", &convergence_csv(&run.table, cfg.timing))?;
    out.write("steps.csv", &steps_csv(&run.table))?;
    out.write("normal_form.csv", &normal_form_csv(&run.nf0, &run.nf))?;
    out.write("divisors.csv", &divisors_csv(&run.diagnostics))?;
    if !run.chain.is_empty() {
        let map = run.composed()?;
        let text = serde_json::to_string(&TransformFile::new(&run.nf, &map)).map_err(|e| CliError::Io(e.to_string()))?;
        out.write("transform.json", &text)?;
        write_quadham(&out.path("final_p.json"), &run.p).map_err(|e| CliError::Io(e.to_string()))?;
        out.written.push("final_p.json".into());
    }
    let status = match &run.violation {
        Some(e) => {
            out.write("violation.csv", &violation_csv(e))?;
            "resonance"
        }
        None => "ok",
    };
    let records = serde_json::json!({
        "schedule": run.schedule,
        "assumptions": run.assumptions,
        "assumptions_hold": run.assumptions.all_hold(),
        "warnings": run.warnings,
        "steps": run.table.len(),
        "omega_shift": run.omega_shift(),
    });
    out.manifest("reduce", cfg, status, records)?;
    match &run.violation {
        Some(e) => Err(CliError::Resonance(e.to_string())),
        None => Ok(run),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureOutcome {
    pub gammas: Vec<f64>,
    pub fractions: Vec<f64>,
    pub slope: Option<f64>,
    pub a2: f64,
}

pub fn measure(cfg: &ExperimentConfig, out: &Path) -> Result<MeasureOutcome, CliError> {
    let mc = &cfg.measure;
    if mc.grid == 0 {
        return Err(CliError::Config("measure.grid must be positive".into()));
    }
    if mc.gamma_list.is_empty() || mc.gamma_list.iter().any(|g| !(*g > 0.0)) {
        return Err(CliError::Config("measure.gamma_list must be non-empty and positive".into()));
    }
    if mc.J == 0 || cfg.model.omega.is_empty() {
        return Err(CliError::Config("measure needs J >= 1 and a non-empty model.omega".into()));
    }
    let (kind, mass, jn, n) = (cfg.model.kind, cfg.model.m, mc.J, cfg.model.omega.len());
    let a2 = mc.A2_override.unwrap_or_else(|| default_a2(&normal_form(kind, mass, &cfg.model.omega, jn)));
    let q = ResonanceQuery {
        delta: mc.approximation.clone().unwrap_or_else(|| cfg.approximation.clone()),
        gamma: mc.gamma_list[0],
        k: mc.K,
        j: jn,
        a2,
    };
    let fractions = excluded_fractions(&q, &mc.gamma_list, n, |w| normal_form(kind, mass, w, jn), mc.grid)?;
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        mc.gamma_list.iter().zip(&fractions).filter(|(_, f)| **f > 0.0).map(|(g, f)| (g.ln(), f.ln())).unzip();
    let slope = (lx.len() >= 2).then(|| fit_slope(&lx, &ly));
    let mut csv = String::from("gamma,grid,excluded_fraction,slope_fit\n");
    let last = mc.gamma_list.len() - 1;
    for (idx, (g, f)) in mc.gamma_list.iter().zip(&fractions).enumerate() {
        let s = match slope {
            Some(s) if idx == last => real(s),
            _ => String::new(),
        };
        csv.push_str(&format!("{},{},{},{}\n", real(*g), mc.grid, real(*f), s));
    }
    let mut out = OutDir::create(out)?;
    out.write("measure.csv", &csv)?;
    let outcome = MeasureOutcome { gammas: mc.gamma_list.clone(), fractions, slope, a2 };
    out.manifest("measure", cfg, "ok", serde_json::json!({ "measure": outcome }))?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub sup_rel_error: f64,
    pub stability_direct: f64,
    pub stability_reduced: f64,
    pub stability_bound: f64,
    pub conjugate_defect: f64,
    pub unstable: bool,
    pub map_symplectic_defect: f64,
}

impl VerifyOutcome {
    pub fn passed(&self, tolerance: f64) -> bool {
        !self.unstable && self.sup_rel_error <= tolerance && self.stability_direct <= self.stability_bound
    }
}

/// z_j = e^{−aj} j^{−p−2} e^{iφ_j} with seeded phases, z̄ = conj(z).
pub fn initial_state(jn: usize, a: f64, p: f64, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![C64::new(0.0, 0.0); 2 * jn];
    for j in 0..jn {
        let jj = (j + 1) as f64;
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        z[j] = C64::from_polar((-a * jj).exp() * jj.powf(-p - 2.0), phi);
        z[jn + j] = z[j].conj();
    }
    z
}

/// Writes the comparison; the caller judges `passed`.
pub fn verify(cfg: &ExperimentConfig, out: &Path) -> Result<VerifyOutcome, CliError> {
    cfg.validate_model()?;
    let vc = &cfg.verify;
    if !(vc.t_end > 0.0 && vc.dt_factor > 0.0 && vc.samples > 0) {
        return Err(CliError::Config("verify needs t_end, dt_factor and samples positive".into()));
    }
    let m = &cfg.model;
    let (nf_inf, phi) = match &vc.chain_file {
        Some(path) => TransformFile::load(Path::new(path))?,
        None => {
            let run = run_reduction(cfg)?;
            if let Some(e) = run.violation {
                return Err(CliError::Resonance(e.to_string()));
            }
            let map = run.composed()?;
            (run.nf, map)
        }
    };
    let v = m.potential(cfg.seed)?;
    let (nf0, p0) = build_model(m.kind, m.m, m.epsilon, &v, m.J, m.K_cap, m.weights(), &m.omega)?;
    if phi.j != m.J || phi.n != m.omega.len() {
        return Err(CliError::Config(format!("transform has n={}, J={}; model has n={}, J={}", phi.n, phi.j, m.omega.len(), m.J)));
    }
    let z0 = initial_state(m.J, m.a, m.p, cfg.seed);
    let dt_max = dt_rule(&nf0) * vc.dt_factor;
    let steps = (vc.t_end / dt_max).ceil() as usize;
    let sample_every = (steps / vc.samples).max(1);
    let direct = integrate_direct(&nf0, &p0, &z0, vc.t_end, steps, sample_every)?;
    let reduced = integrate_reduced(&nf_inf, &phi, &z0, &direct.times, m.a, m.p)?;
    let outcome = VerifyOutcome {
        t_end: vc.t_end,
        dt: vc.t_end / steps as f64,
        steps,
        sup_rel_error: sup_relative_error(&direct, &reduced, m.a, m.p)?,
        stability_direct: stability_ratio(&direct)?,
        stability_reduced: stability_ratio(&reduced)?,
        stability_bound: 1.0 + vc.stability_factor * m.epsilon,
        conjugate_defect: direct.states.iter().map(|z| conjugate_defect(z)).fold(0.0, f64::max),
        unstable: direct.unstable,
        map_symplectic_defect: phi.symplectic_defect(),
    };
    let mut out = OutDir::create(out)?;
    let o = &outcome;
    out.write(
        "verify.csv",
        &format!(
            "T,dt,steps,sup_rel_error,stability_direct,stability_reduced,stability_bound,conjugate_defect,unstable\n{},{},{},{},{},{},{},{},{}\n",
            real(o.t_end),
            real(o.dt),
            o.steps,
            real(o.sup_rel_error),
            real(o.stability_direct),
            real(o.stability_reduced),
            real(o.stability_bound),
            real(o.conjugate_defect),
            o.unstable
        ),
    )?;
    out.write("trajectory_direct.csv", &trajectory_csv(&direct))?;
    out.write("trajectory_reduced.csv", &trajectory_csv(&reduced))?;
    let passed = outcome.passed(vc.tolerance);
    out.manifest("verify", cfg, if passed { "ok" } else { "failed" }, serde_json::json!({ "verify": outcome }))?;
    Ok(outcome)
}
