//! Numerical self-checks run by `validate`.

use num_complex::Complex;
use qbcharge_core::analysis::*;
use qbcharge_core::linalg::trace_distance;
use qbcharge_core::lindblad::{evolve, evolve_with, liouvillian_apply, steady_state_numeric, EvolveOptions};
use qbcharge_core::models::*;
use qbcharge_core::operator::{battery_hamiltonian, collective_spin_ops, DensityMatrix, Operator};
use qbcharge_core::symmetric::*;
use rayon::prelude::*;

use crate::config::EngineConfig;
use crate::error::{CliError, Context};
use crate::sim::{microscopic_run, time_scale, MicroSetup};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Error => "error",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    /// Upper bound on `value`.
    pub tolerance: f64,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn bound(name: &'static str, value: f64, tolerance: f64) -> Self {
        let status = if value < tolerance { Status::Pass } else { Status::Fail };
        Check { name, value, tolerance, status, detail: String::new() }
    }

    fn failed(name: &'static str, tolerance: f64, err: CliError) -> Self {
        Check { name, value: f64::NAN, tolerance, status: Status::Error, detail: err.to_string() }
    }
}

type Runner = fn(&Inputs) -> Result<f64, CliError>;

/// Parameters the checks run at.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub effective: EffectiveParams,
    pub engine: EngineConfig,
}

pub const CHECKS: &[(&str, f64, Runner)] = &[
    ("capacity_summation", 1e-12, capacity_summation),
    ("trace_drift", 1e-8, trace_drift),
    ("j_leakage", 1e-10, j_leakage),
    ("reduction_equivalence", 1e-8, reduction_equivalence),
    ("sz_equation_residual", 1e-4, sz_equation_residual),
    ("engine_fixed_point", 1e-10, engine_fixed_point),
    ("rate_vs_dicke", 1e-10, rate_vs_dicke),
    ("ergotropy_closed_vs_numeric", 1e-9, ergotropy_agreement),
    ("microscopic_population_ratio", 0.01, micro_population_ratio),
    ("microscopic_rate_factor", 2.0, micro_rate_factor),
];

/// Runs every check, in parallel, reporting in the fixed order above.
pub fn run_all(inputs: &Inputs) -> Vec<Check> {
    CHECKS.par_iter().map(|&(name, tol, f)| run_one(name, tol, f, inputs)).collect()
}

pub fn run_named(name: &str, inputs: &Inputs) -> Option<Check> {
    CHECKS.iter().find(|c| c.0 == name).map(|&(name, tol, f)| run_one(name, tol, f, inputs))
}

fn run_one(name: &'static str, tol: f64, f: Runner, inputs: &Inputs) -> Check {
    match f(inputs) {
        Ok(v) => Check::bound(name, v, tol),
        Err(e) => Check::failed(name, tol, e),
    }
}

fn ctx(what: &'static str) -> impl FnOnce() -> String {
    move || what.to_string()
}

/// Closed-form mean against direct summation over the Gibbs populations.
fn capacity_summation(i: &Inputs) -> Result<f64, CliError> {
    let beta = i.effective.beta_e_omega0;
    let worst = [1usize, 2, 10, 100, 1000, 10_000]
        .iter()
        .map(|&n| {
            let direct: f64 = gibbs_populations(beta, n).iter().enumerate().map(|(m, p)| m as f64 * p).sum();
            (capacity_exact(beta, n).density - direct / n as f64).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

fn trace_drift(i: &Inputs) -> Result<f64, CliError> {
    let n = 10;
    let model = reduced_model(&i.effective, n).context(ctx("trace drift"))?;
    let t_end = 3.0 * time_scale(&i.effective, n, DEFAULT_EPSILON);
    let rho0 = ReducedState::ground(n).context(ctx("trace drift"))?;
    let traj = evolve(&model, rho0.state(), t_end, &[], t_end / 100.0).context(ctx("trace drift"))?;
    Ok(traj.max_trace_drift)
}

/// Weight outside the symmetric sector along a full-space N = 3 trajectory.
fn j_leakage(i: &Inputs) -> Result<f64, CliError> {
    let n = 3;
    let c = ctx("total-spin leakage");
    let full = effective_battery_model(&i.effective, n, true).context(c)?;
    let t_end = 3.0 * time_scale(&i.effective, n, DEFAULT_EPSILON);
    let opts = EvolveOptions { snapshot_every: Some(1), ..EvolveOptions::default() };
    let rho0 = DensityMatrix::basis_state(full.space(), 0).context(ctx("total-spin leakage"))?;
    let traj = evolve_with(&full, &rho0, t_end, &[], t_end / 50.0, &opts).context(ctx("total-spin leakage"))?;
    let mut worst: f64 = 0.0;
    for (_, rho) in &traj.snapshots {
        worst = worst.max(project_symmetric(rho).context(ctx("total-spin leakage"))?.leakage.abs());
    }
    Ok(worst)
}

fn reduction_equivalence(i: &Inputs) -> Result<f64, CliError> {
    let e = &i.effective;
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let c = || format!("reduction equivalence at N = {n}");
        let path = ChargingOptions::default();
        let t_end = 3.0
            * if e.is_inverted() {
                charging_tau(e, n, DEFAULT_EPSILON, &path).context(c)?.tau
            } else {
                time_scale(e, n, DEFAULT_EPSILON)
            };
        let opts = EvolveOptions { snapshot_every: Some(1), ..EvolveOptions::default() };
        let reduced = reduced_model(e, n).context(c)?;
        let full = effective_battery_model(e, n, true).context(c)?;
        let r0 = ReducedState::ground(n).context(c)?;
        let tr = evolve_with(&reduced, r0.state(), t_end, &[], t_end / 60.0, &opts).context(c)?;
        let tf = evolve_with(&full, &embed_reduced(&r0).context(c)?, t_end, &[], t_end / 60.0, &opts).context(c)?;
        for ((_, a), (_, b)) in tr.snapshots.iter().zip(&tf.snapshots) {
            let emb = embed_reduced(&ReducedState::new(n, a.clone()).context(c)?).context(c)?;
            worst = worst.max(trace_distance(emb.matrix(), b.matrix()));
        }
    }
    Ok(worst)
}

/// `S^Z` and `S^- S^+` on the ladder space.
fn spin_observables(n: usize) -> qbcharge_core::Result<(Operator, Operator)> {
    let l = hp_ladder(n)?;
    let h = reduced_hamiltonian(n)?;
    let shift = Operator::identity(h.space()).scale(Complex::new(n as f64 / 2.0, 0.0));
    Ok((&h - &shift, &l.pi_s_minus * &l.pi_s_plus))
}

fn sz_equation_residual(i: &Inputs) -> Result<f64, CliError> {
    let n = 4;
    let c = ctx("S^Z equation of motion");
    let (sz, smsp) = spin_observables(n).context(c)?;
    let model = reduced_model(&i.effective, n).context(ctx("S^Z equation of motion"))?;
    let obs = [(SZ_OBSERVABLE, &sz), (SM_SP_OBSERVABLE, &smsp)];
    let t_end = time_scale(&i.effective, n, DEFAULT_EPSILON).max(1.0);
    let rho0 = ReducedState::ground(n).context(ctx("S^Z equation of motion"))?;
    let traj = evolve(&model, rho0.state(), t_end, &obs, 0.01).context(ctx("S^Z equation of motion"))?;
    sz_rate_check(&traj, &i.effective).context(ctx("S^Z equation of motion"))
}

/// Closed-form engine populations against the generator's null vector, and
/// the generator applied to the closed form.
fn engine_fixed_point(i: &Inputs) -> Result<f64, CliError> {
    let p = i.engine.params()?;
    let model = engine_model(&p).context(ctx("engine fixed point"))?;
    let exact = engine_steady_state(&p);
    let numeric = steady_state_numeric(&model).context(ctx("engine fixed point"))?;
    let diff = (numeric.matrix() - exact.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residual = liouvillian_apply(&model, exact.operator()).context(ctx("engine fixed point"))?.max_norm();
    Ok(diff.max(residual))
}

/// `d⟨S^Z⟩/dt` in each Dicke state against the birth-death rate, using the
/// full-space jump operators on state vectors.
fn rate_vs_dicke(i: &Inputs) -> Result<f64, CliError> {
    let e = &i.effective;
    let mut worst: f64 = 0.0;
    for n in 1..=10 {
        let c = || format!("Dicke rates at N = {n}");
        let full = effective_battery_model(e, n, true).context(c)?;
        let sz = collective_spin_ops(n).context(c)?.s_z;
        for m in 0..=n {
            let psi = dicke_state(n, m).context(c)?;
            let szpsi = sz.apply(&psi).context(c)?;
            let mut rate = 0.0;
            for jump in full.jumps() {
                let a_psi = jump.operator.apply(&psi).context(c)?;
                let a_szpsi = jump.operator.apply(&szpsi).context(c)?;
                let gain = a_psi.dotc(&sz.apply(&a_psi).context(c)?).re;
                let loss = a_psi.dotc(&a_szpsi).re;
                rate += jump.rate * (gain - loss);
            }
            let h_szpsi = full.hamiltonian().apply(&szpsi).context(c)?;
            let sz_hpsi = sz.apply(&full.hamiltonian().apply(&psi).context(c)?).context(c)?;
            // i⟨[H, S^Z]⟩
            rate += -psi.dotc(&(h_szpsi - sz_hpsi)).im;
            let w = excitation_rate_w(e.beta_e_omega0, e.gamma_e, n, m).context(c)?;
            worst = worst.max((rate - w).abs());
        }
    }
    Ok(worst)
}

fn ergotropy_agreement(i: &Inputs) -> Result<f64, CliError> {
    let beta = i.effective.beta_e_omega0;
    let mut worst: f64 = 0.0;
    for n in 1..=12 {
        worst = worst.max((numeric_ergotropy(beta, n)? - ergotropy_closed(beta, n)).abs());
    }
    Ok(worst)
}

/// Eigen-sort ergotropy of the embedded steady state on the full space.
pub fn numeric_ergotropy(beta: f64, n: usize) -> Result<f64, CliError> {
    let c = || format!("numeric ergotropy at N = {n}");
    let rs = ReducedState::from_populations(n, &gibbs_populations(beta, n)).context(c)?;
    let rho = embed_reduced(&rs).context(c)?;
    ergotropy_numeric(&rho, &battery_hamiltonian(n).context(c)?).context(c)
}

fn reference_setup(i: &Inputs) -> Result<MicroSetup, CliError> {
    Ok(MicroSetup { engine: i.engine.params()?, batteries: 1, engines: 1, normalize: i.engine.normalize })
}

/// Charging time of the effective model, the default window of micro runs.
pub fn micro_window(e: &EffectiveParams, n: usize) -> Result<f64, CliError> {
    Ok(charging_tau(e, n, DEFAULT_EPSILON, &ChargingOptions::default())
        .context(|| format!("effective charging time at N = {n}"))?
        .tau)
}

fn micro_population_ratio(i: &Inputs) -> Result<f64, CliError> {
    let s = reference_setup(i)?;
    let t_end = micro_window(&s.effective()?, 1)?;
    let run = microscopic_run(&s, t_end, t_end / 1000.0)?;
    Ok(population_ratio_deviation(run.beta_fit, run.effective.beta_e_omega0))
}

fn micro_rate_factor(i: &Inputs) -> Result<f64, CliError> {
    let s = reference_setup(i)?;
    let t_end = micro_window(&s.effective()?, 1)?;
    let run = microscopic_run(&s, t_end, t_end / 1000.0)?;
    Ok(run.gamma_fit.map_or(f64::INFINITY, |g| rate_factor(g, run.effective.gamma_e)))
}

/// `|e^{−β_fit} − e^{−β}| / e^{−β}`.
pub fn population_ratio_deviation(beta_fit: f64, beta: f64) -> f64 {
    ((beta - beta_fit).exp() - 1.0).abs()
}

/// `max(a/b, b/a)`.
pub fn rate_factor(a: f64, b: f64) -> f64 {
    (a / b).max(b / a)
}
