//! Trajectories and fits shared by the subcommands and the check suite.

use qbcharge_core::analysis::{cascade_time_estimate, mean_excitation, single_battery_charging_time, ChargingPath};
use qbcharge_core::lindblad::{evolve, steady_state_numeric, MAX_NULL_SPACE_DIM};
use qbcharge_core::models::{
    battery_state, coupled_model, effective_params, engine_populations, ChargingScheme, EffectiveParams, EngineParams,
};
use qbcharge_core::ode::IntegratorOptions;
use qbcharge_core::operator::{DensityMatrix, Operator};
use qbcharge_core::symmetric::{
    project_symmetric, reduced_hamiltonian, reduced_model, reduced_space, PopulationModel, ReducedState,
};

use crate::error::{CliError, Context};

/// Mean and variance of the excitation number on a uniform grid.
#[derive(Clone, Debug)]
pub struct Curve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Populations of the excitation number at the last grid point.
    pub final_populations: Vec<f64>,
}

/// Collective charging from the ground state.
pub fn collective_curve(
    e: &EffectiveParams,
    n: usize,
    t_end: f64,
    dt: f64,
    path: ChargingPath,
) -> Result<Curve, CliError> {
    let ctx = || format!("collective dynamics for N = {n}");
    match path.resolve(n) {
        ChargingPath::Populations => {
            let model = PopulationModel::new(e, n).context(ctx)?;
            let mut p0 = vec![0.0; n + 1];
            p0[0] = 1.0;
            let t = model.evolve(&p0, t_end, dt, &IntegratorOptions::default()).context(ctx)?;
            Ok(Curve { times: t.times, mean: t.mean, variance: t.variance, final_populations: t.final_populations })
        }
        _ => {
            let model = reduced_model(e, n).context(ctx)?;
            let h = reduced_hamiltonian(n).context(ctx)?;
            let sq: Vec<f64> = (0..=n).map(|m| (m * m) as f64).collect();
            let h2 = Operator::from_real_diagonal(&reduced_space(n).context(ctx)?, &sq).context(ctx)?;
            let rho0 = ReducedState::ground(n).context(ctx)?;
            let traj = evolve(&model, rho0.state(), t_end, &[("H", &h), ("H2", &h2)], dt).context(ctx)?;
            let mean = traj.require("H").context(ctx)?.to_vec();
            let second = traj.require("H2").context(ctx)?;
            let variance = mean.iter().zip(second).map(|(m, s)| (s - m * m).max(0.0)).collect();
            Ok(Curve { times: traj.times, mean, variance, final_populations: traj.final_state.populations() })
        }
    }
}

/// Excited-state probability of one battery charged on its own.
pub fn single_curve(e: &EffectiveParams, t_end: f64, dt: f64) -> Result<Curve, CliError> {
    collective_curve(e, 1, t_end, dt, ChargingPath::Reduced)
}

/// Ergotropy of a state diagonal in the Dicke basis, measured on the full
/// `2^N` space: the passive state puts the largest weight on the ground level
/// and the rest on single excitations.
pub fn ergotropy_from_populations(p: &[f64]) -> f64 {
    let energy: f64 = p.iter().enumerate().map(|(m, x)| m as f64 * x).sum();
    let top = p.iter().copied().fold(0.0, f64::max);
    energy - (1.0 - top)
}

/// Rough charging-time scale used to size default integration windows.
pub fn time_scale(e: &EffectiveParams, n: usize, epsilon: f64) -> f64 {
    let single = single_battery_charging_time(e, epsilon);
    match cascade_time_estimate(e.beta_e_omega0, e.gamma_e, n) {
        Ok(c) if e.is_inverted() => c.max(single / n as f64),
        _ => single / n as f64,
    }
}

/// Time at which `y` first reaches `level`, linearly interpolated.
pub fn crossing_time(times: &[f64], y: &[f64], level: f64) -> Option<f64> {
    let k = y.iter().position(|&v| v >= level)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (t0, t1, y0, y1) = (times[k - 1], times[k], y[k - 1], y[k]);
    Some(t0 + (level - y0) / (y1 - y0) * (t1 - t0))
}

/// Settings of a microscopic engine + battery run.
#[derive(Clone, Copy, Debug)]
pub struct MicroSetup {
    pub engine: EngineParams,
    pub batteries: usize,
    pub engines: usize,
    pub normalize: bool,
}

impl MicroSetup {
    /// Effective parameters predicted for this setup: the coupling enters as
    /// `g/√N` when normalized, and each engine pumps independently.
    pub fn effective(&self) -> Result<EffectiveParams, CliError> {
        let mut p = self.engine;
        if self.normalize {
            p.g /= (self.batteries as f64).sqrt();
        }
        let e = effective_params(&p).map_err(|e| CliError::usage(e.to_string()))?;
        EffectiveParams::new(e.beta_e_omega0, e.gamma_e * self.engines as f64)
            .map_err(|e| CliError::usage(e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct MicroRun {
    pub effective: EffectiveParams,
    pub times: Vec<f64>,
    pub energy_micro: Vec<f64>,
    pub energy_effective: Vec<f64>,
    /// `−ln(p_1/p_0)` from the symmetric battery populations at steady state.
    pub beta_fit: f64,
    /// Effective rate rescaled by the ratio of half-rise times.
    pub gamma_fit: Option<f64>,
    pub steady_from_null_space: bool,
}

/// Integrates the coupled model from engines at their own steady state and
/// batteries in the ground state, alongside the effective reduced model.
pub fn microscopic_run(s: &MicroSetup, t_end: f64, dt: f64) -> Result<MicroRun, CliError> {
    let n = s.batteries;
    let eff = s.effective()?;
    let ctx = || format!("microscopic run with N = {n}, M = {}", s.engines);
    let model = coupled_model(&s.engine, n, s.engines, ChargingScheme::Collective, s.normalize).context(ctx)?;
    let dim = model.dim();
    let nb = 1usize << n;

    let pops = engine_populations(&s.engine);
    let mut probs = vec![0.0; dim];
    for (x, slot) in probs.iter_mut().enumerate().step_by(nb) {
        let mut w = 1.0;
        let mut rest = x / nb;
        for _ in 0..s.engines {
            w *= pops[rest % 3];
            rest /= 3;
        }
        *slot = w;
    }
    let rho0 = DensityMatrix::from_diagonal(model.space(), &probs).context(ctx)?;
    let energy: Vec<f64> = (0..dim).map(|x| (x % nb).count_ones() as f64).collect();
    let hb = Operator::from_real_diagonal(model.space(), &energy).context(ctx)?;
    let traj = evolve(&model, &rho0, t_end, &[("HB", &hb)], dt).context(ctx)?;
    let energy_micro = traj.require("HB").context(ctx)?.to_vec();

    let reduced = reduced_model(&eff, n).context(ctx)?;
    let h = reduced_hamiltonian(n).context(ctx)?;
    let reff = evolve(&reduced, ReducedState::ground(n).context(ctx)?.state(), t_end, &[("H", &h)], dt).context(ctx)?;
    let energy_effective = reff.require("H").context(ctx)?.to_vec();

    // with several batteries the non-symmetric sectors make the null space
    // degenerate, so the end of the trajectory stands in for the steady state
    let steady_from_null_space = n == 1 && dim <= MAX_NULL_SPACE_DIM;
    let steady = if steady_from_null_space { steady_state_numeric(&model).context(ctx)? } else { traj.final_state };
    let battery = battery_state(&steady, s.engines).context(ctx)?;
    let sym = project_symmetric(&battery).context(ctx)?;
    let p = match sym.state {
        Some(rs) => rs.populations(),
        None => battery.populations(),
    };
    let beta_fit = -(p[1] / p[0]).ln();

    let half = mean_excitation(eff.beta_e_omega0, n) / 2.0;
    let gamma_fit =
        match (crossing_time(&traj.times, &energy_micro, half), crossing_time(&reff.times, &energy_effective, half)) {
            (Some(tm), Some(te)) if tm > 0.0 => Some(eff.gamma_e * te / tm),
            _ => None,
        };
    Ok(MicroRun {
        effective: eff,
        times: traj.times,
        energy_micro,
        energy_effective,
        beta_fit,
        gamma_fit,
        steady_from_null_space,
    })
}
