//! One function per subcommand, each producing a table.

use qbcharge_core::analysis::*;
use qbcharge_core::operator::MAX_DENSE_DIM;
use rayon::prelude::*;

use crate::checks::{self, micro_window, numeric_ergotropy, population_ratio_deviation, rate_factor, Inputs, Status};
use crate::config::{CommandKind, ExperimentConfig, PathChoice};
use crate::error::{CliError, Context};
use crate::output::{fmt_g, Cell, Table};
use crate::sim::{collective_curve, ergotropy_from_populations, microscopic_run, single_curve, time_scale, MicroSetup};

/// A finished table, plus the error to exit with once it has been written.
pub struct Report {
    pub table: Table,
    pub failure: Option<CliError>,
}

impl From<Table> for Report {
    fn from(table: Table) -> Self {
        Report { table, failure: None }
    }
}

pub fn run(cfg: &mut ExperimentConfig) -> Result<Report, CliError> {
    match cfg.command {
        CommandKind::Dynamics => dynamics(cfg).map(Report::from),
        CommandKind::SteadySweep => steady_sweep(cfg).map(Report::from),
        CommandKind::ChargingTime => charging(cfg),
        CommandKind::Ergotropy => ergotropy(cfg).map(Report::from),
        CommandKind::Validate => validate(cfg),
        CommandKind::Microscopic => microscopic(cfg).map(Report::from),
    }
}

fn dynamics(cfg: &mut ExperimentConfig) -> Result<Table, CliError> {
    let e = cfg.effective()?;
    let n = cfg.n_list[0];
    let t_end = *cfg.t_end.get_or_insert(60.0);
    let dt = *cfg.record_dt.get_or_insert(0.1);
    let path = cfg.charging_path();
    let (coll, single) = rayon::join(|| collective_curve(&e, n, t_end, dt, path), || single_curve(&e, t_end, dt));
    let (coll, single) = (coll?, single?);

    let nf = n as f64;
    let mut t =
        Table::new(vec!["time", "energy_collective", "energy_individual", "sigma_collective", "sigma_individual"]);
    for k in 0..coll.times.len() {
        let p = single.mean[k];
        t.push(vec![
            coll.times[k].into(),
            coll.mean[k].into(),
            (nf * p).into(),
            coll.variance[k].sqrt().into(),
            (nf * p * (1.0 - p)).max(0.0).sqrt().into(),
        ]);
    }
    let (c, i) = (collective_metrics(e.beta_e_omega0, n), individual_metrics(e.beta_e_omega0, n));
    t.note("energy_collective_steady", fmt_g(c.energy));
    t.note("energy_individual_steady", fmt_g(i.energy));
    t.note("sigma_collective_steady", fmt_g(c.sigma));
    t.note("sigma_individual_steady", fmt_g(i.sigma));
    Ok(t)
}

const SWEEP_HEADER: [&str; 7] = [
    "N",
    "density_collective",
    "density_individual",
    "sigma_collective",
    "sigma_individual",
    "ergotropy_ratio_collective",
    "ergotropy_ratio_individual",
];

/// Long-time excitation probability and ergotropy ratio of one battery
/// charged on its own.
fn single_steady(cfg: &ExperimentConfig) -> Result<(f64, f64), CliError> {
    let e = cfg.effective()?;
    let t_end = cfg.t_end.unwrap_or_else(|| 12.0 * time_scale(&e, 1, cfg.epsilon));
    let single = single_curve(&e, t_end, t_end / 10.0)?;
    let p = *single.mean.last().expect("non-empty grid");
    Ok((p, ergotropy_from_populations(&single.final_populations) / p))
}

/// Sweep rows from long-time integration rather than closed forms. The
/// reduced path is used up to N = 100 by default; beyond that the
/// population equations are much cheaper and exact for this initial state.
fn sweep_row_dynamic(cfg: &ExperimentConfig, n: usize, single: (f64, f64)) -> Result<[f64; 6], CliError> {
    let e = cfg.effective()?;
    let t_end = cfg.t_end.unwrap_or_else(|| 12.0 * time_scale(&e, n, cfg.epsilon));
    let path = match cfg.path {
        PathChoice::Auto if n <= 100 => ChargingPath::Reduced,
        PathChoice::Auto => ChargingPath::Populations,
        _ => cfg.charging_path(),
    };
    let coll = collective_curve(&e, n, t_end, t_end / 10.0, path)?;
    let nf = n as f64;
    let mean = *coll.mean.last().expect("non-empty grid");
    let var = *coll.variance.last().expect("non-empty grid");
    let erg = ergotropy_from_populations(&coll.final_populations);
    let (p, ratio_single) = single;
    Ok([mean / nf, p, var.sqrt(), (nf * p * (1.0 - p)).sqrt(), erg / mean, ratio_single])
}

fn steady_sweep(cfg: &mut ExperimentConfig) -> Result<Table, CliError> {
    let beta = cfg.beta_e;
    let single = if cfg.from_dynamics { Some(single_steady(cfg)?) } else { None };
    let rows: Vec<Result<[f64; 6], CliError>> = cfg
        .n_list
        .par_iter()
        .map(|&n| match single {
            Some(s) => sweep_row_dynamic(cfg, n, s),
            None => {
                let (c, i) = (collective_metrics(beta, n), individual_metrics(beta, n));
                Ok([c.energy_density, i.energy_density, c.sigma, i.sigma, c.ergotropy_ratio, i.ergotropy_ratio])
            }
        })
        .collect();

    let mut t = Table::new(SWEEP_HEADER.to_vec());
    let mut worst: f64 = 0.0;
    for (&n, row) in cfg.n_list.iter().zip(rows) {
        let row = row?;
        if cfg.from_dynamics {
            let (c, i) = (collective_metrics(beta, n), individual_metrics(beta, n));
            let exact = [c.energy_density, i.energy_density, c.sigma, i.sigma, c.ergotropy_ratio, i.ergotropy_ratio];
            worst = row.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
        let mut cells = vec![Cell::Int(n)];
        cells.extend(row.iter().map(|&x| Cell::Num(x)));
        t.push(cells);
    }
    if cfg.from_dynamics {
        t.note("max_deviation_from_closed_form", fmt_g(worst));
    }
    Ok(t)
}

fn charging(cfg: &mut ExperimentConfig) -> Result<Report, CliError> {
    let e = cfg.effective()?;
    let eps = cfg.epsilon;
    let opts = ChargingOptions { path: cfg.charging_path(), t_max: cfg.t_end, ..ChargingOptions::default() };
    let tau_1 = charging_tau(&e, 1, eps, &opts).context(|| "single-battery charging time".into())?.tau;
    let results: Vec<_> = cfg
        .n_list
        .par_iter()
        .map(|&n| if n == 1 { Ok(tau_1) } else { charging_tau(&e, n, eps, &opts).map(|c| c.tau) })
        .collect();

    let mut t = Table::new(vec!["N", "tau_N", "speed_ratio", "normalized_ratio", "cascade_estimate", "status"]);
    let mut failure = None;
    for (&n, r) in cfg.n_list.iter().zip(results) {
        match r {
            Ok(tau) => {
                let m = charging_metrics(&e, n, eps, tau, tau_1);
                t.push(vec![
                    n.into(),
                    m.tau_n.into(),
                    m.speed_ratio.into(),
                    m.normalized_ratio.into(),
                    m.cascade_estimate.into(),
                    Cell::Text("ok".into()),
                ]);
            }
            Err(err) => {
                t.push(vec![n.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Text(err.to_string())]);
                failure
                    .get_or_insert(CliError::Numerical { context: format!("charging time for N = {n}"), source: err });
            }
        }
    }
    t.note("tau_1", fmt_g(tau_1));
    t.note("tau_1_closed_form", fmt_g(single_battery_charging_time(&e, eps)));
    Ok(Report { table: t, failure })
}

/// Largest N for which the eigen-sort ergotropy is computed on the full space.
const ERGOTROPY_NUMERIC_MAX_N: usize = 12;

fn ergotropy(cfg: &mut ExperimentConfig) -> Result<Table, CliError> {
    let beta = cfg.beta_e;
    let numeric: Vec<Result<Option<f64>, CliError>> = cfg
        .n_list
        .par_iter()
        .map(|&n| if n <= ERGOTROPY_NUMERIC_MAX_N { numeric_ergotropy(beta, n).map(Some) } else { Ok(None) })
        .collect();
    let mut t = Table::new(vec![
        "N",
        "ergotropy_closed",
        "ergotropy_numeric",
        "abs_difference",
        "locked_energy",
        "ergotropy_ratio_collective",
        "ergotropy_ratio_individual",
    ]);
    let mut worst: f64 = 0.0;
    for (&n, num) in cfg.n_list.iter().zip(numeric) {
        let num = num?;
        let closed = ergotropy_closed(beta, n);
        let diff = num.map(|x| (x - closed).abs());
        if let Some(d) = diff {
            worst = worst.max(d);
        }
        t.push(vec![
            n.into(),
            closed.into(),
            num.into(),
            diff.into(),
            locked_energy(beta, n).into(),
            collective_metrics(beta, n).ergotropy_ratio.into(),
            individual_metrics(beta, n).ergotropy_ratio.into(),
        ]);
    }
    t.note("max_abs_difference", fmt_g(worst));
    Ok(t)
}

fn validate(cfg: &mut ExperimentConfig) -> Result<Report, CliError> {
    let inputs = Inputs { effective: cfg.effective()?, engine: cfg.engine.clone() };
    let results = checks::run_all(&inputs);
    let mut t = Table::new(vec!["check", "value", "tolerance", "status"]);
    for c in &results {
        let status =
            if c.status == Status::Error { format!("error: {}", c.detail) } else { c.status.as_str().to_string() };
        t.push(vec![Cell::Text(c.name.into()), c.value.into(), c.tolerance.into(), Cell::Text(status)]);
    }
    let failure = if let Some(c) = results.iter().find(|c| c.status == Status::Error) {
        Some(CliError::Aborted(format!("check {} could not run: {}", c.name, c.detail)))
    } else {
        let failed: Vec<&str> = results.iter().filter(|c| c.status == Status::Fail).map(|c| c.name).collect();
        (!failed.is_empty()).then(|| CliError::Validation(format!("failed checks: {}", failed.join(", "))))
    };
    Ok(Report { table: t, failure })
}

fn microscopic(cfg: &mut ExperimentConfig) -> Result<Table, CliError> {
    let n = cfg.n_list[0];
    let setup = MicroSetup {
        engine: cfg.engine.params()?,
        batteries: n,
        engines: cfg.engine.engines,
        normalize: cfg.engine.normalize,
    };
    let eff = setup.effective()?;
    let dim = 3f64.powi(setup.engines as i32) * 2f64.powi(n as i32);
    if dim > MAX_DENSE_DIM as f64 {
        return Err(CliError::usage(format!(
            "{} engines and {n} batteries span dimension {dim}, above the dense cap {MAX_DENSE_DIM}",
            setup.engines
        )));
    }
    let t_end = match cfg.t_end {
        Some(t) => t,
        None => micro_window(&eff, n)?,
    };
    cfg.t_end = Some(t_end);
    let dt = *cfg.record_dt.get_or_insert(t_end / 1000.0);
    let run = microscopic_run(&setup, t_end, dt)?;

    let mut t = Table::new(vec!["time", "energy_microscopic", "energy_effective"]);
    for k in 0..run.times.len() {
        t.push(vec![run.times[k].into(), run.energy_micro[k].into(), run.energy_effective[k].into()]);
    }
    let ratio = qbcharge_core::models::timescale_separation_ratio(&setup.engine, n);
    t.note("timescale_ratio", fmt_g(ratio));
    t.note("beta_e_formula", fmt_g(eff.beta_e_omega0));
    t.note("beta_e_fit", fmt_g(run.beta_fit));
    t.note("population_ratio_deviation", fmt_g(population_ratio_deviation(run.beta_fit, eff.beta_e_omega0)));
    t.note("steady_state_source", if run.steady_from_null_space { "null-space" } else { "end-of-trajectory" });
    t.note("gamma_e_formula", fmt_g(eff.gamma_e));
    match run.gamma_fit {
        Some(g) => {
            t.note("gamma_e_fit", fmt_g(g));
            t.note("gamma_e_factor", fmt_g(rate_factor(g, eff.gamma_e)));
        }
        None => t.note("gamma_e_fit", "unavailable (half rise not reached)"),
    }
    Ok(t)
}
