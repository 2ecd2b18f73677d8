//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::process::Command;
use std::time::{Duration, Instant};

use qbcharge_cli::checks::{run_named, Inputs, Status};
use qbcharge_cli::config::EngineConfig;
use qbcharge_core::analysis::*;
use qbcharge_core::models::EffectiveParams;

const BETA: f64 = -0.8;

struct Csv {
    rows: Vec<Vec<String>>,
    header: Vec<String>,
    notes: Vec<(String, String)>,
}

impl Csv {
    fn col(&self, name: &str) -> Vec<f64> {
        let k = self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[k].parse().unwrap_or(f64::NAN)).collect()
    }

    fn note(&self, key: &str) -> f64 {
        self.notes.iter().find(|(k, _)| k == key).and_then(|(_, v)| v.parse().ok()).unwrap_or(f64::NAN)
    }
}

/// Runs the binary and parses its CSV; `Err` carries the exit status and stderr.
fn qbcharge(args: &[&str]) -> Result<Csv, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qbcharge")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim()));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    let header = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for l in lines {
        match l.strip_prefix("# ") {
            Some(n) => {
                let (k, v) = n.split_once(" = ").unwrap_or((n, ""));
                notes.push((k.to_string(), v.to_string()));
            }
            None => rows.push(l.split(',').map(str::to_string).collect()),
        }
    }
    Ok(Csv { rows, header, notes })
}

type Criterion = fn() -> Result<Outcome, String>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[(bool, String)]) -> Outcome {
    let pass = checks.iter().all(|c| c.0);
    let detail = checks
        .iter()
        .map(|(ok, s)| if *ok { s.clone() } else { format!("[failed] {s}") })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { pass, detail }
}

fn near(x: f64, reference: f64, tol: f64) -> bool {
    (x - reference).abs() <= tol
}

fn capacity() -> Result<Outcome, String> {
    let d = |n| capacity_exact(BETA, n).density;
    let mut c = vec![
        (near(d(1), 0.689974, 1e-6), format!("e_1 = {:.9}", d(1))),
        (near(d(10), 0.918569, 1e-6), format!("e_10 = {:.9}", d(10))),
        (near(d(100), 0.99184, 5e-6), format!("e_100 = {:.9}", d(100))),
    ];
    let dens: Vec<f64> = (1..=2000).map(d).collect();
    c.push((dens.windows(2).all(|w| w[1] > w[0]) && dens[1999] < 1.0, "increasing below 1 up to N = 2000".into()));
    let n = 1_000_000;
    let tail = n as f64 * (1.0 - d(n));
    c.push((near(tail, 0.81597, 1e-5), format!("N(1-e_N) at 1e6 = {tail:.7}")));
    let ind = (1..=1000).all(|n| near(individual_metrics(BETA, n).energy_density, d(1), 1e-12));
    c.push((ind, "individual density constant".into()));
    let sweep = qbcharge(&["steady-sweep", "--from-dynamics", "--n-list", "1,2,5,10,20,50,100"])?;
    let dev = sweep.note("max_deviation_from_closed_form");
    c.push((dev < 1e-6, format!("dynamics vs closed form {dev:.2e}")));
    Ok(outcome(&c))
}

fn direct_sigma(n: usize) -> f64 {
    let p = gibbs_populations(BETA, n);
    let mean: f64 = p.iter().enumerate().map(|(m, x)| m as f64 * x).sum();
    p.iter().enumerate().map(|(m, x)| (m as f64 - mean).powi(2) * x).sum::<f64>().sqrt()
}

fn fluctuations() -> Result<Outcome, String> {
    let limit = fluctuation_asymptote(BETA);
    let s10 = fluctuation_exact(BETA, 10);
    let worst = (1..=1000).map(|n| (fluctuation_exact(BETA, n) - direct_sigma(n)).abs()).fold(0.0, f64::max);
    let s1 = individual_metrics(BETA, 1).sigma;
    let ind =
        (1..=1000).map(|n| (individual_metrics(BETA, n).sigma - s1 * (n as f64).sqrt()).abs()).fold(0.0, f64::max);
    Ok(outcome(&[
        (near(limit, 1.21728, 5e-6), format!("limit {limit:.7}")),
        ((s10 - limit).abs() < 0.01, format!("|sigma_10 - limit| = {:.5}", (s10 - limit).abs())),
        (worst < 1e-6, format!("closed vs summed moments {worst:.1e}")),
        (near(s1, 0.4625037, 1e-6) && ind < 1e-6, format!("individual sigma_N = {s1:.7} sqrt(N)")),
    ]))
}

fn ergotropy() -> Result<Outcome, String> {
    let r10 = collective_metrics(BETA, 10).ergotropy_ratio;
    let scaled: Vec<f64> = [10usize, 100, 1000, 10_000, 100_000]
        .iter()
        .map(|&n| n as f64 * (1.0 - collective_metrics(BETA, n).ergotropy_ratio))
        .collect();
    let bound = scaled.iter().copied().fold(0.0, f64::max);
    let ind = (1..=1000).all(|n| near(individual_metrics(BETA, n).ergotropy_ratio, 0.550671, 1e-6));
    let table = qbcharge(&["ergotropy", "--n-list", "1..12"])?;
    let diff = table.note("max_abs_difference");
    Ok(outcome(&[
        (near(r10, 0.95109, 5e-6), format!("ratio_10 = {r10:.7}")),
        (
            bound < 2.0 && collective_metrics(BETA, 100_000).ergotropy_ratio > 0.99999,
            format!("N(1-ratio) <= {bound:.4}"),
        ),
        (ind, "individual ratio 0.550671".into()),
        (diff < 1e-9, format!("closed vs eigen-sort {diff:.1e}")),
    ]))
}

fn inputs() -> Inputs {
    Inputs { effective: EffectiveParams::new(BETA, 0.1).unwrap(), engine: EngineConfig::default() }
}

fn check_line(name: &str) -> (bool, String) {
    let c = run_named(name, &inputs()).expect("known check");
    let ok = c.status == Status::Pass;
    (
        ok,
        format!(
            "{name} {:.2e} < {:.0e}{}",
            c.value,
            c.tolerance,
            if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) }
        ),
    )
}

fn reduction() -> Result<Outcome, String> {
    Ok(outcome(&[check_line("reduction_equivalence")]))
}

fn microscopic() -> Result<Outcome, String> {
    let m = qbcharge(&["microscopic"])?;
    let ratio = m.note("timescale_ratio");
    let dev = m.note("population_ratio_deviation");
    let factor = m.note("gamma_e_factor");
    Ok(outcome(&[
        (near(ratio, 7.3e-3, 5e-5), format!("timescale ratio {ratio:.4e}")),
        (dev < 0.01, format!("population ratio deviation {dev:.2e}")),
        (
            factor <= 2.0,
            format!(
                "Gamma_e fit {:.6e} vs formula {:.6e} (factor {factor:.4})",
                m.note("gamma_e_fit"),
                m.note("gamma_e_formula")
            ),
        ),
    ]))
}

fn band(n: &[f64], normalized: &[f64]) -> (f64, f64) {
    let vals: Vec<f64> =
        n.iter().zip(normalized).filter(|(n, _)| (10.0..=500.0).contains(*n)).map(|(_, v)| *v).collect();
    (vals.iter().copied().fold(f64::INFINITY, f64::min), vals.iter().copied().fold(0.0, f64::max))
}

fn charging_speed() -> Result<Outcome, String> {
    let start = Instant::now();
    let listed = qbcharge(&["charging-time", "--n-list", "1,2,5,10,20,50,100,200,500", "--path", "reduced"])?;
    let elapsed = start.elapsed();
    let scan = qbcharge(&["charging-time", "--n-list", "1..500", "--path", "populations"])?;

    let tau1 = listed.col("tau_N")[0];
    let speed = scan.col("speed_ratio");
    let increasing = speed.windows(2).all(|w| w[1] > w[0]);
    let (lo, hi) = band(&scan.col("N"), &scan.col("normalized_ratio"));
    let cascade_ok = listed
        .col("tau_N")
        .iter()
        .zip(listed.col("cascade_estimate"))
        .skip(1)
        .all(|(t, c)| c.is_finite() && t / c <= 5.0 && c / t <= 5.0);
    let scan_tau = scan.col("tau_N");
    let reduced_vs_populations = listed
        .col("N")
        .iter()
        .zip(listed.col("tau_N"))
        .map(|(&n, t)| (t - scan_tau[n as usize - 1]).abs() / t)
        .fold(0.0, f64::max);
    Ok(outcome(&[
        (near(tau1, 21.415, 21.415 * 5e-3), format!("tau_1 = {tau1:.5}")),
        (increasing, "speed ratio strictly increasing on 1..500".into()),
        (hi / lo <= 2.0, format!("normalized ratio band on [10, 500]: {lo:.4}..{hi:.4} (x{:.3})", hi / lo)),
        (cascade_ok, "cascade estimate within x5".into()),
        (reduced_vs_populations < 1e-6, format!("reduced vs populations tau {reduced_vs_populations:.1e}")),
        (elapsed < Duration::from_secs(600), format!("reduced sweep {:.0} s", elapsed.as_secs_f64())),
    ]))
}

fn generator() -> Result<Outcome, String> {
    Ok(outcome(&[
        check_line("trace_drift"),
        check_line("j_leakage"),
        check_line("sz_equation_residual"),
        check_line("engine_fixed_point"),
        check_line("rate_vs_dicke"),
    ]))
}

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        ("capacity", capacity),
        ("fluctuations", fluctuations),
        ("ergotropy", ergotropy),
        ("reduction equivalence", reduction),
        ("microscopic validation", microscopic),
        ("charging-speed scaling", charging_speed),
        ("generator sanity", generator),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f().unwrap_or_else(|e| Outcome { pass: false, detail: format!("command failed: {e}") });
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {} ({name}, {:.1} s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
