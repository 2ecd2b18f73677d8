//! Steady-state figures of merit and charging times.
//!
//! Throughout, `beta` is the dimensionless product `β_e ω_0` (negative for an
//! inverted, charging steady state) and energies are in units of `ω_0`. The
//! collective steady state is the truncated geometric distribution
//! `p_m ∝ e^{−βm}`, `m = 0…N`, on the Dicke states; all closed forms below are
//! moments of it written with `expm1` so that `β → 0` stays accurate.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::linalg;
use crate::lindblad::Trajectory;
use crate::models::EffectiveParams;
use crate::ode::{self, IntegratorOptions, OdeScalar};
use crate::operator::{expectation, DensityMatrix, Operator, C64, MAX_DENSE_DIM, ONE, ZERO};
use crate::symmetric::{self, PopulationModel, MAX_REDUCED_N};

/// Default deficit threshold for the charging time.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// `Σ_{m=0}^{N} e^{−βm}` in log form.
pub fn log_partition_z(beta: f64, n: usize) -> f64 {
    let nf = n as f64;
    if beta.abs() < 1e-12 {
        return libm::log(nf + 1.0);
    }
    let x = -beta;
    // factor out the largest weight, then sum a decaying geometric series
    let a = x.abs();
    let lead = if x > 0.0 { x * nf } else { 0.0 };
    lead + libm::log(-libm::expm1(-a * (nf + 1.0))) - libm::log(-libm::expm1(-a))
}

pub fn partition_z(beta: f64, n: usize) -> f64 {
    libm::exp(log_partition_z(beta, n))
}

/// Normalized weights `e^{−βm}/Z_N`.
pub fn gibbs_populations(beta: f64, n: usize) -> Vec<f64> {
    let log_z = log_partition_z(beta, n);
    (0..=n).map(|m| libm::exp(-beta * m as f64 - log_z)).collect()
}

// f(y) = y / (1 − e^{−y}) = 1 + y/2 + y² g(y)
fn f_ratio(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y / -libm::expm1(-y)
    }
}

fn g_series(y: f64) -> f64 {
    let y2 = y * y;
    1.0 / 12.0 - y2 / 720.0 + y2 * y2 / 30240.0
}

// h(y) = 1/(4 sinh²(y/2)) − 1/y²
fn h_curv(y: f64) -> f64 {
    if y.abs() < 1e-2 {
        let y2 = y * y;
        -1.0 / 12.0 + y2 / 240.0 - y2 * y2 / 6048.0
    } else {
        let s = libm::sinh(y / 2.0);
        1.0 / (4.0 * s * s) - 1.0 / (y * y)
    }
}

fn mean_inverted(x: f64, n: usize) -> f64 {
    let np1 = n as f64 + 1.0;
    if x * np1 < 1e-2 {
        n as f64 / 2.0 + x * (np1 * np1 * g_series(x * np1) - g_series(x))
    } else {
        (f_ratio(x * np1) - f_ratio(x)) / x
    }
}

/// Mean excitation number `Σ m p_m`.
pub fn mean_excitation(beta: f64, n: usize) -> f64 {
    if beta <= 0.0 {
        mean_inverted(-beta, n)
    } else {
        n as f64 - mean_inverted(beta, n)
    }
}

/// Variance of the excitation number.
pub fn excitation_variance(beta: f64, n: usize) -> f64 {
    let x = -beta;
    let np1 = n as f64 + 1.0;
    (h_curv(x) - np1 * np1 * h_curv(x * np1)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capacity {
    pub total: f64,
    pub density: f64,
}

/// Steady-state energy `N e_N` and density `e_N`.
pub fn capacity_exact(beta: f64, n: usize) -> Capacity {
    let total = mean_excitation(beta, n);
    let density = if n == 0 { 0.0 } else { total / n as f64 };
    Capacity { total, density }
}

/// Standard deviation of `H_B` in the steady state.
pub fn fluctuation_exact(beta: f64, n: usize) -> f64 {
    libm::sqrt(excitation_variance(beta, n))
}

/// Large-`N` limit `(1/2) csch(|β|/2)`.
pub fn fluctuation_asymptote(beta: f64) -> f64 {
    0.5 / libm::sinh(beta.abs() / 2.0)
}

/// `asymptote − σ_N`, evaluated without cancellation so that the
/// exponentially small tail stays resolvable.
pub fn fluctuation_residual(beta: f64, n: usize) -> f64 {
    let x = beta.abs();
    let np1 = n as f64 + 1.0;
    let s = libm::sinh(x * np1 / 2.0);
    let gap = np1 * np1 / (4.0 * s * s);
    gap / (fluctuation_asymptote(beta) + fluctuation_exact(beta, n))
}

/// Largest steady-state weight.
fn max_weight(beta: f64, n: usize) -> f64 {
    let a = beta.abs();
    if a < 1e-12 {
        return 1.0 / (n as f64 + 1.0);
    }
    libm::expm1(-a) / libm::expm1(-a * (n as f64 + 1.0))
}

/// Energy left after the optimal global unitary on the embedded steady state.
///
/// The state has `N + 1` nonzero eigenvalues; the passive state puts the
/// largest on the ground level and the remaining `N` on the `N`-fold
/// degenerate first excited level.
pub fn locked_energy(beta: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.0 - max_weight(beta, n)
}

pub fn ergotropy_closed(beta: f64, n: usize) -> f64 {
    mean_excitation(beta, n) - locked_energy(beta, n)
}

/// `tr(Hρ) − Σ_k r_k ε_k` with `r` descending and `ε` ascending.
pub fn ergotropy_numeric(rho: &DensityMatrix, h: &Operator) -> Result<f64> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: rho.dim() });
    }
    if h.dim() > MAX_DENSE_DIM {
        return Err(Error::DimensionCap { dim: h.dim(), cap: MAX_DENSE_DIM });
    }
    let h = Operator::new(rho.space().clone(), h.matrix().clone())?;
    let energy = expectation(&h, rho)?;
    let mut r = rho.eigenvalues();
    r.reverse();
    let eps = linalg::hermitian_eigenvalues(h.matrix());
    let passive: f64 = r.iter().zip(&eps).map(|(a, b)| a * b).sum();
    Ok(energy - passive)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyMetrics {
    pub n: usize,
    pub energy: f64,
    pub energy_density: f64,
    pub sigma: f64,
    pub ergotropy: f64,
    pub locked: f64,
    pub ergotropy_ratio: f64,
}

impl SteadyMetrics {
    fn from_parts(n: usize, energy: f64, sigma: f64, ergotropy: f64) -> Self {
        let ratio = if energy > 0.0 { ergotropy / energy } else { 0.0 };
        SteadyMetrics {
            n,
            energy,
            energy_density: if n == 0 { 0.0 } else { energy / n as f64 },
            sigma,
            ergotropy,
            locked: energy - ergotropy,
            ergotropy_ratio: ratio,
        }
    }
}

/// Collective charging: one steady state on the symmetric subspace.
pub fn collective_metrics(beta: f64, n: usize) -> SteadyMetrics {
    SteadyMetrics::from_parts(n, mean_excitation(beta, n), fluctuation_exact(beta, n), ergotropy_closed(beta, n))
}

/// Individual charging: `N` independent copies of the single-battery state.
pub fn individual_metrics(beta: f64, n: usize) -> SteadyMetrics {
    let nf = n as f64;
    SteadyMetrics::from_parts(
        n,
        nf * mean_excitation(beta, 1),
        libm::sqrt(nf) * fluctuation_exact(beta, 1),
        nf * ergotropy_closed(beta, 1),
    )
}

/// Net upward rate out of `|D_{N,m}⟩`:
/// `Γ_e[(e^{−β} − 1)(N − m)m + e^{−β}N − (e^{−β} + 1)m]`.
pub fn excitation_rate_w(beta: f64, gamma_e: f64, n: usize, m: usize) -> Result<f64> {
    if m > n {
        return Err(Error::ExcitationOutOfRange { m, n });
    }
    let (nf, mf) = (n as f64, m as f64);
    let up = libm::exp(-beta);
    Ok(gamma_e * ((up - 1.0) * (nf - mf) * mf + up * nf - (up + 1.0) * mf))
}

/// Largest `m` with a positive net upward rate.
pub fn m_plus(beta: f64, n: usize) -> usize {
    (0..=n).rev().find(|&m| excitation_rate_w(beta, 1.0, n, m).is_ok_and(|w| w > 0.0)).unwrap_or(0)
}

/// `H_n` summed from the small terms up.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// Sum of the cascade durations `1/(Γ_e(e^{−β} − 1)(N − m)m)` over
/// `m = 1…N−1`, i.e. `2 H_{N−1} / (Γ_e (e^{−β} − 1) N)`.
pub fn cascade_time_estimate(beta: f64, gamma_e: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::BatteryCount { n, min: 2, max: usize::MAX });
    }
    let gain = gamma_e * libm::expm1(-beta);
    if gain <= 0.0 {
        return Err(Error::NoInversion(beta));
    }
    Ok(2.0 * harmonic(n - 1) / (gain * n as f64))
}

pub const SZ_OBSERVABLE: &str = "Sz";
pub const SM_SP_OBSERVABLE: &str = "SmSp";
const MIN_RATE_POINTS: usize = 50;

/// Largest gap between a central-difference `d⟨S^Z⟩/dt` and
/// `Γ_e(e^{−β} − 1)⟨S^−S^+⟩ − 2Γ_e⟨S^Z⟩` over interior grid points.
pub fn sz_rate_residual(times: &[f64], sz: &[f64], sm_sp: &[f64], e: &EffectiveParams) -> Result<f64> {
    let len = times.len();
    if sz.len() != len || sm_sp.len() != len {
        return Err(Error::DimensionMismatch { expected: len, found: sz.len().max(sm_sp.len()) });
    }
    if len < MIN_RATE_POINTS {
        return Err(Error::GridTooCoarse { points: len, min: MIN_RATE_POINTS });
    }
    let gain = e.gamma_e * libm::expm1(-e.beta_e_omega0);
    let mut worst: f64 = 0.0;
    for i in 1..len - 1 {
        let lhs = (sz[i + 1] - sz[i - 1]) / (times[i + 1] - times[i - 1]);
        let rhs = gain * sm_sp[i] - 2.0 * e.gamma_e * sz[i];
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// [`sz_rate_residual`] on a trajectory recording [`SZ_OBSERVABLE`] and
/// [`SM_SP_OBSERVABLE`].
pub fn sz_rate_check(traj: &Trajectory, e: &EffectiveParams) -> Result<f64> {
    sz_rate_residual(&traj.times, traj.require(SZ_OBSERVABLE)?, traj.require(SM_SP_OBSERVABLE)?, e)
}

/// Exact single-battery charging time `ln(1/ε) / (Γ_e (1 + e^{−β}))`.
pub fn single_battery_charging_time(e: &EffectiveParams, epsilon: f64) -> f64 {
    -libm::log(epsilon) / (e.gamma_e * (1.0 + libm::exp(-e.beta_e_omega0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChargingPath {
    /// Reduced density matrix up to [`MAX_REDUCED_N`], populations beyond.
    Auto,
    /// Full `(N+1)²` reduced density matrix.
    Reduced,
    /// Birth–death populations only.
    Populations,
}

impl ChargingPath {
    pub fn resolve(self, n: usize) -> ChargingPath {
        match self {
            ChargingPath::Auto if n <= MAX_REDUCED_N => ChargingPath::Reduced,
            ChargingPath::Auto => ChargingPath::Populations,
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChargingOptions {
    pub path: ChargingPath,
    pub integrator: IntegratorOptions,
    /// Integration horizon; `100/Γ_e` when unset.
    pub t_max: Option<f64>,
    pub max_refinements: usize,
}

impl Default for ChargingOptions {
    fn default() -> Self {
        ChargingOptions {
            path: ChargingPath::Auto,
            integrator: IntegratorOptions::default(),
            t_max: None,
            max_refinements: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChargingTime {
    pub n: usize,
    pub tau: f64,
    pub record_dt: f64,
    pub path: ChargingPath,
    pub refinements: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChargingMetrics {
    pub n: usize,
    pub tau_n: f64,
    pub epsilon: f64,
    /// `τ_1 / τ_N`.
    pub speed_ratio: f64,
    /// `(τ_1/τ_N) / (N / ln N)`; undefined at `N = 1`.
    pub normalized_ratio: Option<f64>,
    /// Undefined at `N = 1`.
    pub cascade_estimate: Option<f64>,
}

struct Crossing {
    fine: f64,
    coarse: f64,
}

fn crossing_time(t0: f64, d0: f64, t1: f64, d1: f64, eps: f64) -> f64 {
    if d0 == d1 {
        return t1;
    }
    t0 + (d0 - eps) / (d0 - d1) * (t1 - t0)
}

/// First time the relative deficit drops below `eps` on the grid `k·dt`, and
/// the same estimate from every other grid point.
#[allow(clippy::too_many_arguments)]
fn locate<T, F, E>(
    rhs: F,
    y0: &[T],
    energy: E,
    target: f64,
    eps: f64,
    dt: f64,
    t_max: f64,
    opts: &IntegratorOptions,
) -> Result<Crossing>
where
    T: OdeScalar,
    F: FnMut(&[T], &mut [T]),
    E: Fn(&[T]) -> f64,
{
    let deficit = |y: &[T]| (target - energy(y)) / target;
    let mut samples = vec![deficit(y0)];
    let mut fine = None;
    let mut coarse = None;
    let mut buf = vec![T::default(); y0.len()];
    let mut k = 1usize;
    ode::integrate(rhs, y0, 0.0, t_max, opts, |step| loop {
        let t = k as f64 * dt;
        if t > step.t_end() {
            return Ok(ControlFlow::Continue(()));
        }
        step.interpolate(t, &mut buf);
        let d = deficit(&buf);
        samples.push(d);
        if fine.is_none() && d < eps {
            fine = Some(crossing_time(t - dt, samples[k - 1], t, d, eps));
        }
        if fine.is_some() && k.is_multiple_of(2) && d < eps {
            coarse = Some(crossing_time(t - 2.0 * dt, samples[k - 2], t, d, eps));
            return Ok(ControlFlow::Break(()));
        }
        k += 1;
    })?;
    match (fine, coarse) {
        (Some(fine), Some(coarse)) => Ok(Crossing { fine, coarse }),
        (Some(fine), None) => Ok(Crossing { fine, coarse: fine }),
        _ => Err(Error::NotConverged { t_max }),
    }
}

/// Time for a collective battery started empty to reach a relative energy
/// deficit below `epsilon`.
///
/// The trajectory is sampled on a uniform grid and the threshold crossing is
/// interpolated linearly. The grid is halved until it is at most `τ/200` and
/// the estimate agrees to `0.1%` with the one from every other sample.
pub fn charging_tau(e: &EffectiveParams, n: usize, epsilon: f64, opts: &ChargingOptions) -> Result<ChargingTime> {
    if n == 0 {
        return Err(Error::BatteryCount { n, min: 1, max: usize::MAX });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(alloc::format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let path = opts.path.resolve(n);
    let t_max = opts.t_max.unwrap_or(100.0 / e.gamma_e);
    let target = mean_excitation(e.beta_e_omega0, n);
    let guess = match cascade_time_estimate(e.beta_e_omega0, e.gamma_e, n) {
        Ok(t) => t,
        Err(_) => single_battery_charging_time(e, epsilon) / n as f64,
    };
    let mut dt = guess.min(t_max) / 1000.0;

    let run = |dt: f64| -> Result<Crossing> {
        match path {
            ChargingPath::Populations => {
                let model = PopulationModel::new(e, n)?;
                let mut p0 = vec![0.0; n + 1];
                p0[0] = 1.0;
                locate(
                    |p: &[f64], dp: &mut [f64]| model.apply(p, dp),
                    &p0,
                    PopulationModel::mean,
                    target,
                    epsilon,
                    dt,
                    t_max,
                    &opts.integrator,
                )
            }
            _ => {
                let model = symmetric::reduced_model(e, n)?;
                let d = n + 1;
                let mut rho0 = vec![ZERO; d * d];
                rho0[0] = ONE;
                let mut scratch = vec![ZERO; d * d];
                let energy = |y: &[C64]| (0..d).map(|m| m as f64 * y[m * d + m].re).sum::<f64>();
                locate(
                    |y: &[C64], dy: &mut [C64]| model.apply_slice(y, dy, &mut scratch),
                    &rho0,
                    energy,
                    target,
                    epsilon,
                    dt,
                    t_max,
                    &opts.integrator,
                )
            }
        }
    };

    let mut change = f64::INFINITY;
    let mut tau = f64::NAN;
    for refinements in 0..=opts.max_refinements {
        let c = run(dt)?;
        tau = c.fine;
        change = (c.fine - c.coarse).abs() / c.fine;
        if change < 1e-3 && dt <= c.fine / 200.0 {
            return Ok(ChargingTime { n, tau, record_dt: dt, path, refinements });
        }
        dt = (dt / 2.0).min(c.fine / 1000.0);
    }
    Err(Error::RefinementFailed { tau, change })
}

/// Assembles the figures of merit from measured `τ_N` and `τ_1`.
pub fn charging_metrics(e: &EffectiveParams, n: usize, epsilon: f64, tau_n: f64, tau_1: f64) -> ChargingMetrics {
    let speed_ratio = tau_1 / tau_n;
    let nf = n as f64;
    let normalized_ratio = (n >= 2).then(|| speed_ratio / (nf / libm::log(nf)));
    ChargingMetrics {
        n,
        tau_n,
        epsilon,
        speed_ratio,
        normalized_ratio,
        cascade_estimate: cascade_time_estimate(e.beta_e_omega0, e.gamma_e, n).ok(),
    }
}

/// Charging time of `N` collectively charged batteries together with the
/// single-battery reference.
pub fn charging_time(e: &EffectiveParams, n: usize, epsilon: f64, opts: &ChargingOptions) -> Result<ChargingMetrics> {
    let tau_1 = charging_tau(e, 1, epsilon, opts)?.tau;
    let tau_n = if n == 1 { tau_1 } else { charging_tau(e, n, epsilon, opts)?.tau };
    Ok(charging_metrics(e, n, epsilon, tau_n, tau_1))
}
