//! Lindblad generators, their time integration and numeric steady states.
//!
//! A model is a Hamiltonian plus jump operators with nonnegative rates:
//!
//! ```text
//! dρ/dt = −i[H, ρ] + Σ_k γ_k (a_k ρ a_k† − ½{a_k† a_k, ρ})
//! ```
//!
//! Internally the generator is kept in the equivalent form
//! `Gρ + ρG† + Σ_k A_k ρ A_k†` with `G = −iH − ½Σ γ_k a_k†a_k` and
//! `A_k = √γ_k a_k`, stored sparsely so that ladder-type jumps cost
//! `O(d²)` per application instead of `O(d³)`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::{self, IntegratorOptions, Stats};
use crate::operator::{CMatrix, DensityMatrix, HilbertSpace, Operator, C64, I, ONE, ZERO};
use crate::sparse::Csr;

/// Largest Hilbert-space dimension accepted by [`steady_state_numeric`].
pub const MAX_NULL_SPACE_DIM: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub operator: Operator,
    pub rate: f64,
}

#[derive(Clone, Debug)]
struct Generator {
    dim: usize,
    /// Diagonal of `G` when `G` is diagonal.
    g_diag: Option<Vec<C64>>,
    g: Csr,
    g_adj: Csr,
    jumps: Vec<(Csr, Csr)>,
}

impl Generator {
    fn build(h: &Operator, jumps: &[Jump]) -> Self {
        let dim = h.dim();
        let mut g = h.to_csr().scale(-I);
        let mut scaled = Vec::new();
        for jump in jumps.iter().filter(|j| j.rate > 0.0) {
            let a = jump.operator.to_csr();
            let a_dag = a.adjoint();
            g = g.add(&a_dag.matmul(&a).scale(C64::new(-0.5 * jump.rate, 0.0)));
            let s = C64::new(libm::sqrt(jump.rate), 0.0);
            scaled.push((a.scale(s), a_dag.scale(s)));
        }
        let g_adj = g.adjoint();
        Generator { dim, g_diag: g.diagonal(), g, g_adj, jumps: scaled }
    }

    /// `out = L(ρ)` for a column-major `ρ`; `scratch` must hold `d²` entries.
    fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let d = self.dim;
        match &self.g_diag {
            Some(g) => {
                for j in 0..d {
                    let gj = g[j].conj();
                    let col = &rho[j * d..(j + 1) * d];
                    let oc = &mut out[j * d..(j + 1) * d];
                    for i in 0..d {
                        oc[i] = (g[i] + gj) * col[i];
                    }
                }
            }
            None => {
                out.fill(ZERO);
                self.g.left_mul_acc(rho, ONE, out);
                self.g_adj.right_mul_acc(rho, ONE, out);
            }
        }
        for (a, a_dag) in &self.jumps {
            scratch.fill(ZERO);
            a.left_mul_acc(rho, ONE, scratch);
            a_dag.right_mul_acc(scratch, ONE, out);
        }
    }
}

/// A Hamiltonian plus jump operators with nonnegative rates.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    hamiltonian: Operator,
    jumps: Vec<Jump>,
    generator: Generator,
}

impl LindbladModel {
    pub fn new(hamiltonian: Operator, jumps: Vec<(Operator, f64)>) -> Result<Self> {
        let dev = hamiltonian.hermiticity_deviation();
        if dev > 1e-12 * hamiltonian.max_norm().max(1.0) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let mut checked = Vec::with_capacity(jumps.len());
        for (operator, rate) in jumps {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::InvalidParameter(alloc::format!("jump rate {rate} must be finite and nonnegative")));
            }
            if operator.space() != hamiltonian.space() {
                return Err(Error::DimensionMismatch { expected: hamiltonian.dim(), found: operator.dim() });
            }
            checked.push(Jump { operator, rate });
        }
        let generator = Generator::build(&hamiltonian, &checked);
        Ok(LindbladModel { hamiltonian, jumps: checked, generator })
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn space(&self) -> &HilbertSpace {
        self.hamiltonian.space()
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    /// `out = L(ρ)` on column-major slices; `scratch` holds `d²` entries.
    pub(crate) fn apply_slice(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        self.generator.apply(rho, out, scratch);
    }

    /// Applies the generator to a raw column-major `d × d` matrix.
    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        let mut scratch = vec![ZERO; d * d];
        self.generator.apply(rho.as_slice(), out.as_mut_slice(), &mut scratch);
        out
    }
}

/// `D[a](ρ) = aρa† − ½(a†aρ + ρa†a)`.
pub fn dissipator_apply(a: &Operator, rho: &Operator) -> Result<Operator> {
    if a.space() != rho.space() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: a.dim() });
    }
    let a_m = a.matrix();
    let r = rho.matrix();
    let a_dag = a_m.adjoint();
    let ada = &a_dag * a_m;
    let m = a_m * r * &a_dag - (&ada * r + r * &ada) * C64::new(0.5, 0.0);
    Operator::new(rho.space().clone(), m)
}

/// `−i[H, ρ] + Σ γ D[a](ρ)`.
pub fn liouvillian_apply(model: &LindbladModel, rho: &Operator) -> Result<Operator> {
    if model.space() != rho.space() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho.dim() });
    }
    Operator::new(rho.space().clone(), model.apply_matrix(rho.matrix()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub integrator: IntegratorOptions,
    /// Keep a state snapshot at every `k`-th recorded time.
    pub snapshot_every: Option<usize>,
    /// Abort when `|tr ρ − 1|` exceeds this value.
    pub trace_abort: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { integrator: IntegratorOptions::default(), snapshot_every: None, trace_abort: 1e-6 }
    }
}

/// Observables sampled on a uniform time grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    observables: Vec<(String, Vec<f64>)>,
    pub snapshots: Vec<(f64, DensityMatrix)>,
    pub final_state: DensityMatrix,
    pub final_time: f64,
    /// Largest `|tr ρ − 1|` over all accepted steps.
    pub max_trace_drift: f64,
    /// Largest entry of `ρ − ρ†` over recorded times.
    pub max_hermiticity_deviation: f64,
    pub stats: Stats,
}

impl Trajectory {
    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.observable(name).ok_or_else(|| Error::MissingObservable(name.to_string()))
    }

    pub fn observable_names(&self) -> impl Iterator<Item = &str> {
        self.observables.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

enum Kernel {
    Diagonal(Vec<f64>),
    Dense(CMatrix),
}

impl Kernel {
    fn new(op: &Operator) -> Self {
        let m = op.matrix();
        let d = m.nrows();
        let diagonal = (0..d).all(|j| (0..d).all(|i| i == j || m[(i, j)] == ZERO));
        if diagonal {
            Kernel::Diagonal(m.diagonal().iter().map(|z| z.re).collect())
        } else {
            Kernel::Dense(m.clone())
        }
    }

    fn eval(&self, rho: &[C64]) -> f64 {
        match self {
            Kernel::Diagonal(diag) => {
                let d = diag.len();
                diag.iter().enumerate().map(|(i, &o)| o * rho[i * d + i].re).sum()
            }
            Kernel::Dense(m) => {
                let d = m.nrows();
                let mut s = ZERO;
                for j in 0..d {
                    for i in 0..d {
                        s += m[(i, j)] * rho[i * d + j];
                    }
                }
                s.re
            }
        }
    }
}

fn trace_of(rho: &[C64], d: usize) -> C64 {
    (0..d).map(|i| rho[i * d + i]).sum()
}

fn hermiticity_of(rho: &[C64], d: usize) -> f64 {
    let mut dev: f64 = 0.0;
    for j in 0..d {
        for i in 0..j {
            dev = dev.max((rho[j * d + i] - rho[i * d + j].conj()).norm());
        }
    }
    dev
}

/// Number of grid points `k · record_dt` within `[0, t_end]`.
pub(crate) fn grid_len(t_end: f64, record_dt: f64) -> usize {
    libm::floor(t_end / record_dt * (1.0 + 1e-12)) as usize + 1
}

pub fn evolve(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t_end: f64,
    observables: &[(&str, &Operator)],
    record_dt: f64,
) -> Result<Trajectory> {
    evolve_with(model, rho0, t_end, observables, record_dt, &EvolveOptions::default())
}

/// Integrates the master equation from `rho0` and records the observables at
/// every multiple of `record_dt` up to `t_end`.
pub fn evolve_with(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t_end: f64,
    observables: &[(&str, &Operator)],
    record_dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    if rho0.space() != model.space() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("t_end = {t_end} must be positive")));
    }
    if !(record_dt > 0.0 && record_dt.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("record_dt = {record_dt} must be positive")));
    }
    let mut kernels = Vec::with_capacity(observables.len());
    for (_, op) in observables {
        if op.space() != model.space() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: op.dim() });
        }
        let dev = op.hermiticity_deviation();
        if dev > 1e-12 * op.max_norm().max(1.0) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        kernels.push(Kernel::new(op));
    }

    let d = model.dim();
    let space = model.space().clone();
    let n_rec = grid_len(t_end, record_dt);
    let mut times = Vec::with_capacity(n_rec);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(n_rec); kernels.len()];
    let mut snapshots = Vec::new();
    let mut max_herm: f64 = 0.0;
    let mut max_drift: f64 = 0.0;

    let mut record = |t: f64, rho: &[C64], idx: usize, snaps: &mut Vec<(f64, DensityMatrix)>| {
        times.push(t);
        for (k, kern) in kernels.iter().enumerate() {
            values[k].push(kern.eval(rho));
        }
        max_herm = max_herm.max(hermiticity_of(rho, d));
        if let Some(every) = opts.snapshot_every {
            if every > 0 && idx.is_multiple_of(every) {
                let m = CMatrix::from_column_slice(d, d, rho);
                snaps.push((t, DensityMatrix::from_trusted(Operator::from_parts_unchecked(space.clone(), m))));
            }
        }
    };

    let y0 = rho0.matrix().as_slice().to_vec();
    record(0.0, &y0, 0, &mut snapshots);
    let mut next = 1usize;
    let mut buf = vec![ZERO; d * d];
    let mut scratch = vec![ZERO; d * d];
    let generator = &model.generator;

    let (y, t_final, stats) = ode::integrate(
        |y: &[C64], dy: &mut [C64]| generator.apply(y, dy, &mut scratch),
        &y0,
        0.0,
        t_end,
        &opts.integrator,
        |step| {
            let drift = (trace_of(step.state_end(), d) - ONE).norm();
            max_drift = max_drift.max(drift);
            if drift > opts.trace_abort {
                return Err(Error::TraceDrift { t: step.t_end(), drift });
            }
            while next < n_rec {
                let t = next as f64 * record_dt;
                if t > step.t_end() * (1.0 + 1e-13) {
                    break;
                }
                if t >= step.t_end() {
                    record(t, step.state_end(), next, &mut snapshots);
                } else {
                    step.interpolate(t, &mut buf);
                    record(t, &buf, next, &mut snapshots);
                }
                next += 1;
            }
            Ok(ControlFlow::Continue(()))
        },
    )?;
    // the last grid point can coincide with t_end up to rounding
    while next < n_rec {
        record(next as f64 * record_dt, &y, next, &mut snapshots);
        next += 1;
    }

    let names = observables.iter().map(|(n, _)| n.to_string());
    let final_matrix = CMatrix::from_column_slice(d, d, &y);
    Ok(Trajectory {
        times,
        observables: names.zip(values).collect(),
        snapshots,
        final_state: DensityMatrix::from_trusted(Operator::from_parts_unchecked(space, final_matrix)),
        final_time: t_final,
        max_trace_drift: max_drift,
        max_hermiticity_deviation: max_herm,
        stats,
    })
}

/// Dense matrix of the generator acting on column-major vectorized states.
pub fn superoperator(model: &LindbladModel) -> CMatrix {
    let d = model.dim();
    let d2 = d * d;
    let mut s = CMatrix::zeros(d2, d2);
    let mut basis = vec![ZERO; d2];
    let mut col = vec![ZERO; d2];
    let mut scratch = vec![ZERO; d2];
    for k in 0..d2 {
        basis[k] = ONE;
        model.generator.apply(&basis, &mut col, &mut scratch);
        s.column_mut(k).copy_from_slice(&col);
        basis[k] = ZERO;
    }
    s
}

/// Steady state from the null space of the vectorized generator.
///
/// Fails when the smallest singular value is not isolated by a factor of
/// `10³` from the next one.
pub fn steady_state_numeric(model: &LindbladModel) -> Result<DensityMatrix> {
    let d = model.dim();
    if d > MAX_NULL_SPACE_DIM {
        return Err(Error::DimensionCap { dim: d, cap: MAX_NULL_SPACE_DIM });
    }
    let s = superoperator(model);
    let svd = SVD::new(s, false, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let (smallest, second) = (sv[order[0]], sv[order[1]]);
    let gap_ratio = if smallest > 0.0 {
        second / smallest
    } else if second > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    if gap_ratio <= 1e3 {
        let scale = sv[order[sv.len() - 1]];
        let dim = order.iter().filter(|&&i| sv[i] <= 1e-8 * scale).count().max(2);
        return Err(Error::DegenerateNullSpace { dim, gap_ratio });
    }
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let row = v_t.row(order[0]);
    let mut m = CMatrix::from_fn(d, d, |i, j| row[j * d + i].conj());
    let tr = m.trace();
    m /= tr;
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let residual = linalg::max_abs(model.apply_matrix(&m).as_slice());
    if residual > 1e-10 {
        return Err(Error::SteadyStateResidual { residual });
    }
    DensityMatrix::new(Operator::new(model.space().clone(), m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{sigma_minus, sigma_plus, transition};

    fn tls_model(beta: f64, gamma: f64) -> LindbladModel {
        let space = HilbertSpace::qubits(1).unwrap();
        let h = Operator::from_real_diagonal(&space, &[0.0, 1.0]).unwrap();
        LindbladModel::new(h, vec![(sigma_minus(), gamma), (sigma_plus(), gamma * libm::exp(-beta))]).unwrap()
    }

    #[test]
    fn dissipator_examples() {
        let space = HilbertSpace::qubits(1).unwrap();
        let excited = DensityMatrix::basis_state(&space, 1).unwrap();
        let ground = DensityMatrix::basis_state(&space, 0).unwrap();
        let zero = Operator::zeros(&space);
        assert_eq!(dissipator_apply(&zero, excited.operator()).unwrap().max_norm(), 0.0);

        let out = dissipator_apply(&sigma_minus(), excited.operator()).unwrap();
        let expected = Operator::from_real_diagonal(&space, &[1.0, -1.0]).unwrap();
        assert!((&out - &expected).max_norm() < 1e-15);
        assert_eq!(dissipator_apply(&sigma_minus(), ground.operator()).unwrap().max_norm(), 0.0);

        let wrong = Operator::identity(&HilbertSpace::qubits(2).unwrap());
        assert!(dissipator_apply(&wrong, excited.operator()).is_err());
    }

    #[test]
    fn liouvillian_matches_dense_definition() {
        let model = tls_model(-0.8, 0.1);
        let space = model.space().clone();
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = C64::new(0.3, 0.0);
        m[(1, 1)] = C64::new(0.7, 0.0);
        m[(0, 1)] = C64::new(0.1, 0.2);
        m[(1, 0)] = C64::new(0.1, -0.2);
        let rho = Operator::new(space, m).unwrap();
        let fast = liouvillian_apply(&model, &rho).unwrap();
        let h = model.hamiltonian();
        let mut slow = h.commutator(&rho).unwrap().scale(-I);
        for j in model.jumps() {
            slow = &slow + &dissipator_apply(&j.operator, &rho).unwrap().scale(C64::new(j.rate, 0.0));
        }
        assert!((&fast - &slow).max_norm() < 1e-15);
        assert!(fast.trace().norm() < 1e-12);
    }

    #[test]
    fn liouvillian_trivial_and_pumping_rate() {
        let space = HilbertSpace::qubits(1).unwrap();
        let empty = LindbladModel::new(Operator::zeros(&space), vec![]).unwrap();
        let rho = DensityMatrix::maximally_mixed(&space);
        assert_eq!(liouvillian_apply(&empty, rho.operator()).unwrap().max_norm(), 0.0);

        // d⟨σ⁺σ⁻⟩/dt from the ground state is the upward rate Γ e^{−β}
        let (beta, gamma) = (-0.8, 0.1);
        let model = tls_model(beta, gamma);
        let ground = DensityMatrix::basis_state(&space, 0).unwrap();
        let drho = liouvillian_apply(&model, ground.operator()).unwrap();
        let n = transition(2, 1, 1).unwrap();
        let rate = crate::operator::trace_product(n.matrix(), drho.matrix()).re;
        assert!((rate - gamma * libm::exp(-beta)).abs() < 1e-15);
    }

    #[test]
    fn model_validation() {
        let space = HilbertSpace::qubits(1).unwrap();
        let h = Operator::zeros(&space);
        assert!(LindbladModel::new(h.clone(), vec![(sigma_minus(), -1.0)]).is_err());
        assert!(LindbladModel::new(h.clone(), vec![(sigma_minus(), f64::NAN)]).is_err());
        let big = Operator::identity(&HilbertSpace::qubits(2).unwrap());
        assert!(LindbladModel::new(h, vec![(big, 1.0)]).is_err());
        assert!(LindbladModel::new(sigma_plus(), vec![]).is_err());
    }

    #[test]
    fn unitary_eigenstate_is_stationary() {
        let space = HilbertSpace::qubits(1).unwrap();
        let h = Operator::from_real_diagonal(&space, &[0.0, 1.0]).unwrap();
        let model = LindbladModel::new(h.clone(), vec![]).unwrap();
        let rho0 = DensityMatrix::basis_state(&space, 1).unwrap();
        let traj = evolve(&model, &rho0, 10.0, &[("H", &h)], 0.5).unwrap();
        assert_eq!(traj.len(), 21);
        assert!(traj.require("H").unwrap().iter().all(|&e| (e - 1.0).abs() < 1e-9));
    }

    #[test]
    fn two_level_relaxes_to_negative_temperature_gibbs() {
        let (beta, gamma) = (-0.8, 0.1);
        let model = tls_model(beta, gamma);
        let space = model.space().clone();
        let n = transition(2, 1, 1).unwrap();
        let rho0 = DensityMatrix::basis_state(&space, 0).unwrap();
        let traj = evolve(&model, &rho0, 150.0, &[("n", &n)], 1.0).unwrap();
        let p_inf = 1.0 / (1.0 + libm::exp(beta));
        let kappa = gamma * (1.0 + libm::exp(-beta));
        for (t, v) in traj.times.iter().zip(traj.require("n").unwrap()) {
            let exact = p_inf * (1.0 - libm::exp(-kappa * t));
            assert!((v - exact).abs() < 1e-8, "t = {t}: {v} vs {exact}");
        }
        assert!((traj.require("n").unwrap().last().unwrap() - 0.6899744811276124).abs() < 1e-6);
        assert!(traj.max_trace_drift < 1e-8);
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let model = tls_model(-0.8, 0.1);
        let rho0 = DensityMatrix::basis_state(model.space(), 0).unwrap();
        assert!(evolve(&model, &rho0, 0.0, &[], 0.1).is_err());
        assert!(evolve(&model, &rho0, 1.0, &[], 0.0).is_err());
        let other = DensityMatrix::maximally_mixed(&HilbertSpace::qubits(2).unwrap());
        assert!(evolve(&model, &other, 1.0, &[], 0.1).is_err());
        assert!(evolve(&model, &rho0, 1.0, &[("s+", &sigma_plus())], 0.1).is_err());
    }

    #[test]
    fn numeric_steady_state_of_two_level_model() {
        let model = tls_model(-0.8, 0.1);
        let rho = steady_state_numeric(&model).unwrap();
        let p = rho.populations();
        assert!((p[0] - 0.3100255188723876).abs() < 1e-10);
        assert!((p[1] - 0.6899744811276124).abs() < 1e-10);
        assert!(liouvillian_apply(&model, rho.operator()).unwrap().max_norm() < 1e-10);
    }

    #[test]
    fn degenerate_null_space_detected() {
        let space = HilbertSpace::qubits(1).unwrap();
        let model = LindbladModel::new(Operator::zeros(&space), vec![]).unwrap();
        assert!(matches!(steady_state_numeric(&model), Err(Error::DegenerateNullSpace { .. })));
    }
}
