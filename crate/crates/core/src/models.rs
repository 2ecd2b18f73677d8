//! Concrete models: the three-level engine, engines coupled to batteries, and
//! the effective battery master equation obtained after eliminating the
//! engines.
//!
//! Energies and rates are in units of the battery gap `ω_0`; inverse
//! temperatures are passed as the dimensionless products `β_b ω_b`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lindblad::LindbladModel;
use crate::operator::{
    battery_hamiltonian, collective_spin_ops, DensityMatrix, HilbertSpace, Operator, C64, MAX_DENSE_DIM, ONE,
};
use crate::sparse::Csr;
use crate::symmetric;

/// Engine level energies are `0 < ω_0 < ω_h`; `ω_0 = 1` sets the unit.
pub const OMEGA_0: f64 = 1.0;

/// Bath and coupling parameters of the three-level engine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineParams {
    pub beta_h: f64,
    pub beta_c: f64,
    pub omega_h: f64,
    pub gamma_h: f64,
    pub gamma_c: f64,
    pub g: f64,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {x} must be positive and finite")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {x} must be nonnegative and finite")))
    }
}

impl EngineParams {
    pub fn new(beta_h: f64, beta_c: f64, omega_h: f64, gamma_h: f64, gamma_c: f64, g: f64) -> Result<Self> {
        nonnegative("beta_h", beta_h)?;
        nonnegative("beta_c", beta_c)?;
        if !(omega_h > OMEGA_0 && omega_h.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega_h = {omega_h} must exceed omega_0 = 1")));
        }
        positive("gamma_h", gamma_h)?;
        positive("gamma_c", gamma_c)?;
        nonnegative("g", g)?;
        Ok(EngineParams { beta_h, beta_c, omega_h, gamma_h, gamma_c, g })
    }

    /// Builds the parameters from the bath products `β_h ω_h` and `β_c ω_c`.
    pub fn from_products(
        beta_h_omega_h: f64,
        beta_c_omega_c: f64,
        omega_h: f64,
        gamma_h: f64,
        gamma_c: f64,
        g: f64,
    ) -> Result<Self> {
        if !(omega_h > OMEGA_0 && omega_h.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega_h = {omega_h} must exceed omega_0 = 1")));
        }
        let omega_c = omega_h - OMEGA_0;
        Self::new(beta_h_omega_h / omega_h, beta_c_omega_c / omega_c, omega_h, gamma_h, gamma_c, g)
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_h - OMEGA_0
    }

    pub fn beta_h_omega_h(&self) -> f64 {
        self.beta_h * self.omega_h
    }

    pub fn beta_c_omega_c(&self) -> f64 {
        self.beta_c * self.omega_c()
    }

    /// `β_h/β_c < ω_c/ω_h`, equivalently `β_h ω_h < β_c ω_c`.
    pub fn work_extraction_condition(&self) -> bool {
        self.beta_h_omega_h() < self.beta_c_omega_c()
    }
}

/// Parameters of the effective battery master equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveParams {
    pub beta_e_omega0: f64,
    pub gamma_e: f64,
}

impl EffectiveParams {
    /// Any finite `β_e ω_0` is accepted so that the closed forms can be probed
    /// on both sides of zero; charging needs it negative.
    pub fn new(beta_e_omega0: f64, gamma_e: f64) -> Result<Self> {
        if !beta_e_omega0.is_finite() {
            return Err(Error::InvalidParameter(format!("beta_e = {beta_e_omega0} must be finite")));
        }
        positive("gamma_e", gamma_e)?;
        Ok(EffectiveParams { beta_e_omega0, gamma_e })
    }

    pub fn is_inverted(&self) -> bool {
        self.beta_e_omega0 < 0.0
    }

    /// Rate of the pumping jump `S^+`.
    pub fn gamma_up(&self) -> f64 {
        self.gamma_e * libm::exp(-self.beta_e_omega0)
    }
}

/// Effective parameters with an additional resonant environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvModified {
    pub params: EffectiveParams,
    pub stable_charging: bool,
}

pub fn engine_space() -> HilbertSpace {
    HilbertSpace::single(3).expect("static dimension")
}

fn engine_jumps(p: &EngineParams) -> [(usize, usize, f64); 4] {
    let down_h = p.gamma_h;
    let down_c = p.gamma_c;
    [
        (0, 2, down_h),
        (2, 0, down_h * libm::exp(-p.beta_h_omega_h())),
        (1, 2, down_c),
        (2, 1, down_c * libm::exp(-p.beta_c_omega_c())),
    ]
}

/// Three-level engine coupled to a hot bath on `0 ↔ 2` and a cold bath on
/// `1 ↔ 2`.
pub fn engine_model(p: &EngineParams) -> Result<LindbladModel> {
    let space = engine_space();
    let h = Operator::from_real_diagonal(&space, &[0.0, OMEGA_0, p.omega_h])?;
    let mut jumps = Vec::with_capacity(4);
    for (to, from, rate) in engine_jumps(p) {
        jumps.push((crate::operator::transition(3, to, from)?, rate));
    }
    LindbladModel::new(h, jumps)
}

/// Populations `∝ (e^{β_h ω_h}, e^{β_c ω_c}, 1)`.
pub fn engine_populations(p: &EngineParams) -> [f64; 3] {
    let logs = [p.beta_h_omega_h(), p.beta_c_omega_c(), 0.0];
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = logs.map(|l| libm::exp(l - top));
    let z: f64 = w.iter().sum();
    w.map(|x| x / z)
}

pub fn engine_steady_state(p: &EngineParams) -> DensityMatrix {
    DensityMatrix::from_diagonal(&engine_space(), &engine_populations(p)).expect("normalized populations")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChargingScheme {
    /// Every engine couples to the collective lowering operator.
    Collective,
    /// Engine `j` couples only to battery `j`.
    Individual,
}

/// Space layout: `M` engine factors followed by `N` battery qubits.
fn coupled_space(engines: usize, batteries: usize) -> Result<HilbertSpace> {
    if engines == 0 || batteries == 0 {
        return Err(Error::InvalidParameter("need at least one engine and one battery".into()));
    }
    let mut dims = alloc::vec![3; engines];
    dims.extend(core::iter::repeat_n(2, batteries));
    let dim = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
    if dim > MAX_DENSE_DIM {
        return Err(Error::DimensionCap { dim, cap: MAX_DENSE_DIM });
    }
    HilbertSpace::new(dims)
}

/// Strides of each factor in the row-major tensor index.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = alloc::vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Sparse product of `|to_k⟩⟨from_k|` transitions on distinct sites, scaled.
fn transitions_csr(space: &HilbertSpace, factors: &[(usize, usize, usize)], scale: C64) -> Vec<(usize, usize, C64)> {
    let dims = space.dims();
    let st = strides(dims);
    let mut t = Vec::new();
    'outer: for x in 0..space.total_dim() {
        let mut y = x;
        for &(site, to, from) in factors {
            let digit = (x / st[site]) % dims[site];
            if digit != from {
                continue 'outer;
            }
            y = y - from * st[site] + to * st[site];
        }
        t.push((y, x, scale));
    }
    t
}

/// Engines and batteries with exchange coupling
/// `K = i g_eff Σ_j (|1⟩⟨0|_{E_j} ⊗ S^− − h.c.)`; with the individual scheme
/// `S^−` is replaced by the lowering operator of battery `j`.
pub fn coupled_model(
    p: &EngineParams,
    batteries: usize,
    engines: usize,
    scheme: ChargingScheme,
    normalize: bool,
) -> Result<LindbladModel> {
    if scheme == ChargingScheme::Individual && engines != batteries {
        return Err(Error::SchemeMismatch { engines, batteries });
    }
    let space = coupled_space(engines, batteries)?;
    let dim = space.total_dim();
    let g_eff = match scheme {
        ChargingScheme::Collective if normalize => p.g / libm::sqrt(batteries as f64),
        _ => p.g,
    };

    let mut diag = Vec::with_capacity(dim);
    let st = strides(space.dims());
    for x in 0..dim {
        let mut e = 0.0;
        for (site, &d) in space.dims().iter().enumerate() {
            let digit = (x / st[site]) % d;
            e += match (d, digit) {
                (3, 1) => OMEGA_0,
                (3, 2) => p.omega_h,
                (2, 1) => OMEGA_0,
                _ => 0.0,
            };
        }
        diag.push((x, x, C64::new(e, 0.0)));
    }
    let h0 = Csr::from_triplets(dim, diag);

    // i g |1⟩⟨0|_E ⊗ |0⟩⟨1|_B and its adjoint −i g |0⟩⟨1|_E ⊗ |1⟩⟨0|_B
    let mut k = Vec::new();
    for j in 0..engines {
        let targets: Vec<usize> = match scheme {
            ChargingScheme::Collective => (0..batteries).collect(),
            ChargingScheme::Individual => alloc::vec![j],
        };
        for b in targets {
            let site = engines + b;
            k.extend(transitions_csr(&space, &[(j, 1, 0), (site, 0, 1)], C64::new(0.0, g_eff)));
            k.extend(transitions_csr(&space, &[(j, 0, 1), (site, 1, 0)], C64::new(0.0, -g_eff)));
        }
    }
    let h = h0.add(&Csr::from_triplets(dim, k));
    let h = Operator::from_parts_unchecked(space.clone(), h.to_dense());

    let mut jumps = Vec::with_capacity(4 * engines);
    for j in 0..engines {
        for (to, from, rate) in engine_jumps(p) {
            let a = Csr::from_triplets(dim, transitions_csr(&space, &[(j, to, from)], ONE));
            jumps.push((Operator::from_parts_unchecked(space.clone(), a.to_dense()), rate));
        }
    }
    LindbladModel::new(h, jumps)
}

/// `β_e ω_0 = β_h ω_h − β_c ω_c` and
/// `Γ_e = (2g)² / (Γ_h e^{−β_h ω_h} + Γ_c e^{−β_c ω_c}) / (1 + e^{−β_h ω_h} + e^{−β_e ω_0})`.
pub fn effective_params(p: &EngineParams) -> Result<EffectiveParams> {
    let beta_e = p.beta_h_omega_h() - p.beta_c_omega_c();
    if beta_e >= 0.0 {
        return Err(Error::NoInversion(beta_e));
    }
    let up_h = libm::exp(-p.beta_h_omega_h());
    let up_c = libm::exp(-p.beta_c_omega_c());
    let width = p.gamma_h * up_h + p.gamma_c * up_c;
    let ground = 1.0 + up_h + libm::exp(-beta_e);
    let gamma_e = 4.0 * p.g * p.g / width / ground;
    if gamma_e <= 0.0 {
        return Err(Error::InvalidParameter("g = 0 gives no effective charging rate".into()));
    }
    EffectiveParams::new(beta_e, gamma_e)
}

/// Adds an environment of rate `gamma_env` at inverse temperature
/// `beta_env_omega0` acting on the battery transition.
pub fn env_modified_params(e: &EffectiveParams, gamma_env: f64, beta_env_omega0: f64) -> Result<EnvModified> {
    nonnegative("gamma_env", gamma_env)?;
    if !beta_env_omega0.is_finite() {
        return Err(Error::InvalidParameter(format!("beta_env = {beta_env_omega0} must be finite")));
    }
    let gamma = e.gamma_e + gamma_env;
    let up = e.gamma_e * libm::exp(-e.beta_e_omega0) + gamma_env * libm::exp(-beta_env_omega0);
    let beta = libm::log(gamma) - libm::log(up);
    let params = EffectiveParams::new(beta, gamma)?;
    Ok(EnvModified { params, stable_charging: beta < 0.0 })
}

/// `g√N / min_b Γ_b (1 + e^{−β_b ω_b})`; values below `0.01` mean the
/// engines relax much faster than the coupling acts.
pub fn timescale_separation_ratio(p: &EngineParams, batteries: usize) -> f64 {
    let h = p.gamma_h * (1.0 + libm::exp(-p.beta_h_omega_h()));
    let c = p.gamma_c * (1.0 + libm::exp(-p.beta_c_omega_c()));
    p.g * libm::sqrt(batteries as f64) / h.min(c)
}

/// Collective decay `Γ_e D[S^−] + Γ_e e^{−β_e ω_0} D[S^+]` with `H = H_B`,
/// either on the full `2^N` space or on the symmetric subspace.
pub fn effective_battery_model(e: &EffectiveParams, batteries: usize, full_space: bool) -> Result<LindbladModel> {
    if !full_space {
        return symmetric::reduced_model(e, batteries);
    }
    let h = battery_hamiltonian(batteries)?;
    let spin = collective_spin_ops(batteries)?;
    LindbladModel::new(h, alloc::vec![(spin.s_minus, e.gamma_e), (spin.s_plus, e.gamma_up())])
}

/// Battery marginal of a state on the coupled engine–battery space.
pub fn battery_state(rho: &DensityMatrix, engines: usize) -> Result<DensityMatrix> {
    rho.partial_trace_front(engines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_distance;
    use crate::lindblad::{evolve, steady_state_numeric};

    fn reference_engine(g: f64) -> EngineParams {
        EngineParams::from_products(0.2, 1.0, 2.0, 1.0, 1.0, g).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(EngineParams::new(0.1, 1.0, 0.5, 1.0, 1.0, 0.01).is_err());
        assert!(EngineParams::new(0.1, 1.0, 2.0, 0.0, 1.0, 0.01).is_err());
        assert!(EngineParams::new(-0.1, 1.0, 2.0, 1.0, 1.0, 0.01).is_err());
        assert!(EngineParams::new(0.1, 1.0, 2.0, 1.0, 1.0, -0.01).is_err());
        let p = reference_engine(0.01);
        assert!((p.beta_h_omega_h() - 0.2).abs() < 1e-15);
        assert!((p.beta_c_omega_c() - 1.0).abs() < 1e-15);
        assert!(p.work_extraction_condition());
        assert!(EffectiveParams::new(-0.8, 0.0).is_err());
    }

    #[test]
    fn engine_steady_state_values() {
        let p = reference_engine(0.01);
        let pops = engine_populations(&p);
        let expected = [0.2472633, 0.5502946, 0.2024421];
        for (a, b) in pops.iter().zip(expected) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(pops[1] > pops[0]);
        let flat = EngineParams::new(0.0, 0.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        for x in engine_populations(&flat) {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let numeric = steady_state_numeric(&engine_model(&p).unwrap()).unwrap();
        let exact = engine_steady_state(&p);
        assert!(crate::linalg::max_abs((numeric.matrix() - exact.matrix()).as_slice()) < 1e-10);
    }

    #[test]
    fn cold_hot_bath_switches_off_upward_rate() {
        let p = EngineParams::from_products(800.0, 900.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        let model = engine_model(&p).unwrap();
        assert_eq!(model.jumps()[1].rate, 0.0);
    }

    #[test]
    fn engine_relaxes_to_fixed_point() {
        let p = reference_engine(0.01);
        let model = engine_model(&p).unwrap();
        let rho0 = DensityMatrix::basis_state(&engine_space(), 0).unwrap();
        let traj = evolve(&model, &rho0, 40.0, &[], 1.0).unwrap();
        let d = trace_distance(traj.final_state.matrix(), engine_steady_state(&p).matrix());
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn effective_parameter_values() {
        let e = effective_params(&reference_engine(0.01)).unwrap();
        assert!((e.beta_e_omega0 + 0.8).abs() < 1e-14);
        assert!((e.gamma_e - 8.335115e-5).abs() < 1e-10);
        let same = EngineParams::from_products(0.5, 0.5, 2.0, 1.0, 1.0, 0.01).unwrap();
        assert!(matches!(effective_params(&same), Err(Error::NoInversion(_))));
    }

    #[test]
    fn environment_modification() {
        let e = EffectiveParams::new(-0.8, 0.1).unwrap();
        let same = env_modified_params(&e, 0.0, 1.0).unwrap();
        assert!((same.params.beta_e_omega0 + 0.8).abs() < 1e-14);
        assert_eq!(same.params.gamma_e, 0.1);

        let m = env_modified_params(&e, 0.01, 1.0).unwrap();
        assert!((m.params.gamma_e - 0.11).abs() < 1e-15);
        let expected = libm::log(0.11) - libm::log(0.1 * libm::exp(0.8) + 0.01 * libm::exp(-1.0));
        assert!((m.params.beta_e_omega0 - expected).abs() < 1e-14);
        assert!((m.params.beta_e_omega0 + 0.7210846).abs() < 1e-6);
        assert!(m.stable_charging);

        let swamped = env_modified_params(&e, 10.0, 1.0).unwrap();
        assert!(!swamped.stable_charging);
        assert!(env_modified_params(&e, -1.0, 1.0).is_err());
    }

    #[test]
    fn timescale_ratio() {
        assert_eq!(timescale_separation_ratio(&reference_engine(0.0), 1), 0.0);
        let p = reference_engine(0.01);
        let r1 = timescale_separation_ratio(&p, 1);
        assert!((r1 - 7.310586e-3).abs() < 1e-9);
        assert!((timescale_separation_ratio(&p, 4) - 2.0 * r1).abs() < 1e-18);
    }

    #[test]
    fn coupled_model_structure() {
        let p = reference_engine(0.05);
        let c = coupled_model(&p, 1, 1, ChargingScheme::Collective, false).unwrap();
        let i = coupled_model(&p, 1, 1, ChargingScheme::Individual, false).unwrap();
        assert_eq!(c.hamiltonian(), i.hamiltonian());
        assert_eq!(c.jumps(), i.jumps());
        assert!(matches!(
            coupled_model(&p, 2, 1, ChargingScheme::Individual, false),
            Err(Error::SchemeMismatch { .. })
        ));
        assert!(matches!(coupled_model(&p, 10, 2, ChargingScheme::Collective, false), Err(Error::DimensionCap { .. })));

        // the exchange term commutes with the bare energy
        for (n, m, scheme) in [(2, 1, ChargingScheme::Collective), (2, 2, ChargingScheme::Individual)] {
            let full = coupled_model(&p, n, m, scheme, true).unwrap();
            let zero = coupled_model(&reference_engine(0.0), n, m, scheme, true).unwrap();
            let h0 = zero.hamiltonian();
            let k = full.hamiltonian() - h0;
            assert!(k.max_norm() > 0.0);
            assert!(k.commutator(h0).unwrap().max_norm() < 1e-12);
        }
    }

    #[test]
    fn normalization_scales_collective_coupling() {
        let p = reference_engine(0.04);
        let raw = coupled_model(&p, 4, 1, ChargingScheme::Collective, false).unwrap();
        let norm = coupled_model(&p, 4, 1, ChargingScheme::Collective, true).unwrap();
        let h0 = coupled_model(&reference_engine(0.0), 4, 1, ChargingScheme::Collective, false).unwrap();
        let k_raw = raw.hamiltonian() - h0.hamiltonian();
        let k_norm = norm.hamiltonian() - h0.hamiltonian();
        assert!((k_raw.max_norm() - 2.0 * k_norm.max_norm()).abs() < 1e-15);
    }

    #[test]
    fn effective_model_two_level_steady_state() {
        let e = EffectiveParams::new(-0.8, 0.1).unwrap();
        let model = effective_battery_model(&e, 1, true).unwrap();
        let p = steady_state_numeric(&model).unwrap().populations();
        assert!((p[1] - 0.6899744811276124).abs() < 1e-10);
        assert!((p[0] - 0.3100255188723876).abs() < 1e-10);
    }

    #[test]
    fn uncoupled_batteries_stay_put() {
        let p = reference_engine(0.0);
        let model = coupled_model(&p, 2, 1, ChargingScheme::Collective, false).unwrap();
        let space = model.space().clone();
        let n_b =
            crate::operator::local_product(&[(1, &crate::operator::transition(2, 1, 1).unwrap())], &space).unwrap();
        let rho0 = DensityMatrix::basis_state(&space, 0).unwrap();
        let traj = evolve(&model, &rho0, 20.0, &[("nb", &n_b)], 1.0).unwrap();
        assert!(traj.require("nb").unwrap().iter().all(|&x| x.abs() < 1e-14));
    }
}
