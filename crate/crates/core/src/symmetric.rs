//! The `J = N/2` sector of `N` collectively coupled batteries.
//!
//! Collective jumps never leave the permutation-symmetric subspace, so a
//! battery started in `|0…0⟩` lives in the `N + 1` Dicke states `|D_{N,m}⟩`
//! with `m` excitations. In that basis the collective operators become a
//! finite ladder: `π(S^−) = c √(N + 1 − c†c)` with `c = Σ √m |m−1⟩⟨m|`.
//!
//! Diagonal states stay diagonal under the reduced generator, which is then a
//! birth–death process on the `N + 1` populations; [`PopulationModel`]
//! integrates that process directly for batteries too large for the dense
//! reduced representation.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::lindblad::LindbladModel;
use crate::models::EffectiveParams;
use crate::ode::{self, IntegratorOptions, Stats};
use crate::operator::{CMatrix, CVector, DensityMatrix, HilbertSpace, Operator, C64, MAX_FULL_BATTERIES, ZERO};
use crate::sparse::Csr;

/// Largest battery count for the dense `(N+1)²` reduced representation.
pub const MAX_REDUCED_N: usize = 1000;

#[derive(Clone, Debug)]
pub struct LadderOps {
    pub n: usize,
    pub c: Operator,
    pub pi_s_minus: Operator,
    pub pi_s_plus: Operator,
}

fn check_reduced(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::BatteryCount { n, min: 1, max: MAX_REDUCED_N });
    }
    if n > MAX_REDUCED_N {
        return Err(Error::DimensionCap { dim: n + 1, cap: MAX_REDUCED_N + 1 });
    }
    Ok(())
}

pub fn reduced_space(n: usize) -> Result<HilbertSpace> {
    HilbertSpace::single(n + 1)
}

pub fn hp_ladder(n: usize) -> Result<LadderOps> {
    check_reduced(n)?;
    let d = n + 1;
    let space = reduced_space(n)?;
    let c = Csr::from_triplets(d, (1..d).map(|m| (m - 1, m, C64::new(libm::sqrt(m as f64), 0.0))).collect());
    let number = c.adjoint().matmul(&c);
    let root = Csr::from_triplets(
        d,
        number
            .diagonal()
            .expect("c†c is diagonal")
            .iter()
            .enumerate()
            .map(|(m, k)| (m, m, C64::new(libm::sqrt((n + 1) as f64 - k.re), 0.0)))
            .collect(),
    );
    let s_minus = c.matmul(&root);
    let s_plus = s_minus.adjoint();
    Ok(LadderOps {
        n,
        c: Operator::from_parts_unchecked(space.clone(), c.to_dense()),
        pi_s_minus: Operator::from_parts_unchecked(space.clone(), s_minus.to_dense()),
        pi_s_plus: Operator::from_parts_unchecked(space, s_plus.to_dense()),
    })
}

/// `ω_0 c†c` on the reduced space.
pub fn reduced_hamiltonian(n: usize) -> Result<Operator> {
    check_reduced(n)?;
    let diag: Vec<f64> = (0..=n).map(|m| m as f64).collect();
    Operator::from_real_diagonal(&reduced_space(n)?, &diag)
}

/// Reduced master equation with jumps `π(S^−)` at `Γ_e` and `π(S^+)` at
/// `Γ_e e^{−β_e ω_0}`.
pub fn reduced_model(e: &EffectiveParams, n: usize) -> Result<LindbladModel> {
    let ladder = hp_ladder(n)?;
    LindbladModel::new(reduced_hamiltonian(n)?, vec![(ladder.pi_s_minus, e.gamma_e), (ladder.pi_s_plus, e.gamma_up())])
}

/// Density matrix on the Dicke basis `|m⟩`, `m = 0…N` excitations.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    n: usize,
    state: DensityMatrix,
}

impl ReducedState {
    pub fn new(n: usize, state: DensityMatrix) -> Result<Self> {
        if state.dim() != n + 1 || state.space().num_factors() != 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, found: state.dim() });
        }
        Ok(ReducedState { n, state })
    }

    /// All batteries empty.
    pub fn ground(n: usize) -> Result<Self> {
        Self::excitation(n, 0)
    }

    /// The Dicke state with `m` excitations.
    pub fn excitation(n: usize, m: usize) -> Result<Self> {
        if m > n {
            return Err(Error::ExcitationOutOfRange { m, n });
        }
        Self::new(n, DensityMatrix::basis_state(&reduced_space(n)?, m)?)
    }

    pub fn from_populations(n: usize, p: &[f64]) -> Result<Self> {
        Self::new(n, DensityMatrix::from_diagonal(&reduced_space(n)?, p)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn into_state(self) -> DensityMatrix {
        self.state
    }

    pub fn populations(&self) -> Vec<f64> {
        self.state.populations()
    }

    /// Mean excitation number, which is `⟨H_B⟩` in units of `ω_0`.
    pub fn energy(&self) -> f64 {
        self.populations().iter().enumerate().map(|(m, p)| m as f64 * p).sum()
    }

    /// Largest off-diagonal entry modulus.
    pub fn offdiagonal_norm(&self) -> f64 {
        let m = self.state.matrix();
        let d = m.nrows();
        let mut out: f64 = 0.0;
        for j in 0..d {
            for i in 0..d {
                if i != j {
                    out = out.max(m[(i, j)].norm());
                }
            }
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_full(n: usize) -> Result<()> {
    if n == 0 || n > MAX_FULL_BATTERIES {
        return Err(Error::BatteryCount { n, min: 1, max: MAX_FULL_BATTERIES });
    }
    Ok(())
}

/// Equal-weight superposition of the `C(N, m)` basis states with `m`
/// excitations.
pub fn dicke_state(n: usize, m: usize) -> Result<CVector> {
    check_full(n)?;
    if m > n {
        return Err(Error::ExcitationOutOfRange { m, n });
    }
    let amp = 1.0 / libm::sqrt(binomial(n, m));
    Ok(CVector::from_fn(1 << n, |x, _| if x.count_ones() as usize == m { C64::new(amp, 0.0) } else { ZERO }))
}

/// `Σ rs[m,m'] |D_{N,m}⟩⟨D_{N,m'}|` on the full `2^N` space.
pub fn embed_reduced(rs: &ReducedState) -> Result<DensityMatrix> {
    let n = rs.n;
    check_full(n)?;
    let space = HilbertSpace::qubits(n)?;
    let norm: Vec<f64> = (0..=n).map(|m| 1.0 / libm::sqrt(binomial(n, m))).collect();
    let r = rs.state.matrix();
    let m = CMatrix::from_fn(1 << n, 1 << n, |i, j| {
        let (a, b) = (i.count_ones() as usize, j.count_ones() as usize);
        r[(a, b)] * (norm[a] * norm[b])
    });
    Ok(DensityMatrix::from_trusted(Operator::from_parts_unchecked(space, m)))
}

/// Restriction of a state to the symmetric sector.
#[derive(Clone, Debug)]
pub struct SymmetricProjection {
    /// Renormalized symmetric block; `None` when the block carries no weight.
    pub state: Option<ReducedState>,
    /// `1 − tr` of the symmetric block.
    pub leakage: f64,
}

pub fn project_symmetric(rho: &DensityMatrix) -> Result<SymmetricProjection> {
    let dims = rho.space().dims();
    let n = dims.len();
    if dims.iter().any(|&d| d != 2) {
        return Err(Error::InvalidParameter("projection needs a space of two-level batteries".into()));
    }
    check_full(n)?;
    let norm: Vec<f64> = (0..=n).map(|m| 1.0 / libm::sqrt(binomial(n, m))).collect();
    let r = rho.matrix();
    let mut block = CMatrix::zeros(n + 1, n + 1);
    for j in 0..1usize << n {
        let b = j.count_ones() as usize;
        for i in 0..1usize << n {
            let a = i.count_ones() as usize;
            block[(a, b)] += r[(i, j)];
        }
    }
    for b in 0..=n {
        for a in 0..=n {
            block[(a, b)] *= norm[a] * norm[b];
        }
    }
    let weight = block.trace().re;
    let leakage = 1.0 - weight;
    let state = if weight > 1e-12 {
        let scaled = block / C64::new(weight, 0.0);
        let herm = (&scaled + scaled.adjoint()) * C64::new(0.5, 0.0);
        let op = Operator::from_parts_unchecked(reduced_space(n)?, herm);
        DensityMatrix::new(op).ok().map(|state| ReducedState { n, state })
    } else {
        None
    };
    Ok(SymmetricProjection { state, leakage })
}

/// Birth–death process on the Dicke populations:
/// `m → m − 1` at `Γ_e m (N + 1 − m)` and `m → m + 1` at
/// `Γ_e e^{−β_e ω_0} (m + 1)(N − m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationModel {
    n: usize,
    down: Vec<f64>,
    up: Vec<f64>,
}

/// Mean and variance of the excitation number on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationTrajectory {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub final_populations: Vec<f64>,
    pub stats: Stats,
}

fn moments(p: &[f64]) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (m, &x) in p.iter().enumerate() {
        let m = m as f64;
        s1 += m * x;
        s2 += m * m * x;
    }
    (s1, s2 - s1 * s1)
}

impl PopulationModel {
    pub fn new(e: &EffectiveParams, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BatteryCount { n, min: 1, max: usize::MAX });
        }
        let nf = n as f64;
        let gu = e.gamma_up();
        let down = (0..=n).map(|m| e.gamma_e * m as f64 * (nf + 1.0 - m as f64)).collect();
        let up = (0..=n).map(|m| gu * (m as f64 + 1.0) * (nf - m as f64)).collect();
        Ok(PopulationModel { n, down, up })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `dp = Q p` for the birth–death generator `Q`.
    pub fn apply(&self, p: &[f64], dp: &mut [f64]) {
        let n = self.n;
        for m in 0..=n {
            let mut v = -(self.up[m] + self.down[m]) * p[m];
            if m > 0 {
                v += self.up[m - 1] * p[m - 1];
            }
            if m < n {
                v += self.down[m + 1] * p[m + 1];
            }
            dp[m] = v;
        }
    }

    /// Mean excitation of a population vector.
    pub fn mean(p: &[f64]) -> f64 {
        moments(p).0
    }

    pub fn evolve(
        &self,
        p0: &[f64],
        t_end: f64,
        record_dt: f64,
        opts: &IntegratorOptions,
    ) -> Result<PopulationTrajectory> {
        if p0.len() != self.n + 1 {
            return Err(Error::DimensionMismatch { expected: self.n + 1, found: p0.len() });
        }
        if !(t_end > 0.0 && t_end.is_finite() && record_dt > 0.0 && record_dt.is_finite()) {
            return Err(Error::InvalidParameter("t_end and record_dt must be positive".into()));
        }
        let n_rec = crate::lindblad::grid_len(t_end, record_dt);
        let mut times = Vec::with_capacity(n_rec);
        let mut mean = Vec::with_capacity(n_rec);
        let mut variance = Vec::with_capacity(n_rec);
        let mut push = |t: f64, p: &[f64]| {
            let (a, v) = moments(p);
            times.push(t);
            mean.push(a);
            variance.push(v);
        };
        push(0.0, p0);
        let mut next = 1usize;
        let mut buf = vec![0.0; p0.len()];
        let (p, _, stats) = ode::integrate(
            |p: &[f64], dp: &mut [f64]| self.apply(p, dp),
            p0,
            0.0,
            t_end,
            opts,
            |step| {
                while next < n_rec {
                    let t = next as f64 * record_dt;
                    if t > step.t_end() * (1.0 + 1e-13) {
                        break;
                    }
                    step.interpolate(t.min(step.t_end()), &mut buf);
                    push(t, &buf);
                    next += 1;
                }
                Ok(ControlFlow::Continue(()))
            },
        )?;
        while next < n_rec {
            push(next as f64 * record_dt, &p);
            next += 1;
        }
        Ok(PopulationTrajectory { times, mean, variance, final_populations: p, stats })
    }
}
