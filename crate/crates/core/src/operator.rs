//! Dense complex operators on composite Hilbert spaces.
//!
//! Basis ordering follows the tensor-product order of [`HilbertSpace::dims`]:
//! the first factor is the most significant digit of a basis index, and each
//! factor is in computational order `|0⟩, |1⟩(, |2⟩)`. Engines come first,
//! then batteries. Energies are in units of the battery gap `ω_0`.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg;
use crate::sparse::Csr;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest battery count for which full `2^N` objects are built.
pub const MAX_FULL_BATTERIES: usize = 12;
/// Largest total dimension of a dense full-space operator.
pub const MAX_DENSE_DIM: usize = 1 << MAX_FULL_BATTERIES;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Ordered list of subsystem dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter("a Hilbert space needs at least one factor".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidSubsystem(d));
        }
        Ok(HilbertSpace { dims })
    }

    /// A single factor of dimension `dim`.
    pub fn single(dim: usize) -> Result<Self> {
        Self::new(alloc::vec![dim])
    }

    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(alloc::vec![2; n])
    }

    /// `engines` three-level factors followed by `batteries` two-level ones.
    pub fn engines_and_batteries(engines: usize, batteries: usize) -> Result<Self> {
        let mut dims = alloc::vec![3; engines];
        dims.extend(core::iter::repeat_n(2, batteries));
        Self::new(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn num_factors(&self) -> usize {
        self.dims.len()
    }

    pub fn concat(&self, other: &HilbertSpace) -> HilbertSpace {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        HilbertSpace { dims }
    }
}

/// A square complex matrix tied to the space it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: matrix.nrows().max(matrix.ncols()) });
        }
        Ok(Operator { space, matrix })
    }

    /// Single-factor operator wrapping a square matrix.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let space = HilbertSpace::single(matrix.nrows())?;
        Self::new(space, matrix)
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.total_dim();
        Operator { space: space.clone(), matrix: CMatrix::identity(d, d) }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.total_dim();
        Operator { space: space.clone(), matrix: CMatrix::zeros(d, d) }
    }

    pub fn from_real_diagonal(space: &HilbertSpace, diag: &[f64]) -> Result<Self> {
        let d = space.total_dim();
        if diag.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: diag.len() });
        }
        let mut matrix = CMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            matrix[(i, i)] = C64::new(v, 0.0);
        }
        Ok(Operator { space: space.clone(), matrix })
    }

    pub(crate) fn from_parts_unchecked(space: HilbertSpace, matrix: CMatrix) -> Self {
        debug_assert_eq!(space.total_dim(), matrix.nrows());
        Operator { space, matrix }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Operator { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Operator { space: self.space.clone(), matrix: &self.matrix * factor }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.matrix.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Largest entry modulus of `A − A†`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let d = self.dim();
        let mut dev: f64 = 0.0;
        for j in 0..d {
            for i in 0..=j {
                dev = dev.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    fn check_same_space(&self, other: &Operator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        self.check_same_space(other)?;
        Ok(Operator { space: self.space.clone(), matrix: &self.matrix * &other.matrix })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.check_same_space(other)?;
        let matrix = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(Operator { space: self.space.clone(), matrix })
    }

    /// Applies the operator to a state vector.
    pub fn apply(&self, psi: &CVector) -> Result<CVector> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: psi.len() });
        }
        Ok(&self.matrix * psi)
    }

    pub(crate) fn to_csr(&self) -> Csr {
        Csr::from_dense(&self.matrix)
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;

    /// # Panics
    /// If the operands act on different spaces.
    fn add(self, rhs: &'a Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator { space: self.space.clone(), matrix: &self.matrix + &rhs.matrix }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;

    /// # Panics
    /// If the operands act on different spaces.
    fn sub(self, rhs: &'a Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator { space: self.space.clone(), matrix: &self.matrix - &rhs.matrix }
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;

    /// # Panics
    /// If the operands act on different spaces.
    fn mul(self, rhs: &'a Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator { space: self.space.clone(), matrix: &self.matrix * &rhs.matrix }
    }
}

/// `|to⟩⟨from|` on a single factor of dimension `dim`.
pub fn transition(dim: usize, to: usize, from: usize) -> Result<Operator> {
    if to >= dim || from >= dim {
        return Err(Error::SiteOutOfRange { site: to.max(from), sites: dim });
    }
    let mut m = CMatrix::zeros(dim, dim);
    m[(to, from)] = ONE;
    Operator::from_matrix(m)
}

/// Two-level raising operator `|1⟩⟨0|`.
pub fn sigma_plus() -> Operator {
    transition(2, 1, 0).expect("static dimensions")
}

/// Two-level lowering operator `|0⟩⟨1|`.
pub fn sigma_minus() -> Operator {
    transition(2, 0, 1).expect("static dimensions")
}

/// Tensor product; the factor lists are concatenated.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator { space: a.space.concat(&b.space), matrix: a.matrix.kronecker(&b.matrix) }
}

/// Places `local` on factor `site` with identities on every other factor.
pub fn embed(local: &Operator, site: usize, space: &HilbertSpace) -> Result<Operator> {
    local_product(&[(site, local)], space)
}

/// Tensor product of local operators on distinct sites, identity elsewhere.
pub fn local_product(factors: &[(usize, &Operator)], space: &HilbertSpace) -> Result<Operator> {
    let dims = space.dims();
    if space.total_dim() > MAX_DENSE_DIM {
        return Err(Error::DimensionCap { dim: space.total_dim(), cap: MAX_DENSE_DIM });
    }
    for (k, &(site, op)) in factors.iter().enumerate() {
        if site >= dims.len() {
            return Err(Error::SiteOutOfRange { site, sites: dims.len() });
        }
        if op.dim() != dims[site] {
            return Err(Error::DimensionMismatch { expected: dims[site], found: op.dim() });
        }
        if factors[..k].iter().any(|&(s, _)| s == site) {
            return Err(Error::InvalidParameter(format!("site {site} appears twice in a local product")));
        }
    }
    let mut matrix = CMatrix::identity(1, 1);
    for (site, &d) in dims.iter().enumerate() {
        let factor = match factors.iter().find(|&&(s, _)| s == site) {
            Some(&(_, op)) => op.matrix.clone(),
            None => CMatrix::identity(d, d),
        };
        matrix = matrix.kronecker(&factor);
    }
    Ok(Operator { space: space.clone(), matrix })
}

/// Collective spin operators of `N` two-level batteries.
#[derive(Clone, Debug)]
pub struct CollectiveSpin {
    pub s_plus: Operator,
    pub s_minus: Operator,
    pub s_z: Operator,
    pub s_sq: Operator,
}

fn check_battery_count(n: usize) -> Result<()> {
    if n == 0 || n > MAX_FULL_BATTERIES {
        return Err(Error::BatteryCount { n, min: 1, max: MAX_FULL_BATTERIES });
    }
    Ok(())
}

/// Bit mask of battery `site` in a `2^n` basis index.
#[inline]
pub(crate) fn site_bit(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

pub(crate) fn collective_raising_csr(n: usize) -> Csr {
    let dim = 1usize << n;
    let mut t = Vec::with_capacity(n * dim / 2);
    for x in 0..dim {
        for site in 0..n {
            let bit = site_bit(n, site);
            if x & bit == 0 {
                t.push((x | bit, x, ONE));
            }
        }
    }
    Csr::from_triplets(dim, t)
}

pub fn collective_spin_ops(n: usize) -> Result<CollectiveSpin> {
    check_battery_count(n)?;
    let space = HilbertSpace::qubits(n)?;
    let dim = 1usize << n;
    let sp = collective_raising_csr(n);
    let sm = sp.adjoint();
    let half_n = n as f64 / 2.0;
    let sz = Csr::from_triplets(dim, (0..dim).map(|x| (x, x, C64::new(x.count_ones() as f64 - half_n, 0.0))).collect());
    let s_sq = sp.matmul(&sm).add(&sm.matmul(&sp)).scale(C64::new(0.5, 0.0)).add(&sz.matmul(&sz));
    Ok(CollectiveSpin {
        s_plus: Operator::from_parts_unchecked(space.clone(), sp.to_dense()),
        s_minus: Operator::from_parts_unchecked(space.clone(), sm.to_dense()),
        s_z: Operator::from_parts_unchecked(space.clone(), sz.to_dense()),
        s_sq: Operator::from_parts_unchecked(space, s_sq.to_dense()),
    })
}

/// `H_B = ω_0 Σ_j |1⟩⟨1|_j` on `2^n` (units of `ω_0`).
pub fn battery_hamiltonian(n: usize) -> Result<Operator> {
    check_battery_count(n)?;
    let space = HilbertSpace::qubits(n)?;
    let diag: Vec<f64> = (0..1usize << n).map(|x| x.count_ones() as f64).collect();
    Operator::from_real_diagonal(&space, &diag)
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const PSD_TOL: f64 = 1e-9;

    pub fn new(op: Operator) -> Result<Self> {
        let dev = op.hermiticity_deviation();
        if dev > Self::HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = op.trace();
        if (tr - ONE).norm() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {} + {}i differs from 1", tr.re, tr.im)));
        }
        let min = linalg::min_eigenvalue(op.matrix());
        if min < -Self::PSD_TOL {
            return Err(Error::InvalidState(format!("minimum eigenvalue {min:e} is negative")));
        }
        Ok(DensityMatrix { op })
    }

    /// State produced by trusted dynamics; validity is checked by the caller.
    pub(crate) fn from_trusted(op: Operator) -> Self {
        DensityMatrix { op }
    }

    /// `|ψ⟩⟨ψ|` for a normalized `ψ`.
    pub fn from_pure(space: &HilbertSpace, psi: &CVector) -> Result<Self> {
        let d = space.total_dim();
        if psi.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: psi.len() });
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("state vector norm {norm} differs from 1")));
        }
        Ok(DensityMatrix { op: Operator::from_parts_unchecked(space.clone(), psi * psi.adjoint()) })
    }

    pub fn basis_state(space: &HilbertSpace, index: usize) -> Result<Self> {
        let d = space.total_dim();
        if index >= d {
            return Err(Error::DimensionMismatch { expected: d, found: index + 1 });
        }
        let mut m = CMatrix::zeros(d, d);
        m[(index, index)] = ONE;
        Ok(DensityMatrix { op: Operator::from_parts_unchecked(space.clone(), m) })
    }

    pub fn from_diagonal(space: &HilbertSpace, probs: &[f64]) -> Result<Self> {
        Self::new(Operator::from_real_diagonal(space, probs)?)
    }

    pub fn maximally_mixed(space: &HilbertSpace) -> Self {
        let d = space.total_dim();
        DensityMatrix { op: Operator::identity(space).scale(C64::new(1.0 / d as f64, 0.0)) }
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn space(&self) -> &HilbertSpace {
        self.op.space()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    /// Real parts of the diagonal.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix().diagonal().iter().map(|z| z.re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(self.matrix())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(self.matrix())
    }

    /// Traces out the first `factors` subsystems.
    pub fn partial_trace_front(&self, factors: usize) -> Result<DensityMatrix> {
        let dims = self.space().dims();
        if factors == 0 || factors >= dims.len() {
            return Err(Error::SiteOutOfRange { site: factors, sites: dims.len() });
        }
        let rest = HilbertSpace::new(dims[factors..].to_vec())?;
        let front: usize = dims[..factors].iter().product();
        let db = rest.total_dim();
        let m = self.matrix();
        let reduced = CMatrix::from_fn(db, db, |i, j| (0..front).map(|e| m[(e * db + i, e * db + j)]).sum());
        Ok(DensityMatrix { op: Operator::from_parts_unchecked(rest, reduced) })
    }
}

/// `tr(obs · ρ)` for a Hermitian observable.
pub fn expectation(obs: &Operator, rho: &DensityMatrix) -> Result<f64> {
    if obs.space() != rho.space() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: obs.dim() });
    }
    let dev = obs.hermiticity_deviation();
    if dev > 1e-12 * obs.max_norm().max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let v = trace_product(obs.matrix(), rho.matrix());
    if v.im.abs() > 1e-10 {
        return Err(Error::ImaginaryResidue(v.im));
    }
    Ok(v.re)
}

/// `tr(A · B)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let d = a.nrows();
    let mut s = ZERO;
    for j in 0..d {
        for i in 0..d {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn kron_identity_and_diagonal() {
        let i2 = Operator::identity(&HilbertSpace::qubits(1).unwrap());
        assert_eq!(kron(&i2, &i2).matrix(), &CMatrix::identity(4, 4));
        assert_eq!(kron(&i2, &i2).space().dims(), &[2, 2]);

        let n = transition(2, 1, 1).unwrap();
        let nn = kron(&n, &n);
        let diag: Vec<f64> = nn.matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(diag, [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn kron_basis_action() {
        let i2 = Operator::identity(&HilbertSpace::qubits(1).unwrap());
        let op = kron(&sigma_plus(), &i2);
        let mut psi = CVector::zeros(4);
        psi[0] = ONE; // |00⟩
        let out = op.apply(&psi).unwrap();
        assert_eq!(out[2], ONE); // |10⟩
        assert_eq!(out.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn embed_examples() {
        let space = HilbertSpace::qubits(2).unwrap();
        let e = embed(&sigma_plus(), 0, &space).unwrap();
        let i2 = Operator::identity(&HilbertSpace::qubits(1).unwrap());
        assert_eq!(e.matrix(), kron(&sigma_plus(), &i2).matrix());

        let space = HilbertSpace::new(alloc::vec![3, 2, 2]).unwrap();
        let id3 = Operator::identity(&HilbertSpace::single(3).unwrap());
        assert_eq!(embed(&id3, 0, &space).unwrap().matrix(), &CMatrix::identity(12, 12));

        // |2⟩_E|0⟩_B → |2⟩_E|1⟩_B
        let space = HilbertSpace::new(alloc::vec![3, 2]).unwrap();
        let op = embed(&sigma_plus(), 1, &space).unwrap();
        let mut psi = CVector::zeros(6);
        psi[4] = ONE;
        let out = op.apply(&psi).unwrap();
        assert_eq!(out[5], ONE);
    }

    #[test]
    fn embed_errors() {
        let space = HilbertSpace::qubits(2).unwrap();
        assert!(matches!(embed(&sigma_plus(), 2, &space), Err(Error::SiteOutOfRange { .. })));
        let id3 = Operator::identity(&HilbertSpace::single(3).unwrap());
        assert!(matches!(embed(&id3, 0, &space), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn collective_spin_spectra() {
        let s1 = collective_spin_ops(1).unwrap();
        let mut ev = linalg::hermitian_eigenvalues(s1.s_z.matrix());
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, [-0.5, 0.5]);

        let s2 = collective_spin_ops(2).unwrap();
        let mut ev = linalg::hermitian_eigenvalues(s2.s_sq.matrix());
        ev.sort_by(f64::total_cmp);
        let expected = [0.0, 2.0, 2.0, 2.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }

        let s3 = collective_spin_ops(3).unwrap();
        assert!((s3.s_sq.matrix()[(0, 0)] - c(3.75)).norm() < 1e-14);
        assert!(s3.s_sq.matrix().column(0).iter().skip(1).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn collective_spin_conservation() {
        for n in 1..=5 {
            let s = collective_spin_ops(n).unwrap();
            let hb = battery_hamiltonian(n).unwrap();
            assert_eq!(s.s_plus.adjoint(), s.s_minus);
            for x in [&s.s_plus, &s.s_minus, &hb] {
                assert!(s.s_sq.commutator(x).unwrap().max_norm() < 1e-12);
            }
        }
    }

    #[test]
    fn collective_spin_range() {
        assert!(matches!(collective_spin_ops(0), Err(Error::BatteryCount { .. })));
        assert!(matches!(collective_spin_ops(13), Err(Error::BatteryCount { .. })));
    }

    #[test]
    fn expectation_examples() {
        let space = HilbertSpace::qubits(2).unwrap();
        let rho = DensityMatrix::maximally_mixed(&space);
        assert!((expectation(&Operator::identity(&space), &rho).unwrap() - 1.0).abs() < 1e-15);

        let hb = battery_hamiltonian(2).unwrap();
        let empty = DensityMatrix::basis_state(&space, 0).unwrap();
        assert_eq!(expectation(&hb, &empty).unwrap(), 0.0);

        let mut psi = CVector::zeros(4);
        psi[1] = c(core::f64::consts::FRAC_1_SQRT_2);
        psi[2] = c(core::f64::consts::FRAC_1_SQRT_2);
        let dicke = DensityMatrix::from_pure(&space, &psi).unwrap();
        assert!((expectation(&hb, &dicke).unwrap() - 1.0).abs() < 1e-15);

        let sp = embed(&sigma_plus(), 0, &space).unwrap();
        assert!(matches!(expectation(&sp, &rho), Err(Error::NotHermitian { .. })));
        let other = DensityMatrix::maximally_mixed(&HilbertSpace::qubits(1).unwrap());
        assert!(matches!(expectation(&hb, &other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn density_matrix_validation() {
        let space = HilbertSpace::qubits(1).unwrap();
        assert!(DensityMatrix::from_diagonal(&space, &[0.5, 0.6]).is_err());
        assert!(DensityMatrix::from_diagonal(&space, &[1.2, -0.2]).is_err());
        let mut m = CMatrix::identity(2, 2) * c(0.5);
        m[(0, 1)] = c(0.1);
        assert!(matches!(DensityMatrix::new(Operator::new(space, m).unwrap()), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let e = DensityMatrix::from_diagonal(&HilbertSpace::single(3).unwrap(), &[0.2, 0.3, 0.5]).unwrap();
        let b = DensityMatrix::from_diagonal(&HilbertSpace::qubits(1).unwrap(), &[0.25, 0.75]).unwrap();
        let joint = DensityMatrix::new(kron(e.operator(), b.operator())).unwrap();
        let rb = joint.partial_trace_front(1).unwrap();
        assert!(crate::linalg::max_abs((rb.matrix() - b.matrix()).as_slice()) < 1e-15);
    }
}
