//! Small dense complex linear algebra for the 2-, 4- and 16-dimensional
//! spaces the simulator works in, plus Born-rule sampling.
//!
//! Qubit ordering throughout the crate is `(pol1, time1, pol2, time2)`, left
//! factor most significant, with `H = ↑ = 0` and `V = ↓ = 1`. A joint pair
//! index is therefore `8*pol1 + 4*time1 + 2*pol2 + time2`, and a one-photon
//! index is `2*pol + time`.

use std::fmt;

pub use num_complex::Complex64 as Complex;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance on the total probability of a Born sample.
pub const PROBABILITY_TOL: f64 = 1e-9;

const VALID_DIMS: [usize; 3] = [2, 4, 16];

fn check_dim(dim: usize) -> Result<()> {
    if VALID_DIMS.contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(dim))
    }
}

fn check_match(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[inline]
fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

/// A ket of dimension 2, 4 or 16. Not necessarily normalized: the result of
/// applying an operator is allowed to leave the unit sphere.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    amps: Vec<Complex>,
}

impl fmt::Debug for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.amps.iter().map(|a| (a.re, a.im)))
            .finish()
    }
}

impl StateVec {
    pub fn from_amps(amps: Vec<Complex>) -> Result<Self> {
        check_dim(amps.len())?;
        Ok(Self { amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::from_amps(amps.iter().map(|&a| c(a, 0.0)).collect())
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        check_dim(dim)?;
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        let mut amps = vec![Complex::ZERO; dim];
        amps[index] = Complex::ONE;
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized { norm_sqr: n * n });
        }
        Ok(self.scaled(c(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, k: Complex) -> Self {
        Self {
            amps: self.amps.iter().map(|a| a * k).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_match(self.dim(), other.dim())?;
        Ok(Self {
            amps: self
                .amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(c(-1.0, 0.0)))
    }

    /// Multiplies by a global phase so that the first amplitude with
    /// magnitude above tolerance is real and positive.
    pub fn with_canonical_phase(&self) -> Self {
        match self.amps.iter().find(|a| a.norm() > ALGEBRA_TOL) {
            Some(first) => self.scaled(first.conj() / first.norm()),
            None => self.clone(),
        }
    }

    /// Largest componentwise distance to `other`.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.distance(other) <= tol
    }
}

/// Dense square matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<Complex>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            for col in 0..self.dim {
                let e = self.get(r, col);
                write!(f, " {:+.3}{:+.3}i", e.re, e.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl Operator {
    pub fn from_entries(dim: usize, entries: Vec<Complex>) -> Result<Self> {
        check_dim(dim)?;
        check_match(dim * dim, entries.len())?;
        Ok(Self { dim, entries })
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::from_entries(dim, entries.iter().map(|&e| c(e, 0.0)).collect())
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut entries = vec![Complex::ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex::ONE;
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            entries: vec![Complex::ZERO; dim * dim],
        })
    }

    /// Outer product `|u⟩⟨v|`.
    pub fn outer(u: &StateVec, v: &StateVec) -> Result<Self> {
        check_match(u.dim(), v.dim())?;
        let dim = u.dim();
        let mut entries = Vec::with_capacity(dim * dim);
        for a in u.amps() {
            for b in v.amps() {
                entries.push(a * b.conj());
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex] {
        &self.entries
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_match(self.dim, other.dim)?;
        let d = self.dim;
        let mut entries = vec![Complex::ZERO; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.get(r, k);
                if a == Complex::ZERO {
                    continue;
                }
                for col in 0..d {
                    entries[r * d + col] += a * other.get(k, col);
                }
            }
        }
        Ok(Self { dim: d, entries })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_match(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scaled(&self, k: Complex) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|e| e * k).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(c(-1.0, 0.0)))
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![Complex::ZERO; d * d];
        for r in 0..d {
            for col in 0..d {
                entries[col * d + r] = self.get(r, col).conj();
            }
        }
        Self { dim: d, entries }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.approx_eq(&self.adjoint(), tol)
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// `{A, B} = AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.add(&other.mul(self)?)
    }

    pub fn trace(&self) -> Complex {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

/// Kronecker product of two kets or two operators.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

fn check_tensor_dims(a: usize, b: usize) -> Result<usize> {
    let product = a * b;
    if product > 16 {
        return Err(Error::DimensionOverflow(product));
    }
    check_dim(product)?;
    Ok(product)
}

impl Tensor for StateVec {
    fn tensor(&self, other: &Self) -> Result<Self> {
        check_tensor_dims(self.dim(), other.dim())?;
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(Self { amps })
    }
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let dim = check_tensor_dims(self.dim, other.dim)?;
        let (da, db) = (self.dim, other.dim);
        let mut entries = vec![Complex::ZERO; dim * dim];
        for ar in 0..da {
            for ac in 0..da {
                let a = self.get(ar, ac);
                if a == Complex::ZERO {
                    continue;
                }
                for br in 0..db {
                    for bc in 0..db {
                        entries[(ar * db + br) * dim + ac * db + bc] = a * other.get(br, bc);
                    }
                }
            }
        }
        Ok(Self { dim, entries })
    }
}

pub fn tensor<T: Tensor>(u: &T, v: &T) -> Result<T> {
    u.tensor(v)
}

/// Matrix-vector product. The result is not renormalized.
pub fn apply(op: &Operator, psi: &StateVec) -> Result<StateVec> {
    check_match(op.dim(), psi.dim())?;
    let d = op.dim();
    let amps = (0..d)
        .map(|r| (0..d).map(|k| op.get(r, k) * psi.amps[k]).sum())
        .collect();
    Ok(StateVec { amps })
}

/// `⟨u|v⟩`, conjugate-linear in `u`.
pub fn inner(u: &StateVec, v: &StateVec) -> Result<Complex> {
    check_match(u.dim(), v.dim())?;
    Ok(u.amps.iter().zip(&v.amps).map(|(a, b)| a.conj() * b).sum())
}

/// `⟨ψ|O|ψ⟩` for Hermitian `O`. The imaginary part is dropped; callers that
/// care can check it with [`expectation_complex`].
pub fn expectation(op: &Operator, psi: &StateVec) -> Result<f64> {
    Ok(expectation_complex(op, psi)?.re)
}

pub fn expectation_complex(op: &Operator, psi: &StateVec) -> Result<Complex> {
    inner(psi, &apply(op, psi)?)
}

/// An orthonormal basis, one vector per outcome index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    vectors: Vec<StateVec>,
}

impl Basis {
    /// Builds a basis after checking count, dimensions and orthonormality.
    pub fn new(vectors: Vec<StateVec>) -> Result<Self> {
        let dim = vectors.first().map(StateVec::dim).unwrap_or(0);
        check_dim(dim)?;
        check_match(dim, vectors.len())?;
        for v in &vectors {
            check_match(dim, v.dim())?;
        }
        for (i, u) in vectors.iter().enumerate() {
            for (j, v) in vectors.iter().enumerate().skip(i) {
                let expected = if i == j { 1.0 } else { 0.0 };
                let got = inner(u, v)?;
                if (got - c(expected, 0.0)).norm() > ALGEBRA_TOL {
                    return Err(Error::NotOrthonormal { i, j });
                }
            }
        }
        Ok(Self { vectors })
    }

    pub fn computational(dim: usize) -> Result<Self> {
        Self::new(
            (0..dim)
                .map(|i| StateVec::basis(dim, i))
                .collect::<Result<_>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[StateVec] {
        &self.vectors
    }

    pub fn vector(&self, index: usize) -> &StateVec {
        &self.vectors[index]
    }

    /// Product basis `self ⊗ other`, outcome index `i * other.dim() + j`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let mut vectors = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.vectors {
            for b in &other.vectors {
                vectors.push(a.tensor(b)?);
            }
        }
        Ok(Self { vectors })
    }

    /// Born probabilities `|⟨bᵢ|ψ⟩|²` for every outcome.
    pub fn probabilities(&self, psi: &StateVec) -> Result<Vec<f64>> {
        self.vectors
            .iter()
            .map(|b| inner(b, psi).map(|z| z.norm_sqr()))
            .collect()
    }
}

/// Seeded simulation generator. The same `(seed, stream)` pair yields the
/// same draw sequence for a given build.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            self.uniform() < p
        }
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn pick(probs: &[f64], rng: &mut SimRng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    last_nonzero
}

/// Projective measurement of `psi` in `basis`. Returns the outcome index and
/// the post-measurement state, which is the selected basis vector.
pub fn born_sample(psi: &StateVec, basis: &Basis, rng: &mut SimRng) -> Result<(usize, StateVec)> {
    check_match(basis.dim(), psi.dim())?;
    if !psi.is_normalized(PROBABILITY_TOL) {
        return Err(Error::NotNormalized {
            norm_sqr: psi.norm_sqr(),
        });
    }
    let probs = basis.probabilities(psi)?;
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::NotNormalized { norm_sqr: total });
    }
    let index = pick(&probs, rng);
    Ok((index, basis.vector(index).clone()))
}

/// Which photon of a 16-dimensional pair state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Photon {
    First,
    Second,
}

/// `(⟨b| ⊗ I)ψ` or `(I ⊗ ⟨b|)ψ` for a 4-dim `b` and 16-dim `psi`.
/// Returns the unnormalized conditional state of the other photon.
pub fn partial_project(psi: &StateVec, photon: Photon, b: &StateVec) -> Result<StateVec> {
    check_match(16, psi.dim())?;
    check_match(4, b.dim())?;
    let mut amps = vec![Complex::ZERO; 4];
    for i in 0..4 {
        for j in 0..4 {
            let a = psi.amps[4 * i + j];
            match photon {
                Photon::First => amps[j] += b.amps[i].conj() * a,
                Photon::Second => amps[i] += b.amps[j].conj() * a,
            }
        }
    }
    Ok(StateVec { amps })
}

/// Measures one photon of a pair in a 4-dim basis. Returns the outcome
/// index, the collapsed basis vector and the normalized conditional state of
/// the other photon.
pub fn measure_photon(
    psi: &StateVec,
    photon: Photon,
    basis: &Basis,
    rng: &mut SimRng,
) -> Result<(usize, StateVec, StateVec)> {
    check_match(4, basis.dim())?;
    if !psi.is_normalized(PROBABILITY_TOL) {
        return Err(Error::NotNormalized {
            norm_sqr: psi.norm_sqr(),
        });
    }
    let conditionals = basis
        .vectors()
        .iter()
        .map(|b| partial_project(psi, photon, b))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<f64> = conditionals.iter().map(StateVec::norm_sqr).collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::NotNormalized { norm_sqr: total });
    }
    let index = pick(&probs, rng);
    let rest = conditionals[index].normalized()?;
    Ok((index, basis.vector(index).clone(), rest))
}

/// Single-qubit Pauli label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
}

/// Applies a Pauli to `qubit` (0 = most significant) of a multi-qubit ket.
pub fn apply_pauli(psi: &StateVec, qubit: usize, pauli: Pauli) -> Result<StateVec> {
    let dim = psi.dim();
    let n_qubits = dim.trailing_zeros() as usize;
    if qubit >= n_qubits {
        return Err(Error::IndexOutOfRange {
            index: qubit,
            dim: n_qubits,
        });
    }
    let mask = 1usize << (n_qubits - 1 - qubit);
    let mut amps = psi.amps.clone();
    for (idx, amp) in amps.iter_mut().enumerate() {
        let bit_set = idx & mask != 0;
        let partner = psi.amps[idx ^ mask];
        *amp = match pauli {
            Pauli::X => partner,
            // Y|0⟩ = i|1⟩, Y|1⟩ = -i|0⟩
            Pauli::Y if bit_set => c(0.0, 1.0) * partner,
            Pauli::Y => c(0.0, -1.0) * partner,
            Pauli::Z if bit_set => -psi.amps[idx],
            Pauli::Z => psi.amps[idx],
        };
    }
    Ok(StateVec { amps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h() -> StateVec {
        StateVec::basis(2, 0).unwrap()
    }
    fn v() -> StateVec {
        StateVec::basis(2, 1).unwrap()
    }
    fn x() -> Operator {
        Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }
    fn z() -> Operator {
        Operator::from_real(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    #[test]
    fn tensor_orders_left_factor_most_significant() {
        let hu = tensor(&h(), &h()).unwrap();
        assert_eq!(hu.dim(), 4);
        assert_eq!(hu.amps()[0], Complex::ONE);
        let vu = tensor(&v(), &h()).unwrap();
        assert_eq!(vu.amps()[2], Complex::ONE);
    }

    #[test]
    fn tensor_operator_acts_on_left_factor() {
        let z_i = tensor(&z(), &Operator::identity(2).unwrap()).unwrap();
        let v_up = tensor(&v(), &h()).unwrap();
        let out = apply(&z_i, &v_up).unwrap();
        assert!(out.approx_eq(&v_up.scaled(c(-1.0, 0.0)), ALGEBRA_TOL));
    }

    #[test]
    fn tensor_rejects_overflow_and_odd_dims() {
        let four = StateVec::basis(4, 0).unwrap();
        let sixteen = StateVec::basis(16, 0).unwrap();
        assert!(matches!(
            tensor(&four, &sixteen),
            Err(Error::DimensionOverflow(64))
        ));
        assert!(matches!(
            tensor(&h(), &four),
            Err(Error::InvalidDimension(8))
        ));
    }

    #[test]
    fn pauli_actions() {
        assert!(apply(&x(), &h()).unwrap().approx_eq(&v(), 0.0));
        let down = v();
        assert!(apply(&z(), &down)
            .unwrap()
            .approx_eq(&down.scaled(c(-1.0, 0.0)), 0.0));
        let psi = StateVec::from_amps(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert_eq!(apply(&Operator::identity(2).unwrap(), &psi).unwrap(), psi);
    }

    #[test]
    fn apply_dim_mismatch() {
        assert!(matches!(
            apply(&x(), &StateVec::basis(4, 0).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inner_products() {
        assert_eq!(inner(&h(), &v()).unwrap(), Complex::ZERO);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let up_bar = StateVec::from_real(&[s, s]).unwrap();
        assert!((inner(&up_bar, &h()).unwrap() - c(s, 0.0)).norm() < ALGEBRA_TOL);
        // conjugate-linear in the first slot
        let iu = h().scaled(c(0.0, 1.0));
        assert_eq!(inner(&iu, &h()).unwrap(), c(0.0, -1.0));
    }

    #[test]
    fn expectation_of_z_on_plus_is_zero() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVec::from_real(&[s, s]).unwrap();
        assert!(expectation(&z(), &plus).unwrap().abs() < ALGEBRA_TOL);
    }

    #[test]
    fn born_sample_eigenvector_is_certain() {
        let basis = Basis::computational(4).unwrap();
        let h_up = StateVec::basis(4, 0).unwrap();
        let mut rng = SimRng::new(1);
        for _ in 0..100 {
            let (i, post) = born_sample(&h_up, &basis, &mut rng).unwrap();
            assert_eq!(i, 0);
            assert_eq!(post, h_up);
        }
    }

    #[test]
    fn born_sample_splits_superposition() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // |H↑̄⟩ = (|H↑⟩ + |H↓⟩)/√2
        let psi = StateVec::from_real(&[s, s, 0.0, 0.0]).unwrap();
        let basis = Basis::computational(4).unwrap();
        let mut rng = SimRng::new(7);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[born_sample(&psi, &basis, &mut rng).unwrap().0] += 1;
        }
        assert_eq!(counts[2] + counts[3], 0);
        // 4σ for n=1e4, p=1/2 is 200
        assert!((counts[0] as i64 - 5000).abs() < 200, "{counts:?}");
    }

    #[test]
    fn born_sample_rejects_unnormalized() {
        let psi = StateVec::from_real(&[1.0, 1.0]).unwrap();
        let basis = Basis::computational(2).unwrap();
        assert!(matches!(
            born_sample(&psi, &basis, &mut SimRng::new(0)),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn basis_rejects_non_orthogonal() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = Basis::new(vec![h(), StateVec::from_real(&[s, s]).unwrap()]);
        assert!(matches!(r, Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn pauli_y_matches_matrix() {
        let y = Operator::from_entries(
            2,
            vec![Complex::ZERO, c(0.0, -1.0), c(0.0, 1.0), Complex::ZERO],
        )
        .unwrap();
        let psi = StateVec::from_amps(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let direct = apply_pauli(&psi, 0, Pauli::Y).unwrap();
        assert!(direct.approx_eq(&apply(&y, &psi).unwrap(), ALGEBRA_TOL));
    }

    #[test]
    fn measure_photon_gives_conditional_state() {
        // (|00⟩+|11⟩)/√2 on two photons, each a 4-dim system: Σ_i |i⟩|i⟩ / 2
        let mut amps = vec![Complex::ZERO; 16];
        for i in 0..4 {
            amps[5 * i] = c(0.5, 0.0);
        }
        let psi = StateVec::from_amps(amps).unwrap();
        let basis = Basis::computational(4).unwrap();
        let mut rng = SimRng::new(3);
        let (i, collapsed, rest) = measure_photon(&psi, Photon::First, &basis, &mut rng).unwrap();
        assert_eq!(collapsed, StateVec::basis(4, i).unwrap());
        assert!(rest.approx_eq(&StateVec::basis(4, i).unwrap(), ALGEBRA_TOL));
    }

    fn arb_state(dim: usize) -> impl Strategy<Value = StateVec> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_filter_map("nonzero", |v| {
            let s = StateVec::from_amps(v.into_iter().map(|(a, b)| c(a, b)).collect()).ok()?;
            if s.norm_sqr() < 1e-6 {
                None
            } else {
                s.normalized().ok()
            }
        })
    }

    proptest! {
        #[test]
        fn collapsed_states_have_unit_norm(psi in arb_state(16), seed in any::<u64>()) {
            let basis = Basis::computational(16).unwrap();
            let (_, post) = born_sample(&psi, &basis, &mut SimRng::new(seed)).unwrap();
            prop_assert!((post.norm_sqr() - 1.0).abs() < ALGEBRA_TOL);
        }

        #[test]
        fn conditional_states_have_unit_norm(psi in arb_state(16), seed in any::<u64>()) {
            let basis = Basis::computational(4).unwrap();
            let (_, _, rest) = measure_photon(&psi, Photon::Second, &basis, &mut SimRng::new(seed)).unwrap();
            prop_assert!((rest.norm_sqr() - 1.0).abs() < ALGEBRA_TOL);
        }

        #[test]
        fn paulis_preserve_norm(psi in arb_state(16), q in 0usize..4, p in 0usize..3) {
            let out = apply_pauli(&psi, q, Pauli::ALL[p]).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < ALGEBRA_TOL);
        }
    }
}
