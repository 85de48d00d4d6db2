//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything here works on square complex matrices of dimension at most
//! [`MAX_DIM`]. Eigendecomposition is delegated to nalgebra's Hermitian
//! solver; the rest (projection predicates, spectral families, Kronecker
//! products, direct sums) is written out directly.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use faer::complex_native::c64;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Tolerance for algebraic predicates (hermiticity, idempotence, order).
pub const EPS: f64 = 1e-9;
/// Tolerance for reconstruction residuals.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Largest supported Hilbert space dimension.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not a projection (max deviation {deviation:e})")]
    NotProjection { deviation: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    TooLarge(usize),
}

/// A square complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix(dim={}) [", self.dim())?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim() {
                let z = self.0[(i, j)];
                if j > 0 {
                    write!(f, ", ")?;
                }
                if z.im.abs() > 1e-12 {
                    write!(f, "{:.4}{:+.4}i", z.re, z.im)?;
                } else {
                    write!(f, "{:.4}", z.re)?;
                }
            }
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn from_dmatrix(m: DMatrix<Complex64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(LinalgError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        let flat: Vec<Complex64> = rows.iter().flatten().copied().collect();
        Self::from_dmatrix(DMatrix::from_row_slice(n, n, &flat))
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(n: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), n * n, "expected {n}x{n} entries");
        let flat: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Outer product `|v⟩⟨v|`.
    pub fn outer(v: &[Complex64]) -> Self {
        let n = v.len();
        Self(DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖self − other‖_max`; panics on dimension mismatch.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim() == other.dim() && self.distance(other) <= tol
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Block-diagonal `self ⊕ other`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (n1, n2) = (self.dim(), other.dim());
        let mut m = DMatrix::zeros(n1 + n2, n1 + n2);
        m.view_mut((0, 0), (n1, n1)).copy_from(&self.0);
        m.view_mut((n1, n1), (n2, n2)).copy_from(&other.0);
        Self(m)
    }

    /// `(self + self†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    /// `⟨ψ|self|ψ⟩` (real part).
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        assert_eq!(psi.len(), self.dim());
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += psi[i].conj() * self.0[(i, j)] * psi[j];
            }
        }
        acc.re
    }

    /// Conjugation `u · self · u†`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        &(u * self) * &u.adjoint()
    }

    /// Row-major entries rounded to a `1/quantum` grid, used for canonical keys.
    pub fn rounded_key(&self, quantum: f64) -> Vec<(i64, i64)> {
        let n = self.dim();
        let mut key = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.0[(i, j)];
                key.push(((z.re / quantum).round() as i64, (z.im / quantum).round() as i64));
            }
        }
        key
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

// Wire format: {"dim": n, "entries": [[[re, im], ...], ...]}, row-major.
#[derive(Serialize, Deserialize)]
struct MatrixWire {
    dim: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let n = self.dim();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let z = self.0[(i, j)];
                        [clean(z.re), clean(z.im)]
                    })
                    .collect()
            })
            .collect();
        MatrixWire { dim: n, entries }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = MatrixWire::deserialize(d)?;
        if wire.entries.len() != wire.dim {
            return Err(D::Error::custom(format!(
                "expected {} rows, found {}",
                wire.dim,
                wire.entries.len()
            )));
        }
        let rows: Vec<Vec<Complex64>> = wire
            .entries
            .iter()
            .map(|r| r.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
            .collect();
        ComplexMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

// -0.0 and sub-1e-15 noise make byte-identical output fragile.
fn clean(x: f64) -> f64 {
    if x.abs() < 1e-15 {
        0.0
    } else {
        x
    }
}

/// A self-adjoint operator. The stored matrix is exactly hermitian.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        if m.dim() > MAX_DIM {
            return Err(LinalgError::TooLarge(m.dim()));
        }
        let deviation = m.distance(&m.adjoint());
        if deviation > EPS {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(Self(m.hermitian_part()))
    }

    pub fn from_real(n: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        Self::new(ComplexMatrix::from_real(n, entries))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self(ComplexMatrix::diagonal(values))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kron(&other.0).hermitian_part())
    }

    pub fn direct_sum(&self, other: &Self) -> Self {
        Self(self.0.direct_sum(&other.0))
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        self.0.commutator(&other.0).max_abs() <= EPS
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigendecompose(self).into_iter().map(|e| e.value).collect()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        eigendecompose(self)
            .last()
            .map(|e| e.value)
            .expect("operator has at least one eigenvalue")
    }
}

impl<'de> Deserialize<'de> for HermitianOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        HermitianOperator::new(ComplexMatrix::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// An orthogonal projection.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProjectionOperator(ComplexMatrix);

impl ProjectionOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        let h = HermitianOperator::new(m)?.into_matrix();
        let deviation = (&h * &h).distance(&h);
        if deviation > EPS {
            return Err(LinalgError::NotProjection { deviation });
        }
        Ok(Self(h))
    }

    /// Wraps a matrix already known to be a projection up to rounding noise.
    pub(crate) fn new_unchecked(m: ComplexMatrix) -> Self {
        Self(m.hermitian_part())
    }

    pub fn zero(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    /// Projection onto the span of a single (not necessarily normalized) vector.
    pub fn onto_vector(v: &[Complex64]) -> Self {
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let unit: Vec<Complex64> = v.iter().map(|z| z / norm).collect();
        Self(ComplexMatrix::outer(&unit))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn rank(&self) -> usize {
        self.0.trace().re.round().max(0.0) as usize
    }

    pub fn is_zero(&self) -> bool {
        self.0.max_abs() <= EPS
    }

    pub fn complement(&self) -> Self {
        Self(&ComplexMatrix::identity(self.dim()) - &self.0)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kron(&other.0).hermitian_part())
    }

    pub fn direct_sum(&self, other: &Self) -> Self {
        Self(self.0.direct_sum(&other.0))
    }

    /// `self · other ≈ 0`.
    pub fn is_orthogonal_to(&self, other: &Self) -> bool {
        (&self.0 * &other.0).max_abs() <= EPS
    }

    /// Sum of projections assumed pairwise orthogonal.
    pub fn orthogonal_sum<'a>(dim: usize, parts: impl IntoIterator<Item = &'a Self>) -> Self {
        let mut acc = ComplexMatrix::zeros(dim);
        for p in parts {
            acc = &acc + &p.0;
        }
        Self(acc)
    }

    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator(self.0.clone())
    }
}

impl<'de> Deserialize<'de> for ProjectionOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        ProjectionOperator::new(ComplexMatrix::deserialize(d)?).map_err(D::Error::custom)
    }
}

/// One eigenvalue with its eigenprojection.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub projection: ProjectionOperator,
}

/// Spectral decomposition with eigenvalues strictly increasing.
///
/// Eigenvalues closer than [`EPS`] are merged and their projections summed.
pub fn eigendecompose(a: &HermitianOperator) -> Vec<Eigenpair> {
    let n = a.dim();
    let m = a.matrix().as_dmatrix();
    let fm = faer::Mat::<c64>::from_fn(n, n, |i, j| c64::new(m[(i, j)].re, m[(i, j)].im));
    let eig = fm.selfadjoint_eigendecomposition(faer::Side::Lower);
    let (u, s) = (eig.u(), eig.s().column_vector());
    let values: Vec<f64> = (0..n).map(|k| s.read(k).re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));

    let mut pairs: Vec<Eigenpair> = Vec::new();
    let mut group: Vec<usize> = Vec::new();
    let flush = |group: &mut Vec<usize>, pairs: &mut Vec<Eigenpair>| {
        if group.is_empty() {
            return;
        }
        let value = group.iter().map(|&k| values[k]).sum::<f64>() / group.len() as f64;
        let mut proj = DMatrix::<Complex64>::zeros(n, n);
        for &k in group.iter() {
            for i in 0..n {
                for j in 0..n {
                    let z = u.read(i, k) * u.read(j, k).conj();
                    proj[(i, j)] += Complex64::new(z.re, z.im);
                }
            }
        }
        pairs.push(Eigenpair {
            value,
            projection: ProjectionOperator::new_unchecked(ComplexMatrix(proj)),
        });
        group.clear();
    };
    for &k in &order {
        if let Some(&last) = group.last() {
            if values[k] - values[last] > EPS {
                flush(&mut group, &mut pairs);
            }
        }
        group.push(k);
    }
    flush(&mut group, &mut pairs);
    pairs
}

/// Cumulative spectral projections `E_λ` at each eigenvalue.
#[derive(Clone, Debug)]
pub struct SpectralFamily {
    pub eigenvalues: Vec<f64>,
    pub cumulative: Vec<ProjectionOperator>,
}

impl SpectralFamily {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &ProjectionOperator)> {
        self.eigenvalues.iter().copied().zip(self.cumulative.iter())
    }
}

pub fn spectral_family(a: &HermitianOperator) -> SpectralFamily {
    let n = a.dim();
    let mut acc = ComplexMatrix::zeros(n);
    let mut eigenvalues = Vec::new();
    let mut cumulative = Vec::new();
    for pair in eigendecompose(a) {
        acc = &acc + pair.projection.matrix();
        eigenvalues.push(pair.value);
        cumulative.push(ProjectionOperator::new_unchecked(acc.clone()));
    }
    SpectralFamily {
        eigenvalues,
        cumulative,
    }
}

/// `P ≤ Q` in the projection lattice, i.e. `QP = P`.
pub fn projection_leq(p: &ProjectionOperator, q: &ProjectionOperator) -> Result<bool, LinalgError> {
    if p.dim() != q.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: p.dim(),
            right: q.dim(),
        });
    }
    Ok((q.matrix() * p.matrix()).distance(p.matrix()) <= EPS)
}

/// Operator order `A ≤ B`: the smallest eigenvalue of `B − A` is ≥ −tol.
pub fn operator_leq(a: &HermitianOperator, b: &HermitianOperator, tol: f64) -> bool {
    let diff = HermitianOperator((b.matrix() - a.matrix()).hermitian_part());
    eigendecompose(&diff)
        .first()
        .is_none_or(|e| e.value >= -tol)
}

/// Normalizes a complex vector; `None` for the zero vector.
pub fn normalize(v: &[Complex64]) -> Option<Vec<Complex64>> {
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (norm > EPS).then(|| v.iter().map(|z| z / norm).collect())
}

pub fn vector_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Unitary from Gram–Schmidt on an iid complex Gaussian-ish matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let qr = m.qr();
        let q = qr.q();
        if q.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return ComplexMatrix(q);
        }
    }
}

/// Random hermitian matrix with entries drawn from `[-1, 1]`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianOperator {
    let m = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    HermitianOperator(ComplexMatrix(m).hermitian_part())
}

/// Random hermitian matrix with deliberately small integer spectrum, which
/// exercises degenerate eigenvalues.
pub fn random_degenerate_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianOperator {
    let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2..=2) as f64).collect();
    let u = random_unitary(n, rng);
    HermitianOperator(ComplexMatrix::diagonal(&values).conjugate_by(&u).hermitian_part())
}

/// Column `k` of a matrix as a vector.
pub fn column(m: &ComplexMatrix, k: usize) -> Vec<Complex64> {
    (0..m.dim()).map(|i| m.entry(i, k)).collect()
}

/// Pauli and single-qubit conveniences used throughout the tests and demos.
pub mod qubit {
    use super::*;

    pub fn sigma_x() -> HermitianOperator {
        HermitianOperator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).expect("hermitian")
    }

    pub fn sigma_z() -> HermitianOperator {
        HermitianOperator::diagonal(&[1.0, -1.0])
    }

    pub fn sigma_y() -> HermitianOperator {
        let i = Complex64::new(0.0, 1.0);
        let z = Complex64::new(0.0, 0.0);
        HermitianOperator::new(ComplexMatrix::from_rows(&[vec![z, -i], vec![i, z]]).expect("square"))
            .expect("hermitian")
    }

    /// `|0⟩⟨0|`, the +1 eigenprojection of σ_z.
    pub fn p_plus() -> ProjectionOperator {
        ProjectionOperator(ComplexMatrix::diagonal(&[1.0, 0.0]))
    }

    /// `|1⟩⟨1|`, the −1 eigenprojection of σ_z.
    pub fn p_minus() -> ProjectionOperator {
        ProjectionOperator(ComplexMatrix::diagonal(&[0.0, 1.0]))
    }

    /// `|+⟩⟨+|`, the +1 eigenprojection of σ_x.
    pub fn p_x_plus() -> ProjectionOperator {
        ProjectionOperator(ComplexMatrix::from_real(2, &[0.5, 0.5, 0.5, 0.5]))
    }

    /// `|−⟩⟨−|`, the −1 eigenprojection of σ_x.
    pub fn p_x_minus() -> ProjectionOperator {
        ProjectionOperator(ComplexMatrix::from_real(2, &[0.5, -0.5, -0.5, 0.5]))
    }

    pub fn ket(re: &[f64]) -> Vec<Complex64> {
        re.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::qubit::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reconstruct(pairs: &[Eigenpair], n: usize) -> ComplexMatrix {
        pairs.iter().fold(ComplexMatrix::zeros(n), |acc, e| {
            &acc + &e.projection.matrix().scale(e.value)
        })
    }

    #[test]
    fn sigma_x_decomposition() {
        let pairs = eigendecompose(&sigma_x());
        assert_eq!(pairs.len(), 2);
        assert!((pairs[0].value + 1.0).abs() < 1e-12);
        assert!((pairs[1].value - 1.0).abs() < 1e-12);
        assert!(pairs[0].projection.matrix().approx_eq(p_x_minus().matrix(), 1e-12));
        assert!(pairs[1].projection.matrix().approx_eq(p_x_plus().matrix(), 1e-12));
        assert!(pairs[0].projection.is_orthogonal_to(&pairs[1].projection));
        assert!(reconstruct(&pairs, 2).approx_eq(sigma_x().matrix(), RESIDUAL_TOL));
    }

    #[test]
    fn degenerate_complex_eigenprojections() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=8 {
            for _ in 0..20 {
                let a = random_degenerate_hermitian(n, &mut rng);
                let pairs = eigendecompose(&a);
                let mut total = ComplexMatrix::zeros(n);
                for e in &pairs {
                    let p = e.projection.matrix();
                    assert!((p * p).approx_eq(p, 1e-9));
                    assert!((a.matrix() * p).approx_eq(&p.scale(e.value), 1e-9));
                    total = &total + p;
                }
                assert!(total.approx_eq(&ComplexMatrix::identity(n), 1e-9));
                assert!(reconstruct(&pairs, n).approx_eq(a.matrix(), 1e-9));
            }
        }
    }

    #[test]
    fn identity_and_scalar_decompositions() {
        let pairs = eigendecompose(&HermitianOperator::identity(2));
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].value - 1.0).abs() < 1e-12);
        assert_eq!(pairs[0].projection.rank(), 2);

        let pairs = eigendecompose(&HermitianOperator::diagonal(&[3.0]));
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].value - 3.0).abs() < 1e-12);
        assert!(pairs[0].projection.matrix().approx_eq(&ComplexMatrix::identity(1), 1e-12));
    }

    #[test]
    fn near_degenerate_eigenvalues_merge() {
        let a = HermitianOperator::diagonal(&[1.0, 1.0 + 1e-11, 2.0]);
        let pairs = eigendecompose(&a);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].projection.rank(), 2);
    }

    #[test]
    fn spectral_family_examples() {
        let fam = spectral_family(&sigma_z());
        assert_eq!(fam.eigenvalues.len(), 2);
        assert!(fam.cumulative[0].matrix().approx_eq(p_minus().matrix(), 1e-12));
        assert!(fam.cumulative[1].matrix().approx_eq(&ComplexMatrix::identity(2), 1e-12));

        let fam = spectral_family(&HermitianOperator::identity(3));
        assert_eq!(fam.len(), 1);
        assert_eq!(fam.cumulative[0].rank(), 3);

        let fam = spectral_family(&HermitianOperator::diagonal(&[1.0, 2.0, 3.0]));
        let ranks: Vec<usize> = fam.cumulative.iter().map(|p| p.rank()).collect();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    #[test]
    fn projection_leq_examples() {
        let any = p_x_plus();
        assert!(projection_leq(&ProjectionOperator::zero(2), &any).unwrap());
        assert!(projection_leq(&any, &any).unwrap());
        assert!(!projection_leq(&p_plus(), &p_x_plus()).unwrap());
        assert!(matches!(
            projection_leq(&p_plus(), &ProjectionOperator::identity(3)),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constructors_reject_bad_input() {
        let m = ComplexMatrix::from_real(2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(HermitianOperator::new(m), Err(LinalgError::NotHermitian { .. })));
        let m = ComplexMatrix::from_real(2, &[1.0, 0.0, 0.0, 2.0]);
        assert!(matches!(ProjectionOperator::new(m), Err(LinalgError::NotProjection { .. })));
        let rows = vec![vec![Complex64::new(1.0, 0.0)], vec![]];
        assert!(ComplexMatrix::from_rows(&rows).is_err());
    }

    #[test]
    fn json_round_trip_uses_pairs() {
        let a = sigma_y();
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(text, r#"{"dim":2,"entries":[[[0.0,0.0],[0.0,-1.0]],[[0.0,1.0],[0.0,0.0]]]}"#);
        let back: HermitianOperator = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a);
        let bad = r#"{"dim":2,"entries":[[[0,0],[1,0]],[[0,0],[0,0]]]}"#;
        assert!(serde_json::from_str::<HermitianOperator>(bad).is_err());
    }

    #[test]
    fn random_spectral_families_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=5 {
            for _ in 0..10 {
                let a = if n % 2 == 0 {
                    random_degenerate_hermitian(n, &mut rng)
                } else {
                    random_hermitian(n, &mut rng)
                };
                let pairs = eigendecompose(&a);
                assert!(reconstruct(&pairs, n).approx_eq(a.matrix(), RESIDUAL_TOL));
                assert!(pairs.windows(2).all(|w| w[0].value < w[1].value));
                let fam = spectral_family(&a);
                assert!(fam.cumulative.last().unwrap().matrix().approx_eq(&ComplexMatrix::identity(n), EPS));
                for w in fam.cumulative.windows(2) {
                    assert!(projection_leq(&w[0], &w[1]).unwrap());
                    assert!(w[0].rank() < w[1].rank());
                }
            }
        }
    }

    #[test]
    fn projection_order_is_a_partial_order_on_sums() {
        // All sums of subsets of a random rank-one basis of C^3, plus a foreign projection.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_unitary(3, &mut rng);
        let basis: Vec<ProjectionOperator> =
            (0..3).map(|k| ProjectionOperator::onto_vector(&column(&u, k))).collect();
        let mut set: Vec<ProjectionOperator> = (0..8u32)
            .map(|mask| {
                ProjectionOperator::orthogonal_sum(3, basis.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, p)| p))
            })
            .collect();
        set.push(ProjectionOperator::onto_vector(&column(&random_unitary(3, &mut rng), 0)));
        for p in &set {
            assert!(projection_leq(p, p).unwrap());
            for q in &set {
                if projection_leq(p, q).unwrap() && projection_leq(q, p).unwrap() {
                    assert!(p.matrix().approx_eq(q.matrix(), 1e-8));
                }
                for r in &set {
                    if projection_leq(p, q).unwrap() && projection_leq(q, r).unwrap() {
                        assert!(projection_leq(p, r).unwrap());
                    }
                }
            }
        }
    }
}
