//! Dense complex Hermitian matrices.
//!
//! Every operator in the toolkit (states, POVM elements, likelihood kernels,
//! Lagrange multipliers) is a small `d x d` Hermitian matrix. Spectral
//! functions go through a full eigendecomposition; dimensions never exceed a
//! handful so exactness wins over iterative schemes.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;

/// Per-entry tolerance for `a[i][j] == conj(a[j][i])`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as round-off and clamped.
pub const PSD_TOL: f64 = 1e-10;
/// Default pseudo-inverse cutoff relative to the largest eigenvalue.
pub const DEFAULT_PINV_THRESHOLD: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct HermitianOperator {
    m: DMatrix<C64>,
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianOperator(")?;
        for a in 0..self.dim() {
            write!(f, "[")?;
            for b in 0..self.dim() {
                let z = self.m[(a, b)];
                if b > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}{:+}i", z.re, z.im)?;
            }
            write!(f, "]")?;
        }
        write!(f, ")")
    }
}

impl HermitianOperator {
    /// Wraps a square matrix after checking Hermiticity within [`HERMITIAN_TOL`].
    /// The stored matrix is the exact Hermitian part `(A + A†)/2`.
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("operator dimension must be positive".into()));
        }
        let dev = hermitian_deviation(&m);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self::symmetrized(m))
    }

    /// Takes the Hermitian part of an arbitrary square matrix.
    pub fn symmetrized(m: DMatrix<C64>) -> Self {
        let adj = m.adjoint();
        Self { m: (m + adj) * C64::new(0.5, 0.0) }
    }

    /// Builds an operator from `dim * dim` row-major `(re, im)` pairs.
    pub fn from_row_major(dim: usize, entries: &[(f64, f64)]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        let m = DMatrix::from_fn(dim, dim, |a, b| {
            let (re, im) = entries[a * dim + b];
            C64::new(re, im)
        });
        Self::from_matrix(m)
    }

    /// Real symmetric operator from rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            entries.extend(row.iter().map(|&x| (x, 0.0)));
        }
        Self::from_row_major(dim, &entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: DMatrix::zeros(dim, dim) }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            m: DMatrix::from_fn(n, n, |a, b| {
                if a == b {
                    C64::new(values[a], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// Rank-one projector `|v><v|` (the vector is used as given, not normalized).
    pub fn outer(v: &DVector<C64>) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    /// Row-major `(re, im)` pairs, the serialization order used by problem files.
    pub fn to_row_major(&self) -> Vec<(f64, f64)> {
        let n = self.dim();
        (0..n * n)
            .map(|k| {
                let z = self.m[(k / n, k % n)];
                (z.re, z.im)
            })
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|a| self.m[(a, a)].re).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: &self.m * C64::new(s, 0.0) }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self { m: &self.m + &other.m })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self { m: &self.m - &other.m })
    }

    /// `x * self * x`, re-symmetrized. Preserves positivity for Hermitian `x`.
    pub fn conjugate_by(&self, x: &Self) -> Result<Self> {
        check_dims(self, x)?;
        Ok(Self::symmetrized(&x.m * &self.m * &x.m))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self
            .m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.spectrum().eigenvalues.last().expect("non-empty operator")
    }

    /// Total order on the raw entries. Used to sum operator families in a
    /// label-independent order.
    pub(crate) fn entry_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.m.iter().zip(other.m.iter()) {
            let ord = a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    }
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for a in 0..n {
        for b in a..n {
            dev = dev.max((m[(a, b)] - m[(b, a)].conj()).norm());
        }
    }
    dev
}

fn check_dims(a: &HermitianOperator, b: &HermitianOperator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Sum of operators that does not depend on the order they are supplied in.
pub(crate) fn canonical_sum(terms: &[HermitianOperator]) -> Result<HermitianOperator> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty operator sum".into()))?;
    let mut sorted: Vec<&HermitianOperator> = terms.iter().collect();
    sorted.sort_by(|a, b| a.entry_cmp(b));
    let mut acc = HermitianOperator::zeros(first.dim());
    for t in sorted {
        acc = acc.add(t)?;
    }
    Ok(acc)
}

/// Eigendecomposition of a Hermitian operator, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<C64>>,
}

impl Spectrum {
    pub fn of(a: &HermitianOperator) -> Self {
        let eig = a.m.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..a.dim()).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let eigenvectors = order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect();
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    /// Rebuilds `sum_n f(e_n) |v_n><v_n|`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let n = self.eigenvalues.len();
        let mut m = DMatrix::<C64>::zeros(n, n);
        for (e, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let fe = f(*e);
            if fe != 0.0 {
                m += (v * v.adjoint()) * C64::new(fe, 0.0);
            }
        }
        HermitianOperator::symmetrized(m)
    }

    pub fn reconstruct(&self) -> HermitianOperator {
        self.map(|e| e)
    }
}

/// `Re Tr[a b]`.
pub fn trace_product(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a.m[(i, j)] * b.m[(j, i)];
        }
    }
    debug_assert!(acc.im.abs() < 1e-10, "Tr[ab] of Hermitian inputs has imaginary part {}", acc.im);
    Ok(acc.re)
}

/// Principal square root of a positive semidefinite operator.
pub fn hermitian_sqrt(a: &HermitianOperator) -> Result<HermitianOperator> {
    let spec = a.spectrum();
    let min = *spec.eigenvalues.last().expect("non-empty operator");
    if min < -PSD_TOL {
        return Err(Error::NotPsd(min));
    }
    Ok(spec.map(|e| e.max(0.0).sqrt()))
}

/// Inverse on the support: eigenvalues at or above `rel_threshold * max`
/// are inverted, the rest map to zero.
pub fn pseudo_inverse(a: &HermitianOperator, rel_threshold: f64) -> Result<HermitianOperator> {
    let spec = a.spectrum();
    let top = spec.eigenvalues[0];
    if top <= 0.0 {
        return Err(Error::ZeroOperator);
    }
    let cut = rel_threshold * top;
    Ok(spec.map(|e| if e >= cut && e > 0.0 { 1.0 / e } else { 0.0 }))
}

pub fn is_psd(a: &HermitianOperator, tol: f64) -> bool {
    a.min_eigenvalue() >= -tol
}
