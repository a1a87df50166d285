//! Dense linear-algebra primitives the filters are built on: operator and
//! Hilbert-Schmidt norms, tensor products, Loewner comparison, and symmetric
//! PSD machinery (square roots, SPD inverses).
//!
//! Everything here is a pure function on immutable inputs. Matrices are
//! dense `f64`; the study targets state dimensions up to ~100, where full
//! eigendecompositions are cheap and exact behaviour beats iterative speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Numerical tolerances for symmetry/PSD checks and factorizations.
///
/// Defaults are float64 round-off with headroom. Checks that consume them
/// have `*_with` variants taking an explicit `Tolerances`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Relative symmetry slack: max |a_ij - a_ji| <= sym_tol * |A|.
    pub sym_tol: f64,
    /// Relative PSD slack: eigenvalues down to -psd_tol * |A| count as zero.
    pub psd_tol: f64,
    /// Residual budget for square roots: |S*S - A| <= sqrt_tol * (1 + |A|).
    pub sqrt_tol: f64,
    /// Residual budget for SPD inversion: |A*inv(A) - I| <= inv_tol * cond(A).
    pub inv_tol: f64,
    /// Smallest eigenvalue admitted as strictly positive definite.
    pub spd_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sym_tol: 1e-10,
            psd_tol: 1e-8,
            sqrt_tol: 1e-8,
            inv_tol: 1e-10,
            spd_floor: 1e-12,
        }
    }
}

pub(crate) fn check_finite_matrix(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn check_finite_vector(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// (A + A^T) / 2.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Spectral norm of a symmetric matrix: max |eigenvalue|.
fn symmetric_spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |m, &l| m.max(l.abs()))
}

fn recompose(vectors: &DMatrix<f64>, values: &DVector<f64>) -> DMatrix<f64> {
    symmetrize(&(vectors * DMatrix::from_diagonal(values) * vectors.transpose()))
}

/// Largest singular value (operator norm). For a symmetric PSD matrix this
/// is the spectral radius.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    check_finite_matrix(a, "spectral_norm input")?;
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.singular_values().iter().fold(0.0f64, |m, &s| m.max(s)))
}

/// Root-sum-of-squares of the entries (Frobenius norm); it dominates the
/// spectral norm.
pub fn hs_norm(a: &DMatrix<f64>) -> Result<f64> {
    check_finite_matrix(a, "hs_norm input")?;
    Ok(a.norm())
}

/// Outer product u v^T of two equal-length vectors; its Hilbert-Schmidt
/// norm equals |u| |v|.
pub fn tensor(u: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_finite_vector(u, "tensor left factor")?;
    check_finite_vector(v, "tensor right factor")?;
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "tensor product needs equal lengths, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u * v.transpose())
}

/// A validated symmetric positive-semidefinite matrix.
///
/// Construction symmetrizes the input, rejects matrices that are asymmetric
/// beyond `sym_tol * |A|` or have an eigenvalue below `-psd_tol * |A|`, and
/// stores the exactly symmetric part. Sample covariances are PSD only up to
/// round-off, so `clamped` additionally moves in-tolerance negative
/// eigenvalues to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPsd {
    mat: DMatrix<f64>,
}

impl SymmetricPsd {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerances(mat, &Tolerances::default())
    }

    pub fn with_tolerances(mat: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        let sym = Self::validated(mat, tol)?;
        Ok(SymmetricPsd { mat: sym })
    }

    /// Like `new`, but clamps round-off-negative eigenvalues to zero.
    pub fn clamped(mat: DMatrix<f64>) -> Result<Self> {
        Self::clamped_with(mat, &Tolerances::default())
    }

    pub fn clamped_with(mat: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        let sym = Self::validated(mat, tol)?;
        if sym.is_empty() {
            return Ok(SymmetricPsd { mat: sym });
        }
        let eig = sym.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
            return Ok(SymmetricPsd { mat: sym });
        }
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        Ok(SymmetricPsd {
            mat: recompose(&eig.eigenvectors, &clamped),
        })
    }

    fn validated(mat: DMatrix<f64>, tol: &Tolerances) -> Result<DMatrix<f64>> {
        check_finite_matrix(&mat, "symmetric PSD matrix")?;
        if !mat.is_square() {
            return Err(Error::Shape(format!(
                "symmetric PSD matrix must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let sym = symmetrize(&mat);
        if sym.is_empty() {
            return Ok(sym);
        }
        let norm = symmetric_spectral_norm(&sym);
        let asym = max_asymmetry(&mat);
        if asym > tol.sym_tol * norm {
            return Err(Error::InvalidInput(format!(
                "matrix is asymmetric: max |a_ij - a_ji| = {asym:.3e} against norm {norm:.3e}"
            )));
        }
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig < -tol.psd_tol * norm {
            return Err(Error::NotPsd(format!(
                "smallest eigenvalue {min_eig:.3e} against norm {norm:.3e}"
            )));
        }
        Ok(sym)
    }

    pub fn zeros(n: usize) -> Self {
        SymmetricPsd {
            mat: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        SymmetricPsd {
            mat: DMatrix::identity(n, n),
        }
    }

    /// Diagonal PSD matrix; every entry must be nonnegative.
    pub fn from_diagonal(d: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(d))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Smallest eigenvalue; used for strict positive-definiteness checks.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.mat.is_empty() {
            0.0
        } else {
            self.mat.symmetric_eigenvalues().min()
        }
    }
}

/// The unique symmetric PSD square root, via eigendecomposition.
///
/// Eigenvalues inside the PSD tolerance band below zero are clamped to zero
/// before rooting.
pub fn sym_sqrt(a: &SymmetricPsd) -> Result<SymmetricPsd> {
    sym_sqrt_with(a, &Tolerances::default())
}

pub fn sym_sqrt_with(a: &SymmetricPsd, tol: &Tolerances) -> Result<SymmetricPsd> {
    if a.matrix().is_empty() {
        return Ok(a.clone());
    }
    let eig = a.matrix().clone().symmetric_eigen();
    let norm = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let min_eig = eig.eigenvalues.min();
    if min_eig < -tol.psd_tol * norm {
        return Err(Error::NotPsd(format!(
            "square root of matrix with smallest eigenvalue {min_eig:.3e} against norm {norm:.3e}"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(SymmetricPsd {
        mat: recompose(&eig.eigenvectors, &roots),
    })
}

/// Loewner comparison A <= B: is the smallest eigenvalue of B - A above
/// `-psd_tol * max(1, |A|, |B|)`? Both inputs must be symmetric but need
/// not be PSD.
pub fn loewner_leq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    loewner_leq_with(a, b, &Tolerances::default())
}

pub fn loewner_leq_with(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: &Tolerances) -> Result<bool> {
    check_finite_matrix(a, "loewner_leq left")?;
    check_finite_matrix(b, "loewner_leq right")?;
    if !a.is_square() || !b.is_square() || a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "loewner_leq needs square matrices of equal size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.is_empty() {
        return Ok(true);
    }
    let norm_a = symmetric_spectral_norm(&symmetrize(a));
    let norm_b = symmetric_spectral_norm(&symmetrize(b));
    if max_asymmetry(a) > tol.sym_tol * norm_a {
        return Err(Error::InvalidInput(
            "loewner_leq left operand is asymmetric".into(),
        ));
    }
    if max_asymmetry(b) > tol.sym_tol * norm_b {
        return Err(Error::InvalidInput(
            "loewner_leq right operand is asymmetric".into(),
        ));
    }
    let min_eig = symmetrize(&(b - a)).symmetric_eigenvalues().min();
    Ok(min_eig >= -tol.psd_tol * 1.0f64.max(norm_a).max(norm_b))
}

/// Inverse of a strictly positive definite matrix, via eigendecomposition;
/// the output is symmetrized.
pub fn spd_inverse(a: &SymmetricPsd) -> Result<SymmetricPsd> {
    spd_inverse_with(a, &Tolerances::default())
}

pub fn spd_inverse_with(a: &SymmetricPsd, tol: &Tolerances) -> Result<SymmetricPsd> {
    if a.matrix().is_empty() {
        return Ok(a.clone());
    }
    let eig = a.matrix().clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < tol.spd_floor {
        return Err(Error::NotSpd(format!(
            "smallest eigenvalue {min_eig:.3e} below floor {:.3e}",
            tol.spd_floor
        )));
    }
    let inverted = eig.eigenvalues.map(|l| 1.0 / l);
    Ok(SymmetricPsd {
        mat: recompose(&eig.eigenvectors, &inverted),
    })
}
