//! Covariance estimation from the unlabeled warm-up set and eigendecomposition whitening.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Relative eigenvalue floor: eigenvalues below `EIGEN_FLOOR · λ_max` are clamped.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Linear map `z = Λ^(−1/2)·Uᵀ·(x − μ)` fitted from a covariance `Σ = UΛUᵀ`.
///
/// `μ` is zero unless the whitener was built with centering enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener<T> {
    eigenvectors: Matrix<T>,
    eigenvalues: Vec<T>,
    transform: Matrix<T>,
    mean: Option<Vec<T>>,
    source_size: usize,
    clamped: usize,
}

impl<T: Scalar> Whitener<T> {
    /// Estimates `Σ` from the calibration rows and fits the whitening map.
    ///
    /// Needs at least `p + 1` rows. With `center` the calibration mean is subtracted
    /// before projecting.
    pub fn from_calibration(calibration: &Matrix<T>, center: bool) -> Result<Self> {
        let (m, p) = (calibration.nrows(), calibration.ncols());
        if m <= p {
            return Err(Error::RankDeficient { rows: m, cols: p });
        }
        let sigma = estimate_covariance(calibration)?;
        let mut w = fit_whitener(&sigma)?;
        w.source_size = m;
        if center {
            w.mean = Some(column_means(calibration));
        }
        Ok(w)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Columns are eigenvectors, ordered by descending eigenvalue.
    pub fn eigenvectors(&self) -> &Matrix<T> {
        &self.eigenvectors
    }

    /// Eigenvalues after clamping at the floor, descending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    /// Number of eigenvalues that fell below the floor and were clamped.
    /// Nonzero means the covariance was numerically degenerate.
    pub fn clamped_eigenvalues(&self) -> usize {
        self.clamped
    }

    pub fn is_degenerate(&self) -> bool {
        self.clamped > 0
    }

    pub fn mean(&self) -> Option<&[T]> {
        self.mean.as_deref()
    }

    pub fn whiten(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        match &self.mean {
            None => self.transform.matvec(x),
            Some(mu) => {
                let centered: Vec<T> = x.iter().zip(mu).map(|(&a, &b)| a - b).collect();
                self.transform.matvec(&centered)
            }
        }
    }

    /// Whitens every row.
    pub fn whiten_rows(&self, rows: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::with_capacity(rows.nrows(), self.dim());
        for r in rows.row_iter() {
            out.push_row(&self.whiten(r)?)?;
        }
        Ok(out)
    }
}

/// Unbiased sample covariance `(1/(m−1))·Σ (xᵢ − x̄)(xᵢ − x̄)ᵀ`.
pub fn estimate_covariance<T: Scalar>(calibration: &Matrix<T>) -> Result<Matrix<T>> {
    let (m, p) = (calibration.nrows(), calibration.ncols());
    if m < 2 {
        return Err(Error::RankDeficient { rows: m, cols: p });
    }
    let mu = column_means(calibration);
    let mut centered = Matrix::with_capacity(m, p);
    for r in calibration.row_iter() {
        let c: Vec<T> = r.iter().zip(&mu).map(|(&a, &b)| a - b).collect();
        centered.push_row(&c)?;
    }
    Ok(centered.gram().scale(T::one() / T::count(m - 1)))
}

/// Eigendecomposition of a symmetric covariance with eigenvalue clamping.
pub fn fit_whitener<T: Scalar>(sigma: &Matrix<T>) -> Result<Whitener<T>> {
    let eig = sigma.symmetric_eigen()?;
    let top = eig.values.first().copied().unwrap_or_else(T::zero);
    if !(top > T::zero()) {
        return Err(Error::DegenerateDistribution(
            "covariance has no positive eigenvalue",
        ));
    }
    let floor = top * T::lit(EIGEN_FLOOR);
    let mut clamped = 0;
    let eigenvalues: Vec<T> = eig
        .values
        .iter()
        .map(|&v| {
            if v < floor {
                clamped += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    let p = eigenvalues.len();
    let u = eig.vectors;
    // row k of the transform is u_kᵀ / sqrt(λ_k)
    let transform = Matrix::from_fn(p, p, |k, j| u[(j, k)] / eigenvalues[k].sqrt());
    Ok(Whitener {
        eigenvectors: u,
        eigenvalues,
        transform,
        mean: None,
        source_size: 0,
        clamped,
    })
}

pub fn whiten<T: Scalar>(w: &Whitener<T>, x: &[T]) -> Result<Vec<T>> {
    w.whiten(x)
}

fn column_means<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let n = T::count(m.nrows().max(1));
    let ones = vec![T::one(); m.nrows()];
    m.tr_matvec(&ones)
        .expect("length matches row count")
        .into_iter()
        .map(|s| s / n)
        .collect()
}

/// `‖Σ̂ − I‖_F / √p` for a set of rows; the whitening quality measure used in tests.
pub fn identity_deviation<T: Scalar>(rows: &Matrix<T>) -> Result<T> {
    let cov = estimate_covariance(rows)?;
    let p = cov.nrows();
    Ok(cov.sub(&Matrix::identity(p))?.frobenius_norm() / T::count(p).sqrt())
}
