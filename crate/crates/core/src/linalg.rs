//! Dense linear-algebra substrate shared by every learner: SVD with a
//! numerical-rank cutoff, Moore-Penrose pseudo-inverse with both closed-form
//! branches, orthogonal projections onto the complement of the training row
//! space, and the recursive least-squares update.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// N x M matrix of training features, one sample per row.
///
/// Construction validates the invariants the numeric code relies on:
/// at least one row and one column, every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "design matrix must be at least 1x1, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "design matrix contains a non-finite entry".into(),
            ));
        }
        Ok(DesignMatrix(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("no rows".into()));
        }
        let m = rows[0].len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Self::new(DMatrix::from_row_slice(
            rows.len(),
            m,
            &rows.iter().flatten().copied().collect::<Vec<_>>(),
        ))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// X with one extra row appended.
    pub fn stack_row(&self, row: &DVector<f64>) -> Result<Self> {
        if row.len() != self.ncols() {
            return Err(Error::dims(self.ncols(), row.len()));
        }
        let mut out = DMatrix::zeros(self.nrows() + 1, self.ncols());
        out.view_mut((0, 0), (self.nrows(), self.ncols()))
            .copy_from(&self.0);
        out.row_mut(self.nrows()).copy_from(&row.transpose());
        Self::new(out)
    }
}

/// Default cutoff below which a singular value counts as zero:
/// `max(N, M) * eps * h_1`, the standard SVD rank tolerance.
pub fn default_rank_tolerance(nrows: usize, ncols: usize, largest_singular_value: f64) -> f64 {
    nrows.max(ncols) as f64 * f64::EPSILON * largest_singular_value
}

/// Thin SVD of a design matrix, `X = S diag(h) F^T`, with the singular values
/// sorted descending and a numerical rank.
///
/// `feature_vectors` (M x k) spans the row space of X; its columns are the
/// eigenvectors of `X^T X` and the subspace analysis of every regret
/// decomposition runs over them. `sample_vectors` is the N x k left factor.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub sample_vectors: DMatrix<f64>,
    pub feature_vectors: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub rank: usize,
    pub rank_tolerance: f64,
}

impl SpectralDecomposition {
    /// `S diag(h) F^T`, for reconstruction checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = self.sample_vectors.clone()
            * DMatrix::from_diagonal(&self.singular_values);
        scaled * self.feature_vectors.transpose()
    }

    /// Projection of `x` onto the complement of the training row space,
    /// `x_perp = (I - X^+ X) x = x - F_r (F_r^T x)` over the rank-r columns.
    pub fn orthogonal_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.feature_vectors.nrows();
        if x.len() != m {
            return Err(Error::dims(m, x.len()));
        }
        let f_r = self.feature_vectors.columns(0, self.rank);
        let coords = f_r.transpose() * x;
        Ok(x - f_r * coords)
    }
}

/// Thin SVD with singular values sorted descending.
pub fn svd(x: &DesignMatrix) -> Result<SpectralDecomposition> {
    svd_with_tolerance(x, None)
}

pub fn svd_with_tolerance(
    x: &DesignMatrix,
    rank_tolerance: Option<f64>,
) -> Result<SpectralDecomposition> {
    let decomp = x
        .matrix()
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = decomp.u.expect("requested");
    let v_t = decomp.v_t.expect("requested");
    let values = decomp.singular_values;

    // nalgebra sorts descending, but the rank test depends on it, so enforce.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());

    let k = values.len();
    let mut sample_vectors = DMatrix::zeros(u.nrows(), k);
    let mut feature_vectors = DMatrix::zeros(v_t.ncols(), k);
    let mut sorted_values = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        sample_vectors.set_column(dst, &u.column(src));
        feature_vectors.set_column(dst, &v_t.row(src).transpose());
        sorted_values[dst] = values[src];
    }

    let h1 = if k > 0 { sorted_values[0] } else { 0.0 };
    let tol = rank_tolerance
        .unwrap_or_else(|| default_rank_tolerance(x.nrows(), x.ncols(), h1));
    let rank = sorted_values.iter().filter(|&&h| h > tol).count();

    Ok(SpectralDecomposition {
        sample_vectors,
        feature_vectors,
        singular_values: sorted_values,
        rank,
        rank_tolerance: tol,
    })
}

/// Which closed form produced a pseudo-inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinvBranch {
    /// `(X^T X)^{-1} X^T`, valid when `Rank(X^T X) = M`.
    FullColumnRank,
    /// `X^T (X X^T)^{-1}`, valid when the rows are independent.
    FullRowRank,
    /// Rank-deficient fallback through the thresholded SVD.
    GeneralSvd,
}

/// Moore-Penrose inverse `X^+` (M x N) together with the branch that built it.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub branch: PinvBranch,
}

impl PseudoInverse {
    /// `x^T X^+ X^{+T} x`, the quadratic form behind `K_0`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.matrix.nrows() {
            return Err(Error::dims(self.matrix.nrows(), x.len()));
        }
        let z = self.matrix.transpose() * x;
        Ok(z.norm_squared())
    }
}

/// Moore-Penrose pseudo-inverse, preferring the two Gram closed forms and
/// falling back to the SVD route when either Gram matrix is numerically
/// singular.
pub fn pinv(x: &DesignMatrix, rank_tolerance: Option<f64>) -> Result<PseudoInverse> {
    let spec = svd_with_tolerance(x, rank_tolerance)?;
    pinv_from_spectrum(x, &spec)
}

pub fn pinv_from_spectrum(
    x: &DesignMatrix,
    spec: &SpectralDecomposition,
) -> Result<PseudoInverse> {
    let (n, m) = (x.nrows(), x.ncols());
    if spec.rank == m && m <= n {
        let gram = x.matrix().transpose() * x.matrix();
        if let Some(chol) = Cholesky::new(gram) {
            let matrix = chol.solve(&x.matrix().transpose());
            return Ok(PseudoInverse {
                matrix,
                branch: PinvBranch::FullColumnRank,
            });
        }
    } else if spec.rank == n && n <= m {
        let gram = x.matrix() * x.matrix().transpose();
        if let Some(chol) = Cholesky::new(gram) {
            let matrix = chol.solve(x.matrix()).transpose();
            return Ok(PseudoInverse {
                matrix,
                branch: PinvBranch::FullRowRank,
            });
        }
    }

    // General branch: F diag(1/h_i) S^T over singular values above tolerance.
    let r = spec.rank;
    let mut matrix = DMatrix::zeros(m, n);
    for i in 0..r {
        let scale = 1.0 / spec.singular_values[i];
        let fi = spec.feature_vectors.column(i);
        let si = spec.sample_vectors.column(i);
        // matrix += scale * fi * si^T
        for col in 0..n {
            let s = scale * si[col];
            for row in 0..m {
                matrix[(row, col)] += fi[row] * s;
            }
        }
    }
    Ok(PseudoInverse {
        matrix,
        branch: PinvBranch::GeneralSvd,
    })
}

/// `x_perp = (I - X^+ X) x`, the part of a test feature the training rows
/// cannot express.
pub fn orthogonal_residual(x: &DesignMatrix, v: &DVector<f64>) -> Result<DVector<f64>> {
    svd(x)?.orthogonal_residual(v)
}

/// Normalized RLS gain `P = A x / (1 + x^T A x)` packaged as the matrix
/// `A / (1 + x^T A x)`, with `A` an inverse (regularized) Gram matrix.
pub fn rls_gain(gram_inverse: &DMatrix<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    if gram_inverse.nrows() != x.len() || gram_inverse.ncols() != x.len() {
        return Err(Error::dims(x.len(), gram_inverse.nrows()));
    }
    let s = (x.transpose() * gram_inverse * x)[(0, 0)];
    Ok(gram_inverse / (1.0 + s))
}

/// One recursive least-squares step: `theta + P x residual`, where `P`
/// already carries the `1/(1 + x^T A x)` normalization (see [`rls_gain`]).
pub fn rls_update(
    theta: &DVector<f64>,
    gain: &DMatrix<f64>,
    x: &DVector<f64>,
    residual: f64,
) -> Result<DVector<f64>> {
    if theta.len() != x.len() {
        return Err(Error::dims(theta.len(), x.len()));
    }
    if gain.nrows() != x.len() || gain.ncols() != x.len() {
        return Err(Error::dims(x.len(), gain.nrows()));
    }
    Ok(theta + gain * x * residual)
}

/// Eigen-decomposition of a symmetric PSD Gram matrix, eigenvalues sorted
/// descending and clamped at zero. The workhorse behind the ridge-path
/// evaluations that sweep the regularizer.
pub fn gram_eigen(gram: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let eig = gram
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let k = order.len();
    let mut vectors = DMatrix::zeros(gram.nrows(), k);
    let mut values = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        values[dst] = eig.eigenvalues[src].max(0.0);
    }
    Ok((vectors, values))
}

/// `x^T (X^T X + lambda I)^{-1} x` through the Cholesky factor, evaluated as
/// a squared triangular solve so the quadratic form cannot go negative.
pub fn regularized_quadratic_form(
    gram_plus_reg: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let chol = Cholesky::new(gram_plus_reg.clone()).ok_or_else(|| {
        Error::Singular("regularized Gram matrix is not positive definite".into())
    })?;
    let z = chol
        .l()
        .solve_lower_triangular(x)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(z.norm_squared())
}
