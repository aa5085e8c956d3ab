//! Exact pNML for under-parameterized ordinary and ridge linear regression.
//!
//! The genie refit for an assumed test label has a closed form through the
//! recursive least squares update, and normalizing it yields a Gaussian
//! predictive whose mean equals the (ridge) ERM prediction, whose variance is
//! inflated by `(1 + s)^2` with `s = x^T (X^T X + lambda I)^{-1} x`, and whose
//! log normalization factor -- the min-max regret -- is `log(1 + s)`.
//!
//! The printed prefactor of the predictive in the source derivation reads
//! `1 + x^T P x`, but only the normalization-consistent `1/(1 + s)` scaling
//! integrates to one, so that is what this module implements.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, SpectralDecomposition};

/// Gaussian predictive distribution with its min-max regret.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPredictive {
    pub mean: f64,
    pub variance: f64,
    pub regret: f64,
}

impl GaussianPredictive {
    pub fn log_density(&self, y: f64) -> f64 {
        let z = (y - self.mean) * (y - self.mean) / self.variance;
        -0.5 * (z + self.variance.ln() + (2.0 * std::f64::consts::PI).ln())
    }
}

/// Ridge (or ordinary, at `lambda = 0`) least-squares fit with the cached
/// regularized Gram factorization every prediction reuses.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    weights: DVector<f64>,
    lambda: f64,
    noise_variance: f64,
    gram_reg: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    spectrum: SpectralDecomposition,
}

impl RegressionFit {
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `(X^T X + lambda I)^{-1} v`.
    pub fn solve_regularized(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn gram_regularized(&self) -> &DMatrix<f64> {
        &self.gram_reg
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    /// Ridge ERM point prediction `x^T theta`.
    pub fn predict_mean(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.weights.dot(x))
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dims(self.dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite test feature".into()));
        }
        Ok(())
    }
}

/// Fit ridge regression `theta = (X^T X + lambda I)^{-1} X^T Y`.
///
/// At `lambda = 0` a rank-deficient design is a hard error pointing the
/// caller to the minimum-norm path or to positive regularization.
pub fn fit(dataset: &LabeledDataset, lambda: f64, noise_variance: f64) -> Result<RegressionFit> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if noise_variance <= 0.0 || !noise_variance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise variance must be > 0, got {noise_variance}"
        )));
    }
    let x = dataset.features.matrix();
    let m = x.ncols();
    let gram_reg = x.transpose() * x + DMatrix::identity(m, m) * lambda;
    let chol = Cholesky::new(gram_reg.clone()).ok_or_else(|| {
        Error::Singular(
            "X^T X + lambda I is numerically singular; use the over-parameterized \
             minimum-norm path or a positive lambda"
                .into(),
        )
    })?;
    let weights = chol.solve(&(x.transpose() * &dataset.targets));
    let spectrum = linalg::svd(&dataset.features)?;
    Ok(RegressionFit {
        weights,
        lambda,
        noise_variance,
        gram_reg,
        chol,
        spectrum,
    })
}

/// The pNML predictive for a test feature: mean `x^T theta`, variance
/// `sigma^2 (1 + s)^2`, regret `log(1 + s)`.
pub fn pnml_predict(fit: &RegressionFit, x: &DVector<f64>) -> Result<GaussianPredictive> {
    fit.check_input(x)?;
    let s = quadratic_form(fit, x);
    let mean = fit.weights.dot(x);
    Ok(GaussianPredictive {
        mean,
        variance: fit.noise_variance * (1.0 + s) * (1.0 + s),
        regret: s.ln_1p(),
    })
}

/// `s = x^T (X^T X + lambda I)^{-1} x` as a squared triangular solve, so the
/// quadratic form stays nonnegative.
fn quadratic_form(fit: &RegressionFit, x: &DVector<f64>) -> f64 {
    let z = fit
        .chol
        .l()
        .solve_lower_triangular(x)
        .expect("Cholesky factor is nonsingular by construction");
    z.norm_squared()
}

/// One regret contribution per spectral direction of the training design.
#[derive(Debug, Clone)]
pub struct RegretSpectrum {
    /// `(x^T u_m)^2 / (h_m^2 + lambda)` for each retained singular direction.
    pub terms: Vec<f64>,
    /// `|x_perp|^2 / lambda` mass outside the row space; zero when the
    /// design has full column rank or `lambda = 0` is valid.
    pub null_term: f64,
    /// Sum of all terms; equals `x^T (X^T X + lambda I)^{-1} x`.
    pub total: f64,
    /// `log(1 + total)`, which matches [`pnml_predict`]'s regret.
    pub regret: f64,
}

/// Decompose the regret quadratic form over the singular directions of the
/// training matrix.
///
/// The spectral reading of the regret in the source material carries an
/// ambiguous `1/N` normalization tied to its correlation-matrix convention;
/// this decomposition uses the raw singular values of the design matrix so
/// the terms sum exactly to the quadratic form of the closed-form regret.
pub fn regret_spectrum(fit: &RegressionFit, x: &DVector<f64>) -> Result<RegretSpectrum> {
    fit.check_input(x)?;
    let spec = fit.spectrum();
    let r = spec.rank;
    let mut terms = Vec::with_capacity(r);
    for m in 0..r {
        let proj = spec.feature_vectors.column(m).dot(x);
        let h2 = spec.singular_values[m] * spec.singular_values[m];
        terms.push(proj * proj / (h2 + fit.lambda));
    }
    let x_perp = spec.orthogonal_residual(x)?;
    let null_mass = x_perp.norm_squared();
    let null_term = if null_mass > 0.0 && fit.lambda > 0.0 {
        null_mass / fit.lambda
    } else {
        0.0
    };
    let total = terms.iter().sum::<f64>() + null_term;
    Ok(RegretSpectrum {
        terms,
        null_term,
        total,
        regret: total.ln_1p(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DesignMatrix;
    use crate::quadrature;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dataset(rows: &[Vec<f64>], y: &[f64]) -> LabeledDataset {
        LabeledDataset::new(
            DesignMatrix::from_rows(rows).unwrap(),
            DVector::from_vec(y.to_vec()),
        )
        .unwrap()
    }

    fn random_dataset(rng: &mut StdRng, n: usize, m: usize) -> LabeledDataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        dataset(&rows, &y)
    }

    /// Independent oracle: integrate the genie density over labels and
    /// compare `log K` to the closed-form regret.
    fn integrated_regret(fit: &RegressionFit, x: &DVector<f64>) -> f64 {
        let pred = pnml_predict(fit, x).unwrap();
        let sigma2 = fit.noise_variance();
        let genie_scale = pred.variance.sqrt(); // sigma * (1 + s)
        let density = |y: f64| {
            // Genie probability of the assumed label: peak height 1/sqrt(2 pi sigma^2).
            let z = (y - pred.mean) / genie_scale;
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
        };
        let width = 12.0 * genie_scale;
        let k = quadrature::gauss_kronrod(&density, pred.mean - width, pred.mean + width, 1e-10)
            .unwrap();
        k.ln()
    }

    #[test]
    fn fit_exact_line() {
        let ds = dataset(&[vec![1.0], vec![2.0]], &[2.0, 4.0]);
        let f = fit(&ds, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(f.weights()[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_shrinks_toward_zero() {
        let ds = dataset(&[vec![1.0], vec![2.0]], &[2.0, 4.0]);
        let t0 = fit(&ds, 0.0, 1.0).unwrap().weights()[0].abs();
        let t2 = fit(&ds, 1e2, 1.0).unwrap().weights()[0].abs();
        let t4 = fit(&ds, 1e4, 1.0).unwrap().weights()[0].abs();
        assert!(t0 > t2 && t2 > t4);
        assert!(t4 < 1e-2);
    }

    #[test]
    fn fit_stationarity_of_ridge_objective() {
        let mut rng = StdRng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 20, 5);
        let lambda = 0.7;
        let f = fit(&ds, lambda, 1.0).unwrap();
        let x = ds.features.matrix();
        // gradient = 2 (X^T X theta - X^T y + lambda theta)
        let grad = (x.transpose() * x * f.weights() - x.transpose() * &ds.targets
            + f.weights() * lambda)
            * 2.0;
        assert!(grad.amax() < 1e-8, "gradient {:?}", grad.amax());
    }

    #[test]
    fn fit_rejects_singular_ols() {
        // Two rows spanning a 1-dim subspace of R^2: X^T X singular at lambda 0.
        let ds = dataset(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 2.0]);
        let err = fit(&ds, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        assert!(fit(&ds, 1e-6, 1.0).is_ok());
    }

    #[test]
    fn predict_zero_input() {
        let ds = dataset(&[vec![1.0], vec![2.0]], &[2.0, 4.0]);
        let f = fit(&ds, 0.0, 0.25).unwrap();
        let p = pnml_predict(&f, &DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(p.mean, 0.0);
        assert_abs_diff_eq!(p.variance, 0.25, epsilon = 1e-12);
        assert_eq!(p.regret, 0.0);
    }

    #[test]
    fn predict_known_regret_value() {
        // X = [[1],[2]], x = [1]: s = 1/5, regret = log(6/5).
        let ds = dataset(&[vec![1.0], vec![2.0]], &[1.0, 2.0]);
        let f = fit(&ds, 0.0, 1.0).unwrap();
        let p = pnml_predict(&f, &DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(p.regret, (6.0f64 / 5.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.regret, 0.18232, epsilon = 1e-5);
        // The numeric oracle agrees.
        assert_abs_diff_eq!(integrated_regret(&f, &DVector::from_vec(vec![1.0])), p.regret, epsilon = 1e-6);
    }

    #[test]
    fn regularization_lowers_regret() {
        let ds = dataset(&[vec![1.0], vec![2.0]], &[1.0, 2.0]);
        let x = DVector::from_vec(vec![1.0]);
        let g0 = pnml_predict(&fit(&ds, 0.0, 1.0).unwrap(), &x).unwrap().regret;
        let g1 = pnml_predict(&fit(&ds, 1.0, 1.0).unwrap(), &x).unwrap().regret;
        assert!(g1 < g0);
    }

    #[test]
    fn closed_form_matches_quadrature_oracle() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..25 {
            let n = rng.gen_range(6..=30);
            let m = rng.gen_range(1..=5);
            let lambda = [0.0, 0.1, 1.0][rng.gen_range(0..3)];
            let ds = random_dataset(&mut rng, n, m);
            let f = match fit(&ds, lambda, rng.gen_range(0.2..2.0)) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let x = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let closed = pnml_predict(&f, &x).unwrap().regret;
            assert_abs_diff_eq!(integrated_regret(&f, &x), closed, epsilon = 1e-6);
        }
    }

    #[test]
    fn predictive_density_integrates_to_one() {
        let mut rng = StdRng::seed_from_u64(21);
        let ds = random_dataset(&mut rng, 12, 3);
        let f = fit(&ds, 0.5, 0.7).unwrap();
        let x = DVector::from_vec(vec![0.4, -1.2, 2.0]);
        let p = pnml_predict(&f, &x).unwrap();
        let mass = quadrature::gauss_kronrod(
            &|y: f64| p.log_density(y).exp(),
            p.mean - 14.0 * p.variance.sqrt(),
            p.mean + 14.0 * p.variance.sqrt(),
            1e-10,
        )
        .unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn mean_equals_erm_prediction() {
        let mut rng = StdRng::seed_from_u64(5);
        let ds = random_dataset(&mut rng, 15, 4);
        let f = fit(&ds, 0.3, 1.0).unwrap();
        let x = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let p = pnml_predict(&f, &x).unwrap();
        assert_eq!(p.mean, f.predict_mean(&x).unwrap());
    }

    #[test]
    fn appending_training_rows_never_increases_regret() {
        let mut rng = StdRng::seed_from_u64(44);
        for _ in 0..200 {
            let n = rng.gen_range(3..=10);
            let m = rng.gen_range(1..=3);
            let ds = random_dataset(&mut rng, n, m);
            let f = match fit(&ds, 0.0, 1.0) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let x = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let before = pnml_predict(&f, &x).unwrap().regret;
            let extra = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let grown = ds.with_sample(&extra, rng.gen_range(-2.0..2.0)).unwrap();
            let after = pnml_predict(&fit(&grown, 0.0, 1.0).unwrap(), &x).unwrap().regret;
            assert!(after <= before + 1e-12, "regret grew: {before} -> {after}");
        }
    }

    #[test]
    fn spectrum_aligned_with_top_direction_is_small() {
        // Large singular value along e1, small along e2.
        let ds = dataset(
            &[vec![10.0, 0.0], vec![0.0, 0.1]],
            &[1.0, 1.0],
        );
        let f = fit(&ds, 0.0, 1.0).unwrap();
        let top = regret_spectrum(&f, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(top.terms[0] < 1e-1);
        let bottom = regret_spectrum(&f, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        // Anti-aligned case: dominant term is |x|^2 / h_min^2 = 1 / 0.01.
        assert_abs_diff_eq!(bottom.terms[1], 100.0, epsilon = 1e-9);
        assert!(bottom.total > top.total);
    }

    #[test]
    fn spectrum_total_reproduces_quadratic_form() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.gen_range(4..=12);
            let m = rng.gen_range(1..=4);
            let lambda = [0.0, 0.5][rng.gen_range(0..2)];
            let ds = random_dataset(&mut rng, n, m);
            let f = match fit(&ds, lambda, 1.0) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let x = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let spec = regret_spectrum(&f, &x).unwrap();
            let closed = pnml_predict(&f, &x).unwrap().regret;
            assert_abs_diff_eq!(spec.regret, closed, epsilon = 1e-9);
            // And 1 + total matches 1 + x^T (X^T X + lambda I)^{-1} x.
            let gram = ds.features.matrix().transpose() * ds.features.matrix()
                + DMatrix::identity(m, m) * lambda;
            let direct = (x.transpose() * gram.try_inverse().unwrap() * &x)[(0, 0)];
            assert_abs_diff_eq!(spec.total, direct, epsilon = 1e-9 * (1.0 + direct));
        }
    }
}
