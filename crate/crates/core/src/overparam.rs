//! Norm-constrained pNML for over-parameterized linear regression.
//!
//! With more parameters than samples every test label can be fit perfectly
//! and the plain pNML normalizer diverges. Restricting the hypothesis set to
//! weights whose norm does not exceed the minimum-norm (MN) interpolator's
//! norm makes the regret meaningful again: the genie for an assumed label
//! `y'` is the ridge solution on the augmented set whose regularizer
//! `lambda(y')` is chosen so the constraint binds, the empirical regret is
//! the log integral of that genie's density over labels, and a closed-form
//! upper bound comes from the norm recursion
//! `|theta*_{N+1}|^2 = |theta*_N|^2 + (y - x^T theta*_N)^2 / |x_perp|^2`.

use nalgebra::{DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, PseudoInverse};
use crate::quadrature;

// Bracket and iteration policy for the constraint-satisfying regularizer.
const LAMBDA_LO: f64 = 1e-12;
const LAMBDA_HI: f64 = 1e12;
const LAMBDA_EXPAND_CAP: f64 = 1e18;
const LAMBDA_MAX_ITER: usize = 200;
const LAMBDA_REL_TOL: f64 = 1e-10;

/// Minimum-norm least-squares fit `theta* = X^+ Y` with the cached factors
/// used by the regret computations.
#[derive(Debug, Clone)]
pub struct MinNormFit {
    dataset: LabeledDataset,
    weights: DVector<f64>,
    norm_sq: f64,
    pinv: PseudoInverse,
    /// `theta*^T X^+ X^{+T} theta*`, the model-norm term of the bound.
    theta_quad: f64,
    noise_variance: f64,
}

impl MinNormFit {
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn norm_squared(&self) -> f64 {
        self.norm_sq
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn pseudo_inverse(&self) -> &PseudoInverse {
        &self.pinv
    }

    /// MN point prediction `x^T theta*`.
    pub fn predict_mean(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.weights.dot(x))
    }

    /// `x_perp = (I - X^+ X) x`.
    pub fn orthogonal_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        Ok(x - &self.pinv.matrix * (self.dataset.features.matrix() * x))
    }

    /// `K_0 = 1 + x^T X^+ X^{+T} x`, the in-span normalization factor.
    pub fn k0(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(1.0 + self.pinv.quadratic_form(x)?)
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

    fn in_span_tolerance(&self, x: &DVector<f64>) -> f64 {
        1e-10 * x.norm().max(1.0)
    }
}

/// Fit the minimum-norm interpolator through the pseudo-inverse. Any shape
/// is accepted; for full-column-rank designs this coincides with OLS.
pub fn mn_fit(dataset: &LabeledDataset, noise_variance: f64) -> Result<MinNormFit> {
    if noise_variance <= 0.0 || !noise_variance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise variance must be > 0, got {noise_variance}"
        )));
    }
    let pinv = linalg::pinv(&dataset.features, None)?;
    let weights = &pinv.matrix * &dataset.targets;
    let norm_sq = weights.norm_squared();
    let theta_quad = pinv.quadratic_form(&weights)?;
    Ok(MinNormFit {
        dataset: dataset.clone(),
        weights,
        norm_sq,
        pinv,
        theta_quad,
        noise_variance,
    })
}

/// Squared norm of the MN solution refit on `D_N + (x, y)` through the
/// recursion, without touching the stacked matrix.
pub fn mn_norm_recursion(fit: &MinNormFit, x: &DVector<f64>, y: f64) -> Result<f64> {
    let x_perp = fit.orthogonal_residual(x)?;
    let perp_norm_sq = x_perp.norm_squared();
    if perp_norm_sq.sqrt() <= fit.in_span_tolerance(x) {
        return Err(Error::InSpan {
            x_perp_norm: perp_norm_sq.sqrt(),
        });
    }
    let residual = y - fit.weights.dot(x);
    Ok(fit.norm_sq + residual * residual / perp_norm_sq)
}

/// The genie for one assumed test label: the augmented-ridge solution whose
/// regularizer makes the norm constraint bind.
#[derive(Debug, Clone)]
pub struct NormConstrainedGenie {
    pub assumed_label: f64,
    pub lambda: f64,
    pub weights: DVector<f64>,
    /// Genie density value at the assumed label, `N(y; x^T theta_hat, sigma^2)`.
    pub density: f64,
}

/// Eigen machinery for the augmented design `[X; x^T]`, shared across the
/// many `(lambda, y)` evaluations of a single test point.
struct AugmentedPoint<'a> {
    fit: &'a MinNormFit,
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    xty_coords: DVector<f64>,
    x_coords: DVector<f64>,
    mn_prediction: f64,
}

impl<'a> AugmentedPoint<'a> {
    fn new(fit: &'a MinNormFit, x: &DVector<f64>) -> Result<Self> {
        fit.check_input(x)?;
        let gram_aug = fit.dataset.features.matrix().transpose() * fit.dataset.features.matrix()
            + x * x.transpose();
        let (vectors, values) = linalg::gram_eigen(&gram_aug)?;
        let xty = fit.dataset.features.matrix().transpose() * &fit.dataset.targets;
        Ok(AugmentedPoint {
            fit,
            xty_coords: vectors.transpose() * xty,
            x_coords: vectors.transpose() * x,
            vectors,
            values,
            mn_prediction: fit.weights.dot(x),
        })
    }

    /// `|theta_ridge(lambda)|^2` on the augmented set with label `y`.
    fn norm_sq(&self, lambda: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.values.len() {
            let num = self.xty_coords[i] + y * self.x_coords[i];
            let c = num / (self.values[i] + lambda);
            acc += c * c;
        }
        acc
    }

    /// `x^T theta_ridge(lambda)` on the augmented set with label `y`.
    fn predict(&self, lambda: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.values.len() {
            let num = self.xty_coords[i] + y * self.x_coords[i];
            acc += self.x_coords[i] * num / (self.values[i] + lambda);
        }
        acc
    }

    fn weights(&self, lambda: f64, y: f64) -> DVector<f64> {
        let coords = DVector::from_fn(self.values.len(), |i, _| {
            (self.xty_coords[i] + y * self.x_coords[i]) / (self.values[i] + lambda)
        });
        &self.vectors * coords
    }

    /// Bisection on `log lambda` for `|theta(lambda)|^2 = |theta*|^2`.
    fn solve_lambda(&self, y: f64) -> Result<f64> {
        let target = self.fit.norm_sq;
        if y == self.mn_prediction {
            return Ok(0.0);
        }
        if self.norm_sq(LAMBDA_LO, y) <= target * (1.0 + LAMBDA_REL_TOL) {
            // The unconstrained refit already meets the norm: y is
            // numerically at the MN prediction and the constraint is slack.
            return Ok(0.0);
        }
        let mut lo = LAMBDA_LO;
        let mut hi = LAMBDA_HI;
        while self.norm_sq(hi, y) > target {
            hi *= 10.0;
            if hi > LAMBDA_EXPAND_CAP {
                return Err(Error::Numerical(format!(
                    "norm constraint root not bracketed: |theta|^2 at lambda {LAMBDA_EXPAND_CAP:.1e} \
                     is {:.6e}, still above the target {:.6e} (assumed label {y})",
                    self.norm_sq(LAMBDA_EXPAND_CAP, y),
                    target
                )));
            }
        }
        for _ in 0..LAMBDA_MAX_ITER {
            let mid = (0.5 * (lo.ln() + hi.ln())).exp();
            let norm = self.norm_sq(mid, y);
            if (norm - target).abs() <= LAMBDA_REL_TOL * target.max(f64::MIN_POSITIVE) {
                return Ok(mid);
            }
            if norm > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < LAMBDA_REL_TOL {
                return Ok((0.5 * (lo.ln() + hi.ln())).exp());
            }
        }
        Err(Error::Numerical(format!(
            "norm constraint bisection did not converge after {LAMBDA_MAX_ITER} iterations \
             (assumed label {y}, bracket [{lo:.3e}, {hi:.3e}])"
        )))
    }

    fn genie_density(&self, y: f64) -> Result<f64> {
        let lambda = self.solve_lambda(y)?;
        let pred = if lambda == 0.0 {
            // Feasible without regularization: the augmented MN fits y exactly.
            y
        } else {
            self.predict(lambda, y)
        };
        Ok(quadrature::gaussian_density(
            y,
            pred,
            self.fit.noise_variance.sqrt(),
        ))
    }
}

/// Regularizer `lambda(y)` at which the augmented-ridge norm equals the MN
/// norm; zero when `y` equals the MN prediction.
pub fn solve_constraint_lambda(fit: &MinNormFit, x: &DVector<f64>, y: f64) -> Result<f64> {
    AugmentedPoint::new(fit, x)?.solve_lambda(y)
}

/// Full norm-constrained genie for an assumed label.
pub fn constrained_genie(
    fit: &MinNormFit,
    x: &DVector<f64>,
    y: f64,
) -> Result<NormConstrainedGenie> {
    let point = AugmentedPoint::new(fit, x)?;
    let lambda = point.solve_lambda(y)?;
    let weights = if lambda == 0.0 {
        // Constraint slack at the MN prediction: the refit is the MN update.
        let x_perp = fit.orthogonal_residual(x)?;
        let perp = x_perp.norm_squared();
        if perp > 0.0 {
            let residual = y - fit.weights.dot(x);
            &fit.weights + x_perp * (residual / perp)
        } else {
            fit.weights.clone()
        }
    } else {
        point.weights(lambda, y)
    };
    let density = quadrature::gaussian_density(y, weights.dot(x), fit.noise_variance.sqrt());
    Ok(NormConstrainedGenie {
        assumed_label: y,
        lambda,
        weights,
        density,
    })
}

/// Closed-form lower bound on the constraint regularizer.
pub fn lambda_lower_bound(fit: &MinNormFit, x: &DVector<f64>, y: f64) -> Result<f64> {
    let x_perp = fit.orthogonal_residual(x)?;
    let perp = x_perp.norm_squared();
    if perp == 0.0 {
        return Ok(0.0);
    }
    let residual = y - fit.weights.dot(x);
    let ratio = residual * residual / perp;
    let denom = fit.theta_quad + ratio * fit.pinv.quadratic_form(x)?;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(0.5 * ratio / denom)
}

/// Empirical norm-constrained regret: `log` of the genie density integrated
/// over assumed labels by adaptive Simpson, with the integration window
/// certified by the analytic genie envelope. Falls back to the in-span
/// closed form `log K_0` when the test point has no out-of-span component.
pub fn empirical_regret(fit: &MinNormFit, x: &DVector<f64>) -> Result<f64> {
    let x_perp = fit.orthogonal_residual(x)?;
    let perp_norm_sq = x_perp.norm_squared();
    if perp_norm_sq.sqrt() <= fit.in_span_tolerance(x) {
        return Ok(fit.k0(x)?.ln());
    }
    if fit.norm_sq == 0.0 {
        // Zero training labels force theta_hat = 0 for every label: the
        // genie is the base Gaussian and normalizes to one.
        return Ok(0.0);
    }

    let point = AugmentedPoint::new(fit, x)?;
    let center = fit.weights.dot(x);
    let sigma = fit.noise_variance.sqrt();
    let k0 = fit.k0(x)?;

    // Grow the half-width until the genie envelope is negligible at the
    // edges: effective std sigma K_0 (1 + |x_perp|^2 / (K_0 lambda)), with
    // lambda at its lower bound evaluated at the current edge.
    let mut width = 12.0 * sigma * k0;
    for _ in 0..64 {
        let lambda_edge = lambda_lower_bound(fit, x, center + width)?.max(LAMBDA_LO);
        let needed = 12.0 * sigma * k0 * (1.0 + perp_norm_sq / (k0 * lambda_edge));
        if width >= needed {
            break;
        }
        width = needed.min(width * 4.0).max(width * 1.5);
    }

    let integrand = |y: f64| point.genie_density(y).unwrap_or(0.0);
    let k = quadrature::adaptive_simpson(&integrand, center - width, center + width, 1e-8)?;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Numerical(format!(
            "empirical regret integral is not positive: K = {k}"
        )));
    }
    Ok(k.ln())
}

/// Analytic regret upper bound:
/// `log[(1 + x^T X^+ X^{+T} x)(1 + 2 |x_perp|^2)
///      + 3 cbrt(|x_perp|^2 theta*^T X^+ X^{+T} theta* / (pi sigma^2))]`.
pub fn regret_upper_bound(fit: &MinNormFit, x: &DVector<f64>) -> Result<f64> {
    let k0 = fit.k0(x)?;
    let x_perp = fit.orthogonal_residual(x)?;
    let perp = x_perp.norm_squared();
    let cube = perp * fit.theta_quad / (std::f64::consts::PI * fit.noise_variance);
    Ok((k0 * (1.0 + 2.0 * perp) + 3.0 * cube.cbrt()).ln())
}
