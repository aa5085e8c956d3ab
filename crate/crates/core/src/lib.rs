//! Predictive normalized maximum likelihood (pNML) learners.
//!
//! The pNML assigns a probability to a candidate test label by refitting the
//! model with that label appended to the training set, reading off the
//! refitted model's probability for it, and normalizing across labels. The
//! log normalization factor is the min-max regret: a per-sample confidence
//! measure that is small exactly when no alternative label explains the data
//! about as well as the predicted one.
//!
//! The crate covers the hypothesis classes where that procedure has a closed
//! or tractable form, plus the applications built on the regret:
//!
//! - [`regression`]: exact pNML for ordinary/ridge linear regression;
//! - [`overparam`]: norm-constrained pNML for over-parameterized regression
//!   (minimum-norm interpolation), with an analytic regret upper bound;
//! - [`lpnml`]: ridge-luckiness pNML whose prediction shifts toward zero
//!   outside the learnable subspace, plus the Bayesian comparator and
//!   leave-one-out hyperparameter tuning;
//! - [`softmax`]: analytic single-softmax-layer pNML regret, embedding-based
//!   out-of-distribution scoring, a trained-last-layer variant, and the
//!   twice-universal combiner;
//! - [`adversarial`]: refinement-based adversarial defense on a 2D toy task,
//!   with FGSM/PGD attacks and an identity-BPDA adaptive attack;
//! - [`dial`]: individual-setting active-learning acquisition over a frozen
//!   predictor ensemble;
//! - [`metrics`], [`dataset`], [`features`], [`experiments`]: evaluation
//!   metrics, dataset I/O, feature maps, and experiment drivers.

pub mod adversarial;
pub mod dataset;
pub mod dial;
pub mod error;
pub mod experiments;
pub mod features;
pub mod linalg;
pub mod lpnml;
pub mod metrics;
pub mod mlp;
pub mod overparam;
pub mod quadrature;
pub mod regression;
pub mod softmax;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use linalg::{DesignMatrix, PseudoInverse, SpectralDecomposition};
pub use regression::{GaussianPredictive, RegressionFit};
// pub use softmax::CategoricalPredictive;
