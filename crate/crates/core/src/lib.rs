//! Dropout for matrix factorization: the stochastic objective and its
//! deterministic equivalent, the size-adaptive retain probability, the
//! closed-form global optimum of the induced squared-nuclear-norm problem,
//! and the training and experiment drivers built on them.

pub mod adaptive;
pub mod closed_form;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod nuclear;
pub mod objective;
pub mod rng;
pub mod svd;
pub mod trainer;

pub use adaptive::{adapted_penalty, gamma_of_p, lambda_of_theta, p_of_theta, theta_of_d, theta_of_lambda};
pub use closed_form::{
    compute_d_bar, compute_mu, convex_objective, shrinkage, solve_closed_form, solve_convex_iterative,
    ShrinkageSolution,
};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use nuclear::{
    column_norm_product_sum, equal_spread_factorization, nuclear_norm, pathological_double,
    variational_factorization,
};
pub use objective::{
    deterministic_objective, exact_expected_objective, monte_carlo_objective, omega_dropout,
    sampled_objective, DropoutConfig, FactorPair, MonteCarloEstimate,
};
pub use rng::{sample_bernoulli_vector, RngState};
pub use svd::{svd, SvdResult};
pub use trainer::{
    dropout_gradients, sgd_step, train_deterministic, train_dropout, StepSchedule, TrainConfig, TrainReport,
};
