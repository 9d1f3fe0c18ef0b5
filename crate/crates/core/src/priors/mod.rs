//! Stick-breaking weights, prior predictive checks of the partition, and
//! data-driven hyperparameter elicitation.

pub mod elicit;
pub mod prior_check;
pub mod weights;

pub use elicit::{elicit_hyperparams, fit_var_mle, ElicitationResult, ElicitationTargets};
pub use prior_check::{median_clusters, prior_check_grid, prior_cluster_monte_carlo, write_prior_check_csv, PriorDraw};
pub use weights::{compute_weights, log_weights, StickWeights};
