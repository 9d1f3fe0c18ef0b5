//! Summaries of posterior draws.

pub mod clustering;
pub mod waic;

pub use clustering::{
    adjusted_rand_index, binder_loss, binder_point_estimate, cluster_count_posterior, co_clustering,
    PartitionPosterior,
};
pub use waic::{waic, WaicAccumulator, WaicReport};
pub mod predict;

pub use predict::{
    predict_ins, predict_oos, predictive_median, predictive_phi, predictive_quantiles, quantile, squared_error, summarize_mse,
    MseSummary, PredictiveDraws, QuantileRow,
};
