//! Validated domain types shared by the rest of the crate.

pub mod dataset;
pub mod hyper;
pub mod partition;
pub mod state;

pub use dataset::{
    parse_long_csv, read_long_csv, standardize_covariates, validate_dataset, DropReason,
    DroppedSubject, LongitudinalDataset, RawRecord, RawTable, Standardization, Subject,
    ValidatedData,
};
pub use hyper::{Dims, HyperConfig, MatrixSpec, ModelHyperparams, VectorSpec};
pub use partition::Partition;
pub use state::ChainState;
