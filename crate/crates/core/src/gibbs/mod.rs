//! Blocked Gibbs sampler.

pub mod chain;
pub mod polya_gamma;
pub mod store;
pub mod updates;

pub use chain::{fit, resume, resume_chain, run_chain, ChainOutput, FitOutput, SamplerConfig};
pub use store::{PosteriorDraw, PosteriorSamples, StoreLayout};
pub use updates::{Model, PriorKind};
