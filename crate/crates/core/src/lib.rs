//! Post-training denoising of user profiles for a collaborative-filtering
//! recommender.
//!
//! A trained scorer ranks a held-out validation item for each user; a
//! denoiser (a baseline or a prompted chat model) proposes one or two recent
//! items to drop from the user's input row, and the removal is kept only if
//! the validation rank strictly improves. The model itself is never
//! retrained. Test-set metrics then compare denoised and original rows.

pub mod dataset;
pub mod denoise;
pub mod eval;
pub mod llm;
pub mod multivae;
pub mod rng;
pub mod scorer;
pub mod synth;

pub use dataset::{ExternalId, Interaction, SplitDataset};
pub use denoise::{DenoiseOutcome, Denoiser, ProposalError, RemovalProposal, UserContext};
pub use eval::{Metric, RankRecord};
pub use multivae::{ModelParams, TrainConfig};
pub use scorer::Scorer;
