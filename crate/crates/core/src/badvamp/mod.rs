//! Bilinear adaptive VAMP and its building blocks.

mod algorithm;
mod dictionary;
mod lmmse;
mod observation;
mod prior;

pub use algorithm::{
    badvamp, column_priors, off_support_ratio, BadvampConfig, BadvampResult, BadvampState,
    NoiseAnneal,
};
pub use dictionary::update_dictionary;
pub use lmmse::{lmmse_column, LmmseBlock, LmmseOperator};
pub use observation::{simulate_stage2, sparse_codes};
pub use prior::{bg_denoise, bg_denoise_divergence, BgPrior};
