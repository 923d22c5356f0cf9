//! Gram matrices, Gramians, kernel expectations, noise predictions and
//! closed-form feedback weights.

mod gram;
mod gramian;
mod kernel;
mod noise;

pub use gram::{expected_gram_stoch, expected_grams, fir_subfilter_gram};
pub use gramian::{
    iteration_bound, iteration_cap, observability_gramian, stochastic_gramian, Gramian, GramianKind,
    DEFAULT_GRAMIAN_TOL,
};
pub use kernel::{expected_sms, kernel_tensor, KernelTensor, DENSE_KERNEL_MAX_NODES};
pub use noise::{
    predict_zeta_arma_det, predict_zeta_arma_stoch, predict_zeta_fir_det, predict_zeta_fir_stoch,
    solve_alpha_arma_det, solve_alpha_arma_stoch, solve_alpha_fir_det, solve_alpha_fir_stoch, NoiseModel,
    NoiseModelKind, NoisePrediction, SourceModel, SourceNoise,
};
