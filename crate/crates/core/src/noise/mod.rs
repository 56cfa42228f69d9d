//! Regularized noise, the stochastic convolution `Ψ⁽ⁿ⁾`, its covariance
//! and the renormalization functions.

mod covariance;
mod ou;
mod pathio;
mod rng;
mod table;

pub use covariance::{
    c1_truncated, c2_truncated, compute_c1, compute_c2, covariance_exact, covariance_truncated,
    C2Options, C2Value,
};
pub use ou::{
    coupled_difference_variance, epsilon, ou_variance, sample_stoch_conv, NoiseConfig, OuSampler,
    StochConvPath,
};
pub use pathio::{read_path, write_path, PathHeader};
pub use rng::{mode_stream_id, NoiseKey, NormalStream, GENERATOR_ID};
pub use table::{build_renorm_table, RenormMethod, RenormTable};
