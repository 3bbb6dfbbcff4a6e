//! The LMU linear time-invariant memory: system construction, ZOH
//! discretization, impulse responses and the three evaluation backends.

mod backends;
mod config;
pub mod conv;
mod legendre;
mod system;

pub use backends::{
    dense_matvec_a, fast_matvec_a, run_fft_conv, run_rk, run_rk_with, run_state_space, Backend,
    MatVec, MemorySequence, RkOrder, StateSpaceStream, RK_STABLE_ORDER_CAP,
};
pub use config::LmuConfig;
pub use conv::{conv_len, FftConvolver};
pub use legendre::{decode_window, shifted_legendre};
pub use system::{
    build_continuous, discretize_zoh, expm, impulse_response, spectral_radius, ContinuousSystem,
    DiscreteSystem, ImpulseResponse, MAX_SQUARINGS,
};
