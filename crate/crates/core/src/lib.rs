//! Vector approximate message passing (VAMP) for the standard linear model
//! and the generalized linear model, together with the instance generators
//! and sweep harness used to benchmark one-bit compressed sensing across
//! matrix condition numbers.

pub mod denoisers;
pub mod error;
pub mod harness;
pub mod lmmse;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod selftest;
pub mod special;
pub mod synth;
pub mod vamp;

pub use denoisers::{
    denoise_channel, denoise_prior, monte_carlo_divergence, DivergenceMode, PseudoMeasurement,
};
pub use error::{Result, VampError};
pub use lmmse::{glm_lmmse, slm_lmmse, GlmLmmseContext, GlmLmmseOutput, SlmLmmseContext};
pub use metrics::{dnmse, dnmse_db};
pub use model::{ChannelSpec, DenoiserResult, Estimator, PriorKind, PriorSpec, SvdOperator};
pub use synth::{generate_instance, ChannelKind, MatrixGenSpec, ProblemInstance, SignalSpec};
pub use vamp::{run_vamp_glm, run_vamp_slm, VampConfig, VampGlmState, VampRun, VampSlmState};
