//! Unrolled reconstruction network over FE rows.
//!
//! Each phase refines the estimate with a residual temporal CNN, a spatial
//! CNN with a learned soft threshold, and data consistency. Gradients are
//! computed by hand-written reverse mode in complex128.

pub mod conv;
mod dataset;
mod gradcheck;
mod infer;
mod ktp;
mod model;
mod params;
mod train;

pub use dataset::{build_training_set, direct_sample_count, separable_sample_count, Sample, TrainingSet};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckProblem, GradcheckReport, DEFAULT_STEP};
pub use infer::{infer_volume, sc_postprocess, ScConfig};
pub use ktp::{decode_params, encode_params, load_params, save_params, KTP_MAGIC};
pub use model::{backward, channels_of, complex_of, loss, network_forward, spatial_module, temporal_module, ChannelSlice};
pub use params::{
    count_parameters, single_phase, softplus, softplus_inv, NetArch, NetworkParams, ParamClass, PhaseParams, SpatialInput,
    MU_INIT, THETA_INIT,
};
pub use train::{phase_losses, train, train_with, EpochRecord, LossTrace, Reduction, TrainConfig, MU_FLOOR};
