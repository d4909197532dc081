//! Separable k-t MRI reconstruction.
//!
//! A 3D k-t acquisition is inverse-transformed along the fully sampled FE
//! direction and split into independent (PE, TIME) problems, one per FE row.
//! Each row is reconstructed either by a classical variable-splitting solver
//! (temporal subspace penalty + spatial sparsity) or by an unrolled network,
//! and the rows are stitched back into a volume.

pub mod classical;
pub mod dc;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod images;
pub mod ktb;
pub mod metrics;
pub mod net;
pub mod operators;
pub mod parallel;
pub mod phantom;
pub mod sampling;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use operators::{CoilMaps, SamplingMask};
pub use sampling::{MaskSpec, PatternKind};
pub use tensor::{AxisLabel, ComplexTensor, Domain, KTSlice2D, KTVolume, C64};
