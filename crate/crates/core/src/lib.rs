//! Deterministic crop-wise latent fusion for tiled panorama sampling.
//!
//! The engine denoises a wide latent by cutting it into overlapping crops,
//! stepping each crop with a deterministic DDIM update, reconciling
//! neighboring crops with a closed-form fusion step, and composing the result
//! back into the panorama with a weighted average. Crop layouts can be
//! interleaved across timesteps ("cross sampling") to trade denoiser calls
//! for overlap.
//!
//! Core math ([`grid`], [`schedule`], [`tiler`], [`fusion`], [`metrics`]) is
//! generic over the scalar type through [`Scalar`]; the pipeline, denoisers
//! and file formats run in `f64`. The aliases at the crate root name the
//! concrete types used throughout the pipeline.

pub mod denoiser;
pub mod error;
pub mod external;
pub mod fusion;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod scalar;
pub mod schedule;
pub mod tiler;

pub use denoiser::{AnchorMode, Denoiser, DenoiserKind, DenoiserSpec, Pattern};
pub use error::{Error, Result};
pub use external::{ExternalCallFrame, ExternalDenoiser, ExternalHandle};
pub use fusion::{FusionConfig, FusionVariant, NeighborSource, Weighting};
pub use grid::LatentGrid;
pub use metrics::{RunTiming, SeamReport};
pub use pipeline::{PanoramaOutput, Pipeline, RunConfig, RunMode, TwinPairOutput};
pub use scalar::Scalar;
pub use schedule::NoiseSchedule;
pub use tiler::{ColumnMask, CropWindow, TilePlan};

/// Latent grid in the pipeline's working precision.
pub type Grid = LatentGrid<f64>;
/// Single-precision latent grid.
pub type Grid32 = LatentGrid<f32>;
/// Noise schedule in the pipeline's working precision.
pub type Schedule = NoiseSchedule<f64>;
/// Crop window with `f64` blending weights.
pub type Window = CropWindow<f64>;
/// Tile plan with `f64` blending weights.
pub type Plan = TilePlan<f64>;
