//! Super-resolution of multi-resolution multispectral images.
//!
//! Low-resolution bands are unmixed by combining a band-independent
//! sub-pixel geometry (per-pixel weights over a pixel-corner lattice of
//! shared reflectance values) fitted on the high-resolution bands, with a
//! ratio-sharpening step, while exactly preserving each low-resolution
//! pixel's reflectance.

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model_fit;
pub mod pipeline;
pub mod raster;
pub mod solver;
pub mod synth;
pub mod unmix;

pub use error::{Error, Result};
pub use raster::{downsample, load_band, save_band, BandGrid, SceneManifest};
