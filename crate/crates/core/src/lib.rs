//! Interactive binary image segmentation.
//!
//! The pipeline combines two ingredients in a single labeling energy:
//!
//! 1. A unary term built from geodesic distances between superpixels and the
//!    user's scribbles ([`superpixel`], [`geodesic`], [`unary`]).
//! 2. An edge-preserving pairwise term given by a bilateral affinity, factored
//!    through a simplified bilateral grid and minimized with a fast bilateral
//!    solver ([`bilateral`]).
//!
//! [`segmenter`] couples the two with an alternating-direction scheme and
//! thresholds the relaxed labels into a [`BinaryMask`]. [`metrics`] scores
//! masks against ground truth.
//!
//! ```no_run
//! use geoseg::{image, segmenter::{segment, SolverConfig}};
//!
//! let img = image::load_image("photo.png")?;
//! let scribbles = image::load_scribbles("photo_scribbles.png", img.width(), img.height())?;
//! let state = segment(&img, &scribbles, &SolverConfig::default())?;
//! image::save_mask(&state.mask, "mask.png")?;
//! # Ok::<(), geoseg::Error>(())
//! ```

pub mod bilateral;
pub mod color;
mod error;
pub mod geodesic;
pub mod image;
pub mod metrics;
pub mod segmenter;
pub mod superpixel;
pub mod unary;

pub use error::{Error, Result};
pub use image::{BinaryMask, ImageBuffer, Label, ScribbleMap, YuvImage};
