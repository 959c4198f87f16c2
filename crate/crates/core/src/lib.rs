//! Panoramic HDR stitching.
//!
//! Three aligned views with increasing exposure times and pairwise
//! overlapping fields of view are turned into a single panoramic LDR image:
//!
//! 1. [`wha`] estimates intensity mapping functions between neighbouring
//!    views from the histograms of their overlaps.
//! 2. [`pano`] renders every view at every exposure and assembles three
//!    panoramas, one per exposure level.
//! 3. [`mef`] fuses the three panoramas with quality-weighted Laplacian
//!    pyramids.
//! 4. [`detail`] recovers high-frequency detail lost along the way by a
//!    weighted least-squares fit to a log-domain guidance field.
//!
//! [`pipeline::stitch`] chains the stages; [`metrics`] scores results against
//! ground truth, and [`scene`] provides scene I/O and synthetic test scenes.

pub mod detail;
pub mod error;
pub mod image;
pub mod layout;
pub mod mef;
pub mod metrics;
pub mod pano;
pub mod pipeline;
pub mod scene;
pub mod wha;

pub use error::{Error, Result};
pub use image::{FloatImage, LdrImage};
pub use layout::{PanoLayout, Region, Side, View};
pub use pipeline::{stitch, StitchConfig, StitchResult};
pub use scene::{load_viewset, ViewSet};
