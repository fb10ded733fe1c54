//! Surface-water mapping from topographic airborne LiDAR.
//!
//! Water absorbs or specularly deflects near-infrared laser pulses, so open
//! water shows up as holes in a high-resolution rasterized point cloud. The
//! crate finds those holes with a binomial lower-confidence test on local
//! point occupancy ([`seed`]), then grows each significant hole over the
//! connected cells whose surface lies at the same elevation ([`werm`]),
//! relying on the fact that still water is flat.
//!
//! The pipeline, in order:
//!
//! 1. [`ingest`] streams points from LAS or XYZ files.
//! 2. [`raster`] bins them into a digital surface model and occupancy mask.
//! 3. [`seed`] classifies initial water cells and optionally clears cells
//!    near buildings, whose occlusion shadows also produce dropouts.
//! 4. [`werm`] extends seed segments by elevation-sliced region merging.
//! 5. [`products`] emits the water mask, per-body elevations, a
//!    hydro-flattened DEM and a segment report.
//!
//! [`baseline`] and [`eval`] hold the NDWI comparison method and the
//! tile-based evaluation harness, [`synth`] generates scenes with exact
//! ground truth, and [`pipeline`] wires everything together for the CLI.

// `!(a < b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod eval;
pub mod ingest;
pub mod pipeline;
pub mod products;
pub mod raster;
pub mod seed;
pub mod synth;
pub mod werm;

pub use ingest::{Point3, PointCloudBounds};
pub use raster::{BitMask, GridGeoref, RasterGrid};
