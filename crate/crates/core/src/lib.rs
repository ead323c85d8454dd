//! Range-view, lidar-anchored long-range 3D object detection.
//!
//! The crate covers the full algorithmic pipeline at desk scale:
//!
//! * [`geom`] — camera model, pinhole projection, bearings, axis-aligned and
//!   rotated-box IoU.
//! * [`raster`] — z-buffered sparse depth rasters and the range-rescaling
//!   operations used for resolution transfer.
//! * [`targets`] — point-anchored 2D/3D regression target encoding and the
//!   inverse decoding back to linked boxes.
//! * [`loss`] — focal classification loss, Laplacian negative log-likelihood
//!   regression losses and orientation L1, all with analytic gradients.
//! * [`head`] — a small per-point MLP head plus an adaptive-moment trainer,
//!   standing in for a full image backbone.
//! * [`postproc`] — foreground selection, 2D NMS and bird's-eye-view NMS.
//! * [`eval`] — range-bucketed BEV average precision and 2.5D max-F1.
//! * [`synth`] — deterministic synthetic scene and lidar generator.
//!
//! Everything is deterministic for a fixed seed and works without the
//! standard library (`alloc` is required; enable the `libm` feature for
//! float math when `std` is disabled).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("rvdet-core needs either the `std` or the `libm` feature");

pub mod check;
pub mod eval;
pub mod geom;
pub mod head;
pub mod loss;
mod math;
pub mod postproc;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod targets;

pub use geom::{bearing, iou_2d, iou_bev, Box2D, Box3D, CameraModel, Point3};
pub use postproc::Detection;
pub use raster::{DepthRaster, LidarPoint};
pub use targets::{LinkedLabel, ObjectClass, TargetGrid};
