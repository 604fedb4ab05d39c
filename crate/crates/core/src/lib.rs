//! Numerical core for turning static-webcam archives into verified patch
//! correspondence sets.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. Everything
//! that touches the filesystem, decodes images or talks HTTP lives in the
//! `patchfoundry` companion crate.
//!
//! # Stages
//! - [`image`]: rasters, sharpness and brightness statistics, homography warps.
//! - [`gate`]: per-image quality filters and the per-camera keep rule.
//! - [`cluster`]: K-means over global image embeddings, representative picking.
//! - [`geom`]: keypoints, matching, RANSAC homographies, view clustering and
//!   photometric registration.
//! - [`sampler`]: response masks, patch specs, patch extraction, augmentation,
//!   batch assembly and the hard-in-batch triplet loss.
//! - [`eval`]: matching-task AP, verification PR curves, deregistration sweep.

#![no_std]
// when a dependency links std, its inherent float methods shadow num_traits::Float
#![allow(unused_imports)]

extern crate alloc;

mod error;
pub mod linalg;
pub mod seed;

pub mod cluster;
pub mod eval;
pub mod gate;
pub mod geom;
pub mod homography;
pub mod image;
pub mod sampler;

pub use error::{Error, Result};
pub use homography::Homography;
pub use image::{GrayImage, ValidMask};
