//! Saliency-aware image quality evaluation.
//!
//! The crate bundles the numerical pieces needed to study how visual saliency
//! relates to image quality assessment:
//!
//! - [`image_core`]: raster images, luma conversion, separable Gaussian blur, bilinear resize
//! - [`saliency`]: saliency maps, normalizations, center prior, histogram matching, NSS/SIM/CC/KLD
//! - [`quality`]: PSNR, SSIM, MS-SSIM and their saliency-weighted variants EW-PSNR/EW-SSIM
//! - [`explanation`]: GradCAM combination, SVD first component, multi-pass aggregation
//! - [`masking`]: MoRF/LeRF masking series and perturbation-curve scoring
//! - [`stats`]: SROCC, PLCC and the per-group fraction of concordant pairs
//! - [`subjective`]: verification filtering and Bradley-Terry aggregation of pairwise votes
//! - [`harness`]: manifest loading, batch metric evaluation and correlation reports

pub mod error;
pub mod explanation;
pub mod harness;
pub mod image_core;
pub mod masking;
pub mod quality;
pub mod saliency;
pub mod stats;
pub mod subjective;

pub use error::{Error, Result};
pub use image_core::RasterImage;
pub use saliency::{FixationSet, NormState, SaliencyMap};
