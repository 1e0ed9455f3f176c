//! Blind compressed sensing with adaptive sparsifying transforms.
//!
//! Jointly reconstructs a complex image from undersampled k-space
//! measurements and learns, from those measurements alone, either a single
//! unitary transform or a union of unitary transforms that sparsifies the
//! image patches, clustering each patch to its best transform.
//!
//! The pieces:
//!
//! * [`grid`] — complex image/k-space containers, the unitary FFT, and the
//!   centered-spectrum simulation convention;
//! * [`patches`] — wrap-around patch extraction and its adjoint;
//! * [`sparse`] — hard-thresholding sparse coding and patch clustering;
//! * [`procrustes`] — the exact per-cluster transform update;
//! * [`image_update`] — the closed-form k-space image update with the
//!   energy-bound multiplier;
//! * [`sampling`] — variable-density mask generation, measurement
//!   simulation, zero filling;
//! * [`objective`] — the descent objective and per-iteration statistics;
//! * [`solver`] — the block coordinate descent driver;
//! * [`metrics`] — PSNR / HFEN and the pixel cluster map;
//! * [`io`] — the on-disk formats shared with the CLI.
//!
//! Built with data-parallel inner loops on rayon by default; disable the
//! `parallel` feature for a dependency-free sequential build. Results are
//! identical either way: reductions use a fixed-shape tree.

pub mod error;
pub mod exec;
pub mod grid;
pub mod image_update;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod patches;
pub mod phantom;
pub mod procrustes;
pub mod sampling;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use grid::{ComplexImage, KSpace};
pub use num_complex::Complex64;
pub use patches::{PatchGeometry, PatchMatrix};
pub use sampling::{Measurements, SamplingMask};
pub use solver::{InitClustering, ReconstructionResult, SolverConfig};
pub use sparse::{ClusterAssignment, SparseCodes, TransformSet};
