//! Unsupervised blind single-image super-resolution.
//!
//! A low-resolution observation `y` is modeled as `(x ⊗ k)↓s + n`. The
//! [`solver`] recovers both `x` and `k` by fitting two networks to `y` alone:
//! an encoder-decoder image generator ([`models::ImageRestorer`]) and a
//! softmax kernel generator ([`models::KernelGenerator`]). Each outer
//! iteration first pulls the kernel network toward well-fitting random
//! Gaussian kernels, then alternates image steps with meta-updates of the
//! kernel.
//!
//! ```no_run
//! use mlmc::bench::Scenario;
//! use mlmc::solver::{solve, SolverConfig};
//!
//! let sc = Scenario::desk(0, 64, 2, 0.0)?;
//! let cfg = SolverConfig { iters: 10, ..SolverConfig::default() };
//! let out = solve(&sc.lr, &cfg, None)?;
//! println!("{} trace rows, kernel peak {:.4}", out.trace.len(), out.kernel.max());
//! # Ok::<(), mlmc::Error>(())
//! ```
//!
//! The autodiff engine, optimizer and convolution live in [`ad`]. The
//! degradation model and metrics live in [`degradation`], and kernel
//! families in [`kernel`]. The `examples/` directory has one runnable
//! program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ad;
pub mod bench;
pub mod cli;
pub mod degradation;
pub mod error;
pub mod image;
pub mod io;
pub mod kernel;
pub mod models;
pub mod scene;
pub mod solver;

pub use error::{Error, Result};
