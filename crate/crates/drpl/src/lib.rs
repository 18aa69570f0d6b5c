//! Distributionally robust policy learning from source experimental data.
//!
//! Given experimental data from a *source* population and covariate data
//! from a *target* population, this crate learns individualized treatment
//! rules that maximize worst-case welfare over an ambiguity set of target
//! populations: every candidate keeps the target covariate distribution
//! but may move each conditional outcome distribution within a Wasserstein-1
//! ball of radius `delta` around the source conditional. The worst case has
//! a closed form, `max{m(x, a) - delta, inf Y}`, which makes robust policy
//! search as cheap as the naive plug-in search.
//!
//! Modules:
//! - [`data`]: CSV ingestion and validation of source/target datasets.
//! - [`cmr`]: conditional mean response estimation (per-arm trees or k-NN).
//! - [`robust`]: robust scores, KL-divergence duals, worst-case transport
//!   maps, and independent LP/brute-force oracles.
//! - [`lp`]: a small dense two-phase simplex used by the oracles.
//! - [`policy`]: depth-limited decision-tree policies and exact search.
//! - [`sim`]: synthetic scenarios and Monte Carlo regret experiments.
//! - [`cli`]: the `drpl` command-line front end (`learn`, `sweep`,
//!   `simulate`, `diagnose`).

pub mod cli;
pub mod cmr;
pub mod data;
pub mod error;
pub mod lp;
pub mod mat;
pub mod policy;
pub mod robust;
pub mod sim;

pub use error::{Error, Result};
pub use mat::Mat;
