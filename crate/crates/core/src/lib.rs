//! Learning low-dimensional polynomial-manifold representations of
//! high-dimensional state snapshots.
//!
//! A snapshot matrix `S ∈ ℝ^{n×k}` is compressed into `r ≪ n` latent
//! coordinates per column. Reconstruction is either linear (`V ŝ`, the
//! classical orthogonal-mode ansatz) or polynomial,
//!
//! ```text
//! s ≈ V ŝ + V̄ Ξ g(ŝ),      g(ŝ) = [ŝ², ŝ³, …, ŝᵖ]
//! ```
//!
//! with `[V, V̄]` orthonormal and `Ξ` a small coefficient matrix. Two
//! fitting routes are provided: a closed-form regression on top of the
//! truncated SVD ([`fit::fit_pod_manifold`]) and an alternating
//! minimization that also optimizes the bases ([`am::fit_am`]).
//!
//! The [`kdv`] module generates the Korteweg–de Vries soliton datasets
//! used by the built-in compression benchmark; [`eval`] scores fitted
//! models on held-out trajectories.

pub mod am;
pub mod error;
pub mod eval;
pub mod fit;
pub mod kdv;
pub mod model;
pub mod nls;
pub mod pod;
pub mod poly;
pub mod snapshot;

pub use error::{Error, Result};
pub use model::ManifoldModel;
pub use pod::PodBasis;
pub use snapshot::{CenteringVector, DatasetCatalog, SnapshotMatrix};
