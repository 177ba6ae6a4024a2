//! Adaptive generalized multiscale discontinuous Galerkin method (GMsDGM)
//! for high-contrast elliptic problems `-div(κ ∇u) = f` on a square domain
//! with Dirichlet data imposed weakly.
//!
//! The pipeline is: build a [`grid::Grid`] and a [`field::PermeabilityField`],
//! assemble a [`solve::Discretization`], build per-block spectral spaces with
//! [`spectral::OfflineSpaces`], then solve in an [`spectral::OfflineState`]
//! or run one of the enrichment loops in [`adaptive`].

pub mod adaptive;
pub mod cli;
pub mod dense;
pub mod dg_form;
pub mod error;
pub mod field;
pub mod grid;
pub mod indicators;
pub mod io;
pub mod local_fem;
pub mod snapshots;
pub mod solve;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{BoundaryData, PermeabilityField, SourceField};
pub use grid::{BlockTopology, Domain, Grid};
pub use solve::{Discretization, Problem, Solution};
pub use spectral::{Family, OfflineSpaces, OfflineState, SpectralOptions};
