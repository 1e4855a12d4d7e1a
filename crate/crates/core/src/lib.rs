//! Exact diagonalization of d-dimensional product-vacua-with-boundary-states
//! spin models on finite regions of `Z^d`.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod groundstate;
pub mod lattice;
pub mod model;
pub mod sparse;
pub mod spectra;
pub mod thermo;

pub use error::{PvbsError, Result};
pub use lattice::{DiamondRegion, LatticePoint, LatticeRegion};
pub use model::{ModelParams, Sector, SectorBasis};
pub use sparse::{LinearOperator, SparseOperator};

pub use spectra::SpectralReport;
