//! Bootstrap percolation and kinetically constrained models on finite
//! lattices.

pub mod blocks;
pub mod bootstrap;
pub mod error;
pub mod family;
pub mod kcm;
pub mod lattice;
pub mod paths;
pub mod percolation;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use family::{FamilySpec, Outside, UpdateFamily};
pub use lattice::{Boundary, Configuration, Cuboid, Geometry, Region, RegionKind};
pub use stats::ScanEstimate;
