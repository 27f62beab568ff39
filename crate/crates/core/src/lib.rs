//! Bistable lattice difference equations with nonlocal dispersal.
//!
//! The crate simulates the Wolbachia lattice update
//! `v(t+1) = (1 - d) f(v) + d K * f(v)` and provides spectral stability
//! tests, traveling-front speed estimates, outbreak-size distributions and
//! release-cost optimizers on top of it.

pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod grid;
pub mod growth;
pub mod kernels;
pub mod lattice;
pub mod modes;
pub mod optimize;
pub mod outbreak;
pub mod spectral;
pub mod stability;
pub mod waves;

pub use error::{Error, Result};
pub use grid::{Boundary, GridShape};
pub use growth::GrowthParams;
pub use kernels::{discretize, DiscreteKernel, KernelSpec};
pub use lattice::{
    init_field, DispersalSetting, LatticeConfig, LatticeField, ProfileShape, ReleaseProfile, Storage, Trajectory, Wlde,
};
