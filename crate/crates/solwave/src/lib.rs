//! Numerical engine for constrained minimizers of k-component nonlinear
//! Klein-Gordon energies: radial discretization, reduced-energy descent,
//! certification of the frequency and coercivity bounds, and a leapfrog
//! time integrator for spot checks of the resulting standing waves.

pub mod cli;
pub mod error;
pub mod evolve;
pub mod functionals;
pub mod grid;
pub mod model;
pub mod scalar;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};

/// Default working precision.
pub type Real = f64;

pub type Grid = grid::RadialGrid<Real>;
pub type Field = grid::FieldState<Real>;
pub type Model = model::NonlinearityModel<Real>;
pub type Frequencies = functionals::FrequencyVector<Real>;
pub type Charges = functionals::ChargeVector<Real>;
