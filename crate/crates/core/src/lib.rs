//! Simulation, threshold analysis and optimal treatment control for a
//! TB-HIV/AIDS coinfection compartmental model.

pub mod analysis;
pub mod csv;
pub mod error;
pub mod integrator;
pub mod model;
pub mod ocp;
pub mod runner;
pub mod scenario;

pub use error::{Error, Result};
