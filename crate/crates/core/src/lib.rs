pub mod band;
pub mod cli;
pub mod config;
pub mod dispersion;
pub mod eigen;
pub mod eos;
pub mod evolution;
pub mod error;
pub mod forms;
pub mod mesh;
pub mod profile;
pub mod quadrature;
pub mod registry;
pub mod synthesis;
pub mod verify;
pub mod viscosity;

pub use error::{Error, Result, Side};
