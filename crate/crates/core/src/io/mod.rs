//! Run configuration and field serialization.

pub mod config;
pub mod fields;

pub use config::{parse_config, RunConfig};
pub use fields::{read_velocity_csv, write_scalar_vtk, write_velocity_csv, write_velocity_vtk};
