//! Near-field XL-MIMO channel estimation assisted by power-sensor holography.
//!
//! The pipeline: synthesize a spherical-wave multipath channel, localize the
//! UE and scatterers from a power-only hologram, build a location-aware
//! dictionary and recover the channel from compressed pilots with OMP.

pub mod channel;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod localization;
pub mod metrics;
pub mod omp;
pub mod reconstruction;
pub mod rng;
pub mod sensing;
pub mod training;

pub use config::{SimulationConfig, SystemConfig, SPEED_OF_LIGHT};
pub use error::{Error, Result};
pub use geometry::{Coord, Region};
