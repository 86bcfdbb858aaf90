//! Simulation core of a rover-borne soil and rock science bench.

pub mod assay;
pub mod clock;
pub mod conf;
pub mod defaults;
pub mod env;
pub mod geom;
pub mod life;
pub mod mechanism;
pub mod mission;
pub mod params;
pub mod sensors;
