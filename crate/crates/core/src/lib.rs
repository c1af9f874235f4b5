//! Optimal transport with radial convex costs `h(x − y)`, Kantorovich potentials, the five
//! gradients inequality on grids, and the `W_p` minimizing-movement scheme.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the type.

pub mod cost;
pub mod error;
pub mod fivegrad;
pub mod geometry;
pub mod jko;
pub mod ot;
pub mod scalar;
pub mod stats;
pub mod vector;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid64 = geometry::Grid<f64>;
pub type Density64 = geometry::DensityField<f64>;
pub type VectorField64 = geometry::VectorField<f64>;
pub type RadialCost64 = cost::RadialCost<f64>;
pub type HFunction64 = cost::HFunction<f64>;
pub type TransportResult64 = ot::TransportResult<f64>;
pub type MapField64 = ot::MapField<f64>;
pub type JkoConfig64 = jko::JkoConfig<f64>;
pub type Trajectory64 = jko::Trajectory<f64>;

pub type Grid32 = geometry::Grid<f32>;
pub type Density32 = geometry::DensityField<f32>;
pub type VectorField32 = geometry::VectorField<f32>;
pub type RadialCost32 = cost::RadialCost<f32>;
pub type HFunction32 = cost::HFunction<f32>;
pub type TransportResult32 = ot::TransportResult<f32>;
pub type MapField32 = ot::MapField<f32>;
pub type JkoConfig32 = jko::JkoConfig<f32>;
pub type Trajectory32 = jko::Trajectory<f32>;
