//! Event-only 3D scanning: simulate an event camera orbiting a subject,
//! keep contour events, carve an occupancy grid from their back-projected
//! rays, extract a surface and fit a parametric body model to it.

pub mod body;
pub mod bvh;
pub mod carve;
pub mod contour;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod io;
pub mod kdtree;
mod raster;
mod mc_tables;
pub mod metrics;
pub mod shapes;
pub mod sim;
pub mod surface;
pub mod toy;
pub mod trajectory;

pub use error::{Error, Result};
