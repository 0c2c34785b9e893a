//! Multi-view feature splatting into a canonical UV space, semantic-aware
//! normal-guided mesh deformation, and mesh-anchored splat primitives.

pub mod error;
pub mod anchor;
pub mod checks;
pub mod deform;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod uvsplat;

pub use error::{Error, Result};
