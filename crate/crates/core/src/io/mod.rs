//! File formats: OBJ meshes, UVT tensors, PFM float images, PNG previews and
//! the small text formats used by the command line.

pub mod image;
pub mod obj;
pub mod pfm;
pub mod text;
pub mod uvt;
pub mod views;

pub use obj::{load_obj, parse_obj, save_obj};
pub use pfm::{load_pfm, save_pfm, FloatImage};
pub use uvt::{load_uvt, save_uvt, Tensor};
