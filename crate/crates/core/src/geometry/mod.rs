//! Triangle meshes, the linear blendshape model, differential operators and
//! pinhole cameras.

mod camera;
mod mesh;
mod normals;

pub use camera::{six_view_rig, six_view_rig_with, Camera, Projection, RigOptions, NEAR_DEPTH, RIG_AZIMUTHS};
pub use mesh::{
    deformed_vertices, vertex_laplacian, BlendModel, Label, Laplacian, RegionWeights, TriMesh,
    VertexOffsets,
};
pub use normals::{face_normals, triangle_normal, triangle_normal_jacobian, FaceNormals, DEGENERATE_AREA};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
