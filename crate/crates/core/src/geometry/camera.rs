use nalgebra::Matrix2x3;

use super::{Mat3, Vec2, Vec3};
use crate::error::{Error, Result};

/// Points at or closer than this camera-space depth are behind the camera.
pub const NEAR_DEPTH: f64 = 1e-9;

/// Pinhole camera. `rotation`/`translation` map world to camera space; camera
/// space has +x right, +y down and +z forward.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pixel: Vec2,
    pub depth: f64,
}

impl Projection {
    pub fn in_front(&self) -> bool {
        self.depth > NEAR_DEPTH
    }
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidCamera("principal point is not finite".into()));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::InvalidCamera(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let off = (gram - Mat3::identity()).abs().max();
        if !(off <= 1e-9) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (|RᵀR − I| = {off:e})"
            )));
        }
        if !self.translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidCamera("translation is not finite".into()));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Camera center in world space.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn project(&self, p: &Vec3) -> Projection {
        let q = self.to_camera(p);
        Projection {
            pixel: Vec2::new(self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy),
            depth: q.z,
        }
    }

    /// `∂pixel/∂p` for a world-space point in front of the camera.
    pub fn project_jacobian(&self, p: &Vec3) -> Matrix2x3<f64> {
        let q = self.to_camera(p);
        let iz = 1.0 / q.z;
        let dq = Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * q.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * q.y * iz * iz,
        );
        dq * self.rotation
    }

    /// World-space unit direction of the ray through pixel coordinate `pixel`.
    pub fn ray_direction(&self, pixel: Vec2) -> Vec3 {
        let d = Vec3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        );
        (self.rotation.transpose() * d).normalize()
    }

    /// World-space point at camera-space depth `depth` along the pixel ray.
    pub fn unproject(&self, pixel: Vec2, depth: f64) -> Vec3 {
        let q = Vec3::new(
            (pixel.x - self.cx) / self.fx * depth,
            (pixel.y - self.cy) / self.fy * depth,
            depth,
        );
        self.rotation.transpose() * (q - self.translation)
    }

    /// Camera at `eye` aimed at `target` with world +Y as up.
    pub fn look_at(eye: Vec3, target: Vec3, fx: f64, fy: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&Vec3::y());
        if right.norm() < 1e-12 {
            right = forward.cross(&Vec3::z());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            rotation,
            translation,
            width,
            height,
        )
    }
}

/// Intrinsics shared by every camera of a [`six_view_rig`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigOptions {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
}

impl Default for RigOptions {
    fn default() -> Self {
        RigOptions {
            width: 256,
            height: 256,
            fov_deg: 50.0,
        }
    }
}

/// Azimuths (degrees) of the six rig views, front first.
pub const RIG_AZIMUTHS: [f64; 6] = [0.0, 60.0, -60.0, 120.0, -120.0, 180.0];

/// Six cameras on a horizontal circle of radius `distance` around `look_at`.
/// Azimuth 0 sits on +Z and looks down −Z.
pub fn six_view_rig(distance: f64, look_at: Vec3) -> Result<Vec<Camera>> {
    six_view_rig_with(distance, look_at, &RigOptions::default())
}

pub fn six_view_rig_with(distance: f64, look_at: Vec3, opts: &RigOptions) -> Result<Vec<Camera>> {
    if !(distance > 0.0) {
        return Err(Error::InvalidCamera(format!(
            "rig distance must be positive, got {distance}"
        )));
    }
    let f = opts.width as f64 / 2.0 / (opts.fov_deg.to_radians() / 2.0).tan();
    RIG_AZIMUTHS
        .iter()
        .map(|az| {
            let a = az.to_radians();
            let eye = look_at + Vec3::new(a.sin(), 0.0, a.cos()) * distance;
            Camera::look_at(eye, look_at, f, f, opts.width, opts.height)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_cam() -> Camera {
        Camera::new(1.0, 1.0, 0.0, 0.0, Mat3::identity(), Vec3::zeros(), 1, 1).unwrap()
    }

    #[test]
    fn identity_projection() {
        let p = identity_cam().project(&Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(p.pixel, Vec2::zeros());
        assert_eq!(p.depth, 1.0);
        assert!(p.in_front());
    }

    #[test]
    fn direct_formula() {
        let cam = Camera::new(100.0, 100.0, 50.0, 50.0, Mat3::identity(), Vec3::zeros(), 100, 100).unwrap();
        let p = cam.project(&Vec3::new(1.0, 0.0, 2.0));
        assert_eq!(p.pixel.x, 100.0);
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn behind_camera_flagged() {
        let p = identity_cam().project(&Vec3::new(0.0, 0.0, -1.0));
        assert!(!p.in_front());
        let p = identity_cam().project(&Vec3::new(0.0, 0.0, 1e-10));
        assert!(!p.in_front());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(0.0, 1.0, 0.0, 0.0, Mat3::identity(), Vec3::zeros(), 1, 1).is_err());
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, Mat3::identity() * 1.1, Vec3::zeros(), 1, 1).is_err());
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, Mat3::identity(), Vec3::zeros(), 0, 1).is_err());
    }

    #[test]
    fn rig_layout() {
        let rig = six_view_rig(3.0, Vec3::zeros()).unwrap();
        assert_eq!(rig.len(), 6);
        let front = &rig[0];
        assert_relative_eq!(front.center(), Vec3::new(0.0, 0.0, 3.0), epsilon = 1e-12);
        // forward axis is the third row of the rotation
        let forward = front.rotation.row(2).transpose();
        assert_relative_eq!(forward, -Vec3::z(), epsilon = 1e-12);
        let back = &rig[5];
        assert_relative_eq!(back.center(), -front.center(), epsilon = 1e-12);
        for cam in &rig {
            let p = cam.project(&Vec3::zeros());
            assert_relative_eq!(p.pixel, Vec2::new(128.0, 128.0), epsilon = 1e-9);
            assert_relative_eq!(p.depth, 3.0, epsilon = 1e-12);
            assert_relative_eq!(cam.rotation.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unproject_inverts_project() {
        let rig = six_view_rig(2.5, Vec3::new(0.1, 0.2, -0.3)).unwrap();
        let p = Vec3::new(0.3, -0.4, 0.2);
        for cam in &rig {
            let pr = cam.project(&p);
            assert_relative_eq!(cam.unproject(pr.pixel, pr.depth), p, epsilon = 1e-12);
        }
    }
}
