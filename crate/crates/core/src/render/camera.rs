//! Pinhole camera and perspective projection to normalized device
//! coordinates.
//!
//! With camera axes `(r, u, f)` (right, up, forward) and `d = p − eye`:
//! `x_ndc = (r·d) / ((f·d)·tan(fov/2)·aspect)`, `y_ndc = (u·d) / ((f·d)·tan(fov/2))`,
//! depth `f·d`. Pixel `(row i, col j)` has its center at
//! `x = 2(j+½)/W − 1`, `y = 1 − 2(i+½)/H`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::{Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            position: Vec3::new(0.0, 1.0, 6.0),
            look_at: Vec3::new(0.0, 0.5, 0.0),
            up: Vec3::y(),
            fov_y: std::f64::consts::FRAC_PI_4,
            near: 0.1,
            far: 100.0,
            width: 64,
            height: 64,
        }
    }
}

/// Projected vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenVertex {
    pub ndc: Vec2,
    /// View-space depth along the optical axis.
    pub depth: f64,
    /// False when the vertex is behind the near plane.
    pub visible: bool,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(SimError::config("camera requires 0 < near < far"));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(SimError::config("camera fov_y must lie in (0, π)"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SimError::config("image size must be positive"));
        }
        let f = self.look_at - self.position;
        if f.norm() == 0.0 || f.cross(&self.up).norm() < 1e-12 {
            return Err(SimError::config("camera look_at and up must define a frame"));
        }
        Ok(())
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    /// `(right, up, forward)`.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = (self.look_at - self.position).normalize();
        let r = f.cross(&self.up).normalize();
        let u = r.cross(&f);
        (r, u, f)
    }

    /// Unit vector from the scene toward the camera.
    pub fn view_direction(&self) -> Vec3 {
        -self.basis().2
    }

    pub fn project(&self, p: &Vec3) -> ScreenVertex {
        let (r, u, f) = self.basis();
        let t = (0.5 * self.fov_y).tan();
        let d = p - self.position;
        let z = f.dot(&d);
        let ndc = Vec2::new(r.dot(&d) / (z * t * self.aspect()), u.dot(&d) / (z * t));
        ScreenVertex { ndc, depth: z, visible: z >= self.near }
    }

    pub fn project_all(&self, points: &[Vec3]) -> Vec<ScreenVertex> {
        points.iter().map(|p| self.project(p)).collect()
    }

    /// Cotangent of `p` given the cotangents of its NDC position and depth.
    pub fn project_adjoint(&self, p: &Vec3, ndc_bar: &Vec2, depth_bar: f64) -> Vec3 {
        let (r, u, f) = self.basis();
        let t = (0.5 * self.fov_y).tan();
        let a = self.aspect();
        let d = p - self.position;
        let z = f.dot(&d);
        let x = r.dot(&d) / (z * t * a);
        let y = u.dot(&d) / (z * t);
        let xc_bar = ndc_bar.x / (z * t * a);
        let yc_bar = ndc_bar.y / (z * t);
        let z_bar = depth_bar - ndc_bar.x * x / z - ndc_bar.y * y / z;
        r * xc_bar + u * yc_bar + f * z_bar
    }

    /// NDC coordinates of the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            2.0 * (col as f64 + 0.5) / self.width as f64 - 1.0,
            1.0 - 2.0 * (row as f64 + 0.5) / self.height as f64,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_camera() -> Camera {
        Camera {
            position: Vec3::zeros(),
            look_at: Vec3::new(0.0, 0.0, -1.0),
            up: Vec3::y(),
            fov_y: std::f64::consts::FRAC_PI_2,
            near: 0.1,
            far: 100.0,
            width: 64,
            height: 64,
        }
    }

    #[test]
    fn optical_axis_maps_to_center() {
        let s = axis_camera().project(&Vec3::new(0.0, 0.0, -5.0));
        assert!(s.ndc.norm() < 1e-15);
        assert!((s.depth - 5.0).abs() < 1e-15);
    }

    #[test]
    fn frustum_edge_maps_to_one() {
        let cam = axis_camera();
        let z = 3.0;
        let half = z * (cam.fov_y / 2.0).tan();
        let s = cam.project(&Vec3::new(half, 0.0, -z));
        assert!((s.ndc.x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_at_depth_five() {
        // fov 90°, tan(45°) = 1: NDC = (x/z, y/z).
        let cam = axis_camera();
        let expected = [(0.2, 0.2), (-0.2, 0.2), (-0.2, -0.2), (0.2, -0.2)];
        for (x, y) in expected {
            let s = cam.project(&Vec3::new(x * 5.0, y * 5.0, -5.0));
            assert!((s.ndc - Vec2::new(x, y)).norm() < 1e-12);
        }
    }

    #[test]
    fn behind_camera_flagged() {
        let s = axis_camera().project(&Vec3::new(0.0, 0.0, 1.0));
        assert!(!s.visible);
    }

    #[test]
    fn projection_adjoint_matches_fd() {
        let cam = Camera { position: Vec3::new(0.3, 1.0, 4.0), ..Camera::default() };
        let p = Vec3::new(0.4, -0.2, 0.3);
        let (nb, db) = (Vec2::new(0.7, -1.3), 0.4);
        let g = cam.project_adjoint(&p, &nb, db);
        let h = 1e-6;
        for c in 0..3 {
            let mut a = p;
            let mut b = p;
            a[c] += h;
            b[c] -= h;
            let (sa, sb) = (cam.project(&a), cam.project(&b));
            let fd = ((sa.ndc - sb.ndc).dot(&nb) + (sa.depth - sb.depth) * db) / (2.0 * h);
            assert!((fd - g[c]).abs() < 1e-8);
        }
    }
}
