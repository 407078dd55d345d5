use std::f64::consts::PI;

use rand::Rng;

use crate::mesh::{QuadMesh, Vec3};
use crate::{Error, Result};

/// Pinhole camera with a vertical field of view.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_y_deg: f64,
    /// `(height, width)` in pixels.
    pub resolution: (usize, usize),
}

/// Camera-space coordinates of a point: `(right, up, depth)`.
#[derive(Debug, Clone, Copy)]
pub struct Projected {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

impl Camera {
    pub fn new(eye: Vec3, target: Vec3, up: Vec3, fov_y_deg: f64, resolution: (usize, usize)) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::Precondition("camera eye coincides with target".into()));
        }
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(Error::Precondition(format!("fov_y {fov_y_deg} outside (0, 180)")));
        }
        if up.norm() < 1e-12 || forward.cross(&up).norm() < 1e-9 * forward.norm() * up.norm() {
            return Err(Error::Precondition("camera up vector is parallel to the view direction".into()));
        }
        if resolution.0 == 0 || resolution.1 == 0 {
            return Err(Error::Precondition("empty resolution".into()));
        }
        Ok(Self { eye, target, up: up.normalize(), fov_y_deg, resolution })
    }

    /// Orthonormal `(right, up, forward)` basis.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = (self.target - self.eye).normalize();
        let r = f.cross(&self.up).normalize();
        (r, r.cross(&f), f)
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        (self.resolution.0 as f64 / 2.0) / (self.fov_y_deg.to_radians() / 2.0).tan()
    }

    pub fn to_camera(&self, p: &Vec3) -> Projected {
        let (r, u, f) = self.basis();
        let d = p - self.eye;
        Projected { x: d.dot(&r), y: d.dot(&u), depth: d.dot(&f) }
    }

    /// Continuous pixel coordinates `(column, row)`; pixel `(i, j)` has its centre at `(j + 0.5, i + 0.5)`.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        if c.depth <= 1e-9 {
            return None;
        }
        let (h, w) = (self.resolution.0 as f64, self.resolution.1 as f64);
        let fpx = self.focal();
        Some((w / 2.0 + fpx * c.x / c.depth, h / 2.0 - fpx * c.y / c.depth, c.depth))
    }
}

/// Viewpoint distribution around a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseConfig {
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    /// Camera distance as a multiple of the bounding-sphere radius.
    pub distance_factor: f64,
    pub fov_y_deg: f64,
    pub resolution: (usize, usize),
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self { elevation_min_deg: -10.0, elevation_max_deg: 40.0, distance_factor: 1.8, fov_y_deg: 40.0, resolution: (64, 64) }
    }
}

impl PoseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.elevation_min_deg <= self.elevation_max_deg
            && self.elevation_min_deg > -90.0
            && self.elevation_max_deg < 90.0
            && self.distance_factor > 1.0
            && self.fov_y_deg > 0.0
            && self.fov_y_deg < 180.0
            && self.resolution.0 > 0
            && self.resolution.1 > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid pose configuration {self:?}")))
        }
    }
}

/// Centroid and bounding-sphere radius about it.
pub fn bounding_sphere(mesh: &QuadMesh) -> (Vec3, f64) {
    let c = mesh.centroid();
    let r = mesh.vertices().iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
    (c, r)
}

/// Camera on a sphere around the mesh centroid, y axis up.
pub fn sample_pose(rng: &mut impl Rng, cfg: &PoseConfig, mesh: &QuadMesh) -> Camera {
    let azimuth = rng.random_range(0.0..2.0 * PI);
    let elevation = if cfg.elevation_max_deg > cfg.elevation_min_deg {
        rng.random_range(cfg.elevation_min_deg..cfg.elevation_max_deg).to_radians()
    } else {
        cfg.elevation_min_deg.to_radians()
    };
    let (center, radius) = bounding_sphere(mesh);
    let dir = Vec3::new(elevation.cos() * azimuth.sin(), elevation.sin(), elevation.cos() * azimuth.cos());
    let eye = center + dir * (cfg.distance_factor * radius.max(1e-6));
    Camera::new(eye, center, Vec3::y(), cfg.fov_y_deg, cfg.resolution).expect("pose configuration was validated")
}

/// Azimuth (radians, `[0, 2pi)`) and elevation (degrees) of a camera around its target.
pub fn camera_angles(cam: &Camera) -> (f64, f64) {
    let d = (cam.eye - cam.target).normalize();
    let az = d.x.atan2(d.z).rem_euclid(2.0 * PI);
    (az, d.y.clamp(-1.0, 1.0).asin().to_degrees())
}
