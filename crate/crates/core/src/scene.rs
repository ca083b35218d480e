//! Immutable render scene: camera, primitives, materials, lights and the BVH.

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Bvh, Hit, Primitive, Ray};
use crate::materials::{AreaLight, EnvironmentLight, Material};
use crate::math::{Spectrum, Vec3};

/// Pinhole camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_degrees: f64,
    forward: Vec3,
    right: Vec3,
    true_up: Vec3,
    tan_half: f64,
}

impl Camera {
    pub fn new(position: Vec3, look_at: Vec3, up: Vec3, fov_degrees: f64) -> Result<Self> {
        let forward = look_at - position;
        if !(forward.length() > 0.0) || !position.is_finite() || !look_at.is_finite() {
            return Err(Error::InvalidScene("camera position and look_at must differ".into()));
        }
        if !(fov_degrees > 0.0 && fov_degrees < 180.0) {
            return Err(Error::InvalidScene(format!("camera fov {fov_degrees} outside (0, 180)")));
        }
        let forward = forward.normalized();
        let right = forward.cross(up);
        if right.length() < 1e-9 {
            return Err(Error::InvalidScene("camera up is parallel to the view direction".into()));
        }
        let right = right.normalized();
        let true_up = right.cross(forward);
        Ok(Camera {
            position,
            look_at,
            up,
            fov_degrees,
            forward,
            right,
            true_up,
            tan_half: (fov_degrees.to_radians() * 0.5).tan(),
        })
    }

    /// Primary ray through image position `(px + jx, py + jy)`; row 0 is the top.
    pub fn generate_ray(&self, px: usize, py: usize, width: usize, height: usize, jx: f64, jy: f64) -> Ray {
        let aspect = width as f64 / height as f64;
        let sx = ((px as f64 + jx) / width as f64 * 2.0 - 1.0) * self.tan_half * aspect;
        let sy = (1.0 - (py as f64 + jy) / height as f64 * 2.0) * self.tan_half;
        let dir = (self.forward + self.right * sx + self.true_up * sy).normalized();
        Ray::new(self.position, dir)
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub camera: Camera,
    pub materials: Vec<Material>,
    pub material_names: Vec<String>,
    pub primitives: Vec<Primitive>,
    pub lights: Vec<AreaLight>,
    pub environment: Option<EnvironmentLight>,
    bvh: Bvh,
    bounds: Aabb,
    epsilon: f64,
}

impl Scene {
    /// Validates the inputs, derives one area light per emissive primitive and builds the BVH.
    pub fn new(
        camera: Camera,
        materials: Vec<(String, Material)>,
        primitives: Vec<Primitive>,
        environment: Option<EnvironmentLight>,
    ) -> Result<Scene> {
        if primitives.is_empty() {
            return Err(Error::EmptyScene);
        }
        for (name, m) in &materials {
            if !m.albedo.is_valid() || m.albedo.max_norm() > 1.0 {
                return Err(Error::InvalidScene(format!("material `{name}`: albedo must lie in [0,1]^3")));
            }
            if !m.emission.is_valid() {
                return Err(Error::InvalidScene(format!("material `{name}`: emission must be finite and >= 0")));
            }
            if let Some(e) = m.phong_exponent {
                if !(e.is_finite() && e >= 0.0) {
                    return Err(Error::InvalidScene(format!("material `{name}`: phong exponent must be >= 0")));
                }
            }
        }
        for (index, p) in primitives.iter().enumerate() {
            p.shape.validate().map_err(|reason| Error::DegeneratePrimitive { index, reason })?;
            if p.material >= materials.len() {
                return Err(Error::UnknownMaterial { index, name: format!("#{}", p.material) });
            }
        }
        if let Some(env) = &environment {
            if !env.is_valid() {
                return Err(Error::InvalidScene("environment texels must be finite, >= 0 and match the lattice size".into()));
            }
        }
        let (material_names, materials): (Vec<String>, Vec<Material>) = materials.into_iter().unzip();
        let lights = primitives
            .iter()
            .enumerate()
            .filter(|(_, p)| materials[p.material].is_emissive())
            .map(|(i, p)| AreaLight { primitive_id: i, emission: materials[p.material].emission, area: p.area })
            .collect();
        let bvh = Bvh::build(&primitives)?;
        let bounds = bvh.root_bounds();
        let epsilon = 1e-4 * bounds.diagonal().max(1e-3);
        Ok(Scene { camera, materials, material_names, primitives, lights, environment, bvh, bounds, epsilon })
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Ray offset distance: 1e-4 of the scene diagonal.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn total_area(&self) -> f64 {
        self.primitives.iter().map(|p| p.area).sum()
    }

    #[inline]
    pub fn material(&self, primitive_id: usize) -> &Material {
        &self.materials[self.primitives[primitive_id].material]
    }

    /// Hitpoint function h(x, ω).
    #[inline]
    pub fn intersect(&self, ray: &Ray) -> Hit {
        match self.bvh.intersect(&self.primitives, ray) {
            Some(h) => Hit::Surface(h),
            None if self.environment.is_some() => Hit::Environment,
            None => Hit::Escaped,
        }
    }

    /// True iff geometry blocks the open segment between `a` and `b`
    /// (endpoints shrunk by the scene epsilon).
    pub fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let dist = d.length();
        if dist <= 2.0 * self.epsilon {
            return false;
        }
        let ray = Ray::segment(a, d / dist, self.epsilon, dist - self.epsilon);
        self.bvh.intersects_any(&self.primitives, &ray)
    }

    /// True iff a ray from `origin` toward `dir` leaves the scene unblocked.
    pub fn escapes(&self, origin: Vec3, dir: Vec3) -> bool {
        let ray = Ray::segment(origin, dir, self.epsilon, f64::INFINITY);
        !self.bvh.intersects_any(&self.primitives, &ray)
    }

    /// Ray leaving a surface point, offset along the normal toward the side of `dir`.
    #[inline]
    pub fn spawn_ray(&self, point: Vec3, geometric_normal: Vec3, dir: Vec3) -> Ray {
        let side = if geometric_normal.dot(dir) >= 0.0 { geometric_normal } else { -geometric_normal };
        Ray::new(point + side * self.epsilon, dir)
    }

    /// Surface point pushed off the surface toward `toward` side.
    #[inline]
    pub fn offset_point(&self, point: Vec3, geometric_normal: Vec3, toward: Vec3) -> Vec3 {
        let side = if geometric_normal.dot(toward) >= 0.0 { geometric_normal } else { -geometric_normal };
        point + side * self.epsilon
    }

    pub fn environment_radiance(&self, dir: Vec3) -> Spectrum {
        self.environment.as_ref().map_or(Spectrum::BLACK, |e| e.radiance(dir))
    }

    pub fn material_index(&self, name: &str) -> Option<usize> {
        self.material_names.iter().position(|n| n == name)
    }
}
