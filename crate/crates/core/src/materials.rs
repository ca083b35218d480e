//! Scattering (f_s), emission (L_e) and light sampling.

use std::f64::consts::{FRAC_1_PI, PI, TAU};

use crate::geometry::Shape;
use crate::math::{Frame, Spectrum, Vec3};
use crate::sampling::{cosine_hemisphere_pdf, cosine_sample_hemisphere, direction_from_cos_phi};

/// Lambertian reflector, optionally replaced by an energy-normalized Phong lobe,
/// plus one-sided emission along the geometric normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub albedo: Spectrum,
    pub emission: Spectrum,
    pub phong_exponent: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsdfSample {
    pub wi: Vec3,
    pub pdf: f64,
    pub f: Spectrum,
}

impl Material {
    pub fn diffuse(albedo: Spectrum) -> Self {
        Material { albedo, emission: Spectrum::BLACK, phong_exponent: None }
    }

    pub fn emitter(emission: Spectrum) -> Self {
        Material { albedo: Spectrum::BLACK, emission, phong_exponent: None }
    }

    pub fn is_emissive(&self) -> bool {
        !self.emission.is_black()
    }

    pub fn is_lambertian(&self) -> bool {
        self.phong_exponent.is_none()
    }

    /// f_s(wi, wo). `frame.normal` is the shading side (facing `wo`).
    #[inline]
    pub fn bsdf_eval(&self, wi: Vec3, wo: Vec3, frame: &Frame) -> Spectrum {
        let cos_i = frame.cos_theta(wi);
        let cos_o = frame.cos_theta(wo);
        if cos_i <= 0.0 || cos_o <= 0.0 {
            return Spectrum::BLACK;
        }
        match self.phong_exponent {
            None => self.albedo * FRAC_1_PI,
            Some(e) => {
                let r = wo.reflect(frame.normal);
                let c = r.dot(wi);
                if c <= 0.0 {
                    Spectrum::BLACK
                } else {
                    self.albedo * ((e + 2.0) / TAU * c.powf(e))
                }
            }
        }
    }

    /// Luminance of f_s for a Lambertian material, independent of directions.
    #[inline]
    pub fn lambertian_luminance(&self) -> f64 {
        self.albedo.luminance() * FRAC_1_PI
    }

    /// Solid-angle density of [`bsdf_sample`](Self::bsdf_sample) producing `wi`.
    pub fn bsdf_pdf(&self, wi: Vec3, wo: Vec3, frame: &Frame) -> f64 {
        match self.phong_exponent {
            None => cosine_hemisphere_pdf(frame.cos_theta(wi)),
            Some(e) => {
                if frame.cos_theta(wo) <= 0.0 {
                    return 0.0;
                }
                let c = wo.reflect(frame.normal).dot(wi);
                if c <= 0.0 {
                    0.0
                } else {
                    (e + 1.0) / TAU * c.powf(e)
                }
            }
        }
    }

    /// Importance-samples f_s·cos (Lambertian) or the Phong lobe around the
    /// mirror direction. Directions below the surface return f = 0.
    pub fn bsdf_sample(&self, wo: Vec3, frame: &Frame, u: f64, v: f64) -> BsdfSample {
        match self.phong_exponent {
            None => {
                let (local, pdf) = cosine_sample_hemisphere(u, v);
                BsdfSample { wi: frame.to_world(local), pdf, f: self.albedo * FRAC_1_PI }
            }
            Some(e) => {
                let r = wo.reflect(frame.normal);
                let lobe = Frame::from_normal(r);
                let cos_a = u.powf(1.0 / (e + 1.0));
                let wi = lobe.to_world(direction_from_cos_phi(cos_a, TAU * v));
                let pdf = (e + 1.0) / TAU * cos_a.powf(e);
                BsdfSample { wi, pdf, f: self.bsdf_eval(wi, wo, frame) }
            }
        }
    }

    /// L_e leaving the surface toward `wo`; only the front side emits.
    #[inline]
    pub fn emitted(&self, wo: Vec3, normal: Vec3) -> Spectrum {
        if wo.dot(normal) > 0.0 {
            self.emission
        } else {
            Spectrum::BLACK
        }
    }
}

/// One emissive primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaLight {
    pub primitive_id: usize,
    pub emission: Spectrum,
    pub area: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightSample {
    pub point: Vec3,
    pub normal: Vec3,
    pub pdf_area: f64,
}

impl AreaLight {
    /// Uniform point on the light's surface; `pdf_area = 1/area`.
    pub fn sample(&self, shape: &Shape, u: f64, v: f64) -> LightSample {
        let (point, normal) = shape.sample_point(u, v);
        LightSample { point, normal, pdf_area: 1.0 / self.area }
    }

    pub fn emitted(&self, wo: Vec3, normal: Vec3) -> Spectrum {
        if wo.dot(normal) > 0.0 {
            self.emission
        } else {
            Spectrum::BLACK
        }
    }
}

/// Direction ↔ (φ, cos θ) parameterization of the environment sphere.
/// World +y is the zenith; φ = atan2(z, x) in [0, 2π).
#[inline]
pub fn sphere_coords(dir: Vec3) -> (f64, f64) {
    // `+ 0.0` folds negative zeros so the poles map to φ = 0
    let mut phi = (dir.z + 0.0).atan2(dir.x + 0.0);
    if phi < 0.0 {
        phi += TAU;
    }
    if phi >= TAU {
        phi = 0.0;
    }
    (phi, dir.y.clamp(-1.0, 1.0))
}

#[inline]
pub fn sphere_direction(phi: f64, cos_theta: f64) -> Vec3 {
    let local = direction_from_cos_phi(cos_theta, phi);
    // local z is the zenith; map to world y
    Vec3::new(local.x, local.z, local.y)
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvironmentLight {
    Constant(Spectrum),
    /// Equal-solid-angle texels: `width` columns over φ and `height` rows over
    /// cos θ, row 0 at the zenith.
    Lattice { width: usize, height: usize, texels: Vec<Spectrum> },
}

impl EnvironmentLight {
    #[inline]
    pub fn radiance(&self, dir: Vec3) -> Spectrum {
        match self {
            EnvironmentLight::Constant(c) => *c,
            EnvironmentLight::Lattice { width, height, texels } => {
                let (phi, cos) = sphere_coords(dir);
                let col = ((phi / TAU * *width as f64) as usize).min(width - 1);
                let row = (((1.0 - cos) * 0.5 * *height as f64) as usize).min(height - 1);
                texels[row * width + col]
            }
        }
    }

    /// Mean luminance over the region `phi ∈ [phi0, phi1)`, `cos θ ∈ [cos0, cos1)`,
    /// by midpoint quadrature (exact for texel-aligned regions).
    pub fn mean_luminance(&self, phi0: f64, phi1: f64, cos0: f64, cos1: f64) -> f64 {
        match self {
            EnvironmentLight::Constant(c) => c.luminance(),
            EnvironmentLight::Lattice { .. } => {
                const M: usize = 16;
                let mut sum = 0.0;
                for i in 0..M {
                    for j in 0..M {
                        let phi = phi0 + (phi1 - phi0) * (i as f64 + 0.5) / M as f64;
                        let cos = cos0 + (cos1 - cos0) * (j as f64 + 0.5) / M as f64;
                        sum += self.radiance(sphere_direction(phi, cos)).luminance();
                    }
                }
                sum / (M * M) as f64
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            EnvironmentLight::Constant(c) => c.is_valid(),
            EnvironmentLight::Lattice { width, height, texels } => {
                *width > 0 && *height > 0 && texels.len() == width * height && texels.iter().all(|t| t.is_valid())
            }
        }
    }

    /// Total power-like scale: ∫ luminance dω.
    pub fn integrated_luminance(&self) -> f64 {
        4.0 * PI * self.mean_luminance(0.0, TAU, -1.0, 1.0)
    }
}
