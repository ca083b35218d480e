//! JSON scene description.
//!
//! ```json
//! {
//!   "camera": { "position": [0, 1, -4], "look_at": [0, 1, 0], "up": [0, 1, 0], "fov": 40 },
//!   "materials": [ { "name": "white", "albedo": [0.8, 0.8, 0.8] },
//!                  { "name": "lamp", "emission": [10, 10, 10] } ],
//!   "primitives": [ { "type": "quad", "corner": [0, 0, 0], "edge1": [0, 0, 1],
//!                     "edge2": [1, 0, 0], "material": "white" } ],
//!   "environment": { "constant": [1, 1, 1] },
//!   "presets": { "preview": { "width": 64, "height": 64, "spp": 16, "mode": "rl" } }
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Primitive, Shape};
use crate::integrator::{Mode, RenderConfig};
use crate::materials::{EnvironmentLight, Material};
use crate::math::{Spectrum, Vec3};
use crate::scene::{Camera, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub position: Vec3,
    pub look_at: Vec3,
    #[serde(default = "default_up")]
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov: f64,
}

fn default_up() -> Vec3 {
    Vec3::Y
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub name: String,
    #[serde(default)]
    pub albedo: Spectrum,
    #[serde(default)]
    pub emission: Spectrum,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phong_exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveSpec {
    Sphere { center: Vec3, radius: f64, material: String },
    Quad { corner: Vec3, edge1: Vec3, edge2: Vec3, material: String },
    Triangle { v0: Vec3, v1: Vec3, v2: Vec3, material: String },
}

impl PrimitiveSpec {
    pub fn material(&self) -> &str {
        match self {
            PrimitiveSpec::Sphere { material, .. }
            | PrimitiveSpec::Quad { material, .. }
            | PrimitiveSpec::Triangle { material, .. } => material,
        }
    }

    pub fn shape(&self) -> Shape {
        match *self {
            PrimitiveSpec::Sphere { center, radius, .. } => Shape::Sphere { center, radius },
            PrimitiveSpec::Quad { corner, edge1, edge2, .. } => Shape::Quad { corner, edge1, edge2 },
            PrimitiveSpec::Triangle { v0, v1, v2, .. } => Shape::Triangle { v0, v1, v2 },
        }
    }

    pub fn quad(corner: Vec3, edge1: Vec3, edge2: Vec3, material: &str) -> Self {
        PrimitiveSpec::Quad { corner, edge1, edge2, material: material.to_string() }
    }

    pub fn sphere(center: Vec3, radius: f64, material: &str) -> Self {
        PrimitiveSpec::Sphere { center, radius, material: material.to_string() }
    }
}

/// Lattice rows run from the zenith down; each row holds `width` texels over φ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub width: usize,
    pub height: usize,
    pub rows: Vec<Vec<Spectrum>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Constant(Spectrum),
    Lattice(LatticeSpec),
}

/// Named partial render settings; unset fields keep the caller's values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spp: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
}

impl Preset {
    pub fn apply(&self, config: &mut RenderConfig) -> Result<()> {
        if let Some(w) = self.width {
            config.width = w;
        }
        if let Some(h) = self.height {
            config.height = h;
        }
        if let Some(s) = self.spp {
            config.spp = s;
        }
        if let Some(m) = &self.mode {
            config.mode = m.parse::<Mode>()?;
        }
        if let Some(d) = self.max_depth {
            config.max_depth = d;
        }
        if let Some(p) = self.probes {
            config.probes = p;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub camera: CameraSpec,
    pub materials: Vec<MaterialSpec>,
    pub primitives: Vec<PrimitiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub presets: BTreeMap<String, Preset>,
}

impl SceneFile {
    pub fn parse(text: &str, origin: &Path) -> Result<SceneFile> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<SceneFile> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SceneFile::parse(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene files always serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Resolves material names and validates everything into a render scene.
    pub fn build(&self) -> Result<Scene> {
        let c = &self.camera;
        let camera = Camera::new(c.position, c.look_at, c.up, c.fov)?;
        let mut materials = Vec::with_capacity(self.materials.len());
        for m in &self.materials {
            if materials.iter().any(|(n, _): &(String, Material)| *n == m.name) {
                return Err(Error::InvalidScene(format!("material `{}` defined twice", m.name)));
            }
            let material = Material { albedo: m.albedo, emission: m.emission, phong_exponent: m.phong_exponent };
            materials.push((m.name.clone(), material));
        }
        let mut primitives = Vec::with_capacity(self.primitives.len());
        for (index, p) in self.primitives.iter().enumerate() {
            let name = p.material();
            let material = materials
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::UnknownMaterial { index, name: name.to_string() })?;
            let shape = p.shape();
            shape.validate().map_err(|reason| Error::DegeneratePrimitive { index, reason })?;
            primitives.push(Primitive::new(shape, material));
        }
        let environment = match &self.environment {
            None => None,
            Some(EnvironmentSpec::Constant(c)) => Some(EnvironmentLight::Constant(*c)),
            Some(EnvironmentSpec::Lattice(l)) => {
                if l.rows.len() != l.height || l.rows.iter().any(|r| r.len() != l.width) {
                    return Err(Error::InvalidScene(format!(
                        "environment lattice must have {} rows of {} texels",
                        l.height, l.width
                    )));
                }
                Some(EnvironmentLight::Lattice { width: l.width, height: l.height, texels: l.rows.concat() })
            }
        };
        Scene::new(camera, materials, primitives, environment)
    }

    pub fn preset(&self, name: &str) -> Result<&Preset> {
        self.presets.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.presets.keys().map(String::as_str).collect();
            Error::InvalidConfig(format!("unknown preset `{name}` (available: {})", known.join(", ")))
        })
    }

    /// Content hash of the canonical JSON form.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    SceneFile::load(path)?.build()
}
