//! Bundled example scenes.

use std::collections::BTreeMap;

use crate::math::{Spectrum, Vec3};
use crate::scene_file::{CameraSpec, EnvironmentSpec, LatticeSpec, MaterialSpec, Preset, PrimitiveSpec, SceneFile};

pub const NAMES: [&str; 5] = ["furnace", "cornell", "door", "manylights", "sunsky"];

pub fn by_name(name: &str) -> Option<SceneFile> {
    match name {
        "furnace" => Some(furnace()),
        "cornell" => Some(cornell()),
        "door" => Some(door()),
        "manylights" => Some(manylights()),
        "sunsky" => Some(sunsky()),
        _ => None,
    }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn diffuse(name: &str, albedo: Spectrum) -> MaterialSpec {
    MaterialSpec { name: name.into(), albedo, emission: Spectrum::BLACK, phong_exponent: None }
}

fn emitter(name: &str, emission: Spectrum) -> MaterialSpec {
    MaterialSpec { name: name.into(), albedo: Spectrum::BLACK, emission, phong_exponent: None }
}

/// Parallelogram whose front side faces `facing`.
fn rect(corner: Vec3, e1: Vec3, e2: Vec3, facing: Vec3, material: &str) -> PrimitiveSpec {
    if e1.cross(e2).dot(facing) >= 0.0 {
        PrimitiveSpec::quad(corner, e1, e2, material)
    } else {
        PrimitiveSpec::quad(corner, e2, e1, material)
    }
}

/// Axis-aligned rectangle in the plane `axis = at`, spanning `[a0,a1] × [b0,b1]`
/// on the other two axes in cyclic order, facing `sign` along `axis`.
fn plane(axis: usize, at: f64, (a0, a1): (f64, f64), (b0, b1): (f64, f64), sign: f64, material: &str) -> PrimitiveSpec {
    let put = |a: f64, b: f64| {
        let mut p = [0.0; 3];
        p[axis] = at;
        p[(axis + 1) % 3] = a;
        p[(axis + 2) % 3] = b;
        Vec3::from(p)
    };
    let corner = put(a0, b0);
    let e1 = put(a1, b0) - corner;
    let e2 = put(a0, b1) - corner;
    let mut facing = [0.0; 3];
    facing[axis] = sign;
    rect(corner, e1, e2, Vec3::from(facing), material)
}

/// Inward-facing walls of an axis-aligned box (all six unless `open_front`, which drops z = min).
fn room(min: Vec3, max: Vec3, material: &str, open_front: bool) -> Vec<PrimitiveSpec> {
    let mut out = vec![
        plane(1, min.y, (min.z, max.z), (min.x, max.x), 1.0, material),
        plane(1, max.y, (min.z, max.z), (min.x, max.x), -1.0, material),
        plane(0, min.x, (min.y, max.y), (min.z, max.z), 1.0, material),
        plane(0, max.x, (min.y, max.y), (min.z, max.z), -1.0, material),
        plane(2, max.z, (min.x, max.x), (min.y, max.y), -1.0, material),
    ];
    if !open_front {
        out.push(plane(2, min.z, (min.x, max.x), (min.y, max.y), 1.0, material));
    }
    out
}

fn presets(list: &[(&str, Preset)]) -> BTreeMap<String, Preset> {
    list.iter().map(|(n, p)| (n.to_string(), p.clone())).collect()
}

fn preset(width: usize, spp: u32, mode: &str) -> Preset {
    Preset { width: Some(width), height: Some(width), spp: Some(spp), mode: Some(mode.into()), ..Preset::default() }
}

/// Unit-albedo sphere in a constant white environment; every pixel converges to 1.
pub fn furnace() -> SceneFile {
    SceneFile {
        camera: CameraSpec { position: v(0.0, 0.0, -4.0), look_at: Vec3::ZERO, up: Vec3::Y, fov: 40.0 },
        materials: vec![diffuse("white", Spectrum::ONE)],
        primitives: vec![PrimitiveSpec::sphere(Vec3::ZERO, 1.0, "white")],
        environment: Some(EnvironmentSpec::Constant(Spectrum::ONE)),
        presets: presets(&[("default", preset(128, 1024, "bsdf")), ("preview", preset(32, 64, "rl"))]),
    }
}

/// Box with coloured side walls, a ceiling light and two spheres.
pub fn cornell() -> SceneFile {
    let mut primitives = room(Vec3::ZERO, v(2.0, 2.0, 2.0), "white", true);
    primitives[2] = plane(0, 0.0, (0.0, 2.0), (0.0, 2.0), 1.0, "red");
    primitives[3] = plane(0, 2.0, (0.0, 2.0), (0.0, 2.0), -1.0, "green");
    primitives.push(plane(1, 1.98, (0.75, 1.25), (0.75, 1.25), -1.0, "lamp"));
    primitives.push(PrimitiveSpec::sphere(v(0.6, 0.35, 1.3), 0.35, "white"));
    primitives.push(PrimitiveSpec::sphere(v(1.4, 0.35, 0.7), 0.35, "glossy"));
    SceneFile {
        camera: CameraSpec { position: v(1.0, 1.0, -2.2), look_at: v(1.0, 1.0, 0.0), up: Vec3::Y, fov: 45.0 },
        materials: vec![
            diffuse("white", Spectrum::gray(0.75)),
            diffuse("red", Spectrum::new(0.7, 0.1, 0.1)),
            diffuse("green", Spectrum::new(0.1, 0.6, 0.1)),
            MaterialSpec { phong_exponent: Some(40.0), ..diffuse("glossy", Spectrum::gray(0.8)) },
            emitter("lamp", Spectrum::gray(15.0)),
        ],
        primitives,
        environment: None,
        presets: presets(&[("default", preset(128, 256, "rl")), ("preview", preset(64, 32, "rl"))]),
    }
}

/// Two 2×2×2 rooms side by side, joined only by a narrow doorway. The light
/// is on the ceiling of room B; the camera looks around room A.
pub fn door() -> SceneFile {
    let (w0, w1) = (1.95, 2.05);
    let (z0, z1, top) = (0.8, 1.2, 1.4);
    let mut primitives = room(Vec3::ZERO, v(4.0, 2.0, 2.0), "wall", false);
    for (x, sign) in [(w0, -1.0), (w1, 1.0)] {
        primitives.push(plane(0, x, (0.0, 2.0), (0.0, z0), sign, "wall"));
        primitives.push(plane(0, x, (0.0, 2.0), (z1, 2.0), sign, "wall"));
        primitives.push(plane(0, x, (top, 2.0), (z0, z1), sign, "wall"));
    }
    // door jambs and lintel
    primitives.push(plane(2, z0, (w0, w1), (0.0, top), 1.0, "wall"));
    primitives.push(plane(2, z1, (w0, w1), (0.0, top), -1.0, "wall"));
    primitives.push(plane(1, top, (z0, z1), (w0, w1), -1.0, "wall"));
    // wall slab top and the floor under the doorway are covered by the room box
    primitives.push(plane(1, 1.99, (0.7, 1.3), (2.7, 3.3), -1.0, "lamp"));
    SceneFile {
        camera: CameraSpec { position: v(0.15, 1.5, 0.15), look_at: v(1.9, 0.5, 1.6), up: Vec3::Y, fov: 70.0 },
        materials: vec![diffuse("wall", Spectrum::gray(0.75)), emitter("lamp", Spectrum::gray(40.0))],
        primitives,
        environment: None,
        presets: presets(&[("default", preset(64, 64, "rl")), ("reference", preset(64, 4096, "bsdf"))]),
    }
}

/// Closed room with 32 small ceiling lights inside and 32 more mounted above
/// the ceiling, shining onto its outer side and invisible from inside.
pub fn manylights() -> SceneFile {
    let (sx, sy, sz) = (4.0, 2.0, 4.0);
    let mut primitives = room(Vec3::ZERO, v(sx, sy, sz), "wall", false);
    let size = 0.16;
    for i in 0..8 {
        for j in 0..4 {
            let x = 0.25 + i as f64 * 0.5 - size / 2.0;
            let z = 0.5 + j as f64 * 1.0 - size / 2.0;
            let lamp = if (i + j) % 2 == 0 { "lamp_a" } else { "lamp_b" };
            primitives.push(plane(1, sy - 0.01, (z, z + size), (x, x + size), -1.0, lamp));
            primitives.push(plane(1, sy + 0.1, (z, z + size), (x, x + size), -1.0, lamp));
        }
    }
    primitives.push(PrimitiveSpec::sphere(v(2.0, 0.5, 2.4), 0.5, "wall"));
    SceneFile {
        camera: CameraSpec { position: v(2.0, 1.2, 0.1), look_at: v(2.0, 0.6, 3.0), up: Vec3::Y, fov: 70.0 },
        materials: vec![
            diffuse("wall", Spectrum::gray(0.7)),
            emitter("lamp_a", Spectrum::gray(20.0)),
            emitter("lamp_b", Spectrum::new(25.0, 18.0, 12.0)),
        ],
        primitives,
        environment: None,
        presets: presets(&[("default", preset(64, 16, "nee_td"))]),
    }
}

pub const SUN_ROW: usize = 2;
pub const SUN_COL: usize = 0;
pub const SUN_RADIANCE: f64 = 300.0;

/// Ground plane under a constant sky with one very bright texel; an awning
/// shades the x < 0 half of the ground from that texel.
pub fn sunsky() -> SceneFile {
    let (w, h) = (8, 16);
    let rows = (0..h)
        .map(|r| {
            (0..w)
                .map(|c| if (r, c) == (SUN_ROW, SUN_COL) { Spectrum::new(SUN_RADIANCE, SUN_RADIANCE * 0.9, SUN_RADIANCE * 0.75) } else { Spectrum::new(0.8, 0.9, 1.0) })
                .collect()
        })
        .collect();
    SceneFile {
        camera: CameraSpec { position: v(0.0, 2.5, -7.0), look_at: v(0.0, 0.0, 0.0), up: Vec3::Y, fov: 55.0 },
        materials: vec![diffuse("ground", Spectrum::gray(0.5)), diffuse("awning", Spectrum::gray(0.4))],
        primitives: vec![
            plane(1, 0.0, (-6.0, 6.0), (-6.0, 6.0), 1.0, "ground"),
            plane(1, 1.5, (-6.0, 6.0), (-6.0, 0.0), -1.0, "awning"),
        ],
        environment: Some(EnvironmentSpec::Lattice(LatticeSpec { width: w, height: h, rows })),
        presets: presets(&[("default", preset(64, 64, "env_rl"))]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Hit, Ray};
    use crate::materials::sphere_direction;

    #[test]
    fn every_bundled_scene_builds() {
        for name in NAMES {
            let scene = by_name(name).unwrap().build().unwrap();
            assert!(!scene.primitives.is_empty(), "{name}");
        }
        assert!(by_name("missing").is_none());
    }

    #[test]
    fn light_counts() {
        assert_eq!(door().build().unwrap().lights.len(), 1);
        assert_eq!(manylights().build().unwrap().lights.len(), 64);
        assert_eq!(cornell().build().unwrap().lights.len(), 1);
    }

    #[test]
    fn door_rooms_connect_only_through_the_opening() {
        let scene = door().build().unwrap();
        let a = v(1.0, 0.7, 1.0);
        assert!(!scene.occluded(a, v(3.0, 0.7, 1.0)));
        assert!(scene.occluded(a, v(3.0, 0.7, 0.3)));
        assert!(scene.occluded(v(1.0, 1.2, 1.0), v(3.0, 1.9, 1.0)));
        // camera cannot see the light directly
        assert!(scene.occluded(v(0.15, 1.5, 0.15), v(3.0, 1.98, 1.0)));
    }

    #[test]
    fn room_normals_face_inward() {
        let scene = door().build().unwrap();
        let center = v(1.0, 1.0, 1.0);
        for dir in [Vec3::X, Vec3::Y, Vec3::Z, -Vec3::X, -Vec3::Y, -Vec3::Z] {
            match scene.intersect(&Ray::new(center, dir)) {
                Hit::Surface(s) => assert!(s.normal.dot(dir) < 0.0, "{dir:?}"),
                _ => panic!("room A must be closed"),
            }
        }
    }

    #[test]
    fn upper_lights_are_hidden_from_the_room() {
        let scene = manylights().build().unwrap();
        let x = v(1.3, 0.0, 2.1);
        let mut visible = 0;
        for light in &scene.lights {
            let (p, _) = scene.primitives[light.primitive_id].shape.sample_point(0.5, 0.5);
            if !scene.occluded(x, p) {
                visible += 1;
                assert!(p.y < 2.0);
            }
        }
        assert!(visible > 16);
    }

    #[test]
    fn awning_shades_half_the_ground_from_the_sun() {
        let scene = sunsky().build().unwrap();
        let tiles = crate::td_select::EnvTiles::new(8, 16).unwrap();
        let (p0, p1, c0, c1) = tiles.tile_bounds(SUN_COL + 8 * SUN_ROW);
        let sun = sphere_direction(0.5 * (p0 + p1), 0.5 * (c0 + c1));
        assert!(scene.environment_radiance(sun).r == SUN_RADIANCE);
        assert!(!scene.escapes(v(-3.0, 1e-3, 0.0), sun));
        assert!(scene.escapes(v(3.0, 1e-3, 0.0), sun));
    }
}
