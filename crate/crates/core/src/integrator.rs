//! Progressive unidirectional path tracer with switchable scattering and
//! light-selection policies.
//!
//! One iteration traces one path per pixel. Guided modes update Q at the
//! previous vertex after every intersection and scatter from the probe CDFs;
//! NEE modes connect each vertex to one learned-selected light. All learned
//! CDFs are rebuilt at the end of an iteration.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Hit, Ray};
use crate::guiding::{AlphaSchedule, GuidingConfig, QField, SamplingMode, UpdatePolicy};
use crate::image::Image;
use crate::materials::Material;
use crate::math::{Frame, Spectrum, Vec3};
use crate::sampling::{DiscreteDistribution, RngStream, DEFAULT_RELATIVE_FLOOR};
use crate::scene::Scene;
use crate::td_select::{CellGrid, EnvTiles, TdTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Plain BSDF importance sampling.
    Bsdf,
    /// Guided by Q, expected-SARSA update.
    Rl,
    /// Guided by Q, max update.
    RlMax,
    /// BSDF scattering plus NEE with TD-learned light selection.
    NeeTd,
    /// Q-guided scattering plus TD-learned NEE.
    RlNeeTd,
    /// Environment NEE with per-cell learned tile selection.
    EnvRl,
    /// NEE with uniform light selection (baseline for `NeeTd`).
    NeeUniform,
    /// Environment NEE proportional to tile brightness (baseline for `EnvRl`).
    EnvIs,
}

impl Mode {
    pub const ALL: [Mode; 8] =
        [Mode::Bsdf, Mode::Rl, Mode::RlMax, Mode::NeeTd, Mode::RlNeeTd, Mode::EnvRl, Mode::NeeUniform, Mode::EnvIs];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Bsdf => "bsdf",
            Mode::Rl => "rl",
            Mode::RlMax => "rl_max",
            Mode::NeeTd => "nee_td",
            Mode::RlNeeTd => "rl_nee_td",
            Mode::EnvRl => "env_rl",
            Mode::NeeUniform => "nee_uniform",
            Mode::EnvIs => "env_is",
        }
    }

    pub fn guided(self) -> bool {
        matches!(self, Mode::Rl | Mode::RlMax | Mode::RlNeeTd)
    }

    pub fn light_nee(self) -> bool {
        matches!(self, Mode::NeeTd | Mode::RlNeeTd | Mode::NeeUniform)
    }

    pub fn learns_lights(self) -> bool {
        matches!(self, Mode::NeeTd | Mode::RlNeeTd)
    }

    pub fn env_nee(self) -> bool {
        matches!(self, Mode::EnvRl | Mode::EnvIs)
    }

    pub fn policy(self) -> UpdatePolicy {
        if self == Mode::RlMax {
            UpdatePolicy::QMax
        } else {
            UpdatePolicy::ExpectedSarsa
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Iterations; one path per pixel each.
    pub spp: u32,
    pub max_depth: u32,
    /// First vertex index at which Russian roulette applies.
    pub rr_depth: u32,
    pub mode: Mode,
    pub probes: usize,
    pub bands: usize,
    pub sectors: usize,
    pub alpha: AlphaSchedule,
    pub sampling: SamplingMode,
    /// Share of guided-mode directions drawn from the BSDF instead of the probe;
    /// the mixture density bounds path weights where the learned CDF is too thin.
    pub bsdf_fraction: f64,
    pub normal_cos_min: f64,
    pub grid: [usize; 3],
    /// Environment tiles along φ and along cos θ.
    pub env_tiles: [usize; 2],
    /// Relative CDF floor shared by all learned distributions.
    pub floor: f64,
    pub seed: u64,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    pub deterministic: bool,
    /// Stop learning (updates and CDF rebuilds) after this many iterations.
    pub freeze_after: Option<u32>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        let g = GuidingConfig::default();
        RenderConfig {
            width: 128,
            height: 128,
            spp: 64,
            max_depth: 32,
            rr_depth: 5,
            mode: Mode::Bsdf,
            probes: g.probe_count,
            bands: g.bands,
            sectors: g.sectors,
            alpha: g.alpha,
            sampling: g.sampling,
            bsdf_fraction: 0.25,
            normal_cos_min: g.normal_cos_min,
            grid: [16, 16, 16],
            env_tiles: [8, 16],
            floor: DEFAULT_RELATIVE_FLOOR,
            seed: 1,
            threads: 0,
            deterministic: false,
            freeze_after: None,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} must be positive", self.width, self.height));
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1".into());
        }
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return bad(format!("floor {} must be positive", self.floor));
        }
        if self.probes == 0 || self.bands == 0 || self.sectors == 0 {
            return bad("probe count and strata must be positive".into());
        }
        if self.grid.contains(&0) || self.env_tiles.contains(&0) {
            return bad("grid and tile resolutions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.bsdf_fraction) {
            return bad(format!("bsdf fraction {} must lie in [0, 1)", self.bsdf_fraction));
        }
        self.alpha.validate()
    }

    pub fn guiding_config(&self) -> GuidingConfig {
        GuidingConfig {
            bands: self.bands,
            sectors: self.sectors,
            probe_count: self.probes,
            normal_cos_min: self.normal_cos_min,
            policy: self.mode.policy(),
            sampling: self.sampling,
            alpha: self.alpha,
            relative_floor: self.floor,
        }
    }

    /// Every setting as `(key, value)`, for self-describing output headers.
    pub fn describe(&self) -> Vec<(&'static str, String)> {
        let sampling = match self.sampling {
            SamplingMode::ProportionalQ => "q",
            SamplingMode::ProportionalQBsdfCos => "q_cos",
        };
        vec![
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("spp", self.spp.to_string()),
            ("max_depth", self.max_depth.to_string()),
            ("rr_depth", self.rr_depth.to_string()),
            ("mode", self.mode.to_string()),
            ("probes", self.probes.to_string()),
            ("strata", format!("{}x{}", self.bands, self.sectors)),
            ("alpha", self.alpha.to_string()),
            ("sampling", sampling.to_string()),
            ("bsdf_fraction", self.bsdf_fraction.to_string()),
            ("normal_cos_min", self.normal_cos_min.to_string()),
            ("grid", format!("{},{},{}", self.grid[0], self.grid[1], self.grid[2])),
            ("env_tiles", format!("{}x{}", self.env_tiles[0], self.env_tiles[1])),
            ("floor", self.floor.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("freeze_after", self.freeze_after.map_or("none".to_string(), |f| f.to_string())),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IterationStats {
    pub iteration: u32,
    pub paths: u64,
    pub nonzero_paths: u64,
    pub avg_path_length: f64,
    pub ms_elapsed: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderTotals {
    pub paths: u64,
    pub nonzero_paths: u64,
    pub path_length_sum: u64,
    pub nan_paths: u64,
    pub q_updates: u64,
    /// Guided vertices without a compatible probe (scattered by the BSDF instead).
    pub lookup_failures: u64,
    pub light_updates: u64,
}

impl RenderTotals {
    pub fn nonzero_fraction(&self) -> f64 {
        if self.paths == 0 {
            0.0
        } else {
            self.nonzero_paths as f64 / self.paths as f64
        }
    }

    pub fn avg_path_length(&self) -> f64 {
        if self.paths == 0 {
            0.0
        } else {
            self.path_length_sum as f64 / self.paths as f64
        }
    }
}

/// Per-pixel running means plus a luminance second moment for error bars.
#[derive(Clone, Debug)]
pub struct Accumulator {
    width: usize,
    height: usize,
    mean: Vec<Spectrum>,
    lum_mean: Vec<f64>,
    lum_m2: Vec<f64>,
    count: u64,
}

impl Accumulator {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Accumulator { width, height, mean: vec![Spectrum::BLACK; n], lum_mean: vec![0.0; n], lum_m2: vec![0.0; n], count: 0 }
    }

    /// Adds one sample to every pixel.
    pub fn add_frame(&mut self, samples: &[Spectrum]) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for (i, &s) in samples.iter().enumerate() {
            self.mean[i] = self.mean[i] + (s - self.mean[i]) * inv;
            let l = s.luminance();
            let delta = l - self.lum_mean[i];
            self.lum_mean[i] += delta * inv;
            self.lum_m2[i] += delta * (l - self.lum_mean[i]);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn image(&self) -> Image {
        Image::from_pixels(self.width, self.height, self.mean.clone()).expect("accumulator size matches")
    }

    /// Standard error of each pixel's mean luminance.
    pub fn std_error(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.count as f64;
        self.lum_m2.iter().map(|m2| (m2 / (n - 1.0) / n).sqrt()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSample {
    pub radiance: Spectrum,
    /// Number of traced segments.
    pub length: u32,
    pub nan: bool,
}

impl PathSample {
    pub fn nonzero(&self) -> bool {
        !self.radiance.is_black()
    }
}

struct Vertex {
    probe: Option<(usize, Frame)>,
    cell: usize,
    scatter_pdf: f64,
}

/// Environment tile selection: learned per cell or brightness-proportional.
enum EnvSelector {
    Learned(TdTable),
    Brightness(DiscreteDistribution),
}

pub struct Renderer<'s> {
    scene: &'s Scene,
    config: RenderConfig,
    qfield: Option<QField>,
    lights: Option<TdTable>,
    env: Option<EnvSelector>,
    tiles: EnvTiles,
    accum: Accumulator,
    iteration: u32,
    stats: Vec<IterationStats>,
    totals: RenderTotals,
    lookup_failures: AtomicU64,
    pool: Option<rayon::ThreadPool>,
}

impl<'s> Renderer<'s> {
    pub fn new(scene: &'s Scene, config: RenderConfig) -> Result<Self> {
        config.validate()?;
        let mode = config.mode;
        let qfield = if mode.guided() { Some(QField::place_probes(scene, config.guiding_config())?) } else { None };
        let cells = CellGrid::new(scene.bounds(), config.grid)?;
        let lights = if mode.light_nee() && !scene.lights.is_empty() {
            Some(TdTable::new(cells, scene.lights.len(), config.alpha, config.floor)?)
        } else {
            None
        };
        let tiles = EnvTiles::new(config.env_tiles[0], config.env_tiles[1])?;
        let env = match (&scene.environment, mode) {
            (Some(e), Mode::EnvRl) => Some(EnvSelector::Learned(
                TdTable::new(cells, tiles.len(), config.alpha, config.floor)?.with_prior(tiles.brightness(e))?,
            )),
            (Some(e), Mode::EnvIs) => Some(EnvSelector::Brightness(tiles.brightness_distribution(e, config.floor)?)),
            _ => None,
        };
        let pool = if config.deterministic || config.threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
            )
        };
        Ok(Renderer {
            scene,
            accum: Accumulator::new(config.width, config.height),
            config,
            qfield,
            lights,
            env,
            tiles,
            iteration: 0,
            stats: Vec::new(),
            totals: RenderTotals::default(),
            lookup_failures: AtomicU64::new(0),
            pool,
        })
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }

    pub fn qfield(&self) -> Option<&QField> {
        self.qfield.as_ref()
    }

    pub fn light_table(&self) -> Option<&TdTable> {
        self.lights.as_ref()
    }

    pub fn env_table(&self) -> Option<&TdTable> {
        match &self.env {
            Some(EnvSelector::Learned(t)) => Some(t),
            _ => None,
        }
    }

    pub fn tiles(&self) -> &EnvTiles {
        &self.tiles
    }

    pub fn accumulator(&self) -> &Accumulator {
        &self.accum
    }

    pub fn image(&self) -> Image {
        self.accum.image()
    }

    pub fn stats(&self) -> &[IterationStats] {
        &self.stats
    }

    pub fn totals(&self) -> RenderTotals {
        let mut t = self.totals;
        t.lookup_failures = self.lookup_failures.load(Ordering::Relaxed);
        t.q_updates = self.qfield.as_ref().map_or(0, |q| q.counters().updates);
        t.light_updates = self.lights.as_ref().map_or(0, |l| l.updates())
            + self.env_table().map_or(0, |l| l.updates());
        t
    }

    pub fn learning(&self) -> bool {
        self.config.freeze_after.is_none_or(|f| self.iteration < f)
    }

    /// Smallest probability-to-floor-share ratio over every learned CDF
    /// (probe strata, cell lights, cell tiles); ≥ 1 means ergodic.
    pub fn min_floor_ratio(&self) -> f64 {
        let mut r = f64::INFINITY;
        if let Some(q) = &self.qfield {
            r = r.min(q.min_floor_ratio());
        }
        if let Some(l) = &self.lights {
            r = r.min(l.min_floor_ratio());
        }
        if let Some(t) = self.env_table() {
            r = r.min(t.min_floor_ratio());
        }
        r
    }

    /// Renders all remaining iterations.
    pub fn run(&mut self) -> Result<()> {
        while self.iteration < self.config.spp {
            self.run_iteration()?;
        }
        Ok(())
    }

    pub fn run_iteration(&mut self) -> Result<()> {
        let start = Instant::now();
        let learn = self.learning();
        let (w, h) = (self.config.width, self.config.height);
        let iteration = self.iteration;
        let samples: Vec<PathSample> = {
            let this = &*self;
            let trace = |i: usize| this.trace_pixel(i % w, i / w, iteration, learn);
            match &self.pool {
                None => (0..w * h).map(trace).collect(),
                Some(pool) => pool.install(|| (0..w * h).into_par_iter().map(trace).collect()),
            }
        };
        let mut nonzero = 0u64;
        let mut length = 0u64;
        let mut radiance = Vec::with_capacity(samples.len());
        for s in &samples {
            nonzero += s.nonzero() as u64;
            length += s.length as u64;
            self.totals.nan_paths += s.nan as u64;
            radiance.push(s.radiance);
        }
        self.accum.add_frame(&radiance);
        let paths = samples.len() as u64;
        self.totals.paths += paths;
        self.totals.nonzero_paths += nonzero;
        self.totals.path_length_sum += length;
        if learn {
            if let Some(q) = &mut self.qfield {
                q.rebuild_distributions();
            }
            if let Some(l) = &mut self.lights {
                l.rebuild();
            }
            if let Some(EnvSelector::Learned(t)) = &mut self.env {
                t.rebuild();
            }
        }
        self.iteration += 1;
        self.stats.push(IterationStats {
            iteration,
            paths,
            nonzero_paths: nonzero,
            avg_path_length: if paths == 0 { 0.0 } else { length as f64 / paths as f64 },
            ms_elapsed: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    fn trace_pixel(&self, px: usize, py: usize, iteration: u32, learn: bool) -> PathSample {
        let pixel = (py * self.config.width + px) as u32;
        let mut rng = RngStream::new(self.config.seed, iteration, pixel);
        let (jx, jy) = (rng.next_f64(), rng.next_f64());
        let ray = self.scene.camera.generate_ray(px, py, self.config.width, self.config.height, jx, jy);
        self.trace_path(ray, &mut rng, learn)
    }

    /// One path starting with `ray`.
    pub fn trace_path(&self, mut ray: Ray, rng: &mut RngStream, learn: bool) -> PathSample {
        let scene = self.scene;
        let mode = self.config.mode;
        let light_nee = self.lights.is_some();
        let mut throughput = Spectrum::ONE;
        let mut radiance = Spectrum::BLACK;
        let mut length = 0;
        let mut prev: Option<Vertex> = None;
        for depth in 0..self.config.max_depth {
            let hit = scene.intersect(&ray);
            length += 1;
            // one lookup at y serves both the bootstrap target and the guided sample
            let y_probe = match (&self.qfield, &hit) {
                (Some(q), Hit::Surface(s)) if !scene.material(s.primitive_id).albedo.is_black() => {
                    let n = if s.normal.dot(ray.dir) <= 0.0 { s.normal } else { -s.normal };
                    q.lookup(s.point, n)
                }
                _ => None,
            };
            if learn {
                if let (Some(q), Some(Vertex { probe: Some((id, frame)), .. })) = (&self.qfield, &prev) {
                    let _ = q.update_resolved(scene, *id, frame, ray.dir, &hit, y_probe, rng);
                }
            }
            let s = match hit {
                Hit::Environment => {
                    let le = scene.environment_radiance(ray.dir);
                    let weight = match (&prev, &self.env) {
                        (Some(v), Some(_)) => {
                            let p_env = self.env_pdf(v.cell, ray.dir);
                            v.scatter_pdf / (v.scatter_pdf + p_env)
                        }
                        _ => 1.0,
                    };
                    radiance += throughput * le * weight;
                    break;
                }
                Hit::Escaped => break,
                Hit::Surface(s) => s,
            };
            let material = scene.material(s.primitive_id);
            let wo = -ray.dir;
            if material.is_emissive() {
                // with light NEE, emitters reached by scattering were already counted
                if !(light_nee && depth > 0) {
                    radiance += throughput * material.emitted(wo, s.normal);
                }
                break;
            }
            if material.albedo.is_black() {
                break;
            }
            let n = if s.normal.dot(wo) >= 0.0 { s.normal } else { -s.normal };
            if self.qfield.is_some() && y_probe.is_none() {
                self.lookup_failures.fetch_add(1, Ordering::Relaxed);
            }
            let probe = y_probe;
            let frame = match (probe, &self.qfield) {
                (Some(id), Some(q)) => q.probe(id).frame_at(n),
                _ => Frame::from_normal(n),
            };
            let cell = self.lights.as_ref().map_or(0, |l| l.cell_of(s.point));
            let env_cell = self.env_table().map_or(0, |t| t.cell_of(s.point));
            if let Some(lights) = &self.lights {
                let c = self.next_event(lights, cell, s.point, s.normal, &frame, material, wo, rng, learn && mode.learns_lights());
                radiance += throughput * c;
            }
            if self.env.is_some() {
                let c = self.env_next_event(env_cell, s.point, s.normal, &frame, material, wo, probe, rng, learn);
                radiance += throughput * c;
            }

            let (wi, pdf, f) = match (probe, &self.qfield) {
                (Some(id), Some(q)) => {
                    let beta = self.config.bsdf_fraction;
                    let (u0, u1, u2) = (rng.next_f64(), rng.next_f64(), rng.next_f64());
                    let wi = if u0 < beta {
                        material.bsdf_sample(wo, &frame, u1, u2).wi
                    } else {
                        q.sample_direction(id, &frame, (u0 - beta) / (1.0 - beta), u1, u2).0
                    };
                    (wi, self.scatter_pdf(probe, &frame, material, wi, wo), material.bsdf_eval(wi, wo, &frame))
                }
                _ => {
                    let b = material.bsdf_sample(wo, &frame, rng.next_f64(), rng.next_f64());
                    (b.wi, b.pdf, b.f)
                }
            };
            let cos = frame.cos_theta(wi);
            if !(pdf > 0.0) || cos <= 0.0 || f.is_black() {
                break;
            }
            throughput *= f * (cos / pdf);

            prev = Some(Vertex { probe: probe.map(|id| (id, frame)), cell: env_cell, scatter_pdf: pdf });
            if depth + 1 >= self.config.rr_depth {
                let survive = throughput.max_norm().min(1.0);
                if rng.next_f64() >= survive {
                    break;
                }
                throughput = throughput / survive;
            }
            ray = scene.spawn_ray(s.point, s.normal, wi);
        }
        if radiance.is_finite() {
            PathSample { radiance, length, nan: false }
        } else {
            PathSample { radiance: Spectrum::BLACK, length, nan: true }
        }
    }

    /// Direct light from one selected area light, divided by its selection
    /// probability; feeds the undivided contribution to the selection table.
    #[allow(clippy::too_many_arguments)]
    fn next_event(
        &self,
        lights: &TdTable,
        cell: usize,
        point: Vec3,
        geometric_normal: Vec3,
        frame: &Frame,
        material: &Material,
        wo: Vec3,
        rng: &mut RngStream,
        learn: bool,
    ) -> Spectrum {
        let scene = self.scene;
        let (l, p_select) = lights.select(cell, rng.next_f64());
        let light = &scene.lights[l];
        let ls = light.sample(&scene.primitives[light.primitive_id].shape, rng.next_f64(), rng.next_f64());
        let d = ls.point - point;
        let dist2 = d.length_squared();
        let wi = d / dist2.sqrt();
        let cos_x = frame.cos_theta(wi);
        let cos_l = -ls.normal.dot(wi);
        let mut c = Spectrum::BLACK;
        if cos_x > 0.0 && cos_l > 0.0 && !scene.occluded(scene.offset_point(point, geometric_normal, wi), ls.point) {
            c = light.emission * material.bsdf_eval(wi, wo, frame) * (cos_x * cos_l / (dist2 * ls.pdf_area));
        }
        if learn {
            let _ = lights.update_value(cell, l, c);
        }
        c / p_select
    }

    fn env_pdf(&self, cell: usize, dir: Vec3) -> f64 {
        let tile = self.tiles.tile_of(dir);
        let p = match &self.env {
            Some(EnvSelector::Learned(t)) => t.probability(cell, tile),
            Some(EnvSelector::Brightness(d)) => d.probability(tile),
            None => return 0.0,
        };
        p * self.tiles.density_in_tile()
    }

    fn scatter_pdf(&self, probe: Option<usize>, frame: &Frame, material: &Material, wi: Vec3, wo: Vec3) -> f64 {
        match (probe, &self.qfield) {
            (Some(id), Some(q)) => {
                let beta = self.config.bsdf_fraction;
                let bsdf = if beta > 0.0 { beta * material.bsdf_pdf(wi, wo, frame) } else { 0.0 };
                (1.0 - beta) * q.pdf_direction(id, frame, wi) + bsdf
            }
            _ => material.bsdf_pdf(wi, wo, frame),
        }
    }

    /// Environment connection through one selected tile, MIS-weighted against
    /// the scattering pdf (balance heuristic).
    #[allow(clippy::too_many_arguments)]
    fn env_next_event(
        &self,
        cell: usize,
        point: Vec3,
        geometric_normal: Vec3,
        frame: &Frame,
        material: &Material,
        wo: Vec3,
        probe: Option<usize>,
        rng: &mut RngStream,
        learn: bool,
    ) -> Spectrum {
        let scene = self.scene;
        let u = rng.next_f64();
        let (tile, p_tile) = match &self.env {
            Some(EnvSelector::Learned(t)) => t.select(cell, u),
            Some(EnvSelector::Brightness(d)) => d.sample_clamped(u),
            None => return Spectrum::BLACK,
        };
        let (wi, density) = self.tiles.sample_dir_in_tile(tile, rng.next_f64(), rng.next_f64());
        let cos = frame.cos_theta(wi);
        let mut contribution = Spectrum::BLACK;
        let mut estimate = Spectrum::BLACK;
        if cos > 0.0 && scene.escapes(scene.offset_point(point, geometric_normal, wi), wi) {
            let lf = scene.environment_radiance(wi) * material.bsdf_eval(wi, wo, frame);
            contribution = lf * (cos / density);
            let p_nee = p_tile * density;
            let p_scatter = self.scatter_pdf(probe, frame, material, wi, wo);
            estimate = lf * (cos / (p_nee + p_scatter));
        }
        if learn {
            if let Some(EnvSelector::Learned(t)) = &self.env {
                let _ = t.update_value(cell, tile, contribution);
            }
        }
        estimate
    }
}

/// Renders `config.spp` iterations and returns the finished renderer.
pub fn render<'s>(scene: &'s Scene, config: RenderConfig) -> Result<Renderer<'s>> {
    let mut r = Renderer::new(scene, config)?;
    r.run()?;
    Ok(r)
}
