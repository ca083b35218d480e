//! The learned incident-radiance field Q.
//!
//! Probes are scattered over the scene surfaces with a Hammersley point set.
//! Each probe stores one value `Q_k` per equal-solid-angle stratum of its
//! hemisphere. A path tracer does two extra things per bounce:
//!
//! 1. after tracing `x → y`, it moves `Q_k(x)` toward `L_e(y) + ∫ Q(y) f_s cos`
//!    (expected SARSA; or toward the best single stratum for the Q-max variant);
//! 2. it scatters from `x` proportionally to `Q(x)` (optionally weighted by the
//!    cosine), using the CDF snapshot taken at the last rebuild.
//!
//! Updates are applied in place through atomics while rendering; CDFs are only
//! rebuilt between iterations, so the sampling pdf is constant during one.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use crate::atomic::{blend, AtomicF64};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Hit};
use crate::materials::Material;
use crate::math::{Frame, Vec3};
use crate::sampling::{direction_from_cos_phi, hammersley, DiscreteDistribution, RngStream, DEFAULT_RELATIVE_FLOOR};
use crate::scene::Scene;

/// Learning rate schedule shared by all temporal-difference tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    /// `α = 1 / (1 + visits)`; turns the update into a running mean.
    PerVisit,
}

impl AlphaSchedule {
    #[inline]
    pub fn alpha(&self, previous_visits: u32) -> f64 {
        match *self {
            AlphaSchedule::Constant(a) => a,
            AlphaSchedule::PerVisit => 1.0 / (1.0 + previous_visits as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AlphaSchedule::Constant(a) if !(a > 0.0 && a <= 1.0) => {
                Err(Error::InvalidConfig(format!("learning rate {a} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for AlphaSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlphaSchedule::Constant(a) => write!(f, "const:{a}"),
            AlphaSchedule::PerVisit => write!(f, "visits"),
        }
    }
}

impl std::str::FromStr for AlphaSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "visits" {
            return Ok(AlphaSchedule::PerVisit);
        }
        let value = s
            .strip_prefix("const:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidConfig(format!("alpha `{s}`: expected `const:F` or `visits`")))?;
        let schedule = AlphaSchedule::Constant(value);
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Which bootstrap target the Q update uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdatePolicy {
    /// Policy-weighted integral over the next hemisphere.
    ExpectedSarsa,
    /// Best single stratum of the next hemisphere.
    QMax,
}

/// How per-stratum sampling weights are derived from Q.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    ProportionalQ,
    /// `Q_k · cos θ̂_k` at stratum centers (f_s treated as constant per probe).
    ProportionalQBsdfCos,
}

/// Equal-solid-angle stratification: `bands` uniform steps in cos θ times
/// `sectors` uniform steps in φ. Stratum `k = sector + sectors·band`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HemisphereGrid {
    bands: usize,
    sectors: usize,
}

impl HemisphereGrid {
    pub fn new(bands: usize, sectors: usize) -> Result<Self> {
        if bands == 0 || sectors == 0 {
            return Err(Error::InvalidConfig(format!("hemisphere grid {bands}x{sectors} must be positive")));
        }
        Ok(HemisphereGrid { bands, sectors })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn sectors(&self) -> usize {
        self.sectors
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bands * self.sectors
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Solid angle of one stratum, `2π/n`.
    #[inline]
    pub fn stratum_solid_angle(&self) -> f64 {
        TAU / self.len() as f64
    }

    /// Stratum containing a local-frame direction with `z ≥ 0`.
    #[inline]
    pub fn stratum_of_local(&self, local: Vec3) -> usize {
        let band = ((local.z.max(0.0) * self.bands as f64) as usize).min(self.bands - 1);
        let mut phi = local.y.atan2(local.x);
        if phi < 0.0 {
            phi += TAU;
        }
        let sector = ((phi / TAU * self.sectors as f64) as usize).min(self.sectors - 1);
        sector + self.sectors * band
    }

    pub fn stratum_of(&self, frame: &Frame, dir: Vec3) -> Result<usize> {
        let local = frame.to_local(dir);
        if local.z < 0.0 {
            return Err(Error::BelowHorizon);
        }
        Ok(self.stratum_of_local(local))
    }

    /// Uniform local direction inside stratum `k` (no range check).
    #[inline]
    pub fn local_dir_in_stratum(&self, k: usize, u: f64, v: f64) -> Vec3 {
        let band = k / self.sectors;
        let sector = k % self.sectors;
        let cos_theta = (band as f64 + u) / self.bands as f64;
        let phi = (sector as f64 + v) / self.sectors as f64 * TAU;
        direction_from_cos_phi(cos_theta, phi)
    }

    /// Uniform direction over stratum `k`; the density within it is `n/(2π)`.
    pub fn uniform_dir_in_stratum(&self, frame: &Frame, k: usize, u: f64, v: f64) -> Result<(Vec3, f64)> {
        if k >= self.len() {
            return Err(Error::IndexOutOfRange { index: k, len: self.len() });
        }
        Ok((frame.to_world(self.local_dir_in_stratum(k, u, v)), 1.0 / self.stratum_solid_angle()))
    }

    #[inline]
    pub fn center_cos(&self, k: usize) -> f64 {
        ((k / self.sectors) as f64 + 0.5) / self.bands as f64
    }

    pub fn center_local(&self, k: usize) -> Vec3 {
        self.local_dir_in_stratum(k, 0.5, 0.5)
    }
}

/// A hemisphere of learned values attached to a surface point.
#[derive(Debug)]
pub struct Probe {
    pub position: Vec3,
    pub normal: Vec3,
    /// Tangent reference aligning φ = 0 between this probe and its queries.
    pub tangent: Vec3,
    q: Vec<AtomicF64>,
    visits: Vec<AtomicU32>,
}

impl Probe {
    fn new(position: Vec3, normal: Vec3, strata: usize) -> Self {
        Probe {
            position,
            normal,
            tangent: Frame::from_normal(normal).tangent,
            q: (0..strata).map(|_| AtomicF64::new(1.0)).collect(),
            visits: (0..strata).map(|_| AtomicU32::new(0)).collect(),
        }
    }

    #[inline]
    pub fn q(&self, k: usize) -> f64 {
        self.q[k].load()
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.q.iter().map(AtomicF64::load).collect()
    }

    pub fn visits(&self, k: usize) -> u32 {
        self.visits[k].load(Ordering::Relaxed)
    }

    /// Frame at a query point with normal `n`, φ aligned with this probe.
    #[inline]
    pub fn frame_at(&self, n: Vec3) -> Frame {
        Frame::with_reference(n, self.tangent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidingConfig {
    pub bands: usize,
    pub sectors: usize,
    pub probe_count: usize,
    /// Minimum cosine between a query normal and an eligible probe's normal.
    pub normal_cos_min: f64,
    pub policy: UpdatePolicy,
    pub sampling: SamplingMode,
    pub alpha: AlphaSchedule,
    /// CDF floor as a fraction of the mean sampling weight.
    pub relative_floor: f64,
}

impl Default for GuidingConfig {
    fn default() -> Self {
        GuidingConfig {
            bands: 8,
            sectors: 16,
            probe_count: 1024,
            normal_cos_min: 0.7,
            policy: UpdatePolicy::ExpectedSarsa,
            sampling: SamplingMode::ProportionalQBsdfCos,
            alpha: AlphaSchedule::PerVisit,
            relative_floor: DEFAULT_RELATIVE_FLOOR,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GuidingCounters {
    pub updates: u64,
    /// Updates skipped because no probe with a compatible normal exists.
    pub skipped: u64,
    /// Updates rejected because the target was not finite.
    pub rejected: u64,
}

#[derive(Debug)]
pub struct QField {
    grid: HemisphereGrid,
    probes: Vec<Probe>,
    distributions: Vec<DiscreteDistribution>,
    index: ProbeIndex,
    config: GuidingConfig,
    updates: AtomicU64,
    skipped: AtomicU64,
    rejected: AtomicU64,
}

impl QField {
    /// Places `config.probe_count` probes with the Hammersley set: the first
    /// coordinate picks a primitive through the area CDF (and, rescaled, is
    /// reused inside it), the radical inverse supplies the second coordinate.
    pub fn place_probes(scene: &Scene, config: GuidingConfig) -> Result<QField> {
        if config.probe_count == 0 {
            return Err(Error::InvalidConfig("probe count must be at least 1".into()));
        }
        if !(config.normal_cos_min > 0.0 && config.normal_cos_min < 1.0) {
            return Err(Error::InvalidConfig(format!("normal_cos_min {} outside (0,1)", config.normal_cos_min)));
        }
        config.alpha.validate()?;
        let grid = HemisphereGrid::new(config.bands, config.sectors)?;
        let areas: Vec<f64> = scene.primitives.iter().map(|p| p.area).collect();
        if !(areas.iter().sum::<f64>() > 0.0) {
            return Err(Error::ZeroArea);
        }
        // floor only guards against exact zeros; primitives are validated non-degenerate
        let area_cdf = DiscreteDistribution::new(&areas, f64::MIN_POSITIVE)?;
        let n = config.probe_count as u32;
        let mut probes = Vec::with_capacity(config.probe_count);
        for i in 0..n {
            let (u0, v) = hammersley(i, n)?;
            let (prim, p) = area_cdf.sample_clamped(u0);
            let start = if prim == 0 { 0.0 } else { area_cdf.cdf()[prim - 1] };
            let u = ((u0 - start) / p).clamp(0.0, 1.0 - f64::EPSILON);
            let (position, normal) = scene.primitives[prim].shape.sample_point(u, v);
            probes.push(Probe::new(position, normal, grid.len()));
        }
        Self::from_probes(grid, probes, config, scene.total_area())
    }

    /// Field over explicit probe positions and normals (all `Q_k = 1`).
    pub fn with_probes(points: &[(Vec3, Vec3)], config: GuidingConfig) -> Result<QField> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("at least one probe required".into()));
        }
        config.alpha.validate()?;
        let grid = HemisphereGrid::new(config.bands, config.sectors)?;
        let probes = points.iter().map(|&(p, n)| Probe::new(p, n.normalized(), grid.len())).collect();
        let bounds = points.iter().fold(Aabb::empty(), |b, (p, _)| b.grow(*p));
        let area = bounds.surface_area().max(1.0);
        Self::from_probes(grid, probes, config, area)
    }

    fn from_probes(grid: HemisphereGrid, probes: Vec<Probe>, config: GuidingConfig, surface_area: f64) -> Result<QField> {
        let index = ProbeIndex::build(&probes, surface_area);
        let mut field = QField {
            grid,
            distributions: Vec::new(),
            probes,
            index,
            config,
            updates: AtomicU64::new(0),
            skipped: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
        };
        field.rebuild_distributions();
        Ok(field)
    }

    pub fn grid(&self) -> &HemisphereGrid {
        &self.grid
    }

    pub fn config(&self) -> &GuidingConfig {
        &self.config
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn probe(&self, id: usize) -> &Probe {
        &self.probes[id]
    }

    pub fn distribution(&self, id: usize) -> &DiscreteDistribution {
        &self.distributions[id]
    }

    pub fn counters(&self) -> GuidingCounters {
        GuidingCounters {
            updates: self.updates.load(Ordering::Relaxed),
            skipped: self.skipped.load(Ordering::Relaxed),
            rejected: self.rejected.load(Ordering::Relaxed),
        }
    }

    /// Nearest probe whose normal is within `normal_cos_min` of `normal`;
    /// ties go to the lower probe index.
    pub fn lookup(&self, y: Vec3, normal: Vec3) -> Option<usize> {
        self.index.nearest(&self.probes, y, normal, self.config.normal_cos_min)
    }

    /// Stratum estimate of `∫ Q(y,ω_i) f_s(ω_i, y, wo) cos θ_i dω_i` using one
    /// uniform direction per stratum, collapsed to luminance.
    pub fn estimate_incident(&self, probe_id: usize, wo: Vec3, material: &Material, frame: &Frame, rng: &mut RngStream) -> f64 {
        let probe = &self.probes[probe_id];
        let n = self.grid.len();
        let mut sum = 0.0;
        if material.is_lambertian() {
            if frame.cos_theta(wo) <= 0.0 {
                return 0.0;
            }
            let bands = self.grid.bands as f64;
            for k in 0..n {
                let cos_k = ((k / self.grid.sectors) as f64 + rng.next_f64()) / bands;
                sum += probe.q(k) * cos_k;
            }
            sum *= material.lambertian_luminance();
        } else {
            for k in 0..n {
                let local = self.grid.local_dir_in_stratum(k, rng.next_f64(), rng.next_f64());
                let wi = frame.to_world(local);
                sum += probe.q(k) * material.bsdf_eval(wi, wo, frame).luminance() * local.z;
            }
        }
        self.grid.stratum_solid_angle() * sum
    }

    /// Best single-stratum estimate `max_k 2π · Q_k · f_s(ω̂_k) · cos θ̂_k` at stratum centers.
    pub fn max_incident(&self, probe_id: usize, wo: Vec3, material: &Material, frame: &Frame) -> f64 {
        let probe = &self.probes[probe_id];
        (0..self.grid.len())
            .map(|k| {
                let local = self.grid.center_local(k);
                let f = material.bsdf_eval(frame.to_world(local), wo, frame).luminance();
                TAU * probe.q(k) * f * local.z
            })
            .fold(0.0, f64::max)
    }

    /// Bootstrap target for a transition that reached `hit` travelling along
    /// `omega`: `L_e(y, −ω) + ∫ Q(y) f_s cos` (or the max variant).
    /// `None` when `y` is a surface without a compatible probe.
    pub fn target(&self, scene: &Scene, hit: &Hit, omega: Vec3, rng: &mut RngStream) -> Option<f64> {
        let probe = match hit {
            Hit::Surface(s) => {
                let n = if s.normal.dot(omega) <= 0.0 { s.normal } else { -s.normal };
                self.lookup(s.point, n)
            }
            _ => None,
        };
        self.target_at(scene, hit, omega, probe, rng)
    }

    /// [`target`](Self::target) with the probe at `y` already resolved by the caller.
    pub fn target_at(&self, scene: &Scene, hit: &Hit, omega: Vec3, probe: Option<usize>, rng: &mut RngStream) -> Option<f64> {
        match hit {
            Hit::Environment => Some(scene.environment_radiance(omega).luminance()),
            Hit::Escaped => Some(0.0),
            Hit::Surface(s) => {
                let material = scene.material(s.primitive_id);
                let wo = -omega;
                let emitted = material.emitted(wo, s.normal).luminance();
                if material.albedo.is_black() {
                    return Some(emitted);
                }
                let n = if s.normal.dot(wo) >= 0.0 { s.normal } else { -s.normal };
                let probe_id = probe?;
                let frame = self.probes[probe_id].frame_at(n);
                let bootstrap = match self.config.policy {
                    UpdatePolicy::ExpectedSarsa => self.estimate_incident(probe_id, wo, material, &frame, rng),
                    UpdatePolicy::QMax => self.max_incident(probe_id, wo, material, &frame),
                };
                Some(emitted + bootstrap)
            }
        }
    }

    /// `Q_k ← (1−α)·Q_k + α·target`, α from the schedule; returns the new value.
    pub fn apply(&self, probe_id: usize, k: usize, target: f64) -> Result<f64> {
        if !target.is_finite() || target < 0.0 {
            self.rejected.fetch_add(1, Ordering::Relaxed);
            return Err(Error::NonFinite("Q update target"));
        }
        let probe = &self.probes[probe_id];
        let previous = probe.visits[k].fetch_add(1, Ordering::Relaxed);
        let alpha = self.config.alpha.alpha(previous);
        self.updates.fetch_add(1, Ordering::Relaxed);
        Ok(probe.q[k].update(|q| blend(q, target, alpha)))
    }

    /// Full update for the transition `x → y` along `omega`: resolves the
    /// probe at `x`, the stratum of `omega` and the target at `y`.
    /// Returns `None` when the update is skipped (no probe at `x` or `y`).
    pub fn update(
        &self,
        scene: &Scene,
        x: Vec3,
        x_normal: Vec3,
        omega: Vec3,
        hit: &Hit,
        rng: &mut RngStream,
    ) -> Result<Option<f64>> {
        let Some(probe_id) = self.lookup(x, x_normal) else {
            self.skipped.fetch_add(1, Ordering::Relaxed);
            return Ok(None);
        };
        let frame = self.probes[probe_id].frame_at(x_normal);
        self.update_from(scene, probe_id, &frame, omega, hit, rng)
    }

    /// [`update`](Self::update) with the probe at `x` already resolved.
    pub fn update_from(
        &self,
        scene: &Scene,
        probe_id: usize,
        frame: &Frame,
        omega: Vec3,
        hit: &Hit,
        rng: &mut RngStream,
    ) -> Result<Option<f64>> {
        let probe = match hit {
            Hit::Surface(s) => {
                let n = if s.normal.dot(omega) <= 0.0 { s.normal } else { -s.normal };
                self.lookup(s.point, n)
            }
            _ => None,
        };
        self.update_resolved(scene, probe_id, frame, omega, hit, probe, rng)
    }

    /// [`update_from`](Self::update_from) with the probe at `y` also resolved.
    #[allow(clippy::too_many_arguments)]
    pub fn update_resolved(
        &self,
        scene: &Scene,
        probe_id: usize,
        frame: &Frame,
        omega: Vec3,
        hit: &Hit,
        y_probe: Option<usize>,
        rng: &mut RngStream,
    ) -> Result<Option<f64>> {
        let local = frame.to_local(omega);
        if local.z < 0.0 {
            self.skipped.fetch_add(1, Ordering::Relaxed);
            return Ok(None);
        }
        let k = self.grid.stratum_of_local(local);
        match self.target_at(scene, hit, omega, y_probe, rng) {
            Some(target) => self.apply(probe_id, k, target).map(Some),
            None => {
                self.skipped.fetch_add(1, Ordering::Relaxed);
                Ok(None)
            }
        }
    }

    /// Rebuilds every probe's sampling CDF from the current Q values.
    pub fn rebuild_distributions(&mut self) {
        let n = self.grid.len();
        let cos: Vec<f64> = (0..n).map(|k| self.grid.center_cos(k)).collect();
        let sampling = self.config.sampling;
        let relative = self.config.relative_floor;
        self.distributions = self
            .probes
            .iter()
            .map(|p| {
                let weights: Vec<f64> = (0..n)
                    .map(|k| match sampling {
                        SamplingMode::ProportionalQ => p.q(k),
                        SamplingMode::ProportionalQBsdfCos => p.q(k) * cos[k],
                    })
                    .collect();
                DiscreteDistribution::with_relative_floor(&weights, relative)
                    .expect("Q values are finite and non-negative")
            })
            .collect();
    }

    /// Draws a stratum from the probe's CDF (`u1`) and a uniform direction in
    /// it (`u2`, `u3`). Returns the direction and its solid-angle pdf.
    #[inline]
    pub fn sample_direction(&self, probe_id: usize, frame: &Frame, u1: f64, u2: f64, u3: f64) -> (Vec3, f64) {
        let (k, p) = self.distributions[probe_id].sample_clamped(u1);
        let local = self.grid.local_dir_in_stratum(k, u2, u3);
        (frame.to_world(local), p / self.grid.stratum_solid_angle())
    }

    /// Density realized by [`sample_direction`](Self::sample_direction); 0 below the horizon.
    #[inline]
    pub fn pdf_direction(&self, probe_id: usize, frame: &Frame, dir: Vec3) -> f64 {
        let local = frame.to_local(dir);
        if local.z < 0.0 {
            return 0.0;
        }
        let k = self.grid.stratum_of_local(local);
        self.distributions[probe_id].probability(k) / self.grid.stratum_solid_angle()
    }

    /// Smallest `P(k) / floor_share` over all probes and strata; at least 1
    /// (up to rounding) whenever every stratum keeps its floor mass.
    pub fn min_floor_ratio(&self) -> f64 {
        self.distributions
            .iter()
            .flat_map(|d| (0..d.len()).map(move |k| d.probability(k) / d.floor_share()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Text dump, one probe per line: position, normal, then the n Q values.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for p in &self.probes {
            let _ = write!(
                out,
                "{} {} {} {} {} {}",
                p.position.x, p.position.y, p.position.z, p.normal.x, p.normal.y, p.normal.z
            );
            for q in p.q_values() {
                let _ = write!(out, " {q}");
            }
            out.push('\n');
        }
        out
    }

    /// Bytes held by Q values and visit counters.
    pub fn memory_bytes(&self) -> usize {
        self.probes.len() * self.grid.len() * (std::mem::size_of::<AtomicF64>() + std::mem::size_of::<AtomicU32>())
    }
}

/// Uniform grid over probe positions for exact nearest-neighbour queries.
#[derive(Debug)]
struct ProbeIndex {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    ids: Vec<u32>,
}

impl ProbeIndex {
    const MAX_CELLS: usize = 1 << 21;

    fn build(probes: &[Probe], surface_area: f64) -> ProbeIndex {
        let bounds = probes.iter().fold(Aabb::empty(), |b, p| b.grow(p.position));
        let extent = bounds.extent();
        // about four probes per cell on a surface
        let mut cell = (4.0 * surface_area / probes.len() as f64).sqrt();
        let max_extent = extent.max_component();
        if !(cell > 0.0) || !cell.is_finite() {
            cell = max_extent.max(1.0);
        }
        cell = cell.max(max_extent / 256.0).max(1e-9);
        let dims_for = |cell: f64| {
            [
                ((extent.x / cell).floor() as usize + 1),
                ((extent.y / cell).floor() as usize + 1),
                ((extent.z / cell).floor() as usize + 1),
            ]
        };
        let mut dims = dims_for(cell);
        while dims[0] * dims[1] * dims[2] > Self::MAX_CELLS {
            cell *= 1.5;
            dims = dims_for(cell);
        }
        let mut index = ProbeIndex { origin: bounds.min, cell, dims, starts: Vec::new(), ids: Vec::new() };
        let cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; cells + 1];
        let keys: Vec<usize> = probes.iter().map(|p| index.flat(index.cell_coords(p.position))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut ids = vec![0u32; probes.len()];
        for (i, &k) in keys.iter().enumerate() {
            ids[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        index.starts = counts;
        index.ids = ids;
        index
    }

    #[inline]
    fn cell_coords(&self, p: Vec3) -> [usize; 3] {
        let rel = (p - self.origin) / self.cell;
        let c = |v: f64, d: usize| (v.max(0.0) as usize).min(d - 1);
        [c(rel.x, self.dims[0]), c(rel.y, self.dims[1]), c(rel.z, self.dims[2])]
    }

    #[inline]
    fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    fn nearest(&self, probes: &[Probe], q: Vec3, normal: Vec3, cos_min: f64) -> Option<usize> {
        let center = self.cell_coords(q);
        let mut best: Option<(f64, u32)> = None;
        let max_ring = self.dims.iter().copied().max().unwrap_or(1);
        for ring in 0..=max_ring {
            let lo = |c: usize| c.saturating_sub(ring);
            let hi = |c: usize, d: usize| (c + ring).min(d - 1);
            for z in lo(center[2])..=hi(center[2], self.dims[2]) {
                for y in lo(center[1])..=hi(center[1], self.dims[1]) {
                    for x in lo(center[0])..=hi(center[0], self.dims[0]) {
                        let on_ring = x.abs_diff(center[0]) == ring
                            || y.abs_diff(center[1]) == ring
                            || z.abs_diff(center[2]) == ring;
                        if !on_ring {
                            continue;
                        }
                        let cell = self.flat([x, y, z]);
                        for &id in &self.ids[self.starts[cell] as usize..self.starts[cell + 1] as usize] {
                            let p = &probes[id as usize];
                            if p.normal.dot(normal) < cos_min {
                                continue;
                            }
                            let d2 = (p.position - q).length_squared();
                            let better = match best {
                                None => true,
                                Some((bd, bid)) => d2 < bd || (d2 == bd && id < bid),
                            };
                            if better {
                                best = Some((d2, id));
                            }
                        }
                    }
                }
            }
            // distance from q to the nearest face of the searched block that has cells beyond it
            let mut reach = f64::INFINITY;
            for a in 0..3 {
                let rel = q[a] - self.origin[a];
                if center[a] > ring {
                    reach = reach.min(rel - (center[a] - ring) as f64 * self.cell);
                }
                if center[a] + ring + 1 < self.dims[a] {
                    reach = reach.min((center[a] + ring + 1) as f64 * self.cell - rel);
                }
            }
            if reach == f64::INFINITY {
                break;
            }
            if let Some((d2, _)) = best {
                let reach = reach.max(0.0);
                if d2 < reach * reach {
                    break;
                }
            }
        }
        best.map(|(_, id)| id as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Primitive, Shape, SurfaceHit};
    use crate::materials::EnvironmentLight;
    use crate::math::Spectrum;
    use crate::sampling::cosine_sample_hemisphere;
    use crate::scene::Camera;
    use proptest::prelude::*;

    fn config(bands: usize, sectors: usize) -> GuidingConfig {
        GuidingConfig { bands, sectors, ..GuidingConfig::default() }
    }

    fn camera() -> Camera {
        Camera::new(Vec3::new(0.0, 1.0, -3.0), Vec3::ZERO, Vec3::Y, 45.0).unwrap()
    }

    fn quad_scene(quads: &[(Vec3, Vec3, Vec3)]) -> Scene {
        let prims = quads
            .iter()
            .map(|&(c, a, b)| Primitive::new(Shape::Quad { corner: c, edge1: a, edge2: b }, 0))
            .collect();
        Scene::new(camera(), vec![("white".into(), Material::diffuse(Spectrum::gray(0.5)))], prims, None).unwrap()
    }

    fn single_probe(bands: usize, sectors: usize, alpha: AlphaSchedule) -> QField {
        let cfg = GuidingConfig { alpha, ..config(bands, sectors) };
        QField::with_probes(&[(Vec3::ZERO, Vec3::Z)], cfg).unwrap()
    }

    #[test]
    fn unit_quad_gets_hammersley_probes() {
        // unit quad in the xz-plane facing +y (edge1 = z, edge2 = x)
        let scene = quad_scene(&[(Vec3::ZERO, Vec3::Z, Vec3::X)]);
        let field = QField::place_probes(&scene, GuidingConfig { probe_count: 4, ..GuidingConfig::default() }).unwrap();
        let expected = [(0.0, 0.0), (0.25, 0.5), (0.5, 0.25), (0.75, 0.75)];
        for (p, (u, v)) in field.probes().iter().zip(expected) {
            assert!((p.position - Vec3::new(v, 0.0, u)).length() < 1e-12, "{:?}", p.position);
            assert!((p.normal - Vec3::Y).length() < 1e-12);
            assert!(p.q_values().iter().all(|&q| q == 1.0));
        }
    }

    #[test]
    fn probes_split_by_area() {
        let scene = quad_scene(&[
            (Vec3::ZERO, Vec3::Z, Vec3::X),
            (Vec3::new(5.0, 0.0, 0.0), Vec3::Z * 3.0, Vec3::X),
        ]);
        let field = QField::place_probes(&scene, GuidingConfig { probe_count: 4000, ..GuidingConfig::default() }).unwrap();
        let on_second = field.probes().iter().filter(|p| p.position.x >= 5.0).count();
        assert_eq!(on_second, 3000);
    }

    #[test]
    fn single_probe_always_found() {
        let scene = quad_scene(&[(Vec3::ZERO, Vec3::Z, Vec3::X)]);
        let field = QField::place_probes(&scene, GuidingConfig { probe_count: 1, ..GuidingConfig::default() }).unwrap();
        for p in [Vec3::ZERO, Vec3::new(0.9, 0.0, 0.9), Vec3::new(100.0, 3.0, -7.0)] {
            assert_eq!(field.lookup(p, Vec3::Y), Some(0));
        }
    }

    #[test]
    fn lookup_examples() {
        let cfg = config(2, 4);
        let field = QField::with_probes(&[(Vec3::ZERO, Vec3::Y), (Vec3::X, Vec3::Y)], cfg).unwrap();
        assert_eq!(field.lookup(Vec3::new(0.1, 0.0, 0.0), Vec3::Y), Some(0));
        assert_eq!(field.lookup(Vec3::new(0.1, 0.0, 0.0), -Vec3::Y), None);
        assert_eq!(field.lookup(Vec3::new(0.5, 0.0, 0.0), Vec3::Y), Some(0));
        assert_eq!(field.lookup(Vec3::new(0.9, 0.0, 0.0), Vec3::Y), Some(1));
    }

    #[test]
    fn lookup_matches_brute_force() {
        let mut rng = RngStream::from_seed(21);
        let normals = [Vec3::X, Vec3::Y, Vec3::Z, -Vec3::X, -Vec3::Y, -Vec3::Z];
        let points: Vec<(Vec3, Vec3)> = (0..500)
            .map(|i| {
                let p = Vec3::new(rng.next_f64() * 4.0, rng.next_f64() * 2.0, rng.next_f64() * 3.0);
                (p, normals[i % 6])
            })
            .collect();
        let field = QField::with_probes(&points, config(2, 2)).unwrap();
        for _ in 0..2000 {
            let q = Vec3::new(rng.next_f64() * 6.0 - 1.0, rng.next_f64() * 3.0 - 0.5, rng.next_f64() * 4.0 - 0.5);
            let n = normals[(rng.next_f64() * 6.0) as usize];
            let brute = points
                .iter()
                .enumerate()
                .filter(|(_, (_, pn))| pn.dot(n) >= 0.7)
                .min_by(|a, b| (a.1 .0 - q).length_squared().total_cmp(&(b.1 .0 - q).length_squared()))
                .map(|(i, _)| i);
            assert_eq!(field.lookup(q, n), brute);
        }
    }

    #[test]
    fn normal_stratum_is_top_band() {
        let grid = HemisphereGrid::new(8, 16).unwrap();
        let frame = Frame::from_normal(Vec3::Z);
        let k = grid.stratum_of(&frame, Vec3::Z).unwrap();
        assert_eq!(k / 16, 7);
        assert_eq!(k, 7 * 16);
        assert!(grid.stratum_of(&frame, -Vec3::Z).is_err());
    }

    #[test]
    fn strata_round_trip() {
        let grid = HemisphereGrid::new(8, 16).unwrap();
        let frame = Frame::from_normal(Vec3::new(0.3, 0.4, 0.5).normalized());
        let mut rng = RngStream::from_seed(4);
        for k in 0..grid.len() {
            for _ in 0..8 {
                let (d, pdf) = grid.uniform_dir_in_stratum(&frame, k, rng.next_f64(), rng.next_f64()).unwrap();
                assert_eq!(grid.stratum_of(&frame, d).unwrap(), k);
                assert!((pdf - 128.0 / TAU).abs() < 1e-12);
            }
        }
        assert!(grid.uniform_dir_in_stratum(&frame, 128, 0.5, 0.5).is_err());
    }

    #[test]
    fn cosine_samples_cover_all_strata() {
        let grid = HemisphereGrid::new(8, 8).unwrap();
        let mut hits = vec![0usize; grid.len()];
        let mut rng = RngStream::from_seed(6);
        for _ in 0..100_000 {
            let (d, _) = cosine_sample_hemisphere(rng.next_f64(), rng.next_f64());
            hits[grid.stratum_of_local(d)] += 1;
        }
        assert!(hits.iter().all(|&h| h > 0));
    }

    #[test]
    fn single_stratum_is_uniform_hemisphere() {
        let grid = HemisphereGrid::new(1, 1).unwrap();
        let (_, pdf) = grid.uniform_dir_in_stratum(&Frame::from_normal(Vec3::Z), 0, 0.3, 0.8).unwrap();
        assert!((pdf - 1.0 / TAU).abs() < 1e-15);
    }

    #[test]
    fn top_band_mean_cosine() {
        // cos θ uniform on [0.5, 1] for the top band of two → mean 0.75
        let grid = HemisphereGrid::new(2, 4).unwrap();
        let frame = Frame::from_normal(Vec3::Z);
        let mut rng = RngStream::from_seed(9);
        let n = 100_000;
        let mut sum = 0.0;
        for i in 0..n {
            let k = 4 + i % 4;
            let (d, _) = grid.uniform_dir_in_stratum(&frame, k, rng.next_f64(), rng.next_f64()).unwrap();
            sum += d.z;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.75).abs() < 0.0075, "{mean}");
    }

    #[test]
    fn estimate_of_constant_q_is_albedo_times_q() {
        let field = single_probe(8, 16, AlphaSchedule::PerVisit);
        let c = 2.5;
        for k in 0..field.grid().len() {
            field.probe(0).q[k].store(c);
        }
        let rho = 0.6;
        let m = Material::diffuse(Spectrum::gray(rho));
        let frame = Frame::from_normal(Vec3::Z);
        let mut rng = RngStream::from_seed(1);
        let trials = 100_000;
        let wo = Vec3::new(0.2, 0.1, 0.9).normalized();
        let mean = (0..trials).map(|_| field.estimate_incident(0, wo, &m, &frame, &mut rng)).sum::<f64>() / trials as f64;
        assert!((mean - rho * c).abs() < 0.01 * rho * c, "{mean}");
    }

    #[test]
    fn glossy_estimate_matches_lambertian_path_for_exponent_zero() {
        // a Phong lobe with exponent 0 has constant value albedo/π on the hemisphere
        // of the mirror direction; at normal incidence that is the full hemisphere
        let field = single_probe(4, 8, AlphaSchedule::PerVisit);
        let glossy = Material { phong_exponent: Some(0.0), ..Material::diffuse(Spectrum::gray(0.5)) };
        let frame = Frame::from_normal(Vec3::Z);
        let mut rng = RngStream::from_seed(2);
        let n = 50_000;
        let mean = (0..n).map(|_| field.estimate_incident(0, Vec3::Z, &glossy, &frame, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn zero_q_estimates_zero() {
        let field = single_probe(4, 8, AlphaSchedule::PerVisit);
        for k in 0..field.grid().len() {
            field.probe(0).q[k].store(0.0);
        }
        let mut rng = RngStream::from_seed(1);
        let m = Material::diffuse(Spectrum::ONE);
        assert_eq!(field.estimate_incident(0, Vec3::Z, &m, &Frame::from_normal(Vec3::Z), &mut rng), 0.0);
    }

    #[test]
    fn single_grazing_stratum_bound() {
        let field = single_probe(8, 16, AlphaSchedule::PerVisit);
        for k in 0..field.grid().len() {
            field.probe(0).q[k].store(0.0);
        }
        let q = 3.0;
        field.probe(0).q[5].store(q); // band 0
        let m = Material::diffuse(Spectrum::ONE);
        let f = m.lambertian_luminance();
        let bound = TAU / 128.0 * q * f * (1.0 / 8.0);
        let mut rng = RngStream::from_seed(3);
        for _ in 0..1000 {
            let v = field.estimate_incident(0, Vec3::Z, &m, &Frame::from_normal(Vec3::Z), &mut rng);
            assert!(v >= 0.0 && v <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn reward_only_update() {
        let field = single_probe(2, 2, AlphaSchedule::Constant(1.0));
        field.probe(0).q[1].store(0.0);
        assert_eq!(field.apply(0, 1, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn convex_combination_update() {
        let field = single_probe(2, 2, AlphaSchedule::Constant(0.5));
        field.probe(0).q[0].store(2.0);
        let v = field.apply(0, 0, 1.0).unwrap();
        assert!((v - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn per_visit_alpha_sequence() {
        let s = AlphaSchedule::PerVisit;
        assert_eq!([s.alpha(0), s.alpha(1), s.alpha(2), s.alpha(3)], [1.0, 0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn per_visit_constant_target_is_exact() {
        let field = single_probe(2, 2, AlphaSchedule::PerVisit);
        let t = 0.123_456_789;
        for i in 1..=1000 {
            let v = field.apply(0, 3, t).unwrap();
            assert_eq!(v, t, "after {i} updates");
        }
        assert_eq!(field.probe(0).visits(3), 1000);
    }

    #[test]
    fn per_visit_is_running_mean() {
        let field = single_probe(1, 1, AlphaSchedule::PerVisit);
        let mut rng = RngStream::from_seed(5);
        let targets: Vec<f64> = (0..500).map(|_| rng.next_f64() * 10.0).collect();
        for &t in &targets {
            field.apply(0, 0, t).unwrap();
        }
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        assert!((field.probe(0).q(0) - mean).abs() < 1e-10 * mean);
    }

    #[test]
    fn non_finite_targets_are_rejected() {
        let field = single_probe(1, 1, AlphaSchedule::PerVisit);
        assert!(field.apply(0, 0, f64::NAN).is_err());
        assert!(field.apply(0, 0, f64::INFINITY).is_err());
        assert_eq!(field.counters().rejected, 2);
        assert_eq!(field.probe(0).q(0), 1.0);
    }

    #[test]
    fn update_target_from_emitter_and_environment() {
        // x on a floor facing +y; y on an emissive ceiling facing −y
        let prims = vec![
            Primitive::new(Shape::Quad { corner: Vec3::ZERO, edge1: Vec3::Z, edge2: Vec3::X }, 0),
            Primitive::new(Shape::Quad { corner: Vec3::new(0.0, 1.0, 0.0), edge1: Vec3::X, edge2: Vec3::Z }, 1),
        ];
        let mats = vec![
            ("floor".to_string(), Material::diffuse(Spectrum::gray(0.5))),
            ("lamp".to_string(), Material::emitter(Spectrum::ONE)),
        ];
        let scene = Scene::new(camera(), mats, prims, Some(EnvironmentLight::Constant(Spectrum::gray(0.25)))).unwrap();
        let cfg = GuidingConfig { alpha: AlphaSchedule::Constant(1.0), ..config(2, 2) };
        let field = QField::with_probes(&[(Vec3::new(0.5, 0.0, 0.5), Vec3::Y)], cfg).unwrap();
        for k in 0..4 {
            field.probe(0).q[k].store(0.0);
        }
        let mut rng = RngStream::from_seed(1);
        let up = Vec3::Y;
        let hit = Hit::Surface(SurfaceHit { point: Vec3::new(0.5, 1.0, 0.5), normal: -Vec3::Y, t: 1.0, primitive_id: 1 });
        let v = field.update(&scene, Vec3::new(0.5, 0.0, 0.5), Vec3::Y, up, &hit, &mut rng).unwrap();
        assert_eq!(v, Some(1.0));
        let side = Vec3::new(1.0, 0.2, 0.0).normalized();
        let v = field.update(&scene, Vec3::new(0.5, 0.0, 0.5), Vec3::Y, side, &Hit::Environment, &mut rng).unwrap();
        assert_eq!(v, Some(0.25));
        // no probe facing −y
        let v = field.update(&scene, Vec3::new(0.5, 0.0, 0.5), -Vec3::Y, -up, &Hit::Environment, &mut rng).unwrap();
        assert_eq!(v, None);
        assert_eq!(field.counters().skipped, 1);
    }

    #[test]
    fn q_max_target_uses_best_stratum() {
        let cfg = GuidingConfig { policy: UpdatePolicy::QMax, ..config(2, 2) };
        let field = QField::with_probes(&[(Vec3::ZERO, Vec3::Z)], cfg).unwrap();
        for (k, q) in [0.0, 0.0, 4.0, 1.0].into_iter().enumerate() {
            field.probe(0).q[k].store(q);
        }
        let m = Material::diffuse(Spectrum::gray(0.5));
        let v = field.max_incident(0, Vec3::Z, &m, &Frame::from_normal(Vec3::Z));
        // stratum 2: top band, center cos 0.75
        let expected = TAU * 4.0 * (0.5 / std::f64::consts::PI) * 0.75;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn rebuild_examples() {
        let field = single_probe(2, 4, AlphaSchedule::PerVisit);
        let mut f = field;
        f.config.sampling = SamplingMode::ProportionalQ;
        f.rebuild_distributions();
        for k in 0..8 {
            assert!((f.distribution(0).probability(k) - 0.125).abs() < 1e-15);
        }
        for k in 0..8 {
            f.probe(0).q[k].store(if k == 7 { 1.0 } else { 0.0 });
        }
        f.rebuild_distributions();
        let eps = 1e-4 * (1.0 / 8.0);
        let expected = 1.0 / (1.0 + 7.0 * eps);
        assert!((f.distribution(0).probability(7) - expected).abs() < 1e-12);

        for k in 0..8 {
            f.probe(0).q[k].store(1.0);
        }
        f.config.sampling = SamplingMode::ProportionalQBsdfCos;
        f.rebuild_distributions();
        // bands of 2: centers 0.25 and 0.75 → 1:3
        let d = f.distribution(0);
        assert!((d.probability(0) / d.probability(4) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_q_pdf_is_uniform_hemisphere() {
        let mut field = single_probe(8, 16, AlphaSchedule::PerVisit);
        field.config.sampling = SamplingMode::ProportionalQ;
        field.rebuild_distributions();
        let frame = Frame::from_normal(Vec3::Z);
        let mut rng = RngStream::from_seed(2);
        for _ in 0..100 {
            let (d, pdf) = field.sample_direction(0, &frame, rng.next_f64(), rng.next_f64(), rng.next_f64());
            assert!((pdf - 1.0 / TAU).abs() < 1e-12);
            assert!((field.pdf_direction(0, &frame, d) - pdf).abs() < 1e-15);
        }
        assert_eq!(field.pdf_direction(0, &frame, -Vec3::Z), 0.0);
    }

    #[test]
    fn concentrated_q_pdf() {
        let mut field = single_probe(2, 2, AlphaSchedule::PerVisit);
        field.config.sampling = SamplingMode::ProportionalQ;
        for k in 0..4 {
            field.probe(0).q[k].store(if k == 2 { 5.0 } else { 0.0 });
        }
        field.rebuild_distributions();
        let p = field.distribution(0).probability(2);
        let frame = Frame::from_normal(Vec3::Z);
        let (d, pdf) = field.sample_direction(0, &frame, 0.5, 0.5, 0.5);
        assert_eq!(field.grid().stratum_of(&frame, d).unwrap(), 2);
        assert!((pdf - p * 4.0 / TAU).abs() < 1e-12);
    }

    fn scramble(field: &mut QField, seed: u64) {
        let mut rng = RngStream::from_seed(seed);
        for k in 0..field.grid().len() {
            let q = 0.05 + rng.next_f64().powi(2) * 5.0;
            field.probe(0).q[k].store(q);
        }
        field.rebuild_distributions();
    }

    #[test]
    fn learned_pdf_integrates_cosine_to_pi() {
        let mut field = single_probe(8, 16, AlphaSchedule::PerVisit);
        scramble(&mut field, 77);
        let frame = Frame::from_normal(Vec3::new(0.1, -0.3, 0.9).normalized());
        let mut rng = RngStream::from_seed(8);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (d, pdf) = field.sample_direction(0, &frame, rng.next_f64(), rng.next_f64(), rng.next_f64());
            sum += frame.cos_theta(d) / pdf;
        }
        let mean = sum / n as f64;
        assert!((mean - std::f64::consts::PI).abs() < 0.01 * std::f64::consts::PI, "{mean}");
    }

    #[test]
    fn sparse_q_pdf_is_normalized() {
        // exact per-stratum sum: Σ_k P(k) · E[cos | k] / (P(k) · n / 2π) = π
        let mut field = single_probe(8, 16, AlphaSchedule::PerVisit);
        let mut rng = RngStream::from_seed(5);
        for k in 0..128 {
            let q = if rng.next_f64() < 0.3 { 0.0 } else { rng.next_f64().powi(4) * 50.0 };
            field.probe(0).q[k].store(q);
        }
        field.rebuild_distributions();
        let frame = Frame::from_normal(Vec3::Z);
        let total: f64 = (0..128)
            .map(|k| {
                let d = frame.to_world(field.grid().center_local(k));
                let p = field.distribution(0).probability(k);
                p * field.grid().center_cos(k) / field.pdf_direction(0, &frame, d)
            })
            .sum();
        assert!((total - std::f64::consts::PI).abs() < 1e-9, "{total}");
        let mass: f64 = (0..128).map(|k| field.distribution(0).probability(k)).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_histogram_matches_pdf() {
        let mut field = single_probe(4, 4, AlphaSchedule::PerVisit);
        scramble(&mut field, 3);
        let frame = Frame::from_normal(Vec3::Z);
        let mut rng = RngStream::from_seed(4);
        let n = 200_000;
        let mut counts = [0.0; 16];
        for _ in 0..n {
            let (d, _) = field.sample_direction(0, &frame, rng.next_f64(), rng.next_f64(), rng.next_f64());
            counts[field.grid().stratum_of(&frame, d).unwrap()] += 1.0;
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for k in 0..16 {
            // expected count from pdf_direction × stratum solid angle
            let center = frame.to_world(field.grid().center_local(k));
            let expected = n as f64 * field.pdf_direction(0, &frame, center) * field.grid().stratum_solid_angle();
            if expected >= 5.0 {
                chi2 += (counts[k] - expected).powi(2) / expected;
                dof += 1;
            }
        }
        // generous bound: chi2 with <16 dof, p = 0.001 → < 37.7
        assert!(dof > 1 && chi2 < 37.7, "chi2 = {chi2} dof = {dof}");
    }

    #[test]
    fn fixed_point_of_self_referential_recursion() {
        // A surface that sees only itself: target = L + estimate of its own Q.
        // E[target] = L + ρ·q for uniform q, so the fixed point is L / (1 − ρ).
        let (l, rho) = (1.0, 0.5);
        let field = single_probe(2, 4, AlphaSchedule::PerVisit);
        let m = Material::diffuse(Spectrum::gray(rho));
        let frame = Frame::from_normal(Vec3::Z);
        let mut rng = RngStream::from_seed(12);
        for _ in 0..1_000_000 {
            let k = (rng.next_f64() * 8.0) as usize;
            let t = l + field.estimate_incident(0, Vec3::Z, &m, &frame, &mut rng);
            field.apply(0, k, t).unwrap();
        }
        // brute-force scalar recursion with the same schedule and noise model
        let mut q = 1.0;
        let mut rng = RngStream::from_seed(13);
        for n in 0..125_000 {
            let noisy = rho * q * 2.0 * rng.next_f64();
            q += (l + noisy - q) / (n as f64 + 1.0);
        }
        let fixed = l / (1.0 - rho);
        let mean_q = field.probe(0).q_values().iter().sum::<f64>() / 8.0;
        assert!((mean_q - fixed).abs() < 0.01 * fixed, "field {mean_q}");
        assert!((q - fixed).abs() < 0.01 * fixed, "scalar {q}");
    }

    #[test]
    fn dump_has_one_line_per_probe() {
        let field = QField::with_probes(&[(Vec3::ZERO, Vec3::Y), (Vec3::X, Vec3::Y)], config(2, 2)).unwrap();
        let dump = field.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split_whitespace().count(), 6 + 4);
        assert!(lines[1].starts_with("1 0 0 0 1 0"));
    }

    proptest! {
        #[test]
        fn q_stays_finite_and_non_negative(
            targets in proptest::collection::vec((0usize..8, 0.0f64..1e6), 1..200),
            alpha in 0.01f64..=1.0,
        ) {
            let mut field = single_probe(2, 4, AlphaSchedule::Constant(alpha));
            for (k, t) in targets {
                field.apply(0, k, t).unwrap();
            }
            field.rebuild_distributions();
            for q in field.probe(0).q_values() {
                prop_assert!(q.is_finite() && q >= 0.0);
            }
            prop_assert!(field.min_floor_ratio() >= 1.0 - 1e-9);
            let frame = Frame::from_normal(Vec3::Z);
            for k in 0..8 {
                let d = frame.to_world(field.grid().center_local(k));
                prop_assert!(field.pdf_direction(0, &frame, d) > 0.0);
            }
        }
    }
}
