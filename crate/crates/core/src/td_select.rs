//! Temporal-difference learned selection for next event estimation.
//!
//! A regular grid over the scene bounds stores, per cell, one value per light
//! (or per environment tile). Each shadow-ray connection moves the value toward
//! the max-norm of its contribution; selection samples proportionally to the
//! values through a floored CDF so that no light ever becomes unreachable.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use crate::atomic::{blend, AtomicF64};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::guiding::AlphaSchedule;
use crate::materials::{sphere_coords, sphere_direction, EnvironmentLight};
use crate::math::{Spectrum, Vec3};
use crate::sampling::DiscreteDistribution;

/// Regular `nx × ny × nz` partition of a box; points outside are clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGrid {
    bounds: Aabb,
    resolution: [usize; 3],
}

impl CellGrid {
    pub fn new(bounds: Aabb, resolution: [usize; 3]) -> Result<Self> {
        if resolution.contains(&0) {
            return Err(Error::InvalidConfig(format!("grid resolution {resolution:?} must be positive")));
        }
        if bounds.is_empty() || !bounds.min.is_finite() || !bounds.max.is_finite() {
            return Err(Error::InvalidConfig("grid bounds must be a finite, non-empty box".into()));
        }
        Ok(CellGrid { bounds, resolution })
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat cell index `ix + nx·(iy + ny·iz)` by floor division per axis, so a
    /// point on a shared face goes to the cell that face bounds from below.
    #[inline]
    pub fn cell_of(&self, x: Vec3) -> usize {
        let extent = self.bounds.extent();
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let n = self.resolution[axis];
            let e = extent[axis];
            let rel = if e > 0.0 { (x[axis] - self.bounds.min[axis]) / e } else { 0.0 };
            idx[axis] = ((rel * n as f64).max(0.0) as usize).min(n - 1);
        }
        idx[0] + self.resolution[0] * (idx[1] + self.resolution[1] * idx[2])
    }
}

/// Per-cell learned values over a fixed set of entries (lights or tiles).
#[derive(Debug)]
pub struct TdTable {
    grid: CellGrid,
    entries: usize,
    values: Vec<AtomicF64>,
    visits: Vec<AtomicU32>,
    distributions: Vec<DiscreteDistribution>,
    prior: Vec<f64>,
    alpha: AlphaSchedule,
    relative_floor: f64,
    updates: AtomicU64,
    rejected: AtomicU64,
}

impl TdTable {
    /// All values start at zero, so every cell initially selects uniformly.
    pub fn new(grid: CellGrid, entries: usize, alpha: AlphaSchedule, relative_floor: f64) -> Result<Self> {
        if entries == 0 {
            return Err(Error::EmptyDistribution);
        }
        if !(relative_floor.is_finite() && relative_floor > 0.0) {
            return Err(Error::InvalidFloor(relative_floor));
        }
        alpha.validate()?;
        let n = grid.len() * entries;
        let uniform = DiscreteDistribution::uniform(entries)?;
        Ok(TdTable {
            grid,
            entries,
            values: (0..n).map(|_| AtomicF64::new(0.0)).collect(),
            visits: (0..n).map(|_| AtomicU32::new(0)).collect(),
            distributions: vec![uniform; grid.len()],
            prior: vec![1.0; entries],
            alpha,
            relative_floor,
            updates: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
        })
    }

    /// Relative weights that stand in for entries a cell has not tried yet,
    /// rescaled to the cell's tried entries; uniform by default.
    pub fn with_prior(mut self, prior: Vec<f64>) -> Result<Self> {
        if prior.len() != self.entries {
            return Err(Error::InvalidConfig(format!("prior has {} weights for {} entries", prior.len(), self.entries)));
        }
        if prior.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || prior.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("prior weights must be finite, non-negative and not all zero".into()));
        }
        self.distributions = vec![DiscreteDistribution::with_relative_floor(&prior, self.relative_floor)?; self.grid.len()];
        self.prior = prior;
        Ok(self)
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    #[inline]
    pub fn cell_of(&self, x: Vec3) -> usize {
        self.grid.cell_of(x)
    }

    pub fn value(&self, cell: usize, entry: usize) -> f64 {
        self.values[cell * self.entries + entry].load()
    }

    pub fn visits(&self, cell: usize, entry: usize) -> u32 {
        self.visits[cell * self.entries + entry].load(Ordering::Relaxed)
    }

    /// True once any entry of the cell has received an update.
    pub fn visited(&self, cell: usize) -> bool {
        (0..self.entries).any(|e| self.visits(cell, e) > 0)
    }

    pub fn updates(&self) -> u64 {
        self.updates.load(Ordering::Relaxed)
    }

    pub fn rejected(&self) -> u64 {
        self.rejected.load(Ordering::Relaxed)
    }

    pub fn distribution(&self, cell: usize) -> &DiscreteDistribution {
        &self.distributions[cell]
    }

    /// `V ← (1−α)·V + α·‖contribution‖∞`; an occluded sample passes black.
    pub fn update_value(&self, cell: usize, entry: usize, contribution: Spectrum) -> Result<f64> {
        if cell >= self.grid.len() {
            return Err(Error::IndexOutOfRange { index: cell, len: self.grid.len() });
        }
        if entry >= self.entries {
            return Err(Error::IndexOutOfRange { index: entry, len: self.entries });
        }
        let target = contribution.max_norm();
        if !contribution.is_finite() || !target.is_finite() || contribution.channels().iter().any(|c| *c < 0.0) {
            self.rejected.fetch_add(1, Ordering::Relaxed);
            return Err(Error::NonFinite("selection contribution"));
        }
        let i = cell * self.entries + entry;
        let previous = self.visits[i].fetch_add(1, Ordering::Relaxed);
        let alpha = self.alpha.alpha(previous);
        self.updates.fetch_add(1, Ordering::Relaxed);
        Ok(self.values[i].update(|v| blend(v, target, alpha)))
    }

    /// Entry drawn from the cell's CDF snapshot, with its probability.
    #[inline]
    pub fn select(&self, cell: usize, u: f64) -> (usize, f64) {
        self.distributions[cell].sample_clamped(u)
    }

    #[inline]
    pub fn probability(&self, cell: usize, entry: usize) -> f64 {
        self.distributions[cell].probability(entry)
    }

    pub fn rebuild(&mut self) {
        let n = self.entries;
        let relative = self.relative_floor;
        let tried = |i: usize| self.visits[i].load(Ordering::Relaxed) > 0;
        // table-wide mean of each entry over the cells that tried it
        let mut sum = vec![0.0; n];
        let mut cells = vec![0u32; n];
        for i in 0..self.values.len() {
            if tried(i) {
                sum[i % n] += self.values[i].load();
                cells[i % n] += 1;
            }
        }
        let global: Vec<Option<f64>> = sum.iter().zip(&cells).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect();
        for cell in 0..self.grid.len() {
            let range = cell * n..(cell + 1) * n;
            let mut weights: Vec<f64> = self.values[range.clone()].iter().map(AtomicF64::load).collect();
            // untried entries borrow what other cells learned, or else the prior scaled to
            // this cell's earnings, so they get explored before the floor can starve them
            let (mut earned, mut expected) = (0.0, 0.0);
            for (e, i) in range.clone().enumerate() {
                if tried(i) {
                    earned += weights[e];
                    expected += self.prior[e];
                }
            }
            let scale = if expected > 0.0 && earned > 0.0 { earned / expected } else { 1.0 };
            for (e, i) in range.enumerate() {
                if !tried(i) {
                    weights[e] = global[e].unwrap_or(self.prior[e] * scale);
                }
            }
            self.distributions[cell] = DiscreteDistribution::with_relative_floor(&weights, relative).expect("values are finite and non-negative");
        }
    }

    /// Smallest `P(entry) / floor_share` over all cells; ≥ 1 when ergodic.
    pub fn min_floor_ratio(&self) -> f64 {
        self.distributions
            .iter()
            .flat_map(|d| (0..d.len()).map(move |k| d.probability(k) / d.floor_share()))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV: `cell,index,value`.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("cell,index,value\n");
        for cell in 0..self.grid.len() {
            for e in 0..self.entries {
                let _ = writeln!(out, "{cell},{e},{}", self.value(cell, e));
            }
        }
        out
    }
}

/// Tiling of the environment sphere into `phi_tiles × cos_tiles` equal-solid-angle tiles;
/// tile `col + phi_tiles·row`, row 0 at the zenith.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvTiles {
    phi_tiles: usize,
    cos_tiles: usize,
}

impl EnvTiles {
    pub fn new(phi_tiles: usize, cos_tiles: usize) -> Result<Self> {
        if phi_tiles == 0 || cos_tiles == 0 {
            return Err(Error::InvalidConfig(format!("env tiling {phi_tiles}x{cos_tiles} must be positive")));
        }
        Ok(EnvTiles { phi_tiles, cos_tiles })
    }

    pub fn phi_tiles(&self) -> usize {
        self.phi_tiles
    }

    pub fn cos_tiles(&self) -> usize {
        self.cos_tiles
    }

    pub fn len(&self) -> usize {
        self.phi_tiles * self.cos_tiles
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Density of a uniform direction inside one tile, `T/(4π)`.
    #[inline]
    pub fn density_in_tile(&self) -> f64 {
        self.len() as f64 / (4.0 * PI)
    }

    #[inline]
    pub fn tile_of(&self, dir: Vec3) -> usize {
        let (phi, cos) = sphere_coords(dir);
        let col = ((phi / TAU * self.phi_tiles as f64) as usize).min(self.phi_tiles - 1);
        let row = (((1.0 - cos) * 0.5 * self.cos_tiles as f64) as usize).min(self.cos_tiles - 1);
        col + self.phi_tiles * row
    }

    /// `(φ0, φ1, cos_low, cos_high)` of a tile.
    pub fn tile_bounds(&self, tile: usize) -> (f64, f64, f64, f64) {
        let col = tile % self.phi_tiles;
        let row = tile / self.phi_tiles;
        let step = 2.0 / self.cos_tiles as f64;
        (
            col as f64 / self.phi_tiles as f64 * TAU,
            (col + 1) as f64 / self.phi_tiles as f64 * TAU,
            1.0 - (row + 1) as f64 * step,
            1.0 - row as f64 * step,
        )
    }

    /// Uniform direction inside `tile` and its density `T/(4π)`.
    #[inline]
    pub fn sample_dir_in_tile(&self, tile: usize, u: f64, v: f64) -> (Vec3, f64) {
        let (phi0, phi1, cos_lo, cos_hi) = self.tile_bounds(tile);
        let phi = phi0 + (phi1 - phi0) * u;
        let cos = cos_hi - (cos_hi - cos_lo) * v;
        (sphere_direction(phi, cos), self.density_in_tile())
    }

    /// Global tile distribution proportional to mean tile luminance.
    pub fn brightness_distribution(&self, env: &EnvironmentLight, relative_floor: f64) -> Result<DiscreteDistribution> {
        DiscreteDistribution::with_relative_floor(&self.brightness(env), relative_floor)
    }

    /// Mean luminance of every tile.
    pub fn brightness(&self, env: &EnvironmentLight) -> Vec<f64> {
        (0..self.len())
            .map(|t| {
                let (p0, p1, c0, c1) = self.tile_bounds(t);
                env.mean_luminance(p0, p1, c0, c1)
            })
            .collect()
    }
}
