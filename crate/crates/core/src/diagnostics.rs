//! Error metrics, per-iteration stats output and equal-budget mode comparisons.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{Image, ImageFormat};
use crate::integrator::{render, IterationStats, Mode, RenderConfig, RenderTotals};
use crate::scene::Scene;
use crate::scene_file::SceneFile;

/// Root-mean-square difference over every channel of every pixel.
pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let n = a.pixels().len() * 3;
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| p.channels().into_iter().zip(q.channels()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// Stats CSV: `# key=value` header lines describing the run, then one row per iteration.
pub fn stats_csv(config: &RenderConfig, stats: &[IterationStats], totals: &RenderTotals) -> String {
    let mut out = String::new();
    for (k, v) in config.describe() {
        let _ = writeln!(out, "# {k}={v}");
    }
    let _ = writeln!(out, "# nonzero_fraction={}", totals.nonzero_fraction());
    let _ = writeln!(out, "# avg_path_length={}", totals.avg_path_length());
    let _ = writeln!(out, "# q_updates={}", totals.q_updates);
    let _ = writeln!(out, "# lookup_failures={}", totals.lookup_failures);
    let _ = writeln!(out, "# light_updates={}", totals.light_updates);
    let _ = writeln!(out, "# nan_paths={}", totals.nan_paths);
    out.push_str("iteration,paths,nonzero_paths,avg_path_length,ms_elapsed\n");
    for s in stats {
        let _ = writeln!(out, "{},{},{},{},{:.3}", s.iteration, s.paths, s.nonzero_paths, s.avg_path_length, s.ms_elapsed);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeReport {
    pub mode: Mode,
    pub rmse: f64,
    pub nonzero_fraction: f64,
    pub avg_path_length: f64,
    pub wall_ms: f64,
    /// Smallest probability-to-floor ratio over the mode's learned CDFs.
    pub min_floor_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    /// Render settings shared by all modes; `mode` is overridden.
    pub base: RenderConfig,
    pub modes: Vec<Mode>,
    pub reference_mode: Mode,
    /// Reference budget as a multiple of `base.spp`.
    pub reference_factor: u32,
    pub cache_dir: Option<PathBuf>,
}

impl Comparison {
    pub fn new(base: RenderConfig, modes: Vec<Mode>) -> Self {
        Comparison { base, modes, reference_mode: Mode::Bsdf, reference_factor: 64, cache_dir: None }
    }

    pub fn reference_config(&self) -> RenderConfig {
        RenderConfig {
            mode: self.reference_mode,
            spp: self.base.spp.saturating_mul(self.reference_factor),
            // sharing the first iterations' random numbers would correlate the reference with the runs it judges
            seed: self.base.seed ^ 0x9e37_79b9_7f4a_7c15,
            ..self.base.clone()
        }
    }
}

/// Cache key over the scene content and every setting that changes the image.
pub fn reference_key(file: &SceneFile, config: &RenderConfig) -> String {
    let mut h = Sha256::new();
    h.update(file.digest().as_bytes());
    for (k, v) in config.describe() {
        if matches!(k, "threads" | "deterministic") {
            continue;
        }
        h.update(format!("{k}={v};").as_bytes());
    }
    hex::encode(h.finalize())
}

/// Where [`cached_render`] keeps the image for `config`.
pub fn reference_path(file: &SceneFile, config: &RenderConfig, cache_dir: &Path) -> PathBuf {
    cache_dir.join(format!("ref-{}.pfm", &reference_key(file, config)[..24]))
}

/// Renders `config`, or loads it from `cache_dir` when an identical run was cached.
pub fn cached_render(file: &SceneFile, scene: &Scene, config: &RenderConfig, cache_dir: Option<&Path>) -> Result<Image> {
    let path = cache_dir.map(|d| reference_path(file, config, d));
    if let Some(p) = &path {
        if p.exists() {
            return Image::read_pfm(p);
        }
    }
    let image = render(scene, config.clone())?.image();
    if let (Some(dir), Some(p)) = (cache_dir, &path) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        image.write(p, ImageFormat::Pfm)?;
        // compare against exactly what a later run will read back
        return Image::read_pfm(p);
    }
    Ok(image)
}

/// Renders every mode at the same budget and seed and measures it against the reference.
pub fn compare_modes(file: &SceneFile, comparison: &Comparison) -> Result<(Vec<ModeReport>, Image)> {
    let scene = file.build()?;
    let reference = cached_render(file, &scene, &comparison.reference_config(), comparison.cache_dir.as_deref())?;
    let mut reports = Vec::new();
    for &mode in &comparison.modes {
        let config = RenderConfig { mode, ..comparison.base.clone() };
        let start = Instant::now();
        let r = render(&scene, config)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let totals = r.totals();
        reports.push(ModeReport {
            mode,
            rmse: rmse(&r.image(), &reference)?,
            nonzero_fraction: totals.nonzero_fraction(),
            avg_path_length: totals.avg_path_length(),
            wall_ms,
            min_floor_ratio: r.min_floor_ratio(),
        });
    }
    Ok((reports, reference))
}

/// `mode,rmse,nonzero_fraction,avg_path_length,wall_ms`.
pub fn report_csv(reports: &[ModeReport]) -> String {
    let mut out = String::from("mode,rmse,nonzero_fraction,avg_path_length,wall_ms\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{},{},{:.1}", r.mode, r.rmse, r.nonzero_fraction, r.avg_path_length, r.wall_ms);
    }
    out
}
