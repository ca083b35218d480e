use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use rlpt::diagnostics::stats_csv;
use rlpt::guiding::{AlphaSchedule, SamplingMode};
use rlpt::image::ImageFormat;
use rlpt::integrator::{Mode, RenderConfig, Renderer};
use rlpt::scene_file::SceneFile;
use rlpt::scenes;

/// Progressive path tracer with TD-learned importance sampling.
///
/// Every run is seeded; with --deterministic (or --threads 1) the output is
/// bit-identical across runs.
#[derive(Parser, Debug)]
#[command(name = "rlpt", version)]
struct Args {
    /// Scene JSON file, or the name of a bundled scene
    /// (furnace, cornell, door, manylights, sunsky).
    #[arg(long)]
    scene: String,
    /// Output image; `.ppm` writes 8-bit gamma-2.2, anything else float PFM.
    #[arg(long, default_value = "out.pfm")]
    out: PathBuf,
    /// Apply a named preset from the scene file before the flags below.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Paths per pixel; each one is a learning iteration.
    #[arg(long)]
    spp: Option<u32>,
    #[arg(long)]
    max_depth: Option<u32>,
    /// bsdf, rl, rl_max, nee_td, rl_nee_td, env_rl, nee_uniform or env_is.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    probes: Option<usize>,
    /// Hemisphere strata as BANDSxSECTORS.
    #[arg(long, value_parser = parse_strata)]
    strata: Option<(usize, usize)>,
    /// `visits` (1/(1+n)) or `const:F`.
    #[arg(long)]
    alpha: Option<AlphaSchedule>,
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
    /// Share of guided directions drawn from the BSDF.
    #[arg(long)]
    bsdf_fraction: Option<f64>,
    /// Light-selection cells as NX,NY,NZ.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 3]>,
    /// Relative CDF floor.
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Single-threaded, bit-reproducible rendering.
    #[arg(long)]
    deterministic: bool,
    /// Stop learning after this many iterations.
    #[arg(long)]
    freeze_after: Option<u32>,
    /// Per-iteration statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Learned state: one line per probe (position, normal, Q values) in
    /// guided modes, otherwise the `cell,index,value` selection table.
    #[arg(long)]
    dump_probes: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sampling {
    /// Proportional to Q.
    Q,
    /// Proportional to Q times BSDF times cosine.
    QCos,
}

fn parse_strata(s: &str) -> Result<(usize, usize), String> {
    let (b, n) = s.split_once(['x', 'X']).ok_or("expected BANDSxSECTORS, e.g. 8x16")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(b)?, parse(n)?))
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [x, y, z] = parts.as_slice() else {
        return Err("expected NX,NY,NZ, e.g. 16,16,16".into());
    };
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok([parse(x)?, parse(y)?, parse(z)?])
}

fn load(scene: &str) -> Result<SceneFile> {
    let path = Path::new(scene);
    if !path.exists() {
        if let Some(file) = scenes::by_name(scene) {
            return Ok(file);
        }
    }
    Ok(SceneFile::load(path)?)
}

fn config(args: &Args, file: &SceneFile) -> Result<RenderConfig> {
    let mut c = RenderConfig::default();
    if let Some(name) = &args.preset {
        file.preset(name)?.apply(&mut c)?;
    }
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() { c.$field = v; })*
        };
    }
    set!(width, height, spp, max_depth, mode, probes, alpha, bsdf_fraction, grid, floor, seed, threads);
    if let Some((bands, sectors)) = args.strata {
        c.bands = bands;
        c.sectors = sectors;
    }
    if let Some(s) = args.sampling {
        c.sampling = match s {
            Sampling::Q => SamplingMode::ProportionalQ,
            Sampling::QCos => SamplingMode::ProportionalQBsdfCos,
        };
    }
    c.deterministic |= args.deterministic;
    c.freeze_after = args.freeze_after.or(c.freeze_after);
    c.validate()?;
    Ok(c)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(args: &Args) -> Result<()> {
    let file = load(&args.scene)?;
    let scene = file.build()?;
    let config = config(args, &file)?;
    let mut renderer = Renderer::new(&scene, config)?;
    renderer.run()?;
    renderer.image().write(&args.out, ImageFormat::from_path(&args.out))?;
    if let Some(path) = &args.stats {
        write(path, &stats_csv(renderer.config(), renderer.stats(), &renderer.totals()))?;
    }
    if let Some(path) = &args.dump_probes {
        let dump = if let Some(q) = renderer.qfield() {
            q.dump()
        } else if let Some(t) = renderer.light_table().or(renderer.env_table()) {
            t.dump_csv()
        } else {
            bail!("mode {} learns nothing to dump", renderer.config().mode);
        };
        write(path, &dump)?;
    }
    let totals = renderer.totals();
    eprintln!(
        "{}: {} paths, nonzero {:.4}, avg length {:.3} -> {}",
        renderer.config().mode,
        totals.paths,
        totals.nonzero_fraction(),
        totals.avg_path_length(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
