//! Equal-budget comparison of rendering modes on a bundled scene.
//!
//! `cargo run --release --example compare -- door 64 bsdf,rl,rl_max`

use rlpt::diagnostics::{compare_modes, report_csv, Comparison};
use rlpt::integrator::{Mode, RenderConfig};
use rlpt::scenes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("door", String::as_str);
    let spp: u32 = args.get(1).map_or(Ok(64), |s| s.parse())?;
    let modes: Vec<Mode> = args
        .get(2)
        .map_or("bsdf,rl", String::as_str)
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    let file = scenes::by_name(name).ok_or("unknown scene")?;
    let mut base = RenderConfig { spp, deterministic: true, ..RenderConfig::default() };
    if let Some(p) = file.presets.get("default") {
        p.apply(&mut base)?;
        base.spp = spp;
    }
    let mut cmp = Comparison::new(base, modes);
    if let Some(f) = args.get(3) {
        cmp.reference_factor = f.parse()?;
    }
    if let Some(m) = args.get(4) {
        cmp.reference_mode = m.parse()?;
    }
    cmp.cache_dir = Some(std::env::temp_dir().join("rlpt-reference"));
    let (reports, _) = compare_modes(&file, &cmp)?;
    print!("{}", report_csv(&reports));
    Ok(())
}
