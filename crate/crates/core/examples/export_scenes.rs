//! Writes every bundled scene as JSON: `cargo run --example export_scenes -- [DIR]`.

use std::path::PathBuf;

use rlpt::scenes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenes".into()));
    std::fs::create_dir_all(&dir)?;
    for name in scenes::NAMES {
        let path = dir.join(format!("{name}.json"));
        scenes::by_name(name).expect("listed scene").save(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}
