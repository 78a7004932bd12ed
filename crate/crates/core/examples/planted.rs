//! Writes the planted-signal fixture: `cargo run -p hypersoc-core --example planted -- <dir> [seed]`.

use std::path::PathBuf;

use hypersoc_core::synth::{planted_dataset, PlantedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/planted200".into()));
    let mut cfg = PlantedConfig::default();
    if let Some(seed) = args.next() {
        cfg.seed = seed.parse()?;
    }
    let data = planted_dataset(&cfg)?;
    data.write_to(&dir)?;
    println!("wrote {} users to {}", data.classes.len(), dir.display());
    Ok(())
}
