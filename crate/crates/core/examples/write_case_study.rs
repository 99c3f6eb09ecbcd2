//! Regenerates the bundled corridor scenario under `data/`.

use std::path::Path;

fn main() -> platoon_core::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let (network, assignments, params) = platoon_core::scenario::bundled_files()?;
    std::fs::write(dir.join("network.json"), network)?;
    std::fs::write(dir.join("assignments.json"), assignments)?;
    std::fs::write(dir.join("params.json"), params)?;
    println!("wrote {}", dir.display());
    Ok(())
}
