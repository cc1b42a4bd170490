use std::path::PathBuf;

use polimarket_workbench::fixture::{generate, FixtureSpec};

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/market200")));
    generate(&FixtureSpec::default()).write_to(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
