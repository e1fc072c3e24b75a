//! Run a scenario file through the batch runner and print its checks.
//!
//! `cargo run --example run_scenario -- crates/core/scenarios/euclid_disk.toml`

use std::path::PathBuf;

use hamlens::cli::{run, RunOptions};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/euclid_disk.toml")));
    let out = std::env::temp_dir().join("hamlens-example");
    let summary = run(
        &path,
        &RunOptions {
            out_dir: Some(out.clone()),
            ..Default::default()
        },
    );
    println!("{} -> {} ({:?})", summary.scenario, out.display(), summary.status);
    for c in &summary.checks {
        println!("  {:<22} {:.2e} <= {:.0e}", c.name, c.value, c.threshold);
    }
    std::process::exit(summary.exit_code());
}
