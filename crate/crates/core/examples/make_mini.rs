//! Regenerates the bundled mini dataset: `cargo run -p figtab-core --example make_mini -- datasets/mini`

use std::path::PathBuf;

use figtab::bench::synth::{mini_specs, write_dataset};

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("datasets/mini"));
    match write_dataset(&mini_specs(), "mini", &dir) {
        Ok(records) => println!("wrote {} records to {}", records.len(), dir.display()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
