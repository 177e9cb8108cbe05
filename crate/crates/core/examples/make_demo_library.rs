//! Writes the built-in demo spectral library to a CSV file.
//!
//! Usage: `cargo run --example make_demo_library -- <path>`

use std::path::PathBuf;

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/demo_library.csv"));
    let library = mtmi::simulator::demo_library();
    library.save_csv(&path).expect("write demo library");
    println!("wrote {} spectra to {}", library.len(), path.display());
}
