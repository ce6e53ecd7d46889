//! Writes a small synthetic training corpus and its manifest.
//!
//! cargo run --example make_corpus -- <dir> [count] [seconds]

use std::path::PathBuf;

use perfnet::dsp::StftGeometry;
use perfnet::train::synthetic::write_synthetic_corpus;

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: make_corpus <dir> [count] [seconds]");
        std::process::exit(1);
    };
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let seconds = args.next().and_then(|s| s.parse().ok()).unwrap_or(4.0);
    match write_synthetic_corpus(&dir, count, seconds, StftGeometry::default().sample_rate) {
        Ok(manifest) => println!("{}", manifest.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
