//! Write a small synthetic dataset for trying the CLI:
//!
//! ```text
//! cargo run -p promptlabel --example make_synth_data -- /tmp/synthvoc [seed]
//! ```

use promptlabel::synth::{generate_synthetic_dataset, SynthSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let root = args.next().unwrap_or_else(|| {
        eprintln!("usage: make_synth_data <output-root> [seed]");
        std::process::exit(2);
    });
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(0);
    let spec = SynthSpec {
        seed,
        ..Default::default()
    };
    let ids =
        generate_synthetic_dataset(&spec, std::path::Path::new(&root)).expect("dataset generation");
    println!(
        "wrote {} images ({}x{}, split '{}') under {}",
        ids.len(),
        spec.width,
        spec.height,
        spec.split,
        root
    );
}
