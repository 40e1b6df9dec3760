//! Writes the representative model's weights to `configs/weights/`.
//!
//! `cargo run -p evgaze-cli --example export_representative [seed]`

use std::path::Path;

use evgaze::nn::init::representative_model;
use evgaze::nn::weights::save_weights;

fn main() {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/weights");
    std::fs::create_dir_all(&dir).expect("create weights dir");
    let path = save_weights(&representative_model(seed), &dir, "representative").expect("write weights");
    println!("{}", path.display());
}
