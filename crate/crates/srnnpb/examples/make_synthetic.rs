//! Write a synthetic sequence dataset as per-sequence CSV files, ready for
//! the `srnnpb train` command.
//!
//! Usage: make_synthetic [out_dir] [n_sequences] [dims] [len] [seed]

use srnnpb::dataset::{synthetic_sinusoid_dataset, write_sequences};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let out_dir = args.get(1).map(String::as_str).unwrap_or("synthetic-data");
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let dims: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    let len: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(60);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(12345);

    let dataset = synthetic_sinusoid_dataset(n, dims, len, seed);
    write_sequences(&dataset, std::path::Path::new(out_dir)).expect("write dataset");
    println!("wrote {n} sequences ({dims} dims, {len} steps) to {out_dir}/");
}
