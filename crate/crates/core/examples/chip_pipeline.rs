//! Train the chip profile end to end and print per-stage accuracy.
//!
//! ```text
//! cargo run --release -p spikechip-core --example chip_pipeline -- 2,3,4 7
//! ```
//!
//! Expects the MNIST IDX files under `data/mnist/` at the workspace root.

use spikechip_core::compress::run_stage_plan_restarts;
use spikechip_core::data::{load_split, EncodedDataset, Split, SubsetSpec};
use spikechip_core::profiles::{build_profile, Profile, ProfileOptions};
use spikechip_core::rng::SeedTree;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let digits: Vec<u8> = args
        .get(1)
        .map(|s| s.split(',').map(|d| d.parse().expect("digit")).collect())
        .unwrap_or_else(|| vec![2, 3, 4]);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);

    let opts = ProfileOptions::new(Profile::Chip, SubsetSpec::new(digits.clone()).unwrap());
    let built = build_profile(&opts).unwrap();
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let spec = SubsetSpec::new(digits.clone()).unwrap();
    let train = EncodedDataset::build(&load_split(&dir, Split::Train).unwrap(), &spec, &built.preproc).unwrap();
    let test = EncodedDataset::build(&load_split(&dir, Split::Test).unwrap(), &spec, &built.preproc).unwrap();
    println!(
        "chip profile on digits {digits:?}: {} train / {} test samples, seed {seed}",
        train.len(),
        test.len()
    );

    let t0 = std::time::Instant::now();
    let result = run_stage_plan_restarts(
        &built.topology,
        &built.plan,
        &train,
        &test,
        &SeedTree::new(seed),
        built.restarts,
        |s| built.init_state(s),
    )
    .unwrap();

    for st in &result.stages {
        println!(
            "stage {:<22} best accuracy {}",
            st.name,
            st.best_accuracy
                .map(|a| format!("{:.2}%", a * 100.0))
                .unwrap_or_else(|| "-".into())
        );
    }
    println!(
        "final single-spike accuracy {:.2}% ({} no-decision) in {:.0} s",
        result.final_eval.accuracy() * 100.0,
        result.final_eval.no_decision,
        t0.elapsed().as_secs_f64()
    );
}
