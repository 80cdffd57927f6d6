//! Train the complete ten-digit profile end to end and print per-stage
//! accuracy.
//!
//! ```text
//! cargo run --release -p spikechip-core --example complete_pipeline -- 7
//! ```
//!
//! The full run takes hours on a desktop CPU. Stage epochs can be scaled
//! down for a quick look with `EPOCH_SCALE` (e.g. `EPOCH_SCALE=0.1`).

use spikechip_core::compress::run_stage_plan_restarts;
use spikechip_core::data::{load_split, EncodedDataset, Split, SubsetSpec};
use spikechip_core::profiles::{build_profile, Profile, ProfileOptions};
use spikechip_core::rng::SeedTree;

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7);

    let opts = ProfileOptions::new(Profile::Complete, SubsetSpec::all_digits());
    let mut built = build_profile(&opts).unwrap();
    if let Ok(scale) = std::env::var("EPOCH_SCALE") {
        let scale: f64 = scale.parse().expect("EPOCH_SCALE");
        for st in &mut built.plan.stages {
            if st.epochs > 0 {
                st.epochs = ((st.epochs as f64 * scale).round() as usize).max(1);
            }
        }
    }

    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let spec = SubsetSpec::all_digits();
    let train = EncodedDataset::build(&load_split(&dir, Split::Train).unwrap(), &spec, &built.preproc).unwrap();
    let test = EncodedDataset::build(&load_split(&dir, Split::Test).unwrap(), &spec, &built.preproc).unwrap();
    println!("complete profile: {} train / {} test samples, seed {seed}", train.len(), test.len());

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
            "stage {:<16} best accuracy {}  trace {}",
            st.name,
            st.best_accuracy
                .map(|a| format!("{:.2}%", a * 100.0))
                .unwrap_or_else(|| "-".into()),
            st.epoch_accuracies
                .iter()
                .map(|a| format!("{:.0}", a * 100.0))
                .collect::<Vec<_>>()
                .join(",")
        );
    }
    println!(
        "final spike-count accuracy {:.2}% in {:.0} s",
        result.final_eval.accuracy() * 100.0,
        t0.elapsed().as_secs_f64()
    );
}
