//! Manual diagnostic: prints regret/violation scaling of the adaptive
//! controller on the drifting benchmark family. Run with
//! `cargo test -p mgoco-core --test drift_scaling_probe -- --ignored --nocapture`.

use mgoco_core::oco::synthetic::{run_drift_benchmark, DriftSetup};
use mgoco_core::AdmmSettings;
use std::time::Instant;

#[test]
#[ignore = "diagnostic probe, not a correctness gate"]
fn print_scaling_table() {
    let settings = AdmmSettings::default();
    for horizon in [1000usize, 4000, 16000] {
        for seed in [1u64, 2, 3] {
            let start = Instant::now();
            let (_, m) =
                run_drift_benchmark(&DriftSetup::new(4, horizon, seed), &settings).unwrap();
            println!(
                "T={horizon:6} seed={seed} regret={:12.4} hard={:10.4} soft={:10.4} path={:8.4} wall={:.2}s",
                m.regret.unwrap(),
                m.hard_violation,
                m.soft_violation,
                m.benchmark_path.unwrap(),
                start.elapsed().as_secs_f64()
            );
        }
    }
}
