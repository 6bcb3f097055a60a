//! Scratch diagnosis of the single-scenario tracking run (temporary).

use mgoco_core::grid::{tiny_spec, Realization, ScenarioDay};
use mgoco_core::reference::ScenarioLibrary;
use mgoco_core::reference::solve_library;
use mgoco_core::sim::{run_day, run_m4, DayContext, Policy};
use mgoco_core::solver::AdmmSettings;
use std::f64::consts::PI;

fn main() {
    let spec = tiny_spec(96);
    let demand: Vec<f64> = (0..96)
        .map(|t| 0.65 - 0.25 * (2.0 * PI * t as f64 / 96.0).cos())
        .collect();
    let periods: Vec<Realization> = demand
        .iter()
        .map(|d| Realization::with_power_factor(vec![0.0, *d], vec![0.0, 0.0], 100.0, 0.95))
        .collect();
    let day = ScenarioDay {
        id: "collapse-day".into(),
        periods,
    };
    let library = ScenarioLibrary::new(vec![day.clone()], 2).unwrap();
    let sequences = solve_library(&spec, &library, &AdmmSettings::default()).unwrap();
    let ctx = DayContext::new(&spec, &library, &sequences).unwrap();

    let offline = run_m4(&ctx, &day).unwrap();
    let run = run_day(&ctx, &day, Policy::Adaptive, 7).unwrap();
    let online = &run.result;

    println!("ref grid[0..8] = {:?}", &sequences.entries[0].grid[..8]);
    println!("ref soc[0][0..8] = {:?}", &sequences.entries[0].soc[0][..8]);
    println!("off grid[0..8] = {:?}", &offline.grid_mw[..8]);
    println!("on  grid[0..8] = {:?}", &online.grid_mw[..8]);
    println!("on  soc[0][0..8] = {:?}", &online.soc[0][..8]);
    for t in [0usize, 1, 2, 3, 12, 48, 95] {
        let d = &online.decisions[t];
        println!(
            "t={t} c={:.4} d={:.4} dg={:.4} | off dg≈grid {:.4}",
            d.charge_mw[0], d.discharge_mw[0], d.dg_mw[0], offline.grid_mw[t]
        );
    }
    let mad: f64 = (0..96)
        .map(|t| (online.grid_mw[t] - offline.grid_mw[t]).abs())
        .sum::<f64>()
        / 96.0;
    println!("mad = {mad}");
}
