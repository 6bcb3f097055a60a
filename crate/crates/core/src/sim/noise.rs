//! Multiplicative observation noise on the per-period realization.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::Realization;

/// One relative-error factor: `1 + pct·z/100` clipped at zero, with `z`
/// standard normal. The draw happens even at zero spread so that runs with
/// different noise levels consume the generator identically and stay
/// coupled draw-for-draw.
fn noise_factor<R: Rng>(rng: &mut R, noise_pct: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (1.0 + noise_pct * z / 100.0).max(0.0)
}

/// Returns the realization the dispatcher observes: each bus's demand and
/// each bus's renewable output scaled by an independent relative error of
/// the given percent standard deviation. A bus's active and reactive demand
/// share one factor, so observed power factors match the true ones; the
/// price is observed exactly. At zero noise the output is bitwise equal to
/// the input.
pub fn inject_noise<R: Rng>(real: &Realization, noise_pct: f64, rng: &mut R) -> Realization {
    let mut noisy = real.clone();
    for bus in 0..noisy.load_mw.len() {
        let f = noise_factor(rng, noise_pct);
        noisy.load_mw[bus] *= f;
        noisy.load_mvar[bus] *= f;
    }
    for bus in 0..noisy.res_mw.len() {
        let f = noise_factor(rng, noise_pct);
        noisy.res_mw[bus] *= f;
    }
    noisy
}
