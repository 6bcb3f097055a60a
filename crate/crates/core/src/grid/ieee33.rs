//! Bundled study cases: the classic 33-bus radial feeder scaled to a
//! microgrid with two storage assets, one dispatchable generator, and two
//! renewable sites, plus a deliberately small two-bus case for oracle-sized
//! tests.
//!
//! The feeder data is the widely published 33-bus distribution test system
//! (12.66 kV, branch impedances in ohms, peak loads in kW). Impedances are
//! converted to per-unit on a 10 MVA base; the published peak loads set the
//! relative sizes of the load sites, rescaled so the fleet totals
//! [`TOTAL_PEAK_MW`].

use super::device::{
    DgSpec, GesSpec, LoadSite, MicrogridSpec, PricingSpec, Profile, ResKind, ResSite,
    StochasticBound,
};
use super::network::{Branch, NetworkSpec};

/// Branch list and peak loads of the 33-bus feeder, 1-based bus numbers:
/// `(from, to, R_ohm, X_ohm, P_kw, Q_kvar)`; the load attaches at `to`.
/// Bus 1 is the substation.
const FEEDER_33: [(usize, usize, f64, f64, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470, 100.0, 60.0),
    (2, 3, 0.4930, 0.2511, 90.0, 40.0),
    (3, 4, 0.3660, 0.1864, 120.0, 80.0),
    (4, 5, 0.3811, 0.1941, 60.0, 30.0),
    (5, 6, 0.8190, 0.7070, 60.0, 20.0),
    (6, 7, 0.1872, 0.6188, 200.0, 100.0),
    (7, 8, 0.7114, 0.2351, 200.0, 100.0),
    (8, 9, 1.0300, 0.7400, 60.0, 20.0),
    (9, 10, 1.0440, 0.7400, 60.0, 20.0),
    (10, 11, 0.1966, 0.0650, 45.0, 30.0),
    (11, 12, 0.3744, 0.1238, 60.0, 35.0),
    (12, 13, 1.4680, 1.1550, 60.0, 35.0),
    (13, 14, 0.5416, 0.7129, 120.0, 80.0),
    (14, 15, 0.5910, 0.5260, 60.0, 10.0),
    (15, 16, 0.7463, 0.5450, 60.0, 20.0),
    (16, 17, 1.2890, 1.7210, 60.0, 20.0),
    (17, 18, 0.7320, 0.5740, 90.0, 40.0),
    (2, 19, 0.1640, 0.1565, 90.0, 40.0),
    (19, 20, 1.5042, 1.3554, 90.0, 40.0),
    (20, 21, 0.4095, 0.4784, 90.0, 40.0),
    (21, 22, 0.7089, 0.9373, 90.0, 40.0),
    (3, 23, 0.4512, 0.3083, 90.0, 50.0),
    (23, 24, 0.8980, 0.7091, 420.0, 200.0),
    (24, 25, 0.8960, 0.7011, 420.0, 200.0),
    (6, 26, 0.2030, 0.1034, 60.0, 25.0),
    (26, 27, 0.2842, 0.1447, 60.0, 25.0),
    (27, 28, 1.0590, 0.9337, 60.0, 20.0),
    (28, 29, 0.8042, 0.7006, 120.0, 70.0),
    (29, 30, 0.5075, 0.2585, 200.0, 600.0),
    (30, 31, 0.9744, 0.9630, 150.0, 70.0),
    (31, 32, 0.3105, 0.3619, 210.0, 100.0),
    (32, 33, 0.3410, 0.5302, 60.0, 40.0),
];

/// Feeder voltage base in kV (line-to-line).
const BASE_KV: f64 = 12.66;
/// Power base in MVA for the per-unit conversion.
const BASE_MVA: f64 = 10.0;
/// Substation voltage in per-unit; slightly above nominal to center the
/// feeder's natural sag inside the band.
const SUBSTATION_V: f64 = 1.02;
/// Per-unit voltage band enforced at the monitored buses.
const V_MIN: f64 = 0.95;
const V_MAX: f64 = 1.05;
/// Total fleet peak demand, MW. The published 33-bus loads (3.715 MW total)
/// are rescaled to this figure so the mean daily demand lands near 5 MW.
const TOTAL_PEAK_MW: f64 = 6.25;
/// End-of-feeder buses whose voltages the dispatch problem protects
/// (0-based): the two weakest points of the main trunk and the far lateral.
const MONITORED: [usize; 2] = [17, 32];

/// Three-tier time-of-use energy price in $/MWh for a period index on an
/// evenly spaced day: valley overnight, shoulder morning/evening, peak
/// midday and early evening.
pub fn three_tier_price(horizon: usize, t: usize) -> f64 {
    let hour = 24.0 * t as f64 / horizon as f64;
    match hour {
        h if h < 8.0 => 40.0,
        h if h < 11.0 => 80.0,
        h if h < 15.0 => 130.0,
        h if h < 18.0 => 80.0,
        h if h < 22.0 => 130.0,
        _ => 40.0,
    }
}

/// The default study case: the 33-bus feeder with a battery at the end of
/// the main trunk, aggregated flexible demand on the heavy lateral, one
/// fuel generator mid-trunk, wind at the trunk's lower branch, and solar
/// mid-feeder.
pub fn ieee33_spec(horizon: usize) -> MicrogridSpec {
    let bus_count = 33;
    let mut branches = Vec::with_capacity(32);
    let mut load = Vec::new();
    let z_base = BASE_KV * BASE_KV / BASE_MVA;
    let total_kw: f64 = FEEDER_33.iter().map(|row| row.4).sum();
    let load_scale = TOTAL_PEAK_MW / (total_kw / 1000.0);
    for &(from, to, r_ohm, x_ohm, p_kw, _q_kvar) in &FEEDER_33 {
        branches.push(Branch {
            from: from - 1,
            to: to - 1,
            resistance: r_ohm / z_base,
            reactance: x_ohm / z_base,
        });
        if p_kw > 0.0 {
            load.push(LoadSite {
                bus: to - 1,
                peak_mw: p_kw / 1000.0 * load_scale,
            });
        }
    }
    let network = NetworkSpec {
        bus_count,
        branches,
        slack_voltage: SUBSTATION_V,
        base_mva: BASE_MVA,
        v_min: V_MIN,
        v_max: V_MAX,
        monitored: MONITORED.to_vec(),
    };
    let battery = GesSpec {
        id: "es".into(),
        bus: 17,
        capacity_mwh: 3.0,
        charge_efficiency: 0.95,
        discharge_efficiency: 0.95,
        self_discharge: 0.0,
        baseline_drift: Profile::Constant(0.0),
        charge_cost: 5.0,
        discharge_cost: 15.0,
        charge_limit: StochasticBound::constant(1.4, 0.07),
        discharge_limit: StochasticBound::constant(1.4, 0.07),
        soc_upper: StochasticBound::constant(0.9, 0.02),
        soc_lower: StochasticBound::constant(0.1, 0.02),
        power_factor: 0.95,
        initial_soc: 0.5,
    };
    let flexible_demand = GesSpec {
        id: "ves".into(),
        bus: 24,
        capacity_mwh: 1.5,
        charge_efficiency: 0.95,
        discharge_efficiency: 0.95,
        self_discharge: 0.0,
        baseline_drift: Profile::Constant(0.0),
        charge_cost: 8.0,
        discharge_cost: 18.0,
        charge_limit: StochasticBound::constant(0.7, 0.035),
        discharge_limit: StochasticBound::constant(0.7, 0.035),
        soc_upper: StochasticBound::constant(0.9, 0.02),
        soc_lower: StochasticBound::constant(0.1, 0.02),
        power_factor: 0.95,
        initial_soc: 0.5,
    };
    let generator = DgSpec {
        id: "dg".into(),
        bus: 7,
        cost_quadratic: 8.0,
        cost_linear: 65.0,
        cost_fixed: 5.0,
        min_mw: 0.2,
        max_mw: 2.5,
        ramp_up_mw: 0.3,
        ramp_down_mw: 0.3,
    };
    let prices: Vec<f64> = (0..horizon).map(|t| three_tier_price(horizon, t)).collect();
    MicrogridSpec {
        horizon,
        load_power_factor: 0.95,
        network,
        ges: vec![battery, flexible_demand],
        dg: vec![generator],
        res: vec![
            ResSite {
                id: "wt".into(),
                bus: 29,
                rating_mw: 2.3,
                kind: ResKind::Wind,
            },
            ResSite {
                id: "pv".into(),
                bus: 14,
                rating_mw: 1.3,
                kind: ResKind::Solar,
            },
        ],
        load,
        pricing: PricingSpec {
            base_price: Profile::Series(prices),
            smoothing_step: 50.0,
            smoothing_mean: 50.0,
            track_soc_weight: 1e4,
            track_grid_weight: 1e-4,
            interval_hours: 1.0 / 12.0,
            confidence: 0.05,
        },
    }
}

/// A two-bus case small enough for brute-force oracles: one storage asset
/// and one generator behind a single branch, no renewables. Efficiencies are
/// exactly 1 so storage cycles conserve energy, which lets tests reduce the
/// search space.
pub fn tiny_spec(horizon: usize) -> MicrogridSpec {
    let network = NetworkSpec {
        bus_count: 2,
        branches: vec![Branch {
            from: 0,
            to: 1,
            resistance: 0.01,
            reactance: 0.01,
        }],
        slack_voltage: 1.0,
        base_mva: 1.0,
        v_min: 0.9,
        v_max: 1.1,
        monitored: vec![1],
    };
    MicrogridSpec {
        horizon,
        load_power_factor: 0.95,
        network,
        ges: vec![GesSpec {
            id: "es".into(),
            bus: 1,
            capacity_mwh: 1.0,
            charge_efficiency: 1.0,
            discharge_efficiency: 1.0,
            self_discharge: 0.0,
            baseline_drift: Profile::Constant(0.0),
            charge_cost: 5.0,
            discharge_cost: 15.0,
            charge_limit: StochasticBound::constant(1.0, 0.0),
            discharge_limit: StochasticBound::constant(1.0, 0.0),
            soc_upper: StochasticBound::constant(0.9, 0.0),
            soc_lower: StochasticBound::constant(0.1, 0.0),
            power_factor: 0.95,
            initial_soc: 0.5,
        }],
        dg: vec![DgSpec {
            id: "dg".into(),
            bus: 1,
            cost_quadratic: 2.0,
            cost_linear: 50.0,
            cost_fixed: 0.0,
            min_mw: 0.0,
            max_mw: 1.0,
            ramp_up_mw: 1.0,
            ramp_down_mw: 1.0,
        }],
        res: vec![],
        load: vec![LoadSite {
            bus: 1,
            peak_mw: 1.0,
        }],
        pricing: PricingSpec {
            base_price: Profile::Constant(100.0),
            smoothing_step: 1.0,
            smoothing_mean: 1.0,
            track_soc_weight: 1e4,
            track_grid_weight: 1e-4,
            interval_hours: 1.0 / 12.0,
            confidence: 0.05,
        },
    }
}
