//! Scenario day CSV files and the synthetic day generator.
//!
//! One file per day, one row per period:
//! `t,price_usd_per_mwh,load_<bus>_mw,...,res_<bus>_mw,...` with a load
//! column for every demand site and a renewable column for every generation
//! site declared in the case. Reactive demand is reconstructed from the
//! case's uniform load power factor.

use super::{format_f64, parse_cell, read_to_string, write_string, IoError};
use crate::grid::{MicrogridSpec, Realization, ResKind, ScenarioDay};
use crate::reference::ScenarioLibrary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Parameters of the synthetic day generator: a diurnal demand shape with
/// evening and midday bumps, a solar bell with day-level clearness,
/// autocorrelated wind, and tiered prices with multiplicative deviations.
/// One global `volatility` knob scales every random component, so zero
/// volatility reproduces the smooth shapes exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of days to generate.
    pub days: usize,
    pub seed: u64,
    /// Global multiplier on every noise amplitude; 1 is nominal, 0 is none.
    pub volatility: f64,
    /// Demand level at the overnight valley, as a fraction of site peak.
    pub load_base: f64,
    pub evening_peak_hour: f64,
    pub evening_peak_gain: f64,
    pub evening_peak_width_hours: f64,
    pub midday_peak_hour: f64,
    pub midday_peak_gain: f64,
    pub midday_peak_width_hours: f64,
    /// Solar window is always 06:00-18:00; this scales day-to-day clearness
    /// spread.
    pub clearness_spread: f64,
    /// Wind level around which the process reverts, fraction of rating.
    pub wind_mean: f64,
    /// Lag-one correlation of the wind process, per period.
    pub wind_persistence: f64,
    pub wind_spread: f64,
    /// Hour boundaries of the price tiers, ascending within (0, 24).
    pub price_tier_hours: Vec<f64>,
    /// Tier prices, $/MWh; one more entry than there are boundaries.
    pub price_tier_values: Vec<f64>,
    /// Multiplicative price deviation, percent of the tier value.
    pub price_deviation_pct: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            days: 20,
            seed: 7,
            volatility: 1.0,
            load_base: 0.62,
            evening_peak_hour: 19.0,
            evening_peak_gain: 0.30,
            evening_peak_width_hours: 3.0,
            midday_peak_hour: 11.0,
            midday_peak_gain: 0.14,
            midday_peak_width_hours: 4.0,
            clearness_spread: 0.15,
            wind_mean: 0.45,
            wind_persistence: 0.97,
            wind_spread: 0.22,
            price_tier_hours: vec![8.0, 11.0, 15.0, 18.0, 22.0],
            price_tier_values: vec![40.0, 80.0, 130.0, 80.0, 130.0, 40.0],
            price_deviation_pct: 15.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |message: String| IoError::Config {
            path: "synthetic generator".into(),
            message,
        };
        if self.days == 0 {
            return Err(bad("day count must be at least 1".into()));
        }
        if self.volatility < 0.0 {
            return Err(bad(format!("volatility {} is negative", self.volatility)));
        }
        if self.price_tier_values.len() != self.price_tier_hours.len() + 1 {
            return Err(bad(format!(
                "{} tier prices for {} boundaries (need one more price than boundaries)",
                self.price_tier_values.len(),
                self.price_tier_hours.len()
            )));
        }
        if self
            .price_tier_hours
            .windows(2)
            .any(|w| w[0] >= w[1])
            || self.price_tier_hours.iter().any(|h| !(0.0..24.0).contains(h))
        {
            return Err(bad("tier boundaries must ascend within (0, 24)".into()));
        }
        if !(0.0..1.0).contains(&self.wind_persistence) {
            return Err(bad(format!(
                "wind persistence {} outside [0, 1)",
                self.wind_persistence
            )));
        }
        Ok(())
    }

    /// Tier price at an hour of day.
    pub fn tier_price(&self, hour: f64) -> f64 {
        let i = self.price_tier_hours.iter().filter(|b| hour >= **b).count();
        self.price_tier_values[i]
    }

    /// Smooth demand shape (fraction of site peak) at an hour of day.
    pub fn load_shape(&self, hour: f64) -> f64 {
        let bump = |center: f64, width: f64| {
            let z = (hour - center) / width;
            (-z * z).exp()
        };
        self.load_base
            + self.evening_peak_gain * bump(self.evening_peak_hour, self.evening_peak_width_hours)
            + self.midday_peak_gain * bump(self.midday_peak_hour, self.midday_peak_width_hours)
    }

    /// Clear-sky solar shape (fraction of rating) at an hour of day.
    pub fn solar_shape(hour: f64) -> f64 {
        if (6.0..18.0).contains(&hour) {
            let s = (std::f64::consts::PI * (hour - 6.0) / 12.0).sin();
            s * s
        } else {
            0.0
        }
    }
}

/// Generates a deterministic library of synthetic days for the given case.
/// Each day draws from an independent stream of the seeded generator, so the
/// library is reproducible as a whole and per day.
pub fn generate_synthetic(
    cfg: &SynthConfig,
    spec: &MicrogridSpec,
) -> Result<ScenarioLibrary, IoError> {
    cfg.validate()?;
    let horizon = spec.horizon;
    let vol = cfg.volatility;
    let mut days = Vec::with_capacity(cfg.days);
    for s in 0..cfg.days {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s as u64 + 1);
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        // Day-level factors: overall demand level and solar clearness.
        let day_scale = (1.0 + vol * 0.05 * normal()).clamp(0.7, 1.3);
        let clearness = (1.0 - vol * cfg.clearness_spread * normal().abs()).clamp(0.25, 1.0);
        let mut wind = (cfg.wind_mean + vol * cfg.wind_spread * normal()).clamp(0.0, 1.0);
        let innovation = (1.0 - cfg.wind_persistence * cfg.wind_persistence).sqrt();
        let mut periods = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let hour = 24.0 * t as f64 / horizon as f64;
            let mut load_mw = vec![0.0; spec.network.bus_count];
            let shape = cfg.load_shape(hour) * day_scale;
            for site in &spec.load {
                let jitter = (1.0 + vol * 0.08 * normal()).max(0.0);
                load_mw[site.bus] +=
                    (site.peak_mw * shape * jitter).clamp(0.0, 1.5 * site.peak_mw);
            }
            let mut res_mw = vec![0.0; spec.network.bus_count];
            for site in &spec.res {
                let output = match site.kind {
                    ResKind::Solar => {
                        let jitter = (1.0 + vol * 0.10 * normal()).max(0.0);
                        site.rating_mw * SynthConfig::solar_shape(hour) * clearness * jitter
                    }
                    ResKind::Wind => site.rating_mw * wind,
                };
                res_mw[site.bus] += output.clamp(0.0, site.rating_mw);
            }
            // The wind state advances once per period regardless of how many
            // sites share it.
            wind = (cfg.wind_mean
                + cfg.wind_persistence * (wind - cfg.wind_mean)
                + vol * cfg.wind_spread * innovation * normal())
            .clamp(0.0, 1.0);
            let price = (cfg.tier_price(hour)
                * (1.0 + vol * cfg.price_deviation_pct / 100.0 * normal()))
            .max(0.0);
            periods.push(Realization::with_power_factor(
                load_mw,
                res_mw,
                price,
                spec.load_power_factor,
            ));
        }
        days.push(ScenarioDay {
            id: format!("day-{s:03}"),
            periods,
        });
    }
    Ok(ScenarioLibrary::new(days, spec.network.bus_count)?)
}

fn header_columns(spec: &MicrogridSpec) -> Vec<String> {
    let mut columns = vec!["t".to_string(), "price_usd_per_mwh".to_string()];
    for site in &spec.load {
        columns.push(format!("load_{}_mw", site.bus));
    }
    for site in &spec.res {
        columns.push(format!("res_{}_mw", site.bus));
    }
    columns
}

/// Writes one CSV per day into `dir`, named `<id>.csv`.
pub fn save_library(
    dir: &Path,
    library: &ScenarioLibrary,
    spec: &MicrogridSpec,
) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::File {
        path: dir.display().to_string(),
        source,
    })?;
    let header = header_columns(spec).join(",");
    for day in &library.days {
        let mut out = String::with_capacity(64 * day.periods.len());
        out.push_str(&header);
        out.push('\n');
        for (t, real) in day.periods.iter().enumerate() {
            out.push_str(&t.to_string());
            out.push(',');
            out.push_str(&format_f64(real.price));
            for site in &spec.load {
                out.push(',');
                out.push_str(&format_f64(real.load_mw[site.bus]));
            }
            for site in &spec.res {
                out.push(',');
                out.push_str(&format_f64(real.res_mw[site.bus]));
            }
            out.push('\n');
        }
        write_string(&dir.join(format!("{}.csv", day.id)), &out)?;
    }
    Ok(())
}

/// Loads every `*.csv` under `dir` (sorted by name) as one scenario day
/// each, validating the header against the case's declared sites and the
/// row count against the case horizon.
pub fn load_library(dir: &Path, spec: &MicrogridSpec) -> Result<ScenarioLibrary, IoError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|source| IoError::File {
            path: dir.display().to_string(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(IoError::Config {
            path: dir.display().to_string(),
            message: "no scenario files (*.csv) found".into(),
        });
    }
    let expected = header_columns(spec);
    let mut days = Vec::with_capacity(paths.len());
    let mut first_name = String::new();
    for path in &paths {
        let day = load_day(path, spec, &expected)?;
        if day.periods.len() != spec.horizon {
            return Err(IoError::Parse {
                path: path.display().to_string(),
                line: day.periods.len() + 1,
                column: None,
                message: format!(
                    "{} data rows but the case horizon is {}{}",
                    day.periods.len(),
                    spec.horizon,
                    if first_name.is_empty() {
                        String::new()
                    } else {
                        format!(" (as in {first_name})")
                    }
                ),
            });
        }
        if first_name.is_empty() {
            first_name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        days.push(day);
    }
    Ok(ScenarioLibrary::new(days, spec.network.bus_count)?)
}

fn load_day(
    path: &Path,
    spec: &MicrogridSpec,
    expected_header: &[String],
) -> Result<ScenarioDay, IoError> {
    let contents = read_to_string(path)?;
    let parse_err = |line: usize, column: Option<usize>, message: String| IoError::Parse {
        path: path.display().to_string(),
        line,
        column,
        message,
    };
    let mut lines = contents.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, None, "empty file".into()))?;
    let found: Vec<&str> = header.split(',').map(str::trim).collect();
    for (i, want) in expected_header.iter().enumerate() {
        match found.get(i) {
            Some(got) if *got == want => {}
            Some(got) => {
                return Err(parse_err(
                    1,
                    Some(i + 1),
                    format!("expected column '{want}', found '{got}'"),
                ))
            }
            None => {
                return Err(parse_err(
                    1,
                    Some(i + 1),
                    format!("missing column '{want}'"),
                ))
            }
        }
    }
    if found.len() > expected_header.len() {
        return Err(parse_err(
            1,
            Some(expected_header.len() + 1),
            format!("unexpected column '{}'", found[expected_header.len()]),
        ));
    }
    let mut periods = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != expected_header.len() {
            return Err(parse_err(
                line_no,
                None,
                format!(
                    "{} cells in a {}-column file",
                    cells.len(),
                    expected_header.len()
                ),
            ));
        }
        let t = cells[0].trim().parse::<usize>().map_err(|_| {
            parse_err(
                line_no,
                Some(1),
                format!("'{}' is not a period index", cells[0].trim()),
            )
        })?;
        if t != periods.len() {
            return Err(parse_err(
                line_no,
                Some(1),
                format!("period {t} out of order (expected {})", periods.len()),
            ));
        }
        let price = parse_cell(cells[1], path, line_no, 2)?;
        let mut load_mw = vec![0.0; spec.network.bus_count];
        let mut res_mw = vec![0.0; spec.network.bus_count];
        let mut col = 2;
        for site in &spec.load {
            load_mw[site.bus] += parse_cell(cells[col], path, line_no, col + 1)?;
            col += 1;
        }
        for site in &spec.res {
            res_mw[site.bus] += parse_cell(cells[col], path, line_no, col + 1)?;
            col += 1;
        }
        periods.push(Realization::with_power_factor(
            load_mw,
            res_mw,
            price,
            spec.load_power_factor,
        ));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ScenarioDay { id, periods })
}
