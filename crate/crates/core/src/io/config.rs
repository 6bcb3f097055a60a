//! Run configuration file: a TOML document selecting a bundled case and
//! overriding the tunable parameters of the pipeline.
//!
//! Every section may be omitted; an empty file reproduces the default
//! 33-bus study at 288 periods. Unknown keys are rejected so typos surface
//! instead of silently falling back to defaults.

use super::scenario::SynthConfig;
use super::IoError;
use crate::grid::{ieee33_spec, tiny_spec, MicrogridSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSection,
    pub devices: DeviceSection,
    pub pricing: PricingSection,
    pub oco: OcoSection,
    pub reference: ReferenceSection,
    pub noise: NoiseSection,
    pub scenario: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Bundled case name: `ieee33` (the 33-bus study) or `tiny` (a two-bus
    /// oracle-sized case).
    pub case: String,
    /// Periods per day.
    pub horizon: usize,
    /// Replaces the case's monitored bus list when present.
    pub monitored: Option<Vec<usize>>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            case: "ieee33".into(),
            horizon: 288,
            monitored: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    /// Starting state of charge applied to every storage asset.
    pub initial_soc: Option<f64>,
    /// Multiplier on every demand site's peak.
    pub load_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PricingSection {
    pub smoothing_step: Option<f64>,
    pub smoothing_mean: Option<f64>,
    /// Weight on squared state-of-charge tracking error.
    pub track_soc_weight: Option<f64>,
    /// Weight on squared tie-line tracking error.
    pub track_grid_weight: Option<f64>,
    /// Violation probability budget for random bounds.
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcoSection {
    /// Step-size decay exponent offset.
    pub chi: f64,
    /// Queue-lift growth exponent offset.
    pub delta: f64,
}

impl Default for OcoSection {
    fn default() -> Self {
        OcoSection {
            chi: 0.1,
            delta: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    /// Kernel bandwidth on normalized observation distances.
    pub bandwidth: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection { bandwidth: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Multiplicative corruption levels for the robustness sweep, percent.
    pub levels_pct: Vec<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            levels_pct: vec![
                10.0 / 3.0,
                20.0 / 3.0,
                10.0,
                40.0 / 3.0,
                50.0 / 3.0,
            ],
        }
    }
}

impl ConfigFile {
    /// Materializes the configured case with every override applied.
    pub fn build_spec(&self) -> Result<MicrogridSpec, IoError> {
        let mut spec = match self.network.case.as_str() {
            "ieee33" => ieee33_spec(self.network.horizon),
            "tiny" => tiny_spec(self.network.horizon),
            other => {
                return Err(IoError::Config {
                    path: "[network] case".into(),
                    message: format!("unknown case '{other}' (expected 'ieee33' or 'tiny')"),
                })
            }
        };
        if let Some(monitored) = &self.network.monitored {
            spec.network.monitored = monitored.clone();
        }
        if let Some(soc) = self.devices.initial_soc {
            for asset in &mut spec.ges {
                asset.initial_soc = soc;
            }
        }
        if let Some(scale) = self.devices.load_scale {
            for site in &mut spec.load {
                site.peak_mw *= scale;
            }
        }
        let p = &mut spec.pricing;
        if let Some(v) = self.pricing.smoothing_step {
            p.smoothing_step = v;
        }
        if let Some(v) = self.pricing.smoothing_mean {
            p.smoothing_mean = v;
        }
        if let Some(v) = self.pricing.track_soc_weight {
            p.track_soc_weight = v;
        }
        if let Some(v) = self.pricing.track_grid_weight {
            p.track_grid_weight = v;
        }
        if let Some(v) = self.pricing.confidence {
            p.confidence = v;
        }
        spec.validate()
            .map_err(|e| IoError::Config {
                path: "configured case".into(),
                message: e.to_string(),
            })?;
        Ok(spec)
    }
}

/// Reads and parses a configuration file; parse errors carry the location
/// reported by the TOML parser.
pub fn load_config(path: &Path) -> Result<ConfigFile, IoError> {
    let contents = super::read_to_string(path)?;
    toml::from_str(&contents).map_err(|e| IoError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_reproduces_the_default_study() {
        let cfg: ConfigFile = toml::from_str("").unwrap();
        assert_eq!(cfg, ConfigFile::default());
        let spec = cfg.build_spec().unwrap();
        assert_eq!(spec.horizon, 288);
        assert_eq!(spec.network.bus_count, 33);
        assert_eq!(cfg.noise.levels_pct.len(), 5);
        assert!((cfg.noise.levels_pct[0] - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(cfg.oco.chi, 0.1);
        assert_eq!(cfg.oco.delta, 0.2);
        assert_eq!(cfg.reference.bandwidth, 1.0);
    }

    #[test]
    fn overrides_reach_the_built_case() {
        let cfg: ConfigFile = toml::from_str(
            r#"
            [network]
            case = "tiny"
            horizon = 4
            monitored = [0, 1]

            [devices]
            initial_soc = 0.7
            load_scale = 2.0

            [pricing]
            smoothing_step = 9.0
            confidence = 0.1

            [oco]
            chi = 0.2

            [reference]
            bandwidth = 0.5
            "#,
        )
        .unwrap();
        let spec = cfg.build_spec().unwrap();
        assert_eq!(spec.horizon, 4);
        assert_eq!(spec.network.monitored, vec![0, 1]);
        assert_eq!(spec.ges[0].initial_soc, 0.7);
        assert_eq!(spec.load[0].peak_mw, 2.0);
        assert_eq!(spec.pricing.smoothing_step, 9.0);
        assert_eq!(spec.pricing.confidence, 0.1);
        assert_eq!(cfg.oco.chi, 0.2);
        assert_eq!(cfg.oco.delta, 0.2);
        assert_eq!(cfg.reference.bandwidth, 0.5);
    }

    #[test]
    fn unknown_keys_and_cases_are_rejected() {
        let err = toml::from_str::<ConfigFile>("[network]\ncaze = \"ieee33\"\n").unwrap_err();
        assert!(err.to_string().contains("caze"));
        let cfg: ConfigFile = toml::from_str("[network]\ncase = \"mystery\"\n").unwrap();
        let err = cfg.build_spec().unwrap_err();
        assert!(err.to_string().contains("mystery"));
    }

    #[test]
    fn files_load_with_located_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[network]\nhorizon = \"lots\"\n").unwrap();
        let err = load_config(&path).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("run.toml"), "{text}");
        assert!(text.contains("line 2"), "{text}");
        std::fs::write(&path, "[scenario]\ndays = 3\nseed = 11\n").unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.scenario.days, 3);
        assert_eq!(cfg.scenario.seed, 11);
        assert_eq!(cfg.scenario.volatility, 1.0);
    }

    #[test]
    fn invalid_override_values_fail_spec_validation() {
        let cfg: ConfigFile = toml::from_str("[devices]\ninitial_soc = 1.5\n").unwrap();
        assert!(cfg.build_spec().is_err());
    }
}
