use std::fmt;
use std::path::PathBuf;

use cptring::model::{DriveSpec, Site, SystemParams};
use cptring::noise_mc::{Scheme, DEFAULT_MC_DT};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
    Fig5a,
    Fig5b,
    Fig6,
}

impl Preset {
    pub const ALL: [Preset; 6] = [Preset::Fig2, Preset::Fig3, Preset::Fig4, Preset::Fig5a, Preset::Fig5b, Preset::Fig6];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5a => "fig5a",
            Preset::Fig5b => "fig5b",
            Preset::Fig6 => "fig6",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Spectrum,
    Evolve,
    Contrast,
    Reciprocity,
    Sweep,
    Mc,
    Preset(Preset),
}

impl Scenario {
    pub fn label(self) -> String {
        match self {
            Scenario::Spectrum => "spectrum".into(),
            Scenario::Evolve => "evolve".into(),
            Scenario::Contrast => "contrast".into(),
            Scenario::Reciprocity => "reciprocity".into(),
            Scenario::Sweep => "sweep".into(),
            Scenario::Mc => "mc".into(),
            Scenario::Preset(p) => format!("preset:{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_final: f64,
    /// Defaults to `t_final / 800`.
    #[serde(default)]
    pub dt_out: Option<f64>,
}

impl TimeGrid {
    pub fn dt_out(&self) -> f64 {
        self.dt_out.unwrap_or(self.t_final / 800.0)
    }
}

/// Parameters a sweep may scan. Values are ratios to κ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    JOverKappa,
    EOverKappa,
    DeltaOverKappa,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::JOverKappa => "j_over_kappa",
            SweepParam::EOverKappa => "e_over_kappa",
            SweepParam::DeltaOverKappa => "delta_over_kappa",
        }
    }

    /// Copy of `params` with this parameter set to `ratio · κ`.
    pub fn apply(self, params: &SystemParams, ratio: f64) -> SystemParams {
        let mut p = *params;
        let value = ratio * p.kappa;
        match self {
            SweepParam::JOverKappa => p.coupling_j = value,
            SweepParam::EOverKappa => p.drive.amplitude_e = value,
            SweepParam::DeltaOverKappa => p.drive.detuning_delta = value,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Where to write. Read from config files but not echoed into results,
    /// so identical runs written to different places stay byte-identical.
    #[serde(default, skip_serializing)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReciprocitySites {
    pub forward: Site,
    pub backward: Site,
}

impl Default for ReciprocitySites {
    fn default() -> Self {
        ReciprocitySites { forward: Site::gain(1), backward: Site::loss(3) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub n_traj: usize,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings { n_traj: 10_000, dt: DEFAULT_MC_DT, scheme: Scheme::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSpec {
    pub i_sat: f64,
    pub threshold: f64,
}

fn default_pair() -> [Site; 2] {
    [Site::gain(1), Site::loss(1)]
}

fn default_snapshots() -> Vec<f64> {
    vec![20.0]
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemParams,
    pub scenario: Scenario,
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_pair")]
    pub contrast_pair: [Site; 2],
    #[serde(default)]
    pub reciprocity: ReciprocitySites,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default)]
    pub saturation: Option<SaturationSpec>,
    /// Snapshot times for the contrast-distribution preset.
    #[serde(default = "default_snapshots")]
    pub snapshot_times: Vec<f64>,
}

impl ScenarioConfig {
    /// Six cavities, κ = 1, J/κ = 0.6, drive E/κ = 5 on a1, κt ∈ [0, 8].
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            system: SystemParams::new(3, 1.0, 0.6).with_drive(DriveSpec::new(Site::gain(1), 5.0, 0.0)),
            scenario,
            time_grid: TimeGrid { t_final: 8.0, dt_out: None },
            sweep: None,
            output: OutputSpec::default(),
            seed: None,
            contrast_pair: default_pair(),
            reciprocity: ReciprocitySites::default(),
            mc: McSettings::default(),
            saturation: None,
            snapshot_times: default_snapshots(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rejects configs that cannot run, naming the offending field.
    pub fn validate(&self) -> Result<(), RunError> {
        self.system.validate()?;
        let bad = |field: &str, reason: String| Err(RunError::Config { field: field.into(), reason });
        let tg = &self.time_grid;
        if !(tg.t_final.is_finite() && tg.t_final > 0.0) {
            return bad("time_grid.t_final", format!("must be finite and > 0, got {}", tg.t_final));
        }
        let dt_out = tg.dt_out();
        if !(dt_out.is_finite() && dt_out > 0.0 && dt_out <= tg.t_final) {
            return bad("time_grid.dt_out", format!("must lie in (0, t_final], got {dt_out}"));
        }
        let n = self.system.n_cavities();
        match self.scenario {
            Scenario::Sweep => {
                let Some(sweep) = &self.sweep else {
                    return bad("sweep", "the sweep scenario needs a parameter and a value list".into());
                };
                if let Some(v) = sweep.values.iter().find(|v| !v.is_finite()) {
                    return bad("sweep.values", format!("non-finite value {v}"));
                }
                if sweep.param == SweepParam::JOverKappa && sweep.values.iter().any(|&v| v < 0.0) {
                    return bad("sweep.values", "J/κ must be >= 0".into());
                }
            }
            Scenario::Contrast => {
                let [i, j] = self.contrast_pair;
                if i == j {
                    return bad("contrast_pair", "needs two distinct cavities".into());
                }
                if let Some(s) = [i, j].into_iter().find(|s| s.index() >= n) {
                    return bad("contrast_pair", format!("site {s} outside a ring of {n} cavities"));
                }
            }
            Scenario::Mc => {
                if self.mc.n_traj == 0 {
                    return bad("mc.n_traj", "need at least one trajectory".into());
                }
                if !(self.mc.dt.is_finite() && self.mc.dt > 0.0) {
                    return bad("mc.dt", format!("must be finite and > 0, got {}", self.mc.dt));
                }
            }
            Scenario::Preset(Preset::Fig5b) => {
                if self.snapshot_times.is_empty() || self.snapshot_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return bad("snapshot_times", "need one or more finite positive times".into());
                }
            }
            _ => {}
        }
        if let Some(s) = &self.saturation {
            if !(s.i_sat.is_finite() && s.i_sat > 0.0) {
                return bad("saturation.i_sat", format!("must be finite and > 0, got {}", s.i_sat));
            }
            if !(s.threshold > 0.0 && s.threshold < 1.0) {
                return bad("saturation.threshold", format!("must lie in (0, 1), got {}", s.threshold));
            }
        }
        Ok(())
    }
}
