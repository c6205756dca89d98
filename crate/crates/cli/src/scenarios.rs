use std::collections::BTreeMap;

use cptring::evolution::{
    average_contrast, evolve_moments, output_flux, photon_numbers, reciprocity_experiment, saturation_check,
    MomentSeries, MomentState,
};
use cptring::model::{build_matrix, DriveSpec, Site, SystemParams};
use cptring::noise_mc::{compare_to_deterministic, sample_trajectories, McConfig};
use cptring::spectra::{
    analytic_spectrum, bloch_families, classify_regime, default_cluster_tol, exceptional_points,
    numerical_spectrum, DEFAULT_REGIME_TOL,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Preset, Scenario, ScenarioConfig, SweepParam, TimeGrid};
use crate::output::{Column, Metadata, ScenarioResult};
use crate::RunError;

const FLUX_CAVEAT: &str =
    "output flux of the driven cavity omits the reflected drive term; only 2γ⟨c†c⟩ is reported";

/// `J/κ` grid of the photon-number and contrast distributions.
pub fn distribution_grid() -> Vec<f64> {
    (1..=300).map(|k| k as f64 / 100.0).collect()
}

/// Config a preset runs with. The system parameters are the ones shared by
/// all curves of the figure; per-curve couplings are fixed by the preset.
pub fn preset_config(preset: Preset) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Scenario::Preset(preset));
    let drive = |e: f64| DriveSpec::new(Site::gain(1), e, 0.0);
    let (j, e, t_final, noise) = match preset {
        Preset::Fig2 => (2.5, 20.0, 8.0, false),
        Preset::Fig3 => (0.6, 20.0, 8.0, false),
        Preset::Fig4 => (0.4, 20.0, 8.0, false),
        Preset::Fig5a | Preset::Fig5b => (1.0, 20.0, 20.0, false),
        Preset::Fig6 => (0.6, 5.0, 8.0, true),
    };
    cfg.system = SystemParams::new(3, 1.0, j).with_drive(drive(e)).with_noise(noise);
    cfg.time_grid = TimeGrid { t_final, dt_out: None };
    cfg
}

fn preset_couplings(preset: Preset) -> Vec<f64> {
    match preset {
        Preset::Fig2 => vec![2.5],
        Preset::Fig3 => vec![0.6, 0.7],
        Preset::Fig4 => vec![0.4, 0.2],
        Preset::Fig5a | Preset::Fig5b => distribution_grid(),
        Preset::Fig6 => vec![1.2, 0.6, 0.4],
    }
}

fn base_metadata(cfg: &ScenarioConfig, single_system: bool) -> Metadata {
    let p = &cfg.system;
    Metadata {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: cfg.scenario.label(),
        regime: single_system.then(|| classify_regime(p, DEFAULT_REGIME_TOL * p.kappa.max(p.coupling_j))),
        exceptional_points: exceptional_points(p).ratios(),
        caveats: Vec::new(),
        details: BTreeMap::new(),
    }
}

fn vacuum(p: &SystemParams) -> MomentState {
    MomentState::vacuum(p.n_cavities())
}

fn evolve(p: &SystemParams, grid: &TimeGrid) -> Result<MomentSeries, RunError> {
    Ok(evolve_moments(p, grid.t_final, grid.dt_out(), &vacuum(p))?)
}

fn contrast_series(series: &MomentSeries, i: Site, j: Site) -> Result<Vec<Option<f64>>, RunError> {
    series.states.iter().map(|s| Ok(average_contrast(s, i, j)?)).collect()
}

/// `J/κ` rendered for column names: `0.6`, `1.2`, `2.5`.
fn j_label(j: f64) -> String {
    format!("j{j}")
}

/// Runs one configured scenario.
///
/// # Errors
/// Invalid configuration (naming the field) or any failure of the
/// underlying computation, including invariant violations.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult, RunError> {
    cfg.validate()?;
    let (columns, metadata) = match cfg.scenario {
        Scenario::Spectrum => spectrum(cfg)?,
        Scenario::Evolve => evolve_scenario(cfg)?,
        Scenario::Contrast => contrast(cfg)?,
        Scenario::Reciprocity => reciprocity(cfg)?,
        Scenario::Sweep => sweep(cfg)?,
        Scenario::Mc => monte_carlo(cfg)?,
        Scenario::Preset(p) => preset(cfg, p)?,
    };
    Ok(ScenarioResult { config: cfg.clone(), columns, metadata })
}

type Output = (Vec<Column>, Metadata);

fn spectrum(cfg: &ScenarioConfig) -> Result<Output, RunError> {
    let p = &cfg.system;
    let m = build_matrix(p)?;
    let numeric = numerical_spectrum(&m, default_cluster_tol(&m))?;
    let analytic = analytic_spectrum(p)?.eigenvalues();
    let pairs = &numeric.eigenpairs;
    let distance = pairs
        .iter()
        .map(|e| analytic.iter().map(|a| (a - e.lambda).norm()).fold(f64::INFINITY, f64::min));
    let columns = vec![
        Column::new("re_lambda", pairs.iter().map(|e| e.lambda.re)),
        Column::new("im_lambda", pairs.iter().map(|e| e.lambda.im)),
        Column::new("multiplicity", pairs.iter().map(|e| e.multiplicity as f64)),
        Column::new("geometric_multiplicity", pairs.iter().map(|e| e.geometric_multiplicity() as f64)),
        Column::new("closed_form_distance", distance),
    ];
    let mut meta = base_metadata(cfg, true);
    meta.regime = Some(numeric.regime);
    let families: Vec<Value> = bloch_families(p)
        .iter()
        .map(|f| json!({ "k": f.k, "lambda_squared": f.lambda_sq, "tunable": f.tunable }))
        .collect();
    meta.details.insert("bloch_families".into(), Value::from(families));
    meta.details.insert("is_defective".into(), Value::from(numeric.is_defective));
    meta.details.insert("distinct_eigenvalues".into(), Value::from(pairs.len()));
    Ok((columns, meta))
}

fn site_columns(series: &MomentSeries, p: &SystemParams) -> Vec<Column> {
    p.sites().map(|s| Column::new(format!("n_{s}"), series.photon_number(s))).collect()
}

fn evolve_scenario(cfg: &ScenarioConfig) -> Result<Output, RunError> {
    let p = &cfg.system;
    let series = evolve(p, &cfg.time_grid)?;
    let mut columns = vec![Column::new("t", series.times())];
    columns.extend(site_columns(&series, p));
    columns.push(Column::new("total", series.total_photon_number()));
    let mut meta = base_metadata(cfg, true);
    if p.gamma_out > 0.0 {
        let fluxes = series.states.iter().map(|s| output_flux(s, p)).collect::<Result<Vec<_>, _>>()?;
        for site in p.sites() {
            columns.push(Column::new(format!("flux_{site}"), fluxes.iter().map(|f| f.values[site.index()])));
        }
        if p.drive.amplitude_e != 0.0 {
            meta.caveats.push(format!("{FLUX_CAVEAT} (driven cavity {})", p.drive.site));
        }
    }
    for state in &series.states {
        photon_numbers(state)?;
    }
    if let Some(sat) = &cfg.saturation {
        let flags = saturation_check(&series.states, sat.i_sat, sat.threshold)?;
        let mut first = BTreeMap::new();
        for f in &flags {
            first.entry(f.site.label()).or_insert_with(|| json!({ "time": f.time, "intensity_ratio": f.intensity_ratio }));
        }
        meta.details.insert(
            "saturation".into(),
            json!({ "i_sat": sat.i_sat, "threshold": sat.threshold, "violations": flags.len(), "first": first }),
        );
        if !flags.is_empty() {
            meta.caveats.push("gain saturation threshold exceeded; linear dynamics may not apply".into());
        }
    }
    Ok((columns, meta))
}

fn contrast(cfg: &ScenarioConfig) -> Result<Output, RunError> {
    let p = &cfg.system;
    let [i, j] = cfg.contrast_pair;
    let series = evolve(p, &cfg.time_grid)?;
    let columns = vec![
        Column::new("t", series.times()),
        Column::new(format!("n_{i}"), series.photon_number(i)),
        Column::new(format!("n_{j}"), series.photon_number(j)),
        Column::optional(format!("contrast_{i}_{j}"), contrast_series(&series, i, j)?),
    ];
    Ok((columns, base_metadata(cfg, true)))
}

fn reciprocity(cfg: &ScenarioConfig) -> Result<Output, RunError> {
    let p = &cfg.system;
    let sites = cfg.reciprocity;
    let grid = &cfg.time_grid;
    let trace = reciprocity_experiment(p, sites.forward, sites.backward, grid.t_final, grid.dt_out())?;
    let columns = vec![
        Column::new("t", trace.times),
        Column::new("p_forward", trace.forward),
        Column::new("p_backward", trace.backward),
        Column::new("abs_difference", trace.difference),
    ];
    let mut meta = base_metadata(cfg, true);
    meta.details.insert("forward".into(), json!(format!("drive {} -> probe {}", sites.forward, sites.backward)));
    meta.details.insert("backward".into(), json!(format!("drive {} -> probe {}", sites.backward, sites.forward)));
    Ok((columns, meta))
}

fn sweep(cfg: &ScenarioConfig) -> Result<Output, RunError> {
    let base = &cfg.system;
    let spec = cfg.sweep.as_ref().expect("validated");
    let points: Vec<(Vec<f64>, &'static str)> = spec
        .values
        .par_iter()
        .map(|&v| {
            let p = spec.param.apply(base, v);
            let series = evolve(&p, &cfg.time_grid)?;
            let last = series.states.last().expect("series is never empty");
            let regime = classify_regime(&p, DEFAULT_REGIME_TOL * p.kappa.max(p.coupling_j));
            Ok((photon_numbers(last)?, regime.as_str()))
        })
        .collect::<Result<_, RunError>>()?;
    let mut columns = vec![Column::new(spec.param.as_str(), spec.values.iter().copied())];
    for site in base.sites() {
        columns.push(Column::new(format!("n_{site}"), points.iter().map(|(n, _)| n[site.index()])));
    }
    let mut meta = base_metadata(cfg, spec.param != SweepParam::JOverKappa);
    meta.details.insert("observed_at".into(), json!(cfg.time_grid.t_final));
    meta.details.insert("regimes".into(), json!(points.iter().map(|(_, r)| *r).collect::<Vec<_>>()));
    Ok((columns, meta))
}

fn monte_carlo(cfg: &ScenarioConfig) -> Result<Output, RunError> {
    let p = &cfg.system;
    let grid = &cfg.time_grid;
    let seed = cfg.seed.unwrap_or(0);
    let mc = McConfig::new(grid.t_final, grid.dt_out(), cfg.mc.n_traj, seed)
        .with_dt(cfg.mc.dt)
        .with_scheme(cfg.mc.scheme);
    let ensemble = sample_trajectories(p, &mc)?;
    let reference = evolve(p, grid)?;
    let report = compare_to_deterministic(&ensemble, &reference.states)?;
    let mut columns = vec![Column::new("t", ensemble.times())];
    let n = p.n_cavities();
    for site in p.sites() {
        let k = site.index();
        columns.push(Column::new(format!("mc_n_{site}"), ensemble.samples.iter().map(|s| s.photon_number[k])));
        columns.push(Column::new(format!("mc_se_{site}"), ensemble.samples.iter().map(|s| s.photon_se[k])));
        columns.push(Column::new(format!("ref_n_{site}"), reference.photon_number(site)));
        columns.push(Column::new(format!("z_{site}"), report.entries.iter().skip(k).step_by(n).map(|e| e.z)));
    }
    let mut meta = base_metadata(cfg, true);
    meta.details.insert(
        "mc".into(),
        json!({
            "n_traj": ensemble.n_traj,
            "seed": seed,
            "dt": ensemble.dt,
            "scheme": cfg.mc.scheme,
            "max_abs_z": report.max_abs_z,
            "fraction_within_3se": report.fraction_within(3.0),
        }),
    );
    meta.caveats.push("classical noise reproduces normal-ordered second moments only".into());
    Ok((columns, meta))
}

fn preset(cfg: &ScenarioConfig, preset: Preset) -> Result<Output, RunError> {
    let base = cfg.system;
    let couplings = preset_couplings(preset);
    let with_j = |j: f64| SystemParams { coupling_j: j * base.kappa, ..base };
    let mut meta = base_metadata(cfg, couplings.len() == 1);
    let columns = match preset {
        Preset::Fig2 => {
            let p = with_j(couplings[0]);
            let series = evolve(&p, &cfg.time_grid)?;
            vec![
                Column::new("t", series.times()),
                Column::new("n_a1", series.photon_number(Site::gain(1))),
                Column::new("n_b1", series.photon_number(Site::loss(1))),
                Column::new("n_a2", series.photon_number(Site::gain(2))),
                Column::new("n_b2", series.photon_number(Site::loss(2))),
                Column::optional("contrast_a1_b1", contrast_series(&series, Site::gain(1), Site::loss(1))?),
                Column::optional("contrast_a2_b2", contrast_series(&series, Site::gain(2), Site::loss(2))?),
            ]
        }
        Preset::Fig3 | Preset::Fig4 => {
            let runs: Vec<MomentSeries> =
                couplings.par_iter().map(|&j| evolve(&with_j(j), &cfg.time_grid)).collect::<Result<_, _>>()?;
            let mut cols = vec![Column::new("t", runs[0].times())];
            for (&j, series) in couplings.iter().zip(&runs) {
                let l = j_label(j);
                cols.push(Column::new(format!("n_b1_{l}"), series.photon_number(Site::loss(1))));
                cols.push(Column::optional(
                    format!("contrast_a1_b1_{l}"),
                    contrast_series(series, Site::gain(1), Site::loss(1))?,
                ));
                cols.push(Column::new(format!("n_a2_{l}"), series.photon_number(Site::gain(2))));
                cols.push(Column::optional(
                    format!("contrast_a2_b2_{l}"),
                    contrast_series(series, Site::gain(2), Site::loss(2))?,
                ));
            }
            cols
        }
        Preset::Fig5a => {
            let t = cfg.time_grid.t_final;
            let values: Vec<f64> = couplings
                .par_iter()
                .map(|&j| {
                    let series = evolve_moments(&with_j(j), t, t, &vacuum(&base))?;
                    Ok(series.photon_number(Site::loss(1))[1])
                })
                .collect::<Result<_, RunError>>()?;
            meta.details.insert("observed_at".into(), json!(t));
            vec![Column::new("j_over_kappa", couplings.iter().copied()), Column::new("n_b1", values)]
        }
        Preset::Fig5b => {
            let times = &cfg.snapshot_times;
            let table: Vec<Vec<Option<f64>>> = couplings
                .par_iter()
                .map(|&j| {
                    times
                        .iter()
                        .map(|&t| {
                            let series = evolve_moments(&with_j(j), t, t, &vacuum(&base))?;
                            Ok(average_contrast(&series.states[1], Site::gain(1), Site::loss(1))?)
                        })
                        .collect::<Result<Vec<_>, RunError>>()
                })
                .collect::<Result<_, RunError>>()?;
            let mut cols = vec![Column::new("j_over_kappa", couplings.iter().copied())];
            for (k, t) in times.iter().enumerate() {
                cols.push(Column::optional(format!("contrast_a1_b1_t{t}"), table.iter().map(|row| row[k]).collect()));
            }
            meta.details.insert("snapshot_times".into(), json!(times));
            cols
        }
        Preset::Fig6 => {
            let sites = cfg.reciprocity;
            let grid = &cfg.time_grid;
            let traces: Vec<_> = couplings
                .par_iter()
                .map(|&j| {
                    let noisy = with_j(j).with_noise(true);
                    let clean = with_j(j).with_noise(false);
                    let (a, b) = rayon::join(
                        || reciprocity_experiment(&noisy, sites.forward, sites.backward, grid.t_final, grid.dt_out()),
                        || reciprocity_experiment(&clean, sites.forward, sites.backward, grid.t_final, grid.dt_out()),
                    );
                    Ok((a?, b?))
                })
                .collect::<Result<_, RunError>>()?;
            let mut cols = vec![Column::new("t", traces[0].0.times.clone())];
            for (&j, (noisy, clean)) in couplings.iter().zip(traces) {
                let l = j_label(j);
                cols.push(Column::new(format!("abs_difference_{l}"), noisy.difference));
                cols.push(Column::new(format!("forward_noiseless_{l}"), clean.forward));
                cols.push(Column::new(format!("backward_noiseless_{l}"), clean.backward));
            }
            meta.details.insert(
                "paths".into(),
                json!(format!("{} -> {} and {} -> {}", sites.forward, sites.backward, sites.backward, sites.forward)),
            );
            cols
        }
    };
    meta.details.insert("j_over_kappa".into(), json!(couplings_summary(&couplings)));
    if matches!(preset, Preset::Fig5a | Preset::Fig5b) {
        meta.details.insert("regime_boundaries".into(), json!(meta.exceptional_points));
    }
    Ok((columns, meta))
}

fn couplings_summary(couplings: &[f64]) -> Value {
    if couplings.len() <= 4 {
        json!(couplings)
    } else {
        json!({ "from": couplings[0], "to": couplings[couplings.len() - 1], "points": couplings.len() })
    }
}
