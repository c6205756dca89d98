use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cptring::model::Site;
use cptring::noise_mc::Scheme;
use cptring_cli::config::{McSettings, SaturationSpec, SweepParam, SweepSpec};
use cptring_cli::output::render;
use cptring_cli::{preset_config, run_scenario, Format, Preset, Scenario, ScenarioConfig};

/// Mean-field and noise simulations of CPT-symmetric gain/loss cavity rings.
#[derive(Debug, Parser)]
#[command(name = "cptring", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file (or the built-in defaults).
/// Ratios are in units of κ.
#[derive(Debug, Args)]
struct Common {
    /// JSON scenario config; the subcommand picks the scenario.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of gain/loss pairs (ring of 2·n cavities).
    #[arg(long, global = true)]
    n_pairs: Option<usize>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    j_over_kappa: Option<f64>,
    #[arg(long, global = true)]
    e_over_kappa: Option<f64>,
    #[arg(long, global = true)]
    delta_over_kappa: Option<f64>,
    /// Driven cavity, e.g. `a1` or `b3`.
    #[arg(long, global = true)]
    drive_site: Option<Site>,
    /// Output coupling γ (absolute).
    #[arg(long, global = true)]
    gamma_out: Option<f64>,
    #[arg(long, global = true)]
    t_final: Option<f64>,
    #[arg(long, global = true)]
    dt_out: Option<f64>,
    /// Enable quantum noise.
    #[arg(long, global = true, overrides_with = "no_noise")]
    noise: bool,
    #[arg(long, global = true, overrides_with = "noise")]
    no_noise: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Saturation intensity for the gain-saturation diagnostic.
    #[arg(long, global = true, requires = "sat_threshold")]
    i_sat: Option<f64>,
    #[arg(long, global = true, requires = "i_sat")]
    sat_threshold: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    JOverKappa,
    EOverKappa,
    DeltaOverKappa,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Heun,
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Fig2,
    Fig3,
    Fig4,
    Fig5a,
    Fig5b,
    Fig6,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues of the dynamical matrix, with multiplicities and regime.
    Spectrum,
    /// Photon numbers (and output flux when γ > 0) over time.
    Evolve,
    /// Average contrast between two cavities over time.
    Contrast {
        /// Two cavities, e.g. `--pair a1,b1`.
        #[arg(long, value_delimiter = ',')]
        pair: Option<Vec<Site>>,
    },
    /// Forward and backward transport between a gain and a loss cavity.
    Reciprocity {
        #[arg(long)]
        forward: Option<Site>,
        #[arg(long)]
        backward: Option<Site>,
    },
    /// Final photon numbers across a parameter scan.
    Sweep {
        #[arg(long, value_enum)]
        param: Option<SweepArg>,
        /// Comma-separated ratios; an empty list yields a header-only table.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
    },
    /// Monte-Carlo ensemble compared against the moment equations.
    Mc {
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long)]
        mc_dt: Option<f64>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Reproduce one figure's data set.
    Preset {
        #[arg(value_enum)]
        name: PresetArg,
        /// Snapshot times for fig5b.
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Option<Vec<f64>>,
    },
}

fn base_config(common: &Common, scenario: Scenario) -> Result<ScenarioConfig> {
    let mut cfg = match (&common.config, scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg = ScenarioConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            cfg.scenario = scenario;
            cfg
        }
        (None, Scenario::Preset(p)) => preset_config(p),
        (None, s) => ScenarioConfig::new(s),
    };
    let c = common;
    let sys = &mut cfg.system;
    if let Some(n) = c.n_pairs {
        sys.n_pairs = n;
    }
    if let Some(k) = c.kappa {
        sys.kappa = k;
    }
    if let Some(r) = c.j_over_kappa {
        sys.coupling_j = r * sys.kappa;
    }
    if let Some(r) = c.e_over_kappa {
        sys.drive.amplitude_e = r * sys.kappa;
    }
    if let Some(r) = c.delta_over_kappa {
        sys.drive.detuning_delta = r * sys.kappa;
    }
    if let Some(s) = c.drive_site {
        sys.drive.site = s;
    }
    if let Some(g) = c.gamma_out {
        sys.gamma_out = g;
    }
    if c.noise {
        sys.noise_enabled = true;
    }
    if c.no_noise {
        sys.noise_enabled = false;
    }
    if let Some(t) = c.t_final {
        cfg.time_grid.t_final = t;
    }
    if let Some(dt) = c.dt_out {
        cfg.time_grid.dt_out = Some(dt);
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let (Some(i_sat), Some(threshold)) = (c.i_sat, c.sat_threshold) {
        cfg.saturation = Some(SaturationSpec { i_sat, threshold });
    }
    if let Some(f) = c.format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    if c.out.is_some() {
        cfg.output.path = c.out.clone();
    }
    Ok(cfg)
}

fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().with_context(|| format!("invalid sweep value `{v}`")))
        .collect()
}

fn build_config(cli: &Cli) -> Result<ScenarioConfig> {
    let scenario = match &cli.command {
        Command::Spectrum => Scenario::Spectrum,
        Command::Evolve => Scenario::Evolve,
        Command::Contrast { .. } => Scenario::Contrast,
        Command::Reciprocity { .. } => Scenario::Reciprocity,
        Command::Sweep { .. } => Scenario::Sweep,
        Command::Mc { .. } => Scenario::Mc,
        Command::Preset { name, .. } => Scenario::Preset(match name {
            PresetArg::Fig2 => Preset::Fig2,
            PresetArg::Fig3 => Preset::Fig3,
            PresetArg::Fig4 => Preset::Fig4,
            PresetArg::Fig5a => Preset::Fig5a,
            PresetArg::Fig5b => Preset::Fig5b,
            PresetArg::Fig6 => Preset::Fig6,
        }),
    };
    let mut cfg = base_config(&cli.common, scenario)?;
    match &cli.command {
        Command::Contrast { pair: Some(p) } => {
            let [i, j] = p[..] else {
                bail!("--pair takes exactly two cavities, got {}", p.len());
            };
            cfg.contrast_pair = [i, j];
        }
        Command::Reciprocity { forward, backward } => {
            if let Some(f) = forward {
                cfg.reciprocity.forward = *f;
            }
            if let Some(b) = backward {
                cfg.reciprocity.backward = *b;
            }
        }
        Command::Sweep { param, values } => {
            let spec = cfg.sweep.get_or_insert(SweepSpec { param: SweepParam::JOverKappa, values: Vec::new() });
            if let Some(p) = param {
                spec.param = match p {
                    SweepArg::JOverKappa => SweepParam::JOverKappa,
                    SweepArg::EOverKappa => SweepParam::EOverKappa,
                    SweepArg::DeltaOverKappa => SweepParam::DeltaOverKappa,
                };
            }
            if let Some(v) = values {
                spec.values = parse_values(v)?;
            }
        }
        Command::Mc { n_traj, mc_dt, scheme } => {
            let mc: &mut McSettings = &mut cfg.mc;
            if let Some(n) = n_traj {
                mc.n_traj = *n;
            }
            if let Some(dt) = mc_dt {
                mc.dt = *dt;
            }
            if let Some(s) = scheme {
                mc.scheme = match s {
                    SchemeArg::Heun => Scheme::Heun,
                    SchemeArg::EulerMaruyama => Scheme::EulerMaruyama,
                };
            }
        }
        Command::Preset { snapshot_times: Some(t), .. } => cfg.snapshot_times = t.clone(),
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("configuring worker pool")?;
    }
    let cfg = build_config(cli)?;
    let started = Instant::now();
    let result = run_scenario(&cfg)?;
    let text = render(&result, cfg.output.format)?;
    match &cfg.output.path {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes()).context("writing stdout")?,
    }
    // Timing stays on stderr so the emitted data is reproducible byte for byte.
    eprintln!("{}: {:.3} s wall", cfg.scenario.label(), started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
