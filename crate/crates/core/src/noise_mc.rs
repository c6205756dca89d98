//! Monte Carlo oracle: classical complex white-noise trajectories whose
//! ensemble second moments equal the normal-ordered quantum moments.
//!
//! Each trajectory integrates `dc = (A c + f(t)) dt + dW` with
//! `⟨dW_k* dW_k⟩ = 2κ dt` at gain sites and no noise at loss sites. The
//! default scheme is the stochastic Heun predictor-corrector; plain
//! Euler–Maruyama is available but its `O(dt)` drift error reaches about one
//! standard error at `dt = 1e-3` and 10⁴ trajectories in the broken regime.
//! Only normal-ordered second moments are reproduced; nothing here estimates
//! anti-normally ordered quantities.
//!
//! Trajectory `i` draws from its own ChaCha stream selected by `(seed, i)`,
//! and ensemble statistics are merged chunk by chunk in index order, so the
//! result does not depend on the number of worker threads.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::MomentState;
use crate::model::{build_matrix, Site, SiteKind, SystemParams};
use crate::C64;

/// Default integration step in units of `1/κ`.
pub const DEFAULT_MC_DT: f64 = 1e-3;
/// `dt · max(κ, 2J)` must stay below this.
pub const STABILITY_LIMIT: f64 = 0.05;

const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    /// Predictor-corrector with the same noise increment in both stages;
    /// second order in the drift for additive noise.
    #[default]
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub t_final: f64,
    /// Integration step.
    pub dt: f64,
    /// Recording interval; an integer multiple of `dt`.
    pub dt_out: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Each step of size `dt` is split into `2^refine` substeps whose noise
    /// increments sum to the unrefined increment (Brownian bridge). Runs
    /// that differ only here share their coarse noise path.
    pub refine: u32,
    #[serde(default)]
    pub scheme: Scheme,
}

impl McConfig {
    pub fn new(t_final: f64, dt_out: f64, n_traj: usize, seed: u64) -> Self {
        McConfig {
            t_final,
            dt: DEFAULT_MC_DT,
            dt_out,
            n_traj,
            seed,
            refine: 0,
            scheme: Scheme::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_refine(mut self, refine: u32) -> Self {
        self.refine = refine;
        self
    }

    /// Effective integration step `dt / 2^refine`.
    pub fn step(&self) -> f64 {
        self.dt / f64::from(1u32 << self.refine)
    }
}

fn ratio_as_integer(num: f64, den: f64, field: &'static str) -> Result<usize> {
    let r = num / den;
    let k = r.round();
    if !(k >= 1.0) || (r - k).abs() > 1e-9 * k || k > 1e9 {
        return Err(Error::invalid(field, format!("{num} is not a positive integer multiple of {den}")));
    }
    Ok(k as usize)
}

/// Grid layout derived from a validated config.
#[derive(Debug, Clone, Copy)]
struct Layout {
    coarse_steps: usize,
    stride: usize,
    sub: usize,
    h: f64,
}

fn layout(params: &SystemParams, cfg: &McConfig) -> Result<Layout> {
    params.validate()?;
    if cfg.n_traj == 0 {
        return Err(Error::invalid("n_traj", "need at least one trajectory"));
    }
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be finite and > 0, got {}", cfg.dt)));
    }
    if cfg.refine > 16 {
        return Err(Error::invalid("refine", "at most 16 refinement levels"));
    }
    let rate = params.kappa.max(2.0 * params.coupling_j);
    if cfg.dt * rate >= STABILITY_LIMIT {
        return Err(Error::UnstableStep { dt: cfg.dt, limit: STABILITY_LIMIT });
    }
    let stride = ratio_as_integer(cfg.dt_out, cfg.dt, "dt_out")?;
    let outputs = ratio_as_integer(cfg.t_final, cfg.dt_out, "t_final")?;
    Ok(Layout {
        coarse_steps: stride * outputs,
        stride,
        sub: 1 << cfg.refine,
        h: cfg.step(),
    })
}

struct Stepper {
    n: usize,
    rows: Vec<Vec<(usize, C64)>>,
    gain: Vec<usize>,
    noise_scale: f64,
    params: SystemParams,
}

impl Stepper {
    fn new(params: &SystemParams) -> Result<Self> {
        let a = build_matrix(params)?.generator();
        let n = a.nrows();
        let rows = (0..n)
            .map(|i| (0..n).filter(|&k| a[(i, k)] != C64::new(0.0, 0.0)).map(|k| (k, a[(i, k)])).collect())
            .collect();
        let gain = if params.noise_enabled {
            params.sites().filter(|s| s.kind() == SiteKind::Gain).map(Site::index).collect()
        } else {
            Vec::new()
        };
        Ok(Stepper { n, rows, gain, noise_scale: params.kappa.sqrt(), params: *params })
    }

    fn drift(&self, c: &[C64], t: f64, out: &mut [C64]) {
        for i in 0..self.n {
            out[i] = self.rows[i].iter().map(|&(k, a)| a * c[k]).sum();
        }
        let drive = &self.params.drive;
        if drive.amplitude_e != 0.0 {
            out[drive.site.index()] += drive.forcing(t);
        }
    }

    /// Advances `c` by `h` with noise increments `dw` (one per gain site,
    /// already scaled).
    fn step(&self, scheme: Scheme, c: &mut [C64], work: &mut Work, t: f64, h: f64, dw: &[C64]) {
        self.drift(c, t, &mut work.k1);
        match scheme {
            Scheme::EulerMaruyama => {
                for i in 0..self.n {
                    c[i] += work.k1[i] * h;
                }
            }
            Scheme::Heun => {
                work.predictor.copy_from_slice(c);
                for i in 0..self.n {
                    work.predictor[i] += work.k1[i] * h;
                }
                for (&site, w) in self.gain.iter().zip(dw) {
                    work.predictor[site] += w;
                }
                self.drift(&work.predictor, t + h, &mut work.k2);
                for i in 0..self.n {
                    c[i] += (work.k1[i] + work.k2[i]) * (0.5 * h);
                }
            }
        }
        for (&site, w) in self.gain.iter().zip(dw) {
            c[site] += w;
        }
    }
}

struct Work {
    k1: Vec<C64>,
    k2: Vec<C64>,
    predictor: Vec<C64>,
}

impl Work {
    fn new(n: usize) -> Self {
        let zero = vec![C64::new(0.0, 0.0); n];
        Work { k1: zero.clone(), k2: zero.clone(), predictor: zero }
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Runs trajectory `index` and calls `record(output_index, amplitudes)` at
/// every recording time, starting with `t = 0`.
fn run_trajectory(
    stepper: &Stepper,
    cfg: &McConfig,
    lay: &Layout,
    index: usize,
    mut record: impl FnMut(usize, &[C64]),
) {
    let n = stepper.n;
    let g = stepper.gain.len();
    let mut coarse_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    coarse_rng.set_stream(2 * index as u64);
    let mut bridge_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    bridge_rng.set_stream(2 * index as u64 + 1);

    let mut c = vec![C64::new(0.0, 0.0); n];
    let mut work = Work::new(n);
    // Noise increments of the current coarse step, refined in place down to
    // `lay.sub` substeps.
    let mut increments = vec![C64::new(0.0, 0.0); g * lay.sub];
    let mut split = increments.clone();
    let coarse_sd = stepper.noise_scale * cfg.dt.sqrt();
    record(0, &c);
    for step in 0..lay.coarse_steps {
        for w in increments.iter_mut().take(g) {
            *w = complex_normal(&mut coarse_rng) * coarse_sd;
        }
        // Halve the intervals level by level: W_left = W/2 + sd/2 * ξ.
        let mut pieces = 1;
        let mut piece_dt = cfg.dt;
        while pieces < lay.sub {
            let half_sd = 0.5 * stepper.noise_scale * piece_dt.sqrt();
            for p in 0..pieces {
                for s in 0..g {
                    let w = increments[p * g + s];
                    let left = w * 0.5 + complex_normal(&mut bridge_rng) * half_sd;
                    split[2 * p * g + s] = left;
                    split[(2 * p + 1) * g + s] = w - left;
                }
            }
            pieces *= 2;
            piece_dt *= 0.5;
            increments[..pieces * g].copy_from_slice(&split[..pieces * g]);
        }
        for p in 0..lay.sub {
            let t = (step * lay.sub + p) as f64 * lay.h;
            stepper.step(cfg.scheme, &mut c, &mut work, t, lay.h, &increments[p * g..(p + 1) * g]);
        }
        if (step + 1) % lay.stride == 0 {
            record((step + 1) / lay.stride, &c);
        }
    }
}

/// Amplitudes of a single trajectory on the recording grid.
pub fn simulate_trajectory(params: &SystemParams, cfg: &McConfig, index: usize) -> Result<Vec<DVector<C64>>> {
    let lay = layout(params, cfg)?;
    let stepper = Stepper::new(params)?;
    let mut path = Vec::with_capacity(lay.coarse_steps / lay.stride + 1);
    run_trajectory(&stepper, cfg, &lay, index, |_, c| path.push(DVector::from_column_slice(c)));
    Ok(path)
}

/// Running count, mean and sum of squared deviations; merged with Chan's
/// pairwise update.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count / total;
        self.m2 += other.m2 + d * d * self.count * other.count / total;
        self.count = total;
    }

    fn standard_error(&self) -> f64 {
        if self.count < 2.0 {
            f64::INFINITY
        } else {
            (self.m2 / (self.count - 1.0) / self.count).sqrt()
        }
    }
}

/// Per output time and site: photon number, Re and Im of the amplitude.
struct Accumulator {
    n: usize,
    cells: Vec<[Moments; 3]>,
}

impl Accumulator {
    fn new(outputs: usize, n: usize) -> Self {
        Accumulator { n, cells: vec![[Moments::default(); 3]; outputs * n] }
    }

    fn push(&mut self, out: usize, c: &[C64]) {
        for (k, z) in c.iter().enumerate() {
            let cell = &mut self.cells[out * self.n + k];
            cell[0].push(z.norm_sqr());
            cell[1].push(z.re);
            cell[2].push(z.im);
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            for q in 0..3 {
                a[q].merge(&b[q]);
            }
        }
    }
}

/// Ensemble statistics at one recording time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSample {
    pub time: f64,
    pub mean_amplitude: Vec<C64>,
    /// `sqrt(SE(Re)² + SE(Im)²)` per site.
    pub amplitude_se: Vec<f64>,
    pub photon_number: Vec<f64>,
    pub photon_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub n_traj: usize,
    pub seed: u64,
    /// Integration step actually used.
    pub dt: f64,
    pub samples: Vec<EnsembleSample>,
}

impl TrajectoryEnsemble {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }
}

/// Simulates `cfg.n_traj` trajectories from vacuum on the rayon pool and
/// reduces them to per-time statistics.
///
/// # Errors
/// Invalid parameters, a grid that is not commensurate with `dt`, or a step
/// violating the stability bound.
pub fn sample_trajectories(params: &SystemParams, cfg: &McConfig) -> Result<TrajectoryEnsemble> {
    let lay = layout(params, cfg)?;
    let stepper = Stepper::new(params)?;
    let n = stepper.n;
    let outputs = lay.coarse_steps / lay.stride + 1;
    let chunks = cfg.n_traj.div_ceil(CHUNK);
    let partial: Vec<Accumulator> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = Accumulator::new(outputs, n);
            for index in chunk * CHUNK..((chunk + 1) * CHUNK).min(cfg.n_traj) {
                run_trajectory(&stepper, cfg, &lay, index, |out, c| acc.push(out, c));
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new(outputs, n);
    for acc in &partial {
        total.merge(acc);
    }

    let samples = (0..outputs)
        .map(|out| {
            let cells = &total.cells[out * n..(out + 1) * n];
            EnsembleSample {
                time: out as f64 * cfg.dt_out,
                mean_amplitude: cells.iter().map(|c| C64::new(c[1].mean, c[2].mean)).collect(),
                amplitude_se: cells
                    .iter()
                    .map(|c| c[1].standard_error().hypot(c[2].standard_error()))
                    .collect(),
                photon_number: cells.iter().map(|c| c[0].mean).collect(),
                photon_se: cells.iter().map(|c| c[0].standard_error()).collect(),
            }
        })
        .collect();
    Ok(TrajectoryEnsemble { n_traj: cfg.n_traj, seed: cfg.seed, dt: lay.h, samples })
}

/// One photon-number comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub time: f64,
    pub site: Site,
    pub estimate: f64,
    pub reference: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZReport {
    pub entries: Vec<ZScore>,
    pub max_abs_z: f64,
}

impl ZReport {
    /// Fraction of entries with `|z| <= bound`.
    pub fn fraction_within(&self, bound: f64) -> f64 {
        if self.entries.is_empty() {
            return 1.0;
        }
        self.entries.iter().filter(|e| e.z.abs() <= bound).count() as f64 / self.entries.len() as f64
    }
}

/// Photon-number z-scores `(estimate - reference) / stderr` for every site
/// and time. A zero standard error gives `z = 0` on exact agreement and
/// `±∞` otherwise.
pub fn compare_to_deterministic(ensemble: &TrajectoryEnsemble, reference: &[MomentState]) -> Result<ZReport> {
    if ensemble.samples.len() != reference.len() {
        return Err(Error::GridMismatch(format!(
            "ensemble has {} times, reference has {}",
            ensemble.samples.len(),
            reference.len()
        )));
    }
    let mut entries = Vec::new();
    for (sample, state) in ensemble.samples.iter().zip(reference) {
        if (sample.time - state.time).abs() > 1e-9 * state.time.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("time {} vs {}", sample.time, state.time)));
        }
        if sample.photon_number.len() != state.n_cavities() {
            return Err(Error::GridMismatch(format!(
                "{} sites vs {} cavities",
                sample.photon_number.len(),
                state.n_cavities()
            )));
        }
        for (k, (&estimate, &stderr)) in sample.photon_number.iter().zip(&sample.photon_se).enumerate() {
            let reference = state.corr[(k, k)].re;
            let diff = estimate - reference;
            let z = if stderr > 0.0 {
                diff / stderr
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            };
            entries.push(ZScore { time: sample.time, site: Site(k), estimate, reference, stderr, z });
        }
    }
    let max_abs_z = entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    Ok(ZReport { entries, max_abs_z })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_merge_matches_direct() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.0, 0.5];
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..2].iter().for_each(|&x| a.push(x));
        xs[2..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - whole.mean).abs() < 1e-14);
        assert!((a.m2 - whole.m2).abs() < 1e-12);
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((a.standard_error() - (var / 6.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn single_trajectory_has_infinite_error() {
        let mut m = Moments::default();
        m.push(3.0);
        assert_eq!(m.standard_error(), f64::INFINITY);
    }

    #[test]
    fn rejects_unstable_or_incommensurate_steps() {
        let p = SystemParams::new(3, 1.0, 2.5);
        let cfg = McConfig::new(1.0, 0.1, 10, 1).with_dt(0.02);
        assert!(matches!(sample_trajectories(&p, &cfg), Err(Error::UnstableStep { .. })));
        let cfg = McConfig::new(1.0, 0.10005, 10, 1);
        assert!(sample_trajectories(&p, &cfg).is_err());
        let cfg = McConfig::new(1.0, 0.1, 0, 1);
        assert!(sample_trajectories(&p, &cfg).is_err());
    }
}
