//! Deterministic propagation of first and second moments, and the
//! observables built on them.
//!
//! The mean obeys `dμ/dt = Aμ + f(t)` with `A = -iM` and forcing
//! `f = E e^{iΔt}` at the driven site. The normal-ordered correlation matrix
//! `C_ij = ⟨c_i† c_j⟩` splits into a coherent part `conj(μ) μᵀ` and a
//! noise-induced part `F`, which obeys the Lyapunov equation
//! `dF/dt = conj(A) F + F Aᵀ + S` where `S` is the [`NoiseSourceMatrix`].
//! Only `F` is integrated; `C` is reassembled at each output time. The two
//! formulations are algebraically identical, but `F` stays a clean Gram
//! matrix instead of a small difference of large numbers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{build_matrix, DriveSpec, Site, SiteKind, SystemParams};
use crate::ode::{self, OdeOptions, OdeStats};
use crate::C64;

/// Relative tolerance for negative photon numbers and for the smallest
/// eigenvalue of the noise-induced covariance.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Relative tolerance for `max |C - C†|`.
pub const HERMITICITY_TOL: f64 = 1e-9;
/// Below this total intensity the average contrast is undefined.
pub const CONTRAST_INTENSITY_TOL: f64 = 1e-12;

/// Mean amplitudes and normal-ordered correlations at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub time: f64,
    /// `μ_k = ⟨c_k⟩`.
    pub mean: DVector<C64>,
    /// Full `C_ij = ⟨c_i† c_j⟩`, mean contribution included.
    pub corr: DMatrix<C64>,
}

fn coherent_part(mean: &DVector<C64>) -> DMatrix<C64> {
    let n = mean.len();
    DMatrix::from_fn(n, n, |i, j| mean[i].conj() * mean[j])
}

impl MomentState {
    /// Vacuum of `n` cavities at `t = 0`.
    pub fn vacuum(n: usize) -> Self {
        MomentState {
            time: 0.0,
            mean: DVector::zeros(n),
            corr: DMatrix::zeros(n, n),
        }
    }

    /// Pure coherent state with amplitudes `mean`: `C = conj(μ) μᵀ`.
    pub fn coherent(time: f64, mean: DVector<C64>) -> Self {
        let corr = coherent_part(&mean);
        MomentState { time, mean, corr }
    }

    /// Validated constructor.
    pub fn new(time: f64, mean: DVector<C64>, corr: DMatrix<C64>) -> Result<Self> {
        let state = MomentState { time, mean, corr };
        state.validate()?;
        Ok(state)
    }

    pub fn n_cavities(&self) -> usize {
        self.mean.len()
    }

    /// Noise-induced part `C - conj(μ) μᵀ`.
    pub fn fluctuations(&self) -> DMatrix<C64> {
        &self.corr - coherent_part(&self.mean)
    }

    /// Checks shape, Hermiticity and positivity of the noise-induced part.
    pub fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if self.corr.nrows() != n || self.corr.ncols() != n {
            return Err(Error::invalid(
                "corr",
                format!("expected {n}x{n}, got {}x{}", self.corr.nrows(), self.corr.ncols()),
            ));
        }
        if !self.time.is_finite() {
            return Err(Error::invalid("time", "must be finite"));
        }
        check_hermitian(self.time, &self.corr, HERMITICITY_TOL)?;
        check_positive(self.time, &self.fluctuations(), POSITIVITY_TOL)
    }
}

fn check_hermitian(time: f64, c: &DMatrix<C64>, tol: f64) -> Result<()> {
    let defect = linalg::hermiticity_defect(c);
    if defect > tol * (1.0 + linalg::max_abs(c)) {
        return Err(Error::InvariantViolation {
            time,
            what: "correlation matrix is not Hermitian".into(),
            magnitude: defect,
        });
    }
    Ok(())
}

fn check_positive(time: f64, fluct: &DMatrix<C64>, tol: f64) -> Result<()> {
    let scale = linalg::max_abs(fluct);
    if scale == 0.0 {
        return Ok(());
    }
    let sym = (fluct + fluct.adjoint()) * C64::new(0.5, 0.0);
    let min = linalg::min_hermitian_eigenvalue(&sym);
    if min < -tol * scale.max(1.0) {
        return Err(Error::InvariantViolation {
            time,
            what: "noise-induced covariance is not positive semidefinite".into(),
            magnitude: min,
        });
    }
    Ok(())
}

/// Diagonal source of spontaneous emission: `2κ` at gain sites when noise
/// is enabled, zero elsewhere. Loss reservoirs are in vacuum and add
/// nothing to normal-ordered moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSourceMatrix {
    pub diag: Vec<f64>,
}

impl NoiseSourceMatrix {
    pub fn from_params(params: &SystemParams) -> Self {
        let diag = params
            .sites()
            .map(|s| match (params.noise_enabled, s.kind()) {
                (true, SiteKind::Gain) => 2.0 * params.kappa,
                _ => 0.0,
            })
            .collect();
        NoiseSourceMatrix { diag }
    }

    pub fn is_zero(&self) -> bool {
        self.diag.iter().all(|&d| d == 0.0)
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.diag.len(),
            self.diag.iter().map(|&d| C64::new(d, 0.0)),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionOptions {
    pub ode: OdeOptions,
    pub hermiticity_tol: f64,
    pub positivity_tol: f64,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        EvolutionOptions {
            ode: OdeOptions::default(),
            hermiticity_tol: HERMITICITY_TOL,
            positivity_tol: POSITIVITY_TOL,
        }
    }
}

/// States on the output grid, starting with the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub states: Vec<MomentState>,
    pub stats: OdeStats,
}

impl MomentSeries {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    /// `⟨c† c⟩` at `site` over the whole series.
    pub fn photon_number(&self, site: Site) -> Vec<f64> {
        self.states.iter().map(|s| s.corr[(site.index(), site.index())].re).collect()
    }

    /// Sum of all photon numbers at each output time.
    pub fn total_photon_number(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.corr.diagonal().iter().map(|z| z.re).sum()).collect()
    }
}

/// `t0, t0 + dt, …` up to `t0 + span`; the last point is snapped onto the
/// end time, or appended when `span` is not a multiple of `dt`.
pub fn output_grid(t0: f64, span: f64, dt_out: f64) -> Result<Vec<f64>> {
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::invalid("t_final", format!("must exceed the initial time, got span {span}")));
    }
    if !(dt_out.is_finite() && dt_out > 0.0) {
        return Err(Error::invalid("dt_out", format!("must be finite and > 0, got {dt_out}")));
    }
    let steps = (span / dt_out * (1.0 + 1e-12)).floor();
    if steps > 1e7 {
        return Err(Error::invalid("dt_out", "more than 10^7 output points requested"));
    }
    let steps = steps as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * dt_out).collect();
    let end = t0 + span;
    let last = grid.last_mut().expect("grid has at least one point");
    if (end - *last).abs() <= 1e-9 * span {
        *last = end;
    } else {
        grid.push(end);
    }
    Ok(grid)
}

pub fn evolve_moments(
    params: &SystemParams,
    t_final: f64,
    dt_out: f64,
    initial: &MomentState,
) -> Result<MomentSeries> {
    evolve_moments_with(params, t_final, dt_out, initial, &EvolutionOptions::default())
}

/// Integrates the moment equations from `initial.time` to `t_final`,
/// reporting states at `initial.time + k * dt_out`.
///
/// # Errors
/// Invalid parameters or initial state, integrator failure, or a
/// Hermiticity/positivity violation at an output time.
pub fn evolve_moments_with(
    params: &SystemParams,
    t_final: f64,
    dt_out: f64,
    initial: &MomentState,
    opts: &EvolutionOptions,
) -> Result<MomentSeries> {
    let m = build_matrix(params)?;
    let n = m.dim();
    if initial.n_cavities() != n {
        return Err(Error::invalid(
            "initial",
            format!("state has {} cavities, system has {n}", initial.n_cavities()),
        ));
    }
    initial.validate()?;
    let grid = output_grid(initial.time, t_final - initial.time, dt_out)?;

    let a = m.generator();
    let rows: Vec<Vec<(usize, C64)>> = (0..n)
        .map(|i| (0..n).filter(|&k| a[(i, k)] != C64::new(0.0, 0.0)).map(|k| (k, a[(i, k)])).collect())
        .collect();
    let source = NoiseSourceMatrix::from_params(params);
    let fluct0 = initial.fluctuations();
    // With no source and no initial fluctuations F stays exactly zero.
    let track_fluct = !source.is_zero() || linalg::max_abs(&fluct0) != 0.0;
    let drive = params.drive;
    let drive_site = drive.site.index();
    let driven = drive.amplitude_e != 0.0;

    let dim = if track_fluct { n + n * n } else { n };
    let mut y0 = Vec::with_capacity(dim);
    y0.extend(initial.mean.iter().copied());
    if track_fluct {
        for i in 0..n {
            for j in 0..n {
                y0.push(fluct0[(i, j)]);
            }
        }
    }

    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        for i in 0..n {
            dy[i] = rows[i].iter().map(|&(k, aik)| aik * y[k]).sum();
        }
        if driven {
            dy[drive_site] += drive.forcing(t);
        }
        if track_fluct {
            let f = &y[n..];
            let df = &mut dy[n..];
            for i in 0..n {
                for j in 0..n {
                    let mut acc: C64 = rows[i].iter().map(|&(k, aik)| aik.conj() * f[k * n + j]).sum();
                    acc += rows[j].iter().map(|&(k, ajk)| ajk * f[i * n + k]).sum::<C64>();
                    if i == j {
                        acc += source.diag[i];
                    }
                    df[i * n + j] = acc;
                }
            }
        }
    };

    let mut states = Vec::with_capacity(grid.len());
    let stats = ode::integrate(rhs, initial.time, &y0, &grid, &opts.ode, |t, y| {
        let mean = DVector::from_column_slice(&y[..n]);
        let mut corr = coherent_part(&mean);
        if track_fluct {
            let fluct = DMatrix::from_row_slice(n, n, &y[n..]);
            check_positive(t, &fluct, opts.positivity_tol)?;
            corr += fluct;
        }
        check_hermitian(t, &corr, opts.hermiticity_tol)?;
        states.push(MomentState { time: t, mean, corr });
        Ok(())
    })?;
    Ok(MomentSeries { states, stats })
}

/// `Re C_kk` for every cavity.
///
/// # Errors
/// A diagonal entry below `-POSITIVITY_TOL * (1 + max |C|)`.
pub fn photon_numbers(state: &MomentState) -> Result<Vec<f64>> {
    let tol = POSITIVITY_TOL * (1.0 + linalg::max_abs(&state.corr));
    state
        .corr
        .diagonal()
        .iter()
        .enumerate()
        .map(|(k, z)| {
            if z.re < -tol {
                Err(Error::InvariantViolation {
                    time: state.time,
                    what: format!("negative photon number at {}", Site(k)),
                    magnitude: z.re,
                })
            } else {
                Ok(z.re)
            }
        })
        .collect()
}

fn check_site(state: &MomentState, site: Site, field: &'static str) -> Result<usize> {
    let idx = site.index();
    if idx >= state.n_cavities() {
        return Err(Error::invalid(field, format!("site {site} outside a ring of {} cavities", state.n_cavities())));
    }
    Ok(idx)
}

/// `2|C_ij| / (C_ii + C_jj)`; `None` when the two cavities are (numerically)
/// empty.
pub fn average_contrast(state: &MomentState, i: Site, j: Site) -> Result<Option<f64>> {
    if i == j {
        return Err(Error::invalid("j", "contrast needs two distinct cavities"));
    }
    let (ii, jj) = (check_site(state, i, "i")?, check_site(state, j, "j")?);
    let total = state.corr[(ii, ii)].re + state.corr[(jj, jj)].re;
    if total < CONTRAST_INTENSITY_TOL {
        return Ok(None);
    }
    Ok(Some(2.0 * state.corr[(ii, jj)].norm() / total))
}

/// Output fluxes `2γ ⟨c† c⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFlux {
    pub values: Vec<f64>,
    /// The driven cavity's output also carries a reflected-drive term that
    /// is not included in `values`.
    pub driven_site: Option<Site>,
}

pub fn output_flux(state: &MomentState, params: &SystemParams) -> Result<OutputFlux> {
    let values = photon_numbers(state)?.into_iter().map(|n| 2.0 * params.gamma_out * n).collect();
    let driven_site = (params.drive.amplitude_e != 0.0).then_some(params.drive.site);
    Ok(OutputFlux { values, driven_site })
}

/// Forward/backward transport traces on a shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReciprocityTrace {
    pub times: Vec<f64>,
    /// Photons at the loss site when the gain site is driven.
    pub forward: Vec<f64>,
    /// Photons at the gain site when the loss site is driven.
    pub backward: Vec<f64>,
    pub difference: Vec<f64>,
}

/// Drives `site_fwd` and records `site_bwd`, then the reverse, with the
/// drive strength, detuning and noise setting from `params`. Both runs start
/// from vacuum and execute concurrently.
pub fn reciprocity_experiment(
    params: &SystemParams,
    site_fwd: Site,
    site_bwd: Site,
    t_final: f64,
    dt_out: f64,
) -> Result<ReciprocityTrace> {
    let n = params.n_cavities();
    for (site, field) in [(site_fwd, "site_fwd"), (site_bwd, "site_bwd")] {
        if site.index() >= n {
            return Err(Error::invalid(field, format!("site {site} outside a ring of {n} cavities")));
        }
    }
    if site_fwd.kind() != SiteKind::Gain {
        return Err(Error::WrongSiteKind { site: site_fwd, expected: "gain", found: site_fwd.kind().as_str() });
    }
    if site_bwd.kind() != SiteKind::Loss {
        return Err(Error::WrongSiteKind { site: site_bwd, expected: "loss", found: site_bwd.kind().as_str() });
    }
    let run = |source: Site, probe: Site| -> Result<(Vec<f64>, Vec<f64>)> {
        let drive = DriveSpec { site: source, ..params.drive };
        let p = params.with_drive(drive);
        let series = evolve_moments(&p, t_final, dt_out, &MomentState::vacuum(n))?;
        Ok((series.times(), series.photon_number(probe)))
    };
    let (fwd, bwd) = rayon::join(|| run(site_fwd, site_bwd), || run(site_bwd, site_fwd));
    let (times, forward) = fwd?;
    let (_, backward) = bwd?;
    let difference = forward.iter().zip(&backward).map(|(f, b)| (f - b).abs()).collect();
    Ok(ReciprocityTrace { times, forward, backward, difference })
}

/// A gain cavity whose intensity is no longer small against saturation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFlag {
    pub time: f64,
    pub site: Site,
    /// Photon number divided by the saturation intensity.
    pub intensity_ratio: f64,
}

/// Flags every (time, gain site) with `n / i_sat > threshold`. Diagnostic
/// only; the dynamics stay linear.
pub fn saturation_check(series: &[MomentState], i_sat: f64, threshold: f64) -> Result<Vec<SaturationFlag>> {
    if !(i_sat.is_finite() && i_sat > 0.0) {
        return Err(Error::invalid("i_sat", format!("must be finite and > 0, got {i_sat}")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold", format!("must lie in (0, 1), got {threshold}")));
    }
    let mut flags = Vec::new();
    for state in series {
        for k in (0..state.n_cavities()).step_by(2) {
            let ratio = state.corr[(k, k)].re / i_sat;
            if ratio > threshold {
                flags.push(SaturationFlag { time: state.time, site: Site(k), intensity_ratio: ratio });
            }
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decoupled_noisy(n_pairs: usize) -> SystemParams {
        SystemParams::new(n_pairs, 1.0, 0.0).with_noise(true)
    }

    #[test]
    fn vacuum_stays_vacuum_without_noise_or_drive() {
        let p = SystemParams::new(3, 1.0, 0.6);
        let series = evolve_moments(&p, 3.0, 0.5, &MomentState::vacuum(6)).unwrap();
        assert_eq!(series.states.len(), 7);
        for s in &series.states {
            assert!(s.mean.iter().all(|z| *z == C64::new(0.0, 0.0)));
            assert!(s.corr.iter().all(|z| *z == C64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn decoupled_gain_cavity_spontaneous_photons() {
        let series = evolve_moments(&decoupled_noisy(1), 2.0, 0.5, &MomentState::vacuum(2)).unwrap();
        for s in &series.states {
            let expected = (2.0 * s.time).exp() - 1.0;
            let n = photon_numbers(s).unwrap();
            assert!((n[0] - expected).abs() <= 1e-8 * expected.max(1e-300), "t = {}", s.time);
            assert!(n[1].abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_photon_numbers() {
        let mut mu = DVector::zeros(4);
        mu[0] = C64::new(0.0, 2.0);
        let n = photon_numbers(&MomentState::coherent(0.0, mu)).unwrap();
        assert_eq!(n, vec![4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn contrast_cases() {
        let vac = MomentState::vacuum(4);
        assert_eq!(average_contrast(&vac, Site(0), Site(1)).unwrap(), None);
        assert!(average_contrast(&vac, Site(1), Site(1)).is_err());
        let mu = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let c = average_contrast(&MomentState::coherent(0.0, mu), Site(0), Site(1)).unwrap().unwrap();
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flux_scaling_and_caveat() {
        let mut mu = DVector::zeros(2);
        mu[0] = C64::new(2.0, 0.0);
        let state = MomentState::coherent(0.0, mu);
        let p = SystemParams::new(1, 1.0, 0.0).with_gamma_out(0.5);
        assert_eq!(output_flux(&state, &p).unwrap().values, vec![4.0, 0.0]);
        assert_eq!(output_flux(&state, &p.with_gamma_out(0.0)).unwrap().values, vec![0.0, 0.0]);
        let driven = p.with_drive(DriveSpec::new(Site(0), 1.0, 0.0));
        assert_eq!(output_flux(&state, &driven).unwrap().driven_site, Some(Site(0)));
    }

    #[test]
    fn grid_snaps_last_point() {
        let g = output_grid(0.0, 8.0, 0.01).unwrap();
        assert_eq!(g.len(), 801);
        assert_eq!(*g.last().unwrap(), 8.0);
        let g = output_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(output_grid(0.0, 1.0, 0.0).is_err());
        assert!(output_grid(0.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn reciprocity_rejects_wrong_kinds() {
        let p = SystemParams::new(3, 1.0, 0.6);
        assert!(matches!(
            reciprocity_experiment(&p, Site(1), Site(5), 1.0, 0.1),
            Err(Error::WrongSiteKind { .. })
        ));
        assert!(matches!(
            reciprocity_experiment(&p, Site(0), Site(4), 1.0, 0.1),
            Err(Error::WrongSiteKind { .. })
        ));
    }

    #[test]
    fn invalid_initial_state_rejected() {
        let mut bad = MomentState::vacuum(2);
        bad.corr[(0, 0)] = C64::new(-1.0, 0.0);
        assert!(bad.validate().is_err());
        let p = SystemParams::new(1, 1.0, 0.0);
        assert!(evolve_moments(&p, 1.0, 0.1, &bad).is_err());
        assert!(evolve_moments(&p, 1.0, 0.1, &MomentState::vacuum(4)).is_err());
    }

    #[test]
    fn saturation_argument_checks() {
        assert!(saturation_check(&[], 0.0, 0.1).is_err());
        assert!(saturation_check(&[], 1.0, 1.0).is_err());
        assert!(saturation_check(&[MomentState::vacuum(4)], 1.0, 0.1).unwrap().is_empty());
    }
}
