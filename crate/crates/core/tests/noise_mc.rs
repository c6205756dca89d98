use cptring::error::Error;
use cptring::evolution::{evolve_moments, MomentState};
use cptring::model::{DriveSpec, Site, SystemParams};
use cptring::noise_mc::{
    compare_to_deterministic, sample_trajectories, simulate_trajectory, McConfig, Scheme, TrajectoryEnsemble,
};
use cptring::C64;

fn ring6(j: f64, e: f64) -> SystemParams {
    SystemParams::new(3, 1.0, j).with_drive(DriveSpec::new(Site::gain(1), e, 0.0)).with_noise(true)
}

#[test]
fn silent_system_gives_zero_trajectories() {
    let p = SystemParams::new(3, 1.0, 0.6);
    let cfg = McConfig::new(1.0, 0.1, 5, 3);
    for index in 0..5 {
        let path = simulate_trajectory(&p, &cfg, index).unwrap();
        assert_eq!(path.len(), 11);
        assert!(path.iter().all(|c| c.iter().all(|z| *z == C64::new(0.0, 0.0))));
    }
    let ens = sample_trajectories(&p, &cfg).unwrap();
    let reference = evolve_moments(&p, 1.0, 0.1, &MomentState::vacuum(6)).unwrap();
    let report = compare_to_deterministic(&ens, &reference.states).unwrap();
    assert!(report.entries.iter().all(|e| e.z == 0.0));
    assert_eq!(report.max_abs_z, 0.0);
}

#[test]
fn decoupled_gain_cavity_spontaneous_emission() {
    let p = SystemParams::new(1, 1.0, 0.0).with_noise(true);
    let ens = sample_trajectories(&p, &McConfig::new(1.0, 0.5, 10_000, 11)).unwrap();
    let last = ens.samples.last().unwrap();
    assert_eq!(last.time, 1.0);
    let expected = 2f64.exp() - 1.0;
    assert!((last.photon_number[0] - expected).abs() < 3.0 * last.photon_se[0]);
    assert_eq!(last.photon_number[1], 0.0);
}

#[test]
fn ensemble_agrees_with_moment_equations() {
    let p = ring6(0.6, 5.0);
    let ens = sample_trajectories(&p, &McConfig::new(4.0, 0.25, 10_000, 5)).unwrap();
    let reference = evolve_moments(&p, 4.0, 0.25, &MomentState::vacuum(6)).unwrap();
    let report = compare_to_deterministic(&ens, &reference.states).unwrap();
    assert!(report.max_abs_z < 4.0, "max |z| = {}", report.max_abs_z);

    // A reference shifted by ten standard errors must be flagged.
    let mut shifted = reference.states.clone();
    for (state, sample) in shifted.iter_mut().zip(&ens.samples).skip(1) {
        for k in 0..6 {
            state.corr[(k, k)] += C64::new(10.0 * sample.photon_se[k], 0.0);
        }
    }
    let flagged = compare_to_deterministic(&ens, &shifted).unwrap();
    assert!(flagged.max_abs_z > 5.0);
    assert!(flagged.fraction_within(3.0) < 0.1);
}

#[test]
fn grid_mismatch_is_reported() {
    let p = SystemParams::new(1, 1.0, 0.0).with_noise(true);
    let ens = sample_trajectories(&p, &McConfig::new(1.0, 0.5, 10, 1)).unwrap();
    let coarse = evolve_moments(&p, 1.0, 1.0, &MomentState::vacuum(2)).unwrap();
    assert!(matches!(compare_to_deterministic(&ens, &coarse.states), Err(Error::GridMismatch(_))));
    let shifted = evolve_moments(&p, 1.1, 0.55, &MomentState::vacuum(2)).unwrap();
    assert!(matches!(compare_to_deterministic(&ens, &shifted.states), Err(Error::GridMismatch(_))));
}

fn bits(ens: &TrajectoryEnsemble) -> Vec<u64> {
    ens.samples
        .iter()
        .flat_map(|s| {
            s.photon_number
                .iter()
                .chain(&s.photon_se)
                .chain(&s.amplitude_se)
                .copied()
                .chain(s.mean_amplitude.iter().flat_map(|z| [z.re, z.im]))
        })
        .map(f64::to_bits)
        .collect()
}

#[test]
fn seeded_runs_are_bit_identical_for_any_pool_size() {
    let p = ring6(1.2, 5.0);
    let cfg = McConfig::new(1.0, 0.1, 300, 42);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_trajectories(&p, &cfg).unwrap())
    };
    let (a, b, c) = (run(1), run(3), run(1));
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(bits(&a), bits(&c));
    let other = sample_trajectories(&p, &McConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(bits(&a), bits(&other));
}

#[test]
fn single_trajectory_reports_infinite_error() {
    let p = SystemParams::new(1, 1.0, 0.0).with_noise(true);
    let ens = sample_trajectories(&p, &McConfig::new(0.5, 0.5, 1, 9)).unwrap();
    assert!(ens.samples[1].photon_se.iter().all(|s| s.is_infinite()));
}

#[test]
fn mean_amplitude_error_shrinks_like_inverse_root_n() {
    let p = ring6(0.6, 5.0);
    let reference = evolve_moments(&p, 1.0, 0.1, &MomentState::vacuum(6)).unwrap();
    let sq_error = |n_traj: usize, seed: u64| -> f64 {
        let ens = sample_trajectories(&p, &McConfig::new(1.0, 0.1, n_traj, seed)).unwrap();
        ens.samples
            .iter()
            .zip(&reference.states)
            .flat_map(|(s, r)| s.mean_amplitude.iter().zip(r.mean.iter()).map(|(a, b)| (a - b).norm_sqr()))
            .sum()
    };
    let mut ratios = Vec::new();
    for seed in 100..108 {
        // Independent seeds so the two ensembles do not share trajectories.
        let small = sq_error(1000, seed);
        let large = sq_error(2000, seed + 1000);
        ratios.push((large / small).sqrt());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((0.5..=0.9).contains(&mean), "ratios {ratios:?}");
}

#[test]
fn halving_the_step_moves_estimates_less_than_one_standard_error() {
    for (p, t_final) in [(SystemParams::new(1, 1.0, 0.0).with_noise(true), 2.0), (ring6(0.6, 5.0), 2.0)] {
        let n = p.n_cavities();
        for scheme in [Scheme::Heun, Scheme::EulerMaruyama] {
            let cfg = McConfig::new(t_final, 0.5, 10_000, 77).with_scheme(scheme);
            let coarse = sample_trajectories(&p, &cfg).unwrap();
            let fine = sample_trajectories(&p, &cfg.with_refine(1)).unwrap();
            assert_eq!(fine.dt, 0.5e-3);
            for (a, b) in coarse.samples.iter().zip(&fine.samples) {
                for k in 0..n {
                    let shift = (a.photon_number[k] - b.photon_number[k]).abs();
                    assert!(shift <= a.photon_se[k], "{scheme:?} N={n} t={} site {k}", a.time);
                }
            }
        }
    }
}
