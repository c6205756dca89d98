mod common;

use cptring::evolution::{
    average_contrast, evolve_moments, output_flux, photon_numbers, reciprocity_experiment, saturation_check,
    MomentState,
};
use cptring::model::{build_matrix, DriveSpec, Site, SystemParams};
use cptring::propagator::Propagator;
use proptest::prelude::*;

fn ring6(j: f64, e: f64, noise: bool) -> SystemParams {
    SystemParams::new(3, 1.0, j).with_drive(DriveSpec::new(Site::gain(1), e, 0.0)).with_noise(noise)
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

#[test]
fn matches_quadrature_of_formal_solution() {
    for j in [2.5, 0.6, 0.4] {
        for (e, delta, noise) in [(20.0, 0.0, false), (5.0, 0.0, true), (3.0, 0.7, true)] {
            let mut p = ring6(j, e, noise);
            p.drive.detuning_delta = delta;
            let series = evolve_moments(&p, 8.0, 0.5, &MomentState::vacuum(6)).unwrap();
            for state in series.states.iter().filter(|s| [0.5, 2.0, 4.5, 8.0].contains(&s.time)) {
                let (mean, corr) = common::quadrature_moments(&p, state.time, 1e-11);
                let mean_diff = (&state.mean - &mean).norm() / mean.norm().max(1e-300);
                let corr_diff = common::rel_diff(&state.corr, &corr, 1e-300);
                assert!(mean_diff < 1e-6, "J={j} E={e} noise={noise} t={}: mean {mean_diff:e}", state.time);
                assert!(corr_diff < 1e-6, "J={j} E={e} noise={noise} t={}: corr {corr_diff:e}", state.time);
            }
        }
    }
}

#[test]
fn decoupled_closed_forms() {
    for n_pairs in [1, 3] {
        let p = SystemParams::new(n_pairs, 1.0, 0.0).with_noise(true);
        let series = evolve_moments(&p, 2.0, 0.5, &MomentState::vacuum(2 * n_pairs)).unwrap();
        for s in &series.states {
            let n = photon_numbers(s).unwrap();
            let expected = (2.0 * s.time).exp() - 1.0;
            for site in p.sites() {
                let v = n[site.index()];
                match site.kind() {
                    cptring::model::SiteKind::Gain => assert!(rel(v, expected) < 1e-8, "{site} t={}", s.time),
                    cptring::model::SiteKind::Loss => assert!(v.abs() < 1e-12),
                }
            }
        }
    }
}

#[test]
fn flux_of_decoupled_gain_cavity() {
    let p = SystemParams::new(1, 1.0, 0.0).with_noise(true).with_gamma_out(1.0);
    let series = evolve_moments(&p, 1.0, 0.25, &MomentState::vacuum(2)).unwrap();
    let flux = output_flux(series.states.last().unwrap(), &p).unwrap();
    assert!(rel(flux.values[0], 2.0 * (2f64.exp() - 1.0)) < 1e-8);
    assert_eq!(flux.driven_site, None);
}

#[test]
fn mirror_degeneracy_of_photon_numbers() {
    for j in [0.2, 0.4, 0.5, 0.6, 1.0, 1.2, 2.5] {
        for noise in [false, true] {
            let p = ring6(j, 20.0, noise);
            let series = evolve_moments(&p, 8.0, 0.01, &MomentState::vacuum(6)).unwrap();
            let (b1, b3) = (series.photon_number(Site::loss(1)), series.photon_number(Site::loss(3)));
            let (a2, a3) = (series.photon_number(Site::gain(2)), series.photon_number(Site::gain(3)));
            for k in 0..series.states.len() {
                assert!(rel(b1[k], b3[k]) < 1e-8, "J={j} noise={noise} k={k}");
                assert!(rel(a2[k], a3[k]) < 1e-8, "J={j} noise={noise} k={k}");
            }
        }
    }
}

#[test]
fn opposite_loss_cavity_peaks_highest() {
    let series = evolve_moments(&ring6(2.5, 20.0, false), 8.0, 0.01, &MomentState::vacuum(6)).unwrap();
    let peak = |s: Site| series.photon_number(s).into_iter().fold(0.0, f64::max);
    let b2 = peak(Site::loss(2));
    for other in [Site::loss(1), Site::loss(3), Site::gain(2), Site::gain(3)] {
        assert!(b2 > peak(other), "{other}: {} vs b2 {b2}", peak(other));
    }
}

#[test]
fn broken_regime_growth_rate() {
    let series = evolve_moments(&ring6(0.6, 20.0, false), 15.0, 0.05, &MomentState::vacuum(6)).unwrap();
    let total = series.total_photon_number();
    let pts: Vec<(f64, f64)> = series
        .times()
        .into_iter()
        .zip(total)
        .filter(|(t, _)| (10.0..=15.0).contains(t))
        .map(|(t, n)| (t, n.ln()))
        .collect();
    let k = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / k, sy / k);
    let slope = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum::<f64>()
        / pts.iter().map(|(t, _)| (t - mt).powi(2)).sum::<f64>();
    let expected = 2.0 * (1.0f64 - 0.36).sqrt();
    assert!((slope - expected).abs() < 0.02 * expected, "slope {slope}");
}

#[test]
fn oscillatory_regime_stays_bounded() {
    let series = evolve_moments(&ring6(2.5, 20.0, false), 40.0, 0.05, &MomentState::vacuum(6)).unwrap();
    let (mut early, mut late) = (0.0f64, 0.0f64);
    for s in &series.states {
        let m = photon_numbers(s).unwrap().into_iter().fold(0.0, f64::max);
        if s.time <= 20.0 {
            early = early.max(m);
        } else {
            late = late.max(m);
        }
    }
    assert!(late < 10.0 * early, "early {early} late {late}");
}

#[test]
fn contrast_settles_in_broken_regime() {
    let series = evolve_moments(&ring6(0.6, 20.0, false), 20.0, 5.0, &MomentState::vacuum(6)).unwrap();
    let c = |t: f64| {
        let s = series.states.iter().find(|s| s.time == t).unwrap();
        average_contrast(s, Site::gain(1), Site::loss(1)).unwrap().unwrap()
    };
    let (c15, c20) = (c(15.0), c(20.0));
    assert!(rel(c15, c20) < 1e-3, "{c15} vs {c20}");
    assert!(c20 > 0.0 && c20 <= 1.0 + 1e-12);
}

#[test]
fn noiseless_transport_is_reciprocal() {
    for j in [1.2, 0.6, 0.4, 1.0, 2.5] {
        let mut p = ring6(j, 5.0, false);
        p.drive.detuning_delta = 0.3;
        let trace = reciprocity_experiment(&p, Site::gain(1), Site::loss(3), 8.0, 0.02).unwrap();
        for k in 0..trace.times.len() {
            assert!(trace.difference[k] < 1e-8 * trace.forward[k].max(1.0), "J={j} t={}", trace.times[k]);
        }
    }
}

#[test]
fn noise_breaks_reciprocity() {
    for j in [1.2, 0.6, 0.4] {
        let trace = reciprocity_experiment(&ring6(j, 5.0, true), Site::gain(1), Site::loss(3), 8.0, 0.02).unwrap();
        for (t, d) in trace.times.iter().zip(&trace.difference) {
            if *t > 0.5 {
                assert!(*d > 0.0, "J={j} t={t}");
            }
        }
        if j < 1.0 {
            let window: Vec<f64> =
                trace.times.iter().zip(&trace.difference).filter(|(t, _)| **t >= 2.0).map(|(_, d)| *d).collect();
            assert!(window.windows(2).all(|w| w[1] > w[0]), "J={j}");
        }
    }
}

#[test]
fn noise_correction_overtakes_signal_at_weak_coupling() {
    let noisy = reciprocity_experiment(&ring6(0.4, 5.0, true), Site::gain(1), Site::loss(3), 8.0, 0.01).unwrap();
    let clean = reciprocity_experiment(&ring6(0.4, 5.0, false), Site::gain(1), Site::loss(3), 8.0, 0.01).unwrap();
    let crossing = noisy
        .times
        .iter()
        .zip(noisy.difference.iter().zip(&clean.forward))
        .find(|(t, (d, f))| **t > 0.5 && d > f)
        .map(|(t, _)| *t);
    let t_cross = crossing.expect("noise correction never exceeds the transported signal");
    let last = noisy.times.len() - 1;
    assert!(noisy.difference[last] > clean.forward[last]);
    assert!(t_cross < 8.0);
}

#[test]
fn decoupled_noise_difference_is_spontaneous_emission() {
    let p = ring6(0.0, 0.0, true);
    let trace = reciprocity_experiment(&p, Site::gain(1), Site::loss(3), 2.0, 0.25).unwrap();
    for k in 0..trace.times.len() {
        let expected = (2.0 * trace.times[k]).exp() - 1.0;
        assert!(trace.forward[k].abs() < 1e-12);
        assert!(rel(trace.difference[k], expected) < 1e-8);
    }
}

#[test]
fn first_saturation_flag() {
    let p = SystemParams::new(1, 1.0, 0.0).with_noise(true);
    let series = evolve_moments(&p, 1.5, 1e-4, &MomentState::vacuum(2)).unwrap();
    let flags = saturation_check(&series.states, 100.0, 0.05).unwrap();
    let first = flags.first().unwrap();
    assert_eq!(first.site, Site::gain(1));
    assert!((first.time - 6f64.ln() / 2.0).abs() <= 1e-4 + 1e-12, "{}", first.time);
    assert!(flags.iter().all(|f| f.site == Site::gain(1)));
    let quiet = evolve_moments(&p, 0.5, 0.1, &MomentState::vacuum(2)).unwrap();
    assert!(saturation_check(&quiet.states, 1e6, 0.5).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moments_stay_hermitian_and_positive(
        n_pairs in 1usize..5,
        j in 0.0f64..3.0,
        e in 0.0f64..10.0,
        delta in -2.0f64..2.0,
        pair in 1usize..5,
        noise: bool,
    ) {
        let site = Site::gain(1 + (pair - 1) % n_pairs);
        let p = SystemParams::new(n_pairs, 1.0, j).with_drive(DriveSpec::new(site, e, delta)).with_noise(noise);
        let series = evolve_moments(&p, 3.0, 0.25, &MomentState::vacuum(2 * n_pairs)).unwrap();
        for s in &series.states {
            prop_assert!(s.validate().is_ok());
            for (k, n) in photon_numbers(s).unwrap().into_iter().enumerate() {
                prop_assert!(n >= -1e-9 * (1.0 + n.abs()));
                prop_assert!(n + 1e-9 * (1.0 + n) >= s.mean[k].norm_sqr());
            }
        }
    }

    #[test]
    fn propagator_is_complex_symmetric(n_pairs in 1usize..7, j in 0.0f64..3.0, t in 0.0f64..6.0) {
        let m = build_matrix(&SystemParams::new(n_pairs, 1.0, j)).unwrap();
        let g = Propagator::new(&m).unwrap().at(t).unwrap();
        let scale = g.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for a in 0..g.nrows() {
            for b in 0..a {
                prop_assert!((g[(a, b)] - g[(b, a)]).norm() < 1e-10 * scale);
            }
        }
    }
}
