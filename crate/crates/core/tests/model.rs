use cptring::model::{build_drive, build_matrix, DriveSpec, Site, SiteKind, SystemParams};
use cptring::C64;
use proptest::prelude::*;

#[test]
fn sites_serialize_as_labels() {
    assert_eq!(serde_json::to_string(&Site::loss(3)).unwrap(), r#""b3""#);
    assert_eq!(serde_json::from_str::<Site>(r#""a2""#).unwrap(), Site::gain(2));
    assert_eq!(serde_json::from_str::<Site>("5").unwrap(), Site::loss(3));
    assert!(serde_json::from_str::<Site>(r#""c1""#).is_err());
    assert!(serde_json::from_str::<Site>(r#""a0""#).is_err());
}

#[test]
fn params_round_trip_through_json() {
    let p = SystemParams::new(4, 0.7, 0.1 + 0.2)
        .with_drive(DriveSpec::new(Site::loss(2), 1.0 / 3.0, -0.25))
        .with_noise(true)
        .with_gamma_out(1e-3);
    let text = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<SystemParams>(&text).unwrap(), p);
}

#[test]
fn two_cavity_matrix() {
    let m = build_matrix(&SystemParams::new(1, 1.5, 0.4)).unwrap();
    let e = m.entries();
    assert_eq!(e[(0, 0)], C64::new(0.0, 1.5));
    assert_eq!(e[(1, 1)], C64::new(0.0, -1.5));
    assert_eq!(e[(0, 1)], C64::new(0.4, 0.0));
    assert_eq!(e[(1, 0)], C64::new(0.4, 0.0));
}

#[test]
fn drive_rotates_at_detuning() {
    let p = SystemParams::new(2, 1.0, 0.5).with_drive(DriveSpec::new(Site::gain(2), 2.0, 0.5));
    let f = build_drive(&p, std::f64::consts::PI);
    // i·E·e^{iπ/2} = -E
    assert!((f[2] - C64::new(-2.0, 0.0)).norm() < 1e-15);
    assert!(f.iter().enumerate().all(|(k, z)| k == 2 || *z == C64::new(0.0, 0.0)));
}

proptest! {
    #[test]
    fn ring_structure(n_pairs in 2usize..=12, kappa in 0.01f64..5.0, j in 0.0f64..5.0) {
        let p = SystemParams::new(n_pairs, kappa, j);
        let m = build_matrix(&p).unwrap();
        let e = m.entries();
        let n = 2 * n_pairs;
        for k in 0..n {
            let sign = if Site(k).kind() == SiteKind::Gain { 1.0 } else { -1.0 };
            prop_assert_eq!(e[(k, k)], C64::new(0.0, sign * kappa));
            for l in 0..n {
                let neighbours = (k + 1) % n == l || (l + 1) % n == k;
                let expected = if neighbours { C64::new(j, 0.0) } else { C64::new(0.0, 0.0) };
                if k != l {
                    prop_assert_eq!(e[(k, l)], expected);
                }
            }
        }
    }
}
