//! Test oracles that do not share code paths with the moment integrator.
#![allow(dead_code, clippy::excessive_precision)]

use cptring::model::{build_matrix, SystemParams};
use cptring::nalgebra::{DMatrix, DVector};
use cptring::propagator::{Propagator, PropagatorMethod};
use cptring::C64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> Vec<C64>>(f: &mut F, a: f64, b: f64) -> (Vec<C64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let centre = f(c);
    let mut kronrod: Vec<C64> = centre.iter().map(|v| v * WGK[7]).collect();
    let mut gauss: Vec<C64> = centre.iter().map(|v| v * WG[3]).collect();
    for k in 0..7 {
        let lo = f(c - h * XGK[k]);
        let hi = f(c + h * XGK[k]);
        for i in 0..kronrod.len() {
            let s = lo[i] + hi[i];
            kronrod[i] += s * WGK[k];
            if k % 2 == 1 {
                gauss[i] += s * WG[k / 2];
            }
        }
    }
    let err = kronrod.iter().zip(&gauss).map(|(k, g)| ((k - g) * h).norm()).fold(0.0, f64::max);
    (kronrod.into_iter().map(|v| v * h).collect(), err)
}

/// Adaptive Gauss–Kronrod (7/15) for vector integrands. Bisects until each
/// panel's error is below its share of `rel_tol * max|∫f|`.
pub fn integrate_vec<F: FnMut(f64) -> Vec<C64>>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Vec<C64> {
    let (whole, _) = gk15(&mut f, a, b);
    let scale = whole.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut total = vec![C64::new(0.0, 0.0); whole.len()];
    let mut stack = vec![(a, b, 0usize)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        let budget = rel_tol * scale * (hi - lo) / (b - a);
        if err <= budget || depth >= 30 {
            for (t, v) in total.iter_mut().zip(val) {
                *t += v;
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Mean and full normal-ordered correlation at time `t` from vacuum,
/// built from the formal solution with `G(s) = exp(-iMs)`:
/// `μ(t) = ∫₀ᵗ G(t-τ) f(τ) dτ`, `F_ij(t) = 2κ Σ_gain ∫₀ᵗ conj(G_ik(s)) G_jk(s) ds`.
pub fn quadrature_moments(params: &SystemParams, t: f64, rel_tol: f64) -> (DVector<C64>, DMatrix<C64>) {
    let m = build_matrix(params).unwrap();
    let n = m.dim();
    let prop = Propagator::with_method(&m, PropagatorMethod::Eigendecomposition)
        .or_else(|_| Propagator::with_method(&m, PropagatorMethod::ScalingAndSquaring))
        .unwrap();
    let drive = params.drive;
    let site = drive.site.index();

    let mean = if drive.amplitude_e == 0.0 || t == 0.0 {
        DVector::zeros(n)
    } else {
        DVector::from_vec(integrate_vec(
            |tau| {
                let g = prop.at(t - tau).unwrap();
                let f = C64::from_polar(drive.amplitude_e, drive.detuning_delta * tau);
                (0..n).map(|i| g[(i, site)] * f).collect()
            },
            0.0,
            t,
            rel_tol,
        ))
    };

    let mut corr = DMatrix::from_fn(n, n, |i, j| mean[i].conj() * mean[j]);
    if params.noise_enabled && t > 0.0 {
        let gains: Vec<usize> = params.gain_sites().map(|s| s.index()).collect();
        let two_kappa = 2.0 * params.kappa;
        let flat = integrate_vec(
            |s| {
                let g = prop.at(s).unwrap();
                let mut out = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let v: C64 = gains.iter().map(|&k| g[(i, k)].conj() * g[(j, k)]).sum();
                        out.push(v * two_kappa);
                    }
                }
                out
            },
            0.0,
            t,
            rel_tol,
        );
        corr += DMatrix::from_row_slice(n, n, &flat);
    }
    (mean, corr)
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn rel_diff(a: &DMatrix<C64>, b: &DMatrix<C64>, floor: f64) -> f64 {
    let d = (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let s = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(floor);
    d / s
}
