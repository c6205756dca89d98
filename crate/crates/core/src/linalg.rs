//! Dense complex linear-algebra helpers shared by the spectral and
//! propagation code.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::C64;

const PADE13_THETA: f64 = 5.371_920_351_148_152;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }

    let norm = one_norm(a);
    let squarings = if norm > PADE13_THETA {
        (norm / PADE13_THETA).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(0.5_f64.powi(squarings));

    let eye = DMatrix::<C64>::identity(n, n);
    let c = |k: usize| C64::new(PADE13[k], 0.0);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let u_outer = &a6 * u_inner + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &eye * c(1);
    let u = &scaled * u_outer;

    let v_inner = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = &a6 * v_inner + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &eye * c(0);

    let numerator = &v + &u;
    let denominator = &v - &u;
    let mut result = denominator
        .lu()
        .solve(&numerator)
        .expect("Padé denominator is nonsingular for scaled arguments");

    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<C64>) -> Vec<f64> {
    SVD::new(a.clone(), false, false).singular_values.iter().copied().collect()
}

/// `σ_max / σ_min`; infinite for singular input.
pub fn condition_number(a: &DMatrix<C64>) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => max / min,
        _ => f64::INFINITY,
    }
}

/// Orthonormal basis for the numerical null space of `a`: right singular
/// vectors whose singular value is at most `rel_tol * max(σ_max, scale)`.
pub fn null_space(a: &DMatrix<C64>, rel_tol: f64, scale: f64) -> Vec<DVector<C64>> {
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let threshold = rel_tol * sigma_max.max(scale);
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= threshold)
        .map(|(i, _)| v_t.row(i).adjoint())
        .collect()
}

/// Right singular vector belonging to the smallest singular value.
pub fn smallest_singular_vector(a: &DMatrix<C64>) -> DVector<C64> {
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    v_t.row(v_t.nrows() - 1).adjoint()
}

/// Unit Euclidean norm, first non-negligible entry rotated to the positive
/// real axis.
pub fn normalize_phase(mut v: DVector<C64>) -> DVector<C64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    v.unscale_mut(norm);
    let cutoff = 1e-10 * v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if let Some(pivot) = v.iter().find(|z| z.norm() > cutoff).copied() {
        let phase = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
    v
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_hermitian_eigenvalue(h: &DMatrix<C64>) -> f64 {
    SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `max |a_ij - conj(a_ji)|`.
pub fn hermiticity_defect(a: &DMatrix<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(a: &DMatrix<C64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}
