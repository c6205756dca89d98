//! Eigen-analysis of the generator `-iM`.
//!
//! The ring is invariant under a two-site translation, so `-iM` block
//! diagonalizes over Bloch momenta `q = 2πk/n` (`n` = number of pairs). Each
//! momentum contributes the pair
//!
//! ```text
//! λ_k = ±sqrt(κ² - J²|1 + e^{-iq}|²) = ±sqrt(κ² - 4J² cos²(πk/n))
//! ```
//!
//! and momenta `k` and `n - k` give the same pair, which is where the double
//! degeneracies come from. A family with `cos(πk/n) = 0` is pinned at `±κ`
//! whatever the coupling. For a single pair (`N = 2`) the closing link of the
//! ring is the same bond as the nearest-neighbour link, so the factor
//! `|1 + e^{-iq}|` is replaced by 1 and the pair is `±sqrt(κ² - J²)`.
//!
//! A tunable family turns from real (exponential growth/decay) to imaginary
//! (oscillation) at `J/κ = 1 / (2|cos(πk/n)|)`, an exceptional point where the
//! pair coalesces at zero and `-iM` is defective.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{build_matrix, DynamicalMatrix, SystemParams};
use crate::C64;

/// Relative singular-value threshold used to decide the eigenvector rank of
/// an eigenvalue cluster.
pub const RANK_REL_TOL: f64 = 1e-6;

/// Default absolute tolerance (in units of the largest rate) under which an
/// eigenvalue counts as sitting on an exceptional point.
pub const DEFAULT_REGIME_TOL: f64 = 1e-6;

/// Dynamical regime of a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Every eigenvalue of `-iM` is imaginary: all supermodes oscillate.
    AllOscillatory,
    /// Some eigenvalues are real, some imaginary.
    Mixed,
    /// Every tunable family is real.
    FullyBroken,
    /// Some eigenvalue pair has coalesced at zero.
    AtExceptionalPoint,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::AllOscillatory => "all_oscillatory",
            Regime::Mixed => "mixed",
            Regime::FullyBroken => "fully_broken",
            Regime::AtExceptionalPoint => "at_exceptional_point",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One distinct eigenvalue of `-iM`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub lambda: C64,
    /// Algebraic multiplicity.
    pub multiplicity: usize,
    /// Basis of the eigenspace; its length is the geometric multiplicity.
    pub eigenvectors: Vec<DVector<C64>>,
}

impl Eigenpair {
    pub fn geometric_multiplicity(&self) -> usize {
        self.eigenvectors.len()
    }

    pub fn is_defective(&self) -> bool {
        self.geometric_multiplicity() < self.multiplicity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Distinct eigenvalues, largest modulus first, each `+λ` followed by
    /// its partner `-λ`.
    pub eigenpairs: Vec<Eigenpair>,
    pub is_defective: bool,
    pub regime: Regime,
}

impl SpectrumReport {
    pub fn total_multiplicity(&self) -> usize {
        self.eigenpairs.iter().map(|p| p.multiplicity).sum()
    }

    /// Eigenvalues repeated according to multiplicity.
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.eigenpairs
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.lambda, p.multiplicity))
            .collect()
    }

    /// Worst distance between an eigenvalue and the negation of its nearest
    /// partner; infinite when some partner has a different multiplicity.
    pub fn pairing_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for p in &self.eigenpairs {
            let partner = self
                .eigenpairs
                .iter()
                .min_by(|a, b| {
                    (a.lambda + p.lambda)
                        .norm()
                        .partial_cmp(&(b.lambda + p.lambda).norm())
                        .unwrap_or(Ordering::Equal)
                })
                .expect("spectrum is not empty");
            if partner.multiplicity != p.multiplicity {
                return f64::INFINITY;
            }
            worst = worst.max((partner.lambda + p.lambda).norm());
        }
        worst
    }

    /// `max |Re λ · Im λ|`; zero when every eigenvalue is purely real or
    /// purely imaginary.
    pub fn max_re_im_product(&self) -> f64 {
        self.eigenpairs
            .iter()
            .map(|p| (p.lambda.re * p.lambda.im).abs())
            .fold(0.0, f64::max)
    }
}

fn is_real_like(z: C64) -> bool {
    z.re.abs() >= z.im.abs()
}

fn sign_key(z: C64) -> f64 {
    if is_real_like(z) {
        z.re
    } else {
        z.im
    }
}

fn order_pairs(pairs: &mut [Eigenpair]) {
    pairs.sort_by(|a, b| {
        b.lambda
            .norm()
            .partial_cmp(&a.lambda.norm())
            .unwrap_or(Ordering::Equal)
            .then_with(|| sign_key(b.lambda).partial_cmp(&sign_key(a.lambda)).unwrap_or(Ordering::Equal))
    });
    // Magnitudes of a ± pair can differ in the last bits; pull each partner
    // next to its positive member.
    let mut i = 0;
    while i + 1 < pairs.len() {
        let target = -pairs[i].lambda;
        let best = (i + 1..pairs.len())
            .min_by(|&a, &b| {
                (pairs[a].lambda - target)
                    .norm()
                    .partial_cmp(&(pairs[b].lambda - target).norm())
                    .unwrap_or(Ordering::Equal)
            })
            .expect("non-empty range");
        if (pairs[i].lambda - target).norm() <= 1e-12 * (1.0 + target.norm()) {
            // self-paired (zero) cluster
            i += 1;
            continue;
        }
        pairs.swap(i + 1, best);
        if sign_key(pairs[i].lambda) < sign_key(pairs[i + 1].lambda) {
            pairs.swap(i, i + 1);
        }
        i += 2;
    }
}

fn classify_eigenvalues(pairs: &[Eigenpair], zero_tol: f64) -> Regime {
    let defective = pairs.iter().any(Eigenpair::is_defective);
    if defective || pairs.iter().any(|p| p.lambda.norm() <= zero_tol) {
        return Regime::AtExceptionalPoint;
    }
    if pairs.iter().all(|p| !is_real_like(p.lambda)) {
        Regime::AllOscillatory
    } else if pairs.iter().all(|p| is_real_like(p.lambda)) {
        Regime::FullyBroken
    } else {
        Regime::Mixed
    }
}

/// Clustering tolerance used when none is given: `1e-8 · max(κ, J)`.
pub fn default_cluster_tol(m: &DynamicalMatrix) -> f64 {
    1e-8 * m.scale().max(f64::MIN_POSITIVE)
}

/// Raw eigenvalues of `-iM` from a complex Schur decomposition.
pub fn raw_eigenvalues(m: &DynamicalMatrix) -> Result<Vec<C64>> {
    let a = m.generator();
    let n = a.nrows();
    let max_iter = 100 * n.max(10);
    // The unshifted structure of some rings (notably N = 4) makes the complex
    // QR iteration stall; a fixed unitary similarity breaks the symmetry
    // without moving the eigenvalues.
    let schur = Schur::try_new(a.clone(), f64::EPSILON, max_iter)
        .or_else(|| {
            let q = scrambling_unitary(n);
            Schur::try_new(q.adjoint() * &a * &q, f64::EPSILON, max_iter)
        })
        .ok_or_else(|| Error::EigenSolver("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenSolver("non-finite eigenvalue".into()));
    }
    Ok(values)
}

fn scrambling_unitary(n: usize) -> DMatrix<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0fc0_ffee);
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    g.qr().q()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut j = i;
        while self.0[j] != root {
            let next = self.0[j];
            self.0[j] = root;
            j = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Numerical spectrum of `-iM` with degeneracy grouping.
///
/// Eigenvalues closer than `tol` are merged. A defective eigenvalue splits
/// under rounding by roughly `sqrt(ε)`, far more than `tol`, so eigenvalues
/// within `sqrt(tol · scale)` whose eigenvectors are (numerically) parallel
/// are merged too. Each cluster's eigenspace is the null space of
/// `-iM - λ̄` at the cluster mean `λ̄`, with rank decided by a relative
/// singular-value threshold of [`RANK_REL_TOL`].
pub fn numerical_spectrum(m: &DynamicalMatrix, tol: f64) -> Result<SpectrumReport> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "clustering tolerance must be > 0"));
    }
    let a = m.generator();
    let n = a.nrows();
    let scale = m.scale().max(f64::MIN_POSITIVE);
    let values = raw_eigenvalues(m)?;
    let identity = DMatrix::<C64>::identity(n, n);

    let vectors: Vec<DVector<C64>> = values
        .iter()
        .map(|&lambda| linalg::smallest_singular_vector(&(&a - &identity * lambda)))
        .collect();

    let coalescence = (tol * scale).sqrt();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let gap = (values[i] - values[j]).norm();
            if gap <= tol {
                uf.union(i, j);
            } else if gap <= coalescence {
                let overlap = vectors[i].dotc(&vectors[j]).norm();
                if overlap >= 1.0 - 1e-4 {
                    uf.union(i, j);
                }
            }
        }
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = uf.find(i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[root_slot[r]].push(i);
    }

    let mut pairs = Vec::with_capacity(clusters.len());
    for members in clusters {
        let multiplicity = members.len();
        let lambda = members.iter().map(|&i| values[i]).sum::<C64>() / multiplicity as f64;
        let shifted = &a - &identity * lambda;
        let mut basis = linalg::null_space(&shifted, RANK_REL_TOL, scale);
        if basis.is_empty() {
            basis.push(linalg::smallest_singular_vector(&shifted));
        }
        // SVD lists singular values in descending order, so the tail of the
        // basis belongs to the smallest ones.
        if basis.len() > multiplicity {
            basis.drain(..basis.len() - multiplicity);
        }
        let eigenvectors = basis.into_iter().map(linalg::normalize_phase).collect();
        pairs.push(Eigenpair {
            lambda,
            multiplicity,
            eigenvectors,
        });
    }
    order_pairs(&mut pairs);
    let is_defective = pairs.iter().any(Eigenpair::is_defective);
    let regime = classify_eigenvalues(&pairs, coalescence);
    Ok(SpectrumReport {
        eigenpairs: pairs,
        is_defective,
        regime,
    })
}

/// One Bloch momentum `k` of the ring and its closed-form `λ_k²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochFamily {
    pub k: usize,
    /// `κ² - J²|f(q)|²`.
    pub lambda_sq: f64,
    /// False when the coupling factor vanishes and the pair is pinned at `±κ`.
    pub tunable: bool,
    /// `|f(q)|`: 2|cos(πk/n)| for rings of two or more pairs, 1 for a single pair.
    pub coupling_factor: f64,
}

impl BlochFamily {
    /// The non-negative-sign member: real `+sqrt(λ²)` or `+i sqrt(-λ²)`.
    pub fn lambda(&self) -> C64 {
        if self.lambda_sq >= 0.0 {
            C64::new(self.lambda_sq.sqrt(), 0.0)
        } else {
            C64::new(0.0, (-self.lambda_sq).sqrt())
        }
    }
}

fn coupling_phase_factor(n_pairs: usize, k: usize) -> C64 {
    if n_pairs == 1 {
        C64::new(1.0, 0.0)
    } else {
        let q = 2.0 * std::f64::consts::PI * k as f64 / n_pairs as f64;
        C64::new(1.0, 0.0) + C64::from_polar(1.0, -q)
    }
}

fn family_cos(n_pairs: usize, k: usize) -> f64 {
    (std::f64::consts::PI * k as f64 / n_pairs as f64).cos()
}

/// Closed-form families for `k = 0..n_pairs`.
pub fn bloch_families(params: &SystemParams) -> Vec<BlochFamily> {
    let n = params.n_pairs;
    let (kappa, j) = (params.kappa, params.coupling_j);
    (0..n)
        .map(|k| {
            let (factor, tunable) = if n == 1 {
                (1.0, true)
            } else {
                let c = family_cos(n, k);
                if c.abs() < 1e-12 {
                    (0.0, false)
                } else {
                    (2.0 * c.abs(), true)
                }
            };
            let lambda_sq = if tunable {
                kappa * kappa - j * j * factor * factor
            } else {
                kappa * kappa
            };
            BlochFamily {
                k,
                lambda_sq,
                tunable,
                coupling_factor: factor,
            }
        })
        .collect()
}

/// Bloch supermode of momentum `k` for eigenvalue `lambda` of `-iM`.
fn bloch_vector(params: &SystemParams, k: usize, lambda: C64) -> DVector<C64> {
    let n = params.n_pairs;
    let kappa = C64::new(params.kappa, 0.0);
    let f = coupling_phase_factor(n, k);
    let minus_i_j = C64::new(0.0, -params.coupling_j);
    // -i h(q) = [[κ, b], [c, -κ]]
    let b = minus_i_j * f;
    let c = minus_i_j * f.conj();
    let from_first_row = (b, lambda - kappa);
    let from_second_row = (lambda + kappa, c);
    let norm2 = |(x, y): (C64, C64)| x.norm_sqr() + y.norm_sqr();
    let (alpha, beta) = if norm2(from_first_row) >= norm2(from_second_row) {
        from_first_row
    } else {
        from_second_row
    };
    let mut v = DVector::<C64>::zeros(2 * n);
    for cell in 0..n {
        let q = 2.0 * std::f64::consts::PI * (k * cell) as f64 / n as f64;
        let phase = C64::from_polar(1.0, q);
        v[2 * cell] = alpha * phase;
        v[2 * cell + 1] = beta * phase;
    }
    linalg::normalize_phase(v)
}

/// Closed-form spectrum of `-iM` with Bloch supermodes as eigenvectors.
pub fn analytic_spectrum(params: &SystemParams) -> Result<SpectrumReport> {
    params.validate()?;
    let scale = params.kappa.max(params.coupling_j);
    let snap = 1e-14 * scale * scale;
    let mut members: Vec<(C64, DVector<C64>)> = Vec::with_capacity(params.n_cavities());
    for fam in bloch_families(params) {
        let lambda_sq = if fam.lambda_sq.abs() <= snap { 0.0 } else { fam.lambda_sq };
        let plus = BlochFamily { lambda_sq, ..fam }.lambda();
        for lambda in [plus, -plus] {
            members.push((lambda, bloch_vector(params, fam.k, lambda)));
        }
    }

    let merge_tol = 1e-12 * scale;
    let mut clusters: Vec<(C64, Vec<DVector<C64>>)> = Vec::new();
    for (lambda, v) in members {
        match clusters.iter_mut().find(|(mu, _)| (*mu - lambda).norm() <= merge_tol) {
            Some((_, vs)) => vs.push(v),
            None => clusters.push((lambda, vec![v])),
        }
    }

    let mut pairs: Vec<Eigenpair> = clusters
        .into_iter()
        .map(|(lambda, vectors)| {
            let multiplicity = vectors.len();
            let stacked = DMatrix::from_columns(&vectors);
            let rank = linalg::singular_values(&stacked)
                .iter()
                .filter(|&&s| s > RANK_REL_TOL)
                .count()
                .max(1);
            let eigenvectors = if rank == multiplicity {
                vectors
            } else {
                let svd = nalgebra::SVD::new(stacked, true, false);
                let u = svd.u.expect("left singular vectors requested");
                (0..rank)
                    .map(|i| linalg::normalize_phase(u.column(i).into_owned()))
                    .collect()
            };
            Eigenpair {
                lambda,
                multiplicity,
                eigenvectors,
            }
        })
        .collect();
    order_pairs(&mut pairs);
    let is_defective = pairs.iter().any(Eigenpair::is_defective);
    Ok(SpectrumReport {
        eigenpairs: pairs,
        is_defective,
        regime: classify_regime(params, DEFAULT_REGIME_TOL * scale),
    })
}

/// A coupling ratio at which a tunable family coalesces at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalPoint {
    pub j_over_kappa: f64,
    /// Smallest Bloch index `k` of the merging family (`k` and `n - k` merge
    /// together).
    pub family: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalPointSet {
    /// Sorted by increasing `J/κ`.
    pub points: Vec<ExceptionalPoint>,
    /// Families pinned at `±κ` for every coupling; they never coalesce.
    pub pinned_families: Vec<usize>,
}

impl ExceptionalPointSet {
    pub fn ratios(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.j_over_kappa).collect()
    }
}

/// Coupling ratios `J/κ = 1 / |f(q_k)|` at which family `k` coalesces. Only
/// the number of pairs matters.
pub fn exceptional_points(params: &SystemParams) -> ExceptionalPointSet {
    let n = params.n_pairs.max(1);
    let mut points = Vec::new();
    let mut pinned = Vec::new();
    for fam in bloch_families(&SystemParams::new(n, 1.0, 0.0)) {
        if fam.k > n - fam.k && fam.k != 0 {
            continue; // k and n - k share a family
        }
        if fam.tunable {
            points.push(ExceptionalPoint {
                j_over_kappa: 1.0 / fam.coupling_factor,
                family: fam.k,
            });
        } else {
            pinned.push(fam.k);
        }
    }
    points.sort_by(|a, b| a.j_over_kappa.partial_cmp(&b.j_over_kappa).unwrap_or(Ordering::Equal));
    ExceptionalPointSet {
        points,
        pinned_families: pinned,
    }
}

/// Regime from the closed-form families. `tol` is the absolute eigenvalue
/// modulus below which a tunable family counts as coalesced.
pub fn classify_regime(params: &SystemParams, tol: f64) -> Regime {
    let families = bloch_families(params);
    let tunable = || families.iter().filter(|f| f.tunable);
    if tunable().any(|f| f.lambda_sq.abs().sqrt() < tol) {
        return Regime::AtExceptionalPoint;
    }
    if families.iter().all(|f| f.lambda_sq < 0.0) {
        Regime::AllOscillatory
    } else if tunable().all(|f| f.lambda_sq > 0.0) {
        Regime::FullyBroken
    } else {
        Regime::Mixed
    }
}

fn count_real_eigenvalues(n_pairs: usize, j_over_kappa: f64) -> Result<usize> {
    let m = build_matrix(&SystemParams::new(n_pairs, 1.0, j_over_kappa))?;
    Ok(raw_eigenvalues(&m)?.into_iter().filter(|&z| is_real_like(z)).count())
}

/// Locates exceptional points numerically, independent of the closed form:
/// scans `J/κ` over `(0, j_max]` counting real eigenvalues of the
/// numerically diagonalized `-iM`, then bisects every bracket where the
/// count changes down to `1e-12`.
pub fn locate_exceptional_points(n_pairs: usize, j_max: f64, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2 scan points"));
    }
    if !(j_max > 0.0) {
        return Err(Error::invalid("j_max", "must be > 0"));
    }
    let step = j_max / samples as f64;
    let grid: Vec<f64> = (0..samples).map(|i| (i as f64 + 0.5) * step).collect();
    let counts = grid
        .iter()
        .map(|&j| count_real_eigenvalues(n_pairs, j))
        .collect::<Result<Vec<_>>>()?;
    let mut found = Vec::new();
    for w in 0..grid.len() - 1 {
        if counts[w] == counts[w + 1] {
            continue;
        }
        let (mut lo, mut hi) = (grid[w], grid[w + 1]);
        let c_lo = counts[w];
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if count_real_eigenvalues(n_pairs, mid)? == c_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        found.push(0.5 * (lo + hi));
    }
    Ok(found)
}
