//! Ring of alternating gain and loss cavities.
//!
//! Cavity amplitudes are ordered `c = (a1, b1, a2, b2, ..., an, bn)`, where
//! `a` cavities amplify at rate κ and `b` cavities dissipate at the same rate.
//! Neighbouring cavities on the ring exchange photons with real coupling `J`,
//! including the closing `bn <-> a1` link. The linear equation of motion is
//!
//! ```text
//! i dc/dt = M c + d(t)
//! ```
//!
//! with `M[k][k] = ±iκ` (gain/loss) and `M[k][k±1 mod N] = J`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::C64;

/// Whether a cavity amplifies or dissipates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    Gain,
    Loss,
}

impl SiteKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SiteKind::Gain => "gain",
            SiteKind::Loss => "loss",
        }
    }
}

/// Zero-based cavity index. Even indices are gain cavities `a_i`, odd
/// indices loss cavities `b_i`; the 1-based label is available through
/// [`Site::label`] and `Display`.
///
/// Serialized as its label (`"a1"`, `"b3"`); deserializes from either a
/// label or a bare index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site(pub usize);

impl Site {
    pub fn gain(pair: usize) -> Site {
        assert!(pair >= 1, "pair numbers are 1-based");
        Site(2 * (pair - 1))
    }

    pub fn loss(pair: usize) -> Site {
        assert!(pair >= 1, "pair numbers are 1-based");
        Site(2 * (pair - 1) + 1)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn kind(self) -> SiteKind {
        if self.0.is_multiple_of(2) {
            SiteKind::Gain
        } else {
            SiteKind::Loss
        }
    }

    /// 1-based pair number `i` of `a_i` / `b_i`.
    pub fn pair(self) -> usize {
        self.0 / 2 + 1
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letter = match self.kind() {
            SiteKind::Gain => 'a',
            SiteKind::Loss => 'b',
        };
        write!(f, "{letter}{}", self.pair())
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Site> {
        let s = s.trim();
        if let Ok(index) = s.parse::<usize>() {
            return Ok(Site(index));
        }
        let bad = || Error::invalid("site", format!("cannot parse {s:?}; expected a1, b2, ... or an index"));
        let mut chars = s.chars();
        let letter = chars.next().ok_or_else(bad)?;
        let pair: usize = chars.as_str().parse().map_err(|_| bad())?;
        if pair == 0 {
            return Err(bad());
        }
        match letter.to_ascii_lowercase() {
            'a' => Ok(Site::gain(pair)),
            'b' => Ok(Site::loss(pair)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Site {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Site, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Index(usize),
            Label(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Index(i) => Ok(Site(i)),
            Repr::Label(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Coherent drive `d_site(t) = i E e^{iΔt}` on a single cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub site: Site,
    /// Drive amplitude `E` (rate units). Zero means undriven.
    pub amplitude_e: f64,
    /// Detuning `Δ` of the drive from the cavity resonance.
    pub detuning_delta: f64,
}

impl Default for DriveSpec {
    fn default() -> Self {
        DriveSpec {
            site: Site(0),
            amplitude_e: 0.0,
            detuning_delta: 0.0,
        }
    }
}

impl DriveSpec {
    pub fn new(site: Site, amplitude_e: f64, detuning_delta: f64) -> Self {
        DriveSpec {
            site,
            amplitude_e,
            detuning_delta,
        }
    }

    pub fn undriven() -> Self {
        DriveSpec::default()
    }

    /// Forcing `-i d(t)` that enters `dμ/dt`; this is `E e^{iΔt}`.
    pub(crate) fn forcing(&self, t: f64) -> C64 {
        C64::from_polar(self.amplitude_e, self.detuning_delta * t)
    }
}

/// Physical configuration of a ring. Rates are in the same units as κ;
/// κ = 1 is the usual normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Number of gain/loss pairs; the ring holds `2 * n_pairs` cavities.
    pub n_pairs: usize,
    pub kappa: f64,
    pub coupling_j: f64,
    #[serde(default)]
    pub drive: DriveSpec,
    /// Cavity-to-fiber output coupling γ.
    #[serde(default)]
    pub gamma_out: f64,
    #[serde(default)]
    pub noise_enabled: bool,
}

impl SystemParams {
    /// Undriven, noiseless ring with no output coupling.
    pub fn new(n_pairs: usize, kappa: f64, coupling_j: f64) -> Self {
        SystemParams {
            n_pairs,
            kappa,
            coupling_j,
            drive: DriveSpec::default(),
            gamma_out: 0.0,
            noise_enabled: false,
        }
    }

    /// Like [`SystemParams::new`] but takes the total cavity count, which
    /// must be even and at least 2.
    pub fn with_cavities(n_cavities: usize, kappa: f64, coupling_j: f64) -> Result<Self> {
        if n_cavities < 2 || !n_cavities.is_multiple_of(2) {
            return Err(Error::CavityCount(n_cavities));
        }
        Ok(SystemParams::new(n_cavities / 2, kappa, coupling_j))
    }

    pub fn with_drive(mut self, drive: DriveSpec) -> Self {
        self.drive = drive;
        self
    }

    pub fn with_noise(mut self, enabled: bool) -> Self {
        self.noise_enabled = enabled;
        self
    }

    pub fn with_gamma_out(mut self, gamma_out: f64) -> Self {
        self.gamma_out = gamma_out;
        self
    }

    /// Total number of cavities `N`.
    pub fn n_cavities(&self) -> usize {
        2 * self.n_pairs
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        (0..self.n_cavities()).map(Site)
    }

    pub fn gain_sites(&self) -> impl Iterator<Item = Site> {
        (0..self.n_pairs).map(|i| Site(2 * i))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::CavityCount(0));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::invalid("kappa", format!("must be finite and > 0, got {}", self.kappa)));
        }
        if !(self.coupling_j.is_finite() && self.coupling_j >= 0.0) {
            return Err(Error::invalid(
                "coupling_j",
                format!("must be finite and >= 0, got {}", self.coupling_j),
            ));
        }
        if !(self.gamma_out.is_finite() && self.gamma_out >= 0.0) {
            return Err(Error::invalid(
                "gamma_out",
                format!("must be finite and >= 0, got {}", self.gamma_out),
            ));
        }
        if self.drive.site.index() >= self.n_cavities() {
            return Err(Error::invalid(
                "drive.site",
                format!("{} is outside a ring of {} cavities", self.drive.site, self.n_cavities()),
            ));
        }
        if !(self.drive.amplitude_e.is_finite() && self.drive.amplitude_e >= 0.0) {
            return Err(Error::invalid(
                "drive.amplitude_e",
                format!("must be finite and >= 0, got {}", self.drive.amplitude_e),
            ));
        }
        if !self.drive.detuning_delta.is_finite() {
            return Err(Error::invalid("drive.detuning_delta", "must be finite"));
        }
        Ok(())
    }
}

/// The `N x N` matrix `M` of the equation of motion, with the gain/loss tag
/// of every site.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalMatrix {
    entries: DMatrix<C64>,
    parity: Vec<SiteKind>,
}

impl DynamicalMatrix {
    /// Wraps an arbitrary square matrix, tagging sites in the usual
    /// alternating gain/loss order. Useful for perturbation studies.
    pub fn from_entries(entries: DMatrix<C64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::invalid("entries", "matrix must be square"));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::CavityCount(n));
        }
        let parity = (0..n).map(|k| Site(k).kind()).collect();
        Ok(DynamicalMatrix { entries, parity })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn site_parity(&self) -> &[SiteKind] {
        &self.parity
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    /// The generator `-iM` of the homogeneous evolution `dc/dt = -iM c`.
    pub fn generator(&self) -> DMatrix<C64> {
        let minus_i = C64::new(0.0, -1.0);
        self.entries.map(|z| z * minus_i)
    }

    /// Largest entry modulus; the natural rate scale of the matrix.
    pub fn scale(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }
}

/// Builds `M` for the ring described by `params`.
///
/// For `N = 2` the ring's closing link coincides with the single
/// nearest-neighbour link, and the off-diagonal entry is `J` (not `2J`).
pub fn build_matrix(params: &SystemParams) -> Result<DynamicalMatrix> {
    params.validate()?;
    let n = params.n_cavities();
    let mut entries = DMatrix::<C64>::zeros(n, n);
    let coupling = C64::new(params.coupling_j, 0.0);
    for k in 0..n {
        entries[(k, k)] = match Site(k).kind() {
            SiteKind::Gain => C64::new(0.0, params.kappa),
            SiteKind::Loss => C64::new(0.0, -params.kappa),
        };
        let next = (k + 1) % n;
        entries[(k, next)] = coupling;
        entries[(next, k)] = coupling;
    }
    let parity = (0..n).map(|k| Site(k).kind()).collect();
    Ok(DynamicalMatrix { entries, parity })
}

/// Coherent drive vector `d(t)`: zero except `i E e^{iΔt}` at the drive site.
pub fn build_drive(params: &SystemParams, t: f64) -> DVector<C64> {
    let n = params.n_cavities();
    let mut d = DVector::<C64>::zeros(n);
    let drive = &params.drive;
    if drive.amplitude_e != 0.0 && drive.site.index() < n {
        d[drive.site.index()] = C64::i() * drive.forcing(t);
    }
    d
}

/// Outcome of [`check_cpt_symmetry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptCheck {
    /// True iff the shifted matrix equals the conjugate entry for entry.
    pub holds: bool,
    /// `max |(P M P⁻¹)_kl - conj(M_kl)|`.
    pub max_violation: f64,
}

impl CptCheck {
    pub fn holds_within(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Tests `P M P⁻¹ = M*`, where `P` shifts every amplitude one site along the
/// ring, `(a1, b1, ..., an, bn) -> (b1, a2, ..., bn, a1)`, and complex
/// conjugation plays the role of time reversal.
pub fn check_cpt_symmetry(m: &DynamicalMatrix) -> CptCheck {
    let n = m.dim();
    let e = m.entries();
    let mut max_violation = 0.0_f64;
    for k in 0..n {
        for l in 0..n {
            let shifted = e[((k + 1) % n, (l + 1) % n)];
            max_violation = max_violation.max((shifted - e[(k, l)].conj()).norm());
        }
    }
    CptCheck {
        holds: max_violation == 0.0,
        max_violation,
    }
}
