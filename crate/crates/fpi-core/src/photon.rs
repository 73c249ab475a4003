//! Photon-number-resolved detection probabilities at the cavity output.
//!
//! A coherent input of mean photon number `n_bar` produces Poissonian
//! statistics thinned by the transmission: the probability of detecting `k`
//! photons collapses to a Poisson law of mean `n_bar |T|^2`. A Fock input
//! `|n>` is binomially thinned, `p_k = C(n,k) |T|^{2k} (1-|T|^2)^{n-k}`.
//! Both families share the mean `n |T|^2`, but the resolved curves differ:
//! every `k`-curve with `k` below the (mean) input photon number develops a
//! dip at the center of the fringe maximum, and the `k = n` Fock curve
//! narrows as `|T|^{2n}`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::optics::{self, MirrorSpec, Phase, PhaseGrid, MAX_FOCK_N};
use crate::special::{ln_binomial, poisson_pmf};
use crate::{Error, Result};

/// Coherent input state with mean photon number `n_bar = |alpha|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentInput {
    n_bar: f64,
}

impl CoherentInput {
    pub fn new(n_bar: f64) -> Result<Self> {
        if !n_bar.is_finite() || n_bar < 0.0 {
            return Err(Error::InvalidMeanPhotons(n_bar));
        }
        Ok(Self { n_bar })
    }

    pub fn n_bar(self) -> f64 {
        self.n_bar
    }

    /// Truncation order for sums over the photon number: `ceil(n_bar +
    /// 12 sqrt(n_bar) + 12)` keeps the neglected Poisson tail below 1e-12
    /// (verified by test against the summed tail).
    pub fn k_max(self) -> u32 {
        libm::ceil(self.n_bar + 12.0 * libm::sqrt(self.n_bar) + 12.0) as u32
    }
}

/// Fock input state `|n>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockInput {
    n: u32,
}

impl FockInput {
    pub fn new(n: u32) -> Result<Self> {
        if n > MAX_FOCK_N {
            return Err(Error::PhotonNumberTooLarge(n));
        }
        Ok(Self { n })
    }

    pub fn n(self) -> u32 {
        self.n
    }
}

/// Input state of the interferometer (the second port always carries vacuum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSpec {
    Coherent(CoherentInput),
    Fock(FockInput),
}

impl InputSpec {
    /// Mean photon number of the input.
    pub fn mean_photons(&self) -> f64 {
        match self {
            InputSpec::Coherent(c) => c.n_bar(),
            InputSpec::Fock(f) => f.n() as f64,
        }
    }
}

/// What a sampled fringe curve shows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    /// `p_k` for a coherent input.
    CoherentK { n_bar: f64, k: u32 },
    /// `p_k` for a Fock input.
    FockK { n: u32, k: u32 },
    /// Mean detected photon number (the classical signal).
    ClassicalMean { mean_photons: f64 },
}

impl CurveKind {
    /// Stable short label used for file naming and reports.
    pub fn label(&self) -> String {
        use alloc::format;
        match self {
            CurveKind::CoherentK { k, .. } => format!("k{k}"),
            CurveKind::FockK { k, .. } => format!("k{k}"),
            CurveKind::ClassicalMean { .. } => String::from("classical"),
        }
    }

    /// Detected photon number, when the curve is a `p_k` curve.
    pub fn detected_k(&self) -> Option<u32> {
        match self {
            CurveKind::CoherentK { k, .. } | CurveKind::FockK { k, .. } => Some(*k),
            CurveKind::ClassicalMean { .. } => None,
        }
    }

    fn is_probability(&self) -> bool {
        !matches!(self, CurveKind::ClassicalMean { .. })
    }
}

/// A sampled probability-versus-detuning (or mean-versus-detuning) curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeCurve {
    pub kind: CurveKind,
    pub mirror: MirrorSpec,
    /// `(l_over_lambda, value)` with strictly increasing detuning.
    pub samples: Vec<(f64, f64)>,
}

impl FringeCurve {
    /// Validates ordering and value ranges: probabilities in `[0, 1]`,
    /// mean counts non-negative.
    pub fn new(kind: CurveKind, mirror: MirrorSpec, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if !samples.windows(2).all(|w| w[1].0 > w[0].0) {
            return Err(Error::UnsortedSamples);
        }
        let hi = if kind.is_probability() { 1.0 + 1e-12 } else { f64::INFINITY };
        for &(_, v) in &samples {
            if !v.is_finite() || v < 0.0 || v > hi {
                return Err(Error::InvalidCurveValue(v));
            }
        }
        Ok(Self { kind, mirror, samples })
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    /// True when both curves sample exactly the same detunings.
    pub fn same_grid(&self, other: &FringeCurve) -> bool {
        self.samples.len() == other.samples.len()
            && self
                .samples
                .iter()
                .zip(&other.samples)
                .all(|(a, b)| a.0 == b.0)
    }
}

/// Probability of detecting `k` photons for a coherent input.
///
/// The defining sum over emitted photon numbers collapses to a Poisson law
/// of mean `n_bar |T|^2`; the equivalence with the direct truncated sum is
/// pinned by test.
pub fn p_k_coherent(c: CoherentInput, m: MirrorSpec, p: Phase, k: u32) -> f64 {
    poisson_pmf(c.n_bar() * optics::transmittance(m, p), k)
}

/// Mean detected photon number `n_bar |T|^2` for a coherent input — the
/// classical fringe signal.
pub fn classical_mean_coherent(c: CoherentInput, m: MirrorSpec, p: Phase) -> f64 {
    c.n_bar() * optics::transmittance(m, p)
}

/// Probability of detecting `k` of the `n` photons of a Fock input:
/// the binomial law `C(n,k) |T|^{2k} (1-|T|^2)^{n-k}`.
///
/// Detecting more photons than were sent is a caller bug and reported as an
/// error rather than silently returning zero.
pub fn p_k_fock(f: FockInput, m: MirrorSpec, p: Phase, k: u32) -> Result<f64> {
    let n = f.n();
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    let t2 = optics::transmittance(m, p);
    let omt = optics::one_minus_transmittance(m, p);
    // at an exact fringe maximum only the k = n outcome survives
    if omt == 0.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let mut ln = ln_binomial(n as u64, k as u64) + (n - k) as f64 * libm::log(omt);
    if k > 0 {
        ln += k as f64 * libm::log(t2);
    }
    Ok(libm::exp(ln))
}

/// Mean transmitted photon number `n |T|^2` for a Fock input; identical to
/// the classical coherent signal at `n_bar = n`.
pub fn mean_fock(f: FockInput, m: MirrorSpec, p: Phase) -> f64 {
    f.n() as f64 * optics::transmittance(m, p)
}

/// Evaluate fringe curves over a grid: one curve per requested detected
/// photon number `k`, plus optionally the classical mean.
///
/// Fock inputs reject any `k` above `n` up front.
pub fn fringe_scan(
    input: &InputSpec,
    m: MirrorSpec,
    grid: &PhaseGrid,
    ks: &[u32],
    include_classical: bool,
) -> Result<Vec<FringeCurve>> {
    if let InputSpec::Fock(f) = input {
        if let Some(&k) = ks.iter().find(|&&k| k > f.n()) {
            return Err(Error::KExceedsN { k, n: f.n() });
        }
    }
    let xs: Vec<f64> = grid.values().collect();
    let mut curves = Vec::new();
    for &k in ks {
        let mut samples = Vec::with_capacity(xs.len());
        for &x in &xs {
            let p = Phase::new(x)?;
            let v = match input {
                InputSpec::Coherent(c) => p_k_coherent(*c, m, p, k),
                InputSpec::Fock(f) => p_k_fock(*f, m, p, k)?,
            };
            samples.push((x, v));
        }
        let kind = match input {
            InputSpec::Coherent(c) => CurveKind::CoherentK { n_bar: c.n_bar(), k },
            InputSpec::Fock(f) => CurveKind::FockK { n: f.n(), k },
        };
        curves.push(FringeCurve::new(kind, m, samples)?);
    }
    if include_classical {
        let mut samples = Vec::with_capacity(xs.len());
        for &x in &xs {
            let p = Phase::new(x)?;
            let v = match input {
                InputSpec::Coherent(c) => classical_mean_coherent(*c, m, p),
                InputSpec::Fock(f) => mean_fock(*f, m, p),
            };
            samples.push((x, v));
        }
        curves.push(FringeCurve::new(
            CurveKind::ClassicalMean { mean_photons: input.mean_photons() },
            m,
            samples,
        )?);
    }
    Ok(curves)
}
