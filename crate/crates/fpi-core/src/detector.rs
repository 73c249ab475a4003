//! Seeded Monte Carlo simulation of the pulse-integral acquisition chain.
//!
//! Each optical pulse sends the input state onto the cavity; the transmitted
//! photon number is drawn from the exact statistics (Poisson emission with
//! per-photon transmission thinning for coherent light, binomial thinning
//! for Fock states). The detector converts `k` absorbed photons into a pulse
//! integral `k * gain + noise`, the integrals are histogrammed, thresholds
//! between the photon-number peaks assign a detected photon number to every
//! pulse, and per-`k` fringe curves are accumulated across a phase scan.
//!
//! Reproducibility: every quantity is drawn from a counter-seeded PCG
//! stream derived from `(rng_seed, grid point index)`, so scans are
//! reproducible bit for bit and independent of evaluation order.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

use crate::optics::{self, MirrorSpec, Phase, PhaseGrid};
use crate::photon::{CurveKind, FringeCurve, InputSpec};
use crate::special::poisson_cdf;
use crate::{Error, Result};

/// Linear detector response model: `integral = k * gain + N(0, noise_sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    gain: f64,
    noise_sigma: f64,
    k_max_observable: u32,
    rng_seed: u64,
}

impl DetectorModel {
    /// `gain > 0`, `0 <= noise_sigma < gain / 2`; the upper bound keeps
    /// neighboring photon-number peaks separable for thresholding.
    pub fn new(gain: f64, noise_sigma: f64, k_max_observable: u32, rng_seed: u64) -> Result<Self> {
        if !gain.is_finite() || gain <= 0.0 {
            return Err(Error::InvalidGain(gain));
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 || noise_sigma >= gain / 2.0 {
            return Err(Error::InvalidNoise(noise_sigma));
        }
        Ok(Self { gain, noise_sigma, k_max_observable, rng_seed })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn k_max_observable(&self) -> u32 {
        self.k_max_observable
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }
}

/// Outcome of threshold-based photon-number assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assigned {
    Resolved(u32),
    /// Above the highest resolvable photon number.
    Overflow,
}

/// One simulated pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRecord {
    pub pulse_index: u64,
    pub true_k: u32,
    pub integral: f64,
    pub assigned: Option<Assigned>,
}

/// How thresholds between photon-number peaks are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Model-known midpoints `(k + 1/2) * gain`.
    #[default]
    Oracle,
    /// Valleys of the smoothed pulse-integral histogram. Assumes the lowest
    /// peak is the zero-photon peak.
    DataDriven,
}

/// Binned pulse integrals plus the thresholds used for assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseHistogram {
    bin_lo: f64,
    bin_width: f64,
    pub counts: Vec<u64>,
    /// Strictly increasing boundary positions between `k` and `k + 1`.
    pub thresholds: Vec<f64>,
}

impl PulseHistogram {
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Lower edge of bin `i`.
    pub fn bin_edge(&self, i: usize) -> f64 {
        self.bin_lo + i as f64 * self.bin_width
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_edge(i) + 0.5 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bin_of(&self, value: f64) -> usize {
        let raw = libm::floor((value - self.bin_lo) / self.bin_width);
        raw.clamp(0.0, (self.counts.len() - 1) as f64) as usize
    }
}

/// Deterministic stream seed for one grid point.
fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut Pcg64Mcg) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Uniform in (0, 1]; safe under a logarithm.
fn uniform_open(rng: &mut Pcg64Mcg) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

fn gaussian(rng: &mut Pcg64Mcg) -> f64 {
    let u1 = uniform_open(rng);
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Poisson sample by sequential inversion; fine for the photon-scale means
/// used here.
fn poisson(rng: &mut Pcg64Mcg, mean: f64) -> u32 {
    debug_assert!(mean >= 0.0 && mean < 600.0);
    if mean == 0.0 {
        return 0;
    }
    let u = uniform(rng);
    let mut k = 0u32;
    let mut pmf = libm::exp(-mean);
    let mut cdf = pmf;
    let cap = (mean + 20.0 * libm::sqrt(mean) + 100.0) as u32;
    while u > cdf && k < cap {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

/// Binomial thinning: each of `n` photons passes independently with
/// probability `p`.
fn thin(rng: &mut Pcg64Mcg, n: u32, p: f64) -> u32 {
    let mut k = 0;
    for _ in 0..n {
        if uniform(rng) < p {
            k += 1;
        }
    }
    k
}

fn draw_true_k(rng: &mut Pcg64Mcg, input: &InputSpec, t2: f64) -> u32 {
    let emitted = match input {
        InputSpec::Coherent(c) => poisson(rng, c.n_bar()),
        InputSpec::Fock(f) => f.n(),
    };
    thin(rng, emitted, t2)
}

/// Simulate `n_pulses` at a fixed detuning (stream index 0 of the seed).
///
/// `true_k` follows the exact photon statistics at the given phase; the
/// integral adds Gaussian detector noise. Records come back unassigned.
pub fn simulate_pulses(
    input: &InputSpec,
    m: MirrorSpec,
    p: Phase,
    n_pulses: u64,
    d: &DetectorModel,
) -> Result<Vec<CountRecord>> {
    if n_pulses == 0 {
        return Err(Error::NoPulses);
    }
    let mut rng = Pcg64Mcg::seed_from_u64(mix_seed(d.rng_seed, 0));
    let t2 = optics::transmittance(m, p);
    let mut records = Vec::with_capacity(n_pulses as usize);
    for i in 0..n_pulses {
        let true_k = draw_true_k(&mut rng, input, t2);
        let integral = true_k as f64 * d.gain + d.noise_sigma * gaussian(&mut rng);
        records.push(CountRecord { pulse_index: i, true_k, integral, assigned: None });
    }
    Ok(records)
}

/// Histogram the pulse integrals and place thresholds per `mode`.
pub fn build_histogram(
    records: &[CountRecord],
    bin_width: f64,
    d: &DetectorModel,
    mode: ThresholdMode,
) -> Result<PulseHistogram> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(Error::InvalidBinWidth(bin_width));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in records {
        lo = lo.min(r.integral);
        hi = hi.max(r.integral);
    }
    let bin_lo = bin_width * libm::floor(lo / bin_width);
    let n_bins = (libm::floor((hi - bin_lo) / bin_width) as usize) + 1;
    let mut h = PulseHistogram {
        bin_lo,
        bin_width,
        counts: vec![0; n_bins],
        thresholds: Vec::new(),
    };
    for r in records {
        let i = h.bin_of(r.integral);
        h.counts[i] += 1;
    }
    h.thresholds = match mode {
        ThresholdMode::Oracle => oracle_thresholds(d),
        ThresholdMode::DataDriven => valley_thresholds(&h)?,
    };
    Ok(h)
}

fn oracle_thresholds(d: &DetectorModel) -> Vec<f64> {
    (0..=d.k_max_observable)
        .map(|k| (k as f64 + 0.5) * d.gain)
        .collect()
}

/// Thresholds from local minima of the smoothed histogram between
/// neighboring photon-number peaks.
fn valley_thresholds(h: &PulseHistogram) -> Result<Vec<f64>> {
    let n = h.counts.len();
    if n < 5 {
        return Err(Error::NonSeparableHistogram);
    }
    // centered moving average, width 5
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += h.counts[j] as f64;
            }
            s / (hi - lo + 1) as f64
        })
        .collect();
    let floor = smooth.iter().cloned().fold(0.0, f64::max) * 1e-3;
    // peaks: strict local maxima above the floor, plateau-tolerant
    let mut peaks: Vec<usize> = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if smooth[i] > floor && smooth[i] >= smooth[i - 1] && smooth[i] > smooth[i + 1] {
            // walk back over any flat run
            let mut j = i;
            while j > 0 && smooth[j - 1] == smooth[i] {
                j -= 1;
            }
            if j == 0 || smooth[j - 1] < smooth[i] {
                peaks.push((i + j) / 2);
            }
        }
        i += 1;
    }
    if peaks.len() < 2 {
        return Err(Error::NonSeparableHistogram);
    }
    let mut thresholds = Vec::with_capacity(peaks.len() - 1);
    for w in peaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut imin = a;
        let mut vmin = f64::INFINITY;
        for j in a..=b {
            if smooth[j] < vmin {
                vmin = smooth[j];
                imin = j;
            }
        }
        // a valley must actually separate its peaks
        if vmin > 0.5 * smooth[a].min(smooth[b]) {
            return Err(Error::NonSeparableHistogram);
        }
        thresholds.push(h.bin_center(imin));
    }
    Ok(thresholds)
}

/// Assignment bookkeeping returned by [`assign_counts`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssignStats {
    /// Records whose resolved photon number differs from the true one.
    pub misassigned: u64,
    pub overflow: u64,
}

/// Assign a detected photon number to every record by threshold bracketing.
pub fn assign_counts(
    h: &PulseHistogram,
    records: &mut [CountRecord],
    k_max_observable: u32,
) -> AssignStats {
    let mut stats = AssignStats::default();
    for r in records.iter_mut() {
        let below = h.thresholds.iter().take_while(|&&t| r.integral >= t).count() as u32;
        let assigned = if below > k_max_observable {
            stats.overflow += 1;
            Assigned::Overflow
        } else {
            if below != r.true_k {
                stats.misassigned += 1;
            }
            Assigned::Resolved(below)
        };
        r.assigned = Some(assigned);
    }
    stats
}

/// Options for a phase-scan experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Linear drift of the true detuning per grid point (applied
    /// continuously in time, so the phase also smears within a point).
    pub drift_per_point: f64,
    pub threshold_mode: ThresholdMode,
    /// Histogram bin width; defaults to `gain / 50`.
    pub bin_width: Option<f64>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { drift_per_point: 0.0, threshold_mode: ThresholdMode::Oracle, bin_width: None }
    }
}

/// Everything a scan produces: empirical per-`k` fringe curves, the pooled
/// pulse-integral histogram, and assignment bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// Empirical frequency curves for `k = 0..=k_max_observable`.
    pub curves: Vec<FringeCurve>,
    pub histogram: PulseHistogram,
    pub pulses_per_point: u64,
    pub misassigned: u64,
    pub overflow: u64,
}

/// Run the full pipeline across a phase grid: simulate pulses at every grid
/// point (independent RNG substream per point), histogram the integrals,
/// assign photon numbers, and accumulate per-`k` frequencies.
pub fn scan_experiment(
    input: &InputSpec,
    m: MirrorSpec,
    grid: &PhaseGrid,
    pulses_per_point: u64,
    d: &DetectorModel,
    opts: ScanOptions,
) -> Result<ScanResult> {
    if pulses_per_point == 0 {
        return Err(Error::NoPulses);
    }
    if !opts.drift_per_point.is_finite() {
        return Err(Error::InvalidOption("drift_per_point must be finite"));
    }
    let bin_width = match opts.bin_width {
        Some(w) if w.is_finite() && w > 0.0 => w,
        Some(w) => return Err(Error::InvalidBinWidth(w)),
        None => d.gain / 50.0,
    };
    let kmax = d.k_max_observable;
    let xs: Vec<f64> = grid.values().collect();

    // fixed pooled-histogram range so accumulation is single-pass
    let pad = 6.0 * d.noise_sigma + d.gain;
    let bin_lo = bin_width * libm::floor((-0.5 * d.gain - pad) / bin_width);
    let hi = (kmax as f64 + 1.5) * d.gain + pad;
    let n_bins = (libm::floor((hi - bin_lo) / bin_width) as usize) + 1;
    let mut hist = PulseHistogram {
        bin_lo,
        bin_width,
        counts: vec![0; n_bins],
        thresholds: oracle_thresholds(d),
    };

    // data-driven thresholds need the pooled histogram first; the seeded
    // substreams make the second pass bit-identical to the first
    let passes = match opts.threshold_mode {
        ThresholdMode::Oracle => 1,
        ThresholdMode::DataDriven => 2,
    };
    let mut per_k: Vec<Vec<u64>> = vec![vec![0; xs.len()]; kmax as usize + 2];
    let mut misassigned = 0u64;
    let mut overflow = 0u64;

    for pass in 0..passes {
        let assign_now = pass + 1 == passes;
        for (j, &x) in xs.iter().enumerate() {
            let mut rng = Pcg64Mcg::seed_from_u64(mix_seed(d.rng_seed, j as u64));
            let drift_base = opts.drift_per_point * j as f64;
            let t2_fixed = if opts.drift_per_point == 0.0 {
                Some(optics::transmittance(m, Phase::new(x)?))
            } else {
                None
            };
            for i in 0..pulses_per_point {
                let t2 = match t2_fixed {
                    Some(t2) => t2,
                    None => {
                        let xt = x + drift_base
                            + opts.drift_per_point * (i as f64 / pulses_per_point as f64);
                        optics::transmittance(m, Phase::new(xt)?)
                    }
                };
                let true_k = draw_true_k(&mut rng, input, t2);
                let integral = true_k as f64 * d.gain + d.noise_sigma * gaussian(&mut rng);
                if pass == 0 {
                    let b = hist.bin_of(integral);
                    hist.counts[b] += 1;
                }
                if assign_now {
                    let below =
                        hist.thresholds.iter().take_while(|&&t| integral >= t).count() as u32;
                    if below > kmax {
                        overflow += 1;
                        per_k[kmax as usize + 1][j] += 1;
                    } else {
                        if below != true_k {
                            misassigned += 1;
                        }
                        per_k[below as usize][j] += 1;
                    }
                }
            }
        }
        if pass == 0 && passes == 2 {
            hist.thresholds = valley_thresholds(&hist)?;
        }
    }

    let mut curves = Vec::with_capacity(kmax as usize + 1);
    for (k, counts) in per_k.iter().enumerate().take(kmax as usize + 1) {
        let samples: Vec<(f64, f64)> = xs
            .iter()
            .zip(counts)
            .map(|(&x, &c)| (x, c as f64 / pulses_per_point as f64))
            .collect();
        let kind = match input {
            InputSpec::Coherent(c) => CurveKind::CoherentK { n_bar: c.n_bar(), k: k as u32 },
            InputSpec::Fock(f) => CurveKind::FockK { n: f.n(), k: k as u32 },
        };
        curves.push(FringeCurve::new(kind, m, samples)?);
    }
    Ok(ScanResult { curves, histogram: hist, pulses_per_point, misassigned, overflow })
}

/// Pointwise classical reconstruction `sum_k k * p_k` from per-`k` curves
/// sharing one grid.
///
/// With every `k` up to the input photon scale included this recovers the
/// mean signal exactly; a truncated set recovers the Poisson-weighted
/// fraction `P(X <= K - 1)` of it at the fringe peak.
pub fn reconstruct_classical(curves: &[FringeCurve]) -> Result<FringeCurve> {
    let first = curves.first().ok_or(Error::EmptyRecords)?;
    let mut mean_photons = 0.0;
    for c in curves {
        if !c.same_grid(first) {
            return Err(Error::MismatchedGrids);
        }
        match c.kind {
            CurveKind::CoherentK { n_bar, .. } => mean_photons = n_bar,
            CurveKind::FockK { n, .. } => mean_photons = n as f64,
            CurveKind::ClassicalMean { .. } => {
                return Err(Error::InvalidOption("reconstruction needs p_k curves"))
            }
        }
    }
    let mut samples: Vec<(f64, f64)> = first.xs().map(|x| (x, 0.0)).collect();
    for c in curves {
        let k = c.kind.detected_k().expect("validated above") as f64;
        for (acc, &(_, v)) in samples.iter_mut().zip(&c.samples) {
            acc.1 += k * v;
        }
    }
    FringeCurve::new(
        CurveKind::ClassicalMean { mean_photons },
        first.mirror,
        samples,
    )
}

/// Truncated-mean coverage at mean `mu`: `sum_{k=1}^{K} k p_k = mu * P(X <= K-1)`.
///
/// Exposed because the truncation deficit of a reconstructed classical
/// signal is exactly this factor at each point.
pub fn truncated_mean_fraction(mu: f64, k_max: u32) -> f64 {
    if k_max == 0 {
        return 0.0;
    }
    poisson_cdf(mu, k_max - 1)
}
