//! Length sensitivity, peak statistics, FSR uncertainty, and finesse.
//!
//! The sensitivity of a length measurement is the error-propagation ratio
//! `delta L = std(C) / |d<C>/dL|` for the chosen detection observable `C`.
//! For a mean-intensity measurement of a coherent input this reduces to the
//! shot-noise baseline `(1/sqrt(n_bar)) |T| / |d|T|^2/dL|`; for a single
//! photon-number projector it is `sqrt(p(1-p)) / |dp/dL|`. Wherever the
//! derivative vanishes (fringe extrema) the sensitivity is undefined and
//! reported as a missing sample, not clipped.
//!
//! Peak statistics use the discrete windowed forms `mu = sum p_i x_i`,
//! `sigma^2 = sum p_i (x_i - mu)^2` with `p_i = f_i / N`, matching how
//! scanned fringe peaks are summarized experimentally.

use alloc::vec::Vec;

use crate::optics::{self, MirrorSpec, Phase, PhaseGrid};
use crate::photon::{self, CoherentInput, FockInput};
use crate::special::poisson_pmf;
use crate::{Error, Result};

use core::f64::consts::PI;

/// Which state/measurement pair a sensitivity curve describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensitivityKind {
    /// Coherent input, mean-intensity readout (the shot-noise baseline).
    CoherentMean(CoherentInput),
    /// Coherent input, projection on `k` detected photons.
    CoherentK(CoherentInput, u32),
    /// Fock input `|n>`, projection on `k` detected photons.
    FockK(FockInput, u32),
}

impl SensitivityKind {
    fn validate(&self) -> Result<()> {
        match *self {
            SensitivityKind::CoherentMean(c) | SensitivityKind::CoherentK(c, _) => {
                if c.n_bar() <= 0.0 {
                    return Err(Error::InvalidMeanPhotons(c.n_bar()));
                }
            }
            SensitivityKind::FockK(f, k) => {
                if k > f.n() {
                    return Err(Error::KExceedsN { k, n: f.n() });
                }
            }
        }
        Ok(())
    }
}

/// Sampled `delta L / lambda` curve; `None` marks points where the
/// sensitivity is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve {
    pub kind: SensitivityKind,
    pub mirror: MirrorSpec,
    pub samples: Vec<(f64, Option<f64>)>,
}

/// Shared kernel for a binary (projector) observable with success
/// probability `p`: `sqrt(p(1-p)) / |dp/dL|`.
///
/// Undefined when `p` is outside `(0, 1)` or the derivative vanishes.
pub fn sensitivity_binary(p: f64, dp_dl: f64) -> Option<f64> {
    if !(p > 0.0 && p < 1.0) || dp_dl == 0.0 || !dp_dl.is_finite() {
        return None;
    }
    Some(libm::sqrt(p * (1.0 - p)) / libm::fabs(dp_dl))
}

/// Shot-noise baseline `(1/sqrt(n_bar)) |T| / |d|T|^2/dL|` for a coherent
/// input and mean-intensity readout.
pub fn sensitivity_coherent_mean(c: CoherentInput, m: MirrorSpec, p: Phase) -> Option<f64> {
    if c.n_bar() <= 0.0 {
        return None;
    }
    let d = optics::d_t2_dl(m, p);
    if d == 0.0 {
        return None;
    }
    let t2 = optics::transmittance(m, p);
    Some(libm::sqrt(t2 / c.n_bar()) / libm::fabs(d))
}

/// Photon-number-resolved sensitivity for a coherent input; the projector
/// probability is the thinned Poisson law, differentiated by chain rule.
pub fn sensitivity_coherent_k(c: CoherentInput, m: MirrorSpec, ph: Phase, k: u32) -> Option<f64> {
    if c.n_bar() <= 0.0 {
        return None;
    }
    let mu = c.n_bar() * optics::transmittance(m, ph);
    if mu <= 0.0 {
        return None;
    }
    let p = poisson_pmf(mu, k);
    let dp = p * (k as f64 / mu - 1.0) * c.n_bar() * optics::d_t2_dl(m, ph);
    sensitivity_binary(p, dp)
}

/// Photon-number-resolved sensitivity for a Fock input.
///
/// For the `k = n` projector the probability is `|T|^{2n}`; both `1 - p` and
/// the derivative then vanish together toward the fringe maximum, so that
/// branch is evaluated through `log1p`/`expm1` to stay accurate where the
/// naive form would cancel.
pub fn sensitivity_fock_k(f: FockInput, m: MirrorSpec, ph: Phase, k: u32) -> Result<Option<f64>> {
    let n = f.n();
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    if n == 0 {
        // vacuum: p_0 = 1 everywhere, no fringe to measure
        return Ok(None);
    }
    let t2 = optics::transmittance(m, ph);
    let omt = optics::one_minus_transmittance(m, ph);
    if k == n {
        // ln |T|^2 = -log1p(q sin^2(u/2)), free of cancellation at the peak
        let ln_t2 = -libm::log1p(omt / t2);
        let p = libm::exp(n as f64 * ln_t2);
        let one_minus_p = -libm::expm1(n as f64 * ln_t2);
        let d_t2 = optics::d_t2_dl(m, ph);
        // dp/dL = n |T|^{2(n-1)} d|T|^2/dL
        let dp = n as f64 * libm::exp((n as f64 - 1.0) * ln_t2) * d_t2;
        if p <= 0.0 || one_minus_p <= 0.0 || dp == 0.0 {
            return Ok(None);
        }
        return Ok(Some(libm::sqrt(p * one_minus_p) / libm::fabs(dp)));
    }
    let p = photon::p_k_fock(f, m, ph, k)?;
    if p <= 0.0 || p >= 1.0 || omt == 0.0 {
        return Ok(None);
    }
    let dp = p * (k as f64 / t2 - (n - k) as f64 / omt) * optics::d_t2_dl(m, ph);
    Ok(sensitivity_binary(p, dp))
}

/// Evaluate a sensitivity kind at one detuning.
pub fn sensitivity_at(kind: SensitivityKind, m: MirrorSpec, x: f64) -> Result<Option<f64>> {
    let ph = Phase::new(x)?;
    match kind {
        SensitivityKind::CoherentMean(c) => Ok(sensitivity_coherent_mean(c, m, ph)),
        SensitivityKind::CoherentK(c, k) => Ok(sensitivity_coherent_k(c, m, ph, k)),
        SensitivityKind::FockK(f, k) => sensitivity_fock_k(f, m, ph, k),
    }
}

/// Sample a sensitivity curve over a grid.
pub fn sensitivity_scan(
    kind: SensitivityKind,
    m: MirrorSpec,
    grid: &PhaseGrid,
) -> Result<SensitivityCurve> {
    kind.validate()?;
    let mut samples = Vec::with_capacity(grid.len());
    for x in grid.values() {
        samples.push((x, sensitivity_at(kind, m, x)?));
    }
    Ok(SensitivityCurve { kind, mirror: m, samples })
}

const MIN_SCAN_POINTS: usize = 10_000;
const GOLDEN_TOL: f64 = 1e-10;

/// Global minimum of the sensitivity over one fringe period.
///
/// Dense scan (10^4 points) followed by golden-section refinement of the
/// best bracket down to 1e-10 in `L/lambda`. Undefined samples are treated
/// as infinite, so the returned detuning is never a stationary point of the
/// fringe; for the `k = n` Fock projector the sensitivity decreases all the
/// way to the fringe maximum and the search converges to its limiting value
/// there.
pub fn min_sensitivity(kind: SensitivityKind, m: MirrorSpec) -> Result<(f64, f64)> {
    kind.validate()?;
    let eval = |x: f64| -> f64 {
        match sensitivity_at(kind, m, x) {
            Ok(Some(v)) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    };
    let x0 = m.peak_center() - 0.25;
    let step = 0.5 / MIN_SCAN_POINTS as f64;
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..=MIN_SCAN_POINTS {
        let x = x0 + i as f64 * step;
        let v = eval(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    // refine inside the bracket around the scanned minimum
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let inv_phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
        let (x, v) = if fc < fd { (c, fc) } else { (d, fd) };
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Windowed peak summary: weighted center, spread, and total counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakStats {
    /// Weighted mean position (L/lambda).
    pub center: f64,
    /// Weighted standard deviation (L/lambda).
    pub sdm: f64,
    /// Total weight (counts) inside the window.
    pub total: f64,
    pub window: (f64, f64),
}

/// Discrete windowed statistics of a sampled peak.
///
/// `samples` are `(l_over_lambda, weight)` pairs: curve values for
/// theoretical fringes, counts for measured ones. The window should contain
/// a single fringe peak.
pub fn peak_stats(samples: &[(f64, f64)], window: (f64, f64)) -> Result<PeakStats> {
    let (lo, hi) = window;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidWindow);
    }
    let mut total = 0.0;
    let mut seen = 0usize;
    for &(x, w) in samples {
        if x < lo || x > hi {
            continue;
        }
        if w < 0.0 || !w.is_finite() {
            return Err(Error::InvalidCurveValue(w));
        }
        seen += 1;
        total += w;
    }
    if seen == 0 {
        return Err(Error::EmptyWindow);
    }
    if total <= 0.0 {
        return Err(Error::ZeroWindowCounts);
    }
    if seen < 2 {
        return Err(Error::ZeroSpread);
    }
    let mut center = 0.0;
    for &(x, w) in samples {
        if (lo..=hi).contains(&x) {
            center += w * x;
        }
    }
    center /= total;
    let mut var = 0.0;
    for &(x, w) in samples {
        if (lo..=hi).contains(&x) {
            var += w * (x - center) * (x - center);
        }
    }
    var /= total;
    if var <= 0.0 {
        return Err(Error::ZeroSpread);
    }
    Ok(PeakStats { center, sdm: libm::sqrt(var), total, window })
}

/// Free-spectral-range estimate from two adjacent peak summaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsrEstimate {
    /// Peak separation (L/lambda).
    pub delta_l: f64,
    /// `sqrt(sigma_1^2/n_1 + sigma_2^2/n_2)` (L/lambda).
    pub sigma_delta_l: f64,
}

/// Uncertainty of the FSR from the spreads and counts of two peaks.
pub fn fsr_uncertainty(s1: &PeakStats, s2: &PeakStats) -> Result<FsrEstimate> {
    if s1.total <= 0.0 || s2.total <= 0.0 {
        return Err(Error::ZeroPeakCounts);
    }
    let delta_l = libm::fabs(s2.center - s1.center);
    if delta_l == 0.0 {
        return Err(Error::MissingSecondPeak);
    }
    let sigma = libm::sqrt(s1.sdm * s1.sdm / s1.total + s2.sdm * s2.sdm / s2.total);
    Ok(FsrEstimate { delta_l, sigma_delta_l: sigma })
}

/// Counts bookkeeping for resolution gains: shrinking the peak spread by a
/// factor `m` buys the same center uncertainty with `m^2` fewer counts.
pub fn counts_reduction_factor(m: f64) -> f64 {
    m * m
}

/// Full width at half maximum of the tallest peak, by linear interpolation
/// at the half-maximum crossings.
pub fn fwhm(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::NoHalfMaximum);
    }
    let (imax, &(_, vmax)) = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("nonempty");
    let half = vmax / 2.0;
    let cross = |i_out: usize, i_in: usize| -> f64 {
        let (x0, v0) = samples[i_out];
        let (x1, v1) = samples[i_in];
        x0 + (half - v0) / (v1 - v0) * (x1 - x0)
    };
    let mut left = None;
    for i in (0..imax).rev() {
        if samples[i].1 < half {
            left = Some(cross(i, i + 1));
            break;
        }
    }
    let mut right = None;
    for i in (imax + 1)..samples.len() {
        if samples[i].1 < half {
            right = Some(cross(i, i - 1));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::NoHalfMaximum),
    }
}

/// Finesse `FSR / FWHM` measured from a sampled curve spanning at least two
/// transmission maxima.
///
/// Peaks are the contiguous runs above half of the global maximum; their
/// positions are refined parabolically, the FSR is the mean spacing of
/// consecutive peaks, and the FWHM is measured on the tallest peak.
pub fn finesse(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 5 {
        return Err(Error::MissingSecondPeak);
    }
    let vmax = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let half = vmax / 2.0;
    // contiguous runs above half maximum, ignoring runs cut by the span edges
    let mut peaks: Vec<f64> = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..samples.len() {
        let above = samples[i].1 >= half;
        if above && run_start.is_none() {
            run_start = Some(i);
        }
        let run_ends = run_start.is_some() && (!above || i + 1 == samples.len());
        if run_ends {
            let s = run_start.take().expect("run start");
            let e = if above { i } else { i - 1 };
            if s == 0 || e + 1 == samples.len() {
                continue; // clipped by the span
            }
            let (mut ipk, mut vpk) = (s, samples[s].1);
            for (j, &(_, v)) in samples.iter().enumerate().take(e + 1).skip(s) {
                if v > vpk {
                    ipk = j;
                    vpk = v;
                }
            }
            peaks.push(refine_peak(samples, ipk));
        }
    }
    if peaks.len() < 2 {
        return Err(Error::MissingSecondPeak);
    }
    let mut fsr = 0.0;
    for w in peaks.windows(2) {
        fsr += w[1] - w[0];
    }
    fsr /= (peaks.len() - 1) as f64;
    let width = fwhm(samples)?;
    Ok(fsr / width)
}

fn refine_peak(samples: &[(f64, f64)], i: usize) -> f64 {
    if i == 0 || i + 1 == samples.len() {
        return samples[i].0;
    }
    let (xl, yl) = samples[i - 1];
    let (xc, yc) = samples[i];
    let (xr, yr) = samples[i + 1];
    let denom = yl - 2.0 * yc + yr;
    if denom >= 0.0 {
        return xc;
    }
    // uniform-spacing parabolic vertex
    let h = 0.5 * (xr - xl);
    xc - 0.5 * h * (yr - yl) / denom
}

/// Classical finesse approximation `pi sqrt(R) / (1 - R)`, accurate for
/// power reflectivity above one half.
pub fn finesse_classical_approx(m: MirrorSpec) -> f64 {
    let r2 = m.r2();
    PI * libm::sqrt(r2) / (1.0 - r2)
}

/// One row of the photon-number-resolved resolution comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionRow {
    pub k: u32,
    /// Windowed peak spread of the `p_k` fringe, in nm.
    pub sigma_nm: f64,
    /// `sigma_classical / sigma_k`.
    pub ratio: f64,
}

/// Windowed-spread comparison of the photon-number-resolved fringes against
/// the classical signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionTable {
    pub sigma_classical_nm: f64,
    pub rows: Vec<ResolutionRow>,
    /// Analysis window in `L/lambda`.
    pub window: (f64, f64),
    /// Classical fringe FWHM in `L/lambda`.
    pub fwhm_l_over_lambda: f64,
    /// nm per unit of `L/lambda` implied by the FWHM anchor.
    pub nm_per_unit: f64,
}

/// Build the resolution table for a coherent input.
///
/// Convention: curves are analyzed over a window of `window_fwhm_mult`
/// classical FWHMs on each side of the fringe maximum, and spreads are
/// reported in nm by scaling the detuning axis so that the classical FWHM
/// equals `fwhm_nm` (the scan-axis calibration of the instrument). The
/// spread of each `p_k` curve (k = 1..=k_max) is compared to the classical
/// signal's.
pub fn resolution_table(
    c: CoherentInput,
    m: MirrorSpec,
    k_max: u32,
    fwhm_nm: f64,
    window_fwhm_mult: f64,
    grid_points: usize,
) -> Result<ResolutionTable> {
    if !(fwhm_nm > 0.0) || !fwhm_nm.is_finite() {
        return Err(Error::InvalidOption("fwhm_nm must be positive"));
    }
    if !(window_fwhm_mult > 0.0) || !window_fwhm_mult.is_finite() {
        return Err(Error::InvalidOption("window_fwhm_mult must be positive"));
    }
    if k_max == 0 {
        return Err(Error::InvalidOption("k_max must be at least 1"));
    }
    if grid_points < 101 {
        return Err(Error::InvalidOption("grid_points too small for stable spreads"));
    }
    let fwhm_x = m
        .fwhm_classical()
        .ok_or(Error::InvalidOption("reflectivity too low for a half-maximum width"))?;
    let xc = m.peak_center();
    let window = (xc - window_fwhm_mult * fwhm_x, xc + window_fwhm_mult * fwhm_x);
    let grid = PhaseGrid::new(window.0, window.1, grid_points)?;
    let nm_per_unit = fwhm_nm / fwhm_x;

    let xs: Vec<f64> = grid.values().collect();
    let mut classical = Vec::with_capacity(xs.len());
    for &x in &xs {
        classical.push((x, photon::classical_mean_coherent(c, m, Phase::new(x)?)));
    }
    let sigma_classical_nm = peak_stats(&classical, window)?.sdm * nm_per_unit;

    let mut rows = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let mut curve = Vec::with_capacity(xs.len());
        for &x in &xs {
            curve.push((x, photon::p_k_coherent(c, m, Phase::new(x)?, k)));
        }
        let sigma_nm = peak_stats(&curve, window)?.sdm * nm_per_unit;
        rows.push(ResolutionRow { k, sigma_nm, ratio: sigma_classical_nm / sigma_nm });
    }
    Ok(ResolutionTable {
        sigma_classical_nm,
        rows,
        window,
        fwhm_l_over_lambda: fwhm_x,
        nm_per_unit,
    })
}
