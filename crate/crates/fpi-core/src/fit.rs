//! Parameter recovery from photon-number-resolved fringe data.
//!
//! [`fit_pnr_curves`] jointly fits the thinned-Poisson fringe model
//! `scale * p_k(n_bar |T(r2, x + offset)|^2)` to a family of per-`k` curves
//! by derivative-free simplex descent with multiple starts; [`fit_classical`]
//! fits the mean signal `n_bar |T|^2` alone. Standard errors come from the
//! local quadratic approximation of the objective at the optimum.
//!
//! [`dip_diagnostic`] bounds the mean photon number without any fitting: a
//! `p_k` fringe carries a dip at the center of the transmission maximum
//! exactly when `k` is below the mean photon number, so the largest `k`
//! showing a dip and the smallest one not showing it bracket `n_bar`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::optics::{self, MirrorSpec, Phase};
use crate::photon::{CurveKind, FringeCurve};
use crate::special::ln_factorial;
use crate::{Error, Result};

/// Residual weighting of the least-squares objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    #[default]
    Uniform,
    /// Inverse binomial variance `M / (p(1-p) + 1/M)` for frequencies
    /// estimated from `M` pulses per point.
    InverseVariance { pulses_per_point: u64 },
}

/// Whether the amplitude factor absorbing collection efficiency floats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMode {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub weights: WeightMode,
    pub scale: ScaleMode,
    /// Simplex iteration bound per start.
    pub max_iters: usize,
    /// Multi-start count: starts are log-spaced in `n_bar` around the
    /// initial guess and linearly spread in `r2`.
    pub n_starts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weights: WeightMode::Uniform,
            scale: ScaleMode::Fixed(1.0),
            max_iters: 10_000,
            n_starts: 5,
        }
    }
}

/// Per-parameter standard errors; `None` when the quadratic approximation
/// is singular or the parameter was held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StdErrors {
    pub n_bar: Option<f64>,
    pub r2: Option<f64>,
    pub phase_offset: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub n_bar: f64,
    pub r2: f64,
    /// Detuning offset added to the data grid (L/lambda).
    pub phase_offset: f64,
    pub scale: f64,
    /// Weighted sum of squared residuals at the optimum.
    pub sse: f64,
    pub std_errors: StdErrors,
    pub iterations: usize,
    pub converged: bool,
}

/// One curve prepared for fitting: detected k, values, weights.
struct PreparedData {
    xs: Vec<f64>,
    per_k: Vec<(u32, Vec<f64>, Vec<f64>)>,
    n_residuals: usize,
}

fn prepare(curves: &[FringeCurve], weights: WeightMode) -> Result<PreparedData> {
    let first = curves.first().ok_or(Error::EmptyRecords)?;
    let xs: Vec<f64> = first.xs().collect();
    let mut per_k = Vec::with_capacity(curves.len());
    let mut spread: f64 = 0.0;
    for c in curves {
        if !c.same_grid(first) {
            return Err(Error::MismatchedGrids);
        }
        let k = match c.kind {
            CurveKind::CoherentK { k, .. } => k,
            _ => return Err(Error::InvalidOption("joint fit expects coherent p_k curves")),
        };
        let vals: Vec<f64> = c.values().collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
        let w: Vec<f64> = match weights {
            WeightMode::Uniform => vec![1.0; vals.len()],
            WeightMode::InverseVariance { pulses_per_point } => {
                let m = pulses_per_point as f64;
                vals.iter()
                    .map(|&p| m / (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) + 1.0 / m))
                    .collect()
            }
        };
        per_k.push((k, vals, w));
    }
    if spread < 1e-12 {
        return Err(Error::DegenerateData);
    }
    let n_residuals = xs.len() * per_k.len();
    Ok(PreparedData { xs, per_k, n_residuals })
}

/// Weighted SSE of the joint photon-number-resolved model.
fn sse_pnr(data: &PreparedData, n_bar: f64, r2: f64, offset: f64, scale: f64) -> f64 {
    if !(n_bar > 0.0) || !(0.0..1.0).contains(&r2) || !offset.is_finite() || !(scale > 0.0) {
        return f64::INFINITY;
    }
    let m = match MirrorSpec::from_power(r2) {
        Ok(m) => m,
        Err(_) => return f64::INFINITY,
    };
    let ln_fact: Vec<(u32, f64)> =
        data.per_k.iter().map(|(k, _, _)| (*k, ln_factorial(*k as u64))).collect();
    let mut sse = 0.0;
    for (i, &x) in data.xs.iter().enumerate() {
        let ph = match Phase::new(x + offset) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        let mu = n_bar * optics::transmittance(m, ph);
        let ln_mu = libm::log(mu);
        for ((_, vals, w), &(k, lf)) in data.per_k.iter().zip(&ln_fact) {
            let model = scale * libm::exp(-mu + k as f64 * ln_mu - lf);
            let r = vals[i] - model;
            sse += w[i] * r * r;
        }
    }
    sse
}

/// Weighted SSE of the classical-mean model `n_bar |T|^2`.
fn sse_classical(xs: &[f64], vals: &[f64], w: &[f64], n_bar: f64, r2: f64, offset: f64) -> f64 {
    if !(n_bar > 0.0) || !(0.0..1.0).contains(&r2) || !offset.is_finite() {
        return f64::INFINITY;
    }
    let m = match MirrorSpec::from_power(r2) {
        Ok(m) => m,
        Err(_) => return f64::INFINITY,
    };
    let mut sse = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let ph = match Phase::new(x + offset) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        let r = vals[i] - n_bar * optics::transmittance(m, ph);
        sse += w[i] * r * r;
    }
    sse
}

fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

struct NmOutcome {
    x: Vec<f64>,
    fx: f64,
    iterations: usize,
    converged: bool,
}

/// Standard Nelder-Mead simplex descent (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2).
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: &[f64],
    max_iters: usize,
) -> NmOutcome {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let ftol = 1e-14;
    let xtol = 1e-12;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let fspread = (worst - best).abs();
        let xspread = (0..n)
            .map(|i| {
                let lo = simplex.iter().map(|s| s.0[i]).fold(f64::INFINITY, f64::min);
                let hi = simplex.iter().map(|s| s.0[i]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max);
        if fspread <= ftol * (1.0 + best.abs()) || xspread <= xtol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|s| s.0[i]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> =
            (0..n).map(|i| centroid[i] + (centroid[i] - simplex[n].0[i])).collect();
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> =
                (0..n).map(|i| centroid[i] + 2.0 * (centroid[i] - simplex[n].0[i])).collect();
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> =
                (0..n).map(|i| centroid[i] + 0.5 * (simplex[n].0[i] - centroid[i])).collect();
            let fc = f(&contract);
            if fc < simplex[n].1 {
                simplex[n] = (contract, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        s.0[i] = best_x[i] + 0.5 * (s.0[i] - best_x[i]);
                    }
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NmOutcome { x: simplex[0].0.clone(), fx: simplex[0].1, iterations, converged }
}

/// Invert a small symmetric matrix by Gauss-Jordan with partial pivoting.
fn invert_small(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let (pivot, pval) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if pval < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let d = m[col][col];
        for j in 0..n {
            m[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                for j in 0..n {
                    m[r][j] -= factor * m[col][j];
                    inv[r][j] -= factor * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}

/// Standard errors from the curvature of `sse(params)` at the optimum:
/// `cov = 2 s^2 H^-1` with `s^2 = sse / (n - p)`.
fn std_errors_from_hessian<F: Fn(&[f64]) -> f64>(
    sse_fn: F,
    params: &[f64],
    sse0: f64,
    n_residuals: usize,
) -> Vec<Option<f64>> {
    let p = params.len();
    if n_residuals <= p {
        return vec![None; p];
    }
    let h: Vec<f64> = params.iter().map(|&v| 1e-4 * (v.abs() + 1e-3)).collect();
    let mut hess = vec![vec![0.0; p]; p];
    let eval = |delta: &[f64]| {
        let x: Vec<f64> = params.iter().zip(delta).map(|(a, d)| a + d).collect();
        sse_fn(&x)
    };
    for i in 0..p {
        let mut d = vec![0.0; p];
        d[i] = h[i];
        let fp = eval(&d);
        d[i] = -h[i];
        let fm = eval(&d);
        hess[i][i] = (fp - 2.0 * sse0 + fm) / (h[i] * h[i]);
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let mut d = vec![0.0; p];
            d[i] = h[i];
            d[j] = h[j];
            let fpp = eval(&d);
            d[j] = -h[j];
            let fpm = eval(&d);
            d[i] = -h[i];
            d[j] = h[j];
            let fmp = eval(&d);
            d[j] = -h[j];
            let fmm = eval(&d);
            hess[i][j] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[j][i] = hess[i][j];
        }
    }
    let s2 = sse0 / (n_residuals - p) as f64;
    match invert_small(&hess) {
        Some(inv) => (0..p)
            .map(|i| {
                let v = 2.0 * s2 * inv[i][i];
                if v.is_finite() && v > 0.0 {
                    Some(libm::sqrt(v))
                } else {
                    None
                }
            })
            .collect(),
        None => vec![None; p],
    }
}

fn run_multistart<F: Fn(&[f64]) -> f64 + Copy>(
    f: F,
    init_nbar: f64,
    init_r2: f64,
    free_scale: bool,
    opts: &FitOptions,
) -> NmOutcome {
    let starts = opts.n_starts.max(1);
    let mut best: Option<NmOutcome> = None;
    for s in 0..starts {
        // log-spaced in n_bar over [init/4, 4 init], linear in r2
        let t = if starts == 1 { 0.5 } else { s as f64 / (starts - 1) as f64 };
        let nb = init_nbar * libm::exp((t - 0.5) * libm::log(16.0));
        let r2 = (init_r2 + (t - 0.5) * 0.16).clamp(0.02, 0.98);
        let mut x0 = vec![libm::log(nb), logit(r2), 0.0];
        let mut step = vec![0.3, 0.3, 0.01];
        if free_scale {
            x0.push(0.0);
            step.push(0.2);
        }
        let out = nelder_mead(f, &x0, &step, opts.max_iters);
        best = match best {
            Some(b) if b.fx <= out.fx => Some(b),
            _ => Some(out),
        };
    }
    best.expect("at least one start")
}

/// Joint least-squares fit of `(n_bar, r2, offset[, scale])` across a family
/// of photon-number-resolved curves.
///
/// Needs at least two distinct `k` curves on a common grid. On iteration-
/// bound exhaustion the best candidate is attached to the error.
pub fn fit_pnr_curves(
    curves: &[FringeCurve],
    init: (f64, f64),
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut ks: Vec<u32> = Vec::new();
    for c in curves {
        if let CurveKind::CoherentK { k, .. } = c.kind {
            if !ks.contains(&k) {
                ks.push(k);
            }
        }
    }
    if ks.len() < 2 {
        return Err(Error::InvalidOption("joint fit needs at least two distinct k curves"));
    }
    let data = prepare(curves, opts.weights)?;
    let (fixed_scale, free_scale) = match opts.scale {
        ScaleMode::Fixed(s) if s > 0.0 && s.is_finite() => (s, false),
        ScaleMode::Fixed(s) => {
            let _ = s;
            return Err(Error::InvalidOption("fixed scale must be positive"));
        }
        ScaleMode::Free => (1.0, true),
    };
    let objective = |theta: &[f64]| {
        let scale = if free_scale { libm::exp(theta[3]) } else { fixed_scale };
        sse_pnr(&data, libm::exp(theta[0]), sigmoid(theta[1]), theta[2], scale)
    };
    let out = run_multistart(&objective, init.0, init.1, free_scale, opts);

    let n_bar = libm::exp(out.x[0]);
    let r2 = sigmoid(out.x[1]);
    let offset = out.x[2];
    let scale = if free_scale { libm::exp(out.x[3]) } else { fixed_scale };

    let mut params = vec![n_bar, r2, offset];
    if free_scale {
        params.push(scale);
    }
    let sse_orig = |p: &[f64]| {
        let sc = if free_scale { p[3] } else { fixed_scale };
        sse_pnr(&data, p[0], p[1], p[2], sc)
    };
    let ses = std_errors_from_hessian(sse_orig, &params, out.fx, data.n_residuals);
    let std_errors = StdErrors {
        n_bar: ses[0],
        r2: ses[1],
        phase_offset: ses[2],
        scale: if free_scale { ses[3] } else { None },
    };
    let result = FitResult {
        n_bar,
        r2,
        phase_offset: offset,
        scale,
        sse: out.fx,
        std_errors,
        iterations: out.iterations,
        converged: out.converged,
    };
    if !out.converged {
        return Err(Error::FitDidNotConverge(Box::new(result)));
    }
    Ok(result)
}

/// Independent per-`k` fits, sharing nothing between photon numbers.
pub fn fit_pnr_curves_per_k(
    curves: &[FringeCurve],
    init: (f64, f64),
    opts: &FitOptions,
) -> Result<Vec<(u32, FitResult)>> {
    let mut out = Vec::with_capacity(curves.len());
    for c in curves {
        let k = match c.kind {
            CurveKind::CoherentK { k, .. } => k,
            _ => return Err(Error::InvalidOption("per-k fit expects coherent p_k curves")),
        };
        let data = prepare(core::slice::from_ref(c), opts.weights)?;
        let (fixed_scale, free_scale) = match opts.scale {
            ScaleMode::Fixed(s) => (s, false),
            ScaleMode::Free => (1.0, true),
        };
        let objective = |theta: &[f64]| {
            let scale = if free_scale { libm::exp(theta[3]) } else { fixed_scale };
            sse_pnr(&data, libm::exp(theta[0]), sigmoid(theta[1]), theta[2], scale)
        };
        let nm = run_multistart(&objective, init.0, init.1, free_scale, opts);
        let result = FitResult {
            n_bar: libm::exp(nm.x[0]),
            r2: sigmoid(nm.x[1]),
            phase_offset: nm.x[2],
            scale: if free_scale { libm::exp(nm.x[3]) } else { fixed_scale },
            sse: nm.fx,
            std_errors: StdErrors::default(),
            iterations: nm.iterations,
            converged: nm.converged,
        };
        if !nm.converged {
            return Err(Error::FitDidNotConverge(Box::new(result)));
        }
        out.push((k, result));
    }
    Ok(out)
}

/// Fit the classical mean signal `n_bar |T(r2, x + offset)|^2`.
///
/// The amplitude is absorbed by `n_bar` (scale stays fixed at one), so on a
/// truncated reconstruction the recovered mean comes out biased low by the
/// missing Poisson tail.
pub fn fit_classical(
    curve: &FringeCurve,
    init: (f64, f64),
    opts: &FitOptions,
) -> Result<FitResult> {
    if !matches!(curve.kind, CurveKind::ClassicalMean { .. }) {
        return Err(Error::InvalidOption("classical fit expects a mean-signal curve"));
    }
    let xs: Vec<f64> = curve.xs().collect();
    let vals: Vec<f64> = curve.values().collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return Err(Error::DegenerateData);
    }
    let w: Vec<f64> = match opts.weights {
        WeightMode::Uniform => vec![1.0; vals.len()],
        WeightMode::InverseVariance { pulses_per_point } => {
            // variance of a sum of k-weighted frequencies is of order mean/M
            let m = pulses_per_point as f64;
            vals.iter().map(|&v| m / (v.max(0.0) + 1.0 / m)).collect()
        }
    };
    let objective =
        |theta: &[f64]| sse_classical(&xs, &vals, &w, libm::exp(theta[0]), sigmoid(theta[1]), theta[2]);
    let out = run_multistart(&objective, init.0, init.1, false, opts);
    let params = vec![libm::exp(out.x[0]), sigmoid(out.x[1]), out.x[2]];
    let sse_orig = |p: &[f64]| sse_classical(&xs, &vals, &w, p[0], p[1], p[2]);
    let ses = std_errors_from_hessian(sse_orig, &params, out.fx, xs.len());
    let result = FitResult {
        n_bar: params[0],
        r2: params[1],
        phase_offset: params[2],
        scale: 1.0,
        sse: out.fx,
        std_errors: StdErrors {
            n_bar: ses[0],
            r2: ses[1],
            phase_offset: ses[2],
            scale: None,
        },
        iterations: out.iterations,
        converged: out.converged,
    };
    if !out.converged {
        return Err(Error::FitDidNotConverge(Box::new(result)));
    }
    Ok(result)
}

/// Outcome of the dip diagnostic: per-`k` dip flags and the implied bracket
/// `lower < n_bar <= upper`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DipDiagnosis {
    pub per_k: Vec<(u32, bool)>,
    /// Largest `k` with a dip; `None` when no curve dips.
    pub lower: Option<u32>,
    /// Smallest `k` without a dip; `None` when every curve dips.
    pub upper: Option<u32>,
}

const DIP_SMOOTH_WIDTH: usize = 5;
/// Dip search region around the fringe maximum, as a fraction of the FSR.
const DIP_WINDOW_FSR_FRACTION: f64 = 0.10;

fn smooth5(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let half = DIP_SMOOTH_WIDTH / 2;
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for d in 0..DIP_SMOOTH_WIDTH {
                // reflect indices at the edges
                let j = i as isize + d as isize - half as isize;
                let j = if j < 0 { -j } else { j } as usize;
                let j = if j >= n { 2 * (n - 1) - j } else { j };
                s += values[j];
            }
            s / DIP_SMOOTH_WIDTH as f64
        })
        .collect()
}

/// Bound the mean photon number from the dip characteristics of per-`k`
/// fringe curves covering one peak.
///
/// The fringe center is the maximum of the smoothed classical
/// reconstruction. A curve counts as dipped when its smoothed value at the
/// center sits below the flank maxima on both sides (within 10% of an FSR)
/// by more than a noise threshold: three times the standard error of that
/// difference for counted data (`pulses_per_point`), or any strict dip for
/// model curves (`None`).
pub fn dip_diagnostic(
    curves: &[FringeCurve],
    pulses_per_point: Option<u64>,
) -> Result<DipDiagnosis> {
    let first = curves.first().ok_or(Error::EmptyRecords)?;
    let n = first.samples.len();
    if n < 2 * DIP_SMOOTH_WIDTH + 1 {
        return Err(Error::InvalidOption("grid too short for the dip diagnostic"));
    }
    let mut ks: Vec<(u32, &FringeCurve)> = Vec::with_capacity(curves.len());
    for c in curves {
        if !c.same_grid(first) {
            return Err(Error::MismatchedGrids);
        }
        let k = c
            .kind
            .detected_k()
            .ok_or(Error::InvalidOption("dip diagnostic expects p_k curves"))?;
        ks.push((k, c));
    }
    ks.sort_by_key(|(k, _)| *k);
    let xs: Vec<f64> = first.xs().collect();

    // fringe center from the smoothed classical reconstruction
    let mut recon = vec![0.0; n];
    for (k, c) in &ks {
        for (acc, &(_, v)) in recon.iter_mut().zip(&c.samples) {
            *acc += *k as f64 * v;
        }
    }
    let recon_s = smooth5(&recon);
    let ic = recon_s
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    let center_x = xs[ic];
    let half_window = DIP_WINDOW_FSR_FRACTION * 0.5;

    let lo_i = xs.partition_point(|&x| x < center_x - half_window);
    let hi_i = xs.partition_point(|&x| x <= center_x + half_window);
    if ic <= lo_i + 1 || ic + 1 >= hi_i {
        return Err(Error::InvalidOption("fringe maximum too close to the window edge"));
    }

    let mut per_k = Vec::with_capacity(ks.len());
    for (k, c) in &ks {
        let raw: Vec<f64> = c.values().collect();
        let ys = smooth5(&raw);
        let (mut il, mut ir) = (lo_i, ic + 1);
        for i in lo_i..ic {
            if ys[i] > ys[il] {
                il = i;
            }
        }
        for i in (ic + 1)..hi_i {
            if ys[i] > ys[ir] {
                ir = i;
            }
        }
        let depth = ys[il].min(ys[ir]) - ys[ic];
        let threshold = match pulses_per_point {
            Some(m) => {
                let se = |i: usize| {
                    let p = raw[i].clamp(0.0, 1.0);
                    libm::sqrt(p * (1.0 - p) / m as f64 / DIP_SMOOTH_WIDTH as f64)
                };
                let se_flank = se(il).max(se(ir));
                3.0 * libm::sqrt(se(ic) * se(ic) + se_flank * se_flank)
            }
            None => 1e-12,
        };
        let dip = depth > threshold && ys[ic] < ys[il] && ys[ic] < ys[ir];
        per_k.push((*k, dip));
    }
    let lower = per_k.iter().filter(|(_, d)| *d).map(|(k, _)| *k).max();
    let upper = per_k.iter().filter(|(_, d)| !*d).map(|(k, _)| *k).min();
    Ok(DipDiagnosis { per_k, lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{scan_experiment, DetectorModel, ScanOptions};
    use crate::optics::PhaseGrid;
    use crate::photon::{fringe_scan, CoherentInput, InputSpec};
    use approx::assert_relative_eq;

    fn mirror(r2: f64) -> MirrorSpec {
        MirrorSpec::from_power(r2).unwrap()
    }

    fn model_curves(n_bar: f64, r2: f64, ks: &[u32], points: usize) -> Vec<FringeCurve> {
        let m = mirror(r2);
        let xc = m.peak_center();
        let grid = PhaseGrid::new(xc - 0.05, xc + 0.05, points).unwrap();
        fringe_scan(
            &InputSpec::Coherent(CoherentInput::new(n_bar).unwrap()),
            m,
            &grid,
            ks,
            false,
        )
        .unwrap()
    }

    #[test]
    fn nelder_mead_solves_rosenbrock() {
        let rosen = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
        };
        let out = nelder_mead(rosen, &[-1.2, 1.0], &[0.5, 0.5], 10_000);
        assert!(out.converged);
        assert_relative_eq!(out.x[0], 1.0, max_relative = 1e-5);
        assert_relative_eq!(out.x[1], 1.0, max_relative = 1e-5);
    }

    #[test]
    fn small_matrix_inverse() {
        let a = alloc::vec![
            alloc::vec![4.0, 1.0, 0.0],
            alloc::vec![1.0, 3.0, 1.0],
            alloc::vec![0.0, 1.0, 2.0],
        ];
        let inv = invert_small(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[i][k] * inv[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12);
            }
        }
        let singular = alloc::vec![alloc::vec![1.0, 2.0], alloc::vec![2.0, 4.0]];
        assert!(invert_small(&singular).is_none());
    }

    #[test]
    fn joint_fit_recovers_model_parameters() {
        let curves = model_curves(3.9, 0.91, &[1, 2, 3, 4, 5, 6, 7], 201);
        let fit = fit_pnr_curves(&curves, (3.0, 0.85), &FitOptions::default()).unwrap();
        assert_relative_eq!(fit.n_bar, 3.9, max_relative = 1e-6);
        assert_relative_eq!(fit.r2, 0.91, max_relative = 1e-6);
        assert!(fit.phase_offset.abs() < 1e-7);
        assert!(fit.sse < 1e-12);
    }

    #[test]
    fn joint_fit_survives_a_factor_two_initial_guess() {
        let curves = model_curves(3.9, 0.91, &[1, 2, 3, 4, 5, 6, 7], 201);
        for init in [(7.8, 0.80), (1.95, 0.95)] {
            let fit = fit_pnr_curves(&curves, init, &FitOptions::default()).unwrap();
            assert_relative_eq!(fit.n_bar, 3.9, max_relative = 1e-5);
            assert_relative_eq!(fit.r2, 0.91, max_relative = 1e-5);
        }
    }

    #[test]
    fn joint_fit_needs_two_distinct_curves() {
        let curves = model_curves(3.9, 0.91, &[2], 101);
        assert!(matches!(
            fit_pnr_curves(&curves, (3.0, 0.9), &FitOptions::default()),
            Err(Error::InvalidOption(_))
        ));
    }

    #[test]
    fn per_k_fits_agree_on_model_data() {
        let curves = model_curves(3.9, 0.91, &[2, 4], 151);
        let fits =
            fit_pnr_curves_per_k(&curves, (3.0, 0.88), &FitOptions::default()).unwrap();
        for (_, fit) in fits {
            assert_relative_eq!(fit.n_bar, 3.9, max_relative = 1e-4);
            assert_relative_eq!(fit.r2, 0.91, max_relative = 1e-4);
        }
    }

    #[test]
    fn classical_fit_self_consistency() {
        let m = mirror(0.70);
        let xc = m.peak_center();
        let grid = PhaseGrid::new(xc - 0.1, xc + 0.1, 201).unwrap();
        let curve = fringe_scan(
            &InputSpec::Coherent(CoherentInput::new(4.0).unwrap()),
            m,
            &grid,
            &[],
            true,
        )
        .unwrap()
        .remove(0);
        let fit = fit_classical(&curve, (2.0, 0.6), &FitOptions::default()).unwrap();
        assert_relative_eq!(fit.n_bar, 4.0, max_relative = 1e-8);
        assert_relative_eq!(fit.r2, 0.70, max_relative = 1e-7);
    }

    #[test]
    fn truncated_reconstruction_biases_the_classical_fit_low() {
        use crate::detector::reconstruct_classical;
        for k_max in [7u32, 8, 9] {
            let ks: Vec<u32> = (1..=k_max).collect();
            let curves = model_curves(4.0, 0.70, &ks, 201);
            let recon = reconstruct_classical(&curves).unwrap();
            let fit = fit_classical(&recon, (4.0, 0.70), &FitOptions::default()).unwrap();
            assert!(
                fit.n_bar < 4.0,
                "k_max={k_max}: truncated fit must be biased low, got {}",
                fit.n_bar
            );
        }
        // K = 7 fixture: the recovered mean sits between the peak coverage
        // (0.889 * 4) and the full mean
        let curves = model_curves(4.0, 0.70, &[1, 2, 3, 4, 5, 6, 7], 201);
        let recon = reconstruct_classical(&curves).unwrap();
        let fit = fit_classical(&recon, (4.0, 0.70), &FitOptions::default()).unwrap();
        assert!(fit.n_bar > 3.45 && fit.n_bar < 3.95, "{}", fit.n_bar);
    }

    #[test]
    fn fit_rejects_flat_data() {
        let m = mirror(0.7);
        let samples: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.01, 0.25)).collect();
        let c =
            FringeCurve::new(CurveKind::ClassicalMean { mean_photons: 1.0 }, m, samples).unwrap();
        assert_eq!(
            fit_classical(&c, (1.0, 0.5), &FitOptions::default()),
            Err(Error::DegenerateData)
        );
    }

    #[test]
    fn standard_errors_shrink_with_pulse_count() {
        let m = mirror(0.91);
        let xc = m.peak_center();
        let grid = PhaseGrid::new(xc - 0.05, xc + 0.05, 81).unwrap();
        let input = InputSpec::Coherent(CoherentInput::new(3.9).unwrap());
        let mut ses = Vec::new();
        for (pulses, seed) in [(1000u64, 5u64), (16_000, 5)] {
            let d = DetectorModel::new(1.0, 0.1, 7, seed).unwrap();
            let scan =
                scan_experiment(&input, m, &grid, pulses, &d, ScanOptions::default()).unwrap();
            let fit = fit_pnr_curves(
                &scan.curves[1..=7],
                (3.0, 0.88),
                &FitOptions::default(),
            )
            .unwrap();
            ses.push(fit.std_errors.n_bar.expect("se available"));
        }
        // 16x the pulses should cut the standard error about 4x
        let ratio = ses[1] / ses[0];
        assert!(ratio > 0.15 && ratio < 0.45, "ratio {ratio}");
    }

    #[test]
    fn dip_bounds_on_model_curves() {
        for (n_bar, lo, hi) in [
            (1.5, Some(1), Some(2)),
            (2.5, Some(2), Some(3)),
            (3.5, Some(3), Some(4)),
            (4.5, Some(4), Some(5)),
            (3.0, Some(2), Some(3)),
        ] {
            let curves = model_curves(n_bar, 0.91, &[1, 2, 3, 4, 5, 6, 7], 201);
            let diag = dip_diagnostic(&curves, None).unwrap();
            assert_eq!(diag.lower, lo, "n_bar={n_bar}: {:?}", diag.per_k);
            assert_eq!(diag.upper, hi, "n_bar={n_bar}: {:?}", diag.per_k);
            // the true mean photon number is inside (lower, upper]
            if let (Some(lo), Some(hi)) = (diag.lower, diag.upper) {
                assert!((lo as f64) < n_bar && n_bar <= hi as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn integer_boundary_has_no_dip_at_k_equals_n_bar() {
        let curves = model_curves(4.0, 0.70, &[4], 201);
        // single curve: center detection needs the family, so build it with
        // companions
        let family = model_curves(4.0, 0.70, &[1, 2, 3, 4, 5, 6, 7], 201);
        let diag = dip_diagnostic(&family, None).unwrap();
        let k4 = diag.per_k.iter().find(|(k, _)| *k == 4).unwrap();
        assert!(!k4.1, "k = n_bar must not dip");
        assert_eq!(diag.lower, Some(3));
        assert_eq!(diag.upper, Some(4));
        let _ = curves;
    }

    #[test]
    fn dip_diagnostic_on_noisy_scan() {
        let m = mirror(0.91);
        let xc = m.peak_center();
        let grid = PhaseGrid::new(xc - 0.05, xc + 0.05, 201).unwrap();
        let input = InputSpec::Coherent(CoherentInput::new(3.9).unwrap());
        let d = DetectorModel::new(1.0, 0.1, 7, 424242).unwrap();
        let scan = scan_experiment(&input, m, &grid, 10_000, &d, ScanOptions::default()).unwrap();
        let diag = dip_diagnostic(&scan.curves[1..=7], Some(10_000)).unwrap();
        assert_eq!(diag.lower, Some(3), "{:?}", diag.per_k);
        assert_eq!(diag.upper, Some(4), "{:?}", diag.per_k);
    }

    #[test]
    fn dip_diagnostic_error_paths() {
        assert!(dip_diagnostic(&[], None).is_err());
        let m = mirror(0.91);
        let short: Vec<(f64, f64)> = (0..5).map(|i| (i as f64 * 0.01, 0.1)).collect();
        let c = FringeCurve::new(CurveKind::CoherentK { n_bar: 3.9, k: 1 }, m, short).unwrap();
        assert!(dip_diagnostic(&[c], None).is_err());
    }
}
