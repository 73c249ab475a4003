//! Effective beam-splitter amplitudes of the two-mirror cavity.
//!
//! A cavity with two identical mirrors of amplitude reflectivity `|r|` acts
//! on its input mode as an effective beam splitter with complex transmission
//! `T(r, phi)` and reflection `R(r, phi)`, where `phi = 2 pi L / lambda` is
//! the one-pass phase. Both amplitudes carry the fixed mirror phase
//! `exp(-i sqrt(1 - |r|^2))`; that factor shifts the transmission maxima
//! slightly below `phi = 0 (mod pi)` as the reflectivity grows, so it is kept
//! rather than simplified away into the textbook Airy form.
//!
//! For the intensity paths the modulus squared reduces to the real form
//!
//! ```text
//! |T|^2 = 1 / (1 + q sin^2(u/2)),   q = 4 R / (1 - R)^2,   u = 2 phi - 2 sqrt(1 - R)
//! ```
//!
//! with `R = |r|^2`, which this module also exposes (together with `1 - |T|^2`
//! and `d|T|^2/d(L/lambda)`) because it stays accurate where the complex
//! quotient would lose digits to cancellation near the peaks.

use core::f64::consts::PI;

use num_complex::Complex;

use crate::{Error, Result};

/// Complex transmission or reflection amplitude.
pub type ComplexAmp = Complex<f64>;

/// Largest photon number kept finite by the log-space binomials downstream.
pub const MAX_FOCK_N: u32 = 170;

/// The single physical parameter of the cavity: both mirrors share the same
/// amplitude reflectivity `|r|` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorSpec {
    r_amp: f64,
}

impl MirrorSpec {
    /// Mirror from its amplitude reflectivity `|r|`.
    ///
    /// `|r| = 1` is a lossless trap with no transmitted output and is
    /// rejected along with anything non-finite or negative.
    pub fn new(r_amp: f64) -> Result<Self> {
        if !r_amp.is_finite() || !(0.0..1.0).contains(&r_amp) {
            return Err(Error::MirrorReflectivity(r_amp));
        }
        Ok(Self { r_amp })
    }

    /// Mirror from its power reflectivity `R = |r|^2`.
    pub fn from_power(r2: f64) -> Result<Self> {
        if !r2.is_finite() || !(0.0..1.0).contains(&r2) {
            return Err(Error::MirrorReflectivity(r2));
        }
        Ok(Self { r_amp: libm::sqrt(r2) })
    }

    pub fn r_amp(self) -> f64 {
        self.r_amp
    }

    /// Power reflectivity `|r|^2`.
    pub fn r2(self) -> f64 {
        self.r_amp * self.r_amp
    }

    /// Fixed mirror phase `theta = sqrt(1 - |r|^2)` carried by `T` and `R`.
    pub fn mirror_phase(self) -> f64 {
        libm::sqrt(1.0 - self.r2())
    }

    /// Detuning `L/lambda` of a transmission maximum: `theta / (2 pi)`.
    /// Every other maximum sits at integer multiples of 1/2 away.
    pub fn peak_center(self) -> f64 {
        self.mirror_phase() / (2.0 * PI)
    }

    /// Closed-form full width at half maximum of `|T|^2` in `L/lambda`.
    ///
    /// `None` when the fringe floor `(1-R)^2/(1+R)^2` never drops below 1/2,
    /// which happens for `R <= 3 - 2 sqrt(2)`.
    pub fn fwhm_classical(self) -> Option<f64> {
        let r2 = self.r2();
        if r2 <= 3.0 - 2.0 * core::f64::consts::SQRT_2 {
            return None;
        }
        let c = (4.0 * r2 - 1.0 - r2 * r2) / (2.0 * r2);
        Some(libm::acos(c) / (2.0 * PI))
    }
}

/// Dimensionless cavity detuning `L/lambda`; the one-pass phase is
/// `phi = 2 pi L/lambda`. Any finite value is legal, the optics are periodic
/// with period 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    l_over_lambda: f64,
}

impl Phase {
    pub fn new(l_over_lambda: f64) -> Result<Self> {
        if !l_over_lambda.is_finite() {
            return Err(Error::NonFinitePhase(l_over_lambda));
        }
        Ok(Self { l_over_lambda })
    }

    pub fn from_phi(phi: f64) -> Result<Self> {
        Self::new(phi / (2.0 * PI))
    }

    pub fn l_over_lambda(self) -> f64 {
        self.l_over_lambda
    }

    pub fn phi(self) -> f64 {
        2.0 * PI * self.l_over_lambda
    }
}

/// Uniform scan of `L/lambda`, endpoints inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    start: f64,
    stop: f64,
    points: usize,
}

impl PhaseGrid {
    /// A grid needs `points >= 1`; for more than one point the bounds must be
    /// strictly increasing. A single-point grid samples `start` only.
    pub fn new(start: f64, stop: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::EmptyGrid);
        }
        if !start.is_finite() || !stop.is_finite() {
            return Err(Error::InvalidGridBounds);
        }
        if points == 1 {
            if stop < start {
                return Err(Error::InvalidGridBounds);
            }
        } else if stop <= start {
            return Err(Error::InvalidGridBounds);
        }
        Ok(Self { start, stop, points })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn stop(&self) -> f64 {
        self.stop
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values in increasing order; the last point is exactly `stop`.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let (start, stop, n) = (self.start, self.stop, self.points);
        (0..n).map(move |i| {
            if i + 1 == n {
                if n == 1 { start } else { stop }
            } else {
                start + (stop - start) * i as f64 / (n - 1) as f64
            }
        })
    }
}

/// Complex transmission amplitude `T(r, phi)`:
///
/// ```text
/// T = (1 - |r|^2) e^{-2i theta} / (|r|^2 e^{-2i theta} e^{2i phi} - 1)
/// ```
pub fn transfer_t(m: MirrorSpec, p: Phase) -> ComplexAmp {
    let r2 = m.r2();
    let th = m.mirror_phase();
    let phi = p.phi();
    let e_m2th = Complex::new(libm::cos(2.0 * th), -libm::sin(2.0 * th));
    let e_2phi = Complex::new(libm::cos(2.0 * phi), libm::sin(2.0 * phi));
    let num = (1.0 - r2) * e_m2th;
    let den = r2 * e_m2th * e_2phi - 1.0;
    num / den
}

/// Complex reflection amplitude `R(r, phi)`:
///
/// ```text
/// R = |r| e^{-i theta} (e^{-i phi} - e^{i phi} e^{-2i theta})
///     / (|r|^2 e^{-2i theta} e^{2i phi} - 1)
/// ```
pub fn transfer_r(m: MirrorSpec, p: Phase) -> ComplexAmp {
    let r2 = m.r2();
    let th = m.mirror_phase();
    let phi = p.phi();
    let e_m2th = Complex::new(libm::cos(2.0 * th), -libm::sin(2.0 * th));
    let e_2phi = Complex::new(libm::cos(2.0 * phi), libm::sin(2.0 * phi));
    let e_mphi = Complex::new(libm::cos(phi), -libm::sin(phi));
    let e_pphi = Complex::new(libm::cos(phi), libm::sin(phi));
    let num = m.r_amp() * Complex::new(libm::cos(th), -libm::sin(th)) * (e_mphi - e_pphi * e_m2th);
    let den = r2 * e_m2th * e_2phi - 1.0;
    num / den
}

fn fringe_u(m: MirrorSpec, p: Phase) -> f64 {
    2.0 * p.phi() - 2.0 * m.mirror_phase()
}

fn airy_q(m: MirrorSpec) -> f64 {
    let r2 = m.r2();
    let t = 1.0 - r2;
    4.0 * r2 / (t * t)
}

/// Transmitted intensity `|T|^2`, evaluated in the cancellation-free real
/// form `1 / (1 + q sin^2(u/2))`.
pub fn transmittance(m: MirrorSpec, p: Phase) -> f64 {
    let s = libm::sin(0.5 * fringe_u(m, p));
    1.0 / (1.0 + airy_q(m) * s * s)
}

/// `1 - |T|^2` without subtractive cancellation near the fringe maxima.
pub fn one_minus_transmittance(m: MirrorSpec, p: Phase) -> f64 {
    let s = libm::sin(0.5 * fringe_u(m, p));
    let qs = airy_q(m) * s * s;
    qs / (1.0 + qs)
}

/// Analytic derivative `d|T|^2 / d(L/lambda)`.
///
/// Differentiating the real form gives `-2 pi q |T|^4 sin u`; it vanishes at
/// every fringe maximum and minimum and is periodic with period 1/2.
pub fn d_t2_dl(m: MirrorSpec, p: Phase) -> f64 {
    let u = fringe_u(m, p);
    let t2 = transmittance(m, p);
    -2.0 * PI * airy_q(m) * t2 * t2 * libm::sin(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn rejects_unphysical_mirrors() {
        assert!(MirrorSpec::new(1.0).is_err());
        assert!(MirrorSpec::new(-0.1).is_err());
        assert!(MirrorSpec::new(f64::NAN).is_err());
        assert!(MirrorSpec::from_power(1.0).is_err());
        assert!(MirrorSpec::new(0.0).is_ok());
    }

    #[test]
    fn zero_reflectivity_is_bare_propagation() {
        let m = MirrorSpec::new(0.0).unwrap();
        for x in grid(17) {
            let p = Phase::new(x).unwrap();
            assert_abs_diff_eq!(transfer_t(m, p).norm_sqr(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(transfer_r(m, p).norm_sqr(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(transmittance(m, p), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn real_form_matches_complex_modulus() {
        for r2 in [0.3, 0.7, 0.9, 0.99] {
            let m = MirrorSpec::from_power(r2).unwrap();
            for x in grid(101) {
                let p = Phase::new(x).unwrap();
                let via_complex = transfer_t(m, p).norm_sqr();
                assert_relative_eq!(transmittance(m, p), via_complex, max_relative = 1e-12);
                assert_relative_eq!(
                    one_minus_transmittance(m, p),
                    1.0 - via_complex,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn unitarity_and_orthogonality_on_a_grid() {
        let m = MirrorSpec::from_power(0.90).unwrap();
        for x in grid(1000) {
            let p = Phase::new(x).unwrap();
            let t = transfer_t(m, p);
            let r = transfer_r(m, p);
            assert_abs_diff_eq!(t.norm_sqr() + r.norm_sqr(), 1.0, epsilon = 1e-12);
            // T R* + R T* = 2 Re(T conj(R))
            assert_abs_diff_eq!((t * r.conj()).re, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reflectance_complements_transmittance() {
        let m = MirrorSpec::from_power(0.70).unwrap();
        for x in grid(211) {
            let p = Phase::new(x).unwrap();
            let t2 = transfer_t(m, p).norm_sqr();
            let r2 = transfer_r(m, p).norm_sqr();
            assert_abs_diff_eq!(r2, 1.0 - t2, epsilon = 1e-12);
        }
    }

    #[test]
    fn minimum_transmittance_matches_antiresonance_algebra() {
        // brute-force scan against (1-R)^2/(1+R)^2
        let m = MirrorSpec::from_power(0.70).unwrap();
        let mut min = f64::INFINITY;
        let n = 1_000_000;
        for i in 0..n {
            let x = 0.5 * i as f64 / n as f64;
            min = min.min(transmittance(m, Phase::new(x).unwrap()));
        }
        let expected = (0.3_f64 / 1.7).powi(2);
        assert_relative_eq!(expected, 0.03114186851211073, max_relative = 1e-12);
        assert_relative_eq!(min, expected, max_relative = 1e-9);
    }

    #[test]
    fn peak_reaches_unity_and_sits_left_of_airy_position() {
        for r2 in [0.5, 0.7, 0.9, 0.99] {
            let m = MirrorSpec::from_power(r2).unwrap();
            let xc = m.peak_center();
            assert_relative_eq!(
                transmittance(m, Phase::new(xc).unwrap()),
                1.0,
                epsilon = 1e-12
            );
            // the maximum moves toward zero detuning as the reflectivity grows
            assert!(xc > 0.0 && xc < 0.25);
        }
        let low = MirrorSpec::from_power(0.5).unwrap().peak_center();
        let high = MirrorSpec::from_power(0.9).unwrap().peak_center();
        assert!(high < low);
    }

    #[test]
    fn derivative_matches_central_differences() {
        let m = MirrorSpec::from_power(0.70).unwrap();
        let h = 1e-6;
        let mut checked = 0;
        for x in grid(1000) {
            let d = d_t2_dl(m, Phase::new(x).unwrap());
            // skip the neighborhoods of stationary points where the relative
            // comparison is ill-posed
            let xc = m.peak_center();
            let dist = (x - xc).rem_euclid(0.25);
            if dist.min(0.25 - dist) < 1e-4 {
                continue;
            }
            let fp = transmittance(m, Phase::new(x + h).unwrap());
            let fm = transmittance(m, Phase::new(x - h).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(d, fd, max_relative = 1e-6);
            checked += 1;
        }
        assert!(checked > 900);
    }

    #[test]
    fn derivative_vanishes_at_the_peak() {
        let m = MirrorSpec::from_power(0.70).unwrap();
        let xc = m.peak_center();
        assert_abs_diff_eq!(d_t2_dl(m, Phase::new(xc).unwrap()), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn derivative_is_periodic() {
        let m = MirrorSpec::from_power(0.70).unwrap();
        for x in grid(1000) {
            let a = d_t2_dl(m, Phase::new(x).unwrap());
            let b = d_t2_dl(m, Phase::new(x + 0.5).unwrap());
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-9);
        }
    }

    #[test]
    fn fwhm_closed_form_region() {
        assert!(MirrorSpec::from_power(0.1).unwrap().fwhm_classical().is_none());
        let w = MirrorSpec::from_power(0.91).unwrap().fwhm_classical().unwrap();
        assert_relative_eq!(w, 0.015021148765, max_relative = 1e-9);
    }

    #[test]
    fn grid_construction_and_values() {
        assert!(PhaseGrid::new(0.0, 1.0, 0).is_err());
        assert!(PhaseGrid::new(1.0, 0.0, 5).is_err());
        assert!(PhaseGrid::new(0.0, 0.0, 5).is_err());
        let single = PhaseGrid::new(0.25, 0.25, 1).unwrap();
        assert_eq!(single.values().collect::<Vec<_>>(), [0.25]);
        let g = PhaseGrid::new(0.0, 1.0, 5).unwrap();
        let xs: Vec<f64> = g.values().collect();
        assert_eq!(xs, [0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
    }

    proptest! {
        #[test]
        fn unitarity_everywhere(r2 in 0.0..0.999f64, x in -2.0..2.0f64) {
            let m = MirrorSpec::from_power(r2).unwrap();
            let p = Phase::new(x).unwrap();
            let t = transfer_t(m, p);
            let r = transfer_r(m, p);
            prop_assert!((t.norm_sqr() + r.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert!((t * r.conj()).re.abs() < 1e-12);
            prop_assert!(t.norm_sqr() > 0.0 && t.norm_sqr() <= 1.0 + 1e-15);
        }

        #[test]
        fn period_is_half_in_l_over_lambda(r2 in 0.0..0.99f64, x in -1.0..1.0f64) {
            let m = MirrorSpec::from_power(r2).unwrap();
            let a = transfer_t(m, Phase::new(x).unwrap());
            let b = transfer_t(m, Phase::new(x + 0.5).unwrap());
            prop_assert!((a - b).norm_sqr() < 1e-20);
            // the reflection amplitude flips sign over half a period
            // (phi -> phi + pi negates its numerator), so |R|^2 is the
            // periodic quantity
            let ra = transfer_r(m, Phase::new(x).unwrap());
            let rb = transfer_r(m, Phase::new(x + 0.5).unwrap());
            prop_assert!((ra + rb).norm_sqr() < 1e-20);
            prop_assert!((ra.norm_sqr() - rb.norm_sqr()).abs() < 1e-12);
        }
    }
}
