//! Crate-wide error type.

use alloc::boxed::Box;
use core::fmt;

use crate::fit::FitResult;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Mirror amplitude reflectivity outside `[0, 1)` (or not finite).
    MirrorReflectivity(f64),
    /// Cavity detuning `L/lambda` is not a finite number.
    NonFinitePhase(f64),
    /// Mean photon number must be finite and non-negative.
    InvalidMeanPhotons(f64),
    /// Fock photon number above the supported range.
    PhotonNumberTooLarge(u32),
    /// Asked for more detected photons than the Fock state contains.
    KExceedsN { k: u32, n: u32 },
    /// Phase grid must hold at least one point.
    EmptyGrid,
    /// Phase grid bounds are not increasing (or not finite).
    InvalidGridBounds,
    /// Fringe samples must be sorted by strictly increasing detuning.
    UnsortedSamples,
    /// Curve value outside the range allowed by its kind.
    InvalidCurveValue(f64),
    /// Detector gain must be positive and finite.
    InvalidGain(f64),
    /// Detector noise must be finite, non-negative, and below `gain / 2`
    /// so that neighboring photon-number peaks stay separable.
    InvalidNoise(f64),
    /// At least one pulse is required.
    NoPulses,
    /// Operation needs a non-empty record list.
    EmptyRecords,
    /// Histogram bin width must be positive and finite.
    InvalidBinWidth(f64),
    /// Valley estimation failed: photon-number peaks are not separable.
    NonSeparableHistogram,
    /// Curves passed together must share the same phase grid.
    MismatchedGrids,
    /// Window bounds are empty or reversed.
    InvalidWindow,
    /// No samples fall inside the requested window.
    EmptyWindow,
    /// Total weight in the window is zero.
    ZeroWindowCounts,
    /// Peak statistics need nonzero spread (more than one effective sample).
    ZeroSpread,
    /// Peak counts must be positive for an FSR uncertainty estimate.
    ZeroPeakCounts,
    /// Curve does not contain the two maxima needed to measure an FSR.
    MissingSecondPeak,
    /// Curve never falls to half maximum on both sides of the peak.
    NoHalfMaximum,
    /// Data too flat to constrain the fit.
    DegenerateData,
    /// Optimizer hit the iteration bound; the best candidate is attached.
    FitDidNotConverge(Box<FitResult>),
    /// Catch-all for invalid option values.
    InvalidOption(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MirrorReflectivity(r) => {
                write!(f, "mirror amplitude reflectivity {r} outside [0, 1)")
            }
            Error::NonFinitePhase(x) => write!(f, "non-finite cavity detuning {x}"),
            Error::InvalidMeanPhotons(n) => write!(f, "invalid mean photon number {n}"),
            Error::PhotonNumberTooLarge(n) => {
                write!(f, "photon number {n} above supported maximum 170")
            }
            Error::KExceedsN { k, n } => {
                write!(f, "detected photon number k={k} exceeds input Fock number n={n}")
            }
            Error::EmptyGrid => write!(f, "phase grid is empty"),
            Error::InvalidGridBounds => write!(f, "phase grid bounds are not increasing"),
            Error::UnsortedSamples => write!(f, "samples are not strictly increasing in L/lambda"),
            Error::InvalidCurveValue(v) => write!(f, "curve value {v} outside allowed range"),
            Error::InvalidGain(g) => write!(f, "detector gain {g} must be positive"),
            Error::InvalidNoise(s) => {
                write!(f, "detector noise sigma {s} invalid (need 0 <= sigma < gain/2)")
            }
            Error::NoPulses => write!(f, "pulse count must be positive"),
            Error::EmptyRecords => write!(f, "record list is empty"),
            Error::InvalidBinWidth(w) => write!(f, "histogram bin width {w} must be positive"),
            Error::NonSeparableHistogram => {
                write!(f, "histogram valleys not separable between photon-number peaks")
            }
            Error::MismatchedGrids => write!(f, "curves do not share a common phase grid"),
            Error::InvalidWindow => write!(f, "window is empty or reversed"),
            Error::EmptyWindow => write!(f, "no samples inside the window"),
            Error::ZeroWindowCounts => write!(f, "window holds zero total counts"),
            Error::ZeroSpread => write!(f, "window statistics need nonzero spread"),
            Error::ZeroPeakCounts => write!(f, "peak has zero total counts"),
            Error::MissingSecondPeak => {
                write!(f, "need two transmission maxima to measure an FSR")
            }
            Error::NoHalfMaximum => write!(f, "curve does not cross half maximum on both sides"),
            Error::DegenerateData => write!(f, "data too flat to constrain the fit"),
            Error::FitDidNotConverge(best) => write!(
                f,
                "fit did not converge within the iteration bound (best sse {})",
                best.sse
            ),
            Error::InvalidOption(what) => write!(f, "invalid option: {what}"),
        }
    }
}

impl core::error::Error for Error {}
