//! Decoy-state BB84 secure key rate model for a single fibre link.
//!
//! The chain of quantities follows the usual prepare-and-measure model with a
//! Poissonian source: fibre transmittance, dark-count probability, n-photon
//! yields, detection probability, dead-time loss, system gain, visibility
//! based QBER, a fitted n-photon error model and finally the secret key rate
//! per pulse and per second.
//!
//! Everything is generic over [`Real`] so the chain can be evaluated in `f32`
//! as well as `f64`; the rest of the crate uses the `f64` aliases exported at
//! the crate root.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Number of photon-number terms kept in every Poisson sum (n = 0..=30).
pub const SERIES_TERMS: usize = 30;

/// Length of the detector gate used to convert dark-count rates into
/// per-window probabilities (seconds).
pub const DEFAULT_DETECTION_WINDOW_S: f64 = 3.5e-9;

/// Additive constant in the error probability `P_e` (optical misalignment).
pub const DEFAULT_MISALIGNMENT_FLOOR: f64 = 5.3e-7;

/// Error-correction inefficiency `f(E)`.
pub const DEFAULT_ERROR_CORRECTION_EFFICIENCY: f64 = 1.2;

/// QBER of a dark click: dark counts are uniformly random.
const DARK_CLICK_ERROR: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyRateError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("n-photon error fit failed: {0}")]
    FitFailure(String),
    #[error("minimum rate {min_rate_bps} bit/s is not attainable even at zero length")]
    Unattainable { min_rate_bps: f64 },
    #[error("key rate is not monotone on [0, {upper_km}] km")]
    NotMonotone { upper_km: f64 },
}

/// Detector temperature regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Warm,
    Cold,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Warm => "warm",
            Regime::Cold => "cold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams<T> {
    /// Mean photon number per pulse.
    pub mu: T,
    /// Pulse repetition rate in Hz.
    pub f_rep: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibreParams<T> {
    /// Attenuation in dB/km.
    pub alpha: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorProfile<T> {
    /// Dark count rate in Hz.
    pub dark_count_rate: T,
    /// Detection efficiency in (0, 1].
    pub efficiency: T,
    /// Dead time in seconds.
    pub dead_time: T,
    /// Gate length in seconds.
    pub detection_window: T,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModelParams<T> {
    pub source: SourceParams<T>,
    pub fibre: FibreParams<T>,
    pub detector: DetectorProfile<T>,
    pub error_correction_efficiency: T,
    pub misalignment_floor: T,
}

impl<T: Real> SourceParams<T> {
    pub fn table_defaults() -> Self {
        Self {
            mu: T::lit(0.1),
            f_rep: T::lit(100e6),
        }
    }

    pub fn validate(&self) -> Result<(), KeyRateError> {
        if !(self.mu > T::zero() && self.mu.is_finite()) {
            return Err(KeyRateError::Parameter(format!("mu must be > 0, got {:?}", self.mu)));
        }
        if !(self.f_rep > T::zero() && self.f_rep.is_finite()) {
            return Err(KeyRateError::Parameter(format!(
                "f_rep must be > 0, got {:?}",
                self.f_rep
            )));
        }
        Ok(())
    }
}

impl<T: Real> FibreParams<T> {
    pub fn table_defaults() -> Self {
        Self { alpha: T::lit(0.2) }
    }

    pub fn validate(&self) -> Result<(), KeyRateError> {
        if !(self.alpha >= T::zero() && self.alpha.is_finite()) {
            return Err(KeyRateError::Parameter(format!(
                "alpha must be >= 0, got {:?}",
                self.alpha
            )));
        }
        Ok(())
    }
}

impl<T: Real> DetectorProfile<T> {
    /// Single-photon detector values for the given regime: a cooled
    /// superconducting nanowire (cold) or a gated avalanche diode (warm).
    pub fn table_defaults(regime: Regime) -> Self {
        let (dark, eff, dead) = match regime {
            Regime::Cold => (100.0, 0.85, 1e-6),
            Regime::Warm => (6e3, 0.2, 50e-6),
        };
        Self {
            dark_count_rate: T::lit(dark),
            efficiency: T::lit(eff),
            dead_time: T::lit(dead),
            detection_window: T::lit(DEFAULT_DETECTION_WINDOW_S),
            regime,
        }
    }

    pub fn validate(&self) -> Result<(), KeyRateError> {
        if !(self.efficiency > T::zero() && self.efficiency <= T::one()) {
            return Err(KeyRateError::Parameter(format!(
                "efficiency must lie in (0, 1], got {:?}",
                self.efficiency
            )));
        }
        if !(self.dark_count_rate >= T::zero() && self.dark_count_rate.is_finite()) {
            return Err(KeyRateError::Parameter(format!(
                "dark_count_rate must be >= 0, got {:?}",
                self.dark_count_rate
            )));
        }
        if !(self.dead_time >= T::zero() && self.dead_time.is_finite()) {
            return Err(KeyRateError::Parameter(format!(
                "dead_time must be >= 0, got {:?}",
                self.dead_time
            )));
        }
        if !(self.detection_window >= T::zero() && self.detection_window.is_finite()) {
            return Err(KeyRateError::Parameter(format!(
                "detection_window must be >= 0, got {:?}",
                self.detection_window
            )));
        }
        dark_count_probability(self).map(|_| ())
    }
}

impl<T: Real> LinkModelParams<T> {
    pub fn table_defaults(regime: Regime) -> Self {
        Self {
            source: SourceParams::table_defaults(),
            fibre: FibreParams::table_defaults(),
            detector: DetectorProfile::table_defaults(regime),
            error_correction_efficiency: T::lit(DEFAULT_ERROR_CORRECTION_EFFICIENCY),
            misalignment_floor: T::lit(DEFAULT_MISALIGNMENT_FLOOR),
        }
    }

    pub fn validate(&self) -> Result<(), KeyRateError> {
        self.source.validate()?;
        self.fibre.validate()?;
        self.detector.validate()?;
        if !(self.error_correction_efficiency >= T::one()) {
            return Err(KeyRateError::Parameter(format!(
                "error_correction_efficiency must be >= 1, got {:?}",
                self.error_correction_efficiency
            )));
        }
        if !(self.misalignment_floor >= T::zero() && self.misalignment_floor.is_finite()) {
            return Err(KeyRateError::Parameter(format!(
                "misalignment_floor must be >= 0, got {:?}",
                self.misalignment_floor
            )));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        self.detector.regime
    }

    /// Total error probability `P_e` = misalignment floor + dark-count probability.
    pub fn error_probability(&self) -> Result<T, KeyRateError> {
        Ok(self.misalignment_floor + dark_count_probability(&self.detector)?)
    }
}

/// Rate and headline quantities at one fibre length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint<T> {
    pub length: T,
    /// Secret bits per pulse, clamped at zero.
    pub rate_per_pulse: T,
    /// Secret bits per second (`rate_per_pulse * f_rep`).
    pub rate_per_second: T,
    pub qber: T,
    pub gain: T,
}

/// Fibre transmittance `10^(-alpha * l / 10)`.
pub fn fibre_efficiency<T: Real>(length: T, fibre: &FibreParams<T>) -> Result<T, KeyRateError> {
    if !(length >= T::zero()) {
        return Err(KeyRateError::Domain(format!("length must be >= 0 km, got {length:?}")));
    }
    Ok(T::lit(10.0).powf(-fibre.alpha * length / T::lit(10.0)))
}

/// Per-window dark count probability `r_DC * window`.
pub fn dark_count_probability<T: Real>(detector: &DetectorProfile<T>) -> Result<T, KeyRateError> {
    let p = detector.dark_count_rate * detector.detection_window;
    if !(p >= T::zero() && p < T::one()) {
        return Err(KeyRateError::Parameter(format!(
            "dark count probability must lie in [0, 1), got {p:?}"
        )));
    }
    Ok(p)
}

/// Yield of an n-photon pulse: at least one photon detected, or no photon
/// detected and a dark click.
pub fn n_photon_yield<T: Real>(n: u32, eta_f: T, eta_d: T, p_dc: T) -> T {
    let miss = (T::one() - eta_f * eta_d).powi(n as i32);
    (T::one() - miss) + miss * p_dc
}

/// Poisson weights `e^-mu mu^n / n!` for n = 0..=SERIES_TERMS.
pub fn poisson_weights<T: Real>(mu: T) -> [T; SERIES_TERMS + 1] {
    let mut weights = [T::zero(); SERIES_TERMS + 1];
    let mut w = (-mu).exp();
    for (n, slot) in weights.iter_mut().enumerate() {
        if n > 0 {
            w = w * mu / T::lit(n as f64);
        }
        *slot = w;
    }
    weights
}

/// Probability of a detection event per source trigger, summed over the
/// photon-number distribution.
pub fn detection_probability<T: Real>(params: &LinkModelParams<T>, eta_f: T) -> Result<T, KeyRateError> {
    let p_dc = dark_count_probability(&params.detector)?;
    let eta_d = params.detector.efficiency;
    let weights = poisson_weights(params.source.mu);
    // Summed from the tail so the small terms are not swamped.
    let total = weights.iter().enumerate().rev().fold(T::zero(), |acc, (n, &w)| {
        acc + w * n_photon_yield(n as u32, eta_f, eta_d, p_dc)
    });
    Ok(total)
}

/// Fraction of states not lost to detector dead time.
pub fn dead_time_factor<T: Real>(p_mu: T, dead_time: T, f_rep: T) -> T {
    T::one() / (T::one() + dead_time * f_rep * p_mu)
}

pub fn system_gain<T: Real>(p_mu: T, eta_dead: T) -> T {
    p_mu * eta_dead
}

/// Interference visibility `mu eta / (mu eta + 2 P_e)`.
pub fn visibility<T: Real>(mu: T, eta_f: T, eta_d: T, p_e: T) -> Result<T, KeyRateError> {
    let signal = mu * eta_f * eta_d;
    let denom = signal + T::lit(2.0) * p_e;
    if !(denom > T::zero()) {
        return Err(KeyRateError::Degenerate(
            "visibility denominator mu*eta_f*eta_d + 2*P_e is zero".into(),
        ));
    }
    Ok(signal / denom)
}

pub fn qber_from_visibility<T: Real>(v: T) -> T {
    (T::one() - v) / T::lit(2.0)
}

/// Binary Shannon entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy<T: Real>(p: T) -> Result<T, KeyRateError> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(KeyRateError::Domain(format!(
            "entropy argument must lie in [0, 1], got {p:?}"
        )));
    }
    let term = |q: T| if q > T::zero() { -q * q.log2() } else { T::zero() };
    Ok(term(p) + term(T::one() - p))
}

/// Per-photon-number error model
/// `e_n Y_n = e_0 (1 - eta)^n p_DC + e_det [1 - (1 - eta)^n]`
/// with `eta = eta_f eta_d`, `e_0 = 1/2` and a fitted detection error `e_det`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonErrorModel<T> {
    /// Combined channel and detector transmittance `eta_f * eta_d`.
    pub transmittance: T,
    pub p_dc: T,
    /// Error probability of a dark click.
    pub dark_error: T,
    /// Fitted error probability of a photon-induced click.
    pub detection_error: T,
}

impl<T: Real> PhotonErrorModel<T> {
    /// `e_n Y_n`, the error-weighted yield of an n-photon pulse.
    pub fn weighted_error(&self, n: u32) -> T {
        let miss = (T::one() - self.transmittance).powi(n as i32);
        self.dark_error * miss * self.p_dc + self.detection_error * (T::one() - miss)
    }

    /// `e_n`; the vacuum term is the dark-click error.
    pub fn error_rate(&self, n: u32) -> T {
        let y = n_photon_yield(n, self.transmittance, T::one(), self.p_dc);
        if y > T::zero() {
            self.weighted_error(n) / y
        } else {
            self.dark_error
        }
    }

    /// Overall QBER implied by the model: `eta_dead / Q_mu * sum P(n) Y_n e_n`.
    pub fn series_qber(&self, mu: T, p_mu: T) -> T {
        // eta_dead / Q_mu = 1 / p_mu
        let weights = poisson_weights(mu);
        let sum = weights
            .iter()
            .enumerate()
            .rev()
            .fold(T::zero(), |acc, (n, &w)| acc + w * self.weighted_error(n as u32));
        sum / p_mu
    }
}

fn fit_tolerance<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(1e3))
}

/// Fits the detection error `e_det` so the series QBER reproduces the
/// visibility QBER at the operating point, by bisection on `[0, 1/2]`.
pub fn fit_photon_qber<T: Real>(params: &LinkModelParams<T>, eta_f: T) -> Result<PhotonErrorModel<T>, KeyRateError> {
    let p_dc = dark_count_probability(&params.detector)?;
    let p_e = params.error_probability()?;
    let mu = params.source.mu;
    let target = qber_from_visibility(visibility(mu, eta_f, params.detector.efficiency, p_e)?);
    let p_mu = detection_probability(params, eta_f)?;
    if !(p_mu > T::zero()) {
        return Err(KeyRateError::FitFailure("detection probability is zero".into()));
    }
    let model = |e_det: T| PhotonErrorModel {
        transmittance: eta_f * params.detector.efficiency,
        p_dc,
        dark_error: T::lit(DARK_CLICK_ERROR),
        detection_error: e_det,
    };
    let residual = |e_det: T| model(e_det).series_qber(mu, p_mu) - target;

    let tol = fit_tolerance::<T>();
    let half = T::lit(0.5);
    let (mut lo, mut hi) = (T::zero(), half);
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    if r_lo > tol || r_hi < -tol {
        return Err(KeyRateError::FitFailure(format!(
            "target QBER {target:?} outside the model range [{:?}, {:?}]",
            r_lo + target,
            r_hi + target
        )));
    }
    // The residual is increasing in e_det.
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e_det = if residual(lo).abs() <= residual(hi).abs() {
        lo
    } else {
        hi
    };
    let fitted = model(e_det);
    if residual(e_det).abs() > tol {
        return Err(KeyRateError::FitFailure(format!(
            "residual {:?} above tolerance",
            residual(e_det)
        )));
    }
    Ok(fitted)
}

/// All intermediate quantities of the rate chain at one length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint<T> {
    pub length: T,
    pub eta_f: T,
    pub p_dc: T,
    pub yield_1: T,
    pub p_mu: T,
    pub eta_dead: T,
    pub gain: T,
    pub visibility: T,
    pub qber: T,
    pub error_model: PhotonErrorModel<T>,
    /// Single-photon error rate `e_1`.
    pub e1: T,
    /// Single-photon gain `Q_1 = Y_1 mu e^-mu eta_dead`.
    pub single_photon_gain: T,
    /// Unclamped rate per pulse; negative beyond reach.
    pub raw_rate_per_pulse: T,
}

pub fn operating_point<T: Real>(length: T, params: &LinkModelParams<T>) -> Result<OperatingPoint<T>, KeyRateError> {
    params.validate()?;
    let eta_f = fibre_efficiency(length, &params.fibre)?;
    let p_dc = dark_count_probability(&params.detector)?;
    let eta_d = params.detector.efficiency;
    let mu = params.source.mu;
    let p_mu = detection_probability(params, eta_f)?;
    let eta_dead = dead_time_factor(p_mu, params.detector.dead_time, params.source.f_rep);
    let gain = system_gain(p_mu, eta_dead);
    let v = visibility(mu, eta_f, eta_d, params.error_probability()?)?;
    let qber = qber_from_visibility(v);
    let error_model = fit_photon_qber(params, eta_f)?;
    let e1 = error_model.error_rate(1);
    let yield_1 = n_photon_yield(1, eta_f, eta_d, p_dc);
    let single_photon_gain = yield_1 * mu * (-mu).exp() * eta_dead;
    let raw_rate_per_pulse = -gain * params.error_correction_efficiency * binary_entropy(qber)?
        + single_photon_gain * (T::one() - binary_entropy(e1.min(T::one()).max(T::zero()))?);
    Ok(OperatingPoint {
        length,
        eta_f,
        p_dc,
        yield_1,
        p_mu,
        eta_dead,
        gain,
        visibility: v,
        qber,
        error_model,
        e1,
        single_photon_gain,
        raw_rate_per_pulse,
    })
}

/// Secret key rate at `length` km, clamped at zero beyond the link's reach.
pub fn secure_key_rate<T: Real>(length: T, params: &LinkModelParams<T>) -> Result<RatePoint<T>, KeyRateError> {
    let op = operating_point(length, params)?;
    let rate_per_pulse = op.raw_rate_per_pulse.max(T::zero());
    Ok(RatePoint {
        length,
        rate_per_pulse,
        rate_per_second: rate_per_pulse * params.source.f_rep,
        qber: op.qber,
        gain: op.gain,
    })
}

/// Precision of [`max_reach`] in km (one metre).
pub const REACH_PRECISION_KM: f64 = 1e-3;

const REACH_SEARCH_LIMIT_KM: f64 = 1e5;

/// Longest fibre length whose key rate is still at least `min_rate` bit/s.
///
/// The rate curve is checked to be non-increasing on a 1 km grid over the
/// bracketing interval before bisecting to [`REACH_PRECISION_KM`].
pub fn max_reach<T: Real>(min_rate: T, params: &LinkModelParams<T>) -> Result<T, KeyRateError> {
    if !(min_rate > T::zero()) {
        return Err(KeyRateError::Domain(format!("min_rate must be > 0, got {min_rate:?}")));
    }
    let rate = |l: T| secure_key_rate(l, params).map(|r| r.rate_per_second);
    if rate(T::zero())? < min_rate {
        return Err(KeyRateError::Unattainable {
            min_rate_bps: min_rate.to_f64_lossy(),
        });
    }
    let mut hi = T::one();
    while rate(hi)? >= min_rate {
        hi = hi * T::lit(2.0);
        if hi > T::lit(REACH_SEARCH_LIMIT_KM) {
            return Err(KeyRateError::Parameter(format!(
                "rate stays above {min_rate:?} bit/s beyond {REACH_SEARCH_LIMIT_KM} km"
            )));
        }
    }

    let steps = hi.ceil().to_usize().unwrap_or(0);
    let mut prev = rate(T::zero())?;
    for i in 1..=steps {
        let cur = rate(T::lit(i as f64).min(hi))?;
        if cur > prev {
            return Err(KeyRateError::NotMonotone {
                upper_km: hi.to_f64_lossy(),
            });
        }
        prev = cur;
    }

    let mut lo = T::zero();
    let precision = T::lit(REACH_PRECISION_KM);
    while hi - lo > precision {
        let mid = (lo + hi) / T::lit(2.0);
        if rate(mid)? >= min_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = LinkModelParams<f64>;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn fibre_efficiency_values() {
        let f = FibreParams { alpha: 0.2 };
        assert_eq!(fibre_efficiency(0.0, &f).unwrap(), 1.0);
        assert!(close(fibre_efficiency(50.0, &f).unwrap(), 0.1, 1e-15));
        assert!(close(fibre_efficiency(100.0, &f).unwrap(), 0.01, 1e-16));
        assert!(matches!(fibre_efficiency(-1.0, &f), Err(KeyRateError::Domain(_))));
    }

    #[test]
    fn dark_count_probabilities() {
        let cold = DetectorProfile::<f64>::table_defaults(Regime::Cold);
        let warm = DetectorProfile::<f64>::table_defaults(Regime::Warm);
        assert!(close(dark_count_probability(&cold).unwrap(), 3.5e-7, 1e-20));
        assert!(close(dark_count_probability(&warm).unwrap(), 2.1e-5, 1e-18));
        let silent = DetectorProfile {
            dark_count_rate: 0.0,
            ..cold
        };
        assert_eq!(dark_count_probability(&silent).unwrap(), 0.0);
        let saturated = DetectorProfile {
            dark_count_rate: 1e9,
            ..cold
        };
        assert!(matches!(
            dark_count_probability(&saturated),
            Err(KeyRateError::Parameter(_))
        ));
    }

    #[test]
    fn photon_yields() {
        assert_eq!(n_photon_yield(0, 0.3, 0.4, 0.01), 0.01);
        assert_eq!(n_photon_yield(1, 1.0, 1.0, 0.0), 1.0);
        let expected = 1.0 - 0.75f64.powi(3) + 0.75f64.powi(3) * 0.01;
        assert!(close(n_photon_yield(3, 0.5, 0.5, 0.01), expected, 1e-15));
        assert!(close(expected, 0.58234375, 1e-15));
    }

    #[test]
    fn detection_probability_limits() {
        let mut p = P::table_defaults(Regime::Cold);
        p.detector.dark_count_rate = 0.0;
        p.source.mu = std::f64::consts::LN_2;
        p.detector.efficiency = 1.0;
        assert!(close(detection_probability(&p, 1.0).unwrap(), 0.5, 1e-14));

        let mut vac = P::table_defaults(Regime::Warm);
        vac.source.mu = 1e-300;
        let p_dc = dark_count_probability(&vac.detector).unwrap();
        assert!(close(detection_probability(&vac, 0.3).unwrap(), p_dc, 1e-18));
    }

    #[test]
    fn dead_time_and_gain() {
        assert_eq!(dead_time_factor(0.0, 50e-6, 1e8), 1.0);
        assert_eq!(dead_time_factor(1.0, 1.0, 1.0), 0.5);
        assert!(close(dead_time_factor(1e-3, 50e-6, 100e6), 1.0 / 6.0, 1e-15));
        assert_eq!(system_gain(0.0, 1.0), 0.0);
        assert_eq!(system_gain(1.0, 1.0), 1.0);
        assert!(close(system_gain(0.2, 0.5), 0.1, 1e-16));
    }

    #[test]
    fn visibility_cases() {
        assert_eq!(visibility(0.1, 0.5, 0.5, 0.0).unwrap(), 1.0);
        assert_eq!(qber_from_visibility(1.0), 0.0);
        let v = visibility(0.1, 1.0, 0.2, 0.01).unwrap();
        assert!(close(v, 0.5, 1e-15));
        assert!(close(qber_from_visibility(v), 0.25, 1e-15));
        let cold = visibility(0.1, 1.0, 0.85, 5.3e-7 + 3.5e-7).unwrap();
        assert!(close(cold, 0.085 / (0.085 + 2.0 * 8.8e-7), 1e-15));
        assert!(matches!(
            visibility(0.1, 0.0, 0.5, 0.0),
            Err(KeyRateError::Degenerate(_))
        ));
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        let h = binary_entropy(0.11f64).unwrap();
        let direct = -0.11 * 0.11f64.log2() - 0.89 * 0.89f64.log2();
        assert!(close(h, direct, 1e-15));
        assert!(close(h, 0.49992, 1e-5));
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn vacuum_error_is_half() {
        let p = P::table_defaults(Regime::Warm);
        let m = fit_photon_qber(&p, 1e-12).unwrap();
        assert_eq!(m.error_rate(0), 0.5);
        assert!(m.error_rate(1) > 0.49);
    }

    #[test]
    fn rate_clamps_beyond_reach() {
        let p = P::table_defaults(Regime::Warm);
        let far = secure_key_rate(400.0, &p).unwrap();
        assert_eq!(far.rate_per_pulse, 0.0);
        assert_eq!(far.rate_per_second, 0.0);
        assert!(operating_point(400.0, &p).unwrap().raw_rate_per_pulse < 0.0);
    }

    #[test]
    fn perfect_channel_rate_is_single_photon_gain() {
        let mut p = P::table_defaults(Regime::Cold);
        p.detector.dark_count_rate = 0.0;
        p.misalignment_floor = 0.0;
        let op = operating_point(10.0, &p).unwrap();
        assert_eq!(op.qber, 0.0);
        assert!(op.e1.abs() < 1e-12);
        assert!(close(op.raw_rate_per_pulse, op.single_photon_gain, 1e-15));
    }

    #[test]
    fn cooled_beats_uncooled_at_40km() {
        let cold = secure_key_rate(40.0, &P::table_defaults(Regime::Cold)).unwrap();
        let warm = secure_key_rate(40.0, &P::table_defaults(Regime::Warm)).unwrap();
        assert!(warm.rate_per_second > 0.0);
        assert!(cold.rate_per_second > warm.rate_per_second);
    }

    #[test]
    fn reach_ordering_and_errors() {
        let warm = P::table_defaults(Regime::Warm);
        let cold = P::table_defaults(Regime::Cold);
        let lw = max_reach(4000.0, &warm).unwrap();
        let lc = max_reach(4000.0, &cold).unwrap();
        assert!(lc > lw && lw > 0.0);
        let r0 = secure_key_rate(0.0, &warm).unwrap().rate_per_second;
        assert!(max_reach(r0 * (1.0 - 1e-12), &warm).unwrap() < 0.01);
        assert!(matches!(
            max_reach(r0 * 2.0, &warm),
            Err(KeyRateError::Unattainable { .. })
        ));
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut p = P::table_defaults(Regime::Cold);
        p.detector.efficiency = 1.5;
        assert!(p.validate().is_err());
        let mut p = P::table_defaults(Regime::Cold);
        p.error_correction_efficiency = 0.9;
        assert!(p.validate().is_err());
        let mut p = P::table_defaults(Regime::Cold);
        p.source.mu = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn single_precision_chain_runs() {
        let p = LinkModelParams::<f32>::table_defaults(Regime::Cold);
        let r = secure_key_rate(20.0f32, &p).unwrap();
        let r64 = secure_key_rate(20.0f64, &P::table_defaults(Regime::Cold)).unwrap();
        assert!(((r.rate_per_second as f64) / r64.rate_per_second - 1.0).abs() < 1e-3);
    }
}
