//! Trusted-node QKD network planning with a choice between cooled and
//! uncooled single-photon detectors.
//!
//! The crate covers the decoy-state BB84 key-rate model, random network
//! generation, exact cost-minimal equipping and cooling placement, the
//! degree-ranked cooling heuristic and the batch experiments built on them.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod heuristic;
pub mod keyrate;
pub mod milp;
pub mod scalar;
pub mod topology;

pub use scalar::{Field, Real};

pub type SourceParams = keyrate::SourceParams<f64>;
pub type FibreParams = keyrate::FibreParams<f64>;
pub type DetectorProfile = keyrate::DetectorProfile<f64>;
pub type LinkModelParams = keyrate::LinkModelParams<f64>;
pub type RatePoint = keyrate::RatePoint<f64>;

/// Formats a float for CSV output with 12 significant digits, trailing zeros
/// removed.
pub fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_float;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(-0.0), "0");
        assert_eq!(fmt_float(1.5), "1.5");
        assert_eq!(fmt_float(17658.123456789012), "17658.1234568");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_float(2.1e-5), "0.000021");
        assert_eq!(fmt_float(3.5e-7), "3.5e-7");
        assert_eq!(fmt_float(-250.0), "-250");
        assert_eq!(fmt_float(1e20), "1e20");
    }
}
