//! Operator fidelity metric of parametrized unitary evolutions, with level
//! statistics, random-matrix ensembles and a Dicke-model sweep pipeline for
//! studying the regular-to-chaotic cross-over.

pub mod cli;
pub mod error;
pub mod fidelity;
pub mod hilbert;
pub mod linalg;
pub mod par;
pub mod plot;
pub mod rmt;
pub mod spectra;
pub mod sweep;

pub use error::{Error, Result};
pub use linalg::{HermitianMatrix, Mat};
pub use par::Execution;

/// Formats a float with 17 significant digits; `nan`, `inf` and `-inf` for
/// non-finite values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::format_float;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(f64::INFINITY), "inf");
    }
}
