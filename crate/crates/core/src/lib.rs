//! Lacunary series whose integral means track a prescribed log-convex weight.
//!
//! Given a log-convex weight `w` on `[0, 1)`, [`lacunary::theorem_series`]
//! builds a gap series `f(z) = c + sum_k a_k z^{n_k}` with
//! `M_p(f, r) ≍ w(r)` for every `0 < p <= inf`. The [`means`] module evaluates
//! sphere, volume and weighted volume means of such series, [`multidim`]
//! lifts the construction to the ball of `C^d`, and [`verify`] measures the
//! equivalence constants on a radius grid.

pub mod envelope;
pub mod error;
pub mod grid;
pub mod lacunary;
pub mod logmath;
pub mod means;
pub mod multidim;
pub mod quadrature;
pub mod verify;
pub mod volume;
pub mod weights;

pub use envelope::{build_envelope, support_coefficient, NewtonEnvelope, SupportLine};
pub use error::{Error, Result};
pub use grid::RadiusGrid;
pub use lacunary::{DominanceCert, GapSeries, GapTerm, SynthesisOptions};
pub use means::{IntervalValue, MeansProfile, Mode};
pub use weights::{ConvexityReport, LogWeight, WeightSpec};

/// Formats a number in plain decimal with 17 significant digits, switching to
/// scientific notation for very large or very small magnitudes.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..=16).contains(&e) {
        let prec = (16 - e).max(0) as usize;
        format!("{x:.prec$}")
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_num;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_num(1.0307764064044151), "1.0307764064044151");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_num(1e20), "1.0000000000000000e20");
        let x = 12345.678901234567;
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }
}
