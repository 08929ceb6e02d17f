//! Volume means `V_q` and weighted volume means `M_{q,u}` through the polar
//! identity `V_q^q(r) = 2d / r^{2d} * int_0^r M_q^q(t) t^{2d-1} dt`.

use std::cell::Cell;
use std::fmt;

use crate::error::{Error, Result};
use crate::lacunary::GapSeries;
use crate::means::{sphere_mean, IntervalValue, MeanKind, MeansProfile, Mode, ModePolicy, ProfileEntry};
use crate::quadrature::integrate;
use crate::weights::LogWeight;

/// Relative tolerance of the radial quadrature.
pub const VOLUME_RTOL: f64 = 1e-8;

/// Radial density `u(|z|)` of a weighted volume mean.
#[derive(Clone, Debug)]
pub enum RadialDensity {
    One,
    Weight(LogWeight),
    /// `1 / v(t)`.
    InverseWeight(LogWeight),
    /// `(1 - t^2)^alpha`.
    Bergman { alpha: f64 },
}

impl RadialDensity {
    pub fn log_u(&self, t: f64) -> f64 {
        match self {
            RadialDensity::One => 0.0,
            RadialDensity::Weight(w) => w.log_w(t),
            RadialDensity::InverseWeight(w) => -w.log_w(t),
            RadialDensity::Bergman { alpha } => alpha * (-t * t).ln_1p(),
        }
    }
}

impl fmt::Display for RadialDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialDensity::One => write!(f, "1"),
            RadialDensity::Weight(w) => write!(f, "{}", w.describe()),
            RadialDensity::InverseWeight(w) => write!(f, "1/{}", w.describe()),
            RadialDensity::Bergman { alpha } => write!(f, "(1-t^2)^{alpha}"),
        }
    }
}

/// Breakpoints in `x = t / r`: `0, 1/2, 3/4, ...` until the last panel is
/// narrower than a quarter of `1 - r`.
fn panel_breaks(r: f64) -> Vec<f64> {
    let target = 0.25 * (1.0 - r) / r;
    let mut out = vec![0.0];
    let mut width = 0.5f64;
    while out.len() < 64 {
        out.push(1.0 - width);
        if width < target {
            break;
        }
        width *= 0.5;
    }
    out.push(1.0);
    out
}

fn check_args(q: f64, r: f64, d: usize) -> Result<()> {
    if !(q > 0.0) || q.is_infinite() {
        return Err(Error::Parameter(format!("volume exponent must be positive and finite, got {q}")));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Range(format!("radius must lie in [0,1), got {r}")));
    }
    if d < 1 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    Ok(())
}

/// `log M_{q,u}(f, r)` for the unit ball of `C^d`, using the circle means of
/// `gs` as the sphere means.
pub fn weighted_volume_mean(
    gs: &GapSeries,
    q: f64,
    u: &RadialDensity,
    r: f64,
    d: usize,
    policy: ModePolicy,
) -> Result<ProfileEntry> {
    check_args(q, r, d)?;
    let f0 = gs.log_const;
    if r == 0.0 {
        let v = f0 + u.log_u(0.0) / q;
        return Ok(ProfileEntry { r, s: f64::NEG_INFINITY, value: IntervalValue::point(v), mode: Mode::Exact, numerical: 0.0 });
    }
    let s = r.ln();
    let top = sphere_mean(gs, q, s, policy)?;
    let reference = q * top.value.log_hi + u.log_u(0.0).max(u.log_u(r));
    let expo = (2 * d - 1) as i32;

    let any_bounds = Cell::new(top.mode == Mode::Bounds);
    let any_sampled = Cell::new(top.mode == Mode::Sampled);
    let numerical = Cell::new(top.numerical);
    let integrand = |x: f64, upper: bool| -> Result<f64> {
        let t = r * x;
        let e = sphere_mean(gs, q, t.ln(), policy)?;
        any_bounds.set(any_bounds.get() | (e.mode == Mode::Bounds));
        any_sampled.set(any_sampled.get() | (e.mode == Mode::Sampled));
        numerical.set(numerical.get().max(e.numerical));
        let m = if upper { e.value.log_hi } else { e.value.log_lo };
        Ok((q * m + u.log_u(t) - reference).exp() * x.powi(expo))
    };
    let breaks = panel_breaks(r);
    let scale = (2 * d) as f64;
    let hi = integrate(|x| integrand(x, true), &breaks, VOLUME_RTOL, 0.0, 4000)?;
    let any_bounds = any_bounds.get();
    let lo = if any_bounds { integrate(|x| integrand(x, false), &breaks, VOLUME_RTOL, 0.0, 4000)? } else { hi };
    let to_log = |v: f64| (reference + (scale * v).ln()) / q;
    let quad_err = (hi.error / hi.value.abs()).max(lo.error / lo.value.abs()) / q;
    let value = if any_bounds { IntervalValue::new(to_log(lo.value), to_log(hi.value))? } else { IntervalValue::point(to_log(hi.value)) };
    let mode = if any_bounds {
        Mode::Bounds
    } else if any_sampled.get() {
        Mode::Sampled
    } else {
        Mode::Exact
    };
    Ok(ProfileEntry { r, s, value, mode, numerical: numerical.get() + quad_err })
}

/// `log V_q(f, r)`.
pub fn volume_mean(gs: &GapSeries, q: f64, r: f64, d: usize, policy: ModePolicy) -> Result<ProfileEntry> {
    weighted_volume_mean(gs, q, &RadialDensity::One, r, d, policy)
}

/// Profile of `V_q` (for `u = 1`) or `M_{q,u}` over radii.
pub fn volume_profile(
    gs: &GapSeries,
    q: f64,
    u: &RadialDensity,
    radii: &[f64],
    d: usize,
    policy: ModePolicy,
) -> Result<MeansProfile> {
    let entries = radii
        .iter()
        .map(|&r| weighted_volume_mean(gs, q, u, r, d, policy))
        .collect::<Result<Vec<_>>>()?;
    let (kind, weighting) = match u {
        RadialDensity::One => (MeanKind::Volume, None),
        other => (MeanKind::Weighted, Some(other.to_string())),
    };
    Ok(MeansProfile { kind, exponent: q, dim: d, weighting, entries })
}

fn check_coeffs(coeffs: &[(f64, f64)], d: usize) -> Result<()> {
    if d < 1 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    if let Some((k, _)) = coeffs.iter().find(|(k, _)| !(*k >= 0.0)) {
        return Err(Error::Input(format!("coefficient index must be non-negative, got {k}")));
    }
    Ok(())
}

/// `log a_k -> log a_k + log(2d) - log(k + 2d)`: coefficients of `V_q^q` from
/// those of `M_q^q`.
pub fn volume_smoothing_transform(coeffs: &[(f64, f64)], d: usize) -> Result<Vec<(f64, f64)>> {
    check_coeffs(coeffs, d)?;
    let dd = (2 * d) as f64;
    Ok(coeffs.iter().map(|&(k, a)| (k, a + dd.ln() - (k + dd).ln())).collect())
}

/// `log a_k -> log a_k + log(k + 2d)`.
pub fn inverse_smoothing_transform(coeffs: &[(f64, f64)], d: usize) -> Result<Vec<(f64, f64)>> {
    check_coeffs(coeffs, d)?;
    let dd = (2 * d) as f64;
    Ok(coeffs.iter().map(|&(k, a)| (k, a + (k + dd).ln())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lacunary::GapTerm;
    use crate::means::log_power_series;
    use crate::weights::{make_constant_weight, make_power_weight};
    use num_complex::Complex64;

    fn poly_1_2z3() -> GapSeries {
        GapSeries::new(1, 0.0, vec![GapTerm { n: 3, log_a: 2f64.ln() }]).unwrap()
    }

    #[test]
    fn volume_examples() {
        let one = GapSeries::constant(1, 0.0);
        for q in [0.5, 2.0, 3.0] {
            for d in [1, 2, 3] {
                let v = volume_mean(&one, q, 0.7, d, ModePolicy::Auto).unwrap();
                assert!(v.log_value().abs() < 1e-12);
            }
        }
        let f = poly_1_2z3();
        let v = volume_mean(&f, 2.0, 0.5, 1, ModePolicy::Auto).unwrap();
        assert!(((2.0 * v.log_value()).exp() - 1.015625).abs() < 1e-12);
        let v0 = volume_mean(&f, 1.0, 0.0, 1, ModePolicy::Auto).unwrap();
        assert_eq!(v0.log_value(), 0.0);
        let small = volume_mean(&f, 1.0, 1e-4, 1, ModePolicy::Auto).unwrap();
        assert!(small.log_value().abs() < 1e-9);
    }

    #[test]
    fn weighted_examples() {
        let f = poly_1_2z3();
        let a = volume_mean(&f, 1.5, 0.6, 2, ModePolicy::Auto).unwrap();
        let b = weighted_volume_mean(&f, 1.5, &RadialDensity::One, 0.6, 2, ModePolicy::Auto).unwrap();
        assert_eq!(a.log_value(), b.log_value());

        let three = GapSeries::constant(1, 3f64.ln());
        let u = RadialDensity::Weight(make_constant_weight(4.0).unwrap());
        let v = weighted_volume_mean(&three, 2.0, &u, 0.0, 1, ModePolicy::Auto).unwrap();
        assert!((v.log_value().exp() - 6.0).abs() < 1e-12);

        let one = GapSeries::constant(1, 0.0);
        let inv = RadialDensity::InverseWeight(make_power_weight(1.0).unwrap());
        for r in [0.1, 0.5, 0.9] {
            let v = weighted_volume_mean(&one, 1.0, &inv, r, 1, ModePolicy::Auto).unwrap();
            assert!((v.log_value().exp() - (1.0 - 2.0 * r / 3.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothing_examples() {
        let m = vec![(0.0, 0.0), (6.0, 4f64.ln())];
        let v = volume_smoothing_transform(&m, 1).unwrap();
        assert_eq!(v[0], (0.0, 0.0));
        assert!((v[1].1 - 0.0).abs() < 1e-15);
        let r = 0.5f64;
        assert!((log_power_series(&v, r.ln()).exp() - (1.0 + r.powi(6))).abs() < 1e-15);

        let inv = inverse_smoothing_transform(&[(0.0, 0.0)], 1).unwrap();
        assert!((inv[0].1 - 2f64.ln()).abs() < 1e-15);
        let inv = inverse_smoothing_transform(&[(3.0, 5f64.ln())], 2).unwrap();
        assert!((inv[0].1 - 35f64.ln()).abs() < 1e-14);
        assert!(volume_smoothing_transform(&[(-1.0, 0.0)], 1).is_err());

        let c = vec![(0.0, 0.3), (5.0, -1.0), (17.0, 2.0)];
        for d in [1, 2, 3] {
            let back = volume_smoothing_transform(&inverse_smoothing_transform(&c, d).unwrap(), d).unwrap();
            for (x, y) in back.iter().zip(&c) {
                assert!((x.1 - y.1 - ((2 * d) as f64).ln()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn smoothing_matches_volume_mean() {
        let f = GapSeries::new(
            1,
            0.1,
            vec![GapTerm { n: 2, log_a: 0.5 }, GapTerm { n: 7, log_a: -0.3 }, GapTerm { n: 20, log_a: 1.0 }],
        )
        .unwrap();
        let mut m2sq = vec![(0.0, 2.0 * f.log_const)];
        m2sq.extend(f.terms().iter().map(|t| (2.0 * t.n as f64, 2.0 * t.log_a)));
        for d in [1, 2, 3] {
            let v = volume_smoothing_transform(&m2sq, d).unwrap();
            for r in [0.2, 0.6, 0.95] {
                let direct = volume_mean(&f, 2.0, r, d, ModePolicy::Auto).unwrap();
                let series = 0.5 * log_power_series(&v, f64::ln(r));
                assert!((direct.log_value() - series).abs() < 1e-9, "d={d} r={r}");
            }
        }
    }

    /// Disk integral of `|f|^q` by radial Gauss–Kronrod and an angular
    /// trapezoid on direct polynomial evaluation.
    fn disk_oracle(coeffs: &[(i32, f64)], q: f64, r: f64) -> f64 {
        let n_ang = 2048;
        let ring = |t: f64| -> Result<f64> {
            let mut acc = 0.0;
            for j in 0..n_ang {
                let z = Complex64::from_polar(t, 2.0 * std::f64::consts::PI * j as f64 / n_ang as f64);
                let v: Complex64 = coeffs.iter().map(|&(k, a)| a * z.powi(k)).sum();
                acc += v.norm().powf(q);
            }
            Ok(acc / n_ang as f64 * t)
        };
        let qd = integrate(ring, &[0.0, 0.5 * r, r], 1e-12, 0.0, 500).unwrap();
        (2.0 * qd.value / (r * r)).powf(1.0 / q)
    }

    #[test]
    fn polar_identity_matches_disk_quadrature() {
        let f = GapSeries::new(1, 0.0, vec![GapTerm { n: 1, log_a: 0.0 }, GapTerm { n: 4, log_a: 1.2f64.ln() }]).unwrap();
        let coeffs = [(0, 1.0), (1, 1.0), (4, 1.2)];
        for q in [1.0, 2.0, 3.0] {
            for r in [0.3, 0.8] {
                let a = volume_mean(&f, q, r, 1, ModePolicy::Auto).unwrap().log_value().exp();
                let b = disk_oracle(&coeffs, q, r);
                assert!(((a - b) / b).abs() < 1e-6, "q={q} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bergman_density() {
        let one = GapSeries::constant(1, 0.0);
        let u = RadialDensity::Bergman { alpha: 1.0 };
        // (2/r^2) int_0^r t (1 - t^2) dt = 1 - r^2 / 2
        let v = weighted_volume_mean(&one, 1.0, &u, 0.5, 1, ModePolicy::Auto).unwrap();
        assert!((v.log_value().exp() - 0.875).abs() < 1e-12);
    }
}
