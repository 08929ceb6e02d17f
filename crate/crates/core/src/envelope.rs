//! Integer-slope Newton envelope of a log-convex weight.
//!
//! For a slope `n` the support coefficient is `c_n = inf_{0<r<1} w(r) / r^n`,
//! i.e. `log c_n = inf_s (phi(s) - n s)`. The lines `log c_n + n s` are affine
//! minorants of `phi`; their upper envelope is the log of the maximal term
//! `sup_n c_n r^n`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::LogWeight;

/// Largest exponent the construction will emit (`2^100`).
///
/// Exponents beyond `2^53` are restricted to values exactly representable as
/// `f64` so that `n * s` is formed from an exact `n`.
pub const EXPONENT_CAP: u128 = 1u128 << 100;

/// Right end of every search interval, `-2^-60`.
pub const S_CEIL: f64 = -8.673617379884035e-19;

const GOLDEN_TOL: f64 = 1e-11;

/// Affine minorant `log c_n + n s` of `phi` touching it at `touch_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportLine {
    pub slope: u128,
    pub log_intercept: f64,
    pub touch_s: f64,
    /// Minimiser sits on the clamped end of the search interval.
    pub at_boundary: bool,
}

impl SupportLine {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        if self.slope == 0 {
            self.log_intercept
        } else {
            self.log_intercept + self.slope as f64 * s
        }
    }
}

/// Rounds an exponent down to the nearest integer exactly representable as `f64`.
#[inline]
pub fn representable(n: u128) -> u128 {
    if n <= 1u128 << 53 {
        n
    } else {
        let f = n as f64;
        let back = f as u128;
        if back > n {
            // `as f64` rounded up; step down one ulp
            let down = f64::from_bits(f.to_bits() - 1);
            down as u128
        } else {
            back
        }
    }
}

/// Smallest representable exponent strictly greater than `n`.
#[inline]
pub fn next_representable(n: u128) -> u128 {
    if n < 1u128 << 53 {
        n + 1
    } else {
        let f = representable(n) as f64;
        f64::from_bits(f.to_bits() + 1) as u128
    }
}

/// Search bracket expressed in `u = ln(-s)`.
fn u_of(s: f64) -> f64 {
    (-s).ln()
}

fn s_of(u: f64) -> f64 {
    -u.exp()
}

/// `log c_n` for one slope, with its touching log-radius.
pub fn support_coefficient(w: &LogWeight, n: u128) -> SupportLine {
    support_coefficient_from(w, n, w.s_floor())
}

/// As [`support_coefficient`], with the minimiser known to lie at or right of `s_lo`.
pub fn support_coefficient_from(w: &LogWeight, n: u128, s_lo: f64) -> SupportLine {
    support_coefficient_between(w, n, s_lo, S_CEIL)
}

/// As [`support_coefficient`], with the minimiser known to lie in `[s_lo, s_hi]`.
///
/// `at_boundary` is only raised for the ends of the full domain.
pub fn support_coefficient_between(w: &LogWeight, n: u128, s_lo: f64, s_hi: f64) -> SupportLine {
    if n == 0 {
        return SupportLine {
            slope: 0,
            log_intercept: w.log_w0(),
            touch_s: f64::NEG_INFINITY,
            at_boundary: false,
        };
    }
    let nf = n as f64;
    let objective = |u: f64| {
        let s = s_of(u);
        w.phi(s) - nf * s
    };
    let s_hi = s_hi.min(S_CEIL);
    let s_lo = s_lo.max(w.s_floor()).min(s_hi);
    // u decreases as s increases: the bracket is [u(s_hi), u(s_lo)]
    let (mut a, mut b) = (u_of(s_hi), u_of(s_lo));
    let u_min = a;
    let u_max = b;
    let mut best = (objective(a), a);
    let fb = objective(b);
    if fb < best.0 {
        best = (fb, b);
    }
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
        if fc < best.0 {
            best = (fc, c);
        }
        if fd < best.0 {
            best = (fd, d);
        }
    }
    let (val, u) = best;
    let at_boundary =
        ((u - u_min).abs() < 1e-6 && s_hi >= S_CEIL) || (u_max - u < 1e-6 && s_lo <= w.s_floor());
    SupportLine { slope: n, log_intercept: val, touch_s: s_of(u), at_boundary }
}

/// Dual representation of a weight by a finite family of support lines.
#[derive(Clone, Debug)]
pub struct NewtonEnvelope {
    lines: Vec<SupportLine>,
    n_max: u128,
    source: Option<LogWeight>,
}

/// Slopes `0..=16`, then geometric with ratio 1.1, up to and including `n_max`.
pub fn thinned_slopes(n_max: u128) -> Vec<u128> {
    let mut out: Vec<u128> = (0..=n_max.min(16)).collect();
    let mut n = *out.last().unwrap();
    while n < n_max {
        let next = representable((n as f64 * 1.1).ceil() as u128).max(next_representable(n));
        n = next.min(n_max);
        out.push(n);
    }
    out
}

/// Support lines of `w` on the thinned slope set up to `n_max`.
pub fn build_envelope(w: &LogWeight, n_max: u128) -> Result<NewtonEnvelope> {
    if n_max < 1 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    if n_max > EXPONENT_CAP {
        return Err(Error::Range(format!("n_max {n_max} exceeds the exponent cap 2^100")));
    }
    let n_max = representable(n_max);
    let slopes = thinned_slopes(n_max);
    let lines: Vec<SupportLine> = slopes.par_iter().map(|&n| support_coefficient(w, n)).collect();
    Ok(NewtonEnvelope { lines, n_max, source: Some(w.clone()) })
}

/// Smallest thinned-grid slope whose touching point is at or beyond `s_target`,
/// or the cap if none is.
pub fn slope_reaching(w: &LogWeight, s_target: f64, cap: u128) -> u128 {
    let mut n: u128 = 1;
    loop {
        let line = support_coefficient(w, n);
        if line.at_boundary || line.touch_s >= s_target || n >= cap {
            return n.min(cap);
        }
        n = representable(n.saturating_mul(2)).min(cap);
    }
}

impl NewtonEnvelope {
    /// Envelope made of explicit lines, with no underlying weight.
    pub fn from_lines(mut lines: Vec<SupportLine>) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::Input("envelope needs at least one line".into()));
        }
        lines.sort_by_key(|l| l.slope);
        if lines.windows(2).any(|p| p[0].slope == p[1].slope) {
            return Err(Error::Input("envelope slopes must be distinct".into()));
        }
        let n_max = lines.last().unwrap().slope;
        Ok(NewtonEnvelope { lines, n_max, source: None })
    }

    pub fn lines(&self) -> &[SupportLine] {
        &self.lines
    }

    pub fn n_max(&self) -> u128 {
        self.n_max
    }

    pub fn source(&self) -> Option<&LogWeight> {
        self.source.as_ref()
    }

    /// Lines whose touching point is interior (excludes lines pinned to `r -> 1`).
    pub fn effective_lines(&self) -> impl Iterator<Item = &SupportLine> {
        self.lines.iter().filter(|l| !l.at_boundary)
    }

    /// Log of the maximal term `sup_{0 <= n <= n_max} c_n r^n` at `s = log r`.
    ///
    /// When the source weight is known, the maximum is refined over every
    /// representable integer slope between the stored neighbours of the best
    /// stored line; `log c_n + n s` is concave in `n`, so a ternary search on
    /// integers finds it.
    pub fn eval(&self, s: f64) -> Result<f64> {
        let floor = self.source.as_ref().map(|w| w.s_floor()).unwrap_or(f64::NEG_INFINITY);
        if !(s >= floor && s < 0.0) {
            return Err(Error::Range(format!("log-radius {s} outside [{floor}, 0)")));
        }
        let (best_idx, best) = self
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| (i, l.eval(s)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let Some(w) = &self.source else {
            return Ok(best);
        };
        let lo = self.lines[best_idx.saturating_sub(1)].slope;
        let hi = self.lines[(best_idx + 1).min(self.lines.len() - 1)].slope;
        if hi - lo <= 2 {
            return Ok(best);
        }
        let value = |n: u128| support_coefficient(w, n).eval(s);
        let refined = argmax_concave(lo, hi, value).1;
        Ok(best.max(refined))
    }

    /// CSV dump `n,log_c_n,touch_s`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,log_c_n,touch_s")?;
        for l in &self.lines {
            writeln!(
                out,
                "{},{},{}",
                l.slope,
                crate::fmt_num(l.log_intercept),
                crate::fmt_num(l.touch_s)
            )?;
        }
        Ok(())
    }
}

/// Maximiser of a concave function over representable integers in `[lo, hi]`.
pub fn argmax_concave<F: Fn(u128) -> f64>(mut lo: u128, mut hi: u128, f: F) -> (u128, f64) {
    while hi - lo > 4 {
        let third = (hi - lo) / 3;
        let m1 = representable(lo + third).max(next_representable(lo));
        let m2 = representable(hi - third).max(next_representable(m1));
        if m2 >= hi {
            break;
        }
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let mut best = (lo, f(lo));
    let mut n = lo;
    while n < hi {
        n = next_representable(n).min(hi);
        let v = f(n);
        if v > best.1 {
            best = (n, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmath::dyadic_radius;
    use crate::weights::*;

    // phi is evaluated near 2^40 for the exp family; allow rounding there.
    fn tol(phi: f64) -> f64 {
        1e-9 + 16.0 * f64::EPSILON * phi.abs()
    }

    #[test]
    fn power_weight_closed_form_coefficients() {
        let w = make_power_weight(1.0).unwrap();
        let l0 = support_coefficient(&w, 0);
        assert_eq!(l0.log_intercept, 0.0);
        let l1 = support_coefficient(&w, 1);
        assert!((l1.log_intercept - 4f64.ln()).abs() < 1e-10);
        assert!((l1.touch_s.exp() - 0.5).abs() < 1e-5);
        // c_n = (n+1) ((n+1)/n)^n at r* = n/(n+1)
        for n in [2u128, 7, 100, 5000] {
            let nf = n as f64;
            let expect = (nf + 1.0).ln() + nf * ((nf + 1.0) / nf).ln();
            let line = support_coefficient(&w, n);
            assert!((line.log_intercept - expect).abs() < 1e-9, "n = {n}");
            assert!((line.touch_s.exp() - nf / (nf + 1.0)).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_weight_lines_share_intercept() {
        let w = make_constant_weight(3.0).unwrap();
        for n in [0u128, 1, 5, 1000] {
            let l = support_coefficient(&w, n);
            assert!((l.log_intercept - 3f64.ln()).abs() < 1e-12);
            if n > 0 {
                assert!(l.at_boundary && l.touch_s > -1e-15);
            }
        }
        let env = build_envelope(&w, 64).unwrap();
        let eff: Vec<_> = env.effective_lines().collect();
        assert_eq!(eff.len(), 1);
        assert_eq!(eff[0].slope, 0);
        for s in [-3.0, -0.1, -1e-6] {
            assert!((env.eval(s).unwrap() - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_line_envelope() {
        let env = NewtonEnvelope::from_lines(vec![SupportLine {
            slope: 3,
            log_intercept: 0.0,
            touch_s: -1.0,
            at_boundary: false,
        }])
        .unwrap();
        let v = env.eval(0.5f64.ln()).unwrap();
        assert!((v + 3.0 * 2f64.ln()).abs() < 1e-15);
        assert!(env.eval(0.1).is_err());
    }

    #[test]
    fn envelope_is_squeezed_between_rw_and_w() {
        let w = make_power_weight(1.0).unwrap();
        let env = build_envelope(&w, 1024).unwrap();
        let (_, s) = dyadic_radius(8);
        let e = env.eval(s).unwrap();
        assert!(e <= w.phi(s) + 1e-9);
        assert!(e >= w.phi(s) + s - 1e-9);
        for j in 4..=12 {
            let (_, s) = dyadic_radius(j);
            let e = build_envelope(&w, 1 << 16).unwrap().eval(s).unwrap();
            assert!(e <= w.phi(s) + 1e-9 && e >= w.phi(s) + s - 1e-9, "j = {j}");
        }
    }

    #[test]
    fn duality_ordering_for_fast_growth() {
        let w = make_exp_weight(1.0, 1.0).unwrap();
        let env = build_envelope(&w, 1 << 40).unwrap();
        let eff: Vec<_> = env.effective_lines().filter(|l| l.slope > 0).collect();
        assert!(eff.len() > 100);
        for p in eff.windows(2) {
            assert!(p[1].touch_s > p[0].touch_s);
        }
    }

    #[test]
    fn minorant_and_loss_bound_on_every_family() {
        let fams = [
            make_power_weight(0.5).unwrap(),
            make_power_weight(1.0).unwrap(),
            make_power_weight(2.0).unwrap(),
            make_power_weight(5.0).unwrap(),
            make_exp_weight(1.0, 1.0).unwrap(),
            make_exp_weight(2.0, 0.5).unwrap(),
            make_log_weight(3.0).unwrap(),
            make_constant_weight(1.0).unwrap(),
        ];
        let n_max: u128 = 1 << 24;
        for w in &fams {
            let env = build_envelope(w, n_max).unwrap();
            let top = env.lines().last().unwrap();
            for line in env.lines() {
                for j in 1..=40 {
                    let (_, s) = dyadic_radius(j);
                    let p = w.phi(s);
                    assert!(line.eval(s) <= p + tol(p), "{} n={} j={j}", w.describe(), line.slope);
                }
            }
            for j in 1..=40 {
                let (_, s) = dyadic_radius(j);
                let p = w.phi(s);
                let e = env.eval(s).unwrap();
                assert!(e <= p + tol(p));
                // loss bound holds wherever the optimal slope is below n_max
                if top.at_boundary || s <= top.touch_s {
                    assert!(e >= p + s - tol(p), "{} j={j}: {e} vs {}", w.describe(), p + s);
                }
            }
        }
    }

    #[test]
    fn representable_rounding() {
        let big = (1u128 << 80) + 12345;
        let r = representable(big);
        assert!(r <= big);
        assert_eq!((r as f64) as u128, r);
        let n = next_representable(r);
        assert!(n > r && (n as f64) as u128 == n);
        assert_eq!(next_representable(7), 8);
    }

    #[test]
    fn cap_is_enforced() {
        let w = make_power_weight(1.0).unwrap();
        assert!(matches!(build_envelope(&w, EXPONENT_CAP + 1), Err(Error::Range(_))));
        assert!(matches!(build_envelope(&w, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn thinned_set_shape() {
        let s = thinned_slopes(100);
        assert_eq!(&s[..17], &(0..=16).collect::<Vec<_>>()[..]);
        assert_eq!(*s.last().unwrap(), 100);
        assert!(s.windows(2).all(|p| p[1] > p[0]));
    }
}
