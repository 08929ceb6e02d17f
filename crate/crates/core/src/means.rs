//! Integral means of gap series on circles: exact `M_2`, sampled `M_p`,
//! and certified intervals for radii where sampling is out of reach.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_num;
use crate::lacunary::{GapSeries, ACTIVE_WINDOW};
use crate::logmath::{log1m_exp, log_sum_exp};
use crate::weights::{check_log_convexity, ConvexityReport, LogWeight};

/// Largest circle sample count.
pub const N_CAP: usize = 1 << 23;
/// Relative agreement required between `N/2` and `N` samples.
pub const SAMPLE_RTOL: f64 = 1e-8;

/// How a mean value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Closed form from coefficients (up to the active-window tail).
    Exact,
    /// Equispaced circle samples, convergence-checked.
    Sampled,
    /// Certified interval.
    Bounds,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Sampled => "sampled",
            Mode::Bounds => "bounds",
        })
    }
}

/// Which evaluation paths are allowed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModePolicy {
    #[default]
    Auto,
    SampledOnly,
    BoundsOnly,
}

impl FromStr for ModePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ModePolicy::Auto),
            "sampled-only" => Ok(ModePolicy::SampledOnly),
            "bounds-only" => Ok(ModePolicy::BoundsOnly),
            _ => Err(Error::Input(format!("unknown mode policy '{s}' (auto|sampled-only|bounds-only)"))),
        }
    }
}

/// Closed interval of logs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalValue {
    pub log_lo: f64,
    pub log_hi: f64,
}

impl IntervalValue {
    pub fn point(v: f64) -> Self {
        IntervalValue { log_lo: v, log_hi: v }
    }

    pub fn new(log_lo: f64, log_hi: f64) -> Result<Self> {
        if log_lo.is_nan() || log_hi.is_nan() || log_lo > log_hi {
            return Err(Error::Inconsistent(format!("interval [{log_lo}, {log_hi}] is empty")));
        }
        Ok(IntervalValue { log_lo, log_hi })
    }

    pub fn mid(&self) -> f64 {
        if self.log_lo == self.log_hi {
            self.log_lo
        } else {
            0.5 * (self.log_lo + self.log_hi)
        }
    }

    pub fn half_width(&self) -> f64 {
        if self.log_lo == self.log_hi {
            0.0
        } else {
            0.5 * (self.log_hi - self.log_lo)
        }
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v >= self.log_lo - slack && v <= self.log_hi + slack
    }
}

/// One radius of a means profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub r: f64,
    pub s: f64,
    pub value: IntervalValue,
    pub mode: Mode,
    /// Numerical uncertainty on top of the interval half-width (truncation,
    /// quadrature).
    pub numerical: f64,
}

impl ProfileEntry {
    pub fn log_value(&self) -> f64 {
        self.value.mid()
    }

    pub fn log_uncertainty(&self) -> f64 {
        self.value.half_width() + self.numerical
    }
}

/// What a profile measures.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanKind {
    Sphere,
    Volume,
    Weighted,
}

/// Means of a fixed series over a list of radii.
#[derive(Clone, Debug)]
pub struct MeansProfile {
    pub kind: MeanKind,
    /// `p` or `q`; `f64::INFINITY` for the supremum.
    pub exponent: f64,
    pub dim: usize,
    pub weighting: Option<String>,
    pub entries: Vec<ProfileEntry>,
}

impl MeansProfile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,log_value,mode,log_uncertainty")?;
        for e in &self.entries {
            writeln!(out, "{},{},{},{}", fmt_num(e.r), fmt_num(e.log_value()), e.mode, fmt_num(e.log_uncertainty()))?;
        }
        Ok(())
    }

    /// Hardy-type check on `(log r, log value)` over the point-valued entries.
    pub fn convexity(&self, tol: f64) -> Result<ConvexityReport> {
        let curve: Vec<(f64, f64)> = self
            .entries
            .iter()
            .filter(|e| e.mode != Mode::Bounds && e.r > 0.0)
            .map(|e| (e.r, e.log_value()))
            .collect();
        check_log_convexity(&curve, tol)
    }
}

fn check_s(s: f64) -> Result<()> {
    if s.is_nan() || s >= 0.0 {
        return Err(Error::Range(format!("radius must lie in [0,1), got log r = {s}")));
    }
    Ok(())
}

fn check_circle(gs: &GapSeries) -> Result<()> {
    if gs.dim != 1 {
        return Err(Error::Input(format!("circle means need a one-variable series, got dim {}", gs.dim)));
    }
    Ok(())
}

/// `log M_2(f, r)` from the coefficients, and a bound on the relative tail.
pub fn m2_exact(gs: &GapSeries, s: f64) -> Result<(f64, f64)> {
    check_s(s)?;
    let (v, unc) = gs.log_sum_sq(s);
    Ok((0.5 * v, 0.5 * unc))
}

/// Product of two precomputed factors gives `exp(2 pi i idx / N)` for `N` a
/// power of two.
struct Twiddle {
    mask: usize,
    lo_bits: u32,
    lo: Vec<Complex64>,
    hi: Vec<Complex64>,
}

impl Twiddle {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let lo_bits = bits / 2;
        let lo_len = 1usize << lo_bits;
        let hi_len = n >> lo_bits;
        let unit = |k: usize| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
        Twiddle {
            mask: lo_len - 1,
            lo_bits,
            lo: (0..lo_len).map(unit).collect(),
            hi: (0..hi_len).map(|m| unit(m << lo_bits)).collect(),
        }
    }

    #[inline]
    fn get(&self, idx: usize) -> Complex64 {
        self.hi[idx >> self.lo_bits] * self.lo[idx & self.mask]
    }
}

/// Active terms at `s`, scaled by the largest one: `(n, a_k r^{n_k} / top)`
/// with the constant as `n = 0`, plus `log top`.
fn scaled_terms(gs: &GapSeries, s: f64) -> (Vec<(u128, f64)>, f64) {
    let (range, top_term) = gs.active_range(s, ACTIVE_WINDOW);
    let top = top_term.max(gs.log_const);
    let mut out = Vec::with_capacity(range.len() + 1);
    if gs.log_const > top - ACTIVE_WINDOW {
        out.push((0u128, (gs.log_const - top).exp()));
    }
    for t in &gs.terms()[range] {
        let v = t.log_at(s) - top;
        if v > -ACTIVE_WINDOW {
            out.push((t.n, v.exp()));
        }
    }
    (out, top)
}

/// `log |f(r e^{2 pi i j / N})|` for `j = 0..N`, `N` a power of two.
pub fn circle_log_abs(gs: &GapSeries, s: f64, n_points: usize) -> Vec<f64> {
    assert!(n_points.is_power_of_two(), "circle sample count must be a power of two");
    if s == f64::NEG_INFINITY {
        return vec![gs.log_const; n_points];
    }
    let (terms, top) = scaled_terms(gs, s);
    let mask = n_points - 1;
    let tw = Twiddle::new(n_points);
    let reduced: Vec<(usize, f64)> = terms.iter().map(|&(n, c)| ((n % n_points as u128) as usize, c)).collect();
    let mut out = vec![0.0; n_points];
    out.par_chunks_mut(4096).enumerate().for_each(|(chunk, slot)| {
        let base = chunk * 4096;
        for (i, v) in slot.iter_mut().enumerate() {
            let j = base + i;
            let mut acc = Complex64::new(0.0, 0.0);
            for &(m, c) in &reduced {
                acc += tw.get(m.wrapping_mul(j) & mask) * c;
            }
            *v = top + acc.norm().ln();
        }
    });
    out
}

/// `log |f|` at the angle `2 pi (j + t) / N`, `|t| <= 1`, for refinement.
fn log_abs_offset(terms: &[(u128, f64)], top: f64, n_points: usize, j: usize, t: f64) -> f64 {
    let nn = n_points as u128;
    let mut acc = Complex64::new(0.0, 0.0);
    for &(n, c) in terms {
        let base = ((n % nn) * j as u128 % nn) as f64 / n_points as f64;
        let frac = (n as f64 / n_points as f64) * t;
        acc += Complex64::from_polar(c, 2.0 * PI * (base + frac));
    }
    top + acc.norm().ln()
}

/// `log` of the `p`-mean of `exp(samples)`, with a fixed summation order.
fn log_power_mean(samples: &[f64], p: f64, stride: usize) -> f64 {
    let top = samples.iter().step_by(stride).copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let count = samples.len().div_ceil(stride);
    let sum: f64 = samples
        .par_chunks(4096 * stride)
        .map(|c| c.iter().step_by(stride).map(|v| (p * (v - top)).exp()).sum::<f64>())
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    top + (sum / count as f64).ln() / p
}

/// Sample count rule: at least `8 n_act`, at least 64, a power of two.
pub fn resolution_for(n_act: u128) -> Option<usize> {
    let need = n_act.checked_mul(8)?.max(64);
    if need > N_CAP as u128 {
        return None;
    }
    Some((need as usize).next_power_of_two())
}

/// `log M_p(f, r)` from `n_points` circle samples (`p = inf` for the maximum).
///
/// The value with `n_points / 2` samples must agree to [`SAMPLE_RTOL`].
/// Returns `(log M_p, relative uncertainty)`.
pub fn mp_sampled(gs: &GapSeries, p: f64, s: f64, n_points: usize) -> Result<(f64, f64)> {
    check_circle(gs)?;
    check_s(s)?;
    check_p(p)?;
    if !n_points.is_power_of_two() {
        return Err(Error::Parameter(format!("sample count {n_points} must be a power of two")));
    }
    let n_act = gs.active_exponent(s);
    if n_points > N_CAP || (n_act as f64) * 8.0 > n_points as f64 {
        return Err(Error::Resolution(format!(
            "{n_points} samples cannot resolve active exponent {n_act}; use bounds mode"
        )));
    }
    let (_, tail) = gs.log_sum(s);
    let samples = circle_log_abs(gs, s, n_points);
    if p.is_infinite() {
        return Ok((refine_max(gs, s, &samples), tail));
    }
    let full = log_power_mean(&samples, p, 1);
    let half = log_power_mean(&samples, p, 2);
    let rel = ((full - half) * p).exp_m1().abs();
    if !(rel < SAMPLE_RTOL) {
        return Err(Error::Accuracy(format!(
            "p = {p} mean at log r = {s} moved by {rel:.3e} between {} and {n_points} samples",
            n_points / 2
        )));
    }
    Ok((full, tail + rel))
}

/// Sampled mean with automatic doubling up to [`N_CAP`].
pub fn mp_sampled_auto(gs: &GapSeries, p: f64, s: f64) -> Result<(f64, f64)> {
    check_circle(gs)?;
    let n_act = gs.active_exponent(s);
    let mut n = resolution_for(n_act).ok_or_else(|| {
        Error::Resolution(format!("active exponent {n_act} exceeds the sampling cap; use bounds mode"))
    })?;
    loop {
        match mp_sampled(gs, p, s, n) {
            Err(Error::Accuracy(_)) if n < N_CAP => n *= 2,
            other => return other,
        }
    }
}

fn refine_max(gs: &GapSeries, s: f64, samples: &[f64]) -> f64 {
    let n = samples.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|a, b| samples[*b].total_cmp(&samples[*a]).then(a.cmp(b)));
    let (terms, top) = scaled_terms(gs, s);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = samples[idx[0]];
    for &j in idx.iter().take(8) {
        let f = |t: f64| log_abs_offset(&terms, top, n, j, t);
        let (mut a, mut b) = (-1.0f64, 1.0f64);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..80 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = f(d);
            }
        }
        best = best.max(fc).max(fd);
    }
    best
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0) {
        return Err(Error::Parameter(format!("exponent must be positive, got {p}")));
    }
    Ok(())
}

/// Certified interval for `log M_inf(f, r)`.
///
/// Upper end: triangle inequality. Lower end: the larger of `M_2` and the
/// dominance bound `max term * (1 - rest / max term)`.
pub fn minf_bounds(gs: &GapSeries, s: f64) -> Result<IntervalValue> {
    check_circle(gs)?;
    check_s(s)?;
    let (hi, _) = gs.log_sum(s);
    if gs.is_empty() || s == f64::NEG_INFINITY {
        return Ok(IntervalValue::point(hi));
    }
    let (range, _) = gs.active_range(s, ACTIVE_WINDOW + 10.0);
    let mut logs: Vec<f64> = gs.terms()[range].iter().map(|t| t.log_at(s)).collect();
    if gs.log_const > f64::NEG_INFINITY {
        logs.push(gs.log_const);
    }
    let imax = (0..logs.len()).max_by(|a, b| logs[*a].total_cmp(&logs[*b]).then(b.cmp(a))).unwrap();
    let max = logs.swap_remove(imax);
    let rest = log_sum_exp(&logs);
    let dominance = if rest < max { max + log1m_exp(rest - max) } else { f64::NEG_INFINITY };
    let (m2, _) = m2_exact(gs, s)?;
    let lo = dominance.max(m2).min(hi);
    IntervalValue::new(lo, hi)
}

/// Hölder lower bound `(2 log M_2 - (2 - p) log M_inf) / p` for `0 < p < 2`.
pub fn mp_lower_bound_holder(m2: f64, minf_hi: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::Parameter(format!("Hölder bound needs 0 < p < 2, got {p}")));
    }
    if m2 > minf_hi + 1e-12 * m2.abs().max(1.0) {
        return Err(Error::Inconsistent(format!("log M_2 = {m2} exceeds log M_inf upper bound {minf_hi}")));
    }
    if m2 >= minf_hi {
        return Ok(m2);
    }
    Ok((2.0 * m2 - (2.0 - p) * minf_hi) / p)
}

/// Interval for `log M_p` from `M_2` and `M_inf` only.
pub fn mp_bounds(gs: &GapSeries, p: f64, s: f64) -> Result<IntervalValue> {
    check_circle(gs)?;
    check_s(s)?;
    check_p(p)?;
    let (m2, _) = m2_exact(gs, s)?;
    // positive coefficients: the maximum is attained at angle 0
    let (minf, _) = gs.log_sum(s);
    let m2 = m2.min(minf);
    if p.is_infinite() {
        return Ok(IntervalValue::point(minf));
    }
    if p == 2.0 {
        return Ok(IntervalValue::point(m2));
    }
    if p > 2.0 {
        IntervalValue::new(m2, minf)
    } else {
        IntervalValue::new(mp_lower_bound_holder(m2, minf, p)?, m2)
    }
}

/// `log M_p(f, r)` by the cheapest path allowed by `policy`.
pub fn sphere_mean(gs: &GapSeries, p: f64, s: f64, policy: ModePolicy) -> Result<ProfileEntry> {
    check_circle(gs)?;
    check_s(s)?;
    check_p(p)?;
    let r = s.exp();
    let exact = |v: f64, unc: f64, mode: Mode| ProfileEntry { r, s, value: IntervalValue::point(v), mode, numerical: unc };
    if policy != ModePolicy::SampledOnly && (p == 2.0 || p.is_infinite()) {
        let (v, unc) = if p == 2.0 { m2_exact(gs, s)? } else { gs.log_sum(s) };
        return Ok(exact(v, unc, Mode::Exact));
    }
    if gs.is_empty() || s == f64::NEG_INFINITY {
        return Ok(exact(gs.log_sum(s).0, 0.0, Mode::Exact));
    }
    if policy == ModePolicy::BoundsOnly {
        return Ok(ProfileEntry { r, s, value: mp_bounds(gs, p, s)?, mode: Mode::Bounds, numerical: gs.log_sum(s).1 });
    }
    match mp_sampled_auto(gs, p, s) {
        Ok((v, unc)) => Ok(exact(v, unc, Mode::Sampled)),
        Err(e @ (Error::Resolution(_) | Error::Accuracy(_))) => {
            if policy == ModePolicy::SampledOnly {
                Err(e)
            } else {
                Ok(ProfileEntry { r, s, value: mp_bounds(gs, p, s)?, mode: Mode::Bounds, numerical: gs.log_sum(s).1 })
            }
        }
        Err(e) => Err(e),
    }
}

/// Sphere-mean profile over the given log-radii.
pub fn sphere_profile(gs: &GapSeries, p: f64, radii_s: &[f64], policy: ModePolicy) -> Result<MeansProfile> {
    let entries = radii_s
        .iter()
        .map(|&s| sphere_mean(gs, p, s, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeansProfile { kind: MeanKind::Sphere, exponent: p, dim: gs.dim, weighting: None, entries })
}

/// Fraction of `n_points` circle samples with `|f| >= w(r) / 2`.
pub fn measure_concentration_check(gs: &GapSeries, w: &LogWeight, s: f64, n_points: usize) -> Result<f64> {
    check_circle(gs)?;
    check_s(s)?;
    let n_act = gs.active_exponent(s);
    if !n_points.is_power_of_two() || n_points > N_CAP || (n_act as f64) * 8.0 > n_points as f64 {
        return Err(Error::Resolution(format!(
            "{n_points} samples cannot resolve active exponent {n_act}; use a smaller radius"
        )));
    }
    let cut = w.phi(s) - std::f64::consts::LN_2;
    let samples = circle_log_abs(gs, s, n_points);
    let hits = samples.iter().filter(|v| **v >= cut).count();
    Ok(hits as f64 / n_points as f64)
}

/// `log` of the sum `c + sum a_k r^{n_k}` evaluated for an arbitrary
/// coefficient list `(k, log b_k)`.
pub fn log_power_series(coeffs: &[(f64, f64)], s: f64) -> f64 {
    let logs: Vec<f64> = coeffs
        .iter()
        .map(|&(k, b)| if k == 0.0 { b } else { b + k * s })
        .collect();
    log_sum_exp(&logs)
}
