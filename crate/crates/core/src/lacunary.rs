//! Gap series selected from the Newton envelope of a weight.
//!
//! The series `f(z) = c + sum_k a_k z^{n_k}` uses touching support
//! coefficients `a_k = c_{n_k}`, so each term is a minorant of `w`. Exponents
//! are chosen greedily: from the current line we jump to the largest slope
//! whose crossover with it stays within `log lambda` of `phi`. The resulting
//! terms are sharply ordered (at every radius the terms decay away from the
//! maximal one), which yields the summed upper bound, and splitting by parity
//! leaves one half dominated by its own maximal term, which yields the lower
//! bound on `|g_1| + |g_2|`.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::envelope::{
    build_envelope, next_representable, representable, slope_reaching, support_coefficient_between,
    NewtonEnvelope, SupportLine, EXPONENT_CAP, S_CEIL,
};
use crate::error::{Error, Result};
use crate::grid::{GridPoint, RadiusGrid};
use crate::logmath::{dyadic_radius, log_add_exp, log_sum_exp};
use crate::weights::LogWeight;

/// Allowed `log(a_k r^{n_k}) - log w(r)` in the term-wise minorant check.
pub const TERM_TOLERANCE: f64 = 1e-9;

/// Largest number of gap terms a selection may produce.
pub const MAX_TERMS: usize = 1 << 22;

/// Terms more than this many nats below the maximal term are dropped.
pub const ACTIVE_WINDOW: f64 = 40.0;

/// One term `a z^n`, stored as `(n, log a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTerm {
    pub n: u128,
    pub log_a: f64,
}

impl GapTerm {
    #[inline]
    pub fn log_at(&self, s: f64) -> f64 {
        self.log_a + self.n as f64 * s
    }

    /// `log_a + n s - phi` with the product and the leading sum evaluated
    /// error-free, so cancellation between large terms does not mask the sign.
    pub fn excess_over(&self, s: f64, phi: f64) -> f64 {
        let n = self.n as f64;
        let p = n * s;
        let p_err = n.mul_add(s, -p);
        let t = self.log_a + p;
        let bp = t - self.log_a;
        let t_err = (self.log_a - (t - bp)) + (p - bp);
        ((t - phi) + t_err) + p_err
    }
}

/// Sparse series `exp(log_const) + sum_k exp(log_a_k) z^{n_k}` with strictly
/// increasing exponents `n_k >= 1` and positive coefficients.
#[derive(Clone, Debug)]
pub struct GapSeries {
    pub dim: usize,
    pub log_const: f64,
    terms: Vec<GapTerm>,
    pub r0_certified: f64,
    /// Crossover log-radii of consecutive terms, present when they increase
    /// strictly (every term is maximal somewhere).
    crossovers: Option<Vec<f64>>,
}

/// Knobs of the greedy selection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Largest allowed drop factor of the selected envelope at crossovers.
    pub lambda: f64,
    /// Within-class tail target; dominance margin must reach `log(1/theta)`.
    pub theta: f64,
    /// Series must cover radii up to `1 - 2^-(j_max + 2)`.
    pub j_max: u32,
    pub slope_cap: u128,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { lambda: std::f64::consts::E, theta: 0.5, j_max: 40, slope_cap: EXPONENT_CAP }
    }
}

impl SynthesisOptions {
    pub fn with_j_max(mut self, j_max: u32) -> Self {
        self.j_max = j_max;
        self
    }

    pub fn with_slope_cap(mut self, cap: u128) -> Self {
        self.slope_cap = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must exceed 1, got {}", self.lambda)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Parameter(format!("theta must lie in (0,1), got {}", self.theta)));
        }
        if self.j_max > 60 {
            return Err(Error::Parameter("j_max above 60 is not supported".into()));
        }
        if self.slope_cap < 1 || self.slope_cap > EXPONENT_CAP {
            return Err(Error::Range(format!("slope cap must lie in [1, 2^100], got {}", self.slope_cap)));
        }
        Ok(())
    }

    /// Log-radius up to which terms are selected.
    pub fn s_end(&self) -> f64 {
        dyadic_radius(self.j_max + 2).1
    }
}

impl GapSeries {
    pub fn new(dim: usize, log_const: f64, terms: Vec<GapTerm>) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        if log_const.is_nan() || log_const == f64::INFINITY {
            return Err(Error::Input("constant term must be finite or zero".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.n == 0 {
                return Err(Error::Input("exponents must be positive; use log_const for n = 0".into()));
            }
            if !t.log_a.is_finite() {
                return Err(Error::Input(format!("term {i} has a non-finite log coefficient")));
            }
            if i > 0 && t.n <= terms[i - 1].n {
                return Err(Error::Input("exponents must be strictly increasing".into()));
            }
        }
        let mut gs = GapSeries { dim, log_const, terms, r0_certified: 0.0, crossovers: None };
        gs.refresh_crossovers();
        Ok(gs)
    }

    /// Constant function `exp(log_const)`.
    pub fn constant(dim: usize, log_const: f64) -> Self {
        GapSeries { dim, log_const, terms: Vec::new(), r0_certified: 0.0, crossovers: None }
    }

    fn refresh_crossovers(&mut self) {
        let xs: Vec<f64> = self
            .terms
            .windows(2)
            .map(|p| (p[0].log_a - p[1].log_a) / (p[1].n - p[0].n) as f64)
            .collect();
        let ordered = xs.windows(2).all(|p| p[1] > p[0]);
        self.crossovers = if ordered { Some(xs) } else { None };
    }

    pub fn terms(&self) -> &[GapTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Whether every term is the maximal one on some interval of radii.
    pub fn is_hull_ordered(&self) -> bool {
        self.crossovers.is_some()
    }

    /// Crossover log-radii of consecutive terms (hull-ordered series only).
    pub fn crossovers(&self) -> Option<&[f64]> {
        self.crossovers.as_deref()
    }

    /// Adds `shift` to every log coefficient, including the constant.
    pub fn scaled(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.log_const += shift;
        for t in &mut out.terms {
            t.log_a += shift;
        }
        out.refresh_crossovers();
        out
    }

    /// Index range of terms within `width` nats of the largest term at `s`,
    /// and the largest term's log. Terms outside the range are below
    /// `max - width`.
    pub fn active_range(&self, s: f64, width: f64) -> (Range<usize>, f64) {
        let n = self.terms.len();
        if n == 0 {
            return (0..0, f64::NEG_INFINITY);
        }
        if s == f64::NEG_INFINITY {
            return (0..0, f64::NEG_INFINITY);
        }
        match &self.crossovers {
            Some(xs) => {
                let peak = xs.partition_point(|x| *x < s);
                let top = self.terms[peak].log_at(s);
                let cut = top - width;
                let mut lo = peak;
                while lo > 0 && self.terms[lo - 1].log_at(s) >= cut {
                    lo -= 1;
                }
                let mut hi = peak + 1;
                while hi < n && self.terms[hi].log_at(s) >= cut {
                    hi += 1;
                }
                (lo..hi, top)
            }
            None => {
                let logs: Vec<f64> = self.terms.iter().map(|t| t.log_at(s)).collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let cut = top - width;
                let lo = logs.iter().position(|v| *v >= cut).unwrap_or(0);
                let hi = logs.iter().rposition(|v| *v >= cut).map(|i| i + 1).unwrap_or(0);
                (lo..hi, top)
            }
        }
    }

    /// Index of the largest term at `s` (ties resolved to the lower index).
    pub fn peak_index(&self, s: f64) -> Option<usize> {
        if self.terms.is_empty() || s == f64::NEG_INFINITY {
            return None;
        }
        let (range, top) = self.active_range(s, 0.0);
        range.clone().find(|&k| self.terms[k].log_at(s) >= top).or(Some(range.start))
    }

    /// `log sum_k exp(scale * log(a_k r^{n_k}))` over active terms plus the
    /// constant, with a bound on the relative truncation error (in log).
    fn log_power_sum(&self, s: f64, scale: f64) -> (f64, f64) {
        let (range, top) = self.active_range(s, ACTIVE_WINDOW / scale);
        let logs: Vec<f64> = self.terms[range.clone()].iter().map(|t| scale * t.log_at(s)).collect();
        let body = log_sum_exp(&logs);
        let total = log_add_exp(scale * self.log_const, body);
        let dropped = (self.terms.len() - range.len()) as f64;
        let unc = if dropped > 0.0 {
            (dropped.ln() + scale * top - ACTIVE_WINDOW - total).exp()
        } else {
            0.0
        };
        (total, unc)
    }

    /// `log f(r)` for `r = e^s`; with positive coefficients this is `log M_inf`.
    pub fn log_sum(&self, s: f64) -> (f64, f64) {
        self.log_power_sum(s, 1.0)
    }

    /// `log(|c|^2 + sum a_k^2 r^{2 n_k})`.
    pub fn log_sum_sq(&self, s: f64) -> (f64, f64) {
        self.log_power_sum(s, 2.0)
    }

    /// Largest exponent among terms within the active window at `s`.
    pub fn active_exponent(&self, s: f64) -> u128 {
        let (range, top) = self.active_range(s, ACTIVE_WINDOW);
        if range.is_empty() || self.log_const > top + ACTIVE_WINDOW {
            return 0;
        }
        self.terms[range.end - 1].n
    }

    /// Serialisable form matching the series file format.
    pub fn to_file(&self) -> SeriesFile {
        SeriesFile {
            dim: self.dim,
            log_const: self.log_const,
            terms: self.terms.clone(),
            r0_certified: self.r0_certified,
            run_config: None,
        }
    }

    pub fn from_file(file: SeriesFile) -> Result<Self> {
        let mut gs = GapSeries::new(file.dim, file.log_const, file.terms)?;
        gs.r0_certified = file.r0_certified;
        Ok(gs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

/// On-disk series: `{"dim", "log_const", "terms": [{"n", "log_a"}], "r0_certified"}`.
///
/// A zero constant term is written as `null`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesFile {
    pub dim: usize,
    #[serde(serialize_with = "ser_log", deserialize_with = "de_log")]
    pub log_const: f64,
    pub terms: Vec<GapTerm>,
    pub r0_certified: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

fn ser_log<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_log<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

/// Per-radius dominance margins: log of the maximal term minus log of the sum
/// of all the others.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominanceCert {
    pub radii: Vec<f64>,
    pub margins: Vec<f64>,
    pub theta_min: f64,
}

impl DominanceCert {
    pub fn certified(&self) -> bool {
        self.theta_min >= std::f64::consts::LN_2
    }

    fn from_margins(radii: Vec<f64>, margins: Vec<f64>) -> Self {
        let theta_min = margins.iter().copied().fold(f64::INFINITY, f64::min);
        DominanceCert { radii, margins, theta_min }
    }
}

/// Margin of the maximal term over every other term (constant included).
fn margin_at(gs: &GapSeries, s: f64) -> f64 {
    let (range, _) = gs.active_range(s, ACTIVE_WINDOW + 10.0);
    let mut logs: Vec<f64> = gs.terms[range].iter().map(|t| t.log_at(s)).collect();
    if gs.log_const > f64::NEG_INFINITY {
        logs.push(gs.log_const);
    }
    if logs.is_empty() {
        return f64::INFINITY;
    }
    let (imax, &max) = logs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .unwrap();
    logs.swap_remove(imax);
    max - log_sum_exp(&logs)
}

/// Dominance of the maximal term over the rest of the series at each radius.
pub fn certify_dominance(gs: &GapSeries, grid: &RadiusGrid) -> DominanceCert {
    let pts: Vec<GridPoint> = grid.positive().copied().collect();
    let margins: Vec<f64> = pts.par_iter().map(|p| margin_at(gs, p.s)).collect();
    DominanceCert::from_margins(pts.iter().map(|p| p.r).collect(), margins)
}

/// Margin inside the parity class holding the overall maximal term.
fn parity_margin_at(gs: &GapSeries, s: f64) -> f64 {
    let Some(peak) = gs.peak_index(s) else {
        return f64::INFINITY;
    };
    let (range, _) = gs.active_range(s, ACTIVE_WINDOW + 10.0);
    let top = gs.terms[peak].log_at(s);
    let rest: Vec<f64> = range
        .filter(|&k| k != peak && k % 2 == peak % 2)
        .map(|k| gs.terms[k].log_at(s))
        .collect();
    top - log_sum_exp(&rest)
}

/// Dominance certificate of the parity split: at each radius, the class
/// containing the maximal term is compared against its own other terms.
pub fn certify_parity(gs: &GapSeries, grid: &RadiusGrid) -> DominanceCert {
    let pts: Vec<GridPoint> = grid.positive().copied().collect();
    let margins: Vec<f64> = pts.par_iter().map(|p| parity_margin_at(gs, p.s)).collect();
    DominanceCert::from_margins(pts.iter().map(|p| p.r).collect(), margins)
}

/// Odd-indexed terms (1st, 3rd, ...) and even-indexed terms, both without
/// a constant term.
pub fn split_even_odd(gs: &GapSeries) -> Result<(GapSeries, GapSeries)> {
    if gs.len() < 2 {
        return Err(Error::Degenerate(format!("parity split needs 2 terms, got {}", gs.len())));
    }
    let odd: Vec<GapTerm> = gs.terms.iter().step_by(2).copied().collect();
    let even: Vec<GapTerm> = gs.terms.iter().skip(1).step_by(2).copied().collect();
    let mut g1 = GapSeries::new(gs.dim, f64::NEG_INFINITY, odd)?;
    let mut g2 = GapSeries::new(gs.dim, f64::NEG_INFINITY, even)?;
    g1.r0_certified = gs.r0_certified;
    g2.r0_certified = gs.r0_certified;
    Ok((g1, g2))
}

/// Inverse of [`split_even_odd`] on the term lists.
pub fn merge_terms(g1: &GapSeries, g2: &GapSeries, log_const: f64) -> Result<GapSeries> {
    let mut terms: Vec<GapTerm> = g1.terms.iter().chain(g2.terms.iter()).copied().collect();
    terms.sort_by_key(|t| t.n);
    GapSeries::new(g1.dim, log_const, terms)
}

/// Grid used by all certificates of a selected series: dyadic radii up to
/// `j_max` plus every crossover radius and the midpoint between consecutive
/// crossovers, all capped at `s_last`.
pub fn certificate_grid(gs: &GapSeries, j_max: u32, s_last: f64) -> RadiusGrid {
    let mut grid = RadiusGrid::dyadic(j_max);
    let xs: Vec<f64> = match gs.crossovers() {
        Some(xs) => xs.to_vec(),
        None => Vec::new(),
    };
    let mut extra: Vec<GridPoint> = Vec::with_capacity(2 * xs.len());
    for (i, &x) in xs.iter().enumerate() {
        if x < s_last {
            extra.push(GridPoint::from_s(x));
        }
        if let Some(&y) = xs.get(i + 1) {
            let m = 0.5 * (x + y);
            if m < s_last {
                extra.push(GridPoint::from_s(m));
            }
        }
    }
    grid.extend(extra);
    grid
}

struct Probe<'a> {
    w: &'a LogWeight,
    cur: SupportLine,
    log_lambda: f64,
}

impl Probe<'_> {
    /// Drop of the two-line envelope below `phi` at the crossover with `next`.
    fn drop_at_crossover(&self, next: &SupportLine) -> (f64, f64) {
        let s_c = (self.cur.log_intercept - next.log_intercept) / (next.slope - self.cur.slope) as f64;
        let s_c = s_c.min(S_CEIL);
        (self.w.phi(s_c) - self.cur.eval(s_c), s_c)
    }

    fn ok(&self, line: &SupportLine) -> bool {
        !line.at_boundary && self.drop_at_crossover(line).0 <= self.log_lambda
    }
}

/// Greedy selection of gap terms from the envelope's source weight.
///
/// Returns the un-normalised series (no constant term) with `a_k = c_{n_k}`.
pub fn select_gap_terms(env: &NewtonEnvelope, opts: &SynthesisOptions) -> Result<GapSeries> {
    opts.validate()?;
    let w = env
        .source()
        .ok_or_else(|| Error::Input("gap selection needs an envelope built from a weight".into()))?;
    // the envelope only reaches s_end; the last step may need to go past it
    let n_max = opts.slope_cap;
    let s_end = opts.s_end();
    let log_lambda = opts.lambda.ln();
    if let Some((count, s_over)) = term_budget_overrun(w, s_end, log_lambda) {
        return Err(Error::Construction {
            radius: s_over.exp(),
            reason: format!("about {count:.3e} gap terms needed, above the budget of {MAX_TERMS}; lower j_max"),
        });
    }

    let first = support_coefficient_between(w, 1, w.s_floor(), S_CEIL);
    let mut lines: Vec<SupportLine> = Vec::new();
    if !first.at_boundary {
        lines.push(first);
        let mut step: u128 = 1;
        loop {
            let cur = *lines.last().unwrap();
            if cur.touch_s >= s_end || cur.slope >= n_max {
                break;
            }
            let probe = Probe { w, cur, log_lambda };
            let at = |n: u128, hi: Option<&SupportLine>| {
                let s_hi = hi.map(|l| l.touch_s).unwrap_or(S_CEIL);
                support_coefficient_between(w, n, cur.touch_s, s_hi)
            };
            let clamp = |n: u128| representable(n.min(n_max)).max(next_representable(cur.slope));

            // bracket [lo, hi]: lo acceptable (or None), hi rejected (or None)
            let mut lo: Option<SupportLine> = None;
            let mut hi: Option<SupportLine> = None;
            let mut trial = clamp(cur.slope.saturating_add(step));
            loop {
                let line = at(trial, hi.as_ref());
                if probe.ok(&line) {
                    lo = Some(line);
                    if trial >= n_max || hi.is_some() {
                        break;
                    }
                    trial = clamp(cur.slope.saturating_add((trial - cur.slope).saturating_mul(2)));
                } else {
                    hi = Some(line);
                    if lo.is_some() || trial == next_representable(cur.slope) {
                        break;
                    }
                    trial = clamp(cur.slope + (trial - cur.slope) / 2);
                }
            }
            let chosen = match (lo, hi) {
                (Some(mut lo), Some(mut hi)) => {
                    while hi.slope - lo.slope > ((lo.slope - cur.slope) / 16).max(1) {
                        let mid = representable(lo.slope + (hi.slope - lo.slope) / 2);
                        if mid <= lo.slope || mid >= hi.slope {
                            break;
                        }
                        let line = support_coefficient_between(w, mid, lo.touch_s, hi.touch_s);
                        if probe.ok(&line) {
                            lo = line;
                        } else {
                            hi = line;
                        }
                    }
                    lo
                }
                (Some(lo), None) => lo,
                (None, Some(hi)) => {
                    // even the next integer slope is too coarse here
                    if hi.at_boundary {
                        break;
                    }
                    let (_, s_c) = probe.drop_at_crossover(&hi);
                    if s_c.exp() >= 0.9 {
                        return Err(Error::Construction {
                            radius: s_c.exp(),
                            reason: format!(
                                "slopes {} and {} cross more than log(lambda) below phi",
                                cur.slope, hi.slope
                            ),
                        });
                    }
                    hi
                }
                (None, None) => unreachable!("probe loop always classifies the trial slope"),
            };
            step = chosen.slope - cur.slope;
            lines.push(chosen);
            if lines.len() > MAX_TERMS {
                return Err(Error::Construction {
                    radius: chosen.touch_s.exp(),
                    reason: format!("more than {MAX_TERMS} gap terms needed; lower j_max"),
                });
            }
        }
    }

    let terms: Vec<GapTerm> = lines.iter().map(|l| GapTerm { n: l.slope, log_a: l.log_intercept }).collect();
    let mut gs = GapSeries::new(1, f64::NEG_INFINITY, terms)?;
    if gs.is_empty() {
        return Ok(gs);
    }

    // certify up to the end of the grid, or to the last touch when the cap stopped us
    let last_touch = lines.last().unwrap().touch_s;
    let s_last = if last_touch >= s_end { dyadic_radius(opts.j_max).1 } else { last_touch };
    let grid = certificate_grid(&gs, opts.j_max, s_last.min(dyadic_radius(opts.j_max).1) + 1e-300);
    let need = (1.0 / opts.theta).ln();
    let pts: Vec<GridPoint> = grid.positive().filter(|p| p.s <= s_last).copied().collect();
    let status: Vec<(bool, bool)> = pts
        .par_iter()
        .map(|p| {
            let margin_ok = parity_margin_at(&gs, p.s) >= need;
            let (_, top) = gs.active_range(p.s, 0.0);
            let drop_ok = w.phi(p.s) - top <= log_lambda + 1e-9;
            (margin_ok, drop_ok)
        })
        .collect();
    if let Some(bad) = pts.iter().zip(&status).find(|(p, st)| p.r >= 0.9 && !st.0) {
        return Err(Error::Construction {
            radius: bad.0.r,
            reason: "parity-class dominance margin below log(1/theta)".into(),
        });
    }
    let last_fail = status.iter().rposition(|st| !(st.0 && st.1));
    gs.r0_certified = match last_fail {
        None => pts.first().map(|p| p.r).unwrap_or(0.0),
        Some(i) if i + 1 < pts.len() => pts[i + 1].r,
        Some(i) => pts[i].r,
    };
    Ok(gs)
}

/// Estimated number of selected terms up to `s_end`, from the spacing
/// `sqrt(8 log(lambda) / phi'')` of touching points at which neighbouring lines
/// cross `log(lambda)` below `phi`. Returns the estimate and the log-radius at
/// which it passes [`MAX_TERMS`], if it does.
fn term_budget_overrun(w: &LogWeight, s_end: f64, log_lambda: f64) -> Option<(f64, f64)> {
    const STEPS: usize = 4096;
    let u_hi = (-w.s_floor().max(-20.0)).ln();
    let u_lo = (-s_end).ln();
    let du = (u_hi - u_lo) / STEPS as f64;
    let density = |u: f64| {
        let s = -u.exp();
        let h = 1e-3 * s.abs();
        let d2 = (w.phi(s + h) - 2.0 * w.phi(s) + w.phi(s - h)) / (h * h);
        if d2 > 0.0 && d2.is_finite() {
            (d2 / (8.0 * log_lambda)).sqrt() * s.abs()
        } else {
            0.0
        }
    };
    let mut total = 0.0;
    let mut prev = density(u_hi);
    for i in 1..=STEPS {
        let u = u_hi - i as f64 * du;
        let cur = density(u);
        total += 0.5 * (prev + cur) * du;
        prev = cur;
        if total > MAX_TERMS as f64 {
            let mut rest = total;
            for k in i + 1..=STEPS {
                rest += density(u_hi - k as f64 * du) * du;
            }
            return Some((rest, -u.exp()));
        }
    }
    None
}

/// Envelope sized to cover `opts`.
pub fn envelope_for(w: &LogWeight, opts: &SynthesisOptions) -> Result<NewtonEnvelope> {
    let n_max = slope_reaching(w, opts.s_end(), opts.slope_cap).max(1);
    build_envelope(w, n_max)
}

/// Un-normalised selection for a weight.
pub fn select_for_weight(w: &LogWeight, opts: &SynthesisOptions) -> Result<GapSeries> {
    let env = envelope_for(w, opts)?;
    let raw = select_gap_terms(&env, opts)?;
    tighten_intercepts(&raw, w, opts.j_max)
}

/// Lowers intercepts until every term lies on or below `log w` at every point
/// of the certificate grid where it is maximal. Intercepts found by line search
/// overshoot the exact minimum by the search error; this removes that excess.
pub fn tighten_intercepts(raw: &GapSeries, w: &LogWeight, j_max: u32) -> Result<GapSeries> {
    let s_last = dyadic_radius(j_max).1 + 1e-300;
    let mut gs = raw.clone();
    for _ in 0..32 {
        let grid = certificate_grid(&gs, j_max, s_last);
        let pts: Vec<GridPoint> = grid.positive().copied().collect();
        let hits: Vec<(usize, f64)> = pts
            .par_iter()
            .flat_map_iter(|p| {
                let phi = w.phi(p.s);
                let (range, _) = gs.active_range(p.s, 0.0);
                let terms = &gs.terms;
                range.filter_map(move |k| {
                    let e = terms[k].excess_over(p.s, phi);
                    (e > 0.0).then_some((k, e))
                })
            })
            .collect();
        if hits.is_empty() {
            return Ok(gs);
        }
        let mut terms = gs.terms.clone();
        let mut lower = vec![0.0f64; terms.len()];
        for (k, e) in hits {
            lower[k] = lower[k].max(e);
        }
        for (t, d) in terms.iter_mut().zip(&lower) {
            if *d > 0.0 {
                t.log_a = (t.log_a - 2.0 * d).next_down();
            }
        }
        let r0 = gs.r0_certified;
        gs = GapSeries::new(gs.dim, gs.log_const, terms)?;
        gs.r0_certified = r0;
    }
    Err(Error::Construction { radius: 1.0, reason: "term intercepts did not settle below the weight".into() })
}

/// Series `f` with `M_p(f, r) ≍ w(r)`: the gap selection preceded by the
/// constant 1, then scaled so that `M_2(f, r) >= w(r)` on the certificate grid.
pub fn theorem_series(w: &LogWeight, opts: &SynthesisOptions) -> Result<GapSeries> {
    let raw = select_for_weight(w, opts)?;
    normalize_with_unit_constant(&raw, w, opts.j_max)
}

/// Prepends the constant 1 and applies the `M_2` normalisation.
pub fn normalize_with_unit_constant(raw: &GapSeries, w: &LogWeight, j_max: u32) -> Result<GapSeries> {
    let mut with_one = GapSeries::new(raw.dim, 0.0, raw.terms.clone())?;
    with_one.r0_certified = raw.r0_certified;
    let grid = certificate_grid(&with_one, j_max, dyadic_radius(j_max).1 + 1e-300);
    let log_c4 = grid
        .points()
        .par_iter()
        .map(|p| with_one.log_sum_sq(p.s).0 - 2.0 * w.phi(p.s))
        .reduce(|| f64::INFINITY, f64::min);
    if !log_c4.is_finite() {
        return Err(Error::Construction { radius: 0.0, reason: "normalisation constant is not finite".into() });
    }
    Ok(with_one.scaled(-0.5 * log_c4))
}

/// Measured constants of the three inequalities satisfied by the selected terms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LemmaCertificate {
    /// Largest `log(a_k r^{n_k}) - log w(r)` over terms and grid (should be <= 0).
    pub max_term_excess: f64,
    /// Slack used for the term-wise check at the worst point.
    pub term_tolerance: f64,
    pub termwise_ok: bool,
    /// `log C_1`: max over the grid of `log sum_k a_k r^{n_k} - log w(r)`.
    pub log_c1: f64,
    /// `log C_2`: min over grid radii `>= r0` and circle angles of
    /// `log(|g_1| + |g_2|) - log w(r)`.
    pub log_c2: f64,
    /// `log C_3`: min over grid radii `>= r0` of `log sum a_k^2 r^{2n_k} - 2 log w(r)`.
    pub log_c3: f64,
    pub r0: f64,
}

/// Checks the term-wise minorant and the summed upper bound on `grid`, and the
/// parity-split lower bound on the circle grids of `lower_grid`.
pub fn lemma_certificate(
    raw: &GapSeries,
    w: &LogWeight,
    grid: &RadiusGrid,
    lower_grid: &RadiusGrid,
    circle_points: usize,
) -> Result<LemmaCertificate> {
    let pts: Vec<GridPoint> = grid.positive().copied().collect();
    let per_point: Vec<(f64, f64, f64, f64)> = pts
        .par_iter()
        .map(|p| {
            let phi = w.phi(p.s);
            let (range, _) = raw.active_range(p.s, 0.0);
            let excess = raw.terms[range].iter().map(|t| t.excess_over(p.s, phi)).fold(f64::NEG_INFINITY, f64::max);
            let tol = TERM_TOLERANCE;
            let c1 = raw.log_sum(p.s).0 - phi;
            let c3 = raw.log_sum_sq(p.s).0 - 2.0 * phi;
            (excess, tol, c1, if p.r >= raw.r0_certified { c3 } else { f64::INFINITY })
        })
        .collect();
    let mut cert = LemmaCertificate {
        max_term_excess: f64::NEG_INFINITY,
        term_tolerance: 1e-9,
        termwise_ok: true,
        log_c1: f64::NEG_INFINITY,
        log_c2: f64::INFINITY,
        log_c3: f64::INFINITY,
        r0: raw.r0_certified,
    };
    for &(excess, tol, c1, c3) in &per_point {
        if excess > cert.max_term_excess {
            cert.max_term_excess = excess;
            cert.term_tolerance = tol;
        }
        cert.termwise_ok &= excess <= tol;
        cert.log_c1 = cert.log_c1.max(c1);
        cert.log_c3 = cert.log_c3.min(c3);
    }
    if raw.len() >= 2 {
        let (g1, g2) = split_even_odd(raw)?;
        let lower: Vec<GridPoint> = lower_grid.positive().filter(|p| p.r >= raw.r0_certified).copied().collect();
        let mins: Vec<f64> = lower
            .par_iter()
            .map(|p| {
                let a = crate::means::circle_log_abs(&g1, p.s, circle_points);
                let b = crate::means::circle_log_abs(&g2, p.s, circle_points);
                let worst = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| log_add_exp(*x, *y))
                    .fold(f64::INFINITY, f64::min);
                worst - w.phi(p.s)
            })
            .collect();
        cert.log_c2 = mins.into_iter().fold(f64::INFINITY, f64::min);
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::*;

    fn opts(j: u32) -> SynthesisOptions {
        SynthesisOptions::default().with_j_max(j)
    }

    #[test]
    fn slopes_beyond_u64_round_trip() {
        let gs = GapSeries::new(1, 0.0, vec![GapTerm { n: 1 << 90, log_a: -3.5 }]).unwrap();
        let back = GapSeries::from_json(&gs.to_json().unwrap()).unwrap();
        assert_eq!(back.terms, gs.terms);
    }

    #[test]
    fn exact_excess_resolves_cancellation() {
        let t = GapTerm { n: 1 << 50, log_a: 3.0e7 };
        let s = -3.0e7 / (1u64 << 50) as f64;
        let phi = t.log_a + t.n as f64 * s;
        let exact = t.excess_over(s, phi);
        assert!(exact.abs() < 1e-7);
        let small = GapTerm { n: 3, log_a: 0.25 };
        assert!((small.excess_over(-0.5, -2.0) - (0.25 - 1.5 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn tightened_terms_sit_below_the_weight() {
        let w = make_exp_weight(1.0, 1.0).unwrap();
        let raw = select_for_weight(&w, &opts(26)).unwrap();
        let grid = certificate_grid(&raw, 26, dyadic_radius(26).1 + 1e-300);
        for p in grid.positive() {
            let phi = w.phi(p.s);
            let (range, _) = raw.active_range(p.s, 0.0);
            for k in range {
                assert!(raw.terms()[k].excess_over(p.s, phi) <= 0.0);
            }
        }
    }

    #[test]
    fn fast_growth_exceeds_the_term_budget() {
        let w = make_exp_weight(1.0, 3.0).unwrap();
        match select_for_weight(&w, &opts(40)) {
            Err(Error::Construction { radius, .. }) => assert!(radius > 0.5 && radius < 1.0),
            other => panic!("expected a construction error, got {other:?}"),
        }
        let w = make_exp_weight(1.0, 1.0).unwrap();
        let s_end = opts(40).s_end();
        assert!(term_budget_overrun(&w, s_end, 1.0).is_none());
    }

    #[test]
    fn constant_weight_gives_constant_series() {
        let w = make_constant_weight(3.0).unwrap();
        let raw = select_for_weight(&w, &opts(20)).unwrap();
        assert!(raw.is_empty());
        let f = theorem_series(&w, &opts(20)).unwrap();
        assert!(f.is_empty());
        assert!((f.log_const - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn split_and_merge() {
        let terms: Vec<GapTerm> = [2u128, 8, 32, 128].iter().map(|&n| GapTerm { n, log_a: 0.0 }).collect();
        let gs = GapSeries::new(1, 0.0, terms).unwrap();
        let (g1, g2) = split_even_odd(&gs).unwrap();
        assert_eq!(g1.terms().iter().map(|t| t.n).collect::<Vec<_>>(), vec![2, 32]);
        assert_eq!(g2.terms().iter().map(|t| t.n).collect::<Vec<_>>(), vec![8, 128]);
        assert_eq!(g1.log_const, f64::NEG_INFINITY);
        let back = merge_terms(&g1, &g2, gs.log_const).unwrap();
        assert_eq!(back.terms(), gs.terms());
        let one = GapSeries::new(1, 0.0, vec![GapTerm { n: 1, log_a: 0.0 }]).unwrap();
        assert!(matches!(split_even_odd(&one), Err(Error::Degenerate(_))));
    }

    #[test]
    fn dominance_examples() {
        let single = GapSeries::new(1, f64::NEG_INFINITY, vec![GapTerm { n: 3, log_a: 0.5 }]).unwrap();
        let cert = certify_dominance(&single, &RadiusGrid::dyadic(10));
        assert_eq!(cert.theta_min, f64::INFINITY);

        let pair = GapSeries::new(
            1,
            f64::NEG_INFINITY,
            vec![GapTerm { n: 1, log_a: 0.0 }, GapTerm { n: 2, log_a: 0.0 }],
        )
        .unwrap();
        let cert = certify_dominance(&pair, &RadiusGrid::dyadic_range(10, 30));
        // margin = -log r -> 0 as r -> 1
        let last = *cert.margins.last().unwrap();
        assert!(last > 0.0 && last < 1e-8);
        assert!((cert.margins[0] - (-(1.0 - 2f64.powi(-10)).ln())).abs() < 1e-12);
    }

    #[test]
    fn series_validation() {
        assert!(GapSeries::new(1, 0.0, vec![GapTerm { n: 0, log_a: 0.0 }]).is_err());
        let dup = vec![GapTerm { n: 4, log_a: 0.0 }, GapTerm { n: 4, log_a: 1.0 }];
        assert!(GapSeries::new(1, 0.0, dup).is_err());
        assert!(GapSeries::new(0, 0.0, vec![]).is_err());
    }

    #[test]
    fn json_format() {
        let gs = GapSeries::new(
            1,
            0.0,
            vec![GapTerm { n: 3, log_a: 2f64.ln() }, GapTerm { n: 1u128 << 80, log_a: -5.0 }],
        )
        .unwrap();
        let text = gs.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["dim"], 1);
        assert_eq!(v["terms"][0]["n"], 3);
        assert!(v["r0_certified"].is_number());
        let back = GapSeries::from_json(&text).unwrap();
        assert_eq!(back.terms(), gs.terms());

        let (g1, _) = split_even_odd(&gs).unwrap();
        let text = g1.to_json().unwrap();
        assert!(text.contains("\"log_const\": null"));
        assert_eq!(GapSeries::from_json(&text).unwrap().log_const, f64::NEG_INFINITY);
    }

    #[test]
    fn power_weight_selection_properties() {
        let w = make_power_weight(1.0).unwrap();
        let raw = select_for_weight(&w, &opts(40)).unwrap();
        assert!(raw.len() > 5);
        assert!(raw.is_hull_ordered());
        let ns: Vec<f64> = raw.terms().iter().map(|t| t.n as f64).collect();
        let ratios: Vec<f64> = ns.windows(2).map(|p| p[1] / p[0]).collect();
        // with lambda = e the crossover drop for alpha = 1 allows ratios near 20
        assert!(ratios.iter().skip(2).all(|q| *q > 2.0 && *q < 32.0), "{ratios:?}");

        let grid = certificate_grid(&raw, 40, dyadic_radius(40).1 + 1e-300);
        let cert = lemma_certificate(&raw, &w, &grid, &RadiusGrid::dyadic_range(1, 12), 4096).unwrap();
        assert!(cert.termwise_ok, "{cert:?}");
        assert!(cert.log_c1.exp() <= 20.0, "{cert:?}");
        assert!(cert.log_c2.is_finite() && cert.log_c2 > -10.0, "{cert:?}");
        assert!(certify_parity(&raw, &RadiusGrid::dyadic_range(1, 40)).certified());
    }

    #[test]
    fn theorem_series_m2_is_at_least_w() {
        let w = make_power_weight(1.0).unwrap();
        let f = theorem_series(&w, &opts(40)).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in RadiusGrid::dyadic(40).points() {
            let ratio = 0.5 * f.log_sum_sq(p.s).0 - w.phi(p.s);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        assert!(lo >= -1e-12);
        assert!((hi - lo).exp() <= 30.0, "spread {}", (hi - lo).exp());
    }

    #[test]
    fn selection_is_deterministic() {
        let w = make_log_weight(3.0).unwrap();
        let a = theorem_series(&w, &opts(30)).unwrap();
        let b = theorem_series(&w, &opts(30)).unwrap();
        assert_eq!(a.terms(), b.terms());
        assert_eq!(a.log_const, b.log_const);
    }

    #[test]
    fn bad_options() {
        let w = make_power_weight(1.0).unwrap();
        let mut o = opts(10);
        o.lambda = 1.0;
        assert!(matches!(select_for_weight(&w, &o), Err(Error::Parameter(_))));
        let mut o = opts(10);
        o.theta = 1.5;
        assert!(matches!(select_for_weight(&w, &o), Err(Error::Parameter(_))));
    }
}
