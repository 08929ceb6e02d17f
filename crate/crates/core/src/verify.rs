//! End-to-end pipelines that synthesize series and measure how closely their
//! means track the target weight on a radius grid.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lacunary::{
    certificate_grid, lemma_certificate, select_for_weight, theorem_series, GapSeries, GapTerm,
    LemmaCertificate, SynthesisOptions,
};
use crate::logmath::dyadic_radius;
use crate::means::{
    circle_log_abs, resolution_for, sphere_mean, sphere_profile, MeansProfile, Mode, ModePolicy,
};
use crate::multidim::{theorem_series_ball, BallSeries};
use crate::quadrature::integrate;
use crate::volume::{
    inverse_smoothing_transform, volume_profile, volume_smoothing_transform, weighted_volume_mean,
    RadialDensity,
};
use crate::grid::RadiusGrid;
use crate::weights::{
    check_log_convexity, hull_eval, lower_hull, make_constant_weight, weight_from_samples, weight_from_series,
    weight_power, weight_product, ConvexityReport, LogWeight,
};

/// Envelope ratio (in log) above which a curve is not accepted as
/// equivalent to a log-convex weight.
pub const ENVELOPE_LOG_RATIO_MAX: f64 = std::f64::consts::LN_10;
/// Tolerance of the log-convexity oracle on computed profiles.
pub const HARDY_TOL: f64 = 1e-7;

/// One radius of an equivalence report.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridEntry {
    pub r: f64,
    pub log_ratio: f64,
    pub log_lo: f64,
    pub log_hi: f64,
    pub mode: Mode,
}

/// Measured two-sided constants of `mean / w` on a grid.
#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub pipeline: String,
    pub params: Value,
    pub grid: Vec<GridEntry>,
    pub log_c_lower: f64,
    pub log_c_upper: f64,
    pub pass: bool,
}

impl EquivalenceReport {
    pub fn new(pipeline: &str, params: Value, grid: Vec<GridEntry>) -> Self {
        let log_c_lower = grid.iter().map(|e| e.log_lo).fold(f64::INFINITY, f64::min);
        let log_c_upper = grid.iter().map(|e| e.log_hi).fold(f64::NEG_INFINITY, f64::max);
        let pass = !grid.is_empty() && log_c_lower.is_finite() && log_c_upper.is_finite();
        EquivalenceReport { pipeline: pipeline.into(), params, grid, log_c_lower, log_c_upper, pass }
    }

    /// `C_upper / C_lower`.
    pub fn spread(&self) -> f64 {
        (self.log_c_upper - self.log_c_lower).exp()
    }

    pub fn to_json(&self) -> Value {
        let grid: Vec<Value> = self
            .grid
            .iter()
            .map(|e| {
                json!({
                    "r": e.r,
                    "log_ratio": e.log_ratio,
                    "log_lo": e.log_lo,
                    "log_hi": e.log_hi,
                    "mode": e.mode,
                })
            })
            .collect();
        json!({
            "pipeline": self.pipeline,
            "params": self.params,
            "grid": grid,
            "log_C_lower": self.log_c_lower,
            "log_C_upper": self.log_c_upper,
            "pass": self.pass,
        })
    }
}

/// Grid and evaluation settings shared by the pipelines.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub synth: SynthesisOptions,
    /// Grid `r_j = 1 - 2^-j`, `j = 0..=grid_j_max`.
    pub grid_j_max: u32,
    /// Beyond this index only exact and interval evaluations are used.
    pub sampled_j_max: u32,
    pub policy: ModePolicy,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { synth: SynthesisOptions::default(), grid_j_max: 40, sampled_j_max: 14, policy: ModePolicy::Auto }
    }
}

impl VerifyOptions {
    fn policy_at(&self, j: u32) -> ModePolicy {
        if j > self.sampled_j_max && self.policy == ModePolicy::Auto {
            ModePolicy::BoundsOnly
        } else {
            self.policy
        }
    }

    fn params(&self) -> Value {
        json!({
            "lambda": self.synth.lambda,
            "theta": self.synth.theta,
            "j_max": self.grid_j_max,
            "sampled_j_max": self.sampled_j_max,
            "policy": self.policy,
        })
    }
}

fn p_label(p: f64) -> Value {
    if p.is_infinite() {
        json!("inf")
    } else {
        json!(p)
    }
}

/// Result of the one-variable equivalence pipeline.
#[derive(Clone, Debug)]
pub struct TheoremRun {
    pub series: GapSeries,
    pub reports: Vec<EquivalenceReport>,
    /// Sphere-mean profile for each `p`, aligned with `reports`.
    pub profiles: Vec<MeansProfile>,
}

/// Synthesizes `f` for `w` and measures `M_p(f, r) / w(r)` for every `p`.
pub fn theorem_verify(w: &LogWeight, p_list: &[f64], opts: &VerifyOptions) -> Result<TheoremRun> {
    let series = theorem_series(w, &opts.synth)?;
    verify_series(series, w, p_list, opts)
}

/// Measures `M_p(f, r) / w(r)` on the dyadic grid for a given series.
pub fn verify_series(series: GapSeries, w: &LogWeight, p_list: &[f64], opts: &VerifyOptions) -> Result<TheoremRun> {
    let mut reports = Vec::with_capacity(p_list.len());
    let mut profiles = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let mut entries = Vec::new();
        let mut grid = Vec::new();
        for j in 0..=opts.grid_j_max {
            let (r, s) = dyadic_radius(j);
            let e = sphere_mean(&series, p, s, opts.policy_at(j))?;
            let phi = w.phi(s);
            grid.push(GridEntry {
                r,
                log_ratio: e.log_value() - phi,
                log_lo: e.value.log_lo - phi,
                log_hi: e.value.log_hi - phi,
                mode: e.mode,
            });
            entries.push(e);
        }
        let mut params = opts.params();
        params["weight"] = json!(w.describe());
        params["p"] = p_label(p);
        reports.push(EquivalenceReport::new("theorem", params, grid));
        profiles.push(MeansProfile {
            kind: crate::means::MeanKind::Sphere,
            exponent: p,
            dim: 1,
            weighting: None,
            entries,
        });
    }
    Ok(TheoremRun { series, reports, profiles })
}

/// Term-wise, summed and parity-split certificates of the raw selection.
pub fn lemma_check(w: &LogWeight, opts: &VerifyOptions) -> Result<LemmaCertificate> {
    let raw = select_for_weight(w, &opts.synth)?;
    if raw.is_empty() {
        return Err(Error::Degenerate("weight needs no gap terms".into()));
    }
    let s_last = dyadic_radius(opts.grid_j_max).1 + 1e-300;
    let grid = certificate_grid(&raw, opts.grid_j_max, s_last);
    let lower = RadiusGrid::dyadic_range(1, opts.sampled_j_max);
    lemma_certificate(&raw, w, &grid, &lower, 4096)
}

/// Circle fractions with `|f| >= w / 2` against `1 / (2 C_0^2)`.
#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    /// `sup` over the grid of `M_inf(f, r) / w(r)`.
    pub c0: f64,
    pub threshold: f64,
    /// `(r, fraction)` at every tested radius.
    pub fractions: Vec<(f64, f64)>,
    pub min_fraction: f64,
    pub pass: bool,
}

pub fn concentration_check(f: &GapSeries, w: &LogWeight, opts: &VerifyOptions) -> Result<ConcentrationReport> {
    let log_c0 = (0..=opts.grid_j_max)
        .map(|j| {
            let s = dyadic_radius(j).1;
            f.log_sum(s).0 - w.phi(s)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let c0 = log_c0.exp();
    let threshold = 0.5 / (c0 * c0);
    let mut fractions = Vec::new();
    for j in 1..=opts.sampled_j_max {
        let (r, s) = dyadic_radius(j);
        if r < f.r0_certified {
            continue;
        }
        let Some(n) = resolution_for(f.active_exponent(s)) else { continue };
        let n = n.max(4096);
        let cut = w.phi(s) - std::f64::consts::LN_2;
        let samples = circle_log_abs(f, s, n);
        let hits = samples.iter().filter(|v| **v >= cut).count();
        fractions.push((r, hits as f64 / n as f64));
    }
    let min_fraction = fractions.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let pass = !fractions.is_empty() && min_fraction >= threshold;
    Ok(ConcentrationReport { c0, threshold, fractions, min_fraction, pass })
}

/// Largest non-decreasing, log-convex (in `log r`) minorant of a sampled
/// curve `(r, log w)`, evaluated at the sample radii (`r > 0` only).
pub fn log_convex_minorant(curve: &[(f64, f64)]) -> Result<Vec<f64>> {
    if curve.len() < 3 {
        return Err(Error::Input("curve needs at least 3 samples".into()));
    }
    for (i, &(r, y)) in curve.iter().enumerate() {
        if !(r > 0.0 && r < 1.0) || !y.is_finite() {
            return Err(Error::Input(format!("sample {i}: need 0 < r < 1 and a finite log value")));
        }
        if i > 0 && r <= curve[i - 1].0 {
            return Err(Error::Input("curve radii must be strictly increasing".into()));
        }
    }
    let pts: Vec<(f64, f64)> = curve.iter().map(|&(r, y)| (r.ln(), y)).collect();
    let hull = lower_hull(&pts);
    let h: Vec<f64> = pts.iter().map(|p| hull_eval(&pts, &hull, p.0)).collect();
    // suffix minimum flattens the decreasing part and keeps convexity
    let mut out = h.clone();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].min(out[i + 1]);
    }
    Ok(out)
}

/// Outcome of the "(i) implies (ii)" direction for a sampled curve.
#[derive(Clone, Debug)]
pub struct CorollaryMeansReport {
    /// `max log(w / g)` over all samples, `g` the log-convex minorant.
    pub envelope_log_ratio: f64,
    pub worst_r: f64,
    /// Same maximum over the first half of the samples (trend indicator).
    pub half_log_ratio: f64,
    pub holds: bool,
    /// Equivalence reports of the series synthesized for the minorant.
    pub reports: Vec<EquivalenceReport>,
}

impl CorollaryMeansReport {
    pub fn to_json(&self) -> Value {
        json!({
            "pipeline": "corollary-means",
            "envelope_log_ratio": self.envelope_log_ratio,
            "envelope_log_ratio_first_half": self.half_log_ratio,
            "worst_r": self.worst_r,
            "holds": self.holds,
            "criterion": "max envelope log-ratio on the given samples <= ln 10",
            "reports": self.reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
        })
    }
}

/// Checks whether a sampled curve is within a bounded ratio of its
/// log-convex minorant and, if so, synthesizes and verifies a series for it.
pub fn corollary_means_verify(curve: &[(f64, f64)], p_list: &[f64], opts: &VerifyOptions) -> Result<CorollaryMeansReport> {
    let g = log_convex_minorant(curve)?;
    let ratios: Vec<f64> = curve.iter().zip(&g).map(|(c, g)| c.1 - g).collect();
    let (worst, &ratio) = ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("curve is non-empty");
    let half = ratios[..ratios.len() / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let holds = ratio <= ENVELOPE_LOG_RATIO_MAX;
    let mut reports = Vec::new();
    if holds {
        let samples: Vec<(f64, f64)> = curve.iter().zip(&g).map(|(c, g)| (c.0, *g)).collect();
        let w = weight_from_samples(&samples)?;
        // synthesis looks two dyadic steps past the grid; stay inside the data
        let r_last = curve[curve.len() - 1].0;
        let covered = (-(1.0 - r_last).log2()).floor().max(0.0) as u32;
        let j_max = opts.grid_j_max.min(covered.saturating_sub(2)).max(1);
        let opts = VerifyOptions {
            synth: opts.synth.clone().with_j_max(j_max),
            grid_j_max: j_max,
            sampled_j_max: opts.sampled_j_max.min(j_max),
            policy: opts.policy,
        };
        let run = theorem_verify(&w, p_list, &opts)?;
        reports = run.reports;
        for rep in &mut reports {
            rep.pipeline = "corollary-means".into();
            rep.params["envelope_log_ratio"] = json!(ratio);
        }
    }
    Ok(CorollaryMeansReport { envelope_log_ratio: ratio, worst_r: curve[worst].0, half_log_ratio: half, holds, reports })
}

/// Reverse direction: the `M_p` profile of a given series is log-convex.
pub fn corollary_means_reverse(f: &GapSeries, p: f64, opts: &VerifyOptions) -> Result<ConvexityReport> {
    let radii: Vec<f64> = (1..=opts.sampled_j_max).map(|j| dyadic_radius(j).1).collect();
    sphere_profile(f, p, &radii, opts.policy)?.convexity(HARDY_TOL)
}

/// Result of the weighted-volume pipeline.
#[derive(Clone, Debug)]
pub struct PropositionRun {
    pub series: GapSeries,
    pub report: EquivalenceReport,
    /// Coefficients `(k, log b_k)` of `phi^q`, scaled by `1 / (2d)`.
    pub phi_q: Vec<(f64, f64)>,
    /// Coefficients `(k, log a_k)` with `sum a_k t^k ≍ w^q`.
    pub w_q: Vec<(f64, f64)>,
}

/// Series `f` with `M_{q,1/v}(f, r) ≍ w(r)` and the measured constants on
/// `r_j`, `j <= sampled_j_max`.
///
/// For `d >= 2` the circle means of the one-variable series stand in for the
/// sphere means; only the polar measure depends on `d`.
pub fn proposition_pipeline(v: &LogWeight, w: &LogWeight, q: f64, d: usize, opts: &VerifyOptions) -> Result<PropositionRun> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Parameter(format!("q must be positive and finite, got {q}")));
    }
    if d < 1 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    let stage = |step: &str, e: Error| Error::Pipeline(format!("{step}: {e}"));
    // step 1: sum a_k t^k ≍ w^q from the squared coefficients of a series for w^{q/2}
    let half = weight_power(w, q / 2.0).map_err(|e| stage("step 1", e))?;
    let h = theorem_series(&half, &opts.synth).map_err(|e| stage("step 1", e))?;
    let mut w_q = vec![(0.0, 2.0 * h.log_const)];
    w_q.extend(h.terms().iter().map(|t| (2.0 * t.n as f64, 2.0 * t.log_a)));
    // step 2: phi^q = sum (k + 2d) / (2d) a_k t^k, so that the polar
    // integral of phi^q returns sum a_k r^k with constant one
    let log_2d = ((2 * d) as f64).ln();
    let phi_q: Vec<(f64, f64)> = inverse_smoothing_transform(&w_q, d)
        .map_err(|e| stage("step 2", e))?
        .into_iter()
        .map(|(k, b)| (k, b - log_2d))
        .collect();
    // step 3: target (phi^q v)^{1/q}; the series weight is exactly log-convex
    let phi_w = weight_from_series(&phi_q).map_err(|e| stage("step 3", e))?;
    let target = weight_power(&weight_product(&phi_w, v), 1.0 / q).map_err(|e| stage("step 3", e))?;
    // step 4
    let series = theorem_series(&target, &opts.synth).map_err(|e| stage("step 4", e))?;
    let u = RadialDensity::InverseWeight(v.clone());
    let mut grid = Vec::new();
    for j in 0..=opts.sampled_j_max {
        let (r, s) = dyadic_radius(j);
        let e = weighted_volume_mean(&series, q, &u, r, d, opts.policy).map_err(|e| stage("step 4", e))?;
        let phi = w.phi(s);
        grid.push(GridEntry {
            r,
            log_ratio: e.log_value() - phi,
            log_lo: e.value.log_lo - phi,
            log_hi: e.value.log_hi - phi,
            mode: e.mode,
        });
    }
    let mut params = opts.params();
    params["v"] = json!(v.describe());
    params["w"] = json!(w.describe());
    params["q"] = json!(q);
    params["d"] = json!(d);
    params["envelope_log_ratio"] = json!(0.0);
    let report = EquivalenceReport::new("proposition", params, grid);
    Ok(PropositionRun { series, report, phi_q, w_q })
}

/// Largest relative error of `int_0^r (sum b_k t^k) t^{2d-1} dt * 2d / r^{2d}`
/// against `2d sum a_k r^k`, with `b` the inverse smoothing of `a`.
pub fn polar_algebra_check(a: &[(f64, f64)], d: usize, radii: &[f64]) -> Result<f64> {
    let b = inverse_smoothing_transform(a, d)?;
    let dd = (2 * d) as f64;
    let mut worst: f64 = 0.0;
    for &r in radii {
        let integrand = |t: f64| -> Result<f64> {
            let sum: f64 = b.iter().map(|&(k, lb)| (lb + k * t.ln()).exp()).sum();
            Ok(sum * t.powi(2 * d as i32 - 1))
        };
        let q = integrate(integrand, &[0.0, 0.5 * r, r], 1e-13, 0.0, 2000)?;
        let lhs = dd * q.value / r.powi(2 * d as i32);
        let rhs = dd * a.iter().map(|&(k, la)| (la + k * r.ln()).exp()).sum::<f64>();
        worst = worst.max(((lhs - rhs) / rhs).abs());
    }
    Ok(worst)
}

/// Forward and reverse checks for volume means.
#[derive(Clone, Debug)]
pub struct CorollaryVolumeRun {
    pub forward: PropositionRun,
    /// `d = 1`: log-convexity of the `V_q` profile.
    pub reverse_convexity: Option<ConvexityReport>,
    /// `d >= 2`: `V_q^q` against the smoothed coefficient series.
    pub reverse_ratio: Option<EquivalenceReport>,
}

pub fn corollary_volume_verify(w: &LogWeight, q: f64, d: usize, opts: &VerifyOptions) -> Result<CorollaryVolumeRun> {
    let one = make_constant_weight(1.0)?;
    let forward = proposition_pipeline(&one, w, q, d, opts)?;
    let radii: Vec<f64> = (1..=opts.sampled_j_max).map(|j| dyadic_radius(j).0).collect();
    let profile = volume_profile(&forward.series, q, &RadialDensity::One, &radii, d, opts.policy)?;
    if d == 1 {
        let report = profile.convexity(HARDY_TOL)?;
        return Ok(CorollaryVolumeRun { forward, reverse_convexity: Some(report), reverse_ratio: None });
    }
    // M_q^q ≍ phi^q = sum b_k t^k, so V_q^q ≍ sum 2d b_k / (k + 2d) r^k = sum a_k r^k
    let smoothed = volume_smoothing_transform(&forward.phi_q, d)?;
    let grid: Vec<GridEntry> = profile
        .entries
        .iter()
        .map(|e| {
            let series = crate::means::log_power_series(&smoothed, e.s);
            GridEntry {
                r: e.r,
                log_ratio: q * e.log_value() - series,
                log_lo: q * e.value.log_lo - series,
                log_hi: q * e.value.log_hi - series,
                mode: e.mode,
            }
        })
        .collect();
    let mut params = opts.params();
    params["w"] = json!(w.describe());
    params["q"] = json!(q);
    params["d"] = json!(d);
    let report = EquivalenceReport::new("corollary-volume-reverse", params, grid);
    Ok(CorollaryVolumeRun { forward, reverse_convexity: None, reverse_ratio: Some(report) })
}

/// Radii `k / 20`, `k = 1..=19`.
pub fn demo_radii() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// Profile of `(r^{-2d} int_{rB} |f|^p (1 - |z|^2)^alpha dv)^{1/p}` and its
/// log-convexity report.
pub fn alpha_weighted_demo(
    f: &GapSeries,
    p: f64,
    alpha: f64,
    d: usize,
    radii: &[f64],
) -> Result<(MeansProfile, ConvexityReport)> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let profile = volume_profile(f, p, &RadialDensity::Bergman { alpha }, radii, d, ModePolicy::Auto)?;
    let report = profile.convexity(0.0)?;
    Ok((profile, report))
}

/// A `(1 + z^m, p, alpha)` instance and its convexity defect.
#[derive(Clone, Debug, Serialize)]
pub struct AlphaInstance {
    pub m: u32,
    pub p: f64,
    pub alpha: f64,
    pub defect: f64,
    pub worst_r: f64,
}

/// First instance over `m = 1..=4`, `p ∈ {1, 2}`, `alpha ∈ {0.5, 1, 2}` whose
/// weighted profile has a convexity defect above `min_defect`.
pub fn alpha_search(min_defect: f64) -> Result<Option<AlphaInstance>> {
    for m in 1..=4u32 {
        let f = GapSeries::new(1, 0.0, vec![GapTerm { n: m as u128, log_a: 0.0 }])?;
        for p in [1.0, 2.0] {
            for alpha in [0.5, 1.0, 2.0] {
                let (_, rep) = alpha_weighted_demo(&f, p, alpha, 1, &demo_radii())?;
                if rep.max_defect > min_defect {
                    return Ok(Some(AlphaInstance { m, p, alpha, defect: rep.max_defect, worst_r: rep.worst_r }));
                }
            }
        }
    }
    Ok(None)
}

/// Ball series for `w` and `M_2(F, r) / w(r)` on `r = 0, 0.05, ..., r_max`.
pub fn ball_verify(w: &LogWeight, d: usize, seed: u64, r_max: f64) -> Result<(BallSeries, EquivalenceReport)> {
    let ball = theorem_series_ball(w, d, seed, r_max)?;
    let steps = (r_max / 0.05).round() as usize;
    let grid: Vec<GridEntry> = (0..=steps)
        .map(|i| {
            let r = (i as f64 * 0.05).min(r_max);
            let s = r.ln();
            let m2 = ball.m2_exact(s);
            let ratio = m2 - w.phi(s);
            GridEntry { r, log_ratio: ratio, log_lo: ratio, log_hi: ratio, mode: Mode::Exact }
        })
        .collect();
    let params = json!({ "weight": w.describe(), "d": d, "seed": seed, "r_max": r_max, "min_delta": ball.certificate.min_delta() });
    let report = EquivalenceReport::new("multidim", params, grid);
    Ok((ball, report))
}

/// Convexity of a sampled `(r, log value)` profile.
pub fn profile_convexity(curve: &[(f64, f64)], tol: f64) -> Result<ConvexityReport> {
    check_log_convexity(curve, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::*;

    fn quick() -> VerifyOptions {
        VerifyOptions { grid_j_max: 20, sampled_j_max: 10, ..Default::default() }
    }

    #[test]
    fn constant_weight_ratios_vanish() {
        let w = make_constant_weight(2.5).unwrap();
        let run = theorem_verify(&w, &[0.5, 2.0, f64::INFINITY], &quick()).unwrap();
        for rep in &run.reports {
            assert!(rep.pass);
            assert!(rep.log_c_lower.abs() < 1e-12 && rep.log_c_upper.abs() < 1e-12);
        }
    }

    #[test]
    fn power_weight_reports_pass() {
        let w = make_power_weight(1.0).unwrap();
        let run = theorem_verify(&w, &[0.5, 2.0, 4.0, f64::INFINITY], &quick()).unwrap();
        for (rep, prof) in run.reports.iter().zip(&run.profiles) {
            assert!(rep.pass && rep.spread() < 1e3, "{}", rep.spread());
            assert!(prof.convexity(HARDY_TOL).unwrap().pass);
        }
        let conc = concentration_check(&run.series, &w, &quick()).unwrap();
        assert!(conc.pass, "{conc:?}");
    }

    #[test]
    fn minorant_of_convex_curve_is_itself() {
        let w = make_power_weight(2.0).unwrap();
        let curve: Vec<(f64, f64)> = (1..60).map(|i| {
            let r = 1.0 - 2f64.powf(-(i as f64) / 4.0);
            (r, w.log_w(r))
        }).collect();
        let g = log_convex_minorant(&curve).unwrap();
        for (c, g) in curve.iter().zip(&g) {
            assert!((c.1 - g).abs() < 1e-12);
        }
    }

    #[test]
    fn minorant_is_monotone_and_below() {
        let curve: Vec<(f64, f64)> = (1..80).map(|i| {
            let r = i as f64 / 81.0;
            (r, (3.0 * r).sin() + r)
        }).collect();
        let g = log_convex_minorant(&curve).unwrap();
        assert!(g.windows(2).all(|p| p[1] >= p[0]));
        assert!(curve.iter().zip(&g).all(|(c, g)| *g <= c.1 + 1e-15));
    }

    #[test]
    fn polar_algebra_identity() {
        let a = vec![(0.0, 0.0), (3.0, 0.7), (10.0, -0.2), (25.0, 1.5)];
        for d in [1, 2, 3] {
            assert!(polar_algebra_check(&a, d, &[0.2, 0.5, 0.9]).unwrap() < 1e-9);
        }
    }

    #[test]
    fn trivial_proposition() {
        let one = make_constant_weight(1.0).unwrap();
        let run = proposition_pipeline(&one, &one, 1.5, 2, &quick()).unwrap();
        assert!(run.series.is_empty());
        assert!(run.report.log_c_lower.abs() < 1e-9 && run.report.log_c_upper.abs() < 1e-9);
    }

    #[test]
    fn alpha_demo_closed_form() {
        let one = GapSeries::constant(1, 0.0);
        let (prof, rep) = alpha_weighted_demo(&one, 1.0, 1.0, 1, &demo_radii()).unwrap();
        for e in &prof.entries {
            assert!((e.log_value().exp() - (1.0 - e.r * e.r / 2.0)).abs() < 1e-10);
        }
        assert!(rep.max_defect > 0.0);
    }
}
