//! Log-convex weights carried in log-log coordinates.
//!
//! A weight `w` on `[0, 1)` is stored through `phi(s) = log w(e^s)` for
//! `s = log r < 0`. Log-convexity of `w` is convexity of `phi`; the weight is
//! non-decreasing exactly when `phi` is. Every evaluation stays in this
//! coordinate system, so weights like `exp((1 - r)^-1)` near `r = 1 - 2^-40`
//! remain finite numbers.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmath::{log_one_minus_radius, log_radius, log_sum_exp};

/// Default relative tolerance for the hull test on sampled weights.
pub const DEFAULT_TOL_CONVEX: f64 = 1e-6;

/// Most negative log-radius at which envelope searches trust `phi`.
pub const DEFAULT_S_FLOOR: f64 = -40.0;

/// A non-decreasing, log-convex, strictly positive weight on `[0, 1)`.
#[derive(Clone, Debug)]
pub struct LogWeight {
    kind: WeightKind,
    s_floor: f64,
}

#[derive(Clone, Debug)]
enum WeightKind {
    Power { alpha: f64 },
    Exp { c: f64, beta: f64 },
    Log { gamma: f64 },
    Constant { log_a: f64 },
    Sampled(Arc<Sampled>),
    Series(Arc<Vec<(f64, f64)>>),
    Product(Arc<LogWeight>, Arc<LogWeight>),
    PowerOf(Arc<LogWeight>, f64),
}

#[derive(Debug)]
struct Sampled {
    s: Vec<f64>,
    phi: Vec<f64>,
    last_slope: f64,
}

impl Sampled {
    fn eval(&self, s: f64) -> f64 {
        let n = self.s.len();
        if s <= self.s[0] {
            return self.phi[0];
        }
        if s >= self.s[n - 1] {
            return self.phi[n - 1] + self.last_slope * (s - self.s[n - 1]);
        }
        let j = self.s.partition_point(|x| *x <= s);
        let (s0, s1) = (self.s[j - 1], self.s[j]);
        let (p0, p1) = (self.phi[j - 1], self.phi[j]);
        p0 + (p1 - p0) * (s - s0) / (s1 - s0)
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Parameter(format!("{name} must be a positive finite number, got {v}")))
    }
}

/// `w(r) = (1 - r)^(-alpha)`.
pub fn make_power_weight(alpha: f64) -> Result<LogWeight> {
    let alpha = positive("alpha", alpha)?;
    Ok(LogWeight::new(WeightKind::Power { alpha }))
}

/// `w(r) = exp(c (1 - r)^(-beta))`.
pub fn make_exp_weight(c: f64, beta: f64) -> Result<LogWeight> {
    let c = positive("c", c)?;
    let beta = positive("beta", beta)?;
    Ok(LogWeight::new(WeightKind::Exp { c, beta }))
}

/// `w(r) = (log(e / (1 - r)))^gamma`.
pub fn make_log_weight(gamma: f64) -> Result<LogWeight> {
    let gamma = positive("gamma", gamma)?;
    Ok(LogWeight::new(WeightKind::Log { gamma }))
}

/// `w(r) = A`.
pub fn make_constant_weight(a: f64) -> Result<LogWeight> {
    let a = positive("A", a)?;
    Ok(LogWeight::new(WeightKind::Constant { log_a: a.ln() }))
}

/// Piecewise-linear weight in `(log r, log w)` through user samples.
///
/// The interpolant is constant left of the first sample and continues with
/// the last slope to the right of the final one.
pub fn weight_from_samples(samples: &[(f64, f64)]) -> Result<LogWeight> {
    weight_from_samples_tol(samples, DEFAULT_TOL_CONVEX)
}

pub fn weight_from_samples_tol(samples: &[(f64, f64)], tol_convex: f64) -> Result<LogWeight> {
    if samples.len() < 3 {
        return Err(Error::Input(format!(
            "a sampled weight needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    for (i, &(r, lw)) in samples.iter().enumerate() {
        if !(r > 0.0 && r < 1.0) || !lw.is_finite() {
            return Err(Error::Input(format!("sample {i}: need 0 < r < 1 and finite log w")));
        }
        if i > 0 && r <= samples[i - 1].0 {
            return Err(Error::Input(format!("sample radii must be strictly increasing (index {i})")));
        }
    }
    let s: Vec<f64> = samples.iter().map(|p| p.0.ln()).collect();
    let phi: Vec<f64> = samples.iter().map(|p| p.1).collect();
    for i in 1..phi.len() {
        let scale = phi[i].abs().max(phi[i - 1].abs()).max(1.0);
        if phi[i] < phi[i - 1] - 1e-12 * scale {
            return Err(Error::Monotonicity { r: samples[i].0 });
        }
    }
    let pts: Vec<(f64, f64)> = s.iter().copied().zip(phi.iter().copied()).collect();
    let (dev, at) = hull_deviation(&pts);
    if dev > tol_convex {
        return Err(Error::Convexity { r: samples[at].0, deviation: dev });
    }
    let n = s.len();
    let last_slope = (phi[n - 1] - phi[n - 2]) / (s[n - 1] - s[n - 2]);
    Ok(LogWeight::new(WeightKind::Sampled(Arc::new(Sampled {
        s,
        phi,
        last_slope: last_slope.max(0.0),
    }))))
}

/// Weight given by a power series with non-negative coefficients,
/// `w(r) = sum_k exp(log_b_k) r^k`. Any such series is log-convex.
pub fn weight_from_series(coeffs: &[(f64, f64)]) -> Result<LogWeight> {
    let mut terms: Vec<(f64, f64)> = coeffs
        .iter()
        .copied()
        .filter(|(_, lb)| *lb > f64::NEG_INFINITY)
        .collect();
    if terms.is_empty() {
        return Err(Error::Input("series weight needs at least one non-zero coefficient".into()));
    }
    if terms.iter().any(|(k, lb)| *k < 0.0 || !lb.is_finite()) {
        return Err(Error::Input("series weight needs k >= 0 and finite log coefficients".into()));
    }
    if !terms.iter().any(|(k, _)| *k == 0.0) {
        return Err(Error::Input("series weight needs a positive constant term".into()));
    }
    terms.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(LogWeight::new(WeightKind::Series(Arc::new(terms))))
}

/// Pointwise product of two weights; `phi = phi1 + phi2`.
pub fn weight_product(w1: &LogWeight, w2: &LogWeight) -> LogWeight {
    if let (WeightKind::Constant { log_a: a }, WeightKind::Constant { log_a: b }) = (&w1.kind, &w2.kind) {
        return LogWeight::new(WeightKind::Constant { log_a: a + b });
    }
    let mut w = LogWeight::new(WeightKind::Product(Arc::new(w1.clone()), Arc::new(w2.clone())));
    w.s_floor = w1.s_floor.max(w2.s_floor);
    w
}

/// `w^q`; `phi` scaled by `q`.
pub fn weight_power(w: &LogWeight, q: f64) -> Result<LogWeight> {
    let q = positive("q", q)?;
    if q == 1.0 {
        return Ok(w.clone());
    }
    let kind = match &w.kind {
        WeightKind::Constant { log_a } => WeightKind::Constant { log_a: q * log_a },
        WeightKind::Power { alpha } => WeightKind::Power { alpha: q * alpha },
        WeightKind::Log { gamma } => WeightKind::Log { gamma: q * gamma },
        WeightKind::PowerOf(inner, p) => WeightKind::PowerOf(inner.clone(), p * q),
        _ => WeightKind::PowerOf(Arc::new(w.clone()), q),
    };
    let mut out = LogWeight::new(kind);
    out.s_floor = w.s_floor;
    Ok(out)
}

impl LogWeight {
    fn new(kind: WeightKind) -> Self {
        LogWeight { kind, s_floor: DEFAULT_S_FLOOR }
    }

    /// `phi(s) = log w(e^s)`, defined for `s` in `[-inf, 0)`.
    pub fn phi(&self, s: f64) -> f64 {
        match &self.kind {
            WeightKind::Power { alpha } => -alpha * log_one_minus_radius(s),
            WeightKind::Exp { c, beta } => c * (-beta * log_one_minus_radius(s)).exp(),
            WeightKind::Log { gamma } => gamma * (1.0 - log_one_minus_radius(s)).ln(),
            WeightKind::Constant { log_a } => *log_a,
            WeightKind::Sampled(sm) => sm.eval(s),
            WeightKind::Series(terms) => {
                let logs: Vec<f64> = terms
                    .iter()
                    .map(|(k, lb)| if *k == 0.0 { *lb } else { lb + k * s })
                    .collect();
                log_sum_exp(&logs)
            }
            WeightKind::Product(a, b) => a.phi(s) + b.phi(s),
            WeightKind::PowerOf(inner, q) => q * inner.phi(s),
        }
    }

    /// `log w(r)` for `r` in `[0, 1)`.
    pub fn log_w(&self, r: f64) -> f64 {
        self.phi(log_radius(r))
    }

    /// Value at the origin, `log w(0)`.
    pub fn log_w0(&self) -> f64 {
        self.phi(f64::NEG_INFINITY)
    }

    pub fn s_floor(&self) -> f64 {
        self.s_floor
    }

    pub fn with_s_floor(mut self, s_floor: f64) -> Self {
        self.s_floor = s_floor;
        self
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            WeightKind::Constant { .. } => true,
            WeightKind::Product(a, b) => a.is_constant() && b.is_constant(),
            WeightKind::PowerOf(inner, _) => inner.is_constant(),
            _ => false,
        }
    }

    pub fn kind_tag(&self) -> &'static str {
        match &self.kind {
            WeightKind::Power { .. } => "power",
            WeightKind::Exp { .. } => "exp",
            WeightKind::Log { .. } => "log",
            WeightKind::Constant { .. } => "constant",
            WeightKind::Sampled(_) => "sampled",
            WeightKind::Series(_) => "series",
            WeightKind::Product(..) => "product",
            WeightKind::PowerOf(..) => "power-of",
        }
    }

    /// Human-readable description; round-trips through [`WeightSpec`] for
    /// the parametric families.
    pub fn describe(&self) -> String {
        match &self.kind {
            WeightKind::Power { alpha } => format!("power:alpha={alpha}"),
            WeightKind::Exp { c, beta } => format!("exp:c={c},beta={beta}"),
            WeightKind::Log { gamma } => format!("log:gamma={gamma}"),
            WeightKind::Constant { log_a } => format!("const:A={}", log_a.exp()),
            WeightKind::Sampled(sm) => format!("sampled[{} points]", sm.s.len()),
            WeightKind::Series(t) => format!("series[{} terms]", t.len()),
            WeightKind::Product(a, b) => format!("product({},{})", a.describe(), b.describe()),
            WeightKind::PowerOf(w, q) => format!("pow({},{q})", w.describe()),
        }
    }
}

/// Parsed weight specification as accepted on the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum WeightSpec {
    Power { alpha: f64 },
    Exp { c: f64, beta: f64 },
    Log { gamma: f64 },
    Const { a: f64 },
    Samples { path: String },
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let (family, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Input(format!("weight spec '{spec}' lacks a ':'")))?;
        if family == "samples" {
            if rest.is_empty() {
                return Err(Error::Input("samples: needs a path".into()));
            }
            return Ok(WeightSpec::Samples { path: rest.to_string() });
        }
        let mut params = Vec::new();
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("bad parameter '{kv}' in '{spec}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("parameter {k} is not a number: '{v}'")))?;
            params.push((k.trim().to_string(), v));
        }
        let get = |name: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Input(format!("weight spec '{spec}' is missing {name}")))
        };
        let expect = |names: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !names.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::Input(format!("unknown parameter {k} in '{spec}'"))),
                None => Ok(()),
            }
        };
        let parsed = match family {
            "power" => {
                expect(&["alpha"])?;
                WeightSpec::Power { alpha: get("alpha")? }
            }
            "exp" => {
                expect(&["c", "beta"])?;
                WeightSpec::Exp { c: get("c")?, beta: get("beta")? }
            }
            "log" => {
                expect(&["gamma"])?;
                WeightSpec::Log { gamma: get("gamma")? }
            }
            "const" => {
                expect(&["A"])?;
                WeightSpec::Const { a: get("A")? }
            }
            other => return Err(Error::Input(format!("unknown weight family '{other}'"))),
        };
        // Validate parameters eagerly so parse errors surface as input errors.
        if !matches!(parsed, WeightSpec::Samples { .. }) {
            parsed.build().map_err(|e| Error::Input(e.to_string()))?;
        }
        Ok(parsed)
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Power { alpha } => write!(f, "power:alpha={alpha}"),
            WeightSpec::Exp { c, beta } => write!(f, "exp:c={c},beta={beta}"),
            WeightSpec::Log { gamma } => write!(f, "log:gamma={gamma}"),
            WeightSpec::Const { a } => write!(f, "const:A={a}"),
            WeightSpec::Samples { path } => write!(f, "samples:{path}"),
        }
    }
}

impl WeightSpec {
    pub fn build(&self) -> Result<LogWeight> {
        match self {
            WeightSpec::Power { alpha } => make_power_weight(*alpha),
            WeightSpec::Exp { c, beta } => make_exp_weight(*c, *beta),
            WeightSpec::Log { gamma } => make_log_weight(*gamma),
            WeightSpec::Const { a } => make_constant_weight(*a),
            WeightSpec::Samples { path } => weight_from_samples(&read_samples_csv(Path::new(path))?),
        }
    }
}

/// Reads a CSV with header `r,log_w`.
pub fn read_samples_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    parse_samples_csv(&text)
}

pub fn parse_samples_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Input("empty samples file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["r", "log_w"] {
        return Err(Error::Input(format!("samples header must be 'r,log_w', got '{header}'")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut it = line.split(',').map(str::trim);
            let mut next = || -> Result<f64> {
                it.next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Input(format!("samples row {} is malformed: '{line}'", i + 1)))
            };
            Ok((next()?, next()?))
        })
        .collect()
}

/// Outcome of a discrete log-convexity test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Largest scaled excess of a middle point over the chord of its neighbours.
    pub max_defect: f64,
    /// Radius of the middle point realising `max_defect`.
    pub worst_r: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Discrete convexity of `log value` against `log r` on consecutive triples.
///
/// The defect of a triple is the height of the middle point above the chord,
/// divided by `max(1, |y|)` over the triple so that curves of size `2^40`
/// are judged at the same relative precision as curves of size one.
pub fn check_log_convexity(curve: &[(f64, f64)], tol: f64) -> Result<ConvexityReport> {
    if curve.len() < 3 {
        return Err(Error::Input(format!("convexity check needs 3 points, got {}", curve.len())));
    }
    for (i, &(r, y)) in curve.iter().enumerate() {
        if !(r > 0.0) || !y.is_finite() {
            return Err(Error::Input(format!("point {i}: need r > 0 and a finite value")));
        }
        if i > 0 && r <= curve[i - 1].0 {
            return Err(Error::Input("radii must be strictly increasing".into()));
        }
    }
    let pts: Vec<(f64, f64)> = curve.iter().map(|&(r, y)| (r.ln(), y)).collect();
    let mut max_defect = f64::NEG_INFINITY;
    let mut worst_r = curve[1].0;
    for i in 1..pts.len() - 1 {
        let d = triple_defect(pts[i - 1], pts[i], pts[i + 1]);
        if d > max_defect {
            max_defect = d;
            worst_r = curve[i].0;
        }
    }
    let max_defect = max_defect.max(0.0);
    Ok(ConvexityReport { max_defect, worst_r, tol, pass: max_defect <= tol })
}

fn triple_defect(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let chord = (a.1 * (c.0 - b.0) + c.1 * (b.0 - a.0)) / (c.0 - a.0);
    let scale = a.1.abs().max(b.1.abs()).max(c.1.abs()).max(1.0);
    (b.1 - chord) / scale
}

/// Indices of the lower convex hull of points sorted by `x`.
pub fn lower_hull(points: &[(f64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        while hull.len() >= 2 {
            let a = points[hull[hull.len() - 2]];
            let b = points[hull[hull.len() - 1]];
            let c = points[i];
            // keep b only if it lies strictly below the chord a-c
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Piecewise-linear evaluation through hull vertices.
pub fn hull_eval(points: &[(f64, f64)], hull: &[usize], x: f64) -> f64 {
    let j = hull.partition_point(|&h| points[h].0 <= x);
    if j == 0 {
        return points[hull[0]].1;
    }
    if j == hull.len() {
        return points[hull[hull.len() - 1]].1;
    }
    let (a, b) = (points[hull[j - 1]], points[hull[j]]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Largest scaled height of a point above the lower hull, and where.
fn hull_deviation(points: &[(f64, f64)]) -> (f64, usize) {
    let hull = lower_hull(points);
    let mut worst = (0.0, 0);
    for (i, p) in points.iter().enumerate() {
        let h = hull_eval(points, &hull, p.0);
        let dev = (p.1 - h) / p.1.abs().max(1.0);
        if dev > worst.0 {
            worst = (dev, i);
        }
    }
    worst
}
