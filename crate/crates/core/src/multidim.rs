//! Gap series on the unit ball of `C^d` built from homogeneous polynomials
//! with unit sup norm on the sphere and L2 norm bounded below.
//!
//! The polynomials are random: unimodular coefficients with uniform phases,
//! each monomial scaled to unit L2 norm, then the whole polynomial divided by
//! its estimated sup norm. The ratio `delta_k = L2 / sup` is measured and
//! reported for every degree used.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fmt_num;
use crate::lacunary::{select_gap_terms, GapSeries, SynthesisOptions};
use crate::envelope::{build_envelope, slope_reaching};
use crate::weights::LogWeight;

/// Largest supported degree.
pub const MAX_DEGREE: u32 = 128;
/// Default evaluation budget of the sup-norm search.
pub const SUP_BUDGET: usize = 100_000;
/// Monte Carlo shard size; shard `c` draws from stream `c` of the seed.
pub const MC_CHUNK: usize = 4096;

/// Homogeneous polynomial `sum_alpha c_alpha z^alpha` with `|alpha| = degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomPoly {
    pub dim: usize,
    pub degree: u32,
    pub terms: Vec<(Vec<u32>, Complex64)>,
}

fn check_dim_degree(d: usize, k: u32) -> Result<()> {
    if !(2..=3).contains(&d) {
        return Err(Error::Range(format!("ball construction supports d = 2 or 3, got {d}")));
    }
    if k > MAX_DEGREE {
        return Err(Error::Range(format!("degree {k} exceeds the cap {MAX_DEGREE}; use the d = 1 mode")));
    }
    Ok(())
}

/// Multi-indices of length `d` summing to `k`, first entry descending.
pub fn multi_indices(d: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if d == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in (0..=k).rev() {
            prefix.push(a);
            rec(d - 1, k - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, k, &mut Vec::with_capacity(d), &mut out);
    out
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `log int_S |z^alpha|^2 dsigma = log((d-1)! alpha! / (d-1+|alpha|)!)`.
pub fn log_monomial_norm_sq(alpha: &[u32]) -> f64 {
    let d = alpha.len() as u32;
    let k: u32 = alpha.iter().sum();
    ln_factorial(d - 1) + alpha.iter().map(|&a| ln_factorial(a)).sum::<f64>() - ln_factorial(d - 1 + k)
}

/// A function on the unit sphere with a Wirtinger gradient, for sup search.
pub trait SphereFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: &[Complex64]) -> Complex64;
    /// `(f(z), df/dz_i)`.
    fn eval_grad(&self, z: &[Complex64]) -> (Complex64, Vec<Complex64>);
}

fn powers(z: &[Complex64], k: u32) -> Vec<Vec<Complex64>> {
    z.iter()
        .map(|&zi| {
            let mut row = Vec::with_capacity(k as usize + 1);
            let mut acc = Complex64::new(1.0, 0.0);
            for _ in 0..=k {
                row.push(acc);
                acc *= zi;
            }
            row
        })
        .collect()
}

impl HomPoly {
    pub fn zero(dim: usize, degree: u32) -> Self {
        HomPoly { dim, degree, terms: Vec::new() }
    }

    pub fn scale(&self, c: f64) -> Self {
        HomPoly {
            dim: self.dim,
            degree: self.degree,
            terms: self.terms.iter().map(|(a, v)| (a.clone(), v * c)).collect(),
        }
    }

    /// `||p||_{L2(S)}` from monomial orthogonality.
    pub fn l2_norm_sphere(&self) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| c.norm_sqr() * log_monomial_norm_sq(a).exp())
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_json(&self) -> Value {
        let coeffs: Vec<Value> = self.terms.iter().map(|(a, c)| json!([a, c.re, c.im])).collect();
        json!({ "degree": self.degree, "coeffs": coeffs })
    }

    pub fn from_json(dim: usize, v: &Value) -> Result<Self> {
        let bad = || Error::Input("malformed polynomial record".into());
        let degree = v["degree"].as_u64().ok_or_else(bad)? as u32;
        let mut terms = Vec::new();
        for c in v["coeffs"].as_array().ok_or_else(bad)? {
            let alpha: Vec<u32> = c[0]
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_u64().map(|x| x as u32).ok_or_else(bad))
                .collect::<Result<_>>()?;
            if alpha.len() != dim || alpha.iter().sum::<u32>() != degree {
                return Err(Error::Input(format!("monomial {alpha:?} is not of degree {degree} in {dim} variables")));
            }
            let re = c[1].as_f64().ok_or_else(bad)?;
            let im = c[2].as_f64().ok_or_else(bad)?;
            terms.push((alpha, Complex64::new(re, im)));
        }
        Ok(HomPoly { dim, degree, terms })
    }
}

impl SphereFunction for HomPoly {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &[Complex64]) -> Complex64 {
        let pw = powers(z, self.degree);
        self.terms
            .iter()
            .map(|(a, c)| a.iter().enumerate().fold(*c, |acc, (i, &e)| acc * pw[i][e as usize]))
            .sum()
    }

    fn eval_grad(&self, z: &[Complex64]) -> (Complex64, Vec<Complex64>) {
        let pw = powers(z, self.degree);
        let mut val = Complex64::new(0.0, 0.0);
        let mut grad = vec![Complex64::new(0.0, 0.0); self.dim];
        for (a, c) in &self.terms {
            val += a.iter().enumerate().fold(*c, |acc, (i, &e)| acc * pw[i][e as usize]);
            for (j, g) in grad.iter_mut().enumerate() {
                if a[j] == 0 {
                    continue;
                }
                let mut term = *c * a[j] as f64;
                for (i, &e) in a.iter().enumerate() {
                    let e = if i == j { e - 1 } else { e };
                    term *= pw[i][e as usize];
                }
                *g += term;
            }
        }
        (val, grad)
    }
}

/// Random homogeneous polynomial of degree `k` in `d` variables with unit
/// estimated sup norm on the sphere.
pub fn random_rw_poly(d: usize, k: u32, seed: u64) -> Result<HomPoly> {
    check_dim_degree(d, k)?;
    if k == 0 {
        return Err(Error::Range("degree must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let terms: Vec<(Vec<u32>, Complex64)> = multi_indices(d, k)
        .into_iter()
        .map(|a| {
            let theta: f64 = rng.random::<f64>() * 2.0 * PI;
            let scale = (-0.5 * log_monomial_norm_sq(&a)).exp();
            (a, Complex64::from_polar(scale, theta))
        })
        .collect();
    let raw = HomPoly { dim: d, degree: k, terms };
    let sup = sup_norm_sphere(&raw, SUP_BUDGET);
    Ok(raw.scale(1.0 / sup))
}

/// Point `i >= 1` of the Halton sequence in base `b`.
fn halton(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];

fn normalize(z: &mut [Complex64]) {
    let n = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in z.iter_mut() {
        *c /= n;
    }
}

/// Quasi-random point `i >= 1` on the sphere of `C^d`.
fn halton_sphere(i: u64, d: usize) -> Vec<Complex64> {
    let mut z: Vec<Complex64> = (0..d)
        .map(|j| {
            let u1 = halton(i, PRIMES[2 * j]);
            let u2 = halton(i, PRIMES[2 * j + 1]);
            let rad = (-2.0 * u1.ln()).sqrt();
            Complex64::from_polar(rad, 2.0 * PI * u2)
        })
        .collect();
    normalize(&mut z);
    z
}

/// Projected ascent of `|f|` on the sphere from `z`.
fn ascend<F: SphereFunction + ?Sized>(f: &F, mut z: Vec<Complex64>) -> f64 {
    let mut val = f.eval(&z).norm();
    let mut step = 0.1;
    for _ in 0..500 {
        let (v, grad) = f.eval_grad(&z);
        // d|f|^2 / d conj(z_i) = f * conj(df/dz_i)
        let mut g: Vec<Complex64> = grad.iter().map(|gi| v * gi.conj()).collect();
        let radial: Complex64 = g.iter().zip(&z).map(|(gi, zi)| gi * zi.conj()).sum();
        for (gi, zi) in g.iter_mut().zip(&z) {
            *gi -= radial * zi;
        }
        let gn = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if gn <= 1e-15 * val.max(1e-300) {
            break;
        }
        loop {
            let mut trial: Vec<Complex64> = z.iter().zip(&g).map(|(zi, gi)| zi + gi * (step / gn)).collect();
            normalize(&mut trial);
            let tv = f.eval(&trial).norm();
            if tv > val {
                z = trial;
                val = tv;
                step = (step * 1.5).min(1.0);
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return val;
            }
        }
    }
    val
}

/// Lower estimate of `sup_{|z|=1} |f(z)|`: quasi-random search over `budget`
/// points, then local ascent from the best 8.
pub fn sup_norm_sphere<F: SphereFunction + ?Sized>(f: &F, budget: usize) -> f64 {
    let d = f.dim();
    let mut vals: Vec<(f64, u64)> = (1..=budget as u64)
        .into_par_iter()
        .map(|i| (f.eval(&halton_sphere(i, d)).norm(), i))
        .collect();
    vals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let starts: Vec<u64> = vals.iter().take(8).map(|v| v.1).collect();
    let refined = starts
        .par_iter()
        .map(|&i| ascend(f, halton_sphere(i, d)))
        .reduce(|| 0.0, f64::max);
    refined.max(vals.first().map(|v| v.0).unwrap_or(0.0))
}

/// Measured ratios of the polynomials used by a ball series.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RWCertificate {
    pub entries: Vec<RWEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RWEntry {
    pub k: u32,
    pub sup_estimate: f64,
    pub l2: f64,
    pub delta: f64,
}

impl RWCertificate {
    pub fn for_polys(polys: &[HomPoly], budget: usize) -> Self {
        let entries = polys
            .iter()
            .map(|p| {
                let sup = sup_norm_sphere(p, budget);
                let l2 = p.l2_norm_sphere();
                RWEntry { k: p.degree, sup_estimate: sup, l2, delta: l2 / sup }
            })
            .collect();
        RWCertificate { entries }
    }

    pub fn min_delta(&self) -> f64 {
        self.entries.iter().map(|e| e.delta).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,sup_estimate,l2,delta")?;
        for e in &self.entries {
            writeln!(out, "{},{},{},{}", e.k, fmt_num(e.sup_estimate), fmt_num(e.l2), fmt_num(e.delta))?;
        }
        Ok(())
    }
}

/// `F(z) = exp(log_const) + sum_k a_k W_{n_k}(z)` on the ball of `C^d`.
#[derive(Clone, Debug)]
pub struct BallSeries {
    pub series: GapSeries,
    pub polys: Vec<HomPoly>,
    pub certificate: RWCertificate,
}

/// `F` dilated to the sphere of radius `r`.
struct Dilated<'a> {
    ball: &'a BallSeries,
    /// `exp(log a_k) r^{n_k}`, aligned with `ball.polys`.
    weights: Vec<f64>,
    constant: f64,
}

impl<'a> Dilated<'a> {
    fn new(ball: &'a BallSeries, s: f64, shift: f64) -> Self {
        let weights = ball.series.terms().iter().map(|t| (t.log_at(s) - shift).exp()).collect();
        Dilated { ball, weights, constant: (ball.series.log_const - shift).exp() }
    }
}

impl SphereFunction for Dilated<'_> {
    fn dim(&self) -> usize {
        self.ball.series.dim
    }

    fn eval(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(self.constant, 0.0);
        for (p, w) in self.ball.polys.iter().zip(&self.weights) {
            acc += p.eval(z) * w;
        }
        acc
    }

    fn eval_grad(&self, z: &[Complex64]) -> (Complex64, Vec<Complex64>) {
        let mut val = Complex64::new(self.constant, 0.0);
        let mut grad = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (p, w) in self.ball.polys.iter().zip(&self.weights) {
            let (v, g) = p.eval_grad(z);
            val += v * w;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b * w;
            }
        }
        (val, grad)
    }
}

impl BallSeries {
    pub fn dim(&self) -> usize {
        self.series.dim
    }

    /// `F(z)` at a point of the ball.
    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        Dilated::new(self, 0.0, 0.0).eval(z)
    }

    /// `log M_2(F, r)` by orthogonality.
    pub fn m2_exact(&self, s: f64) -> f64 {
        let mut logs = vec![2.0 * self.series.log_const];
        for (t, p) in self.series.terms().iter().zip(&self.polys) {
            logs.push(2.0 * (t.log_at(s) + p.l2_norm_sphere().ln()));
        }
        0.5 * crate::logmath::log_sum_exp(&logs)
    }

    /// `log(|c| + sum a_k r^{n_k})`, the triangle-inequality bound of `M_inf`
    /// for unit-sup polynomials.
    pub fn log_upper(&self, s: f64) -> f64 {
        self.series.log_sum(s).0
    }

    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self.series.to_file())?;
        if let Some(terms) = v["terms"].as_array_mut() {
            for (t, p) in terms.iter_mut().zip(&self.polys) {
                t["poly"] = p.to_json();
            }
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let file: crate::lacunary::SeriesFile = serde_json::from_value(v.clone())?;
        let dim = file.dim;
        let series = GapSeries::from_file(file)?;
        let mut polys = Vec::new();
        for (t, raw) in series.terms().iter().zip(v["terms"].as_array().into_iter().flatten()) {
            let p = HomPoly::from_json(dim, &raw["poly"])?;
            if p.degree as u128 != t.n {
                return Err(Error::Input(format!("polynomial degree {} does not match exponent {}", p.degree, t.n)));
            }
            polys.push(p);
        }
        if polys.len() != series.len() {
            return Err(Error::Input("every term of a ball series needs a polynomial".into()));
        }
        let certificate = RWCertificate::for_polys(&polys, SUP_BUDGET);
        Ok(BallSeries { series, polys, certificate })
    }
}

/// `F = 1 + sum_k a_k W_{n_k}` with `(a_k, n_k)` from the one-variable gap
/// selection capped at degree 128, covering radii up to `r_max`.
pub fn theorem_series_ball(w: &LogWeight, d: usize, seed: u64, r_max: f64) -> Result<BallSeries> {
    check_dim_degree(d, 0)?;
    if !(r_max > 0.0 && r_max < 1.0) {
        return Err(Error::Range(format!("r_max must lie in (0,1), got {r_max}")));
    }
    let cap = MAX_DEGREE as u128;
    let needed = slope_reaching(w, r_max.ln(), 1 << 40);
    if needed > cap {
        return Err(Error::Range(format!(
            "reaching r = {r_max} needs degree {needed} > {MAX_DEGREE}; use the d = 1 mode"
        )));
    }
    let opts = SynthesisOptions::default().with_slope_cap(cap);
    let env = build_envelope(w, cap)?;
    let raw = select_gap_terms(&env, &opts)?;
    let mut series = GapSeries::new(d, 0.0, raw.terms().to_vec())?;
    series.r0_certified = raw.r0_certified;
    let polys = series
        .terms()
        .iter()
        .map(|t| random_rw_poly(d, t.n as u32, seed))
        .collect::<Result<Vec<_>>>()?;
    let certificate = RWCertificate::for_polys(&polys, SUP_BUDGET);
    Ok(BallSeries { series, polys, certificate })
}

/// Monte Carlo estimate with its standard error, both in log scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub log_value: f64,
    pub log_se: f64,
}

fn sphere_sample(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
    let mut z: Vec<Complex64> = (0..d)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    normalize(&mut z);
    z
}

/// Sum of `g` over `m` uniform sphere samples, sharded deterministically.
fn mc_sum<T, G>(d: usize, m: usize, seed: u64, g: G) -> Vec<T>
where
    T: Send,
    G: Fn(&[Complex64]) -> T + Sync,
{
    let shards = m.div_ceil(MC_CHUNK);
    (0..shards)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            (0..len).map(|_| g(&sphere_sample(&mut rng, d))).collect::<Vec<T>>()
        })
        .collect()
}

/// `log M_p(F, r)` by Monte Carlo over `m` uniform sphere points (`p = inf`
/// uses the sup search on the dilated series).
pub fn mp_sphere_sampled(ball: &BallSeries, p: f64, r: f64, m: usize, seed: u64) -> Result<McEstimate> {
    if !(p > 0.0) {
        return Err(Error::Parameter(format!("exponent must be positive, got {p}")));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Range(format!("radius must lie in [0,1), got {r}")));
    }
    if m < 10_000 {
        return Err(Error::Parameter(format!("Monte Carlo needs at least 10^4 samples, got {m}")));
    }
    let s = r.ln();
    let shift = ball.log_upper(s);
    let dil = Dilated::new(ball, s, shift);
    if ball.series.is_empty() {
        return Ok(McEstimate { log_value: ball.series.log_const, log_se: 0.0 });
    }
    if p.is_infinite() {
        let sup = sup_norm_sphere(&dil, SUP_BUDGET);
        return Ok(McEstimate { log_value: shift + sup.ln(), log_se: 0.0 });
    }
    let vals = mc_sum(ball.dim(), m, seed, |z| dil.eval(z).norm().powf(p));
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    Ok(McEstimate { log_value: shift + mean.ln() / p, log_se: se / (p * mean) })
}

/// Monte Carlo `<p1, p2>_{L2(S)}` with the standard error of each component.
pub fn mc_inner_product(p1: &HomPoly, p2: &HomPoly, m: usize, seed: u64) -> (Complex64, f64) {
    let vals = mc_sum(p1.dim, m, seed, |z| p1.eval(z) * p2.eval(z).conj());
    let n = vals.len() as f64;
    let mean: Complex64 = vals.iter().sum::<Complex64>() / n;
    let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
