//! `gapmeans`: synthesis, evaluation and verification of gap series whose
//! integral means follow a prescribed weight.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gapmeans_core::lacunary::{envelope_for, theorem_series};
use gapmeans_core::logmath::dyadic_radius;
use gapmeans_core::means::{sphere_profile, MeanKind, ModePolicy, ProfileEntry};
use gapmeans_core::multidim::{mp_sphere_sampled, BallSeries};
use gapmeans_core::verify::{alpha_search, alpha_weighted_demo, ball_verify, demo_radii, verify_series, VerifyOptions};
use gapmeans_core::volume::{volume_profile, RadialDensity};
use gapmeans_core::weights::check_log_convexity;
use gapmeans_core::{Error, GapSeries, IntervalValue, MeansProfile, Mode, Result, SynthesisOptions, WeightSpec};
use serde_json::{json, Value};

use output::{emit_csv, emit_json, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "gapmeans", version, about = "Gap series with prescribed integral means")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GAPMEANS_THREADS")]
    threads: Option<usize>,

    /// Seed for randomized steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Evaluation policy: auto, sampled-only or bounds-only.
    #[arg(long, global = true, default_value = "auto", value_parser = parse_policy)]
    mode: ModePolicy,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the series for a weight and write it as JSON.
    Synthesize {
        #[arg(long, value_parser = parse_weight)]
        weight: WeightSpec,
        /// Last dyadic index `j` of `r_j = 1 - 2^-j` the series must cover.
        #[arg(long, default_value_t = 40)]
        jmax: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure `M_p(f, r) / w(r)` on the dyadic grid and report the constants.
    Verify {
        #[arg(long, value_parser = parse_weight)]
        weight: WeightSpec,
        /// Comma-separated exponents; `inf` for the supremum.
        #[arg(long, value_delimiter = ',', default_value = "2", value_parser = parse_exponent)]
        p: Vec<f64>,
        #[arg(long, default_value_t = 40)]
        jmax: u32,
        /// Indices above this use exact or interval evaluation in auto mode.
        #[arg(long, default_value_t = 14)]
        sampled_jmax: u32,
        /// Verify this series instead of synthesizing one.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sphere means `M_p(f, r)` of a series file.
    Means {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, value_parser = parse_exponent)]
        p: f64,
        #[command(flatten)]
        radii: Radii,
        /// Monte Carlo samples for several-variable series.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Volume means `V_q(f, r)` over the ball of `C^d`.
    Volume {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, value_parser = parse_positive)]
        q: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[command(flatten)]
        radii: Radii,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted volume means with a radial density.
    Weighted {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, value_parser = parse_positive)]
        q: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// `one`, `bergman:alpha=A`, `weight:<spec>` or `inverse:<spec>`.
        #[arg(long, default_value = "one")]
        u: String,
        #[command(flatten)]
        radii: Radii,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Log-convexity of a profile CSV (`r,log_value[,mode,...]`) in `log r`.
    Convexity {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Support lines `(n, log c_n, touch)` of a weight.
    Envelope {
        #[arg(long, value_parser = parse_weight)]
        weight: WeightSpec,
        #[arg(long, default_value_t = 40)]
        jmax: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ball series in `C^d` built from random homogeneous polynomials.
    Multidim {
        #[arg(long, value_parser = parse_weight)]
        weight: WeightSpec,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0.95)]
        r_max: f64,
        /// Ball series JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Equivalence report of `M_2(F, r) / w(r)`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Table of `delta_k` for the polynomials used.
        #[arg(long)]
        deltas: Option<PathBuf>,
    },
    /// Weighted means with density `(1 - |z|^2)^alpha` that fail log-convexity.
    DemoAlpha {
        /// Evaluate this series instead of searching the built-in family.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
        p: f64,
        #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1e-4)]
        min_defect: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Radii as a dyadic grid `j = 0..=jmax`, explicit values, or both.
#[derive(Args, Debug)]
struct Radii {
    #[arg(long)]
    jmax: Option<u32>,
    /// Comma-separated radii in `[0, 1)`.
    #[arg(long, value_delimiter = ',')]
    r: Vec<f64>,
}

impl Radii {
    fn resolve(&self) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = match self.jmax {
            Some(j) => (0..=j).map(|j| dyadic_radius(j).0).collect(),
            None if self.r.is_empty() => (0..=14).map(|j| dyadic_radius(j).0).collect(),
            None => Vec::new(),
        };
        for &r in &self.r {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Input(format!("radius {r} is outside [0, 1)")));
            }
            out.push(r);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        Ok(out)
    }

    fn effective_jmax(&self) -> Option<u32> {
        self.jmax.or(if self.r.is_empty() { Some(14) } else { None })
    }
}

fn parse_policy(s: &str) -> std::result::Result<ModePolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_weight(s: &str) -> std::result::Result<WeightSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_exponent(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("exponent must be positive, got {s}"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    parse_exponent(s).and_then(|v| if v.is_finite() { Ok(v) } else { Err(format!("'{s}' must be finite")) })
}

fn parse_density(s: &str) -> Result<RadialDensity> {
    if s == "one" {
        return Ok(RadialDensity::One);
    }
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| Error::Input(format!("density '{s}' must be one, bergman:alpha=A, weight:<spec> or inverse:<spec>")))?;
    match kind {
        "bergman" => {
            let alpha = rest
                .strip_prefix("alpha=")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|a| *a > 0.0 && a.is_finite())
                .ok_or_else(|| Error::Input(format!("bad Bergman exponent in '{s}'")))?;
            Ok(RadialDensity::Bergman { alpha })
        }
        "weight" => Ok(RadialDensity::Weight(rest.parse::<WeightSpec>()?.build()?)),
        "inverse" => Ok(RadialDensity::InverseWeight(rest.parse::<WeightSpec>()?.build()?)),
        other => Err(Error::Input(format!("unknown density kind '{other}'"))),
    }
}

fn input_error(e: Error) -> Error {
    match e {
        Error::Io(_) | Error::Json(_) => Error::Input(e.to_string()),
        other => other,
    }
}

enum Loaded {
    Circle(GapSeries),
    Ball(BallSeries),
}

fn load_series(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let dim = v["dim"].as_u64().ok_or_else(|| Error::Input(format!("{}: missing 'dim'", path.display())))?;
    if dim >= 2 {
        Ok(Loaded::Ball(BallSeries::from_json(&text).map_err(input_error)?))
    } else {
        Ok(Loaded::Circle(GapSeries::from_json(&text).map_err(input_error)?))
    }
}

fn load_circle(path: &Path) -> Result<GapSeries> {
    match load_series(path)? {
        Loaded::Circle(gs) => Ok(gs),
        Loaded::Ball(_) => Err(Error::Input(format!("{}: expected a one-variable series", path.display()))),
    }
}

fn profile_csv(profile: &MeansProfile) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    profile.write_csv(&mut buf)?;
    Ok(buf)
}

fn p_json(p: f64) -> Value {
    if p.is_infinite() {
        json!("inf")
    } else {
        json!(p)
    }
}

/// Outcome of a command: `Ok(true)` passes, `Ok(false)` is a verification failure.
type Outcome = Result<bool>;

fn synthesize(cli: &Cli, weight: &WeightSpec, jmax: u32, out: Option<&PathBuf>) -> Outcome {
    let w = weight.build().map_err(input_error)?;
    let f = theorem_series(&w, &SynthesisOptions::default().with_j_max(jmax))?;
    let cfg = RunConfig::new("synthesize", cli.seed, cli.mode)
        .weight(weight)
        .grid(Some(jmax), &[])
        .output(out);
    let mut file = f.to_file();
    file.run_config = Some(cfg.to_value());
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    output::emit(out.map(|p| p.as_path()), &text)?;
    eprintln!("terms: {}", f.len());
    eprintln!("r0_certified: {}", f.r0_certified);
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn verify(
    cli: &Cli,
    weight: &WeightSpec,
    p: &[f64],
    jmax: u32,
    sampled_jmax: u32,
    series: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Outcome {
    let w = weight.build().map_err(input_error)?;
    let opts = VerifyOptions {
        synth: SynthesisOptions::default().with_j_max(jmax),
        grid_j_max: jmax,
        sampled_j_max: sampled_jmax,
        policy: cli.mode,
    };
    let f = match series {
        Some(path) => load_circle(path)?,
        None => theorem_series(&w, &opts.synth)?,
    };
    let run = verify_series(f, &w, p, &opts)?;
    let pass = run.reports.iter().all(|r| r.pass);
    for (rep, &p) in run.reports.iter().zip(p) {
        eprintln!(
            "p={p}: log_C_lower={:.6} log_C_upper={:.6} spread={:.4} {}",
            rep.log_c_lower,
            rep.log_c_upper,
            rep.spread(),
            if rep.pass { "pass" } else { "FAIL" }
        );
    }
    let cfg = RunConfig::new("verify", cli.seed, cli.mode)
        .weight(weight)
        .grid(Some(jmax), &[])
        .param("p", p.iter().map(|&p| p_json(p)).collect::<Vec<_>>())
        .param("sampled_jmax", sampled_jmax)
        .param("series", series.map(|p| p.display().to_string()))
        .output(out);
    let doc = json!({
        "pipeline": "theorem",
        "pass": pass,
        "terms": run.series.len(),
        "reports": run.reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
    });
    emit_json(out.map(|p| p.as_path()), doc, &cfg)?;
    Ok(pass)
}

fn means(cli: &Cli, series: &Path, p: f64, radii: &Radii, samples: usize, out: Option<&PathBuf>) -> Outcome {
    let rs = radii.resolve()?;
    let profile = match load_series(series)? {
        Loaded::Circle(gs) => {
            let ss: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
            sphere_profile(&gs, p, &ss, cli.mode)?
        }
        Loaded::Ball(ball) => {
            let mut entries = Vec::with_capacity(rs.len());
            for &r in &rs {
                let s = r.ln();
                let entry = if p == 2.0 && cli.mode != ModePolicy::SampledOnly {
                    ProfileEntry { r, s, value: IntervalValue::point(ball.m2_exact(s)), mode: Mode::Exact, numerical: 0.0 }
                } else if p.is_infinite() {
                    return Err(Error::Input("the supremum is not available for several-variable series".into()));
                } else {
                    let mc = mp_sphere_sampled(&ball, p, r, samples, cli.seed)?;
                    ProfileEntry { r, s, value: IntervalValue::point(mc.log_value), mode: Mode::Sampled, numerical: mc.log_se }
                };
                entries.push(entry);
            }
            MeansProfile { kind: MeanKind::Sphere, exponent: p, dim: ball.series.dim, weighting: None, entries }
        }
    };
    let cfg = RunConfig::new("means", cli.seed, cli.mode)
        .grid(radii.effective_jmax(), &radii.r)
        .param("series", series.display().to_string())
        .param("p", p_json(p))
        .param("samples", samples)
        .output(out);
    emit_csv(out.map(|p| p.as_path()), &profile_csv(&profile)?, &cfg)?;
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn volume(
    cli: &Cli,
    command: &'static str,
    series: &Path,
    q: f64,
    d: usize,
    u: &str,
    radii: &Radii,
    out: Option<&PathBuf>,
) -> Outcome {
    let gs = load_circle(series)?;
    let density = parse_density(u)?;
    let rs = radii.resolve()?;
    let profile = volume_profile(&gs, q, &density, &rs, d, cli.mode)?;
    let mut cfg = RunConfig::new(command, cli.seed, cli.mode)
        .grid(radii.effective_jmax(), &radii.r)
        .param("series", series.display().to_string())
        .param("q", q)
        .param("d", d);
    if command == "weighted" {
        cfg = cfg.param("u", u);
    }
    emit_csv(out.map(|p| p.as_path()), &profile_csv(&profile)?, &cfg.output(out))?;
    Ok(true)
}

fn read_profile(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Input(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ir, iv) = match (col("r"), col("log_value")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Input(format!("{}: header needs 'r' and 'log_value'", path.display()))),
    };
    let im = col("mode");
    let mut curve = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Input(format!("{}: row {} is malformed", path.display(), i + 1)))
        };
        let (r, v) = (num(ir)?, num(iv)?);
        let bounds = im.and_then(|k| rec.get(k)).map(|m| m.trim() == "bounds").unwrap_or(false);
        if r > 0.0 && !bounds {
            curve.push((r, v));
        }
    }
    Ok(curve)
}

fn convexity(cli: &Cli, profile: &Path, tol: f64, out: Option<&PathBuf>) -> Outcome {
    let curve = read_profile(profile)?;
    let rep = check_log_convexity(&curve, tol).map_err(input_error)?;
    eprintln!("max defect {:e} at r = {} ({})", rep.max_defect, rep.worst_r, if rep.pass { "pass" } else { "FAIL" });
    let cfg = RunConfig::new("convexity", cli.seed, cli.mode)
        .param("profile", profile.display().to_string())
        .param("tol", tol)
        .output(out);
    emit_json(out.map(|p| p.as_path()), serde_json::to_value(&rep)?, &cfg)?;
    Ok(rep.pass)
}

fn envelope(cli: &Cli, weight: &WeightSpec, jmax: u32, out: Option<&PathBuf>) -> Outcome {
    let w = weight.build().map_err(input_error)?;
    let env = envelope_for(&w, &SynthesisOptions::default().with_j_max(jmax))?;
    let mut buf = Vec::new();
    env.write_csv(&mut buf)?;
    let cfg = RunConfig::new("envelope", cli.seed, cli.mode)
        .weight(weight)
        .grid(Some(jmax), &[])
        .param("n_max", env.n_max().to_string())
        .output(out);
    emit_csv(out.map(|p| p.as_path()), &buf, &cfg)?;
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn multidim(
    cli: &Cli,
    weight: &WeightSpec,
    d: usize,
    r_max: f64,
    out: Option<&PathBuf>,
    report: Option<&PathBuf>,
    deltas: Option<&PathBuf>,
) -> Outcome {
    let w = weight.build().map_err(input_error)?;
    let (ball, rep) = ball_verify(&w, d, cli.seed, r_max)?;
    let cfg = RunConfig::new("multidim", cli.seed, cli.mode)
        .weight(weight)
        .param("d", d)
        .param("r_max", r_max)
        .output(out)
        .output(report)
        .output(deltas);
    let mut doc: Value = serde_json::from_str(&ball.to_json()?)?;
    doc["run_config"] = cfg.to_value();
    output::emit(out.map(|p| p.as_path()), &output::json_text(&doc)?)?;
    if let Some(path) = report {
        emit_json(Some(path), rep.to_json(), &cfg)?;
    }
    if let Some(path) = deltas {
        let mut buf = Vec::new();
        ball.certificate.write_csv(&mut buf)?;
        emit_csv(Some(path), &buf, &cfg)?;
    }
    eprintln!(
        "terms: {}; min delta_k: {:.4}; M_2/w spread: {:.4} ({})",
        ball.series.len(),
        ball.certificate.min_delta(),
        rep.spread(),
        if rep.pass { "pass" } else { "FAIL" }
    );
    Ok(rep.pass)
}

#[allow(clippy::too_many_arguments)]
fn demo_alpha(
    cli: &Cli,
    series: Option<&PathBuf>,
    p: f64,
    alpha: f64,
    d: usize,
    min_defect: f64,
    out: Option<&PathBuf>,
) -> Outcome {
    let cfg = RunConfig::new("demo-alpha", cli.seed, cli.mode)
        .grid(None, &demo_radii())
        .param("min_defect", min_defect);
    match series {
        Some(path) => {
            let gs = load_circle(path)?;
            let (profile, rep) = alpha_weighted_demo(&gs, p, alpha, d, &demo_radii())?;
            eprintln!("max defect {:e} at r = {}", rep.max_defect, rep.worst_r);
            let cfg = cfg
                .param("series", path.display().to_string())
                .param("p", p)
                .param("alpha", alpha)
                .param("d", d)
                .output(out);
            emit_csv(out.map(|p| p.as_path()), &profile_csv(&profile)?, &cfg)?;
            Ok(rep.max_defect > min_defect)
        }
        None => {
            let found = alpha_search(min_defect)?;
            match &found {
                Some(i) => eprintln!("1 + z^{}: p={} alpha={} defect {:e} at r = {}", i.m, i.p, i.alpha, i.defect, i.worst_r),
                None => eprintln!("no instance above {min_defect:e}"),
            }
            emit_json(out.map(|p| p.as_path()), json!({ "instance": found }), &cfg.output(out))?;
            Ok(found.is_some())
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Synthesize { weight, jmax, out } => synthesize(cli, weight, *jmax, out.as_ref()),
        Command::Verify { weight, p, jmax, sampled_jmax, series, out } => {
            verify(cli, weight, p, *jmax, *sampled_jmax, series.as_ref(), out.as_ref())
        }
        Command::Means { series, p, radii, samples, out } => means(cli, series, *p, radii, *samples, out.as_ref()),
        Command::Volume { series, q, d, radii, out } => volume(cli, "volume", series, *q, *d, "one", radii, out.as_ref()),
        Command::Weighted { series, q, d, u, radii, out } => volume(cli, "weighted", series, *q, *d, u, radii, out.as_ref()),
        Command::Convexity { profile, tol, out } => convexity(cli, profile, *tol, out.as_ref()),
        Command::Envelope { weight, jmax, out } => envelope(cli, weight, *jmax, out.as_ref()),
        Command::Multidim { weight, d, r_max, out, report, deltas } => {
            multidim(cli, weight, *d, *r_max, out.as_ref(), report.as_ref(), deltas.as_ref())
        }
        Command::DemoAlpha { series, p, alpha, d, min_defect, out } => {
            demo_alpha(cli, series.as_ref(), *p, *alpha, *d, *min_defect, out.as_ref())
        }
    }
}

/// 2 input, 3 construction, 4 resolution or accuracy.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Construction { .. } | Error::Pipeline(_) => 3,
        Error::Resolution(_) | Error::Accuracy(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let t = Instant::now();
    let outcome = run(&cli);
    eprintln!("elapsed: {:.2?}", t.elapsed());
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
