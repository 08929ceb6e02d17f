//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Measured constants are pinned in the tables below; a change in any of them
//! beyond `PIN_RTOL` is reported as a failure.

use std::time::{Duration, Instant};

use gapmeans_core::Error;
use gapmeans_core::lacunary::{GapSeries, GapTerm};
use gapmeans_core::logmath::dyadic_radius;
use gapmeans_core::means::{m2_exact, mp_sampled_auto, sphere_profile, ModePolicy};
use gapmeans_core::multidim::{mp_sphere_sampled, random_rw_poly, RWCertificate, SUP_BUDGET};
use gapmeans_core::verify::*;
use gapmeans_core::volume::{volume_mean, volume_profile, volume_smoothing_transform, RadialDensity};
use gapmeans_core::weights::*;
use gapmeans_core::means::log_power_series;

const PIN_RTOL: f64 = 1e-6;
const P_LIST: [f64; 5] = [0.5, 1.0, 2.0, 4.0, f64::INFINITY];

/// Pinned `exp(log_C_upper - log_C_lower)` per family and `p` (order of `P_LIST`).
const SPREAD_PINS: &[(&str, [f64; 5])] = &[
    ("power:alpha=0.5", [6.8089654054, 3.2655376224, 2.4529142809, 2.6996694522, 2.5471858689]),
    ("power:alpha=1", [6.1132503536, 3.0302560246, 2.2127820042, 2.3718221122, 2.2041184013]),
    ("power:alpha=2", [5.7101649167, 2.7981480200, 1.9728998772, 2.1722946212, 1.5954109818]),
    ("power:alpha=5", [5.2732211240, 2.6662971196, 1.8974347859, 2.0237767909, 1.4850626375]),
    ("exp:c=1,beta=1", [5.4079215462, 2.7195882465, 2.7195882465, 2.8592710380, 2.8592710380]),
    ("exp:c=2,beta=0.5", [7.3977666301, 7.4071083445, 7.4256947080, 7.7911704666, 8.1627737960]),
    ("log:gamma=3", [7.5820684536, 3.3902314758, 2.4430142136, 3.1637866458, 2.4285741586]),
    ("const:A=1", [1.0, 1.0, 1.0, 1.0, 1.0]),
];
/// Pinned spreads of the weighted-volume pipeline instances.
const PROPOSITION_PINS: &[f64] = &[3.0445615571, 4.7802917539];
/// Pinned spread of `M_2(F, r) / w(r)` for the d = 2 ball series.
const BALL_PIN: Option<f64> = Some(3.1533084330);
/// Pinned non-log-convexity instance `(m, p, alpha, defect)`.
const ALPHA_PIN: Option<(u32, f64, f64, f64)> = Some((1, 1.0, 0.5, 6.472546e-3));

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn pinned(measured: f64, pin: Option<f64>, what: &str, notes: &mut Vec<String>) -> bool {
    match pin {
        Some(p) if ((measured - p) / p).abs() <= PIN_RTOL => true,
        Some(p) => {
            notes.push(format!("{what}: measured {measured:.10e} differs from pin {p:.10e}"));
            false
        }
        None => {
            notes.push(format!("{what}: measured {measured:.10e} (no pin)"));
            false
        }
    }
}

fn families() -> Vec<(&'static str, LogWeight)> {
    vec![
        ("power:alpha=0.5", make_power_weight(0.5).unwrap()),
        ("power:alpha=1", make_power_weight(1.0).unwrap()),
        ("power:alpha=2", make_power_weight(2.0).unwrap()),
        ("power:alpha=5", make_power_weight(5.0).unwrap()),
        ("exp:c=1,beta=1", make_exp_weight(1.0, 1.0).unwrap()),
        ("exp:c=2,beta=0.5", make_exp_weight(2.0, 0.5).unwrap()),
        ("log:gamma=3", make_log_weight(3.0).unwrap()),
        ("const:A=1", make_constant_weight(1.0).unwrap()),
    ]
}

struct SuiteRun {
    name: &'static str,
    w: LogWeight,
    run: Result<TheoremRun, String>,
    elapsed: Duration,
}

fn run_suite() -> Vec<SuiteRun> {
    let opts = VerifyOptions::default();
    std::thread::scope(|scope| {
        let handles: Vec<_> = families()
            .into_iter()
            .map(|(name, w)| {
                let opts = opts.clone();
                scope.spawn(move || {
                    let t = Instant::now();
                    let run = theorem_verify(&w, &P_LIST, &opts).map_err(|e| e.to_string());
                    SuiteRun { name, w, run, elapsed: t.elapsed() }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("suite thread")).collect()
    })
}

fn criterion_1(suite: &[SuiteRun], wall: Duration) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for s in suite {
        let run = match &s.run {
            Ok(r) => r,
            Err(e) => {
                ok = false;
                notes.push(format!("{}: {e}", s.name));
                continue;
            }
        };
        let pins = SPREAD_PINS.iter().find(|(n, _)| *n == s.name).map(|(_, v)| *v);
        for (i, rep) in run.reports.iter().enumerate() {
            if !rep.pass {
                ok = false;
                notes.push(format!("{} p={}: non-finite constants", s.name, P_LIST[i]));
            }
            if rep.grid.len() != 41 {
                ok = false;
            }
            let what = format!("{} p={}", s.name, P_LIST[i]);
            ok &= pinned(rep.spread(), pins.map(|p| p[i]), &what, &mut notes);
        }
    }
    let within = wall <= Duration::from_secs(600);
    ok &= within;
    let slowest = suite.iter().max_by_key(|s| s.elapsed).map(|s| (s.name, s.elapsed)).unwrap();
    let worst = suite
        .iter()
        .filter_map(|s| s.run.as_ref().ok())
        .flat_map(|r| r.reports.iter())
        .map(|r| r.spread())
        .fold(0.0, f64::max);
    notes.insert(
        0,
        format!("8 families x 5 p on j<=40; max spread {worst:.4}; wall {:.1?} (slowest {} {:.1?})", wall, slowest.0, slowest.1),
    );
    Outcome { id: 1, name: "theorem suite (d=1)", pass: ok, detail: notes.join("; ") }
}

fn criterion_2() -> Outcome {
    let opts = VerifyOptions::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, w) in families() {
        if w.is_constant() {
            continue;
        }
        match lemma_check(&w, &opts) {
            Ok(c) => {
                let good = c.termwise_ok && c.log_c1.is_finite() && c.log_c2.is_finite() && c.log_c2 > f64::NEG_INFINITY;
                ok &= good;
                notes.push(format!(
                    "{name}: excess {:.2e} C1 {:.3} C2 {:.3e} C3 {:.3}",
                    c.max_term_excess,
                    c.log_c1.exp(),
                    c.log_c2.exp(),
                    c.log_c3.exp()
                ));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }
    Outcome { id: 2, name: "lemma certificates", pass: ok, detail: notes.join("; ") }
}

fn poly(terms: &[(u128, f64)], c: f64) -> GapSeries {
    GapSeries::new(1, c.ln(), terms.iter().map(|&(n, a)| GapTerm { n, log_a: a.ln() }).collect()).unwrap()
}

fn criterion_3(suite: &[SuiteRun]) -> Outcome {
    let mut ok = true;
    let mut worst_m2: f64 = 0.0;
    let mut refused = 0;
    let mut series: Vec<GapSeries> = vec![poly(&[(3, 2.0)], 1.0), poly(&[(1, 1.0)], 1.0), poly(&[(2, 0.5), (9, 3.0), (40, 1.5)], 1.0)];
    series.extend(suite.iter().filter_map(|s| s.run.as_ref().ok()).map(|r| r.series.clone()));
    for f in &series {
        for j in 1..=14 {
            let s = dyadic_radius(j).1;
            let a = mp_sampled_auto(f, 2.0, s);
            let b = m2_exact(f, s).unwrap().0;
            match a {
                Ok((a, _)) => worst_m2 = worst_m2.max((a - b).exp_m1().abs()),
                Err(Error::Resolution(_)) => refused += 1,
                Err(_) => ok = false,
            }
        }
    }
    ok &= worst_m2 <= 1e-10;

    let disk = disk_quadrature_error();
    ok &= disk <= 1e-6;

    let f = poly(&[(3, 2.0)], 1.0);
    let coeffs = [(0.0, 0.0), (6.0, 4f64.ln())];
    let v = volume_smoothing_transform(&coeffs, 1).unwrap();
    let mut worst_smooth: f64 = 0.0;
    for r in [0.1, 0.5, 0.9, 0.99] {
        let series = log_power_series(&v, f64::ln(r)).exp();
        let closed = 1.0 + f64::powi(r, 6);
        let quad = (2.0 * volume_mean(&f, 2.0, r, 1, ModePolicy::Auto).unwrap().log_value()).exp();
        worst_smooth = worst_smooth.max(((series - closed) / closed).abs()).max(((quad - closed) / closed).abs());
    }
    ok &= worst_smooth <= 1e-9;
    Outcome {
        id: 3,
        name: "oracle agreements",
        pass: ok,
        detail: format!("sampled vs exact M2 {worst_m2:.2e} ({refused} points above the sampling cap); volume vs disk {disk:.2e}; smoothing identity {worst_smooth:.2e}"),
    }
}

/// Relative error of the polar volume mean against a direct disk integral.
fn disk_quadrature_error() -> f64 {
    use num_complex::Complex64;
    let cases: [(&[(i32, f64)], GapSeries); 3] = [
        (&[(0, 1.0)], GapSeries::constant(1, 0.0)),
        (&[(0, 1.0), (1, 1.0)], poly(&[(1, 1.0)], 1.0)),
        (&[(0, 1.0), (3, 2.0)], poly(&[(3, 2.0)], 1.0)),
    ];
    let mut worst: f64 = 0.0;
    for (coeffs, f) in &cases {
        for q in [0.7, 1.0, 2.0, 3.0] {
            for r in [0.3, 0.6, 0.9] {
                // tensor Gauss-Legendre in t, split at the modulus of the zeros,
                // times a fine angular rule
                let mut cuts = vec![0.0];
                if coeffs.len() == 2 && coeffs[1].0 > 0 {
                    let t0 = coeffs[1].1.recip().powf(1.0 / coeffs[1].0 as f64);
                    if t0 < r {
                        cuts.push(t0);
                    }
                }
                cuts.push(r);
                let (nodes, weights) = gauss_legendre(64);
                let n_ang = 1 << 14;
                let mut acc = 0.0;
                for c in cuts.windows(2) {
                    let h = 0.5 * (c[1] - c[0]);
                    for (x, wx) in nodes.iter().zip(&weights) {
                        let t = c[0] + h * (x + 1.0);
                        let mut ring = 0.0;
                        for j in 0..n_ang {
                            let z = Complex64::from_polar(t, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n_ang as f64);
                            let v: Complex64 = coeffs.iter().map(|&(k, a)| a * z.powi(k)).sum();
                            ring += v.norm().powf(q);
                        }
                        acc += wx * h * ring / n_ang as f64 * t;
                    }
                }
                let direct = (2.0 * acc / (r * r)).powf(1.0 / q);
                let polar = volume_mean(f, q, r, 1, ModePolicy::Auto).unwrap().log_value().exp();
                worst = worst.max(((polar - direct) / direct).abs());
            }
        }
    }
    worst
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let dp = {
                    let (mut p0, mut p1) = (1.0, z);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    n as f64 * (z * p1 - p0) / (z * z - 1.0)
                };
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

fn criterion_4(suite: &[SuiteRun]) -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for run in suite.iter().filter_map(|s| s.run.as_ref().ok()) {
        for prof in &run.profiles {
            match prof.convexity(HARDY_TOL) {
                Ok(rep) => {
                    worst = worst.max(rep.max_defect);
                    ok &= rep.pass;
                    count += 1;
                }
                Err(_) => ok = false,
            }
        }
    }
    // volume means in one variable
    let radii: Vec<f64> = (1..=14).map(|j| dyadic_radius(j).0).collect();
    let mut vol_worst: f64 = 0.0;
    let mut vol_series = vec![poly(&[(3, 2.0)], 1.0), poly(&[(1, 1.0)], 1.0)];
    if let Some(r) = suite.iter().find(|s| s.name == "power:alpha=1").and_then(|s| s.run.as_ref().ok()) {
        vol_series.push(r.series.clone());
    }
    for f in &vol_series {
        for q in [0.7, 2.0] {
            match volume_profile(f, q, &RadialDensity::One, &radii, 1, ModePolicy::Auto).and_then(|p| p.convexity(HARDY_TOL)) {
                Ok(rep) => {
                    vol_worst = vol_worst.max(rep.max_defect);
                    ok &= rep.pass;
                    count += 1;
                }
                Err(_) => ok = false,
            }
        }
    }
    Outcome {
        id: 4,
        name: "Hardy convexity oracle",
        pass: ok,
        detail: format!("{count} profiles; max sphere defect {worst:.2e}; max volume defect {vol_worst:.2e}"),
    }
}

fn criterion_5(suite: &[SuiteRun]) -> Outcome {
    let opts = VerifyOptions::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for s in suite {
        let Ok(run) = &s.run else {
            ok = false;
            continue;
        };
        match concentration_check(&run.series, &s.w, &opts) {
            Ok(c) => {
                ok &= c.pass;
                notes.push(format!("{}: C0 {:.3} min {:.3} >= {:.3}", s.name, c.c0, c.min_fraction, c.threshold));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{}: {e}", s.name));
            }
        }
    }
    Outcome { id: 5, name: "measure concentration", pass: ok, detail: notes.join("; ") }
}

fn criterion_6() -> Outcome {
    let opts = VerifyOptions::default();
    let mut ok = true;
    let mut notes = Vec::new();
    let p1 = make_power_weight(1.0).unwrap();
    let p2 = make_power_weight(2.0).unwrap();
    let cases = [(&p1, &p1, 2.0, 1usize), (&p1, &p2, 1.0, 2usize)];
    for (i, (v, w, q, d)) in cases.iter().enumerate() {
        match proposition_pipeline(v, w, *q, *d, &opts) {
            Ok(run) => {
                ok &= run.report.pass && run.report.grid.len() == 15;
                let what = format!("v={} w={} q={q} d={d}", v.describe(), w.describe());
                ok &= pinned(run.report.spread(), PROPOSITION_PINS.get(i).copied(), &what, &mut notes);
                notes.push(format!("{what}: spread {:.4}", run.report.spread()));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("case {i}: {e}"));
            }
        }
    }
    let a = vec![(0.0, 0.0), (2.0, 0.3), (7.0, -0.4), (30.0, 1.1), (64.0, 2.0)];
    let mut worst: f64 = 0.0;
    for d in [1, 2, 3] {
        worst = worst.max(polar_algebra_check(&a, d, &[0.1, 0.5, 0.9, 0.97]).unwrap());
    }
    ok &= worst <= 1e-9;
    notes.push(format!("polar identity {worst:.2e}"));
    Outcome { id: 6, name: "weighted volume pipeline", pass: ok, detail: notes.join("; ") }
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let w = make_power_weight(1.0).unwrap();
    match ball_verify(&w, 2, 0, 0.95) {
        Ok((ball, rep)) => {
            ok &= rep.pass;
            ok &= pinned(rep.spread(), BALL_PIN, "ball spread", &mut notes);
            let mut worst_z: f64 = 0.0;
            for r in [0.3, 0.6, 0.9, 0.95] {
                let exact = ball.m2_exact(f64::ln(r));
                match mp_sphere_sampled(&ball, 2.0, r, 100_000, 1) {
                    Ok(mc) => worst_z = worst_z.max((mc.log_value - exact).abs() / mc.log_se),
                    Err(_) => ok = false,
                }
            }
            ok &= worst_z <= 3.0;
            notes.push(format!("spread {:.4}; max |MC - exact| / se {worst_z:.2}", rep.spread()));
        }
        Err(e) => {
            ok = false;
            notes.push(e.to_string());
        }
    }
    let mut min_delta = f64::INFINITY;
    for seed in 0..5u64 {
        let polys: Vec<_> = (1..=64).map(|k| random_rw_poly(2, k, seed).unwrap()).collect();
        min_delta = min_delta.min(RWCertificate::for_polys(&polys, SUP_BUDGET).min_delta());
    }
    ok &= min_delta >= 0.2;
    notes.push(format!("min delta_k (k<=64, seeds 0..5) {min_delta:.4}"));
    Outcome { id: 7, name: "multidim demonstrator (d=2)", pass: ok, detail: notes.join("; ") }
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = match alpha_search(1e-4) {
        Ok(Some(inst)) => {
            let mut good = inst.defect > 1e-4;
            match ALPHA_PIN {
                Some((m, p, a, d)) => {
                    good &= inst.m == m && inst.p == p && inst.alpha == a;
                    good &= pinned(inst.defect, Some(d), "defect", &mut notes);
                }
                None => good = false,
            }
            notes.push(format!("1+z^{} p={} alpha={} defect {:.6e} at r={}", inst.m, inst.p, inst.alpha, inst.defect, inst.worst_r));
            good
        }
        Ok(None) => {
            notes.push("no instance found".into());
            false
        }
        Err(e) => {
            notes.push(e.to_string());
            false
        }
    };
    // the same profile without the density is log-convex
    let f = GapSeries::new(1, 0.0, vec![GapTerm { n: 1, log_a: 0.0 }]).unwrap();
    let radii: Vec<f64> = demo_radii().iter().map(|r| r.ln()).collect();
    let plain = sphere_profile(&f, 1.0, &radii, ModePolicy::Auto).and_then(|p| p.convexity(HARDY_TOL));
    ok &= plain.map(|r| r.pass).unwrap_or(false);
    Outcome { id: 8, name: "non-log-convex weighted means", pass: ok, detail: notes.join("; ") }
}

/// Criteria selected by `ACCEPTANCE_ONLY` (comma separated ids); all by default.
fn selected() -> Vec<u32> {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(v) => v.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        Err(_) => (1..=8).collect(),
    }
}

fn main() {
    let only = selected();
    let t = Instant::now();
    let needs_suite = [1, 3, 4, 5].iter().any(|i| only.contains(i));
    let suite = if needs_suite { run_suite() } else { Vec::new() };
    let wall = t.elapsed();
    let mut outcomes = Vec::new();
    for id in only {
        let t = Instant::now();
        let mut o = match id {
            1 => criterion_1(&suite, wall),
            2 => criterion_2(),
            3 => criterion_3(&suite),
            4 => criterion_4(&suite),
            5 => criterion_5(&suite),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            _ => continue,
        };
        if id != 1 {
            o.detail.push_str(&format!(" [{:.1?}]", t.elapsed()));
        }
        outcomes.push(o);
    }
    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {} -- {}", o.id, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {} failed ({:.1?})", outcomes.len() - failed, failed, t.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
