//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use tsimpact::impact::Interval;
use tsimpact::inference::{simulate_states, InitialState, ObservationPlan};
use tsimpact::io::{format_estimate, format_probability, run_analysis};
use tsimpact::oracle::{
    coverage_experiment, dense_conditional_moments, generate_synthetic, oracle_suite, EffectShape, ScenarioSpec,
};
use tsimpact::sampler::{
    draw_beta, draw_observation_variance, draw_state_variances, stream_rng, InverseGammaPrior, Priors,
};
use tsimpact::series::{AnalysisConfig, McmcSettings};
use tsimpact::state_space::{assemble_system, ComponentSet, StateLayout, VarianceSet};

const AUDIT_DRAWS: usize = 10_000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn example_paths() -> (PathBuf, PathBuf) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    (dir.join("hrrp_example.csv"), dir.join("hrrp_example.toml"))
}

fn reduced_config() -> AnalysisConfig<f64> {
    AnalysisConfig {
        seasons: 4,
        credible_level: 0.95,
        mcmc: McmcSettings {
            burn_in: 500,
            draws: 1500,
            ..McmcSettings::default()
        },
        priors: Priors::default(),
    }
}

fn oracle_equivalence() -> (Outcome, Outcome) {
    let start = Instant::now();
    let report = oracle_suite(200, 20100401).expect("oracle suite runs");
    let elapsed = start.elapsed();
    let loglik = outcome(
        report.cases == 200 && report.loglik_failures == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{} systems, max relative log-likelihood error {:.2e} (< 1e-8), {} failures, {:.2?} (< 10 s)",
            report.cases, report.max_loglik_rel_error, report.loglik_failures, elapsed
        ),
    );
    let smoother = outcome(
        report.cases == 200 && report.smoother_failures == 0,
        format!(
            "max mean error {:.2e}, max variance error {:.2e} (< 1e-6), {} failing systems",
            report.max_mean_error, report.max_cov_error, report.smoother_failures
        ),
    );
    (loglik, smoother)
}

/// Sample mean and variance plus the standard errors of both.
fn sample_moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (mean, var, (var / n).sqrt(), ((m4 - var * var) / n).sqrt())
}

/// Largest deviation, in standard errors, of the sample mean and variance
/// from the closed-form moments.
fn z_scores(x: &[f64], mean: f64, var: f64) -> f64 {
    let (m, v, se_m, se_v) = sample_moments(x);
    ((m - mean).abs() / se_m).max((v - var).abs() / se_v)
}

fn inverse_gamma_moments(nu: f64, s: f64, n: usize, ss: f64) -> (f64, f64) {
    let a = nu / 2.0 + n as f64 / 2.0;
    let b = (nu * s * s + ss) / 2.0;
    let mean = b / (a - 1.0);
    (mean, mean * mean / (a - 2.0))
}

fn conjugacy_audit() -> Outcome {
    let mut rng = stream_rng(7, 0);
    let priors = Priors::<f64>::default();
    let mut worst: Vec<(String, f64)> = Vec::new();

    // trend and seasonal variances given a fixed state path
    let n = 45;
    let layout = StateLayout::new(4);
    let states = DMatrix::from_fn(5, n, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
    let (mut lv, mut sv, mut gv) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..AUDIT_DRAWS {
        let v = draw_state_variances(&states, &layout, &priors, &mut rng).unwrap();
        lv.push(v.level);
        sv.push(v.slope);
        gv.push(v.seasonal);
    }
    let col = |t: usize| states.column(t).into_owned();
    let (mut ss_level, mut ss_slope, mut ss_seasonal) = (0.0, 0.0, 0.0);
    for t in 0..n - 1 {
        let (a, b) = (col(t), col(t + 1));
        ss_level += (b[0] - a[0] - a[1]).powi(2);
        ss_slope += (b[1] - a[1]).powi(2);
        ss_seasonal += (b[2] + a[2] + a[3] + a[4]).powi(2);
    }
    for (name, draws, prior, ss) in [
        ("level", &lv, priors.level, ss_level),
        ("slope", &sv, priors.slope, ss_slope),
        ("seasonal", &gv, priors.seasonal, ss_seasonal),
    ] {
        let (m, v) = inverse_gamma_moments(prior.nu, prior.s, n - 1, ss);
        worst.push((name.into(), z_scores(draws, m, v)));
    }

    // observation variance given residuals
    let resid: Vec<f64> = (0..n).map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal)).collect();
    let prior = InverseGammaPrior::new(5.0, 0.5);
    let draws: Vec<f64> = (0..AUDIT_DRAWS)
        .map(|_| draw_observation_variance(&resid, &prior, &mut rng).unwrap())
        .collect();
    let (m, v) = inverse_gamma_moments(5.0, 0.5, n, resid.iter().map(|r| r * r).sum());
    worst.push(("observation".into(), z_scores(&draws, m, v)));

    // coefficients given the regression target
    let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let target = DVector::from_fn(n, |i, _| 0.8 * x[(i, 0)] - 0.3 * x[(i, 1)] + 0.5 * rng.sample::<f64, _>(StandardNormal));
    let (s2, tau) = (0.25, 1.0);
    let precision = DMatrix::identity(2, 2) / (tau * tau) + x.transpose() * &x / s2;
    let cov = precision.try_inverse().unwrap();
    let mean = &cov * (x.transpose() * &target / s2);
    let betas: Vec<DVector<f64>> = (0..AUDIT_DRAWS)
        .map(|_| draw_beta(&x, &target, s2, tau, &mut rng).unwrap())
        .collect();
    for j in 0..2 {
        let coord: Vec<f64> = betas.iter().map(|b| b[j]).collect();
        worst.push((format!("beta_{}", j + 1), z_scores(&coord, mean[j], cov[(j, j)])));
    }

    // states given the data, against the dense conditional
    let periods = 6;
    let sys = assemble_system(
        &ComponentSet::new(4, 0).unwrap(),
        &VarianceSet::new(0.3, 0.2, 0.05, 0.1),
        &[],
        None,
        periods,
    )
    .unwrap();
    let y: Vec<f64> = (0..periods).map(|t| 1.0 + 0.3 * t as f64 + (t as f64 * 1.3).sin()).collect();
    let plan = ObservationPlan::observed_all(&y, &sys.offset);
    let init = InitialState::diffuse(sys.dim());
    let dense = dense_conditional_moments(&sys, &plan, &init).unwrap();
    let paths: Vec<DMatrix<f64>> = (0..AUDIT_DRAWS)
        .map(|_| simulate_states(&sys, &plan, &init, &mut rng).unwrap())
        .collect();
    let mut state_z: f64 = 0.0;
    for t in 0..periods {
        for i in 0..sys.dim() {
            let coord: Vec<f64> = paths.iter().map(|p| p[(i, t)]).collect();
            state_z = state_z.max(z_scores(&coord, dense.mean[t][i], dense.cov[t][(i, i)]));
        }
    }
    worst.push(("states".into(), state_z));

    let passed = worst.iter().all(|(_, z)| *z <= 3.0);
    let detail = worst
        .iter()
        .map(|(name, z)| format!("{name} {z:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(passed, format!("max |z| per conditional at {AUDIT_DRAWS} draws (<= 3): {detail}"))
}

fn null_calibration() -> Outcome {
    let start = Instant::now();
    let spec = ScenarioSpec::<f64>::default();
    let report = coverage_experiment(&spec, &reduced_config()).expect("coverage experiment runs");
    let elapsed = start.elapsed();
    outcome(
        report.replications == 200
            && (0.90..=0.99).contains(&report.coverage)
            && elapsed < Duration::from_secs(300),
        format!(
            "{} null replications, coverage of 0 {:.3} (in [0.90, 0.99]), {:.1?} (< 5 min)",
            report.replications, report.coverage, elapsed
        ),
    )
}

fn effect_recovery() -> Outcome {
    let spec = ScenarioSpec::<f64> {
        effect: EffectShape::Step(100.0),
        replications: 100,
        seed: 2,
        ..ScenarioSpec::default()
    };
    let report = coverage_experiment(&spec, &reduced_config()).expect("coverage experiment runs");
    let bias_ok = report.relative_bias.abs() <= 0.10;
    outcome(
        report.true_cumulative == 1900.0 && bias_ok && report.coverage >= 0.85,
        format!(
            "truth {}, mean estimate {:.1}, relative bias {:+.3} (within 0.10), coverage {:.2} (>= 0.85)",
            report.true_cumulative, report.mean_estimate, report.relative_bias, report.coverage
        ),
    )
}

fn estimand_arithmetic() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    let mut check = |pointwise: &DMatrix<f64>, cumulative: &DMatrix<f64>| {
        for d in 0..pointwise.nrows() {
            let (mut sum, mut abs) = (0.0, 0.0);
            for k in 0..pointwise.ncols() {
                sum += pointwise[(d, k)];
                abs += pointwise[(d, k)].abs();
                let err = (cumulative[(d, k)] - sum).abs() / abs.max(f64::MIN_POSITIVE);
                worst = worst.max(err);
            }
        }
        runs += 1;
    };
    for (r, effect) in [EffectShape::None, EffectShape::Step(100.0), EffectShape::Ramp(-20.0)]
        .into_iter()
        .enumerate()
    {
        let spec = ScenarioSpec::<f64> {
            effect,
            regressors: r % 2 * 2,
            beta: vec![30.0, -10.0][..r % 2 * 2].to_vec(),
            ..ScenarioSpec::default()
        };
        let data = generate_synthetic(&spec, &mut stream_rng(11, r as u64)).unwrap();
        let analysis = run_analysis(&data.validate(reduced_config()).unwrap()).unwrap();
        check(&analysis.effects.pointwise, &analysis.effects.cumulative);
    }
    outcome(
        worst <= 1e-9,
        format!("{runs} runs, max relative deviation of cumulative from summed pointwise draws {worst:.2e} (<= 1e-9)"),
    )
}

fn run_cli(out: &Path) -> Duration {
    let (data, config) = example_paths();
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_tsimpact"))
        .arg("run")
        .arg("--data")
        .arg(&data)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    start.elapsed()
}

fn directory_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (directory_bytes(a), directory_bytes(b));
    let same = fa == fb && !fa.is_empty();
    outcome(
        same,
        format!("{} output files from two runs of the bundled example, byte-identical: {same}", fa.len()),
    )
}

fn is_grouped_count(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let groups: Vec<&str> = digits.split(',').collect();
    !digits.is_empty()
        && groups.iter().all(|g| !g.is_empty() && g.bytes().all(|b| b.is_ascii_digit()))
        && groups[0].len() <= 3
        && groups[1..].iter().all(|g| g.len() == 3)
}

fn is_estimate(s: &str) -> bool {
    let Some((mean, rest)) = s.split_once(" (") else {
        return false;
    };
    let Some(inner) = rest.strip_suffix(')') else {
        return false;
    };
    let Some((lo, hi)) = inner.split_once(" to ") else {
        return false;
    };
    [mean, lo, hi].iter().all(|p| is_grouped_count(p))
}

fn is_percentage(s: &str) -> bool {
    if s == ">99.9%" {
        return true;
    }
    let Some(num) = s.strip_suffix('%') else {
        return false;
    };
    match num.split_once('.') {
        Some((i, d)) => {
            !i.is_empty() && i.len() <= 3 && i.bytes().all(|b| b.is_ascii_digit()) && d.len() == 1
                && d.bytes().all(|b| b.is_ascii_digit())
        }
        None => false,
    }
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn format_fidelity(out: &Path, elapsed: Duration) -> Outcome {
    let mut problems = Vec::new();
    let published = Interval {
        mean: -113_070.0,
        lower: -185_834.0,
        upper: -34_648.0,
    };
    if format_estimate(&published, 0) != "-113,070 (-185,834 to -34,648)" {
        problems.push("published estimate renders differently".to_string());
    }
    for (p, want) in [(0.993, "99.3%"), (0.987, "98.7%"), (0.62, "62.0%")] {
        if format_probability(p) != want {
            problems.push(format!("{p} renders as {}", format_probability(p)));
        }
    }

    let effects = read_rows(&out.join("table_effects.csv"));
    let estimate = effects.first().map(|r| r[1].clone()).unwrap_or_default();
    if !is_estimate(&estimate) {
        problems.push(format!("effect row `{estimate}`"));
    }
    let probs = read_rows(&out.join("table_probabilities.csv"));
    let prob = probs.first().map(|r| r[1].clone()).unwrap_or_default();
    if !is_percentage(&prob) {
        problems.push(format!("probability `{prob}`"));
    }
    let report = fs::read_to_string(out.join("report.txt")).unwrap_or_default();
    if !report.contains(&format!("cumulative effect: {estimate}\n")) {
        problems.push("report lacks the cumulative effect row".into());
    }

    let t_star = 46;
    for panel in ["panel_original.csv", "panel_pointwise.csv", "panel_cumulative.csv"] {
        let rows = read_rows(&out.join(panel));
        if rows.len() != 64 {
            problems.push(format!("{panel} has {} rows", rows.len()));
            continue;
        }
        // every panel: period, one descriptive column, then mean, lower, upper
        let (m, lo, hi) = (2, 3, 4);
        for row in &rows {
            let v = |i: usize| row[i].parse::<f64>().unwrap();
            if !(v(lo) <= v(m) && v(m) <= v(hi)) {
                problems.push(format!("{panel} row {} has lo <= mean <= hi violated", row[0]));
                break;
            }
        }
        if panel == "panel_cumulative.csv" && rows[t_star - 2][2..5].iter().any(|c| c != "0") {
            problems.push("cumulative panel is not zero before the intervention".into());
        }
    }
    if elapsed >= Duration::from_secs(60) {
        problems.push(format!("run took {elapsed:.1?}"));
    }
    let detail = if problems.is_empty() {
        format!("effect row `{estimate}`, probability `{prob}`, three 64-row panels, {elapsed:.2?} (< 60 s)")
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    let (loglik, smoother) = oracle_equivalence();
    report("oracle equivalence", loglik);
    report("smoother exactness", smoother);
    report("conjugacy audit", conjugacy_audit());
    report("null calibration", null_calibration());
    report("effect recovery", effect_recovery());
    report("estimand arithmetic", estimand_arithmetic());

    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    let elapsed = run_cli(&first);
    run_cli(&second);
    report("determinism", determinism(&first, &second));
    report("format fidelity", format_fidelity(&first, elapsed));

    let failed = results.iter().filter(|(_, o)| !o.passed).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
