//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one `PASS`, `FAIL` or `SKIP` line, even when it passes.
//!
//! Criteria needing external data read their paths from the environment:
//! `CORRDECAY_GLOVE_EN` (300-d GloVe text file), `CORRDECAY_DON_QUIXOTE_EN`,
//! `CORRDECAY_TOM_SAWYER` and `CORRDECAY_NATURAL_TEXTS` (a path list).

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use corrdecay::autocorr::{autocorrelation, autocorrelation_at, tau_grid, AutocorrCurve, Method, TauGrid};
use corrdecay::corpus::{filter_by_frequency, shuffle, tokenize, Document};
use corrdecay::embedding::{center, random_table, VectorSeries};
use corrdecay::fitlab::{fit_decay, DecayModel, ModelKind, TauRange};
use corrdecay::pipeline::{
    prepare_series, run_analysis, verify_bundle, AnalysisConfig, CleanConfig, EmbeddingConfig, InputSource,
};
use corrdecay::rangescan::{decade_ranges, scan};
use corrdecay::synthsrc::{encode_indices, encode_states, generate_markov_indices, generate_pcfg_indices, MarkovSpec, PcfgTreeSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| p.exists())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn params(m: &DecayModel) -> [f64; 2] {
    match *m {
        DecayModel::Power { alpha, beta } => [alpha, beta],
        DecayModel::Exponential { rate, amplitude } => [rate, amplitude],
        DecayModel::Logarithmic { intercept, slope } => [intercept, slope],
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn property_outcome<T: std::fmt::Debug>(result: Result<(), TestError<T>>, detail: String) -> Outcome {
    match result {
        Ok(()) => Pass(detail),
        Err(TestError::Fail(reason, value)) => Fail(format!("{reason} at {value:?}")),
        Err(TestError::Abort(reason)) => Fail(format!("aborted: {reason}")),
    }
}

fn ac1_fit_recovery() -> Outcome {
    let long = tau_grid(40_000).unwrap();
    let short = tau_grid(1_000).unwrap();
    let worst_param = Cell::new(0.0f64);
    let worst_mape = Cell::new(0.0f64);
    let slowest = Cell::new(Duration::ZERO);
    let strategy = (0usize..3, -1.5f64..=-0.2, -4.0f64..=-1.0, 0.05f64..5.0, -0.09f64..-0.01);
    let result = runner(300).run(&strategy, |(kind, alpha, log_rate, amp, slope)| {
        let start = Instant::now();
        let rate = 10f64.powf(log_rate);
        let (grid, truth, kind) = match kind {
            0 => (&long, DecayModel::Power { alpha, beta: amp }, ModelKind::Power),
            1 => (&short, DecayModel::Exponential { rate, amplitude: amp }, ModelKind::Exponential),
            _ => (&long, DecayModel::Logarithmic { intercept: 1.0, slope }, ModelKind::Logarithmic),
        };
        let pairs: Vec<(usize, f64)> = grid.taus().iter().map(|&t| (t, truth.predict(t as f64))).collect();
        let curve = AutocorrCurve::from_pairs(&pairs).unwrap();
        let range = TauRange::new(1, grid.max().unwrap()).unwrap();
        let fit = fit_decay(&curve, range, kind).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let err = params(&fit.model)
            .iter()
            .zip(params(&truth))
            .map(|(a, b)| rel(*a, b))
            .fold(0.0, f64::max);
        let elapsed = start.elapsed();
        worst_param.set(worst_param.get().max(err));
        worst_mape.set(worst_mape.get().max(fit.mape));
        slowest.set(slowest.get().max(elapsed));
        prop_assert!(err <= 1e-9, "parameter error {err:e}");
        prop_assert!(fit.mape <= 1e-9, "mape {:e}", fit.mape);
        prop_assert!(elapsed < Duration::from_secs(1), "case took {elapsed:?}");
        Ok(())
    });
    property_outcome(
        result,
        format!(
            "300 cases, max rel param err {:.1e}, max mape {:.1e}, slowest {:.1?}",
            worst_param.get(),
            worst_mape.get(),
            slowest.get()
        ),
    )
}

fn random_series(n: usize, d: usize, seed: u64) -> VectorSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut prev = vec![0.0f64; d];
    for _ in 0..n {
        for x in prev.iter_mut() {
            let noise: f64 = rng.sample(StandardNormal);
            *x = 0.95 * *x + noise + 0.3;
        }
        data.extend_from_slice(&prev);
    }
    center(&VectorSeries::from_flat(data, d, "random").unwrap()).unwrap()
}

fn ac2_fft_matches_direct() -> Outcome {
    let worst = Cell::new(0.0f64);
    let strategy = (2usize..=100_000, 1usize..=32, any::<u64>());
    let result = runner(50).run(&strategy, |(n, d, seed)| {
        let vs = random_series(n, d, seed);
        let grid = tau_grid(n - 1).unwrap();
        let direct = autocorrelation(&vs, &grid, Method::Direct).unwrap();
        let fft = autocorrelation(&vs, &grid, Method::Fft).unwrap();
        for (a, b) in direct.points().iter().zip(fft.points()) {
            let diff = (a.c - b.c).abs();
            worst.set(worst.get().max(diff));
            prop_assert!(diff <= 1e-10, "tau {}: direct {} fft {}", a.tau, a.c, b.c);
        }
        Ok(())
    });
    property_outcome(result, format!("50 series, max |fft - direct| {:.1e}", worst.get()))
}

/// Empirical two-state curve, fits over the lag grid up to 30.
fn markov_rate_check(seed: u64) -> (f64, f64, f64, AutocorrCurve) {
    let spec = MarkovSpec::symmetric_two_state(0.1);
    let idx = generate_markov_indices(&spec, 1_000_000, seed).unwrap();
    let vs = center(&encode_states(&spec, &idx).unwrap()).unwrap();
    let curve = autocorrelation(&vs, &tau_grid(30).unwrap(), Method::Fft).unwrap();
    let range = TauRange::new(1, 30).unwrap();
    let exp = fit_decay(&curve, range, ModelKind::Exponential).unwrap();
    let pow = fit_decay(&curve, range, ModelKind::Power).unwrap();
    let DecayModel::Exponential { rate, .. } = exp.model else { unreachable!() };
    (exp.mape, pow.mape, rate, curve)
}

fn ac3_markov_exponential() -> Outcome {
    const SEED: u64 = 1;
    let target = (1.0f64 / 0.8).ln();
    let spec = MarkovSpec::symmetric_two_state(0.1);
    let idx = generate_markov_indices(&spec, 1_000_000, SEED).unwrap();
    let vs = center(&encode_states(&spec, &idx).unwrap()).unwrap();
    let lags: Vec<usize> = (1..=20).collect();
    let empirical = autocorrelation_at(&vs, &lags, Method::Fft).unwrap();
    let worst_c = empirical
        .points()
        .iter()
        .map(|p| (p.c - 0.8f64.powi(p.tau as i32)).abs())
        .fold(0.0, f64::max);
    let (exp_mape, pow_mape, rate, _) = markov_rate_check(SEED);
    let rate_err = rel(rate, target);
    let detail = format!(
        "seed {SEED}: max |C - 0.8^tau| {worst_c:.4}, mape exp {exp_mape:.4} vs power {pow_mape:.4}, rate {rate:.4} ({:.1}% off)",
        100.0 * rate_err
    );
    verdict(worst_c <= 0.01 && exp_mape < pow_mape && rate_err <= 0.05, detail)
}

/// How often the rate condition holds across seeds; printed alongside AC3.
fn ac3_seed_spread() -> String {
    let target = (1.0f64 / 0.8).ln();
    let seeds = 1..=20u64;
    let total = seeds.clone().count();
    let within = seeds.filter(|&s| rel(markov_rate_check(s).2, target) <= 0.05).count();
    format!("rate within 5% for {within}/{total} seeds")
}

fn tree_curve(seed: u64, grid: &TauGrid) -> AutocorrCurve {
    let spec = PcfgTreeSpec::binary(16, 0.1);
    let idx = generate_pcfg_indices(&spec, seed).unwrap();
    let table: [&[f64]; 2] = [&[1.0], &[-1.0]];
    let vs = center(&encode_indices(&idx, &table, "tree").unwrap()).unwrap();
    autocorrelation(&vs, grid, Method::Fft).unwrap()
}

/// Ranges where power beats exponential, out of all decade ranges.
fn power_wins(curve: &AutocorrCurve, grid: &TauGrid) -> (usize, usize) {
    let result = scan(curve, grid, &decade_ranges(grid)).unwrap();
    let wins = result
        .entries
        .values()
        .filter(|e| matches!((e.mape_power, e.mape_exp), (Some(p), Some(x)) if p < x))
        .count();
    (wins, result.entries.len())
}

fn ac4_tree_power_law() -> Outcome {
    let grid = tau_grid(1000).unwrap();
    let mut passing = 0;
    let mut won = 0;
    let mut total = 0;
    let mut mean = vec![0.0; grid.len()];
    for seed in 0..10 {
        let curve = tree_curve(seed, &grid);
        let (w, t) = power_wins(&curve, &grid);
        passing += usize::from(w == t);
        won += w;
        total += t;
        for (m, p) in mean.iter_mut().zip(curve.points()) {
            *m += p.c / 10.0;
        }
    }
    let pairs: Vec<(usize, f64)> = grid.taus().iter().copied().zip(mean).collect();
    let (mw, mt) = power_wins(&AutocorrCurve::from_pairs(&pairs).unwrap(), &grid);
    verdict(
        passing >= 9,
        format!("{passing}/10 seeds win every range; {won}/{total} seed-ranges won; seed-mean curve wins {mw}/{mt}"),
    )
}

fn glove_config(text: &Path, glove: &Path, out: &Path) -> AnalysisConfig {
    let mut config = AnalysisConfig::new(
        InputSource::Path(text.to_path_buf()),
        EmbeddingConfig::Pretrained { path: glove.to_path_buf() },
        out,
    );
    config.scan = false;
    config
}

fn quixote_inputs() -> Option<(PathBuf, PathBuf)> {
    Some((env_path("CORRDECAY_DON_QUIXOTE_EN")?, env_path("CORRDECAY_GLOVE_EN")?))
}

fn ac5_quixote_direction() -> Outcome {
    let Some((text, glove)) = quixote_inputs() else {
        return Skip("set CORRDECAY_DON_QUIXOTE_EN and CORRDECAY_GLOVE_EN".into());
    };
    let dir = tempfile::tempdir().unwrap();
    let mut config = glove_config(&text, &glove, &dir.path().join("dq"));
    config.clean = CleanConfig::File(assets().join("profiles/gutenberg_keep_toc.json"));
    let outcome = run_analysis(&config).unwrap();
    let r = &outcome.fits.ranges[0];
    let (Some(p), Some(e)) = (r.get(ModelKind::Power), r.get(ModelKind::Exponential)) else {
        return Fail("power or exponential fit failed".into());
    };
    verdict(
        p.mape < e.mape && (0.03..=0.4).contains(&p.mape),
        format!("tau {}..{}: power {:.4} vs exponential {:.4}", r.tau_start, r.tau_end, p.mape, e.mape),
    )
}

fn ac6_quixote_power_band() -> Outcome {
    let Some((text, glove)) = quixote_inputs() else {
        return Skip("set CORRDECAY_DON_QUIXOTE_EN and CORRDECAY_GLOVE_EN".into());
    };
    let dir = tempfile::tempdir().unwrap();
    let mut config = glove_config(&text, &glove, &dir.path().join("dq"));
    config.clean = CleanConfig::File(assets().join("profiles/gutenberg_keep_toc.json"));
    config.window = 200;
    config.ranges = vec![TauRange::new(200, 4000).unwrap()];
    let outcome = run_analysis(&config).unwrap();
    let Some(fit) = outcome.fits.ranges[0].get(ModelKind::Power) else {
        return Fail("power fit failed".into());
    };
    let DecayModel::Power { alpha, beta } = fit.model else { unreachable!() };
    verdict(
        (alpha + 0.7246).abs() <= 0.15 && fit.mape < 0.25,
        format!("alpha {alpha:.4}, beta {beta:.4}, mape {:.4}", fit.mape),
    )
}

fn ac7_shuffle_baseline() -> Outcome {
    let (doc, source) = match env_path("CORRDECAY_TOM_SAWYER") {
        Some(p) => (Document::from_file(&p, "en").unwrap(), "Tom Sawyer"),
        None => {
            let s4 = std::fs::read_to_string(assets().join("generated/s4_sample.txt")).unwrap();
            let gpt2 = std::fs::read_to_string(assets().join("generated/gpt2_sample.txt")).unwrap();
            let mut text = String::new();
            while tokenize(&Document::new("x", "en", text.clone())).len() < 50_000 {
                text.push_str(&s4);
                text.push('\n');
                text.push_str(&gpt2);
                text.push('\n');
            }
            (Document::new("generated-cycle", "en", text), "cycled bundled texts")
        }
    };
    let raw = tokenize(&doc);
    if raw.len() < 50_000 {
        return Fail(format!("{source} has only {} tokens", raw.len()));
    }
    let ts = filter_by_frequency(&raw, 0.01, 3).unwrap();
    let table = random_table(ts.vocab().keys().map(String::as_str), 300, 11).unwrap();
    let vs = prepare_series(&shuffle(&ts, 5), &table, Default::default(), true, 1).unwrap();
    let n = vs.len();
    let grid = tau_grid(40_000).unwrap().below(n);
    let curve = autocorrelation(&vs, &grid, Method::Fft).unwrap();
    let points: Vec<_> = curve.points().iter().filter(|p| p.tau >= 1).collect();
    let inside = points
        .iter()
        .filter(|p| p.c.abs() < 4.0 / ((n - p.tau) as f64).sqrt())
        .count();
    let share = inside as f64 / points.len() as f64;
    verdict(
        share >= 0.95,
        format!("{source}, {} raw / {n} filtered tokens: {inside}/{} lags inside 4/sqrt(N-tau)", raw.len(), points.len()),
    )
}

fn ac8_generated_contrast() -> Outcome {
    let Some(glove) = env_path("CORRDECAY_GLOVE_EN") else {
        return Skip("set CORRDECAY_GLOVE_EN".into());
    };
    let natural: Vec<PathBuf> = std::env::var_os("CORRDECAY_NATURAL_TEXTS")
        .map(|v| std::env::split_paths(&v).filter(|p| p.exists()).collect())
        .unwrap_or_default();
    if natural.is_empty() {
        return Skip("set CORRDECAY_NATURAL_TEXTS to natural-text samples for the contrast".into());
    }
    let dir = tempfile::tempdir().unwrap();
    let range = TauRange::new(100, 1000).unwrap();
    let alpha_of = |path: &Path, name: &str| -> Result<f64, String> {
        let mut config = glove_config(path, &glove, &dir.path().join(name));
        config.ranges = vec![range];
        let outcome = run_analysis(&config).map_err(|e| e.to_string())?;
        match outcome.fits.ranges[0].get(ModelKind::Power).map(|f| f.model) {
            Some(DecayModel::Power { alpha, .. }) => Ok(alpha),
            _ => Err(format!("power fit failed on {}", path.display())),
        }
    };
    let mut generated = Vec::new();
    for name in ["s4_sample", "gpt2_sample"] {
        match alpha_of(&assets().join(format!("generated/{name}.txt")), name) {
            Ok(a) => generated.push(a.abs()),
            Err(e) => return Fail(e),
        }
    }
    let mut natural_alphas = Vec::new();
    for (i, p) in natural.iter().enumerate() {
        match alpha_of(p, &format!("natural{i}")) {
            Ok(a) => natural_alphas.push(a.abs()),
            Err(e) => return Fail(e),
        }
    }
    let gen_max = generated.iter().copied().fold(0.0, f64::max);
    let nat_min = natural_alphas.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        gen_max < 0.1 && nat_min >= 2.0 * gen_max,
        format!("generated |alpha| {generated:.3?}, natural |alpha| {natural_alphas:.3?} on tau {range}"),
    )
}

fn ac9_decade_ranges() -> Outcome {
    let full = tau_grid(1_000_000).unwrap().taus().to_vec();
    let strategy = prop::sample::subsequence(full.clone(), 1..full.len());
    let result = runner(100).run(&strategy, |taus| {
        let grid = TauGrid::new(taus.clone()).unwrap();
        let mut brute = Vec::new();
        for i in 0..taus.len() {
            for j in i + 1..taus.len() {
                if taus[j] >= 10 * taus[i] {
                    brute.push((i, j));
                }
            }
        }
        prop_assert_eq!(decade_ranges(&grid), brute);
        Ok(())
    });
    property_outcome(result, "100 random grids match the double loop".into())
}

fn ac10_closed_loop() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut bundles = 0;
    let mut fits = 0;
    let mut worst = 0.0f64;
    let cases = [
        ("s4_sample", 50, 1, vec![]),
        ("gpt2_sample", 100, 10, vec![]),
        ("s4_sample", 20, 1, vec![TauRange::new(1, 100).unwrap(), TauRange::new(10, 2000).unwrap()]),
    ];
    for (i, (name, dim, window, ranges)) in cases.into_iter().enumerate() {
        let mut config = AnalysisConfig::new(
            InputSource::Path(assets().join(format!("generated/{name}.txt"))),
            EmbeddingConfig::Random { dim, seed: i as u64 },
            dir.path().join(format!("b{i}")),
        );
        config.window = window;
        config.ranges = ranges;
        config.shuffle_seed = Some(9);
        run_analysis(&config).unwrap();
        let check = verify_bundle(&config.out).unwrap();
        if !check.ok() {
            return Fail(format!("bundle {i}: {check:?}"));
        }
        bundles += 1;
        fits += check.fits_checked;
        worst = worst.max(check.max_mape_deviation);
    }
    verdict(worst <= 1e-12, format!("{bundles} bundles, {fits} fits, max deviation {worst:.1e}"))
}

fn run_criterion(id: &str, name: &str, limit: Option<Duration>, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Fail(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let outcome = match (outcome, limit) {
        (Pass(d), Some(l)) if elapsed > l => Fail(format!("{d}; took {elapsed:.1?}, limit {l:?}")),
        (o, _) => o,
    };
    let (tag, detail, ok) = match outcome {
        Pass(d) => ("PASS", d, true),
        Fail(d) => ("FAIL", d, false),
        Skip(d) => ("SKIP", d, true),
    };
    println!("{tag} {id} {name} [{elapsed:.2?}]: {detail}");
    ok
}

fn main() -> ExitCode {
    // libtest flags such as `--nocapture` or a name filter are accepted and ignored.
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run_criterion("AC1", "fit recovery", None, ac1_fit_recovery);
    ok &= run_criterion("AC2", "fft matches direct", Some(secs(30)), ac2_fft_matches_direct);
    ok &= run_criterion("AC3", "markov exponential decay", Some(secs(10)), ac3_markov_exponential);
    println!("     AC3 diagnostic: {}", ac3_seed_spread());
    ok &= run_criterion("AC4", "mutation tree power decay", Some(secs(60)), ac4_tree_power_law);
    ok &= run_criterion("AC5", "don quixote power beats exponential", None, ac5_quixote_direction);
    ok &= run_criterion("AC6", "don quixote power-law band", None, ac6_quixote_power_band);
    ok &= run_criterion("AC7", "shuffled baseline", Some(secs(30)), ac7_shuffle_baseline);
    ok &= run_criterion("AC8", "generated text contrast", None, ac8_generated_contrast);
    ok &= run_criterion("AC9", "decade range completeness", Some(secs(1)), ac9_decade_ranges);
    ok &= run_criterion("AC10", "mape closed loop", None, ac10_closed_loop);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
