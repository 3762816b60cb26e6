//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sizeflags::config::{machine_epsilon_theta, RunConfig, ThetaSource};
use sizeflags::formats::DecisionRecord;
use sizeflags::pipeline::{self, CategoryModel};
use sizeflags_core::evaluation::{did_effect, DidConfig};
use sizeflags_core::flagging::{evaluate_article, FlagReason};
use sizeflags_core::simulator::{generate, CueModel, FeedbackModel, GroundTruth, SimConfig, Treatment};
use sizeflags_core::threshold::optimize_threshold;
use sizeflags_core::{
    binomial_score, flag_bayesian, posterior, posterior_score, CategoryStats, Direction, Epsilons, FlagConfig,
    ModelVariant, PriorParams, PriorProvenance, PriorTable, ReturnCounts, SnapshotSeries,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("prior-bound reproduction", prior_bounds),
        ("conjugacy oracle", conjugacy),
        ("uniform-prior identity", uniform_identity),
        ("score scaling law", scaling_law),
        ("flag monotonicity", monotonicity),
        ("threshold optimizer soundness", threshold_soundness),
        ("DiD recovery", did_recovery),
        ("cold-start", cold_start),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}. {name}: {detail} ({secs:.2} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} ({secs:.2} s)", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn prior_bounds() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_sizeflags"))
        .args(["solve-bounds", "--pi-low", "0.08", "--pi-high", "0.3", "--theta", "15"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let got = (record["alpha_max"].as_u64(), record["beta_max"].as_u64());
    check(
        out.status.success() && got == (Some(8), Some(3)) && elapsed < Duration::from_secs(1),
        format!("(alpha_max, beta_max) = {got:?} in {:.3} s", elapsed.as_secs_f64()),
    )
}

/// Tanh-sinh nodes on (0, 1) as `(r, 1 - r, weight)`.
fn tanh_sinh_nodes() -> Vec<(f64, f64, f64)> {
    let h = 1.0 / 128.0;
    (-(5 * 128)..=(5 * 128))
        .filter_map(|i| {
            let t = i as f64 * h;
            let x = std::f64::consts::FRAC_PI_2 * t.sinh();
            let r = 1.0 / (1.0 + (-2.0 * x).exp());
            let s = 1.0 / (1.0 + (2.0 * x).exp());
            let w = h * std::f64::consts::PI * t.cosh() * r * s;
            (r > 0.0 && r < 1.0 && s > 0.0 && s < 1.0 && w > 0.0).then_some((r, s, w))
        })
        .collect()
}

fn conjugacy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let nodes = tanh_sinh_nodes();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=500u64);
        let k = rng.random_range(0..=n);
        let alpha = rng.random_range(1.0..=10.0);
        let beta = rng.random_range(1.0..=10.0);
        // likelihood × prior kernel, normalised numerically
        let a = k as f64 + alpha - 1.0;
        let b = (n - k) as f64 + beta - 1.0;
        let ln_kernel = |r: f64, s: f64| {
            let term = |e: f64, x: f64| if e == 0.0 { 0.0 } else { e * x.ln() };
            term(a, r) + term(b, s)
        };
        let logs: Vec<f64> = nodes.iter().map(|&(r, s, _)| ln_kernel(r, s)).collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = nodes.iter().zip(&logs).map(|(&(_, _, w), l)| w * (l - peak).exp()).sum();
        let ln_z = z.ln() + peak;

        let prior = PriorParams::new(alpha, beta, PriorProvenance::Default).map_err(|e| e.to_string())?;
        let post = posterior(ReturnCounts::new(k, n).map_err(|e| e.to_string())?, &prior);
        for i in 1..10_000 {
            let r = i as f64 / 10_000.0;
            let grid = (ln_kernel(r, 1.0 - r) - ln_z).exp();
            let closed = post.log_density(r).map_err(|e| e.to_string())?.exp();
            worst = worst.max((grid - closed).abs());
        }
    }
    check(worst <= 1e-6, format!("max abs density error {worst:.2e} over 100 cases"))
}

fn uniform_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20_000u64);
        let k = rng.random_range(0..=n);
        let pi = rng.random_range(0.001..0.999);
        let c = ReturnCounts::new(k, n).map_err(|e| e.to_string())?;
        let post = posterior_score(pi, c, &PriorParams::uniform()).map_err(|e| e.to_string())?;
        let binom = binomial_score(c, pi).map_err(|e| e.to_string())?;
        worst = worst.max((post - (binom - ((n + 1) as f64).ln())).abs());
    }
    check(worst <= 1e-9, format!("max deviation {worst:.2e} over 1000 cases"))
}

fn scaling_law() -> Outcome {
    let s = binomial_score(ReturnCounts::new(3_000, 10_000).map_err(|e| e.to_string())?, 0.1)
        .map_err(|e| e.to_string())?;
    let per_order = s / 10_000.0;
    check((per_order - 0.15366).abs() <= 0.01, format!("s/n = {per_order:.5}"))
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut theta_violations, mut k_violations, mut k_checked) = (0, 0, 0);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=500u64);
        let k = rng.random_range(0..n);
        let stats = CategoryStats::from_moments("c", rng.random_range(0.01..0.5), rng.random_range(0.0..0.2))
            .map_err(|e| e.to_string())?;
        let prior = PriorParams::new(
            rng.random_range(1..=10) as f64,
            rng.random_range(1..=4) as f64,
            PriorProvenance::VisualCue,
        )
        .map_err(|e| e.to_string())?;
        let t1 = rng.random_range(1e-6..60.0);
        let t2 = t1 + rng.random_range(0.0..30.0);
        let c = ReturnCounts::new(k, n).map_err(|e| e.to_string())?;
        let table = PriorTable::constant(prior);
        for variant in [ModelVariant::V0, ModelVariant::SizeFlags] {
            let low = FlagConfig::new(t1, variant).map_err(|e| e.to_string())?;
            let high = FlagConfig::new(t2, variant).map_err(|e| e.to_string())?;
            let at_high = evaluate_article("a", Direction::TooBig, c, &stats, &table, &high);
            let at_low = evaluate_article("a", Direction::TooBig, c, &stats, &table, &low);
            if at_high.flagged && !at_low.flagged {
                theta_violations += 1;
            }
        }
        let cfg = FlagConfig::new(t1, ModelVariant::SizeFlags).map_err(|e| e.to_string())?;
        let srr = k as f64 / n as f64;
        if srr >= stats.rate_bound()
            && k as f64 + prior.alpha >= stats.pi * (n as f64 + prior.alpha + prior.beta - 1.0)
            && flag_bayesian(c, &stats, &prior, &cfg).flagged
        {
            k_checked += 1;
            let next = ReturnCounts::new(k + 1, n).map_err(|e| e.to_string())?;
            if !flag_bayesian(next, &stats, &prior, &cfg).flagged {
                k_violations += 1;
            }
        }
    }
    check(
        theta_violations == 0 && k_violations == 0,
        format!(
            "θ-subset violations {theta_violations}, k-monotonicity violations {k_violations} ({k_checked} flagged premises) over 10^4 instances"
        ),
    )
}

/// Flag state of every article at every snapshot, computed article by article.
fn flag_matrix(
    series: &SnapshotSeries,
    d: Direction,
    stats: &CategoryStats,
    priors: &PriorTable,
    cfg: &FlagConfig,
) -> Vec<Vec<bool>> {
    series
        .article_ids()
        .iter()
        .map(|id| {
            (0..series.len())
                .map(|t| evaluate_article(id, d, series.article_at(t, id).counts(d), stats, priors, cfg).flagged)
                .collect()
        })
        .collect()
}

/// (N, S): articles ever flagged, and those whose flag never drops afterwards.
fn flagged_and_stable(matrix: &[Vec<bool>]) -> (usize, usize) {
    let mut n = 0;
    let mut s = 0;
    for row in matrix {
        if let Some(first) = row.iter().position(|f| *f) {
            n += 1;
            if row[first..].iter().all(|f| *f) {
                s += 1;
            }
        }
    }
    (n, s)
}

fn threshold_soundness() -> Outcome {
    let sim = SimConfig { seed: 2024, article_count: 400, weeks: 6, issue_fraction: 0.1, ..SimConfig::default() };
    let out = generate(&sim).map_err(|e| e.to_string())?;
    let series = out.series;
    if series.article_ids().len() < 200 || series.len() != 6 {
        return Err("fixture too small".into());
    }
    let variant = ModelVariant::VTh;
    let config = RunConfig::new("run");
    let model = CategoryModel::build(&series, &config, variant, &[], &[]).map_err(|e| e.to_string())?;
    let theta_max = machine_epsilon_theta();
    let eps = Epsilons { unstable_share: 0.2, extra_flags: 0.05, unstable_ratio: 1.5 };
    let grid = 256;
    let mut details = Vec::new();
    let mut ok = true;
    for d in Direction::ALL {
        let stats = model.stats.get(d);
        let cfg = FlagConfig::new(theta_max, variant).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let solution = optimize_threshold(&series, d, stats, &model.priors, &cfg, theta_max, eps, grid)
            .map_err(|e| e.to_string())?;
        let runtime = start.elapsed();

        let at = |theta: f64| -> Result<(usize, usize), String> {
            let cfg = FlagConfig::new(theta, variant).map_err(|e| e.to_string())?;
            Ok(flagged_and_stable(&flag_matrix(&series, d, stats, &model.priors, &cfg)))
        };
        let (n, s) = at(solution.theta_star)?;
        let (n_max, s_max) = at(theta_max)?;
        let ratio = |num: f64, den: f64| {
            if den != 0.0 {
                num / den
            } else if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let c1 = ratio((n - s) as f64, n as f64);
        let c2 = ratio(n as f64 - n_max as f64, n_max as f64);
        let c3 = ratio((n - s) as f64, (n_max - s_max) as f64);
        let holds = c1 <= eps.unstable_share && c2 <= eps.extra_flags && c3 <= eps.unstable_ratio;

        // N over the grid from scores recorded once per article and snapshot
        let ids = series.article_ids();
        let scores: Vec<Vec<Option<f64>>> = ids
            .iter()
            .map(|id| {
                (0..series.len())
                    .map(|t| {
                        let o = evaluate_article(id, d, series.article_at(t, id).counts(d), stats, &model.priors, &cfg);
                        matches!(o.reason, FlagReason::Flagged | FlagReason::ScoreBelowThreshold)
                            .then_some(o.score)
                            .flatten()
                    })
                    .collect()
            })
            .collect();
        let n_at = |theta: f64| scores.iter().filter(|row| row.iter().any(|s| s.is_some_and(|s| s >= theta))).count();
        let counts: Vec<usize> = (1..=grid).map(|i| n_at(theta_max * i as f64 / grid as f64)).collect();
        let monotone = counts.windows(2).all(|w| w[1] <= w[0]);

        let fine = holds && monotone && solution.feasible && n_max > 0 && runtime < Duration::from_secs(30);
        ok &= fine;
        details.push(format!(
            "{d:?}: θ* = {:.3}, N = {n}, S = {s}, N_max = {n_max}, S_max = {s_max}, c = ({c1:.3}, {c2:.3}, {c3:.3}), N non-increasing {monotone}, {:.2} s",
            solution.theta_star,
            runtime.as_secs_f64()
        ));
    }
    check(ok, details.join("; "))
}

fn did_run(relative_reduction: f64) -> Result<(f64, usize), String> {
    let sim = SimConfig {
        seed: 77,
        article_count: 1600,
        weeks: 13,
        weekly_order_rate: 400.0,
        treatment: Some(Treatment {
            treated_fraction: 0.7,
            flag_week: 7,
            relative_reduction,
            direction: Direction::TooBig,
        }),
        ..SimConfig::default()
    };
    let out = generate(&sim).map_err(|e| e.to_string())?;
    if out.treated.len() < 1000 {
        return Err(format!("only {} treated articles", out.treated.len()));
    }
    let treated = &out.treated[..1000];
    let pool: Vec<String> =
        out.truth.articles.iter().filter(|(_, t)| !t.treated).map(|(id, _)| id.clone()).collect();
    let report = did_effect(treated, &pool, &out.series, &DidConfig::default()).map_err(|e| e.to_string())?;
    Ok((report.srr_effect, report.per_article.len()))
}

fn did_recovery() -> Outcome {
    let (effect, used) = did_run(0.05)?;
    let (null, null_used) = did_run(0.0)?;
    check(
        (effect - 0.05).abs() <= 0.01 && null.abs() <= 0.01,
        format!("effect {effect:.4} ({used} of 1000 treated used), null {null:.4} ({null_used} used)"),
    )
}

fn precision(decisions: &[DecisionRecord], truth: &GroundTruth) -> Option<f64> {
    let flagged: Vec<&DecisionRecord> = decisions.iter().filter(|d| d.flagged).collect();
    let hits = flagged.iter().filter(|d| *truth.articles[&d.article_id].has_issue.get(d.direction)).count();
    (!flagged.is_empty()).then(|| hits as f64 / flagged.len() as f64)
}

fn cold_start() -> Outcome {
    let sim = SimConfig {
        seed: 31,
        article_count: 3000,
        weeks: 12,
        feedback: Some(FeedbackModel { coverage: 0.5, reviewers: 1, accuracy: 0.95 }),
        cues: Some(CueModel { coverage: 1.0, noise_sd: 0.1 }),
        ..SimConfig::default()
    };
    let out = generate(&sim).map_err(|e| e.to_string())?;
    let run = |variant: ModelVariant, config: &RunConfig, with_inputs: bool| -> Result<Vec<DecisionRecord>, String> {
        let (fb, cues) = if with_inputs { (&out.feedback[..], &out.cues[..]) } else { (&[][..], &[][..]) };
        let model = CategoryModel::build(&out.series, config, variant, fb, cues).map_err(|e| e.to_string())?;
        let choice = pipeline::choose_theta(&model, variant, config).map_err(|e| e.to_string())?;
        pipeline::decide(&model, variant, choice.theta, config, "acceptance").map_err(|e| e.to_string())
    };
    let mut uniform = RunConfig::new("run");
    uniform.prior_concentration = 0.0;
    uniform.theta = Some(ThetaSource::MachineEpsilon);
    let baseline = run(ModelVariant::VBase, &uniform, false)?;
    let sizeflags = run(ModelVariant::SizeFlags, &RunConfig::new("run"), true)?;

    let report = pipeline::compare_cold_start(
        pipeline::variant_flags("V_Base uniform".into(), &baseline).map_err(|e| e.to_string())?,
        vec![pipeline::variant_flags("SizeFlags".into(), &sizeflags).map_err(|e| e.to_string())?],
    )
    .map_err(|e| e.to_string())?;
    let metrics = &report.variants[0];
    let reduction = metrics.shared_reduction.and_then(|r| r.orders).ok_or("no shared flags")?;
    let (Some(base_shared), Some(shared)) = (metrics.baseline_shared, metrics.shared) else {
        return Err("no shared flags".into());
    };
    let (p_base, p_sf) = (precision(&baseline, &out.truth), precision(&sizeflags, &out.truth));
    let (Some(p_base), Some(p_sf)) = (p_base, p_sf) else {
        return Err("a variant flagged nothing".into());
    };
    check(
        reduction >= 0.2 && (p_sf - p_base).abs() <= 0.02,
        format!(
            "median orders-to-flag {:?} → {:?} on {} shared flags (reduction {:.1}%), precision {p_base:.3} vs {p_sf:.3}",
            base_shared.median_orders,
            shared.median_orders,
            shared.count,
            100.0 * reduction
        ),
    )
}

fn sizeflags(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sizeflags"))
        .env_remove("SIZEFLAGS_DATA_DIR")
        .current_dir(dir)
        .args(args)
        .arg("--quiet")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Outcome {
    let mut files = Vec::new();
    for _ in 0..3 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        sizeflags(
            &[
                "simulate",
                "--seed",
                "42",
                "--feedback-coverage",
                "0.3",
                "--cue-coverage",
                "1",
                "--out-dir",
                "sim",
            ],
            dir.path(),
        )?;
        sizeflags(
            &[
                "run",
                "--variant",
                "SizeFlags",
                "--snapshots",
                "sim/snapshots.jsonl",
                "--feedback",
                "sim/feedback.jsonl",
                "--cues",
                "sim/cues.jsonl",
                "--out",
                "decisions.jsonl",
            ],
            dir.path(),
        )?;
        files.push(std::fs::read(dir.path().join("decisions.jsonl")).map_err(|e| e.to_string())?);
    }
    let identical = files.windows(2).all(|w| w[0] == w[1]);
    check(
        identical && !files[0].is_empty(),
        format!("3 runs, {} bytes each, identical {identical}", files[0].len()),
    )
}
