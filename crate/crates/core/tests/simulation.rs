use sizeflags_core::evaluation::{did_effect, DidConfig};
use sizeflags_core::simulator::{generate, score_against_truth, SimConfig, Treatment};
use sizeflags_core::flagging::evaluate_article;
use sizeflags_core::{CategoryStats, Direction, FlagConfig, FlagDecision, ModelVariant, PriorTable};

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[test]
fn same_seed_same_output() {
    let config = SimConfig { seed: 11, article_count: 200, ..SimConfig::default() };
    let a = generate(&config).unwrap();
    let b = generate(&config).unwrap();
    assert_eq!(a, b);
    let c = generate(&SimConfig { seed: 12, ..config }).unwrap();
    assert_ne!(a.series, c.series);
}

#[test]
fn article_streams_do_not_depend_on_article_count() {
    let small = generate(&SimConfig { seed: 5, article_count: 20, ..SimConfig::default() }).unwrap();
    let large = generate(&SimConfig { seed: 5, article_count: 40, ..SimConfig::default() }).unwrap();
    for (id, truth) in &small.truth.articles {
        assert_eq!(large.truth.articles[id], *truth);
    }
}

#[test]
fn true_rates_follow_the_mixture_moments() {
    let config = SimConfig { seed: 1, article_count: 20_000, ..SimConfig::default() };
    let out = generate(&config).unwrap();
    let (pi, sigma) = config.mixture_moments();
    assert_eq!((out.truth.pi_true, out.truth.sigma_true), (pi, sigma));
    for d in Direction::ALL {
        let rates: Vec<f64> = out.truth.articles.values().map(|a| *a.srr_true.get(d)).collect();
        let (m, s) = mean_sd(&rates);
        // standard error of the mean is sigma/sqrt(20000) ≈ 3.5e-4
        assert!((m - pi).abs() < 2e-3, "{d:?}: mean {m} vs {pi}");
        assert!((s - sigma).abs() < 3e-3, "{d:?}: sd {s} vs {sigma}");
        let issues = out.truth.articles.values().filter(|a| *a.has_issue.get(d)).count() as f64;
        let share = issues / config.article_count as f64;
        assert!(share > 0.02 && share < config.issue_fraction, "{d:?}: issue share {share}");
    }
}

#[test]
fn observed_rates_converge_to_the_truth() {
    let config = SimConfig { seed: 2, article_count: 300, weekly_order_rate: 5000.0, ..SimConfig::default() };
    let out = generate(&config).unwrap();
    for d in Direction::ALL {
        let counts = out.series.window_counts(d, None);
        let worst = counts
            .iter()
            .map(|(id, c)| (c.srr().unwrap() - out.truth.articles[id].srr_true.get(d)).abs())
            .fold(0.0, f64::max);
        // 40 000 orders per article: binomial sd below 0.0025
        assert!(worst < 0.015, "{d:?}: worst deviation {worst}");
        let stats = CategoryStats::compute("sim", None, counts.iter().map(|(_, c)| *c), 1).unwrap();
        assert!((stats.pi - out.truth.pi_true).abs() < 0.01);
    }
}

#[test]
fn flagged_articles_are_scored_against_the_truth() {
    let config = SimConfig { seed: 4, article_count: 2000, weeks: 12, ..SimConfig::default() };
    let out = generate(&config).unwrap();
    let flag = FlagConfig::new(15.0, ModelVariant::V0).unwrap();
    let priors = PriorTable::new();
    let mut decisions = Vec::new();
    for d in Direction::ALL {
        let counts = out.series.window_counts(d, None);
        let stats = CategoryStats::compute("sim", None, counts.iter().map(|(_, c)| *c), 1).unwrap();
        for (id, c) in counts {
            let outcome = evaluate_article(&id, d, c, &stats, &priors, &flag);
            decisions.push(FlagDecision { article_id: id, direction: d, counts: c, outcome });
        }
    }
    let score = score_against_truth(&decisions, &[], &out.truth).unwrap();
    assert_eq!(score.true_positives + score.false_positives + score.false_negatives + score.true_negatives, 4000);
    assert!(score.precision.unwrap() > 0.9, "{score:?}");
    assert!(score.recall.unwrap() > 0.5, "{score:?}");
}

#[test]
fn planted_treatment_lowers_the_rate() {
    let config = SimConfig {
        seed: 9,
        article_count: 1200,
        weeks: 13,
        weekly_order_rate: 400.0,
        treatment: Some(Treatment {
            treated_fraction: 0.25,
            flag_week: 7,
            relative_reduction: 0.2,
            direction: Direction::TooBig,
        }),
        ..SimConfig::default()
    };
    let out = generate(&config).unwrap();
    assert!(!out.treated.is_empty());
    let pool: Vec<String> = out
        .truth
        .articles
        .iter()
        .filter(|(_, t)| !t.treated)
        .map(|(id, _)| id.clone())
        .collect();
    let report = did_effect(&out.treated, &pool, &out.series, &DidConfig::default()).unwrap();
    assert!((report.srr_effect - 0.2).abs() < 0.03, "{}", report.srr_effect);
}
