//! Line-delimited JSON records: one object per line, UTF-8, `\n` separated.
//! Blank lines are skipped. Timestamps are ISO-8601 UTC strings.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sizeflags_core::evaluation::TreatedArticle;
use sizeflags_core::simulator::GroundTruth;
use sizeflags_core::{
    ArticleSnapshot, Covariates, Direction, ExpertFeedback, Snapshot, SnapshotSeries, Timestamp,
    Verdict, VisualCue,
};

use crate::error::{CliError, Result};

/// A parsed input plus the non-fatal issues found while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

pub fn format_timestamp(ts: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(ts.0, 0)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| ts.0.to_string())
}

pub fn parse_timestamp(s: &str) -> std::result::Result<Timestamp, String> {
    let t = DateTime::parse_from_rfc3339(s.trim())
        .map_err(|e| format!("invalid ISO-8601 timestamp {s:?}: {e}"))?;
    if t.timestamp_subsec_nanos() != 0 {
        return Err(format!("timestamp {s:?} has sub-second precision"));
    }
    Ok(Timestamp(t.timestamp()))
}

/// Calls `f` with the 1-based line number and parsed record of every
/// non-blank line.
fn for_each_record<T: DeserializeOwned>(
    reader: impl BufRead,
    source_name: &str,
    mut f: impl FnMut(usize, T) -> Result<()>,
) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CliError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CliError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        f(line_no, record)?;
    }
    Ok(())
}

pub fn write_records<T: Serialize>(mut writer: impl Write, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

fn parse_err(source_name: &str, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        source_name: source_name.to_string(),
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub snapshot_ts: String,
    pub article_id: String,
    pub category_id: String,
    pub orders: u64,
    pub returns_too_big: u64,
    pub returns_too_small: u64,
    pub price: f64,
    pub discount_rate: f64,
    pub general_return_rate: f64,
    pub unknown_return_rate: f64,
}

/// One series per category, sorted by category id.
pub fn read_snapshots(reader: impl BufRead, source_name: &str) -> Result<Ingested<Vec<SnapshotSeries>>> {
    type Rows = BTreeMap<Timestamp, BTreeMap<String, (ArticleSnapshot, usize)>>;
    let mut categories: BTreeMap<String, Rows> = BTreeMap::new();
    for_each_record(reader, source_name, |line, r: SnapshotRecord| {
        let ts = parse_timestamp(&r.snapshot_ts).map_err(|m| parse_err(source_name, line, m))?;
        let returns = r.returns_too_big.saturating_add(r.returns_too_small);
        if returns > r.orders {
            return Err(parse_err(
                source_name,
                line,
                format!("article {}: {returns} size returns exceed {} orders", r.article_id, r.orders),
            ));
        }
        let covariates = Covariates {
            general_return_rate: r.general_return_rate,
            price: r.price,
            discount_rate: r.discount_rate,
            unknown_return_rate: r.unknown_return_rate,
        };
        if !covariates.is_valid() {
            return Err(parse_err(
                source_name,
                line,
                format!("article {}: rates must lie in [0, 1] and price must be non-negative", r.article_id),
            ));
        }
        let snapshot = ArticleSnapshot {
            orders: r.orders,
            returns_too_big: r.returns_too_big,
            returns_too_small: r.returns_too_small,
            covariates,
        };
        let rows = categories.entry(r.category_id).or_default().entry(ts).or_default();
        if let Some((_, first)) = rows.get(&r.article_id) {
            return Err(parse_err(
                source_name,
                line,
                format!("duplicate row for article {} at {} (first on line {first})", r.article_id, r.snapshot_ts),
            ));
        }
        rows.insert(r.article_id, (snapshot, line));
        Ok(())
    })?;

    let mut warnings = Vec::new();
    if categories.is_empty() {
        warnings.push(format!("{source_name}: no snapshot records"));
    }
    let mut out = Vec::with_capacity(categories.len());
    for (category, rows) in categories {
        let mut last: BTreeMap<&str, ArticleSnapshot> = BTreeMap::new();
        let mut violations: Vec<(String, usize)> = Vec::new();
        for articles in rows.values() {
            for (id, (a, line)) in articles {
                if let Some(prev) = last.insert(id.as_str(), *a) {
                    let decreased = a.orders < prev.orders
                        || a.returns_too_big < prev.returns_too_big
                        || a.returns_too_small < prev.returns_too_small;
                    if decreased && !violations.iter().any(|(v, _)| v == id) {
                        violations.push((id.clone(), *line));
                    }
                }
            }
        }
        if !violations.is_empty() {
            violations.sort();
            let list: Vec<String> = violations.iter().map(|(id, l)| format!("{id} (line {l})")).collect();
            return Err(CliError::Validation {
                source_name: source_name.to_string(),
                message: format!(
                    "cumulative counts decrease between snapshots in category {category}: {}",
                    list.join(", ")
                ),
            });
        }
        let snapshots = rows
            .into_iter()
            .map(|(timestamp, articles)| Snapshot {
                timestamp,
                articles: articles.into_iter().map(|(id, (a, _))| (id, a)).collect(),
            })
            .collect();
        out.push(SnapshotSeries::new(category, snapshots)?);
    }
    Ok(Ingested { value: out, warnings })
}

pub fn snapshot_records(series: &SnapshotSeries) -> Vec<SnapshotRecord> {
    let mut out = Vec::new();
    for s in series.snapshots() {
        let ts = format_timestamp(s.timestamp);
        for (id, a) in &s.articles {
            out.push(SnapshotRecord {
                snapshot_ts: ts.clone(),
                article_id: id.clone(),
                category_id: series.category_id().to_string(),
                orders: a.orders,
                returns_too_big: a.returns_too_big,
                returns_too_small: a.returns_too_small,
                price: a.covariates.price,
                discount_rate: a.covariates.discount_rate,
                general_return_rate: a.covariates.general_return_rate,
                unknown_return_rate: a.covariates.unknown_return_rate,
            });
        }
    }
    out
}

/// One verdict from one reviewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub article_id: String,
    pub direction: String,
    pub verdict: String,
}

/// Verdicts grouped by (article, direction), sorted.
pub fn read_feedback(reader: impl BufRead, source_name: &str) -> Result<Ingested<Vec<ExpertFeedback>>> {
    let mut grouped: BTreeMap<(String, Direction), Vec<Verdict>> = BTreeMap::new();
    for_each_record(reader, source_name, |line, r: FeedbackRecord| {
        let direction: Direction = r.direction.parse().map_err(|m: String| parse_err(source_name, line, m))?;
        let verdict: Verdict = r.verdict.parse().map_err(|e| parse_err(source_name, line, format!("{e}")))?;
        grouped.entry((r.article_id, direction)).or_default().push(verdict);
        Ok(())
    })?;
    let value = grouped
        .into_iter()
        .map(|((article_id, direction), verdicts)| ExpertFeedback { article_id, direction, verdicts })
        .collect();
    Ok(Ingested { value, warnings: Vec::new() })
}

pub fn feedback_records(feedback: &[ExpertFeedback]) -> Vec<FeedbackRecord> {
    feedback
        .iter()
        .flat_map(|f| {
            f.verdicts.iter().map(move |v| FeedbackRecord {
                article_id: f.article_id.clone(),
                direction: f.direction.as_str().to_string(),
                verdict: v.as_str().to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueRecord {
    pub article_id: String,
    pub direction: String,
    pub size_issue_probability: f64,
}

/// Cues keyed by (article, direction); a repeated key replaces the earlier
/// row and produces a warning.
pub fn read_cues(reader: impl BufRead, source_name: &str) -> Result<Ingested<Vec<VisualCue>>> {
    let mut cues: BTreeMap<(String, Direction), (VisualCue, usize)> = BTreeMap::new();
    let mut warnings = Vec::new();
    for_each_record(reader, source_name, |line, r: CueRecord| {
        let direction: Direction = r.direction.parse().map_err(|m: String| parse_err(source_name, line, m))?;
        let cue = VisualCue::new(r.article_id.clone(), direction, r.size_issue_probability).map_err(|_| {
            parse_err(
                source_name,
                line,
                format!("size_issue_probability {} outside [0, 1]", r.size_issue_probability),
            )
        })?;
        if let Some((_, earlier)) = cues.insert((r.article_id.clone(), direction), (cue, line)) {
            warnings.push(format!(
                "{source_name}:{line}: duplicate cue for {} {direction} replaces line {earlier}",
                r.article_id
            ));
        }
        Ok(())
    })?;
    Ok(Ingested {
        value: cues.into_values().map(|(c, _)| c).collect(),
        warnings,
    })
}

pub fn cue_records(cues: &[VisualCue]) -> Vec<CueRecord> {
    cues.iter()
        .map(|c| CueRecord {
            article_id: c.article_id.clone(),
            direction: c.direction.as_str().to_string(),
            size_issue_probability: c.size_issue_probability,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub article_id: String,
    pub category_id: String,
    pub direction: Direction,
    pub srr_true: f64,
    pub has_issue: bool,
    pub treated: bool,
}

pub fn truth_records(truth: &GroundTruth) -> Vec<TruthRecord> {
    let mut out = Vec::new();
    for (id, t) in &truth.articles {
        for d in Direction::ALL {
            out.push(TruthRecord {
                article_id: id.clone(),
                category_id: truth.category_id.clone(),
                direction: d,
                srr_true: *t.srr_true.get(d),
                has_issue: *t.has_issue.get(d),
                treated: t.treated,
            });
        }
    }
    out
}

pub fn read_truth(reader: impl BufRead, source_name: &str) -> Result<Vec<TruthRecord>> {
    let mut out = Vec::new();
    for_each_record(reader, source_name, |_, r: TruthRecord| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatedRecord {
    pub article_id: String,
    pub category_id: String,
    pub direction: Direction,
    pub t_flag: String,
}

pub fn treated_records(category_id: &str, treated: &[TreatedArticle]) -> Vec<TreatedRecord> {
    treated
        .iter()
        .map(|t| TreatedRecord {
            article_id: t.article_id.clone(),
            category_id: category_id.to_string(),
            direction: t.direction,
            t_flag: format_timestamp(t.t_flag),
        })
        .collect()
}

/// Treated articles grouped by category.
pub fn read_treated(reader: impl BufRead, source_name: &str) -> Result<BTreeMap<String, Vec<TreatedArticle>>> {
    let mut out: BTreeMap<String, Vec<TreatedArticle>> = BTreeMap::new();
    for_each_record(reader, source_name, |line, r: TreatedRecord| {
        let t_flag = parse_timestamp(&r.t_flag).map_err(|m| parse_err(source_name, line, m))?;
        out.entry(r.category_id).or_default().push(TreatedArticle {
            article_id: r.article_id,
            direction: r.direction,
            t_flag,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Where and when a flag was first raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstFlagRecord {
    pub snapshot_ts: String,
    pub orders: u64,
    pub returns: u64,
}

/// One flag decision for one article and direction at the end of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub record: String,
    pub fingerprint: String,
    pub category_id: String,
    pub article_id: String,
    pub direction: Direction,
    pub variant: String,
    pub flagged: bool,
    pub reason: String,
    pub orders: u64,
    pub returns: u64,
    pub srr: Option<f64>,
    pub score: Option<f64>,
    pub theta: f64,
    pub pi: f64,
    pub sigma: f64,
    pub prior_alpha: Option<f64>,
    pub prior_beta: Option<f64>,
    pub prior_provenance: Option<String>,
    /// Beta shape parameters of the posterior.
    pub posterior_alpha: Option<f64>,
    pub posterior_beta: Option<f64>,
    /// The same posterior as exponents `(α-1, β-1)` of r and 1-r.
    pub posterior_exponents: Option<[f64; 2]>,
    pub first_flag: Option<FirstFlagRecord>,
}

pub fn read_decisions(reader: impl BufRead, source_name: &str) -> Result<Vec<DecisionRecord>> {
    let mut out = Vec::new();
    for_each_record(reader, source_name, |line, r: DecisionRecord| {
        if r.record != "decision" {
            return Err(parse_err(source_name, line, format!("expected a decision record, found {:?}", r.record)));
        }
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_round_trip() {
        let ts = parse_timestamp("2024-01-08T00:00:00Z").unwrap();
        assert_eq!(ts, Timestamp(1_704_672_000));
        assert_eq!(format_timestamp(ts), "2024-01-08T00:00:00Z");
        assert_eq!(parse_timestamp("2024-01-08T01:00:00+01:00").unwrap(), ts);
        assert!(parse_timestamp("2024-01-08").is_err());
        assert!(parse_timestamp("2024-01-08T00:00:00.5Z").is_err());
    }

    #[test]
    fn feedback_verdicts_parse() {
        let input = "{\"article_id\":\"a\",\"direction\":\"too_big\",\"verdict\":\"good fit\"}\n\
                     {\"article_id\":\"a\",\"direction\":\"too_big\",\"verdict\":\"certain_size_issue\"}\n";
        let fb = read_feedback(input.as_bytes(), "fb").unwrap().value;
        assert_eq!(fb.len(), 1);
        assert_eq!(fb[0].verdicts, vec![Verdict::GoodFit, Verdict::CertainSizeIssue]);

        let bad = "{\"article_id\":\"a\",\"direction\":\"too_big\",\"verdict\":\"meh\"}\n";
        let err = read_feedback(bad.as_bytes(), "fb").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn cue_range_and_duplicates() {
        let bad = "\n{\"article_id\":\"a\",\"direction\":\"too_big\",\"size_issue_probability\":1.2}\n";
        assert!(matches!(read_cues(bad.as_bytes(), "cues"), Err(CliError::Parse { line: 2, .. })));

        let dup = "{\"article_id\":\"a\",\"direction\":\"too_big\",\"size_issue_probability\":0.2}\n\
                   {\"article_id\":\"a\",\"direction\":\"too_big\",\"size_issue_probability\":0.9}\n";
        let cues = read_cues(dup.as_bytes(), "cues").unwrap();
        assert_eq!(cues.value.len(), 1);
        assert_eq!(cues.value[0].size_issue_probability, 0.9);
        assert_eq!(cues.warnings.len(), 1);
    }
}
