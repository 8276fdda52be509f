//! Results directory:
//!
//! ```text
//! runs/<model>/<repeat>-<fold>.jsonl   one row per test instance
//! summary/<model>.json                 aggregates
//! mcnemar/<A>_vs_<B>.json              pooled and per-run tests
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mcnemar::{decide_hypothesis, mcnemar, mcnemar_per_run, Decision, McNemarResult};
use super::metrics::{compute_metrics, ConfusionMatrix, MetricReport};
use super::protocol::{InstanceRecord, ModelSpec, RunRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub runs: usize,
    /// Means over runs.
    pub mean: MetricMeans,
    /// Sample standard deviation of per-run accuracy.
    pub accuracy_std: f64,
    /// Metrics of all predictions pooled.
    pub pooled: MetricReport,
    pub degenerate_runs: usize,
    pub wall_clock_secs: f64,
}

pub fn summarize(model: &str, records: &[RunRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty(format!("no runs for model `{model}`")));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| records.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    let acc_mean = mean(|m| m.accuracy);
    let var = if records.len() > 1 {
        records
            .iter()
            .map(|r| (r.metrics.accuracy - acc_mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    let mut pooled = ConfusionMatrix::default();
    for r in records {
        pooled.add(&r.metrics.confusion);
    }
    Ok(Summary {
        model: model.to_string(),
        runs: records.len(),
        mean: MetricMeans {
            accuracy: acc_mean,
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        accuracy_std: var.sqrt(),
        pooled: MetricReport::from_confusion(pooled),
        degenerate_runs: records.iter().filter(|r| r.metrics.degenerate.any()).count(),
        wall_clock_secs: records.iter().map(|r| r.wall_clock_secs).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub pooled: McNemarResult,
    pub decision: Decision,
    pub alpha: f64,
    pub per_run: Vec<PerRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRun {
    pub repeat: usize,
    pub fold: usize,
    pub result: McNemarResult,
}

pub fn compare(a: &str, ra: &[RunRecord], b: &str, rb: &[RunRecord], alpha: f64) -> Result<Comparison> {
    let pooled = mcnemar(ra, rb)?;
    let per_run = mcnemar_per_run(ra, rb)?
        .into_iter()
        .map(|((repeat, fold), result)| PerRun { repeat, fold, result })
        .collect();
    Ok(Comparison {
        a: a.to_string(),
        b: b.to_string(),
        decision: decide_hypothesis(pooled.p_value, alpha),
        pooled,
        alpha,
        per_run,
    })
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        io(dir, fs::create_dir_all(dir))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    io(path, fs::write(path, text + "\n"))
}

pub fn run_path(dir: &Path, model: &str, repeat: usize, fold: usize) -> PathBuf {
    dir.join("runs").join(model).join(format!("{repeat}-{fold}.jsonl"))
}

pub fn write_runs(dir: &Path, records: &[RunRecord]) -> Result<()> {
    for r in records {
        let path = run_path(dir, &r.model, r.repeat, r.fold);
        io(dir, fs::create_dir_all(path.parent().expect("run dir")))?;
        let mut text = String::new();
        for i in &r.instances {
            text.push_str(&serde_json::to_string(i).expect("serializable"));
            text.push('\n');
        }
        io(&path, fs::write(&path, text))?;
    }
    Ok(())
}

/// Reads every run of `model`, ordered by (repeat, fold). Metrics are
/// recomputed from the rows; wall-clock time is not stored per run.
pub fn read_runs(dir: &Path, model: &str) -> Result<Vec<RunRecord>> {
    let mdir = dir.join("runs").join(model);
    let entries = io(&mdir, fs::read_dir(&mdir))?;
    let mut out = Vec::new();
    for e in entries {
        let path = io(&mdir, e)?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some((r, f)) = stem.split_once('-') else { continue };
        let (Ok(repeat), Ok(fold)) = (r.parse(), f.parse()) else { continue };
        let text = io(&path, fs::read_to_string(&path))?;
        let instances = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(no, l)| {
                serde_json::from_str::<InstanceRecord>(l)
                    .map_err(|e| Error::data(format!("{}:{}", path.display(), no + 1), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let gold: Vec<u8> = instances.iter().map(|i| i.gold).collect();
        let pred: Vec<u8> = instances.iter().map(|i| i.predicted).collect();
        out.push(RunRecord {
            model: model.to_string(),
            repeat,
            fold,
            metrics: compute_metrics(&gold, &pred)?,
            instances,
            wall_clock_secs: 0.0,
        });
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("no runs under {}", mdir.display())));
    }
    out.sort_by_key(|r| (r.repeat, r.fold));
    Ok(out)
}

pub fn write_summary(dir: &Path, s: &Summary) -> Result<()> {
    write_json(&dir.join("summary").join(format!("{}.json", s.model)), s)
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = io(path, fs::read_to_string(path))?;
    serde_json::from_str(&text).map_err(|e| Error::data(path.display().to_string(), e.to_string()))
}

pub fn read_summaries(dir: &Path) -> Result<Vec<Summary>> {
    let sdir = dir.join("summary");
    let mut out = Vec::new();
    for e in io(&sdir, fs::read_dir(&sdir))? {
        let path = io(&sdir, e)?.path();
        if path.extension().is_some_and(|x| x == "json") {
            out.push(read_summary(&path)?);
        }
    }
    out.sort_by(|a, b| a.model.cmp(&b.model));
    Ok(out)
}

pub fn write_comparison(dir: &Path, c: &Comparison) -> Result<()> {
    write_json(&dir.join("mcnemar").join(format!("{}_vs_{}.json", c.a, c.b)), c)
}

pub fn read_comparisons(dir: &Path) -> Result<Vec<Comparison>> {
    let mdir = dir.join("mcnemar");
    if !mdir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for e in io(&mdir, fs::read_dir(&mdir))? {
        let path = io(&mdir, e)?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let text = io(&path, fs::read_to_string(&path))?;
            out.push(
                serde_json::from_str(&text)
                    .map_err(|e| Error::data(path.display().to_string(), e.to_string()))?,
            );
        }
    }
    out.sort_by(|a: &Comparison, b| (&a.a, &a.b).cmp(&(&b.a, &b.b)));
    Ok(out)
}

/// Pairs compared by default: each network against the shallow models on
/// the same features, and the transfer model against both networks.
pub fn default_comparisons(models: &[ModelSpec]) -> Vec<(ModelSpec, ModelSpec)> {
    use super::protocol::FeatureSet;
    let mut out = Vec::new();
    let has = |m: &ModelSpec| models.contains(m);
    for &m in models {
        if let ModelSpec::Shallow(v, FeatureSet::Nlp) = m {
            if has(&ModelSpec::CnnNlp) {
                out.push((ModelSpec::CnnNlp, m));
            }
            let pw = ModelSpec::Shallow(v, FeatureSet::Pw);
            if has(&pw) {
                out.push((pw, m));
            }
        }
        if let ModelSpec::Shallow(_, FeatureSet::Pw) = m {
            if has(&ModelSpec::CnnPw) {
                out.push((ModelSpec::CnnPw, m));
            }
        }
    }
    for other in [ModelSpec::CnnNlp, ModelSpec::CnnPw] {
        if has(&ModelSpec::PdTl) && has(&other) {
            out.push((ModelSpec::PdTl, other));
        }
    }
    out
}

fn table(title: &str, rows: &[&Summary]) -> String {
    let mut s = format!("### {title}\n\n| Model | Accuracy | Precision | Recall | F1 | Runs |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {:.3} | {:.3} | {:.3} | {:.3} | {} |",
            r.model.to_uppercase(),
            r.mean.accuracy,
            r.mean.precision,
            r.mean.recall,
            r.mean.f1,
            r.runs
        );
    }
    s.push('\n');
    s
}

/// Markdown tables: NLP-feature models, PW-feature models, transfer
/// comparison, then McNemar tests.
pub fn render_report(summaries: &[Summary], comparisons: &[Comparison]) -> String {
    let pick = |pred: &dyn Fn(&str) -> bool| -> Vec<&Summary> {
        summaries.iter().filter(|s| pred(&s.model)).collect()
    };
    let mut out = String::from("# Results\n\nMeans over runs.\n\n");
    let nlp = pick(&|m| m.ends_with("_nlp"));
    if !nlp.is_empty() {
        out.push_str(&table("NLP features", &nlp));
    }
    let pw = pick(&|m| m.ends_with("_pw"));
    if !pw.is_empty() {
        out.push_str(&table("Privacy-word features", &pw));
    }
    let tl = pick(&|m| matches!(m, "pd_tl" | "cnn_nlp" | "cnn_pw"));
    if tl.iter().any(|s| s.model == "pd_tl") {
        out.push_str(&table("Transfer learning", &tl));
    }
    let other = pick(&|m| !m.ends_with("_nlp") && !m.ends_with("_pw") && m != "pd_tl");
    if !other.is_empty() {
        out.push_str(&table("Other", &other));
    }
    if !comparisons.is_empty() {
        out.push_str("### McNemar tests (pooled)\n\n| A | B | b | c | Method | p-value | Decision |\n|---|---|---|---|---|---|---|\n");
        for c in comparisons {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:?} | {:.3e} | {} |",
                c.a.to_uppercase(),
                c.b.to_uppercase(),
                c.pooled.b,
                c.pooled.c,
                c.pooled.method,
                c.pooled.p_value,
                match c.decision {
                    Decision::Reject => "reject",
                    Decision::FailToReject => "fail to reject",
                }
            );
        }
        out.push('\n');
    }
    out
}
