use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ParetoMode, RegressorKind, Split, VariantConfig};
use super::metrics::{GainRow, LearnerAccuracy, MetricsTable, ReportCategory, Stat};
use super::run::{distinct_splits, SuiteResult};
use super::HarnessError;

pub const RESULTS_FORMAT: &str = "partner-match/results/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredVariant {
    pub config: VariantConfig,
    pub accuracies: Vec<LearnerAccuracy>,
    pub selections: usize,
    pub complementary_rate: Option<f64>,
    pub fallbacks: usize,
}

/// Everything needed to re-render the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResults {
    pub format: String,
    pub baseline: String,
    pub variants: Vec<StoredVariant>,
    pub metrics: MetricsTable,
    pub gains: Vec<GainRow>,
}

impl StoredResults {
    pub fn from_suite(suite: &SuiteResult, cohort: &[crate::agents::Learner]) -> Self {
        Self {
            format: RESULTS_FORMAT.into(),
            baseline: suite.baseline.clone(),
            variants: suite
                .runs
                .iter()
                .map(|r| StoredVariant {
                    config: r.config.clone(),
                    accuracies: r.accuracies.clone(),
                    selections: r.selections.len(),
                    complementary_rate: r.complementary_rate(cohort),
                    fallbacks: r.fallbacks,
                })
                .collect(),
            metrics: suite.metrics.clone(),
            gains: suite.gains.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let stored: Self = serde_json::from_str(&text)?;
        if stored.format != RESULTS_FORMAT {
            return Err(HarnessError::Config(format!("unsupported results format `{}`", stored.format)));
        }
        Ok(stored)
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn stat_cells(s: Option<Stat>) -> [String; 3] {
    match s {
        Some(s) => [pct(s.mean), pct(s.best), pct(s.std)],
        None => ["n/a".into(), "n/a".into(), "n/a".into()],
    }
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields")
}

/// Left-aligned first column, right-aligned rest.
fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Accuracy (%) per variant and category: mean, best and std over learners.
pub fn table1_csv(m: &MetricsTable) -> String {
    let mut out = csv_line(&["variant", "category", "mean", "best", "std"].map(String::from));
    for row in &m.rows {
        for c in ReportCategory::ALL {
            let [mean, best, std] = stat_cells(row.get(c));
            out.push_str(&csv_line(&[row.variant.clone(), c.label().into(), mean, best, std]));
        }
    }
    out
}

pub fn table1_txt(m: &MetricsTable) -> String {
    let mut header = vec![String::from("Variant")];
    for c in ReportCategory::ALL {
        for s in ["Mean", "Best", "Std"] {
            header.push(format!("{} {s}", c.label()));
        }
    }
    let mut rows = vec![header];
    for row in &m.rows {
        let mut r = vec![row.variant.clone()];
        for c in ReportCategory::ALL {
            r.extend(stat_cells(row.get(c)));
        }
        rows.push(r);
    }
    let mut out = String::from("Accuracy (%) by category: mean / best / std over learners\n\n");
    out.push_str(&aligned(&rows));
    out
}

fn switches(c: &VariantConfig) -> [String; 4] {
    let yes = |b: bool| if b { "yes" } else { "-" }.to_string();
    [
        yes(c.role_setting),
        yes(c.co_learning),
        match c.regressor_kind {
            RegressorKind::None => "-".into(),
            RegressorKind::Gp => "GP".into(),
            RegressorKind::Nn => "NN".into(),
        },
        match c.pareto_mode {
            ParetoMode::None => "-".into(),
            ParetoMode::Global => "Global".into(),
            ParetoMode::Local => "Local".into(),
        },
    ]
}

fn footer(r: &StoredResults) -> String {
    let configs: Vec<VariantConfig> = r.variants.iter().map(|v| v.config.clone()).collect();
    let splits: Vec<Split> = distinct_splits(&configs);
    let mut seeds: Vec<u64> = configs.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut out = String::new();
    for s in splits {
        let _ = writeln!(out, "split: {s}");
    }
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "seed: {}", seeds.join(", "));
    let _ = writeln!(out, "baseline: {}", r.baseline);
    out
}

/// Component switches and total accuracy with gain over the baseline.
pub fn table2_csv(r: &StoredResults) -> String {
    let mut out = csv_line(
        &["variant", "role_setting", "co_learning", "regressor", "pareto", "accuracy", "gain", "cell"].map(String::from),
    );
    for (v, g) in r.variants.iter().zip(&r.gains) {
        let mut f = vec![v.config.name.clone()];
        f.extend(switches(&v.config));
        f.push(pct(g.total_mean));
        f.push(format!("{:.2}", g.gain));
        f.push(g.cell.clone());
        out.push_str(&csv_line(&f));
    }
    out
}

pub fn table2_txt(r: &StoredResults) -> String {
    let mut rows = vec![["Variant", "Role", "Co-learning", "Regressor", "Pareto", "Accuracy (Gain) %"]
        .map(String::from)
        .to_vec()];
    for (v, g) in r.variants.iter().zip(&r.gains) {
        let mut row = vec![v.config.name.clone()];
        row.extend(switches(&v.config));
        row.push(g.cell.clone());
        rows.push(row);
    }
    let mut out = aligned(&rows);
    out.push('\n');
    out.push_str(&footer(r));
    out
}

/// Writes the four report files into `dir`.
pub fn write_reports(dir: &Path, r: &StoredResults) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("table1.csv"), table1_csv(&r.metrics))?;
    fs::write(dir.join("table1.txt"), table1_txt(&r.metrics))?;
    fs::write(dir.join("table2.csv"), table2_csv(r))?;
    fs::write(dir.join("table2.txt"), table2_txt(r))?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Results, reports and per-variant artifacts:
/// `variants/<name>/{transcript.jsonl, selections.csv, fronts.json, model.json}`
/// and, when a regressor was trained, `training/<seed>/transcript.jsonl` and
/// `training/<seed>/dataset.csv`.
pub fn write_suite(dir: &Path, suite: &SuiteResult, cohort: &[crate::agents::Learner]) -> Result<StoredResults, HarnessError> {
    fs::create_dir_all(dir)?;
    let stored = StoredResults::from_suite(suite, cohort);
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(&stored)? + "\n")?;
    write_reports(dir, &stored)?;

    let mut written_training: Vec<*const super::run::TrainingData> = Vec::new();
    for run in &suite.runs {
        let vdir = dir.join("variants").join(sanitize(&run.config.name));
        fs::create_dir_all(&vdir)?;
        write_jsonl(&vdir.join("transcript.jsonl"), run.transcript())?;
        if !run.selections.is_empty() {
            let mut w = csv::Writer::from_path(vdir.join("selections.csv")).map_err(csv_err)?;
            for s in &run.selections {
                w.serialize(s).map_err(csv_err)?;
            }
            w.flush()?;
            fs::write(vdir.join("fronts.json"), serde_json::to_string_pretty(&run.fronts)? + "\n")?;
        }
        if let Some(model) = &run.model {
            fs::write(vdir.join("model.json"), model.to_json() + "\n")?;
        }
        if let Some(t) = &run.training {
            let ptr = std::sync::Arc::as_ptr(t);
            if !written_training.contains(&ptr) {
                written_training.push(ptr);
                let tdir = dir.join("training").join(format!("{}-{}", run.config.seed, sanitize(&run.config.split.train.join("+"))));
                fs::create_dir_all(&tdir)?;
                let id = format!("train-{}", run.config.seed);
                let lines = t
                    .solo
                    .iter()
                    .map(|r| crate::agents::TranscriptLine::from_solo(&id, r))
                    .chain(t.paired.iter().flat_map(|r| crate::agents::TranscriptLine::from_paired(&id, r)));
                write_jsonl(&tdir.join("transcript.jsonl"), lines)?;
                crate::features::write_dataset(&t.samples, fs::File::create(tdir.join("dataset.csv"))?)?;
            }
        }
    }
    Ok(stored)
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' || c == '+' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::LearnerId;
    use crate::harness::metrics::{compute_metrics, gain_report};

    fn stored() -> StoredResults {
        let acc = |t: f64| LearnerAccuracy {
            learner_id: LearnerId(0),
            persona: None,
            stem: Some(t),
            social_science: Some(t),
            humanities: None,
            total: t,
        };
        let configs = [VariantConfig::baseline(), VariantConfig::clm()];
        let metrics = MetricsTable {
            rows: vec![compute_metrics("Baseline", &[acc(0.26)]).unwrap(), compute_metrics("CLM", &[acc(0.3047)]).unwrap()],
        };
        let gains = gain_report(&metrics, "Baseline").unwrap();
        StoredResults {
            format: RESULTS_FORMAT.into(),
            baseline: "Baseline".into(),
            variants: configs
                .iter()
                .zip([0.26, 0.3047])
                .map(|(c, t)| StoredVariant {
                    config: c.clone(),
                    accuracies: vec![acc(t)],
                    selections: 0,
                    complementary_rate: None,
                    fallbacks: 0,
                })
                .collect(),
            metrics,
            gains,
        }
    }

    #[test]
    fn tables_render_expected_cells() {
        let r = stored();
        let t2 = table2_txt(&r);
        assert!(t2.contains("30.47 (+4.47)"));
        assert!(t2.contains("26.00 (+0.00)"));
        assert!(t2.contains("split: train=[machine_learning, marketing, arts]"));
        let c2 = table2_csv(&r);
        assert_eq!(c2.lines().count(), 3);
        assert!(c2.lines().nth(2).unwrap().starts_with("CLM,yes,yes,-,-,30.47,4.47,30.47 (+4.47)"));
        let c1 = table1_csv(&r.metrics);
        assert_eq!(c1.lines().count(), 1 + 2 * 4);
        assert!(c1.contains("Baseline,Humanities,n/a,n/a,n/a"));
        let t1 = table1_txt(&r.metrics);
        assert!(t1.lines().all(|l| !l.ends_with(' ')));
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = stored();
        fs::write(dir.path().join("results.json"), serde_json::to_string(&r).unwrap()).unwrap();
        let back = StoredResults::load(dir.path().join("results.json")).unwrap();
        assert_eq!(back, r);
        write_reports(dir.path(), &back).unwrap();
        assert!(dir.path().join("table2.txt").exists());
    }
}
