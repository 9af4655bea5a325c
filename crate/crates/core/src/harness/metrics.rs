use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{LearnerId, Persona};

/// Reporting columns: the three subject categories plus the overall score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReportCategory {
    #[serde(rename = "STEM")]
    Stem,
    #[serde(rename = "Social Science")]
    SocialScience,
    #[serde(rename = "Humanities")]
    Humanities,
    #[serde(rename = "Total")]
    Total,
}

impl ReportCategory {
    pub const ALL: [ReportCategory; 4] = [
        ReportCategory::Stem,
        ReportCategory::SocialScience,
        ReportCategory::Humanities,
        ReportCategory::Total,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ReportCategory::Stem => "STEM",
            ReportCategory::SocialScience => "Social Science",
            ReportCategory::Humanities => "Humanities",
            ReportCategory::Total => "Total",
        }
    }
}

/// Accuracy of one learner on the test exercises. A category without test
/// exercises is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerAccuracy {
    pub learner_id: LearnerId,
    pub persona: Option<Persona>,
    pub stem: Option<f64>,
    pub social_science: Option<f64>,
    pub humanities: Option<f64>,
    pub total: f64,
}

impl LearnerAccuracy {
    pub fn get(&self, c: ReportCategory) -> Option<f64> {
        match c {
            ReportCategory::Stem => self.stem,
            ReportCategory::SocialScience => self.social_science,
            ReportCategory::Humanities => self.humanities,
            ReportCategory::Total => Some(self.total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub best: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Result<Stat, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Metrics("no learner accuracies".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Stat {
        mean,
        best,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub stem: Option<Stat>,
    pub social_science: Option<Stat>,
    pub humanities: Option<Stat>,
    pub total: Stat,
}

impl MetricsRow {
    pub fn get(&self, c: ReportCategory) -> Option<Stat> {
        match c {
            ReportCategory::Stem => self.stem,
            ReportCategory::SocialScience => self.social_science,
            ReportCategory::Humanities => self.humanities,
            ReportCategory::Total => Some(self.total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, variant: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Mean, best and population std over learners, per category.
pub fn compute_metrics(variant: &str, learners: &[LearnerAccuracy]) -> Result<MetricsRow, HarnessError> {
    if learners.is_empty() {
        return Err(HarnessError::Metrics(format!("variant `{variant}` has no learners")));
    }
    let stat = |c: ReportCategory| -> Result<Option<Stat>, HarnessError> {
        let values: Vec<f64> = learners.iter().filter_map(|l| l.get(c)).collect();
        if values.is_empty() {
            Ok(None)
        } else {
            summarize(&values).map(Some)
        }
    };
    Ok(MetricsRow {
        variant: variant.to_string(),
        stem: stat(ReportCategory::Stem)?,
        social_science: stat(ReportCategory::SocialScience)?,
        humanities: stat(ReportCategory::Humanities)?,
        total: summarize(&learners.iter().map(|l| l.total).collect::<Vec<_>>())?,
    })
}

/// `AA.AA (+G.GG)` in percent; a gain that rounds to zero prints `+0.00`.
pub fn format_gain_cell(variant_mean: f64, baseline_mean: f64) -> String {
    let acc = 100.0 * variant_mean;
    let gain = 100.0 * variant_mean - 100.0 * baseline_mean;
    let magnitude = format!("{:.2}", gain.abs());
    let sign = if gain < 0.0 && magnitude != "0.00" { '\u{2212}' } else { '+' };
    format!("{acc:.2} ({sign}{magnitude})")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub variant: String,
    pub total_mean: f64,
    /// Percentage points over the baseline.
    pub gain: f64,
    pub cell: String,
}

/// Total-mean accuracy of every row against the named baseline row.
pub fn gain_report(table: &MetricsTable, baseline: &str) -> Result<Vec<GainRow>, HarnessError> {
    let base = table
        .row(baseline)
        .ok_or_else(|| HarnessError::Metrics(format!("baseline row `{baseline}` is missing")))?
        .total
        .mean;
    Ok(table
        .rows
        .iter()
        .map(|r| GainRow {
            variant: r.variant.clone(),
            total_mean: r.total.mean,
            gain: 100.0 * (r.total.mean - base),
            cell: format_gain_cell(r.total.mean, base),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(id: u32, total: f64) -> LearnerAccuracy {
        LearnerAccuracy {
            learner_id: LearnerId(id),
            persona: None,
            stem: Some(total),
            social_science: None,
            humanities: Some(1.0 - total),
            total,
        }
    }

    #[test]
    fn two_learner_stats() {
        let s = summarize(&[0.2, 0.4]).unwrap();
        assert!((s.mean - 0.3).abs() < 1e-15);
        assert_eq!(s.best, 0.4);
        assert!((s.std - 0.1).abs() < 1e-15);
        let one = summarize(&[0.7]).unwrap();
        assert_eq!((one.mean, one.best, one.std), (0.7, 0.7, 0.0));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn rows_per_category() {
        let row = compute_metrics("v", &[acc(0, 0.2), acc(1, 0.4)]).unwrap();
        assert!(row.social_science.is_none());
        assert!((row.humanities.unwrap().mean - 0.7).abs() < 1e-15);
        assert_eq!(row.total.best, 0.4);
        assert!(compute_metrics("v", &[]).is_err());
    }

    #[test]
    fn gain_cells() {
        assert_eq!(format_gain_cell(0.3047, 0.2600), "30.47 (+4.47)");
        assert_eq!(format_gain_cell(0.26, 0.26), "26.00 (+0.00)");
        assert_eq!(format_gain_cell(0.25, 0.26), "25.00 (\u{2212}1.00)");
        assert_eq!(format_gain_cell(0.259_999_9, 0.26), "26.00 (+0.00)");
    }

    #[test]
    fn gain_report_needs_baseline() {
        let table = MetricsTable {
            rows: vec![compute_metrics("Baseline", &[acc(0, 0.26)]).unwrap(), compute_metrics("X", &[acc(0, 0.3047)]).unwrap()],
        };
        let rows = gain_report(&table, "Baseline").unwrap();
        assert_eq!(rows[0].cell, "26.00 (+0.00)");
        assert_eq!(rows[1].cell, "30.47 (+4.47)");
        assert!(gain_report(&table, "Nope").is_err());
    }
}
