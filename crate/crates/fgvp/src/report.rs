//! Evaluation reports: JSON (canonical) and Markdown renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Rec,
    Partdet,
}

/// Which box of the chosen proposal was compared against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxSource {
    /// The detector box the proposal was queried with.
    Query,
    /// The tight box of the proposal mask.
    Tight,
    /// Nothing was selected.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetOutcome {
    /// Caption or part label.
    pub text: String,
    pub hit: bool,
    pub iou: f64,
    pub proposal: Option<usize>,
    pub predicted: Option<[f64; 4]>,
    pub gt: [f64; 4],
    pub box_source: BoxSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub index: usize,
    pub image: String,
    pub proposals: usize,
    pub targets: Vec<TargetOutcome>,
    /// Final post-processed scores, one row per proposal.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecordOutcome {
    pub fn hits(&self) -> usize {
        self.targets.iter().filter(|t| t.hit).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub accuracy: f64,
    pub hits: usize,
    pub total: usize,
    pub failed_records: usize,
    /// Images per second; absent when the run is meant to be reproducible.
    pub ips: Option<f64>,
    pub config: RunConfig,
    pub records: Vec<RecordOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl ReportFormat {
    /// `.md` / `.markdown` select Markdown; anything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("md") | Some("markdown") => ReportFormat::Markdown,
            _ => ReportFormat::Json,
        }
    }
}

impl EvalReport {
    /// Aggregates outcomes; records are ordered by index first, so the
    /// result does not depend on the order they finished in.
    pub fn from_outcomes(task: Task, config: RunConfig, mut records: Vec<RecordOutcome>, ips: Option<f64>) -> Self {
        records.sort_by_key(|r| r.index);
        let hits = records.iter().map(RecordOutcome::hits).sum();
        let total = records.iter().map(|r| r.targets.len()).sum();
        let failed_records = records.iter().filter(|r| r.error.is_some()).count();
        let accuracy = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
        Self {
            task,
            accuracy,
            hits,
            total,
            failed_records,
            ips,
            config,
            records,
        }
    }

    pub fn hit_flags(&self) -> Vec<bool> {
        self.records.iter().flat_map(|r| r.targets.iter().map(|t| t.hit)).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let task = match self.task {
            Task::Rec => "Referring expression comprehension",
            Task::Partdet => "Part detection",
        };
        let _ = writeln!(s, "# {task}\n");
        let _ = writeln!(s, "| metric | value |\n|---|---|");
        let _ = writeln!(s, "| accuracy | {:.4} |", self.accuracy);
        let _ = writeln!(s, "| hits | {} |", self.hits);
        let _ = writeln!(s, "| total | {} |", self.total);
        let _ = writeln!(s, "| failed records | {} |", self.failed_records);
        match self.ips {
            Some(ips) => {
                let _ = writeln!(s, "| images/s | {ips:.3} |");
            }
            None => {
                let _ = writeln!(s, "| images/s | n/a |");
            }
        }
        let _ = writeln!(s, "\n## Configuration\n\n```json\n{}\n```\n", serde_json::to_string_pretty(&self.config).expect("config serializes"));
        let _ = writeln!(s, "## Records\n\n| # | image | text | hit | IoU | box | error |\n|---|---|---|---|---|---|---|");
        for r in &self.records {
            if r.targets.is_empty() {
                let _ = writeln!(s, "| {} | {} | | | | | {} |", r.index, r.image, r.error.as_deref().unwrap_or(""));
            }
            for t in &r.targets {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {:.3} | {} | {} |",
                    r.index,
                    r.image,
                    t.text.replace('|', "\\|"),
                    if t.hit { "yes" } else { "no" },
                    t.iou,
                    match t.box_source {
                        BoxSource::Query => "query",
                        BoxSource::Tight => "tight",
                        BoxSource::None => "-",
                    },
                    r.error.as_deref().unwrap_or("").replace('|', "\\|"),
                );
            }
        }
        s
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> std::io::Result<()> {
        let text = match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Markdown => self.to_markdown(),
        };
        write_atomic(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target(hit: bool) -> TargetOutcome {
        TargetOutcome {
            text: "a|b".into(),
            hit,
            iou: if hit { 1.0 } else { 0.0 },
            proposal: Some(0),
            predicted: Some([0.0, 0.0, 1.0, 1.0]),
            gt: [0.0, 0.0, 1.0, 1.0],
            box_source: BoxSource::Query,
        }
    }

    fn record(index: usize, hits: &[bool]) -> RecordOutcome {
        RecordOutcome {
            index,
            image: format!("{index}.png"),
            proposals: 1,
            targets: hits.iter().map(|&h| target(h)).collect(),
            scores: vec![],
            error: None,
        }
    }

    #[test]
    fn aggregation_is_order_normalized() {
        let a = EvalReport::from_outcomes(Task::Rec, RunConfig::default(), vec![record(1, &[true]), record(0, &[false])], None);
        let b = EvalReport::from_outcomes(Task::Rec, RunConfig::default(), vec![record(0, &[false]), record(1, &[true])], None);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!((a.hits, a.total, a.accuracy), (1, 2, 0.5));
        assert_eq!(a.hit_flags(), vec![false, true]);
    }

    #[test]
    fn json_has_the_documented_keys() {
        let r = EvalReport::from_outcomes(Task::Partdet, RunConfig::default(), vec![record(0, &[true, true, false])], Some(2.5));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for k in ["accuracy", "hits", "total", "config", "ips"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["task"], "partdet");
        assert_eq!(serde_json::from_value::<EvalReport>(v).unwrap(), r);
        let md = r.to_markdown();
        assert!(md.contains("| accuracy | 0.6667 |"));
        assert!(md.contains("a\\|b"));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(ReportFormat::from_path(Path::new("r.md")), ReportFormat::Markdown);
        assert_eq!(ReportFormat::from_path(Path::new("r.json")), ReportFormat::Json);
    }
}
