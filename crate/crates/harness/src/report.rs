use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::Config;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub experiment: String,
    pub check: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub experiment: String,
    pub name: String,
    pub value: f64,
}

/// Results of one experiment before they are merged into a report.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub verdicts: Vec<Verdict>,
    pub stats: Vec<Stat>,
    /// (file name, CSV contents).
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn verdict(&mut self, experiment: &str, check: &str, status: Status, detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            experiment: experiment.into(),
            check: check.into(),
            status,
            detail: detail.into(),
        });
    }

    pub fn check(&mut self, experiment: &str, check: &str, ok: bool, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.verdict(experiment, check, status, detail);
    }

    pub fn stat(&mut self, experiment: &str, name: &str, value: f64) {
        self.stats.push(Stat {
            experiment: experiment.into(),
            name: name.into(),
            value,
        });
    }

    pub fn table(&mut self, name: &str, csv: String) {
        self.tables.push((name.into(), csv));
    }

    pub fn merge(&mut self, other: Outcome) {
        self.verdicts.extend(other.verdicts);
        self.stats.extend(other.stats);
        self.tables.extend(other.tables);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: Config,
    pub config_hash: String,
    pub verdicts: Vec<Verdict>,
    pub stats: Vec<Stat>,
}

impl ExperimentReport {
    pub fn new(config: &Config, outcome: &Outcome) -> Self {
        Self {
            config: config.clone(),
            config_hash: config.hash(),
            verdicts: outcome.verdicts.clone(),
            stats: outcome.stats.clone(),
        }
    }

    pub fn failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Fail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn find(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    pub fn stat(&self, name: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.name == name).map(|s| s.value)
    }
}

/// Writes report.json and the CSV tables into `dir`.
pub fn emit_report(report: &ExperimentReport, tables: &[(String, String)], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json())?;
    for (name, csv) in tables {
        fs::write(dir.join(name), csv)?;
    }
    Ok(())
}
