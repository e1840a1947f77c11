//! Experiment reports: JSON for machines, CSV with one row per metric, and
//! a plain-text summary. Reports hold no timing so that reruns compare
//! byte for byte; wall-clock figures go to a separate file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::CorpusSummary;
use super::experiment::{fraction, ClassificationResult, ContaminationResult, ImpersonationResult};
use crate::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const TIMING_JSON: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    pub classification: Option<ClassificationResult>,
    pub impersonation: Option<ImpersonationResult>,
    pub contamination: Option<ContaminationResult>,
}

/// Wall-clock seconds per phase; kept out of [`Report`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phases: BTreeMap<String, f64>,
}

impl Timing {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join(TIMING_JSON);
        let body = serde_json::to_string_pretty(self).expect("timing serializes");
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    }
}

impl Report {
    pub fn new(
        cfg: &ExperimentConfig,
        corpus: CorpusSummary,
        classification: Option<ClassificationResult>,
        impersonation: Option<ImpersonationResult>,
        contamination: Option<ContaminationResult>,
    ) -> Self {
        Report {
            name: cfg.name.clone(),
            seed: cfg.seed,
            config: cfg.clone(),
            corpus,
            classification,
            impersonation,
            contamination,
        }
    }

    /// Every scalar result with the id of the scenario it belongs to.
    pub fn metrics(&self) -> Vec<MetricRow> {
        let mut out = Vec::new();
        let mut push = |scenario: String, metric: &str, value: f64| {
            out.push(MetricRow { scenario, metric: metric.to_string(), value });
        };
        if let Some(c) = &self.classification {
            for b in &c.base {
                push(format!("classification/{}/base", b.feature.name()), "chamber_accuracy", b.chamber_accuracy);
                push(format!("classification/{}/base", b.feature.name()), "env_accuracy", b.env_accuracy);
            }
            for r in &c.rows {
                let id = format!("classification/{}/{}/n{}", r.feature.name(), r.mode.name(), r.samples);
                push(id, "accuracy", r.accuracy);
            }
        }
        if let Some(i) = &self.impersonation {
            for r in &i.rows {
                let id = format!("impersonation/{}/{}/n{}", r.feature.name(), r.mode.name(), r.samples);
                push(id.clone(), "micro_auc", r.micro_auc);
                push(id, "target_auc", r.target_auc);
            }
        }
        if let Some(k) = &self.contamination {
            for d in &k.draws {
                let id = format!("contamination/n{}/attack{:02}", d.samples, d.pair);
                push(id.clone(), "transfer_auc", d.transfer_auc);
                push(id.clone(), "scratch_auc", d.scratch_auc);
                push(id, "target_margin", d.target_margin);
            }
            for m in &k.normal_margins {
                let id = format!("contamination/n{}/normal{:02}", m.samples, m.pair);
                let defined: Vec<f64> = m.margins.iter().flatten().copied().collect();
                push(id, "positive_margin_fraction", fraction(defined.iter().map(|&v| v > 0.0)));
            }
            for r in &k.detection {
                let id = format!("detection/n{}", r.samples);
                if let Some(v) = r.detection_rate {
                    push(id.clone(), "detection_rate", v);
                }
                if let Some(v) = r.false_alarm_rate {
                    push(id.clone(), "false_alarm_rate", v);
                }
                push(id.clone(), "training_outliers", r.training_outliers);
                if let Some(v) = r.separation {
                    push(id, "separation", v);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,metric,value\n");
        for m in self.metrics() {
            let _ = writeln!(s, "{},{},{}", m.scenario, m.metric, m.value);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} (seed {})", self.name, self.seed);
        let c = &self.corpus;
        let _ = writeln!(
            s,
            "devices: {} legitimate, {} rogue; {} captures ({}), {} filter rejections",
            c.legit.len(),
            c.rogue.len(),
            c.captures,
            c.environment.name(),
            c.rejected
        );
        if let Some(cl) = &self.classification {
            let _ = writeln!(s, "\nclassification accuracy");
            for b in &cl.base {
                let _ = writeln!(
                    s,
                    "  {:<12} base      chamber {:.3}  deployment {:.3}",
                    b.feature.name(),
                    b.chamber_accuracy,
                    b.env_accuracy
                );
            }
            for r in &cl.rows {
                let _ = writeln!(s, "  {:<12} {:<9} n={:<4} {:.3}", r.feature.name(), r.mode.name(), r.samples, r.accuracy);
            }
        }
        if let Some(im) = &self.impersonation {
            let _ = writeln!(s, "\nimpersonation AUC");
            for r in &im.rows {
                let _ = writeln!(
                    s,
                    "  {:<12} {:<9} micro {:.4}  per-target {:.4}",
                    r.feature.name(),
                    r.mode.name(),
                    r.micro_auc,
                    r.target_auc
                );
            }
        }
        if let Some(k) = &self.contamination {
            let _ = writeln!(s, "\ncontamination draws");
            for d in &k.draws {
                let _ = writeln!(
                    s,
                    "  n={} {} <- {}: transfer AUC {:.3}, scratch AUC {:.3}, target margin {:+.3}",
                    d.samples, d.target, d.rogue, d.transfer_auc, d.scratch_auc, d.target_margin
                );
            }
            let all: Vec<f64> = k.normal_margins.iter().flat_map(|m| m.margins.iter().flatten().copied()).collect();
            if !all.is_empty() {
                let _ = writeln!(
                    s,
                    "  no-attack margins positive: {:.3} of {}",
                    fraction(all.iter().map(|&v| v > 0.0)),
                    all.len()
                );
            }
            let _ = writeln!(s, "\ndetection");
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
            for r in &k.detection {
                let _ = writeln!(
                    s,
                    "  n={:<4} rate {} false alarms {} ({} normals, {} held out, {} attacks)",
                    r.samples,
                    opt(r.detection_rate),
                    opt(r.false_alarm_rate),
                    r.normals,
                    r.heldout,
                    r.attacks
                );
            }
        }
        s
    }

    /// Write the JSON, CSV and text renderings into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [(REPORT_JSON, self.to_json()), (REPORT_CSV, self.to_csv()), (REPORT_TXT, self.to_text())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
