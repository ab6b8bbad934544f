//! Report rendering: CSV tables and a plain-text summary assembled from the
//! evaluation artifacts a run has produced so far. Regenerating over the
//! same artifacts is byte-idempotent.

use crate::eval::{AblationRow, ConfusionReport};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing artifact: {0} (run the producing subcommand first)")]
    MissingArtifact(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed artifact {path}: {source}")]
    Malformed {
        path: String,
        source: serde_json::Error,
    },
}

/// Per-method evaluation results, as written by the `eval` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: String,
    pub confusion: ConfusionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_failures: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_5: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// The main results table: one row per evaluated method. Columns without a
/// measurement stay empty rather than fabricating zeros.
pub fn render_table2(rows: &[EvalSummary]) -> String {
    let mut out = String::from(
        "method,correct,false_positive,false_negative,misclassified,position_accuracy,exact_match,recall_at_1,recall_at_3,recall_at_5\n",
    );
    for r in rows {
        let c = &r.confusion;
        writeln!(
            out,
            "{},{},{},{},{},{:.4},{},{},{},{}",
            r.method,
            c.correct,
            c.false_positive,
            c.false_negative,
            c.misclassified,
            c.accuracy(),
            fmt_opt(r.exact_match),
            fmt_opt(r.recall_at_1),
            fmt_opt(r.recall_at_3),
            fmt_opt(r.recall_at_5),
        )
        .unwrap();
    }
    out
}

/// The k-sweep table.
pub fn render_table3(rows: &[AblationRow]) -> String {
    let mut out = String::from("method,k,recall_at_1,recall_at_3,recall_at_5,latency_multiplier\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.2}",
            r.method, r.k, r.recall_at_1, r.recall_at_3, r.recall_at_5, r.latency_multiplier
        )
        .unwrap();
    }
    out
}

pub fn render_summary(evals: &[EvalSummary], ablation: Option<&[AblationRow]>) -> String {
    let mut out = String::new();
    writeln!(out, "run summary").unwrap();
    writeln!(out, "===========").unwrap();
    for r in evals {
        let c = &r.confusion;
        writeln!(out, "\nmethod: {}", r.method).unwrap();
        writeln!(
            out,
            "  positions scored {} | correct {} | fp {} | fn {} | misclassified {}",
            c.scored(),
            c.correct,
            c.false_positive,
            c.false_negative,
            c.misclassified
        )
        .unwrap();
        writeln!(out, "  position accuracy {:.4}", c.accuracy()).unwrap();
        if let Some(em) = r.exact_match {
            writeln!(out, "  exact match {:.4}", em).unwrap();
        }
        if let Some(pf) = r.parse_failures {
            writeln!(out, "  parse failures {}", pf).unwrap();
        }
        if let (Some(r1), Some(r3), Some(r5)) = (r.recall_at_1, r.recall_at_3, r.recall_at_5) {
            writeln!(out, "  recall@1 {:.4} | recall@3 {:.4} | recall@5 {:.4}", r1, r3, r5).unwrap();
        }
    }
    if let Some(rows) = ablation {
        writeln!(out, "\nk sweep").unwrap();
        for r in rows {
            writeln!(
                out,
                "  {} k={} rec@1 {:.4} rec@3 {:.4} rec@5 {:.4} latency x{:.2}",
                r.method, r.k, r.recall_at_1, r.recall_at_3, r.recall_at_5, r.latency_multiplier
            )
            .unwrap();
        }
    }
    out
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    if !path.exists() {
        return Err(ReportError::MissingArtifact(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| ReportError::Malformed {
        path: path.display().to_string(),
        source,
    })
}

/// Assemble `report/` from whatever artifacts exist under `out`. The eval
/// artifact is required; the ablation table is included when present.
pub fn write_reports(out_dir: &Path) -> Result<(), ReportError> {
    let evals: Vec<EvalSummary> = load_json(&out_dir.join("eval.json"))?;
    let report_dir = out_dir.join("report");
    std::fs::create_dir_all(&report_dir)?;
    std::fs::write(report_dir.join("table2.csv"), render_table2(&evals))?;
    let ablation_path = out_dir.join("ablation.json");
    let ablation: Option<Vec<AblationRow>> = if ablation_path.exists() {
        Some(load_json(&ablation_path)?)
    } else {
        None
    };
    if let Some(rows) = &ablation {
        std::fs::write(report_dir.join("table3.csv"), render_table3(rows))?;
    }
    std::fs::write(
        report_dir.join("summary.txt"),
        render_summary(&evals, ablation.as_deref()),
    )?;
    Ok(())
}
