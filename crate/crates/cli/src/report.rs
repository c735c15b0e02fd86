//! Evaluation reports: JSONL for machines, an aligned table for people.
//!
//! The JSONL form has one `meta` line, one `row` line per (utterance,
//! system, metric) and one `aggregate` line per (system, metric).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemInfo {
    /// Key used in rows (`noisy`, `s1`, ..., `blend`).
    pub name: String,
    /// Row label in the table.
    pub label: String,
    /// Number of shift offsets, when more than one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub run_config_hash: String,
    pub metrics: Vec<String>,
    pub systems: Vec<SystemInfo>,
    pub utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub utt_id: String,
    pub system: String,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub capped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub system: String,
    pub metric: String,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub count: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Meta(ReportMeta),
    Row(ReportRow),
    Aggregate(Aggregate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

impl EvalReport {
    /// Builds the aggregates from `rows`, in system-then-metric order.
    pub fn new(meta: ReportMeta, rows: Vec<ReportRow>) -> Self {
        let mut aggregates = Vec::new();
        for sys in &meta.systems {
            for metric in &meta.metrics {
                let sel = rows.iter().filter(|r| r.system == sys.name && &r.metric == metric);
                let mut vals: Vec<f64> = sel.clone().filter_map(|r| r.value).collect();
                let errors = sel.filter(|r| r.value.is_none()).count();
                vals.sort_by(f64::total_cmp);
                let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
                aggregates.push(Aggregate {
                    system: sys.name.clone(),
                    metric: metric.clone(),
                    mean,
                    median: median(&vals),
                    count: vals.len(),
                    errors,
                });
            }
        }
        Self { meta, rows, aggregates }
    }

    pub fn error_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn aggregate(&self, system: &str, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.system == system && a.metric == metric)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = std::iter::once(Line::Meta(self.meta.clone()))
            .chain(self.rows.iter().cloned().map(Line::Row))
            .chain(self.aggregates.iter().cloned().map(Line::Aggregate));
        for l in lines {
            out.push_str(&serde_json::to_string(&l).expect("report serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let (mut meta, mut rows, mut aggregates) = (None, Vec::new(), Vec::new());
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                Line::Meta(m) => meta = Some(m),
                Line::Row(r) => rows.push(r),
                Line::Aggregate(a) => aggregates.push(a),
            }
        }
        let meta = meta.ok_or_else(|| CliError::Usage("report has no meta record".into()))?;
        Ok(Self { meta, rows, aggregates })
    }

    /// Mean per system and metric, one row per system:
    ///
    /// ```text
    /// Method          | Shifts | si_sdr | sdr
    /// ----------------+--------+--------+------
    /// Noisy           | -      |   5.02 |  5.11
    /// ```
    pub fn to_table(&self) -> String {
        let mut header = vec!["Method".to_string(), "Shifts".to_string()];
        header.extend(self.meta.metrics.iter().cloned());
        let mut body: Vec<Vec<String>> = Vec::new();
        for sys in &self.meta.systems {
            let mut row = vec![sys.label.clone(), sys.shifts.map_or("-".into(), |n| n.to_string())];
            for m in &self.meta.metrics {
                let cell = self
                    .aggregate(&sys.name, m)
                    .and_then(|a| a.mean)
                    .map_or("n/a".into(), |v| format!("{v:.2}"));
                row.push(cell);
            }
            body.push(row);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| body.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let fmt_row = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c < 2 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            parts.join(" | ").trim_end().to_string()
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", fmt_row(&header));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("-+-"));
        for r in &body {
            let _ = writeln!(out, "{}", fmt_row(r));
        }
        let _ = writeln!(
            out,
            "\n{} utterances, {} error rows, config {}, urgentkit {}",
            self.meta.utterances,
            self.error_rows(),
            short_hash(&self.meta.run_config_hash),
            self.meta.tool_version
        );
        out
    }

    /// Writes `path` (JSONL) and the table next to it with a `.txt`
    /// extension.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(path, self.to_jsonl()).map_err(io_err(path))?;
        let txt = path.with_extension("txt");
        fs::write(&txt, self.to_table()).map_err(io_err(&txt))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_jsonl(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

fn short_hash(h: &str) -> &str {
    &h[..h.len().min(12)]
}

/// Re-renders a JSONL report as a table, to `out` or as the return value.
pub fn cmd_report(input: &Path, out: Option<&Path>) -> Result<String> {
    let table = EvalReport::read(input)?.to_table();
    if let Some(p) = out {
        fs::write(p, &table).map_err(io_err(p))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        let meta = ReportMeta {
            tool_version: "0.1.0".into(),
            run_config_hash: "abcdef0123456789".into(),
            metrics: vec!["si_sdr".into()],
            systems: vec![
                SystemInfo {
                    name: "noisy".into(),
                    label: "Noisy".into(),
                    shifts: None,
                },
                SystemInfo {
                    name: "s1".into(),
                    label: "Stage 1 (S1)".into(),
                    shifts: Some(10),
                },
            ],
            utterances: 3,
        };
        let row = |u: &str, s: &str, v: Option<f64>| ReportRow {
            utt_id: u.into(),
            system: s.into(),
            metric: "si_sdr".into(),
            value: v,
            capped: false,
            error: v.is_none().then(|| "missing".to_string()),
        };
        EvalReport::new(
            meta,
            vec![
                row("a", "noisy", Some(1.0)),
                row("b", "noisy", Some(4.0)),
                row("c", "noisy", Some(2.0)),
                row("a", "s1", Some(3.0)),
                row("b", "s1", None),
                row("c", "s1", Some(5.0)),
            ],
        )
    }

    #[test]
    fn aggregates_skip_error_rows() {
        let r = sample();
        let n = r.aggregate("noisy", "si_sdr").unwrap();
        assert_eq!((n.mean, n.median, n.count), (Some(7.0 / 3.0), Some(2.0), 3));
        let s = r.aggregate("s1", "si_sdr").unwrap();
        assert_eq!((s.mean, s.median, s.count, s.errors), (Some(4.0), Some(4.0), 2, 1));
    }

    #[test]
    fn jsonl_round_trips() {
        let r = sample();
        let text = r.to_jsonl();
        assert_eq!(text.lines().count(), 1 + 6 + 2);
        assert_eq!(EvalReport::from_jsonl(&text).unwrap(), r);
    }

    #[test]
    fn table_has_a_row_per_system() {
        let t = sample().to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Method"));
        assert!(lines[0].contains("Shifts") && lines[0].contains("si_sdr"));
        assert!(lines[2].starts_with("Noisy") && lines[2].ends_with("2.33"));
        assert!(lines[3].contains("| 10"));
        assert!(t.contains("1 error rows"));
    }
}
