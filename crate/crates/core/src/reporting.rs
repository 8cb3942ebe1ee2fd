//! Rendering of sweep tables as CSV, JSON and aligned Markdown.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{RowStats, SweepRow, SweepTable};
use crate::metrics::AggregateStats;

pub const CSV_HEADER: &str = "dataset,embedder,model,chunk_size,iou_mean,iou_std,recall_mean,recall_std,p_mean,p_std,pomega_mean,pomega_std,n";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("nothing to report: the table has no rows")]
    EmptyTable,
    #[error("float_precision must be between 1 and 10, got {0}")]
    InvalidPrecision(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    #[default]
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn default_precision() -> usize {
    4
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    #[serde(default)]
    pub format: ReportFormat,
    /// Bold the highest mean of each metric within a dataset (markdown only).
    #[serde(default = "default_true")]
    pub bold_best: bool,
    /// Bold the lowest std of each metric within a dataset (markdown only).
    #[serde(default)]
    pub bold_lowest_std: bool,
    #[serde(default = "default_precision")]
    pub float_precision: usize,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self {
            format: ReportFormat::Markdown,
            bold_best: true,
            bold_lowest_std: false,
            float_precision: default_precision(),
        }
    }
}

impl ReportSpec {
    pub fn new(format: ReportFormat) -> Self {
        Self {
            format,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if (1..=10).contains(&self.float_precision) {
            Ok(())
        } else {
            Err(ReportError::InvalidPrecision(self.float_precision))
        }
    }
}

/// Formats `x` with `places` decimals, rounding half to even on the exact
/// binary value. `0.125` becomes `0.12` at two places.
pub fn round_half_even(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    // 1100 digits covers the full expansion of any f64.
    let exact = format!("{:.1100}", x.abs());
    let (int_part, frac) = exact.split_once('.').expect("fixed notation has a point");
    let mut digits: Vec<u8> = int_part.bytes().chain(frac.bytes().take(places)).map(|b| b - b'0').collect();
    let rest = &frac.as_bytes()[places..];
    let round_up = match rest.first() {
        Some(b'5') => rest[1..].iter().any(|&b| b != b'0') || digits.last().is_some_and(|d| d % 2 == 1),
        Some(&b) => b > b'5',
        None => false,
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let to_str = |d: &[u8]| d.iter().map(|d| char::from(b'0' + d)).collect::<String>();
    let int_str = to_str(&digits[..split]);
    let int_str = match int_str.trim_start_matches('0') {
        "" => "0",
        s => s,
    };
    let body = if places == 0 {
        int_str.to_owned()
    } else {
        format!("{int_str}.{}", to_str(&digits[split..]))
    };
    let is_zero = digits.iter().all(|&d| d == 0);
    if x.is_sign_negative() && !is_zero {
        format!("-{body}")
    } else {
        body
    }
}

/// Renders `table` according to `spec`. Deterministic in both inputs.
pub fn emit(table: &SweepTable, spec: &ReportSpec) -> Result<Vec<u8>, ReportError> {
    spec.validate()?;
    if table.rows.is_empty() {
        return Err(ReportError::EmptyTable);
    }
    let out = match spec.format {
        ReportFormat::Csv => csv(table, spec.float_precision),
        ReportFormat::Json => json(table, spec.float_precision),
        ReportFormat::Markdown => markdown(table, spec),
    };
    Ok(out.into_bytes())
}

fn metric_columns(s: &RowStats) -> [&AggregateStats; 4] {
    [&s.iou, &s.recall, &s.precision, &s.precision_omega]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn csv(table: &SweepTable, places: usize) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        let mut cells = vec![
            csv_field(&row.dataset),
            csv_field(&row.embedder),
            csv_field(&row.model),
            row.chunk_size.to_string(),
        ];
        match &row.stats {
            Some(stats) => {
                for m in metric_columns(stats) {
                    cells.push(round_half_even(m.mean, places));
                    cells.push(round_half_even(m.std, places));
                }
                cells.push(stats.n().to_string());
            }
            // failed cell: metrics left blank
            None => cells.extend(std::iter::repeat_n(String::new(), 9)),
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema_version: u32,
    float_precision: usize,
    rows: Vec<JsonRow<'a>>,
}

#[derive(Serialize)]
struct JsonRow<'a> {
    dataset: &'a str,
    embedder: &'a str,
    model: &'a str,
    chunk_size: usize,
    k: usize,
    #[serde(flatten)]
    metrics: Option<HashMap<&'static str, serde_json::Number>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

const METRIC_KEYS: [[&str; 2]; 4] = [
    ["iou_mean", "iou_std"],
    ["recall_mean", "recall_std"],
    ["p_mean", "p_std"],
    ["pomega_mean", "pomega_std"],
];

fn json(table: &SweepTable, places: usize) -> String {
    let number = |x: f64| -> serde_json::Number {
        let rounded: f64 = round_half_even(x, places).parse().expect("rounded value parses");
        serde_json::Number::from_f64(rounded).expect("finite")
    };
    let rows = table
        .rows
        .iter()
        .map(|row| JsonRow {
            dataset: &row.dataset,
            embedder: &row.embedder,
            model: &row.model,
            chunk_size: row.chunk_size,
            k: row.k,
            metrics: row.stats.as_ref().map(|s| {
                METRIC_KEYS
                    .iter()
                    .zip(metric_columns(s))
                    .flat_map(|([mk, sk], m)| [(*mk, number(m.mean)), (*sk, number(m.std))])
                    .collect()
            }),
            n: row.stats.as_ref().map(RowStats::n),
            error: row.error.as_deref(),
        })
        .collect();
    let report = JsonReport {
        schema_version: table.schema_version,
        float_precision: places,
        rows,
    };
    // serde_json sorts flattened map keys only if we ask; go through Value
    // so key order is fixed regardless of HashMap iteration order.
    let value = serde_json::to_value(&report).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}

/// Indices of the rows holding the extreme value of `key` among `group`.
fn extreme_rows(rows: &[&SweepRow], group: &[usize], key: impl Fn(&RowStats) -> f64, want_max: bool) -> Vec<usize> {
    let vals: Vec<(usize, f64)> = group
        .iter()
        .filter_map(|&i| rows[i].stats.as_ref().map(|s| (i, key(s))))
        .collect();
    let best = vals.iter().map(|&(_, v)| v).fold(None, |acc: Option<f64>, v| match acc {
        None => Some(v),
        Some(a) if (want_max && v > a) || (!want_max && v < a) => Some(v),
        keep => keep,
    });
    match best {
        Some(b) => vals.into_iter().filter(|&(_, v)| v == b).map(|(i, _)| i).collect(),
        None => Vec::new(),
    }
}

fn markdown(table: &SweepTable, spec: &ReportSpec) -> String {
    let places = spec.float_precision;
    let rows: Vec<&SweepRow> = table.rows.iter().collect();
    let header = [
        "Dataset", "Embedder", "Model", "Chunk size", "IoU mean", "IoU std", "Recall mean", "Recall std",
        "P mean", "P std", "PΩ mean", "PΩ std", "n",
    ];
    let mut cells: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut c = vec![row.dataset.clone(), row.embedder.clone(), row.model.clone(), row.chunk_size.to_string()];
            match &row.stats {
                Some(s) => {
                    for m in metric_columns(s) {
                        c.push(round_half_even(m.mean, places));
                        c.push(round_half_even(m.std, places));
                    }
                    c.push(s.n().to_string());
                }
                None => {
                    c.push(format!("error: {}", row.error.as_deref().unwrap_or("unknown").replace('|', "\\|")));
                    c.extend(std::iter::repeat_n(String::new(), 8));
                }
            }
            c
        })
        .collect();

    // dataset groups in first-appearance order
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        match groups.iter_mut().find(|(d, _)| *d == row.dataset) {
            Some((_, g)) => g.push(i),
            None => groups.push((&row.dataset, vec![i])),
        }
    }
    for (_, group) in &groups {
        for m in 0..4 {
            let col = 4 + 2 * m;
            let pick = move |s: &RowStats, std: bool| {
                let a = metric_columns(s)[m];
                if std { a.std } else { a.mean }
            };
            if spec.bold_best {
                for i in extreme_rows(&rows, group, |s| pick(s, false), true) {
                    cells[i][col] = format!("**{}**", cells[i][col]);
                }
            }
            if spec.bold_lowest_std {
                for i in extreme_rows(&rows, group, |s| pick(s, true), false) {
                    cells[i][col + 1] = format!("**{}**", cells[i][col + 1]);
                }
            }
        }
    }

    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h).max(3)).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(width(c));
        }
    }
    let numeric = |col: usize| col >= 3;
    let line = |row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = " ".repeat(widths[i] - width(c));
                if numeric(i) { format!("{pad}{c}") } else { format!("{c}{pad}") }
            })
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(&header.map(String::from));
    let rule: Vec<String> = widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let dashes = "-".repeat(w - 1);
            if numeric(i) { format!("{dashes}:") } else { format!(":{dashes}") }
        })
        .collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for row in &cells {
        out.push_str(&line(row));
    }
    out
}

/// Parses CSV emitted by [`emit`] back into rows of (key columns, metric
/// strings). Used to check round-tripping; quoted fields are supported.
pub fn parse_csv(text: &str) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let mut fields = Vec::new();
        let mut cur = String::new();
        let mut quoted = false;
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            match (c, quoted) {
                ('"', true) if chars.peek() == Some(&'"') => {
                    cur.push('"');
                    chars.next();
                }
                ('"', _) => quoted = !quoted,
                (',', false) => fields.push(std::mem::take(&mut cur)),
                _ => cur.push(c),
            }
        }
        fields.push(cur);
        rows.push(fields);
    }
    rows
}
