//! Suite reports: one row per episode, aggregates over all rows and over
//! structure and platform slices, and the seven-column summary table.
//!
//! CR, EE and CE are aggregated as means of per-episode values and SR as
//! the fraction of successful episodes. Undefined EE/CE values (no actions
//! or no tokens) are left out of those means and counted separately. The
//! ratio-of-sums alternatives are emitted alongside under `pooled_*` keys.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use gdt_core::ComposedTask;
use gdt_harness::{AgentStructure, EpisodeResult, Termination};
use serde::{Deserialize, Serialize};

/// One episode: raw counters, per-episode metrics and how it ended.
/// Episodes that could not run carry `error` and no termination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub task_id: String,
    pub structure: AgentStructure,
    pub platform_tags: Vec<String>,
    pub termination: Option<Termination>,
    pub completed: u64,
    pub total: u64,
    pub actions: u64,
    pub tokens: u64,
    pub turns: usize,
    pub success: bool,
    pub cr: f64,
    pub ee: Option<f64>,
    pub ce: Option<f64>,
    pub error: Option<String>,
}

impl EpisodeRow {
    pub fn from_episode(task: &ComposedTask, episode: &EpisodeResult) -> Self {
        let m = episode.metrics();
        EpisodeRow {
            task_id: episode.task_id.clone(),
            structure: episode.structure,
            platform_tags: platform_tags(task),
            termination: Some(episode.termination),
            completed: episode.completed as u64,
            total: episode.total as u64,
            actions: episode.actions_executed,
            tokens: episode.tokens_total,
            turns: episode.turns,
            success: m.success,
            cr: m.completion_ratio,
            ee: m.execution_efficiency,
            ce: m.cost_efficiency,
            error: None,
        }
    }

    pub fn failed(task: &ComposedTask, structure: AgentStructure, error: impl Into<String>) -> Self {
        EpisodeRow {
            task_id: task.id.clone(),
            structure,
            platform_tags: platform_tags(task),
            termination: None,
            completed: 0,
            total: task.evaluator.len() as u64,
            actions: 0,
            tokens: 0,
            turns: 0,
            success: false,
            cr: 0.0,
            ee: None,
            ce: None,
            error: Some(error.into()),
        }
    }
}

/// Platform tags of a task: the environments its evaluator probes.
pub fn platform_tags(task: &ComposedTask) -> Vec<String> {
    task.environments().into_iter().collect()
}

/// Aggregates over the rows that ran to a termination. Percentages are in
/// `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub sr_pct: f64,
    pub cr_pct: f64,
    pub ee_pct: Option<f64>,
    pub ce_pct: Option<f64>,
    pub ee_undefined: usize,
    pub ce_undefined: usize,
    /// `ΣC / ΣN`.
    pub pooled_cr_pct: Option<f64>,
    /// `ΣCR / ΣA`.
    pub pooled_ee_pct: Option<f64>,
    /// `ΣCR / ΣT`.
    pub pooled_ce_pct: Option<f64>,
    /// Share of episodes per termination label; sums to 100 when any
    /// episode ran.
    pub termination_pct: BTreeMap<String, f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio(num: f64, den: u64) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

impl Aggregate {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a EpisodeRow>) -> Self {
        let ran: Vec<&EpisodeRow> = rows.into_iter().filter(|r| r.termination.is_some()).collect();
        let n = ran.len();
        let pct = |count: usize| if n == 0 { 0.0 } else { 100.0 * count as f64 / n as f64 };
        let cr_sum: f64 = ran.iter().map(|r| r.cr).sum();
        let termination_pct = Termination::ALL
            .iter()
            .map(|t| {
                let count = ran.iter().filter(|r| r.termination == Some(*t)).count();
                (t.label().to_owned(), pct(count))
            })
            .collect();
        Aggregate {
            episodes: n,
            sr_pct: pct(ran.iter().filter(|r| r.success).count()),
            cr_pct: 100.0 * mean(ran.iter().map(|r| r.cr)).unwrap_or(0.0),
            ee_pct: mean(ran.iter().filter_map(|r| r.ee)).map(|v| 100.0 * v),
            ce_pct: mean(ran.iter().filter_map(|r| r.ce)).map(|v| 100.0 * v),
            ee_undefined: ran.iter().filter(|r| r.ee.is_none()).count(),
            ce_undefined: ran.iter().filter(|r| r.ce.is_none()).count(),
            pooled_cr_pct: ratio(ran.iter().map(|r| r.completed as f64).sum(), ran.iter().map(|r| r.total).sum())
                .map(|v| 100.0 * v),
            pooled_ee_pct: ratio(cr_sum, ran.iter().map(|r| r.actions).sum()).map(|v| 100.0 * v),
            pooled_ce_pct: ratio(cr_sum, ran.iter().map(|r| r.tokens).sum()).map(|v| 100.0 * v),
            termination_pct,
        }
    }

    pub fn table_row(&self) -> TableRow {
        let t = |label: &str| self.termination_pct.get(label).copied().unwrap_or(0.0);
        TableRow {
            sr: self.sr_pct,
            cr: self.cr_pct,
            ee: self.ee_pct,
            ce: self.ce_pct,
            fc: t("FC"),
            rsl: t("RSL"),
            ia: t("IA"),
        }
    }
}

/// The settings a suite ran under, recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub structures: Vec<AgentStructure>,
    pub backend: String,
    pub max_turns: usize,
    pub history_turns: usize,
    pub invalid_retries: usize,
    pub seed: u64,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    /// Seconds since the epoch; omitted in deterministic mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
    pub settings: RunSettings,
    pub rows: Vec<EpisodeRow>,
    pub overall: Aggregate,
    pub by_structure: BTreeMap<String, Aggregate>,
    pub by_tag: BTreeMap<String, Aggregate>,
    /// Rows that could not run to a termination.
    pub failures: usize,
}

impl SuiteReport {
    pub fn from_rows(settings: RunSettings, rows: Vec<EpisodeRow>, generated_unix: Option<u64>) -> Self {
        let mut by_structure = BTreeMap::new();
        for s in &settings.structures {
            by_structure.insert(
                s.as_str().to_owned(),
                Aggregate::from_rows(rows.iter().filter(|r| r.structure == *s)),
            );
        }
        let tags: std::collections::BTreeSet<&str> =
            rows.iter().flat_map(|r| r.platform_tags.iter().map(String::as_str)).collect();
        let by_tag = tags
            .into_iter()
            .map(|tag| {
                let slice = rows.iter().filter(|r| r.platform_tags.iter().any(|t| t == tag));
                (tag.to_owned(), Aggregate::from_rows(slice))
            })
            .collect();
        SuiteReport {
            generated_unix,
            overall: Aggregate::from_rows(&rows),
            failures: rows.iter().filter(|r| r.termination.is_none()).count(),
            settings,
            rows,
            by_structure,
            by_tag,
        }
    }

    /// The same report with every aggregate recomputed from its rows.
    pub fn recomputed(&self) -> Self {
        SuiteReport::from_rows(self.settings.clone(), self.rows.clone(), self.generated_unix)
    }

    /// Pretty JSON with keys sorted at every level.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Summary rows: one per structure, then `all`.
    pub fn table(&self) -> Vec<(String, TableRow)> {
        self.by_structure
            .iter()
            .map(|(k, a)| (k.clone(), a.table_row()))
            .chain([("all".to_owned(), self.overall.table_row())])
            .collect()
    }

    /// Writes `report.json`, `episodes.csv` and `table.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_canonical_json())?;
        fs::write(dir.join("episodes.csv"), episodes_csv(&self.rows)?)?;
        fs::write(dir.join("table.csv"), table_csv(&self.table())?)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    task_id: &'a str,
    structure: &'a str,
    platform_tags: String,
    termination: &'a str,
    #[serde(rename = "C")]
    completed: u64,
    #[serde(rename = "N")]
    total: u64,
    #[serde(rename = "A")]
    actions: u64,
    #[serde(rename = "T")]
    tokens: u64,
    turns: usize,
    #[serde(rename = "SR")]
    success: u8,
    #[serde(rename = "CR")]
    cr: f64,
    #[serde(rename = "EE")]
    ee: Option<f64>,
    #[serde(rename = "CE")]
    ce: Option<f64>,
    error: &'a str,
}

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// One CSV line per episode.
pub fn episodes_csv(rows: &[EpisodeRow]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            task_id: &r.task_id,
            structure: r.structure.as_str(),
            platform_tags: r.platform_tags.join(";"),
            termination: r.termination.map(Termination::label).unwrap_or(""),
            completed: r.completed,
            total: r.total,
            actions: r.actions,
            tokens: r.tokens,
            turns: r.turns,
            success: u8::from(r.success),
            cr: r.cr,
            ee: r.ee,
            ce: r.ce,
            error: r.error.as_deref().unwrap_or(""),
        })
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// The seven summary columns, all percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    #[serde(rename = "EE", default, skip_serializing_if = "Option::is_none")]
    pub ee: Option<f64>,
    #[serde(rename = "CE", default, skip_serializing_if = "Option::is_none")]
    pub ce: Option<f64>,
    #[serde(rename = "FC")]
    pub fc: f64,
    #[serde(rename = "RSL")]
    pub rsl: f64,
    #[serde(rename = "IA")]
    pub ia: f64,
}

impl TableRow {
    pub const COLUMNS: [&'static str; 7] = ["SR", "CR", "EE", "CE", "FC", "RSL", "IA"];

    /// Cells with two decimals; undefined columns are empty.
    pub fn to_cells(&self) -> Vec<String> {
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_default();
        [Some(self.sr), Some(self.cr), self.ee, self.ce, Some(self.fc), Some(self.rsl), Some(self.ia)]
            .into_iter()
            .map(cell)
            .collect()
    }

    pub fn from_cells(cells: &[&str]) -> Result<Self, String> {
        if cells.len() != Self::COLUMNS.len() {
            return Err(format!("expected {} cells, got {}", Self::COLUMNS.len(), cells.len()));
        }
        let parse = |i: usize| -> Result<Option<f64>, String> {
            let c = cells[i].trim();
            if c.is_empty() {
                return Ok(None);
            }
            c.parse()
                .map(Some)
                .map_err(|_| format!("column {}: `{c}` is not a number", Self::COLUMNS[i]))
        };
        let required = |i: usize| parse(i)?.ok_or_else(|| format!("column {} is empty", Self::COLUMNS[i]));
        Ok(TableRow {
            sr: required(0)?,
            cr: required(1)?,
            ee: parse(2)?,
            ce: parse(3)?,
            fc: required(4)?,
            rsl: required(5)?,
            ia: required(6)?,
        })
    }
}

/// `structure,SR,CR,EE,CE,FC,RSL,IA` lines.
pub fn table_csv(rows: &[(String, TableRow)]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("structure").chain(TableRow::COLUMNS))
        .map_err(csv_error)?;
    for (name, row) in rows {
        w.write_record(std::iter::once(name.clone()).chain(row.to_cells()))
            .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
