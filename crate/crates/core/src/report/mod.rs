//! Tabular and graphical rendering of plans and analyses.
//!
//! Accuracies are printed with three decimals, percentage-point values with
//! one, parameter counts in millions with two.

mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::{AnalysisReport, HeatmapGrid, ParetoSeries, RadarSeries};
use crate::placement::ParameterBudget;

pub use svg::render_svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
    Svg,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            "svg" => Ok(Format::Svg),
            other => Err(format!(
                "unknown format `{other}` (expected csv, json, markdown or svg)"
            )),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Markdown => "md",
            Format::Svg => "svg",
        }
    }
}

pub fn fmt_acc(x: f64) -> String {
    format!("{x:.3}")
}

/// Signed, one decimal, never `-0.0`.
pub fn fmt_pp(x: f64) -> String {
    let s = format!("{x:+.1}");
    if s == "-0.0" {
        "+0.0".into()
    } else {
        s
    }
}

pub fn fmt_params_m(x: f64) -> String {
    format!("{x:.2}")
}

/// A named grid of already formatted cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("write to memory");
        for row in &self.rows {
            w.write_record(row).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self, csv::Error> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Table {
            name: name.to_string(),
            columns,
            rows,
        })
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| {} |",
            self.columns
                .iter()
                .map(|c| esc(c))
                .collect::<Vec<_>>()
                .join(" | ")
        );
        let _ = writeln!(out, "|{}", "---|".repeat(self.columns.len()));
        for row in &self.rows {
            let _ = writeln!(
                out,
                "| {} |",
                row.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | ")
            );
        }
        out
    }

    /// Inverse of [`Table::to_markdown`].
    pub fn from_markdown(name: &str, text: &str) -> Option<Self> {
        let split = |line: &str| -> Vec<String> {
            let inner = line.trim().strip_prefix('|').unwrap_or(line).trim_end();
            let inner = inner.strip_suffix('|').unwrap_or(inner);
            let mut cells = Vec::new();
            let mut cur = String::new();
            let mut chars = inner.chars().peekable();
            while let Some(c) = chars.next() {
                match c {
                    '\\' if chars.peek() == Some(&'|') => {
                        cur.push('|');
                        chars.next();
                    }
                    '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
                    _ => cur.push(c),
                }
            }
            cells.push(cur.trim().to_string());
            cells
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let columns = split(lines.next()?);
        lines.next()?;
        Some(Table {
            name: name.to_string(),
            columns,
            rows: lines.map(split).collect(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub heatmaps: Vec<HeatmapGrid>,
    pub radar: Vec<RadarSeries>,
    pub pareto: Vec<ParetoSeries>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub tables: Vec<Table>,
    pub plot_data: PlotData,
}

impl ReportBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Single-document rendering. CSV output separates tables with a
    /// `# name` line.
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("serializable");
                s.push('\n');
                s
            }
            Format::Csv => self
                .tables
                .iter()
                .map(|t| format!("# {}\n{}", t.name, t.to_csv()))
                .collect::<Vec<_>>()
                .join("\n"),
            Format::Markdown => self
                .tables
                .iter()
                .map(|t| format!("## {}\n\n{}", t.name, t.to_markdown()))
                .collect::<Vec<_>>()
                .join("\n"),
            Format::Svg => render_svg(&self.plot_data),
        }
    }

    /// File name and content for each artifact written to an output directory.
    pub fn files(&self, format: Format) -> Vec<(String, String)> {
        match format {
            Format::Csv => self
                .tables
                .iter()
                .map(|t| (format!("{}.csv", t.name), t.to_csv()))
                .collect(),
            Format::Markdown => self
                .tables
                .iter()
                .map(|t| (format!("{}.md", t.name), t.to_markdown()))
                .collect(),
            Format::Json => vec![("report.json".into(), self.render(Format::Json))],
            Format::Svg => vec![
                ("report.svg".into(), self.render(Format::Svg)),
                ("plot_data.json".into(), {
                    let mut s =
                        serde_json::to_string_pretty(&self.plot_data).expect("serializable");
                    s.push('\n');
                    s
                }),
            ],
        }
    }
}

/// One row of a plan's budget table.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLine<'a> {
    pub model: &'a str,
    pub condition: &'a str,
    pub budget: ParameterBudget,
}

pub fn budget_table(lines: &[BudgetLine<'_>]) -> Table {
    let mut t = Table::new(
        "budgets",
        &[
            "model",
            "condition",
            "params_m",
            "pct_model",
            "modules",
            "trainable_params",
        ],
    );
    for l in lines {
        t.push(vec![
            l.model.to_string(),
            l.condition.to_string(),
            fmt_params_m(l.budget.params_millions()),
            format!("{:.2}", 100.0 * l.budget.fraction_of_model),
            l.budget.module_count.to_string(),
            l.budget.trainable_params.to_string(),
        ]);
    }
    t
}

/// Tables and plot data for an analysis. `budgets` is echoed as the
/// budget table.
pub fn analysis_bundle(
    report: &AnalysisReport,
    budgets: &BTreeMap<(String, String), f64>,
) -> ReportBundle {
    let mut tables = Vec::new();

    let mut t = Table::new("budgets", &["model", "condition", "params_m"]);
    for ((model, condition), p) in budgets {
        t.push(vec![model.clone(), condition.clone(), fmt_params_m(*p)]);
    }
    tables.push(t);

    let mut t = Table::new(
        "deltas",
        &[
            "model",
            "train_domain",
            "condition",
            "benchmark",
            "delta_pp",
        ],
    );
    for d in &report.deltas {
        t.push(vec![
            d.model.clone(),
            d.train_domain.to_string(),
            d.condition.clone(),
            d.benchmark.to_string(),
            fmt_pp(d.delta_pp),
        ]);
    }
    tables.push(t);

    let mut t = Table::new(
        "forgetting",
        &[
            "model",
            "train_domain",
            "condition",
            "forgetting_pp",
            "off_target",
        ],
    );
    for f in &report.forgetting {
        t.push(vec![
            f.model.clone(),
            f.train_domain.to_string(),
            f.condition.clone(),
            fmt_pp(f.score_pp),
            f.off_target
                .iter()
                .map(|b| b.as_str())
                .collect::<Vec<_>>()
                .join(";"),
        ]);
    }
    tables.push(t);

    let mut t = Table::new(
        "efficiency",
        &[
            "model",
            "train_domain",
            "condition",
            "target",
            "params_m",
            "delta_pp",
            "pp_per_m",
        ],
    );
    for e in &report.efficiency {
        t.push(vec![
            e.model.clone(),
            e.train_domain.to_string(),
            e.condition.clone(),
            e.target.to_string(),
            fmt_params_m(e.params_m),
            fmt_pp(e.delta_pp),
            format!("{:.1}", e.pp_per_m),
        ]);
    }
    tables.push(t);

    let mut t = Table::new(
        "pareto",
        &[
            "model",
            "train_domain",
            "condition",
            "params_m",
            "mean_accuracy",
            "dominated",
        ],
    );
    for s in &report.pareto {
        for p in &s.points {
            t.push(vec![
                s.model.clone(),
                s.train_domain.to_string(),
                p.condition.clone(),
                fmt_params_m(p.trainable_params_m),
                fmt_acc(p.mean_accuracy),
                p.dominated.to_string(),
            ]);
        }
    }
    tables.push(t);

    let mut t = Table::new(
        "recipes",
        &[
            "model",
            "train_domain",
            "condition",
            "params_m",
            "mean_accuracy",
            "full_condition",
            "full_mean_accuracy",
            "meets_threshold",
            "reference_condition",
            "discrepancy",
        ],
    );
    for r in &report.recipes {
        t.push(vec![
            r.model.clone(),
            r.train_domain.to_string(),
            r.condition.clone(),
            fmt_params_m(r.params_m),
            fmt_acc(r.mean_accuracy),
            r.full_condition.clone(),
            fmt_acc(r.full_mean_accuracy),
            r.meets_threshold.to_string(),
            r.reference_condition.clone().unwrap_or_default(),
            r.discrepancy.to_string(),
        ]);
    }
    tables.push(t);

    let mut t = Table::new(
        "bootstrap",
        &[
            "comparison",
            "mean_diff_pp",
            "ci_low_pp",
            "ci_high_pp",
            "n_resamples",
            "seed",
            "significant",
        ],
    );
    for b in &report.bootstrap {
        t.push(vec![
            b.comparison.clone(),
            fmt_pp(b.mean_diff_pp),
            fmt_pp(b.ci_low_pp),
            fmt_pp(b.ci_high_pp),
            b.n_resamples.to_string(),
            b.seed.to_string(),
            b.significant.to_string(),
        ]);
    }
    tables.push(t);

    ReportBundle {
        tables,
        plot_data: PlotData {
            heatmaps: report.heatmaps.clone(),
            radar: report.radar.clone(),
            pareto: report.pareto.clone(),
        },
    }
}
