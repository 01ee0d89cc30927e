use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Benchmark, EvalRecord, InstanceOutcomes, TrainDomain};

/// Parse either a JSON array or a headed CSV table into rows.
fn parse_rows<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>, AnalyticsError> {
    let err = |reason: String| AnalyticsError::Parse {
        what: what.to_string(),
        reason,
    };
    let trimmed = text.trim_start();
    let rows: Vec<T> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        reader
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| err(e.to_string()))?
    };
    if rows.is_empty() {
        return Err(AnalyticsError::Empty(what.to_string()));
    }
    Ok(rows)
}

fn check_fraction(key: String, value: f64) -> Result<(), AnalyticsError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidRecord {
            key,
            reason: format!("accuracy {value} outside [0, 1]"),
        })
    }
}

/// Evaluation records from CSV or JSON, sorted by key.
pub fn parse_records(text: &str) -> Result<Vec<EvalRecord>, AnalyticsError> {
    let mut records: Vec<EvalRecord> = parse_rows(text, "results")?;
    let mut seen = BTreeSet::new();
    for r in &records {
        check_fraction(r.key(), r.accuracy)?;
        if r.n_samples == 0 {
            return Err(AnalyticsError::InvalidRecord {
                key: r.key(),
                reason: "n_samples must be positive".into(),
            });
        }
        if r.model.is_empty() || r.condition.is_empty() {
            return Err(AnalyticsError::InvalidRecord {
                key: r.key(),
                reason: "empty model or condition".into(),
            });
        }
        if !seen.insert(r.key()) {
            return Err(AnalyticsError::DuplicateKey(r.key()));
        }
    }
    records.sort_by(|a, b| {
        (&a.model, a.train_domain, &a.condition, a.benchmark).cmp(&(
            &b.model,
            b.train_domain,
            &b.condition,
            b.benchmark,
        ))
    });
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineRow {
    model: String,
    benchmark: Benchmark,
    accuracy: f64,
}

/// No-fine-tuning accuracy per `(model, benchmark)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineTable {
    entries: BTreeMap<(String, Benchmark), f64>,
}

impl BaselineTable {
    pub fn insert(&mut self, model: &str, benchmark: Benchmark, accuracy: f64) {
        self.entries
            .insert((model.to_string(), benchmark), accuracy);
    }

    pub fn get(&self, model: &str, benchmark: Benchmark) -> Option<f64> {
        self.entries.get(&(model.to_string(), benchmark)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn parse_baselines(text: &str) -> Result<BaselineTable, AnalyticsError> {
    let rows: Vec<BaselineRow> = parse_rows(text, "baselines")?;
    let mut table = BaselineTable::default();
    for row in rows {
        let key = format!("{}/{}", row.model, row.benchmark);
        check_fraction(key.clone(), row.accuracy)?;
        if table.get(&row.model, row.benchmark).is_some() {
            return Err(AnalyticsError::DuplicateKey(key));
        }
        table.insert(&row.model, row.benchmark, row.accuracy);
    }
    Ok(table)
}

/// Trainable parameters (millions) of one condition. Extra columns such as
/// those written by `hlora plan` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub model: String,
    pub condition: String,
    pub params_m: f64,
}

pub fn parse_budgets(text: &str) -> Result<BTreeMap<(String, String), f64>, AnalyticsError> {
    let rows: Vec<BudgetRow> = parse_rows(text, "budgets")?;
    let mut out = BTreeMap::new();
    for row in rows {
        if !(row.params_m.is_finite() && row.params_m > 0.0) {
            return Err(AnalyticsError::NonPositiveParams(row.params_m));
        }
        let key = (row.model, row.condition);
        if out.insert(key.clone(), row.params_m).is_some() {
            return Err(AnalyticsError::DuplicateKey(format!("{}/{}", key.0, key.1)));
        }
    }
    Ok(out)
}

/// A published recipe to compare selections against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecipe {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    pub params_m: f64,
}

pub fn parse_reference_recipes(text: &str) -> Result<Vec<ReferenceRecipe>, AnalyticsError> {
    parse_rows(text, "reference recipes")
}

/// Per-instance outcome vectors, JSON only.
pub fn parse_instances(text: &str) -> Result<Vec<InstanceOutcomes>, AnalyticsError> {
    let rows: Vec<InstanceOutcomes> =
        serde_json::from_str(text).map_err(|e| AnalyticsError::Parse {
            what: "instances".into(),
            reason: e.to_string(),
        })?;
    if rows.is_empty() {
        return Err(AnalyticsError::Empty("instances".into()));
    }
    Ok(rows)
}
