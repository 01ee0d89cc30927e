//! Evaluation-result analytics: deltas against baselines, forgetting,
//! efficiency, Pareto frontiers, recipe selection and paired bootstrap
//! intervals.

mod bootstrap;
mod ingest;
mod metrics;
mod summary;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{paired_bootstrap_ci, BootstrapResult, InstanceOutcomes, MIN_RESAMPLES};
pub use ingest::{
    parse_baselines, parse_budgets, parse_instances, parse_records, parse_reference_recipes,
    BaselineTable, BudgetRow, ReferenceRecipe,
};
pub use metrics::{
    delta_table, efficiency_ratio, forgetting_score, heatmap_matrix, mean_accuracy,
    pareto_frontier, select_recipe, DeltaCell, ForgettingScore, HeatmapGrid, ParetoPoint, Recipe,
    TargetMap,
};
pub use summary::{
    analyze, full_condition, AnalysisOptions, AnalysisReport, EfficiencyRow, ParetoSeries,
    RadarSeries,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("cannot parse {what}: {reason}")]
    Parse { what: String, reason: String },
    #[error("{0} is empty")]
    Empty(String),
    #[error("invalid record {key}: {reason}")]
    InvalidRecord { key: String, reason: String },
    #[error("duplicate record {0}")]
    DuplicateKey(String),
    #[error("no baseline for {model}/{benchmark}")]
    MissingBaseline { model: String, benchmark: Benchmark },
    #[error("{key} is missing benchmark {benchmark}")]
    MissingBenchmark { key: String, benchmark: Benchmark },
    #[error("incomplete grid, missing: {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),
    #[error("target map has no entry for domain `{0}`")]
    UnmappedDomain(TrainDomain),
    #[error("invalid target map: {0}")]
    InvalidTargetMap(String),
    #[error("no off-target benchmarks for {0}")]
    EmptyOffTarget(String),
    #[error("trainable parameters must be positive, got {0}")]
    NonPositiveParams(f64),
    #[error("full condition missing for {0}")]
    MissingFullCondition(String),
    #[error("no budget for {model}/{condition}")]
    MissingBudget { model: String, condition: String },
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("paired vectors differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("paired comparison needs at least 2 instances, got {0}")]
    TooFewInstances(usize),
    #[error("at least {MIN_RESAMPLES} resamples required, got {0}")]
    TooFewResamples(usize),
    #[error("no points to compare")]
    NoPoints,
}

/// The four evaluation benchmarks, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "MMLU")]
    Mmlu,
    #[serde(rename = "GSM8K")]
    Gsm8k,
    #[serde(rename = "ARC-C")]
    ArcC,
    #[serde(rename = "HellaSwag")]
    HellaSwag,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::Mmlu,
        Benchmark::Gsm8k,
        Benchmark::ArcC,
        Benchmark::HellaSwag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::Mmlu => "MMLU",
            Benchmark::Gsm8k => "GSM8K",
            Benchmark::ArcC => "ARC-C",
            Benchmark::HellaSwag => "HellaSwag",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Benchmark {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AnalyticsError::Parse {
                what: "benchmark".into(),
                reason: format!("unknown benchmark `{s}`"),
            })
    }
}

/// Fine-tuning dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainDomain {
    Gsm8k,
    Codealpaca,
    Ultrachat,
}

impl TrainDomain {
    pub const ALL: [TrainDomain; 3] = [
        TrainDomain::Gsm8k,
        TrainDomain::Codealpaca,
        TrainDomain::Ultrachat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainDomain::Gsm8k => "gsm8k",
            TrainDomain::Codealpaca => "codealpaca",
            TrainDomain::Ultrachat => "ultrachat",
        }
    }
}

impl fmt::Display for TrainDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainDomain {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrainDomain::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AnalyticsError::Parse {
                what: "train domain".into(),
                reason: format!("unknown domain `{s}`"),
            })
    }
}

/// One benchmark accuracy of one fine-tuned condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    pub benchmark: Benchmark,
    pub accuracy: f64,
    pub n_samples: u32,
}

impl EvalRecord {
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.model, self.train_domain, self.condition, self.benchmark
        )
    }
}

/// Round away binary noise so that means computed from three-decimal inputs
/// compare equal when their exact values are equal.
pub(crate) fn settle(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}
