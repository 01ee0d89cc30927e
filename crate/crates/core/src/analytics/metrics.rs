use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{settle, AnalyticsError, BaselineTable, Benchmark, EvalRecord, TrainDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    pub benchmark: Benchmark,
    /// `100 * (accuracy - baseline)`
    pub delta_pp: f64,
}

/// One delta per record, in record order.
pub fn delta_table(
    records: &[EvalRecord],
    baselines: &BaselineTable,
) -> Result<Vec<DeltaCell>, AnalyticsError> {
    records
        .iter()
        .map(|r| {
            let base = baselines.get(&r.model, r.benchmark).ok_or_else(|| {
                AnalyticsError::MissingBaseline {
                    model: r.model.clone(),
                    benchmark: r.benchmark,
                }
            })?;
            Ok(DeltaCell {
                model: r.model.clone(),
                train_domain: r.train_domain,
                condition: r.condition.clone(),
                benchmark: r.benchmark,
                delta_pp: settle(100.0 * (r.accuracy - base)),
            })
        })
        .collect()
}

/// Which benchmark, if any, each training domain targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetMap(pub BTreeMap<TrainDomain, Option<Benchmark>>);

impl Default for TargetMap {
    /// gsm8k targets GSM8K; codealpaca and ultrachat have no scored target.
    fn default() -> Self {
        TargetMap(BTreeMap::from([
            (TrainDomain::Gsm8k, Some(Benchmark::Gsm8k)),
            (TrainDomain::Codealpaca, None),
            (TrainDomain::Ultrachat, None),
        ]))
    }
}

impl TargetMap {
    pub fn target(&self, domain: TrainDomain) -> Result<Option<Benchmark>, AnalyticsError> {
        self.0
            .get(&domain)
            .copied()
            .ok_or(AnalyticsError::UnmappedDomain(domain))
    }
}

impl FromStr for TargetMap {
    type Err = AnalyticsError;

    /// `gsm8k=GSM8K,codealpaca=none`; unspecified domains keep their defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = TargetMap::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (domain, bench) = part.split_once('=').ok_or_else(|| {
                AnalyticsError::InvalidTargetMap(format!("expected domain=benchmark, got `{part}`"))
            })?;
            let domain: TrainDomain = domain.parse()?;
            let bench = match bench.trim() {
                b if b.eq_ignore_ascii_case("none") || b.is_empty() => None,
                b => Some(b.parse()?),
            };
            map.0.insert(domain, bench);
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingScore {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    /// Negative mean off-target delta; positive means degradation.
    pub score_pp: f64,
    pub off_target: Vec<Benchmark>,
}

/// One score per `(model, domain, condition)` present in `deltas`.
pub fn forgetting_score(
    deltas: &[DeltaCell],
    target_map: &TargetMap,
) -> Result<Vec<ForgettingScore>, AnalyticsError> {
    let mut groups: BTreeMap<(&str, TrainDomain, &str), Vec<&DeltaCell>> = BTreeMap::new();
    for d in deltas {
        groups
            .entry((d.model.as_str(), d.train_domain, d.condition.as_str()))
            .or_default()
            .push(d);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((model, domain, condition), cells) in groups {
        let target = target_map.target(domain)?;
        let off: Vec<&DeltaCell> = cells
            .into_iter()
            .filter(|c| Some(c.benchmark) != target)
            .collect();
        if off.is_empty() {
            return Err(AnalyticsError::EmptyOffTarget(format!(
                "{model}/{domain}/{condition}"
            )));
        }
        let mean = off.iter().map(|c| c.delta_pp).sum::<f64>() / off.len() as f64;
        let mut off_target: Vec<Benchmark> = off.iter().map(|c| c.benchmark).collect();
        off_target.sort();
        out.push(ForgettingScore {
            model: model.to_string(),
            train_domain: domain,
            condition: condition.to_string(),
            score_pp: settle(-mean),
            off_target,
        });
    }
    Ok(out)
}

/// Percentage points gained per million trainable parameters.
pub fn efficiency_ratio(delta_pp: f64, params_m: f64) -> Result<f64, AnalyticsError> {
    if !(params_m.is_finite() && params_m > 0.0) {
        return Err(AnalyticsError::NonPositiveParams(params_m));
    }
    Ok(delta_pp / params_m)
}

/// Unweighted mean over the four benchmarks of one condition.
pub fn mean_accuracy(records: &[&EvalRecord]) -> Result<f64, AnalyticsError> {
    let key = records
        .first()
        .map(|r| format!("{}/{}/{}", r.model, r.train_domain, r.condition))
        .unwrap_or_else(|| "empty record set".into());
    let mut by_bench = BTreeMap::new();
    for r in records {
        if by_bench.insert(r.benchmark, r.accuracy).is_some() {
            return Err(AnalyticsError::DuplicateKey(r.key()));
        }
    }
    let mut sum = 0.0;
    for b in Benchmark::ALL {
        sum += by_bench
            .get(&b)
            .ok_or_else(|| AnalyticsError::MissingBenchmark {
                key: key.clone(),
                benchmark: b,
            })?;
    }
    Ok(settle(sum / Benchmark::ALL.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub condition: String,
    pub trainable_params_m: f64,
    pub mean_accuracy: f64,
    pub dominated: bool,
}

impl ParetoPoint {
    pub fn new(condition: &str, trainable_params_m: f64, mean_accuracy: f64) -> Self {
        ParetoPoint {
            condition: condition.to_string(),
            trainable_params_m,
            mean_accuracy,
            dominated: false,
        }
    }

    /// Fewer-or-equal parameters and higher-or-equal accuracy, one strictly.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.trainable_params_m <= other.trainable_params_m
            && self.mean_accuracy >= other.mean_accuracy
            && (self.trainable_params_m < other.trainable_params_m
                || self.mean_accuracy > other.mean_accuracy)
    }
}

/// Set every point's `dominated` flag. Input order is preserved.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .map(|p| ParetoPoint {
            dominated: points.iter().any(|q| q.dominates(p)),
            ..p.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    pub params_m: f64,
    pub mean_accuracy: f64,
    pub full_condition: String,
    pub full_mean_accuracy: f64,
    pub meets_threshold: bool,
    /// Published choice for this row, when one was supplied.
    pub reference_condition: Option<String>,
    pub discrepancy: bool,
}

/// Smallest-budget condition whose mean accuracy reaches `threshold` times
/// the full condition's; ties go to the lexicographically first name.
pub fn select_recipe(
    records: &[EvalRecord],
    budgets: &BTreeMap<String, f64>,
    full_condition: &str,
    threshold: f64,
) -> Result<Recipe, AnalyticsError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(AnalyticsError::InvalidThreshold(threshold));
    }
    let first = records.first().ok_or(AnalyticsError::NoPoints)?;
    let mut by_condition: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_condition
            .entry(r.condition.as_str())
            .or_default()
            .push(r);
    }
    let full_records = by_condition.get(full_condition).ok_or_else(|| {
        AnalyticsError::MissingFullCondition(format!("{}/{}", first.model, first.train_domain))
    })?;
    let full_mean = mean_accuracy(full_records)?;
    let bar = threshold * full_mean;

    let mut best: Option<(f64, &str, f64)> = None;
    for (condition, rs) in &by_condition {
        let params = *budgets
            .get(*condition)
            .ok_or_else(|| AnalyticsError::MissingBudget {
                model: first.model.clone(),
                condition: condition.to_string(),
            })?;
        let mean = mean_accuracy(rs)?;
        if mean < bar {
            continue;
        }
        // by_condition iterates in name order, so strict < keeps the first name on ties
        if best.is_none_or(|(p, _, _)| params < p) {
            best = Some((params, condition, mean));
        }
    }
    let (params_m, condition, mean, meets) = match best {
        Some((p, c, m)) => (p, c, m, true),
        None => (budgets[full_condition], full_condition, full_mean, false),
    };
    Ok(Recipe {
        model: first.model.clone(),
        train_domain: first.train_domain,
        condition: condition.to_string(),
        params_m,
        mean_accuracy: mean,
        full_condition: full_condition.to_string(),
        full_mean_accuracy: full_mean,
        meets_threshold: meets,
        reference_condition: None,
        discrepancy: false,
    })
}

/// Benchmark-by-condition delta grid for one `(model, domain)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub model: String,
    pub train_domain: TrainDomain,
    pub benchmarks: Vec<Benchmark>,
    pub conditions: Vec<String>,
    /// `cells[benchmark][condition]`, in pp.
    pub cells: Vec<Vec<f64>>,
}

impl HeatmapGrid {
    pub fn cell(&self, benchmark: Benchmark, condition: &str) -> Option<f64> {
        let row = self.benchmarks.iter().position(|b| *b == benchmark)?;
        let col = self.conditions.iter().position(|c| c == condition)?;
        Some(self.cells[row][col])
    }
}

/// Columns are ordered by the target-benchmark delta when the domain has a
/// target, otherwise by mean delta, descending; ties by name.
pub fn heatmap_matrix(
    deltas: &[DeltaCell],
    target: Option<Benchmark>,
) -> Result<HeatmapGrid, AnalyticsError> {
    let first = deltas.first().ok_or(AnalyticsError::NoPoints)?;
    let mut grid: BTreeMap<&str, BTreeMap<Benchmark, f64>> = BTreeMap::new();
    for d in deltas {
        if d.model != first.model || d.train_domain != first.train_domain {
            return Err(AnalyticsError::InvalidRecord {
                key: format!(
                    "{}/{}/{}/{}",
                    d.model, d.train_domain, d.condition, d.benchmark
                ),
                reason: format!(
                    "heatmap mixes grids, expected {}/{}",
                    first.model, first.train_domain
                ),
            });
        }
        grid.entry(d.condition.as_str())
            .or_default()
            .insert(d.benchmark, d.delta_pp);
    }
    let mut missing = Vec::new();
    for (condition, row) in &grid {
        for b in Benchmark::ALL {
            if !row.contains_key(&b) {
                missing.push(format!(
                    "{}/{}/{}/{}",
                    first.model, first.train_domain, condition, b
                ));
            }
        }
    }
    if !missing.is_empty() {
        return Err(AnalyticsError::IncompleteGrid(missing));
    }
    let sort_key = |row: &BTreeMap<Benchmark, f64>| match target {
        Some(b) => row[&b],
        None => row.values().sum::<f64>() / row.len() as f64,
    };
    let mut conditions: Vec<&str> = grid.keys().copied().collect();
    conditions.sort_by(|a, b| {
        sort_key(&grid[b])
            .total_cmp(&sort_key(&grid[a]))
            .then(a.cmp(b))
    });
    let cells = Benchmark::ALL
        .iter()
        .map(|b| conditions.iter().map(|c| grid[c][b]).collect())
        .collect();
    Ok(HeatmapGrid {
        model: first.model.clone(),
        train_domain: first.train_domain,
        benchmarks: Benchmark::ALL.to_vec(),
        conditions: conditions.into_iter().map(String::from).collect(),
        cells,
    })
}

/// Distinct conditions in first-seen order.
pub(crate) fn conditions_of(records: &[EvalRecord]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .filter(|r| seen.insert(r.condition.clone()))
        .map(|r| r.condition.clone())
        .collect()
}
