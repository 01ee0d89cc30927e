use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::conditions_of;
use super::{
    delta_table, efficiency_ratio, forgetting_score, heatmap_matrix, mean_accuracy,
    paired_bootstrap_ci, pareto_frontier, select_recipe, AnalyticsError, BaselineTable, Benchmark,
    BootstrapResult, DeltaCell, EvalRecord, ForgettingScore, HeatmapGrid, InstanceOutcomes,
    ParetoPoint, Recipe, ReferenceRecipe, TargetMap, TrainDomain,
};

/// Names used for the every-component condition.
pub const FULL_CONDITIONS: [&str; 2] = ["all_layers", "all_eligible"];

pub fn full_condition<'a>(conditions: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    conditions.into_iter().find(|c| FULL_CONDITIONS.contains(c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub target_map: TargetMap,
    pub threshold: f64,
    pub seed: u64,
    pub n_resamples: usize,
    pub reference_recipes: Vec<ReferenceRecipe>,
    pub instances: Vec<InstanceOutcomes>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            target_map: TargetMap::default(),
            threshold: 0.95,
            seed: 3407,
            n_resamples: 10_000,
            reference_recipes: Vec::new(),
            instances: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    pub target: Benchmark,
    pub params_m: f64,
    pub delta_pp: f64,
    pub pp_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSeries {
    pub model: String,
    pub train_domain: TrainDomain,
    pub points: Vec<ParetoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSeries {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    pub axes: Vec<Benchmark>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub deltas: Vec<DeltaCell>,
    pub forgetting: Vec<ForgettingScore>,
    pub efficiency: Vec<EfficiencyRow>,
    pub pareto: Vec<ParetoSeries>,
    pub recipes: Vec<Recipe>,
    pub bootstrap: Vec<BootstrapResult>,
    pub heatmaps: Vec<HeatmapGrid>,
    pub radar: Vec<RadarSeries>,
}

fn grids(records: &[EvalRecord]) -> BTreeMap<(String, TrainDomain), Vec<EvalRecord>> {
    let mut out: BTreeMap<_, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        out.entry((r.model.clone(), r.train_domain))
            .or_default()
            .push(r.clone());
    }
    out
}

fn missing_keys(grid: &[EvalRecord]) -> Vec<String> {
    let mut by_condition: BTreeMap<&str, Vec<Benchmark>> = BTreeMap::new();
    for r in grid {
        by_condition
            .entry(&r.condition)
            .or_default()
            .push(r.benchmark);
    }
    let mut out = Vec::new();
    for (condition, present) in by_condition {
        for b in Benchmark::ALL {
            if !present.contains(&b) {
                let r = &grid[0];
                out.push(format!(
                    "{}/{}/{}/{}",
                    r.model, r.train_domain, condition, b
                ));
            }
        }
    }
    out
}

/// Every derived metric over complete `(model, domain)` grids.
pub fn analyze(
    records: &[EvalRecord],
    baselines: &BaselineTable,
    budgets: &BTreeMap<(String, String), f64>,
    options: &AnalysisOptions,
) -> Result<AnalysisReport, AnalyticsError> {
    if records.is_empty() {
        return Err(AnalyticsError::Empty("results".into()));
    }
    let grids = grids(records);
    let missing: Vec<String> = grids.values().flat_map(|g| missing_keys(g)).collect();
    if !missing.is_empty() {
        return Err(AnalyticsError::IncompleteGrid(missing));
    }

    let deltas = delta_table(records, baselines)?;
    let forgetting = forgetting_score(&deltas, &options.target_map)?;
    let mut report = AnalysisReport {
        deltas,
        forgetting,
        efficiency: Vec::new(),
        pareto: Vec::new(),
        recipes: Vec::new(),
        bootstrap: Vec::new(),
        heatmaps: Vec::new(),
        radar: Vec::new(),
    };

    for ((model, domain), grid) in &grids {
        let target = options.target_map.target(*domain)?;
        let grid_deltas: Vec<DeltaCell> = report
            .deltas
            .iter()
            .filter(|d| &d.model == model && d.train_domain == *domain)
            .cloned()
            .collect();
        report.heatmaps.push(heatmap_matrix(&grid_deltas, target)?);

        let conditions = conditions_of(grid);
        let mut params = BTreeMap::new();
        for c in &conditions {
            let p = budgets.get(&(model.clone(), c.clone())).ok_or_else(|| {
                AnalyticsError::MissingBudget {
                    model: model.clone(),
                    condition: c.clone(),
                }
            })?;
            params.insert(c.clone(), *p);
        }

        let mut points = Vec::new();
        for c in &conditions {
            let rows: Vec<&EvalRecord> = grid.iter().filter(|r| &r.condition == c).collect();
            points.push(ParetoPoint::new(c, params[c], mean_accuracy(&rows)?));
            report.radar.push(RadarSeries {
                model: model.clone(),
                train_domain: *domain,
                condition: c.clone(),
                axes: Benchmark::ALL.to_vec(),
                values: Benchmark::ALL
                    .iter()
                    .map(|b| {
                        rows.iter()
                            .find(|r| r.benchmark == *b)
                            .map_or(0.0, |r| r.accuracy)
                    })
                    .collect(),
            });
            if let Some(t) = target {
                let delta = grid_deltas
                    .iter()
                    .find(|d| &d.condition == c && d.benchmark == t)
                    .map(|d| d.delta_pp)
                    .unwrap_or_default();
                report.efficiency.push(EfficiencyRow {
                    model: model.clone(),
                    train_domain: *domain,
                    condition: c.clone(),
                    target: t,
                    params_m: params[c],
                    delta_pp: delta,
                    pp_per_m: efficiency_ratio(delta, params[c])?,
                });
            }
        }
        report.pareto.push(ParetoSeries {
            model: model.clone(),
            train_domain: *domain,
            points: pareto_frontier(&points),
        });

        let full = full_condition(conditions.iter().map(String::as_str))
            .ok_or_else(|| AnalyticsError::MissingFullCondition(format!("{model}/{domain}")))?;
        let mut recipe = select_recipe(grid, &params, full, options.threshold)?;
        if let Some(reference) = options
            .reference_recipes
            .iter()
            .find(|r| &r.model == model && r.train_domain == *domain)
        {
            recipe.discrepancy = reference.condition != recipe.condition;
            recipe.reference_condition = Some(reference.condition.clone());
        }
        report.recipes.push(recipe);
    }

    report.bootstrap =
        bootstrap_against_full(&options.instances, options.n_resamples, options.seed)?;
    Ok(report)
}

/// Compare every condition with the full condition of its
/// `(model, domain, benchmark)` group.
fn bootstrap_against_full(
    instances: &[InstanceOutcomes],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<BootstrapResult>, AnalyticsError> {
    let mut groups: BTreeMap<(&str, TrainDomain, Benchmark), BTreeMap<&str, &InstanceOutcomes>> =
        BTreeMap::new();
    for inst in instances {
        let group = groups
            .entry((inst.model.as_str(), inst.train_domain, inst.benchmark))
            .or_default();
        if group.insert(inst.condition.as_str(), inst).is_some() {
            return Err(AnalyticsError::DuplicateKey(format!(
                "{}/{}/{}/{}",
                inst.model, inst.train_domain, inst.condition, inst.benchmark
            )));
        }
    }
    let mut out = Vec::new();
    for ((model, domain, _), by_condition) in groups {
        let Some(full) = full_condition(by_condition.keys().copied()) else {
            return Err(AnalyticsError::MissingFullCondition(format!(
                "{model}/{domain} instances"
            )));
        };
        for (condition, inst) in &by_condition {
            if *condition != full {
                out.push(paired_bootstrap_ci(
                    inst,
                    by_condition[full],
                    n_resamples,
                    seed,
                )?);
            }
        }
    }
    Ok(out)
}
