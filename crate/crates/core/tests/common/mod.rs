#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use hybrid_lora::analytics::{
    parse_baselines, parse_budgets, parse_records, parse_reference_recipes, BaselineTable,
    EvalRecord, ReferenceRecipe,
};
use hybrid_lora::{classify_all, load_descriptor, DescriptorDoc, ModelDescriptor, RuleSet};

pub const QWEN: &str = "Qwen3.5-0.8B";
pub const FALCON: &str = "Falcon-H1-0.5B";

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn raw_descriptor(file: &str) -> ModelDescriptor {
    load_descriptor(&DescriptorDoc::from_json(&fixture_text(file)).unwrap()).unwrap()
}

pub fn qwen() -> ModelDescriptor {
    classify_all(
        &raw_descriptor("qwen3_5_0_8b.descriptor.json"),
        &RuleSet::sequential_hybrid(),
    )
    .unwrap()
    .0
}

pub fn falcon() -> ModelDescriptor {
    classify_all(
        &raw_descriptor("falcon_h1_0_5b.descriptor.json"),
        &RuleSet::parallel_hybrid(),
    )
    .unwrap()
    .0
}

pub fn records() -> Vec<EvalRecord> {
    parse_records(&fixture_text("results.csv")).unwrap()
}

pub fn baselines() -> BaselineTable {
    parse_baselines(&fixture_text("baselines.csv")).unwrap()
}

pub fn published_budgets() -> BTreeMap<(String, String), f64> {
    parse_budgets(&fixture_text("published_budgets.csv")).unwrap()
}

pub fn reference_recipes() -> Vec<ReferenceRecipe> {
    parse_reference_recipes(&fixture_text("published_recipes.csv")).unwrap()
}

pub fn within(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol + 1e-9
}
pub mod props;
