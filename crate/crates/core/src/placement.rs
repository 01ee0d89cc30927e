//! Placement conditions, target-list compilation and parameter budgets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::ModelDescriptor;
use crate::taxonomy::{ComponentType, PathPattern, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("invalid LoRA config: {0}")]
    InvalidLora(String),
    #[error("invalid condition `{name}`: {reason}")]
    InvalidCondition { name: String, reason: String },
    #[error("condition `{condition}` selects no modules of `{model}`")]
    EmptyTargets { condition: String, model: String },
    #[error("target `{path}` is not an adapter-eligible leaf of `{model}`")]
    UnresolvedPath { path: String, model: String },
    #[error("descriptor `{model}` is not classified")]
    Unclassified { model: String },
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
}

/// LoRA hyperparameters carried alongside a target list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraConfig {
    pub r: u64,
    pub alpha: f64,
    pub dropout: f64,
}

impl LoraConfig {
    pub fn new(r: u64, alpha: f64, dropout: f64) -> Result<Self, PlacementError> {
        let config = LoraConfig { r, alpha, dropout };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        if self.r == 0 {
            return Err(PlacementError::InvalidLora("rank must be positive".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(PlacementError::InvalidLora("alpha must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(PlacementError::InvalidLora(
                "dropout must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// The `alpha / r` multiplier applied to the low-rank update.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.r as f64
    }
}

impl Default for LoraConfig {
    /// r = 16, alpha = 32, dropout = 0.05.
    fn default() -> Self {
        LoraConfig {
            r: 16,
            alpha: 32.0,
            dropout: 0.05,
        }
    }
}

/// A named component selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementCondition {
    pub name: String,
    pub include: BTreeSet<ComponentType>,
    /// Final-segment suffixes never targeted, e.g. `conv1d`, `out_proj`.
    #[serde(default)]
    pub exclusion_rules: Vec<String>,
    /// Linear leaves targeted regardless of their component.
    #[serde(default)]
    pub extra_targets: Vec<PathPattern>,
}

impl PlacementCondition {
    pub fn new(
        name: &str,
        include: impl IntoIterator<Item = ComponentType>,
        exclusion_rules: &[&str],
    ) -> Self {
        PlacementCondition {
            name: name.to_string(),
            include: include.into_iter().collect(),
            exclusion_rules: exclusion_rules.iter().map(|s| s.to_string()).collect(),
            extra_targets: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        let invalid = |reason: &str| PlacementError::InvalidCondition {
            name: self.name.clone(),
            reason: reason.into(),
        };
        if self.name.is_empty() {
            return Err(invalid("name is empty"));
        }
        if self.include.is_empty() {
            return Err(invalid("include is empty"));
        }
        let allowed = [
            ComponentType::Attention,
            ComponentType::Recurrent,
            ComponentType::Mlp,
        ];
        if self.include.iter().any(|c| !allowed.contains(c)) {
            return Err(invalid("include may only name attention, recurrent or mlp"));
        }
        if self.exclusion_rules.iter().any(|r| r.is_empty()) {
            return Err(invalid("empty exclusion rule"));
        }
        Ok(())
    }

    /// True when the final segment of `path` ends with an exclusion rule.
    pub fn excludes(&self, path: &str) -> bool {
        let last = path.rsplit('.').next().unwrap_or(path);
        self.exclusion_rules
            .iter()
            .any(|rule| last.ends_with(rule.as_str()))
    }
}

const RECURRENT_EXCLUSIONS: [&str; 2] = ["conv1d", "out_proj"];
const ATTENTION_SUBSET_EXCLUSIONS: [&str; 1] = ["o_proj"];

/// The six conditions studied for a topology.
///
/// Parallel conditions touching the recurrent branch exclude `conv1d` and
/// `out_proj`. The attention-only and attention-plus-MLP conditions for
/// parallel models target the q/k/v projections only, while `all_eligible`
/// covers every linear leaf outside the recurrent exclusions, including the
/// output head.
pub fn canonical_conditions(topology: Topology) -> Vec<PlacementCondition> {
    use ComponentType::{Attention as A, Mlp as M, Recurrent as R};
    match topology {
        Topology::Sequential { .. } => vec![
            PlacementCondition::new("all_layers", [A, R, M], &[]),
            PlacementCondition::new("softmax_only", [A], &[]),
            PlacementCondition::new("gdn_only", [R], &[]),
            PlacementCondition::new("mlp_only", [M], &[]),
            PlacementCondition::new("softmax_plus_mlp", [A, M], &[]),
            PlacementCondition::new("gdn_plus_mlp", [R, M], &[]),
        ],
        Topology::Parallel => {
            let mut all = PlacementCondition::new("all_eligible", [A, R, M], &RECURRENT_EXCLUSIONS);
            all.extra_targets = vec![PathPattern::new("**.lm_head").expect("valid pattern")];
            vec![
                all,
                PlacementCondition::new("attention_only", [A], &ATTENTION_SUBSET_EXCLUSIONS),
                PlacementCondition::new("ssm_only", [R], &RECURRENT_EXCLUSIONS),
                PlacementCondition::new("mlp_only", [M], &[]),
                PlacementCondition::new("attention_plus_mlp", [A, M], &ATTENTION_SUBSET_EXCLUSIONS),
                PlacementCondition::new("ssm_plus_mlp", [R, M], &RECURRENT_EXCLUSIONS),
            ]
        }
    }
}

/// Exact adapter host list for one condition on one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetList {
    #[serde(rename = "condition")]
    pub condition_name: String,
    #[serde(rename = "model")]
    pub model_name: String,
    pub lora: LoraConfig,
    /// Sorted, unique dotted module paths.
    #[serde(rename = "target_modules")]
    pub paths: Vec<String>,
}

impl TargetList {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Select every linear leaf whose component is included (or whose path is an
/// extra target), minus exclusions, sorted lexicographically.
pub fn compile_targets(
    descriptor: &ModelDescriptor,
    condition: &PlacementCondition,
    lora: LoraConfig,
) -> Result<TargetList, PlacementError> {
    condition.validate()?;
    lora.validate()?;
    let mut paths = Vec::new();
    for leaf in descriptor.leaves() {
        if !leaf.is_linear() {
            continue;
        }
        let component = descriptor.component_labels.get(&leaf.path).ok_or_else(|| {
            PlacementError::Unclassified {
                model: descriptor.model_name.clone(),
            }
        })?;
        let selected = condition.include.contains(component)
            || condition
                .extra_targets
                .iter()
                .any(|p| p.matches(&leaf.path));
        if selected && !condition.excludes(&leaf.path) {
            paths.push(leaf.path.clone());
        }
    }
    if paths.is_empty() {
        return Err(PlacementError::EmptyTargets {
            condition: condition.name.clone(),
            model: descriptor.model_name.clone(),
        });
    }
    paths.sort();
    paths.dedup();
    Ok(TargetList {
        condition_name: condition.name.clone(),
        model_name: descriptor.model_name.clone(),
        lora,
        paths,
    })
}

/// Trainable elements of the two LoRA factors, `r * (in_dim + out_dim)`.
pub fn lora_param_count(in_dim: u64, out_dim: u64, r: u64) -> u64 {
    r * (in_dim + out_dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBudget {
    pub trainable_params: u64,
    pub fraction_of_model: f64,
    pub module_count: usize,
}

impl ParameterBudget {
    pub fn params_millions(&self) -> f64 {
        self.trainable_params as f64 / 1e6
    }
}

/// Trainable parameters of `list` at its rank.
pub fn budget(
    list: &TargetList,
    descriptor: &ModelDescriptor,
) -> Result<ParameterBudget, PlacementError> {
    let mut trainable_params = 0;
    for path in &list.paths {
        let leaf = descriptor
            .leaf(path)
            .filter(|l| l.is_linear())
            .ok_or_else(|| PlacementError::UnresolvedPath {
                path: path.clone(),
                model: descriptor.model_name.clone(),
            })?;
        trainable_params += lora_param_count(
            leaf.in_dim.unwrap_or_default(),
            leaf.out_dim.unwrap_or_default(),
            list.lora.r,
        );
    }
    let fraction_of_model = if descriptor.total_params == 0 {
        0.0
    } else {
        trainable_params as f64 / descriptor.total_params as f64
    };
    Ok(ParameterBudget {
        trainable_params,
        fraction_of_model,
        module_count: list.paths.len(),
    })
}

/// Look up one canonical condition by name.
pub fn condition_by_name(
    topology: Topology,
    name: &str,
) -> Result<PlacementCondition, PlacementError> {
    canonical_conditions(topology)
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| PlacementError::UnknownCondition(name.to_string()))
}
