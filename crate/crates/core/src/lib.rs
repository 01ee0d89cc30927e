//! Component-aware LoRA placement for hybrid attention/recurrent language models.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`descriptor`] turns a checkpoint header or a descriptor document into a
//!    validated module tree.
//! 2. [`taxonomy`] labels every module with a [`ComponentType`] and detects
//!    whether the hybrid is sequential or parallel.
//! 3. [`placement`] compiles placement conditions into exact target lists and
//!    parameter budgets.
//! 4. [`verify`] checks an adapter attachment report against a target list.
//!
//! [`analytics`] and [`report`] work on evaluation results: accuracy deltas,
//! forgetting, efficiency, Pareto frontiers, recipes and paired bootstrap
//! intervals, rendered as tables and SVG panels.

pub mod analytics;
pub mod descriptor;
pub mod document;
pub mod error;
pub mod placement;
pub mod report;
pub mod taxonomy;
pub mod verify;

pub use descriptor::{
    derive_module_tree, load_descriptor, parse_safetensors_header, DescriptorDoc, Dtype,
    ModelDescriptor, ModuleNode, TensorEntry, TensorIndex,
};
pub use document::{load_classified, read_model_input, ClassifiedDoc};
pub use error::{Error, Result};
pub use placement::{
    budget, canonical_conditions, compile_targets, lora_param_count, LoraConfig, ParameterBudget,
    PlacementCondition, TargetList,
};
pub use taxonomy::{
    classify_all, classify_module, component_param_shares, detect_topology, ClassificationRule,
    ComponentType, RuleSet, Topology,
};
pub use verify::{verify_attachment, AttachmentReport, VerificationResult};
