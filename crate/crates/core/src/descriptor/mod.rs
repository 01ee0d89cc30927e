//! Module-tree discovery: checkpoint headers and descriptor documents in,
//! validated [`ModelDescriptor`]s out.

mod safetensors;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{ComponentType, Topology};

pub use self::safetensors::{parse_safetensors_header, Dtype, TensorEntry, TensorIndex};

/// Final tensor-name segments stripped to obtain the hosting module path.
pub const PARAMETER_SUFFIXES: [&str; 2] = ["weight", "bias"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("truncated input: need {needed} bytes, got {actual}")]
    Truncated { needed: u64, actual: u64 },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("tensor `{name}`: unknown dtype `{dtype}`")]
    UnknownDtype { name: String, dtype: String },
    #[error("tensor `{name}`: {reason}")]
    InvalidEntry { name: String, reason: String },
    #[error("tensor `{name}` overlaps the data range of `{other}`")]
    Overlap { name: String, other: String },
    #[error("module `{path}`: conflicting shapes {first:?} and {second:?}")]
    ShapeConflict {
        path: String,
        first: Vec<u64>,
        second: Vec<u64>,
    },
    #[error("module `{path}` is both a leaf and an interior node")]
    LeafInterior { path: String },
    #[error("module `{path}` listed more than once")]
    DuplicatePath { path: String },
    #[error("invalid module path `{path}`")]
    InvalidPath { path: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("declared total_params {declared} disagrees with recomputed {computed}")]
    TotalMismatch { declared: u64, computed: u64 },
    #[error("declared num_layers {declared} but module paths index {found} layers")]
    LayerCountMismatch { declared: usize, found: usize },
}

/// A node of the module tree. Leaves host parameters; interior nodes only
/// group children.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleNode {
    /// Dotted module path; the root has the empty path.
    pub path: String,
    pub in_dim: Option<u64>,
    pub out_dim: Option<u64>,
    pub weight_shape: Vec<u64>,
    /// Elements held by this leaf (weight plus bias, if any).
    pub param_count: u64,
    pub children: Vec<ModuleNode>,
}

impl ModuleNode {
    fn interior(path: String) -> Self {
        ModuleNode {
            path,
            in_dim: None,
            out_dim: None,
            weight_shape: Vec::new(),
            param_count: 0,
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty() && !self.path.is_empty()
    }

    /// True for leaves hosting a 2-D weight, the only adapter-eligible kind.
    pub fn is_linear(&self) -> bool {
        self.in_dim.is_some() && self.out_dim.is_some()
    }

    /// Depth-first leaves in sibling order.
    pub fn leaves(&self) -> Vec<&ModuleNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ModuleNode>) {
        if self.is_leaf() {
            out.push(self);
        }
        for child in &self.children {
            child.collect_leaves(out);
        }
    }

    /// Look up a node by dotted path.
    pub fn find(&self, path: &str) -> Option<&ModuleNode> {
        if path == self.path {
            return Some(self);
        }
        let mut node = self;
        let mut prefix = String::new();
        for segment in path.split('.') {
            if !prefix.is_empty() {
                prefix.push('.');
            }
            prefix.push_str(segment);
            let idx = node
                .children
                .binary_search_by(|c| c.path.as_str().cmp(prefix.as_str()))
                .ok()?;
            node = &node.children[idx];
        }
        Some(node)
    }
}

/// Module tree of one checkpoint with labels filled in by the taxonomy stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescriptor {
    pub model_name: String,
    pub total_params: u64,
    /// Distinct layer indices found in module paths.
    pub num_layers: usize,
    pub tree: ModuleNode,
    pub component_labels: BTreeMap<String, ComponentType>,
    pub topology: Option<Topology>,
}

impl ModelDescriptor {
    pub fn leaves(&self) -> Vec<&ModuleNode> {
        self.tree.leaves()
    }

    pub fn leaf(&self, path: &str) -> Option<&ModuleNode> {
        self.tree.find(path).filter(|n| n.is_leaf())
    }

    /// Build a descriptor from a parsed checkpoint header.
    pub fn from_index(
        model_name: impl Into<String>,
        index: &TensorIndex,
    ) -> Result<Self, DescriptorError> {
        let tree = derive_module_tree(index)?;
        Ok(Self::from_tree(model_name.into(), tree))
    }

    fn from_tree(model_name: String, tree: ModuleNode) -> Self {
        let leaves = tree.leaves();
        let total_params = leaves.iter().map(|l| l.param_count).sum();
        let num_layers = leaves
            .iter()
            .filter_map(|l| layer_index(&l.path))
            .collect::<BTreeSet<_>>()
            .len();
        ModelDescriptor {
            model_name,
            total_params,
            num_layers,
            tree,
            component_labels: BTreeMap::new(),
            topology: None,
        }
    }

    /// Serialize back to the descriptor document schema. Documents carry one
    /// shape per module, so bias elements are dropped and the total is only
    /// declared when no biases were present.
    pub fn to_doc(&self) -> DescriptorDoc {
        let modules: Vec<ModuleEntry> = self
            .leaves()
            .into_iter()
            .map(|l| ModuleEntry {
                path: l.path.clone(),
                shape: l.weight_shape.clone(),
            })
            .collect();
        let weights: u64 = modules
            .iter()
            .map(|m| m.shape.iter().product::<u64>())
            .sum();
        DescriptorDoc {
            model_name: self.model_name.clone(),
            num_layers: self.num_layers.max(1),
            total_params: (weights == self.total_params).then_some(weights),
            modules,
        }
    }
}

/// Index of the layer hosting `path`: its first all-digit segment.
pub fn layer_index(path: &str) -> Option<usize> {
    path.split('.')
        .find(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
}

/// JSON descriptor document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorDoc {
    pub model_name: String,
    pub num_layers: usize,
    pub modules: Vec<ModuleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_params: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleEntry {
    pub path: String,
    pub shape: Vec<u64>,
}

impl DescriptorDoc {
    pub fn from_json(text: &str) -> Result<Self, DescriptorError> {
        serde_json::from_str(text).map_err(|e| DescriptorError::Schema(e.to_string()))
    }
}

#[derive(Debug, Default, Clone)]
struct LeafSpec {
    weight: Option<Vec<u64>>,
    bias: Option<Vec<u64>>,
}

impl LeafSpec {
    fn shape(&self) -> Vec<u64> {
        self.weight.clone().unwrap_or_default()
    }

    fn params(&self) -> u64 {
        let count = |s: &Vec<u64>| s.iter().product::<u64>();
        self.weight.as_ref().map_or(0, count) + self.bias.as_ref().map_or(0, count)
    }
}

#[derive(Default)]
struct Builder {
    leaf: Option<LeafSpec>,
    children: BTreeMap<String, Builder>,
}

impl Builder {
    fn slot(&mut self, path: &str) -> Result<&mut Builder, DescriptorError> {
        if path.is_empty() || path.split('.').any(str::is_empty) {
            return Err(DescriptorError::InvalidPath { path: path.into() });
        }
        let mut node = self;
        for segment in path.split('.') {
            node = node.children.entry(segment.to_string()).or_default();
        }
        Ok(node)
    }

    fn build(self, path: String) -> Result<ModuleNode, DescriptorError> {
        if self.leaf.is_some() && !self.children.is_empty() {
            return Err(DescriptorError::LeafInterior { path });
        }
        let mut node = ModuleNode::interior(path);
        if let Some(spec) = self.leaf {
            node.weight_shape = spec.shape();
            node.param_count = spec.params();
            if let [out_dim, in_dim] = node.weight_shape[..] {
                node.out_dim = Some(out_dim);
                node.in_dim = Some(in_dim);
            }
        }
        for (segment, child) in self.children {
            let child_path = if node.path.is_empty() {
                segment
            } else {
                format!("{}.{}", node.path, segment)
            };
            node.children.push(child.build(child_path)?);
        }
        Ok(node)
    }
}

/// Group tensors into a module tree.
///
/// A trailing `weight`/`bias` segment is stripped to get the hosting module;
/// any other tensor name is a module of its own. A 2-D weight `[o, i]` sets
/// `out_dim = o` and `in_dim = i` on its module.
pub fn derive_module_tree(index: &TensorIndex) -> Result<ModuleNode, DescriptorError> {
    let mut root = Builder::default();
    for entry in &index.entries {
        let (module, kind) = match entry.name.rsplit_once('.') {
            Some((module, suffix)) if PARAMETER_SUFFIXES.contains(&suffix) => (module, suffix),
            _ => (entry.name.as_str(), "weight"),
        };
        let spec = root
            .slot(module)
            .map_err(|_| DescriptorError::InvalidPath {
                path: entry.name.clone(),
            })?
            .leaf
            .get_or_insert_with(LeafSpec::default);
        let target = if kind == "bias" {
            &mut spec.bias
        } else {
            &mut spec.weight
        };
        if let Some(prev) = target {
            return Err(DescriptorError::ShapeConflict {
                path: module.to_string(),
                first: prev.clone(),
                second: entry.shape.clone(),
            });
        }
        *target = Some(entry.shape.clone());
        if let (Some(w), Some(b)) = (&spec.weight, &spec.bias) {
            if w.first() != b.first() || b.len() != 1 {
                return Err(DescriptorError::ShapeConflict {
                    path: module.to_string(),
                    first: w.clone(),
                    second: b.clone(),
                });
            }
        }
    }
    root.build(String::new())
}

/// Validate a descriptor document and build its module tree.
pub fn load_descriptor(doc: &DescriptorDoc) -> Result<ModelDescriptor, DescriptorError> {
    if doc.model_name.trim().is_empty() {
        return Err(DescriptorError::Schema("model_name is empty".into()));
    }
    if doc.num_layers == 0 {
        return Err(DescriptorError::Schema(
            "num_layers must be positive".into(),
        ));
    }
    let mut root = Builder::default();
    for module in &doc.modules {
        let slot = root.slot(&module.path)?;
        if slot.leaf.is_some() {
            return Err(DescriptorError::DuplicatePath {
                path: module.path.clone(),
            });
        }
        slot.leaf = Some(LeafSpec {
            weight: Some(module.shape.clone()),
            bias: None,
        });
    }
    let descriptor = ModelDescriptor::from_tree(doc.model_name.clone(), root.build(String::new())?);
    if let Some(declared) = doc.total_params {
        if declared != descriptor.total_params {
            return Err(DescriptorError::TotalMismatch {
                declared,
                computed: descriptor.total_params,
            });
        }
    }
    if descriptor.num_layers > 0 && descriptor.num_layers != doc.num_layers {
        return Err(DescriptorError::LayerCountMismatch {
            declared: doc.num_layers,
            found: descriptor.num_layers,
        });
    }
    Ok(ModelDescriptor {
        num_layers: doc.num_layers,
        ..descriptor
    })
}
