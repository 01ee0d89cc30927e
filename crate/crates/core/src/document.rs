//! Model input documents: the classified descriptor written by discovery and
//! a loader that accepts any of the three model input forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::descriptor::{
    load_descriptor, parse_safetensors_header, DescriptorDoc, DescriptorError, ModelDescriptor,
};
use crate::error::{Error, Result};
use crate::taxonomy::{
    classify_all, component_param_shares, detect_topology, ComponentType, CoverageReport, RuleSet,
    TaxonomyError, Topology,
};

/// Per-component totals reported alongside a classified descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub total_params: u64,
    pub num_layers: usize,
    pub topology: Topology,
    pub module_counts: BTreeMap<ComponentType, usize>,
    pub param_shares: BTreeMap<ComponentType, f64>,
    pub unmatched: Vec<String>,
}

/// Output of discovery; also accepted wherever a model is expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifiedDoc {
    pub descriptor: DescriptorDoc,
    pub component_labels: BTreeMap<String, ComponentType>,
    pub summary: ClassificationSummary,
}

impl ClassifiedDoc {
    /// `descriptor` must already be classified.
    pub fn new(descriptor: &ModelDescriptor, coverage: &CoverageReport) -> Result<Self> {
        let topology = match descriptor.topology {
            Some(t) => t,
            None => detect_topology(descriptor)?,
        };
        let mut module_counts: BTreeMap<ComponentType, usize> =
            ComponentType::ALL.into_iter().map(|c| (c, 0)).collect();
        for c in descriptor.component_labels.values() {
            *module_counts.entry(*c).or_default() += 1;
        }
        Ok(ClassifiedDoc {
            descriptor: descriptor.to_doc(),
            component_labels: descriptor.component_labels.clone(),
            summary: ClassificationSummary {
                total_params: descriptor.total_params,
                num_layers: descriptor.num_layers,
                topology,
                module_counts,
                param_shares: component_param_shares(descriptor)?,
                unmatched: coverage.unmatched.clone(),
            },
        })
    }

    /// Rebuild the descriptor, checking that labels cover exactly its leaves.
    pub fn to_descriptor(&self) -> Result<ModelDescriptor> {
        let mut d = load_descriptor(&self.descriptor)?;
        let leaves: Vec<String> = d.leaves().into_iter().map(|l| l.path.clone()).collect();
        for path in &leaves {
            if !self.component_labels.contains_key(path) {
                return Err(TaxonomyError::Unclassified { path: path.clone() }.into());
            }
        }
        if let Some(extra) = self.component_labels.keys().find(|p| d.leaf(p).is_none()) {
            return Err(
                DescriptorError::Schema(format!("label for unknown module `{extra}`")).into(),
            );
        }
        d.component_labels = self.component_labels.clone();
        d.topology = Some(detect_topology(&d)?);
        Ok(d)
    }
}

/// Which of the accepted forms a model input was.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    SafetensorsHeader,
    Descriptor,
    Classified,
}

/// Parse a safetensors header, a descriptor document or a classified
/// document. `fallback_name` names header-only inputs whose metadata lacks a
/// `model_name` entry.
pub fn read_model_input(raw: &[u8], fallback_name: &str) -> Result<(ModelDescriptor, InputKind)> {
    let first = raw.iter().find(|b| !b.is_ascii_whitespace()).copied();
    let descriptor = if first != Some(b'{') {
        let index = parse_safetensors_header(raw)?;
        let name = index
            .metadata
            .get("model_name")
            .cloned()
            .unwrap_or_else(|| fallback_name.to_string());
        (
            ModelDescriptor::from_index(name, &index)?,
            InputKind::SafetensorsHeader,
        )
    } else {
        let text = std::str::from_utf8(raw)
            .map_err(|e| DescriptorError::MalformedHeader(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| DescriptorError::Schema(e.to_string()))?;
        if value.get("descriptor").is_some() {
            let doc: ClassifiedDoc = serde_json::from_value(value)
                .map_err(|e| DescriptorError::Schema(e.to_string()))?;
            (doc.to_descriptor()?, InputKind::Classified)
        } else {
            (
                load_descriptor(&DescriptorDoc::from_json(text)?)?,
                InputKind::Descriptor,
            )
        }
    };
    if descriptor.0.leaves().is_empty() {
        return Err(Error::NoModules);
    }
    Ok(descriptor)
}

/// Load any model input and make sure it carries labels and a topology.
/// Classified inputs keep their labels unless `rules` is given.
pub fn load_classified(
    raw: &[u8],
    fallback_name: &str,
    rules: Option<&RuleSet>,
) -> Result<(ModelDescriptor, CoverageReport)> {
    let (descriptor, kind) = read_model_input(raw, fallback_name)?;
    if kind == InputKind::Classified && rules.is_none() {
        let unmatched = descriptor
            .component_labels
            .iter()
            .filter(|(_, c)| **c == ComponentType::Other)
            .map(|(p, _)| p.clone())
            .collect();
        return Ok((descriptor, CoverageReport { unmatched }));
    }
    let builtin;
    let rules = match rules {
        Some(r) => r,
        None => {
            builtin = RuleSet::builtin();
            &builtin
        }
    };
    let (mut labelled, coverage) = classify_all(&descriptor, rules)?;
    labelled.topology = Some(detect_topology(&labelled)?);
    Ok((labelled, coverage))
}
