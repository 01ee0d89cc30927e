//! Component classification and hybrid-topology detection.
//!
//! Modules are labelled by matching their dotted paths against prioritised
//! glob rules. Patterns are split on `.`; a `**` segment matches zero or more
//! whole segments, while `*` and `?` inside a segment match within it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{layer_index, ModelDescriptor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("rule set: {0}")]
    InvalidRules(String),
    #[error("rules `{first}` and `{second}` share priority {priority} but both match `{path}`")]
    PriorityConflict {
        first: String,
        second: String,
        priority: i32,
        path: String,
    },
    #[error("descriptor is not classified: `{path}` has no component label")]
    Unclassified { path: String },
    #[error("no layers found in module paths")]
    NoLayers,
    #[error("indeterminate hybrid layout: layers {both:?} host both mixers, layers {single:?} host one, layers {neither:?} host none")]
    IndeterminateLayout {
        both: Vec<usize>,
        single: Vec<usize>,
        neither: Vec<usize>,
    },
}

/// Functional family of a module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentType {
    Attention,
    Recurrent,
    Mlp,
    Norm,
    Embedding,
    Other,
}

impl ComponentType {
    pub const ALL: [ComponentType; 6] = [
        ComponentType::Attention,
        ComponentType::Recurrent,
        ComponentType::Mlp,
        ComponentType::Norm,
        ComponentType::Embedding,
        ComponentType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentType::Attention => "attention",
            ComponentType::Recurrent => "recurrent",
            ComponentType::Mlp => "mlp",
            ComponentType::Norm => "norm",
            ComponentType::Embedding => "embedding",
            ComponentType::Other => "other",
        }
    }

    /// Sequence mixers decide the hybrid topology.
    pub fn is_mixer(self) -> bool {
        matches!(self, ComponentType::Attention | ComponentType::Recurrent)
    }
}

impl fmt::Display for ComponentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentType::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown component type `{s}`"))
    }
}

/// How the two sequence mixers are arranged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    /// Each layer hosts exactly one mixer.
    Sequential {
        recurrent_layers: usize,
        attention_layers: usize,
    },
    /// Every layer hosts both mixers side by side.
    Parallel,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Sequential {
                recurrent_layers,
                attention_layers,
            } => write!(f, "sequential ({recurrent_layers}:{attention_layers})"),
            Topology::Parallel => f.write_str("parallel"),
        }
    }
}

/// Dotted-path glob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPattern {
    source: String,
    segments: Vec<String>,
}

impl PathPattern {
    pub fn new(source: &str) -> Result<Self, TaxonomyError> {
        if source.is_empty() || source.split('.').any(str::is_empty) {
            return Err(TaxonomyError::InvalidRules(format!(
                "invalid pattern `{source}`"
            )));
        }
        Ok(PathPattern {
            source: source.to_string(),
            segments: source.split('.').map(str::to_string).collect(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn matches(&self, path: &str) -> bool {
        let parts: Vec<&str> = path.split('.').collect();
        match_segments(&self.segments, &parts)
    }
}

fn match_segments(pattern: &[String], path: &[&str]) -> bool {
    match pattern.split_first() {
        None => path.is_empty(),
        Some((head, rest)) if head == "**" => {
            (0..=path.len()).any(|skip| match_segments(rest, &path[skip..]))
        }
        Some((head, rest)) => match path.split_first() {
            Some((seg, tail)) => {
                match_glob(head.as_bytes(), seg.as_bytes()) && match_segments(rest, tail)
            }
            None => false,
        },
    }
}

fn match_glob(pattern: &[u8], text: &[u8]) -> bool {
    match pattern.split_first() {
        None => text.is_empty(),
        Some((b'*', rest)) => (0..=text.len()).any(|i| match_glob(rest, &text[i..])),
        Some((b'?', rest)) => !text.is_empty() && match_glob(rest, &text[1..]),
        Some((c, rest)) => text.first() == Some(c) && match_glob(rest, &text[1..]),
    }
}

impl Serialize for PathPattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for PathPattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PathPattern::new(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationRule {
    pub pattern: PathPattern,
    pub component: ComponentType,
    /// Higher wins.
    pub priority: i32,
}

impl ClassificationRule {
    pub fn new(
        pattern: &str,
        component: ComponentType,
        priority: i32,
    ) -> Result<Self, TaxonomyError> {
        Ok(ClassificationRule {
            pattern: PathPattern::new(pattern)?,
            component,
            priority,
        })
    }
}

const SEQUENTIAL_RULES: &str = include_str!("../fixtures/rules_sequential.json");
const PARALLEL_RULES: &str = include_str!("../fixtures/rules_parallel.json");

/// Ordered list of classification rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    pub rules: Vec<ClassificationRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<ClassificationRule>) -> Self {
        RuleSet { rules }
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        serde_json::from_str(text).map_err(|e| TaxonomyError::InvalidRules(e.to_string()))
    }

    /// Naming conventions of GatedDeltaNet/attention sequential hybrids.
    pub fn sequential_hybrid() -> Self {
        Self::from_json(SEQUENTIAL_RULES).expect("bundled rule table parses")
    }

    /// Naming conventions of Mamba/attention parallel hybrids.
    pub fn parallel_hybrid() -> Self {
        Self::from_json(PARALLEL_RULES).expect("bundled rule table parses")
    }

    /// Union of both bundled tables.
    pub fn builtin() -> Self {
        let mut rules = Self::sequential_hybrid().rules;
        for rule in Self::parallel_hybrid().rules {
            if !rules.contains(&rule) {
                rules.push(rule);
            }
        }
        RuleSet { rules }
    }

    /// Reject equal-priority rules assigning different components to one
    /// path of `descriptor`.
    pub fn validate_against(&self, descriptor: &ModelDescriptor) -> Result<(), TaxonomyError> {
        for leaf in descriptor.leaves() {
            let matching: Vec<&ClassificationRule> = self
                .rules
                .iter()
                .filter(|r| r.pattern.matches(&leaf.path))
                .collect();
            for (i, a) in matching.iter().enumerate() {
                if let Some(b) = matching[i + 1..]
                    .iter()
                    .find(|b| b.priority == a.priority && b.component != a.component)
                {
                    return Err(TaxonomyError::PriorityConflict {
                        first: a.pattern.as_str().to_string(),
                        second: b.pattern.as_str().to_string(),
                        priority: a.priority,
                        path: leaf.path.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Component of the highest-priority rule matching `path`, or
/// [`ComponentType::Other`] when nothing matches. Among equal priorities the
/// earliest rule wins.
pub fn classify_module(path: &str, rules: &RuleSet) -> ComponentType {
    let mut best: Option<&ClassificationRule> = None;
    for rule in &rules.rules {
        if rule.pattern.matches(path) && best.is_none_or(|b| rule.priority > b.priority) {
            best = Some(rule);
        }
    }
    best.map_or(ComponentType::Other, |r| r.component)
}

/// Leaves that fell through to [`ComponentType::Other`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub unmatched: Vec<String>,
}

/// Label every leaf of `descriptor` and record its topology when one is
/// determinate.
pub fn classify_all(
    descriptor: &ModelDescriptor,
    rules: &RuleSet,
) -> Result<(ModelDescriptor, CoverageReport), TaxonomyError> {
    rules.validate_against(descriptor)?;
    let mut labelled = descriptor.clone();
    let mut coverage = CoverageReport::default();
    labelled.component_labels = descriptor
        .leaves()
        .into_iter()
        .map(|leaf| {
            let component = classify_module(&leaf.path, rules);
            if component == ComponentType::Other {
                coverage.unmatched.push(leaf.path.clone());
            }
            (leaf.path.clone(), component)
        })
        .collect();
    labelled.topology = detect_topology(&labelled).ok();
    Ok((labelled, coverage))
}

fn label_of(descriptor: &ModelDescriptor, path: &str) -> Result<ComponentType, TaxonomyError> {
    descriptor
        .component_labels
        .get(path)
        .copied()
        .ok_or_else(|| TaxonomyError::Unclassified { path: path.into() })
}

/// Fraction of `total_params` held by each component; all six components are
/// present and the values sum to one.
pub fn component_param_shares(
    descriptor: &ModelDescriptor,
) -> Result<BTreeMap<ComponentType, f64>, TaxonomyError> {
    let mut counts: BTreeMap<ComponentType, u64> =
        ComponentType::ALL.into_iter().map(|c| (c, 0)).collect();
    for leaf in descriptor.leaves() {
        *counts.entry(label_of(descriptor, &leaf.path)?).or_default() += leaf.param_count;
    }
    let total: u64 = counts.values().sum();
    Ok(counts
        .into_iter()
        .map(|(c, n)| {
            (
                c,
                if total == 0 {
                    0.0
                } else {
                    n as f64 / total as f64
                },
            )
        })
        .collect())
}

/// Decide whether the descriptor is a sequential or a parallel hybrid.
pub fn detect_topology(descriptor: &ModelDescriptor) -> Result<Topology, TaxonomyError> {
    let mut layers: BTreeMap<usize, BTreeSet<ComponentType>> = BTreeMap::new();
    for leaf in descriptor.leaves() {
        if let Some(idx) = layer_index(&leaf.path) {
            let component = label_of(descriptor, &leaf.path)?;
            let mixers = layers.entry(idx).or_default();
            if component.is_mixer() {
                mixers.insert(component);
            }
        }
    }
    if layers.is_empty() {
        return Err(TaxonomyError::NoLayers);
    }
    let (mut both, mut single, mut neither) = (Vec::new(), Vec::new(), Vec::new());
    let (mut recurrent, mut attention) = (0, 0);
    for (idx, mixers) in &layers {
        match mixers.len() {
            2 => both.push(*idx),
            1 => {
                single.push(*idx);
                if mixers.contains(&ComponentType::Recurrent) {
                    recurrent += 1;
                } else {
                    attention += 1;
                }
            }
            _ => neither.push(*idx),
        }
    }
    if neither.is_empty() && both.is_empty() {
        Ok(Topology::Sequential {
            recurrent_layers: recurrent,
            attention_layers: attention,
        })
    } else if neither.is_empty() && single.is_empty() {
        Ok(Topology::Parallel)
    } else {
        Err(TaxonomyError::IndeterminateLayout {
            both,
            single,
            neither,
        })
    }
}
