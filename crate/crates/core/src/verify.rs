//! Attachment verification: compare the adapter hosts a training harness
//! actually created against a compiled target list.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::ModelDescriptor;
use crate::placement::TargetList;

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("model mismatch: target list is for `{expected}`, report is for `{reported}`")]
    ModelMismatch { expected: String, reported: String },
    #[error("condition mismatch: target list is `{expected}`, report is `{reported}`")]
    ConditionMismatch { expected: String, reported: String },
    #[error("host `{0}` is reported more than once")]
    DuplicateHost(String),
    #[error("target `{path}` does not resolve to a linear module of `{model}`")]
    UnresolvedTarget { path: String, model: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterHost {
    pub path: String,
    /// `(r, in_dim)`
    pub a_shape: [u64; 2],
    /// `(out_dim, r)`
    pub b_shape: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachmentReport {
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(rename = "condition")]
    pub condition_name: String,
    pub hosts: Vec<AdapterHost>,
}

impl AttachmentReport {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeMismatch {
    pub path: String,
    pub expected_a: [u64; 2],
    pub expected_b: [u64; 2],
    pub reported_a: [u64; 2],
    pub reported_b: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub missing: BTreeSet<String>,
    pub unexpected: BTreeSet<String>,
    pub shape_mismatches: Vec<ShapeMismatch>,
    pub pass: bool,
}

fn expected_shapes(
    descriptor: &ModelDescriptor,
    path: &str,
    r: u64,
) -> Option<([u64; 2], [u64; 2])> {
    let leaf = descriptor.leaf(path).filter(|l| l.is_linear())?;
    let (i, o) = (leaf.in_dim?, leaf.out_dim?);
    Some(([r, i], [o, r]))
}

/// Compare `report` with `expected`.
///
/// Shapes are checked for every reported host that resolves to a linear leaf
/// of `descriptor`, so a wrong-rank adapter on an unexpected host shows up in
/// both lists.
pub fn verify_attachment(
    expected: &TargetList,
    descriptor: &ModelDescriptor,
    report: &AttachmentReport,
) -> Result<VerificationResult, VerifyError> {
    if expected.model_name != report.model_name {
        return Err(VerifyError::ModelMismatch {
            expected: expected.model_name.clone(),
            reported: report.model_name.clone(),
        });
    }
    if expected.condition_name != report.condition_name {
        return Err(VerifyError::ConditionMismatch {
            expected: expected.condition_name.clone(),
            reported: report.condition_name.clone(),
        });
    }
    let mut hosts = BTreeMap::new();
    for host in &report.hosts {
        if hosts.insert(host.path.as_str(), host).is_some() {
            return Err(VerifyError::DuplicateHost(host.path.clone()));
        }
    }
    let wanted: BTreeSet<&str> = expected.paths.iter().map(String::as_str).collect();

    let missing = wanted
        .iter()
        .filter(|p| !hosts.contains_key(*p))
        .map(|p| p.to_string())
        .collect();
    let unexpected = hosts
        .keys()
        .filter(|p| !wanted.contains(*p))
        .map(|p| p.to_string())
        .collect();

    let mut shape_mismatches = Vec::new();
    for (path, host) in &hosts {
        let Some((a, b)) = expected_shapes(descriptor, path, expected.lora.r) else {
            continue;
        };
        if host.a_shape != a || host.b_shape != b {
            shape_mismatches.push(ShapeMismatch {
                path: path.to_string(),
                expected_a: a,
                expected_b: b,
                reported_a: host.a_shape,
                reported_b: host.b_shape,
            });
        }
    }

    let mut result = VerificationResult {
        missing,
        unexpected,
        shape_mismatches,
        pass: false,
    };
    result.pass = result.missing.is_empty()
        && result.unexpected.is_empty()
        && result.shape_mismatches.is_empty();
    Ok(result)
}

/// The report a correct harness would produce for `list`.
pub fn synthesize_report(
    list: &TargetList,
    descriptor: &ModelDescriptor,
) -> Result<AttachmentReport, VerifyError> {
    let hosts =
        list.paths
            .iter()
            .map(|path| {
                let (a_shape, b_shape) = expected_shapes(descriptor, path, list.lora.r)
                    .ok_or_else(|| VerifyError::UnresolvedTarget {
                        path: path.clone(),
                        model: descriptor.model_name.clone(),
                    })?;
                Ok(AdapterHost {
                    path: path.clone(),
                    a_shape,
                    b_shape,
                })
            })
            .collect::<Result<_, VerifyError>>()?;
    Ok(AttachmentReport {
        model_name: list.model_name.clone(),
        condition_name: list.condition_name.clone(),
        hosts,
    })
}
