//! Property checks shared by the property tests and the acceptance report.
//! Each check runs a deterministic proptest runner and returns the first
//! failure as a string.

use std::collections::{BTreeMap, BTreeSet};

use hybrid_lora::analytics::{
    paired_bootstrap_ci, pareto_frontier, Benchmark, InstanceOutcomes, ParetoPoint, TrainDomain,
};
use hybrid_lora::descriptor::DescriptorError;
use hybrid_lora::taxonomy::TaxonomyError;
use hybrid_lora::verify::synthesize_report;
use hybrid_lora::{
    budget, classify_all, classify_module, compile_targets, component_param_shares,
    derive_module_tree, load_descriptor, parse_safetensors_header, verify_attachment,
    ClassificationRule, ComponentType, DescriptorDoc, Dtype, LoraConfig, ModelDescriptor,
    PlacementCondition, RuleSet, TargetList, TensorEntry, TensorIndex,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

const ROOTS: [&str; 2] = ["model", "backbone"];
const LEAVES: [&str; 7] = [
    "q_proj",
    "k_proj",
    "in_proj",
    "up_proj",
    "down_proj",
    "norm",
    "A_log",
];

#[derive(Debug, Clone)]
struct ModuleSpec {
    dtype: Dtype,
    shape: Vec<u64>,
    bias: bool,
    suffixless: bool,
}

fn module_spec() -> impl Strategy<Value = ModuleSpec> {
    (
        0..Dtype::ALL.len(),
        prop::collection::vec(1u64..48, 0..4),
        any::<bool>(),
        prop::bool::weighted(0.15),
    )
        .prop_map(|(d, shape, bias, suffixless)| ModuleSpec {
            dtype: Dtype::ALL[d],
            bias: bias && !shape.is_empty() && !suffixless,
            shape,
            suffixless,
        })
}

/// Random valid tensor indices: modules three segments deep, so no path can
/// be both a leaf and an interior node.
pub fn index_strategy() -> impl Strategy<Value = TensorIndex> {
    (
        prop::collection::btree_map(
            (0..ROOTS.len(), 0usize..6, 0..LEAVES.len()),
            module_spec(),
            0..24,
        ),
        prop::collection::btree_map("[a-z_]{1,8}", "[ -~]{0,12}", 0..3),
        0u64..3,
    )
        .prop_map(|(modules, metadata, gap)| {
            let mut entries = Vec::new();
            let mut offset = 0u64;
            let mut push = |name: String, dtype: Dtype, shape: Vec<u64>| {
                let len = shape.iter().product::<u64>() * dtype.size_of();
                entries.push(TensorEntry {
                    name,
                    dtype,
                    shape,
                    byte_range: (offset, offset + len),
                });
                offset += len + gap;
            };
            for ((r, l, leaf), spec) in modules {
                let module = format!("{}.{}.{}", ROOTS[r], l, LEAVES[leaf]);
                if spec.suffixless {
                    push(module, spec.dtype, spec.shape);
                    continue;
                }
                if spec.bias {
                    push(format!("{module}.bias"), spec.dtype, vec![spec.shape[0]]);
                }
                push(format!("{module}.weight"), spec.dtype, spec.shape);
            }
            entries.sort_by(|a, b| a.name.cmp(&b.name));
            TensorIndex { entries, metadata }
        })
}

fn module_of(name: &str) -> &str {
    match name.rsplit_once('.') {
        Some((m, "weight" | "bias")) => m,
        _ => name,
    }
}

pub fn safetensors_roundtrip(cases: u32) -> Result<(), String> {
    run(cases, index_strategy(), |index| {
        let bytes = index.to_header_bytes();
        let parsed =
            parse_safetensors_header(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&parsed, &index);
        let tree = derive_module_tree(&parsed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&tree, &derive_module_tree(&index).unwrap());

        let leaves = tree.leaves();
        let paths: BTreeSet<&str> = leaves.iter().map(|l| l.path.as_str()).collect();
        let prefixes: BTreeSet<&str> = index.entries.iter().map(|e| module_of(&e.name)).collect();
        prop_assert_eq!(&paths, &prefixes);
        prop_assert_eq!(leaves.len(), prefixes.len());
        prop_assert_eq!(
            leaves.iter().map(|l| l.param_count).sum::<u64>(),
            index.total_elements()
        );
        for e in index.entries.iter().filter(|e| !e.name.ends_with(".bias")) {
            let leaf = tree.find(module_of(&e.name)).unwrap();
            prop_assert_eq!(&leaf.weight_shape, &e.shape);
        }
        Ok(())
    })
}

pub fn safetensors_truncation(cases: u32) -> Result<(), String> {
    let strategy = (index_strategy(), any::<prop::sample::Index>());
    run(cases, strategy, |(index, cut)| {
        let bytes = index.to_header_bytes();
        let k = cut.index(bytes.len());
        let err = parse_safetensors_header(&bytes[..k]);
        prop_assert!(
            matches!(err, Err(DescriptorError::Truncated { .. })),
            "{:?}",
            err
        );
        Ok(())
    })
}

pub fn safetensors_overlap(cases: u32) -> Result<(), String> {
    let strategy = (
        index_strategy(),
        any::<prop::sample::Index>(),
        any::<prop::sample::Index>(),
    );
    run(cases, strategy, |(mut index, i, j)| {
        let nonempty: Vec<usize> = (0..index.entries.len())
            .filter(|&k| index.entries[k].byte_len() > 0)
            .collect();
        if nonempty.len() < 2 {
            return Ok(());
        }
        let a = nonempty[i.index(nonempty.len())];
        let mut b = nonempty[j.index(nonempty.len())];
        if a == b {
            b = nonempty[(j.index(nonempty.len()) + 1) % nonempty.len()];
        }
        let start = index.entries[a].byte_range.0;
        let len = index.entries[b].byte_len();
        index.entries[b].byte_range = (start, start + len);
        let err = parse_safetensors_header(&index.to_header_bytes());
        let names = [index.entries[a].name.clone(), index.entries[b].name.clone()];
        match err {
            Err(DescriptorError::Overlap { name, other }) => {
                prop_assert!(names.contains(&name) || names.contains(&other));
            }
            other => prop_assert!(false, "expected overlap, got {:?}", other),
        }
        Ok(())
    })
}

pub fn safetensors_bad_json(cases: u32) -> Result<(), String> {
    let strategy = (index_strategy(), any::<prop::sample::Index>());
    run(cases, strategy, |(index, cut)| {
        let bytes = index.to_header_bytes();
        let json = std::str::from_utf8(&bytes[8..]).unwrap().trim_end();
        let k = 1 + cut.index(json.len() - 1);
        let mut broken = (k as u64).to_le_bytes().to_vec();
        broken.extend_from_slice(&json.as_bytes()[..k]);
        let err = parse_safetensors_header(&broken);
        prop_assert!(
            matches!(err, Err(DescriptorError::MalformedHeader(_))),
            "{:?}",
            err
        );
        Ok(())
    })
}

/// Arbitrary byte soup and single-byte corruptions must come back as values,
/// never as panics.
pub fn safetensors_no_panic(cases: u32) -> Result<(), String> {
    let soup = prop::collection::vec(any::<u8>(), 0..256);
    run(cases, soup, |raw| {
        let _ = parse_safetensors_header(&raw);
        let mut with_len = (raw.len() as u64).to_le_bytes().to_vec();
        with_len.extend_from_slice(&raw);
        let _ = parse_safetensors_header(&with_len);
        Ok(())
    })?;
    let strategy = (index_strategy(), any::<prop::sample::Index>(), any::<u8>());
    run(cases, strategy, |(index, at, byte)| {
        let mut bytes = index.to_header_bytes();
        let k = at.index(bytes.len());
        bytes[k] = byte;
        if let Ok(parsed) = parse_safetensors_header(&bytes) {
            let _ = derive_module_tree(&parsed);
        }
        Ok(())
    })
}

fn path_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "model",
            "layers",
            "0",
            "1",
            "7",
            "self_attn",
            "linear_attn",
            "mamba",
            "mlp",
            "feed_forward",
            "q_proj",
            "out_proj",
            "conv1d",
            "input_layernorm",
            "embed_tokens",
            "lm_head",
            "x",
        ]),
        1..6,
    )
    .prop_map(|segs| segs.join("."))
}

fn descriptor_from_paths(paths: &BTreeMap<String, Vec<u64>>) -> Option<ModelDescriptor> {
    let doc = DescriptorDoc {
        model_name: "random".into(),
        num_layers: 1,
        total_params: None,
        modules: paths
            .iter()
            .map(|(p, s)| hybrid_lora::descriptor::ModuleEntry {
                path: p.clone(),
                shape: s.clone(),
            })
            .collect(),
    };
    match load_descriptor(&doc) {
        Ok(d) => Some(d),
        Err(DescriptorError::LayerCountMismatch { found, .. }) => load_descriptor(&DescriptorDoc {
            num_layers: found,
            ..doc
        })
        .ok(),
        Err(_) => None,
    }
}

fn random_descriptor() -> impl Strategy<Value = BTreeMap<String, Vec<u64>>> {
    prop::collection::btree_map(
        path_strategy(),
        prop::collection::vec(1u64..64, 1..3),
        0..20,
    )
}

pub fn classification_totality(cases: u32) -> Result<(), String> {
    run(cases, random_descriptor(), |paths| {
        let Some(d) = descriptor_from_paths(&paths) else {
            return Ok(());
        };
        for rules in [RuleSet::builtin(), RuleSet::new(Vec::new())] {
            let leaves = d.leaves();
            for leaf in &leaves {
                prop_assert!(ComponentType::ALL.contains(&classify_module(&leaf.path, &rules)));
            }
            match classify_all(&d, &rules) {
                Ok((labelled, coverage)) => {
                    prop_assert_eq!(labelled.component_labels.len(), leaves.len());
                    for leaf in &leaves {
                        prop_assert_eq!(
                            labelled.component_labels[&leaf.path],
                            classify_module(&leaf.path, &rules)
                        );
                    }
                    let others = labelled
                        .component_labels
                        .values()
                        .filter(|c| **c == ComponentType::Other)
                        .count();
                    prop_assert_eq!(coverage.unmatched.len(), others);
                }
                // Nonsense paths can nest two subtrees of equal priority; the
                // rule set is then rightly refused for this descriptor.
                Err(TaxonomyError::PriorityConflict {
                    first,
                    second,
                    path,
                    ..
                }) => {
                    let hits: Vec<&ClassificationRule> = rules
                        .rules
                        .iter()
                        .filter(|r| r.pattern.matches(&path))
                        .collect();
                    prop_assert!(hits.iter().any(|r| r.pattern.as_str() == first));
                    prop_assert!(hits.iter().any(|r| r.pattern.as_str() == second));
                }
                Err(e) => prop_assert!(false, "unexpected {}", e),
            }
        }
        Ok(())
    })
}

pub fn share_conservation(cases: u32) -> Result<(), String> {
    run(cases, random_descriptor(), |paths| {
        let Some(mut d) = descriptor_from_paths(&paths) else {
            return Ok(());
        };
        if d.total_params == 0 {
            return Ok(());
        }
        let rules = RuleSet::builtin();
        d.component_labels = d
            .leaves()
            .into_iter()
            .map(|l| (l.path.clone(), classify_module(&l.path, &rules)))
            .collect();
        let shares = component_param_shares(&d).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(shares.len(), ComponentType::ALL.len());
        let sum: f64 = shares.values().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {}", sum);
        Ok(())
    })
}

pub fn rule_priority(cases: u32) -> Result<(), String> {
    let components = prop::sample::select(ComponentType::ALL.to_vec());
    let strategy = (path_strategy(), "[a-z_*]{1,8}", components);
    run(cases, strategy, |(path, pattern, component)| {
        let base = RuleSet::builtin();
        let before = classify_module(&path, &base);
        let min = base.rules.iter().map(|r| r.priority).min().unwrap_or(0);
        let mut extended = base.rules.clone();
        extended
            .push(ClassificationRule::new(&format!("**.{pattern}"), component, min - 1).unwrap());
        let after = classify_module(&path, &RuleSet::new(extended));
        let matched_before = base.rules.iter().any(|r| r.pattern.matches(&path));
        if matched_before {
            prop_assert_eq!(before, after);
        }
        Ok(())
    })
}

fn subset_list(d: &ModelDescriptor, mask: &[bool], r: u64) -> TargetList {
    let paths: Vec<String> = d
        .leaves()
        .into_iter()
        .filter(|l| l.is_linear())
        .zip(mask.iter().cycle())
        .filter(|(_, keep)| **keep)
        .map(|(l, _)| l.path.clone())
        .collect();
    TargetList {
        condition_name: "subset".into(),
        model_name: d.model_name.clone(),
        lora: LoraConfig::new(r, 32.0, 0.05).unwrap(),
        paths,
    }
}

/// Disjoint split of a fixture's linear leaves: budgets add exactly.
pub fn budget_additivity(d: &ModelDescriptor, cases: u32) -> Result<(), String> {
    let strategy = (prop::collection::vec(0u8..3, 1..64), 1u64..65);
    run(cases, strategy, |(assign, r)| {
        let a: Vec<bool> = assign.iter().map(|x| *x == 0).collect();
        let b: Vec<bool> = assign.iter().map(|x| *x == 1).collect();
        let union: Vec<bool> = assign.iter().map(|x| *x <= 1).collect();
        let p = |mask: &[bool]| budget(&subset_list(d, mask, r), d).unwrap();
        let (ba, bb, bu) = (p(&a), p(&b), p(&union));
        prop_assert_eq!(
            ba.trainable_params + bb.trainable_params,
            bu.trainable_params
        );
        prop_assert_eq!(ba.module_count + bb.module_count, bu.module_count);
        Ok(())
    })
}

/// Adding a component to a condition never shrinks its budget.
pub fn budget_monotonicity(d: &ModelDescriptor) -> Result<(), String> {
    use ComponentType::{Attention as A, Mlp as M, Recurrent as R};
    let subsets: Vec<Vec<ComponentType>> = vec![
        vec![A],
        vec![R],
        vec![M],
        vec![A, R],
        vec![A, M],
        vec![R, M],
        vec![A, R, M],
    ];
    let size = |inc: &[ComponentType]| {
        let cond = PlacementCondition::new("c", inc.iter().copied(), &[]);
        compile_targets(d, &cond, LoraConfig::default())
            .map(|l| budget(&l, d).unwrap())
            .map(|b| (b.trainable_params, b.module_count))
            .unwrap_or((0, 0))
    };
    for small in &subsets {
        for big in &subsets {
            if small.iter().all(|c| big.contains(c)) {
                let (s, b) = (size(small), size(big));
                if s.0 > b.0 || s.1 > b.1 {
                    return Err(format!("{small:?} -> {big:?}: {s:?} > {b:?}"));
                }
            }
        }
    }
    Ok(())
}

/// Repeated compilation is identical and sorted.
pub fn compile_determinism(d: &ModelDescriptor) -> Result<(), String> {
    for c in hybrid_lora::canonical_conditions(d.topology.ok_or("unclassified")?) {
        let a = compile_targets(d, &c, LoraConfig::default()).map_err(|e| e.to_string())?;
        let b = compile_targets(d, &c, LoraConfig::default()).map_err(|e| e.to_string())?;
        if a != b || !a.paths.windows(2).all(|w| w[0] < w[1]) {
            return Err(format!("{} not deterministic or unsorted", c.name));
        }
    }
    Ok(())
}

fn brute_force_front(points: &[(u8, u8)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(p, a)| {
            points
                .iter()
                .any(|&(q, b)| q <= p && b >= a && (q, b) != (p, a))
        })
        .collect()
}

/// Every subset of a random 8-point set agrees with a brute-force scan,
/// and the frontier of a frontier is itself.
pub fn pareto_equivalence(cases: u32) -> Result<(), String> {
    let strategy = prop::collection::vec((0u8..6, 0u8..6), 1..=8);
    run(cases, strategy, |pts| {
        for mask in 1u32..(1 << pts.len()) {
            let subset: Vec<(u8, u8)> = (0..pts.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| pts[i])
                .collect();
            let points: Vec<ParetoPoint> = subset
                .iter()
                .enumerate()
                .map(|(i, &(p, a))| {
                    ParetoPoint::new(&format!("c{i}"), p as f64 + 0.5, a as f64 / 10.0)
                })
                .collect();
            let flagged = pareto_frontier(&points);
            let got: Vec<bool> = flagged.iter().map(|p| p.dominated).collect();
            prop_assert_eq!(&got, &brute_force_front(&subset));
            let front: Vec<ParetoPoint> = flagged.into_iter().filter(|p| !p.dominated).collect();
            prop_assert!(!front.is_empty());
            prop_assert!(pareto_frontier(&front).iter().all(|p| !p.dominated));
        }
        Ok(())
    })
}

/// Swapping expected and reported host sets swaps missing and unexpected;
/// a synthesized report for any list passes.
pub fn verifier_properties(d: &ModelDescriptor, cases: u32) -> Result<(), String> {
    let strategy = (
        prop::collection::vec(any::<bool>(), 1..64),
        prop::collection::vec(any::<bool>(), 1..64),
        1u64..33,
    );
    run(cases, strategy, |(m1, m2, r)| {
        let l1 = subset_list(d, &m1, r);
        let l2 = subset_list(d, &m2, r);
        let r1 = synthesize_report(&l1, d).unwrap();
        let r2 = synthesize_report(&l2, d).unwrap();
        let v12 = verify_attachment(&l1, d, &r2).unwrap();
        let v21 = verify_attachment(&l2, d, &r1).unwrap();
        prop_assert_eq!(&v12.missing, &v21.unexpected);
        prop_assert_eq!(&v12.unexpected, &v21.missing);
        prop_assert!(v12.shape_mismatches.is_empty());
        prop_assert!(verify_attachment(&l1, d, &r1).unwrap().pass);
        prop_assert_eq!(v12.pass, l1.paths == l2.paths);
        Ok(())
    })
}

/// Share of trials whose 95% interval covers the true difference, for
/// independent Bernoulli outcomes with success rates `pa` and `pb`.
pub fn bootstrap_coverage(trials: usize, n: usize, pa: f64, pb: f64, resamples: usize) -> f64 {
    let truth = 100.0 * (pa - pb);
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut covered = 0;
    for t in 0..trials {
        let draw = |rng: &mut ChaCha8Rng, p: f64| -> Vec<u8> {
            (0..n).map(|_| rng.gen_bool(p) as u8).collect()
        };
        let a = InstanceOutcomes {
            model: "sim".into(),
            train_domain: TrainDomain::Ultrachat,
            condition: "a".into(),
            benchmark: Benchmark::HellaSwag,
            outcomes: draw(&mut rng, pa),
        };
        let b = InstanceOutcomes {
            condition: "b".into(),
            outcomes: draw(&mut rng, pb),
            ..a.clone()
        };
        let r = paired_bootstrap_ci(&a, &b, resamples, t as u64).unwrap();
        if r.ci_low_pp <= truth && truth <= r.ci_high_pp {
            covered += 1;
        }
    }
    covered as f64 / trials as f64
}
