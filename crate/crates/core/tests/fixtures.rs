mod common;

use std::collections::BTreeMap;

use common::*;
use hybrid_lora::analytics::{
    delta_table, efficiency_ratio, forgetting_score, heatmap_matrix, mean_accuracy,
    pareto_frontier, select_recipe, Benchmark, DeltaCell, EvalRecord, ParetoPoint, TargetMap,
    TrainDomain,
};
use hybrid_lora::placement::condition_by_name;
use hybrid_lora::{
    budget, canonical_conditions, compile_targets, component_param_shares, detect_topology,
    parse_safetensors_header, ComponentType, LoraConfig, ModelDescriptor, Topology,
};

fn published_rows() -> Vec<(String, String, f64, f64, usize)> {
    let text = fixture_text("published_budgets.csv");
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        rows.push((
            f[0].to_string(),
            f[1].to_string(),
            f[2].parse().unwrap(),
            f[3].parse().unwrap(),
            f[4].parse().unwrap(),
        ));
    }
    rows
}

fn descriptor_for(model: &str) -> ModelDescriptor {
    if model == QWEN {
        qwen()
    } else {
        falcon()
    }
}

#[test]
fn headers_match_descriptor_documents() {
    for (header, doc) in [
        (
            "qwen3_5_0_8b.header.safetensors",
            "qwen3_5_0_8b.descriptor.json",
        ),
        (
            "falcon_h1_0_5b.header.safetensors",
            "falcon_h1_0_5b.descriptor.json",
        ),
    ] {
        let raw = std::fs::read(fixture_path(header)).unwrap();
        let index = parse_safetensors_header(&raw).unwrap();
        let from_header =
            ModelDescriptor::from_index(index.metadata["model_name"].clone(), &index).unwrap();
        let from_doc = raw_descriptor(doc);
        assert_eq!(from_header.tree, from_doc.tree, "{header}");
        assert_eq!(from_header.total_params, from_doc.total_params);
    }
}

#[test]
fn qwen_header_has_24_attention_projections() {
    let raw = std::fs::read(fixture_path("qwen3_5_0_8b.header.safetensors")).unwrap();
    let tree = hybrid_lora::derive_module_tree(&parse_safetensors_header(&raw).unwrap()).unwrap();
    let projections = tree
        .leaves()
        .into_iter()
        .filter(|l| l.path.contains(".self_attn.") && l.path.ends_with("_proj"))
        .count();
    assert_eq!(projections, 24);
}

#[test]
fn totals_near_reported_sizes() {
    let q = raw_descriptor("qwen3_5_0_8b.descriptor.json");
    let f = raw_descriptor("falcon_h1_0_5b.descriptor.json");
    assert!(
        within(q.total_params as f64 / 759e6, 1.0, 0.01),
        "{}",
        q.total_params
    );
    assert!(
        within(f.total_params as f64 / 524e6, 1.0, 0.01),
        "{}",
        f.total_params
    );
    assert_eq!((q.num_layers, f.num_layers), (24, 36));
}

#[test]
fn mixer_layout_per_layer() {
    let q = qwen();
    let f = falcon();
    let mut per_layer: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    for leaf in q.leaves() {
        if let Some(l) = hybrid_lora::descriptor::layer_index(&leaf.path) {
            let e = per_layer.entry(l).or_default();
            match q.component_labels[&leaf.path] {
                ComponentType::Attention => e.0 = true,
                ComponentType::Recurrent => e.1 = true,
                _ => {}
            }
        }
    }
    let attention_only = per_layer.values().filter(|(a, r)| *a && !*r).count();
    let recurrent_only = per_layer.values().filter(|(a, r)| !*a && *r).count();
    assert_eq!((recurrent_only, attention_only), (18, 6));

    assert_eq!(
        detect_topology(&q).unwrap(),
        Topology::Sequential {
            recurrent_layers: 18,
            attention_layers: 6
        }
    );
    assert_eq!(detect_topology(&f).unwrap(), Topology::Parallel);
    assert_eq!(q.topology, Some(detect_topology(&q).unwrap()));
}

#[test]
fn component_shares() {
    let q = component_param_shares(&qwen()).unwrap();
    assert!(within(q[&ComponentType::Attention], 0.044, 0.005), "{q:?}");
    assert!(within(q[&ComponentType::Recurrent], 0.188, 0.005), "{q:?}");
    assert!(within(q[&ComponentType::Mlp], 0.262, 0.005), "{q:?}");
    let f = component_param_shares(&falcon()).unwrap();
    assert!(within(f[&ComponentType::Recurrent], 0.346, 0.005), "{f:?}");
    assert!(within(f[&ComponentType::Attention], 0.064, 0.005), "{f:?}");
    assert!(within(f[&ComponentType::Mlp], 0.434, 0.005), "{f:?}");
    for shares in [q, f] {
        assert!(within(shares.values().sum(), 1.0, 1e-12));
    }
}

#[test]
fn published_budgets_reproduce() {
    let lora = LoraConfig::default();
    for (model, condition, params_m, pct, modules) in published_rows() {
        let d = descriptor_for(&model);
        let cond = condition_by_name(d.topology.unwrap(), &condition).unwrap();
        let list = compile_targets(&d, &cond, lora).unwrap();
        let b = budget(&list, &d).unwrap();
        assert_eq!(b.module_count, modules, "{model}/{condition}");
        assert!(
            within(b.params_millions() / params_m, 1.0, 0.01),
            "{model}/{condition}: {} vs {params_m}",
            b.params_millions()
        );
        assert!(
            within(100.0 * b.fraction_of_model, pct, 0.05),
            "{model}/{condition}"
        );
    }
}

#[test]
fn falcon_ssm_excludes_conv_and_out_proj() {
    let f = falcon();
    let list = compile_targets(
        &f,
        &condition_by_name(Topology::Parallel, "ssm_only").unwrap(),
        LoraConfig::default(),
    )
    .unwrap();
    assert_eq!(list.paths.len(), 36);
    assert!(list.paths.iter().all(|p| p.ends_with("mamba.in_proj")));
    for c in canonical_conditions(Topology::Parallel) {
        if c.include.contains(&ComponentType::Recurrent) {
            let list = compile_targets(&f, &c, LoraConfig::default()).unwrap();
            assert!(list
                .paths
                .iter()
                .all(|p| !p.ends_with("conv1d") && !p.ends_with("out_proj")));
        }
    }
}

#[test]
fn union_budgets_are_sums() {
    let lora = LoraConfig::default();
    for (d, pairs) in [
        (
            qwen(),
            [
                ("softmax_plus_mlp", "softmax_only", "mlp_only"),
                ("gdn_plus_mlp", "gdn_only", "mlp_only"),
            ],
        ),
        (
            falcon(),
            [
                ("attention_plus_mlp", "attention_only", "mlp_only"),
                ("ssm_plus_mlp", "ssm_only", "mlp_only"),
            ],
        ),
    ] {
        let topo = d.topology.unwrap();
        let params = |name| {
            let list = compile_targets(&d, &condition_by_name(topo, name).unwrap(), lora).unwrap();
            budget(&list, &d).unwrap().trainable_params
        };
        for (union, a, b) in pairs {
            assert_eq!(params(union), params(a) + params(b), "{union}");
        }
    }
}

#[test]
fn rank_doubles_budget() {
    let d = qwen();
    for c in canonical_conditions(d.topology.unwrap()) {
        let at = |r| {
            let list = compile_targets(&d, &c, LoraConfig::new(r, 32.0, 0.05).unwrap()).unwrap();
            budget(&list, &d).unwrap().trainable_params
        };
        assert_eq!(at(32), 2 * at(16));
    }
}

fn grid_records<'a>(
    records: &'a [EvalRecord],
    model: &str,
    domain: TrainDomain,
) -> Vec<&'a EvalRecord> {
    records
        .iter()
        .filter(|r| r.model == model && r.train_domain == domain)
        .collect()
}

fn delta(
    deltas: &[DeltaCell],
    model: &str,
    domain: TrainDomain,
    condition: &str,
    b: Benchmark,
) -> f64 {
    deltas
        .iter()
        .find(|d| {
            d.model == model
                && d.train_domain == domain
                && d.condition == condition
                && d.benchmark == b
        })
        .unwrap()
        .delta_pp
}

#[test]
fn table_three_deltas() {
    let deltas = delta_table(&records(), &baselines()).unwrap();
    let g = TrainDomain::Gsm8k;
    assert!(within(
        delta(&deltas, FALCON, g, "attention_only", Benchmark::Gsm8k),
        17.2,
        1e-9
    ));
    assert!(within(
        delta(&deltas, QWEN, g, "gdn_only", Benchmark::Gsm8k),
        -14.8,
        0.15
    ));
}

#[test]
fn forgetting_examples() {
    let deltas = delta_table(&records(), &baselines()).unwrap();
    let scores = forgetting_score(&deltas, &TargetMap::default()).unwrap();
    let f = scores
        .iter()
        .find(|s| {
            s.model == QWEN
                && s.train_domain == TrainDomain::Ultrachat
                && s.condition == "softmax_plus_mlp"
        })
        .unwrap();
    assert!(within(f.score_pp, 4.2, 0.05), "{}", f.score_pp);
    assert_eq!(f.off_target.len(), 4);
    let uc_gsm = delta(
        &deltas,
        FALCON,
        TrainDomain::Ultrachat,
        "attention_plus_mlp",
        Benchmark::Gsm8k,
    );
    assert!(within(uc_gsm, 10.9, 0.15));
}

#[test]
fn efficiency_examples() {
    assert!(within(efficiency_ratio(10.2, 1.08).unwrap(), 9.4, 0.05));
    assert!(within(efficiency_ratio(17.2, 2.21).unwrap(), 7.8, 0.05));
}

#[test]
fn mean_and_pareto_examples() {
    let records = records();
    let mean = |model, condition: &str| {
        let rows: Vec<&EvalRecord> = grid_records(&records, model, TrainDomain::Gsm8k)
            .into_iter()
            .filter(|r| r.condition == condition)
            .collect();
        mean_accuracy(&rows).unwrap()
    };
    assert!(within(mean(FALCON, "attention_only"), 0.527, 0.0005));
    assert!(within(mean(QWEN, "all_layers"), 0.507, 0.0005));

    let pts = vec![
        ParetoPoint::new("softmax_only", 1.08, mean(QWEN, "softmax_only")),
        ParetoPoint::new("all_layers", 10.82, mean(QWEN, "all_layers")),
        ParetoPoint::new("mlp_only", 5.31, mean(QWEN, "mlp_only")),
    ];
    let flags: Vec<bool> = pareto_frontier(&pts).iter().map(|p| p.dominated).collect();
    assert_eq!(flags, [false, true, false]);
}

#[test]
fn recipe_examples() {
    let records = records();
    let budgets = published_budgets();
    let recipe = |model: &str, domain, full| {
        let grid: Vec<EvalRecord> = grid_records(&records, model, domain)
            .into_iter()
            .cloned()
            .collect();
        let b: BTreeMap<String, f64> = budgets
            .iter()
            .filter(|((m, _), _)| m == model)
            .map(|((_, c), p)| (c.clone(), *p))
            .collect();
        select_recipe(&grid, &b, full, 0.95).unwrap()
    };
    let r = recipe(FALCON, TrainDomain::Gsm8k, "all_eligible");
    assert_eq!((r.condition.as_str(), r.params_m), ("attention_only", 2.21));
    let r = recipe(QWEN, TrainDomain::Ultrachat, "all_layers");
    assert_eq!((r.condition.as_str(), r.params_m), ("softmax_only", 1.08));
    assert!(r.meets_threshold);
}

#[test]
fn heatmap_examples() {
    let deltas = delta_table(&records(), &baselines()).unwrap();
    let grid_of = |model: &str, domain| {
        let cells: Vec<DeltaCell> = deltas
            .iter()
            .filter(|d| d.model == model && d.train_domain == domain)
            .cloned()
            .collect();
        heatmap_matrix(&cells, TargetMap::default().target(domain).unwrap()).unwrap()
    };
    let q = grid_of(QWEN, TrainDomain::Gsm8k);
    assert!(within(
        q.cell(Benchmark::Gsm8k, "softmax_only").unwrap(),
        10.2,
        0.15
    ));
    assert_eq!(q.conditions[0], "softmax_only");
    let f = grid_of(FALCON, TrainDomain::Ultrachat);
    let row = f
        .benchmarks
        .iter()
        .position(|b| *b == Benchmark::Gsm8k)
        .unwrap();
    assert!(f.cells[row].iter().all(|v| *v > 0.0));
}
