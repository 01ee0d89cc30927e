use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use hybrid_lora::analytics::{
    analyze as run_analysis, parse_baselines, parse_budgets, parse_instances, parse_records,
    parse_reference_recipes, AnalysisOptions, TargetMap,
};
use hybrid_lora::placement::condition_by_name;
use hybrid_lora::report::{analysis_bundle, budget_table, BudgetLine, Format};
use hybrid_lora::verify::synthesize_report;
use hybrid_lora::{
    budget, canonical_conditions, compile_targets, load_classified, read_model_input,
    verify_attachment, AttachmentReport, ClassifiedDoc, LoraConfig, ModelDescriptor, RuleSet,
    TargetList,
};
use serde::Serialize;

use crate::{AnalyzeArgs, DiscoverArgs, ModelArgs, PlanArgs, SimulateArgs, VerifyArgs};

pub const INPUT_ERROR: u8 = 2;
pub const CHECK_FAILED: u8 = 1;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult = Result<ExitCode, Failure>;

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: INPUT_ERROR,
        error: e.into(),
    }
}

fn failed<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: CHECK_FAILED,
        error: e.into(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(input)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?)
        .with_context(|| format!("{} is not UTF-8", path.display()))
        .map_err(input)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(input),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(input)?;
    for (name, content) in files {
        let path = dir.join(name);
        fs::write(&path, content)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(input)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("model");
    name.split('.').next().unwrap_or(name).to_string()
}

fn load_model(
    args: &ModelArgs,
) -> Result<(ModelDescriptor, hybrid_lora::taxonomy::CoverageReport), Failure> {
    let raw = read(&args.model)?;
    let rules = match &args.rules {
        Some(path) => Some(RuleSet::from_json(&read_text(path)?).map_err(input)?),
        None => None,
    };
    load_classified(&raw, &file_stem(&args.model), rules.as_ref())
        .with_context(|| format!("{}", args.model.display()))
        .map_err(input)
}

fn load_plain_model(path: &Path) -> Result<ModelDescriptor, Failure> {
    read_model_input(&read(path)?, &file_stem(path))
        .map(|(d, _)| d)
        .with_context(|| format!("{}", path.display()))
        .map_err(input)
}

fn load_targets(path: &Path) -> Result<TargetList, Failure> {
    let list = TargetList::from_json(&read_text(path)?)
        .with_context(|| format!("{} is not a target list", path.display()))
        .map_err(input)?;
    list.lora.validate().map_err(input)?;
    Ok(list)
}

pub fn discover(args: DiscoverArgs) -> CmdResult {
    let (descriptor, coverage) = load_model(&args.model)?;
    let doc = ClassifiedDoc::new(&descriptor, &coverage).map_err(input)?;
    eprintln!(
        "{}: {} modules, {} parameters, {}",
        descriptor.model_name,
        descriptor.leaves().len(),
        descriptor.total_params,
        doc.summary.topology
    );
    for path in &coverage.unmatched {
        eprintln!("warning: `{path}` matched no rule and is labelled other");
    }
    emit(args.out.as_deref(), &json(&doc))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PlanOutput {
    target_lists: Vec<TargetList>,
    budgets: hybrid_lora::report::Table,
}

pub fn plan(args: PlanArgs) -> CmdResult {
    let format: Format = args.format.parse().map_err(|e: String| input(anyhow!(e)))?;
    if format == Format::Svg {
        return Err(input(anyhow!("plan output supports json, csv or markdown")));
    }
    let lora = LoraConfig::new(args.rank, args.alpha, args.dropout).map_err(input)?;
    let (descriptor, _) = load_model(&args.model)?;
    let topology = descriptor.topology.ok_or_else(|| {
        input(anyhow!(
            "topology of {} is undetermined",
            descriptor.model_name
        ))
    })?;
    let conditions = if args.condition == "all" {
        canonical_conditions(topology)
    } else {
        vec![condition_by_name(topology, &args.condition).map_err(input)?]
    };

    let mut lists = Vec::new();
    let mut budgets = Vec::new();
    for condition in &conditions {
        let list = compile_targets(&descriptor, condition, lora).map_err(input)?;
        budgets.push(budget(&list, &descriptor).map_err(input)?);
        lists.push(list);
    }
    let lines: Vec<BudgetLine<'_>> = lists
        .iter()
        .zip(&budgets)
        .map(|(l, b)| BudgetLine {
            model: &l.model_name,
            condition: &l.condition_name,
            budget: *b,
        })
        .collect();
    let table = budget_table(&lines);

    match &args.out {
        Some(dir) => {
            let mut files: Vec<(String, String)> = lists
                .iter()
                .map(|l| (format!("{}.targets.json", l.condition_name), json(l)))
                .collect();
            let rendered = match format {
                Format::Csv => table.to_csv(),
                Format::Markdown => table.to_markdown(),
                _ => json(&table),
            };
            files.push((format!("budgets.{}", format.extension()), rendered));
            write_files(dir, &files)?;
        }
        None => {
            let rendered = match format {
                Format::Csv => table.to_csv(),
                Format::Markdown => table.to_markdown(),
                _ => json(&PlanOutput {
                    target_lists: lists,
                    budgets: table,
                }),
            };
            emit(None, &rendered)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: VerifyArgs) -> CmdResult {
    let expected = load_targets(&args.targets)?;
    let descriptor = load_plain_model(&args.model)?;
    let report = AttachmentReport::from_json(&read_text(&args.report)?)
        .with_context(|| format!("{} is not an attachment report", args.report.display()))
        .map_err(input)?;
    let result = verify_attachment(&expected, &descriptor, &report).map_err(input)?;
    emit(args.out.as_deref(), &json(&result))?;
    if result.pass {
        eprintln!("pass: {} hosts match", expected.paths.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "fail: {} missing, {} unexpected, {} shape mismatches",
            result.missing.len(),
            result.unexpected.len(),
            result.shape_mismatches.len()
        );
        Ok(ExitCode::from(CHECK_FAILED))
    }
}

pub fn simulate_attach(args: SimulateArgs) -> CmdResult {
    let mut list = load_targets(&args.targets)?;
    let descriptor = load_plain_model(&args.model)?;
    if let Some(r) = args.rank {
        if r == 0 {
            return Err(input(anyhow!("rank must be positive")));
        }
        list.lora.r = r;
    }
    let report = synthesize_report(&list, &descriptor).map_err(input)?;
    emit(args.out.as_deref(), &json(&report))?;
    Ok(ExitCode::SUCCESS)
}

pub fn analyze(args: AnalyzeArgs) -> CmdResult {
    let format: Format = args.format.parse().map_err(|e: String| input(anyhow!(e)))?;
    let records = parse_records(&read_text(&args.results)?)
        .with_context(|| format!("{}", args.results.display()))
        .map_err(input)?;
    let baselines = parse_baselines(&read_text(&args.baselines)?)
        .with_context(|| format!("{}", args.baselines.display()))
        .map_err(input)?;
    let budgets: BTreeMap<(String, String), f64> = parse_budgets(&read_text(&args.budgets)?)
        .with_context(|| format!("{}", args.budgets.display()))
        .map_err(input)?;
    let target_map = match &args.target_map {
        Some(spec) => spec.parse::<TargetMap>().map_err(input)?,
        None => TargetMap::default(),
    };
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(input(anyhow!("--threshold must lie in [0, 1]")));
    }
    let reference_recipes = match &args.reference_recipes {
        Some(path) => parse_reference_recipes(&read_text(path)?)
            .with_context(|| format!("{}", path.display()))
            .map_err(input)?,
        None => Vec::new(),
    };
    let instances = match &args.instances {
        Some(path) => parse_instances(&read_text(path)?)
            .with_context(|| format!("{}", path.display()))
            .map_err(input)?,
        None => Vec::new(),
    };
    let options = AnalysisOptions {
        target_map,
        threshold: args.threshold,
        seed: args.seed,
        n_resamples: args.resamples,
        reference_recipes,
        instances,
    };
    let report = run_analysis(&records, &baselines, &budgets, &options).map_err(failed)?;
    for r in report.recipes.iter().filter(|r| r.discrepancy) {
        eprintln!(
            "note: {}/{} selects {} but the reference recipe is {}",
            r.model,
            r.train_domain,
            r.condition,
            r.reference_condition.as_deref().unwrap_or("?")
        );
    }
    let bundle = analysis_bundle(&report, &budgets);
    match &args.out {
        Some(dir) => write_files(dir, &bundle.files(format))?,
        None => emit(None, &bundle.render(format))?,
    }
    Ok(ExitCode::SUCCESS)
}
