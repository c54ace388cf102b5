use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

use forest_distill::fidelity::{fidelity_report, FidelityReport};
use forest_distill::forest::{train_random_forest, CartParams};
use forest_distill::io::{
    align_classes, load_ensemble, load_model, read_tabular_csv, read_ucr_tsv, render_rule_list, save_ensemble,
    save_model, CsvOptions, RenderFormat,
};
use forest_distill::model::{enumerate_rules, DataKind, Dataset, Ensemble, Task};
use forest_distill::pipeline::{
    evaluate_ensemble, extract_with_report, EllSelection, ExtractionConfig, ExtractionReport, Metrics, RuleListModel,
};
use forest_distill::temporal::{train_shapelet_forest, ShapeletForestParams};

use crate::config::Config;
use crate::{
    CliError, EvaluateArgs, ExtractArgs, FidelityArgs, KindArg, ReportFormat, ShowArgs, ShowFormat, TaskArg, TrainArgs,
};

const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    report: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn versioned_json<T: Serialize>(report: &str, body: &T) -> Result<String, CliError> {
    let doc = Versioned {
        schema_version: SCHEMA_VERSION,
        report,
        body,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

fn opt<T: DeserializeOwned>(flag: Option<T>, cfg: &Config, section: &str, key: &str) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(section, key).map_err(CliError::Usage),
    }
}

fn req<T: DeserializeOwned>(flag: Option<T>, cfg: &Config, section: &str, key: &str) -> Result<T, CliError> {
    opt(flag, cfg, section, key)?.ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
}

fn usage(e: forest_distill::Error) -> CliError {
    match e {
        forest_distill::Error::InvalidParameter(msg) => CliError::Usage(msg),
        other => CliError::Runtime(other.into()),
    }
}

fn read_data(
    path: &Path,
    kind: DataKind,
    task: Task,
    target: Option<&str>,
    classes: Option<&[String]>,
) -> anyhow::Result<Dataset> {
    let ds = match kind {
        DataKind::Temporal => {
            if task != Task::Classification {
                anyhow::bail!("temporal data is read as labelled series; regression is not supported");
            }
            read_ucr_tsv(path).with_context(|| format!("reading {}", path.display()))?
        }
        DataKind::Tabular => {
            let read = read_tabular_csv(path, target, task, CsvOptions::default())
                .with_context(|| format!("reading {}", path.display()))?;
            if read.dropped > 0 {
                log::warn!("{}: skipped {} rows with missing values", path.display(), read.dropped);
            }
            read.dataset
        }
    };
    match classes {
        Some(names) if task == Task::Classification => {
            align_classes(ds, names).with_context(|| format!("reading {}", path.display()))
        }
        _ => Ok(ds),
    }
}

fn print_metrics(m: &Metrics) {
    println!("points: {}", m.n_points);
    if let Some(a) = m.accuracy {
        println!("accuracy: {a:.4}");
    }
    if let Some(e) = m.mse {
        println!("mse: {e:.6}");
    }
    for (name, v) in [
        ("unique", m.unique_fraction),
        ("multiple", m.multiple_fraction),
        ("fallback", m.fallback_fraction),
    ] {
        if let Some(v) = v {
            println!("{name} fraction: {v:.4}");
        }
    }
}

pub fn train(a: TrainArgs, cfg: &Config) -> Result<(), CliError> {
    const S: &str = "train";
    let data: PathBuf = req(a.data, cfg, S, "data")?;
    let out: PathBuf = req(a.out, cfg, S, "out")?;
    let target: Option<String> = opt(a.target, cfg, S, "target")?;
    let task = match opt(a.task, cfg, S, "task")?.unwrap_or(TaskArg::Clf) {
        TaskArg::Clf => Task::Classification,
        TaskArg::Reg => Task::Regression,
    };
    let kind = opt(a.kind, cfg, S, "kind")?.unwrap_or(KindArg::Tabular);
    let trees = opt(a.trees, cfg, S, "trees")?.unwrap_or(100) as usize;
    let depth = opt(a.depth, cfg, S, "depth")?.unwrap_or(3) as usize;
    let seed = opt(a.seed, cfg, S, "seed")?.unwrap_or(0);
    let per_node = opt(a.shapelets_per_node, cfg, S, "shapelets-per-node")?.unwrap_or(10) as usize;
    if trees == 0 || depth == 0 || per_node == 0 {
        return Err(CliError::Usage(
            "--trees, --depth and --shapelets-per-node must be at least 1".into(),
        ));
    }

    let ens = match kind {
        KindArg::Tabular => {
            let ds = read_data(&data, DataKind::Tabular, task, target.as_deref(), None)?;
            train_random_forest(&ds, &CartParams::forest(trees, depth, seed)).map_err(usage)?
        }
        KindArg::Shapelet => {
            if task != Task::Classification {
                return Err(CliError::Usage("shapelet forests need --task clf".into()));
            }
            let ds = read_data(&data, DataKind::Temporal, task, None, None)?;
            let params = ShapeletForestParams {
                n_trees: trees,
                max_depth: depth,
                shapelets_per_node: per_node,
                seed,
                ..ShapeletForestParams::default()
            };
            train_shapelet_forest(&ds, &params).map_err(usage)?
        }
    };
    save_ensemble(&ens, &out).with_context(|| format!("writing {}", out.display()))?;
    println!("trees: {}", ens.trees.len());
    println!("rules: {}", ens.n_rules());
    println!("wrote {}", out.display());
    Ok(())
}

fn parse_ell_range(s: &str) -> Result<EllSelection, CliError> {
    if s == "auto" {
        return Ok(EllSelection::Validate {
            lo: None,
            hi: None,
            exact_bounds: true,
        });
    }
    let bad = || CliError::Usage(format!("--ell-range expects `auto` or `lo:hi`, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    Ok(EllSelection::Validate {
        lo: Some(lo),
        hi: Some(hi),
        exact_bounds: true,
    })
}

fn print_extraction(r: &ExtractionReport) {
    println!("status: {}", r.status.name());
    println!("objective: {:.6}", r.objective);
    println!("rules: {}", r.n_rules);
    match r.ell_range {
        Some((lo, hi)) => println!("ell: {} (validated over {lo}..={hi})", r.ell_used),
        None => println!("ell: {}", r.ell_used),
    }
    println!(
        "candidate rules: {} ({} after filtering)",
        r.n_candidate_rules, r.n_filtered_rules
    );
    println!("preprocessing seconds: {:.3}", r.preprocess_seconds);
    println!("solver seconds: {:.3}", r.solver_seconds);
}

pub fn extract(a: ExtractArgs, cfg: &Config) -> Result<(), CliError> {
    const S: &str = "extract";
    let ens_path: PathBuf = req(a.ensemble, cfg, S, "ensemble")?;
    let data: PathBuf = req(a.data, cfg, S, "data")?;
    let out: PathBuf = req(a.out, cfg, S, "out")?;
    let target: Option<String> = opt(a.target, cfg, S, "target")?;

    let mut conf = ExtractionConfig::default();
    let (ell, range) = match (a.ell, a.ell_range) {
        (None, None) => (
            cfg.get::<usize>(S, "ell").map_err(CliError::Usage)?,
            cfg.get(S, "ell-range").map_err(CliError::Usage)?,
        ),
        (ell, range) => (ell.map(|v| v as usize), range),
    };
    conf.ell = match (ell, range) {
        (Some(l), _) => EllSelection::Fixed(l),
        (None, Some(r)) => parse_ell_range(&r)?,
        (None, None) => parse_ell_range("auto")?,
    };
    if let Some(l) = opt(a.lambda, cfg, S, "lambda")? {
        conf.lambda = l;
    }
    if let Some(n) = opt(a.nmin, cfg, S, "nmin")? {
        conf.n_min_fraction = n;
    }
    if let Some(s) = opt(a.budget_seconds, cfg, S, "budget-seconds")? {
        conf.budget.max_seconds = s;
    }
    if let Some(n) = opt(a.budget_nodes, cfg, S, "budget-nodes")? {
        conf.budget.max_nodes = n;
    }
    conf.cv_folds = opt(a.cv_folds, cfg, S, "cv-folds")?;
    conf.seed = opt(a.seed, cfg, S, "seed")?.unwrap_or(0);
    if conf.budget.max_nodes == 0 || !(conf.budget.max_seconds > 0.0) {
        return Err(CliError::Usage("solver budget must be positive".into()));
    }
    conf.validate().map_err(usage)?;

    let ens = load_ensemble(&ens_path).with_context(|| format!("loading {}", ens_path.display()))?;
    let ds = read_data(&data, ens.kind, ens.task, target.as_deref(), Some(&ens.class_names))?;
    let (model, report) = extract_with_report(&ens, &ds, &conf)?;
    save_model(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    print_extraction(&report);
    println!("wrote {}", out.display());
    if let Some(path) = opt::<PathBuf>(a.report, cfg, S, "report")? {
        std::fs::write(&path, versioned_json("extraction", &report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn model_data(model: &RuleListModel, path: &Path, target: Option<&str>) -> anyhow::Result<Dataset> {
    read_data(path, model.kind, model.task, target, Some(&model.class_names))
}

pub fn evaluate(a: EvaluateArgs, cfg: &Config) -> Result<(), CliError> {
    const S: &str = "evaluate";
    let model_path: PathBuf = req(a.model, cfg, S, "model")?;
    let data: PathBuf = req(a.data, cfg, S, "data")?;
    let target: Option<String> = opt(a.target, cfg, S, "target")?;
    let format = opt(a.format, cfg, S, "format")?.unwrap_or(ReportFormat::Text);

    let model = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let ds = model_data(&model, &data, target.as_deref())?;
    let metrics = forest_distill::pipeline::evaluate(&model, &ds)?;
    match format {
        ReportFormat::Json => println!("{}", versioned_json("metrics", &metrics)?),
        ReportFormat::Text => {
            println!("task: {}", metrics.task.name());
            println!("rules: {}", model.n_rules());
            print_metrics(&metrics);
        }
    }
    Ok(())
}

fn provenance_warnings(model: &RuleListModel, ens: &Ensemble) -> Vec<String> {
    let mut warnings = Vec::new();
    if model.kind != ens.kind || model.width != ens.width {
        warnings.push("the model and the ensemble were built for differently shaped data".to_string());
    }
    if model.task == Task::Classification && model.class_names != ens.class_names {
        warnings.push("the model and the ensemble use different class labels".to_string());
    }
    let forest = enumerate_rules(ens);
    let foreign = model
        .rules
        .iter()
        .filter(|r| !forest.iter().any(|f| f.same_path(r)))
        .count();
    if foreign > 0 {
        warnings.push(format!(
            "{foreign} of {} rules are not paths of this ensemble",
            model.rules.len()
        ));
    }
    warnings
}

fn print_fidelity(r: &FidelityReport, forest: &Metrics) {
    println!("rules: {}", r.n_rules);
    println!("represented trees: {:.4}", r.represented_trees);
    println!("path-represented trees: {:.4}", r.path_represented_trees);
    println!("represented paths: {:.4}", r.represented_paths);
    println!("f1 (top {:.0}% features): {:.4}", r.top_fraction * 100.0, r.f1);
    println!("disagreement: {:.6}", r.disagreement);
    if let Some(a) = forest.accuracy {
        println!("ensemble accuracy: {a:.4}");
    }
    if let Some(e) = forest.mse {
        println!("ensemble mse: {e:.6}");
    }
}

pub fn fidelity(a: FidelityArgs, cfg: &Config) -> Result<(), CliError> {
    const S: &str = "fidelity";
    let model_path: PathBuf = req(a.model, cfg, S, "model")?;
    let ens_path: PathBuf = req(a.ensemble, cfg, S, "ensemble")?;
    let data: PathBuf = req(a.data, cfg, S, "data")?;
    let target: Option<String> = opt(a.target, cfg, S, "target")?;
    let top = opt(a.top_fraction, cfg, S, "top-fraction")?.unwrap_or(0.05);
    if !(top > 0.0 && top <= 1.0) {
        return Err(CliError::Usage(format!("--top-fraction {top} outside (0, 1]")));
    }
    let format = opt(a.format, cfg, S, "format")?.unwrap_or(ReportFormat::Text);

    let model = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let ens = load_ensemble(&ens_path).with_context(|| format!("loading {}", ens_path.display()))?;
    if model.task != ens.task {
        return Err(anyhow::anyhow!(
            "the model is a {} model but the ensemble is a {} ensemble",
            model.task.name(),
            ens.task.name()
        )
        .into());
    }
    for w in provenance_warnings(&model, &ens) {
        log::warn!("{w}");
    }
    let ds = read_data(&data, ens.kind, ens.task, target.as_deref(), Some(&ens.class_names))?;
    let report = fidelity_report(&model, &ens, &ds, top)?;
    let forest = evaluate_ensemble(&ens, &ds)?;
    match format {
        ReportFormat::Json => println!("{}", versioned_json("fidelity", &report)?),
        ReportFormat::Text => print_fidelity(&report, &forest),
    }
    Ok(())
}

pub fn show(a: ShowArgs, cfg: &Config) -> Result<(), CliError> {
    const S: &str = "show";
    let model_path: PathBuf = req(a.model, cfg, S, "model")?;
    let format = match opt(a.format, cfg, S, "format")?.unwrap_or(ShowFormat::Text) {
        ShowFormat::Text => RenderFormat::Text,
        ShowFormat::Tree => RenderFormat::Tree,
        ShowFormat::Json => RenderFormat::Json,
    };
    let model = load_model(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    print!("{}", render_rule_list(&model, format, None)?);
    Ok(())
}
