//! The five subcommands: parse, evaluate, optimize, generate-ood, list.
//!
//! Commands write data to files under the configured output directory and
//! keep stdout/stderr for listings and diagnostics. Given the same config
//! and seed, two runs produce byte-identical output directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oodmon_core::data::{
    apply_generated, build_ood_suite, default_intensities, load_dataset, save_dataset, split_dataset,
    synth_blobs, LabeledDataset, OodClassId, OodSuite, SplitDataset, GENERATED_VARIANTS,
};
use oodmon_core::evaluate::{
    accuracy_table_csv, auroc_table_csv, evaluate_monitor, parallel_coords_svg, pareto_csv, pareto_svg,
    rank_table, rank_table_csv, report_to_json, EvalReport, MonitorReport, NEW_WORLD_NOTE,
};
use oodmon_core::monitors::{monitor_to_json, MonitorKind, MonitorTemplate};
use oodmon_core::nn::{load_network, Network};
use oodmon_core::optimize::{
    candidate_log_jsonl, multi_objective_sweep, pareto_front, run_search, EvalContext, Objective,
    ParetoPoint, SearchMethod,
};

use crate::config::{load_config, DatasetSource, MethodConfig, Overrides, RunConfig};
use crate::diag::Diagnostic;

/// Validation failures exit with code 1, runtime failures with code 2.
#[derive(Debug)]
pub enum CommandError {
    Validation(Vec<Diagnostic>),
    Runtime(oodmon_core::Error),
}

impl From<oodmon_core::Error> for CommandError {
    fn from(e: oodmon_core::Error) -> Self {
        CommandError::Runtime(e)
    }
}

impl From<Vec<Diagnostic>> for CommandError {
    fn from(d: Vec<Diagnostic>) -> Self {
        CommandError::Validation(d)
    }
}

pub type CommandResult<T> = Result<T, CommandError>;

/// Everything a command needs after configuration and inputs are validated.
pub struct LoadedRun {
    pub config: RunConfig,
    pub net: Network,
    pub id: SplitDataset,
    pub suite: OodSuite,
    pub kinds: Vec<MonitorKind>,
}

fn load_id_dataset(config: &RunConfig, diags: &mut Vec<Diagnostic>) -> Option<LabeledDataset> {
    match &config.dataset {
        DatasetSource::Path(path) => match load_dataset(path) {
            Ok(ds) => Some(ds),
            Err(e) => {
                diags.push(Diagnostic::new("dataset.path", None, format!("{}: {e}", path.display())));
                None
            }
        },
        DatasetSource::Synth {
            classes,
            per_class,
            channels,
            height,
            width,
            separation,
        } => match synth_blobs(*classes, *per_class, &[*channels, *height, *width], config.seed, *separation) {
            Ok(ds) => Some(ds),
            Err(e) => {
                diags.push(Diagnostic::new("dataset.synth", None, e.to_string()));
                None
            }
        },
    }
}

/// Load and cross-validate every input named by the config, aggregating
/// all failures.
pub fn load_run(config: RunConfig) -> Result<LoadedRun, Vec<Diagnostic>> {
    let mut diags = Vec::new();

    let net = match load_network(&config.network) {
        Ok(n) => Some(n),
        Err(e) => {
            diags.push(Diagnostic::new(
                "network",
                None,
                format!("{}: {e}", config.network.display()),
            ));
            None
        }
    };

    let dataset = load_id_dataset(&config, &mut diags);

    if let (Some(net), Some(ds)) = (&net, &dataset) {
        if ds.image_shape() != net.input_shape.as_slice() {
            diags.push(Diagnostic::new(
                "dataset.path",
                None,
                format!(
                    "dataset images are {:?} but the network expects {:?}",
                    ds.image_shape(),
                    net.input_shape
                ),
            ));
        }
        if let Some(&max_label) = ds.labels().iter().max() {
            if max_label as usize >= net.class_count {
                diags.push(Diagnostic::new(
                    "dataset.path",
                    None,
                    format!("label {max_label} exceeds class_count {}", net.class_count),
                ));
            }
        }
    }

    let mut collected = BTreeMap::new();
    for (class, path) in &config.collected {
        match load_dataset(path) {
            Ok(ds) => {
                if let (Some(net), false) = (&net, ds.image_shape().is_empty()) {
                    if ds.image_shape() != net.input_shape.as_slice() {
                        diags.push(Diagnostic::new(
                            format!("collected.{}", class.path()),
                            None,
                            format!(
                                "images are {:?} but the network expects {:?}",
                                ds.image_shape(),
                                net.input_shape
                            ),
                        ));
                        continue;
                    }
                }
                collected.insert(class.clone(), ds);
            }
            Err(e) => diags.push(Diagnostic::new(
                format!("collected.{}", class.path()),
                None,
                format!("{}: {e}", path.display()),
            )),
        }
    }

    let ready = diags.is_empty();
    if !ready {
        return Err(diags);
    }
    let net = net.expect("checked");
    let dataset = dataset.expect("checked");

    let id = split_dataset(&dataset, config.seed).map_err(|e| vec![Diagnostic::new("seed", None, e.to_string())])?;
    let mut intensities = default_intensities();
    for (class, amount) in &config.intensities {
        intensities.insert(class.clone(), *amount);
    }
    let suite = build_ood_suite(&id, &net, &collected, &intensities, config.seed)
        .map_err(|e| vec![Diagnostic::new("intensity", None, e.to_string())])?;

    for class in &config.optimize.objective_classes {
        if suite.get(class).is_none() {
            diags.push(Diagnostic::new(
                "optimize.objective",
                None,
                format!(
                    "class {} not in the suite; available: {}",
                    class.path(),
                    suite.class_ids().iter().map(|c| c.path()).collect::<Vec<_>>().join(", ")
                ),
            ));
        }
    }
    if let Some(w) = &config.optimize.weights {
        if w.len() != config.optimize.objective_classes.len() {
            diags.push(Diagnostic::new(
                "optimize.weights",
                None,
                format!(
                    "{} weights for {} objective classes",
                    w.len(),
                    config.optimize.objective_classes.len()
                ),
            ));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let kinds = config.monitors.kinds();
    Ok(LoadedRun {
        config,
        net,
        id,
        suite,
        kinds,
    })
}

/// Summary printed (to stderr) after a successful parse.
#[derive(Debug)]
pub struct ParseSummary {
    pub monitors: usize,
    pub classes: Vec<String>,
    pub fit: usize,
    pub validation: usize,
    pub test: usize,
    pub layers: usize,
}

pub fn cmd_parse(config_path: &Path, overrides: &Overrides) -> CommandResult<ParseSummary> {
    let config = load_config(config_path, overrides)?;
    let run = load_run(config)?;
    Ok(ParseSummary {
        monitors: run.kinds.len(),
        classes: run.suite.class_ids().iter().map(|c| c.path()).collect(),
        fit: run.id.fit.len(),
        validation: run.id.validation.len(),
        test: run.id.test.len(),
        layers: run.net.layers.len(),
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CommandResult<()> {
    std::fs::write(path, bytes.as_ref()).map_err(|e| CommandError::Runtime(e.into()))
}

fn report_notes(suite: &OodSuite) -> Vec<String> {
    if suite
        .class_ids()
        .iter()
        .any(|c| c.family == oodmon_core::data::OodFamily::NewWorld)
    {
        vec![NEW_WORLD_NOTE.to_string()]
    } else {
        Vec::new()
    }
}

fn emit_report_files(out: &Path, report: &EvalReport) -> CommandResult<()> {
    write(&out.join("report.json"), report_to_json(report)?)?;
    write(&out.join("accuracy.csv"), accuracy_table_csv(report))?;
    write(&out.join("auroc.csv"), auroc_table_csv(report))?;
    let classes: Vec<OodClassId> = report
        .monitors
        .first()
        .map(|m| m.classes.iter().map(|c| c.class.clone()).collect())
        .unwrap_or_default();
    let monitors: Vec<String> = report.monitors.iter().map(|m| m.monitor.clone()).collect();
    let scores: Vec<Vec<Option<f64>>> = classes
        .iter()
        .map(|class| {
            report
                .monitors
                .iter()
                .map(|m| m.classes.iter().find(|c| &c.class == class).and_then(|c| c.auroc))
                .collect()
        })
        .collect();
    write(&out.join("ranks.csv"), rank_table_csv(&rank_table(classes, monitors, scores)))?;
    write(&out.join("parallel.svg"), parallel_coords_svg(report))?;
    Ok(())
}

/// Evaluate every selected monitor at its default parameters: threshold
/// calibrated on validation at the configured minimum ID accuracy, AUROC
/// per class on the test splits (Box reports n/a).
pub fn cmd_evaluate(config_path: &Path, overrides: &Overrides) -> CommandResult<PathBuf> {
    let config = load_config(config_path, overrides)?;
    let run = load_run(config)?;
    let out = run.config.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| CommandError::Runtime(e.into()))?;

    let ctx = EvalContext::new(&run.net, &run.id, &run.suite)?;
    let mut reports = Vec::new();
    for kind in &run.kinds {
        let template = MonitorTemplate::for_network(*kind, &run.net)?;
        let monitor = ctx.fit_calibrated(&template, &template.defaults(), run.config.optimize.min_id_accuracy)?;
        reports.push(evaluate_monitor(&monitor, &run.net, &run.id, &run.suite)?);
    }
    let report = EvalReport {
        monitors: reports,
        notes: report_notes(&run.suite),
    };
    emit_report_files(&out, &report)?;
    Ok(out)
}

fn method_of(config: &RunConfig) -> Option<SearchMethod> {
    match config.optimize.method {
        MethodConfig::None => None,
        MethodConfig::Random { trials } => Some(SearchMethod::Random { trials }),
        MethodConfig::Grid { splits } => Some(SearchMethod::Grid { splits }),
        MethodConfig::Gradient(cfg) => Some(SearchMethod::GradientDescent(cfg)),
    }
}

fn kind_file_stem(kind: MonitorKind) -> String {
    kind.name().replace('-', "_")
}

/// Run the configured search per monitor, serialize the winners, evaluate
/// them on the test splits, and emit the report plus plots. Multi-objective
/// configs additionally emit per-monitor Pareto artifacts.
pub fn cmd_optimize(config_path: &Path, overrides: &Overrides) -> CommandResult<PathBuf> {
    let config = load_config(config_path, overrides)?;
    let run = load_run(config)?;
    let out = run.config.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| CommandError::Runtime(e.into()))?;

    let Some(method) = method_of(&run.config) else {
        return Err(CommandError::Validation(vec![Diagnostic::new(
            "optimize.method",
            None,
            "cmd optimize needs a method (random, grid, or gradient)",
        )]));
    };
    if run.config.optimize.objective_classes.is_empty() {
        return Err(CommandError::Validation(vec![Diagnostic::new(
            "optimize.objective",
            None,
            "cmd optimize needs at least one objective class",
        )]));
    }
    let obj = Objective::new(
        run.config.optimize.objective_classes.clone(),
        run.config.optimize.weights.clone(),
        run.config.optimize.min_id_accuracy,
    )?;
    let ctx = EvalContext::new(&run.net, &run.id, &run.suite)?;

    let mut reports: Vec<MonitorReport> = Vec::new();
    let mut best: Option<(MonitorKind, f64)> = None;
    for kind in &run.kinds {
        let template = MonitorTemplate::for_network(*kind, &run.net)?;
        let outcome = run_search(&ctx, &template, &obj, method, run.config.seed)?;
        let stem = kind_file_stem(*kind);
        write(&out.join(format!("log_{stem}.jsonl")), candidate_log_jsonl(&outcome.log))?;

        let monitor = ctx.fit_calibrated(&template, &outcome.best.params, obj.min_id_accuracy)?;
        write(&out.join(format!("monitor_{stem}.json")), monitor_to_json(&monitor)?)?;

        let mut report = evaluate_monitor(&monitor, &run.net, &run.id, &run.suite)?;
        report.objective_value = Some(outcome.best.objective_value);
        if best.as_ref().is_none_or(|(_, v)| outcome.best.objective_value > *v) {
            best = Some((*kind, outcome.best.objective_value));
        }
        reports.push(report);

        if let Some(combos) = run.config.optimize.combos {
            if obj.targets.len() >= 2 {
                let sweep = multi_objective_sweep(&ctx, &template, &obj, combos, method, run.config.seed)?;
                let mut test_points = Vec::with_capacity(sweep.len());
                for entry in &sweep {
                    let mon = ctx.fit_calibrated(&template, &entry.outcome.best.params, obj.min_id_accuracy)?;
                    let rep = evaluate_monitor(&mon, &run.net, &run.id, &run.suite)?;
                    let accuracies = obj
                        .targets
                        .iter()
                        .map(|t| {
                            rep.classes
                                .iter()
                                .find(|c| &c.class == t)
                                .map(|c| c.accuracy)
                                .unwrap_or(0.0)
                        })
                        .collect();
                    test_points.push(ParetoPoint {
                        weights: entry.weights.clone(),
                        accuracies,
                        id_accuracy: rep.id_accuracy,
                    });
                }
                let front = pareto_front(&test_points);
                write(&out.join(format!("pareto_{stem}.csv")), pareto_csv(&obj.targets, &test_points))?;
                write(
                    &out.join(format!("pareto_{stem}.svg")),
                    pareto_svg(&obj.targets, &test_points, &front),
                )?;
            }
        }
    }

    let report = EvalReport {
        monitors: reports,
        notes: report_notes(&run.suite),
    };
    emit_report_files(&out, &report)?;
    if let Some((kind, objective)) = best {
        let best_json = serde_json::json!({
            "monitor": kind.name(),
            "objective": objective,
        });
        write(&out.join("best.json"), format!("{:#}\n", best_json))?;
    }
    Ok(out)
}

/// Write every generated OOD class of the full ID dataset as an MNZD file,
/// plus a manifest of intensities and seeds.
pub fn cmd_generate_ood(config_path: &Path, overrides: &Overrides) -> CommandResult<PathBuf> {
    let config = load_config(config_path, overrides)?;
    let mut diags = Vec::new();
    let net = match load_network(&config.network) {
        Ok(n) => Some(n),
        Err(e) => {
            diags.push(Diagnostic::new("network", None, format!("{}: {e}", config.network.display())));
            None
        }
    };
    let dataset = load_id_dataset(&config, &mut diags);
    if !diags.is_empty() {
        return Err(diags.into());
    }
    let (net, dataset) = (net.expect("checked"), dataset.expect("checked"));
    let out = config.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| CommandError::Runtime(e.into()))?;

    let mut intensities = default_intensities();
    for (class, amount) in &config.intensities {
        intensities.insert(class.clone(), *amount);
    }
    let mut manifest_entries = Vec::new();
    for (index, (path, default_amount)) in GENERATED_VARIANTS.iter().enumerate() {
        let class = OodClassId::parse(path).expect("static path");
        let amount = intensities.get(&class).copied().unwrap_or(*default_amount);
        let class_seed = config.seed.wrapping_add(index as u64 + 1);
        let generated = apply_generated(&class, &dataset, &net, amount, class_seed)?;
        let file = format!("{}.mnzd", path.replace('/', "-"));
        save_dataset(&generated, out.join(&file))?;
        manifest_entries.push(serde_json::json!({
            "class": path,
            "intensity": amount,
            "seed": class_seed,
            "file": file,
            "n": generated.len(),
        }));
    }
    let manifest = serde_json::json!({
        "format": "oodmon-generated/1",
        "base_seed": config.seed,
        "entries": manifest_entries,
    });
    write(&out.join("manifest.json"), format!("{:#}\n", manifest))?;
    Ok(out)
}

/// Human- or machine-readable listing of monitor kinds, parameter spaces,
/// taxonomy classes, and supported file formats.
pub fn cmd_list(json: bool) -> String {
    use oodmon_core::monitors::ParamDomain;
    let template_of = |kind: MonitorKind| MonitorTemplate::new(kind, 64);
    if json {
        let kinds: Vec<serde_json::Value> = MonitorKind::all()
            .iter()
            .map(|&kind| {
                let t = template_of(kind);
                let params: Vec<serde_json::Value> = t
                    .space
                    .params
                    .iter()
                    .map(|(name, domain)| match domain {
                        ParamDomain::Continuous { lo, hi } => {
                            serde_json::json!({"name": name, "type": "continuous", "lo": lo, "hi": hi})
                        }
                        ParamDomain::Integer { lo, hi } => {
                            serde_json::json!({"name": name, "type": "integer", "lo": lo, "hi": hi})
                        }
                        ParamDomain::Categorical { options } => {
                            serde_json::json!({"name": name, "type": "categorical", "options": options})
                        }
                    })
                    .collect();
                serde_json::json!({
                    "kind": kind.name(),
                    "has_score": kind.has_score(),
                    "params": params,
                })
            })
            .collect();
        let classes: Vec<&str> = GENERATED_VARIANTS.iter().map(|(p, _)| *p).collect();
        let families: Vec<&str> = oodmon_core::data::OodFamily::all().iter().map(|f| f.name()).collect();
        let listing = serde_json::json!({
            "monitors": kinds,
            "generated_classes": classes,
            "families": families,
            "formats": ["oodmon-net/1 (JSON)", "MNZD dataset container", "oodmon-monitor/1 (JSON)", "oodmon-report/1 (JSON)"],
        });
        return format!("{:#}\n", listing);
    }
    let mut text = String::from("monitor kinds:\n");
    for kind in MonitorKind::all() {
        let t = template_of(kind);
        let params: Vec<String> = t
            .space
            .params
            .iter()
            .map(|(name, domain)| match domain {
                ParamDomain::Continuous { lo, hi } => format!("{name} ∈ [{lo}, {hi}]"),
                ParamDomain::Integer { lo, hi } => format!("{name} ∈ [{lo}, {hi}] (integer)"),
                ParamDomain::Categorical { options } => format!("{name} ∈ {{{}}}", options.join(", ")),
            })
            .collect();
        let note = if kind.has_score() { "" } else { " [verdict only, no AUROC]" };
        if params.is_empty() {
            text.push_str(&format!("  {}{note}\n", kind.name()));
        } else {
            text.push_str(&format!("  {}{note}: {}\n", kind.name(), params.join(", ")));
        }
    }
    text.push_str("\ngenerated OOD classes (with default intensity):\n");
    for (path, amount) in GENERATED_VARIANTS {
        text.push_str(&format!("  {path} (default {amount})\n"));
    }
    text.push_str("\ncollected OOD families: UnseenObject, UnseenEnvironment, NewWorld\n");
    text.push_str("\nfile formats: oodmon-net/1 (JSON), MNZD dataset container, oodmon-monitor/1 (JSON), oodmon-report/1 (JSON)\n");
    text
}
