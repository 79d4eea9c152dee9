use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strandline::bench::{
    benchmark, efficiency_report, BenchError, Detector, FixedLatencyDetector, ModelMeta, SubprocessDetector,
};
use strandline::dataset::{load_predictions_for, load_split, validate_split, ValidationSummary};
use strandline::losses::{guard_probability, total_loss, LossMode, MatchedPair};
use strandline::matching::{build_cost_matrix, hungarian, MatchTarget, QueryPrediction};
use strandline::metrics::{confusion_matrix, evaluate};
use strandline::report::{
    render_confusion, render_efficiency, render_eval, render_latency, render_losses, render_pr_curves, OutputFormat,
};
use strandline::{BBox, CostMatrix, EvalOptions};

use crate::config::RunConfig;
use crate::{CliError, Command};

pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Validate { dataset } => validate(&dataset, cfg),
        Command::Evaluate { gt, pred, curves } => evaluate_cmd(&gt, &pred, curves.as_deref(), cfg),
        Command::Confusion { gt, pred } => confusion(&gt, &pred, cfg),
        Command::LossAudit { pairs } => loss_audit(&pairs, cfg),
        Command::Match { input } => match_cmd(&input, cfg),
        Command::Bench {
            inputs,
            warmup,
            iters,
            stub_ms,
            label,
            adapter,
        } => bench(&inputs, warmup, iters, stub_ms, label, &adapter, cfg),
        Command::Report { models } => report(&models, cfg),
    }
}

fn require_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} is not a directory", path.display())))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn render_validation(s: &ValidationSummary, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut out = serde_json::to_string_pretty(s).expect("summary serializes");
            out.push('\n');
            out
        }
        OutputFormat::Csv => {
            let mut out = String::from("class,instances,zero_instance\n");
            for (name, n) in &s.histogram {
                out.push_str(&format!("{name},{n},{}\n", *n == 0));
            }
            out
        }
        OutputFormat::Markdown => {
            let mut out = format!("Images: {}, instances: {}\n\n| Class | Instances |\n|---|---|\n", s.images, s.instances);
            for (name, n) in &s.histogram {
                let flag = if *n == 0 { " (zero instances)" } else { "" };
                out.push_str(&format!("| {name} | {n}{flag} |\n"));
            }
            if !s.zero_instance_classes.is_empty() {
                out.push_str(&format!(
                    "\nZero-instance classes (excluded from evaluation): {}\n",
                    s.zero_instance_classes.join(", ")
                ));
            }
            if !s.errors.is_empty() {
                out.push_str(&format!("\n{} file(s) failed validation:\n", s.errors.len()));
                for e in &s.errors {
                    out.push_str(&format!("- {e}\n"));
                }
            }
            out
        }
    }
}

fn validate(dataset: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    require_dir(dataset)?;
    let classes = cfg.class_list()?;
    let summary = validate_split(dataset, &classes, cfg.manifest.as_deref())?;
    print!("{}", render_validation(&summary, cfg.format));
    if summary.is_valid() {
        Ok(())
    } else {
        for e in &summary.errors {
            eprintln!("{e}");
        }
        Err(CliError::Validation(format!("{} file(s) failed validation", summary.errors.len())))
    }
}

fn load_pair(
    gt: &Path,
    pred: &Path,
    cfg: &RunConfig,
) -> Result<(strandline::ClassList, Vec<strandline::Detection>, Vec<strandline::GroundTruth>), CliError> {
    require_dir(gt)?;
    require_dir(pred)?;
    let classes = cfg.class_list()?;
    let split = load_split(gt, &classes, cfg.manifest.as_deref())?;
    let dets = load_predictions_for(pred, &classes, &split)?;
    let gts = split.ground_truths();
    if gts.is_empty() {
        return Err(CliError::Usage(format!("{} contains no ground-truth objects", gt.display())));
    }
    Ok((classes, dets, gts))
}

fn evaluate_cmd(gt: &Path, pred: &Path, curves: Option<&Path>, cfg: &RunConfig) -> Result<(), CliError> {
    let (classes, dets, gts) = load_pair(gt, pred, cfg)?;
    let report = evaluate(
        &dets,
        &gts,
        &classes,
        &EvalOptions {
            interpolation: cfg.interpolation,
        },
    )?;
    if let Some(path) = curves {
        fs::write(path, render_pr_curves(&report))
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    print!("{}", render_eval(&report, cfg.format));
    Ok(())
}

fn confusion(gt: &Path, pred: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let (classes, dets, gts) = load_pair(gt, pred, cfg)?;
    let cm = confusion_matrix(&dets, &gts, &classes, cfg.conf, cfg.iou)?;
    if cfg.format == OutputFormat::Markdown {
        println!("<!-- confidence >= {}, IoU >= {} -->\n", cfg.conf, cfg.iou);
    }
    print!("{}", render_confusion(&cm, cfg.format));
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    pred_box: BBox,
    gt_box: BBox,
    pred_probs: Vec<f64>,
    gt_class: usize,
    /// Defaults to the IoU of the two boxes.
    q: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PairsFile {
    List(Vec<PairRecord>),
    Wrapped { pairs: Vec<PairRecord> },
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn guard_all(probs: &[f64], eps: f64, what: &str) -> Result<Vec<f64>, CliError> {
    probs
        .iter()
        .map(|&p| guard_probability(p, eps).map_err(|e| CliError::Validation(format!("{what}: {e}"))))
        .collect()
}

fn loss_audit(path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let records = match parse_json::<PairsFile>(path)? {
        PairsFile::List(v) | PairsFile::Wrapped { pairs: v } => v,
    };
    if records.is_empty() {
        return Err(CliError::Usage(format!("{} lists no pairs", path.display())));
    }
    let pairs = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let probs = guard_all(&r.pred_probs, cfg.prob_eps, &format!("pair {i}"))?;
            let q = r.q.unwrap_or_else(|| r.pred_box.iou(&r.gt_box));
            MatchedPair::new(r.pred_box, r.gt_box, probs, r.gt_class, q)
                .map_err(|e| CliError::Validation(format!("pair {i}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let modes = match cfg.loss_mode {
        Some(m) => vec![m],
        None => vec![LossMode::Verbatim, LossMode::Corrected],
    };
    let breakdowns = modes
        .into_iter()
        .map(|m| total_loss(&pairs, &cfg.weights, m))
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", render_losses(&breakdowns, cfg.format));
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatchInput {
    Cost {
        cost: Vec<Vec<f64>>,
    },
    Sets {
        predictions: Vec<QueryPrediction>,
        ground_truths: Vec<MatchTarget>,
    },
}

#[derive(Serialize)]
struct MatchOutput {
    rows: usize,
    cols: usize,
    pairs: Vec<(usize, usize)>,
    total_cost: f64,
}

fn match_cmd(path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let cost = match parse_json::<MatchInput>(path)? {
        MatchInput::Cost { cost } => CostMatrix::from_rows(&cost)?,
        MatchInput::Sets {
            predictions,
            ground_truths,
        } => {
            let predictions = predictions
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    Ok(QueryPrediction {
                        probs: guard_all(&p.probs, cfg.prob_eps, &format!("prediction {i}"))?,
                        bbox: p.bbox,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            build_cost_matrix(&predictions, &ground_truths, &cfg.weights)?
        }
    };
    let a = hungarian(&cost);
    let out = MatchOutput {
        rows: cost.rows(),
        cols: cost.cols(),
        pairs: a.pairs,
        total_cost: a.total_cost,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("assignment serializes"));
    Ok(())
}

fn list_inputs(path: &Path) -> Result<Vec<String>, CliError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        Ok(files.into_iter().map(|p| p.to_string_lossy().into_owned()).collect())
    } else {
        Ok(read_text(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect())
    }
}

fn bench(
    inputs: &Path,
    warmup: usize,
    iters: usize,
    stub_ms: Option<f64>,
    label: Option<String>,
    adapter: &[String],
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let inputs = list_inputs(inputs)?;
    if inputs.is_empty() {
        return Err(CliError::Usage("no benchmark inputs".into()));
    }
    let (mut detector, default_label): (Box<dyn Detector>, String) = match (stub_ms, adapter.split_first()) {
        (Some(ms), _) => {
            if !(ms >= 0.0 && ms.is_finite()) {
                return Err(CliError::Usage(format!("--stub-ms must be >= 0, got {ms}")));
            }
            (Box::new(FixedLatencyDetector::from_millis(ms)), format!("stub-{ms}ms"))
        }
        (None, Some((program, args))) => {
            let mut d = SubprocessDetector::spawn(program, args)?;
            if let Ok(classes) = cfg.class_list() {
                d = d.with_classes(classes);
            }
            (Box::new(d), adapter.join(" "))
        }
        (None, None) => {
            return Err(CliError::Usage("give an adapter command after `--` or --stub-ms".into()));
        }
    };
    let label = label.unwrap_or(default_label);
    match benchmark(detector.as_mut(), &inputs, warmup, iters) {
        Ok(stats) => {
            print!("{}", render_latency(&stats, &label, cfg.format));
            Ok(())
        }
        Err(BenchError::Setup(m)) => Err(CliError::Usage(m)),
        Err(err @ BenchError::DetectorFailed { .. }) => {
            if let BenchError::DetectorFailed {
                partial: Some(stats),
                ..
            } = &err
            {
                eprintln!("partial results before the failure:");
                eprint!("{}", render_latency(stats, &label, cfg.format));
            }
            Err(CliError::Runtime(err.to_string()))
        }
    }
}

fn read_models(path: &Path) -> Result<Vec<ModelMeta>, CliError> {
    let text = read_text(path)?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let models = if is_csv {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let Some(header) = lines.next() else {
            return Ok(Vec::new());
        };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["name", "params_m", "gflops", "latency_ms"] {
            return Err(CliError::Validation(format!(
                "{}: expected header `name,params_m,gflops,latency_ms`",
                path.display()
            )));
        }
        lines
            .enumerate()
            .map(|(i, l)| {
                let f: Vec<&str> = l.split(',').map(str::trim).collect();
                let num = |s: &str| {
                    s.parse::<f64>().map_err(|_| {
                        CliError::Validation(format!("{}:{}: bad number `{s}`", path.display(), i + 2))
                    })
                };
                if f.len() != 4 {
                    return Err(CliError::Validation(format!("{}:{}: expected 4 fields", path.display(), i + 2)));
                }
                Ok(ModelMeta {
                    name: f[0].to_string(),
                    params_m: num(f[1])?,
                    gflops: num(f[2])?,
                    latency_ms: num(f[3])?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?
    } else if text.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
    };
    Ok(models)
}

fn report(path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let models = read_models(path)?;
    if models.is_empty() {
        return Err(CliError::Usage(format!("{} lists no models", path.display())));
    }
    let report = efficiency_report(&models)?;
    print!("{}", render_efficiency(&report, cfg.format));
    Ok(())
}
