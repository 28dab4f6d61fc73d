use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use removal_core::constraint::{ConstraintSet, Feasibility};
use removal_core::corrector::{self, CorrectionOptions, CorrectionProblem, CorrectionReport, CorrectionResult};
use removal_core::demos;
use removal_core::density::{self, Target};
use removal_core::format;
use removal_core::kernel::StepKernel;
use removal_core::ramsey::{self, RamseyInstance, RamseyOutcome, Strategy, TableColoring};
use removal_core::rational::{self, Q};
use serde_json::{json, Value as Json};

mod report;

#[derive(Parser)]
#[command(name = "removal", version, about = "Correct constraint systems over step-function kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a kernel at one point.
    Eval {
        #[arg(long)]
        kernel: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long)]
        point: String,
    },
    /// Exact local mass of a target set at one point.
    Density(DensityArgs),
    /// Correct a kernel on a finite point set.
    Correct(CorrectArgs),
    /// Multipartite Ramsey extraction for a tabulated coloring.
    Ramsey(RamseyArgs),
    /// Built-in demonstrations.
    Demo {
        #[command(subcommand)]
        demo: Demo,
    },
    /// Sample the almost-everywhere hypothesis of a kernel.
    Audit(AuditArgs),
    /// Re-check a correction report from scratch.
    Verify {
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        out: Out,
    },
}

#[derive(Args)]
struct Out {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    point: String,
    #[arg(long)]
    m: u64,
    /// Center of the target ball; defaults to the kernel value at the point.
    #[arg(long)]
    target_value: Option<String>,
    /// Radius of the target ball, or cell size with --cells.
    #[arg(long)]
    epsilon: String,
    /// Use a union of ε-partition cells as the target instead of a ball.
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<usize>>,
    /// Also classify the point, refining up to this resolution.
    #[arg(long)]
    classify_up_to: Option<u64>,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct Tuning {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "0.1")]
    epsilon: String,
    /// Starting resolution (defaults to the kernel's).
    #[arg(long)]
    m: Option<u64>,
    /// Starting number of samples per point (symmetric correction).
    #[arg(long = "R")]
    r: Option<usize>,
    #[arg(long, default_value_t = 4)]
    max_escalations: u32,
    /// Node budget per Ramsey restart.
    #[arg(long, default_value_t = 200_000)]
    budget: u64,
    /// Drop the timing field, for byte-comparable output.
    #[arg(long)]
    no_timing: bool,
}

impl Tuning {
    fn options(&self) -> CorrectionOptions {
        CorrectionOptions {
            m: self.m,
            r: self.r,
            seed: self.seed,
            max_escalations: self.max_escalations,
            ramsey_budget: self.budget,
        }
    }
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    constraint: PathBuf,
    #[arg(long)]
    points: String,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    out: Out,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyName {
    Exhaustive,
    Randomized,
}

#[derive(Args)]
struct RamseyArgs {
    /// Instance file: parts, sizes, targets and a coloring table.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "exhaustive")]
    strategy: StrategyName,
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 8)]
    restarts: u32,
    /// Required for the randomized strategy.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: Out,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    constraint: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: Out,
}

#[derive(Subcommand)]
enum Demo {
    /// Make a graphon triangle-free on a finite point set.
    TriangleRemoval(DemoArgs),
    /// Repair an almost-semimetric on a finite point set.
    MetricRepair(DemoArgs),
    /// The two counterexamples for dropping symmetry or distinctness.
    Remark {
        #[command(flatten)]
        out: Out,
    },
    /// Audit the almost-everywhere hypothesis of the demo graphons.
    Audit {
        /// Audit the complete graphon instead of the bipartite one.
        #[arg(long)]
        complete: bool,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: Out,
    },
}

#[derive(Args)]
struct DemoArgs {
    /// Kernel file; defaults to the built-in example.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Use the complete graphon (triangle removal only).
    #[arg(long)]
    complete: bool,
    /// Defaults to six points for triangle removal and three for metric repair.
    #[arg(long)]
    points: Option<String>,
    #[command(flatten)]
    tuning: Tuning,
    #[command(flatten)]
    out: Out,
}

/// Exit status: 0 success, 2 honest failure, 1 bad input.
enum Outcome {
    Success,
    Failure,
}

type Run = Result<Outcome, String>;

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_kernel(path: &Path) -> Result<StepKernel, String> {
    format::kernel_from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_constraint(path: &Path, kernel: &StepKernel) -> Result<ConstraintSet, String> {
    format::constraint_from_str(&read(path)?, kernel.space()).map_err(|e| format!("{}: {e}", path.display()))
}

fn number(flag: &str, text: &str) -> Result<Q, String> {
    rational::parse(text).map_err(|e| format!("--{flag}: {e}"))
}

fn positive(flag: &str, text: &str) -> Result<Q, String> {
    let x = number(flag, text)?;
    if x <= Q::from_integer(0.into()) {
        return Err(format!("--{flag} must be positive"));
    }
    Ok(x)
}

fn emit(out: &Out, mut doc: Json, started: Option<Instant>) -> Result<(), String> {
    if let (Some(t), Json::Object(obj)) = (started, &mut doc) {
        obj.insert("timing".into(), json!({ "elapsed_ms": t.elapsed().as_millis() as u64 }));
    }
    let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    match &out.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn timing(tuning: &Tuning, started: Instant) -> Option<Instant> {
    (!tuning.no_timing).then_some(started)
}

fn verdict(success: bool) -> Outcome {
    if success {
        Outcome::Success
    } else {
        Outcome::Failure
    }
}

fn eval(kernel: &Path, point: &str) -> Run {
    let kernel = load_kernel(kernel)?;
    let point = format::parse_points(point).map_err(|e| format!("--point: {e}"))?;
    let value = kernel.eval(&point).map_err(|e| e.to_string())?;
    let base = kernel.base_value(&point).map_err(|e| e.to_string())?;
    let space = kernel.space();
    let doc = json!({
        "command": "eval",
        "point": report::points(&point),
        "value": space.render(&value),
        "base_value": space.render(base),
        "on_exception": kernel.exception_at(&point).is_some(),
    });
    eprintln!("f({}) = {}", point.iter().map(rational::render).collect::<Vec<_>>().join(", "), space.render(&value));
    emit(&Out { out: None }, doc, None)?;
    Ok(Outcome::Success)
}

fn density_cmd(a: &DensityArgs) -> Run {
    let kernel = load_kernel(&a.kernel)?;
    let point = format::parse_points(&a.point).map_err(|e| format!("--point: {e}"))?;
    let eps = positive("epsilon", &a.epsilon)?;
    let space = kernel.space();
    let (target, target_doc) = match &a.cells {
        Some(cells) => {
            let partition = space.epsilon_partition(&eps).map_err(|e| e.to_string())?;
            if let Some(c) = cells.iter().find(|&&c| c >= partition.cell_count()) {
                return Err(format!("--cells: cell {c} does not exist ({} cells)", partition.cell_count()));
            }
            let doc = json!({ "cells": cells, "cell_count": partition.cell_count() });
            (Target::Cells { partition, cells: cells.iter().copied().collect() }, doc)
        }
        None => {
            let center = match &a.target_value {
                Some(t) => space.parse_value(t).map_err(|e| format!("--target-value: {e}"))?,
                None => kernel.eval(&point).map_err(|e| e.to_string())?,
            };
            let doc = json!({ "ball": { "center": space.render(&center), "radius": report::q(&eps) } });
            (Target::Ball { center, radius: eps.clone() }, doc)
        }
    };
    let mass = density::density_mass(&kernel, &point, &target, a.m).map_err(|e| e.to_string())?;
    let mut doc = json!({
        "command": "density",
        "point": report::points(&point),
        "m": a.m,
        "target": target_doc,
        "mass": report::q(&mass),
    });
    if let Some(m_max) = a.classify_up_to {
        let class = density::classify_tuple(&kernel, &point, &eps, m_max).map_err(|e| e.to_string())?;
        doc["class"] = json!(class);
    }
    eprintln!("mass at m = {}: {}", a.m, rational::render(&mass));
    emit(&a.out, doc, None)?;
    Ok(Outcome::Success)
}

fn correct_cmd(a: &CorrectArgs) -> Run {
    let started = Instant::now();
    let kernel = load_kernel(&a.kernel)?;
    let constraint = load_constraint(&a.constraint, &kernel)?;
    let problem = CorrectionProblem {
        kernel,
        constraint,
        points: format::parse_points(&a.points).map_err(|e| format!("--points: {e}"))?,
        epsilon: positive("epsilon", &a.tuning.epsilon)?,
        options: a.tuning.options(),
    };
    let result = corrector::correct(&problem).map_err(|e| e.to_string())?;
    eprintln!("{}", report::summary(&result));
    let mut doc = report::correction(&problem, &result);
    doc["command"] = json!("correct");
    emit(&a.out, doc, timing(&a.tuning, started))?;
    Ok(verdict(result.success))
}

fn ramsey_cmd(a: &RamseyArgs) -> Run {
    let text = read(&a.instance)?;
    let doc: Json = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", a.instance.display()))?;
    let field = |k: &str| -> Result<Json, String> {
        doc.get(k).cloned().ok_or_else(|| format!("{}: missing field `{k}`", a.instance.display()))
    };
    let parse = |k: &str, j: Json| -> Result<Vec<usize>, String> {
        serde_json::from_value(j).map_err(|e| format!("{k}: {e}"))
    };
    let parts: Vec<Vec<usize>> = serde_json::from_value(field("parts")?).map_err(|e| format!("parts: {e}"))?;
    let sizes = parse("sizes", field("sizes")?)?;
    let targets = parse("targets", field("targets")?)?;
    let instance = RamseyInstance::new(parts, sizes, targets).map_err(|e| e.to_string())?;
    let coloring_doc = field("coloring")?;
    let default = coloring_doc.get("default").and_then(Json::as_u64).unwrap_or(0) as u32;
    let mut coloring = TableColoring::new(default);
    let entries = coloring_doc.get("entries").and_then(Json::as_array).cloned().unwrap_or_default();
    for (i, e) in entries.into_iter().enumerate() {
        let array: Vec<Vec<usize>> =
            serde_json::from_value(e["array"].clone()).map_err(|err| format!("coloring.entries[{i}].array: {err}"))?;
        let color = e["color"].as_u64().ok_or_else(|| format!("coloring.entries[{i}].color: expected an integer"))?;
        coloring.set(array, color as u32);
    }
    let strategy = match a.strategy {
        StrategyName::Exhaustive => Strategy::Exhaustive { budget: a.budget },
        StrategyName::Randomized => Strategy::Randomized {
            restarts: a.restarts,
            seed: a.seed.ok_or("--seed is required for the randomized strategy")?,
            budget_per_restart: a.budget,
        },
    };
    let outcome = ramsey::ramsey_extract(&instance, &coloring, strategy);
    let (found, result) = match &outcome {
        RamseyOutcome::Found(ex) => {
            let verified = ramsey::verify_extraction(&instance, &coloring, ex);
            eprintln!("found subsets {:?} with color {} (verified: {verified})", ex.subsets, ex.color);
            (true, json!({ "found": true, "extraction": ex, "verified": verified }))
        }
        RamseyOutcome::NotFound(reason) => {
            eprintln!("no extraction: {reason:?}");
            (false, json!({ "found": false, "reason": reason }))
        }
    };
    let report = json!({ "command": "ramsey", "seed": a.seed, "result": result });
    emit(&a.out, report, None)?;
    Ok(verdict(found))
}

fn audit_cmd(kernel: &StepKernel, constraint: &ConstraintSet, trials: u64, seed: u64, out: &Out) -> Run {
    let r = demos::audit_ae_hypothesis(kernel, constraint, trials, seed).map_err(|e| e.to_string())?;
    eprintln!(
        "{} of {} sampled tuples violate the constraint (rate {:.4}, 95% interval [{:.4}, {:.4}])",
        r.violations, r.trials, r.rate, r.interval.0, r.interval.1
    );
    let mut doc = report::audit(format::kernel_to_json(kernel), constraint, kernel.space(), seed, &r);
    doc["command"] = json!("audit");
    emit(out, doc, None)?;
    Ok(Outcome::Success)
}

fn demo_problem(a: &DemoArgs, kernel: StepKernel, constraint: ConstraintSet, default_points: &str) -> Result<CorrectionProblem, String> {
    Ok(CorrectionProblem {
        kernel,
        constraint,
        points: format::parse_points(a.points.as_deref().unwrap_or(default_points)).map_err(|e| format!("--points: {e}"))?,
        epsilon: positive("epsilon", &a.tuning.epsilon)?,
        options: a.tuning.options(),
    })
}

fn demo_cmd(demo: &Demo) -> Run {
    match demo {
        Demo::TriangleRemoval(a) => {
            let started = Instant::now();
            let kernel = match (&a.kernel, a.complete) {
                (Some(path), _) => load_kernel(path)?,
                (None, true) => demos::complete_graphon(),
                (None, false) => demos::example_graphon(),
            };
            let problem = demo_problem(a, kernel, demos::triangle_constraint(), "0.05,0.2,0.35,0.55,0.7,0.9")?;
            let out = demos::triangle_removal_with(&problem.kernel, &problem.points, &problem.epsilon, problem.options.clone())
                .map_err(|e| e.to_string())?;
            eprintln!("{}", report::summary(&out.correction));
            eprintln!(
                "  triangles over {} ordered triples: g = {}, f = {}",
                out.census.triples, out.census.g_triangles, out.census.f_triangles
            );
            let mut doc = report::triangle(&problem, &out);
            doc["command"] = json!("demo triangle-removal");
            emit(&a.out, doc, timing(&a.tuning, started))?;
            Ok(verdict(out.correction.success && out.census.g_triangles == 0))
        }
        Demo::MetricRepair(a) => {
            let started = Instant::now();
            let kernel = match &a.kernel {
                Some(path) => load_kernel(path)?,
                None => demos::example_metric(),
            };
            let problem = demo_problem(a, kernel, demos::metric_constraint(), "0.1,0.6,0.9")?;
            let out = demos::metric_repair_with(&problem.kernel, &problem.points, &problem.epsilon, problem.options.clone())
                .map_err(|e| e.to_string())?;
            eprintln!("{}", report::summary(&out.correction));
            eprintln!(
                "  certificate over {} ordered triples: {} failure(s); collapsed points: {:?}",
                out.certificate.triples_checked,
                out.certificate.failures.len(),
                out.collapsed
            );
            let mut doc = report::metric(&problem, &out);
            doc["command"] = json!("demo metric-repair");
            emit(&a.out, doc, timing(&a.tuning, started))?;
            Ok(verdict(out.correction.success && out.certificate.passes() && out.broken_by_zeroing.is_empty()))
        }
        Demo::Remark { out } => {
            let reports = demos::remark_demos().map_err(|e| e.to_string())?;
            for r in &reports {
                let v = match &r.outcome {
                    Feasibility::Feasible(_) => "feasible".to_string(),
                    Feasibility::Infeasible { witness } => format!(
                        "infeasible, witness {}",
                        witness.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
                    ),
                    Feasibility::Unknown { nodes } => format!("unknown after {nodes} nodes"),
                };
                eprintln!("{}: {v}", r.description);
            }
            emit(out, json!({ "command": "demo remark", "reports": report::remarks(&reports) }), None)?;
            Ok(Outcome::Success)
        }
        Demo::Audit { complete, trials, seed, out } => {
            let kernel = if *complete { demos::complete_graphon() } else { demos::example_graphon() };
            audit_cmd(&kernel, &demos::triangle_constraint(), *trials, *seed, out)
        }
    }
}

fn verify_cmd(path: &Path, out: &Out) -> Run {
    let doc: Json = serde_json::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    let inputs = &doc["inputs"];
    let kernel = format::parse_kernel(&inputs["kernel"]).map_err(|e| format!("inputs.kernel: {e}"))?;
    let constraint =
        format::parse_constraint(&inputs["constraint"], kernel.space()).map_err(|e| format!("inputs.constraint: {e}"))?;
    let points: Vec<Q> = inputs["points"]
        .as_array()
        .ok_or("inputs.points: expected an array")?
        .iter()
        .map(|p| p.as_str().ok_or("inputs.points: expected strings").and_then(|s| rational::parse(s).map_err(|_| "inputs.points: bad number")))
        .collect::<Result<_, _>>()?;
    let epsilon = inputs["epsilon"]
        .as_str()
        .and_then(|s| rational::parse(s).ok())
        .ok_or("inputs.epsilon: expected an exact number")?;
    let mode = doc["mode"].as_str().and_then(report::mode).ok_or("mode: expected distinct or multiset")?;
    let n = points.len();
    let g = report::read_g(kernel.space(), n, &doc["g"])?;
    let flag = |k: &str| doc[k].as_bool().ok_or_else(|| format!("{k}: expected true or false"));
    let result = CorrectionResult {
        mode,
        success: flag("success")?,
        g,
        representatives: Vec::new(),
        m: doc["m"].as_u64().ok_or("m: expected an integer")?,
        r: doc["R"].as_u64().map(|r| r as usize),
        report: CorrectionReport {
            atoms: Vec::new(),
            relaxed_ok: flag("relaxed_ok")?,
            closeness_ok: flag("closeness_ok")?,
            tuples: Vec::new(),
            attempts: Vec::new(),
            seed: doc["seed"].as_u64().unwrap_or(0),
            escalations: 0,
        },
    };
    let problem = CorrectionProblem {
        kernel,
        constraint,
        points,
        epsilon,
        options: CorrectionOptions::seeded(result.report.seed),
    };
    let v = corrector::verify_correction(&result, &problem).map_err(|e| e.to_string())?;
    for issue in v.issues() {
        eprintln!("  {issue}");
    }
    eprintln!("verification: {}", if v.is_clean() { "clean" } else { "issues found" });
    emit(out, json!({ "command": "verify", "report": path.display().to_string(), "clean": v.is_clean(), "verification": v }), None)?;
    Ok(verdict(v.is_clean()))
}

fn run(cli: Cli) -> Run {
    match &cli.command {
        Command::Eval { kernel, point } => eval(kernel, point),
        Command::Density(a) => density_cmd(a),
        Command::Correct(a) => correct_cmd(a),
        Command::Ramsey(a) => ramsey_cmd(a),
        Command::Demo { demo } => demo_cmd(demo),
        Command::Audit(a) => {
            let kernel = load_kernel(&a.kernel)?;
            let constraint = load_constraint(&a.constraint, &kernel)?;
            audit_cmd(&kernel, &constraint, a.trials, a.seed, &a.out)
        }
        Command::Verify { report, out } => verify_cmd(report, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Failure) => ExitCode::from(2),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
