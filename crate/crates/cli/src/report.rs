//! JSON report documents.

use removal_core::constraint::{Assignment, Atom, ConstraintSet, Feasibility, Mode, TupleIndex};
use removal_core::corrector::{AttemptOutcome, CorrectionProblem, CorrectionResult};
use removal_core::demos::{AuditReport, MetricRepair, RemarkReport, TriangleRemoval};
use removal_core::format;
use removal_core::rational::{self, Q};
use removal_core::value_space::{Value, ValueSpace};
use serde_json::{json, Value as Json};

pub fn q(x: &Q) -> Json {
    json!(rational::render(x))
}

pub fn points(xs: &[Q]) -> Json {
    Json::Array(xs.iter().map(q).collect())
}

pub fn table(space: &ValueSpace, g: &Assignment) -> Json {
    Json::Array(
        g.iter()
            .map(|(t, v)| json!({ "tuple": t, "value": space.render(v) }))
            .collect(),
    )
}

pub fn problem_inputs(problem: &CorrectionProblem) -> Json {
    let space = problem.kernel.space();
    json!({
        "kernel": format::kernel_to_json(&problem.kernel),
        "constraint": format::constraint_to_json(&problem.constraint, space),
        "points": points(&problem.points),
        "epsilon": q(&problem.epsilon),
        "options": {
            "m": problem.options.m,
            "R": problem.options.r,
            "max_escalations": problem.options.max_escalations,
            "budget": problem.options.ramsey_budget,
        },
    })
}

pub fn correction(problem: &CorrectionProblem, result: &CorrectionResult) -> Json {
    let space = problem.kernel.space();
    let report = &result.report;
    let g: Vec<Json> = report
        .tuples
        .iter()
        .map(|t| {
            json!({
                "tuple": t.index,
                "g": space.render(&t.g),
                "f": space.render(&t.f),
                "class": t.class,
                "distance": q(&t.distance),
                "close": t.close,
            })
        })
        .collect();
    let atoms: Vec<Json> = report
        .atoms
        .iter()
        .map(|v| json!({ "atom": v.atom.to_string(), "exact": v.exact, "relaxed": v.relaxed }))
        .collect();
    let failure = match report.attempts.last().map(|a| &a.outcome) {
        Some(AttemptOutcome::Accepted) | None => Json::Null,
        Some(outcome) => serde_json::to_value(outcome).expect("serializable"),
    };
    json!({
        "inputs": problem_inputs(problem),
        "seed": report.seed,
        "mode": result.mode.to_string(),
        "success": result.success,
        "m": result.m,
        "R": result.r,
        "escalations": report.escalations,
        "trajectory": report.attempts,
        "failure": failure,
        "relaxed_ok": report.relaxed_ok,
        "closeness_ok": report.closeness_ok,
        "g": g,
        "atoms": atoms,
        "representatives": result.representatives.iter().map(|r| points(r)).collect::<Vec<_>>(),
    })
}

pub fn summary(result: &CorrectionResult) -> String {
    let r = &result.report;
    let verdict = if result.success { "success" } else { "FAILED" };
    let mut s = format!(
        "correction ({} mode): {verdict} after {} attempt(s), m = {}",
        result.mode,
        r.attempts.len(),
        result.m
    );
    if let Some(rr) = result.r {
        s += &format!(", R = {rr}");
    }
    s += &format!(
        "\n  atoms at epsilon: {}/{} hold; density tuples close: {}",
        r.atoms.iter().filter(|v| v.relaxed).count(),
        r.atoms.len(),
        r.closeness_ok
    );
    for atom in r.violated().take(5) {
        s += &format!("\n  violated: {atom}");
    }
    s
}

fn atoms(list: &[Atom]) -> Json {
    Json::Array(list.iter().map(|a| json!(a.to_string())).collect())
}

pub fn feasibility(space: &ValueSpace, f: &Feasibility) -> Json {
    match f {
        Feasibility::Feasible(a) => json!({ "verdict": "feasible", "assignment": table(space, a) }),
        Feasibility::Infeasible { witness } => json!({ "verdict": "infeasible", "witness": atoms(witness) }),
        Feasibility::Unknown { nodes } => json!({ "verdict": "unknown", "nodes": nodes }),
    }
}

pub fn remarks(reports: &[RemarkReport]) -> Json {
    let space = ValueSpace::FiniteMetric(removal_core::value_space::FiniteMetric::discrete(&["0", "1"]));
    Json::Array(
        reports
            .iter()
            .map(|r| {
                json!({
                    "name": r.name,
                    "description": r.description,
                    "outcome": feasibility(&space, &r.outcome),
                })
            })
            .collect(),
    )
}

pub fn triangle(problem: &CorrectionProblem, t: &TriangleRemoval) -> Json {
    json!({
        "correction": correction(problem, &t.correction),
        "census": t.census,
    })
}

fn tuples(ts: &[TupleIndex]) -> Json {
    json!(ts)
}

pub fn metric(problem: &CorrectionProblem, m: &MetricRepair) -> Json {
    let space = problem.kernel.space();
    json!({
        "correction": correction(problem, &m.correction),
        "f_violations": tuples(&m.f_violations),
        "broken_by_zeroing": atoms(&m.broken_by_zeroing),
        "collapsed": m.collapsed,
        "x0": m.x0,
        "repaired": table(space, &m.repaired),
        "certificate": m.certificate,
        "certificate_passes": m.certificate.passes(),
    })
}

pub fn audit(kernel_json: Json, constraint: &ConstraintSet, space: &ValueSpace, seed: u64, r: &AuditReport) -> Json {
    json!({
        "inputs": { "kernel": kernel_json, "constraint": format::constraint_to_json(constraint, space) },
        "seed": seed,
        "trials": r.trials,
        "violations": r.violations,
        "rate": r.rate,
        "interval": [r.interval.0, r.interval.1],
        "first_violation": r.first_violation,
    })
}

/// Reads back the `g` table of a correction report.
pub fn read_g(space: &ValueSpace, n: usize, rows: &Json) -> Result<Assignment, String> {
    let rows = rows.as_array().ok_or("g: expected an array")?;
    let mut g = Assignment::new(n);
    for (i, row) in rows.iter().enumerate() {
        let tuple: TupleIndex = serde_json::from_value(row["tuple"].clone()).map_err(|e| format!("g[{i}].tuple: {e}"))?;
        let text = row["g"].as_str().ok_or_else(|| format!("g[{i}].g: expected a string"))?;
        let v: Value = space.parse_value(text).map_err(|e| format!("g[{i}].g: {e}"))?;
        g.insert(tuple, v);
    }
    Ok(g)
}

pub fn mode(text: &str) -> Option<Mode> {
    match text {
        "distinct" => Some(Mode::Distinct),
        "multiset" => Some(Mode::Multiset),
        _ => None,
    }
}
