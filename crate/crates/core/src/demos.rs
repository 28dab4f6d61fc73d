//! End-to-end demonstrations: triangle removal on graphons, repair of
//! almost-semimetrics, the two necessary-hypothesis counterexamples, and a
//! sampling audit of the almost-everywhere hypothesis.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraint::{
    atom_holds_relaxed, feasible, index_set, satisfies, Assignment, Atom, ConstraintSet, Feasibility, Mode,
    Template, TupleIndex,
};
use crate::corrector::{correct_symmetric, CorrectionOptions, CorrectionProblem, CorrectionResult};
use crate::error::{Error, Result};
use crate::kernel::{ExceptionPiece, PieceAtom, StepKernel};
use crate::rational::{self, Q};
use crate::value_space::{Ext, Value, ValueSpace};

/// Complete bipartite graphon on the halves of `[0,1)`, with the diagonal
/// `x1 = x2` overridden to 1: it has triangles only on a null set.
pub fn example_graphon() -> StepKernel {
    let l = Value::Label;
    let diagonal = ExceptionPiece {
        atoms: vec![PieceAtom::Tied { a: 0, b: 1 }],
        value: l(1),
    };
    StepKernel::new(2, 2, bits(), vec![l(0), l(1), l(1), l(0)], vec![diagonal], true).expect("valid kernel")
}

/// The constant graphon 1.
pub fn complete_graphon() -> StepKernel {
    StepKernel::new(2, 1, bits(), vec![Value::Label(1)], vec![], true).expect("valid kernel")
}

/// Block distances 0.2 within and 0.3 across the halves of `[0,1)`, with
/// the single pair `(0.1, 0.6)` pushed to 1.
pub fn example_metric() -> StepKernel {
    let (near, far) = (Value::Real(rational::ratio(1, 5)), Value::Real(rational::ratio(3, 10)));
    let spike = ExceptionPiece {
        atoms: vec![
            PieceAtom::Fixed { coord: 0, value: rational::ratio(1, 10) },
            PieceAtom::Fixed { coord: 1, value: rational::ratio(3, 5) },
        ],
        value: Value::Real(rational::int(1)),
    };
    StepKernel::new(
        2,
        2,
        ValueSpace::BoundedInterval { diameter: rational::int(1) },
        vec![near.clone(), far.clone(), far, near],
        vec![spike],
        true,
    )
    .expect("valid kernel")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleCensus {
    /// Ordered triples of `A^3` examined.
    pub triples: usize,
    pub g_triangles: usize,
    pub f_triangles: usize,
    /// Triples on which the pointwise kernel forms a triangle.
    pub f_defects: Vec<TupleIndex>,
}

#[derive(Clone, Debug)]
pub struct TriangleRemoval {
    pub correction: CorrectionResult,
    pub census: TriangleCensus,
}

fn edge_label(space: &ValueSpace) -> Result<usize> {
    space
        .finite_metric()
        .filter(|fm| fm.len() == 2)
        .and_then(|fm| fm.index_of("1").filter(|_| fm.index_of("0").is_some()))
        .ok_or_else(|| Error::Contract("triangle removal needs the label space {0, 1}".into()))
}

/// Counts `(a,b,c) ∈ A^3` with all three pairs `ab`, `bc`, `ac` labelled as edges.
fn count_triangles(n: usize, edge: impl Fn(usize, usize) -> bool) -> (usize, Vec<TupleIndex>) {
    let hits: Vec<TupleIndex> = (1..=n)
        .cartesian_product(1..=n)
        .cartesian_product(1..=n)
        .filter(|&((a, b), c)| edge(a, b) && edge(b, c) && edge(a, c))
        .map(|((a, b), c)| vec![a, b, c])
        .collect();
    (hits.len(), hits)
}

/// Corrects a `{0,1}`-valued graphon to be triangle-free on `A`, repeats
/// included, and counts triangles of `g` and of the pointwise kernel.
pub fn triangle_removal_demo(kernel: &StepKernel, points: &[Q], epsilon: &Q, seed: u64) -> Result<TriangleRemoval> {
    triangle_removal_with(kernel, points, epsilon, CorrectionOptions::seeded(seed))
}

/// Symmetry and triangle-freeness over multisets.
pub fn triangle_constraint() -> ConstraintSet {
    ConstraintSet::new(2, Mode::Multiset, vec![Template::symmetry(), Template::triangle_free()]).expect("valid templates")
}

pub fn triangle_removal_with(
    kernel: &StepKernel,
    points: &[Q],
    epsilon: &Q,
    options: CorrectionOptions,
) -> Result<TriangleRemoval> {
    if kernel.arity() != 2 {
        return Err(Error::Contract("triangle removal needs a graphon (arity 2)".into()));
    }
    let one = Value::Label(edge_label(kernel.space())?);
    let problem = CorrectionProblem {
        kernel: kernel.clone(),
        constraint: triangle_constraint(),
        points: points.to_vec(),
        epsilon: epsilon.clone(),
        options,
    };
    let correction = correct_symmetric(&problem)?;
    let n = points.len();
    let (g_triangles, _) = count_triangles(n, |a, b| correction.g.get(&vec![a, b]) == Some(&one));
    let mut f = Assignment::new(n);
    for index in index_set(2, n, Mode::Multiset) {
        f.insert(index.clone(), kernel.eval(&problem.tuple_points(&index))?);
    }
    let (f_triangles, f_defects) = count_triangles(n, |a, b| f.get(&vec![a, b]) == Some(&one));
    Ok(TriangleRemoval {
        census: TriangleCensus {
            triples: n * n * n,
            g_triangles,
            f_triangles,
            f_defects,
        },
        correction,
    })
}

fn ext(space: &ValueSpace, v: &Value) -> Result<Ext> {
    space
        .numeric(v)
        .ok_or_else(|| Error::Contract(format!("value {} has no numeric reading", space.render(v))))
}

/// `d(a,c) ≤ d(a,b) + d(b,c)` on the extended half-line.
fn triangle_holds(ac: &Ext, ab: &Ext, bc: &Ext) -> bool {
    match (ac, ab, bc) {
        (_, Ext::Infinite, _) | (_, _, Ext::Infinite) => true,
        (Ext::Infinite, _, _) => false,
        (Ext::Finite(x), Ext::Finite(y), Ext::Finite(z)) => x <= &(y + z),
    }
}

/// Ordered triples `(a,b,c)` of `A^3` violating `d(a,c) ≤ d(a,b) + d(b,c)`.
pub fn triangle_violations(space: &ValueSpace, d: &Assignment) -> Result<Vec<TupleIndex>> {
    let n = d.n();
    let get = |a: usize, b: usize| -> Result<Ext> {
        let v = d
            .get(&vec![a, b])
            .ok_or_else(|| Error::Contract(format!("no distance for ({a},{b})")))?;
        ext(space, v)
    };
    let mut out = Vec::new();
    for triple in index_set(3, n, Mode::Multiset) {
        let (a, b, c) = (triple[0], triple[1], triple[2]);
        if !triangle_holds(&get(a, c)?, &get(a, b)?, &get(b, c)?) {
            out.push(triple);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricCertificate {
    pub triples_checked: usize,
    pub failures: Vec<TupleIndex>,
    pub zero_diagonal: bool,
    pub symmetric: bool,
}

impl MetricCertificate {
    pub fn passes(&self) -> bool {
        self.failures.is_empty() && self.zero_diagonal && self.symmetric
    }
}

#[derive(Clone, Debug)]
pub struct MetricRepair {
    pub correction: CorrectionResult,
    /// Ordered triples violated by the pointwise kernel on `A`.
    pub f_violations: Vec<TupleIndex>,
    /// Atoms that held at ε before diagonal zeroing and fail after it.
    pub broken_by_zeroing: Vec<Atom>,
    /// Points (one-based) identified with `x0` because they sit at infinite
    /// distance from the retained class.
    pub collapsed: Vec<usize>,
    pub x0: usize,
    /// Final distances on `A`.
    pub repaired: Assignment,
    pub certificate: MetricCertificate,
}

/// Components of "finite distance in both directions", in order of their
/// smallest member.
fn finite_classes(space: &ValueSpace, d: &Assignment) -> Result<Vec<Vec<usize>>> {
    let n = d.n();
    let mut class: Vec<Option<usize>> = vec![None; n + 1];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let finite = |a: usize, b: usize| -> Result<bool> {
        Ok(ext(space, d.get(&vec![a, b]).expect("total"))? != Ext::Infinite
            && ext(space, d.get(&vec![b, a]).expect("total"))? != Ext::Infinite)
    };
    for start in 1..=n {
        if class[start].is_some() {
            continue;
        }
        let id = classes.len();
        let mut members = vec![start];
        class[start] = Some(id);
        let mut i = 0;
        while i < members.len() {
            let a = members[i];
            #[allow(clippy::needless_range_loop)]
            for b in 1..=n {
                if class[b].is_none() && finite(a, b)? {
                    class[b] = Some(id);
                    members.push(b);
                }
            }
            i += 1;
        }
        members.sort_unstable();
        classes.push(members);
    }
    Ok(classes)
}

/// Repairs an almost-semimetric on `A`: symmetric correction under the
/// triangle inequality, then `g(x,x) := 0`, then identification of every
/// point at infinite distance from the largest finite class with that
/// class's first point.
pub fn metric_repair_demo(kernel: &StepKernel, points: &[Q], epsilon: &Q, seed: u64) -> Result<MetricRepair> {
    metric_repair_with(kernel, points, epsilon, CorrectionOptions::seeded(seed))
}

/// Symmetry, the triangle inequality and finiteness over multisets.
pub fn metric_constraint() -> ConstraintSet {
    ConstraintSet::new(
        2,
        Mode::Multiset,
        vec![Template::symmetry(), Template::triangle_inequality(), Template::finite_values(2)],
    )
    .expect("valid templates")
}

pub fn metric_repair_with(kernel: &StepKernel, points: &[Q], epsilon: &Q, options: CorrectionOptions) -> Result<MetricRepair> {
    if kernel.arity() != 2 {
        return Err(Error::Contract("metric repair needs arity 2".into()));
    }
    let space = kernel.space();
    if matches!(space, ValueSpace::FiniteMetric(_)) {
        return Err(Error::Contract("metric repair needs interval or ray values".into()));
    }
    let problem = CorrectionProblem {
        kernel: kernel.clone(),
        constraint: metric_constraint(),
        points: points.to_vec(),
        epsilon: epsilon.clone(),
        options,
    };
    let n = points.len();
    let mut f = Assignment::new(n);
    for index in index_set(2, n, Mode::Multiset) {
        f.insert(index.clone(), kernel.eval(&problem.tuple_points(&index))?);
    }
    let f_violations = triangle_violations(space, &f)?;

    let correction = correct_symmetric(&problem)?;
    if correction.g.len() != n * n {
        // extraction never succeeded; nothing to repair
        return Ok(MetricRepair {
            f_violations,
            broken_by_zeroing: Vec::new(),
            collapsed: Vec::new(),
            x0: 1,
            repaired: correction.g.clone(),
            certificate: MetricCertificate {
                triples_checked: 0,
                failures: Vec::new(),
                zero_diagonal: false,
                symmetric: false,
            },
            correction,
        });
    }

    let atoms = problem.constraint.restrict(n)?;
    let zero = Value::Real(Q::from_integer(0.into()));
    let mut zeroed = correction.g.clone();
    for i in 1..=n {
        zeroed.insert(vec![i, i], zero.clone());
    }
    let mut broken_by_zeroing = Vec::new();
    for atom in &atoms {
        if atom_holds_relaxed(space, &correction.g, atom, epsilon)? && !atom_holds_relaxed(space, &zeroed, atom, epsilon)? {
            broken_by_zeroing.push(atom.clone());
        }
    }

    let classes = finite_classes(space, &zeroed)?;
    let kept = classes
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .expect("n >= 1")
        .clone();
    let x0 = kept[0];
    let remap = |z: usize| if kept.contains(&z) { z } else { x0 };
    let collapsed: Vec<usize> = (1..=n).filter(|z| !kept.contains(z)).collect();
    let mut repaired = Assignment::new(n);
    for index in index_set(2, n, Mode::Multiset) {
        let (a, b) = (remap(index[0]), remap(index[1]));
        repaired.insert(index, zeroed.get(&vec![a, b]).expect("total").clone());
    }

    let failures = triangle_violations(space, &repaired)?;
    let certificate = MetricCertificate {
        triples_checked: n * n * n,
        failures,
        zero_diagonal: (1..=n).all(|i| repaired.get(&vec![i, i]) == Some(&zero)),
        symmetric: (1..=n)
            .cartesian_product(1..=n)
            .all(|(a, b)| repaired.get(&vec![a, b]) == repaired.get(&vec![b, a])),
    };
    Ok(MetricRepair {
        correction,
        f_violations,
        broken_by_zeroing,
        collapsed,
        x0,
        repaired,
        certificate,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemarkReport {
    pub name: &'static str,
    pub description: &'static str,
    pub outcome: Feasibility,
}

fn bits() -> ValueSpace {
    ValueSpace::FiniteMetric(crate::value_space::FiniteMetric::discrete(&["0", "1"]))
}

/// The two counterexamples showing that symmetry and distinctness cannot be
/// dropped, plus the unsymmetrized control, all over `{0, 1}`.
pub fn remark_demos() -> Result<Vec<RemarkReport>> {
    let space = bits();
    let run = |mode, templates, n| -> Result<Feasibility> {
        feasible(&ConstraintSet::new(2, mode, templates)?, n, &space, None, 100_000)
    };
    Ok(vec![
        RemarkReport {
            name: "oriented",
            description: "|g(x,y) - g(y,x)| = 1 together with symmetry",
            outcome: run(Mode::Distinct, vec![Template::symmetry(), Template::anti_symmetry()], 2)?,
        },
        RemarkReport {
            name: "repeated",
            description: "|g(x,y) - g(x,x)| = 1 over multisets",
            outcome: run(Mode::Multiset, vec![Template::diagonal_difference()], 1)?,
        },
        RemarkReport {
            name: "oriented_unsymmetrized",
            description: "|g(x,y) - g(y,x)| = 1 over distinct pairs only",
            outcome: run(Mode::Distinct, vec![Template::anti_symmetry()], 2)?,
        },
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub trials: u64,
    pub violations: u64,
    pub rate: f64,
    /// Wilson score interval at 95%.
    pub interval: (f64, f64),
    /// First violated atom, with the sampled points.
    pub first_violation: Option<String>,
}

/// Wilson score interval for `successes` out of `trials` at `z = 1.96`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = 1.96_f64;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Estimates how often the pointwise kernel violates the constraint at
/// uniformly sampled distinct points.
pub fn audit_ae_hypothesis(kernel: &StepKernel, constraint: &ConstraintSet, trials: u64, seed: u64) -> Result<AuditReport> {
    if trials == 0 {
        return Err(Error::Contract("need at least one trial".into()));
    }
    if constraint.arity() != kernel.arity() {
        return Err(Error::Contract("constraint and kernel arities differ".into()));
    }
    let k = kernel.arity();
    let v = constraint.variable_count().max(k);
    let atoms = constraint.with_mode(Mode::Distinct).restrict(v)?;
    let indices = index_set(k, v, Mode::Distinct);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut first_violation = None;
    for _ in 0..trials {
        let mut seen = BTreeSet::new();
        let mut ys = Vec::with_capacity(v);
        while ys.len() < v {
            let y = rational::unit_draw(&mut rng);
            if seen.insert(y.clone()) {
                ys.push(y);
            }
        }
        let mut f = Assignment::new(v);
        for index in &indices {
            let point: Vec<Q> = index.iter().map(|&i| ys[i - 1].clone()).collect();
            f.insert(index.clone(), kernel.eval(&point)?);
        }
        if !satisfies(kernel.space(), &f, &atoms)? {
            violations += 1;
            if first_violation.is_none() {
                let atom = atoms
                    .iter()
                    .find(|a| !crate::constraint::atom_holds(kernel.space(), &f, a).unwrap_or(true))
                    .expect("some atom fails");
                let at = ys.iter().map(|y| format!("{:.6}", rational::to_f64(y))).join(", ");
                first_violation = Some(format!("{atom} at y = ({at})"));
            }
        }
    }
    Ok(AuditReport {
        trials,
        violations,
        rate: violations as f64 / trials as f64,
        interval: wilson_interval(violations, trials),
        first_violation,
    })
}
