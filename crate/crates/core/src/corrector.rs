//! The finite ε-stage of kernel correction.
//!
//! Given a kernel `f`, a constraint system and a finite point set `A`, build
//! values `g` on `A^k` such that every restricted atom holds up to ε and
//! `g` is ε-close to `f` at every density tuple of `A^k`.
//!
//! * [`correct_nonsymmetric`] moves each point of `A` to one random point
//!   of its resolution-`m` cell and reads `f` there.
//! * [`correct_symmetric`] draws `R` points per cell, colors `k`-sets of the
//!   samples by the ε-cell of their `f` value, extracts subsets on which the
//!   color only depends on the type, and reads `f` at distinct
//!   representatives. Repeated arguments are allowed and `g` is exactly
//!   symmetric.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};

use itertools::Itertools;
use num_traits::Signed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraint::{atom_holds, atom_holds_relaxed, index_set, Assignment, Atom, ConstraintSet, Mode, TupleIndex};
use crate::density::{classify_tuple, DensityClass};
use crate::error::{Error, Result};
use crate::kernel::{block_of, sample_in_cell, StepKernel};
use crate::ramsey::{multi_type_extract, verify_typed_extraction, Color, NotFound, Strategy, TypedOutcome};
use crate::rational::{self, Q};
use crate::value_space::Value;

const MAX_RESOLUTION: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionOptions {
    /// Starting resolution; defaults to the kernel's grid resolution.
    pub m: Option<u64>,
    /// Starting number of samples per point (symmetric case); defaults to
    /// twice the extraction target.
    pub r: Option<usize>,
    pub seed: u64,
    pub max_escalations: u32,
    /// Node budget for each randomized Ramsey restart.
    pub ramsey_budget: u64,
}

impl CorrectionOptions {
    pub fn seeded(seed: u64) -> Self {
        CorrectionOptions {
            m: None,
            r: None,
            seed,
            max_escalations: 4,
            ramsey_budget: 200_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorrectionProblem {
    pub kernel: StepKernel,
    pub constraint: ConstraintSet,
    /// The points `x_1..x_n` of `A`; index `i` in tuples refers to `points[i-1]`.
    pub points: Vec<Q>,
    pub epsilon: Q,
    pub options: CorrectionOptions,
}

impl CorrectionProblem {
    fn validate(&self, mode: Mode) -> Result<()> {
        let k = self.kernel.arity();
        if self.constraint.arity() != k {
            return Err(Error::Contract(format!(
                "constraint arity {} differs from kernel arity {k}",
                self.constraint.arity()
            )));
        }
        if self.constraint.mode() != mode {
            return Err(Error::Contract(format!("this corrector needs a {mode}-mode constraint")));
        }
        if !self.epsilon.is_positive() {
            return Err(Error::Contract("epsilon must be positive".into()));
        }
        if self.points.is_empty() {
            return Err(Error::Contract("the point set is empty".into()));
        }
        if mode == Mode::Distinct && self.points.len() < k {
            return Err(Error::Contract(format!("need at least k={k} points")));
        }
        let distinct: BTreeSet<_> = self.points.iter().collect();
        if distinct.len() != self.points.len() {
            return Err(Error::Contract("points must be distinct".into()));
        }
        if let Some(x) = self.points.iter().find(|x| !rational::in_unit_interval(x)) {
            return Err(Error::Domain(format!("point {} is outside [0,1)", rational::render(x))));
        }
        if mode == Mode::Multiset && !self.kernel.symmetric_base() {
            return Err(Error::Contract("the symmetric corrector needs a kernel with symmetric base".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// The point tuple addressed by a one-based index tuple.
    pub fn tuple_points(&self, index: &TupleIndex) -> Vec<Q> {
        index.iter().map(|&i| self.points[i - 1].clone()).collect()
    }

    /// Smallest `m0·2^j` (or `options.m·2^j`) putting the points in pairwise
    /// different cells.
    pub fn initial_resolution(&self) -> Result<u64> {
        let mut m = self.options.m.unwrap_or(self.kernel.resolution()).max(1);
        loop {
            let cells: BTreeSet<u64> = self.points.iter().map(|x| block_of(x, m)).collect();
            if cells.len() == self.points.len() {
                return Ok(m);
            }
            m = m
                .checked_mul(2)
                .filter(|&m| m <= MAX_RESOLUTION)
                .ok_or_else(|| Error::Contract("points are too close to separate".into()))?;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum AttemptOutcome {
    Accepted,
    ConstraintViolated { atoms: Vec<String> },
    NotClose { tuples: Vec<TupleIndex> },
    ExtractionFailed { failing_type: Vec<usize>, reason: NotFound },
}

/// One draw of the escalation schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Attempt {
    pub index: u32,
    pub m: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    pub outcome: AttemptOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomVerdict {
    pub atom: Atom,
    pub exact: bool,
    pub relaxed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TupleCheck {
    pub index: TupleIndex,
    pub class: DensityClass,
    pub f: Value,
    pub g: Value,
    pub distance: Q,
    /// `distance ≤ ε`; only required at density tuples.
    pub close: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionReport {
    pub atoms: Vec<AtomVerdict>,
    pub relaxed_ok: bool,
    pub closeness_ok: bool,
    pub tuples: Vec<TupleCheck>,
    pub attempts: Vec<Attempt>,
    pub seed: u64,
    pub escalations: u32,
}

impl CorrectionReport {
    pub fn violated(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter().filter(|v| !v.relaxed).map(|v| &v.atom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionResult {
    pub mode: Mode,
    pub success: bool,
    /// `g` on every tuple of `A^k` (empty if the last attempt produced none).
    pub g: Assignment,
    /// Sample points per point of `A`: the single moved point in the
    /// non-symmetric case, `Ξ(z)` in the symmetric case.
    pub representatives: Vec<Vec<Q>>,
    /// Resolution of the accepted (or last) attempt.
    pub m: u64,
    pub r: Option<usize>,
    pub report: CorrectionReport,
}

/// Draws a point of `Δ_m(x)` avoiding every exception constant and every
/// point already taken, so sampled tuples of distinct points never meet an
/// exception piece.
fn draw_avoiding(x: &Q, m: u64, avoid: &mut BTreeSet<Q>, rng: &mut ChaCha8Rng) -> Q {
    loop {
        let y = sample_in_cell(x, m, rng);
        if avoid.insert(y.clone()) {
            return y;
        }
    }
}

fn attempt_rng(seed: u64, attempt: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt as u64);
    rng
}

struct Checked {
    atoms: Vec<AtomVerdict>,
    relaxed_ok: bool,
    tuples: Vec<TupleCheck>,
    closeness_ok: bool,
}

fn check(problem: &CorrectionProblem, atoms: &[Atom], g: &Assignment, m: u64) -> Result<Checked> {
    let space = problem.kernel.space();
    let eps = &problem.epsilon;
    let mut verdicts = Vec::with_capacity(atoms.len());
    for atom in atoms {
        verdicts.push(AtomVerdict {
            atom: atom.clone(),
            exact: atom_holds(space, g, atom)?,
            relaxed: atom_holds_relaxed(space, g, atom, eps)?,
        });
    }
    let mut tuples = Vec::new();
    for index in index_set(problem.kernel.arity(), problem.n(), problem.constraint.mode()) {
        let point = problem.tuple_points(&index);
        let f = problem.kernel.eval(&point)?;
        let gv = g
            .get(&index)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("g has no value at {index:?}")))?;
        let distance = space.dist(&f, &gv)?;
        tuples.push(TupleCheck {
            class: classify_tuple(&problem.kernel, &point, eps, m)?,
            close: &distance <= eps,
            index,
            f,
            g: gv,
            distance,
        });
    }
    Ok(Checked {
        relaxed_ok: verdicts.iter().all(|v| v.relaxed),
        closeness_ok: tuples.iter().all(|t| t.close || t.class != DensityClass::Density),
        atoms: verdicts,
        tuples,
    })
}

fn failure_outcome(checked: &Checked) -> AttemptOutcome {
    if !checked.relaxed_ok {
        AttemptOutcome::ConstraintViolated {
            atoms: checked.atoms.iter().filter(|v| !v.relaxed).map(|v| v.atom.to_string()).collect(),
        }
    } else {
        AttemptOutcome::NotClose {
            tuples: checked
                .tuples
                .iter()
                .filter(|t| t.class == DensityClass::Density && !t.close)
                .map(|t| t.index.clone())
                .collect(),
        }
    }
}

/// Non-symmetric correction over distinct tuples.
pub fn correct_nonsymmetric(problem: &CorrectionProblem) -> Result<CorrectionResult> {
    problem.validate(Mode::Distinct)?;
    let k = problem.kernel.arity();
    let n = problem.n();
    let atoms = problem.constraint.restrict(n)?;
    let mut m = problem.initial_resolution()?;
    let mut attempts = Vec::new();
    let mut last = None;
    for a in 0..=problem.options.max_escalations {
        let mut rng = attempt_rng(problem.options.seed, a);
        let mut avoid: BTreeSet<Q> = problem.kernel.exception_constants().into_iter().collect();
        let moved: Vec<Q> = problem.points.iter().map(|x| draw_avoiding(x, m, &mut avoid, &mut rng)).collect();
        let mut g = Assignment::new(n);
        for index in index_set(k, n, Mode::Distinct) {
            let point: Vec<Q> = index.iter().map(|&i| moved[i - 1].clone()).collect();
            g.insert(index, problem.kernel.eval(&point)?);
        }
        let checked = check(problem, &atoms, &g, m)?;
        let accepted = checked.relaxed_ok && checked.closeness_ok;
        attempts.push(Attempt {
            index: a,
            m,
            r: None,
            outcome: if accepted { AttemptOutcome::Accepted } else { failure_outcome(&checked) },
        });
        last = Some((g, moved, m, checked));
        if accepted {
            break;
        }
        m = m.saturating_mul(2).min(MAX_RESOLUTION);
    }
    let (g, moved, m, checked) = last.expect("at least one attempt");
    Ok(finish(problem, Mode::Distinct, g, moved.into_iter().map(|p| vec![p]).collect(), m, None, Some(checked), attempts))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &CorrectionProblem,
    mode: Mode,
    g: Assignment,
    representatives: Vec<Vec<Q>>,
    m: u64,
    r: Option<usize>,
    checked: Option<Checked>,
    attempts: Vec<Attempt>,
) -> CorrectionResult {
    let success = attempts.last().is_some_and(|a| a.outcome == AttemptOutcome::Accepted);
    let escalations = attempts.len().saturating_sub(1) as u32;
    let checked = checked.unwrap_or(Checked {
        atoms: Vec::new(),
        relaxed_ok: false,
        tuples: Vec::new(),
        closeness_ok: false,
    });
    CorrectionResult {
        mode,
        success,
        g,
        representatives,
        m,
        r,
        report: CorrectionReport {
            atoms: checked.atoms,
            relaxed_ok: checked.relaxed_ok,
            closeness_ok: checked.closeness_ok,
            tuples: checked.tuples,
            attempts,
            seed: problem.options.seed,
            escalations,
        },
    }
}

/// Representatives for a sorted index tuple: the first unused elements of
/// `Ξ(z)` for each repeated `z`, so they are mutually different.
fn representatives_for(index: &TupleIndex, xi: &[Vec<usize>]) -> Vec<usize> {
    let mut used: HashMap<usize, usize> = HashMap::new();
    index
        .iter()
        .map(|&z| {
            let u = used.entry(z).or_insert(0);
            *u += 1;
            xi[z - 1][*u - 1]
        })
        .collect()
}

/// `(g, Ξ, m, R, checks)` of the latest symmetric attempt.
type Symmetric = (Assignment, Vec<Vec<Q>>, u64, usize, Option<Checked>);

/// Symmetric correction over all tuples, repeats included.
pub fn correct_symmetric(problem: &CorrectionProblem) -> Result<CorrectionResult> {
    problem.validate(Mode::Multiset)?;
    let kernel = &problem.kernel;
    let k = kernel.arity();
    let n = problem.n();
    let target = n.max(k);
    let atoms = problem.constraint.restrict(n)?;
    let partition = kernel.space().epsilon_partition(&problem.epsilon)?;
    let mut m = problem.initial_resolution()?;
    let mut r = problem.options.r.unwrap_or(2 * target).max(target);
    let mut attempts = Vec::new();
    let mut last: Option<Symmetric> = None;

    for a in 0..=problem.options.max_escalations {
        let mut rng = attempt_rng(problem.options.seed, a);
        let mut avoid: BTreeSet<Q> = kernel.exception_constants().into_iter().collect();
        // Ω(z) for the z-th point occupies element ids z·r .. z·r + r.
        let samples: Vec<Q> = problem
            .points
            .iter()
            .flat_map(|x| (0..r).map(|_| x.clone()).collect::<Vec<_>>())
            .map(|x| draw_avoiding(&x, m, &mut avoid, &mut rng))
            .collect();
        let parts: Vec<Vec<usize>> = (0..n).map(|z| (z * r..(z + 1) * r).collect()).collect();
        let memo: RefCell<HashMap<Vec<usize>, Color>> = RefCell::new(HashMap::new());
        let coloring = |set: &[usize]| -> Color {
            if let Some(&c) = memo.borrow().get(set) {
                return c;
            }
            let point: Vec<Q> = set.iter().map(|&e| samples[e].clone()).collect();
            let value = kernel.eval(&point).expect("samples lie in [0,1)");
            let c = partition.cell_of(&value).expect("kernel values lie in the space") as Color;
            memo.borrow_mut().insert(set.to_vec(), c);
            c
        };
        let strategy = Strategy::Randomized {
            restarts: 8,
            seed: problem.options.seed ^ ((a as u64) << 32),
            budget_per_restart: problem.options.ramsey_budget,
        };
        let xi = match multi_type_extract(&parts, k, target, &coloring, strategy)? {
            TypedOutcome::Found(ex) => {
                debug_assert!(verify_typed_extraction(&ex.subsets, k, &coloring));
                ex.subsets
            }
            TypedOutcome::NotFound { failing_type, reason } => {
                attempts.push(Attempt {
                    index: a,
                    m,
                    r: Some(r),
                    outcome: AttemptOutcome::ExtractionFailed { failing_type, reason },
                });
                last = Some((Assignment::new(n), Vec::new(), m, r, None));
                r *= 2;
                continue;
            }
        };

        let mut g = Assignment::new(n);
        for index in index_set(k, n, Mode::Multiset) {
            if !index.windows(2).all(|w| w[0] <= w[1]) {
                continue;
            }
            let reps = representatives_for(&index, &xi);
            let point: Vec<Q> = reps.iter().map(|&e| samples[e].clone()).collect();
            let value = kernel.eval(&point)?;
            for perm in index.iter().copied().permutations(k).unique() {
                g.insert(perm, value.clone());
            }
        }
        let checked = check(problem, &atoms, &g, m)?;
        let accepted = checked.relaxed_ok && checked.closeness_ok;
        attempts.push(Attempt {
            index: a,
            m,
            r: Some(r),
            outcome: if accepted { AttemptOutcome::Accepted } else { failure_outcome(&checked) },
        });
        let xi_points = xi
            .iter()
            .map(|ids| ids.iter().map(|&e| samples[e].clone()).collect())
            .collect();
        last = Some((g, xi_points, m, r, Some(checked)));
        if accepted {
            break;
        }
        m = m.saturating_mul(2).min(MAX_RESOLUTION);
    }
    let (g, reps, m, r, checked) = last.expect("at least one attempt");
    Ok(finish(problem, Mode::Multiset, g, reps, m, Some(r), checked, attempts))
}

/// Dispatches on the constraint mode.
pub fn correct(problem: &CorrectionProblem) -> Result<CorrectionResult> {
    match problem.constraint.mode() {
        Mode::Distinct => correct_nonsymmetric(problem),
        Mode::Multiset => correct_symmetric(problem),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Failures of the correction itself.
    pub violations: Vec<String>,
    /// Places where the embedded report disagrees with the recomputation.
    pub inconsistencies: Vec<String>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.inconsistencies.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        self.inconsistencies.is_empty()
    }

    pub fn issues(&self) -> impl Iterator<Item = &String> {
        self.violations.iter().chain(&self.inconsistencies)
    }
}

/// Recomputes every verdict of a result from scratch and lists any
/// violation or disagreement with the embedded report.
pub fn verify_correction(result: &CorrectionResult, problem: &CorrectionProblem) -> Result<VerificationReport> {
    let mut issues = Vec::new();
    let mut inconsistencies = Vec::new();
    let space = problem.kernel.space();
    let eps = &problem.epsilon;
    let k = problem.kernel.arity();
    let n = problem.n();
    let all = index_set(k, n, result.mode);
    let missing: Vec<_> = all.iter().filter(|i| result.g.get(i).is_none()).collect();
    if !missing.is_empty() {
        issues.push(format!("g is undefined on {} tuples, first {:?}", missing.len(), missing[0]));
        return Ok(VerificationReport { violations: issues, inconsistencies });
    }
    for index in &all {
        if let Some(v) = result.g.get(index) {
            if space.check(v).is_err() {
                issues.push(format!("g{index:?} is outside the value space"));
            }
        }
    }
    if !issues.is_empty() {
        return Ok(VerificationReport { violations: issues, inconsistencies });
    }

    let atoms = problem.constraint.with_mode(result.mode).restrict(n)?;
    let mut relaxed_ok = true;
    for atom in &atoms {
        if !atom_holds_relaxed(space, &result.g, atom, eps)? {
            relaxed_ok = false;
            issues.push(format!("atom {atom} fails at epsilon {}", rational::render(eps)));
        }
    }
    if relaxed_ok != result.report.relaxed_ok {
        inconsistencies.push(format!("report claims relaxed_ok={} but recomputation gives {relaxed_ok}", result.report.relaxed_ok));
    }

    if result.mode == Mode::Multiset {
        for index in &all {
            let v = result.g.get(index).expect("checked totality");
            for perm in index.iter().copied().permutations(k) {
                if result.g.get(&perm) != Some(v) {
                    issues.push(format!("g is not symmetric at {index:?} vs {perm:?}"));
                    break;
                }
            }
        }
    }

    let mut closeness_ok = true;
    for index in &all {
        let point = problem.tuple_points(index);
        if classify_tuple(&problem.kernel, &point, eps, result.m)? != DensityClass::Density {
            continue;
        }
        let f = problem.kernel.eval(&point)?;
        let g = result.g.get(index).expect("checked totality");
        let d = space.dist(&f, g)?;
        if &d > eps {
            closeness_ok = false;
            issues.push(format!(
                "density tuple {index:?}: g = {} is {} away from f = {}",
                space.render(g),
                rational::render(&d),
                space.render(&f)
            ));
        }
    }
    if closeness_ok != result.report.closeness_ok {
        inconsistencies.push(format!(
            "report claims closeness_ok={} but recomputation gives {closeness_ok}",
            result.report.closeness_ok
        ));
    }
    if result.success != (relaxed_ok && closeness_ok) {
        inconsistencies.push(format!("result claims success={} but the checks disagree", result.success));
    }
    Ok(VerificationReport { violations: issues, inconsistencies })
}
