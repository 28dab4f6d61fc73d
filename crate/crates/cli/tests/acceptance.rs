//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use removal_core::constraint::{atom_holds_relaxed, index_set, ConstraintSet, Feasibility, Mode, Relation, Shape, Template};
use removal_core::corrector::{
    correct_nonsymmetric, correct_symmetric, verify_correction, CorrectionOptions, CorrectionProblem, CorrectionResult,
};
use removal_core::demos;
use removal_core::density::{classify_tuple, density_mass, DensityClass, Target};
use removal_core::kernel::{ExceptionPiece, PieceAtom, StepKernel};
use removal_core::ramsey::{
    ramsey_extract, verify_extraction, Extraction, NotFound, RamseyInstance, RamseyOutcome, Strategy, TableColoring,
};
use removal_core::rational::{int, ratio, unit_draw, Q};
use removal_core::value_space::{FiniteMetric, Value, ValueSpace};

// Pinned budgets and tolerances.
const C1_KERNELS: usize = 50;
const C1_TUPLES: usize = 20;
const C1_TIME: Duration = Duration::from_secs(5);
const C2_MAX_PIECES: usize = 5;
const C3_TIME: Duration = Duration::from_secs(60);
const C4_INSTANCES: u64 = 1000;
const C4_MIN_SUCCESSES: usize = 100;
const C5_PROBLEMS: u64 = 100;
const C5_MAX_ESCALATIONS: u32 = 3;
const C5_TIME: Duration = Duration::from_secs(60);
const C7_POINTS: usize = 6;
const C7_TRIALS: u64 = 10_000;

/// All `k`-subsets of `items`, in lexicographic order.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::new(), &mut out);
    out
}

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bits() -> ValueSpace {
    ValueSpace::FiniteMetric(FiniteMetric::discrete(&["0", "1"]))
}

fn random_space(rng: &mut ChaCha8Rng) -> ValueSpace {
    match rng.gen_range(0..3) {
        0 => ValueSpace::FiniteMetric(FiniteMetric::discrete(&["a", "b", "c"])),
        1 => ValueSpace::BoundedInterval { diameter: int(2) },
        _ => ValueSpace::CompactifiedRay,
    }
}

fn random_value(space: &ValueSpace, rng: &mut ChaCha8Rng) -> Value {
    match space {
        ValueSpace::FiniteMetric(fm) => Value::Label(rng.gen_range(0..fm.len())),
        ValueSpace::BoundedInterval { .. } => Value::Real(ratio(rng.gen_range(0..=20), 10)),
        ValueSpace::CompactifiedRay => {
            if rng.gen_bool(0.2) {
                Value::Infinity
            } else {
                Value::Real(ratio(rng.gen_range(0..=40), 10))
            }
        }
    }
}

fn random_kernel(rng: &mut ChaCha8Rng) -> StepKernel {
    let k = rng.gen_range(1..=3);
    let m0 = rng.gen_range(1..=4u64);
    let space = random_space(rng);
    let base = (0..m0.pow(k as u32)).map(|_| random_value(&space, rng)).collect();
    StepKernel::new(k, m0, space, base, vec![], false).expect("valid kernel")
}

fn random_piece(kernel: &StepKernel, rng: &mut ChaCha8Rng) -> ExceptionPiece {
    let k = kernel.arity();
    let atoms = if k >= 2 && rng.gen_bool(0.4) {
        let mut coords: Vec<usize> = (0..k).collect();
        coords.shuffle(rng);
        vec![PieceAtom::Tied { a: coords[0], b: coords[1] }]
    } else {
        (0..rng.gen_range(1..=k))
            .map(|c| PieceAtom::Fixed { coord: c, value: ratio(rng.gen_range(0..97), 97) })
            .collect()
    };
    ExceptionPiece { atoms, value: random_value(kernel.space(), rng) }
}

/// A random point on the piece: fixed coordinates as given, tied ones equal.
fn point_on(piece: &ExceptionPiece, k: usize, rng: &mut ChaCha8Rng) -> Vec<Q> {
    let mut p: Vec<Q> = (0..k).map(|_| unit_draw(rng)).collect();
    for atom in &piece.atoms {
        match atom {
            PieceAtom::Fixed { coord, value } => p[*coord] = value.clone(),
            PieceAtom::Tied { a, b } => p[*b] = p[*a].clone(),
        }
    }
    p
}

/// A random tuple avoiding the grid lines of resolution `m0`.
fn interior_tuple(k: usize, m0: u64, rng: &mut ChaCha8Rng) -> Vec<Q> {
    (0..k)
        .map(|_| loop {
            let x = unit_draw(rng);
            if !(&x * Q::from_integer((m0 as i64).into())).is_integer() {
                break x;
            }
        })
        .collect()
}

fn ball_at_base(kernel: &StepKernel, point: &[Q]) -> Target {
    Target::Ball { center: kernel.base_value(point).unwrap().clone(), radius: ratio(1, 100) }
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..C1_KERNELS {
        let kernel = random_kernel(&mut rng);
        let m = 2 * kernel.resolution();
        for _ in 0..C1_TUPLES {
            let p = interior_tuple(kernel.arity(), kernel.resolution(), &mut rng);
            let mass = density_mass(&kernel, &p, &ball_at_base(&kernel, &p), m).map_err(|e| e.to_string())?;
            check(mass == int(1), || format!("mass {mass} at {p:?}, m = {m}"))?;
            checked += 1;
        }
    }
    let halves = StepKernel::new(
        1,
        2,
        ValueSpace::FiniteMetric(FiniteMetric::discrete(&["a", "b"])),
        vec![Value::Label(0), Value::Label(1)],
        vec![],
        true,
    )
    .unwrap();
    let target = Target::Ball { center: Value::Label(1), radius: ratio(1, 20) };
    let half = density_mass(&halves, &[ratio(1, 2)], &target, 3).map_err(|e| e.to_string())?;
    check(half == ratio(1, 2), || format!("boundary mass {half}, expected 1/2"))?;
    let elapsed = started.elapsed();
    check(elapsed < C1_TIME, || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} interior masses equal 1, boundary mass 1/2, {elapsed:.2?}"))
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut compared = 0;
    for _ in 0..C1_KERNELS {
        let kernel = random_kernel(&mut rng);
        let k = kernel.arity();
        let pieces: Vec<ExceptionPiece> =
            (0..rng.gen_range(1..=C2_MAX_PIECES)).map(|_| random_piece(&kernel, &mut rng)).collect();
        let mut queries: Vec<Vec<Q>> = (0..C1_TUPLES).map(|_| (0..k).map(|_| unit_draw(&mut rng)).collect()).collect();
        for piece in &pieces {
            queries.push(point_on(piece, k, &mut rng));
        }
        let with = kernel.clone().with_exceptions(pieces).map_err(|e| e.to_string())?;
        let partition = kernel.space().epsilon_partition(&ratio(1, 2)).map_err(|e| e.to_string())?;
        let cells = Target::Cells { partition, cells: [0].into() };
        let m0 = kernel.resolution();
        for p in &queries {
            for m in [1, m0, 2 * m0, 3, 5] {
                for target in [ball_at_base(&kernel, p), cells.clone()] {
                    let a = density_mass(&kernel, p, &target, m).map_err(|e| e.to_string())?;
                    let b = density_mass(&with, p, &target, m).map_err(|e| e.to_string())?;
                    check(a == b, || format!("mass changed from {a} to {b} at {p:?}, m = {m}"))?;
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} masses unchanged by exception pieces"))
}

fn edge_coloring(mask: u32, vertices: usize) -> impl Fn(&[Vec<usize>]) -> u32 {
    let mut index = HashMap::new();
    for (i, pair) in combinations(&(0..vertices).collect::<Vec<_>>(), 2).into_iter().enumerate() {
        index.insert(pair, i);
    }
    move |array: &[Vec<usize>]| (mask >> index[&array[0]]) & 1
}

fn criterion_3() -> Verdict {
    let started = Instant::now();
    let six = RamseyInstance::new(vec![(0..6).collect()], vec![2], vec![3]).unwrap();
    for mask in 0..(1u32 << 15) {
        let coloring = edge_coloring(mask, 6);
        match ramsey_extract(&six, &coloring, Strategy::Exhaustive { budget: 1_000_000 }) {
            RamseyOutcome::Found(ex) => {
                check(verify_extraction(&six, &coloring, &ex), || format!("coloring {mask:#x}: bad extraction"))?
            }
            other => return Err(format!("coloring {mask:#x}: {other:?}")),
        }
    }
    let five = RamseyInstance::new(vec![(0..5).collect()], vec![2], vec![3]).unwrap();
    let pentagon = |a: &[Vec<usize>]| ((a[0][1] - a[0][0]) % 5 == 1 || (a[0][1] - a[0][0]) % 5 == 4) as u32;
    let outcome = ramsey_extract(&five, &pentagon, Strategy::Exhaustive { budget: 1_000_000 });
    check(outcome == RamseyOutcome::NotFound(NotFound::Proven), || format!("pentagon: {outcome:?}"))?;
    let elapsed = started.elapsed();
    check(elapsed < C3_TIME, || format!("took {elapsed:?}"))?;
    Ok(format!("all 32768 colorings of K6 extract, pentagon proven NotFound, {elapsed:.2?}"))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (RamseyInstance, TableColoring) {
    let nu = rng.gen_range(1..=2);
    let mut parts = Vec::new();
    let (mut sizes, mut targets) = (Vec::new(), Vec::new());
    for i in 0..nu {
        let k = rng.gen_range(1..=2);
        let r = rng.gen_range(k + 1..=12);
        parts.push((0..r).map(|j| 100 * i + j).collect::<Vec<_>>());
        sizes.push(k);
        targets.push(rng.gen_range(k..=(k + 2).min(r)));
    }
    let colors = rng.gen_range(1..=3);
    let mut coloring = TableColoring::new(0);
    let blocks: Vec<Vec<Vec<usize>>> = parts.iter().zip(&sizes).map(|(p, &k)| combinations(p, k)).collect();
    let mut arrays: Vec<Vec<Vec<usize>>> = vec![vec![]];
    for b in &blocks {
        arrays = arrays
            .into_iter()
            .flat_map(|prefix| {
                b.iter().map(move |set| {
                    let mut a = prefix.clone();
                    a.push(set.clone());
                    a
                })
            })
            .collect();
    }
    for a in arrays {
        coloring.set(a, rng.gen_range(0..colors));
    }
    (RamseyInstance::new(parts, sizes, targets).unwrap(), coloring)
}

fn mutations(instance: &RamseyInstance, coloring: &TableColoring, ex: &Extraction) -> Vec<(String, TableColoring, Extraction)> {
    let mut out = Vec::new();
    let mut recolored = ex.clone();
    recolored.color += 1;
    out.push(("color".into(), coloring.clone(), recolored));

    let mut foreign = ex.clone();
    foreign.subsets[0][0] = 10_000;
    out.push(("foreign element".into(), coloring.clone(), foreign));

    let mut short = ex.clone();
    short.subsets[0].pop();
    out.push(("short subset".into(), coloring.clone(), short));

    let mut dup = ex.clone();
    if dup.subsets[0].len() >= 2 {
        dup.subsets[0][1] = dup.subsets[0][0];
        out.push(("duplicate element".into(), coloring.clone(), dup));
    }

    let array: Vec<Vec<usize>> =
        ex.subsets.iter().zip(instance.sizes()).map(|(c, &k)| c[..k].to_vec()).collect();
    let mut changed = coloring.clone();
    changed.set(array, ex.color + 1);
    out.push(("recolored array".into(), changed, ex.clone()));
    out
}

fn criterion_4() -> Verdict {
    let mut successes = 0;
    let mut rejected = 0;
    for seed in 0..C4_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (instance, coloring) = random_instance(&mut rng);
        let strategy = Strategy::Randomized { restarts: 4, seed, budget_per_restart: 20_000 };
        if let RamseyOutcome::Found(ex) = ramsey_extract(&instance, &coloring, strategy) {
            check(verify_extraction(&instance, &coloring, &ex), || format!("seed {seed}: success rejected"))?;
            successes += 1;
            for (name, col, bad) in mutations(&instance, &coloring, &ex) {
                check(!verify_extraction(&instance, &col, &bad), || format!("seed {seed}: {name} mutation accepted"))?;
                rejected += 1;
            }
        }
    }
    check(successes >= C4_MIN_SUCCESSES, || format!("only {successes} successes"))?;
    Ok(format!("{successes} successes verified, {rejected} mutations rejected"))
}

/// One randomly generated correction problem whose kernel satisfies its
/// constraints almost everywhere.
struct Generated {
    family: &'static str,
    problem: CorrectionProblem,
}

fn distinct_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Q> {
    let mut set = BTreeSet::new();
    while set.len() < n {
        set.insert(rng.gen_range(1..997));
    }
    let mut pts: Vec<Q> = set.into_iter().map(|j| ratio(j, 997)).collect();
    pts.shuffle(rng);
    pts
}

/// Exceptions pinned to points of `A`, so some tuples of `A^k` land on them.
fn pinned_pieces(kernel: &StepKernel, points: &[Q], rng: &mut ChaCha8Rng) -> Vec<ExceptionPiece> {
    let k = kernel.arity();
    (0..rng.gen_range(0..=3))
        .map(|_| {
            let atoms = if k >= 2 && rng.gen_bool(0.3) {
                vec![PieceAtom::Tied { a: 0, b: 1 }]
            } else {
                (0..rng.gen_range(1..=k))
                    .map(|c| PieceAtom::Fixed { coord: c, value: points.choose(rng).unwrap().clone() })
                    .collect()
            };
            let value = match kernel.space() {
                ValueSpace::FiniteMetric(fm) => Value::Label(rng.gen_range(0..fm.len())),
                ValueSpace::BoundedInterval { diameter } => Value::Real(diameter.clone()),
                ValueSpace::CompactifiedRay => Value::Infinity,
            };
            ExceptionPiece { atoms, value }
        })
        .collect()
}

fn blocks(m0: u64, k: usize) -> Vec<Vec<u64>> {
    (0..m0.pow(k as u32))
        .map(|mut i| {
            let mut b = vec![0; k];
            for slot in (0..k).rev() {
                b[slot] = i % m0;
                i /= m0;
            }
            b
        })
        .collect()
}

fn generate(seed: u64, symmetric_only: bool) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let families = if symmetric_only { 4 } else { 5 };
    let family = rng.gen_range(0..families);
    let m0 = rng.gen_range(1..=4u64);
    let (family_name, k, space, base, templates): (&str, usize, ValueSpace, Vec<Value>, Vec<Template>) = match family {
        0 => {
            let class: Vec<bool> = (0..m0).map(|_| rng.gen_bool(0.5)).collect();
            let mut base = vec![Value::Label(0); (m0 * m0) as usize];
            for a in 0..m0 {
                for b in a..m0 {
                    let v = if class[a as usize] != class[b as usize] { rng.gen_range(0..2) } else { 0 };
                    base[(a * m0 + b) as usize] = Value::Label(v);
                    base[(b * m0 + a) as usize] = Value::Label(v);
                }
            }
            ("bipartite graphon", 2, bits(), base, vec![Template::symmetry(), Template::triangle_free()])
        }
        1 => {
            let ray = rng.gen_bool(0.5);
            let c = ratio(rng.gen_range(0..3), 10);
            let pos: Vec<Q> = (0..m0).map(|_| ratio(rng.gen_range(0..10), 10)).collect();
            let base = blocks(m0, 2)
                .into_iter()
                .map(|b| {
                    let d = &pos[b[0] as usize] - &pos[b[1] as usize];
                    Value::Real(&c + if d < int(0) { -d } else { d })
                })
                .collect();
            let space = if ray { ValueSpace::CompactifiedRay } else { ValueSpace::BoundedInterval { diameter: int(2) } };
            (
                "block quasi-metric",
                2,
                space,
                base,
                vec![Template::symmetry(), Template::triangle_inequality(), Template::finite_values(2)],
            )
        }
        2 => {
            let class: Vec<bool> = (0..m0).map(|_| rng.gen_bool(0.5)).collect();
            let base = blocks(m0, 3)
                .into_iter()
                .map(|b| Value::Label((b.iter().filter(|&&x| !class[x as usize]).count() == 1) as usize))
                .collect();
            ("3-graph without K4", 3, bits(), base, vec![Template::symmetry(), Template::clique_free(3, 4)])
        }
        3 => {
            let bound = ratio(rng.gen_range(5..=10), 10);
            let base = (0..m0).map(|_| Value::Real(ratio(rng.gen_range(0..=5), 10))).collect();
            let template = Template::new(
                "Bounded",
                Shape::LinearIneq { coeffs: vec![int(1)], slots: vec![vec![1]], bound },
            );
            ("bounded function", 1, ValueSpace::BoundedInterval { diameter: int(1) }, base, vec![template])
        }
        _ => {
            // f(x,y) = 1 when the block of x precedes the block of y: no 2-cycles.
            let base = blocks(m0, 2).into_iter().map(|b| Value::Label((b[0] < b[1]) as usize)).collect();
            let template = Template::new(
                "NoTwoCycle",
                Shape::LinearIneq { coeffs: vec![int(1), int(1)], slots: vec![vec![1, 2], vec![2, 1]], bound: int(1) },
            );
            ("oriented order", 2, bits(), base, vec![template])
        }
    };
    let symmetric = family != 4;
    let mode = if symmetric_only { Mode::Multiset } else { Mode::Distinct };
    let n = rng.gen_range(k.max(2)..=5);
    let points = distinct_points(n, &mut rng);
    let plain = StepKernel::new(k, m0, space, base, vec![], symmetric).expect("generated kernel");
    let pieces = pinned_pieces(&plain, &points, &mut rng);
    let kernel = plain.with_exceptions(pieces).expect("generated pieces");
    let mut options = CorrectionOptions::seeded(seed);
    options.max_escalations = C5_MAX_ESCALATIONS;
    Generated {
        family: family_name,
        problem: CorrectionProblem {
            kernel,
            constraint: ConstraintSet::new(k, mode, templates).expect("generated constraint"),
            points,
            epsilon: ratio(1, 10),
            options,
        },
    }
}

/// Independent re-check of relaxed satisfaction and density closeness.
fn audit_success(problem: &CorrectionProblem, result: &CorrectionResult) -> Result<(), String> {
    let space = problem.kernel.space();
    let eps = &problem.epsilon;
    let n = problem.points.len();
    for atom in problem.constraint.restrict(n).map_err(|e| e.to_string())? {
        check(atom_holds_relaxed(space, &result.g, &atom, eps).map_err(|e| e.to_string())?, || {
            format!("atom {atom} fails at epsilon")
        })?;
    }
    for index in index_set(problem.kernel.arity(), n, result.mode) {
        let point = problem.tuple_points(&index);
        if classify_tuple(&problem.kernel, &point, eps, result.m).map_err(|e| e.to_string())? == DensityClass::Density {
            let f = problem.kernel.eval(&point).unwrap();
            let d = space.dist(&f, result.g.get(&index).ok_or("g undefined")?).unwrap();
            check(&d <= eps, || format!("density tuple {index:?} moved by {d}"))?;
        }
    }
    let v = verify_correction(result, problem).map_err(|e| e.to_string())?;
    check(v.is_clean(), || format!("verifier: {:?}", v.issues().collect::<Vec<_>>()))
}

fn criterion_5() -> Verdict {
    let started = Instant::now();
    let mut families: HashMap<&str, usize> = HashMap::new();
    for seed in 0..C5_PROBLEMS {
        let g = generate(seed, false);
        let result = correct_nonsymmetric(&g.problem).map_err(|e| format!("seed {seed}: {e}"))?;
        check(result.success, || format!("seed {seed} ({}): {:?}", g.family, result.report.attempts.last()))?;
        check(result.report.escalations <= C5_MAX_ESCALATIONS, || format!("seed {seed}: too many escalations"))?;
        audit_success(&g.problem, &result).map_err(|e| format!("seed {seed} ({}): {e}", g.family))?;
        *families.entry(g.family).or_default() += 1;
    }
    let elapsed = started.elapsed();
    check(elapsed < C5_TIME, || format!("took {elapsed:?}"))?;
    let mut fams: Vec<_> = families.into_iter().collect();
    fams.sort();
    Ok(format!("{C5_PROBLEMS} problems corrected {fams:?}, {elapsed:.2?}"))
}

/// Every tuple keeps its g-value within ε when one representative is
/// replaced by another element of the same extracted set.
fn swap_check(problem: &CorrectionProblem, result: &CorrectionResult) -> Result<usize, String> {
    let space = problem.kernel.space();
    let k = problem.kernel.arity();
    let n = problem.points.len();
    let xi = &result.representatives;
    let mut swaps = 0;
    for index in index_set(k, n, Mode::Multiset) {
        if !index.windows(2).all(|w| w[0] <= w[1]) {
            continue;
        }
        let mut used: HashMap<usize, usize> = HashMap::new();
        let reps: Vec<usize> = index
            .iter()
            .map(|&z| {
                let u = used.entry(z).or_insert(0);
                *u += 1;
                *u - 1
            })
            .collect();
        let g = result.g.get(&index).ok_or("g undefined")?;
        for slot in 0..k {
            let z = index[slot] - 1;
            for alt in 0..xi[z].len() {
                let clash = (0..k).any(|j| j != slot && index[j] - 1 == z && reps[j] == alt);
                if clash {
                    continue;
                }
                let mut point: Vec<Q> = (0..k).map(|j| xi[index[j] - 1][reps[j]].clone()).collect();
                point[slot] = xi[z][alt].clone();
                let d = space.dist(g, &problem.kernel.eval(&point).unwrap()).unwrap();
                check(d < problem.epsilon, || format!("swap at {index:?} slot {slot} moves g by {d}"))?;
                swaps += 1;
            }
        }
    }
    Ok(swaps)
}

fn criterion_6() -> Verdict {
    let mut swaps = 0;
    let mut atoms = 0;
    for seed in 0..C5_PROBLEMS {
        let g = generate(seed, true);
        let p = &g.problem;
        let result = correct_symmetric(p).map_err(|e| format!("seed {seed}: {e}"))?;
        check(result.success, || format!("seed {seed} ({}): {:?}", g.family, result.report.attempts.last()))?;
        let n = p.points.len();
        for index in index_set(p.kernel.arity(), n, Mode::Multiset) {
            let v = result.g.get(&index);
            let mut perm = index.clone();
            perm.reverse();
            let mut rot = index.clone();
            rot.rotate_left(1);
            check(v.is_some() && v == result.g.get(&perm) && v == result.g.get(&rot), || {
                format!("seed {seed}: g not symmetric at {index:?}")
            })?;
        }
        audit_success(p, &result).map_err(|e| format!("seed {seed} ({}): {e}", g.family))?;
        atoms += p.constraint.restrict(n).unwrap().len();
        swaps += swap_check(p, &result).map_err(|e| format!("seed {seed} ({}): {e}", g.family))?;
    }
    Ok(format!("{C5_PROBLEMS} symmetric corrections, {atoms} atoms incl. repeats, {swaps} swaps within epsilon"))
}

fn criterion_7() -> Verdict {
    let points: Vec<Q> = (0..C7_POINTS).map(|i| ratio(2 * i as i64 + 1, 2 * C7_POINTS as i64 + 1)).collect();
    let eps = ratio(1, 10);
    let graphon = demos::example_graphon();
    let out = demos::triangle_removal_demo(&graphon, &points, &eps, 7).map_err(|e| e.to_string())?;
    check(out.correction.success, || "correction failed on the bipartite graphon".into())?;
    check(out.census.triples == C7_POINTS.pow(3), || "census not exhaustive".into())?;
    check(out.census.g_triangles == 0, || format!("{} g-triangles", out.census.g_triangles))?;
    let tf = demos::triangle_constraint();
    let audit = demos::audit_ae_hypothesis(&graphon, &tf, C7_TRIALS, 7).map_err(|e| e.to_string())?;
    check(audit.violations == 0, || format!("{} audit violations", audit.violations))?;

    let complete = demos::complete_graphon();
    let failed = demos::triangle_removal_demo(&complete, &points, &eps, 7).map_err(|e| e.to_string())?;
    check(!failed.correction.success, || "complete graphon was corrected".into())?;
    let audit_full = demos::audit_ae_hypothesis(&complete, &tf, C7_TRIALS, 7).map_err(|e| e.to_string())?;
    check(audit_full.interval.0 <= 1.0 && 1.0 <= audit_full.interval.1, || format!("interval {:?}", audit_full.interval))?;
    Ok(format!(
        "0 g-triangles over {} triples (f has {}), audit 0/{C7_TRIALS}; complete graphon fails with rate {} in [{:.4}, {:.4}]",
        out.census.triples, out.census.f_triangles, audit_full.rate, audit_full.interval.0, audit_full.interval.1
    ))
}

fn criterion_8() -> Verdict {
    let points = [ratio(1, 10), ratio(3, 5), ratio(9, 10)];
    let out = demos::metric_repair_demo(&demos::example_metric(), &points, &ratio(1, 20), 8).map_err(|e| e.to_string())?;
    check(out.f_violations.contains(&vec![1, 3, 2]), || "f should violate (0.1, 0.9, 0.6)".into())?;
    check(out.correction.success, || "correction failed".into())?;
    check(out.certificate.triples_checked == 27, || "certificate not exhaustive".into())?;
    check(out.certificate.failures.is_empty(), || format!("failing triples {:?}", out.certificate.failures))?;
    check(out.certificate.zero_diagonal, || "nonzero diagonal".into())?;
    check(out.broken_by_zeroing.is_empty(), || format!("zeroing broke {:?}", out.broken_by_zeroing))?;
    check(out.repaired.get(&vec![1, 2]) == Some(&Value::Real(ratio(3, 10))), || "g(0.1,0.6) != 0.3".into())?;
    Ok("27/27 ordered triples pass, zero diagonal, no atom broken, g(0.1,0.6) = 3/10".into())
}

fn criterion_9() -> Verdict {
    let reports = demos::remark_demos().map_err(|e| e.to_string())?;
    match &reports[0].outcome {
        Feasibility::Infeasible { witness } => {
            let origins: BTreeSet<&str> = witness.iter().map(|a| a.origin.as_str()).collect();
            check(origins == ["AntiSym", "Symmetry"].into(), || format!("witness {origins:?}"))?;
            check(witness.iter().all(|a| a.slots().iter().all(|s| **s == vec![1, 2] || **s == vec![2, 1])), || {
                "witness outside (1,2)".into()
            })?;
        }
        other => return Err(format!("oriented: {other:?}")),
    }
    match &reports[1].outcome {
        Feasibility::Infeasible { witness } => check(
            witness.len() == 1
                && matches!(&witness[0].relation, Relation::AbsDiff { a, b, .. } if *a == vec![1, 1] && *b == vec![1, 1]),
            || format!("witness {witness:?}"),
        )?,
        other => return Err(format!("repeated: {other:?}")),
    }
    check(matches!(reports[2].outcome, Feasibility::Feasible(_)), || "unsymmetrized variant not feasible".into())?;
    Ok("both counterexamples infeasible with the expected witnesses, unsymmetrized variant feasible".into())
}

fn strip_timing(text: &str) -> String {
    let mut out = Vec::new();
    let mut skipping = false;
    for line in text.lines() {
        if line.trim_start().starts_with("\"timing\": {") {
            skipping = true;
            continue;
        }
        if skipping {
            if line.trim_start().starts_with('}') {
                skipping = false;
            }
            continue;
        }
        out.push(line);
    }
    out.join("\n")
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let kernel = dir.path().join("k.json");
    let constraint = dir.path().join("c.json");
    std::fs::write(&kernel, removal_core::format::kernel_to_json(&demos::example_graphon()).to_string()).unwrap();
    std::fs::write(
        &constraint,
        removal_core::format::constraint_to_json(&demos::triangle_constraint(), &bits()).to_string(),
    )
    .unwrap();
    let (k, c) = (kernel.to_str().unwrap(), constraint.to_str().unwrap());
    let runs: Vec<Vec<&str>> = vec![
        vec!["correct", "--kernel", k, "--constraint", c, "--points", "0.1,0.3,0.45,0.7", "--seed", "10"],
        vec!["demo", "triangle-removal", "--seed", "10"],
        vec!["demo", "triangle-removal", "--complete", "--seed", "10", "--max-escalations", "1"],
        vec!["demo", "metric-repair", "--seed", "10", "--epsilon", "0.05"],
        vec!["demo", "remark"],
        vec!["demo", "audit", "--seed", "10", "--trials", "2000"],
    ];
    for args in &runs {
        let run = || Command::new(env!("CARGO_BIN_EXE_removal")).args(args).output().map_err(|e| e.to_string());
        let (a, b) = (run()?, run()?);
        check(a.status.code() == b.status.code(), || format!("{args:?}: exit codes differ"))?;
        check(!a.stdout.is_empty(), || format!("{args:?}: empty report"))?;
        let (ta, tb) = (strip_timing(&String::from_utf8_lossy(&a.stdout)), strip_timing(&String::from_utf8_lossy(&b.stdout)));
        check(ta == tb, || format!("{args:?}: reports differ"))?;
    }
    Ok(format!("{} invocations byte-identical modulo timing", runs.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("density exactness", criterion_1),
        ("null-invariance", criterion_2),
        ("Ramsey ground truth", criterion_3),
        ("extraction checker independence", criterion_4),
        ("corrector, non-symmetric", criterion_5),
        ("corrector, symmetric", criterion_6),
        ("triangle removal example", criterion_7),
        ("metric repair example", criterion_8),
        ("necessity counterexamples", criterion_9),
        ("determinism", criterion_10),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
