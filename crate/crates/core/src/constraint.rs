//! Closed cylindrical constraint systems over tuple-indexed values.
//!
//! A [`ConstraintSet`] is a list of [`Template`]s written over *pattern
//! variables* `1..=v`. Restricting to `n` points instantiates every template
//! under every admissible map from variables to indices `1..=n` and yields a
//! flat list of [`Atom`]s over concrete [`TupleIndex`] slots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use itertools::Itertools;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Q};
use crate::value_space::{Ext, Neighborhood, Value, ValueSpace};

/// A tuple of one-based point indices.
pub type TupleIndex = Vec<usize>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Only tuples of mutually distinct indices.
    Distinct,
    /// All tuples, repeats allowed.
    Multiset,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Distinct => "distinct",
            Mode::Multiset => "multiset",
        })
    }
}

/// All `k`-tuples over `1..=n` admissible in `mode`, in lexicographic order.
pub fn index_set(k: usize, n: usize, mode: Mode) -> Vec<TupleIndex> {
    (0..k)
        .map(|_| 1..=n)
        .multi_cartesian_product()
        .filter(|t| mode == Mode::Multiset || t.iter().all_unique())
        .collect()
}

/// Relation shape of a template, over pattern-variable slots.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `value(I) = value(π·I)` for every slot `I` and permutation `π`.
    Symmetry,
    /// The product of the slot values is zero.
    ZeroProduct { slots: Vec<TupleIndex> },
    /// `Σ coeffs[i]·value(slots[i]) ≤ bound`, evaluated on `[0, ∞]`.
    LinearIneq { coeffs: Vec<Q>, slots: Vec<TupleIndex>, bound: Q },
    /// The slot value is not `∞`.
    Finite { slot: TupleIndex },
    /// `|value(a) − value(b)| = diff`.
    AbsDiff { a: TupleIndex, b: TupleIndex, diff: Q },
    /// The slot values form one of the allowed rows.
    Table { slots: Vec<TupleIndex>, allowed: Vec<Vec<Value>> },
}

/// A named constraint over pattern variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub name: String,
    pub shape: Shape,
    /// Instantiate only under increasing (distinct mode) or non-decreasing
    /// (multiset mode) variable maps. Sound when the template is invariant
    /// under permuting its variables given symmetry of the values.
    pub unordered: bool,
}

impl Template {
    pub fn new(name: impl Into<String>, shape: Shape) -> Self {
        Template {
            name: name.into(),
            shape,
            unordered: false,
        }
    }

    pub fn unordered(mut self) -> Self {
        self.unordered = true;
        self
    }

    pub fn symmetry() -> Self {
        Template::new("Symmetry", Shape::Symmetry)
    }

    /// `f(y1,y2)·f(y2,y3)·f(y1,y3) = 0`.
    pub fn triangle_free() -> Self {
        Template::new(
            "TriangleFree",
            Shape::ZeroProduct {
                slots: vec![vec![1, 2], vec![2, 3], vec![1, 3]],
            },
        )
        .unordered()
    }

    /// The product over all `k`-subsets of `size` variables vanishes: no
    /// complete `k`-uniform hypergraph on `size` vertices.
    pub fn clique_free(k: usize, size: usize) -> Self {
        Template::new(
            "CliqueFree",
            Shape::ZeroProduct {
                slots: (1..=size).combinations(k).collect(),
            },
        )
        .unordered()
    }

    /// `f(y1,y3) ≤ f(y1,y2) + f(y2,y3)`.
    pub fn triangle_inequality() -> Self {
        Template::new(
            "TriangleInequality",
            Shape::LinearIneq {
                coeffs: vec![rational::int(1), rational::int(-1), rational::int(-1)],
                slots: vec![vec![1, 3], vec![1, 2], vec![2, 3]],
                bound: Q::zero(),
            },
        )
    }

    pub fn finite_values(k: usize) -> Self {
        Template::new("Finite", Shape::Finite { slot: (1..=k).collect() })
    }

    /// `|f(x,y) − f(y,x)| = 1`.
    pub fn anti_symmetry() -> Self {
        Template::new(
            "AntiSym",
            Shape::AbsDiff {
                a: vec![1, 2],
                b: vec![2, 1],
                diff: rational::int(1),
            },
        )
    }

    /// `|f(x,y) − f(x,x)| = 1`.
    pub fn diagonal_difference() -> Self {
        Template::new(
            "DiagonalDifference",
            Shape::AbsDiff {
                a: vec![1, 2],
                b: vec![1, 1],
                diff: rational::int(1),
            },
        )
    }

    fn slots(&self) -> Vec<&TupleIndex> {
        match &self.shape {
            Shape::Symmetry => Vec::new(),
            Shape::ZeroProduct { slots } | Shape::LinearIneq { slots, .. } | Shape::Table { slots, .. } => {
                slots.iter().collect()
            }
            Shape::Finite { slot } => vec![slot],
            Shape::AbsDiff { a, b, .. } => vec![a, b],
        }
    }

    fn variable_count(&self) -> usize {
        self.slots().into_iter().flatten().copied().max().unwrap_or(0)
    }
}

/// A conjunction of templates together with the tuple mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    arity: usize,
    mode: Mode,
    templates: Vec<Template>,
}

impl ConstraintSet {
    pub fn new(arity: usize, mode: Mode, templates: Vec<Template>) -> Result<Self> {
        if arity == 0 {
            return Err(Error::Contract("constraint arity must be positive".into()));
        }
        for (t, template) in templates.iter().enumerate() {
            let field = format!("atoms[{t}]");
            for slot in template.slots() {
                if slot.len() != arity {
                    return Err(Error::format(&field, format!("slot {slot:?} does not have {arity} entries")));
                }
                if slot.contains(&0) {
                    return Err(Error::format(&field, "pattern variables are numbered from 1"));
                }
            }
            match &template.shape {
                Shape::ZeroProduct { slots } if slots.is_empty() => {
                    return Err(Error::format(&field, "zero_product needs at least one slot"));
                }
                Shape::LinearIneq { coeffs, slots, .. } if coeffs.len() != slots.len() || slots.is_empty() => {
                    return Err(Error::format(&field, "linear_ineq needs one coefficient per slot"));
                }
                Shape::Table { slots, allowed } if allowed.iter().any(|row| row.len() != slots.len()) => {
                    return Err(Error::format(&field, "every table row needs one value per slot"));
                }
                Shape::AbsDiff { diff, .. } if diff.is_negative() => {
                    return Err(Error::format(&field, "abs_diff target must be non-negative"));
                }
                _ => {}
            }
        }
        Ok(ConstraintSet {
            arity,
            mode,
            templates,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        ConstraintSet {
            mode,
            ..self.clone()
        }
    }

    /// Largest number of pattern variables any template uses (at least the arity).
    pub fn variable_count(&self) -> usize {
        self.templates
            .iter()
            .map(Template::variable_count)
            .max()
            .unwrap_or(0)
            .max(self.arity)
    }

    /// Instantiates every template over indices `1..=n`. In multiset mode the
    /// symmetry atoms are always included.
    pub fn restrict(&self, n: usize) -> Result<Vec<Atom>> {
        let k = self.arity;
        match self.mode {
            Mode::Distinct if n < k => {
                return Err(Error::Contract(format!("distinct mode needs n >= k, got n={n}, k={k}")));
            }
            _ if n == 0 => return Err(Error::Contract("n must be positive".into())),
            _ => {}
        }
        let mut atoms = Vec::new();
        let mut seen = BTreeSet::new();
        let mut push = |atom: Atom, atoms: &mut Vec<Atom>| {
            if seen.insert(atom.clone()) {
                atoms.push(atom);
            }
        };
        let mut has_symmetry = false;
        for template in &self.templates {
            if template.shape == Shape::Symmetry {
                has_symmetry = true;
                for atom in symmetry_atoms(k, n, self.mode) {
                    push(atom, &mut atoms);
                }
                continue;
            }
            for map in variable_maps(template.variable_count(), n, self.mode, template.unordered) {
                if let Some(atom) = instantiate(template, &map, self.mode) {
                    push(atom, &mut atoms);
                }
            }
        }
        if self.mode == Mode::Multiset && !has_symmetry {
            for atom in symmetry_atoms(k, n, self.mode) {
                push(atom, &mut atoms);
            }
        }
        Ok(atoms)
    }
}

fn symmetry_atoms(k: usize, n: usize, mode: Mode) -> Vec<Atom> {
    let mut out = Vec::new();
    for slot in index_set(k, n, mode) {
        let images: BTreeSet<TupleIndex> = slot.iter().copied().permutations(k).filter(|p| *p > slot).collect();
        for image in images {
            out.push(Atom {
                origin: "Symmetry".into(),
                relation: Relation::Equal(slot.clone(), image),
            });
        }
    }
    out
}

fn variable_maps(v: usize, n: usize, mode: Mode, unordered: bool) -> Vec<Vec<usize>> {
    (0..v)
        .map(|_| 1..=n)
        .multi_cartesian_product()
        .filter(|m| match (mode, unordered) {
            (Mode::Distinct, false) => m.iter().all_unique(),
            (Mode::Distinct, true) => m.windows(2).all(|w| w[0] < w[1]),
            (Mode::Multiset, false) => true,
            (Mode::Multiset, true) => m.windows(2).all(|w| w[0] <= w[1]),
        })
        .collect()
}

fn instantiate(template: &Template, map: &[usize], mode: Mode) -> Option<Atom> {
    let bind = |slot: &TupleIndex| -> Option<TupleIndex> {
        let t: TupleIndex = slot.iter().map(|&var| map[var - 1]).collect();
        (mode == Mode::Multiset || t.iter().all_unique()).then_some(t)
    };
    let bind_all = |slots: &[TupleIndex]| slots.iter().map(bind).collect::<Option<Vec<_>>>();
    let relation = match &template.shape {
        Shape::Symmetry => unreachable!("symmetry is instantiated separately"),
        Shape::ZeroProduct { slots } => {
            let mut s = bind_all(slots)?;
            s.sort();
            s.dedup();
            Relation::ZeroProduct(s)
        }
        Shape::LinearIneq { coeffs, slots, bound } => Relation::LinearIneq {
            coeffs: coeffs.clone(),
            slots: bind_all(slots)?,
            bound: bound.clone(),
        },
        Shape::Finite { slot } => Relation::Finite(bind(slot)?),
        Shape::AbsDiff { a, b, diff } => {
            let (a, b) = (bind(a)?, bind(b)?);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            Relation::AbsDiff { a, b, diff: diff.clone() }
        }
        Shape::Table { slots, allowed } => Relation::Table {
            slots: bind_all(slots)?,
            allowed: allowed.clone(),
        },
    };
    Some(Atom {
        origin: template.name.clone(),
        relation,
    })
}

/// An instantiated relation over concrete slots.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Equal(TupleIndex, TupleIndex),
    ZeroProduct(Vec<TupleIndex>),
    LinearIneq { coeffs: Vec<Q>, slots: Vec<TupleIndex>, bound: Q },
    Finite(TupleIndex),
    AbsDiff { a: TupleIndex, b: TupleIndex, diff: Q },
    Table { slots: Vec<TupleIndex>, allowed: Vec<Vec<Value>> },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    /// Name of the template the atom was instantiated from.
    pub origin: String,
    pub relation: Relation,
}

impl Atom {
    pub fn slots(&self) -> Vec<&TupleIndex> {
        match &self.relation {
            Relation::Equal(a, b) | Relation::AbsDiff { a, b, .. } => vec![a, b],
            Relation::ZeroProduct(s) | Relation::LinearIneq { slots: s, .. } | Relation::Table { slots: s, .. } => {
                s.iter().collect()
            }
            Relation::Finite(s) => vec![s],
        }
    }
}

fn show(slot: &TupleIndex) -> String {
    format!("({})", slot.iter().join(","))
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.origin)?;
        match &self.relation {
            Relation::Equal(a, b) => write!(f, "{} = {}", show(a), show(b))?,
            Relation::ZeroProduct(s) => write!(f, "{} = 0", s.iter().map(show).join("*"))?,
            Relation::LinearIneq { coeffs, slots, bound } => {
                let terms = coeffs
                    .iter()
                    .zip(slots)
                    .map(|(c, s)| format!("{}*{}", rational::render(c), show(s)))
                    .join(" + ");
                write!(f, "{terms} <= {}", rational::render(bound))?
            }
            Relation::Finite(s) => write!(f, "{} < inf", show(s))?,
            Relation::AbsDiff { a, b, diff } => write!(f, "|{} - {}| = {}", show(a), show(b), rational::render(diff))?,
            Relation::Table { slots, allowed } => {
                write!(f, "({}) in table of {} rows", slots.iter().map(show).join(","), allowed.len())?
            }
        }
        write!(f, "]")
    }
}

/// Values on tuple indices with entries `≤ n`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    n: usize,
    table: BTreeMap<TupleIndex, Value>,
}

impl Assignment {
    pub fn new(n: usize) -> Self {
        Assignment {
            n,
            table: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, index: TupleIndex, value: Value) {
        debug_assert!(index.iter().all(|&i| (1..=self.n).contains(&i)));
        self.table.insert(index, value);
    }

    pub fn get(&self, index: &TupleIndex) -> Option<&Value> {
        self.table.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TupleIndex, &Value)> {
        self.table.iter()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn lookup(&self, index: &TupleIndex) -> Result<&Value> {
        self.table
            .get(index)
            .ok_or_else(|| Error::Contract(format!("assignment has no value at slot {}", show(index))))
    }
}

fn numeric(space: &ValueSpace, v: &Value) -> Result<Ext> {
    space
        .numeric(v)
        .ok_or_else(|| Error::Domain(format!("value {} has no numeric reading", space.render(v))))
}

/// `Σ c·x ≤ bound` on `[0, ∞]`: an infinite term with negative coefficient
/// makes the left side `−∞`; otherwise an infinite positive term makes it `+∞`.
fn linear_holds(terms: &[(Q, Ext)], bound: &Q) -> bool {
    if terms.iter().any(|(c, x)| c.is_negative() && *x == Ext::Infinite) {
        return true;
    }
    if terms.iter().any(|(c, x)| c.is_positive() && *x == Ext::Infinite) {
        return false;
    }
    let sum: Q = terms
        .iter()
        .filter_map(|(c, x)| x.finite().map(|x| c * x))
        .sum();
    &sum <= bound
}

fn is_zero(x: &Ext) -> bool {
    matches!(x, Ext::Finite(q) if q.is_zero())
}

/// Exact evaluation of one atom.
pub fn atom_holds(space: &ValueSpace, assignment: &Assignment, atom: &Atom) -> Result<bool> {
    let get = |s: &TupleIndex| assignment.lookup(s);
    Ok(match &atom.relation {
        Relation::Equal(a, b) => get(a)? == get(b)?,
        Relation::ZeroProduct(slots) => {
            let mut any = false;
            for s in slots {
                any |= space.numeric(get(s)?).is_some_and(|x| is_zero(&x));
            }
            any
        }
        Relation::LinearIneq { coeffs, slots, bound } => {
            let terms = coeffs
                .iter()
                .zip(slots)
                .map(|(c, s)| Ok((c.clone(), numeric(space, get(s)?)?)))
                .collect::<Result<Vec<_>>>()?;
            linear_holds(&terms, bound)
        }
        Relation::Finite(s) => *get(s)? != Value::Infinity,
        Relation::AbsDiff { a, b, diff } => {
            match (numeric(space, get(a)?)?, numeric(space, get(b)?)?) {
                (Ext::Finite(x), Ext::Finite(y)) => &rational::abs_diff(&x, &y) == diff,
                _ => false,
            }
        }
        Relation::Table { slots, allowed } => {
            let row = slots.iter().map(get).collect::<Result<Vec<_>>>()?;
            allowed.iter().any(|r| r.iter().zip(&row).all(|(x, y)| x == *y))
        }
    })
}

/// Whether every atom holds exactly.
pub fn satisfies(space: &ValueSpace, assignment: &Assignment, atoms: &[Atom]) -> Result<bool> {
    for atom in atoms {
        if !atom_holds(space, assignment, atom)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Numeric extremes of a neighborhood.
fn extremes(space: &ValueSpace, nb: &Neighborhood) -> Result<Option<(Ext, Ext)>> {
    Ok(match nb {
        Neighborhood::Span { lo, hi } => Some((lo.clone(), hi.clone())),
        Neighborhood::Labels(ls) => {
            let xs = ls
                .iter()
                .map(|&l| numeric(space, &Value::Label(l)))
                .collect::<Result<Vec<_>>>()?;
            xs.iter().min().cloned().zip(xs.iter().max().cloned())
        }
    })
}

/// Whether some `|x − y| = diff` with `x ∈ [la, ha]`, `y ∈ [lb, hb]` finite.
fn span_reaches(a: (&Ext, &Ext), b: (&Ext, &Ext), diff: &Q) -> bool {
    let (Ext::Finite(la), Ext::Finite(lb)) = (a.0, b.0) else {
        return false;
    };
    // x − y ranges over [la − hb, ha − lb]; None stands for an unbounded end.
    let low = b.1.finite().map(|hb| la - hb);
    let high = a.1.finite().map(|ha| ha - lb);
    let neg_diff = -diff.clone();
    let reaches = |t: &Q| low.as_ref().is_none_or(|l| l <= t) && high.as_ref().is_none_or(|h| t <= h);
    reaches(diff) || reaches(&neg_diff)
}

/// Per-atom ε-relaxation: the atom holds after moving each referenced value
/// by at most `eps` in the metric of `space`.
pub fn atom_holds_relaxed(space: &ValueSpace, assignment: &Assignment, atom: &Atom, eps: &Q) -> Result<bool> {
    if eps.is_negative() {
        return Err(Error::Contract("epsilon must be non-negative".into()));
    }
    let nb = |s: &TupleIndex| -> Result<Neighborhood> { Ok(space.neighborhood(assignment.lookup(s)?, eps)) };
    Ok(match &atom.relation {
        Relation::Equal(a, b) => match (nb(a)?, nb(b)?) {
            (Neighborhood::Labels(x), Neighborhood::Labels(y)) => x.iter().any(|l| y.binary_search(l).is_ok()),
            (Neighborhood::Span { lo: la, hi: ha }, Neighborhood::Span { lo: lb, hi: hb }) => la <= hb && lb <= ha,
            _ => false,
        },
        Relation::ZeroProduct(slots) => {
            let zeros = space.zeros();
            let mut any = false;
            for s in slots {
                let n = nb(s)?;
                any |= zeros.iter().any(|z| n.contains(z));
            }
            any
        }
        Relation::LinearIneq { coeffs, slots, bound } => {
            let mut terms = Vec::with_capacity(slots.len());
            for (c, s) in coeffs.iter().zip(slots) {
                let Some((lo, hi)) = extremes(space, &nb(s)?)? else {
                    return Ok(false);
                };
                terms.push((c.clone(), if c.is_negative() { hi } else { lo }));
            }
            linear_holds(&terms, bound)
        }
        Relation::Finite(s) => match nb(s)? {
            Neighborhood::Labels(ls) => !ls.is_empty(),
            Neighborhood::Span { lo, .. } => lo != Ext::Infinite,
        },
        Relation::AbsDiff { a, b, diff } => match (nb(a)?, nb(b)?) {
            (Neighborhood::Labels(x), Neighborhood::Labels(y)) => {
                let xs = x.iter().map(|&l| numeric(space, &Value::Label(l))).collect::<Result<Vec<_>>>()?;
                let ys = y.iter().map(|&l| numeric(space, &Value::Label(l))).collect::<Result<Vec<_>>>()?;
                xs.iter().cartesian_product(&ys).any(|pair| match pair {
                    (Ext::Finite(p), Ext::Finite(q)) => &rational::abs_diff(p, q) == diff,
                    _ => false,
                })
            }
            (Neighborhood::Span { lo: la, hi: ha }, Neighborhood::Span { lo: lb, hi: hb }) => {
                span_reaches((&la, &ha), (&lb, &hb), diff)
            }
            _ => false,
        },
        Relation::Table { slots, allowed } => {
            let nbs = slots.iter().map(nb).collect::<Result<Vec<_>>>()?;
            allowed.iter().any(|row| row.iter().zip(&nbs).all(|(v, n)| n.contains(v)))
        }
    })
}

/// Whether every atom holds after its own ε-relaxation. A sound necessary
/// condition for the assignment being ε-close to the constraint set in the
/// max metric; joint closeness is not decided.
pub fn satisfies_relaxed(space: &ValueSpace, assignment: &Assignment, atoms: &[Atom], eps: &Q) -> Result<bool> {
    for atom in atoms {
        if !atom_holds_relaxed(space, assignment, atom, eps)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of a bounded feasibility search.
#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Assignment),
    /// No assignment over the searched values exists. The witness is an
    /// irreducible infeasible subset, found by deleting atoms in order.
    Infeasible { witness: Vec<Atom> },
    /// The node budget ran out before the search finished.
    Unknown { nodes: u64 },
}

enum Search {
    Found(BTreeMap<TupleIndex, Value>),
    Exhausted,
    OutOfBudget(u64),
}

fn search(space: &ValueSpace, atoms: &[Atom], domain: &[Value], budget: u64) -> Result<Search> {
    let mut slots: Vec<TupleIndex> = Vec::new();
    let mut position = BTreeMap::new();
    for atom in atoms {
        for s in atom.slots() {
            if !position.contains_key(s) {
                position.insert(s.clone(), slots.len());
                slots.push(s.clone());
            }
        }
    }
    // Atoms become checkable once their last slot is assigned.
    let mut ready: Vec<Vec<&Atom>> = vec![Vec::new(); slots.len().max(1)];
    let mut constant = Vec::new();
    for atom in atoms {
        match atom.slots().iter().map(|s| position[*s]).max() {
            Some(p) => ready[p].push(atom),
            None => constant.push(atom),
        }
    }
    let n = slots.iter().flatten().copied().max().unwrap_or(1);
    let mut assignment = Assignment::new(n);
    for atom in constant {
        if !atom_holds(space, &assignment, atom)? {
            return Ok(Search::Exhausted);
        }
    }
    let mut nodes = 0u64;

    #[allow(clippy::too_many_arguments)]
    fn go(
        depth: usize,
        slots: &[TupleIndex],
        ready: &[Vec<&Atom>],
        space: &ValueSpace,
        domain: &[Value],
        assignment: &mut Assignment,
        nodes: &mut u64,
        budget: u64,
    ) -> Result<Option<bool>> {
        if depth == slots.len() {
            return Ok(Some(true));
        }
        for v in domain {
            *nodes += 1;
            if *nodes > budget {
                return Ok(None);
            }
            assignment.insert(slots[depth].clone(), v.clone());
            let mut ok = true;
            for atom in &ready[depth] {
                if !atom_holds(space, assignment, atom)? {
                    ok = false;
                    break;
                }
            }
            if ok {
                match go(depth + 1, slots, ready, space, domain, assignment, nodes, budget)? {
                    Some(true) => return Ok(Some(true)),
                    None => return Ok(None),
                    Some(false) => {}
                }
            }
        }
        assignment.table.remove(&slots[depth]);
        Ok(Some(false))
    }

    Ok(
        match go(0, &slots, &ready, space, domain, &mut assignment, &mut nodes, budget)? {
            Some(true) => Search::Found(assignment.table),
            Some(false) => Search::Exhausted,
            None => Search::OutOfBudget(nodes),
        },
    )
}

/// Searches for an assignment on indices `≤ n` satisfying the restricted
/// constraint exactly. Finite metric spaces are searched over all labels;
/// other spaces need an explicit `grid`. Each internal search visits at most
/// `budget` nodes.
pub fn feasible(
    constraint: &ConstraintSet,
    n: usize,
    space: &ValueSpace,
    grid: Option<&[Value]>,
    budget: u64,
) -> Result<Feasibility> {
    let domain: Vec<Value> = match (space, grid) {
        (_, Some(g)) => {
            for v in g {
                space.check(v)?;
            }
            g.to_vec()
        }
        (ValueSpace::FiniteMetric(fm), None) => (0..fm.len()).map(Value::Label).collect(),
        (_, None) => return Err(Error::Contract("a value grid is required for interval spaces".into())),
    };
    if domain.is_empty() {
        return Err(Error::Contract("the value grid is empty".into()));
    }
    let atoms = constraint.restrict(n)?;
    match search(space, &atoms, &domain, budget)? {
        Search::Found(table) => {
            let mut assignment = Assignment::new(n);
            for index in index_set(constraint.arity(), n, constraint.mode()) {
                let v = table.get(&index).cloned().unwrap_or_else(|| domain[0].clone());
                assignment.insert(index, v);
            }
            Ok(Feasibility::Feasible(assignment))
        }
        Search::OutOfBudget(nodes) => Ok(Feasibility::Unknown { nodes }),
        Search::Exhausted => {
            let mut keep = vec![true; atoms.len()];
            for i in 0..atoms.len() {
                keep[i] = false;
                let trial: Vec<Atom> = atoms
                    .iter()
                    .zip(&keep)
                    .filter(|(_, k)| **k)
                    .map(|(a, _)| a.clone())
                    .collect();
                if !matches!(search(space, &trial, &domain, budget)?, Search::Exhausted) {
                    keep[i] = true;
                }
            }
            let witness = atoms
                .into_iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(a, _)| a)
                .collect();
            Ok(Feasibility::Infeasible { witness })
        }
    }
}
