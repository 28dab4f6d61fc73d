//! Multipartite Ramsey extraction.
//!
//! Given disjoint parts `A_1..A_ν`, sizes `k_i` and a coloring of arrays
//! `(B_1,…,B_ν)` with `B_i ⊆ A_i`, `|B_i| = k_i`, find `C_i ⊆ A_i` of size
//! `N_i` on which every array has the same color. [`multi_type_extract`]
//! applies this once per *type* to get subsets of a union of parts on which
//! the color of a `k`-set depends only on how it meets each part.

use std::collections::{BTreeSet, HashMap};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Color = u32;

/// Colors arrays `(B_1,…,B_ν)`; each block is sorted ascending.
pub trait ArrayColoring {
    fn color(&self, array: &[Vec<usize>]) -> Color;
}

impl<F: Fn(&[Vec<usize>]) -> Color> ArrayColoring for F {
    fn color(&self, array: &[Vec<usize>]) -> Color {
        self(array)
    }
}

/// An explicit coloring table with a default color for missing arrays.
#[derive(Clone, Debug, Default)]
pub struct TableColoring {
    colors: HashMap<Vec<Vec<usize>>, Color>,
    default: Color,
}

impl TableColoring {
    pub fn new(default: Color) -> Self {
        TableColoring {
            colors: HashMap::new(),
            default,
        }
    }

    pub fn set(&mut self, array: Vec<Vec<usize>>, color: Color) {
        let array = array
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        self.colors.insert(array, color);
    }
}

impl ArrayColoring for TableColoring {
    fn color(&self, array: &[Vec<usize>]) -> Color {
        self.colors.get(array).copied().unwrap_or(self.default)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RamseyInstance {
    parts: Vec<Vec<usize>>,
    sizes: Vec<usize>,
    targets: Vec<usize>,
}

impl RamseyInstance {
    pub fn new(parts: Vec<Vec<usize>>, sizes: Vec<usize>, targets: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Contract("at least one part is required".into()));
        }
        if sizes.len() != parts.len() || targets.len() != parts.len() {
            return Err(Error::Contract("sizes and targets need one entry per part".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, part) in parts.iter().enumerate() {
            for &e in part {
                if !seen.insert(e) {
                    return Err(Error::Contract(format!("element {e} appears twice (part {i})")));
                }
            }
            if !(1 <= sizes[i] && sizes[i] <= targets[i] && targets[i] <= part.len()) {
                return Err(Error::Contract(format!(
                    "part {i} needs 1 <= k <= N <= R, got k={}, N={}, R={}",
                    sizes[i],
                    targets[i],
                    part.len()
                )));
            }
        }
        Ok(RamseyInstance {
            parts,
            sizes,
            targets,
        })
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

/// Subsets `C_i` and the single color of every array inside them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Extraction {
    pub subsets: Vec<Vec<usize>>,
    pub color: Color,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Complete backtracking in element order.
    Exhaustive { budget: u64 },
    /// Backtracking over shuffled element orders, restarted with independent
    /// streams of `seed`.
    Randomized {
        restarts: u32,
        seed: u64,
        budget_per_restart: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum NotFound {
    /// A complete search found nothing: no extraction exists.
    Proven,
    /// Every randomized restart ran out of budget.
    Inconclusive { restarts: u32 },
    /// The exhaustive search ran out of budget.
    BudgetExhausted { nodes: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RamseyOutcome {
    Found(Extraction),
    NotFound(NotFound),
}

enum Step {
    Found(Color),
    Fail,
    OutOfBudget,
}

struct Searcher<'a, C: ?Sized> {
    instance: &'a RamseyInstance,
    coloring: &'a C,
    order: Vec<Vec<usize>>,
    chosen: Vec<Vec<usize>>,
    nodes: u64,
    budget: u64,
}

impl<'a, C: ArrayColoring + ?Sized> Searcher<'a, C> {
    /// Color of every completed array that contains the newest element of
    /// part `p`, checked against `color`. `None` on conflict.
    fn check_new(&self, p: usize, color: Option<Color>) -> Option<Option<Color>> {
        let nu = self.parts_len();
        if p + 1 != nu {
            // later parts are still empty
            return Some(color);
        }
        let chosen_p = &self.chosen[p];
        let (newest, earlier) = chosen_p.split_last().expect("just pushed");
        let k = &self.instance.sizes;
        let mut color = color;
        let mut blocks: Vec<Vec<Vec<usize>>> = (0..p)
            .map(|j| self.chosen[j].iter().copied().combinations(k[j]).collect())
            .collect();
        blocks.push(
            earlier
                .iter()
                .copied()
                .combinations(k[p] - 1)
                .map(|mut b| {
                    b.push(*newest);
                    b
                })
                .collect(),
        );
        for combo in blocks.iter().map(|b| b.iter()).multi_cartesian_product() {
            let array: Vec<Vec<usize>> = combo
                .into_iter()
                .map(|b| {
                    let mut b = b.clone();
                    b.sort_unstable();
                    b
                })
                .collect();
            let c = self.coloring.color(&array);
            match color {
                None => color = Some(c),
                Some(expected) if expected != c => return None,
                _ => {}
            }
        }
        Some(color)
    }

    fn parts_len(&self) -> usize {
        self.instance.parts.len()
    }

    fn dfs(&mut self, p: usize, start: usize, color: Option<Color>) -> Step {
        if p == self.parts_len() {
            return Step::Found(color.expect("every part contributes at least one array"));
        }
        let target = self.instance.targets[p];
        if self.chosen[p].len() == target {
            return self.dfs(p + 1, 0, color);
        }
        let need = target - self.chosen[p].len();
        for idx in start..self.order[p].len() {
            if self.order[p].len() - idx < need {
                break;
            }
            self.nodes += 1;
            if self.nodes > self.budget {
                return Step::OutOfBudget;
            }
            let e = self.order[p][idx];
            self.chosen[p].push(e);
            if let Some(next_color) = self.check_new(p, color) {
                match self.dfs(p, idx + 1, next_color) {
                    Step::Fail => {}
                    other => return other,
                }
            }
            self.chosen[p].pop();
        }
        Step::Fail
    }

    fn run(instance: &'a RamseyInstance, coloring: &'a C, order: Vec<Vec<usize>>, budget: u64) -> (Step, Vec<Vec<usize>>) {
        let mut s = Searcher {
            instance,
            coloring,
            chosen: vec![Vec::new(); order.len()],
            order,
            nodes: 0,
            budget,
        };
        let step = s.dfs(0, 0, None);
        (step, s.chosen)
    }
}

fn extraction(color: Color, chosen: Vec<Vec<usize>>) -> Extraction {
    Extraction {
        subsets: chosen
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect(),
        color,
    }
}

/// Searches for an extraction. Exhaustive `NotFound::Proven` is a proof of
/// nonexistence; a randomized restart that completes its search without
/// running out of budget proves the same.
pub fn ramsey_extract<C: ArrayColoring + ?Sized>(
    instance: &RamseyInstance,
    coloring: &C,
    strategy: Strategy,
) -> RamseyOutcome {
    match strategy {
        Strategy::Exhaustive { budget } => {
            let (step, chosen) = Searcher::run(instance, coloring, instance.parts.clone(), budget);
            match step {
                Step::Found(c) => RamseyOutcome::Found(extraction(c, chosen)),
                Step::Fail => RamseyOutcome::NotFound(NotFound::Proven),
                Step::OutOfBudget => RamseyOutcome::NotFound(NotFound::BudgetExhausted { nodes: budget }),
            }
        }
        Strategy::Randomized {
            restarts,
            seed,
            budget_per_restart,
        } => {
            for r in 0..restarts {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                let order = instance
                    .parts
                    .iter()
                    .map(|p| {
                        let mut p = p.clone();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect();
                let (step, chosen) = Searcher::run(instance, coloring, order, budget_per_restart);
                match step {
                    Step::Found(c) => return RamseyOutcome::Found(extraction(c, chosen)),
                    Step::Fail => return RamseyOutcome::NotFound(NotFound::Proven),
                    Step::OutOfBudget => {}
                }
            }
            RamseyOutcome::NotFound(NotFound::Inconclusive { restarts })
        }
    }
}

/// Re-enumerates every array inside the extraction. Shares no code with
/// the searcher.
pub fn verify_extraction<C: ArrayColoring + ?Sized>(
    instance: &RamseyInstance,
    coloring: &C,
    extraction: &Extraction,
) -> bool {
    let subsets = &extraction.subsets;
    if subsets.len() != instance.parts.len() {
        return false;
    }
    for (i, c) in subsets.iter().enumerate() {
        let unique: BTreeSet<_> = c.iter().collect();
        if c.len() != instance.targets[i] || unique.len() != c.len() || !c.iter().all(|e| instance.parts[i].contains(e)) {
            return false;
        }
    }
    subsets
        .iter()
        .zip(&instance.sizes)
        .map(|(c, &k)| {
            let mut sorted = c.clone();
            sorted.sort_unstable();
            sorted.into_iter().combinations(k)
        })
        .multi_cartesian_product()
        .all(|array| coloring.color(&array) == extraction.color)
}

/// Colors `k`-subsets (sorted ascending) of a union of parts.
pub trait SetColoring {
    fn color(&self, set: &[usize]) -> Color;
}

impl<F: Fn(&[usize]) -> Color> SetColoring for F {
    fn color(&self, set: &[usize]) -> Color {
        self(set)
    }
}

/// Count vectors of length `parts` summing to `k` with entries `≤ cap`, in
/// ascending lexicographic order.
pub fn type_vectors(parts: usize, k: usize, cap: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, parts: usize, left: usize, cap: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == parts {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for t in 0..=left.min(cap) {
            prefix.push(t);
            go(prefix, parts, left - t, cap, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), parts, k, cap, &mut out);
    out
}

/// The type of a set: how many of its elements fall in each part.
pub fn type_of(parts: &[Vec<usize>], set: &[usize]) -> Vec<usize> {
    parts
        .iter()
        .map(|p| set.iter().filter(|e| p.contains(e)).count())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TypePass {
    pub type_vector: Vec<usize>,
    pub targets: Vec<usize>,
    pub color: Color,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TypedExtraction {
    /// `Ξ(z)` for each part, sorted ascending.
    pub subsets: Vec<Vec<usize>>,
    pub passes: Vec<TypePass>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypedOutcome {
    Found(TypedExtraction),
    NotFound { failing_type: Vec<usize>, reason: NotFound },
}

/// Shrinks every part to `n` elements so that all `k`-subsets of the union
/// of the same type share a color.
///
/// Types are processed in ascending lexicographic order. Each pass runs
/// [`ramsey_extract`] on the current candidates of the parts the type
/// touches, first asking to keep them whole and then halving the targets
/// down to `n`, so later passes still have room to shrink.
pub fn multi_type_extract<C: SetColoring + ?Sized>(
    parts: &[Vec<usize>],
    k: usize,
    n: usize,
    coloring: &C,
    strategy: Strategy,
) -> Result<TypedOutcome> {
    if k == 0 || n < k {
        return Err(Error::Contract(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if let Some(small) = parts.iter().position(|p| p.len() < n) {
        return Err(Error::Contract(format!("part {small} has fewer than n={n} elements")));
    }
    let mut candidates: Vec<Vec<usize>> = parts
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.sort_unstable();
            p
        })
        .collect();
    let mut passes = Vec::new();
    for t in type_vectors(parts.len(), k, n) {
        let active: Vec<usize> = (0..t.len()).filter(|&z| t[z] > 0).collect();
        let adapter = |array: &[Vec<usize>]| {
            let mut set: Vec<usize> = array.iter().flatten().copied().collect();
            set.sort_unstable();
            coloring.color(&set)
        };
        let mut outcome = None;
        for halving in 0.. {
            let targets: Vec<usize> = active.iter().map(|&z| (candidates[z].len() >> halving).max(n)).collect();
            let instance = RamseyInstance::new(
                active.iter().map(|&z| candidates[z].clone()).collect(),
                active.iter().map(|&z| t[z]).collect(),
                targets.clone(),
            )?;
            match ramsey_extract(&instance, &adapter, strategy) {
                RamseyOutcome::Found(ex) => {
                    debug_assert!(verify_extraction(&instance, &adapter, &ex));
                    outcome = Some(Ok((ex, targets)));
                    break;
                }
                RamseyOutcome::NotFound(reason) => {
                    outcome = Some(Err(reason));
                    if targets.iter().all(|&x| x == n) {
                        break;
                    }
                }
            }
        }
        match outcome.expect("at least one attempt") {
            Ok((ex, targets)) => {
                for (&z, subset) in active.iter().zip(ex.subsets) {
                    candidates[z] = subset;
                }
                passes.push(TypePass {
                    type_vector: t,
                    targets,
                    color: ex.color,
                });
            }
            Err(reason) => {
                return Ok(TypedOutcome::NotFound {
                    failing_type: t,
                    reason,
                })
            }
        }
    }
    for c in &mut candidates {
        c.truncate(n);
    }
    Ok(TypedOutcome::Found(TypedExtraction {
        subsets: candidates,
        passes,
    }))
}

/// Checks that every `k`-subset of the union is colored by its type alone.
pub fn verify_typed_extraction<C: SetColoring + ?Sized>(subsets: &[Vec<usize>], k: usize, coloring: &C) -> bool {
    let mut union: Vec<usize> = subsets.iter().flatten().copied().collect();
    union.sort_unstable();
    if union.windows(2).any(|w| w[0] == w[1]) {
        return false;
    }
    let mut seen: HashMap<Vec<usize>, Color> = HashMap::new();
    for set in union.into_iter().combinations(k) {
        let c = coloring.color(&set);
        if *seen.entry(type_of(subsets, &set)).or_insert(c) != c {
            return false;
        }
    }
    true
}
