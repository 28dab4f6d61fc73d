//! The compact value space `K`, the max metric on its powers, and
//! ε-diameter partitions used as colorings.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Q};

/// A point of a [`ValueSpace`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    /// Index into the labels of a finite metric space.
    Label(usize),
    /// A real number of an interval-like space.
    Real(Q),
    /// The point at infinity of the compactified ray.
    Infinity,
}

impl Value {
    pub fn real(q: Q) -> Self {
        Value::Real(q)
    }
}

/// A point of the extended half-line, ordered with every finite value below
/// infinity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Ext {
    Finite(Q),
    Infinite,
}

impl Ext {
    pub fn finite(&self) -> Option<&Q> {
        match self {
            Ext::Finite(q) => Some(q),
            Ext::Infinite => None,
        }
    }
}

/// A finite metric space given by labels and a distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetric {
    labels: Vec<String>,
    dist: Vec<Vec<Q>>,
    numeric: Vec<Option<Q>>,
    aliases: BTreeMap<String, usize>,
}

impl FiniteMetric {
    /// Builds the space, merging labels at distance zero into the first of
    /// them so that the stored matrix is a genuine metric.
    pub fn new(labels: Vec<String>, dist: Vec<Vec<Q>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::format("labels", "a finite metric space needs at least one label"));
        }
        if dist.len() != n || dist.iter().any(|row| row.len() != n) {
            return Err(Error::format("dist_matrix", format!("expected a {n}x{n} matrix")));
        }
        let mut seen = BTreeMap::new();
        for (i, label) in labels.iter().enumerate() {
            if seen.insert(label.clone(), i).is_some() {
                return Err(Error::format("labels", format!("duplicate label `{label}`")));
            }
        }
        for i in 0..n {
            if !dist[i][i].is_zero() {
                return Err(Error::format("dist_matrix", format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                if dist[i][j].is_negative() {
                    return Err(Error::format("dist_matrix", format!("entry ({i},{j}) is negative")));
                }
                if dist[i][j] != dist[j][i] {
                    return Err(Error::format("dist_matrix", format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
                for l in 0..n {
                    if dist[i][l] > &dist[i][j] + &dist[j][l] {
                        return Err(Error::format(
                            "dist_matrix",
                            format!("triangle inequality fails for labels {i},{j},{l}"),
                        ));
                    }
                }
            }
        }

        // Collapse the pseudo-metric quotient.
        let mut representative = vec![usize::MAX; n];
        let mut kept = Vec::new();
        for i in 0..n {
            if representative[i] != usize::MAX {
                continue;
            }
            representative[i] = kept.len();
            for j in i + 1..n {
                if representative[j] == usize::MAX && dist[i][j].is_zero() {
                    representative[j] = kept.len();
                }
            }
            kept.push(i);
        }
        let aliases = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), representative[i]))
            .collect();
        let dist = kept
            .iter()
            .map(|&i| kept.iter().map(|&j| dist[i][j].clone()).collect())
            .collect();
        let labels: Vec<String> = kept.iter().map(|&i| labels[i].clone()).collect();
        let numeric = labels.iter().map(|l| rational::parse(l).ok()).collect();
        Ok(FiniteMetric {
            labels,
            dist,
            numeric,
            aliases,
        })
    }

    /// The discrete metric on the given labels.
    pub fn discrete<S: AsRef<str>>(labels: &[S]) -> Self {
        let n = labels.len();
        let dist = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Q::zero() } else { Q::one() }).collect())
            .collect();
        Self::new(labels.iter().map(|l| l.as_ref().to_string()).collect(), dist)
            .expect("discrete metric is valid")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.aliases.get(label).copied()
    }

    pub fn distance(&self, i: usize, j: usize) -> &Q {
        &self.dist[i][j]
    }

    pub fn matrix(&self) -> &[Vec<Q>] {
        &self.dist
    }
}

/// The three concrete compact spaces supported.
#[derive(Clone, Debug, PartialEq)]
pub enum ValueSpace {
    FiniteMetric(FiniteMetric),
    /// `[0, D]` with the absolute-difference metric.
    BoundedInterval { diameter: Q },
    /// `[0, ∞]` metrized through `t ↦ t / (1 + t)`, with `∞ ↦ 1`.
    CompactifiedRay,
}

/// Order-preserving homeomorphism of `[0, ∞]` onto `[0, 1]`.
pub fn ray_chart(v: &Ext) -> Q {
    match v {
        Ext::Finite(t) => t / (Q::one() + t),
        Ext::Infinite => Q::one(),
    }
}

fn ray_chart_inverse(p: &Q) -> Ext {
    if p >= &Q::one() {
        Ext::Infinite
    } else {
        Ext::Finite(p / (Q::one() - p))
    }
}

/// The set of values within ε of a given value.
#[derive(Clone, Debug, PartialEq)]
pub enum Neighborhood {
    /// Labels of a finite metric space, ascending.
    Labels(Vec<usize>),
    /// The closed span `[lo, hi]` of an interval-like space.
    Span { lo: Ext, hi: Ext },
}

impl Neighborhood {
    pub fn contains(&self, v: &Value) -> bool {
        match (self, v) {
            (Neighborhood::Labels(ls), Value::Label(l)) => ls.binary_search(l).is_ok(),
            (Neighborhood::Span { lo, hi }, Value::Real(q)) => {
                let e = Ext::Finite(q.clone());
                lo <= &e && &e <= hi
            }
            (Neighborhood::Span { hi, .. }, Value::Infinity) => *hi == Ext::Infinite,
            _ => false,
        }
    }
}

impl ValueSpace {
    pub fn bounded_interval(diameter: Q) -> Result<Self> {
        if diameter.is_negative() {
            return Err(Error::format("diameter", "must be non-negative"));
        }
        Ok(ValueSpace::BoundedInterval { diameter })
    }

    pub fn finite_metric(&self) -> Option<&FiniteMetric> {
        match self {
            ValueSpace::FiniteMetric(fm) => Some(fm),
            _ => None,
        }
    }

    pub fn check(&self, v: &Value) -> Result<()> {
        let ok = match (self, v) {
            (ValueSpace::FiniteMetric(fm), Value::Label(i)) => *i < fm.len(),
            (ValueSpace::BoundedInterval { diameter }, Value::Real(q)) => {
                !q.is_negative() && q <= diameter
            }
            (ValueSpace::CompactifiedRay, Value::Real(q)) => !q.is_negative(),
            (ValueSpace::CompactifiedRay, Value::Infinity) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("value {} does not belong to {self}", self.render(v))))
        }
    }

    /// Reads a value reference: a label for finite spaces, an exact number
    /// or `inf` otherwise.
    pub fn parse_value(&self, text: &str) -> Result<Value> {
        let v = match self {
            ValueSpace::FiniteMetric(fm) => Value::Label(
                fm.index_of(text)
                    .ok_or_else(|| Error::Domain(format!("unknown label `{text}`")))?,
            ),
            _ if matches!(text.trim(), "inf" | "∞" | "+inf" | "infinity") => Value::Infinity,
            _ => Value::Real(rational::parse(text)?),
        };
        self.check(&v)?;
        Ok(v)
    }

    pub fn render(&self, v: &Value) -> String {
        match (self, v) {
            (ValueSpace::FiniteMetric(fm), Value::Label(i)) if *i < fm.len() => fm.labels[*i].clone(),
            (_, Value::Label(i)) => format!("#{i}"),
            (_, Value::Real(q)) => rational::render(q),
            (_, Value::Infinity) => "inf".to_string(),
        }
    }

    /// Position of a value on the extended half-line, when it has one.
    pub fn numeric(&self, v: &Value) -> Option<Ext> {
        match (self, v) {
            (ValueSpace::FiniteMetric(fm), Value::Label(i)) => {
                fm.numeric.get(*i).cloned().flatten().map(Ext::Finite)
            }
            (_, Value::Real(q)) => Some(Ext::Finite(q.clone())),
            (_, Value::Infinity) => Some(Ext::Infinite),
            _ => None,
        }
    }

    /// Values of the space whose numeric reading is zero.
    pub fn zeros(&self) -> Vec<Value> {
        match self {
            ValueSpace::FiniteMetric(fm) => (0..fm.len())
                .filter(|&i| fm.numeric[i].as_ref().is_some_and(Zero::is_zero))
                .map(Value::Label)
                .collect(),
            _ => vec![Value::Real(Q::zero())],
        }
    }

    pub fn dist(&self, a: &Value, b: &Value) -> Result<Q> {
        self.check(a)?;
        self.check(b)?;
        Ok(match (self, a, b) {
            (ValueSpace::FiniteMetric(fm), Value::Label(i), Value::Label(j)) => fm.dist[*i][*j].clone(),
            (ValueSpace::BoundedInterval { .. }, Value::Real(x), Value::Real(y)) => rational::abs_diff(x, y),
            (ValueSpace::CompactifiedRay, _, _) => {
                let pa = ray_chart(&self.numeric(a).expect("ray value"));
                let pb = ray_chart(&self.numeric(b).expect("ray value"));
                rational::abs_diff(&pa, &pb)
            }
            _ => unreachable!("checked membership"),
        })
    }

    /// Max metric on `K^ν`.
    pub fn tuple_dist(&self, u: &[Value], v: &[Value]) -> Result<Q> {
        if u.len() != v.len() || u.is_empty() {
            return Err(Error::Contract(format!(
                "tuple_dist needs equal non-zero lengths, got {} and {}",
                u.len(),
                v.len()
            )));
        }
        let mut best = Q::zero();
        for (a, b) in u.iter().zip(v) {
            let d = self.dist(a, b)?;
            if d > best {
                best = d;
            }
        }
        Ok(best)
    }

    /// All values within distance `eps` of `v` (closed ball).
    pub fn neighborhood(&self, v: &Value, eps: &Q) -> Neighborhood {
        match self {
            ValueSpace::FiniteMetric(fm) => {
                let Value::Label(i) = v else {
                    return Neighborhood::Labels(Vec::new());
                };
                Neighborhood::Labels((0..fm.len()).filter(|&j| &fm.dist[*i][j] <= eps).collect())
            }
            ValueSpace::BoundedInterval { diameter } => {
                let Value::Real(x) = v else {
                    return Neighborhood::Labels(Vec::new());
                };
                let lo = (x - eps).max(Q::zero());
                let hi = (x + eps).min(diameter.clone());
                Neighborhood::Span {
                    lo: Ext::Finite(lo),
                    hi: Ext::Finite(hi),
                }
            }
            ValueSpace::CompactifiedRay => {
                let Some(e) = self.numeric(v) else {
                    return Neighborhood::Labels(Vec::new());
                };
                let p = ray_chart(&e);
                let lo = (&p - eps).max(Q::zero());
                let hi = (&p + eps).min(Q::one());
                Neighborhood::Span {
                    lo: ray_chart_inverse(&lo),
                    hi: ray_chart_inverse(&hi),
                }
            }
        }
    }

    /// Partition into cells of diameter strictly below `epsilon`.
    ///
    /// Interval-like spaces use half-open bins of width `epsilon / 2` (on the
    /// chart image for the ray); finite spaces use a greedy clique cover in
    /// label order, which degenerates to singletons once `epsilon` is at most
    /// the smallest positive distance.
    pub fn epsilon_partition(&self, epsilon: &Q) -> Result<CellPartition> {
        if !epsilon.is_positive() {
            return Err(Error::Contract("epsilon must be positive".into()));
        }
        let cells = match self {
            ValueSpace::FiniteMetric(fm) => {
                let n = fm.len();
                let mut of_label = vec![usize::MAX; n];
                let mut members: Vec<Vec<usize>> = Vec::new();
                for i in 0..n {
                    if of_label[i] != usize::MAX {
                        continue;
                    }
                    let mut cell = vec![i];
                    #[allow(clippy::needless_range_loop)]
                    for j in i + 1..n {
                        if of_label[j] == usize::MAX && cell.iter().all(|&c| &fm.dist[c][j] < epsilon) {
                            cell.push(j);
                        }
                    }
                    for &c in &cell {
                        of_label[c] = members.len();
                    }
                    members.push(cell);
                }
                Cells::Groups { of_label, members }
            }
            ValueSpace::BoundedInterval { diameter } => Cells::bins(diameter, epsilon, false),
            ValueSpace::CompactifiedRay => Cells::bins(&Q::one(), epsilon, true),
        };
        Ok(CellPartition {
            epsilon: epsilon.clone(),
            cells,
            space: self.clone(),
        })
    }
}

impl fmt::Display for ValueSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueSpace::FiniteMetric(fm) => write!(f, "finite metric {{{}}}", fm.labels.join(",")),
            ValueSpace::BoundedInterval { diameter } => write!(f, "[0, {}]", rational::render(diameter)),
            ValueSpace::CompactifiedRay => write!(f, "[0, inf]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Cells {
    Bins { width: Q, count: usize, charted: bool },
    Groups { of_label: Vec<usize>, members: Vec<Vec<usize>> },
}

impl Cells {
    fn bins(extent: &Q, epsilon: &Q, charted: bool) -> Self {
        let width = epsilon / rational::int(2);
        let ratio = extent / &width;
        let count = rational::floor_to_u64(&ratio.ceil()).max(1) as usize;
        Cells::Bins { width, count, charted }
    }
}

/// Description of a single partition cell.
#[derive(Clone, Debug, PartialEq)]
pub enum CellDescriptor {
    /// Values whose (charted) coordinate lies in `[lo, hi)`; the last bin is
    /// closed on the right.
    Bin { lo: Q, hi: Q },
    Labels(Vec<String>),
}

pub type CellId = usize;

/// A finite partition of a value space into cells of diameter `< epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPartition {
    epsilon: Q,
    cells: Cells,
    space: ValueSpace,
}

impl CellPartition {
    pub fn epsilon(&self) -> &Q {
        &self.epsilon
    }

    pub fn cell_count(&self) -> usize {
        match &self.cells {
            Cells::Bins { count, .. } => *count,
            Cells::Groups { members, .. } => members.len(),
        }
    }

    pub fn cells(&self) -> Vec<CellDescriptor> {
        match &self.cells {
            Cells::Bins { width, count, .. } => (0..*count)
                .map(|s| CellDescriptor::Bin {
                    lo: width * rational::int(s as i64),
                    hi: width * rational::int(s as i64 + 1),
                })
                .collect(),
            Cells::Groups { members, .. } => {
                let fm = self.space.finite_metric().expect("groups come from finite spaces");
                members
                    .iter()
                    .map(|m| CellDescriptor::Labels(m.iter().map(|&i| fm.labels[i].clone()).collect()))
                    .collect()
            }
        }
    }

    pub fn cell_of(&self, v: &Value) -> Result<CellId> {
        self.space.check(v)?;
        Ok(match &self.cells {
            Cells::Groups { of_label, .. } => match v {
                Value::Label(i) => of_label[*i],
                _ => unreachable!("checked membership"),
            },
            Cells::Bins { width, count, charted } => {
                let coord = match (charted, v) {
                    (false, Value::Real(q)) => q.clone(),
                    (true, _) => ray_chart(&self.space.numeric(v).expect("ray value")),
                    _ => unreachable!("checked membership"),
                };
                let index = rational::floor_to_u64(&(coord / width)) as usize;
                index.min(count - 1)
            }
        })
    }
}
