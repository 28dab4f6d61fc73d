//! Exact density masses of step kernels and density-tuple classification.
//!
//! For a resolution `m` the mass of an open target `U` at a tuple `x` is
//! `m^k · μ(f^{-1}(U) ∩ Π Δ_m(x_i))`. Exception pieces are null and never
//! contribute, so masses only depend on the base grid.

use std::collections::BTreeSet;

use itertools::Itertools;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{block_of, StepKernel};
use crate::rational::Q;
use crate::value_space::{CellId, CellPartition, Value, ValueSpace};

/// Open subsets of the value space used as density targets.
#[derive(Clone, Debug)]
pub enum Target {
    /// The open ball `{w : dist(w, center) < radius}`.
    Ball { center: Value, radius: Q },
    /// A union of partition cells.
    Cells { partition: CellPartition, cells: BTreeSet<CellId> },
}

impl Target {
    pub fn contains(&self, space: &ValueSpace, v: &Value) -> Result<bool> {
        Ok(match self {
            Target::Ball { center, radius } => &space.dist(center, v)? < radius,
            Target::Cells { partition, cells } => cells.contains(&partition.cell_of(v)?),
        })
    }
}

fn q(n: u128) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Base blocks overlapping `[s/m, (s+1)/m)` with the overlap expressed as a
/// fraction of the cell.
fn overlaps(s: u64, m: u64, m0: u64) -> Vec<(u64, Q)> {
    let (s, m, m0) = (s as u128, m as u128, m0 as u128);
    let first = s * m0 / m;
    let last = ((s + 1) * m0).div_ceil(m) - 1;
    (first..=last)
        .filter_map(|t| {
            // Work in units of 1/(m·m0).
            let lo = (t * m).max(s * m0);
            let hi = ((t + 1) * m).min((s + 1) * m0);
            (hi > lo).then(|| (t as u64, Q::new(BigInt::from(hi - lo), BigInt::from(m0))))
        })
        .collect()
}

/// `m^k · μ(f^{-1}(target) ∩ Π Δ_m(x_i))`, exactly.
pub fn density_mass(kernel: &StepKernel, point: &[Q], target: &Target, m: u64) -> Result<Q> {
    if m == 0 {
        return Err(Error::Contract("resolution must be positive".into()));
    }
    kernel.base_value(point)?;
    let per_coord: Vec<Vec<(u64, Q)>> = point
        .iter()
        .map(|x| overlaps(block_of(x, m), m, kernel.resolution()))
        .collect();
    let mut mass = Q::zero();
    for combo in per_coord.iter().map(|c| c.iter()).multi_cartesian_product() {
        let blocks: Vec<u64> = combo.iter().map(|(t, _)| *t).collect();
        if target.contains(kernel.space(), kernel.base_at(&blocks))? {
            mass += combo.iter().fold(Q::one(), |acc, (_, w)| acc * w);
        }
    }
    Ok(mass)
}

/// How a tuple relates to the full-measure set of density tuples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityClass {
    /// Every neighbourhood of the tuple carries mass 1 near its value.
    Density,
    /// The pointwise value sits on an exception piece far from the base value.
    Exceptional,
    /// A coordinate lies on an interior grid line and the neighbouring
    /// blocks disagree with the value.
    Boundary,
}

/// Aligned resolutions `m0·2^j ≤ m_max` (always including `m0`).
pub fn aligned_resolutions(m0: u64, m_max: u64) -> Vec<u64> {
    let mut out = vec![m0];
    let mut m = m0;
    while let Some(next) = m.checked_mul(2).filter(|&n| n <= m_max) {
        out.push(next);
        m = next;
    }
    out
}

/// Classifies `point` with the ε-ball around its value as target.
///
/// The aligned masses decide whether the value agrees with its own block.
/// A coordinate `x = t/m0` with `t ≥ 1` also has the block to its left
/// inside every symmetric neighbourhood; unaligned cells `Δ_m(x)` keep a
/// fixed positive share there, so the mass only tends to 1 when those
/// neighbouring blocks lie in the ball as well.
pub fn classify_tuple(kernel: &StepKernel, point: &[Q], epsilon: &Q, m_max: u64) -> Result<DensityClass> {
    if !epsilon.is_positive() {
        return Err(Error::Contract("epsilon must be positive".into()));
    }
    let value = kernel.eval(point)?;
    let target = Target::Ball {
        center: value,
        radius: epsilon.clone(),
    };
    let m0 = kernel.resolution();
    for m in aligned_resolutions(m0, m_max) {
        if !density_mass(kernel, point, &target, m)?.is_one() {
            return Ok(DensityClass::Exceptional);
        }
    }
    let blocks = kernel.blocks_of(point);
    let on_line: Vec<usize> = point
        .iter()
        .enumerate()
        .filter(|(_, x)| x.is_positive() && (*x * q(m0 as u128)).is_integer())
        .map(|(i, _)| i)
        .collect();
    for shifted in on_line.iter().copied().powerset().skip(1) {
        let mut b = blocks.clone();
        for i in shifted {
            b[i] -= 1;
        }
        if !target.contains(kernel.space(), kernel.base_at(&b))? {
            return Ok(DensityClass::Boundary);
        }
    }
    Ok(DensityClass::Density)
}

pub fn is_density_tuple(kernel: &StepKernel, point: &[Q], epsilon: &Q, m_max: u64) -> Result<bool> {
    Ok(classify_tuple(kernel, point, epsilon, m_max)? == DensityClass::Density)
}
