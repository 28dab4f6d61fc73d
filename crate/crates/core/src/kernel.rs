//! Step-function kernels on `[0,1)^k` with explicit null-set exceptions.

use itertools::Itertools;
use num_bigint::BigInt;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rational::{self, Q};
use crate::value_space::{Value, ValueSpace};

/// One coordinate-equality condition of an exception piece. Coordinates are
/// zero-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PieceAtom {
    /// `x_coord = value`.
    Fixed { coord: usize, value: Q },
    /// `x_a = x_b` with `a != b`.
    Tied { a: usize, b: usize },
}

impl PieceAtom {
    fn holds(&self, point: &[Q]) -> bool {
        match self {
            PieceAtom::Fixed { coord, value } => &point[*coord] == value,
            PieceAtom::Tied { a, b } => point[*a] == point[*b],
        }
    }
}

/// A Lebesgue-null set (a conjunction of coordinate equalities) on which the
/// kernel takes an overriding value.
#[derive(Clone, Debug, PartialEq)]
pub struct ExceptionPiece {
    pub atoms: Vec<PieceAtom>,
    pub value: Value,
}

impl ExceptionPiece {
    pub fn contains(&self, point: &[Q]) -> bool {
        self.atoms.iter().all(|a| a.holds(point))
    }
}

/// Block index `s = floor(x·m)` of the half-open cell `[s/m, (s+1)/m)` containing `x`.
pub fn block_of(x: &Q, m: u64) -> u64 {
    rational::floor_to_u64(&(x * Q::from_integer(BigInt::from(m))))
}

/// Uniform point of the cell of resolution `m` containing `x`.
pub fn sample_in_cell<R: Rng + ?Sized>(x: &Q, m: u64, rng: &mut R) -> Q {
    let s = Q::from_integer(BigInt::from(block_of(x, m)));
    (s + rational::unit_draw(rng)) / Q::from_integer(BigInt::from(m))
}

/// A measurable `K`-valued function on `[0,1)^k`: piecewise constant on the
/// `m0^k` grid, overridden on a finite list of null pieces (first match wins).
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    arity: usize,
    resolution: u64,
    space: ValueSpace,
    base: Vec<Value>,
    exceptions: Vec<ExceptionPiece>,
    symmetric_base: bool,
}

impl StepKernel {
    /// `base` is row-major: the first coordinate's block index is the most
    /// significant digit.
    pub fn new(
        arity: usize,
        resolution: u64,
        space: ValueSpace,
        base: Vec<Value>,
        exceptions: Vec<ExceptionPiece>,
        symmetric_base: bool,
    ) -> Result<Self> {
        if arity == 0 {
            return Err(Error::format("arity", "must be positive"));
        }
        if resolution == 0 {
            return Err(Error::format("resolution", "must be positive"));
        }
        let blocks = (resolution as u128)
            .checked_pow(arity as u32)
            .filter(|&b| b <= 1 << 24)
            .ok_or_else(|| Error::format("resolution", "resolution^arity is too large"))?;
        if base.len() as u128 != blocks {
            return Err(Error::format(
                "base",
                format!("expected {blocks} block values, found {}", base.len()),
            ));
        }
        for (i, v) in base.iter().enumerate() {
            space
                .check(v)
                .map_err(|e| Error::format(format!("base[{i}]"), e.to_string()))?;
        }
        let kernel = StepKernel {
            arity,
            resolution,
            space,
            base,
            exceptions: Vec::new(),
            symmetric_base,
        };
        if symmetric_base {
            if let Some(blocks) = kernel.asymmetric_block() {
                return Err(Error::format(
                    "symmetric_base",
                    format!("base differs under a permutation of block {blocks:?}"),
                ));
            }
        }
        kernel.with_exceptions(exceptions)
    }

    /// Replaces the exception list, validating each piece.
    pub fn with_exceptions(mut self, exceptions: Vec<ExceptionPiece>) -> Result<Self> {
        for (p, piece) in exceptions.iter().enumerate() {
            let field = |i: usize| format!("exceptions[{p}].atoms[{i}]");
            if piece.atoms.is_empty() {
                return Err(Error::format(format!("exceptions[{p}].atoms"), "a piece needs at least one atom"));
            }
            for (i, atom) in piece.atoms.iter().enumerate() {
                match atom {
                    PieceAtom::Fixed { coord, value } => {
                        if *coord >= self.arity {
                            return Err(Error::format(field(i), "coordinate out of range"));
                        }
                        if !rational::in_unit_interval(value) {
                            return Err(Error::format(field(i), "constant must lie in [0,1)"));
                        }
                    }
                    PieceAtom::Tied { a, b } => {
                        if *a >= self.arity || *b >= self.arity || a == b {
                            return Err(Error::format(field(i), "needs two different in-range coordinates"));
                        }
                    }
                }
            }
            self.space
                .check(&piece.value)
                .map_err(|e| Error::format(format!("exceptions[{p}].value"), e.to_string()))?;
        }
        self.exceptions = exceptions;
        Ok(self)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn resolution(&self) -> u64 {
        self.resolution
    }

    pub fn space(&self) -> &ValueSpace {
        &self.space
    }

    pub fn base(&self) -> &[Value] {
        &self.base
    }

    pub fn exceptions(&self) -> &[ExceptionPiece] {
        &self.exceptions
    }

    pub fn symmetric_base(&self) -> bool {
        self.symmetric_base
    }

    /// Every constant mentioned by an exception atom.
    pub fn exception_constants(&self) -> Vec<Q> {
        self.exceptions
            .iter()
            .flat_map(|p| &p.atoms)
            .filter_map(|a| match a {
                PieceAtom::Fixed { value, .. } => Some(value.clone()),
                PieceAtom::Tied { .. } => None,
            })
            .sorted()
            .dedup()
            .collect()
    }

    pub fn base_at(&self, blocks: &[u64]) -> &Value {
        let index = blocks
            .iter()
            .fold(0u64, |acc, &s| acc * self.resolution + s);
        &self.base[index as usize]
    }

    fn check_point(&self, point: &[Q]) -> Result<()> {
        if point.len() != self.arity {
            return Err(Error::Contract(format!(
                "expected a point with {} coordinates, got {}",
                self.arity,
                point.len()
            )));
        }
        if let Some(x) = point.iter().find(|x| !rational::in_unit_interval(x)) {
            return Err(Error::Domain(format!("coordinate {} is outside [0,1)", rational::render(x))));
        }
        Ok(())
    }

    pub fn blocks_of(&self, point: &[Q]) -> Vec<u64> {
        point.iter().map(|x| block_of(x, self.resolution)).collect()
    }

    /// The base value of the block containing `point`, ignoring exceptions.
    pub fn base_value(&self, point: &[Q]) -> Result<&Value> {
        self.check_point(point)?;
        Ok(self.base_at(&self.blocks_of(point)))
    }

    /// The first exception piece containing `point`, if any.
    pub fn exception_at(&self, point: &[Q]) -> Option<&ExceptionPiece> {
        self.exceptions.iter().find(|p| p.contains(point))
    }

    pub fn eval(&self, point: &[Q]) -> Result<Value> {
        self.check_point(point)?;
        Ok(match self.exception_at(point) {
            Some(piece) => piece.value.clone(),
            None => self.base_at(&self.blocks_of(point)).clone(),
        })
    }

    /// A block vector whose base value changes under some coordinate
    /// permutation, if any.
    pub fn asymmetric_block(&self) -> Option<Vec<u64>> {
        (0..self.arity)
            .map(|_| 0..self.resolution)
            .multi_cartesian_product()
            .find(|blocks| {
                let v = self.base_at(blocks);
                blocks
                    .iter()
                    .copied()
                    .permutations(self.arity)
                    .any(|perm| self.base_at(&perm) != v)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, parse, ratio};
    use crate::value_space::FiniteMetric;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits() -> ValueSpace {
        ValueSpace::FiniteMetric(FiniteMetric::discrete(&["0", "1"]))
    }

    fn xor_kernel(exceptions: Vec<ExceptionPiece>) -> StepKernel {
        let l = Value::Label;
        StepKernel::new(2, 2, bits(), vec![l(0), l(1), l(1), l(0)], exceptions, true).unwrap()
    }

    fn pt(xs: &[&str]) -> Vec<Q> {
        xs.iter().map(|x| parse(x).unwrap()).collect()
    }

    #[test]
    fn eval_examples() {
        let k = xor_kernel(vec![]);
        assert_eq!(k.eval(&pt(&["0.2", "0.7"])).unwrap(), Value::Label(1));

        let k = xor_kernel(vec![ExceptionPiece {
            atoms: vec![
                PieceAtom::Fixed { coord: 0, value: ratio(1, 5) },
                PieceAtom::Fixed { coord: 1, value: ratio(7, 10) },
            ],
            value: Value::Label(0),
        }]);
        assert_eq!(k.eval(&pt(&["0.2", "0.7"])).unwrap(), Value::Label(0));
        assert_eq!(k.eval(&pt(&["0.7", "0.2"])).unwrap(), Value::Label(1));

        let k = xor_kernel(vec![ExceptionPiece {
            atoms: vec![PieceAtom::Tied { a: 0, b: 1 }],
            value: Value::Label(1),
        }]);
        assert_eq!(k.eval(&pt(&["0.3", "0.3"])).unwrap(), Value::Label(1));
    }

    #[test]
    fn first_matching_piece_wins() {
        let k = xor_kernel(vec![
            ExceptionPiece { atoms: vec![PieceAtom::Fixed { coord: 0, value: ratio(1, 10) }], value: Value::Label(1) },
            ExceptionPiece { atoms: vec![PieceAtom::Tied { a: 0, b: 1 }], value: Value::Label(0) },
        ]);
        assert_eq!(k.eval(&pt(&["0.1", "0.1"])).unwrap(), Value::Label(1));
        assert_eq!(k.eval(&pt(&["0.3", "0.3"])).unwrap(), Value::Label(0));
    }

    #[test]
    fn eval_rejects_out_of_range() {
        let k = xor_kernel(vec![]);
        assert!(matches!(k.eval(&pt(&["1", "0.2"])), Err(Error::Domain(_))));
        assert!(matches!(k.eval(&pt(&["-0.1", "0.2"])), Err(Error::Domain(_))));
        assert!(matches!(k.eval(&pt(&["0.1"])), Err(Error::Contract(_))));
    }

    #[test]
    fn block_of_examples() {
        assert_eq!(block_of(&ratio(1, 2), 4), 2);
        assert_eq!(block_of(&ratio(1, 2), 3), 1);
        assert_eq!(block_of(&ratio(999, 1000), 10), 9);
        assert_eq!(block_of(&int(0), 7), 0);
    }

    #[test]
    fn samples_stay_in_their_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = ratio(3, 10);
        let mut sum = Q::from_integer(0.into());
        for _ in 0..1000 {
            let y = sample_in_cell(&x, 10, &mut rng);
            assert_eq!(block_of(&y, 10), 3);
            sum += y;
        }
        let mean = rational::to_f64(&(sum / int(1000)));
        assert!((mean - 0.35).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| sample_in_cell(&ratio(1, 3), 8, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn constructor_validates() {
        let l = Value::Label;
        assert!(StepKernel::new(2, 2, bits(), vec![l(0); 3], vec![], false).is_err());
        // (0,1) -> 1 but (1,0) -> 0
        assert!(StepKernel::new(2, 2, bits(), vec![l(0), l(1), l(0), l(0)], vec![], true).is_err());
        assert!(StepKernel::new(2, 2, bits(), vec![l(0), l(1), l(0), l(0)], vec![], false).is_ok());
        let bad_piece = |atoms| ExceptionPiece { atoms, value: l(0) };
        let k = xor_kernel(vec![]);
        assert!(k.clone().with_exceptions(vec![bad_piece(vec![])]).is_err());
        assert!(k.clone().with_exceptions(vec![bad_piece(vec![PieceAtom::Tied { a: 1, b: 1 }])]).is_err());
        assert!(k
            .clone()
            .with_exceptions(vec![bad_piece(vec![PieceAtom::Fixed { coord: 2, value: int(0) }])])
            .is_err());
        assert!(k
            .with_exceptions(vec![bad_piece(vec![PieceAtom::Fixed { coord: 0, value: int(1) }])])
            .is_err());
    }

    #[test]
    fn symmetric_three_dimensional_base_is_accepted() {
        // value = number of coordinates in the upper half
        let base: Vec<Value> = (0..8u32).map(|i| Value::Real(int(i.count_ones() as i64))).collect();
        let k = StepKernel::new(3, 2, ValueSpace::BoundedInterval { diameter: int(3) }, base, vec![], true).unwrap();
        let p = pt(&["0.9", "0.1", "0.6"]);
        for perm in p.iter().cloned().permutations(3) {
            assert_eq!(k.eval(&perm).unwrap(), Value::Real(int(2)));
        }
    }

    #[test]
    fn random_points_agree_with_base() {
        let k = xor_kernel(vec![
            ExceptionPiece { atoms: vec![PieceAtom::Tied { a: 0, b: 1 }], value: Value::Label(1) },
            ExceptionPiece { atoms: vec![PieceAtom::Fixed { coord: 1, value: ratio(1, 4) }], value: Value::Label(1) },
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let p = vec![rational::unit_draw(&mut rng), rational::unit_draw(&mut rng)];
            assert_eq!(&k.eval(&p).unwrap(), k.base_value(&p).unwrap());
        }
    }
}
