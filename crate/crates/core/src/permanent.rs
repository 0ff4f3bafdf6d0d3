//! Matrix permanents: Ryser and Glynn formulas with Gray-code iteration,
//! plus the factorial-time reference used as a test oracle.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unitary::ComplexMatrix;

/// Largest order accepted by the Gray-code algorithms.
pub const GRAY_CODE_LIMIT: usize = 30;
/// Largest order accepted by the permutation-sum oracle.
pub const NAIVE_LIMIT: usize = 9;
/// From this order on, Gray-code sums use compensated accumulation.
const COMPENSATED_FROM: usize = 16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermanentAlgorithm {
    Naive,
    Ryser,
    Glynn,
}

impl PermanentAlgorithm {
    pub fn limit(self) -> usize {
        match self {
            PermanentAlgorithm::Naive => NAIVE_LIMIT,
            _ => GRAY_CODE_LIMIT,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PermanentAlgorithm::Naive => "naive",
            PermanentAlgorithm::Ryser => "ryser",
            PermanentAlgorithm::Glynn => "glynn",
        }
    }
}

impl std::str::FromStr for PermanentAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "ryser" => Ok(Self::Ryser),
            "glynn" => Ok(Self::Glynn),
            other => Err(Error::InvalidInput(format!("unknown permanent algorithm {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PermanentValue {
    pub value: Complex64,
    pub algorithm: PermanentAlgorithm,
}

/// Neumaier-compensated complex sum.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    sum: Complex64,
    carry: Complex64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: Complex64) {
        self.sum.re = two_sum(self.sum.re, x.re, &mut self.carry.re);
        self.sum.im = two_sum(self.sum.im, x.im, &mut self.carry.im);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

#[inline]
fn two_sum(s: f64, x: f64, carry: &mut f64) -> f64 {
    let t = s + x;
    if s.abs() >= x.abs() {
        *carry += (s - t) + x;
    } else {
        *carry += (x - t) + s;
    }
    t
}

pub fn permanent(a: &ComplexMatrix, algorithm: PermanentAlgorithm) -> Result<PermanentValue> {
    if !a.is_square() {
        return Err(Error::InvalidShape(format!(
            "permanent needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if n > algorithm.limit() {
        return Err(Error::SizeLimit {
            algorithm: algorithm.name(),
            n,
            limit: algorithm.limit(),
        });
    }
    let value = match algorithm {
        PermanentAlgorithm::Naive => naive(a),
        PermanentAlgorithm::Ryser => ryser(a),
        PermanentAlgorithm::Glynn => glynn(a),
    };
    Ok(PermanentValue { value, algorithm })
}

/// Permanent of `a` with row `i` repeated `row_mult[i]` times and column `j`
/// repeated `col_mult[j]` times.
pub fn permanent_with_multiplicity(
    a: &ComplexMatrix,
    row_mult: &[usize],
    col_mult: &[usize],
) -> Result<PermanentValue> {
    if row_mult.len() != a.rows() || col_mult.len() != a.cols() {
        return Err(Error::InvalidMultiset(format!(
            "multiplicities ({}, {}) do not match a {}x{} matrix",
            row_mult.len(),
            col_mult.len(),
            a.rows(),
            a.cols()
        )));
    }
    let n_rows: usize = row_mult.iter().sum();
    let n_cols: usize = col_mult.iter().sum();
    if n_rows != n_cols {
        return Err(Error::InvalidMultiset(format!(
            "row multiplicities sum to {n_rows}, column multiplicities to {n_cols}"
        )));
    }
    if n_rows > GRAY_CODE_LIMIT {
        return Err(Error::SizeLimit {
            algorithm: "glynn",
            n: n_rows,
            limit: GRAY_CODE_LIMIT,
        });
    }
    let rows = expand(row_mult);
    let cols = expand(col_mult);
    Ok(PermanentValue {
        value: glynn(&a.select(&rows, &cols)),
        algorithm: PermanentAlgorithm::Glynn,
    })
}

pub(crate) fn expand(mult: &[usize]) -> Vec<usize> {
    mult.iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat_n(i, k))
        .collect()
}

/// Sum over all permutations; the O(n·n!) reference.
fn naive(a: &ComplexMatrix) -> Complex64 {
    fn rec(a: &ComplexMatrix, row: usize, used: u32, acc: Complex64, total: &mut Complex64) {
        let n = a.rows();
        if row == n {
            *total += acc;
            return;
        }
        for c in 0..n {
            if used & (1 << c) == 0 {
                rec(a, row + 1, used | (1 << c), acc * a[(row, c)], total);
            }
        }
    }
    let mut total = ZERO;
    rec(a, 0, 0, ONE, &mut total);
    total
}

/// Ryser's inclusion-exclusion formula over column subsets visited in Gray
/// code order, so each step adds or removes one column from the row sums.
fn ryser(a: &ComplexMatrix) -> Complex64 {
    let n = a.rows();
    if n == 0 {
        return ONE;
    }
    let mut row_sums = vec![ZERO; n];
    let mut plain = ZERO;
    let mut comp = CompensatedSum::default();
    let compensated = n >= COMPENSATED_FROM;
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let bit = k.trailing_zeros() as usize;
        gray ^= 1 << bit;
        let adding = gray & (1 << bit) != 0;
        for (r, s) in row_sums.iter_mut().enumerate() {
            if adding {
                *s += a[(r, bit)];
            } else {
                *s -= a[(r, bit)];
            }
        }
        let mut prod = row_sums[0];
        for s in &row_sums[1..] {
            prod *= s;
        }
        // (-1)^{n - |S|}
        if (n as u32 - gray.count_ones()) % 2 == 1 {
            prod = -prod;
        }
        if compensated {
            comp.add(prod);
        } else {
            plain += prod;
        }
    }
    if compensated {
        comp.value()
    } else {
        plain
    }
}

/// Glynn's formula with the first sign fixed to +1 and the remaining n-1
/// signs flipped in Gray code order.
pub(crate) fn glynn(a: &ComplexMatrix) -> Complex64 {
    let n = a.rows();
    match n {
        0 => return ONE,
        1 => return a[(0, 0)],
        2 => return a[(0, 0)] * a[(1, 1)] + a[(0, 1)] * a[(1, 0)],
        _ => {}
    }
    // col_sums[j] = sum_i delta_i a_ij, starting from delta = (+1, ..., +1).
    let mut col_sums: Vec<Complex64> = (0..n).map(|c| (0..n).map(|r| a[(r, c)]).sum()).collect();
    let mut delta = vec![true; n];
    let mut positive = true;
    let compensated = n >= COMPENSATED_FROM;
    let first: Complex64 = col_sums.iter().product();
    let mut plain = first;
    let mut comp = CompensatedSum::default();
    comp.add(first);
    for k in 1u64..(1u64 << (n - 1)) {
        let row = k.trailing_zeros() as usize + 1;
        let factor = if delta[row] { -2.0 } else { 2.0 };
        delta[row] = !delta[row];
        for (c, s) in col_sums.iter_mut().enumerate() {
            *s += a[(row, c)] * factor;
        }
        positive = !positive;
        let mut prod = col_sums[0];
        for s in &col_sums[1..] {
            prod *= s;
        }
        if !positive {
            prod = -prod;
        }
        if compensated {
            comp.add(prod);
        } else {
            plain += prod;
        }
    }
    let total = if compensated { comp.value() } else { plain };
    total / (1u64 << (n - 1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = rng::seeded(seed);
        ComplexMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn rel_err(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn identity_has_permanent_one() {
        for algo in [PermanentAlgorithm::Naive, PermanentAlgorithm::Ryser, PermanentAlgorithm::Glynn] {
            let p = permanent(&ComplexMatrix::identity(3), algo).unwrap();
            assert!((p.value - ONE).norm() < 1e-15);
            assert_eq!(p.algorithm, algo);
        }
    }

    #[test]
    fn all_ones_gives_factorial() {
        let j = ComplexMatrix::from_fn(4, 4, |_, _| ONE);
        for algo in [PermanentAlgorithm::Naive, PermanentAlgorithm::Ryser, PermanentAlgorithm::Glynn] {
            let p = permanent(&j, algo).unwrap();
            assert!((p.value - Complex64::new(24.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn algorithms_agree_on_random_6x6() {
        let a = random_matrix(6, 99);
        let oracle = permanent(&a, PermanentAlgorithm::Naive).unwrap().value;
        let r = permanent(&a, PermanentAlgorithm::Ryser).unwrap().value;
        let g = permanent(&a, PermanentAlgorithm::Glynn).unwrap().value;
        assert!(rel_err(r, oracle) < 1e-11);
        assert!(rel_err(g, oracle) < 1e-11);
    }

    #[test]
    fn compensated_path_matches_plain_at_n16() {
        let a = random_matrix(16, 5);
        let r = ryser(&a);
        let g = glynn(&a);
        assert!(rel_err(r, g) < 1e-9, "{r} vs {g}");
    }

    #[test]
    fn shape_and_size_errors() {
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            permanent(&rect, PermanentAlgorithm::Ryser),
            Err(Error::InvalidShape(_))
        ));
        let big = ComplexMatrix::identity(10);
        assert!(matches!(
            permanent(&big, PermanentAlgorithm::Naive),
            Err(Error::SizeLimit { limit: 9, .. })
        ));
        let huge = ComplexMatrix::identity(31);
        assert!(matches!(
            permanent(&huge, PermanentAlgorithm::Glynn),
            Err(Error::SizeLimit { limit: 30, .. })
        ));
    }

    #[test]
    fn multiplicity_single_entry() {
        let a = Complex64::new(0.3, -0.4);
        let m = ComplexMatrix::new(1, 1, vec![a]).unwrap();
        let p = permanent_with_multiplicity(&m, &[2], &[2]).unwrap();
        assert!((p.value - 2.0 * a * a).norm() < 1e-15);
    }

    #[test]
    fn multiplicity_unit_columns_select_rows() {
        let a = random_matrix(4, 7);
        let p = permanent_with_multiplicity(&a, &[1, 0, 1, 1], &[1, 1, 1, 0]).unwrap().value;
        let sub = a.select(&[0, 2, 3], &[0, 1, 2]);
        let q = permanent(&sub, PermanentAlgorithm::Naive).unwrap().value;
        assert!(rel_err(p, q) < 1e-12);
    }

    #[test]
    fn multiplicity_matches_explicit_expansion() {
        let a = random_matrix(3, 17);
        let p = permanent_with_multiplicity(&a, &[1, 2, 0], &[1, 1, 1]).unwrap().value;
        let expanded = a.select(&[0, 1, 1], &[0, 1, 2]);
        let oracle = permanent(&expanded, PermanentAlgorithm::Naive).unwrap().value;
        assert!(rel_err(p, oracle) < 1e-12);
    }

    #[test]
    fn multiplicity_sums_must_match() {
        let a = random_matrix(2, 1);
        assert!(matches!(
            permanent_with_multiplicity(&a, &[1, 1], &[2, 1]),
            Err(Error::InvalidMultiset(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn row_scaling_is_linear(seed in any::<u64>(), n in 1usize..7, row in 0usize..6, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let row = row % n;
            let a = random_matrix(n, seed);
            let c = Complex64::new(re, im);
            let mut b = a.clone();
            b.scale_row(row, c);
            let pa = permanent(&a, PermanentAlgorithm::Glynn).unwrap().value;
            let pb = permanent(&b, PermanentAlgorithm::Ryser).unwrap().value;
            prop_assert!((pb - pa * c).norm() <= 1e-12 * (pa * c).norm().max(1e-12));
        }

        #[test]
        fn transpose_invariance(seed in any::<u64>(), n in 1usize..8) {
            let a = random_matrix(n, seed);
            let p = permanent(&a, PermanentAlgorithm::Ryser).unwrap().value;
            let q = permanent(&a.transpose(), PermanentAlgorithm::Glynn).unwrap().value;
            prop_assert!(rel_err(q, p) < 1e-11);
        }

        #[test]
        fn algorithms_equivalent_up_to_seven(seed in any::<u64>(), n in 0usize..8) {
            let a = random_matrix(n, seed);
            let oracle = permanent(&a, PermanentAlgorithm::Naive).unwrap().value;
            let r = permanent(&a, PermanentAlgorithm::Ryser).unwrap().value;
            let g = permanent(&a, PermanentAlgorithm::Glynn).unwrap().value;
            prop_assert!(rel_err(r, oracle) < 1e-11);
            prop_assert!(rel_err(g, oracle) < 1e-11);
        }
    }
}
