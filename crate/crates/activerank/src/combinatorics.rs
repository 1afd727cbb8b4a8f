//! Exact counting of realizable rankings and the derived bounds.
//!
//! `Q(n, d)` counts the full-dimensional cells of the arrangement of all
//! pairwise bisectors, equivalently the rankings of `n` embedded objects
//! realizable by some reference point in `R^d`. It satisfies
//! `Q(n, d) = Q(n-1, d) + (n-1) Q(n-1, d-1)` with `Q(1, d) = 1` and
//! `Q(n, 0) = 1`, and collapses to `n!` when `n <= d + 1`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact number of realizable rankings of `n` objects in dimension `d`.
///
/// Computed bottom-up over the recursion with arbitrary-precision
/// integers; exact for any `(n, d)` that fits in memory.
pub fn count_rankings(n: u64, d: u32) -> BigUint {
    if n == 0 {
        return BigUint::zero();
    }
    if d == 0 || n == 1 {
        return BigUint::one();
    }
    if n <= u64::from(d) + 1 {
        return factorial(n);
    }
    // Rolling row over n: row[k] = Q(m, k) for the current m.
    let width = d as usize + 1;
    let mut row = vec![BigUint::one(); width]; // Q(1, k) = 1 for all k
    for m in 2..=n {
        // Update right-to-left so row[k-1] still holds Q(m-1, k-1).
        for k in (1..width).rev() {
            let add = &row[k - 1] * BigUint::from(m - 1);
            row[k] += add;
        }
        // row[0] stays 1: Q(m, 0) = 1.
    }
    row.pop().unwrap()
}

/// `n!` as a big integer.
pub fn factorial(n: u64) -> BigUint {
    let mut acc = BigUint::one();
    for k in 2..=n {
        acc *= BigUint::from(k);
    }
    acc
}

/// Binomial coefficient `C(n, k)` as a big integer.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Base-2 logarithm of a big integer, accurate to f64 precision.
pub fn log2_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 53 {
        return x.to_f64().unwrap().log2();
    }
    let shift = bits - 53;
    let top = (x >> shift).to_f64().unwrap();
    top.log2() + shift as f64
}

/// Information-theoretic floor on the number of pairwise comparisons any
/// algorithm needs: `log2 Q(n, d)` bits, one bit per comparison.
pub fn lower_bound_bits(n: u64, d: u32) -> f64 {
    log2_big(&count_rankings(n, d))
}

/// Advisory sandwich `k1 n^{2d} / (2^d d!) < Q(n,d) < k2 n^{2d} / (2^d d!)`
/// with `k1 = 1`, `k2 = 2`, kept in log2 space so large `(n, d)` stay
/// finite. The constants are asymptotic; treat the bracket as a guide.
#[derive(Debug, Clone, Copy)]
pub struct CountBounds {
    pub log2_lower: f64,
    pub log2_upper: f64,
}

impl CountBounds {
    /// Linear-space bounds; may overflow to infinity for large `(n, d)`.
    pub fn linear(&self) -> (f64, f64) {
        (self.log2_lower.exp2(), self.log2_upper.exp2())
    }
}

/// See [`CountBounds`]. Errors when `n <= d + 1` (the factorial regime,
/// where the polynomial sandwich does not apply).
pub fn count_bounds(n: u64, d: u32) -> Result<CountBounds> {
    if n <= u64::from(d) + 1 {
        return Err(Error::invalid(format!(
            "count_bounds requires n > d + 1 (got n = {n}, d = {d})"
        )));
    }
    let log2_base = 2.0 * f64::from(d) * (n as f64).log2() - f64::from(d) - log2_factorial(d);
    Ok(CountBounds {
        log2_lower: log2_base,
        log2_upper: log2_base + 1.0,
    })
}

fn log2_factorial(d: u32) -> f64 {
    (2..=u64::from(d)).map(|k| (k as f64).log2()).sum()
}

/// Probability that `m` pairwise queries drawn uniformly without
/// replacement from `total` determine a unique ranking in dimension `d`,
/// reported exactly as `C(m, d) / C(total, d)` together with the closed
/// bound `(e m / total)^d`.
#[derive(Debug, Clone)]
pub struct UniqueProbability {
    pub exact: BigRational,
    pub bound: f64,
}

impl UniqueProbability {
    pub fn exact_f64(&self) -> f64 {
        ratio_to_f64(&self.exact)
    }
}

/// See [`UniqueProbability`]. `m < d` yields an exact zero (fewer queries
/// than any cell has faces); requires `d >= 1` and `m <= total`.
pub fn random_query_unique_prob(m: u64, total: u64, d: u32) -> Result<UniqueProbability> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if m > total {
        return Err(Error::invalid(format!(
            "m = {m} exceeds the number of available queries {total}"
        )));
    }
    if u64::from(d) > total {
        return Err(Error::invalid(format!(
            "d = {d} exceeds the number of available queries {total}"
        )));
    }
    let bound = (std::f64::consts::E * m as f64 / total as f64).powi(d as i32);
    let exact = if m < u64::from(d) {
        BigRational::zero()
    } else {
        BigRational::new(
            binomial(m, u64::from(d)).into(),
            binomial(total, u64::from(d)).into(),
        )
    };
    Ok(UniqueProbability { exact, bound })
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    // Scale through log space so huge numerators/denominators stay finite.
    if r.is_zero() {
        return 0.0;
    }
    let n = r.numer().to_biguint().expect("probabilities are nonnegative");
    let d = r.denom().to_biguint().expect("denominator is positive");
    (log2_big(&n) - log2_big(&d)).exp2()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: u64, d: u32) -> u64 {
        count_rankings(n, d).to_u64().unwrap()
    }

    #[test]
    fn base_cases() {
        assert_eq!(q(1, 5), 1);
        assert_eq!(q(7, 0), 1);
    }

    #[test]
    fn factorial_regime() {
        // n <= d + 1 gives n! rankings.
        assert_eq!(q(3, 2), 6);
        assert_eq!(q(4, 3), 24);
        assert_eq!(q(5, 10), 120);
    }

    #[test]
    fn hand_unrolled_recursion() {
        // Q(4,2) = Q(3,2) + 3 Q(3,1) = 6 + 3 * 4 = 18.
        assert_eq!(q(3, 1), 4);
        assert_eq!(q(4, 2), 18);
    }

    #[test]
    fn line_arrangement_closed_form() {
        // Q(n,1) = 1 + n(n-1)/2: each of the C(n,2) midpoints splits the line.
        for n in 2..=1000u64 {
            assert_eq!(
                count_rankings(n, 1),
                BigUint::from(1 + n * (n - 1) / 2),
                "Q({n},1)"
            );
        }
    }

    #[test]
    fn monotone_in_n_and_d_and_below_factorial() {
        for n in 2..=9u64 {
            for d in 0..=6u32 {
                let here = count_rankings(n, d);
                assert!(here <= count_rankings(n + 1, d));
                assert!(here <= count_rankings(n, d + 1));
                assert!(here <= factorial(n));
            }
        }
    }

    #[test]
    fn recursion_is_self_consistent_off_the_diagonal() {
        for n in 3..=12u64 {
            for d in 1..=5u32 {
                let lhs = count_rankings(n, d);
                let rhs = count_rankings(n - 1, d)
                    + count_rankings(n - 1, d - 1) * BigUint::from(n - 1);
                assert_eq!(lhs, rhs, "recursion at ({n},{d})");
            }
        }
    }

    #[test]
    fn lower_bound_examples() {
        assert!((lower_bound_bits(2, 1) - 1.0).abs() < 1e-12);
        assert_eq!(count_rankings(100, 1), BigUint::from(4951u64));
        assert!((lower_bound_bits(100, 1) - (4951f64).log2()).abs() < 1e-9);
        // n <= d + 1: log2(100!) by an independent route.
        let direct: f64 = (2..=100u64).map(|k| (k as f64).log2()).sum();
        assert!((lower_bound_bits(100, 99) - direct).abs() < 1e-6);
        assert!((lower_bound_bits(100, 120) - direct).abs() < 1e-6);
    }

    #[test]
    fn bounds_are_the_documented_values_and_tight_to_the_count() {
        let b = count_bounds(100, 1).unwrap();
        let (lo, hi) = b.linear();
        assert!((lo - 5000.0).abs() < 1e-6);
        assert!((hi - 10000.0).abs() < 1e-6);
        // The k1 = 1 lower end is advisory: the exact count sits slightly
        // below the leading term at finite n (e.g. Q(n,1) = n^2/2 - n/2 + 1),
        // so assert the bracket with its measured slack.
        for (n, d) in [(100u64, 1u32), (1000, 1), (50, 2), (1000, 2), (40, 3)] {
            let exact = log2_big(&count_rankings(n, d));
            let b = count_bounds(n, d).unwrap();
            let ratio = (exact - b.log2_lower).exp2();
            assert!(
                ratio > 0.5 && ratio < 2.0,
                "Q({n},{d}) / leading term = {ratio}"
            );
            assert!(exact < b.log2_upper);
        }
    }

    #[test]
    fn bounds_domain_edge_stays_finite() {
        for d in [1u32, 10, 50, 200] {
            let b = count_bounds(u64::from(d) + 2, d).unwrap();
            assert!(b.log2_lower.is_finite() && b.log2_upper.is_finite());
        }
        assert!(count_bounds(3, 2).is_err());
    }

    #[test]
    fn unique_prob_endpoints() {
        let p = random_query_unique_prob(190, 190, 2).unwrap();
        assert_eq!(p.exact, BigRational::one());

        let p = random_query_unique_prob(2, 190, 2).unwrap();
        let expect = BigRational::new(1.into(), binomial(190, 2).into());
        assert_eq!(p.exact, expect);

        let p = random_query_unique_prob(1, 190, 2).unwrap();
        assert!(p.exact.is_zero());
    }

    #[test]
    fn unique_prob_paper_scale_example() {
        // n = 100 objects: N = 4950 queries, 10% sampled.
        let p = random_query_unique_prob(495, 4950, 2).unwrap();
        let exact = p.exact_f64();
        let direct = (495.0 * 494.0) / (4950.0 * 4949.0);
        assert!((exact - direct).abs() < 1e-12);
        assert!((exact - 0.00998).abs() < 5e-5);
        assert!((p.bound - (std::f64::consts::E * 0.1).powi(2)).abs() < 1e-12);
        assert!(exact < p.bound);
    }

    #[test]
    fn unique_prob_never_exceeds_bound_on_grid() {
        let total = 190u64; // n = 20
        for d in 1..=4u32 {
            for m in (u64::from(d)..=total).step_by(8) {
                let p = random_query_unique_prob(m, total, d).unwrap();
                assert!(
                    p.exact_f64() <= p.bound + 1e-12,
                    "exact exceeds bound at m={m}, d={d}"
                );
            }
        }
    }

    #[test]
    fn log2_big_handles_huge_values() {
        let q = count_rankings(10_000, 60);
        let l = log2_big(&q);
        assert!(l.is_finite() && l > 0.0);
        // Stay within the advisory bracket up to its measured slack.
        let b = count_bounds(10_000, 60).unwrap();
        let ratio = (l - b.log2_lower).exp2();
        assert!(ratio > 0.5 && ratio < 2.0, "ratio = {ratio}");
    }
}
