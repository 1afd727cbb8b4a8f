//! Distances between rankings and between pairwise-label vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Embedding, Label};

/// Number of unordered pairs of `n` objects.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Canonical index of the unordered pair `i < j` in lexicographic order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// One binary label per unordered pair `(i < j)`, indexed lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    n: usize,
    values: Vec<Label>,
}

impl LabelVector {
    /// Labels induced by a full ranking (`order[0]` is the closest object):
    /// pair `(i, j)` gets `Before` when `i` precedes `j`.
    pub fn from_permutation(order: &[usize]) -> Result<Self> {
        let n = order.len();
        let rank = rank_positions(order)?;
        let mut values = Vec::with_capacity(pair_count(n));
        for i in 0..n {
            for j in (i + 1)..n {
                values.push(if rank[i] < rank[j] {
                    Label::Before
                } else {
                    Label::After
                });
            }
        }
        Ok(LabelVector { n, values })
    }

    /// Labels induced by distances to a reference point. Errors on an
    /// exact distance tie (violates general position).
    pub fn from_reference(emb: &Embedding, reference: &[f64]) -> Result<Self> {
        if reference.len() != emb.d() {
            return Err(Error::DimensionMismatch {
                expected: emb.d(),
                got: reference.len(),
            });
        }
        let n = emb.n();
        let dist: Vec<f64> = (0..n).map(|i| emb.distance_sq(i, reference)).collect();
        let mut values = Vec::with_capacity(pair_count(n));
        for i in 0..n {
            for j in (i + 1)..n {
                if dist[i] == dist[j] {
                    return Err(Error::EquidistantTie { i, j });
                }
                values.push(if dist[i] < dist[j] {
                    Label::Before
                } else {
                    Label::After
                });
            }
        }
        Ok(LabelVector { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Label] {
        &self.values
    }

    /// Label of the ordered pair `(i, j)`; flips for `i > j`.
    pub fn get(&self, i: usize, j: usize) -> Label {
        if i < j {
            self.values[pair_index(self.n, i, j)]
        } else {
            self.values[pair_index(self.n, j, i)].flipped()
        }
    }
}

/// Exact Kendall-tau distance between two rankings over the same objects:
/// the number of pairs ordered differently. Symmetric, in `[0, C(n,2)]`.
pub fn kendall_tau(a: &[usize], b: &[usize]) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let rank_b = rank_positions(b)?;
    let _ = rank_positions(a)?;
    // Walk a's order and count inversions of b's positions.
    let seq: Vec<usize> = a.iter().map(|&obj| rank_b[obj]).collect();
    Ok(count_inversions(&seq))
}

/// Kendall-tau normalized by the number of pairs, in `[0, 1]`.
pub fn normalized_kendall_tau(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() < 2 {
        return Ok(0.0);
    }
    Ok(kendall_tau(a, b)? as f64 / pair_count(a.len()) as f64)
}

/// Number of pairs on which two label vectors disagree.
pub fn label_disagreement_count(x: &LabelVector, y: &LabelVector) -> Result<u64> {
    if x.values.len() != y.values.len() {
        return Err(Error::DimensionMismatch {
            expected: x.values.len(),
            got: y.values.len(),
        });
    }
    Ok(x.values
        .iter()
        .zip(&y.values)
        .filter(|(a, b)| a != b)
        .count() as u64)
}

/// Fraction of pairs on which two label vectors disagree, in `[0, 1]`.
pub fn label_disagreement(x: &LabelVector, y: &LabelVector) -> Result<f64> {
    Ok(label_disagreement_count(x, y)? as f64 / x.values.len() as f64)
}

/// Positions of each object in an order: `rank[order[k]] = k`.
/// Errors unless `order` is a permutation of `0..n`.
pub fn rank_positions(order: &[usize]) -> Result<Vec<usize>> {
    let n = order.len();
    let mut rank = vec![usize::MAX; n];
    for (pos, &obj) in order.iter().enumerate() {
        if obj >= n || rank[obj] != usize::MAX {
            return Err(Error::invalid("not a permutation of 0..n"));
        }
        rank[obj] = pos;
    }
    Ok(rank)
}

/// Merge-sort inversion count.
fn count_inversions(seq: &[usize]) -> u64 {
    fn go(seq: &mut [usize], scratch: &mut [usize]) -> u64 {
        let n = seq.len();
        if n <= 1 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = {
            let (left, right) = seq.split_at_mut(mid);
            go(left, scratch) + go(right, scratch)
        };
        let (mut i, mut j, mut k) = (0, mid, 0);
        while i < mid && j < n {
            if seq[i] <= seq[j] {
                scratch[k] = seq[i];
                i += 1;
            } else {
                scratch[k] = seq[j];
                inv += (mid - i) as u64;
                j += 1;
            }
            k += 1;
        }
        scratch[k..k + mid - i].copy_from_slice(&seq[i..mid]);
        seq[..k + mid - i].copy_from_slice(&scratch[..k + mid - i]);
        inv
    }
    let mut work = seq.to_vec();
    let mut scratch = vec![0usize; seq.len()];
    go(&mut work, &mut scratch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_tau(a: &[usize], b: &[usize]) -> u64 {
        let ra = rank_positions(a).unwrap();
        let rb = rank_positions(b).unwrap();
        let n = a.len();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if (ra[i] < ra[j]) != (rb[i] < rb[j]) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn identical_rankings_have_zero_distance() {
        let a = [3usize, 1, 0, 2];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 0);
    }

    #[test]
    fn full_reversal_hits_the_pair_count() {
        let a = [0usize, 1, 2];
        let b = [2usize, 1, 0];
        assert_eq!(kendall_tau(&a, &b).unwrap(), 3);
    }

    #[test]
    fn adjacent_swaps_example() {
        // (1,2,3,4) vs (2,1,4,3): exactly two discordant pairs.
        let a = [0usize, 1, 2, 3];
        let b = [1usize, 0, 3, 2];
        assert_eq!(kendall_tau(&a, &b).unwrap(), 2);
        assert_eq!(brute_force_tau(&a, &b), 2);
    }

    #[test]
    fn merge_count_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a: Vec<usize> = (0..20).collect();
        let mut b: Vec<usize> = (0..20).collect();
        for _ in 0..50 {
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            assert_eq!(kendall_tau(&a, &b).unwrap(), brute_force_tau(&a, &b));
            assert_eq!(
                kendall_tau(&a, &b).unwrap(),
                kendall_tau(&b, &a).unwrap(),
                "symmetry"
            );
        }
    }

    #[test]
    fn rejects_length_mismatch_and_non_permutations() {
        assert!(kendall_tau(&[0, 1], &[0, 1, 2]).is_err());
        assert!(kendall_tau(&[0, 0, 1], &[0, 1, 2]).is_err());
    }

    #[test]
    fn identity_permutation_labels() {
        let lv = LabelVector::from_permutation(&[0, 1, 2]).unwrap();
        assert_eq!(
            lv.values(),
            &[Label::Before, Label::Before, Label::Before]
        );
    }

    #[test]
    fn disagreement_endpoints() {
        let x = LabelVector::from_permutation(&[0, 1, 2]).unwrap();
        assert_eq!(label_disagreement(&x, &x).unwrap(), 0.0);
        let y = LabelVector::from_permutation(&[2, 1, 0]).unwrap();
        assert_eq!(label_disagreement(&x, &y).unwrap(), 1.0);
        // One differing pair out of three.
        let z = LabelVector::from_permutation(&[1, 0, 2]).unwrap();
        assert!((label_disagreement(&x, &z).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kendall_equals_paircount_times_disagreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 20;
        let mut a: Vec<usize> = (0..n).collect();
        let mut b: Vec<usize> = (0..n).collect();
        for _ in 0..100 {
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            let tau = kendall_tau(&a, &b).unwrap();
            let la = LabelVector::from_permutation(&a).unwrap();
            let lb = LabelVector::from_permutation(&b).unwrap();
            // The inversion count IS the label disagreement count.
            assert_eq!(tau, label_disagreement_count(&la, &lb).unwrap());
            let dis = label_disagreement(&la, &lb).unwrap();
            assert!((tau as f64 - dis * pair_count(n) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_labels_match_distance_sort() {
        let emb = Embedding::new(vec![vec![0.0], vec![2.0], vec![5.0]]).unwrap();
        let r = [4.2];
        let via_ref = LabelVector::from_reference(&emb, &r).unwrap();
        let via_perm = LabelVector::from_permutation(&emb.rank_by_distance(&r)).unwrap();
        assert_eq!(via_ref, via_perm);
        // Reference sitting on an object puts it first.
        let at = LabelVector::from_reference(&emb, &[2.0]).unwrap();
        assert_eq!(at.get(1, 0), Label::Before);
        assert_eq!(at.get(1, 2), Label::Before);
    }

    #[test]
    fn reference_tie_is_rejected() {
        let emb = Embedding::new(vec![vec![0.0], vec![4.0]]).unwrap();
        assert!(matches!(
            LabelVector::from_reference(&emb, &[2.0]),
            Err(Error::EquidistantTie { .. })
        ));
    }

    #[test]
    fn label_vectors_have_no_three_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut order: Vec<usize> = (0..8).collect();
        for _ in 0..25 {
            order.shuffle(&mut rng);
            let lv = LabelVector::from_permutation(&order).unwrap();
            let n = lv.n();
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        if a != b && b != c && a != c {
                            let ab = lv.get(a, b) == Label::Before;
                            let bc = lv.get(b, c) == Label::Before;
                            let ca = lv.get(c, a) == Label::Before;
                            assert!(!(ab && bc && ca), "3-cycle {a},{b},{c}");
                        }
                    }
                }
            }
        }
    }
}
