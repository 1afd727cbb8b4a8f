//! The error-free sequential query-selection algorithm.
//!
//! Objects are taken in a uniformly random order; each new object is
//! located among the already-ranked prefix, resolving every needed
//! comparison either by asking the oracle (when the query is ambiguous
//! with respect to the constraints collected so far) or by imputing the
//! label from the current cell. `Linear` scans the whole prefix exactly
//! as the basic algorithm is written; `Binary` locates the insertion
//! point by binary search and is the default, cutting the number of
//! resolutions from `O(n^2)` to `O(n log n)` without changing the output.
//!
//! Only requested labels become constraints; imputed ones are implied by
//! the cell and would only bloat the feasibility programs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    bisector, CellCut, ConstraintSet, Embedding, GeomConfig, Label, RequiredSide,
};
use crate::metrics::{pair_count, pair_index};
use crate::oracle::Oracle;

/// Prefix-search strategy for locating each new object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Linear,
    Binary,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Strategy::Linear),
            "binary" => Ok(Strategy::Binary),
            other => Err(Error::invalid(format!("unknown strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Linear => "linear",
            Strategy::Binary => "binary",
        })
    }
}

/// How each unordered pair was resolved during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairProvenance {
    Untested,
    Requested,
    Imputed,
}

/// Per-pair provenance tags, indexed like [`crate::metrics::LabelVector`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMap {
    n: usize,
    tags: Vec<PairProvenance>,
}

impl PairMap {
    fn new(n: usize) -> Self {
        PairMap {
            n,
            tags: vec![PairProvenance::Untested; pair_count(n)],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> PairProvenance {
        self.tags[pair_index(self.n, i.min(j), i.max(j))]
    }

    fn set(&mut self, i: usize, j: usize, tag: PairProvenance) {
        self.tags[pair_index(self.n, i.min(j), i.max(j))] = tag;
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), PairProvenance)> + '_ {
        let n = self.n;
        (0..n)
            .flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
            .zip(self.tags.iter().copied())
    }
}

/// Output of a full ranking run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingResult {
    /// Permutation of object indices, position 0 closest to the reference.
    pub order: Vec<usize>,
    /// Comparisons whose labels were requested from the oracle
    /// (majority-vote repeats count once here; see oracle stats for calls).
    pub requested: u64,
    /// Comparisons resolved from the cell without asking.
    pub imputed: u64,
    /// Constraints held at the end (equals `requested`).
    pub constraint_count: usize,
    pub provenance: PairMap,
}

/// Per-insertion ambiguity accounting for the linear strategy:
/// when inserting the `prefix_len + 1`-th object, how many of its
/// `candidates` comparisons had to be requested.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InsertionStep {
    pub prefix_len: usize,
    pub candidates: u64,
    pub requested: u64,
}

/// Progress hook for interactive sessions; called after every answer the
/// oracle provides.
pub trait Progress {
    fn on_answer(&mut self, ranked_prefix: &[usize], pair: (usize, usize), label: Label);
}

pub(crate) struct NoProgress;

impl Progress for NoProgress {
    fn on_answer(&mut self, _: &[usize], _: (usize, usize), _: Label) {}
}

/// Rank all objects with the given strategy. The seed drives the initial
/// uniform shuffle; results are reproducible bit for bit.
pub fn rank_errorfree<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    strategy: Strategy,
    seed: u64,
) -> Result<RankingResult> {
    rank_errorfree_with(emb, oracle, strategy, seed, &GeomConfig::default())
}

/// [`rank_errorfree`] with explicit tolerances and box inflation.
pub fn rank_errorfree_with<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    strategy: Strategy,
    seed: u64,
    cfg: &GeomConfig,
) -> Result<RankingResult> {
    let mut session = Session::new(emb, oracle, cfg, None);
    session.run(strategy, seed, &mut |_| {}, &mut NoProgress)
}

/// [`rank_errorfree`] that also reports per-insertion ambiguity counts.
pub fn rank_errorfree_traced<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    strategy: Strategy,
    seed: u64,
    cfg: &GeomConfig,
) -> Result<(RankingResult, Vec<InsertionStep>)> {
    let mut steps = Vec::new();
    let mut session = Session::new(emb, oracle, cfg, None);
    let result = session.run(strategy, seed, &mut |s| steps.push(s), &mut NoProgress)?;
    Ok((result, steps))
}

/// Driver shared with the repeat-vote variant and interactive sessions.
pub(crate) struct Session<'a, O: Oracle> {
    emb: &'a Embedding,
    oracle: &'a mut O,
    pub(crate) cs: ConstraintSet,
    requested: u64,
    imputed: u64,
    provenance: PairMap,
    /// `Some(r)`: answer each requested query by majority of `r`
    /// independent calls (one extra call breaks even-split ties).
    majority: Option<usize>,
}

impl<'a, O: Oracle> Session<'a, O> {
    pub(crate) fn new(
        emb: &'a Embedding,
        oracle: &'a mut O,
        cfg: &GeomConfig,
        majority: Option<usize>,
    ) -> Self {
        Session {
            emb,
            oracle,
            cs: ConstraintSet::for_embedding(emb, cfg),
            requested: 0,
            imputed: 0,
            provenance: PairMap::new(emb.n()),
            majority,
        }
    }

    /// Resolve the comparison `(i, j)`: impute when the cell forces a
    /// side, otherwise request the label and keep it as a constraint.
    /// Returns the label plus whether it was requested.
    pub(crate) fn resolve(&mut self, i: usize, j: usize) -> Result<(Label, bool)> {
        let h = bisector(self.emb, i, j)?;
        match self.cs.cut(&h)? {
            CellCut::Both => {
                let label = self.ask(i, j)?;
                self.cs.add(h, RequiredSide::for_label(label));
                self.requested += 1;
                self.provenance.set(i, j, PairProvenance::Requested);
                Ok((label, true))
            }
            CellCut::OnlyNegative => {
                self.imputed += 1;
                self.provenance.set(i, j, PairProvenance::Imputed);
                Ok((Label::Before, false))
            }
            CellCut::OnlyPositive => {
                self.imputed += 1;
                self.provenance.set(i, j, PairProvenance::Imputed);
                Ok((Label::After, false))
            }
            CellCut::Neither => Err(Error::InconsistentConstraints {
                constraints: self.cs.len(),
            }),
        }
    }

    fn ask(&mut self, i: usize, j: usize) -> Result<Label> {
        match self.majority {
            None => self.oracle.answer(i, j),
            Some(r) => {
                let mut ones = 0usize;
                for _ in 0..r {
                    if self.oracle.answer(i, j)? == Label::Before {
                        ones += 1;
                    }
                }
                if 2 * ones == r {
                    // Even split: one extra call decides.
                    return self.oracle.answer(i, j);
                }
                Ok(if 2 * ones > r {
                    Label::Before
                } else {
                    Label::After
                })
            }
        }
    }

    pub(crate) fn run(
        &mut self,
        strategy: Strategy,
        seed: u64,
        trace: &mut dyn FnMut(InsertionStep),
        progress: &mut dyn Progress,
    ) -> Result<RankingResult> {
        let n = self.emb.n();
        let mut arrival: Vec<usize> = (0..n).collect();
        arrival.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

        let mut ranked: Vec<usize> = Vec::with_capacity(n);
        for (step, &obj) in arrival.iter().enumerate() {
            if ranked.is_empty() {
                ranked.push(obj);
                continue;
            }
            let before = self.requested;
            let mut resolved = 0u64;
            let position = match strategy {
                Strategy::Linear => {
                    // Resolve against every earlier object, in arrival order.
                    let mut precede = 0usize;
                    for &prev in &arrival[..step] {
                        let (label, asked) = self.resolve(prev, obj)?;
                        resolved += 1;
                        if label == Label::Before {
                            precede += 1;
                        }
                        if asked {
                            progress.on_answer(&ranked, (prev, obj), label);
                        }
                    }
                    precede
                }
                Strategy::Binary => {
                    let (mut lo, mut hi) = (0usize, ranked.len());
                    while lo < hi {
                        let mid = (lo + hi) / 2;
                        let (label, asked) = self.resolve(obj, ranked[mid])?;
                        resolved += 1;
                        if asked {
                            progress.on_answer(&ranked, (obj, ranked[mid]), label);
                        }
                        if label == Label::Before {
                            hi = mid;
                        } else {
                            lo = mid + 1;
                        }
                    }
                    lo
                }
            };
            ranked.insert(position, obj);
            trace(InsertionStep {
                prefix_len: step,
                candidates: resolved,
                requested: self.requested - before,
            });
        }

        Ok(RankingResult {
            order: ranked,
            requested: self.requested,
            imputed: self.imputed,
            constraint_count: self.cs.len(),
            provenance: self.provenance.clone(),
        })
    }
}

/// Outcome of the random-query baseline.
#[derive(Debug)]
pub struct RandomQueryOutcome {
    /// True when the labels pin down a unique ranking (no unresolved pair
    /// remains ambiguous).
    pub unique: bool,
    pub cell: ConstraintSet,
}

/// Request `m` distinct pairwise queries chosen uniformly at random,
/// build the resulting cell, and report whether it determines a unique
/// ranking. The oracle is assumed consistent.
pub fn rank_random_queries<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    m: usize,
    seed: u64,
) -> Result<RandomQueryOutcome> {
    rank_random_queries_with(emb, oracle, m, seed, &GeomConfig::default())
}

pub fn rank_random_queries_with<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    m: usize,
    seed: u64,
    cfg: &GeomConfig,
) -> Result<RandomQueryOutcome> {
    let n = emb.n();
    let total = pair_count(n);
    if m > total {
        return Err(Error::invalid(format!(
            "m = {m} exceeds the {total} available queries"
        )));
    }
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    pairs.truncate(m);

    let mut cs = ConstraintSet::for_embedding(emb, cfg);
    let mut asked = vec![false; total];
    for &(i, j) in &pairs {
        let label = oracle.answer(i, j)?;
        cs.add(bisector(emb, i, j)?, RequiredSide::for_label(label));
        asked[pair_index(n, i, j)] = true;
    }

    let mut unique = true;
    'outer: for i in 0..n {
        for j in (i + 1)..n {
            if asked[pair_index(n, i, j)] {
                continue;
            }
            if cs.is_ambiguous(&bisector(emb, i, j)?)? {
                unique = false;
                break 'outer;
            }
        }
    }
    Ok(RandomQueryOutcome { unique, cell: cs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SimOracle;
    use rand::Rng;

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
    ) -> (Embedding, Vec<f64>) {
        loop {
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let reference: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            if let Ok(emb) = Embedding::new(points) {
                return (emb, reference);
            }
        }
    }

    #[test]
    fn two_objects_need_exactly_one_request() {
        let emb = Embedding::new(vec![vec![0.1, 0.9], vec![0.7, 0.3]]).unwrap();
        let r = vec![0.6, 0.6];
        let mut oracle = SimOracle::geometric(&emb, r.clone()).unwrap();
        let result = rank_errorfree(&emb, &mut oracle, Strategy::Binary, 5).unwrap();
        assert_eq!(result.requested, 1);
        assert_eq!(result.imputed, 0);
        assert_eq!(result.order, emb.rank_by_distance(&r));
    }

    #[test]
    fn recovers_distance_sort_across_seeds_and_strategies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..30 {
            let d = 1 + (trial % 3);
            let (emb, r) = random_instance(&mut rng, 8 + trial % 5, d);
            let truth = emb.rank_by_distance(&r);
            for strategy in [Strategy::Linear, Strategy::Binary] {
                let mut oracle = SimOracle::geometric(&emb, r.clone()).unwrap();
                let result =
                    rank_errorfree(&emb, &mut oracle, strategy, trial as u64).unwrap();
                assert_eq!(result.order, truth, "strategy {strategy}, trial {trial}");
                assert_eq!(result.requested + result.imputed > 0, true);
                assert_eq!(result.constraint_count as u64, result.requested);
            }
        }
    }

    #[test]
    fn strategies_agree_on_the_final_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let (emb, r) = random_instance(&mut rng, 12, 2);
            let mut o1 = SimOracle::geometric(&emb, r.clone()).unwrap();
            let mut o2 = SimOracle::geometric(&emb, r.clone()).unwrap();
            let lin = rank_errorfree(&emb, &mut o1, Strategy::Linear, trial).unwrap();
            let bin = rank_errorfree(&emb, &mut o2, Strategy::Binary, trial).unwrap();
            assert_eq!(lin.order, bin.order);
        }
    }

    #[test]
    fn imputed_labels_match_the_oracle_post_hoc() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (emb, r) = random_instance(&mut rng, 10, 2);
        let mut oracle = SimOracle::geometric(&emb, r.clone()).unwrap();
        let result = rank_errorfree(&emb, &mut oracle, Strategy::Linear, 3).unwrap();
        let rank = crate::metrics::rank_positions(&result.order).unwrap();
        for ((i, j), tag) in result.provenance.iter() {
            if tag == PairProvenance::Imputed {
                let truth = crate::oracle::geometric_answer(&emb, &r, i, j).unwrap();
                assert_eq!(truth == Label::Before, rank[i] < rank[j]);
            }
        }
    }

    #[test]
    fn binary_strategy_respects_the_probe_ceiling() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (emb, r) = random_instance(&mut rng, 32, 3);
        let mut oracle = SimOracle::geometric(&emb, r).unwrap();
        let result = rank_errorfree(&emb, &mut oracle, Strategy::Binary, 1).unwrap();
        let n = emb.n() as u64;
        let ceiling = n * (n as f64).log2().ceil() as u64;
        assert!(result.requested <= ceiling);
        assert!(result.requested + result.imputed <= ceiling);
    }

    #[test]
    fn one_dimensional_binary_probes_match_plain_insertion_sort() {
        // In d = 1 resolved labels are plain order comparisons, so the
        // probe sequence must equal classic binary insertion on the same
        // arrival order, and the total is bounded by log2(n!) + n.
        let n = 24;
        let positions: Vec<f64> = (0..n).map(|k| 0.05 + k as f64 / n as f64).collect();
        let emb = Embedding::new(positions.iter().map(|&p| vec![p]).collect()).unwrap();
        let r = vec![0.011];
        let seed = 9;

        let mut oracle = SimOracle::geometric(&emb, r.clone()).unwrap();
        let result = rank_errorfree(&emb, &mut oracle, Strategy::Binary, seed).unwrap();

        // Replay: count comparisons of textbook binary insertion over the
        // same shuffled arrival order, comparing by distance to r.
        let mut arrival: Vec<usize> = (0..n).collect();
        arrival.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let key = |i: usize| emb.distance_sq(i, &r);
        let mut probes = 0u64;
        let mut ranked: Vec<usize> = Vec::new();
        for &obj in &arrival {
            let (mut lo, mut hi) = (0, ranked.len());
            while lo < hi {
                let mid = (lo + hi) / 2;
                probes += 1;
                if key(obj) < key(ranked[mid]) {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            ranked.insert(lo, obj);
        }
        assert_eq!(result.requested + result.imputed, probes);
        assert_eq!(result.order, ranked);
        let log2_fact: f64 = (2..=n as u64).map(|k| (k as f64).log2()).sum();
        assert!(probes as f64 <= log2_fact + n as f64);
        assert!(result.requested <= probes);
    }

    #[test]
    fn random_queries_all_pairs_is_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (emb, r) = random_instance(&mut rng, 7, 2);
        let total = pair_count(7);
        let mut oracle = SimOracle::geometric(&emb, r).unwrap();
        let out = rank_random_queries(&emb, &mut oracle, total, 0).unwrap();
        assert!(out.unique);
        assert_eq!(oracle.stats().requested, total as u64);
    }

    #[test]
    fn random_queries_none_is_not_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (emb, r) = random_instance(&mut rng, 5, 2);
        let mut oracle = SimOracle::geometric(&emb, r).unwrap();
        let out = rank_random_queries(&emb, &mut oracle, 0, 0).unwrap();
        assert!(!out.unique);
    }

    #[test]
    fn trace_counts_candidates_per_insertion() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (emb, r) = random_instance(&mut rng, 9, 2);
        let mut oracle = SimOracle::geometric(&emb, r).unwrap();
        let (result, steps) = rank_errorfree_traced(
            &emb,
            &mut oracle,
            Strategy::Linear,
            0,
            &GeomConfig::default(),
        )
        .unwrap();
        assert_eq!(steps.len(), 8);
        for (k, s) in steps.iter().enumerate() {
            assert_eq!(s.prefix_len, k + 1);
            assert_eq!(s.candidates, (k + 1) as u64);
            assert!(s.requested <= s.candidates);
        }
        let total: u64 = steps.iter().map(|s| s.requested).sum();
        assert_eq!(total, result.requested);
    }
}
