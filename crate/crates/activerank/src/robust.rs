//! The noise-robust sequential algorithm for persistent errors, plus the
//! repeat-vote variant for i.i.d. errors.
//!
//! Under persistent errors, re-asking a query cannot help; instead each
//! ambiguous query `q_{i,j}` is decided by voting over its *voting set*
//! `T_{i,j}` — the objects `k` for which `q_{i,k}`, `q_{k,j}`, or both
//! are still ambiguous. Every object truly ranked between `i` and `j`
//! belongs to `T_{i,j}`, and such objects answer both sub-queries the
//! same way the direct query would. If the voting set is smaller than
//! the size threshold `R`, the new object is passed over instead of
//! risking an undersized vote; passed-over objects are never revisited
//! within a run.
//!
//! Decided labels (right or wrong) are trusted as constraints; vote
//! responses are noisy evidence and never enter the constraint set.
//! Because a label is only decided when the query is ambiguous, the
//! constraint set keeps a nonempty interior even when a vote decides
//! wrongly — only the cell's location goes wrong, never its existence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    bisector, CellCut, ConstraintSet, Embedding, GeomConfig, Label, RequiredSide,
};
use crate::oracle::Oracle;
use crate::ranker::{NoProgress, RankingResult, Session, Strategy};

/// Size threshold and RNG seed for one robust run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VoteConfig {
    /// Minimum voting-set size; also the number of voters drawn.
    /// The voting branch needs at least one voter, hence `R >= 1`.
    pub votes: usize,
    pub seed: u64,
}

impl VoteConfig {
    pub fn new(votes: usize, seed: u64) -> Result<Self> {
        if votes < 1 {
            return Err(Error::invalid("vote threshold R must be at least 1"));
        }
        Ok(VoteConfig { votes, seed })
    }
}

/// Ranking over the subset of objects that survived the size threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartialRankingResult {
    /// Ranked objects, closest first.
    pub ranked_set: Vec<usize>,
    /// Objects passed over, in the order they were skipped.
    pub skipped: Vec<usize>,
    /// Oracle responses requested (vote responses and tie-breaks; repeats
    /// of the same pair count each time they are issued).
    pub requested: u64,
    /// Ambiguous queries decided by a vote.
    pub votes_held: u64,
}

/// One audit line: either a vote decision or a skip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub pair: (usize, usize),
    pub t_size: usize,
    pub sample: Vec<usize>,
    /// Response bits `(Y_{i,k}, Y_{k,j})` per sampled voter.
    pub responses: Vec<(u8, u8)>,
    pub signed_sum: i64,
    /// Decided label bit; meaningful when `skipped` is false.
    pub decided: u8,
    pub skipped: bool,
    /// True for decisions made after the first skip, where the uniform
    /// voting-set guarantee no longer applies.
    pub after_first_skip: bool,
}

/// Everything a robust run produces: the partial ranking, the final cell
/// (for completion) and the decision log (for replay and audit).
#[derive(Debug)]
pub struct RobustRun {
    pub partial: PartialRankingResult,
    pub cell: ConstraintSet,
    pub log: Vec<DecisionRecord>,
    /// Number of objects ranked when the first skip happened, `None`
    /// when nothing was skipped.
    pub first_skip_ranked: Option<usize>,
}

/// The voting set `T_{i,j}`: every `k` outside the pair for which
/// `q_{i,k}`, `q_{k,j}`, or both are ambiguous with respect to `cs`.
/// Contains all objects truly ranked between `i` and `j`.
pub fn voting_set(
    cs: &ConstraintSet,
    emb: &Embedding,
    i: usize,
    j: usize,
) -> Result<Vec<usize>> {
    let mut set = Vec::new();
    for k in 0..emb.n() {
        if k == i || k == j {
            continue;
        }
        if cs.is_ambiguous(&bisector(emb, i, k)?)? || cs.is_ambiguous(&bisector(emb, k, j)?)? {
            set.push(k);
        }
    }
    Ok(set)
}

/// Outcome of the signed vote over `(Y_{i,k}, Y_{k,j})` response pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteOutcome {
    Decided(Label),
    /// Signed sum exactly zero; the caller breaks the tie with one
    /// direct query.
    Tied,
}

/// Signed vote: each voter contributes `+1` when both responses say
/// `i` precedes `k` precedes `j`, `-1` when both say the reverse, `0`
/// otherwise. Positive decides `i` before `j`.
pub fn vote_decide(responses: &[(Label, Label)]) -> VoteOutcome {
    let sum = signed_vote_sum(responses);
    match sum.cmp(&0) {
        std::cmp::Ordering::Greater => VoteOutcome::Decided(Label::Before),
        std::cmp::Ordering::Less => VoteOutcome::Decided(Label::After),
        std::cmp::Ordering::Equal => VoteOutcome::Tied,
    }
}

pub(crate) fn signed_vote_sum(responses: &[(Label, Label)]) -> i64 {
    responses
        .iter()
        .map(|(ik, kj)| match (ik, kj) {
            (Label::Before, Label::Before) => 1i64,
            (Label::After, Label::After) => -1,
            _ => 0,
        })
        .sum()
}

/// Run the robust algorithm against a persistently noisy oracle.
pub fn rank_robust<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    cfg: &VoteConfig,
) -> Result<RobustRun> {
    rank_robust_with(emb, oracle, cfg, &GeomConfig::default())
}

pub fn rank_robust_with<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    cfg: &VoteConfig,
    geom: &GeomConfig,
) -> Result<RobustRun> {
    rank_robust_observed(emb, oracle, cfg, geom, &mut |_| {})
}

/// [`rank_robust_with`] plus a hook invoked with the running partial
/// ranking after each placement; drives interactive displays.
pub fn rank_robust_observed<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    cfg: &VoteConfig,
    geom: &GeomConfig,
    placed: &mut dyn FnMut(&[usize]),
) -> Result<RobustRun> {
    let mut driver = RobustDriver::new(emb, oracle, cfg, geom, false);
    driver.run(placed)?;
    Ok(RobustRun {
        partial: PartialRankingResult {
            ranked_set: driver.ranked,
            skipped: driver.skipped,
            requested: driver.requested,
            votes_held: driver.votes_held,
        },
        cell: driver.cs,
        log: driver.log,
        first_skip_ranked: driver.first_skip_at,
    })
}

/// Number of objects ranked before the first skip, on a fresh run that
/// stops at that skip. Sampling is incremental — candidates are scanned
/// in a uniformly random order and the first `R` members found form the
/// vote sample, which draws from the same distribution as sampling the
/// fully enumerated voting set — so runs at large `n` stay cheap.
/// Returns `n` when no object is ever skipped.
pub fn first_skip_count<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    cfg: &VoteConfig,
    geom: &GeomConfig,
) -> Result<usize> {
    let mut driver = RobustDriver::new(emb, oracle, cfg, geom, true);
    driver.run(&mut |_| {})?;
    Ok(match driver.first_skip_at {
        Some(ranked) => ranked,
        None => emb.n(),
    })
}

struct RobustDriver<'a, O: Oracle> {
    emb: &'a Embedding,
    oracle: &'a mut O,
    cfg: VoteConfig,
    cs: ConstraintSet,
    rng: ChaCha8Rng,
    ranked: Vec<usize>,
    skipped: Vec<usize>,
    requested: u64,
    votes_held: u64,
    log: Vec<DecisionRecord>,
    /// Ranked-count at the moment of the first skip.
    first_skip_at: Option<usize>,
    /// Members found by the most recent voting-set scan; exact `|T|`
    /// whenever the scan ran to exhaustion (every skip does).
    last_scan_members: usize,
    /// Stop at the first skip and sample voting sets incrementally;
    /// used by the first-skip statistic at large `n`.
    stop_at_first_skip: bool,
}

enum Resolution {
    Placed(Label),
    Skip { t_size: usize },
}

impl<'a, O: Oracle> RobustDriver<'a, O> {
    fn new(
        emb: &'a Embedding,
        oracle: &'a mut O,
        cfg: &VoteConfig,
        geom: &GeomConfig,
        stop_at_first_skip: bool,
    ) -> Self {
        let mut cs = ConstraintSet::for_embedding(emb, geom);
        // Voting-set scans certify many far-away planes; the outer box
        // pays for itself immediately here.
        cs.enable_outer_box(true);
        RobustDriver {
            emb,
            oracle,
            cfg: *cfg,
            cs,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x767f_5eed),
            ranked: Vec::new(),
            skipped: Vec::new(),
            requested: 0,
            votes_held: 0,
            log: Vec::new(),
            first_skip_at: None,
            last_scan_members: 0,
            stop_at_first_skip,
        }
    }

    fn run(&mut self, placed: &mut dyn FnMut(&[usize])) -> Result<()> {
        let n = self.emb.n();
        let mut arrival: Vec<usize> = (0..n).collect();
        arrival.shuffle(&mut ChaCha8Rng::seed_from_u64(self.cfg.seed));

        let mut accepted_arrival: Vec<usize> = Vec::with_capacity(n);
        for &obj in &arrival {
            if accepted_arrival.is_empty() {
                accepted_arrival.push(obj);
                self.ranked.push(obj);
                placed(&self.ranked);
                continue;
            }
            let mut precede = 0usize;
            let mut skip = false;
            for idx in 0..accepted_arrival.len() {
                let prev = accepted_arrival[idx];
                match self.resolve(prev, obj)? {
                    Resolution::Placed(label) => {
                        if label == Label::Before {
                            precede += 1;
                        }
                    }
                    Resolution::Skip { t_size } => {
                        self.log.push(DecisionRecord {
                            pair: (prev, obj),
                            t_size,
                            sample: Vec::new(),
                            responses: Vec::new(),
                            signed_sum: 0,
                            decided: 0,
                            skipped: true,
                            after_first_skip: self.first_skip_at.is_some(),
                        });
                        if self.first_skip_at.is_none() {
                            self.first_skip_at = Some(self.ranked.len());
                        }
                        skip = true;
                        break;
                    }
                }
            }
            if skip {
                self.skipped.push(obj);
                if self.stop_at_first_skip {
                    return Ok(());
                }
            } else {
                accepted_arrival.push(obj);
                self.ranked.insert(precede, obj);
                placed(&self.ranked);
            }
        }
        Ok(())
    }

    /// Resolve `q_{i,j}` under the robust rules: impute when forced,
    /// otherwise vote over the voting set or skip when it is too small.
    fn resolve(&mut self, i: usize, j: usize) -> Result<Resolution> {
        let h = bisector(self.emb, i, j)?;
        match self.cs.cut(&h)? {
            CellCut::OnlyNegative => Ok(Resolution::Placed(Label::Before)),
            CellCut::OnlyPositive => Ok(Resolution::Placed(Label::After)),
            CellCut::Neither => Err(Error::InconsistentConstraints {
                constraints: self.cs.len(),
            }),
            CellCut::Both => {
                let (sample, t_size) = match self.draw_voters(i, j)? {
                    Some(drawn) => drawn,
                    None => {
                        // |T| < R: pass over the new object.
                        return Ok(Resolution::Skip {
                            t_size: self.last_scan_members,
                        });
                    }
                };
                let mut responses = Vec::with_capacity(sample.len());
                for &k in &sample {
                    let y_ik = self.oracle.answer(i, k)?;
                    let y_kj = self.oracle.answer(k, j)?;
                    self.requested += 2;
                    responses.push((y_ik, y_kj));
                }
                let label = match vote_decide(&responses) {
                    VoteOutcome::Decided(label) => label,
                    VoteOutcome::Tied => {
                        // Zero-sum vote: one direct response decides.
                        self.requested += 1;
                        self.oracle.answer(i, j)?
                    }
                };
                self.votes_held += 1;
                self.log.push(DecisionRecord {
                    pair: (i, j),
                    t_size,
                    sample,
                    responses: responses
                        .iter()
                        .map(|(a, b)| (a.bit(), b.bit()))
                        .collect(),
                    signed_sum: signed_vote_sum(&responses),
                    decided: label.bit(),
                    skipped: false,
                    after_first_skip: self.first_skip_at.is_some(),
                });
                self.cs.add(h, RequiredSide::for_label(label));
                Ok(Resolution::Placed(label))
            }
        }
    }

    /// Draw `R` voters uniformly without replacement from `T_{i,j}`, or
    /// `None` when `|T| < R`. In incremental mode the scan stops as soon
    /// as `R` members are found; otherwise the set is enumerated fully so
    /// the decision log carries the exact `|T|`.
    fn draw_voters(&mut self, i: usize, j: usize) -> Result<Option<(Vec<usize>, usize)>> {
        let r = self.cfg.votes;
        let n = self.emb.n();
        let mut candidates: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
        candidates.shuffle(&mut self.rng);

        let mut members = Vec::new();
        for &k in &candidates {
            if self.stop_at_first_skip && members.len() == r {
                break;
            }
            let in_set = self.cs.is_ambiguous(&bisector(self.emb, i, k)?)?
                || self.cs.is_ambiguous(&bisector(self.emb, k, j)?)?;
            if in_set {
                members.push(k);
            }
        }
        self.last_scan_members = members.len();
        if members.len() < r {
            return Ok(None);
        }
        let t_size = members.len();
        members.truncate(r);
        Ok(Some((members, t_size)))
    }
}

/// Majority-vote variant for i.i.d. errors: run the error-free algorithm
/// but decide each requested query by the majority of `repeats`
/// independent responses (one extra response breaks even splits).
pub fn rank_majority_repeat<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    repeats: usize,
    seed: u64,
) -> Result<RankingResult> {
    rank_majority_repeat_with(emb, oracle, repeats, seed, &GeomConfig::default())
}

pub fn rank_majority_repeat_with<O: Oracle>(
    emb: &Embedding,
    oracle: &mut O,
    repeats: usize,
    seed: u64,
    cfg: &GeomConfig,
) -> Result<RankingResult> {
    if repeats < 1 {
        return Err(Error::invalid("repeat count must be at least 1"));
    }
    let mut session = Session::new(emb, oracle, cfg, Some(repeats));
    session.run(Strategy::Binary, seed, &mut |_| {}, &mut NoProgress)
}

/// Number of majority repeats sufficient for exact recovery with
/// probability `1 - delta` under i.i.d. flips of probability `p`:
/// `ceil(2 (1-2p)^{-2} ln(2 n log2(n) / delta))`.
pub fn majority_repeats_for(n: usize, p: f64, delta: f64) -> usize {
    let n = n.max(2) as f64;
    let gap = 1.0 - 2.0 * p;
    ((2.0 / (gap * gap)) * (2.0 * n * n.log2() / delta).ln()).ceil() as usize
}

/// Size threshold from the approximate-ranking guidance
/// `R = ceil(2 (1-2p)^{-2} ln n)` for persistent errors.
pub fn persistent_vote_threshold(n: usize, p: f64) -> usize {
    let gap = 1.0 - 2.0 * p;
    ((2.0 / (gap * gap)) * (n.max(2) as f64).ln()).ceil() as usize
}

/// Extend a partial ranking to all `n` objects: sort everything by
/// distance to a deep interior point of the final cell. The result is a
/// realizable ranking consistent with every decided label. A partial
/// ranking that already covers all objects is returned unchanged.
pub fn complete_ranking(
    partial: &PartialRankingResult,
    cs: &ConstraintSet,
    emb: &Embedding,
) -> Result<Vec<usize>> {
    if partial.ranked_set.len() == emb.n() {
        return Ok(partial.ranked_set.clone());
    }
    let anchor = cs.interior_point()?;
    Ok(emb.rank_by_distance(&anchor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rank_positions;
    use crate::oracle::{NoiseMode, NoiseSpec, SimOracle};
    use rand::Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Embedding, Vec<f64>) {
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

    fn line_embedding(points: &[f64]) -> Embedding {
        Embedding::new(points.iter().map(|&p| vec![p]).collect()).unwrap()
    }

    #[test]
    fn vote_rule_examples() {
        use Label::{After, Before};
        assert_eq!(
            vote_decide(&[(Before, Before)]),
            VoteOutcome::Decided(Before)
        );
        assert_eq!(
            vote_decide(&[(Before, Before), (After, After), (Before, Before)]),
            VoteOutcome::Decided(Before)
        );
        assert_eq!(vote_decide(&[(Before, After), (After, Before)]), VoteOutcome::Tied);
    }

    #[test]
    fn vote_rule_symmetry() {
        // Relabeling (i,j) -> (j,i) negates every response and must flip
        // the decision.
        use Label::{After, Before};
        let responses = [(Before, Before), (Before, After), (After, After), (Before, Before)];
        let flipped: Vec<(Label, Label)> = responses
            .iter()
            .map(|(a, b)| (b.flipped(), a.flipped()))
            .collect();
        match (vote_decide(&responses), vote_decide(&flipped)) {
            (VoteOutcome::Decided(x), VoteOutcome::Decided(y)) => {
                assert_eq!(x, y.flipped())
            }
            other => panic!("unexpected outcomes {other:?}"),
        }
    }

    #[test]
    fn voting_set_one_dimensional_example() {
        // Objects at 0, 1, 2, 10; empty cell; query (0, 2).
        let emb = line_embedding(&[0.0, 1.0, 2.0, 10.0]);
        let cs = ConstraintSet::for_embedding(&emb, &GeomConfig::default());
        let t = voting_set(&cs, &emb, 0, 2).unwrap();
        assert!(t.contains(&1), "the object between 0 and 2 must qualify");
    }

    #[test]
    fn voting_set_contains_all_between_objects() {
        // Superset property on random noiseless instances.
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        for trial in 0..200 {
            let n = 6 + trial % 5;
            let (emb, r) = random_instance(&mut rng, n, 1 + trial % 3);
            let truth = emb.rank_by_distance(&r);
            let rank = rank_positions(&truth).unwrap();
            let mut cs = ConstraintSet::for_embedding(&emb, &GeomConfig::default());
            // Pin part of the cell with a few true labels.
            for step in 0..(trial % 4) {
                let i = (step * 2 + 1) % n;
                let j = (step * 3 + 2) % n;
                if i != j {
                    let h = bisector(&emb, i, j).unwrap();
                    if cs.is_ambiguous(&h).unwrap() {
                        let side = if rank[i] < rank[j] {
                            RequiredSide::Negative
                        } else {
                            RequiredSide::Positive
                        };
                        cs.add(h, side);
                    }
                }
            }
            // Find an ambiguous pair and check the superset property.
            'pairs: for i in 0..n {
                for j in (i + 1)..n {
                    let h = bisector(&emb, i, j).unwrap();
                    if cs.is_ambiguous(&h).unwrap() {
                        let t = voting_set(&cs, &emb, i, j).unwrap();
                        let (lo, hi) = (rank[i].min(rank[j]), rank[i].max(rank[j]));
                        for k in 0..n {
                            if k != i && k != j && rank[k] > lo && rank[k] < hi {
                                assert!(
                                    t.contains(&k),
                                    "object {k} between {i},{j} missing from T"
                                );
                            }
                        }
                        break 'pairs;
                    }
                }
            }
        }
    }

    #[test]
    fn three_objects_voting_set_matches_direct_checks() {
        let emb = line_embedding(&[0.0, 1.0, 5.0]);
        let cs = ConstraintSet::for_embedding(&emb, &GeomConfig::default());
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let t = voting_set(&cs, &emb, i, j).unwrap();
            let k = 3 - i - j;
            let expect = cs
                .is_ambiguous(&bisector(&emb, i, k).unwrap())
                .unwrap()
                || cs.is_ambiguous(&bisector(&emb, k, j).unwrap()).unwrap();
            assert_eq!(t.contains(&k), expect);
            assert!(t.len() <= 1);
        }
    }

    #[test]
    fn noiseless_robust_ranks_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..25 {
            let n = 12;
            let (emb, r) = random_instance(&mut rng, n, 2);
            let truth = emb.rank_by_distance(&r);
            let mut oracle = SimOracle::geometric(&emb, r.clone()).unwrap();
            let cfg = VoteConfig::new(3, trial).unwrap();
            let run = rank_robust(&emb, &mut oracle, &cfg).unwrap();
            // Every ranked object must appear in true relative order.
            let rank = rank_positions(&truth).unwrap();
            let positions: Vec<usize> =
                run.partial.ranked_set.iter().map(|&o| rank[o]).collect();
            let mut sorted = positions.clone();
            sorted.sort_unstable();
            assert_eq!(positions, sorted, "trial {trial}: wrong relative order");
            assert_eq!(
                run.partial.ranked_set.len() + run.partial.skipped.len(),
                n
            );
        }
    }

    #[test]
    fn skip_accounting_is_replayable_from_the_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (emb, r) = random_instance(&mut rng, 14, 2);
        let mut oracle = SimOracle::geometric(&emb, r).unwrap();
        let cfg = VoteConfig::new(6, 0).unwrap();
        let run = rank_robust(&emb, &mut oracle, &cfg).unwrap();
        let skips: Vec<&DecisionRecord> = run.log.iter().filter(|d| d.skipped).collect();
        assert_eq!(skips.len(), run.partial.skipped.len());
        for record in skips {
            assert!(
                record.t_size < cfg.votes,
                "skip with |T| = {} >= R = {}",
                record.t_size,
                cfg.votes
            );
        }
        for decision in run.log.iter().filter(|d| !d.skipped) {
            assert!(decision.t_size >= cfg.votes);
            assert_eq!(decision.sample.len(), cfg.votes);
            assert_eq!(decision.responses.len(), cfg.votes);
        }
    }

    #[test]
    fn oversized_threshold_skips_everything_after_the_first() {
        let emb = line_embedding(&[0.0, 1.0, 2.0]);
        let mut oracle = SimOracle::geometric(&emb, vec![0.3]).unwrap();
        let cfg = VoteConfig::new(5, 1).unwrap();
        let run = rank_robust(&emb, &mut oracle, &cfg).unwrap();
        assert_eq!(run.partial.ranked_set.len(), 1);
        assert_eq!(run.partial.skipped.len(), 2);
        assert_eq!(run.partial.votes_held, 0);
    }

    #[test]
    fn majority_repeat_reduces_to_errorfree_when_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (emb, r) = random_instance(&mut rng, 10, 2);
        let truth = emb.rank_by_distance(&r);
        let mut oracle = SimOracle::geometric(&emb, r.clone()).unwrap();
        let result = rank_majority_repeat(&emb, &mut oracle, 1, 4).unwrap();
        assert_eq!(result.order, truth);
        // R = 1, p = 0: call count equals requested count exactly.
        assert_eq!(oracle.stats().total_calls, result.requested);
    }

    #[test]
    fn majority_repeat_call_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (emb, r) = random_instance(&mut rng, 12, 2);
        let repeats = 5;
        let noise = NoiseSpec::new(0.2, NoiseMode::Iid, 99).unwrap();
        let mut oracle = SimOracle::geometric_noisy(&emb, r, noise).unwrap();
        let result = rank_majority_repeat(&emb, &mut oracle, repeats, 4).unwrap();
        let calls = oracle.stats().total_calls;
        let base = repeats as u64 * result.requested;
        // Tie-break slack: at most one extra call per decided query.
        assert!(calls >= base && calls <= base + result.requested);
    }

    #[test]
    fn completion_returns_full_rankings_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (emb, r) = random_instance(&mut rng, 8, 2);
        let mut oracle = SimOracle::geometric(&emb, r).unwrap();
        let cfg = VoteConfig::new(1, 2).unwrap();
        let run = rank_robust(&emb, &mut oracle, &cfg).unwrap();
        if run.partial.ranked_set.len() == emb.n() {
            let completed = complete_ranking(&run.partial, &run.cell, &emb).unwrap();
            assert_eq!(completed, run.partial.ranked_set);
        }
    }

    #[test]
    fn completion_is_consistent_with_decided_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (emb, r) = random_instance(&mut rng, 12, 2);
        let mut oracle = SimOracle::geometric(&emb, r).unwrap();
        let cfg = VoteConfig::new(4, 3).unwrap();
        let run = rank_robust(&emb, &mut oracle, &cfg).unwrap();
        let completed = complete_ranking(&run.partial, &run.cell, &emb).unwrap();
        let rank = rank_positions(&completed).unwrap();
        for (h, side) in run.cell.constraints() {
            let (i, j) = h.source_pair();
            match side {
                RequiredSide::Negative => assert!(rank[i] < rank[j]),
                RequiredSide::Positive => assert!(rank[j] < rank[i]),
            }
        }
    }

    #[test]
    fn first_skip_fast_path_matches_full_run() {
        // Noiseless decisions do not depend on which voters are sampled,
        // so the early-stopping path must place the first skip at the
        // same ranked-prefix size as the full run.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..5 {
            let (emb, r) = random_instance(&mut rng, 30, 2);
            let cfg = VoteConfig::new(8, trial).unwrap();
            let mut oracle = SimOracle::geometric(&emb, r.clone()).unwrap();
            let m = first_skip_count(&emb, &mut oracle, &cfg, &GeomConfig::default()).unwrap();
            let mut oracle2 = SimOracle::geometric(&emb, r).unwrap();
            let run = rank_robust(&emb, &mut oracle2, &cfg).unwrap();
            assert_eq!(m, run.first_skip_ranked.unwrap_or(emb.n()));
            assert!(m >= 1 && m <= emb.n());
        }
    }

    #[test]
    fn threshold_formulas() {
        assert_eq!(majority_repeats_for(50, 0.2, 0.1), 48);
        assert_eq!(persistent_vote_threshold(200, 0.1), 17);
    }
}
