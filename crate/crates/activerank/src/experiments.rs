//! Experiment runners behind the CLI: the requested-queries sweep, the
//! random-vs-adaptive comparison, ambiguity-rate decay, the robust
//! suites, the parabola worst case and the similarity-matrix study.
//!
//! Every payload embeds its config and the crate version; trials run in
//! parallel with per-trial seeds derived from the master seed, so rerun
//! payloads are byte-identical.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{lower_bound_bits, random_query_unique_prob};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::gen::{parabola_adversarial_reference, parabola_embedding, unit_cube_instance};
use crate::geom::{bisector, ConstraintSet, Embedding, GeomConfig, Label, RequiredSide};
use crate::metrics::{normalized_kendall_tau, pair_count, LabelVector};
use crate::oracle::{
    matrix_answer, InteractiveOracle, MatrixSource, NoiseSpec, Oracle, OracleStats, SimOracle,
    SimilarityMatrix, TranscriptRecord,
};
use crate::ranker::{
    rank_errorfree_traced, rank_errorfree_with, rank_random_queries_with, Progress, Strategy,
};
use crate::robust::{
    complete_ranking, first_skip_count, persistent_vote_threshold, rank_robust_observed,
    rank_robust_with, VoteConfig,
};
use crate::VERSION;

/// Shared experiment configuration; serialized into every result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub dims: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Vote threshold / repeat count where applicable.
    pub votes: Option<usize>,
    pub strategy: Strategy,
    pub box_inflation: f64,
}

impl ExperimentConfig {
    pub fn new(n: usize, dims: Vec<usize>, trials: usize, seed: u64) -> Result<Self> {
        if trials < 1 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        Ok(ExperimentConfig {
            n,
            dims,
            trials,
            seed,
            noise: NoiseSpec::none(),
            votes: None,
            strategy: Strategy::Binary,
            box_inflation: GeomConfig::default().box_inflation,
        })
    }

    pub fn geom(&self) -> GeomConfig {
        GeomConfig {
            box_inflation: self.box_inflation,
            ..GeomConfig::default()
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// Requested-queries sweep over dimensions (error-free algorithm).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuerySweepTrial {
    pub trial: usize,
    pub seed: u64,
    pub requested: u64,
    pub imputed: u64,
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuerySweepRow {
    pub d: usize,
    pub mean_requested: f64,
    pub std_requested: f64,
    /// `log2 Q(n, d)`: the information-theoretic floor.
    pub lower_bound_bits: f64,
    pub ratio_to_bound: f64,
    pub per_trial: Vec<QuerySweepTrial>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuerySweepPayload {
    pub config: ExperimentConfig,
    pub version: String,
    pub rows: Vec<QuerySweepRow>,
}

/// For each dimension: fresh unit-cube instances, one error-free ranking
/// per trial, mean/std of requested queries next to the exact lower
/// bound.
pub fn run_query_sweep(cfg: &ExperimentConfig) -> Result<QuerySweepPayload> {
    let geom = cfg.geom();
    let rows = cfg
        .dims
        .iter()
        .map(|&d| {
            let trials: Vec<QuerySweepTrial> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| -> Result<QuerySweepTrial> {
                    let seed = derive_seed(cfg.seed, (d as u64) << 32 | trial as u64);
                    let (emb, reference) = unit_cube_instance(cfg.n, d, seed);
                    let mut oracle = SimOracle::geometric(&emb, reference.clone())?;
                    let result =
                        rank_errorfree_with(&emb, &mut oracle, cfg.strategy, seed, &geom)?;
                    Ok(QuerySweepTrial {
                        trial,
                        seed,
                        requested: result.requested,
                        imputed: result.imputed,
                        exact: result.order == emb.rank_by_distance(&reference),
                    })
                })
                .collect::<Result<_>>()?;
            let requested: Vec<f64> = trials.iter().map(|t| t.requested as f64).collect();
            let (mean, std) = mean_std(&requested);
            let bound = lower_bound_bits(cfg.n as u64, d as u32);
            Ok(QuerySweepRow {
                d,
                mean_requested: mean,
                std_requested: std,
                lower_bound_bits: bound,
                ratio_to_bound: mean / bound,
                per_trial: trials,
            })
        })
        .collect::<Result<_>>()?;
    Ok(QuerySweepPayload {
        config: cfg.clone(),
        version: VERSION.to_string(),
        rows,
    })
}

pub fn query_sweep_csv(payload: &QuerySweepPayload) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "d",
        "trials",
        "mean_requested",
        "std_requested",
        "lower_bound_bits",
        "ratio_to_bound",
    ];
    let rows = payload
        .rows
        .iter()
        .map(|r| {
            vec![
                r.d.to_string(),
                r.per_trial.len().to_string(),
                format!("{}", r.mean_requested),
                format!("{}", r.std_requested),
                format!("{}", r.lower_bound_bits),
                format!("{}", r.ratio_to_bound),
            ]
        })
        .collect();
    (header, rows)
}

// ---------------------------------------------------------------------------
// Random-vs-adaptive query comparison.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomQueryRow {
    pub m: usize,
    pub trials: usize,
    pub unique_count: usize,
    pub unique_rate: f64,
    /// Exact `C(m, d) / C(N, d)` as a float.
    pub exact_prob: f64,
    /// The closed-form companion `(e m / N)^d`.
    pub chernoff_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomVsAdaptivePayload {
    pub config: ExperimentConfig,
    pub version: String,
    pub rows: Vec<RandomQueryRow>,
    pub adaptive_mean_requested: f64,
    /// Smallest swept `m` whose empirical unique rate reached 1/2, if any.
    pub smallest_half_rate_m: Option<usize>,
}

/// Sweep `m` random queries per trial and compare the empirical
/// unique-ranking rate with the exact probability, next to the adaptive
/// algorithm's requested count on the same instance distribution.
pub fn run_random_vs_adaptive(
    cfg: &ExperimentConfig,
    ms: Option<Vec<usize>>,
) -> Result<RandomVsAdaptivePayload> {
    let d = *cfg.dims.first().unwrap_or(&2);
    let total = pair_count(cfg.n);
    let geom = cfg.geom();
    let ms = ms.unwrap_or_else(|| default_m_sweep(cfg.n, total));

    let rows: Vec<RandomQueryRow> = ms
        .iter()
        .map(|&m| {
            let uniques: Vec<bool> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| -> Result<bool> {
                    let seed = derive_seed(cfg.seed, (m as u64) << 24 | trial as u64);
                    let (emb, reference) = unit_cube_instance(cfg.n, d, seed);
                    let mut oracle = SimOracle::geometric(&emb, reference)?;
                    let out = rank_random_queries_with(&emb, &mut oracle, m, seed, &geom)?;
                    Ok(out.unique)
                })
                .collect::<Result<_>>()?;
            let unique_count = uniques.iter().filter(|&&u| u).count();
            let prob = random_query_unique_prob(m as u64, total as u64, d as u32)?;
            Ok(RandomQueryRow {
                m,
                trials: cfg.trials,
                unique_count,
                unique_rate: unique_count as f64 / cfg.trials as f64,
                exact_prob: prob.exact_f64(),
                chernoff_bound: prob.bound,
            })
        })
        .collect::<Result<_>>()?;

    let adaptive: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<f64> {
            let seed = derive_seed(cfg.seed, 0xada0_0000 | trial as u64);
            let (emb, reference) = unit_cube_instance(cfg.n, d, seed);
            let mut oracle = SimOracle::geometric(&emb, reference)?;
            let result = rank_errorfree_with(&emb, &mut oracle, Strategy::Binary, seed, &geom)?;
            Ok(result.requested as f64)
        })
        .collect::<Result<_>>()?;
    let (adaptive_mean, _) = mean_std(&adaptive);

    let smallest_half_rate_m = rows
        .iter()
        .find(|r| r.unique_rate >= 0.5)
        .map(|r| r.m);

    Ok(RandomVsAdaptivePayload {
        config: cfg.clone(),
        version: VERSION.to_string(),
        rows,
        adaptive_mean_requested: adaptive_mean,
        smallest_half_rate_m,
    })
}

fn default_m_sweep(n: usize, total: usize) -> Vec<usize> {
    let mut ms = vec![0, n];
    for frac in [0.05, 0.1, 0.2, 0.35, 0.5, 0.7, 0.85, 1.0] {
        ms.push(((total as f64) * frac).round() as usize);
    }
    ms.sort_unstable();
    ms.dedup();
    ms
}

pub fn random_vs_adaptive_csv(
    payload: &RandomVsAdaptivePayload,
) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "m",
        "trials",
        "unique_count",
        "unique_rate",
        "exact_prob",
        "chernoff_bound",
    ];
    let rows = payload
        .rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                r.trials.to_string(),
                r.unique_count.to_string(),
                format!("{}", r.unique_rate),
                format!("{}", r.exact_prob),
                format!("{}", r.chernoff_bound),
            ]
        })
        .collect();
    (header, rows)
}

// ---------------------------------------------------------------------------
// Ambiguity-rate decay (linear strategy, instrumented).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbiguityRateRow {
    /// Ranked-prefix size when the comparisons were made.
    pub k: usize,
    pub candidates: u64,
    pub requested: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbiguityRatePayload {
    pub config: ExperimentConfig,
    pub version: String,
    pub d: usize,
    pub rows: Vec<AmbiguityRateRow>,
    /// Least-squares slope of `ln rate` on `ln k` over `k in [2d, n)`.
    pub loglog_slope: f64,
    pub loglog_intercept: f64,
}

/// Instrument the linear-strategy run: per prefix size `k`, the fraction
/// of the `k` candidate comparisons that were ambiguous (requested),
/// pooled over trials, with a fitted log-log slope.
pub fn run_ambiguity_rate(cfg: &ExperimentConfig, d: usize) -> Result<AmbiguityRatePayload> {
    let geom = cfg.geom();
    let per_trial: Vec<Vec<(usize, u64, u64)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<(usize, u64, u64)>> {
            let seed = derive_seed(cfg.seed, 0xa3b1_0000 | trial as u64);
            let (emb, reference) = unit_cube_instance(cfg.n, d, seed);
            let mut oracle = SimOracle::geometric(&emb, reference)?;
            let (_, steps) =
                rank_errorfree_traced(&emb, &mut oracle, Strategy::Linear, seed, &geom)?;
            Ok(steps
                .iter()
                .map(|s| (s.prefix_len, s.candidates, s.requested))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut candidates = vec![0u64; cfg.n];
    let mut requested = vec![0u64; cfg.n];
    for steps in &per_trial {
        for &(k, c, r) in steps {
            candidates[k] += c;
            requested[k] += r;
        }
    }
    let rows: Vec<AmbiguityRateRow> = (1..cfg.n)
        .filter(|&k| candidates[k] > 0)
        .map(|k| AmbiguityRateRow {
            k,
            candidates: candidates[k],
            requested: requested[k],
            rate: requested[k] as f64 / candidates[k] as f64,
        })
        .collect();

    // Fit on geometric bins rather than raw per-k rows: at large k most
    // rows have zero requests, and dropping zeros (log of 0) would bias
    // the slope toward flat. Pooling each bin keeps the tail honest.
    let mut fit: Vec<(f64, f64)> = Vec::new();
    let mut lo = (2 * d).max(1);
    while lo < cfg.n {
        let hi = ((lo as f64 * 1.3).ceil() as usize).max(lo + 1).min(cfg.n);
        let (mut cand, mut req) = (0u64, 0u64);
        for k in lo..hi {
            cand += candidates[k];
            req += requested[k];
        }
        if cand > 0 && req > 0 {
            let mid = (lo as f64 * (hi - 1) as f64).sqrt();
            fit.push((mid.ln(), (req as f64 / cand as f64).ln()));
        }
        lo = hi;
    }
    let (slope, intercept) = least_squares(&fit);

    Ok(AmbiguityRatePayload {
        config: cfg.clone(),
        version: VERSION.to_string(),
        d,
        rows,
        loglog_slope: slope,
        loglog_intercept: intercept,
    })
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, 0.0);
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return (0.0, 0.0);
    }
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

/// Decile-smoothed rates for the monotone-trend check: bucket the rows
/// into ten equal `k` ranges and average within each.
pub fn decile_smoothed_rates(payload: &AmbiguityRatePayload) -> Vec<f64> {
    let rows = &payload.rows;
    if rows.is_empty() {
        return Vec::new();
    }
    let lo = rows.first().unwrap().k as f64;
    let hi = rows.last().unwrap().k as f64 + 1.0;
    let mut sums = vec![0.0f64; 10];
    let mut counts = vec![0usize; 10];
    for r in rows {
        let bucket = (((r.k as f64 - lo) / (hi - lo)) * 10.0).floor() as usize;
        let bucket = bucket.min(9);
        sums[bucket] += r.rate;
        counts[bucket] += 1;
    }
    sums.iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect()
}

pub fn ambiguity_rate_csv(payload: &AmbiguityRatePayload) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["k", "candidates", "requested", "rate"];
    let rows = payload
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.candidates.to_string(),
                r.requested.to_string(),
                format!("{}", r.rate),
            ]
        })
        .collect();
    (header, rows)
}

// ---------------------------------------------------------------------------
// Robust suite (persistent errors).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustTrialRow {
    pub trial: usize,
    pub seed: u64,
    pub ranked: usize,
    pub skipped: usize,
    /// Fraction of ranked-subset pairs ordered like the truth.
    pub subset_accuracy: f64,
    /// Normalized Kendall-tau of the completed ranking vs the truth.
    pub completion_tau: f64,
    pub requested: u64,
    pub votes_held: u64,
    pub first_skip_ranked: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustSuitePayload {
    pub config: ExperimentConfig,
    pub version: String,
    pub d: usize,
    pub votes: usize,
    /// Theorem floor `n / (2R + 1)` on the ranked-subset size.
    pub subset_floor: f64,
    pub rows: Vec<RobustTrialRow>,
    pub mean_subset_accuracy: f64,
    pub min_ranked: usize,
    pub mean_completion_tau: f64,
    pub mean_requested: f64,
}

/// Persistent-noise robust runs: subset accuracy, subset-size floor and
/// completion quality per trial.
pub fn run_robust_suite(cfg: &ExperimentConfig, d: usize) -> Result<RobustSuitePayload> {
    let votes = cfg
        .votes
        .unwrap_or_else(|| persistent_vote_threshold(cfg.n, cfg.noise.p));
    let geom = cfg.geom();
    let rows: Vec<RobustTrialRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<RobustTrialRow> {
            let seed = derive_seed(cfg.seed, 0x10b0_0000 | trial as u64);
            let (emb, reference) = unit_cube_instance(cfg.n, d, seed);
            let truth = emb.rank_by_distance(&reference);
            let noise = NoiseSpec {
                seed,
                ..cfg.noise
            };
            let mut oracle = SimOracle::geometric_noisy(&emb, reference.clone(), noise)?;
            let vote_cfg = VoteConfig::new(votes, seed)?;
            let run = rank_robust_with(&emb, &mut oracle, &vote_cfg, &geom)?;
            let accuracy = subset_pair_accuracy(&run.partial.ranked_set, &truth)?;
            let completed = complete_ranking(&run.partial, &run.cell, &emb)?;
            let completion_tau = normalized_kendall_tau(&completed, &truth)?;
            Ok(RobustTrialRow {
                trial,
                seed,
                ranked: run.partial.ranked_set.len(),
                skipped: run.partial.skipped.len(),
                subset_accuracy: accuracy,
                completion_tau,
                requested: run.partial.requested,
                votes_held: run.partial.votes_held,
                first_skip_ranked: run.first_skip_ranked,
            })
        })
        .collect::<Result<_>>()?;

    let acc: Vec<f64> = rows.iter().map(|r| r.subset_accuracy).collect();
    let taus: Vec<f64> = rows.iter().map(|r| r.completion_tau).collect();
    let reqs: Vec<f64> = rows.iter().map(|r| r.requested as f64).collect();
    Ok(RobustSuitePayload {
        config: cfg.clone(),
        version: VERSION.to_string(),
        d,
        votes,
        subset_floor: cfg.n as f64 / (2.0 * votes as f64 + 1.0),
        min_ranked: rows.iter().map(|r| r.ranked).min().unwrap_or(0),
        mean_subset_accuracy: mean_std(&acc).0,
        mean_completion_tau: mean_std(&taus).0,
        mean_requested: mean_std(&reqs).0,
        rows,
    })
}

/// Fraction of pairs within `subset` whose relative order matches the
/// full truth ranking.
pub fn subset_pair_accuracy(subset: &[usize], truth: &[usize]) -> Result<f64> {
    if subset.len() < 2 {
        return Ok(1.0);
    }
    let rank = crate::metrics::rank_positions(truth)?;
    let mut correct = 0u64;
    let mut total = 0u64;
    for a in 0..subset.len() {
        for b in (a + 1)..subset.len() {
            total += 1;
            if rank[subset[a]] < rank[subset[b]] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / total as f64)
}

pub fn robust_suite_csv(payload: &RobustSuitePayload) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "trial",
        "ranked",
        "skipped",
        "subset_accuracy",
        "completion_tau",
        "requested",
        "votes_held",
    ];
    let rows = payload
        .rows
        .iter()
        .map(|r| {
            vec![
                r.trial.to_string(),
                r.ranked.to_string(),
                r.skipped.to_string(),
                format!("{}", r.subset_accuracy),
                format!("{}", r.completion_tau),
                r.requested.to_string(),
                r.votes_held.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

// ---------------------------------------------------------------------------
// First-skip statistic.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstSkipPayload {
    pub config: ExperimentConfig,
    pub version: String,
    pub d: usize,
    pub votes: usize,
    /// Count of objects ranked before the first skip, per trial.
    pub counts: Vec<usize>,
    /// `sqrt((n / R) / (6 ln 2))`.
    pub threshold: f64,
    pub rate_at_threshold: f64,
}

/// Distribution of the number of objects ranked before the first skip,
/// on early-stopped runs.
pub fn run_first_skip(cfg: &ExperimentConfig, d: usize) -> Result<FirstSkipPayload> {
    let votes = cfg
        .votes
        .unwrap_or_else(|| persistent_vote_threshold(cfg.n, cfg.noise.p));
    let geom = cfg.geom();
    let counts: Vec<usize> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<usize> {
            let seed = derive_seed(cfg.seed, 0xf1a5_0000 | trial as u64);
            let (emb, reference) = unit_cube_instance(cfg.n, d, seed);
            let noise = NoiseSpec {
                seed,
                ..cfg.noise
            };
            let mut oracle = SimOracle::geometric_noisy(&emb, reference, noise)?;
            let vote_cfg = VoteConfig::new(votes, seed)?;
            first_skip_count(&emb, &mut oracle, &vote_cfg, &geom)
        })
        .collect::<Result<_>>()?;
    let threshold = ((cfg.n as f64 / votes as f64) / (6.0 * std::f64::consts::LN_2)).sqrt();
    let hits = counts.iter().filter(|&&m| (m as f64) >= threshold).count();
    Ok(FirstSkipPayload {
        config: cfg.clone(),
        version: VERSION.to_string(),
        d,
        votes,
        rate_at_threshold: hits as f64 / counts.len() as f64,
        counts,
        threshold,
    })
}

// ---------------------------------------------------------------------------
// Parabola worst case.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParabolaRow {
    pub n: usize,
    /// Consecutive bisectors that are non-redundant faces of the
    /// lower-left cell (each still cuts the intersection of the others).
    pub nonredundant_faces: usize,
    pub requested: u64,
    pub floor: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParabolaPayload {
    pub version: String,
    pub seed: u64,
    pub rows: Vec<ParabolaRow>,
}

/// The adversarial construction: points on a parabola whose lower-left
/// cell is bounded by all `n - 1` consecutive bisectors, forcing at
/// least `n - 1` requests from any reference deep in that cell.
pub fn run_parabola(ns: &[usize], seed: u64) -> Result<ParabolaPayload> {
    let geom = GeomConfig::default();
    let rows = ns
        .iter()
        .map(|&n| {
            let emb = parabola_embedding(n)?;
            let reference = parabola_adversarial_reference();

            // Face check: each consecutive bisector still cuts the
            // intersection of all the others, so the cell truly has
            // n - 1 sides.
            let mut nonredundant = 0usize;
            for k in 0..(n - 1) {
                let mut cs = ConstraintSet::for_embedding(&emb, &geom);
                for other in 0..(n - 1) {
                    if other != k {
                        cs.add(bisector(&emb, other, other + 1)?, RequiredSide::Negative);
                    }
                }
                if cs.is_ambiguous(&bisector(&emb, k, k + 1)?)? {
                    nonredundant += 1;
                }
            }

            let mut oracle = SimOracle::geometric(&emb, reference)?;
            let result = rank_errorfree_with(&emb, &mut oracle, Strategy::Binary, seed, &geom)?;
            Ok(ParabolaRow {
                n,
                nonredundant_faces: nonredundant,
                requested: result.requested,
                floor: (n - 1) as u64,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ParabolaPayload {
        version: VERSION.to_string(),
        seed,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Similarity-matrix study (the robust algorithm on matrix-derived labels).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixStudyRow {
    pub d: usize,
    pub references: usize,
    pub mean_pct_requested: f64,
    pub std_pct_requested: f64,
    /// Mean disagreement between the matrix labels and the algorithm's
    /// completed output.
    pub mean_err_output: f64,
    /// Same disagreement restricted to pairs inside the ranked subset.
    pub mean_err_output_ranked: f64,
    /// Mean disagreement between the matrix labels and the embedding's
    /// own labels (the best the embedding could do).
    pub mean_err_embedding: f64,
    /// Heuristic request rate `2R * 2d ln(n) / C(n,2)`.
    pub heuristic_pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixStudyPayload {
    pub version: String,
    pub votes: usize,
    pub seed: u64,
    pub rows: Vec<MatrixStudyRow>,
}

/// Run the robust algorithm once per reference row of the similarity
/// matrix against each provided embedding.
pub fn run_matrix_study(
    sim: &SimilarityMatrix,
    embeddings: &[(usize, Embedding)],
    votes: usize,
    seed: u64,
) -> Result<MatrixStudyPayload> {
    let n = sim.n();
    for (_, emb) in embeddings {
        if emb.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: emb.n(),
            });
        }
    }
    let geom = GeomConfig::default();
    let rows = embeddings
        .iter()
        .map(|(d, emb)| {
            let per_ref: Vec<ReferenceRun> = (0..n)
                .into_par_iter()
                .map(|k| {
                    matrix_reference_run(sim, emb, k, votes, derive_seed(seed, k as u64), &geom)
                })
                .collect::<Result<_>>()?;
            let pct: Vec<f64> = per_ref.iter().map(|r| r.requested_frac).collect();
            let err_out: Vec<f64> = per_ref.iter().map(|r| r.err_output).collect();
            let err_ranked: Vec<f64> = per_ref.iter().map(|r| r.err_output_ranked).collect();
            let err_emb: Vec<f64> = per_ref.iter().map(|r| r.err_embedding).collect();
            let (pct_mean, pct_std) = mean_std(&pct);
            let heuristic = 2.0 * votes as f64 * 2.0 * *d as f64 * (n as f64).ln()
                / pair_count(n) as f64;
            Ok(MatrixStudyRow {
                d: *d,
                references: n,
                mean_pct_requested: pct_mean,
                std_pct_requested: pct_std,
                mean_err_output: mean_std(&err_out).0,
                mean_err_output_ranked: mean_std(&err_ranked).0,
                mean_err_embedding: mean_std(&err_emb).0,
                heuristic_pct: heuristic,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MatrixStudyPayload {
        version: VERSION.to_string(),
        votes,
        seed,
        rows,
    })
}

struct ReferenceRun {
    requested_frac: f64,
    err_output: f64,
    err_output_ranked: f64,
    err_embedding: f64,
}

/// One reference row: rank the other `n - 1` objects by similarity to
/// object `k`.
fn matrix_reference_run(
    sim: &SimilarityMatrix,
    emb: &Embedding,
    k: usize,
    votes: usize,
    seed: u64,
    geom: &GeomConfig,
) -> Result<ReferenceRun> {
    let n = sim.n();
    // Sub-embedding without object k; oracle queries map back to the
    // original indices.
    let map: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let sub = Embedding::new(map.iter().map(|&i| emb.point(i).to_vec()).collect())?;
    let source = MatrixSource::new(sim, k)?;
    let mut oracle = RemappedOracle {
        inner: SimOracle::noiseless(source),
        map: &map,
    };
    let vote_cfg = VoteConfig::new(votes, seed)?;
    let run = rank_robust_with(&sub, &mut oracle, &vote_cfg, geom)?;
    let completed = complete_ranking(&run.partial, &run.cell, &sub)?;
    let in_ranked = {
        let mut flags = vec![false; n - 1];
        for &i in &run.partial.ranked_set {
            flags[i] = true;
        }
        flags
    };

    // Matrix labels y over the sub-indices (deterministic tie-break).
    let mut y_bits = Vec::with_capacity(pair_count(n - 1));
    for a in 0..(n - 1) {
        for b in (a + 1)..(n - 1) {
            let (label, _) = matrix_answer(sim, k, map[a], map[b])?;
            y_bits.push(label);
        }
    }
    let y_hat = LabelVector::from_permutation(&completed)?;
    let y_tilde = LabelVector::from_reference(&sub, emb.point(k))?;

    let mut disagree_out = 0usize;
    let mut disagree_emb = 0usize;
    let mut disagree_ranked = 0usize;
    let mut ranked_pairs = 0usize;
    let mut idx = 0usize;
    for a in 0..(n - 1) {
        for b in (a + 1)..(n - 1) {
            let out_differs = y_bits[idx] != y_hat.get(a, b);
            if out_differs {
                disagree_out += 1;
            }
            if in_ranked[a] && in_ranked[b] {
                ranked_pairs += 1;
                if out_differs {
                    disagree_ranked += 1;
                }
            }
            if y_bits[idx] != y_tilde.get(a, b) {
                disagree_emb += 1;
            }
            idx += 1;
        }
    }
    let pairs = pair_count(n - 1) as f64;
    Ok(ReferenceRun {
        requested_frac: run.partial.requested as f64 / pairs,
        err_output: disagree_out as f64 / pairs,
        err_output_ranked: disagree_ranked as f64 / ranked_pairs.max(1) as f64,
        err_embedding: disagree_emb as f64 / pairs,
    })
}

struct RemappedOracle<'a, O: Oracle> {
    inner: O,
    map: &'a [usize],
}

impl<O: Oracle> Oracle for RemappedOracle<'_, O> {
    fn answer(&mut self, i: usize, j: usize) -> Result<Label> {
        self.inner.answer(self.map[i], self.map[j])
    }

    fn stats(&self) -> OracleStats {
        self.inner.stats()
    }
}

/// Frozen surrogate study: a known planar embedding, similarities
/// `-distance` plus Gaussian noise, the documented vote threshold.
pub const SURROGATE_N: usize = 100;
pub const SURROGATE_SIGMA: f64 = 0.08;
pub const SURROGATE_VOTES: usize = 15;

pub fn run_matrix_study_surrogate(seed: u64) -> Result<MatrixStudyPayload> {
    let (emb, _) = unit_cube_instance(SURROGATE_N, 2, derive_seed(seed, 0xe0b));
    let sim = crate::gen::surrogate_similarity(&emb, SURROGATE_SIGMA, derive_seed(seed, 0x51e));
    run_matrix_study(&sim, &[(2, emb)], SURROGATE_VOTES, seed)
}

// ---------------------------------------------------------------------------
// Interactive session.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractiveMode {
    Errorfree,
    Robust,
}

impl std::str::FromStr for InteractiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "errorfree" => Ok(InteractiveMode::Errorfree),
            "robust" => Ok(InteractiveMode::Robust),
            other => Err(Error::invalid(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug)]
pub struct InteractiveOutcome {
    /// False when the session was aborted before completion.
    pub completed: bool,
    pub ranking: Option<Vec<usize>>,
    pub skipped: Vec<usize>,
    pub transcript: Vec<TranscriptRecord>,
    pub questions: u64,
}

/// Prompts and progress lines interleave on one underlying writer.
struct SharedWriter<'a>(std::rc::Rc<std::cell::RefCell<&'a mut dyn Write>>);

impl Write for SharedWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.borrow_mut().write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.0.borrow_mut().flush()
    }
}

struct Echo<'a> {
    out: SharedWriter<'a>,
    names: std::rc::Rc<Vec<String>>,
}

impl Progress for Echo<'_> {
    fn on_answer(&mut self, prefix: &[usize], _pair: (usize, usize), _label: Label) {
        self.show(prefix);
    }
}

impl Echo<'_> {
    fn show(&mut self, prefix: &[usize]) {
        let shown: Vec<&str> = prefix.iter().map(|&i| self.names[i].as_str()).collect();
        let _ = writeln!(self.out, "ranking so far: {}", shown.join(" < "));
    }
}

/// Drive the chosen algorithm against a human answering on `input`,
/// echoing the running partial ranking as answers come in. An aborted
/// session still returns its partial transcript.
pub fn run_interactive_session<R: BufRead, W: Write>(
    emb: &Embedding,
    names: Vec<String>,
    mode: InteractiveMode,
    votes: usize,
    seed: u64,
    input: R,
    output: &mut W,
) -> Result<InteractiveOutcome> {
    let display: std::rc::Rc<Vec<String>> = std::rc::Rc::new(
        (0..emb.n())
            .map(|i| {
                names
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("object-{i}"))
            })
            .collect(),
    );
    let shared: std::rc::Rc<std::cell::RefCell<&mut dyn Write>> =
        std::rc::Rc::new(std::cell::RefCell::new(output));

    let mut oracle = InteractiveOracle::new(
        display.as_ref().clone(),
        input,
        SharedWriter(shared.clone()),
    );
    let mut echo = Echo {
        out: SharedWriter(shared.clone()),
        names: display.clone(),
    };

    let run = match mode {
        InteractiveMode::Errorfree => {
            let mut session =
                crate::ranker::Session::new(emb, &mut oracle, &GeomConfig::default(), None);
            session
                .run(Strategy::Binary, seed, &mut |_| {}, &mut echo)
                .map(|r| (Some(r.order), Vec::new()))
        }
        InteractiveMode::Robust => {
            let cfg = VoteConfig::new(votes.max(1), seed)?;
            rank_robust_observed(
                emb,
                &mut oracle,
                &cfg,
                &GeomConfig::default(),
                &mut |prefix| echo.show(prefix),
            )
            .map(|run| (Some(run.partial.ranked_set), run.partial.skipped))
        }
    };

    let stats = oracle.stats();
    let transcript = oracle.into_transcript();
    let mut out = SharedWriter(shared);
    match run {
        Ok((ranking, skipped)) => {
            if let Some(order) = &ranking {
                let shown: Vec<&str> = order.iter().map(|&i| display[i].as_str()).collect();
                writeln!(out, "final ranking: {}", shown.join(" < "))?;
            }
            Ok(InteractiveOutcome {
                completed: true,
                ranking,
                skipped,
                transcript,
                questions: stats.total_calls,
            })
        }
        Err(Error::SessionAborted { .. }) => {
            writeln!(out, "session aborted; transcript preserved")?;
            Ok(InteractiveOutcome {
                completed: false,
                ranking: None,
                skipped: Vec::new(),
                transcript,
                questions: stats.total_calls,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(n: usize, dims: Vec<usize>, trials: usize) -> ExperimentConfig {
        ExperimentConfig::new(n, dims, trials, 7).unwrap()
    }

    #[test]
    fn query_sweep_small_scale() {
        let cfg = base_config(12, vec![1, 2], 3);
        let payload = run_query_sweep(&cfg).unwrap();
        assert_eq!(payload.rows.len(), 2);
        for row in &payload.rows {
            assert!(row.per_trial.iter().all(|t| t.exact));
            assert!(row.mean_requested > 0.0);
            assert!(row.lower_bound_bits > 0.0);
        }
    }

    #[test]
    fn query_sweep_is_deterministic() {
        let cfg = base_config(10, vec![2], 3);
        let a = run_query_sweep(&cfg).unwrap();
        let b = run_query_sweep(&cfg).unwrap();
        assert_eq!(
            crate::io::payload_bytes(&a).unwrap(),
            crate::io::payload_bytes(&b).unwrap()
        );
    }

    #[test]
    fn random_vs_adaptive_endpoints() {
        let mut cfg = base_config(8, vec![2], 10);
        cfg.seed = 3;
        let total = pair_count(8);
        let payload = run_random_vs_adaptive(&cfg, Some(vec![0, total])).unwrap();
        assert_eq!(payload.rows[0].unique_count, 0);
        assert_eq!(payload.rows[1].unique_count, 10);
        assert!((payload.rows[1].exact_prob - 1.0).abs() < 1e-12);
        assert!(payload.adaptive_mean_requested > 0.0);
        assert!(payload.adaptive_mean_requested < total as f64);
    }

    #[test]
    fn ambiguity_rate_rows_are_complete() {
        let cfg = base_config(25, vec![], 2);
        let payload = run_ambiguity_rate(&cfg, 2).unwrap();
        assert_eq!(payload.rows.len(), 24);
        for row in &payload.rows {
            assert_eq!(row.candidates, (row.k as u64) * 2);
            assert!(row.rate >= 0.0 && row.rate <= 1.0);
        }
        // Early comparisons are almost always ambiguous.
        assert!(payload.rows[0].rate > 0.9);
    }

    #[test]
    fn robust_suite_noiseless_is_exact() {
        let mut cfg = base_config(20, vec![], 3);
        cfg.votes = Some(3);
        let payload = run_robust_suite(&cfg, 2).unwrap();
        for row in &payload.rows {
            // Ranked subsets are exactly ordered; completion is exact only
            // when nothing was skipped (skipped pairs stay untested).
            assert_eq!(row.subset_accuracy, 1.0);
            if row.skipped == 0 {
                assert_eq!(row.completion_tau, 0.0);
            } else {
                assert!(row.completion_tau < 0.2);
            }
        }
    }

    #[test]
    fn parabola_floor_holds_at_small_n() {
        let payload = run_parabola(&[5, 8], 1).unwrap();
        for row in &payload.rows {
            assert_eq!(row.nonredundant_faces, row.n - 1);
            assert!(
                row.requested >= row.floor,
                "n = {}: requested {} < floor {}",
                row.n,
                row.requested,
                row.floor
            );
        }
    }

    #[test]
    fn matrix_study_noiseless_r1_is_error_free_on_ranked_pairs() {
        // Noiseless similarities, R = 1: every vote (or its tie-break) is
        // a correct response, so the ranked subset is ordered exactly.
        let (emb, _) = unit_cube_instance(12, 2, 5);
        let sim = crate::gen::surrogate_similarity(&emb, 0.0, 9);
        let payload = run_matrix_study(&sim, &[(2, emb)], 1, 4).unwrap();
        let row = &payload.rows[0];
        assert!(row.mean_err_embedding < 1e-12);
        assert!(row.mean_err_output_ranked < 1e-12);
    }

    #[test]
    fn interactive_errorfree_consistent_session() {
        let emb = Embedding::new(vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        // Reference near 0: answers consistent with 0 < 1 < 3.
        // Binary insertion asks at most 3 questions for n = 3.
        let input = b"y\ny\ny\nn\nn\nn\n" as &[u8];
        let mut output = Vec::new();
        let outcome = run_interactive_session(
            &emb,
            vec!["a".into(), "b".into(), "c".into()],
            InteractiveMode::Errorfree,
            1,
            42,
            input,
            &mut output,
        )
        .unwrap();
        assert!(outcome.completed);
        assert!(outcome.questions <= 3);
        let text = String::from_utf8(output).unwrap();
        assert!(text.contains("final ranking:"));
    }

    #[test]
    fn interactive_abort_saves_partial_transcript() {
        let emb = Embedding::new(vec![vec![0.0], vec![1.0], vec![3.0], vec![7.0]]).unwrap();
        let input = b"y\nn\n" as &[u8];
        let mut output = Vec::new();
        let outcome = run_interactive_session(
            &emb,
            vec![],
            InteractiveMode::Errorfree,
            1,
            0,
            input,
            &mut output,
        )
        .unwrap();
        assert!(!outcome.completed);
        assert_eq!(outcome.transcript.len(), 2);
    }
}
