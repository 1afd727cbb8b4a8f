//! Command-line surface over the library: exact ranking counts, single
//! ranking runs, the robust variant, interactive sessions and the
//! experiment suite. Experiments write a JSON payload (full per-trial
//! data) plus a plot-ready CSV of aggregates.

use std::io::{stdin, stdout, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use activerank::combinatorics::{count_bounds, count_rankings, lower_bound_bits};
use activerank::error::Result;
use activerank::experiments::{
    ambiguity_rate_csv, query_sweep_csv, random_vs_adaptive_csv, robust_suite_csv,
    run_ambiguity_rate, run_first_skip, run_interactive_session, run_matrix_study,
    run_matrix_study_surrogate, run_parabola, run_query_sweep, run_random_vs_adaptive,
    run_robust_suite, ExperimentConfig, InteractiveMode,
};
use activerank::gen::unit_cube_instance;
use activerank::geom::{Embedding, GeomConfig};
use activerank::io;
use activerank::oracle::{NoiseMode, NoiseSpec, SimOracle};
use activerank::ranker::{rank_errorfree_with, Strategy};
use activerank::robust::{
    complete_ranking, persistent_vote_threshold, rank_robust_with, VoteConfig,
};

#[derive(Parser)]
#[command(
    name = "activerank",
    version,
    about = "Active ranking from adaptively selected pairwise comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Master RNG seed; identical seeds reproduce results byte for byte.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bounding-box inflation factor for the feasibility programs.
    #[arg(long = "box-inflation", default_value_t = 100.0)]
    box_inflation: f64,
}

#[derive(Args, Clone)]
struct NoiseOpts {
    /// Noise model for simulated oracles.
    #[arg(long, value_parser = parse_noise, default_value = "none")]
    noise: NoiseMode,
    /// Error probability in [0, 0.5).
    #[arg(long = "p", default_value_t = 0.0)]
    p: f64,
}

impl NoiseOpts {
    fn spec(&self, seed: u64) -> Result<NoiseSpec> {
        NoiseSpec::new(self.p, self.noise, seed)
    }
}

fn parse_noise(s: &str) -> std::result::Result<NoiseMode, String> {
    match s {
        "none" => Ok(NoiseMode::None),
        "iid" => Ok(NoiseMode::Iid),
        "persistent" => Ok(NoiseMode::Persistent),
        other => Err(format!("unknown noise mode '{other}'")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact number of realizable rankings Q(n, d) with bounds.
    Count { n: u64, d: u32 },
    /// Rank one instance with the error-free algorithm.
    Rank {
        /// Embedding CSV (one row per object; optional name column).
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Reference point coordinates, comma separated.
        #[arg(long)]
        reference: Option<String>,
        /// Synthetic instance size (used when no embedding is given).
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Synthetic instance dimension.
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value = "binary")]
        strategy: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Rank one instance with the noise-robust voting algorithm.
    Robust {
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Vote threshold R; defaults to ceil(2 (1-2p)^-2 ln n).
        #[arg(long = "R")]
        votes: Option<usize>,
        /// Write the per-decision run log (JSON lines) here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Rank objects by asking a human over the terminal.
    Interactive {
        /// Embedding CSV; a name column labels the prompts.
        #[arg(long)]
        embedding: PathBuf,
        /// Optional names file (one name per line) overriding the CSV.
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long, default_value = "errorfree")]
        mode: InteractiveMode,
        #[arg(long = "R", default_value_t = 3)]
        votes: usize,
        /// Transcript output path (JSON lines).
        #[arg(long, default_value = "transcript.jsonl")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Batch experiment suites; JSON + CSV outputs.
    Experiment {
        #[command(subcommand)]
        which: Experiment,
    },
}

#[derive(Subcommand)]
enum Experiment {
    /// Requested-query sweep over dimensions vs the exact lower bound.
    Fig3 {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Dimension list, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 5, 10, 20])]
        dims: Vec<usize>,
        /// Sweep d = 1, 10, 20, ..., 100 instead (slow).
        #[arg(long, default_value_t = false)]
        full_sweep: bool,
        #[arg(long, default_value_t = 25)]
        trials: usize,
        #[arg(long, default_value = "binary")]
        strategy: Strategy,
        #[arg(long, default_value = "fig3")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Unique-ranking rate of random queries vs the exact probability.
    Random {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Query counts to sweep, comma separated.
        #[arg(long = "m-list", value_delimiter = ',')]
        m_list: Option<Vec<usize>>,
        #[arg(long, default_value = "random")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Robust algorithm on similarity-matrix labels (external dataset or
    /// the built-in synthetic surrogate).
    Table1 {
        /// Similarity CSV (n x n, symmetric).
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Embedding CSVs paired with their dimension label, e.g.
        /// --emb 2=path/to/d2.csv --emb 3=path/to/d3.csv
        #[arg(long = "emb", value_parser = parse_dim_path)]
        embeddings: Vec<(usize, PathBuf)>,
        #[arg(long = "R", default_value_t = 15)]
        votes: usize,
        #[arg(long, default_value = "table1")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Per-prefix ambiguity rate of the linear strategy with a fitted
    /// log-log slope.
    Ambiguity {
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3])]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value = "ambiguity")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Persistent-noise robust runs: subset accuracy, size floor,
    /// completion quality.
    RobustSuite {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 25)]
        trials: usize,
        #[arg(long = "R")]
        votes: Option<usize>,
        #[arg(long, default_value = "robust-suite")]
        out: PathBuf,
        #[command(flatten)]
        noise: NoiseOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Objects ranked before the first skip (early-stopped runs).
    FirstSkip {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long = "R", default_value_t = 10)]
        votes: usize,
        #[arg(long, default_value = "first-skip")]
        out: PathBuf,
        #[command(flatten)]
        noise: NoiseOpts,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Adversarial parabola construction: the lower-left cell has n - 1
    /// sides, forcing at least n - 1 requests.
    Parabola {
        #[arg(long = "n-list", value_delimiter = ',', default_values_t = vec![5usize, 10, 20])]
        ns: Vec<usize>,
        #[arg(long, default_value = "parabola")]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn parse_dim_path(s: &str) -> std::result::Result<(usize, PathBuf), String> {
    let (dim, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected DIM=PATH, got '{s}'"))?;
    let dim: usize = dim.parse().map_err(|_| format!("bad dimension '{dim}'"))?;
    Ok((dim, PathBuf::from(path)))
}

fn parse_reference(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| {
                activerank::Error::InvalidArgument(format!("bad coordinate '{f}'"))
            })
        })
        .collect()
}

fn load_instance(
    embedding: &Option<PathBuf>,
    reference: &Option<String>,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<(Embedding, Vec<f64>, Option<Vec<String>>)> {
    match embedding {
        Some(path) => {
            let (emb, names) = io::read_embedding_csv(path)?;
            let reference = match reference {
                Some(r) => parse_reference(r)?,
                None => {
                    return Err(activerank::Error::InvalidArgument(
                        "--reference is required with --embedding".into(),
                    ))
                }
            };
            Ok((emb, reference, names))
        }
        None => {
            let (emb, reference) = unit_cube_instance(n, d, seed);
            Ok((emb, reference, None))
        }
    }
}

fn write_outputs<T: serde::Serialize>(
    out: &Path,
    payload: &T,
    csv: Option<(Vec<&'static str>, Vec<Vec<String>>)>,
) -> Result<()> {
    let json_path = out.with_extension("json");
    io::write_result_json(&json_path, payload)?;
    println!("wrote {}", json_path.display());
    if let Some((header, rows)) = csv {
        let csv_path = out.with_extension("csv");
        io::write_csv(&csv_path, &header, &rows)?;
        println!("wrote {}", csv_path.display());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Count { n, d } => {
            let q = count_rankings(n, d);
            println!("Q({n},{d}) = {q}");
            println!("log2 Q = {:.4} bits", lower_bound_bits(n, d));
            if let Ok(b) = count_bounds(n, d) {
                println!(
                    "advisory bracket: 2^{:.4} .. 2^{:.4}",
                    b.log2_lower, b.log2_upper
                );
            }
            Ok(())
        }
        Command::Rank {
            embedding,
            reference,
            n,
            d,
            strategy,
            out,
            common,
        } => {
            let (emb, r, names) = load_instance(&embedding, &reference, n, d, common.seed)?;
            let geom = GeomConfig {
                box_inflation: common.box_inflation,
                ..GeomConfig::default()
            };
            let mut oracle = SimOracle::geometric(&emb, r)?;
            let result = rank_errorfree_with(&emb, &mut oracle, strategy, common.seed, &geom)?;
            print_order("ranking", &result.order, names.as_deref());
            println!(
                "requested {} of {} comparisons ({} imputed); lower bound {:.2} bits",
                result.requested,
                activerank::metrics::pair_count(emb.n()),
                result.imputed,
                lower_bound_bits(emb.n() as u64, emb.d() as u32),
            );
            if let Some(out) = out {
                io::write_result_json(&out.with_extension("json"), &result)?;
                println!("wrote {}", out.with_extension("json").display());
            }
            Ok(())
        }
        Command::Robust {
            embedding,
            reference,
            n,
            d,
            votes,
            log,
            out,
            noise,
            common,
        } => {
            let (emb, r, names) = load_instance(&embedding, &reference, n, d, common.seed)?;
            let geom = GeomConfig {
                box_inflation: common.box_inflation,
                ..GeomConfig::default()
            };
            let spec = noise.spec(common.seed)?;
            let votes = votes.unwrap_or_else(|| persistent_vote_threshold(emb.n(), spec.p));
            let mut oracle = SimOracle::geometric_noisy(&emb, r.clone(), spec)?;
            let cfg = VoteConfig::new(votes, common.seed)?;
            let run = rank_robust_with(&emb, &mut oracle, &cfg, &geom)?;
            print_order("ranked subset", &run.partial.ranked_set, names.as_deref());
            println!(
                "ranked {} of {} objects ({} skipped); {} responses over {} votes",
                run.partial.ranked_set.len(),
                emb.n(),
                run.partial.skipped.len(),
                run.partial.requested,
                run.partial.votes_held,
            );
            let completed = complete_ranking(&run.partial, &run.cell, &emb)?;
            print_order("completed ranking", &completed, names.as_deref());
            let truth = emb.rank_by_distance(&r);
            println!(
                "normalized Kendall-tau vs truth: {:.4}",
                activerank::metrics::normalized_kendall_tau(&completed, &truth)?
            );
            if let Some(path) = log {
                io::write_run_log(&path, &run.log)?;
                println!("wrote {}", path.display());
            }
            if let Some(out) = out {
                io::write_result_json(&out.with_extension("json"), &run.partial)?;
                println!("wrote {}", out.with_extension("json").display());
            }
            Ok(())
        }
        Command::Interactive {
            embedding,
            names,
            mode,
            votes,
            out,
            common,
        } => {
            let (emb, csv_names) = io::read_embedding_csv(&embedding)?;
            let display = match names {
                Some(path) => std::fs::read_to_string(path)?
                    .lines()
                    .map(str::to_string)
                    .collect(),
                None => csv_names.unwrap_or_default(),
            };
            let input = BufReader::new(stdin());
            let mut output = stdout();
            let outcome = run_interactive_session(
                &emb,
                display,
                mode,
                votes,
                common.seed,
                input,
                &mut output,
            )?;
            io::write_transcript(&out, &outcome.transcript)?;
            println!(
                "{} after {} answers; transcript at {}",
                if outcome.completed {
                    "session complete"
                } else {
                    "session aborted"
                },
                outcome.transcript.len(),
                out.display()
            );
            Ok(())
        }
        Command::Experiment { which } => run_experiment(which),
    }
}

fn run_experiment(which: Experiment) -> Result<()> {
    match which {
        Experiment::Fig3 {
            n,
            dims,
            full_sweep,
            trials,
            strategy,
            out,
            common,
        } => {
            let dims = if full_sweep {
                let mut v = vec![1usize];
                v.extend((1..=10).map(|k| k * 10));
                v
            } else {
                dims
            };
            let mut cfg = ExperimentConfig::new(n, dims, trials, common.seed)?;
            cfg.strategy = strategy;
            cfg.box_inflation = common.box_inflation;
            let payload = run_query_sweep(&cfg)?;
            for row in &payload.rows {
                println!(
                    "d = {:3}: requested {:8.2} +- {:6.2}  bound {:8.2}  ratio {:.3}",
                    row.d,
                    row.mean_requested,
                    row.std_requested,
                    row.lower_bound_bits,
                    row.ratio_to_bound
                );
            }
            write_outputs(&out, &payload, Some(query_sweep_csv(&payload)))
        }
        Experiment::Random {
            n,
            d,
            trials,
            m_list,
            out,
            common,
        } => {
            let mut cfg = ExperimentConfig::new(n, vec![d], trials, common.seed)?;
            cfg.box_inflation = common.box_inflation;
            let payload = run_random_vs_adaptive(&cfg, m_list)?;
            for row in &payload.rows {
                println!(
                    "m = {:5}: unique rate {:.4} (exact {:.4}, bound {:.4})",
                    row.m, row.unique_rate, row.exact_prob, row.chernoff_bound
                );
            }
            println!(
                "adaptive algorithm mean requested: {:.1}",
                payload.adaptive_mean_requested
            );
            write_outputs(&out, &payload, Some(random_vs_adaptive_csv(&payload)))
        }
        Experiment::Table1 {
            sim,
            embeddings,
            votes,
            out,
            common,
        } => {
            let payload = match sim {
                Some(sim_path) => {
                    if embeddings.is_empty() {
                        return Err(activerank::Error::InvalidArgument(
                            "--emb DIM=PATH is required with --sim".into(),
                        ));
                    }
                    let sim = io::read_similarity_csv(&sim_path)?;
                    let embs = embeddings
                        .iter()
                        .map(|(d, path)| Ok((*d, io::read_embedding_csv(path)?.0)))
                        .collect::<Result<Vec<_>>>()?;
                    run_matrix_study(&sim, &embs, votes, common.seed)?
                }
                None => {
                    println!("no similarity file given; running the synthetic surrogate");
                    run_matrix_study_surrogate(common.seed)?
                }
            };
            for row in &payload.rows {
                println!(
                    "d = {}: requested {:.1}% +- {:.1}%  d(y,out) {:.3}  d(y,emb) {:.3}  heuristic {:.1}%",
                    row.d,
                    100.0 * row.mean_pct_requested,
                    100.0 * row.std_pct_requested,
                    row.mean_err_output,
                    row.mean_err_embedding,
                    100.0 * row.heuristic_pct
                );
            }
            write_outputs(&out, &payload, None)
        }
        Experiment::Ambiguity {
            n,
            dims,
            trials,
            out,
            common,
        } => {
            for d in dims {
                let mut cfg = ExperimentConfig::new(n, vec![d], trials, common.seed)?;
                cfg.box_inflation = common.box_inflation;
                cfg.strategy = Strategy::Linear;
                let payload = run_ambiguity_rate(&cfg, d)?;
                println!(
                    "d = {}: fitted log-log slope {:.3} over k in [{}, {})",
                    d,
                    payload.loglog_slope,
                    2 * d,
                    n
                );
                let suffixed = out.with_file_name(format!(
                    "{}-d{}",
                    out.file_name().unwrap_or_default().to_string_lossy(),
                    d
                ));
                write_outputs(&suffixed, &payload, Some(ambiguity_rate_csv(&payload)))?;
            }
            Ok(())
        }
        Experiment::RobustSuite {
            n,
            d,
            trials,
            votes,
            out,
            noise,
            common,
        } => {
            let mut cfg = ExperimentConfig::new(n, vec![d], trials, common.seed)?;
            cfg.noise = noise.spec(common.seed)?;
            if cfg.noise.mode == NoiseMode::None && noise.p > 0.0 {
                cfg.noise.mode = NoiseMode::Persistent;
            }
            cfg.votes = votes;
            cfg.box_inflation = common.box_inflation;
            let payload = run_robust_suite(&cfg, d)?;
            println!(
                "R = {}: mean subset accuracy {:.4}, min ranked {} (floor {:.1}), \
                 mean completion tau {:.4}, mean responses {:.1}",
                payload.votes,
                payload.mean_subset_accuracy,
                payload.min_ranked,
                payload.subset_floor,
                payload.mean_completion_tau,
                payload.mean_requested
            );
            write_outputs(&out, &payload, Some(robust_suite_csv(&payload)))
        }
        Experiment::FirstSkip {
            n,
            d,
            trials,
            votes,
            out,
            noise,
            common,
        } => {
            let mut cfg = ExperimentConfig::new(n, vec![d], trials, common.seed)?;
            cfg.noise = noise.spec(common.seed)?;
            cfg.votes = Some(votes);
            cfg.box_inflation = common.box_inflation;
            let payload = run_first_skip(&cfg, d)?;
            println!(
                "first-skip counts over {} trials: threshold {:.2}, rate at threshold {:.3}",
                trials, payload.threshold, payload.rate_at_threshold
            );
            let histogram = histogram_csv(&payload.counts);
            write_outputs(&out, &payload, Some(histogram))
        }
        Experiment::Parabola { ns, out, common } => {
            let payload = run_parabola(&ns, common.seed)?;
            for row in &payload.rows {
                println!(
                    "n = {:3}: {} of {} consecutive bisectors are faces; requested {} (floor {})",
                    row.n,
                    row.nonredundant_faces,
                    row.n - 1,
                    row.requested,
                    row.floor
                );
            }
            write_outputs(&out, &payload, None)
        }
    }
}

fn histogram_csv(counts: &[usize]) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let mut freq = std::collections::BTreeMap::new();
    for &c in counts {
        *freq.entry(c).or_insert(0usize) += 1;
    }
    let rows = freq
        .into_iter()
        .map(|(m, count)| vec![m.to_string(), count.to_string()])
        .collect();
    (vec!["ranked_before_first_skip", "trials"], rows)
}

fn print_order(label: &str, order: &[usize], names: Option<&[String]>) {
    let shown: Vec<String> = order
        .iter()
        .map(|&i| match names {
            Some(names) if i < names.len() => names[i].clone(),
            _ => i.to_string(),
        })
        .collect();
    println!("{label}: {}", shown.join(" < "));
}
