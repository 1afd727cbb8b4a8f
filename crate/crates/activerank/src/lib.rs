//! Active ranking of `n` objects embedded in `R^d` from adaptively
//! selected pairwise comparisons.
//!
//! When rankings are realizable as distances to an unknown reference
//! point, only about `2 d log2 n` of the `C(n, 2)` possible comparisons
//! carry information. This crate implements the sequential algorithm
//! that requests a comparison only when it is ambiguous given the
//! labels collected so far, the noise-robust variant that decides
//! ambiguous comparisons by voting over related queries, the exact
//! counting machinery for the number of realizable rankings, and the
//! experiment harness behind the `activerank` binary.
//!
//! Start with [`ranker::rank_errorfree`] for the noiseless case,
//! [`robust::rank_robust`] for persistent errors, and the `examples/`
//! directory for runnable walkthroughs of each capability.

pub mod combinatorics;
pub mod error;
pub mod experiments;
pub mod gen;
pub mod geom;
pub mod io;
mod lp;
pub mod metrics;
pub mod oracle;
pub mod ranker;
pub mod robust;

pub use error::{Error, Result};
pub use geom::{
    bisector, side_of, ConstraintSet, Embedding, GeomConfig, Hyperplane, Label, RequiredSide,
    Side,
};
pub use oracle::{NoiseMode, NoiseSpec, Oracle, OracleStats, SimOracle, SimilarityMatrix};
pub use ranker::{rank_errorfree, rank_random_queries, RankingResult, Strategy};
pub use robust::{rank_majority_repeat, rank_robust, PartialRankingResult, VoteConfig};

/// Crate version string embedded in result files for provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Per-trial seed derived from a master seed; trials are independent
/// streams regardless of scheduling order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut x = master ^ 0x6a09_e667_f3bc_c908u64.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
