//! Sources of answers to pairwise queries: the geometric reference, a
//! similarity matrix row, noise wrappers and an interactive human session.
//! Every oracle keeps query accounting.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Embedding, Label};

/// Query accounting. `requested` counts distinct pairs ever asked,
/// `total_calls` counts every call including repeats, `ties_broken`
/// counts similarity ties resolved by the deterministic index rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStats {
    pub requested: u64,
    pub total_calls: u64,
    pub ties_broken: u64,
}

/// Noise model attached to a simulated oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    None,
    /// Independent flip on every call.
    Iid,
    /// Flip decided once per unordered pair; repeats agree.
    Persistent,
}

/// Error probability, mode and seed for simulated noise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p: f64,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    /// Requires `0 <= p < 1/2`; a majority can never recover past 1/2.
    pub fn new(p: f64, mode: NoiseMode, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&p) {
            return Err(Error::invalid(format!(
                "error probability must lie in [0, 0.5), got {p}"
            )));
        }
        Ok(NoiseSpec { p, mode, seed })
    }

    pub fn none() -> Self {
        NoiseSpec {
            p: 0.0,
            mode: NoiseMode::None,
            seed: 0,
        }
    }
}

/// Anything that can answer "does object `i` precede object `j`?".
pub trait Oracle {
    fn answer(&mut self, i: usize, j: usize) -> Result<Label>;
    fn stats(&self) -> OracleStats;
}

/// A deterministic ground-truth label provider; noise is layered on top.
/// Returns the label plus whether a tie-break rule fired.
pub trait LabelSource {
    fn label(&self, i: usize, j: usize) -> Result<(Label, bool)>;
}

/// Answers by Euclidean distance to a fixed reference point.
#[derive(Debug, Clone)]
pub struct GeometricSource<'a> {
    emb: &'a Embedding,
    reference: Vec<f64>,
}

impl<'a> GeometricSource<'a> {
    pub fn new(emb: &'a Embedding, reference: Vec<f64>) -> Result<Self> {
        if reference.len() != emb.d() {
            return Err(Error::DimensionMismatch {
                expected: emb.d(),
                got: reference.len(),
            });
        }
        Ok(GeometricSource { emb, reference })
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }
}

impl LabelSource for GeometricSource<'_> {
    fn label(&self, i: usize, j: usize) -> Result<(Label, bool)> {
        Ok((geometric_answer(self.emb, &self.reference, i, j)?, false))
    }
}

/// `Before` iff the reference is strictly closer to object `i`.
/// An exact tie violates general position and is an error.
pub fn geometric_answer(emb: &Embedding, r: &[f64], i: usize, j: usize) -> Result<Label> {
    let di = emb.distance_sq(i, r);
    let dj = emb.distance_sq(j, r);
    if di == dj {
        return Err(Error::EquidistantTie { i, j });
    }
    Ok(if di < dj { Label::Before } else { Label::After })
}

/// Symmetric similarity matrix; row `k` ranks everything against object `k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Validates the square shape and symmetry to 1e-9.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if (a - b).abs() > 1e-9 {
                    return Err(Error::AsymmetricMatrix { i, j, a, b });
                }
            }
        }
        Ok(SimilarityMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n)
    }
}

/// `Before` iff `s[k][i] > s[k][j]`; exact ties break toward index order
/// (`i < j` gives `Before`) and are flagged so the caller can count them.
pub fn matrix_answer(sim: &SimilarityMatrix, k: usize, i: usize, j: usize) -> Result<(Label, bool)> {
    if i == j || i == k || j == k {
        return Err(Error::invalid("matrix query needs distinct k, i, j"));
    }
    let (si, sj) = (sim.get(k, i), sim.get(k, j));
    if si > sj {
        Ok((Label::Before, false))
    } else if si < sj {
        Ok((Label::After, false))
    } else {
        Ok((if i < j { Label::Before } else { Label::After }, true))
    }
}

/// Row of a similarity matrix as a label source.
#[derive(Debug, Clone)]
pub struct MatrixSource<'a> {
    sim: &'a SimilarityMatrix,
    row: usize,
}

impl<'a> MatrixSource<'a> {
    pub fn new(sim: &'a SimilarityMatrix, row: usize) -> Result<Self> {
        if row >= sim.n() {
            return Err(Error::invalid(format!(
                "reference row {row} out of range (n = {})",
                sim.n()
            )));
        }
        Ok(MatrixSource { sim, row })
    }
}

impl LabelSource for MatrixSource<'_> {
    fn label(&self, i: usize, j: usize) -> Result<(Label, bool)> {
        matrix_answer(self.sim, self.row, i, j)
    }
}

/// Labels induced by a fixed ranking; handy for synthetic studies where
/// only the order matters.
#[derive(Debug, Clone)]
pub struct PermutationSource {
    rank: Vec<usize>,
}

impl PermutationSource {
    pub fn new(order: &[usize]) -> Result<Self> {
        Ok(PermutationSource {
            rank: crate::metrics::rank_positions(order)?,
        })
    }
}

impl LabelSource for PermutationSource {
    fn label(&self, i: usize, j: usize) -> Result<(Label, bool)> {
        Ok((
            if self.rank[i] < self.rank[j] {
                Label::Before
            } else {
                Label::After
            },
            false,
        ))
    }
}

/// Flip the base label with probability `p`, independently per call.
pub fn iid_noisy_answer<R: Rng>(base: Label, p: f64, rng: &mut R) -> Label {
    if p > 0.0 && rng.gen::<f64>() < p {
        base.flipped()
    } else {
        base
    }
}

/// Persistent flip: a deterministic function of the seed and the
/// unordered pair, so repeats agree and `(i, j)` / `(j, i)` stay
/// antisymmetric. O(1) memory instead of an n-by-n flip table.
pub fn persistent_noisy_answer(base: Label, p: f64, seed: u64, i: usize, j: usize) -> Label {
    if p > 0.0 && persistent_flip(p, seed, i, j) {
        base.flipped()
    } else {
        base
    }
}

/// The flip decision behind [`persistent_noisy_answer`].
pub fn persistent_flip(p: f64, seed: u64, i: usize, j: usize) -> bool {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    let mut h = splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    h = splitmix64(h ^ (lo as u64).wrapping_mul(0xff51_afd7_ed55_8ccd));
    h = splitmix64(h ^ (hi as u64).wrapping_mul(0xc4ce_b9fe_1a85_ec53));
    let uniform = (h >> 11) as f64 * (1.0 / ((1u64 << 53) as f64));
    uniform < p
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

enum NoiseState {
    None,
    Iid { p: f64, rng: ChaCha8Rng },
    Persistent { p: f64, seed: u64 },
}

/// A simulated oracle: a label source plus a noise model plus accounting.
pub struct SimOracle<S: LabelSource> {
    source: S,
    noise: NoiseState,
    stats: OracleStats,
    seen: HashSet<(usize, usize)>,
}

impl<S: LabelSource> SimOracle<S> {
    pub fn new(source: S, noise: NoiseSpec) -> Self {
        let state = match noise.mode {
            NoiseMode::None => NoiseState::None,
            NoiseMode::Iid => NoiseState::Iid {
                p: noise.p,
                rng: ChaCha8Rng::seed_from_u64(noise.seed),
            },
            NoiseMode::Persistent => NoiseState::Persistent {
                p: noise.p,
                seed: noise.seed,
            },
        };
        SimOracle {
            source,
            noise: state,
            stats: OracleStats::default(),
            seen: HashSet::new(),
        }
    }

    pub fn noiseless(source: S) -> Self {
        SimOracle::new(source, NoiseSpec::none())
    }
}

impl<'a> SimOracle<GeometricSource<'a>> {
    /// Noiseless geometric oracle for `(embedding, reference)`.
    pub fn geometric(emb: &'a Embedding, reference: Vec<f64>) -> Result<Self> {
        Ok(SimOracle::noiseless(GeometricSource::new(emb, reference)?))
    }

    pub fn geometric_noisy(
        emb: &'a Embedding,
        reference: Vec<f64>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        Ok(SimOracle::new(GeometricSource::new(emb, reference)?, noise))
    }
}

impl<S: LabelSource> Oracle for SimOracle<S> {
    fn answer(&mut self, i: usize, j: usize) -> Result<Label> {
        let (base, tie) = self.source.label(i, j)?;
        self.stats.total_calls += 1;
        if self.seen.insert((i.min(j), i.max(j))) {
            self.stats.requested += 1;
        }
        if tie {
            self.stats.ties_broken += 1;
        }
        Ok(match &mut self.noise {
            NoiseState::None => base,
            NoiseState::Iid { p, rng } => iid_noisy_answer(base, *p, rng),
            NoiseState::Persistent { p, seed } => {
                persistent_noisy_answer(base, *p, *seed, i, j)
            }
        })
    }

    fn stats(&self) -> OracleStats {
        self.stats
    }
}

/// One line of an interactive transcript. The timestamp lives in its own
/// field so everything else stays reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub pair: (usize, usize),
    pub answer: u8,
    pub timestamp: f64,
}

/// Blocking human oracle over arbitrary reader/writer pairs. Prompts
/// `Is <a> closer/preferred over <b>? [y/n]`, re-prompts on invalid
/// input, and aborts the session on end-of-input.
pub struct InteractiveOracle<R: BufRead, W: Write> {
    names: Vec<String>,
    input: R,
    output: W,
    transcript: Vec<TranscriptRecord>,
    stats: OracleStats,
    seen: HashSet<(usize, usize)>,
    reprompts: u64,
}

impl<R: BufRead, W: Write> InteractiveOracle<R, W> {
    pub fn new(names: Vec<String>, input: R, output: W) -> Self {
        InteractiveOracle {
            names,
            input,
            output,
            transcript: Vec::new(),
            stats: OracleStats::default(),
            seen: HashSet::new(),
            reprompts: 0,
        }
    }

    fn name(&self, i: usize) -> String {
        self.names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("object-{i}"))
    }

    pub fn transcript(&self) -> &[TranscriptRecord] {
        &self.transcript
    }

    pub fn into_transcript(self) -> Vec<TranscriptRecord> {
        self.transcript
    }

    /// Number of invalid inputs that forced a re-prompt.
    pub fn reprompts(&self) -> u64 {
        self.reprompts
    }
}

impl<R: BufRead, W: Write> Oracle for InteractiveOracle<R, W> {
    fn answer(&mut self, i: usize, j: usize) -> Result<Label> {
        loop {
            write!(
                self.output,
                "Is {} closer/preferred over {}? [y/n] ",
                self.name(i),
                self.name(j)
            )?;
            self.output.flush()?;
            let mut line = String::new();
            let read = self.input.read_line(&mut line)?;
            if read == 0 {
                return Err(Error::SessionAborted {
                    answered: self.transcript.len(),
                });
            }
            let label = match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => Label::Before,
                "n" | "no" => Label::After,
                _ => {
                    self.reprompts += 1;
                    writeln!(self.output, "please answer y or n")?;
                    continue;
                }
            };
            self.stats.total_calls += 1;
            if self.seen.insert((i.min(j), i.max(j))) {
                self.stats.requested += 1;
            }
            self.transcript.push(TranscriptRecord {
                pair: (i, j),
                answer: label.bit(),
                timestamp: unix_now(),
            });
            return Ok(label);
        }
    }

    fn stats(&self) -> OracleStats {
        self.stats
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}
