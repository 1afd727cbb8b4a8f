//! Synthetic instance generators: unit-cube instances, the parabola
//! arrangement whose lower-left cell has `n - 1` sides, and a surrogate
//! similarity matrix for the matrix-oracle pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geom::Embedding;
use crate::oracle::SimilarityMatrix;

/// `n` points and a reference drawn i.i.d. uniform from `[0,1]^d`.
/// Resamples on exact ties (duplicate points, equidistant reference) so
/// the instance is in general position; identical seeds give identical
/// instances byte for byte.
pub fn unit_cube_instance(n: usize, d: usize, seed: u64) -> (Embedding, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = loop {
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
            .collect();
        if let Ok(emb) = Embedding::new(points) {
            break emb;
        }
    };
    let reference = loop {
        let r: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        if !has_equidistant_tie(&emb, &r) {
            break r;
        }
    };
    (emb, reference)
}

fn has_equidistant_tie(emb: &Embedding, r: &[f64]) -> bool {
    let mut dist: Vec<f64> = (0..emb.n()).map(|i| emb.distance_sq(i, r)).collect();
    dist.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    dist.windows(2).any(|w| w[0] == w[1])
}

/// Points `(t, t^2)` with `t` equispaced in `(0, 1]`. All the bisectors
/// of consecutive pairs bound one unbounded cell below the parabola, so
/// a reference deep in that cell forces at least `n - 1` requests.
pub fn parabola_embedding(n: usize) -> Result<Embedding> {
    let points = (1..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            vec![t, t * t]
        })
        .collect();
    Embedding::new(points)
}

/// A reference deep in the lower-left region of the parabola
/// arrangement; its distance order follows the parameter order.
pub fn parabola_adversarial_reference() -> Vec<f64> {
    vec![-2.0, -2.0]
}

/// Surrogate similarity matrix for an embedding: `s_{k,i} = -dist(k, i)`
/// plus symmetric Gaussian noise of scale `sigma`. Stands in for
/// human-judged similarities when no external dataset is available.
pub fn surrogate_similarity(emb: &Embedding, sigma: f64, seed: u64) -> SimilarityMatrix {
    let n = emb.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = emb.distance_sq(i, emb.point(j)).sqrt();
            let s = -dist + sigma * gaussian(&mut rng);
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    SimilarityMatrix::new(n, values).expect("surrogate matrix is symmetric by construction")
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; two uniforms per deviate is plenty here.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
