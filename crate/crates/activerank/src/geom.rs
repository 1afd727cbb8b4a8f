//! Geometric primitives: embeddings, bisecting hyperplanes, signed
//! halfspaces and the strict-feasibility test that decides whether a
//! pairwise query is ambiguous.
//!
//! A comparison "is the reference closer to object `i` or object `j`?"
//! corresponds to the side of the hyperplane bisecting the segment
//! `(theta_i, theta_j)`. Labels collected so far confine the reference to
//! an open cell (an intersection of open halfspaces clipped to a bounding
//! box); a new query is *ambiguous* exactly when its bisector cuts that
//! cell, i.e. both sides retain a strictly feasible interior.
//!
//! Feasibility is decided by a margin LP: maximize `t` subject to
//! `sign_k (a_k . x + b_k) >= t * ||a_k||` over the box with `t <= 1`.
//! The cell has interior iff the optimum exceeds `eps_feas`. Cached
//! interior witnesses, the inscribed (Chebyshev) ball and an optional
//! outer bounding box of the cell answer most queries without touching
//! the LP at all; the LP is the deciding fallback.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LpError, LpRow};

/// Relative tolerance for the on-plane band of [`side_of`]:
/// `eps = EPS_SIDE_REL * (1 + ||a|| ||x||)`.
pub const EPS_SIDE_REL: f64 = 1e-12;

/// Tolerances and box inflation used by a ranking session.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeomConfig {
    /// Strict-feasibility margin: a cell counts as nonempty when the
    /// margin LP attains more than this.
    pub eps_feas: f64,
    /// The LP needs a bounded region; the object bounding box is inflated
    /// symmetrically by this factor of its largest side.
    pub box_inflation: f64,
}

impl Default for GeomConfig {
    fn default() -> Self {
        GeomConfig {
            eps_feas: 1e-9,
            box_inflation: 100.0,
        }
    }
}

/// The `n` object locations in `R^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedding {
    coords: Vec<f64>,
    n: usize,
    d: usize,
}

impl Embedding {
    /// Build an embedding from one coordinate row per object.
    ///
    /// Rejects `n < 2`, `d < 1`, non-finite coordinates and pairs of
    /// points that coincide within `1e-12` of the coordinate span:
    /// degenerate pairs violate the general-position assumption and are
    /// surfaced at load time rather than silently perturbed.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::invalid("an embedding needs at least 2 objects"));
        }
        let d = points[0].len();
        if d < 1 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let mut coords = Vec::with_capacity(n * d);
        for row in &points {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            for &c in row {
                if !c.is_finite() {
                    return Err(Error::invalid("coordinates must be finite"));
                }
                coords.push(c);
            }
        }
        let emb = Embedding { coords, n, d };
        emb.check_general_position()?;
        Ok(emb)
    }

    /// Flat row-major coordinates; `coords.len() == n * d`.
    pub fn from_flat(coords: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if coords.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: coords.len(),
            });
        }
        Embedding::new(coords.chunks(d).map(|c| c.to_vec()).collect())
    }

    fn check_general_position(&self) -> Result<()> {
        let span = self.coordinate_span().max(f64::MIN_POSITIVE);
        let tol = 1e-12 * span;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let sep = self
                    .point(i)
                    .iter()
                    .zip(self.point(j))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                if sep <= tol {
                    return Err(Error::DegeneratePair { i, j });
                }
            }
        }
        Ok(())
    }

    fn coordinate_span(&self) -> f64 {
        let mut span = 0.0f64;
        for k in 0..self.d {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..self.n {
                let c = self.coords[i * self.d + k];
                lo = lo.min(c);
                hi = hi.max(c);
            }
            span = span.max(hi - lo);
        }
        span
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.d)
    }

    /// Squared distance from object `i` to an arbitrary point.
    pub fn distance_sq(&self, i: usize, x: &[f64]) -> f64 {
        self.point(i)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Object indices sorted by distance to `x`, closest first.
    /// Exact distance ties are broken by index, which keeps the result
    /// deterministic; callers that must reject ties check separately.
    pub fn rank_by_distance(&self, x: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_unstable_by(|&a, &b| {
            self.distance_sq(a, x)
                .partial_cmp(&self.distance_sq(b, x))
                .unwrap()
                .then(a.cmp(&b))
        });
        order
    }

    /// Axis-aligned bounding box of the objects, inflated symmetrically
    /// by `inflation` times the largest side (at least a unit pad, so
    /// degenerate spans still give a full-dimensional box).
    pub fn bounding_box(&self, inflation: f64) -> BoundingBox {
        let d = self.d;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in self.points() {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let side = (0..d).map(|k| hi[k] - lo[k]).fold(0.0f64, f64::max);
        let pad = (inflation * side).max(1.0);
        for k in 0..d {
            lo[k] -= pad;
            hi[k] += pad;
        }
        BoundingBox { lo, hi }
    }
}

/// Axis-aligned box; the bounded stage the feasibility LP works in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundingBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::invalid("box must have lo < hi in every axis"));
        }
        Ok(BoundingBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }
}

/// Binary outcome of a pairwise comparison `q_{i,j}`.
///
/// `Before` is the value-1 label: the first object precedes the second,
/// i.e. the reference is strictly closer to it. Ties are not representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Before,
    After,
}

impl Label {
    pub fn bit(self) -> u8 {
        match self {
            Label::Before => 1,
            Label::After => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Label {
        if bit == 0 {
            Label::After
        } else {
            Label::Before
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Before => Label::After,
            Label::After => Label::Before,
        }
    }
}

/// Sign of `a . x + b` relative to a hyperplane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Negative,
    On,
    Positive,
}

/// Side a constraint pins the reference to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequiredSide {
    Negative,
    Positive,
}

impl RequiredSide {
    /// Constraint side implied by a label for the pair the plane bisects:
    /// `Before` (closer to the first object) is the negative side.
    pub fn for_label(label: Label) -> RequiredSide {
        match label {
            Label::Before => RequiredSide::Negative,
            Label::After => RequiredSide::Positive,
        }
    }

    pub fn label(self) -> Label {
        match self {
            RequiredSide::Negative => Label::Before,
            RequiredSide::Positive => Label::After,
        }
    }
}

/// Oriented hyperplane `a . x + b = 0` bisecting an object pair.
/// The first object of `source_pair` lies strictly on the negative side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
    source_pair: (usize, usize),
}

impl Hyperplane {
    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn source_pair(&self) -> (usize, usize) {
        self.source_pair
    }

    /// Signed value `a . x + b`.
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    fn unit(&self) -> (Vec<f64>, f64) {
        let norm = dot(&self.normal, &self.normal).sqrt();
        (
            self.normal.iter().map(|&a| a / norm).collect(),
            self.offset / norm,
        )
    }
}

/// Bisecting hyperplane of the pair `(i, j)`: `a = theta_j - theta_i`,
/// `b = (||theta_i||^2 - ||theta_j||^2) / 2`, so `a . x + b < 0` exactly
/// when `x` is closer to `theta_i`.
pub fn bisector(emb: &Embedding, i: usize, j: usize) -> Result<Hyperplane> {
    if i == j {
        return Err(Error::DegeneratePair { i, j });
    }
    let (pi, pj) = (emb.point(i), emb.point(j));
    let normal: Vec<f64> = pj.iter().zip(pi).map(|(a, b)| a - b).collect();
    if dot(&normal, &normal) == 0.0 {
        return Err(Error::DegeneratePair { i, j });
    }
    let offset = 0.5 * (dot(pi, pi) - dot(pj, pj));
    Ok(Hyperplane {
        normal,
        offset,
        source_pair: (i, j),
    })
}

/// Sign of `a . x + b` with an on-plane band of width
/// `EPS_SIDE_REL * (1 + ||a|| ||x||)`.
pub fn side_of(h: &Hyperplane, x: &[f64]) -> Side {
    let v = h.value(x);
    let scale = 1.0 + dot(&h.normal, &h.normal).sqrt() * dot(x, x).sqrt();
    if v.abs() <= EPS_SIDE_REL * scale {
        Side::On
    } else if v < 0.0 {
        Side::Negative
    } else {
        Side::Positive
    }
}

/// How a hyperplane relates to the current cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellCut {
    /// Both sides keep a strict interior: the query is ambiguous.
    Both,
    /// Only the negative side is feasible (label `Before` is implied).
    OnlyNegative,
    /// Only the positive side is feasible (label `After` is implied).
    OnlyPositive,
    /// Neither side is feasible: the cell itself has empty interior.
    Neither,
}

#[derive(Debug, Clone)]
struct Witness {
    point: Vec<f64>,
    /// Minimum normalized slack over the stored constraints (box excluded;
    /// witnesses are always inside the box).
    margin: f64,
}

#[derive(Debug, Clone)]
struct CellCache {
    witnesses: Vec<Witness>,
    /// Margin-LP optimum `(x*, t*)`; `None` until solved for the current
    /// constraint list.
    chebyshev: Option<(Vec<f64>, f64)>,
    /// Outer bounding box of the (closed) cell, when enabled.
    outer: Option<BoundingBox>,
    rng: ChaCha8Rng,
}

const MAX_WITNESSES: usize = 32;

/// Conjunction of signed halfspaces known to contain the reference,
/// clipped to a bounding box. Owns per-session caches that accelerate
/// ambiguity tests; cache hits always agree with the LP, so results do
/// not depend on cache state.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    constraints: Vec<(Hyperplane, RequiredSide)>,
    /// Unit-normalized rows `u . x + c >= margin` with the sign folded in.
    rows: Vec<(Vec<f64>, f64)>,
    bbox: BoundingBox,
    eps_feas: f64,
    outer_enabled: bool,
    cache: RefCell<CellCache>,
}

impl ConstraintSet {
    pub fn new(bbox: BoundingBox, eps_feas: f64) -> Self {
        ConstraintSet {
            constraints: Vec::new(),
            rows: Vec::new(),
            bbox,
            eps_feas,
            outer_enabled: false,
            cache: RefCell::new(CellCache {
                witnesses: Vec::new(),
                chebyshev: None,
                outer: None,
                rng: ChaCha8Rng::seed_from_u64(0x5eed_ce11),
            }),
        }
    }

    /// Box from the embedding inflated per `cfg` (the usual construction).
    pub fn for_embedding(emb: &Embedding, cfg: &GeomConfig) -> Self {
        ConstraintSet::new(emb.bounding_box(cfg.box_inflation), cfg.eps_feas)
    }

    /// Maintain an outer bounding box of the cell. Pays off when many
    /// hyperplanes far from the cell must be certified unambiguous (the
    /// voting-set scans of the robust ranker); costs `2d` small LPs per
    /// constraint added.
    pub fn enable_outer_box(&mut self, enabled: bool) {
        self.outer_enabled = enabled;
        if !enabled {
            self.cache.borrow_mut().outer = None;
        }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[(Hyperplane, RequiredSide)] {
        &self.constraints
    }

    pub fn bounding_box(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn eps_feas(&self) -> f64 {
        self.eps_feas
    }

    /// Append a signed halfspace. Never enlarges the feasible region.
    pub fn add(&mut self, h: Hyperplane, side: RequiredSide) {
        let (mut u, mut c) = h.unit();
        if side == RequiredSide::Negative {
            for v in &mut u {
                *v = -*v;
            }
            c = -c;
        }
        {
            let cache = &mut *self.cache.borrow_mut();
            cache.chebyshev = None;
            cache.outer = None;
            cache.witnesses.retain_mut(|w| {
                let slack = dot(&u, &w.point) + c;
                w.margin = w.margin.min(slack);
                w.margin > self.eps_feas
            });
        }
        self.rows.push((u, c));
        self.constraints.push((h, side));
    }

    /// Minimum normalized slack of `x` over the stored constraints
    /// (`+inf` when none). Box membership is checked separately.
    pub fn margin_at(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|(u, c)| dot(u, x) + c)
            .fold(f64::INFINITY, f64::min)
    }

    /// Strict feasibility: does the open cell clipped to the box have a
    /// nonempty interior (margin-LP optimum above `eps_feas`)?
    pub fn has_interior(&self) -> Result<bool> {
        let (_, t) = self.ensure_chebyshev()?;
        Ok(t > self.eps_feas)
    }

    /// Deepest interior point: the `x` maximizing the margin LP.
    pub fn interior_point(&self) -> Result<Vec<f64>> {
        let (x, t) = self.ensure_chebyshev()?;
        if t <= self.eps_feas {
            return Err(Error::InconsistentConstraints {
                constraints: self.len(),
            });
        }
        Ok(x)
    }

    /// Margin-LP optimum `(x*, t*)`, cached until the next `add`.
    pub fn chebyshev(&self) -> Result<(Vec<f64>, f64)> {
        self.ensure_chebyshev()
    }

    /// Does `h` cut the cell? True exactly when both sides remain
    /// strictly feasible.
    pub fn is_ambiguous(&self, h: &Hyperplane) -> Result<bool> {
        match self.cut(h)? {
            CellCut::Both => Ok(true),
            CellCut::OnlyNegative | CellCut::OnlyPositive => Ok(false),
            CellCut::Neither => Err(Error::InconsistentConstraints {
                constraints: self.len(),
            }),
        }
    }

    /// Label forced by the cell for the pair `h` bisects. Errors when the
    /// query is still ambiguous (contract violation) or when neither side
    /// is feasible (inconsistent labels were inserted as constraints).
    pub fn impute_label(&self, h: &Hyperplane) -> Result<Label> {
        let (i, j) = h.source_pair();
        match self.cut(h)? {
            CellCut::OnlyNegative => Ok(Label::Before),
            CellCut::OnlyPositive => Ok(Label::After),
            CellCut::Both => Err(Error::AmbiguousQuery { i, j }),
            CellCut::Neither => Err(Error::InconsistentConstraints {
                constraints: self.len(),
            }),
        }
    }

    /// Classify how `h` relates to the cell, resolving through (in order)
    /// cached witnesses, the inscribed ball, the outer box and finally
    /// one margin LP per undetermined side.
    pub fn cut(&self, h: &Hyperplane) -> Result<CellCut> {
        let (u, c) = h.unit();
        let eps = self.eps_feas;

        let (cx, ct) = self.ensure_chebyshev()?;
        if ct <= eps {
            return Ok(CellCut::Neither);
        }

        let mut neg = false;
        let mut pos = false;

        {
            let cache = self.cache.borrow();
            for w in &cache.witnesses {
                let v = dot(&u, &w.point) + c;
                if v < -eps {
                    neg = true;
                } else if v > eps {
                    pos = true;
                }
                if neg && pos {
                    return Ok(CellCut::Both);
                }
            }
        }

        // Inscribed-ball shortcut: a plane passing well inside the
        // Chebyshev ball certifies both sides at once.
        if !(neg && pos) {
            let v = dot(&u, &cx) + c;
            if v.abs() < ct - 4.0 * eps {
                let delta = 0.5 * (ct + v.abs());
                let plus: Vec<f64> = cx.iter().zip(&u).map(|(x, a)| x + delta * a).collect();
                let minus: Vec<f64> = cx.iter().zip(&u).map(|(x, a)| x - delta * a).collect();
                if self.bbox.contains(&plus) && self.bbox.contains(&minus) {
                    self.push_witness(plus);
                    self.push_witness(minus);
                    return Ok(CellCut::Both);
                }
            }
        }

        // Outer-box pruning: if the whole cell sits on one side, the
        // other side is infeasible without an LP.
        if !(neg && pos) && self.outer_enabled {
            if let Some((vmin, vmax)) = self.outer_value_range(&u, c)? {
                if vmin > eps {
                    return Ok(CellCut::OnlyPositive);
                }
                if vmax < -eps {
                    return Ok(CellCut::OnlyNegative);
                }
            }
        }

        if !neg {
            neg = self.side_feasible(&u, c, RequiredSide::Negative)?;
        }
        if !pos {
            pos = self.side_feasible(&u, c, RequiredSide::Positive)?;
        }

        Ok(match (neg, pos) {
            (true, true) => CellCut::Both,
            (true, false) => CellCut::OnlyNegative,
            (false, true) => CellCut::OnlyPositive,
            (false, false) => CellCut::Neither,
        })
    }

    fn ensure_chebyshev(&self) -> Result<(Vec<f64>, f64)> {
        if let Some(cheb) = self.cache.borrow().chebyshev.clone() {
            return Ok(cheb);
        }
        let sol = self.solve_margin_lp(None, None)?;
        let x = sol.point[..self.bbox.dim()].to_vec();
        let t = sol.value;
        self.cache.borrow_mut().chebyshev = Some((x.clone(), t));
        if t > self.eps_feas {
            self.push_witness(x.clone());
            self.scatter_witnesses(&x);
        }
        Ok((x, t))
    }

    fn side_feasible(&self, u: &[f64], c: f64, side: RequiredSide) -> Result<bool> {
        let extra = match side {
            // Require -(u.x + c) >= t, i.e. u.x + t <= -c.
            RequiredSide::Negative => (u.to_vec(), -c),
            RequiredSide::Positive => (u.iter().map(|&v| -v).collect::<Vec<f64>>(), c),
        };
        let sol = self.solve_margin_lp(Some(&extra), Some(self.eps_feas))?;
        if sol.value > self.eps_feas {
            self.push_witness(sol.point[..self.bbox.dim()].to_vec());
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Build and solve `max t` over the signed rows (plus optionally one
    /// extra folded row), the box and the cap `t <= 1`.
    fn solve_margin_lp(
        &self,
        extra: Option<&(Vec<f64>, f64)>,
        stop_above: Option<f64>,
    ) -> Result<lp::LpSolution> {
        let d = self.bbox.dim();
        let mut rows = Vec::with_capacity(self.rows.len() + 2 * d + 2);
        let fold = |u: &[f64], c: f64| {
            // u.x + c >= t  ->  t - u.x <= c
            let mut coeffs = vec![0.0; d + 1];
            for (k, &v) in u.iter().enumerate() {
                coeffs[k] = -v;
            }
            coeffs[d] = 1.0;
            LpRow { coeffs, rhs: c }
        };
        for (u, c) in &self.rows {
            rows.push(fold(u, *c));
        }
        if let Some((u, c)) = extra {
            // Extra arrives pre-folded as u.x + t <= rhs with rhs = c.
            let mut coeffs = vec![0.0; d + 1];
            coeffs[..d].copy_from_slice(u);
            coeffs[d] = 1.0;
            rows.push(LpRow { coeffs, rhs: *c });
        }
        for k in 0..d {
            let mut up = vec![0.0; d + 1];
            up[k] = 1.0;
            rows.push(LpRow {
                coeffs: up,
                rhs: self.bbox.hi[k],
            });
            let mut down = vec![0.0; d + 1];
            down[k] = -1.0;
            rows.push(LpRow {
                coeffs: down,
                rhs: -self.bbox.lo[k],
            });
        }
        let mut cap = vec![0.0; d + 1];
        cap[d] = 1.0;
        rows.push(LpRow {
            coeffs: cap,
            rhs: 1.0,
        });

        let x0 = self.start_point();
        let mut t0 = self.margin_at(&x0).min(1.0);
        if let Some((u, c)) = extra {
            t0 = t0.min(*c - dot(u, &x0));
        }
        let mut start = x0;
        start.push(t0);

        let mut objective = vec![0.0; d + 1];
        objective[d] = 1.0;

        lp::maximize(&rows, &objective, &start, stop_above).map_err(|e| self.lp_error(e))
    }

    fn start_point(&self) -> Vec<f64> {
        let cache = self.cache.borrow();
        cache
            .witnesses
            .first()
            .map(|w| w.point.clone())
            .unwrap_or_else(|| self.bbox.center())
    }

    fn lp_error(&self, _e: LpError) -> Error {
        Error::NumericalFailure {
            constraints: self.len(),
        }
    }

    fn push_witness(&self, point: Vec<f64>) {
        let margin = self.margin_at(&point);
        if margin <= self.eps_feas || !self.bbox.contains(&point) {
            return;
        }
        let mut cache = self.cache.borrow_mut();
        if cache.witnesses.len() >= MAX_WITNESSES {
            cache.witnesses.remove(0);
        }
        cache.witnesses.push(Witness { point, margin });
    }

    /// Hit-and-run scatter from a deep interior point: cheap, diverse
    /// witnesses that let later ambiguity tests skip the LP.
    fn scatter_witnesses(&self, from: &[f64]) {
        let d = self.bbox.dim();
        let eps = 2.0 * self.eps_feas;
        let steps = (2 * d + 8).min(16);
        let mut cache = self.cache.borrow_mut();
        let mut p = from.to_vec();
        for _ in 0..steps {
            let mut dir: Vec<f64> = (0..d).map(|_| cache.rng.gen::<f64>() - 0.5).collect();
            let norm = dot(&dir, &dir).sqrt();
            if norm < 1e-12 {
                continue;
            }
            for v in &mut dir {
                *v /= norm;
            }
            // Chord of the eps-shrunk cell along dir, including the box.
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for (u, c) in &self.rows {
                let val = dot(u, &p) + c - eps;
                let slope = dot(u, &dir);
                clip_chord(&mut lo, &mut hi, val, slope);
            }
            for k in 0..d {
                clip_chord(&mut lo, &mut hi, p[k] - self.bbox.lo[k], dir[k]);
                clip_chord(&mut lo, &mut hi, self.bbox.hi[k] - p[k], -dir[k]);
            }
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                continue;
            }
            let lambda = lo + (hi - lo) * cache.rng.gen::<f64>();
            for k in 0..d {
                p[k] += lambda * dir[k];
            }
            let margin = self.margin_at(&p);
            if margin > self.eps_feas && self.bbox.contains(&p) {
                if cache.witnesses.len() >= MAX_WITNESSES {
                    cache.witnesses.remove(0);
                }
                cache.witnesses.push(Witness {
                    point: p.clone(),
                    margin,
                });
            }
        }
    }

    /// `[min, max]` of `u . x + c` over an outer box of the closed cell;
    /// `None` when the outer box is disabled.
    fn outer_value_range(&self, u: &[f64], c: f64) -> Result<Option<(f64, f64)>> {
        if !self.outer_enabled {
            return Ok(None);
        }
        self.ensure_outer()?;
        let cache = self.cache.borrow();
        let Some(outer) = &cache.outer else {
            return Ok(None);
        };
        let mut vmin = c;
        let mut vmax = c;
        for k in 0..outer.dim() {
            let (a, b) = (u[k] * outer.lo[k], u[k] * outer.hi[k]);
            vmin += a.min(b);
            vmax += a.max(b);
        }
        Ok(Some((vmin, vmax)))
    }

    fn ensure_outer(&self) -> Result<()> {
        if self.cache.borrow().outer.is_some() {
            return Ok(());
        }
        let d = self.bbox.dim();
        // Closure of the cell: u.x + c >= 0 rows plus the box.
        let mut rows = Vec::with_capacity(self.rows.len() + 2 * d);
        for (u, c) in &self.rows {
            rows.push(LpRow {
                coeffs: u.iter().map(|&v| -v).collect(),
                rhs: *c,
            });
        }
        for k in 0..d {
            let mut up = vec![0.0; d];
            up[k] = 1.0;
            rows.push(LpRow {
                coeffs: up,
                rhs: self.bbox.hi[k],
            });
            let mut down = vec![0.0; d];
            down[k] = -1.0;
            rows.push(LpRow {
                coeffs: down,
                rhs: -self.bbox.lo[k],
            });
        }
        let start = {
            let (x, t) = self.ensure_chebyshev()?;
            if t <= self.eps_feas {
                return Ok(());
            }
            x
        };
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for k in 0..d {
            let mut obj = vec![0.0; d];
            obj[k] = -1.0;
            let sol = lp::maximize(&rows, &obj, &start, None).map_err(|e| self.lp_error(e))?;
            lo[k] = -sol.value;
            obj[k] = 1.0;
            let sol = lp::maximize(&rows, &obj, &start, None).map_err(|e| self.lp_error(e))?;
            hi[k] = sol.value;
        }
        self.cache.borrow_mut().outer = Some(BoundingBox { lo, hi });
        Ok(())
    }
}

/// Module-level forms of the cell queries, matching the operation names
/// used throughout the crate.
pub fn has_interior(cs: &ConstraintSet) -> Result<bool> {
    cs.has_interior()
}

pub fn is_ambiguous(cs: &ConstraintSet, h: &Hyperplane) -> Result<bool> {
    cs.is_ambiguous(h)
}

pub fn impute_label(cs: &ConstraintSet, h: &Hyperplane) -> Result<Label> {
    cs.impute_label(h)
}

pub fn interior_point(cs: &ConstraintSet) -> Result<Vec<f64>> {
    cs.interior_point()
}

fn clip_chord(lo: &mut f64, hi: &mut f64, val: f64, slope: f64) {
    // Keep lambda with val + lambda * slope >= 0.
    if slope.abs() < 1e-15 {
        if val < 0.0 {
            *lo = 1.0;
            *hi = 0.0;
        }
    } else if slope > 0.0 {
        *lo = lo.max(-val / slope);
    } else {
        *hi = hi.min(-val / slope);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
