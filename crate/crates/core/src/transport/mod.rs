//! Semi-discrete optimal transport from `σ` to `ν = (1/L) Σ δ_{ω_l}`.
//!
//! A point `ω` belongs to the Laguerre cell of the site minimizing
//! `c(ω, ω_l) + λ_l`. The weights solve the concave dual
//!
//! ```text
//! G(λ) = ∫ min_l (c(ω, ω_l) + λ_l) dσ(ω) − (1/L) Σ_l λ_l,
//! ∂G/∂λ_l = m_l(λ) − 1/L,
//! ```
//!
//! so the maximizer makes every cell carry mass `1/L`. `σ` is replaced by a
//! Monte-Carlo quadrature; convergence is checked on an independent held-out
//! sample.
//!
//! The ascent direction solves `(Δ + εI) d = m − 1/L` where `Δ` is the graph
//! Laplacian of boundary densities between neighbouring cells, estimated from
//! quadrature points whose best and second-best scores are within a bandwidth
//! `h`. The shift `ε` grows after heavily backtracked steps and shrinks after
//! long ones. Steps are backtracked until the dual increases (Armijo) and no
//! cell mass falls below half of `min(initial minimum mass, 1/L)`.

mod refine;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{chord, dot, geodesic, sample_uniform, SphereSample, UnitVector};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Points per parallel work unit. Fixed so that reductions happen in the same
/// order whatever the thread count.
const CHUNK: usize = 2048;
/// Minimum quadrature points per cell for Monte-Carlo solves.
pub const MIN_POINTS_PER_CELL: usize = 50;
/// Largest `count · L` for which the exact combinatorial refinement runs.
const REFINE_LIMIT: usize = 1 << 23;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: u32 = 40;
const MIN_DAMPING: f64 = 1e-3;
/// Boundaries with fewer points near them use the global bandwidth.
const MIN_BOUNDARY_POINTS: usize = 8;
const MAX_DAMPING: f64 = 1e3;

/// Ground cost between a point and a site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostKind {
    /// `|ω − ω_l|^p`, Euclidean in the ambient space.
    Extrinsic { p: f64 },
    /// `d(ω, ω_l)^p`, geodesic on the sphere.
    Intrinsic { p: f64 },
}

impl CostKind {
    pub fn extrinsic(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(CostKind::Extrinsic { p })
    }

    pub fn intrinsic(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(CostKind::Intrinsic { p })
    }

    pub fn p(&self) -> f64 {
        match *self {
            CostKind::Extrinsic { p } | CostKind::Intrinsic { p } => p,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostKind::Extrinsic { .. } => "extrinsic",
            CostKind::Intrinsic { .. } => "intrinsic",
        }
    }

    pub fn is_intrinsic(&self) -> bool {
        matches!(self, CostKind::Intrinsic { .. })
    }

    /// Distance underlying the cost (chord or arc length).
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            CostKind::Extrinsic { .. } => chord(a, b),
            CostKind::Intrinsic { .. } => geodesic(a, b),
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            CostKind::Extrinsic { p } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                if p == 2.0 {
                    sq
                } else {
                    sq.powf(0.5 * p)
                }
            }
            CostKind::Intrinsic { p } => {
                let d = geodesic(a, b);
                if p == 2.0 {
                    d * d
                } else {
                    d.powf(p)
                }
            }
        }
    }

    /// Cost between antipodal points, the largest possible value.
    pub fn max_cost(&self) -> f64 {
        match *self {
            CostKind::Extrinsic { p } => 2f64.powf(p),
            CostKind::Intrinsic { p } => PI.powf(p),
        }
    }

    /// Smallest inner product `⟨a, b⟩` compatible with `cost(a, b) <= c`.
    fn dot_threshold(&self, c: f64) -> f64 {
        if c >= self.max_cost() {
            return f64::NEG_INFINITY;
        }
        let thr = match *self {
            CostKind::Extrinsic { p } => 1.0 - 0.5 * c.max(0.0).powf(2.0 / p),
            CostKind::Intrinsic { p } => c.max(0.0).powf(1.0 / p).cos(),
        };
        thr - 1e-9
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            allowed: "(1, ∞)",
        });
    }
    Ok(())
}

/// Sites and their additive weights. Weights are gauge-fixed so `min λ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualWeights {
    pub lambda: Vec<f64>,
    pub directions: Vec<UnitVector>,
    pub cost_kind: CostKind,
}

impl DualWeights {
    pub fn new(directions: Vec<UnitVector>, lambda: Vec<f64>, cost_kind: CostKind) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("at least one direction is required"));
        }
        if directions.len() != lambda.len() {
            return Err(Error::invalid(format!(
                "{} directions but {} weights",
                directions.len(),
                lambda.len()
            )));
        }
        let n = directions[0].dim();
        if let Some(d) = directions.iter().find(|d| d.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: d.dim(),
            });
        }
        Ok(Self {
            lambda,
            directions,
            cost_kind,
        })
    }

    /// Equal weights: the Voronoi diagram of the directions.
    pub fn zero(directions: Vec<UnitVector>, cost_kind: CostKind) -> Result<Self> {
        let l = directions.len();
        Self::new(directions, vec![0.0; l], cost_kind)
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.directions[0].dim()
    }

    pub(crate) fn sites(&self) -> Sites {
        Sites::new(&self.directions, self.cost_kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Accepted ascent steps.
    pub iterations: usize,
    /// `max_l |m_l − 1/L|` on the validation sample (the quadrature itself
    /// when no held-out sample is used).
    pub max_mass_error: f64,
    /// Same quantity on the quadrature used for the solve.
    pub training_mass_error: f64,
    /// `G(λ)` on the quadrature.
    pub dual_value: f64,
    /// Quadrature average of `c(ω, ω_{assign(ω)})`: an estimate of `MK_p^p`.
    pub transport_cost_p: f64,
    pub quadrature_size: usize,
    /// Whether the exact combinatorial refinement was used.
    pub refined: bool,
    /// `G` after every accepted step, starting at `λ = 0`.
    pub dual_trace: Vec<f64>,
}

/// How convergence is certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validation {
    /// Masses are re-measured on a fresh sample of the same size whose seed is
    /// derived from the quadrature seed.
    HeldOut,
    /// The quadrature is the source measure itself (equal point masses).
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Allowed `max_l |m_l − 1/L|`.
    pub tol: f64,
    pub max_iter: usize,
    pub validation: Validation,
}

impl SolverOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_iter: 200,
            validation: Validation::HeldOut,
        }
    }

    pub fn discrete(tol: f64) -> Self {
        Self {
            validation: Validation::Discrete,
            ..Self::new(tol)
        }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// Flat copy of the site coordinates for the inner loops.
pub(crate) struct Sites {
    n: usize,
    coords: Vec<f64>,
    kind: CostKind,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PointScan {
    pub best: u32,
    pub second: u32,
    /// Second-best score minus best score; `∞` if beyond the scan margin.
    pub gap: f64,
    pub score: f64,
    pub cost: f64,
}

impl Sites {
    pub(crate) fn new(directions: &[UnitVector], kind: CostKind) -> Self {
        let n = directions[0].dim();
        let coords = directions.iter().flat_map(|d| d.coords().iter().copied()).collect();
        Self { n, coords, kind }
    }

    pub(crate) fn len(&self) -> usize {
        self.coords.len() / self.n
    }

    #[inline]
    pub(crate) fn site(&self, l: usize) -> &[f64] {
        &self.coords[l * self.n..(l + 1) * self.n]
    }

    #[inline]
    pub(crate) fn cost(&self, x: &[f64], l: usize) -> f64 {
        self.kind.eval(x, self.site(l))
    }

    /// Best and second-best cells for `x`. Sites are pruned by inner product:
    /// any cell scoring within `margin` of the best has cost at most
    /// `U + margin − min λ`, where `U` is the score of the nearest site.
    #[inline]
    fn scan(&self, x: &[f64], lambda: &[f64], lambda_min: f64, margin: f64, dots: &mut [f64]) -> PointScan {
        let l_count = self.len();
        for (l, d) in dots.iter_mut().enumerate() {
            *d = dot(x, self.site(l));
        }
        let nearest = argmax_first(dots);
        let upper = self.cost(x, nearest) + lambda[nearest];
        let thr = self.kind.dot_threshold(upper + margin - lambda_min);

        let mut best = (u32::MAX, f64::INFINITY, 0.0);
        let mut second = (u32::MAX, f64::INFINITY);
        for l in 0..l_count {
            if dots[l] < thr {
                continue;
            }
            let c = self.cost(x, l);
            let s = c + lambda[l];
            if s < best.1 {
                second = (best.0, best.1);
                best = (l as u32, s, c);
            } else if s < second.1 {
                second = (l as u32, s);
            }
        }
        let gap = second.1 - best.1;
        PointScan {
            best: best.0,
            second: second.0,
            gap: if gap <= margin { gap } else { f64::INFINITY },
            score: best.1,
            cost: best.2,
        }
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Cell populations and dual value of one weight vector on one sample.
pub(crate) struct Evaluation {
    pub counts: Vec<u64>,
    pub score_sum: f64,
    pub cost_sum: f64,
    pub scans: Option<Vec<PointScan>>,
}

impl Evaluation {
    pub fn masses(&self) -> Vec<f64> {
        let total: u64 = self.counts.iter().sum();
        self.counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<u64>() as usize
    }

    pub fn max_mass_error(&self) -> f64 {
        let l = self.counts.len() as f64;
        self.masses()
            .iter()
            .map(|m| (m - 1.0 / l).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_mass(&self) -> f64 {
        self.masses().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn dual_value(&self, lambda: &[f64]) -> f64 {
        let n = self.total() as f64;
        self.score_sum / n - lambda.iter().sum::<f64>() / lambda.len() as f64
    }
}

pub(crate) fn evaluate(
    sites: &Sites,
    sample: &SphereSample,
    lambda: &[f64],
    margin: f64,
    keep_scans: bool,
) -> Evaluation {
    let l_count = sites.len();
    let lambda_min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let n = sample.n();
    let parts: Vec<(Vec<u64>, f64, f64, Vec<PointScan>)> = sample
        .flat()
        .par_chunks(CHUNK * n)
        .map(|chunk| {
            let mut dots = vec![0.0; l_count];
            let mut counts = vec![0u64; l_count];
            let (mut score_sum, mut cost_sum) = (0.0, 0.0);
            let mut scans = Vec::with_capacity(if keep_scans { chunk.len() / n } else { 0 });
            for x in chunk.chunks_exact(n) {
                let s = sites.scan(x, lambda, lambda_min, margin, &mut dots);
                counts[s.best as usize] += 1;
                score_sum += s.score;
                cost_sum += s.cost;
                if keep_scans {
                    scans.push(s);
                }
            }
            (counts, score_sum, cost_sum, scans)
        })
        .collect();

    let mut counts = vec![0u64; l_count];
    let (mut score_sum, mut cost_sum) = (0.0, 0.0);
    let mut scans = keep_scans.then(|| Vec::with_capacity(sample.count()));
    for (c, s, k, sc) in parts {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        score_sum += s;
        cost_sum += k;
        if let Some(all) = scans.as_mut() {
            all.extend(sc);
        }
    }
    Evaluation {
        counts,
        score_sum,
        cost_sum,
        scans,
    }
}

/// Index of the cell containing `omega`: the smallest `l` minimizing
/// `c(ω, ω_l) + λ_l`.
pub fn assign(omega: &UnitVector, w: &DualWeights) -> Result<usize> {
    if omega.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: omega.dim(),
        });
    }
    let sites = w.sites();
    let x = omega.coords();
    let mut best = (0, f64::INFINITY);
    for l in 0..w.len() {
        let s = sites.cost(x, l) + w.lambda[l];
        if s < best.1 {
            best = (l, s);
        }
    }
    Ok(best.0)
}

/// Cell index of every quadrature point.
pub fn assign_all(w: &DualWeights, quad: &SphereSample) -> Result<Vec<usize>> {
    check_sample(w, quad)?;
    let ev = evaluate(&w.sites(), quad, &w.lambda, 0.0, true);
    Ok(ev
        .scans
        .expect("scans requested")
        .iter()
        .map(|s| s.best as usize)
        .collect())
}

/// Fraction of quadrature points in each cell.
pub fn cell_masses(w: &DualWeights, quad: &SphereSample) -> Result<Vec<f64>> {
    check_sample(w, quad)?;
    Ok(evaluate(&w.sites(), quad, &w.lambda, 0.0, false).masses())
}

fn check_sample(w: &DualWeights, quad: &SphereSample) -> Result<()> {
    if quad.n() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: quad.n(),
        });
    }
    Ok(())
}

fn check_directions(directions: &[UnitVector]) -> Result<usize> {
    let first = directions
        .first()
        .ok_or_else(|| Error::invalid("at least one direction is required"))?;
    let n = first.dim();
    for d in directions {
        if d.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: d.dim(),
            });
        }
    }
    for i in 0..directions.len() {
        for j in 0..i {
            if chord(directions[i].coords(), directions[j].coords()) <= 1e-12 {
                return Err(Error::invalid(format!("directions {j} and {i} coincide")));
            }
        }
    }
    Ok(n)
}

/// Solves for equal-mass Laguerre weights.
///
/// Returns gauge-fixed weights with `max_l |m_l − 1/L| <= tol` on the
/// validation sample.
pub fn solve_dual(
    directions: &[UnitVector],
    cost_kind: CostKind,
    quad: &SphereSample,
    options: &SolverOptions,
) -> Result<(DualWeights, SolveReport)> {
    let n = check_directions(directions)?;
    check_p(cost_kind.p())?;
    if quad.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: quad.n(),
        });
    }
    let l_count = directions.len();
    let count = quad.count();
    match options.validation {
        Validation::HeldOut if count < MIN_POINTS_PER_CELL * l_count => {
            return Err(Error::invalid(format!(
                "quadrature of {count} points is below {MIN_POINTS_PER_CELL}·L = {}",
                MIN_POINTS_PER_CELL * l_count
            )))
        }
        Validation::Discrete if count < l_count => {
            return Err(Error::invalid("discrete quadrature needs at least L points"))
        }
        _ => {}
    }
    if !(options.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }

    let held_out = match options.validation {
        Validation::HeldOut => Some(sample_uniform(
            n,
            count,
            derive_seed(quad.seed(), &[stream::HELD_OUT]),
        )?),
        Validation::Discrete => None,
    };
    Solver {
        sites: Sites::new(directions, cost_kind),
        quad,
        held_out: held_out.as_ref(),
        options,
    }
    .run(directions)
}

struct Solver<'a> {
    sites: Sites,
    quad: &'a SphereSample,
    held_out: Option<&'a SphereSample>,
    options: &'a SolverOptions,
}

enum Check {
    Converged(f64),
    Failed(f64),
}

impl Solver<'_> {
    fn validate(&self, lambda: &[f64], training: &Evaluation) -> Check {
        let err = match self.held_out {
            Some(h) => evaluate(&self.sites, h, lambda, 0.0, false).max_mass_error(),
            None => training.max_mass_error(),
        };
        if err <= self.options.tol {
            Check::Converged(err)
        } else {
            Check::Failed(err)
        }
    }

    /// Backtracking from a unit step until the dual increases by the Armijo
    /// fraction of the predicted gain and every cell keeps mass above `floor`.
    fn line_search(
        &self,
        lambda: &[f64],
        direction: &[f64],
        grad: &[f64],
        dual: f64,
        floor: f64,
        margin: f64,
    ) -> Option<(Vec<f64>, Evaluation, f64, f64)> {
        let slope: f64 = grad.iter().zip(direction).map(|(g, d)| g * d).sum();
        if !(slope > 0.0) {
            return None;
        }
        let mut step = 1.0;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = lambda.iter().zip(direction).map(|(l, d)| l + step * d).collect();
            let ev = evaluate(&self.sites, self.quad, &trial, margin, true);
            let value = ev.dual_value(&trial);
            if ev.min_mass() >= floor && value >= dual + ARMIJO * step * slope {
                return Some((trial, ev, value, step));
            }
            step *= 0.5;
        }
        None
    }

    fn run(&self, directions: &[UnitVector]) -> Result<(DualWeights, SolveReport)> {
        let l_count = self.sites.len();
        let count = self.quad.count();
        let kind = self.sites.kind;
        let mut lambda = vec![0.0; l_count];
        let mut margin = kind.max_cost();
        let mut ev = evaluate(&self.sites, self.quad, &lambda, margin, true);
        if let Some(cell) = ev.counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyCellAtStart { cell });
        }
        let floor = 0.5 * ev.min_mass().min(1.0 / l_count as f64);
        let mut dual = ev.dual_value(&lambda);
        let mut trace = vec![dual];
        let mut target = match self.held_out {
            Some(_) => 0.5 * self.options.tol,
            None => self.options.tol,
        };
        let resolution = 0.5 / count as f64;
        let mut iterations = 0;
        let mut refined = false;
        let mut last_error = f64::INFINITY;
        let mut damping = MIN_DAMPING;

        loop {
            if ev.max_mass_error() <= target {
                match self.validate(&lambda, &ev) {
                    Check::Converged(_) => break,
                    Check::Failed(err) => {
                        last_error = err;
                        if target <= resolution {
                            return Err(Error::NonConvergence {
                                max_mass_error: err,
                                iterations,
                            });
                        }
                        target = (0.5 * target).max(resolution);
                        continue;
                    }
                }
            }
            if iterations >= self.options.max_iter {
                return Err(Error::NonConvergence {
                    max_mass_error: last_error.min(ev.max_mass_error()),
                    iterations,
                });
            }

            let scans = ev.scans.as_ref().expect("scans kept for training sample");
            let grad: Vec<f64> = ev.masses().iter().map(|m| m - 1.0 / l_count as f64).collect();
            let (newton, bandwidth, curvature) = newton_direction(scans, &grad, count, margin, damping);
            margin = (4.0 * bandwidth).min(kind.max_cost());
            let gradient: Vec<f64> = grad.iter().map(|g| g / curvature).collect();
            let accepted = self
                .line_search(&lambda, &newton, &grad, dual, floor, margin)
                .or_else(|| self.line_search(&lambda, &gradient, &grad, dual, floor, margin));

            match accepted {
                Some((l, e, d, step)) => {
                    // Levenberg-Marquardt damping.
                    if step < 0.25 {
                        damping = (damping * 4.0).min(MAX_DAMPING);
                    } else if step >= 0.5 {
                        damping = (damping * 0.25).max(MIN_DAMPING);
                    }
                    lambda = l;
                    ev = e;
                    dual = d;
                    trace.push(dual);
                    iterations += 1;
                }
                None => {
                    // Stalled on a kink of the sampled dual: finish combinatorially.
                    let stalled = Error::NonConvergence {
                        max_mass_error: last_error.min(ev.max_mass_error()),
                        iterations,
                    };
                    if refined || count * l_count > REFINE_LIMIT {
                        return Err(stalled);
                    }
                    refined = true;
                    let exact = refine::exact_weights(&self.sites, self.quad, &lambda).ok_or(stalled)?;
                    lambda = exact;
                    ev = evaluate(&self.sites, self.quad, &lambda, margin, true);
                    dual = ev.dual_value(&lambda);
                    trace.push(dual);
                    iterations += 1;
                    match self.validate(&lambda, &ev) {
                        Check::Converged(_) => break,
                        Check::Failed(err) => {
                            return Err(Error::NonConvergence {
                                max_mass_error: err,
                                iterations,
                            })
                        }
                    }
                }
            }
        }

        let shift = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        lambda.iter_mut().for_each(|l| *l -= shift);
        let final_ev = evaluate(&self.sites, self.quad, &lambda, 0.0, false);
        let max_mass_error = match self.validate(&lambda, &final_ev) {
            Check::Converged(e) => e,
            Check::Failed(e) => {
                return Err(Error::NonConvergence {
                    max_mass_error: e,
                    iterations,
                })
            }
        };
        let report = SolveReport {
            iterations,
            max_mass_error,
            training_mass_error: final_ev.max_mass_error(),
            dual_value: final_ev.dual_value(&lambda),
            transport_cost_p: final_ev.cost_sum / count as f64,
            quadrature_size: count,
            refined,
            dual_trace: trace,
        };
        let weights = DualWeights::new(directions.to_vec(), lambda, kind)?;
        Ok((weights, report))
    }
}

/// Newton-type ascent direction from the boundary-density Laplacian.
/// Returns the direction, the bandwidth used and the median diagonal curvature.
fn newton_direction(
    scans: &[PointScan],
    grad: &[f64],
    count: usize,
    margin: f64,
    damping: f64,
) -> (Vec<f64>, f64, f64) {
    let l_count = grad.len();
    let mut gaps: Vec<f64> = scans.iter().map(|s| s.gap).filter(|g| g.is_finite()).collect();
    let fraction = (40.0 * l_count as f64 / count as f64).clamp(0.02, 0.3);
    let wanted = ((fraction * count as f64) as usize).max(1);
    let bandwidth = if gaps.len() > wanted {
        let (_, h, _) = gaps.select_nth_unstable_by(wanted, f64::total_cmp);
        *h
    } else {
        margin
    }
    .max(1e-300);

    // Gaps below `h` grouped by boundary. A boundary with m such gaps gets
    // density k / (2 N g_(k)), k = ⌈m/2⌉: for a boundary whose score gap grows
    // linearly this matches m / (2 N h), and it stays accurate for stiff
    // boundaries (nearby sites) whose gaps all lie far below `h`.
    let mut near: Vec<(u32, u32, f64)> = scans
        .iter()
        .filter(|s| s.gap < bandwidth && s.second != u32::MAX)
        .map(|s| (s.best.min(s.second), s.best.max(s.second), s.gap))
        .collect();
    near.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.total_cmp(&y.2)));
    let mut lap = DMatrix::<f64>::zeros(l_count, l_count);
    for group in near.chunk_by(|x, y| (x.0, x.1) == (y.0, y.1)) {
        let m = group.len();
        let global = m as f64 / (2.0 * count as f64 * bandwidth);
        let density = if m >= MIN_BOUNDARY_POINTS {
            let k = m.div_ceil(2);
            global.max(k as f64 / (2.0 * count as f64 * group[k - 1].2.max(1e-300)))
        } else {
            global
        };
        let (a, b) = (group[0].0 as usize, group[0].1 as usize);
        lap[(a, b)] -= density;
        lap[(b, a)] -= density;
        lap[(a, a)] += density;
        lap[(b, b)] += density;
    }
    // The median is the reference scale: a few stiff boundaries between
    // nearby sites would dominate the mean.
    let mut diag: Vec<f64> = (0..l_count).map(|i| lap[(i, i)]).collect();
    let (_, mid, _) = diag.select_nth_unstable_by(l_count / 2, f64::total_cmp);
    let typical = if *mid > 0.0 { *mid } else { 1.0 };
    for i in 0..l_count {
        let deficit = (0.1 * typical - lap[(i, i)]).max(0.0);
        lap[(i, i)] += deficit + damping * typical;
    }
    let rhs = DVector::from_column_slice(grad);
    let direction = match lap.cholesky() {
        Some(ch) => ch.solve(&rhs).as_slice().to_vec(),
        None => grad.iter().map(|g| g / typical).collect(),
    };
    (direction, bandwidth, typical)
}

/// `MK_p = (transport cost)^{1/p}`.
pub fn mk_distance(report: &SolveReport, p: f64) -> f64 {
    report.transport_cost_p.max(0.0).powf(1.0 / p)
}
