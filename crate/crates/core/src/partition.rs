//! Equal-area partitions and verification of the diameter bounds.
//!
//! A [`Partition`] records the solved weights together with the quadrature
//! points it was built on and the cell of every point. Cell diameters are
//! measured on those points, so they are lower bounds on the diameters of the
//! true cells: a violation seen on the sample is a violation of the bound, but
//! the converse cannot be confirmed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{h_inverse, h_inverse_extrinsic, Constants};
use crate::geometry::{chord, dot, geodesic, SphereSample, UnitVector};
use crate::rng::{self, derive_seed, stream};
use crate::transport::{self, assign_all, mk_distance, CostKind, DualWeights, SolveReport, SolverOptions};
use crate::{Error, Result};

/// Cells up to this size get an exact pairwise diameter scan.
pub const EXACT_SCAN_LIMIT: usize = 4096;
/// Random probes certifying the heuristic diameter of larger cells.
pub const DIAMETER_PROBES: usize = 64;
/// Candidates kept for the exact scan in the heuristic.
const CANDIDATES: usize = 2048;

pub const SAMPLED_DIAMETER_NOTE: &str = "diameters are measured on quadrature points and are lower \
bounds on the diameters of the true cells; a sampled violation is a true violation, \
a sampled pass does not prove the bound";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub weights: DualWeights,
    /// Fraction of quadrature points in each cell.
    pub cell_mass: Vec<f64>,
    pub cell_count: Vec<usize>,
    /// Cell of every quadrature point.
    pub quad_assignments: Vec<usize>,
    pub quadrature: SphereSample,
    /// Mass tolerance the solve was run with.
    pub tol: f64,
    pub solve: SolveReport,
    /// Cells with mass below `tol`.
    pub empty_cells: Vec<usize>,
}

/// An `MK_p(σ, ν)` value tagged with the cost it was computed for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MkValue {
    pub value: f64,
    pub cost_kind: CostKind,
}

pub fn build_partition(
    directions: &[UnitVector],
    cost_kind: CostKind,
    quad: &SphereSample,
    options: &SolverOptions,
) -> Result<Partition> {
    let (weights, report) = transport::solve_dual(directions, cost_kind, quad, options)?;
    Partition::from_solution(weights, report, quad.clone(), options.tol)
}

impl Partition {
    /// Assigns the quadrature points of a finished solve.
    pub fn from_solution(weights: DualWeights, solve: SolveReport, quadrature: SphereSample, tol: f64) -> Result<Self> {
        let quad_assignments = assign_all(&weights, &quadrature)?;
        let mut cell_count = vec![0usize; weights.len()];
        for &a in &quad_assignments {
            cell_count[a] += 1;
        }
        let total = quadrature.count() as f64;
        let cell_mass: Vec<f64> = cell_count.iter().map(|&c| c as f64 / total).collect();
        let empty_cells = (0..weights.len()).filter(|&l| cell_mass[l] < tol).collect();
        Ok(Self {
            weights,
            cell_mass,
            cell_count,
            quad_assignments,
            quadrature,
            tol,
            solve,
            empty_cells,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn cost_kind(&self) -> CostKind {
        self.weights.cost_kind
    }

    pub fn directions(&self) -> &[UnitVector] {
        &self.weights.directions
    }

    /// The transport distance estimated by the solve.
    pub fn mk(&self) -> MkValue {
        let kind = self.cost_kind();
        MkValue {
            value: mk_distance(&self.solve, kind.p()),
            cost_kind: kind,
        }
    }

    /// Indices of the quadrature points of each cell.
    pub fn cell_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.len()];
        for (i, &a) in self.quad_assignments.iter().enumerate() {
            members[a].push(i);
        }
        members
    }

    /// Largest distance from a cell's points to its direction, per cell, in
    /// the metric of the cost (arc length or chord).
    pub fn cell_radii(&self) -> Vec<f64> {
        let kind = self.cost_kind();
        let mut radii = vec![0.0f64; self.len()];
        for (i, &a) in self.quad_assignments.iter().enumerate() {
            let d = kind.distance(self.quadrature.point(i), self.weights.directions[a].coords());
            radii[a] = radii[a].max(d);
        }
        radii
    }
}

/// Sampled diameters of one cell, both taken from the same maximizing pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDiameter {
    pub geodesic: f64,
    pub euclidean: f64,
    /// The maximizing pair (quadrature indices); absent for cells with fewer
    /// than two points.
    pub pair: Option<(usize, usize)>,
    pub exact: bool,
}

/// Per-cell sampled geodesic and Euclidean diameters.
pub fn cell_diameters(part: &Partition) -> (Vec<f64>, Vec<f64>) {
    let d = cell_diameter_details(part);
    (d.iter().map(|c| c.geodesic).collect(), d.iter().map(|c| c.euclidean).collect())
}

pub fn cell_diameter_details(part: &Partition) -> Vec<CellDiameter> {
    let members = part.cell_members();
    let quad = &part.quadrature;
    members
        .par_iter()
        .enumerate()
        .map(|(l, idx)| {
            let seed = derive_seed(quad.seed(), &[stream::PROBES, l as u64]);
            let found = if idx.len() <= EXACT_SCAN_LIMIT {
                exact_pair(quad, idx)
            } else {
                heuristic_pair(quad, idx, seed)
            };
            match found {
                Some((i, j)) => CellDiameter {
                    geodesic: geodesic(quad.point(i), quad.point(j)),
                    euclidean: chord(quad.point(i), quad.point(j)),
                    pair: Some((i, j)),
                    exact: idx.len() <= EXACT_SCAN_LIMIT,
                },
                None => CellDiameter {
                    geodesic: 0.0,
                    euclidean: 0.0,
                    pair: None,
                    exact: true,
                },
            }
        })
        .collect()
}

/// The pair with the smallest inner product (largest chord), first in scan
/// order on ties.
fn exact_pair(quad: &SphereSample, idx: &[usize]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (a, &i) in idx.iter().enumerate() {
        let x = quad.point(i);
        for &j in &idx[a + 1..] {
            let c = dot(x, quad.point(j));
            if best.is_none_or(|b| c < b.2) {
                best = Some((i, j, c));
            }
        }
    }
    best.map(|b| (b.0, b.1))
}

fn farthest(quad: &SphereSample, idx: &[usize], from: usize) -> (usize, f64) {
    let x = quad.point(from);
    let mut best = (from, f64::INFINITY);
    for &j in idx {
        let c = dot(x, quad.point(j));
        if c < best.1 {
            best = (j, c);
        }
    }
    best
}

/// Farthest-point iteration from random probes, then an exact scan over the
/// points most extreme along the found axis. The result is never below the
/// best probe pair.
fn heuristic_pair(quad: &SphereSample, idx: &[usize], seed: u64) -> Option<(usize, usize)> {
    let mut rng = rng::generator(seed);
    let mut best = (idx[0], idx[0], f64::INFINITY);
    for _ in 0..DIAMETER_PROBES {
        let start = idx[rng.random_range(0..idx.len())];
        let (j, c) = farthest(quad, idx, start);
        if c < best.2 {
            best = (start, j, c);
        }
    }
    // Alternate farthest-point steps from the best pair's endpoint.
    let mut from = best.1;
    for _ in 0..8 {
        let (j, c) = farthest(quad, idx, from);
        if c < best.2 {
            best = (from, j, c);
            from = j;
        } else {
            break;
        }
    }
    // Candidates: points most extreme along the axis between the endpoints,
    // and the points farthest from the cell's centroid.
    let (u, v) = (quad.point(best.0), quad.point(best.1));
    let axis: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let n = quad.n();
    let mut centroid = vec![0.0; n];
    for &i in idx {
        centroid.iter_mut().zip(quad.point(i)).for_each(|(c, x)| *c += x);
    }
    let by_key = |key: &dyn Fn(&[f64]) -> f64| {
        let mut keyed: Vec<(f64, usize)> = idx.iter().map(|&i| (key(quad.point(i)), i)).collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed
    };
    let along = by_key(&|x| dot(x, &axis));
    let outward = by_key(&|x| dot(x, &centroid));
    let quarter = CANDIDATES / 4;
    let mut cand: Vec<usize> = along.iter().take(quarter).map(|x| x.1).collect();
    cand.extend(along.iter().rev().take(quarter).map(|x| x.1));
    cand.extend(outward.iter().take(2 * quarter).map(|x| x.1));
    cand.sort_unstable();
    cand.dedup();
    if let Some((i, j)) = exact_pair(quad, &cand) {
        let c = dot(quad.point(i), quad.point(j));
        if c < best.2 {
            best = (i, j, c);
        }
    }
    Some((best.0.min(best.1), best.0.max(best.1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub cost_kind: CostKind,
    pub n: usize,
    pub l: usize,
    /// Largest sampled cell diameter, arc length.
    pub max_diam_geodesic: f64,
    /// Largest sampled cell diameter, chord length.
    pub max_diam_euclidean: f64,
    /// The diameter compared against the bound: geodesic for the intrinsic
    /// cost, Euclidean for the extrinsic one.
    pub compared_diameter: f64,
    pub mk_value: f64,
    /// `p/(n-1+p)`.
    pub exponent: f64,
    pub prefactor_printed: f64,
    pub prefactor_normalized: f64,
    pub bound_printed: f64,
    pub bound_normalized: f64,
    pub satisfied_printed: bool,
    pub satisfied_normalized: bool,
    /// Largest sampled distance from a point to its cell's direction.
    pub max_radius: f64,
    /// Half of the diameter bounds.
    pub radius_bound_printed: f64,
    pub radius_bound_normalized: f64,
    pub radius_satisfied_printed: bool,
    pub radius_satisfied_normalized: bool,
    /// `H^{-1}(MK_p^p)`, the radius bound before the cap volume is replaced
    /// by its power-law lower bound.
    pub radius_bound_sharp: f64,
    pub radius_satisfied_sharp: bool,
    /// A passing radius check with half the constant forces a passing
    /// diameter check (triangle inequality); false flags an inconsistency.
    pub radius_implies_diameter: bool,
    pub note: String,
}

pub fn verify_bound(part: &Partition, consts: &Constants, mk: MkValue) -> Result<BoundReport> {
    let kind = part.cost_kind();
    if mk.cost_kind != kind {
        return Err(Error::CostKindMismatch {
            partition: format!("{} p={}", kind.name(), kind.p()),
            supplied: format!("{} p={}", mk.cost_kind.name(), mk.cost_kind.p()),
        });
    }
    let (n, p) = (part.dim(), kind.p());
    if consts.intrinsic.n != n || consts.intrinsic.p != p {
        return Err(Error::invalid(format!(
            "constants are for n={}, p={} but the partition has n={n}, p={p}",
            consts.intrinsic.n, consts.intrinsic.p
        )));
    }
    if !(mk.value >= 0.0 && mk.value.is_finite()) {
        return Err(Error::invalid(format!("MK value must be finite and >= 0, got {}", mk.value)));
    }

    let details = cell_diameter_details(part);
    let max_diam_geodesic = details.iter().map(|c| c.geodesic).fold(0.0, f64::max);
    let max_diam_euclidean = details.iter().map(|c| c.euclidean).fold(0.0, f64::max);
    let max_radius = part.cell_radii().into_iter().fold(0.0, f64::max);

    let exponent = p / (n as f64 - 1.0 + p);
    let scale = mk.value.powf(exponent);
    let (prefactor_printed, prefactor_normalized, compared_diameter, radius_bound_sharp) = match kind {
        CostKind::Intrinsic { .. } => (
            consts.intrinsic.alpha_np,
            consts.intrinsic.alpha_np_normalized,
            max_diam_geodesic,
            h_inverse(n, p, consts.intrinsic.a_p, mk.value.powf(p))?,
        ),
        CostKind::Extrinsic { .. } => (
            consts.extrinsic.prefactor,
            consts.extrinsic.prefactor_normalized,
            max_diam_euclidean,
            h_inverse_extrinsic(n, p, consts.extrinsic.b_p, mk.value.powf(p))?,
        ),
    };
    let bound_printed = prefactor_printed * scale;
    let bound_normalized = prefactor_normalized * scale;
    let radius_bound_printed = 0.5 * bound_printed;
    let radius_bound_normalized = 0.5 * bound_normalized;
    let satisfied_normalized = compared_diameter <= bound_normalized;
    let radius_satisfied_normalized = max_radius <= radius_bound_normalized;
    let radius_satisfied_printed = max_radius <= radius_bound_printed;
    let satisfied_printed = compared_diameter <= bound_printed;
    let radius_implies_diameter = (!radius_satisfied_normalized || satisfied_normalized)
        && (!radius_satisfied_printed || satisfied_printed);

    Ok(BoundReport {
        cost_kind: kind,
        n,
        l: part.len(),
        max_diam_geodesic,
        max_diam_euclidean,
        compared_diameter,
        mk_value: mk.value,
        exponent,
        prefactor_printed,
        prefactor_normalized,
        bound_printed,
        bound_normalized,
        satisfied_printed,
        satisfied_normalized,
        max_radius,
        radius_bound_printed,
        radius_bound_normalized,
        radius_satisfied_printed,
        radius_satisfied_normalized,
        radius_bound_sharp,
        radius_satisfied_sharp: max_radius <= radius_bound_sharp,
        radius_implies_diameter,
        note: SAMPLED_DIAMETER_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn uv(c: &[f64]) -> UnitVector {
        UnitVector::new(c.to_vec()).unwrap()
    }

    fn manual(points: &[UnitVector], dirs: Vec<UnitVector>, kind: CostKind) -> Partition {
        let quad = SphereSample::from_points(points, 0).unwrap();
        let w = DualWeights::zero(dirs, kind).unwrap();
        let report = SolveReport {
            iterations: 0,
            max_mass_error: 0.0,
            training_mass_error: 0.0,
            dual_value: 0.0,
            transport_cost_p: 0.0,
            quadrature_size: quad.count(),
            refined: false,
            dual_trace: vec![],
        };
        Partition::from_solution(w, report, quad, 1.0).unwrap()
    }

    #[test]
    fn single_cell_holds_everything() {
        let quad = sample_uniform(3, 2000, 1).unwrap();
        let kind = CostKind::intrinsic(2.0).unwrap();
        let part = build_partition(&[uv(&[0.0, 0.0, 1.0])], kind, &quad, &SolverOptions::new(0.01)).unwrap();
        assert_eq!(part.cell_mass, vec![1.0]);
        assert_eq!(part.cell_count, vec![2000]);
        assert!(part.quad_assignments.iter().all(|&a| a == 0));
        assert!(part.empty_cells.is_empty());
    }

    #[test]
    fn antipodal_pair_gives_hemispheres() {
        let quad = sample_uniform(3, 20_000, 2).unwrap();
        let dirs = vec![uv(&[0.0, 0.0, 1.0]), uv(&[0.0, 0.0, -1.0])];
        let part = build_partition(&dirs, CostKind::extrinsic(2.0).unwrap(), &quad, &SolverOptions::new(0.01)).unwrap();
        assert_relative_eq!(part.cell_mass.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for m in &part.cell_mass {
            assert!((m - 0.5).abs() <= 0.02);
        }
        // Each hemisphere contains nearly antipodal equator points.
        let (geo, euc) = cell_diameters(&part);
        for l in 0..2 {
            assert!(geo[l] > PI - 0.05, "{geo:?}");
            assert_relative_eq!(euc[l], 2.0 * (geo[l] / 2.0).sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn diameters_of_tiny_cells() {
        let kind = CostKind::intrinsic(2.0).unwrap();
        let pts = vec![uv(&[1.0, 0.0, 0.0]), uv(&[0.0, 1.0, 0.0]), uv(&[-1.0, 0.1, 0.0])];
        let part = manual(&pts, vec![uv(&[1.0, 0.0, 0.0]), uv(&[-1.0, 0.0, 0.0])], kind);
        let (geo, euc) = cell_diameters(&part);
        assert_relative_eq!(geo[0], PI / 2.0, epsilon = 1e-15);
        assert_eq!(geo[1], 0.0);
        assert_eq!(euc[1], 0.0);
    }

    #[test]
    fn heuristic_matches_exact_scan() {
        // One cap of angular radius 1 holding more points than the exact limit.
        let quad = sample_uniform(3, 40_000, 3).unwrap();
        let pts: Vec<UnitVector> = quad
            .to_unit_vectors()
            .into_iter()
            .filter(|p| p.coords()[2] > 1f64.cos())
            .take(EXACT_SCAN_LIMIT + 900)
            .collect();
        assert!(pts.len() > EXACT_SCAN_LIMIT);
        let sample = SphereSample::from_points(&pts, 9).unwrap();
        let idx: Vec<usize> = (0..sample.count()).collect();
        let (i, j) = exact_pair(&sample, &idx).unwrap();
        let exact = geodesic(sample.point(i), sample.point(j));
        let part = manual(&pts, vec![uv(&[0.0, 0.0, 1.0])], CostKind::intrinsic(2.0).unwrap());
        let d = cell_diameter_details(&part);
        assert!(!d[0].exact);
        assert!(d[0].geodesic <= exact + 1e-15);
        assert!(d[0].geodesic >= exact - 1e-3, "{} vs {exact}", d[0].geodesic);
        assert!(exact <= 2.0 + 1e-12);
    }

    #[test]
    fn verify_single_cell_circle() {
        // L = 1 on S^1: MK_2 = π/√3 and the farthest point is at distance π.
        let quad = sample_uniform(2, 50_000, 4).unwrap();
        let kind = CostKind::intrinsic(2.0).unwrap();
        let part = build_partition(&[uv(&[1.0, 0.0])], kind, &quad, &SolverOptions::new(0.01)).unwrap();
        let mk = part.mk();
        assert_relative_eq!(mk.value, PI / 3f64.sqrt(), max_relative = 0.01);
        let consts = Constants::compute(2, 2.0).unwrap();
        let r = verify_bound(&part, &consts, mk).unwrap();
        assert!((r.max_radius - PI).abs() < 1e-3);
        assert_relative_eq!(r.radius_bound_normalized, consts.intrinsic.alpha_np_normalized / 2.0 * mk.value.powf(2.0 / 3.0));
        assert!(r.bound_normalized >= r.bound_printed);
        assert!(r.radius_implies_diameter);
        assert!(r.satisfied_normalized && r.radius_satisfied_normalized);
        assert!(r.radius_bound_sharp <= r.radius_bound_normalized + 1e-12);
    }

    #[test]
    fn zero_mk_gives_zero_bound() {
        let kind = CostKind::intrinsic(2.0).unwrap();
        let consts = Constants::compute(3, 2.0).unwrap();
        let singletons = manual(&[uv(&[1.0, 0.0, 0.0])], vec![uv(&[1.0, 0.0, 0.0])], kind);
        let r = verify_bound(&singletons, &consts, MkValue { value: 0.0, cost_kind: kind }).unwrap();
        assert_eq!(r.bound_normalized, 0.0);
        assert!(r.satisfied_normalized);
        let pair = manual(&[uv(&[1.0, 0.0, 0.0]), uv(&[0.0, 1.0, 0.0])], vec![uv(&[1.0, 0.0, 0.0])], kind);
        let r = verify_bound(&pair, &consts, MkValue { value: 0.0, cost_kind: kind }).unwrap();
        assert!(!r.satisfied_normalized && !r.satisfied_printed);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let kind = CostKind::intrinsic(2.0).unwrap();
        let part = manual(&[uv(&[1.0, 0.0, 0.0])], vec![uv(&[1.0, 0.0, 0.0])], kind);
        let consts = Constants::compute(3, 2.0).unwrap();
        let other = MkValue {
            value: 0.1,
            cost_kind: CostKind::extrinsic(2.0).unwrap(),
        };
        assert!(matches!(verify_bound(&part, &consts, other), Err(Error::CostKindMismatch { .. })));
        let wrong_p = MkValue {
            value: 0.1,
            cost_kind: CostKind::intrinsic(3.0).unwrap(),
        };
        assert!(verify_bound(&part, &consts, wrong_p).is_err());
        let wrong_n = Constants::compute(4, 2.0).unwrap();
        assert!(verify_bound(&part, &wrong_n, part.mk()).is_err());
    }

    #[test]
    fn extrinsic_bound_uses_chords() {
        let quad = sample_uniform(3, 40_000, 5).unwrap();
        let dirs = sample_uniform(3, 8, 6).unwrap().to_unit_vectors();
        let kind = CostKind::extrinsic(2.0).unwrap();
        let part = build_partition(&dirs, kind, &quad, &SolverOptions::new(0.01)).unwrap();
        let consts = Constants::compute(3, 2.0).unwrap();
        let r = verify_bound(&part, &consts, part.mk()).unwrap();
        assert_eq!(r.compared_diameter, r.max_diam_euclidean);
        assert!(r.max_diam_euclidean <= 2.0);
        assert!(r.satisfied_normalized);
        assert!(r.radius_satisfied_sharp);
    }

    #[test]
    fn partition_round_trips_through_json() {
        let quad = sample_uniform(2, 600, 7).unwrap();
        let dirs = sample_uniform(2, 3, 8).unwrap().to_unit_vectors();
        let part = build_partition(&dirs, CostKind::intrinsic(1.5).unwrap(), &quad, &SolverOptions::new(0.05)).unwrap();
        let s = serde_json::to_string(&part).unwrap();
        let back: Partition = serde_json::from_str(&s).unwrap();
        assert_eq!(back, part);
    }
}
