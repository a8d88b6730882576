//! Sliced Monge-Kantorovich distances.
//!
//! `MK_{p,q}(μ1, μ2)` is the `L^q(σ)` norm of `ω ↦ MK_p(R^ω_# μ1, R^ω_# μ2)`.
//! The partition estimator replaces the integral over `ω` by the cell
//! directions, each with weight `1/L`. Its error is bounded by the radius
//! bound of the cells times the Lipschitz constant of the integrand, which is
//! at most `‖μ1‖_p + ‖μ2‖_p` (the `p`-th root moments).

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::constants::Constants;
use crate::geometry::sample_uniform;
use crate::mk1d::{moment, project_values, w_p_raw, EmpiricalMeasure};
use crate::partition::{MkValue, Partition};
use crate::transport::CostKind;
use crate::{Error, Result};

/// Directions per parallel work unit.
const DIRECTION_CHUNK: usize = 256;

/// Outer exponent `q ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QNorm {
    Finite(f64),
    Infinity,
}

impl QNorm {
    pub fn new(q: f64) -> Result<Self> {
        if q == f64::INFINITY {
            return Ok(QNorm::Infinity);
        }
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::OutOfRange {
                name: "q",
                value: q,
                allowed: "[1, ∞]",
            });
        }
        Ok(QNorm::Finite(q))
    }

    pub fn value(&self) -> f64 {
        match *self {
            QNorm::Finite(q) => q,
            QNorm::Infinity => f64::INFINITY,
        }
    }

    /// Weighted `L^q` norm of `values`; weights must sum to one.
    pub fn norm(&self, values: &[f64], weights: &[f64]) -> f64 {
        match *self {
            QNorm::Infinity => values.iter().copied().fold(0.0, f64::max),
            QNorm::Finite(q) => values
                .iter()
                .zip(weights)
                .map(|(v, w)| w * v.powf(q))
                .sum::<f64>()
                .powf(1.0 / q),
        }
    }
}

impl fmt::Display for QNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QNorm::Finite(q) => write!(f, "{q}"),
            QNorm::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for QNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(QNorm::Infinity),
            other => {
                let q: f64 = other
                    .parse()
                    .map_err(|_| Error::invalid(format!("cannot parse q from {s:?}")))?;
                QNorm::new(q)
            }
        }
    }
}

impl Serialize for QNorm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            QNorm::Finite(q) => s.serialize_f64(q),
            QNorm::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for QNorm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(q) => QNorm::new(q),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    PartitionQuadrature,
    DenseMC,
}

/// How partition cells are weighted in the outer norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CellWeighting {
    /// Exactly `1/L` per cell.
    #[default]
    Equal,
    /// The cell's mass on the quadrature sample (diagnostic).
    Realized,
}

/// The error bound of the partition estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub printed: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicedEstimate {
    pub value: f64,
    pub p: f64,
    pub q: QNorm,
    /// Number of directions.
    pub l: usize,
    /// Normalized-constant certificate; absent when the partition's cost
    /// exponent differs from `p` or for dense estimates.
    pub certificate: Option<f64>,
    pub certificate_printed: Option<f64>,
    /// `MK_p(σ, ν_ω)` of the partition directions.
    pub mk_direction_quality: Option<f64>,
    pub method: Method,
    /// `MK_p` of the projections, per direction.
    pub per_direction: Vec<f64>,
}

fn check_pair(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure, p: f64) -> Result<()> {
    if mu1.dim() != mu2.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu1.dim(),
            got: mu2.dim(),
        });
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            allowed: "[1, ∞)",
        });
    }
    Ok(())
}

/// `MK_p` of the projections on each direction (flat, row-major), in order.
pub(crate) fn projected_distances(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure, p: f64, dirs: &[f64]) -> Vec<f64> {
    let n = mu1.dim();
    dirs.par_chunks(DIRECTION_CHUNK * n)
        .flat_map_iter(|chunk| {
            let (mut a, mut b) = (Vec::with_capacity(mu1.len()), Vec::with_capacity(mu2.len()));
            chunk
                .chunks_exact(n)
                .map(|w| {
                    project_values(mu1, w, &mut a);
                    project_values(mu2, w, &mut b);
                    w_p_raw(&a, mu1.masses(), &b, mu2.masses(), p).powf(1.0 / p)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn sliced_mk_partition(
    mu1: &EmpiricalMeasure,
    mu2: &EmpiricalMeasure,
    part: &Partition,
    p: f64,
    q: QNorm,
) -> Result<SlicedEstimate> {
    sliced_mk_partition_weighted(mu1, mu2, part, p, q, CellWeighting::Equal)
}

pub fn sliced_mk_partition_weighted(
    mu1: &EmpiricalMeasure,
    mu2: &EmpiricalMeasure,
    part: &Partition,
    p: f64,
    q: QNorm,
    weighting: CellWeighting,
) -> Result<SlicedEstimate> {
    check_pair(mu1, mu2, p)?;
    if part.dim() != mu1.dim() {
        return Err(Error::DimensionMismatch {
            expected: part.dim(),
            got: mu1.dim(),
        });
    }
    if !part.empty_cells.is_empty() || !(part.solve.max_mass_error <= part.tol) {
        return Err(Error::invalid("the partition is not solved to its tolerance"));
    }
    let l = part.len();
    let dirs: Vec<f64> = part.directions().iter().flat_map(|d| d.coords().iter().copied()).collect();
    let per_direction = projected_distances(mu1, mu2, p, &dirs);
    let weights = match weighting {
        CellWeighting::Equal => vec![1.0 / l as f64; l],
        CellWeighting::Realized => part.cell_mass.clone(),
    };
    let value = q.norm(&per_direction, &weights);

    let mk = part.mk();
    let (certificate, certificate_printed) = if mk.cost_kind.p() == p {
        let consts = Constants::compute(part.dim(), p)?;
        let c = error_certificate(mu1, mu2, p, mk, &consts)?;
        (Some(c.normalized), Some(c.printed))
    } else {
        (None, None)
    };
    Ok(SlicedEstimate {
        value,
        p,
        q,
        l,
        certificate,
        certificate_printed,
        mk_direction_quality: Some(mk.value),
        method: Method::PartitionQuadrature,
        per_direction,
    })
}

/// `(prefactor/2)·MK_p(σ, ν_ω)^{p/(n-1+p)}·(‖μ1‖_p + ‖μ2‖_p)`.
///
/// With the intrinsic cost the prefactor is `α_{n,p}`; chords are shorter
/// than arcs, so the same bound holds for the chord radius. With the
/// extrinsic cost the extrinsic prefactor bounds the chord radius directly.
pub fn error_certificate(
    mu1: &EmpiricalMeasure,
    mu2: &EmpiricalMeasure,
    p: f64,
    mk: MkValue,
    consts: &Constants,
) -> Result<Certificate> {
    check_pair(mu1, mu2, p)?;
    if mk.cost_kind.p() != p || consts.intrinsic.p != p {
        return Err(Error::invalid(format!(
            "certificate needs matching exponents: p={p}, cost p={}, constants p={}",
            mk.cost_kind.p(),
            consts.intrinsic.p
        )));
    }
    let n = consts.intrinsic.n;
    if n != mu1.dim() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: mu1.dim(),
        });
    }
    if !(mk.value >= 0.0 && mk.value.is_finite()) {
        return Err(Error::invalid(format!("MK value must be finite and >= 0, got {}", mk.value)));
    }
    let (printed, normalized) = match mk.cost_kind {
        CostKind::Intrinsic { .. } => (consts.intrinsic.alpha_np, consts.intrinsic.alpha_np_normalized),
        CostKind::Extrinsic { .. } => (consts.extrinsic.prefactor, consts.extrinsic.prefactor_normalized),
    };
    let moments = moment(mu1, p)?.powf(1.0 / p) + moment(mu2, p)?.powf(1.0 / p);
    let scale = 0.5 * mk.value.powf(p / (n as f64 - 1.0 + p)) * moments;
    Ok(Certificate {
        printed: printed * scale,
        normalized: normalized * scale,
    })
}

/// Plain Monte-Carlo over `n_dirs` uniform directions. Directions for a given
/// seed nest by prefix, so more directions extend the same sequence.
pub fn sliced_mk_dense(
    mu1: &EmpiricalMeasure,
    mu2: &EmpiricalMeasure,
    p: f64,
    q: QNorm,
    n_dirs: usize,
    seed: u64,
) -> Result<SlicedEstimate> {
    check_pair(mu1, mu2, p)?;
    if n_dirs == 0 {
        return Err(Error::invalid("n_dirs must be >= 1"));
    }
    let dirs = sample_uniform(mu1.dim(), n_dirs, seed)?;
    let flat: Vec<f64> = dirs.points().flatten().copied().collect();
    let per_direction = projected_distances(mu1, mu2, p, &flat);
    let value = q.norm(&per_direction, &vec![1.0 / n_dirs as f64; n_dirs]);
    Ok(SlicedEstimate {
        value,
        p,
        q,
        l: n_dirs,
        certificate: None,
        certificate_printed: None,
        mk_direction_quality: None,
        method: Method::DenseMC,
        per_direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_uniform, UnitVector};
    use crate::partition::build_partition;
    use crate::transport::SolverOptions;
    use approx::assert_relative_eq;

    fn cloud(points: usize, shift: &[f64], seed: u64) -> EmpiricalMeasure {
        let s = sample_uniform(3, points, seed).unwrap();
        let pts: Vec<Vec<f64>> = s
            .points()
            .enumerate()
            .map(|(i, x)| {
                let r = 0.5 + (i % 7) as f64 / 7.0;
                x.iter().zip(shift).map(|(c, v)| r * c + v).collect()
            })
            .collect();
        EmpiricalMeasure::uniform(&pts).unwrap()
    }

    fn small_partition(p: f64) -> Partition {
        let quad = sample_uniform(3, 20_000, 1).unwrap();
        let dirs = sample_uniform(3, 16, 2).unwrap().to_unit_vectors();
        build_partition(&dirs, CostKind::intrinsic(p).unwrap(), &quad, &SolverOptions::new(0.01)).unwrap()
    }

    #[test]
    fn q_parsing_and_serde() {
        assert_eq!("inf".parse::<QNorm>().unwrap(), QNorm::Infinity);
        assert_eq!("2".parse::<QNorm>().unwrap(), QNorm::Finite(2.0));
        assert!("0.5".parse::<QNorm>().is_err());
        assert!(QNorm::new(f64::NAN).is_err());
        assert_eq!(serde_json::to_string(&QNorm::Infinity).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&QNorm::Finite(1.5)).unwrap(), "1.5");
        assert_eq!(serde_json::from_str::<QNorm>("3").unwrap(), QNorm::Finite(3.0));
        assert_eq!(serde_json::from_str::<QNorm>("\"inf\"").unwrap(), QNorm::Infinity);
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let mu = cloud(50, &[0.0, 0.0, 0.0], 3);
        let part = small_partition(2.0);
        for q in [QNorm::Finite(1.0), QNorm::Finite(2.0), QNorm::Infinity] {
            assert_eq!(sliced_mk_partition(&mu, &mu, &part, 2.0, q).unwrap().value, 0.0);
            assert_eq!(sliced_mk_dense(&mu, &mu, 2.0, q, 100, 4).unwrap().value, 0.0);
        }
    }

    #[test]
    fn dirac_pair_max_sliced_is_projection_length() {
        let v = [0.3, -0.4, 1.2];
        let d0 = EmpiricalMeasure::dirac(vec![0.0; 3]).unwrap();
        let dv = EmpiricalMeasure::dirac(v.to_vec()).unwrap();
        let dense = sliced_mk_dense(&d0, &dv, 2.0, QNorm::Infinity, 20_000, 5).unwrap();
        let len = (v.iter().map(|x| x * x).sum::<f64>()).sqrt();
        assert!(dense.value <= len + 1e-12);
        assert!(dense.value >= 0.99 * len);
        let dirs = sample_uniform(3, 20_000, 5).unwrap();
        for (i, d) in dense.per_direction.iter().enumerate() {
            let proj: f64 = dirs.point(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            assert_relative_eq!(*d, proj.abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn single_direction_partition() {
        let quad = sample_uniform(3, 2000, 6).unwrap();
        let e = UnitVector::basis(3, 2).unwrap();
        let part = build_partition(&[e], CostKind::intrinsic(2.0).unwrap(), &quad, &SolverOptions::new(0.01)).unwrap();
        let a = cloud(40, &[0.0, 0.0, 0.0], 7);
        let b = cloud(30, &[0.0, 0.0, 1.5], 8);
        let est = sliced_mk_partition(&a, &b, &part, 2.0, QNorm::Finite(2.0)).unwrap();
        let z = |m: &EmpiricalMeasure| {
            crate::mk1d::Projected1D::from_values(m.points().map(|x| x[2]).collect(), m.masses().to_vec()).unwrap()
        };
        assert_relative_eq!(est.value, crate::mk1d::w_p_1d(&z(&a), &z(&b), 2.0).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn estimate_is_monotone_in_q() {
        let a = cloud(60, &[0.0, 0.0, 0.0], 9);
        let b = cloud(60, &[0.5, 0.1, -0.2], 10);
        let part = small_partition(2.0);
        let mut last = 0.0;
        for q in [1.0, 1.5, 2.0, 3.0, 8.0] {
            let v = sliced_mk_partition(&a, &b, &part, 2.0, QNorm::Finite(q)).unwrap().value;
            assert!(v >= last - 1e-12);
            last = v;
        }
        assert!(sliced_mk_partition(&a, &b, &part, 2.0, QNorm::Infinity).unwrap().value >= last - 1e-12);
    }

    #[test]
    fn dense_directions_nest() {
        let a = cloud(30, &[0.0, 0.0, 0.0], 11);
        let b = cloud(30, &[0.2, 0.7, 0.0], 12);
        let few = sliced_mk_dense(&a, &b, 2.0, QNorm::Infinity, 10, 13).unwrap();
        let many = sliced_mk_dense(&a, &b, 2.0, QNorm::Infinity, 1000, 13).unwrap();
        assert_eq!(few.per_direction[..], many.per_direction[..10]);
        assert!(few.value <= many.value);
    }

    #[test]
    fn certificate_examples() {
        let consts = Constants::compute(3, 2.0).unwrap();
        let mk = MkValue {
            value: 0.3,
            cost_kind: CostKind::intrinsic(2.0).unwrap(),
        };
        let zero = EmpiricalMeasure::dirac(vec![0.0; 3]).unwrap();
        assert_eq!(error_certificate(&zero, &zero, 2.0, mk, &consts).unwrap().normalized, 0.0);

        let on_sphere = EmpiricalMeasure::uniform(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]]).unwrap();
        let c = error_certificate(&on_sphere, &on_sphere, 2.0, mk, &consts).unwrap();
        let scale = 0.3f64.powf(2.0 / 4.0);
        assert_relative_eq!(c.normalized, consts.intrinsic.alpha_np_normalized * scale, max_relative = 1e-14);
        assert_relative_eq!(c.printed, consts.intrinsic.alpha_np * scale, max_relative = 1e-14);
        assert!(c.normalized >= c.printed);

        let scaled = on_sphere.map_points(|x| x.iter().map(|v| 2.5 * v).collect()).unwrap();
        let cs = error_certificate(&scaled, &scaled, 2.0, mk, &consts).unwrap();
        assert_relative_eq!(cs.normalized, 2.5 * c.normalized, max_relative = 1e-14);

        let wrong = MkValue {
            value: 0.3,
            cost_kind: CostKind::intrinsic(3.0).unwrap(),
        };
        assert!(error_certificate(&on_sphere, &on_sphere, 2.0, wrong, &consts).is_err());
    }

    #[test]
    fn rotation_leaves_per_direction_values_unchanged() {
        // Rotation by 90° about the z axis applied to measures and directions.
        let rot = |x: &[f64]| vec![-x[1], x[0], x[2]];
        let a = cloud(40, &[0.1, 0.0, 0.0], 14);
        let b = cloud(40, &[0.0, 0.4, 0.3], 15);
        let dirs = sample_uniform(3, 50, 16).unwrap();
        let flat: Vec<f64> = dirs.points().flatten().copied().collect();
        let rotated: Vec<f64> = dirs.points().flat_map(rot).collect();
        let base = projected_distances(&a, &b, 2.0, &flat);
        let turned = projected_distances(&a.map_points(rot).unwrap(), &b.map_points(rot).unwrap(), 2.0, &rotated);
        for (x, y) in base.iter().zip(&turned) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let a = EmpiricalMeasure::dirac(vec![0.0, 0.0]).unwrap();
        let b = EmpiricalMeasure::dirac(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(sliced_mk_dense(&a, &b, 2.0, QNorm::Infinity, 10, 0).is_err());
        assert!(sliced_mk_dense(&b, &b, 2.0, QNorm::Infinity, 0, 0).is_err());
        assert!(sliced_mk_partition(&a, &a, &small_partition(2.0), 2.0, QNorm::Infinity).is_err());
    }
}
