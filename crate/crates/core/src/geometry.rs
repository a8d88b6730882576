//! Points, distances, sampling, and cap volumes on `S^{n-1}`.
//!
//! `σ` denotes the rotation-invariant probability measure on the sphere; every
//! cap volume here is a probability, never a raw surface area.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::rng;
use crate::{Error, Result};

/// A point on the unit sphere in `R^n`, `n >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `coords` onto the sphere.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::invalid(format!(
                "unit vectors need n >= 2 coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        let norm = norm(&coords);
        if norm == 0.0 {
            return Err(Error::invalid("cannot normalize the zero vector"));
        }
        Ok(Self(coords.into_iter().map(|c| c / norm).collect()))
    }

    /// The `i`-th standard basis vector of `R^n`.
    pub fn basis(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::invalid(format!("basis index {i} >= dimension {n}")));
        }
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }
}

/// Stored vectors are kept bit-exact when already unit length.
impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        let u = Self::new(v.clone())?;
        if (norm(&v) - 1.0).abs() <= 1e-12 {
            Ok(Self(v))
        } else {
            Ok(u)
        }
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Self {
        u.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Geodesic distance between unit vectors given as raw slices of equal length.
///
/// Uses `2·atan2(|a-b|, |a+b|)`, accurate near both `0` and `π`.
#[inline]
pub(crate) fn geodesic(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

#[inline]
pub(crate) fn chord(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_dims(u: &UnitVector, v: &UnitVector) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(())
}

/// Riemannian distance on the sphere, in radians, in `[0, π]`.
pub fn geodesic_distance(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    check_dims(u, v)?;
    Ok(geodesic(&u.0, &v.0))
}

/// Euclidean distance in the ambient space, in `[0, 2]`.
pub fn chordal_distance(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    check_dims(u, v)?;
    Ok(chord(&u.0, &v.0))
}

/// A finite set of points on `S^{n-1}`, stored row-major.
///
/// Used both as i.i.d. samples of `σ` (when produced by [`sample_uniform`])
/// and as an explicit discrete measure with equal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRepr")]
pub struct SphereSample {
    n: usize,
    seed: u64,
    coords: Vec<f64>,
}

impl SphereSample {
    /// Wraps explicit points. `seed` is only recorded; it identifies where the
    /// points came from.
    pub fn from_points(points: &[UnitVector], seed: u64) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("a sphere sample needs at least one point"))?;
        let n = first.dim();
        let mut coords = Vec::with_capacity(points.len() * n);
        for p in points {
            if p.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.dim(),
                });
            }
            coords.extend_from_slice(p.coords());
        }
        Ok(Self { n, seed, coords })
    }

    /// Row-major coordinates; every row must have unit norm within `1e-6`
    /// and is renormalized.
    pub fn from_flat(n: usize, coords: Vec<f64>, seed: u64) -> Result<Self> {
        Self::checked(n, coords, seed, true)
    }

    fn checked(n: usize, coords: Vec<f64>, seed: u64, renormalize: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("sphere dimension n must be >= 2, got {n}")));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(n) {
            return Err(Error::invalid(format!(
                "{} coordinates do not form rows of length {n}",
                coords.len()
            )));
        }
        let mut coords = coords;
        for (i, row) in coords.chunks_exact_mut(n).enumerate() {
            let r = norm(row);
            if !((r - 1.0).abs() <= 1e-6) {
                return Err(Error::invalid(format!("point {i} has norm {r}, expected 1")));
            }
            if renormalize {
                row.iter_mut().for_each(|c| *c /= r);
            }
        }
        Ok(Self { n, seed, coords })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.coords.len() / self.n
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.n)
    }

    pub fn unit_vector(&self, i: usize) -> UnitVector {
        UnitVector(self.point(i).to_vec())
    }

    pub fn to_unit_vectors(&self) -> Vec<UnitVector> {
        self.points().map(|p| UnitVector(p.to_vec())).collect()
    }

    pub(crate) fn flat(&self) -> &[f64] {
        &self.coords
    }
}

#[derive(Deserialize)]
struct SampleRepr {
    n: usize,
    seed: u64,
    coords: Vec<f64>,
}

impl TryFrom<SampleRepr> for SphereSample {
    type Error = Error;

    fn try_from(r: SampleRepr) -> Result<Self> {
        Self::checked(r.n, r.coords, r.seed, false)
    }
}

/// `count` i.i.d. points from `σ` on `S^{n-1}`: normalized standard Gaussian
/// vectors drawn from a single stream, so a sample of size `k` is a prefix of
/// every larger sample with the same seed.
pub fn sample_uniform(n: usize, count: usize, seed: u64) -> Result<SphereSample> {
    if n < 2 {
        return Err(Error::invalid(format!("sphere dimension n must be >= 2, got {n}")));
    }
    if count == 0 {
        return Err(Error::invalid("count must be >= 1"));
    }
    let mut rng = rng::generator(seed);
    let mut coords = Vec::with_capacity(n * count);
    let mut buf = vec![0.0; n];
    for _ in 0..count {
        loop {
            for c in buf.iter_mut() {
                *c = rng.sample(StandardNormal);
            }
            let r = norm(&buf);
            // r == 0 has probability zero; redraw rather than divide by it.
            if r > 1e-300 {
                coords.extend(buf.iter().map(|c| c / r));
                break;
            }
        }
    }
    Ok(SphereSample { n, seed, coords })
}

/// `|S^m|`, the `m`-dimensional Hausdorff measure of the unit sphere in
/// `R^{m+1}`. `|S^0| = 2`.
pub fn sphere_area(m: usize) -> f64 {
    let h = (m as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// `|S^{n-2}| / |S^{n-1}|`: density of the polar angle at `π/2`.
pub(crate) fn polar_normalizer(n: usize) -> f64 {
    sphere_area(n - 2) / sphere_area(n - 1)
}

/// Probability `σ(B_r)` of a geodesic ball of radius `r`.
///
/// Integrates `sin^{n-2}` adaptively to relative error `1e-10`. Caps past the
/// hemisphere are evaluated through their complement, so `cap_measure(n, π)`
/// is exactly `1`.
pub fn cap_measure(n: usize, r: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!("sphere dimension n must be >= 2, got {n}")));
    }
    if !(0.0..=PI).contains(&r) {
        return Err(Error::OutOfRange {
            name: "r",
            value: r,
            allowed: "[0, π]",
        });
    }
    if r > PI / 2.0 {
        return Ok(1.0 - cap_measure_small(n, PI - r));
    }
    Ok(cap_measure_small(n, r))
}

fn cap_measure_small(n: usize, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let k = (n - 2) as i32;
    let integral = if k == 0 {
        r
    } else {
        integrate(|t| t.sin().powi(k), 0.0, r, 1e-11)
    };
    polar_normalizer(n) * integral
}

/// Lower bound on `σ(B_r)` for `r <= aπ` from concavity of `sin` on
/// `[0, aπ]`: `sin t >= (sin aπ / aπ)·t`.
pub fn cap_lower_bound(n: usize, a: f64, r: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!("sphere dimension n must be >= 2, got {n}")));
    }
    if !(a > 0.0 && a <= 0.25) {
        return Err(Error::OutOfRange {
            name: "a",
            value: a,
            allowed: "(0, 1/4]",
        });
    }
    if !(0.0..=a * PI).contains(&r) {
        return Err(Error::OutOfRange {
            name: "r",
            value: r,
            allowed: "[0, aπ]",
        });
    }
    let slope = (a * PI).sin() / (a * PI);
    Ok(polar_normalizer(n) / (n as f64 - 1.0)
        * slope.powi(n as i32 - 2)
        * r.powi(n as i32 - 1))
}

/// Adaptive Simpson quadrature with Richardson correction; `rel_tol` is
/// relative to a coarse estimate of the integral.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
