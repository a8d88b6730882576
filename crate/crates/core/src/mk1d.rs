//! Weighted point clouds in `R^n`, their one-dimensional projections, and the
//! exact Monge-Kantorovich distance between measures on the line.

use serde::{Deserialize, Serialize};

use crate::geometry::{dot, UnitVector};
use crate::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// A finitely supported probability measure on `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    n: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
}

fn check_masses(masses: &[f64]) -> Result<()> {
    if masses.is_empty() {
        return Err(Error::invalid("a measure needs at least one atom"));
    }
    if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::invalid(format!("masses must be positive and finite, got {m}")));
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::invalid(format!("masses sum to {total}, expected 1")));
    }
    Ok(())
}

impl EmpiricalMeasure {
    pub fn new(points: &[Vec<f64>], masses: Vec<f64>) -> Result<Self> {
        let n = points.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::invalid("points must be non-empty vectors"));
        }
        if points.len() != masses.len() {
            return Err(Error::invalid(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        let mut coords = Vec::with_capacity(points.len() * n);
        for p in points {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.len(),
                });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("non-finite coordinate"));
            }
            coords.extend_from_slice(p);
        }
        check_masses(&masses)?;
        Ok(Self { n, coords, masses })
    }

    /// Equal masses `1/m` on the given points.
    pub fn uniform(points: &[Vec<f64>]) -> Result<Self> {
        let m = points.len().max(1);
        Self::new(points, vec![1.0 / m as f64; points.len()])
    }

    /// Masses proportional to `weights`.
    pub fn weighted(points: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("weights must have a positive finite sum"));
        }
        Self::new(points, weights.iter().map(|w| w / total).collect())
    }

    /// Dirac mass at `x`.
    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        Self::new(&[x], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.n)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Push-forward under `x ↦ f(x)` (same dimension).
    pub fn map_points<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Result<Self> {
        let pts: Vec<Vec<f64>> = self.points().map(f).collect();
        Self::new(&pts, self.masses.clone())
    }
}

/// `R^ω_# μ`: a measure on the line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projected1D {
    pub values: Vec<f64>,
    pub masses: Vec<f64>,
    /// The projection direction; absent for measures built directly on `R`.
    pub direction: Option<UnitVector>,
}

impl Projected1D {
    pub fn from_values(values: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if values.len() != masses.len() {
            return Err(Error::invalid("values and masses differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value"));
        }
        check_masses(&masses)?;
        Ok(Self {
            values,
            masses,
            direction: None,
        })
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let m = values.len().max(1);
        let masses = vec![1.0 / m as f64; values.len()];
        Self::from_values(values, masses)
    }
}

pub fn project(mu: &EmpiricalMeasure, omega: &UnitVector) -> Result<Projected1D> {
    if omega.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: omega.dim(),
        });
    }
    Ok(Projected1D {
        values: mu.points().map(|x| dot(x, omega.coords())).collect(),
        masses: mu.masses.clone(),
        direction: Some(omega.clone()),
    })
}

/// Projection values only, for inner loops over many directions.
pub(crate) fn project_values(mu: &EmpiricalMeasure, omega: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(mu.points().map(|x| dot(x, omega)));
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // Stable: equal values keep index order.
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    idx
}

/// `MK_p` between two measures on the line, via the co-monotone coupling of
/// their quantile functions.
pub fn w_p_1d(a: &Projected1D, b: &Projected1D, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            allowed: "[1, ∞)",
        });
    }
    Ok(w_p_raw(&a.values, &a.masses, &b.values, &b.masses, p).powf(1.0 / p))
}

/// `MK_p^p` between `Σ ma_i δ_{xa_i}` and `Σ mb_j δ_{xb_j}`.
pub(crate) fn w_p_raw(xa: &[f64], ma: &[f64], xb: &[f64], mb: &[f64], p: f64) -> f64 {
    let ia = sorted_order(xa);
    let ib = sorted_order(xb);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (ma[ia[0]], mb[ib[0]]);
    let mut total = 0.0;
    loop {
        let d = (xa[ia[i]] - xb[ib[j]]).abs();
        let cost = if p == 1.0 {
            d
        } else if p == 2.0 {
            d * d
        } else {
            d.powf(p)
        };
        let (advance_a, advance_b, moved) = if ra < rb {
            (true, false, ra)
        } else if rb < ra {
            (false, true, rb)
        } else {
            (true, true, ra)
        };
        total += moved * cost;
        ra -= moved;
        rb -= moved;
        if advance_a {
            i += 1;
            if i == ia.len() {
                break;
            }
            ra = ma[ia[i]];
        }
        if advance_b {
            j += 1;
            if j == ib.len() {
                break;
            }
            rb = mb[ib[j]];
        }
    }
    total
}

/// `∫ |x|^p dμ`.
pub fn moment(mu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            allowed: "[1, ∞)",
        });
    }
    Ok(mu
        .points()
        .zip(&mu.masses)
        .map(|(x, m)| m * dot(x, x).sqrt().powf(p))
        .sum())
}
