//! Explicit constants of the intrinsic and extrinsic diameter bounds.
//!
//! Both bounds have the shape
//!
//! ```text
//! diam(D_l) <= prefactor · MK_p(σ, ν)^{p/(n-1+p)}
//! ```
//!
//! where the prefactor comes from a lower bound `K·r^{n-1}` on the volume of
//! small caps. The printed prefactors use `K` computed with the raw surface
//! measure `|S^{n-2}|`, while `σ` is a probability measure; dividing by
//! `|S^{n-1}|` gives the `*_normalized` variants, which are larger by the
//! factor `|S^{n-1}|^{1/(n-1+p)} >= 1`. Both are reported; verification uses
//! the normalized one.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::RwLock;

use crate::geometry::{cap_measure, sphere_area};
use crate::{Error, Result};

/// Linear scan limit for `J_p` before switching to a continuous search.
const J_LINEAR_SCAN: u64 = 4096;
/// Consecutive decreases of `β_p(1/j)` that end the scan.
const J_DECREASES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicConstants {
    pub p: f64,
    pub n: usize,
    /// `I_p`; the supremum of `ρ_p` over the integers is attained at `I_p + 1`.
    pub i_p: u64,
    pub a_p: f64,
    /// `α_{n,p}` exactly as printed.
    pub alpha_np: f64,
    /// `α_{n,p}` with the probability normalization of the cap volume.
    pub alpha_np_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicConstants {
    pub p: f64,
    pub n: usize,
    /// `J_p`; the supremum of `β_p(1/j)` is attained at `j = J_p + 1`.
    pub j_p: u64,
    pub b_p: f64,
    /// `1/(J_p+1) - (sin(π/(2(J_p+1))) + 4 b_p)^p`.
    pub b_residual: f64,
    pub prefactor: f64,
    pub prefactor_normalized: f64,
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

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("sphere dimension n must be >= 2, got {n}")));
    }
    Ok(())
}

/// `ρ_p(i) = i^{-1/p} - i^{-1}`.
pub fn rho_p(p: f64, i: u64) -> Result<f64> {
    check_p(p)?;
    if i == 0 {
        return Err(Error::invalid("rho_p needs i >= 1"));
    }
    let x = i as f64;
    Ok(x.powf(-1.0 / p) - 1.0 / x)
}

/// `K_{n}(s) = |S^{n-2}|/(n-1) · s^{n-2}`, the printed cap-volume coefficient
/// for a concavity slope `s`.
fn cap_coefficient(n: usize, slope: f64) -> f64 {
    sphere_area(n - 2) / (n as f64 - 1.0) * slope.powi(n as i32 - 2)
}

fn normalization_factor(n: usize, p: f64) -> f64 {
    sphere_area(n - 1).powf(1.0 / (n as f64 - 1.0 + p))
}

pub fn intrinsic_constants(n: usize, p: f64) -> Result<IntrinsicConstants> {
    check_n(n)?;
    check_p(p)?;
    // The continuous maximizer of ρ_p is p^{p/(p-1)}.
    let last = p.powf(p / (p - 1.0)).ceil() as u64 + 2;
    let mut best = (1u64, rho_p(p, 1)?);
    for i in 2..=last {
        let v = rho_p(p, i)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let a_p = best.1 / 4.0;
    let slope = (a_p * PI).sin() / (a_p * PI);
    let exponent = -1.0 / (n as f64 - 1.0 + p);
    let alpha_np = 2.0 / a_p * cap_coefficient(n, slope).powf(exponent);
    Ok(IntrinsicConstants {
        p,
        n,
        i_p: best.0 - 1,
        a_p,
        alpha_np,
        alpha_np_normalized: alpha_np * normalization_factor(n, p),
    })
}

/// `β_p(t) = t - sin^p(πt/2)` on `(0, 1/2]`.
pub fn beta_p(p: f64, t: f64) -> Result<f64> {
    check_p(p)?;
    if !(t > 0.0 && t <= 0.5) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
            allowed: "(0, 1/2]",
        });
    }
    Ok(beta_unchecked(p, t))
}

fn beta_unchecked(p: f64, t: f64) -> f64 {
    t - (0.5 * PI * t).sin().powf(p)
}

/// Integer maximizer `j >= 2` of `β_p(1/j)`.
///
/// `β_p` has a unique interior maximizer on `(0, 1/2)` and is unimodal, so
/// `j ↦ β_p(1/j)` is unimodal too. Scans linearly until the value has dropped
/// [`J_DECREASES`] times in a row; if the peak lies beyond [`J_LINEAR_SCAN`]
/// (only for `p` close to 1) the continuous maximizer is located by golden
/// section and its two integer neighbours compared.
fn beta_maximizer(p: f64) -> Result<u64> {
    let f = |j: u64| beta_unchecked(p, 1.0 / j as f64);
    let mut best = (2u64, f(2));
    let mut prev = best.1;
    let mut decreases = 0;
    for j in 3..=J_LINEAR_SCAN {
        let v = f(j);
        if v > best.1 {
            best = (j, v);
        }
        decreases = if v < prev { decreases + 1 } else { 0 };
        prev = v;
        if decreases >= J_DECREASES && best.0 < j {
            return Ok(best.0);
        }
    }
    // Golden section in s = ln j, on [ln J_LINEAR_SCAN, ln 2^52].
    let g = |s: f64| beta_unchecked(p, (-s).exp());
    let (mut lo, mut hi) = ((J_LINEAR_SCAN as f64).ln(), 52.0 * 2f64.ln());
    if g(hi) >= g(hi - 1e-3) {
        return Err(Error::Bracketing { p });
    }
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - ratio * (hi - lo);
        let m2 = lo + ratio * (hi - lo);
        if g(m1) < g(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let j_star = (0.5 * (lo + hi)).exp();
    let (a, b) = (j_star.floor() as u64, j_star.ceil() as u64);
    Ok(if f(b) > f(a) { b } else { a.max(2) })
}

pub fn extrinsic_constants(n: usize, p: f64) -> Result<ExtrinsicConstants> {
    check_n(n)?;
    check_p(p)?;
    let j = beta_maximizer(p)?;
    let target = 1.0 / j as f64;
    let s = (PI / (2.0 * j as f64)).sin();
    let residual = |b: f64| target - (s + 4.0 * b).powf(p);

    // residual is strictly decreasing in b.
    let (mut lo, mut hi) = (0.0f64, 0.25f64);
    if !(residual(lo) > 0.0 && residual(hi) < 0.0) {
        return Err(Error::Bracketing { p });
    }
    let mut b = 0.5 * (lo + hi);
    for _ in 0..200 {
        b = 0.5 * (lo + hi);
        let r = residual(b);
        if r.abs() < 1e-15 || hi - lo <= f64::EPSILON * b {
            break;
        }
        if r > 0.0 {
            lo = b;
        } else {
            hi = b;
        }
    }
    let b_residual = residual(b);
    if !(b > 0.0 && b < 0.25) || b_residual.abs() >= 1e-12 {
        return Err(Error::Bracketing { p });
    }

    let slope = b * (1.0 - b * b).sqrt() / b.asin();
    let exponent = -1.0 / (n as f64 - 1.0 + p);
    let prefactor = 2.0 / b * cap_coefficient(n, slope).powf(exponent);
    Ok(ExtrinsicConstants {
        p,
        n,
        j_p: j - 1,
        b_p: b,
        b_residual,
        prefactor,
        prefactor_normalized: prefactor * normalization_factor(n, p),
    })
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 0.25) {
        return Err(Error::OutOfRange {
            name: "a",
            value: a,
            allowed: "(0, 1/4)",
        });
    }
    Ok(())
}

/// `H(t) = σ(B_{at})·(at)^p`, the lower bound on the optimal transport cost
/// in terms of the longest transport distance `t` (intrinsic cost).
pub fn h_lower_bound(n: usize, p: f64, a: f64, t: f64) -> Result<f64> {
    check_n(n)?;
    check_p(p)?;
    check_a(a)?;
    if !(0.0..=PI).contains(&t) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
            allowed: "[0, π]",
        });
    }
    let r = a * t;
    Ok(cap_measure(n, r)? * r.powf(p))
}

/// Extrinsic analogue `H(t) = σ(B_{2 arcsin(bt/2)})·(bt)^p` for chord
/// lengths `t ∈ [0, 2]`.
pub fn h_lower_bound_extrinsic(n: usize, p: f64, b: f64, t: f64) -> Result<f64> {
    check_n(n)?;
    check_p(p)?;
    check_a(b)?;
    if !(0.0..=2.0).contains(&t) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
            allowed: "[0, 2]",
        });
    }
    let r = 2.0 * (0.5 * b * t).asin();
    Ok(cap_measure(n, r)? * (b * t).powf(p))
}

/// Largest `t ∈ [0, t_max]` with `h(t) <= value`, for increasing `h`.
/// Returns `t_max` when `value >= h(t_max)`.
fn invert_increasing<F: Fn(f64) -> Result<f64>>(h: F, t_max: f64, value: f64) -> Result<f64> {
    if value <= 0.0 {
        return Ok(0.0);
    }
    if value >= h(t_max)? {
        return Ok(t_max);
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid)? <= value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Inverse of [`h_lower_bound`] in `t`, saturating at `π`.
pub fn h_inverse(n: usize, p: f64, a: f64, value: f64) -> Result<f64> {
    invert_increasing(|t| h_lower_bound(n, p, a, t), PI, value)
}

/// Inverse of [`h_lower_bound_extrinsic`] in `t`, saturating at `2`.
pub fn h_inverse_extrinsic(n: usize, p: f64, b: f64, value: f64) -> Result<f64> {
    invert_increasing(|t| h_lower_bound_extrinsic(n, p, b, t), 2.0, value)
}

/// `Θ(θ, t) = sin(θt)/sin θ`.
pub fn theta(theta_val: f64, t: f64) -> Result<f64> {
    if !(theta_val > 0.0 && theta_val <= PI / 2.0) {
        return Err(Error::OutOfRange {
            name: "theta",
            value: theta_val,
            allowed: "(0, π/2]",
        });
    }
    if !(t > 0.0 && t <= 0.5) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
            allowed: "(0, 1/2]",
        });
    }
    Ok((theta_val * t).sin() / theta_val.sin())
}

/// Both constant families for one `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub intrinsic: IntrinsicConstants,
    pub extrinsic: ExtrinsicConstants,
}

impl Constants {
    pub fn compute(n: usize, p: f64) -> Result<Self> {
        Ok(Self {
            intrinsic: intrinsic_constants(n, p)?,
            extrinsic: extrinsic_constants(n, p)?,
        })
    }
}

/// Memoizes [`Constants::compute`] by `(n, p)`; shareable across threads.
#[derive(Debug, Default)]
pub struct ConstantsCache {
    inner: RwLock<HashMap<(usize, u64), Constants>>,
}

impl ConstantsCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, n: usize, p: f64) -> Result<Constants> {
        let key = (n, p.to_bits());
        if let Some(c) = self.inner.read().expect("poisoned").get(&key) {
            return Ok(c.clone());
        }
        let c = Constants::compute(n, p)?;
        self.inner
            .write()
            .expect("poisoned")
            .entry(key)
            .or_insert_with(|| c.clone());
        Ok(c)
    }
}
