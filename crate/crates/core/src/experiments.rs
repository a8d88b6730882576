//! Decay of the largest cell diameter as the number of random directions
//! grows.
//!
//! For `L` i.i.d. uniform directions the expected maximal cell diameter of
//! the equal-area partition decays at least like `L^e` (up to a constant),
//! where `e` depends on how `p` compares with `n/2`. The experiment measures
//! the empirical decay by a least-squares fit of `log mean max-diameter`
//! against `log L`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::sample_uniform;
use crate::partition::{build_partition, cell_diameters};
use crate::rng::{self, derive_seed, stream};
use crate::transport::{CostKind, SolverOptions};
use crate::{Error, Result};

/// Bootstrap resamples for the slope confidence band.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateCase {
    /// `p > n/2`.
    Above,
    /// `p = n/2`, with a logarithmic factor.
    Critical,
    /// `1 < p < n/2`.
    Below,
}

/// Predicted decay `L^{exponent}` (times `log(1+L)^{log_power}` at `p = n/2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    pub exponent: f64,
    pub case: RateCase,
    pub log_power: f64,
}

pub fn theoretical_exponent(n: usize, p: f64) -> Result<Exponent> {
    if n < 2 {
        return Err(Error::invalid(format!("n must be >= 2, got {n}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            allowed: "(1, ∞)",
        });
    }
    let nf = n as f64;
    let denom = nf - 1.0 + p;
    let half = 0.5 * nf;
    Ok(if p > half {
        Exponent {
            exponent: -1.0 / (2.0 * denom),
            case: RateCase::Above,
            log_power: 0.0,
        }
    } else if p == half {
        Exponent {
            exponent: -1.0 / (2.0 * denom),
            case: RateCase::Critical,
            log_power: 1.0 / denom,
        }
    } else {
        Exponent {
            exponent: -p / (2.0 * nf * denom),
            case: RateCase::Below,
            log_power: 0.0,
        }
    })
}

/// Reference rate for the expected transport distance between a measure on
/// `R^n` with finite `q`-th moment and its `L`-point empirical measure:
/// `L^{main}·log(1+L)^{main_log} + L^{tail}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRate {
    pub case: RateCase,
    pub main_exponent: f64,
    pub main_log: bool,
    /// `-(q-p)/p`, the tail exponent as stated for the rate.
    pub tail_exponent_stated: f64,
    /// `-(q-p)/q`, the tail exponent used when choosing `q` for the decay
    /// bound.
    pub tail_exponent_applied: f64,
    /// The value of `q` excluded in this case.
    pub excluded_q: f64,
}

pub fn empirical_rate(n: usize, p: f64, q: f64) -> Result<EmpiricalRate> {
    if !(p >= 1.0 && q > p && q.is_finite()) {
        return Err(Error::invalid(format!("need 1 <= p < q < ∞, got p={p}, q={q}")));
    }
    if n < 1 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let nf = n as f64;
    let (case, main_exponent, main_log, excluded_q) = if p > 0.5 * nf {
        (RateCase::Above, -0.5, false, 2.0 * p)
    } else if p == 0.5 * nf {
        (RateCase::Critical, -0.5, true, 2.0 * p)
    } else {
        (RateCase::Below, -p / nf, true, nf * p / (nf - p))
    };
    Ok(EmpiricalRate {
        case,
        main_exponent,
        main_log,
        tail_exponent_stated: -(q - p) / p,
        tail_exponent_applied: -(q - p) / q,
        excluded_q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub n: usize,
    pub p: f64,
    pub l_grid: Vec<usize>,
    pub trials: usize,
    /// Quadrature points per cell; the quadrature has `points_per_cell · L`.
    pub points_per_cell: usize,
    /// Mass tolerance is `tol_factor / L`.
    pub tol_factor: f64,
    pub intrinsic: bool,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            n: 3,
            p: 2.0,
            l_grid: vec![8, 16, 32, 64, 128, 256],
            trials: 10,
            points_per_cell: 1000,
            tol_factor: 0.25,
            intrinsic: true,
            seed: 0,
        }
    }
}

impl ScalingConfig {
    fn validate(&self) -> Result<()> {
        if self.l_grid.is_empty() || self.l_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("L grid must be non-empty and strictly increasing"));
        }
        if self.l_grid[0] < 2 {
            return Err(Error::invalid("every L in the grid must be >= 2"));
        }
        if self.trials < 3 {
            return Err(Error::invalid("at least 3 trials per L are required"));
        }
        if self.points_per_cell < crate::transport::MIN_POINTS_PER_CELL {
            return Err(Error::invalid(format!(
                "points_per_cell must be >= {}",
                crate::transport::MIN_POINTS_PER_CELL
            )));
        }
        if !(self.tol_factor > 0.0 && self.tol_factor < 1.0) {
            return Err(Error::invalid("tol_factor must lie in (0, 1)"));
        }
        Ok(())
    }

    fn cost_kind(&self) -> Result<CostKind> {
        if self.intrinsic {
            CostKind::intrinsic(self.p)
        } else {
            CostKind::extrinsic(self.p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub l: usize,
    pub trial: usize,
    /// Largest sampled geodesic cell diameter; absent if the solve failed
    /// twice.
    pub max_diam: Option<f64>,
    pub max_mass_error: Option<f64>,
    pub retried: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRun {
    pub config: ScalingConfig,
    /// Row-major by `(L, trial)`.
    pub trials: Vec<Trial>,
    pub fitted_slope: f64,
    pub theoretical: Exponent,
}

impl ScalingRun {
    /// Converged diameters for each L of the grid.
    pub fn max_diams(&self) -> Vec<Vec<f64>> {
        self.config
            .l_grid
            .iter()
            .map(|&l| self.trials.iter().filter(|t| t.l == l).filter_map(|t| t.max_diam).collect())
            .collect()
    }

    pub fn flagged(&self) -> Vec<&Trial> {
        self.trials.iter().filter(|t| t.max_diam.is_none()).collect()
    }
}

fn run_trial(cfg: &ScalingConfig, kind: CostKind, l: usize, trial: usize) -> Trial {
    let base = derive_seed(cfg.seed, &[stream::TRIAL, l as u64, trial as u64]);
    let attempt = |points_per_cell: usize| -> Result<(f64, f64)> {
        let dirs = sample_uniform(cfg.n, l, derive_seed(base, &[stream::DIRECTIONS]))?.to_unit_vectors();
        let quad = sample_uniform(
            cfg.n,
            points_per_cell * l,
            derive_seed(base, &[stream::QUADRATURE, points_per_cell as u64]),
        )?;
        let opts = SolverOptions::new(cfg.tol_factor / l as f64);
        let part = build_partition(&dirs, kind, &quad, &opts)?;
        let (geo, _) = cell_diameters(&part);
        Ok((geo.into_iter().fold(0.0, f64::max), part.solve.max_mass_error))
    };
    let mut retried = false;
    let result = attempt(cfg.points_per_cell).or_else(|e| {
        log::warn!("L={l} trial={trial}: {e}; retrying with a larger quadrature");
        retried = true;
        attempt(2 * cfg.points_per_cell)
    });
    match result {
        Ok((d, err)) => Trial {
            l,
            trial,
            max_diam: Some(d),
            max_mass_error: Some(err),
            retried,
            error: None,
        },
        Err(e) => Trial {
            l,
            trial,
            max_diam: None,
            max_mass_error: None,
            retried,
            error: Some(e.to_string()),
        },
    }
}

pub fn scaling_experiment(cfg: &ScalingConfig) -> Result<ScalingRun> {
    cfg.validate()?;
    let kind = cfg.cost_kind()?;
    let theoretical = theoretical_exponent(cfg.n, cfg.p)?;
    let jobs: Vec<(usize, usize)> = cfg
        .l_grid
        .iter()
        .flat_map(|&l| (0..cfg.trials).map(move |t| (l, t)))
        .collect();
    let trials: Vec<Trial> = jobs.par_iter().map(|&(l, t)| run_trial(cfg, kind, l, t)).collect();
    let mut run = ScalingRun {
        config: cfg.clone(),
        trials,
        fitted_slope: f64::NAN,
        theoretical,
    };
    run.fitted_slope = fit_slope(&cfg.l_grid, &run.max_diams()).unwrap_or(f64::NAN);
    Ok(run)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least-squares slope of `log mean(diams)` against `log L`, over the grid
/// points with at least one value. `None` with fewer than two such points.
pub fn fit_slope(l_grid: &[usize], diams: &[Vec<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = l_grid
        .iter()
        .zip(diams)
        .filter(|(_, d)| !d.is_empty())
        .map(|(&l, d)| ((l as f64).ln(), mean(d).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub l: usize,
    pub converged: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// `mean(first L) · (L / first L)^{exponent}`: the predicted decay line
    /// through the first grid point.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub n: usize,
    pub p: f64,
    pub cost: String,
    pub seed: u64,
    pub levels: Vec<LevelSummary>,
    pub fitted_slope: f64,
    /// 2.5% and 97.5% bootstrap quantiles of the slope.
    pub slope_band: (f64, f64),
    pub theoretical: Exponent,
    /// `fitted_slope <= exponent + 0.05`.
    pub decays_fast_enough: bool,
    pub flagged_trials: usize,
}

pub fn summarize(run: &ScalingRun) -> ScalingSummary {
    let cfg = &run.config;
    let diams = run.max_diams();
    let first_mean = diams.iter().find(|d| !d.is_empty()).map(|d| mean(d));
    let first_l = cfg.l_grid.iter().zip(&diams).find(|(_, d)| !d.is_empty()).map(|(&l, _)| l);
    let levels = cfg
        .l_grid
        .iter()
        .zip(&diams)
        .map(|(&l, d)| {
            let (m, s, lo, hi) = if d.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                let m = mean(d);
                let var = if d.len() > 1 {
                    d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (d.len() - 1) as f64
                } else {
                    0.0
                };
                (
                    m,
                    var.sqrt(),
                    d.iter().copied().fold(f64::INFINITY, f64::min),
                    d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            let reference = match (first_mean, first_l) {
                (Some(m0), Some(l0)) => m0 * (l as f64 / l0 as f64).powf(run.theoretical.exponent),
                _ => f64::NAN,
            };
            LevelSummary {
                l,
                converged: d.len(),
                mean: m,
                std: s,
                min: lo,
                max: hi,
                reference,
            }
        })
        .collect();

    ScalingSummary {
        n: cfg.n,
        p: cfg.p,
        cost: if cfg.intrinsic { "intrinsic" } else { "extrinsic" }.to_string(),
        seed: cfg.seed,
        levels,
        fitted_slope: run.fitted_slope,
        slope_band: bootstrap_band(&cfg.l_grid, &diams, derive_seed(cfg.seed, &[stream::BOOTSTRAP])),
        theoretical: run.theoretical,
        decays_fast_enough: run.fitted_slope <= run.theoretical.exponent + 0.05,
        flagged_trials: run.flagged().len(),
    }
}

/// Percentile band of the slope when trials are resampled with replacement
/// within each L.
fn bootstrap_band(l_grid: &[usize], diams: &[Vec<f64>], seed: u64) -> (f64, f64) {
    let mut rng = rng::generator(seed);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let resampled: Vec<Vec<f64>> = diams
            .iter()
            .map(|d| (0..d.len()).map(|_| d[rng.random_range(0..d.len())]).collect())
            .collect();
        if let Some(s) = fit_slope(l_grid, &resampled) {
            slopes.push(s);
        }
    }
    if slopes.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    slopes.sort_by(f64::total_cmp);
    let q = |f: f64| slopes[((f * (slopes.len() - 1) as f64).round()) as usize];
    (q(0.025), q(0.975))
}

/// One row per `(L, trial)`: `L,trial,max_diam_geodesic,max_mass_error,retried,converged`.
pub fn trials_csv(run: &ScalingRun) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["L", "trial", "max_diam_geodesic", "max_mass_error", "retried", "converged"])?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for t in &run.trials {
        w.write_record([
            t.l.to_string(),
            t.trial.to_string(),
            fmt(t.max_diam),
            fmt(t.max_mass_error),
            t.retried.to_string(),
            t.max_diam.is_some().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponent_cases() {
        let e = theoretical_exponent(3, 2.0).unwrap();
        assert_eq!(e.case, RateCase::Above);
        assert_relative_eq!(e.exponent, -1.0 / 8.0);
        let e = theoretical_exponent(4, 2.0).unwrap();
        assert_eq!(e.case, RateCase::Critical);
        assert_relative_eq!(e.exponent, -1.0 / 10.0);
        assert_relative_eq!(e.log_power, 1.0 / 5.0);
        let e = theoretical_exponent(6, 2.0).unwrap();
        assert_eq!(e.case, RateCase::Below);
        assert_relative_eq!(e.exponent, -1.0 / 42.0);
        assert!(theoretical_exponent(3, 1.0).is_err());
        assert!(theoretical_exponent(1, 2.0).is_err());
    }

    #[test]
    fn empirical_rate_table() {
        let r = empirical_rate(3, 2.0, 5.0).unwrap();
        assert_eq!(r.case, RateCase::Above);
        assert_eq!(r.main_exponent, -0.5);
        assert_relative_eq!(r.tail_exponent_stated, -1.5);
        assert_relative_eq!(r.tail_exponent_applied, -0.6);
        assert_eq!(r.excluded_q, 4.0);
        let r = empirical_rate(6, 2.0, 4.0).unwrap();
        assert_eq!(r.case, RateCase::Below);
        assert!(r.main_log);
        assert_relative_eq!(r.main_exponent, -1.0 / 3.0);
        assert_relative_eq!(r.excluded_q, 3.0);
        assert!(empirical_rate(3, 2.0, 2.0).is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let grid = [4, 16, 64];
        let diams: Vec<Vec<f64>> = grid.iter().map(|&l| vec![3.0 * (l as f64).powf(-0.4); 3]).collect();
        assert_relative_eq!(fit_slope(&grid, &diams).unwrap(), -0.4, epsilon = 1e-12);
        assert!(fit_slope(&grid[..1], &diams[..1]).is_none());
    }

    #[test]
    fn small_run_counts_and_summary() {
        let cfg = ScalingConfig {
            l_grid: vec![4, 16, 64],
            trials: 3,
            points_per_cell: 200,
            seed: 7,
            ..ScalingConfig::default()
        };
        let run = scaling_experiment(&cfg).unwrap();
        assert_eq!(run.trials.len(), 9);
        let s = summarize(&run);
        assert_eq!(s.levels.len(), 3);
        assert!(s.levels.iter().all(|l| l.mean > 0.0 && l.min <= l.mean && l.mean <= l.max));
        assert!(s.fitted_slope < 0.0);
        assert!(s.slope_band.0 <= s.fitted_slope && s.fitted_slope <= s.slope_band.1);
        let csv = trials_csv(&run).unwrap();
        assert_eq!(csv.lines().count(), 10);
        assert_eq!(trials_csv(&scaling_experiment(&cfg).unwrap()).unwrap(), csv);
    }

    #[test]
    fn config_validation() {
        let bad = |f: &dyn Fn(&mut ScalingConfig)| {
            let mut c = ScalingConfig::default();
            f(&mut c);
            scaling_experiment(&c).is_err()
        };
        assert!(bad(&|c| c.l_grid = vec![8, 8]));
        assert!(bad(&|c| c.l_grid = vec![1, 8]));
        assert!(bad(&|c| c.trials = 2));
        assert!(bad(&|c| c.points_per_cell = 10));
        assert!(bad(&|c| c.p = 1.0));
    }
}
