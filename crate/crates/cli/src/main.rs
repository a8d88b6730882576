//! Command-line front end.
//!
//! Every subcommand writes JSON or CSV into `--out-dir` and prints the main
//! JSON result on stdout. Outputs depend only on the arguments (including
//! `--seed`), never on `--threads`.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use spherepart::constants::Constants;
use spherepart::experiments::{scaling_experiment, summarize, trials_csv, ScalingConfig};
use spherepart::geometry::sample_uniform;
use spherepart::io::{self, QuadratureSpec, WeightsFile};
use spherepart::partition::{verify_bound, Partition};
use spherepart::rng::{derive_seed, stream};
use spherepart::sliced::{sliced_mk_dense, sliced_mk_partition, QNorm, SlicedEstimate};
use spherepart::transport::{solve_dual, CostKind, SolverOptions};
use spherepart::UnitVector;

#[derive(Parser)]
#[command(name = "spherepart", version, about = "Equal-area sphere partitions from semi-discrete optimal transport")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Exit with status 0 even when a bound check fails.
    #[arg(long, global = true)]
    report_only: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Constants of the intrinsic and extrinsic diameter bounds.
    Constants {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value = "constants.json")]
        out: PathBuf,
    },
    /// Solve for equal-mass Laguerre weights.
    Solve(SolveArgs),
    /// Assign the quadrature of a solve to cells.
    Partition {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "partition.json")]
        out: PathBuf,
        /// Also write `x0,…,cell` rows for every quadrature point.
        #[arg(long)]
        points_csv: Option<PathBuf>,
    },
    /// Check sampled cell diameters against the diameter bound.
    Verify {
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Sliced Monge-Kantorovich distance between two point clouds.
    Sliced(SlicedArgs),
    /// Decay of the maximal cell diameter with L.
    Scaling(ScalingArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Cost {
    Extrinsic,
    Intrinsic,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    n: usize,
    /// Number of directions (ignored with --directions).
    #[arg(long = "L", alias = "l")]
    l: Option<usize>,
    #[arg(long)]
    p: f64,
    #[arg(long, value_enum, default_value = "intrinsic")]
    cost: Cost,
    /// Quadrature size (default 1000·L).
    #[arg(long)]
    quad: Option<usize>,
    #[arg(long, default_value_t = 5e-3)]
    tol: f64,
    /// CSV of directions `x0,…`; otherwise L uniform random directions.
    #[arg(long)]
    directions: Option<PathBuf>,
    /// Treat the quadrature as the source measure (no held-out check).
    #[arg(long)]
    discrete: bool,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value = "weights.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SlicedArgs {
    #[arg(long)]
    mu1: PathBuf,
    #[arg(long)]
    mu2: PathBuf,
    #[arg(long)]
    p: f64,
    /// Outer exponent; a number >= 1 or `inf`.
    #[arg(long)]
    q: QNorm,
    /// Partition whose directions and cell masses form the quadrature.
    #[arg(long, required_unless_present = "dense")]
    partition: Option<PathBuf>,
    /// Monte-Carlo estimate over this many uniform directions.
    #[arg(long)]
    dense: Option<usize>,
    /// Keep per-direction values in the output.
    #[arg(long)]
    per_direction: bool,
    #[arg(long, default_value = "sliced.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64, 128, 256])]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    points_per_cell: usize,
    #[arg(long, default_value_t = 0.25)]
    tol_factor: f64,
    #[arg(long, value_enum, default_value = "intrinsic")]
    cost: Cost,
    #[arg(long, default_value = "scaling_trials.csv")]
    csv: PathBuf,
    #[arg(long, default_value = "scaling_summary.json")]
    out: PathBuf,
}

fn cost_kind(cost: Cost, p: f64) -> Result<CostKind> {
    Ok(match cost {
        Cost::Extrinsic => CostKind::extrinsic(p)?,
        Cost::Intrinsic => CostKind::intrinsic(p)?,
    })
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    /// Writes `value` to `out` and echoes it on stdout.
    fn emit<T: Serialize>(&self, value: &T, out: &Path) -> Result<()> {
        let path = self.path(out);
        io::write_json(value, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", serde_json::to_string_pretty(value)?);
        Ok(())
    }
}

fn solve(ctx: &Ctx, a: SolveArgs) -> Result<()> {
    let kind = cost_kind(a.cost, a.p)?;
    let directions: Vec<UnitVector> = match &a.directions {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            io::read_sphere_sample(file, 0)?.to_unit_vectors()
        }
        None => {
            let Some(l) = a.l else {
                bail!("either --L or --directions is required");
            };
            sample_uniform(a.n, l, derive_seed(ctx.seed, &[stream::DIRECTIONS]))?.to_unit_vectors()
        }
    };
    let l = directions.len();
    let spec = QuadratureSpec {
        n: a.n,
        count: a.quad.unwrap_or(1000 * l),
        seed: derive_seed(ctx.seed, &[stream::QUADRATURE]),
    };
    let quad = spec.sample()?;
    let options = if a.discrete {
        SolverOptions::discrete(a.tol)
    } else {
        SolverOptions::new(a.tol)
    }
    .max_iter(a.max_iter);
    let (weights, report) = solve_dual(&directions, kind, &quad, &options)?;
    log::info!(
        "converged in {} steps, max mass error {:.3e}",
        report.iterations,
        report.max_mass_error
    );
    ctx.emit(
        &WeightsFile {
            weights,
            report,
            quadrature: spec,
            tol: a.tol,
        },
        &a.out,
    )
}

fn partition(ctx: &Ctx, weights: &Path, out: &Path, points_csv: Option<&Path>) -> Result<()> {
    let wf: WeightsFile = io::read_json(weights).with_context(|| format!("reading {}", weights.display()))?;
    let quad = wf.quadrature.sample()?;
    let part = Partition::from_solution(wf.weights, wf.report, quad, wf.tol)?;
    if !part.empty_cells.is_empty() {
        log::warn!("cells below the mass tolerance: {:?}", part.empty_cells);
    }
    let path = ctx.path(out);
    io::write_json(&part, &path).with_context(|| format!("writing {}", path.display()))?;
    if let Some(csv) = points_csv {
        let path = ctx.path(csv);
        io::write_partition_points(&part, BufWriter::new(File::create(&path)?))?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        cells: usize,
        points: usize,
        cell_mass: &'a [f64],
        empty_cells: &'a [usize],
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&Summary {
            cells: part.len(),
            points: part.quadrature.count(),
            cell_mass: &part.cell_mass,
            empty_cells: &part.empty_cells,
        })?
    );
    Ok(())
}

/// Returns whether the bound holds with the normalized constant.
fn verify(ctx: &Ctx, partition: &Path, out: &Path) -> Result<bool> {
    let part: Partition = io::read_json(partition).with_context(|| format!("reading {}", partition.display()))?;
    let consts = Constants::compute(part.dim(), part.cost_kind().p())?;
    let report = verify_bound(&part, &consts, part.mk())?;
    ctx.emit(&report, out)?;
    Ok(report.satisfied_normalized && report.radius_implies_diameter)
}

fn sliced(ctx: &Ctx, a: SlicedArgs) -> Result<()> {
    let mu1 = io::read_measure_file(&a.mu1).with_context(|| format!("reading {}", a.mu1.display()))?;
    let mu2 = io::read_measure_file(&a.mu2).with_context(|| format!("reading {}", a.mu2.display()))?;
    let mut estimate = match &a.partition {
        Some(path) => {
            let part: Partition = io::read_json(path).with_context(|| format!("reading {}", path.display()))?;
            Some(sliced_mk_partition(&mu1, &mu2, &part, a.p, a.q)?)
        }
        None => None,
    };
    let mut dense = match a.dense {
        Some(k) => Some(sliced_mk_dense(
            &mu1,
            &mu2,
            a.p,
            a.q,
            k,
            derive_seed(ctx.seed, &[stream::DENSE]),
        )?),
        None => None,
    };
    if !a.per_direction {
        for e in estimate.iter_mut().chain(dense.iter_mut()) {
            e.per_direction.clear();
        }
    }
    #[derive(Serialize)]
    struct Output {
        partition: Option<SlicedEstimate>,
        dense: Option<SlicedEstimate>,
        /// `|partition − dense|`, when both were computed.
        difference: Option<f64>,
    }
    let difference = estimate
        .as_ref()
        .zip(dense.as_ref())
        .map(|(e, d)| (d.value - e.value).abs());
    ctx.emit(
        &Output {
            partition: estimate,
            dense,
            difference,
        },
        &a.out,
    )
}

fn scaling(ctx: &Ctx, a: ScalingArgs) -> Result<()> {
    let cfg = ScalingConfig {
        n: a.n,
        p: a.p,
        l_grid: a.grid,
        trials: a.trials,
        points_per_cell: a.points_per_cell,
        tol_factor: a.tol_factor,
        intrinsic: matches!(a.cost, Cost::Intrinsic),
        seed: ctx.seed,
    };
    let run = scaling_experiment(&cfg)?;
    std::fs::write(ctx.path(&a.csv), trials_csv(&run)?)?;
    ctx.emit(&summarize(&run), &a.out)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Constants { n, p, out } => ctx.emit(&Constants::compute(n, p)?, &out)?,
        Command::Solve(a) => solve(&ctx, a)?,
        Command::Partition {
            weights,
            out,
            points_csv,
        } => partition(&ctx, &weights, &out, points_csv.as_deref())?,
        Command::Verify { partition, out } => {
            if !verify(&ctx, &partition, &out)? && !cli.report_only {
                eprintln!("diameter bound violated (use --report-only to exit 0)");
                std::process::exit(2);
            }
        }
        Command::Sliced(a) => sliced(&ctx, a)?,
        Command::Scaling(a) => scaling(&ctx, a)?,
    }
    Ok(())
}
