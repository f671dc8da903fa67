//! Command-line front end: `packing-sim enumerate|solve|simulate|fluid|experiment`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{run_experiment, Experiment, ExperimentSpec, OUT_DIR_ENV};
use crate::config_space::{ConfigSpace, SpaceSpec};
use crate::error::{Error, Result};
use crate::fluid::{integrate_with, FluidOptions};
use crate::optimizer::{
    check_nsi, objective_f, objective_phi, solve_phistar, solve_xstar, Demand, DemandSpec,
    StatePoint,
};
use crate::simulator::{
    run_with_reference, write_snapshots_csv, Discipline, Mode, Reference, SimConfig, SimParams,
    SimSpec,
};

/// Exit code when `--check` is given and the verdict fails.
pub const EXIT_CHECK_FAILED: i32 = 2;

const SOLVER_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "packing-sim", version, about = "Greedy placement simulator and fluid optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: $PACKING_SIM_OUT_DIR, then ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, value_parser = parse_discipline)]
    pub discipline: Option<Discipline>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate configurations, edges and aggregate classes.
    Enumerate(Common),
    /// Compute x*, F*, Phi* and optimality certificates.
    Solve(Common),
    /// Run one simulation.
    Simulate(Common),
    /// Integrate the fluid dynamics.
    Fluid {
        #[command(flatten)]
        common: Common,
        #[arg(long = "T", default_value_t = 50.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Initial state: a dense JSON array or an object keyed by "k1,k2,...".
        #[arg(long)]
        x0: Option<String>,
    },
    /// Run a scaling experiment.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Exit with code 2 if the verdict fails.
        #[arg(long)]
        check: bool,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("unknown mode {s:?}"))
}

fn parse_discipline(s: &str) -> std::result::Result<Discipline, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("unknown discipline {s:?}"))
}

impl Common {
    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn read(&self) -> Result<Value> {
        Ok(serde_json::from_str(&fs::read_to_string(&self.config)?)?)
    }

    fn apply(&self, p: &mut SimParams) {
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.alpha {
            p.alpha = v;
        }
        if let Some(v) = self.r {
            p.r = v;
        }
        if let Some(v) = self.mode {
            p.mode = v;
        }
        if let Some(v) = self.discipline {
            p.discipline = v;
        }
    }
}

fn default_alpha() -> f64 {
    1.0
}

/// Space, demand and exponent; the input of `solve` and `fluid`.
#[derive(Debug, Deserialize)]
struct ProblemSpec {
    space: SpaceSpec,
    demand: DemandSpec,
    #[serde(default = "default_alpha")]
    alpha: f64,
}

impl ProblemSpec {
    fn build(self, alpha: Option<f64>) -> Result<(ConfigSpace, Demand, f64)> {
        Ok((
            self.space.build()?,
            Demand::try_from(self.demand)?,
            alpha.unwrap_or(self.alpha),
        ))
    }
}

fn key(k: &[u32]) -> String {
    k.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn keyed(space: &ConfigSpace, x: &[f64]) -> BTreeMap<String, f64> {
    space
        .configs()
        .iter()
        .zip(x)
        .map(|(k, v)| (key(k), *v))
        .collect()
}

#[derive(Serialize)]
struct Solution {
    alpha: f64,
    rho: Vec<f64>,
    xstar: BTreeMap<String, f64>,
    f_star: f64,
    eta: Vec<f64>,
    kkt_residual: f64,
    phi_star: f64,
    phi_of_xstar: f64,
    nsi_at_phi_optimum: bool,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(dir.join(name), &text)?;
    Ok(text)
}

fn parse_x0(space: &ConfigSpace, text: &str, alpha: f64) -> Result<StatePoint> {
    let value: Value = serde_json::from_str(text)?;
    let bad = |m: String| Error::InvalidConfig(format!("--x0: {m}"));
    let x = match value {
        Value::Array(_) => serde_json::from_value::<Vec<f64>>(value)?,
        Value::Object(map) => {
            let mut x = vec![0.0; space.len()];
            for (k, v) in map {
                let config: Vec<u32> = k
                    .split(',')
                    .map(|p| p.trim().parse::<u32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(e.to_string()))?;
                let c = space
                    .index_of(&config)
                    .ok_or_else(|| bad(format!("{k} is not a configuration")))?;
                x[c] = v.as_f64().ok_or_else(|| bad(format!("value for {k} is not a number")))?;
            }
            x
        }
        _ => return Err(bad("expected an array or an object".into())),
    };
    if x.len() != space.len() {
        return Err(bad(format!("{} entries for {} configurations", x.len(), space.len())));
    }
    Ok(StatePoint::new(x, alpha))
}

/// Runs the CLI and returns the process exit code.
pub fn run_cli(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Enumerate(common) => {
            let value = common.read()?;
            let spec: SpaceSpec = serde_json::from_value(value.get("space").cloned().unwrap_or(value))?;
            let space = spec.build()?;
            let dir = common.out_dir();
            fs::create_dir_all(&dir)?;
            write_json(&dir, "space.json", &space.dump())?;
            println!(
                "{} configurations, {} edges, {} classes",
                space.len(),
                space.edges().len(),
                space.num_classes()
            );
        }
        Command::Solve(common) => {
            let spec: ProblemSpec = serde_json::from_value(common.read()?)?;
            let (space, demand, alpha) = spec.build(common.alpha)?;
            let (x, cert) = solve_xstar(&space, &demand, alpha, SOLVER_TOL)?;
            let f_star = objective_f(&x);
            let (xphi, phi_star) = solve_phistar(&space, &demand, alpha, SOLVER_TOL)?;
            let solution = Solution {
                alpha,
                rho: demand.rho().to_vec(),
                xstar: keyed(&space, &x.x),
                f_star,
                eta: cert.eta,
                kkt_residual: cert.residual,
                phi_star,
                phi_of_xstar: objective_phi(&x, &space),
                nsi_at_phi_optimum: check_nsi(&space, &xphi, 1e-8).holds,
            };
            let dir = common.out_dir();
            fs::create_dir_all(&dir)?;
            println!("{}", write_json(&dir, "solution.json", &solution)?);
        }
        Command::Simulate(common) => {
            let mut spec: SimSpec = serde_json::from_value(common.read()?)?;
            common.apply(&mut spec.params);
            let cfg = SimConfig::from_spec(spec)?;
            let reference = Reference::for_config(&cfg, SOLVER_TOL)?;
            let (snapshots, summary) = run_with_reference(&cfg, &reference)?;
            let dir = common.out_dir();
            fs::create_dir_all(&dir)?;
            write_snapshots_csv(fs::File::create(dir.join("snapshots.csv"))?, &cfg.space, &snapshots)?;
            println!("{}", write_json(&dir, "summary.json", &summary)?);
        }
        Command::Fluid {
            common,
            horizon,
            dt,
            x0,
        } => {
            let spec: ProblemSpec = serde_json::from_value(common.read()?)?;
            let (space, demand, alpha) = spec.build(common.alpha)?;
            let start = match x0 {
                Some(text) => parse_x0(&space, &text, alpha)?,
                None => {
                    let mut x = StatePoint::zeros(space.len(), alpha);
                    for (ty, rho) in demand.rho().iter().enumerate() {
                        x.x[space.unit(ty)] = *rho;
                    }
                    x
                }
            };
            let mut opts = FluidOptions::new(horizon, dt);
            opts.record_interval = Some((horizon / 1000.0).max(dt));
            let traj = integrate_with(&space, &start, &demand, &opts)?;
            let (xstar, _) = solve_xstar(&space, &demand, alpha, SOLVER_TOL)?;
            let dir = common.out_dir();
            fs::create_dir_all(&dir)?;
            let mut w = csv::Writer::from_path(dir.join("trajectory.csv"))?;
            w.write_record(["t", "x", "F"])?;
            for ((t, x), f) in traj.times.iter().zip(&traj.states).zip(&traj.objective) {
                w.write_record([t.to_string(), serde_json::to_string(&keyed(&space, x))?, f.to_string()])?;
            }
            w.flush()?;
            let last = StatePoint::new(traj.last().to_vec(), alpha);
            let summary = serde_json::json!({
                "horizon": horizon,
                "dt": dt,
                "final_x": keyed(&space, &last.x),
                "distance_to_xstar": last.distance(&xstar),
                "max_objective_increase": traj.max_objective_increase,
                "max_infeasibility": traj.max_infeasibility,
            });
            println!("{}", write_json(&dir, "fluid.json", &summary)?);
        }
        Command::Experiment { common, check } => {
            let mut spec: ExperimentSpec = serde_json::from_value(common.read()?)?;
            common.apply(&mut spec.base.params);
            let mut exp = Experiment::from_spec(spec)?;
            exp.output_dir = Some(match (&common.out, exp.output_dir.take()) {
                (None, Some(dir)) => dir,
                _ => common.out_dir(),
            });
            let report = run_experiment(&exp)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", report.to_json()?);
            if check && !report.verdict.passed {
                return Ok(EXIT_CHECK_FAILED);
            }
        }
    }
    Ok(0)
}
