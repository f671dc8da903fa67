//! Scaling experiments over `r`, stationary estimates and reports.

pub mod cli;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{objective_f, solve_phistar, solve_xstar, StatePoint};
use crate::simulator::{
    run_with_reference, write_snapshots_csv, Mode, Reference, SimConfig, SimSpec, Snapshot, Summary,
};

pub const REPORT_VERSION: u32 = 1;

/// Env var that overrides the output directory.
pub const OUT_DIR_ENV: &str = "PACKING_SIM_OUT_DIR";

const SOLVER_TOL: f64 = 1e-10;

/// Absolute slack in the monotonicity verdict, so metrics already at
/// rounding level do not fail it on noise.
const VERDICT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2ToXstar,
    PhiGap,
    TokenFraction,
    #[serde(rename = "F_timeseries")]
    FTimeseries,
    YConservation,
}

impl Metric {
    fn key(self) -> &'static str {
        match self {
            Self::L2ToXstar => "l2_to_xstar",
            Self::PhiGap => "phi_gap",
            Self::TokenFraction => "token_fraction",
            Self::FTimeseries => "F_change",
            Self::YConservation => "y_conservation",
        }
    }
}

fn default_replications() -> usize {
    1
}

fn default_metrics() -> BTreeSet<Metric> {
    BTreeSet::from([Metric::L2ToXstar])
}

/// JSON form of an experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: SimSpec,
    pub r_grid: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_metrics")]
    pub metrics: BTreeSet<Metric>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Write per-cell snapshot CSVs when an output directory is set.
    #[serde(default = "default_true")]
    pub traces: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub base: SimConfig,
    pub r_grid: Vec<f64>,
    pub replications: usize,
    pub metrics: BTreeSet<Metric>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub traces: bool,
}

impl Experiment {
    pub fn new(base: SimConfig, r_grid: Vec<f64>, replications: usize) -> Self {
        Self {
            base,
            r_grid,
            replications,
            metrics: default_metrics(),
            output_dir: None,
            threads: None,
            traces: false,
        }
    }

    pub fn from_spec(spec: ExperimentSpec) -> Result<Self> {
        Ok(Self {
            base: SimConfig::from_spec(spec.base)?,
            r_grid: spec.r_grid,
            replications: spec.replications,
            metrics: spec.metrics,
            output_dir: spec.output_dir,
            threads: spec.threads,
            traces: spec.traces,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        if let Some(r) = self.r_grid.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InvalidConfig(format!("grid values must be positive, got {r}")));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }

    /// Metric the monotonicity verdict is judged on.
    pub fn primary_metric(&self) -> Metric {
        if self.base.params.discipline.is_aggregate() {
            Metric::PhiGap
        } else {
            Metric::L2ToXstar
        }
    }
}

/// Sample mean with its standard error and the number of values behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, se, n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub replication: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub r: f64,
    pub metrics: BTreeMap<String, Stat>,
    pub missing: Vec<MissingCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub metric: String,
    /// Each step satisfies `mean(r') < mean(r) + max(sqrt(se^2 + se'^2), 1e-12)`.
    pub monotone: bool,
    pub complete: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub r_grid: Vec<f64>,
    pub replications: usize,
    pub mode: Mode,
    pub discipline: crate::simulator::Discipline,
    pub alpha: f64,
    pub seed: u64,
    pub xstar: Vec<f64>,
    pub f_star: f64,
    pub phi_star: Option<f64>,
    pub cells: Vec<CellReport>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct CellOutcome {
    summary: Summary,
    f_series: Vec<(f64, f64)>,
}

/// Seeds stay the base seed; the stream encodes the grid and replication
/// indices so every cell has its own generator.
pub fn cell_stream(r_index: usize, replication: usize) -> u64 {
    ((r_index as u64) << 32) | replication as u64
}

fn metric_values(exp: &Experiment, metric: Metric, out: &CellOutcome) -> Vec<(String, f64)> {
    let s = &out.summary;
    match metric {
        Metric::L2ToXstar => s.l2_to_xstar.map(|v| (metric.key().into(), v)).into_iter().collect(),
        Metric::PhiGap => s.phi_gap.map(|v| (metric.key().into(), v)).into_iter().collect(),
        Metric::TokenFraction => vec![(metric.key().into(), s.token_fraction.iter().sum())],
        Metric::FTimeseries => {
            let alpha = exp.base.params.alpha;
            let f0 = objective_f(&StatePoint::new(s.initial_x.clone(), alpha));
            let f1 = objective_f(&StatePoint::new(s.final_x.clone(), alpha));
            vec![(metric.key().into(), f1 - f0)]
        }
        Metric::YConservation => match exp.base.params.mode {
            Mode::Closed => vec![(
                metric.key().into(),
                if s.initial_y == s.final_y { 1.0 } else { 0.0 },
            )],
            Mode::Open => {
                // z-scores of the time-averaged actual count against rho_i r
                let rho = exp.base.demand.rho();
                let mut mean_z: f64 = 0.0;
                let mut var_z: f64 = 0.0;
                for (i, rho_i) in rho.iter().enumerate() {
                    let target = rho_i * s.r;
                    mean_z = mean_z.max((s.mean_y_actual[i] - target).abs() / s.se_mean_y_actual[i]);
                    var_z = var_z.max((s.var_y_actual[i] - target).abs() / s.se_var_y_actual[i]);
                }
                vec![("y_mean_z".into(), mean_z), ("y_var_z".into(), var_z)]
            }
        },
    }
}

fn run_cell(
    exp: &Experiment,
    reference: &Reference,
    r_index: usize,
    replication: usize,
) -> Result<CellOutcome> {
    let mut cfg = exp.base.clone();
    cfg.params.r = exp.r_grid[r_index];
    cfg.params.stream = cell_stream(r_index, replication);
    cfg.validate()?;
    let (snapshots, summary) = run_with_reference(&cfg, reference)?;
    let alpha = cfg.params.alpha;
    let len = cfg.space.len();
    let f_series = snapshots
        .iter()
        .map(|s| (s.t, objective_f(&StatePoint::new(s.dense_x(len), alpha))))
        .collect();
    if let (Some(dir), true) = (&exp.output_dir, exp.traces) {
        let path = dir.join(format!("trace_r{r_index}_rep{replication}.csv"));
        write_snapshots_csv(fs::File::create(path)?, &cfg.space, &snapshots)?;
    }
    Ok(CellOutcome { summary, f_series })
}

fn write_f_series(dir: &Path, r_index: usize, replication: usize, series: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(format!("F_r{r_index}_rep{replication}.csv")))?;
    w.write_record(["t", "F"])?;
    for (t, f) in series {
        w.write_record([t.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every `(r, replication)` cell and assembles the report.
pub fn run_experiment(exp: &Experiment) -> Result<Report> {
    exp.validate()?;
    let space = exp.base.space.as_ref();
    let demand = &exp.base.demand;
    let alpha = exp.base.params.alpha;
    let (xstar, _) = solve_xstar(space, demand, alpha, SOLVER_TOL)?;
    let f_star = objective_f(&xstar);
    let phi_star = if exp.base.params.discipline.is_aggregate() || exp.metrics.contains(&Metric::PhiGap) {
        Some(solve_phistar(space, demand, alpha, SOLVER_TOL)?.1)
    } else {
        None
    };
    let reference = Reference {
        xstar: Some(xstar.clone()),
        phistar: phi_star,
    };
    if let Some(dir) = &exp.output_dir {
        fs::create_dir_all(dir)?;
    }

    let jobs: Vec<(usize, usize)> = (0..exp.r_grid.len())
        .flat_map(|ri| (0..exp.replications).map(move |rep| (ri, rep)))
        .collect();
    let work = || -> Vec<Result<CellOutcome>> {
        jobs.par_iter()
            .map(|&(ri, rep)| run_cell(exp, &reference, ri, rep))
            .collect()
    };
    let outcomes = match exp.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut warnings = Vec::new();
    if exp.r_grid.is_empty() {
        warnings.push("empty r_grid: nothing to run".to_string());
    }
    let mut metrics = exp.metrics.clone();
    metrics.insert(exp.primary_metric());

    let mut cells = Vec::with_capacity(exp.r_grid.len());
    let mut by_cell = outcomes.into_iter();
    for (ri, &r) in exp.r_grid.iter().enumerate() {
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut missing = Vec::new();
        for rep in 0..exp.replications {
            match by_cell.next().expect("one outcome per job") {
                Ok(out) => {
                    for &m in &metrics {
                        for (k, v) in metric_values(exp, m, &out) {
                            values.entry(k).or_default().push(v);
                        }
                    }
                    if let (Some(dir), true) = (&exp.output_dir, metrics.contains(&Metric::FTimeseries)) {
                        write_f_series(dir, ri, rep, &out.f_series)?;
                    }
                }
                Err(e) => missing.push(MissingCell {
                    replication: rep,
                    error: e.to_string(),
                }),
            }
        }
        cells.push(CellReport {
            r,
            metrics: values.iter().map(|(k, v)| (k.clone(), Stat::from_values(v))).collect(),
            missing,
        });
    }

    let key = exp.primary_metric().key();
    let complete = cells.iter().all(|c| c.missing.is_empty());
    let monotone = cells.windows(2).all(|w| match (w[0].metrics.get(key), w[1].metrics.get(key)) {
        (Some(a), Some(b)) => {
            b.mean < a.mean + (a.se * a.se + b.se * b.se).sqrt().max(VERDICT_FLOOR)
        }
        _ => false,
    });
    let report = Report {
        version: REPORT_VERSION,
        r_grid: exp.r_grid.clone(),
        replications: exp.replications,
        mode: exp.base.params.mode,
        discipline: exp.base.params.discipline,
        alpha,
        seed: exp.base.params.seed,
        xstar: xstar.x,
        f_star,
        phi_star,
        cells,
        verdict: Verdict {
            metric: key.to_string(),
            monotone,
            complete,
            passed: monotone && complete,
        },
        warnings,
    };
    if let Some(dir) = &exp.output_dir {
        fs::write(dir.join("report.json"), report.to_json()?)?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    BatchMeans { batches: usize },
}

impl Default for Estimator {
    fn default() -> Self {
        Self::BatchMeans { batches: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub samples: usize,
}

/// Sample average of the fluid state over snapshots taken at or after
/// `burn_in`, with batch-means standard errors.
pub fn stationarity_estimate(
    snapshots: &[Snapshot],
    len: usize,
    burn_in: f64,
    method: Estimator,
) -> Result<StationaryEstimate> {
    let Estimator::BatchMeans { batches } = method;
    let window: Vec<Vec<f64>> = snapshots
        .iter()
        .filter(|s| s.t >= burn_in)
        .map(|s| s.dense_x(len))
        .collect();
    let n = window.len();
    if batches == 0 || n < batches || n == 0 {
        return Err(Error::ShortWindow {
            samples: n,
            batches,
        });
    }
    let mut mean = vec![0.0; len];
    for x in &window {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n as f64;
        }
    }
    // contiguous batches, sizes differing by at most one
    let mut batch_means = Vec::with_capacity(batches);
    for b in 0..batches {
        let lo = b * n / batches;
        let hi = (b + 1) * n / batches;
        let mut m = vec![0.0; len];
        for x in &window[lo..hi] {
            for (acc, v) in m.iter_mut().zip(x) {
                *acc += v / (hi - lo) as f64;
            }
        }
        batch_means.push(m);
    }
    let se = (0..len)
        .map(|c| {
            let vals: Vec<f64> = batch_means.iter().map(|m| m[c]).collect();
            Stat::from_values(&vals).se
        })
        .collect();
    Ok(StationaryEstimate {
        mean,
        se,
        samples: n,
    })
}
