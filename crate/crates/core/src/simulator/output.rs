use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config_space::ConfigSpace;
use crate::error::Result;

pub const SIM_SCHEMA_VERSION: u32 = 1;

/// Cumulative per-edge counters, indexed like [`ConfigSpace::edges`].
///
/// `arrivals` and `departures` are the edge flows `A` and `D`. The token
/// split is filled only under token disciplines: `token_arrivals` counts
/// token placements, `replacements` arrivals that replaced a token (no
/// edge flow), `placed` arrivals placed by the rule, `actual_departures`
/// and `token_expiries` the two kinds of departure.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCounters {
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub token_arrivals: Vec<u64>,
    pub replacements: Vec<u64>,
    pub placed: Vec<u64>,
    pub actual_departures: Vec<u64>,
    pub token_expiries: Vec<u64>,
}

impl EdgeCounters {
    pub fn new(edges: usize, tokens: bool) -> Self {
        let split = if tokens { edges } else { 0 };
        Self {
            arrivals: vec![0; edges],
            departures: vec![0; edges],
            token_arrivals: vec![0; split],
            replacements: vec![0; split],
            placed: vec![0; split],
            actual_departures: vec![0; split],
            token_expiries: vec![0; split],
        }
    }

    /// Per-type sums of one counter vector.
    pub fn per_type(space: &ConfigSpace, counter: &[u64]) -> Vec<u64> {
        let mut out = vec![0; space.num_types()];
        for (e, n) in space.edges().iter().zip(counter) {
            out[e.ty] += n;
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub arrivals: u64,
    pub departures: u64,
    pub token_expiries: u64,
    pub token_replacements: u64,
    pub total: u64,
}

/// State at one sampling time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// `X_k / r` for configurations with `X_k > 0`.
    pub x: BTreeMap<usize, f64>,
    pub y: Vec<u64>,
    pub y_actual: Vec<u64>,
    pub y_token: Vec<u64>,
    pub counters: EdgeCounters,
}

impl Snapshot {
    pub fn dense_x(&self, len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        for (&c, &v) in &self.x {
            x[c] = v;
        }
        x
    }
}

/// Time averages over the window `[burn_in, horizon]`, plus run metadata.
/// With an empty window the averages are the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: u32,
    pub r: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub window: f64,
    pub events: EventCounts,
    /// Time-averaged `X / r`, dense over the space.
    pub mean_x: Vec<f64>,
    pub initial_x: Vec<f64>,
    pub final_x: Vec<f64>,
    pub initial_y: Vec<u64>,
    pub final_y: Vec<u64>,
    /// Time-averaged actual-customer counts and their variance.
    pub mean_y_actual: Vec<f64>,
    pub var_y_actual: Vec<f64>,
    /// Batch-means standard errors of the two lines above.
    pub se_mean_y_actual: Vec<f64>,
    pub se_var_y_actual: Vec<f64>,
    /// Time-averaged `Y_token / r`.
    pub token_fraction: Vec<f64>,
    pub l2_to_xstar: Option<f64>,
    pub phi_gap: Option<f64>,
    pub snapshots: usize,
}

fn config_key(k: &[u32]) -> String {
    k.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

/// Writes snapshots as CSV: `t`, a JSON object mapping configurations to
/// `X_k / r`, then `Y`, `Y_actual`, `Y_token` per type.
pub fn write_snapshots_csv<W: Write>(
    out: W,
    space: &ConfigSpace,
    snapshots: &[Snapshot],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let types = space.num_types();
    let mut header = vec!["t".to_string(), "x".to_string()];
    for prefix in ["Y", "Y_actual", "Y_token"] {
        header.extend((1..=types).map(|i| format!("{prefix}_{i}")));
    }
    w.write_record(&header)?;
    for s in snapshots {
        let x: BTreeMap<String, f64> = s
            .x
            .iter()
            .map(|(&c, &v)| (config_key(space.config(c)), v))
            .collect();
        let mut row = vec![s.t.to_string(), serde_json::to_string(&x)?];
        for v in [&s.y, &s.y_actual, &s.y_token] {
            row.extend(v.iter().map(u64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
