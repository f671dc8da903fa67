//! Deterministic fluid dynamics under greedy re-routing of departure mass.
//!
//! Each type-`i` departure stream `w_ki = k_i mu_i x_k` is re-routed to the
//! feasible type-`i` edge with the smallest differential `Delta_ki`. The
//! integrator is explicit Euler followed by clipping and projection back
//! onto the load polytope.

use serde::{Deserialize, Serialize};

use crate::config_space::ConfigSpace;
use crate::error::{Error, Result};
use crate::optimizer::{delta, objective_f, project_onto_polytope, Allocation, Demand, StatePoint};

pub const DEFAULT_FEAS_EPS: f64 = 1e-6;

/// Relative slack under which two differentials count as tied.
const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidOptions {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_feas_eps")]
    pub feas_eps: f64,
    /// Width of the linear ramp on differential gaps; `None` means ten
    /// steps' worth (`10 dt`), `Some(0.0)` means pure greedy.
    #[serde(default)]
    pub tie_band: Option<f64>,
    /// Spacing of recorded states; `None` records every step.
    #[serde(default)]
    pub record_interval: Option<f64>,
}

fn default_feas_eps() -> f64 {
    DEFAULT_FEAS_EPS
}

impl FluidOptions {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            feas_eps: DEFAULT_FEAS_EPS,
            tie_band: None,
            record_interval: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub objective: Vec<f64>,
    /// Largest one-step increase of `F` over all steps (recorded or not).
    pub max_objective_increase: f64,
    /// Largest load violation seen after projection.
    pub max_infeasibility: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has the initial state")
    }
}

/// Greedy re-routing, without smoothing.
pub fn greedy_rate_allocation(
    space: &ConfigSpace,
    x: &StatePoint,
    demand: &Demand,
    feas_eps: f64,
) -> Allocation {
    banded_allocation(space, x, demand, feas_eps, 0.0)
}

/// Greedy re-routing where a source edge whose differential exceeds the
/// minimum by `gap` moves only the fraction `min(1, gap / band)` of its
/// mass. `band = 0` is the pure rule: a source tied with the minimum keeps
/// its mass, other mass is split equally among the minimizers.
pub fn banded_allocation(
    space: &ConfigSpace,
    x: &StatePoint,
    demand: &Demand,
    feas_eps: f64,
    band: f64,
) -> Allocation {
    let edges = space.edges();
    let mu = demand.mu();
    let deltas: Vec<f64> = edges.iter().map(|e| delta(x, e)).collect();
    let scale = deltas.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    let tie = TIE_EPS * scale;
    let mut gamma = vec![0.0; edges.len()];

    for (ty, &mu_ty) in mu.iter().enumerate() {
        let of_type: Vec<usize> = (0..edges.len()).filter(|&e| edges[e].ty == ty).collect();
        let feasible: Vec<usize> = of_type
            .iter()
            .copied()
            .filter(|&e| edges[e].base.is_none_or(|b| x.x[b] > feas_eps))
            .collect();
        let best = feasible
            .iter()
            .map(|&e| deltas[e])
            .fold(f64::INFINITY, f64::min);
        let winners: Vec<usize> = feasible
            .iter()
            .copied()
            .filter(|&e| deltas[e] <= best + tie)
            .collect();

        for &src in &of_type {
            let e = edges[src];
            let mass = space.config(e.config)[ty] as f64 * mu_ty * x.x[e.config].max(0.0);
            if mass == 0.0 {
                continue;
            }
            let gap = deltas[src] - best;
            let moved = if gap <= tie {
                0.0
            } else if band > 0.0 {
                (gap / band).min(1.0)
            } else {
                1.0
            };
            gamma[src] += mass * (1.0 - moved);
            if moved > 0.0 {
                let share = mass * moved / winners.len() as f64;
                for &w in &winners {
                    gamma[w] += share;
                }
            }
        }
    }
    Allocation { gamma }
}

/// `dx/dt` for arrival rates `gamma` and departures `w_ki = k_i mu_i x_k`.
pub fn velocity(space: &ConfigSpace, x: &StatePoint, demand: &Demand, gamma: &Allocation) -> Vec<f64> {
    let mu = demand.mu();
    let mut dx = vec![0.0; space.len()];
    for (e, g) in space.edges().iter().zip(&gamma.gamma) {
        let w = space.config(e.config)[e.ty] as f64 * mu[e.ty] * x.x[e.config];
        let net = g - w;
        dx[e.config] += net;
        if let Some(b) = e.base {
            dx[b] -= net;
        }
    }
    dx
}

pub fn integrate(
    space: &ConfigSpace,
    x0: &StatePoint,
    demand: &Demand,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_with(space, x0, demand, &FluidOptions::new(horizon, dt))
}

pub fn integrate_with(
    space: &ConfigSpace,
    x0: &StatePoint,
    demand: &Demand,
    opts: &FluidOptions,
) -> Result<Trajectory> {
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {}", opts.dt)));
    }
    if !(opts.horizon.is_finite() && opts.horizon >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "horizon must be nonnegative, got {}",
            opts.horizon
        )));
    }
    if x0.x.len() != space.len() {
        return Err(Error::InvalidConfig(format!(
            "initial state has {} entries, the space has {}",
            x0.x.len(),
            space.len()
        )));
    }
    let band = opts.tie_band.unwrap_or(10.0 * opts.dt);
    let rho = demand.rho();
    let bound = 2.0 * rho.iter().copied().fold(0.0, f64::max);
    let steps = (opts.horizon / opts.dt).round() as usize;
    let stride = opts
        .record_interval
        .map_or(1, |r| ((r / opts.dt).round() as usize).max(1));

    let mut x = StatePoint::new(project_onto_polytope(space, rho, &x0.x), x0.alpha);
    let mut f = objective_f(&x);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.x.clone()],
        objective: vec![f],
        max_objective_increase: f64::NEG_INFINITY,
        max_infeasibility: x.infeasibility(space, demand),
    };

    for step in 1..=steps {
        let gamma = banded_allocation(space, &x, demand, opts.feas_eps, band);
        let dx = velocity(space, &x, demand, &gamma);
        let moved: Vec<f64> = x
            .x
            .iter()
            .zip(&dx)
            .map(|(v, d)| (v + opts.dt * d).max(0.0))
            .collect();
        x.x = project_onto_polytope(space, rho, &moved);
        let t = step as f64 * opts.dt;
        if x.x.iter().any(|v| !v.is_finite() || *v > bound) {
            return Err(Error::Divergence { t });
        }
        let next = objective_f(&x);
        traj.max_objective_increase = traj.max_objective_increase.max(next - f);
        traj.max_infeasibility = traj.max_infeasibility.max(x.infeasibility(space, demand));
        f = next;
        if step % stride == 0 || step == steps {
            traj.times.push(t);
            traj.states.push(x.x.clone());
            traj.objective.push(f);
        }
    }
    if steps == 0 {
        traj.max_objective_increase = 0.0;
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenTrajectory {
    pub times: Vec<f64>,
    /// Per time: per-type actual mass.
    pub actual: Vec<Vec<f64>>,
    /// Per time: per-type token mass.
    pub tokens: Vec<Vec<f64>>,
}

/// Euler integration of `y_hat' = lambda - mu y_hat` and
/// `y_tilde' = -lambda + mu y_hat - mu0 y_tilde`, held at zero while the
/// right-hand side is negative there.
pub fn fluid_token_odes(
    yhat0: &[f64],
    ytilde0: &[f64],
    demand: &Demand,
    mu0: f64,
    horizon: f64,
    dt: f64,
) -> Result<TokenTrajectory> {
    let types = demand.num_types();
    if yhat0.len() != types || ytilde0.len() != types {
        return Err(Error::InvalidConfig("initial values need one entry per type".into()));
    }
    if yhat0.iter().chain(ytilde0).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidConfig("initial values must be nonnegative".into()));
    }
    if !(dt.is_finite() && dt > 0.0 && mu0.is_finite() && mu0 > 0.0) {
        return Err(Error::InvalidConfig("dt and token rate must be positive".into()));
    }
    let (lambda, mu) = (demand.lambda(), demand.mu());
    let steps = (horizon / dt).round() as usize;
    let mut yhat = yhat0.to_vec();
    let mut ytilde = ytilde0.to_vec();
    let mut out = TokenTrajectory {
        times: vec![0.0],
        actual: vec![yhat.clone()],
        tokens: vec![ytilde.clone()],
    };
    for step in 1..=steps {
        for i in 0..types {
            let dh = lambda[i] - mu[i] * yhat[i];
            let dt_tok = -lambda[i] + mu[i] * yhat[i] - mu0 * ytilde[i];
            yhat[i] += dt * dh;
            ytilde[i] = (ytilde[i] + dt * dt_tok).max(0.0);
        }
        out.times.push(step as f64 * dt);
        out.actual.push(yhat.clone());
        out.tokens.push(ytilde.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{drift, solve_xstar};
    use approx::assert_abs_diff_eq;

    fn fixture() -> (ConfigSpace, Demand) {
        (
            ConfigSpace::from_configs(vec![vec![1], vec![2]], None).unwrap(),
            Demand::new(vec![1.0], vec![1.0]).unwrap(),
        )
    }

    #[test]
    fn allocation_routes_to_smallest_delta() {
        let (space, demand) = fixture();
        let x = StatePoint::new(vec![0.6, 0.2], 1.0);
        let v = greedy_rate_allocation(&space, &x, &demand, DEFAULT_FEAS_EPS);
        assert_abs_diff_eq!(v.gamma[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.gamma[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn allocation_at_optimum_has_zero_drift() {
        let (space, demand) = fixture();
        let (xs, _) = solve_xstar(&space, &demand, 1.0, 1e-12).unwrap();
        let v = greedy_rate_allocation(&space, &xs, &demand, DEFAULT_FEAS_EPS);
        assert!(drift(&space, &v, &xs, &demand) >= -1e-9);
    }

    #[test]
    fn single_config_gives_neutral() {
        let space = ConfigSpace::from_configs(vec![vec![1]], None).unwrap();
        let demand = Demand::new(vec![1.0], vec![1.0]).unwrap();
        let v = greedy_rate_allocation(&space, &StatePoint::new(vec![1.0], 1.0), &demand, 1e-6);
        assert_eq!(v.gamma, vec![1.0]);
    }

    #[test]
    fn optimum_is_stationary() {
        let (space, demand) = fixture();
        let (xs, _) = solve_xstar(&space, &demand, 1.0, 1e-12).unwrap();
        let traj = integrate(&space, &xs, &demand, 10.0, 1e-3).unwrap();
        let end = StatePoint::new(traj.last().to_vec(), 1.0);
        assert!(end.distance(&xs) <= 1e-6);
    }

    #[test]
    fn bad_step_rejected() {
        let (space, demand) = fixture();
        let x = StatePoint::new(vec![1.0, 0.0], 1.0);
        assert!(integrate(&space, &x, &demand, 1.0, 0.0).is_err());
    }

    #[test]
    fn token_equilibrium_is_invariant() {
        let demand = Demand::new(vec![1.0, 2.0], vec![1.0, 4.0]).unwrap();
        let rho = demand.rho().to_vec();
        let traj = fluid_token_odes(&rho, &[0.0, 0.0], &demand, 1.0, 5.0, 1e-3).unwrap();
        for (a, t) in traj.actual.iter().zip(&traj.tokens) {
            for i in 0..2 {
                assert_abs_diff_eq!(a[i], rho[i], epsilon = 1e-9);
                assert_abs_diff_eq!(t[i], 0.0, epsilon = 1e-9);
            }
        }
    }
}
