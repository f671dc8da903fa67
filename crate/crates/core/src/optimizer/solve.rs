use nalgebra::{DMatrix, DVector};

use super::kkt::{kkt_residual, KktCertificate, KktMode};
use super::{objective_f, objective_phi, Demand, StatePoint};
use crate::config_space::ConfigSpace;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    /// Newton ascent on the Lagrange dual; the primal point is the closed-form
    /// KKT map `x_k = max(k.eta, 0)^(1/a)`.
    DualNewton,
    /// Projected gradient with exact Euclidean projection onto the polytope.
    ProjectedGradient,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
            method: SolveMethod::DualNewton,
        }
    }
}

/// Unique minimizer of `F` over the polytope, with its KKT certificate.
///
/// Falls back to projected gradient if the dual iteration stalls. The
/// certificate is always recomputed from the returned point and checked
/// against `tol`.
pub fn solve_xstar(
    space: &ConfigSpace,
    demand: &Demand,
    alpha: f64,
    tol: f64,
) -> Result<(StatePoint, KktCertificate)> {
    solve_xstar_with(
        space,
        demand,
        alpha,
        &SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

pub fn solve_xstar_with(
    space: &ConfigSpace,
    demand: &Demand,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<(StatePoint, KktCertificate)> {
    check_inputs(space, demand, alpha)?;
    let x = match opts.method {
        SolveMethod::DualNewton => match dual_newton(space, demand.rho(), alpha, opts.max_iter) {
            Ok(x) => x,
            Err(_) => projected_gradient(space, demand.rho(), alpha, false, opts)?.0,
        },
        SolveMethod::ProjectedGradient => projected_gradient(space, demand.rho(), alpha, false, opts)?.0,
    };
    let point = StatePoint::new(x, alpha);
    let cert = kkt_residual(&point, space, demand, KktMode::Plain);
    let violation = point.infeasibility(space, demand);
    if cert.residual > opts.tol || violation > opts.tol {
        return Err(Error::NonConvergence {
            iterations: opts.max_iter,
            residual: cert.residual.max(violation),
            best: point.x,
        });
    }
    Ok((point, cert))
}

/// One minimizer of `Phi` over the polytope and the optimal value.
///
/// When every class is a singleton `Phi = F` and the exact `F` solver is used.
pub fn solve_phistar(
    space: &ConfigSpace,
    demand: &Demand,
    alpha: f64,
    tol: f64,
) -> Result<(StatePoint, f64)> {
    check_inputs(space, demand, alpha)?;
    if space.num_classes() == space.len() {
        let (x, _) = solve_xstar(space, demand, alpha, tol)?;
        let value = objective_f(&x);
        return Ok((x, value));
    }
    let opts = SolveOptions {
        tol,
        ..SolveOptions::default()
    };
    let (x, _) = projected_gradient(space, demand.rho(), alpha, true, &opts)?;
    let point = StatePoint::new(x, alpha);
    let value = objective_phi(&point, space);
    Ok((point, value))
}

fn check_inputs(space: &ConfigSpace, demand: &Demand, alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidDemand(format!("alpha must be positive, got {alpha}")));
    }
    if demand.num_types() != space.num_types() {
        return Err(Error::InvalidDemand(format!(
            "demand has {} types, configuration space has {}",
            demand.num_types(),
            space.num_types()
        )));
    }
    Ok(())
}

fn solve_small(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    h.lu().solve(g)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dual_newton(space: &ConfigSpace, rho: &[f64], alpha: f64, max_iter: usize) -> Result<Vec<f64>> {
    let types = space.num_types();
    let configs = space.configs();
    let feas_tol = 1e-14 * (1.0 + max_abs(rho));
    let inv = 1.0 / alpha;

    let primal = |eta: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let u: Vec<f64> = configs
            .iter()
            .map(|k| k.iter().zip(eta).map(|(&ki, e)| ki as f64 * e).sum())
            .collect();
        let x = u.iter().map(|&v| if v > 0.0 { v.powf(inv) } else { 0.0 }).collect();
        (u, x)
    };
    let dual_value = |eta: &[f64]| -> f64 {
        let (u, _) = primal(eta);
        let p = (1.0 + alpha) / alpha;
        let penalty: f64 = u.iter().filter(|&&v| v > 0.0).map(|v| v.powf(p)).sum();
        eta.iter().zip(rho).map(|(e, r)| e * r).sum::<f64>() - penalty / p
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let mut g = rho.to_vec();
        for (k, xk) in configs.iter().zip(x) {
            for (gi, &ki) in g.iter_mut().zip(k) {
                *gi -= ki as f64 * xk;
            }
        }
        g
    };

    let mut eta: Vec<f64> = rho.iter().map(|r| r.powf(alpha)).collect();
    let mut best = Vec::new();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter.min(10_000) {
        let (u, x) = primal(&eta);
        let g = gradient(&x);
        residual = max_abs(&g);
        best = x;
        if residual <= feas_tol {
            return Ok(best);
        }

        let mut h = DMatrix::<f64>::zeros(types, types);
        for (k, &uk) in configs.iter().zip(&u) {
            if uk <= 0.0 {
                continue;
            }
            let curv = inv * uk.powf(inv - 1.0);
            for a in 0..types {
                if k[a] == 0 {
                    continue;
                }
                for b in 0..types {
                    h[(a, b)] += curv * k[a] as f64 * k[b] as f64;
                }
            }
        }
        let reg = 1e-12 * (1.0 + h.trace());
        for a in 0..types {
            h[(a, a)] += reg;
        }
        let gv = DVector::from_column_slice(&g);
        let dir = match solve_small(h, &gv) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => gv.clone(),
        };

        let base = dual_value(&eta);
        let slope: f64 = dir.dot(&gv);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let trial: Vec<f64> = eta.iter().zip(dir.iter()).map(|(e, d)| e + t * d).collect();
            if dual_value(&trial) >= base + 1e-4 * t * slope {
                eta = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
        best,
    })
}

/// Exact Euclidean projection of `z` onto `{x >= 0 : sum_k k_i x_k = rho_i}`.
///
/// Solves the piecewise-quadratic dual in the per-type multipliers with a
/// damped semismooth Newton iteration; `x = max(z + A^T nu, 0)` at the
/// solution.
pub fn project_onto_polytope(space: &ConfigSpace, rho: &[f64], z: &[f64]) -> Vec<f64> {
    let types = space.num_types();
    let configs = space.configs();
    let feas_tol = 1e-15 * (1.0 + max_abs(rho) + max_abs(z));

    let shifted = |nu: &[f64]| -> Vec<f64> {
        configs
            .iter()
            .zip(z)
            .map(|(k, zk)| zk + k.iter().zip(nu).map(|(&ki, n)| ki as f64 * n).sum::<f64>())
            .collect()
    };
    let dual_value = |nu: &[f64]| -> f64 {
        let s = shifted(nu);
        let sq: f64 = s.iter().filter(|&&v| v > 0.0).map(|v| v * v).sum();
        nu.iter().zip(rho).map(|(n, r)| n * r).sum::<f64>() - 0.5 * sq
    };

    let mut nu = vec![0.0; types];
    for _ in 0..500 {
        let s = shifted(&nu);
        let x: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
        let mut g = rho.to_vec();
        for (k, xk) in configs.iter().zip(&x) {
            for (gi, &ki) in g.iter_mut().zip(k) {
                *gi -= ki as f64 * xk;
            }
        }
        if max_abs(&g) <= feas_tol {
            break;
        }
        let mut h = DMatrix::<f64>::zeros(types, types);
        for (k, sk) in configs.iter().zip(&s) {
            if *sk <= 0.0 {
                continue;
            }
            for a in 0..types {
                for b in 0..types {
                    h[(a, b)] += k[a] as f64 * k[b] as f64;
                }
            }
        }
        let reg = 1e-12 * (1.0 + h.trace());
        for a in 0..types {
            h[(a, a)] += reg;
        }
        let gv = DVector::from_column_slice(&g);
        let dir = solve_small(h, &gv).unwrap_or_else(|| gv.clone());
        let base = dual_value(&nu);
        let slope = dir.dot(&gv);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..100 {
            let trial: Vec<f64> = nu.iter().zip(dir.iter()).map(|(n, d)| n + t * d).collect();
            let value = dual_value(&trial);
            let noise = 1e-15 * (1.0 + base.abs());
            if value >= base + 1e-6 * t * slope - noise {
                moved = trial != nu;
                nu = trial;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    shifted(&nu).iter().map(|v| v.max(0.0)).collect()
}

fn gradient_of(space: &ConfigSpace, x: &[f64], alpha: f64, aggregate: bool) -> Vec<f64> {
    if aggregate {
        let point = StatePoint::new(x.to_vec(), alpha);
        let totals: Vec<f64> = point
            .class_totals(space)
            .iter()
            .map(|t| t.max(0.0).powf(alpha))
            .collect();
        (0..space.len()).map(|c| totals[space.class_of(c)]).collect()
    } else {
        x.iter().map(|v| v.max(0.0).powf(alpha)).collect()
    }
}

fn value_of(space: &ConfigSpace, x: &[f64], alpha: f64, aggregate: bool) -> f64 {
    let point = StatePoint::new(x.to_vec(), alpha);
    if aggregate {
        objective_phi(&point, space)
    } else {
        objective_f(&point)
    }
}

/// Spectral projected gradient with a backtracking sufficient-decrease test.
/// Stops when the projected-gradient step `|x - P(x - grad)|_inf` is below
/// `tol`. Returns the iterate and the number of iterations used.
fn projected_gradient(
    space: &ConfigSpace,
    rho: &[f64],
    alpha: f64,
    aggregate: bool,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, usize)> {
    let mut start = vec![0.0; space.len()];
    for (ty, r) in rho.iter().enumerate() {
        start[space.unit(ty)] = *r;
    }
    let mut x = project_onto_polytope(space, rho, &start);
    let mut fx = value_of(space, &x, alpha, aggregate);
    let mut g = gradient_of(space, &x, alpha, aggregate);
    let mut step = 1.0;
    let mut stationarity = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let probe: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        let projected = project_onto_polytope(space, rho, &probe);
        stationarity = x
            .iter()
            .zip(&projected)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()));
        if stationarity <= opts.tol {
            return Ok((x, iter));
        }

        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let next = project_onto_polytope(space, rho, &trial);
            let f_next = value_of(space, &next, alpha, aggregate);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((n, a), b) in next.iter().zip(&x).zip(&g) {
                lin += b * (n - a);
                sq += (n - a) * (n - a);
            }
            if f_next <= fx + lin + sq / (2.0 * step) + 1e-16 * fx.abs() {
                accepted = Some((next, f_next));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next)) = accepted else {
            break;
        };

        let g_next = gradient_of(space, &next, alpha, aggregate);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..x.len() {
            let s = next[i] - x[i];
            ss += s * s;
            sy += s * (g_next[i] - g[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (step * 2.0).min(1e12) };
        x = next;
        fx = f_next;
        g = g_next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: stationarity,
        best: x,
    })
}
