//! Fluid optimum of the packing objective and the optimality/drift oracles
//! built around it.
//!
//! The objective is `F(x) = sum_k x_k^(1+a) / (1+a)` over the polytope of
//! fluid states with per-type loads `sum_k k_i x_k = rho_i`, `x >= 0`.
//! `Phi` is the same objective evaluated on aggregate class totals.

mod drift;
mod kkt;
mod solve;

pub use drift::{
    d_min, delta, drift, find_si_allocations, neutral_allocation, check_nsi, Allocation,
    NsiCheck, NsiWitness, SiAllocation,
};
pub use kkt::{kkt_residual, KktCertificate, KktMode};
pub use solve::{
    project_onto_polytope, solve_phistar, solve_xstar, solve_xstar_with, SolveMethod,
    SolveOptions,
};

use serde::{Deserialize, Serialize};

use crate::config_space::ConfigSpace;
use crate::error::{Error, Result};

/// Per-type arrival and service rates. Loads are normalized so that
/// `sum_i rho_i = 1`; the original total load is kept in `scale`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Demand {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    rho: Vec<f64>,
    scale: f64,
}

impl Demand {
    /// Builds a demand, rescaling the arrival rates so the loads sum to one.
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() || lambda.len() != mu.len() {
            return Err(Error::InvalidDemand(format!(
                "lambda has {} entries and mu has {}",
                lambda.len(),
                mu.len()
            )));
        }
        if lambda.iter().chain(&mu).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidDemand("rates must be positive".into()));
        }
        let raw: Vec<f64> = lambda.iter().zip(&mu).map(|(l, m)| l / m).collect();
        let scale: f64 = raw.iter().sum();
        Ok(Self {
            lambda: lambda.iter().map(|l| l / scale).collect(),
            mu,
            rho: raw.iter().map(|r| r / scale).collect(),
            scale,
        })
    }

    pub fn num_types(&self) -> usize {
        self.rho.len()
    }

    /// Normalized arrival rates.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Total load before normalization.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn min_mu(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemandSpec {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl TryFrom<DemandSpec> for Demand {
    type Error = Error;

    fn try_from(spec: DemandSpec) -> Result<Self> {
        Demand::new(spec.lambda, spec.mu)
    }
}

impl<'de> Deserialize<'de> for Demand {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = DemandSpec::deserialize(d)?;
        Demand::try_from(spec).map_err(serde::de::Error::custom)
    }
}

/// A fluid state: nonnegative mass per nonzero configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub x: Vec<f64>,
    pub alpha: f64,
}

impl StatePoint {
    pub fn new(x: Vec<f64>, alpha: f64) -> Self {
        Self { x, alpha }
    }

    pub fn zeros(len: usize, alpha: f64) -> Self {
        Self::new(vec![0.0; len], alpha)
    }

    /// Mass on a slot; the empty server always carries zero.
    pub fn at(&self, slot: Option<usize>) -> f64 {
        slot.map_or(0.0, |c| self.x[c])
    }

    /// `x_k^alpha`, with the empty-server convention.
    pub fn weight(&self, slot: Option<usize>) -> f64 {
        self.at(slot).max(0.0).powf(self.alpha)
    }

    /// Per-type loads `sum_k k_i x_k`.
    pub fn loads(&self, space: &ConfigSpace) -> Vec<f64> {
        let mut loads = vec![0.0; space.num_types()];
        for (k, xk) in space.configs().iter().zip(&self.x) {
            for (l, &ki) in loads.iter_mut().zip(k) {
                *l += ki as f64 * xk;
            }
        }
        loads
    }

    /// Largest violation of the load constraints or nonnegativity.
    pub fn infeasibility(&self, space: &ConfigSpace, demand: &Demand) -> f64 {
        let load_gap = self
            .loads(space)
            .iter()
            .zip(demand.rho())
            .map(|(l, r)| (l - r).abs())
            .fold(0.0, f64::max);
        let negative = self.x.iter().map(|v| -v).fold(0.0, f64::max);
        load_gap.max(negative)
    }

    pub fn in_polytope(&self, space: &ConfigSpace, demand: &Demand, tol: f64) -> bool {
        self.x.len() == space.len() && self.infeasibility(space, demand) <= tol
    }

    /// Class totals `x_q = sum_{k in q} x_k`.
    pub fn class_totals(&self, space: &ConfigSpace) -> Vec<f64> {
        space
            .classes()
            .iter()
            .map(|members| members.iter().map(|&c| self.x[c]).sum())
            .collect()
    }

    pub fn distance(&self, other: &StatePoint) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `F(x) = sum_k x_k^(1+a) / (1+a)`.
pub fn objective_f(x: &StatePoint) -> f64 {
    let p = 1.0 + x.alpha;
    x.x.iter().map(|v| v.max(0.0).powf(p)).sum::<f64>() / p
}

/// Weighted variant `sum_k c_k x_k^(1+a)`. With `c_k = 1/(1+a)` it equals
/// [`objective_f`].
pub fn objective_f_weighted(x: &StatePoint, weights: &[f64]) -> f64 {
    let p = 1.0 + x.alpha;
    x.x.iter()
        .zip(weights)
        .map(|(v, c)| c * v.max(0.0).powf(p))
        .sum()
}

/// `Phi(x) = sum_q x_q^(1+a) / (1+a)` over aggregate class totals.
pub fn objective_phi(x: &StatePoint, space: &ConfigSpace) -> f64 {
    let p = 1.0 + x.alpha;
    x.class_totals(space)
        .iter()
        .map(|v| v.max(0.0).powf(p))
        .sum::<f64>()
        / p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::ResourceProfile;
    use approx::assert_abs_diff_eq;

    #[test]
    fn f_values() {
        assert_abs_diff_eq!(objective_f(&StatePoint::new(vec![0.2, 0.4], 1.0)), 0.1, epsilon = 1e-15);
        assert_eq!(objective_f(&StatePoint::zeros(3, 1.0)), 0.0);
        assert_abs_diff_eq!(
            objective_f(&StatePoint::new(vec![1.0], 0.5)),
            1.0 / 1.5,
            epsilon = 1e-15
        );
        let x = StatePoint::new(vec![0.3, 0.1], 2.0);
        assert_abs_diff_eq!(
            objective_f_weighted(&x, &[1.0 / 3.0, 1.0 / 3.0]),
            objective_f(&x),
            epsilon = 1e-15
        );
    }

    #[test]
    fn phi_values() {
        let p = ResourceProfile::new(vec![3.0], vec![vec![1.0], vec![2.0]]).unwrap();
        let space = ConfigSpace::enumerate(&p).unwrap();
        let mut x = StatePoint::zeros(space.len(), 1.0);
        x.x[space.index_of(&[2, 0]).unwrap()] = 0.1;
        x.x[space.index_of(&[0, 1]).unwrap()] = 0.2;
        assert_abs_diff_eq!(objective_phi(&x, &space), 0.045, epsilon = 1e-15);
        assert_eq!(objective_phi(&StatePoint::zeros(space.len(), 1.0), &space), 0.0);

        let single = ConfigSpace::from_configs(vec![vec![0], vec![1], vec![2]], None).unwrap();
        let x = StatePoint::new(vec![0.3, 0.35], 0.7);
        assert_abs_diff_eq!(objective_phi(&x, &single), objective_f(&x), epsilon = 1e-15);
    }

    #[test]
    fn demand_normalizes() {
        let d = Demand::new(vec![0.5, 0.25], vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(d.rho()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.rho()[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.scale(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(d.lambda()[0] / d.mu()[0], d.rho()[0], epsilon = 1e-15);
        assert!(Demand::new(vec![1.0], vec![0.0]).is_err());
        assert!(Demand::new(vec![1.0, 1.0], vec![1.0]).is_err());
    }
}
