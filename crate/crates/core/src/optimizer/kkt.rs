use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Demand, StatePoint};
use crate::config_space::ConfigSpace;

/// Support threshold relative to the largest coordinate.
pub(crate) const SUPPORT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KktMode {
    /// `x_k^a = max(k.eta, 0)` for every configuration.
    Plain,
    /// Class-level conditions: `x_q^a = max_{k in q} u_k`, and a configuration
    /// whose `u_k` is below its class maximum carries no mass.
    Aggregate,
}

/// Multipliers fitted on the support of `x` and the max-norm violation of
/// the optimality conditions they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub eta: Vec<f64>,
    pub residual: f64,
}

pub fn kkt_residual(
    x: &StatePoint,
    space: &ConfigSpace,
    _demand: &Demand,
    mode: KktMode,
) -> KktCertificate {
    let types = space.num_types();
    let scale = x.x.iter().copied().fold(0.0, f64::max);
    let threshold = SUPPORT_EPS * scale;
    let support: Vec<usize> = (0..space.len()).filter(|&c| x.x[c] > threshold).collect();

    let totals = x.class_totals(space);
    let target = |c: usize| -> f64 {
        match mode {
            KktMode::Plain => x.x[c].max(0.0).powf(x.alpha),
            KktMode::Aggregate => totals[space.class_of(c)].max(0.0).powf(x.alpha),
        }
    };

    let eta = if support.is_empty() {
        vec![0.0; types]
    } else {
        let rows = DMatrix::from_fn(support.len(), types, |r, i| space.config(support[r])[i] as f64);
        let rhs = DVector::from_iterator(support.len(), support.iter().map(|&c| target(c)));
        rows.svd(true, true)
            .solve(&rhs, 1e-12)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|_| vec![0.0; types])
    };

    let u: Vec<f64> = space
        .configs()
        .iter()
        .map(|k| k.iter().zip(&eta).map(|(&ki, e)| ki as f64 * e).sum::<f64>().max(0.0))
        .collect();

    let residual = match mode {
        KktMode::Plain => (0..space.len())
            .map(|c| (target(c) - u[c]).abs())
            .fold(0.0, f64::max),
        KktMode::Aggregate => {
            let mut worst: f64 = 0.0;
            for (q, members) in space.classes().iter().enumerate() {
                let best = members.iter().map(|&c| u[c]).fold(0.0, f64::max);
                worst = worst.max((totals[q].max(0.0).powf(x.alpha) - best).abs());
                for &c in members {
                    if x.x[c] > threshold {
                        worst = worst.max(best - u[c]);
                    }
                }
            }
            worst
        }
    };
    KktCertificate { eta, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn setup(max: u32) -> (ConfigSpace, Demand) {
        (
            ConfigSpace::from_configs((0..=max).map(|k| vec![k]).collect(), None).unwrap(),
            Demand::new(vec![1.0], vec![1.0]).unwrap(),
        )
    }

    #[test]
    fn optimum_has_zero_residual() {
        let (space, demand) = setup(2);
        let cert = kkt_residual(&StatePoint::new(vec![0.2, 0.4], 1.0), &space, &demand, KktMode::Plain);
        assert_abs_diff_eq!(cert.eta[0], 0.2, epsilon = 1e-14);
        assert!(cert.residual < 1e-14);
    }

    #[test]
    fn non_optimum_has_positive_residual() {
        let (space, demand) = setup(2);
        let cert = kkt_residual(&StatePoint::new(vec![0.5, 0.25], 1.0), &space, &demand, KktMode::Plain);
        assert!(cert.residual > 0.1);
    }

    #[test]
    fn single_config_space() {
        let (space, demand) = setup(1);
        let cert = kkt_residual(&StatePoint::new(vec![1.0], 1.0), &space, &demand, KktMode::Plain);
        assert!(cert.residual < 1e-14);
    }
}
