//! Edge differentials, allocations of arrival rates, and the drift of `F`
//! they induce.

use serde::{Deserialize, Serialize};

use super::kkt::SUPPORT_EPS;
use super::{Demand, StatePoint};
use crate::config_space::{ClassStep, ConfigSpace, Edge};
use crate::error::{Error, Result};

/// Relative slack for strict comparisons between differentials.
const COMPARE_EPS: f64 = 1e-10;

/// Nonnegative arrival rates per edge, indexed like [`ConfigSpace::edges`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub gamma: Vec<f64>,
}

impl Allocation {
    /// Per-type totals `sum_{k:(k,i)} gamma_ki`.
    pub fn type_totals(&self, space: &ConfigSpace) -> Vec<f64> {
        let mut totals = vec![0.0; space.num_types()];
        for (e, g) in space.edges().iter().zip(&self.gamma) {
            totals[e.ty] += g;
        }
        totals
    }
}

/// A simple improving reallocation: the neutral allocation with the whole
/// departure rate of `from` moved onto `to`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiAllocation {
    pub allocation: Allocation,
    pub from: usize,
    pub to: usize,
    pub mass: f64,
}

/// `Delta_ki = x_k^a - x_{k-e_i}^a`.
pub fn delta(x: &StatePoint, edge: &Edge) -> f64 {
    x.weight(Some(edge.config)) - x.weight(edge.base)
}

fn departure_rate(space: &ConfigSpace, x: &StatePoint, demand: &Demand, edge: &Edge) -> f64 {
    space.config(edge.config)[edge.ty] as f64 * demand.mu()[edge.ty] * x.x[edge.config]
}

fn positive_threshold(x: &StatePoint) -> f64 {
    SUPPORT_EPS * x.x.iter().copied().fold(0.0, f64::max)
}

/// The allocation that mirrors departures: `gamma_ki = k_i mu_i x_k`.
pub fn neutral_allocation(
    space: &ConfigSpace,
    x: &StatePoint,
    demand: &Demand,
    tol: f64,
) -> Result<Allocation> {
    if !x.in_polytope(space, demand, tol) {
        return Err(Error::Infeasible(format!(
            "load violation {:.3e} exceeds {tol:.1e}",
            x.infeasibility(space, demand)
        )));
    }
    Ok(Allocation {
        gamma: space
            .edges()
            .iter()
            .map(|e| departure_rate(space, x, demand, e))
            .collect(),
    })
}

/// `D(gamma, x) = sum Delta_ki (gamma_ki - k_i mu_i x_k)`.
pub fn drift(space: &ConfigSpace, gamma: &Allocation, x: &StatePoint, demand: &Demand) -> f64 {
    space
        .edges()
        .iter()
        .zip(&gamma.gamma)
        .map(|(e, g)| delta(x, e) * (g - departure_rate(space, x, demand, e)))
        .sum()
}

/// Every simple improving allocation at `x`, in edge order.
pub fn find_si_allocations(space: &ConfigSpace, x: &StatePoint, demand: &Demand) -> Vec<SiAllocation> {
    let edges = space.edges();
    let deltas: Vec<f64> = edges.iter().map(|e| delta(x, e)).collect();
    let neutral: Vec<f64> = edges
        .iter()
        .map(|e| departure_rate(space, x, demand, e))
        .collect();
    let slack = COMPARE_EPS * deltas.iter().fold(1.0, |m: f64, d| m.max(d.abs()));
    let positive = positive_threshold(x);

    let mut found = Vec::new();
    for (from, ef) in edges.iter().enumerate() {
        if x.x[ef.config] <= positive {
            continue;
        }
        for (to, et) in edges.iter().enumerate() {
            if to == from || et.ty != ef.ty {
                continue;
            }
            let available = match et.base {
                None => true,
                Some(b) => x.x[b] > positive,
            };
            if !available || deltas[to] >= deltas[from] - slack {
                continue;
            }
            let mut gamma = neutral.clone();
            gamma[to] += neutral[from];
            gamma[from] = 0.0;
            found.push(SiAllocation {
                allocation: Allocation { gamma },
                from,
                to,
                mass: neutral[from],
            });
        }
    }
    found
}

/// Minimum drift over the neutral allocation and every SI-allocation.
pub fn d_min(space: &ConfigSpace, x: &StatePoint, demand: &Demand) -> f64 {
    let edges = space.edges();
    find_si_allocations(space, x, demand)
        .iter()
        .map(|si| (delta(x, &edges[si.to]) - delta(x, &edges[si.from])) * si.mass)
        .fold(0.0, f64::min)
}

/// Offending pair of aggregate edges `(q, i)` and `(q', i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NsiWitness {
    pub ty: usize,
    pub from_class: usize,
    pub to_class: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NsiCheck {
    pub holds: bool,
    pub witness: Option<NsiWitness>,
}

/// Checks the no-simple-improving-allocation property on class totals.
///
/// `tol` is used both as the slack in `Delta_{q'i} < Delta_{qi}` and as the
/// level below which a mass counts as zero.
pub fn check_nsi(space: &ConfigSpace, x: &StatePoint, tol: f64) -> NsiCheck {
    let totals = x.class_totals(space);
    let weight = |step: ClassStep| match step {
        ClassStep::Class(q) => totals[q].max(0.0).powf(x.alpha),
        _ => 0.0,
    };

    for ty in 0..space.num_types() {
        let agg_edges: Vec<(usize, ClassStep, f64)> = (0..space.num_classes())
            .filter_map(|q| {
                let below = space.q_minus_ei(q, ty);
                (below != ClassStep::Empty)
                    .then(|| (q, below, totals[q].max(0.0).powf(x.alpha) - weight(below)))
            })
            .collect();

        for &(q, _, dq) in &agg_edges {
            let loaded = space.classes()[q]
                .iter()
                .any(|&c| space.config(c)[ty] > 0 && x.x[c] > tol);
            if !loaded {
                continue;
            }
            for &(q2, below2, dq2) in &agg_edges {
                if q2 == q || dq2 >= dq - tol {
                    continue;
                }
                let blocked = match below2 {
                    ClassStep::Class(b) => totals[b] <= tol,
                    _ => false,
                };
                if !blocked {
                    return NsiCheck {
                        holds: false,
                        witness: Some(NsiWitness {
                            ty,
                            from_class: q,
                            to_class: q2,
                        }),
                    };
                }
            }
        }
    }
    NsiCheck {
        holds: true,
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::ResourceProfile;
    use approx::assert_abs_diff_eq;

    fn scalar2() -> (ConfigSpace, Demand) {
        (
            ConfigSpace::from_configs(vec![vec![0], vec![1], vec![2]], None).unwrap(),
            Demand::new(vec![1.0], vec![1.0]).unwrap(),
        )
    }

    #[test]
    fn delta_with_empty_convention() {
        let (space, _) = scalar2();
        let x = StatePoint::new(vec![3.0, 5.0], 1.0);
        let e = space.edges();
        assert_eq!(delta(&x, &e[0]), 3.0);
        assert_eq!(delta(&x, &e[1]), 2.0);
        let flat = StatePoint::new(vec![4.0, 4.0], 1.7);
        assert_eq!(delta(&flat, &e[1]), 0.0);
        let zero = StatePoint::zeros(2, 0.5);
        assert!(e.iter().all(|edge| delta(&zero, edge) == 0.0));
    }

    #[test]
    fn neutral_allocation_sums_to_lambda() {
        let (space, demand) = scalar2();
        let x = StatePoint::new(vec![0.2, 0.4], 1.0);
        let g = neutral_allocation(&space, &x, &demand, 1e-12).unwrap();
        assert_abs_diff_eq!(g.gamma[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(g.gamma[1], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(g.type_totals(&space)[0], 1.0, epsilon = 1e-15);
        assert_eq!(drift(&space, &g, &x, &demand), 0.0);

        let bad = StatePoint::new(vec![0.5, 0.5], 1.0);
        assert!(neutral_allocation(&space, &bad, &demand, 1e-9).is_err());
    }

    #[test]
    fn concentrated_on_unit_vector() {
        let (space, demand) = scalar2();
        let x = StatePoint::new(vec![1.0, 0.0], 1.0);
        let g = neutral_allocation(&space, &x, &demand, 1e-12).unwrap();
        assert_eq!(g.gamma, vec![1.0, 0.0]);
    }

    #[test]
    fn si_allocation_example() {
        let (space, demand) = scalar2();
        let x = StatePoint::new(vec![0.6, 0.2], 1.0);
        let si = find_si_allocations(&space, &x, &demand);
        assert_eq!(si.len(), 1);
        assert_eq!((si[0].from, si[0].to), (0, 1));
        assert_abs_diff_eq!(si[0].mass, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(si[0].allocation.type_totals(&space)[0], 1.0, epsilon = 1e-15);
        let d = drift(&space, &si[0].allocation, &x, &demand);
        assert_abs_diff_eq!(d, -0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(d_min(&space, &x, &demand), -0.6, epsilon = 1e-12);
    }

    #[test]
    fn no_si_at_optimum() {
        let (space, demand) = scalar2();
        let x = StatePoint::new(vec![0.2, 0.4], 1.0);
        assert!(find_si_allocations(&space, &x, &demand).is_empty());
        assert_eq!(d_min(&space, &x, &demand), 0.0);
        assert!(d_min(&space, &StatePoint::new(vec![1.0, 0.0], 1.0), &demand) < 0.0);
    }

    #[test]
    fn nsi_cases() {
        let (space, _) = scalar2();
        let bad = check_nsi(&space, &StatePoint::new(vec![0.6, 0.2], 1.0), 1e-12);
        assert!(!bad.holds);
        assert_eq!(
            bad.witness,
            Some(NsiWitness {
                ty: 0,
                from_class: 0,
                to_class: 1
            })
        );
        assert!(check_nsi(&space, &StatePoint::new(vec![0.2, 0.4], 1.0), 1e-12).holds);

        // Two types with identical demand share one class: no competing pair.
        let p = ResourceProfile::new(vec![1.0], vec![vec![1.0], vec![1.0]]).unwrap();
        let agg = ConfigSpace::enumerate(&p).unwrap();
        assert_eq!(agg.num_classes(), 1);
        let x = StatePoint::new(vec![0.25, 0.75], 1.0);
        assert!(check_nsi(&agg, &x, 1e-12).holds);
    }
}
