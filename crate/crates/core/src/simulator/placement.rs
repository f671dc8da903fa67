//! Placement rules. Each rule looks only at the configuration counts `X`
//! and returns the edge along which the arriving customer is placed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config_space::ConfigSpace;

/// Placement of a type-`ty` customer onto a server in configuration `base`
/// (`None`: an empty server), turning it into `target`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub base: Option<usize>,
    pub target: usize,
}

/// Score used by the aggregate rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcScore {
    /// Weight difference, like Greedy-D.
    D,
    /// Exact increment of the objective, like Greedy-I.
    I,
}

/// Sampled-edge placement parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltPlacement {
    /// Probability of proposing a fresh server.
    pub epsilon: f64,
    /// Probability of using the sampled-edge procedure instead of the
    /// standard rule.
    pub mix: f64,
}

fn count(counts: &[u64], slot: Option<usize>) -> f64 {
    slot.map_or(0.0, |c| counts[c] as f64)
}

/// Candidate placements `k -> k + e_ty` with `k = 0` or `X_k > 0`, the
/// empty server first and then configurations in index order.
fn candidates<'a>(
    space: &'a ConfigSpace,
    counts: &'a [u64],
    ty: usize,
) -> impl Iterator<Item = Placement> + 'a {
    std::iter::once(None)
        .chain((0..space.len()).filter(move |&c| counts[c] > 0).map(Some))
        .filter_map(move |base| space.plus(base, ty).map(|target| Placement { base, target }))
}

fn argmin(scored: impl Iterator<Item = (f64, usize, Placement)>) -> Placement {
    let mut best: Option<(f64, usize, Placement)> = None;
    for cand in scored {
        let better = match &best {
            None => true,
            Some((s, key, _)) => cand.0 < *s || (cand.0 == *s && cand.1 < *key),
        };
        if better {
            best = Some(cand);
        }
    }
    best.expect("the empty server is always a candidate").2
}

/// Greedy-D: minimizes `X_{k+e_i}^a - 1{k != 0} X_k^a`; ties go to the
/// lexicographically smallest target configuration.
pub fn place_greedy_d(space: &ConfigSpace, counts: &[u64], ty: usize, alpha: f64) -> Placement {
    argmin(candidates(space, counts, ty).map(|p| {
        let score = (counts[p.target] as f64).powf(alpha) - count(counts, p.base).powf(alpha);
        (score, p.target, p)
    }))
}

/// Greedy-I: minimizes the exact increment of `sum_k X_k^(1+a)/(1+a)`.
pub fn place_greedy_i(space: &ConfigSpace, counts: &[u64], ty: usize, alpha: f64) -> Placement {
    let p1 = 1.0 + alpha;
    argmin(candidates(space, counts, ty).map(|p| {
        let t = counts[p.target] as f64;
        let mut score = (t + 1.0).powf(p1) - t.powf(p1);
        if p.base.is_some() {
            let b = count(counts, p.base);
            score += (b - 1.0).powf(p1) - b.powf(p1);
        }
        (score / p1, p.target, p)
    }))
}

/// Aggregate rule: scores classes by their totals, then draws the concrete
/// base server uniformly among servers of the winning class that can take
/// a type-`ty` customer.
pub fn place_greedy_ac<R: Rng + ?Sized>(
    space: &ConfigSpace,
    counts: &[u64],
    ty: usize,
    alpha: f64,
    score: AcScore,
    rng: &mut R,
) -> Placement {
    let classes = space.classes();
    let totals: Vec<f64> = classes
        .iter()
        .map(|m| m.iter().map(|&c| counts[c] as f64).sum())
        .collect();
    let p1 = 1.0 + alpha;
    let rate = |target: f64, base: Option<f64>| -> f64 {
        match score {
            AcScore::D => target.powf(alpha) - base.map_or(0.0, |b| b.powf(alpha)),
            AcScore::I => {
                let mut s = (target + 1.0).powf(p1) - target.powf(p1);
                if let Some(b) = base {
                    s += (b - 1.0).powf(p1) - b.powf(p1);
                }
                s / p1
            }
        }
    };

    // Zero class: open a new server.
    let unit = space.unit(ty);
    let unit_class = space.class_of(unit);
    // tie-break key: smallest configuration index in the target class
    let key = |q: usize| classes[q].iter().copied().min().unwrap();
    let mut best = (rate(totals[unit_class], None), key(unit_class), None::<usize>);

    for (q, members) in classes.iter().enumerate() {
        let Some(&first) = members
            .iter()
            .find(|&&c| counts[c] > 0 && space.plus(Some(c), ty).is_some())
        else {
            continue;
        };
        let target_class = space.class_of(space.plus(Some(first), ty).unwrap());
        let s = rate(totals[target_class], Some(totals[q]));
        if s < best.0 || (s == best.0 && key(target_class) < best.1) {
            best = (s, key(target_class), Some(q));
        }
    }

    match best.2 {
        None => Placement {
            base: None,
            target: unit,
        },
        Some(q) => {
            let admissible: Vec<usize> = classes[q]
                .iter()
                .copied()
                .filter(|&c| counts[c] > 0 && space.plus(Some(c), ty).is_some())
                .collect();
            let weight: u64 = admissible.iter().map(|&c| counts[c]).sum();
            let mut u = rng.random_range(0..weight);
            let base = admissible
                .into_iter()
                .find(|&c| {
                    if u < counts[c] {
                        true
                    } else {
                        u -= counts[c];
                        false
                    }
                })
                .unwrap();
            Placement {
                base: Some(base),
                target: space.plus(Some(base), ty).unwrap(),
            }
        }
    }
}

/// Draws a server uniformly among all nonempty servers; returns its
/// configuration.
pub(crate) fn sample_server<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Option<usize> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mut u = rng.random_range(0..total);
    for (c, &n) in counts.iter().enumerate() {
        if u < n {
            return Some(c);
        }
        u -= n;
    }
    unreachable!("draw below total count")
}

/// Sampled-edge procedure for a customer that just left along edge
/// `departed` (with the departure already applied to `counts`).
///
/// With probability `epsilon` the candidate is a fresh server; otherwise a
/// nonempty server is drawn uniformly and the candidate is that server plus
/// the customer, when feasible. The candidate wins only if its
/// differential is strictly smaller than that of the departed edge;
/// otherwise the customer goes back along `departed`.
pub fn place_alt<R: Rng + ?Sized>(
    space: &ConfigSpace,
    counts: &[u64],
    departed: usize,
    alt: &AltPlacement,
    alpha: f64,
    rng: &mut R,
) -> Placement {
    let edge = space.edges()[departed];
    let back = Placement {
        base: edge.base,
        target: edge.config,
    };
    let diff = |p: &Placement| (counts[p.target] as f64).powf(alpha) - count(counts, p.base).powf(alpha);

    let candidate = if rng.random::<f64>() < alt.epsilon {
        Some(Placement {
            base: None,
            target: space.unit(edge.ty),
        })
    } else {
        sample_server(counts, rng).and_then(|c| {
            space.plus(Some(c), edge.ty).map(|target| Placement {
                base: Some(c),
                target,
            })
        })
    };
    match candidate {
        Some(cand) if diff(&cand) < diff(&back) => cand,
        _ => back,
    }
}
