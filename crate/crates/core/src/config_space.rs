//! Server configurations, the edges between them, and aggregate classes.
//!
//! A configuration `k` counts how many customers of each type one server
//! holds. The set of all feasible configurations is monotone (closed under
//! removing customers) and always contains the empty server and every unit
//! vector `e_i`.
//!
//! Indices: nonzero configurations are numbered `0..len()` in lexicographic
//! order, which is also the deterministic tie-break order used by every
//! placement rule. The empty server is never given an index; APIs that can
//! refer to it use `Option<usize>` with `None` meaning the empty server.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-type customer counts held by one server.
pub type Config = Vec<u32>;

/// Default guard against combinatorial blowup during enumeration.
pub const DEFAULT_MAX_CONFIGS: usize = 1_000_000;

/// Relative slack when comparing resource sums against capacities.
const CAPACITY_SLACK: f64 = 1e-12;

/// Resolution of the key used to group configurations with equal usage.
const USAGE_KEY_SCALE: f64 = 1e9;

/// Vector-packing description of a server: `N` resource capacities and the
/// per-type resource demands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    #[serde(rename = "B")]
    capacity: Vec<f64>,
    #[serde(rename = "b")]
    demand: Vec<Vec<f64>>,
}

impl ResourceProfile {
    pub fn new(capacity: Vec<f64>, demand: Vec<Vec<f64>>) -> Result<Self> {
        let profile = Self { capacity, demand };
        profile.validate()?;
        Ok(profile)
    }

    /// Checks shapes and positivity. Serde-constructed profiles must go
    /// through this before use.
    pub fn validate(&self) -> Result<()> {
        if self.capacity.is_empty() {
            return Err(Error::InvalidProfile("no resources".into()));
        }
        if self.demand.is_empty() {
            return Err(Error::InvalidProfile("no customer types".into()));
        }
        if let Some(n) = self.capacity.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "capacity of resource {n} must be positive"
            )));
        }
        for (i, row) in self.demand.iter().enumerate() {
            if row.len() != self.capacity.len() {
                return Err(Error::InvalidProfile(format!(
                    "type {i} has {} demands, expected {}",
                    row.len(),
                    self.capacity.len()
                )));
            }
            if row.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                return Err(Error::InvalidProfile(format!(
                    "demands of type {i} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn num_types(&self) -> usize {
        self.demand.len()
    }

    pub fn num_resources(&self) -> usize {
        self.capacity.len()
    }

    pub fn capacity(&self) -> &[f64] {
        &self.capacity
    }

    pub fn demand(&self) -> &[Vec<f64>] {
        &self.demand
    }

    /// Total resource usage `sum_i k_i b_{i,n}` for each resource `n`.
    pub fn usage(&self, k: &[u32]) -> Vec<f64> {
        (0..self.num_resources())
            .map(|n| {
                k.iter()
                    .zip(&self.demand)
                    .map(|(&ki, row)| ki as f64 * row[n])
                    .sum()
            })
            .collect()
    }

    fn within(&self, usage: &[f64]) -> bool {
        usage
            .iter()
            .zip(&self.capacity)
            .all(|(u, c)| *u <= c * (1.0 + CAPACITY_SLACK) + CAPACITY_SLACK)
    }

    pub fn fits(&self, k: &[u32]) -> bool {
        k.len() == self.num_types() && self.within(&self.usage(k))
    }

    fn usage_key(&self, k: &[u32]) -> Vec<i64> {
        self.usage(k)
            .iter()
            .zip(&self.capacity)
            .map(|(u, c)| (u / c * USAGE_KEY_SCALE).round() as i64)
            .collect()
    }
}

/// An edge `(k, i)`: the transition between `k - e_i` and `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    /// Index of the upper configuration `k`.
    pub config: usize,
    /// Customer type `i`.
    pub ty: usize,
    /// Index of `k - e_i`, or `None` when `k = e_i`.
    pub base: Option<usize>,
}

/// Result of subtracting a unit vector from an aggregate class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassStep {
    /// No member of the class holds a customer of that type.
    Empty,
    /// The zero class, containing only the empty server.
    Zero,
    Class(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigSpace {
    num_types: usize,
    configs: Vec<Config>,
    index: HashMap<Config, usize>,
    edges: Vec<Edge>,
    /// `edge_of[c][i]`: edge index of `(c, i)` if `c_i > 0`.
    edge_of: Vec<Vec<Option<usize>>>,
    /// `plus[s][i]` for slot `s` (0 is the empty server, `c + 1` is config `c`).
    plus: Vec<Vec<Option<usize>>>,
    class_of: Vec<usize>,
    classes: Vec<Vec<usize>>,
    class_usage: Option<Vec<Vec<f64>>>,
    profile: Option<ResourceProfile>,
}

impl ConfigSpace {
    /// Enumerates every configuration that fits the profile.
    pub fn enumerate(profile: &ResourceProfile) -> Result<Self> {
        Self::enumerate_with_cap(profile, DEFAULT_MAX_CONFIGS)
    }

    pub fn enumerate_with_cap(profile: &ResourceProfile, max_configs: usize) -> Result<Self> {
        profile.validate()?;
        let types = profile.num_types();
        for ty in 0..types {
            let mut unit = vec![0; types];
            unit[ty] = 1;
            if !profile.fits(&unit) {
                return Err(Error::UnservableType { ty });
            }
        }

        let mut found = Vec::new();
        let mut current = vec![0u32; types];
        let mut usage = vec![0.0; profile.num_resources()];
        enumerate_rec(profile, 0, &mut current, &mut usage, &mut found, max_configs)?;
        Self::build(types, found, Some(profile.clone()))
    }

    /// Accepts an explicit configuration set. Aggregate classes follow the
    /// profile's resource usage when one is given; otherwise every class is
    /// a singleton. The empty configuration is implied and may be omitted.
    pub fn from_configs(configs: Vec<Config>, profile: Option<&ResourceProfile>) -> Result<Self> {
        let types = match (configs.first(), profile) {
            (_, Some(p)) => p.num_types(),
            (Some(k), None) => k.len(),
            (None, None) => return Err(Error::InvalidConfigs("empty configuration set".into())),
        };
        if types == 0 {
            return Err(Error::InvalidConfigs("configurations have no types".into()));
        }
        if let Some(p) = profile {
            p.validate()?;
        }
        if let Some(bad) = configs.iter().find(|k| k.len() != types) {
            return Err(Error::InvalidConfigs(format!(
                "configuration {bad:?} has {} entries, expected {types}",
                bad.len()
            )));
        }

        let mut set: Vec<Config> = configs;
        set.sort();
        set.dedup();
        let present: std::collections::HashSet<&Config> = set.iter().collect();

        for k in &set {
            for ty in 0..types {
                if k[ty] > 0 {
                    let mut smaller = k.clone();
                    smaller[ty] -= 1;
                    let is_zero = smaller.iter().all(|&v| v == 0);
                    if !is_zero && !present.contains(&smaller) {
                        return Err(Error::NotMonotone {
                            config: k.clone(),
                            smaller,
                        });
                    }
                }
            }
        }
        for ty in 0..types {
            let mut unit = vec![0; types];
            unit[ty] = 1;
            if !present.contains(&unit) {
                return Err(Error::MissingUnit { ty });
            }
        }
        if let Some(p) = profile {
            if let Some(bad) = set.iter().find(|k| !p.fits(k)) {
                return Err(Error::InvalidConfigs(format!(
                    "configuration {bad:?} exceeds the resource capacity"
                )));
            }
        }

        let nonzero = set.into_iter().filter(|k| k.iter().any(|&c| c > 0)).collect();
        Self::build(types, nonzero, profile.cloned())
    }

    fn build(num_types: usize, mut configs: Vec<Config>, profile: Option<ResourceProfile>) -> Result<Self> {
        configs.sort();
        let index: HashMap<Config, usize> =
            configs.iter().cloned().enumerate().map(|(c, k)| (k, c)).collect();

        let mut edges = Vec::new();
        let mut edge_of = vec![vec![None; num_types]; configs.len()];
        for (c, k) in configs.iter().enumerate() {
            for ty in 0..num_types {
                if k[ty] == 0 {
                    continue;
                }
                let mut below = k.clone();
                below[ty] -= 1;
                let base = if below.iter().all(|&v| v == 0) {
                    None
                } else {
                    Some(*index.get(&below).ok_or_else(|| Error::NotMonotone {
                        config: k.clone(),
                        smaller: below.clone(),
                    })?)
                };
                edge_of[c][ty] = Some(edges.len());
                edges.push(Edge { config: c, ty, base });
            }
        }

        let mut plus = vec![vec![None; num_types]; configs.len() + 1];
        for ty in 0..num_types {
            let mut unit = vec![0; num_types];
            unit[ty] = 1;
            plus[0][ty] = index.get(&unit).copied();
        }
        for (c, k) in configs.iter().enumerate() {
            for ty in 0..num_types {
                let mut above = k.clone();
                above[ty] += 1;
                plus[c + 1][ty] = index.get(&above).copied();
            }
        }

        let (class_of, classes, class_usage) = match &profile {
            Some(p) => {
                let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
                for (c, k) in configs.iter().enumerate() {
                    groups.entry(p.usage_key(k)).or_default().push(c);
                }
                let mut class_of = vec![0; configs.len()];
                let mut classes = Vec::with_capacity(groups.len());
                let mut usage = Vec::with_capacity(groups.len());
                for members in groups.into_values() {
                    for &c in &members {
                        class_of[c] = classes.len();
                    }
                    usage.push(p.usage(&configs[members[0]]));
                    classes.push(members);
                }
                (class_of, classes, Some(usage))
            }
            None => (
                (0..configs.len()).collect(),
                (0..configs.len()).map(|c| vec![c]).collect(),
                None,
            ),
        };

        Ok(Self {
            num_types,
            configs,
            index,
            edges,
            edge_of,
            plus,
            class_of,
            classes,
            class_usage,
            profile,
        })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    /// Number of nonzero configurations.
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[Config] {
        &self.configs
    }

    pub fn config(&self, c: usize) -> &[u32] {
        &self.configs[c]
    }

    pub fn index_of(&self, k: &[u32]) -> Option<usize> {
        self.index.get(k).copied()
    }

    /// All configurations including the empty server, which comes first.
    pub fn all_configs(&self) -> Vec<Config> {
        std::iter::once(vec![0; self.num_types])
            .chain(self.configs.iter().cloned())
            .collect()
    }

    pub fn profile(&self) -> Option<&ResourceProfile> {
        self.profile.as_ref()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, c: usize, ty: usize) -> Option<usize> {
        self.edge_of[c][ty]
    }

    /// Index of the unit configuration `e_i`.
    pub fn unit(&self, ty: usize) -> usize {
        self.plus[0][ty].expect("unit configurations are always present")
    }

    /// Configuration reached by adding a type-`ty` customer to `base`.
    pub fn plus(&self, base: Option<usize>, ty: usize) -> Option<usize> {
        self.plus[base.map_or(0, |c| c + 1)][ty]
    }

    /// Configuration reached by removing a type-`ty` customer from `c`:
    /// `None` if `c` holds none, `Some(None)` if the server becomes empty.
    pub fn minus(&self, c: usize, ty: usize) -> Option<Option<usize>> {
        self.edge_of[c][ty].map(|e| self.edges[e].base)
    }

    /// True when classes come from resource usage rather than singletons.
    pub fn has_aggregates(&self) -> bool {
        self.class_usage.is_some()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, c: usize) -> usize {
        self.class_of[c]
    }

    pub fn class_usage(&self, q: usize) -> Option<&[f64]> {
        self.class_usage.as_ref().map(|u| u[q].as_slice())
    }

    /// The class containing `k - e_i` for the members `k` of `q` with
    /// `k_i > 0`.
    pub fn q_minus_ei(&self, q: usize, ty: usize) -> ClassStep {
        self.classes[q]
            .iter()
            .find_map(|&c| self.minus(c, ty))
            .map_or(ClassStep::Empty, |base| match base {
                None => ClassStep::Zero,
                Some(b) => ClassStep::Class(self.class_of[b]),
            })
    }

    /// Per-type count matrix `A[i][c] = k_i` used by the load constraints.
    pub fn load_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.num_types)
            .map(|ty| self.configs.iter().map(|k| k[ty] as f64).collect())
            .collect()
    }

    pub fn dump(&self) -> SpaceDump {
        SpaceDump {
            num_types: self.num_types,
            configs: self.all_configs(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDump {
                    config: self.configs[e.config].clone(),
                    ty: e.ty,
                })
                .collect(),
            classes: self
                .classes
                .iter()
                .enumerate()
                .map(|(q, members)| ClassDump {
                    id: q,
                    usage: self.class_usage(q).map(<[f64]>::to_vec),
                    members: members.iter().map(|&c| self.configs[c].clone()).collect(),
                })
                .collect(),
        }
    }
}

fn enumerate_rec(
    profile: &ResourceProfile,
    ty: usize,
    current: &mut Config,
    usage: &mut Vec<f64>,
    found: &mut Vec<Config>,
    cap: usize,
) -> Result<()> {
    if ty == profile.num_types() {
        if current.iter().any(|&c| c > 0) {
            if found.len() + 1 > cap {
                return Err(Error::TooManyConfigs { cap });
            }
            found.push(current.clone());
        }
        return Ok(());
    }
    let saved = usage.clone();
    loop {
        enumerate_rec(profile, ty + 1, current, usage, found, cap)?;
        for (u, b) in usage.iter_mut().zip(&profile.demand()[ty]) {
            *u += b;
        }
        if !profile.within(usage) {
            break;
        }
        current[ty] += 1;
    }
    current[ty] = 0;
    *usage = saved;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeDump {
    pub config: Config,
    pub ty: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassDump {
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub usage: Option<Vec<f64>>,
    pub members: Vec<Config>,
}

/// Inspection view of an enumerated space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceDump {
    pub num_types: usize,
    pub configs: Vec<Config>,
    pub edges: Vec<EdgeDump>,
    pub classes: Vec<ClassDump>,
}

/// JSON description of a space: a resource profile to enumerate, an
/// explicit configuration list, or both (the profile then only defines the
/// aggregate classes).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Vec<f64>>,
    #[serde(rename = "b", default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configs: Option<Vec<Config>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_configs: Option<usize>,
}

impl SpaceSpec {
    pub fn build(&self) -> Result<ConfigSpace> {
        let profile = match (&self.capacity, &self.demand) {
            (Some(c), Some(d)) => Some(ResourceProfile::new(c.clone(), d.clone())?),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidProfile(
                    "both \"B\" and \"b\" are required".into(),
                ))
            }
        };
        match (&self.configs, profile) {
            (Some(configs), p) => ConfigSpace::from_configs(configs.clone(), p.as_ref()),
            (None, Some(p)) => {
                ConfigSpace::enumerate_with_cap(&p, self.max_configs.unwrap_or(DEFAULT_MAX_CONFIGS))
            }
            (None, None) => Err(Error::InvalidConfigs(
                "give a resource profile or an explicit configuration list".into(),
            )),
        }
    }
}
