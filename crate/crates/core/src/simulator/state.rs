//! System state for the plain and token disciplines.

use std::collections::HashMap;

use crate::config_space::{Config, ConfigSpace};
use crate::error::{Error, Result};

/// Guard on the number of complete configurations `(k, k_hat)`.
const MAX_COMPLETE: usize = 2_000_000;

/// One complete configuration: `k` counts actual customers and tokens,
/// `k_hat <= k` counts actual customers only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompleteConfig {
    pub config: usize,
    pub khat: Config,
}

/// Transition lookups over complete configurations. `None` in an
/// `Option<Option<usize>>` slot means the move is impossible; `Some(None)`
/// means the server becomes empty.
#[derive(Clone, Debug)]
pub struct CompleteTable {
    entries: Vec<CompleteConfig>,
    by_config: Vec<Vec<usize>>,
    actual_departure: Vec<Vec<Option<Option<usize>>>>,
    token_expiry: Vec<Vec<Option<Option<usize>>>>,
    fill_token: Vec<Vec<Option<usize>>>,
    add_token: Vec<Vec<Option<usize>>>,
    add_actual: Vec<Vec<Option<usize>>>,
    empty_add_token: Vec<usize>,
    empty_add_actual: Vec<usize>,
}

impl CompleteTable {
    pub fn new(space: &ConfigSpace) -> Result<Self> {
        let types = space.num_types();
        let mut entries = Vec::new();
        let mut by_config = vec![Vec::new(); space.len()];
        for (c, k) in space.configs().iter().enumerate() {
            let mut khat = vec![0u32; types];
            loop {
                by_config[c].push(entries.len());
                entries.push(CompleteConfig {
                    config: c,
                    khat: khat.clone(),
                });
                if entries.len() > MAX_COMPLETE {
                    return Err(Error::InvalidConfig(format!(
                        "more than {MAX_COMPLETE} complete configurations"
                    )));
                }
                // odometer over 0..=k_i
                let mut pos = 0;
                while pos < types && khat[pos] == k[pos] {
                    khat[pos] = 0;
                    pos += 1;
                }
                if pos == types {
                    break;
                }
                khat[pos] += 1;
            }
        }
        let index: HashMap<(usize, Config), usize> = entries
            .iter()
            .enumerate()
            .map(|(idx, e)| ((e.config, e.khat.clone()), idx))
            .collect();
        let find = |config: usize, khat: &Config| index.get(&(config, khat.clone())).copied();

        let n = entries.len();
        let mut actual_departure = vec![vec![None; types]; n];
        let mut token_expiry = vec![vec![None; types]; n];
        let mut fill_token = vec![vec![None; types]; n];
        let mut add_token = vec![vec![None; types]; n];
        let mut add_actual = vec![vec![None; types]; n];
        for (idx, e) in entries.iter().enumerate() {
            let k = space.config(e.config);
            for ty in 0..types {
                if let Some(below) = space.minus(e.config, ty) {
                    if e.khat[ty] > 0 {
                        let mut kh = e.khat.clone();
                        kh[ty] -= 1;
                        actual_departure[idx][ty] = Some(below.map(|b| find(b, &kh).unwrap()));
                    }
                    if k[ty] > e.khat[ty] {
                        token_expiry[idx][ty] =
                            Some(below.map(|b| find(b, &e.khat).unwrap()));
                        let mut kh = e.khat.clone();
                        kh[ty] += 1;
                        fill_token[idx][ty] = find(e.config, &kh);
                    }
                }
                if let Some(above) = space.plus(Some(e.config), ty) {
                    add_token[idx][ty] = find(above, &e.khat);
                    let mut kh = e.khat.clone();
                    kh[ty] += 1;
                    add_actual[idx][ty] = find(above, &kh);
                }
            }
        }
        let mut empty_add_token = Vec::with_capacity(types);
        let mut empty_add_actual = Vec::with_capacity(types);
        for ty in 0..types {
            let unit = space.unit(ty);
            let mut kh = vec![0; types];
            empty_add_token.push(find(unit, &kh).unwrap());
            kh[ty] = 1;
            empty_add_actual.push(find(unit, &kh).unwrap());
        }

        Ok(Self {
            entries,
            by_config,
            actual_departure,
            token_expiry,
            fill_token,
            add_token,
            add_actual,
            empty_add_token,
            empty_add_actual,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, cc: usize) -> &CompleteConfig {
        &self.entries[cc]
    }

    pub fn of_config(&self, c: usize) -> &[usize] {
        &self.by_config[c]
    }

    /// Index of `(k, k)`: a server holding only actual customers.
    pub fn all_actual(&self, space: &ConfigSpace, c: usize) -> usize {
        let k = space.config(c);
        *self.by_config[c]
            .iter()
            .find(|&&cc| self.entries[cc].khat == k)
            .expect("the all-actual complete configuration exists")
    }

    pub fn actual_departure(&self, cc: usize, ty: usize) -> Option<Option<usize>> {
        self.actual_departure[cc][ty]
    }

    pub fn token_expiry(&self, cc: usize, ty: usize) -> Option<Option<usize>> {
        self.token_expiry[cc][ty]
    }

    pub fn fill_token(&self, cc: usize, ty: usize) -> Option<usize> {
        self.fill_token[cc][ty]
    }

    /// Adds a customer (token or actual) to a server, `None` meaning an
    /// empty server.
    pub fn add(&self, base: Option<usize>, ty: usize, token: bool) -> Option<usize> {
        match (base, token) {
            (None, true) => Some(self.empty_add_token[ty]),
            (None, false) => Some(self.empty_add_actual[ty]),
            (Some(cc), true) => self.add_token[cc][ty],
            (Some(cc), false) => self.add_actual[cc][ty],
        }
    }
}

/// Server counts per configuration and, in token modes, per complete
/// configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    /// `X_k` over nonzero configurations (tokens included).
    pub counts: Vec<u64>,
    /// `X_(k, k_hat)`; empty outside token modes.
    pub complete: Vec<u64>,
    pub t: f64,
}

impl SystemState {
    pub fn empty(space: &ConfigSpace, table: Option<&CompleteTable>) -> Self {
        Self {
            counts: vec![0; space.len()],
            complete: vec![0; table.map_or(0, CompleteTable::len)],
            t: 0.0,
        }
    }

    /// Per-type totals `Y_i = sum_k k_i X_k`.
    pub fn totals(&self, space: &ConfigSpace) -> Vec<u64> {
        let mut y = vec![0u64; space.num_types()];
        for (k, &n) in space.configs().iter().zip(&self.counts) {
            for (yi, &ki) in y.iter_mut().zip(k) {
                *yi += ki as u64 * n;
            }
        }
        y
    }

    /// Per-type actual-customer totals `Y_hat_i`; equals `Y` outside token modes.
    pub fn actual_totals(&self, space: &ConfigSpace, table: Option<&CompleteTable>) -> Vec<u64> {
        match table {
            None => self.totals(space),
            Some(table) => {
                let mut y = vec![0u64; space.num_types()];
                for (cc, &n) in self.complete.iter().enumerate() {
                    for (yi, &ki) in y.iter_mut().zip(&table.entry(cc).khat) {
                        *yi += ki as u64 * n;
                    }
                }
                y
            }
        }
    }
}
