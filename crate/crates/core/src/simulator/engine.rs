use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::output::{EdgeCounters, EventCounts, Snapshot, Summary, SIM_SCHEMA_VERSION};
use super::placement::{
    place_alt, place_greedy_ac, place_greedy_d, place_greedy_i, AcScore, Placement,
};
use super::state::{CompleteTable, SystemState};
use super::{Discipline, InitialState, Mode, SimConfig};
use crate::config_space::ConfigSpace;
use crate::error::Result;
use crate::optimizer::{objective_phi, solve_phistar, solve_xstar, StatePoint};

/// Optimizer output to compare the time-averaged state against.
#[derive(Clone, Debug, Default)]
pub struct Reference {
    pub xstar: Option<StatePoint>,
    pub phistar: Option<f64>,
}

impl Reference {
    /// `x*` always, `Phi*` for aggregate disciplines.
    pub fn for_config(cfg: &SimConfig, tol: f64) -> Result<Self> {
        let alpha = cfg.params.alpha;
        let xstar = solve_xstar(&cfg.space, &cfg.demand, alpha, tol)?.0;
        let phistar = if cfg.params.discipline.is_aggregate() {
            Some(solve_phistar(&cfg.space, &cfg.demand, alpha, tol)?.1)
        } else {
            None
        };
        Ok(Self {
            xstar: Some(xstar),
            phistar,
        })
    }
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Arrival(usize),
    Departure { config: usize, ty: usize },
    ActualDeparture { cc: usize, ty: usize },
    TokenExpiry { cc: usize, ty: usize },
}

/// Time integrals over the sampling window.
#[derive(Clone, Debug)]
struct Accumulators {
    start: f64,
    end: f64,
    batch_len: f64,
    /// `int X_k dt`, updated lazily when `X_k` changes.
    x: Vec<f64>,
    x_since: Vec<f64>,
    /// Per batch and type: `int Y_actual`, `int Y_actual^2`.
    y: Vec<Vec<f64>>,
    y2: Vec<Vec<f64>>,
    tokens: Vec<f64>,
}

impl Accumulators {
    fn clip(&self, t: f64) -> f64 {
        t.clamp(self.start, self.end)
    }
}

/// One simulated system. [`run`] drives it; tests may also step it
/// directly.
pub struct Engine<'a> {
    cfg: &'a SimConfig,
    space: &'a ConfigSpace,
    table: Option<CompleteTable>,
    state: SystemState,
    y: Vec<u64>,
    y_actual: Vec<u64>,
    initial_y: Vec<u64>,
    counters: EdgeCounters,
    events: EventCounts,
    rng: ChaCha8Rng,
    arrival_rate: Vec<f64>,
    mu0: f64,
    acc: Accumulators,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let space = cfg.space.as_ref();
        let tokens = cfg.params.discipline.uses_tokens();
        let table = if tokens {
            Some(CompleteTable::new(space)?)
        } else {
            None
        };
        let mut state = SystemState::empty(space, table.as_ref());

        let mut add = |c: usize, n: u64| {
            state.counts[c] += n;
            if let Some(t) = &table {
                state.complete[t.all_actual(space, c)] += n;
            }
        };
        match cfg.initial() {
            InitialState::Empty => {}
            InitialState::Singletons => {
                for (ty, n) in cfg.population().into_iter().enumerate() {
                    add(space.unit(ty), n);
                }
            }
            InitialState::Explicit(list) => {
                for (k, n) in list {
                    add(space.index_of(&k).expect("validated"), n);
                }
            }
        }

        let y = state.totals(space);
        let arrival_rate = match cfg.params.mode {
            Mode::Open => cfg.demand.lambda().iter().map(|l| l * cfg.params.r).collect(),
            Mode::Closed => vec![0.0; space.num_types()],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.params.seed);
        rng.set_stream(cfg.params.stream);
        let horizon = cfg.horizon();
        let start = cfg.burn_in().min(horizon);
        let batches = cfg.params.batches;
        let types = space.num_types();

        Ok(Self {
            cfg,
            space,
            table,
            state,
            y_actual: y.clone(),
            initial_y: y.clone(),
            y,
            counters: EdgeCounters::new(space.edges().len(), tokens),
            events: EventCounts::default(),
            rng,
            arrival_rate,
            mu0: cfg.token_rate(),
            acc: Accumulators {
                start,
                end: horizon,
                batch_len: (horizon - start) / batches as f64,
                x: vec![0.0; space.len()],
                x_since: vec![start; space.len()],
                y: vec![vec![0.0; types]; batches],
                y2: vec![vec![0.0; types]; batches],
                tokens: vec![0.0; types],
            },
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn y_actual(&self) -> &[u64] {
        &self.y_actual
    }

    pub fn counters(&self) -> &EdgeCounters {
        &self.counters
    }

    pub fn complete_table(&self) -> Option<&CompleteTable> {
        self.table.as_ref()
    }

    /// Total event rate from the per-type totals.
    pub fn total_rate(&self) -> f64 {
        let mu = self.cfg.demand.mu();
        let mut total: f64 = self.arrival_rate.iter().sum();
        for ((m, &y), &actual) in mu.iter().zip(&self.y).zip(&self.y_actual) {
            total += m * actual as f64;
            total += self.mu0 * (y - actual) as f64;
        }
        total
    }

    /// Sum of the individual clock rates over all channels.
    pub fn channel_rate_sum(&self) -> f64 {
        let mut sum = 0.0;
        self.scan(f64::INFINITY, &mut |r| sum += r);
        sum
    }

    /// Walks channels in a fixed order, subtracting rates from `u`; returns
    /// the channel where `u` falls, or the last channel with positive rate.
    fn scan(&self, mut u: f64, visit: &mut dyn FnMut(f64)) -> Option<Event> {
        let mu = self.cfg.demand.mu();
        let mut last = None;
        let mut take = |rate: f64, ev: Event, u: &mut f64| -> bool {
            if rate <= 0.0 {
                return false;
            }
            visit(rate);
            last = Some(ev);
            if *u < rate {
                return true;
            }
            *u -= rate;
            false
        };
        for (ty, &rate) in self.arrival_rate.iter().enumerate() {
            if take(rate, Event::Arrival(ty), &mut u) {
                return Some(Event::Arrival(ty));
            }
        }
        match &self.table {
            None => {
                for (c, &n) in self.state.counts.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    for (ty, &k) in self.space.config(c).iter().enumerate() {
                        let ev = Event::Departure { config: c, ty };
                        if take(k as f64 * mu[ty] * n as f64, ev, &mut u) {
                            return Some(ev);
                        }
                    }
                }
            }
            Some(table) => {
                for (cc, &n) in self.state.complete.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    let entry = table.entry(cc);
                    let k = self.space.config(entry.config);
                    for ty in 0..k.len() {
                        let ev = Event::ActualDeparture { cc, ty };
                        if take(entry.khat[ty] as f64 * mu[ty] * n as f64, ev, &mut u) {
                            return Some(ev);
                        }
                        let ev = Event::TokenExpiry { cc, ty };
                        let tokens = (k[ty] - entry.khat[ty]) as f64;
                        if take(tokens * self.mu0 * n as f64, ev, &mut u) {
                            return Some(ev);
                        }
                    }
                }
            }
        }
        last
    }

    /// Advances the clock by one exponential holding time and applies the
    /// event. Returns `None` when no event can occur.
    pub fn step(&mut self) -> Option<f64> {
        let total = self.total_rate();
        if total <= 0.0 {
            return None;
        }
        let dt: f64 = self.rng.sample::<f64, _>(Exp1) / total;
        self.state.t += dt;
        self.apply_event(total);
        Some(self.state.t)
    }

    fn apply_event(&mut self, total: f64) {
        if cfg!(debug_assertions) {
            let sum = self.channel_rate_sum();
            assert!(
                (sum - total).abs() <= 1e-9 * total.max(1.0),
                "channel rates sum to {sum}, total rate is {total}"
            );
        }
        let u = self.rng.random::<f64>() * total;
        let ev = self.scan(u, &mut |_| {}).expect("positive total rate");
        self.events.total += 1;
        match ev {
            Event::Arrival(ty) => self.arrival(ty),
            Event::Departure { config, ty } => self.departure(config, ty),
            Event::ActualDeparture { cc, ty } => self.actual_departure(cc, ty),
            Event::TokenExpiry { cc, ty } => self.token_expiry(cc, ty),
        }
        if self.cfg.params.mode == Mode::Closed {
            assert_eq!(self.y, self.initial_y, "closed population changed");
        }
    }

    fn bump(&mut self, c: usize, delta: i64) {
        let t = self.acc.clip(self.state.t);
        self.acc.x[c] += self.state.counts[c] as f64 * (t - self.acc.x_since[c]);
        self.acc.x_since[c] = t;
        self.state.counts[c] = self.state.counts[c]
            .checked_add_signed(delta)
            .expect("server count stays nonnegative");
    }

    fn bump_cc(&mut self, cc: usize, delta: i64) {
        self.state.complete[cc] = self.state.complete[cc]
            .checked_add_signed(delta)
            .expect("server count stays nonnegative");
        let c = self.table.as_ref().unwrap().entry(cc).config;
        self.bump(c, delta);
    }

    fn choose(&mut self, ty: usize, departed: Option<usize>) -> (Placement, bool) {
        let alpha = self.cfg.params.alpha;
        let counts = &self.state.counts;
        if let (Some(alt), Some(edge)) = (self.cfg.params.alt_placement, departed) {
            if self.rng.random::<f64>() < alt.mix {
                let p = place_alt(self.space, counts, edge, &alt, alpha, &mut self.rng);
                let e = self.space.edges()[edge];
                return (p, p.base == e.base && p.target == e.config);
            }
        }
        let p = match self.cfg.params.discipline {
            Discipline::GreedyI => place_greedy_i(self.space, counts, ty, alpha),
            Discipline::GreedyD | Discipline::GreedyDm => place_greedy_d(self.space, counts, ty, alpha),
            Discipline::GreedyIAc => {
                place_greedy_ac(self.space, counts, ty, alpha, AcScore::I, &mut self.rng)
            }
            Discipline::GreedyDAc | Discipline::GreedyDmAc => {
                place_greedy_ac(self.space, counts, ty, alpha, AcScore::D, &mut self.rng)
            }
        };
        (p, false)
    }

    fn edge(&self, c: usize, ty: usize) -> usize {
        self.space.edge(c, ty).expect("edge exists")
    }

    fn place_plain(&mut self, p: Placement, ty: usize) {
        if let Some(b) = p.base {
            self.bump(b, -1);
        }
        self.bump(p.target, 1);
        let e = self.edge(p.target, ty);
        self.counters.arrivals[e] += 1;
    }

    /// Uniform server among those in configuration `c`.
    fn pick_server(&mut self, c: usize) -> usize {
        let table = self.table.as_ref().unwrap();
        let mut u = self.rng.random_range(0..self.state.counts[c]);
        for &cc in table.of_config(c) {
            let n = self.state.complete[cc];
            if u < n {
                return cc;
            }
            u -= n;
        }
        unreachable!("complete counts add up to the configuration count")
    }

    /// Adds a customer or token to a concrete server (`None`: empty).
    fn place_complete(&mut self, base: Option<usize>, ty: usize, token: bool) -> usize {
        let table = self.table.as_ref().unwrap();
        let new = table.add(base, ty, token).expect("placement is feasible");
        let target = table.entry(new).config;
        if let Some(b) = base {
            self.bump_cc(b, -1);
        }
        self.bump_cc(new, 1);
        self.edge(target, ty)
    }

    fn arrival(&mut self, ty: usize) {
        self.events.arrivals += 1;
        if self.table.is_none() {
            let (p, _) = self.choose(ty, None);
            self.place_plain(p, ty);
        } else if self.y[ty] > self.y_actual[ty] {
            // replace a uniformly chosen type-ty token
            let table = self.table.as_ref().unwrap();
            let mut u = self.rng.random_range(0..self.y[ty] - self.y_actual[ty]);
            let mut chosen = None;
            for (cc, &n) in self.state.complete.iter().enumerate() {
                let e = table.entry(cc);
                let w = (self.space.config(e.config)[ty] - e.khat[ty]) as u64 * n;
                if u < w {
                    chosen = Some(cc);
                    break;
                }
                u -= w;
            }
            let cc = chosen.expect("token count matches complete counts");
            let new = table.fill_token(cc, ty).unwrap();
            let e = self.edge(table.entry(cc).config, ty);
            self.state.complete[cc] -= 1;
            self.state.complete[new] += 1;
            self.counters.replacements[e] += 1;
            self.events.token_replacements += 1;
            self.y_actual[ty] += 1;
            return;
        } else {
            let (p, _) = self.choose(ty, None);
            let base = p.base.map(|c| self.pick_server(c));
            let e = self.place_complete(base, ty, false);
            self.counters.arrivals[e] += 1;
            self.counters.placed[e] += 1;
        }
        self.y[ty] += 1;
        self.y_actual[ty] += 1;
    }

    fn departure(&mut self, c: usize, ty: usize) {
        let e = self.edge(c, ty);
        self.bump(c, -1);
        if let Some(b) = self.space.edges()[e].base {
            self.bump(b, 1);
        }
        self.counters.departures[e] += 1;
        self.events.departures += 1;
        if self.cfg.params.mode == Mode::Closed {
            let (p, _) = self.choose(ty, Some(e));
            self.place_plain(p, ty);
        } else {
            self.y[ty] -= 1;
            self.y_actual[ty] -= 1;
        }
    }

    fn actual_departure(&mut self, cc: usize, ty: usize) {
        let table = self.table.as_ref().unwrap();
        let after = table.actual_departure(cc, ty).expect("actual customer present");
        let e = self.edge(table.entry(cc).config, ty);
        self.bump_cc(cc, -1);
        if let Some(a) = after {
            self.bump_cc(a, 1);
        }
        self.counters.departures[e] += 1;
        self.counters.actual_departures[e] += 1;
        self.events.departures += 1;
        self.y_actual[ty] -= 1;

        // the departure leaves a token behind
        let (p, back) = self.choose(ty, Some(e));
        let base = if back {
            after
        } else {
            p.base.map(|c| self.pick_server(c))
        };
        let e = self.place_complete(base, ty, true);
        self.counters.arrivals[e] += 1;
        self.counters.token_arrivals[e] += 1;
    }

    fn token_expiry(&mut self, cc: usize, ty: usize) {
        let table = self.table.as_ref().unwrap();
        let after = table.token_expiry(cc, ty).expect("token present");
        let e = self.edge(table.entry(cc).config, ty);
        self.bump_cc(cc, -1);
        if let Some(a) = after {
            self.bump_cc(a, 1);
        }
        self.counters.departures[e] += 1;
        self.counters.token_expiries[e] += 1;
        self.events.token_expiries += 1;
        self.y[ty] -= 1;
    }

    /// Adds the current per-type totals over `[from, to]` to the window
    /// integrals.
    fn accumulate(&mut self, from: f64, to: f64) {
        let a = self.acc.clip(from);
        let b = self.acc.clip(to);
        if b <= a {
            return;
        }
        for (ty, tok) in self.acc.tokens.iter_mut().enumerate() {
            *tok += (self.y[ty] - self.y_actual[ty]) as f64 * (b - a);
        }
        let nb = self.acc.y.len();
        let mut lo = a;
        while lo < b {
            let idx = (((lo - self.acc.start) / self.acc.batch_len) as usize).min(nb - 1);
            let edge = if idx + 1 == nb {
                b
            } else {
                (self.acc.start + (idx + 1) as f64 * self.acc.batch_len).min(b)
            };
            let len = (edge - lo).max(0.0);
            for ty in 0..self.y_actual.len() {
                let v = self.y_actual[ty] as f64;
                self.acc.y[idx][ty] += v * len;
                self.acc.y2[idx][ty] += v * v * len;
            }
            if edge <= lo {
                break;
            }
            lo = edge;
        }
    }

    fn flush_x(&mut self) {
        let t = self.acc.clip(self.state.t);
        for c in 0..self.state.counts.len() {
            self.acc.x[c] += self.state.counts[c] as f64 * (t - self.acc.x_since[c]);
            self.acc.x_since[c] = t;
        }
    }

    fn fluid_x(&self) -> Vec<f64> {
        let r = self.cfg.params.r;
        self.state.counts.iter().map(|&n| n as f64 / r).collect()
    }

    fn check_invariants(&self) {
        let space = self.space;
        assert_eq!(self.state.totals(space), self.y, "tracked totals drifted");
        assert_eq!(
            self.state.actual_totals(space, self.table.as_ref()),
            self.y_actual,
            "tracked actual totals drifted"
        );
        let a = EdgeCounters::per_type(space, &self.counters.arrivals);
        let d = EdgeCounters::per_type(space, &self.counters.departures);
        for ty in 0..self.y.len() {
            assert_eq!(
                a[ty] as i128 - d[ty] as i128,
                self.y[ty] as i128 - self.initial_y[ty] as i128,
                "edge-flow conservation fails for type {ty}"
            );
        }
        if self.table.is_some() {
            assert_eq!(
                EdgeCounters::per_type(space, &self.counters.token_arrivals),
                EdgeCounters::per_type(space, &self.counters.actual_departures),
                "token conservation fails"
            );
        }
    }

    fn snapshot(&self, t: f64) -> Snapshot {
        self.check_invariants();
        let r = self.cfg.params.r;
        Snapshot {
            t,
            x: self
                .state
                .counts
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(c, &n)| (c, n as f64 / r))
                .collect::<BTreeMap<_, _>>(),
            y: self.y.clone(),
            y_actual: self.y_actual.clone(),
            y_token: self.y.iter().zip(&self.y_actual).map(|(a, b)| a - b).collect(),
            counters: self.counters.clone(),
        }
    }
}

/// Simulates `cfg` and returns the snapshots and the summary.
pub fn run(cfg: &SimConfig) -> Result<(Vec<Snapshot>, Summary)> {
    run_with_reference(cfg, &Reference::default())
}

pub fn run_with_reference(cfg: &SimConfig, reference: &Reference) -> Result<(Vec<Snapshot>, Summary)> {
    let mut eng = Engine::new(cfg)?;
    let horizon = cfg.horizon();
    let burn_in = cfg.burn_in();
    let interval = cfg.sample_interval();
    let snap_time = |j: u64| burn_in + j as f64 * interval;

    let initial_x = eng.fluid_x();
    let initial_y = eng.y.clone();
    let mut snapshots = Vec::new();
    let mut j = 0u64;
    loop {
        let t = eng.state.t;
        let total = eng.total_rate();
        let t_next = if total > 0.0 {
            t + eng.rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };
        while snap_time(j) < horizon && snap_time(j) < t_next {
            snapshots.push(eng.snapshot(snap_time(j)));
            j += 1;
        }
        eng.accumulate(t, t_next.min(horizon));
        if t_next >= horizon {
            eng.state.t = horizon;
            break;
        }
        eng.state.t = t_next;
        eng.apply_event(total);
    }
    eng.check_invariants();
    eng.flush_x();

    let r = cfg.params.r;
    let window = eng.acc.end - eng.acc.start;
    let types = cfg.space.num_types();
    let final_x = eng.fluid_x();
    let (mean_x, mean_y, var_y, se_mean, se_var, token_fraction) = if window > 0.0 {
        let mean_x: Vec<f64> = eng.acc.x.iter().map(|v| v / window / r).collect();
        let blen = eng.acc.batch_len;
        let mut mean = vec![0.0; types];
        let mut var = vec![0.0; types];
        let mut se_m = vec![0.0; types];
        let mut se_v = vec![0.0; types];
        for ty in 0..types {
            let sy: f64 = eng.acc.y.iter().map(|b| b[ty]).sum();
            let sy2: f64 = eng.acc.y2.iter().map(|b| b[ty]).sum();
            mean[ty] = sy / window;
            var[ty] = sy2 / window - mean[ty] * mean[ty];
            let m: Vec<f64> = eng.acc.y.iter().map(|b| b[ty] / blen).collect();
            let v: Vec<f64> = eng
                .acc
                .y2
                .iter()
                .zip(&m)
                .map(|(b2, &mb)| b2[ty] / blen - 2.0 * mean[ty] * mb + mean[ty] * mean[ty])
                .collect();
            se_m[ty] = batch_se(&m);
            se_v[ty] = batch_se(&v);
        }
        let tok = eng.acc.tokens.iter().map(|v| v / window / r).collect();
        (mean_x, mean, var, se_m, se_v, tok)
    } else {
        let y: Vec<f64> = eng.y_actual.iter().map(|&v| v as f64).collect();
        let tok = eng
            .y
            .iter()
            .zip(&eng.y_actual)
            .map(|(a, b)| (a - b) as f64 / r)
            .collect();
        (final_x.clone(), y, vec![0.0; types], vec![0.0; types], vec![0.0; types], tok)
    };

    let point = StatePoint::new(mean_x.clone(), cfg.params.alpha);
    let summary = Summary {
        version: SIM_SCHEMA_VERSION,
        r,
        horizon,
        burn_in,
        window,
        events: eng.events.clone(),
        l2_to_xstar: reference.xstar.as_ref().map(|xs| point.distance(xs)),
        phi_gap: reference
            .phistar
            .map(|p| (objective_phi(&point, &cfg.space) - p).abs()),
        mean_x,
        initial_x,
        final_x,
        initial_y,
        final_y: eng.y.clone(),
        mean_y_actual: mean_y,
        var_y_actual: var_y,
        se_mean_y_actual: se_mean,
        se_var_y_actual: se_var,
        token_fraction,
        snapshots: snapshots.len(),
    };
    Ok((snapshots, summary))
}

/// Standard error of the mean of batch values.
fn batch_se(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::optimizer::Demand;
    use crate::simulator::{SimParams, Mode};

    fn scalar(max: u32) -> Arc<ConfigSpace> {
        Arc::new(ConfigSpace::from_configs((1..=max).map(|k| vec![k]).collect(), None).unwrap())
    }

    #[test]
    fn single_customer_is_stationary() {
        let mut p = SimParams::new(1.0, Mode::Closed, Discipline::GreedyD);
        p.seed = 5;
        let cfg = SimConfig::new(scalar(1), Demand::new(vec![1.0], vec![1.0]).unwrap(), p).unwrap();
        let mut eng = Engine::new(&cfg).unwrap();
        for _ in 0..100 {
            eng.step().unwrap();
            assert_eq!(eng.state().counts, vec![1]);
        }
        assert_eq!(eng.counters().arrivals, vec![100]);
    }

    #[test]
    fn total_rate_matches_channels() {
        let mut p = SimParams::new(50.0, Mode::Open, Discipline::GreedyDm);
        p.seed = 9;
        let cfg = SimConfig::new(scalar(3), Demand::new(vec![1.0], vec![0.5]).unwrap(), p).unwrap();
        let mut eng = Engine::new(&cfg).unwrap();
        for _ in 0..2000 {
            let total = eng.total_rate();
            assert!((eng.channel_rate_sum() - total).abs() < 1e-9 * total);
            eng.step();
        }
        eng.check_invariants();
    }

    #[test]
    fn lone_token_expires() {
        let mut p = SimParams::new(1.0, Mode::Open, Discipline::GreedyDm);
        p.token_rate = Some(2.0);
        let cfg = SimConfig::new(scalar(1), Demand::new(vec![1.0], vec![1.0]).unwrap(), p).unwrap();
        let mut eng = Engine::new(&cfg).unwrap();
        let table = eng.table.clone().unwrap();
        let token = table.add(None, 0, true).unwrap();
        eng.state.complete[token] = 1;
        eng.state.counts[0] = 1;
        eng.y[0] = 1;
        // arrival rate 1 + expiry rate 2
        assert_eq!(eng.total_rate(), 3.0);
        eng.token_expiry(token, 0);
        assert_eq!(eng.state().counts, vec![0]);
        assert_eq!(eng.state().complete.iter().sum::<u64>(), 0);
    }

    #[test]
    fn zero_horizon_reports_initial_state() {
        let mut p = SimParams::new(10.0, Mode::Closed, Discipline::GreedyD);
        p.horizon = Some(0.0);
        p.burn_in = Some(0.0);
        let cfg = SimConfig::new(scalar(2), Demand::new(vec![1.0], vec![1.0]).unwrap(), p).unwrap();
        let (snaps, summary) = run(&cfg).unwrap();
        assert!(snaps.is_empty());
        assert_eq!(summary.mean_x, vec![1.0, 0.0]);
        assert_eq!(summary.events.total, 0);
    }
}
