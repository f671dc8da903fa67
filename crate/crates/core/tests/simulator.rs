use std::sync::Arc;

use packing_sim::fluid::{integrate_with, FluidOptions};
use packing_sim::optimizer::{objective_f, solve_xstar};
use packing_sim::simulator::{
    run, run_with_reference, AltPlacement, Discipline, EdgeCounters, Engine, InitialState, Mode, Reference, SimConfig,
    SimParams,
};
use packing_sim::{ConfigSpace, Demand, ResourceProfile, StatePoint};

fn k12() -> (Arc<ConfigSpace>, Demand) {
    (
        Arc::new(ConfigSpace::from_configs(vec![vec![1], vec![2]], None).unwrap()),
        Demand::new(vec![1.0], vec![1.0]).unwrap(),
    )
}

fn b3() -> (Arc<ConfigSpace>, Demand) {
    let p = ResourceProfile::new(vec![3.0], vec![vec![1.0], vec![2.0]]).unwrap();
    (
        Arc::new(ConfigSpace::enumerate(&p).unwrap()),
        Demand::new(vec![0.5, 0.25], vec![1.0, 1.0]).unwrap(),
    )
}

fn config(space: &Arc<ConfigSpace>, demand: &Demand, params: SimParams) -> SimConfig {
    SimConfig::new(space.clone(), demand.clone(), params).unwrap()
}

fn short(r: f64, mode: Mode, disc: Discipline) -> SimParams {
    let mut p = SimParams::new(r, mode, disc);
    p.burn_in = Some(2.0);
    p.horizon = Some(12.0);
    p
}

#[test]
fn closed_greedy_d_decreases_objective_from_singletons() {
    let (space, demand) = k12();
    let mut p = SimParams::new(1000.0, Mode::Closed, Discipline::GreedyD);
    p.burn_in = Some(0.0);
    p.horizon = Some(10.0);
    let (snaps, _) = run(&config(&space, &demand, p)).unwrap();
    let f = |i: usize| objective_f(&StatePoint::new(snaps[i].dense_x(space.len()), 1.0));
    let (xs, _) = solve_xstar(&space, &demand, 1.0, 1e-12).unwrap();
    let f0 = f(0);
    assert!(f0 - objective_f(&xs) > 0.3);
    assert!(f(snaps.len() - 1) < f0 - 0.3, "{} vs {}", f(snaps.len() - 1), f0);
}

#[test]
fn simulation_tracks_fluid_trajectory() {
    let (space, demand) = k12();
    let mut p = SimParams::new(1e4, Mode::Closed, Discipline::GreedyD);
    p.burn_in = Some(0.0);
    p.horizon = Some(10.0);
    p.sample_interval = Some(0.1);
    let (snaps, _) = run(&config(&space, &demand, p)).unwrap();

    let mut opts = FluidOptions::new(10.0, 1e-3);
    opts.record_interval = Some(0.1);
    let traj = integrate_with(&space, &StatePoint::new(vec![1.0, 0.0], 1.0), &demand, &opts).unwrap();
    let mut sup: f64 = 0.0;
    for s in &snaps {
        let j = traj
            .times
            .iter()
            .position(|t| (t - s.t).abs() < 1e-6)
            .expect("matching fluid time");
        let x = s.dense_x(space.len());
        for (a, b) in x.iter().zip(&traj.states[j]) {
            sup = sup.max((a - b).abs());
        }
    }
    assert!(sup < 0.05, "sup-norm gap {sup}");
}

#[test]
fn edge_flows_balance_type_totals() {
    let (space, demand) = b3();
    for disc in [Discipline::GreedyD, Discipline::GreedyI, Discipline::GreedyDAc] {
        let (snaps, s) = run(&config(&space, &demand, short(200.0, Mode::Open, disc))).unwrap();
        let last = snaps.last().unwrap();
        let a = EdgeCounters::per_type(&space, &last.counters.arrivals);
        let d = EdgeCounters::per_type(&space, &last.counters.departures);
        for i in 0..2 {
            assert_eq!(
                a[i] as i64 - d[i] as i64,
                last.y[i] as i64 - s.initial_y[i] as i64,
                "{disc:?}"
            );
        }
    }
}

#[test]
fn token_flows_balance() {
    let (space, demand) = b3();
    for disc in [Discipline::GreedyDm, Discipline::GreedyDmAc] {
        let (snaps, _) = run(&config(&space, &demand, short(200.0, Mode::Open, disc))).unwrap();
        for snap in &snaps {
            let c = &snap.counters;
            let created: u64 = c.token_arrivals.iter().sum();
            let actual: u64 = c.actual_departures.iter().sum();
            assert_eq!(created, actual, "{disc:?}");
            let gone: u64 = c.replacements.iter().sum::<u64>() + c.token_expiries.iter().sum::<u64>();
            let alive: u64 = snap.y_token.iter().sum();
            assert_eq!(created, gone + alive, "{disc:?}");
            for i in 0..2 {
                assert_eq!(snap.y[i], snap.y_actual[i] + snap.y_token[i]);
            }
        }
    }
}

#[test]
fn closed_population_is_invariant_for_every_discipline() {
    let (space, demand) = b3();
    for disc in [
        Discipline::GreedyD,
        Discipline::GreedyI,
        Discipline::GreedyDAc,
        Discipline::GreedyIAc,
    ] {
        let (snaps, s) = run(&config(&space, &demand, short(300.0, Mode::Closed, disc))).unwrap();
        assert!(snaps.iter().all(|x| x.y == s.initial_y));
        assert_eq!(s.final_y, s.initial_y);
        assert!(s.events.total > 0);
    }
}

#[test]
fn alt_placement_keeps_population_and_approaches_optimum() {
    let (space, demand) = k12();
    let mut p = SimParams::new(2000.0, Mode::Closed, Discipline::GreedyD);
    p.alt_placement = Some(AltPlacement {
        epsilon: 0.2,
        mix: 1.0,
    });
    let reference = Reference {
        xstar: Some(solve_xstar(&space, &demand, 1.0, 1e-12).unwrap().0),
        phistar: None,
    };
    let (_, s) = run_with_reference(&config(&space, &demand, p), &reference).unwrap();
    assert_eq!(s.final_y, s.initial_y);
    let l2 = s.l2_to_xstar.unwrap();
    assert!(l2 < 0.1, "{l2}");
}

#[test]
fn alt_placement_in_token_mode_runs() {
    let (space, demand) = k12();
    let mut p = short(500.0, Mode::Open, Discipline::GreedyDm);
    p.alt_placement = Some(AltPlacement {
        epsilon: 0.5,
        mix: 0.5,
    });
    let (_, s) = run(&config(&space, &demand, p)).unwrap();
    assert!(s.events.token_replacements > 0);
}

#[test]
fn engine_total_rate_matches_channels() {
    let (space, demand) = b3();
    for (mode, disc) in [
        (Mode::Open, Discipline::GreedyDmAc),
        (Mode::Open, Discipline::GreedyI),
        (Mode::Closed, Discipline::GreedyDAc),
    ] {
        let cfg = config(&space, &demand, short(50.0, mode, disc));
        let mut engine = Engine::new(&cfg).unwrap();
        for _ in 0..2000 {
            let total = engine.total_rate();
            let sum = engine.channel_rate_sum();
            assert!((total - sum).abs() <= 1e-9 * total.max(1.0), "{total} vs {sum}");
            if engine.step().is_none() {
                break;
            }
        }
    }
}

#[test]
fn explicit_initial_state_is_used() {
    let (space, demand) = k12();
    let mut p = short(10.0, Mode::Closed, Discipline::GreedyD);
    p.initial = Some(InitialState::Explicit(vec![(vec![2], 3), (vec![1], 1)]));
    let cfg = config(&space, &demand, p);
    let (_, s) = run(&cfg).unwrap();
    assert_eq!(s.initial_y, vec![7]);
    assert_eq!(s.initial_x, vec![0.1, 0.3]);
}

#[test]
fn seeds_and_streams_change_paths() {
    let (space, demand) = k12();
    let base = short(100.0, Mode::Open, Discipline::GreedyD);
    let mut other_seed = base.clone();
    other_seed.seed += 1;
    let mut other_stream = base.clone();
    other_stream.stream = 1;
    let a = run(&config(&space, &demand, base)).unwrap().1;
    let b = run(&config(&space, &demand, other_seed)).unwrap().1;
    let c = run(&config(&space, &demand, other_stream)).unwrap().1;
    assert_ne!(a.mean_x, b.mean_x);
    assert_ne!(a.mean_x, c.mean_x);
}

#[test]
fn invalid_configurations_are_rejected() {
    let (space, demand) = k12();
    let bad = [
        SimParams::new(10.0, Mode::Closed, Discipline::GreedyDm),
        SimParams {
            token_rate: Some(1.0),
            ..SimParams::new(10.0, Mode::Open, Discipline::GreedyD)
        },
        SimParams::new(-1.0, Mode::Open, Discipline::GreedyD),
        SimParams {
            alt_placement: Some(AltPlacement { epsilon: 1.5, mix: 1.0 }),
            ..SimParams::new(10.0, Mode::Closed, Discipline::GreedyD)
        },
        SimParams {
            initial: Some(InitialState::Explicit(vec![(vec![3], 1)])),
            ..SimParams::new(10.0, Mode::Closed, Discipline::GreedyD)
        },
    ];
    for p in bad {
        assert!(SimConfig::new(space.clone(), demand.clone(), p.clone()).is_err(), "{p:?}");
    }
}

#[test]
fn config_loads_from_json() {
    let text = r#"{
        "space": {"configs": [[1], [2]]},
        "demand": {"lambda": [2.0], "mu": [1.0]},
        "r": 50, "mode": "open", "discipline": "greedy-dm", "token_rate": 2.0,
        "horizon": 5, "burn_in": 1, "seed": 3
    }"#;
    let cfg = SimConfig::from_json(text).unwrap();
    assert_eq!(cfg.token_rate(), 2.0);
    assert_eq!(cfg.space.len(), 2);
    let (_, s) = run(&cfg).unwrap();
    assert_eq!(s.horizon, 5.0);
}
