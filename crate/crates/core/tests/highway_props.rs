use clipquery_core::highway::{
    self, generate, make_faulty, simulate, Action, Driver, FaultySpec, HighwayAbstractor, HighwayState, Policy,
    TrafficConfig,
};
use clipquery_core::{Abstractor, Formula};

fn replay_actions(states: &[HighwayState]) -> Vec<Action> {
    states[1..].iter().map(|s| s.last_action.unwrap()).collect()
}

#[test]
fn same_seed_same_episode() {
    let p = make_faulty(FaultySpec::plain_toplane(), &highway::vocabulary()).unwrap();
    let cfg = TrafficConfig::default();
    let a = simulate(&p, 200, 42, &cfg).unwrap();
    let b = simulate(&p, 200, 42, &cfg).unwrap();
    assert_eq!(a.concrete(), b.concrete());
    assert_eq!(a.trace(), b.trace());
    let c = simulate(&p, 200, 43, &cfg).unwrap();
    assert_ne!(a.concrete(), c.concrete());
}

#[test]
fn faulty_actions_follow_the_latch() {
    let v = highway::vocabulary();
    let cfg = TrafficConfig::default();
    let spec = FaultySpec::plain_toplane();
    let policy = make_faulty(spec.clone(), &v).unwrap();
    let params = policy.params;
    let ds = generate(&policy, 40, 200, 3, &cfg).unwrap();
    let mut triggered = 0;
    for ep in ds.episodes() {
        let states = ep.concrete();
        let trigger = ep.meta().trigger_step;
        if let Some(t) = trigger {
            triggered += 1;
            // the trigger step is the first step where the trigger holds
            let f = Formula::parse(&spec.trigger).unwrap();
            let first = ep.trace().iter().position(|s| f.holds_in(*s, &v).unwrap()).unwrap() + 1;
            assert_eq!(first, t);
        } else {
            let f = Formula::parse(&spec.trigger).unwrap();
            assert!(ep.trace()[..ep.len() - 1].iter().all(|s| !f.holds_in(*s, &v).unwrap()));
        }
        for (i, action) in replay_actions(states).into_iter().enumerate() {
            let step = i + 1;
            let driver = match trigger {
                Some(t) if step >= t => spec.fault,
                _ => spec.base,
            };
            assert_eq!(
                driver.decide(&states[i], &params),
                action,
                "episode {} step {step}",
                ep.id()
            );
        }
    }
    assert!(triggered > 0);
}

#[test]
fn constant_triggers() {
    let v = highway::vocabulary();
    let cfg = TrafficConfig::default();
    let never = make_faulty(FaultySpec::new(Driver::Plain, Driver::Collision, &Formula::False), &v).unwrap();
    let plain = Policy::single(Driver::Plain);
    let always = make_faulty(FaultySpec::new(Driver::Plain, Driver::Collision, &Formula::True), &v).unwrap();
    let collision = Policy::single(Driver::Collision);
    for seed in 0..10 {
        let a = simulate(&never, 150, seed, &cfg).unwrap();
        assert_eq!(a.concrete(), simulate(&plain, 150, seed, &cfg).unwrap().concrete());
        assert_eq!(a.meta().trigger_step, None);
        let b = simulate(&always, 150, seed, &cfg).unwrap();
        assert_eq!(b.concrete(), simulate(&collision, 150, seed, &cfg).unwrap().concrete());
        assert_eq!(b.meta().trigger_step, Some(1));
    }
}

#[test]
fn states_are_physically_sane() {
    let v = highway::vocabulary();
    let cfg = TrafficConfig::default();
    let policies = [
        Policy::single(Driver::Plain),
        Policy::single(Driver::TopLane),
        make_faulty(FaultySpec::plain_collision(), &v).unwrap(),
    ];
    let lanes: Vec<usize> = (1..=4).map(|i| v.index_of(&format!("lane-{i}")).unwrap()).collect();
    for p in &policies {
        for seed in 0..20 {
            let ep = simulate(p, 300, seed, &cfg).unwrap();
            for s in ep.trace() {
                assert_eq!(lanes.iter().filter(|&&i| s.contains(i)).count(), 1);
            }
            for w in ep.concrete().windows(2) {
                assert!(w[0].agent.lane.abs_diff(w[1].agent.lane) <= 1);
                assert!((cfg.speed_min..=cfg.speed_max).contains(&w[1].agent.speed));
                assert_eq!(w[1].step, w[0].step + 1);
            }
        }
    }
}

#[test]
fn plain_rarely_crashes() {
    let cfg = TrafficConfig::default();
    let p = Policy::single(Driver::Plain);
    let clean = (0..100)
        .filter(|&seed| {
            !simulate(&p, 1000, seed, &cfg)
                .unwrap()
                .concrete()
                .iter()
                .any(|s| s.collision)
        })
        .count();
    assert!(clean >= 95, "{clean}/100 collision-free");
}

#[test]
fn toplane_climbs_to_lane_one() {
    let cfg = TrafficConfig {
        start_lane: Some(4),
        ..TrafficConfig::default()
    };
    let p = Policy::single(Driver::TopLane);
    for seed in 0..100 {
        let ep = simulate(&p, 60, seed, &cfg).unwrap();
        let reached = ep.concrete().iter().position(|s| s.agent.lane == 1);
        assert!(reached.is_some_and(|i| i < 50), "seed {seed}: {reached:?}");
    }
}

#[test]
fn collision_fault_produces_crashes() {
    let v = highway::vocabulary();
    let p = make_faulty(FaultySpec::plain_collision(), &v).unwrap();
    let ds = generate(&p, 30, 200, 11, &TrafficConfig::default()).unwrap();
    let a = HighwayAbstractor::default();
    let collision = a.vocabulary().index_of("collision").unwrap();
    let crashed = ds
        .episodes()
        .iter()
        .filter(|e| e.trace().iter().any(|s| s.contains(collision)))
        .count();
    assert!(crashed > 0);
    for e in ds.episodes() {
        if let Some(first) = e.trace().iter().position(|s| s.contains(collision)) {
            assert!(e.meta().trigger_step.is_some_and(|t| t <= first + 1));
        }
    }
}
