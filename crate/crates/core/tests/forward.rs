use std::sync::Arc;

use allelopathy::forward::{naive_fold, run_with, survival_probability, RunOptions};
use allelopathy::graphical::{build_events, ArrowLabel, EventKind, EventLog, EventSource};
use allelopathy::lattice::is_allowed_transition;
use allelopathy::rng::CounterRng;
use allelopathy::*;
use proptest::prelude::*;

fn line(n: usize, p: &Params) -> Arc<Domain> {
    Arc::new(Domain::new(Lattice::new(&[n]).unwrap(), p.neighborhood().unwrap()).unwrap())
}

fn plane(n: usize) -> Arc<Domain> {
    Arc::new(Domain::new(Lattice::new(&[n, n]).unwrap(), Neighborhood::nearest(2)).unwrap())
}

/// Basic contact process on the arrows a species may use.
fn contact_oracle<S: EventSource>(
    src: &S,
    occupied: &[bool],
    usable: impl Fn(f64) -> bool,
    t: f64,
) -> Vec<bool> {
    let mut occ = occupied.to_vec();
    for e in src.events_in_order(0.0, t) {
        match e.kind {
            EventKind::Cross => occ[e.site as usize] = false,
            EventKind::Arrow { target, coin, .. } => {
                if occ[e.site as usize] && usable(coin) {
                    occ[target as usize] = true;
                }
            }
            EventKind::Dot { .. } => {}
        }
    }
    occ
}

fn random_params(rng: &mut CounterRng) -> Params {
    let l1 = 0.5 + 3.0 * rng.uniform();
    let l2 = 0.5 + 3.0 * rng.uniform();
    let g = 0.05 + 5.0 * rng.uniform();
    Params::new(l1, l2, g, 1)
}

#[test]
fn engine_equals_naive_fold_on_random_instances() {
    let mut rng = CounterRng::new(11);
    for i in 0..100 {
        let p = random_params(&mut rng);
        let d = line(20, &p);
        let rep = build_events(i, &p, d.clone(), 5.0).unwrap();
        let xi0 = make_initial(
            &InitialCondition::Product([0.3, 0.3, 0.3, 0.1]),
            i,
            d.lattice(),
        )
        .unwrap();
        let thin = rep.thinning(&p).unwrap();
        for t in [0.5, 2.0, 5.0] {
            let eng = run(&xi0, &rep, &p, &[t]).unwrap();
            assert_eq!(
                eng.final_state,
                naive_fold(&xi0, &rep, &thin, t),
                "instance {i} at {t}"
            );
        }
    }
}

#[test]
fn exported_log_replays_identically() {
    let p = Params::new(2.2, 1.7, 0.4, 1);
    let d = line(20, &p);
    let rep = build_events(5, &p, d.clone(), 5.0).unwrap();
    let mut text = Vec::new();
    EventLog::from_source(&rep, d.clone(), 0.0, 5.0)
        .unwrap()
        .write_to(&mut text)
        .unwrap();
    let log = EventLog::read_from(&text[..], d.clone()).unwrap();
    let xi0 = make_initial(&InitialCondition::Product([0.25; 4]), 5, d.lattice()).unwrap();
    let a = run(&xi0, &rep, &p, &[1.0, 5.0]).unwrap();
    let b = run(&xi0, &log, &p, &[1.0, 5.0]).unwrap();
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.final_state, b.final_state);
}

#[test]
fn red_only_start_is_a_contact_process() {
    let p = Params::new(1.3, 2.4, 0.7, 2);
    let d = plane(16);
    for seed in 0..10 {
        let rep = build_events(seed, &p, d.clone(), 10.0).unwrap();
        let xi0 = make_initial(
            &InitialCondition::Product([0.5, 0.0, 0.5, 0.0]),
            seed,
            d.lattice(),
        )
        .unwrap();
        let thin = rep.thinning(&p).unwrap();
        let occ: Vec<bool> = xi0.states().iter().map(|s| *s == SiteState::Red).collect();
        for t in [1.0, 4.0, 10.0] {
            let got = run(&xi0, &rep, &p, &[t]).unwrap().final_state;
            let want = contact_oracle(&rep, &occ, |u| thin.label(u).usable_by(SiteState::Red), t);
            let red: Vec<bool> = got.states().iter().map(|s| *s == SiteState::Red).collect();
            assert_eq!(red, want);
            assert_eq!(got.count(SiteState::Blue) + got.count(SiteState::Frozen), 0);
        }
    }
}

#[test]
fn blue_ignores_frozen_sites_and_dots() {
    for (l1, l2) in [(2.0, 1.0), (1.5, 2.5)] {
        let p = Params::new(l1, l2, 0.3, 2);
        let d = plane(14);
        for seed in 0..10 {
            let rep = build_events(seed, &p, d.clone(), 8.0).unwrap();
            let xi0 = make_initial(
                &InitialCondition::Product([0.3, 0.4, 0.0, 0.3]),
                seed,
                d.lattice(),
            )
            .unwrap();
            let thin = rep.thinning(&p).unwrap();
            let occ: Vec<bool> = xi0.states().iter().map(|s| *s == SiteState::Blue).collect();
            for t in [2.0, 8.0] {
                let got = run(&xi0, &rep, &p, &[t]).unwrap().final_state;
                let want =
                    contact_oracle(&rep, &occ, |u| thin.label(u).usable_by(SiteState::Blue), t);
                let blue: Vec<bool> = got.states().iter().map(|s| *s == SiteState::Blue).collect();
                assert_eq!(blue, want);
            }
        }
    }
}

#[test]
fn labels_partition_the_coin() {
    let p = Params::new(2.0, 1.0, 1.0, 1);
    let rep = build_events(0, &p, line(5, &p), 1.0).unwrap();
    let thin = rep.thinning(&p).unwrap();
    assert_eq!(thin.label(0.25), ArrowLabel::BlueOnly);
    assert_eq!(thin.label(0.75), ArrowLabel::Both);
}

#[test]
fn product_start_density() {
    let lat = Lattice::new(&[200, 200]).unwrap();
    let xi = make_initial(&InitialCondition::Product([0.0, 0.5, 0.5, 0.0]), 3, &lat).unwrap();
    let n = lat.len() as f64;
    let blue = xi.count(SiteState::Blue) as f64 / n;
    assert!((blue - 0.5).abs() < 3.0 * (0.25 / n).sqrt());
    assert_eq!(xi.count(SiteState::Free) + xi.count(SiteState::Frozen), 0);
}

#[test]
fn pure_death_survival() {
    let p = Params::new(1.0, 0.0, 1.0, 1);
    let d = line(11, &p);
    let e = survival_probability(
        &p,
        SiteState::Red,
        &InitialCondition::SingleSeed(SiteState::Red),
        &d,
        20.0,
        1000,
        0,
    )
    .unwrap();
    assert!(e.p < 0.01);
    let p = Params::new(0.0, 1.0, 1.0, 2);
    let d = plane(10);
    let e = survival_probability(
        &p,
        SiteState::Blue,
        &InitialCondition::All(SiteState::Blue),
        &d,
        20.0,
        200,
        0,
    )
    .unwrap();
    assert!(e.p < 0.01);
}

#[test]
fn survival_is_independent_of_thread_count() {
    let p = Params::new(1.8, 1.2, 0.5, 1);
    let d = line(30, &p);
    let go = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                survival_probability(
                    &p,
                    SiteState::Blue,
                    &InitialCondition::SingleSeed(SiteState::Blue),
                    &d,
                    15.0,
                    64,
                    7,
                )
                .unwrap()
            })
    };
    let (a, b) = (go(1), go(3));
    assert_eq!(a.successes, b.successes);
    assert_eq!(a.lo.to_bits(), b.lo.to_bits());
}

#[test]
fn same_inputs_same_trajectory() {
    let p = Params::new(1.96, 1.96, 0.05, 2);
    let d = plane(30);
    let xi0 = make_initial(
        &InitialCondition::Product([0.0, 0.5, 0.5, 0.0]),
        1,
        d.lattice(),
    )
    .unwrap();
    let go = || {
        let rep = build_events(1, &p, d.clone(), 10.0).unwrap();
        run(&xi0, &rep, &p, &[5.0, 10.0]).unwrap()
    };
    let (a, b) = (go(), go());
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.events, b.events);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn histories_only_use_table_transitions(seed in 0u64..10_000, l1 in 0.2f64..4.0, l2 in 0.2f64..4.0, g in 0.05f64..5.0, thaw in proptest::bool::ANY) {
        let g = if thaw { f64::INFINITY } else { g };
        let p = Params::new(l1, l2, g, 1);
        let d = line(20, &p);
        let rep = build_events(seed, &p, d.clone(), 5.0).unwrap();
        let ic = if thaw { [0.3, 0.35, 0.35, 0.0] } else { [0.25; 4] };
        let xi0 = make_initial(&InitialCondition::Product(ic), seed, d.lattice()).unwrap();
        let tr = run_with(&xi0, &rep, &p, &[5.0], RunOptions { record_history: true, ..Default::default() }).unwrap();
        let h = tr.history.unwrap();
        for x in 0..20u32 {
            let mut prev = h.initial(x);
            for &(_, s) in h.changes(x) {
                prop_assert!(is_allowed_transition(prev, s, thaw), "{:?} -> {:?}", prev, s);
                prev = s;
            }
            prop_assert_eq!(prev, tr.final_state.get(x));
        }
    }
}
