use std::sync::Arc;

use allelopathy::coupling::{check_domination, couple};
use allelopathy::*;

fn torus(n: usize) -> Arc<Domain> {
    Arc::new(Domain::new(Lattice::new(&[n, n]).unwrap(), Neighborhood::nearest(2)).unwrap())
}

fn set(c: &Configuration, s: SiteState) -> Vec<bool> {
    c.states().iter().map(|&x| x == s).collect()
}

fn contains(big: &[bool], small: &[bool]) -> bool {
    big.iter().zip(small).all(|(&b, &s)| b || !s)
}

#[test]
fn larger_blue_rate_keeps_more_blue() {
    let d = torus(20);
    let small = Params::new(1.96, 1.96, 0.5, 2);
    let large = Params {
        lambda1: 2.5,
        ..small
    };
    let times = [2.0, 5.0, 10.0, 20.0];
    for seed in 0..50 {
        let xi0 = make_initial(
            &InitialCondition::Product([0.0, 0.5, 0.5, 0.0]),
            seed,
            d.lattice(),
        )
        .unwrap();
        let r = couple(seed, &[small, large], d.clone(), &xi0, &times, 20.0).unwrap();
        assert!(r.all_hold(), "seed {seed}");
        let (a, b) = (&r.trajectories[0], &r.trajectories[1]);
        assert!(contains(
            &set(&b.final_state, SiteState::Blue),
            &set(&a.final_state, SiteState::Blue)
        ));
        assert!(contains(
            &set(&a.final_state, SiteState::Red),
            &set(&b.final_state, SiteState::Red)
        ));
        for (ca, cb) in a.counts.iter().zip(&b.counts) {
            assert!(cb[1] >= ca[1] && cb[2] <= ca[2]);
        }
    }
}

#[test]
fn instant_thaw_bounds_red_from_above() {
    let d = torus(16);
    let vs: Vec<Params> = [0.05, 0.5, 5.0, f64::INFINITY]
        .iter()
        .map(|&g| Params::new(2.0, 2.0, g, 2))
        .collect();
    for seed in 0..20 {
        let xi0 = make_initial(
            &InitialCondition::Product([0.0, 0.5, 0.5, 0.0]),
            seed,
            d.lattice(),
        )
        .unwrap();
        let r = couple(seed, &vs, d.clone(), &xi0, &[3.0, 10.0], 10.0).unwrap();
        assert!(r.all_hold(), "seed {seed}");
        let inf = set(&r.trajectories[3].final_state, SiteState::Red);
        for tr in &r.trajectories[..3] {
            assert!(contains(&inf, &set(&tr.final_state, SiteState::Red)));
            assert!(check_domination(
                &tr.final_state,
                &r.trajectories[3].final_state
            ));
        }
        assert_eq!(r.trajectories[3].final_state.count(SiteState::Frozen), 0);
    }
}

#[test]
fn report_serializes() {
    let d = torus(8);
    let vs = [Params::new(2.0, 1.5, 0.1, 2), Params::new(2.0, 1.5, 1.0, 2)];
    let xi0 = make_initial(&InitialCondition::Product([0.25; 4]), 0, d.lattice()).unwrap();
    let r = couple(0, &vs, d, &xi0, &[1.0, 2.0], 2.0).unwrap();
    let rep = r.report();
    assert_eq!(rep.verdicts.len(), 1);
    assert!(serde_json::to_string(&rep)
        .unwrap()
        .contains("\"varied\":\"gamma\""));
}
