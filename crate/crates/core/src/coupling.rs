//! Several parameter variants driven by one graphical representation.
//!
//! All variants read the same points; a variant with a smaller rate keeps
//! only the points whose coin clears its cutoff. Because the kept sets are
//! nested, a variant that favors blue (smaller `gamma`, larger `lambda1` or
//! smaller `lambda2`) dominates the other one pathwise: it has every blue
//! site of the other and no red site the other lacks.

use std::sync::Arc;

use serde::Serialize;

use crate::forward::{Engine, Trajectory};
use crate::graphical::{BaseRates, EventSource, GraphicalRep};
use crate::lattice::{Configuration, Domain, Params, SiteState};
use crate::{Error, Result};

#[inline]
fn violates(a: SiteState, b: SiteState) -> bool {
    (a == SiteState::Red && b != SiteState::Red) || (b == SiteState::Blue && a != SiteState::Blue)
}

/// Whether `a` has more blue and less red than `b`: red(a) is a subset of
/// red(b) and blue(b) a subset of blue(a).
pub fn check_domination(a: &Configuration, b: &Configuration) -> bool {
    a.lattice() == b.lattice()
        && a.states()
            .iter()
            .zip(b.states())
            .all(|(&x, &y)| !violates(x, y))
}

/// Parameter in which two comparable variants differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Varied {
    Gamma,
    Lambda1,
    Lambda2,
}

/// Two variants differing in one parameter, `favored` being the blue-favored one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Pair {
    pub favored: usize,
    pub other: usize,
    pub varied: Varied,
}

pub fn comparable_pairs(variants: &[Params]) -> Vec<Pair> {
    let mut out = Vec::new();
    for i in 0..variants.len() {
        for j in i + 1..variants.len() {
            let (a, b) = (&variants[i], &variants[j]);
            if !a.same_geometry(b) {
                continue;
            }
            let diff = [
                a.gamma != b.gamma,
                a.lambda1 != b.lambda1,
                a.lambda2 != b.lambda2,
            ];
            if diff.iter().filter(|&&d| d).count() != 1 {
                continue;
            }
            let (varied, i_favored) = if diff[0] {
                (Varied::Gamma, a.gamma < b.gamma)
            } else if diff[1] {
                (Varied::Lambda1, a.lambda1 > b.lambda1)
            } else {
                (Varied::Lambda2, a.lambda2 < b.lambda2)
            };
            let (favored, other) = if i_favored { (i, j) } else { (j, i) };
            out.push(Pair {
                favored,
                other,
                varied,
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub time: f64,
    pub site: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairVerdict {
    #[serde(flatten)]
    pub pair: Pair,
    /// Domination at each sample time.
    pub per_sample: Vec<bool>,
    /// Number of event times after which domination was checked.
    pub events_checked: u64,
    /// Event times after which domination failed.
    pub violating_events: u64,
    pub first_violation: Option<Violation>,
}

impl PairVerdict {
    pub fn holds(&self) -> bool {
        self.violating_events == 0 && self.per_sample.iter().all(|&v| v)
    }
}

pub struct CoupledRun {
    pub seed: Option<u64>,
    pub variants: Vec<Params>,
    pub sample_times: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    pub verdicts: Vec<PairVerdict>,
}

/// Serializable summary of a coupled run.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    pub seed: Option<u64>,
    pub variants: Vec<Params>,
    pub sample_times: Vec<f64>,
    /// `densities[v][k]` = densities of variant `v` at sample `k`.
    pub densities: Vec<Vec<[f64; 4]>>,
    pub verdicts: Vec<PairVerdict>,
    pub all_hold: bool,
}

impl CoupledRun {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(PairVerdict::holds)
    }

    pub fn report(&self) -> CouplingReport {
        CouplingReport {
            seed: self.seed,
            variants: self.variants.clone(),
            sample_times: self.sample_times.clone(),
            densities: self
                .trajectories
                .iter()
                .map(|t| t.densities.clone())
                .collect(),
            verdicts: self.verdicts.clone(),
            all_hold: self.all_hold(),
        }
    }
}

/// Builds one representation covering every variant and runs them coupled.
pub fn couple(
    seed: u64,
    variants: &[Params],
    domain: Arc<Domain>,
    xi0: &Configuration,
    sample_times: &[f64],
    horizon: f64,
) -> Result<CoupledRun> {
    if variants.is_empty() {
        return Err(Error::param("variants", "at least one variant is required"));
    }
    if variants.iter().any(|v| !v.same_geometry(&variants[0])) {
        return Err(Error::DomainMismatch(
            "variants use different neighborhoods".into(),
        ));
    }
    let rep = GraphicalRep::with_base(seed, domain, horizon, BaseRates::covering(variants))?;
    let mut run = couple_on(&rep, variants, xi0, sample_times)?;
    run.seed = Some(seed);
    Ok(run)
}

fn merge_settled<S: EventSource + ?Sized>(
    engines: &[Engine<'_, S>],
    variants: &[Params],
    rep: &mut [usize],
    alias_events: &mut [(u64, u64)],
) {
    let settled = |e: &Engine<'_, S>| {
        let c = e.counts();
        c[SiteState::Blue.index()] == 0 && c[SiteState::Frozen.index()] == 0
    };
    for j in 0..engines.len() {
        if rep[j] != j || !settled(&engines[j]) {
            continue;
        }
        for i in 0..j {
            let (a, b) = (&variants[i], &variants[j]);
            if rep[i] == i
                && a.lambda1 == b.lambda1
                && a.lambda2 == b.lambda2
                && settled(&engines[i])
                && engines[i].counts() == engines[j].counts()
                && engines[i].states() == engines[j].states()
            {
                let (now_j, now_i) = (engines[j].events_processed(), engines[i].events_processed());
                for r in 0..rep.len() {
                    if rep[r] == j && r != j {
                        let (own, at) = alias_events[r];
                        alias_events[r] = (own + now_j - at, now_i);
                        rep[r] = i;
                    }
                }
                rep[j] = i;
                alias_events[j] = (now_j, now_i);
                break;
            }
        }
    }
}

/// Runs every variant on `src` in lockstep, checking domination for each
/// comparable pair after every event time and at every sample time.
pub fn couple_on<S: EventSource + ?Sized>(
    src: &S,
    variants: &[Params],
    xi0: &Configuration,
    sample_times: &[f64],
) -> Result<CoupledRun> {
    if sample_times.windows(2).any(|w| w[0] >= w[1])
        || sample_times
            .iter()
            .any(|&t| !(0.0..=src.horizon()).contains(&t))
    {
        return Err(Error::UnsortedSampleTimes);
    }
    let mut engines = variants
        .iter()
        .map(|p| Engine::new(src, p, xi0))
        .collect::<Result<Vec<_>>>()?;
    let pairs = comparable_pairs(variants);
    let n = xi0.len();
    let mut bad: Vec<Vec<bool>> = vec![vec![false; n]; pairs.len()];
    let mut bad_count = vec![0usize; pairs.len()];
    let mut verdicts: Vec<PairVerdict> = pairs
        .iter()
        .map(|&pair| PairVerdict {
            pair,
            per_sample: Vec::with_capacity(sample_times.len()),
            events_checked: 0,
            violating_events: 0,
            first_violation: None,
        })
        .collect();
    for (k, pr) in pairs.iter().enumerate() {
        for x in 0..n {
            if violates(
                engines[pr.favored].state(x as u32),
                engines[pr.other].state(x as u32),
            ) {
                bad[k][x] = true;
                bad_count[k] += 1;
                verdicts[k].first_violation.get_or_insert(Violation {
                    time: 0.0,
                    site: x as u32,
                });
            }
        }
    }
    let m = variants.len();
    let mut counts: Vec<Vec<[usize; 4]>> = vec![Vec::new(); m];
    let mut blocked = vec![0u64; m];
    let mut changed: Vec<u32> = Vec::new();
    // a variant whose configuration equals another's, with neither blue nor
    // frozen sites, follows it forever and stops being simulated
    let mut rep: Vec<usize> = (0..m).collect();
    let mut alias_events = vec![(0u64, 0u64); m];
    let mut next_alias_check = 0.0;
    for &t in sample_times {
        loop {
            let mut key = None::<u128>;
            for (v, e) in engines.iter().enumerate() {
                if rep[v] != v {
                    continue;
                }
                if let Some(k) = e.peek_key() {
                    key = Some(key.map_or(k, |c: u128| c.min(k)));
                }
            }
            let Some(key) = key else { break };
            let time = f64::from_bits((key >> 64) as u64);
            if time > t {
                break;
            }
            if time >= next_alias_check {
                next_alias_check = time + 1.0;
                merge_settled(&engines, variants, &mut rep, &mut alias_events);
            }
            changed.clear();
            for (v, e) in engines.iter_mut().enumerate() {
                if rep[v] == v && e.peek_key() == Some(key) {
                    let st = e.step().expect("peeked event exists");
                    blocked[v] += st.blocked as u64;
                    if let Some((site, _, _)) = st.changed {
                        changed.push(site);
                    }
                }
            }
            for (k, pr) in pairs.iter().enumerate() {
                let (a, b) = (&engines[rep[pr.favored]], &engines[rep[pr.other]]);
                for &x in &changed {
                    let v = violates(a.state(x), b.state(x));
                    if v != bad[k][x as usize] {
                        bad[k][x as usize] = v;
                        if v {
                            bad_count[k] += 1;
                            verdicts[k]
                                .first_violation
                                .get_or_insert(Violation { time, site: x });
                        } else {
                            bad_count[k] -= 1;
                        }
                    }
                }
                verdicts[k].events_checked += 1;
                verdicts[k].violating_events += (bad_count[k] > 0) as u64;
            }
        }
        for (k, pr) in pairs.iter().enumerate() {
            let ok = bad_count[k] == 0;
            debug_assert_eq!(
                ok,
                check_domination(
                    &engines[rep[pr.favored]].configuration(),
                    &engines[rep[pr.other]].configuration()
                )
            );
            verdicts[k].per_sample.push(ok);
        }
        for v in 0..m {
            counts[v].push(engines[rep[v]].counts());
        }
    }
    let trajectories = (0..m)
        .map(|v| {
            let e = &engines[rep[v]];
            let events = if rep[v] == v {
                e.events_processed()
            } else {
                let (own, at) = alias_events[v];
                own + e.events_processed() - at
            };
            Trajectory {
                times: sample_times.to_vec(),
                densities: counts[v]
                    .iter()
                    .map(|c| c.map(|k| k as f64 / n as f64))
                    .collect(),
                counts: std::mem::take(&mut counts[v]),
                snapshots: Vec::new(),
                final_state: e.configuration(),
                history: None,
                events,
                blocked: blocked[v],
            }
        })
        .collect();
    Ok(CoupledRun {
        seed: None,
        variants: variants.to_vec(),
        sample_times: sample_times.to_vec(),
        trajectories,
        verdicts,
    })
}
