//! Event-driven forward evolution on a graphical representation.
//!
//! The [`Engine`] replays the representation in global event order but
//! only ever looks at streams that can matter: arrows and crosses of
//! occupied sites and dots of frozen sites. Every site keeps the next
//! points of its relevant streams and sits in an indexed heap under the
//! earliest of them; a state change reloads the site. This is exactly the fold
//! of [`apply_event`] over the full event sequence, since the skipped
//! events are no-ops.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graphical::{
    build_events, order_key, Event, EventKind, EventSource, Point, Stream, StreamKind, Thinning,
};
use crate::lattice::{is_allowed_transition, Configuration, Domain, Lattice, Params, SiteState};
use crate::queue::SiteQueue;
use crate::rng::CounterRng;
use crate::stats::Estimate;
use crate::{Error, Result};

/// Applies one event to a configuration in place; returns the change, if any.
///
/// This is the plain per-event rule; [`Engine`] is the fast equivalent.
pub fn apply_event(
    xi: &mut Configuration,
    e: &Event,
    thin: &Thinning,
) -> Option<(u32, SiteState, SiteState)> {
    use SiteState::*;
    let (site, from, to) = match e.kind {
        EventKind::Cross => match xi.get(e.site) {
            Red => (e.site, Red, Free),
            Blue => (e.site, Blue, if thin.freeze { Frozen } else { Free }),
            _ => return None,
        },
        EventKind::Dot { coin } => match xi.get(e.site) {
            Frozen if thin.dot_applies(coin) => (e.site, Frozen, Free),
            _ => return None,
        },
        EventKind::Arrow { target, coin, .. } => {
            let label = thin.label(coin);
            match (xi.get(e.site), xi.get(target)) {
                (Blue, t @ (Free | Frozen)) if label.usable_by(Blue) => (target, t, Blue),
                (Red, Free) if label.usable_by(Red) => (target, Free, Red),
                _ => return None,
            }
        }
    };
    xi.set(site, to);
    Some((site, from, to))
}

/// Folds [`apply_event`] over every event of `src` in `(0, t]`.
pub fn naive_fold<S: EventSource + ?Sized>(
    xi0: &Configuration,
    src: &S,
    thin: &Thinning,
    t: f64,
) -> Configuration {
    let mut xi = xi0.clone();
    for e in src.events_in_order(0.0, t) {
        apply_event(&mut xi, &e, thin);
    }
    xi
}

/// Initial configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Every site in the given state.
    All(SiteState),
    /// Independent sites with probabilities `[p0, p1, p2, p3]`.
    Product([f64; 4]),
    /// One site of the given state at the lattice centre, the rest free.
    SingleSeed(SiteState),
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        if let InitialCondition::Product(p) = self {
            if p.iter().any(|&q| !(0.0..=1.0).contains(&q))
                || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(Error::param(
                    "initial",
                    format!("densities {p:?} must be in [0,1] and sum to 1"),
                ));
            }
        }
        Ok(())
    }

    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self, InitialCondition::SingleSeed(_))
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::All(s) => write!(f, "all-{}", *s as u8),
            InitialCondition::SingleSeed(s) => write!(f, "single-seed({})", *s as u8),
            InitialCondition::Product(p) => {
                write!(f, "product({},{},{},{})", p[0], p[1], p[2], p[3])
            }
        }
    }
}

impl FromStr for InitialCondition {
    type Err = Error;

    /// Accepts `all-1`, `all-2`, `single-seed(1)` and `product(p0,p1,p2,p3)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("initial", format!("cannot parse `{s}`"));
        let state = |t: &str| {
            t.trim()
                .parse::<u8>()
                .ok()
                .and_then(SiteState::from_u8)
                .ok_or_else(bad)
        };
        let s = s.trim();
        let ic = if let Some(rest) = s.strip_prefix("all-") {
            InitialCondition::All(state(rest)?)
        } else if let Some(rest) = s
            .strip_prefix("single-seed(")
            .and_then(|r| r.strip_suffix(')'))
        {
            InitialCondition::SingleSeed(state(rest)?)
        } else if let Some(rest) = s.strip_prefix("product(").and_then(|r| r.strip_suffix(')')) {
            let v: Vec<f64> = rest
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            InitialCondition::Product(v.try_into().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        ic.validate()?;
        Ok(ic)
    }
}

/// Builds an initial configuration; product draws depend only on `(seed, site)`.
pub fn make_initial(
    kind: &InitialCondition,
    seed: u64,
    lattice: &Lattice,
) -> Result<Configuration> {
    kind.validate()?;
    Ok(match kind {
        InitialCondition::All(s) => Configuration::filled(lattice, *s),
        InitialCondition::SingleSeed(s) => {
            let mut c = Configuration::filled(lattice, SiteState::Free);
            let centre: Vec<i64> = lattice.sides().iter().map(|&n| (n / 2) as i64).collect();
            c.set(lattice.index(&centre), *s);
            c
        }
        InitialCondition::Product(p) => {
            let states = (0..lattice.len() as u64)
                .map(|site| {
                    let u = CounterRng::from_words(&[seed, 0x1417_u64, site]).uniform();
                    let mut acc = 0.0;
                    for s in SiteState::ALL {
                        acc += p[s.index()];
                        if u < acc {
                            return s;
                        }
                    }
                    // rounding left a sliver above the last positive mass
                    *SiteState::ALL
                        .iter()
                        .rev()
                        .find(|s| p[s.index()] > 0.0)
                        .unwrap()
                })
                .collect();
            Configuration::from_states(lattice, states)?
        }
    })
}

/// Per-site record of state changes, for looking states up after a run.
#[derive(Clone, Debug)]
pub struct History {
    initial: Vec<SiteState>,
    changes: Vec<Vec<(f64, SiteState)>>,
}

impl History {
    fn new(initial: &[SiteState]) -> Self {
        Self {
            initial: initial.to_vec(),
            changes: vec![Vec::new(); initial.len()],
        }
    }

    /// State of `x` just before time `t` (changes strictly before `t`).
    pub fn state_at(&self, x: u32, t: f64) -> SiteState {
        let c = &self.changes[x as usize];
        let i = c.partition_point(|&(s, _)| s < t);
        if i == 0 {
            self.initial[x as usize]
        } else {
            c[i - 1].1
        }
    }

    /// State of `x` just after every change at times `<= t`.
    pub fn state_after(&self, x: u32, t: f64) -> SiteState {
        let c = &self.changes[x as usize];
        let i = c.partition_point(|&(s, _)| s <= t);
        if i == 0 {
            self.initial[x as usize]
        } else {
            c[i - 1].1
        }
    }

    pub fn changes(&self, x: u32) -> &[(f64, SiteState)] {
        &self.changes[x as usize]
    }

    pub fn initial(&self, x: u32) -> SiteState {
        self.initial[x as usize]
    }
}

/// Outcome of one engine step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub time: f64,
    pub site: u32,
    pub kind: StreamKind,
    /// Arrow target, for arrows.
    pub target: Option<u32>,
    /// `(site, from, to)` when a site changed.
    pub changed: Option<(u32, SiteState, SiteState)>,
    /// A red birth attempt onto a frozen site.
    pub blocked: bool,
}

#[derive(Clone, Debug, Default)]
pub struct EngineOptions {
    /// Sites outside the mask never act and never receive births.
    pub mask: Option<Vec<bool>>,
    pub record_history: bool,
}

const NONE: u128 = u128::MAX;
const CACHE: usize = 8;
const SLOTS: usize = 3;

/// Incremental forward simulator for one parameter variant.
pub struct Engine<'a, S: EventSource + ?Sized> {
    src: &'a S,
    domain: &'a Domain,
    thin: Thinning,
    state: Vec<SiteState>,
    counts: [usize; 4],
    /// Pending key of the arrow, cross and dot streams of every site; the
    /// heap holds one entry per site, its earliest slot.
    slots: Vec<u128>,
    /// Upcoming keys of every slot, latest first, `CACHE` per slot.
    cache: Vec<u128>,
    cache_len: Vec<u8>,
    buf: Vec<Point>,
    arrow_buf: Vec<(f64, u16)>,
    queue: SiteQueue,
    time: f64,
    mask: Option<Vec<bool>>,
    history: Option<History>,
    events: u64,
}

fn check_geometry(domain: &Domain, params: &Params, xi0: &Configuration) -> Result<()> {
    if xi0.lattice() != domain.lattice() {
        return Err(Error::DomainMismatch(
            "configuration and representation use different lattices".into(),
        ));
    }
    if params.neighborhood()? != *domain.neighborhood() {
        return Err(Error::DomainMismatch(
            "parameters and representation use different neighborhoods".into(),
        ));
    }
    Ok(())
}

impl<'a, S: EventSource + ?Sized> Engine<'a, S> {
    pub fn new(src: &'a S, params: &Params, xi0: &Configuration) -> Result<Self> {
        Self::with_options(src, params, xi0, EngineOptions::default())
    }

    pub fn with_options(
        src: &'a S,
        params: &Params,
        xi0: &Configuration,
        opts: EngineOptions,
    ) -> Result<Self> {
        let domain = src.domain();
        check_geometry(domain, params, xi0)?;
        let thin = src.thinning(params)?;
        if let Some(m) = &opts.mask {
            if m.len() != domain.len() {
                return Err(Error::DomainMismatch(
                    "mask length differs from the lattice".into(),
                ));
            }
        }
        let state = xi0.states().to_vec();
        let mut eng = Self {
            src,
            domain,
            thin,
            counts: xi0.counts(),
            slots: vec![NONE; state.len() * SLOTS],
            cache: vec![NONE; state.len() * SLOTS * CACHE],
            cache_len: vec![0; state.len() * SLOTS],
            buf: Vec::new(),
            arrow_buf: Vec::new(),
            queue: SiteQueue::new(state.len()),
            time: 0.0,
            mask: opts.mask,
            history: opts.record_history.then(|| History::new(&state)),
            state,
            events: 0,
        };
        for site in 0..eng.state.len() as u32 {
            eng.schedule_site(site, 0.0);
        }
        Ok(eng)
    }

    #[inline]
    fn active(&self, site: u32) -> bool {
        self.mask.as_ref().map_or(true, |m| m[site as usize])
    }

    #[inline]
    fn slot(site: u32, kind: StreamKind) -> usize {
        site as usize * SLOTS + kind.rank() as usize
    }

    /// Loads the next points of a slot (all arrows of the site for any
    /// arrow kind).
    fn fill(&mut self, site: u32, kind: StreamKind, after: f64, cut: f64) {
        let i = Self::slot(site, kind);
        let cache = &mut self.cache[i * CACHE..(i + 1) * CACHE];
        let n = match kind {
            StreamKind::Arrow(_) => {
                self.src.next_arrows(site, after, cut, &mut self.arrow_buf);
                let n = self.arrow_buf.len().min(CACHE);
                for (j, &(t, k)) in self.arrow_buf[..n].iter().rev().enumerate() {
                    cache[j] = order_key(t, site, StreamKind::Arrow(k));
                }
                n
            }
            _ => {
                self.src
                    .next_batch(Stream::new(site, kind), after, cut, &mut self.buf);
                let n = self.buf.len().min(CACHE);
                for (j, p) in self.buf[..n].iter().rev().enumerate() {
                    cache[j] = order_key(p.time, site, kind);
                }
                n
            }
        };
        self.cache_len[i] = n as u8;
        self.slots[i] = if n == 0 { NONE } else { cache[n - 1] };
    }

    /// Moves a slot past the point that just fired.
    fn advance(&mut self, site: u32, kind: StreamKind, time: f64, cut: f64) {
        let i = Self::slot(site, kind);
        let n = self.cache_len[i] as usize;
        if n > 1 {
            self.cache_len[i] -= 1;
            self.slots[i] = self.cache[i * CACHE + n - 2];
        } else {
            self.fill(site, kind, time, cut);
        }
    }

    /// Queues `site` under its earliest slot.
    fn requeue(&mut self, site: u32) {
        let i = site as usize;
        let min = *self.slots[i * SLOTS..(i + 1) * SLOTS]
            .iter()
            .min()
            .expect("nonempty");
        self.queue.set(site, (min != NONE).then_some(min));
    }

    fn schedule_site(&mut self, site: u32, after: f64) {
        if !self.active(site) {
            return;
        }
        let i = site as usize * SLOTS;
        self.slots[i..i + SLOTS].fill(NONE);
        let s = self.state[site as usize];
        if let Some(cut) = self.thin.arrow_cut(s) {
            if cut < 1.0 {
                self.fill(site, StreamKind::Arrow(0), after, cut);
            }
            self.fill(site, StreamKind::Cross, after, 0.0);
        } else if s == SiteState::Frozen {
            if let Some(cut) = self.thin.dot_cut {
                self.fill(site, StreamKind::Dot, after, cut);
            }
        }
        self.requeue(site);
    }

    fn set_state(&mut self, site: u32, to: SiteState, time: f64) -> (u32, SiteState, SiteState) {
        let from = self.state[site as usize];
        debug_assert!(
            is_allowed_transition(from, to, !self.thin.freeze),
            "forbidden transition {from:?} -> {to:?} at site {site}"
        );
        self.state[site as usize] = to;
        self.counts[from.index()] -= 1;
        self.counts[to.index()] += 1;
        if let Some(h) = &mut self.history {
            h.changes[site as usize].push((time, to));
        }
        self.schedule_site(site, time);
        (site, from, to)
    }

    /// Key of the next pending event.
    pub fn peek_key(&self) -> Option<u128> {
        self.queue.peek()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.peek_key().map(|k| f64::from_bits((k >> 64) as u64))
    }

    /// Processes the next pending event.
    pub fn step(&mut self) -> Option<Step> {
        let key = self.peek_key()?;
        let time = f64::from_bits((key >> 64) as u64);
        let low = key as u64;
        let site = (low >> 24) as u32;
        let rank = (low >> 16) as u8;
        let offset = low as u16;
        self.time = time;
        self.events += 1;
        let s = self.state[site as usize];
        let mut out = Step {
            time,
            site,
            kind: StreamKind::Cross,
            target: None,
            changed: None,
            blocked: false,
        };
        match rank {
            0 => {
                let kind = StreamKind::Arrow(offset);
                let target = self.domain.target(site, offset as usize);
                out.kind = kind;
                out.target = Some(target);
                if self.active(target) {
                    let t = self.state[target as usize];
                    match (s, t) {
                        (SiteState::Blue, SiteState::Free | SiteState::Frozen) => {
                            out.changed = Some(self.set_state(target, SiteState::Blue, time));
                        }
                        (SiteState::Red, SiteState::Free) => {
                            out.changed = Some(self.set_state(target, SiteState::Red, time));
                        }
                        (SiteState::Red, SiteState::Frozen) => out.blocked = true,
                        _ => {}
                    }
                }
                let cut = self
                    .thin
                    .arrow_cut(s)
                    .expect("arrows are scheduled for occupied sites only");
                self.advance(site, kind, time, cut);
                self.requeue(site);
            }
            1 => {
                let to = match s {
                    SiteState::Blue if self.thin.freeze => SiteState::Frozen,
                    _ => SiteState::Free,
                };
                out.changed = Some(self.set_state(site, to, time));
            }
            _ => {
                out.kind = StreamKind::Dot;
                out.changed = Some(self.set_state(site, SiteState::Free, time));
            }
        }
        Some(out)
    }

    /// Processes every event with time `<= t`.
    pub fn advance_to(&mut self, t: f64) {
        while self.peek_time().is_some_and(|s| s <= t) {
            self.step();
        }
        self.time = self.time.max(t);
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self, site: u32) -> SiteState {
        self.state[site as usize]
    }

    pub fn states(&self) -> &[SiteState] {
        &self.state
    }

    pub fn counts(&self) -> [usize; 4] {
        self.counts
    }

    pub fn events_processed(&self) -> u64 {
        self.events
    }

    pub fn thinning(&self) -> &Thinning {
        &self.thin
    }

    pub fn configuration(&self) -> Configuration {
        Configuration::from_states(self.domain.lattice(), self.state.clone())
            .expect("engine keeps a full lattice")
    }

    pub fn into_history(self) -> Option<History> {
        self.history
    }
}

/// Sampled observables of a forward run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub counts: Vec<[usize; 4]>,
    pub densities: Vec<[f64; 4]>,
    pub snapshots: Vec<(f64, Configuration)>,
    pub final_state: Configuration,
    pub history: Option<History>,
    pub events: u64,
    pub blocked: u64,
}

impl Trajectory {
    /// Whether species `s` is present at the last sample.
    pub fn survived(&self, s: SiteState) -> bool {
        self.counts.last().is_some_and(|c| c[s.index()] > 0)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Subset of the sample times at which to keep full configurations.
    pub snapshot_times: Vec<f64>,
    pub record_history: bool,
    pub mask: Option<Vec<bool>>,
}

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    let sorted = times.windows(2).all(|w| w[0] < w[1]);
    let inside = times.iter().all(|&t| (0.0..=horizon).contains(&t));
    if sorted && inside {
        Ok(())
    } else {
        Err(Error::UnsortedSampleTimes)
    }
}

/// Evolves `xi0` and samples densities at `sample_times` (after all events
/// at or before each time).
pub fn run<S: EventSource + ?Sized>(
    xi0: &Configuration,
    src: &S,
    params: &Params,
    sample_times: &[f64],
) -> Result<Trajectory> {
    run_with(xi0, src, params, sample_times, RunOptions::default())
}

pub fn run_with<S: EventSource + ?Sized>(
    xi0: &Configuration,
    src: &S,
    params: &Params,
    sample_times: &[f64],
    opts: RunOptions,
) -> Result<Trajectory> {
    check_times(sample_times, src.horizon())?;
    if opts
        .snapshot_times
        .iter()
        .any(|t| !sample_times.contains(t))
    {
        return Err(Error::param(
            "snapshot_times",
            "must be a subset of the sample times",
        ));
    }
    let mut eng = Engine::with_options(
        src,
        params,
        xi0,
        EngineOptions {
            mask: opts.mask,
            record_history: opts.record_history,
        },
    )?;
    let n = xi0.len() as f64;
    let mut traj = Trajectory {
        times: Vec::with_capacity(sample_times.len()),
        counts: Vec::with_capacity(sample_times.len()),
        densities: Vec::with_capacity(sample_times.len()),
        snapshots: Vec::new(),
        final_state: xi0.clone(),
        history: None,
        events: 0,
        blocked: 0,
    };
    for &t in sample_times {
        while eng.peek_time().is_some_and(|s| s <= t) {
            if eng.step().is_some_and(|st| st.blocked) {
                traj.blocked += 1;
            }
        }
        let c = eng.counts();
        traj.times.push(t);
        traj.counts.push(c);
        traj.densities.push(c.map(|k| k as f64 / n));
        if opts.snapshot_times.contains(&t) {
            traj.snapshots.push((t, eng.configuration()));
        }
    }
    traj.final_state = eng.configuration();
    traj.events = eng.events_processed();
    traj.history = eng.into_history();
    Ok(traj)
}

/// Finite-horizon survival estimate: the fraction of `replicas` runs in
/// which `species` is still present at `horizon`. Replica `r` uses seed
/// `base_seed + r` for both the representation and the initial state.
pub fn survival_probability(
    params: &Params,
    species: SiteState,
    initial: &InitialCondition,
    domain: &Arc<Domain>,
    horizon: f64,
    replicas: u64,
    base_seed: u64,
) -> Result<Estimate> {
    if replicas == 0 {
        return Err(Error::param("replicas", "must be >= 1"));
    }
    if !species.is_occupied() {
        return Err(Error::param("species", "must be 1 or 2"));
    }
    let alive: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let seed = base_seed.wrapping_add(r);
            let rep = build_events(seed, params, domain.clone(), horizon)?;
            let xi0 = make_initial(initial, seed, domain.lattice())?;
            let mut eng = Engine::new(&rep, params, &xi0)?;
            // a species that has died out never returns
            while eng.counts()[species.index()] > 0 && eng.peek_time().is_some_and(|t| t <= horizon)
            {
                eng.step();
            }
            Ok(eng.counts()[species.index()] > 0)
        })
        .collect::<Result<_>>()?;
    let k = alive.iter().filter(|&&a| a).count() as u64;
    Ok(Estimate::wilson(k, replicas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphical::{BaseRates, EventLog};
    use crate::lattice::Neighborhood;

    fn ring(n: usize) -> Arc<Domain> {
        Arc::new(Domain::new(Lattice::new(&[n]).unwrap(), Neighborhood::nearest(1)).unwrap())
    }

    fn thin(p: &Params) -> Thinning {
        Thinning::new(p, BaseRates::for_params(p)).unwrap()
    }

    #[test]
    fn apply_event_rules() {
        use SiteState::*;
        let d = ring(5);
        let p = Params::new(2.0, 1.0, 1.0, 1);
        let t = thin(&p);
        let mut xi =
            Configuration::from_states(d.lattice(), vec![Blue, Red, Free, Frozen, Free]).unwrap();
        // cross on blue freezes
        let cross = Event {
            time: 1.0,
            site: 0,
            kind: EventKind::Cross,
        };
        assert_eq!(
            apply_event(&mut xi.clone(), &cross, &t),
            Some((0, Blue, Frozen))
        );
        // blue-only arrow (coin below 0.5) from red to free: nothing
        let k = d.offset_to(1, 2).unwrap() as u16;
        let a = Event {
            time: 1.0,
            site: 1,
            kind: EventKind::Arrow {
                offset: k,
                target: 2,
                coin: 0.2,
            },
        };
        assert_eq!(apply_event(&mut xi.clone(), &a, &t), None);
        let a2 = Event {
            time: 1.0,
            site: 1,
            kind: EventKind::Arrow {
                offset: k,
                target: 2,
                coin: 0.8,
            },
        };
        assert_eq!(apply_event(&mut xi.clone(), &a2, &t), Some((2, Free, Red)));
        // red, both-species arrow, frozen target: nothing
        xi.set(2, Red);
        let k = d.offset_to(2, 3).unwrap() as u16;
        let a3 = Event {
            time: 1.0,
            site: 2,
            kind: EventKind::Arrow {
                offset: k,
                target: 3,
                coin: 0.9,
            },
        };
        assert_eq!(apply_event(&mut xi, &a3, &t), None);
        // instant thaw: cross on blue frees
        let ti = thin(&Params::new(2.0, 1.0, f64::INFINITY, 1));
        let mut b = Configuration::filled(d.lattice(), Blue);
        assert_eq!(apply_event(&mut b, &cross, &ti), Some((0, Blue, Free)));
    }

    #[test]
    fn initial_conditions() {
        let lat = Lattice::new(&[200, 200]).unwrap();
        let all2 = make_initial(&InitialCondition::All(SiteState::Red), 0, &lat).unwrap();
        assert_eq!(all2.count(SiteState::Red), lat.len());
        let single = make_initial(&InitialCondition::SingleSeed(SiteState::Blue), 0, &lat).unwrap();
        assert_eq!(single.count(SiteState::Blue), 1);
        assert_eq!(single.count(SiteState::Free), lat.len() - 1);
        let prod = make_initial(&InitialCondition::Product([0.0, 0.5, 0.5, 0.0]), 7, &lat).unwrap();
        let n = lat.len() as f64;
        let blue = prod.count(SiteState::Blue) as f64 / n;
        assert!(
            (blue - 0.5).abs() < 3.0 * (0.25 / n).sqrt(),
            "blue density {blue}"
        );
        assert_eq!(
            prod.count(SiteState::Blue) + prod.count(SiteState::Red),
            lat.len()
        );
        assert!(make_initial(&InitialCondition::Product([0.5, 0.5, 0.5, 0.0]), 0, &lat).is_err());
        assert_eq!(
            prod,
            make_initial(&InitialCondition::Product([0.0, 0.5, 0.5, 0.0]), 7, &lat).unwrap()
        );
    }

    #[test]
    fn initial_condition_parsing() {
        for s in ["all-1", "all-2", "single-seed(1)", "product(0,0.5,0.5,0)"] {
            let ic: InitialCondition = s.parse().unwrap();
            assert_eq!(ic.to_string().parse::<InitialCondition>().unwrap(), ic);
        }
        assert!("all-7".parse::<InitialCondition>().is_err());
        assert!("product(1,1,0,0)".parse::<InitialCondition>().is_err());
    }

    #[test]
    fn empty_run_is_identity() {
        let d = ring(6);
        let p = Params::new(1.0, 1.0, 1.0, 1);
        let log = EventLog::new(d.clone(), 1.0, BaseRates::for_params(&p)).unwrap();
        let xi0 = Configuration::from_states(
            d.lattice(),
            vec![
                SiteState::Blue,
                SiteState::Red,
                SiteState::Frozen,
                SiteState::Free,
                SiteState::Red,
                SiteState::Blue,
            ],
        )
        .unwrap();
        let tr = run(&xi0, &log, &p, &[0.0, 1.0]).unwrap();
        assert_eq!(tr.final_state, xi0);
    }

    #[test]
    fn rejects_bad_sample_times() {
        let d = ring(6);
        let p = Params::new(1.0, 1.0, 1.0, 1);
        let rep = build_events(0, &p, d.clone(), 2.0).unwrap();
        let xi0 = Configuration::filled(d.lattice(), SiteState::Red);
        assert!(matches!(
            run(&xi0, &rep, &p, &[1.0, 0.5]),
            Err(Error::UnsortedSampleTimes)
        ));
        assert!(matches!(
            run(&xi0, &rep, &p, &[3.0]),
            Err(Error::UnsortedSampleTimes)
        ));
    }

    #[test]
    fn engine_matches_naive_fold() {
        let d = ring(20);
        for seed in 0..40 {
            let l1 = 0.5 + (seed % 7) as f64 * 0.5;
            let l2 = 0.5 + (seed % 5) as f64 * 0.6;
            let g = [0.05, 0.5, 5.0, f64::INFINITY][seed as usize % 4];
            let p = Params::new(l1, l2, g, 1);
            let rep = build_events(seed, &p, d.clone(), 5.0).unwrap();
            let xi0 =
                make_initial(&InitialCondition::Product([0.25; 4]), seed, d.lattice()).unwrap();
            let times = [1.0, 2.5, 5.0];
            let tr = run(&xi0, &rep, &p, &times).unwrap();
            let t = rep.thinning(&p).unwrap();
            assert_eq!(
                tr.final_state,
                naive_fold(&xi0, &rep, &t, 5.0),
                "seed {seed}"
            );
            let mid = naive_fold(&xi0, &rep, &t, 2.5);
            assert_eq!(tr.counts[1], mid.counts());
        }
    }

    #[test]
    fn pure_death_red_dies() {
        let d = ring(10);
        let p = Params::new(1.0, 0.0, 1.0, 1);
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
        let again = survival_probability(
            &p,
            SiteState::Red,
            &InitialCondition::SingleSeed(SiteState::Red),
            &d,
            20.0,
            1000,
            0,
        )
        .unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn blue_without_births_dies() {
        let d = ring(100);
        let p = Params::new(0.0, 1.0, 1.0, 1);
        let e = survival_probability(
            &p,
            SiteState::Blue,
            &InitialCondition::All(SiteState::Blue),
            &d,
            20.0,
            100,
            3,
        )
        .unwrap();
        assert!(e.p < 0.01);
    }
}
