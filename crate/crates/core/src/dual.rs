//! Dual paths, the ancestor hierarchy and color determination.
//!
//! A dual path starts at a space-time point `(x, t)`, moves down in time,
//! jumps backwards across arrows (target to source) and dies at crosses.
//! Members of the dual are ordered by the priority with which they decide
//! the color of `(x, t)`: the straight-down lineage first, then the arrows
//! into the current site from the earliest (in forward time) to the latest,
//! each expanded depth-first. An earlier birth onto an empty site wins
//! over a later one, which is why earlier arrows rank higher.
//!
//! Times passed to this module are forward times; dual times are
//! `t - forward`.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::Serialize;

use crate::forward::History;
use crate::graphical::{ArrowLabel, EventSource, Point, Stream, StreamKind, Thinning};
use crate::lattice::{Configuration, Domain, Params, SiteState};
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Where the color procedure gets frozen/free information from.
#[derive(Clone, Copy, Debug)]
pub enum FrozenInfo<'h> {
    /// Read from a recorded forward run on the same representation.
    Forward(&'h History),
    /// Derive it from the dual itself (the lower trees).
    Recursive,
}

/// An arrow into some site, seen from its target.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Incoming {
    time: f64,
    source: u32,
    coin: f64,
}

fn incoming<S: EventSource + ?Sized>(src: &S, x: u32, lo: f64, hi: f64, cut: f64) -> Vec<Incoming> {
    let d = src.domain();
    let mut v: Vec<Incoming> = (0..d.card())
        .flat_map(|k| {
            let y = d.source(x, k);
            src.points_in(Stream::new(y, StreamKind::Arrow(k as u16)), lo, hi, cut)
                .into_iter()
                .map(move |p| Incoming {
                    time: p.time,
                    source: y,
                    coin: p.coin,
                })
        })
        .filter(|a| a.time < hi)
        .collect();
    v.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.source.cmp(&b.source)));
    v
}

fn last_cross<S: EventSource + ?Sized>(src: &S, x: u32, before: f64) -> Option<f64> {
    src.prev_before(Stream::new(x, StreamKind::Cross), before, 0.0)
        .map(|p| p.time)
}

fn first_dot<S: EventSource + ?Sized>(
    src: &S,
    thin: &Thinning,
    x: u32,
    after: f64,
) -> Option<Point> {
    thin.dot_cut
        .and_then(|cut| src.next_after(Stream::new(x, StreamKind::Dot), after, cut))
}

/// Color determination by walking the ancestor hierarchy.
pub struct Dual<'a, S: EventSource + ?Sized> {
    src: &'a S,
    thin: Thinning,
    xi0: &'a Configuration,
    frozen: FrozenInfo<'a>,
    memo: HashMap<(u32, u64), SiteState>,
}

impl<'a, S: EventSource + ?Sized> Dual<'a, S> {
    pub fn new(
        src: &'a S,
        params: &Params,
        xi0: &'a Configuration,
        frozen: FrozenInfo<'a>,
    ) -> Result<Self> {
        if xi0.lattice() != src.domain().lattice() {
            return Err(Error::DomainMismatch(
                "configuration and representation use different lattices".into(),
            ));
        }
        Ok(Self {
            thin: src.thinning(params)?,
            src,
            xi0,
            frozen,
            memo: HashMap::new(),
        })
    }

    /// State of `x` just before time `t`.
    ///
    /// Since the last cross at `x` (or time 0) the site holds no particle
    /// until its first successful birth, so the first arrow in forward time
    /// whose source is occupied and which the target can accept decides the
    /// color. The source colors are themselves dual queries.
    pub fn color(&mut self, x: u32, t: f64) -> SiteState {
        if let Some(&c) = self.memo.get(&(x, t.to_bits())) {
            return c;
        }
        let c = self.compute(x, t);
        self.memo.insert((x, t.to_bits()), c);
        c
    }

    /// Sites whose color has been queried so far.
    pub fn visited_sites(&self) -> std::collections::BTreeSet<u32> {
        self.memo.keys().map(|&(x, _)| x).collect()
    }

    fn compute(&mut self, x: u32, t: f64) -> SiteState {
        use SiteState::*;
        let sigma = last_cross(self.src, x, t);
        let after_cross = match sigma {
            None => {
                let s0 = self.xi0.get(x);
                if s0.is_occupied() {
                    return s0;
                }
                s0
            }
            Some(s) => match self.color(x, s) {
                Blue if self.thin.freeze => Frozen,
                Frozen => Frozen,
                _ => Free,
            },
        };
        let lo = sigma.unwrap_or(0.0);
        // first accepted dot after the cross; it thaws a frozen site
        let thaw = first_dot(self.src, &self.thin, x, lo).map(|p| p.time);
        let frozen_at = |this: &Self, s: f64| match this.frozen {
            FrozenInfo::Forward(h) => h.state_at(x, s) == Frozen,
            FrozenInfo::Recursive => after_cross == Frozen && thaw.map_or(true, |d| d > s),
        };
        for a in incoming(self.src, x, lo, t, self.thin.any_arrow_cut()) {
            let label = self.thin.label(a.coin);
            let c = self.color(a.source, a.time);
            if c == Blue && label.usable_by(Blue) {
                return Blue;
            }
            if c == Red && label.usable_by(Red) && !frozen_at(self, a.time) {
                return Red;
            }
        }
        match self.frozen {
            FrozenInfo::Forward(h) => {
                if h.state_at(x, t) == Frozen {
                    Frozen
                } else {
                    Free
                }
            }
            FrozenInfo::Recursive => {
                if after_cross == Frozen && thaw.map_or(true, |d| d >= t) {
                    Frozen
                } else {
                    Free
                }
            }
        }
    }
}

/// Color of `(x, t)` from the dual; agrees with the forward run at time `t`.
pub fn determine_color<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    xi0: &Configuration,
    x: u32,
    t: f64,
    frozen: FrozenInfo<'_>,
) -> Result<SiteState> {
    if !(0.0..=src.horizon()).contains(&t) {
        return Err(Error::param("t", "must lie within the horizon"));
    }
    Ok(Dual::new(src, params, xi0, frozen)?.color(x, t))
}

/// Variant of [`determine_color`] reading frozen states from an optional
/// forward history, failing when it is absent.
pub fn determine_color_with<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    xi0: &Configuration,
    x: u32,
    t: f64,
    history: Option<&History>,
) -> Result<SiteState> {
    let h = history.ok_or(Error::MissingForwardStates)?;
    determine_color(src, params, xi0, x, t, FrozenInfo::Forward(h))
}

/// Walks dual paths in hierarchy order.
struct Walker<'a, S: EventSource + ?Sized> {
    src: &'a S,
    cut: f64,
}

impl<S: EventSource + ?Sized> Walker<'_, S> {
    /// Time of the last cross at `z` in `(floor, tau)`, if any, and the
    /// arrows into `z` above it (and above `floor`), earliest first.
    fn segment(&self, z: u32, tau: f64, floor: f64) -> (Option<f64>, Vec<Incoming>) {
        let c = last_cross(self.src, z, tau).filter(|&c| c > floor);
        let lo = c.unwrap_or(floor);
        (c, incoming(self.src, z, lo, tau, self.cut))
    }
}

fn arrow_cut(thin: &Thinning) -> f64 {
    thin.any_arrow_cut()
}

/// `xi-hat_s^{(x,t)}`: sites reached by dual paths from `(x, t)` at dual
/// time `s`, in hierarchy order (first = distinguished particle).
pub fn dual_ancestors<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    x: u32,
    t: f64,
    s: f64,
) -> Result<Vec<u32>> {
    if !(0.0 <= s && s <= t && t <= src.horizon()) {
        return Err(Error::param("s", "need 0 <= s <= t <= horizon"));
    }
    let thin = src.thinning(params)?;
    let w = Walker {
        src,
        cut: arrow_cut(&thin),
    };
    let floor = t - s;
    let mut seen_nodes: HashSet<(u32, u64)> = HashSet::new();
    let mut seen_sites: HashSet<u32> = HashSet::new();
    let mut out = Vec::new();
    // explicit stack keeps deep trees off the call stack; children are
    // pushed in reverse so they pop in priority order
    let mut stack = vec![(x, t)];
    while let Some((z, tau)) = stack.pop() {
        if !seen_nodes.insert((z, tau.to_bits())) {
            continue;
        }
        let (cross, arrows) = w.segment(z, tau, floor);
        for a in arrows.iter().rev() {
            stack.push((a.source, a.time));
        }
        if cross.is_none() && seen_sites.insert(z) {
            out.push(z);
        }
    }
    Ok(out)
}

/// Backward sweep of the dual as a plain set (no order), for cross-checks.
pub fn dual_set_sweep<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    x: u32,
    t: f64,
    s: f64,
) -> Result<Vec<u32>> {
    let thin = src.thinning(params)?;
    let cut = arrow_cut(&thin);
    let d = src.domain();
    let mut events = src.events_in_order(t - s, t);
    events.retain(|e| e.time < t);
    let mut alive = vec![false; d.len()];
    alive[x as usize] = true;
    for e in events.iter().rev() {
        match e.kind {
            crate::graphical::EventKind::Cross => alive[e.site as usize] = false,
            crate::graphical::EventKind::Arrow { target, coin, .. }
                if coin >= cut && alive[target as usize] =>
            {
                alive[e.site as usize] = true
            }
            _ => {}
        }
    }
    Ok((0..d.len() as u32).filter(|&y| alive[y as usize]).collect())
}

/// One arrow crossed by the distinguished particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArrowRecord {
    /// Start site `z_n`.
    pub source: u32,
    pub target: u32,
    /// Forward time of the arrow.
    pub time: f64,
    /// Dual time `t - time`.
    pub dual_time: f64,
    pub label: ArrowLabel,
    /// Forward time of the last cross at `z_n` below the arrow.
    pub cross_below: Option<f64>,
    /// Whether `z_n` is frozen when the arrow fires.
    pub source_frozen: bool,
}

impl ArrowRecord {
    /// Dual time of the first cross under the arrow's start.
    pub fn sigma_dual(&self, t: f64) -> Option<f64> {
        self.cross_below.map(|c| t - c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistinguishedPath {
    pub root: u32,
    pub t: f64,
    /// `beta_n` in increasing dual time.
    pub arrows: Vec<ArrowRecord>,
    /// `N(x, t)`: arrows starting at a frozen site.
    pub frozen_visits: usize,
    /// Forward time at which the lineage died, if it does not reach 0.
    pub died_at: Option<f64>,
}

/// Memoized deepest reach of dual paths.
struct Reach<'a, S: EventSource + ?Sized> {
    walker: Walker<'a, S>,
    floor: f64,
    memo: HashMap<(u32, u64), (f64, Option<Incoming>)>,
}

impl<S: EventSource + ?Sized> Reach<'_, S> {
    /// Smallest forward time reachable from `(z, tau)` and the first child
    /// (in hierarchy order) achieving it; `None` means straight down.
    fn deepest(&mut self, z: u32, tau: f64) -> (f64, Option<Incoming>) {
        if let Some(&r) = self.memo.get(&(z, tau.to_bits())) {
            return r;
        }
        // iterative post-order over the subtree so deep trees cannot
        // overflow the stack
        let mut stack: Vec<(u32, f64, Option<Vec<Incoming>>)> = vec![(z, tau, None)];
        while let Some((node, time, kids)) = stack.pop() {
            if self.memo.contains_key(&(node, time.to_bits())) {
                continue;
            }
            match kids {
                None => {
                    let (cross, arrows) = self.walker.segment(node, time, self.floor);
                    if cross.is_none() {
                        self.memo.insert((node, time.to_bits()), (self.floor, None));
                        continue;
                    }
                    let pending: Vec<(u32, f64)> = arrows
                        .iter()
                        .filter(|a| !self.memo.contains_key(&(a.source, a.time.to_bits())))
                        .map(|a| (a.source, a.time))
                        .collect();
                    stack.push((node, time, Some(arrows)));
                    for (y, s) in pending {
                        stack.push((y, s, None));
                    }
                }
                Some(arrows) => {
                    let cross =
                        last_cross(self.walker.src, node, time).expect("segment had a cross");
                    let mut best = (cross, None);
                    for a in &arrows {
                        let (d, _) = self.memo[&(a.source, a.time.to_bits())];
                        if d < best.0 {
                            best = (d, Some(*a));
                            if d <= self.floor {
                                break;
                            }
                        }
                    }
                    self.memo.insert((node, time.to_bits()), best);
                }
            }
        }
        self.memo[&(z, tau.to_bits())]
    }
}

/// Follows the distinguished particle of `(x, t)`: the first ancestor (in
/// hierarchy order) whose path reaches time 0, or, if the dual dies out,
/// the path that survives longest.
///
/// `frozen_visits` needs the forward states of the arrow sources.
pub fn distinguished_path<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    x: u32,
    t: f64,
    history: Option<&History>,
) -> Result<DistinguishedPath> {
    let h = history.ok_or(Error::MissingForwardStates)?;
    if !(0.0..=src.horizon()).contains(&t) {
        return Err(Error::param("t", "must lie within the horizon"));
    }
    let thin = src.thinning(params)?;
    let mut reach = Reach {
        walker: Walker {
            src,
            cut: arrow_cut(&thin),
        },
        floor: 0.0,
        memo: HashMap::new(),
    };
    let (deepest, _) = reach.deepest(x, t);
    let mut arrows = Vec::new();
    let (mut z, mut tau) = (x, t);
    while let (_, Some(a)) = reach.deepest(z, tau) {
        arrows.push(ArrowRecord {
            source: a.source,
            target: z,
            time: a.time,
            dual_time: t - a.time,
            label: thin.label(a.coin),
            cross_below: last_cross(src, a.source, a.time),
            source_frozen: h.state_at(a.source, a.time) == SiteState::Frozen,
        });
        z = a.source;
        tau = a.time;
    }
    Ok(DistinguishedPath {
        root: x,
        t,
        frozen_visits: arrows.iter().filter(|a| a.source_frozen).count(),
        arrows,
        died_at: (deepest > 0.0).then_some(deepest),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowerTree {
    pub n: usize,
    pub root: u32,
    /// Forward time of the root cross.
    pub root_time: f64,
    pub survives: bool,
    pub dot_free: bool,
    pub favorable: bool,
}

/// Lower trees rooted at the crosses under each arrow of `path`.
///
/// A tree survives when some path from its root reaches dual time
/// `dual_horizon` (forward time `t - dual_horizon`, clamped at 0); `None`
/// uses `t`. Arrows with no cross below them get no tree.
pub fn lower_trees<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    path: &DistinguishedPath,
    dual_horizon: Option<f64>,
) -> Result<Vec<LowerTree>> {
    let thin = src.thinning(params)?;
    let floor = (path.t - dual_horizon.unwrap_or(path.t)).max(0.0);
    let mut reach = Reach {
        walker: Walker {
            src,
            cut: arrow_cut(&thin),
        },
        floor,
        memo: HashMap::new(),
    };
    let mut out = Vec::new();
    for (n, a) in path.arrows.iter().enumerate() {
        let Some(sigma) = a.cross_below else { continue };
        let survives = sigma > floor && reach.deepest(a.source, sigma).0 <= floor;
        let dot_free = first_dot(src, &thin, a.source, sigma).map_or(true, |d| d.time >= a.time);
        out.push(LowerTree {
            n: n + 1,
            root: a.source,
            root_time: sigma,
            survives,
            dot_free,
            favorable: survives && dot_free,
        });
    }
    Ok(out)
}

/// Empirical chance that a cross comes before a dot on a fresh segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FavorabilityCheck {
    pub lambda: f64,
    pub gamma: f64,
    pub samples: u64,
    pub empirical: f64,
    pub std_error: f64,
    /// `P(Exp(1) < Exp(gamma))`.
    pub dot_free_closed_form: f64,
    /// `P(Exp(lambda) < Exp(gamma))`.
    pub lambda_race_closed_form: f64,
    /// `lambda / (gamma (lambda + gamma))`; exceeds 1 for small `gamma`.
    pub printed_expression: f64,
}

/// Races the first cross against the first dot on `samples` independent
/// site streams.
pub fn favorability_rate_check(
    lambda: f64,
    gamma: f64,
    samples: u64,
    seed: u64,
) -> Result<FavorabilityCheck> {
    if samples < 1000 {
        return Err(Error::param("samples", "must be >= 1000"));
    }
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", "must be > 0"));
    }
    let wins = if gamma.is_infinite() {
        0
    } else {
        (0..samples)
            .filter(|&i| {
                let mut cross = CounterRng::from_words(&[seed, 0xC055, i]);
                let mut dot = CounterRng::from_words(&[seed, 0xD07, i]);
                cross.exp(1.0) < dot.exp(gamma)
            })
            .count() as u64
    };
    let p = wins as f64 / samples as f64;
    let g = gamma;
    Ok(FavorabilityCheck {
        lambda,
        gamma,
        samples,
        empirical: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        dot_free_closed_form: 1.0 / (1.0 + g),
        lambda_race_closed_form: lambda / (lambda + g),
        printed_expression: lambda / (g * (lambda + g)),
    })
}

/// Dual tree node for export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualNode {
    pub site: u32,
    /// Dual time.
    pub s: f64,
    pub parent: Option<usize>,
    /// Position among the parent's children in hierarchy order.
    pub order: usize,
}

/// Branch points of the dual tree from `(x, t)` down to dual time `s_max`,
/// in hierarchy (depth-first) order, each branch point listed once.
pub fn dual_tree<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    x: u32,
    t: f64,
    s_max: f64,
) -> Result<Vec<DualNode>> {
    let thin = src.thinning(params)?;
    let w = Walker {
        src,
        cut: arrow_cut(&thin),
    };
    let floor = (t - s_max).max(0.0);
    let mut nodes = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![(x, t, None::<usize>, 0usize)];
    while let Some((z, tau, parent, order)) = stack.pop() {
        if !seen.insert((z, tau.to_bits())) {
            continue;
        }
        let me = nodes.len();
        nodes.push(DualNode {
            site: z,
            s: t - tau,
            parent,
            order,
        });
        let (_, arrows) = w.segment(z, tau, floor);
        for (k, a) in arrows.iter().enumerate().rev() {
            stack.push((a.source, a.time, Some(me), k));
        }
    }
    Ok(nodes)
}

/// Writes `node site s parent-order` lines (`parent-order` is
/// `parent:order`, with `-` for the root).
pub fn write_dual_tree<W: Write>(nodes: &[DualNode], mut w: W) -> Result<()> {
    for (i, n) in nodes.iter().enumerate() {
        match n.parent {
            Some(p) => writeln!(w, "{i} {} {:.16e} {p}:{}", n.site, n.s, n.order)?,
            None => writeln!(w, "{i} {} {:.16e} -", n.site, n.s)?,
        }
    }
    Ok(())
}

/// Helper for callers that only hold a domain: every site's color at `t`.
pub fn colors_at<S: EventSource + ?Sized>(
    src: &S,
    params: &Params,
    xi0: &Configuration,
    t: f64,
    frozen: FrozenInfo<'_>,
) -> Result<Vec<SiteState>> {
    let mut dual = Dual::new(src, params, xi0, frozen)?;
    let d: &Domain = src.domain();
    Ok((0..d.len() as u32).map(|x| dual.color(x, t)).collect())
}
