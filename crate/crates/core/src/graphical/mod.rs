//! The Harris graphical representation.
//!
//! Per site there is one arrow stream for each neighborhood offset (rate
//! `lambda* / card N` with `lambda* = max(lambda1, lambda2)`), a cross
//! stream (rate 1) and a dot stream (rate `gamma`). Every point carries a
//! uniform coin. Variants with smaller rates read the coins as thinning
//! marks, so one representation serves a whole parameter sweep.
//!
//! [`GraphicalRep`] never stores events: each stream is cut into buckets of
//! fixed width and bucket `b` is drawn from a counter-based generator keyed
//! by `(seed, site, kind, b)`. The arrow streams of a site are generated
//! together as one stream of rate `lambda*` whose points carry a uniform
//! offset mark.
//! Inside a bucket, points are produced in decreasing coin order (a marked
//! Poisson process on time x coin), so a reader that only needs coins above
//! a cutoff stops drawing as soon as the coin falls below it.
//! [`EventLog`] holds an explicit, hand-built or imported set of events
//! behind the same [`EventSource`] interface.

mod log;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lattice::{Domain, Params, SiteState};
use crate::rng::CounterRng;
use crate::{Error, Result};

pub use log::EventLog;

/// Which stream of a site an event belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamKind {
    /// Arrows leaving the site along the given offset index.
    Arrow(u16),
    Cross,
    Dot,
}

impl StreamKind {
    /// Tie-break rank: arrows before crosses before dots.
    #[inline]
    pub fn rank(self) -> u8 {
        match self {
            StreamKind::Arrow(_) => 0,
            StreamKind::Cross => 1,
            StreamKind::Dot => 2,
        }
    }

    #[inline]
    pub fn offset(self) -> u16 {
        match self {
            StreamKind::Arrow(k) => k,
            _ => 0,
        }
    }

    #[inline]
    fn code(self) -> u64 {
        ((self.rank() as u64) << 16) | self.offset() as u64
    }

    /// Slot of this kind among the `card + 2` streams of a site.
    #[inline]
    pub fn slot(self, card: usize) -> usize {
        match self {
            StreamKind::Arrow(k) => k as usize,
            StreamKind::Cross => card,
            StreamKind::Dot => card + 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stream {
    pub site: u32,
    pub kind: StreamKind,
}

impl Stream {
    pub fn new(site: u32, kind: StreamKind) -> Self {
        Self { site, kind }
    }
}

/// One point of a stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub time: f64,
    pub coin: f64,
}

/// Global event order: time, then site, kind rank and offset.
#[inline]
pub fn order_key(time: f64, site: u32, kind: StreamKind) -> u128 {
    debug_assert!(time >= 0.0);
    ((time.to_bits() as u128) << 64)
        | ((site as u128) << 24)
        | ((kind.rank() as u128) << 16)
        | kind.offset() as u128
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    Arrow { offset: u16, target: u32, coin: f64 },
    Cross,
    Dot { coin: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: u32,
    pub kind: EventKind,
}

impl Event {
    pub fn stream_kind(&self) -> StreamKind {
        match self.kind {
            EventKind::Arrow { offset, .. } => StreamKind::Arrow(offset),
            EventKind::Cross => StreamKind::Cross,
            EventKind::Dot { .. } => StreamKind::Dot,
        }
    }

    pub fn key(&self) -> u128 {
        order_key(self.time, self.site, self.stream_kind())
    }

    pub fn coin(&self) -> f64 {
        match self.kind {
            EventKind::Arrow { coin, .. } | EventKind::Dot { coin } => coin,
            EventKind::Cross => 0.0,
        }
    }
}

/// Which species may use an arrow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrowLabel {
    Both,
    BlueOnly,
    RedOnly,
    /// Beyond both birth rates of a thinned variant.
    Unused,
}

impl ArrowLabel {
    pub fn usable_by(self, s: SiteState) -> bool {
        matches!(
            (self, s),
            (ArrowLabel::Both, SiteState::Blue | SiteState::Red)
                | (ArrowLabel::BlueOnly, SiteState::Blue)
                | (ArrowLabel::RedOnly, SiteState::Red)
        )
    }
}

/// Label of an arrow with coin `u` when arrows run at `max(lambda1, lambda2)`.
///
/// For `lambda1 >= lambda2` the arrow is blue-only with probability
/// `(lambda1 - lambda2) / lambda1`, otherwise usable by both species; the
/// case `lambda1 < lambda2` is the mirror image with red-only arrows.
pub fn arrow_species_label(u: f64, lambda1: f64, lambda2: f64) -> ArrowLabel {
    if lambda1 >= lambda2 {
        if u < (lambda1 - lambda2) / lambda1 {
            ArrowLabel::BlueOnly
        } else {
            ArrowLabel::Both
        }
    } else if u < (lambda2 - lambda1) / lambda2 {
        ArrowLabel::RedOnly
    } else {
        ArrowLabel::Both
    }
}

/// Rates the streams of a representation are generated at.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseRates {
    /// `lambda*`, total arrow rate per site (split evenly over offsets).
    pub arrow: f64,
    /// Dot rate; zero when no variant ever thaws gradually.
    pub dot: f64,
}

impl BaseRates {
    pub fn for_params(params: &Params) -> Self {
        Self::covering(std::slice::from_ref(params))
    }

    /// Smallest base rates that every variant can be thinned from.
    pub fn covering(variants: &[Params]) -> Self {
        let arrow = variants.iter().map(|p| p.max_lambda()).fold(0.0, f64::max);
        let dot = variants
            .iter()
            .filter(|p| p.gamma.is_finite())
            .map(|p| p.gamma)
            .fold(0.0, f64::max);
        Self { arrow, dot }
    }
}

/// How one parameter variant reads the shared coins: a point is used when
/// its coin is at least the relevant cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thinning {
    pub blue_cut: f64,
    pub red_cut: f64,
    /// `None` for the instant-thaw variant, which never needs dots.
    pub dot_cut: Option<f64>,
    /// Whether a cross on a blue site leaves it frozen.
    pub freeze: bool,
}

impl Thinning {
    pub fn new(params: &Params, base: BaseRates) -> Result<Self> {
        params.validate()?;
        let tol = 1e-12 * base.arrow.max(1.0);
        if params.max_lambda() > base.arrow + tol {
            return Err(Error::param(
                "lambda",
                format!(
                    "variant rate {} exceeds the representation's {}",
                    params.max_lambda(),
                    base.arrow
                ),
            ));
        }
        let cut = |l: f64| {
            if base.arrow > 0.0 {
                ((base.arrow - l) / base.arrow).max(0.0)
            } else {
                1.0
            }
        };
        let dot_cut = if params.instant_thaw() {
            None
        } else {
            if params.gamma > base.dot * (1.0 + 1e-12) {
                return Err(Error::param(
                    "gamma",
                    format!(
                        "variant rate {} exceeds the representation's {}",
                        params.gamma, base.dot
                    ),
                ));
            }
            Some(((base.dot - params.gamma) / base.dot).max(0.0))
        };
        Ok(Self {
            blue_cut: cut(params.lambda1),
            red_cut: cut(params.lambda2),
            dot_cut,
            freeze: !params.instant_thaw(),
        })
    }

    pub fn label(&self, u: f64) -> ArrowLabel {
        match (u >= self.blue_cut, u >= self.red_cut) {
            (true, true) => ArrowLabel::Both,
            (true, false) => ArrowLabel::BlueOnly,
            (false, true) => ArrowLabel::RedOnly,
            (false, false) => ArrowLabel::Unused,
        }
    }

    /// Cutoff for arrows leaving a site in state `s`, if it can give birth.
    #[inline]
    pub fn arrow_cut(&self, s: SiteState) -> Option<f64> {
        match s {
            SiteState::Blue => Some(self.blue_cut),
            SiteState::Red => Some(self.red_cut),
            _ => None,
        }
    }

    /// Cutoff below which an arrow is of no use to either species.
    pub fn any_arrow_cut(&self) -> f64 {
        self.blue_cut.min(self.red_cut)
    }

    #[inline]
    pub fn dot_applies(&self, u: f64) -> bool {
        matches!(self.dot_cut, Some(c) if u >= c)
    }
}

/// Random access to the points of a graphical representation.
pub trait EventSource: Sync {
    fn domain(&self) -> &Domain;
    fn horizon(&self) -> f64;
    fn base_rates(&self) -> BaseRates;

    /// First point with `time > after` and `coin >= cut`.
    fn next_after(&self, stream: Stream, after: f64, cut: f64) -> Option<Point>;

    /// Last point with `time < before` and `coin >= cut`.
    fn prev_before(&self, stream: Stream, before: f64, cut: f64) -> Option<Point>;

    /// Points with `lo < time <= hi` and `coin >= cut`, in time order.
    fn points_in(&self, stream: Stream, lo: f64, hi: f64, cut: f64) -> Vec<Point>;

    /// Clears `out` and fills it with the first point after `after`
    /// followed by zero or more of its successors, in time order.
    fn next_batch(&self, stream: Stream, after: f64, cut: f64, out: &mut Vec<Point>) {
        out.clear();
        out.extend(self.next_after(stream, after, cut));
    }

    /// Like [`EventSource::next_batch`] over all arrow streams of `site`
    /// at once; entries are `(time, offset)`.
    fn next_arrows(&self, site: u32, after: f64, cut: f64, out: &mut Vec<(f64, u16)>) {
        out.clear();
        let best = (0..self.domain().card() as u16)
            .filter_map(|k| {
                self.next_after(Stream::new(site, StreamKind::Arrow(k)), after, cut)
                    .map(|p| (p.time, k))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        out.extend(best);
    }

    fn thinning(&self, params: &Params) -> Result<Thinning> {
        Thinning::new(params, self.base_rates())
    }

    /// Every event with `lo < time <= hi`, merged into global order.
    fn events_in_order(&self, lo: f64, hi: f64) -> Vec<Event> {
        let domain = self.domain();
        let hi = hi.min(self.horizon());
        let mut out = Vec::new();
        if !(hi > lo) {
            return out;
        }
        for site in 0..domain.len() as u32 {
            for k in 0..domain.card() {
                let target = domain.target(site, k);
                let s = Stream::new(site, StreamKind::Arrow(k as u16));
                out.extend(self.points_in(s, lo, hi, 0.0).into_iter().map(|p| Event {
                    time: p.time,
                    site,
                    kind: EventKind::Arrow {
                        offset: k as u16,
                        target,
                        coin: p.coin,
                    },
                }));
            }
            out.extend(
                self.points_in(Stream::new(site, StreamKind::Cross), lo, hi, 0.0)
                    .into_iter()
                    .map(|p| Event {
                        time: p.time,
                        site,
                        kind: EventKind::Cross,
                    }),
            );
            out.extend(
                self.points_in(Stream::new(site, StreamKind::Dot), lo, hi, 0.0)
                    .into_iter()
                    .map(|p| Event {
                        time: p.time,
                        site,
                        kind: EventKind::Dot { coin: p.coin },
                    }),
            );
        }
        out.sort_by_key(|e| e.key());
        out
    }
}

/// Stream code of the merged arrow streams.
const ARROWS_CODE: u64 = 0xFFFF;

/// Expected number of points per bucket; keeps per-query work constant.
const BUCKET_MEAN: f64 = 4.0;

#[derive(Clone, Copy, Debug)]
struct BucketSpec {
    rate: f64,
    width: f64,
    mean: f64,
}

impl BucketSpec {
    fn new(rate: f64, min_width: f64) -> Self {
        if rate <= 0.0 {
            return Self {
                rate: 0.0,
                width: 1.0,
                mean: 0.0,
            };
        }
        let width = (BUCKET_MEAN / rate).max(min_width);
        Self {
            rate,
            width,
            mean: rate * width,
        }
    }
}

/// Lazily generated graphical representation keyed by a seed.
#[derive(Clone, Debug)]
pub struct GraphicalRep {
    seed: u64,
    domain: Arc<Domain>,
    horizon: f64,
    base: BaseRates,
    /// All arrow streams of a site together.
    arrows: BucketSpec,
    card: u64,
    crosses: BucketSpec,
    dots: BucketSpec,
}

/// Builds the representation for a single parameter set.
pub fn build_events(
    seed: u64,
    params: &Params,
    domain: Arc<Domain>,
    horizon: f64,
) -> Result<GraphicalRep> {
    params.validate()?;
    if params.lambda1 == 0.0 && params.lambda2 == 0.0 {
        return Err(Error::param(
            "lambda",
            "lambda1 and lambda2 cannot both be zero",
        ));
    }
    GraphicalRep::with_base(seed, domain, horizon, BaseRates::for_params(params))
}

impl GraphicalRep {
    pub fn with_base(
        seed: u64,
        domain: Arc<Domain>,
        horizon: f64,
        base: BaseRates,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::param("horizon", "must be finite and > 0"));
        }
        if !(base.arrow > 0.0) || !base.arrow.is_finite() {
            return Err(Error::param("lambda", "arrow rate must be finite and > 0"));
        }
        if !(base.dot >= 0.0) || !base.dot.is_finite() {
            return Err(Error::param("gamma", "dot rate must be finite"));
        }
        Ok(Self {
            seed,
            horizon,
            base,
            arrows: BucketSpec::new(base.arrow, 0.0),
            card: domain.card() as u64,
            crosses: BucketSpec::new(1.0, 0.0),
            // at high thaw rates heavily thinned variants would otherwise
            // walk through many near-empty buckets
            dots: BucketSpec::new(base.dot, 1.0),
            domain,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn domain_arc(&self) -> &Arc<Domain> {
        &self.domain
    }

    fn spec(&self, kind: StreamKind) -> BucketSpec {
        match kind {
            StreamKind::Arrow(_) => self.arrows,
            StreamKind::Cross => self.crosses,
            StreamKind::Dot => self.dots,
        }
    }

    /// Rate of a single stream.
    pub fn stream_rate(&self, kind: StreamKind) -> f64 {
        match kind {
            StreamKind::Arrow(_) => self.arrows.rate / self.card as f64,
            _ => self.spec(kind).rate,
        }
    }

    /// Visits the points of bucket `b` with coin >= cut, in decreasing coin
    /// order, together with their offset mark (zero off the arrow streams).
    #[inline]
    fn scan_raw(
        &self,
        site: u32,
        kind: StreamKind,
        spec: BucketSpec,
        b: u64,
        cut: f64,
        mut f: impl FnMut(Point, u16),
    ) {
        let code = match kind {
            StreamKind::Arrow(_) => ARROWS_CODE,
            k => k.code(),
        };
        let mut rng = CounterRng::from_words(&[self.seed, site as u64, code, b]);
        let marked = matches!(kind, StreamKind::Arrow(_));
        let mut coin = 1.0;
        loop {
            coin -= rng.exp(spec.mean);
            if coin < cut || coin < 0.0 {
                return;
            }
            let time = (b as f64 + rng.uniform_open()) * spec.width;
            let mark = if marked {
                ((rng.next_u64() as u128 * self.card as u128) >> 64) as u16
            } else {
                0
            };
            f(Point { time, coin }, mark);
        }
    }

    #[inline]
    fn scan_bucket(
        &self,
        stream: Stream,
        spec: BucketSpec,
        b: u64,
        cut: f64,
        mut f: impl FnMut(Point),
    ) {
        let want = stream.kind.offset();
        self.scan_raw(stream.site, stream.kind, spec, b, cut, |p, k| {
            if k == want {
                f(p)
            }
        });
    }

    fn last_bucket(&self, spec: BucketSpec) -> u64 {
        (self.horizon / spec.width).floor() as u64
    }
}

impl EventSource for GraphicalRep {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn base_rates(&self) -> BaseRates {
        self.base
    }

    fn next_after(&self, stream: Stream, after: f64, cut: f64) -> Option<Point> {
        let spec = self.spec(stream.kind);
        if spec.rate == 0.0 || after >= self.horizon {
            return None;
        }
        let last = self.last_bucket(spec);
        let mut b = (after.max(0.0) / spec.width).floor() as u64;
        while b <= last {
            let mut best: Option<Point> = None;
            self.scan_bucket(stream, spec, b, cut, |p| {
                if p.time > after && best.map_or(true, |q| p.time < q.time) {
                    best = Some(p);
                }
            });
            if let Some(p) = best {
                return (p.time <= self.horizon).then_some(p);
            }
            b += 1;
        }
        None
    }

    fn next_arrows(&self, site: u32, after: f64, cut: f64, out: &mut Vec<(f64, u16)>) {
        out.clear();
        let spec = self.arrows;
        if after >= self.horizon {
            return;
        }
        let last = self.last_bucket(spec);
        let mut b = (after.max(0.0) / spec.width).floor() as u64;
        while b <= last && out.is_empty() {
            self.scan_raw(site, StreamKind::Arrow(0), spec, b, cut, |p, k| {
                if p.time > after && p.time <= self.horizon {
                    out.push((p.time, k));
                }
            });
            b += 1;
        }
        out.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    }

    /// The rest of the first nonempty bucket.
    fn next_batch(&self, stream: Stream, after: f64, cut: f64, out: &mut Vec<Point>) {
        out.clear();
        let spec = self.spec(stream.kind);
        if spec.rate == 0.0 || after >= self.horizon {
            return;
        }
        let last = self.last_bucket(spec);
        let mut b = (after.max(0.0) / spec.width).floor() as u64;
        while b <= last && out.is_empty() {
            self.scan_bucket(stream, spec, b, cut, |p| {
                if p.time > after && p.time <= self.horizon {
                    out.push(p);
                }
            });
            b += 1;
        }
        out.sort_unstable_by(|a, b| a.time.total_cmp(&b.time));
    }

    fn prev_before(&self, stream: Stream, before: f64, cut: f64) -> Option<Point> {
        let spec = self.spec(stream.kind);
        if spec.rate == 0.0 || before <= 0.0 {
            return None;
        }
        let mut b = ((before.min(self.horizon)) / spec.width).floor() as u64;
        loop {
            let mut best: Option<Point> = None;
            self.scan_bucket(stream, spec, b, cut, |p| {
                if p.time < before
                    && p.time <= self.horizon
                    && best.map_or(true, |q| p.time > q.time)
                {
                    best = Some(p);
                }
            });
            if best.is_some() {
                return best;
            }
            if b == 0 {
                return None;
            }
            b -= 1;
        }
    }

    fn points_in(&self, stream: Stream, lo: f64, hi: f64, cut: f64) -> Vec<Point> {
        let spec = self.spec(stream.kind);
        let hi = hi.min(self.horizon);
        let mut out = Vec::new();
        if spec.rate == 0.0 || !(hi > lo) {
            return out;
        }
        let first = (lo.max(0.0) / spec.width).floor() as u64;
        let last = (hi / spec.width).floor() as u64;
        for b in first..=last {
            self.scan_bucket(stream, spec, b, cut, |p| {
                if p.time > lo && p.time <= hi {
                    out.push(p);
                }
            });
        }
        out.sort_by(|a, b| a.time.total_cmp(&b.time));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Lattice, Neighborhood};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn domain(sides: &[usize]) -> Arc<Domain> {
        Arc::new(
            Domain::new(
                Lattice::new(sides).unwrap(),
                Neighborhood::nearest(sides.len()),
            )
            .unwrap(),
        )
    }

    #[test]
    fn rejects_bad_builds() {
        let d = domain(&[5]);
        let p = Params::new(1.0, 1.0, 1.0, 1);
        assert!(build_events(0, &p, d.clone(), 0.0).is_err());
        assert!(build_events(0, &p, d.clone(), -1.0).is_err());
        assert!(build_events(0, &Params::new(0.0, 0.0, 1.0, 1), d, 1.0).is_err());
    }

    #[test]
    fn labels() {
        for i in 0..100 {
            let u = i as f64 / 100.0;
            assert_eq!(arrow_species_label(u, 1.5, 1.5), ArrowLabel::Both);
        }
        assert_eq!(arrow_species_label(0.3, 2.0, 1.0), ArrowLabel::BlueOnly);
        assert_eq!(arrow_species_label(0.6, 2.0, 1.0), ArrowLabel::Both);
        assert_eq!(arrow_species_label(0.6, 1.0, 2.0), ArrowLabel::Both);
        assert_eq!(arrow_species_label(0.3, 1.0, 2.0), ArrowLabel::RedOnly);
    }

    #[test]
    fn thinning_matches_labels_for_a_single_variant() {
        for &(l1, l2) in &[(2.0, 1.0), (1.0, 2.0), (1.3, 1.3), (3.0, 0.0)] {
            let p = Params::new(l1, l2, 1.0, 1);
            let t = Thinning::new(&p, BaseRates::for_params(&p)).unwrap();
            for i in 0..1000 {
                let u = i as f64 / 1000.0;
                let lab = t.label(u);
                if l2 == 0.0 {
                    assert_eq!(lab, ArrowLabel::BlueOnly);
                } else {
                    assert_eq!(lab, arrow_species_label(u, l1, l2), "u={u} l1={l1} l2={l2}");
                }
            }
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let d = domain(&[6, 6]);
        let p = Params::new(1.96, 1.5, 0.3, 2);
        let a = build_events(11, &p, d.clone(), 5.0)
            .unwrap()
            .events_in_order(0.0, 5.0);
        let b = build_events(11, &p, d.clone(), 5.0)
            .unwrap()
            .events_in_order(0.0, 5.0);
        let c = build_events(12, &p, d, 5.0)
            .unwrap()
            .events_in_order(0.0, 5.0);
        assert!(!a.is_empty());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn merge_is_sorted_and_complete() {
        let d = domain(&[5, 5]);
        let p = Params::new(2.0, 1.0, 0.5, 2);
        let rep = build_events(3, &p, d.clone(), 8.0).unwrap();
        let all = rep.events_in_order(0.0, 8.0);
        assert!(all.windows(2).all(|w| w[0].key() < w[1].key()));
        let mut per_stream = 0;
        for site in 0..d.len() as u32 {
            for k in 0..d.card() as u16 {
                per_stream += rep
                    .points_in(Stream::new(site, StreamKind::Arrow(k)), 0.0, 8.0, 0.0)
                    .len();
            }
            per_stream += rep
                .points_in(Stream::new(site, StreamKind::Cross), 0.0, 8.0, 0.0)
                .len();
            per_stream += rep
                .points_in(Stream::new(site, StreamKind::Dot), 0.0, 8.0, 0.0)
                .len();
        }
        assert_eq!(all.len(), per_stream);
        assert!(rep.events_in_order(2.0, 2.0).is_empty());
        assert!(all.iter().all(|e| e.time > 0.0 && e.time <= 8.0));
        for e in &all {
            if let EventKind::Arrow {
                offset,
                target,
                coin,
            } = e.kind
            {
                assert_eq!(target, d.target(e.site, offset as usize));
                assert!((0.0..1.0).contains(&coin));
            }
        }
    }

    #[test]
    fn single_stream_regeneration_matches_full_build() {
        let d = domain(&[4, 4]);
        let p = Params::new(1.2, 2.5, 2.0, 2);
        let rep = build_events(99, &p, d, 10.0).unwrap();
        let all = rep.events_in_order(0.0, 10.0);
        let target_site = 5;
        let from_full: Vec<f64> = all
            .iter()
            .filter(|e| e.site == target_site && e.stream_kind() == StreamKind::Dot)
            .map(|e| e.time)
            .collect();
        let alone: Vec<f64> = rep
            .points_in(Stream::new(target_site, StreamKind::Dot), 0.0, 10.0, 0.0)
            .iter()
            .map(|p| p.time)
            .collect();
        assert_eq!(from_full, alone);
    }

    #[test]
    fn cursor_queries_agree_with_listing() {
        let d = domain(&[7]);
        let p = Params::new(3.0, 1.0, 5.0, 1);
        let rep = build_events(5, &p, d, 20.0).unwrap();
        for kind in [
            StreamKind::Arrow(0),
            StreamKind::Arrow(1),
            StreamKind::Cross,
            StreamKind::Dot,
        ] {
            for cut in [0.0, 0.4, 0.9] {
                let s = Stream::new(2, kind);
                let list = rep.points_in(s, 0.0, 20.0, cut);
                // walk forward
                let mut t = 0.0;
                let mut walked = Vec::new();
                while let Some(p) = rep.next_after(s, t, cut) {
                    walked.push(p);
                    t = p.time;
                }
                assert_eq!(walked, list);
                // walk backward
                let mut t = 20.0 + 1.0;
                let mut back = Vec::new();
                while let Some(p) = rep.prev_before(s, t, cut) {
                    back.push(p);
                    t = p.time;
                }
                back.reverse();
                assert_eq!(back, list);
                assert!(list.iter().all(|p| p.coin >= cut));
            }
        }
    }

    #[test]
    fn thinned_points_are_a_subset() {
        let d = domain(&[7]);
        let p = Params::new(3.0, 1.0, 5.0, 1);
        let rep = build_events(8, &p, d, 30.0).unwrap();
        let s = Stream::new(1, StreamKind::Dot);
        let all = rep.points_in(s, 0.0, 30.0, 0.0);
        let thin = rep.points_in(s, 0.0, 30.0, 0.7);
        let expected: Vec<Point> = all.iter().copied().filter(|p| p.coin >= 0.7).collect();
        assert_eq!(thin, expected);
    }

    #[test]
    fn dot_count_mean() {
        // Poisson(gamma * horizon) per site: mean 2.5, sd sqrt(2.5)
        let d = domain(&[3]);
        let p = Params::new(1.0, 1.0, 0.05, 1);
        let seeds = 10_000u64;
        let total: usize = (0..seeds)
            .map(|seed| {
                let rep = build_events(seed, &p, d.clone(), 50.0).unwrap();
                rep.points_in(Stream::new(0, StreamKind::Dot), 0.0, 50.0, 0.0)
                    .len()
            })
            .sum();
        let mean = total as f64 / seeds as f64;
        assert!(
            (mean - 2.5).abs() < 3.0 * (2.5 / seeds as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn cross_interarrival_mean() {
        let d = domain(&[3]);
        let p = Params::new(1.0, 1.0, 1.0, 1);
        let mut gaps = Vec::new();
        let mut seed = 0;
        while gaps.len() < 10_000 {
            let rep = build_events(seed, &p, d.clone(), 50.0).unwrap();
            let pts = rep.points_in(Stream::new(1, StreamKind::Cross), 0.0, 50.0, 0.0);
            let mut last = 0.0;
            for q in pts {
                gaps.push(q.time - last);
                last = q.time;
            }
            seed += 1;
        }
        gaps.truncate(10_000);
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!(
            (mean - 1.0).abs() < 3.0 / (gaps.len() as f64).sqrt(),
            "mean {mean}"
        );
    }

    fn chi2_pvalue(observed: &[f64], expected: &[f64]) -> f64 {
        let stat: f64 = observed
            .iter()
            .zip(expected)
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        1.0 - ChiSquared::new((observed.len() - 1) as f64)
            .unwrap()
            .cdf(stat)
    }

    #[test]
    fn thinning_rates_match_both_orderings() {
        let d = domain(&[10]);
        for &(l1, l2) in &[(2.0, 1.2), (0.8, 2.0)] {
            let p = Params::new(l1, l2, 1.0, 1);
            let rep = build_events(2024, &p, d.clone(), 1000.0).unwrap();
            let t = rep.thinning(&p).unwrap();
            let (mut both, mut blue_only, mut red_only, mut n) = (0.0, 0.0, 0.0, 0.0);
            'outer: for site in 0..10 {
                for q in rep.points_in(Stream::new(site, StreamKind::Arrow(0)), 0.0, 1000.0, 0.0) {
                    match t.label(q.coin) {
                        ArrowLabel::Both => both += 1.0,
                        ArrowLabel::BlueOnly => blue_only += 1.0,
                        ArrowLabel::RedOnly => red_only += 1.0,
                        ArrowLabel::Unused => unreachable!(),
                    }
                    n += 1.0;
                    if n >= 10_000.0 {
                        break 'outer;
                    }
                }
            }
            let lmax = l1.max(l2);
            let pb = l1.min(l2) / lmax;
            let (obs, exp) = if l1 >= l2 {
                (vec![both, blue_only], vec![n * pb, n * (1.0 - pb)])
            } else {
                (vec![both, red_only], vec![n * pb, n * (1.0 - pb)])
            };
            assert!(chi2_pvalue(&obs, &exp) > 0.001, "{obs:?} vs {exp:?}");
            // per-offset usable rates: lambda_i / card N
            let span = rep.points_in(Stream::new(0, StreamKind::Arrow(0)), 0.0, 1000.0, 0.0);
            let blue = span
                .iter()
                .filter(|q| t.label(q.coin).usable_by(SiteState::Blue))
                .count() as f64;
            let red = span
                .iter()
                .filter(|q| t.label(q.coin).usable_by(SiteState::Red))
                .count() as f64;
            let (eb, er) = (l1 / 2.0 * 1000.0, l2 / 2.0 * 1000.0);
            assert!((blue - eb).abs() < 4.0 * eb.sqrt(), "blue {blue} vs {eb}");
            assert!((red - er).abs() < 4.0 * er.sqrt(), "red {red} vs {er}");
        }
    }

    #[test]
    fn disjoint_streams_uncorrelated() {
        let d = domain(&[4]);
        let p = Params::new(2.0, 2.0, 1.0, 1);
        let pairs: Vec<(f64, f64)> = (0..1000u64)
            .map(|seed| {
                let rep = build_events(seed, &p, d.clone(), 10.0).unwrap();
                let a = rep
                    .points_in(Stream::new(0, StreamKind::Cross), 0.0, 10.0, 0.0)
                    .len() as f64;
                let b = rep
                    .points_in(Stream::new(1, StreamKind::Cross), 0.0, 10.0, 0.0)
                    .len() as f64;
                (a, b)
            })
            .collect();
        let n = pairs.len() as f64;
        let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
        let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
        let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
        let rho = cov / (va * vb).sqrt();
        assert!(rho.abs() < 0.05, "rho = {rho}");
    }

    #[test]
    fn variant_rates_above_base_are_rejected() {
        let base = BaseRates {
            arrow: 2.0,
            dot: 1.0,
        };
        assert!(Thinning::new(&Params::new(2.5, 1.0, 1.0, 1), base).is_err());
        assert!(Thinning::new(&Params::new(2.0, 1.0, 1.5, 1), base).is_err());
        let inf = Thinning::new(&Params::new(2.0, 1.0, f64::INFINITY, 1), base).unwrap();
        assert!(inf.dot_cut.is_none() && !inf.freeze);
    }
}
