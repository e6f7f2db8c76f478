//! Explicit event logs: hand-built representations and text import/export.
//!
//! Records are newline-delimited, `time kind site [target u]`:
//!
//! ```text
//! # horizon 5.0000000000000000e0
//! # arrow-rate 2.0000000000000000e0
//! # dot-rate 1.0000000000000000e0
//! 1.2500000000000000e-1 arrow 3 4 7.5000000000000000e-1
//! 2.0000000000000000e0 cross 4
//! 3.0000000000000000e0 dot 4 2.5000000000000000e-1
//! ```
//!
//! Times and coins are written with 17 significant digits, which
//! round-trips every `f64`. Dots carry their thinning coin; a dot without
//! one is accepted by every variant.

use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{BaseRates, Event, EventKind, EventSource, Point, Stream, StreamKind};
use crate::lattice::Domain;
use crate::{Error, Result};

/// A graphical representation held as explicit per-stream point lists.
#[derive(Clone, Debug)]
pub struct EventLog {
    domain: Arc<Domain>,
    horizon: f64,
    base: BaseRates,
    streams: Vec<Vec<Point>>,
}

impl EventLog {
    pub fn new(domain: Arc<Domain>, horizon: f64, base: BaseRates) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::param("horizon", "must be finite and > 0"));
        }
        let n = domain.len() * (domain.card() + 2);
        Ok(Self {
            domain,
            horizon,
            base,
            streams: vec![Vec::new(); n],
        })
    }

    /// Copies every event of `src` in `(lo, hi]`.
    pub fn from_source<S: EventSource + ?Sized>(
        src: &S,
        domain: Arc<Domain>,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        let mut log = Self::new(domain, src.horizon(), src.base_rates())?;
        for e in src.events_in_order(lo, hi) {
            log.push(e)?;
        }
        Ok(log)
    }

    fn slot(&self, stream: Stream) -> usize {
        let w = self.domain.card() + 2;
        stream.site as usize * w + stream.kind.slot(self.domain.card())
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, e: Event) -> Result<()> {
        let bad = |reason: String| Error::param("event", reason);
        if !(e.time > 0.0) || e.time > self.horizon {
            return Err(bad(format!(
                "time {} outside (0, {}]",
                e.time, self.horizon
            )));
        }
        if e.site as usize >= self.domain.len() {
            return Err(bad(format!("site {} outside the lattice", e.site)));
        }
        let coin = match e.kind {
            EventKind::Arrow {
                offset,
                target,
                coin,
            } => {
                if offset as usize >= self.domain.card()
                    || self.domain.target(e.site, offset as usize) != target
                {
                    return Err(bad(format!(
                        "{} -> {} is not a neighborhood arrow",
                        e.site, target
                    )));
                }
                coin
            }
            EventKind::Cross => 0.0,
            EventKind::Dot { coin } => coin,
        };
        if !(0.0..=1.0).contains(&coin) {
            return Err(bad(format!("coin {coin} outside [0, 1]")));
        }
        let slot = self.slot(Stream::new(e.site, e.stream_kind()));
        let list = &mut self.streams[slot];
        let at = list.partition_point(|p| p.time < e.time);
        if list.get(at).is_some_and(|p| p.time == e.time) {
            return Err(bad(format!("duplicate time {} in one stream", e.time)));
        }
        list.insert(at, Point { time: e.time, coin });
        Ok(())
    }

    pub fn push_arrow(&mut self, time: f64, source: u32, target: u32, coin: f64) -> Result<()> {
        let offset = self.domain.offset_to(source, target).ok_or_else(|| {
            Error::param(
                "event",
                format!("{source} -> {target} is not a neighborhood arrow"),
            )
        })?;
        self.push(Event {
            time,
            site: source,
            kind: EventKind::Arrow {
                offset: offset as u16,
                target,
                coin,
            },
        })
    }

    pub fn push_cross(&mut self, time: f64, site: u32) -> Result<()> {
        self.push(Event {
            time,
            site,
            kind: EventKind::Cross,
        })
    }

    pub fn push_dot(&mut self, time: f64, site: u32, coin: f64) -> Result<()> {
        self.push(Event {
            time,
            site,
            kind: EventKind::Dot { coin },
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# horizon {:.16e}", self.horizon)?;
        writeln!(w, "# arrow-rate {:.16e}", self.base.arrow)?;
        writeln!(w, "# dot-rate {:.16e}", self.base.dot)?;
        for e in self.events_in_order(0.0, self.horizon) {
            match e.kind {
                EventKind::Arrow { target, coin, .. } => writeln!(
                    w,
                    "{:.16e} arrow {} {} {:.16e}",
                    e.time, e.site, target, coin
                )?,
                EventKind::Cross => writeln!(w, "{:.16e} cross {}", e.time, e.site)?,
                EventKind::Dot { coin } => {
                    writeln!(w, "{:.16e} dot {} {:.16e}", e.time, e.site, coin)?
                }
            }
        }
        Ok(())
    }

    /// Parses a log written by [`EventLog::write_to`] (or by hand).
    ///
    /// The `horizon`, `arrow-rate` and `dot-rate` header lines are required.
    pub fn read_from<R: BufRead>(r: R, domain: Arc<Domain>) -> Result<Self> {
        let mut header = [None::<f64>; 3];
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let perr = |reason: String| Error::Parse {
                line: lineno,
                reason,
            };
            let num = |s: Option<&str>, what: &str| -> Result<f64> {
                s.ok_or_else(|| perr(format!("missing {what}")))?
                    .parse::<f64>()
                    .map_err(|e| perr(format!("bad {what}: {e}")))
            };
            let site = |s: Option<&str>, what: &str| -> Result<u32> {
                s.ok_or_else(|| perr(format!("missing {what}")))?
                    .parse::<u32>()
                    .map_err(|e| perr(format!("bad {what}: {e}")))
            };
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            if let Some(rest) = text.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                let idx = match it.next() {
                    Some("horizon") => 0,
                    Some("arrow-rate") => 1,
                    Some("dot-rate") => 2,
                    _ => continue,
                };
                header[idx] = Some(num(it.next(), "header value")?);
                continue;
            }
            let mut it = text.split_whitespace();
            let time = num(it.next(), "time")?;
            let kind = it.next().ok_or_else(|| perr("missing kind".into()))?;
            let s = site(it.next(), "site")?;
            let kind = match kind {
                "arrow" => {
                    let target = site(it.next(), "target")?;
                    let coin = num(it.next(), "coin")?;
                    Err((target, coin))
                }
                "cross" => Ok(EventKind::Cross),
                "dot" => Ok(EventKind::Dot {
                    coin: match it.next() {
                        Some(u) => num(Some(u), "coin")?,
                        None => 1.0,
                    },
                }),
                other => return Err(perr(format!("unknown kind `{other}`"))),
            };
            if it.next().is_some() {
                return Err(perr("trailing fields".into()));
            }
            records.push((lineno, time, s, kind));
        }
        let need = |i: usize, name: &str| {
            header[i].ok_or_else(|| Error::Parse {
                line: 0,
                reason: format!("missing `# {name}` header"),
            })
        };
        let base = BaseRates {
            arrow: need(1, "arrow-rate")?,
            dot: need(2, "dot-rate")?,
        };
        let mut log = Self::new(domain, need(0, "horizon")?, base)?;
        for (line, time, site, kind) in records {
            let res = match kind {
                Ok(kind) => log.push(Event { time, site, kind }),
                Err((target, coin)) => log.push_arrow(time, site, target, coin),
            };
            res.map_err(|e| Error::Parse {
                line,
                reason: e.to_string(),
            })?;
        }
        Ok(log)
    }
}

impl EventSource for EventLog {
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
        let list = &self.streams[self.slot(stream)];
        let i = list.partition_point(|p| p.time <= after);
        list[i..].iter().find(|p| p.coin >= cut).copied()
    }

    fn prev_before(&self, stream: Stream, before: f64, cut: f64) -> Option<Point> {
        let list = &self.streams[self.slot(stream)];
        let i = list.partition_point(|p| p.time < before);
        list[..i].iter().rev().find(|p| p.coin >= cut).copied()
    }

    fn points_in(&self, stream: Stream, lo: f64, hi: f64, cut: f64) -> Vec<Point> {
        let list = &self.streams[self.slot(stream)];
        let a = list.partition_point(|p| p.time <= lo);
        let b = list.partition_point(|p| p.time <= hi);
        if a >= b {
            return Vec::new();
        }
        list[a..b]
            .iter()
            .filter(|p| p.coin >= cut)
            .copied()
            .collect()
    }
}

impl StreamKind {
    pub fn label(self) -> &'static str {
        match self {
            StreamKind::Arrow(_) => "arrow",
            StreamKind::Cross => "cross",
            StreamKind::Dot => "dot",
        }
    }
}
