//! One function per mode. Each writes its files through [`Outputs`] and
//! returns human-readable summary lines plus an overall verdict.

use std::sync::Arc;

use allelopathy::blocks::{
    blocking_experiment, estimate_occupancy, BlockGeometry, BlockingResult, OccupancyEstimate,
};
use allelopathy::coupling::{couple, CouplingReport};
use allelopathy::dual::{
    distinguished_path, dual_tree, favorability_rate_check, write_dual_tree, Dual, FrozenInfo,
};
use allelopathy::forward::{run_with, RunOptions};
use allelopathy::graphical::{build_events, EventLog, GraphicalRep};
use allelopathy::meanfield::{
    boundary_fixed_point_blue, boundary_fixed_point_red, integrate, interior_fixed_point,
    phase_point, stability, MeanFieldState, Rates, StabilityReport,
};
use allelopathy::rng::CounterRng;
use allelopathy::stats::{cochran_armitage_decreasing, TrendTest};
use allelopathy::{make_initial, Configuration, Domain, Lattice, Params, Trajectory};
use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::output::{num, pgm, time_label, Outputs};

/// What a mode reports back besides its files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    /// False when a built-in check (domination, dual agreement) failed.
    pub ok: bool,
}

pub fn dispatch(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    match cfg.mode {
        Mode::Simulate => simulate(cfg, out),
        Mode::Couple => couple_mode(cfg, out),
        Mode::DualCheck => dual_check(cfg, out),
        Mode::Meanfield => meanfield(cfg, out),
        Mode::Sweep => sweep(cfg, out),
        Mode::Blocks => blocks(cfg, out),
    }
}

fn domain(cfg: &RunConfig, p: &Params) -> Result<Arc<Domain>> {
    Ok(Arc::new(Domain::new(
        Lattice::new(&cfg.sides())?,
        p.neighborhood()?,
    )?))
}

/// `samples + 1` equally spaced times on `[0, horizon]` merged with `extra`.
fn sample_times(horizon: f64, samples: u32, extra: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=samples)
        .map(|k| horizon * k as f64 / samples as f64)
        .chain(extra.iter().copied())
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

const SERIES_HEADER: [&str; 7] = [
    "t", "density0", "density1", "density2", "density3", "count1", "count2",
];

fn series_rows(tr: &Trajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    tr.times
        .iter()
        .zip(&tr.densities)
        .zip(&tr.counts)
        .map(|((&t, d), c)| {
            let mut row = vec![num(t)];
            row.extend(d.iter().map(|&x| num(x)));
            row.push(c[1].to_string());
            row.push(c[2].to_string());
            row
        })
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    seed: u64,
    horizon: f64,
    params: &'a Params,
    sides: Vec<usize>,
    initial: &'a str,
    events: u64,
    blocked_arrows: u64,
    final_counts: [usize; 4],
    final_densities: [f64; 4],
    snapshots: Vec<String>,
}

fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    let p = cfg.params();
    let h = cfg.horizon.0;
    let d = domain(cfg, &p)?;
    let rep = build_events(cfg.seed, &p, d.clone(), h)?;
    let xi0 = make_initial(&cfg.initial(), cfg.seed, d.lattice())?;
    let snaps: Vec<f64> = match &cfg.simulate.snapshot_times {
        Some(v) => v.iter().map(|r| r.0).collect(),
        None => vec![h],
    };
    let times = sample_times(h, cfg.simulate.samples, &snaps);
    let tr = run_with(
        &xi0,
        &rep,
        &p,
        &times,
        RunOptions {
            snapshot_times: snaps.clone(),
            ..Default::default()
        },
    )?;
    out.csv("timeseries.csv", &SERIES_HEADER, series_rows(&tr))?;
    let mut names = Vec::new();
    for (t, c) in &tr.snapshots {
        let name = format!("snapshot_{}.pgm", time_label(*t));
        out.write(&name, &pgm(c))?;
        names.push(name);
    }
    if cfg.simulate.export_log {
        let log = EventLog::from_source(&rep, d.clone(), 0.0, h)?;
        let mut buf = Vec::new();
        log.write_to(&mut buf)?;
        out.write("events.log", &buf)?;
    }
    let fc = tr.final_state.counts();
    out.json(
        "summary.json",
        &SimulateSummary {
            seed: cfg.seed,
            horizon: h,
            params: &p,
            sides: cfg.sides(),
            initial: &cfg.initial,
            events: tr.events,
            blocked_arrows: tr.blocked,
            final_counts: fc,
            final_densities: tr.final_state.densities(),
            snapshots: names,
        },
    )?;
    Ok(Outcome {
        lines: vec![
            format!("events: {}", tr.events),
            format!("final counts (free, blue, red, frozen): {fc:?}"),
        ],
        ok: true,
    })
}

fn couple_mode(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    let c = &cfg.couple;
    let variants: Vec<Params> = c.variants.iter().map(|v| cfg.variant(v)).collect();
    let h = cfg.horizon.0;
    let d = domain(cfg, &variants[0])?;
    let times = sample_times(h, c.samples, &[]);
    let reports: Vec<CouplingReport> = (0..c.seeds)
        .into_par_iter()
        .map(|k| -> Result<CouplingReport> {
            let seed = cfg.seed.wrapping_add(k);
            let xi0 = make_initial(&cfg.initial(), seed, d.lattice())?;
            Ok(couple(seed, &variants, d.clone(), &xi0, &times, h)?.report())
        })
        .collect::<Result<_>>()?;
    let mut verdict_rows = Vec::new();
    let mut density_rows = Vec::new();
    let mut bad = 0u64;
    for r in &reports {
        let seed = r.seed.unwrap_or(cfg.seed).to_string();
        for v in &r.verdicts {
            let failed_samples = v.per_sample.iter().filter(|&&ok| !ok).count();
            bad += v.violating_events + failed_samples as u64;
            verdict_rows.push(vec![
                seed.clone(),
                v.pair.favored.to_string(),
                v.pair.other.to_string(),
                format!("{:?}", v.pair.varied).to_lowercase(),
                v.events_checked.to_string(),
                v.violating_events.to_string(),
                failed_samples.to_string(),
                v.holds().to_string(),
            ]);
        }
        for (vi, dens) in r.densities.iter().enumerate() {
            for (&t, dv) in r.sample_times.iter().zip(dens) {
                let mut row = vec![seed.clone(), vi.to_string(), num(t)];
                row.extend(dv.iter().map(|&x| num(x)));
                density_rows.push(row);
            }
        }
    }
    out.csv(
        "couple_verdicts.csv",
        &[
            "seed",
            "favored",
            "other",
            "varied",
            "events_checked",
            "violating_events",
            "violating_samples",
            "holds",
        ],
        verdict_rows,
    )?;
    out.csv(
        "couple_densities.csv",
        &[
            "seed", "variant", "t", "density0", "density1", "density2", "density3",
        ],
        density_rows,
    )?;
    out.json("couple.json", &reports)?;
    Ok(Outcome {
        lines: vec![
            format!("seeds: {}, variants: {}", c.seeds, variants.len()),
            format!("domination violations: {bad}"),
        ],
        ok: bad == 0,
    })
}

#[derive(Serialize)]
struct Mismatch {
    site: u32,
    t: f64,
    forward: u8,
    dual_forward_info: u8,
    dual_recursive: u8,
}

#[derive(Serialize)]
struct PathSummary {
    t: f64,
    frozen_visits: usize,
    arrows: usize,
    died_at: Option<f64>,
}

#[derive(Serialize)]
struct DualCheckReport<'a> {
    seed: u64,
    params: &'a Params,
    queries: u32,
    agree_forward_info: u32,
    agree_recursive: u32,
    mismatches: Vec<Mismatch>,
    tree_site: u32,
    tree_nodes: usize,
    paths: Vec<PathSummary>,
    favorability: allelopathy::dual::FavorabilityCheck,
}

fn centre_site(l: &Lattice) -> u32 {
    let c: Vec<i64> = l.sides().iter().map(|&n| (n / 2) as i64).collect();
    l.index(&c)
}

fn dual_check(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    let o = &cfg.dual_check;
    let p = cfg.params();
    let h = cfg.horizon.0;
    let d = domain(cfg, &p)?;
    let rep: GraphicalRep = build_events(cfg.seed, &p, d.clone(), h)?;
    let xi0: Configuration = make_initial(&cfg.initial(), cfg.seed, d.lattice())?;
    let tr = run_with(
        &xi0,
        &rep,
        &p,
        &[h],
        RunOptions {
            record_history: true,
            ..Default::default()
        },
    )?;
    let hist = tr.history.as_ref().expect("history was requested");
    let mut fwd = Dual::new(&rep, &p, &xi0, FrozenInfo::Forward(hist))?;
    let mut rec = Dual::new(&rep, &p, &xi0, FrozenInfo::Recursive)?;
    let n = d.len() as u64;
    let (mut agree_f, mut agree_r) = (0u32, 0u32);
    let mut mismatches = Vec::new();
    for i in 0..o.queries {
        let mut g = CounterRng::from_words(&[cfg.seed, 0xD0A1, u64::from(i)]);
        let x = (g.next_u64() % n) as u32;
        let t = g.uniform() * h;
        let want = hist.state_at(x, t);
        let (a, b) = (fwd.color(x, t), rec.color(x, t));
        agree_f += u32::from(a == want);
        agree_r += u32::from(b == want);
        if (a != want || b != want) && mismatches.len() < 100 {
            mismatches.push(Mismatch {
                site: x,
                t,
                forward: want as u8,
                dual_forward_info: a as u8,
                dual_recursive: b as u8,
            });
        }
    }
    let site = o.tree_site.unwrap_or_else(|| centre_site(d.lattice()));
    let depth = o.tree_depth.map_or(h, |r| r.0);
    let nodes = dual_tree(&rep, &p, site, h, depth)?;
    let mut buf = Vec::new();
    write_dual_tree(&nodes, &mut buf)?;
    out.write("dual_tree.txt", &buf)?;
    let path_times: Vec<f64> = match &o.path_times {
        Some(v) => v.iter().map(|r| r.0).collect(),
        None => vec![h],
    };
    let paths = path_times
        .iter()
        .map(|&t| -> Result<PathSummary> {
            let dp = distinguished_path(&rep, &p, site, t, Some(hist))?;
            Ok(PathSummary {
                t,
                frozen_visits: dp.frozen_visits,
                arrows: dp.arrows.len(),
                died_at: dp.died_at,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fav = favorability_rate_check(p.lambda1, p.gamma, o.favorability_samples, cfg.seed)?;
    let ok = agree_f == o.queries && agree_r == o.queries;
    let lines = vec![
        format!(
            "dual/forward agreement: {agree_f}/{} (forward frozen info), {agree_r}/{} (recursive)",
            o.queries, o.queries
        ),
        format!("dual tree of site {site}: {} nodes", nodes.len()),
    ];
    out.json(
        "dual_check.json",
        &DualCheckReport {
            seed: cfg.seed,
            params: &p,
            queries: o.queries,
            agree_forward_info: agree_f,
            agree_recursive: agree_r,
            mismatches,
            tree_site: site,
            tree_nodes: nodes.len(),
            paths,
            favorability: fav,
        },
    )?;
    Ok(Outcome { lines, ok })
}

#[derive(Serialize)]
struct FixedPoint {
    point: MeanFieldState,
    stability: StabilityReport,
}

#[derive(Serialize)]
struct MeanfieldReport {
    rates: Rates,
    form: allelopathy::meanfield::Form,
    phase: allelopathy::meanfield::PhasePoint,
    blue_boundary: Option<FixedPoint>,
    red_boundary: Option<FixedPoint>,
    interior: Option<FixedPoint>,
    trajectory_end: MeanFieldState,
    step_halving_error: f64,
}

fn meanfield(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    let o = &cfg.meanfield;
    let r = Rates::from(&cfg.params());
    let fp = |u: Option<MeanFieldState>| {
        u.map(|point| FixedPoint {
            point,
            stability: stability(&point, &r, o.form),
        })
    };
    let start = MeanFieldState(o.start.map(|x| x.0));
    let run = integrate(&start, &r, o.form, o.dt.0, o.t_end.0, o.record_every)?;
    out.csv(
        "trajectory.csv",
        &["t", "u0", "u1", "u2", "u3"],
        run.times.iter().zip(&run.states).map(|(&t, u)| {
            let mut row = vec![num(t)];
            row.extend(u.0.iter().map(|&x| num(x)));
            row
        }),
    )?;
    let phase = phase_point(r.lambda1, r.lambda2, r.gamma)?;
    let report = MeanfieldReport {
        rates: r,
        form: o.form,
        phase,
        blue_boundary: fp(boundary_fixed_point_blue(&r)),
        red_boundary: fp(boundary_fixed_point_red(&r)),
        interior: fp(interior_fixed_point(&r)?),
        trajectory_end: run.last(),
        step_halving_error: run.error_estimate,
    };
    out.json("meanfield.json", &report)?;
    Ok(Outcome {
        lines: vec![
            format!(
                "region: in_w1={} in_w2={} coexist={}",
                phase.region.in_w1, phase.region.in_w2, phase.region.coexist
            ),
            format!("state at t={}: {:?}", num(o.t_end.0), run.last().0),
        ],
        ok: true,
    })
}

fn or_param(list: &[crate::config::Real], fallback: f64) -> Vec<f64> {
    if list.is_empty() {
        vec![fallback]
    } else {
        list.iter().map(|r| r.0).collect()
    }
}

fn sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    let s = &cfg.sweep;
    let p = cfg.params();
    let l1 = or_param(&s.lambda1s, p.lambda1);
    let l2 = or_param(&s.lambda2s, p.lambda2);
    let gs = or_param(&s.gammas, p.gamma);
    let mut grid = Vec::with_capacity(gs.len() * l1.len() * l2.len());
    for &g in &gs {
        for &a in &l1 {
            grid.extend(l2.iter().map(|&b| (a, b, g)));
        }
    }
    let points = grid
        .par_iter()
        .map(|&(a, b, g)| phase_point(a, b, g))
        .collect::<allelopathy::Result<Vec<_>>>()?;
    out.csv(
        "phase.csv",
        &[
            "lambda1",
            "lambda2",
            "gamma",
            "in_w1",
            "in_w2",
            "coexist",
            "ubar_exists",
            "vbar_exists",
            "interior_exists",
        ],
        points.iter().map(|q| {
            vec![
                num(q.lambda1),
                num(q.lambda2),
                num(q.gamma),
                q.region.in_w1.to_string(),
                q.region.in_w2.to_string(),
                q.region.coexist.to_string(),
                q.ubar_exists.to_string(),
                q.vbar_exists.to_string(),
                q.interior_exists.to_string(),
            ]
        }),
    )?;
    let interior = points.iter().filter(|q| q.interior_exists).count();
    Ok(Outcome {
        lines: vec![format!(
            "{} phase points, {interior} with an interior fixed point",
            points.len()
        )],
        ok: true,
    })
}

#[derive(Serialize)]
struct BlocksReport {
    geometry: BlockGeometry,
    params: Params,
    replicas: u64,
    occupancy: Vec<OccupancyEstimate>,
    blocking: Vec<BlockingResult>,
    /// Decreasing trend of the blocked fraction over the finite gammas in
    /// increasing order.
    blocking_trend: Option<TrendTest>,
}

fn blocks(cfg: &RunConfig, out: &mut Outputs) -> Result<Outcome> {
    let b = &cfg.blocks;
    let mut geom = BlockGeometry::new(b.l, b.m)?;
    if let Some(t) = b.t {
        geom = geom.with_time(t.0)?;
    }
    if let Some(w) = b.tile {
        geom = geom.with_tile(w)?;
    }
    let base = cfg.params();
    let gammas = or_param(&b.gammas, base.gamma);
    let mut occ = Vec::new();
    let mut blk = Vec::new();
    let mut rows = Vec::new();
    for &g in &gammas {
        let p = Params { gamma: g, ..base };
        let o = if b.occupancy {
            Some(estimate_occupancy(&p, &geom, b.replicas, cfg.seed)?)
        } else {
            None
        };
        let k = if b.blocking {
            Some(blocking_experiment(&p, &geom, b.replicas, cfg.seed)?)
        } else {
            None
        };
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        rows.push(vec![
            num(g),
            geom.l.to_string(),
            num(geom.t),
            geom.m.to_string(),
            opt(o.as_ref().map(|o| o.estimate.p)),
            opt(o.as_ref().map(|o| o.estimate.lo)),
            opt(o.as_ref().map(|o| o.estimate.hi)),
            opt(k.as_ref().map(|k| k.estimate.p)),
        ]);
        occ.extend(o);
        blk.extend(k);
    }
    out.csv(
        "blocks.csv",
        &[
            "gamma",
            "L",
            "T",
            "M",
            "occupancy",
            "ci_lo",
            "ci_hi",
            "blocked_fraction",
        ],
        rows,
    )?;
    let mut finite: Vec<&BlockingResult> = blk.iter().filter(|r| r.gamma.is_finite()).collect();
    finite.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let trend = (finite.len() >= 2).then(|| {
        let k: Vec<u64> = finite.iter().map(|r| r.estimate.successes).collect();
        let n: Vec<u64> = finite.iter().map(|r| r.estimate.trials).collect();
        let scores: Vec<f64> = (0..finite.len()).map(|i| i as f64).collect();
        cochran_armitage_decreasing(&k, &n, &scores)
    });
    let mut lines: Vec<String> = blk
        .iter()
        .map(|r| {
            format!(
                "gamma={}: blocked fraction {}",
                num(r.gamma),
                num(r.estimate.p)
            )
        })
        .collect();
    lines.extend(
        occ.iter()
            .map(|o| format!("gamma={}: occupancy {}", num(o.gamma), num(o.estimate.p))),
    );
    out.json(
        "blocks.json",
        &BlocksReport {
            geometry: geom,
            params: base,
            replicas: b.replicas,
            occupancy: occ,
            blocking: blk,
            blocking_trend: trend,
        },
    )?;
    Ok(Outcome { lines, ok: true })
}
