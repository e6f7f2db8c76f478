//! Block geometry of the rescaling argument, good boxes, and the
//! occupancy and blocking Monte-Carlo experiments (two dimensions).
//!
//! `Phi(z) = L z`, `B(z) = Phi(z) + [-L, L]^2`, tiles `D(w) = l w + (-l/2, l/2]^2`
//! and `I_z = { w : D(w) inside B(z) }`. Runs are restricted to the box
//! `Phi(z) + [-M L, M L]^2` by masking: sites outside never act and never
//! receive births.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::forward::{Engine, EngineOptions};
use crate::graphical::{build_events, GraphicalRep};
use crate::lattice::{Configuration, Domain, Lattice, Params, SiteState};
use crate::rng::CounterRng;
use crate::stats::Estimate;
use crate::{Error, Result};

pub type Block = (i64, i64);

/// Tile side `max(1, round(L^0.1))`.
pub fn default_tile(l: i64) -> i64 {
    ((l as f64).powf(0.1).round() as i64).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockGeometry {
    pub l: i64,
    /// Time per level.
    pub t: f64,
    pub m: i64,
    pub tile: i64,
}

impl BlockGeometry {
    /// `T = L^2` and the default tile side.
    pub fn new(l: i64, m: i64) -> Result<Self> {
        let g = Self {
            l,
            t: (l * l) as f64,
            m,
            tile: default_tile(l),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_time(self, t: f64) -> Result<Self> {
        let g = Self { t, ..self };
        g.validate()?;
        Ok(g)
    }

    pub fn with_tile(self, tile: i64) -> Result<Self> {
        let g = Self { tile, ..self };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::param("L", "must be >= 1"));
        }
        if self.m < 1 {
            return Err(Error::param("M", "must be >= 1"));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::param("T", "must be finite and > 0"));
        }
        if self.tile < 1 || self.tile > 2 * self.l {
            return Err(Error::param("tile", "must be in [1, 2L]"));
        }
        Ok(())
    }

    pub fn phi(&self, z: Block) -> (i64, i64) {
        (self.l * z.0, self.l * z.1)
    }

    /// Lattice points of `B(z)`.
    pub fn box_points(&self, z: Block) -> impl Iterator<Item = (i64, i64)> {
        let (cx, cy) = self.phi(z);
        square(cx, cy, self.l)
    }

    /// `I_z`, row-major.
    pub fn tiles(&self, z: Block) -> Vec<(i64, i64)> {
        let (cx, cy) = self.phi(z);
        let l2 = self.tile;
        // D(w) inside [c - L, c + L] on one axis, in doubled units
        let axis = |c: i64| -> Vec<i64> {
            let lo = 2 * (c - self.l);
            let hi = 2 * (c + self.l);
            let first = (lo + l2).div_euclid(2 * l2) - 1;
            let last = (hi - l2).div_euclid(2 * l2) + 1;
            (first..=last)
                .filter(|&w| 2 * l2 * w - l2 >= lo && 2 * l2 * w + l2 <= hi)
                .collect()
        };
        let (xs, ys) = (axis(cx), axis(cy));
        xs.iter()
            .flat_map(|&a| ys.iter().map(move |&b| (a, b)))
            .collect()
    }

    /// Lattice points of `D(w)`.
    pub fn tile_points(&self, w: (i64, i64)) -> Vec<(i64, i64)> {
        let l2 = self.tile;
        // integers k with l w - l/2 < k <= l w + l/2
        let axis = |w: i64| {
            let lo = (2 * l2 * w - l2).div_euclid(2) + 1;
            let hi = (2 * l2 * w + l2).div_euclid(2);
            lo..=hi
        };
        axis(w.0)
            .flat_map(|a| axis(w.1).map(move |b| (a, b)))
            .collect()
    }

    /// Half-width of `kappa(z) = Phi(z) + [-ML/3, ML/3]^2` in lattice points.
    pub fn kappa_half(&self) -> i64 {
        (self.m * self.l).div_euclid(3)
    }

    pub fn kappa_points(&self, z: Block) -> impl Iterator<Item = (i64, i64)> {
        let (cx, cy) = self.phi(z);
        square(cx, cy, self.kappa_half())
    }

    pub fn check_parity(z: Block, k: u32) -> Result<()> {
        let want = (k % 2) as i64;
        if z.0.rem_euclid(2) == want && z.1.rem_euclid(2) == want {
            Ok(())
        } else {
            Err(Error::Parity {
                z1: z.0,
                z2: z.1,
                k,
            })
        }
    }
}

fn square(cx: i64, cy: i64, h: i64) -> impl Iterator<Item = (i64, i64)> {
    (cx - h..=cx + h).flat_map(move |a| (cy - h..=cy + h).map(move |b| (a, b)))
}

/// Plane coordinates laid out on a torus large enough that no restricted
/// run wraps around.
#[derive(Clone, Debug)]
pub struct Frame {
    domain: Arc<Domain>,
    centre: i64,
}

impl Frame {
    /// Covers the restriction boxes of every block within `reach_blocks`
    /// block steps of the origin.
    pub fn new(geom: &BlockGeometry, params: &Params, reach_blocks: i64) -> Result<Self> {
        if params.dim != 2 {
            return Err(Error::param(
                "dim",
                "block constructions are two-dimensional",
            ));
        }
        let nb = params.neighborhood()?;
        let pad = nb.reach();
        let centre = (geom.m + reach_blocks) * geom.l + pad;
        let side = (2 * centre + 1) as usize;
        let domain = Arc::new(Domain::new(Lattice::new(&[side, side])?, nb)?);
        Ok(Self { domain, centre })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    /// Site of plane point `p`, if it lies in the frame.
    pub fn site(&self, p: (i64, i64)) -> Option<u32> {
        let (a, b) = (p.0 + self.centre, p.1 + self.centre);
        let side = 2 * self.centre + 1;
        ((0..side).contains(&a) && (0..side).contains(&b))
            .then(|| self.domain.lattice().index(&[a, b]))
    }

    pub fn point(&self, site: u32) -> (i64, i64) {
        let c = self.domain.lattice().coords(site);
        (c[0] - self.centre, c[1] - self.centre)
    }

    /// Mask of `Phi(z) + [-ML, ML]^2`.
    pub fn restriction_mask(&self, geom: &BlockGeometry, z: Block) -> Result<Vec<bool>> {
        let (cx, cy) = geom.phi(z);
        let mut mask = vec![false; self.domain.len()];
        for p in square(cx, cy, geom.m * geom.l) {
            let s = self.site(p).ok_or(Error::BlockOutOfDomain(z.0, z.1))?;
            mask[s as usize] = true;
        }
        Ok(mask)
    }
}

/// `B(z)` is good: no blue site in it, and a red site in every tile.
pub fn is_good_box(
    xi: &Configuration,
    frame: &Frame,
    geom: &BlockGeometry,
    z: Block,
) -> Result<bool> {
    let state = |p| {
        frame
            .site(p)
            .map(|s| xi.get(s))
            .ok_or(Error::BlockOutOfDomain(z.0, z.1))
    };
    for p in geom.box_points(z) {
        if state(p)? == SiteState::Blue {
            return Ok(false);
        }
    }
    for w in geom.tiles(z) {
        let mut any = false;
        for p in geom.tile_points(w) {
            if state(p)? == SiteState::Red {
                any = true;
                break;
            }
        }
        if !any {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `(z, k)` is occupied: parity holds and `B(z)` is good in `xi`, the
/// state of the run restricted around `z` at time `kT`.
pub fn is_occupied(
    xi: &Configuration,
    frame: &Frame,
    geom: &BlockGeometry,
    z: Block,
    k: u32,
) -> Result<bool> {
    BlockGeometry::check_parity(z, k)?;
    is_good_box(xi, frame, geom, z)
}

/// Shared setup of the block experiments.
pub struct BlockExperiment {
    pub params: Params,
    pub geometry: BlockGeometry,
    frame: Frame,
}

/// Children of the origin block one level up.
pub const CHILDREN: [Block; 2] = [(-1, 1), (1, 1)];

impl BlockExperiment {
    pub fn new(params: Params, geometry: BlockGeometry) -> Result<Self> {
        params.validate()?;
        geometry.validate()?;
        let frame = Frame::new(&geometry, &params, 1)?;
        Ok(Self {
            params,
            geometry,
            frame,
        })
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// `B(0)` entirely red (so `(0, 0)` is occupied); every other site
    /// independently free/blue/red/frozen with probabilities (0, 1/2, 1/2, 0).
    pub fn initial(&self, seed: u64) -> Configuration {
        let d = self.frame.domain();
        let h = self.geometry.l;
        let states = (0..d.len() as u32)
            .map(|s| {
                let (a, b) = self.frame.point(s);
                if a.abs() <= h && b.abs() <= h {
                    SiteState::Red
                } else if CounterRng::from_words(&[seed, 0xB10C, s as u64]).uniform() < 0.5 {
                    SiteState::Blue
                } else {
                    SiteState::Red
                }
            })
            .collect();
        Configuration::from_states(d.lattice(), states).expect("sized from the frame")
    }

    fn rep(&self, seed: u64) -> Result<GraphicalRep> {
        build_events(
            seed,
            &self.params,
            self.frame.domain().clone(),
            self.geometry.t,
        )
    }

    /// Whether child `z` is occupied at level 1 in replica `seed`.
    pub fn child_occupied(&self, seed: u64, z: Block) -> Result<bool> {
        BlockGeometry::check_parity(z, 1)?;
        let rep = self.rep(seed)?;
        let xi0 = self.initial(seed);
        let mask = self.frame.restriction_mask(&self.geometry, z)?;
        let mut eng = Engine::with_options(
            &rep,
            &self.params,
            &xi0,
            EngineOptions {
                mask: Some(mask),
                record_history: false,
            },
        )?;
        eng.advance_to(self.geometry.t);
        is_occupied(&eng.configuration(), &self.frame, &self.geometry, z, 1)
    }

    /// Whether some red birth arrow hits a frozen site of `kappa(0)` during
    /// `[0, T]` in the run restricted around the origin.
    pub fn blocked(&self, seed: u64) -> Result<bool> {
        let rep = self.rep(seed)?;
        let xi0 = self.initial(seed);
        let mask = self.frame.restriction_mask(&self.geometry, (0, 0))?;
        let mut in_kappa = vec![false; xi0.len()];
        for p in self.geometry.kappa_points((0, 0)) {
            in_kappa[self.frame.site(p).ok_or(Error::BlockOutOfDomain(0, 0))? as usize] = true;
        }
        let blocker = |s: SiteState| matches!(s, SiteState::Blue | SiteState::Frozen);
        // without blue or frozen sites no block can ever happen
        let mut blockers = (0..xi0.len())
            .filter(|&s| mask[s] && blocker(xi0.get(s as u32)))
            .count();
        let mut eng = Engine::with_options(
            &rep,
            &self.params,
            &xi0,
            EngineOptions {
                mask: Some(mask),
                record_history: false,
            },
        )?;
        if !eng.thinning().freeze {
            return Ok(false);
        }
        while blockers > 0 {
            match eng.peek_time() {
                Some(t) if t <= self.geometry.t => {}
                _ => break,
            }
            let st = eng.step().expect("peeked");
            if st.blocked && st.target.is_some_and(|y| in_kappa[y as usize]) {
                return Ok(true);
            }
            if let Some((_, from, to)) = st.changed {
                blockers = blockers + blocker(to) as usize - blocker(from) as usize;
            }
        }
        Ok(false)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OccupancyEstimate {
    pub gamma: f64,
    /// Pooled over both children.
    pub estimate: Estimate,
    pub per_child: Vec<(Block, Estimate)>,
}

fn check_replicas(n: u64) -> Result<()> {
    if n < 30 {
        Err(Error::param("replicas", "must be >= 30"))
    } else {
        Ok(())
    }
}

/// Probability that `(0, 0)` occupied leads to the children occupied,
/// replica `r` using seed `base_seed + r`.
pub fn estimate_occupancy(
    params: &Params,
    geom: &BlockGeometry,
    replicas: u64,
    base_seed: u64,
) -> Result<OccupancyEstimate> {
    check_replicas(replicas)?;
    let exp = BlockExperiment::new(*params, *geom)?;
    let hits: Vec<[bool; 2]> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<[bool; 2]> {
            let seed = base_seed.wrapping_add(r);
            Ok([
                exp.child_occupied(seed, CHILDREN[0])?,
                exp.child_occupied(seed, CHILDREN[1])?,
            ])
        })
        .collect::<Result<_>>()?;
    let per_child: Vec<(Block, Estimate)> = (0..2)
        .map(|c| {
            let k = hits.iter().filter(|h| h[c]).count() as u64;
            (CHILDREN[c], Estimate::wilson(k, replicas))
        })
        .collect();
    let pooled = hits.iter().flatten().filter(|&&h| h).count() as u64;
    Ok(OccupancyEstimate {
        gamma: params.gamma,
        estimate: Estimate::wilson(pooled, 2 * replicas),
        per_child,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockingResult {
    pub gamma: f64,
    pub estimate: Estimate,
    /// `2 lambda2 T / (gamma (gamma + 1))`, zero for instant thaw.
    pub gamma_term: f64,
    /// `(2/3) M L`, the prefactor of the bound.
    pub prefactor: f64,
}

pub fn blocking_experiment(
    params: &Params,
    geom: &BlockGeometry,
    replicas: u64,
    base_seed: u64,
) -> Result<BlockingResult> {
    check_replicas(replicas)?;
    let exp = BlockExperiment::new(*params, *geom)?;
    let blocked: Vec<bool> = (0..replicas)
        .into_par_iter()
        .map(|r| exp.blocked(base_seed.wrapping_add(r)))
        .collect::<Result<_>>()?;
    let k = blocked.iter().filter(|&&b| b).count() as u64;
    let g = params.gamma;
    Ok(BlockingResult {
        gamma: g,
        estimate: Estimate::wilson(k, replicas),
        gamma_term: if g.is_infinite() {
            0.0
        } else {
            2.0 * params.lambda2 * geom.t / (g * (g + 1.0))
        },
        prefactor: 2.0 / 3.0 * (geom.m * geom.l) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{Dual, FrozenInfo};
    use crate::forward::{make_initial, InitialCondition};
    use proptest::prelude::*;

    fn params(g: f64) -> Params {
        Params::new(1.5, 3.0, g, 2)
    }

    #[test]
    fn default_tile_side() {
        assert_eq!(default_tile(20), 1);
        assert_eq!(default_tile(1), 1);
        assert_eq!(default_tile(10_000_000), 5);
    }

    #[test]
    fn unit_tiles_inside_the_box() {
        let g = BlockGeometry::new(4, 2).unwrap();
        let tiles = g.tiles((1, -1));
        // half-open unit cells at the boundary stick out of the closed box
        assert_eq!(tiles.len(), 49);
        assert_eq!(g.tile_points((3, 3)), vec![(3, 3)]);
    }

    #[test]
    fn parity() {
        assert!(BlockGeometry::check_parity((0, 0), 0).is_ok());
        assert!(BlockGeometry::check_parity((1, -1), 1).is_ok());
        assert!(matches!(
            BlockGeometry::check_parity((1, 0), 1),
            Err(Error::Parity { .. })
        ));
        assert!(matches!(
            BlockGeometry::check_parity((1, 1), 2),
            Err(Error::Parity { .. })
        ));
    }

    #[test]
    fn good_box_needs_a_red_per_tile_and_no_blue() {
        let g = BlockGeometry::new(4, 2).unwrap().with_tile(2).unwrap();
        let exp = BlockExperiment::new(params(1.0), g).unwrap();
        let f = exp.frame();
        let mut xi = Configuration::filled(f.domain().lattice(), SiteState::Free);
        assert!(!is_good_box(&xi, f, &g, (0, 0)).unwrap());
        for w in g.tiles((0, 0)) {
            let p = g.tile_points(w)[0];
            xi.set(f.site(p).unwrap(), SiteState::Red);
        }
        assert!(is_good_box(&xi, f, &g, (0, 0)).unwrap());
        // a tile only partly inside B(0) is not checked; a blue anywhere is
        xi.set(f.site((4, 4)).unwrap(), SiteState::Blue);
        assert!(!is_good_box(&xi, f, &g, (0, 0)).unwrap());
        assert!(matches!(
            is_good_box(&xi, f, &g, (9, 0)),
            Err(Error::BlockOutOfDomain(9, 0))
        ));
    }

    #[test]
    fn initial_box_is_occupied() {
        let g = BlockGeometry::new(5, 3).unwrap();
        let exp = BlockExperiment::new(params(1.0), g).unwrap();
        let xi = exp.initial(7);
        assert!(is_occupied(&xi, exp.frame(), &g, (0, 0), 0).unwrap());
        assert!(!is_good_box(&xi, exp.frame(), &g, (1, 1)).unwrap());
    }

    #[test]
    fn replicas_floor() {
        let g = BlockGeometry::new(5, 3).unwrap();
        assert!(estimate_occupancy(&params(1.0), &g, 29, 0).is_err());
        assert!(blocking_experiment(&params(1.0), &g, 10, 0).is_err());
    }

    #[test]
    fn instant_thaw_never_blocks() {
        let g = BlockGeometry::new(6, 3).unwrap();
        let r = blocking_experiment(&params(f64::INFINITY), &g, 30, 0).unwrap();
        assert_eq!(r.estimate.successes, 0);
        assert_eq!(r.gamma_term, 0.0);
    }

    #[test]
    fn slow_thaw_blocks_more_than_fast() {
        let g = BlockGeometry::new(6, 3).unwrap();
        let slow = blocking_experiment(&params(0.1), &g, 40, 1).unwrap();
        let fast = blocking_experiment(&params(100.0), &g, 40, 1).unwrap();
        assert!(slow.estimate.p >= fast.estimate.p);
        assert!(slow.estimate.p > 0.5);
    }

    #[test]
    fn no_blue_means_red_fills_boxes() {
        let p = Params::new(0.0, 3.0, 1.0, 2);
        let g = BlockGeometry::new(10, 3)
            .unwrap()
            .with_time(15.0)
            .unwrap()
            .with_tile(5)
            .unwrap();
        let r = estimate_occupancy(&p, &g, 30, 3).unwrap();
        assert!(r.estimate.p > 0.9, "{:?}", r.estimate);
    }

    #[test]
    fn no_red_means_no_occupancy() {
        let p = Params::new(3.0, 0.0, 1.0, 2);
        let g = BlockGeometry::new(5, 3).unwrap().with_time(15.0).unwrap();
        let r = estimate_occupancy(&p, &g, 30, 3).unwrap();
        assert!(r.estimate.p < 0.05, "{:?}", r.estimate);
    }

    #[test]
    #[ignore = "minutes of simulation"]
    fn occupancy_at_full_scale() {
        let g = BlockGeometry::new(20, 3).unwrap().with_tile(5).unwrap();
        for gamma in [0.1, 1.0, 10.0, 100.0] {
            let r = estimate_occupancy(&params(gamma), &g, 200, 0).unwrap();
            println!("gamma {gamma}: {:?}", r.estimate);
        }
        let r = estimate_occupancy(&Params::new(0.0, 3.0, 1.0, 2), &g, 200, 0).unwrap();
        assert!(r.estimate.p > 0.9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tiles_are_disjoint_and_inside(l in 1i64..30, m in 1i64..4, tile in 1i64..7, z1 in -3i64..4, z2 in -3i64..4) {
            prop_assume!(tile <= 2 * l);
            let g = BlockGeometry { l, t: 1.0, m, tile };
            let (cx, cy) = g.phi((z1, z2));
            let mut seen = std::collections::HashSet::new();
            for w in g.tiles((z1, z2)) {
                let pts = g.tile_points(w);
                prop_assert_eq!(pts.len() as i64, tile * tile);
                for p in pts {
                    prop_assert!((p.0 - cx).abs() <= l && (p.1 - cy).abs() <= l);
                    prop_assert!(seen.insert(p));
                }
            }
            // every tile that fits is listed
            let fits = |w: i64, c: i64| 2 * tile * w - tile >= 2 * (c - l) && 2 * tile * w + tile <= 2 * (c + l);
            let ny = (-200i64..200).filter(|&w| fits(w, cy)).count();
            for w0 in -200i64..200 {
                let listed = g.tiles((z1, z2)).iter().filter(|w| w.0 == w0).count();
                prop_assert_eq!(if fits(w0, cx) { ny } else { 0 }, listed);
            }
        }

        #[test]
        fn restriction_box_has_margin(l in 1i64..12, m in 2i64..4) {
            // every box within one block step lies well inside the restriction
            let g = BlockGeometry { l, t: 1.0, m, tile: 1 };
            let half = m * l;
            for z in [(0, 0), (1, 1), (-1, 1)] {
                let (cx, cy) = g.phi(z);
                for p in g.box_points(z) {
                    prop_assert!((p.0 - cx).abs() + l <= half && (p.1 - cy).abs() + l <= half);
                }
                prop_assert!(g.kappa_half() <= half);
            }
        }

        #[test]
        fn good_is_monotone(seed in 0u64..1000, flips in proptest::collection::vec((0i64..9, 0i64..9), 1..10)) {
            let g = BlockGeometry { l: 4, t: 1.0, m: 2, tile: 2 };
            let exp = BlockExperiment::new(params(1.0), g).unwrap();
            let f = exp.frame();
            let lat = f.domain().lattice();
            let mut xi = make_initial(&InitialCondition::Product([0.3, 0.05, 0.5, 0.15]), seed, lat).unwrap();
            let before = is_good_box(&xi, f, &g, (0, 0)).unwrap();
            // adding reds to non-blue sites and removing blues never hurts
            for (a, b) in flips {
                let s = f.site((a - 4, b - 4)).unwrap();
                xi.set(s, SiteState::Red);
            }
            let after = is_good_box(&xi, f, &g, (0, 0)).unwrap();
            prop_assert!(!before || after);
        }

        #[test]
        fn masked_run_agrees_inside_its_dependence(seed in 0u64..500, lo in 0i64..6, width in 4i64..10) {
            let p = Params::new(1.6, 2.4, 0.7, 1);
            let d = Arc::new(Domain::new(Lattice::new(&[16]).unwrap(), p.neighborhood().unwrap()).unwrap());
            let rep = build_events(seed, &p, d.clone(), 3.0).unwrap();
            let xi0 = make_initial(&InitialCondition::Product([0.2, 0.4, 0.4, 0.0]), seed, d.lattice()).unwrap();
            let mask: Vec<bool> = (0..16).map(|i| i >= lo && i < lo + width).collect();
            let mut full = Engine::new(&rep, &p, &xi0).unwrap();
            full.advance_to(3.0);
            let mut cut = Engine::with_options(&rep, &p, &xi0, EngineOptions { mask: Some(mask.clone()), record_history: false }).unwrap();
            cut.advance_to(3.0);
            for x in 0..16u32 {
                if !mask[x as usize] {
                    continue;
                }
                let mut dual = Dual::new(&rep, &p, &xi0, FrozenInfo::Recursive).unwrap();
                let c = dual.color(x, 3.0 + 1e-9);
                prop_assert_eq!(c, full.state(x));
                if dual.visited_sites().iter().all(|&s| mask[s as usize]) {
                    prop_assert_eq!(cut.state(x), full.state(x));
                }
            }
        }
    }
}
