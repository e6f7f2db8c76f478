//! Torus geometry, neighborhoods, site states and the transition-rate table.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// State of a single site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SiteState {
    Free = 0,
    Blue = 1,
    Red = 2,
    Frozen = 3,
}

impl SiteState {
    pub const ALL: [SiteState; 4] = [
        SiteState::Free,
        SiteState::Blue,
        SiteState::Red,
        SiteState::Frozen,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn is_occupied(self) -> bool {
        matches!(self, SiteState::Blue | SiteState::Red)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    #[serde(alias = "linf")]
    LInf,
}

impl Norm {
    fn within(self, y: &[i64], r: f64) -> bool {
        match self {
            Norm::L1 => y.iter().map(|c| c.abs()).sum::<i64>() as f64 <= r,
            Norm::L2 => y.iter().map(|c| c * c).sum::<i64>() as f64 <= r * r,
            Norm::LInf => y.iter().map(|c| c.abs()).max().unwrap_or(0) as f64 <= r,
        }
    }
}

/// Nonzero integer vectors within distance `radius`, lexicographically ordered.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    radius: f64,
    norm: Norm,
    dim: usize,
    offsets: Vec<Vec<i64>>,
}

impl Neighborhood {
    pub fn build(radius: f64, norm: Norm, dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::param("dim", "dimension must be at least 1"));
        }
        if !(radius >= 1.0) || !radius.is_finite() {
            return Err(Error::param(
                "radius",
                format!("{radius} < 1 gives an empty neighborhood"),
            ));
        }
        let reach = radius.floor() as i64;
        let mut offsets = Vec::new();
        let mut y = vec![-reach; dim];
        loop {
            if y.iter().any(|&c| c != 0) && norm.within(&y, radius) {
                offsets.push(y.clone());
            }
            // odometer over [-reach, reach]^dim, last axis fastest => lexicographic
            let mut axis = dim;
            loop {
                if axis == 0 {
                    return Ok(Self {
                        radius,
                        norm,
                        dim,
                        offsets,
                    });
                }
                axis -= 1;
                if y[axis] < reach {
                    y[axis] += 1;
                    break;
                }
                y[axis] = -reach;
            }
        }
    }

    pub fn nearest(dim: usize) -> Self {
        Self::build(1.0, Norm::L1, dim).expect("nearest-neighbor set is valid")
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    /// `card N`.
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest absolute coordinate of any offset.
    pub fn reach(&self) -> i64 {
        self.offsets
            .iter()
            .flat_map(|y| y.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }
}

/// Periodic box with the given side lengths; sites are row-major indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    sides: Vec<usize>,
}

impl Lattice {
    pub fn new(sides: &[usize]) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::param("sides", "at least one axis is required"));
        }
        if sides.iter().any(|&s| s == 0) {
            return Err(Error::param("sides", "side lengths must be positive"));
        }
        let total = sides.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
        match total {
            Some(n) if n <= u32::MAX as usize => Ok(Self {
                sides: sides.to_vec(),
            }),
            _ => Err(Error::param("sides", "too many sites")),
        }
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn len(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self, site: u32) -> Vec<i64> {
        let mut rest = site as usize;
        let mut c = vec![0i64; self.dim()];
        for axis in (0..self.dim()).rev() {
            c[axis] = (rest % self.sides[axis]) as i64;
            rest /= self.sides[axis];
        }
        c
    }

    /// Index of the site at `coords`, wrapped onto the torus.
    pub fn index(&self, coords: &[i64]) -> u32 {
        debug_assert_eq!(coords.len(), self.dim());
        let mut idx = 0usize;
        for (axis, &c) in coords.iter().enumerate() {
            let s = self.sides[axis] as i64;
            idx = idx * self.sides[axis] + c.rem_euclid(s) as usize;
        }
        idx as u32
    }

    pub fn shift(&self, site: u32, offset: &[i64]) -> u32 {
        let mut c = self.coords(site);
        for (a, o) in c.iter_mut().zip(offset) {
            *a += o;
        }
        self.index(&c)
    }
}

/// A lattice together with a neighborhood and precomputed neighbor tables.
#[derive(Clone, Debug)]
pub struct Domain {
    lattice: Lattice,
    neighborhood: Neighborhood,
    targets: Vec<u32>,
    sources: Vec<u32>,
}

impl Domain {
    pub fn new(lattice: Lattice, neighborhood: Neighborhood) -> Result<Self> {
        if lattice.dim() != neighborhood.dim() {
            return Err(Error::DomainMismatch(format!(
                "lattice has dimension {} but neighborhood has {}",
                lattice.dim(),
                neighborhood.dim()
            )));
        }
        let reach = neighborhood.reach();
        if lattice.sides().iter().any(|&s| (s as i64) <= 2 * reach) {
            return Err(Error::param(
                "sides",
                format!("every side must exceed twice the neighborhood reach ({reach})"),
            ));
        }
        let n = lattice.len();
        let card = neighborhood.len();
        let mut targets = Vec::with_capacity(n * card);
        let mut sources = Vec::with_capacity(n * card);
        for site in 0..n as u32 {
            for y in neighborhood.offsets() {
                targets.push(lattice.shift(site, y));
                let neg: Vec<i64> = y.iter().map(|c| -c).collect();
                sources.push(lattice.shift(site, &neg));
            }
        }
        Ok(Self {
            lattice,
            neighborhood,
            targets,
            sources,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn neighborhood(&self) -> &Neighborhood {
        &self.neighborhood
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn card(&self) -> usize {
        self.neighborhood.len()
    }

    /// Target of the arrow leaving `site` along offset `k`.
    #[inline]
    pub fn target(&self, site: u32, k: usize) -> u32 {
        self.targets[site as usize * self.card() + k]
    }

    /// Source of the arrow that reaches `site` along offset `k`.
    #[inline]
    pub fn source(&self, site: u32, k: usize) -> u32 {
        self.sources[site as usize * self.card() + k]
    }

    /// Offset index `k` with `target(site, k) == target`, if any.
    pub fn offset_to(&self, site: u32, target: u32) -> Option<usize> {
        (0..self.card()).find(|&k| self.target(site, k) == target)
    }

    /// Neighbors of `site` in offset order.
    pub fn neighbors(&self, site: u32) -> &[u32] {
        let c = self.card();
        &self.targets[site as usize * c..(site as usize + 1) * c]
    }

    pub fn same_geometry(&self, other: &Domain) -> bool {
        self.lattice == other.lattice && self.neighborhood == other.neighborhood
    }
}

/// States of every site of a lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    lattice: Lattice,
    states: Vec<SiteState>,
}

impl Configuration {
    pub fn filled(lattice: &Lattice, state: SiteState) -> Self {
        Self {
            lattice: lattice.clone(),
            states: vec![state; lattice.len()],
        }
    }

    pub fn from_states(lattice: &Lattice, states: Vec<SiteState>) -> Result<Self> {
        if states.len() != lattice.len() {
            return Err(Error::DomainMismatch(format!(
                "{} states for {} sites",
                states.len(),
                lattice.len()
            )));
        }
        Ok(Self {
            lattice: lattice.clone(),
            states,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn states(&self) -> &[SiteState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn get(&self, site: u32) -> SiteState {
        self.states[site as usize]
    }

    #[inline]
    pub fn set(&mut self, site: u32, s: SiteState) {
        self.states[site as usize] = s;
    }

    pub fn count(&self, s: SiteState) -> usize {
        self.states.iter().filter(|&&v| v == s).count()
    }

    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0usize; 4];
        for s in &self.states {
            c[s.index()] += 1;
        }
        c
    }

    pub fn densities(&self) -> [f64; 4] {
        let n = self.states.len() as f64;
        self.counts().map(|c| c as f64 / n)
    }

    /// Sites in the given state.
    pub fn sites_in(&self, s: SiteState) -> impl Iterator<Item = u32> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(move |(_, &v)| v == s)
            .map(|(i, _)| i as u32)
    }
}

/// Model parameters. `gamma = f64::INFINITY` is the instant-thaw variant:
/// a cross on a blue site frees it directly (the multitype contact process).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_norm")]
    pub norm: Norm,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_radius() -> f64 {
    1.0
}
fn default_norm() -> Norm {
    Norm::L1
}
fn default_dim() -> usize {
    2
}

impl Params {
    /// Nearest-neighbor model in dimension `dim`.
    pub fn new(lambda1: f64, lambda2: f64, gamma: f64, dim: usize) -> Self {
        Self {
            lambda1,
            lambda2,
            gamma,
            radius: 1.0,
            norm: Norm::L1,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !self.lambda1.is_finite() {
            return Err(Error::param("lambda1", "must be finite and >= 0"));
        }
        if !(self.lambda2 >= 0.0) || !self.lambda2.is_finite() {
            return Err(Error::param("lambda2", "must be finite and >= 0"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::param("gamma", "must be > 0"));
        }
        if !(self.radius >= 1.0) {
            return Err(Error::param("radius", "must be >= 1"));
        }
        if self.dim < 1 {
            return Err(Error::param("dim", "must be >= 1"));
        }
        Ok(())
    }

    /// Largest birth rate, the rate of the shared arrow process.
    pub fn max_lambda(&self) -> f64 {
        self.lambda1.max(self.lambda2)
    }

    pub fn instant_thaw(&self) -> bool {
        self.gamma.is_infinite()
    }

    pub fn neighborhood(&self) -> Result<Neighborhood> {
        Neighborhood::build(self.radius, self.norm, self.dim)
    }

    pub fn same_geometry(&self, other: &Params) -> bool {
        self.radius == other.radius && self.norm == other.norm && self.dim == other.dim
    }
}

/// `f_i(x, xi)`: fraction of the neighbors of `x` in state `state`.
pub fn fraction_occupied(domain: &Domain, config: &Configuration, x: u32, state: SiteState) -> f64 {
    let hits = domain
        .neighbors(x)
        .iter()
        .filter(|&&y| config.get(y) == state)
        .count();
    hits as f64 / domain.card() as f64
}

/// Rate at which site `x` jumps to `target` in configuration `config`.
pub fn transition_rate(
    domain: &Domain,
    config: &Configuration,
    x: u32,
    target: SiteState,
    params: &Params,
) -> f64 {
    use SiteState::*;
    match (config.get(x), target) {
        (Free, Blue) | (Frozen, Blue) => {
            params.lambda1 * fraction_occupied(domain, config, x, Blue)
        }
        (Free, Red) => params.lambda2 * fraction_occupied(domain, config, x, Red),
        (Blue, Frozen) if !params.instant_thaw() => 1.0,
        (Blue, Free) if params.instant_thaw() => 1.0,
        (Frozen, Free) => params.gamma,
        (Red, Free) => 1.0,
        _ => 0.0,
    }
}

/// Whether `from -> to` is a transition of the model.
pub fn is_allowed_transition(from: SiteState, to: SiteState, instant_thaw: bool) -> bool {
    use SiteState::*;
    matches!(
        (from, to),
        (Free, Blue) | (Frozen, Blue) | (Free, Red) | (Frozen, Free) | (Red, Free)
    ) || (from, to) == (Blue, if instant_thaw { Free } else { Frozen })
}
