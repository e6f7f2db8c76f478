//! Run configuration: a TOML tree, flag overrides applied to the tree, then
//! validation that reports the offending key path.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use allelopathy::forward::InitialCondition;
use allelopathy::meanfield::Form;
use allelopathy::{Error as CoreError, Norm, Params};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "ALLELO_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("override `{0}` must look like key.path=value")]
    Override(String),
    #[error("`{path}`: {reason}")]
    Key { path: String, reason: String },
}

impl ConfigError {
    fn key(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Key {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// A real number that also accepts decimal commas (`"1,96"`) and the
/// strings `inf` / `infinity`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Real(pub f64);

impl FromStr for Real {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().replace(',', ".");
        match t.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "+infinity" => return Ok(Real(f64::INFINITY)),
            _ => {}
        }
        t.parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .map(Real)
            .ok_or_else(|| format!("`{s}` is not a number"))
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number (decimal commas allowed)")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                if v.is_nan() {
                    Err(E::custom("NaN is not allowed"))
                } else {
                    Ok(Real(v))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Couple,
    DualCheck,
    Meanfield,
    Sweep,
    Blocks,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Couple => "couple",
            Mode::DualCheck => "dual-check",
            Mode::Meanfield => "meanfield",
            Mode::Sweep => "sweep",
            Mode::Blocks => "blocks",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub lambda1: Real,
    pub lambda2: Real,
    pub gamma: Real,
    #[serde(default = "one")]
    pub radius: Real,
    #[serde(default = "l1")]
    pub norm: Norm,
    #[serde(default = "two")]
    pub dim: usize,
}

fn one() -> Real {
    Real(1.0)
}
fn two() -> usize {
    2
}
fn l1() -> Norm {
    Norm::L1
}

impl ParamsConfig {
    pub fn to_params(&self) -> Params {
        Params {
            lambda1: self.lambda1.0,
            lambda2: self.lambda2.0,
            gamma: self.gamma.0,
            radius: self.radius.0,
            norm: self.norm,
            dim: self.dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOpts {
    /// Number of equal sampling intervals over `[0, horizon]`.
    #[serde(default = "default_samples")]
    pub samples: u32,
    /// Times at which a PGM snapshot is written; defaults to the horizon.
    #[serde(default)]
    pub snapshot_times: Option<Vec<Real>>,
    /// Also write the graphical representation as an event log.
    #[serde(default)]
    pub export_log: bool,
}

fn default_samples() -> u32 {
    50
}

impl Default for SimulateOpts {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            snapshot_times: None,
            export_log: false,
        }
    }
}

/// A coupled variant: fields left out are taken from `params`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Real>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleOpts {
    #[serde(default)]
    pub variants: Vec<VariantSpec>,
    /// Consecutive seeds starting at the run seed.
    #[serde(default = "one_u64")]
    pub seeds: u64,
    #[serde(default = "default_couple_samples")]
    pub samples: u32,
}

fn one_u64() -> u64 {
    1
}
fn default_couple_samples() -> u32 {
    20
}

impl Default for CoupleOpts {
    fn default() -> Self {
        Self {
            variants: Vec::new(),
            seeds: 1,
            samples: default_couple_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualCheckOpts {
    /// Random space-time points compared against the forward run.
    #[serde(default = "default_queries")]
    pub queries: u32,
    /// Root site of the exported dual tree; defaults to the lattice centre.
    #[serde(default)]
    pub tree_site: Option<u32>,
    /// Depth in dual time of the exported tree; defaults to the horizon.
    #[serde(default)]
    pub tree_depth: Option<Real>,
    /// Times at which the frozen-visit count of `tree_site` is reported.
    #[serde(default)]
    pub path_times: Option<Vec<Real>>,
    #[serde(default = "default_fav_samples")]
    pub favorability_samples: u64,
}

fn default_queries() -> u32 {
    200
}
fn default_fav_samples() -> u64 {
    20_000
}

impl Default for DualCheckOpts {
    fn default() -> Self {
        Self {
            queries: default_queries(),
            tree_site: None,
            tree_depth: None,
            path_times: None,
            favorability_samples: default_fav_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldOpts {
    #[serde(default)]
    pub form: Form,
    #[serde(default = "centre")]
    pub start: [Real; 4],
    #[serde(default = "default_dt")]
    pub dt: Real,
    #[serde(default = "default_t_end")]
    pub t_end: Real,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn centre() -> [Real; 4] {
    [Real(0.25); 4]
}
fn default_dt() -> Real {
    Real(0.01)
}
fn default_t_end() -> Real {
    Real(100.0)
}
fn default_record_every() -> usize {
    10
}

impl Default for MeanfieldOpts {
    fn default() -> Self {
        Self {
            form: Form::Corrected,
            start: centre(),
            dt: default_dt(),
            t_end: default_t_end(),
            record_every: default_record_every(),
        }
    }
}

/// Grid of the phase map; empty lists fall back to the `params` value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOpts {
    #[serde(default)]
    pub lambda1s: Vec<Real>,
    #[serde(default)]
    pub lambda2s: Vec<Real>,
    #[serde(default)]
    pub gammas: Vec<Real>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksOpts {
    #[serde(rename = "L", default = "default_l")]
    pub l: i64,
    #[serde(rename = "M", default = "default_m")]
    pub m: i64,
    /// Time per level; defaults to `L^2`.
    #[serde(rename = "T", default)]
    pub t: Option<Real>,
    /// Tile side; defaults to `max(1, round(L^0.1))`.
    #[serde(default)]
    pub tile: Option<i64>,
    /// Empty means the `params` value only.
    #[serde(default)]
    pub gammas: Vec<Real>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default = "yes")]
    pub occupancy: bool,
    #[serde(default = "yes")]
    pub blocking: bool,
}

fn default_l() -> i64 {
    20
}
fn default_m() -> i64 {
    3
}
fn default_replicas() -> u64 {
    60
}
fn yes() -> bool {
    true
}

impl Default for BlocksOpts {
    fn default() -> Self {
        Self {
            l: default_l(),
            m: default_m(),
            t: None,
            tile: None,
            gammas: Vec::new(),
            replicas: default_replicas(),
            occupancy: true,
            blocking: true,
        }
    }
}

/// Fully resolved run description. Mode sections other than the active
/// one are kept if present but ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sides")]
    pub sides: Vec<i64>,
    #[serde(default = "default_horizon")]
    pub horizon: Real,
    #[serde(default = "default_initial")]
    pub initial: String,
    /// Output directory; relative paths are placed under `$ALLELO_OUT`
    /// when it is set.
    #[serde(default = "default_output")]
    pub output: String,
    pub params: ParamsConfig,
    #[serde(default)]
    pub simulate: SimulateOpts,
    #[serde(default)]
    pub couple: CoupleOpts,
    #[serde(default)]
    pub dual_check: DualCheckOpts,
    #[serde(default)]
    pub meanfield: MeanfieldOpts,
    #[serde(default)]
    pub sweep: SweepOpts,
    #[serde(default)]
    pub blocks: BlocksOpts,
}

fn default_sides() -> Vec<i64> {
    vec![100, 100]
}
fn default_horizon() -> Real {
    Real(10.0)
}
fn default_initial() -> String {
    "product(0,0.5,0.5,0)".into()
}
fn default_output() -> String {
    "allelo-out".into()
}

/// Parses an override value: a TOML literal if it is one, else a string.
fn literal(s: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

/// Sets `path` (dotted) in `tree`, creating tables on the way.
pub fn set_path(tree: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), ConfigError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(path.into()));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut t = tree;
    for (i, k) in parents.iter().enumerate() {
        let entry = t
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::key(keys[..=i].join("."), "is not a table"))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Applies a `key.path=value` override.
pub fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.into()))?;
    set_path(tree, k.trim(), literal(v.trim()))
}

pub fn read_tree(path: &Path) -> Result<toml::Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tree(&text)
}

pub fn parse_tree(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>()
        .map_err(|e| ConfigError::Syntax(e.message().to_string()))
}

fn path_string(p: &serde_path_to_error::Path) -> String {
    let s = p.to_string();
    if s == "." {
        "<root>".into()
    } else {
        s
    }
}

impl RunConfig {
    /// Deserializes and validates a tree.
    pub fn from_tree(tree: toml::Table) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(tree))
            .map_err(|e| ConfigError::key(path_string(e.path()), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_tree(parse_tree(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Params {
        self.params.to_params()
    }

    pub fn sides(&self) -> Vec<usize> {
        self.sides.iter().map(|&s| s as usize).collect()
    }

    pub fn initial(&self) -> InitialCondition {
        self.initial.parse().expect("validated")
    }

    /// Parameters of coupled variant `i`.
    pub fn variant(&self, v: &VariantSpec) -> Params {
        let mut p = self.params();
        if let Some(x) = v.lambda1 {
            p.lambda1 = x.0;
        }
        if let Some(x) = v.lambda2 {
            p.lambda2 = x.0;
        }
        if let Some(x) = v.gamma {
            p.gamma = x.0;
        }
        p
    }

    /// Where outputs go, honoring `$ALLELO_OUT` for relative paths.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if !root.is_empty() => Path::new(&root).join(&self.output),
            _ => PathBuf::from(&self.output),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_params(&self.params(), "params")?;
        if self.sides.is_empty() {
            return Err(ConfigError::key("sides", "needs at least one side"));
        }
        for (i, &s) in self.sides.iter().enumerate() {
            if s <= 0 {
                return Err(ConfigError::key(
                    format!("sides[{i}]"),
                    format!("side length must be positive, got {s}"),
                ));
            }
        }
        let needs_lattice = !matches!(self.mode, Mode::Meanfield | Mode::Sweep | Mode::Blocks);
        if needs_lattice && self.sides.len() != self.params.dim {
            return Err(ConfigError::key(
                "sides",
                format!(
                    "{} sides given for dimension {}",
                    self.sides.len(),
                    self.params.dim
                ),
            ));
        }
        let h = self.horizon.0;
        if !(h > 0.0 && h.is_finite()) {
            return Err(ConfigError::key("horizon", "must be finite and > 0"));
        }
        self.initial
            .parse::<InitialCondition>()
            .map_err(|e| ConfigError::key("initial", core_reason(e)))?;
        if self.output.is_empty() {
            return Err(ConfigError::key("output", "must not be empty"));
        }
        let within = |t: f64| (0.0..=h).contains(&t);
        match self.mode {
            Mode::Simulate => {
                if self.simulate.samples == 0 {
                    return Err(ConfigError::key("simulate.samples", "must be >= 1"));
                }
                for (i, t) in self.simulate.snapshot_times.iter().flatten().enumerate() {
                    if !within(t.0) {
                        return Err(ConfigError::key(
                            format!("simulate.snapshot_times[{i}]"),
                            "must lie in [0, horizon]",
                        ));
                    }
                }
            }
            Mode::Couple => {
                let c = &self.couple;
                if c.variants.is_empty() {
                    return Err(ConfigError::key(
                        "couple.variants",
                        "needs at least one variant",
                    ));
                }
                for (i, v) in c.variants.iter().enumerate() {
                    check_params(&self.variant(v), &format!("couple.variants[{i}]"))?;
                }
                if c.seeds == 0 {
                    return Err(ConfigError::key("couple.seeds", "must be >= 1"));
                }
                if c.samples == 0 {
                    return Err(ConfigError::key("couple.samples", "must be >= 1"));
                }
            }
            Mode::DualCheck => {
                let d = &self.dual_check;
                let n: i64 = self.sides.iter().product();
                if let Some(x) = d.tree_site {
                    if i64::from(x) >= n {
                        return Err(ConfigError::key("dual_check.tree_site", "is not a site"));
                    }
                }
                if let Some(s) = d.tree_depth {
                    if !(s.0 >= 0.0 && s.0 <= h) {
                        return Err(ConfigError::key(
                            "dual_check.tree_depth",
                            "must lie in [0, horizon]",
                        ));
                    }
                }
                for (i, t) in d.path_times.iter().flatten().enumerate() {
                    if !within(t.0) {
                        return Err(ConfigError::key(
                            format!("dual_check.path_times[{i}]"),
                            "must lie in [0, horizon]",
                        ));
                    }
                }
                if d.favorability_samples < 1000 {
                    return Err(ConfigError::key(
                        "dual_check.favorability_samples",
                        "must be >= 1000",
                    ));
                }
            }
            Mode::Meanfield => {
                let m = &self.meanfield;
                if !(m.dt.0 > 0.0 && m.dt.0.is_finite()) {
                    return Err(ConfigError::key("meanfield.dt", "must be finite and > 0"));
                }
                if !(m.t_end.0 >= 0.0 && m.t_end.0.is_finite()) {
                    return Err(ConfigError::key(
                        "meanfield.t_end",
                        "must be finite and >= 0",
                    ));
                }
                if !self.params.gamma.0.is_finite() {
                    return Err(ConfigError::key(
                        "params.gamma",
                        "the ODE needs a finite gamma",
                    ));
                }
                let s: f64 = m.start.iter().map(|r| r.0).sum();
                if m.start.iter().any(|r| !(0.0..=1.0).contains(&r.0)) || (s - 1.0).abs() > 1e-9 {
                    return Err(ConfigError::key(
                        "meanfield.start",
                        "must be densities in [0,1] summing to 1",
                    ));
                }
            }
            Mode::Sweep => {
                let s = &self.sweep;
                for (key, list) in [("lambda1s", &s.lambda1s), ("lambda2s", &s.lambda2s)] {
                    for (i, x) in list.iter().enumerate() {
                        if !(x.0 >= 0.0 && x.0.is_finite()) {
                            return Err(ConfigError::key(
                                format!("sweep.{key}[{i}]"),
                                "must be finite and >= 0",
                            ));
                        }
                    }
                }
                for (i, g) in s.gammas.iter().enumerate() {
                    if !(g.0 > 0.0 && g.0.is_finite()) {
                        return Err(ConfigError::key(
                            format!("sweep.gammas[{i}]"),
                            "must be finite and > 0",
                        ));
                    }
                }
            }
            Mode::Blocks => {
                let b = &self.blocks;
                if self.params.dim != 2 {
                    return Err(ConfigError::key("params.dim", "blocks are two-dimensional"));
                }
                if b.l < 1 {
                    return Err(ConfigError::key("blocks.L", "must be >= 1"));
                }
                if b.m < 1 {
                    return Err(ConfigError::key("blocks.M", "must be >= 1"));
                }
                if let Some(t) = b.t {
                    if !(t.0 > 0.0 && t.0.is_finite()) {
                        return Err(ConfigError::key("blocks.T", "must be finite and > 0"));
                    }
                }
                if let Some(w) = b.tile {
                    if w < 1 {
                        return Err(ConfigError::key("blocks.tile", "must be >= 1"));
                    }
                }
                for (i, g) in b.gammas.iter().enumerate() {
                    if !(g.0 > 0.0) {
                        return Err(ConfigError::key(
                            format!("blocks.gammas[{i}]"),
                            "must be > 0",
                        ));
                    }
                }
                if b.replicas < 30 {
                    return Err(ConfigError::key("blocks.replicas", "must be >= 30"));
                }
            }
        }
        Ok(())
    }
}

fn core_reason(e: CoreError) -> String {
    match e {
        CoreError::InvalidParameter { reason, .. } => reason,
        other => other.to_string(),
    }
}

fn check_params(p: &Params, prefix: &str) -> Result<(), ConfigError> {
    p.validate()
        .and_then(|_| p.neighborhood().map(drop))
        .map_err(|e| match e {
            CoreError::InvalidParameter { name, reason } => {
                ConfigError::key(format!("{prefix}.{name}"), reason)
            }
            other => ConfigError::key(prefix, other.to_string()),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
        mode = "simulate"
        sides = [200, 200]
        horizon = 50
        [params]
        lambda1 = "1,96"
        lambda2 = 1.96
        gamma = "0,05"
    "#;

    #[test]
    fn decimal_commas_are_points() {
        let c = RunConfig::from_toml(FIG1).unwrap();
        assert_eq!(c.params.lambda1, Real(1.96));
        assert_eq!(c.params.gamma, Real(0.05));
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn echo_round_trips() {
        let mut tree = parse_tree(FIG1).unwrap();
        apply_override(&mut tree, "params.gamma=inf").unwrap();
        apply_override(&mut tree, "couple.variants=[{gamma=0.05},{gamma=0.5}]").unwrap();
        let c = RunConfig::from_tree(tree).unwrap();
        assert_eq!(c.params.gamma, Real(f64::INFINITY));
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    fn key_of(text: &str) -> String {
        match RunConfig::from_toml(text) {
            Err(ConfigError::Key { path, .. }) => path,
            other => panic!("expected a key error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(&FIG1.replace("\"0,05\"", "0")), "params.gamma");
        assert_eq!(key_of(&FIG1.replace("[200, 200]", "[200, -3]")), "sides[1]");
        assert_eq!(
            key_of(&FIG1.replace("lambda2 = 1.96", "lambda2 = true")),
            "params.lambda2"
        );
        assert_eq!(key_of(&format!("{FIG1}\ncolour = 1")), "params.colour");
        assert_eq!(
            key_of(&FIG1.replace("horizon = 50", "horizon = 50\nbogus = 1")),
            "bogus"
        );
        let blocks = FIG1.replace("\"simulate\"", "\"blocks\"");
        assert_eq!(key_of(&format!("{blocks}\n[blocks]\nL = 0\n")), "blocks.L");
    }

    #[test]
    fn overrides_win() {
        let mut tree = parse_tree(FIG1).unwrap();
        apply_override(&mut tree, "seed=7").unwrap();
        apply_override(&mut tree, "params.lambda1=2,5").unwrap();
        let c = RunConfig::from_tree(tree).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.params.lambda1, Real(2.5));
        assert!(apply_override(&mut parse_tree(FIG1).unwrap(), "novalue").is_err());
    }
}
