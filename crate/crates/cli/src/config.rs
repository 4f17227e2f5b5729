//! TOML run configuration.
//!
//! Every section and key is optional. Defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | 0 |
//! | `output` | `"out"` |
//! | `domain.lengths` | `[2π, 2π, 2π]` |
//! | `domain.sizes` | `[16, 16, 16]` |
//! | `physics.nu`, `physics.f` | 1.0, 1.0 |
//! | `physics.forcing` | none |
//! | `step.dt`, `step.cfl_limit`, `step.min_dt` | 1e-3, 0.5, dt/1024 |
//! | `initial.w1`, `initial.spin_up` | 1.0, 0.0 |
//! | `simulate.duration`, `simulate.sample_every` | 1.0, 100 steps |
//! | `squeeze.horizon`, `probes`, `leading`, `delta` | 0.5, 8, 2, 1e-4 |
//! | `squeeze.q_target`, `lipschitz_points` | 0.5, 5 |
//! | `det-modes.n`, `period`, `steps`, `relative_floor` | 0, 1.0, 30, 1e-10 |
//! | `kick.r_hat`, `r_kick`, `n_kick`, `modes` | 1.0, 0.1, 24, 64 |
//! | `kick.replicas`, `steps`, `coordinates`, `dictionary` | 16, 1000, 8, 64 |
//!
//! Unknown keys are errors. Parsing reports every problem it finds, each
//! with its line and dotted key path.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use pe3d::basis::capacity;
use pe3d::{DomainSpec, ForcingComponent, ForcingEntry, Phase, PhysParams, StepConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainSettings {
    pub lengths: [f64; 3],
    pub sizes: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForcingSettings {
    pub wavevector: [i64; 3],
    /// `"cos"` or `"sin"`.
    pub phase: String,
    /// `"v1"`, `"v2"` or `"b"`.
    pub component: String,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhysicsSettings {
    pub nu: f64,
    pub f: f64,
    pub forcing: Vec<ForcingSettings>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepSettings {
    pub dt: f64,
    pub cfl_limit: f64,
    pub min_dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitialSettings {
    /// W1 size of the random initial state.
    pub w1: f64,
    /// Evolution time applied before the experiment starts.
    pub spin_up: f64,
    /// Start from a stored state instead of a random one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSettings {
    pub duration: f64,
    /// Steps between recorded samples.
    pub sample_every: u64,
    /// Decay target for the final W1 norm, reported in the summary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Write a snapshot per sample.
    pub snapshots: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SqueezeSettings {
    pub horizon: f64,
    pub probes: usize,
    pub leading: usize,
    pub delta: f64,
    /// Basis size; the full truncation when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// Every `N` from 0 to the basis size when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    pub q_target: f64,
    pub lipschitz_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetModesSettings {
    pub n: usize,
    pub period: f64,
    pub steps: usize,
    /// Fit floor as a fraction of the initial difference.
    pub relative_floor: f64,
    /// Random-seed index of the slave (the master uses 0).
    pub slave_index: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KickSettings {
    pub r_hat: f64,
    pub r_kick: f64,
    pub n_kick: usize,
    pub modes: usize,
    /// Measured when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_c: Option<f64>,
    /// Equal to `t_c` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    pub tc_horizon: f64,
    pub tc_sample_every: f64,
    pub tc_leading: usize,
    pub tc_random: usize,
    pub replicas: usize,
    pub steps: usize,
    pub coordinates: usize,
    pub dictionary: usize,
    pub burn_in: usize,
    /// Basis element whose `r_hat` multiple starts the second ensemble.
    pub boundary: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagSettings {
    pub snapshots: Vec<PathBuf>,
    /// Time between consecutive snapshots; enables the energy budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Not part of the echo, so runs that differ only in where they write
    /// share a configuration hash.
    #[serde(skip)]
    pub output: PathBuf,
    pub domain: DomainSettings,
    pub physics: PhysicsSettings,
    pub step: StepSettings,
    pub initial: InitialSettings,
    pub simulate: SimulateSettings,
    pub squeeze: SqueezeSettings,
    #[serde(rename = "det-modes")]
    pub det_modes: DetModesSettings,
    pub kick: KickSettings,
    pub diag: DiagSettings,
    #[serde(skip)]
    built: Built,
}

#[derive(Clone, Debug, PartialEq)]
struct Built {
    domain: DomainSpec,
    params: PhysParams,
    step: StepConfig,
}

impl RunConfig {
    pub fn domain_spec(&self) -> DomainSpec {
        self.built.domain
    }

    pub fn params(&self) -> &PhysParams {
        &self.built.params
    }

    pub fn step_config(&self) -> StepConfig {
        self.built.step
    }

    /// Resolved configuration as TOML; parses back to the same value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let (doc, syntax) = DeTable::parse_recoverable(text);
    let mut cx = Cx {
        text,
        errors: Vec::new(),
    };
    for e in &syntax {
        let line = e.span().map(|s| cx.line(s.start));
        cx.errors.push(ConfigError {
            line,
            key: String::new(),
            message: e.message().to_string(),
        });
    }
    if !cx.errors.is_empty() {
        return Err(ConfigErrors(cx.errors));
    }
    let root = Sec {
        path: String::new(),
        table: Some(doc.get_ref()),
        line: None,
    };
    cx.allow(
        &root,
        &[
            "seed", "output", "domain", "physics", "step", "initial", "simulate", "squeeze",
            "det-modes", "kick", "diag",
        ],
    );
    let seed = cx.uint(&root, "seed", 0);
    let output = PathBuf::from(cx.string(&root, "output").unwrap_or_else(|| "out".into()));

    let s = cx.section(&root, "domain", &["lengths", "sizes"]);
    let domain = DomainSettings {
        lengths: cx.f64_array(&s, "lengths", [2.0 * PI; 3]),
        sizes: cx.usize_array(&s, "sizes", [16; 3]),
    };
    for (i, &l) in domain.lengths.iter().enumerate() {
        cx.require(&s, "lengths", l.is_finite() && l > 0.0, format!("L{} = {l} must be positive", i + 1));
    }
    for (i, &n) in domain.sizes.iter().enumerate() {
        cx.require(
            &s,
            "sizes",
            n >= 4 && n % 2 == 0,
            format!("n{} = {n} breaks the even-grid invariant (need an even size of at least 4)", i + 1),
        );
    }
    let spec = DomainSpec::new(domain.lengths, domain.sizes).ok();
    let cap = spec.as_ref().map(capacity);

    let s = cx.section(&root, "physics", &["nu", "f", "forcing"]);
    let nu = cx.float(&s, "nu", 1.0);
    cx.require(&s, "nu", nu.is_finite() && nu > 0.0, format!("viscosity must be positive, got {nu}"));
    let f = cx.float(&s, "f", 1.0);
    cx.require(&s, "f", f.is_finite(), format!("Coriolis parameter must be finite, got {f}"));
    let forcing = cx.forcing(&s);
    let physics = PhysicsSettings { nu, f, forcing };

    let s = cx.section(&root, "step", &["dt", "cfl_limit", "min_dt"]);
    let dt = cx.float(&s, "dt", 1e-3);
    cx.require(&s, "dt", dt.is_finite() && dt > 0.0, format!("time step must be positive, got {dt}"));
    let cfl_limit = cx.float(&s, "cfl_limit", 0.5);
    cx.require(
        &s,
        "cfl_limit",
        cfl_limit > 0.0 && cfl_limit <= 1.0,
        format!("must lie in (0, 1], got {cfl_limit}"),
    );
    let min_dt = cx.float(&s, "min_dt", dt / 1024.0);
    cx.require(
        &s,
        "min_dt",
        min_dt > 0.0 && min_dt <= dt,
        format!("must lie in (0, dt], got {min_dt}"),
    );
    let step = StepSettings {
        dt,
        cfl_limit,
        min_dt,
    };

    let s = cx.section(&root, "initial", &["w1", "spin_up", "snapshot"]);
    let initial = InitialSettings {
        w1: cx.float(&s, "w1", 1.0),
        spin_up: cx.float(&s, "spin_up", 0.0),
        snapshot: cx.string(&s, "snapshot").map(PathBuf::from),
    };
    cx.nonnegative(&s, "w1", initial.w1);
    cx.nonnegative(&s, "spin_up", initial.spin_up);

    let s = cx.section(&root, "simulate", &["duration", "sample_every", "epsilon", "snapshots"]);
    let simulate = SimulateSettings {
        duration: cx.float(&s, "duration", 1.0),
        sample_every: cx.uint(&s, "sample_every", 100),
        epsilon: cx.opt_float(&s, "epsilon"),
        snapshots: cx.boolean(&s, "snapshots", false),
    };
    cx.positive(&s, "duration", simulate.duration);
    cx.require(&s, "sample_every", simulate.sample_every >= 1, "must be at least 1".into());
    if let Some(e) = simulate.epsilon {
        cx.positive(&s, "epsilon", e);
    }

    let s = cx.section(
        &root,
        "squeeze",
        &["horizon", "probes", "leading", "delta", "modes", "n_list", "q_target", "lipschitz_points"],
    );
    let squeeze = SqueezeSettings {
        horizon: cx.float(&s, "horizon", 0.5),
        probes: cx.count(&s, "probes", 8),
        leading: cx.count(&s, "leading", 2),
        delta: cx.float(&s, "delta", 1e-4),
        modes: cx.opt_count(&s, "modes"),
        n_list: cx.count_list(&s, "n_list"),
        q_target: cx.float(&s, "q_target", 0.5),
        lipschitz_points: cx.count(&s, "lipschitz_points", 5),
    };
    cx.positive(&s, "horizon", squeeze.horizon);
    cx.require(&s, "probes", squeeze.probes >= 1, "need at least one probe".into());
    cx.positive(&s, "delta", squeeze.delta);
    cx.positive(&s, "q_target", squeeze.q_target);
    cx.require(&s, "lipschitz_points", squeeze.lipschitz_points >= 1, "must be at least 1".into());
    let squeeze_modes = cx.modes(&s, squeeze.modes, cap);
    if let (Some(list), Some(m)) = (&squeeze.n_list, squeeze_modes) {
        if let Some(n) = list.iter().find(|&&n| n > m) {
            cx.fail(&s, "n_list", format!("N = {n} exceeds the basis size {m}"));
        }
    }

    let s = cx.section(
        &root,
        "det-modes",
        &["n", "period", "steps", "relative_floor", "slave_index", "modes"],
    );
    let det_modes = DetModesSettings {
        n: cx.count(&s, "n", 0),
        period: cx.float(&s, "period", 1.0),
        steps: cx.count(&s, "steps", 30),
        relative_floor: cx.float(&s, "relative_floor", 1e-10),
        slave_index: cx.uint(&s, "slave_index", 1),
        modes: cx.opt_count(&s, "modes"),
    };
    cx.positive(&s, "period", det_modes.period);
    cx.require(&s, "steps", det_modes.steps >= 1, "must be at least 1".into());
    cx.nonnegative(&s, "relative_floor", det_modes.relative_floor);
    cx.require(&s, "slave_index", det_modes.slave_index != 0, "index 0 is the master".into());
    if let Some(m) = cx.modes(&s, det_modes.modes, cap) {
        cx.require(&s, "n", det_modes.n <= m, format!("N = {} exceeds the basis size {m}", det_modes.n));
    }

    let s = cx.section(
        &root,
        "kick",
        &[
            "r_hat", "r_kick", "n_kick", "modes", "t_c", "period", "tc_horizon", "tc_sample_every",
            "tc_leading", "tc_random", "replicas", "steps", "coordinates", "dictionary", "burn_in",
            "boundary",
        ],
    );
    let kick = KickSettings {
        r_hat: cx.float(&s, "r_hat", 1.0),
        r_kick: cx.float(&s, "r_kick", 0.1),
        n_kick: cx.count(&s, "n_kick", 24),
        modes: cx.count(&s, "modes", 64),
        t_c: cx.opt_float(&s, "t_c"),
        period: cx.opt_float(&s, "period"),
        tc_horizon: cx.float(&s, "tc_horizon", 4.0),
        tc_sample_every: cx.float(&s, "tc_sample_every", 0.25),
        tc_leading: cx.count(&s, "tc_leading", 4),
        tc_random: cx.count(&s, "tc_random", 4),
        replicas: cx.count(&s, "replicas", 16),
        steps: cx.count(&s, "steps", 1000),
        coordinates: cx.count(&s, "coordinates", 8),
        dictionary: cx.count(&s, "dictionary", 64),
        burn_in: cx.count(&s, "burn_in", 1),
        boundary: cx.count(&s, "boundary", 0),
    };
    cx.positive(&s, "r_hat", kick.r_hat);
    cx.require(
        &s,
        "r_kick",
        kick.r_kick >= 0.0 && kick.r_kick < kick.r_hat,
        format!("need 0 <= r_kick < r_hat, got {}", kick.r_kick),
    );
    if let Some(m) = cx.modes(&s, Some(kick.modes), cap) {
        cx.require(&s, "n_kick", kick.n_kick <= m, format!("exceeds the basis size {m}"));
        cx.require(&s, "coordinates", kick.coordinates <= m, format!("exceeds the basis size {m}"));
        cx.require(&s, "boundary", kick.boundary < m, format!("must be below the basis size {m}"));
    }
    if let Some(t) = kick.t_c {
        cx.require(&s, "t_c", t >= 1.0, format!("must be at least 1, got {t}"));
    }
    if let Some(p) = kick.period {
        let t_c = kick.t_c.unwrap_or(1.0);
        cx.require(&s, "period", p >= t_c, format!("must be at least t_c, got {p}"));
    }
    cx.positive(&s, "tc_horizon", kick.tc_horizon);
    cx.positive(&s, "tc_sample_every", kick.tc_sample_every);
    cx.require(&s, "replicas", kick.replicas >= 1, "must be at least 1".into());
    cx.require(&s, "steps", kick.steps >= 1, "must be at least 1".into());
    cx.require(&s, "dictionary", kick.dictionary >= 1, "must be at least 1".into());

    let s = cx.section(&root, "diag", &["snapshots", "interval"]);
    let diag = DiagSettings {
        snapshots: cx
            .string_list(&s, "snapshots")
            .into_iter()
            .map(PathBuf::from)
            .collect(),
        interval: cx.opt_float(&s, "interval"),
    };
    if let Some(i) = diag.interval {
        cx.positive(&s, "interval", i);
    }

    let built = if cx.errors.is_empty() {
        cx.build(&domain, &physics, &step)
    } else {
        None
    };
    match built {
        Some(built) if cx.errors.is_empty() => Ok(RunConfig {
            seed,
            output,
            domain,
            physics,
            step,
            initial,
            simulate,
            squeeze,
            det_modes,
            kick,
            diag,
            built,
        }),
        _ => Err(ConfigErrors(cx.errors)),
    }
}

impl RunConfig {
    /// Same configuration with the seed replaced.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_output(mut self, output: PathBuf) -> Self {
        self.output = output;
        self
    }
}

type Value<'i> = Spanned<DeValue<'i>>;

struct Sec<'a, 'i> {
    path: String,
    table: Option<&'a DeTable<'i>>,
    line: Option<usize>,
}

struct Cx<'t> {
    text: &'t str,
    errors: Vec<ConfigError>,
}

impl Cx<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn key_path(sec: &Sec, key: &str) -> String {
        if sec.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", sec.path)
        }
    }

    fn lookup<'a, 'i>(sec: &Sec<'a, 'i>, key: &str) -> Option<&'a Value<'i>> {
        sec.table?
            .iter()
            .find(|(k, _)| k.get_ref().as_ref() == key)
            .map(|(_, v)| v)
    }

    fn fail(&mut self, sec: &Sec, key: &str, message: String) {
        let line = Self::lookup(sec, key)
            .map(|v| self.line(v.span().start))
            .or(sec.line);
        self.errors.push(ConfigError {
            line,
            key: Self::key_path(sec, key),
            message,
        });
    }

    fn require(&mut self, sec: &Sec, key: &str, ok: bool, message: String) {
        if !ok {
            self.fail(sec, key, message);
        }
    }

    fn positive(&mut self, sec: &Sec, key: &str, x: f64) {
        self.require(sec, key, x.is_finite() && x > 0.0, format!("must be positive, got {x}"));
    }

    fn nonnegative(&mut self, sec: &Sec, key: &str, x: f64) {
        self.require(sec, key, x.is_finite() && x >= 0.0, format!("must be nonnegative, got {x}"));
    }

    fn allow(&mut self, sec: &Sec, allowed: &[&str]) {
        let Some(table) = sec.table else { return };
        for (k, _) in table.iter() {
            let name = k.get_ref().as_ref();
            if !allowed.contains(&name) {
                let line = self.line(k.span().start);
                self.errors.push(ConfigError {
                    line: Some(line),
                    key: Self::key_path(sec, name),
                    message: "unknown key".into(),
                });
            }
        }
    }

    fn section<'a, 'i>(&mut self, parent: &Sec<'a, 'i>, name: &str, allowed: &[&str]) -> Sec<'a, 'i> {
        let path = Self::key_path(parent, name);
        let sec = match Self::lookup(parent, name) {
            None => Sec {
                path,
                table: None,
                line: None,
            },
            Some(v) => {
                let line = Some(self.line(v.span().start));
                match v.get_ref() {
                    DeValue::Table(t) => Sec {
                        path,
                        table: Some(t),
                        line,
                    },
                    other => {
                        self.errors.push(ConfigError {
                            line,
                            key: path.clone(),
                            message: format!("expected a table, found {}", other.type_str()),
                        });
                        Sec {
                            path,
                            table: None,
                            line,
                        }
                    }
                }
            }
        };
        self.allow(&sec, allowed);
        sec
    }

    fn mismatch(&mut self, sec: &Sec, key: &str, expected: &str, v: &Value) {
        let line = Some(self.line(v.span().start));
        self.errors.push(ConfigError {
            line,
            key: Self::key_path(sec, key),
            message: format!("expected {expected}, found {}", v.get_ref().type_str()),
        });
    }

    fn as_float(v: &DeValue) -> Option<f64> {
        match v {
            DeValue::Float(x) => x.as_str().replace('_', "").parse().ok(),
            DeValue::Integer(i) => Self::as_int(v).map(|n| n as f64).or_else(|| i.as_str().parse().ok()),
            _ => None,
        }
    }

    fn as_int(v: &DeValue) -> Option<i64> {
        match v {
            DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok(),
            _ => None,
        }
    }

    fn opt_float(&mut self, sec: &Sec, key: &str) -> Option<f64> {
        let v = Self::lookup(sec, key)?;
        let x = Self::as_float(v.get_ref());
        if x.is_none() {
            self.mismatch(sec, key, "a number", v);
        }
        x
    }

    fn float(&mut self, sec: &Sec, key: &str, default: f64) -> f64 {
        self.opt_float(sec, key).unwrap_or(default)
    }

    fn opt_uint(&mut self, sec: &Sec, key: &str) -> Option<u64> {
        let v = Self::lookup(sec, key)?;
        let x = match v.get_ref() {
            DeValue::Integer(i) => u64::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok(),
            _ => None,
        };
        if x.is_none() {
            self.mismatch(sec, key, "a nonnegative integer", v);
        }
        x
    }

    fn uint(&mut self, sec: &Sec, key: &str, default: u64) -> u64 {
        self.opt_uint(sec, key).unwrap_or(default)
    }

    fn opt_count(&mut self, sec: &Sec, key: &str) -> Option<usize> {
        self.opt_uint(sec, key).map(|n| n as usize)
    }

    fn count(&mut self, sec: &Sec, key: &str, default: usize) -> usize {
        self.opt_count(sec, key).unwrap_or(default)
    }

    fn boolean(&mut self, sec: &Sec, key: &str, default: bool) -> bool {
        let Some(v) = Self::lookup(sec, key) else { return default };
        match v.get_ref() {
            DeValue::Boolean(b) => *b,
            _ => {
                self.mismatch(sec, key, "a boolean", v);
                default
            }
        }
    }

    fn string(&mut self, sec: &Sec, key: &str) -> Option<String> {
        let v = Self::lookup(sec, key)?;
        match v.get_ref() {
            DeValue::String(s) => Some(s.to_string()),
            _ => {
                self.mismatch(sec, key, "a string", v);
                None
            }
        }
    }

    fn array<'a, 'i>(&mut self, sec: &Sec<'a, 'i>, key: &str) -> Option<&'a [Value<'i>]> {
        let v = Self::lookup(sec, key)?;
        match v.get_ref() {
            DeValue::Array(a) => Some(a),
            _ => {
                self.mismatch(sec, key, "an array", v);
                None
            }
        }
    }

    fn list<T>(
        &mut self,
        sec: &Sec,
        key: &str,
        expected: &str,
        conv: impl Fn(&DeValue) -> Option<T>,
    ) -> Option<Vec<T>> {
        let items = self.array(sec, key)?;
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match conv(item.get_ref()) {
                Some(x) => out.push(x),
                None => {
                    self.mismatch(sec, key, expected, item);
                    return None;
                }
            }
        }
        Some(out)
    }

    fn triple<T: Copy>(
        &mut self,
        sec: &Sec,
        key: &str,
        expected: &str,
        default: [T; 3],
        conv: impl Fn(&DeValue) -> Option<T>,
    ) -> [T; 3] {
        match self.list(sec, key, expected, conv) {
            Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
            Some(v) => {
                self.fail(sec, key, format!("expected 3 entries, found {}", v.len()));
                default
            }
            None => default,
        }
    }

    fn f64_array(&mut self, sec: &Sec, key: &str, default: [f64; 3]) -> [f64; 3] {
        self.triple(sec, key, "a number", default, Self::as_float)
    }

    fn usize_array(&mut self, sec: &Sec, key: &str, default: [usize; 3]) -> [usize; 3] {
        self.triple(sec, key, "a nonnegative integer", default, |v| {
            Self::as_int(v).and_then(|n| usize::try_from(n).ok())
        })
    }

    fn count_list(&mut self, sec: &Sec, key: &str) -> Option<Vec<usize>> {
        self.list(sec, key, "a nonnegative integer", |v| {
            Self::as_int(v).and_then(|n| usize::try_from(n).ok())
        })
    }

    fn string_list(&mut self, sec: &Sec, key: &str) -> Vec<String> {
        self.list(sec, key, "a string", |v| match v {
            DeValue::String(s) => Some(s.to_string()),
            _ => None,
        })
        .unwrap_or_default()
    }

    fn modes(&mut self, sec: &Sec, modes: Option<usize>, cap: Option<usize>) -> Option<usize> {
        let cap = cap?;
        match modes {
            None => Some(cap),
            Some(m) if m >= 1 && m <= cap => Some(m),
            Some(m) => {
                self.fail(sec, "modes", format!("need 1 <= modes <= {cap} (the truncation size), got {m}"));
                None
            }
        }
    }

    fn forcing(&mut self, physics: &Sec) -> Vec<ForcingSettings> {
        let Some(items) = self.array(physics, "forcing") else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, item) in items.iter().enumerate() {
            let path = format!("{}.forcing[{i}]", physics.path);
            let line = Some(self.line(item.span().start));
            let DeValue::Table(t) = item.get_ref() else {
                self.errors.push(ConfigError {
                    line,
                    key: path,
                    message: format!("expected a table, found {}", item.get_ref().type_str()),
                });
                continue;
            };
            let sec = Sec {
                path,
                table: Some(t),
                line,
            };
            self.allow(&sec, &["wavevector", "phase", "component", "amplitude"]);
            let wavevector = self.triple(&sec, "wavevector", "an integer", [0; 3], Self::as_int);
            let phase = self.string(&sec, "phase").unwrap_or_else(|| "cos".into());
            self.require(
                &sec,
                "phase",
                matches!(phase.as_str(), "cos" | "sin"),
                format!("expected \"cos\" or \"sin\", found {phase:?}"),
            );
            let component = match self.string(&sec, "component") {
                Some(c) => c,
                None => {
                    self.fail(&sec, "component", "missing (one of \"v1\", \"v2\", \"b\")".into());
                    String::new()
                }
            };
            if !component.is_empty() {
                self.require(
                    &sec,
                    "component",
                    matches!(component.as_str(), "v1" | "v2" | "b"),
                    format!("expected \"v1\", \"v2\" or \"b\", found {component:?}"),
                );
            }
            let amplitude = self.float(&sec, "amplitude", 1.0);
            self.require(&sec, "amplitude", amplitude.is_finite(), "must be finite".into());
            out.push(ForcingSettings {
                wavevector,
                phase,
                component,
                amplitude,
            });
        }
        out
    }

    fn build(
        &mut self,
        domain: &DomainSettings,
        physics: &PhysicsSettings,
        step: &StepSettings,
    ) -> Option<Built> {
        let spec = match DomainSpec::new(domain.lengths, domain.sizes) {
            Ok(s) => s,
            Err(e) => {
                self.errors.push(ConfigError {
                    line: None,
                    key: "domain".into(),
                    message: e.to_string(),
                });
                return None;
            }
        };
        let entries: Vec<ForcingEntry> = physics
            .forcing
            .iter()
            .map(|e| ForcingEntry {
                wavevector: e.wavevector,
                phase: if e.phase == "sin" { Phase::Sin } else { Phase::Cos },
                component: match e.component.as_str() {
                    "v1" => ForcingComponent::V1,
                    "v2" => ForcingComponent::V2,
                    _ => ForcingComponent::B,
                },
                amplitude: e.amplitude,
            })
            .collect();
        let params = match PhysParams::from_entries(spec, physics.nu, physics.f, &entries) {
            Ok(p) => p,
            Err(e) => {
                self.errors.push(ConfigError {
                    line: None,
                    key: "physics.forcing".into(),
                    message: e.to_string(),
                });
                return None;
            }
        };
        let cfg = StepConfig {
            dt: step.dt,
            cfl_limit: step.cfl_limit,
            max_dt: step.dt,
            min_dt: step.min_dt,
            ..StepConfig::default()
        };
        if let Err(e) = cfg.validate() {
            self.errors.push(ConfigError {
                line: None,
                key: "step".into(),
                message: e.to_string(),
            });
            return None;
        }
        Some(Built {
            domain: spec,
            params,
            step: cfg,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.domain.sizes, [16; 3]);
        assert_eq!(c.domain.lengths, [2.0 * PI; 3]);
        assert_eq!((c.physics.nu, c.physics.f), (1.0, 1.0));
        assert_eq!(c.step.dt, 1e-3);
        assert_eq!(c.step.min_dt, 1e-3 / 1024.0);
        assert!(c.params().is_unforced());
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn echo_round_trips() {
        let text = "seed = 7\n[physics]\nnu = 0.5\n[[physics.forcing]]\nwavevector = [0, 1, 0]\nphase = \"sin\"\ncomponent = \"v1\"\namplitude = 3.0\n[squeeze]\nn_list = [0, 4]\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn reports_every_error_with_lines() {
        let text = "[physics]\nnu = -1.0\n[domain]\nsizes = [16, 15, 16]\nbogus = 1\n";
        let e = parse_config(text).unwrap_err();
        let msgs: Vec<String> = e.0.iter().map(|x| x.to_string()).collect();
        assert_eq!(e.0.len(), 3, "{msgs:?}");
        assert!(msgs.iter().any(|m| m.starts_with("line 2: physics.nu")));
        assert!(msgs.iter().any(|m| m.starts_with("line 4: domain.sizes") && m.contains("even-grid")));
        assert!(msgs.iter().any(|m| m.starts_with("line 5: domain.bogus: unknown key")));
    }

    #[test]
    fn type_errors_name_the_key() {
        let e = parse_config("[step]\ndt = \"fast\"\n").unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].key, "step.dt");
        assert_eq!(e.0[0].line, Some(2));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = parse_config("seed = 1\n[domain\n").unwrap_err();
        assert_eq!(e.0[0].line, Some(2));
    }

    #[test]
    fn forcing_outside_truncation_is_rejected() {
        let text = "[[physics.forcing]]\nwavevector = [0, 9, 0]\ncomponent = \"v1\"\n";
        let e = parse_config(text).unwrap_err();
        assert_eq!(e.0[0].key, "physics.forcing");
    }
}
