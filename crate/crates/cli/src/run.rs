//! Subcommand dispatch and artifact writing.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use pe3d::diagnostics::{
    detect_absorption, energy_budget, record, splitting_norms, AbsorptionOptions, Sample,
};
use pe3d::experiments::{
    determining_sync, dimension_report, make_probes, random_seed, spin_up, squeeze_scan,
};
use pe3d::kick::{choose_tc, ergodicity_probe, sphere_probes, ChainConfig, ErgodicityOptions, KickSpec};
use pe3d::snapshot::{load_state, save_state, VERSION as SNAPSHOT_VERSION};
use pe3d::{build_basis, Error, Solver, State, Transform};

use crate::config::{ConfigErrors, RunConfig};
use crate::plotdata::{emit_plotdata, PlotError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Squeeze,
    DetModes,
    Kick,
    Diag,
    Plotdata,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Squeeze => "squeeze",
            Command::DetModes => "det-modes",
            Command::Kick => "kick",
            Command::Diag => "diag",
            Command::Plotdata => "plotdata",
            Command::Check => "check",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigErrors),
    Core(Error),
    Io { path: PathBuf, source: std::io::Error },
    Plot(PlotError),
}

impl CliError {
    /// Process exit status: 2 configuration, 3 blow-up, 4 I/O and file
    /// format, 5 invariant violation, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Plot(_) => 4,
            CliError::Core(e) => match e {
                Error::Domain(_)
                | Error::Capacity { .. }
                | Error::Range { .. }
                | Error::Constraint(_)
                | Error::Parameter(_) => 2,
                Error::BlowUp { .. } => 3,
                Error::Io(_) | Error::Format(_) => 4,
                Error::Invariant(_) => 5,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration errors:\n{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Plot(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigErrors> for CliError {
    fn from(e: ConfigErrors) -> Self {
        CliError::Config(e)
    }
}

impl From<PlotError> for CliError {
    fn from(e: PlotError) -> Self {
        CliError::Plot(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads `PE3D_THREADS` and sizes the global worker pool.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("PE3D_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => {
            return Err(CliError::Config(ConfigErrors(vec![crate::config::ConfigError {
                line: None,
                key: "PE3D_THREADS".into(),
                message: format!("expected a positive integer, found {v:?}"),
            }])))
        }
    };
    // a second initialisation in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    snapshot_format: u32,
    command: &'static str,
    seed: u64,
    config_sha256: String,
    config_file: &'static str,
    inputs: Vec<String>,
    artifacts: &'a [String],
}

/// Output directory plus the list of files written into it.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `name` through `fill` and records it.
    fn write<F>(&mut self, name: &str, fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> pe3d::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush().map_err(io_err(&path))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        self.write(name, |w| Ok(w.write_all(body.as_bytes())?))
    }

    fn state(&mut self, name: &str, u: &State) -> CliResult<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        save_state(&path, u)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }
}

/// Runs `command` and returns the artifacts written. `inputs` are extra
/// positional paths (snapshots for `diag`, CSV files for `plotdata`).
pub fn run(command: Command, config: &RunConfig, inputs: &[PathBuf]) -> CliResult<Artifacts> {
    let mut out = Artifacts::create(&config.output)?;
    let echo = config.to_toml();
    out.text("config.toml", &echo)?;
    match command {
        Command::Simulate => simulate(config, &mut out)?,
        Command::Squeeze => squeeze(config, &mut out)?,
        Command::DetModes => det_modes(config, &mut out)?,
        Command::Kick => kick(config, &mut out)?,
        Command::Diag => diag(config, inputs, &mut out)?,
        Command::Plotdata => plotdata(inputs, &mut out)?,
        Command::Check => {}
    }
    let hash = Sha256::digest(echo.as_bytes());
    let mut artifacts = out.written.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        program: "pe3d",
        version: env!("CARGO_PKG_VERSION"),
        snapshot_format: SNAPSHOT_VERSION,
        command: command.name(),
        seed: config.seed,
        config_sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        config_file: "config.toml",
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        artifacts: &artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    out.text("manifest.json", &(json + "\n"))?;
    Ok(out)
}

/// Random state `index` of the run seed (or the configured snapshot),
/// evolved for the configured spin-up time.
fn initial_state(config: &RunConfig, index: u64) -> CliResult<State> {
    let domain = config.domain_spec();
    let u = match &config.initial.snapshot {
        Some(path) => {
            let u = load_state(path)?;
            if *u.domain() != domain {
                return Err(Error::Parameter(format!(
                    "snapshot {} does not match the configured domain",
                    path.display()
                ))
                .into());
            }
            u
        }
        None => random_seed(domain, config.initial.w1, config.seed, index),
    };
    if config.initial.spin_up > 0.0 {
        Ok(spin_up(&u, config.params(), &config.step_config(), config.initial.spin_up)?)
    } else {
        Ok(u)
    }
}

const DIAG_HEADER: &str =
    "t,kinetic_energy,buoyancy_l2,w1_norm,w2_norm,vbar_h1,vtilde_l6,dz_v_l6,constraint_residual";

fn diag_row<W: Write>(w: &mut W, t: f64, u: &State, transform: &Transform) -> pe3d::Result<()> {
    let s = splitting_norms(u, transform);
    writeln!(
        w,
        "{t},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
        u.v().norm_l2_sq(),
        u.b().norm_l2(),
        u.norm_w1(),
        u.norm_w2(),
        s.vbar_h1,
        s.vtilde_l6,
        s.dz_v_l6,
        u.constraint_residual()
    )?;
    Ok(())
}

fn write_budget(out: &mut Artifacts, samples: &[Sample], config: &RunConfig) -> CliResult<bool> {
    let budget = match energy_budget(samples, config.params()) {
        Ok(b) => b,
        Err(Error::InsufficientData(_)) => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    out.write("energy_budget.csv", |w| {
        writeln!(w, "t,residual,relative")?;
        for ((t, r), q) in budget
            .residual
            .times()
            .iter()
            .zip(budget.residual.values())
            .zip(budget.relative.values())
        {
            writeln!(w, "{t},{r:e},{q:e}")?;
        }
        Ok(())
    })?;
    Ok(true)
}

fn simulate(config: &RunConfig, out: &mut Artifacts) -> CliResult<()> {
    let s = &config.simulate;
    let u0 = initial_state(config, 0)?;
    let mut solver = Solver::new(u0, config.params().clone(), config.step_config())?;
    let samples = record(&mut solver, s.duration, s.sample_every)?;
    let transform = Transform::new(config.domain_spec());
    out.write("diagnostics.csv", |w| {
        writeln!(w, "{DIAG_HEADER}")?;
        for x in &samples {
            diag_row(w, x.t, &x.state, &transform)?;
        }
        Ok(())
    })?;
    let budget = write_budget(out, &samples, config)?;
    if s.snapshots {
        for (i, x) in samples.iter().enumerate() {
            out.state(&format!("snapshots/state_{i:06}.pe3d"), &x.state)?;
        }
    }
    let last = samples.last().expect("record keeps the initial state");
    out.state("final.pe3d", &last.state)?;
    let w1 = last.state.norm_w1();
    let mut summary = format!(
        "t_final = {}\nw1_final = {w1:e}\nsamples = {}\ncfl_halvings = {}\nenergy_budget = {}\n",
        last.t,
        samples.len(),
        solver.cfl_halvings(),
        if budget { "written" } else { "skipped (nonuniform samples)" }
    );
    if let Some(eps) = s.epsilon {
        summary.push_str(&format!("epsilon = {eps:e}\nbelow_epsilon = {}\n", w1 < eps));
    }
    out.text("summary.txt", &summary)
}

fn squeeze(config: &RunConfig, out: &mut Artifacts) -> CliResult<()> {
    let s = &config.squeeze;
    let domain = config.domain_spec();
    let modes = s.modes.unwrap_or_else(|| pe3d::basis::capacity(&domain));
    let basis = build_basis(domain, modes)?;
    let base = initial_state(config, 0)?;
    let probes = make_probes(&base, &basis, s.probes, s.leading, s.delta, config.seed)?;
    let n_list: Vec<usize> = s.n_list.clone().unwrap_or_else(|| (0..=modes).collect());
    let report = squeeze_scan(
        &probes,
        config.params(),
        &config.step_config(),
        s.horizon,
        &n_list,
        &basis,
        s.q_target,
        s.lipschitz_points,
    )?;
    out.write("squeeze.csv", |w| report.write_csv(w))?;
    let mut summary = dimension_report(&report).summary();
    summary.push_str(&format!(
        "C_T = {:e}\naccepted_probes = {}\nrejected_probes = {:?}\n",
        report.lipschitz_at_horizon(),
        report.accepted,
        report.rejected
    ));
    match report.eta_threshold() {
        Some((n, eta)) => summary.push_str(&format!("eta_threshold_N = {n}\neta = {eta:e}\n")),
        None => summary.push_str("eta_threshold_N = none\n"),
    }
    out.text("summary.txt", &summary)
}

fn det_modes(config: &RunConfig, out: &mut Artifacts) -> CliResult<()> {
    let s = &config.det_modes;
    let domain = config.domain_spec();
    let basis = build_basis(domain, s.modes.unwrap_or_else(|| pe3d::basis::capacity(&domain)))?;
    let master = initial_state(config, 0)?;
    let slave = initial_state(config, s.slave_index)?;
    let floor = s.relative_floor * (&slave - &master).norm_w1();
    let report = determining_sync(
        &master,
        &slave,
        config.params(),
        &config.step_config(),
        &basis,
        s.n,
        s.period,
        s.steps,
        floor,
    )?;
    out.write("sync.csv", |w| report.write_csv(w))?;
    let mut summary = format!(
        "N = {}\nfloor = {floor:e}\nreduction = {:e}\nconverges = {}\n",
        s.n,
        report.reduction(),
        report.converges(0.9)
    );
    if let Some(f) = report.fit {
        summary.push_str(&format!("slope = {:e}\nr_squared = {}\n", f.slope, f.r_squared));
    }
    out.text("summary.txt", &summary)
}

fn kick(config: &RunConfig, out: &mut Artifacts) -> CliResult<()> {
    let k = &config.kick;
    let domain = config.domain_spec();
    let params = config.params();
    let cfg = config.step_config();
    let basis = build_basis(domain, k.modes)?;
    let mut summary = String::new();
    let t_c = match k.t_c {
        Some(t) => t,
        None => {
            let probes = sphere_probes(&basis, k.r_hat, k.tc_leading, k.tc_random, config.seed);
            let opts = AbsorptionOptions {
                sample_every: k.tc_sample_every,
                radius: Some(k.r_hat),
                ..Default::default()
            };
            let absorption = detect_absorption(&probes, params, &cfg, k.tc_horizon, &opts)?;
            let tc = choose_tc(
                params,
                &cfg,
                k.r_hat,
                k.r_kick,
                &absorption,
                &probes,
                k.tc_sample_every,
                k.tc_horizon,
            )?;
            summary.push_str(&format!(
                "outer_margin = {:e}\ninner_margin = {:e}\n",
                tc.outer_margin, tc.inner_margin
            ));
            tc.t_c
        }
    };
    let period = k.period.unwrap_or(t_c);
    let spec = KickSpec::uniform(k.n_kick, k.r_kick)?;
    let chain = ChainConfig::new(period, k.r_hat, t_c, spec, config.seed)?;
    let opts = ErgodicityOptions {
        replicas: k.replicas,
        n_steps: k.steps,
        coordinates: k.coordinates,
        dictionary_size: k.dictionary,
        burn_in: k.burn_in,
    };
    let boundary = basis.element(k.boundary).with_w1_norm(k.r_hat);
    let report = ergodicity_probe(&chain, params, &cfg, &basis, &State::zeros(domain), &boundary, &opts)?;
    out.write("distance.csv", |w| {
        writeln!(w, "k,dual_lipschitz_distance")?;
        for (t, d) in report.distance.times().iter().zip(report.distance.values()) {
            writeln!(w, "{t},{d:e}")?;
        }
        Ok(())
    })?;
    summary = format!("t_c = {t_c}\nperiod = {period}\n{summary}{}", report.summary());
    out.text("summary.txt", &summary)
}

fn diag(config: &RunConfig, inputs: &[PathBuf], out: &mut Artifacts) -> CliResult<()> {
    let paths: Vec<&PathBuf> = config.diag.snapshots.iter().chain(inputs).collect();
    let mut states = Vec::with_capacity(paths.len());
    for p in &paths {
        states.push(load_state(p)?);
    }
    let transform = Transform::new(config.domain_spec());
    for (p, u) in paths.iter().zip(&states) {
        if *u.domain() != config.domain_spec() {
            return Err(Error::Parameter(format!(
                "snapshot {} does not match the configured domain",
                p.display()
            ))
            .into());
        }
    }
    let step = config.diag.interval.unwrap_or(1.0);
    out.write("diagnostics.csv", |w| {
        writeln!(w, "{DIAG_HEADER}")?;
        for (i, u) in states.iter().enumerate() {
            diag_row(w, i as f64 * step, u, &transform)?;
        }
        Ok(())
    })?;
    if config.diag.interval.is_some() {
        let samples: Vec<Sample> = states
            .into_iter()
            .enumerate()
            .map(|(i, state)| Sample {
                t: i as f64 * step,
                state,
            })
            .collect();
        write_budget(out, &samples, config)?;
    }
    Ok(())
}

fn plotdata(inputs: &[PathBuf], out: &mut Artifacts) -> CliResult<()> {
    let data = emit_plotdata(inputs)?;
    out.text("plot.csv", &data.wide)?;
    out.text("plot_long.csv", &data.long)
}
