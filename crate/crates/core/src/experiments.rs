//! Finite-difference measurements of the long-time behaviour: Lipschitz
//! growth of nearby trajectories, high-mode squeezing, determining-mode
//! synchronization, and attractor spin-up.

use std::io::Write;

use rayon::prelude::*;

use crate::basis::EigenBasis;
use crate::diagnostics::{detect_absorption, AbsorptionOptions, AbsorptionReport, TimeSeries};
use crate::dynamics::PhysParams;
use crate::error::{Error, Result};
use crate::field::State;
use crate::fit::{linear_fit, LinearFit};
use crate::integrator::{Solver, StepConfig};
use crate::rng::stream;

/// Allowed relative disagreement between the `delta` and `delta/2` ratios.
pub const HALVING_TOLERANCE: f64 = 0.1;

const UNIT_TOLERANCE: f64 = 1e-12;

/// A base state and a perturbation of W1 size `delta` along `direction`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairProbe {
    base: State,
    direction: State,
    delta: f64,
}

impl PairProbe {
    pub fn new(base: State, direction: State, delta: f64) -> Result<Self> {
        if base.domain() != direction.domain() {
            return Err(Error::Domain("probe base and direction live on different grids".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Parameter(format!("probe delta = {delta} must be positive")));
        }
        let n = direction.norm_w1();
        if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::Parameter(format!(
                "probe direction has W1 norm {n}, expected 1"
            )));
        }
        Ok(Self {
            base,
            direction,
            delta,
        })
    }

    /// Normalizes `direction` before building the probe.
    pub fn along(base: State, direction: &State, delta: f64) -> Result<Self> {
        let n = direction.norm_w1();
        if !(n > 0.0) {
            return Err(Error::Parameter("probe direction vanishes".into()));
        }
        let mut d = direction.scaled(1.0 / n);
        // one more pass absorbs the rounding of the first division
        let n = d.norm_w1();
        d.scale(1.0 / n);
        Self::new(base, d, delta)
    }

    pub fn base(&self) -> &State {
        &self.base
    }

    pub fn direction(&self) -> &State {
        &self.direction
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn perturbed(&self, scale: f64) -> State {
        let mut u = self.base.clone();
        u.axpy(scale * self.delta, &self.direction);
        u.canonicalize();
        u
    }
}

/// `count` probes on `base`: the leading eigendirections first, then
/// random unit fields drawn from `(seed, probe index)` streams.
pub fn make_probes(
    base: &State,
    basis: &EigenBasis,
    count: usize,
    leading: usize,
    delta: f64,
    seed: u64,
) -> Result<Vec<PairProbe>> {
    let leading = leading.min(count).min(basis.len());
    let mut out = Vec::with_capacity(count);
    for k in 0..leading {
        out.push(PairProbe::along(base.clone(), &basis.element(k), delta)?);
    }
    for i in leading..count {
        let mut rng = stream(seed, i as u64, 0);
        let dir = State::random(*base.domain(), &mut rng, 1.0);
        out.push(PairProbe::along(base.clone(), &dir, delta)?);
    }
    Ok(out)
}

/// Measured response of one probe.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResponse {
    pub times: Vec<f64>,
    /// `||S_t U_* - S_t U||_{W1} / delta`.
    pub ratios: Vec<f64>,
    /// Same with `delta / 2`.
    pub half_ratios: Vec<f64>,
    /// `||Q_N [S_T U_* - S_T U]||_{W1} / delta` for `N = 0..=basis.len()`
    /// at the last time.
    pub squeeze: Vec<f64>,
}

impl ProbeResponse {
    /// Largest relative gap between the two ratio curves.
    pub fn halving_defect(&self) -> f64 {
        self.ratios
            .iter()
            .zip(&self.half_ratios)
            .map(|(a, b)| {
                let s = a.abs().max(b.abs());
                if s == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / s
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn passes_gate(&self) -> bool {
        self.halving_defect() <= HALVING_TOLERANCE
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Parameter("empty time grid".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter(
            "time grid must be nonnegative and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Evolves the three members of the probe through `times` in lockstep.
pub fn measure_probe(
    probe: &PairProbe,
    params: &PhysParams,
    cfg: &StepConfig,
    times: &[f64],
    basis: Option<&EigenBasis>,
) -> Result<ProbeResponse> {
    check_times(times)?;
    let mut run = [
        Solver::new(probe.base.clone(), params.clone(), *cfg)?,
        Solver::new(probe.perturbed(1.0), params.clone(), *cfg)?,
        Solver::new(probe.perturbed(0.5), params.clone(), *cfg)?,
    ];
    let mut ratios = Vec::with_capacity(times.len());
    let mut half_ratios = Vec::with_capacity(times.len());
    let mut now = 0.0;
    let mut last = None;
    for &t in times {
        for s in run.iter_mut() {
            s.evolve(t - now)?;
        }
        now = t;
        let d = run[1].state() - run[0].state();
        let h = run[2].state() - run[0].state();
        ratios.push(d.norm_w1() / probe.delta);
        half_ratios.push(h.norm_w1() / (0.5 * probe.delta));
        last = Some(d);
    }
    let squeeze = match basis {
        Some(b) => {
            let d = last.expect("nonempty time grid");
            b.tail_w1_norms(&d).into_iter().map(|x| x / probe.delta).collect()
        }
        None => Vec::new(),
    };
    Ok(ProbeResponse {
        times: times.to_vec(),
        ratios,
        half_ratios,
        squeeze,
    })
}

fn measure_all(
    probes: &[PairProbe],
    params: &PhysParams,
    cfg: &StepConfig,
    times: &[f64],
    basis: Option<&EigenBasis>,
) -> Result<Vec<ProbeResponse>> {
    probes
        .par_iter()
        .map(|p| measure_probe(p, params, cfg, times, basis))
        .collect()
}

/// `ratio(t) <= C exp(alpha t)` fitted as the lowest such envelope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzFit {
    pub c: f64,
    pub alpha: f64,
}

impl LipschitzFit {
    /// `C exp(alpha t)`.
    pub fn at(&self, t: f64) -> f64 {
        self.c * (self.alpha * t).exp()
    }
}

/// Line `a + alpha t` with `alpha >= 0` lying on or above every
/// `(t_i, y_i)` and lowest at the midpoint of the time range.
pub fn upper_envelope(t: &[f64], y: &[f64]) -> Result<LipschitzFit> {
    if t.is_empty() || t.len() != y.len() {
        return Err(Error::InsufficientData("no points to envelope".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite ratio".into()));
    }
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let feasible = |a: f64, s: f64| {
        t.iter()
            .zip(y)
            .all(|(&ti, &yi)| a + s * ti >= yi - 1e-12 * (1.0 + yi.abs()))
    };
    // flat line through the maximum is always feasible
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = (ymax, 0.0);
    for i in 0..t.len() {
        for j in 0..t.len() {
            if t[j] <= t[i] {
                continue;
            }
            let s = (y[j] - y[i]) / (t[j] - t[i]);
            if s < 0.0 {
                continue;
            }
            let a = y[i] - s * t[i];
            if feasible(a, s) && a + s * mid < best.0 + best.1 * mid {
                best = (a, s);
            }
        }
    }
    // lift by the worst violation so the envelope is a strict bound
    let lift = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| yi - (best.0 + best.1 * ti))
        .fold(0.0, f64::max);
    Ok(LipschitzFit {
        c: (best.0 + lift).exp(),
        alpha: best.1,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzScan {
    pub fit: LipschitzFit,
    pub times: Vec<f64>,
    /// Largest accepted ratio at each time.
    pub max_ratio: Vec<f64>,
    pub responses: Vec<ProbeResponse>,
    pub rejected: Vec<usize>,
}

fn envelope_from(responses: &[ProbeResponse], accepted: &[usize], times: &[f64]) -> Result<(LipschitzFit, Vec<f64>)> {
    if accepted.is_empty() {
        return Err(Error::InsufficientData(
            "every probe failed the delta-halving gate".into(),
        ));
    }
    let max_ratio: Vec<f64> = (0..times.len())
        .map(|i| {
            accepted
                .iter()
                .map(|&p| responses[p].ratios[i])
                .fold(0.0, f64::max)
        })
        .collect();
    // ratios are 1 at t = 0 by construction
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&max_ratio)
        .filter(|(&t, &r)| t > 0.0 && r > 0.0)
        .map(|(&t, &r)| (t, r.ln()))
        .unzip();
    let fit = if t.is_empty() {
        LipschitzFit { c: 1.0, alpha: 0.0 }
    } else {
        upper_envelope(&t, &y)?
    };
    Ok((fit, max_ratio))
}

fn gate(responses: &[ProbeResponse]) -> (Vec<usize>, Vec<usize>) {
    (0..responses.len()).partition(|&i| responses[i].passes_gate())
}

pub fn lipschitz_scan(
    probes: &[PairProbe],
    params: &PhysParams,
    cfg: &StepConfig,
    times: &[f64],
) -> Result<LipschitzScan> {
    let responses = measure_all(probes, params, cfg, times, None)?;
    let (accepted, rejected) = gate(&responses);
    let (fit, max_ratio) = envelope_from(&responses, &accepted, times)?;
    Ok(LipschitzScan {
        fit,
        times: times.to_vec(),
        max_ratio,
        responses,
        rejected,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SqueezeReport {
    pub horizon: f64,
    /// `(N, q_hat(N))`, sorted by `N`.
    pub entries: Vec<(usize, f64)>,
    pub lipschitz: LipschitzFit,
    pub q_target: f64,
    /// Basis dimension; `N = full` means `Q_N = 0`.
    pub full: usize,
    pub accepted: usize,
    pub rejected: Vec<usize>,
}

impl SqueezeReport {
    /// Smallest listed `N` with `q_hat(N) <= q_target`.
    pub fn minimal_n(&self) -> Option<(usize, f64)> {
        self.entries.iter().copied().find(|&(_, q)| q <= self.q_target)
    }

    /// Lipschitz constant of `S_T` implied by the fitted envelope.
    pub fn lipschitz_at_horizon(&self) -> f64 {
        self.lipschitz.at(self.horizon)
    }

    /// Smallest listed `N` with `eta = q_hat(N) * C_T < 1`.
    pub fn eta_threshold(&self) -> Option<(usize, f64)> {
        let c = self.lipschitz_at_horizon();
        self.entries
            .iter()
            .map(|&(n, q)| (n, q * c))
            .find(|&(_, eta)| eta < 1.0)
    }

    pub fn q_hat(&self, n: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == n).map(|e| e.1)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "N,q_hat")?;
        for (n, q) in &self.entries {
            writeln!(w, "{n},{q:e}")?;
        }
        Ok(())
    }
}

/// `q_hat(N)` at horizon `horizon` for every `N` in `n_list`, with the
/// Lipschitz envelope fitted on `lipschitz_points` equally spaced times in
/// `(0, horizon]`. Probes failing the halving gate are dropped.
#[allow(clippy::too_many_arguments)]
pub fn squeeze_scan(
    probes: &[PairProbe],
    params: &PhysParams,
    cfg: &StepConfig,
    horizon: f64,
    n_list: &[usize],
    basis: &EigenBasis,
    q_target: f64,
    lipschitz_points: usize,
) -> Result<SqueezeReport> {
    if !(horizon > 0.0) {
        return Err(Error::Parameter(format!("squeeze horizon {horizon} must be positive")));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n > basis.len()) {
        return Err(Error::Range {
            index: n,
            max: basis.len(),
        });
    }
    let k = lipschitz_points.max(1);
    let times: Vec<f64> = (1..=k).map(|i| horizon * i as f64 / k as f64).collect();
    let responses = measure_all(probes, params, cfg, &times, Some(basis))?;
    let (accepted, rejected) = gate(&responses);
    let (lipschitz, _) = envelope_from(&responses, &accepted, &times)?;
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let entries = ns
        .into_iter()
        .map(|n| {
            let q = accepted
                .iter()
                .map(|&p| responses[p].squeeze[n])
                .fold(0.0, f64::max);
            (n, q)
        })
        .collect();
    Ok(SqueezeReport {
        horizon,
        entries,
        lipschitz,
        q_target,
        full: basis.len(),
        accepted: accepted.len(),
        rejected,
    })
}

/// Inputs of the fractal-dimension estimate, as measured.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionReport {
    pub horizon: f64,
    pub n: Option<usize>,
    pub q: Option<f64>,
    pub c_d: f64,
    pub alpha_d: f64,
    pub complete: bool,
}

impl DimensionReport {
    pub fn summary(&self) -> String {
        let mut s = format!("T = {}\n", self.horizon);
        match (self.n, self.q) {
            (Some(n), Some(q)) => s.push_str(&format!("N = {n}\nq = {q:e}\n")),
            _ => s.push_str("N = none\nq = none\nincomplete: no entry reaches the target\n"),
        }
        s.push_str(&format!("C_D = {:e}\nalpha_D = {:e}\n", self.c_d, self.alpha_d));
        s
    }
}

pub fn dimension_report(squeeze: &SqueezeReport) -> DimensionReport {
    let hit = squeeze.minimal_n();
    DimensionReport {
        horizon: squeeze.horizon,
        n: hit.map(|h| h.0),
        q: hit.map(|h| h.1),
        c_d: squeeze.lipschitz.c,
        alpha_d: squeeze.lipschitz.alpha,
        complete: hit.is_some(),
    }
}

/// Evolves `seed` for `t_spin` and returns the endpoint.
pub fn spin_up(seed: &State, params: &PhysParams, cfg: &StepConfig, t_spin: f64) -> Result<State> {
    if !(t_spin >= 0.0) {
        return Err(Error::Parameter(format!("spin-up time {t_spin} is negative")));
    }
    let mut s = Solver::new(seed.clone(), params.clone(), *cfg)?;
    s.evolve(t_spin)?;
    Ok(s.into_state())
}

/// Spin-up past a measured absorption time: runs the seeds to `horizon`,
/// then returns the first seed evolved to the reported entry time `t_B`
/// (or to `horizon` when the ball was not entered).
pub fn spin_up_absorbed(
    seeds: &[State],
    params: &PhysParams,
    cfg: &StepConfig,
    horizon: f64,
    opts: &AbsorptionOptions,
) -> Result<(State, AbsorptionReport)> {
    let report = detect_absorption(seeds, params, cfg, horizon, opts)?;
    let t = if report.entered { report.t_b } else { horizon };
    Ok((spin_up(&seeds[0], params, cfg, t)?, report))
}

/// Random seed state of the given W1 size.
pub fn random_seed(domain: crate::domain::DomainSpec, w1: f64, seed: u64, index: u64) -> State {
    let mut rng = stream(seed, index, 0);
    let u = State::random(domain, &mut rng, 1.0);
    if w1 == 0.0 {
        State::zeros(domain)
    } else {
        u.with_w1_norm(w1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncReport {
    /// W1 difference at `t = nT` right after each overwrite (`n = 0` is the
    /// initial difference before any overwrite).
    pub error: TimeSeries,
    /// Log-linear fit of the error against the overwrite index on the part
    /// above `floor`.
    pub fit: Option<LinearFit>,
    pub floor: f64,
}

impl SyncReport {
    pub fn converges(&self, min_r2: f64) -> bool {
        self.fit
            .map(|f| f.slope < 0.0 && f.r_squared >= min_r2)
            .unwrap_or(false)
    }

    /// Final error over initial error.
    pub fn reduction(&self) -> f64 {
        let v = self.error.values();
        match (v.first(), v.last()) {
            (Some(&a), Some(&b)) if a > 0.0 => b / a,
            _ => 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "n,sync_error")?;
        for (n, e) in self.error.times().iter().zip(self.error.values()) {
            writeln!(w, "{n},{e:e}")?;
        }
        Ok(())
    }
}

/// Runs master and slave side by side; at every multiple of `period` the
/// slave's `P_N` coordinates are replaced by the master's. Records the full
/// W1 difference after each overwrite.
#[allow(clippy::too_many_arguments)]
pub fn determining_sync(
    master: &State,
    slave: &State,
    params: &PhysParams,
    cfg: &StepConfig,
    basis: &EigenBasis,
    n: usize,
    period: f64,
    n_steps: usize,
    floor: f64,
) -> Result<SyncReport> {
    if !(period > 0.0) {
        return Err(Error::Parameter(format!("sync period {period} must be positive")));
    }
    if n > basis.len() {
        return Err(Error::Range {
            index: n,
            max: basis.len(),
        });
    }
    let mut m = Solver::new(master.clone(), params.clone(), *cfg)?;
    let mut s = Solver::new(slave.clone(), params.clone(), *cfg)?;
    let mut error = TimeSeries::empty("sync_error");
    let overwrite = |m: &Solver, s: &mut Solver| -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        let hi = basis.project_high(s.state(), n)?;
        let lo = basis.project_low(m.state(), n)?;
        s.set_state(&hi + &lo);
        Ok(())
    };
    overwrite(&m, &mut s)?;
    if n > 0 {
        m.reset_history();
    }
    error.push(0.0, (s.state() - m.state()).norm_w1())?;
    for k in 1..=n_steps {
        m.evolve(period)?;
        s.evolve(period)?;
        overwrite(&m, &mut s)?;
        if n > 0 {
            m.reset_history();
        }
        error.push(k as f64, (s.state() - m.state()).norm_w1())?;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = error
        .times()
        .iter()
        .zip(error.values())
        .filter(|(_, &e)| e > floor)
        .map(|(&k, &e)| (k, e.ln()))
        .unzip();
    let fit = if x.len() >= 3 { linear_fit(&x, &y).ok() } else { None };
    Ok(SyncReport { error, fit, floor })
}

/// Ratio and squeeze CSV helpers share the `t,<label>` layout.
pub fn ratio_series(scan: &LipschitzScan) -> Result<TimeSeries> {
    TimeSeries::new("lipschitz_ratio", scan.times.clone(), scan.max_ratio.clone())
}
