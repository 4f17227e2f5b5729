//! Trajectory diagnostics: energy budget, windowed dissipation, barotropic
//! and baroclinic norms, buoyancy decay, the uniform Gronwall check, and
//! absorbing-ball detection.

use std::io::Write;

use crate::domain::Axis;
use crate::dynamics::PhysParams;
use crate::error::{Error, Result};
use crate::field::State;
use crate::fit::{linear_fit, LinearFit};
use crate::integrator::{Solver, StepConfig};
use crate::ops::{derivative, split_velocity};
use crate::transform::Transform;

/// Relative spacing tolerance for "uniform" sampling.
const UNIFORM_TOLERANCE: f64 = 1e-9;

/// A labelled scalar series on strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub label: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                actual: values.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("times must be strictly increasing".into()));
        }
        Ok(Self {
            label: label.into(),
            times,
            values,
        })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Parameter(format!(
                    "time {t} does not follow {last}"
                )));
            }
        }
        self.times.push(t);
        self.values.push(v);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `t,<label>` header then one row per sample, full precision.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,{}", self.label)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:e},{v:e}")?;
        }
        Ok(())
    }
}

/// One stored point of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: State,
}

/// Evolves `solver` for `duration`, keeping the initial state and every
/// `every`-th step (plus the final state).
pub fn record(solver: &mut Solver, duration: f64, every: u64) -> Result<Vec<Sample>> {
    let mut out = vec![Sample {
        t: solver.time(),
        state: solver.state().clone(),
    }];
    solver.evolve_observed(duration, every, |s| {
        out.push(Sample {
            t: s.time(),
            state: s.state().clone(),
        });
        Ok(())
    })?;
    Ok(out)
}

/// Convenience: a fresh trajectory from `u0`.
pub fn trajectory(
    u0: &State,
    params: &PhysParams,
    cfg: &StepConfig,
    duration: f64,
    every: u64,
) -> Result<Vec<Sample>> {
    let mut s = Solver::new(u0.clone(), params.clone(), *cfg)?;
    record(&mut s, duration, every)
}

fn check_uniform(samples: &[Sample]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    let dt = samples[1].t - samples[0].t;
    for w in samples.windows(2) {
        let d = w[1].t - w[0].t;
        if !(d > 0.0) || (d - dt).abs() > UNIFORM_TOLERANCE * dt.max(1.0) {
            return Err(Error::InsufficientData(
                "samples are not uniformly spaced".into(),
            ));
        }
    }
    Ok(dt)
}

/// Per-interval kinetic energy budget.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyBudget {
    /// `(|v_{n+1}|^2 - |v_n|^2)/dt + 2 nu |grad v_mid|^2 - 2 <G_f, v_mid>`
    pub residual: TimeSeries,
    /// `|residual| / (2 nu |grad v_mid|^2 + 2 |<G_f, v_mid>|)`, zero when
    /// both sides vanish.
    pub relative: TimeSeries,
    /// `|v|^2` at every sample.
    pub energy: TimeSeries,
}

/// Kinetic energy balance over consecutive samples, with `v_mid` the mean
/// of the interval endpoints. Reported at interval midpoints.
pub fn energy_budget(samples: &[Sample], params: &PhysParams) -> Result<EnergyBudget> {
    let dt = check_uniform(samples)?;
    let mut residual = TimeSeries::empty("energy_residual");
    let mut relative = TimeSeries::empty("energy_residual_relative");
    let mut energy = TimeSeries::empty("kinetic_energy");
    for s in samples {
        energy.push(s.t, s.state.v().norm_l2_sq())?;
    }
    for w in samples.windows(2) {
        let (a, b) = (w[0].state.v(), w[1].state.v());
        let mut mid = a.clone();
        mid.axpy(1.0, b);
        mid.scale(0.5);
        let diss = 2.0 * params.nu * mid.norm_w1_sq();
        let work = 2.0 * params.gf().inner(&mid);
        let r = (b.norm_l2_sq() - a.norm_l2_sq()) / dt + diss - work;
        let scale = diss + work.abs();
        let t = 0.5 * (w[0].t + w[1].t);
        residual.push(t, r)?;
        relative.push(t, if scale > 0.0 { r.abs() / scale } else if r == 0.0 { 0.0 } else { f64::INFINITY })?;
    }
    Ok(EnergyBudget {
        residual,
        relative,
        energy,
    })
}

fn cumulative_trapezoid(t: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for i in 1..t.len() {
        out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
    }
    out
}

/// Linear interpolation of the cumulative integral at `x`.
fn interpolate(t: &[f64], c: &[f64], x: f64) -> f64 {
    let j = t.partition_point(|&s| s <= x);
    if j == 0 {
        return c[0];
    }
    if j == t.len() {
        return c[t.len() - 1];
    }
    let (t0, t1) = (t[j - 1], t[j]);
    c[j - 1] + (c[j] - c[j - 1]) * (x - t0) / (t1 - t0)
}

/// Integral of a sampled function over `[a, a + window]` for every sample
/// time `a` whose window fits inside the record.
fn windowed_integrals(t: &[f64], f: &[f64], window: f64) -> Vec<(f64, f64)> {
    let c = cumulative_trapezoid(t, f);
    let end = *t.last().expect("nonempty");
    let slack = UNIFORM_TOLERANCE * window.max(1.0);
    t.iter()
        .enumerate()
        .take_while(|(_, &a)| a + window <= end + slack)
        .map(|(i, &a)| (a, interpolate(t, &c, (a + window).min(end)) - c[i]))
        .collect()
}

/// `|v(t)|^2 + nu int_t^{t+window} |grad_{x,z} v|^2` by trapezoid quadrature.
pub fn dissipation_window(samples: &[Sample], params: &PhysParams, window: f64) -> Result<TimeSeries> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let span = t[t.len() - 1] - t[0];
    if !(window > 0.0) || window > span * (1.0 + UNIFORM_TOLERANCE) {
        return Err(Error::InsufficientData(format!(
            "window {window} exceeds the trajectory span {span}"
        )));
    }
    let grad: Vec<f64> = samples.iter().map(|s| s.state.v().norm_w1_sq()).collect();
    let mut out = TimeSeries::empty("dissipation_window");
    for (i, (a, integral)) in windowed_integrals(&t, &grad, window).into_iter().enumerate() {
        out.push(a, samples[i].state.v().norm_l2_sq() + params.nu * integral)?;
    }
    Ok(out)
}

/// Barotropic and baroclinic size of the velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplittingNorms {
    pub vbar_l2: f64,
    pub vtilde_l2: f64,
    /// `|grad_x vbar|` over the horizontal cross-section.
    pub vbar_h1: f64,
    pub vtilde_l6: f64,
    pub dz_v_l6: f64,
}

pub fn splitting_norms(u: &State, transform: &Transform) -> SplittingNorms {
    let (bar, tilde) = split_velocity(u.v());
    let l3 = u.domain().lengths()[2];
    let dz1 = derivative(u.v().v1(), Axis::Z);
    let dz2 = derivative(u.v().v2(), Axis::Z);
    SplittingNorms {
        vbar_l2: bar.norm_l2_sq().sqrt(),
        vtilde_l2: tilde.norm_l2_sq().sqrt(),
        vbar_h1: (bar.norm_w1_sq() / l3).sqrt(),
        vtilde_l6: transform.norm_l6_velocity(&tilde),
        dz_v_l6: transform.norm_l6_pair(&dz1, &dz2),
    }
}

/// Exponential fit `|b(t)| ~ C exp(-rate t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub fit: LinearFit,
}

/// Fits `log |b|` against `t` over samples with `t >= from`.
pub fn buoyancy_decay_rate(samples: &[Sample], from: f64) -> Result<DecayFit> {
    let mut t = Vec::new();
    let mut y = Vec::new();
    for s in samples.iter().filter(|s| s.t >= from) {
        let n = s.state.b().norm_l2();
        if !(n > 0.0) {
            return Err(Error::DegenerateFit("buoyancy vanishes on the fit window".into()));
        }
        t.push(s.t);
        y.push(n.ln());
    }
    let fit = linear_fit(&t, &y)?;
    Ok(DecayFit {
        rate: -fit.slope,
        fit,
    })
}

/// Tolerances applied to the Gronwall hypotheses (never to the conclusion).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GronwallTolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for GronwallTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-9,
            absolute: 1e-12,
        }
    }
}

impl GronwallTolerance {
    fn allows(&self, lhs: f64, rhs: f64) -> bool {
        lhs <= rhs + self.absolute + self.relative * rhs.abs().max(lhs.abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GronwallReport {
    /// `(a3 + a2) exp(a1)`.
    pub bound: f64,
    /// First `(t, y(t))` with `t >= t0 + 1` and `y(t) > bound`.
    pub witness: Option<(f64, f64)>,
    /// Largest `y(t)` over the checked range.
    pub max_checked: f64,
}

impl GronwallReport {
    pub fn holds(&self) -> bool {
        self.witness.is_none()
    }
}

/// Uniform Gronwall check on sampled `g, h, y` sharing one time grid.
///
/// Hypotheses (checked with `tol`, failure gives [`Error::Inapplicable`]):
/// nonnegative samples; over every unit window inside the record the
/// trapezoid integrals of `g, h, y` are at most `a1, a2, a3`; and on every
/// interval `(y_{i+1} - y_i)/dt <= g_m y_m + h_m` with interval means `_m`.
/// Conclusion (checked strictly): `y(t) <= (a3 + a2) e^{a1}` for every
/// sample with `t >= t0 + 1`.
pub fn gronwall_check(
    g: &TimeSeries,
    h: &TimeSeries,
    y: &TimeSeries,
    a1: f64,
    a2: f64,
    a3: f64,
    tol: GronwallTolerance,
) -> Result<GronwallReport> {
    if g.times() != y.times() || h.times() != y.times() {
        return Err(Error::Parameter("g, h, y must share one time grid".into()));
    }
    let t = y.times();
    if t.len() < 2 || t[t.len() - 1] - t[0] < 1.0 * (1.0 - UNIFORM_TOLERANCE) {
        return Err(Error::InsufficientData("the record must span at least one time unit".into()));
    }
    for s in [g, h, y] {
        if let Some(v) = s.values().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Inapplicable(format!("{} takes the value {v}", s.label)));
        }
    }
    for (s, a, name) in [(g, a1, "a1"), (h, a2, "a2"), (y, a3, "a3")] {
        for (start, integral) in windowed_integrals(t, s.values(), 1.0) {
            if !tol.allows(integral, a) {
                return Err(Error::Inapplicable(format!(
                    "integral of {} over [{start}, {start}+1] is {integral}, above {name} = {a}",
                    s.label
                )));
            }
        }
    }
    let (gv, hv, yv) = (g.values(), h.values(), y.values());
    for i in 0..t.len() - 1 {
        let dt = t[i + 1] - t[i];
        let lhs = (yv[i + 1] - yv[i]) / dt;
        let gm = 0.5 * (gv[i] + gv[i + 1]);
        let hm = 0.5 * (hv[i] + hv[i + 1]);
        let ym = 0.5 * (yv[i] + yv[i + 1]);
        let rhs = gm * ym + hm;
        if !tol.allows(lhs, rhs) {
            return Err(Error::Inapplicable(format!(
                "dy/dt = {lhs} exceeds g y + h = {rhs} on [{}, {}]",
                t[i],
                t[i + 1]
            )));
        }
    }
    let bound = (a3 + a2) * a1.exp();
    let mut witness = None;
    let mut max_checked: f64 = 0.0;
    let first = t[0] + 1.0 - UNIFORM_TOLERANCE;
    for (&ti, &yi) in t.iter().zip(yv) {
        if ti < first {
            continue;
        }
        max_checked = max_checked.max(yi);
        if yi > bound && witness.is_none() {
            witness = Some((ti, yi));
        }
    }
    Ok(GronwallReport {
        bound,
        witness,
        max_checked,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbsorptionOptions {
    /// Time between recorded norms.
    pub sample_every: f64,
    /// Fixed radius to test instead of searching for one.
    pub radius: Option<f64>,
    /// Relative headroom added to the measured tail size, and the allowed
    /// drift between the two halves of the tail.
    pub margin: f64,
    /// Smallest radius ever reported.
    pub floor: f64,
}

impl Default for AbsorptionOptions {
    fn default() -> Self {
        Self {
            sample_every: 0.1,
            radius: None,
            margin: 0.05,
            floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbsorptionReport {
    /// Radius of the W2 ball.
    pub r_star: f64,
    /// Earliest sampled time after which every trajectory stays inside.
    pub t_b: f64,
    pub held_until: f64,
    pub entered: bool,
    /// Per-trajectory entry times (same radius), `None` if never settled.
    pub entry_times: Vec<Option<f64>>,
    /// W2 norm series per trajectory.
    pub norms: Vec<TimeSeries>,
}

impl AbsorptionReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "R_star = {:e}\nt_B = {}\nheld_until = {}\nentered = {}\n",
            self.r_star, self.t_b, self.held_until, self.entered
        );
        for (i, e) in self.entry_times.iter().enumerate() {
            match e {
                Some(t) => s.push_str(&format!("trajectory {i}: entered at {t}\n")),
                None => s.push_str(&format!("trajectory {i}: not inside\n")),
            }
        }
        s
    }
}

/// First sampled time after which the series stays at or below `r`.
fn entry_time(series: &TimeSeries, r: f64) -> Option<f64> {
    let v = series.values();
    let last_out = v.iter().rposition(|&x| x > r);
    match last_out {
        None => series.times().first().copied(),
        Some(i) if i + 1 < v.len() => Some(series.times()[i + 1]),
        Some(_) => None,
    }
}

/// Evolves every initial state to `horizon` and looks for a W2 ball that
/// all of them enter and stay in.
///
/// Without a fixed radius, the radius is `(1 + margin)` times the largest
/// norm seen on the second half of the horizon (at least `floor`), and the
/// ball counts as entered only when that tail has settled: its first half
/// is within `(1 + margin)` of its second half, or everything is below
/// `floor`.
pub fn detect_absorption(
    initial: &[State],
    params: &PhysParams,
    cfg: &StepConfig,
    horizon: f64,
    opts: &AbsorptionOptions,
) -> Result<AbsorptionReport> {
    if initial.is_empty() {
        return Err(Error::InsufficientData("no initial states".into()));
    }
    if !(horizon > 0.0 && opts.sample_every > 0.0) {
        return Err(Error::Parameter("horizon and sampling interval must be positive".into()));
    }
    let every = ((opts.sample_every / cfg.dt).round() as u64).max(1);
    let mut norms = Vec::with_capacity(initial.len());
    for (i, u) in initial.iter().enumerate() {
        let samples = trajectory(u, params, cfg, horizon, every)?;
        let mut s = TimeSeries::empty(format!("w2_norm_{i}"));
        for x in &samples {
            s.push(x.t, x.state.norm_w2())?;
        }
        norms.push(s);
    }
    let tail_max = |lo: f64, hi: f64| {
        norms
            .iter()
            .flat_map(|s| s.times().iter().zip(s.values()))
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    };
    let (r_star, settled) = match opts.radius {
        Some(r) => (r, true),
        None => {
            let tail = tail_max(0.5 * horizon, horizon);
            let early = tail_max(0.5 * horizon, 0.75 * horizon);
            let late = tail_max(0.75 * horizon, horizon);
            let r = ((1.0 + opts.margin) * tail).max(opts.floor);
            let settled = early <= (1.0 + opts.margin) * late || tail <= opts.floor;
            (r, settled)
        }
    };
    let entry_times: Vec<Option<f64>> = norms.iter().map(|s| entry_time(s, r_star)).collect();
    let all_in = entry_times.iter().all(Option::is_some);
    let t_b = entry_times
        .iter()
        .map(|e| e.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    Ok(AbsorptionReport {
        r_star,
        t_b,
        held_until: horizon,
        entered: all_in && settled,
        entry_times,
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::field::{Parity, Phase, ScalarField, VelocityField};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn domain() -> DomainSpec {
        DomainSpec::cube(2.0 * PI, 8).unwrap()
    }

    fn shear(d: DomainSpec, a: f64) -> State {
        let v = VelocityField::new(
            ScalarField::mode(d, Parity::EvenInZ, [0, 0, 1], Phase::Cos, a).unwrap(),
            ScalarField::zeros(d, Parity::EvenInZ),
        )
        .unwrap();
        State::new(v, ScalarField::zeros(d, Parity::OddInZ)).unwrap()
    }

    fn series(label: &str, t: &[f64], v: &[f64]) -> TimeSeries {
        TimeSeries::new(label, t.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn time_series_invariants() {
        assert!(TimeSeries::new("x", vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new("x", vec![0.0], vec![1.0, 2.0]).is_err());
        let mut s = TimeSeries::empty("x");
        s.push(0.0, 1.0).unwrap();
        assert!(s.push(0.0, 1.0).is_err());
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,x\n0e0,1e0\n");
    }

    #[test]
    fn zero_trajectory_has_zero_budget() {
        let d = domain();
        let p = PhysParams::unforced(d, 1.0, 1.0).unwrap();
        let cfg = StepConfig::new(1e-2).unwrap();
        let s = trajectory(&State::zeros(d), &p, &cfg, 0.1, 1).unwrap();
        let b = energy_budget(&s, &p).unwrap();
        assert!(b.residual.values().iter().all(|&r| r == 0.0));
        let w = dissipation_window(&s, &p, 0.05).unwrap();
        assert!(w.values().iter().all(|&r| r == 0.0));
        assert!(energy_budget(&s[..1], &p).is_err());
    }

    #[test]
    fn heat_mode_budget_is_second_order() {
        let d = domain();
        let p = PhysParams::unforced(d, 1.0, 0.0).unwrap();
        let worst = |dt: f64| {
            let cfg = StepConfig::new(dt).unwrap();
            let s = trajectory(&shear(d, 1.0), &p, &cfg, 0.2, 1).unwrap();
            energy_budget(&s, &p).unwrap().relative.max()
        };
        // CN is exactly energy-consistent with the midpoint dissipation
        assert!(worst(1e-2) < 1e-12);
        assert!(worst(5e-3) < 1e-12);
    }

    #[test]
    fn dissipation_window_matches_closed_form() {
        // |v|^2 = A e^{-2t}, |grad v|^2 = A e^{-2t} for lambda = 1, nu = 1
        let d = domain();
        let p = PhysParams::unforced(d, 1.0, 0.0).unwrap();
        let cfg = StepConfig::new(1e-3).unwrap();
        let s = trajectory(&shear(d, 1.0), &p, &cfg, 2.0, 10).unwrap();
        let w = dissipation_window(&s, &p, 1.0).unwrap();
        let a = shear(d, 1.0).v().norm_l2_sq();
        for (&t, &v) in w.times().iter().zip(w.values()) {
            let exact = a * (-2.0 * t).exp() + a * 0.5 * ((-2.0 * t).exp() - (-2.0 * (t + 1.0)).exp());
            assert!((v - exact).abs() <= 1e-4 * exact, "t = {t}: {v} vs {exact}");
        }
        assert!(dissipation_window(&s, &p, 3.0).is_err());
    }

    #[test]
    fn splitting_is_orthogonal() {
        let d = domain();
        let t = Transform::new(d);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = State::random(d, &mut rng, 0.5);
        let n = splitting_norms(&u, &t);
        let total = u.v().norm_l2_sq();
        assert!((n.vbar_l2.powi(2) + n.vtilde_l2.powi(2) - total).abs() <= 1e-12 * total);

        let z_only = shear(d, 1.0);
        let n = splitting_norms(&z_only, &t);
        assert_eq!(n.vbar_l2, 0.0);
        assert_eq!(n.vbar_h1, 0.0);
    }

    #[test]
    fn single_mode_buoyancy_decays_at_its_eigenvalue() {
        let d = DomainSpec::new([2.0 * PI, 2.0 * PI, 3.0], [8, 8, 8]).unwrap();
        let b = ScalarField::mode(d, Parity::OddInZ, [1, 0, 1], Phase::Cos, 1e-4).unwrap();
        let u = State::new(VelocityField::zeros(d), b).unwrap();
        let p = PhysParams::unforced(d, 0.7, 1.0).unwrap();
        let cfg = StepConfig::new(1e-3).unwrap();
        let s = trajectory(&u, &p, &cfg, 1.0, 10).unwrap();
        let fit = buoyancy_decay_rate(&s, 0.0).unwrap();
        let want = 0.7 * d.lambda([1, 0, 1]);
        assert!((fit.rate - want).abs() <= 1e-5 * want, "{} vs {want}", fit.rate);
        assert!(fit.fit.rms_residual <= 1e-6);
        let zero = trajectory(&State::zeros(d), &p, &cfg, 0.01, 1).unwrap();
        assert!(matches!(buoyancy_decay_rate(&zero, 0.0), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn gronwall_constant_case_holds_with_equality() {
        let t: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let zero = vec![0.0; t.len()];
        let c = vec![3.0; t.len()];
        let r = gronwall_check(
            &series("g", &t, &zero),
            &series("h", &t, &zero),
            &series("y", &t, &c),
            0.0,
            0.0,
            3.0,
            GronwallTolerance::default(),
        )
        .unwrap();
        assert!(r.holds());
        assert_eq!(r.bound, 3.0);
        assert_eq!(r.max_checked, 3.0);
    }

    #[test]
    fn gronwall_hypothesis_failure_is_inapplicable() {
        let t: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let zero = vec![0.0; t.len()];
        let y: Vec<f64> = t.clone();
        // dy/dt = 1 but g = h = 0
        let r = gronwall_check(
            &series("g", &t, &zero),
            &series("h", &t, &zero),
            &series("y", &t, &y),
            0.0,
            0.0,
            10.0,
            GronwallTolerance::default(),
        );
        assert!(matches!(r, Err(Error::Inapplicable(_))));
    }

    #[test]
    fn gronwall_violation_yields_a_witness() {
        // a burst that passes the sampled hypotheses but overshoots the bound
        let t: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        let n = t.len();
        let mut g = vec![0.0; n];
        g[n - 2] = 198.0;
        g[n - 1] = 198.0;
        let mut y = vec![1.0; n];
        y[n - 1] = 199.0;
        let h = vec![0.0; n];
        let r = gronwall_check(
            &series("g", &t, &g),
            &series("h", &t, &h),
            &series("y", &t, &y),
            2.97,
            0.0,
            1.99,
            GronwallTolerance::default(),
        )
        .unwrap();
        assert!(r.bound < 40.0);
        assert_eq!(r.witness, Some((2.0, 199.0)));
    }

    #[test]
    fn absorption_of_a_small_state_is_immediate() {
        let d = domain();
        let p = PhysParams::unforced(d, 1.0, 1.0).unwrap();
        let cfg = StepConfig::new(1e-2).unwrap();
        let u = shear(d, 1e-3);
        let opts = AbsorptionOptions {
            radius: Some(1.0),
            ..Default::default()
        };
        let r = detect_absorption(std::slice::from_ref(&u), &p, &cfg, 1.0, &opts).unwrap();
        assert!(r.entered);
        assert_eq!(r.t_b, 0.0);
        let opts = AbsorptionOptions {
            radius: Some(5e-3),
            ..Default::default()
        };
        let r = detect_absorption(&[u], &p, &cfg, 1.0, &opts).unwrap();
        assert!(r.entered && r.t_b > 0.0);
    }
}
