//! Randomly kicked dynamics `U_k = S_T(U_{k-1}) + eta_k` with bounded kicks
//! on the leading eigenmodes, the critical time `T_c`, replica ensembles,
//! and a dictionary lower bound on the dual-Lipschitz distance.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::basis::EigenBasis;
use crate::diagnostics::{AbsorptionReport, TimeSeries};
use crate::dynamics::PhysParams;
use crate::error::{Error, Result};
use crate::field::State;
use crate::fit::{linear_fit, LinearFit};
use crate::integrator::{retract, Solver, StepConfig};
use crate::rng::stream;

/// Law of the coordinates beyond the first `N_kick`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailLaw {
    /// Point mass at zero.
    Zero,
    /// Independent uniform W1 coordinates on `[-half_width, half_width]`
    /// for the next `modes` basis elements.
    Uniform { modes: usize, half_width: f64 },
}

impl TailLaw {
    fn modes(&self) -> usize {
        match *self {
            TailLaw::Zero => 0,
            TailLaw::Uniform { modes, .. } => modes,
        }
    }

    /// Largest W1 size of a tail draw.
    fn radius(&self) -> f64 {
        match *self {
            TailLaw::Zero => 0.0,
            TailLaw::Uniform { modes, half_width } => half_width * (modes as f64).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KickSpec {
    pub n_kick: usize,
    /// Radius of the uniform ball for the low coordinates.
    pub r_low: f64,
    pub tail: TailLaw,
    /// Hard support radius in W1.
    pub r_kick: f64,
}

/// Monte Carlo draws used to confirm the translation bound at construction.
const CONTINUITY_SAMPLES: usize = 4000;

impl KickSpec {
    /// Uniform low ball of radius `r_kick`, zero tail.
    pub fn uniform(n_kick: usize, r_kick: f64) -> Result<Self> {
        Self::new(n_kick, r_kick, TailLaw::Zero, r_kick)
    }

    pub fn new(n_kick: usize, r_low: f64, tail: TailLaw, r_kick: f64) -> Result<Self> {
        if n_kick == 0 && r_low > 0.0 {
            return Err(Error::Parameter("a nonzero low radius needs N_kick > 0".into()));
        }
        if !(r_low >= 0.0 && r_kick >= 0.0 && r_low.is_finite() && r_kick.is_finite()) {
            return Err(Error::Parameter(format!(
                "kick radii must be finite and nonnegative (r_low = {r_low}, R_kick = {r_kick})"
            )));
        }
        if let TailLaw::Uniform { half_width, .. } = tail {
            if !(half_width >= 0.0 && half_width.is_finite()) {
                return Err(Error::Parameter(format!("tail half width {half_width} is invalid")));
            }
        }
        // independence of the low and tail parts forbids a joint rejection
        // that would actually fire, so the two supports must fit together
        if r_low.hypot(tail.radius()) > r_kick * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "low radius {r_low} and tail radius {} exceed R_kick = {r_kick}",
                tail.radius()
            )));
        }
        let spec = Self {
            n_kick,
            r_low,
            tail,
            r_kick,
        };
        if n_kick > 0 && r_low > 0.0 {
            spec.verify_translation_continuity(CONTINUITY_SAMPLES, 0)?;
        }
        Ok(spec)
    }

    /// Basis elements touched by a kick.
    pub fn modes(&self) -> usize {
        self.n_kick + self.tail.modes()
    }

    /// `C` with `int |p(x + h) - p(x)| dx <= C |h|` for the uniform density
    /// `p` on the `N_kick`-ball of radius `r_low`: `2 omega_{N-1} / (omega_N r)`.
    pub fn translation_constant(&self) -> f64 {
        if self.n_kick == 0 || self.r_low == 0.0 {
            return f64::INFINITY;
        }
        // ratio(N) = Gamma(N/2 + 1) / Gamma(N/2 + 1/2), ratio(1) = sqrt(pi)/2
        let mut ratio = PI.sqrt() / 2.0;
        for n in 1..self.n_kick {
            ratio = (n as f64 + 1.0) / 2.0 / ratio;
        }
        2.0 * ratio / (PI.sqrt() * self.r_low)
    }

    /// Monte Carlo estimate of `int |p(x + h) - p(x)| dx` for a shift of
    /// size `r_low / 20`; errors if it exceeds the analytic constant by more
    /// than four standard errors.
    pub fn verify_translation_continuity(&self, samples: usize, seed: u64) -> Result<f64> {
        let shift = self.r_low / 20.0;
        let mut rng = stream(seed, u64::MAX, 0);
        let mut outside = 0usize;
        for _ in 0..samples {
            let mut x = uniform_ball(&mut rng, self.n_kick, self.r_low);
            x[0] += shift;
            if x.iter().map(|v| v * v).sum::<f64>() > self.r_low * self.r_low {
                outside += 1;
            }
        }
        let p = outside as f64 / samples as f64;
        let estimate = 2.0 * p;
        let se = 2.0 * (p * (1.0 - p) / samples as f64).sqrt().max(1.0 / samples as f64);
        let bound = self.translation_constant() * shift;
        if estimate > bound + 4.0 * se {
            return Err(Error::Invariant(format!(
                "translation estimate {estimate} exceeds the bound {bound}"
            )));
        }
        Ok(estimate)
    }
}

fn uniform_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, r: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let u: f64 = rng.gen();
            let scale = r * u.powf(1.0 / n as f64) / norm;
            return g.into_iter().map(|v| v * scale).collect();
        }
    }
}

/// W1 coordinates of one kick: low ball then tail, drawn independently and
/// redrawn if the joint norm would leave the support.
pub fn sample_kick_coordinates<R: Rng + ?Sized>(spec: &KickSpec, rng: &mut R) -> Vec<f64> {
    loop {
        let mut y = uniform_ball(rng, spec.n_kick, spec.r_low);
        if let TailLaw::Uniform { modes, half_width } = spec.tail {
            y.extend((0..modes).map(|_| rng.gen_range(-1.0..=1.0) * half_width));
        }
        if y.iter().map(|v| v * v).sum::<f64>().sqrt() <= spec.r_kick {
            return y;
        }
    }
}

/// One kick as a state.
pub fn sample_kick<R: Rng + ?Sized>(spec: &KickSpec, basis: &EigenBasis, rng: &mut R) -> Result<State> {
    if spec.modes() > basis.len() {
        return Err(Error::Capacity {
            requested: spec.modes(),
            capacity: basis.len(),
        });
    }
    let y = sample_kick_coordinates(spec, rng);
    let mut eta = basis.from_w1_coordinates(&y)?;
    let n = eta.norm_w1();
    if n > spec.r_kick {
        // round-off in the synthesis only
        eta.scale(spec.r_kick * (1.0 - 1e-15) / n);
    }
    Ok(eta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainConfig {
    /// Time between kicks.
    pub period: f64,
    pub r_hat: f64,
    pub t_c: f64,
    pub kicks: KickSpec,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(period: f64, r_hat: f64, t_c: f64, kicks: KickSpec, seed: u64) -> Result<Self> {
        if !(r_hat > kicks.r_kick) {
            return Err(Error::Parameter(format!(
                "R_hat = {r_hat} must exceed R_kick = {}",
                kicks.r_kick
            )));
        }
        if !(t_c >= 1.0 && period >= t_c) {
            return Err(Error::Parameter(format!(
                "need T >= T_c >= 1, got T = {period}, T_c = {t_c}"
            )));
        }
        Ok(Self {
            period,
            r_hat,
            t_c,
            kicks,
            seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcReport {
    pub t_c: f64,
    /// `R_hat - R_kick - max ||S_{T_c} U||_{W1}` over the probes.
    pub outer_margin: f64,
    /// `R_star - max ||S_{T_c - 1} U||_{W2}` over the probes.
    pub inner_margin: f64,
    pub sample_every: f64,
}

/// Probes on the sphere `||U||_{W1} = r_hat`: the leading eigenmodes, then
/// random fields.
pub fn sphere_probes(
    basis: &EigenBasis,
    r_hat: f64,
    leading: usize,
    random: usize,
    seed: u64,
) -> Vec<State> {
    let mut out: Vec<State> = (0..leading.min(basis.len()))
        .map(|k| basis.element(k).with_w1_norm(r_hat))
        .collect();
    for i in 0..random {
        let mut rng = stream(seed, i as u64, 0);
        out.push(State::random(*basis.domain(), &mut rng, 1.0).with_w1_norm(r_hat));
    }
    out
}

/// Smallest sampled `t >= 1` such that for every sampled `s` in
/// `[t, horizon]` and every probe, `||S_s U||_{W1} <= R_hat - R_kick` and
/// `||S_{s-1} U||_{W2} <= R_star`.
#[allow(clippy::too_many_arguments)]
pub fn choose_tc(
    params: &PhysParams,
    cfg: &StepConfig,
    r_hat: f64,
    r_kick: f64,
    absorption: &AbsorptionReport,
    probes: &[State],
    sample_every: f64,
    horizon: f64,
) -> Result<TcReport> {
    if !params.is_unforced() {
        return Err(Error::Parameter("T_c is defined for zero forcing only".into()));
    }
    if !(r_hat > r_kick && r_kick >= 0.0) {
        return Err(Error::Parameter(format!("need R_hat = {r_hat} > R_kick = {r_kick} >= 0")));
    }
    let per_unit = (1.0 / sample_every).round();
    if !(per_unit >= 1.0 && (per_unit * sample_every - 1.0).abs() < 1e-9) {
        return Err(Error::Parameter(format!(
            "sampling interval {sample_every} must divide one time unit"
        )));
    }
    if !absorption.entered {
        return Err(Error::Undetermined("the absorbing ball was not entered".into()));
    }
    let lag = per_unit as usize;
    let count = (horizon / sample_every).round() as usize;
    if count < lag {
        return Err(Error::Undetermined(format!("horizon {horizon} is shorter than one time unit")));
    }
    let r_star = absorption.r_star;
    let series: Vec<(Vec<f64>, Vec<f64>)> = probes
        .par_iter()
        .map(|u| {
            let mut s = Solver::new(u.clone(), params.clone(), *cfg)?;
            let mut w1 = vec![u.norm_w1()];
            let mut w2 = vec![u.norm_w2()];
            for _ in 0..count {
                s.evolve(sample_every)?;
                w1.push(s.state().norm_w1());
                w2.push(s.state().norm_w2());
            }
            Ok((w1, w2))
        })
        .collect::<Result<_>>()?;
    let outer = |j: usize| series.iter().map(|s| s.0[j]).fold(0.0, f64::max);
    let inner = |j: usize| series.iter().map(|s| s.1[j - lag]).fold(0.0, f64::max);
    let ok = |j: usize| outer(j) <= r_hat - r_kick && inner(j) <= r_star;
    // scan backwards for the start of the final run of admissible samples
    let mut first = None;
    for j in (lag..=count).rev() {
        if ok(j) {
            first = Some(j);
        } else {
            break;
        }
    }
    let j = first.ok_or_else(|| {
        Error::Undetermined(format!("no admissible time up to horizon {horizon}"))
    })?;
    if j == count && count > lag && !ok(count - 1) {
        return Err(Error::Undetermined(
            "conditions first hold at the horizon; extend it".into(),
        ));
    }
    Ok(TcReport {
        t_c: j as f64 * sample_every,
        outer_margin: r_hat - r_kick - outer(j),
        inner_margin: r_star - inner(j),
        sample_every,
    })
}

/// Stream index for replica `r` of ensemble `e`.
pub fn replica_stream(ensemble: u64, replica: u64) -> u64 {
    (ensemble << 32) | replica
}

/// Runs one chain, calling `observe(k, U_k)` for `k = 0..=n_steps`.
/// Iterates after the first must stay in the closed `R_hat` ball.
#[allow(clippy::too_many_arguments)]
pub fn run_chain_observed<F>(
    u0: &State,
    config: &ChainConfig,
    params: &PhysParams,
    cfg: &StepConfig,
    basis: &EigenBasis,
    n_steps: usize,
    replica: u64,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(usize, &State) -> Result<()>,
{
    let mut solver = Solver::new(retract(u0, config.r_hat), params.clone(), *cfg)?;
    observe(0, u0)?;
    let mut u = u0.clone();
    for k in 1..=n_steps {
        solver.set_state(retract(&u, config.r_hat));
        solver.evolve(config.period)?;
        let mut rng: ChaCha8Rng = stream(config.seed, replica, k as u64);
        let eta = sample_kick(&config.kicks, basis, &mut rng)?;
        u = solver.state() + &eta;
        let n = u.norm_w1();
        if !(n <= config.r_hat) {
            return Err(Error::Invariant(format!(
                "iterate {k} of replica {replica} has W1 norm {n} outside R_hat = {}",
                config.r_hat
            )));
        }
        observe(k, &u)?;
    }
    Ok(())
}

/// `U_0, ..., U_{n_steps}` of one chain.
pub fn run_chain(
    u0: &State,
    config: &ChainConfig,
    params: &PhysParams,
    cfg: &StepConfig,
    basis: &EigenBasis,
    n_steps: usize,
    replica: u64,
) -> Result<Vec<State>> {
    let mut out = Vec::with_capacity(n_steps + 1);
    run_chain_observed(u0, config, params, cfg, basis, n_steps, replica, |_, u| {
        out.push(u.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Test-function families scanned per direction.
const OFFSET_QUANTILES: usize = 7;
const WIDTH_GRID: usize = 10;

fn mean(x: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for v in x {
        for (a, b) in m.iter_mut().zip(v) {
            *a += b;
        }
    }
    let n = x.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn ramp_gap(pa: &[f64], pb: &[f64], s: f64, h: f64) -> f64 {
    let f = |p: f64| (p - s).clamp(-h, h);
    let ma = pa.iter().map(|&p| f(p)).sum::<f64>() / pa.len() as f64;
    let mb = pb.iter().map(|&p| f(p)).sum::<f64>() / pb.len() as f64;
    (ma - mb).abs() / (1.0 + h)
}

/// Largest `|E_A f - E_B f|` over ramps `f(x) = clamp(<a, x> - s, -h, h) / (1 + h)`,
/// each with `sup |f| + Lip f = 1`, for `dictionary_size` unit directions
/// `a`: the mean difference, then the coordinate axes, then random ones.
/// Every ramp is admissible, so the result is a lower bound on the
/// dual-Lipschitz distance of the empirical measures.
pub fn dual_lipschitz_estimate(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    dictionary_size: usize,
    seed: u64,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let dim = a[0].len();
    if let Some(v) = a.iter().chain(b).find(|v| v.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: v.len(),
        });
    }
    let (ma, mb) = (mean(a, dim), mean(b, dim));
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(dictionary_size);
    let diff: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
    let dn = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dn > 0.0 {
        dirs.push(diff.iter().map(|v| v / dn).collect());
    }
    for i in 0..dim {
        if dirs.len() >= dictionary_size {
            break;
        }
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        dirs.push(e);
    }
    let mut i = 0u64;
    while dirs.len() < dictionary_size && dim > 0 {
        let mut rng = stream(seed, 0, i);
        i += 1;
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            dirs.push(g.into_iter().map(|v| v / n).collect());
        }
    }
    let best = dirs
        .par_iter()
        .map(|d| {
            let proj = |x: &Vec<f64>| x.iter().zip(d).map(|(p, q)| p * q).sum::<f64>();
            let pa: Vec<f64> = a.iter().map(proj).collect();
            let pb: Vec<f64> = b.iter().map(proj).collect();
            best_ramp(&pa, &pb)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Best ramp over a finite grid of offsets and widths for projected data.
fn best_ramp(pa: &[f64], pb: &[f64]) -> f64 {
    let mean_a = pa.iter().sum::<f64>() / pa.len() as f64;
    let mean_b = pb.iter().sum::<f64>() / pb.len() as f64;
    let mut pooled: Vec<f64> = pa.iter().chain(pb).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let lo = pooled[0];
    let hi = pooled[pooled.len() - 1];
    let spread = hi - lo;
    if spread == 0.0 {
        return 0.0;
    }
    let mut offsets = vec![0.5 * (mean_a + mean_b)];
    for j in 0..OFFSET_QUANTILES {
        let q = (j as f64 + 0.5) / OFFSET_QUANTILES as f64;
        let x = q * (pooled.len() - 1) as f64;
        let (i0, t) = (x.floor() as usize, x.fract());
        let i1 = (i0 + 1).min(pooled.len() - 1);
        offsets.push(pooled[i0] * (1.0 - t) + pooled[i1] * t);
    }
    let mut widths = vec![0.5 * (mean_a - mean_b).abs()];
    for j in 0..WIDTH_GRID {
        widths.push(spread * 2f64.powi(-(j as i32)));
    }
    let mut best: f64 = 0.0;
    for &s in &offsets {
        for &h in &widths {
            if h > 0.0 {
                best = best.max(ramp_gap(pa, pb, s, h));
            }
        }
    }
    best
}

/// State-level wrapper: compares the first `m` W1 coordinates.
pub fn dual_lipschitz_states(
    a: &[State],
    b: &[State],
    basis: &EigenBasis,
    m: usize,
    dictionary_size: usize,
    seed: u64,
) -> Result<f64> {
    let ca = a.iter().map(|u| basis.w1_coordinates(u, m)).collect::<Result<Vec<_>>>()?;
    let cb = b.iter().map(|u| basis.w1_coordinates(u, m)).collect::<Result<Vec<_>>>()?;
    dual_lipschitz_estimate(&ca, &cb, dictionary_size, seed)
}

/// Exact dual-Lipschitz distance of two point masses `d` apart in W1.
pub fn point_mass_distance(d: f64) -> f64 {
    2.0 * d / (2.0 + d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErgodicityOptions {
    pub replicas: usize,
    pub n_steps: usize,
    /// W1 coordinates fed to the estimator.
    pub coordinates: usize,
    pub dictionary_size: usize,
    /// First kick index used in the fit.
    pub burn_in: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicityReport {
    /// Distance between the two ensembles after each kick.
    pub distance: TimeSeries,
    /// Median distance over the second half, the sampling-noise level.
    pub floor: f64,
    /// Kick indices `[start, end)` used in the fit.
    pub window: (usize, usize),
    pub fit: Option<LinearFit>,
    /// `exp(slope)` of the log-linear fit.
    pub gamma_hat: Option<f64>,
    /// Largest W1 norm seen after the first kick.
    pub max_norm: f64,
}

impl ErgodicityReport {
    pub fn decays(&self, min_r2: f64) -> bool {
        matches!((self.fit, self.gamma_hat), (Some(f), Some(g)) if f.r_squared >= min_r2 && g < 1.0)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "floor = {:e}\nwindow = [{}, {})\nmax_norm = {:e}\n",
            self.floor, self.window.0, self.window.1, self.max_norm
        );
        match (self.fit, self.gamma_hat) {
            (Some(f), Some(g)) => s.push_str(&format!(
                "gamma_hat = {g:e}\nslope = {:e}\nr_squared = {}\n",
                f.slope, f.r_squared
            )),
            _ => s.push_str("gamma_hat = none\nnot decaying above the floor\n"),
        }
        s
    }
}

type Coordinates = Vec<Vec<f64>>;

fn ensemble(
    u0: &State,
    ensemble_id: u64,
    config: &ChainConfig,
    params: &PhysParams,
    cfg: &StepConfig,
    basis: &EigenBasis,
    opts: &ErgodicityOptions,
) -> Result<(Vec<Coordinates>, f64)> {
    let runs: Vec<(Coordinates, f64)> = (0..opts.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut coords = Vec::with_capacity(opts.n_steps + 1);
            let mut max_norm: f64 = 0.0;
            run_chain_observed(
                u0,
                config,
                params,
                cfg,
                basis,
                opts.n_steps,
                replica_stream(ensemble_id, r),
                |k, u| {
                    if k > 0 {
                        max_norm = max_norm.max(u.norm_w1());
                    }
                    coords.push(basis.w1_coordinates(u, opts.coordinates)?);
                    Ok(())
                },
            )?;
            Ok((coords, max_norm))
        })
        .collect::<Result<_>>()?;
    let max_norm = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    // regroup as [k][replica]
    let mut by_step: Vec<Coordinates> = vec![Vec::with_capacity(opts.replicas); opts.n_steps + 1];
    for (coords, _) in runs {
        for (k, c) in coords.into_iter().enumerate() {
            by_step[k].push(c);
        }
    }
    Ok((by_step, max_norm))
}

/// Two ensembles of independent chains from `u_a` and `u_b`, compared
/// after every kick.
#[allow(clippy::too_many_arguments)]
pub fn ergodicity_probe(
    config: &ChainConfig,
    params: &PhysParams,
    cfg: &StepConfig,
    basis: &EigenBasis,
    u_a: &State,
    u_b: &State,
    opts: &ErgodicityOptions,
) -> Result<ErgodicityReport> {
    if opts.replicas == 0 || opts.n_steps == 0 {
        return Err(Error::InsufficientData("need replicas and steps".into()));
    }
    if opts.coordinates > basis.len() {
        return Err(Error::Range {
            index: opts.coordinates,
            max: basis.len(),
        });
    }
    let (ea, na) = ensemble(u_a, 0, config, params, cfg, basis, opts)?;
    let (eb, nb) = ensemble(u_b, 1, config, params, cfg, basis, opts)?;
    let mut distance = TimeSeries::empty("dual_lipschitz_distance");
    for (k, (a, b)) in ea.iter().zip(&eb).enumerate() {
        let d = dual_lipschitz_estimate(a, b, opts.dictionary_size, config.seed ^ k as u64)?;
        distance.push(k as f64, d)?;
    }
    let v = distance.values();
    let mut tail: Vec<f64> = v[v.len() / 2..].to_vec();
    tail.sort_by(f64::total_cmp);
    let floor = tail[tail.len() / 2];
    let start = opts.burn_in.min(v.len());
    let end = (start..v.len()).find(|&k| v[k] <= 2.0 * floor).unwrap_or(v.len());
    let (x, y): (Vec<f64>, Vec<f64>) = (start..end)
        .filter(|&k| v[k] > 0.0)
        .map(|k| (k as f64, v[k].ln()))
        .unzip();
    let fit = if x.len() >= 3 { linear_fit(&x, &y).ok() } else { None };
    Ok(ErgodicityReport {
        gamma_hat: fit.map(|f| f.slope.exp()),
        distance,
        floor,
        window: (start, end),
        fit,
        max_norm: na.max(nb),
    })
}
