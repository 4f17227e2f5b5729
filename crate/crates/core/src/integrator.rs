//! CN-AB2 time stepping: Crank-Nicolson on the diagonal viscous term,
//! Adams-Bashforth 2 (variable step) on everything else.

use crate::dynamics::{PhysParams, RhsEvaluator, Tendency};
use crate::error::{Error, Result};
use crate::field::{mode_table, State};

/// Steps within this fraction of `dt` of a multiple of `dt` are snapped.
const STEP_SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    CnAb2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub cfl_limit: f64,
    pub max_dt: f64,
    pub min_dt: f64,
}

impl StepConfig {
    /// `dt` with CFL limit 0.5 and up to ten halvings.
    pub fn new(dt: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            scheme: Scheme::CnAb2,
            cfl_limit: 0.5,
            max_dt: dt,
            min_dt: dt / 1024.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.min_dt > 0.0
            && self.min_dt <= self.dt
            && self.dt <= self.max_dt
            && self.max_dt.is_finite();
        if !ok {
            return Err(Error::Parameter(format!(
                "need 0 < min_dt <= dt <= max_dt, got {} <= {} <= {}",
                self.min_dt, self.dt, self.max_dt
            )));
        }
        if !(self.cfl_limit > 0.0 && self.cfl_limit <= 1.0) {
            return Err(Error::Parameter(format!(
                "cfl_limit = {} must lie in (0, 1]",
                self.cfl_limit
            )));
        }
        Ok(())
    }
}

impl Default for StepConfig {
    fn default() -> Self {
        Self::new(1e-3).expect("default step is valid")
    }
}

/// Restart data beyond the state itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub time: f64,
    pub dt: f64,
    pub h_prev: f64,
    pub previous: Option<Tendency>,
}

/// A trajectory in progress: the state, its time, and the AB2 history.
pub struct Solver {
    params: PhysParams,
    cfg: StepConfig,
    eval: RhsEvaluator,
    state: State,
    time: f64,
    h_prev: f64,
    previous: Option<Tendency>,
    substeps: u64,
}

impl Solver {
    pub fn new(state: State, params: PhysParams, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        if state.domain() != params.domain() {
            return Err(Error::Parameter(
                "state and forcing live on different domains".into(),
            ));
        }
        Ok(Self {
            eval: RhsEvaluator::new(*state.domain()),
            params,
            cfg,
            state,
            time: 0.0,
            h_prev: 0.0,
            previous: None,
            substeps: 0,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn into_state(self) -> State {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// Number of CFL-triggered step halvings so far.
    pub fn cfl_halvings(&self) -> u64 {
        self.substeps
    }

    pub fn evaluator(&mut self) -> &mut RhsEvaluator {
        &mut self.eval
    }

    /// Replaces the state; the next step restarts with explicit Euler.
    pub fn set_state(&mut self, state: State) {
        self.state = state;
        self.reset_history();
    }

    pub fn reset_history(&mut self) {
        self.previous = None;
        self.h_prev = 0.0;
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            time: self.time,
            dt: self.cfg.dt,
            h_prev: self.h_prev,
            previous: self.previous.clone(),
        }
    }

    pub fn restore(
        state: State,
        params: PhysParams,
        cfg: StepConfig,
        ck: Checkpoint,
    ) -> Result<Self> {
        let mut s = Self::new(state, params, cfg)?;
        s.time = ck.time;
        s.h_prev = ck.h_prev;
        s.previous = ck.previous;
        Ok(s)
    }

    /// One step of the configured `dt`.
    pub fn step(&mut self) -> Result<()> {
        self.advance(self.cfg.dt)
    }

    /// Advances by `h`, halving on CFL violations.
    pub fn advance(&mut self, h: f64) -> Result<()> {
        self.advance_checked(h, None)
    }

    fn advance_checked(&mut self, h: f64, known: Option<Tendency>) -> Result<()> {
        let n = match known {
            Some(n) => n,
            None => {
                let (n, bounds) = self.eval.evaluate(&self.state, &self.params)?;
                let c = bounds.courant(self.state.domain(), h);
                if c > self.cfg.cfl_limit {
                    let half = 0.5 * h;
                    if half < self.cfg.min_dt * (1.0 - STEP_SNAP) {
                        return Err(Error::BlowUp {
                            time: self.time,
                            reason: format!(
                                "Courant number {c:.3} exceeds {} even at min_dt = {}",
                                self.cfg.cfl_limit, self.cfg.min_dt
                            ),
                        });
                    }
                    self.substeps += 1;
                    self.advance_checked(half, Some(n))?;
                    return self.advance_checked(half, None);
                }
                n
            }
        };
        self.apply(n, h)
    }

    fn apply(&mut self, n: Tendency, h: f64) -> Result<()> {
        let explicit = match &self.previous {
            Some(prev) => {
                let r = h / self.h_prev;
                let mut e = n.scaled(1.0 + 0.5 * r);
                e.axpy(-0.5 * r, prev);
                e
            }
            None => n.clone(),
        };
        let table = mode_table(self.state.domain());
        let nu = self.params.nu;
        let (mut next, ex) = (self.state.clone(), explicit);
        {
            let dst = next.components_mut();
            let src = ex.components();
            for (f, e) in dst.into_iter().zip(src) {
                let c = f.coeffs_mut();
                let ec = e.coeffs();
                for (j, &idx) in table.idx.iter().enumerate() {
                    let a = 0.5 * nu * table.lambda[j] * h;
                    c[idx] = (c[idx] * (1.0 - a) + ec[idx] * h) / (1.0 + a);
                }
            }
        }
        next.canonicalize();
        let t_next = self.time + h;
        if !next.is_finite() {
            return Err(Error::BlowUp {
                time: t_next,
                reason: "non-finite coefficients".into(),
            });
        }
        self.state = next;
        self.previous = Some(n);
        self.h_prev = h;
        self.time = t_next;
        Ok(())
    }

    /// Advances by exactly `duration`: whole steps of `dt`, then one
    /// shortened step for any remainder.
    pub fn evolve(&mut self, duration: f64) -> Result<()> {
        if !(duration >= 0.0) {
            return Err(Error::Parameter(format!(
                "duration {duration} must be nonnegative"
            )));
        }
        let dt = self.cfg.dt;
        let (whole, rest) = step_plan(duration, dt);
        for _ in 0..whole {
            self.step()?;
        }
        if rest > 0.0 {
            self.advance(rest)?;
        }
        Ok(())
    }

    /// Like [`Solver::evolve`], calling `observe` after every `every` steps
    /// and once at the end.
    pub fn evolve_observed<F>(&mut self, duration: f64, every: u64, mut observe: F) -> Result<()>
    where
        F: FnMut(&Solver) -> Result<()>,
    {
        if !(duration >= 0.0) || every == 0 {
            return Err(Error::Parameter(
                "duration must be nonnegative and the sampling cadence positive".into(),
            ));
        }
        let (whole, rest) = step_plan(duration, self.cfg.dt);
        for i in 0..whole {
            self.step()?;
            if (i + 1) % every == 0 && !(rest == 0.0 && i + 1 == whole) {
                observe(self)?;
            }
        }
        if rest > 0.0 {
            self.advance(rest)?;
        }
        observe(self)
    }
}

/// `(number of full dt steps, length of the final partial step)`.
pub fn step_plan(duration: f64, dt: f64) -> (u64, f64) {
    let q = duration / dt;
    let nearest = q.round();
    if (q - nearest).abs() <= STEP_SNAP * q.max(1.0) {
        return (nearest as u64, 0.0);
    }
    let whole = q.floor();
    (whole as u64, duration - whole * dt)
}

/// One step from a fresh history (explicit Euler on the explicit part).
pub fn step(state: &State, params: &PhysParams, cfg: &StepConfig) -> Result<State> {
    let mut s = Solver::new(state.clone(), params.clone(), *cfg)?;
    s.step()?;
    Ok(s.into_state())
}

/// `S_t U`.
pub fn evolve(state: &State, params: &PhysParams, cfg: &StepConfig, t: f64) -> Result<State> {
    let mut s = Solver::new(state.clone(), params.clone(), *cfg)?;
    s.evolve(t)?;
    Ok(s.into_state())
}

/// `R U / ||U||_{W1}` when `||U||_{W1} > R`, else `U`.
pub fn retract(state: &State, r_hat: f64) -> State {
    let n = state.norm_w1();
    if n > r_hat {
        state.scaled(r_hat / n)
    } else {
        state.clone()
    }
}

/// `S_T` applied after radial retraction onto the ball of radius `r_hat`.
pub fn truncated_map(
    state: &State,
    params: &PhysParams,
    cfg: &StepConfig,
    t: f64,
    r_hat: f64,
) -> Result<State> {
    if !(t > 0.0 && r_hat > 0.0) {
        return Err(Error::Parameter(format!(
            "need T > 0 and R_hat > 0, got T = {t}, R_hat = {r_hat}"
        )));
    }
    evolve(&retract(state, r_hat), params, cfg, t)
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
        DomainSpec::new([2.0 * PI, 2.0 * PI, 2.0], [8, 8, 8]).unwrap()
    }

    fn shear(d: DomainSpec, a: f64) -> State {
        let v = VelocityField::new(
            ScalarField::mode(d, Parity::EvenInZ, [0, 0, 1], Phase::Cos, a).unwrap(),
            ScalarField::zeros(d, Parity::EvenInZ),
        )
        .unwrap();
        State::new(v, ScalarField::zeros(d, Parity::OddInZ)).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(StepConfig::new(0.0).is_err());
        let mut c = StepConfig::new(1e-3).unwrap();
        c.cfl_limit = 1.5;
        assert!(c.validate().is_err());
        c.cfl_limit = 1.0;
        c.min_dt = 2e-3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn step_plan_snaps_and_splits() {
        assert_eq!(step_plan(1.0, 1e-3), (1000, 0.0));
        assert_eq!(step_plan(0.0, 0.1), (0, 0.0));
        let (w, r) = step_plan(0.25, 0.1);
        assert_eq!(w, 2);
        assert!((r - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_state_is_fixed() {
        let d = domain();
        let p = PhysParams::unforced(d, 1.0, 1.0).unwrap();
        let cfg = StepConfig::new(1e-2).unwrap();
        assert!(evolve(&State::zeros(d), &p, &cfg, 0.5).unwrap().is_zero());
    }

    #[test]
    fn heat_decay_of_shear_mode() {
        let d = domain();
        let p = PhysParams::unforced(d, 0.2, 0.0).unwrap();
        let cfg = StepConfig::new(1e-3).unwrap();
        let u0 = shear(d, 1.0);
        let u = evolve(&u0, &p, &cfg, 1.0).unwrap();
        let lambda = (2.0 * PI / 2.0f64).powi(2);
        let want = shear(d, (-0.2 * lambda).exp());
        let err = (&u - &want).norm_w1() / want.norm_w1();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn semigroup_is_bitwise() {
        let d = domain();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u0 = State::random(d, &mut rng, 1.0);
        let p = PhysParams::unforced(d, 1.0, 1.0).unwrap();
        let cfg = StepConfig::new(1e-2).unwrap();
        let mut a = Solver::new(u0.clone(), p.clone(), cfg).unwrap();
        a.evolve(0.3).unwrap();
        a.evolve(0.2).unwrap();
        let mut b = Solver::new(u0, p, cfg).unwrap();
        b.evolve(0.5).unwrap();
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn restore_continues_identically() {
        let d = domain();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u0 = State::random(d, &mut rng, 1.0);
        let p = PhysParams::unforced(d, 1.0, 1.0).unwrap();
        let cfg = StepConfig::new(1e-2).unwrap();
        let mut a = Solver::new(u0, p.clone(), cfg).unwrap();
        a.evolve(0.1).unwrap();
        let mut b = Solver::restore(a.state().clone(), p, cfg, a.checkpoint()).unwrap();
        a.evolve(0.1).unwrap();
        b.evolve(0.1).unwrap();
        assert_eq!(a.state(), b.state());
        assert_eq!(a.time(), b.time());
    }

    #[test]
    fn cfl_violation_halves_then_fails() {
        let d = domain();
        let p = PhysParams::unforced(d, 1.0, 0.0).unwrap();
        let mut cfg = StepConfig::new(0.05).unwrap();
        cfg.min_dt = 0.05 / 16.0;
        let fast = shear(d, 20.0);
        let mut s = Solver::new(fast.clone(), p.clone(), cfg).unwrap();
        s.step().unwrap();
        assert!(s.cfl_halvings() > 0);
        assert!((s.time() - 0.05).abs() < 1e-15);
        let mut s = Solver::new(fast.scaled(100.0), p, cfg).unwrap();
        assert!(matches!(s.step(), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn truncated_map_branches() {
        let d = domain();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = State::random(d, &mut rng, 1.0);
        let r = u.norm_w1();
        let p = PhysParams::unforced(d, 1.0, 1.0).unwrap();
        let cfg = StepConfig::new(1e-2).unwrap();
        let inside = truncated_map(&u, &p, &cfg, 0.2, 2.0 * r).unwrap();
        assert_eq!(inside, evolve(&u, &p, &cfg, 0.2).unwrap());
        let outside = truncated_map(&u, &p, &cfg, 0.2, 0.5 * r).unwrap();
        assert_eq!(outside, evolve(&u.scaled(0.5 * r / r), &p, &cfg, 0.2).unwrap());
        assert!(truncated_map(&State::zeros(d), &p, &cfg, 0.2, 1.0).unwrap().is_zero());
    }
}
