//! Eigenbasis of the Stokes-like operator `A = -Laplacian_{x,z}` on the
//! constrained state space, and the projectors `P_N`, `Q_N = I - P_N`.
//!
//! Every basis element is a single real Fourier mode
//! `h(kappa_h . x) g(kappa3 z)` in one component slot, normalized in the
//! L2 inner product. Elements are ordered by eigenvalue with ties broken
//! lexicographically on `(k1, k2, k3, phase, slot)`.

use std::cmp::Ordering;

use num_complex::Complex64;

use crate::domain::{Axis, DomainSpec};
use crate::error::{Error, Result};
use crate::field::{Parity, Phase, ScalarField, State, VelocityField};

/// Relative width inside which two eigenvalues count as equal.
const TIE_TOLERANCE: f64 = 1e-12;

/// Which component of the state a basis element occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    /// `k3 = 0`: the solenoidal direction `(-kappa2, kappa1) / |kappa_h|`.
    /// `k3 != 0`: the unit vector along `x1`.
    VelocityA,
    /// `k3 != 0` only: the unit vector along `x2`.
    VelocityB,
    Buoyancy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeDescriptor {
    pub wavevector: [i64; 3],
    pub phase: Phase,
    pub slot: Slot,
}

impl ModeDescriptor {
    fn sort_key(&self) -> ([i64; 3], Phase, Slot) {
        (self.wavevector, self.phase, self.slot)
    }
}

#[derive(Clone, Debug)]
pub struct BasisEntry {
    pub lambda: f64,
    pub mode: ModeDescriptor,
    /// Nonzero coefficients as `(component, flat index, value)` with
    /// components ordered `v1, v2, b`.
    terms: Vec<(usize, usize, Complex64)>,
}

impl BasisEntry {
    pub fn terms(&self) -> &[(usize, usize, Complex64)] {
        &self.terms
    }
}

#[derive(Clone, Debug)]
pub struct EigenBasis {
    domain: DomainSpec,
    capacity: usize,
    entries: Vec<BasisEntry>,
}

/// `true` for wavevectors that represent their `+-k_h` pair: `k3 >= 0` and
/// `k_h` in the upper half plane, or `k_h = 0` with `k3 > 0`.
fn is_canonical(k: [i64; 3]) -> bool {
    if k[2] < 0 {
        return false;
    }
    match (k[0], k[1]) {
        (0, 0) => k[2] > 0,
        (k1, k2) => k1 > 0 || (k1 == 0 && k2 > 0),
    }
}

fn mode_state(domain: DomainSpec, m: &ModeDescriptor) -> Result<State> {
    let k = m.wavevector;
    let even = |amp| ScalarField::mode(domain, Parity::EvenInZ, k, m.phase, amp);
    let zero_e = ScalarField::zeros(domain, Parity::EvenInZ);
    let zero_o = ScalarField::zeros(domain, Parity::OddInZ);
    let state = match (m.slot, k[2] == 0) {
        (Slot::VelocityA, true) => {
            let k1 = domain.kappa(Axis::X1, k[0]);
            let k2 = domain.kappa(Axis::X2, k[1]);
            let r = k1.hypot(k2);
            State::from_parts(VelocityField::from_parts(even(-k2 / r)?, even(k1 / r)?), zero_o)
        }
        (Slot::VelocityA, false) => {
            State::from_parts(VelocityField::from_parts(even(1.0)?, zero_e.clone()), zero_o)
        }
        (Slot::VelocityB, false) => {
            State::from_parts(VelocityField::from_parts(zero_e, even(1.0)?), zero_o)
        }
        (Slot::Buoyancy, false) => State::from_parts(
            VelocityField::zeros(domain),
            ScalarField::mode(domain, Parity::OddInZ, k, m.phase, 1.0)?,
        ),
        _ => {
            return Err(Error::Constraint(format!(
                "slot {:?} does not exist at k3 = 0",
                m.slot
            )))
        }
    };
    Ok(state)
}

fn all_descriptors(domain: &DomainSpec) -> Vec<ModeDescriptor> {
    let mut out = Vec::new();
    let c = Axis::ALL.map(|a| domain.cutoff(a));
    for k1 in -c[0]..=c[0] {
        for k2 in -c[1]..=c[1] {
            for k3 in 0..=c[2] {
                let k = [k1, k2, k3];
                if !is_canonical(k) {
                    continue;
                }
                let phases: &[Phase] = if k1 == 0 && k2 == 0 {
                    &[Phase::Cos]
                } else {
                    &[Phase::Cos, Phase::Sin]
                };
                let slots: &[Slot] = if k3 == 0 {
                    &[Slot::VelocityA]
                } else {
                    &[Slot::VelocityA, Slot::VelocityB, Slot::Buoyancy]
                };
                for &phase in phases {
                    for &slot in slots {
                        out.push(ModeDescriptor {
                            wavevector: k,
                            phase,
                            slot,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Number of basis elements the truncation of `domain` supports.
pub fn capacity(domain: &DomainSpec) -> usize {
    all_descriptors(domain).len()
}

/// The first `count` eigenpairs under the deterministic ordering.
pub fn build_basis(domain: DomainSpec, count: usize) -> Result<EigenBasis> {
    let mut modes: Vec<(f64, ModeDescriptor)> = all_descriptors(&domain)
        .into_iter()
        .map(|m| (domain.lambda(m.wavevector), m))
        .collect();
    let capacity = modes.len();
    if count > capacity {
        return Err(Error::Capacity {
            requested: count,
            capacity,
        });
    }
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // snap near-equal eigenvalues onto the first of their cluster so that
    // the tie-break is not at the mercy of round-off in kappa^2
    let mut rep = f64::NAN;
    for m in modes.iter_mut() {
        if rep.is_nan() || (m.0 - rep) > TIE_TOLERANCE * rep {
            rep = m.0;
        }
        m.0 = rep;
    }
    modes.sort_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => a.1.sort_key().cmp(&b.1.sort_key()),
        o => o,
    });
    let mut entries = Vec::with_capacity(count);
    for (lambda, mode) in modes.into_iter().take(count) {
        let mut u = mode_state(domain, &mode)?;
        let n = u.norm_l2();
        u.scale(1.0 / n);
        let mut terms = Vec::new();
        for (comp, f) in u.components().iter().enumerate() {
            for (idx, &c) in f.coeffs().iter().enumerate() {
                if c != Complex64::new(0.0, 0.0) {
                    terms.push((comp, idx, c));
                }
            }
        }
        entries.push(BasisEntry {
            lambda,
            mode,
            terms,
        });
    }
    Ok(EigenBasis {
        domain,
        capacity,
        entries,
    })
}

impl EigenBasis {
    /// Every admissible mode of the truncation.
    pub fn full(domain: DomainSpec) -> Self {
        build_basis(domain, capacity(&domain)).expect("full basis is within capacity")
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether the basis spans the whole truncated state space.
    pub fn is_complete(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn lambda(&self, k: usize) -> f64 {
        self.entries[k].lambda
    }

    /// `e_k` as a state.
    pub fn element(&self, k: usize) -> State {
        let mut u = State::zeros(self.domain);
        self.add_element(&mut u, k, 1.0);
        u
    }

    fn add_element(&self, u: &mut State, k: usize, a: f64) {
        let comps = u.components_mut();
        for &(comp, idx, c) in &self.entries[k].terms {
            comps[comp].coeffs_mut()[idx] += c * a;
        }
    }

    /// `<U, e_k>` in L2.
    pub fn coordinate(&self, u: &State, k: usize) -> f64 {
        let comps = u.components();
        let s: f64 = self.entries[k]
            .terms
            .iter()
            .map(|&(comp, idx, c)| {
                let d = comps[comp].coeffs()[idx];
                d.re * c.re + d.im * c.im
            })
            .sum();
        s * self.domain.volume()
    }

    /// `<U, e_k>` for `k < n`.
    pub fn coordinates(&self, u: &State, n: usize) -> Result<Vec<f64>> {
        self.check_range(n)?;
        Ok((0..n).map(|k| self.coordinate(u, k)).collect())
    }

    /// `sum_k a_k e_k`.
    pub fn synthesize(&self, coords: &[f64]) -> Result<State> {
        self.check_range(coords.len())?;
        let mut u = State::zeros(self.domain);
        for (k, &a) in coords.iter().enumerate() {
            self.add_element(&mut u, k, a);
        }
        Ok(u)
    }

    /// State with W1 coordinates `y_k = sqrt(lambda_k) <U, e_k>`, so that
    /// `||U||_{W1} = |y|`.
    pub fn from_w1_coordinates(&self, y: &[f64]) -> Result<State> {
        let a: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(k, &v)| v / self.entries.get(k).map_or(1.0, |e| e.lambda.sqrt()))
            .collect();
        self.synthesize(&a)
    }

    /// `sqrt(lambda_k) <U, e_k>` for `k < n`.
    pub fn w1_coordinates(&self, u: &State, n: usize) -> Result<Vec<f64>> {
        let mut c = self.coordinates(u, n)?;
        for (k, v) in c.iter_mut().enumerate() {
            *v *= self.entries[k].lambda.sqrt();
        }
        Ok(c)
    }

    fn check_range(&self, n: usize) -> Result<()> {
        if n > self.entries.len() {
            return Err(Error::Range {
                index: n,
                max: self.entries.len(),
            });
        }
        Ok(())
    }

    /// `P_N U`.
    pub fn project_low(&self, u: &State, n: usize) -> Result<State> {
        self.check_range(n)?;
        if n == self.entries.len() && self.is_complete() {
            return Ok(u.clone());
        }
        let c = self.coordinates(u, n)?;
        self.synthesize(&c)
    }

    /// `Q_N U = U - P_N U`.
    pub fn project_high(&self, u: &State, n: usize) -> Result<State> {
        self.check_range(n)?;
        if n == 0 {
            return Ok(u.clone());
        }
        if n == self.entries.len() && self.is_complete() {
            return Ok(State::zeros(self.domain));
        }
        let p = self.project_low(u, n)?;
        let mut q = u - &p;
        q.canonicalize();
        Ok(q)
    }

    /// `||Q_N U||_{W1}` for every `N = 0..=len`, from suffix sums of
    /// `lambda_k <U, e_k>^2`. Monotone by construction and exactly zero at
    /// `N = len` for a complete basis.
    pub fn tail_w1_norms(&self, u: &State) -> Vec<f64> {
        let m = self.entries.len();
        let rest = if self.is_complete() {
            0.0
        } else {
            let q = self.project_high(u, m).expect("in range");
            q.norm_w1().powi(2)
        };
        let mut out = vec![0.0; m + 1];
        let mut acc = rest;
        out[m] = acc.sqrt();
        for k in (0..m).rev() {
            let c = self.coordinate(u, k);
            acc += self.entries[k].lambda * c * c;
            out[k] = acc.sqrt();
        }
        out
    }
}
