//! Constrained Fourier fields: scalars with a z-parity, horizontal velocities
//! with a divergence-free vertical mean, and the state `U = (v; b)`.
//!
//! A field is `f(x) = sum_k c_k exp(i kappa . x)` over the dealiased box.
//! Every constructor and every operation hands back coefficients that are
//! Hermitian (real field), have the declared z-parity, zero mean, and vanish
//! outside the truncation. [`ScalarField::canonicalize`] re-imposes these
//! after arithmetic that can break them by round-off.

use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{Axis, DomainSpec};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerance (relative to the field scale) used when validating external input.
pub const INPUT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    EvenInZ,
    OddInZ,
}

impl Parity {
    pub fn flipped(self) -> Self {
        match self {
            Parity::EvenInZ => Parity::OddInZ,
            Parity::OddInZ => Parity::EvenInZ,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Parity::EvenInZ => 1.0,
            Parity::OddInZ => -1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Parity::EvenInZ => 0,
            Parity::OddInZ => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Parity::EvenInZ),
            1 => Some(Parity::OddInZ),
            _ => None,
        }
    }
}

/// Horizontal phase of a real Fourier mode: `cos(kappa_h . x)` or `sin(kappa_h . x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Cos,
    Sin,
}

/// Retained wavevectors of a domain with their symmetry partners.
#[derive(Debug)]
pub(crate) struct ModeTable {
    /// Flat storage index of every retained mode except `k = 0`.
    pub idx: Vec<usize>,
    pub kappa: Vec<[f64; 3]>,
    pub lambda: Vec<f64>,
    /// Flat index of `-k`.
    pub neg: Vec<usize>,
    /// Flat index of `(k1, k2, -k3)`.
    pub zref: Vec<usize>,
    /// Flat index of `(-k1, -k2, k3)`.
    pub negz: Vec<usize>,
    /// Whether `k3 == 0`.
    pub barotropic: Vec<bool>,
    /// Membership mask over the full storage array.
    pub retained: Vec<bool>,
}

impl ModeTable {
    fn build(domain: &DomainSpec) -> Self {
        let mut t = ModeTable {
            idx: Vec::new(),
            kappa: Vec::new(),
            lambda: Vec::new(),
            neg: Vec::new(),
            zref: Vec::new(),
            negz: Vec::new(),
            barotropic: Vec::new(),
            retained: vec![false; domain.len()],
        };
        let r1 = domain.retained_storage(Axis::X1);
        let r2 = domain.retained_storage(Axis::X2);
        let r3 = domain.retained_storage(Axis::Z);
        for &i1 in &r1 {
            for &i2 in &r2 {
                for &i3 in &r3 {
                    let idx = domain.flat(i1, i2, i3);
                    t.retained[idx] = true;
                    let k = domain.wavevector(idx);
                    if k == [0, 0, 0] {
                        continue;
                    }
                    let kappa = [
                        domain.kappa(Axis::X1, k[0]),
                        domain.kappa(Axis::X2, k[1]),
                        domain.kappa(Axis::Z, k[2]),
                    ];
                    t.idx.push(idx);
                    t.kappa.push(kappa);
                    t.lambda.push(domain.lambda(k));
                    t.neg.push(domain.negated(idx));
                    t.zref.push(domain.z_reflected(idx));
                    t.negz.push(domain.negated(domain.z_reflected(idx)));
                    t.barotropic.push(k[2] == 0);
                }
            }
        }
        t
    }
}

type TableKey = ([u64; 3], [usize; 3]);

pub(crate) fn mode_table(domain: &DomainSpec) -> Arc<ModeTable> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<ModeTable>>>> = OnceLock::new();
    let key = (domain.lengths().map(f64::to_bits), domain.sizes());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("mode table cache poisoned");
    guard
        .entry(key)
        .or_insert_with(|| Arc::new(ModeTable::build(domain)))
        .clone()
}

/// Violations of the coefficient constraints, each as a max-abs value
/// divided by the largest coefficient magnitude (zero for the zero field).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConstraintResidual {
    pub reality: f64,
    pub parity: f64,
    pub mean: f64,
    pub truncation: f64,
}

impl ConstraintResidual {
    pub fn max(&self) -> f64 {
        self.reality
            .max(self.parity)
            .max(self.mean)
            .max(self.truncation)
    }

    fn merge(self, other: Self) -> Self {
        Self {
            reality: self.reality.max(other.reality),
            parity: self.parity.max(other.parity),
            mean: self.mean.max(other.mean),
            truncation: self.truncation.max(other.truncation),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    domain: DomainSpec,
    parity: Parity,
    coeffs: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(domain: DomainSpec, parity: Parity) -> Self {
        Self {
            domain,
            parity,
            coeffs: vec![ZERO; domain.len()],
        }
    }

    /// Wraps a coefficient array after checking its length and constraints.
    pub fn from_coeffs(domain: DomainSpec, parity: Parity, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != domain.len() {
            return Err(Error::Dimension {
                expected: domain.len(),
                actual: coeffs.len(),
            });
        }
        let field = Self {
            domain,
            parity,
            coeffs,
        };
        let r = field.constraint_residual();
        if !(r.max() <= INPUT_TOLERANCE) {
            return Err(Error::Constraint(format!(
                "coefficients break field constraints: {r:?}"
            )));
        }
        Ok(field)
    }

    pub(crate) fn from_raw(domain: DomainSpec, parity: Parity, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), domain.len());
        Self {
            domain,
            parity,
            coeffs,
        }
    }

    /// `amplitude * h(kappa_h . x) * g(kappa3 z)` where `h` is the given phase
    /// and `g` is `cos` for even fields and `sin` for odd ones.
    pub fn mode(
        domain: DomainSpec,
        parity: Parity,
        k: [i64; 3],
        phase: Phase,
        amplitude: f64,
    ) -> Result<Self> {
        if !domain.in_truncation(k) {
            return Err(Error::Constraint(format!(
                "wavevector {k:?} lies outside the dealiased truncation"
            )));
        }
        let mut f = Self::zeros(domain, parity);
        let half = 0.5;
        let horizontal: [(i64, i64, Complex64); 2] = match phase {
            Phase::Cos => [
                (k[0], k[1], Complex64::new(half, 0.0)),
                (-k[0], -k[1], Complex64::new(half, 0.0)),
            ],
            Phase::Sin => [
                (k[0], k[1], Complex64::new(0.0, -half)),
                (-k[0], -k[1], Complex64::new(0.0, half)),
            ],
        };
        let vertical: [(i64, Complex64); 2] = match parity {
            Parity::EvenInZ => [
                (k[2], Complex64::new(half, 0.0)),
                (-k[2], Complex64::new(half, 0.0)),
            ],
            Parity::OddInZ => [
                (k[2], Complex64::new(0.0, -half)),
                (-k[2], Complex64::new(0.0, half)),
            ],
        };
        for &(a, b, ch) in &horizontal {
            for &(c, cv) in &vertical {
                let idx = domain.index_of([a, b, c]);
                f.coeffs[idx] += ch * cv * amplitude;
            }
        }
        f.coeffs[0] = ZERO;
        if f.is_zero() && amplitude != 0.0 {
            return Err(Error::Constraint(format!(
                "mode {k:?} with phase {phase:?} vanishes identically for parity {parity:?}"
            )));
        }
        Ok(f)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn coeff(&self, k: [i64; 3]) -> Complex64 {
        if !self.domain.in_truncation(k) {
            return ZERO;
        }
        self.coeffs[self.domain.index_of(k)]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!(self.domain, other.domain, "fields live on different domains");
        assert_eq!(self.parity, other.parity, "fields have different parity");
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        self.assert_compatible(x);
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += d * a;
        }
    }

    /// L2 inner product over the box.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.domain, other.domain);
        if self.parity != other.parity {
            return 0.0;
        }
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        s * self.domain.volume()
    }

    fn weighted_sq(&self, power: i32) -> f64 {
        let table = mode_table(&self.domain);
        let mut s = 0.0;
        for (j, &idx) in table.idx.iter().enumerate() {
            let w = match power {
                0 => 1.0,
                1 => table.lambda[j],
                _ => table.lambda[j] * table.lambda[j],
            };
            s += w * self.coeffs[idx].norm_sqr();
        }
        s * self.domain.volume()
    }

    pub fn norm_l2_sq(&self) -> f64 {
        self.weighted_sq(0)
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_l2_sq().sqrt()
    }

    /// `||grad_{x,z} f||^2`
    pub fn norm_w1_sq(&self) -> f64 {
        self.weighted_sq(1)
    }

    pub fn norm_w1(&self) -> f64 {
        self.norm_w1_sq().sqrt()
    }

    /// `||Laplacian_{x,z} f||^2`
    pub fn norm_w2_sq(&self) -> f64 {
        self.weighted_sq(2)
    }

    pub fn norm_w2(&self) -> f64 {
        self.norm_w2_sq().sqrt()
    }

    /// Gradient inner product `(grad f, grad g)`.
    pub fn inner_w1(&self, other: &Self) -> f64 {
        assert_eq!(self.domain, other.domain);
        if self.parity != other.parity {
            return 0.0;
        }
        let table = mode_table(&self.domain);
        let mut s = 0.0;
        for (j, &idx) in table.idx.iter().enumerate() {
            let (a, b) = (self.coeffs[idx], other.coeffs[idx]);
            s += table.lambda[j] * (a.re * b.re + a.im * b.im);
        }
        s * self.domain.volume()
    }

    fn scale_ref(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Re-imposes reality, parity, zero mean and the truncation by averaging
    /// each coefficient over its symmetry orbit.
    pub fn canonicalize(&mut self) {
        let table = mode_table(&self.domain);
        let s = self.parity.sign();
        let src = std::mem::replace(&mut self.coeffs, vec![ZERO; self.domain.len()]);
        for (j, &idx) in table.idx.iter().enumerate() {
            let c = src[idx]
                + src[table.neg[j]].conj()
                + (src[table.zref[j]] + src[table.negz[j]].conj()) * s;
            self.coeffs[idx] = c * 0.25;
        }
    }

    pub fn constraint_residual(&self) -> ConstraintResidual {
        let table = mode_table(&self.domain);
        let scale = self.scale_ref();
        if scale == 0.0 {
            return ConstraintResidual::default();
        }
        let s = self.parity.sign();
        let mut r = ConstraintResidual {
            mean: self.coeffs[0].norm(),
            ..Default::default()
        };
        for (j, &idx) in table.idx.iter().enumerate() {
            let c = self.coeffs[idx];
            r.reality = r.reality.max((c - self.coeffs[table.neg[j]].conj()).norm());
            r.parity = r.parity.max((c - self.coeffs[table.zref[j]] * s).norm());
        }
        for (idx, c) in self.coeffs.iter().enumerate() {
            if !table.retained[idx] {
                r.truncation = r.truncation.max(c.norm());
            }
        }
        ConstraintResidual {
            reality: r.reality / scale,
            parity: r.parity / scale,
            mean: r.mean / scale,
            truncation: r.truncation / scale,
        }
    }
}

/// Horizontal velocity `v = (v1, v2)`, both components even in z.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    v1: ScalarField,
    v2: ScalarField,
}

impl VelocityField {
    pub fn new(v1: ScalarField, v2: ScalarField) -> Result<Self> {
        if v1.parity != Parity::EvenInZ || v2.parity != Parity::EvenInZ {
            return Err(Error::Constraint(
                "velocity components must be even in z".into(),
            ));
        }
        if v1.domain != v2.domain {
            return Err(Error::Constraint(
                "velocity components live on different domains".into(),
            ));
        }
        Ok(Self { v1, v2 })
    }

    pub(crate) fn from_parts(v1: ScalarField, v2: ScalarField) -> Self {
        debug_assert_eq!(v1.parity, Parity::EvenInZ);
        debug_assert_eq!(v2.parity, Parity::EvenInZ);
        Self { v1, v2 }
    }

    pub fn zeros(domain: DomainSpec) -> Self {
        Self {
            v1: ScalarField::zeros(domain, Parity::EvenInZ),
            v2: ScalarField::zeros(domain, Parity::EvenInZ),
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.v1.domain
    }

    pub fn v1(&self) -> &ScalarField {
        &self.v1
    }

    pub fn v2(&self) -> &ScalarField {
        &self.v2
    }

    pub fn into_components(self) -> (ScalarField, ScalarField) {
        (self.v1, self.v2)
    }

    pub fn is_zero(&self) -> bool {
        self.v1.is_zero() && self.v2.is_zero()
    }

    pub fn scale(&mut self, a: f64) {
        self.v1.scale(a);
        self.v2.scale(a);
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        self.v1.axpy(a, &x.v1);
        self.v2.axpy(a, &x.v2);
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.v1.inner(&other.v1) + self.v2.inner(&other.v2)
    }

    pub fn inner_w1(&self, other: &Self) -> f64 {
        self.v1.inner_w1(&other.v1) + self.v2.inner_w1(&other.v2)
    }

    pub fn norm_l2_sq(&self) -> f64 {
        self.v1.norm_l2_sq() + self.v2.norm_l2_sq()
    }

    pub fn norm_w1_sq(&self) -> f64 {
        self.v1.norm_w1_sq() + self.v2.norm_w1_sq()
    }

    pub fn norm_w2_sq(&self) -> f64 {
        self.v1.norm_w2_sq() + self.v2.norm_w2_sq()
    }

    /// Max over `(k1, k2) != 0` of `|kappa . v_hat(k1, k2, 0)|`, relative to
    /// `max |kappa| |v_hat|`.
    pub fn barotropic_residual(&self) -> f64 {
        let table = mode_table(self.domain());
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (j, &idx) in table.idx.iter().enumerate() {
            if !table.barotropic[j] {
                continue;
            }
            let [k1, k2, _] = table.kappa[j];
            let (a, b) = (self.v1.coeffs[idx], self.v2.coeffs[idx]);
            num = num.max((a * k1 + b * k2).norm());
            den = den.max((k1 * k1 + k2 * k2).sqrt() * (a.norm_sqr() + b.norm_sqr()).sqrt());
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Leray projection of the vertical mean: `v_hat <- (I - kappa kappa^T / |kappa|^2) v_hat`
    /// on every `k3 = 0` wavevector.
    pub fn project_barotropic(&mut self) {
        let table = mode_table(self.domain());
        for (j, &idx) in table.idx.iter().enumerate() {
            if !table.barotropic[j] {
                continue;
            }
            let [k1, k2, _] = table.kappa[j];
            let kk = k1 * k1 + k2 * k2;
            let (a, b) = (self.v1.coeffs[idx], self.v2.coeffs[idx]);
            let s = (a * k1 + b * k2) / kk;
            self.v1.coeffs[idx] = a - s * k1;
            self.v2.coeffs[idx] = b - s * k2;
        }
    }

    pub fn canonicalize(&mut self) {
        self.v1.canonicalize();
        self.v2.canonicalize();
        self.project_barotropic();
    }

    pub fn constraint_residual(&self) -> ConstraintResidual {
        self.v1
            .constraint_residual()
            .merge(self.v2.constraint_residual())
    }
}

/// `U = (v; b)` with `b` odd in z.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    v: VelocityField,
    b: ScalarField,
}

impl State {
    /// Validates parity, domain agreement and the barotropic constraint.
    pub fn new(v: VelocityField, b: ScalarField) -> Result<Self> {
        if b.parity != Parity::OddInZ {
            return Err(Error::Constraint("buoyancy must be odd in z".into()));
        }
        if b.domain != *v.domain() {
            return Err(Error::Constraint(
                "velocity and buoyancy live on different domains".into(),
            ));
        }
        let res = v.barotropic_residual();
        if !(res <= INPUT_TOLERANCE) {
            return Err(Error::Constraint(format!(
                "vertical mean of v is not divergence-free (residual {res:e})"
            )));
        }
        Ok(Self { v, b })
    }

    pub(crate) fn from_parts(v: VelocityField, b: ScalarField) -> Self {
        debug_assert_eq!(b.parity, Parity::OddInZ);
        Self { v, b }
    }

    pub fn zeros(domain: DomainSpec) -> Self {
        Self {
            v: VelocityField::zeros(domain),
            b: ScalarField::zeros(domain, Parity::OddInZ),
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        self.b.domain()
    }

    pub fn v(&self) -> &VelocityField {
        &self.v
    }

    pub fn b(&self) -> &ScalarField {
        &self.b
    }

    pub fn into_parts(self) -> (VelocityField, ScalarField) {
        (self.v, self.b)
    }

    /// Components in the order `v1, v2, b`.
    pub fn components(&self) -> [&ScalarField; 3] {
        [&self.v.v1, &self.v.v2, &self.b]
    }

    pub(crate) fn components_mut(&mut self) -> [&mut ScalarField; 3] {
        [&mut self.v.v1, &mut self.v.v2, &mut self.b]
    }

    pub fn is_zero(&self) -> bool {
        self.v.is_zero() && self.b.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|f| f.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.v.scale(a);
        self.b.scale(a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        self.v.axpy(a, &x.v);
        self.b.axpy(a, &x.b);
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.v.inner(&other.v) + self.b.inner(&other.b)
    }

    pub fn inner_w1(&self, other: &Self) -> f64 {
        self.v.inner_w1(&other.v) + self.b.inner_w1(&other.b)
    }

    pub fn norm_l2(&self) -> f64 {
        (self.v.norm_l2_sq() + self.b.norm_l2_sq()).sqrt()
    }

    pub fn norm_w1(&self) -> f64 {
        (self.v.norm_w1_sq() + self.b.norm_w1_sq()).sqrt()
    }

    pub fn norm_w2(&self) -> f64 {
        (self.v.norm_w2_sq() + self.b.norm_w2_sq()).sqrt()
    }

    pub fn canonicalize(&mut self) {
        self.v.canonicalize();
        self.b.canonicalize();
    }

    /// Largest relative violation across all coefficient constraints,
    /// including the barotropic one.
    pub fn constraint_residual(&self) -> f64 {
        self.v
            .constraint_residual()
            .merge(self.b.constraint_residual())
            .max()
            .max(self.v.barotropic_residual())
    }

    /// Random admissible state whose coefficients have standard-normal
    /// real and imaginary parts scaled by `(1 + lambda)^(-decay)`.
    pub fn random<R: Rng + ?Sized>(domain: DomainSpec, rng: &mut R, decay: f64) -> Self {
        let table = mode_table(&domain);
        let mut comps = [
            ScalarField::zeros(domain, Parity::EvenInZ),
            ScalarField::zeros(domain, Parity::EvenInZ),
            ScalarField::zeros(domain, Parity::OddInZ),
        ];
        for f in comps.iter_mut() {
            for (j, &idx) in table.idx.iter().enumerate() {
                let amp = (1.0 + table.lambda[j]).powf(-decay);
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                f.coeffs[idx] = Complex64::new(re, im) * amp;
            }
        }
        let [v1, v2, b] = comps;
        let mut s = Self::from_parts(VelocityField::from_parts(v1, v2), b);
        s.canonicalize();
        s
    }

    /// Same direction, rescaled so that `||self||_{W1} = radius`.
    pub fn with_w1_norm(&self, radius: f64) -> Self {
        let n = self.norm_w1();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(radius / n)
    }

    /// Copy with the buoyancy set to zero.
    pub fn without_buoyancy(&self) -> Self {
        Self::from_parts(
            self.v.clone(),
            ScalarField::zeros(*self.domain(), Parity::OddInZ),
        )
    }
}

impl Add for &State {
    type Output = State;
    fn add(self, rhs: &State) -> State {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &State {
    type Output = State;
    fn sub(self, rhs: &State) -> State {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &State {
    type Output = State;
    fn mul(self, a: f64) -> State {
        self.scaled(a)
    }
}
