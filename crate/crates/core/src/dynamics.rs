//! Right-hand side of the reformulated primitive equations, without the
//! viscous term (which the integrator treats implicitly):
//!
//! ```text
//! v_t = P[ -(u . grad) v + f (v2, -v1) - grad_x int_0^z b + G_f ]
//! b_t = -(u . grad) b + G_b
//! ```
//!
//! with `u = (v, w)`, `w = -int_0^z div v`, and `P` the Leray projection of
//! the vertical mean (which carries the surface pressure `p`).

use num_complex::Complex64;

use crate::domain::{Axis, DomainSpec};
use crate::error::{Error, Result};
use crate::field::{
    mode_table, Parity, Phase, ScalarField, State, VelocityField, INPUT_TOLERANCE,
};
use crate::ops::{derivative, vertical_fluctuation, vertical_integral};
use crate::transform::{Scratch, Transform};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Time derivative of a state; carries the same constraints as [`State`].
pub type Tendency = State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ForcingComponent {
    V1,
    V2,
    B,
}

/// One real Fourier mode of the body force. Velocity components are
/// `amplitude h(kappa_h . x) cos(kappa3 z)`, buoyancy uses `sin(kappa3 z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForcingEntry {
    pub wavevector: [i64; 3],
    pub phase: Phase,
    pub component: ForcingComponent,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysParams {
    pub nu: f64,
    pub f: f64,
    gf: VelocityField,
    gb: ScalarField,
}

impl PhysParams {
    pub fn new(nu: f64, f: f64, gf: VelocityField, gb: ScalarField) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::Parameter(format!("viscosity nu = {nu} must be positive")));
        }
        if !f.is_finite() {
            return Err(Error::Parameter(format!("Coriolis parameter f = {f} is not finite")));
        }
        if gb.parity() != Parity::OddInZ || gf.domain() != gb.domain() {
            return Err(Error::Constraint(
                "buoyancy forcing must be odd in z and share the velocity domain".into(),
            ));
        }
        let r = gf
            .constraint_residual()
            .max()
            .max(gb.constraint_residual().max())
            .max(gf.barotropic_residual());
        if !(r <= INPUT_TOLERANCE) {
            return Err(Error::Constraint(format!(
                "forcing breaks field constraints (residual {r:e})"
            )));
        }
        Ok(Self { nu, f, gf, gb })
    }

    pub fn unforced(domain: DomainSpec, nu: f64, f: f64) -> Result<Self> {
        Self::new(
            nu,
            f,
            VelocityField::zeros(domain),
            ScalarField::zeros(domain, Parity::OddInZ),
        )
    }

    /// Sums the given modes and validates the total (so a divergent `k3 = 0`
    /// velocity forcing is rejected even when spread across entries).
    pub fn from_entries(
        domain: DomainSpec,
        nu: f64,
        f: f64,
        entries: &[ForcingEntry],
    ) -> Result<Self> {
        let mut v1 = ScalarField::zeros(domain, Parity::EvenInZ);
        let mut v2 = ScalarField::zeros(domain, Parity::EvenInZ);
        let mut b = ScalarField::zeros(domain, Parity::OddInZ);
        for e in entries {
            let (target, parity) = match e.component {
                ForcingComponent::V1 => (&mut v1, Parity::EvenInZ),
                ForcingComponent::V2 => (&mut v2, Parity::EvenInZ),
                ForcingComponent::B => (&mut b, Parity::OddInZ),
            };
            let m = ScalarField::mode(domain, parity, e.wavevector, e.phase, e.amplitude)?;
            target.axpy(1.0, &m);
        }
        Self::new(nu, f, VelocityField::new(v1, v2)?, b)
    }

    pub fn gf(&self) -> &VelocityField {
        &self.gf
    }

    pub fn gb(&self) -> &ScalarField {
        &self.gb
    }

    pub fn domain(&self) -> &DomainSpec {
        self.gb.domain()
    }

    pub fn is_unforced(&self) -> bool {
        self.gf.is_zero() && self.gb.is_zero()
    }

    /// Same physics with the body force removed.
    pub fn without_forcing(&self) -> Self {
        Self {
            nu: self.nu,
            f: self.f,
            gf: VelocityField::zeros(*self.domain()),
            gb: ScalarField::zeros(*self.domain(), Parity::OddInZ),
        }
    }
}

fn w_coeffs(v: &VelocityField, out: &mut [Complex64]) {
    let table = mode_table(v.domain());
    out.fill(ZERO);
    let (a, b) = (v.v1().coeffs(), v.v2().coeffs());
    for (j, &idx) in table.idx.iter().enumerate() {
        if table.barotropic[j] {
            continue;
        }
        let [k1, k2, k3] = table.kappa[j];
        // -(i k . v) / (i k3)
        out[idx] = -(a[idx] * k1 + b[idx] * k2) / k3;
    }
}

fn check_barotropic(v: &VelocityField) -> Result<()> {
    let r = v.barotropic_residual();
    if !(r <= INPUT_TOLERANCE) {
        return Err(Error::Constraint(format!(
            "vertical mean of v is not divergence-free (residual {r:e})"
        )));
    }
    Ok(())
}

/// `w = -int_0^z div v`.
pub fn reconstruct_w(v: &VelocityField) -> Result<ScalarField> {
    check_barotropic(v)?;
    let mut div = derivative(v.v1(), Axis::X1);
    div.axpy(1.0, &derivative(v.v2(), Axis::X2));
    let mut w = vertical_integral(&vertical_fluctuation(&div))?.field;
    w.scale(-1.0);
    Ok(w)
}

/// Coriolis contribution to `v_t`, `-f v^perp = (f v2, -f v1)`.
pub fn coriolis(v: &VelocityField, f: f64) -> VelocityField {
    VelocityField::from_parts(v.v2().scaled(f), v.v1().scaled(-f))
}

/// `-grad_x int_0^z b`, including the z-independent part that the pressure
/// projection later removes.
pub fn hydrostatic_gradient(b: &ScalarField) -> VelocityField {
    assert_eq!(b.parity(), Parity::OddInZ, "buoyancy must be odd");
    let primitive = vertical_integral(b).expect("odd integrands are always admissible").field;
    let mut g1 = derivative(&primitive, Axis::X1);
    let mut g2 = derivative(&primitive, Axis::X2);
    g1.scale(-1.0);
    g2.scale(-1.0);
    VelocityField::from_parts(g1, g2)
}

/// Leray projection of the vertical mean of a velocity tendency.
pub fn pressure_project(dv: &VelocityField) -> VelocityField {
    let mut out = dv.clone();
    out.project_barotropic();
    out
}

/// Zero-mean `p` with `Laplacian p = div <dv>_z`, so that
/// `pressure_project(dv) = dv - grad p`.
pub fn pressure(dv: &VelocityField) -> ScalarField {
    let domain = *dv.domain();
    let table = mode_table(&domain);
    let mut out = vec![ZERO; domain.len()];
    let (a, b) = (dv.v1().coeffs(), dv.v2().coeffs());
    for (j, &idx) in table.idx.iter().enumerate() {
        if !table.barotropic[j] {
            continue;
        }
        let [k1, k2, _] = table.kappa[j];
        let kk = k1 * k1 + k2 * k2;
        let s = a[idx] * k1 + b[idx] * k2;
        // -i (kappa . r) / |kappa|^2
        out[idx] = Complex64::new(s.im, -s.re) / kk;
    }
    ScalarField::from_raw(domain, Parity::EvenInZ, out)
}

/// Largest grid values of `|v1|`, `|v2|` and `|w|` seen during an evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VelocityBounds {
    pub v1: f64,
    pub v2: f64,
    pub w: f64,
}

impl VelocityBounds {
    /// `dt (max|v1|/dx1 + max|v2|/dx2 + max|w|/dz)`.
    pub fn courant(&self, domain: &DomainSpec, dt: f64) -> f64 {
        dt * (self.v1 / domain.spacing(Axis::X1)
            + self.v2 / domain.spacing(Axis::X2)
            + self.w / domain.spacing(Axis::Z))
    }
}

// physical-space slots
const V1: usize = 0;
const V2: usize = 1;
const W: usize = 2;
const D1V1: usize = 3;
const D2V1: usize = 4;
const DZV1: usize = 5;
const D1V2: usize = 6;
const D2V2: usize = 7;
const DZV2: usize = 8;
const B: usize = 9;
const D1B: usize = 10;
const D2B: usize = 11;
const DZB: usize = 12;
const SLOTS: usize = 13;

/// Reusable context for pseudo-spectral evaluations on one domain. Not
/// shared between threads; give each worker its own.
pub struct RhsEvaluator {
    transform: Transform,
    scratch: Scratch,
    pack: Vec<Complex64>,
    phys: Vec<Vec<f64>>,
    coef: Vec<Vec<Complex64>>,
    out: Vec<Vec<Complex64>>,
    prod: [Vec<f64>; 4],
}

fn multiply_ik(src: &[Complex64], table_idx: &[usize], kappa: &[[f64; 3]], axis: usize, dst: &mut [Complex64]) {
    dst.fill(ZERO);
    for (j, &idx) in table_idx.iter().enumerate() {
        let k = kappa[j][axis];
        let c = src[idx];
        dst[idx] = Complex64::new(-k * c.im, k * c.re);
    }
}

impl RhsEvaluator {
    pub fn new(domain: DomainSpec) -> Self {
        let transform = Transform::new(domain);
        let scratch = transform.scratch();
        let n = domain.len();
        Self {
            transform,
            scratch,
            pack: vec![ZERO; n],
            phys: vec![vec![0.0; n]; SLOTS],
            coef: vec![vec![ZERO; n]; SLOTS],
            out: vec![vec![ZERO; n]; 12],
            prod: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        self.transform.domain()
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    /// Inverse-transforms `coef[slots]` pairwise into `phys[slots]`.
    fn load_grid(&mut self, slots: &[usize]) {
        for pair in slots.chunks(2) {
            let a = &self.coef[pair[0]];
            let b = pair.get(1).map(|&s| self.coef[s].as_slice());
            self.transform
                .inverse_pair(a, b, &mut self.pack, &mut self.scratch);
            for (x, c) in self.phys[pair[0]].iter_mut().zip(&self.pack) {
                *x = c.re;
            }
            if let Some(&s) = pair.get(1) {
                for (x, c) in self.phys[s].iter_mut().zip(&self.pack) {
                    *x = c.im;
                }
            }
        }
    }

    /// Packs two grid arrays as `a + i b` and forward-transforms them into
    /// `out[k]` and `out[k + 1]`.
    fn store_grid_pair(&mut self, a: &[f64], b: &[f64], k: usize) {
        for ((z, &x), &y) in self.pack.iter_mut().zip(a).zip(b) {
            *z = Complex64::new(x, y);
        }
        let (lo, hi) = self.out.split_at_mut(k + 1);
        self.transform
            .forward_pair(&mut self.pack, &mut lo[k], Some(&mut hi[0]), &mut self.scratch);
    }

    /// Skew-symmetric advection `1/2 [(u . grad) phi + div(u phi)]` of
    /// `phi = v1, v2, b` with `u = (v, w)`. Returns the three advection
    /// terms (un-negated) and the velocity bounds on the grid.
    fn advect(&mut self, u: &State) -> ([ScalarField; 3], VelocityBounds) {
        let domain = *self.domain();
        let table = mode_table(&domain);
        let with_b = !u.b().is_zero();
        self.coef[V1].copy_from_slice(u.v().v1().coeffs());
        self.coef[V2].copy_from_slice(u.v().v2().coeffs());
        w_coeffs(u.v(), &mut self.coef[W]);
        let derivs: &[(usize, usize, usize)] = &[
            (V1, D1V1, 0),
            (V1, D2V1, 1),
            (V1, DZV1, 2),
            (V2, D1V2, 0),
            (V2, D2V2, 1),
            (V2, DZV2, 2),
        ];
        for &(src, dst, axis) in derivs {
            let (s, d) = two_mut(&mut self.coef, src, dst);
            multiply_ik(s, &table.idx, &table.kappa, axis, d);
        }
        let slots: &[usize] = if with_b {
            self.coef[B].copy_from_slice(u.b().coeffs());
            for (dst, axis) in [(D1B, 0), (D2B, 1), (DZB, 2)] {
                let (s, d) = two_mut(&mut self.coef, B, dst);
                multiply_ik(s, &table.idx, &table.kappa, axis, d);
            }
            &[V1, V2, W, D1V1, D2V1, DZV1, D1V2, D2V2, DZV2, B, D1B, D2B, DZB]
        } else {
            &[V1, V2, W, D1V1, D2V1, DZV1, D1V2, D2V2, DZV2]
        };
        self.load_grid(slots);

        let mut bounds = VelocityBounds::default();
        for p in 0..domain.len() {
            bounds.v1 = bounds.v1.max(self.phys[V1][p].abs());
            bounds.v2 = bounds.v2.max(self.phys[V2][p].abs());
            bounds.w = bounds.w.max(self.phys[W][p].abs());
        }

        // per scalar: u.grad(phi), v1 phi, v2 phi, w phi
        let scalars: &[(usize, usize, usize, usize)] = if with_b {
            &[(V1, D1V1, D2V1, DZV1), (V2, D1V2, D2V2, DZV2), (B, D1B, D2B, DZB)]
        } else {
            &[(V1, D1V1, D2V1, DZV1), (V2, D1V2, D2V2, DZV2)]
        };
        let mut prod = std::mem::take(&mut self.prod);
        for (s, &(phi, d1, d2, dz)) in scalars.iter().enumerate() {
            {
                let ph = &self.phys;
                let [g, p1, p2, p3] = &mut prod;
                for p in 0..domain.len() {
                    let (a, b, c, f) = (ph[V1][p], ph[V2][p], ph[W][p], ph[phi][p]);
                    g[p] = a * ph[d1][p] + b * ph[d2][p] + c * ph[dz][p];
                    p1[p] = a * f;
                    p2[p] = b * f;
                    p3[p] = c * f;
                }
            }
            self.store_grid_pair(&prod[0], &prod[1], 4 * s);
            self.store_grid_pair(&prod[2], &prod[3], 4 * s + 2);
        }
        self.prod = prod;

        let parities = [Parity::EvenInZ, Parity::EvenInZ, Parity::OddInZ];
        let mut terms: [ScalarField; 3] = parities.map(|p| ScalarField::zeros(domain, p));
        for (s, term) in terms.iter_mut().enumerate().take(scalars.len()) {
            let [g, p1, p2, p3] = [0, 1, 2, 3].map(|i| &self.out[4 * s + i]);
            let dst = term.coeffs_mut();
            for (j, &idx) in table.idx.iter().enumerate() {
                let [k1, k2, k3] = table.kappa[j];
                let d = p1[idx] * k1 + p2[idx] * k2 + p3[idx] * k3;
                // g + i d
                dst[idx] = Complex64::new(g[idx].re - d.im, g[idx].im + d.re) * 0.5;
            }
            term.canonicalize();
        }
        (terms, bounds)
    }

    /// Advection terms `((u . grad) v1, (u . grad) v2, (u . grad) b)` in
    /// skew-symmetric form.
    pub fn advection(&mut self, u: &State) -> Result<Tendency> {
        check_barotropic(u.v())?;
        let ([a1, a2, ab], _) = self.advect(u);
        Ok(State::from_parts(VelocityField::from_parts(a1, a2), ab))
    }

    /// Full explicit tendency and the grid velocity bounds.
    pub fn evaluate(&mut self, u: &State, params: &PhysParams) -> Result<(Tendency, VelocityBounds)> {
        check_barotropic(u.v())?;
        let ([mut d1, mut d2, mut db], bounds) = self.advect(u);
        d1.scale(-1.0);
        d2.scale(-1.0);
        db.scale(-1.0);
        if params.f != 0.0 {
            d1.axpy(params.f, u.v().v2());
            d2.axpy(-params.f, u.v().v1());
        }
        if !u.b().is_zero() {
            let h = hydrostatic_gradient(u.b());
            d1.axpy(1.0, h.v1());
            d2.axpy(1.0, h.v2());
        }
        d1.axpy(1.0, params.gf.v1());
        d2.axpy(1.0, params.gf.v2());
        db.axpy(1.0, &params.gb);
        let mut dv = VelocityField::from_parts(d1, d2);
        dv.canonicalize();
        db.canonicalize();
        Ok((State::from_parts(dv, db), bounds))
    }

    pub fn rhs(&mut self, u: &State, params: &PhysParams) -> Result<Tendency> {
        Ok(self.evaluate(u, params)?.0)
    }
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&hi[0], &mut lo[b])
    }
}

/// One-off advection with a fresh evaluator.
pub fn advection(u: &State) -> Result<Tendency> {
    RhsEvaluator::new(*u.domain()).advection(u)
}

/// One-off right-hand side with a fresh evaluator.
pub fn rhs(u: &State, params: &PhysParams) -> Result<Tendency> {
    RhsEvaluator::new(*u.domain()).rhs(u, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn domain() -> DomainSpec {
        DomainSpec::new([2.0 * PI, 3.0, 2.0], [16, 12, 12]).unwrap()
    }

    fn even(d: DomainSpec, k: [i64; 3], ph: Phase, a: f64) -> ScalarField {
        ScalarField::mode(d, Parity::EvenInZ, k, ph, a).unwrap()
    }

    fn odd(d: DomainSpec, k: [i64; 3], ph: Phase, a: f64) -> ScalarField {
        ScalarField::mode(d, Parity::OddInZ, k, ph, a).unwrap()
    }

    fn diff_norm(a: &ScalarField, b: &ScalarField) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        d.norm_l2()
    }

    #[test]
    fn w_of_tilted_shear() {
        // v = (sin(2 pi x1 / L1) cos(2 pi z / L3), 0)
        let d = domain();
        let [l1, _, l3] = d.lengths();
        let v = VelocityField::new(
            even(d, [1, 0, 1], Phase::Sin, 1.0),
            ScalarField::zeros(d, Parity::EvenInZ),
        )
        .unwrap();
        let w = reconstruct_w(&v).unwrap();
        let want = odd(d, [1, 0, 1], Phase::Cos, -(2.0 * PI / l1) * (l3 / (2.0 * PI)));
        assert!(diff_norm(&w, &want) < 1e-14);
        assert_eq!(w.coeffs(), {
            let mut c = vec![ZERO; d.len()];
            w_coeffs(&v, &mut c);
            c
        });
    }

    #[test]
    fn w_vanishes_for_z_independent_flow() {
        let d = domain();
        let [l1, l2, _] = d.lengths();
        // solenoidal: (k2/L2, -k1/L1) direction
        let v = VelocityField::new(
            even(d, [1, 1, 0], Phase::Cos, 1.0 / l2),
            even(d, [1, 1, 0], Phase::Cos, -1.0 / l1),
        )
        .unwrap();
        assert!(reconstruct_w(&v).unwrap().is_zero());
    }

    #[test]
    fn w_rejects_divergent_mean() {
        let d = domain();
        let v = VelocityField::from_parts(
            even(d, [1, 0, 0], Phase::Cos, 1.0),
            ScalarField::zeros(d, Parity::EvenInZ),
        );
        assert!(matches!(reconstruct_w(&v), Err(Error::Constraint(_))));
    }

    #[test]
    fn hydrostatic_gradient_of_tilted_buoyancy() {
        let d = domain();
        let [l1, _, l3] = d.lengths();
        let b = odd(d, [1, 0, 1], Phase::Sin, 1.0);
        let h = hydrostatic_gradient(&b);
        // -d/dx1 of (L3/2pi) sin(k x1)(1 - cos(kz z))
        let c = -(l3 / (2.0 * PI)) * (2.0 * PI / l1);
        let mut want = even(d, [1, 0, 0], Phase::Cos, c);
        want.axpy(1.0, &even(d, [1, 0, 1], Phase::Cos, -c));
        assert!(diff_norm(h.v1(), &want) < 1e-14);
        assert!(h.v2().is_zero());
        let flat = odd(d, [0, 0, 2], Phase::Cos, 1.0);
        assert!(hydrostatic_gradient(&flat).is_zero());
    }

    #[test]
    fn pressure_projection_kernel_and_range() {
        let d = domain();
        let [l1, _, _] = d.lengths();
        // gradient of cos(2 pi x1 / L1): (-(2pi/L1) sin, 0)
        let grad = VelocityField::from_parts(
            even(d, [1, 0, 0], Phase::Sin, -2.0 * PI / l1),
            ScalarField::zeros(d, Parity::EvenInZ),
        );
        let p = pressure_project(&grad);
        assert!(p.v1().norm_l2() < 1e-15 && p.v2().norm_l2() < 1e-15);
        let q = pressure(&grad);
        assert!(diff_norm(&q, &even(d, [1, 0, 0], Phase::Cos, 1.0)) < 1e-14);

        let sol = VelocityField::from_parts(
            ScalarField::zeros(d, Parity::EvenInZ),
            even(d, [1, 0, 0], Phase::Cos, 1.0),
        );
        assert_eq!(pressure_project(&sol), sol);
    }

    #[test]
    fn coriolis_is_orthogonal() {
        let d = domain();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = State::random(d, &mut rng, 0.5);
        let c = coriolis(u.v(), 1.3);
        assert!(c.inner(u.v()).abs() < 1e-12 * u.v().norm_l2_sq());
        assert!(coriolis(u.v(), 0.0).is_zero());
        let v = VelocityField::from_parts(
            even(d, [0, 0, 1], Phase::Cos, 1.0),
            ScalarField::zeros(d, Parity::EvenInZ),
        );
        let c = coriolis(&v, 1.0);
        assert!(c.v1().is_zero());
        assert_eq!(c.v2(), &even(d, [0, 0, 1], Phase::Cos, -1.0));
    }

    #[test]
    fn advection_vanishes_for_vertical_shear() {
        let d = domain();
        let v = VelocityField::new(
            even(d, [0, 0, 1], Phase::Cos, 1.0),
            even(d, [0, 0, 2], Phase::Cos, -0.5),
        )
        .unwrap();
        let u = State::new(v, ScalarField::zeros(d, Parity::OddInZ)).unwrap();
        let a = advection(&u).unwrap();
        assert!(a.norm_l2() < 1e-14);
    }

    #[test]
    fn advection_matches_direct_grid_evaluation() {
        // (u . grad) phi evaluated pointwise from analytic fields and projected
        let d = DomainSpec::cube(2.0 * PI, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = State::random(d, &mut rng, 1.0);
        let t = Transform::new(d);
        let w = reconstruct_w(u.v()).unwrap();
        let (uv1, uv2, uw) = (t.to_physical(u.v().v1()), t.to_physical(u.v().v2()), t.to_physical(&w));
        let adv = advection(&u).unwrap();
        for (phi, got) in u.components().iter().zip(adv.components()) {
            let g = [Axis::X1, Axis::X2, Axis::Z].map(|a| t.to_physical(&derivative(phi, a)));
            let vals: Vec<f64> = (0..d.len())
                .map(|p| uv1[p] * g[0][p] + uv2[p] * g[1][p] + uw[p] * g[2][p])
                .collect();
            let want = t.from_physical(&vals, phi.parity()).unwrap();
            assert!(diff_norm(got, &want) < 1e-11 * want.norm_l2().max(1.0));
        }
    }

    #[test]
    fn advection_is_skew() {
        let d = domain();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = State::random(d, &mut rng, 0.5);
        let a = advection(&u).unwrap();
        let s = u.norm_l2();
        assert!(a.inner(&u).abs() <= 1e-9 * s * s * s);
    }

    #[test]
    fn energy_flux_reduces_to_buoyancy_work() {
        let d = domain();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = State::random(d, &mut rng, 0.5);
        let params = PhysParams::unforced(d, 1.0, 0.7).unwrap();
        let r = rhs(&u, &params).unwrap();
        let w = reconstruct_w(u.v()).unwrap();
        let s = u.norm_l2();
        let flux = r.inner(&u) - u.b().inner(&w);
        assert!(flux.abs() <= 1e-9 * s * s * s.max(1.0));
        let v_only = u.without_buoyancy();
        let r = rhs(&v_only, &params).unwrap();
        assert!(r.inner(&v_only).abs() <= 1e-9 * s * s * s.max(1.0));
    }

    #[test]
    fn rhs_special_states() {
        let d = domain();
        let params = PhysParams::unforced(d, 1.0, 2.0).unwrap();
        assert!(rhs(&State::zeros(d), &params).unwrap().is_zero());

        let b_only = State::new(VelocityField::zeros(d), odd(d, [0, 0, 1], Phase::Cos, 1.0)).unwrap();
        assert!(rhs(&b_only, &params).unwrap().norm_l2() < 1e-15);

        let v = VelocityField::new(
            even(d, [0, 0, 1], Phase::Cos, 0.8),
            ScalarField::zeros(d, Parity::EvenInZ),
        )
        .unwrap();
        let u = State::new(v, ScalarField::zeros(d, Parity::OddInZ)).unwrap();
        let r = rhs(&u, &params).unwrap();
        assert!(r.v().v1().norm_l2() < 1e-15);
        assert!(diff_norm(r.v().v2(), &even(d, [0, 0, 1], Phase::Cos, -1.6)) < 1e-15);
        assert!(r.b().is_zero());
    }

    #[test]
    fn rhs_output_is_admissible() {
        let d = domain();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let u = State::random(d, &mut rng, 0.0);
        let params = PhysParams::from_entries(
            d,
            1.0,
            1.0,
            &[
                ForcingEntry {
                    wavevector: [0, 0, 1],
                    phase: Phase::Cos,
                    component: ForcingComponent::V1,
                    amplitude: 2.0,
                },
                ForcingEntry {
                    wavevector: [1, 0, 1],
                    phase: Phase::Sin,
                    component: ForcingComponent::B,
                    amplitude: 1.0,
                },
            ],
        )
        .unwrap();
        let r = rhs(&u, &params).unwrap();
        assert!(r.constraint_residual() < 1e-12);
        assert_eq!(r, rhs(&u, &params).unwrap());
    }

    #[test]
    fn forcing_validation() {
        let d = domain();
        let bad = [ForcingEntry {
            wavevector: [1, 0, 0],
            phase: Phase::Cos,
            component: ForcingComponent::V1,
            amplitude: 1.0,
        }];
        assert!(PhysParams::from_entries(d, 1.0, 1.0, &bad).is_err());
        let odd_flat = [ForcingEntry {
            wavevector: [1, 0, 0],
            phase: Phase::Cos,
            component: ForcingComponent::B,
            amplitude: 1.0,
        }];
        assert!(PhysParams::from_entries(d, 1.0, 1.0, &odd_flat).is_err());
        assert!(PhysParams::unforced(d, 0.0, 1.0).is_err());
        assert!(PhysParams::unforced(d, f64::NAN, 1.0).is_err());
    }
}
