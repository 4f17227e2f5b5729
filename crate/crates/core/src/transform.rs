//! Discrete Fourier transform between coefficients and collocation values.
//!
//! Two real fields are moved through one complex transform (`a + i b`), and
//! the 3D passes skip lanes that are identically zero because of the
//! truncation. Physical arrays are row-major over `(x1, x2, z)`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::domain::{Axis, DomainSpec};
use crate::error::{Error, Result};
use crate::field::{mode_table, Parity, ScalarField, State, VelocityField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub struct Transform {
    domain: DomainSpec,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    retained1: Vec<usize>,
    /// Contiguous runs `(start, len)` of retained storage indices along x2.
    runs2: Vec<(usize, usize)>,
    scratch_len: usize,
}

/// Reusable work buffers for one evaluation context.
#[derive(Default)]
pub struct Scratch {
    tmp: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl Transform {
    pub fn new(domain: DomainSpec) -> Self {
        let mut planner = FftPlanner::new();
        let forward = domain.sizes().map(|n| planner.plan_fft_forward(n));
        let inverse = domain.sizes().map(|n| planner.plan_fft_inverse(n));
        let scratch_len = forward
            .iter()
            .chain(inverse.iter())
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let n2 = domain.sizes()[1];
        let k2 = domain.cutoff(Axis::X2) as usize;
        Self {
            domain,
            forward,
            inverse,
            retained1: domain.retained_storage(Axis::X1),
            runs2: vec![(0, k2 + 1), (n2 - k2, k2)],
            scratch_len,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            tmp: vec![ZERO; self.domain.len()],
            fft: vec![ZERO; self.scratch_len],
        }
    }

    fn ensure(&self, s: &mut Scratch) {
        if s.tmp.len() != self.domain.len() {
            s.tmp = vec![ZERO; self.domain.len()];
        }
        if s.fft.len() < self.scratch_len {
            s.fft = vec![ZERO; self.scratch_len];
        }
    }

    fn z_pass(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, fft: &mut [Complex64]) {
        let [_, n2, n3] = self.domain.sizes();
        for &i1 in &self.retained1 {
            for &(start, len) in &self.runs2 {
                if len == 0 {
                    continue;
                }
                let off = (i1 * n2 + start) * n3;
                plan.process_with_scratch(&mut buf[off..off + len * n3], fft);
            }
        }
    }

    fn x2_pass(
        &self,
        buf: &mut [Complex64],
        plan: &Arc<dyn Fft<f64>>,
        tmp: &mut [Complex64],
        fft: &mut [Complex64],
    ) {
        let [_, n2, n3] = self.domain.sizes();
        let plane = n2 * n3;
        let tmp = &mut tmp[..plane];
        for &i1 in &self.retained1 {
            let p = &mut buf[i1 * plane..(i1 + 1) * plane];
            for i2 in 0..n2 {
                for i3 in 0..n3 {
                    tmp[i3 * n2 + i2] = p[i2 * n3 + i3];
                }
            }
            plan.process_with_scratch(tmp, fft);
            for i2 in 0..n2 {
                for i3 in 0..n3 {
                    p[i2 * n3 + i3] = tmp[i3 * n2 + i2];
                }
            }
        }
    }

    fn x1_pass(
        &self,
        buf: &mut [Complex64],
        plan: &Arc<dyn Fft<f64>>,
        tmp: &mut [Complex64],
        fft: &mut [Complex64],
    ) {
        let n1 = self.domain.sizes()[0];
        let m = self.domain.len() / n1;
        for i1 in 0..n1 {
            let row = &buf[i1 * m..(i1 + 1) * m];
            for (j, &c) in row.iter().enumerate() {
                tmp[j * n1 + i1] = c;
            }
        }
        plan.process_with_scratch(tmp, fft);
        for i1 in 0..n1 {
            let row = &mut buf[i1 * m..(i1 + 1) * m];
            for (j, c) in row.iter_mut().enumerate() {
                *c = tmp[j * n1 + i1];
            }
        }
    }

    /// In place: coefficients (zero outside the truncation) to point values.
    pub fn inverse_in_place(&self, buf: &mut [Complex64], s: &mut Scratch) {
        self.ensure(s);
        self.z_pass(buf, &self.inverse[2], &mut s.fft);
        self.x2_pass(buf, &self.inverse[1], &mut s.tmp, &mut s.fft);
        self.x1_pass(buf, &self.inverse[0], &mut s.tmp, &mut s.fft);
    }

    /// In place: point values to unnormalized spectra. Only entries inside the
    /// truncation are meaningful afterwards.
    pub fn forward_in_place(&self, buf: &mut [Complex64], s: &mut Scratch) {
        self.ensure(s);
        self.x1_pass(buf, &self.forward[0], &mut s.tmp, &mut s.fft);
        self.x2_pass(buf, &self.forward[1], &mut s.tmp, &mut s.fft);
        self.z_pass(buf, &self.forward[2], &mut s.fft);
    }

    /// Writes `a(x) + i b(x)` on the grid into `out`.
    pub fn inverse_pair(
        &self,
        a: &[Complex64],
        b: Option<&[Complex64]>,
        out: &mut [Complex64],
        s: &mut Scratch,
    ) {
        let table = mode_table(&self.domain);
        out.fill(ZERO);
        match b {
            Some(b) => {
                for &idx in &table.idx {
                    let (x, y) = (a[idx], b[idx]);
                    out[idx] = Complex64::new(x.re - y.im, x.im + y.re);
                }
            }
            None => {
                for &idx in &table.idx {
                    out[idx] = a[idx];
                }
            }
        }
        self.inverse_in_place(out, s);
    }

    /// Transforms `buf = a(x) + i b(x)` and writes the normalized retained
    /// coefficients of `a` and `b` into `a_out` and `b_out`. Entries outside
    /// the truncation (and `k = 0`) are not touched, so outputs that start
    /// zeroed stay admissible.
    pub fn forward_pair(
        &self,
        buf: &mut [Complex64],
        a_out: &mut [Complex64],
        b_out: Option<&mut [Complex64]>,
        s: &mut Scratch,
    ) {
        self.forward_in_place(buf, s);
        let table = mode_table(&self.domain);
        let norm = 1.0 / self.domain.len() as f64;
        match b_out {
            Some(b_out) => {
                for (j, &idx) in table.idx.iter().enumerate() {
                    let z = buf[idx];
                    let zc = buf[table.neg[j]].conj();
                    a_out[idx] = (z + zc) * (0.5 * norm);
                    // (z - zc) / (2i)
                    let d = z - zc;
                    b_out[idx] = Complex64::new(d.im, -d.re) * (0.5 * norm);
                }
            }
            None => {
                for (j, &idx) in table.idx.iter().enumerate() {
                    let z = buf[idx];
                    let zc = buf[table.neg[j]].conj();
                    a_out[idx] = (z + zc) * (0.5 * norm);
                }
            }
        }
    }

    /// Point values of a field on the collocation grid.
    pub fn to_physical(&self, field: &ScalarField) -> Vec<f64> {
        assert_eq!(field.domain(), &self.domain, "field and transform domains differ");
        let mut s = self.scratch();
        let mut buf = vec![ZERO; self.domain.len()];
        self.inverse_pair(field.coeffs(), None, &mut buf, &mut s);
        buf.iter().map(|c| c.re).collect()
    }

    /// Projects grid values onto the constrained coefficient space of the
    /// given parity.
    pub fn from_physical(&self, samples: &[f64], parity: Parity) -> Result<ScalarField> {
        if samples.len() != self.domain.len() {
            return Err(Error::Dimension {
                expected: self.domain.len(),
                actual: samples.len(),
            });
        }
        let mut s = self.scratch();
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut out = vec![ZERO; self.domain.len()];
        self.forward_pair(&mut buf, &mut out, None, &mut s);
        let mut f = ScalarField::from_raw(self.domain, parity, out);
        f.canonicalize();
        Ok(f)
    }

    /// `(integral |f|^6)^(1/6)` by collocation quadrature.
    pub fn norm_l6(&self, field: &ScalarField) -> f64 {
        let dv = self.domain.volume() / self.domain.len() as f64;
        let p = self.to_physical(field);
        (p.iter().map(|x| x.powi(6)).sum::<f64>() * dv).powf(1.0 / 6.0)
    }

    /// `(integral |v|^6)^(1/6)` for a horizontal vector field.
    pub fn norm_l6_velocity(&self, v: &VelocityField) -> f64 {
        self.norm_l6_pair(v.v1(), v.v2())
    }

    /// `(integral (a^2 + b^2)^3)^(1/6)` for two fields of any parity.
    pub fn norm_l6_pair(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        let dv = self.domain.volume() / self.domain.len() as f64;
        let a = self.to_physical(a);
        let b = self.to_physical(b);
        let s: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x * x + y * y).powi(3))
            .sum();
        (s * dv).powf(1.0 / 6.0)
    }

    /// L6 norm of the state, `(||v||_{L6}^2 + ||b||_{L6}^2)^(1/2)`.
    pub fn norm_l6_state(&self, u: &State) -> f64 {
        self.norm_l6_velocity(u.v()).hypot(self.norm_l6(u.b()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Phase;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn domain() -> DomainSpec {
        DomainSpec::new([2.0 * PI, 3.0, 5.0], [16, 12, 16]).unwrap()
    }

    #[test]
    fn zero_field_has_zero_samples() {
        let d = domain();
        let t = Transform::new(d);
        let p = t.to_physical(&ScalarField::zeros(d, Parity::EvenInZ));
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cosine_in_z_matches_pointwise_evaluation() {
        let d = domain();
        let t = Transform::new(d);
        let f = ScalarField::mode(d, Parity::EvenInZ, [0, 0, 1], Phase::Cos, 1.0).unwrap();
        let p = t.to_physical(&f);
        let l3 = d.lengths()[2];
        let [n1, n2, n3] = d.sizes();
        let mut err: f64 = 0.0;
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                for i3 in 0..n3 {
                    let z = d.grid_point(Axis::Z, i3);
                    let exact = (2.0 * PI * z / l3).cos();
                    err = err.max((p[d.flat(i1, i2, i3)] - exact).abs());
                }
            }
        }
        assert!(err <= 1e-12, "max error {err}");
    }

    #[test]
    fn oblique_mode_matches_pointwise_evaluation() {
        let d = domain();
        let t = Transform::new(d);
        let k = [2, -1, 3];
        let f = ScalarField::mode(d, Parity::OddInZ, k, Phase::Sin, 0.7).unwrap();
        let p = t.to_physical(&f);
        let [l1, l2, l3] = d.lengths();
        let [n1, n2, n3] = d.sizes();
        let mut err: f64 = 0.0;
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                for i3 in 0..n3 {
                    let x1 = d.grid_point(Axis::X1, i1);
                    let x2 = d.grid_point(Axis::X2, i2);
                    let z = d.grid_point(Axis::Z, i3);
                    let th = 2.0 * PI * (k[0] as f64 * x1 / l1 + k[1] as f64 * x2 / l2);
                    let exact = 0.7 * th.sin() * (2.0 * PI * k[2] as f64 * z / l3).sin();
                    err = err.max((p[d.flat(i1, i2, i3)] - exact).abs());
                }
            }
        }
        assert!(err <= 1e-12, "max error {err}");
    }

    #[test]
    fn roundtrip_random_fields() {
        let d = domain();
        let t = Transform::new(d);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = State::random(d, &mut rng, 0.5);
        for f in u.components() {
            let back = t.from_physical(&t.to_physical(f), f.parity()).unwrap();
            let mut diff = back.clone();
            diff.axpy(-1.0, f);
            let rel = diff.norm_l2() / f.norm_l2();
            assert!(rel <= 1e-12, "roundtrip relative error {rel}");
        }
    }

    #[test]
    fn packed_pair_separates_cleanly() {
        let d = domain();
        let t = Transform::new(d);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = State::random(d, &mut rng, 0.0);
        let mut s = t.scratch();
        let mut buf = vec![ZERO; d.len()];
        t.inverse_pair(u.v().v1().coeffs(), Some(u.b().coeffs()), &mut buf, &mut s);
        let pa = t.to_physical(u.v().v1());
        let pb = t.to_physical(u.b());
        for ((c, a), b) in buf.iter().zip(&pa).zip(&pb) {
            assert!((c.re - a).abs() < 1e-12 && (c.im - b).abs() < 1e-12);
        }
        let mut a_out = vec![ZERO; d.len()];
        let mut b_out = vec![ZERO; d.len()];
        t.forward_pair(&mut buf, &mut a_out, Some(&mut b_out), &mut s);
        for (x, y) in a_out.iter().zip(u.v().v1().coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
        for (x, y) in b_out.iter().zip(u.b().coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval_matches_quadrature() {
        let d = domain();
        let t = Transform::new(d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = State::random(d, &mut rng, 0.25);
        let dv = d.volume() / d.len() as f64;
        for f in u.components() {
            let quad: f64 = t.to_physical(f).iter().map(|x| x * x).sum::<f64>() * dv;
            let spec = f.norm_l2_sq();
            assert!((quad - spec).abs() <= 1e-10 * spec);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = domain();
        let t = Transform::new(d);
        assert!(matches!(
            t.from_physical(&[0.0; 5], Parity::EvenInZ),
            Err(Error::Dimension { .. })
        ));
    }
}
