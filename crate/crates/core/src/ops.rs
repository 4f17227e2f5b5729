//! Coefficient-space differential and integral operators.

use num_complex::Complex64;

use crate::domain::{Axis, DomainSpec};
use crate::error::{Error, Result};
use crate::field::{mode_table, Parity, ScalarField, VelocityField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `d/d(axis)`: multiplies by `i kappa_axis`. The z-derivative flips parity.
pub fn derivative(field: &ScalarField, axis: Axis) -> ScalarField {
    let domain = *field.domain();
    let table = mode_table(&domain);
    let a = axis.index();
    let mut out = vec![ZERO; domain.len()];
    let src = field.coeffs();
    for (j, &idx) in table.idx.iter().enumerate() {
        let k = table.kappa[j][a];
        let c = src[idx];
        out[idx] = Complex64::new(-k * c.im, k * c.re);
    }
    let parity = match axis {
        Axis::Z => field.parity().flipped(),
        _ => field.parity(),
    };
    ScalarField::from_raw(domain, parity, out)
}

/// `Laplacian_{x,z} f`, i.e. `-lambda_k c_k` coefficientwise.
pub fn laplacian(field: &ScalarField) -> ScalarField {
    let domain = *field.domain();
    let table = mode_table(&domain);
    let mut out = vec![ZERO; domain.len()];
    for (j, &idx) in table.idx.iter().enumerate() {
        out[idx] = field.coeffs()[idx] * (-table.lambda[j]);
    }
    ScalarField::from_raw(domain, field.parity(), out)
}

/// Horizontal divergence `d1 v1 + d2 v2` (even in z).
pub fn divergence(v: &VelocityField) -> ScalarField {
    let mut d = derivative(v.v1(), Axis::X1);
    d.axpy(1.0, &derivative(v.v2(), Axis::X2));
    d
}

fn keep_layer(field: &ScalarField, keep_barotropic: bool) -> ScalarField {
    let domain = *field.domain();
    let table = mode_table(&domain);
    let mut out = vec![ZERO; domain.len()];
    for (j, &idx) in table.idx.iter().enumerate() {
        if table.barotropic[j] == keep_barotropic {
            out[idx] = field.coeffs()[idx];
        }
    }
    ScalarField::from_raw(domain, field.parity(), out)
}

/// `<f>_z`, the vertical average, as a z-independent even field. Odd fields
/// average to zero.
pub fn vertical_average(field: &ScalarField) -> ScalarField {
    match field.parity() {
        Parity::EvenInZ => keep_layer(field, true),
        Parity::OddInZ => ScalarField::zeros(*field.domain(), Parity::EvenInZ),
    }
}

/// `f - <f>_z`: keeps exactly the `k3 != 0` coefficients.
pub fn vertical_fluctuation(field: &ScalarField) -> ScalarField {
    keep_layer(field, false)
}

/// `(v_bar, v_tilde)` for a horizontal velocity.
pub fn split_velocity(v: &VelocityField) -> (VelocityField, VelocityField) {
    let bar = VelocityField::from_parts(vertical_average(v.v1()), vertical_average(v.v2()));
    let tilde = VelocityField::from_parts(vertical_fluctuation(v.v1()), vertical_fluctuation(v.v2()));
    (bar, tilde)
}

/// Antiderivative `F(z) = int_0^z f dxi`, split as `field + mean_offset`
/// where `field` satisfies every field constraint (zero mean included) and
/// `mean_offset` is the spatial mean of `F` that had to be removed.
#[derive(Clone, Debug, PartialEq)]
pub struct VerticalPrimitive {
    pub field: ScalarField,
    pub mean_offset: f64,
}

/// `int_0^z f dxi`. Even input must have no `k3 = 0` part, otherwise the
/// primitive is not periodic.
pub fn vertical_integral(field: &ScalarField) -> Result<VerticalPrimitive> {
    let domain = *field.domain();
    let table = mode_table(&domain);
    let src = field.coeffs();
    let scale = src.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut out = vec![ZERO; domain.len()];
    match field.parity() {
        Parity::EvenInZ => {
            let mut bad: f64 = 0.0;
            for (j, &idx) in table.idx.iter().enumerate() {
                if table.barotropic[j] {
                    bad = bad.max(src[idx].norm());
                    continue;
                }
                out[idx] = divide_by_i(src[idx], table.kappa[j][2]);
            }
            if bad > 1e-12 * scale.max(f64::MIN_POSITIVE) && bad > 0.0 {
                return Err(Error::Constraint(format!(
                    "even integrand has a z-independent component of size {bad:e}; its primitive is not periodic"
                )));
            }
            Ok(VerticalPrimitive {
                field: ScalarField::from_raw(domain, Parity::OddInZ, out),
                mean_offset: 0.0,
            })
        }
        Parity::OddInZ => {
            let mut mean_offset = 0.0;
            for (j, &idx) in table.idx.iter().enumerate() {
                if table.barotropic[j] {
                    continue;
                }
                let c = divide_by_i(src[idx], table.kappa[j][2]);
                out[idx] = c;
                // value at z = 0 must vanish: subtract sum over k3 at fixed (k1, k2)
                let k = domain.wavevector(idx);
                let base = domain.index_of([k[0], k[1], 0]);
                if base == 0 {
                    mean_offset -= c.re;
                } else {
                    out[base] -= c;
                }
            }
            Ok(VerticalPrimitive {
                field: ScalarField::from_raw(domain, Parity::EvenInZ, out),
                mean_offset,
            })
        }
    }
}

#[inline]
fn divide_by_i(c: Complex64, k: f64) -> Complex64 {
    // c / (i k)
    Complex64::new(c.im / k, -c.re / k)
}

/// Pointwise value at `z = 0` summed over coefficients, per horizontal
/// wavevector: `max_{k1,k2} |sum_{k3} c(k1, k2, k3)|`. The `+k3` and `-k3`
/// terms are added first, so an exactly odd field gives exactly zero.
pub fn max_trace_at_z0(field: &ScalarField) -> f64 {
    let domain: DomainSpec = *field.domain();
    let [n1, n2, n3] = domain.sizes();
    let c = field.coeffs();
    let mut worst: f64 = 0.0;
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let at = |i3: usize| c[domain.flat(i1, i2, i3)];
            let mut s = at(0);
            for i3 in 1..n3.div_ceil(2) {
                s += at(i3) + at(n3 - i3);
            }
            if n3 % 2 == 0 {
                s += at(n3 / 2);
            }
            worst = worst.max(s.norm());
        }
    }
    worst
}
