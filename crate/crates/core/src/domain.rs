//! Periodic box geometry and wavenumber bookkeeping.
//!
//! The box is `(0, L1) x (0, L2) x (-L3/2, L3/2)`. Collocation points along
//! each axis are `x_j = j L / n`; on the z-axis the points are read modulo
//! `L3`, so the grid contains `z = 0` and is symmetric about it.
//!
//! Coefficients are stored in FFT order: storage index `i` on an axis of
//! size `n` carries mode number `i` for `i < n/2` and `i - n` otherwise.
//! Only modes with `|k| <= (n - 1) / 3` on every axis are ever populated
//! (the 2/3 rule), which makes quadratic products exact on the grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X1,
    X2,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainSpec {
    lengths: [f64; 3],
    sizes: [usize; 3],
}

impl DomainSpec {
    pub fn new(lengths: [f64; 3], sizes: [usize; 3]) -> Result<Self> {
        for (axis, &l) in lengths.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Domain(format!(
                    "length L{} = {l} must be a positive finite number",
                    axis + 1
                )));
            }
        }
        for (axis, &n) in sizes.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::Domain(format!(
                    "grid size n{} = {n} must be even and at least 4",
                    axis + 1
                )));
            }
        }
        Ok(Self { lengths, sizes })
    }

    /// Cubic box of edge `length` with `n` points per axis.
    pub fn cube(length: f64, n: usize) -> Result<Self> {
        Self::new([length; 3], [n; 3])
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    /// Number of collocation points (and stored coefficients) per field.
    pub fn len(&self) -> usize {
        self.sizes[0] * self.sizes[1] * self.sizes[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        self.lengths[0] * self.lengths[1] * self.lengths[2]
    }

    /// Largest retained mode number on `axis` (2/3 rule).
    pub fn cutoff(&self, axis: Axis) -> i64 {
        ((self.sizes[axis.index()] - 1) / 3) as i64
    }

    pub fn mode_number(&self, axis: Axis, storage: usize) -> i64 {
        let n = self.sizes[axis.index()];
        if storage < n / 2 {
            storage as i64
        } else {
            storage as i64 - n as i64
        }
    }

    pub fn storage_index(&self, axis: Axis, k: i64) -> usize {
        let n = self.sizes[axis.index()] as i64;
        k.rem_euclid(n) as usize
    }

    pub fn kappa(&self, axis: Axis, k: i64) -> f64 {
        2.0 * PI * k as f64 / self.lengths[axis.index()]
    }

    /// Angular wavenumbers per storage index along `axis`.
    pub fn kappas(&self, axis: Axis) -> Vec<f64> {
        (0..self.sizes[axis.index()])
            .map(|i| self.kappa(axis, self.mode_number(axis, i)))
            .collect()
    }

    #[inline]
    pub fn flat(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.sizes[1] + i2) * self.sizes[2] + i3
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> [usize; 3] {
        let n2 = self.sizes[1];
        let n3 = self.sizes[2];
        [idx / (n2 * n3), (idx / n3) % n2, idx % n3]
    }

    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let [i1, i2, i3] = self.unflat(idx);
        [
            self.mode_number(Axis::X1, i1),
            self.mode_number(Axis::X2, i2),
            self.mode_number(Axis::Z, i3),
        ]
    }

    pub fn index_of(&self, k: [i64; 3]) -> usize {
        self.flat(
            self.storage_index(Axis::X1, k[0]),
            self.storage_index(Axis::X2, k[1]),
            self.storage_index(Axis::Z, k[2]),
        )
    }

    /// Whether `k` lies inside the dealiased truncation box.
    pub fn in_truncation(&self, k: [i64; 3]) -> bool {
        Axis::ALL
            .iter()
            .all(|&a| k[a.index()].abs() <= self.cutoff(a))
    }

    /// `kappa1^2 + kappa2^2 + kappa3^2`, the eigenvalue of `-Laplacian` for `k`.
    pub fn lambda(&self, k: [i64; 3]) -> f64 {
        let k1 = self.kappa(Axis::X1, k[0]);
        let k2 = self.kappa(Axis::X2, k[1]);
        let k3 = self.kappa(Axis::Z, k[2]);
        k1 * k1 + k2 * k2 + k3 * k3
    }

    /// Flat index of `-k`.
    #[inline]
    pub fn negated(&self, idx: usize) -> usize {
        let [i1, i2, i3] = self.unflat(idx);
        let [n1, n2, n3] = self.sizes;
        self.flat((n1 - i1) % n1, (n2 - i2) % n2, (n3 - i3) % n3)
    }

    /// Flat index of `(k1, k2, -k3)`.
    #[inline]
    pub fn z_reflected(&self, idx: usize) -> usize {
        let [i1, i2, i3] = self.unflat(idx);
        let n3 = self.sizes[2];
        self.flat(i1, i2, (n3 - i3) % n3)
    }

    /// Collocation coordinate of point `j` along `axis`; z values are
    /// reported in `[-L3/2, L3/2)`.
    pub fn grid_point(&self, axis: Axis, j: usize) -> f64 {
        let a = axis.index();
        let x = j as f64 * self.lengths[a] / self.sizes[a] as f64;
        match axis {
            Axis::Z if j >= self.sizes[2] / 2 => x - self.lengths[2],
            _ => x,
        }
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        self.lengths[axis.index()] / self.sizes[axis.index()] as f64
    }

    /// Storage indices along `axis` inside the truncation, in ascending order.
    pub fn retained_storage(&self, axis: Axis) -> Vec<usize> {
        let n = self.sizes[axis.index()];
        let k = self.cutoff(axis) as usize;
        (0..=k).chain(n - k..n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(DomainSpec::new([1.0; 3], [16, 15, 16]).is_err());
        assert!(DomainSpec::new([1.0; 3], [2, 16, 16]).is_err());
        assert!(DomainSpec::new([1.0, -1.0, 1.0], [16; 3]).is_err());
        assert!(DomainSpec::new([1.0; 3], [4, 6, 8]).is_ok());
    }

    #[test]
    fn storage_roundtrip() {
        let d = DomainSpec::new([1.0, 2.0, 3.0], [8, 12, 16]).unwrap();
        for idx in 0..d.len() {
            assert_eq!(d.index_of(d.wavevector(idx)), idx);
            let k = d.wavevector(idx);
            assert_eq!(d.negated(idx), d.index_of([-k[0], -k[1], -k[2]]));
            assert_eq!(d.z_reflected(idx), d.index_of([k[0], k[1], -k[2]]));
        }
    }

    #[test]
    fn cutoff_follows_two_thirds_rule() {
        let d = DomainSpec::cube(1.0, 16).unwrap();
        assert_eq!(d.cutoff(Axis::X1), 5);
        let d = DomainSpec::cube(1.0, 12).unwrap();
        assert_eq!(d.cutoff(Axis::Z), 3);
        assert_eq!(d.retained_storage(Axis::Z), vec![0, 1, 2, 3, 9, 10, 11]);
    }

    #[test]
    fn z_grid_is_symmetric() {
        let d = DomainSpec::cube(2.0, 8).unwrap();
        let zs: Vec<f64> = (0..8).map(|j| d.grid_point(Axis::Z, j)).collect();
        for &z in &zs {
            assert!(zs.iter().any(|&w| (w + z).rem_euclid(2.0) < 1e-15));
        }
        assert_eq!(zs[0], 0.0);
    }
}
