//! Periodic box discretization, field storage and spectral calculus.
//!
//! The box for axis `i` is `[-L_i/2, L_i/2)` sampled at `n_i` uniform points,
//! stored row-major (last axis fastest). Spectra use the unnormalized forward
//! DFT; the inverse transform carries the `1/n` factor.
//!
//! First derivatives use the wavenumbers with the Nyquist mode zeroed, so the
//! derivative of a real field stays real. The Laplacian, kinetic energy and
//! kinetic propagator use the full `|k|^2`, Nyquist included, so a grid-scale
//! sawtooth is never free of kinetic cost.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{NlsError, Result};

/// Zero-set cutoff for the modulus derivative, in modulus units.
pub const EPS_MOD: f64 = 1e-14;

const PAIRWISE_LEAF: usize = 8;

/// Deterministic tree summation over `0..len`.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(len: usize, f: &F) -> f64 {
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= PAIRWISE_LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    if len == 0 {
        0.0
    } else {
        go(0, len, f)
    }
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), &|i| values[i])
}

/// Uniform periodic grid on a box in `R^N`, `N` in `{1, 2, 3}`.
pub struct Grid {
    points: Vec<usize>,
    lengths: Vec<f64>,
    spacings: Vec<f64>,
    strides: Vec<usize>,
    wavenumbers: Vec<Vec<f64>>,
    diff_wavenumbers: Vec<Vec<f64>>,
    total: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("points", &self.points)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.lengths == other.lengths
    }
}

impl Grid {
    pub fn new(points: &[usize], lengths: &[f64]) -> Result<Arc<Grid>> {
        let n_dims = points.len();
        if !(1..=3).contains(&n_dims) {
            return Err(NlsError::InvalidGrid(format!(
                "dimension must be 1, 2 or 3, got {n_dims}"
            )));
        }
        if lengths.len() != n_dims {
            return Err(NlsError::InvalidGrid(format!(
                "{} point counts but {} lengths",
                n_dims,
                lengths.len()
            )));
        }
        for &n in points {
            if n < 8 || !n.is_power_of_two() {
                return Err(NlsError::InvalidGrid(format!(
                    "points per dimension must be a power of two >= 8, got {n}"
                )));
            }
        }
        for &l in lengths {
            if !(l.is_finite() && l > 0.0) {
                return Err(NlsError::InvalidGrid(format!(
                    "box lengths must be positive and finite, got {l}"
                )));
            }
        }
        let total = points
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|&t| t.checked_mul(std::mem::size_of::<Complex64>()).is_some())
            .ok_or_else(|| NlsError::InvalidGrid("point count overflows".into()))?;

        let mut strides = vec![1usize; n_dims];
        for a in (0..n_dims.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        let spacings: Vec<f64> = points
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| l / n as f64)
            .collect();
        let wavenumbers: Vec<Vec<f64>> = points
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| {
                let base = 2.0 * std::f64::consts::PI / l;
                (0..n)
                    .map(|q| {
                        let m = if q < n / 2 { q as f64 } else { q as f64 - n as f64 };
                        base * m
                    })
                    .collect()
            })
            .collect();
        let diff_wavenumbers = points
            .iter()
            .zip(&wavenumbers)
            .map(|(&n, ks)| {
                let mut ks = ks.clone();
                ks[n / 2] = 0.0;
                ks
            })
            .collect();

        let mut planner = FftPlanner::new();
        let forward = points.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = points.iter().map(|&n| planner.plan_fft_inverse(n)).collect();

        Ok(Arc::new(Grid {
            points: points.to_vec(),
            lengths: lengths.to_vec(),
            spacings,
            strides,
            wavenumbers,
            diff_wavenumbers,
            total,
            forward,
            inverse,
        }))
    }

    pub fn n_dims(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacings.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Wavenumbers of one axis in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    /// Differentiation wavenumbers (Nyquist mode zeroed) in FFT order.
    pub fn diff_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.diff_wavenumbers[axis]
    }

    pub fn multi_index(&self, mut p: usize, out: &mut [usize]) {
        for a in 0..self.n_dims() {
            out[a] = p / self.strides[a];
            p %= self.strides[a];
        }
    }

    /// Coordinate of index `i` along `axis`.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.lengths[axis] + i as f64 * self.spacings[axis]
    }

    /// Physical coordinates of flat point `p`.
    pub fn point_coords(&self, p: usize, out: &mut [f64]) {
        let mut rem = p;
        for a in 0..self.n_dims() {
            let i = rem / self.strides[a];
            rem %= self.strides[a];
            out[a] = self.coordinate(a, i);
        }
    }

    /// Flat list of coordinates, `n_dims` entries per point.
    pub fn coordinates(&self) -> Vec<f64> {
        let d = self.n_dims();
        let mut out = vec![0.0; self.total * d];
        for p in 0..self.total {
            self.point_coords(p, &mut out[p * d..(p + 1) * d]);
        }
        out
    }

    /// `|k|^2` at every spectral index, Nyquist included.
    pub fn k_squared(&self) -> Vec<f64> {
        let d = self.n_dims();
        let mut idx = [0usize; 3];
        (0..self.total)
            .map(|p| {
                self.multi_index(p, &mut idx[..d]);
                (0..d)
                    .map(|a| {
                        let k = self.wavenumbers[a][idx[a]];
                        k * k
                    })
                    .sum()
            })
            .collect()
    }

    /// Mask selecting modes whose index magnitude stays below `n_i / 3` on every axis.
    pub fn low_pass_mask(&self) -> Vec<bool> {
        let d = self.n_dims();
        let mut idx = [0usize; 3];
        (0..self.total)
            .map(|p| {
                self.multi_index(p, &mut idx[..d]);
                (0..d).all(|a| {
                    let n = self.points[a];
                    let q = idx[a];
                    let m = if q < n / 2 { q } else { n - q };
                    3 * m < n
                })
            })
            .collect()
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, forward: bool) {
        let fft = if forward {
            &self.forward[axis]
        } else {
            &self.inverse[axis]
        };
        let n = self.points[axis];
        let stride = self.strides[axis];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let block = n * stride;
        for outer in (0..self.total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }

    /// In-place unnormalized forward transform over all axes.
    pub fn fft_forward(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.total);
        for a in 0..self.n_dims() {
            self.transform_axis(data, a, true);
        }
    }

    /// In-place inverse transform including the `1/n` normalization.
    pub fn fft_inverse(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.total);
        for a in 0..self.n_dims() {
            self.transform_axis(data, a, false);
        }
        let scale = 1.0 / self.total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Factor turning `sum_k conj(a_k) b_k` of unnormalized spectra into `int conj(a) b`.
    pub fn parseval_factor(&self) -> f64 {
        self.cell_volume() / self.total as f64
    }
}

pub fn same_grid(a: &Grid, b: &Grid) -> bool {
    std::ptr::eq(a, b) || a == b
}

/// One complex component `z = u + i v` sampled on a grid.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(NlsError::InvalidInput(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(NlsError::NonFinite { index });
        }
        Ok(ComplexField { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: Arc<Grid>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ComplexField { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        ComplexField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Samples `f` at the physical coordinates of every grid point.
    pub fn from_fn<F: FnMut(&[f64]) -> Complex64>(grid: Arc<Grid>, mut f: F) -> Result<Self> {
        let d = grid.n_dims();
        let mut x = [0.0; 3];
        let values = (0..grid.len())
            .map(|p| {
                grid.point_coords(p, &mut x[..d]);
                f(&x[..d])
            })
            .collect();
        ComplexField::new(grid, values)
    }

    pub fn from_real(field: &RealField) -> Self {
        ComplexField {
            grid: field.grid.clone(),
            values: field.values.iter().map(|&r| Complex64::new(r, 0.0)).collect(),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn real_part(&self) -> RealField {
        RealField::from_parts_unchecked(self.grid.clone(), self.values.iter().map(|v| v.re).collect())
    }

    pub fn imag_part(&self) -> RealField {
        RealField::from_parts_unchecked(self.grid.clone(), self.values.iter().map(|v| v.im).collect())
    }

    pub fn scale(&mut self, factor: Complex64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Unnormalized spectrum.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut data = self.values.clone();
        self.grid.fft_forward(&mut data);
        data
    }

    pub fn from_spectrum(grid: Arc<Grid>, mut spectrum: Vec<Complex64>) -> Self {
        grid.fft_inverse(&mut spectrum);
        ComplexField::from_parts_unchecked(grid, spectrum)
    }
}

/// A real scalar field (a real or imaginary part, or a modulus).
#[derive(Clone, Debug)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(NlsError::InvalidInput(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(NlsError::NonFinite { index });
        }
        Ok(RealField { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        RealField { grid, values }
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: Arc<Grid>, mut f: F) -> Result<Self> {
        let d = grid.n_dims();
        let mut x = [0.0; 3];
        let values = (0..grid.len())
            .map(|p| {
                grid.point_coords(p, &mut x[..d]);
                f(&x[..d])
            })
            .collect();
        RealField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// The state `(z_1, ..., z_l)`: `l >= 1` complex components on one grid.
#[derive(Clone, Debug)]
pub struct FieldVector {
    components: Vec<ComplexField>,
}

impl FieldVector {
    pub fn new(components: Vec<ComplexField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| NlsError::InvalidInput("field vector needs at least one component".into()))?;
        if components.iter().any(|c| !same_grid(c.grid(), first.grid())) {
            return Err(NlsError::GridMismatch);
        }
        Ok(FieldVector { components })
    }

    pub fn zeros(grid: Arc<Grid>, ell: usize) -> Self {
        assert!(ell >= 1);
        FieldVector {
            components: (0..ell).map(|_| ComplexField::zeros(grid.clone())).collect(),
        }
    }

    pub fn from_real(components: Vec<RealField>) -> Result<Self> {
        FieldVector::new(components.iter().map(ComplexField::from_real).collect())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn ell(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ComplexField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ComplexField] {
        &mut self.components
    }

    pub fn component(&self, j: usize) -> &ComplexField {
        &self.components[j]
    }

    pub fn into_components(self) -> Vec<ComplexField> {
        self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(ComplexField::is_finite)
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.values().iter().all(|v| v.im == 0.0))
    }

    /// Checks that `other` lives on the same grid with the same component count.
    pub fn check_compatible(&self, other: &FieldVector) -> Result<()> {
        if !same_grid(self.grid(), other.grid()) {
            return Err(NlsError::GridMismatch);
        }
        if self.ell() != other.ell() {
            return Err(NlsError::ComponentMismatch {
                expected: self.ell(),
                got: other.ell(),
            });
        }
        Ok(())
    }

    /// `self + factor * other`, componentwise.
    pub fn axpy(&self, factor: f64, other: &FieldVector) -> Result<FieldVector> {
        self.check_compatible(other)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| {
                let values = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| x + y * factor)
                    .collect();
                ComplexField::from_parts_unchecked(a.grid().clone(), values)
            })
            .collect();
        Ok(FieldVector { components })
    }
}

/// `sum f(x_p) * dV` with pairwise summation.
pub fn integrate(f: &RealField) -> Result<f64> {
    if let Some(index) = f.values().iter().position(|v| !v.is_finite()) {
        return Err(NlsError::NonFinite { index });
    }
    let vals = f.values();
    Ok(pairwise_sum(vals) * f.grid().cell_volume())
}

/// `int |z|^2`.
pub fn l2_norm_sq(z: &ComplexField) -> f64 {
    let vals = z.values();
    pairwise_sum_by(vals.len(), &|i| vals[i].norm_sqr()) * z.grid().cell_volume()
}

/// `int |z|^2` evaluated on the spectral side through Parseval.
pub fn l2_norm_sq_spectral(z: &ComplexField) -> f64 {
    let spec = z.spectrum();
    pairwise_sum_by(spec.len(), &|i| spec[i].norm_sqr()) * z.grid().parseval_factor()
}

/// `sum_k |k|^2 |zhat_k|^2` scaled to `int |grad z|^2`.
pub(crate) fn kinetic_from_spectrum(grid: &Grid, spec: &[Complex64], k_sq: &[f64]) -> f64 {
    pairwise_sum_by(spec.len(), &|i| k_sq[i] * spec[i].norm_sqr()) * grid.parseval_factor()
}

/// `sum_i int |d_i z|^2` by spectral differentiation.
pub fn gradient_sq_norm(z: &ComplexField) -> f64 {
    let grid = z.grid();
    kinetic_from_spectrum(grid, &z.spectrum(), &grid.k_squared())
}

/// Spectral partial derivative along `axis`.
pub fn derivative(z: &ComplexField, axis: usize) -> ComplexField {
    let grid = z.grid().clone();
    let mut spec = z.spectrum();
    apply_derivative_symbol(&grid, &mut spec, axis);
    ComplexField::from_spectrum(grid, spec)
}

pub(crate) fn apply_derivative_symbol(grid: &Grid, spec: &mut [Complex64], axis: usize) {
    let ks = grid.diff_wavenumbers(axis);
    let n = grid.points()[axis];
    let stride = grid.strides()[axis];
    for (p, v) in spec.iter_mut().enumerate() {
        let q = (p / stride) % n;
        *v *= Complex64::new(0.0, ks[q]);
    }
}

/// Spectral Laplacian.
pub fn laplacian(z: &ComplexField) -> ComplexField {
    let grid = z.grid().clone();
    let k_sq = grid.k_squared();
    let mut spec = z.spectrum();
    for (v, k2) in spec.iter_mut().zip(&k_sq) {
        *v *= -k2;
    }
    ComplexField::from_spectrum(grid, spec)
}

/// Pointwise `(u^2 + v^2)^{1/2}`.
pub fn modulus(z: &ComplexField) -> RealField {
    RealField::from_parts_unchecked(z.grid().clone(), z.values().iter().map(|v| v.norm()).collect())
}

/// Weak derivative of the modulus along `axis`:
/// `(u d_i u + v d_i v) / |z|` off the zero set, 0 where `|z| <= EPS_MOD`.
pub fn modulus_partial(z: &ComplexField, axis: usize) -> RealField {
    let dz = derivative(z, axis);
    modulus_partial_from(z, &dz)
}

pub(crate) fn modulus_partial_from(z: &ComplexField, dz: &ComplexField) -> RealField {
    let values = z
        .values()
        .iter()
        .zip(dz.values())
        .map(|(w, dw)| {
            let m = w.norm();
            if m <= EPS_MOD {
                0.0
            } else {
                (w.re * dw.re + w.im * dw.im) / m
            }
        })
        .collect();
    RealField::from_parts_unchecked(z.grid().clone(), values)
}

/// Squared H^1 norm of one component, computed spectrally.
pub fn h1_norm_sq(z: &ComplexField) -> f64 {
    let grid = z.grid();
    let k_sq = grid.k_squared();
    let spec = z.spectrum();
    pairwise_sum_by(spec.len(), &|i| (1.0 + k_sq[i]) * spec[i].norm_sqr()) * grid.parseval_factor()
}

/// `(sum_j |a_j - b_j|_2^2 + |grad(a_j - b_j)|_2^2)^{1/2}`.
pub fn h1_distance(a: &FieldVector, b: &FieldVector) -> Result<f64> {
    a.check_compatible(b)?;
    let grid = a.grid();
    let mut total = 0.0;
    for (ca, cb) in a.components().iter().zip(b.components()) {
        let diff = ComplexField::from_parts_unchecked(
            grid.clone(),
            ca.values().iter().zip(cb.values()).map(|(x, y)| x - y).collect(),
        );
        total += h1_norm_sq(&diff);
    }
    Ok(total.sqrt())
}

/// Periodic translation `z(x - shift)`, exact for band-limited fields.
pub fn translate(z: &ComplexField, shift: &[f64]) -> ComplexField {
    let grid = z.grid().clone();
    let mut spec = z.spectrum();
    apply_shift(&grid, &mut spec, shift);
    ComplexField::from_spectrum(grid, spec)
}

pub(crate) fn apply_shift(grid: &Grid, spec: &mut [Complex64], shift: &[f64]) {
    let d = grid.n_dims();
    let mut idx = [0usize; 3];
    for (p, v) in spec.iter_mut().enumerate() {
        grid.multi_index(p, &mut idx[..d]);
        let phase: f64 = (0..d).map(|a| grid.wavenumbers(a)[idx[a]] * shift[a]).sum();
        *v *= Complex64::from_polar(1.0, -phase);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    fn soliton(grid: &Arc<Grid>) -> ComplexField {
        ComplexField::from_fn(grid.clone(), |x| Complex64::new(2f64.sqrt() * sech(x[0]), 0.0)).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(&[12], &[1.0]).is_err());
        assert!(Grid::new(&[4], &[1.0]).is_err());
        assert!(Grid::new(&[16], &[0.0]).is_err());
        assert!(Grid::new(&[16, 16, 16, 16], &[1.0; 4]).is_err());
        assert!(Grid::new(&[16], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sawtooth_pays_nyquist_kinetic_energy() {
        let g = Grid::new(&[32], &[8.0]).unwrap();
        let z = ComplexField::from_parts_unchecked(
            g.clone(),
            (0..32).map(|i| Complex64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect(),
        );
        // (pi / dx)^2 times the mass 8
        let expected = (PI / 0.25).powi(2) * 8.0;
        assert!((gradient_sq_norm(&z) - expected).abs() < 1e-9 * expected);
        assert!(derivative(&z, 0).values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::new(&[64], &[10.0]).unwrap();
        let one = RealField::from_fn(g.clone(), |_| 1.0).unwrap();
        assert!((integrate(&one).unwrap() - 10.0).abs() < 1e-13);
        let s2 = RealField::from_fn(g.clone(), |x| (2.0 * PI * x[0] / 10.0).sin().powi(2)).unwrap();
        assert!((integrate(&s2).unwrap() - 5.0).abs() < 1e-13);
        let zero = RealField::from_fn(g.clone(), |_| 0.0).unwrap();
        assert_eq!(integrate(&zero).unwrap(), 0.0);
        let bad = RealField::from_parts_unchecked(g, vec![f64::NAN; 64]);
        assert!(matches!(integrate(&bad), Err(NlsError::NonFinite { index: 0 })));
    }

    #[test]
    fn norms_of_soliton() {
        let g = Grid::new(&[512], &[40.0]).unwrap();
        let z = soliton(&g);
        assert!((l2_norm_sq(&z) - 4.0).abs() < 1e-10);
        assert!((gradient_sq_norm(&z) - 4.0 / 3.0).abs() < 1e-8);
        let a = FieldVector::new(vec![z]).unwrap();
        let b = FieldVector::zeros(g, 1);
        let d = h1_distance(&a, &b).unwrap();
        assert!((d - (16.0f64 / 3.0).sqrt()).abs() < 1e-8);
        assert_eq!(h1_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_fields() {
        let g = Grid::new(&[32], &[10.0]).unwrap();
        let z = ComplexField::from_fn(g.clone(), |_| Complex64::new(1.0, 1.0)).unwrap();
        assert!((l2_norm_sq(&z) - 20.0).abs() < 1e-12);
        assert!(gradient_sq_norm(&z) < 1e-24);
        let w = ComplexField::from_fn(g, |_| Complex64::new(3.0, 4.0)).unwrap();
        assert!(modulus(&w).values().iter().all(|&m| (m - 5.0).abs() < 1e-15));
    }

    #[test]
    fn plane_wave_gradient() {
        let l = 10.0;
        let k = 2.0 * PI / l;
        let g = Grid::new(&[64], &[l]).unwrap();
        let z = ComplexField::from_fn(g, |x| Complex64::from_polar(1.0, k * x[0])).unwrap();
        assert!((gradient_sq_norm(&z) - k * k * l).abs() < 1e-12 * k * k * l);
        let dz = derivative(&z, 0);
        for (d, v) in dz.values().iter().zip(z.values()) {
            assert!((d - Complex64::new(0.0, k) * v).norm() < 1e-12 * k);
        }
    }

    #[test]
    fn multi_dimensional_plane_wave() {
        let g = Grid::new(&[16, 32, 8], &[2.0, 3.0, 4.0]).unwrap();
        let (k0, k1, k2) = (2.0 * PI / 2.0 * 2.0, 2.0 * PI / 3.0 * 3.0, -2.0 * PI / 4.0);
        let z = ComplexField::from_fn(g.clone(), |x| {
            Complex64::from_polar(1.0, k0 * x[0] + k1 * x[1] + k2 * x[2])
        })
        .unwrap();
        let expect = (k0 * k0 + k1 * k1 + k2 * k2) * g.volume();
        assert!((gradient_sq_norm(&z) - expect).abs() < 1e-11 * expect);
        let lap = laplacian(&z);
        let k_sq = k0 * k0 + k1 * k1 + k2 * k2;
        for (a, b) in lap.values().iter().zip(z.values()) {
            assert!((a + b * k_sq).norm() < 1e-10 * k_sq);
        }
    }

    #[test]
    fn modulus_partial_examples() {
        let g = Grid::new(&[256], &[30.0]).unwrap();
        let zero = ComplexField::zeros(g.clone());
        assert!(modulus_partial(&zero, 0).values().iter().all(|&v| v == 0.0));

        // positive real field: derivative unchanged
        let u = ComplexField::from_fn(g.clone(), |x| Complex64::new(sech(x[0]) + 0.5, 0.0)).unwrap();
        let du = derivative(&u, 0);
        let mp = modulus_partial(&u, 0);
        for (a, b) in mp.values().iter().zip(du.values()) {
            assert!((a - b.re).abs() < 1e-13);
        }
    }

    #[test]
    fn translation_by_grid_points_is_a_permutation() {
        let g = Grid::new(&[64], &[16.0]).unwrap();
        let z = ComplexField::from_fn(g.clone(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.3 * x[0].sin())).unwrap();
        let shifted = translate(&z, &[3.0 * g.spacings()[0]]);
        for i in 0..64 {
            let j = (i + 64 - 3) % 64;
            assert!((shifted.values()[i] - z.values()[j]).norm() < 1e-13);
        }
    }

    #[test]
    fn field_vector_validation() {
        let g1 = Grid::new(&[16], &[1.0]).unwrap();
        let g2 = Grid::new(&[32], &[1.0]).unwrap();
        assert!(FieldVector::new(vec![]).is_err());
        let r = FieldVector::new(vec![ComplexField::zeros(g1.clone()), ComplexField::zeros(g2.clone())]);
        assert!(matches!(r, Err(NlsError::GridMismatch)));
        let a = FieldVector::zeros(g1.clone(), 1);
        let b = FieldVector::zeros(g1, 2);
        assert!(h1_distance(&a, &b).is_err());
        assert!(ComplexField::new(g2, vec![Complex64::new(f64::INFINITY, 0.0); 32]).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 4950.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
