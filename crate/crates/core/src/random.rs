//! Seeded random smooth fields.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{ComplexField, FieldVector, Grid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random complex field with uniform spectral coefficients on the lower two
/// thirds of every axis and zeros above. When `taper` is given the
/// coefficients are additionally damped by `exp(-|k|^2 / (2 taper^2))`.
pub fn low_pass_field<R: Rng>(grid: &Arc<Grid>, rng: &mut R, taper: Option<f64>) -> ComplexField {
    let mask = grid.low_pass_mask();
    let k_sq = grid.k_squared();
    let spec: Vec<Complex64> = mask
        .iter()
        .zip(&k_sq)
        .map(|(&keep, &k2)| {
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if !keep {
                return Complex64::new(0.0, 0.0);
            }
            match taper {
                Some(k0) => c * (-0.5 * k2 / (k0 * k0)).exp(),
                None => c,
            }
        })
        .collect();
    ComplexField::from_spectrum(grid.clone(), spec)
}

/// Smooth random state: tapered noise modulated by a Gaussian envelope of
/// width `L/8` so that it decays towards the box edge.
pub fn smooth_state<R: Rng>(grid: &Arc<Grid>, ell: usize, rng: &mut R) -> FieldVector {
    let width: Vec<f64> = grid.lengths().iter().map(|l| l / 8.0).collect();
    let coords = grid.coordinates();
    let d = grid.n_dims();
    let comps = (0..ell)
        .map(|_| {
            let mut f = low_pass_field(grid, rng, Some(1.5));
            let offset = Complex64::new(rng.gen_range(0.5..1.0), rng.gen_range(-0.5..0.5));
            for (p, v) in f.values_mut().iter_mut().enumerate() {
                let r2: f64 = (0..d).map(|a| (coords[p * d + a] / width[a]).powi(2)).sum();
                *v = (*v * 8.0 + offset) * (-0.5 * r2).exp();
            }
            f
        })
        .collect();
    FieldVector::new(comps).expect("components share the grid")
}
