//! Hamiltonian, its real restriction, variational gradient and charges.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{NlsError, Result};
use crate::grid::{
    apply_derivative_symbol, kinetic_from_spectrum, l2_norm_sq, modulus_partial_from, pairwise_sum_by, same_grid,
    ComplexField, FieldVector, Grid, EPS_MOD,
};
use crate::nonlinearity::{check_consistency, NonlinearitySpec, Sampler, CONSTRUCTOR_CONSISTENCY_TOL};

/// Largest supported component count (pointwise kernels use stack buffers).
pub const MAX_COMPONENTS: usize = 16;

/// Grid plus a nonlinearity that passed the consistency gate.
#[derive(Clone, Debug)]
pub struct EnergyContext {
    grid: Arc<Grid>,
    spec: NonlinearitySpec,
    coords: Option<Arc<Vec<f64>>>,
    k_sq: Arc<Vec<f64>>,
}

impl EnergyContext {
    pub fn new(grid: Arc<Grid>, spec: NonlinearitySpec) -> Result<Self> {
        if spec.ell() > MAX_COMPONENTS {
            return Err(NlsError::InvalidInput(format!(
                "at most {MAX_COMPONENTS} components are supported, got {}",
                spec.ell()
            )));
        }
        let sampler = Sampler {
            samples: 500,
            n_dims: grid.n_dims(),
            ..Sampler::default()
        };
        check_consistency(&spec, &sampler, CONSTRUCTOR_CONSISTENCY_TOL)?;
        let coords = spec.x_dependent().then(|| Arc::new(grid.coordinates()));
        let k_sq = Arc::new(grid.k_squared());
        Ok(EnergyContext { grid, spec, coords, k_sq })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn ell(&self) -> usize {
        self.spec.ell()
    }

    pub(crate) fn k_sq(&self) -> &[f64] {
        &self.k_sq
    }

    /// Coordinates of point `p`, or the origin for x-independent specs.
    #[inline]
    pub(crate) fn x_at(&self, p: usize) -> &[f64] {
        const ORIGIN: [f64; 3] = [0.0; 3];
        let d = self.grid.n_dims();
        match &self.coords {
            Some(c) => &c[p * d..(p + 1) * d],
            None => &ORIGIN[..d],
        }
    }

    pub fn check_state(&self, z: &FieldVector) -> Result<()> {
        if !same_grid(z.grid(), &self.grid) {
            return Err(NlsError::GridMismatch);
        }
        if z.ell() != self.ell() {
            return Err(NlsError::ComponentMismatch {
                expected: self.ell(),
                got: z.ell(),
            });
        }
        Ok(())
    }

    /// `int H(x, |z_1|, .., |z_l|)`.
    pub(crate) fn potential_integral(&self, z: &FieldVector) -> f64 {
        let ell = self.ell();
        let comps = z.components();
        let f = |p: usize| {
            let mut s = [0.0; MAX_COMPONENTS];
            for j in 0..ell {
                s[j] = comps[j].values()[p].norm();
            }
            self.spec.potential(self.x_at(p), &s[..ell])
        };
        pairwise_sum_by(self.grid.len(), &f) * self.grid.cell_volume()
    }

    pub(crate) fn kinetic(&self, z: &FieldVector) -> f64 {
        z.components()
            .iter()
            .map(|c| kinetic_from_spectrum(&self.grid, &c.spectrum(), &self.k_sq))
            .sum()
    }

    /// `h_j(x, |z_1|^2, .., |z_l|^2)` at every point, one vector per component.
    pub(crate) fn coefficients(&self, z: &FieldVector) -> Vec<Vec<f64>> {
        let ell = self.ell();
        let n = self.grid.len();
        let mut out = vec![vec![0.0; n]; ell];
        let mut s_sq = [0.0; MAX_COMPONENTS];
        for p in 0..n {
            for j in 0..ell {
                s_sq[j] = z.components()[j].values()[p].norm_sqr();
            }
            let x = self.x_at(p);
            for (j, col) in out.iter_mut().enumerate() {
                col[p] = self.spec.coefficient(j, x, &s_sq[..ell]);
            }
        }
        out
    }
}

/// `1/2 (|grad z|_2^2 - int H(x, |z|))`.
pub fn energy_hat(ctx: &EnergyContext, z: &FieldVector) -> Result<f64> {
    ctx.check_state(z)?;
    Ok(0.5 * (ctx.kinetic(z) - ctx.potential_integral(z)))
}

/// The energy restricted to real states; rejects states with imaginary parts.
pub fn energy_real(ctx: &EnergyContext, u: &FieldVector) -> Result<f64> {
    if !u.is_real() {
        return Err(NlsError::InvalidInput("energy_real needs real components".into()));
    }
    energy_hat(ctx, u)
}

/// `E(|z|)` with the modulus gradient taken from the weak-derivative formula.
pub fn modulus_energy(ctx: &EnergyContext, z: &FieldVector) -> Result<f64> {
    ctx.check_state(z)?;
    let grid = ctx.grid();
    let mut kinetic = 0.0;
    for c in z.components() {
        let spec = c.spectrum();
        for axis in 0..grid.n_dims() {
            let mut d = spec.clone();
            apply_derivative_symbol(grid, &mut d, axis);
            let dz = ComplexField::from_spectrum(grid.clone(), d);
            let m = modulus_partial_from(c, &dz);
            let vals = m.values();
            kinetic += pairwise_sum_by(vals.len(), &|i| vals[i] * vals[i]) * grid.cell_volume();
        }
    }
    Ok(0.5 * (kinetic - ctx.potential_integral(z)))
}

/// L2 gradient `-Laplace z_j - h_j(x, |z|^2) z_j`.
///
/// `d/de E(z + e d)` at `e = 0` equals the real inner product
/// `sum_j int Re(conj(grad_j) d_j)`.
pub fn energy_gradient(ctx: &EnergyContext, z: &FieldVector) -> Result<FieldVector> {
    ctx.check_state(z)?;
    let grid = ctx.grid().clone();
    let coeffs = ctx.coefficients(z);
    let comps = z
        .components()
        .iter()
        .zip(&coeffs)
        .map(|(c, h)| {
            let mut spec = c.spectrum();
            for (v, k2) in spec.iter_mut().zip(ctx.k_sq()) {
                *v *= *k2;
            }
            let mut g = ComplexField::from_spectrum(grid.clone(), spec);
            for ((gv, zv), hv) in g.values_mut().iter_mut().zip(c.values()).zip(h) {
                *gv -= zv * hv;
            }
            g
        })
        .collect();
    FieldVector::new(comps)
}

/// Real inner product `sum_j int Re(conj(a_j) b_j)`.
pub fn real_inner(a: &FieldVector, b: &FieldVector) -> Result<f64> {
    a.check_compatible(b)?;
    let dv = a.grid().cell_volume();
    Ok(a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| {
            let (xv, yv) = (x.values(), y.values());
            pairwise_sum_by(xv.len(), &|i| (xv[i].conj() * yv[i]).re) * dv
        })
        .sum())
}

/// Charges `|z_j|_2^2`.
pub fn charges(z: &FieldVector) -> Vec<f64> {
    z.components().iter().map(l2_norm_sq).collect()
}

/// `E_hat(z) - E(|z|)` evaluated two ways.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiamagneticDefect {
    /// Difference of the two energies.
    pub direct: f64,
    /// `1/2 sum_j sum_i int (u_j d_i v_j - v_j d_i u_j)^2 / (u_j^2 + v_j^2)`.
    pub formula: f64,
    pub discrepancy: f64,
}

impl DiamagneticDefect {
    pub fn relative_discrepancy(&self) -> f64 {
        let scale = self.direct.abs().max(self.formula.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.discrepancy / scale
        }
    }
}

pub fn diamagnetic_defect(ctx: &EnergyContext, z: &FieldVector) -> Result<DiamagneticDefect> {
    let direct = energy_hat(ctx, z)? - modulus_energy(ctx, z)?;
    let grid = ctx.grid();
    let mut formula = 0.0;
    for c in z.components() {
        let spec = c.spectrum();
        for axis in 0..grid.n_dims() {
            let mut d = spec.clone();
            apply_derivative_symbol(grid, &mut d, axis);
            let dz = ComplexField::from_spectrum(grid.clone(), d);
            let (zv, dv) = (c.values(), dz.values());
            let f = |p: usize| {
                let m2 = zv[p].norm_sqr();
                if m2.sqrt() <= EPS_MOD {
                    0.0
                } else {
                    let cross: Complex64 = zv[p].conj() * dv[p];
                    cross.im * cross.im / m2
                }
            };
            formula += pairwise_sum_by(zv.len(), &f) * grid.cell_volume();
        }
    }
    formula *= 0.5;
    Ok(DiamagneticDefect {
        direct,
        formula,
        discrepancy: (direct - formula).abs(),
    })
}

/// `gamma = 2(2 l1 + 4 - N l1) / (4 - N l1)` for `0 < l1 < 4/N`.
pub fn coercivity_gamma(ell1: f64, n_dims: usize) -> Result<f64> {
    let n = n_dims as f64;
    if !(ell1 > 0.0 && ell1 < 4.0 / n) {
        return Err(NlsError::InvalidInput(format!(
            "gamma needs 0 < l1 < 4/N = {}, got {ell1}",
            4.0 / n
        )));
    }
    let gamma = 2.0 * (2.0 * ell1 + 4.0 - n * ell1) / (4.0 - n * ell1);
    debug_assert!(gamma > 2.0);
    Ok(gamma)
}

/// Sampled estimate of the constant in `E_hat >= |grad z|^2 / 4 - C(c^2 + c^gamma)`.
#[derive(Clone, Debug)]
pub struct CoercivityReport {
    pub gamma: f64,
    /// Smallest `C >= 0` that satisfies the bound on every sample.
    pub constant: f64,
    /// Index of the sample that sets `constant`.
    pub witness: Option<usize>,
    /// `(c, C needed by that sample)` per sample.
    pub per_sample: Vec<(f64, f64)>,
    /// Worst required constant per distinct `c`, sorted by `c`.
    pub per_c: Vec<(f64, f64)>,
    /// Set when the per-`c` constants keep growing by more than 10x across the sweep.
    pub growth_flag: bool,
}

impl CoercivityReport {
    /// `E_hat - |grad z|^2/4 + C(c^2 + c^gamma)` for a state, using the estimated `C`.
    pub fn margin(&self, ctx: &EnergyContext, z: &FieldVector) -> Result<f64> {
        let c2: f64 = charges(z).iter().sum();
        let c = c2.sqrt();
        Ok(energy_hat(ctx, z)? - 0.25 * ctx.kinetic(z) + self.constant * (c2 + c.powf(self.gamma)))
    }
}

pub fn coercivity_check(ctx: &EnergyContext, samples: &[FieldVector], ell1: f64) -> Result<CoercivityReport> {
    let gamma = coercivity_gamma(ell1, ctx.grid().n_dims())?;
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut constant: f64 = 0.0;
    let mut witness = None;
    for (i, z) in samples.iter().enumerate() {
        let e = energy_hat(ctx, z)?;
        let c2: f64 = charges(z).iter().sum();
        let c = c2.sqrt();
        let denom = c2 + c.powf(gamma);
        let need = if denom > 0.0 { (0.25 * ctx.kinetic(z) - e) / denom } else { 0.0 };
        per_sample.push((c, need));
        if need > constant {
            constant = need;
            witness = Some(i);
        }
    }
    let mut per_c: Vec<(f64, f64)> = Vec::new();
    let mut sorted = per_sample.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (c, need) in sorted {
        match per_c.last_mut() {
            Some(last) if (last.0 - c).abs() <= 1e-9 * c.max(1.0) => last.1 = last.1.max(need),
            _ => per_c.push((c, need)),
        }
    }
    let growth_flag = per_c.len() >= 2
        && per_c.windows(2).all(|w| w[1].1 > w[0].1)
        && per_c.last().unwrap().1 > 10.0 * per_c[0].1.max(1e-300);
    Ok(CoercivityReport {
        gamma,
        constant,
        witness,
        per_sample,
        per_c,
        growth_flag,
    })
}
