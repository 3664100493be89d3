//! Constrained minimization on the multi-mass manifold `S_c`.
//!
//! A preconditioned normalized gradient flow: each iterate moves against the
//! energy gradient projected onto the tangent space of `S_c`, then every
//! component is rescaled to its prescribed mass `c_j^2`. The step length is
//! chosen by backtracking so the energy never increases. The preconditioner
//! is `(shift - Laplace)^{-1}`; it only changes the metric of the flow, the
//! stopping test uses the unpreconditioned L2 residual of the elliptic system.
//! For the real flow the residual is projected onto the nonnegative cone: where
//! a component sits at zero only the part pulling it upward counts.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::energy::{energy_gradient, energy_hat, real_inner, EnergyContext};
use crate::error::{NlsError, Result};
use crate::grid::{apply_shift, l2_norm_sq, pairwise_sum_by, ComplexField, FieldVector, Grid};
use crate::random;

/// Target masses: `|u_j|_2 = c_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    c: Vec<f64>,
}

impl ConstraintSet {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(NlsError::InvalidInput("constraint set is empty".into()));
        }
        if let Some(bad) = c.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(NlsError::InvalidInput(format!("every c_j must be positive, got {bad}")));
        }
        Ok(ConstraintSet { c })
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn ell(&self) -> usize {
        self.c.len()
    }

    /// `c^2 = sum_j c_j^2`.
    pub fn c_sq(&self) -> f64 {
        self.c.iter().map(|v| v * v).sum()
    }
}

#[derive(Clone, Debug)]
pub enum InitialGuess {
    /// One Gaussian per component, centers jittered by the seed.
    Gaussian,
    /// Gaussian envelope times seeded smooth noise.
    Random,
    Given(FieldVector),
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub initial: InitialGuess,
    pub seed: u64,
    /// Initial step `tau_0`.
    pub step_size: f64,
    /// Step reduction factor on a rejected trial, in `(0, 1)`.
    pub backtrack: f64,
    pub max_iterations: usize,
    /// Stop once the L2 residual of the elliptic system drops below
    /// `tol_grad * max(1, |lambda u|_2)`.
    pub tol_grad: f64,
    /// Give up after this many iterations without a 0.1% residual improvement.
    pub stagnation_window: usize,
    /// A converged state must satisfy `max_boundary |u| <= localization_tol * max |u|`.
    pub localization_tol: f64,
    /// Fixed shift `s` of the preconditioner `(s - Laplace)^{-1}`. `None` uses
    /// `-lambda_j` of the current iterate, clamped to `[1e-2, 1e2]`.
    pub preconditioner_shift: Option<f64>,
    /// Energies below `-divergence_bound` are treated as divergence.
    pub divergence_bound: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            initial: InitialGuess::Gaussian,
            seed: 0,
            step_size: 0.1,
            backtrack: 0.5,
            max_iterations: 20_000,
            tol_grad: 1e-8,
            stagnation_window: 2_000,
            localization_tol: 1e-6,
            preconditioner_shift: None,
            divergence_bound: 1e8,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NlsError::InvalidInput(m.to_string()));
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad("step size must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        if !(self.tol_grad.is_finite() && self.tol_grad > 0.0) {
            return bad("tol_grad must be positive");
        }
        if self.max_iterations == 0 || self.stagnation_window == 0 {
            return bad("iteration limits must be positive");
        }
        if self.preconditioner_shift.is_some_and(|v| !(v > 0.0)) || !(self.localization_tol > 0.0) || !(self.divergence_bound > 0.0) {
            return bad("preconditioner shift, localization tolerance and divergence bound must be positive");
        }
        Ok(())
    }
}

/// Why the flow stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    /// Residual small but the state fills the box: the infimum is not attained.
    NotLocalized,
    MaxIterations,
    Stagnated,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct GroundStateResult {
    /// Minimizer, centered in the box. Real and nonnegative for [`minimize`].
    pub u: FieldVector,
    /// Energy of `u`, the numerical `I_c`.
    pub value: f64,
    pub multipliers: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    /// Energy after every accepted step, starting with the initial guess.
    pub energy_trace: Vec<f64>,
    /// Boundary-to-peak ratio of the total modulus.
    pub boundary_ratio: f64,
    pub seed: u64,
}

fn gaussian_guess(grid: &Arc<Grid>, ell: usize, seed: u64, noisy: bool) -> FieldVector {
    let mut rng = random::rng(seed);
    let d = grid.n_dims();
    let coords = grid.coordinates();
    let comps = (0..ell)
        .map(|_| {
            let centers: Vec<f64> = grid.lengths().iter().map(|l| rng.gen_range(-l / 10.0..l / 10.0)).collect();
            let widths: Vec<f64> = grid.lengths().iter().map(|l| l / 20.0).collect();
            let noise = noisy.then(|| random::low_pass_field(grid, &mut rng, Some(1.0)));
            let values = (0..grid.len())
                .map(|p| {
                    let r2: f64 = (0..d)
                        .map(|a| ((coords[p * d + a] - centers[a]) / widths[a]).powi(2))
                        .sum();
                    let base = (-0.5 * r2).exp();
                    let factor = noise.as_ref().map_or(1.0, |n| 1.0 + 0.5 * n.values()[p].re.tanh());
                    Complex64::new(base * factor, 0.0)
                })
                .collect();
            ComplexField::new(grid.clone(), values).expect("finite guess")
        })
        .collect();
    FieldVector::new(comps).expect("shared grid")
}

fn initial_state(ctx: &EnergyContext, opts: &MinimizeOptions) -> Result<FieldVector> {
    let ell = ctx.ell();
    let grid = ctx.grid();
    let state = match &opts.initial {
        InitialGuess::Gaussian => gaussian_guess(grid, ell, opts.seed, false),
        InitialGuess::Random => gaussian_guess(grid, ell, opts.seed, true),
        InitialGuess::Given(z) => {
            ctx.check_state(z)?;
            z.clone()
        }
    };
    Ok(state)
}

/// Multiplies every component by a seeded smooth random phase `exp(i theta(x))`.
fn randomize_phase(z: &mut FieldVector, seed: u64) {
    let grid = z.grid().clone();
    let mut rng = random::rng(seed ^ 0x5eed_f00d);
    for c in z.components_mut() {
        let noise = random::low_pass_field(&grid, &mut rng, Some(0.5));
        let peak = noise.values().iter().map(|v| v.re.abs()).fold(1e-300, f64::max);
        for (v, n) in c.values_mut().iter_mut().zip(noise.values()) {
            *v *= Complex64::from_polar(1.0, std::f64::consts::PI * n.re / peak);
        }
    }
}

/// Clamps (when `real`) and rescales every component to mass `c_j^2`.
fn project(z: &mut FieldVector, c: &ConstraintSet, real: bool) -> Result<()> {
    for (j, comp) in z.components_mut().iter_mut().enumerate() {
        if real {
            for v in comp.values_mut() {
                *v = Complex64::new(v.re.max(0.0), 0.0);
            }
        }
        let m = l2_norm_sq(comp);
        if !(m > 0.0) || !m.is_finite() {
            return Err(NlsError::ZeroMass(j));
        }
        comp.scale(Complex64::new(c.c()[j] / m.sqrt(), 0.0));
    }
    Ok(())
}

fn precondition(ctx: &EnergyContext, f: &ComplexField, shift: f64, real: bool) -> ComplexField {
    let mut spec = f.spectrum();
    for (v, k2) in spec.iter_mut().zip(ctx.k_sq()) {
        *v /= shift + k2;
    }
    let mut out = ComplexField::from_spectrum(ctx.grid().clone(), spec);
    if real {
        for v in out.values_mut() {
            v.im = 0.0;
        }
    }
    out
}

fn component_inner(a: &ComplexField, b: &ComplexField) -> f64 {
    let (av, bv) = (a.values(), b.values());
    pairwise_sum_by(av.len(), &|i| (av[i].conj() * bv[i]).re) * a.grid().cell_volume()
}

/// Multipliers and L2 residual at `u` given its gradient.
fn residual_parts(u: &FieldVector, g: &FieldVector, real: bool) -> (Vec<f64>, f64) {
    let mut lambdas = Vec::with_capacity(u.ell());
    let mut total = 0.0;
    for (uj, gj) in u.components().iter().zip(g.components()) {
        let lambda = component_inner(gj, uj) / l2_norm_sq(uj);
        let (uv, gv) = (uj.values(), gj.values());
        let term = |i: usize| {
            let r = gv[i] - uv[i] * lambda;
            if real && uv[i].re == 0.0 {
                r.re.min(0.0).powi(2)
            } else {
                r.norm_sqr()
            }
        };
        total += pairwise_sum_by(uv.len(), &term) * uj.grid().cell_volume();
        lambdas.push(lambda);
    }
    (lambdas, total.sqrt())
}

fn residual_scale(lambdas: &[f64], c: &ConstraintSet) -> f64 {
    let s: f64 = lambdas.iter().zip(c.c()).map(|(l, cj)| (l * cj).powi(2)).sum();
    s.sqrt().max(1.0)
}

/// Shifts the state so the periodic centroid of `sum_j |u_j|^2` sits at the box center.
pub fn center(z: &FieldVector) -> FieldVector {
    let grid = z.grid().clone();
    let d = grid.n_dims();
    let coords = grid.coordinates();
    let density: Vec<f64> = (0..grid.len())
        .map(|p| z.components().iter().map(|c| c.values()[p].norm_sqr()).sum())
        .collect();
    let shift: Vec<f64> = (0..d)
        .map(|a| {
            let l = grid.lengths()[a];
            let w = 2.0 * std::f64::consts::PI / l;
            let re = pairwise_sum_by(density.len(), &|p| density[p] * (w * coords[p * d + a]).cos());
            let im = pairwise_sum_by(density.len(), &|p| density[p] * (w * coords[p * d + a]).sin());
            if re == 0.0 && im == 0.0 {
                0.0
            } else {
                -im.atan2(re) / w
            }
        })
        .collect();
    let comps = z
        .components()
        .iter()
        .map(|c| {
            let mut spec = c.spectrum();
            apply_shift(&grid, &mut spec, &shift);
            ComplexField::from_spectrum(grid.clone(), spec)
        })
        .collect();
    FieldVector::new(comps).expect("shared grid")
}

/// Largest total modulus on the box faces divided by the peak total modulus.
pub fn boundary_ratio(z: &FieldVector) -> f64 {
    let grid = z.grid();
    let d = grid.n_dims();
    let mut idx = [0usize; 3];
    let mut peak: f64 = 0.0;
    let mut edge: f64 = 0.0;
    for p in 0..grid.len() {
        let rho: f64 = z.components().iter().map(|c| c.values()[p].norm_sqr()).sum::<f64>().sqrt();
        peak = peak.max(rho);
        grid.multi_index(p, &mut idx[..d]);
        if idx[..d].contains(&0) {
            edge = edge.max(rho);
        }
    }
    if peak == 0.0 {
        0.0
    } else {
        edge / peak
    }
}

/// Largest relative energy increase tolerated on an accepted step.
const ROUNDOFF_SLACK: f64 = 1e-12;

fn run_flow(ctx: &EnergyContext, c: &ConstraintSet, opts: &MinimizeOptions, mut u: FieldVector, real: bool) -> Result<GroundStateResult> {
    opts.validate()?;
    if c.ell() != ctx.ell() {
        return Err(NlsError::ComponentMismatch {
            expected: ctx.ell(),
            got: c.ell(),
        });
    }
    project(&mut u, c, real)?;
    let mut energy = energy_hat(ctx, &u)?;
    let mut trace = vec![energy];
    let mut tau = opts.step_size;
    let tau_cap = 10.0 * opts.step_size;
    let mut best = f64::INFINITY;
    let mut last_progress = 0;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    for iter in 0..opts.max_iterations {
        iterations = iter;
        let g = energy_gradient(ctx, &u)?;
        let (lambdas, residual) = residual_parts(&u, &g, real);
        if residual <= opts.tol_grad * residual_scale(&lambdas, c) {
            stop = StopReason::Converged;
            break;
        }
        if residual < best * 0.999 {
            best = residual;
            last_progress = iter;
        } else if iter - last_progress > opts.stagnation_window {
            stop = StopReason::Stagnated;
            break;
        }

        let dirs: Vec<ComplexField> = u
            .components()
            .iter()
            .zip(g.components())
            .zip(&lambdas)
            .map(|((uj, gj), lambda)| {
                let shift = opts.preconditioner_shift.unwrap_or((-lambda).clamp(1e-2, 1e2));
                let pg = precondition(ctx, gj, shift, real);
                let pu = precondition(ctx, uj, shift, real);
                let alpha = component_inner(&pg, uj) / component_inner(&pu, uj);
                let values = pg.values().iter().zip(pu.values()).map(|(a, b)| a - b * alpha).collect();
                ComplexField::new(ctx.grid().clone(), values)
            })
            .collect::<Result<_>>()?;
        let dir = FieldVector::new(dirs)?;

        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = u.axpy(-tau, &dir)?;
            if project(&mut trial, c, real).is_err() {
                tau *= opts.backtrack;
                continue;
            }
            let e = energy_hat(ctx, &trial)?;
            let scale = energy.abs().max(1.0);
            // Below roundoff the energy cannot rank iterates; fall back to the residual.
            let decreased = e <= energy + 1e-14 * scale
                || (e <= energy + ROUNDOFF_SLACK * scale
                    && residual_parts(&trial, &energy_gradient(ctx, &trial)?, real).1 < residual);
            if e.is_finite() && decreased {
                if e < -opts.divergence_bound {
                    return Err(NlsError::DivergentEnergy { energy: e, iteration: iter });
                }
                u = trial;
                energy = e;
                trace.push(e);
                tau = (tau * 1.1).min(tau_cap);
                accepted = true;
                break;
            }
            tau *= opts.backtrack;
        }
        if !accepted {
            stop = StopReason::LineSearchFailed;
            break;
        }
        iterations = iter + 1;
    }

    let mut u = if ctx.spec().x_dependent() { u } else { center(&u) };
    if real {
        project(&mut u, c, true)?;
    }
    let value = energy_hat(ctx, &u)?;
    if !value.is_finite() || value < -opts.divergence_bound {
        return Err(NlsError::DivergentEnergy {
            energy: value,
            iteration: iterations,
        });
    }
    let g = energy_gradient(ctx, &u)?;
    let (multipliers, residual) = residual_parts(&u, &g, real);
    let ratio = boundary_ratio(&u);
    if stop == StopReason::Converged && ratio > opts.localization_tol {
        stop = StopReason::NotLocalized;
    }
    Ok(GroundStateResult {
        u,
        value,
        multipliers,
        residual,
        iterations,
        converged: stop == StopReason::Converged,
        stop,
        energy_trace: trace,
        boundary_ratio: ratio,
        seed: opts.seed,
    })
}

/// Minimizes `E` over real nonnegative states in `S_c`.
pub fn minimize(ctx: &EnergyContext, c: &ConstraintSet, opts: &MinimizeOptions) -> Result<GroundStateResult> {
    let u = initial_state(ctx, opts)?;
    run_flow(ctx, c, opts, u, true)
}

/// Minimizes `E_hat` over complex states in `S_c`, starting from the
/// configured guess multiplied by a seeded random phase. A [`InitialGuess::Given`]
/// start is used as is.
pub fn complex_minimize(ctx: &EnergyContext, c: &ConstraintSet, opts: &MinimizeOptions) -> Result<GroundStateResult> {
    let mut z = initial_state(ctx, opts)?;
    if !matches!(opts.initial, InitialGuess::Given(_)) {
        randomize_phase(&mut z, opts.seed);
    }
    run_flow(ctx, c, opts, z, false)
}

/// `lambda_j = -<Laplace u_j + h_j u_j, u_j> / |u_j|_2^2`.
pub fn lagrange_multipliers(ctx: &EnergyContext, u: &FieldVector) -> Result<Vec<f64>> {
    let g = energy_gradient(ctx, u)?;
    u.components()
        .iter()
        .zip(g.components())
        .enumerate()
        .map(|(j, (uj, gj))| {
            let m = l2_norm_sq(uj);
            if m == 0.0 {
                Err(NlsError::ZeroMass(j))
            } else {
                Ok(component_inner(gj, uj) / m)
            }
        })
        .collect()
}

/// `Laplace u_j + h_j u_j + lambda_j u_j` for every component.
pub fn elliptic_defect(ctx: &EnergyContext, u: &FieldVector, lambdas: &[f64]) -> Result<FieldVector> {
    if lambdas.len() != u.ell() {
        return Err(NlsError::ComponentMismatch {
            expected: u.ell(),
            got: lambdas.len(),
        });
    }
    let g = energy_gradient(ctx, u)?;
    let comps = u
        .components()
        .iter()
        .zip(g.components())
        .zip(lambdas)
        .map(|((uj, gj), &l)| {
            let values = gj.values().iter().zip(uj.values()).map(|(gv, uv)| uv * l - gv).collect();
            ComplexField::new(ctx.grid().clone(), values)
        })
        .collect::<Result<_>>()?;
    FieldVector::new(comps)
}

/// `(sum_j |Laplace u_j + h_j u_j + lambda_j u_j|_2^2)^{1/2}`.
pub fn elliptic_residual(ctx: &EnergyContext, u: &FieldVector, lambdas: &[f64]) -> Result<f64> {
    let d = elliptic_defect(ctx, u, lambdas)?;
    Ok(real_inner(&d, &d)?.sqrt())
}

/// `u_j(x) exp(-i lambda_j t)`.
pub fn standing_wave(u: &FieldVector, lambdas: &[f64], t: f64) -> Result<FieldVector> {
    if lambdas.len() != u.ell() {
        return Err(NlsError::ComponentMismatch {
            expected: u.ell(),
            got: lambdas.len(),
        });
    }
    let comps = u
        .components()
        .iter()
        .zip(lambdas)
        .map(|(c, &l)| {
            let mut c = c.clone();
            c.scale(Complex64::from_polar(1.0, -l * t));
            c
        })
        .collect();
    FieldVector::new(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::energy_real;
    use crate::nonlinearity::{Family, NonlinearitySpec};

    fn ctx(family: Family, n: usize, l: f64) -> EnergyContext {
        EnergyContext::new(Grid::new(&[n], &[l]).unwrap(), NonlinearitySpec::builtin(family).unwrap()).unwrap()
    }

    fn sech_state(ctx: &EnergyContext, eta: f64) -> FieldVector {
        let c = ComplexField::from_fn(ctx.grid().clone(), |x| {
            Complex64::new(2f64.sqrt() * eta / (eta * x[0]).cosh(), 0.0)
        })
        .unwrap();
        FieldVector::new(vec![c]).unwrap()
    }

    #[test]
    fn constraint_validation() {
        assert!(ConstraintSet::new(vec![]).is_err());
        assert!(ConstraintSet::new(vec![1.0, 0.0]).is_err());
        assert!(ConstraintSet::new(vec![-1.0]).is_err());
        assert_eq!(ConstraintSet::new(vec![3.0, 4.0]).unwrap().c_sq(), 25.0);
    }

    #[test]
    fn exact_soliton_multiplier_and_residual() {
        let c = ctx(Family::cubic(), 512, 40.0);
        let u = sech_state(&c, 1.0);
        let l = lagrange_multipliers(&c, &u).unwrap();
        assert!((l[0] + 1.0).abs() < 1e-8);
        assert!(elliptic_residual(&c, &u, &[-1.0]).unwrap() < 1e-7);
        let zero = FieldVector::zeros(c.grid().clone(), 1);
        assert_eq!(elliptic_residual(&c, &zero, &[-1.0]).unwrap(), 0.0);
        assert!(matches!(lagrange_multipliers(&c, &zero), Err(NlsError::ZeroMass(0))));
    }

    #[test]
    fn scaled_soliton_multiplier() {
        let c = ctx(Family::cubic(), 512, 40.0);
        for eta in [0.8, 1.5] {
            let l = lagrange_multipliers(&c, &sech_state(&c, eta)).unwrap();
            assert!((l[0] + eta * eta).abs() < 1e-6, "eta {eta}: {}", l[0]);
        }
    }

    #[test]
    fn residual_is_orthogonal_to_state() {
        let c = ctx(Family::cubic(), 256, 30.0);
        let mut rng = random::rng(11);
        let u = random::smooth_state(c.grid(), 1, &mut rng);
        let u = FieldVector::new(vec![ComplexField::from_real(&u.component(0).real_part())]).unwrap();
        let l = lagrange_multipliers(&c, &u).unwrap();
        let d = elliptic_defect(&c, &u, &l).unwrap();
        assert!(elliptic_residual(&c, &u, &l).unwrap() > 1e-3);
        let ip = component_inner(d.component(0), u.component(0));
        assert!(ip.abs() < 1e-10, "{ip}");
    }

    #[test]
    fn standing_wave_phases() {
        let c = ctx(Family::cubic(), 256, 30.0);
        let u = sech_state(&c, 1.0);
        let w0 = standing_wave(&u, &[-1.0], 0.0).unwrap();
        assert_eq!(w0.component(0).values(), u.component(0).values());
        let w = standing_wave(&u, &[-1.0], 2.3).unwrap();
        let e0 = energy_real(&c, &u).unwrap();
        assert!((energy_hat(&c, &w).unwrap() - e0).abs() < 1e-12);
        let q = l2_norm_sq(w.component(0));
        assert!((q - l2_norm_sq(u.component(0))).abs() < 1e-13);
        let ratio = w.component(0).values()[100] / u.component(0).values()[100];
        assert!((ratio - Complex64::from_polar(1.0, 2.3)).norm() < 1e-14);
    }

    #[test]
    fn options_validation() {
        let bad = MinimizeOptions {
            step_size: 0.0,
            ..MinimizeOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = MinimizeOptions {
            backtrack: 1.0,
            ..MinimizeOptions::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn centering_moves_peak_to_origin() {
        let c = ctx(Family::cubic(), 256, 40.0);
        let shifted = FieldVector::new(vec![ComplexField::from_fn(c.grid().clone(), |x| {
            Complex64::new(1.0 / (x[0] - 3.3).cosh(), 0.0)
        })
        .unwrap()])
        .unwrap();
        let centered = center(&shifted);
        let target = sech_state(&c, 1.0);
        for (a, b) in centered.component(0).values().iter().zip(target.component(0).values()) {
            assert!((a * 2f64.sqrt() - b).norm() < 1e-6, "{a} {b}");
        }
        assert!(boundary_ratio(&centered) < 1e-8);
    }
}
