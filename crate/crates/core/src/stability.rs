//! Distance to the symmetry orbit of a ground state, and perturb-and-evolve
//! stability experiments.
//!
//! The orbit of a reference minimizer `w` is generated by one constant phase
//! per component and, when the nonlinearity does not depend on `x`, by
//! spatial translations. Distances are measured in H^1. Since the true set of
//! minimizers may be larger than this orbit, every measured distance is an
//! upper bound for the distance to the set of minimizers.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{conservation_report, evolve_with, EvolveOptions};
use crate::energy::{charges, EnergyContext};
use crate::error::{NlsError, Result};
use crate::grid::{h1_norm_sq, ComplexField, FieldVector};
use crate::groundstate::{ConstraintSet, GroundStateResult};
use crate::random;

/// Relative tolerance on the reference charges.
const CHARGE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct OrbitProxy {
    w: FieldVector,
    translations: bool,
    /// Spectra of the reference components.
    w_spec: Vec<Vec<Complex64>>,
    /// H^1 weight `1 + |k|^2` (differentiation symbol).
    weight: Vec<f64>,
    /// True wavenumbers per axis, flattened per point.
    k_vectors: Vec<f64>,
}

/// Optimal symmetry parameters for one state.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitFit {
    pub distance: f64,
    /// Translation `y` applied to the reference, `w(x - y)`.
    pub shift: Vec<f64>,
    /// Per-component phases `theta_j`.
    pub phases: Vec<f64>,
}

impl OrbitProxy {
    /// Builds the orbit of a converged ground state.
    pub fn new(ctx: &EnergyContext, ground: &GroundStateResult, c: &ConstraintSet) -> Result<Self> {
        if !ground.converged {
            return Err(NlsError::EmptyOrbit(format!(
                "minimization did not converge ({:?}), the orbit is empty",
                ground.stop
            )));
        }
        Self::from_state(ctx, ground.u.clone(), c)
    }

    /// Builds the orbit of an arbitrary reference state with the given charges.
    pub fn from_state(ctx: &EnergyContext, w: FieldVector, c: &ConstraintSet) -> Result<Self> {
        ctx.check_state(&w)?;
        if c.ell() != w.ell() {
            return Err(NlsError::ComponentMismatch {
                expected: w.ell(),
                got: c.ell(),
            });
        }
        for (q, cj) in charges(&w).iter().zip(c.c()) {
            let target = cj * cj;
            if (q - target).abs() > CHARGE_TOL * target {
                return Err(NlsError::EmptyOrbit(format!(
                    "reference charge {q} does not match c_j^2 = {target}"
                )));
            }
        }
        let grid = w.grid().clone();
        let d = grid.n_dims();
        let mut k_vectors = vec![0.0; grid.len() * d];
        let mut idx = [0usize; 3];
        for p in 0..grid.len() {
            grid.multi_index(p, &mut idx[..d]);
            for a in 0..d {
                k_vectors[p * d + a] = grid.wavenumbers(a)[idx[a]];
            }
        }
        Ok(OrbitProxy {
            w_spec: w.components().iter().map(ComplexField::spectrum).collect(),
            weight: grid.k_squared().iter().map(|k2| 1.0 + k2).collect(),
            translations: !ctx.spec().x_dependent(),
            k_vectors,
            w,
        })
    }

    pub fn reference(&self) -> &FieldVector {
        &self.w
    }

    pub fn has_translations(&self) -> bool {
        self.translations
    }

    /// Element `e^{i theta_j} w_j(x - y)` of the orbit.
    pub fn orbit_point(&self, shift: &[f64], phases: &[f64]) -> Result<FieldVector> {
        let grid = self.w.grid().clone();
        if shift.len() != grid.n_dims() || phases.len() != self.w.ell() {
            return Err(NlsError::InvalidInput("symmetry parameters have the wrong length".into()));
        }
        let comps = self
            .w_spec
            .iter()
            .zip(phases)
            .map(|(spec, &theta)| {
                let spec = self.shifted(spec, shift, Complex64::from_polar(1.0, theta));
                ComplexField::from_spectrum(grid.clone(), spec)
            })
            .collect();
        FieldVector::new(comps)
    }

    fn shifted(&self, spec: &[Complex64], shift: &[f64], factor: Complex64) -> Vec<Complex64> {
        let d = shift.len();
        spec.iter()
            .enumerate()
            .map(|(p, v)| {
                let ky: f64 = (0..d).map(|a| self.k_vectors[p * d + a] * shift[a]).sum();
                v * factor * Complex64::from_polar(1.0, -ky)
            })
            .collect()
    }

    /// `A_j(k) = (1 + |k|^2) zhat_j(k) conj(what_j(k))`; the H^1 pairing of
    /// `z_j` with `w_j(. - y)` is `sum_k A_j(k) e^{i k y}` times the Parseval factor.
    fn cross_spectra(&self, z_spec: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        z_spec
            .iter()
            .zip(&self.w_spec)
            .map(|(zs, ws)| {
                zs.iter()
                    .zip(ws)
                    .zip(&self.weight)
                    .map(|((a, b), w)| a * b.conj() * w)
                    .collect()
            })
            .collect()
    }

    /// Objective `sum_j |C_j(y)|` with gradient and Hessian in `y`.
    fn objective(&self, cross: &[Vec<Complex64>], y: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let d = y.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for a_j in cross {
            let mut c = Complex64::new(0.0, 0.0);
            let mut dc = vec![Complex64::new(0.0, 0.0); d];
            let mut ddc = vec![Complex64::new(0.0, 0.0); d * d];
            for (p, a) in a_j.iter().enumerate() {
                let k = &self.k_vectors[p * d..(p + 1) * d];
                let ky: f64 = k.iter().zip(y).map(|(ka, ya)| ka * ya).sum();
                let term = a * Complex64::from_polar(1.0, ky);
                c += term;
                for r in 0..d {
                    dc[r] += term * Complex64::new(0.0, k[r]);
                    for s in 0..d {
                        ddc[r * d + s] -= term * (k[r] * k[s]);
                    }
                }
            }
            let m = c.norm();
            if m == 0.0 {
                continue;
            }
            value += m;
            for r in 0..d {
                let gr = (c.conj() * dc[r]).re / m;
                grad[r] += gr;
                for s in 0..d {
                    let gs = (c.conj() * dc[s]).re / m;
                    hess[r * d + s] += ((dc[r].conj() * dc[s]).re + (c.conj() * ddc[r * d + s]).re) / m - gr * gs / m;
                }
            }
        }
        (value, grad, hess)
    }

    fn fit_at(&self, z_spec: &[Vec<Complex64>], cross: &[Vec<Complex64>], y: &[f64]) -> OrbitFit {
        let d = y.len();
        let grid = self.w.grid();
        let mut total = 0.0;
        let mut phases = Vec::with_capacity(cross.len());
        for ((zs, ws), a_j) in z_spec.iter().zip(&self.w_spec).zip(cross) {
            let c: Complex64 = a_j
                .iter()
                .enumerate()
                .map(|(p, a)| {
                    let ky: f64 = (0..d).map(|r| self.k_vectors[p * d + r] * y[r]).sum();
                    a * Complex64::from_polar(1.0, ky)
                })
                .sum();
            let theta = if c.norm() == 0.0 { 0.0 } else { c.arg() };
            phases.push(theta);
            let moved = self.shifted(ws, y, Complex64::from_polar(1.0, theta));
            total += zs
                .iter()
                .zip(&moved)
                .zip(&self.weight)
                .map(|((a, b), w)| (a - b).norm_sqr() * w)
                .sum::<f64>();
        }
        OrbitFit {
            distance: (total * grid.parseval_factor()).sqrt(),
            shift: y.to_vec(),
            phases,
        }
    }

    /// Best phases and translation for `z`.
    pub fn fit(&self, z: &FieldVector) -> Result<OrbitFit> {
        self.w.check_compatible(z)?;
        let grid = self.w.grid().clone();
        let d = grid.n_dims();
        let z_spec: Vec<Vec<Complex64>> = z.components().iter().map(ComplexField::spectrum).collect();
        let cross = self.cross_spectra(&z_spec);
        let origin = vec![0.0; d];
        if !self.translations {
            return Ok(self.fit_at(&z_spec, &cross, &origin));
        }

        // Coarse search over grid translations: inverse transforms of A_j give
        // C_j at every grid shift at once.
        let n = grid.len();
        let mut score = vec![0.0; n];
        for a_j in &cross {
            let mut buf = a_j.clone();
            grid.fft_inverse(&mut buf);
            for (s, v) in score.iter_mut().zip(&buf) {
                *s += v.norm();
            }
        }
        let best = (0..n).fold(0, |b, p| if score[p] > score[b] { p } else { b });
        let mut idx = [0usize; 3];
        grid.multi_index(best, &mut idx[..d]);
        let start: Vec<f64> = (0..d)
            .map(|a| {
                let (m, na) = (idx[a] as f64, grid.points()[a] as f64);
                let m = if m > na / 2.0 { m - na } else { m };
                m * grid.spacings()[a]
            })
            .collect();
        let coarse = self.fit_at(&z_spec, &cross, &start);

        // Newton refinement of the translation, kept within one cell.
        let mut y = start.clone();
        for _ in 0..20 {
            let (_, g, h) = self.objective(&cross, &y);
            let Some(step) = solve_small(&h, &g, d) else { break };
            let next: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a - b).collect();
            let inside = (0..d).all(|a| (next[a] - start[a]).abs() <= grid.spacings()[a]);
            if !inside || next == y {
                break;
            }
            y = next;
            if step.iter().all(|s| s.abs() < 1e-15) {
                break;
            }
        }
        let refined = self.fit_at(&z_spec, &cross, &y);
        let at_origin = self.fit_at(&z_spec, &cross, &origin);
        let best = [coarse, refined, at_origin]
            .into_iter()
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
            .expect("three candidates");
        Ok(best)
    }

    /// `inf` over the symmetry group of the H^1 distance from `z` to the orbit.
    pub fn distance(&self, z: &FieldVector) -> Result<f64> {
        Ok(self.fit(z)?.distance)
    }
}

/// Solves the `d x d` system `h x = g` for `d <= 3`; `None` when `h` is not
/// negative definite (the objective is maximized).
fn solve_small(h: &[f64], g: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = (0..d).map(|r| {
        let mut row = h[r * d..(r + 1) * d].to_vec();
        row.push(g[r]);
        row
    }).collect();
    for col in 0..d {
        let pivot = (col..d).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        m.swap(col, pivot);
        if m[col][col] >= 0.0 || !m[col][col].is_finite() {
            return None;
        }
        for r in 0..d {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=d {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some((0..d).map(|r| m[r][d] / m[r][r]).collect())
}

/// Distance from `z` to the orbit of the proxy's reference state.
pub fn orbit_distance(proxy: &OrbitProxy, z: &FieldVector) -> Result<f64> {
    proxy.distance(z)
}

/// Seeded low-pass perturbation direction with unit H^1 norm.
pub fn perturbation(grid: &std::sync::Arc<crate::grid::Grid>, ell: usize, seed: u64) -> FieldVector {
    let mut rng = random::rng(seed);
    let comps: Vec<ComplexField> = (0..ell).map(|_| random::low_pass_field(grid, &mut rng, Some(2.0))).collect();
    let norm: f64 = comps.iter().map(h1_norm_sq).sum::<f64>().sqrt();
    let comps = comps
        .into_iter()
        .map(|mut c| {
            c.scale(Complex64::new(1.0 / norm, 0.0));
            c
        })
        .collect();
    FieldVector::new(comps).expect("shared grid")
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub delta: f64,
    pub seed: u64,
    /// `(t, distance to the orbit)` at every monitor time.
    pub series: Vec<(f64, f64)>,
    pub sup_distance: f64,
    /// `(time, reason)` when the run stopped early.
    pub blow_up: Option<(f64, String)>,
    pub max_charge_drift: f64,
    pub energy_drift: f64,
    pub dt: f64,
    pub final_time: f64,
    pub points: Vec<usize>,
}

impl StabilityReport {
    /// Writes `t,distance` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,distance")?;
        for (t, d) in &self.series {
            writeln!(out, "{t:.16e},{d:.16e}")?;
        }
        Ok(())
    }

    /// One-line `key=value` summary.
    pub fn summary(&self) -> String {
        let blow_up = match &self.blow_up {
            Some((t, reason)) => format!("{t:.16e} ({reason})"),
            None => "none".into(),
        };
        format!(
            "delta={:.16e} seed={} sup_distance={:.16e} dt={:.16e} T={:.16e} points={:?} charge_drift={:.3e} energy_drift={:.3e} blow_up={} measured=distance to the symmetry orbit of the reference minimizer (upper bound)",
            self.delta,
            self.seed,
            self.sup_distance,
            self.dt,
            self.final_time,
            self.points,
            self.max_charge_drift,
            self.energy_drift,
            blow_up
        )
    }
}

/// Evolves `w + delta g / |g|_H` and tracks its distance to the orbit.
pub fn stability_experiment(
    ctx: &EnergyContext,
    proxy: &OrbitProxy,
    delta: f64,
    seed: u64,
    opts: &EvolveOptions,
) -> Result<StabilityReport> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(NlsError::InvalidInput(format!("delta must be nonnegative, got {delta}")));
    }
    let w = proxy.reference();
    let g = perturbation(w.grid(), w.ell(), seed);
    let z0 = w.axpy(delta, &g)?;
    let mut series = Vec::new();
    let run = evolve_with(ctx, &z0, opts, |t, z| {
        series.push((t, proxy.distance(z)?));
        Ok(())
    });
    let (blow_up, max_charge_drift, energy_drift) = match run {
        Ok(traj) => {
            let report = conservation_report(&traj)?;
            (None, report.max_charge_drift(), report.energy_drift)
        }
        Err(NlsError::BlowUp { time, reason }) => (Some((time, reason)), f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    let sup_distance = if blow_up.is_some() {
        f64::INFINITY
    } else {
        series.iter().map(|s| s.1).fold(0.0, f64::max)
    };
    Ok(StabilityReport {
        delta,
        seed,
        series,
        sup_distance,
        blow_up,
        max_charge_drift,
        energy_drift,
        dt: opts.dt,
        final_time: opts.steps() as f64 * opts.dt,
        points: w.grid().points().to_vec(),
    })
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub delta: f64,
    /// Max over seeds of the sup distance.
    pub epsilon: f64,
    pub runs: Vec<StabilityReport>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `epsilon` is nondecreasing along increasing `delta`.
    pub fn monotone(&self) -> bool {
        let mut rows: Vec<&SweepRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        rows.windows(2).all(|w| w[1].epsilon >= w[0].epsilon)
    }

    /// Two-column `delta,epsilon` table.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "delta,epsilon")?;
        for row in &self.rows {
            writeln!(out, "{:.16e},{:.16e}", row.delta, row.epsilon)?;
        }
        Ok(())
    }
}

/// Runs every `(delta, seed)` pair, in parallel, and tabulates `epsilon(delta)`.
pub fn delta_eps_sweep(
    ctx: &EnergyContext,
    proxy: &OrbitProxy,
    deltas: &[f64],
    seeds: &[u64],
    opts: &EvolveOptions,
) -> Result<SweepResult> {
    if deltas.is_empty() || seeds.is_empty() {
        return Err(NlsError::InvalidInput("a sweep needs at least one delta and one seed".into()));
    }
    if let Some(bad) = deltas.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(NlsError::InvalidInput(format!("delta must be nonnegative, got {bad}")));
    }
    opts.validate()?;
    let jobs: Vec<(f64, u64)> = deltas.iter().flat_map(|&d| seeds.iter().map(move |&s| (d, s))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(d, s)| stability_experiment(ctx, proxy, d, s, opts))
        .collect::<Result<Vec<_>>>()?;
    let rows = reports
        .chunks(seeds.len())
        .zip(deltas)
        .map(|(runs, &delta)| SweepRow {
            delta,
            epsilon: runs.iter().map(|r| r.sup_distance).fold(0.0, f64::max),
            runs: runs.to_vec(),
        })
        .collect();
    Ok(SweepResult { rows })
}
