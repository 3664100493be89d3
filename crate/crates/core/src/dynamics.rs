//! Time integration of the coupled Schrödinger system by Strang splitting.
//!
//! One step is a half kinetic step `exp(-i |k|^2 dt / 2)` in Fourier space,
//! a pointwise phase rotation `exp(i dt h_j(x, |z|^2))` in physical space and
//! another half kinetic step. The nonlinear substep leaves every `|z_j|`
//! unchanged pointwise, so it is solved exactly and each charge is conserved
//! up to roundoff.

use std::io::Write;

use num_complex::Complex64;

use crate::energy::{charges, energy_hat, EnergyContext};
use crate::error::{NlsError, Result};
use crate::grid::{FieldVector, Grid};

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub final_time: f64,
    /// Monitors run every `sample_every` steps, and always at the last step.
    pub sample_every: usize,
    /// Snapshots are taken at the step nearest to each requested time.
    pub snapshot_times: Vec<f64>,
    /// Fraction of the mass allowed in the top third of the spectrum before
    /// the run is declared unresolved.
    pub resolution_tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            dt: 1e-3,
            final_time: 1.0,
            sample_every: 100,
            snapshot_times: Vec::new(),
            resolution_tol: 1e-6,
        }
    }
}

impl EvolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(NlsError::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.final_time.is_finite() && self.final_time >= self.dt) {
            return Err(NlsError::InvalidInput(format!(
                "final time {} must be at least dt = {}",
                self.final_time, self.dt
            )));
        }
        if self.sample_every == 0 {
            return Err(NlsError::InvalidInput("sample_every must be positive".into()));
        }
        if !(self.resolution_tol > 0.0) {
            return Err(NlsError::InvalidInput("resolution tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps: `final_time / dt` rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.final_time / self.dt).round().max(1.0) as usize
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub charges: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub snapshots: Vec<(f64, FieldVector)>,
    pub final_state: FieldVector,
}

impl Trajectory {
    /// Writes `t,Q_1,...,Q_l,E` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let ell = self.final_state.ell();
        let mut header = String::from("t");
        for j in 1..=ell {
            header.push_str(&format!(",Q_{j}"));
        }
        writeln!(out, "{header},E")?;
        for ((t, q), e) in self.times.iter().zip(&self.charges).zip(&self.energies) {
            let mut line = format!("{t:.16e}");
            for v in q {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(out, "{line},{e:.16e}")?;
        }
        Ok(())
    }
}

/// Precomputed Strang stepper for a fixed `dt` (any sign).
#[derive(Debug)]
pub struct Propagator<'a> {
    ctx: &'a EnergyContext,
    dt: f64,
    half_kinetic: Vec<Complex64>,
    full_kinetic: Vec<Complex64>,
}

impl<'a> Propagator<'a> {
    pub fn new(ctx: &'a EnergyContext, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(NlsError::InvalidInput(format!("dt must be finite and nonzero, got {dt}")));
        }
        let symbol = |factor: f64| -> Vec<Complex64> {
            ctx.k_sq()
                .iter()
                .map(|k2| Complex64::from_polar(1.0, -factor * k2 * dt))
                .collect()
        };
        Ok(Propagator {
            ctx,
            dt,
            half_kinetic: symbol(0.5),
            full_kinetic: symbol(1.0),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kinetic(&self, z: &mut FieldVector, symbol: &[Complex64]) {
        let grid: &Grid = self.ctx.grid();
        for c in z.components_mut() {
            let values = c.values_mut();
            grid.fft_forward(values);
            for (v, m) in values.iter_mut().zip(symbol) {
                *v *= m;
            }
            grid.fft_inverse(values);
        }
    }

    fn nonlinear(&self, z: &mut FieldVector) {
        let coeffs = self.ctx.coefficients(z);
        for (c, h) in z.components_mut().iter_mut().zip(coeffs) {
            for (v, hv) in c.values_mut().iter_mut().zip(h) {
                *v *= Complex64::from_polar(1.0, self.dt * hv);
            }
        }
    }

    /// Advances `z` by `steps` steps in place, fusing the half kinetic steps
    /// of consecutive steps. `time` is the start time, used in the error.
    pub fn advance(&self, z: &mut FieldVector, steps: usize, time: f64) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        self.kinetic(z, &self.half_kinetic);
        for n in 0..steps {
            self.nonlinear(z);
            if n + 1 < steps {
                self.kinetic(z, &self.full_kinetic);
            }
        }
        self.kinetic(z, &self.half_kinetic);
        if !z.is_finite() {
            return Err(NlsError::BlowUp {
                time: time + steps as f64 * self.dt,
                reason: "non-finite values".into(),
            });
        }
        Ok(())
    }
}

/// One Strang step of size `dt`; negative `dt` runs backwards in time.
pub fn step(ctx: &EnergyContext, z: &FieldVector, dt: f64) -> Result<FieldVector> {
    ctx.check_state(z)?;
    let prop = Propagator::new(ctx, dt)?;
    let mut out = z.clone();
    prop.advance(&mut out, 1, 0.0)?;
    Ok(out)
}

/// Share of the total mass carried by modes outside the lower two thirds of
/// every axis. Zero for the zero state.
pub fn high_mode_fraction(z: &FieldVector) -> f64 {
    let mask = z.grid().low_pass_mask();
    let (mut high, mut total) = (0.0, 0.0);
    for c in z.components() {
        for (v, keep) in c.spectrum().iter().zip(&mask) {
            let m = v.norm_sqr();
            total += m;
            if !keep {
                high += m;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

/// Evolves `z0` to `opts.final_time`, calling `monitor(t, state)` at every
/// sample time (including `t = 0`).
pub fn evolve_with<F>(ctx: &EnergyContext, z0: &FieldVector, opts: &EvolveOptions, mut monitor: F) -> Result<Trajectory>
where
    F: FnMut(f64, &FieldVector) -> Result<()>,
{
    opts.validate()?;
    ctx.check_state(z0)?;
    let prop = Propagator::new(ctx, opts.dt)?;
    let steps = opts.steps();
    let snapshot_steps: Vec<usize> = opts
        .snapshot_times
        .iter()
        .map(|t| ((t / opts.dt).round().max(0.0) as usize).min(steps))
        .collect();

    let mut z = z0.clone();
    let mut traj = Trajectory {
        times: Vec::new(),
        charges: Vec::new(),
        energies: Vec::new(),
        snapshots: Vec::new(),
        final_state: z0.clone(),
    };
    // Steps where the state must be materialized.
    let mut stops: Vec<usize> = (0..=steps).step_by(opts.sample_every).collect();
    stops.push(steps);
    stops.extend(&snapshot_steps);
    stops.sort_unstable();
    stops.dedup();

    let mut current = 0;
    for n in stops {
        prop.advance(&mut z, n - current, current as f64 * opts.dt)?;
        current = n;
        let t = n as f64 * opts.dt;
        for (i, &s) in snapshot_steps.iter().enumerate() {
            if s == n {
                traj.snapshots.push((opts.snapshot_times[i], z.clone()));
            }
        }
        if n % opts.sample_every == 0 || n == steps {
            let frac = high_mode_fraction(&z);
            if frac > opts.resolution_tol {
                return Err(NlsError::BlowUp {
                    time: t,
                    reason: format!("spectrum no longer resolved (high-mode fraction {frac:.3e})"),
                });
            }
            traj.times.push(t);
            traj.charges.push(charges(&z));
            traj.energies.push(energy_hat(ctx, &z)?);
            monitor(t, &z)?;
        }
    }
    traj.final_state = z;
    Ok(traj)
}

pub fn evolve(ctx: &EnergyContext, z0: &FieldVector, opts: &EvolveOptions) -> Result<Trajectory> {
    evolve_with(ctx, z0, opts, |_, _| Ok(()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservationReport {
    /// Per component `max_t |Q_j(t) - Q_j(0)| / Q_j(0)` (absolute when `Q_j(0) = 0`).
    pub charge_drift: Vec<f64>,
    /// `max_t |E(t) - E(0)| / |E(0)|` (absolute when `E(0) = 0`).
    pub energy_drift: f64,
}

impl ConservationReport {
    pub fn max_charge_drift(&self) -> f64 {
        self.charge_drift.iter().copied().fold(0.0, f64::max)
    }
}

pub fn conservation_report(traj: &Trajectory) -> Result<ConservationReport> {
    let (Some(q0), Some(&e0)) = (traj.charges.first(), traj.energies.first()) else {
        return Err(NlsError::InvalidInput("empty trajectory".into()));
    };
    let rel = |v: f64, base: f64| if base == 0.0 { v.abs() } else { v.abs() / base.abs() };
    let charge_drift = (0..q0.len())
        .map(|j| traj.charges.iter().map(|q| rel(q[j] - q0[j], q0[j])).fold(0.0, f64::max))
        .collect();
    let energy_drift = traj.energies.iter().map(|e| rel(e - e0, e0)).fold(0.0, f64::max);
    Ok(ConservationReport {
        charge_drift,
        energy_drift,
    })
}
