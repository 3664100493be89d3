use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use super::config::{Format, InitialPolicy, RunConfig};
use super::{Failure, Run, EXIT_NUMERICAL, EXIT_OK};
use crate::dump::{read_dump, write_dump};
use crate::dynamics::{conservation_report, evolve as evolve_state, EvolveOptions};
use crate::energy::{
    coercivity_check, coercivity_gamma, diamagnetic_defect, energy_gradient, energy_hat, modulus_energy, real_inner,
    EnergyContext,
};
use crate::error::NlsError;
use crate::grid::{derivative, modulus_partial, ComplexField, FieldVector};
use crate::groundstate::{complex_minimize, minimize, GroundStateResult};
use crate::hypotheses::check_hypotheses;
use crate::nonlinearity::{consistency_report, Sampler};
use crate::random;
use crate::stability::{delta_eps_sweep, OrbitProxy};

type Outcome = Result<u8, Failure>;

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| f17(*v)).collect::<Vec<_>>().join(",")
}

fn context(cfg: &RunConfig) -> Result<EnergyContext, Failure> {
    Ok(EnergyContext::new(cfg.grid()?, cfg.spec()?)?)
}

fn load_dump(path: &Path) -> Result<FieldVector, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_dump(BufReader::new(file))?)
}

/// Moves a dumped state onto the context grid, checking shape and extent.
fn adopt(ctx: &EnergyContext, z: FieldVector) -> Result<FieldVector, Failure> {
    let grid = ctx.grid();
    let same_extent = z
        .grid()
        .lengths()
        .iter()
        .zip(grid.lengths())
        .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs());
    if z.grid().points() != grid.points() || !same_extent {
        return Err(NlsError::GridMismatch.into());
    }
    if z.ell() != ctx.ell() {
        return Err(NlsError::ComponentMismatch {
            expected: ctx.ell(),
            got: z.ell(),
        }
        .into());
    }
    let comps = z
        .into_components()
        .into_iter()
        .map(|c| ComplexField::new(grid.clone(), c.into_values()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FieldVector::new(comps)?)
}

fn save_dump(run: &Run, path: &Path, z: &FieldVector) -> Result<(), Failure> {
    if run.cfg.output.wants(Format::Dump) {
        let mut out = BufWriter::new(File::create(path)?);
        write_dump(&mut out, z)?;
        out.flush()?;
    }
    Ok(())
}

fn save_csv(run: &Run, path: &Path, body: &[u8]) -> Result<(), Failure> {
    if run.cfg.output.wants(Format::Csv) {
        let mut bytes = run.header().into_bytes();
        bytes.extend_from_slice(body);
        fs::write(path, bytes)?;
    }
    Ok(())
}

fn save_text(run: &Run, path: &Path, body: &str) -> Result<(), Failure> {
    if run.cfg.output.wants(Format::Text) {
        run.write_text(path, body)?;
    }
    Ok(())
}

fn solve(run: &Run, ctx: &EnergyContext) -> Result<GroundStateResult, Failure> {
    let cfg = &run.cfg;
    let c = cfg.constraint()?;
    if c.ell() != ctx.ell() {
        return Err(NlsError::ComponentMismatch {
            expected: ctx.ell(),
            got: c.ell(),
        }
        .into());
    }
    let given = match (cfg.solver.initial, &cfg.solver.initial_dump) {
        (InitialPolicy::Given, Some(path)) => Some(adopt(ctx, load_dump(path)?)?),
        _ => None,
    };
    let opts = cfg.minimize_options(given)?;
    run.log(1, format!("minimizing with c = {:?}", c.c()));
    Ok(minimize(ctx, &c, &opts)?)
}

fn ground_metadata(r: &GroundStateResult) -> String {
    format!(
        "value = {}\nmultipliers = {}\nresidual = {}\niterations = {}\nconverged = {}\nstop = {:?}\nboundary_ratio = {}\nseed = {}\n",
        f17(r.value),
        join(&r.multipliers),
        f17(r.residual),
        r.iterations,
        r.converged,
        r.stop,
        f17(r.boundary_ratio),
        r.seed
    )
}

pub(super) fn groundstate(run: &Run) -> Outcome {
    let ctx = context(&run.cfg)?;
    let r = solve(run, &ctx)?;
    let dir = run.dir("")?;
    save_dump(run, &dir.join("state.dump"), &r.u)?;
    save_text(run, &dir.join("meta.txt"), &ground_metadata(&r))?;
    let mut trace = String::from("iteration,energy\n");
    for (i, e) in r.energy_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{}", f17(*e));
    }
    save_csv(run, &dir.join("energy_trace.csv"), trace.as_bytes())?;

    let verdict = if r.converged {
        "converged".to_string()
    } else {
        format!("not converged ({:?}): the infimum was not attained on this run", r.stop)
    };
    let summary = format!(
        "ground state: {verdict}\nI_c = {:.12}\nlambda = {:?}\nresidual = {:.3e} after {} iterations\n",
        r.value, r.multipliers, r.residual, r.iterations
    );
    print!("{summary}");
    save_text(run, &dir.join("summary.txt"), &summary)?;
    Ok(if r.converged { EXIT_OK } else { EXIT_NUMERICAL })
}

pub(super) fn evolve(run: &Run, initial: &Path) -> Outcome {
    let ctx = context(&run.cfg)?;
    let z0 = adopt(&ctx, load_dump(initial)?)?;
    let opts = run.cfg.dynamics.options();
    let dir = run.dir("")?;
    run.log(1, format!("evolving {} steps of dt = {}", opts.steps(), opts.dt));
    match evolve_state(&ctx, &z0, &opts) {
        Ok(traj) => {
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            save_csv(run, &dir.join("trajectory.csv"), &csv)?;
            if !traj.snapshots.is_empty() {
                let snaps = run.dir("snapshots")?;
                for (i, (_, z)) in traj.snapshots.iter().enumerate() {
                    save_dump(run, &snaps.join(format!("snapshot_{i:03}.dump")), z)?;
                }
            }
            save_dump(run, &dir.join("final.dump"), &traj.final_state)?;
            let report = conservation_report(&traj)?;
            let summary = format!(
                "evolution completed to t = {}\ncharge drift = {}\nenergy drift = {:.3e}\n",
                f17(*traj.times.last().unwrap_or(&0.0)),
                report
                    .charge_drift
                    .iter()
                    .map(|d| format!("{d:.3e}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                report.energy_drift
            );
            print!("{summary}");
            save_text(run, &dir.join("summary.txt"), &summary)?;
            Ok(EXIT_OK)
        }
        Err(NlsError::BlowUp { time, reason }) => {
            let summary = format!("blow-up at t = {}: {reason}\n", f17(time));
            print!("{summary}");
            save_text(run, &dir.join("summary.txt"), &summary)?;
            Ok(EXIT_NUMERICAL)
        }
        Err(e) => Err(e.into()),
    }
}

pub(super) fn stability(run: &Run) -> Outcome {
    let cfg = &run.cfg;
    let st = cfg
        .stability
        .as_ref()
        .ok_or_else(|| Failure::Usage("stability needs a [stability] block".into()))?;
    let ctx = context(cfg)?;
    let gs = solve(run, &ctx)?;
    if !gs.converged {
        let summary = format!(
            "ground state did not converge ({:?}, I_c estimate {:.6e} after {} iterations); no orbit to test\n",
            gs.stop, gs.value, gs.iterations
        );
        print!("{summary}");
        save_text(run, &run.dir("")?.join("summary.txt"), &summary)?;
        return Ok(EXIT_NUMERICAL);
    }
    let proxy = OrbitProxy::new(&ctx, &gs, &cfg.constraint()?)?;
    let opts = EvolveOptions {
        final_time: st.final_time,
        ..cfg.dynamics.options()
    };
    run.log(1, format!("{} runs to T = {}", st.deltas.len() * st.seeds.len(), st.final_time));
    let sweep = delta_eps_sweep(&ctx, &proxy, &st.deltas, &st.seeds, &opts)?;

    let dir = run.dir("")?;
    let runs_dir = run.dir("runs")?;
    let mut table = Vec::new();
    sweep.write_table(&mut table)?;
    save_csv(run, &dir.join("sweep.csv"), &table)?;
    let mut summary = String::from(
        "distance to the symmetry orbit of the reference minimizer (an upper bound for the distance to the set of minimizers)\n",
    );
    let _ = writeln!(summary, "I_c = {}", f17(gs.value));
    let mut blew_up = false;
    for (i, row) in sweep.rows.iter().enumerate() {
        let _ = writeln!(summary, "delta = {} epsilon = {}", f17(row.delta), f17(row.epsilon));
        for r in &row.runs {
            let mut csv = Vec::new();
            r.write_csv(&mut csv)?;
            save_csv(run, &runs_dir.join(format!("delta{i:02}_seed{}.csv", r.seed)), &csv)?;
            let _ = writeln!(summary, "  {}", r.summary());
            blew_up |= r.blow_up.is_some();
        }
    }
    let _ = writeln!(summary, "monotone = {}", sweep.monotone());
    if blew_up {
        summary.push_str("blow-up detected in at least one run\n");
    }
    print!("{summary}");
    save_text(run, &dir.join("summary.txt"), &summary)?;
    Ok(if blew_up { EXIT_NUMERICAL } else { EXIT_OK })
}

pub(super) fn check(run: &Run) -> Outcome {
    let cfg = &run.cfg;
    let spec = cfg.spec()?;
    let n_dims = cfg.grid.points.len();
    let infinity = cfg.infinity_spec()?;
    let requested = cfg.requested_hypotheses(infinity.is_some())?;
    if let Some(h) = requested.iter().find(|h| h.needs_infinity()) {
        if infinity.is_none() {
            return Err(NlsError::MissingInfinitySpec(h.to_string()).into());
        }
    }
    let sampler = Sampler {
        seed: run.seed,
        samples: cfg.check.samples,
        n_dims,
        componentwise_theta: cfg.check.componentwise_theta,
        ..Sampler::default()
    };
    let dir = run.dir("")?;
    let consistency = consistency_report(&spec, &sampler, cfg.check.tol);
    let mut text = format!(
        "nonlinearity {} ({} components)\nconsistency: {} (max deviation {:.3e}, tol {:.1e}, {} samples)\n",
        spec.name(),
        spec.ell(),
        if consistency.passed { "pass" } else { "FAIL" },
        consistency.max_deviation,
        consistency.tol,
        consistency.samples
    );
    if let Some((x, s, j)) = &consistency.witness {
        let _ = writeln!(text, "  worst point: x = {x:?}, s = {s:?}, component {}", j + 1);
    }
    if !consistency.passed {
        print!("{text}");
        save_text(run, &dir.join("check.txt"), &text)?;
        return Ok(EXIT_NUMERICAL);
    }

    let report = check_hypotheses(&spec, &cfg.check.params, &sampler, infinity.as_ref(), &requested)?;
    let mut csv = String::from("hypothesis,status,margin,samples\n");
    for e in &report.entries {
        let margin = e.witness.as_ref().map_or(String::from("nan"), |w| f17(w.margin));
        let _ = writeln!(csv, "{},{},{margin},{}", e.id, e.status, e.samples);
        let _ = write!(text, "{:<14} {:<15}", e.id.to_string(), e.status.to_string());
        if let Some(w) = &e.witness {
            let _ = write!(text, " margin {:.3e} at s = {:?}", w.margin, w.s);
        }
        if !e.note.is_empty() {
            let _ = write!(text, " ({})", e.note);
        }
        text.push('\n');
    }
    print!("{text}");
    save_text(run, &dir.join("check.txt"), &text)?;
    save_csv(run, &dir.join("check.csv"), csv.as_bytes())?;
    Ok(EXIT_OK)
}

struct DiagRow {
    name: &'static str,
    status: &'static str,
    measured: f64,
    threshold: f64,
}

fn row(name: &'static str, ok: bool, measured: f64, threshold: f64) -> DiagRow {
    DiagRow {
        name,
        status: if ok { "pass" } else { "fail" },
        measured,
        threshold,
    }
}

pub(super) fn diag(run: &Run) -> Outcome {
    let cfg = &run.cfg;
    let ctx = context(cfg)?;
    let grid = ctx.grid().clone();
    let ell = ctx.ell();
    let mut rows = Vec::new();
    let states: Vec<FieldVector> = (0..cfg.diag.random_states as u64)
        .map(|i| random::smooth_state(&grid, ell, &mut random::rng(run.seed.wrapping_add(i))))
        .collect();

    let ell1 = cfg.check.params.ell1;
    match coercivity_gamma(ell1, grid.n_dims()) {
        Ok(gamma) => rows.push(DiagRow {
            name: "coercivity_gamma",
            status: "info",
            measured: gamma,
            threshold: 2.0,
        }),
        Err(_) => rows.push(DiagRow {
            name: "coercivity_gamma",
            status: "not-applicable",
            measured: f64::NAN,
            threshold: 2.0,
        }),
    }

    run.log(1, "diamagnetic identity");
    let (mut worst_rel, mut lowest) = (0.0f64, f64::INFINITY);
    let mut worst_order = f64::NEG_INFINITY;
    for z in &states {
        let d = diamagnetic_defect(&ctx, z)?;
        worst_rel = worst_rel.max(d.relative_discrepancy());
        lowest = lowest.min(d.direct).min(d.formula);
        worst_order = worst_order.max(modulus_energy(&ctx, z)? - energy_hat(&ctx, z)?);
    }
    rows.push(row("diamagnetic_two_way", worst_rel <= 1e-8, worst_rel, 1e-8));
    rows.push(row("diamagnetic_nonnegative", lowest >= -1e-10, lowest, -1e-10));
    rows.push(row("modulus_energy_below", worst_order <= 1e-10, worst_order, 1e-10));

    run.log(1, "modulus derivative oracle");
    let l0 = grid.lengths()[0];
    let k = 2.0 * std::f64::consts::PI * 3.0 / l0;
    let width: Vec<f64> = grid.lengths().iter().map(|l| l / 16.0).collect();
    let w = ComplexField::from_fn(grid.clone(), |x| {
        let r2: f64 = x.iter().zip(&width).map(|(xi, wi)| (xi / wi).powi(2)).sum();
        Complex64::new((-0.5 * r2).exp(), 0.0)
    })?;
    let z = ComplexField::from_fn(grid.clone(), |x| {
        let r2: f64 = x.iter().zip(&width).map(|(xi, wi)| (xi / wi).powi(2)).sum();
        Complex64::from_polar((-0.5 * r2).exp(), k * x[0])
    })?;
    let mut oracle_err: f64 = 0.0;
    for axis in 0..grid.n_dims() {
        let m = modulus_partial(&z, axis);
        let dw = derivative(&w, axis);
        for ((mv, dv), wv) in m.values().iter().zip(dw.values()).zip(w.values()) {
            if wv.re > 1e-6 {
                oracle_err = oracle_err.max((mv - dv.re).abs());
            }
        }
    }
    rows.push(row("modulus_partial_phase_removal", oracle_err <= 1e-10, oracle_err, 1e-10));

    run.log(1, "gradient finite differences");
    let mut rng = random::rng(run.seed ^ 0x9e37_79b9);
    let mut grad_err: f64 = 0.0;
    for z in states.iter().take(3) {
        let dir = random::smooth_state(&grid, ell, &mut rng);
        let eps = 1e-5;
        let fd = (energy_hat(&ctx, &z.axpy(eps, &dir)?)? - energy_hat(&ctx, &z.axpy(-eps, &dir)?)?) / (2.0 * eps);
        let exact = real_inner(&energy_gradient(&ctx, z)?, &dir)?;
        grad_err = grad_err.max((fd - exact).abs() / exact.abs().max(1e-12));
    }
    rows.push(row("gradient_finite_difference", grad_err <= 1e-6, grad_err, 1e-6));

    if let Ok(gamma) = coercivity_gamma(ell1, grid.n_dims()) {
        let mut samples = Vec::new();
        for z in &states {
            for s in [0.5, 1.0, 2.0] {
                let comps = z
                    .components()
                    .iter()
                    .map(|c| {
                        let mut c = c.clone();
                        c.scale(Complex64::new(s, 0.0));
                        c
                    })
                    .collect();
                samples.push(FieldVector::new(comps)?);
            }
        }
        let report = coercivity_check(&ctx, &samples, ell1)?;
        rows.push(DiagRow {
            name: "coercivity_constant",
            status: if report.growth_flag { "flag" } else { "info" },
            measured: report.constant,
            threshold: gamma,
        });
    }

    if cfg.constraint.is_some() {
        run.log(1, "real and complex minimization");
        let c = cfg.constraint()?;
        let real = minimize(&ctx, &c, &cfg.minimize_options(None)?)?;
        let mut gap: f64 = 0.0;
        for &seed in &cfg.diag.complex_seeds {
            let opts = crate::groundstate::MinimizeOptions {
                seed,
                ..cfg.minimize_options(None)?
            };
            let complex = complex_minimize(&ctx, &c, &opts)?;
            gap = gap.max((complex.value - real.value).abs());
        }
        rows.push(row("real_equals_complex_infimum", real.converged && gap <= 1e-5, gap, 1e-5));
    }

    let mut csv = String::from("check,status,measured,threshold\n");
    let mut text = String::new();
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.name, r.status, f17(r.measured), f17(r.threshold));
        let _ = writeln!(text, "{:<32} {:<15} {:.6e} (threshold {:.1e})", r.name, r.status, r.measured, r.threshold);
    }
    let failed = rows.iter().any(|r| r.status == "fail");
    print!("{text}");
    let dir = run.dir("")?;
    save_text(run, &dir.join("diag.txt"), &text)?;
    save_csv(run, &dir.join("diag.csv"), csv.as_bytes())?;
    Ok(if failed { EXIT_NUMERICAL } else { EXIT_OK })
}
