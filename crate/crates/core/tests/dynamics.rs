use nlsorbit::dynamics::{conservation_report, evolve, step, EvolveOptions, Propagator};
use nlsorbit::energy::EnergyContext;
use nlsorbit::grid::h1_distance;
use nlsorbit::groundstate::{minimize, standing_wave, ConstraintSet, GroundStateResult, MinimizeOptions};
use nlsorbit::{ComplexField, Family, FieldVector, Grid, NonlinearitySpec};
use num_complex::Complex64;

fn context(family: Family, n: usize, l: f64) -> EnergyContext {
    EnergyContext::new(Grid::new(&[n], &[l]).unwrap(), NonlinearitySpec::builtin(family).unwrap()).unwrap()
}

fn soliton(ctx: &EnergyContext) -> GroundStateResult {
    let r = minimize(ctx, &ConstraintSet::new(vec![2.0]).unwrap(), &MinimizeOptions::default()).unwrap();
    assert!(r.converged);
    r
}

fn rotate(z: &FieldVector, theta: f64) -> FieldVector {
    let comps = z
        .components()
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.scale(Complex64::from_polar(1.0, theta));
            c
        })
        .collect();
    FieldVector::new(comps).unwrap()
}

/// Global phase removed: distance to `e^{i theta} w` minimized over theta in closed form.
fn distance_mod_phase(z: &FieldVector, w: &FieldVector) -> f64 {
    let pairing: Complex64 = z
        .components()
        .iter()
        .zip(w.components())
        .map(|(a, b)| {
            let (sa, sb) = (a.spectrum(), b.spectrum());
            let k2 = a.grid().k_squared();
            sa.iter().zip(&sb).zip(&k2).map(|((x, y), k)| x * y.conj() * (1.0 + k)).sum::<Complex64>()
        })
        .sum();
    h1_distance(z, &rotate(w, pairing.arg())).unwrap()
}

#[test]
fn soliton_evolves_as_standing_wave() {
    let ctx = context(Family::cubic(), 512, 40.0);
    let gs = soliton(&ctx);
    let opts = EvolveOptions {
        dt: 1e-3,
        final_time: 10.0,
        sample_every: 500,
        ..Default::default()
    };
    let traj = evolve(&ctx, &gs.u, &opts).unwrap();
    let exact = standing_wave(&gs.u, &gs.multipliers, 10.0).unwrap();
    let d = distance_mod_phase(&traj.final_state, &exact);
    assert!(d < 1e-4, "{d}");
    let report = conservation_report(&traj).unwrap();
    assert!(report.max_charge_drift() <= 1e-12);
    assert!(report.energy_drift <= 1e-8);
}

#[test]
fn energy_drift_is_at_least_second_order() {
    let ctx = context(Family::cubic(), 512, 40.0);
    let gs = soliton(&ctx);
    let drift = |dt: f64| {
        let opts = EvolveOptions {
            dt,
            final_time: 10.0,
            sample_every: 10,
            ..Default::default()
        };
        conservation_report(&evolve(&ctx, &gs.u, &opts).unwrap()).unwrap().energy_drift
    };
    let (coarse, fine) = (drift(2e-2), drift(1e-2));
    assert!(coarse / fine >= 3.5, "{coarse:e} {fine:e}");
}

fn gaussian(ctx: &EnergyContext, center: f64, width: f64, kick: f64) -> ComplexField {
    ComplexField::from_fn(ctx.grid().clone(), |x| {
        Complex64::from_polar((-(x[0] - center).powi(2) / (2.0 * width * width)).exp(), kick * x[0])
    })
    .unwrap()
}

#[test]
fn free_flow_conserves_exactly() {
    let ctx = context(Family::Zero { ell: 1 }, 256, 40.0);
    let z = FieldVector::new(vec![gaussian(&ctx, 1.0, 1.5, 0.8)]).unwrap();
    let opts = EvolveOptions {
        dt: 1e-2,
        final_time: 5.0,
        sample_every: 25,
        ..Default::default()
    };
    let report = conservation_report(&evolve(&ctx, &z, &opts).unwrap()).unwrap();
    assert!(report.max_charge_drift() <= 1e-12);
    assert!(report.energy_drift <= 1e-12, "{}", report.energy_drift);
}

#[test]
fn manakov_pair_conserves_each_charge() {
    let ctx = context(Family::Manakov { ell: 2 }, 512, 60.0);
    let sech = |c: f64| {
        ComplexField::from_fn(ctx.grid().clone(), |x| Complex64::new(2f64.sqrt() / (x[0] - c).cosh(), 0.0)).unwrap()
    };
    let z = FieldVector::new(vec![sech(-10.0), sech(10.0)]).unwrap();
    let opts = EvolveOptions {
        dt: 1e-3,
        final_time: 1.0,
        sample_every: 50,
        ..Default::default()
    };
    let report = conservation_report(&evolve(&ctx, &z, &opts).unwrap()).unwrap();
    assert!(report.charge_drift.iter().all(|d| *d <= 1e-12), "{:?}", report.charge_drift);
}

#[test]
fn strang_step_is_time_reversible() {
    let ctx = context(Family::cubic(), 512, 40.0);
    let gs = soliton(&ctx);
    let mut z = FieldVector::new(vec![gs.u.component(0).clone()]).unwrap();
    let forward = Propagator::new(&ctx, 1e-3).unwrap();
    let backward = Propagator::new(&ctx, -1e-3).unwrap();
    forward.advance(&mut z, 10_000, 0.0).unwrap();
    backward.advance(&mut z, 10_000, 10.0).unwrap();
    let d = h1_distance(&z, &gs.u).unwrap();
    assert!(d < 1e-8, "{d}");
}

#[test]
fn evolution_commutes_with_phase() {
    let ctx = context(Family::Manakov { ell: 2 }, 256, 40.0);
    let z = FieldVector::new(vec![gaussian(&ctx, -2.0, 1.0, 0.3), gaussian(&ctx, 1.0, 2.0, -0.5)]).unwrap();
    let opts = EvolveOptions {
        dt: 1e-3,
        final_time: 0.5,
        ..Default::default()
    };
    let theta = 1.234;
    let a = rotate(&evolve(&ctx, &z, &opts).unwrap().final_state, theta);
    let b = evolve(&ctx, &rotate(&z, theta), &opts).unwrap().final_state;
    assert!(h1_distance(&a, &b).unwrap() < 1e-12);
}

#[test]
fn single_step_on_standing_wave_has_third_order_error() {
    let ctx = context(Family::cubic(), 512, 40.0);
    let gs = soliton(&ctx);
    let err = |dt: f64| {
        let out = step(&ctx, &gs.u, dt).unwrap();
        h1_distance(&out, &standing_wave(&gs.u, &gs.multipliers, dt).unwrap()).unwrap()
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    assert!(e1 < 10.0 * 1e-6, "{e1}");
    let ratio = e1 / e2;
    assert!((6.0..10.0).contains(&ratio), "{ratio}");
}

#[test]
fn zero_state_evolves_to_zero() {
    let ctx = context(Family::cubic(), 128, 20.0);
    let z = FieldVector::zeros(ctx.grid().clone(), 1);
    let traj = evolve(&ctx, &z, &EvolveOptions::default()).unwrap();
    assert!(traj.charges.iter().all(|q| q[0] == 0.0));
    assert!(traj.energies.iter().all(|e| *e == 0.0));
    let report = conservation_report(&traj).unwrap();
    assert_eq!(report.energy_drift, 0.0);
}

#[test]
fn supercritical_collapse_is_reported() {
    let ctx = context(Family::Power { p: 7.0 }, 256, 20.0);
    let z = FieldVector::new(vec![ComplexField::from_fn(ctx.grid().clone(), |x| Complex64::new(3.0 * (-x[0] * x[0]).exp(), 0.0)).unwrap()])
        .unwrap();
    let opts = EvolveOptions {
        dt: 1e-4,
        final_time: 2.0,
        sample_every: 10,
        ..Default::default()
    };
    match evolve(&ctx, &z, &opts) {
        Err(nlsorbit::NlsError::BlowUp { time, .. }) => assert!(time > 0.0 && time < 2.0),
        other => panic!("expected blow-up, got {:?}", other.map(|t| t.energies.last().copied())),
    }
}
