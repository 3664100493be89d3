//! Python bindings. States are lists of components, each a flat list of
//! complex samples in row-major grid order.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nlsorbit::dynamics::{conservation_report, evolve as evolve_state, EvolveOptions};
use nlsorbit::energy::{self, EnergyContext};
use nlsorbit::groundstate::{self, ConstraintSet, GroundStateResult, InitialGuess, MinimizeOptions};
use nlsorbit::hypotheses::{check_hypotheses, HypothesisId, HypothesisParams};
use nlsorbit::nonlinearity::consistency_report;
use nlsorbit::stability::{self, OrbitProxy};
use nlsorbit::{ComplexField, Family, FieldVector, Grid, NlsError, NonlinearitySpec, Sampler};

fn py_err(e: NlsError) -> PyErr {
    match e {
        NlsError::InvalidGrid(_)
        | NlsError::GridMismatch
        | NlsError::ComponentMismatch { .. }
        | NlsError::InvalidInput(_)
        | NlsError::MissingInfinitySpec(_)
        | NlsError::InvalidHypothesisParams(_)
        | NlsError::Dump(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

type State = Vec<Vec<Complex64>>;

fn family_from(
    name: &str,
    ell: Option<usize>,
    p: Option<f64>,
    coefficient: Option<f64>,
    alpha: Option<[f64; 2]>,
) -> PyResult<Family> {
    Ok(match name {
        "zero" => Family::Zero { ell: ell.unwrap_or(1) },
        "cubic" => Family::cubic(),
        "power" => Family::Power {
            p: p.ok_or_else(|| PyValueError::new_err("family 'power' needs p"))?,
        },
        "manakov" => Family::Manakov { ell: ell.unwrap_or(2) },
        "product" => Family::Product {
            coefficient: coefficient.unwrap_or(1.0),
            alpha: alpha.unwrap_or([2.0, 2.0]),
        },
        "mismatched_fixture" => Family::MismatchedFixture,
        other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
    })
}

/// A nonlinearity on a periodic grid.
#[pyclass(module = "nlsorbit_py", frozen)]
struct Problem {
    ctx: EnergyContext,
    family: Family,
}

impl Problem {
    fn to_field(&self, z: State) -> PyResult<FieldVector> {
        let grid = self.ctx.grid();
        let comps = z
            .into_iter()
            .map(|c| ComplexField::new(grid.clone(), c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?;
        let z = FieldVector::new(comps).map_err(py_err)?;
        self.ctx.check_state(&z).map_err(py_err)?;
        Ok(z)
    }
}

fn from_field(z: &FieldVector) -> State {
    z.components().iter().map(|c| c.values().to_vec()).collect()
}

#[pymethods]
impl Problem {
    #[new]
    #[pyo3(signature = (family, points, lengths, *, ell=None, p=None, coefficient=None, alpha=None, x_dependent=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        family: &str,
        points: Vec<usize>,
        lengths: Vec<f64>,
        ell: Option<usize>,
        p: Option<f64>,
        coefficient: Option<f64>,
        alpha: Option<[f64; 2]>,
        x_dependent: bool,
    ) -> PyResult<Self> {
        let base = family_from(family, ell, p, coefficient, alpha)?;
        let family = if x_dependent { Family::XDecay(Box::new(base)) } else { base };
        let grid = Grid::new(&points, &lengths).map_err(py_err)?;
        let spec = NonlinearitySpec::builtin(family.clone()).map_err(py_err)?;
        let ctx = EnergyContext::new(grid, spec).map_err(py_err)?;
        Ok(Problem { ctx, family })
    }

    #[getter]
    fn ell(&self) -> usize {
        self.ctx.ell()
    }

    #[getter]
    fn name(&self) -> String {
        self.family.name()
    }

    /// Flattened grid coordinates, `n_points x n_dims`.
    fn coordinates(&self) -> Vec<f64> {
        self.ctx.grid().coordinates()
    }

    fn energy(&self, z: State) -> PyResult<f64> {
        energy::energy_hat(&self.ctx, &self.to_field(z)?).map_err(py_err)
    }

    fn gradient(&self, z: State) -> PyResult<State> {
        let g = energy::energy_gradient(&self.ctx, &self.to_field(z)?).map_err(py_err)?;
        Ok(from_field(&g))
    }

    fn charges(&self, z: State) -> PyResult<Vec<f64>> {
        Ok(energy::charges(&self.to_field(z)?))
    }

    /// `(direct, formula)` evaluations of the diamagnetic energy gap.
    fn diamagnetic_defect(&self, z: State) -> PyResult<(f64, f64)> {
        let d = energy::diamagnetic_defect(&self.ctx, &self.to_field(z)?).map_err(py_err)?;
        Ok((d.direct, d.formula))
    }

    #[pyo3(signature = (c, *, seed=0, complex=false, max_iterations=20000, tol_grad=1e-8))]
    fn minimize(&self, c: Vec<f64>, seed: u64, complex: bool, max_iterations: usize, tol_grad: f64) -> PyResult<GroundState> {
        let cset = ConstraintSet::new(c).map_err(py_err)?;
        let opts = MinimizeOptions {
            initial: InitialGuess::Gaussian,
            seed,
            max_iterations,
            tol_grad,
            ..MinimizeOptions::default()
        };
        let r = if complex {
            groundstate::complex_minimize(&self.ctx, &cset, &opts)
        } else {
            groundstate::minimize(&self.ctx, &cset, &opts)
        }
        .map_err(py_err)?;
        Ok(GroundState { result: r, constraint: cset })
    }

    /// Split-step evolution; returns `times`, `charges`, `energies`,
    /// `final_state` and the relative drifts.
    #[pyo3(signature = (z, *, dt=1e-3, final_time=1.0, sample_every=100))]
    fn evolve(&self, py: Python<'_>, z: State, dt: f64, final_time: f64, sample_every: usize) -> PyResult<PyObject> {
        let z0 = self.to_field(z)?;
        let opts = EvolveOptions {
            dt,
            final_time,
            sample_every,
            ..EvolveOptions::default()
        };
        let traj = evolve_state(&self.ctx, &z0, &opts).map_err(py_err)?;
        let report = conservation_report(&traj).map_err(py_err)?;
        let out = pyo3::types::PyDict::new(py);
        out.set_item("times", &traj.times)?;
        out.set_item("charges", &traj.charges)?;
        out.set_item("energies", &traj.energies)?;
        out.set_item("final_state", from_field(&traj.final_state))?;
        out.set_item("charge_drift", report.charge_drift)?;
        out.set_item("energy_drift", report.energy_drift)?;
        Ok(out.into_any().unbind())
    }

    /// Status of every hypothesis that can be checked without an asymptotic
    /// nonlinearity, as `(name, status)` pairs. Raises if the consistency
    /// check fails.
    #[pyo3(signature = (*, seed=0, samples=2000))]
    fn check(&self, seed: u64, samples: usize) -> PyResult<Vec<(String, String)>> {
        let spec = self.ctx.spec();
        let sampler = Sampler {
            seed,
            samples,
            n_dims: self.ctx.grid().n_dims(),
            ..Sampler::default()
        };
        let consistency = consistency_report(spec, &sampler, 1e-6);
        if !consistency.passed {
            return Err(py_err(NlsError::InconsistentNonlinearity {
                deviation: consistency.max_deviation,
                witness: consistency.witness.map(|w| w.1).unwrap_or_default(),
            }));
        }
        let requested: Vec<HypothesisId> = HypothesisId::ALL.into_iter().filter(|h| !h.needs_infinity()).collect();
        let params = HypothesisParams::default();
        let report = check_hypotheses(spec, &params, &sampler, None, &requested).map_err(py_err)?;
        Ok(report
            .entries
            .iter()
            .filter(|e| requested.contains(&e.id))
            .map(|e| (e.id.to_string(), e.status.to_string()))
            .collect())
    }
}

/// Result of a constrained minimization.
#[pyclass(module = "nlsorbit_py", frozen)]
struct GroundState {
    result: GroundStateResult,
    constraint: ConstraintSet,
}

#[pymethods]
impl GroundState {
    #[getter]
    fn value(&self) -> f64 {
        self.result.value
    }

    #[getter]
    fn multipliers(&self) -> Vec<f64> {
        self.result.multipliers.clone()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.result.residual
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.result.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.result.converged
    }

    #[getter]
    fn stop(&self) -> String {
        format!("{:?}", self.result.stop)
    }

    #[getter]
    fn state(&self) -> State {
        from_field(&self.result.u)
    }

    /// H^1 distance from `z` to the symmetry orbit of this state.
    fn orbit_distance(&self, problem: &Problem, z: State) -> PyResult<f64> {
        let proxy = OrbitProxy::new(&problem.ctx, &self.result, &self.constraint).map_err(py_err)?;
        proxy.distance(&problem.to_field(z)?).map_err(py_err)
    }

    /// `(delta, epsilon)` rows of a perturbation sweep around this state.
    #[pyo3(signature = (problem, deltas, *, seeds=vec![1, 2, 3], dt=1e-3, final_time=10.0, sample_every=100))]
    fn stability_sweep(
        &self,
        problem: &Problem,
        deltas: Vec<f64>,
        seeds: Vec<u64>,
        dt: f64,
        final_time: f64,
        sample_every: usize,
    ) -> PyResult<Vec<(f64, f64)>> {
        let proxy = OrbitProxy::new(&problem.ctx, &self.result, &self.constraint).map_err(py_err)?;
        let opts = EvolveOptions {
            dt,
            final_time,
            sample_every,
            ..EvolveOptions::default()
        };
        let sweep = stability::delta_eps_sweep(&problem.ctx, &proxy, &deltas, &seeds, &opts).map_err(py_err)?;
        Ok(sweep.rows.iter().map(|r| (r.delta, r.epsilon)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "GroundState(value={:.12}, multipliers={:?}, converged={})",
            self.result.value, self.result.multipliers, if self.result.converged { "True" } else { "False" }
        )
    }
}

#[pymodule]
fn nlsorbit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<GroundState>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
