//! TOML run configuration.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use crate::dynamics::EvolveOptions;
use crate::error::{NlsError, Result};
use crate::grid::Grid;
use crate::groundstate::{ConstraintSet, InitialGuess, MinimizeOptions};
use crate::hypotheses::{HypothesisId, HypothesisParams};
use crate::nonlinearity::{Family, NonlinearitySpec};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub constraint: Option<ConstraintConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub diag: DiagConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Zero,
    Cubic,
    Power,
    Manakov,
    Product,
    MismatchedFixture,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Spatial dimension; must agree with the grid when given.
    pub dims: Option<usize>,
    pub ell: Option<usize>,
    pub family: FamilyName,
    pub p: Option<f64>,
    pub coefficient: Option<f64>,
    pub alpha: Option<[f64; 2]>,
    /// Multiplies the potential by `1 + exp(-|x|)`.
    #[serde(default)]
    pub x_dependent: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub c: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPolicy {
    Gaussian,
    Random,
    Given,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub initial: InitialPolicy,
    /// Field dump used when `initial = "given"`.
    pub initial_dump: Option<PathBuf>,
    pub step_size: f64,
    pub backtrack: f64,
    pub max_iterations: usize,
    pub tol_grad: f64,
    pub stagnation_window: usize,
    pub localization_tol: f64,
    pub preconditioner_shift: Option<f64>,
    pub divergence_bound: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = MinimizeOptions::default();
        SolverConfig {
            initial: InitialPolicy::Gaussian,
            initial_dump: None,
            step_size: d.step_size,
            backtrack: d.backtrack,
            max_iterations: d.max_iterations,
            tol_grad: d.tol_grad,
            stagnation_window: d.stagnation_window,
            localization_tol: d.localization_tol,
            preconditioner_shift: d.preconditioner_shift,
            divergence_bound: d.divergence_bound,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub final_time: f64,
    pub sample_every: usize,
    pub snapshot_times: Vec<f64>,
    pub resolution_tol: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let d = EvolveOptions::default();
        DynamicsConfig {
            dt: d.dt,
            final_time: 10.0,
            sample_every: d.sample_every,
            snapshot_times: d.snapshot_times,
            resolution_tol: d.resolution_tol,
        }
    }
}

impl DynamicsConfig {
    pub fn options(&self) -> EvolveOptions {
        EvolveOptions {
            dt: self.dt,
            final_time: self.final_time,
            sample_every: self.sample_every,
            snapshot_times: self.snapshot_times.clone(),
            resolution_tol: self.resolution_tol,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub deltas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Final time of every run; `dt` and the cadence come from `[dynamics]`.
    #[serde(default = "default_stability_time")]
    pub final_time: f64,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_stability_time() -> f64 {
    50.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Hypotheses to check; empty means every one that can be checked.
    pub hypotheses: Vec<String>,
    pub samples: usize,
    pub tol: f64,
    pub componentwise_theta: bool,
    pub params: HypothesisParams,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            hypotheses: Vec::new(),
            samples: 2000,
            tol: 1e-6,
            componentwise_theta: false,
            params: HypothesisParams::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagConfig {
    pub random_states: usize,
    pub complex_seeds: Vec<u64>,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            random_states: 20,
            complex_seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Text,
    Dump,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("nlsorbit-out"),
            formats: vec![Format::Csv, Format::Text, Format::Dump],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn invalid(msg: impl Into<String>) -> NlsError {
    NlsError::InvalidInput(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn family(&self) -> Result<Family> {
        let p = &self.problem;
        let base = match p.family {
            FamilyName::Zero => Family::Zero { ell: p.ell.unwrap_or(1) },
            FamilyName::Cubic => Family::cubic(),
            FamilyName::Power => Family::Power {
                p: p.p.ok_or_else(|| invalid("family \"power\" needs problem.p"))?,
            },
            FamilyName::Manakov => Family::Manakov { ell: p.ell.unwrap_or(2) },
            FamilyName::Product => Family::Product {
                coefficient: p.coefficient.unwrap_or(1.0),
                alpha: p.alpha.unwrap_or([2.0, 2.0]),
            },
            FamilyName::MismatchedFixture => Family::MismatchedFixture,
        };
        Ok(if p.x_dependent { Family::XDecay(Box::new(base)) } else { base })
    }

    pub fn spec(&self) -> Result<NonlinearitySpec> {
        let spec = NonlinearitySpec::builtin(self.family()?)?;
        if let Some(ell) = self.problem.ell {
            if ell != spec.ell() {
                return Err(NlsError::ComponentMismatch {
                    expected: spec.ell(),
                    got: ell,
                });
            }
        }
        Ok(spec)
    }

    /// Limit of `H` as `|x| -> infinity`, known only for the `x`-dependent families.
    pub fn infinity_spec(&self) -> Result<Option<NonlinearitySpec>> {
        match self.family()? {
            Family::XDecay(base) => Ok(Some(NonlinearitySpec::builtin(*base)?)),
            _ => Ok(None),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        if let Some(d) = self.problem.dims {
            if d != self.grid.points.len() {
                return Err(invalid(format!(
                    "problem.dims = {d} but the grid has {} axes",
                    self.grid.points.len()
                )));
            }
        }
        Grid::new(&self.grid.points, &self.grid.lengths)
    }

    pub fn constraint(&self) -> Result<ConstraintSet> {
        let c = self
            .constraint
            .as_ref()
            .ok_or_else(|| invalid("this command needs a [constraint] block"))?;
        ConstraintSet::new(c.c.clone())
    }

    /// Minimizer options; a `given` start is loaded by the caller.
    pub fn minimize_options(&self, given: Option<crate::grid::FieldVector>) -> Result<MinimizeOptions> {
        let s = &self.solver;
        let initial = match (s.initial, given) {
            (InitialPolicy::Gaussian, _) => InitialGuess::Gaussian,
            (InitialPolicy::Random, _) => InitialGuess::Random,
            (InitialPolicy::Given, Some(z)) => InitialGuess::Given(z),
            (InitialPolicy::Given, None) => return Err(invalid("initial = \"given\" needs solver.initial_dump")),
        };
        let opts = MinimizeOptions {
            initial,
            seed: self.seed,
            step_size: s.step_size,
            backtrack: s.backtrack,
            max_iterations: s.max_iterations,
            tol_grad: s.tol_grad,
            stagnation_window: s.stagnation_window,
            localization_tol: s.localization_tol,
            preconditioner_shift: s.preconditioner_shift,
            divergence_bound: s.divergence_bound,
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn requested_hypotheses(&self, have_infinity: bool) -> Result<Vec<HypothesisId>> {
        if self.check.hypotheses.is_empty() {
            return Ok(HypothesisId::ALL
                .into_iter()
                .filter(|h| have_infinity || !h.needs_infinity())
                .collect());
        }
        self.check
            .hypotheses
            .iter()
            .map(|s| HypothesisId::parse(s).ok_or_else(|| invalid(format!("unknown hypothesis {s:?}"))))
            .collect()
    }

    /// Validates every block that is present, before any computation.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let spec = self.spec()?;
        if let Some(c) = &self.constraint {
            let c = ConstraintSet::new(c.c.clone())?;
            if c.ell() != spec.ell() {
                return Err(NlsError::ComponentMismatch {
                    expected: spec.ell(),
                    got: c.ell(),
                });
            }
        }
        if self.solver.initial != InitialPolicy::Given {
            self.minimize_options(None)?;
        }
        self.dynamics.options().validate()?;
        if let Some(st) = &self.stability {
            if st.deltas.is_empty() || st.seeds.is_empty() {
                return Err(invalid("stability needs at least one delta and one seed"));
            }
            if st.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return Err(invalid("stability deltas must be nonnegative"));
            }
            EvolveOptions {
                final_time: st.final_time,
                ..self.dynamics.options()
            }
            .validate()?;
        }
        if !(self.check.tol > 0.0) || self.check.samples == 0 {
            return Err(invalid("check.tol and check.samples must be positive"));
        }
        self.check.params.validate(grid.n_dims(), spec.ell())?;
        self.requested_hypotheses(true)?;
        Ok(())
    }
}
