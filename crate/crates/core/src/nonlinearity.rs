//! Coupling functions `H(x, s)` and `h_j(x, s^2)`.
//!
//! A nonlinearity is described by the potential `H(x, s_1, .., s_l)` on the
//! nonnegative orthant and the coefficients `h_j(x, s_1^2, .., s_l^2)` that
//! enter the evolution equations. The two must satisfy
//! `dH/ds_j = 2 h_j(x, s^2) s_j`; [`check_consistency`] verifies this by
//! central differences and every solver constructor refuses a spec that fails.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{NlsError, Result};
use crate::random;

/// Evaluators for `H` and `h_j`. Component indices are zero-based.
pub trait Coupling: Send + Sync + fmt::Debug {
    fn ell(&self) -> usize;

    fn x_dependent(&self) -> bool {
        false
    }

    /// `H(x, s)` for `s >= 0` componentwise.
    fn potential(&self, x: &[f64], s: &[f64]) -> f64;

    /// `h_j(x, s_sq)` for `s_sq >= 0` componentwise.
    fn coefficient(&self, j: usize, x: &[f64], s_sq: &[f64]) -> f64;
}

/// Built-in coupling families.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `H == 0`.
    Zero { ell: usize },
    /// Scalar power law `h(x, t) = t^((p-1)/2)`, `H = 2 s^(p+1) / (p+1)`.
    Power { p: f64 },
    /// `h_j = s_1^2 + .. + s_l^2`, `H = (s_1^2 + .. + s_l^2)^2 / 2`.
    Manakov { ell: usize },
    /// `H = coefficient * s_1^a_1 * s_2^a_2` with `a_j >= 2`.
    Product { coefficient: f64, alpha: [f64; 2] },
    /// `H = s^4` paired with `h(t) = t`; deliberately inconsistent.
    MismatchedFixture,
    /// `H(x, s) = (1 + exp(-|x|)) H_base(s)`.
    XDecay(Box<Family>),
}

impl Family {
    pub fn cubic() -> Family {
        Family::Power { p: 3.0 }
    }

    pub fn name(&self) -> String {
        match self {
            Family::Zero { .. } => "zero".into(),
            Family::Power { p } if *p == 3.0 => "cubic".into(),
            Family::Power { .. } => "power".into(),
            Family::Manakov { .. } => "manakov".into(),
            Family::Product { .. } => "product".into(),
            Family::MismatchedFixture => "mismatched_fixture".into(),
            Family::XDecay(base) => format!("x_decay({})", base.name()),
        }
    }

    fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match self {
            Family::Zero { ell } | Family::Manakov { ell } => {
                m.insert("ell".into(), *ell as f64);
            }
            Family::Power { p } => {
                m.insert("p".into(), *p);
            }
            Family::Product { coefficient, alpha } => {
                m.insert("coefficient".into(), *coefficient);
                m.insert("alpha1".into(), alpha[0]);
                m.insert("alpha2".into(), alpha[1]);
            }
            Family::MismatchedFixture => {}
            Family::XDecay(base) => {
                m = base.params();
            }
        }
        m
    }

    fn validate(&self) -> Result<()> {
        match self {
            Family::Zero { ell } | Family::Manakov { ell } if *ell == 0 => {
                Err(NlsError::InvalidInput("component count must be >= 1".into()))
            }
            Family::Power { p } if !(p.is_finite() && *p >= 1.0) => {
                Err(NlsError::InvalidInput(format!("power exponent must be >= 1, got {p}")))
            }
            Family::Product { coefficient, alpha } => {
                if !coefficient.is_finite() || alpha.iter().any(|a| !(a.is_finite() && *a >= 2.0)) {
                    Err(NlsError::InvalidInput(
                        "product coupling needs a finite coefficient and exponents >= 2".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Family::XDecay(base) => base.validate(),
            _ => Ok(()),
        }
    }
}

impl Coupling for Family {
    fn ell(&self) -> usize {
        match self {
            Family::Zero { ell } | Family::Manakov { ell } => *ell,
            Family::Power { .. } | Family::MismatchedFixture => 1,
            Family::Product { .. } => 2,
            Family::XDecay(base) => base.ell(),
        }
    }

    fn x_dependent(&self) -> bool {
        matches!(self, Family::XDecay(_))
    }

    fn potential(&self, x: &[f64], s: &[f64]) -> f64 {
        match self {
            Family::Zero { .. } => 0.0,
            Family::Power { p } => 2.0 * s[0].powf(p + 1.0) / (p + 1.0),
            Family::Manakov { .. } => {
                let r2: f64 = s.iter().map(|v| v * v).sum();
                0.5 * r2 * r2
            }
            Family::Product { coefficient, alpha } => {
                coefficient * s[0].powf(alpha[0]) * s[1].powf(alpha[1])
            }
            Family::MismatchedFixture => s[0].powi(4),
            Family::XDecay(base) => (1.0 + (-norm(x)).exp()) * base.potential(x, s),
        }
    }

    fn coefficient(&self, j: usize, x: &[f64], s_sq: &[f64]) -> f64 {
        match self {
            Family::Zero { .. } => 0.0,
            Family::Power { p } => {
                if *p == 3.0 {
                    s_sq[0]
                } else {
                    s_sq[0].powf(0.5 * (p - 1.0))
                }
            }
            Family::Manakov { .. } => s_sq.iter().sum(),
            Family::Product { coefficient, alpha } => {
                let o = 1 - j;
                0.5 * coefficient * alpha[j] * s_sq[j].powf(0.5 * (alpha[j] - 2.0)) * s_sq[o].powf(0.5 * alpha[o])
            }
            Family::MismatchedFixture => s_sq[0],
            Family::XDecay(base) => (1.0 + (-norm(x)).exp()) * base.coefficient(j, x, s_sq),
        }
    }
}

type PotentialFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type CoefficientFn = dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync;

/// A coupling supplied as closures.
#[derive(Clone)]
pub struct CustomCoupling {
    ell: usize,
    x_dependent: bool,
    potential: Arc<PotentialFn>,
    coefficient: Arc<CoefficientFn>,
}

impl fmt::Debug for CustomCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCoupling")
            .field("ell", &self.ell)
            .field("x_dependent", &self.x_dependent)
            .finish_non_exhaustive()
    }
}

impl Coupling for CustomCoupling {
    fn ell(&self) -> usize {
        self.ell
    }
    fn x_dependent(&self) -> bool {
        self.x_dependent
    }
    fn potential(&self, x: &[f64], s: &[f64]) -> f64 {
        (self.potential)(x, s)
    }
    fn coefficient(&self, j: usize, x: &[f64], s_sq: &[f64]) -> f64 {
        (self.coefficient)(j, x, s_sq)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// An immutable nonlinearity with metadata.
#[derive(Clone, Debug)]
pub struct NonlinearitySpec {
    coupling: Arc<dyn Coupling>,
    name: String,
    params: BTreeMap<String, f64>,
}

impl NonlinearitySpec {
    pub fn builtin(family: Family) -> Result<Self> {
        family.validate()?;
        Ok(NonlinearitySpec {
            name: family.name(),
            params: family.params(),
            coupling: Arc::new(family),
        })
    }

    pub fn custom<H, Hj>(name: &str, ell: usize, x_dependent: bool, potential: H, coefficient: Hj) -> Result<Self>
    where
        H: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        Hj: Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        if ell == 0 {
            return Err(NlsError::InvalidInput("component count must be >= 1".into()));
        }
        Ok(NonlinearitySpec {
            coupling: Arc::new(CustomCoupling {
                ell,
                x_dependent,
                potential: Arc::new(potential),
                coefficient: Arc::new(coefficient),
            }),
            name: name.to_string(),
            params: BTreeMap::new(),
        })
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn ell(&self) -> usize {
        self.coupling.ell()
    }

    pub fn x_dependent(&self) -> bool {
        self.coupling.x_dependent()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// `H(x, s)`; rejects negative or non-finite `s` entries.
    pub fn eval_h(&self, x: &[f64], s: &[f64]) -> Result<f64> {
        self.check_vector(s, "s")?;
        Ok(self.coupling.potential(x, s))
    }

    /// `h_j(x, s_sq)` with zero-based `j`.
    pub fn eval_hj(&self, j: usize, x: &[f64], s_sq: &[f64]) -> Result<f64> {
        if j >= self.ell() {
            return Err(NlsError::InvalidInput(format!(
                "component index {j} out of range for l = {}",
                self.ell()
            )));
        }
        self.check_vector(s_sq, "s_sq")?;
        Ok(self.coupling.coefficient(j, x, s_sq))
    }

    fn check_vector(&self, s: &[f64], what: &str) -> Result<()> {
        if s.len() != self.ell() {
            return Err(NlsError::ComponentMismatch {
                expected: self.ell(),
                got: s.len(),
            });
        }
        if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(NlsError::InvalidInput(format!("{what} must be finite and nonnegative: {s:?}")));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn potential(&self, x: &[f64], s: &[f64]) -> f64 {
        self.coupling.potential(x, s)
    }

    #[inline]
    pub(crate) fn coefficient(&self, j: usize, x: &[f64], s_sq: &[f64]) -> f64 {
        self.coupling.coefficient(j, x, s_sq)
    }

    /// `dH/ds_j` by central differences with relative step `1e-5 |s|`,
    /// reflecting through `s_j = 0` (H only sees moduli).
    pub(crate) fn fd_partial(&self, x: &[f64], s: &[f64], j: usize) -> f64 {
        let base = if s[j] > 0.0 { s[j] } else { norm(s) };
        let step = FD_STEP * base.max(1e-300);
        let mut plus = s.to_vec();
        let mut minus = s.to_vec();
        plus[j] = s[j] + step;
        minus[j] = (s[j] - step).abs();
        (self.potential(x, &plus) - self.potential(x, &minus)) / (2.0 * step)
    }
}

pub(crate) const FD_STEP: f64 = 1e-5;

/// Point sampler for consistency and hypothesis checks.
///
/// State points mix adversarial corners (origin, axis points, diagonals at
/// `s_min`, 1 and `s_max`) with log-uniform magnitudes in `[s_min, s_max]`
/// along random directions of the nonnegative orthant.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampler {
    pub seed: u64,
    pub samples: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Spatial samples are drawn from `[-x_extent, x_extent]^N`.
    pub x_extent: f64,
    pub n_dims: usize,
    /// Upper end of the log-uniform scaling factors `theta >= 1`.
    pub theta_max: f64,
    /// Draw an independent `theta_i` per component instead of one common factor.
    pub componentwise_theta: bool,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler {
            seed: 0,
            samples: 2000,
            s_min: 1e-3,
            s_max: 1e3,
            x_extent: 10.0,
            n_dims: 1,
            theta_max: 100.0,
            componentwise_theta: false,
        }
    }
}

impl Sampler {
    pub fn for_dims(n_dims: usize) -> Self {
        Sampler {
            n_dims,
            ..Sampler::default()
        }
    }

    pub(crate) fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
        (rng.gen_range(lo.ln()..=hi.ln())).exp()
    }

    pub(crate) fn direction<R: Rng>(rng: &mut R, ell: usize, allow_zeros: bool) -> Vec<f64> {
        loop {
            let mut d: Vec<f64> = (0..ell).map(|_| rng.gen_range(0.0..1.0)).collect();
            if allow_zeros && ell > 1 && rng.gen_bool(0.2) {
                let k = rng.gen_range(0..ell);
                d[k] = 0.0;
            }
            let n = norm(&d);
            if n > 1e-3 {
                return d.into_iter().map(|v| v / n).collect();
            }
        }
    }

    /// Corner points followed by random points, `samples` random ones in total.
    pub fn state_points<R: Rng>(&self, rng: &mut R, ell: usize) -> Vec<Vec<f64>> {
        let mut pts = vec![vec![0.0; ell]];
        for &m in &[self.s_min, 1.0, self.s_max] {
            for k in 0..ell {
                let mut v = vec![0.0; ell];
                v[k] = m;
                pts.push(v);
            }
            pts.push(vec![m / (ell as f64).sqrt(); ell]);
        }
        for _ in 0..self.samples {
            let r = Self::log_uniform(rng, self.s_min, self.s_max);
            pts.push(Self::direction(rng, ell, true).into_iter().map(|d| d * r).collect());
        }
        pts
    }

    pub fn space_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n_dims)
            .map(|_| rng.gen_range(-self.x_extent..=self.x_extent))
            .collect()
    }
}

/// Outcome of the `dH/ds_j = 2 h_j s_j` check.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub max_deviation: f64,
    /// `(x, s, j)` at the largest deviation.
    pub witness: Option<(Vec<f64>, Vec<f64>, usize)>,
    pub samples: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Runs the consistency comparison and always returns the report.
///
/// Deviations are measured relative to `max(|2 h_j s_j|, H(s)/|s|)`, the
/// natural scale of the derivative at that point.
pub fn consistency_report(spec: &NonlinearitySpec, sampler: &Sampler, tol: f64) -> ConsistencyReport {
    let mut rng = random::rng(sampler.seed);
    let ell = spec.ell();
    let states = sampler.state_points(&mut rng, ell);
    let mut worst = 0.0;
    let mut witness = None;
    let mut count = 0;
    let mut s_sq = vec![0.0; ell];
    for s in &states {
        let x = if spec.x_dependent() {
            sampler.space_point(&mut rng)
        } else {
            vec![0.0; sampler.n_dims]
        };
        for (q, v) in s_sq.iter_mut().zip(s) {
            *q = v * v;
        }
        let h_val = spec.potential(&x, s).abs();
        let r = norm(s);
        for j in 0..ell {
            let fd = spec.fd_partial(&x, s, j);
            let exact = 2.0 * spec.coefficient(j, &x, &s_sq) * s[j];
            let scale = exact.abs().max(fd.abs()).max(if r > 0.0 { h_val / r } else { 0.0 });
            let dev = if scale > 0.0 { (fd - exact).abs() / scale } else { 0.0 };
            let dev = if dev.is_finite() { dev } else { f64::INFINITY };
            count += 1;
            if dev > worst || (witness.is_none() && dev >= worst) {
                worst = dev;
                witness = Some((x.clone(), s.clone(), j));
            }
        }
    }
    ConsistencyReport {
        max_deviation: worst,
        witness,
        samples: count,
        tol,
        passed: worst <= tol,
    }
}

/// Hard consistency gate: errors when any sampled deviation exceeds `tol`.
pub fn check_consistency(spec: &NonlinearitySpec, sampler: &Sampler, tol: f64) -> Result<ConsistencyReport> {
    let report = consistency_report(spec, sampler, tol);
    if report.passed {
        Ok(report)
    } else {
        Err(NlsError::InconsistentNonlinearity {
            deviation: report.max_deviation,
            witness: report.witness.as_ref().map(|w| w.1.clone()).unwrap_or_default(),
        })
    }
}

/// Tolerance used by solver constructors when gating a spec.
pub const CONSTRUCTOR_CONSISTENCY_TOL: f64 = 1e-6;
