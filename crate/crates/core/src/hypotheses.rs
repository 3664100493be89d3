//! Sampled checks of the structural hypotheses on `H`.
//!
//! Every hypothesis quantifies over all `x` and `s`; here each one is tested
//! on a finite sample and a pass means no violation was found among the
//! recorded number of samples. Margins are signed and normalized so that a
//! positive value is a violation.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NlsError, Result};
use crate::nonlinearity::{norm, NonlinearitySpec, Sampler};
use crate::random;

/// Relative slack absorbing roundoff in equality cases.
const REL_SLACK: f64 = 1e-12;
/// Finite-difference derivatives carry ~1e-10 relative error.
const FD_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HypothesisId {
    H0,
    H1,
    H1Lipschitz,
    H2,
    H3,
    H4,
    HinfPeriodic,
    H3Inf,
    H5,
    H6,
    H7,
}

impl HypothesisId {
    pub const ALL: [HypothesisId; 11] = [
        HypothesisId::H0,
        HypothesisId::H1,
        HypothesisId::H1Lipschitz,
        HypothesisId::H2,
        HypothesisId::H3,
        HypothesisId::H4,
        HypothesisId::HinfPeriodic,
        HypothesisId::H3Inf,
        HypothesisId::H5,
        HypothesisId::H6,
        HypothesisId::H7,
    ];

    pub fn needs_infinity(self) -> bool {
        matches!(
            self,
            HypothesisId::HinfPeriodic | HypothesisId::H3Inf | HypothesisId::H5 | HypothesisId::H6 | HypothesisId::H7
        )
    }

    pub fn parse(s: &str) -> Option<HypothesisId> {
        HypothesisId::ALL.iter().copied().find(|h| h.to_string().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for HypothesisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HypothesisId::H0 => "H0",
            HypothesisId::H1 => "H1",
            HypothesisId::H1Lipschitz => "H1-Lipschitz",
            HypothesisId::H2 => "H2",
            HypothesisId::H3 => "H3",
            HypothesisId::H4 => "H4",
            HypothesisId::HinfPeriodic => "Hinf-periodic",
            HypothesisId::H3Inf => "H3-inf",
            HypothesisId::H5 => "H5",
            HypothesisId::H6 => "H6",
            HypothesisId::H7 => "H7",
        };
        f.write_str(s)
    }
}

/// Constants appearing in the hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisParams {
    pub k: f64,
    pub ell1: f64,
    pub c_prime: f64,
    pub alpha: f64,
    /// Radius for the `N = 1` local Lipschitz form of (H1).
    pub lipschitz_radius: f64,
    pub b: f64,
    pub delta: f64,
    pub r: f64,
    pub s_bound: f64,
    /// `alpha_1 .. alpha_l` of (H3); empty means `2` for every component.
    pub alphas: Vec<f64>,
    pub t_exp: f64,
    pub gamma: f64,
    pub a_prime: f64,
    pub b_prime: f64,
    pub beta: f64,
    pub sigma: f64,
    /// Period lattice vector of `H^inf`; empty means all ones.
    pub period: Vec<i64>,
}

impl Default for HypothesisParams {
    fn default() -> Self {
        HypothesisParams {
            k: 1.0,
            ell1: 2.0,
            c_prime: 3.0,
            alpha: 2.0,
            lipschitz_radius: 10.0,
            b: 2.0,
            delta: 0.25,
            r: 1.0,
            s_bound: 1.0,
            alphas: Vec::new(),
            t_exp: 0.0,
            gamma: 2.0,
            a_prime: 1.0,
            b_prime: 2.0,
            beta: 1.0,
            sigma: 2.0,
            period: Vec::new(),
        }
    }
}

impl HypothesisParams {
    pub fn alphas_for(&self, ell: usize) -> Vec<f64> {
        if self.alphas.is_empty() {
            vec![2.0; ell]
        } else {
            self.alphas.clone()
        }
    }

    pub fn period_for(&self, n_dims: usize) -> Vec<f64> {
        if self.period.is_empty() {
            vec![1.0; n_dims]
        } else {
            self.period.iter().map(|&t| t as f64).collect()
        }
    }

    pub fn validate(&self, n_dims: usize, ell: usize) -> Result<()> {
        let bad = |m: String| Err(NlsError::InvalidHypothesisParams(m));
        let crit = 4.0 / n_dims as f64;
        for (name, v) in [
            ("K", self.k),
            ("c'", self.c_prime),
            ("B", self.b),
            ("Delta", self.delta),
            ("R", self.r),
            ("S", self.s_bound),
            ("A'", self.a_prime),
            ("B'", self.b_prime),
            ("lipschitz_radius", self.lipschitz_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.ell1 > 0.0 && self.ell1 < crit) {
            return bad(format!("need 0 < l1 < 4/N = {crit}, got {}", self.ell1));
        }
        if !(0.0..2.0).contains(&self.t_exp) {
            return bad(format!("need t in [0, 2), got {}", self.t_exp));
        }
        if !(self.beta > 0.0 && self.beta < self.ell1) {
            return bad(format!("need 0 < beta < l1, got {}", self.beta));
        }
        if !(self.sigma > 0.0 && self.sigma < crit) {
            return bad(format!("need sigma in (0, 4/N), got {}", self.sigma));
        }
        if !(self.gamma > 0.0 && self.gamma < crit) {
            return bad(format!("need Gamma in (0, 4/N), got {}", self.gamma));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("need alpha >= 0, got {}", self.alpha));
        }
        if n_dims >= 3 && self.alpha >= 4.0 / (n_dims as f64 - 2.0) {
            return bad(format!("need alpha < 4/(N-2) for N = {n_dims}, got {}", self.alpha));
        }
        let alphas = self.alphas_for(ell);
        if alphas.len() != ell || alphas.iter().any(|a| !(*a > 0.0)) {
            return bad(format!("need {ell} positive exponents alpha_j, got {alphas:?}"));
        }
        let total: f64 = alphas.iter().sum();
        if !(n_dims as f64 + 2.0 > 0.5 * n_dims as f64 * total + self.t_exp) {
            return bad(format!(
                "need N + 2 > (N/2) alpha + t, got alpha = {total}, t = {}",
                self.t_exp
            ));
        }
        if !self.period.is_empty() && (self.period.len() != n_dims || self.period.iter().all(|&t| t == 0)) {
            return bad(format!("period must be a nonzero integer vector of length {n_dims}"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// (H3) held for the user-supplied constants; the constants are existential.
    Confirmed,
    Fail,
    NotApplicable,
    NotRequested,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Confirmed => "confirmed",
            Status::Fail => "fail",
            Status::NotApplicable => "not-applicable",
            Status::NotRequested => "not-requested",
        })
    }
}

/// The sampled point with the largest margin.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    /// Second vector argument when the hypothesis has one (`r` or `theta`).
    pub aux: Option<Vec<f64>>,
    /// Normalized violation; positive means the inequality is broken.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct HypothesisEntry {
    pub id: HypothesisId,
    pub status: Status,
    pub witness: Option<Witness>,
    pub samples: usize,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct HypothesisReport {
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn get(&self, id: HypothesisId) -> &HypothesisEntry {
        self.entries.iter().find(|e| e.id == id).expect("every id has an entry")
    }

    pub fn status(&self, id: HypothesisId) -> Status {
        self.get(id).status
    }
}

#[derive(Default)]
struct Tracker {
    worst: Option<Witness>,
    samples: usize,
}

impl Tracker {
    fn record(&mut self, margin: f64, x: &[f64], s: &[f64], aux: Option<&[f64]>) {
        self.samples += 1;
        let margin = if margin.is_nan() { f64::INFINITY } else { margin };
        if self.worst.as_ref().is_none_or(|w| margin > w.margin) {
            self.worst = Some(Witness {
                x: x.to_vec(),
                s: s.to_vec(),
                aux: aux.map(<[f64]>::to_vec),
                margin,
            });
        }
    }

    fn finish(self, id: HypothesisId, pass: Status, note: &str) -> HypothesisEntry {
        let failed = self.worst.as_ref().is_some_and(|w| w.margin > 0.0);
        HypothesisEntry {
            id,
            status: if failed { Status::Fail } else { pass },
            witness: self.worst,
            samples: self.samples,
            note: note.to_string(),
        }
    }
}

/// `(lhs - rhs) / max(|rhs|, tiny)`, positive when `lhs > rhs`.
fn excess(lhs: f64, rhs: f64, slack: f64) -> f64 {
    let scale = rhs.abs().max(lhs.abs()).max(1e-300);
    (lhs - rhs) / scale - slack
}

fn radial_point<R: Rng>(rng: &mut R, n_dims: usize, radius: f64) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..n_dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&d);
        if n > 1e-3 && n <= 1.0 {
            return d.into_iter().map(|v| v * radius / n).collect();
        }
    }
}

struct Ctx<'a> {
    spec: &'a NonlinearitySpec,
    hp: &'a HypothesisParams,
    sampler: &'a Sampler,
    states: Vec<Vec<f64>>,
}

impl Ctx<'_> {
    fn x_for<R: Rng>(&self, rng: &mut R, spec: &NonlinearitySpec) -> Vec<f64> {
        if spec.x_dependent() {
            self.sampler.space_point(rng)
        } else {
            vec![0.0; self.sampler.n_dims]
        }
    }

    fn squares(s: &[f64]) -> Vec<f64> {
        s.iter().map(|v| v * v).collect()
    }

    fn h0<R: Rng>(&self, rng: &mut R) -> HypothesisEntry {
        let mut t = Tracker::default();
        for s in &self.states {
            let x = self.x_for(rng, self.spec);
            let h = self.spec.potential(&x, s);
            let r = norm(s);
            let bound = self.hp.k * (r * r + r.powf(self.hp.ell1 + 2.0));
            let lower = if h < 0.0 { -h / bound.max(1e-300) } else { f64::NEG_INFINITY };
            t.record(excess(h, bound, REL_SLACK).max(lower), &x, s, None);
        }
        t.finish(HypothesisId::H0, Status::Pass, "0 <= H <= K(|s|^2 + |s|^(l1+2))")
    }

    fn h1<R: Rng>(&self, rng: &mut R, id: HypothesisId) -> HypothesisEntry {
        let ell = self.spec.ell();
        let local = id == HypothesisId::H1Lipschitz;
        let mut t = Tracker::default();
        for s0 in &self.states {
            let x = self.x_for(rng, self.spec);
            let mut s = s0.clone();
            let mut r: Vec<f64> = if rng.gen_bool(0.5) {
                let m = Sampler::log_uniform(rng, self.sampler.s_min, self.sampler.s_max);
                Sampler::direction(rng, ell, true).into_iter().map(|d| d * m).collect()
            } else {
                let eps = 1e-3 * norm(&s).max(self.sampler.s_min);
                s.iter().map(|v| (v + rng.gen_range(-eps..eps)).abs()).collect()
            };
            if local {
                let total = norm(&s) + norm(&r);
                if total > self.hp.lipschitz_radius {
                    let f = self.hp.lipschitz_radius / total * rng.gen_range(0.1..1.0);
                    s.iter_mut().chain(r.iter_mut()).for_each(|v| *v *= f);
                }
            }
            let diff = norm(&s.iter().zip(&r).map(|(a, b)| a - b).collect::<Vec<_>>());
            if diff == 0.0 {
                continue;
            }
            let (s2, r2) = (Self::squares(&s), Self::squares(&r));
            let growth = if local {
                1.0 + 2.0 * self.hp.lipschitz_radius.powf(self.hp.alpha)
            } else {
                1.0 + norm(&s).powf(self.hp.alpha) + norm(&r).powf(self.hp.alpha)
            };
            for j in 0..ell {
                let lhs = (self.spec.coefficient(j, &x, &s2) * s[j] - self.spec.coefficient(j, &x, &r2) * r[j]).abs();
                let rhs = self.hp.c_prime * growth * diff;
                t.record(excess(lhs, rhs, 1e-9), &x, &s, Some(&r));
            }
        }
        let note = if local {
            "|h_j(s^2)s_j - h_j(r^2)r_j| <= c'(1 + 2R^alpha)|s - r| for |s| + |r| <= R"
        } else {
            "|h_j(s^2)s_j - h_j(r^2)r_j| <= c'(1 + |s|^alpha + |r|^alpha)|s - r|"
        };
        t.finish(id, Status::Pass, note)
    }

    fn h2<R: Rng>(&self, rng: &mut R) -> HypothesisEntry {
        let mut t = Tracker::default();
        for s in &self.states {
            let x = self.x_for(rng, self.spec);
            let r = norm(s);
            let rhs = self.hp.b * (r + r.powf(self.hp.ell1 + 1.0));
            for j in 0..s.len() {
                let d = self.spec.fd_partial(&x, s, j).abs();
                t.record(excess(d, rhs, FD_SLACK), &x, s, None);
            }
        }
        t.finish(HypothesisId::H2, Status::Pass, "|d_j H| <= B(|s| + |s|^(l1+1)), finite differences")
    }

    fn h3<R: Rng>(&self, rng: &mut R, spec: &NonlinearitySpec, id: HypothesisId) -> HypothesisEntry {
        let ell = spec.ell();
        let alphas = self.hp.alphas_for(ell);
        let mut t = Tracker::default();
        for _ in 0..self.sampler.samples.max(1) {
            let radius = self.hp.r * Sampler::log_uniform(rng, 1.0, 1e3);
            let x = radial_point(rng, self.sampler.n_dims, radius);
            let m = Sampler::log_uniform(rng, 1e-3 * self.hp.s_bound, self.hp.s_bound * (1.0 - 1e-9));
            let s: Vec<f64> = Sampler::direction(rng, ell, false).into_iter().map(|d| d * m).collect();
            let h = spec.potential(&x, &s);
            let prod: f64 = s.iter().zip(&alphas).map(|(v, a)| v.powf(*a)).product();
            let rhs = self.hp.delta * radius.powf(-self.hp.t_exp) * prod;
            // strict inequality: equality counts as a violation
            let margin = if h > rhs { -(h - rhs) / h.abs().max(1e-300) } else { (rhs - h) / rhs.abs().max(1e-300) + f64::MIN_POSITIVE };
            t.record(margin, &x, &s, None);
        }
        t.finish(
            id,
            Status::Confirmed,
            "H > Delta |x|^-t prod s_j^alpha_j on |x| >= R, 0 < |s| < S; confirmed for the given constants only",
        )
    }

    fn thetas<R: Rng>(&self, rng: &mut R, ell: usize) -> Vec<f64> {
        if self.sampler.componentwise_theta {
            (0..ell).map(|_| Sampler::log_uniform(rng, 1.0, self.sampler.theta_max)).collect()
        } else {
            vec![Sampler::log_uniform(rng, 1.0, self.sampler.theta_max); ell]
        }
    }

    fn scaling<R: Rng>(&self, rng: &mut R, spec: &NonlinearitySpec, power: f64, id: HypothesisId) -> HypothesisEntry {
        let ell = spec.ell();
        let mut t = Tracker::default();
        for s in &self.states {
            let x = self.x_for(rng, spec);
            let theta = self.thetas(rng, ell);
            let scaled: Vec<f64> = s.iter().zip(&theta).map(|(a, b)| a * b).collect();
            let tmax = theta.iter().copied().fold(1.0, f64::max);
            let lhs = spec.potential(&x, &scaled);
            let rhs = tmax.powf(power) * spec.potential(&x, s);
            // lhs >= rhs
            t.record(excess(rhs, lhs, REL_SLACK), &x, s, Some(&theta));
        }
        let note = if id == HypothesisId::H4 {
            "H(theta s) >= theta_max^2 H(s)"
        } else {
            "H^inf(theta s) >= theta_max^(sigma+2) H^inf(s)"
        };
        t.finish(id, Status::Pass, note)
    }

    fn periodic<R: Rng>(&self, rng: &mut R, inf: &NonlinearitySpec) -> HypothesisEntry {
        let period = self.hp.period_for(self.sampler.n_dims);
        let mut t = Tracker::default();
        for s in &self.states {
            let x = self.sampler.space_point(rng);
            let shifted: Vec<f64> = x.iter().zip(&period).map(|(a, b)| a + b).collect();
            let a = inf.potential(&x, s);
            let b = inf.potential(&shifted, s);
            let scale = a.abs().max(b.abs()).max(1e-300);
            t.record((a - b).abs() / scale - REL_SLACK, &x, s, Some(&period));
        }
        t.finish(HypothesisId::HinfPeriodic, Status::Pass, "H^inf(x + T, s) = H^inf(x, s)")
    }

    fn h5<R: Rng>(&self, rng: &mut R, inf: &NonlinearitySpec) -> HypothesisEntry {
        let n_dims = self.sampler.n_dims;
        let radii: Vec<f64> = (0..=10).map(|k| self.hp.r.max(1.0) * 2f64.powi(k)).collect();
        let mut sups = Vec::with_capacity(radii.len());
        let mut last = Tracker::default();
        let mut samples = 0;
        for (k, &radius) in radii.iter().enumerate() {
            let mut sup: f64 = 0.0;
            for s in &self.states {
                let x = radial_point(rng, n_dims, radius);
                let r = norm(s);
                let den = r * r + r.powf(self.hp.gamma + 2.0);
                if den == 0.0 {
                    continue;
                }
                let q = (self.spec.potential(&x, s) - inf.potential(&x, s)).abs() / den;
                let q = if q.is_nan() { f64::INFINITY } else { q };
                sup = sup.max(q);
                samples += 1;
                if k == radii.len() - 1 {
                    last.record(q, &x, s, None);
                }
            }
            sups.push(sup);
        }
        let first = sups[0];
        let tail = *sups.last().unwrap();
        let threshold = 1e-8 * first.max(1.0);
        let mut entry = last.finish(HypothesisId::H5, Status::Pass, "");
        entry.samples = samples;
        if let Some(w) = entry.witness.as_mut() {
            w.margin = tail - threshold;
        }
        entry.status = if tail <= threshold { Status::Pass } else { Status::Fail };
        entry.note = format!(
            "sup_s |H - H^inf| / (|s|^2 + |s|^(Gamma+2)) along |x| = {:.3e}..{:.3e}: {:.3e} -> {:.3e}",
            radii[0],
            radii[radii.len() - 1],
            first,
            tail
        );
        entry
    }

    fn h6<R: Rng>(&self, rng: &mut R, inf: &NonlinearitySpec) -> HypothesisEntry {
        let mut t = Tracker::default();
        for s in &self.states {
            let x = self.x_for(rng, inf);
            let r = norm(s);
            let h = inf.potential(&x, s);
            let bound = self.hp.a_prime * (r.powf(self.hp.beta + 2.0) + r.powf(self.hp.ell1 + 2.0));
            let lower = if h < 0.0 { -h / bound.max(1e-300) } else { f64::NEG_INFINITY };
            t.record(excess(h, bound, REL_SLACK).max(lower), &x, s, None);
            let dbound = self.hp.b_prime * (r.powf(self.hp.beta + 1.0) + r.powf(self.hp.ell1 + 1.0));
            for j in 0..s.len() {
                let d = inf.fd_partial(&x, s, j);
                t.record(excess(d, dbound, FD_SLACK), &x, s, None);
            }
        }
        t.finish(
            HypothesisId::H6,
            Status::Pass,
            "0 <= H^inf <= A'(|s|^(beta+2) + |s|^(l1+2)), d_j H^inf <= B'(|s|^(beta+1) + |s|^(l1+1))",
        )
    }
}

/// Checks the requested hypotheses on `spec` (and on `infinity` for the
/// asymptotic ones). Unrequested entries are reported as such.
pub fn check_hypotheses(
    spec: &NonlinearitySpec,
    hp: &HypothesisParams,
    sampler: &Sampler,
    infinity: Option<&NonlinearitySpec>,
    requested: &[HypothesisId],
) -> Result<HypothesisReport> {
    let ell = spec.ell();
    hp.validate(sampler.n_dims, ell)?;
    if let Some(h) = requested.iter().find(|h| h.needs_infinity()) {
        if infinity.is_none() {
            return Err(NlsError::MissingInfinitySpec(h.to_string()));
        }
    }
    if let Some(inf) = infinity {
        if inf.ell() != ell {
            return Err(NlsError::ComponentMismatch {
                expected: ell,
                got: inf.ell(),
            });
        }
    }
    let mut rng = random::rng(sampler.seed);
    let states = sampler.state_points(&mut rng, ell);
    let ctx = Ctx { spec, hp, sampler, states };
    let n_dims = sampler.n_dims;

    let mut entries = Vec::new();
    for id in HypothesisId::ALL {
        if !requested.contains(&id) {
            entries.push(HypothesisEntry {
                id,
                status: Status::NotRequested,
                witness: None,
                samples: 0,
                note: String::new(),
            });
            continue;
        }
        // fresh, id-specific stream so entries do not depend on the request set
        let mut rng = random::rng(sampler.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(id as u64 + 1)));
        let na = |note: &str| HypothesisEntry {
            id,
            status: Status::NotApplicable,
            witness: None,
            samples: 0,
            note: note.to_string(),
        };
        let entry = match id {
            HypothesisId::H0 => ctx.h0(&mut rng),
            HypothesisId::H1 if n_dims == 1 => na("N = 1 uses the local Lipschitz form"),
            HypothesisId::H1 => ctx.h1(&mut rng, id),
            HypothesisId::H1Lipschitz if n_dims > 1 => na("only stated for N = 1"),
            HypothesisId::H1Lipschitz => ctx.h1(&mut rng, id),
            HypothesisId::H2 => ctx.h2(&mut rng),
            HypothesisId::H3 => ctx.h3(&mut rng, spec, id),
            HypothesisId::H4 => ctx.scaling(&mut rng, spec, 2.0, id),
            HypothesisId::HinfPeriodic => ctx.periodic(&mut rng, infinity.unwrap()),
            HypothesisId::H3Inf => ctx.h3(&mut rng, infinity.unwrap(), id),
            HypothesisId::H5 => ctx.h5(&mut rng, infinity.unwrap()),
            HypothesisId::H6 => ctx.h6(&mut rng, infinity.unwrap()),
            HypothesisId::H7 => ctx.scaling(&mut rng, infinity.unwrap(), hp.sigma + 2.0, id),
        };
        entries.push(entry);
    }
    Ok(HypothesisReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Family;

    fn spec(f: Family) -> NonlinearitySpec {
        NonlinearitySpec::builtin(f).unwrap()
    }

    #[test]
    fn subcritical_power_passes_h0() {
        let r = check_hypotheses(
            &spec(Family::cubic()),
            &HypothesisParams::default(),
            &Sampler::default(),
            None,
            &[HypothesisId::H0, HypothesisId::H2, HypothesisId::H4],
        )
        .unwrap();
        assert_eq!(r.status(HypothesisId::H0), Status::Pass);
        assert_eq!(r.status(HypothesisId::H2), Status::Pass);
        assert_eq!(r.status(HypothesisId::H4), Status::Pass);
        assert_eq!(r.status(HypothesisId::H5), Status::NotRequested);
    }

    #[test]
    fn supercritical_power_fails_h0_at_large_s() {
        let r = check_hypotheses(
            &spec(Family::Power { p: 7.0 }),
            &HypothesisParams::default(),
            &Sampler::default(),
            None,
            &[HypothesisId::H0],
        )
        .unwrap();
        let e = r.get(HypothesisId::H0);
        assert_eq!(e.status, Status::Fail);
        let w = e.witness.as_ref().unwrap();
        assert!(w.margin > 0.0);
        assert!(w.s[0] > 10.0, "witness at {:?}", w.s);
    }

    #[test]
    fn manakov_h4_depends_on_theta_mode() {
        let man = spec(Family::Manakov { ell: 2 });
        let hp = HypothesisParams::default();
        let common = check_hypotheses(&man, &hp, &Sampler::default(), None, &[HypothesisId::H4]).unwrap();
        assert_eq!(common.status(HypothesisId::H4), Status::Pass);
        // with independent per-component factors, inflating a component that is zero breaks it
        let sampler = Sampler {
            componentwise_theta: true,
            ..Sampler::default()
        };
        let split = check_hypotheses(&man, &hp, &sampler, None, &[HypothesisId::H4]).unwrap();
        let e = split.get(HypothesisId::H4);
        assert_eq!(e.status, Status::Fail);
        assert!(e.witness.as_ref().unwrap().aux.is_some());
    }

    #[test]
    fn h7_equality_case_passes() {
        let hp = HypothesisParams::default();
        let inf = spec(Family::cubic());
        let r = check_hypotheses(&inf, &hp, &Sampler::default(), Some(&inf), &[HypothesisId::H7]).unwrap();
        assert_eq!(r.status(HypothesisId::H7), Status::Pass);
        let w = r.get(HypothesisId::H7).witness.clone().unwrap();
        assert!(w.margin.abs() < 1e-11);
    }

    #[test]
    fn missing_infinity_is_an_error() {
        let r = check_hypotheses(
            &spec(Family::cubic()),
            &HypothesisParams::default(),
            &Sampler::default(),
            None,
            &[HypothesisId::H5],
        );
        assert!(matches!(r, Err(NlsError::MissingInfinitySpec(_))));
    }

    #[test]
    fn x_decay_family_h5() {
        let base = Family::cubic();
        let h = spec(Family::XDecay(Box::new(base.clone())));
        let inf = spec(base);
        let r = check_hypotheses(
            &h,
            &HypothesisParams::default(),
            &Sampler::default(),
            Some(&inf),
            &[HypothesisId::H5, HypothesisId::HinfPeriodic, HypothesisId::H6],
        )
        .unwrap();
        assert_eq!(r.status(HypothesisId::H5), Status::Pass);
        assert_eq!(r.status(HypothesisId::HinfPeriodic), Status::Pass);
        assert_eq!(r.status(HypothesisId::H6), Status::Pass);
        // comparing against a different asymptote fails
        let wrong = spec(Family::Power { p: 2.0 });
        let r = check_hypotheses(&h, &HypothesisParams::default(), &Sampler::default(), Some(&wrong), &[HypothesisId::H5]).unwrap();
        assert_eq!(r.status(HypothesisId::H5), Status::Fail);
    }

    #[test]
    fn product_coupling_h3_confirmed() {
        let p = spec(Family::Product { coefficient: 1.0, alpha: [2.0, 2.0] });
        let hp = HypothesisParams {
            delta: 0.5,
            alphas: vec![2.0, 2.0],
            ..HypothesisParams::default()
        };
        let r = check_hypotheses(&p, &hp, &Sampler::default(), None, &[HypothesisId::H3]).unwrap();
        assert_eq!(r.status(HypothesisId::H3), Status::Confirmed);
        let strict = HypothesisParams { delta: 1.0, ..hp };
        let r = check_hypotheses(&p, &strict, &Sampler::default(), None, &[HypothesisId::H3]).unwrap();
        assert_eq!(r.status(HypothesisId::H3), Status::Fail);
    }

    #[test]
    fn h1_forms_by_dimension() {
        let cubic = spec(Family::cubic());
        let hp = HypothesisParams::default();
        let r = check_hypotheses(&cubic, &hp, &Sampler::default(), None, &[HypothesisId::H1, HypothesisId::H1Lipschitz]).unwrap();
        assert_eq!(r.status(HypothesisId::H1), Status::NotApplicable);
        assert_eq!(r.status(HypothesisId::H1Lipschitz), Status::Pass);

        let hp2 = HypothesisParams { ell1: 1.0, beta: 0.5, sigma: 1.0, gamma: 1.0, alphas: vec![1.0], ..hp };
        let r = check_hypotheses(&cubic, &hp2, &Sampler::for_dims(2), None, &[HypothesisId::H1, HypothesisId::H1Lipschitz]).unwrap();
        assert_eq!(r.status(HypothesisId::H1), Status::Pass);
        assert_eq!(r.status(HypothesisId::H1Lipschitz), Status::NotApplicable);
    }

    #[test]
    fn params_validation() {
        let hp = HypothesisParams::default();
        assert!(hp.validate(1, 1).is_ok());
        assert!(hp.validate(2, 1).is_err()); // l1 = 2 is not below 4/N = 2
        assert!(HypothesisParams { t_exp: 2.0, ..hp.clone() }.validate(1, 1).is_err());
        assert!(HypothesisParams { beta: 3.0, ..hp.clone() }.validate(1, 1).is_err());
        assert!(HypothesisParams { alphas: vec![1.0], ..hp.clone() }.validate(1, 2).is_err());
        assert!(HypothesisParams { alphas: vec![4.0, 3.0], ..hp }.validate(1, 2).is_err());
    }
}
