//! Robustness certificates for ẋ = A(t)x + w(x, t).
//!
//! Convergence of all solutions to 0 follows from
//!
//! * A1: ∫₀ᵗ μ[A(s)] ds → −∞,
//! * A2: μ[A(t)] < 0 for all large t,
//! * A3: ‖w̃(t)‖ / μ[A(t)] → 0, where ‖w(x,t)‖ ≤ ‖w̃(t)‖.
//!
//! Each is checked on a finite horizon and reported as holds-on-horizon,
//! fails or inconclusive. The variation-of-constants envelope
//!
//! ```text
//! ‖x(t)‖ ≤ ‖x(0)‖ e^{∫₀ᵗ μ} + ∫₀ᵗ e^{∫_τ^t μ} w̃(τ) dτ
//! ```
//!
//! is evaluated by [`envelope_bound`] and compared against simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::funclass::{log_log_slope, FunctionClass, ProbeSeries, ProbeVerdict, VerdictRule};
use crate::linalg::{log_norm, mat_induced_norm, vec_norm, NormKind};
use crate::odesim::{fundamental_matrix, integrate_ode, transition_matrix, IntegratorSettings};
use crate::quadrature::{cumulative_mu_on, try_integrate, uniform_grid, CumulativeIntegral};
use crate::system::{MatrixFunction, Perturbation, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum AssumptionId {
    A1,
    A2,
    A3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsOnHorizon,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Overall {
    CertifiedOnHorizon,
    NotCertified,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::HoldsOnHorizon => "holds-on-horizon",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl Overall {
    pub fn label(self) -> &'static str {
        match self {
            Overall::CertifiedOnHorizon => "certified-on-horizon",
            Overall::NotCertified => "not-certified",
            Overall::Inconclusive => "inconclusive",
        }
    }

    /// Certified iff all three hold; not certified if any fails.
    pub fn from_verdicts(verdicts: &[Verdict]) -> Self {
        if verdicts.iter().all(|v| *v == Verdict::HoldsOnHorizon) {
            Overall::CertifiedOnHorizon
        } else if verdicts.contains(&Verdict::Fails) {
            Overall::NotCertified
        } else {
            Overall::Inconclusive
        }
    }
}

/// Data a verdict was computed from.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    Cumulative(CumulativeIntegral),
    Samples { ts: Vec<f64>, values: Vec<f64> },
    Probe(ProbeSeries),
    None,
}

impl Evidence {
    /// `(t, value)` rows of the evidence series.
    pub fn rows(&self) -> Vec<(f64, f64)> {
        let zip = |ts: &[f64], vs: &[f64]| ts.iter().copied().zip(vs.iter().copied()).collect();
        match self {
            Evidence::Cumulative(c) => zip(&c.ts, &c.values),
            Evidence::Samples { ts, values } => zip(ts, values),
            Evidence::Probe(p) => zip(&p.ts, &p.values),
            Evidence::None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionVerdict {
    pub id: AssumptionId,
    pub verdict: Verdict,
    /// The decision rule with its parameters.
    pub rule: String,
    /// Why the rule produced this verdict.
    pub detail: String,
    pub evidence: Evidence,
}

impl AssumptionVerdict {
    fn inconclusive(id: AssumptionId, rule: String, detail: impl Into<String>) -> Self {
        Self {
            id,
            verdict: Verdict::Inconclusive,
            rule,
            detail: detail.into(),
            evidence: Evidence::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyConfig {
    /// Horizon for A1–A3; the scenario default when `None`.
    pub horizon: Option<f64>,
    pub divergence_threshold: f64,
    pub a1_steps: usize,
    /// A2 window is the last `tail_fraction` of the horizon.
    pub tail_fraction: f64,
    pub a2_samples: usize,
    pub a3_points: usize,
    /// Log–log slope the running tail supremum of the A3 ratio must reach
    /// when the ratio itself is not yet below the verdict threshold.
    pub a3_tail_slope: f64,
    pub rule: VerdictRule,
    pub quad_tol: f64,
    pub simulate: bool,
    pub simulation_horizon: Option<f64>,
    pub simulation_samples: usize,
    pub initial_radius: f64,
    pub envelope_steps: usize,
    pub envelope_slack: f64,
    pub integrator: IntegratorSettings,
    pub seed: u64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            divergence_threshold: 50.0,
            a1_steps: 400,
            tail_fraction: 0.75,
            a2_samples: 512,
            a3_points: 401,
            a3_tail_slope: -0.25,
            rule: VerdictRule::default(),
            quad_tol: 1e-9,
            simulate: false,
            simulation_horizon: None,
            simulation_samples: 10,
            initial_radius: 10.0,
            envelope_steps: 200,
            envelope_slack: 1e-3,
            integrator: IntegratorSettings::with_tolerances(1e-10, 1e-14),
            seed: 0,
        }
    }
}

fn mu_at(mf: &MatrixFunction, kind: &NormKind, t: f64) -> Result<f64> {
    log_norm(&mf.eval(t)?, kind)
}

/// A1: I(T) ≤ −threshold and I non-increasing over the final quarter of
/// [0, T] with a net decrease there.
pub fn check_a1(
    mf: &MatrixFunction,
    kind: &NormKind,
    horizon: f64,
    threshold: f64,
    steps: usize,
    quad_tol: f64,
) -> AssumptionVerdict {
    let rule = format!(
        "I(T) <= -{threshold} and I non-increasing on [{}, {horizon}], I(t) = integral of mu over [0, t]",
        0.75 * horizon
    );
    if !(horizon > 0.0) || steps < 4 {
        return AssumptionVerdict::inconclusive(AssumptionId::A1, rule, "invalid horizon or grid");
    }
    let grid = uniform_grid(horizon, steps);
    let cum = match cumulative_mu_on(mf, kind, &grid, quad_tol) {
        Ok(c) => c,
        Err(e) => return AssumptionVerdict::inconclusive(AssumptionId::A1, rule, e.to_string()),
    };
    let start = cum.ts.partition_point(|&t| t < 0.75 * horizon);
    let tail = &cum.values[start..];
    let slack = |v: f64| 1e-12 * v.abs().max(1.0);
    let monotone = tail.windows(2).all(|w| w[1] <= w[0] + slack(w[1]));
    let decreasing = monotone && tail.last() < tail.first();
    let last = cum.last();
    let (verdict, detail) = if !cum.converged {
        (
            Verdict::Inconclusive,
            format!("quadrature did not converge; I(T) = {last}"),
        )
    } else if decreasing && last <= -threshold {
        (Verdict::HoldsOnHorizon, format!("I(T) = {last}"))
    } else if decreasing {
        (
            Verdict::Inconclusive,
            format!("I decreasing but I(T) = {last} above threshold"),
        )
    } else {
        (
            Verdict::Fails,
            format!("I not decreasing on final quarter; I(T) = {last}"),
        )
    };
    AssumptionVerdict {
        id: AssumptionId::A1,
        verdict,
        rule,
        detail,
        evidence: Evidence::Cumulative(cum),
    }
}

/// A2: max of μ over `samples` + 1 equispaced points of [t1, t2] is negative.
pub fn check_a2(
    mf: &MatrixFunction,
    kind: &NormKind,
    t1: f64,
    t2: f64,
    samples: usize,
) -> AssumptionVerdict {
    let rule = format!("max mu < 0 over {} samples of [{t1}, {t2}]", samples + 1);
    if !(t1 >= 0.0 && t2 > t1) || samples < 1 {
        return AssumptionVerdict::inconclusive(AssumptionId::A2, rule, "invalid tail window");
    }
    let ts: Vec<f64> = (0..=samples)
        .map(|k| t1 + (t2 - t1) * k as f64 / samples as f64)
        .collect();
    let values = match ts
        .iter()
        .map(|&t| mu_at(mf, kind, t))
        .collect::<Result<Vec<_>>>()
    {
        Ok(v) => v,
        Err(e) => return AssumptionVerdict::inconclusive(AssumptionId::A2, rule, e.to_string()),
    };
    let (arg, max) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |a, (i, v)| if v > a.1 { (i, v) } else { a },
            );
    let verdict = if max < 0.0 {
        Verdict::HoldsOnHorizon
    } else {
        Verdict::Fails
    };
    AssumptionVerdict {
        id: AssumptionId::A2,
        verdict,
        rule,
        detail: format!("max mu = {max} at t = {}", ts[arg]),
        evidence: Evidence::Samples { ts, values },
    }
}

/// Running supremum from the right: s_k = max_{j ≥ k} v_j.
fn tail_supremum(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for k in (0..out.len().saturating_sub(1)).rev() {
        out[k] = out[k].max(out[k + 1]);
    }
    out
}

/// A3: the series |w̃(t)/μ(t)| on `t_grid` goes to zero.
///
/// Requires μ < 0 on the second half of the grid. The ratio series gets the
/// funclass verdict; tends-to-zero holds. Otherwise the running tail
/// supremum of the ratio must decay with log–log slope ≤ `tail_slope` over
/// the second half to hold; a bounded-away ratio without that decay fails.
pub fn check_a3(
    perturbation: Option<&Perturbation>,
    mf: &MatrixFunction,
    kind: &NormKind,
    t_grid: &[f64],
    rule: VerdictRule,
    tail_slope: f64,
) -> AssumptionVerdict {
    let rule_text = format!(
        "|w/mu| tends to zero (last < {}, negative log-log trend), or its tail supremum has log-log slope <= {tail_slope}; fails if bounded away (> {})",
        rule.eps_abs, rule.delta
    );
    if t_grid.len() < 4 {
        return AssumptionVerdict::inconclusive(AssumptionId::A3, rule_text, "grid too short");
    }
    let envelope = |t: f64| -> Option<Result<f64>> {
        match perturbation {
            None => Some(Ok(0.0)),
            Some(p) => p.envelope(t, kind),
        }
    };
    if perturbation.is_some_and(|p| !p.has_envelope()) {
        return AssumptionVerdict::inconclusive(
            AssumptionId::A3,
            rule_text,
            "perturbation has no bound envelope",
        );
    }
    let mut mus = Vec::with_capacity(t_grid.len());
    let mut ratios = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let pair = mu_at(mf, kind, t).and_then(|m| envelope(t).unwrap().map(|w| (m, w)));
        match pair {
            Ok((m, w)) => {
                mus.push(m);
                ratios.push((w / m).abs());
            }
            Err(e) => {
                return AssumptionVerdict::inconclusive(AssumptionId::A3, rule_text, e.to_string())
            }
        }
    }
    let half = t_grid.len() / 2;
    if let Some(k) = (half..mus.len()).find(|&k| !(mus[k] < 0.0)) {
        return AssumptionVerdict {
            evidence: Evidence::Samples {
                ts: t_grid.to_vec(),
                values: ratios,
            },
            ..AssumptionVerdict::inconclusive(
                AssumptionId::A3,
                rule_text,
                format!(
                    "mu = {} >= 0 at t = {}; ratio undefined in sign",
                    mus[k], t_grid[k]
                ),
            )
        };
    }
    let series = ProbeSeries::new(FunctionClass::V, t_grid.to_vec(), ratios, rule);
    let last = *series.values.last().unwrap();
    let sup_slope = log_log_slope(t_grid, &tail_supremum(&series.values));
    let slope_text = sup_slope.map_or("undefined".to_string(), |s| s.to_string());
    let (verdict, detail) = match series.verdict {
        ProbeVerdict::TendsToZero => (
            Verdict::HoldsOnHorizon,
            format!("ratio tends to zero; last = {last}"),
        ),
        _ if sup_slope.is_some_and(|s| s <= tail_slope) => (
            Verdict::HoldsOnHorizon,
            format!("ratio tail supremum decays with slope {slope_text}; last = {last}"),
        ),
        ProbeVerdict::BoundedAway => (
            Verdict::Fails,
            format!("ratio bounded away from zero; last = {last}, tail-sup slope {slope_text}"),
        ),
        _ => (
            Verdict::Inconclusive,
            format!("ratio trend undecided; last = {last}, tail-sup slope {slope_text}"),
        ),
    };
    AssumptionVerdict {
        id: AssumptionId::A3,
        verdict,
        rule: rule_text,
        detail,
        evidence: Evidence::Probe(series),
    }
}

/// The variation-of-constants envelope on a grid starting at 0:
/// B(t) = ‖x(0)‖ e^{I(t)} + J(t).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSeries {
    pub ts: Vec<f64>,
    /// I(t) = ∫₀ᵗ μ.
    pub cumulative: Vec<f64>,
    /// J(t) = ∫₀ᵗ e^{I(t)−I(τ)} w̃(τ) dτ.
    pub forced: Vec<f64>,
    pub converged: bool,
}

impl EnvelopeSeries {
    pub fn bound(&self, x0_norm: f64) -> Vec<f64> {
        self.cumulative
            .iter()
            .zip(&self.forced)
            .map(|(i, j)| x0_norm * i.exp() + j)
            .collect()
    }
}

/// Evaluates the envelope on `t_grid` (must start at 0).
///
/// Works interval by interval: with ΔIₖ = ∫_{tₖ₋₁}^{tₖ} μ,
/// Jₖ = e^{ΔIₖ} Jₖ₋₁ + ∫_{tₖ₋₁}^{tₖ} e^{ΔIₖ − ∫_{tₖ₋₁}^τ μ} w̃(τ) dτ,
/// so only exponents local to one interval are ever formed and nothing
/// overflows when I(t) is large and negative.
pub fn envelope_bound(
    scenario: &Scenario,
    kind: &NormKind,
    t_grid: &[f64],
    tol: f64,
) -> Result<EnvelopeSeries> {
    if t_grid.first() != Some(&0.0) || t_grid.len() < 2 {
        return Err(Error::invalid(
            "envelope grid must start at 0 and have two points",
        ));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("envelope grid must be strictly increasing"));
    }
    let perturbation = scenario.perturbation.as_ref();
    if perturbation.is_some_and(|p| !p.has_envelope()) {
        return Err(Error::invalid("perturbation has no bound envelope"));
    }
    let mf = &scenario.matrix;
    let mu = |t: f64| mu_at(mf, kind, t);
    let wt = |t: f64| -> Result<f64> {
        match perturbation {
            None => Ok(0.0),
            Some(p) => p.envelope(t, kind).unwrap(),
        }
    };
    let per_interval = tol / (t_grid.len() - 1) as f64;
    const INNER_TOL: f64 = 1e-13;
    let pieces = t_grid
        .par_windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let di = try_integrate(mu, a, b, per_interval)?;
            let forced = if perturbation.is_none() {
                None
            } else {
                Some(try_integrate(
                    |tau| {
                        let inner = if tau > a {
                            try_integrate(mu, a, tau, INNER_TOL)?.value
                        } else {
                            0.0
                        };
                        Ok((di.value - inner).exp() * wt(tau)?)
                    },
                    a,
                    b,
                    per_interval,
                )?)
            };
            Ok((di, forced))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cumulative = vec![0.0];
    let mut forced = vec![0.0];
    let mut converged = true;
    for (di, f) in pieces {
        converged &= di.converged;
        cumulative.push(cumulative.last().unwrap() + di.value);
        let carried = di.value.exp() * forced.last().unwrap();
        forced.push(match f {
            Some(q) => {
                converged &= q.converged;
                carried + q.value
            }
            None => carried,
        });
    }
    Ok(EnvelopeSeries {
        ts: t_grid.to_vec(),
        cumulative,
        forced,
        converged,
    })
}

/// Simulation-versus-envelope cross-check summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub performed: bool,
    /// max over runs and grid points of ‖x(t)‖ / B(t).
    pub max_envelope_ratio: Option<f64>,
    /// ‖x(T)‖ from the scenario's default initial state.
    pub tail_norm: Option<f64>,
    pub runs: usize,
    /// Grid points with ‖x(t)‖ > B(t)(1 + slack).
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SimulationSummary {
    fn skipped() -> Self {
        Self {
            performed: false,
            max_envelope_ratio: None,
            tail_norm: None,
            runs: 0,
            violations: 0,
            error: None,
        }
    }
}

/// Draws a point with ‖x‖ ≤ radius in norm `kind`.
pub fn random_state(
    rng: &mut impl Rng,
    n: usize,
    kind: &NormKind,
    radius: f64,
) -> Result<Vec<f64>> {
    loop {
        let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let norm = vec_norm(&dir, kind)?;
        if norm > 1e-3 {
            let r = radius * rng.gen::<f64>();
            return Ok(dir.iter().map(|d| d * r / norm).collect());
        }
    }
}

/// Simulates from the default initial state and `config.simulation_samples`
/// random states, comparing ‖x(t)‖ with the envelope.
pub fn simulation_check(
    scenario: &Scenario,
    kind: &NormKind,
    config: &CertifyConfig,
) -> SimulationSummary {
    let run = || -> Result<SimulationSummary> {
        let horizon = config
            .simulation_horizon
            .unwrap_or_else(|| scenario.default_simulation_horizon());
        let grid = uniform_grid(horizon, config.envelope_steps.max(2));
        let env = envelope_bound(scenario, kind, &grid, config.quad_tol)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut starts = vec![scenario.default_initial_state()];
        for _ in 0..config.simulation_samples {
            starts.push(random_state(
                &mut rng,
                scenario.dim(),
                kind,
                config.initial_radius,
            )?);
        }
        let mut max_ratio: f64 = 0.0;
        let mut violations = 0;
        let mut tail_norm = None;
        for x0 in &starts {
            let traj = integrate_ode(
                |t, x, out| scenario.rhs(t, x, out),
                x0,
                (0.0, horizon),
                &config.integrator,
            )?;
            let bound = env.bound(vec_norm(x0, kind)?);
            for (x, b) in traj.sample_grid(&grid)?.iter().zip(&bound) {
                let norm = vec_norm(x, kind)?;
                if *b > 0.0 {
                    max_ratio = max_ratio.max(norm / b);
                }
                if norm > b * (1.0 + config.envelope_slack) + 1e-12 {
                    violations += 1;
                }
            }
            tail_norm.get_or_insert(vec_norm(traj.last_state(), kind)?);
        }
        Ok(SimulationSummary {
            performed: true,
            max_envelope_ratio: Some(max_ratio),
            tail_norm,
            runs: starts.len(),
            violations,
            error: None,
        })
    };
    run().unwrap_or_else(|e| SimulationSummary {
        performed: true,
        error: Some(e.to_string()),
        ..SimulationSummary::skipped()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub scenario: String,
    pub kind: NormKind,
    pub horizon: f64,
    pub assumptions: Vec<AssumptionVerdict>,
    pub overall: Overall,
    pub simulation: SimulationSummary,
}

impl CertificateReport {
    /// Name of the evidence file for one assumption.
    pub fn evidence_ref(&self, id: AssumptionId) -> String {
        format!("{}_{}_{:?}.csv", self.scenario, self.kind.label(), id)
    }

    /// Overall verdict recomputed from the stored assumption verdicts.
    pub fn recomputed_overall(&self) -> Overall {
        Overall::from_verdicts(
            &self
                .assumptions
                .iter()
                .map(|a| a.verdict)
                .collect::<Vec<_>>(),
        )
    }

    pub fn verdict(&self, id: AssumptionId) -> Verdict {
        self.assumptions
            .iter()
            .find(|a| a.id == id)
            .map_or(Verdict::Inconclusive, |a| a.verdict)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let assumptions: Vec<_> = self
            .assumptions
            .iter()
            .map(|a| {
                serde_json::json!({
                    "id": a.id,
                    "verdict": a.verdict,
                    "rule": a.rule,
                    "detail": a.detail,
                    "evidence_ref": (!matches!(a.evidence, Evidence::None)).then(|| self.evidence_ref(a.id)),
                })
            })
            .collect();
        serde_json::json!({
            "scenario": self.scenario,
            "kind": self.kind.label(),
            "horizon": self.horizon,
            "assumptions": assumptions,
            "overall": self.overall,
            "simulation": self.simulation,
        })
    }
}

/// Checks A1–A3 (and optionally the simulation cross-check) for one kind.
pub fn certify_kind(
    scenario: &Scenario,
    kind: &NormKind,
    config: &CertifyConfig,
) -> CertificateReport {
    let horizon = config.horizon.unwrap_or_else(|| scenario.default_horizon());
    let mf = &scenario.matrix;
    let a1 = check_a1(
        mf,
        kind,
        horizon,
        config.divergence_threshold,
        config.a1_steps,
        config.quad_tol,
    );
    let a2 = check_a2(
        mf,
        kind,
        horizon * (1.0 - config.tail_fraction),
        horizon,
        config.a2_samples,
    );
    let a3_grid = uniform_grid(horizon, config.a3_points.max(5) - 1);
    let a3 = check_a3(
        scenario.perturbation.as_ref(),
        mf,
        kind,
        &a3_grid,
        config.rule,
        config.a3_tail_slope,
    );
    let assumptions = vec![a1, a2, a3];
    let overall =
        Overall::from_verdicts(&assumptions.iter().map(|a| a.verdict).collect::<Vec<_>>());
    let simulation = if config.simulate {
        simulation_check(scenario, kind, config)
    } else {
        SimulationSummary::skipped()
    };
    CertificateReport {
        scenario: scenario.name.clone(),
        kind: kind.clone(),
        horizon,
        assumptions,
        overall,
        simulation,
    }
}

/// One report per kind, in the order given; kinds run in parallel.
pub fn certify(
    scenario: &Scenario,
    kinds: &[NormKind],
    config: &CertifyConfig,
) -> Vec<CertificateReport> {
    kinds
        .par_iter()
        .map(|k| certify_kind(scenario, k, config))
        .collect()
}

/// A sample (x, t) at which ‖w(x,t)‖ exceeded the envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub norm: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotCheck {
    pub passed: bool,
    pub samples: usize,
    pub witness: Option<Witness>,
}

/// Monte Carlo check of ‖w(x,t)‖ ≤ w̃(t) for ‖x‖ ≤ `x_radius`, t in `t_range`.
/// Stops at the first violation beyond a 1e−12 slack.
pub fn envelope_spotcheck(
    perturbation: &Perturbation,
    kind: &NormKind,
    sample_count: usize,
    t_range: (f64, f64),
    x_radius: f64,
    seed: u64,
) -> Result<SpotCheck> {
    if !perturbation.has_envelope() {
        return Err(Error::invalid("perturbation has no bound envelope"));
    }
    if !(t_range.0 >= 0.0 && t_range.1 >= t_range.0) {
        return Err(Error::invalid("invalid time range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = perturbation.dim();
    for k in 0..sample_count {
        let t = if t_range.1 > t_range.0 {
            rng.gen_range(t_range.0..=t_range.1)
        } else {
            t_range.0
        };
        let x = random_state(&mut rng, n, kind, x_radius)?;
        let norm = vec_norm(&perturbation.eval(&x, t), kind)?;
        let envelope = perturbation.envelope(t, kind).unwrap()?;
        if norm > envelope * (1.0 + 1e-12) + 1e-12 {
            return Ok(SpotCheck {
                passed: false,
                samples: k + 1,
                witness: Some(Witness {
                    t,
                    x,
                    norm,
                    envelope,
                }),
            });
        }
    }
    Ok(SpotCheck {
        passed: true,
        samples: sample_count,
        witness: None,
    })
}

/// Outcome of checking ‖Φ(t, τ)‖ ≤ e^{∫_τ^t μ} on sampled pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionCheck {
    pub pairs: usize,
    /// max of ‖Φ(t, τ)‖ / e^{∫_τ^t μ}.
    pub max_ratio: f64,
    /// (τ, t) attaining the maximum.
    pub worst: (f64, f64),
}

/// Samples `pair_count` grid pairs τ ≤ t on [0, horizon] and compares the
/// induced norm of the transition matrix with the log-norm bound.
pub fn verify_transition_bound(
    mf: &MatrixFunction,
    kind: &NormKind,
    horizon: f64,
    steps: usize,
    pair_count: usize,
    seed: u64,
    settings: &IntegratorSettings,
) -> Result<TransitionCheck> {
    let grid = uniform_grid(horizon, steps);
    let phi = fundamental_matrix(mf, &grid, settings)?;
    let cum = cumulative_mu_on(mf, kind, &grid, 1e-10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = TransitionCheck {
        pairs: 0,
        max_ratio: 0.0,
        worst: (0.0, 0.0),
    };
    for _ in 0..pair_count {
        let i = rng.gen_range(0..grid.len());
        let j = rng.gen_range(i..grid.len());
        let m = transition_matrix(&phi, grid[j], grid[i])?;
        let ratio = (mat_induced_norm(&m, kind)?.ln() - (cum.values[j] - cum.values[i])).exp();
        best.pairs += 1;
        if ratio > best.max_ratio {
            best.max_ratio = ratio;
            best.worst = (grid[i], grid[j]);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::system::{builtin_scenario, CustomPerturbation};
    use std::collections::BTreeMap;

    fn scenario(name: &str) -> Scenario {
        builtin_scenario(name, &BTreeMap::new()).unwrap()
    }

    fn with_params(name: &str, params: serde_json::Value) -> Scenario {
        let map: BTreeMap<String, serde_json::Value> = serde_json::from_value(params).unwrap();
        builtin_scenario(name, &map).unwrap()
    }

    #[test]
    fn a1_examples() {
        let ex2 = scenario("example2");
        let v = check_a1(&ex2.matrix, &NormKind::Two, 20.0, 50.0, 400, 1e-9);
        assert_eq!(v.verdict, Verdict::HoldsOnHorizon);
        if let Evidence::Cumulative(c) = &v.evidence {
            assert!((c.last() + 220.0).abs() < 220.0 * 1e-6);
        } else {
            panic!("expected cumulative evidence");
        }
        let v = check_a1(&ex2.matrix, &NormKind::One, 20.0, 50.0, 400, 1e-9);
        assert_eq!(v.verdict, Verdict::Fails, "{}", v.detail);
        let zero = MatrixFunction::Constant(Matrix::zeros(2, 2));
        let v = check_a1(&zero, &NormKind::Inf, 10.0, 50.0, 100, 1e-9);
        assert_eq!(v.verdict, Verdict::Fails);
        // Decreasing but not below the threshold on a short horizon.
        let v = check_a1(&ex2.matrix, &NormKind::Two, 5.0, 50.0, 100, 1e-9);
        assert_eq!(v.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn a2_examples() {
        let ex2 = scenario("example2");
        assert_eq!(
            check_a2(&ex2.matrix, &NormKind::Two, 0.0, 20.0, 512).verdict,
            Verdict::HoldsOnHorizon
        );
        let ex3 = scenario("example3");
        let v = check_a2(&ex3.matrix, &NormKind::Two, 0.0, 10.0, 512);
        assert_eq!(v.verdict, Verdict::HoldsOnHorizon);
        assert_eq!(v.evidence.rows().len(), 513);
        let a1 =
            MatrixFunction::Constant(Matrix::from_rows(&[[-11.0, 10.0], [2.0, -3.0]]).unwrap());
        assert_eq!(
            check_a2(&a1, &NormKind::Two, 3.0, 9.0, 512).verdict,
            Verdict::Fails
        );
    }

    #[test]
    fn a3_examples() {
        let grid = uniform_grid(20.0, 400);
        let rule = VerdictRule::default();
        let ex2 = scenario("example2");
        let v = check_a3(
            ex2.perturbation.as_ref(),
            &ex2.matrix,
            &NormKind::Two,
            &grid,
            rule,
            -0.25,
        );
        assert_eq!(v.verdict, Verdict::HoldsOnHorizon, "{}", v.detail);
        let ex3 = scenario("example3");
        let v = check_a3(
            ex3.perturbation.as_ref(),
            &ex3.matrix,
            &NormKind::Two,
            &grid,
            rule,
            -0.25,
        );
        assert_eq!(v.verdict, Verdict::Fails, "{}", v.detail);
        assert!(v
            .evidence
            .rows()
            .iter()
            .all(|(_, r)| (r - 1.0).abs() < 1e-12));
        let v = check_a3(None, &ex3.matrix, &NormKind::Two, &grid, rule, -0.25);
        assert_eq!(v.verdict, Verdict::HoldsOnHorizon);
        let bare = Perturbation::Custom(CustomPerturbation::new(2, |x, _| x.to_vec()));
        let v = check_a3(Some(&bare), &ex3.matrix, &NormKind::Two, &grid, rule, -0.25);
        assert_eq!(v.verdict, Verdict::Inconclusive);
        assert!(v.detail.contains("envelope"));
        // μ₁ of example2 with β = t⁴ turns positive: ratio sign undefined.
        let v = check_a3(
            ex2.perturbation.as_ref(),
            &ex2.matrix,
            &NormKind::One,
            &grid,
            rule,
            -0.25,
        );
        assert_eq!(v.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn envelope_unperturbed_is_exponential_of_integral() {
        let mut s = scenario("example2");
        s.perturbation = None;
        let grid = uniform_grid(5.0, 50);
        let env = envelope_bound(&s, &NormKind::Two, &grid, 1e-10).unwrap();
        for (t, b) in grid.iter().zip(env.bound(1.0)) {
            let exact = (-(t * t / 2.0 + t)).exp();
            assert!((b - exact).abs() <= 1e-9 * exact.max(1e-300), "t={t}");
        }
    }

    #[test]
    fn envelope_tight_for_example3() {
        let s = scenario("example3");
        let grid = uniform_grid(4.0, 80);
        let env = envelope_bound(&s, &NormKind::Two, &grid, 1e-10).unwrap();
        for (t, b) in grid.iter().zip(env.bound(0.0)) {
            assert!((b - (1.0 - (-t).exp())).abs() < 1e-8, "t={t}: {b}");
        }
    }

    #[test]
    fn envelope_survives_large_negative_integral() {
        let s = with_params(
            "lti_hurwitz",
            serde_json::json!({"matrix": [[-400.0, 0.0], [0.0, -400.0]]}),
        );
        let grid = uniform_grid(10.0, 20);
        let env = envelope_bound(&s, &NormKind::Two, &grid, 1e-9).unwrap();
        assert!(*env.cumulative.last().unwrap() < -3000.0);
        assert!(env.forced.iter().all(|j| j.is_finite() && *j >= 0.0));
        // Equilibrium of J′ = μJ + e^{−t}: J ≈ e^{−t}/(400 − 1).
        let j = env.forced[10];
        assert!((j - (-5.0f64).exp() / 399.0).abs() < 1e-9);
    }

    #[test]
    fn certify_example2_two_and_one() {
        let s = scenario("example2");
        let reports = certify(
            &s,
            &[NormKind::Two, NormKind::One, NormKind::Inf],
            &CertifyConfig::default(),
        );
        assert_eq!(reports[0].overall, Overall::CertifiedOnHorizon);
        assert_eq!(reports[1].overall, Overall::NotCertified);
        assert_eq!(reports[1].verdict(AssumptionId::A1), Verdict::Fails);
        assert_eq!(reports[2].verdict(AssumptionId::A1), Verdict::Fails);
        for r in &reports {
            assert_eq!(r.overall, r.recomputed_overall());
        }
    }

    #[test]
    fn certify_example3_with_simulation() {
        let s = scenario("example3");
        let cfg = CertifyConfig {
            simulate: true,
            ..CertifyConfig::default()
        };
        let r = certify_kind(&s, &NormKind::Two, &cfg);
        assert_eq!(r.overall, Overall::NotCertified);
        assert_eq!(r.verdict(AssumptionId::A3), Verdict::Fails);
        assert_eq!(r.verdict(AssumptionId::A1), Verdict::HoldsOnHorizon);
        let sim = &r.simulation;
        assert!(sim.performed && sim.error.is_none(), "{sim:?}");
        assert_eq!(sim.violations, 0);
        assert!((sim.tail_norm.unwrap() - (1.0 - (-4.0f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn reports_are_deterministic() {
        let s = scenario("example2");
        let cfg = CertifyConfig {
            simulate: true,
            seed: 7,
            ..CertifyConfig::default()
        };
        let a = certify(&s, &[NormKind::Two], &cfg)[0].to_json().to_string();
        let b = certify(&s, &[NormKind::Two], &cfg)[0].to_json().to_string();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["overall"], "certified-on-horizon");
        assert_eq!(v["assumptions"][0]["id"], "A1");
        assert_eq!(v["assumptions"][2]["evidence_ref"], "example2_2_A3.csv");
        assert_eq!(v["simulation"]["violations"], 0);
    }

    #[test]
    fn spotcheck_cases() {
        let ex2 = scenario("example2").perturbation.unwrap();
        let r = envelope_spotcheck(&ex2, &NormKind::Two, 500, (0.0, 20.0), 10.0, 1).unwrap();
        assert!(r.passed);
        let bounded = Perturbation::Custom(
            CustomPerturbation::new(2, |x, t| vec![(-t).exp() * x[0].sin(), 0.0])
                .with_envelope(|t, _| (-t).exp()),
        );
        assert!(
            envelope_spotcheck(&bounded, &NormKind::Inf, 1000, (0.0, 5.0), 10.0, 2)
                .unwrap()
                .passed
        );
        let identity = Perturbation::Custom(
            CustomPerturbation::new(2, |x, _| x.to_vec()).with_envelope(|_, _| 1.0),
        );
        let r = envelope_spotcheck(&identity, &NormKind::Two, 1000, (0.0, 1.0), 2.0, 3).unwrap();
        assert!(!r.passed);
        let w = r.witness.unwrap();
        assert!(w.norm > 1.0 && (vec_norm(&w.x, &NormKind::Two).unwrap() - w.norm).abs() < 1e-12);
    }

    #[test]
    fn transition_bound_holds_for_examples() {
        let settings = IntegratorSettings::with_tolerances(1e-11, 1e-30);
        for name in ["example2", "example3"] {
            let s = scenario(name);
            let c = verify_transition_bound(&s.matrix, &NormKind::Two, 4.0, 40, 60, 5, &settings)
                .unwrap();
            assert!(c.max_ratio <= 1.0 + 1e-6, "{name}: {c:?}");
        }
    }
}
