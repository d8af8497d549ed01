//! Finite-horizon membership diagnostics for the perturbation classes
//!
//! ```text
//! 𝒱  : ‖h(t)‖ → 0
//! 𝒜𝒟 : ∫_t^{t+1} ‖h(s)‖ ds → 0
//! 𝒟  : sup_{0≤η≤1} ‖∫_t^{t+η} h(s) ds‖ → 0
//! ```
//!
//! A limit at infinity cannot be decided from finitely many samples, so every
//! probe ends in a heuristic [`ProbeVerdict`] produced by [`VerdictRule`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vec_norm, NormKind};
use crate::quadrature::try_integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionClass {
    V,
    AD,
    D,
}

impl FunctionClass {
    pub fn label(self) -> &'static str {
        match self {
            FunctionClass::V => "V",
            FunctionClass::AD => "AD",
            FunctionClass::D => "D",
        }
    }
}

impl std::str::FromStr for FunctionClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "V" => Ok(FunctionClass::V),
            "AD" => Ok(FunctionClass::AD),
            "D" => Ok(FunctionClass::D),
            other => Err(Error::Unknown {
                what: "function class",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeVerdict {
    TendsToZero,
    BoundedAway,
    Inconclusive,
}

impl ProbeVerdict {
    pub fn label(self) -> &'static str {
        match self {
            ProbeVerdict::TendsToZero => "tends-to-zero",
            ProbeVerdict::BoundedAway => "bounded-away",
            ProbeVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// Thresholds turning a diagnostic series into a verdict.
///
/// * tends-to-zero: last value < `eps_abs` and the log–log least-squares
///   slope over the second half of the grid is negative (or that half is
///   identically zero);
/// * bounded-away: every value in the second half exceeds `delta`;
/// * inconclusive otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictRule {
    pub eps_abs: f64,
    pub delta: f64,
}

impl Default for VerdictRule {
    fn default() -> Self {
        Self {
            eps_abs: 1e-3,
            delta: 1e-2,
        }
    }
}

/// Least-squares slope of log d against log t over the second half of the
/// samples. Points with t ≤ 0 or d = 0 are skipped; `None` if fewer than two
/// points remain.
pub fn log_log_slope(ts: &[f64], values: &[f64]) -> Option<f64> {
    let start = ts.len() / 2;
    let pts: Vec<(f64, f64)> = ts[start..]
        .iter()
        .zip(&values[start..])
        .filter(|(t, d)| **t > 0.0 && **d > 0.0)
        .map(|(t, d)| (t.ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

impl VerdictRule {
    pub fn classify(&self, ts: &[f64], values: &[f64]) -> (ProbeVerdict, Option<f64>) {
        if values.is_empty() {
            return (ProbeVerdict::Inconclusive, None);
        }
        let tail = &values[values.len() / 2..];
        let slope = log_log_slope(ts, values);
        let last = *values.last().unwrap();
        let tail_zero = tail.iter().all(|d| *d == 0.0);
        if last < self.eps_abs && (tail_zero || slope.is_some_and(|s| s < 0.0)) {
            (ProbeVerdict::TendsToZero, slope)
        } else if tail.iter().all(|d| *d > self.delta) {
            (ProbeVerdict::BoundedAway, slope)
        } else {
            (ProbeVerdict::Inconclusive, slope)
        }
    }
}

/// A windowed diagnostic sequence with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSeries {
    pub class: FunctionClass,
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub verdict: ProbeVerdict,
    pub trend_slope: Option<f64>,
    pub rule: VerdictRule,
    /// Windows whose quadrature hit the depth limit.
    pub unconverged_windows: usize,
}

impl ProbeSeries {
    pub fn new(class: FunctionClass, ts: Vec<f64>, values: Vec<f64>, rule: VerdictRule) -> Self {
        let (verdict, trend_slope) = rule.classify(&ts, &values);
        Self {
            class,
            ts,
            values,
            verdict,
            trend_slope,
            rule,
            unconverged_windows: 0,
        }
    }

    /// `{class, verdict, trend_slope, params}` sidecar for the CSV series.
    pub fn sidecar(&self, params: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "class": self.class.label(),
            "verdict": self.verdict.label(),
            "trend_slope": self.trend_slope,
            "params": params,
        })
    }
}

/// A vector function h: [0, ∞) → ℝⁿ that can be probed.
pub trait VectorFunction: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64) -> Result<Vec<f64>>;

    /// Exact componentwise ∫_a^b h, when available.
    fn exact_integral(&self, _a: f64, _b: f64) -> Option<Vec<f64>> {
        None
    }

    /// Exact ∫_a^b ‖h(s)‖ ds, when available.
    fn exact_norm_integral(&self, _a: f64, _b: f64, _kind: &NormKind) -> Option<f64> {
        None
    }
}

/// The needle function: a train of unit-height triangles, the n-th supported
/// on [n−1, n−1+1/n) with its apex at n−1+1/(2n).
pub fn needle(t: f64) -> f64 {
    if !(t >= 0.0) || !t.is_finite() {
        return 0.0;
    }
    let k = t.floor();
    let n = k + 1.0;
    let s = t - k;
    if s < 1.0 / (2.0 * n) {
        2.0 * n * s
    } else if s < 1.0 / n {
        2.0 * (1.0 - n * s)
    } else {
        0.0
    }
}

/// Apex of the n-th needle (n ≥ 1).
pub fn needle_peak(n: usize) -> f64 {
    (n - 1) as f64 + 1.0 / (2.0 * n as f64)
}

/// Exact ∫_a^b needle(s) ds, summing clipped triangle areas.
pub fn needle_integral(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let a = a.max(0.0);
    if b <= a {
        return 0.0;
    }
    let first = a.floor() as usize + 1;
    let last = b.floor() as usize + 1;
    (first..=last)
        .map(|n| {
            let base = (n - 1) as f64;
            let nf = n as f64;
            // Local coordinates on [0, 1/n].
            let (lo, hi) = (a - base, b - base);
            let apex = 1.0 / (2.0 * nf);
            segment_area(0.0, 0.0, apex, 1.0, lo, hi)
                + segment_area(apex, 1.0, 1.0 / nf, 0.0, lo, hi)
        })
        .sum()
}

/// ∫ over [lo, hi] ∩ [x0, x1] of the line through (x0, y0), (x1, y1).
fn segment_area(x0: f64, y0: f64, x1: f64, y1: f64, lo: f64, hi: f64) -> f64 {
    let l = lo.max(x0);
    let r = hi.min(x1);
    if r <= l {
        return 0.0;
    }
    let at = |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    0.5 * (r - l) * (at(l) + at(r))
}

/// Test functions with known class membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinFunction {
    Zero,
    /// scale · [sin eᵗ, cos eᵗ]: in 𝒟 but not in 𝒜𝒟.
    Oscillatory {
        scale: f64,
    },
    /// [needle(t), 0]: in 𝒜𝒟 but not in 𝒱.
    Needle,
    /// [t^{7/8}, 100 cos t]: not in 𝒟.
    Example2Perturbation,
    /// [e^{−t}, 0]: in 𝒱.
    ExpDecay,
}

pub const BUILTIN_FUNCTIONS: [&str; 5] = [
    "oscillatory",
    "needle",
    "example2-perturbation",
    "zero",
    "exp-decay",
];

impl BuiltinFunction {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(BuiltinFunction::Zero),
            "oscillatory" => Ok(BuiltinFunction::Oscillatory { scale: 1.0 }),
            "needle" => Ok(BuiltinFunction::Needle),
            "example2-perturbation" => Ok(BuiltinFunction::Example2Perturbation),
            "exp-decay" => Ok(BuiltinFunction::ExpDecay),
            other => Err(Error::Unknown {
                what: "function",
                name: other.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinFunction::Zero => "zero",
            BuiltinFunction::Oscillatory { .. } => "oscillatory",
            BuiltinFunction::Needle => "needle",
            BuiltinFunction::Example2Perturbation => "example2-perturbation",
            BuiltinFunction::ExpDecay => "exp-decay",
        }
    }

    /// Horizon long enough for the default verdict rule to separate the
    /// known memberships.
    pub fn default_horizon(&self) -> f64 {
        match self {
            BuiltinFunction::Needle => 1000.0,
            BuiltinFunction::Oscillatory { .. } => 9.0,
            BuiltinFunction::Example2Perturbation => 50.0,
            BuiltinFunction::Zero | BuiltinFunction::ExpDecay => 20.0,
        }
    }

    /// Probe grid suited to this function: needle apexes for 𝒱, needle
    /// support starts for the window classes, otherwise a uniform grid with
    /// spacing 1/4.
    pub fn natural_grid(&self, class: FunctionClass, horizon: f64) -> Vec<f64> {
        match self {
            BuiltinFunction::Needle => {
                let count = horizon.floor().max(1.0) as usize;
                match class {
                    FunctionClass::V => (1..=count).map(needle_peak).collect(),
                    _ => (0..count).map(|k| k as f64).collect(),
                }
            }
            _ => {
                let count = (horizon * 4.0).round().max(1.0) as usize;
                (0..=count)
                    .map(|k| horizon * k as f64 / count as f64)
                    .collect()
            }
        }
    }
}

impl VectorFunction for BuiltinFunction {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, t: f64) -> Result<Vec<f64>> {
        Ok(match self {
            BuiltinFunction::Zero => vec![0.0, 0.0],
            BuiltinFunction::Oscillatory { scale } => {
                let (s, c) = t.exp().sin_cos();
                vec![scale * s, scale * c]
            }
            BuiltinFunction::Needle => vec![needle(t), 0.0],
            BuiltinFunction::Example2Perturbation => vec![t.powf(7.0 / 8.0), 100.0 * t.cos()],
            BuiltinFunction::ExpDecay => vec![(-t).exp(), 0.0],
        })
    }

    fn exact_integral(&self, a: f64, b: f64) -> Option<Vec<f64>> {
        match self {
            BuiltinFunction::Zero => Some(vec![0.0, 0.0]),
            BuiltinFunction::Needle => Some(vec![needle_integral(a, b), 0.0]),
            BuiltinFunction::Example2Perturbation => Some(vec![
                8.0 / 15.0 * (b.powf(15.0 / 8.0) - a.powf(15.0 / 8.0)),
                100.0 * (b.sin() - a.sin()),
            ]),
            BuiltinFunction::ExpDecay => Some(vec![(-a).exp() - (-b).exp(), 0.0]),
            BuiltinFunction::Oscillatory { .. } => None,
        }
    }

    fn exact_norm_integral(&self, a: f64, b: f64, kind: &NormKind) -> Option<f64> {
        // h = φ(t)·e₁ with φ ≥ 0 integrates to ‖e₁‖·∫φ.
        let e1 = vec_norm(&[1.0, 0.0], kind).ok()?;
        match self {
            BuiltinFunction::Zero => Some(0.0),
            BuiltinFunction::Needle => Some(e1 * needle_integral(a, b)),
            BuiltinFunction::ExpDecay => Some(e1 * ((-a).exp() - (-b).exp())),
            _ => None,
        }
    }
}

/// Piecewise-linear interpolation of sampled vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    ts: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl SampledFunction {
    pub fn new(ts: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if ts.len() < 2 || ts.len() != values.len() {
            return Err(Error::invalid(
                "sampled function needs at least two samples",
            ));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sample times must be strictly increasing"));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|v| v.len() != n) {
            return Err(Error::invalid("samples must share one nonzero dimension"));
        }
        if values.iter().flatten().chain(&ts).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("samples"));
        }
        Ok(Self { ts, values })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.ts[0], *self.ts.last().unwrap())
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        let i = self
            .ts
            .partition_point(|&s| s <= t)
            .clamp(1, self.ts.len() - 1);
        let k = i - 1;
        Ok((k, (t - self.ts[k]) / (self.ts[k + 1] - self.ts[k])))
    }

    /// Componentwise ∫ from the domain start to t (exact for the interpolant).
    fn primitive(&self, t: f64) -> Result<Vec<f64>> {
        let (k, w) = self.locate(t)?;
        let n = self.dim();
        let mut acc = vec![0.0; n];
        for j in 0..k {
            let h = self.ts[j + 1] - self.ts[j];
            for i in 0..n {
                acc[i] += 0.5 * h * (self.values[j][i] + self.values[j + 1][i]);
            }
        }
        let h = (self.ts[k + 1] - self.ts[k]) * w;
        for i in 0..n {
            let end = self.values[k][i] + w * (self.values[k + 1][i] - self.values[k][i]);
            acc[i] += 0.5 * h * (self.values[k][i] + end);
        }
        Ok(acc)
    }
}

impl VectorFunction for SampledFunction {
    fn dim(&self) -> usize {
        self.values[0].len()
    }

    fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (k, w) = self.locate(t)?;
        Ok(self.values[k]
            .iter()
            .zip(&self.values[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect())
    }

    fn exact_integral(&self, a: f64, b: f64) -> Option<Vec<f64>> {
        let (pa, pb) = (self.primitive(a).ok()?, self.primitive(b).ok()?);
        Some(pb.iter().zip(&pa).map(|(x, y)| x - y).collect())
    }
}

/// Probe configuration shared by the window classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    /// Absolute quadrature tolerance per window (𝒜𝒟) or per η-subinterval (𝒟).
    pub quad_tol: f64,
    /// Uniform η-grid size for the 𝒟 supremum (≥ 16).
    pub eta_points: usize,
    pub rule: VerdictRule,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            quad_tol: 1e-10,
            eta_points: 64,
            rule: VerdictRule::default(),
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("empty probe grid"));
    }
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("probe times must be finite and nonnegative"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("probe grid must be strictly increasing"));
    }
    Ok(())
}

/// 𝒱 diagnostic: dₖ = ‖h(tₖ)‖.
pub fn probe_v(
    h: &dyn VectorFunction,
    grid: &[f64],
    kind: &NormKind,
    rule: VerdictRule,
) -> Result<ProbeSeries> {
    check_grid(grid)?;
    let values = grid
        .iter()
        .map(|&t| vec_norm(&h.eval(t)?, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeSeries::new(
        FunctionClass::V,
        grid.to_vec(),
        values,
        rule,
    ))
}

/// ∫_a^b ‖h‖ with a convergence flag.
fn norm_integral(
    h: &dyn VectorFunction,
    a: f64,
    b: f64,
    kind: &NormKind,
    tol: f64,
) -> Result<(f64, bool)> {
    if let Some(v) = h.exact_norm_integral(a, b, kind) {
        return Ok((v, true));
    }
    let q = try_integrate(|s| vec_norm(&h.eval(s)?, kind), a, b, tol)?;
    Ok((q.value, q.converged))
}

/// Componentwise ∫_a^b h with a convergence flag.
fn vector_integral(h: &dyn VectorFunction, a: f64, b: f64, tol: f64) -> Result<(Vec<f64>, bool)> {
    if let Some(v) = h.exact_integral(a, b) {
        return Ok((v, true));
    }
    let mut out = Vec::with_capacity(h.dim());
    let mut converged = true;
    for i in 0..h.dim() {
        let q = try_integrate(|s| Ok(h.eval(s)?[i]), a, b, tol)?;
        converged &= q.converged;
        out.push(q.value);
    }
    Ok((out, converged))
}

/// 𝒜𝒟 diagnostic: dₖ = ∫_{tₖ}^{tₖ+1} ‖h(s)‖ ds.
pub fn probe_ad(
    h: &dyn VectorFunction,
    grid: &[f64],
    kind: &NormKind,
    settings: &ProbeSettings,
) -> Result<ProbeSeries> {
    check_grid(grid)?;
    let windows = grid
        .par_iter()
        .map(|&t| norm_integral(h, t, t + 1.0, kind, settings.quad_tol))
        .collect::<Result<Vec<_>>>()?;
    let unconverged = windows.iter().filter(|w| !w.1).count();
    let mut series = ProbeSeries::new(
        FunctionClass::AD,
        grid.to_vec(),
        windows.into_iter().map(|w| w.0).collect(),
        settings.rule,
    );
    series.unconverged_windows = unconverged;
    Ok(series)
}

fn window_sup(
    h: &dyn VectorFunction,
    t: f64,
    kind: &NormKind,
    s: &ProbeSettings,
) -> Result<(f64, bool)> {
    let m = s.eta_points;
    let step = 1.0 / m as f64;
    let n = h.dim();
    let mut partial = vec![vec![0.0; n]; m + 1];
    let mut converged = true;
    for j in 1..=m {
        let (a, b) = (t + (j - 1) as f64 * step, t + j as f64 * step);
        let (piece, ok) = vector_integral(h, a, b, s.quad_tol)?;
        converged &= ok;
        partial[j] = partial[j - 1]
            .iter()
            .zip(&piece)
            .map(|(x, y)| x + y)
            .collect();
    }
    let norms = partial
        .iter()
        .map(|p| vec_norm(p, kind))
        .collect::<Result<Vec<_>>>()?;
    let (best, mut sup) = norms
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    // Refine around the best grid point on a finer η grid.
    if best > 0 {
        const REFINE: usize = 8;
        let base = best - 1;
        let upper = (best + 1).min(m);
        let fine = (upper - base) * REFINE;
        let fine_step = (upper - base) as f64 * step / fine as f64;
        let mut acc = partial[base].clone();
        let mut a = t + base as f64 * step;
        for _ in 0..fine {
            let b = a + fine_step;
            let (piece, ok) = vector_integral(h, a, b, s.quad_tol)?;
            converged &= ok;
            for (x, y) in acc.iter_mut().zip(&piece) {
                *x += y;
            }
            sup = sup.max(vec_norm(&acc, kind)?);
            a = b;
        }
    }
    Ok((sup, converged))
}

/// 𝒟 diagnostic: dₖ = max over η ∈ [0, 1] of ‖∫_{tₖ}^{tₖ+η} h‖.
///
/// Partial integrals are accumulated once per window over a uniform η grid
/// and reused; the supremum is then refined around the best grid point.
pub fn probe_d(
    h: &dyn VectorFunction,
    grid: &[f64],
    kind: &NormKind,
    settings: &ProbeSettings,
) -> Result<ProbeSeries> {
    check_grid(grid)?;
    if settings.eta_points < 16 {
        return Err(Error::invalid("η grid needs at least 16 points"));
    }
    let windows = grid
        .par_iter()
        .map(|&t| window_sup(h, t, kind, settings))
        .collect::<Result<Vec<_>>>()?;
    let unconverged = windows.iter().filter(|w| !w.1).count();
    let mut series = ProbeSeries::new(
        FunctionClass::D,
        grid.to_vec(),
        windows.into_iter().map(|w| w.0).collect(),
        settings.rule,
    );
    series.unconverged_windows = unconverged;
    Ok(series)
}

/// Runs the probe for `class`.
pub fn probe(
    class: FunctionClass,
    h: &dyn VectorFunction,
    grid: &[f64],
    kind: &NormKind,
    settings: &ProbeSettings,
) -> Result<ProbeSeries> {
    match class {
        FunctionClass::V => probe_v(h, grid, kind, settings.rule),
        FunctionClass::AD => probe_ad(h, grid, kind, settings),
        FunctionClass::D => probe_d(h, grid, kind, settings),
    }
}
