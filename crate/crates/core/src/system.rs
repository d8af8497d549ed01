//! System matrices A(t), perturbations w(x, t) and the builtin scenarios.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg::{lyapunov_solve, vec_norm, Lu, Matrix, NormKind};

/// Off-diagonal coupling β(t) of the second example system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    /// β(t) = t⁴
    Quartic,
    Constant(f64),
}

impl Beta {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Beta::Quartic => t.powi(4),
            Beta::Constant(c) => *c,
        }
    }

    fn to_param(self) -> Value {
        match self {
            Beta::Quartic => Value::from("t^4"),
            Beta::Constant(c) => Value::from(c),
        }
    }

    fn from_param(v: Option<&Value>) -> Result<Self> {
        match v {
            None => Ok(Beta::Quartic),
            Some(Value::String(s)) if matches!(s.trim(), "t^4" | "t4" | "quartic") => {
                Ok(Beta::Quartic)
            }
            Some(Value::String(s)) => s
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(Beta::Constant)
                .ok_or_else(|| Error::invalid(format!("unsupported beta `{s}`"))),
            Some(Value::Number(n)) => n
                .as_f64()
                .map(Beta::Constant)
                .ok_or_else(|| Error::invalid("beta must be a finite number")),
            Some(other) => Err(Error::invalid(format!("unsupported beta {other}"))),
        }
    }
}

/// Closed-form matrix functions from the worked examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinMatrix {
    /// [[−(t+1), β(t)], [−β(t), −(3+t+sin t)]]
    Example2 { beta: Beta },
    /// [[−λ, eᵗ], [−eᵗ, −λ]]
    Example3 { lambda: f64 },
}

/// Piecewise-linear interpolation of matrix samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGrid {
    ts: Vec<f64>,
    mats: Vec<Matrix>,
}

impl SampledGrid {
    pub fn new(ts: Vec<f64>, mats: Vec<Matrix>) -> Result<Self> {
        if ts.is_empty() || ts.len() != mats.len() {
            return Err(Error::invalid("grid needs one matrix per time sample"));
        }
        if ts.iter().any(|t| !t.is_finite()) || ts[0] < 0.0 {
            return Err(Error::invalid("grid times must be finite and nonnegative"));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid times must be strictly increasing"));
        }
        let n = mats[0].order()?;
        for m in &mats {
            if m.order()? != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.rows(),
                });
            }
        }
        Ok(Self { ts, mats })
    }

    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.mats
    }

    fn eval(&self, t: f64) -> Result<Matrix> {
        let (lo, hi) = (self.ts[0], *self.ts.last().unwrap());
        if t < lo || t > hi {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        let i = self.ts.partition_point(|&s| s <= t);
        if i == 0 {
            return Ok(self.mats[0].clone());
        }
        let k = i - 1;
        if self.ts[k] == t || k + 1 == self.ts.len() {
            return Ok(self.mats[k].clone());
        }
        let w = (t - self.ts[k]) / (self.ts[k + 1] - self.ts[k]);
        self.mats[k].scale(1.0 - w).add(&self.mats[k + 1].scale(w))
    }
}

/// An evaluatable n×n matrix function A(t) on t ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixFunction {
    Constant(Matrix),
    Builtin(BuiltinMatrix),
    Grid(SampledGrid),
}

impl MatrixFunction {
    pub fn dim(&self) -> usize {
        match self {
            MatrixFunction::Constant(m) => m.rows(),
            MatrixFunction::Builtin(_) => 2,
            MatrixFunction::Grid(g) => g.mats[0].rows(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<Matrix> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::OutOfDomain {
                t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let m = match self {
            MatrixFunction::Constant(m) => return Ok(m.clone()),
            MatrixFunction::Grid(g) => return g.eval(t),
            MatrixFunction::Builtin(BuiltinMatrix::Example2 { beta }) => {
                let b = beta.eval(t);
                Matrix::from_rows(&[[-(t + 1.0), b], [-b, -(3.0 + t + t.sin())]])
            }
            MatrixFunction::Builtin(BuiltinMatrix::Example3 { lambda }) => {
                let e = t.exp();
                Matrix::from_rows(&[[-lambda, e], [-e, -lambda]])
            }
        };
        m.map_err(|_| Error::NonFinite("matrix function value"))
    }

    /// A(t)·x without allocating a matrix, for the ODE right-hand side.
    pub fn apply(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        match self {
            MatrixFunction::Builtin(BuiltinMatrix::Example2 { beta }) => {
                let b = beta.eval(t);
                out[0] = -(t + 1.0) * x[0] + b * x[1];
                out[1] = -b * x[0] - (3.0 + t + t.sin()) * x[1];
            }
            MatrixFunction::Builtin(BuiltinMatrix::Example3 { lambda }) => {
                let e = t.exp();
                out[0] = -lambda * x[0] + e * x[1];
                out[1] = -e * x[0] - lambda * x[1];
            }
            MatrixFunction::Constant(m) => {
                for i in 0..n {
                    out[i] = m.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            MatrixFunction::Grid(_) => {
                let m = self.eval(t)?;
                for i in 0..n {
                    out[i] = m.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
        }
        Ok(())
    }

    /// Largest time at which the function is defined.
    pub fn domain_end(&self) -> f64 {
        match self {
            MatrixFunction::Grid(g) => *g.ts.last().unwrap(),
            _ => f64::INFINITY,
        }
    }
}

type FieldFn = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;
type EnvelopeFn = dyn Fn(f64, &NormKind) -> f64 + Send + Sync;

/// A user-supplied perturbation w(x, t) with an optional bound ‖w(x,t)‖ ≤ w̃(t).
#[derive(Clone)]
pub struct CustomPerturbation {
    n: usize,
    field: Arc<FieldFn>,
    envelope: Option<Arc<EnvelopeFn>>,
}

impl CustomPerturbation {
    pub fn new(n: usize, field: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            n,
            field: Arc::new(field),
            envelope: None,
        }
    }

    /// Attaches w̃(t), given per vector norm kind.
    pub fn with_envelope(
        mut self,
        envelope: impl Fn(f64, &NormKind) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.envelope = Some(Arc::new(envelope));
        self
    }
}

impl fmt::Debug for CustomPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPerturbation")
            .field("n", &self.n)
            .field("envelope", &self.envelope.is_some())
            .finish()
    }
}

/// Perturbation term w(x, t).
///
/// The builtin variants are state independent, so each is its own envelope:
/// w̃(t) = ‖w(t)‖ in whichever norm is being analysed.
#[derive(Debug, Clone)]
pub enum Perturbation {
    Zero {
        n: usize,
    },
    /// [t^{7/8}, 100 cos t]
    Example2,
    /// λ [sin eᵗ, cos eᵗ]
    Example3 {
        lambda: f64,
    },
    /// amplitude · e^{−rate·t} · e₁
    Decay {
        n: usize,
        amplitude: f64,
        rate: f64,
    },
    Custom(CustomPerturbation),
}

impl Perturbation {
    pub fn dim(&self) -> usize {
        match self {
            Perturbation::Zero { n } | Perturbation::Decay { n, .. } => *n,
            Perturbation::Example2 | Perturbation::Example3 { .. } => 2,
            Perturbation::Custom(c) => c.n,
        }
    }

    pub fn is_state_independent(&self) -> bool {
        !matches!(self, Perturbation::Custom(_))
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self {
            Perturbation::Zero { n } => vec![0.0; *n],
            Perturbation::Example2 => vec![t.powf(7.0 / 8.0), 100.0 * t.cos()],
            Perturbation::Example3 { lambda } => {
                let e = t.exp();
                vec![lambda * e.sin(), lambda * e.cos()]
            }
            Perturbation::Decay { n, amplitude, rate } => {
                let mut v = vec![0.0; *n];
                v[0] = amplitude * (-rate * t).exp();
                v
            }
            Perturbation::Custom(c) => (c.field)(x, t),
        }
    }

    /// w̃(t) in the norm `kind`, when a bound is known.
    pub fn envelope(&self, t: f64, kind: &NormKind) -> Option<Result<f64>> {
        match self {
            Perturbation::Custom(c) => c.envelope.as_ref().map(|e| Ok(e(t, kind))),
            _ => Some(vec_norm(&self.eval(&vec![0.0; self.dim()], t), kind)),
        }
    }

    pub fn has_envelope(&self) -> bool {
        match self {
            Perturbation::Custom(c) => c.envelope.is_some(),
            _ => true,
        }
    }

    fn builtin_name(&self) -> Option<&'static str> {
        match self {
            Perturbation::Zero { .. } => Some("zero"),
            Perturbation::Example2 => Some("example2"),
            Perturbation::Example3 { .. } => Some("example3"),
            Perturbation::Decay { .. } => Some("decay"),
            Perturbation::Custom(_) => None,
        }
    }
}

/// Closed-form solutions known for a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticOracle {
    Example3 { lambda: f64 },
}

impl AnalyticOracle {
    /// Φ(t) with the normalisation used by the closed form.
    pub fn fundamental(&self, t: f64) -> Matrix {
        match *self {
            AnalyticOracle::Example3 { lambda } => {
                let d = (-lambda * t).exp();
                let (s, c) = t.exp().sin_cos();
                Matrix::from_rows(&[[d * s, -d * c], [d * c, d * s]]).expect("finite")
            }
        }
    }

    /// Φ(t)Φ(0)⁻¹, the fundamental matrix with Φ(0) = I.
    pub fn principal(&self, t: f64) -> Result<Matrix> {
        self.fundamental(t)
            .matmul(&Lu::factor(&self.fundamental(0.0))?.inverse()?)
    }

    /// Solution of the perturbed system started from the origin.
    pub fn forced_response(&self, t: f64) -> Vec<f64> {
        match *self {
            AnalyticOracle::Example3 { lambda } => {
                let g = -(-lambda * t).exp_m1();
                let (s, c) = t.exp().sin_cos();
                vec![g * s, g * c]
            }
        }
    }
}

/// A system ẋ = A(t)x + w(x,t) ready for analysis.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub matrix: MatrixFunction,
    pub perturbation: Option<Perturbation>,
    pub params: BTreeMap<String, Value>,
    pub oracle: Option<AnalyticOracle>,
}

/// Builtin scenario names accepted by [`builtin_scenario`].
pub const BUILTIN_SCENARIOS: [&str; 4] = ["example2", "example3", "lti_hurwitz", "custom-grid"];

fn param_f64(params: &BTreeMap<String, Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| Error::invalid(format!("parameter `{key}` must be a finite number"))),
    }
}

fn param_matrix(v: &Value, what: &str) -> Result<Matrix> {
    serde_json::from_value::<Matrix>(v.clone())
        .map_err(|e| Error::invalid(format!("parameter `{what}`: {e}")))
}

fn lambda_param(params: &BTreeMap<String, Value>) -> Result<f64> {
    let lambda = param_f64(params, "lambda", 1.0)?;
    if lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )))
    }
}

/// The example matrix A₁ = [[−11, 10], [2, −3]], Hurwitz with spectrum {−1, −13}.
pub fn default_hurwitz_matrix() -> Matrix {
    Matrix::from_rows(&[[-11.0, 10.0], [2.0, -3.0]]).expect("finite")
}

/// Builds one of the named scenarios.
///
/// * `example2`: params `beta` ∈ {"t^4" (default), number}.
/// * `example3`: params `lambda` > 0 (default 1).
/// * `lti_hurwitz`: params `matrix` (rows, default A₁), `amplitude`, `rate`
///   for the decaying perturbation amplitude·e^{−rate·t}·e₁.
/// * `custom-grid`: params `ts` and `entries` (one matrix per time).
pub fn builtin_scenario(name: &str, params: &BTreeMap<String, Value>) -> Result<Scenario> {
    let mut params = params.clone();
    let (matrix, perturbation, oracle) = match name {
        "example2" => {
            let beta = Beta::from_param(params.get("beta"))?;
            params.insert("beta".into(), beta.to_param());
            (
                MatrixFunction::Builtin(BuiltinMatrix::Example2 { beta }),
                Some(Perturbation::Example2),
                None,
            )
        }
        "example3" => {
            let lambda = lambda_param(&params)?;
            params.insert("lambda".into(), Value::from(lambda));
            (
                MatrixFunction::Builtin(BuiltinMatrix::Example3 { lambda }),
                Some(Perturbation::Example3 { lambda }),
                Some(AnalyticOracle::Example3 { lambda }),
            )
        }
        "lti_hurwitz" => {
            let a = match params.get("matrix") {
                Some(v) => param_matrix(v, "matrix")?,
                None => default_hurwitz_matrix(),
            };
            lyapunov_solve(&a)?;
            let amplitude = param_f64(&params, "amplitude", 1.0)?;
            let rate = param_f64(&params, "rate", 1.0)?;
            params.insert("matrix".into(), serde_json::to_value(&a).expect("matrix"));
            let n = a.rows();
            (
                MatrixFunction::Constant(a),
                Some(Perturbation::Decay { n, amplitude, rate }),
                None,
            )
        }
        "custom-grid" => {
            let ts: Vec<f64> = params
                .get("ts")
                .cloned()
                .map(serde_json::from_value)
                .transpose()
                .map_err(|e| Error::invalid(format!("parameter `ts`: {e}")))?
                .ok_or_else(|| Error::invalid("custom-grid needs parameter `ts`"))?;
            let entries = params
                .get("entries")
                .ok_or_else(|| Error::invalid("custom-grid needs parameter `entries`"))?;
            let mats: Vec<Matrix> = serde_json::from_value(entries.clone())
                .map_err(|e| Error::invalid(format!("parameter `entries`: {e}")))?;
            (
                MatrixFunction::Grid(SampledGrid::new(ts, mats)?),
                None,
                None,
            )
        }
        other => {
            return Err(Error::Unknown {
                what: "scenario",
                name: other.to_string(),
            })
        }
    };
    Ok(Scenario {
        name: name.to_string(),
        matrix,
        perturbation,
        params,
        oracle,
    })
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Assembles a scenario from parts, checking dimensions.
    pub fn new(
        name: impl Into<String>,
        matrix: MatrixFunction,
        perturbation: Option<Perturbation>,
    ) -> Result<Self> {
        if let Some(p) = &perturbation {
            if p.dim() != matrix.dim() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.dim(),
                    found: p.dim(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            matrix,
            perturbation,
            params: BTreeMap::new(),
            oracle: None,
        })
    }

    /// Right-hand side A(t)x + w(x,t).
    pub fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.matrix.apply(t, x, out)?;
        if let Some(p) = &self.perturbation {
            for (o, w) in out.iter_mut().zip(p.eval(x, t)) {
                *o += w;
            }
        }
        Ok(())
    }

    /// Horizon used for the assumption checks unless overridden.
    pub fn default_horizon(&self) -> f64 {
        match &self.matrix {
            MatrixFunction::Builtin(BuiltinMatrix::Example2 { .. }) => 20.0,
            MatrixFunction::Grid(g) => *g.ts.last().unwrap(),
            _ => 60.0,
        }
    }

    /// Horizon used for simulations unless overridden.
    pub fn default_simulation_horizon(&self) -> f64 {
        match &self.matrix {
            MatrixFunction::Builtin(BuiltinMatrix::Example2 { .. }) => 5.0,
            MatrixFunction::Builtin(BuiltinMatrix::Example3 { .. }) => 4.0,
            other => other.domain_end().min(10.0),
        }
    }

    /// Initial state used for simulations unless overridden.
    pub fn default_initial_state(&self) -> Vec<f64> {
        match &self.matrix {
            MatrixFunction::Builtin(BuiltinMatrix::Example2 { .. }) => vec![-5.0, 2.0],
            MatrixFunction::Builtin(BuiltinMatrix::Example3 { .. }) => vec![0.0, 0.0],
            other => vec![1.0; other.dim()],
        }
    }

    /// Serializable description; fails for closure-backed perturbations.
    pub fn to_spec(&self) -> Result<ScenarioSpec> {
        let matrix = match &self.matrix {
            MatrixFunction::Constant(m) => MatrixSpec::Constant(m.to_rows()),
            MatrixFunction::Builtin(BuiltinMatrix::Example2 { .. }) => {
                MatrixSpec::Builtin("example2".into())
            }
            MatrixFunction::Builtin(BuiltinMatrix::Example3 { .. }) => {
                MatrixSpec::Builtin("example3".into())
            }
            MatrixFunction::Grid(g) => MatrixSpec::Grid {
                ts: g.ts.clone(),
                entries: g.mats.iter().map(Matrix::to_rows).collect(),
            },
        };
        let mut params = self.params.clone();
        let perturbation = match &self.perturbation {
            None => PerturbationSpec::None,
            Some(p) => {
                let name = p
                    .builtin_name()
                    .ok_or_else(|| Error::invalid("custom perturbations cannot be serialized"))?;
                match p {
                    Perturbation::Example3 { lambda } => {
                        params.insert("lambda".into(), Value::from(*lambda));
                    }
                    Perturbation::Decay {
                        amplitude, rate, ..
                    } => {
                        params.insert("amplitude".into(), Value::from(*amplitude));
                        params.insert("rate".into(), Value::from(*rate));
                    }
                    _ => {}
                }
                PerturbationSpec::Builtin(name.into())
            }
        };
        match &self.matrix {
            MatrixFunction::Builtin(BuiltinMatrix::Example2 { beta }) => {
                params.insert("beta".into(), beta.to_param());
            }
            MatrixFunction::Builtin(BuiltinMatrix::Example3 { lambda }) => {
                params.insert("lambda".into(), Value::from(*lambda));
            }
            _ => {}
        }
        Ok(ScenarioSpec {
            name: self.name.clone(),
            n: self.dim(),
            matrix,
            perturbation,
            params,
        })
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self> {
        let p = &spec.params;
        let matrix = match &spec.matrix {
            MatrixSpec::Builtin(name) => match name.as_str() {
                "example2" => MatrixFunction::Builtin(BuiltinMatrix::Example2 {
                    beta: Beta::from_param(p.get("beta"))?,
                }),
                "example3" => MatrixFunction::Builtin(BuiltinMatrix::Example3 {
                    lambda: lambda_param(p)?,
                }),
                other => {
                    return Err(Error::Unknown {
                        what: "builtin matrix",
                        name: other.to_string(),
                    })
                }
            },
            MatrixSpec::Constant(rows) => MatrixFunction::Constant(Matrix::from_rows(rows)?),
            MatrixSpec::Grid { ts, entries } => MatrixFunction::Grid(SampledGrid::new(
                ts.clone(),
                entries
                    .iter()
                    .map(|rows| Matrix::from_rows(rows))
                    .collect::<Result<_>>()?,
            )?),
        };
        if matrix.dim() != spec.n {
            return Err(Error::DimensionMismatch {
                expected: spec.n,
                found: matrix.dim(),
            });
        }
        let n = spec.n;
        let perturbation = match &spec.perturbation {
            PerturbationSpec::None => None,
            PerturbationSpec::Builtin(name) => Some(match name.as_str() {
                "zero" => Perturbation::Zero { n },
                "example2" => Perturbation::Example2,
                "example3" => Perturbation::Example3 {
                    lambda: lambda_param(p)?,
                },
                "decay" => Perturbation::Decay {
                    n,
                    amplitude: param_f64(p, "amplitude", 1.0)?,
                    rate: param_f64(p, "rate", 1.0)?,
                },
                other => {
                    return Err(Error::Unknown {
                        what: "builtin perturbation",
                        name: other.to_string(),
                    })
                }
            }),
        };
        let oracle = match (&matrix, &perturbation) {
            (
                MatrixFunction::Builtin(BuiltinMatrix::Example3 { lambda }),
                Some(Perturbation::Example3 { lambda: l2 }),
            ) if lambda == l2 => Some(AnalyticOracle::Example3 { lambda: *lambda }),
            _ => None,
        };
        let mut scenario = Scenario::new(spec.name.clone(), matrix, perturbation)?;
        scenario.params = spec.params.clone();
        scenario.oracle = oracle;
        Ok(scenario)
    }
}

/// JSON description of a scenario.
///
/// ```json
/// {"name": "example2", "n": 2,
///  "matrix": {"builtin": "example2"},
///  "perturbation": {"builtin": "example2"},
///  "params": {"beta": "t^4"}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixSpec {
    Builtin(String),
    Constant(Vec<Vec<f64>>),
    Grid {
        ts: Vec<f64>,
        entries: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationSpec {
    #[default]
    None,
    Builtin(String),
}
