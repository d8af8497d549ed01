//! Explicit Dormand–Prince 5(4) integration with PI step-size control.
//!
//! Accepted steps are stored with their end-point derivatives; values between
//! steps come from cubic Hermite interpolation (third-order dense output).

use crate::error::{Error, IntegrationFailure, Result};
use crate::linalg::{condition_number, Lu, Matrix};
use crate::system::MatrixFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Chosen automatically when `None`.
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            initial_step: None,
            max_step: None,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorSettings {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::invalid("integrator tolerances must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be positive"));
        }
        for h in [self.initial_step, self.max_step].into_iter().flatten() {
            if !(h > 0.0) {
                return Err(Error::invalid("step sizes must be positive"));
            }
        }
        Ok(())
    }
}

/// Accepted integration nodes of one ODE solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ts: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest scaled local error estimate among accepted steps (≤ 1).
    pub max_local_error: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn t0(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// State at `t` by cubic Hermite interpolation between accepted steps.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let (lo, hi) = (self.t0(), self.t_end());
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
        let i = self.ts.partition_point(|&s| s < t);
        if i < self.ts.len() && self.ts[i] == t {
            return Ok(self.states[i].clone());
        }
        let k = i - 1;
        let (t0, t1) = (self.ts[k], self.ts[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Ok((0..self.dim())
            .map(|j| {
                h00 * self.states[k][j]
                    + h10 * h * self.derivs[k][j]
                    + h01 * self.states[k + 1][j]
                    + h11 * h * self.derivs[k + 1][j]
            })
            .collect())
    }

    pub fn sample_grid(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        grid.iter().map(|&t| self.sample(t)).collect()
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn scaled_rms(err: &[f64], y0: &[f64], y1: &[f64], s: &IntegratorSettings) -> f64 {
    let n = err.len() as f64;
    (err.iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = s.abs_tol + s.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Integrates ẋ = rhs(t, x) from `t_span.0` to `t_span.1`.
///
/// `rhs` writes the derivative into its output slice and may fail; failures
/// abort the integration. A zero-length span yields a single-node trajectory.
pub fn integrate_ode<F>(
    mut rhs: F,
    x0: &[f64],
    t_span: (f64, f64),
    settings: &IntegratorSettings,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    settings.validate()?;
    let (t0, tf) = t_span;
    if !(t0.is_finite() && tf.is_finite()) || tf < t0 {
        return Err(Error::invalid(format!("invalid time span [{t0}, {tf}]")));
    }
    if x0.is_empty() {
        return Err(Error::invalid("empty initial state"));
    }
    if !all_finite(x0) {
        return Err(Error::NonFinite("initial state"));
    }
    let n = x0.len();
    let mut f0 = vec![0.0; n];
    rhs(t0, x0, &mut f0)?;
    let mut traj = Trajectory {
        ts: vec![t0],
        states: vec![x0.to_vec()],
        derivs: vec![f0.clone()],
        accepted: 0,
        rejected: 0,
        max_local_error: 0.0,
    };
    if !all_finite(&f0) {
        return Err(Error::Integration {
            reason: IntegrationFailure::NonFiniteState,
            t: t0,
            partial: Box::new(traj),
        });
    }
    if tf == t0 {
        return Ok(traj);
    }
    let span = tf - t0;
    let max_step = settings.max_step.unwrap_or(span).min(span);

    let mut h = match settings.initial_step {
        Some(h) => h.min(max_step),
        // The heuristic collapses for components starting at 0 when abs_tol
        // is tiny; the controller shrinks an oversized start anyway.
        None => initial_step(&mut rhs, t0, x0, &f0, settings)?
            .max(1e-10 * span)
            .min(max_step),
    };

    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    k[0].copy_from_slice(&f0);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut err_old = 1e-4_f64;
    let mut last_rejected = false;
    let mut steps = 0usize;

    let fail = |traj: Trajectory, reason, t| Error::Integration {
        reason,
        t,
        partial: Box::new(traj),
    };

    while t < tf {
        if steps >= settings.max_steps {
            return Err(fail(traj, IntegrationFailure::MaxStepsExceeded, t));
        }
        steps += 1;
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(fail(traj, IntegrationFailure::StepUnderflow, t));
        }
        let last = t + h >= tf;
        if last {
            h = tf - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = y[i] + h * acc;
            }
            rhs(t + C[s] * h, &stage, &mut k[s])?;
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        for i in 0..n {
            err[i] = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
        }
        if !all_finite(&y_new) || !all_finite(&k[6]) || !all_finite(&err) {
            // Retry with a much smaller step before giving up.
            h *= 0.1;
            traj.rejected += 1;
            last_rejected = true;
            if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(fail(traj, IntegrationFailure::NonFiniteState, t));
            }
            continue;
        }
        let e = scaled_rms(&err, &y, &y_new, settings);
        if e <= 1.0 {
            t = if last { tf } else { t + h };
            y.copy_from_slice(&y_new);
            let f_new = k[6].clone();
            k[0].copy_from_slice(&f_new);
            traj.ts.push(t);
            traj.states.push(y.clone());
            traj.derivs.push(f_new);
            traj.accepted += 1;
            traj.max_local_error = traj.max_local_error.max(e);

            let mut factor = if e == 0.0 {
                MAX_FACTOR
            } else {
                SAFETY * e.powf(-ALPHA) * err_old.powf(BETA)
            };
            factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
            if last_rejected {
                factor = factor.min(1.0);
            }
            err_old = e.max(1e-4);
            h = (h * factor).min(max_step);
            last_rejected = false;
        } else {
            let factor = (SAFETY * e.powf(-ALPHA)).max(MIN_FACTOR);
            h *= factor;
            traj.rejected += 1;
            last_rejected = true;
        }
    }
    Ok(traj)
}

/// Starting step from the local behaviour of the solution.
fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    x0: &[f64],
    f0: &[f64],
    s: &IntegratorSettings,
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    let scale: Vec<f64> = x0.iter().map(|x| s.abs_tol + s.rel_tol * x.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(&scale)
            .map(|(a, b)| (a / b).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
    };
    let d0 = rms(x0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let x1: Vec<f64> = x0.iter().zip(f0).map(|(x, f)| x + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + h0, &x1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

/// Samples of the fundamental matrix Φ(t) with Φ(0) = I.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSamples {
    pub ts: Vec<f64>,
    pub phis: Vec<Matrix>,
    pub dets: Vec<f64>,
    /// κ₁(Φ(t)) at each sample.
    pub conditions: Vec<f64>,
    /// Set when some sample has κ₁ above [`NEAR_SINGULAR_CONDITION`].
    pub near_singular: bool,
}

pub const NEAR_SINGULAR_CONDITION: f64 = 1e12;

impl FundamentalSamples {
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * t.abs().max(1.0);
        self.ts.iter().position(|s| (s - t).abs() <= tol)
    }
}

/// Integrates Φ′ = A(t)Φ column by column and samples it on `t_grid`.
pub fn fundamental_matrix(
    mf: &MatrixFunction,
    t_grid: &[f64],
    settings: &IntegratorSettings,
) -> Result<FundamentalSamples> {
    if t_grid.first() != Some(&0.0) {
        return Err(Error::invalid("fundamental matrix grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "fundamental matrix grid must be strictly increasing",
        ));
    }
    let n = mf.dim();
    let tf = *t_grid.last().unwrap();
    let mut columns: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let traj = integrate_ode(|t, x, out| mf.apply(t, x, out), &e, (0.0, tf), settings)?;
        columns.push(traj.sample_grid(t_grid)?);
    }
    let mut phis = Vec::with_capacity(t_grid.len());
    let mut dets = Vec::with_capacity(t_grid.len());
    let mut conditions = Vec::with_capacity(t_grid.len());
    for k in 0..t_grid.len() {
        let cols: Vec<Vec<f64>> = columns.iter().map(|c| c[k].clone()).collect();
        let phi = Matrix::from_columns(&cols)?;
        let lu = Lu::factor(&phi)?;
        let det = lu.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Singular);
        }
        dets.push(det);
        conditions.push(condition_number(&phi)?);
        phis.push(phi);
    }
    let near_singular = conditions.iter().any(|c| *c > NEAR_SINGULAR_CONDITION);
    Ok(FundamentalSamples {
        ts: t_grid.to_vec(),
        phis,
        dets,
        conditions,
        near_singular,
    })
}

/// Φ(t)Φ(τ)⁻¹ for sampled times τ ≤ t, via an LU solve with Φ(τ)ᵀ.
pub fn transition_matrix(samples: &FundamentalSamples, t: f64, tau: f64) -> Result<Matrix> {
    if t < tau {
        return Err(Error::invalid(format!(
            "transition needs t ≥ τ, got t={t}, τ={tau}"
        )));
    }
    let lookup = |s: f64| {
        samples
            .index_of(s)
            .ok_or_else(|| Error::invalid(format!("time {s} is not a fundamental-matrix sample")))
    };
    let (it, itau) = (lookup(t)?, lookup(tau)?);
    // X Φ(τ) = Φ(t)  ⇔  Φ(τ)ᵀ Xᵀ = Φ(t)ᵀ
    let lu = Lu::factor(&samples.phis[itau].transpose())?;
    let rhs = samples.phis[it].transpose();
    let n = rhs.rows();
    let cols = (0..n)
        .map(|j| lu.solve(&rhs.column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Matrix::from_columns(&cols)?.transpose())
}
