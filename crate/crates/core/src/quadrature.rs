//! Adaptive Simpson quadrature and cumulative integrals of t ↦ μ[A(t)].

use crate::error::{Error, Result};
use crate::linalg::{log_norm, NormKind};
use crate::system::MatrixFunction;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_DEPTH: u32 = 40;

/// Result of a single adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Estimated absolute error (nonnegative).
    pub error: f64,
    /// False when some subinterval hit the depth limit; `value` is then a
    /// best-effort partial result.
    pub converged: bool,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// [`integrate`] for an integrand that can fail; the first failure aborts.
pub fn try_integrate<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Quadrature> {
    let mut failure = None;
    let q = integrate(
        |s| match f(s) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        tol,
    );
    match failure {
        Some(e) => Err(e),
        None => q,
    }
}

/// ∫_a^b f with default depth limit.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    integrate_with(
        f,
        a,
        b,
        &QuadSettings {
            tol,
            ..QuadSettings::default()
        },
    )
}

struct Simpson<F> {
    f: F,
    evaluations: usize,
    converged: bool,
    error: f64,
    max_depth: u32,
}

impl<F: FnMut(f64) -> f64> Simpson<F> {
    fn eval(&mut self, t: f64) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("integrand"))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: f64,
        b: f64,
        // Width carried down and halved exactly; recomputing b − a would add
        // an absolute error of ulp(b) to every panel.
        h: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = h / 12.0 * (fa + 4.0 * flm + fm);
        let right = h / 12.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let accept = delta.abs() <= 15.0 * tol
            // Tolerance below rounding of the value itself or an interval
            // that no longer splits in floating point.
            || tol < 4.0 * f64::EPSILON * (left + right).abs()
            || lm <= a
            || rm >= b;
        if accept {
            self.error += delta.abs() / 15.0;
            return Ok(left + right + delta / 15.0);
        }
        if depth >= self.max_depth {
            self.converged = false;
            self.error += delta.abs() / 15.0;
            return Ok(left + right + delta / 15.0);
        }
        Ok(
            self.refine(a, m, 0.5 * h, fa, flm, fm, left, 0.5 * tol, depth + 1)?
                + self.refine(m, b, 0.5 * h, fm, frm, fb, right, 0.5 * tol, depth + 1)?,
        )
    }
}

/// Adaptive Simpson with recursive bisection and Richardson correction.
pub fn integrate_with<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    settings: &QuadSettings,
) -> Result<Quadrature> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("integration bounds"));
    }
    if a > b {
        return Err(Error::invalid(format!(
            "integration bounds reversed: {a} > {b}"
        )));
    }
    if !(settings.tol > 0.0) {
        return Err(Error::invalid("quadrature tolerance must be positive"));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            converged: true,
            evaluations: 0,
        });
    }
    let mut s = Simpson {
        f,
        evaluations: 0,
        converged: true,
        error: 0.0,
        max_depth: settings.max_depth,
    };
    let m = 0.5 * (a + b);
    let fa = s.eval(a)?;
    let fm = s.eval(m)?;
    let fb = s.eval(b)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = s.refine(a, b, b - a, fa, fm, fb, whole, settings.tol, 0)?;
    Ok(Quadrature {
        value,
        error: s.error,
        converged: s.converged,
        evaluations: s.evaluations,
    })
}

/// Running integral Iᵢ ≈ ∫_{t₀}^{tᵢ} f on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeIntegral {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    /// Error estimate of each grid interval; `errors[0]` is zero.
    pub errors: Vec<f64>,
    pub converged: bool,
}

impl CumulativeIntegral {
    /// Integrates `f` interval by interval over a strictly increasing grid.
    pub fn accumulate<F: FnMut(f64) -> Result<f64>>(
        mut f: F,
        ts: &[f64],
        tol: f64,
    ) -> Result<Self> {
        if ts.len() < 2 {
            return Err(Error::invalid("cumulative grid needs at least two points"));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "cumulative grid must be strictly increasing",
            ));
        }
        let per_interval = tol / (ts.len() - 1) as f64;
        let mut values = Vec::with_capacity(ts.len());
        let mut errors = Vec::with_capacity(ts.len());
        values.push(0.0);
        errors.push(0.0);
        let mut converged = true;
        for w in ts.windows(2) {
            let q = try_integrate(&mut f, w[0], w[1], per_interval)?;
            converged &= q.converged;
            values.push(values.last().unwrap() + q.value);
            errors.push(q.error);
        }
        Ok(Self {
            ts: ts.to_vec(),
            values,
            errors,
            converged,
        })
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Sum of the interval error estimates.
    pub fn total_error(&self) -> f64 {
        self.errors.iter().sum()
    }

    /// Index of a grid time, matched to within rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * t.abs().max(1.0);
        let i = self.ts.partition_point(|&s| s < t - tol);
        (i < self.ts.len() && (self.ts[i] - t).abs() <= tol).then_some(i)
    }
}

/// Uniform grid of `steps` intervals on [0, horizon].
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| {
            if i == steps {
                horizon
            } else {
                horizon * i as f64 / steps as f64
            }
        })
        .collect()
}

/// ∫₀ᵗ μ[A(s)] ds on a uniform grid over [0, horizon].
pub fn cumulative_mu(
    mf: &MatrixFunction,
    kind: &NormKind,
    horizon: f64,
    steps: usize,
) -> Result<CumulativeIntegral> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon must be positive"));
    }
    if steps < 2 {
        return Err(Error::invalid("cumulative_mu needs at least two steps"));
    }
    cumulative_mu_on(mf, kind, &uniform_grid(horizon, steps), DEFAULT_TOL)
}

/// ∫_{ts[0]}^{t} μ[A(s)] ds at every point of the given grid.
pub fn cumulative_mu_on(
    mf: &MatrixFunction,
    kind: &NormKind,
    ts: &[f64],
    tol: f64,
) -> Result<CumulativeIntegral> {
    CumulativeIntegral::accumulate(|s| log_norm(&mf.eval(s)?, kind), ts, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::system::{Beta, BuiltinMatrix};
    use std::f64::consts::PI;

    #[test]
    fn sine_over_half_period() {
        let q = integrate(f64::sin, 0.0, PI, 1e-10).unwrap();
        assert!((q.value - 2.0).abs() < 1e-10);
        assert!(q.converged);
    }

    #[test]
    fn fractional_power_matches_primitive() {
        for (t, eta) in [(0.0, 1.0), (3.0, 0.5), (40.0, 1.0), (1000.0, 0.25)] {
            let q = integrate(|s: f64| s.powf(7.0 / 8.0), t, t + eta, 1e-11).unwrap();
            let exact: f64 = 8.0 / 15.0 * ((t + eta).powf(15.0 / 8.0) - t.powf(15.0 / 8.0));
            assert!(
                (q.value - exact).abs() <= 1e-9 * exact.abs().max(1.0),
                "{t} {eta}"
            );
        }
    }

    #[test]
    fn linear_decay_primitive() {
        for horizon in [1.0, 7.5, 20.0] {
            let q = integrate(|s| -(s + 1.0), 0.0, horizon, 1e-10).unwrap();
            assert!((q.value + (horizon * horizon / 2.0 + horizon)).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_and_invalid_ranges() {
        assert_eq!(integrate(f64::exp, 2.0, 2.0, 1e-9).unwrap().value, 0.0);
        assert!(integrate(f64::exp, 2.0, 1.0, 1e-9).is_err());
        assert!(integrate(f64::exp, 0.0, 1.0, 0.0).is_err());
        assert!(matches!(
            integrate(|s| 1.0 / s, 0.0, 1.0, 1e-9),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn large_integrand_far_from_origin_converges() {
        // Panel widths that drift by ulp(t) once made this stall at the depth limit.
        let q = integrate(|t| t.powi(4) - t - 1.0, 10.7, 10.75, 2.5e-12).unwrap();
        let p = |t: f64| t.powi(5) / 5.0 - t * t / 2.0 - t;
        assert!(q.converged);
        assert!((q.value - (p(10.75) - p(10.7))).abs() < 1e-10);
    }

    #[test]
    fn depth_limit_is_flagged() {
        let q = integrate_with(
            |s: f64| s.abs().sqrt() * (1.0 / (s + 1e-3)).sin(),
            0.0,
            1.0,
            &QuadSettings {
                tol: 1e-14,
                max_depth: 3,
            },
        )
        .unwrap();
        assert!(!q.converged);
        assert!(q.value.is_finite());
    }

    #[test]
    fn cumulative_mu_for_second_example() {
        let mf = MatrixFunction::Builtin(BuiltinMatrix::Example2 {
            beta: Beta::Quartic,
        });
        let c = cumulative_mu(&mf, &NormKind::Two, 10.0, 100).unwrap();
        for (t, v) in c.ts.iter().zip(&c.values) {
            let exact = -(t * t / 2.0 + t);
            assert!((v - exact).abs() <= 1e-6 * exact.abs().max(1.0));
        }
        assert_eq!(c.values[0], 0.0);
    }

    #[test]
    fn cumulative_mu_for_third_example_and_zero() {
        let mf = MatrixFunction::Builtin(BuiltinMatrix::Example3 { lambda: 1.0 });
        let c = cumulative_mu(&mf, &NormKind::Two, 5.0, 50).unwrap();
        for (t, v) in c.ts.iter().zip(&c.values) {
            assert!((v + t).abs() < 1e-8);
        }
        let zero = MatrixFunction::Constant(Matrix::zeros(3, 3));
        for kind in NormKind::STANDARD {
            let c = cumulative_mu(&zero, &kind, 4.0, 8).unwrap();
            assert!(c.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn cumulative_validation() {
        let zero = MatrixFunction::Constant(Matrix::zeros(2, 2));
        assert!(cumulative_mu(&zero, &NormKind::One, 0.0, 10).is_err());
        assert!(cumulative_mu(&zero, &NormKind::One, 1.0, 1).is_err());
        assert!(cumulative_mu_on(&zero, &NormKind::One, &[0.0, 1.0, 1.0], 1e-9).is_err());
    }

    #[test]
    fn grid_lookup() {
        let c = CumulativeIntegral::accumulate(|_| Ok(1.0), &uniform_grid(3.0, 30), 1e-9).unwrap();
        assert_eq!(c.index_of(0.0), Some(0));
        assert_eq!(c.index_of(3.0), Some(30));
        assert_eq!(c.index_of(0.1 + 0.2), Some(3));
        assert_eq!(c.index_of(0.15), None);
    }
}
