//! Fixed-step classical Runge–Kutta on flat real state vectors.

use crate::error::{Error, Result};

/// One RK4 step of `y' = f(y)` with step `h`.
pub fn rk4_step<F>(y: &[f64], h: f64, f: &mut F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let k1 = f(y)?;
    let y2: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
    let k2 = f(&y2)?;
    let y3: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k2[i]).collect();
    let k3 = f(&y3)?;
    let y4: Vec<f64> = (0..n).map(|i| y[i] + h * k3[i]).collect();
    let k4 = f(&y4)?;
    let out: Vec<f64> = (0..n)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Runge-Kutta state"));
    }
    Ok(out)
}

/// Integrates from `0` to `t` in `steps` equal steps, calling `check` on
/// every accepted state.
pub fn rk4_integrate<F, C>(y0: Vec<f64>, t: f64, steps: usize, mut f: F, mut check: C) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    C: FnMut(&[f64]) -> Result<()>,
{
    if steps == 0 {
        return Err(Error::InvalidInput("step count must be at least 1".into()));
    }
    let h = t / steps as f64;
    let mut y = y0;
    for _ in 0..steps {
        y = rk4_step(&y, h, &mut f)?;
        check(&y)?;
    }
    Ok(y)
}
