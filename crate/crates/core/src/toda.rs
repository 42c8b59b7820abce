//! Toda flows `J̇ = [p(J)_a, J]` and the action-level checks built on them.
//!
//! Eventually-free matrices are flowed with frozen tails: only window sites
//! move. Periodic matrices flow exactly (the window is one period).

use crate::error::{Error, Result};
use crate::jacobi::{
    antisymmetric_commutator, metric, shift, JacobiMatrix, RealPolynomial, POSITIVITY_FLOOR,
};
use crate::ode::rk4_integrate;

/// `⌈1000·|t|·(1 + deg p)⌉`, at least one step.
pub fn default_steps(t: f64, p: &RealPolynomial) -> usize {
    let deg = p.degree().unwrap_or(0) as f64;
    ((1000.0 * t.abs() * (1.0 + deg)).ceil() as usize).max(1)
}

/// Packs the window as `[a..., b...]`.
pub(crate) fn pack(j: &JacobiMatrix) -> Vec<f64> {
    let mut y = j.window_a().to_vec();
    y.extend_from_slice(j.window_b());
    y
}

/// Rebuilds a matrix with the layout of `template` from `[a..., b...]`.
pub(crate) fn unpack(template: &JacobiMatrix, y: &[f64]) -> Result<JacobiMatrix> {
    let n = template.window_len();
    template.with_window(y[..n].to_vec(), y[n..2 * n].to_vec())
}

/// Lax right-hand side in packed layout.
pub(crate) fn lax_rhs(j: &JacobiMatrix, p: &RealPolynomial) -> Vec<f64> {
    let r = antisymmetric_commutator(j, p);
    let mut out = r.da;
    out.extend(r.db);
    out
}

pub(crate) fn check_floor(y: &[f64], n: usize, n_lo: i64) -> Result<()> {
    for (k, &a) in y[..n].iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::NonFinite("Toda flow"));
        }
        if a <= POSITIVITY_FLOOR {
            return Err(Error::PositivityFloor { site: n_lo + k as i64, value: a });
        }
    }
    Ok(())
}

/// `t·p · J` by RK4 with the given number of steps.
pub fn lax_flow(j: &JacobiMatrix, p: &RealPolynomial, t: f64, steps: usize) -> Result<JacobiMatrix> {
    if t == 0.0 || p.is_zero() {
        return Ok(j.clone());
    }
    let n = j.window_len();
    let y = rk4_integrate(
        pack(j),
        t,
        steps,
        |y| Ok(lax_rhs(&unpack(j, y)?, p)),
        |y| check_floor(y, n, j.n_lo()),
    )?;
    unpack(j, &y)
}

/// [`lax_flow`] with [`default_steps`].
pub fn flow(j: &JacobiMatrix, p: &RealPolynomial, t: f64) -> Result<JacobiMatrix> {
    lax_flow(j, p, t, default_steps(t, p))
}

const PICARD_NODES: usize = 1000;

/// Picard iterates `J_{k+1}(s) = J + ∫₀ˢ X(J_k(σ)) dσ` on a uniform time
/// grid, with cumulative trapezoidal quadrature.
pub fn picard_flow(j: &JacobiMatrix, p: &RealPolynomial, t: f64, iterations: usize) -> Result<JacobiMatrix> {
    let y0 = pack(j);
    let dim = y0.len();
    let h = t / PICARD_NODES as f64;
    let mut path = vec![y0.clone(); PICARD_NODES + 1];
    let mut prev_increment = f64::INFINITY;
    for iteration in 1..=iterations {
        let rates = path
            .iter()
            .map(|y| unpack(j, y).map(|m| lax_rhs(&m, p)))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| Error::NonContraction { iteration, increment: f64::INFINITY })?;
        let mut next = Vec::with_capacity(PICARD_NODES + 1);
        let mut acc = y0.clone();
        next.push(acc.clone());
        for k in 0..PICARD_NODES {
            for i in 0..dim {
                acc[i] += 0.5 * h * (rates[k][i] + rates[k + 1][i]);
            }
            next.push(acc.clone());
        }
        let increment = next
            .iter()
            .zip(&path)
            .flat_map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        if !increment.is_finite() || (iteration > 3 && increment > 2.0 * prev_increment && increment > 1e-8) {
            return Err(Error::NonContraction { iteration, increment });
        }
        prev_increment = increment;
        path = next;
    }
    unpack(j, &path[PICARD_NODES])
        .map_err(|_| Error::NonContraction { iteration: iterations, increment: prev_increment })
}

/// Largest drift of the sorted periodic-truncation spectrum along the flow.
pub fn isospectrality_check(j: &JacobiMatrix, p: &RealPolynomial, t: f64, steps: usize) -> Result<f64> {
    if !j.is_periodic() {
        return Err(Error::InvalidInput("isospectrality needs a periodic matrix".into()));
    }
    let before = j.periodic_truncation_eigenvalues()?;
    let after = lax_flow(j, p, t, steps)?.periodic_truncation_eigenvalues()?;
    Ok(before.iter().zip(&after).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// `d(p·(q·J), q·(p·J))` with each flow run for time `t`.
pub fn commutativity_check(j: &JacobiMatrix, p: &RealPolynomial, q: &RealPolynomial, t: f64) -> Result<f64> {
    let pq = flow(&flow(j, q, t)?, p, t)?;
    let qp = flow(&flow(j, p, t)?, q, t)?;
    Ok(metric(&pq, &qp))
}

/// `d(S(p·J), p·(SJ))`.
pub fn shift_equivariance_check(j: &JacobiMatrix, p: &RealPolynomial, t: f64) -> Result<f64> {
    let a = shift(&flow(j, p, t)?, 1);
    let b = flow(&shift(j, 1), p, t)?;
    Ok(metric(&a, &b))
}

/// `d(p·J, p·J') / d(J, J')`.
pub fn metric_continuity_probe(
    j: &JacobiMatrix,
    j2: &JacobiMatrix,
    p: &RealPolynomial,
    t: f64,
) -> Result<f64> {
    let d0 = metric(j, j2);
    if d0 == 0.0 {
        return Err(Error::InvalidInput("expansion ratio needs distinct matrices".into()));
    }
    Ok(metric(&flow(j, p, t)?, &flow(j2, p, t)?) / d0)
}
