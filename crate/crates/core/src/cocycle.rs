//! The shift cocycle, the hierarchy matrices `B_p`, co-integration of a
//! flow with its cocycle, and the scalar cocycle `λ` with its generator `ω`.

use crate::error::{Error, Result};
use crate::herglotz::m_pair;
use crate::jacobi::{diagonal_moments, lax_rates_at, shift, JacobiMatrix, RealPolynomial};
use crate::mobius::{Mat2C, C64};
use crate::ode::rk4_integrate;
use crate::toda::{check_floor, default_steps, flow, lax_rhs, pack, unpack};

/// `A(J) = [[(z-b₁)/a₁, 1/a₁], [-a₁, 0]]`.
pub fn shift_step_matrix(j: &JacobiMatrix, z: C64) -> Mat2C {
    let (a1, b1) = (j.a_at(1), j.b_at(1));
    Mat2C::new((z - b1) / a1, C64::new(1.0 / a1, 0.0), C64::new(-a1, 0.0), C64::new(0.0, 0.0))
}

/// `T(n; J)`: `A((n-1)·J)···A(J)` for `n ≥ 1`, the identity at `n = 0`,
/// and `T(-n; n·J)⁻¹` for `n < 0`.
pub fn shift_cocycle(j: &JacobiMatrix, n: i64, z: C64) -> Mat2C {
    let step = |k: i64| {
        let (a, b) = (j.a_at(k + 1), j.b_at(k + 1));
        Mat2C::new((z - b) / a, C64::new(1.0 / a, 0.0), C64::new(-a, 0.0), C64::new(0.0, 0.0))
    };
    match n {
        0 => Mat2C::identity(),
        n if n > 0 => (0..n).fold(Mat2C::identity(), |acc, k| step(k) * acc),
        // A has unit determinant, so its inverse is the adjugate
        n => (n..0).fold(Mat2C::identity(), |acc, k| step(k) * acc).adjugate(),
    }
}

/// The z-polynomials `G`, `H` of a hierarchy element at one site.
#[derive(Debug, Clone, PartialEq)]
pub struct GHPolynomials {
    pub site: i64,
    pub g: RealPolynomial,
    pub h: RealPolynomial,
}

/// `G`, `H` for `p` at site `n`, assembled monomial by monomial:
/// `G^{(k)} = Σ_{j<k} z^{k-1-j} (J^j)_{nn}`,
/// `H^{(k)} = z^k - (J^k)_{nn} + 2a_n Σ_{1≤j<k} z^{k-1-j} ⟨δ_{n+1}, J^j δ_n⟩`.
pub fn gh_polynomials(j: &JacobiMatrix, p: &RealPolynomial, n: i64) -> GHPolynomials {
    let deg = p.degree().unwrap_or(0);
    let (diag, next) = diagonal_moments(j, n, deg);
    let an = j.a_at(n);
    let mut g = vec![0.0; deg.max(1)];
    let mut h = vec![0.0; deg + 1];
    for k in 1..=deg {
        let ck = p.coeff(k);
        if ck == 0.0 {
            continue;
        }
        for jj in 0..k {
            g[k - 1 - jj] += ck * diag[jj];
        }
        h[k] += ck;
        h[0] -= ck * diag[k];
        for jj in 1..k {
            h[k - 1 - jj] += ck * 2.0 * an * next[jj];
        }
    }
    GHPolynomials { site: n, g: RealPolynomial::new(g), h: RealPolynomial::new(h) }
}

/// `B_p(J) = [[2(z-b₁)G₁ - H₁, 2G₁], [-2a₀²G₀, -2(z-b₁)G₁ + H₁]]`.
pub fn toda_b(j: &JacobiMatrix, p: &RealPolynomial, z: C64) -> Mat2C {
    let g0 = gh_polynomials(j, p, 0).g.eval_complex(z);
    let gh1 = gh_polynomials(j, p, 1);
    let (g1, h1) = (gh1.g.eval_complex(z), gh1.h.eval_complex(z));
    let (a0, b1) = (j.a_at(0), j.b_at(1));
    let diag = 2.0 * (z - b1) * g1 - h1;
    Mat2C::new(diag, 2.0 * g1, -2.0 * a0 * a0 * g0, -diag)
}

fn mat_to_slice(m: &Mat2C, out: &mut Vec<f64>) {
    for e in m.entries() {
        out.push(e.re);
        out.push(e.im);
    }
}

fn mat_from_slice(y: &[f64]) -> Mat2C {
    let e = |k: usize| C64::new(y[2 * k], y[2 * k + 1]);
    Mat2C::new(e(0), e(1), e(2), e(3))
}

/// Co-integrates `J̇ = [p(J)_a, J]` and `Ṫ = B_p(s·J) T` by RK4 on a shared
/// grid; returns `(t·J, T(t; J, z))`.
pub fn integrate_flow_and_cocycle(
    j: &JacobiMatrix,
    p: &RealPolynomial,
    t: f64,
    z: C64,
    steps: usize,
) -> Result<(JacobiMatrix, Mat2C)> {
    if t == 0.0 || p.is_zero() {
        return Ok((j.clone(), Mat2C::identity()));
    }
    let n = j.window_len();
    let mut y0 = pack(j);
    mat_to_slice(&Mat2C::identity(), &mut y0);
    let y = rk4_integrate(
        y0,
        t,
        steps,
        |y| {
            let m = unpack(j, y)?;
            let mut out = lax_rhs(&m, p);
            let tm = mat_from_slice(&y[2 * n..]);
            mat_to_slice(&(toda_b(&m, p, z) * tm), &mut out);
            Ok(out)
        },
        |y| check_floor(y, n, j.n_lo()),
    )?;
    let tm = mat_from_slice(&y[2 * n..]);
    if !tm.is_finite() {
        return Err(Error::NonFinite("flow cocycle"));
    }
    Ok((unpack(j, &y)?, tm))
}

/// [`integrate_flow_and_cocycle`] with the default step count.
pub fn flow_cocycle(j: &JacobiMatrix, p: &RealPolynomial, t: f64, z: C64) -> Result<(JacobiMatrix, Mat2C)> {
    integrate_flow_and_cocycle(j, p, t, z, default_steps(t, p))
}

/// `‖B_p(1·J)A(J) - Ȧ(J) - A(J)B_p(J)‖_max` with `Ȧ` from the Lax rates of
/// `a₁`, `b₁` by the chain rule.
pub fn zero_curvature_residual(j: &JacobiMatrix, p: &RealPolynomial, z: C64) -> f64 {
    let a = shift_step_matrix(j, z);
    let (a1, b1) = (j.a_at(1), j.b_at(1));
    let (da1, db1) = lax_rates_at(j, p, 1);
    let a_dot = Mat2C::new(
        C64::new(-db1 / a1, 0.0) - (z - b1) * (da1 / (a1 * a1)),
        C64::new(-da1 / (a1 * a1), 0.0),
        C64::new(-da1, 0.0),
        C64::new(0.0, 0.0),
    );
    let lhs = toda_b(&shift(j, 1), p, z) * a;
    (lhs - a_dot - a * toda_b(j, p, z)).max_norm()
}

fn require_upper(z: C64) -> Result<()> {
    if z.im > 0.0 {
        Ok(())
    } else {
        Err(Error::NotInUpperHalfPlane { re: z.re, im: z.im })
    }
}

/// `g₀(z) = ⟨δ₀, (J-z)⁻¹δ₀⟩ = -1/(a₀²(m₊+m₋))`.
pub fn resolvent_g(j: &JacobiMatrix, z: C64) -> Result<C64> {
    require_upper(z)?;
    let (mp, mm) = m_pair(j, z)?.finite()?;
    let a0 = j.a_at(0);
    Ok(-1.0 / (a0 * a0 * (mp + mm)))
}

/// `h₀(z) = 2a₀⟨δ₁, (J-z)⁻¹δ₀⟩ - 1 = (m₊-m₋)/(m₊+m₋)`.
pub fn resolvent_h(j: &JacobiMatrix, z: C64) -> Result<C64> {
    require_upper(z)?;
    let (mp, mm) = m_pair(j, z)?.finite()?;
    Ok((mp - mm) / (mp + mm))
}

/// `(g₀, h₀)` from a dense solve of `(J-z)x = δ₀` on `[-half_width, half_width]`
/// with Dirichlet truncation.
pub fn resolvent_dense(j: &JacobiMatrix, z: C64, half_width: i64) -> Result<(C64, C64)> {
    require_upper(z)?;
    let lo = -half_width;
    let size = (2 * half_width + 1) as usize;
    let sub: Vec<f64> = (0..size).map(|k| if k == 0 { 0.0 } else { j.a_at(lo + k as i64 - 1) }).collect();
    let diag: Vec<C64> = (0..size).map(|k| j.b_at(lo + k as i64) - z).collect();
    let mut rhs = vec![C64::new(0.0, 0.0); size];
    rhs[half_width as usize] = C64::new(1.0, 0.0);
    // Thomas algorithm; the matrix is symmetric with sup = sub shifted by one
    let mut c_prime = vec![C64::new(0.0, 0.0); size];
    let mut d_prime = vec![C64::new(0.0, 0.0); size];
    for k in 0..size {
        let sup = if k + 1 < size { sub[k + 1] } else { 0.0 };
        let denom = if k == 0 { diag[0] } else { diag[k] - sub[k] * c_prime[k - 1] };
        if denom.norm() == 0.0 {
            return Err(Error::NonFinite("tridiagonal solve"));
        }
        c_prime[k] = sup / denom;
        d_prime[k] = if k == 0 { rhs[0] / denom } else { (rhs[k] - sub[k] * d_prime[k - 1]) / denom };
    }
    let mut x = vec![C64::new(0.0, 0.0); size];
    x[size - 1] = d_prime[size - 1];
    for k in (0..size - 1).rev() {
        x[k] = d_prime[k] - c_prime[k] * x[k + 1];
    }
    let i0 = half_width as usize;
    Ok((x[i0], 2.0 * j.a_at(0) * x[i0 + 1] - 1.0))
}

/// Largest coefficient discrepancy in `G^{(k)} = [-z^k g]₊` and
/// `H^{(k)} = [-z^k h]₊ - c_k` for the monomial `x^k` at site 0, using the
/// Taylor coefficients `c_n`, `d_n` of `g`, `h` at infinity.
pub fn series_truncation_identity(j: &JacobiMatrix, degree: usize) -> Result<f64> {
    let gh = gh_polynomials(j, &RealPolynomial::monomial(degree, 1.0), 0);
    let k = degree as i64;
    let c = |n: i64| crate::jacobi::taylor_c(j, n);
    let d = |n: i64| crate::jacobi::taylor_d(j, n);
    let mut worst = 0.0f64;
    // -z^k g = Σ c_n z^{k-n-1}: power z^i carries c_{k-1-i}
    for i in 0..degree.max(1) {
        let expected = if (i as i64) < k { c(k - 1 - i as i64)? } else { 0.0 };
        worst = worst.max((gh.g.coeff(i) - expected).abs());
    }
    // -z^k h = Σ_{n≥-1} d_n z^{k-n-1}: power z^i carries d_{k-1-i}
    for i in 0..=degree {
        let mut expected = d(k - 1 - i as i64)?;
        if i == 0 {
            expected -= c(k)?;
        }
        if degree == 0 {
            expected = 0.0;
        }
        worst = worst.max((gh.h.coeff(i) - expected).abs());
    }
    Ok(worst)
}

/// `ω_p(J) = -a₀²(m₊+m₋)G₀(z)`.
pub fn omega(j: &JacobiMatrix, p: &RealPolynomial, z: C64) -> Result<C64> {
    require_upper(z)?;
    if p.is_zero() {
        return Ok(C64::new(0.0, 0.0));
    }
    let (mp, mm) = m_pair(j, z)?.finite()?;
    let a0 = j.a_at(0);
    Ok(-a0 * a0 * (mp + mm) * gh_polynomials(j, p, 0).g.eval_complex(z))
}

/// `ω_p(J) = G₀/g₀` with `g₀` from the dense resolvent.
pub fn omega_via_resolvent(j: &JacobiMatrix, p: &RealPolynomial, z: C64, half_width: i64) -> Result<C64> {
    let (g0, _) = resolvent_dense(j, z, half_width)?;
    Ok(gh_polynomials(j, p, 0).g.eval_complex(z) / g0)
}

/// Central difference of `s ↦ f(s·q · J)` at `s = 0`.
fn flow_derivative(
    j: &JacobiMatrix,
    q: &RealPolynomial,
    fd_step: f64,
    f: impl Fn(&JacobiMatrix) -> Result<C64>,
) -> Result<C64> {
    let plus = f(&flow(j, q, fd_step)?)?;
    let minus = f(&flow(j, q, -fd_step)?)?;
    Ok((plus - minus) / (2.0 * fd_step))
}

/// `|d/dt ω_p(tq·J) - d/dt ω_q(tp·J)|` at `t = 0`, by central differences.
pub fn omega_symmetry_check(
    j: &JacobiMatrix,
    p: &RealPolynomial,
    q: &RealPolynomial,
    z: C64,
    fd_step: f64,
) -> Result<f64> {
    if p == q {
        return Ok(0.0);
    }
    let lhs = flow_derivative(j, q, fd_step, |m| omega(m, p, z))?;
    let rhs = flow_derivative(j, p, fd_step, |m| omega(m, q, z))?;
    Ok((lhs - rhs).norm())
}

/// `|ġ - 2g(ω_q h - H^{(q)}₀)|` along the `q`-flow, `ġ` by central differences.
pub fn evolg_residual(j: &JacobiMatrix, q: &RealPolynomial, z: C64, fd_step: f64) -> Result<f64> {
    let g_dot = flow_derivative(j, q, fd_step, |m| resolvent_g(m, z))?;
    let g = resolvent_g(j, z)?;
    let h = resolvent_h(j, z)?;
    let big_h = gh_polynomials(j, q, 0).h.eval_complex(z);
    Ok((g_dot - 2.0 * g * (omega(j, q, z)? * h - big_h)).norm())
}

/// `V(J) = (m₊+m₋)^{-1/2} [[m₊, -m₋], [1, 1]]`, square root in `ℂ⁺`.
pub fn conjugation_matrix(j: &JacobiMatrix, z: C64) -> Result<Mat2C> {
    let (mp, mm) = m_pair(j, z)?.finite()?;
    let sum = mp + mm;
    if sum.im <= 0.0 {
        return Err(Error::BranchAmbiguity { re: sum.re, im: sum.im });
    }
    let s = 1.0 / sum.sqrt();
    let one = C64::new(1.0, 0.0);
    Ok(Mat2C::new(mp * s, -mm * s, s * one, s * one))
}

/// Result of integrating the scalar cocycle along a flow.
#[derive(Debug, Clone)]
pub struct LambdaCocycle {
    pub lambda: C64,
    /// `t·p · J`.
    pub evolved: JacobiMatrix,
    /// `T(t; J, z)` from the co-integration.
    pub transfer: Mat2C,
    pub v_initial: Mat2C,
    pub v_final: Mat2C,
}

impl LambdaCocycle {
    /// `‖T - V(t·J) diag(λ, 1/λ) V(J)⁻¹‖_max`.
    pub fn conjugation_residual(&self) -> Result<f64> {
        let d = Mat2C::diag(self.lambda, 1.0 / self.lambda);
        let rebuilt = self.v_final * d * self.v_initial.inverse()?;
        Ok((self.transfer - rebuilt).max_norm())
    }
}

/// Integrates `λ̇ = ω_p(s·J) λ`, `λ(0) = 1`, as `log λ`, together with the
/// flow and `T`.
pub fn lambda_cocycle(
    j: &JacobiMatrix,
    p: &RealPolynomial,
    t: f64,
    z: C64,
    steps: usize,
) -> Result<LambdaCocycle> {
    let v_initial = conjugation_matrix(j, z)?;
    if t == 0.0 || p.is_zero() {
        return Ok(LambdaCocycle {
            lambda: C64::new(1.0, 0.0),
            evolved: j.clone(),
            transfer: Mat2C::identity(),
            v_initial,
            v_final: v_initial,
        });
    }
    let n = j.window_len();
    let mut y0 = pack(j);
    mat_to_slice(&Mat2C::identity(), &mut y0);
    y0.extend([0.0, 0.0]);
    let y = rk4_integrate(
        y0,
        t,
        steps,
        |y| {
            let m = unpack(j, y)?;
            let mut out = lax_rhs(&m, p);
            let tm = mat_from_slice(&y[2 * n..2 * n + 8]);
            mat_to_slice(&(toda_b(&m, p, z) * tm), &mut out);
            let sum = {
                let (mp, mm) = m_pair(&m, z)?.finite()?;
                mp + mm
            };
            if sum.im <= 0.0 {
                return Err(Error::BranchAmbiguity { re: sum.re, im: sum.im });
            }
            let w = omega(&m, p, z)?;
            out.extend([w.re, w.im]);
            Ok(out)
        },
        |y| check_floor(y, n, j.n_lo()),
    )?;
    let evolved = unpack(j, &y)?;
    let transfer = mat_from_slice(&y[2 * n..2 * n + 8]);
    let lambda = C64::new(y[2 * n + 8], y[2 * n + 9]).exp();
    let v_final = conjugation_matrix(&evolved, z)?;
    Ok(LambdaCocycle { lambda, evolved, transfer, v_initial, v_final })
}
