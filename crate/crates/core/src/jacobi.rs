//! Jacobi matrices `(Ju)_n = a_n u_{n+1} + a_{n-1} u_{n-1} + b_n u_n` on the
//! integer line, stored as a finite window plus a boundary policy.
//!
//! All banded quantities (`⟨δ_j, J^m δ_k⟩`, the Lax right-hand side) are
//! computed by iterating `J` on a local vector, so only coefficients within
//! distance `m` of the requested sites are ever read.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound for the off-diagonal coefficients.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// Default index window for eventually-free instances.
pub const DEFAULT_WINDOW: (i64, i64) = (-32, 32);

/// How coefficients are extended outside the stored window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    /// The window is one full period.
    Periodic,
    /// Constant coefficients on both sides of the window.
    EventuallyFree { a_inf: f64, b_inf: f64 },
}

/// A Jacobi matrix with bounded coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JacobiRepr", into = "JacobiRepr")]
pub struct JacobiMatrix {
    n_lo: i64,
    a: Vec<f64>,
    b: Vec<f64>,
    boundary: Boundary,
}

#[derive(Serialize, Deserialize)]
struct JacobiRepr {
    n_lo: i64,
    n_hi: i64,
    a: Vec<f64>,
    b: Vec<f64>,
    boundary: Boundary,
}

impl TryFrom<JacobiRepr> for JacobiMatrix {
    type Error = Error;

    fn try_from(r: JacobiRepr) -> Result<Self> {
        if r.n_hi < r.n_lo || (r.n_hi - r.n_lo + 1) as usize != r.a.len() {
            return Err(Error::InvalidInput(format!(
                "window [{}, {}] does not match {} coefficients",
                r.n_lo,
                r.n_hi,
                r.a.len()
            )));
        }
        JacobiMatrix::new(r.n_lo, r.a, r.b, r.boundary)
    }
}

impl From<JacobiMatrix> for JacobiRepr {
    fn from(j: JacobiMatrix) -> Self {
        JacobiRepr {
            n_lo: j.n_lo,
            n_hi: j.n_hi(),
            a: j.a,
            b: j.b,
            boundary: j.boundary,
        }
    }
}

impl JacobiMatrix {
    /// Validating constructor.
    pub fn new(n_lo: i64, a: Vec<f64>, b: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "coefficient windows must be non-empty and equal in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        for (k, (&ak, &bk)) in a.iter().zip(&b).enumerate() {
            if !ak.is_finite() || !bk.is_finite() {
                return Err(Error::NonFinite("Jacobi coefficients"));
            }
            if ak <= POSITIVITY_FLOOR {
                return Err(Error::PositivityFloor { site: n_lo + k as i64, value: ak });
            }
        }
        if let Boundary::EventuallyFree { a_inf, b_inf } = boundary {
            if !(a_inf > POSITIVITY_FLOOR) || !b_inf.is_finite() {
                return Err(Error::InvalidInput(format!("invalid free tail ({a_inf}, {b_inf})")));
            }
        }
        let mut j = JacobiMatrix { n_lo, a, b, boundary };
        if j.is_periodic() {
            j.normalize_periodic();
        }
        Ok(j)
    }

    /// Periodic matrix with one period `(a_0..a_{N-1}, b_0..b_{N-1})`.
    pub fn periodic(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        JacobiMatrix::new(0, a, b, Boundary::Periodic)
    }

    /// Constant coefficients `a_n ≡ a`, `b_n ≡ b`.
    pub fn free(a: f64, b: f64) -> Result<Self> {
        JacobiMatrix::periodic(vec![a], vec![b])
    }

    /// Window `[n_lo, n_lo + len)` with constant tails `(a_inf, b_inf)`.
    pub fn eventually_free(
        n_lo: i64,
        a: Vec<f64>,
        b: Vec<f64>,
        a_inf: f64,
        b_inf: f64,
    ) -> Result<Self> {
        JacobiMatrix::new(n_lo, a, b, Boundary::EventuallyFree { a_inf, b_inf })
    }

    /// Samples `coeff(n) -> (a_n, b_n)` on [`DEFAULT_WINDOW`].
    pub fn eventually_free_from_fn(
        coeff: impl Fn(i64) -> (f64, f64),
        a_inf: f64,
        b_inf: f64,
    ) -> Result<Self> {
        let (lo, hi) = DEFAULT_WINDOW;
        let (a, b) = (lo..=hi).map(coeff).unzip();
        JacobiMatrix::eventually_free(lo, a, b, a_inf, b_inf)
    }

    fn normalize_periodic(&mut self) {
        if self.n_lo != 0 {
            let n = self.a.len() as i64;
            let a: Vec<f64> = (0..n).map(|k| self.a_at(k)).collect();
            let b: Vec<f64> = (0..n).map(|k| self.b_at(k)).collect();
            self.a = a;
            self.b = b;
            self.n_lo = 0;
        }
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }

    /// Period for periodic matrices.
    pub fn period(&self) -> Option<usize> {
        self.is_periodic().then_some(self.a.len())
    }

    pub fn n_lo(&self) -> i64 {
        self.n_lo
    }

    pub fn n_hi(&self) -> i64 {
        self.n_lo + self.a.len() as i64 - 1
    }

    pub fn window_len(&self) -> usize {
        self.a.len()
    }

    /// Stored window coefficients.
    pub fn window_a(&self) -> &[f64] {
        &self.a
    }

    pub fn window_b(&self) -> &[f64] {
        &self.b
    }

    fn index(&self, n: i64) -> Option<usize> {
        let k = n - self.n_lo;
        match self.boundary {
            Boundary::Periodic => Some(k.rem_euclid(self.a.len() as i64) as usize),
            Boundary::EventuallyFree { .. } => {
                (0..self.a.len() as i64).contains(&k).then_some(k as usize)
            }
        }
    }

    /// `a_n` for any integer `n`.
    pub fn a_at(&self, n: i64) -> f64 {
        match (self.index(n), self.boundary) {
            (Some(k), _) => self.a[k],
            (None, Boundary::EventuallyFree { a_inf, .. }) => a_inf,
            (None, Boundary::Periodic) => unreachable!(),
        }
    }

    /// `b_n` for any integer `n`.
    pub fn b_at(&self, n: i64) -> f64 {
        match (self.index(n), self.boundary) {
            (Some(k), _) => self.b[k],
            (None, Boundary::EventuallyFree { b_inf, .. }) => b_inf,
            (None, Boundary::Periodic) => unreachable!(),
        }
    }

    /// Same boundary policy and window, new window coefficients.
    pub fn with_window(&self, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != self.a.len() {
            return Err(Error::InvalidInput("window length changed".into()));
        }
        JacobiMatrix::new(self.n_lo, a, b, self.boundary)
    }

    /// Applies `J` to a finitely supported vector.
    pub(crate) fn apply(&self, u: &LocalVec) -> LocalVec {
        let lo = u.lo - 1;
        let len = u.v.len() + 2;
        let mut out = vec![0.0; len];
        for (i, o) in out.iter_mut().enumerate() {
            let n = lo + i as i64;
            *o = self.a_at(n) * u.get(n + 1) + self.a_at(n - 1) * u.get(n - 1) + self.b_at(n) * u.get(n);
        }
        LocalVec { lo, v: out }
    }

    /// Eigenvalues of the `N×N` truncation with Floquet multiplier `±1`
    /// (`sign = 1` periodic, `sign = -1` antiperiodic).
    pub fn floquet_eigenvalues(&self, sign: f64) -> Result<Vec<f64>> {
        let n = self.period().ok_or_else(|| {
            Error::InvalidInput("Floquet truncation requires a periodic matrix".into())
        })?;
        let off = &self.a[..n - 1];
        tridiag_eigenvalues(&self.b, off, Some(sign * self.a[n - 1]))
    }

    /// Sorted spectrum of the periodic truncation.
    pub fn periodic_truncation_eigenvalues(&self) -> Result<Vec<f64>> {
        self.floquet_eigenvalues(1.0)
    }
}

impl fmt::Display for JacobiMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J[{}..={}; a={:?}, b={:?}, {:?}]", self.n_lo, self.n_hi(), self.a, self.b, self.boundary)
    }
}

/// Finitely supported real sequence `v[k]` at index `lo + k`.
#[derive(Debug, Clone)]
pub(crate) struct LocalVec {
    pub lo: i64,
    pub v: Vec<f64>,
}

impl LocalVec {
    pub fn delta(n: i64) -> Self {
        LocalVec { lo: n, v: vec![1.0] }
    }

    pub fn get(&self, n: i64) -> f64 {
        let k = n - self.lo;
        if k < 0 || k as usize >= self.v.len() {
            0.0
        } else {
            self.v[k as usize]
        }
    }

    /// `self·s + other·t`, widened to the union of supports.
    fn combine(&self, s: f64, other: &LocalVec, t: f64) -> LocalVec {
        let lo = self.lo.min(other.lo);
        let hi = (self.lo + self.v.len() as i64).max(other.lo + other.v.len() as i64);
        let v = (lo..hi).map(|n| self.get(n) * s + other.get(n) * t).collect();
        LocalVec { lo, v }
    }
}

/// Real polynomial `c₀ + c₁x + … + c_N x^N`; trailing zeros are trimmed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealPolynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for RealPolynomial {
    fn from(c: Vec<f64>) -> Self {
        RealPolynomial::new(c)
    }
}

impl From<RealPolynomial> for Vec<f64> {
    fn from(p: RealPolynomial) -> Self {
        p.coeffs
    }
}

impl RealPolynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        RealPolynomial { coeffs }
    }

    pub fn zero() -> Self {
        RealPolynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        RealPolynomial::new(vec![c])
    }

    /// `c·x^k`.
    pub fn monomial(k: usize, c: f64) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        RealPolynomial::new(v)
    }

    /// `p(x) = x`, the classical Toda flow.
    pub fn x() -> Self {
        RealPolynomial::monomial(1, 1.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^k` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: num_complex::Complex64) -> num_complex::Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(num_complex::Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn add(&self, other: &RealPolynomial) -> RealPolynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        RealPolynomial::new((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }

    pub fn scale(&self, s: f64) -> RealPolynomial {
        RealPolynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }
}

impl fmt::Display for RealPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| match k {
                0 => format!("{c}"),
                1 => format!("{c}x"),
                _ => format!("{c}x^{k}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

/// `Σ 2^{-|n|} (|a_n - a'_n| + |b_n - b'_n|)`.
///
/// Both matrices are read through their boundary policies; the sum runs
/// over `|n| ≤ K` with `K` at least 64 beyond either window, so the
/// neglected tail is below `2^{-63}` times the coefficient spread.
pub fn metric(j1: &JacobiMatrix, j2: &JacobiMatrix) -> f64 {
    let reach = [j1.n_lo, j1.n_hi(), j2.n_lo, j2.n_hi()]
        .iter()
        .map(|n| n.abs())
        .max()
        .unwrap_or(0);
    let k = reach + 64;
    (-k..=k)
        .map(|n| {
            let w = 0.5f64.powi(n.unsigned_abs() as i32);
            w * ((j1.a_at(n) - j2.a_at(n)).abs() + (j1.b_at(n) - j2.b_at(n)).abs())
        })
        .sum()
}

/// `n·J`: coefficients `(a_{m+n}, b_{m+n})`.
pub fn shift(j: &JacobiMatrix, n: i64) -> JacobiMatrix {
    match j.boundary {
        Boundary::Periodic => {
            let len = j.a.len() as i64;
            JacobiMatrix {
                n_lo: 0,
                a: (0..len).map(|m| j.a_at(m + n)).collect(),
                b: (0..len).map(|m| j.b_at(m + n)).collect(),
                boundary: Boundary::Periodic,
            }
        }
        Boundary::EventuallyFree { .. } => JacobiMatrix {
            n_lo: j.n_lo - n,
            ..j.clone()
        },
    }
}

/// `⟨δ_j, J^m δ_k⟩`.
pub fn matrix_element_power(j: &JacobiMatrix, row: i64, col: i64, m: usize) -> f64 {
    if row.abs_diff(col) as usize > m {
        return 0.0;
    }
    let mut v = LocalVec::delta(col);
    for _ in 0..m {
        v = j.apply(&v);
    }
    v.get(row)
}

/// `(⟨δ_n, J^j δ_n⟩, ⟨δ_{n+1}, J^j δ_n⟩)` for `j = 0..=kmax`.
pub fn diagonal_moments(j: &JacobiMatrix, site: i64, kmax: usize) -> (Vec<f64>, Vec<f64>) {
    let mut diag = Vec::with_capacity(kmax + 1);
    let mut next = Vec::with_capacity(kmax + 1);
    let mut v = LocalVec::delta(site);
    for step in 0..=kmax {
        diag.push(v.get(site));
        next.push(v.get(site + 1));
        if step < kmax {
            v = j.apply(&v);
        }
    }
    (diag, next)
}

/// Taylor coefficient `c_n = ⟨δ₀, Jⁿ δ₀⟩` of the resolvent at infinity.
pub fn taylor_c(j: &JacobiMatrix, n: i64) -> Result<f64> {
    if n < 0 {
        return Err(Error::InvalidInput(format!("c_n needs n >= 0, got {n}")));
    }
    Ok(matrix_element_power(j, 0, 0, n as usize))
}

/// `d_{-1} = 1`, `d_n = 2a₀⟨δ₁, Jⁿ δ₀⟩` for `n ≥ 0` (so `d₀ = 0`).
pub fn taylor_d(j: &JacobiMatrix, n: i64) -> Result<f64> {
    match n {
        n if n < -1 => Err(Error::InvalidInput(format!("d_n needs n >= -1, got {n}"))),
        -1 => Ok(1.0),
        0 => Ok(0.0),
        n => Ok(2.0 * j.a_at(0) * matrix_element_power(j, 1, 0, n as usize)),
    }
}

/// `p(J)δ_k`, by Horner's scheme on local vectors.
pub(crate) fn polynomial_column(j: &JacobiMatrix, p: &RealPolynomial, k: i64) -> LocalVec {
    let delta = LocalVec::delta(k);
    let Some(deg) = p.degree() else {
        return LocalVec { lo: k, v: vec![0.0] };
    };
    let mut v = LocalVec { lo: k, v: vec![p.coeff(deg)] };
    for i in (0..deg).rev() {
        v = j.apply(&v).combine(1.0, &delta, p.coeff(i));
    }
    v
}

/// Time derivatives of the Jacobi coefficients under `J̇ = [p(J)_a, J]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaxRates {
    /// First site the vectors refer to.
    pub n_lo: i64,
    pub da: Vec<f64>,
    pub db: Vec<f64>,
}

/// Tridiagonal part of `[p(J)_a, J]` at each window site.
///
/// With `P = p(J)` (symmetric, band width `deg p`):
/// `ȧ_n = P_{n,n+1}(b_{n+1} - b_n) + a_{n+1}P_{n,n+2} - a_{n-1}P_{n-1,n+1}`,
/// `ḃ_n = 2(a_n P_{n,n+1} - a_{n-1} P_{n-1,n})`.
pub fn antisymmetric_commutator(j: &JacobiMatrix, p: &RealPolynomial) -> LaxRates {
    let lo = j.n_lo();
    let hi = j.n_hi();
    // cols[k] = p(J)δ_{lo-1+k}
    let cols: Vec<LocalVec> = (lo - 1..=hi).map(|k| polynomial_column(j, p, k)).collect();
    let (da, db) = (lo..=hi)
        .map(|n| {
            let k = (n - lo) as usize;
            rates_from_columns(j, n, &cols[k + 1], &cols[k])
        })
        .unzip();
    LaxRates { n_lo: lo, da, db }
}

/// `(ȧ_n, ḃ_n)` at a single site `n` (any integer).
pub fn lax_rates_at(j: &JacobiMatrix, p: &RealPolynomial, n: i64) -> (f64, f64) {
    let here = polynomial_column(j, p, n);
    let prev = polynomial_column(j, p, n - 1);
    rates_from_columns(j, n, &here, &prev)
}

fn rates_from_columns(j: &JacobiMatrix, n: i64, here: &LocalVec, prev: &LocalVec) -> (f64, f64) {
    let p_n_n1 = here.get(n + 1);
    let p_n_n2 = here.get(n + 2);
    let p_m_n1 = prev.get(n + 1);
    let p_m_n = prev.get(n);
    (
        p_n_n1 * (j.b_at(n + 1) - j.b_at(n)) + j.a_at(n + 1) * p_n_n2 - j.a_at(n - 1) * p_m_n1,
        2.0 * (j.a_at(n) * p_n_n1 - j.a_at(n - 1) * p_m_n),
    )
}

/// `2 sup a_n + sup |b_n|`, an upper bound for `‖J‖`.
pub fn operator_norm_bound(j: &JacobiMatrix) -> f64 {
    let mut amax = j.a.iter().copied().fold(0.0, f64::max);
    let mut bmax = j.b.iter().map(|b| b.abs()).fold(0.0, f64::max);
    if let Boundary::EventuallyFree { a_inf, b_inf } = j.boundary {
        amax = amax.max(a_inf);
        bmax = bmax.max(b_inf.abs());
    }
    2.0 * amax + bmax
}

const MAX_QL_ITERATIONS: usize = 60;
const MAX_JACOBI_SWEEPS: usize = 100;

/// Ascending eigenvalues of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal.
///
/// With `periodic_corner = Some(c)` the matrix is closed periodically: `c`
/// couples the last site back to the first (`n = 2` adds it to the single
/// off-diagonal entry, `n = 1` adds `2c` to the diagonal). The corner case
/// is solved densely by cyclic Jacobi rotations; the open case by implicit
/// QL with Wilkinson-type shifts.
pub fn tridiag_eigenvalues(
    diag: &[f64],
    offdiag: &[f64],
    periodic_corner: Option<f64>,
) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if offdiag.len() != n - 1 {
        return Err(Error::InvalidInput(format!(
            "off-diagonal must have length {} (got {})",
            n - 1,
            offdiag.len()
        )));
    }
    if diag.iter().chain(offdiag).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("tridiagonal entries"));
    }
    let mut eig = match periodic_corner {
        None => {
            let mut d = diag.to_vec();
            implicit_ql(&mut d, offdiag)?;
            d
        }
        Some(c) => {
            let mut m = vec![vec![0.0; n]; n];
            for i in 0..n {
                m[i][i] = diag[i];
            }
            for i in 0..n - 1 {
                m[i][i + 1] = offdiag[i];
                m[i + 1][i] = offdiag[i];
            }
            match n {
                1 => m[0][0] += 2.0 * c,
                _ => {
                    m[0][n - 1] += c;
                    m[n - 1][0] += c;
                }
            }
            cyclic_jacobi(m)?
        }
    };
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

fn implicit_ql(d: &mut [f64], offdiag: &[f64]) -> Result<()> {
    let n = d.len();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(offdiag);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(Error::NonConvergence(format!("implicit QL at index {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn cyclic_jacobi(mut m: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = m.len();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _ in 0..MAX_JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            return Ok((0..n).map(|i| m[i][i]).collect());
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for row in m.iter_mut() {
                    let (mkp, mkq) = (row[p], row[q]);
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                let (upper, lower) = m.split_at_mut(q);
                for (x, y) in upper[p].iter_mut().zip(lower[0].iter_mut()) {
                    let (mpk, mqk) = (*x, *y);
                    *x = c * mpk - s * mqk;
                    *y = s * mpk + c * mqk;
                }
            }
        }
    }
    Err(Error::NonConvergence("cyclic Jacobi sweeps exhausted".into()))
}
