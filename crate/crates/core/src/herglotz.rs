//! Titchmarsh–Weyl m-functions of Jacobi matrices and what is built from
//! them: the M-matrix, reflection coefficients, Toda maps and band sets.
//!
//! Conventions: `m₊ = -f₊(1)/(a₀f₊(0))` and `m₋ = f₋(1)/(a₀f₋(0))`, where
//! `f±` are the solutions that are square summable at `±∞`. Both `m₊` and
//! `-m₋` are represented by the vector `(-f(1), a₀f(0))`, so both move
//! under the same transfer matrices.

use serde::Serialize;

use crate::cocycle::shift_cocycle;
use crate::error::{Error, Result};
use crate::jacobi::{Boundary, JacobiMatrix};
use crate::mobius::{chordal_distance, hyperbolic_distance, mobius_apply, Mat2C, SpherePoint, C64};

/// Tolerance on `Im` when validating Herglotz values.
const HERGLOTZ_SLACK: f64 = 1e-12;

/// The pair `(m₊, m₋)` at a spectral parameter `z ∈ ℂ⁺`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MPair {
    pub m_plus: SpherePoint,
    pub m_minus: SpherePoint,
    pub z: C64,
}

impl MPair {
    /// Both values finite, as needed by the M-matrix and reflection formulas.
    pub fn finite(&self) -> Result<(C64, C64)> {
        match (self.m_plus.value(), self.m_minus.value()) {
            (Some(p), Some(m)) => Ok((p, m)),
            _ => Err(Error::InvalidInput("m-function value at infinity".into())),
        }
    }
}

fn require_upper(z: C64) -> Result<()> {
    if z.im > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::NotInUpperHalfPlane { re: z.re, im: z.im })
    }
}

/// Root `w` of `a w² + (b - z) w + a = 0` with `|w| < 1`.
fn free_decay_root(a: f64, b: f64, z: C64) -> Result<C64> {
    let s = z - b;
    let disc = (s * s - 4.0 * a * a).sqrt();
    let (r1, r2) = ((s + disc) / (2.0 * a), (s - disc) / (2.0 * a));
    // r1·r2 = 1; pick the larger-modulus root first for accuracy
    let big = if r1.norm() >= r2.norm() { r1 } else { r2 };
    let w = 1.0 / big;
    if (w.norm() - 1.0).abs() < 1e-14 {
        return Err(Error::BandEdge);
    }
    Ok(w)
}

/// `m₊` of the constant matrix `a_n ≡ a`, `b_n ≡ b`.
pub fn m_free(a: f64, b: f64, z: C64) -> Result<SpherePoint> {
    require_upper(z)?;
    Ok(SpherePoint::Finite(-free_decay_root(a, b, z)? / a))
}

/// `m₋` of the constant matrix `a_n ≡ a`, `b_n ≡ b`.
pub fn m_minus_free(a: f64, b: f64, z: C64) -> Result<SpherePoint> {
    require_upper(z)?;
    Ok(SpherePoint::Finite(1.0 / (a * free_decay_root(a, b, z)?)))
}

/// `(m₊, m₋)` of `J` at `z`.
pub fn m_pair(j: &JacobiMatrix, z: C64) -> Result<MPair> {
    require_upper(z)?;
    let pair = match j.boundary() {
        Boundary::EventuallyFree { a_inf, b_inf } => {
            // K·J is free on the right once a_K is a tail value; L·J on the left.
            let k = j.n_hi() + 1;
            let l = j.n_lo() - 1;
            let right = m_free(a_inf, b_inf, z)?;
            let left = m_minus_free(a_inf, b_inf, z)?.neg();
            let m_plus = mobius_apply(&shift_cocycle(j, k, z).inverse()?, right)?;
            let neg_minus = mobius_apply(&shift_cocycle(j, l, z).inverse()?, left)?;
            MPair { m_plus, m_minus: neg_minus.neg(), z }
        }
        Boundary::Periodic => {
            let n = j.period().unwrap_or(1) as i64;
            let (m_plus, neg_minus) = periodic_fixed_points(&shift_cocycle(j, n, z))?;
            MPair { m_plus: m_plus.into(), m_minus: (-neg_minus).into(), z }
        }
    };
    if pair.m_plus.im() < -HERGLOTZ_SLACK || pair.m_minus.im() < -HERGLOTZ_SLACK {
        return Err(Error::DomainViolation { im: pair.m_plus.im().min(pair.m_minus.im()) });
    }
    Ok(pair)
}

/// Fixed points of the period map: roots of `c x² + (d - a) x - b = 0`.
/// Returns `(root in ℂ⁺, root in ℂ⁻)`.
fn periodic_fixed_points(t: &Mat2C) -> Result<(C64, C64)> {
    let scale = t.max_norm().max(1.0);
    if t.c.norm() < 1e-14 * scale {
        return Err(Error::TrivialMonodromy);
    }
    let tr = t.trace();
    let disc = (tr * tr - 4.0).sqrt();
    if disc.norm() < 1e-12 * scale {
        return Err(Error::BandEdge);
    }
    let amd = t.a - t.d;
    // avoid cancellation in the numerator, then use r1·r2 = -b/c
    let num = if (amd + disc).norm() >= (amd - disc).norm() { amd + disc } else { amd - disc };
    let r1 = num / (2.0 * t.c);
    let r2 = if r1.norm() > 0.0 { -t.b / (t.c * r1) } else { (amd - disc) / (2.0 * t.c) };
    match (r1.im > 0.0, r2.im > 0.0) {
        (true, false) => Ok((r1, r2)),
        (false, true) => Ok((r2, r1)),
        _ => Err(Error::InvalidInput(format!(
            "period map fixed points {r1} and {r2} do not separate the half-planes"
        ))),
    }
}

/// The 2×2 Herglotz matrix of `(m₊, m₋)`:
/// `[[g₀, (m₊-m₋)/(2h)], [(m₊-m₋)/(2h), g₁]]` with `h = m₊+m₋`,
/// `g₀ = -1/h`, `g₁ = m₊m₋/h`.
pub fn m_matrix(pair: &MPair) -> Result<[[C64; 2]; 2]> {
    let (mp, mm) = pair.finite()?;
    let h = mp + mm;
    if h.norm() == 0.0 {
        return Err(Error::InvalidInput("m+ + m- vanishes".into()));
    }
    let off = (mp - mm) / (2.0 * h);
    Ok([[-1.0 / h, off], [off, mp * mm / h]])
}

/// `(R₊, R₋) = ((m̄₊+m₋)/(m₊+m₋), (m₊+m̄₋)/(m₊+m₋))`.
pub fn reflection_coefficient(pair: &MPair) -> Result<(C64, C64)> {
    let (mp, mm) = pair.finite()?;
    let h = mp + mm;
    if h.norm() == 0.0 {
        return Err(Error::InvalidInput("m+ + m- vanishes".into()));
    }
    Ok(((mp.conj() + mm) / h, (mp + mm.conj()) / h))
}

/// `tanh(γ(m₊, -m̄₋)/2)`, the modulus of the reflection coefficient
/// expressed through the hyperbolic distance.
pub fn reflection_modulus_hyperbolic(pair: &MPair) -> Result<f64> {
    let (mp, mm) = pair.finite()?;
    Ok((0.5 * hyperbolic_distance(mp, -mm.conj())?).tanh())
}

/// Moves the pair by `T`: `(m₊, -m₋) ↦ (T m₊, T(-m₋))`.
pub fn toda_map(t: &Mat2C, pair: &MPair) -> Result<MPair> {
    let m_plus = mobius_apply(t, pair.m_plus)?;
    let m_minus = mobius_apply(t, pair.m_minus.neg())?.neg();
    let worst = m_plus.im().min(m_minus.im());
    let scale = [m_plus, m_minus]
        .iter()
        .filter_map(|p| p.value())
        .map(|v| v.norm())
        .fold(1.0, f64::max);
    if worst < -1e-10 * scale {
        return Err(Error::DomainViolation { im: worst });
    }
    Ok(MPair { m_plus, m_minus, z: pair.z })
}

/// Sorted disjoint closed intervals; degenerate intervals are single points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSet {
    pub intervals: Vec<(f64, f64)>,
}

impl BandSet {
    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Hausdorff distance between the endpoint lists, or `∞` when the
    /// interval counts differ.
    pub fn endpoint_distance(&self, other: &BandSet) -> f64 {
        if self.intervals.len() != other.intervals.len() {
            return f64::INFINITY;
        }
        self.intervals
            .iter()
            .zip(&other.intervals)
            .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()))
            .fold(0.0, f64::max)
    }
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `{x : |tr T(x)| ≤ 2}` inside `[lo, hi]`, sampled on `grid` points and
/// refined by bisection on `tr T ∓ 2`.
pub fn fixed_point_band_set(
    t_of_x: impl Fn(f64) -> Mat2C,
    search_interval: (f64, f64),
    grid: usize,
) -> Result<BandSet> {
    let (lo, hi) = search_interval;
    if grid < 2 || !(hi > lo) {
        return Err(Error::InvalidInput("band search needs an interval and at least 2 samples".into()));
    }
    let tr = |x: f64| t_of_x(x).trace().re;
    let xs: Vec<f64> = (0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| tr(x)).collect();
    if fs.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite("transfer-matrix trace"));
    }
    let inside = |f: f64| f.abs() <= 2.0;
    let mut intervals = Vec::new();
    let mut start = inside(fs[0]).then_some(xs[0]);
    for k in 0..grid - 1 {
        let (f0, f1) = (fs[k], fs[k + 1]);
        if (f0 > 2.0 && f1 < -2.0) || (f0 < -2.0 && f1 > 2.0) {
            return Err(Error::GridTooCoarse(xs[k]));
        }
        match (inside(f0), inside(f1)) {
            (true, false) => {
                let level = if f1 > 2.0 { 2.0 } else { -2.0 };
                let edge = bisect(&|x| tr(x) - level, xs[k], xs[k + 1]);
                intervals.push((start.take().unwrap_or(xs[k]), edge));
            }
            (false, true) => {
                let level = if f0 > 2.0 { 2.0 } else { -2.0 };
                start = Some(bisect(&|x| tr(x) - level, xs[k], xs[k + 1]));
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        intervals.push((s, xs[grid - 1]));
    }
    Ok(BandSet { intervals })
}

/// Band set of a periodic matrix from its one-period transfer matrix.
pub fn periodic_band_set(j: &JacobiMatrix, grid: usize) -> Result<BandSet> {
    let n = j.period().ok_or_else(|| Error::InvalidInput("band set needs a periodic matrix".into()))? as i64;
    let r = crate::jacobi::operator_norm_bound(j) + 0.5;
    fixed_point_band_set(|x| shift_cocycle(j, n, C64::new(x, 0.0)), (-r, r), grid)
}

/// Bands `[λ_{2k}, λ_{2k+1}]` from the merged periodic and antiperiodic
/// truncation spectra.
pub fn floquet_band_set(j: &JacobiMatrix) -> Result<BandSet> {
    let mut e = j.floquet_eigenvalues(1.0)?;
    e.extend(j.floquet_eigenvalues(-1.0)?);
    e.sort_by(f64::total_cmp);
    Ok(BandSet { intervals: e.chunks(2).map(|c| (c[0], c[1])).collect() })
}

/// Largest chordal distance between `±m±` and their images under the
/// period map `t`, over the grid.
pub fn fixed_point_residual(j: &JacobiMatrix, t: impl Fn(C64) -> Mat2C, z_grid: &[C64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &z in z_grid {
        let pair = m_pair(j, z)?;
        let tz = t(z);
        for w in [pair.m_plus, pair.m_minus.neg()] {
            worst = worst.max(chordal_distance(mobius_apply(&tz, w)?, w));
        }
    }
    Ok(worst)
}

/// [`fixed_point_residual`] with the matrix's own period map.
pub fn fixed_point_check(j: &JacobiMatrix, z_grid: &[C64]) -> Result<f64> {
    let n = j.period().ok_or_else(|| Error::InvalidInput("fixed-point check needs a periodic matrix".into()))? as i64;
    fixed_point_residual(j, |z| shift_cocycle(j, n, z), z_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::shift;
    use crate::cocycle::shift_step_matrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: SpherePoint, b: C64, tol: f64) -> bool {
        (a.value().unwrap() - b).norm() < tol
    }

    /// `-f(1)/(a₀ f(0))` from a Dirichlet-truncated solve of the
    /// difference equation on `[0, L]`, seeded at the far end.
    fn truncated_m_plus(j: &JacobiMatrix, z: C64, len: i64) -> C64 {
        // backward recursion from f(L+1) = 0, f(L) = 1
        let mut next = c(0.0, 0.0);
        let mut cur = c(1.0, 0.0);
        for n in (1..=len).rev() {
            let prev = ((z - j.b_at(n)) * cur - j.a_at(n) * next) / j.a_at(n - 1);
            next = cur;
            cur = prev;
            let scale = cur.norm().max(next.norm());
            next /= scale;
            cur /= scale;
        }
        -next / (j.a_at(0) * cur)
    }

    #[test]
    fn free_examples() {
        let m = m_free(0.5, 0.0, c(0.0, 1.0)).unwrap();
        assert!(close(m, c(0.0, 2.0 * (2f64.sqrt() - 1.0)), 1e-14));
        let j = JacobiMatrix::free(0.5, 0.0).unwrap();
        assert!(close(m, truncated_m_plus(&j, c(0.0, 1.0), 200), 1e-12));
        let big = m_free(0.5, 0.0, c(0.0, 100.0)).unwrap().value().unwrap();
        assert!((big + 1.0 / c(0.0, 100.0)).norm() < 1e-3);
        let z = c(0.3, 0.7);
        assert!(close(m_free(0.8, 0.4, z).unwrap(), m_free(0.8, 0.0, z - 0.4).unwrap().value().unwrap(), 1e-14));
        let mm = m_minus_free(0.5, 0.0, c(0.0, 1.0)).unwrap();
        assert!(close(mm, c(0.0, 2.0 * (2f64.sqrt() + 1.0)), 1e-13));
        assert!(m_free(0.5, 0.0, c(0.2, 0.0)).is_err());
    }

    #[test]
    fn periodic_pair_of_free_matrix() {
        let j = JacobiMatrix::free(0.5, 0.0).unwrap();
        let pair = m_pair(&j, c(0.0, 1.0)).unwrap();
        assert!(close(pair.m_plus, c(0.0, 2.0 * (2f64.sqrt() - 1.0)), 1e-12));
        assert!(close(pair.m_minus, c(0.0, 2.0 * (2f64.sqrt() + 1.0)), 1e-12));
    }

    fn periodic_sample() -> JacobiMatrix {
        JacobiMatrix::periodic(vec![0.9, 1.6, 0.4], vec![0.5, -0.2, 0.8]).unwrap()
    }

    fn window_sample() -> JacobiMatrix {
        JacobiMatrix::eventually_free(-3, vec![0.7, 1.1, 0.9, 1.4, 0.6, 0.8], vec![0.2, -0.4, 0.6, 0.0, 0.3, -0.1], 0.5, 0.1)
            .unwrap()
    }

    #[test]
    fn m_plus_matches_truncated_recursion() {
        for j in [periodic_sample(), window_sample()] {
            for z in [c(0.0, 1.0), c(0.7, 0.4), c(-1.2, 0.9)] {
                let pair = m_pair(&j, z).unwrap();
                let oracle = truncated_m_plus(&j, z, 400);
                assert!(close(pair.m_plus, oracle, 1e-10), "{j} {z} {} {oracle}", pair.m_plus);
            }
        }
    }

    #[test]
    fn herglotz_on_a_grid() {
        for j in [periodic_sample(), window_sample()] {
            for xr in -12..=12 {
                for &y in &[0.05, 0.5, 2.0] {
                    let pair = m_pair(&j, c(xr as f64 * 0.25, y)).unwrap();
                    assert!(pair.m_plus.im() > 0.0 && pair.m_minus.im() > 0.0);
                }
            }
        }
    }

    #[test]
    fn shift_update() {
        for j in [periodic_sample(), window_sample()] {
            for n in -3..=3 {
                let jn = shift(&j, n);
                let z = c(0.4, 0.6);
                let a = shift_step_matrix(&jn, z);
                let lhs = m_pair(&shift(&j, n + 1), z).unwrap();
                let rhs = toda_map(&a, &m_pair(&jn, z).unwrap()).unwrap();
                assert!(chordal_distance(lhs.m_plus, rhs.m_plus) < 1e-9);
                assert!(chordal_distance(lhs.m_minus, rhs.m_minus) < 1e-9);
            }
        }
    }

    #[test]
    fn m_matrix_examples() {
        let pair = MPair { m_plus: c(0.0, 1.0).into(), m_minus: c(0.0, 1.0).into(), z: c(0.0, 1.0) };
        let m = m_matrix(&pair).unwrap();
        assert!((m[0][0] - c(0.0, 0.5)).norm() < 1e-15);
        assert!((m[1][1] - c(0.0, 0.5)).norm() < 1e-15);
        assert_eq!(m[0][1], c(0.0, 0.0));
        let pair = m_pair(&periodic_sample(), c(0.3, 0.2)).unwrap();
        let m = m_matrix(&pair).unwrap();
        assert_eq!(m[0][1], m[1][0]);
        // imaginary part positive semidefinite
        let (p, q, r) = (m[0][0].im, m[0][1].im, m[1][1].im);
        assert!(p >= 0.0 && r >= 0.0 && p * r - q * q >= -1e-14);
    }

    #[test]
    fn closed_form_periodic_g() {
        let j = periodic_sample();
        for z in [c(0.0, 1.0), c(0.5, 0.05), c(-2.0, 0.3)] {
            let t = shift_cocycle(&j, 3, z);
            let tr = t.trace();
            let mut root = (tr * tr - 4.0).sqrt();
            if (-t.c / root).im < 0.0 {
                root = -root;
            }
            let m = m_matrix(&m_pair(&j, z).unwrap()).unwrap();
            assert!((m[0][0] + t.c / root).norm() < 1e-9);
            assert!((m[1][1] - t.b / root).norm() < 1e-9);
        }
    }

    #[test]
    fn reflection_examples() {
        let pair = MPair { m_plus: c(0.0, 1.0).into(), m_minus: c(0.0, 1.0).into(), z: c(0.0, 1.0) };
        assert!(reflection_coefficient(&pair).unwrap().0.norm() < 1e-15);
        let pair = MPair { m_plus: c(0.0, 1.0).into(), m_minus: c(0.0, 2.0).into(), z: c(0.0, 1.0) };
        assert!((reflection_coefficient(&pair).unwrap().0 - 1.0 / 3.0).norm() < 1e-15);
        for z in [c(0.1, 0.3), c(1.0, 1.0)] {
            let pair = m_pair(&periodic_sample(), z).unwrap();
            let (rp, rm) = reflection_coefficient(&pair).unwrap();
            let hyp = reflection_modulus_hyperbolic(&pair).unwrap();
            assert!((rp.norm() - hyp).abs() < 1e-10);
            assert!((rm.norm() - hyp).abs() < 1e-10);
        }
    }

    #[test]
    fn toda_map_trivial_cases() {
        let pair = m_pair(&periodic_sample(), c(0.2, 0.5)).unwrap();
        for t in [Mat2C::identity(), -Mat2C::identity()] {
            let out = toda_map(&t, &pair).unwrap();
            assert!(chordal_distance(out.m_plus, pair.m_plus) < 1e-15);
            assert!(chordal_distance(out.m_minus, pair.m_minus) < 1e-15);
        }
        let flip = Mat2C::from_real(-1.0, 0.0, 0.0, 1.0);
        assert!(matches!(toda_map(&flip, &pair), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn free_band_set() {
        let t = |x: f64| Mat2C::from_real(2.0 * x, 2.0, -0.5, 0.0);
        let e = fixed_point_band_set(t, (-1.5, 1.5), 301).unwrap();
        assert_eq!(e.intervals.len(), 1);
        assert!((e.intervals[0].0 + 1.0).abs() < 1e-10 && (e.intervals[0].1 - 1.0).abs() < 1e-10);
        let e = periodic_band_set(&JacobiMatrix::free(0.5, 0.0).unwrap(), 400).unwrap();
        assert!((e.intervals[0].0 + 1.0).abs() < 1e-10 && (e.intervals[0].1 - 1.0).abs() < 1e-10);
        let rot = fixed_point_band_set(|_| Mat2C::symplectic(), (-3.0, 3.0), 10).unwrap();
        assert_eq!(rot.intervals, vec![(-3.0, 3.0)]);
    }

    #[test]
    fn two_periodic_band_set_matches_floquet() {
        let beta = 0.6f64;
        let j = JacobiMatrix::periodic(vec![1.0, 1.0], vec![beta, -beta]).unwrap();
        let e = periodic_band_set(&j, 2000).unwrap();
        let f = floquet_band_set(&j).unwrap();
        assert!(e.endpoint_distance(&f) < 1e-6);
        let edge = (beta * beta + 4.0).sqrt();
        let expected = BandSet { intervals: vec![(-edge, -beta), (beta, edge)] };
        assert!(f.endpoint_distance(&expected) < 1e-12);
    }

    #[test]
    fn coarse_grid_is_reported() {
        let t = |x: f64| Mat2C::from_real(100.0 * x, 1.0, -1.0, 0.0);
        assert!(matches!(fixed_point_band_set(t, (-1.0, 1.0), 2), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn fixed_points_of_period_map() {
        let grid = [c(0.0, 1.0), c(0.4, 0.2), c(-1.0, 0.6)];
        let j = periodic_sample();
        assert!(fixed_point_check(&j, &grid).unwrap() < 1e-9);
        assert!(fixed_point_check(&JacobiMatrix::free(0.5, 0.0).unwrap(), &grid).unwrap() < 1e-9);
        let other = JacobiMatrix::periodic(vec![1.3, 0.6, 1.0], vec![-0.4, 0.2, 0.0]).unwrap();
        let wrong = fixed_point_residual(&j, |z| shift_cocycle(&other, 3, z), &grid).unwrap();
        assert!(wrong > 1e-3);
    }
}
