//! 2×2 complex matrices and their linear fractional action on the Riemann
//! sphere.
//!
//! A matrix `[[a, b], [c, d]]` acts by `w ↦ (aw + b)/(cw + d)`; the point at
//! infinity is an explicit state of [`SpherePoint`] rather than a large
//! float.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative threshold below which `cw + d` is treated as an exact zero.
pub const POLE_EPS: f64 = 1e-13;

/// Row-major 2×2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2C {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl Mat2C {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2C { a, b, c, d }
    }

    pub fn from_real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2C::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        Mat2C::from_real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn zero() -> Self {
        Mat2C::from_real(0.0, 0.0, 0.0, 0.0)
    }

    /// The symplectic unit `[[0, -1], [1, 0]]`.
    pub fn symplectic() -> Self {
        Mat2C::from_real(0.0, -1.0, 1.0, 0.0)
    }

    pub fn diag(p: C64, q: C64) -> Self {
        Mat2C::new(p, C64::new(0.0, 0.0), C64::new(0.0, 0.0), q)
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> C64 {
        self.a + self.d
    }

    /// `|det - 1|`.
    pub fn unimodularity_defect(&self) -> f64 {
        (self.det() - 1.0).norm()
    }

    /// General inverse; fails on a singular matrix.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(Error::DegenerateMobius);
        }
        Ok(Mat2C::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    /// Adjugate, i.e. the inverse of a unimodular matrix.
    pub fn adjugate(&self) -> Self {
        Mat2C::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn transpose(&self) -> Self {
        Mat2C::new(self.a, self.c, self.b, self.d)
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2C::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    /// Max-entry norm.
    pub fn max_norm(&self) -> f64 {
        self.entries().iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> [C64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|e| e.is_finite())
    }

    /// Matrix-vector product.
    pub fn apply_vector(&self, v: [C64; 2]) -> [C64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Linear fractional action on the Riemann sphere.
    pub fn apply(&self, w: SpherePoint) -> Result<SpherePoint> {
        mobius_apply(self, w)
    }

    /// `exp(X)` for a trace-free `X`, using `X² = -det(X)·I`.
    ///
    /// `exp(X) = cosh(μ)·I + sinh(μ)/μ·X` with `μ² = -det X`; both
    /// coefficients are even in `μ`, so no branch choice enters.
    pub fn exp_traceless(&self) -> Self {
        let mu2 = -self.det();
        let (ch, shc) = cosh_sinhc(mu2);
        Mat2C::identity().scale(ch) + self.scale(shc)
    }
}

/// `(cosh μ, sinh μ / μ)` as functions of `μ²`.
pub(crate) fn cosh_sinhc(mu2: C64) -> (C64, C64) {
    if mu2.norm() < 1e-4 {
        // Taylor series, truncation error below 1e-20 for |μ²| < 1e-4.
        let mut ch = C64::new(1.0, 0.0);
        let mut shc = C64::new(1.0, 0.0);
        let mut term_c = C64::new(1.0, 0.0);
        let mut term_s = C64::new(1.0, 0.0);
        for k in 1..6 {
            let k = k as f64;
            term_c = term_c * mu2 / ((2.0 * k - 1.0) * (2.0 * k));
            term_s = term_s * mu2 / ((2.0 * k) * (2.0 * k + 1.0));
            ch += term_c;
            shc += term_s;
        }
        (ch, shc)
    } else {
        let mu = mu2.sqrt();
        (mu.cosh(), mu.sinh() / mu)
    }
}

impl Mul for Mat2C {
    type Output = Mat2C;
    fn mul(self, o: Mat2C) -> Mat2C {
        Mat2C::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl Add for Mat2C {
    type Output = Mat2C;
    fn add(self, o: Mat2C) -> Mat2C {
        Mat2C::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Mat2C {
    type Output = Mat2C;
    fn sub(self, o: Mat2C) -> Mat2C {
        Mat2C::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl Neg for Mat2C {
    type Output = Mat2C;
    fn neg(self) -> Mat2C {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl fmt::Display for Mat2C {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// Row-major 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2R {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2R {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2R { a, b, c, d }
    }

    pub const fn identity() -> Self {
        Mat2R::new(1.0, 0.0, 0.0, 1.0)
    }

    pub const fn zero() -> Self {
        Mat2R::new(0.0, 0.0, 0.0, 0.0)
    }

    pub const fn symplectic() -> Self {
        Mat2R::new(0.0, -1.0, 1.0, 0.0)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Self {
        Mat2R::new(self.a, self.c, self.b, self.d)
    }

    pub fn adjugate(&self) -> Self {
        Mat2R::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::DegenerateMobius);
        }
        Ok(Mat2R::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat2R::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn max_norm(&self) -> f64 {
        [self.a, self.b, self.c, self.d].iter().map(|e| e.abs()).fold(0.0, f64::max)
    }

    pub fn to_complex(&self) -> Mat2C {
        Mat2C::from_real(self.a, self.b, self.c, self.d)
    }

    /// `exp(X)` for trace-free real `X`.
    pub fn exp_traceless(&self) -> Self {
        let mu2 = -self.det();
        let (ch, shc) = cosh_sinhc(C64::new(mu2, 0.0));
        Mat2R::identity().scale(ch.re) + self.scale(shc.re)
    }
}

impl Mul for Mat2R {
    type Output = Mat2R;
    fn mul(self, o: Mat2R) -> Mat2R {
        Mat2R::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl Add for Mat2R {
    type Output = Mat2R;
    fn add(self, o: Mat2R) -> Mat2R {
        Mat2R::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Mat2R {
    type Output = Mat2R;
    fn sub(self, o: Mat2R) -> Mat2R {
        Mat2R::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

/// A point of the Riemann sphere `ℂ ∪ {∞}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(C64),
    Infinity,
}

impl SpherePoint {
    pub fn finite(re: f64, im: f64) -> Self {
        SpherePoint::Finite(C64::new(re, im))
    }

    pub fn value(&self) -> Option<C64> {
        match *self {
            SpherePoint::Finite(w) => Some(w),
            SpherePoint::Infinity => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    /// Imaginary part; `+∞`'s imaginary part is taken as 0 (it is on the
    /// boundary of the upper half-plane).
    pub fn im(&self) -> f64 {
        self.value().map_or(0.0, |w| w.im)
    }

    pub fn neg(&self) -> Self {
        match *self {
            SpherePoint::Finite(w) => SpherePoint::Finite(-w),
            SpherePoint::Infinity => SpherePoint::Infinity,
        }
    }

    pub fn conj(&self) -> Self {
        match *self {
            SpherePoint::Finite(w) => SpherePoint::Finite(w.conj()),
            SpherePoint::Infinity => SpherePoint::Infinity,
        }
    }

    /// Representative vector `(w, 1)` or `(1, 0)`.
    pub fn to_vector(&self) -> [C64; 2] {
        match *self {
            SpherePoint::Finite(w) => [w, C64::new(1.0, 0.0)],
            SpherePoint::Infinity => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        }
    }
}

impl From<C64> for SpherePoint {
    fn from(w: C64) -> Self {
        SpherePoint::Finite(w)
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Finite(w) => write!(f, "{w}"),
            SpherePoint::Infinity => write!(f, "∞"),
        }
    }
}

/// `(aw + b)/(cw + d)` with the usual conventions at `∞`.
pub fn mobius_apply(m: &Mat2C, w: SpherePoint) -> Result<SpherePoint> {
    let (num, den, scale) = match w {
        SpherePoint::Finite(w) => (
            m.a * w + m.b,
            m.c * w + m.d,
            m.c.norm() * w.norm() + m.d.norm(),
        ),
        SpherePoint::Infinity => (m.a, m.c, m.c.norm()),
    };
    if !num.is_finite() || !den.is_finite() {
        return Err(Error::NonFinite("mobius_apply"));
    }
    let den_zero = den.norm() == 0.0 || den.norm() < POLE_EPS * scale;
    if den_zero {
        if num.norm() == 0.0 {
            return Err(Error::DegenerateMobius);
        }
        return Ok(SpherePoint::Infinity);
    }
    Ok(SpherePoint::Finite(num / den))
}

/// The sphere point `v₁/v₂` represented by a nonzero vector.
pub fn vector_to_point(v: [C64; 2]) -> Result<SpherePoint> {
    if v[0].norm() == 0.0 && v[1].norm() == 0.0 {
        return Err(Error::ZeroVector);
    }
    if v[1].norm() == 0.0 {
        return Ok(SpherePoint::Infinity);
    }
    Ok(SpherePoint::Finite(v[0] / v[1]))
}

/// Poincaré distance in the upper half-plane,
/// `arcosh(1 + |w₁-w₂|²/(2 Im w₁ Im w₂))`.
pub fn hyperbolic_distance(w1: C64, w2: C64) -> Result<f64> {
    for w in [w1, w2] {
        if !(w.im > 0.0) {
            return Err(Error::NotInUpperHalfPlane { re: w.re, im: w.im });
        }
    }
    let x = (w1 - w2).norm_sqr() / (2.0 * w1.im * w2.im);
    // arcosh(1 + x) = log1p(x + sqrt(x(x + 2))), accurate for small x.
    Ok((x + (x * (x + 2.0)).sqrt()).ln_1p())
}

/// Chordal distance on the Riemann sphere (bounded by 1).
pub fn chordal_distance(p: SpherePoint, q: SpherePoint) -> f64 {
    match (p, q) {
        (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
        (SpherePoint::Finite(w), SpherePoint::Infinity)
        | (SpherePoint::Infinity, SpherePoint::Finite(w)) => 1.0 / (1.0 + w.norm_sqr()).sqrt(),
        (SpherePoint::Finite(u), SpherePoint::Finite(v)) => {
            (u - v).norm() / ((1.0 + u.norm_sqr()).sqrt() * (1.0 + v.norm_sqr()).sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_fixes_points() {
        let w = SpherePoint::finite(3.0, 4.0);
        assert_eq!(mobius_apply(&Mat2C::identity(), w).unwrap(), w);
        assert_eq!(
            mobius_apply(&Mat2C::identity(), SpherePoint::Infinity).unwrap(),
            SpherePoint::Infinity
        );
    }

    #[test]
    fn inversion_fixes_i() {
        let j = Mat2C::from_real(0.0, -1.0, 1.0, 0.0);
        let w = mobius_apply(&j, SpherePoint::finite(0.0, 1.0)).unwrap();
        assert!((w.value().unwrap() - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn step_matrix_at_infinity_matches_vector_action() {
        // A(J) with a1 = 1, b1 = 0 at z = i.
        let z = c(0.0, 1.0);
        let m = Mat2C::new(z, c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0));
        let via_vector = vector_to_point(m.apply_vector([c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        let via_mobius = mobius_apply(&m, SpherePoint::Infinity).unwrap();
        assert_eq!(via_vector, via_mobius);
        assert!((via_mobius.value().unwrap() - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn pole_maps_to_infinity_and_zero_over_zero_is_rejected() {
        let m = Mat2C::from_real(1.0, 0.0, 1.0, -2.0);
        assert_eq!(mobius_apply(&m, SpherePoint::finite(2.0, 0.0)).unwrap(), SpherePoint::Infinity);
        let singular = Mat2C::from_real(1.0, -2.0, 1.0, -2.0);
        assert_eq!(
            mobius_apply(&singular, SpherePoint::finite(2.0, 0.0)),
            Err(Error::DegenerateMobius)
        );
    }

    #[test]
    fn vectors_to_points() {
        assert_eq!(vector_to_point([c(1.0, 0.0), c(0.0, 0.0)]).unwrap(), SpherePoint::Infinity);
        let p = vector_to_point([c(0.0, 2.0), c(2.0, 0.0)]).unwrap();
        assert_eq!(p, SpherePoint::finite(0.0, 1.0));
        let m = c(0.3, -1.7);
        let k = c(-2.5, 0.4);
        let q = vector_to_point([m * k, k]).unwrap().value().unwrap();
        assert!((q - m).norm() < 1e-15);
        assert_eq!(vector_to_point([c(0.0, 0.0), c(0.0, 0.0)]), Err(Error::ZeroVector));
    }

    #[test]
    fn hyperbolic_distance_examples() {
        assert_eq!(hyperbolic_distance(c(0.0, 1.0), c(0.0, 1.0)).unwrap(), 0.0);
        let d = hyperbolic_distance(c(0.0, 1.0), c(0.0, 2.0)).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-15);
        assert!(hyperbolic_distance(c(0.0, 1.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn traceless_exponential_matches_series() {
        let x = Mat2C::new(c(0.3, 0.2), c(-1.1, 0.5), c(0.7, -0.4), c(-0.3, -0.2));
        let mut sum = Mat2C::identity();
        let mut term = Mat2C::identity();
        for k in 1..40 {
            term = (term * x).scale(c(1.0 / k as f64, 0.0));
            sum = sum + term;
        }
        assert!((x.exp_traceless() - sum).max_norm() < 1e-13);
        let nil = Mat2C::new(c(0.0, 0.0), c(0.0, -2.0), c(0.0, 0.0), c(0.0, 0.0));
        assert_eq!(nil.exp_traceless(), Mat2C::identity() + nil);
    }

    fn unimodular_real() -> impl Strategy<Value = Mat2R> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_filter_map("singular", |(a, b, c)| {
            // d chosen to force det = 1.
            if a.abs() < 0.1 {
                None
            } else {
                Some(Mat2R::new(a, b, c, (1.0 + b * c) / a))
            }
        })
    }

    fn upper_point() -> impl Strategy<Value = C64> {
        (-3.0..3.0f64, 0.05..3.0f64).prop_map(|(x, y)| c(x, y))
    }

    fn complex_matrix() -> impl Strategy<Value = Mat2C> {
        proptest::array::uniform8(-2.0..2.0f64).prop_map(|e| {
            Mat2C::new(c(e[0], e[1]), c(e[2], e[3]), c(e[4], e[5]), c(e[6], e[7]))
        })
    }

    proptest! {
        #[test]
        fn composition_law(m1 in complex_matrix(), m2 in complex_matrix(), w in upper_point()) {
            prop_assume!(m1.det().norm() > 0.1 && m2.det().norm() > 0.1);
            let w = SpherePoint::Finite(w);
            if let (Ok(inner), Ok(direct)) = (mobius_apply(&m2, w), mobius_apply(&(m1 * m2), w)) {
                if let Ok(outer) = mobius_apply(&m1, inner) {
                    prop_assert!(chordal_distance(outer, direct) < 1e-9);
                }
            }
        }

        #[test]
        fn real_unimodular_preserves_upper_half_plane(m in unimodular_real(), w in upper_point()) {
            let image = mobius_apply(&m.to_complex(), SpherePoint::Finite(w)).unwrap();
            prop_assert!(image.value().unwrap().im > 0.0);
        }

        #[test]
        fn distance_is_invariant(m in unimodular_real(), w1 in upper_point(), w2 in upper_point()) {
            let mc = m.to_complex();
            let u1 = mobius_apply(&mc, SpherePoint::Finite(w1)).unwrap().value().unwrap();
            let u2 = mobius_apply(&mc, SpherePoint::Finite(w2)).unwrap().value().unwrap();
            let d0 = hyperbolic_distance(w1, w2).unwrap();
            let d1 = hyperbolic_distance(u1, u2).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-9 * (1.0 + d0));
        }
    }
}
