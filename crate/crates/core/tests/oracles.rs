use proptest::prelude::*;
use todalab::canonical::{
    canonical_transfer, m_plus_canonical, schrodinger_to_canonical, twisted_shift_map, v_from_h, weyl_disk, Hamiltonian,
    Potential, Twist,
};
use todalab::cocycle::{shift_cocycle, shift_step_matrix};
use todalab::herglotz::{m_free, m_pair, periodic_band_set};
use todalab::jacobi::shift;
use todalab::mobius::{chordal_distance, mobius_apply};
use todalab::{JacobiMatrix, Mat2C, Mat2R, SpherePoint, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dirichlet half-line with constant potential: `m(z) = i√(z - v)`.
#[test]
fn constant_potential_m_function() {
    for (v, z) in [(0.5, c(0.0, 1.0)), (-0.3, c(1.0, 0.5)), (2.0, c(-1.0, 2.0))] {
        let pot = Potential::from_fn(0.0, 1e-3, 40001, |_| v).unwrap();
        let (h, _) = schrodinger_to_canonical(&pot).unwrap();
        let m = m_plus_canonical(&h, z, 1e-7).unwrap().value().unwrap();
        let expected = c(0.0, 1.0) * (z - v).sqrt();
        assert!((m - expected).norm() < 1e-4, "v = {v}, z = {z}: {m} vs {expected}");
    }
}

/// Solutions of `-y'' + Vy = zy` by an independent fine RK4 on the scalar
/// equation match the transfer matrix built from `H`: `T₁ = T₀(x)⁻¹ M_z(x)`
/// where `M_z` is the Schrödinger transfer matrix at spectral parameter `z`.
/// Cell averaging of `H` is second order in `dx`.
#[test]
fn canonical_transfer_matches_schrodinger_solutions() {
    let z = c(0.3, 0.8);
    let v = |x: f64| 1.0 + 0.5 * (2.0 * x).sin();
    // y' = u, u' = (V - z) y; columns for (y, u)(0) = (1, 0) and (0, 1)
    let solve = |y0: C64, u0: C64| {
        let mut y = [y0, u0];
        let steps = 20000;
        let hstep = 2.0 / steps as f64;
        let f = |x: f64, y: [C64; 2]| [y[1], (v(x) - z) * y[0]];
        for k in 0..steps {
            let x = k as f64 * hstep;
            let k1 = f(x, y);
            let k2 = f(x + hstep / 2.0, [y[0] + k1[0] * (hstep / 2.0), y[1] + k1[1] * (hstep / 2.0)]);
            let k3 = f(x + hstep / 2.0, [y[0] + k2[0] * (hstep / 2.0), y[1] + k2[1] * (hstep / 2.0)]);
            let k4 = f(x + hstep, [y[0] + k3[0] * hstep, y[1] + k3[1] * hstep]);
            for i in 0..2 {
                y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (hstep / 6.0);
            }
        }
        y
    };
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    let a = solve(one, zero);
    let b = solve(zero, one);
    // state vector (u, y): T₀' = [[0, V], [1, 0]] T₀ acts on (y', y)
    let mz = Mat2C::new(b[1], a[1], b[0], a[0]);
    let error = |dx: f64| {
        let nodes = (2.0 / dx).round() as usize + 1;
        let pot = Potential::from_fn(0.0, dx, nodes, v).unwrap();
        let (h, path) = schrodinger_to_canonical(&pot).unwrap();
        let t1 = canonical_transfer(&h, 2.0, z).unwrap();
        (t1 - path[nodes - 1].to_complex().inverse().unwrap() * mz).max_norm()
    };
    let (coarse, fine) = (error(2e-3), error(1e-3));
    assert!(fine < 1e-5, "{fine}");
    assert!(coarse / fine > 3.5, "{coarse} {fine}");
}

#[test]
fn band_edges_of_free_matrix_scale_with_coefficients() {
    for (a, b) in [(0.5, 0.0), (1.0, 0.3), (0.25, -1.0)] {
        let bands = periodic_band_set(&JacobiMatrix::free(a, b).unwrap(), 3000).unwrap();
        assert_eq!(bands.intervals.len(), 1);
        let (lo, hi) = bands.intervals[0];
        assert!((lo - (b - 2.0 * a)).abs() < 1e-10 && (hi - (b + 2.0 * a)).abs() < 1e-10);
    }
}

#[test]
fn weyl_disk_errors() {
    let h = Hamiltonian::from_fn(0.0, 0.1, 11, |_| [1.0, 0.0, 1.0]).unwrap();
    assert!(weyl_disk(&h, 0.5, c(0.0, -1.0)).is_err());
    assert!(weyl_disk(&h, 0.55, c(0.0, 1.0)).is_err());
    let shifted = h.relabel(-0.5);
    assert!(canonical_transfer(&shifted, 0.0, c(0.0, 1.0)).is_err());
}

fn periodic() -> impl Strategy<Value = JacobiMatrix> {
    (1usize..=5).prop_flat_map(|n| {
        (prop::collection::vec(0.3f64..2.0, n), prop::collection::vec(-1.0f64..1.0, n))
            .prop_map(|(a, b)| JacobiMatrix::periodic(a, b).unwrap())
    })
}

fn upper() -> impl Strategy<Value = C64> {
    (-2.0f64..2.0, 0.2f64..2.0).prop_map(|(x, y)| c(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shift_cocycles_are_unimodular_and_compose(j in periodic(), z in upper(), n in -4i64..=4, k in -4i64..=4) {
        let t = shift_cocycle(&j, n, z);
        prop_assert!(t.unimodularity_defect() < 1e-9);
        let law = shift_cocycle(&j, n + k, z) - shift_cocycle(&shift(&j, k), n, z) * shift_cocycle(&j, k, z);
        prop_assert!(law.max_norm() < 1e-8 * (1.0 + t.max_norm()).powi(2));
    }

    #[test]
    fn shift_moves_m_plus(j in periodic(), z in upper()) {
        let before = m_pair(&j, z).unwrap();
        let after = m_pair(&shift(&j, 1), z).unwrap();
        let moved = mobius_apply(&shift_step_matrix(&j, z), before.m_plus).unwrap();
        prop_assert!(chordal_distance(moved, after.m_plus) < 1e-9);
        let (mp, mm) = before.finite().unwrap();
        prop_assert!(mp.im > 0.0 && mm.im > 0.0);
    }

    #[test]
    fn free_m_is_herglotz(a in 0.1f64..3.0, b in -2.0f64..2.0, z in upper()) {
        let m = m_free(a, b, z).unwrap();
        prop_assert!(m.im() > 0.0);
        let j = JacobiMatrix::free(a, b).unwrap();
        prop_assert!(chordal_distance(m, m_pair(&j, z).unwrap().m_plus) < 1e-10);
    }

    #[test]
    fn congruence_keeps_quarter_det(p in -1.0f64..1.0, q in -1.0f64..1.0, r in -1.0f64..1.0) {
        let a = Mat2R::new(1.0 + p, q, r, (1.0 + q * r) / (1.0 + p));
        let pot = Potential::from_fn(0.0, 1e-3, 301, |x| (3.0 * x).cos()).unwrap();
        let (h, _) = schrodinger_to_canonical(&pot).unwrap();
        let v1 = v_from_h(&h).unwrap().potential;
        let v2 = v_from_h(&h.congruence(&a)).unwrap().potential;
        for (x, y) in v1.values().iter().zip(v2.values()) {
            prop_assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_twist_maps_invert(a1 in 0.3f64..2.0, b1 in -1.0f64..1.0, n in 0i64..3) {
        let h = Hamiltonian::from_fn(0.0, 0.05, 201, |x| [1.0 + x, 0.1 * x, 1.0 + x * x]).unwrap();
        let twist = Twist::Jacobi { a1, b1 };
        let there = twisted_shift_map(&h, &twist, n).unwrap();
        let back = twisted_shift_map(&there, &twist, -n).unwrap();
        prop_assert!(back.sup_distance(&h).unwrap() < 1e-9 * (1.0 + a1.recip()).powi(4 * n as i32));
        prop_assert_eq!(back.x0(), h.x0());
    }
}

#[test]
fn m_plus_canonical_lands_in_every_disk() {
    let h = schrodinger_to_canonical(&Potential::from_fn(0.0, 1e-3, 30001, |x| (-x).exp()).unwrap()).unwrap().0;
    let z = c(0.2, 1.0);
    let m = m_plus_canonical(&h, z, 1e-6).unwrap();
    let w = match m {
        SpherePoint::Finite(w) => w,
        SpherePoint::Infinity => panic!("m at infinity"),
    };
    for x in [0.5, 1.0, 3.0, 10.0] {
        assert!(weyl_disk(&h, x, z).unwrap().contains(w, 1e-6));
    }
}
