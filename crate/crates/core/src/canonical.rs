//! Canonical systems `Ju' = -zHu` with grid-sampled Hamiltonians: transfer
//! matrices, Weyl disks, the Schrödinger transform and twisted shifts.
//!
//! A [`Hamiltonian`] lives on a uniform grid `x_k = x0 + k·dx`. Transfer
//! matrices always start at the node `x = 0`; shifting a Hamiltonian only
//! relabels its grid (`x0 ↦ x0 - s`), so a shifted Hamiltonian keeps all of
//! its samples.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobius::{Mat2C, Mat2R, SpherePoint, C64};

/// Relative slack for negative eigenvalues that are clamped to zero.
const PSD_CLAMP: f64 = 1e-12;

fn sym(h: [f64; 3]) -> Mat2R {
    Mat2R::new(h[0], h[1], h[1], h[2])
}

fn unsym(m: &Mat2R) -> [f64; 3] {
    [m.a, 0.5 * (m.b + m.c), m.d]
}

/// Smallest eigenvalue of `[[h11, h12], [h12, h22]]`.
fn min_eigenvalue(h: [f64; 3]) -> f64 {
    let half_tr = 0.5 * (h[0] + h[2]);
    let r = (0.5 * (h[0] - h[2])).hypot(h[1]);
    half_tr - r
}

/// Removes a small negative eigenvalue by subtracting its spectral projection.
fn clamp_psd(h: [f64; 3], node: usize) -> Result<[f64; 3]> {
    let lmin = min_eigenvalue(h);
    if lmin >= 0.0 {
        return Ok(h);
    }
    let tr = h[0] + h[2];
    if lmin < -PSD_CLAMP * tr.abs().max(1.0) {
        return Err(Error::NotPositive { node, eigenvalue: lmin });
    }
    // eigenvector for lmin: (h12, lmin - h11) or (lmin - h22, h12)
    let (v1, v2) = if (lmin - h[0]).abs() > (lmin - h[2]).abs() {
        (h[1], lmin - h[0])
    } else {
        (lmin - h[2], h[1])
    };
    let n2 = v1 * v1 + v2 * v2;
    if n2 == 0.0 {
        return Ok([h[0] - lmin, h[1], h[2] - lmin]);
    }
    let s = lmin / n2;
    Ok([h[0] - s * v1 * v1, h[1] - s * v1 * v2, h[2] - s * v2 * v2])
}

fn node_of(x0: f64, dx: f64, len: usize, x: f64) -> Result<usize> {
    let k = ((x - x0) / dx).round();
    let last = x0 + (len - 1) as f64 * dx;
    if k < 0.0 || k > (len - 1) as f64 {
        return Err(Error::GridExhausted { requested: x, available: if x < x0 { x0 } else { last } });
    }
    if (x0 + k * dx - x).abs() > 1e-6 * dx {
        return Err(Error::InvalidInput(format!("x = {x} is not a grid node (dx = {dx})")));
    }
    Ok(k as usize)
}

/// Grid-sampled real symmetric `H ≥ 0`, stored as `(h11, h12, h22)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    x0: f64,
    dx: f64,
    values: Vec<[f64; 3]>,
}

impl Hamiltonian {
    /// Validates finiteness and positive semidefiniteness (tiny negative
    /// eigenvalues are clamped).
    pub fn new(x0: f64, dx: f64, values: Vec<[f64; 3]>) -> Result<Self> {
        if !(dx > 0.0) || !x0.is_finite() {
            return Err(Error::InvalidInput(format!("invalid grid (x0 = {x0}, dx = {dx})")));
        }
        if values.len() < 4 {
            return Err(Error::InvalidInput("a Hamiltonian needs at least 4 nodes".into()));
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(k, h)| {
                if h.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("Hamiltonian values"));
                }
                clamp_psd(h, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Hamiltonian { x0, dx, values })
    }

    /// Samples `f` at `nodes` grid points starting at `x0`.
    pub fn from_fn(x0: f64, dx: f64, nodes: usize, f: impl Fn(f64) -> [f64; 3]) -> Result<Self> {
        Hamiltonian::new(x0, dx, (0..nodes).map(|k| f(x0 + k as f64 * dx)).collect())
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x_end(&self) -> f64 {
        self.x_at(self.len() - 1)
    }

    pub fn x_at(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    /// Index of the node at `x`.
    pub fn node(&self, x: f64) -> Result<usize> {
        node_of(self.x0, self.dx, self.len(), x)
    }

    pub fn value(&self, k: usize) -> Mat2R {
        sym(self.values[k])
    }

    /// `H(x)` at a grid node.
    pub fn at(&self, x: f64) -> Result<Mat2R> {
        Ok(self.value(self.node(x)?))
    }

    /// `(s·H)(x) = H(x + s)`: same samples on the grid moved by `-s`.
    pub fn relabel(&self, s: f64) -> Hamiltonian {
        Hamiltonian { x0: self.x0 - s, ..self.clone() }
    }

    /// `mᵗ H(x) m` at every node.
    pub fn congruence(&self, m: &Mat2R) -> Hamiltonian {
        let values = self
            .values
            .iter()
            .map(|&h| {
                let out = unsym(&(m.transpose() * sym(h) * *m));
                // congruence preserves H ≥ 0; only rounding can break it
                clamp_psd(out, 0).unwrap_or([out[0].max(0.0), out[1], out[2].max(0.0)])
            })
            .collect();
        Hamiltonian { values, ..self.clone() }
    }

    /// Largest entry difference over the nodes both grids share.
    pub fn sup_distance(&self, other: &Hamiltonian) -> Result<f64> {
        if (self.dx - other.dx).abs() > 1e-12 * self.dx {
            return Err(Error::InvalidInput("grids have different spacing".into()));
        }
        let lo = self.x0.max(other.x0);
        let hi = self.x_end().min(other.x_end());
        if hi < lo {
            return Err(Error::InvalidInput("grids do not overlap".into()));
        }
        let k0 = self.node(lo)?;
        let j0 = other.node(lo)?;
        let count = ((hi - lo) / self.dx).round() as usize + 1;
        Ok((0..count)
            .flat_map(|i| {
                let (u, v) = (self.values[k0 + i], other.values[j0 + i]);
                (0..3).map(move |e| (u[e] - v[e]).abs())
            })
            .fold(0.0, f64::max))
    }

    /// Writes `x,h11,h12,h22` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(["x", "h11", "h12", "h22"]).map_err(|e| Error::Io(e.to_string()))?;
        for (k, h) in self.values.iter().enumerate() {
            w.write_record([self.x_at(k), h[0], h[1], h[2]].iter().map(|v| format!("{v:.16e}")))
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`Hamiltonian::write_csv`]; the grid must be uniform.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_rows(path, 4)?;
        let (x0, dx) = uniform_grid(&rows)?;
        Hamiltonian::new(x0, dx, rows.iter().map(|r| [r[1], r[2], r[3]]).collect())
    }
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            if rec.len() != width {
                return Err(Error::InvalidInput(format!("expected {width} columns, found {}", rec.len())));
            }
            rec.iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::InvalidInput(e.to_string())))
                .collect()
        })
        .collect()
}

fn uniform_grid(rows: &[Vec<f64>]) -> Result<(f64, f64)> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput("need at least two grid rows".into()));
    }
    let x0 = rows[0][0];
    let dx = (rows[rows.len() - 1][0] - x0) / (rows.len() - 1) as f64;
    for (k, r) in rows.iter().enumerate() {
        if (r[0] - (x0 + k as f64 * dx)).abs() > 1e-9 * dx.abs().max(1.0) {
            return Err(Error::InvalidInput(format!("grid is not uniform at row {k}")));
        }
    }
    Ok((x0, dx))
}

/// Grid-sampled potential `V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
}

impl Potential {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0) || values.len() < 4 {
            return Err(Error::InvalidInput("a potential needs dx > 0 and at least 4 nodes".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential values"));
        }
        Ok(Potential { x0, dx, values })
    }

    pub fn from_fn(x0: f64, dx: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Potential::new(x0, dx, (0..nodes).map(|k| f(x0 + k as f64 * dx)).collect())
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x_at(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    /// `V` halfway between nodes `k` and `k + 1`, by four-point Lagrange
    /// interpolation (one-sided stencils at the ends).
    pub fn midpoint(&self, k: usize) -> f64 {
        midpoint_cubic(&self.values, k)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(["x", "V"]).map_err(|e| Error::Io(e.to_string()))?;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([format!("{:.16e}", self.x_at(k)), format!("{v:.16e}")])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_rows(path, 2)?;
        let (x0, dx) = uniform_grid(&rows)?;
        Potential::new(x0, dx, rows.iter().map(|r| r[1]).collect())
    }
}

fn midpoint_cubic(v: &[f64], k: usize) -> f64 {
    let n = v.len();
    if k == 0 {
        (5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0
    } else if k + 2 >= n {
        let m = n - 1;
        (v[m - 3] - 5.0 * v[m - 2] + 15.0 * v[m - 1] + 5.0 * v[m]) / 16.0
    } else {
        (-v[k - 1] + 9.0 * v[k] + 9.0 * v[k + 1] - v[k + 2]) / 16.0
    }
}

fn schrodinger_generator(v: f64) -> Mat2R {
    Mat2R::new(0.0, v, 1.0, 0.0)
}

/// RK4 for `T' = S(σ) T` over grid cells, `S` given at nodes and midpoints.
fn integrate_cells(cells: usize, h: f64, s_node: impl Fn(usize) -> Mat2R, s_mid: impl Fn(usize) -> Mat2R) -> Vec<Mat2R> {
    let mut out = Vec::with_capacity(cells + 1);
    let mut t = Mat2R::identity();
    out.push(t);
    for k in 0..cells {
        let (s0, sm, s1) = (s_node(k), s_mid(k), s_node(k + 1));
        let k1 = s0 * t;
        let k2 = sm * (t + k1.scale(0.5 * h));
        let k3 = sm * (t + k2.scale(0.5 * h));
        let k4 = s1 * (t + k3.scale(h));
        t = t + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0);
        out.push(t);
    }
    out
}

/// Variation of constants about `z = 0`: integrates
/// `T₀' = [[0, V], [1, 0]] T₀`, `T₀(x0) = I`, and returns
/// `H = [[p², pq], [pq, q²]]` with `(p, q)` the bottom row of `T₀`, together
/// with the `T₀` trajectory.
pub fn schrodinger_to_canonical(v: &Potential) -> Result<(Hamiltonian, Vec<Mat2R>)> {
    let cells = v.values.len() - 1;
    let path = integrate_cells(
        cells,
        v.dx,
        |k| schrodinger_generator(v.values[k]),
        |k| schrodinger_generator(v.midpoint(k)),
    );
    let values = path.iter().map(|t| [t.c * t.c, t.c * t.d, t.d * t.d]).collect();
    Ok((Hamiltonian::new(v.x0, v.dx, values)?, path))
}

/// `V = ¼ det H''` with second differences per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEstimate {
    pub potential: Potential,
    /// Nodes where a one-sided stencil was used.
    pub one_sided: Vec<usize>,
}

/// `¼ det H''` at every node: central second differences inside,
/// `(2f₀ - 5f₁ + 4f₂ - f₃)/Δx²` at the two ends.
pub fn v_from_h(h: &Hamiltonian) -> Result<PotentialEstimate> {
    let n = h.len();
    let dx2 = h.dx * h.dx;
    let second = |k: usize, e: usize| -> f64 {
        let f = |i: usize| h.values[i][e];
        if k == 0 {
            (2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) / dx2
        } else if k == n - 1 {
            (2.0 * f(k) - 5.0 * f(k - 1) + 4.0 * f(k - 2) - f(k - 3)) / dx2
        } else {
            (f(k + 1) - 2.0 * f(k) + f(k - 1)) / dx2
        }
    };
    let values = (0..n)
        .map(|k| 0.25 * (second(k, 0) * second(k, 2) - second(k, 1) * second(k, 1)))
        .collect();
    Ok(PotentialEstimate { potential: Potential::new(h.x0, h.dx, values)?, one_sided: vec![0, n - 1] })
}

/// Fourth-order second difference of `f` on `n` nodes with spacing `h`.
fn second_difference_4(f: impl Fn(usize) -> f64, n: usize, k: usize, h: f64) -> f64 {
    const EDGE0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
    const EDGE1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];
    let d = 12.0 * h * h;
    match k {
        0 => (0..6).map(|i| EDGE0[i] * f(i)).sum::<f64>() / d,
        1 => (0..6).map(|i| EDGE1[i] * f(i)).sum::<f64>() / d,
        _ if k == n - 1 => (0..6).map(|i| EDGE0[i] * f(n - 1 - i)).sum::<f64>() / d,
        _ if k == n - 2 => (0..6).map(|i| EDGE1[i] * f(n - 1 - i)).sum::<f64>() / d,
        _ => (-f(k - 2) + 16.0 * f(k - 1) - 30.0 * f(k) + 16.0 * f(k + 1) - f(k + 2)) / d,
    }
}

/// `¼ det H''` at every node to fourth order; drives the Schrödinger twist.
fn quarter_det_h2(h: &Hamiltonian) -> Vec<f64> {
    let n = h.len();
    if n < 6 {
        return v_from_h(h).map(|e| e.potential.values).unwrap_or_default();
    }
    (0..n)
        .map(|k| {
            let d = |e: usize| second_difference_4(|i| h.values[i][e], n, k, h.dx);
            0.25 * (d(0) * d(2) - d(1) * d(1))
        })
        .collect()
}

/// Cell generator `z J H̄ Δx` with `H̄` the average of the endpoint values.
fn cell_exponential(h: &Hamiltonian, k: usize, z: C64, sign: f64) -> Mat2C {
    let (u, v) = (h.values[k], h.values[k + 1]);
    let avg = [0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1]), 0.5 * (u[2] + v[2])];
    // J H = [[-h12, -h22], [h11, h12]]
    let jh = Mat2R::new(-avg[1], -avg[2], avg[0], avg[1]).to_complex();
    jh.scale(z * (sign * h.dx)).exp_traceless()
}

/// `T₁(x, z)` with `T₁(0) = I` and `dT₁/dx = zJHT₁`, as an ordered product
/// of exact cell exponentials.
pub fn canonical_transfer(h: &Hamiltonian, x: f64, z: C64) -> Result<Mat2C> {
    let k0 = h.node(0.0)?;
    let k = h.node(x)?;
    let mut t = Mat2C::identity();
    if k >= k0 {
        for i in k0..k {
            t = cell_exponential(h, i, z, 1.0) * t;
        }
    } else {
        for i in (k..k0).rev() {
            t = cell_exponential(h, i, z, -1.0) * t;
        }
    }
    Ok(t)
}

/// Which side of the boundary circle the region is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiskKind {
    Disk,
    Complement,
    /// `{w : Im(β w) + offset ≥ 0}`.
    HalfPlane { beta_re: f64, beta_im: f64, offset: f64 },
}

/// `T₁(x, z)⁻¹` applied to the closed upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylDisk {
    pub center_re: f64,
    pub center_im: f64,
    pub radius: f64,
    pub kind: DiskKind,
}

impl WeylDisk {
    pub fn center(&self) -> C64 {
        C64::new(self.center_re, self.center_im)
    }

    /// Region `{w : T w ∈ closed ℂ⁺}` for a unimodular `T`.
    ///
    /// With `A = Im(a c̄)` the condition reads
    /// `A|w - w_c|² ≥ A r²`, `w_c = -i(ā d - b c̄)/(2A)`, `r = 1/(2|A|)`.
    pub fn from_transfer(t: &Mat2C) -> WeylDisk {
        let (a, b, c, d) = (t.a, t.b, t.c, t.d);
        let big_a = (a * c.conj()).im;
        let scale = a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr();
        if big_a.abs() <= 1e-15 * scale {
            let beta = a * d.conj() - b.conj() * c;
            return WeylDisk {
                center_re: f64::NAN,
                center_im: f64::NAN,
                radius: f64::INFINITY,
                kind: DiskKind::HalfPlane { beta_re: beta.re, beta_im: beta.im, offset: (b * d.conj()).im },
            };
        }
        let center = -C64::i() * (a.conj() * d - b * c.conj()) / (2.0 * big_a);
        WeylDisk {
            center_re: center.re,
            center_im: center.im,
            radius: 1.0 / (2.0 * big_a.abs()),
            kind: if big_a < 0.0 { DiskKind::Disk } else { DiskKind::Complement },
        }
    }

    /// Membership with relative slack `tol`.
    pub fn contains(&self, w: C64, tol: f64) -> bool {
        match self.kind {
            DiskKind::Disk => (w - self.center()).norm() <= self.radius * (1.0 + tol),
            DiskKind::Complement => (w - self.center()).norm() >= self.radius * (1.0 - tol),
            DiskKind::HalfPlane { beta_re, beta_im, offset } => {
                (C64::new(beta_re, beta_im) * w).im + offset >= -tol
            }
        }
    }

    /// `self ⊆ outer` for two disks (half-planes contain every disk in ℂ⁺).
    pub fn nested_in(&self, outer: &WeylDisk, tol: f64) -> bool {
        match (self.kind, outer.kind) {
            (DiskKind::Disk, DiskKind::Disk) => {
                let slack = tol * (outer.radius + outer.center().norm());
                (self.center() - outer.center()).norm() + self.radius <= outer.radius + slack
            }
            (DiskKind::Disk, DiskKind::HalfPlane { .. }) => self.center_im - self.radius >= -tol,
            (_, DiskKind::HalfPlane { .. }) => true,
            _ => false,
        }
    }
}

/// Weyl disk at the node `x > 0`.
pub fn weyl_disk(h: &Hamiltonian, x: f64, z: C64) -> Result<WeylDisk> {
    if z.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane { re: z.re, im: z.im });
    }
    Ok(WeylDisk::from_transfer(&canonical_transfer(h, x, z)?))
}

/// Weyl disks at every `stride`-th node from `x = 0` to the end of the grid.
pub fn weyl_disk_trace(h: &Hamiltonian, z: C64, stride: usize) -> Result<Vec<(f64, WeylDisk)>> {
    if z.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane { re: z.re, im: z.im });
    }
    let stride = stride.max(1);
    let k0 = h.node(0.0)?;
    let mut t = Mat2C::identity();
    let mut out = vec![(0.0, WeylDisk::from_transfer(&t))];
    for k in k0..h.len() - 1 {
        t = cell_exponential(h, k, z, 1.0) * t;
        if (k + 1 - k0) % stride == 0 {
            out.push((h.x_at(k + 1), WeylDisk::from_transfer(&t)));
        }
    }
    Ok(out)
}

/// Center of the first Weyl disk with radius below `radius_tol`.
pub fn m_plus_canonical(h: &Hamiltonian, z: C64, radius_tol: f64) -> Result<SpherePoint> {
    if z.im <= 0.0 {
        return Err(Error::NotInUpperHalfPlane { re: z.re, im: z.im });
    }
    let k0 = h.node(0.0)?;
    let mut t = Mat2C::identity();
    let mut last = f64::INFINITY;
    for k in k0..h.len() - 1 {
        t = cell_exponential(h, k, z, 1.0) * t;
        let disk = WeylDisk::from_transfer(&t);
        if disk.kind == DiskKind::Disk {
            last = disk.radius;
            if disk.radius < radius_tol {
                return Ok(SpherePoint::Finite(disk.center()));
            }
        }
    }
    Err(Error::NotConverged { last_radius: last })
}

/// Right-hand side of the twist equation `Ṫ = F(σ) T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FSpec {
    /// `F ≡ 0`: the plain shift.
    Zero,
    /// `F(σ) = [[0, V(σ)], [1, 0]]` with `V = ¼ det H₀''`.
    Schrodinger,
    /// A constant trace-free matrix.
    Constant(Mat2R),
}

impl FSpec {
    fn check(&self) -> Result<()> {
        if let FSpec::Constant(m) = self {
            if m.trace().abs() > 1e-12 * m.max_norm().max(1.0) {
                return Err(Error::InvalidInput(format!("twist generator has trace {}", m.trace())));
            }
        }
        Ok(())
    }
}

/// `S(H)` at `x = 0` for the chosen family.
pub fn s_matrix(h: &Hamiltonian, f: &FSpec) -> Result<Mat2R> {
    f.check()?;
    Ok(match f {
        FSpec::Zero => Mat2R::zero(),
        FSpec::Constant(m) => *m,
        FSpec::Schrodinger => {
            schrodinger_generator(quarter_det_h2(h)[h.node(0.0)?])
        }
    })
}

fn shift_nodes(h: &Hamiltonian, s: f64) -> Result<i64> {
    let m = (s / h.dx).round();
    if (m * h.dx - s).abs() > 1e-6 * h.dx {
        return Err(Error::InvalidInput(format!("shift {s} is not a multiple of dx = {}", h.dx)));
    }
    Ok(m as i64)
}

/// `T(s)` solving `Ṫ(σ) = F(σ)T(σ)`, `T(0) = I`, by RK4 with step `±dx`.
pub fn twist_matrix(h0: &Hamiltonian, s: f64, f: &FSpec) -> Result<Mat2R> {
    f.check()?;
    let m = shift_nodes(h0, s)?;
    if m == 0 {
        return Ok(Mat2R::identity());
    }
    match f {
        FSpec::Zero => Ok(Mat2R::identity()),
        FSpec::Constant(b) => {
            let steps = m.unsigned_abs() as usize;
            let hstep = s / steps as f64;
            Ok(*integrate_cells(steps, hstep, |_| *b, |_| *b).last().unwrap_or(&Mat2R::identity()))
        }
        FSpec::Schrodinger => {
            let k0 = h0.node(0.0)? as i64;
            let k_end = k0 + m;
            if k_end < 0 || k_end >= h0.len() as i64 {
                return Err(Error::GridExhausted { requested: s, available: if m > 0 { h0.x_end() } else { h0.x0 } });
            }
            let v = quarter_det_h2(h0);
            let dir = m.signum();
            let node = |i: usize| (k0 + dir * i as i64) as usize;
            let steps = m.unsigned_abs() as usize;
            let mid = |i: usize| {
                let (p, q) = (node(i), node(i + 1));
                midpoint_cubic(&v, p.min(q))
            };
            let path = integrate_cells(
                steps,
                dir as f64 * h0.dx,
                |i| schrodinger_generator(v[node(i)]),
                |i| schrodinger_generator(mid(i)),
            );
            Ok(path[steps])
        }
    }
}

/// `(s·H₀)(x) = T(s)^{-t} H₀(x+s) T(s)^{-1}` and `T(s)`.
pub fn twisted_shift_flow(h0: &Hamiltonian, s: f64, f: &FSpec) -> Result<(Hamiltonian, Mat2R)> {
    let t = twist_matrix(h0, s, f)?;
    Ok((h0.relabel(s).congruence(&t.inverse()?), t))
}

/// `max |det H(x, s) - det H₀(x + s)|` over the given nodes.
pub fn det_characteristic_check(h0: &Hamiltonian, s: f64, f: &FSpec, xs: &[f64]) -> Result<f64> {
    let (hs, _) = twisted_shift_flow(h0, s, f)?;
    let mut worst = 0.0f64;
    for &x in xs {
        let lhs = hs.at(x)?.det();
        let rhs = h0.at(x + s)?.det();
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Residual of `∂H/∂s - ∂H/∂x + Sᵗ H + H S` at `s = 0`: one-sided
/// second-order difference in `s`, central in `x`, step `fd_step`.
pub fn pdets_residual(h0: &Hamiltonian, f: &FSpec, fd_step: f64) -> Result<f64> {
    let delta = shift_nodes(h0, fd_step)?;
    if delta <= 0 {
        return Err(Error::InvalidInput("fd_step must be a positive multiple of dx".into()));
    }
    let (h1, _) = twisted_shift_flow(h0, fd_step, f)?;
    let (h2, _) = twisted_shift_flow(h0, 2.0 * fd_step, f)?;
    let s = s_matrix(h0, f)?;
    let lo = h0.x0 + fd_step;
    let hi = h0.x_end() - 3.0 * fd_step;
    let samples = 50usize;
    let mut worst = 0.0f64;
    for i in 0..=samples {
        let raw = lo + (hi - lo) * i as f64 / samples as f64;
        let x = h0.x_at(h0.node(raw.clamp(h0.x0, h0.x_end())).unwrap_or(0));
        if x < lo || x > hi {
            continue;
        }
        let hx = h0.at(x)?;
        let ds = (h1.at(x)?.scale(4.0) - hx.scale(3.0) - h2.at(x)?).scale(0.5 / fd_step);
        let dxh = (h0.at(x + fd_step)? - h0.at(x - fd_step)?).scale(0.5 / fd_step);
        let r = ds - dxh + s.transpose() * hx + hx * s;
        worst = worst.max(r.max_norm());
    }
    Ok(worst)
}

/// `T(s; H) = T₀(s; H)·T₁(s; H)`, the cocycle of the twisted shift.
pub fn combined_cocycle(h: &Hamiltonian, s: f64, z: C64, f: &FSpec) -> Result<Mat2C> {
    let t0 = twist_matrix(h, s, f)?;
    Ok(t0.to_complex() * canonical_transfer(h, s, z)?)
}

/// `C(H) = S(H) + zJH(0)`.
pub fn generator_c(h: &Hamiltonian, z: C64, f: &FSpec) -> Result<Mat2C> {
    let s = s_matrix(h, f)?.to_complex();
    let h0 = h.at(0.0)?;
    let jh = (Mat2R::symplectic() * h0).to_complex();
    Ok(s + jh.scale(z))
}

/// `(t·H)(x) = exp(-tBᵗ) H(x) exp(-tB)` and the cocycle `exp(tB)`.
pub fn conjugation_flow(h: &Hamiltonian, b: &Mat2R, t: f64) -> Result<(Hamiltonian, Mat2R)> {
    FSpec::Constant(*b).check()?;
    let back = b.scale(-t).exp_traceless();
    Ok((h.congruence(&back), b.scale(t).exp_traceless()))
}

/// The twisting matrix of a unit step of a twisted shift map.
#[derive(Clone)]
pub enum Twist {
    Constant(Mat2R),
    /// `[[-b₁/a₁, 1/a₁], [-a₁, 0]]`.
    Jacobi { a1: f64, b1: f64 },
    /// Depends on the current Hamiltonian; only forward steps.
    General(Arc<dyn Fn(&Hamiltonian) -> Mat2R + Send + Sync>),
}

impl Twist {
    fn constant(&self) -> Option<Mat2R> {
        match self {
            Twist::Constant(m) => Some(*m),
            Twist::Jacobi { a1, b1 } => Some(Mat2R::new(-b1 / a1, 1.0 / a1, -a1, 0.0)),
            Twist::General(_) => None,
        }
    }
}

/// `n` unit steps of `(1·H)(x) = A(H)^{-t} H(x+1) A(H)^{-1}`.
pub fn twisted_shift_map(h: &Hamiltonian, twist: &Twist, n: i64) -> Result<Hamiltonian> {
    shift_nodes(h, 1.0)?;
    let mut out = h.clone();
    if n >= 0 {
        for _ in 0..n {
            let a = match twist {
                Twist::General(f) => f(&out),
                other => other.constant().unwrap_or(Mat2R::identity()),
            };
            if (a.det() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("twist matrix has determinant {}", a.det())));
            }
            out = out.relabel(1.0).congruence(&a.inverse()?);
        }
    } else {
        let a = twist
            .constant()
            .ok_or_else(|| Error::InvalidInput("backward steps need a constant twist".into()))?;
        for _ in 0..-n {
            out = out.relabel(-1.0).congruence(&a);
        }
    }
    Ok(out)
}
