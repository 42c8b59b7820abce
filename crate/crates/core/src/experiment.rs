//! Theorem batteries over seeded instances, with a fixed JSON/CSV report
//! format and plot-ready data series.
//!
//! Report schema: a JSON array of rows
//! `{suite, instance, metric, value, tolerance, pass}` (plus `error` when a
//! computation failed, in which case `value` is `null`). Floating values are
//! written with 17 significant digits so that equal runs are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::canonical::{
    combined_cocycle, conjugation_flow, det_characteristic_check, m_plus_canonical, pdets_residual,
    schrodinger_to_canonical, twisted_shift_flow, v_from_h, weyl_disk_trace, DiskKind, FSpec, Hamiltonian,
    Potential,
};
use crate::cocycle::{
    evolg_residual, integrate_flow_and_cocycle, lambda_cocycle, omega_symmetry_check,
    series_truncation_identity, shift_cocycle, zero_curvature_residual,
};
use crate::error::{Error, Result};
use crate::herglotz::{floquet_band_set, m_pair, periodic_band_set, reflection_coefficient, BandSet};
use crate::jacobi::{operator_norm_bound, shift, JacobiMatrix, RealPolynomial};
use crate::mobius::{chordal_distance, mobius_apply, Mat2C, Mat2R, SpherePoint, C64};
use crate::toda::{commutativity_check, default_steps, isospectrality_check, lax_flow};

/// Suite names in execution order.
pub const SUITES: [&str; 10] = [
    "toda-isospectral",
    "cocycle-joint",
    "m-update",
    "reflection-invariance",
    "zero-curvature",
    "omega-symmetry",
    "band-set",
    "canonical-roundtrip",
    "twisted-shift",
    "weyl-disks",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    /// Number of random periodic matrices.
    pub count: usize,
    /// Periods drawn uniformly from this list.
    pub periods: Vec<usize>,
    pub a_range: [f64; 2],
    pub b_range: [f64; 2],
    /// Instances used by the cocycle, ω and zero-curvature suites.
    pub battery_count: usize,
    /// Instances used by the reflection suite.
    pub reflection_count: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            count: 20,
            periods: vec![2, 3, 4, 6],
            a_range: [0.3, 2.0],
            b_range: [-1.0, 1.0],
            battery_count: 10,
            reflection_count: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Flow time and RK4 steps of the isospectrality suite.
    pub isospectral_time: f64,
    pub isospectral_steps: usize,
    /// Flow time of group elements in the cocycle and m-update suites.
    pub cocycle_time: f64,
    pub commutativity_time: f64,
    pub reflection_time: f64,
    /// Imaginary part of the spectral parameter in the reflection suite.
    pub reflection_y: f64,
    pub reflection_points: usize,
    pub omega_fd_step: f64,
    pub lambda_time: f64,
    pub series_max_degree: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            isospectral_time: 1.0,
            isospectral_steps: 2000,
            cocycle_time: 0.5,
            commutativity_time: 0.5,
            reflection_time: 0.5,
            reflection_y: 1e-3,
            reflection_points: 50,
            omega_fd_step: 1e-4,
            lambda_time: 0.5,
            series_max_degree: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    pub grid: usize,
    /// Coefficients of the two-periodic comparison instance.
    pub two_periodic_a: [f64; 2],
    pub two_periodic_b: [f64; 2],
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig { grid: 4000, two_periodic_a: [1.0, 0.5], two_periodic_b: [0.3, -0.4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanonicalConfig {
    pub dx: f64,
    /// Length of the round-trip interval `[0, L]`.
    pub roundtrip_length: f64,
    /// Length of the Weyl-disk interval for `V ≡ 0`.
    pub disk_length: f64,
    pub disk_radius_tol: f64,
    /// Shift of the twisted-shift comparison.
    pub shift: f64,
    /// Second shift for the cocycle law.
    pub second_shift: f64,
    pub conjugation_time: f64,
    pub pdets_step: f64,
}

impl Default for CanonicalConfig {
    fn default() -> Self {
        CanonicalConfig {
            dx: 1e-3,
            roundtrip_length: 1.0,
            disk_length: 40.0,
            disk_radius_tol: 1e-7,
            shift: 0.5,
            second_shift: 0.3,
            conjugation_time: 0.8,
            pdets_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub isospectral: f64,
    pub commutativity: f64,
    pub cocycle: f64,
    pub m_update: f64,
    pub reflection: f64,
    pub zero_curvature: f64,
    pub omega_symmetry: f64,
    pub lambda: f64,
    pub series: f64,
    pub evolg: f64,
    pub band_free: f64,
    pub band_floquet: f64,
    pub roundtrip: f64,
    pub free_potential: f64,
    pub canonical_m: f64,
    pub twisted_shift: f64,
    pub det_characteristic: f64,
    pub combined_cocycle: f64,
    pub pdets: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            isospectral: 1e-8,
            commutativity: 1e-6,
            cocycle: 1e-6,
            m_update: 1e-6,
            reflection: 1e-6,
            zero_curvature: 1e-10,
            omega_symmetry: 1e-5,
            lambda: 1e-6,
            series: 1e-12,
            evolg: 1e-5,
            band_free: 1e-10,
            band_floquet: 1e-6,
            roundtrip: 1e-4,
            free_potential: 1e-8,
            canonical_m: 1e-4,
            twisted_shift: 1e-6,
            det_characteristic: 1e-6,
            combined_cocycle: 1e-4,
            pdets: 1e-4,
        }
    }
}

impl Tolerances {
    fn all(&self) -> [(&'static str, f64); 19] {
        [
            ("isospectral", self.isospectral),
            ("commutativity", self.commutativity),
            ("cocycle", self.cocycle),
            ("m_update", self.m_update),
            ("reflection", self.reflection),
            ("zero_curvature", self.zero_curvature),
            ("omega_symmetry", self.omega_symmetry),
            ("lambda", self.lambda),
            ("series", self.series),
            ("evolg", self.evolg),
            ("band_free", self.band_free),
            ("band_floquet", self.band_floquet),
            ("roundtrip", self.roundtrip),
            ("free_potential", self.free_potential),
            ("canonical_m", self.canonical_m),
            ("twisted_shift", self.twisted_shift),
            ("det_characteristic", self.det_characteristic),
            ("combined_cocycle", self.combined_cocycle),
            ("pdets", self.pdets),
        ]
    }
}

/// Everything a battery run needs; read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Suites to run, in any order; they execute in [`SUITES`] order.
    pub suites: Vec<String>,
    /// Spectral parameters `[re, im]` of the cocycle and m-update suites.
    pub z_grid: Vec<[f64; 2]>,
    /// Spectral parameters of the zero-curvature suite.
    pub zero_curvature_z: Vec<[f64; 2]>,
    /// Emit plot data next to the report.
    pub plots: bool,
    pub instances: InstanceConfig,
    pub flows: FlowConfig,
    pub bands: BandConfig,
    pub canonical: CanonicalConfig,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            output_dir: PathBuf::from("todalab-out"),
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            z_grid: vec![[0.0, 1.0], [1.0, 1.0]],
            zero_curvature_z: vec![[0.0, 1.0], [1.0, 1.0], [-0.7, 0.2]],
            plots: true,
            instances: InstanceConfig::default(),
            flows: FlowConfig::default(),
            bands: BandConfig::default(),
            canonical: CanonicalConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for name in &self.suites {
            if !SUITES.contains(&name.as_str()) {
                return bad(format!("unknown suite '{name}'"));
            }
        }
        for (name, tol) in self.tolerances.all() {
            if !(tol > 0.0) || !tol.is_finite() {
                return bad(format!("tolerance '{name}' must be positive, got {tol}"));
            }
        }
        if self.z_grid.is_empty() || self.zero_curvature_z.is_empty() {
            return bad("z grids must be non-empty".into());
        }
        if self.z_grid.iter().any(|z| !(z[1] > 0.0)) {
            return bad("z grid points need positive imaginary part".into());
        }
        let inst = &self.instances;
        if inst.periods.is_empty() || inst.periods.contains(&0) {
            return bad("periods must be a non-empty list of positive integers".into());
        }
        if !(inst.a_range[0] > 0.0 && inst.a_range[0] <= inst.a_range[1]) || inst.b_range[0] > inst.b_range[1] {
            return bad("coefficient ranges must be ordered with a > 0".into());
        }
        if inst.battery_count > inst.count || inst.reflection_count > inst.count {
            return bad("battery and reflection counts cannot exceed the instance count".into());
        }
        let f = &self.flows;
        if f.isospectral_steps == 0 || f.reflection_points == 0 || !(f.reflection_y > 0.0) || !(f.omega_fd_step > 0.0)
        {
            return bad("flow grids and steps must be positive".into());
        }
        let c = &self.canonical;
        if !(c.dx > 0.0) || !(c.roundtrip_length > 0.0) || !(c.disk_length > 0.0) || !(c.disk_radius_tol > 0.0) {
            return bad("canonical grid parameters must be positive".into());
        }
        if self.bands.grid < 2 {
            return bad("band grid needs at least two points".into());
        }
        Ok(())
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn serialize_number<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        let raw = RawValue::from_string(fmt17(*v)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    } else {
        s.serialize_none()
    }
}

fn serialize_opt_number<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => serialize_number(x, s),
        None => s.serialize_none(),
    }
}

/// One measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub suite: String,
    pub instance: String,
    pub metric: String,
    #[serde(serialize_with = "serialize_opt_number")]
    pub value: Option<f64>,
    #[serde(serialize_with = "serialize_number")]
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportRow {
    fn new(suite: &str, instance: impl Into<String>, metric: impl Into<String>, value: Result<f64>, tolerance: f64) -> Self {
        let (value, error) = match value {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        ReportRow {
            suite: suite.to_string(),
            instance: instance.into(),
            metric: metric.into(),
            pass: value.is_some_and(|v| v <= tolerance),
            value,
            tolerance,
            error,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.rows).map_err(|e| Error::Io(e.to_string()))
    }

    /// Rows as CSV with header `suite,instance,metric,value,tolerance,pass,error`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["suite", "instance", "metric", "value", "tolerance", "pass", "error"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.suite.clone(),
                r.instance.clone(),
                r.metric.clone(),
                r.value.map(fmt17).unwrap_or_default(),
                fmt17(r.tolerance),
                r.pass.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Seeded random periodic matrices.
pub fn random_periodic_instances(cfg: &InstanceConfig, seed: u64) -> Result<Vec<JacobiMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.count)
        .map(|_| {
            let n = cfg.periods[rng.gen_range(0..cfg.periods.len())];
            let a = (0..n).map(|_| rng.gen_range(cfg.a_range[0]..=cfg.a_range[1])).collect();
            let b = (0..n).map(|_| rng.gen_range(cfg.b_range[0]..=cfg.b_range[1])).collect();
            JacobiMatrix::periodic(a, b)
        })
        .collect()
}

fn zs(grid: &[[f64; 2]]) -> Vec<C64> {
    grid.iter().map(|z| C64::new(z[0], z[1])).collect()
}

fn x2() -> RealPolynomial {
    RealPolynomial::monomial(2, 1.0)
}

/// Element of the group `ℝ[x] × ℤ` acting on Jacobi matrices.
#[derive(Debug, Clone, PartialEq)]
struct GroupElement {
    /// Time-one polynomial of the flow part.
    poly: RealPolynomial,
    shift: i64,
    label: String,
}

impl GroupElement {
    fn flow(p: RealPolynomial, t: f64, label: &str) -> Self {
        GroupElement { poly: p.scale(t), shift: 0, label: label.into() }
    }

    fn shift(n: i64) -> Self {
        GroupElement { poly: RealPolynomial::zero(), shift: n, label: format!("shift{n:+}") }
    }

    fn compose(&self, h: &GroupElement) -> GroupElement {
        GroupElement {
            poly: self.poly.add(&h.poly),
            shift: self.shift + h.shift,
            label: format!("{}*{}", self.label, h.label),
        }
    }

    /// `(g·J, T(g; J))` with the shift applied first.
    fn act(&self, j: &JacobiMatrix, z: C64) -> Result<(JacobiMatrix, Mat2C)> {
        let t_shift = shift_cocycle(j, self.shift, z);
        let shifted = shift(j, self.shift);
        if self.poly.is_zero() {
            return Ok((shifted, t_shift));
        }
        let steps = default_steps(1.0, &self.poly);
        let (moved, t_flow) = integrate_flow_and_cocycle(&shifted, &self.poly, 1.0, z, steps)?;
        Ok((moved, t_flow * t_shift))
    }
}

fn battery_elements(t: f64) -> Vec<GroupElement> {
    vec![
        GroupElement::flow(RealPolynomial::x(), t, "flow-x"),
        GroupElement::flow(x2(), t, "flow-x2"),
        GroupElement::shift(1),
        GroupElement::shift(-1),
    ]
}

fn joint_cocycle_defect(j: &JacobiMatrix, g: &GroupElement, h: &GroupElement, zs: &[C64]) -> Result<f64> {
    let gh = g.compose(h);
    let mut worst = 0.0f64;
    for &z in zs {
        let (hj, th) = h.act(j, z)?;
        let (_, tg) = g.act(&hj, z)?;
        let (_, tgh) = gh.act(j, z)?;
        worst = worst.max((tgh - tg * th).max_norm());
    }
    Ok(worst)
}

fn m_update_defect(j: &JacobiMatrix, g: &GroupElement, zs: &[C64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &z in zs {
        let (gj, t) = g.act(j, z)?;
        let predicted = mobius_apply(&t, m_pair(j, z)?.m_plus)?;
        worst = worst.max(chordal_distance(predicted, m_pair(&gj, z)?.m_plus));
    }
    Ok(worst)
}

fn instance_name(k: usize, j: &JacobiMatrix) -> String {
    format!("periodic-{k:02}-N{}", j.period().unwrap_or(0))
}

fn par_rows<T: Sync>(items: &[T], f: impl Fn(usize, &T) -> Vec<ReportRow> + Sync + Send) -> Vec<ReportRow> {
    items.par_iter().enumerate().map(|(k, x)| f(k, x)).collect::<Vec<_>>().into_iter().flatten().collect()
}

fn suite_isospectral(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Vec<ReportRow> {
    let s = "toda-isospectral";
    let (f, tol) = (&cfg.flows, &cfg.tolerances);
    par_rows(inst, |k, j| {
        let name = instance_name(k, j);
        let mut rows = Vec::new();
        for (label, p) in [("x", RealPolynomial::x()), ("x2", x2())] {
            let drift = isospectrality_check(j, &p, f.isospectral_time, f.isospectral_steps);
            rows.push(ReportRow::new(s, &name, format!("eigenvalue_drift[{label}]"), drift, tol.isospectral));
        }
        if k < cfg.instances.battery_count {
            let d = commutativity_check(j, &RealPolynomial::x(), &x2(), f.commutativity_time);
            rows.push(ReportRow::new(s, &name, "commutativity[x,x2]", d, tol.commutativity));
        }
        rows
    })
}

fn suite_cocycle(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Vec<ReportRow> {
    let s = "cocycle-joint";
    let elements = battery_elements(cfg.flows.cocycle_time);
    let z = zs(&cfg.z_grid);
    par_rows(&inst[..cfg.instances.battery_count], |k, j| {
        let name = instance_name(k, j);
        let mut rows = Vec::new();
        for g in &elements {
            for h in &elements {
                let d = joint_cocycle_defect(j, g, h, &z);
                rows.push(ReportRow::new(s, &name, format!("cocycle[{}|{}]", g.label, h.label), d, cfg.tolerances.cocycle));
            }
        }
        rows
    })
}

fn suite_m_update(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Vec<ReportRow> {
    let s = "m-update";
    let elements = battery_elements(cfg.flows.cocycle_time);
    let z = zs(&cfg.z_grid);
    par_rows(&inst[..cfg.instances.battery_count], |k, j| {
        let name = instance_name(k, j);
        let mut all = elements.clone();
        for g in &elements {
            for h in &elements {
                all.push(g.compose(h));
            }
        }
        all.iter()
            .map(|g| ReportRow::new(s, &name, format!("chordal[{}]", g.label), m_update_defect(j, g, &z), cfg.tolerances.m_update))
            .collect()
    })
}

fn reflection_grid(j: &JacobiMatrix, points: usize) -> Vec<f64> {
    let r = operator_norm_bound(j) + 0.5;
    (0..points).map(|k| -r + 2.0 * r * (k as f64 + 0.5) / points as f64).collect()
}

fn reflection_drift(j: &JacobiMatrix, cfg: &FlowConfig) -> Result<f64> {
    let moved = crate::toda::flow(j, &RealPolynomial::x(), cfg.reflection_time)?;
    let mut worst = 0.0f64;
    for x in reflection_grid(j, cfg.reflection_points) {
        let z = C64::new(x, cfg.reflection_y);
        let before = reflection_coefficient(&m_pair(j, z)?)?.0.norm();
        let after = reflection_coefficient(&m_pair(&moved, z)?)?.0.norm();
        worst = worst.max((before - after).abs());
    }
    Ok(worst)
}

fn suite_reflection(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Vec<ReportRow> {
    let s = "reflection-invariance";
    par_rows(&inst[..cfg.instances.reflection_count], |k, j| {
        vec![ReportRow::new(s, instance_name(k, j), "abs_r_drift[x]", reflection_drift(j, &cfg.flows), cfg.tolerances.reflection)]
    })
}

fn suite_zero_curvature(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Vec<ReportRow> {
    let s = "zero-curvature";
    let z = zs(&cfg.zero_curvature_z);
    let polys = [("x", RealPolynomial::x()), ("x2", x2()), ("p4", RealPolynomial::new(vec![0.3, -1.0, 0.5, 0.0, 0.25]))];
    par_rows(&inst[..cfg.instances.battery_count], |k, j| {
        let name = instance_name(k, j);
        polys
            .iter()
            .map(|(label, p)| {
                let r = z.iter().map(|&z| zero_curvature_residual(j, p, z)).fold(0.0, f64::max);
                ReportRow::new(s, &name, format!("residual[{label}]"), Ok(r), cfg.tolerances.zero_curvature)
            })
            .collect()
    })
}

fn lambda_multiplicativity(j: &JacobiMatrix, t: f64, z: C64) -> Result<f64> {
    let (p, q) = (RealPolynomial::x().scale(t), x2().scale(t));
    let pq = p.add(&q);
    let whole = lambda_cocycle(j, &pq, 1.0, z, default_steps(1.0, &pq))?;
    let first = lambda_cocycle(j, &q, 1.0, z, default_steps(1.0, &q))?;
    let second = lambda_cocycle(&first.evolved, &p, 1.0, z, default_steps(1.0, &p))?;
    Ok((whole.lambda - second.lambda * first.lambda).norm())
}

fn suite_omega(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Vec<ReportRow> {
    let s = "omega-symmetry";
    let (f, tol) = (&cfg.flows, &cfg.tolerances);
    let z = C64::new(cfg.z_grid[0][0], cfg.z_grid[0][1]);
    par_rows(&inst[..cfg.instances.battery_count], |k, j| {
        let name = instance_name(k, j);
        let x = RealPolynomial::x();
        let mut rows = vec![
            ReportRow::new(s, &name, "omega_symmetry[x,x2]", omega_symmetry_check(j, &x, &x2(), z, f.omega_fd_step), tol.omega_symmetry),
            ReportRow::new(s, &name, "evolg[x]", evolg_residual(j, &x, z, f.omega_fd_step), tol.evolg),
            ReportRow::new(s, &name, "evolg[x2]", evolg_residual(j, &x2(), z, f.omega_fd_step), tol.evolg),
            ReportRow::new(s, &name, "lambda_multiplicativity[x,x2]", lambda_multiplicativity(j, f.lambda_time, z), tol.lambda),
        ];
        let conj = lambda_cocycle(j, &x, f.lambda_time, z, default_steps(f.lambda_time, &x)).and_then(|l| l.conjugation_residual());
        rows.push(ReportRow::new(s, &name, "lambda_conjugation[x]", conj, tol.lambda));
        let series = (1..=f.series_max_degree)
            .map(|d| series_truncation_identity(j, d))
            .try_fold(0.0f64, |acc, r| r.map(|v| acc.max(v)));
        rows.push(ReportRow::new(s, &name, "series_identity", series, tol.series));
        rows
    })
}

fn suite_band_set(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Vec<ReportRow> {
    let s = "band-set";
    let tol = &cfg.tolerances;
    let grid = cfg.bands.grid;
    let mut rows = Vec::new();
    let free = JacobiMatrix::free(0.5, 0.0).and_then(|j| periodic_band_set(&j, grid));
    let expected = BandSet { intervals: vec![(-1.0, 1.0)] };
    rows.push(ReportRow::new(s, "free-a0.5-b0", "endpoint_error", free.map(|b| b.endpoint_distance(&expected)), tol.band_free));
    let two = JacobiMatrix::periodic(cfg.bands.two_periodic_a.to_vec(), cfg.bands.two_periodic_b.to_vec());
    rows.push(ReportRow::new(s, "two-periodic", "floquet_distance", two.and_then(|j| floquet_distance(&j, grid)), tol.band_floquet));
    rows.extend(par_rows(&inst[..cfg.instances.battery_count], |k, j| {
        vec![ReportRow::new(s, instance_name(k, j), "floquet_distance", floquet_distance(j, grid), tol.band_floquet)]
    }));
    rows
}

fn floquet_distance(j: &JacobiMatrix, grid: usize) -> Result<f64> {
    Ok(periodic_band_set(j, grid)?.endpoint_distance(&floquet_band_set(j)?))
}

fn grid_nodes(length: f64, dx: f64) -> usize {
    (length / dx).round() as usize + 1
}

fn roundtrip_error(v: &Potential) -> Result<f64> {
    let (h, _) = schrodinger_to_canonical(v)?;
    let est = v_from_h(&h)?;
    Ok(est.potential.values().iter().zip(v.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn suite_roundtrip(cfg: &ExperimentConfig) -> Vec<ReportRow> {
    let s = "canonical-roundtrip";
    let c = &cfg.canonical;
    let n = grid_nodes(c.roundtrip_length, c.dx);
    let cos = Potential::from_fn(0.0, c.dx, n, f64::cos).and_then(|v| roundtrip_error(&v));
    let zero = Potential::from_fn(0.0, c.dx, n, |_| 0.0).and_then(|v| roundtrip_error(&v));
    vec![
        ReportRow::new(s, "V=cos", "sup_error", cos, cfg.tolerances.roundtrip),
        ReportRow::new(s, "V=0", "sup_error", zero, cfg.tolerances.free_potential),
    ]
}

fn free_hamiltonian(length: f64, dx: f64) -> Result<Hamiltonian> {
    Ok(schrodinger_to_canonical(&Potential::from_fn(0.0, dx, grid_nodes(length, dx), |_| 0.0)?)?.0)
}

/// Count of increases along the radius sequence of genuine disks.
fn radius_violations(h: &Hamiltonian, z: C64) -> Result<f64> {
    let trace = weyl_disk_trace(h, z, 1)?;
    let radii: Vec<f64> = trace.iter().filter(|(_, d)| d.kind == DiskKind::Disk).map(|(_, d)| d.radius).collect();
    Ok(radii.windows(2).filter(|w| w[1] > w[0]).count() as f64)
}

fn suite_weyl_disks(cfg: &ExperimentConfig) -> Vec<ReportRow> {
    let s = "weyl-disks";
    let c = &cfg.canonical;
    let i = C64::new(0.0, 1.0);
    let expected = C64::new(-1.0, 1.0) / 2f64.sqrt();
    let free = free_hamiltonian(c.disk_length, c.dx);
    let m_err = free.as_ref().map_err(Clone::clone).and_then(|h| {
        let m = m_plus_canonical(h, i, c.disk_radius_tol)?;
        Ok(m.value().map_or(f64::INFINITY, |m| (m - expected).norm()))
    });
    let violations = free.as_ref().map_err(Clone::clone).and_then(|h| radius_violations(h, i));
    let flat = Hamiltonian::from_fn(0.0, 0.01, grid_nodes(c.disk_length, 0.01), |_| [0.5, 0.0, 0.5]).and_then(|h| {
        let m = m_plus_canonical(&h, i, c.disk_radius_tol)?;
        Ok(m.value().map_or(f64::INFINITY, |m| (m - i).norm()))
    });
    vec![
        ReportRow::new(s, "V=0", "m_error[z=i]", m_err, cfg.tolerances.canonical_m),
        ReportRow::new(s, "V=0", "radius_increases", violations, 0.0),
        ReportRow::new(s, "H=I/2", "m_error[z=i]", flat, cfg.tolerances.canonical_m),
    ]
}

fn twisted_shift_distance(c: &CanonicalConfig) -> Result<f64> {
    let length = 4.0 * c.shift.max(0.5);
    let v = Potential::from_fn(0.0, c.dx, grid_nodes(length, c.dx), f64::cos)?;
    let (h, _) = schrodinger_to_canonical(&v)?;
    let (hs, _) = twisted_shift_flow(&h, c.shift, &FSpec::Schrodinger)?;
    let vs = Potential::from_fn(0.0, c.dx, grid_nodes(length - c.shift, c.dx), |x| (x + c.shift).cos())?;
    hs.sup_distance(&schrodinger_to_canonical(&vs)?.0)
}

/// Random trace-free real matrix with entries in `[-1, 1]`.
fn random_traceless(seed: u64) -> Mat2R {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = || rng.gen_range(-1.0..=1.0);
    let (a, b, c) = (e(), e(), e());
    Mat2R::new(a, b, c, -a)
}

fn det_defect(c: &CanonicalConfig, f: Mat2R) -> Result<f64> {
    let h = Hamiltonian::from_fn(0.0, c.dx, grid_nodes(4.0 * c.shift.max(0.5), c.dx), |x| [1.0 + x * x, 0.0, 1.0])?;
    let xs: Vec<f64> = (0..=20).map(|k| h.x_at(k * (h.len() / 2) / 20)).collect();
    det_characteristic_check(&h, c.shift, &FSpec::Constant(f), &xs)
}

fn cocycle_law_defect(c: &CanonicalConfig, z: C64) -> Result<f64> {
    let length = 4.0 * (c.shift + c.second_shift).max(0.5);
    let v = Potential::from_fn(0.0, c.dx, grid_nodes(length, c.dx), f64::cos)?;
    let (h, _) = schrodinger_to_canonical(&v)?;
    let f = FSpec::Schrodinger;
    let (s, t) = (c.shift, c.second_shift);
    let (th, _) = twisted_shift_flow(&h, t, &f)?;
    let lhs = combined_cocycle(&h, s + t, z, &f)?;
    let rhs = combined_cocycle(&th, s, z, &f)? * combined_cocycle(&h, t, z, &f)?;
    Ok((lhs - rhs).max_norm())
}

fn canonical_m_gap(m1: SpherePoint, m2: SpherePoint) -> f64 {
    match (m1.value(), m2.value()) {
        (Some(a), Some(b)) => (a - b).norm(),
        _ => f64::INFINITY,
    }
}

fn twisted_m_update(c: &CanonicalConfig, z: C64) -> Result<f64> {
    let h = free_hamiltonian(c.disk_length + c.shift, c.dx)?;
    let m = m_plus_canonical(&h, z, c.disk_radius_tol)?;
    let (hs, _) = twisted_shift_flow(&h, c.shift, &FSpec::Schrodinger)?;
    let moved = combined_cocycle(&h, c.shift, z, &FSpec::Schrodinger)?.apply(m)?;
    Ok(canonical_m_gap(moved, m_plus_canonical(&hs, z, c.disk_radius_tol)?))
}

fn conjugation_m_update(c: &CanonicalConfig, b: Mat2R, z: C64) -> Result<f64> {
    let h = free_hamiltonian(c.disk_length, c.dx)?;
    let m = m_plus_canonical(&h, z, c.disk_radius_tol)?;
    let (ht, cocycle) = conjugation_flow(&h, &b, c.conjugation_time)?;
    let moved = cocycle.to_complex().apply(m)?;
    Ok(canonical_m_gap(moved, m_plus_canonical(&ht, z, c.disk_radius_tol)?))
}

fn pdets_schrodinger(c: &CanonicalConfig) -> Result<f64> {
    let v = Potential::from_fn(0.0, c.dx, grid_nodes(2.0, c.dx), f64::cos)?;
    pdets_residual(&schrodinger_to_canonical(&v)?.0, &FSpec::Schrodinger, c.pdets_step)
}

fn suite_twisted_shift(cfg: &ExperimentConfig) -> Vec<ReportRow> {
    let s = "twisted-shift";
    let c = &cfg.canonical;
    let tol = &cfg.tolerances;
    let f = random_traceless(cfg.seed.wrapping_add(1));
    let b = random_traceless(cfg.seed.wrapping_add(2));
    let i = C64::new(0.0, 1.0);
    type Job<'a> = Box<dyn Fn() -> ReportRow + Sync + Send + 'a>;
    let jobs: Vec<Job> = vec![
        Box::new(|| ReportRow::new(s, "V=cos", "shifted_potential_distance", twisted_shift_distance(c), tol.twisted_shift)),
        Box::new(|| ReportRow::new(s, "H=diag(1+x^2,1)", "det_characteristic[constant F]", det_defect(c, f), tol.det_characteristic)),
        Box::new(|| ReportRow::new(s, "V=cos", "pdets_residual", pdets_schrodinger(c), tol.pdets)),
        Box::new(|| ReportRow::new(s, "V=cos", "combined_cocycle_law[z=i]", cocycle_law_defect(c, i), tol.combined_cocycle)),
        Box::new(|| ReportRow::new(s, "V=0", "combined_m_update[z=i]", twisted_m_update(c, i), tol.combined_cocycle)),
        Box::new(|| ReportRow::new(s, "V=0", "conjugation_m_update[z=i]", conjugation_m_update(c, b, i), tol.combined_cocycle)),
    ];
    jobs.par_iter().map(|job| job()).collect()
}

/// Runs the configured suites and writes `report.json`, `report.csv` and,
/// when enabled, plot data under `output_dir`.
pub fn run_battery(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let mut report = Report::default();
    let selected: Vec<&str> = SUITES.iter().copied().filter(|s| cfg.suites.iter().any(|x| x == s)).collect();
    let needs_instances = selected.iter().any(|s| {
        !matches!(*s, "canonical-roundtrip" | "twisted-shift" | "weyl-disks")
    });
    let inst = if needs_instances { random_periodic_instances(&cfg.instances, cfg.seed)? } else { Vec::new() };
    for suite in &selected {
        let rows = match *suite {
            "toda-isospectral" => suite_isospectral(cfg, &inst),
            "cocycle-joint" => suite_cocycle(cfg, &inst),
            "m-update" => suite_m_update(cfg, &inst),
            "reflection-invariance" => suite_reflection(cfg, &inst),
            "zero-curvature" => suite_zero_curvature(cfg, &inst),
            "omega-symmetry" => suite_omega(cfg, &inst),
            "band-set" => suite_band_set(cfg, &inst),
            "canonical-roundtrip" => suite_roundtrip(cfg),
            "twisted-shift" => suite_twisted_shift(cfg),
            "weyl-disks" => suite_weyl_disks(cfg),
            other => return Err(Error::Config(format!("unknown suite '{other}'"))),
        };
        report.rows.extend(rows);
    }
    write_report(&report, &cfg.output_dir)?;
    if cfg.plots && !selected.is_empty() {
        emit_default_plots(cfg, &inst)?;
    }
    Ok(report)
}

pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json()? + "\n")?;
    fs::write(dir.join("report.csv"), report.to_csv()?)?;
    Ok(())
}

/// A plot-data series to emit.
#[derive(Debug, Clone)]
pub enum PlotRequest {
    /// `m±(x + iy)` along an `x`-grid.
    MTrace { j: JacobiMatrix, y: f64, x_range: (f64, f64), points: usize },
    /// Band intervals of a periodic matrix.
    BandSet { j: JacobiMatrix, grid: usize },
    /// Weyl disks at every `stride`-th node.
    DiskRadii { h: Hamiltonian, z: C64, stride: usize },
    /// `a_n(t)`, `b_n(t)` over the window along the `p`-flow.
    Trajectory { j: JacobiMatrix, p: RealPolynomial, t: f64, samples: usize },
}

fn csv_file(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn strings(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

fn point_cells(p: SpherePoint) -> [String; 2] {
    match p.value() {
        Some(v) => [fmt17(v.re), fmt17(v.im)],
        None => ["inf".into(), "inf".into()],
    }
}

/// Writes one CSV series to `path`.
///
/// Headers: `x,y,m_plus_re,m_plus_im,m_minus_re,m_minus_im` (m trace);
/// `band,side,energy` (band set, two rows per band);
/// `x,center_re,center_im,radius` (disks, genuine disks only);
/// `t,a_<n>...,b_<n>...` (trajectory).
pub fn emit_plot_data(req: &PlotRequest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    match req {
        PlotRequest::MTrace { j, y, x_range, points } => {
            let n = (*points).max(2);
            let mut rows = Vec::with_capacity(n);
            for k in 0..n {
                let x = x_range.0 + (x_range.1 - x_range.0) * k as f64 / (n - 1) as f64;
                let pair = m_pair(j, C64::new(x, *y))?;
                let [pr, pi] = point_cells(pair.m_plus);
                let [mr, mi] = point_cells(pair.m_minus);
                rows.push(vec![fmt17(x), fmt17(*y), pr, pi, mr, mi]);
            }
            csv_file(path, &strings(&["x", "y", "m_plus_re", "m_plus_im", "m_minus_re", "m_minus_im"]), rows)
        }
        PlotRequest::BandSet { j, grid } => {
            let bands = periodic_band_set(j, *grid)?;
            let rows = bands.intervals.iter().enumerate().flat_map(|(k, &(lo, hi))| {
                [vec![k.to_string(), "lower".into(), fmt17(lo)], vec![k.to_string(), "upper".into(), fmt17(hi)]]
            });
            csv_file(path, &strings(&["band", "side", "energy"]), rows)
        }
        PlotRequest::DiskRadii { h, z, stride } => {
            let trace = weyl_disk_trace(h, *z, *stride)?;
            let rows = trace.iter().filter(|(_, d)| d.kind == DiskKind::Disk).map(|(x, d)| {
                vec![fmt17(*x), fmt17(d.center_re), fmt17(d.center_im), fmt17(d.radius)]
            });
            csv_file(path, &strings(&["x", "center_re", "center_im", "radius"]), rows)
        }
        PlotRequest::Trajectory { j, p, t, samples } => {
            let samples = (*samples).max(1);
            let sites: Vec<i64> = (j.n_lo()..=j.n_hi()).collect();
            let mut header = vec!["t".to_string()];
            header.extend(sites.iter().map(|n| format!("a_{n}")));
            header.extend(sites.iter().map(|n| format!("b_{n}")));
            let dt = t / samples as f64;
            let steps = default_steps(dt, p);
            let mut cur = j.clone();
            let mut rows = Vec::with_capacity(samples + 1);
            for k in 0..=samples {
                if k > 0 {
                    cur = lax_flow(&cur, p, dt, steps)?;
                }
                let mut row = vec![fmt17(dt * k as f64)];
                row.extend(sites.iter().map(|&n| fmt17(cur.a_at(n))));
                row.extend(sites.iter().map(|&n| fmt17(cur.b_at(n))));
                rows.push(row);
            }
            csv_file(path, &header, rows)
        }
    }
}

fn emit_default_plots(cfg: &ExperimentConfig, inst: &[JacobiMatrix]) -> Result<()> {
    let dir = cfg.output_dir.join("plots");
    let free = JacobiMatrix::free(0.5, 0.0)?;
    emit_plot_data(&PlotRequest::BandSet { j: free, grid: cfg.bands.grid }, &dir.join("bands_free.csv"))?;
    let two = JacobiMatrix::periodic(cfg.bands.two_periodic_a.to_vec(), cfg.bands.two_periodic_b.to_vec())?;
    emit_plot_data(&PlotRequest::BandSet { j: two.clone(), grid: cfg.bands.grid }, &dir.join("bands_two_periodic.csv"))?;
    let r = operator_norm_bound(&two) + 0.5;
    emit_plot_data(
        &PlotRequest::MTrace { j: two, y: cfg.flows.reflection_y, x_range: (-r, r), points: 400 },
        &dir.join("m_trace_two_periodic.csv"),
    )?;
    let h = free_hamiltonian(cfg.canonical.disk_length, cfg.canonical.dx)?;
    emit_plot_data(&PlotRequest::DiskRadii { h, z: C64::new(0.0, 1.0), stride: 100 }, &dir.join("disks_free.csv"))?;
    if let Some(j) = inst.first() {
        emit_plot_data(
            &PlotRequest::Trajectory { j: j.clone(), p: RealPolynomial::x(), t: 1.0, samples: 50 },
            &dir.join("trajectory_instance00.csv"),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: dir.to_path_buf(),
            plots: false,
            instances: InstanceConfig { count: 3, battery_count: 2, reflection_count: 1, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml_str("suites = [\"nope\"]").is_err());
        assert!(ExperimentConfig::from_toml_str("[tolerances]\ncocycle = 0.0").is_err());
        assert!(ExperimentConfig::from_toml_str("z_grid = []").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        let partial = ExperimentConfig::from_toml_str("seed = 3\n[flows]\ncocycle_time = 0.25").unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.flows.cocycle_time, 0.25);
        assert_eq!(partial.flows.isospectral_steps, 2000);
    }

    #[test]
    fn instances_are_seeded() {
        let cfg = InstanceConfig::default();
        let a = random_periodic_instances(&cfg, 11).unwrap();
        let b = random_periodic_instances(&cfg, 11).unwrap();
        let c = random_periodic_instances(&cfg, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for j in &a {
            assert!(cfg.periods.contains(&j.period().unwrap()));
            assert!(j.window_a().iter().all(|&x| (0.3..=2.0).contains(&x)));
        }
    }

    #[test]
    fn number_formatting() {
        let row = ReportRow::new("s", "i", "m", Ok(0.1), 1e-6);
        let json = serde_json::to_string(&row).unwrap();
        assert!(json.contains("\"value\":1.0000000000000001e-1"), "{json}");
        assert!(json.contains("\"tolerance\":9.9999999999999995e-7"), "{json}");
        let failed = ReportRow::new("s", "i", "m", Err(Error::BandEdge), 1.0);
        let json = serde_json::to_string(&failed).unwrap();
        assert!(json.contains("\"value\":null") && json.contains("\"error\""));
        assert!(!failed.pass);
        let parsed: serde_json::Value = serde_json::from_str(&Report { rows: vec![row] }.to_json().unwrap()).unwrap();
        assert_eq!(parsed[0]["value"].as_f64(), Some(0.1));
    }

    #[test]
    fn group_element_composition() {
        let j = JacobiMatrix::periodic(vec![0.7, 1.3, 0.9], vec![0.2, -0.5, 0.4]).unwrap();
        let z = C64::new(0.3, 1.0);
        let s = GroupElement::shift(2).compose(&GroupElement::shift(-2));
        let (back, t) = s.act(&j, z).unwrap();
        assert_eq!(back, j);
        assert!((t - Mat2C::identity()).max_norm() < 1e-14);
        let f = GroupElement::flow(RealPolynomial::x(), 0.3, "f");
        assert!(joint_cocycle_defect(&j, &f, &GroupElement::shift(1), &[z]).unwrap() < 1e-8);
        assert!(joint_cocycle_defect(&j, &GroupElement::shift(1), &f, &[z]).unwrap() < 1e-6);
    }

    #[test]
    fn empty_suite_list() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { suites: vec![], ..quick_config(dir.path()) };
        let report = run_battery(&cfg).unwrap();
        assert!(report.rows.is_empty() && report.all_passed());
        assert_eq!(fs::read_to_string(dir.path().join("report.json")).unwrap().trim(), "[]");
    }

    #[test]
    fn tiny_tolerance_fails_with_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig { suites: vec!["zero-curvature".into()], ..quick_config(dir.path()) };
        cfg.tolerances.zero_curvature = 1e-300;
        let report = run_battery(&cfg).unwrap();
        assert!(!report.rows.is_empty());
        assert!(report.rows.iter().all(|r| r.value.is_some()));
        assert!(report.failures().count() > 0);
    }

    #[test]
    fn plot_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bands.csv");
        emit_plot_data(&PlotRequest::BandSet { j: JacobiMatrix::free(0.5, 0.0).unwrap(), grid: 2000 }, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let edge = |l: &str| l.rsplit(',').next().unwrap().parse::<f64>().unwrap();
        assert!((edge(lines[1]) + 1.0).abs() < 1e-10 && (edge(lines[2]) - 1.0).abs() < 1e-10);

        let path = dir.path().join("traj.csv");
        let j = JacobiMatrix::periodic(vec![0.5], vec![0.0]).unwrap();
        let req = PlotRequest::Trajectory { j, p: RealPolynomial::x(), t: 1.0, samples: 5 };
        emit_plot_data(&req, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 6);
        let tail = |l: &str| l.split_once(',').unwrap().1.to_string();
        assert!(rows.iter().all(|r| tail(r) == tail(rows[0])));
    }
}
