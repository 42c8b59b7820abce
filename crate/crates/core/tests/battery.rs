use std::fs;

use todalab::experiment::{
    emit_plot_data, run_battery, ExperimentConfig, InstanceConfig, PlotRequest, SUITES,
};
use todalab::canonical::{schrodinger_to_canonical, Potential};
use todalab::C64;

fn small(dir: &std::path::Path, suites: &[&str]) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: dir.to_path_buf(),
        suites: suites.iter().map(|s| s.to_string()).collect(),
        instances: InstanceConfig { count: 4, battery_count: 2, reflection_count: 1, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn reports_are_byte_identical() {
    let suites = ["toda-isospectral", "zero-curvature", "band-set", "canonical-roundtrip"];
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_battery(&small(d1.path(), &suites)).unwrap();
    run_battery(&small(d2.path(), &suites)).unwrap();
    for name in ["report.json", "report.csv", "plots/trajectory_instance00.csv", "plots/bands_free.csv"] {
        let a = fs::read(d1.path().join(name)).unwrap();
        let b = fs::read(d2.path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
    let mut other = small(d2.path(), &suites);
    other.seed = 8;
    run_battery(&other).unwrap();
    assert_ne!(fs::read(d1.path().join("report.json")).unwrap(), fs::read(d2.path().join("report.json")).unwrap());
}

#[test]
fn report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_battery(&small(dir.path(), &["canonical-roundtrip", "weyl-disks"])).unwrap();
    assert!(report.all_passed());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), report.rows.len());
    for row in rows {
        let obj = row.as_object().unwrap();
        for key in ["suite", "instance", "metric", "value", "tolerance", "pass"] {
            assert!(obj.contains_key(key), "{key}");
        }
    }
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "suite,instance,metric,value,tolerance,pass,error");
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

#[test]
fn suites_run_in_canonical_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), &["band-set", "canonical-roundtrip"]);
    cfg.suites.reverse();
    cfg.plots = false;
    let report = run_battery(&cfg).unwrap();
    let first_roundtrip = report.rows.iter().position(|r| r.suite == "canonical-roundtrip").unwrap();
    assert!(report.rows[..first_roundtrip].iter().all(|r| r.suite == "band-set"));
    assert!(SUITES.iter().position(|s| *s == "band-set") < SUITES.iter().position(|s| *s == "canonical-roundtrip"));
}

#[test]
fn disk_radii_column_strictly_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let pot = Potential::from_fn(0.0, 1e-3, 10001, |_| 0.0).unwrap();
    let (h, _) = schrodinger_to_canonical(&pot).unwrap();
    let path = dir.path().join("disks.csv");
    emit_plot_data(&PlotRequest::DiskRadii { h, z: C64::new(0.0, 1.0), stride: 50 }, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,center_re,center_im,radius");
    let radii: Vec<f64> =
        text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(radii.len() > 100);
    assert!(radii.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn io_errors_surface() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let req = PlotRequest::BandSet { j: todalab::JacobiMatrix::free(0.5, 0.0).unwrap(), grid: 100 };
    assert!(emit_plot_data(&req, &blocker.join("sub").join("bands.csv")).is_err());
}

#[test]
fn shipped_config_matches_defaults() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(ExperimentConfig::from_file(&path).unwrap(), ExperimentConfig::default());
}
