use std::fs;
use std::path::Path;

use c1beta::field::io::load_binary;
use c1beta::field::MapField;
use c1beta::pipeline::{self, load_report, read_obj, RunConfig, RunReport};
use c1beta::Error;

/// Two stages from a scaled plane with defect exactly `κδ₁e`; unit schedule
/// constants keep `μ` below `λ` on this grid.
fn stage_config(out: &Path, q_max: usize) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
output_dir = "{}"
mode = "measure"

[metric]
kind = "euclidean"

[initial_map]
kind = "scaled_flat"
scale = 0.99532

[start]
kind = "stage"
kappa = 0.02

[grid]
n = 192

[schedule]
a = 2.0
b = 1.1
c = 2.5
alpha = 0.01
q_max = {q_max}
c_tilde = 1.0
c_hat = 1.0
"#,
        out.display()
    ))
    .unwrap()
}

fn short_config(out: &Path, scale: f64) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
output_dir = "{}"

[metric]
kind = "euclidean"

[initial_map]
kind = "scaled_flat"
scale = {scale}

[grid]
n = 128

[schedule]
a = 2.0
b = 1.1
c = 2.5
alpha = 0.01
"#,
        out.display()
    ))
    .unwrap()
}

fn run_in(dir: &Path, q_max: usize) -> RunReport {
    pipeline::run(&stage_config(dir, q_max)).unwrap()
}

#[test]
fn identical_configs_give_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_in(a.path(), 2);
    let rb = run_in(b.path(), 2);
    assert_eq!(ra.stages, rb.stages);
    assert_eq!(ra.table, rb.table);
    assert_eq!(ra.checks, rb.checks);
    for name in ["u0.obj", "u1.obj", "u2.obj", "convergence.csv", "checks.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn defect_column_is_read_from_stage_reports() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), 2);
    assert_eq!(r.table.len(), r.stages.len());
    assert_eq!(r.stages.len(), 2);
    for (row, stage) in r.table.iter().zip(&r.stages) {
        assert_eq!(row.q, stage.q);
        assert_eq!(row.defect_sup, stage.defect_vs_g_sup);
    }
    let column = r.defect_column();
    assert_eq!(column[0], r.preparation[0].defect_sup);
    assert_eq!(
        &column[1..],
        &r.table.iter().map(|t| t.defect_sup).collect::<Vec<_>>()[..]
    );

    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + r.table.len());
    let checks = fs::read_to_string(dir.path().join("checks.txt")).unwrap();
    assert_eq!(checks.lines().count(), r.checks.len());
    assert!(checks.lines().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
}

#[test]
fn report_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), 1);
    assert_eq!(load_report(&dir.path().join("report.json")).unwrap(), r);
}

#[test]
fn single_stage_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), 1);
    assert_eq!(r.table.len(), 1);
    assert!(r.stopped.is_none());
}

#[test]
fn stages_keep_bookkeeping_and_injectivity_audit() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), 2);
    for s in &r.stages {
        assert!(s.bookkeeping_rel <= 1e-8, "stage {}: {}", s.q, s.bookkeeping_rel);
    }
    assert_eq!(r.audits.len(), r.stages.len());
    for (a, s) in r.audits.iter().zip(&r.stages) {
        // |far_{q+1} − far_q| ≤ 2‖u_{q+1} − u_q‖₀/ρ by the triangle inequality.
        assert_eq!(
            a.far_allowed,
            2.0 * s.displacement_sup / r.config.tolerances.injectivity_sep
        );
        assert!(a.pass(), "{a:?}");
    }
    assert!(r.table.iter().all(|t| t.injectivity > 0.0));
    assert!(r.table.last().unwrap().distance <= r.config.tolerances.eps);
}

#[test]
fn final_mesh_reloads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_in(dir.path(), 1);
    let u: MapField = load_binary(&dir.path().join("u1.c1bf")).unwrap();
    let mesh = read_obj(&r.final_mesh).unwrap();
    let nodes: Vec<_> = u.masked_values().map(|(_, v)| v).collect();
    assert_eq!(mesh.vertices, nodes);
}

#[test]
fn exactly_isometric_start_is_not_strictly_short() {
    let dir = tempfile::tempdir().unwrap();
    let err = pipeline::run(&short_config(dir.path(), 1.0)).unwrap_err();
    assert!(matches!(err, Error::NotStrictlyShort { .. }), "{err}");
}

#[test]
fn measure_mode_records_where_the_run_stopped() {
    let dir = tempfile::tempdir().unwrap();
    let r = pipeline::run(&short_config(dir.path(), 0.9)).unwrap();
    let short = r.short.as_ref().unwrap();
    assert_eq!(short.twists.len(), 2);
    assert!(short.twists[0].freq <= short.twists[1].freq);
    let completed = r.checks.iter().find(|c| c.name == "all stages completed").unwrap();
    assert_eq!(completed.pass, r.stopped.is_none());
    assert!(!r.strict_pass() || r.stopped.is_none());
    assert!(dir.path().join("ubar.obj").exists() && dir.path().join("utilde.obj").exists());
}

#[test]
fn strict_mode_rejects_infeasible_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_config(dir.path(), 0.9);
    cfg.mode = c1beta::stage_corrugate::Mode::Strict;
    cfg.schedule.c = 2.1;
    assert!(matches!(pipeline::run(&cfg), Err(Error::Config(_))));
}

#[test]
fn amplitude_cap_from_config_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = stage_config(dir.path(), 1);
    cfg.constants.s_max = Some(1e-3);
    let r = pipeline::run(&cfg).unwrap();
    let stopped = r.stopped.as_deref().unwrap();
    assert!(stopped.contains("amplitude"), "{stopped}");
    assert!(r.table.is_empty());
    assert!(!r.strict_pass());
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
