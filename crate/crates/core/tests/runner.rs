use std::path::Path;
use std::process::Command;

use pilot_relax::error::Error;
use pilot_relax::runner::{
    run, table_render, time_label, RunConfig, RunManifest, MANIFEST_FILE, PRESETS, REPORT_FILE,
    WORKERS_ENV,
};

const BIN: &str = env!("CARGO_BIN_EXE_pilot-relax");

fn small_config(output: &Path) -> String {
    format!(
        r#"
name = "small"
wavefunction = "psi1"
densities = ["rho0", "rho3"]
times = [0, "0.1pi"]
output = "{}"
guidance = [{{ mu = 0.0, f = "none" }}, {{ mu = 1.0, f = "f1" }}]

[lattice]
R = 32
C = 8
margin = 1
"#,
        output.display()
    )
}

fn parse(text: &str) -> Result<RunConfig, Error> {
    RunConfig::from_toml(text, Path::new("test.toml"))
}

fn config_error(text: &str) -> bool {
    match parse(text).and_then(|c| c.validate().map(|_| ())) {
        Err(e) => matches!(
            e,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Geometry(_)
                | Error::Integrator(_)
                | Error::InvalidMode { .. }
        ),
        Ok(()) => false,
    }
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let good = small_config(dir.path());
    assert!(parse(&good).unwrap().validate().is_ok());
    let bad = [
        good.replace("\"0.1pi\"", "\"soon\""),
        good.replace("times = [0, \"0.1pi\"]", "times = [\"0.1pi\", 0]"),
        good.replace("times = [0, \"0.1pi\"]", "times = []"),
        good.replace("[\"rho0\", \"rho3\"]", "[\"rho0\", \"rho0\"]"),
        good.replace("[\"rho0\", \"rho3\"]", "[\"rho9\"]"),
        good.replace("f = \"f1\"", "f = \"f7\""),
        good.replace("{ mu = 1.0, f = \"f1\" }", "{ mu = 0.0, f = \"none\" }"),
        good.replace("R = 32", "R = 30"),
        good.replace("margin = 1", "margin = 4"),
        good.replace("wavefunction = \"psi1\"", "wavefunction = \"psi3\""),
        good.replace("name = \"small\"", "name = \"small\"\nworkers = 0"),
        good.replace("name = \"small\"", "name = \"small\"\nfigures = true"),
        good.replace("name = \"small\"", "name = \"small\"\ncolour = \"red\""),
        good.replace(
            "name = \"small\"",
            "name = \"small\"\n[integrator]\nabs_tol = -1.0",
        ),
    ];
    for (i, text) in bad.iter().enumerate() {
        assert!(config_error(text), "case {i} accepted");
    }
}

#[test]
fn explicit_modes_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config(dir.path()).replace(
        "wavefunction = \"psi1\"",
        "wavefunction = [{ m = 1, n = 1, amplitude = 0.6, phase = 0.0 }, { m = 2, n = 1, amplitude = 0.8, phase = 1.0 }]",
    );
    assert!(parse(&text).unwrap().validate().is_ok());
}

#[test]
fn runs_are_reproducible_and_complete() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(&parse(&small_config(a.path())).unwrap()).unwrap();
    let mb = run(&parse(&small_config(b.path())).unwrap()).unwrap();
    let csv_a = std::fs::read(a.path().join(REPORT_FILE)).unwrap();
    assert_eq!(csv_a, std::fs::read(b.path().join(REPORT_FILE)).unwrap());

    // every (guidance, density, time) triple appears once
    assert_eq!(ma.rows.len(), 2 * 2 * 2);
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 1 + 8);
    for row in &ma.rows {
        let r = &row.report;
        if r.time == 0.0 {
            assert_eq!(r.backtrack_pct, 100.0);
        } else {
            assert!(r.backtrack_pct > 90.0);
        }
    }
    let loaded = RunManifest::load(&a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.rows.len(), mb.rows.len());
    for (x, y) in loaded.rows.iter().zip(&mb.rows) {
        assert_eq!(x.report.hbar, y.report.hbar);
    }
}

#[test]
fn tables_show_percentages_and_scaled_values() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        small_config(dir.path()).replace("name = \"small\"", "name = \"small\"\nhbar_scale = 10.0");
    let manifest = run(&parse(&text).unwrap()).unwrap();
    let rendered = table_render(&manifest);
    assert!(rendered.contains("100.00"));
    assert!(rendered.contains("t=0.1pi"));
    let r = &manifest.rows[0].report;
    assert!(rendered.contains(&format!("{:.5} ({})", r.hbar, (r.hbar * 10.0).round())));
}

#[test]
fn time_labels() {
    use std::f64::consts::PI;
    assert_eq!(time_label(0.0), "0");
    assert_eq!(time_label(4.0 * PI), "4pi");
    assert_eq!(time_label(0.5 * PI), "0.5pi");
    assert_eq!(time_label(1.25), "1.25");
}

#[test]
fn presets_parse_and_validate() {
    for (name, _) in PRESETS {
        let cfg = RunConfig::preset(name).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.clone().reduced().lattice.resolution, 256);
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, small_config(&out)).unwrap();
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "times = [").unwrap();

    let status = |args: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(args)
            .env_remove(WORKERS_ENV)
            .env("RUST_LOG", "error");
        if let Some(v) = env {
            cmd.env(WORKERS_ENV, v);
        }
        cmd.output().unwrap().status.code()
    };
    let cfg_s = cfg.to_str().unwrap();
    assert_eq!(status(&["run", cfg_s], None), Some(0));
    assert!(out.join(REPORT_FILE).exists());
    assert_eq!(status(&["tables", out.to_str().unwrap()], None), Some(0));
    assert_eq!(status(&["run", cfg_s], Some("2")), Some(0));
    assert_eq!(status(&["run", cfg_s], Some("zero")), Some(2));
    assert_eq!(status(&["run", broken.to_str().unwrap()], None), Some(2));
    assert_eq!(
        status(
            &["run", dir.path().join("missing.toml").to_str().unwrap()],
            None
        ),
        Some(2)
    );
    assert_ne!(status(&["bogus"], None), Some(0));
}
