use std::fs;

use smearcount::netpbm::{load_pgm, load_ppm};
use smearcount::pipeline::TuneReport;
use smearcount::{run_pipeline, AnalysisReport, PipelineConfig, SynthTruth};
use smearcount_cli::commands::{self, SYNTH_TEMPLATE_WEIGHTS};
use tempfile::TempDir;

/// Writes a synth spec, generates the scene and its config.
fn generate(dir: &TempDir) -> SynthTruth {
    let spec = r#"{"width": 384, "height": 384, "n_white": 2, "n_red": 30, "rng_seed": 17}"#;
    fs::write(dir.path().join("spec.json"), spec).unwrap();
    commands::synth(
        &dir.path().join("spec.json"),
        &dir.path().join("smear.pgm"),
        &dir.path().join("truth.json"),
        Some(&dir.path().join("config.json")),
    )
    .unwrap()
}

#[test]
fn synth_writes_image_truth_and_config() {
    let dir = TempDir::new().unwrap();
    let truth = generate(&dir);
    let img = load_pgm(&fs::read(dir.path().join("smear.pgm")).unwrap()).unwrap();
    assert_eq!((img.width(), img.height()), (384, 384));
    let saved: SynthTruth = serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(saved, truth);
    assert_eq!((truth.white_count, truth.red_count), (2, 30));
    let cfg = PipelineConfig::from_json(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    let weights: Vec<f64> = cfg.templates.iter().map(|t| t.weight).collect();
    assert_eq!(weights, SYNTH_TEMPLATE_WEIGHTS[..weights.len()]);
}

#[test]
fn analyze_writes_report_overlay_and_stages() {
    let dir = TempDir::new().unwrap();
    let truth = generate(&dir);
    let p = |name: &str| dir.path().join(name);
    let report = commands::analyze(
        &p("smear.pgm"),
        &p("config.json"),
        &p("overlay.ppm"),
        &p("report.json"),
        Some(&p("stages")),
    )
    .unwrap();
    assert_eq!(report.white_count, truth.white_count);

    let text = fs::read_to_string(p("report.json")).unwrap();
    let on_disk: AnalysisReport = serde_json::from_str(&text).unwrap();
    assert_eq!(on_disk, report);
    assert_eq!(text, report.to_json());

    let img = commands::read_image(&p("smear.pgm")).unwrap();
    let cfg = commands::read_config(&p("config.json")).unwrap();
    let local = run_pipeline(&img, &cfg).unwrap();
    assert_eq!(
        report.without_timings().to_json(),
        local.report.without_timings().to_json()
    );
    assert_eq!(
        load_ppm(&fs::read(p("overlay.ppm")).unwrap()).unwrap(),
        local.overlay_image()
    );

    for name in [
        "filtered.pgm",
        "equalized.pgm",
        "binary.pgm",
        "edges.pgm",
        "res_combined.pgm",
        "overlay.ppm",
        "spectrum.pgm",
    ] {
        assert!(p("stages").join(name).is_file(), "{name}");
    }
}

#[test]
fn stage_dump_flag_uses_a_directory_beside_the_report() {
    let dir = TempDir::new().unwrap();
    generate(&dir);
    let p = |name: &str| dir.path().join(name);
    let mut cfg = commands::read_config(&p("config.json")).unwrap();
    cfg.stage_dump = true;
    fs::write(p("dump.json"), cfg.to_json()).unwrap();
    commands::analyze(&p("smear.pgm"), &p("dump.json"), &p("o.ppm"), &p("r.json"), None).unwrap();
    assert!(p("r_stages").join("edges.pgm").is_file());
}

#[test]
fn tune_prefers_a_grid_entry_with_least_error() {
    let dir = TempDir::new().unwrap();
    generate(&dir);
    let p = |name: &str| dir.path().join(name);
    let n = commands::read_config(&p("config.json")).unwrap().templates.len();
    let grid: Vec<Vec<f64>> = vec![vec![1.0; n], SYNTH_TEMPLATE_WEIGHTS[..n].to_vec()];
    fs::write(p("grid.json"), serde_json::to_string(&grid).unwrap()).unwrap();
    let report: TuneReport =
        commands::tune(&p("smear.pgm"), &p("config.json"), &p("truth.json"), &p("grid.json")).unwrap();
    assert_eq!(report.truth_count, 30);
    assert_eq!(report.entries.len(), 2);
    let best = report
        .entries
        .iter()
        .find(|e| e.weights == report.best_weights)
        .unwrap();
    assert!(report.entries.iter().all(|e| e.score >= best.score));
}

#[test]
fn truth_accepts_bare_point_lists() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("pts.json");
    fs::write(&path, r#"[{"row": 1.5, "col": 2}]"#).unwrap();
    let pts = commands::read_truth(&path).unwrap();
    assert_eq!((pts[0].row, pts[0].col), (1.5, 2.0));
    fs::write(&path, r#"{"nothing": []}"#).unwrap();
    assert!(commands::read_truth(&path).is_err());
}

#[test]
fn errors_name_the_file() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.pgm");
    let err = commands::read_image(&missing).unwrap_err();
    assert!(format!("{err:#}").contains("missing.pgm"));
    fs::write(dir.path().join("bad.json"), "{").unwrap();
    assert!(commands::read_config(&dir.path().join("bad.json")).is_err());
}
