//! File-based subcommands. Each returns its result so tests can call it
//! without spawning the binary.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;
use smearcount::netpbm::{load_pgm, save_pgm, save_ppm};
use smearcount::pipeline::{isolated_red_templates, tune_template_weights, TuneReport};
use smearcount::{
    run_pipeline, synth_smear, AnalysisReport, GrayImage, PipelineConfig, PointRC, SynthSpec, SynthTruth,
};

/// Weights given to the five generated templates, in order.
pub const SYNTH_TEMPLATE_WEIGHTS: [f64; 5] = [1.0, 1.0, 1.2, 1.0, 1.2];
const SYNTH_TEMPLATE_HALF: usize = 18;

pub fn read_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_pgm(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    PipelineConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Runs the pipeline and writes overlay and report. Stage images go to
/// `dump_dir` when given, or next to the report (`<report stem>_stages/`)
/// when the config asks for them.
pub fn analyze(
    input: &Path,
    config: &Path,
    out_overlay: &Path,
    out_report: &Path,
    dump_dir: Option<&Path>,
) -> Result<AnalysisReport> {
    let img = read_image(input)?;
    let cfg = read_config(config)?;
    let out = run_pipeline(&img, &cfg)?;
    write(out_overlay, save_ppm(&out.overlay_image()))?;
    write(out_report, out.report.to_json())?;

    let default_dir;
    let dir = match dump_dir {
        Some(d) => Some(d),
        None if cfg.stage_dump => {
            let stem = out_report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            default_dir = out_report.with_file_name(format!("{stem}_stages"));
            Some(default_dir.as_path())
        }
        None => None,
    };
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, art) in &out.artifacts {
            write(&dir.join(format!("{name}.{}", art.extension())), art.encode())?;
        }
    }
    Ok(out.report)
}

/// Generates a scene. With `out_config`, also writes a default config whose
/// templates cover five isolated red cells.
pub fn synth(spec: &Path, out: &Path, truth_path: &Path, out_config: Option<&Path>) -> Result<SynthTruth> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: SynthSpec = serde_json::from_str(&text).with_context(|| "parsing synth spec")?;
    let (img, truth) = synth_smear(&spec)?;
    write(out, save_pgm(&img))?;
    write(truth_path, serde_json::to_string_pretty(&truth)?)?;
    if let Some(path) = out_config {
        let mut templates = isolated_red_templates(&spec, &truth, SYNTH_TEMPLATE_HALF, SYNTH_TEMPLATE_WEIGHTS.len());
        if templates.is_empty() {
            bail!("no isolated red cell can hold a template; use fewer or smaller cells");
        }
        for (t, w) in templates.iter_mut().zip(SYNTH_TEMPLATE_WEIGHTS) {
            t.weight = w;
        }
        let cfg = PipelineConfig {
            templates,
            ..PipelineConfig::default()
        };
        write(path, cfg.to_json())?;
    }
    Ok(truth)
}

/// Red-cell centers from either a synth truth file (`red_centers`) or a bare
/// list of `{row, col}` points.
pub fn read_truth(path: &Path) -> Result<Vec<PointRC>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let points = match value {
        Value::Array(_) => value,
        Value::Object(mut map) => match map.remove("red_centers") {
            Some(v) => v,
            None => bail!("{}: expected `red_centers` or a list of points", path.display()),
        },
        _ => bail!("{}: expected `red_centers` or a list of points", path.display()),
    };
    Ok(serde_json::from_value(points)?)
}

pub fn tune(input: &Path, config: &Path, truth: &Path, grid: &Path) -> Result<TuneReport> {
    let img = read_image(input)?;
    let cfg = read_config(config)?;
    let truth = read_truth(truth)?;
    let text = fs::read_to_string(grid).with_context(|| format!("reading {}", grid.display()))?;
    let grid: Vec<Vec<f64>> = serde_json::from_str(&text).with_context(|| "grid must be a list of weight lists")?;
    if grid.is_empty() {
        bail!("weight grid is empty");
    }
    Ok(tune_template_weights(&img, &cfg, &truth, &grid)?)
}
