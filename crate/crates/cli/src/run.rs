//! Run orchestration: drive the tracker over a sequence on disk, emit the
//! per-frame results CSV, the config echo, and (on request) the evaluation
//! artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use welm_core::eval::{self, EvalResult};
use welm_core::tracker::{self, TrackRecord, TrackerConfig};
use welm_core::BBox;

use crate::config::render_config;
use crate::sequence::{frame_paths, load_frame, load_ground_truth, SequenceSpec};

pub const RESULTS_FILE: &str = "results.csv";
pub const CONFIG_ECHO_FILE: &str = "config_echo.cfg";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUCCESS_CURVE_FILE: &str = "success_curve.csv";
pub const PRECISION_CURVE_FILE: &str = "precision_curve.csv";
pub const SUCCESS_PLOT_FILE: &str = "success_plot.svg";
pub const PRECISION_PLOT_FILE: &str = "precision_plot.svg";

/// Per-frame results table. Boxes are 0-based pixel coordinates; `ms` is
/// the wall-clock cost of that frame (init cost for frame 0).
pub fn render_results_csv(records: &[TrackRecord]) -> String {
    let mut out = String::from("frame,x,y,w,h,max_score,rho,ms\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.3}\n",
            r.frame, r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h, r.max_score, r.rho, r.ms
        ));
    }
    out
}

pub fn parse_results_csv(text: &str) -> Result<Vec<TrackRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty results file"))?;
    if header != "frame,x,y,w,h,max_score,rho,ms" {
        bail!("unexpected results header {header:?}");
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!("line {}: expected 8 fields, got {}", lineno + 2, fields.len());
        }
        let parse_err = |what: &str| anyhow!("line {}: bad {what}", lineno + 2);
        records.push(TrackRecord {
            frame: fields[0].parse().map_err(|_| parse_err("frame"))?,
            bbox: BBox::new(
                fields[1].parse().map_err(|_| parse_err("x"))?,
                fields[2].parse().map_err(|_| parse_err("y"))?,
                fields[3].parse().map_err(|_| parse_err("w"))?,
                fields[4].parse().map_err(|_| parse_err("h"))?,
            ),
            max_score: fields[5].parse().map_err(|_| parse_err("max_score"))?,
            rho: fields[6].parse().map_err(|_| parse_err("rho"))?,
            ms: fields[7].parse().map_err(|_| parse_err("ms"))?,
        });
    }
    if records.is_empty() {
        bail!("results file holds no rows");
    }
    Ok(records)
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub records: Vec<TrackRecord>,
    pub eval: Option<EvalResult>,
    pub output_dir: PathBuf,
}

/// Tracks a sequence from disk. Frames are loaded lazily, one at a time.
/// The initial box comes from `init_box` when given, otherwise from the
/// first ground-truth line.
pub fn run_track(
    spec: &SequenceSpec,
    config: TrackerConfig,
    init_box: Option<BBox>,
    out_dir: &Path,
    evaluate: bool,
) -> Result<RunArtifacts> {
    let paths = frame_paths(spec)?;
    let gt = match &spec.ground_truth {
        Some(path) if path.is_file() => Some(load_ground_truth(path)?),
        Some(path) => {
            if init_box.is_none() || evaluate {
                bail!("ground truth not found at {}", path.display());
            }
            None
        }
        None => None,
    };
    if evaluate {
        let gt = gt.as_ref().expect("checked above");
        if gt.len() != paths.len() {
            bail!(
                "evaluation requested but ground truth has {} boxes for {} frames",
                gt.len(),
                paths.len()
            );
        }
    }
    let box0 = match init_box {
        Some(b) => b,
        None => *gt
            .as_ref()
            .and_then(|g| g.first())
            .ok_or_else(|| anyhow!("no initial box: provide ground truth or --init-box"))?,
    };

    let start = Instant::now();
    let first = load_frame(&paths[0])?;
    let mut state = tracker::init(&first, box0, config)
        .with_context(|| format!("initializing on {}", paths[0].display()))?;
    let mut records = vec![TrackRecord {
        frame: 0,
        bbox: box0,
        max_score: 0.0,
        rho: 0.0,
        ms: start.elapsed().as_secs_f64() * 1e3,
    }];
    for (i, path) in paths.iter().enumerate().skip(1) {
        let frame = load_frame(path)?;
        let (bbox, diag) = state
            .step(&frame)
            .with_context(|| format!("tracking frame {} ({})", i, path.display()))?;
        records.push(TrackRecord {
            frame: i,
            bbox,
            max_score: diag.max_score,
            rho: diag.rho_used,
            ms: diag.elapsed_ms,
        });
    }

    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    fs::write(out_dir.join(RESULTS_FILE), render_results_csv(&records))?;
    let mut echo = render_config(&state.config);
    if !spec.attributes.is_empty() {
        // Metadata only; comments survive a round trip through the parser.
        echo.push_str(&format!("\n# attributes: {}\n", spec.attributes.join(",")));
    }
    fs::write(out_dir.join(CONFIG_ECHO_FILE), echo)?;

    let eval_result = if evaluate {
        let gt = gt.expect("checked above");
        let pred: Vec<BBox> = records.iter().map(|r| r.bbox).collect();
        let ms: Vec<f64> = records.iter().map(|r| r.ms).collect();
        let result = eval::evaluate(&pred, &gt, Some(&ms))?;
        write_eval_artifacts(out_dir, &result)?;
        Some(result)
    } else {
        None
    };

    Ok(RunArtifacts { records, eval: eval_result, output_dir: out_dir.to_path_buf() })
}

/// Evaluation-only mode: score a stored results CSV against ground truth
/// without re-tracking.
pub fn run_eval(results_path: &Path, gt_path: &Path, out_dir: &Path) -> Result<EvalResult> {
    let text = fs::read_to_string(results_path)
        .with_context(|| format!("cannot read {}", results_path.display()))?;
    let records = parse_results_csv(&text)?;
    let gt = load_ground_truth(gt_path)?;
    if gt.len() != records.len() {
        bail!(
            "ground truth has {} boxes for {} result rows",
            gt.len(),
            records.len()
        );
    }
    let pred: Vec<BBox> = records.iter().map(|r| r.bbox).collect();
    let ms: Vec<f64> = records.iter().map(|r| r.ms).collect();
    let result = eval::evaluate(&pred, &gt, Some(&ms))?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    write_eval_artifacts(out_dir, &result)?;
    Ok(result)
}

fn write_eval_artifacts(out_dir: &Path, result: &EvalResult) -> Result<()> {
    let mut buf = Vec::new();
    eval::write_metrics_csv(&mut buf, result)?;
    fs::write(out_dir.join(METRICS_FILE), &buf)?;

    buf.clear();
    eval::write_curve_csv(&mut buf, "overlap_threshold", &result.success_thresholds, &result.success_fractions)?;
    fs::write(out_dir.join(SUCCESS_CURVE_FILE), &buf)?;

    buf.clear();
    eval::write_curve_csv(&mut buf, "pixel_threshold", &result.precision_thresholds, &result.precision_fractions)?;
    fs::write(out_dir.join(PRECISION_CURVE_FILE), &buf)?;

    buf.clear();
    eval::write_curve_svg(&mut buf, "success plot", "overlap threshold", &result.success_thresholds, &result.success_fractions)?;
    fs::write(out_dir.join(SUCCESS_PLOT_FILE), &buf)?;

    buf.clear();
    eval::write_curve_svg(&mut buf, "precision plot", "center error threshold (px)", &result.precision_thresholds, &result.precision_fractions)?;
    fs::write(out_dir.join(PRECISION_PLOT_FILE), &buf)?;
    Ok(())
}
