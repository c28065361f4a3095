//! Success/precision evaluation of a tracked sequence against ground
//! truth, plus CSV and SVG emission.

use std::io::{self, Write};

use crate::error::{CoreError, Result};
use crate::geometry::{center_distance_sq, iou, BBox};

/// Evaluation summary of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Per-frame overlap S.
    pub overlaps: Vec<f64>,
    /// Per-frame center error in pixels.
    pub center_errors: Vec<f64>,
    pub success_thresholds: Vec<f64>,
    /// Fraction of frames with S strictly above each threshold.
    pub success_fractions: Vec<f64>,
    pub precision_thresholds: Vec<f64>,
    /// Fraction of frames with center error at or below each threshold.
    pub precision_fractions: Vec<f64>,
    /// Percentage of frames with S > 0.5.
    pub success_rate_at_half: f64,
    pub mean_overlap: f64,
    pub mean_center_error: f64,
    /// Frames per second over the recorded per-frame times; 0 when no
    /// timing was supplied.
    pub mean_fps: f64,
}

/// Per-frame overlap between predictions and ground truth.
pub fn overlap_series(pred: &[BBox], gt: &[BBox]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} ground-truth boxes", pred.len()),
            got: format!("{}", gt.len()),
        });
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect())
}

/// Fraction of frames with overlap strictly above each threshold.
/// Thresholds must be sorted ascending.
pub fn success_curve(overlaps: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if overlaps.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    let n = overlaps.len() as f64;
    thresholds
        .iter()
        .map(|t| overlaps.iter().filter(|s| **s > *t).count() as f64 / n)
        .collect()
}

/// Percentage of frames with overlap strictly above `t0`.
pub fn success_rate(overlaps: &[f64], t0: f64) -> f64 {
    if overlaps.is_empty() {
        return 0.0;
    }
    100.0 * overlaps.iter().filter(|s| **s > t0).count() as f64 / overlaps.len() as f64
}

/// Per-frame center distances in pixels.
pub fn center_error_series(pred: &[BBox], gt: &[BBox]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} ground-truth boxes", pred.len()),
            got: format!("{}", gt.len()),
        });
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| center_distance_sq(p, g).sqrt())
        .collect())
}

/// Fraction of frames whose center error is at or below each pixel
/// threshold.
pub fn precision_curve(pred: &[BBox], gt: &[BBox], pixel_thresholds: &[f64]) -> Result<Vec<f64>> {
    let errors = center_error_series(pred, gt)?;
    if errors.is_empty() {
        return Ok(vec![0.0; pixel_thresholds.len()]);
    }
    let n = errors.len() as f64;
    Ok(pixel_thresholds
        .iter()
        .map(|t| errors.iter().filter(|e| **e <= *t).count() as f64 / n)
        .collect())
}

/// 101 overlap thresholds, 0.00 to 1.00.
pub fn default_success_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// 51 pixel thresholds, 0 to 50.
pub fn default_precision_thresholds() -> Vec<f64> {
    (0..=50).map(|i| i as f64).collect()
}

/// Full evaluation with the default threshold grids.
pub fn evaluate(pred: &[BBox], gt: &[BBox], per_frame_ms: Option<&[f64]>) -> Result<EvalResult> {
    let overlaps = overlap_series(pred, gt)?;
    let center_errors = center_error_series(pred, gt)?;
    let success_thresholds = default_success_thresholds();
    let precision_thresholds = default_precision_thresholds();
    let success_fractions = success_curve(&overlaps, &success_thresholds);
    let precision_fractions = precision_curve(pred, gt, &precision_thresholds)?;
    let n = overlaps.len().max(1) as f64;
    let mean_fps = match per_frame_ms {
        Some(ms) if !ms.is_empty() => {
            let total_s: f64 = ms.iter().sum::<f64>() / 1000.0;
            if total_s > 0.0 {
                ms.len() as f64 / total_s
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    Ok(EvalResult {
        success_rate_at_half: success_rate(&overlaps, 0.5),
        mean_overlap: overlaps.iter().sum::<f64>() / n,
        mean_center_error: center_errors.iter().sum::<f64>() / n,
        overlaps,
        center_errors,
        success_thresholds,
        success_fractions,
        precision_thresholds,
        precision_fractions,
        mean_fps,
    })
}

/// Writes a two-column threshold/fraction CSV with a header row. Rows are
/// newline-terminated, decimals use periods.
pub fn write_curve_csv<W: Write>(
    out: &mut W,
    threshold_name: &str,
    thresholds: &[f64],
    fractions: &[f64],
) -> io::Result<()> {
    writeln!(out, "{threshold_name},fraction")?;
    for (t, f) in thresholds.iter().zip(fractions) {
        writeln!(out, "{t:.4},{f:.6}")?;
    }
    Ok(())
}

/// Key/value summary CSV.
pub fn write_metrics_csv<W: Write>(out: &mut W, result: &EvalResult) -> io::Result<()> {
    writeln!(out, "metric,value")?;
    writeln!(out, "frames,{}", result.overlaps.len())?;
    writeln!(out, "success_rate_at_0.5_pct,{:.6}", result.success_rate_at_half)?;
    writeln!(out, "mean_overlap,{:.6}", result.mean_overlap)?;
    writeln!(out, "mean_center_error_px,{:.6}", result.mean_center_error)?;
    writeln!(out, "mean_fps,{:.6}", result.mean_fps)?;
    Ok(())
}

/// Minimal SVG line plot of one curve (no raster dependencies).
pub fn write_curve_svg<W: Write>(
    out: &mut W,
    title: &str,
    x_label: &str,
    thresholds: &[f64],
    fractions: &[f64],
) -> io::Result<()> {
    const W_PX: f64 = 480.0;
    const H_PX: f64 = 360.0;
    const M: f64 = 48.0;
    let x_max = thresholds.last().copied().unwrap_or(1.0).max(1e-12);
    let px = |t: f64| M + (t / x_max) * (W_PX - 2.0 * M);
    let py = |f: f64| H_PX - M - f * (H_PX - 2.0 * M);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W_PX}" height="{H_PX}" viewBox="0 0 {W_PX} {H_PX}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>"#,
        W_PX / 2.0
    )?;
    // Axes
    writeln!(
        out,
        r#"<line x1="{M}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        H_PX - M,
        W_PX - M
    )?;
    writeln!(out, r#"<line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/>"#, H_PX - M)?;
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{x_label}</text>"#,
        W_PX / 2.0,
        H_PX - 12.0
    )?;
    writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11" transform="rotate(-90 14 {})">fraction</text>"#,
        H_PX / 2.0,
        H_PX / 2.0
    )?;
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{tick:.2}</text>"#,
            M - 4.0,
            py(tick) + 3.0
        )?;
        writeln!(
            out,
            r##"<line x1="{M}" y1="{0}" x2="{1}" y2="{0}" stroke="#ddd"/>"##,
            py(tick),
            W_PX - M
        )?;
    }
    let points: Vec<String> = thresholds
        .iter()
        .zip(fractions)
        .map(|(t, f)| format!("{:.2},{:.2}", px(*t), py(*f)))
        .collect();
    writeln!(
        out,
        r##"<polyline fill="none" stroke="#c0392b" stroke-width="2" points="{}"/>"##,
        points.join(" ")
    )?;
    writeln!(out, "</svg>")?;
    Ok(())
}
