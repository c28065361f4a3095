//! Deterministic synthetic sequences: a textured square gliding on a
//! sinusoidal path over per-frame noise, with exact ground truth. Used as
//! the self-contained test substrate for tracking and evaluation.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use welm_core::{BBox, GrayImage};

use crate::sequence::{render_ground_truth, write_pgm, SequenceSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    /// Peak displacement of the sinusoidal path, pixels.
    pub amplitude: f64,
    /// Background noise scale in gray levels.
    pub noise_sigma: f64,
    pub seed: u64,
    pub target_size: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            width: 320,
            height: 240,
            frames: 60,
            amplitude: 15.0,
            noise_sigma: 10.0,
            seed: 1,
            target_size: 40,
        }
    }
}

/// Analytic target position at frame `k` (top-left corner before integer
/// rounding): x swings at the base frequency, y at twice it.
pub fn analytic_path(p: &SynthParams, k: usize) -> (f64, f64) {
    let x0 = (p.width - p.target_size) as f64 / 2.0;
    let y0 = (p.height - p.target_size) as f64 / 2.0;
    let phase = k as f64 / p.frames.max(1) as f64 * std::f64::consts::TAU;
    (
        x0 + p.amplitude * phase.sin(),
        y0 + p.amplitude * (2.0 * phase + 1.3).sin(),
    )
}

fn validate(p: &SynthParams) -> Result<()> {
    if p.frames == 0 {
        bail!("frame count must be at least 1");
    }
    if p.target_size < 2 || p.target_size >= p.width.min(p.height) {
        bail!("target size {} does not fit a {}x{} frame", p.target_size, p.width, p.height);
    }
    let margin = ((p.width.min(p.height) - p.target_size) / 2) as f64;
    if p.amplitude < 0.0 || p.amplitude > margin {
        bail!("amplitude {} exceeds the {margin} px margin", p.amplitude);
    }
    Ok(())
}

/// Renders the whole sequence in memory together with its ground truth.
/// Deterministic given the parameters.
pub fn synth_frames(p: &SynthParams) -> Result<(Vec<GrayImage>, Vec<BBox>)> {
    validate(p)?;
    let ts = p.target_size;
    // Fixed target texture: checkerboard blocks with per-pixel grain.
    let tex: Vec<u8> = {
        let mut trng = ChaCha8Rng::seed_from_u64(p.seed ^ 0xA5A5_5A5A);
        (0..ts * ts)
            .map(|i| {
                let (x, y) = (i % ts, i / ts);
                let block = ((x / 8) + (y / 8)) % 2;
                let base: i32 = if block == 0 { 190 } else { 120 };
                (base + trng.random_range(-25..25)).clamp(0, 255) as u8
            })
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut frames = Vec::with_capacity(p.frames);
    let mut gt = Vec::with_capacity(p.frames);
    for k in 0..p.frames {
        let (fx, fy) = analytic_path(p, k);
        let bx = fx.round() as i32;
        let by = fy.round() as i32;
        let mut px = vec![0u8; (p.width * p.height) as usize];
        for v in px.iter_mut() {
            // Sum of three uniforms approximates a gaussian of the given
            // sigma closely enough for a noise background.
            let g: f64 = (0..3).map(|_| rng.random_range(-1.0..1.0f64)).sum::<f64>() * p.noise_sigma;
            *v = (90.0 + g).clamp(0.0, 255.0) as u8;
        }
        for yy in 0..ts {
            for xx in 0..ts {
                let dst = (by as u32 + yy) as usize * p.width as usize + (bx as u32 + xx) as usize;
                px[dst] = tex[(yy * ts + xx) as usize];
            }
        }
        frames.push(GrayImage::new(p.width, p.height, px)?);
        gt.push(BBox::new(bx, by, ts, ts));
    }
    Ok((frames, gt))
}

/// Writes the sequence to disk in OTB layout (`img/%04d.pgm` plus
/// `groundtruth_rect.txt`) and returns a spec pointing at it.
pub fn generate_synthetic(p: &SynthParams, out_dir: &Path) -> Result<SequenceSpec> {
    let (frames, gt) = synth_frames(p)?;
    let img_dir = out_dir.join("img");
    fs::create_dir_all(&img_dir)
        .with_context(|| format!("cannot create {}", img_dir.display()))?;
    for (k, frame) in frames.iter().enumerate() {
        let path = img_dir.join(format!("{:04}.pgm", k + 1));
        fs::write(&path, write_pgm(frame))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    let gt_path = out_dir.join("groundtruth_rect.txt");
    fs::write(&gt_path, render_ground_truth(&gt))
        .with_context(|| format!("cannot write {}", gt_path.display()))?;
    // Record the generating parameters next to the data so the fixture's
    // seed is always on disk.
    let params_echo = format!(
        "[synth]\nwidth = {}\nheight = {}\nframes = {}\namplitude = {}\nnoise_sigma = {}\nseed = {}\ntarget_size = {}\n",
        p.width, p.height, p.frames, p.amplitude, p.noise_sigma, p.seed, p.target_size
    );
    fs::write(out_dir.join("synth_params.cfg"), params_echo)?;
    Ok(SequenceSpec {
        image_dir: img_dir,
        pattern: Some("%04d.pgm".to_string()),
        start_index: 1,
        ground_truth: Some(gt_path),
        attributes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let p = SynthParams { frames: 3, width: 80, height: 60, target_size: 16, amplitude: 5.0, ..SynthParams::default() };
        let (f1, g1) = synth_frames(&p).unwrap();
        let (f2, g2) = synth_frames(&p).unwrap();
        assert_eq!(g1, g2);
        for (a, b) in f1.iter().zip(&f2) {
            assert_eq!(a.pixels(), b.pixels());
        }
    }

    #[test]
    fn zero_amplitude_keeps_the_box_constant() {
        let p = SynthParams { frames: 5, amplitude: 0.0, width: 80, height: 60, target_size: 16, ..SynthParams::default() };
        let (_, gt) = synth_frames(&p).unwrap();
        assert!(gt.iter().all(|b| *b == gt[0]));
    }

    #[test]
    fn ground_truth_follows_the_analytic_path() {
        let p = SynthParams { frames: 12, width: 120, height: 90, target_size: 20, amplitude: 9.0, ..SynthParams::default() };
        let (_, gt) = synth_frames(&p).unwrap();
        for (k, b) in gt.iter().enumerate() {
            let (fx, fy) = analytic_path(&p, k);
            assert_eq!(b.x, fx.round() as i32);
            assert_eq!(b.y, fy.round() as i32);
            assert_eq!((b.w, b.h), (p.target_size, p.target_size));
        }
    }

    #[test]
    fn target_pixels_are_the_fixed_texture() {
        let p = SynthParams { frames: 2, width: 80, height: 60, target_size: 16, amplitude: 4.0, ..SynthParams::default() };
        let (frames, gt) = synth_frames(&p).unwrap();
        // The same texture appears at both ground-truth positions.
        let read_patch = |img: &GrayImage, b: &BBox| -> Vec<u8> {
            let mut v = Vec::new();
            for yy in 0..b.h {
                for xx in 0..b.w {
                    v.push(img.get(b.x as u32 + xx, b.y as u32 + yy));
                }
            }
            v
        };
        assert_eq!(read_patch(&frames[0], &gt[0]), read_patch(&frames[1], &gt[1]));
    }

    #[test]
    fn oversized_amplitude_is_rejected() {
        let p = SynthParams { amplitude: 200.0, ..SynthParams::default() };
        assert!(synth_frames(&p).is_err());
    }
}
