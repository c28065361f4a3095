//! Sequence ingestion: portable gray/pixmap frames plus OTB-style
//! ground-truth files ("x,y,w,h" per line, 1-based coordinates).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use welm_core::{BBox, GrayImage};

/// Where a sequence's frames and annotations live.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub image_dir: PathBuf,
    /// printf-style frame pattern such as `%04d.pgm`; when absent the
    /// directory listing is used in name order.
    pub pattern: Option<String>,
    /// Index of the first frame when a pattern is used.
    pub start_index: usize,
    pub ground_truth: Option<PathBuf>,
    /// Free-form challenge tags carried through as metadata.
    pub attributes: Vec<String>,
}

impl SequenceSpec {
    /// OTB directory layout: `dir/img/` plus `dir/groundtruth_rect.txt`.
    pub fn from_otb_dir(dir: &Path) -> Self {
        SequenceSpec {
            image_dir: dir.join("img"),
            pattern: None,
            start_index: 1,
            ground_truth: Some(dir.join("groundtruth_rect.txt")),
            attributes: Vec::new(),
        }
    }
}

fn is_image_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with(".pgm") || lower.ends_with(".ppm") || lower.ends_with(".pnm")
}

/// Expands a `%0Nd`-style pattern for one index.
fn expand_pattern(pattern: &str, index: usize) -> Result<String> {
    let pos = pattern
        .find("%0")
        .ok_or_else(|| anyhow!("pattern {pattern:?} lacks a %0Nd field"))?;
    let rest = &pattern[pos + 2..];
    let d_pos = rest
        .find('d')
        .ok_or_else(|| anyhow!("pattern {pattern:?} lacks the closing d of %0Nd"))?;
    let width: usize = rest[..d_pos]
        .parse()
        .with_context(|| format!("bad width in pattern {pattern:?}"))?;
    Ok(format!(
        "{}{:0width$}{}",
        &pattern[..pos],
        index,
        &rest[d_pos + 1..],
        width = width
    ))
}

/// Resolves the ordered list of frame files for a sequence.
pub fn frame_paths(spec: &SequenceSpec) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    match &spec.pattern {
        Some(pattern) => {
            let mut index = spec.start_index;
            loop {
                let name = expand_pattern(pattern, index)?;
                let path = spec.image_dir.join(&name);
                if !path.is_file() {
                    break;
                }
                paths.push(path);
                index += 1;
            }
            if paths.is_empty() {
                bail!(
                    "no frame matched pattern {pattern:?} starting at {} under {}",
                    spec.start_index,
                    spec.image_dir.display()
                );
            }
        }
        None => {
            let entries = fs::read_dir(&spec.image_dir)
                .with_context(|| format!("cannot list {}", spec.image_dir.display()))?;
            for entry in entries {
                let path = entry?.path();
                if path.is_file()
                    && path.file_name().and_then(|n| n.to_str()).map(is_image_name) == Some(true)
                {
                    paths.push(path);
                }
            }
            paths.sort();
            if paths.is_empty() {
                bail!("no .pgm/.ppm frames under {}", spec.image_dir.display());
            }
        }
    }
    Ok(paths)
}

/// Reads one frame, converting color to gray by 0.299R + 0.587G + 0.114B.
pub fn load_frame(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).with_context(|| format!("cannot read frame {}", path.display()))?;
    parse_pnm(&bytes).with_context(|| format!("cannot parse {}", path.display()))
}

/// Minimal PNM parser: P2/P5 graymaps and P3/P6 pixmaps, 8-bit depth.
pub fn parse_pnm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cursor = 0usize;
    let magic = read_token(bytes, &mut cursor).ok_or_else(|| anyhow!("missing PNM magic"))?;
    let (color, ascii) = match magic.as_str() {
        "P5" => (false, false),
        "P2" => (false, true),
        "P6" => (true, false),
        "P3" => (true, true),
        other => bail!("unsupported PNM magic {other:?}"),
    };
    let width: u32 = parse_header_int(bytes, &mut cursor, "width")?;
    let height: u32 = parse_header_int(bytes, &mut cursor, "height")?;
    let maxval: u32 = parse_header_int(bytes, &mut cursor, "maxval")?;
    if maxval == 0 || maxval > 255 {
        bail!("unsupported maxval {maxval} (only 8-bit supported)");
    }
    let n = width as usize * height as usize;
    let channels = if color { 3 } else { 1 };
    let mut samples = Vec::with_capacity(n * channels);
    if ascii {
        while samples.len() < n * channels {
            let tok = read_token(bytes, &mut cursor)
                .ok_or_else(|| anyhow!("truncated ASCII pixel data"))?;
            let v: u32 = tok.parse().with_context(|| format!("bad sample {tok:?}"))?;
            if v > maxval {
                bail!("sample {v} exceeds maxval {maxval}");
            }
            samples.push(v as u8);
        }
    } else {
        // Binary data starts after exactly one whitespace byte.
        let data = &bytes[cursor..];
        if data.len() < n * channels {
            bail!("truncated binary pixel data: {} < {}", data.len(), n * channels);
        }
        samples.extend_from_slice(&data[..n * channels]);
    }
    let pixels: Vec<u8> = if color {
        samples
            .chunks_exact(3)
            .map(|rgb| {
                let y = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
                y.round().clamp(0.0, 255.0) as u8
            })
            .collect()
    } else {
        samples
    };
    Ok(GrayImage::new(width, height, pixels)?)
}

fn read_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    // Skip whitespace and # comments.
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
        } else {
            break;
        }
    }
    if *cursor >= bytes.len() {
        return None;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    let token = String::from_utf8_lossy(&bytes[start..*cursor]).into_owned();
    // Consume the single whitespace that terminates the token (relevant
    // before binary data).
    if *cursor < bytes.len() {
        *cursor += 1;
    }
    Some(token)
}

fn parse_header_int(bytes: &[u8], cursor: &mut usize, what: &str) -> Result<u32> {
    let tok = read_token(bytes, cursor).ok_or_else(|| anyhow!("missing {what}"))?;
    tok.parse().with_context(|| format!("bad {what} {tok:?}"))
}

/// Serializes a frame as binary P5.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Parses an OTB ground-truth file: one box per line, fields separated by
/// commas, tabs, or spaces, 1-based corner converted to 0-based.
pub fn load_ground_truth(path: &Path) -> Result<Vec<BBox>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read ground truth {}", path.display()))?;
    parse_ground_truth(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<BBox>> {
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split([',', '\t', ' '])
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 4 {
            bail!("line {}: expected 4 fields, got {}", lineno + 1, fields.len());
        }
        let parse = |s: &str, what: &str| -> Result<i64> {
            // Some OTB annotations carry fractional values; accept and round.
            s.parse::<i64>()
                .or_else(|_| s.parse::<f64>().map(|v| v.round() as i64))
                .map_err(|_| anyhow!("line {}: bad {what} {s:?}", lineno + 1))
        };
        let x = parse(fields[0], "x")?;
        let y = parse(fields[1], "y")?;
        let w = parse(fields[2], "w")?;
        let h = parse(fields[3], "h")?;
        if w < 1 || h < 1 {
            bail!("line {}: degenerate box {w}x{h}", lineno + 1);
        }
        boxes.push(BBox::new((x - 1) as i32, (y - 1) as i32, w as u32, h as u32));
    }
    if boxes.is_empty() {
        bail!("ground-truth file holds no boxes");
    }
    Ok(boxes)
}

/// Writes ground truth in the same 1-based format the loader accepts.
pub fn render_ground_truth(boxes: &[BBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format!("{},{},{},{}\n", b.x + 1, b.y + 1, b.w, b.h));
    }
    out
}
