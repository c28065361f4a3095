//! Bounding boxes and the ring-shaped positive/negative sampling grids.

use crate::error::{CoreError, Result};

/// Axis-aligned rectangle in integer pixel coordinates. `x`/`y` is the
/// top-left corner, `w`/`h` the size in pixels (always ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: i32,
    pub y: i32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: i32, y: i32, w: u32, h: u32) -> Self {
        debug_assert!(w >= 1 && h >= 1, "degenerate box {w}x{h}");
        BBox { x, y, w, h }
    }

    /// Center in real coordinates: (x + w/2, y + h/2).
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// Exclusive right edge.
    pub fn right(&self) -> i64 {
        self.x as i64 + self.w as i64
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> i64 {
        self.y as i64 + self.h as i64
    }

    pub fn translated(&self, dx: i32, dy: i32) -> BBox {
        BBox { x: self.x + dx, y: self.y + dy, ..*self }
    }

    /// True when the box lies fully inside a frame of the given size.
    pub fn fits_in(&self, frame_w: u32, frame_h: u32) -> bool {
        self.x >= 0
            && self.y >= 0
            && self.right() <= frame_w as i64
            && self.bottom() <= frame_h as i64
    }
}

/// Squared distance between the centers of two boxes, in squared pixels.
pub fn center_distance_sq(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let dx = ax - bx;
    let dy = ay - by;
    dx * dx + dy * dy
}

/// Intersection-over-union of two boxes. 0 when disjoint, 1 when identical.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = a.x.max(b.x) as i64;
    let iy = a.y.max(b.y) as i64;
    let ir = a.right().min(b.right());
    let ib = a.bottom().min(b.bottom());
    let iw = (ir - ix).max(0) as u64;
    let ih = (ib - iy).max(0) as u64;
    let inter = iw * ih;
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Annulus sampling grid: offsets on a `step` grid inside the clamp
/// rectangle whose squared displacement lies strictly between `r_lo²`
/// and `r_hi²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingSpec {
    pub r_lo: u32,
    pub r_hi: u32,
    pub clamp_half_width_x: u32,
    pub clamp_half_width_y: u32,
    pub step: u32,
}

impl RingSpec {
    pub fn new(r_lo: u32, r_hi: u32, clamp_half_width_x: u32, clamp_half_width_y: u32, step: u32) -> Self {
        debug_assert!(step >= 1);
        RingSpec { r_lo, r_hi, clamp_half_width_x, clamp_half_width_y, step }
    }
}

/// Every translation of `center` by (dx, dy) on the step grid within the
/// clamp rectangle whose squared center displacement sD satisfies
/// r_lo² < sD < r_hi² (both strict) and which lies fully inside the frame.
///
/// Offsets are visited row-major (dy outer, dx inner, most negative first),
/// so the output order is deterministic. An empty result is legal.
pub fn sample_ring(center: &BBox, spec: &RingSpec, frame_w: u32, frame_h: u32) -> Vec<BBox> {
    let step = spec.step.max(1) as i32;
    let kx = (spec.clamp_half_width_x / spec.step.max(1)) as i32;
    let ky = (spec.clamp_half_width_y / spec.step.max(1)) as i32;
    let lo_sq = spec.r_lo as i64 * spec.r_lo as i64;
    let hi_sq = spec.r_hi as i64 * spec.r_hi as i64;

    let mut out = Vec::new();
    for jy in -ky..=ky {
        let dy = jy * step;
        for jx in -kx..=kx {
            let dx = jx * step;
            let s_d = dx as i64 * dx as i64 + dy as i64 * dy as i64;
            if s_d <= lo_sq || s_d >= hi_sq {
                continue;
            }
            let b = center.translated(dx, dy);
            if b.fits_in(frame_w, frame_h) {
                out.push(b);
            }
        }
    }
    out
}

/// Dense square grid of translations within ±radius (step 1), in-frame,
/// row-major. The zero offset is included, so the center box itself is a
/// candidate whenever it fits the frame.
pub fn sample_grid(center: &BBox, radius: u32, frame_w: u32, frame_h: u32) -> Vec<BBox> {
    let r = radius as i32;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let b = center.translated(dx, dy);
            if b.fits_in(frame_w, frame_h) {
                out.push(b);
            }
        }
    }
    out
}

pub fn ring_sample_error() -> CoreError {
    CoreError::EmptyInput("ring produced no samples".into())
}

/// Convenience constructor guard for callers that require nonempty rings.
pub fn require_nonempty(samples: Vec<BBox>) -> Result<Vec<BBox>> {
    if samples.is_empty() {
        Err(ring_sample_error())
    } else {
        Ok(samples)
    }
}
