//! Grayscale integral images, multiscale rectangle filters, and the sparse
//! random projection that compresses window responses to a short feature
//! vector.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::geometry::BBox;

/// Row-major 8-bit grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(CoreError::DimensionMismatch {
                expected: format!("{} pixels", width as usize * height as usize),
                got: format!("{}", pixels.len()),
            });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Summed-area table. Entry (i, j) holds the sum of all pixels with x < i
/// and y < j, so the first row and column are zero and any rectangle sum
/// costs four lookups.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    table: Vec<u64>,
}

pub fn integral_image(img: &GrayImage) -> IntegralImage {
    let w = img.width() as usize;
    let h = img.height() as usize;
    let stride = w + 1;
    let mut table = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u64;
        for x in 0..w {
            row_sum += img.pixels()[y * w + x] as u64;
            table[(y + 1) * stride + (x + 1)] = table[y * stride + (x + 1)] + row_sum;
        }
    }
    IntegralImage { width: img.width(), height: img.height(), table }
}

impl IntegralImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> u64 {
        self.table[j * (self.width as usize + 1) + i]
    }

    /// Raw pixel sum over [x, x+w) × [y, y+h). Bounds are the caller's
    /// responsibility here; use `rect_sum` for the checked, normalized form.
    #[inline]
    pub fn rect_sum_raw(&self, x: u32, y: u32, w: u32, h: u32) -> u64 {
        let (x, y, w, h) = (x as usize, y as usize, w as usize, h as usize);
        self.at(x + w, y + h) + self.at(x, y) - self.at(x + w, y) - self.at(x, y + h)
    }
}

/// One rectangle of the multiscale filter bank, positioned relative to the
/// tracking window's top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RectFilter {
    /// Offset inside the window.
    pub dx: u32,
    pub dy: u32,
    /// Rectangle size.
    pub w: u32,
    pub h: u32,
}

/// Mean intensity of the filter rectangle placed at `window_origin`:
/// pixel sum divided by the rectangle area, so responses of different
/// filter scales share one dynamic range.
pub fn rect_sum(ii: &IntegralImage, window_origin: (u32, u32), f: &RectFilter) -> Result<f64> {
    let x = window_origin.0 as u64 + f.dx as u64;
    let y = window_origin.1 as u64 + f.dy as u64;
    if f.w == 0 || f.h == 0 {
        return Err(CoreError::InvalidParameter("zero-size rectangle filter".into()));
    }
    if x + f.w as u64 > ii.width() as u64 || y + f.h as u64 > ii.height() as u64 {
        return Err(CoreError::OutOfBounds(format!(
            "filter {}x{} at ({x},{y}) exceeds image {}x{}",
            f.w,
            f.h,
            ii.width(),
            ii.height()
        )));
    }
    let sum = ii.rect_sum_raw(x as u32, y as u32, f.w, f.h);
    Ok(sum as f64 / (f.w as u64 * f.h as u64) as f64)
}

/// One nonzero entry of a projection row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionEntry {
    pub filter: RectFilter,
    pub weight: f64,
}

/// Sparse random measurement matrix, stored as per-row lists of
/// (rectangle, weight) pairs. Generated once at the first frame and
/// immutable for the rest of the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseProjection {
    feature_dim: usize,
    window_w: u32,
    window_h: u32,
    seed: u64,
    rows: Vec<Vec<ProjectionEntry>>,
}

impl SparseProjection {
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn window_w(&self) -> u32 {
        self.window_w
    }

    pub fn window_h(&self) -> u32 {
        self.window_h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> &[Vec<ProjectionEntry>] {
        &self.rows
    }
}

/// Draws the sparse projection: for each of the `v` output features, 2–4
/// rectangles with uniformly random sizes and offsets fitting the window,
/// each weighted ±√τ with equal probability, τ = window area / 4.
/// Deterministic given the seed.
pub fn generate_projection(seed: u64, v: usize, window_w: u32, window_h: u32) -> SparseProjection {
    assert!(v >= 1, "feature dimension must be at least 1");
    assert!(window_w >= 2 && window_h >= 2, "window must be at least 2x2");
    let tau = (window_w as f64 * window_h as f64) / 4.0;
    let magnitude = tau.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..v)
        .map(|_| {
            let c = rng.random_range(2..=4usize);
            (0..c)
                .map(|_| {
                    let w = rng.random_range(1..=window_w);
                    let h = rng.random_range(1..=window_h);
                    let dx = rng.random_range(0..=window_w - w);
                    let dy = rng.random_range(0..=window_h - h);
                    let weight = if rng.random_bool(0.5) { magnitude } else { -magnitude };
                    ProjectionEntry { filter: RectFilter { dx, dy, w, h }, weight }
                })
                .collect()
        })
        .collect();
    SparseProjection { feature_dim: v, window_w, window_h, seed, rows }
}

/// Feature vector of a window: component k is the weighted sum of the
/// row-k rectangle responses evaluated at the box origin.
pub fn extract_features(ii: &IntegralImage, bbox: &BBox, proj: &SparseProjection) -> Result<Vec<f64>> {
    if bbox.w != proj.window_w || bbox.h != proj.window_h {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{}x{} window", proj.window_w, proj.window_h),
            got: format!("{}x{} box", bbox.w, bbox.h),
        });
    }
    if bbox.x < 0 || bbox.y < 0 || !bbox.fits_in(ii.width(), ii.height()) {
        return Err(CoreError::OutOfBounds(format!(
            "box at ({},{}) size {}x{} outside {}x{} image",
            bbox.x,
            bbox.y,
            bbox.w,
            bbox.h,
            ii.width(),
            ii.height()
        )));
    }
    let origin = (bbox.x as u32, bbox.y as u32);
    let mut out = Vec::with_capacity(proj.feature_dim);
    for row in &proj.rows {
        let mut acc = 0.0;
        for entry in row {
            acc += entry.weight * rect_sum(ii, origin, &entry.filter)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Features of many boxes stacked as matrix rows (one row per box, in the
/// given order).
pub fn extract_feature_matrix(
    ii: &IntegralImage,
    boxes: &[BBox],
    proj: &SparseProjection,
) -> Result<DMatrix<f64>> {
    if boxes.is_empty() {
        return Err(CoreError::EmptyInput("no boxes to extract".into()));
    }
    let mut m = DMatrix::<f64>::zeros(boxes.len(), proj.feature_dim);
    for (i, b) in boxes.iter().enumerate() {
        let feats = extract_features(ii, b, proj)?;
        for (j, v) in feats.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn random_image(seed: u64, w: u32, h: u32) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| (rng.next_u32() % 256) as u8)
    }

    /// Naive double-loop pixel sum, the oracle for all integral-image math.
    fn naive_rect_sum(img: &GrayImage, x: u32, y: u32, w: u32, h: u32) -> u64 {
        let mut s = 0u64;
        for yy in y..y + h {
            for xx in x..x + w {
                s += img.get(xx, yy) as u64;
            }
        }
        s
    }

    #[test]
    fn zero_image_gives_zero_table() {
        let img = GrayImage::from_fn(4, 4, |_, _| 0);
        let ii = integral_image(&img);
        assert!(ii.table.iter().all(|&v| v == 0));
    }

    #[test]
    fn ones_image_corner_is_the_pixel_count() {
        let img = GrayImage::from_fn(2, 2, |_, _| 1);
        let ii = integral_image(&img);
        assert_eq!(ii.at(2, 2), 4);
        assert_eq!(ii.at(1, 1), 1);
        assert_eq!(ii.at(0, 2), 0);
    }

    #[test]
    fn every_rectangle_matches_naive_summation() {
        let img = random_image(11, 8, 8);
        let ii = integral_image(&img);
        for y in 0..8u32 {
            for x in 0..8u32 {
                for h in 1..=8 - y {
                    for w in 1..=8 - x {
                        assert_eq!(ii.rect_sum_raw(x, y, w, h), naive_rect_sum(&img, x, y, w, h));
                    }
                }
            }
        }
    }

    #[test]
    fn constant_image_rect_sum_is_the_constant() {
        let img = GrayImage::from_fn(16, 16, |_, _| 7);
        let ii = integral_image(&img);
        for f in [
            RectFilter { dx: 0, dy: 0, w: 1, h: 1 },
            RectFilter { dx: 3, dy: 2, w: 5, h: 9 },
            RectFilter { dx: 0, dy: 0, w: 16, h: 16 },
        ] {
            assert_eq!(rect_sum(&ii, (0, 0), &f).unwrap(), 7.0);
        }
    }

    #[test]
    fn unit_filter_reads_single_pixels() {
        let img = random_image(3, 6, 6);
        let ii = integral_image(&img);
        let f = RectFilter { dx: 0, dy: 0, w: 1, h: 1 };
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(rect_sum(&ii, (x, y), &f).unwrap(), img.get(x, y) as f64);
            }
        }
    }

    #[test]
    fn out_of_image_rectangle_is_an_error() {
        let img = random_image(5, 10, 10);
        let ii = integral_image(&img);
        let f = RectFilter { dx: 8, dy: 0, w: 4, h: 2 };
        assert!(matches!(rect_sum(&ii, (0, 0), &f), Err(CoreError::OutOfBounds(_))));
    }

    #[test]
    fn normalized_rect_sum_matches_naive_mean() {
        let img = random_image(17, 32, 24);
        let ii = integral_image(&img);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let w = rng.random_range(1..=10u32);
            let h = rng.random_range(1..=10u32);
            let x = rng.random_range(0..=32 - w);
            let y = rng.random_range(0..=24 - h);
            let f = RectFilter { dx: 0, dy: 0, w, h };
            let got = rect_sum(&ii, (x, y), &f).unwrap();
            let expect = naive_rect_sum(&img, x, y, w, h) as f64 / (w * h) as f64;
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn projection_is_deterministic_per_seed() {
        let a = generate_projection(42, 50, 30, 30);
        let b = generate_projection(42, 50, 30, 30);
        assert_eq!(a, b);
        let c = generate_projection(43, 50, 30, 30);
        assert_ne!(a, c);
    }

    #[test]
    fn projection_rows_have_two_to_four_entries() {
        let p = generate_projection(7, 50, 40, 40);
        assert_eq!(p.rows().len(), 50);
        let tau = (40.0f64 * 40.0) / 4.0;
        for row in p.rows() {
            assert!((2..=4).contains(&row.len()));
            for e in row {
                assert_eq!(e.weight.abs(), tau.sqrt());
                assert!(e.filter.dx + e.filter.w <= 40);
                assert!(e.filter.dy + e.filter.h <= 40);
                assert!(e.filter.w >= 1 && e.filter.h >= 1);
            }
        }
    }

    #[test]
    fn projection_weight_signs_are_balanced() {
        // Enough rows for ~10^4 weights; mean should sit within three
        // standard errors of zero.
        let p = generate_projection(5, 4000, 20, 20);
        let weights: Vec<f64> = p.rows().iter().flatten().map(|e| e.weight).collect();
        assert!(weights.len() > 8000);
        let n = weights.len() as f64;
        let mean = weights.iter().sum::<f64>() / n;
        let magnitude = (20.0f64 * 20.0 / 4.0).sqrt();
        let se = magnitude / n.sqrt();
        assert!(
            mean.abs() < 3.0 * se,
            "weight mean {mean} outside 3 standard errors ({se})"
        );
    }

    #[test]
    fn zero_image_maps_to_zero_features() {
        let img = GrayImage::from_fn(50, 50, |_, _| 0);
        let ii = integral_image(&img);
        let p = generate_projection(1, 50, 20, 20);
        let f = extract_features(&ii, &BBox::new(10, 10, 20, 20), &p).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_features_scale_with_row_weight_sums() {
        let g = 13u8;
        let img = GrayImage::from_fn(40, 40, |_, _| g);
        let ii = integral_image(&img);
        let p = generate_projection(2, 20, 16, 16);
        let f = extract_features(&ii, &BBox::new(5, 7, 16, 16), &p).unwrap();
        for (k, row) in p.rows().iter().enumerate() {
            let expect = g as f64 * row.iter().map(|e| e.weight).sum::<f64>();
            assert!((f[k] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let img = random_image(1, 40, 40);
        let ii = integral_image(&img);
        let p = generate_projection(2, 10, 16, 16);
        let r = extract_features(&ii, &BBox::new(0, 0, 17, 16), &p);
        assert!(matches!(r, Err(CoreError::DimensionMismatch { .. })));
    }

    /// Dense materialization oracle: enumerate every rectangle of the
    /// window, build the dense projection matrix over that basis, and apply
    /// it to the full normalized-response vector.
    #[test]
    fn features_match_dense_matrix_reconstruction() {
        let win = 8u32;
        let img = random_image(23, 30, 30);
        let ii = integral_image(&img);
        let p = generate_projection(31, 12, win, win);
        let bbox = BBox::new(4, 9, win, win);

        // Enumerate all rectangles (w, h, dx, dy) in a fixed order.
        let mut rects = Vec::new();
        for w in 1..=win {
            for h in 1..=win {
                for dy in 0..=win - h {
                    for dx in 0..=win - w {
                        rects.push(RectFilter { dx, dy, w, h });
                    }
                }
            }
        }
        let index_of = |f: &RectFilter| rects.iter().position(|r| r == f).unwrap();

        // Full multiscale response of the window (area-normalized).
        let response: Vec<f64> = rects
            .iter()
            .map(|f| rect_sum(&ii, (bbox.x as u32, bbox.y as u32), f).unwrap())
            .collect();

        // Dense matrix: accumulate weights (rows may repeat a rectangle).
        let mut dense = vec![vec![0.0f64; rects.len()]; p.feature_dim()];
        for (k, row) in p.rows().iter().enumerate() {
            for e in row {
                dense[k][index_of(&e.filter)] += e.weight;
            }
        }

        let got = extract_features(&ii, &bbox, &p).unwrap();
        for k in 0..p.feature_dim() {
            let expect: f64 = dense[k].iter().zip(&response).map(|(a, b)| a * b).sum();
            assert!((got[k] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn feature_matrix_rows_match_single_extraction() {
        let img = random_image(8, 60, 60);
        let ii = integral_image(&img);
        let p = generate_projection(3, 15, 12, 12);
        let boxes = vec![BBox::new(0, 0, 12, 12), BBox::new(20, 30, 12, 12), BBox::new(48, 48, 12, 12)];
        let m = extract_feature_matrix(&ii, &boxes, &p).unwrap();
        for (i, b) in boxes.iter().enumerate() {
            let f = extract_features(&ii, b, &p).unwrap();
            for (j, v) in f.iter().enumerate() {
                assert_eq!(m[(i, j)], *v);
            }
        }
    }
}
