//! Per-frame tracking loop: score a dense candidate grid around the last
//! position, vote for the new target box, resample the rings around it,
//! and fold the fresh samples into the online classifier.

use std::io::{Read, Write};
use std::time::Instant;

use crate::elm::{init_hidden, Activation, HiddenLayer};
use crate::error::{CoreError, Result};
use crate::features::{
    extract_feature_matrix, generate_projection, integral_image, GrayImage, SparseProjection,
};
use crate::geometry::{sample_grid, sample_ring, BBox, RingSpec};
use crate::selector::{select_target, Candidate, SelectorConfig, VoteDiagnostics};
use crate::woselm::{label_matrix, woselm_init, Label, RegularizerMode, RhoMode, WoselmState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Positive sampling annulus around the target (radii 0..2, step 1,
    /// clamp ±10).
    pub pos_ring: RingSpec,
    /// Negative sampling annulus (radii 8..30, step 1, clamp ±70).
    pub neg_ring: RingSpec,
    /// Half-width of the square candidate grid searched per frame.
    pub search_radius: u32,
    /// Compressed feature dimension v.
    pub feature_dim: usize,
    pub n_hidden: usize,
    /// Ridge strength; the regularizer is I/(2C), so larger C regularizes
    /// less.
    pub c: f64,
    pub seed_projection: u64,
    pub seed_hidden: u64,
    pub activation: Activation,
    pub selector: SelectorConfig,
    pub regularizer_mode: RegularizerMode,
    pub rho_mode: RhoMode,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            pos_ring: RingSpec::new(0, 2, 10, 10, 1),
            neg_ring: RingSpec::new(8, 30, 70, 70, 1),
            search_radius: 20,
            feature_dim: 50,
            n_hidden: 300,
            // Weak ridge keeps the fitted positives pinned near +1, which
            // sharpens the candidate score peak; strong regularization
            // flattens it and lets vote rounding wander.
            c: 1e4,
            seed_projection: 17,
            seed_hidden: 23,
            activation: Activation::Sigmoid,
            selector: SelectorConfig::default(),
            regularizer_mode: RegularizerMode::Accumulate,
            rho_mode: RhoMode::RatioDrift,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pos_ring.r_hi > self.neg_ring.r_lo {
            return Err(CoreError::InvalidParameter(format!(
                "rings overlap: positive r_hi {} > negative r_lo {}",
                self.pos_ring.r_hi, self.neg_ring.r_lo
            )));
        }
        if self.search_radius < 1 {
            return Err(CoreError::InvalidParameter("search radius must be >= 1".into()));
        }
        if self.feature_dim < 1 || self.n_hidden < 1 {
            return Err(CoreError::InvalidParameter("dimensions must be >= 1".into()));
        }
        if self.c.is_nan() || self.c <= 0.0 {
            return Err(CoreError::InvalidParameter("C must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub candidate_count: usize,
    pub rho_raw: f64,
    pub rho_used: f64,
    pub votes: VoteDiagnostics,
    pub max_score: f64,
    /// True when no candidate could be generated and the previous box was
    /// held.
    pub held: bool,
    pub single_category_fallback: bool,
    pub elapsed_ms: f64,
}

/// Per-frame output row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub frame: usize,
    pub bbox: BBox,
    pub max_score: f64,
    pub rho: f64,
    pub ms: f64,
}

#[derive(Clone)]
pub struct TrackerState {
    pub config: TrackerConfig,
    pub projection: SparseProjection,
    pub hidden: HiddenLayer,
    pub model: WoselmState,
    pub current_box: BBox,
    pub frame_index: usize,
    pub frame_w: u32,
    pub frame_h: u32,
    /// RMS of the init-frame feature matrix, folded into the hidden input
    /// weights once so pre-activations sit in the sigmoid's responsive
    /// range regardless of image intensity scale.
    pub feature_scale: f64,
}

/// Ring samples for training: the positive annulus plus the tracked box
/// itself (the strict inner radius excludes the zero offset), then the
/// negative annulus.
fn training_samples(
    cfg: &TrackerConfig,
    around: &BBox,
    frame_w: u32,
    frame_h: u32,
) -> (Vec<BBox>, usize) {
    let mut pos = sample_ring(around, &cfg.pos_ring, frame_w, frame_h);
    pos.push(*around);
    let n_pos = pos.len();
    let neg = sample_ring(around, &cfg.neg_ring, frame_w, frame_h);
    pos.extend(neg);
    (pos, n_pos)
}

fn labels_for(n_pos: usize, total: usize) -> Vec<Label> {
    let mut labels = vec![Label::Pos; n_pos];
    labels.extend(std::iter::repeat_n(Label::Neg, total - n_pos));
    labels
}

/// Builds the tracker from the hand-labeled first frame: draws the
/// projection and hidden layer from the config seeds, samples both rings
/// around `box0`, and trains the initial weighted model.
pub fn init(frame0: &GrayImage, box0: BBox, config: TrackerConfig) -> Result<TrackerState> {
    config.validate()?;
    if !box0.fits_in(frame0.width(), frame0.height()) {
        return Err(CoreError::OutOfBounds(format!(
            "initial box ({},{},{},{}) outside {}x{} frame",
            box0.x,
            box0.y,
            box0.w,
            box0.h,
            frame0.width(),
            frame0.height()
        )));
    }
    if box0.w < 2 || box0.h < 2 {
        return Err(CoreError::InvalidParameter(format!(
            "tracking window {}x{} too small for the filter bank",
            box0.w, box0.h
        )));
    }
    let projection =
        generate_projection(config.seed_projection, config.feature_dim, box0.w, box0.h);
    let ii = integral_image(frame0);
    let (samples, n_pos) = training_samples(&config, &box0, frame0.width(), frame0.height());
    if samples.len() == n_pos {
        return Err(CoreError::EmptyInput(
            "negative ring produced no samples (frame too small)".into(),
        ));
    }
    let x = extract_feature_matrix(&ii, &samples, &projection)?;
    // Raw integral-image features carry the image intensity scale; dividing
    // the hidden weights by the init-frame RMS keeps the sigmoids out of
    // saturation, where candidate scores collapse onto coarse plateaus.
    let feature_scale = (x.norm_squared() / (x.nrows() * x.ncols()) as f64)
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let hidden = scaled_hidden(&config, feature_scale);
    let h = crate::elm::hidden_map(&hidden, &x)?;
    let labels = labels_for(n_pos, samples.len());
    let t = label_matrix(&labels);
    let model = woselm_init(
        &h,
        &t,
        &labels,
        config.c,
        config.regularizer_mode,
        config.rho_mode,
    )?;
    Ok(TrackerState {
        config,
        projection,
        hidden,
        model,
        current_box: box0,
        frame_index: 0,
        frame_w: frame0.width(),
        frame_h: frame0.height(),
        feature_scale,
    })
}

fn scaled_hidden(config: &TrackerConfig, feature_scale: f64) -> HiddenLayer {
    let mut hidden = init_hidden(
        config.seed_hidden,
        config.feature_dim,
        config.n_hidden,
        config.activation,
    );
    hidden.input_weights /= feature_scale;
    hidden
}

impl TrackerState {
    /// Runs one frame: detect, select, resample, update. Returns the new
    /// box and diagnostics.
    pub fn step(&mut self, frame: &GrayImage) -> Result<(BBox, StepDiagnostics)> {
        let start = Instant::now();
        if frame.width() != self.frame_w || frame.height() != self.frame_h {
            return Err(CoreError::DimensionMismatch {
                expected: format!("{}x{} frame", self.frame_w, self.frame_h),
                got: format!("{}x{}", frame.width(), frame.height()),
            });
        }
        let ii = integral_image(frame);
        let boxes = sample_grid(&self.current_box, self.config.search_radius, self.frame_w, self.frame_h);
        if boxes.is_empty() {
            // No candidate fits the frame; hold the previous position.
            self.frame_index += 1;
            return Ok((
                self.current_box,
                StepDiagnostics {
                    candidate_count: 0,
                    rho_raw: f64::NAN,
                    rho_used: 0.0,
                    votes: VoteDiagnostics::default(),
                    max_score: f64::NAN,
                    held: true,
                    single_category_fallback: false,
                    elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                },
            ));
        }

        let x = extract_feature_matrix(&ii, &boxes, &self.projection)?;
        let (scores, _) = self.model.predict(&self.hidden, &x)?;
        let candidates: Vec<Candidate> = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                Candidate::from_scores(*b, (0..scores.ncols()).map(|j| scores[(i, j)]).collect())
            })
            .collect();
        let (chosen, votes) = select_target(&candidates, &self.config.selector)?;
        let new_box = candidates[chosen].bbox;
        let max_score = candidates[chosen].max_score;

        let (samples, n_pos) = training_samples(&self.config, &new_box, self.frame_w, self.frame_h);
        let xs = extract_feature_matrix(&ii, &samples, &self.projection)?;
        let hs = crate::elm::hidden_map(&self.hidden, &xs)?;
        let labels = labels_for(n_pos, samples.len());
        let ts = label_matrix(&labels);
        let info = self.model.update(&hs, &ts, &labels)?;

        self.current_box = new_box;
        self.frame_index += 1;
        Ok((
            new_box,
            StepDiagnostics {
                candidate_count: candidates.len(),
                rho_raw: info.rho_raw,
                rho_used: info.rho_used,
                votes,
                max_score,
                held: false,
                single_category_fallback: info.single_category_fallback,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            },
        ))
    }

    /// Serializes enough state to resume a run: frame geometry, position,
    /// frame index, and the classifier blob. The projection and hidden
    /// layer are regenerated from the config seeds on load.
    pub fn save_checkpoint<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(b"WTCK")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&self.frame_w.to_le_bytes())?;
        out.write_all(&self.frame_h.to_le_bytes())?;
        out.write_all(&(self.frame_index as u64).to_le_bytes())?;
        out.write_all(&self.current_box.x.to_le_bytes())?;
        out.write_all(&self.current_box.y.to_le_bytes())?;
        out.write_all(&self.current_box.w.to_le_bytes())?;
        out.write_all(&self.current_box.h.to_le_bytes())?;
        out.write_all(&self.feature_scale.to_le_bytes())?;
        self.model.write_to(out)
    }

    pub fn load_checkpoint<R: Read>(config: TrackerConfig, input: &mut R) -> Result<TrackerState> {
        config.validate()?;
        let mut magic = [0u8; 4];
        read_bytes(input, &mut magic)?;
        if &magic != b"WTCK" {
            return Err(CoreError::InvalidState("bad checkpoint magic".into()));
        }
        let mut b4 = [0u8; 4];
        read_bytes(input, &mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != 1 {
            return Err(CoreError::InvalidState(format!("unsupported checkpoint version {version}")));
        }
        read_bytes(input, &mut b4)?;
        let frame_w = u32::from_le_bytes(b4);
        read_bytes(input, &mut b4)?;
        let frame_h = u32::from_le_bytes(b4);
        let mut b8 = [0u8; 8];
        read_bytes(input, &mut b8)?;
        let frame_index = u64::from_le_bytes(b8) as usize;
        read_bytes(input, &mut b4)?;
        let x = i32::from_le_bytes(b4);
        read_bytes(input, &mut b4)?;
        let y = i32::from_le_bytes(b4);
        read_bytes(input, &mut b4)?;
        let w = u32::from_le_bytes(b4);
        read_bytes(input, &mut b4)?;
        let h = u32::from_le_bytes(b4);
        let mut b8f = [0u8; 8];
        read_bytes(input, &mut b8f)?;
        let feature_scale = f64::from_le_bytes(b8f);
        if feature_scale.is_nan() || feature_scale <= 0.0 {
            return Err(CoreError::InvalidState("nonpositive feature scale".into()));
        }
        let model = WoselmState::read_from(input)?;
        let current_box = BBox::new(x, y, w, h);
        let projection =
            generate_projection(config.seed_projection, config.feature_dim, w, h);
        let hidden = scaled_hidden(&config, feature_scale);
        Ok(TrackerState {
            config,
            projection,
            hidden,
            model,
            current_box,
            frame_index,
            frame_w,
            frame_h,
            feature_scale,
        })
    }
}

fn read_bytes<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| CoreError::InvalidState(format!("truncated checkpoint: {e}")))
}

/// Tracks a whole in-memory sequence. The first frame initializes the
/// model; its record carries the given box and the init time.
pub fn track_sequence<I>(frames: I, box0: BBox, config: TrackerConfig) -> Result<Vec<TrackRecord>>
where
    I: IntoIterator<Item = GrayImage>,
{
    let mut iter = frames.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| CoreError::EmptyInput("sequence has no frames".into()))?;
    let start = Instant::now();
    let mut state = init(&first, box0, config).map_err(|e| CoreError::AtFrame(0, Box::new(e)))?;
    let mut records = vec![TrackRecord {
        frame: 0,
        bbox: box0,
        max_score: 0.0,
        rho: 0.0,
        ms: start.elapsed().as_secs_f64() * 1e3,
    }];
    for (i, frame) in iter.enumerate() {
        let frame_no = i + 1;
        let (bbox, diag) = state
            .step(&frame)
            .map_err(|e| CoreError::AtFrame(frame_no, Box::new(e)))?;
        records.push(TrackRecord {
            frame: frame_no,
            bbox,
            max_score: diag.max_score,
            rho: diag.rho_used,
            ms: diag.elapsed_ms,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Small config so unit tests stay fast; the defaults are exercised by
    /// the acceptance suite.
    fn small_config() -> TrackerConfig {
        TrackerConfig {
            neg_ring: RingSpec::new(8, 16, 20, 20, 1),
            search_radius: 6,
            feature_dim: 25,
            n_hidden: 60,
            ..TrackerConfig::default()
        }
    }

    /// Bright textured square on a dark noisy background.
    fn scene(seed: u64, w: u32, h: u32, target: &BBox) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = GrayImage::from_fn(w, h, |_, _| 40 + (rng.random_range(0..20u32)) as u8);
        let mut tex = ChaCha8Rng::seed_from_u64(999);
        let mut pixels = img.pixels().to_vec();
        for yy in 0..target.h {
            for xx in 0..target.w {
                let v = 150 + tex.random_range(0..80u32) as u8;
                let px = (target.y as u32 + yy) as usize * w as usize + (target.x as u32 + xx) as usize;
                pixels[px] = v;
            }
        }
        GrayImage::new(w, h, pixels).unwrap()
    }

    /// Same textured target on a perfectly flat background.
    fn noiseless_scene(w: u32, h: u32, target: &BBox) -> GrayImage {
        let img = GrayImage::from_fn(w, h, |_, _| 60);
        let mut tex = ChaCha8Rng::seed_from_u64(999);
        let mut pixels = img.pixels().to_vec();
        for yy in 0..target.h {
            for xx in 0..target.w {
                let v = 150 + tex.random_range(0..80u32) as u8;
                let px = (target.y as u32 + yy) as usize * w as usize + (target.x as u32 + xx) as usize;
                pixels[px] = v;
            }
        }
        GrayImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn init_counts_ring_samples() {
        let b = BBox::new(140, 100, 24, 24);
        let frame = scene(1, 320, 240, &b);
        let state = init(&frame, b, TrackerConfig::default()).unwrap();
        // 8 inner-ring offsets plus the tracked box itself.
        assert_eq!(state.model.s_pos, 9);
        // Full outer annulus fits the frame here.
        let expected_neg = sample_ring(&b, &TrackerConfig::default().neg_ring, 320, 240).len();
        assert_eq!(state.model.s_neg, expected_neg as u64);
        assert!(expected_neg > 2000);
    }

    #[test]
    fn init_rejects_tiny_frames() {
        let img = GrayImage::from_fn(1, 1, |_, _| 0);
        let r = init(&img, BBox::new(0, 0, 1, 1), TrackerConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn init_rejects_out_of_frame_box() {
        let img = GrayImage::from_fn(60, 60, |_, _| 0);
        let r = init(&img, BBox::new(50, 50, 20, 20), small_config());
        assert!(matches!(r, Err(CoreError::OutOfBounds(_))));
    }

    #[test]
    fn checkpoints_are_deterministic() {
        let b = BBox::new(40, 40, 16, 16);
        let frame = scene(2, 100, 100, &b);
        let cfg = small_config();
        let s1 = init(&frame, b, cfg.clone()).unwrap();
        let s2 = init(&frame, b, cfg).unwrap();
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        s1.save_checkpoint(&mut b1).unwrap();
        s2.save_checkpoint(&mut b2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn checkpoint_round_trip_resumes_identically() {
        let b = BBox::new(40, 40, 16, 16);
        let cfg = small_config();
        let frame0 = scene(3, 100, 100, &b);
        let mut live = init(&frame0, b, cfg.clone()).unwrap();

        let mut blob = Vec::new();
        live.save_checkpoint(&mut blob).unwrap();
        let mut restored = TrackerState::load_checkpoint(cfg, &mut blob.as_slice()).unwrap();

        let next = scene(4, 100, 100, &BBox::new(41, 40, 16, 16));
        let (ba, da) = live.step(&next).unwrap();
        let (bb, db) = restored.step(&next).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(da.max_score, db.max_score);
        assert_eq!(live.model.beta, restored.model.beta);
    }

    #[test]
    fn static_noiseless_scene_holds_the_box() {
        // Full default pipeline: the retrained center candidate keeps
        // winning the vote, so the box is a fixed point.
        let b = BBox::new(120, 90, 40, 40);
        let frame = noiseless_scene(320, 240, &b);
        let mut state = init(&frame, b, TrackerConfig::default()).unwrap();
        for _ in 0..3 {
            let (got, diag) = state.step(&frame.clone()).unwrap();
            assert_eq!(got, b, "static target must not move");
            assert!(!diag.held);
            assert!(diag.candidate_count > 0);
        }
    }

    #[test]
    fn repeated_first_frame_stays_within_two_pixels() {
        let b = BBox::new(120, 90, 40, 40);
        let frame = noiseless_scene(320, 240, &b);
        let mut state = init(&frame, b, TrackerConfig::default()).unwrap();
        let (got, _) = state.step(&frame).unwrap();
        assert!((got.x - b.x).abs() <= 2 && (got.y - b.y).abs() <= 2);
    }

    #[test]
    fn predicted_box_is_a_generated_candidate() {
        let b = BBox::new(40, 40, 16, 16);
        let cfg = small_config();
        let frame = scene(7, 100, 100, &b);
        let mut state = init(&frame, b, cfg.clone()).unwrap();
        let moved = scene(8, 100, 100, &BBox::new(43, 41, 16, 16));
        let grid = sample_grid(&b, cfg.search_radius, 100, 100);
        let (got, _) = state.step(&moved).unwrap();
        assert!(grid.contains(&got));
    }

    #[test]
    fn mismatched_frame_size_is_an_error() {
        let b = BBox::new(40, 40, 16, 16);
        let frame = scene(9, 100, 100, &b);
        let mut state = init(&frame, b, small_config()).unwrap();
        let other = GrayImage::from_fn(101, 100, |_, _| 0);
        assert!(matches!(state.step(&other), Err(CoreError::DimensionMismatch { .. })));
    }

    #[test]
    fn class_count_audit_over_steps() {
        let b = BBox::new(40, 40, 16, 16);
        let cfg = small_config();
        let frame = scene(10, 100, 100, &b);
        let mut state = init(&frame, b, cfg.clone()).unwrap();
        let mut expect_pos = state.model.s_pos;
        let mut expect_neg = state.model.s_neg;
        for k in 0..3u64 {
            let f = scene(11 + k, 100, 100, &b);
            let (new_box, _) = state.step(&f).unwrap();
            let (samples, n_pos) = training_samples(&cfg, &new_box, 100, 100);
            expect_pos += n_pos as u64;
            expect_neg += (samples.len() - n_pos) as u64;
            assert_eq!(state.model.s_pos, expect_pos);
            assert_eq!(state.model.s_neg, expect_neg);
        }
    }

    #[test]
    fn single_frame_sequence_yields_one_record() {
        let b = BBox::new(40, 40, 16, 16);
        let frame = scene(12, 100, 100, &b);
        let records = track_sequence(vec![frame], b, small_config()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].bbox, b);
        assert!(records[0].ms > 0.0);
    }

    #[test]
    fn track_sequence_is_reproducible() {
        let b = BBox::new(40, 40, 16, 16);
        let cfg = small_config();
        let frames: Vec<GrayImage> = (0..4)
            .map(|k| scene(20, 100, 100, &BBox::new(40 + k, 40, 16, 16)))
            .collect();
        let r1 = track_sequence(frames.clone(), b, cfg.clone()).unwrap();
        let r2 = track_sequence(frames, b, cfg).unwrap();
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.bbox, b.bbox);
            assert_eq!(a.max_score, b.max_score);
            assert_eq!(a.rho, b.rho);
        }
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let r = track_sequence(Vec::<GrayImage>::new(), BBox::new(0, 0, 4, 4), small_config());
        assert!(matches!(r, Err(CoreError::EmptyInput(_))));
    }

    #[test]
    fn errors_carry_the_frame_index() {
        let b = BBox::new(40, 40, 16, 16);
        let frames = vec![
            scene(30, 100, 100, &b),
            GrayImage::from_fn(50, 50, |_, _| 0), // wrong size at frame 1
        ];
        match track_sequence(frames, b, small_config()) {
            Err(CoreError::AtFrame(1, _)) => {}
            other => panic!("expected frame-1 error, got {other:?}"),
        }
    }
}
