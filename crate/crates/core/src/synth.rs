//! Deterministic synthetic sequences and the brute-force oracles used by
//! tests and the self-check suites.
//!
//! Sequences are disks with linear trajectories over a constant
//! background. Each object carries its own feature signature, pairwise
//! separated by at least 15 degrees of line angle so classes stay
//! distinguishable; later objects paint over earlier ones, which is how
//! occlusion events are staged. Per-component uniform noise is added
//! before normalization.
//!
//! The oracles re-derive production results from first principles: naive
//! triple-loop matching, dense attention with its own softmax, one-to-one
//! boundary matching via augmenting paths, and the closed-form EMA. They
//! deliberately share no helpers with the modules they check beyond the
//! value types themselves.

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, ProbabilityField};
use crate::metrics::LabelMask;
use crate::templates::{WeightedTemplate, CLASS_COUNT};

/// SplitMix64: the widely specified 64-bit generator with a single u64 of
/// state. Chosen over an external crate so streams are reproducible from
/// the written constants alone, in any language.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), using the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1).
    pub fn next_signed_unit(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }

    /// Uniform index in [0, n). Desk-scale n, so modulo bias is ignored.
    pub fn next_below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Random grid with entries uniform in [-1, 1), not normalized.
pub fn random_feature_grid(rng: &mut SplitMix64, c: usize, h: usize, w: usize) -> FeatureGrid {
    let data: Vec<f64> = (0..c * h * w).map(|_| rng.next_signed_unit()).collect();
    FeatureGrid::new(c, h, w, data).expect("random data is finite")
}

/// Random two-class field with smooth per-pixel probabilities.
pub fn random_prob_field(rng: &mut SplitMix64, h: usize, w: usize) -> ProbabilityField {
    let mut data = vec![0.0; 2 * h * w];
    for p in 0..h * w {
        let a = rng.next_unit();
        data[p] = a;
        data[h * w + p] = 1.0 - a;
    }
    ProbabilityField::new(2, h, w, data).expect("constructed sums are 1")
}

/// Random label mask with labels in 0..=max_label.
pub fn random_label_mask(rng: &mut SplitMix64, h: usize, w: usize, max_label: u8) -> LabelMask {
    let labels: Vec<u8> = (0..h * w)
        .map(|_| rng.next_below(max_label as usize + 1) as u8)
        .collect();
    LabelMask::new(h, w, labels).expect("labels bounded by construction")
}

/// Minimum pairwise line angle between object signatures, in degrees.
pub const MIN_SIGNATURE_ANGLE_DEG: f64 = 15.0;

/// One moving disk: position and velocity are (x, y) in pixels, with x
/// along columns and y along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub start: (f64, f64),
    pub velocity: (f64, f64),
    pub radius: f64,
    pub signature: Vec<f64>,
}

impl ObjectSpec {
    fn center_at(&self, frame: usize) -> (f64, f64) {
        (
            self.start.0 + frame as f64 * self.velocity.0,
            self.start.1 + frame as f64 * self.velocity.1,
        )
    }
}

/// Full description of a synthetic sequence; generation is a pure
/// function of this value.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub frames: usize,
    pub objects: Vec<ObjectSpec>,
    pub background: Vec<f64>,
    pub noise: f64,
    pub seed: u64,
}

fn line_angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = (dot.abs() / (na * nb)).min(1.0);
    cos.acos().to_degrees()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.frames == 0 {
            return Err(Error::InvalidArgument(
                "sequence dimensions and frame count must be positive".into(),
            ));
        }
        if self.objects.is_empty() {
            return Err(Error::InvalidArgument("at least one object required".into()));
        }
        if self.objects.len() > 255 {
            return Err(Error::InvalidArgument("at most 255 objects supported".into()));
        }
        if self.background.len() != self.channels {
            return Err(Error::InvalidArgument(format!(
                "background signature has {} entries, expected {}",
                self.background.len(),
                self.channels
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise amplitude must be non-negative, got {}",
                self.noise
            )));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.signature.len() != self.channels {
                return Err(Error::InvalidArgument(format!(
                    "object {} signature has {} entries, expected {}",
                    i + 1,
                    obj.signature.len(),
                    self.channels
                )));
            }
            let norm: f64 = obj.signature.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "object {} signature is (near) zero",
                    i + 1
                )));
            }
            if !(obj.radius > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "object {} radius must be positive",
                    i + 1
                )));
            }
            for frame in 0..self.frames {
                let (cx, cy) = obj.center_at(frame);
                let inside = cx - obj.radius >= 0.0
                    && cx + obj.radius <= (self.width - 1) as f64
                    && cy - obj.radius >= 0.0
                    && cy + obj.radius <= (self.height - 1) as f64;
                if !inside {
                    return Err(Error::InvalidArgument(format!(
                        "object {} leaves the grid at frame {frame}",
                        i + 1
                    )));
                }
            }
        }
        for i in 0..self.objects.len() {
            for j in i + 1..self.objects.len() {
                let angle =
                    line_angle_deg(&self.objects[i].signature, &self.objects[j].signature);
                if angle < MIN_SIGNATURE_ANGLE_DEG {
                    return Err(Error::InvalidArgument(format!(
                        "objects {} and {} have signature angle {angle:.2} deg, need >= {MIN_SIGNATURE_ANGLE_DEG}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Label of the object covering a pixel at a frame (0 = background);
    /// later objects occlude earlier ones.
    fn label_at(&self, frame: usize, row: usize, col: usize) -> u8 {
        let mut label = 0u8;
        for (i, obj) in self.objects.iter().enumerate() {
            let (cx, cy) = obj.center_at(frame);
            let (dx, dy) = (col as f64 - cx, row as f64 - cy);
            if dx * dx + dy * dy <= obj.radius * obj.radius {
                label = (i + 1) as u8;
            }
        }
        label
    }
}

/// Generates the normalized feature frames and ground-truth label masks
/// for a spec. Deterministic: each frame draws noise from its own stream,
/// seeded from one master stream.
pub fn gen_sequence(spec: &SynthSpec) -> Result<(Vec<FeatureGrid>, Vec<LabelMask>)> {
    spec.validate()?;
    let mut master = SplitMix64::new(spec.seed);
    let frame_seeds: Vec<u64> = (0..spec.frames).map(|_| master.next_u64()).collect();
    let n = spec.height * spec.width;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    for (frame, &seed) in frame_seeds.iter().enumerate() {
        let mut labels = vec![0u8; n];
        for row in 0..spec.height {
            for col in 0..spec.width {
                labels[row * spec.width + col] = spec.label_at(frame, row, col);
            }
        }
        let mut rng = SplitMix64::new(seed);
        let mut data = vec![0.0; spec.channels * n];
        for c in 0..spec.channels {
            for (p, &label) in labels.iter().enumerate() {
                let base = if label == 0 {
                    spec.background[c]
                } else {
                    spec.objects[label as usize - 1].signature[c]
                };
                let noise = if spec.noise > 0.0 {
                    spec.noise * rng.next_signed_unit()
                } else {
                    0.0
                };
                data[c * n + p] = base + noise;
            }
        }
        frames.push(FeatureGrid::new(spec.channels, spec.height, spec.width, data)?.l2_normalized());
        masks.push(LabelMask::new(spec.height, spec.width, labels)?);
    }
    Ok((frames, masks))
}

/// Reference matcher: the untiled triple loop over template pixels, input
/// pixels, and channels, with the max taken in template-pixel order.
pub fn oracle_match(input: &FeatureGrid, template: &WeightedTemplate) -> [Vec<f64>; CLASS_COUNT] {
    let run = |class: usize| {
        let grid = template.class_grid(class);
        let mut map = vec![0.0; input.pixel_count()];
        for py in 0..input.height() {
            for px in 0..input.width() {
                let mut best = f64::NEG_INFINITY;
                for qy in 0..grid.height() {
                    for qx in 0..grid.width() {
                        let mut dot = 0.0;
                        for c in 0..input.channels() {
                            dot += input.at(c, py, px) * grid.at(c, qy, qx);
                        }
                        if dot > best {
                            best = dot;
                        }
                    }
                }
                map[py * input.width() + px] = best;
            }
        }
        map
    };
    [run(0), run(1)]
}

/// Which attention branch an oracle call reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Spatial,
    Channel,
}

/// Reference attention: materializes the dense energy matrix, softmaxes
/// each row with its own inline loop, multiplies, and applies the
/// residual.
pub fn oracle_attention(stack: &FeatureGrid, gamma: f64, kind: AttentionKind) -> FeatureGrid {
    let n = stack.pixel_count();
    let c = stack.channels();
    // Row vectors of the reshaped matrix: HW rows of length n=c for the
    // spatial branch, c rows of length HW for the channel branch.
    let rows: Vec<Vec<f64>> = match kind {
        AttentionKind::Spatial => (0..n)
            .map(|p| (0..c).map(|ch| stack.data()[ch * n + p]).collect())
            .collect(),
        AttentionKind::Channel => (0..c)
            .map(|ch| stack.data()[ch * n..(ch + 1) * n].to_vec())
            .collect(),
    };
    let m = rows.len();
    let mut affinity = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            affinity[i][j] = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
        }
        let max = affinity[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in affinity[i].iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in affinity[i].iter_mut() {
            *v /= sum;
        }
    }
    let mut attended = vec![vec![0.0; rows[0].len()]; m];
    for i in 0..m {
        for j in 0..m {
            let w = affinity[i][j];
            for (slot, v) in attended[i].iter_mut().zip(&rows[j]) {
                *slot += w * v;
            }
        }
    }
    let mut data = vec![0.0; c * n];
    for ch in 0..c {
        for p in 0..n {
            let out = match kind {
                AttentionKind::Spatial => attended[p][ch],
                AttentionKind::Channel => attended[ch][p],
            };
            data[ch * n + p] = gamma * out + stack.data()[ch * n + p];
        }
    }
    FeatureGrid::new(c, stack.height(), stack.width(), data).expect("finite by construction")
}

/// Both readings of the boundary F-measure, from one brute-force pass.
///
/// `coverage_f` counts a boundary pixel as matched when any pixel of the
/// other boundary lies within the tolerance (cardinality-unconstrained
/// matching; this is what disk dilation computes). `one_to_one_f` uses a
/// maximum-cardinality one-to-one matching instead. The two agree at
/// tolerance 0 and may differ above it; both are reported so any
/// discrepancy is visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryOracle {
    pub coverage_f: f64,
    pub one_to_one_f: f64,
    pub pred_boundary: usize,
    pub gt_boundary: usize,
    pub matched_one_to_one: usize,
}

fn oracle_boundary_pixels(mask: &LabelMask, object_id: u8) -> Vec<(i64, i64)> {
    let (h, w) = (mask.height() as i64, mask.width() as i64);
    let is_fg = |y: i64, x: i64| {
        y >= 0 && y < h && x >= 0 && x < w && mask.labels()[(y * w + x) as usize] == object_id
    };
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !is_fg(y, x) {
                continue;
            }
            let exposed = !is_fg(y - 1, x) || !is_fg(y + 1, x) || !is_fg(y, x - 1) || !is_fg(y, x + 1);
            if exposed {
                out.push((y, x));
            }
        }
    }
    out
}

fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Brute-force boundary matcher; intended for masks up to about 16x16.
pub fn oracle_boundary_f(
    pred: &LabelMask,
    gt: &LabelMask,
    object_id: u8,
    tolerance_px: u32,
) -> Result<BoundaryOracle> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::InvalidArgument("mask shapes must match".into()));
    }
    let pb = oracle_boundary_pixels(pred, object_id);
    let gb = oracle_boundary_pixels(gt, object_id);
    if pb.is_empty() && gb.is_empty() {
        return Ok(BoundaryOracle {
            coverage_f: 1.0,
            one_to_one_f: 1.0,
            pred_boundary: 0,
            gt_boundary: 0,
            matched_one_to_one: 0,
        });
    }
    let tol_sq = (tolerance_px as i64).pow(2);
    let near = |a: (i64, i64), b: (i64, i64)| {
        let (dy, dx) = (a.0 - b.0, a.1 - b.1);
        dy * dy + dx * dx <= tol_sq
    };

    let covered_pred = pb.iter().filter(|&&p| gb.iter().any(|&g| near(p, g))).count();
    let covered_gt = gb.iter().filter(|&&g| pb.iter().any(|&p| near(p, g))).count();
    let precision = if pb.is_empty() { 0.0 } else { covered_pred as f64 / pb.len() as f64 };
    let recall = if gb.is_empty() { 0.0 } else { covered_gt as f64 / gb.len() as f64 };
    let coverage_f = f_measure(precision, recall);

    // Kuhn's augmenting-path maximum matching on the tolerance graph.
    let mut match_of_gt: Vec<Option<usize>> = vec![None; gb.len()];
    fn augment(
        i: usize,
        pb: &[(i64, i64)],
        gb: &[(i64, i64)],
        near: &dyn Fn((i64, i64), (i64, i64)) -> bool,
        visited: &mut [bool],
        match_of_gt: &mut [Option<usize>],
    ) -> bool {
        for j in 0..gb.len() {
            if visited[j] || !near(pb[i], gb[j]) {
                continue;
            }
            visited[j] = true;
            let free = match match_of_gt[j] {
                None => true,
                Some(prev) => augment(prev, pb, gb, near, visited, match_of_gt),
            };
            if free {
                match_of_gt[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut matched = 0;
    for i in 0..pb.len() {
        let mut visited = vec![false; gb.len()];
        if augment(i, &pb, &gb, &near, &mut visited, &mut match_of_gt) {
            matched += 1;
        }
    }
    let p1 = if pb.is_empty() { 0.0 } else { matched as f64 / pb.len() as f64 };
    let r1 = if gb.is_empty() { 0.0 } else { matched as f64 / gb.len() as f64 };
    Ok(BoundaryOracle {
        coverage_f,
        one_to_one_f: f_measure(p1, r1),
        pred_boundary: pb.len(),
        gt_boundary: gb.len(),
        matched_one_to_one: matched,
    })
}

/// Closed-form EMA after feeding `summaries` in order with the first
/// update at weight 1: `v = (1-a)^(n-1) s_0 + sum_{j>=1} a (1-a)^(n-1-j) s_j`.
pub fn oracle_ema(summaries: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    assert!(!summaries.is_empty(), "need at least one summary");
    let n = summaries.len();
    let dim = summaries[0].len();
    let mut v = vec![0.0; dim];
    for (j, s) in summaries.iter().enumerate() {
        let w = if j == 0 {
            (1.0 - alpha).powi((n - 1) as i32)
        } else {
            alpha * (1.0 - alpha).powi((n - 1 - j) as i32)
        };
        for (slot, x) in v.iter_mut().zip(s) {
            *slot += w * x;
        }
    }
    v
}
