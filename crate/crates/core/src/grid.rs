//! Dense grid primitives shared by every other module.
//!
//! Two value types live here: [`FeatureGrid`], a `C x H x W` stack of
//! per-pixel feature vectors, and [`ProbabilityField`], a `K x H x W` stack
//! of per-pixel class probabilities. Both store `f64` in row-major
//! (channel, row, column) order and are immutable once constructed, so they
//! can be shared and sent across threads freely.
//!
//! The resampling kernel for probability fields is area averaging: each
//! output cell is the overlap-weighted mean of the input cells it covers.
//! Unlike nearest or bilinear kernels it preserves probability mass and is
//! well defined for arbitrary size ratios.

use crate::error::{Error, Result};

/// Slack allowed on a unit norm before a grid stops counting as normalized.
pub const NORM_TOLERANCE: f64 = 1e-5;

/// Pixels whose feature norm falls below this are treated as all-zero.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-12;

/// Slack allowed on per-pixel probability sums.
pub const PROB_SUM_TOLERANCE: f64 = 1e-5;

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Dense real-valued grid holding one feature vector per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl FeatureGrid {
    /// Builds a grid from row-major (channel, row, column) data.
    ///
    /// Fails with an invalid-argument error on zero dimensions or a length
    /// mismatch, and with an invalid-input error on non-finite values.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        check_finite(&data, "feature grid")?;
        Ok(FeatureGrid { channels, height, width, data, normalized: false })
    }

    /// All-zero grid. Zero vectors count as normalized by convention.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureGrid {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
            normalized: true,
        }
    }

    /// Builds a grid from per-channel maps, each of length `height * width`.
    pub fn from_maps(maps: &[Vec<f64>], height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(maps.len() * height * width);
        for map in maps {
            if map.len() != height * width {
                return Err(Error::InvalidArgument(format!(
                    "channel map length {} does not match {height}x{width}",
                    map.len()
                )));
            }
            data.extend_from_slice(map);
        }
        FeatureGrid::new(maps.len(), height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Whether every pixel vector is known to have unit (or zero) L2 norm.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    /// One channel as a contiguous `H * W` slice.
    pub fn channel(&self, channel: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[channel * n..(channel + 1) * n]
    }

    /// The feature vector of pixel `p` (row-major pixel index), gathered
    /// across channels.
    pub fn pixel_vector(&self, p: usize) -> Vec<f64> {
        let n = self.pixel_count();
        (0..self.channels).map(|c| self.data[c * n + p]).collect()
    }

    /// L2 norm of each pixel's feature vector, in row-major pixel order.
    pub fn pixel_norms(&self) -> Vec<f64> {
        let n = self.pixel_count();
        let mut sq = vec![0.0; n];
        for c in 0..self.channels {
            let ch = self.channel(c);
            for (acc, v) in sq.iter_mut().zip(ch) {
                *acc += v * v;
            }
        }
        for v in sq.iter_mut() {
            *v = v.sqrt();
        }
        sq
    }

    /// Repacks the grid as an `HW x C` pixel-major matrix (row per pixel).
    pub fn pixel_major(&self) -> Vec<f64> {
        let n = self.pixel_count();
        let mut out = vec![0.0; n * self.channels];
        for c in 0..self.channels {
            let ch = self.channel(c);
            for (p, v) in ch.iter().enumerate() {
                out[p * self.channels + c] = *v;
            }
        }
        out
    }

    /// Divides every pixel vector by its L2 norm. Pixels with norm below
    /// [`ZERO_NORM_THRESHOLD`] become all-zero instead of blowing up, so
    /// synthetic zero backgrounds stay valid; downstream cosine scores treat
    /// them as similarity 0.
    pub fn l2_normalized(&self) -> FeatureGrid {
        let n = self.pixel_count();
        let norms = self.pixel_norms();
        let mut data = self.data.clone();
        for c in 0..self.channels {
            for p in 0..n {
                let norm = norms[p];
                let v = &mut data[c * n + p];
                if norm < ZERO_NORM_THRESHOLD {
                    *v = 0.0;
                } else {
                    *v /= norm;
                }
            }
        }
        FeatureGrid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
            normalized: true,
        }
    }

    /// Per-pixel softmax over channels, numerically stabilized by
    /// subtracting the per-pixel maximum before exponentiation.
    ///
    /// Requires at least two channels (the channels become classes).
    pub fn softmax_channels(&self) -> Result<ProbabilityField> {
        if self.channels < 2 {
            return Err(Error::InvalidArgument(format!(
                "softmax over channels needs >= 2 channels, got {}",
                self.channels
            )));
        }
        let n = self.pixel_count();
        let mut data = vec![0.0; self.data.len()];
        let mut logits = vec![0.0; self.channels];
        for p in 0..n {
            for (c, l) in logits.iter_mut().enumerate() {
                *l = self.data[c * n + p];
            }
            softmax_in_place(&mut logits);
            for (c, l) in logits.iter().enumerate() {
                data[c * n + p] = *l;
            }
        }
        Ok(ProbabilityField {
            classes: self.channels,
            height: self.height,
            width: self.width,
            data,
        })
    }
}

/// Stable softmax of one slice, in place.
pub(crate) fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// Per-pixel class probabilities; the `K` values at each pixel sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    classes: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ProbabilityField {
    /// Builds a field from row-major (class, row, column) data and checks
    /// the invariants: values in [0, 1] and per-pixel sums equal to 1
    /// within [`PROB_SUM_TOLERANCE`].
    pub fn new(classes: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "probability field needs >= 2 classes, got {classes}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "field dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != classes * height * width {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match {classes}x{height}x{width}",
                data.len()
            )));
        }
        check_finite(&data, "probability field")?;
        if data.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(Error::InvalidInput("probability outside [0, 1]".into()));
        }
        let field = ProbabilityField { classes, height, width, data };
        for p in 0..height * width {
            let sum = field.pixel_sum(p);
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "pixel {p} probabilities sum to {sum}, expected 1"
                )));
            }
        }
        Ok(field)
    }

    /// Field with all classes equally likely at every pixel.
    pub fn uniform(classes: usize, height: usize, width: usize) -> Result<Self> {
        let v = 1.0 / classes as f64;
        ProbabilityField::new(classes, height, width, vec![v; classes * height * width])
    }

    /// Two-class hard field from a foreground mask (class 1 = foreground).
    pub fn from_fg_mask(fg: &[bool], height: usize, width: usize) -> Result<Self> {
        if fg.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "mask length {} does not match {height}x{width}",
                fg.len()
            )));
        }
        let mut data = vec![0.0; 2 * height * width];
        for (p, &is_fg) in fg.iter().enumerate() {
            data[p] = if is_fg { 0.0 } else { 1.0 };
            data[height * width + p] = if is_fg { 1.0 } else { 0.0 };
        }
        ProbabilityField::new(2, height, width, data)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn prob(&self, class: usize, row: usize, col: usize) -> f64 {
        self.data[(class * self.height + row) * self.width + col]
    }

    /// One class plane as a contiguous `H * W` slice.
    pub fn class_plane(&self, class: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[class * n..(class + 1) * n]
    }

    fn pixel_sum(&self, p: usize) -> f64 {
        let n = self.pixel_count();
        (0..self.classes).map(|k| self.data[k * n + p]).sum()
    }

    /// Total probability mass of one class over the whole field.
    pub fn class_mass(&self, class: usize) -> f64 {
        self.class_plane(class).iter().sum()
    }

    /// Area-average resampling to `out_h x out_w`.
    ///
    /// Each output cell is the overlap-weighted mean of the input cells it
    /// covers, so per-pixel sums remain 1 and integer downscales preserve
    /// per-class mass exactly.
    pub fn resized(&self, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::InvalidArgument(format!(
                "resize target must be positive, got {out_h}x{out_w}"
            )));
        }
        if out_h == self.height && out_w == self.width {
            return Ok(self.clone());
        }
        let (hin, win) = (self.height as f64, self.width as f64);
        let (hout, wout) = (out_h as f64, out_w as f64);
        let mut data = vec![0.0; self.classes * out_h * out_w];
        for k in 0..self.classes {
            let plane = self.class_plane(k);
            let out_plane = &mut data[k * out_h * out_w..(k + 1) * out_h * out_w];
            for oy in 0..out_h {
                let y0 = oy as f64 * hin / hout;
                let y1 = (oy + 1) as f64 * hin / hout;
                let ry0 = y0.floor() as usize;
                let ry1 = (y1.ceil() as usize).min(self.height);
                for ox in 0..out_w {
                    let x0 = ox as f64 * win / wout;
                    let x1 = (ox + 1) as f64 * win / wout;
                    let rx0 = x0.floor() as usize;
                    let rx1 = (x1.ceil() as usize).min(self.width);
                    let mut acc = 0.0;
                    let mut weight = 0.0;
                    for iy in ry0..ry1 {
                        let wy = (y1.min((iy + 1) as f64) - y0.max(iy as f64)).max(0.0);
                        if wy == 0.0 {
                            continue;
                        }
                        for ix in rx0..rx1 {
                            let wx = (x1.min((ix + 1) as f64) - x0.max(ix as f64)).max(0.0);
                            if wx == 0.0 {
                                continue;
                            }
                            let w = wy * wx;
                            acc += w * plane[iy * self.width + ix];
                            weight += w;
                        }
                    }
                    out_plane[oy * out_w + ox] = acc / weight;
                }
            }
        }
        ProbabilityField::new(self.classes, out_h, out_w, data)
    }

    /// Reinterprets the field as a feature grid (classes become channels).
    pub fn to_feature_grid(&self) -> FeatureGrid {
        FeatureGrid {
            channels: self.classes,
            height: self.height,
            width: self.width,
            data: self.data.clone(),
            normalized: false,
        }
    }

    /// Validates a feature grid as a probability field.
    pub fn from_feature_grid(grid: &FeatureGrid) -> Result<Self> {
        ProbabilityField::new(grid.channels, grid.height, grid.width, grid.data.clone())
    }

    /// Per-pixel most likely class, ties broken toward the lower class index.
    pub fn argmax_classes(&self) -> Vec<usize> {
        let n = self.pixel_count();
        let mut out = vec![0usize; n];
        for (p, slot) in out.iter_mut().enumerate() {
            let mut best = self.data[p];
            for k in 1..self.classes {
                let v = self.data[k * n + p];
                if v > best {
                    best = v;
                    *slot = k;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(c: usize, h: usize, w: usize, data: &[f64]) -> FeatureGrid {
        FeatureGrid::new(c, h, w, data.to_vec()).unwrap()
    }

    #[test]
    fn normalize_three_four_five_triangle() {
        let g = grid(2, 1, 1, &[3.0, 4.0]).l2_normalized();
        assert!((g.at(0, 0, 0) - 0.6).abs() < 1e-12);
        assert!((g.at(1, 0, 0) - 0.8).abs() < 1e-12);
        assert!(g.is_normalized());
    }

    #[test]
    fn normalize_zero_vector_stays_zero() {
        let g = grid(2, 1, 1, &[0.0, 0.0]).l2_normalized();
        assert_eq!(g.data(), &[0.0, 0.0]);
        assert!(g.is_normalized());
    }

    #[test]
    fn normalize_random_grid_norms_near_unit() {
        let mut rng = crate::synth::SplitMix64::new(7);
        let data: Vec<f64> = (0..4 * 5 * 5).map(|_| rng.next_signed_unit()).collect();
        let g = grid(4, 5, 5, &data).l2_normalized();
        for norm in g.pixel_norms() {
            assert!(norm == 0.0 || (norm - 1.0).abs() <= NORM_TOLERANCE);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = crate::synth::SplitMix64::new(11);
        let data: Vec<f64> = (0..3 * 4 * 4).map(|_| rng.next_signed_unit() * 5.0).collect();
        let once = grid(3, 4, 4, &data).l2_normalized();
        let twice = once.l2_normalized();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let err = FeatureGrid::new(1, 1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn resize_uniform_field_is_fixed_point() {
        let f = ProbabilityField::uniform(3, 8, 8).unwrap();
        let r = f.resized(4, 4).unwrap();
        for &v in r.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_two_by_two_binary_to_single_cell() {
        let fg = [true, false, false, false];
        let f = ProbabilityField::from_fg_mask(&fg, 2, 2).unwrap();
        let r = f.resized(1, 1).unwrap();
        assert!((r.prob(1, 0, 0) - 0.25).abs() < 1e-12);
        assert!((r.prob(0, 0, 0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn resize_matches_explicit_block_means() {
        let mut rng = crate::synth::SplitMix64::new(3);
        let mut data = vec![0.0; 2 * 6 * 6];
        for p in 0..36 {
            let a = rng.next_unit();
            data[p] = a;
            data[36 + p] = 1.0 - a;
        }
        let f = ProbabilityField::new(2, 6, 6, data.clone()).unwrap();
        let r = f.resized(3, 3).unwrap();
        for k in 0..2 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut sum = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            sum += data[k * 36 + (2 * oy + dy) * 6 + (2 * ox + dx)];
                        }
                    }
                    let expected = sum / 4.0;
                    assert!((r.prob(k, oy, ox) - expected).abs() < 1e-12);
                }
            }
        }
        for p in 0..9 {
            let sum = r.prob(0, p / 3, p % 3) + r.prob(1, p / 3, p % 3);
            assert!((sum - 1.0).abs() <= PROB_SUM_TOLERANCE);
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let f = ProbabilityField::uniform(2, 4, 4).unwrap();
        assert!(matches!(f.resized(0, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn resize_preserves_class_mass_on_integer_downscale() {
        let mut rng = crate::synth::SplitMix64::new(5);
        let mut data = vec![0.0; 2 * 6 * 6];
        for p in 0..36 {
            let a = rng.next_unit();
            data[p] = a;
            data[36 + p] = 1.0 - a;
        }
        let f = ProbabilityField::new(2, 6, 6, data).unwrap();
        let r = f.resized(2, 2).unwrap();
        for k in 0..2 {
            let before = f.class_mass(k) / 36.0;
            let after = r.class_mass(k) / 4.0;
            assert!((before - after).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_symmetric_logits() {
        let p = grid(2, 1, 1, &[0.0, 0.0]).softmax_channels().unwrap();
        assert!((p.prob(0, 0, 0) - 0.5).abs() < 1e-12);
        assert!((p.prob(1, 0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_extreme_logits_do_not_overflow() {
        let p = grid(2, 1, 1, &[1000.0, 0.0]).softmax_channels().unwrap();
        assert!((p.prob(0, 0, 0) - 1.0).abs() < 1e-12);
        assert!(p.prob(1, 0, 0) < 1e-12);
    }

    #[test]
    fn softmax_matches_scalar_recomputation() {
        let p = grid(3, 1, 1, &[1.0, 2.0, 3.0]).softmax_channels().unwrap();
        let denom = f64::exp(1.0) + f64::exp(2.0) + f64::exp(3.0);
        for (k, logit) in [1.0f64, 2.0, 3.0].into_iter().enumerate() {
            assert!((p.prob(k, 0, 0) - logit.exp() / denom).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_invariant_to_constant_shift() {
        let a = grid(3, 1, 1, &[0.4, -1.2, 2.0]).softmax_channels().unwrap();
        let b = grid(3, 1, 1, &[100.4, 98.8, 102.0]).softmax_channels().unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_requires_two_channels() {
        let g = grid(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(g.softmax_channels(), Err(Error::InvalidArgument(_))));
    }
}
