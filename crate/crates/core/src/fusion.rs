//! Per-pixel linear fusion head: logits, loss, gradients, and a
//! finite-difference gradient checker.
//!
//! Each class's logit is a dot product of that class's weight vector with
//! the class's feature channels plus the propagated previous-frame
//! probability, `logit_k(p) = w_k . [features_k(p) || prev_k(p)] + b_k`.
//! The head is linear in its parameters, so cross-entropy over it is
//! convex and the analytic gradient is the classic softmax-minus-target
//! contraction, cheap to verify against central differences.

use crate::error::{Error, Result};
use crate::grid::{softmax_in_place, FeatureGrid, ProbabilityField};
use crate::synth::SplitMix64;
use crate::templates::CLASS_COUNT;

/// Per-class weight vectors (feature channels + 1 for the previous mask)
/// and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    weights: [Vec<f64>; CLASS_COUNT],
    bias: [f64; CLASS_COUNT],
}

impl FusionParams {
    pub fn new(weights: [Vec<f64>; CLASS_COUNT], bias: [f64; CLASS_COUNT]) -> Result<Self> {
        if weights[0].is_empty() || weights[0].len() != weights[1].len() {
            return Err(Error::InvalidArgument(
                "class weight vectors must be non-empty and equal-length".into(),
            ));
        }
        let finite = weights.iter().flatten().all(|v| v.is_finite())
            && bias.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("fusion parameters must be finite".into()));
        }
        Ok(FusionParams { weights, bias })
    }

    /// Untrained defaults: weight 1 on every channel of the own class and
    /// on the own-class previous-mask entry, bias 0. Higher similarity to
    /// a class then directly raises that class's logit.
    pub fn default_for_width(width: usize) -> Self {
        FusionParams {
            weights: [vec![1.0; width], vec![1.0; width]],
            bias: [0.0; CLASS_COUNT],
        }
    }

    /// Weight entries per class: feature channels + 1.
    pub fn width(&self) -> usize {
        self.weights[0].len()
    }

    pub fn class_weights(&self, class: usize) -> &[f64] {
        &self.weights[class]
    }

    pub fn class_bias(&self, class: usize) -> f64 {
        self.bias[class]
    }

    /// `a * self + b * other`, entry-wise; used by the calibration loop
    /// and the linearity tests.
    pub fn combined(&self, a: f64, other: &FusionParams, b: f64) -> Result<Self> {
        if self.width() != other.width() {
            return Err(Error::InvalidArgument(format!(
                "cannot combine widths {} and {}",
                self.width(),
                other.width()
            )));
        }
        let weights = [0, 1].map(|k| {
            self.weights[k]
                .iter()
                .zip(&other.weights[k])
                .map(|(x, y)| a * x + b * y)
                .collect()
        });
        let bias = [0, 1].map(|k| a * self.bias[k] + b * other.bias[k]);
        FusionParams::new(weights, bias)
    }

    /// Squared L2 norm over all entries (weights and biases).
    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().flatten().map(|v| v * v).sum::<f64>()
            + self.bias.iter().map(|v| v * v).sum::<f64>()
    }

    fn entry_count(&self) -> usize {
        CLASS_COUNT * (self.width() + 1)
    }

    fn entry(&self, i: usize) -> f64 {
        let per_class = self.width() + 1;
        let (k, j) = (i / per_class, i % per_class);
        if j == self.width() {
            self.bias[k]
        } else {
            self.weights[k][j]
        }
    }

    fn entry_mut(&mut self, i: usize) -> &mut f64 {
        let per_class = self.width() + 1;
        let (k, j) = (i / per_class, i % per_class);
        if j == self.width() {
            &mut self.bias[k]
        } else {
            &mut self.weights[k][j]
        }
    }
}

fn check_shapes(
    features: &[FeatureGrid; CLASS_COUNT],
    prev: &ProbabilityField,
    params: &FusionParams,
) -> Result<()> {
    let (h, w) = (features[0].height(), features[0].width());
    if features[1].height() != h || features[1].width() != w {
        return Err(Error::InvalidArgument(
            "per-class feature grids must share one spatial shape".into(),
        ));
    }
    if features[0].channels() != features[1].channels() {
        return Err(Error::InvalidArgument(
            "per-class feature grids must share one channel count".into(),
        ));
    }
    if prev.classes() != CLASS_COUNT || prev.height() != h || prev.width() != w {
        return Err(Error::InvalidArgument(format!(
            "previous mask {}x{}x{} does not match features 2x{h}x{w}",
            prev.classes(),
            prev.height(),
            prev.width()
        )));
    }
    if params.width() != features[0].channels() + 1 {
        return Err(Error::InvalidArgument(format!(
            "fusion weights have width {}, features need {}",
            params.width(),
            features[0].channels() + 1
        )));
    }
    Ok(())
}

/// Two-class logits: per class, the weighted sum of that class's feature
/// channels and previous-mask probability, plus bias.
pub fn fuse(
    features: &[FeatureGrid; CLASS_COUNT],
    prev: &ProbabilityField,
    params: &FusionParams,
) -> Result<FeatureGrid> {
    check_shapes(features, prev, params)?;
    let (h, w) = (features[0].height(), features[0].width());
    let n = h * w;
    let channels = features[0].channels();
    let mut data = vec![0.0; CLASS_COUNT * n];
    for k in 0..CLASS_COUNT {
        let weights = params.class_weights(k);
        let out = &mut data[k * n..(k + 1) * n];
        out.fill(params.class_bias(k));
        for (c, &wc) in weights[..channels].iter().enumerate() {
            for (slot, x) in out.iter_mut().zip(features[k].channel(c)) {
                *slot += wc * x;
            }
        }
        let wp = weights[channels];
        for (slot, m) in out.iter_mut().zip(prev.class_plane(k)) {
            *slot += wp * m;
        }
    }
    FeatureGrid::new(CLASS_COUNT, h, w, data)
}

/// Mean over pixels of `-sum_k t_k log softmax(logits)_k`, evaluated via
/// log-sum-exp so large logits cannot overflow.
pub fn cross_entropy(logits: &FeatureGrid, target: &ProbabilityField) -> Result<f64> {
    if logits.channels() != CLASS_COUNT
        || target.classes() != CLASS_COUNT
        || logits.height() != target.height()
        || logits.width() != target.width()
    {
        return Err(Error::InvalidArgument(
            "logits and target must both be 2-class with one shape".into(),
        ));
    }
    let n = logits.pixel_count();
    let mut total = 0.0;
    for p in 0..n {
        let l0 = logits.data()[p];
        let l1 = logits.data()[n + p];
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        total -= target.data()[p] * (l0 - lse) + target.data()[n + p] * (l1 - lse);
    }
    Ok(total / n as f64)
}

/// Analytic gradient of [`cross_entropy`] composed with [`fuse`] with
/// respect to the parameters, as a parameter-shaped value.
///
/// Per pixel, `d loss / d logit_k = (softmax(logits)_k - t_k) / HW`; the
/// weight gradient contracts that with the class's inputs and the bias
/// gradient sums it.
pub fn gradient(
    features: &[FeatureGrid; CLASS_COUNT],
    prev: &ProbabilityField,
    target: &ProbabilityField,
    params: &FusionParams,
) -> Result<FusionParams> {
    check_shapes(features, prev, params)?;
    if target.classes() != CLASS_COUNT
        || target.height() != features[0].height()
        || target.width() != features[0].width()
    {
        return Err(Error::InvalidArgument("target shape mismatch".into()));
    }
    let logits = fuse(features, prev, params)?;
    let n = logits.pixel_count();
    let channels = features[0].channels();
    let mut weights = [vec![0.0; params.width()], vec![0.0; params.width()]];
    let mut bias = [0.0; CLASS_COUNT];
    let mut probs = [0.0; CLASS_COUNT];
    for p in 0..n {
        probs[0] = logits.data()[p];
        probs[1] = logits.data()[n + p];
        softmax_in_place(&mut probs);
        for k in 0..CLASS_COUNT {
            let d = (probs[k] - target.data()[k * n + p]) / n as f64;
            let wk = &mut weights[k];
            for c in 0..channels {
                wk[c] += d * features[k].data()[c * n + p];
            }
            wk[channels] += d * prev.data()[k * n + p];
            bias[k] += d;
        }
    }
    FusionParams::new(weights, bias)
}

/// A self-contained random fusion instance used by the gradient checker
/// and the calibration tests.
pub struct CheckInstance {
    pub features: [FeatureGrid; CLASS_COUNT],
    pub prev: ProbabilityField,
    pub target: ProbabilityField,
    pub params: FusionParams,
}

/// Seeded random instance on a 4x4 grid with 3 feature channels per class.
pub fn check_instance(seed: u64) -> CheckInstance {
    let mut rng = SplitMix64::new(seed);
    let (c, h, w) = (3, 4, 4);
    let grid = |rng: &mut SplitMix64| {
        let data: Vec<f64> = (0..c * h * w).map(|_| rng.next_signed_unit()).collect();
        FeatureGrid::new(c, h, w, data).unwrap()
    };
    let features = [grid(&mut rng), grid(&mut rng)];
    let field = |rng: &mut SplitMix64| {
        let mut data = vec![0.0; 2 * h * w];
        for p in 0..h * w {
            let a = rng.next_unit();
            data[p] = a;
            data[h * w + p] = 1.0 - a;
        }
        ProbabilityField::new(2, h, w, data).unwrap()
    };
    let prev = field(&mut rng);
    let target = field(&mut rng);
    let mut weights = [vec![0.0; c + 1], vec![0.0; c + 1]];
    for k in 0..CLASS_COUNT {
        for v in weights[k].iter_mut() {
            *v = rng.next_signed_unit();
        }
    }
    let bias = [rng.next_signed_unit(), rng.next_signed_unit()];
    CheckInstance { features, prev, target, params: FusionParams::new(weights, bias).unwrap() }
}

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares analytic and central-difference gradients on a seeded random
/// instance; returns the maximum relative error
/// `|g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)` over all parameter entries.
pub fn grad_check(seed: u64) -> f64 {
    grad_check_with_step(seed, GRAD_CHECK_STEP)
}

/// [`grad_check`] with an explicit finite-difference step, for
/// order-of-accuracy experiments.
pub fn grad_check_with_step(seed: u64, h: f64) -> f64 {
    let inst = check_instance(seed);
    let analytic = gradient(&inst.features, &inst.prev, &inst.target, &inst.params)
        .expect("instance shapes are consistent");
    let loss_at = |params: &FusionParams| {
        let logits = fuse(&inst.features, &inst.prev, params).unwrap();
        cross_entropy(&logits, &inst.target).unwrap()
    };
    let mut max_rel = 0.0f64;
    for i in 0..inst.params.entry_count() {
        let mut plus = inst.params.clone();
        *plus.entry_mut(i) += h;
        let mut minus = inst.params.clone();
        *minus.entry_mut(i) -= h;
        let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let ga = analytic.entry(i);
        let rel = (ga - fd).abs() / f64::max(1e-8, ga.abs() + fd.abs());
        max_rel = max_rel.max(rel);
    }
    max_rel
}

/// Plain gradient descent on the first frame's instance, starting from the
/// all-ones defaults. The loss is convex in the parameters, so a moderate
/// rate converges without line search.
pub fn fit_first_frame(
    features: &[FeatureGrid; CLASS_COUNT],
    prev: &ProbabilityField,
    target: &ProbabilityField,
    steps: usize,
    rate: f64,
) -> Result<FusionParams> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {rate}")));
    }
    let mut params = FusionParams::default_for_width(features[0].channels() + 1);
    check_shapes(features, prev, &params)?;
    for _ in 0..steps {
        let g = gradient(features, prev, target, &params)?;
        params = params.combined(1.0, &g, -rate)?;
    }
    Ok(params)
}
