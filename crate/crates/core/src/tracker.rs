//! Frame-sequential mask propagation.
//!
//! A tracker is initialized from the first frame's features and its
//! ground-truth mask, then advances one frame at a time: match the new
//! frame against the template bank, optionally run dual attention over
//! the similarity stack, fuse with the previous mask into logits, softmax
//! into the new mask, and finally rebuild the local template and update
//! the medial EMA from that prediction. The global template never
//! changes after init.
//!
//! Templates update from the predicted soft probabilities rather than a
//! thresholded mask: the update equations are written over probabilities,
//! and soft updates avoid locking early errors in.
//!
//! Multi-object sequences run one independent tracker per object and
//! compose per-pixel labels by the highest foreground probability, with
//! ties going to the lowest object index and pixels where every object
//! scores below 0.5 going to background.

use crate::attention::attend;
use crate::error::{Error, Result};
use crate::fusion::{fit_first_frame, fuse, FusionParams};
use crate::grid::{FeatureGrid, ProbabilityField, ZERO_NORM_THRESHOLD};
use crate::matching::{match_all, MatchKind, MatchKindSet};
use crate::metrics::LabelMask;
use crate::templates::{medial_summary, MedialTemplate, TemplateBank, WeightedTemplate};

/// Which matching kinds feed the mask prediction, named after the
/// ablation rows: global, +local, +medial, +attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerMode {
    Global,
    GlobalLocal,
    GlobalLocalMedial,
    GlobalLocalMedialAttention,
}

impl TrackerMode {
    pub const ALL: [TrackerMode; 4] = [
        TrackerMode::Global,
        TrackerMode::GlobalLocal,
        TrackerMode::GlobalLocalMedial,
        TrackerMode::GlobalLocalMedialAttention,
    ];

    pub fn kinds(self) -> MatchKindSet {
        match self {
            TrackerMode::Global => MatchKindSet::new(&[MatchKind::Global]),
            TrackerMode::GlobalLocal => MatchKindSet::new(&[MatchKind::Global, MatchKind::Local]),
            _ => MatchKindSet::all(),
        }
    }

    pub fn uses_attention(self) -> bool {
        self == TrackerMode::GlobalLocalMedialAttention
    }

    /// Similarity maps per class.
    pub fn stack_width(self) -> usize {
        self.kinds().len()
    }

    /// Fusion weight entries per class: similarity channels (doubled by
    /// attention) plus the previous-mask channel.
    pub fn fusion_width(self) -> usize {
        if self.uses_attention() {
            2 * self.stack_width() + 1
        } else {
            self.stack_width() + 1
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TrackerMode::Global => "G",
            TrackerMode::GlobalLocal => "GL",
            TrackerMode::GlobalLocalMedial => "GLM",
            TrackerMode::GlobalLocalMedialAttention => "GLMA",
        }
    }

    /// Case-insensitive parse of the ablation-row names.
    pub fn parse(text: &str) -> Result<Self> {
        match text.to_ascii_uppercase().as_str() {
            "G" => Ok(TrackerMode::Global),
            "GL" => Ok(TrackerMode::GlobalLocal),
            "GLM" => Ok(TrackerMode::GlobalLocalMedial),
            "GLMA" => Ok(TrackerMode::GlobalLocalMedialAttention),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?}, expected G, GL, GLM, or GLMA"
            ))),
        }
    }
}

impl std::fmt::Display for TrackerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Where the fusion parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionSource {
    /// All-ones weights, zero bias.
    Default,
    /// Gradient-descent calibration on the first frame.
    FitFirstFrame,
    /// Explicit parameters, e.g. loaded from a config file.
    Params(FusionParams),
}

/// Gradient steps and rate used by [`FusionSource::FitFirstFrame`].
pub const FIRST_FRAME_FIT_STEPS: usize = 200;
pub const FIRST_FRAME_FIT_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub mode: TrackerMode,
    pub alpha: f64,
    pub gamma_spatial: f64,
    pub gamma_channel: f64,
    pub fusion: FusionSource,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            mode: TrackerMode::GlobalLocalMedial,
            alpha: crate::templates::DEFAULT_ALPHA,
            gamma_spatial: crate::attention::DEFAULT_GAMMA,
            gamma_channel: crate::attention::DEFAULT_GAMMA,
            fusion: FusionSource::Default,
        }
    }
}

impl TrackerConfig {
    pub fn with_mode(mode: TrackerMode) -> Self {
        TrackerConfig { mode, ..TrackerConfig::default() }
    }
}

/// Everything carried from frame to frame. The resolved fusion parameters
/// ride along so that a step depends on nothing outside (state, features,
/// config), which is what makes snapshot-and-replay exact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    bank: TemplateBank,
    prev_probs: ProbabilityField,
    frame_index: usize,
    fusion: FusionParams,
}

impl TrackerState {
    pub fn bank(&self) -> &TemplateBank {
        &self.bank
    }

    pub fn prev_probs(&self) -> &ProbabilityField {
        &self.prev_probs
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn fusion_params(&self) -> &FusionParams {
        &self.fusion
    }

    /// Reassembles a state from snapshot fields, revalidating the
    /// cross-field invariants.
    pub fn from_parts(
        bank: TemplateBank,
        prev_probs: ProbabilityField,
        frame_index: usize,
        fusion: FusionParams,
    ) -> Result<Self> {
        if bank.global.source_frame() != 0 {
            return Err(Error::InvalidInput("global template must come from frame 0".into()));
        }
        if bank.local.source_frame() != frame_index {
            return Err(Error::InvalidInput(format!(
                "local template from frame {}, state at frame {frame_index}",
                bank.local.source_frame()
            )));
        }
        if prev_probs.height() != bank.global.height() || prev_probs.width() != bank.global.width()
        {
            return Err(Error::InvalidInput(
                "previous mask shape does not match templates".into(),
            ));
        }
        if bank.medial.channels() != bank.global.channels() {
            return Err(Error::InvalidInput(
                "medial channel count does not match templates".into(),
            ));
        }
        Ok(TrackerState { bank, prev_probs, frame_index, fusion })
    }
}

fn check_alpha(config: &TrackerConfig) -> Result<()> {
    if !(config.alpha > 0.0 && config.alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1], got {}",
            config.alpha
        )));
    }
    Ok(())
}

/// Per-class fusion inputs for one frame under a mode: the raw similarity
/// stack, or its attended expansion.
fn fusion_inputs(
    features: &FeatureGrid,
    bank: &TemplateBank,
    config: &TrackerConfig,
) -> Result<[FeatureGrid; 2]> {
    let stack = match_all(features, bank, config.mode.kinds())?;
    if config.mode.uses_attention() {
        attend(&stack, config.gamma_spatial, config.gamma_channel)
    } else {
        Ok([stack.class_grid(0), stack.class_grid(1)])
    }
}

/// Builds the initial state from the first frame and its ground truth.
///
/// The mask is resampled to the feature resolution; a mask with no
/// foreground mass is rejected since there is nothing to track.
pub fn init(
    features_0: &FeatureGrid,
    gt_mask_0: &ProbabilityField,
    config: &TrackerConfig,
) -> Result<TrackerState> {
    check_alpha(config)?;
    let features = features_0.l2_normalized();
    let probs = gt_mask_0.resized(features.height(), features.width())?;
    if probs.class_mass(1) < ZERO_NORM_THRESHOLD {
        return Err(Error::EmptyTarget);
    }
    let global = WeightedTemplate::new(&features, &probs, 0)?;
    let medial = MedialTemplate::new(features.channels(), config.alpha)?
        .updated(&medial_summary(&global, &probs)?)?;
    let bank = TemplateBank { local: global.clone(), global, medial };
    let fusion = match &config.fusion {
        FusionSource::Default => FusionParams::default_for_width(config.mode.fusion_width()),
        FusionSource::Params(params) => {
            if params.width() != config.mode.fusion_width() {
                return Err(Error::InvalidArgument(format!(
                    "fusion params have width {}, mode {} needs {}",
                    params.width(),
                    config.mode,
                    config.mode.fusion_width()
                )));
            }
            params.clone()
        }
        FusionSource::FitFirstFrame => {
            let inputs = fusion_inputs(&features, &bank, config)?;
            fit_first_frame(&inputs, &probs, &probs, FIRST_FRAME_FIT_STEPS, FIRST_FRAME_FIT_RATE)?
        }
    };
    Ok(TrackerState { bank, prev_probs: probs, frame_index: 0, fusion })
}

/// Predicts the mask for the next frame and returns it with the advanced
/// state.
pub fn step(
    state: &TrackerState,
    features_i: &FeatureGrid,
    config: &TrackerConfig,
) -> Result<(ProbabilityField, TrackerState)> {
    check_alpha(config)?;
    let features = features_i.l2_normalized();
    if features.height() != state.prev_probs.height()
        || features.width() != state.prev_probs.width()
    {
        return Err(Error::InvalidArgument(format!(
            "frame is {}x{}, tracker expects {}x{}",
            features.height(),
            features.width(),
            state.prev_probs.height(),
            state.prev_probs.width()
        )));
    }
    let inputs = fusion_inputs(&features, &state.bank, config)?;
    let logits = fuse(&inputs, &state.prev_probs, &state.fusion)?;
    let mask = logits.softmax_channels()?;

    let next_frame = state.frame_index + 1;
    let local = WeightedTemplate::new(&features, &mask, next_frame)?;
    let medial = state.bank.medial.updated(&medial_summary(&local, &mask)?)?;
    let next = TrackerState {
        bank: TemplateBank { global: state.bank.global.clone(), local, medial },
        prev_probs: mask.clone(),
        frame_index: next_frame,
        fusion: state.fusion.clone(),
    };
    Ok((mask, next))
}

/// Runs a whole sequence. The first output echoes the (resampled) ground
/// truth; every later mask comes from [`step`].
pub fn run_sequence(
    frames: &[FeatureGrid],
    gt_mask_0: &ProbabilityField,
    config: &TrackerConfig,
) -> Result<Vec<ProbabilityField>> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("sequence has no frames".into()));
    }
    let mut state = init(&frames[0], gt_mask_0, config)?;
    let mut masks = Vec::with_capacity(frames.len());
    masks.push(state.prev_probs.clone());
    for frame in &frames[1..] {
        let (mask, next) = step(&state, frame, config)?;
        masks.push(mask);
        state = next;
    }
    Ok(masks)
}

/// Composes per-object foreground probabilities into one label field:
/// highest probability wins, lowest index wins ties, background when
/// every object is below 0.5.
fn compose_labels(fg_probs: &[&[f64]], height: usize, width: usize) -> Result<LabelMask> {
    let mut labels = vec![0u8; height * width];
    for (p, slot) in labels.iter_mut().enumerate() {
        let mut best = 0.5;
        for (o, probs) in fg_probs.iter().enumerate() {
            if probs[p] > best {
                best = probs[p];
                *slot = (o + 1) as u8;
            }
        }
    }
    LabelMask::new(height, width, labels)
}

/// Runs one independent tracker per object and composes label fields.
///
/// Initial masks must not claim the same pixel with more than 0.5
/// foreground probability each.
pub fn run_multiobject(
    frames: &[FeatureGrid],
    gt_masks_0: &[ProbabilityField],
    config: &TrackerConfig,
) -> Result<Vec<LabelMask>> {
    if gt_masks_0.is_empty() {
        return Err(Error::InvalidArgument("no objects given".into()));
    }
    if gt_masks_0.len() > 255 {
        return Err(Error::InvalidArgument("at most 255 objects supported".into()));
    }
    let (h, w) = (gt_masks_0[0].height(), gt_masks_0[0].width());
    for mask in gt_masks_0 {
        if mask.height() != h || mask.width() != w {
            return Err(Error::InvalidArgument("initial masks must share one shape".into()));
        }
    }
    for p in 0..h * w {
        let claims = gt_masks_0
            .iter()
            .filter(|m| m.class_plane(1)[p] > 0.5)
            .count();
        if claims > 1 {
            return Err(Error::InvalidArgument(format!(
                "initial masks overlap at pixel {p}"
            )));
        }
    }
    let per_object: Vec<Vec<ProbabilityField>> = gt_masks_0
        .iter()
        .map(|gt| run_sequence(frames, gt, config))
        .collect::<Result<_>>()?;
    let (fh, fw) = (per_object[0][0].height(), per_object[0][0].width());
    let mut out = Vec::with_capacity(frames.len());
    for frame in 0..frames.len() {
        let fg: Vec<&[f64]> = per_object.iter().map(|masks| masks[frame].class_plane(1)).collect();
        out.push(compose_labels(&fg, fh, fw)?);
    }
    Ok(out)
}
