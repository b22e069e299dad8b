//! Template construction and maintenance.
//!
//! A weighted template keeps one feature stack per class, built by scaling
//! each pixel's (unit-norm) feature vector with that class's probability:
//! `Y_k = X * m_k` elementwise over pixels. Because the class probabilities
//! sum to 1 at every pixel, the per-class stacks partition the source
//! features exactly: `sum_k Y_k = X`.
//!
//! The medial template compresses a weighted template into one vector per
//! class, the probability-weighted mean feature
//! `(sum_p Y_k(p)) / (sum_p m_k(p))`, and tracks it over time with an
//! exponential moving average. The first update always copies the summary
//! (blend weight 1); later updates blend with weight `alpha`.

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, ProbabilityField, ZERO_NORM_THRESHOLD};

/// Number of classes carried by every template (background, foreground).
pub const CLASS_COUNT: usize = 2;

/// Blend weight applied to new summaries after the first update.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Per-class feature stacks weighted by class probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTemplate {
    class_grids: [FeatureGrid; CLASS_COUNT],
    source_frame: usize,
}

impl WeightedTemplate {
    /// Scales `features` by each class's probability plane.
    ///
    /// `features` must be L2-normalized (the cosine matcher downstream
    /// relies on template entries being probability-scaled unit vectors)
    /// and must share its spatial size with `probs`.
    pub fn new(
        features: &FeatureGrid,
        probs: &ProbabilityField,
        source_frame: usize,
    ) -> Result<Self> {
        if !features.is_normalized() {
            return Err(Error::Precondition(
                "template features must be L2-normalized".into(),
            ));
        }
        if probs.classes() != CLASS_COUNT {
            return Err(Error::InvalidArgument(format!(
                "templates are two-class, got {} classes",
                probs.classes()
            )));
        }
        if probs.height() != features.height() || probs.width() != features.width() {
            return Err(Error::InvalidArgument(format!(
                "probability field {}x{} does not match features {}x{}",
                probs.height(),
                probs.width(),
                features.height(),
                features.width()
            )));
        }
        let n = features.pixel_count();
        let weighted = |k: usize| {
            let weights = probs.class_plane(k);
            let mut data = Vec::with_capacity(features.channels() * n);
            for c in 0..features.channels() {
                let ch = features.channel(c);
                data.extend(ch.iter().zip(weights).map(|(v, w)| v * w));
            }
            FeatureGrid::new(features.channels(), features.height(), features.width(), data)
        };
        let class_grids = [weighted(0)?, weighted(1)?];
        Ok(WeightedTemplate { class_grids, source_frame })
    }

    pub fn class_grid(&self, class: usize) -> &FeatureGrid {
        &self.class_grids[class]
    }

    /// Index of the frame this template was built from.
    pub fn source_frame(&self) -> usize {
        self.source_frame
    }

    pub fn channels(&self) -> usize {
        self.class_grids[0].channels()
    }

    pub fn height(&self) -> usize {
        self.class_grids[0].height()
    }

    pub fn width(&self) -> usize {
        self.class_grids[0].width()
    }

    /// Rebuilds a template from already-weighted per-class grids, as read
    /// back from a state snapshot.
    pub fn from_parts(class_grids: [FeatureGrid; CLASS_COUNT], source_frame: usize) -> Result<Self> {
        let (c, h, w) = (
            class_grids[0].channels(),
            class_grids[0].height(),
            class_grids[0].width(),
        );
        if class_grids[1].channels() != c
            || class_grids[1].height() != h
            || class_grids[1].width() != w
        {
            return Err(Error::InvalidArgument(
                "template class grids must share one shape".into(),
            ));
        }
        Ok(WeightedTemplate { class_grids, source_frame })
    }
}

/// Per-class mean feature vectors `(sum_p Y_k(p)) / (sum_p m_k(p))`.
///
/// A class with no probability mass yields the zero vector, which the
/// cosine matcher scores as 0 everywhere.
pub fn medial_summary(
    template: &WeightedTemplate,
    probs: &ProbabilityField,
) -> Result<[Vec<f64>; CLASS_COUNT]> {
    if probs.classes() != CLASS_COUNT {
        return Err(Error::InvalidArgument(format!(
            "medial summary is two-class, got {} classes",
            probs.classes()
        )));
    }
    if probs.height() != template.height() || probs.width() != template.width() {
        return Err(Error::InvalidArgument(
            "probability field shape does not match template".into(),
        ));
    }
    let channels = template.channels();
    Ok(std::array::from_fn(|k| {
        let grid = template.class_grid(k);
        let mass: f64 = probs.class_plane(k).iter().sum();
        if mass < ZERO_NORM_THRESHOLD {
            return vec![0.0; channels];
        }
        (0..channels)
            .map(|c| grid.channel(c).iter().sum::<f64>() / mass)
            .collect()
    }))
}

/// Exponentially averaged per-class summary vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MedialTemplate {
    vectors: [Vec<f64>; CLASS_COUNT],
    alpha: f64,
    initialized: bool,
}

impl MedialTemplate {
    /// Empty template; the first [`updated`](Self::updated) call adopts its
    /// summary outright regardless of `alpha`.
    pub fn new(channels: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0, 1], got {alpha}"
            )));
        }
        Ok(MedialTemplate {
            vectors: std::array::from_fn(|_| vec![0.0; channels]),
            alpha,
            initialized: false,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn channels(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn class_vector(&self, class: usize) -> &[f64] {
        &self.vectors[class]
    }

    /// Blends a new summary in: the first call copies it, later calls
    /// compute `(1 - alpha) * old + alpha * new` per class.
    pub fn updated(&self, summary: &[Vec<f64>; CLASS_COUNT]) -> Result<Self> {
        for vec in summary {
            if vec.len() != self.channels() {
                return Err(Error::InvalidArgument(format!(
                    "summary has {} channels, template has {}",
                    vec.len(),
                    self.channels()
                )));
            }
        }
        let vectors = if self.initialized {
            std::array::from_fn(|k| {
                self.vectors[k]
                    .iter()
                    .zip(&summary[k])
                    .map(|(old, new)| (1.0 - self.alpha) * old + self.alpha * new)
                    .collect()
            })
        } else {
            summary.clone()
        };
        Ok(MedialTemplate { vectors, alpha: self.alpha, initialized: true })
    }

    /// Restores a template from snapshot fields.
    pub fn from_parts(
        vectors: [Vec<f64>; CLASS_COUNT],
        alpha: f64,
        initialized: bool,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0, 1], got {alpha}"
            )));
        }
        if vectors[0].len() != vectors[1].len() {
            return Err(Error::InvalidArgument(
                "medial class vectors must share one length".into(),
            ));
        }
        Ok(MedialTemplate { vectors, alpha, initialized })
    }
}

/// The three templates a tracker consults when matching a new frame.
///
/// `global` is built once from the first frame and never replaced; `local`
/// is rebuilt from the latest prediction; `medial` accumulates summaries of
/// every local template so far.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    pub global: WeightedTemplate,
    pub local: WeightedTemplate,
    pub medial: MedialTemplate,
}
