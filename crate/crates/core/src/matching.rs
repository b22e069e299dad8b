//! Pixel-level cosine matching against template banks.
//!
//! Every input pixel is compared with every template pixel via the dot
//! product of the unit-norm input vector with the probability-weighted
//! template vector, then the maximum over template pixels is kept:
//! `S_k(p) = max_q <x(p), Y_k(q)>`. Since `Y_k(q)` is a unit vector scaled
//! by a probability, each score is a probability-weighted cosine in
//! [-1, 1], and all-zero vectors score 0.
//!
//! The production kernel packs both grids pixel-major and computes tiled
//! blocks of the `HW x H'W'` dot-product matrix before max-folding each
//! row. The naive triple loop lives in the synth module as the test
//! oracle only.

use crate::error::{Error, Result};
use crate::grid::FeatureGrid;
use crate::templates::{MedialTemplate, TemplateBank, WeightedTemplate, CLASS_COUNT};

/// One matching source: the EMA summary vector, the first frame, or the
/// previous frame. Declaration order is the order maps appear in a stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MatchKind {
    Medial,
    Global,
    Local,
}

impl MatchKind {
    pub const ALL: [MatchKind; 3] = [MatchKind::Medial, MatchKind::Global, MatchKind::Local];

    pub fn label(self) -> &'static str {
        match self {
            MatchKind::Medial => "medial",
            MatchKind::Global => "global",
            MatchKind::Local => "local",
        }
    }
}

/// Which matching kinds a stack should contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchKindSet {
    medial: bool,
    global: bool,
    local: bool,
}

impl MatchKindSet {
    pub fn new(kinds: &[MatchKind]) -> Self {
        let mut set = MatchKindSet::default();
        for &k in kinds {
            match k {
                MatchKind::Medial => set.medial = true,
                MatchKind::Global => set.global = true,
                MatchKind::Local => set.local = true,
            }
        }
        set
    }

    pub fn all() -> Self {
        MatchKindSet { medial: true, global: true, local: true }
    }

    pub fn contains(self, kind: MatchKind) -> bool {
        match kind {
            MatchKind::Medial => self.medial,
            MatchKind::Global => self.global,
            MatchKind::Local => self.local,
        }
    }

    pub fn is_empty(self) -> bool {
        !(self.medial || self.global || self.local)
    }

    pub fn len(self) -> usize {
        usize::from(self.medial) + usize::from(self.global) + usize::from(self.local)
    }

    /// Enabled kinds in stack order.
    pub fn iter(self) -> impl Iterator<Item = MatchKind> {
        MatchKind::ALL.into_iter().filter(move |&k| self.contains(k))
    }
}

/// One `H x W` map of similarity scores for a single class and kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub kind: MatchKind,
    pub values: Vec<f64>,
}

/// Per-class bundles of similarity maps in a fixed kind order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityStack {
    height: usize,
    width: usize,
    per_class: [Vec<SimilarityMap>; CLASS_COUNT],
}

impl SimilarityStack {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Maps per class (equal for both classes).
    pub fn map_count(&self) -> usize {
        self.per_class[0].len()
    }

    pub fn maps(&self, class: usize) -> &[SimilarityMap] {
        &self.per_class[class]
    }

    /// One class's maps stacked into an `n x H x W` grid, in kind order.
    pub fn class_grid(&self, class: usize) -> FeatureGrid {
        let mut data = Vec::with_capacity(self.map_count() * self.height * self.width);
        for map in &self.per_class[class] {
            data.extend_from_slice(&map.values);
        }
        FeatureGrid::new(self.map_count(), self.height, self.width, data)
            .expect("similarity maps are finite and sized H*W")
    }
}

const QUERY_TILE: usize = 32;
const TEMPLATE_TILE: usize = 64;

/// Row maxima of the `nq x nt` dot-product matrix between two pixel-major
/// packings, computed tile by tile.
fn max_dot_rows(query: &[f64], nq: usize, template: &[f64], nt: usize, channels: usize) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; nq];
    let mut tile = vec![0.0; QUERY_TILE * TEMPLATE_TILE];
    for t0 in (0..nt).step_by(TEMPLATE_TILE) {
        let tn = (t0 + TEMPLATE_TILE).min(nt) - t0;
        for q0 in (0..nq).step_by(QUERY_TILE) {
            let qn = (q0 + QUERY_TILE).min(nq) - q0;
            for i in 0..qn {
                let a = &query[(q0 + i) * channels..(q0 + i + 1) * channels];
                let row = &mut tile[i * tn..(i + 1) * tn];
                for (j, slot) in row.iter_mut().enumerate() {
                    let b = &template[(t0 + j) * channels..(t0 + j + 1) * channels];
                    *slot = a.iter().zip(b).map(|(x, y)| x * y).sum();
                }
            }
            for i in 0..qn {
                let row = &tile[i * tn..i * tn + tn];
                best[q0 + i] = row.iter().copied().fold(best[q0 + i], f64::max);
            }
        }
    }
    best
}

fn check_input(input: &FeatureGrid, template_channels: usize) -> Result<()> {
    if !input.is_normalized() {
        return Err(Error::Precondition("matching input must be L2-normalized".into()));
    }
    if input.channels() != template_channels {
        return Err(Error::InvalidArgument(format!(
            "input has {} channels, template has {}",
            input.channels(),
            template_channels
        )));
    }
    Ok(())
}

/// Per-class max-similarity maps of `input` against a grid template.
///
/// Each returned map has `input.height() * input.width()` entries.
pub fn match_grid(input: &FeatureGrid, template: &WeightedTemplate) -> Result<[Vec<f64>; CLASS_COUNT]> {
    check_input(input, template.channels())?;
    let query = input.pixel_major();
    let nq = input.pixel_count();
    let run = |class: usize| {
        let grid = template.class_grid(class);
        max_dot_rows(&query, nq, &grid.pixel_major(), grid.pixel_count(), input.channels())
    };
    Ok([run(0), run(1)])
}

/// Per-class similarity maps against the single medial vector per class
/// (the max over a one-element template is the element itself).
pub fn match_vector(input: &FeatureGrid, medial: &MedialTemplate) -> Result<[Vec<f64>; CLASS_COUNT]> {
    if !medial.is_initialized() {
        return Err(Error::Precondition(
            "medial template has not been initialized".into(),
        ));
    }
    check_input(input, medial.channels())?;
    let n = input.pixel_count();
    let run = |class: usize| {
        let v = medial.class_vector(class);
        let mut map = vec![0.0; n];
        for (c, &vc) in v.iter().enumerate() {
            let ch = input.channel(c);
            for (slot, x) in map.iter_mut().zip(ch) {
                *slot += x * vc;
            }
        }
        map
    };
    Ok([run(0), run(1)])
}

/// Runs every enabled matching kind and bundles the maps per class, in
/// stack order (medial, global, local). The set must be non-empty.
pub fn match_all(
    input: &FeatureGrid,
    bank: &TemplateBank,
    enabled: MatchKindSet,
) -> Result<SimilarityStack> {
    if enabled.is_empty() {
        return Err(Error::InvalidArgument("no matching kinds enabled".into()));
    }
    let mut per_class: [Vec<SimilarityMap>; CLASS_COUNT] = [Vec::new(), Vec::new()];
    for kind in enabled.iter() {
        let maps = match kind {
            MatchKind::Medial => match_vector(input, &bank.medial)?,
            MatchKind::Global => match_grid(input, &bank.global)?,
            MatchKind::Local => match_grid(input, &bank.local)?,
        };
        for (class, values) in maps.into_iter().enumerate() {
            per_class[class].push(SimilarityMap { kind, values });
        }
    }
    Ok(SimilarityStack { height: input.height(), width: input.width(), per_class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ProbabilityField;
    use crate::synth::{self, SplitMix64};

    fn random_normalized(c: usize, h: usize, w: usize, seed: u64) -> FeatureGrid {
        let mut rng = SplitMix64::new(seed);
        synth::random_feature_grid(&mut rng, c, h, w).l2_normalized()
    }

    fn random_probs(h: usize, w: usize, seed: u64) -> ProbabilityField {
        let mut rng = SplitMix64::new(seed);
        synth::random_prob_field(&mut rng, h, w)
    }

    fn bank_from(features: &FeatureGrid, probs: &ProbabilityField) -> TemplateBank {
        let global = WeightedTemplate::new(features, probs, 0).unwrap();
        let medial = MedialTemplate::new(features.channels(), 0.1)
            .unwrap()
            .updated(&crate::templates::medial_summary(&global, probs).unwrap())
            .unwrap();
        TemplateBank { local: global.clone(), global, medial }
    }

    #[test]
    fn self_match_with_full_foreground_scores_one_everywhere() {
        let features = random_normalized(4, 5, 5, 1);
        let fg = vec![true; 25];
        let probs = ProbabilityField::from_fg_mask(&fg, 5, 5).unwrap();
        let t = WeightedTemplate::new(&features, &probs, 0).unwrap();
        let maps = match_grid(&features, &t).unwrap();
        for &v in &maps[1] {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_foreground_template_scores_zero() {
        let features = random_normalized(3, 4, 4, 2);
        let probs = ProbabilityField::from_fg_mask(&[false; 16], 4, 4).unwrap();
        let t = WeightedTemplate::new(&features, &probs, 0).unwrap();
        let other = random_normalized(3, 4, 4, 3);
        let maps = match_grid(&other, &t).unwrap();
        assert!(maps[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_bruteforce_oracle_on_random_grids() {
        let input = random_normalized(8, 6, 6, 4);
        let tf = random_normalized(8, 4, 4, 5);
        let probs = random_probs(4, 4, 6);
        let t = WeightedTemplate::new(&tf, &probs, 0).unwrap();
        let fast = match_grid(&input, &t).unwrap();
        let slow = synth::oracle_match(&input, &t);
        for k in 0..2 {
            for (a, b) in fast[k].iter().zip(&slow[k]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scores_stay_within_unit_bound() {
        for seed in 0..20 {
            let input = random_normalized(5, 6, 6, 100 + seed);
            let tf = random_normalized(5, 5, 3, 200 + seed);
            let probs = random_probs(5, 3, 300 + seed);
            let t = WeightedTemplate::new(&tf, &probs, 0).unwrap();
            let maps = match_grid(&input, &t).unwrap();
            for k in 0..2 {
                for &v in &maps[k] {
                    assert!(v.abs() <= 1.0 + 1e-6);
                }
            }
        }
    }

    #[test]
    fn template_pixel_permutation_leaves_maps_unchanged() {
        let tf = random_normalized(4, 4, 4, 7);
        let probs = random_probs(4, 4, 8);
        let input = random_normalized(4, 3, 3, 9);

        let mut rng = SplitMix64::new(10);
        let mut perm: Vec<usize> = (0..16).collect();
        for i in (1..16).rev() {
            perm.swap(i, rng.next_below(i + 1));
        }

        let permute = |src: &[f64], planes: usize| {
            let mut out = vec![0.0; src.len()];
            for plane in 0..planes {
                for (p, &q) in perm.iter().enumerate() {
                    out[plane * 16 + p] = src[plane * 16 + q];
                }
            }
            out
        };
        let tf_p = FeatureGrid::new(4, 4, 4, permute(tf.data(), 4)).unwrap().l2_normalized();
        let probs_p = ProbabilityField::new(2, 4, 4, permute(probs.data(), 2)).unwrap();

        let t = WeightedTemplate::new(&tf, &probs, 0).unwrap();
        let t_p = WeightedTemplate::new(&tf_p, &probs_p, 0).unwrap();
        let a = match_grid(&input, &t).unwrap();
        let b = match_grid(&input, &t_p).unwrap();
        for k in 0..2 {
            for (x, y) in a[k].iter().zip(&b[k]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raising_a_positive_max_weight_never_lowers_scores() {
        // All-positive features make every cosine positive, so any weight
        // increase can only raise the max.
        let mut rng = SplitMix64::new(11);
        let positive = |c: usize, h: usize, w: usize, rng: &mut SplitMix64| {
            let data: Vec<f64> = (0..c * h * w).map(|_| 0.05 + rng.next_unit()).collect();
            FeatureGrid::new(c, h, w, data).unwrap().l2_normalized()
        };
        let tf = positive(3, 3, 3, &mut rng);
        let input = positive(3, 4, 4, &mut rng);
        let probs = random_probs(3, 3, 12);
        let before = match_grid(&input, &WeightedTemplate::new(&tf, &probs, 0).unwrap()).unwrap();

        let mut data = probs.data().to_vec();
        let bumped = (data[9 + 4] + 0.3).min(1.0);
        data[9 + 4] = bumped;
        data[4] = 1.0 - bumped;
        let probs2 = ProbabilityField::new(2, 3, 3, data).unwrap();
        let after = match_grid(&input, &WeightedTemplate::new(&tf, &probs2, 0).unwrap()).unwrap();
        for (a, b) in before[1].iter().zip(&after[1]) {
            assert!(b >= &(a - 1e-12));
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let input = random_normalized(3, 2, 2, 13);
        let tf = random_normalized(4, 2, 2, 14);
        let probs = random_probs(2, 2, 15);
        let t = WeightedTemplate::new(&tf, &probs, 0).unwrap();
        assert!(matches!(match_grid(&input, &t), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unnormalized_input_rejected() {
        let input = FeatureGrid::new(2, 1, 1, vec![3.0, 4.0]).unwrap();
        let tf = random_normalized(2, 2, 2, 16);
        let probs = random_probs(2, 2, 17);
        let t = WeightedTemplate::new(&tf, &probs, 0).unwrap();
        assert!(matches!(match_grid(&input, &t), Err(Error::Precondition(_))));
    }

    #[test]
    fn vector_match_attains_one_on_aligned_pixel() {
        let input = random_normalized(3, 3, 3, 18);
        let target = input.pixel_vector(4);
        let medial = MedialTemplate::from_parts([vec![0.0; 3], target], 0.1, true).unwrap();
        let maps = match_vector(&input, &medial).unwrap();
        assert!((maps[1][4] - 1.0).abs() < 1e-9);
        assert!(maps[1].iter().all(|&v| v <= 1.0 + 1e-9));
    }

    #[test]
    fn vector_match_zero_vector_scores_zero() {
        let input = random_normalized(3, 2, 2, 19);
        let medial = MedialTemplate::from_parts([vec![0.0; 3], vec![0.0; 3]], 0.1, true).unwrap();
        let maps = match_vector(&input, &medial).unwrap();
        assert!(maps[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vector_match_equals_scalar_dot_products() {
        let input = random_normalized(4, 3, 2, 20);
        let mut rng = SplitMix64::new(21);
        let v0: Vec<f64> = (0..4).map(|_| rng.next_signed_unit() * 0.5).collect();
        let v1: Vec<f64> = (0..4).map(|_| rng.next_signed_unit() * 0.5).collect();
        let medial = MedialTemplate::from_parts([v0.clone(), v1.clone()], 0.1, true).unwrap();
        let maps = match_vector(&input, &medial).unwrap();
        for p in 0..6 {
            let x = input.pixel_vector(p);
            let d0: f64 = x.iter().zip(&v0).map(|(a, b)| a * b).sum();
            let d1: f64 = x.iter().zip(&v1).map(|(a, b)| a * b).sum();
            assert!((maps[0][p] - d0).abs() < 1e-12);
            assert!((maps[1][p] - d1).abs() < 1e-12);
        }
    }

    #[test]
    fn uninitialized_medial_rejected() {
        let input = random_normalized(3, 2, 2, 22);
        let medial = MedialTemplate::new(3, 0.1).unwrap();
        assert!(matches!(match_vector(&input, &medial), Err(Error::Precondition(_))));
    }

    #[test]
    fn stack_widths_follow_enabled_kinds() {
        let features = random_normalized(3, 4, 4, 23);
        let probs = random_probs(4, 4, 24);
        let bank = bank_from(&features, &probs);
        let input = random_normalized(3, 4, 4, 25);

        let g = match_all(&input, &bank, MatchKindSet::new(&[MatchKind::Global])).unwrap();
        assert_eq!(g.map_count(), 1);
        let gl = match_all(
            &input,
            &bank,
            MatchKindSet::new(&[MatchKind::Global, MatchKind::Local]),
        )
        .unwrap();
        assert_eq!(gl.map_count(), 2);
        let all = match_all(&input, &bank, MatchKindSet::all()).unwrap();
        assert_eq!(all.map_count(), 3);

        let kinds: Vec<MatchKind> = all.maps(0).iter().map(|m| m.kind).collect();
        assert_eq!(kinds, vec![MatchKind::Medial, MatchKind::Global, MatchKind::Local]);
        let kinds_fg: Vec<MatchKind> = all.maps(1).iter().map(|m| m.kind).collect();
        assert_eq!(kinds, kinds_fg);
    }

    #[test]
    fn empty_kind_set_rejected() {
        let features = random_normalized(3, 3, 3, 26);
        let probs = random_probs(3, 3, 27);
        let bank = bank_from(&features, &probs);
        let err = match_all(&features, &bank, MatchKindSet::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn class_grid_preserves_map_order_and_values() {
        let features = random_normalized(3, 3, 3, 28);
        let probs = random_probs(3, 3, 29);
        let bank = bank_from(&features, &probs);
        let stack = match_all(&features, &bank, MatchKindSet::all()).unwrap();
        let grid = stack.class_grid(1);
        assert_eq!(grid.channels(), 3);
        for (i, map) in stack.maps(1).iter().enumerate() {
            assert_eq!(grid.channel(i), map.values.as_slice());
        }
    }
}
