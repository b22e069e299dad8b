//! Pixel-matching object tracking over dense feature grids.
//!
//! Given a first-frame mask, the tracker propagates it through a sequence
//! by comparing every pixel of each frame against class templates built
//! from earlier frames:
//!
//! * a **global** template frozen from the first frame,
//! * a **local** template rebuilt from the previous frame's prediction,
//! * a **medial** template, an exponential moving average of per-class
//!   feature summaries over all frames seen so far.
//!
//! Matching is probability-weighted cosine similarity with a max over
//! template pixels, producing one similarity map per class and kind
//! ([`matching`]). Maps can be refined by parameter-free spatial and
//! channel self-attention ([`attention`]), and a small linear fusion head
//! turns them plus the previous mask into logits ([`fusion`]). Region and
//! boundary accuracy follow the usual J and F conventions ([`metrics`]).
//!
//! Everything runs at desk scale against brute-force oracles kept in
//! [`synth`], which also generates the deterministic synthetic sequences
//! the tests and examples use. The [`cli`] module exposes the whole
//! pipeline as subcommands over small binary tensor/mask files.
//!
//! ```
//! use matchtrack::synth::{gen_sequence, ObjectSpec, SynthSpec};
//! use matchtrack::grid::ProbabilityField;
//! use matchtrack::tracker::{run_sequence, TrackerConfig};
//!
//! let spec = SynthSpec {
//!     height: 12,
//!     width: 12,
//!     channels: 3,
//!     frames: 4,
//!     objects: vec![ObjectSpec {
//!         start: (5.0, 6.0),
//!         velocity: (0.5, 0.0),
//!         radius: 2.5,
//!         signature: vec![1.0, 0.0, 0.2],
//!     }],
//!     background: vec![0.0, 1.0, 0.1],
//!     noise: 0.1,
//!     seed: 7,
//! };
//! let (frames, gt) = gen_sequence(&spec)?;
//! let init = ProbabilityField::from_fg_mask(&gt[0].binary(1), 12, 12)?;
//! let masks = run_sequence(&frames, &init, &TrackerConfig::default())?;
//! assert_eq!(masks.len(), frames.len());
//! # Ok::<(), matchtrack::Error>(())
//! ```

pub mod attention;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod selftest;
pub mod synth;
pub mod templates;
pub mod tracker;

pub use error::{Error, FileErrorKind, Result};
pub use grid::{FeatureGrid, ProbabilityField};
pub use matching::{MatchKind, MatchKindSet, SimilarityStack};
pub use metrics::{EvalReport, LabelMask};
pub use templates::TemplateBank;
pub use tracker::{TrackerConfig, TrackerMode, TrackerState};
