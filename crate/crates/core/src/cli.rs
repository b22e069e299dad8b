//! Command-line surface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! malformed files, invalid values), 3 failed check (`gradcheck`,
//! `selftest`). Diagnostics go to standard error; results to standard
//! output. Every command is deterministic given its inputs: rerunning
//! produces byte-identical files.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, ProbabilityField};
use crate::io;
use crate::matching::match_all;
use crate::metrics::{
    boundary_f, default_boundary_tolerance, region_j, EvalReport, FrameScore, LabelMask,
};
use crate::selftest;
use crate::synth::gen_sequence;
use crate::tracker::{self, FusionSource, TrackerConfig, TrackerMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "matchtrack",
    about = "Pixel-matching object tracker over feature grids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic sequence (frames + ground-truth masks) from a spec file.
    Synth(SynthArgs),
    /// Track the objects of an initial mask through a directory of frames.
    Track(TrackArgs),
    /// Dump per-kind similarity maps for one frame against a saved tracker state.
    Match(MatchArgs),
    /// Score predicted masks against ground truth and write a CSV report.
    Eval(EvalArgs),
    /// Compare analytic fusion gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Run every built-in oracle suite.
    Selftest,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Sequence description (key = value text).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for frame_NNNN.pmt and mask_NNNN.pgm files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Directory of frame_NNNN.pmt feature tensors.
    #[arg(long)]
    frames: PathBuf,
    /// First-frame label mask (PGM).
    #[arg(long)]
    init_mask: PathBuf,
    /// Matching configuration.
    #[arg(long, default_value = "GLM", value_parser = parse_mode)]
    mode: TrackerMode,
    /// Medial template blend rate in (0, 1].
    #[arg(long, default_value_t = crate::templates::DEFAULT_ALPHA)]
    alpha: f64,
    /// Residual scale for both attention branches (GLMA mode only).
    #[arg(long, default_value_t = crate::attention::DEFAULT_GAMMA)]
    gamma: f64,
    /// Fusion parameters: "default", "fit", or a config file path.
    #[arg(long, default_value = "default")]
    fusion: String,
    /// Output directory for predicted mask_NNNN.pgm files.
    #[arg(long)]
    out: PathBuf,
    /// Write the final tracker state here (single-object runs only).
    #[arg(long)]
    save_state: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MatchArgs {
    /// Feature tensor to match.
    #[arg(long)]
    frame: PathBuf,
    /// Tracker state snapshot to match against.
    #[arg(long)]
    state: PathBuf,
    /// Output directory for similarity-map tensors.
    #[arg(long)]
    dump: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of predicted masks.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks.
    #[arg(long)]
    gt: PathBuf,
    /// CSV report path.
    #[arg(long)]
    report: PathBuf,
    /// Boundary tolerance in pixels (default: scaled from the diagonal).
    #[arg(long)]
    tolerance: Option<u32>,
    /// Sequence name in the report (default: the pred directory name).
    #[arg(long)]
    sequence: Option<String>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Number of seeded random instances.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
}

fn parse_mode(text: &str) -> std::result::Result<TrackerMode, String> {
    TrackerMode::parse(text).map_err(|e| e.to_string())
}

/// Parses and runs one invocation; the first argument is the program name.
pub fn run_cli(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    let run = match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Track(args) => cmd_track(&args),
        Command::Match(args) => cmd_match(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Gradcheck(args) => Ok(cmd_gradcheck(&args)),
        Command::Selftest => Ok(cmd_selftest()),
    };
    match run {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_DATA
        }
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.spec)?;
    let spec = io::parse_synth_spec(&text)?;
    let (frames, masks) = gen_sequence(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    for (i, frame) in frames.iter().enumerate() {
        io::write_tensor(&args.out.join(io::frame_file_name(i)), frame)?;
    }
    for (i, mask) in masks.iter().enumerate() {
        io::write_mask(&args.out.join(io::mask_file_name(i)), mask)?;
    }
    println!(
        "wrote {} frames ({}x{}x{}) and {} masks to {}",
        frames.len(),
        spec.channels,
        spec.height,
        spec.width,
        masks.len(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn read_frames(dir: &Path) -> Result<Vec<FeatureGrid>> {
    let paths = io::list_files(dir, "pmt")?;
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .pmt frames in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| io::read_tensor(p)).collect()
}

fn resolve_fusion(source: &str) -> Result<FusionSource> {
    match source {
        "default" => Ok(FusionSource::Default),
        "fit" => Ok(FusionSource::FitFirstFrame),
        path => {
            let text = std::fs::read_to_string(path)?;
            Ok(FusionSource::Params(io::parse_fusion_params(&text)?))
        }
    }
}

fn cmd_track(args: &TrackArgs) -> Result<i32> {
    let frames = read_frames(&args.frames)?;
    let init_mask = io::read_mask(&args.init_mask, None)?;
    let mut labels: Vec<u8> = init_mask.labels().iter().copied().filter(|&l| l != 0).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let config = TrackerConfig {
        mode: args.mode,
        alpha: args.alpha,
        gamma_spatial: args.gamma,
        gamma_channel: args.gamma,
        fusion: resolve_fusion(&args.fusion)?,
    };
    std::fs::create_dir_all(&args.out)?;

    let frame_count = if let [label] = labels[..] {
        // Single object: drive init/step directly so the final state can
        // be snapshotted for later `match` inspection.
        let gt = ProbabilityField::from_fg_mask(
            &init_mask.binary(label),
            init_mask.height(),
            init_mask.width(),
        )?;
        let mut state = tracker::init(&frames[0], &gt, &config)?;
        write_predicted_mask(&args.out, 0, state.prev_probs(), label)?;
        for (i, frame) in frames.iter().enumerate().skip(1) {
            let (mask, next) = tracker::step(&state, frame, &config)?;
            write_predicted_mask(&args.out, i, &mask, label)?;
            state = next;
        }
        if let Some(path) = &args.save_state {
            io::write_state(path, &state)?;
        }
        frames.len()
    } else {
        if args.save_state.is_some() {
            return Err(Error::InvalidArgument(
                "--save-state needs a single-object init mask".into(),
            ));
        }
        let fields: Vec<ProbabilityField> = labels
            .iter()
            .map(|&label| {
                ProbabilityField::from_fg_mask(
                    &init_mask.binary(label),
                    init_mask.height(),
                    init_mask.width(),
                )
            })
            .collect::<Result<_>>()?;
        let composed = tracker::run_multiobject(&frames, &fields, &config)?;
        for (i, mask) in composed.iter().enumerate() {
            // Composition numbers objects by slice position; map back to
            // the labels the init mask actually used.
            let relabeled: Vec<u8> = mask
                .labels()
                .iter()
                .map(|&l| if l == 0 { 0 } else { labels[l as usize - 1] })
                .collect();
            let relabeled = LabelMask::new(mask.height(), mask.width(), relabeled)?;
            io::write_mask(&args.out.join(io::mask_file_name(i)), &relabeled)?;
        }
        composed.len()
    };
    println!(
        "tracked {} object(s) over {} frames in mode {} -> {}",
        labels.len(),
        frame_count,
        config.mode,
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn write_predicted_mask(dir: &Path, index: usize, probs: &ProbabilityField, label: u8) -> Result<()> {
    let fg = probs.class_plane(1);
    let labels: Vec<u8> = fg.iter().map(|&p| if p > 0.5 { label } else { 0 }).collect();
    let mask = LabelMask::new(probs.height(), probs.width(), labels)?;
    io::write_mask(&dir.join(io::mask_file_name(index)), &mask)
}

fn cmd_match(args: &MatchArgs) -> Result<i32> {
    let frame = io::read_tensor(&args.frame)?.l2_normalized();
    let state = io::read_state(&args.state)?;
    let stack = match_all(&frame, state.bank(), crate::matching::MatchKindSet::all())?;
    std::fs::create_dir_all(&args.dump)?;
    let mut written = 0usize;
    for (class, class_name) in [(0usize, "bg"), (1, "fg")] {
        for map in stack.maps(class) {
            let grid = FeatureGrid::new(1, frame.height(), frame.width(), map.values.clone())?;
            let name = format!("sim_{}_{}.pmt", map.kind.label(), class_name);
            io::write_tensor(&args.dump.join(name), &grid)?;
            written += 1;
        }
    }
    println!("wrote {written} similarity maps to {}", args.dump.display());
    Ok(EXIT_OK)
}

fn read_masks(dir: &Path, declared: Option<u8>) -> Result<Vec<LabelMask>> {
    let paths = io::list_files(dir, "pgm")?;
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .pgm masks in {}", dir.display())));
    }
    paths.iter().map(|p| io::read_mask(p, declared)).collect()
}

fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let gt = read_masks(&args.gt, None)?;
    let objects = gt.iter().map(|m| m.max_label()).max().unwrap_or(0);
    if objects == 0 {
        return Err(Error::InvalidArgument("ground truth contains no objects".into()));
    }
    let pred = read_masks(&args.pred, Some(objects))?;
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted masks vs {} ground-truth masks",
            pred.len(),
            gt.len()
        )));
    }
    let tolerance = args
        .tolerance
        .unwrap_or_else(|| default_boundary_tolerance(gt[0].height(), gt[0].width()));
    let sequence = args.sequence.clone().unwrap_or_else(|| {
        args.pred
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into())
    });
    let mut scores = Vec::new();
    for object in 1..=objects {
        for (frame, (p, g)) in pred.iter().zip(&gt).enumerate() {
            scores.push(FrameScore {
                sequence: sequence.clone(),
                object,
                frame,
                j: region_j(p, g, object)?,
                f: boundary_f(p, g, object, tolerance)?,
            });
        }
    }
    let report = EvalReport::from_scores(scores)?;
    io::write_report(&args.report, &report)?;
    println!(
        "J {:.6} F {:.6} J&F {:.6} over {} objects x {} frames (boundary tolerance {tolerance}px) -> {}",
        report.mean_j(),
        report.mean_f(),
        report.jf_mean(),
        objects,
        gt.len(),
        args.report.display()
    );
    Ok(EXIT_OK)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> i32 {
    let mut worst = 0.0f64;
    let mut worst_seed = 0u64;
    for seed in 0..args.seeds {
        let err = crate::fusion::grad_check(seed);
        if err > worst {
            worst = err;
            worst_seed = seed;
        }
    }
    let passed = worst < selftest::GRADIENT_TOLERANCE;
    println!(
        "max relative error {worst:.3e} over {} seeds (worst seed {worst_seed}, tolerance {:.0e})",
        args.seeds,
        selftest::GRADIENT_TOLERANCE
    );
    if passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_selftest() -> i32 {
    let report = selftest::run_all();
    print!("{}", report.render());
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}
