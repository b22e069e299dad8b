//! End-to-end gates, one test per criterion. Each prints a single
//! `criterion N PASS/FAIL` line (visible with `--nocapture`); tolerances
//! are pinned here, next to the checks they gate.

use std::time::Instant;

use matchtrack::attention::{channel_affinity, channel_attention, spatial_affinity, spatial_attention};
use matchtrack::error::FileErrorKind;
use matchtrack::fusion::grad_check;
use matchtrack::grid::ProbabilityField;
use matchtrack::matching::match_grid;
use matchtrack::metrics::{boundary_f, region_j, EvalReport, FrameScore, LabelMask};
use matchtrack::synth::{
    gen_sequence, oracle_attention, oracle_boundary_f, oracle_ema, oracle_match,
    random_feature_grid, random_label_mask, random_prob_field, AttentionKind, ObjectSpec,
    SplitMix64, SynthSpec,
};
use matchtrack::templates::{MedialTemplate, WeightedTemplate};
use matchtrack::tracker::{run_sequence, TrackerConfig, TrackerMode};

fn gate(criterion: usize, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    println!("criterion {criterion} {status}: {detail}");
    assert!(passed, "criterion {criterion} FAIL: {detail}");
}

/// Criterion 1: the blocked matcher equals the scalar oracle on 200
/// seeded instances (C <= 8, grids <= 8x8) within 1e-6, in under 10 s.
#[test]
fn criterion_1_matching_oracle_equivalence() {
    const TOLERANCE: f64 = 1e-6;
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = SplitMix64::new(0xC1_0000 + seed);
        let dim = |rng: &mut SplitMix64| 1 + (rng.next_u64() % 8) as usize;
        let c = dim(&mut rng);
        let (h, w) = (dim(&mut rng), dim(&mut rng));
        let (th, tw) = (dim(&mut rng), dim(&mut rng));
        let input = random_feature_grid(&mut rng, c, h, w).l2_normalized();
        let source = random_feature_grid(&mut rng, c, th, tw).l2_normalized();
        let probs = random_prob_field(&mut rng, th, tw);
        let template = WeightedTemplate::new(&source, &probs, 0).unwrap();
        let fast = match_grid(&input, &template).unwrap();
        let slow = oracle_match(&input, &template);
        for class in 0..2 {
            for (a, b) in fast[class].iter().zip(&slow[class]) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    gate(
        1,
        worst <= TOLERANCE && elapsed.as_secs_f64() < 10.0,
        &format!(
            "max |blocked - oracle| {worst:.3e} over 200 instances (tolerance {TOLERANCE:.0e}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Criterion 2: both attention branches equal the dense oracle on 200
/// seeded stacks (n in 1..=3, grids <= 6x6) within 1e-6, and affinity
/// rows sum to 1 within 1e-6.
#[test]
fn criterion_2_attention_oracle_equivalence() {
    const TOLERANCE: f64 = 1e-6;
    let mut worst = 0.0f64;
    let mut worst_row = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = SplitMix64::new(0xC2_0000 + seed);
        let n = 1 + (rng.next_u64() % 3) as usize;
        let h = 1 + (rng.next_u64() % 6) as usize;
        let w = 1 + (rng.next_u64() % 6) as usize;
        let stack = random_feature_grid(&mut rng, n, h, w);
        let gamma = 0.25 + 1.5 * rng.next_unit();
        for (fast, kind) in [
            (spatial_attention(&stack, gamma).unwrap(), AttentionKind::Spatial),
            (channel_attention(&stack, gamma).unwrap(), AttentionKind::Channel),
        ] {
            let slow = oracle_attention(&stack, gamma, kind);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                worst = worst.max((a - b).abs());
            }
        }
        let pixels = h * w;
        for (affinity, rows, cols) in
            [(spatial_affinity(&stack), pixels, pixels), (channel_affinity(&stack), n, n)]
        {
            for row in 0..rows {
                let sum: f64 = affinity[row * cols..(row + 1) * cols].iter().sum();
                worst_row = worst_row.max((sum - 1.0).abs());
            }
        }
    }
    gate(
        2,
        worst <= TOLERANCE && worst_row <= TOLERANCE,
        &format!(
            "max |attention - oracle| {worst:.3e}, max row-sum deviation {worst_row:.3e} \
             over 200 stacks (tolerance {TOLERANCE:.0e})"
        ),
    );
}

/// Criterion 3: the two weighted templates rebuild the input, per
/// element, within 1e-6, on 100 random instances.
#[test]
fn criterion_3_template_completeness() {
    const TOLERANCE: f64 = 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = SplitMix64::new(0xC3_0000 + seed);
        let c = 1 + (rng.next_u64() % 8) as usize;
        let h = 1 + (rng.next_u64() % 8) as usize;
        let w = 1 + (rng.next_u64() % 8) as usize;
        let features = random_feature_grid(&mut rng, c, h, w).l2_normalized();
        let probs = random_prob_field(&mut rng, h, w);
        let template = WeightedTemplate::new(&features, &probs, 0).unwrap();
        for i in 0..features.data().len() {
            let rebuilt = template.class_grid(0).data()[i] + template.class_grid(1).data()[i];
            worst = worst.max((rebuilt - features.data()[i]).abs());
        }
    }
    gate(
        3,
        worst <= TOLERANCE,
        &format!("max |Y0 + Y1 - X| {worst:.3e} over 100 instances (tolerance {TOLERANCE:.0e})"),
    );
}

/// Criterion 4: the EMA state matches the closed form after every prefix
/// of 1..=50 updates, for four blend rates, within 1e-9; the alpha = 1
/// replacement and the first-update initialization are bit-exact.
#[test]
fn criterion_4_ema_closed_form() {
    const TOLERANCE: f64 = 1e-9;
    let mut worst = 0.0f64;
    let mut exact = true;
    for (i, alpha) in [0.05, 0.1, 0.5, 1.0].into_iter().enumerate() {
        let mut rng = SplitMix64::new(0xC4_0000 + i as u64);
        let channels = 5;
        let summaries: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..channels).map(|_| rng.next_signed_unit()).collect())
            .collect();
        let mut medial = MedialTemplate::new(channels, alpha).unwrap();
        for n in 1..=50usize {
            let s = &summaries[n - 1];
            medial = medial.updated(&[s.clone(), s.clone()]).unwrap();
            let expected = oracle_ema(&summaries[..n], alpha);
            for (a, b) in medial.class_vector(0).iter().zip(&expected) {
                worst = worst.max((a - b).abs());
            }
            if n == 1 || alpha == 1.0 {
                // First update copies; alpha = 1 replaces. Both bit-exact.
                exact &= medial.class_vector(0) == s.as_slice();
            }
        }
    }
    gate(
        4,
        worst <= TOLERANCE && exact,
        &format!(
            "max |EMA - closed form| {worst:.3e} over 4 rates x 50 prefixes \
             (tolerance {TOLERANCE:.0e}); replacement/init cases bit-exact: {exact}"
        ),
    );
}

/// Criterion 5: analytic fusion gradients vs central differences
/// (h = 1e-5) on 100 seeds, max relative error below 1e-4.
#[test]
fn criterion_5_gradient_check() {
    const TOLERANCE: f64 = 1e-4;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        worst = worst.max(grad_check(seed));
    }
    gate(
        5,
        worst < TOLERANCE,
        &format!("max relative error {worst:.3e} over 100 seeds (tolerance {TOLERANCE:.0e})"),
    );
}

/// Criterion 6: the dilation-based boundary score equals the brute-force
/// oracle's coverage reading on 1000 random masks at tolerances 0 and 1,
/// within 1e-9; region hand cases are exact.
#[test]
fn criterion_6_metric_oracle_equivalence() {
    const TOLERANCE: f64 = 1e-9;
    let mut worst = 0.0f64;
    let mut rng = SplitMix64::new(0xC6_0000);
    for _ in 0..1000 {
        let h = 1 + (rng.next_u64() % 8) as usize;
        let w = 1 + (rng.next_u64() % 8) as usize;
        let pred = random_label_mask(&mut rng, h, w, 1);
        let gt = random_label_mask(&mut rng, h, w, 1);
        for tol in [0u32, 1] {
            let fast = boundary_f(&pred, &gt, 1, tol).unwrap();
            let slow = oracle_boundary_f(&pred, &gt, 1, tol).unwrap();
            worst = worst.max((fast - slow.coverage_f).abs());
        }
    }
    let mask = |cells: &[usize]| {
        let mut labels = vec![0u8; 16];
        for &c in cells {
            labels[c] = 1;
        }
        LabelMask::new(4, 4, labels).unwrap()
    };
    let identity = mask(&[5, 6, 9, 10]);
    let disjoint_a = mask(&[0, 1]);
    let disjoint_b = mask(&[14, 15]);
    // 2x2 vs 2x2 shifted one row: intersection 2, union 6.
    let overlap_a = mask(&[0, 1, 4, 5]);
    let overlap_b = mask(&[4, 5, 8, 9]);
    let hand = region_j(&identity, &identity, 1).unwrap() == 1.0
        && region_j(&disjoint_a, &disjoint_b, 1).unwrap() == 0.0
        && region_j(&overlap_a, &overlap_b, 1).unwrap() == 2.0 / 6.0;
    gate(
        6,
        worst <= TOLERANCE && hand,
        &format!(
            "max |dilated - oracle| {worst:.3e} over 1000 masks x 2 tolerances \
             (tolerance {TOLERANCE:.0e}); region hand cases exact: {hand}"
        ),
    );
}

/// Criterion 7: a noise-free 10-frame sequence tracked in G mode scores
/// J&F = 1.0 exactly at feature resolution, in under 5 s.
///
/// The disk is static: with the default all-ones head, exactness needs
/// the propagated previous mask to stay aligned with the ground truth,
/// which a fixed disk guarantees by induction.
#[test]
fn criterion_7_noise_free_anchor() {
    let start = Instant::now();
    let spec = SynthSpec {
        height: 14,
        width: 14,
        channels: 4,
        frames: 10,
        objects: vec![ObjectSpec {
            start: (6.0, 7.0),
            velocity: (0.0, 0.0),
            radius: 3.1,
            signature: vec![1.0, 0.1, 0.0, 0.4],
        }],
        background: vec![0.0, 0.8, 0.9, 0.0],
        noise: 0.0,
        seed: 0xC7,
    };
    let (frames, gt_masks) = gen_sequence(&spec).unwrap();
    let init = ProbabilityField::from_fg_mask(&gt_masks[0].binary(1), 14, 14).unwrap();
    let config = TrackerConfig::with_mode(TrackerMode::Global);
    let predicted = run_sequence(&frames, &init, &config).unwrap();
    let mut min_j = 1.0f64;
    let mut min_f = 1.0f64;
    for (probs, gt) in predicted.iter().zip(&gt_masks) {
        let labels: Vec<u8> =
            probs.class_plane(1).iter().map(|&p| if p > 0.5 { 1 } else { 0 }).collect();
        let pred = LabelMask::new(14, 14, labels).unwrap();
        min_j = min_j.min(region_j(&pred, gt, 1).unwrap());
        min_f = min_f.min(boundary_f(&pred, gt, 1, 1).unwrap());
    }
    let elapsed = start.elapsed();
    gate(
        7,
        min_j == 1.0 && min_f == 1.0 && elapsed.as_secs_f64() < 5.0,
        &format!(
            "min J {min_j} min F {min_f} over 10 noise-free frames (want exactly 1.0), {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// One trend-suite sequence: a drifting target disk partially occluded
/// mid-sequence by a second disk crossing its path, noise 0.3, with
/// per-case jitter on geometry. Object 1 is the tracked target; object 2
/// paints over it during the crossing.
fn trend_spec(case: u64) -> SynthSpec {
    let mut rng = SplitMix64::new(0xAB1E + case);
    let mut jitter = |scale: f64| (rng.next_unit() - 0.5) * 2.0 * scale;
    SynthSpec {
        height: 16,
        width: 16,
        channels: 6,
        frames: 12,
        objects: vec![
            ObjectSpec {
                start: (4.5 + jitter(0.4), 8.0 + jitter(0.6)),
                velocity: (0.32 + jitter(0.04), jitter(0.03)),
                radius: 2.4 + jitter(0.2),
                signature: vec![1.0, 0.05, 0.0, 0.6, 0.0, 0.1],
            },
            ObjectSpec {
                start: (11.5 + jitter(0.4), 4.0 + jitter(0.4)),
                velocity: (-0.16 + jitter(0.03), 0.55 + jitter(0.04)),
                radius: 2.1 + jitter(0.15),
                signature: vec![0.0, 1.0, 0.4, 0.0, 0.7, 0.0],
            },
        ],
        background: vec![0.1, 0.0, 0.8, 0.1, 0.0, 0.9],
        noise: 0.3,
        seed: 0x5EED_0000 + case,
    }
}

fn trend_suite_jf(mode: TrackerMode) -> f64 {
    let config = TrackerConfig::with_mode(mode);
    let mut scores = Vec::new();
    for case in 0..10u64 {
        let spec = trend_spec(case);
        let (frames, gt_masks) = gen_sequence(&spec).unwrap();
        let init = ProbabilityField::from_fg_mask(
            &gt_masks[0].binary(1),
            spec.height,
            spec.width,
        )
        .unwrap();
        let predicted = run_sequence(&frames, &init, &config).unwrap();
        for (frame, (probs, gt)) in predicted.iter().zip(&gt_masks).enumerate() {
            let labels: Vec<u8> =
                probs.class_plane(1).iter().map(|&p| if p > 0.5 { 1 } else { 0 }).collect();
            let pred = LabelMask::new(spec.height, spec.width, labels).unwrap();
            scores.push(FrameScore {
                sequence: format!("case{case:02}"),
                object: 1,
                frame,
                j: region_j(&pred, gt, 1).unwrap(),
                f: boundary_f(&pred, gt, 1, 1).unwrap(),
            });
        }
    }
    EvalReport::from_scores(scores).unwrap().jf_mean()
}

/// Suite-mean J&F per mode, frozen from the first observation run; the
/// regression tolerance absorbs cross-platform libm differences only.
const FROZEN_TREND_JF: [(TrackerMode, f64); 4] = [
    (TrackerMode::Global, 0.964830946907),
    (TrackerMode::GlobalLocal, 0.987815460862),
    (TrackerMode::GlobalLocalMedial, 0.999100783476),
    (TrackerMode::GlobalLocalMedialAttention, 1.0),
];
const TREND_REGRESSION_TOLERANCE: f64 = 5e-3;

/// Criterion 8: on the occlusion suite, adding local matching does not
/// hurt (GL >= G) and adding the medial template does not hurt
/// (GLM >= GL). The attention row is reported and regression-guarded but
/// not order-gated. Under 60 s.
#[test]
fn criterion_8_component_trend() {
    let start = Instant::now();
    let observed: Vec<(TrackerMode, f64)> =
        TrackerMode::ALL.iter().map(|&mode| (mode, trend_suite_jf(mode))).collect();
    let score = |mode: TrackerMode| observed.iter().find(|(m, _)| *m == mode).unwrap().1;
    let (g, gl, glm, glma) = (
        score(TrackerMode::Global),
        score(TrackerMode::GlobalLocal),
        score(TrackerMode::GlobalLocalMedial),
        score(TrackerMode::GlobalLocalMedialAttention),
    );
    let ordered = gl >= g && glm >= gl;
    let frozen_ok = FROZEN_TREND_JF.iter().all(|&(mode, frozen)| {
        (score(mode) - frozen).abs() <= TREND_REGRESSION_TOLERANCE
    });
    let elapsed = start.elapsed();
    gate(
        8,
        ordered && frozen_ok && elapsed.as_secs_f64() < 60.0,
        &format!(
            "suite J&F: G {g:.4}, GL {gl:.4}, GLM {glm:.4}, GLMA {glma:.4} (reported); \
             ordering GL>=G and GLM>=GL: {ordered}; within {TREND_REGRESSION_TOLERANCE} \
             of frozen run: {frozen_ok}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Criterion 9: `synth` and `track` write byte-identical outputs when run
/// twice with the same inputs.
#[test]
fn criterion_9_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("seq.cfg");
    let spec = SynthSpec {
        height: 12,
        width: 12,
        channels: 3,
        frames: 5,
        objects: vec![ObjectSpec {
            start: (5.0, 6.0),
            velocity: (0.4, 0.1),
            radius: 2.2,
            signature: vec![1.0, 0.0, 0.3],
        }],
        background: vec![0.0, 1.0, 0.2],
        noise: 0.25,
        seed: 0xC9,
    };
    std::fs::write(&spec_path, matchtrack::io::format_synth_spec(&spec)).unwrap();

    let run = |args: &[&str]| {
        let mut argv = vec!["matchtrack".to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        matchtrack::cli::run_cli(argv)
    };
    let dir_bytes = |path: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let mut entries: Vec<_> = std::fs::read_dir(path)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| {
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect();
        entries.sort();
        entries
    };

    let mut synth_runs = Vec::new();
    let mut track_runs = Vec::new();
    for pass in 0..2 {
        let synth_out = dir.path().join(format!("synth{pass}"));
        assert_eq!(
            run(&["synth", "--spec", spec_path.to_str().unwrap(), "--out", synth_out.to_str().unwrap()]),
            0
        );
        let track_out = dir.path().join(format!("track{pass}"));
        let init = synth_out.join("mask_0000.pgm");
        assert_eq!(
            run(&[
                "track",
                "--frames",
                synth_out.to_str().unwrap(),
                "--init-mask",
                init.to_str().unwrap(),
                "--mode",
                "GLM",
                "--out",
                track_out.to_str().unwrap(),
            ]),
            0
        );
        synth_runs.push(dir_bytes(&synth_out));
        track_runs.push(dir_bytes(&track_out));
    }
    let synth_files = synth_runs[0].len();
    let track_files = track_runs[0].len();
    let same = synth_runs[0] == synth_runs[1] && track_runs[0] == track_runs[1];
    gate(
        9,
        same && synth_files == 10 && track_files == 5,
        &format!(
            "two synth runs ({synth_files} files) and two track runs ({track_files} files) \
             byte-identical: {same}"
        ),
    );
}

/// Criterion 10: 100 random tensors and masks survive write -> read
/// bit-exactly, and each malformed-file case reports its designated
/// error kind.
#[test]
fn criterion_10_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(0xCA_0000);
    let mut round_trips_ok = true;
    for i in 0..100 {
        let c = 1 + (rng.next_u64() % 6) as usize;
        let h = 1 + (rng.next_u64() % 8) as usize;
        let w = 1 + (rng.next_u64() % 8) as usize;
        let grid = random_feature_grid(&mut rng, c, h, w);
        let tensor_path = dir.path().join(format!("t{i}.pmt"));
        matchtrack::io::write_tensor(&tensor_path, &grid).unwrap();
        let grid_back = matchtrack::io::read_tensor(&tensor_path).unwrap();
        round_trips_ok &= grid_back
            .data()
            .iter()
            .zip(grid.data())
            .all(|(a, b)| (*a as f32).to_bits() == (*b as f32).to_bits());

        let mask = random_label_mask(&mut rng, h, w, 4);
        let mask_path = dir.path().join(format!("m{i}.pgm"));
        matchtrack::io::write_mask(&mask_path, &mask).unwrap();
        round_trips_ok &= matchtrack::io::read_mask(&mask_path, Some(4)).unwrap() == mask;
    }

    let tensor_case = |bytes: &[u8]| {
        let path = dir.path().join("bad.pmt");
        std::fs::write(&path, bytes).unwrap();
        matchtrack::io::read_tensor(&path).unwrap_err().file_kind()
    };
    let mask_case = |bytes: &[u8], declared: Option<u8>| {
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, bytes).unwrap();
        matchtrack::io::read_mask(&path, declared).unwrap_err().file_kind()
    };
    let good_tensor = {
        let mut b = Vec::new();
        b.extend_from_slice(b"PMT1");
        for d in [1u32, 1, 2] {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&2.0f32.to_le_bytes());
        b
    };
    let mut nan_tensor = good_tensor.clone();
    nan_tensor[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
    let mut zero_dim = good_tensor.clone();
    zero_dim[4..8].copy_from_slice(&0u32.to_le_bytes());
    let malformed_ok = tensor_case(b"XXXX") == Some(FileErrorKind::BadMagic)
        && tensor_case(&good_tensor[..18]) == Some(FileErrorKind::TruncatedPayload)
        && tensor_case(&[good_tensor.clone(), vec![0]].concat()) == Some(FileErrorKind::TrailingData)
        && tensor_case(&nan_tensor) == Some(FileErrorKind::NonFinite)
        && tensor_case(&zero_dim) == Some(FileErrorKind::BadHeader)
        && mask_case(b"P6\n1 1\n255\n\x00", None) == Some(FileErrorKind::BadMagic)
        && mask_case(b"P5\n1 1\n15\n\x00", None) == Some(FileErrorKind::BadHeader)
        && mask_case(b"P5\n2 2\n255\n\x00", None) == Some(FileErrorKind::TruncatedPayload)
        && mask_case(b"P5\n1 1\n255\n\x00\x01", None) == Some(FileErrorKind::TrailingData)
        && mask_case(b"P5\n1 1\n255\n\xFF", Some(2)) == Some(FileErrorKind::LabelRange);
    gate(
        10,
        round_trips_ok && malformed_ok,
        &format!(
            "100 tensor + 100 mask round trips bit-exact: {round_trips_ok}; \
             10 malformed cases -> designated kinds: {malformed_ok}"
        ),
    );
}
