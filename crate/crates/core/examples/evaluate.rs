//! Score predicted masks against ground truth: region overlap J,
//! boundary F at a pixel tolerance, and the frames -> objects ->
//! sequences aggregation behind the CSV report.
//!
//!     cargo run --example evaluate

use matchtrack::io::format_report;
use matchtrack::metrics::{
    boundary_f, default_boundary_tolerance, region_j, EvalReport, FrameScore, LabelMask,
};

fn square(h: usize, w: usize, y0: usize, x0: usize, side: usize) -> LabelMask {
    let mut labels = vec![0u8; h * w];
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            labels[y * w + x] = 1;
        }
    }
    LabelMask::new(h, w, labels).unwrap()
}

fn main() -> matchtrack::Result<()> {
    let gt = square(10, 10, 3, 3, 4);
    println!("pred vs a 4x4 square, at increasing misalignment:");
    println!("shift | J      | F(tol 0) | F(tol 1)");
    for shift in 0..4usize {
        let pred = square(10, 10, 3, 3 + shift, 4);
        println!(
            "{shift:5} | {:.4} | {:.4}   | {:.4}",
            region_j(&pred, &gt, 1)?,
            boundary_f(&pred, &gt, 1, 0)?,
            boundary_f(&pred, &gt, 1, 1)?
        );
    }
    println!(
        "\nJ decays with lost overlap; F forgives shifts up to its tolerance \
         and then drops. Default tolerance for 480x854 frames: {} px.",
        default_boundary_tolerance(480, 854)
    );

    // Aggregation: frame scores average per object, objects per sequence,
    // sequences into the headline J&F.
    let scores = vec![
        FrameScore { sequence: "a".into(), object: 1, frame: 0, j: 1.0, f: 1.0 },
        FrameScore { sequence: "a".into(), object: 1, frame: 1, j: 0.8, f: 0.9 },
        FrameScore { sequence: "a".into(), object: 2, frame: 0, j: 0.6, f: 0.7 },
        FrameScore { sequence: "a".into(), object: 2, frame: 1, j: 0.4, f: 0.5 },
        FrameScore { sequence: "b".into(), object: 1, frame: 0, j: 0.5, f: 0.6 },
        FrameScore { sequence: "b".into(), object: 1, frame: 1, j: 0.7, f: 0.8 },
    ];
    let report = EvalReport::from_scores(scores)?;
    println!("\nCSV report:\n{}", format_report(&report));
    println!(
        "sequence means weight each object equally, then the global mean \
         weights each sequence equally: J {:.4}, F {:.4}, J&F {:.4}",
        report.mean_j(),
        report.mean_f(),
        report.jf_mean()
    );
    Ok(())
}
