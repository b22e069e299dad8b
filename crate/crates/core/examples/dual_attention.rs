//! Run the two parameter-free attention branches over a similarity stack
//! and verify their documented properties on the spot: row-stochastic
//! affinities, the residual at gamma = 0, and agreement with the dense
//! reference implementation.
//!
//!     cargo run --example dual_attention

use matchtrack::attention::{attend, spatial_affinity, spatial_attention};
use matchtrack::synth::{oracle_attention, random_feature_grid, AttentionKind, SplitMix64};

fn main() -> matchtrack::Result<()> {
    let mut rng = SplitMix64::new(3);
    let stack = random_feature_grid(&mut rng, 3, 5, 5);
    let pixels = stack.pixel_count();

    let affinity = spatial_affinity(&stack);
    let sums: Vec<f64> =
        (0..pixels).map(|r| affinity[r * pixels..(r + 1) * pixels].iter().sum()).collect();
    let worst = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    println!("spatial affinity is {pixels}x{pixels}; worst row-sum deviation {worst:.2e}");

    for gamma in [0.0, 0.5, 1.0, 2.0] {
        let out = spatial_attention(&stack, gamma)?;
        let delta: f64 = out
            .data()
            .iter()
            .zip(stack.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("gamma {gamma:3.1}: max |out - stack| = {delta:.4} (0 at gamma 0: pure residual)");
    }

    let gamma = 1.0;
    let fast = spatial_attention(&stack, gamma)?;
    let slow = oracle_attention(&stack, gamma, AttentionKind::Spatial);
    let gap = fast
        .data()
        .iter()
        .zip(slow.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("streamed vs dense-reference spatial branch: max gap {gap:.2e}");

    // attend() packages both branches per class: n maps in, 2n channels out.
    let stack2 = {
        use matchtrack::grid::ProbabilityField;
        use matchtrack::matching::{match_all, MatchKindSet};
        use matchtrack::templates::{medial_summary, MedialTemplate, TemplateBank, WeightedTemplate};
        let features = random_feature_grid(&mut rng, 4, 5, 5).l2_normalized();
        let mut fg = vec![false; 25];
        for p in [6usize, 7, 11, 12] {
            fg[p] = true;
        }
        let probs = ProbabilityField::from_fg_mask(&fg, 5, 5)?;
        let global = WeightedTemplate::new(&features, &probs, 0)?;
        let medial =
            MedialTemplate::new(4, 0.1)?.updated(&medial_summary(&global, &probs)?)?;
        let bank = TemplateBank { local: global.clone(), global, medial };
        match_all(&features, &bank, MatchKindSet::all())?
    };
    let refined = attend(&stack2, gamma, gamma)?;
    println!(
        "attend(): {} maps per class in -> {} channels per class out (spatial half + channel half)",
        stack2.map_count(),
        refined[0].channels()
    );
    Ok(())
}
