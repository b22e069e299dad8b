//! Verify the fusion head's analytic gradient against central finite
//! differences, show the step-halving (Richardson) behavior that
//! distinguishes truncation error from a wrong gradient, and calibrate
//! the head on a first frame by plain gradient descent.
//!
//!     cargo run --example grad_check

use matchtrack::fusion::{
    check_instance, cross_entropy, fit_first_frame, fuse, grad_check, grad_check_with_step,
    FusionParams,
};

fn main() -> matchtrack::Result<()> {
    println!("seed | max relative error (analytic vs central differences, h = 1e-5)");
    let mut worst = 0.0f64;
    for seed in 0..8u64 {
        let err = grad_check(seed);
        worst = worst.max(err);
        println!("{seed:4} | {err:.3e}");
    }
    println!("worst of 8: {worst:.3e} (gate is 1e-4)\n");

    // Halving h divides the finite-difference truncation error by ~4: the
    // mismatch is O(h^2), which is what a correct analytic gradient leaves
    // behind. A wrong gradient would pin the error at O(1).
    let coarse = grad_check_with_step(42, 2e-3);
    let fine = grad_check_with_step(42, 1e-3);
    println!("step 2e-3 -> error {coarse:.3e}");
    println!("step 1e-3 -> error {fine:.3e}");
    println!("ratio {:.2} (expect about 4)\n", coarse / fine);

    // First-frame calibration: the cross-entropy is convex in the head's
    // parameters, so plain descent from the all-ones defaults converges.
    let inst = check_instance(7);
    let loss = |params: &FusionParams| -> matchtrack::Result<f64> {
        cross_entropy(&fuse(&inst.features, &inst.prev, params)?, &inst.target)
    };
    let defaults = FusionParams::default_for_width(inst.params.width());
    println!("loss with default parameters: {:.6}", loss(&defaults)?);
    for steps in [10, 50, 200] {
        let fitted = fit_first_frame(&inst.features, &inst.prev, &inst.target, steps, 0.5)?;
        println!("loss after {steps:3} descent steps: {:.6}", loss(&fitted)?);
    }
    Ok(())
}
