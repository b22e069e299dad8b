//! Dual self-attention over similarity-map stacks.
//!
//! Both branches use the maps themselves as queries, keys, and values (no
//! learned projections): energies are Gram matrices, affinities are
//! row-softmaxed energies, and the attended output re-enters through a
//! scalar-weighted residual, `result = gamma * (A . F) + stack`.
//!
//! The spatial branch reshapes an `n x H x W` stack to `HW x n` and builds
//! `HW x HW` position affinities; the channel branch reshapes to `n x HW`
//! and builds `n x n` map affinities. [`attend`] concatenates the two
//! results into `2n x H x W` per class.
//!
//! The spatial path streams one affinity row at a time, so the full
//! `HW x HW` matrix is only materialized by [`spatial_affinity`] (test and
//! inspection use).

use crate::error::{Error, Result};
use crate::grid::{softmax_in_place, FeatureGrid};
use crate::matching::SimilarityStack;
use crate::templates::CLASS_COUNT;

/// Residual weight applied to both branches unless overridden.
pub const DEFAULT_GAMMA: f64 = 1.0;

fn check_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() {
        return Err(Error::InvalidInput(format!("gamma must be finite, got {gamma}")));
    }
    Ok(())
}

/// The `HW x HW` row-stochastic position affinity matrix, row-major.
pub fn spatial_affinity(stack: &FeatureGrid) -> Vec<f64> {
    let n = stack.pixel_count();
    let f = stack.pixel_major();
    let c = stack.channels();
    let mut affinity = vec![0.0; n * n];
    for p in 0..n {
        let row = &mut affinity[p * n..(p + 1) * n];
        let a = &f[p * c..(p + 1) * c];
        for (q, slot) in row.iter_mut().enumerate() {
            let b = &f[q * c..(q + 1) * c];
            *slot = a.iter().zip(b).map(|(x, y)| x * y).sum();
        }
        softmax_in_place(row);
    }
    affinity
}

/// The `n x n` row-stochastic channel affinity matrix, row-major.
pub fn channel_affinity(stack: &FeatureGrid) -> Vec<f64> {
    let c = stack.channels();
    let mut affinity = vec![0.0; c * c];
    for i in 0..c {
        let row = &mut affinity[i * c..(i + 1) * c];
        let a = stack.channel(i);
        for (j, slot) in row.iter_mut().enumerate() {
            let b = stack.channel(j);
            *slot = a.iter().zip(b).map(|(x, y)| x * y).sum();
        }
        softmax_in_place(row);
    }
    affinity
}

/// Position attention: each pixel's map vector becomes an affinity-weighted
/// mean over all pixels, re-added through the residual.
pub fn spatial_attention(stack: &FeatureGrid, gamma: f64) -> Result<FeatureGrid> {
    check_gamma(gamma)?;
    let n = stack.pixel_count();
    let c = stack.channels();
    let f = stack.pixel_major();
    let mut out = stack.data().to_vec();
    let mut energies = vec![0.0; n];
    for p in 0..n {
        let a = &f[p * c..(p + 1) * c];
        for (q, slot) in energies.iter_mut().enumerate() {
            let b = &f[q * c..(q + 1) * c];
            *slot = a.iter().zip(b).map(|(x, y)| x * y).sum();
        }
        softmax_in_place(&mut energies);
        for ch in 0..c {
            let mut acc = 0.0;
            for (q, w) in energies.iter().enumerate() {
                acc += w * f[q * c + ch];
            }
            out[ch * n + p] += gamma * acc;
        }
    }
    FeatureGrid::new(c, stack.height(), stack.width(), out)
}

/// Map attention: each channel becomes an affinity-weighted mean over all
/// channels, re-added through the residual.
pub fn channel_attention(stack: &FeatureGrid, gamma: f64) -> Result<FeatureGrid> {
    check_gamma(gamma)?;
    let n = stack.pixel_count();
    let c = stack.channels();
    let affinity = channel_affinity(stack);
    let mut out = stack.data().to_vec();
    for i in 0..c {
        for j in 0..c {
            let w = gamma * affinity[i * c + j];
            let src = stack.channel(j);
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    FeatureGrid::new(c, stack.height(), stack.width(), out)
}

/// Runs both branches on each class's stack and concatenates the results:
/// `n` maps in, `2n` channels out per class (spatial half, then channel
/// half).
pub fn attend(
    stack: &SimilarityStack,
    gamma_spatial: f64,
    gamma_channel: f64,
) -> Result<[FeatureGrid; CLASS_COUNT]> {
    let run = |class: usize| -> Result<FeatureGrid> {
        let grid = stack.class_grid(class);
        let spatial = spatial_attention(&grid, gamma_spatial)?;
        let channel = channel_attention(&grid, gamma_channel)?;
        let mut data = spatial.into_data();
        data.extend_from_slice(channel.data());
        FeatureGrid::new(2 * grid.channels(), grid.height(), grid.width(), data)
    };
    Ok([run(0)?, run(1)?])
}
