//! Region accuracy J, contour accuracy F, and their aggregation.
//!
//! J is intersection over union of the object's binary masks. F is the
//! harmonic mean of boundary precision and recall, where a boundary pixel
//! counts as matched when the other mask's boundary comes within a pixel
//! tolerance; the production matcher dilates each boundary by a disk of
//! that radius. Degenerate cases follow the benchmark conventions: both
//! masks empty scores 1, exactly one empty scores 0.
//!
//! Aggregation averages per object over frames, per sequence over
//! objects, then globally over sequences; J&F is the mean of the two
//! global scores.

use crate::error::{Error, Result};

/// Integer segmentation labels, 0 = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "label length {} does not match {height}x{width}",
                labels.len()
            )));
        }
        Ok(LabelMask { height, width, labels })
    }

    /// Single-object mask from a foreground bitmap (label 1).
    pub fn from_fg(height: usize, width: usize, fg: &[bool]) -> Result<Self> {
        LabelMask::new(height, width, fg.iter().map(|&b| u8::from(b)).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Bitmap of pixels carrying `object_id`.
    pub fn binary(&self, object_id: u8) -> Vec<bool> {
        self.labels.iter().map(|&l| l == object_id).collect()
    }
}

fn check_shapes(pred: &LabelMask, gt: &LabelMask) -> Result<()> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::InvalidArgument(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    Ok(())
}

/// Intersection over union of one object's binary masks; 1 if both are
/// empty, 0 if exactly one is.
pub fn region_j(pred: &LabelMask, gt: &LabelMask, object_id: u8) -> Result<f64> {
    check_shapes(pred, gt)?;
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (p, g) in pred.labels.iter().zip(&gt.labels) {
        let (p, g) = (*p == object_id, *g == object_id);
        intersection += usize::from(p && g);
        union += usize::from(p || g);
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(intersection as f64 / union as f64)
    }
}

/// Boundary bitmap: foreground pixels with a 4-neighbor outside the
/// foreground, counting beyond-the-edge as outside.
fn boundary_bitmap(fg: &[bool], height: usize, width: usize) -> Vec<bool> {
    let mut out = vec![false; fg.len()];
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if !fg[p] {
                continue;
            }
            let exposed = y == 0
                || x == 0
                || y == height - 1
                || x == width - 1
                || !fg[p - width]
                || !fg[p + width]
                || !fg[p - 1]
                || !fg[p + 1];
            out[p] = exposed;
        }
    }
    out
}

/// Stamps a disk of radius `tol` around every set pixel.
fn dilate(bitmap: &[bool], height: usize, width: usize, tol: u32) -> Vec<bool> {
    let t = tol as i64;
    let mut offsets = Vec::new();
    for dy in -t..=t {
        for dx in -t..=t {
            if dy * dy + dx * dx <= t * t {
                offsets.push((dy, dx));
            }
        }
    }
    let mut out = vec![false; bitmap.len()];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            if !bitmap[(y * width as i64 + x) as usize] {
                continue;
            }
            for &(dy, dx) in &offsets {
                let (ny, nx) = (y + dy, x + dx);
                if ny >= 0 && ny < height as i64 && nx >= 0 && nx < width as i64 {
                    out[(ny * width as i64 + nx) as usize] = true;
                }
            }
        }
    }
    out
}

/// Benchmark default: 0.75% of the image diagonal, at least 1 pixel.
pub fn default_boundary_tolerance(height: usize, width: usize) -> u32 {
    let diagonal = ((height * height + width * width) as f64).sqrt();
    ((0.0075 * diagonal).ceil() as u32).max(1)
}

/// Contour F-measure for one object under a pixel tolerance.
pub fn boundary_f(pred: &LabelMask, gt: &LabelMask, object_id: u8, tolerance_px: u32) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (h, w) = (pred.height, pred.width);
    let pb = boundary_bitmap(&pred.binary(object_id), h, w);
    let gb = boundary_bitmap(&gt.binary(object_id), h, w);
    let np = pb.iter().filter(|&&b| b).count();
    let ng = gb.iter().filter(|&&b| b).count();
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    let gb_dilated = dilate(&gb, h, w, tolerance_px);
    let pb_dilated = dilate(&pb, h, w, tolerance_px);
    let matched_pred = pb.iter().zip(&gb_dilated).filter(|(&p, &d)| p && d).count();
    let matched_gt = gb.iter().zip(&pb_dilated).filter(|(&g, &d)| g && d).count();
    let precision = if np > 0 { matched_pred as f64 / np as f64 } else { 0.0 };
    let recall = if ng > 0 { matched_gt as f64 / ng as f64 } else { 0.0 };
    if precision + recall > 0.0 {
        Ok(2.0 * precision * recall / (precision + recall))
    } else {
        Ok(0.0)
    }
}

/// One object's scores on one frame of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    pub sequence: String,
    pub object: u8,
    pub frame: usize,
    pub j: f64,
    pub f: f64,
}

/// Per-sequence means (objects averaged over their frames first).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSummary {
    pub sequence: String,
    pub mean_j: f64,
    pub mean_f: f64,
}

/// Aggregated evaluation: frame rows in a stable order plus the sequence
/// and global means.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    rows: Vec<FrameScore>,
    sequences: Vec<SequenceSummary>,
    mean_j: f64,
    mean_f: f64,
}

impl EvalReport {
    /// Sorts the rows by (sequence, object, frame) and averages over
    /// frames, then objects, then sequences.
    pub fn from_scores(mut rows: Vec<FrameScore>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("report needs at least one score".into()));
        }
        for row in &rows {
            let ok = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
            if !ok(row.j) || !ok(row.f) {
                return Err(Error::InvalidInput(format!(
                    "score outside [0, 1] for {}/{}/{}",
                    row.sequence, row.object, row.frame
                )));
            }
        }
        rows.sort_by(|a, b| {
            (a.sequence.as_str(), a.object, a.frame).cmp(&(b.sequence.as_str(), b.object, b.frame))
        });
        let mut sequences = Vec::new();
        let mut i = 0;
        while i < rows.len() {
            let name = rows[i].sequence.clone();
            let mut object_means: Vec<(f64, f64)> = Vec::new();
            while i < rows.len() && rows[i].sequence == name {
                let object = rows[i].object;
                let mut sum = (0.0, 0.0);
                let mut count = 0.0;
                while i < rows.len() && rows[i].sequence == name && rows[i].object == object {
                    sum.0 += rows[i].j;
                    sum.1 += rows[i].f;
                    count += 1.0;
                    i += 1;
                }
                object_means.push((sum.0 / count, sum.1 / count));
            }
            let m = object_means.len() as f64;
            sequences.push(SequenceSummary {
                sequence: name,
                mean_j: object_means.iter().map(|v| v.0).sum::<f64>() / m,
                mean_f: object_means.iter().map(|v| v.1).sum::<f64>() / m,
            });
        }
        let s = sequences.len() as f64;
        let mean_j = sequences.iter().map(|v| v.mean_j).sum::<f64>() / s;
        let mean_f = sequences.iter().map(|v| v.mean_f).sum::<f64>() / s;
        Ok(EvalReport { rows, sequences, mean_j, mean_f })
    }

    pub fn rows(&self) -> &[FrameScore] {
        &self.rows
    }

    pub fn sequences(&self) -> &[SequenceSummary] {
        &self.sequences
    }

    pub fn mean_j(&self) -> f64 {
        self.mean_j
    }

    pub fn mean_f(&self) -> f64 {
        self.mean_f
    }

    /// The headline score: (mean J + mean F) / 2.
    pub fn jf_mean(&self) -> f64 {
        0.5 * (self.mean_j + self.mean_f)
    }
}
