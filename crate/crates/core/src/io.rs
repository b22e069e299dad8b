//! File formats, configuration text, and report serialization.
//!
//! Three bespoke formats, all little-endian and whole-file atomic
//! (written to a sibling temp file, then renamed):
//!
//! * tensors: magic `PMT1`, u32 C, H, W, then C*H*W f32 values in
//!   row-major (channel, row, column) order;
//! * masks: binary PGM (`P5`), maxval 255, pixel value = object label;
//! * tracker snapshots: magic `PMS1` with f64 payloads, so a replayed
//!   state is bit-identical to the one serialized.
//!
//! Configs are line-oriented `key = value` text. Parsing is fail-loud:
//! unknown keys, duplicate keys, and malformed lines are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, FileErrorKind, Result};
use crate::fusion::FusionParams;
use crate::grid::{FeatureGrid, ProbabilityField};
use crate::metrics::{EvalReport, LabelMask};
use crate::synth::{ObjectSpec, SynthSpec};
use crate::templates::{MedialTemplate, TemplateBank, WeightedTemplate};
use crate::tracker::TrackerState;

const TENSOR_MAGIC: &[u8; 4] = b"PMT1";
const STATE_MAGIC: &[u8; 4] = b"PMS1";

/// Upper bound on element counts read from headers, to fail loudly on
/// corrupt dimensions instead of attempting a huge allocation.
const MAX_ELEMENTS: u64 = 1 << 28;

/// Writes via a sibling temp file and rename, so readers never observe a
/// half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?
        .to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        ByteReader { bytes, pos: 0, path }
    }

    fn fail(&self, kind: FileErrorKind) -> Error {
        Error::file(self.path, kind)
    }

    fn take(&mut self, n: usize, kind: FileErrorKind) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.fail(kind));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, FileErrorKind::BadMagic)?;
        if got != expected {
            return Err(self.fail(FileErrorKind::BadMagic));
        }
        Ok(())
    }

    fn u32(&mut self, kind: FileErrorKind) -> Result<u32> {
        let b = self.take(4, kind)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, kind: FileErrorKind) -> Result<f64> {
        let b = self.take(8, kind)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32_payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(4 * count, FileErrorKind::TruncatedPayload)?;
        let mut out = Vec::with_capacity(count);
        for chunk in bytes.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(self.fail(FileErrorKind::NonFinite));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    fn f64_payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(8 * count, FileErrorKind::TruncatedPayload)?;
        let mut out = Vec::with_capacity(count);
        for chunk in bytes.chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(self.fail(FileErrorKind::NonFinite));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.fail(FileErrorKind::TrailingData));
        }
        Ok(())
    }
}

fn checked_dims(c: u32, h: u32, w: u32, path: &Path) -> Result<(usize, usize, usize)> {
    let product = c as u64 * h as u64 * w as u64;
    if c == 0 || h == 0 || w == 0 || product > MAX_ELEMENTS {
        return Err(Error::file(path, FileErrorKind::BadHeader));
    }
    Ok((c as usize, h as usize, w as usize))
}

/// Serializes a grid as a `PMT1` tensor; values are stored as f32, and a
/// value whose f32 conversion is not finite is rejected.
pub fn write_tensor(path: &Path, grid: &FeatureGrid) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + 4 * grid.data().len());
    bytes.extend_from_slice(TENSOR_MAGIC);
    for dim in [grid.channels(), grid.height(), grid.width()] {
        bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in grid.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::file(path, FileErrorKind::NonFinite));
        }
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn read_tensor(path: &Path) -> Result<FeatureGrid> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(TENSOR_MAGIC)?;
    let c = r.u32(FileErrorKind::BadHeader)?;
    let h = r.u32(FileErrorKind::BadHeader)?;
    let w = r.u32(FileErrorKind::BadHeader)?;
    let (c, h, w) = checked_dims(c, h, w, path)?;
    let data = r.f32_payload(c * h * w)?;
    r.finish()?;
    FeatureGrid::new(c, h, w, data)
}

/// Serializes a label mask as binary PGM with maxval 255.
pub fn write_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    let header = format!("P5\n{} {}\n255\n", mask.width(), mask.height());
    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(mask.labels());
    atomic_write(path, &bytes)
}

/// Reads a binary PGM mask. When `declared_objects` is given, any label
/// above it is a label-range error.
pub fn read_mask(path: &Path, declared_objects: Option<u8>) -> Result<LabelMask> {
    let bytes = std::fs::read(path)?;
    let fail = |kind| Error::file(path, kind);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(fail(FileErrorKind::BadMagic));
    }
    // Header: three whitespace-separated integers after the magic, with
    // '#' comments running to end of line.
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        while pos < bytes.len() {
            match bytes[pos] {
                b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            *field = *field * 10 + (bytes[pos] - b'0') as u64;
            pos += 1;
        }
        if pos == start || *field > MAX_ELEMENTS {
            return Err(fail(FileErrorKind::BadHeader));
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 || width == 0 || height == 0 || width * height > MAX_ELEMENTS {
        return Err(fail(FileErrorKind::BadHeader));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !matches!(bytes[pos], b' ' | b'\t' | b'\r' | b'\n') {
        return Err(fail(FileErrorKind::BadHeader));
    }
    pos += 1;
    let count = (width * height) as usize;
    if bytes.len() < pos + count {
        return Err(fail(FileErrorKind::TruncatedPayload));
    }
    if bytes.len() > pos + count {
        return Err(fail(FileErrorKind::TrailingData));
    }
    let labels = bytes[pos..].to_vec();
    if let Some(max) = declared_objects {
        if labels.iter().any(|&l| l > max) {
            return Err(fail(FileErrorKind::LabelRange));
        }
    }
    LabelMask::new(height as usize, width as usize, labels)
}

fn push_f64_tensor(bytes: &mut Vec<u8>, dims: (usize, usize, usize), data: &[f64]) {
    for d in [dims.0, dims.1, dims.2] {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f64_tensor(r: &mut ByteReader) -> Result<(usize, usize, usize, Vec<f64>)> {
    let c = r.u32(FileErrorKind::BadHeader)?;
    let h = r.u32(FileErrorKind::BadHeader)?;
    let w = r.u32(FileErrorKind::BadHeader)?;
    let (c, h, w) = checked_dims(c, h, w, r.path)?;
    let data = r.f64_payload(c * h * w)?;
    Ok((c, h, w, data))
}

/// Serializes a tracker state as a `PMS1` snapshot. Payloads are f64, so
/// reading it back reconstructs the state bit for bit.
pub fn write_state(path: &Path, state: &TrackerState) -> Result<()> {
    let bank = state.bank();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(STATE_MAGIC);
    bytes.extend_from_slice(&(state.frame_index() as u32).to_le_bytes());
    bytes.extend_from_slice(&u32::from(bank.medial.is_initialized()).to_le_bytes());
    bytes.extend_from_slice(&bank.medial.alpha().to_le_bytes());
    bytes.extend_from_slice(&(bank.local.source_frame() as u32).to_le_bytes());
    for template in [&bank.global, &bank.local] {
        for class in 0..2 {
            let grid = template.class_grid(class);
            push_f64_tensor(
                &mut bytes,
                (grid.channels(), grid.height(), grid.width()),
                grid.data(),
            );
        }
    }
    let prev = state.prev_probs();
    push_f64_tensor(&mut bytes, (prev.classes(), prev.height(), prev.width()), prev.data());
    for class in 0..2 {
        let v = bank.medial.class_vector(class);
        push_f64_tensor(&mut bytes, (v.len(), 1, 1), v);
    }
    let fusion = state.fusion_params();
    bytes.extend_from_slice(&(fusion.width() as u32).to_le_bytes());
    for class in 0..2 {
        for &v in fusion.class_weights(class) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&fusion.class_bias(class).to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn read_state(path: &Path) -> Result<TrackerState> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(STATE_MAGIC)?;
    let frame_index = r.u32(FileErrorKind::BadHeader)? as usize;
    let initialized = match r.u32(FileErrorKind::BadHeader)? {
        0 => false,
        1 => true,
        _ => return Err(Error::file(path, FileErrorKind::BadHeader)),
    };
    let alpha = r.f64(FileErrorKind::BadHeader)?;
    let local_source = r.u32(FileErrorKind::BadHeader)? as usize;

    let read_grid = |r: &mut ByteReader| -> Result<FeatureGrid> {
        let (c, h, w, data) = read_f64_tensor(r)?;
        FeatureGrid::new(c, h, w, data)
    };
    let global = WeightedTemplate::from_parts([read_grid(&mut r)?, read_grid(&mut r)?], 0)?;
    let local =
        WeightedTemplate::from_parts([read_grid(&mut r)?, read_grid(&mut r)?], local_source)?;

    let (k, h, w, data) = read_f64_tensor(&mut r)?;
    let prev_probs = ProbabilityField::new(k, h, w, data)?;

    let (c0, _, _, v0) = read_f64_tensor(&mut r)?;
    let (c1, _, _, v1) = read_f64_tensor(&mut r)?;
    if c0 != c1 {
        return Err(Error::file(path, FileErrorKind::BadHeader));
    }
    let medial = MedialTemplate::from_parts([v0, v1], alpha, initialized)?;

    let width = r.u32(FileErrorKind::BadHeader)? as usize;
    if width == 0 || width as u64 > MAX_ELEMENTS {
        return Err(Error::file(path, FileErrorKind::BadHeader));
    }
    let mut weights = [Vec::new(), Vec::new()];
    let mut bias = [0.0; 2];
    for class in 0..2 {
        weights[class] = r.f64_payload(width)?;
        bias[class] = r.f64(FileErrorKind::TruncatedPayload)?;
    }
    r.finish()?;
    let fusion = FusionParams::new(weights, bias)?;
    TrackerState::from_parts(
        TemplateBank { global, local, medial },
        prev_probs,
        frame_index,
        fusion,
    )
}

/// Line-oriented `key = value` configuration with fail-loud consumption:
/// every key must be taken exactly once before [`ConfigMap::finish`].
#[derive(Debug)]
pub struct ConfigMap {
    entries: Vec<(String, String)>,
    used: Vec<bool>,
}

impl ConfigMap {
    /// Parses config text. Blank lines and `#` comments are skipped;
    /// duplicate keys and lines without `=` are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::InvalidInput(format!("config line {}: empty key", lineno + 1)));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(Error::InvalidInput(format!(
                    "config line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        let used = vec![false; entries.len()];
        Ok(ConfigMap { entries, used })
    }

    /// Consumes a key, returning its raw value.
    pub fn take(&mut self, key: &str) -> Option<String> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        self.used[i] = true;
        Some(self.entries[i].1.clone())
    }

    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidInput(format!("config key {key:?}: cannot parse {raw:?}"))
            }),
        }
    }

    pub fn require_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.take_parsed(key)?
            .ok_or_else(|| Error::InvalidInput(format!("config key {key:?} is missing")))
    }

    /// Errors if any key was never consumed, listing the strays.
    pub fn finish(self) -> Result<()> {
        let unused: Vec<&str> = self
            .entries
            .iter()
            .zip(&self.used)
            .filter(|(_, &u)| !u)
            .map(|((k, _), _)| k.as_str())
            .collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("unknown config keys: {}", unused.join(", "))))
        }
    }
}

fn parse_f64_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("config key {key:?}: bad number {:?}", tok.trim()))
            })
        })
        .collect()
}

fn parse_pair(key: &str, raw: &str) -> Result<(f64, f64)> {
    let list = parse_f64_list(key, raw)?;
    if list.len() != 2 {
        return Err(Error::InvalidInput(format!("config key {key:?}: expected two numbers")));
    }
    Ok((list[0], list[1]))
}

fn format_f64_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Parses a synthetic-sequence description. See [`format_synth_spec`] for
/// the key set; `object<i>.*` keys are 1-based.
pub fn parse_synth_spec(text: &str) -> Result<SynthSpec> {
    let mut cfg = ConfigMap::parse(text)?;
    let height = cfg.require_parsed("height")?;
    let width = cfg.require_parsed("width")?;
    let channels: usize = cfg.require_parsed("channels")?;
    let frames = cfg.require_parsed("frames")?;
    let noise = cfg.take_parsed("noise")?.unwrap_or(0.0);
    let seed = cfg.take_parsed("seed")?.unwrap_or(0);
    let background = match cfg.take("background") {
        Some(raw) => parse_f64_list("background", &raw)?,
        None => vec![0.0; channels],
    };
    let count: usize = cfg.require_parsed("objects")?;
    let mut objects = Vec::with_capacity(count);
    for i in 1..=count {
        let key = |suffix: &str| format!("object{i}.{suffix}");
        let start_key = key("start");
        let start_raw = cfg
            .take(&start_key)
            .ok_or_else(|| Error::InvalidInput(format!("config key {start_key:?} is missing")))?;
        let velocity_key = key("velocity");
        let velocity_raw = cfg.take(&velocity_key).unwrap_or_else(|| "0,0".into());
        let radius_key = key("radius");
        let radius = cfg
            .take_parsed::<f64>(&radius_key)?
            .ok_or_else(|| Error::InvalidInput(format!("config key {radius_key:?} is missing")))?;
        let signature_key = key("signature");
        let signature_raw = cfg.take(&signature_key).ok_or_else(|| {
            Error::InvalidInput(format!("config key {signature_key:?} is missing"))
        })?;
        objects.push(ObjectSpec {
            start: parse_pair(&start_key, &start_raw)?,
            velocity: parse_pair(&velocity_key, &velocity_raw)?,
            radius,
            signature: parse_f64_list(&signature_key, &signature_raw)?,
        });
    }
    cfg.finish()?;
    let spec = SynthSpec { height, width, channels, frames, objects, background, noise, seed };
    spec.validate()?;
    Ok(spec)
}

pub fn format_synth_spec(spec: &SynthSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "height = {}", spec.height);
    let _ = writeln!(out, "width = {}", spec.width);
    let _ = writeln!(out, "channels = {}", spec.channels);
    let _ = writeln!(out, "frames = {}", spec.frames);
    let _ = writeln!(out, "noise = {}", spec.noise);
    let _ = writeln!(out, "seed = {}", spec.seed);
    let _ = writeln!(out, "background = {}", format_f64_list(&spec.background));
    let _ = writeln!(out, "objects = {}", spec.objects.len());
    for (i, obj) in spec.objects.iter().enumerate() {
        let i = i + 1;
        let _ = writeln!(out, "object{i}.start = {},{}", obj.start.0, obj.start.1);
        let _ = writeln!(out, "object{i}.velocity = {},{}", obj.velocity.0, obj.velocity.1);
        let _ = writeln!(out, "object{i}.radius = {}", obj.radius);
        let _ = writeln!(out, "object{i}.signature = {}", format_f64_list(&obj.signature));
    }
    out
}

/// Parses fusion parameters from config text: `width`, then per-class
/// `bg.weights`, `bg.bias`, `fg.weights`, `fg.bias`.
pub fn parse_fusion_params(text: &str) -> Result<FusionParams> {
    let mut cfg = ConfigMap::parse(text)?;
    let width: usize = cfg.require_parsed("width")?;
    let class = |prefix: &str, cfg: &mut ConfigMap| -> Result<(Vec<f64>, f64)> {
        let weights_key = format!("{prefix}.weights");
        let raw = cfg
            .take(&weights_key)
            .ok_or_else(|| Error::InvalidInput(format!("config key {weights_key:?} is missing")))?;
        let weights = parse_f64_list(&weights_key, &raw)?;
        if weights.len() != width {
            return Err(Error::InvalidInput(format!(
                "config key {weights_key:?}: {} entries, width says {width}",
                weights.len()
            )));
        }
        let bias = cfg.require_parsed(&format!("{prefix}.bias"))?;
        Ok((weights, bias))
    };
    let (bg_weights, bg_bias) = class("bg", &mut cfg)?;
    let (fg_weights, fg_bias) = class("fg", &mut cfg)?;
    cfg.finish()?;
    FusionParams::new([bg_weights, fg_weights], [bg_bias, fg_bias])
}

pub fn format_fusion_params(params: &FusionParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "width = {}", params.width());
    for (prefix, class) in [("bg", 0), ("fg", 1)] {
        let _ = writeln!(out, "{prefix}.weights = {}", format_f64_list(params.class_weights(class)));
        let _ = writeln!(out, "{prefix}.bias = {}", params.class_bias(class));
    }
    out
}

/// Renders the fixed CSV schema: a `sequence,object,frame,J,F` table
/// followed by a summary block with per-sequence and global means.
pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::from("sequence,object,frame,J,F\n");
    for row in report.rows() {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            row.sequence, row.object, row.frame, row.j, row.f
        );
    }
    for seq in report.sequences() {
        let _ = writeln!(
            out,
            "summary,sequence,{},J,{:.6},F,{:.6}",
            seq.sequence, seq.mean_j, seq.mean_f
        );
    }
    let _ = writeln!(
        out,
        "summary,mean,J,{:.6},F,{:.6},J&F,{:.6}",
        report.mean_j(),
        report.mean_f(),
        report.jf_mean()
    );
    out
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    atomic_write(path, format_report(report).as_bytes())
}

/// Canonical frame and mask file names used by the CLI directory layout.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.pmt")
}

pub fn mask_file_name(index: usize) -> String {
    format!("mask_{index:04}.pgm")
}

/// All regular files in `dir` with the given extension, sorted by name.
pub fn list_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(extension) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
