//! Per-concept spatial score maps with O(1) box-sum queries.
//!
//! A [`ScoreMap`] stores one real value per pixel (row-major, row 0 at the
//! top). On construction we precompute four integral images: the raw scores,
//! the positive part `max(s, 0)`, the negative part `min(s, 0)`, and the
//! probability view `clamp((s + 1) / 2, 0, 1)`. The positive/negative parts
//! drive the subwindow-search bound; the probability view drives box
//! confidence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

/// A single detector output: a box, its confidence, and the concept label.
#[derive(Debug, Clone)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub concept_id: String,
}

/// (W+1) x (H+1) prefix-sum grid over a W x H source grid.
#[derive(Debug, Clone)]
struct Integral {
    width: u32,
    data: Vec<f64>,
}

impl Integral {
    /// Builds the prefix sums of `value(x, y)` for a `width` x `height` grid.
    fn build<F: Fn(usize) -> f64>(width: u32, height: u32, value: F) -> Integral {
        let w = width as usize;
        let h = height as usize;
        let stride = w + 1;
        let mut data = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0.0;
            for x in 0..w {
                row_sum += value(y * w + x);
                data[(y + 1) * stride + (x + 1)] = data[y * stride + (x + 1)] + row_sum;
            }
        }
        Integral { width, data }
    }

    /// Sum over the inclusive pixel rectangle [x1, x2] x [y1, y2].
    fn rect_sum(&self, x1: u32, y1: u32, x2: u32, y2: u32) -> f64 {
        debug_assert!(x1 <= x2 && y1 <= y2);
        let stride = self.width as usize + 1;
        let (x1, y1, x2, y2) = (x1 as usize, y1 as usize, x2 as usize + 1, y2 as usize + 1);
        self.data[y2 * stride + x2] - self.data[y1 * stride + x2] - self.data[y2 * stride + x1]
            + self.data[y1 * stride + x1]
    }
}

/// Immutable W x H score map for one image concept.
#[derive(Debug, Clone)]
pub struct ScoreMap {
    concept_id: String,
    width: u32,
    height: u32,
    scores: Vec<f64>,
    integral: Integral,
    integral_pos: Integral,
    integral_neg: Integral,
    integral_prob: Integral,
}

impl ScoreMap {
    /// Builds a map from raw per-pixel scores (row-major, row 0 first).
    pub fn new(
        concept_id: impl Into<String>,
        width: u32,
        height: u32,
        scores: Vec<f64>,
    ) -> Result<ScoreMap> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "score map dimensions must be >= 1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if scores.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "score map {width}x{height} needs {expected} values, got {}",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "score map contains non-finite value {bad}"
            )));
        }
        let integral = Integral::build(width, height, |i| scores[i]);
        let integral_pos = Integral::build(width, height, |i| scores[i].max(0.0));
        let integral_neg = Integral::build(width, height, |i| scores[i].min(0.0));
        let integral_prob =
            Integral::build(width, height, |i| ((scores[i] + 1.0) / 2.0).clamp(0.0, 1.0));
        Ok(ScoreMap {
            concept_id: concept_id.into(),
            width,
            height,
            scores,
            integral,
            integral_pos,
            integral_neg,
            integral_prob,
        })
    }

    /// Thresholds a probability grid at 0.5: `+1` where p > 0.5, else `-1`.
    pub fn from_segmentation(
        concept_id: impl Into<String>,
        width: u32,
        height: u32,
        prob_grid: &[f64],
    ) -> Result<ScoreMap> {
        if prob_grid.is_empty() {
            return Err(Error::InvalidInput("empty probability grid".into()));
        }
        if let Some(bad) = prob_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!(
                "probability {bad} outside [0,1]"
            )));
        }
        let scores = prob_grid
            .iter()
            .map(|&p| if p > 0.5 { 1.0 } else { -1.0 })
            .collect();
        ScoreMap::new(concept_id, width, height, scores)
    }

    /// Rasterizes detections: pixels inside the union of boxes with
    /// confidence >= 0.5 score `+1`, everything else `-1`.
    pub fn from_detections(
        concept_id: impl Into<String>,
        width: u32,
        height: u32,
        detections: &[Detection],
    ) -> Result<ScoreMap> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        let mut inside = vec![false; width as usize * height as usize];
        for det in detections {
            if !det.bbox.within(width, height) {
                return Err(Error::InvalidInput(format!(
                    "detection box {} outside {width}x{height} image",
                    det.bbox
                )));
            }
            if !(0.0..=1.0).contains(&det.confidence) {
                return Err(Error::InvalidInput(format!(
                    "detection confidence {} outside [0,1]",
                    det.confidence
                )));
            }
            if det.confidence < 0.5 {
                continue;
            }
            for y in det.bbox.y1..=det.bbox.y2 {
                for x in det.bbox.x1..=det.bbox.x2 {
                    inside[y as usize * width as usize + x as usize] = true;
                }
            }
        }
        let scores = inside
            .iter()
            .map(|&b| if b { 1.0 } else { -1.0 })
            .collect();
        ScoreMap::new(concept_id, width, height, scores)
    }

    pub fn concept_id(&self) -> &str {
        &self.concept_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_pixels(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score_at(&self, x: u32, y: u32) -> f64 {
        self.scores[y as usize * self.width as usize + x as usize]
    }

    /// Probability view of a pixel: `clamp((score + 1) / 2, 0, 1)`.
    pub fn prob_at(&self, x: u32, y: u32) -> f64 {
        ((self.score_at(x, y) + 1.0) / 2.0).clamp(0.0, 1.0)
    }

    fn check_box(&self, bbox: &BoundingBox) -> Result<()> {
        if !bbox.within(self.width, self.height) {
            return Err(Error::OutOfBounds(format!(
                "box {} outside {}x{} map",
                bbox, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Sum of scores over the box, via the integral image.
    pub fn box_sum(&self, bbox: &BoundingBox) -> Result<f64> {
        self.check_box(bbox)?;
        Ok(self.integral.rect_sum(bbox.x1, bbox.y1, bbox.x2, bbox.y2))
    }

    /// Sum of `max(score, 0)` over the box.
    pub fn box_sum_pos(&self, bbox: &BoundingBox) -> Result<f64> {
        self.check_box(bbox)?;
        Ok(self
            .integral_pos
            .rect_sum(bbox.x1, bbox.y1, bbox.x2, bbox.y2))
    }

    /// Sum of `min(score, 0)` over the box.
    pub fn box_sum_neg(&self, bbox: &BoundingBox) -> Result<f64> {
        self.check_box(bbox)?;
        Ok(self
            .integral_neg
            .rect_sum(bbox.x1, bbox.y1, bbox.x2, bbox.y2))
    }

    /// Mean of the probability view over the box, in [0, 1].
    pub fn box_mean_prob(&self, bbox: &BoundingBox) -> Result<f64> {
        self.check_box(bbox)?;
        let total = self
            .integral_prob
            .rect_sum(bbox.x1, bbox.y1, bbox.x2, bbox.y2);
        Ok((total / bbox.area() as f64).clamp(0.0, 1.0))
    }

    // Unchecked rectangle sums for the branch-and-bound hot path.
    // Coordinates must already be valid for this map.
    pub(crate) fn rect_sum_raw(&self, x1: u32, y1: u32, x2: u32, y2: u32) -> f64 {
        self.integral.rect_sum(x1, y1, x2, y2)
    }

    pub(crate) fn rect_sum_pos_raw(&self, x1: u32, y1: u32, x2: u32, y2: u32) -> f64 {
        self.integral_pos.rect_sum(x1, y1, x2, y2)
    }

    pub(crate) fn rect_sum_neg_raw(&self, x1: u32, y1: u32, x2: u32, y2: u32) -> f64 {
        self.integral_neg.rect_sum(x1, y1, x2, y2)
    }

    /// Maximum raw score over the map.
    pub fn max_score(&self) -> f64 {
        self.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes the map in SMAP format: ASCII header `SMAP 1 <w> <h>\n`
    /// followed by w*h little-endian binary32 values, row-major.
    pub fn write_smap(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        write!(out, "SMAP 1 {} {}\n", self.width, self.height).map_err(io_err)?;
        for &s in &self.scores {
            out.write_all(&(s as f32).to_le_bytes()).map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(())
    }

    /// Reads a map in SMAP format. The concept id is not part of the file;
    /// the caller supplies it (usually from the corpus manifest).
    pub fn read_smap(path: &Path, concept_id: impl Into<String>) -> Result<ScoreMap> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut header = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            reader
                .read_exact(&mut byte)
                .map_err(|e| Error::io(path, e))?;
            if byte[0] == b'\n' {
                break;
            }
            if header.len() > 64 {
                return Err(Error::format(path, "SMAP header too long"));
            }
            header.push(byte[0]);
        }
        let header = String::from_utf8(header)
            .map_err(|_| Error::format(path, "SMAP header is not ASCII"))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 4 || parts[0] != "SMAP" {
            return Err(Error::format(path, format!("bad SMAP header `{header}`")));
        }
        if parts[1] != "1" {
            return Err(Error::format(
                path,
                format!("unsupported SMAP version `{}`", parts[1]),
            ));
        }
        let width: u32 = parts[2]
            .parse()
            .map_err(|_| Error::format(path, format!("bad width `{}`", parts[2])))?;
        let height: u32 = parts[3]
            .parse()
            .map_err(|_| Error::format(path, format!("bad height `{}`", parts[3])))?;
        if width == 0 || height == 0 {
            return Err(Error::format(path, "SMAP dimensions must be >= 1"));
        }
        let count = width as usize * height as usize;
        let mut bytes = vec![0u8; count * 4];
        reader
            .read_exact(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut trailing = [0u8; 1];
        match reader.read(&mut trailing) {
            Ok(0) => {}
            Ok(_) => return Err(Error::format(path, "trailing bytes after SMAP payload")),
            Err(e) => return Err(Error::io(path, e)),
        }
        let scores: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        ScoreMap::new(concept_id, width, height, scores)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}
