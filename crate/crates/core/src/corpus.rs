//! On-disk artifacts: corpus manifests, trained models, prediction and
//! ground-truth record files.
//!
//! The manifest is a JSON file listing every example with its query, image
//! size, and a concept -> SMAP path map (paths relative to the manifest's
//! directory). Predictions and ground truth are JSON Lines, one record per
//! example. The model bundles the relevance matrix (which carries the token
//! and concept lists plus the generating counts) together with the activation
//! thresholds used at training time.
//!
//! All writes go through a temp file in the target directory followed by a
//! rename, so readers never observe partial files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::inference::GroundingResult;
use crate::linker::RelevanceMatrix;
use crate::scoremap::ScoreMap;
use crate::vocab::Vocabulary;

/// Marker used in prediction files for whole-image fallbacks.
pub const FALLBACK_CONCEPT: &str = "FALLBACK";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestExample {
    pub id: String,
    pub query: String,
    pub width: u32,
    pub height: u32,
    /// Concept id -> SMAP path, relative to the manifest file. Concepts
    /// without an entry are inactive in this example.
    #[serde(default)]
    pub maps: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_box: Option<[u32; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    /// Every concept the corpus can reference, in declaration order.
    pub concepts: Vec<String>,
    pub examples: Vec<ManifestExample>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<CorpusManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for c in &manifest.concepts {
            if !seen.insert(c) {
                return Err(Error::format(path, format!("duplicate concept `{c}`")));
            }
        }
        for ex in &manifest.examples {
            for concept in ex.maps.keys() {
                if !manifest.concepts.contains(concept) {
                    return Err(Error::format(
                        path,
                        format!("example `{}` references unknown concept `{concept}`", ex.id),
                    ));
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }

    /// Loads the score maps of one example, resolving paths against the
    /// manifest's directory and checking dimensions against the declaration.
    pub fn load_maps(&self, manifest_path: &Path, example: &ManifestExample) -> Result<Vec<ScoreMap>> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let mut maps = Vec::with_capacity(example.maps.len());
        for (concept, rel) in &example.maps {
            let path = base.join(rel);
            let map = ScoreMap::read_smap(&path, concept.clone())?;
            if map.width() != example.width || map.height() != example.height {
                return Err(Error::format(
                    &path,
                    format!(
                        "map is {}x{} but example `{}` declares {}x{}",
                        map.width(),
                        map.height(),
                        example.id,
                        example.width,
                        example.height
                    ),
                ));
            }
            maps.push(map);
        }
        Ok(maps)
    }
}

/// Trained artifact: relevance matrix (with token/concept lists and counts)
/// plus the activation thresholds in force when the counts were collected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub matrix: RelevanceMatrix,
    pub confidence_threshold: f64,
    pub area_threshold: f64,
}

impl Model {
    pub fn load(path: &Path) -> Result<Model> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Model =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        // revalidate what from_parts would check
        Vocabulary::from_parts(model.matrix.tokens().to_vec())
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self).expect("model serialization cannot fail");
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_parts(self.matrix.tokens().to_vec())
            .expect("model token list was validated on load")
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// [x1, y1, x2, y2], inclusive corners.
    #[serde(rename = "box")]
    pub box_: [u32; 4],
    /// Selected concept id, or `FALLBACK`.
    pub concept: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_value: Option<f64>,
}

impl PredictionRecord {
    pub fn from_result(id: &str, result: &GroundingResult) -> PredictionRecord {
        PredictionRecord {
            id: id.to_string(),
            box_: result.bbox.to_array(),
            concept: result
                .concept
                .clone()
                .unwrap_or_else(|| FALLBACK_CONCEPT.to_string()),
            token: result.winning_token.clone(),
            e_value: result.winning_e,
        }
    }

    pub fn bbox(&self) -> Result<BoundingBox> {
        BoundingBox::from_array(self.box_)
    }
}

/// One line of a ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub id: String,
    #[serde(rename = "box")]
    pub box_: [u32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serialization cannot fail");
        out.push(b'\n');
    }
    atomic_write(path, &out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// Writes the full contents to a sibling temp file, then renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir: PathBuf = dir.map(Path::to_path_buf).unwrap_or_else(|| ".".into());
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
