//! Deterministic synthetic worlds with known word-concept links.
//!
//! Each example samples a set of active concepts; every active concept gets a
//! planted axis-aligned box (+1 inside, -1 outside, optional per-pixel sign
//! flips). One active concept is designated the target: the query contains
//! that concept's planted words plus random distractor words drawn from
//! inactive concepts, and the ground-truth box is the target's planted box.
//! Examples with no usable active concept keep the whole image as ground
//! truth.
//!
//! Generation uses ChaCha8 seeded from the config, so corpora are
//! reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::eval::{accuracy, iou, EvalRecord};
use crate::inference::{ground, GroundingInput, GroundingParams};
use crate::linker::{CooccurrenceStats, RelevanceMatrix};
use crate::scoremap::ScoreMap;
use crate::vocab::Vocabulary;

fn default_seed() -> u64 {
    7
}
fn default_num_concepts() -> usize {
    20
}
fn default_num_words() -> usize {
    50
}
fn default_num_examples() -> usize {
    5000
}
fn default_dim() -> u32 {
    24
}
fn default_activation_prob() -> f64 {
    0.2
}
fn default_distractor_prob() -> f64 {
    0.05
}
fn default_box_area_range() -> (f64, f64) {
    (0.06, 0.4)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_num_concepts")]
    pub num_concepts: usize,
    #[serde(default = "default_num_words")]
    pub num_words: usize,
    #[serde(default = "default_num_examples")]
    pub num_examples: usize,
    #[serde(default = "default_dim")]
    pub width: u32,
    #[serde(default = "default_dim")]
    pub height: u32,
    /// Planted word -> concept assignment (many-to-one). Defaults to
    /// `word_index % num_concepts`.
    #[serde(default)]
    pub planted: Option<Vec<usize>>,
    /// Per-image probability that each concept is active.
    #[serde(default = "default_activation_prob")]
    pub activation_prob: f64,
    /// Probability that each inactive-concept word joins the query.
    #[serde(default = "default_distractor_prob")]
    pub distractor_prob: f64,
    /// Label-flip noise: each score-map pixel flips sign with this
    /// probability.
    #[serde(default)]
    pub noise: f64,
    /// Planted-box area as a fraction of the image, inclusive range.
    #[serde(default = "default_box_area_range")]
    pub box_area_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: default_seed(),
            num_concepts: default_num_concepts(),
            num_words: default_num_words(),
            num_examples: default_num_examples(),
            width: default_dim(),
            height: default_dim(),
            planted: None,
            activation_prob: default_activation_prob(),
            distractor_prob: default_distractor_prob(),
            noise: 0.0,
            box_area_range: default_box_area_range(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_concepts == 0 || self.num_words == 0 || self.num_examples == 0 {
            return Err(Error::InvalidInput(
                "num_concepts, num_words, num_examples must be >= 1".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image dimensions must be >= 1".into()));
        }
        for (name, p) in [
            ("activation_prob", self.activation_prob),
            ("distractor_prob", self.distractor_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("{name} must be in [0,1]")));
            }
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::InvalidInput("noise must be in [0,1)".into()));
        }
        let (lo, hi) = self.box_area_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidInput(
                "box_area_range must satisfy 0 < lo <= hi <= 1".into(),
            ));
        }
        if let Some(p) = &self.planted {
            if p.len() != self.num_words {
                return Err(Error::InvalidInput(
                    "planted map must assign every word".into(),
                ));
            }
            if p.iter().any(|&c| c >= self.num_concepts) {
                return Err(Error::InvalidInput(
                    "planted map targets an unknown concept".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn planted_map(&self) -> Vec<usize> {
        self.planted
            .clone()
            .unwrap_or_else(|| (0..self.num_words).map(|w| w % self.num_concepts).collect())
    }
}

#[derive(Debug, Clone)]
pub struct SynthExample {
    pub id: String,
    pub query: String,
    pub width: u32,
    pub height: u32,
    /// Maps only for concepts active in this example; absent concepts are
    /// implicitly all-negative.
    pub maps: Vec<ScoreMap>,
    pub gt_box: BoundingBox,
    /// Target concept name, or "none" for whole-image examples.
    pub category: String,
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub words: Vec<String>,
    pub concepts: Vec<String>,
    /// Word index -> planted concept index.
    pub planted: Vec<usize>,
    pub examples: Vec<SynthExample>,
}

/// Generates the corpus. Fully deterministic given the config.
pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let planted = config.planted_map();
    let words: Vec<String> = (0..config.num_words).map(|w| format!("w{w:03}")).collect();
    let concepts: Vec<String> = (0..config.num_concepts)
        .map(|c| format!("c{c:03}"))
        .collect();

    // every (box width, box height) pair whose area fraction is in range
    let (lo, hi) = config.box_area_range;
    let image_area = config.width as f64 * config.height as f64;
    let mut feasible_dims = Vec::new();
    for bw in 1..=config.width {
        for bh in 1..=config.height {
            let frac = (bw as f64 * bh as f64) / image_area;
            if frac >= lo && frac <= hi {
                feasible_dims.push((bw, bh));
            }
        }
    }
    if feasible_dims.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {}x{} box has area fraction in [{lo}, {hi}]",
            config.width, config.height
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut examples = Vec::with_capacity(config.num_examples);
    for idx in 0..config.num_examples {
        let actives: Vec<bool> = (0..config.num_concepts)
            .map(|_| rng.gen_bool(config.activation_prob))
            .collect();

        let mut maps = Vec::new();
        let mut boxes: Vec<Option<BoundingBox>> = vec![None; config.num_concepts];
        for (c, &active) in actives.iter().enumerate() {
            if !active {
                continue;
            }
            let (bw, bh) = feasible_dims[rng.gen_range(0..feasible_dims.len())];
            let x1 = rng.gen_range(0..=config.width - bw);
            let y1 = rng.gen_range(0..=config.height - bh);
            let bbox = BoundingBox::new(x1, y1, x1 + bw - 1, y1 + bh - 1).unwrap();
            boxes[c] = Some(bbox);
            let mut scores: Vec<f64> = (0..config.width as usize * config.height as usize)
                .map(|i| {
                    let (x, y) = (
                        (i % config.width as usize) as u32,
                        (i / config.width as usize) as u32,
                    );
                    if bbox.contains_point(x, y) {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            if config.noise > 0.0 {
                for s in &mut scores {
                    if rng.gen_bool(config.noise) {
                        *s = -*s;
                    }
                }
            }
            maps.push(ScoreMap::new(
                concepts[c].clone(),
                config.width,
                config.height,
                scores,
            )?);
        }

        // target: an active concept that has at least one planted word
        let candidates: Vec<usize> = (0..config.num_concepts)
            .filter(|&c| actives[c] && planted.contains(&c))
            .collect();
        let target = if candidates.is_empty() {
            None
        } else {
            Some(candidates[rng.gen_range(0..candidates.len())])
        };

        let mut query_words = Vec::new();
        for (w, &c) in planted.iter().enumerate() {
            if Some(c) == target {
                query_words.push(words[w].clone());
            } else if !actives[c] && rng.gen_bool(config.distractor_prob) {
                query_words.push(words[w].clone());
            }
        }

        let (gt_box, category) = match target {
            Some(c) => (boxes[c].unwrap(), concepts[c].clone()),
            None => (
                BoundingBox::full_image(config.width, config.height),
                "none".to_string(),
            ),
        };

        examples.push(SynthExample {
            id: format!("ex{idx:05}"),
            query: query_words.join(" "),
            width: config.width,
            height: config.height,
            maps,
            gt_box,
            category,
        });
    }

    Ok(SynthWorld {
        config: config.clone(),
        words,
        concepts,
        planted,
        examples,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub planted_words: usize,
    pub recovered_links: usize,
    pub link_recovery_percent: f64,
    pub grounding_total: u64,
    pub grounding_correct: u64,
    pub grounding_accuracy_percent: f64,
}

/// Trains vocabulary + relevance on the corpus, grounds every example, and
/// reports planted-link recovery and IoU@0.5 accuracy.
pub fn recovery_report(world: &SynthWorld, params: &GroundingParams) -> Result<RecoveryReport> {
    let vocab = Vocabulary::build(
        world.examples.iter().map(|e| e.query.as_str()),
        world.config.num_words,
    )?;
    let mut stats = CooccurrenceStats::new(vocab.tokens().to_vec(), world.concepts.clone());
    for example in &world.examples {
        let tokens = vocab.tokenize(&example.query);
        let mut actives = vec![false; world.concepts.len()];
        for map in &example.maps {
            let c = world
                .concepts
                .iter()
                .position(|n| n == map.concept_id())
                .expect("map concept comes from the world concept list");
            let act = crate::ess::detect_activation(
                map,
                params.confidence_threshold,
                params.area_threshold,
            );
            actives[c] = act.active;
        }
        stats.record(&tokens, &actives)?;
    }
    let matrix = RelevanceMatrix::build(stats);

    let mut recovered = 0usize;
    for (w, &planted_concept) in world.planted.iter().enumerate() {
        let Some(s) = vocab.index_of(&world.words[w]) else {
            continue; // word never occurred: cannot be recovered
        };
        let row = matrix.row(s);
        let argmin = (0..row.len())
            .min_by(|&a, &b| row[a].total_cmp(&row[b]))
            .unwrap();
        if argmin == planted_concept {
            recovered += 1;
        }
    }

    let mut records = Vec::with_capacity(world.examples.len());
    for example in &world.examples {
        let input = GroundingInput {
            image_id: example.id.clone(),
            query: example.query.clone(),
            width: example.width,
            height: example.height,
            maps: example.maps.clone(),
        };
        let result = ground(&input, &matrix, &vocab, params)?;
        records.push(EvalRecord {
            id: example.id.clone(),
            predicted: result.bbox,
            ground_truth: example.gt_box,
            category: Some(example.category.clone()),
        });
    }
    let report = accuracy(&records, 0.5)?;

    Ok(RecoveryReport {
        planted_words: world.planted.len(),
        recovered_links: recovered,
        link_recovery_percent: 100.0 * recovered as f64 / world.planted.len() as f64,
        grounding_total: report.total,
        grounding_correct: report.correct,
        grounding_accuracy_percent: report.accuracy_percent,
    })
}

/// Convenience for tests: IoU@0.5 correctness of one predicted box.
pub fn is_hit(predicted: &BoundingBox, gt: &BoundingBox) -> bool {
    iou(predicted, gt) > 0.5
}
