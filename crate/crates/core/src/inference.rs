//! End-to-end grounding of a query in an image: activate concepts via
//! subwindow search, select the concept with the lowest null-hypothesis
//! evidence against any query word, and return its box (or the whole-image
//! fallback).

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::ess::{detect_activation, ConceptActivation};
use crate::linker::RelevanceMatrix;
use crate::scoremap::ScoreMap;
use crate::vocab::{Vocabulary, UNKNOWN_TOKEN};

/// Knobs shared by training-time activation and inference.
#[derive(Debug, Clone, Copy)]
pub struct GroundingParams {
    /// Significance level: a concept is selected only if its best E value is
    /// strictly below this.
    pub tau: f64,
    pub confidence_threshold: f64,
    pub area_threshold: f64,
    /// Whether `<UKN>` may participate in concept selection.
    pub include_unknown: bool,
}

impl Default for GroundingParams {
    fn default() -> Self {
        GroundingParams {
            tau: 0.05,
            confidence_threshold: crate::ess::DEFAULT_CONFIDENCE_THRESHOLD,
            area_threshold: crate::ess::DEFAULT_AREA_THRESHOLD,
            include_unknown: false,
        }
    }
}

/// One grounding request: a query plus the available concept score maps.
#[derive(Debug)]
pub struct GroundingInput {
    pub image_id: String,
    pub query: String,
    pub width: u32,
    pub height: u32,
    /// Maps for concepts present in this image. Concepts without a map are
    /// treated as inactive.
    pub maps: Vec<ScoreMap>,
}

/// Outcome of concept selection.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Concept {
        concept_idx: usize,
        token_idx: usize,
        e_value: f64,
    },
    Fallback,
}

/// The winning pair of the argmin selection: the active concept with
/// the smallest E(s, c) over active tokens, ties broken by concept-list then
/// token-list order. Falls back when either active set is empty or the best
/// E value does not pass the significance bar (`best >= tau`).
pub fn select_concept(
    matrix: &RelevanceMatrix,
    active_tokens: &[usize],
    active_concepts: &[usize],
    tau: f64,
    include_unknown: bool,
) -> Result<Selection> {
    let num_tokens = matrix.tokens().len();
    let num_concepts = matrix.concepts().len();
    if active_tokens.iter().any(|&s| s >= num_tokens) {
        return Err(Error::DimensionMismatch(
            "active token index outside matrix".into(),
        ));
    }
    if active_concepts.iter().any(|&c| c >= num_concepts) {
        return Err(Error::DimensionMismatch(
            "active concept index outside matrix".into(),
        ));
    }
    let unknown_idx = matrix
        .tokens()
        .iter()
        .position(|t| t == UNKNOWN_TOKEN);

    let mut best: Option<(f64, usize, usize)> = None;
    for &c in active_concepts {
        for &s in active_tokens {
            if !include_unknown && Some(s) == unknown_idx {
                continue;
            }
            let e = matrix.get(s, c);
            // strict < keeps the earliest (concept, token) pair on ties
            if best.map_or(true, |(b, _, _)| e < b) {
                best = Some((e, c, s));
            }
        }
    }
    match best {
        Some((e, c, s)) if e < tau => Ok(Selection::Concept {
            concept_idx: c,
            token_idx: s,
            e_value: e,
        }),
        _ => Ok(Selection::Fallback),
    }
}

/// Full grounding result, including per-concept activations for audit.
#[derive(Debug, Clone)]
pub struct GroundingResult {
    pub bbox: BoundingBox,
    /// Selected concept id, or `None` for the whole-image fallback.
    pub concept: Option<String>,
    pub winning_token: Option<String>,
    pub winning_e: Option<f64>,
    pub activations: Vec<ConceptActivation>,
}

impl GroundingResult {
    pub fn is_fallback(&self) -> bool {
        self.concept.is_none()
    }
}

/// Grounds one query: tokenize, activate each provided concept map, select,
/// and return the winning concept's detection box or the whole-image box.
pub fn ground(
    input: &GroundingInput,
    matrix: &RelevanceMatrix,
    vocab: &Vocabulary,
    params: &GroundingParams,
) -> Result<GroundingResult> {
    if vocab.tokens() != matrix.tokens() {
        return Err(Error::DimensionMismatch(
            "vocabulary does not match the relevance matrix token list".into(),
        ));
    }
    if input.width == 0 || input.height == 0 {
        return Err(Error::InvalidInput("image dimensions must be >= 1".into()));
    }
    let mut activations = Vec::with_capacity(input.maps.len());
    let mut active_concepts = Vec::new();
    for map in &input.maps {
        if map.width() != input.width || map.height() != input.height {
            return Err(Error::DimensionMismatch(format!(
                "map for concept `{}` is {}x{}, image `{}` is {}x{}",
                map.concept_id(),
                map.width(),
                map.height(),
                input.image_id,
                input.width,
                input.height
            )));
        }
        let concept_idx = matrix
            .concepts()
            .iter()
            .position(|c| c == map.concept_id())
            .ok_or_else(|| Error::UnknownConcept(map.concept_id().to_string()))?;
        let act = detect_activation(map, params.confidence_threshold, params.area_threshold);
        if act.active {
            active_concepts.push((concept_idx, activations.len()));
        }
        activations.push(act);
    }
    // selection scans concepts in matrix declaration order
    active_concepts.sort_by_key(|&(idx, _)| idx);

    let tokens = vocab.tokenize(&input.query);
    let active_tokens = tokens.active_indices();
    let concept_indices: Vec<usize> = active_concepts.iter().map(|&(c, _)| c).collect();
    let selection = select_concept(
        matrix,
        &active_tokens,
        &concept_indices,
        params.tau,
        params.include_unknown,
    )?;

    Ok(match selection {
        Selection::Concept {
            concept_idx,
            token_idx,
            e_value,
        } => {
            let act_slot = active_concepts
                .iter()
                .find(|&&(c, _)| c == concept_idx)
                .map(|&(_, slot)| slot)
                .expect("selected concept came from the active set");
            GroundingResult {
                bbox: activations[act_slot].bbox,
                concept: Some(matrix.concepts()[concept_idx].clone()),
                winning_token: Some(matrix.tokens()[token_idx].clone()),
                winning_e: Some(e_value),
                activations,
            }
        }
        Selection::Fallback => GroundingResult {
            bbox: BoundingBox::full_image(input.width, input.height),
            concept: None,
            winning_token: None,
            winning_e: None,
            activations,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linker::CooccurrenceStats;

    /// Matrix with prescribed E values (counts are placeholders).
    fn matrix(tokens: &[&str], concepts: &[&str], values: &[f64]) -> RelevanceMatrix {
        let stats = CooccurrenceStats::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            concepts.iter().map(|s| s.to_string()).collect(),
        );
        RelevanceMatrix::from_parts(stats, values.to_vec()).unwrap()
    }

    #[test]
    fn select_hand_argmin() {
        let m = matrix(&["s1", "s2"], &["c1", "c2"], &[0.9, 0.1, 0.3, 0.8]);
        let sel = select_concept(&m, &[0, 1], &[0, 1], 0.5, false).unwrap();
        assert_eq!(
            sel,
            Selection::Concept {
                concept_idx: 1,
                token_idx: 0,
                e_value: 0.1
            }
        );
    }

    #[test]
    fn select_no_active_concept_falls_back() {
        let m = matrix(&["s1"], &["c1"], &[0.01]);
        assert_eq!(
            select_concept(&m, &[0], &[], 0.5, false).unwrap(),
            Selection::Fallback
        );
    }

    #[test]
    fn select_above_tau_falls_back() {
        let m = matrix(&["s1"], &["c1"], &[0.4]);
        assert_eq!(
            select_concept(&m, &[0], &[0], 0.05, false).unwrap(),
            Selection::Fallback
        );
    }

    #[test]
    fn select_tau_zero_always_falls_back() {
        let m = matrix(&["s1"], &["c1"], &[0.0]);
        assert_eq!(
            select_concept(&m, &[0], &[0], 0.0, false).unwrap(),
            Selection::Fallback
        );
    }

    #[test]
    fn select_ties_break_by_concept_then_token_order() {
        let m = matrix(&["s1", "s2"], &["c1", "c2"], &[0.2, 0.2, 0.2, 0.2]);
        let sel = select_concept(&m, &[0, 1], &[0, 1], 0.5, false).unwrap();
        assert_eq!(
            sel,
            Selection::Concept {
                concept_idx: 0,
                token_idx: 0,
                e_value: 0.2
            }
        );
    }

    #[test]
    fn select_excludes_unknown_token_by_default() {
        let m = matrix(&["s1", UNKNOWN_TOKEN], &["c1"], &[0.3, 0.001]);
        assert_eq!(
            select_concept(&m, &[0, 1], &[0], 0.05, false).unwrap(),
            Selection::Fallback
        );
        assert_eq!(
            select_concept(&m, &[0, 1], &[0], 0.05, true).unwrap(),
            Selection::Concept {
                concept_idx: 0,
                token_idx: 1,
                e_value: 0.001
            }
        );
    }

    fn vocab_and_matrix() -> (Vocabulary, RelevanceMatrix) {
        let vocab = Vocabulary::build(["dog"], 1).unwrap();
        let stats = CooccurrenceStats::new(vocab.tokens().to_vec(), vec!["c1".to_string()]);
        let m = RelevanceMatrix::from_parts(stats, vec![0.001, 1.0]).unwrap();
        (vocab, m)
    }

    #[test]
    fn ground_single_concept_whole_image() {
        let (vocab, m) = vocab_and_matrix();
        let input = GroundingInput {
            image_id: "img".into(),
            query: "dog".into(),
            width: 4,
            height: 4,
            maps: vec![ScoreMap::new("c1", 4, 4, vec![1.0; 16]).unwrap()],
        };
        let r = ground(&input, &m, &vocab, &GroundingParams::default()).unwrap();
        assert_eq!(r.concept.as_deref(), Some("c1"));
        assert_eq!(r.bbox, BoundingBox::full_image(4, 4));
        assert_eq!(r.winning_token.as_deref(), Some("dog"));
    }

    #[test]
    fn ground_unknown_words_fall_back() {
        let (vocab, m) = vocab_and_matrix();
        let input = GroundingInput {
            image_id: "img".into(),
            query: "zebra stripes".into(),
            width: 4,
            height: 4,
            maps: vec![ScoreMap::new("c1", 4, 4, vec![1.0; 16]).unwrap()],
        };
        let r = ground(&input, &m, &vocab, &GroundingParams::default()).unwrap();
        assert!(r.is_fallback());
        assert_eq!(r.bbox, BoundingBox::full_image(4, 4));
    }

    #[test]
    fn ground_rejects_dimension_mismatch() {
        let (vocab, m) = vocab_and_matrix();
        let input = GroundingInput {
            image_id: "img".into(),
            query: "dog".into(),
            width: 5,
            height: 4,
            maps: vec![ScoreMap::new("c1", 4, 4, vec![1.0; 16]).unwrap()],
        };
        assert!(ground(&input, &m, &vocab, &GroundingParams::default()).is_err());
    }

    #[test]
    fn ground_nonfallback_box_satisfies_activation_guarantees() {
        let (vocab, m) = vocab_and_matrix();
        // planted 3x3 region in an 8x8 image (14% of the area)
        let mut scores = vec![-1.0; 64];
        for y in 2..5 {
            for x in 3..6 {
                scores[y * 8 + x] = 1.0;
            }
        }
        let input = GroundingInput {
            image_id: "img".into(),
            query: "dog".into(),
            width: 8,
            height: 8,
            maps: vec![ScoreMap::new("c1", 8, 8, scores).unwrap()],
        };
        let r = ground(&input, &m, &vocab, &GroundingParams::default()).unwrap();
        assert_eq!(r.bbox, BoundingBox::new(3, 2, 5, 4).unwrap());
        let act = &r.activations[0];
        assert!(act.confidence > 0.5);
        assert!(act.area_fraction >= 0.05);
    }

    #[test]
    fn removing_non_winning_map_preserves_result() {
        let vocab = Vocabulary::build(["dog"], 1).unwrap();
        let stats = CooccurrenceStats::new(
            vocab.tokens().to_vec(),
            vec!["c1".to_string(), "c2".to_string()],
        );
        let m = RelevanceMatrix::from_parts(stats, vec![0.001, 0.9, 1.0, 1.0]).unwrap();
        let winning_map = ScoreMap::new("c1", 4, 4, vec![1.0; 16]).unwrap();
        let other_map = ScoreMap::new("c2", 4, 4, vec![1.0; 16]).unwrap();
        let with_both = GroundingInput {
            image_id: "img".into(),
            query: "dog".into(),
            width: 4,
            height: 4,
            maps: vec![winning_map.clone(), other_map],
        };
        let with_one = GroundingInput {
            image_id: "img".into(),
            query: "dog".into(),
            width: 4,
            height: 4,
            maps: vec![winning_map],
        };
        let p = GroundingParams::default();
        let a = ground(&with_both, &m, &vocab, &p).unwrap();
        let b = ground(&with_one, &m, &vocab, &p).unwrap();
        assert_eq!(a.bbox, b.bbox);
        assert_eq!(a.concept, b.concept);
        assert_eq!(a.winning_e, b.winning_e);
    }

    #[test]
    fn argmin_invariant_under_increasing_transform() {
        let m = matrix(&["s1", "s2"], &["c1", "c2"], &[0.9, 0.1, 0.3, 0.8]);
        let f = |x: f64| x * x * 0.5 + x; // strictly increasing on [0,1]
        let m2 = m.map_values(f);
        let a = select_concept(&m, &[0, 1], &[0, 1], 0.5, false).unwrap();
        let b = select_concept(&m2, &[0, 1], &[0, 1], f(0.5), false).unwrap();
        match (a, b) {
            (
                Selection::Concept {
                    concept_idx: ca,
                    token_idx: ta,
                    ..
                },
                Selection::Concept {
                    concept_idx: cb,
                    token_idx: tb,
                    ..
                },
            ) => {
                assert_eq!(ca, cb);
                assert_eq!(ta, tb);
            }
            _ => panic!("both selections should pick a concept"),
        }
    }
}
