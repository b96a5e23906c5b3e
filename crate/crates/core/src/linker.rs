//! Word-concept relevance learning from co-occurrence statistics.
//!
//! For each word s and concept c we test the null hypothesis that concept
//! activation is independent of observing the word. The relevance value
//! E(s, c) is the one-sided tail probability of seeing a co-occurrence count
//! larger than the observed N(s, c) under the null; small values mean strong
//! links. The tail is computed with the normal approximation to the binomial
//! (with continuity correction); an exact log-space binomial sum is available
//! as a slower cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{erf, ln_binomial};
use crate::vocab::TokenActivations;

/// Exact integer co-occurrence counters over a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceStats {
    tokens: Vec<String>,
    concepts: Vec<String>,
    /// Number of examples seen, |D|.
    num_examples: u64,
    /// N(s): examples whose query contains token s.
    word_counts: Vec<u64>,
    /// N(c): examples where concept c is active.
    concept_counts: Vec<u64>,
    /// N(s, c): examples with both, row-major (token-major).
    co_counts: Vec<u64>,
}

impl CooccurrenceStats {
    pub fn new(tokens: Vec<String>, concepts: Vec<String>) -> CooccurrenceStats {
        let co = tokens.len() * concepts.len();
        CooccurrenceStats {
            word_counts: vec![0; tokens.len()],
            concept_counts: vec![0; concepts.len()],
            co_counts: vec![0; co],
            num_examples: 0,
            tokens,
            concepts,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn num_examples(&self) -> u64 {
        self.num_examples
    }

    pub fn word_count(&self, s: usize) -> u64 {
        self.word_counts[s]
    }

    pub fn concept_count(&self, c: usize) -> u64 {
        self.concept_counts[c]
    }

    pub fn co_count(&self, s: usize, c: usize) -> u64 {
        self.co_counts[s * self.concepts.len() + c]
    }

    /// Adds one example: its token activations and per-concept active bits.
    pub fn record(&mut self, tokens: &TokenActivations, actives: &[bool]) -> Result<()> {
        if tokens.len() != self.tokens.len() || actives.len() != self.concepts.len() {
            return Err(Error::DimensionMismatch(format!(
                "example has {} tokens / {} concepts, stats track {} / {}",
                tokens.len(),
                actives.len(),
                self.tokens.len(),
                self.concepts.len()
            )));
        }
        self.num_examples += 1;
        let num_concepts = self.concepts.len();
        for s in tokens.active_indices() {
            self.word_counts[s] += 1;
            for (c, &active) in actives.iter().enumerate() {
                if active {
                    self.co_counts[s * num_concepts + c] += 1;
                }
            }
        }
        for (c, &active) in actives.iter().enumerate() {
            if active {
                self.concept_counts[c] += 1;
            }
        }
        Ok(())
    }

    /// Counts a whole stream of examples.
    pub fn accumulate<'a, I>(
        tokens: Vec<String>,
        concepts: Vec<String>,
        examples: I,
    ) -> Result<CooccurrenceStats>
    where
        I: IntoIterator<Item = (&'a TokenActivations, &'a [bool])>,
    {
        let mut stats = CooccurrenceStats::new(tokens, concepts);
        for (t, a) in examples {
            stats.record(t, a)?;
        }
        Ok(stats)
    }

    /// Merges counts from another shard over the same token/concept lists.
    pub fn merge(&mut self, other: &CooccurrenceStats) -> Result<()> {
        if self.tokens != other.tokens || self.concepts != other.concepts {
            return Err(Error::DimensionMismatch(
                "cannot merge stats over different token/concept lists".into(),
            ));
        }
        self.num_examples += other.num_examples;
        for (a, b) in self.word_counts.iter_mut().zip(&other.word_counts) {
            *a += b;
        }
        for (a, b) in self.concept_counts.iter_mut().zip(&other.concept_counts) {
            *a += b;
        }
        for (a, b) in self.co_counts.iter_mut().zip(&other.co_counts) {
            *a += b;
        }
        Ok(())
    }

    /// Relevance E(s, c): normal-approximation tail probability. Degenerate
    /// cases (no word occurrences, concept never/always active) return 1.0.
    pub fn relevance(&self, s: usize, c: usize) -> f64 {
        let d = self.num_examples;
        if d == 0 {
            return 1.0;
        }
        let p = self.concept_counts[c] as f64 / d as f64;
        normal_tail_probability(self.word_counts[s], self.co_count(s, c), p)
    }

    /// Exact tail P(n > N(s,c)) under the null, summed in log space.
    /// Refuses N(s) > 10^5.
    pub fn exact_binomial_tail(&self, s: usize, c: usize) -> Result<f64> {
        let d = self.num_examples;
        if d == 0 {
            return Ok(1.0);
        }
        let p = self.concept_counts[c] as f64 / d as f64;
        exact_tail_probability(self.word_counts[s], self.co_count(s, c), p)
    }

    /// Plug-in mutual information (nats) between the word-occurrence and
    /// concept-activation indicators.
    pub fn mutual_information(&self, s: usize, c: usize) -> f64 {
        let d = self.num_examples as f64;
        if self.num_examples == 0 {
            return 0.0;
        }
        let n11 = self.co_count(s, c) as f64;
        let n10 = self.word_counts[s] as f64 - n11;
        let n01 = self.concept_counts[c] as f64 - n11;
        let n00 = d - n10 - n01 - n11;
        let ps = self.word_counts[s] as f64 / d;
        let pc = self.concept_counts[c] as f64 / d;
        let cell = |n: f64, pu: f64, pv: f64| {
            if n <= 0.0 || pu <= 0.0 || pv <= 0.0 {
                0.0
            } else {
                let puv = n / d;
                puv * (puv / (pu * pv)).ln()
            }
        };
        let mi = cell(n11, ps, pc)
            + cell(n10, ps, 1.0 - pc)
            + cell(n01, 1.0 - ps, pc)
            + cell(n00, 1.0 - ps, 1.0 - pc);
        mi.max(0.0)
    }
}

/// Tail probability P(n > observed) for n ~ Bin(trials, p), via the normal
/// approximation with continuity correction:
/// E = 1/2 - 1/2 erf((observed + 1/2 - trials*p) / (sigma * sqrt(2))).
/// Degenerate inputs (trials = 0 or p outside (0, 1)) return 1.0.
pub fn normal_tail_probability(trials: u64, observed: u64, p: f64) -> f64 {
    if trials == 0 || p <= 0.0 || p >= 1.0 {
        return 1.0;
    }
    let n = trials as f64;
    let mu = n * p;
    let sigma = (n * p * (1.0 - p)).sqrt();
    let z = (observed as f64 + 0.5 - mu) / (sigma * std::f64::consts::SQRT_2);
    (0.5 - 0.5 * erf(z)).clamp(0.0, 1.0)
}

/// Guard for the exact tail computation.
pub const EXACT_TAIL_TRIALS_GUARD: u64 = 100_000;

/// Exact tail P(n > observed) = sum_{k=observed+1}^{trials} C(trials,k) p^k q^(trials-k).
pub fn exact_tail_probability(trials: u64, observed: u64, p: f64) -> Result<f64> {
    if trials > EXACT_TAIL_TRIALS_GUARD {
        return Err(Error::GuardExceeded(format!(
            "exact binomial tail limited to {EXACT_TAIL_TRIALS_GUARD} trials, got {trials}"
        )));
    }
    if trials == 0 || p <= 0.0 || p >= 1.0 {
        return Ok(1.0);
    }
    if observed >= trials {
        return Ok(0.0); // empty sum
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut total = 0.0_f64;
    for k in (observed + 1)..=trials {
        let ln_term =
            ln_binomial(trials, k) + k as f64 * ln_p + (trials - k) as f64 * ln_q;
        total += ln_term.exp();
    }
    Ok(total.clamp(0.0, 1.0))
}

/// E(s, c) for every token-concept pair, plus the generating counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelevanceMatrix {
    stats: CooccurrenceStats,
    /// Row-major (token-major) E values in [0, 1].
    values: Vec<f64>,
}

impl RelevanceMatrix {
    /// Computes E(s, c) for every pair.
    pub fn build(stats: CooccurrenceStats) -> RelevanceMatrix {
        let nc = stats.concepts().len();
        let values = (0..stats.tokens().len())
            .flat_map(|s| (0..nc).map(move |c| (s, c)))
            .map(|(s, c)| stats.relevance(s, c))
            .collect();
        RelevanceMatrix { stats, values }
    }

    /// Rebuilds a matrix from serialized parts, revalidating dimensions.
    pub fn from_parts(stats: CooccurrenceStats, values: Vec<f64>) -> Result<RelevanceMatrix> {
        let expected = stats.tokens().len() * stats.concepts().len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "relevance matrix needs {expected} entries, got {}",
                values.len()
            )));
        }
        Ok(RelevanceMatrix { stats, values })
    }

    pub fn stats(&self) -> &CooccurrenceStats {
        &self.stats
    }

    pub fn tokens(&self) -> &[String] {
        self.stats.tokens()
    }

    pub fn concepts(&self) -> &[String] {
        self.stats.concepts()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: usize, c: usize) -> f64 {
        self.values[s * self.concepts().len() + c]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let nc = self.concepts().len();
        &self.values[s * nc..(s + 1) * nc]
    }

    pub fn token_index(&self, token: &str) -> Result<usize> {
        self.tokens()
            .iter()
            .position(|t| t == token)
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    /// Applies a value transform to every entry. Used for rank-invariance
    /// checks; selection depends only on the ordering of E values.
    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> RelevanceMatrix {
        RelevanceMatrix {
            stats: self.stats.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Euclidean distance between the rows of two tokens.
    pub fn word_embedding_distance(&self, a: &str, b: &str) -> Result<f64> {
        let ra = self.row(self.token_index(a)?);
        let rb = self.row(self.token_index(b)?);
        Ok(ra
            .iter()
            .zip(rb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    }

    /// The k most relevant concepts for a token: ascending E, ties by
    /// concept-list order.
    pub fn top_relevant_concepts(&self, token: &str, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidInput("top-k must be >= 1".into()));
        }
        let s = self.token_index(token)?;
        let mut order: Vec<usize> = (0..self.concepts().len()).collect();
        order.sort_by(|&a, &b| {
            self.get(s, a)
                .total_cmp(&self.get(s, b))
                .then_with(|| a.cmp(&b))
        });
        Ok(order
            .into_iter()
            .take(k)
            .map(|c| (self.concepts()[c].clone(), self.get(s, c)))
            .collect())
    }
}
