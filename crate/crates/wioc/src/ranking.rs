//! Top-k ranking metrics for held-out prediction events.

use crate::error::{Error, Result};

/// One scored prediction event: the candidate scores, which candidate was the
/// true one, and its competition rank (1 + count of strictly greater scores).
///
/// Competition ranking is the optimistic tie convention: exact ties share the
/// best rank, so untrained all-equal scorers are not forced to rank last.
#[derive(Debug, Clone)]
pub struct RankingOutcome {
    scores: Vec<f64>,
    true_index: usize,
    rank: usize,
}

impl RankingOutcome {
    pub fn new(scores: Vec<f64>, true_index: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("ranking outcome needs at least one score"));
        }
        if true_index >= scores.len() {
            return Err(Error::invalid(format!(
                "true_index {} out of range for {} scores",
                true_index,
                scores.len()
            )));
        }
        if !crate::numeric::all_finite(&scores) {
            return Err(Error::invalid("scores must be finite"));
        }
        let target = scores[true_index];
        let rank = 1 + scores.iter().filter(|&&s| s > target).count();
        Ok(RankingOutcome {
            scores,
            true_index,
            rank,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn true_index(&self) -> usize {
        self.true_index
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

/// Fraction of outcomes whose true item ranks within the top `k`.
pub fn top_k_rate(outcomes: &[RankingOutcome], k: usize) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::invalid("top_k_rate needs at least one outcome"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let hits = outcomes.iter().filter(|o| o.rank <= k).count();
    Ok(hits as f64 / outcomes.len() as f64)
}
