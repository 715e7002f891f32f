//! Expert-versus-algorithm analysis of completed rating sessions.
//!
//! The primary comparison pairs each rater's mean score for algorithm items
//! with the same rater's mean for expert items and runs a signed-rank test on
//! the differences (algorithm minus expert). A second, item-level comparison
//! pools every score and runs a rank-sum test; it ignores rater clustering and
//! is reported separately under `pooled_items`.

use std::collections::BTreeMap;

use lesionbench::stats::{mean, rank_sum_test, signed_rank_test, Summary, TestResult};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TuringError};
use crate::session::{RatingSession, Source, SCORE_MAX, SCORE_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Completeness,
    Correctness,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Completeness, Dimension::Correctness];
}

/// Scores of one source on one dimension, in a form ready for a boxplot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    /// `counts[k]` is the number of scores equal to `k + 1`.
    pub counts: [usize; (SCORE_MAX - SCORE_MIN + 1) as usize],
    pub summary: Summary,
    pub scores: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDistribution {
    pub n_items: usize,
    pub completeness: Option<ScoreDistribution>,
    pub correctness: Option<ScoreDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionTests {
    /// Number of paired raters (signed-rank) or pooled items (rank-sum).
    pub n: usize,
    pub completeness: Option<TestResult>,
    pub correctness: Option<TestResult>,
}

impl DimensionTests {
    pub fn get(&self, dimension: Dimension) -> Option<&TestResult> {
        match dimension {
            Dimension::Completeness => self.completeness.as_ref(),
            Dimension::Correctness => self.correctness.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterSummary {
    pub rater_id: String,
    pub n_expert: usize,
    pub n_algorithm: usize,
    pub expert_mean_completeness: Option<f64>,
    pub algorithm_mean_completeness: Option<f64>,
    pub expert_mean_correctness: Option<f64>,
    pub algorithm_mean_correctness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuringReport {
    pub rater_count: usize,
    pub completed_sessions: usize,
    pub scored_items: usize,
    pub distributions: BTreeMap<Source, SourceDistribution>,
    /// Signed-rank on rater-level mean differences, algorithm minus expert.
    pub paired_by_rater: DimensionTests,
    /// Rank-sum on all item scores pooled across raters (algorithm vs expert).
    pub pooled_items: DimensionTests,
    pub per_rater: Vec<RaterSummary>,
}

#[derive(Default)]
struct Bucket {
    completeness: Vec<f64>,
    correctness: Vec<f64>,
}

impl Bucket {
    fn dim(&self, d: Dimension) -> &[f64] {
        match d {
            Dimension::Completeness => &self.completeness,
            Dimension::Correctness => &self.correctness,
        }
    }
}

fn distribution(values: &[f64]) -> Option<ScoreDistribution> {
    let summary = Summary::of(values)?;
    let mut counts = [0usize; (SCORE_MAX - SCORE_MIN + 1) as usize];
    let scores: Vec<u8> = values.iter().map(|&v| v as u8).collect();
    for &s in &scores {
        counts[(s - SCORE_MIN) as usize] += 1;
    }
    Some(ScoreDistribution {
        counts,
        summary,
        scores,
    })
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| mean(values))
}

/// Analyse the completed sessions among `sessions`; incomplete ones are
/// ignored. Sessions of the same rater are merged.
pub fn turing_report(sessions: &[RatingSession]) -> Result<TuringReport> {
    let completed: Vec<&RatingSession> = sessions.iter().filter(|s| s.is_complete()).collect();
    if completed.is_empty() {
        return Err(TuringError::NoCompletedSessions);
    }

    let mut pooled: BTreeMap<Source, Bucket> = BTreeMap::new();
    let mut by_rater: BTreeMap<&str, BTreeMap<Source, Bucket>> = BTreeMap::new();
    let mut scored_items = 0;
    for s in &completed {
        for item in &s.items {
            let score = s.scores[&item.item_id];
            scored_items += 1;
            for bucket in [
                pooled.entry(item.source).or_default(),
                by_rater
                    .entry(&s.rater_id)
                    .or_default()
                    .entry(item.source)
                    .or_default(),
            ] {
                bucket.completeness.push(score.completeness.into());
                bucket.correctness.push(score.correctness.into());
            }
        }
    }

    let distributions = [Source::Expert, Source::Algorithm]
        .into_iter()
        .map(|src| {
            let b = pooled.get(&src);
            let empty = Bucket::default();
            let b = b.unwrap_or(&empty);
            (
                src,
                SourceDistribution {
                    n_items: b.completeness.len(),
                    completeness: distribution(&b.completeness),
                    correctness: distribution(&b.correctness),
                },
            )
        })
        .collect();

    let empty = Bucket::default();
    let per_rater: Vec<RaterSummary> = by_rater
        .iter()
        .map(|(rater, buckets)| {
            let e = buckets.get(&Source::Expert).unwrap_or(&empty);
            let a = buckets.get(&Source::Algorithm).unwrap_or(&empty);
            RaterSummary {
                rater_id: rater.to_string(),
                n_expert: e.completeness.len(),
                n_algorithm: a.completeness.len(),
                expert_mean_completeness: mean_of(&e.completeness),
                algorithm_mean_completeness: mean_of(&a.completeness),
                expert_mean_correctness: mean_of(&e.correctness),
                algorithm_mean_correctness: mean_of(&a.correctness),
            }
        })
        .collect();

    let mut paired = DimensionTests {
        n: 0,
        completeness: None,
        correctness: None,
    };
    for d in Dimension::ALL {
        let diffs: Vec<f64> = per_rater
            .iter()
            .filter_map(|r| match d {
                Dimension::Completeness => {
                    Some(r.algorithm_mean_completeness? - r.expert_mean_completeness?)
                }
                Dimension::Correctness => {
                    Some(r.algorithm_mean_correctness? - r.expert_mean_correctness?)
                }
            })
            .collect();
        paired.n = diffs.len();
        let result = if diffs.is_empty() {
            None
        } else {
            Some(signed_rank_test(&diffs)?)
        };
        match d {
            Dimension::Completeness => paired.completeness = result,
            Dimension::Correctness => paired.correctness = result,
        }
    }

    let mut items = DimensionTests {
        n: scored_items,
        completeness: None,
        correctness: None,
    };
    if let (Some(a), Some(e)) = (pooled.get(&Source::Algorithm), pooled.get(&Source::Expert)) {
        items.completeness = Some(rank_sum_test(a.dim(Dimension::Completeness), e.dim(Dimension::Completeness))?);
        items.correctness = Some(rank_sum_test(a.dim(Dimension::Correctness), e.dim(Dimension::Correctness))?);
    }

    Ok(TuringReport {
        rater_count: per_rater.len(),
        completed_sessions: completed.len(),
        scored_items,
        distributions,
        paired_by_rater: paired,
        pooled_items: items,
        per_rater,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::tests::{pool, raters};
    use crate::session::{create_sessions, Score, DEFAULT_ITEMS_PER_RATER};

    fn fill(sessions: &mut [RatingSession], f: impl Fn(usize, Source) -> (u8, u8)) {
        for (r, s) in sessions.iter_mut().enumerate() {
            for item in &s.items {
                let (completeness, correctness) = f(r, item.source);
                s.scores.insert(
                    item.item_id.clone(),
                    Score {
                        completeness,
                        correctness,
                        timestamp_ms: 0,
                    },
                );
            }
        }
    }

    #[test]
    fn needs_a_completed_session() {
        let s = create_sessions(&pool(41), &raters(2), DEFAULT_ITEMS_PER_RATER, 0).unwrap();
        assert!(matches!(turing_report(&s), Err(TuringError::NoCompletedSessions)));
    }

    #[test]
    fn identical_scores_give_p_one() {
        let mut s = create_sessions(&pool(50), &raters(9), DEFAULT_ITEMS_PER_RATER, 2).unwrap();
        fill(&mut s, |_, _| (4, 5));
        let rep = turing_report(&s).unwrap();
        assert_eq!(rep.rater_count, 9);
        assert_eq!(rep.paired_by_rater.completeness.unwrap().p_value, 1.0);
        assert_eq!(rep.paired_by_rater.correctness.unwrap().p_value, 1.0);
        assert_eq!(rep.pooled_items.completeness.unwrap().p_value, 1.0);
    }

    #[test]
    fn nine_strictly_ordered_raters() {
        let mut s = create_sessions(&pool(50), &raters(9), DEFAULT_ITEMS_PER_RATER, 2).unwrap();
        fill(&mut s, |r, src| match src {
            Source::Expert => (2, 2),
            Source::Algorithm => (3 + (r % 3) as u8, 3),
        });
        let rep = turing_report(&s).unwrap();
        let p = rep.paired_by_rater.completeness.unwrap().p_value;
        assert!((p - 2.0 / 512.0).abs() < 1e-12, "{p}");
        assert!((rep.paired_by_rater.correctness.unwrap().p_value - 2.0 / 512.0).abs() < 1e-12);
        let e = rep.distributions[&Source::Expert].completeness.as_ref().unwrap();
        assert_eq!(e.counts[1], e.scores.len());
    }

    #[test]
    fn incomplete_sessions_are_excluded() {
        let mut s = create_sessions(&pool(50), &raters(3), DEFAULT_ITEMS_PER_RATER, 2).unwrap();
        fill(&mut s, |_, _| (3, 3));
        let first = s[0].items[0].item_id.clone();
        s[0].scores.remove(&first);
        let rep = turing_report(&s).unwrap();
        assert_eq!(rep.completed_sessions, 2);
        assert_eq!(rep.rater_count, 2);
    }
}
