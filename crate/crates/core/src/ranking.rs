//! Challenge leaderboards.
//!
//! Two aggregation schemes are provided. *Rank then aggregate* ranks teams
//! separately for every (case, metric) pair and averages those ranks per
//! team. *Aggregate then rank* first summarizes each team's values per metric
//! across cases (median by default), ranks the summaries per metric and
//! averages the four metric ranks. Ties share their average rank, and teams
//! with equal final scores share a leaderboard position.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::CaseMetrics;
use crate::stats::{self, average_ranks, benjamini_hochberg, signed_rank_test};

/// Scores closer than this are treated as tied when assigning positions.
pub const SCORE_TIE_EPS: f64 = 1e-9;

/// Number of bootstrap resamples used for stability analysis by default.
pub const DEFAULT_N_BOOT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dsc,
    Avd,
    F1,
    Ald,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Dsc, Metric::Avd, Metric::F1, Metric::Ald];

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Dsc | Metric::F1)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dsc => "dsc",
            Metric::Avd => "avd",
            Metric::F1 => "f1",
            Metric::Ald => "ald",
        }
    }

    pub fn of(self, m: &CaseMetrics) -> f64 {
        match self {
            Metric::Dsc => m.dsc,
            Metric::Avd => m.avd_ml,
            Metric::F1 => m.lesion_f1,
            Metric::Ald => m.ald as f64,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Metric values in [`Metric::ALL`] order.
pub fn metric_values(m: &CaseMetrics) -> [f64; 4] {
    Metric::ALL.map(|metric| metric.of(m))
}

/// Complete team x case table of the four metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    teams: Vec<String>,
    cases: Vec<String>,
    /// Team-major: `values[team * n_cases + case]`.
    values: Vec<[f64; 4]>,
}

impl MetricMatrix {
    /// `values` is team-major; `None` marks a missing submission, which is
    /// rejected. Impute failed runs upstream before building the matrix.
    pub fn new(
        teams: Vec<String>,
        cases: Vec<String>,
        values: Vec<Option<[f64; 4]>>,
    ) -> Result<Self> {
        if values.len() != teams.len() * cases.len() {
            return Err(Error::InvalidArgument(format!(
                "{} teams x {} cases need {} entries, got {}",
                teams.len(),
                cases.len(),
                teams.len() * cases.len(),
                values.len()
            )));
        }
        let mut out = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            match v {
                Some(v) if v.iter().all(|x| x.is_finite()) => out.push(v),
                _ => {
                    return Err(Error::IncompleteMatrix {
                        team: teams[i / cases.len()].clone(),
                        case: cases[i % cases.len()].clone(),
                    })
                }
            }
        }
        Ok(MetricMatrix {
            teams,
            cases,
            values: out,
        })
    }

    /// Build from a lookup of per-case metrics.
    pub fn from_lookup(
        teams: Vec<String>,
        cases: Vec<String>,
        mut lookup: impl FnMut(&str, &str) -> Option<CaseMetrics>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(teams.len() * cases.len());
        for t in &teams {
            for c in &cases {
                values.push(lookup(t, c).map(|m| metric_values(&m)));
            }
        }
        Self::new(teams, cases, values)
    }

    pub fn teams(&self) -> &[String] {
        &self.teams
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn n_cases(&self) -> usize {
        self.cases.len()
    }

    pub fn get(&self, team: usize, case: usize) -> [f64; 4] {
        self.values[team * self.cases.len() + case]
    }

    pub fn set(&mut self, team: usize, case: usize, values: [f64; 4]) {
        let n = self.cases.len();
        self.values[team * n + case] = values;
    }

    /// Values of one team for one metric across cases.
    pub fn column(&self, team: usize, metric: usize) -> Vec<f64> {
        (0..self.n_cases()).map(|c| self.get(team, c)[metric]).collect()
    }

    /// A matrix over the given case indices (repeats allowed).
    pub fn select_cases(&self, indices: &[usize]) -> MetricMatrix {
        let cases = indices.iter().map(|&i| self.cases[i].clone()).collect();
        let mut values = Vec::with_capacity(self.n_teams() * indices.len());
        for t in 0..self.n_teams() {
            values.extend(indices.iter().map(|&c| self.get(t, c)));
        }
        MetricMatrix {
            teams: self.teams.clone(),
            cases,
            values,
        }
    }

    /// Same matrix with teams reordered: new team `k` is old team `order[k]`.
    pub fn permute_teams(&self, order: &[usize]) -> MetricMatrix {
        let teams = order.iter().map(|&t| self.teams[t].clone()).collect();
        let mut values = Vec::with_capacity(self.values.len());
        for &t in order {
            values.extend((0..self.n_cases()).map(|c| self.get(t, c)));
        }
        MetricMatrix {
            teams,
            cases: self.cases.clone(),
            values,
        }
    }

    fn check_rankable(&self) -> Result<()> {
        if self.n_teams() < 2 {
            return Err(Error::FewerThanTwoTeams(self.n_teams()));
        }
        if self.n_cases() == 0 {
            return Err(Error::NoCases);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Median,
    Mean,
}

impl Aggregator {
    fn apply(self, values: &[f64]) -> f64 {
        match self {
            Aggregator::Median => stats::median(values),
            Aggregator::Mean => stats::mean(values),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum RankingScheme {
    #[default]
    RankThenAggregate,
    AggregateThenRank { aggregator: Aggregator },
}

impl FromStr for RankingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank-then-aggregate" => Ok(RankingScheme::RankThenAggregate),
            "aggregate-then-rank" | "aggregate-then-rank-median" => {
                Ok(RankingScheme::AggregateThenRank {
                    aggregator: Aggregator::Median,
                })
            }
            "aggregate-then-rank-mean" => Ok(RankingScheme::AggregateThenRank {
                aggregator: Aggregator::Mean,
            }),
            other => Err(Error::InvalidArgument(format!("unknown ranking scheme `{other}`"))),
        }
    }
}

/// Pairwise signed-rank comparison of all teams on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMap {
    pub metric: Metric,
    /// Raw two-sided p-values, `p_values[i][j]`; the diagonal is 1.
    pub p_values: Vec<Vec<f64>>,
    /// Benjamini-Hochberg adjusted within the metric.
    pub adjusted: Vec<Vec<f64>>,
    pub reject: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRanks {
    pub scheme: RankingScheme,
    pub n_boot: usize,
    pub seed: u64,
    /// `positions[b][team]`: leaderboard position in resample `b`.
    pub positions: Vec<Vec<usize>>,
    /// `histogram[team][p - 1]`: number of resamples with position `p`.
    pub histogram: Vec<Vec<usize>>,
    pub mean_position: Vec<f64>,
    pub sd_position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub scheme: RankingScheme,
    pub teams: Vec<String>,
    pub cases: Vec<String>,
    /// `per_case_ranks[team][case][metric]`; empty under aggregate-then-rank.
    pub per_case_ranks: Vec<Vec<[f64; 4]>>,
    /// Per-metric rank: mean over cases (rank then aggregate) or the rank of
    /// the aggregated value (aggregate then rank).
    pub metric_ranks: Vec<[f64; 4]>,
    pub aggregate_rank_score: Vec<f64>,
    /// 1-based positions; equal scores share the lower position.
    pub final_positions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bootstrap: Option<BootstrapRanks>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub significance: Option<Vec<SignificanceMap>>,
}

/// Fractional ranks (best = 1) of one column respecting the metric direction.
pub fn rank_column(values: &[f64], metric: Metric) -> Vec<f64> {
    if metric.higher_is_better() {
        let negated: Vec<f64> = values.iter().map(|v| -v).collect();
        average_ranks(&negated)
    } else {
        average_ranks(values)
    }
}

/// Competition positions from scores, lower score is better.
pub fn positions_from_scores(scores: &[f64]) -> Vec<usize> {
    scores
        .iter()
        .map(|&s| 1 + scores.iter().filter(|&&o| o < s - SCORE_TIE_EPS).count())
        .collect()
}

pub fn rank(m: &MetricMatrix, scheme: RankingScheme) -> Result<RankTable> {
    match scheme {
        RankingScheme::RankThenAggregate => rank_then_aggregate(m),
        RankingScheme::AggregateThenRank { aggregator } => aggregate_then_rank(m, aggregator),
    }
}

pub fn rank_then_aggregate(m: &MetricMatrix) -> Result<RankTable> {
    m.check_rankable()?;
    let (nt, nc) = (m.n_teams(), m.n_cases());
    let mut per_case = vec![vec![[0.0; 4]; nc]; nt];
    let mut column = vec![0.0; nt];
    for c in 0..nc {
        for (k, &metric) in Metric::ALL.iter().enumerate() {
            for (t, v) in column.iter_mut().enumerate() {
                *v = m.get(t, c)[k];
            }
            for (t, r) in rank_column(&column, metric).into_iter().enumerate() {
                per_case[t][c][k] = r;
            }
        }
    }
    let metric_ranks: Vec<[f64; 4]> = per_case
        .iter()
        .map(|cases| {
            let mut sums = [0.0; 4];
            for r in cases {
                for k in 0..4 {
                    sums[k] += r[k];
                }
            }
            sums.map(|s| s / nc as f64)
        })
        .collect();
    let scores: Vec<f64> = per_case
        .iter()
        .map(|cases| cases.iter().flatten().sum::<f64>() / (4 * nc) as f64)
        .collect();
    Ok(RankTable {
        scheme: RankingScheme::RankThenAggregate,
        teams: m.teams.clone(),
        cases: m.cases.clone(),
        per_case_ranks: per_case,
        metric_ranks,
        final_positions: positions_from_scores(&scores),
        aggregate_rank_score: scores,
        bootstrap: None,
        significance: None,
    })
}

pub fn aggregate_then_rank(m: &MetricMatrix, aggregator: Aggregator) -> Result<RankTable> {
    m.check_rankable()?;
    let nt = m.n_teams();
    let mut metric_ranks = vec![[0.0; 4]; nt];
    for (k, &metric) in Metric::ALL.iter().enumerate() {
        let aggregated: Vec<f64> = (0..nt).map(|t| aggregator.apply(&m.column(t, k))).collect();
        for (t, r) in rank_column(&aggregated, metric).into_iter().enumerate() {
            metric_ranks[t][k] = r;
        }
    }
    let scores: Vec<f64> = metric_ranks.iter().map(|r| r.iter().sum::<f64>() / 4.0).collect();
    Ok(RankTable {
        scheme: RankingScheme::AggregateThenRank { aggregator },
        teams: m.teams.clone(),
        cases: m.cases.clone(),
        per_case_ranks: Vec::new(),
        metric_ranks,
        final_positions: positions_from_scores(&scores),
        aggregate_rank_score: scores,
        bootstrap: None,
        significance: None,
    })
}

/// Case indices of each bootstrap resample. Resample `b` draws from its own
/// ChaCha stream (`seed`, stream `b`), so results do not depend on the order
/// in which resamples are evaluated.
pub fn bootstrap_indices(n_cases: usize, n_boot: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_boot)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            (0..n_cases).map(|_| rng.random_range(0..n_cases)).collect()
        })
        .collect()
}

/// Leaderboard positions over `n_boot` case resamples drawn with replacement.
pub fn bootstrap_ranks(
    m: &MetricMatrix,
    scheme: RankingScheme,
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapRanks> {
    m.check_rankable()?;
    if n_boot == 0 {
        return Err(Error::InvalidArgument("n_boot must be >= 1".into()));
    }
    let nt = m.n_teams();
    let indices = bootstrap_indices(m.n_cases(), n_boot, seed);
    let positions = indices
        .par_iter()
        .map(|idx| rank(&m.select_cases(idx), scheme).map(|t| t.final_positions))
        .collect::<Result<Vec<_>>>()?;

    let mut histogram = vec![vec![0usize; nt]; nt];
    for run in &positions {
        for (t, &p) in run.iter().enumerate() {
            histogram[t][p - 1] += 1;
        }
    }
    let per_team: Vec<Vec<f64>> = (0..nt)
        .map(|t| positions.iter().map(|run| run[t] as f64).collect())
        .collect();
    Ok(BootstrapRanks {
        scheme,
        n_boot,
        seed,
        positions,
        histogram,
        mean_position: per_team.iter().map(|v| stats::mean(v)).collect(),
        sd_position: per_team.iter().map(|v| stats::sample_sd(v)).collect(),
    })
}

/// Pairwise paired signed-rank tests between teams, per metric, with
/// Benjamini-Hochberg adjustment over the team pairs of each metric.
pub fn significance_map(m: &MetricMatrix, alpha: f64) -> Result<Vec<SignificanceMap>> {
    if m.n_cases() == 0 {
        return Err(Error::NoCases);
    }
    let nt = m.n_teams();
    let mut out = Vec::with_capacity(4);
    for (k, &metric) in Metric::ALL.iter().enumerate() {
        let columns: Vec<Vec<f64>> = (0..nt).map(|t| m.column(t, k)).collect();
        let mut pairs = Vec::new();
        let mut raw = Vec::new();
        for i in 0..nt {
            for j in (i + 1)..nt {
                let diffs: Vec<f64> = columns[i].iter().zip(&columns[j]).map(|(a, b)| a - b).collect();
                raw.push(signed_rank_test(&diffs)?.p_value);
                pairs.push((i, j));
            }
        }
        let adj = benjamini_hochberg(&raw, alpha)?;
        let mut p_values = vec![vec![1.0; nt]; nt];
        let mut adjusted = vec![vec![1.0; nt]; nt];
        let mut reject = vec![vec![false; nt]; nt];
        for (n, &(i, j)) in pairs.iter().enumerate() {
            p_values[i][j] = raw[n];
            p_values[j][i] = raw[n];
            adjusted[i][j] = adj.adjusted[n];
            adjusted[j][i] = adj.adjusted[n];
            reject[i][j] = adj.reject[n];
            reject[j][i] = adj.reject[n];
        }
        out.push(SignificanceMap {
            metric,
            p_values,
            adjusted,
            reject,
        });
    }
    Ok(out)
}

/// Options for [`leaderboard`].
#[derive(Debug, Clone, Copy)]
pub struct LeaderboardOptions {
    pub scheme: RankingScheme,
    /// `(n_boot, seed)`; no bootstrap when `None`.
    pub bootstrap: Option<(usize, u64)>,
    pub alpha: Option<f64>,
}

/// Final positions from the full matrix, plus bootstrap stability and
/// significance maps when requested.
pub fn leaderboard(m: &MetricMatrix, opts: LeaderboardOptions) -> Result<RankTable> {
    let mut table = rank(m, opts.scheme)?;
    if let Some((n_boot, seed)) = opts.bootstrap {
        table.bootstrap = Some(bootstrap_ranks(m, opts.scheme, n_boot, seed)?);
    }
    if let Some(alpha) = opts.alpha {
        table.significance = Some(significance_map(m, alpha)?);
    }
    Ok(table)
}
