//! Blinded rating sessions.
//!
//! Every rater receives a randomized list of scans. Each scan is shown with
//! either the expert or the algorithm segmentation; which one is stored only
//! server-side and never leaves the service in a rater-facing payload.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TuringError};

/// Lowest and highest score on both rating dimensions.
pub const SCORE_MIN: u8 = 1;
pub const SCORE_MAX: u8 = 6;

/// Items per rater used by default.
pub const DEFAULT_ITEMS_PER_RATER: RangeInclusive<usize> = 40..=41;

/// Renderings per item: two axial slices and one sagittal slice.
pub const VIEWS_PER_ITEM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Expert,
    Algorithm,
}

/// One scan available for rating, with renderings of both segmentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolCase {
    pub case_id: String,
    pub expert: Vec<PathBuf>,
    pub algorithm: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CasePool {
    pub cases: Vec<PoolCase>,
}

impl CasePool {
    /// Load `pool.json`; relative rendering paths resolve against its folder.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TuringError::io(path, e))?;
        let mut pool: CasePool = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for c in &mut pool.cases {
            for p in c.expert.iter_mut().chain(c.algorithm.iter_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.cases {
            if c.expert.len() != VIEWS_PER_ITEM || c.algorithm.len() != VIEWS_PER_ITEM {
                return Err(TuringError::InvalidPool(format!(
                    "case `{}` needs {VIEWS_PER_ITEM} renderings per source",
                    c.case_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub case_id: String,
    pub source: Source,
    pub renders: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub completeness: u8,
    pub correctness: u8,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSession {
    pub session_id: String,
    pub rater_id: String,
    pub items: Vec<Item>,
    #[serde(default)]
    pub scores: BTreeMap<String, Score>,
    #[serde(default)]
    pub closed: bool,
}

impl RatingSession {
    pub fn item(&self, item_id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// First item, in session order, without a score.
    pub fn next_unscored(&self) -> Option<&Item> {
        self.items.iter().find(|i| !self.scores.contains_key(&i.item_id))
    }

    pub fn scored(&self) -> usize {
        self.scores.len()
    }

    pub fn is_complete(&self) -> bool {
        self.items.iter().all(|i| self.scores.contains_key(&i.item_id))
    }

    pub fn count_source(&self, source: Source) -> usize {
        self.items.iter().filter(|i| i.source == source).count()
    }
}

pub fn validate_score(completeness: i64, correctness: i64) -> Result<(u8, u8)> {
    let check = |v: i64| {
        if (i64::from(SCORE_MIN)..=i64::from(SCORE_MAX)).contains(&v) {
            Ok(v as u8)
        } else {
            Err(TuringError::OutOfRangeScore(v))
        }
    };
    Ok((check(completeness)?, check(correctness)?))
}

/// Build one session per rater.
///
/// Rater `r` draws from ChaCha stream `r` of `seed`: a session length in
/// `per_rater`, that many distinct cases, a source per case with the two
/// sources balanced to within one, and a random item order. The result is a
/// pure function of `(pool, raters, per_rater, seed)`.
pub fn create_sessions(
    pool: &CasePool,
    raters: &[String],
    per_rater: RangeInclusive<usize>,
    seed: u64,
) -> Result<Vec<RatingSession>> {
    if per_rater.is_empty() || *per_rater.start() == 0 {
        return Err(TuringError::InvalidRequest(format!(
            "bad items-per-rater range {per_rater:?}"
        )));
    }
    if pool.len() < *per_rater.end() {
        return Err(TuringError::InsufficientPool {
            needed: *per_rater.end(),
            available: pool.len(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for r in raters {
        if !seen.insert(r) {
            return Err(TuringError::InvalidRequest(format!("duplicate rater `{r}`")));
        }
    }

    let mut sessions = Vec::with_capacity(raters.len());
    for (r, rater) in raters.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);

        let n = rng.random_range(per_rater.clone());
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(n);

        let extra = if rng.random_bool(0.5) {
            Source::Expert
        } else {
            Source::Algorithm
        };
        let mut sources: Vec<Source> = (0..n / 2)
            .flat_map(|_| [Source::Expert, Source::Algorithm])
            .collect();
        if n % 2 == 1 {
            sources.push(extra);
        }
        sources.shuffle(&mut rng);

        let session_id = format!("s{r:02}-{:08x}", rng.random::<u32>());
        let items = order
            .iter()
            .zip(&sources)
            .enumerate()
            .map(|(k, (&c, &source))| {
                let case = &pool.cases[c];
                Item {
                    item_id: format!("{session_id}-i{:02}", k + 1),
                    case_id: case.case_id.clone(),
                    source,
                    renders: match source {
                        Source::Expert => case.expert.clone(),
                        Source::Algorithm => case.algorithm.clone(),
                    },
                }
            })
            .collect();
        sessions.push(RatingSession {
            session_id,
            rater_id: rater.clone(),
            items,
            scores: BTreeMap::new(),
            closed: false,
        });
    }
    Ok(sessions)
}
