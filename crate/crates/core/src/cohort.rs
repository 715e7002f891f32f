//! Cohort manifests, batch evaluation and subgroup analysis.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_labeled, CaseMetrics};
use crate::nifti::{self, DEFAULT_BINARIZE_TOLERANCE};
use crate::phenotype::{
    classify_pattern, territory_assignment, PatternLabel, StrokePattern, Territory,
    TerritoryAssignment, TerritoryAtlas,
};
use crate::ranking::{Metric, MetricMatrix};
use crate::stats::{bland_altman, benjamini_hochberg, pearson_r, rank_sum_test, BlandAltman, Summary};
use crate::voxel::{connected_components, Connectivity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Acute,
    Subacute,
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "acute" => Ok(Phase::Acute),
            "subacute" => Ok(Phase::Subacute),
            other => Err(format!("expected `acute` or `subacute`, got `{other}`")),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Acute => "acute",
            Phase::Subacute => "subacute",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub gt_path: PathBuf,
    #[serde(default)]
    pub predictions: BTreeMap<String, PathBuf>,
    /// Background image for slice renderings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_center: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nihss_admission: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrs_90d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub cases: Vec<CaseRecord>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestJson {
    Wrapped { cases: Vec<CaseRecord> },
    Bare(Vec<CaseRecord>),
}

/// Column prefix of prediction paths in CSV manifests (`pred_<algorithm>`).
pub const PRED_PREFIX: &str = "pred_";

const CSV_COLUMNS: [&str; 9] = [
    "case_id",
    "gt_path",
    "image_path",
    "center_id",
    "phase",
    "seen_center",
    "nihss_admission",
    "mrs_90d",
    "treatment",
];

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Ok(true),
        "false" | "0" | "no" | "n" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

impl Manifest {
    /// Algorithms with a prediction column in at least one case, sorted.
    pub fn algorithms(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.cases.iter().flat_map(|c| c.predictions.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, c) in self.cases.iter().enumerate() {
            if c.case_id.trim().is_empty() {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    row: i + 1,
                    column: "case_id".into(),
                    message: "empty case_id".into(),
                });
            }
            if c.gt_path.as_os_str().is_empty() {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    row: i + 1,
                    column: "gt_path".into(),
                    message: "empty gt_path".into(),
                });
            }
            if !seen.insert(c.case_id.as_str()) {
                return Err(Error::DuplicateCase(c.case_id.clone()));
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.cases {
            fix(&mut c.gt_path);
            if let Some(p) = c.image_path.as_mut() {
                fix(p);
            }
            for p in c.predictions.values_mut() {
                fix(p);
            }
        }
    }
}

/// Load a CSV or JSON manifest. Relative paths resolve against the
/// manifest's directory. File existence is checked at evaluation time.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        || text.trim_start().starts_with(['{', '[']);
    let mut manifest = if is_json {
        let parsed: ManifestJson = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            row: e.line(),
            column: format!("col {}", e.column()),
            message: e.to_string(),
        })?;
        match parsed {
            ManifestJson::Wrapped { cases } | ManifestJson::Bare(cases) => Manifest { cases },
        }
    } else {
        parse_csv_manifest(path, &text)?
    };
    manifest.validate(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest.resolve_paths(base);
    Ok(manifest)
}

fn parse_csv_manifest(path: &Path, text: &str) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let err = |row: usize, column: &str, message: String| Error::Manifest {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    for required in ["case_id", "gt_path"] {
        if !headers.iter().any(|h| h == required) {
            return Err(err(1, required, "missing required column".into()));
        }
    }
    for h in headers.iter() {
        if !CSV_COLUMNS.contains(&h) && !h.starts_with(PRED_PREFIX) {
            return Err(err(1, h, "unknown column".into()));
        }
    }

    let mut cases = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let mut case = CaseRecord {
            case_id: String::new(),
            gt_path: PathBuf::new(),
            predictions: BTreeMap::new(),
            image_path: None,
            center_id: None,
            phase: None,
            seen_center: None,
            nihss_admission: None,
            mrs_90d: None,
            treatment: None,
        };
        for (h, v) in headers.iter().zip(record.iter()) {
            if v.is_empty() {
                continue;
            }
            let num = |v: &str| v.parse::<f64>().map_err(|e| err(row, h, e.to_string()));
            match h {
                "case_id" => case.case_id = v.to_string(),
                "gt_path" => case.gt_path = PathBuf::from(v),
                "image_path" => case.image_path = Some(PathBuf::from(v)),
                "center_id" => case.center_id = Some(v.to_string()),
                "phase" => case.phase = Some(v.parse().map_err(|m| err(row, h, m))?),
                "seen_center" => case.seen_center = Some(parse_bool(v).map_err(|m| err(row, h, m))?),
                "nihss_admission" => case.nihss_admission = Some(num(v)?),
                "mrs_90d" => case.mrs_90d = Some(num(v)?),
                "treatment" => case.treatment = Some(parse_bool(v).map_err(|m| err(row, h, m))?),
                pred => {
                    let algo = &pred[PRED_PREFIX.len()..];
                    if algo.is_empty() {
                        return Err(err(row, h, "empty algorithm name".into()));
                    }
                    case.predictions.insert(algo.to_string(), PathBuf::from(v));
                }
            }
        }
        if case.case_id.is_empty() {
            return Err(err(row, "case_id", "empty case_id".into()));
        }
        if case.gt_path.as_os_str().is_empty() {
            return Err(err(row, "gt_path", "empty gt_path".into()));
        }
        cases.push(case);
    }
    Ok(Manifest { cases })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeBin {
    #[serde(rename = "under5")]
    Under5,
    #[serde(rename = "from5to20")]
    From5To20,
    #[serde(rename = "over20")]
    Over20,
}

impl SizeBin {
    pub fn name(self) -> &'static str {
        match self {
            SizeBin::Under5 => "under5",
            SizeBin::From5To20 => "from5to20",
            SizeBin::Over20 => "over20",
        }
    }
}

/// Lesion size group of a ground-truth volume in ml: `< 5`, `[5, 20)`, `>= 20`.
pub fn size_bin(gt_volume_ml: f64) -> SizeBin {
    if gt_volume_ml < 5.0 {
        SizeBin::Under5
    } else if gt_volume_ml < 20.0 {
        SizeBin::From5To20
    } else {
        SizeBin::Over20
    }
}

#[derive(Debug, Clone)]
pub struct CohortOptions {
    pub connectivity: Connectivity,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub binarize_tolerance: f64,
    pub atlas: Option<TerritoryAtlas>,
}

impl Default for CohortOptions {
    fn default() -> Self {
        CohortOptions {
            connectivity: Connectivity::default(),
            workers: 0,
            binarize_tolerance: DEFAULT_BINARIZE_TOLERANCE,
            atlas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthInfo {
    pub volume_ml: f64,
    pub lesion_count: usize,
    pub size_bin: SizeBin,
    pub pattern: StrokePattern,
    /// Absent without an atlas or when no lesion falls inside a territory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub territory: Option<TerritoryAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmOutcome {
    /// `null` when the case failed.
    pub metrics: Option<CaseMetrics>,
    pub pattern: Option<PatternLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub territory: Option<Territory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AlgorithmOutcome {
    fn failed(message: String) -> Self {
        AlgorithmOutcome {
            metrics: None,
            pattern: None,
            territory: None,
            error: Some(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_center: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nihss_admission: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrs_90d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<bool>,
    pub ground_truth: Option<GroundTruthInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_error: Option<String>,
    pub algorithms: BTreeMap<String, AlgorithmOutcome>,
}

pub type MetricSummaries = BTreeMap<Metric, Summary>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortResult {
    pub connectivity: Connectivity,
    pub algorithms: Vec<String>,
    /// Sorted by `case_id`.
    pub cases: Vec<CaseEvaluation>,
    /// Per algorithm, per metric, over successfully evaluated cases.
    pub summaries: BTreeMap<String, MetricSummaries>,
    /// Number of failed ground truths plus failed (case, algorithm) pairs.
    pub failures: usize,
}

fn evaluate_one(
    record: &CaseRecord,
    algorithms: &[String],
    opts: &CohortOptions,
) -> CaseEvaluation {
    let conn = opts.connectivity;
    let mut eval = CaseEvaluation {
        case_id: record.case_id.clone(),
        center_id: record.center_id.clone(),
        phase: record.phase,
        seen_center: record.seen_center,
        nihss_admission: record.nihss_admission,
        mrs_90d: record.mrs_90d,
        treatment: record.treatment,
        ground_truth: None,
        ground_truth_error: None,
        algorithms: BTreeMap::new(),
    };

    let gt = match nifti::read_mask(&record.gt_path, opts.binarize_tolerance) {
        Ok(gt) => gt,
        Err(e) => {
            let msg = format!("ground truth: {e}");
            eval.ground_truth_error = Some(msg.clone());
            for a in algorithms {
                eval.algorithms
                    .insert(a.clone(), AlgorithmOutcome::failed(msg.clone()));
            }
            return eval;
        }
    };
    let gt_labels = connected_components(&gt, conn);
    let territory_of = |labels: &crate::voxel::LesionLabeling| {
        opts.atlas
            .as_ref()
            .and_then(|atlas| territory_assignment(labels, atlas).ok())
    };
    let volume_ml = gt_labels.total_volume_ml();
    eval.ground_truth = Some(GroundTruthInfo {
        volume_ml,
        lesion_count: gt_labels.lesion_count(),
        size_bin: size_bin(volume_ml),
        pattern: classify_pattern(&gt_labels),
        territory: territory_of(&gt_labels),
    });

    for algo in algorithms {
        let outcome = match record.predictions.get(algo) {
            None => AlgorithmOutcome::failed(format!("no prediction for algorithm `{algo}`")),
            Some(path) => match nifti::read_mask(path, opts.binarize_tolerance) {
                Err(e) => AlgorithmOutcome::failed(format!("prediction: {e}")),
                Ok(pred) => {
                    let pred_labels = connected_components(&pred, conn);
                    match evaluate_labeled(&gt, &pred, &gt_labels, &pred_labels) {
                        Ok(m) => AlgorithmOutcome {
                            metrics: Some(m),
                            pattern: Some(classify_pattern(&pred_labels).label),
                            territory: territory_of(&pred_labels).map(|t| t.territory),
                            error: None,
                        },
                        Err(e) => AlgorithmOutcome::failed(e.to_string()),
                    }
                }
            },
        };
        eval.algorithms.insert(algo.clone(), outcome);
    }
    eval
}

/// Evaluate every case of the manifest against each algorithm. Per-case
/// failures are recorded with null metrics and counted in `failures`.
pub fn evaluate_cohort(
    manifest: &Manifest,
    algorithms: &[String],
    opts: &CohortOptions,
) -> Result<CohortResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut cases: Vec<CaseEvaluation> = pool.install(|| {
        manifest
            .cases
            .par_iter()
            .map(|r| evaluate_one(r, algorithms, opts))
            .collect()
    });
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let failures = cases
        .iter()
        .map(|c| {
            usize::from(c.ground_truth_error.is_some())
                + c.algorithms.values().filter(|o| o.error.is_some()).count()
        })
        .sum();
    let mut result = CohortResult {
        connectivity: opts.connectivity,
        algorithms: algorithms.to_vec(),
        cases,
        summaries: BTreeMap::new(),
        failures,
    };
    result.summaries = algorithms
        .iter()
        .map(|a| (a.clone(), summarize(&result.metrics_of(a))))
        .collect();
    Ok(result)
}

/// Median, IQR and 5th/95th percentiles of each metric.
pub fn summarize(rows: &[CaseMetrics]) -> MetricSummaries {
    Metric::ALL
        .iter()
        .filter_map(|&m| {
            let v: Vec<f64> = rows.iter().map(|r| m.of(r)).collect();
            Summary::of(&v).map(|s| (m, s))
        })
        .collect()
}

/// How missing (case, algorithm) metrics are filled before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Imputation {
    /// Missing entries are an error.
    None,
    /// Dice and F1 of 0; AVD and ALD equal to the largest value observed in
    /// the cohort.
    Worst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupBy {
    Center,
    SeenCenter,
    Phase,
    SizeBin,
    PhaseSize,
    Pattern,
    Territory,
}

impl GroupBy {
    pub const ALL: [GroupBy; 7] = [
        GroupBy::Center,
        GroupBy::SeenCenter,
        GroupBy::Phase,
        GroupBy::SizeBin,
        GroupBy::PhaseSize,
        GroupBy::Pattern,
        GroupBy::Territory,
    ];
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('_', "-").as_str() {
            "center" => GroupBy::Center,
            "seen-center" => GroupBy::SeenCenter,
            "phase" => GroupBy::Phase,
            "size-bin" | "size" => GroupBy::SizeBin,
            "phase-size" => GroupBy::PhaseSize,
            "pattern" => GroupBy::Pattern,
            "territory" => GroupBy::Territory,
            other => return Err(Error::InvalidArgument(format!("unknown grouping `{other}`"))),
        })
    }
}

impl CohortResult {
    /// Successful metrics of one algorithm, in case order.
    pub fn metrics_of(&self, algorithm: &str) -> Vec<CaseMetrics> {
        self.cases
            .iter()
            .filter_map(|c| c.algorithms.get(algorithm).and_then(|o| o.metrics))
            .collect()
    }

    pub fn case_ids(&self) -> Vec<String> {
        self.cases.iter().map(|c| c.case_id.clone()).collect()
    }

    /// Team x case matrix over all cases of the cohort.
    pub fn metric_matrix(&self, algorithms: &[String], imputation: Imputation) -> Result<MetricMatrix> {
        let mut worst_avd = 0.0f64;
        let mut worst_ald = 0u64;
        for c in &self.cases {
            for o in c.algorithms.values() {
                if let Some(m) = o.metrics {
                    worst_avd = worst_avd.max(m.avd_ml);
                    worst_ald = worst_ald.max(m.ald);
                }
            }
        }
        let cases = self.case_ids();
        MetricMatrix::from_lookup(algorithms.to_vec(), cases, |team, case| {
            let found = self
                .cases
                .iter()
                .find(|c| c.case_id == case)
                .and_then(|c| c.algorithms.get(team))
                .and_then(|o| o.metrics);
            match (found, imputation) {
                (Some(m), _) => Some(m),
                (None, Imputation::None) => None,
                (None, Imputation::Worst) => Some(CaseMetrics {
                    dsc: 0.0,
                    avd_ml: worst_avd,
                    lesion_f1: 0.0,
                    ald: worst_ald,
                    gt_volume_ml: f64::NAN,
                    pred_volume_ml: f64::NAN,
                    gt_lesion_count: 0,
                    pred_lesion_count: 0,
                }),
            }
        })
    }

    fn group_key(case: &CaseEvaluation, by: GroupBy) -> Option<String> {
        let gt = case.ground_truth.as_ref();
        match by {
            GroupBy::Center => case.center_id.clone(),
            GroupBy::SeenCenter => case.seen_center.map(|s| if s { "seen" } else { "unseen" }.to_string()),
            GroupBy::Phase => case.phase.map(|p| p.to_string()),
            GroupBy::SizeBin => gt.map(|g| g.size_bin.name().to_string()),
            GroupBy::PhaseSize => match (case.phase, gt) {
                (Some(p), Some(g)) => Some(format!("{p}/{}", g.size_bin.name())),
                _ => None,
            },
            GroupBy::Pattern => gt.map(|g| g.pattern.label.name().to_string()),
            GroupBy::Territory => gt
                .and_then(|g| g.territory.as_ref())
                .map(|t| t.territory.name().to_string()),
        }
    }

    /// `(group, metrics)` rows of one algorithm. Cases without a value for
    /// the grouping column are dropped with a warning.
    pub fn grouped_rows(&self, algorithm: &str, by: GroupBy) -> Vec<(String, CaseMetrics)> {
        let mut rows = Vec::new();
        let mut dropped = 0;
        for c in &self.cases {
            let Some(outcome) = c.algorithms.get(algorithm) else { continue };
            let Some(m) = outcome.metrics else { continue };
            match Self::group_key(c, by) {
                Some(k) => rows.push((k, m)),
                None => dropped += 1,
            }
        }
        if dropped > 0 {
            log::warn!("{dropped} case(s) without a {by:?} value were left out of the {algorithm} subgroup analysis");
        }
        rows
    }

    /// Flat per (case, algorithm) CSV.
    pub fn write_cases_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "case_id",
            "algorithm",
            "dsc",
            "avd_ml",
            "lesion_f1",
            "ald",
            "gt_volume_ml",
            "pred_volume_ml",
            "gt_lesion_count",
            "pred_lesion_count",
            "gt_pattern",
            "pred_pattern",
            "gt_territory",
            "pred_territory",
            "error",
        ])?;
        for c in &self.cases {
            let gt_pattern = c
                .ground_truth
                .as_ref()
                .map(|g| g.pattern.label.name().to_string())
                .unwrap_or_default();
            let gt_territory = c
                .ground_truth
                .as_ref()
                .and_then(|g| g.territory.as_ref())
                .map(|t| t.territory.name().to_string())
                .unwrap_or_default();
            for (algo, o) in &c.algorithms {
                let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
                let int = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
                let m = o.metrics;
                w.write_record([
                    c.case_id.clone(),
                    algo.clone(),
                    num(m.map(|m| m.dsc)),
                    num(m.map(|m| m.avd_ml)),
                    num(m.map(|m| m.lesion_f1)),
                    int(m.map(|m| m.ald)),
                    num(m.map(|m| m.gt_volume_ml)),
                    num(m.map(|m| m.pred_volume_ml)),
                    int(m.map(|m| m.gt_lesion_count)),
                    int(m.map(|m| m.pred_lesion_count)),
                    gt_pattern.clone(),
                    o.pattern.map(|p| p.name().to_string()).unwrap_or_default(),
                    gt_territory.clone(),
                    o.territory.map(|t| t.name().to_string()).unwrap_or_default(),
                    o.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Per algorithm and metric summary CSV.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        write_summaries_csv(out, "algorithm", &self.summaries)
    }
}

pub(crate) fn write_summaries_csv<W: Write>(
    out: W,
    key_name: &str,
    summaries: &BTreeMap<String, MetricSummaries>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([key_name, "metric", "n", "median", "q25", "q75", "iqr", "p5", "p95", "mean"])?;
    for (key, per_metric) in summaries {
        for (metric, s) in per_metric {
            w.write_record([
                key.clone(),
                metric.name().to_string(),
                s.n.to_string(),
                s.median.to_string(),
                s.q25.to_string(),
                s.q75.to_string(),
                s.iqr.to_string(),
                s.p5.to_string(),
                s.p95.to_string(),
                s.mean.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeAgreement {
    pub n: usize,
    /// `None` for fewer than two cases or constant volumes.
    pub pearson_r: Option<f64>,
    pub bland_altman: Option<BlandAltman>,
}

/// Pearson correlation and Bland-Altman agreement of ground-truth versus
/// predicted volumes.
pub fn volume_agreement(rows: &[CaseMetrics]) -> VolumeAgreement {
    let gt: Vec<f64> = rows.iter().map(|m| m.gt_volume_ml).collect();
    let pred: Vec<f64> = rows.iter().map(|m| m.pred_volume_ml).collect();
    VolumeAgreement {
        n: rows.len(),
        pearson_r: pearson_r(&gt, &pred).ok(),
        bland_altman: bland_altman(&gt, &pred).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub n: usize,
    pub metrics: MetricSummaries,
    pub volume_agreement: VolumeAgreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub metric: Metric,
    pub group_a: String,
    pub group_b: String,
    pub p_value: f64,
    /// Benjamini-Hochberg adjusted over the group pairs of this metric.
    pub p_adjusted: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub groups: Vec<GroupSummary>,
    pub tests: Vec<GroupTest>,
}

/// Per-group metric summaries and pairwise rank-sum tests between groups.
pub fn subgroup_analysis(rows: &[(String, CaseMetrics)], alpha: f64) -> Result<SubgroupReport> {
    let mut grouped: BTreeMap<&str, Vec<CaseMetrics>> = BTreeMap::new();
    for (g, m) in rows {
        grouped.entry(g.as_str()).or_default().push(*m);
    }
    let groups: Vec<GroupSummary> = grouped
        .iter()
        .map(|(g, ms)| GroupSummary {
            group: g.to_string(),
            n: ms.len(),
            metrics: summarize(ms),
            volume_agreement: volume_agreement(ms),
        })
        .collect();

    let names: Vec<&str> = grouped.keys().copied().collect();
    let mut tests = Vec::new();
    for metric in Metric::ALL {
        let mut family = Vec::new();
        for i in 0..names.len() {
            for j in (i + 1)..names.len() {
                let a: Vec<f64> = grouped[names[i]].iter().map(|m| metric.of(m)).collect();
                let b: Vec<f64> = grouped[names[j]].iter().map(|m| metric.of(m)).collect();
                family.push((i, j, rank_sum_test(&a, &b)?.p_value));
            }
        }
        let p: Vec<f64> = family.iter().map(|f| f.2).collect();
        let adj = benjamini_hochberg(&p, alpha)?;
        for (k, (i, j, p)) in family.into_iter().enumerate() {
            tests.push(GroupTest {
                metric,
                group_a: names[i].to_string(),
                group_b: names[j].to_string(),
                p_value: p,
                p_adjusted: adj.adjusted[k],
                reject: adj.reject[k],
            });
        }
    }
    Ok(SubgroupReport { groups, tests })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(dsc: f64, gt_ml: f64, pred_ml: f64) -> CaseMetrics {
        CaseMetrics {
            dsc,
            avd_ml: (gt_ml - pred_ml).abs(),
            lesion_f1: dsc,
            ald: 0,
            gt_volume_ml: gt_ml,
            pred_volume_ml: pred_ml,
            gt_lesion_count: 1,
            pred_lesion_count: 1,
        }
    }

    #[test]
    fn size_bins() {
        assert_eq!(size_bin(4.9), SizeBin::Under5);
        assert_eq!(size_bin(5.0), SizeBin::From5To20);
        assert_eq!(size_bin(19.999), SizeBin::From5To20);
        assert_eq!(size_bin(20.0), SizeBin::Over20);
        assert_eq!(size_bin(0.0), SizeBin::Under5);
    }

    #[test]
    fn csv_manifest_minimal_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "case_id,gt_path,pred_a\nc1,gt/c1.nii.gz,pred/c1.nii\n").unwrap();
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.cases.len(), 1);
        assert_eq!(m.cases[0].gt_path, dir.path().join("gt/c1.nii.gz"));
        assert_eq!(m.algorithms(), vec!["a".to_string()]);

        std::fs::write(&p, "case_id,gt_path\nc1,a.nii\nc1,b.nii\n").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::DuplicateCase(id)) if id == "c1"));
    }

    #[test]
    fn csv_manifest_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "case_id,gt_path,phase\nc1,a.nii,acute\nc2,b.nii,chronic\n").unwrap();
        match load_manifest(&p) {
            Err(Error::Manifest { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "phase");
            }
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "case_id,gt\nc1,a.nii\n").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Manifest { .. })));
    }

    #[test]
    fn json_manifest_both_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(
            &p,
            r#"{"cases": [{"case_id": "c1", "gt_path": "/abs/gt.nii", "phase": "subacute", "predictions": {"x": "p.nii"}}]}"#,
        )
        .unwrap();
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.cases[0].phase, Some(Phase::Subacute));
        assert_eq!(m.cases[0].gt_path, PathBuf::from("/abs/gt.nii"));
        std::fs::write(&p, r#"[{"case_id": "c1", "gt_path": "g.nii"}]"#).unwrap();
        assert_eq!(load_manifest(&p).unwrap().cases.len(), 1);
    }

    #[test]
    fn summaries_by_hand() {
        // dsc values 0.2, 0.4, 0.6, 0.8, 1.0
        let rows: Vec<CaseMetrics> = (1..=5).map(|k| metrics(k as f64 * 0.2, 1.0, 1.0)).collect();
        let s = summarize(&rows)[&Metric::Dsc];
        assert!((s.median - 0.6).abs() < 1e-12);
        assert!((s.q25 - 0.4).abs() < 1e-12);
        assert!((s.q75 - 0.8).abs() < 1e-12);
        assert!((s.iqr - 0.4).abs() < 1e-12);
        assert!((s.p5 - 0.24).abs() < 1e-12);
        assert!((s.p95 - 0.96).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_are_not_different() {
        let mut rows = Vec::new();
        for g in ["a", "b"] {
            for k in 0..20 {
                rows.push((g.to_string(), metrics(k as f64 / 20.0, k as f64, k as f64 + 0.5)));
            }
        }
        let r = subgroup_analysis(&rows, 0.05).unwrap();
        assert_eq!(r.groups.len(), 2);
        assert!(r.tests.iter().all(|t| t.p_adjusted > 0.9));
        assert_eq!(r.groups[0].volume_agreement.pearson_r, Some(1.0));
    }
}
