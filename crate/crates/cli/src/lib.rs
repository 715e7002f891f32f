//! Command implementations behind the `lesionbench` binary.
//!
//! Every command validates all of its inputs before creating the output
//! directory, then writes one JSON document plus CSV mirrors. Documents carry
//! the tool version, command and parameters but no timestamps, so reruns on
//! the same inputs produce identical files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lesionbench::cohort::{
    evaluate_cohort, load_manifest, subgroup_analysis, volume_agreement, CohortOptions,
    CohortResult, GroupBy, Imputation, Manifest, SubgroupReport, VolumeAgreement,
};
use lesionbench::nifti::{self, DEFAULT_BINARIZE_TOLERANCE};
use lesionbench::phenotype::{
    classification_report, classify_pattern, parse_legend, territory_assignment,
    ClassificationReport, PatternLabel, StrokePattern, TerritoryAssignment, TerritoryAtlas,
};
use lesionbench::ranking::{leaderboard, LeaderboardOptions, RankTable, DEFAULT_N_BOOT};
use lesionbench::stats::DEFAULT_ALPHA;
use lesionbench::{connected_components, majority_vote, Connectivity, RankingScheme, VoteStack};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

pub const TOOL: &str = "lesionbench";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "lesionbench", version, about = "Evaluate, fuse, rank and phenotype lesion segmentations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-case metrics for every algorithm of a manifest.
    Eval(EvalArgs),
    /// Majority-vote fusion of several masks, for one case or a whole manifest.
    Ensemble(EnsembleArgs),
    /// Leaderboard with significance maps.
    Rank(RankArgs),
    /// Ranking stability over case resamples.
    Bootstrap(BootstrapArgs),
    /// Stroke pattern, size and territory phenotypes with subgroup tests.
    Phenotype(PhenotypeArgs),
    /// Vascular territory of a single mask.
    Territory(TerritoryArgs),
    /// Volume agreement (Pearson, Bland-Altman) between reference and prediction.
    Agree(AgreeArgs),
    /// Rating-study utilities.
    #[command(subcommand)]
    Turing(TuringCommand),
    /// Run the rating-study HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct EvalOptions {
    /// Voxel neighbourhood used to separate lesions.
    #[arg(long, default_value = "26")]
    pub connectivity: Connectivity,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Territory atlas volume (integer labels).
    #[arg(long, requires = "legend")]
    pub atlas: Option<PathBuf>,
    /// JSON legend mapping atlas labels to territories.
    #[arg(long, requires = "atlas")]
    pub legend: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated subset of algorithms; all by default.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<String>>,
    #[command(flatten)]
    pub options: EvalOptions,
    #[arg(long)]
    pub out: PathBuf,
}

/// Where cohort metrics come from: a manifest evaluated on the fly or a
/// previous `eval.json`.
#[derive(Debug, Args)]
pub struct CohortInput {
    #[arg(long, required_unless_present = "eval", conflicts_with = "eval")]
    pub manifest: Option<PathBuf>,
    /// `eval.json` written by `lesionbench eval`.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<String>>,
    #[command(flatten)]
    pub options: EvalOptions,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Masks to fuse (single-case mode).
    #[arg(long, num_args = 1.., conflicts_with = "manifest", required_unless_present = "manifest")]
    pub inputs: Vec<PathBuf>,
    /// Fuse the predictions of every case of a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Algorithms to fuse in manifest mode; all by default.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<String>>,
    /// Name of the fused algorithm in the written manifest.
    #[arg(long, default_value = "ensemble")]
    pub name: String,
    /// Output mask (single-case mode) or directory (manifest mode).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImputationArg {
    /// Fill missing metrics with the worst observed values.
    Worst,
    /// Refuse to rank when a metric is missing.
    None,
}

impl From<ImputationArg> for Imputation {
    fn from(a: ImputationArg) -> Self {
        match a {
            ImputationArg::Worst => Imputation::Worst,
            ImputationArg::None => Imputation::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub input: CohortInput,
    /// `rank-then-aggregate`, `aggregate-then-rank` (median) or `aggregate-then-rank-mean`.
    #[arg(long, default_value = "rank-then-aggregate")]
    pub scheme: RankingScheme,
    #[arg(long, value_enum, default_value = "worst")]
    pub imputation: ImputationArg,
    /// False-discovery rate of the significance maps.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Also bootstrap the ranking with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_N_BOOT)]
    pub n_boot: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub input: CohortInput,
    #[arg(long, default_value = "rank-then-aggregate")]
    pub scheme: RankingScheme,
    #[arg(long, value_enum, default_value = "worst")]
    pub imputation: ImputationArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_N_BOOT)]
    pub n_boot: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PhenotypeArgs {
    #[command(flatten)]
    pub input: CohortInput,
    /// False-discovery rate of the subgroup tests.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TerritoryArgs {
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub atlas: PathBuf,
    #[arg(long)]
    pub legend: PathBuf,
    #[arg(long, default_value = "26")]
    pub connectivity: Connectivity,
    /// Output JSON file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    #[command(flatten)]
    pub input: CohortInput,
    /// Also report agreement within each group: center, seen-center, phase,
    /// size-bin, phase-size, pattern or territory.
    #[arg(long)]
    pub group_by: Option<GroupBy>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TuringCommand {
    /// Render expert and algorithm slices of every case and write `pool.json`.
    Export(TuringExportArgs),
}

#[derive(Debug, Args)]
pub struct TuringExportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Algorithm whose predictions are shown opposite the expert masks.
    #[arg(long)]
    pub algorithm: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "LESIONBENCH_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, env = "LESIONBENCH_DATA_DIR")]
    pub data_dir: PathBuf,
    /// `pool.json` written by `lesionbench turing export`.
    #[arg(long, env = "LESIONBENCH_POOL")]
    pub pool: PathBuf,
    #[arg(long, env = "LESIONBENCH_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: String,
    /// Text file with the rating instructions shown to raters.
    #[arg(long, env = "LESIONBENCH_RUBRIC")]
    pub rubric: Option<PathBuf>,
}

/// JSON envelope of every command output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: serde_json::Value,
    pub data: T,
}

impl<T> Document<T> {
    pub fn new(command: &str, parameters: serde_json::Value, data: T) -> Self {
        Document {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            parameters,
            data,
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or inputs; nothing was written.
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Outputs were written but this many cases (or case, algorithm pairs) failed.
    Partial(usize),
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::Partial(_) => EXIT_PARTIAL,
        }
    }

    fn from_failures(n: usize) -> Status {
        if n == 0 {
            Status::Ok
        } else {
            Status::Partial(n)
        }
    }
}

type CmdResult = std::result::Result<Status, Failure>;

trait Classify<T> {
    fn invalid(self) -> std::result::Result<T, Failure>;
    fn runtime(self) -> std::result::Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn invalid(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }

    fn runtime(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Phenotype(a) => cmd_phenotype(a),
        Command::Territory(a) => cmd_territory(a),
        Command::Agree(a) => cmd_agree(a),
        Command::Turing(TuringCommand::Export(a)) => cmd_turing_export(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_out_dir(dir: &Path) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .runtime()
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn load_atlas(options: &EvalOptions) -> anyhow::Result<Option<TerritoryAtlas>> {
    match (&options.atlas, &options.legend) {
        (Some(a), Some(l)) => Ok(Some(TerritoryAtlas::load(a, l)?)),
        _ => Ok(None),
    }
}

fn select_algorithms(available: &[String], requested: &Option<Vec<String>>) -> anyhow::Result<Vec<String>> {
    let Some(req) = requested else {
        if available.is_empty() {
            bail!("no algorithms found");
        }
        return Ok(available.to_vec());
    };
    for a in req {
        if !available.contains(a) {
            bail!("unknown algorithm `{a}` (available: {})", available.join(", "));
        }
    }
    Ok(req.clone())
}

fn evaluate(manifest: &Manifest, algorithms: &[String], options: &EvalOptions) -> std::result::Result<CohortResult, Failure> {
    let opts = CohortOptions {
        connectivity: options.connectivity,
        workers: options.workers,
        binarize_tolerance: DEFAULT_BINARIZE_TOLERANCE,
        atlas: load_atlas(options).invalid()?,
    };
    let result = evaluate_cohort(manifest, algorithms, &opts).runtime()?;
    for c in &result.cases {
        if let Some(e) = &c.ground_truth_error {
            log::warn!("case {}: {e}", c.case_id);
        }
        for (a, o) in &c.algorithms {
            if let Some(e) = &o.error {
                log::warn!("case {} / {a}: {e}", c.case_id);
            }
        }
    }
    Ok(result)
}

fn load_eval_document(path: &Path) -> anyhow::Result<CohortResult> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Document<CohortResult> =
        serde_json::from_str(&text).with_context(|| format!("{} is not an eval document", path.display()))?;
    if doc.command != "eval" {
        bail!("{} was written by `{}`, expected `eval`", path.display(), doc.command);
    }
    Ok(doc.data)
}

/// Resolve a [`CohortInput`] into evaluated results and the algorithms to use.
fn cohort_from(input: &CohortInput) -> std::result::Result<(CohortResult, Vec<String>), Failure> {
    match (&input.manifest, &input.eval) {
        (Some(m), None) => {
            let manifest = load_manifest(m).invalid()?;
            let algos = select_algorithms(&manifest.algorithms(), &input.algorithms).invalid()?;
            let result = evaluate(&manifest, &algos, &input.options)?;
            Ok((result, algos))
        }
        (None, Some(e)) => {
            let result = load_eval_document(e).invalid()?;
            let algos = select_algorithms(&result.algorithms, &input.algorithms).invalid()?;
            Ok((result, algos))
        }
        _ => Err(Failure::Validation(anyhow!("pass exactly one of --manifest or --eval"))),
    }
}

fn input_parameters(input: &CohortInput, algos: &[String], connectivity: Connectivity) -> serde_json::Value {
    serde_json::json!({
        "manifest": input.manifest,
        "eval": input.eval,
        "algorithms": algos,
        "connectivity": connectivity,
    })
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let manifest = load_manifest(&a.manifest).invalid()?;
    let algos = select_algorithms(&manifest.algorithms(), &a.algorithms).invalid()?;
    let result = evaluate(&manifest, &algos, &a.options)?;

    create_out_dir(&a.out)?;
    let params = serde_json::json!({
        "manifest": a.manifest,
        "algorithms": algos,
        "connectivity": a.options.connectivity,
        "atlas": a.options.atlas,
        "legend": a.options.legend,
    });
    let doc = Document::new("eval", params, &result);
    write_json(&a.out.join("eval.json"), &doc).runtime()?;
    let f = File::create(a.out.join("cases.csv")).runtime()?;
    result.write_cases_csv(BufWriter::new(f)).runtime()?;
    let f = File::create(a.out.join("summary.csv")).runtime()?;
    result.write_summary_csv(BufWriter::new(f)).runtime()?;
    Ok(Status::from_failures(result.failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedCase {
    pub case_id: String,
    pub inputs: usize,
    pub threshold: usize,
    pub foreground_voxels: Option<usize>,
    pub volume_ml: Option<f64>,
    pub output: Option<PathBuf>,
    pub error: Option<String>,
}

fn fuse(paths: &[PathBuf], out: &Path) -> anyhow::Result<(usize, usize, f64)> {
    let masks = paths
        .iter()
        .map(|p| nifti::read_mask(p, DEFAULT_BINARIZE_TOLERANCE).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let stack = VoteStack::new(masks)?;
    let fused = majority_vote(&stack);
    nifti::write_mask(&fused, out).with_context(|| format!("writing {}", out.display()))?;
    Ok((stack.threshold(), fused.foreground_count(), fused.voxel_volume_ml()))
}

fn mask_file_name(case_id: &str) -> String {
    let stem: String = case_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{stem}.nii.gz")
}

fn cmd_ensemble(a: EnsembleArgs) -> CmdResult {
    let Some(manifest_path) = &a.manifest else {
        if a.inputs.len() < 2 {
            return Err(Failure::Validation(anyhow!("fusion needs at least two --inputs")));
        }
        for p in &a.inputs {
            if !p.exists() {
                return Err(Failure::Validation(anyhow!("{} does not exist", p.display())));
            }
        }
        // Single-case mode reads everything before writing, so a bad input
        // leaves nothing behind.
        let masks = a
            .inputs
            .iter()
            .map(|p| nifti::read_mask(p, DEFAULT_BINARIZE_TOLERANCE).with_context(|| format!("reading {}", p.display())))
            .collect::<anyhow::Result<Vec<_>>>()
            .invalid()?;
        let stack = VoteStack::new(masks).invalid()?;
        let fused = majority_vote(&stack);
        if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_out_dir(parent)?;
        }
        nifti::write_mask(&fused, &a.out).runtime()?;
        return Ok(Status::Ok);
    };

    let manifest = load_manifest(manifest_path).invalid()?;
    let algos = select_algorithms(&manifest.algorithms(), &a.algorithms).invalid()?;
    if algos.len() < 2 {
        return Err(Failure::Validation(anyhow!("fusion needs at least two algorithms")));
    }
    if manifest.algorithms().contains(&a.name) {
        return Err(Failure::Validation(anyhow!("algorithm `{}` already exists in the manifest", a.name)));
    }

    let mask_dir = a.out.join("masks");
    create_out_dir(&mask_dir)?;
    // The new manifest lives elsewhere, so inherited paths must not stay relative.
    let mut out_manifest = manifest.clone();
    for case in &mut out_manifest.cases {
        let inherited = std::iter::once(&mut case.gt_path)
            .chain(case.image_path.as_mut())
            .chain(case.predictions.values_mut());
        for p in inherited {
            *p = std::path::absolute(&*p).runtime()?;
        }
    }
    let mut fused_cases = Vec::new();
    for case in &mut out_manifest.cases {
        let paths: Option<Vec<PathBuf>> = algos.iter().map(|al| case.predictions.get(al).cloned()).collect();
        let rel = PathBuf::from("masks").join(mask_file_name(&case.case_id));
        let mut entry = FusedCase {
            case_id: case.case_id.clone(),
            inputs: algos.len(),
            threshold: algos.len() / 2 + 1,
            foreground_voxels: None,
            volume_ml: None,
            output: None,
            error: None,
        };
        let outcome = match paths {
            None => Err(anyhow!("missing prediction for at least one algorithm")),
            Some(p) => fuse(&p, &a.out.join(&rel)),
        };
        match outcome {
            Ok((threshold, voxels, ml)) => {
                entry.threshold = threshold;
                entry.foreground_voxels = Some(voxels);
                entry.volume_ml = Some(ml);
                entry.output = Some(rel.clone());
                case.predictions.insert(a.name.clone(), rel);
            }
            Err(e) => {
                log::warn!("case {}: {e:#}", case.case_id);
                entry.error = Some(format!("{e:#}"));
            }
        }
        fused_cases.push(entry);
    }
    let failures = fused_cases.iter().filter(|c| c.error.is_some()).count();
    out_manifest.write_json(a.out.join("manifest.json")).runtime()?;
    let params = serde_json::json!({"manifest": manifest_path, "algorithms": algos, "name": a.name});
    write_json(&a.out.join("ensemble.json"), &Document::new("ensemble", params, &fused_cases)).runtime()?;
    let mut w = csv_writer(&a.out.join("ensemble.csv")).runtime()?;
    w.write_record(["case_id", "inputs", "threshold", "foreground_voxels", "volume_ml", "output", "error"])
        .runtime()?;
    for c in &fused_cases {
        w.write_record([
            c.case_id.clone(),
            c.inputs.to_string(),
            c.threshold.to_string(),
            c.foreground_voxels.map(|v| v.to_string()).unwrap_or_default(),
            c.volume_ml.map(|v| v.to_string()).unwrap_or_default(),
            c.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            c.error.clone().unwrap_or_default(),
        ])
        .runtime()?;
    }
    w.flush().runtime()?;
    Ok(Status::from_failures(failures))
}

fn write_rank_csv(path: &Path, table: &RankTable) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["position", "team", "score", "rank_dsc", "rank_avd", "rank_f1", "rank_ald"])?;
    let mut order: Vec<usize> = (0..table.teams.len()).collect();
    order.sort_by_key(|&t| (table.final_positions[t], t));
    for t in order {
        let r = table.metric_ranks[t];
        w.write_record([
            table.final_positions[t].to_string(),
            table.teams[t].clone(),
            table.aggregate_rank_score[t].to_string(),
            r[0].to_string(),
            r[1].to_string(),
            r[2].to_string(),
            r[3].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_bootstrap_csv(path: &Path, table: &RankTable) -> anyhow::Result<()> {
    let Some(b) = &table.bootstrap else { return Ok(()) };
    let nt = table.teams.len();
    let mut w = csv_writer(path)?;
    let mut header = vec!["team".to_string(), "position".into(), "mean_position".into(), "sd_position".into()];
    header.extend((1..=nt).map(|p| format!("count_position_{p}")));
    w.write_record(&header)?;
    for t in 0..nt {
        let mut row = vec![
            table.teams[t].clone(),
            table.final_positions[t].to_string(),
            b.mean_position[t].to_string(),
            b.sd_position[t].to_string(),
        ];
        row.extend(b.histogram[t].iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn check_alpha(alpha: f64) -> std::result::Result<(), Failure> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::Validation(anyhow!("--alpha must lie in (0, 1)")))
    }
}

fn cmd_rank(a: RankArgs) -> CmdResult {
    check_alpha(a.alpha)?;
    if a.n_boot == 0 {
        return Err(Failure::Validation(anyhow!("--n-boot must be at least 1")));
    }
    let (result, algos) = cohort_from(&a.input)?;
    let matrix = result.metric_matrix(&algos, a.imputation.into()).invalid()?;
    let table = leaderboard(
        &matrix,
        LeaderboardOptions {
            scheme: a.scheme,
            bootstrap: a.seed.map(|s| (a.n_boot, s)),
            alpha: Some(a.alpha),
        },
    )
    .invalid()?;

    create_out_dir(&a.out)?;
    let mut params = input_parameters(&a.input, &algos, result.connectivity);
    params["scheme"] = serde_json::to_value(a.scheme).expect("serializable");
    params["imputation"] = format!("{:?}", a.imputation).to_lowercase().into();
    params["alpha"] = a.alpha.into();
    params["seed"] = serde_json::to_value(a.seed).expect("serializable");
    params["n_boot"] = a.seed.map(|_| a.n_boot).into();
    write_json(&a.out.join("rank.json"), &Document::new("rank", params, &table)).runtime()?;
    write_rank_csv(&a.out.join("rank.csv"), &table).runtime()?;
    write_bootstrap_csv(&a.out.join("bootstrap.csv"), &table).runtime()?;
    Ok(Status::from_failures(result.failures))
}

fn cmd_bootstrap(a: BootstrapArgs) -> CmdResult {
    if a.n_boot == 0 {
        return Err(Failure::Validation(anyhow!("--n-boot must be at least 1")));
    }
    let (result, algos) = cohort_from(&a.input)?;
    let matrix = result.metric_matrix(&algos, a.imputation.into()).invalid()?;
    let table = leaderboard(
        &matrix,
        LeaderboardOptions {
            scheme: a.scheme,
            bootstrap: Some((a.n_boot, a.seed)),
            alpha: None,
        },
    )
    .invalid()?;

    create_out_dir(&a.out)?;
    let mut params = input_parameters(&a.input, &algos, result.connectivity);
    params["scheme"] = serde_json::to_value(a.scheme).expect("serializable");
    params["imputation"] = format!("{:?}", a.imputation).to_lowercase().into();
    params["seed"] = a.seed.into();
    params["n_boot"] = a.n_boot.into();
    write_json(&a.out.join("bootstrap.json"), &Document::new("bootstrap", params, &table)).runtime()?;
    write_bootstrap_csv(&a.out.join("bootstrap.csv"), &table).runtime()?;
    Ok(Status::from_failures(result.failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmPhenotypes {
    /// Pattern predicted from the algorithm's mask versus the reference pattern.
    pub pattern_report: Option<ClassificationReport>,
    /// Territory from the algorithm's mask versus the reference territory.
    pub territory_report: Option<ClassificationReport>,
    /// Metric comparisons between the groups of each grouping column.
    pub subgroups: BTreeMap<GroupBy, SubgroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeDocument {
    pub pattern_counts: BTreeMap<String, usize>,
    pub size_bin_counts: BTreeMap<String, usize>,
    pub territory_counts: BTreeMap<String, usize>,
    pub algorithms: BTreeMap<String, AlgorithmPhenotypes>,
}

const PATTERN_CLASSES: [PatternLabel; 4] = [
    PatternLabel::NoIschemia,
    PatternLabel::Svi,
    PatternLabel::ScatteredInfarcts,
    PatternLabel::SviWithScattered,
];

fn cmd_phenotype(a: PhenotypeArgs) -> CmdResult {
    check_alpha(a.alpha)?;
    let (result, algos) = cohort_from(&a.input)?;

    let mut doc = PhenotypeDocument {
        pattern_counts: BTreeMap::new(),
        size_bin_counts: BTreeMap::new(),
        territory_counts: BTreeMap::new(),
        algorithms: BTreeMap::new(),
    };
    for c in &result.cases {
        if let Some(gt) = &c.ground_truth {
            *doc.pattern_counts.entry(gt.pattern.label.name().into()).or_default() += 1;
            *doc.size_bin_counts.entry(gt.size_bin.name().into()).or_default() += 1;
            if let Some(t) = &gt.territory {
                *doc.territory_counts.entry(t.territory.name().into()).or_default() += 1;
            }
        }
    }

    let pattern_classes: Vec<&str> = PATTERN_CLASSES.iter().map(|p| p.name()).collect();
    for algo in &algos {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        let mut t_truth = Vec::new();
        let mut t_pred = Vec::new();
        for c in &result.cases {
            let (Some(gt), Some(o)) = (&c.ground_truth, c.algorithms.get(algo)) else { continue };
            if let Some(p) = o.pattern {
                truth.push(gt.pattern.label.name());
                pred.push(p.name());
            }
            if let (Some(gt_t), Some(p_t)) = (&gt.territory, o.territory) {
                t_truth.push(gt_t.territory.name());
                t_pred.push(p_t.name());
            }
        }
        let pattern_report = if truth.is_empty() {
            None
        } else {
            Some(classification_report(&truth, &pred, &pattern_classes).runtime()?)
        };
        let territory_report = if t_truth.is_empty() {
            None
        } else {
            let classes: Vec<&str> = lesionbench::Territory::ALL.iter().map(|t| t.name()).collect();
            Some(classification_report(&t_truth, &t_pred, &classes).runtime()?)
        };
        let mut subgroups = BTreeMap::new();
        for by in GroupBy::ALL {
            if by == GroupBy::Territory && doc.territory_counts.is_empty() {
                continue;
            }
            let rows = result.grouped_rows(algo, by);
            let distinct: std::collections::BTreeSet<&String> = rows.iter().map(|(g, _)| g).collect();
            if distinct.len() < 2 {
                continue;
            }
            subgroups.insert(by, subgroup_analysis(&rows, a.alpha).runtime()?);
        }
        doc.algorithms.insert(
            algo.clone(),
            AlgorithmPhenotypes {
                pattern_report,
                territory_report,
                subgroups,
            },
        );
    }

    create_out_dir(&a.out)?;
    let mut params = input_parameters(&a.input, &algos, result.connectivity);
    params["alpha"] = a.alpha.into();
    write_json(&a.out.join("phenotype.json"), &Document::new("phenotype", params, &doc)).runtime()?;

    let mut w = csv_writer(&a.out.join("phenotype.csv")).runtime()?;
    let mut header = vec![
        "case_id".to_string(),
        "center_id".into(),
        "phase".into(),
        "gt_volume_ml".into(),
        "gt_lesion_count".into(),
        "size_bin".into(),
        "gt_pattern".into(),
        "largest_fraction".into(),
        "gt_territory".into(),
        "territory_tie".into(),
    ];
    header.extend(algos.iter().map(|al| format!("pattern_{al}")));
    w.write_record(&header).runtime()?;
    for c in &result.cases {
        let gt = c.ground_truth.as_ref();
        let mut row = vec![
            c.case_id.clone(),
            c.center_id.clone().unwrap_or_default(),
            c.phase.map(|p| p.to_string()).unwrap_or_default(),
            gt.map(|g| g.volume_ml.to_string()).unwrap_or_default(),
            gt.map(|g| g.lesion_count.to_string()).unwrap_or_default(),
            gt.map(|g| g.size_bin.name().to_string()).unwrap_or_default(),
            gt.map(|g| g.pattern.label.name().to_string()).unwrap_or_default(),
            gt.map(|g| g.pattern.largest_fraction.to_string()).unwrap_or_default(),
            gt.and_then(|g| g.territory.as_ref()).map(|t| t.territory.name().to_string()).unwrap_or_default(),
            gt.and_then(|g| g.territory.as_ref()).map(|t| t.tie_flag.to_string()).unwrap_or_default(),
        ];
        row.extend(algos.iter().map(|al| {
            c.algorithms
                .get(al)
                .and_then(|o| o.pattern)
                .map(|p| p.name().to_string())
                .unwrap_or_default()
        }));
        w.write_record(&row).runtime()?;
    }
    w.flush().runtime()?;
    Ok(Status::from_failures(result.failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerritoryDocument {
    pub lesion_count: usize,
    pub pattern: StrokePattern,
    pub assignment: TerritoryAssignment,
}

fn cmd_territory(a: TerritoryArgs) -> CmdResult {
    let legend_text = std::fs::read_to_string(&a.legend)
        .with_context(|| format!("reading {}", a.legend.display()))
        .invalid()?;
    parse_legend(&legend_text).invalid()?;
    let atlas = TerritoryAtlas::load(&a.atlas, &a.legend).invalid()?;
    let mask = nifti::read_mask(&a.mask, DEFAULT_BINARIZE_TOLERANCE).invalid()?;
    let labels = connected_components(&mask, a.connectivity);
    let assignment = territory_assignment(&labels, &atlas).invalid()?;
    let doc = Document::new(
        "territory",
        serde_json::json!({"mask": a.mask, "atlas": a.atlas, "legend": a.legend, "connectivity": a.connectivity}),
        TerritoryDocument {
            lesion_count: labels.lesion_count(),
            pattern: classify_pattern(&labels),
            assignment,
        },
    );
    match &a.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_out_dir(parent)?;
            }
            write_json(p, &doc).runtime()?;
        }
        None => println!("{}", serde_json::to_string_pretty(&doc).runtime()?),
    }
    Ok(Status::Ok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementDocument {
    pub overall: BTreeMap<String, VolumeAgreement>,
    /// Per algorithm, per group.
    pub groups: BTreeMap<String, BTreeMap<String, VolumeAgreement>>,
}

fn cmd_agree(a: AgreeArgs) -> CmdResult {
    let (result, algos) = cohort_from(&a.input)?;
    let mut doc = AgreementDocument {
        overall: BTreeMap::new(),
        groups: BTreeMap::new(),
    };
    for algo in &algos {
        doc.overall.insert(algo.clone(), volume_agreement(&result.metrics_of(algo)));
        if let Some(by) = a.group_by {
            let mut grouped: BTreeMap<String, Vec<lesionbench::CaseMetrics>> = BTreeMap::new();
            for (g, m) in result.grouped_rows(algo, by) {
                grouped.entry(g).or_default().push(m);
            }
            doc.groups.insert(
                algo.clone(),
                grouped.into_iter().map(|(g, rows)| (g, volume_agreement(&rows))).collect(),
            );
        }
    }

    create_out_dir(&a.out)?;
    let mut params = input_parameters(&a.input, &algos, result.connectivity);
    params["group_by"] = serde_json::to_value(a.group_by).expect("serializable");
    write_json(&a.out.join("agree.json"), &Document::new("agree", params, &doc)).runtime()?;

    let mut w = csv_writer(&a.out.join("agree.csv")).runtime()?;
    w.write_record(["case_id", "algorithm", "gt_volume_ml", "pred_volume_ml", "difference_ml", "mean_ml"])
        .runtime()?;
    for c in &result.cases {
        for algo in &algos {
            let Some(m) = c.algorithms.get(algo).and_then(|o| o.metrics) else { continue };
            w.write_record([
                c.case_id.clone(),
                algo.clone(),
                m.gt_volume_ml.to_string(),
                m.pred_volume_ml.to_string(),
                (m.pred_volume_ml - m.gt_volume_ml).to_string(),
                ((m.pred_volume_ml + m.gt_volume_ml) / 2.0).to_string(),
            ])
            .runtime()?;
        }
    }
    w.flush().runtime()?;
    Ok(Status::from_failures(result.failures))
}

fn cmd_turing_export(a: TuringExportArgs) -> CmdResult {
    use lesionbench_turing::export::{export_case, write_pool};
    use lesionbench_turing::CasePool;

    let manifest = load_manifest(&a.manifest).invalid()?;
    if !manifest.algorithms().contains(&a.algorithm) {
        return Err(Failure::Validation(anyhow!("unknown algorithm `{}`", a.algorithm)));
    }
    create_out_dir(&a.out)?;
    let mut pool = CasePool::default();
    let mut failures = 0;
    for case in &manifest.cases {
        let rendered = (|| -> anyhow::Result<_> {
            let pred_path = case
                .predictions
                .get(&a.algorithm)
                .ok_or_else(|| anyhow!("no prediction"))?;
            let expert = nifti::read_mask(&case.gt_path, DEFAULT_BINARIZE_TOLERANCE)?;
            let algorithm = nifti::read_mask(pred_path, DEFAULT_BINARIZE_TOLERANCE)?;
            let image = case.image_path.as_ref().map(nifti::read_volume).transpose()?;
            Ok(export_case(&case.case_id, image.as_ref(), &expert, &algorithm, &a.out)?)
        })();
        match rendered {
            Ok(c) => pool.cases.push(c),
            Err(e) => {
                log::warn!("case {}: {e:#}", case.case_id);
                failures += 1;
            }
        }
    }
    write_pool(&pool, &a.out).runtime()?;
    Ok(Status::from_failures(failures))
}

fn cmd_serve(a: ServeArgs) -> CmdResult {
    use lesionbench_turing::service::{serve, ServiceConfig, DEFAULT_RUBRIC};

    if a.admin_token.len() < 8 {
        return Err(Failure::Validation(anyhow!("the admin token must be at least 8 characters")));
    }
    let rubric = match &a.rubric {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .invalid()?,
        None => DEFAULT_RUBRIC.to_string(),
    };
    lesionbench_turing::CasePool::load(&a.pool).invalid()?;
    let config = ServiceConfig {
        bind: a.bind,
        data_dir: a.data_dir,
        pool_path: a.pool,
        admin_token: a.admin_token,
        rubric,
    };
    let rt = tokio::runtime::Runtime::new().runtime()?;
    rt.block_on(serve(config)).runtime()?;
    Ok(Status::Ok)
}
