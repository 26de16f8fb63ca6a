//! Subcommand arguments and their implementations.
//!
//! Arguments double as the serialized parameter set of a run manifest, so
//! every field that affects output lives here and nothing else does.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use unicity_core::io::{load_tensor, read_categories, read_events, read_exclusions, save_tensor, write_events};
use unicity_core::rng::derive_seed;
use unicity_core::scaling::{ScheduleEntry, USERS_PER_UNIT, X_UNIT};
use unicity_core::temporal::{
    category_fractions, jaccard_drift, popularity_histogram, seasonal_unicity, usage_stats, CategoryWeighting,
    DriftMode,
};
use unicity_core::{
    build_tensor, estimate_unicity, extrapolate, fit_scaling, generate, plant_unique_users, scaling_curve,
    BuildOptions, BuildReport, Error as CoreError, EstimateParams, Extrapolation, FingerprintTensor, FitForm,
    FitResult, GeneratorConfig, GroundTruth, PlantOptions, PopularitySource, Population, ScalingCurve, Strategy,
    SubsampleSchedule, UnicityEstimate, Window,
};

use crate::output::{opt, sha256_hex, sidecar, write_bytes, write_json, Table};
use crate::parse;

/// A flag value that expands to a list, stored as the list itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

fn n_list(s: &str) -> Result<List<usize>, String> {
    parse::n_list(s).map(List)
}

fn size_list(s: &str) -> Result<List<usize>, String> {
    parse::size_list(s).map(List)
}

fn strategies(s: &str) -> Result<List<Strategy>, String> {
    parse::strategies(s).map(List)
}

fn forms(s: &str) -> Result<List<FitForm>, String> {
    parse::forms(s).map(List)
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "params", rename_all = "lowercase")]
pub enum Command {
    /// Build a dataset cache from a user,item,period event file.
    Ingest(IngestArgs),
    /// Estimate unicity for a list of n and strategies.
    Unicity(UnicityArgs),
    /// Per-period unicity with rescaling by item-set size.
    Seasonal(SeasonalArgs),
    /// Unicity across subsampled population sizes.
    Scaling(ScalingArgs),
    /// Fit functional forms to a scaling report.
    Fit(FitArgs),
    /// Evaluate fitted forms at larger population sizes.
    Extrapolate(ExtrapolateArgs),
    /// Generate a synthetic dataset with a ground-truth sidecar.
    Synth(SynthArgs),
    /// Descriptive tables: usage, popularity, categories or drift.
    Stats(StatsArgs),
}

/// What a command wrote, in a fixed order.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
}

/// Numerical failure that is not a core library error.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Unicity(_) => "unicity",
            Command::Seasonal(_) => "seasonal",
            Command::Scaling(_) => "scaling",
            Command::Fit(_) => "fit",
            Command::Extrapolate(_) => "extrapolate",
            Command::Synth(_) => "synth",
            Command::Stats(_) => "stats",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Unicity(a) => Some(a.estimator.seed),
            Command::Seasonal(a) => Some(a.estimator.seed),
            Command::Scaling(a) => Some(a.estimator.seed),
            Command::Synth(a) => Some(a.seed),
            _ => None,
        }
    }

    pub fn inputs(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        match self {
            Command::Ingest(a) => {
                out.push(&a.input);
                out.extend(a.exclusions.as_deref());
            }
            Command::Unicity(a) => out.push(&a.dataset),
            Command::Seasonal(a) => out.push(&a.dataset),
            Command::Scaling(a) => out.push(&a.dataset),
            Command::Fit(a) => out.push(&a.curve),
            Command::Extrapolate(a) => out.push(&a.fits),
            Command::Synth(_) => {}
            Command::Stats(a) => {
                out.push(&a.dataset);
                out.extend(a.categories.as_deref());
            }
        }
        out
    }

    fn inputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Ingest(a) => std::iter::once(&mut a.input).chain(a.exclusions.as_mut()).collect(),
            Command::Unicity(a) => vec![&mut a.dataset],
            Command::Seasonal(a) => vec![&mut a.dataset],
            Command::Scaling(a) => vec![&mut a.dataset],
            Command::Fit(a) => vec![&mut a.curve],
            Command::Extrapolate(a) => vec![&mut a.fits],
            Command::Synth(_) => vec![],
            Command::Stats(a) => std::iter::once(&mut a.dataset).chain(a.categories.as_mut()).collect(),
        }
    }

    /// Output paths given on the command line; the first is the primary one.
    /// Sidecars are derived from these and follow them on replay.
    pub fn outputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Ingest(a) => vec![&mut a.output],
            Command::Unicity(a) => vec![&mut a.output],
            Command::Seasonal(a) => vec![&mut a.output],
            Command::Scaling(a) => vec![&mut a.output],
            Command::Fit(a) => vec![&mut a.output],
            Command::Extrapolate(a) => vec![&mut a.output],
            Command::Synth(a) => std::iter::once(&mut a.output).chain(a.events.as_mut()).collect(),
            Command::Stats(a) => vec![&mut a.output],
        }
    }

    /// Makes input paths absolute so a manifest can be replayed from any
    /// working directory.
    pub fn canonicalize_inputs(&mut self) -> Result<()> {
        for path in self.inputs_mut() {
            *path = std::fs::canonicalize(&*path).with_context(|| format!("cannot open {}", path.display()))?;
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Outcome> {
        match self {
            Command::Ingest(a) => a.run(),
            Command::Unicity(a) => a.run(),
            Command::Seasonal(a) => a.run(),
            Command::Scaling(a) => a.run(),
            Command::Fit(a) => a.run(),
            Command::Extrapolate(a) => a.run(),
            Command::Synth(a) => a.run(),
            Command::Stats(a) => a.run(),
        }
    }
}

/// Identifies the dataset a report was computed from without its path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub sha256: String,
    pub users: usize,
    pub items: usize,
    pub periods: u32,
}

fn load_dataset(path: &Path) -> Result<(FingerprintTensor, DatasetInfo)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let tensor = load_tensor(bytes.as_slice()).with_context(|| format!("loading dataset {}", path.display()))?;
    let info = DatasetInfo {
        sha256: sha256_hex(&bytes),
        users: tensor.num_users(),
        items: tensor.num_items(),
        periods: tensor.num_periods(),
    };
    Ok((tensor, info))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn population(tensor: &FingerprintTensor, window: Window, popularity_window: Option<Window>) -> Result<Population> {
    match popularity_window {
        None => Ok(Population::from_tensor(tensor, window)?),
        Some(pw) => Ok(Population::with_popularity(
            tensor.window_fingerprints(window)?,
            tensor.popularity(pw)?,
        )?),
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Event file with `user_id,item_id,period_index` lines.
    #[arg(long)]
    pub input: PathBuf,
    /// Item ids to drop, one per line.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    /// Users with fewer items in a period are dropped from that period.
    #[arg(long, default_value_t = 3)]
    pub min_items: usize,
    /// Number of periods; inferred from the data when omitted.
    #[arg(long)]
    pub periods: Option<u32>,
    /// Dataset cache to write.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    header: bool,
    malformed_lines: usize,
    build: &'a BuildReport,
}

impl IngestArgs {
    fn run(&self) -> Result<Outcome> {
        let parsed = read_events(open(&self.input)?)?;
        for (line, reason) in &parsed.rejected_samples {
            eprintln!("skipping line {line}: {reason}");
        }
        let exclusions = match &self.exclusions {
            Some(p) => read_exclusions(open(p)?)?,
            None => Default::default(),
        };
        let options = BuildOptions {
            exclusions,
            min_items_per_period: self.min_items,
            periods: self.periods,
        };
        let (tensor, report) = build_tensor(parsed.events, &options)?;
        let mut bytes = Vec::new();
        save_tensor(&mut bytes, &tensor)?;
        write_bytes(&self.output, &bytes)?;
        let summary = IngestSummary {
            header: parsed.header,
            malformed_lines: parsed.rejected,
            build: &report,
        };
        eprintln!(
            "read {} events ({} malformed lines); kept {} events, {} users, {} items, {} periods",
            report.events_read, parsed.rejected, report.events_kept, report.users, report.items, report.periods
        );
        eprintln!(
            "dropped: {} out-of-range, {} excluded, {} duplicate, {} user-periods below {} items",
            report.rejected, report.excluded, report.duplicates, report.dropped_user_periods, self.min_items
        );
        let report_path = sidecar(&self.output, ".report.json");
        write_json(&report_path, &summary)?;
        Ok(Outcome {
            outputs: vec![self.output.clone(), report_path],
        })
    }
}

/// Estimator flags shared by unicity, seasonal and scaling.
#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorArgs {
    /// random, popularity or both.
    #[arg(long, value_parser = strategies, default_value = "both")]
    pub strategy: List<Strategy>,
    /// Number of independent samples.
    #[arg(long = "s", visible_alias = "samples", default_value_t = 20)]
    pub samples: usize,
    /// Users drawn per sample.
    #[arg(long, default_value_t = 10_000)]
    pub sample_size: usize,
    /// Decimal or 0x-prefixed hex.
    #[arg(long, value_parser = parse::seed, default_value = "0xC0FFEE")]
    pub seed: u64,
}

impl EstimatorArgs {
    fn params(&self, n: usize, strategy: Strategy) -> EstimateParams {
        EstimateParams::new(n, strategy)
            .with_samples(self.samples, self.sample_size)
            .with_seed(self.seed)
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct UnicityArgs {
    /// Dataset cache written by `ingest` or `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Periods to attack, e.g. `3` or `0-11`; all periods by default.
    #[arg(long)]
    pub window: Option<Window>,
    /// Quasi-identifier sizes: `1..10`, `1,2,4` or `5`.
    #[arg(long, value_parser = n_list, default_value = "1..10")]
    pub n: List<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub estimator: EstimatorArgs,
    /// Rank items by popularity over this window instead of the attacked one.
    #[arg(long)]
    pub popularity_window: Option<Window>,
    /// Report to write.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnicityReport {
    pub dataset: DatasetInfo,
    pub window: Window,
    pub popularity_window: Option<Window>,
    pub estimates: Vec<UnicityEstimate>,
}

impl UnicityArgs {
    fn run(&self) -> Result<Outcome> {
        let (tensor, dataset) = load_dataset(&self.dataset)?;
        let window = self.window.unwrap_or_else(|| tensor.full_window());
        let pop = population(&tensor, window, self.popularity_window)?;
        let mut estimates = Vec::new();
        for &strategy in &self.estimator.strategy.0 {
            for &n in &self.n.0 {
                let est = estimate_unicity(&pop, &self.estimator.params(n, strategy))?;
                eprintln!("{strategy:>10} n={n:<3} unicity {:.4} ± {:.4}", est.mean, est.std);
                estimates.push(est);
            }
        }
        let report = UnicityReport {
            dataset,
            window,
            popularity_window: self.popularity_window,
            estimates,
        };
        write_json(&self.output, &report)?;
        Ok(Outcome {
            outputs: vec![self.output.clone()],
        })
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SeasonalArgs {
    /// Dataset cache written by `ingest` or `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Quasi-identifier sizes.
    #[arg(long, value_parser = n_list, default_value = "4")]
    pub n: List<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub estimator: EstimatorArgs,
    /// Rank items by popularity over this window in every period.
    #[arg(long)]
    pub popularity_window: Option<Window>,
    /// Table to write.
    #[arg(long, short)]
    pub output: PathBuf,
}

impl SeasonalArgs {
    fn run(&self) -> Result<Outcome> {
        let (tensor, dataset) = load_dataset(&self.dataset)?;
        let mut table = Table::new("seasonal unicity");
        table
            .meta("dataset_sha256", &dataset.sha256)
            .meta("s", self.estimator.samples)
            .meta("sample_size", self.estimator.sample_size)
            .meta("seed", self.estimator.seed)
            .meta(
                "popularity_window",
                self.popularity_window.map_or("per-period".into(), |w| w.to_string()),
            )
            .meta("rescaled", "unicity / (items / items in period 0)")
            .header(&[
                "strategy", "n_apps", "period", "users", "items", "unicity", "std", "rescaled",
            ]);
        for &strategy in &self.estimator.strategy.0 {
            for &n in &self.n.0 {
                let curve = seasonal_unicity(&tensor, &self.estimator.params(n, strategy), self.popularity_window)?;
                for p in &curve.points {
                    table.row(&[
                        &strategy,
                        &n,
                        &p.period,
                        &p.users,
                        &p.items,
                        &p.unicity,
                        &p.std,
                        &p.rescaled,
                    ]);
                }
            }
        }
        table.write(&self.output)?;
        Ok(Outcome {
            outputs: vec![self.output.clone()],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularitySourceArg {
    Subsample,
    Full,
}

impl From<PopularitySourceArg> for PopularitySource {
    fn from(v: PopularitySourceArg) -> Self {
        match v {
            PopularitySourceArg::Subsample => PopularitySource::Subsample,
            PopularitySourceArg::Full => PopularitySource::FullDataset,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ScalingArgs {
    /// Dataset cache written by `ingest` or `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Periods to attack; all periods by default.
    #[arg(long)]
    pub window: Option<Window>,
    /// Quasi-identifier size.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Subsample sizes, e.g. `10k,50k,100k`.
    #[arg(long, value_parser = size_list)]
    pub sizes: List<usize>,
    /// Realizations per size; 20 up to 500k, 10 below 1M, 5 above by default.
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Count item popularity inside each subsample or over the full dataset.
    #[arg(long, value_enum, default_value = "subsample")]
    pub popularity_source: PopularitySourceArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub estimator: EstimatorArgs,
    /// Report to write.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingReport {
    pub dataset: DatasetInfo,
    pub curves: Vec<ScalingCurve>,
}

impl ScalingArgs {
    fn run(&self) -> Result<Outcome> {
        let (tensor, dataset) = load_dataset(&self.dataset)?;
        let window = self.window.unwrap_or_else(|| tensor.full_window());
        let fps = tensor.window_fingerprints(window)?;
        let schedule = match self.realizations {
            Some(r) => SubsampleSchedule::new(
                self.sizes
                    .0
                    .iter()
                    .map(|&population_size| ScheduleEntry {
                        population_size,
                        realizations: r,
                    })
                    .collect(),
            )?,
            None => SubsampleSchedule::with_default_realizations(&self.sizes.0)?,
        };
        let mut curves = Vec::new();
        for &strategy in &self.estimator.strategy.0 {
            let params = self.estimator.params(self.n, strategy);
            let curve = scaling_curve(&fps, &schedule, &params, self.popularity_source.into())?;
            for p in &curve.points {
                eprintln!(
                    "{strategy:>10} size {:>9} unicity {:.4} ± {:.4}",
                    p.population_size, p.mean, p.std
                );
            }
            curves.push(curve);
        }
        write_json(&self.output, &ScalingReport { dataset, curves })?;
        Ok(Outcome {
            outputs: vec![self.output.clone()],
        })
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct FitArgs {
    /// Report written by `scaling`.
    #[arg(long)]
    pub curve: PathBuf,
    /// Comma-separated forms or `all`.
    #[arg(long, value_parser = forms, default_value = "all")]
    pub forms: List<FitForm>,
    /// Weight points by inverse variance across realizations.
    #[arg(long)]
    pub weighted: bool,
    /// Report to write.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    NonConvergence,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitEntry {
    pub strategy: Strategy,
    pub n_apps: usize,
    pub form: FitForm,
    pub status: FitStatus,
    /// 1 is the best converged form of its curve by pseudo-R².
    pub rank: Option<usize>,
    pub message: Option<String>,
    /// Best-so-far parameters for non-converged fits.
    pub result: Option<FitResult>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub dataset: DatasetInfo,
    pub x_unit: String,
    pub x_scale: f64,
    pub fits: Vec<FitEntry>,
}

impl FitArgs {
    fn run(&self) -> Result<Outcome> {
        let text = std::fs::read_to_string(&self.curve).with_context(|| format!("reading {}", self.curve.display()))?;
        let scaling: ScalingReport =
            serde_json::from_str(&text).with_context(|| format!("{} is not a scaling report", self.curve.display()))?;
        let mut fits = Vec::new();
        let mut hopeless = Vec::new();
        for curve in &scaling.curves {
            let start = fits.len();
            for &form in &self.forms.0 {
                let entry = |status, message, result| FitEntry {
                    strategy: curve.strategy,
                    n_apps: curve.n_apps,
                    form,
                    status,
                    rank: None,
                    message,
                    result,
                };
                fits.push(match fit_scaling(curve, form, self.weighted) {
                    Ok(fit) => entry(FitStatus::Ok, None, Some(fit)),
                    Err(CoreError::NonConvergence { best, residual, .. }) => entry(
                        FitStatus::NonConvergence,
                        Some(format!("no convergence; best residual {residual}")),
                        Some(*best),
                    ),
                    Err(e) => entry(FitStatus::Failed, Some(e.to_string()), None),
                });
            }
            let entries = &mut fits[start..];
            let mut ranked: Vec<usize> = (0..entries.len())
                .filter(|&i| entries[i].status == FitStatus::Ok)
                .collect();
            ranked.sort_by(|&a, &b| {
                let r2 = |i: usize| entries[i].result.as_ref().map_or(f64::NEG_INFINITY, |f| f.pseudo_r2);
                r2(b).total_cmp(&r2(a)).then(entries[a].form.cmp(&entries[b].form))
            });
            for (rank, &i) in ranked.iter().enumerate() {
                entries[i].rank = Some(rank + 1);
            }
            for e in entries.iter() {
                let r2 = e.result.as_ref().map(|f| f.pseudo_r2);
                eprintln!(
                    "{:>10} n={} {:<14} {:?} pseudo-R² {}",
                    e.strategy,
                    e.n_apps,
                    e.form.as_str(),
                    e.status,
                    opt(r2)
                );
            }
            if ranked.is_empty() {
                hopeless.push(format!("{} n={}", curve.strategy, curve.n_apps));
            }
        }
        let report = FitReport {
            dataset: scaling.dataset,
            x_unit: X_UNIT.into(),
            x_scale: USERS_PER_UNIT,
            fits,
        };
        write_json(&self.output, &report)?;
        if !hopeless.is_empty() {
            return Err(NumericalFailure(format!("no form converged for {}", hopeless.join(", "))).into());
        }
        Ok(Outcome {
            outputs: vec![self.output.clone()],
        })
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ExtrapolateArgs {
    /// Report written by `fit`.
    #[arg(long)]
    pub fits: PathBuf,
    /// Population sizes in users, e.g. `3.5M` is written `3500k`.
    #[arg(long, value_parser = size_list)]
    pub population: List<usize>,
    /// Report to write.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtrapolationEntry {
    pub strategy: Strategy,
    pub n_apps: usize,
    pub rank: Option<usize>,
    pub population: usize,
    #[serde(flatten)]
    pub value: Extrapolation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub dataset: DatasetInfo,
    pub x_unit: String,
    pub points: Vec<ExtrapolationEntry>,
}

impl ExtrapolateArgs {
    fn run(&self) -> Result<Outcome> {
        let text = std::fs::read_to_string(&self.fits).with_context(|| format!("reading {}", self.fits.display()))?;
        let report: FitReport =
            serde_json::from_str(&text).with_context(|| format!("{} is not a fit report", self.fits.display()))?;
        let mut points = Vec::new();
        for entry in report.fits.iter().filter(|e| e.status == FitStatus::Ok) {
            let fit = entry.result.as_ref().context("converged fit without parameters")?;
            for &population in &self.population.0 {
                let value = extrapolate(fit, population as f64 / fit.x_scale);
                eprintln!(
                    "{:>10} n={} {:<14} {population:>10} users: {:.4}{}",
                    entry.strategy,
                    entry.n_apps,
                    entry.form.as_str(),
                    value.value,
                    if value.clamped { " (clamped)" } else { "" }
                );
                points.push(ExtrapolationEntry {
                    strategy: entry.strategy,
                    n_apps: entry.n_apps,
                    rank: entry.rank,
                    population,
                    value,
                });
            }
        }
        write_json(
            &self.output,
            &ExtrapolationReport {
                dataset: report.dataset,
                x_unit: report.x_unit,
                points,
            },
        )?;
        Ok(Outcome {
            outputs: vec![self.output.clone()],
        })
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    pub users: usize,
    /// Catalog size.
    #[arg(long, default_value_t = 50_000)]
    pub items: usize,
    #[arg(long, default_value_t = 12)]
    pub periods: u32,
    /// Zipf exponent of item popularity.
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    /// Mean items per user per period.
    #[arg(long, default_value_t = 23.0)]
    pub mean_items: f64,
    /// Target distinct items per user over all periods.
    #[arg(long, default_value_t = 76.0)]
    pub yearly_items: f64,
    /// Fraction of items replaced each period; derived from the yearly
    /// target when omitted.
    #[arg(long)]
    pub churn: Option<f64>,
    /// Users keep at least this many items in every period.
    #[arg(long, default_value_t = 3)]
    pub min_items: usize,
    /// Decimal or 0x-prefixed hex.
    #[arg(long, value_parser = parse::seed, default_value = "0xC0FFEE")]
    pub seed: u64,
    /// Users to plant with a fresh rare item.
    #[arg(long, default_value_t = 0)]
    pub plant: usize,
    /// Users sharing each planted item; 1 makes planted users unique.
    #[arg(long, default_value_t = 1)]
    pub plant_rarity: usize,
    /// Periods receiving planted items; all by default.
    #[arg(long)]
    pub plant_window: Option<Window>,
    /// Dataset cache to write; ground truth goes to `<output>.truth.json`.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also write the events as `user_id,item_id,period_index` lines.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

/// Tag separating the planting stream from the generator streams.
const PLANT_TAG: u64 = 0x0050_4c41_4e54;

impl SynthArgs {
    pub fn config(&self) -> GeneratorConfig {
        GeneratorConfig {
            users: self.users,
            catalog: self.items,
            periods: self.periods,
            alpha: self.alpha,
            mean_items: self.mean_items,
            yearly_items: self.yearly_items,
            churn: self.churn,
            min_items_per_period: self.min_items,
            seed: self.seed,
        }
    }

    fn run(&self) -> Result<Outcome> {
        let config = self.config();
        let mut tensor = generate(&config)?;
        let mut truth = GroundTruth {
            effective_churn: config.effective_churn(),
            config,
            planted_users: Vec::new(),
            planted_items: Vec::new(),
        };
        if self.plant > 0 {
            let options = PlantOptions {
                k: self.plant,
                rarity: self.plant_rarity,
                window: self.plant_window,
                seed: derive_seed(self.seed, &[PLANT_TAG]),
            };
            let planted = plant_unique_users(&tensor, &options)?;
            tensor = planted.tensor;
            truth.planted_users = planted.users;
            truth.planted_items = planted.items;
        }
        let mut bytes = Vec::new();
        save_tensor(&mut bytes, &tensor)?;
        write_bytes(&self.output, &bytes)?;
        let truth_path = sidecar(&self.output, ".truth.json");
        write_json(&truth_path, &truth)?;
        let mut outputs = vec![self.output.clone(), truth_path];
        if let Some(path) = &self.events {
            let mut text = Vec::new();
            write_events(&mut text, &tensor)?;
            write_bytes(path, &text)?;
            outputs.push(path.clone());
        }
        eprintln!(
            "generated {} users, {} items used, {} periods, {} user-item-period records",
            tensor.num_users(),
            tensor.num_items(),
            tensor.num_periods(),
            tensor.nnz()
        );
        Ok(Outcome { outputs })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsTable {
    /// Users and mean/median items per period.
    Usage,
    /// Log-binned histogram of per-item user counts.
    Popularity,
    /// Category shares per period.
    Categories,
    /// Jaccard distance between a user's period fingerprints.
    Drift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingArg {
    Items,
    Pairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftModeArg {
    Consecutive,
    Baseline,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct StatsArgs {
    /// Dataset cache written by `ingest` or `synth`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub table: StatsTable,
    /// Window for the popularity histogram; all periods by default.
    #[arg(long)]
    pub window: Option<Window>,
    /// Histogram bin growth factor.
    #[arg(long, default_value_t = 2.0)]
    pub base: f64,
    /// Smallest user count included in the tail exponent fit.
    #[arg(long, default_value_t = 1)]
    pub min_count: u32,
    /// `item_id,label` lines, for the categories table.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Count distinct items or user-item pairs per category.
    #[arg(long, value_enum, default_value = "items")]
    pub weighting: WeightingArg,
    /// Compare each period with the previous one or with period 0.
    #[arg(long, value_enum, default_value = "consecutive")]
    pub mode: DriftModeArg,
    /// Emit one drift row per user instead of summaries.
    #[arg(long)]
    pub raw: bool,
    /// Table to write.
    #[arg(long, short)]
    pub output: PathBuf,
}

impl StatsArgs {
    fn run(&self) -> Result<Outcome> {
        let (tensor, dataset) = load_dataset(&self.dataset)?;
        let mut table = match self.table {
            StatsTable::Usage => self.usage(&tensor),
            StatsTable::Popularity => self.popularity(&tensor)?,
            StatsTable::Categories => self.categories(&tensor)?,
            StatsTable::Drift => self.drift(&tensor)?,
        };
        table.meta("dataset_sha256", &dataset.sha256);
        table.write(&self.output)?;
        Ok(Outcome {
            outputs: vec![self.output.clone()],
        })
    }

    fn usage(&self, tensor: &FingerprintTensor) -> Table {
        let mut t = Table::new("usage per period");
        t.header(&["period", "users", "mean_items", "median_items"]);
        for s in usage_stats(tensor) {
            t.row(&[&s.period, &s.users, &opt(s.mean_items), &opt(s.median_items)]);
        }
        t
    }

    fn popularity(&self, tensor: &FingerprintTensor) -> Result<Table> {
        let window = self.window.unwrap_or_else(|| tensor.full_window());
        let h = popularity_histogram(tensor, window, self.base)?;
        let mut t = Table::new("item popularity histogram");
        t.meta("window", h.window)
            .meta("base", h.base)
            .meta("items", h.items)
            .meta("max_count", h.max_count)
            .meta("tail_min_count", self.min_count)
            .meta("tail_exponent", opt(h.tail_exponent(self.min_count)))
            .meta("implied_zipf_exponent", opt(h.implied_zipf_exponent(self.min_count)))
            .header(&["lower", "upper", "items", "density"]);
        for b in &h.bins {
            t.row(&[&b.lower, &b.upper, &b.items, &b.density]);
        }
        Ok(t)
    }

    fn categories(&self, tensor: &FingerprintTensor) -> Result<Table> {
        let path = self
            .categories
            .as_ref()
            .context("--categories is required for the categories table")?;
        let labels = read_categories(open(path)?)?;
        let weighting = match self.weighting {
            WeightingArg::Items => CategoryWeighting::Items,
            WeightingArg::Pairs => CategoryWeighting::UserItemPairs,
        };
        let mut t = Table::new("category shares per period");
        t.meta("weighting", format!("{weighting:?}").to_lowercase())
            .header(&["period", "total", "category", "fraction"]);
        for p in category_fractions(tensor, &labels, weighting) {
            for (label, fraction) in &p.fractions {
                t.row(&[&p.period, &p.total, &csv_field(label), fraction]);
            }
        }
        Ok(t)
    }

    fn drift(&self, tensor: &FingerprintTensor) -> Result<Table> {
        let mode = match self.mode {
            DriftModeArg::Consecutive => DriftMode::Consecutive,
            DriftModeArg::Baseline => DriftMode::FromBaseline,
        };
        let series = jaccard_drift(tensor, mode, self.raw)?;
        let mut t = Table::new("jaccard distance between period fingerprints");
        t.meta(
            "mode",
            self.mode
                .to_possible_value()
                .map(|v| v.get_name().to_owned())
                .unwrap_or_default(),
        );
        if self.raw {
            t.header(&["period", "compared_to", "distance"]);
            for p in &series.points {
                for d in p.distances.iter().flatten() {
                    t.row(&[&p.period, &p.compared_to, d]);
                }
            }
        } else {
            t.header(&[
                "period",
                "compared_to",
                "users",
                "mean",
                "min",
                "q1",
                "median",
                "q3",
                "max",
            ]);
            for p in &series.points {
                let s = p.summary.as_ref();
                let f = |g: fn(&unicity_core::temporal::DistanceSummary) -> f64| opt(s.map(g));
                t.row(&[
                    &p.period,
                    &p.compared_to,
                    &p.users,
                    &f(|s| s.mean),
                    &f(|s| s.min),
                    &f(|s| s.q1),
                    &f(|s| s.median),
                    &f(|s| s.q3),
                    &f(|s| s.max),
                ]);
            }
        }
        Ok(t)
    }
}

/// Quotes a label containing a delimiter or quote.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
