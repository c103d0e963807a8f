//! Dataset and configuration loading, end-to-end orchestration, and the
//! report and plot-data files.
//!
//! Input CSV: a header row with a `period` column (`YYYYQn` labels or
//! integers), an `outcome` column, and covariate columns. Every other column
//! must be named in `ignore`; when `covariates` is given explicitly, the
//! remaining columns must be named in `ignore` too.
//!
//! Output directory contents:
//! `summary.json`, `report.txt`, `table_effects.csv`, `table_probabilities.csv`,
//! `panel_original.csv`, `panel_pointwise.csv`, `panel_cumulative.csv`,
//! `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::impact::{effect_draws, predict_counterfactual, summarize_impact, EffectDraws, EffectSummary, Interval};
use crate::oracle::ScenarioSpec;
use crate::sampler::{diagnostics, run_gibbs, stream_rng, MoveAudit, ParameterDiagnostic, PosteriorDraws, Priors};
use crate::scalar::Real;
use crate::series::{
    AnalysisConfig, CovariateSet, InterventionSpec, McmcSettings, OutcomeSeries, PeriodIndex, PeriodLabel,
    ValidatedDataset,
};

/// Stream reserved for counterfactual noise; chains use streams `0..chains`.
const PREDICTION_STREAM: u64 = 1 << 32;

/// Intervention period given either as an integer or as a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeriodRef {
    Integer(i64),
    Label(String),
}

/// Analysis configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub intervention: PeriodRef,
    #[serde(default = "one")]
    pub seasons: usize,
    #[serde(default = "default_level")]
    pub credible_level: f64,
    /// Row label in the effect tables.
    #[serde(default = "default_label")]
    pub label: String,
    /// Decimals shown in the effect table; counts are shown whole by default.
    #[serde(default)]
    pub decimals: usize,
    /// Explicit covariate columns; all non-ignored columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    #[serde(default)]
    pub ignore: Vec<String>,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub priors: Priors<f64>,
}

fn one() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

fn default_label() -> String {
    "outcome".into()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn analysis_config(&self) -> AnalysisConfig<f64> {
        AnalysisConfig {
            seasons: self.seasons,
            credible_level: self.credible_level,
            mcmc: self.mcmc,
            priors: self.priors,
        }
    }

    pub fn schema(&self) -> SchemaOptions {
        SchemaOptions {
            intervention: self.intervention.clone(),
            covariates: self.covariates.clone(),
            ignore: self.ignore.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaOptions {
    pub intervention: PeriodRef,
    pub covariates: Option<Vec<String>>,
    pub ignore: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub outcome: OutcomeSeries<f64>,
    pub covariates: Option<CovariateSet<f64>>,
    pub intervention: InterventionSpec,
}

pub fn load_dataset(path: &Path, schema: &SchemaOptions) -> Result<LoadedData> {
    let file = fs::File::open(path)?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(input: R, schema: &SchemaOptions) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let period_col = find("period").ok_or_else(|| Error::Dataset("missing `period` column".into()))?;
    let outcome_col = find("outcome").ok_or_else(|| Error::Dataset("missing `outcome` column".into()))?;

    for name in &schema.ignore {
        if find(name).is_none() {
            return Err(Error::Dataset(format!("ignored column `{name}` not present")));
        }
    }
    let others: Vec<&String> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != period_col && *i != outcome_col && !schema.ignore.contains(h))
        .map(|(_, h)| h)
        .collect();
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(listed) => {
            for name in listed {
                if find(name).is_none() {
                    return Err(Error::Dataset(format!("covariate column `{name}` not present")));
                }
            }
            if let Some(extra) = others.iter().find(|h| !listed.contains(h)) {
                return Err(Error::Dataset(format!(
                    "column `{extra}` is neither a listed covariate nor ignored"
                )));
            }
            listed.clone()
        }
        None => others.into_iter().cloned().collect(),
    };
    let covariate_cols: Vec<usize> = covariate_names.iter().map(|n| find(n).expect("checked")).collect();

    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut cov_rows: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let cell = |col: usize, name: &str| -> Result<&str> {
            match record.get(col) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Dataset(format!("missing `{name}` value on line {line}"))),
            }
        };
        let number = |col: usize, name: &str| -> Result<f64> {
            let s = cell(col, name)?;
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse(format!("`{s}` in column `{name}` on line {line} is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Dataset(format!("non-finite `{name}` value on line {line}")))
            }
        };
        let label: PeriodLabel = cell(period_col, "period")?
            .parse()
            .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        labels.push(label);
        values.push(number(outcome_col, "outcome")?);
        cov_rows.push(
            covariate_cols
                .iter()
                .zip(&covariate_names)
                .map(|(&c, n)| number(c, n))
                .collect::<Result<_>>()?,
        );
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(**l)) {
        return Err(Error::Dataset(format!("duplicate period {dup}")));
    }
    let index: Vec<PeriodIndex> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| PeriodIndex {
            ordinal: i + 1,
            label: Some(l),
        })
        .collect();
    let outcome = OutcomeSeries::new(values, index)?;
    let t_star = resolve_intervention(&outcome, &schema.intervention)?;
    let covariates = if covariate_names.is_empty() {
        None
    } else {
        let p = covariate_names.len();
        let m = DMatrix::from_fn(cov_rows.len(), p, |i, j| cov_rows[i][j]);
        Some(CovariateSet::new(m, covariate_names)?)
    };
    Ok(LoadedData {
        outcome,
        covariates,
        intervention: InterventionSpec { t_star },
    })
}

fn resolve_intervention(outcome: &OutcomeSeries<f64>, at: &PeriodRef) -> Result<usize> {
    let label = match at {
        PeriodRef::Integer(i) => PeriodLabel::Integer(*i),
        PeriodRef::Label(s) => s.parse()?,
    };
    if let Some(pos) = outcome.position_of(label) {
        return Ok(pos);
    }
    // integers against quarterly data are ordinals
    let quarterly = matches!(outcome.index.first().and_then(|p| p.label), Some(PeriodLabel::Quarter(_)));
    match label {
        PeriodLabel::Integer(i) if quarterly && i >= 1 && (i as usize) <= outcome.len() => Ok(i as usize),
        _ => Err(Error::Dataset(format!("intervention period {label} not in the series index"))),
    }
}

/// Result of one end-to-end analysis.
#[derive(Debug, Clone)]
pub struct Analysis<T: Real> {
    pub summary: EffectSummary,
    pub draws: PosteriorDraws<T>,
    pub effects: EffectDraws<T>,
    pub diagnostics: Vec<ParameterDiagnostic>,
}

/// Gibbs sampling, counterfactual prediction and summaries for one dataset.
pub fn run_analysis<T: Real>(dataset: &ValidatedDataset<T>) -> Result<Analysis<T>> {
    let draws = run_gibbs(dataset).map_err(|e| e.in_stage("sampling"))?;
    let mut rng = stream_rng(dataset.config.mcmc.seed, PREDICTION_STREAM);
    let counterfactual = predict_counterfactual(&draws, dataset, &mut rng).map_err(|e| e.in_stage("prediction"))?;
    let effects = effect_draws(&dataset.outcome, dataset.spec, counterfactual);
    let summary = summarize_impact(dataset, &effects, dataset.config.alpha().as_f64());
    let diagnostics = diagnostics(&draws);
    Ok(Analysis {
        summary,
        draws,
        effects,
        diagnostics,
    })
}

/// Provenance of a run. The timestamp is `SOURCE_DATE_EPOCH` when set and
/// otherwise the data file's modification time, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub data_path: String,
    pub config_path: Option<String>,
    pub data_digest: String,
    pub config_digest: String,
    pub seed: u64,
    pub version: String,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(data_path: &Path, config_path: Option<&Path>, config: &RunConfig) -> Result<Self> {
        let bytes = fs::read(data_path)?;
        let timestamp = match std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
            Some(t) => t,
            None => fs::metadata(data_path)?
                .modified()?
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        Ok(RunManifest {
            data_path: data_path.display().to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            data_digest: hex::encode(Sha256::digest(&bytes)),
            config_digest: config.digest(),
            seed: config.mcmc.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        })
    }
}

/// `-113,070`: rounded to `decimals` places with thousands separators.
pub fn format_count(x: f64, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, x.abs());
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s.as_str(), None),
    };
    let mut grouped = String::with_capacity(int.len() + int.len() / 3);
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    if let Some(f) = frac {
        grouped.push('.');
        grouped.push_str(f);
    }
    let is_zero = s.chars().all(|c| c == '0' || c == '.');
    if x < 0.0 && !is_zero {
        format!("-{grouped}")
    } else {
        grouped
    }
}

/// `mean (lo to hi)`.
pub fn format_estimate(interval: &Interval, decimals: usize) -> String {
    format!(
        "{} ({} to {})",
        format_count(interval.mean, decimals),
        format_count(interval.lower, decimals),
        format_count(interval.upper, decimals)
    )
}

/// Percentage with one decimal; saturates at `>99.9%`.
pub fn format_probability(p: f64) -> String {
    if p > 0.999 {
        ">99.9%".into()
    } else {
        format!("{:.1}%", p * 100.0)
    }
}

#[derive(Debug, Clone, Serialize)]
struct SummaryFile<'a> {
    label: &'a str,
    cumulative_effect: String,
    posterior_probability: String,
    credible_level: f64,
    significant: bool,
    summary: &'a EffectSummary,
    diagnostics: &'a [ParameterDiagnostic],
    moves: MoveAudit,
}

/// Report inputs beyond the summary itself.
#[derive(Debug, Clone)]
pub struct ReportContext<'a> {
    pub label: &'a str,
    pub decimals: usize,
    pub diagnostics: &'a [ParameterDiagnostic],
    pub moves: MoveAudit,
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.json`, `report.txt`, both tables and `manifest.json`.
pub fn emit_report(
    summary: &EffectSummary,
    context: &ReportContext<'_>,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let total = summary.total_effect();
    let estimate = format_estimate(total, context.decimals);
    let probability = format_probability(summary.tail_probability);
    let pct = format!("{}%", format_level(summary.credible_level));

    let summary_path = out_dir.join("summary.json");
    let file = SummaryFile {
        label: context.label,
        cumulative_effect: estimate.clone(),
        posterior_probability: probability.clone(),
        credible_level: summary.credible_level,
        significant: summary.significant,
        summary,
        diagnostics: context.diagnostics,
        moves: context.moves,
    };
    fs::write(&summary_path, serde_json::to_string_pretty(&file)? + "\n")?;

    let effects_path = out_dir.join("table_effects.csv");
    write_csv(
        &effects_path,
        &[
            "outcome",
            &format!("cumulative effect, mean ({pct} credible interval)"),
            "mean",
            "lower",
            "upper",
        ],
        [vec![
            context.label.to_string(),
            estimate.clone(),
            total.mean.to_string(),
            total.lower.to_string(),
            total.upper.to_string(),
        ]],
    )?;

    let prob_path = out_dir.join("table_probabilities.csv");
    write_csv(
        &prob_path,
        &["outcome", "posterior probability of a causal effect", "probability", "direction"],
        [vec![
            context.label.to_string(),
            probability.clone(),
            summary.tail_probability.to_string(),
            direction(total.mean).to_string(),
        ]],
    )?;

    let report_path = out_dir.join("report.txt");
    let mut text = String::new();
    text.push_str(&format!("outcome: {}\n", context.label));
    text.push_str(&format!(
        "intervention: {} (period {} of {})\n",
        summary.periods[summary.t_star - 1],
        summary.t_star,
        summary.periods.len()
    ));
    text.push_str(&format!("post-intervention periods: {}\n", summary.k_max()));
    text.push_str(&format!("posterior draws: {}\n", summary.draws));
    text.push_str(&format!("cumulative effect: {estimate}\n"));
    text.push_str(&format!("posterior probability of a causal effect: {probability}\n"));
    text.push_str(&format!(
        "statistically significant at {pct}: {}\n",
        if summary.significant { "yes" } else { "no" }
    ));
    text.push_str("\nperiod  pointwise effect\n");
    for (k, iv) in summary.pointwise_post().iter().enumerate() {
        let period = &summary.periods[summary.t_star - 1 + k];
        text.push_str(&format!("{period}  {}\n", format_estimate(iv, context.decimals)));
    }
    text.push_str("\nparameter  mean  ess  split-rhat\n");
    for d in context.diagnostics {
        text.push_str(&format!(
            "{}  {:.6e}  {:.1}  {:.3}\n",
            d.name, d.mean, d.effective_sample_size, d.split_rhat
        ));
    }
    fs::write(&report_path, text)?;

    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(manifest)? + "\n")?;

    Ok(vec![summary_path, report_path, effects_path, prob_path, manifest_path])
}

fn direction(mean: f64) -> &'static str {
    if mean > 0.0 {
        "increase"
    } else if mean < 0.0 {
        "decrease"
    } else {
        "none"
    }
}

fn format_level(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round())
    } else {
        format!("{pct}")
    }
}

/// Writes the three panel files: observed vs counterfactual, pointwise
/// effects (pre-period rows are the fit check), and cumulative effects
/// (zero before the intervention).
pub fn emit_plot_data(summary: &EffectSummary, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let n = summary.periods.len();
    let pre = summary.t_star - 1;
    let f = |v: f64| v.to_string();

    let original = out_dir.join("panel_original.csv");
    write_csv(
        &original,
        &["period", "observed", "counterfactual_mean", "counterfactual_lower", "counterfactual_upper"],
        (0..n).map(|t| {
            let c = summary.counterfactual[t];
            vec![summary.periods[t].clone(), f(summary.observed[t]), f(c.mean), f(c.lower), f(c.upper)]
        }),
    )?;

    let pointwise = out_dir.join("panel_pointwise.csv");
    write_csv(
        &pointwise,
        &["period", "post_intervention", "effect_mean", "effect_lower", "effect_upper"],
        (0..n).map(|t| {
            let c = summary.pointwise[t];
            vec![
                summary.periods[t].clone(),
                u8::from(t >= pre).to_string(),
                f(c.mean),
                f(c.lower),
                f(c.upper),
            ]
        }),
    )?;

    let cumulative = out_dir.join("panel_cumulative.csv");
    write_csv(
        &cumulative,
        &["period", "post_intervention", "cumulative_mean", "cumulative_lower", "cumulative_upper"],
        (0..n).map(|t| {
            let c = if t < pre {
                Interval {
                    mean: 0.0,
                    lower: 0.0,
                    upper: 0.0,
                }
            } else {
                summary.cumulative[t - pre]
            };
            vec![
                summary.periods[t].clone(),
                u8::from(t >= pre).to_string(),
                f(c.mean),
                f(c.lower),
                f(c.upper),
            ]
        }),
    )?;
    Ok(vec![original, pointwise, cumulative])
}

/// Writes a dataset in the input CSV layout.
pub fn write_dataset(path: &Path, outcome: &OutcomeSeries<f64>, covariates: Option<&CovariateSet<f64>>) -> Result<()> {
    let mut header = vec!["period".to_string(), "outcome".to_string()];
    if let Some(c) = covariates {
        header.extend(c.names.iter().cloned());
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header_refs,
        (0..outcome.len()).map(|t| {
            let mut row = vec![outcome.index[t].to_string(), outcome.values[t].to_string()];
            if let Some(c) = covariates {
                row.extend(c.values.row(t).iter().map(|v| v.to_string()));
            }
            row
        }),
    )
}

/// Files written by [`run_files`] and the analysis behind them.
#[derive(Debug)]
pub struct RunOutput {
    pub analysis: Analysis<f64>,
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
}

/// Loads data and configuration, runs the analysis, and writes every report
/// and panel file into `out_dir`. A `seed` overrides the configured one.
pub fn run_files(data_path: &Path, config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<RunOutput> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.mcmc.seed = seed;
    }
    let loaded = load_dataset(data_path, &config.schema())?;
    let dataset = crate::series::validate_dataset(
        loaded.outcome,
        loaded.covariates,
        loaded.intervention,
        config.analysis_config(),
    )?;
    let analysis = run_analysis(&dataset)?;
    let manifest = RunManifest::new(data_path, Some(config_path), &config)?;
    let context = ReportContext {
        label: &config.label,
        decimals: config.decimals,
        diagnostics: &analysis.diagnostics,
        moves: analysis.draws.audit,
    };
    let mut files = emit_report(&analysis.summary, &context, &manifest, out_dir)?;
    files.extend(emit_plot_data(&analysis.summary, out_dir)?);
    Ok(RunOutput {
        analysis,
        manifest,
        files,
    })
}

/// Writes replication `replication` of a scenario as `data.csv`, its
/// ground truth as `truth.csv`, and a matching `analysis.toml`.
pub fn simulate_files(coverage: &CoverageConfig, replication: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = &coverage.scenario;
    let mut rng = stream_rng(spec.seed, replication);
    let data = crate::oracle::generate_synthetic(spec, &mut rng)?;
    fs::create_dir_all(out_dir)?;

    let data_path = out_dir.join("data.csv");
    write_dataset(&data_path, &data.outcome, data.covariates.as_ref())?;

    let truth_path = out_dir.join("truth.csv");
    let start = spec.t_star - 1;
    write_csv(
        &truth_path,
        &["period", "untreated", "effect", "cumulative_effect"],
        (0..spec.periods).map(|t| {
            let (d, c) = if t >= start {
                (data.true_pointwise[t - start], data.true_cumulative[t - start])
            } else {
                (0.0, 0.0)
            };
            vec![
                data.outcome.index[t].to_string(),
                data.untreated[t].to_string(),
                d.to_string(),
                c.to_string(),
            ]
        }),
    )?;

    let config_path = out_dir.join("analysis.toml");
    let label = data.outcome.index[start].label.map(|l| l.to_string());
    let run = RunConfig {
        intervention: match label {
            Some(l) => PeriodRef::Label(l),
            None => PeriodRef::Integer(spec.t_star as i64),
        },
        seasons: spec.seasons,
        credible_level: coverage.credible_level,
        label: "outcome".into(),
        decimals: 0,
        covariates: None,
        ignore: Vec::new(),
        mcmc: coverage.mcmc,
        priors: coverage.priors,
    };
    fs::write(&config_path, run.to_toml()?)?;
    Ok(vec![data_path, truth_path, config_path])
}

/// Coverage experiment file: a scenario plus the analysis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    #[serde(default)]
    pub scenario: ScenarioSpec<f64>,
    #[serde(default = "default_level")]
    pub credible_level: f64,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub priors: Priors<f64>,
}

impl CoverageConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn analysis_config(&self) -> AnalysisConfig<f64> {
        AnalysisConfig {
            seasons: self.scenario.seasons,
            credible_level: self.credible_level,
            mcmc: self.mcmc,
            priors: self.priors,
        }
    }
}

/// Coverage table: one summary row followed by one row per replication.
pub fn write_coverage(path: &Path, report: &crate::oracle::CoverageReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "replications",
        "credible_level",
        "true_cumulative",
        "coverage",
        "mean_estimate",
        "mean_bias",
        "relative_bias",
        "significance_rate",
        "mean_interval_width",
    ])?;
    w.write_record([
        report.replications.to_string(),
        report.credible_level.to_string(),
        report.true_cumulative.to_string(),
        report.coverage.to_string(),
        report.mean_estimate.to_string(),
        report.mean_bias.to_string(),
        report.relative_bias.to_string(),
        report.significance_rate.to_string(),
        report.mean_interval_width.to_string(),
    ])?;
    w.flush()?;
    drop(w);

    let rows_path = path.with_extension("replications.csv");
    let mut w = csv::Writer::from_path(rows_path)?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
