//! The treated outcome series, its covariates and the intervention time.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Priors;
use crate::scalar::Real;

/// Shortest series accepted, and shortest pre-period.
pub const MIN_PRE_PERIODS: usize = 8;

/// Fewest kept posterior draws a configuration may request.
pub const MIN_KEPT_DRAWS: usize = 100;

/// Calendar quarter, e.g. `2010Q2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Parse(format!("quarter {quarter} outside 1..=4")));
        }
        Ok(Quarter { year, quarter })
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Quarter {
                year: self.year + 1,
                quarter: 1,
            }
        } else {
            Quarter {
                year: self.year,
                quarter: self.quarter + 1,
            }
        }
    }

    /// Quarters elapsed since year 0, Q1.
    fn serial(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.quarter) - 1
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (year, q) = s
            .split_once(['Q', 'q'])
            .ok_or_else(|| Error::Parse(format!("`{s}` is not a YYYYQn label")))?;
        let year: i32 = year
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad year in `{s}`")))?;
        let quarter: u8 = q
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad quarter in `{s}`")))?;
        Quarter::new(year, quarter)
    }
}

/// External name of a period: a calendar quarter or a plain integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeriodLabel {
    Quarter(Quarter),
    Integer(i64),
}

impl PeriodLabel {
    /// Whether `next` immediately follows `self`.
    pub fn precedes(self, next: PeriodLabel) -> bool {
        match (self, next) {
            (PeriodLabel::Quarter(a), PeriodLabel::Quarter(b)) => b.serial() == a.serial() + 1,
            (PeriodLabel::Integer(a), PeriodLabel::Integer(b)) => b == a + 1,
            _ => false,
        }
    }
}

impl fmt::Display for PeriodLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodLabel::Quarter(q) => q.fmt(f),
            PeriodLabel::Integer(i) => i.fmt(f),
        }
    }
}

impl FromStr for PeriodLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<i64>() {
            return Ok(PeriodLabel::Integer(i));
        }
        s.parse::<Quarter>().map(PeriodLabel::Quarter).map_err(|_| {
            Error::Parse(format!("`{s}` is neither a YYYYQn label nor an integer period"))
        })
    }
}

/// Position of a period within the series (1-based), with an optional
/// external label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodIndex {
    pub ordinal: usize,
    pub label: Option<PeriodLabel>,
}

impl fmt::Display for PeriodIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            Some(l) => l.fmt(f),
            None => self.ordinal.fmt(f),
        }
    }
}

/// Builds `len` ordinals `1..=len` without calendar labels.
pub fn ordinal_index(len: usize) -> Vec<PeriodIndex> {
    (1..=len)
        .map(|ordinal| PeriodIndex {
            ordinal,
            label: None,
        })
        .collect()
}

/// Builds `len` contiguous quarters starting at `start`.
pub fn quarterly_index(start: Quarter, len: usize) -> Vec<PeriodIndex> {
    let mut q = start;
    let mut out = Vec::with_capacity(len);
    for ordinal in 1..=len {
        out.push(PeriodIndex {
            ordinal,
            label: Some(PeriodLabel::Quarter(q)),
        });
        q = q.next();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSeries<T> {
    pub values: Vec<T>,
    pub index: Vec<PeriodIndex>,
}

impl<T: Real> OutcomeSeries<T> {
    pub fn new(values: Vec<T>, index: Vec<PeriodIndex>) -> Result<Self> {
        let s = OutcomeSeries { values, index };
        s.check()?;
        Ok(s)
    }

    /// Series indexed by plain ordinals.
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        let index = ordinal_index(values.len());
        Self::new(values, index)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Ordinal of the period carrying `label`, if any.
    pub fn position_of(&self, label: PeriodLabel) -> Option<usize> {
        self.index
            .iter()
            .find(|p| p.label == Some(label))
            .map(|p| p.ordinal)
    }

    fn check(&self) -> Result<()> {
        if self.values.len() != self.index.len() {
            return Err(Error::Dataset(format!(
                "length mismatch: {} values but {} periods",
                self.values.len(),
                self.index.len()
            )));
        }
        if self.values.len() < MIN_PRE_PERIODS {
            return Err(Error::Dataset(format!(
                "series has {} periods, need at least {MIN_PRE_PERIODS}",
                self.values.len()
            )));
        }
        if let Some(t) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!("missing or non-finite outcome at period {}", t + 1)));
        }
        for (pos, w) in self.index.windows(2).enumerate() {
            if w[1].ordinal <= w[0].ordinal {
                return Err(Error::Dataset(format!(
                    "period ordinals not strictly increasing at row {}",
                    pos + 2
                )));
            }
            match (w[0].label, w[1].label) {
                (Some(a), Some(b)) if !a.precedes(b) => {
                    return Err(Error::Dataset(format!("non-contiguous periods: {a} followed by {b}")));
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(Error::Dataset("mixed labelled and unlabelled periods".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Covariate series, one column per covariate, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSet<T: Real> {
    pub values: DMatrix<T>,
    pub names: Vec<String>,
}

impl<T: Real> CovariateSet<T> {
    pub fn new(values: DMatrix<T>, names: Vec<String>) -> Result<Self> {
        if values.ncols() != names.len() {
            return Err(Error::Dataset(format!(
                "{} covariate columns but {} names",
                values.ncols(),
                names.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("missing or non-finite covariate entry".into()));
        }
        Ok(CovariateSet { values, names })
    }

    pub fn count(&self) -> usize {
        self.values.ncols()
    }
}

/// First treated period, as a 1-based ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub t_star: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            burn_in: 1000,
            draws: 4000,
            thin: 1,
            chains: 1,
            seed: 20100401,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig<T: Real> {
    /// Number of seasons; 1 disables the seasonal block.
    pub seasons: usize,
    /// Central credible level, `1 - alpha`.
    pub credible_level: T,
    pub mcmc: McmcSettings,
    pub priors: Priors<T>,
}

impl<T: Real> Default for AnalysisConfig<T> {
    fn default() -> Self {
        AnalysisConfig {
            seasons: 1,
            credible_level: T::of(0.95),
            mcmc: McmcSettings::default(),
            priors: Priors::default(),
        }
    }
}

impl<T: Real> AnalysisConfig<T> {
    pub fn alpha(&self) -> T {
        T::one() - self.credible_level
    }

    pub fn validate(&self) -> Result<()> {
        if self.seasons == 0 {
            return Err(Error::Config("seasons must be at least 1".into()));
        }
        let level = self.credible_level;
        if !(level > T::zero() && level < T::one()) {
            return Err(Error::Config(format!("credible level {level} outside (0, 1)")));
        }
        if self.mcmc.draws < MIN_KEPT_DRAWS {
            return Err(Error::Config(format!(
                "{} kept draws requested, need at least {MIN_KEPT_DRAWS}",
                self.mcmc.draws
            )));
        }
        if self.mcmc.thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.mcmc.chains == 0 {
            return Err(Error::Config("chain count must be at least 1".into()));
        }
        self.priors.validate()
    }

    /// Shortest admissible pre-period for this seasonality.
    pub fn min_pre_periods(&self) -> usize {
        MIN_PRE_PERIODS.max(3 * self.seasons)
    }
}

/// Location/scale pair used to standardize a column on the pre-period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization<T> {
    pub mean: T,
    pub sd: T,
}

impl<T: Real> Standardization<T> {
    /// Mean and sample standard deviation of `values`. A zero spread falls
    /// back to unit scale so that constant series remain usable.
    pub fn fit(values: &[T]) -> Self {
        let n = T::of(values.len() as f64);
        let mean = values.iter().fold(T::zero(), |a, &v| a + v) / n;
        let ss = values
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
        let sd = if values.len() > 1 {
            (ss / (n - T::one())).sqrt()
        } else {
            T::zero()
        };
        Standardization {
            mean,
            sd: if sd > T::zero() { sd } else { T::one() },
        }
    }

    pub fn apply(&self, v: T) -> T {
        (v - self.mean) / self.sd
    }

    pub fn invert(&self, z: T) -> T {
        z * self.sd + self.mean
    }

    /// Back-transform for differences and sums of differences, which carry
    /// no location.
    pub fn invert_scale(&self, z: T) -> T {
        z * self.sd
    }
}

/// A dataset whose invariants have all been checked, with standardized
/// copies of the outcome and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset<T: Real> {
    pub outcome: OutcomeSeries<T>,
    pub covariates: Option<CovariateSet<T>>,
    pub spec: InterventionSpec,
    pub config: AnalysisConfig<T>,
    pub outcome_scale: Standardization<T>,
    pub covariate_scales: Vec<Standardization<T>>,
    /// Outcome standardized with pre-period statistics.
    pub y: DVector<T>,
    /// Covariates standardized with pre-period statistics (T x p, p may be 0).
    pub x: DMatrix<T>,
}

pub fn validate_dataset<T: Real>(
    outcome: OutcomeSeries<T>,
    covariates: Option<CovariateSet<T>>,
    spec: InterventionSpec,
    config: AnalysisConfig<T>,
) -> Result<ValidatedDataset<T>> {
    outcome.check()?;
    config.validate()?;
    let n = outcome.len();
    if spec.t_star < 2 || spec.t_star > n {
        return Err(Error::Dataset(format!(
            "intervention period {} outside 2..={n}",
            spec.t_star
        )));
    }
    let pre = spec.t_star - 1;
    let needed = config.min_pre_periods();
    if pre < MIN_PRE_PERIODS {
        return Err(Error::Dataset(format!("pre-period has {pre} periods, need at least {MIN_PRE_PERIODS}")));
    }
    if pre < needed {
        return Err(Error::Config(format!(
            "pre-period has {pre} periods, need at least {needed} (seasons = {})",
            config.seasons
        )));
    }

    let outcome_scale = Standardization::fit(&outcome.values[..pre]);
    let y = DVector::from_iterator(n, outcome.values.iter().map(|&v| outcome_scale.apply(v)));

    let (x, covariate_scales) = match &covariates {
        None => (DMatrix::zeros(n, 0), Vec::new()),
        Some(cov) => {
            if cov.values.nrows() != n {
                return Err(Error::Dataset(format!(
                    "length mismatch: {} covariate rows but {n} outcome periods",
                    cov.values.nrows()
                )));
            }
            if cov.names.len() != cov.values.ncols() {
                return Err(Error::Dataset("covariate names do not match columns".into()));
            }
            let mut x = cov.values.clone();
            let mut scales = Vec::with_capacity(cov.count());
            for (j, name) in cov.names.iter().enumerate() {
                let pre_col: Vec<T> = cov.values.column(j).rows(0, pre).iter().copied().collect();
                let first = pre_col[0];
                if pre_col.iter().all(|&v| v == first) {
                    return Err(Error::ConstantCovariate(name.clone()));
                }
                let sc = Standardization::fit(&pre_col);
                x.column_mut(j).apply(|v| *v = sc.apply(*v));
                scales.push(sc);
            }
            (x, scales)
        }
    };

    Ok(ValidatedDataset {
        outcome,
        covariates,
        spec,
        config,
        outcome_scale,
        covariate_scales,
        y,
        x,
    })
}

impl<T: Real> ValidatedDataset<T> {
    /// Runs validation again from the raw parts.
    pub fn revalidate(&self) -> Result<Self> {
        validate_dataset(
            self.outcome.clone(),
            self.covariates.clone(),
            self.spec,
            self.config.clone(),
        )
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn covariate_count(&self) -> usize {
        self.x.ncols()
    }

    pub fn pre_len(&self) -> usize {
        self.spec.t_star - 1
    }

    pub fn post_len(&self) -> usize {
        self.len() - self.pre_len()
    }

    /// Copy of this dataset with a different configuration.
    pub fn with_config(&self, config: AnalysisConfig<T>) -> Result<Self> {
        validate_dataset(self.outcome.clone(), self.covariates.clone(), self.spec, config)
    }
}

/// Pre- and post-intervention periods as 1-based inclusive ordinal ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodSplit {
    pub pre: RangeInclusive<usize>,
    pub post: RangeInclusive<usize>,
}

impl PeriodSplit {
    pub fn pre_len(&self) -> usize {
        self.pre.clone().count()
    }

    /// Number of post-intervention periods, `K_max`.
    pub fn post_len(&self) -> usize {
        self.post.clone().count()
    }
}

pub fn split_periods<T: Real>(dataset: &ValidatedDataset<T>) -> PeriodSplit {
    split_at(dataset.len(), dataset.spec)
}

pub(crate) fn split_at(len: usize, spec: InterventionSpec) -> PeriodSplit {
    PeriodSplit {
        pre: 1..=spec.t_star - 1,
        post: spec.t_star..=len,
    }
}
