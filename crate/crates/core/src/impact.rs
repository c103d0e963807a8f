//! Counterfactual prediction and the causal estimands.
//!
//! For each posterior draw the untreated outcome path is predicted as
//! `Z s_t + x_t' beta + eps*` with fresh observation noise, then mapped back
//! to the original scale. The pointwise effect at the k-th post period is the
//! observed outcome minus that prediction; the cumulative effect is the
//! running sum of pointwise effects.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::PosteriorDraws;
use crate::scalar::Real;
use crate::series::{InterventionSpec, OutcomeSeries, ValidatedDataset};
use crate::state_space::StateLayout;

/// Posterior-predictive draws of the untreated outcome, one row per draw and
/// one column per period, on the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualDraws<T: Real> {
    pub values: DMatrix<T>,
}

impl<T: Real> CounterfactualDraws<T> {
    pub fn draws(&self) -> usize {
        self.values.nrows()
    }

    pub fn periods(&self) -> usize {
        self.values.ncols()
    }
}

pub fn predict_counterfactual<T: Real, R: Rng + ?Sized>(
    draws: &PosteriorDraws<T>,
    dataset: &ValidatedDataset<T>,
    rng: &mut R,
) -> Result<CounterfactualDraws<T>> {
    let n = dataset.len();
    let p = dataset.covariate_count();
    let scale = dataset.outcome_scale;
    let layout = StateLayout::new(dataset.config.seasons);
    let mut values = DMatrix::zeros(draws.len(), n);
    for (d, draw) in draws.draws.iter().enumerate() {
        if draw.states.ncols() != n || draw.states.nrows() != layout.dim || draw.beta.len() != p {
            return Err(Error::Model(format!(
                "draw {d} does not match the dataset dimensions"
            )));
        }
        let sd = draw.variances.observation.sqrt();
        for t in 0..n {
            let s = draw.states.column(t);
            let mut signal = s[StateLayout::LEVEL];
            if layout.has_seasonal() {
                signal += s[layout.seasonal().start];
            }
            if p > 0 {
                signal += dataset.x.row(t).transpose().dot(&draw.beta);
            }
            let eps = T::of(rng.sample::<f64, _>(StandardNormal)) * sd;
            values[(d, t)] = scale.invert(signal + eps);
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("non-finite counterfactual prediction".into()));
    }
    Ok(CounterfactualDraws { values })
}

/// Observed minus counterfactual for every draw and every period, pre-period
/// included (the pre-period columns are the fit check).
pub fn contrast_draws<T: Real>(observed: &OutcomeSeries<T>, cf: &CounterfactualDraws<T>) -> DMatrix<T> {
    assert_eq!(observed.len(), cf.periods(), "observed and counterfactual periods differ");
    DMatrix::from_fn(cf.draws(), cf.periods(), |d, t| observed.values[t] - cf.values[(d, t)])
}

/// Draws of the pointwise effects for `k = 1..=K_max` (columns).
pub fn pointwise_effects<T: Real>(
    observed: &OutcomeSeries<T>,
    cf: &CounterfactualDraws<T>,
    spec: InterventionSpec,
) -> DMatrix<T> {
    let start = spec.t_star - 1;
    let k_max = observed.len() - start;
    DMatrix::from_fn(cf.draws(), k_max, |d, k| observed.values[start + k] - cf.values[(d, start + k)])
}

/// Running sums of the pointwise draws along each row.
pub fn cumulative_effects<T: Real>(pointwise: &DMatrix<T>) -> DMatrix<T> {
    let mut out = pointwise.clone();
    for mut row in out.row_iter_mut() {
        let mut acc = T::zero();
        for v in row.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    out
}

/// One-sided posterior probability of an effect in the direction the draws
/// lean: `max(P(> 0), P(< 0))`, exact zeros split evenly.
pub fn tail_probability<T: Real>(draws: &[T]) -> f64 {
    if draws.is_empty() {
        return 0.5;
    }
    let n = draws.len() as f64;
    let pos = draws.iter().filter(|v| **v > T::zero()).count() as f64;
    let zero = draws.iter().filter(|v| **v == T::zero()).count() as f64;
    let p_pos = (pos + 0.5 * zero) / n;
    p_pos.max(1.0 - p_pos)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior mean and central interval of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws<T: Real>(draws: impl IntoIterator<Item = T>, level: f64) -> Self {
        let mut v: Vec<f64> = draws.into_iter().map(Real::as_f64).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        Interval {
            mean,
            lower: quantile_sorted(&v, tail),
            upper: quantile_sorted(&v, 1.0 - tail),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Everything reports and plot panels need from one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub credible_level: f64,
    pub draws: usize,
    pub t_star: usize,
    pub periods: Vec<String>,
    pub observed: Vec<f64>,
    /// Counterfactual prediction for every period.
    pub counterfactual: Vec<Interval>,
    /// Observed minus counterfactual for every period.
    pub pointwise: Vec<Interval>,
    /// Cumulative effect for `K = 1..=K_max`.
    pub cumulative: Vec<Interval>,
    /// Tail probability of the cumulative effect at `K_max`.
    pub tail_probability: f64,
    /// Whether the interval for the cumulative effect at `K_max` excludes zero.
    pub significant: bool,
    pub outcome_mean: f64,
    pub outcome_sd: f64,
}

impl EffectSummary {
    pub fn k_max(&self) -> usize {
        self.cumulative.len()
    }

    pub fn total_effect(&self) -> &Interval {
        self.cumulative.last().expect("at least one post period")
    }

    pub fn pointwise_post(&self) -> &[Interval] {
        &self.pointwise[self.t_star - 1..]
    }
}

/// Draw matrices behind a summary.
#[derive(Debug, Clone)]
pub struct EffectDraws<T: Real> {
    pub counterfactual: CounterfactualDraws<T>,
    /// All periods.
    pub contrast: DMatrix<T>,
    /// Post periods.
    pub pointwise: DMatrix<T>,
    pub cumulative: DMatrix<T>,
}

pub fn effect_draws<T: Real>(
    observed: &OutcomeSeries<T>,
    spec: InterventionSpec,
    counterfactual: CounterfactualDraws<T>,
) -> EffectDraws<T> {
    let contrast = contrast_draws(observed, &counterfactual);
    let pointwise = pointwise_effects(observed, &counterfactual, spec);
    let cumulative = cumulative_effects(&pointwise);
    EffectDraws {
        counterfactual,
        contrast,
        pointwise,
        cumulative,
    }
}

pub fn summarize_impact<T: Real>(dataset: &ValidatedDataset<T>, effects: &EffectDraws<T>, alpha: f64) -> EffectSummary {
    let level = 1.0 - alpha;
    let columns = |m: &DMatrix<T>| -> Vec<Interval> {
        m.column_iter()
            .map(|c| Interval::from_draws(c.iter().copied(), level))
            .collect()
    };
    let cumulative = columns(&effects.cumulative);
    let last: Vec<T> = effects
        .cumulative
        .column(effects.cumulative.ncols() - 1)
        .iter()
        .copied()
        .collect();
    let total = cumulative.last().copied().expect("at least one post period");
    EffectSummary {
        credible_level: level,
        draws: effects.counterfactual.draws(),
        t_star: dataset.spec.t_star,
        periods: dataset.outcome.index.iter().map(ToString::to_string).collect(),
        observed: dataset.outcome.values.iter().map(|v| v.as_f64()).collect(),
        counterfactual: columns(&effects.counterfactual.values),
        pointwise: columns(&effects.contrast),
        cumulative,
        tail_probability: tail_probability(&last),
        significant: total.excludes_zero(),
        outcome_mean: dataset.outcome_scale.mean.as_f64(),
        outcome_sd: dataset.outcome_scale.sd.as_f64(),
    }
}
