//! Brute-force reference computations and synthetic scenarios.
//!
//! The dense oracles build the joint Gaussian of all states and observations
//! explicitly from the stacked initial state and disturbances, then evaluate
//! the marginal density and the conditional moments by direct linear
//! algebra. They share nothing with the Kalman recursions except the
//! assembled [`SystemMatrices`]. Sizes are capped at [`DENSE_MAX_PERIODS`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{kalman_filter, kalman_smoother, InitialState, ObservationPlan, VARIANCE_FLOOR};
use crate::io::run_analysis;
use crate::sampler::stream_rng;
use crate::scalar::Real;
use crate::series::{
    quarterly_index, validate_dataset, AnalysisConfig, CovariateSet, InterventionSpec, OutcomeSeries, Quarter,
    ValidatedDataset,
};
use crate::state_space::{assemble_system, ComponentSet, SystemMatrices, VarianceSet};

pub const DENSE_MAX_PERIODS: usize = 12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stacked states `(s_1, ..., s_T) = G xi` as a linear map of the
/// innovations `xi = (s_1, eta_1, ..., eta_{T-1})`, with the observed
/// coordinates `y = G_obs xi + eps`.
struct DenseJoint<T: Real> {
    obs_values: DVector<T>,
    /// Stacked-state loading `G` on the innovations.
    g: DMatrix<T>,
    xi_mean: DVector<T>,
    xi_cov: DMatrix<T>,
    /// Rows of `G` mapped to the observed coordinates.
    g_obs: DMatrix<T>,
    obs_variance: T,
}

fn dense_joint<T: Real>(
    system: &SystemMatrices<T>,
    plan: &ObservationPlan<T>,
    init: &InitialState<T>,
) -> Result<DenseJoint<T>> {
    let n = plan.len();
    if n == 0 || n > DENSE_MAX_PERIODS {
        return Err(Error::Model(format!("dense oracle supports 1..={DENSE_MAX_PERIODS} periods, got {n}")));
    }
    let observed: Vec<usize> = (0..n).filter(|&t| plan.values[t].is_some()).collect();
    if observed.is_empty() {
        return Err(Error::Model("dense oracle needs at least one observation".into()));
    }
    let system = system.floored(T::of(VARIANCE_FLOOR));
    let m = system.dim();
    let q = system.disturbance.len();

    // innovations xi = (s_1, eta_1, ..., eta_{n-1}); states = G xi
    let k = m + (n - 1) * q;
    let mut xi_mean = DVector::zeros(k);
    xi_mean.rows_mut(0, m).copy_from(&init.mean);
    let mut xi_cov = DMatrix::zeros(k, k);
    xi_cov.view_mut((0, 0), (m, m)).copy_from(&init.cov);
    for j in 0..n - 1 {
        for i in 0..q {
            let at = m + j * q + i;
            xi_cov[(at, at)] = system.disturbance[i];
        }
    }

    // powers of the transition
    let mut powers = vec![DMatrix::identity(m, m)];
    for i in 1..n {
        powers.push(&system.transition * &powers[i - 1]);
    }
    let mut g = DMatrix::zeros(n * m, k);
    for t in 0..n {
        g.view_mut((t * m, 0), (m, m)).copy_from(&powers[t]);
        for j in 0..t {
            // eta_j enters s_{j+1} and propagates t - j - 1 steps
            let block = &powers[t - j - 1] * &system.selector;
            g.view_mut((t * m, m + j * q), (m, q)).copy_from(&block);
        }
    }

    let no = observed.len();
    let mut zsel = DMatrix::zeros(no, n * m);
    for (r, &t) in observed.iter().enumerate() {
        zsel.view_mut((r, t * m), (1, m)).copy_from(&system.z.transpose());
    }
    let obs_values = DVector::from_iterator(no, observed.iter().map(|&t| plan.values[t].unwrap()));
    let g_obs = &zsel * &g;
    Ok(DenseJoint {
        obs_values,
        g,
        xi_mean,
        xi_cov,
        g_obs,
        obs_variance: system.obs_variance,
    })
}

/// Marginal log-density of the observed coordinates, through the
/// determinant lemma and the Woodbury identity on the innovation precision.
pub fn dense_gaussian_loglik<T: Real>(
    system: &SystemMatrices<T>,
    plan: &ObservationPlan<T>,
    init: &InitialState<T>,
) -> Result<T> {
    let joint = dense_joint(system, plan, init)?;
    let no = joint.obs_values.len();
    let not_pd = || Error::Model("dense posterior precision is not positive definite".into());
    let prior_chol = joint.xi_cov.clone().cholesky().ok_or_else(not_pd)?;
    let prior_prec = prior_chol.inverse();
    let h = joint.obs_variance;
    let precision = &prior_prec + joint.g_obs.transpose() * &joint.g_obs / h;
    let chol = precision.cholesky().ok_or_else(not_pd)?;
    let resid = &joint.obs_values - &joint.g_obs * &joint.xi_mean;
    let b = joint.g_obs.transpose() * &resid / h;
    let two = T::of(2.0);
    let ld = |l: &DMatrix<T>| l.diagonal().iter().fold(T::zero(), |a, d| a + d.ln()) * two;
    let log_det = T::of(no as f64) * h.ln() + ld(&chol.l()) + ld(&prior_chol.l());
    let quad = resid.norm_squared() / h - b.dot(&chol.solve(&b));
    Ok(-T::of(0.5) * (T::of(no as f64 * LN_2PI) + log_det + quad))
}

/// Exact conditional means and covariances of every state given the
/// observed coordinates.
#[derive(Debug, Clone)]
pub struct DenseMoments<T: Real> {
    pub mean: Vec<DVector<T>>,
    pub cov: Vec<DMatrix<T>>,
}

pub fn dense_conditional_moments<T: Real>(
    system: &SystemMatrices<T>,
    plan: &ObservationPlan<T>,
    init: &InitialState<T>,
) -> Result<DenseMoments<T>> {
    let joint = dense_joint(system, plan, init)?;
    // Information form over the innovations: the posterior precision is the
    // prior precision plus G_obs' G_obs / h. Unlike the covariance form this
    // never subtracts two nearly equal matrices when the prior is diffuse.
    let not_pd = || Error::Model("dense posterior precision is not positive definite".into());
    let prior_prec = joint.xi_cov.clone().cholesky().ok_or_else(not_pd)?.inverse();
    let h_inv = T::one() / joint.obs_variance;
    let precision = &prior_prec + joint.g_obs.transpose() * &joint.g_obs * h_inv;
    let chol = precision.cholesky().ok_or_else(not_pd)?;
    let rhs = &prior_prec * &joint.xi_mean + joint.g_obs.transpose() * &joint.obs_values * h_inv;
    let xi_post_mean = chol.solve(&rhs);
    let xi_post_cov = chol.inverse();
    let mean = &joint.g * xi_post_mean;
    let cov = &joint.g * xi_post_cov * joint.g.transpose();
    let m = system.dim();
    let n = plan.len();
    Ok(DenseMoments {
        mean: (0..n).map(|t| mean.rows(t * m, m).into_owned()).collect(),
        cov: (0..n).map(|t| cov.view((t * m, t * m), (m, m)).into_owned()).collect(),
    })
}

/// A random small system with its observation plan.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub system: SystemMatrices<f64>,
    pub plan: ObservationPlan<f64>,
    pub seasons: usize,
    pub regressors: usize,
}

/// Draws a system with `periods` periods, random variances and
/// coefficients, and random data; with `missing`, roughly a quarter of the
/// periods are dropped (at least one is kept).
pub fn random_case<R: Rng + ?Sized>(
    rng: &mut R,
    periods: usize,
    seasons: usize,
    regressors: usize,
    missing: bool,
) -> Result<RandomCase> {
    let mut log_uniform = |lo: f64, hi: f64| (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    let variances = VarianceSet::new(
        log_uniform(0.05, 2.0),
        log_uniform(0.01, 1.0),
        log_uniform(0.001, 0.5),
        log_uniform(0.01, 1.0),
    );
    let normal = |rng: &mut R| rng.sample::<f64, _>(StandardNormal);
    let beta: Vec<f64> = (0..regressors).map(|_| normal(rng)).collect();
    let x = DMatrix::from_fn(periods, regressors, |_, _| normal(rng));
    let components = ComponentSet::new(seasons, regressors)?;
    let system = assemble_system(&components, &variances, &beta, (regressors > 0).then_some(&x), periods)?;
    let level = 3.0 * normal(rng);
    let y: Vec<f64> = (0..periods).map(|t| level + 0.2 * t as f64 + normal(rng)).collect();
    let mut keep: Vec<bool> = (0..periods).map(|_| !missing || rng.random::<f64>() >= 0.25).collect();
    if !keep.iter().any(|k| *k) {
        let t = rng.random_range(0..periods);
        keep[t] = true;
    }
    let plan = ObservationPlan::observed_where(&y, &system.offset, |t| keep[t]);
    Ok(RandomCase {
        system,
        plan,
        seasons,
        regressors,
    })
}

/// Worst-case discrepancies between the recursions and the dense oracles
/// over a batch of random systems.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub cases: usize,
    pub max_loglik_rel_error: f64,
    pub max_mean_error: f64,
    pub max_cov_error: f64,
    pub loglik_failures: usize,
    pub smoother_failures: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.loglik_failures == 0 && self.smoother_failures == 0
    }
}

pub const LOGLIK_REL_TOL: f64 = 1e-8;
pub const MOMENT_TOL: f64 = 1e-6;

/// Compares filter and smoother against the dense oracles on `cases` random
/// systems cycling through `S in {1, 4}`, `p in {0, 2}`, with and without
/// missing observations, `T` in `1..=12`.
pub fn oracle_suite(cases: usize, seed: u64) -> Result<OracleReport> {
    let mut rng: ChaCha8Rng = stream_rng(seed, 0);
    let mut report = OracleReport::default();
    for case in 0..cases {
        let seasons = if case % 2 == 0 { 1 } else { 4 };
        let regressors = if (case / 2) % 2 == 0 { 0 } else { 2 };
        let missing = (case / 4) % 2 == 1;
        let periods = rng.random_range(1..=DENSE_MAX_PERIODS);
        let rc = random_case(&mut rng, periods, seasons, regressors, missing)?;
        let init = InitialState::diffuse(rc.system.dim());

        let filter = kalman_filter(&rc.system, &rc.plan, &init)?;
        let dense_ll = dense_gaussian_loglik(&rc.system, &rc.plan, &init)?;
        let rel = ((filter.log_likelihood - dense_ll) / dense_ll).abs();
        report.max_loglik_rel_error = report.max_loglik_rel_error.max(rel);
        if !(rel <= LOGLIK_REL_TOL) {
            report.loglik_failures += 1;
        }

        let smooth = kalman_smoother(&filter, &rc.system)?;
        let dense = dense_conditional_moments(&rc.system, &rc.plan, &init)?;
        let mut case_ok = true;
        for t in 0..periods {
            let mean_err = moment_error(smooth.mean[t].iter(), dense.mean[t].iter());
            let cov_err = covariance_error(&smooth.cov[t], &dense.cov[t]);
            report.max_mean_error = report.max_mean_error.max(mean_err);
            report.max_cov_error = report.max_cov_error.max(cov_err);
            case_ok &= mean_err <= MOMENT_TOL && cov_err <= MOMENT_TOL;
        }
        if !case_ok {
            report.smoother_failures += 1;
        }
        report.cases += 1;
    }
    Ok(report)
}

/// Largest `|a_ij - b_ij| / max(1, |b_ij|, sqrt(b_ii b_jj))`: each entry is
/// judged on the scale its own variances allow, so a cross term between a
/// well-determined and a near-diffuse coordinate is not held to an absolute
/// tolerance that double precision cannot deliver.
fn covariance_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            let scale = 1f64.max(b[(i, j)].abs()).max((b[(i, i)] * b[(j, j)]).abs().sqrt());
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / scale);
        }
    }
    worst
}

/// Largest `|a - b| / max(1, |b|)`.
fn moment_error<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Shape of the injected intervention effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "size")]
pub enum EffectShape<T> {
    None,
    /// The same additive effect in every post period.
    Step(T),
    /// `size * k` in the k-th post period.
    Ramp(T),
}

impl<T: Real> EffectShape<T> {
    /// Effect in the k-th post period (`k >= 1`).
    pub fn at(&self, k: usize) -> T {
        match *self {
            EffectShape::None => T::zero(),
            EffectShape::Step(v) => v,
            EffectShape::Ramp(v) => v * T::of(k as f64),
        }
    }
}

/// Parameters of a model-generated synthetic series, on the raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec<T> {
    pub periods: usize,
    pub t_star: usize,
    pub seasons: usize,
    pub regressors: usize,
    pub variances: VarianceSet<T>,
    /// Raw-scale coefficients; length `regressors`.
    pub beta: Vec<T>,
    pub effect: EffectShape<T>,
    pub initial_level: T,
    pub initial_slope: T,
    /// Amplitude of the initial seasonal pattern.
    pub seasonal_amplitude: T,
    /// First period label.
    pub start: Quarter,
    pub replications: usize,
    pub seed: u64,
}

impl<T: Real> Default for ScenarioSpec<T> {
    /// Quarterly series 1999Q1..2014Q4 with the intervention at 2010Q2.
    fn default() -> Self {
        ScenarioSpec {
            periods: 64,
            t_star: 46,
            seasons: 4,
            regressors: 0,
            variances: VarianceSet::new(T::of(400.0), T::of(25.0), T::of(0.25), T::of(4.0)),
            beta: Vec::new(),
            effect: EffectShape::None,
            initial_level: T::of(1000.0),
            initial_slope: T::of(2.0),
            seasonal_amplitude: T::of(30.0),
            start: Quarter { year: 1999, quarter: 1 },
            replications: 200,
            seed: 1,
        }
    }
}

impl<T: Real> ScenarioSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.seasons == 0 {
            return Err(Error::Config("scenario seasons must be at least 1".into()));
        }
        if self.t_star < 2 || self.t_star > self.periods {
            return Err(Error::Config(format!(
                "scenario intervention {} outside 2..={}",
                self.t_star, self.periods
            )));
        }
        if self.beta.len() != self.regressors {
            return Err(Error::Config(format!(
                "scenario has {} coefficients for {} regressors",
                self.beta.len(),
                self.regressors
            )));
        }
        self.variances.check()
    }

    pub fn k_max(&self) -> usize {
        self.periods - self.t_star + 1
    }

    pub fn true_cumulative(&self) -> T {
        (1..=self.k_max()).fold(T::zero(), |a, k| a + self.effect.at(k))
    }
}

/// A generated series and the effects injected into it.
#[derive(Debug, Clone)]
pub struct SyntheticData<T: Real> {
    pub outcome: OutcomeSeries<T>,
    pub covariates: Option<CovariateSet<T>>,
    pub intervention: InterventionSpec,
    /// Untreated outcome path.
    pub untreated: Vec<T>,
    /// True pointwise effects for `k = 1..=K_max`.
    pub true_pointwise: Vec<T>,
    /// True cumulative effects for `K = 1..=K_max`.
    pub true_cumulative: Vec<T>,
}

impl<T: Real> SyntheticData<T> {
    pub fn validate(&self, config: AnalysisConfig<T>) -> Result<ValidatedDataset<T>> {
        validate_dataset(self.outcome.clone(), self.covariates.clone(), self.intervention, config)
    }
}

/// Simulates states forward through the trend and seasonal recursions,
/// observes them with noise and covariate effects, and adds the effect from
/// `t_star` onward.
pub fn generate_synthetic<T: Real, R: Rng + ?Sized>(spec: &ScenarioSpec<T>, rng: &mut R) -> Result<SyntheticData<T>> {
    spec.validate()?;
    let n = spec.periods;
    let p = spec.regressors;
    let normal = |rng: &mut R| T::of(rng.sample::<f64, _>(StandardNormal));

    let system = assemble_system(&ComponentSet::new(spec.seasons, 0)?, &spec.variances, &[], None, n)?;
    let m = system.dim();
    let mut state = DVector::zeros(m);
    state[0] = spec.initial_level;
    state[1] = spec.initial_slope;
    for (i, j) in system.layout.seasonal().enumerate() {
        let phase = std::f64::consts::TAU * i as f64 / spec.seasons as f64;
        state[j] = spec.seasonal_amplitude * T::of(phase.cos());
    }
    let sd: Vec<T> = system.disturbance.iter().map(|v| v.sqrt()).collect();
    let obs_sd = spec.variances.observation.sqrt();

    // covariates: independent Gaussian random walks, untouched by the intervention
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        let mut v = T::zero();
        for t in 0..n {
            v += normal(rng);
            x[(t, j)] = v;
        }
    }
    let beta = DVector::from_column_slice(&spec.beta);

    let mut untreated = Vec::with_capacity(n);
    for _ in 0..n {
        let mut y = system.signal(&state) + normal(rng) * obs_sd;
        if p > 0 {
            y += (x.row(untreated.len()) * &beta)[0];
        }
        untreated.push(y);
        let eta = DVector::from_fn(sd.len(), |i, _| normal(rng) * sd[i]);
        state = system.advance(&state, &eta);
    }

    let start = spec.t_star - 1;
    let true_pointwise: Vec<T> = (1..=spec.k_max()).map(|k| spec.effect.at(k)).collect();
    let mut true_cumulative = Vec::with_capacity(true_pointwise.len());
    let mut acc = T::zero();
    for &d in &true_pointwise {
        acc += d;
        true_cumulative.push(acc);
    }
    let values: Vec<T> = untreated
        .iter()
        .enumerate()
        .map(|(t, &y)| if t >= start { y + true_pointwise[t - start] } else { y })
        .collect();

    let covariates = if p > 0 {
        Some(CovariateSet::new(x, (1..=p).map(|j| format!("x{j}")).collect())?)
    } else {
        None
    };
    Ok(SyntheticData {
        outcome: OutcomeSeries::new(values, quarterly_index(spec.start, n))?,
        covariates,
        intervention: InterventionSpec { t_star: spec.t_star },
        untreated,
        true_pointwise,
        true_cumulative,
    })
}

/// Outcome of one replication of a coverage experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub true_cumulative: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
    pub significant: bool,
}

/// Interval coverage, bias and significance rates over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub credible_level: f64,
    pub true_cumulative: f64,
    pub coverage: f64,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    pub relative_bias: f64,
    pub significance_rate: f64,
    pub mean_interval_width: f64,
    pub rows: Vec<ReplicationResult>,
}

pub const MIN_REPLICATIONS: usize = 100;

/// Runs the full analysis on `spec.replications` independently generated
/// series. Replication `r` uses stream `r` of `spec.seed` for the data and
/// an MCMC seed derived from the same pair, so results do not depend on
/// scheduling.
pub fn coverage_experiment(spec: &ScenarioSpec<f64>, config: &AnalysisConfig<f64>) -> Result<CoverageReport> {
    spec.validate()?;
    config.validate()?;
    if spec.replications < MIN_REPLICATIONS {
        return Err(Error::Config(format!(
            "coverage experiments need at least {MIN_REPLICATIONS} replications, got {}",
            spec.replications
        )));
    }
    let rows: Vec<Result<ReplicationResult>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, config, r))
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let truth = spec.true_cumulative();
    let mean_estimate = rows.iter().map(|r| r.mean).sum::<f64>() / n;
    let mean_bias = mean_estimate - truth;
    Ok(CoverageReport {
        replications: rows.len(),
        credible_level: config.credible_level,
        true_cumulative: truth,
        coverage: rows.iter().filter(|r| r.covered).count() as f64 / n,
        mean_estimate,
        mean_bias,
        relative_bias: if truth != 0.0 { mean_bias / truth } else { f64::NAN },
        significance_rate: rows.iter().filter(|r| r.significant).count() as f64 / n,
        mean_interval_width: rows.iter().map(|r| r.upper - r.lower).sum::<f64>() / n,
        rows,
    })
}

fn run_replication(spec: &ScenarioSpec<f64>, config: &AnalysisConfig<f64>, r: usize) -> Result<ReplicationResult> {
    let mut rng = stream_rng(spec.seed, r as u64);
    let data = generate_synthetic(spec, &mut rng)?;
    let mut config = config.clone();
    config.mcmc.seed = rng.random();
    let dataset = data.validate(config)?;
    let analysis = run_analysis(&dataset)?;
    let total = *analysis.summary.total_effect();
    let truth = *data.true_cumulative.last().expect("post period");
    Ok(ReplicationResult {
        replication: r,
        true_cumulative: truth,
        mean: total.mean,
        lower: total.lower,
        upper: total.upper,
        covered: total.contains(truth),
        significant: analysis.summary.significant,
    })
}
