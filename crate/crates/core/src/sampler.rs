//! Gibbs sampler for the structural model.
//!
//! Each sweep draws, in order:
//! 1. the full state path given variances and coefficients (simulation smoother),
//! 2. the level, slope and seasonal variances from their inverse-gamma
//!    conditionals given the implied state disturbances,
//! 3. the observation variance given the observation residuals,
//! 4. the regression coefficients from their Gaussian conditional.
//!
//! Post-intervention outcomes are always treated as missing, so the chain
//! never conditions on treated data. Everything runs on the standardized
//! scale of [`ValidatedDataset`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{simulate_states, InitialState, ObservationPlan, VARIANCE_FLOOR};
use crate::scalar::Real;
use crate::series::ValidatedDataset;
use crate::state_space::{assemble_system, ComponentSet, StateLayout, VarianceSet};

/// Inverse-gamma prior written as `nu` prior observations with sample
/// variance `s^2`: shape `nu / 2`, scale `nu * s^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseGammaPrior<T> {
    pub nu: T,
    pub s: T,
}

impl<T: Real> InverseGammaPrior<T> {
    pub fn new(nu: T, s: T) -> Self {
        InverseGammaPrior { nu, s }
    }

    pub fn shape(&self) -> T {
        self.nu / T::of(2.0)
    }

    pub fn scale(&self) -> T {
        self.nu * self.s * self.s / T::of(2.0)
    }

    /// Conditional shape and scale after `n` residuals with sum of squares `ss`.
    pub fn posterior(&self, n: usize, ss: T) -> (T, T) {
        let half = T::of(0.5);
        (self.shape() + T::of(n as f64) * half, self.scale() + ss * half)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.nu > T::zero() && self.s > T::zero() && self.nu.is_finite() && self.s.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "prior `{name}` needs nu > 0 and s > 0, got nu = {}, s = {}",
                self.nu, self.s
            )))
        }
    }
}

/// Priors on the standardized scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors<T> {
    pub observation: InverseGammaPrior<T>,
    pub level: InverseGammaPrior<T>,
    pub slope: InverseGammaPrior<T>,
    pub seasonal: InverseGammaPrior<T>,
    /// Standard deviation of the independent Gaussian prior on each
    /// standardized regression coefficient.
    pub coefficient_sd: T,
}

impl<T: Real> Default for Priors<T> {
    fn default() -> Self {
        let trend = InverseGammaPrior::new(T::one(), T::of(0.01));
        Priors {
            observation: InverseGammaPrior::new(T::of(5.0), T::of(0.5)),
            level: trend,
            slope: trend,
            seasonal: trend,
            coefficient_sd: T::one(),
        }
    }
}

impl<T: Real> Priors<T> {
    pub fn validate(&self) -> Result<()> {
        self.observation.validate("observation")?;
        self.level.validate("level")?;
        self.slope.validate("slope")?;
        self.seasonal.validate("seasonal")?;
        if !(self.coefficient_sd > T::zero()) {
            return Err(Error::Config("coefficient_sd must be positive".into()));
        }
        Ok(())
    }
}

/// `IG(shape, scale)` draw as `scale / G` with `G ~ Gamma(shape, 1)`, floored.
pub fn draw_inverse_gamma<T: Real, R: Rng + ?Sized>(shape: T, scale: T, rng: &mut R) -> Result<T> {
    let gamma = Gamma::new(shape.as_f64(), 1.0)
        .map_err(|e| Error::Model(format!("inverse-gamma shape {shape}: {e}")))?;
    let g: f64 = gamma.sample(rng);
    let v = T::of(scale.as_f64() / g);
    if !v.is_finite() {
        return Err(Error::Model(format!("non-finite variance draw (shape {shape}, scale {scale})")));
    }
    Ok(v.max(T::of(VARIANCE_FLOOR)))
}

/// State disturbances implied by a path: `(level, slope, seasonal)` residuals
/// for each transition `t -> t+1`.
pub fn state_residuals<T: Real>(states: &DMatrix<T>, layout: &StateLayout) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = states.ncols();
    let steps = n.saturating_sub(1);
    let mut level = Vec::with_capacity(steps);
    let mut slope = Vec::with_capacity(steps);
    let mut seasonal = Vec::with_capacity(if layout.has_seasonal() { steps } else { 0 });
    let (mu, delta) = (StateLayout::LEVEL, StateLayout::SLOPE);
    for t in 0..steps {
        let cur = states.column(t);
        let next = states.column(t + 1);
        level.push(next[mu] - cur[mu] - cur[delta]);
        slope.push(next[delta] - cur[delta]);
        if layout.has_seasonal() {
            let block = layout.seasonal();
            let s0 = block.start;
            let sum = block.fold(T::zero(), |acc, j| acc + cur[j]);
            seasonal.push(next[s0] + sum);
        }
    }
    (level, slope, seasonal)
}

fn sum_sq<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x)
}

/// Trend and seasonal variances drawn from their conditionals. The
/// observation field is left at the floor; without a seasonal block the
/// seasonal variance is pinned to the floor.
pub fn draw_state_variances<T: Real, R: Rng + ?Sized>(
    states: &DMatrix<T>,
    layout: &StateLayout,
    priors: &Priors<T>,
    rng: &mut R,
) -> Result<VarianceSet<T>> {
    if states.nrows() != layout.dim {
        return Err(Error::Model(format!(
            "state path has {} rows, layout expects {}",
            states.nrows(),
            layout.dim
        )));
    }
    let (level, slope, seasonal) = state_residuals(states, layout);
    let draw = |prior: &InverseGammaPrior<T>, res: &[T], rng: &mut R| -> Result<T> {
        let ss = sum_sq(res);
        if !ss.is_finite() {
            return Err(Error::Model("non-finite state residuals".into()));
        }
        let (shape, scale) = prior.posterior(res.len(), ss);
        draw_inverse_gamma(shape, scale, rng)
    };
    let floor = T::of(VARIANCE_FLOOR);
    let level = draw(&priors.level, &level, rng)?;
    let slope = draw(&priors.slope, &slope, rng)?;
    let seasonal = if layout.has_seasonal() {
        draw(&priors.seasonal, &seasonal, rng)?
    } else {
        floor
    };
    Ok(VarianceSet::new(floor, level, slope, seasonal))
}

pub fn draw_observation_variance<T: Real, R: Rng + ?Sized>(
    residuals: &[T],
    prior: &InverseGammaPrior<T>,
    rng: &mut R,
) -> Result<T> {
    let ss = sum_sq(residuals);
    if !ss.is_finite() {
        return Err(Error::Model("non-finite observation residuals".into()));
    }
    let (shape, scale) = prior.posterior(residuals.len(), ss);
    draw_inverse_gamma(shape, scale, rng)
}

/// Gaussian conditional of the coefficients. `x` holds the covariate rows of
/// observed periods and `target` the matching `y - Z s`.
pub fn draw_beta<T: Real, R: Rng + ?Sized>(
    x: &DMatrix<T>,
    target: &DVector<T>,
    obs_variance: T,
    coefficient_sd: T,
    rng: &mut R,
) -> Result<DVector<T>> {
    let (mean, chol) = beta_conditional(x, target, obs_variance, coefficient_sd)?;
    let e = DVector::from_fn(mean.len(), |_, _| T::of(rng.sample::<f64, _>(StandardNormal)));
    // precision = L L', so L'^-1 e has covariance precision^-1
    let dev = chol
        .l()
        .transpose()
        .solve_upper_triangular(&e)
        .expect("cholesky factor has a positive diagonal");
    Ok(mean + dev)
}

/// Mean and Cholesky factor of the precision of the coefficient conditional:
/// precision `I / tau^2 + X'X / s2`, mean `precision^-1 X' target / s2`.
pub fn beta_conditional<T: Real>(
    x: &DMatrix<T>,
    target: &DVector<T>,
    obs_variance: T,
    coefficient_sd: T,
) -> Result<(DVector<T>, nalgebra::Cholesky<T, nalgebra::Dyn>)> {
    if x.nrows() != target.len() {
        return Err(Error::Model(format!(
            "{} covariate rows but {} residuals",
            x.nrows(),
            target.len()
        )));
    }
    let p = x.ncols();
    let xt = x.transpose();
    let prior_precision = T::one() / (coefficient_sd * coefficient_sd);
    let precision = DMatrix::identity(p, p) * prior_precision + &xt * x / obs_variance;
    let chol = precision.cholesky();
    assert!(chol.is_some(), "coefficient precision is positive definite for a positive prior scale");
    let chol = chol.unwrap();
    let mean = chol.solve(&(&xt * target / obs_variance));
    Ok((mean, chol))
}

/// One kept sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw<T: Real> {
    pub variances: VarianceSet<T>,
    pub beta: DVector<T>,
    /// State path, one column per period.
    pub states: DMatrix<T>,
}

/// Counts of each Gibbs move; every move is an exact conditional draw, so
/// there are no rejections to report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveAudit {
    pub sweeps: usize,
    pub state_draws: usize,
    pub variance_draws: usize,
    pub coefficient_draws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws<T: Real> {
    /// Kept draws, chain after chain.
    pub draws: Vec<Draw<T>>,
    pub chains: usize,
    pub seed: u64,
    pub audit: MoveAudit,
}

impl<T: Real> PosteriorDraws<T> {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn per_chain(&self) -> usize {
        self.draws.len() / self.chains.max(1)
    }

    /// Named scalar traces: the four variances then each coefficient.
    pub fn traces(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = ["sigma2_observation", "sigma2_level", "sigma2_slope", "sigma2_seasonal"]
            .iter()
            .map(|s| (s.to_string(), Vec::with_capacity(self.len())))
            .collect();
        let p = self.draws.first().map_or(0, |d| d.beta.len());
        for j in 0..p {
            out.push((format!("beta_{}", j + 1), Vec::with_capacity(self.len())));
        }
        for d in &self.draws {
            for (k, (_, v)) in d.variances.named().iter().enumerate() {
                out[k].1.push(v.as_f64());
            }
            for j in 0..p {
                out[4 + j].1.push(d.beta[j].as_f64());
            }
        }
        out
    }
}

/// Independent random stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn run_gibbs<T: Real>(dataset: &ValidatedDataset<T>) -> Result<PosteriorDraws<T>> {
    let config = &dataset.config;
    config.validate()?;
    let mcmc = config.mcmc;
    let chains: Vec<Result<(Vec<Draw<T>>, MoveAudit)>> = (0..mcmc.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(mcmc.seed, c as u64);
            run_chain(dataset, &mut rng)
        })
        .collect();
    let mut draws = Vec::with_capacity(mcmc.draws * mcmc.chains);
    let mut audit = MoveAudit::default();
    for chain in chains {
        let (d, a) = chain?;
        draws.extend(d);
        audit.sweeps += a.sweeps;
        audit.state_draws += a.state_draws;
        audit.variance_draws += a.variance_draws;
        audit.coefficient_draws += a.coefficient_draws;
    }
    Ok(PosteriorDraws {
        draws,
        chains: mcmc.chains,
        seed: mcmc.seed,
        audit,
    })
}

fn run_chain<T: Real>(dataset: &ValidatedDataset<T>, rng: &mut ChaCha8Rng) -> Result<(Vec<Draw<T>>, MoveAudit)> {
    let config = &dataset.config;
    let mcmc = config.mcmc;
    let priors = &config.priors;
    let n = dataset.len();
    let pre = dataset.pre_len();
    let p = dataset.covariate_count();
    let components = ComponentSet::new(config.seasons, p)?;
    let layout = components.layout();
    let init = InitialState::diffuse(layout.dim);
    let y: Vec<T> = dataset.y.iter().copied().collect();
    let x_pre = dataset.x.rows(0, pre).into_owned();
    let covariates = (p > 0).then_some(&dataset.x);

    let prior_var = |pr: &InverseGammaPrior<T>| pr.s * pr.s;
    let mut variances = VarianceSet::new(
        prior_var(&priors.observation),
        prior_var(&priors.level),
        prior_var(&priors.slope),
        if layout.has_seasonal() {
            prior_var(&priors.seasonal)
        } else {
            T::of(VARIANCE_FLOOR)
        },
    );
    let mut beta = DVector::<T>::zeros(p);
    let total = mcmc.burn_in + mcmc.draws * mcmc.thin;
    let mut kept = Vec::with_capacity(mcmc.draws);
    let mut audit = MoveAudit::default();

    for iteration in 0..total {
        let mut sweep = || -> Result<DMatrix<T>> {
            let system = assemble_system(&components, &variances, beta.as_slice(), covariates, n)?;
            let plan = ObservationPlan::observed_prefix(&y, &system.offset, pre);
            let states = simulate_states(&system, &plan, &init, rng)?;

            let drawn = draw_state_variances(&states, &layout, priors, rng)?;
            variances.level = drawn.level;
            variances.slope = drawn.slope;
            variances.seasonal = drawn.seasonal;

            // y - Z s over the observed periods
            let target = DVector::from_fn(pre, |t, _| y[t] - system.z.dot(&states.column(t)));
            let resid: Vec<T> = (0..pre).map(|t| target[t] - system.offset[t]).collect();
            variances.observation = draw_observation_variance(&resid, &priors.observation, rng)?;

            if p > 0 {
                beta = draw_beta(&x_pre, &target, variances.observation, priors.coefficient_sd, rng)?;
            }
            Ok(states)
        };
        let states = sweep().map_err(|e| Error::Sampler {
            iteration,
            source: Box::new(e),
        })?;
        audit.sweeps += 1;
        audit.state_draws += 1;
        audit.variance_draws += if layout.has_seasonal() { 4 } else { 3 };
        audit.coefficient_draws += usize::from(p > 0);

        if iteration >= mcmc.burn_in && (iteration - mcmc.burn_in).is_multiple_of(mcmc.thin) {
            kept.push(Draw {
                variances,
                beta: beta.clone(),
                states,
            });
        }
    }
    Ok((kept, audit))
}

/// Convergence summary for one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostic {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub effective_sample_size: f64,
    /// Split-chain potential scale reduction.
    pub split_rhat: f64,
}

pub fn diagnostics<T: Real>(draws: &PosteriorDraws<T>) -> Vec<ParameterDiagnostic> {
    let per_chain = draws.per_chain();
    draws
        .traces()
        .into_iter()
        .map(|(name, trace)| {
            let chains: Vec<&[f64]> = trace.chunks(per_chain.max(1)).collect();
            let n = trace.len() as f64;
            let mean = trace.iter().sum::<f64>() / n;
            let sd = (trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            ParameterDiagnostic {
                name,
                mean,
                sd,
                effective_sample_size: chains.iter().map(|c| effective_sample_size(c)).sum(),
                split_rhat: split_rhat(&chains),
            }
        })
        .collect()
}

/// Effective sample size from autocorrelations summed over Geyer's initial
/// positive sequence.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| -> f64 {
        trace[..n - lag]
            .iter()
            .zip(&trace[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64 * (n as f64).log10())
}

/// Gelman-Rubin statistic with every chain split in half.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[h..2 * h]]
        })
        .filter(|h| h.len() >= 2)
        .collect();
    if halves.len() < 2 {
        return f64::NAN;
    }
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let between = n * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() as f64 - 1.0);
    let within = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (h.len() as f64 - 1.0))
        .sum::<f64>()
        / halves.len() as f64;
    if within <= 0.0 {
        return if between <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{validate_dataset, AnalysisConfig, InterventionSpec, OutcomeSeries};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    /// Closed-form inverse-gamma mean and variance.
    fn ig_moments(shape: f64, scale: f64) -> (f64, f64) {
        let mean = scale / (shape - 1.0);
        (mean, mean * mean / (shape - 2.0))
    }

    #[test]
    fn posterior_arithmetic() {
        let prior = InverseGammaPrior::new(5.0, 0.5);
        assert_eq!(prior.shape(), 2.5);
        assert_eq!(prior.scale(), 0.625);
        let (a1, b1) = prior.posterior(10, 3.0);
        let (a2, b2) = prior.posterior(10, 6.0);
        assert_eq!(a1, a2);
        assert_eq!(b2 - b1, 1.5);
        assert_eq!(a1, 7.5);
    }

    #[test]
    fn huge_prior_weight_pins_draws_at_s_squared() {
        let prior = InverseGammaPrior::<f64>::new(1e8, 0.3);
        let mut r = rng(1);
        let res = vec![5.0; 40];
        for _ in 0..200 {
            let v = draw_observation_variance(&res, &prior, &mut r).unwrap();
            assert!((v - 0.09).abs() < 0.0009, "{v}");
        }
    }

    #[test]
    fn zero_residual_observation_variance_matches_closed_form() {
        // n = 10 zero residuals: IG(2.5 + 5, 0.625)
        let prior = InverseGammaPrior::new(5.0, 0.5);
        let mut r = rng(2);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| draw_observation_variance(&[0.0; 10], &prior, &mut r).unwrap())
            .collect();
        let (m, _) = mean_var(&draws);
        let (em, ev) = ig_moments(7.5, 0.625);
        assert!((m - em).abs() < 3.0 * (ev / 1e4).sqrt(), "{m} vs {em}");
    }

    #[test]
    fn unit_residuals_concentrate_near_one() {
        let prior = InverseGammaPrior::new(5.0, 0.5);
        let res: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut r = rng(3);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| draw_observation_variance(&res, &prior, &mut r).unwrap())
            .collect();
        let (m, _) = mean_var(&draws);
        assert!((m - 1.0).abs() < 0.2, "{m}");
    }

    #[test]
    fn zero_slope_residuals_give_prior_shifted_posterior() {
        let layout = StateLayout::new(1);
        let n = 21;
        // constant slope, level moving exactly by the slope: all residuals zero
        let states = DMatrix::from_fn(2, n, |i, t| if i == 0 { 1.0 + 0.5 * t as f64 } else { 0.5 });
        let (lv, sl, _) = state_residuals(&states, &layout);
        assert!(lv.iter().chain(&sl).all(|v| v.abs() < 1e-12));
        let priors = Priors::<f64>::default();
        let mut r = rng(4);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| draw_state_variances(&states, &layout, &priors, &mut r).unwrap().slope)
            .collect();
        let (m, _) = mean_var(&draws);
        let (shape, scale) = priors.slope.posterior(n - 1, 0.0);
        let (em, ev) = ig_moments(shape, scale);
        assert!((m - em).abs() < 3.0 * (ev / 1e4).sqrt(), "{m} vs {em}");
    }

    #[test]
    fn seasonal_residuals_follow_the_recursion() {
        let layout = StateLayout::new(4);
        let mut states = DMatrix::zeros(5, 3);
        states.set_column(0, &DVector::from_vec(vec![0.0, 0.0, 1.0, 2.0, 3.0]));
        states.set_column(1, &DVector::from_vec(vec![0.0, 0.0, -6.5, 1.0, 2.0]));
        states.set_column(2, &DVector::from_vec(vec![0.0, 0.0, 0.0, -6.5, 1.0]));
        let (_, _, seas) = state_residuals(&states, &layout);
        assert_eq!(seas, vec![-0.5, -3.5]);
    }

    #[test]
    fn zero_signal_beta_is_centered() {
        let x = DMatrix::<f64>::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let target = DVector::zeros(4);
        let (mean, chol) = beta_conditional(&x, &target, 0.5, 1.0).unwrap();
        assert_eq!(mean.amax(), 0.0);
        // precision = I + X'X / 0.5 = 3 I
        let cov = chol.inverse();
        assert!((cov[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
        assert!(cov[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn beta_recovers_exact_regressor() {
        let n = 30;
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64 * 0.37).sin());
        let target = x.column(0).into_owned();
        let mut r = rng(5);
        let draws: Vec<f64> = (0..2000).map(|_| draw_beta(&x, &target, 1e-4, 1.0, &mut r).unwrap()[0]).collect();
        let (m, v) = mean_var(&draws);
        // closed form: mean = (x'x/s2) / (1 + x'x/s2)
        let xx = x.column(0).norm_squared() / 1e-4;
        assert!((m - xx / (1.0 + xx)).abs() < 3.0 * (1.0 / (1.0 + xx) / 2000.0).sqrt());
        assert!((m - 1.0).abs() < 0.01);
        assert!((v - 1.0 / (1.0 + xx)).abs() < 0.1 / (1.0 + xx));
    }

    fn toy_dataset(draws: usize) -> ValidatedDataset<f64> {
        let n = 24;
        let values: Vec<f64> = (0..n).map(|t| 50.0 + 0.8 * t as f64 + [3.0, -1.0, 2.0, -4.0][t % 4] + (t as f64 * 2.1).sin()).collect();
        let mut config = AnalysisConfig {
            seasons: 4,
            ..AnalysisConfig::default()
        };
        config.mcmc.burn_in = 50;
        config.mcmc.draws = draws;
        config.mcmc.seed = 99;
        validate_dataset(OutcomeSeries::from_values(values).unwrap(), None, InterventionSpec { t_star: 17 }, config).unwrap()
    }

    #[test]
    fn same_seed_same_draws() {
        let ds = toy_dataset(100);
        let a = run_gibbs(&ds).unwrap();
        let b = run_gibbs(&ds).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.draws.iter().all(|d| d.variances.named().iter().all(|(_, v)| *v >= VARIANCE_FLOOR)));
        assert_eq!(a.audit.sweeps, 150);
    }

    #[test]
    fn thinning_and_chains_set_draw_count() {
        let mut ds = toy_dataset(100);
        ds.config.mcmc.thin = 2;
        ds.config.mcmc.chains = 2;
        let d = run_gibbs(&ds).unwrap();
        assert_eq!(d.len(), 200);
        assert_eq!(d.per_chain(), 100);
        assert_eq!(d.audit.sweeps, 2 * (50 + 200));
        let diag = diagnostics(&d);
        assert_eq!(diag.len(), 4);
        assert!(diag.iter().all(|p| p.effective_sample_size > 0.0 && p.split_rhat.is_finite()));
    }

    #[test]
    fn too_few_kept_draws_is_a_config_error() {
        let mut ds = toy_dataset(100);
        ds.config.mcmc.draws = 50;
        assert!(matches!(run_gibbs(&ds), Err(Error::Config(_))));
    }

    #[test]
    fn ess_of_independent_noise_is_near_n() {
        let mut r = rng(8);
        let trace: Vec<f64> = (0..4000).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let ess = effective_sample_size(&trace);
        assert!(ess > 3000.0, "{ess}");
        // AR(1) with phi = 0.9 has ESS ~ n (1 - phi) / (1 + phi)
        let mut x = 0.0;
        let ar: Vec<f64> = (0..20_000)
            .map(|_| {
                x = 0.9 * x + r.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let ess = effective_sample_size(&ar);
        assert!((ess / (20_000.0 * 0.1 / 1.9) - 1.0).abs() < 0.3, "{ess}");
    }

    #[test]
    fn rhat_flags_disagreeing_chains() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 5.0).collect();
        assert!(split_rhat(&[&a, &b]) > 1.5);
        assert!((split_rhat(&[&a, &a]) - 1.0).abs() < 0.05);
    }
}
