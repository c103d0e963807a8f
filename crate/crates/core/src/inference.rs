//! Kalman filtering, smoothing and posterior state simulation.
//!
//! Filtering handles missing observations by skipping the measurement update.
//! Smoothed moments combine the filter with a backward information filter;
//! the simulation smoother only needs smoothed means, which come from the
//! cheaper backward `r` recursion. State paths are drawn with the mean-correction
//! simulation smoother: simulate `(alpha+, y+)` from the model, smooth
//! `y - y+`, and add the result to `alpha+`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::state_space::SystemMatrices;

/// Initial state variance standing in for a diffuse prior.
pub const DIFFUSE_KAPPA: f64 = 1e6;

/// Lower bound applied to every variance inside the filter.
pub const VARIANCE_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which periods carry an observation, and its value with the regression
/// offset already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPlan<T> {
    pub values: Vec<Option<T>>,
}

impl<T: Real> ObservationPlan<T> {
    pub fn new(values: Vec<Option<T>>) -> Result<Self> {
        if values.iter().all(Option::is_none) {
            return Err(Error::Model("observation plan has no observed period".into()));
        }
        Ok(ObservationPlan { values })
    }

    /// Every period observed.
    pub fn observed_all(y: &[T], offset: &DVector<T>) -> Self {
        Self::observed_where(y, offset, |_| true)
    }

    /// Periods `0..observed` observed, the rest missing.
    pub fn observed_prefix(y: &[T], offset: &DVector<T>, observed: usize) -> Self {
        Self::observed_where(y, offset, |t| t < observed)
    }

    pub fn observed_where(y: &[T], offset: &DVector<T>, keep: impl Fn(usize) -> bool) -> Self {
        ObservationPlan {
            values: y
                .iter()
                .zip(offset.iter())
                .enumerate()
                .map(|(t, (&v, &r))| keep(t).then(|| v - r))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Gaussian prior on the first state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> InitialState<T> {
    /// Zero mean, `DIFFUSE_KAPPA * I` covariance.
    pub fn diffuse(dim: usize) -> Self {
        InitialState {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * T::of(DIFFUSE_KAPPA),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterResult<T: Real> {
    /// `E[s_t | y_1..y_{t-1}]`.
    pub predicted_mean: Vec<DVector<T>>,
    pub predicted_cov: Vec<DMatrix<T>>,
    /// `E[s_t | y_1..y_t]`.
    pub filtered_mean: Vec<DVector<T>>,
    pub filtered_cov: Vec<DMatrix<T>>,
    /// Innovation `v_t`; zero at missing periods.
    pub innovation: Vec<T>,
    /// Innovation variance `F_t`; zero at missing periods.
    pub innovation_variance: Vec<T>,
    pub observed: Vec<bool>,
    pub log_likelihood: T,
}

impl<T: Real> FilterResult<T> {
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SmootherResult<T: Real> {
    pub mean: Vec<DVector<T>>,
    pub cov: Vec<DMatrix<T>>,
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = T::of(0.5);
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_finite_vec<T: Real>(v: &DVector<T>, period: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            period,
            what: format!("non-finite {what}"),
        })
    }
}

fn check_finite_mat<T: Real>(m: &DMatrix<T>, period: usize, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            period,
            what: format!("non-finite {what}"),
        })
    }
}

fn check_dims<T: Real>(system: &SystemMatrices<T>, plan: &ObservationPlan<T>, init: &InitialState<T>) -> Result<()> {
    let m = system.dim();
    if init.mean.len() != m || init.cov.nrows() != m || init.cov.ncols() != m {
        return Err(Error::Model(format!("initial state does not have dimension {m}")));
    }
    if plan.values.is_empty() || plan.observed_count() == 0 {
        return Err(Error::Model("observation plan has no observed period".into()));
    }
    Ok(())
}

/// Exact Gaussian filter. Missing periods get a time update only and
/// contribute nothing to the log-likelihood.
pub fn kalman_filter<T: Real>(
    system: &SystemMatrices<T>,
    plan: &ObservationPlan<T>,
    init: &InitialState<T>,
) -> Result<FilterResult<T>> {
    check_dims(system, plan, init)?;
    let system = system.floored(T::of(VARIANCE_FLOOR));
    let n = plan.len();
    let noise = system.state_noise();
    let tt = &system.transition;
    let tt_t = tt.transpose();
    let z = &system.z;
    let h = system.obs_variance;
    let half = T::of(0.5);
    let ln2pi = T::of(LN_2PI);

    let mut out = FilterResult {
        predicted_mean: Vec::with_capacity(n),
        predicted_cov: Vec::with_capacity(n),
        filtered_mean: Vec::with_capacity(n),
        filtered_cov: Vec::with_capacity(n),
        innovation: Vec::with_capacity(n),
        innovation_variance: Vec::with_capacity(n),
        observed: Vec::with_capacity(n),
        log_likelihood: T::zero(),
    };

    let mut a = init.mean.clone();
    let mut p = init.cov.clone();
    for (t, obs) in plan.values.iter().enumerate() {
        let (af, pf, v, f) = match *obs {
            Some(y) => {
                let pz = &p * z;
                // z'Pz is a variance; rounding under a diffuse prior can push it
                // slightly negative, so it is clamped at zero before adding h.
                let f = z.dot(&pz).max(T::zero()) + h;
                if !(f > T::zero()) || !f.is_finite() {
                    return Err(Error::Numerical {
                        period: t + 1,
                        what: format!("innovation variance {f}"),
                    });
                }
                let v = y - z.dot(&a);
                let k = &pz / f;
                let af = &a + &k * v;
                // Joseph form: stays positive semi-definite under rounding.
                let l = DMatrix::identity(p.nrows(), p.ncols()) - &k * z.transpose();
                let mut pf = &l * &p * l.transpose() + &k * k.transpose() * h;
                symmetrize(&mut pf);
                out.log_likelihood -= half * (ln2pi + f.ln() + v * v / f);
                (af, pf, v, f)
            }
            None => (a.clone(), p.clone(), T::zero(), T::zero()),
        };
        check_finite_vec(&af, t + 1, "filtered state")?;
        check_finite_mat(&pf, t + 1, "filtered covariance")?;

        let a_next = tt * &af;
        let mut p_next = tt * &pf * &tt_t + &noise;
        symmetrize(&mut p_next);

        out.predicted_mean.push(std::mem::replace(&mut a, a_next));
        out.predicted_cov.push(std::mem::replace(&mut p, p_next));
        out.filtered_mean.push(af);
        out.filtered_cov.push(pf);
        out.innovation.push(v);
        out.innovation_variance.push(f);
        out.observed.push(obs.is_some());
    }
    if !out.log_likelihood.is_finite() {
        return Err(Error::Numerical {
            period: n,
            what: "non-finite log-likelihood".into(),
        });
    }
    Ok(out)
}

/// Two-filter smoother. A backward information filter carries the
/// information `(Lambda_t, nu_t)` that periods after `t` hold about `s_t`,
/// which is combined with the filtered moments:
/// `Var[s_t | y] = (P_{t|t}^{-1} + Lambda_t)^{-1}` and
/// `E[s_t | y] = Var[s_t | y] (P_{t|t}^{-1} a_{t|t} + nu_t)`.
/// Working with precisions avoids subtracting two nearly equal covariances
/// when the initial state is close to diffuse.
pub fn kalman_smoother<T: Real>(filter: &FilterResult<T>, system: &SystemMatrices<T>) -> Result<SmootherResult<T>> {
    let n = filter.len();
    let m = system.dim();
    let system = system.floored(T::of(VARIANCE_FLOOR));
    let tt = &system.transition;
    let tt_t = tt.transpose();
    let z = &system.z;
    let rr = &system.selector;
    let q_inv = DMatrix::from_diagonal(&system.disturbance.map(|v| T::one() / v));
    let h = system.obs_variance;
    let mut lambda = DMatrix::<T>::zeros(m, m);
    let mut nu = DVector::<T>::zeros(m);
    let mut mean = vec![DVector::zeros(m); n];
    let mut cov = vec![DMatrix::zeros(m, m); n];

    for t in (0..n).rev() {
        if t + 1 == n {
            mean[t] = filter.filtered_mean[t].clone();
            cov[t] = filter.filtered_cov[t].clone();
        } else {
            let pf_inv = spd_inverse(&filter.filtered_cov[t], t + 1, "filtered covariance")?;
            let mut v = spd_inverse(&(&pf_inv + &lambda), t + 1, "smoothed precision")?;
            symmetrize(&mut v);
            let smoothed = &v * (&pf_inv * &filter.filtered_mean[t] + &nu);
            check_finite_vec(&smoothed, t + 1, "smoothed state")?;
            check_finite_mat(&v, t + 1, "smoothed covariance")?;
            mean[t] = smoothed;
            cov[t] = v;
        }
        if t == 0 {
            break;
        }

        // Information about s_t from periods t..n, then pushed back through
        // the transition to s_{t-1}.
        let mut lambda_bar = lambda;
        let mut nu_bar = nu;
        if filter.observed[t] {
            let y = filter.innovation[t] + z.dot(&filter.predicted_mean[t]);
            lambda_bar += z * z.transpose() / h;
            nu_bar += z * (y / h);
        }
        let lr = &lambda_bar * rr;
        let inner = spd_inverse(&(&q_inv + rr.transpose() * &lr), t + 1, "disturbance precision")?;
        let mut through = &lambda_bar - &lr * &inner * lr.transpose();
        symmetrize(&mut through);
        let nu_through = &nu_bar - &lr * (&inner * (rr.transpose() * &nu_bar));
        lambda = &tt_t * through * tt;
        symmetrize(&mut lambda);
        nu = &tt_t * nu_through;
    }
    Ok(SmootherResult { mean, cov })
}

fn spd_inverse<T: Real>(a: &DMatrix<T>, period: usize, what: &str) -> Result<DMatrix<T>> {
    let inv = match a.clone().cholesky() {
        Some(c) => Some(c.inverse()),
        None => a.clone().try_inverse(),
    };
    inv.ok_or_else(|| Error::Numerical {
        period,
        what: format!("singular {what}"),
    })
}

/// Smoothed state means only; the workhorse of the simulation smoother.
fn smoothed_means<T: Real>(filter: &FilterResult<T>, system: &SystemMatrices<T>) -> Vec<DVector<T>> {
    let n = filter.len();
    let m = system.dim();
    let tt = &system.transition;
    let tt_t = tt.transpose();
    let z = &system.z;
    let mut r = DVector::<T>::zeros(m);
    let mut out = vec![DVector::zeros(m); n];
    for t in (0..n).rev() {
        let pf = &filter.filtered_cov[t];
        out[t] = &filter.filtered_mean[t] + pf * (&tt_t * &r);
        r = if filter.observed[t] {
            let f = filter.innovation_variance[t];
            let p = &filter.predicted_cov[t];
            let k_bar = tt * (p * z) / f;
            // L' r = T' r - z (k_bar' r)
            let kr = k_bar.dot(&r);
            &tt_t * &r + z * (filter.innovation[t] / f - kr)
        } else {
            &tt_t * &r
        };
    }
    out
}

/// One draw of the full state path from its conditional distribution given
/// the observed periods. Columns of the result are the states `s_1..s_T`.
pub fn simulate_states<T: Real, R: Rng + ?Sized>(
    system: &SystemMatrices<T>,
    plan: &ObservationPlan<T>,
    init: &InitialState<T>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    check_dims(system, plan, init)?;
    let floored = system.floored(T::of(VARIANCE_FLOOR));
    let n = plan.len();
    let m = floored.dim();
    let q = floored.disturbance.len();

    let normal = |rng: &mut R| T::of(rng.sample::<f64, _>(StandardNormal));

    // Unconditional draw of the states and pseudo-observations.
    let init_chol = init
        .cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Model("initial covariance is not positive definite".into()))?;
    let e0 = DVector::from_fn(m, |_, _| normal(rng));
    let mut state = &init.mean + init_chol.l() * e0;
    let dist_sd: Vec<T> = floored.disturbance.iter().map(|v| v.sqrt()).collect();
    let obs_sd = floored.obs_variance.sqrt();
    let mut path = DMatrix::zeros(m, n);
    let mut star = Vec::with_capacity(n);
    for t in 0..n {
        let eps = normal(rng) * obs_sd;
        star.push(plan.values[t].map(|y| y - (floored.signal(&state) + eps)));
        path.set_column(t, &state);
        let eta = DVector::from_fn(q, |i, _| normal(rng) * dist_sd[i]);
        state = floored.advance(&state, &eta);
    }

    // Smooth y - y+ with a zero-mean prior and add back.
    let zero_init = InitialState {
        mean: DVector::zeros(m),
        cov: init.cov.clone(),
    };
    let filter = kalman_filter(&floored, &ObservationPlan { values: star }, &zero_init)?;
    for (t, correction) in smoothed_means(&filter, &floored).into_iter().enumerate() {
        let mut col = path.column_mut(t);
        col += correction;
    }
    if path.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            period: n,
            what: "non-finite simulated state".into(),
        });
    }
    Ok(path)
}
