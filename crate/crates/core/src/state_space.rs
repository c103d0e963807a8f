//! Linear-Gaussian state-space form of the structural model.
//!
//! ```text
//! y_t       = x_t' beta + mu_t + gamma_t + eps_t           eps_t   ~ N(0, s2_obs)
//! mu_{t+1}  = mu_t + delta_t + eta_mu                      eta_mu  ~ N(0, s2_level)
//! delta_{t+1} = delta_t + eta_delta                        eta_delta ~ N(0, s2_slope)
//! gamma_{t+1} = -(gamma_t + ... + gamma_{t-S+2}) + eta_g   eta_g   ~ N(0, s2_seasonal)
//! ```
//!
//! The state vector is `[mu, delta, gamma_t, gamma_{t-1}, ..., gamma_{t-S+2}]`.
//! The regression term is not part of the state: it is carried as a known
//! offset `r_t = x_t' beta` that is subtracted from the observations.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which components the model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSet {
    /// Seasons per cycle; 1 means no seasonal block.
    pub seasons: usize,
    /// Number of regression coefficients.
    pub regressors: usize,
}

impl ComponentSet {
    pub fn new(seasons: usize, regressors: usize) -> Result<Self> {
        if seasons == 0 {
            return Err(Error::Model("seasons must be at least 1".into()));
        }
        Ok(ComponentSet {
            seasons,
            regressors,
        })
    }

    pub fn has_seasonal(&self) -> bool {
        self.seasons > 1
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.seasons)
    }
}

/// Dimension of the state vector for the given components.
pub fn state_dimension(components: &ComponentSet) -> usize {
    2 + components.seasons.saturating_sub(1)
}

/// Offsets of the state blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub seasons: usize,
    pub dim: usize,
}

impl StateLayout {
    pub const LEVEL: usize = 0;
    pub const SLOPE: usize = 1;

    pub fn new(seasons: usize) -> Self {
        StateLayout {
            seasons,
            dim: 2 + seasons.saturating_sub(1),
        }
    }

    /// Seasonal block; empty when there is no seasonality.
    pub fn seasonal(&self) -> Range<usize> {
        2..self.dim
    }

    pub fn has_seasonal(&self) -> bool {
        self.dim > 2
    }

    /// Number of disturbance terms (columns of the selector).
    pub fn disturbances(&self) -> usize {
        if self.has_seasonal() {
            3
        } else {
            2
        }
    }
}

/// Variances of the observation and state disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSet<T> {
    pub observation: T,
    pub level: T,
    pub slope: T,
    pub seasonal: T,
}

impl<T: Real> VarianceSet<T> {
    pub fn new(observation: T, level: T, slope: T, seasonal: T) -> Self {
        VarianceSet {
            observation,
            level,
            slope,
            seasonal,
        }
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::Model(format!("variance `{name}` must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// Copy with every variance raised to at least `floor`.
    pub fn floored(&self, floor: T) -> Self {
        VarianceSet {
            observation: self.observation.max(floor),
            level: self.level.max(floor),
            slope: self.slope.max(floor),
            seasonal: self.seasonal.max(floor),
        }
    }

    pub fn named(&self) -> [(&'static str, T); 4] {
        [
            ("observation", self.observation),
            ("level", self.level),
            ("slope", self.slope),
            ("seasonal", self.seasonal),
        ]
    }
}

/// The assembled system for one set of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices<T: Real> {
    pub layout: StateLayout,
    /// Observation loading (length m).
    pub z: DVector<T>,
    /// State transition (m x m).
    pub transition: DMatrix<T>,
    /// Disturbance selector (m x q).
    pub selector: DMatrix<T>,
    /// Diagonal of the disturbance covariance (length q).
    pub disturbance: DVector<T>,
    /// Observation noise variance.
    pub obs_variance: T,
    /// Regression offset `x_t' beta`, one entry per period.
    pub offset: DVector<T>,
}

pub fn assemble_system<T: Real>(
    components: &ComponentSet,
    variances: &VarianceSet<T>,
    beta: &[T],
    covariates: Option<&DMatrix<T>>,
    periods: usize,
) -> Result<SystemMatrices<T>> {
    variances.check()?;
    if beta.len() != components.regressors {
        return Err(Error::Model(format!(
            "{} coefficients for {} regressors",
            beta.len(),
            components.regressors
        )));
    }
    let offset = match covariates {
        Some(x) => {
            if x.ncols() != beta.len() {
                return Err(Error::Model(format!(
                    "{} coefficients for {} covariate columns",
                    beta.len(),
                    x.ncols()
                )));
            }
            if x.nrows() != periods {
                return Err(Error::Model(format!(
                    "{} covariate rows for {periods} periods",
                    x.nrows()
                )));
            }
            x * DVector::from_column_slice(beta)
        }
        None if beta.is_empty() => DVector::zeros(periods),
        None => return Err(Error::Model("coefficients given without covariates".into())),
    };

    let layout = components.layout();
    let m = layout.dim;
    let mut z = DVector::zeros(m);
    z[StateLayout::LEVEL] = T::one();
    let mut transition = DMatrix::zeros(m, m);
    transition[(0, 0)] = T::one();
    transition[(0, 1)] = T::one();
    transition[(1, 1)] = T::one();
    let q = layout.disturbances();
    let mut selector = DMatrix::zeros(m, q);
    selector[(0, 0)] = T::one();
    selector[(1, 1)] = T::one();
    let mut disturbance = DVector::from_vec(vec![variances.level, variances.slope]);

    if layout.has_seasonal() {
        let s0 = layout.seasonal().start;
        z[s0] = T::one();
        for j in layout.seasonal() {
            transition[(s0, j)] = -T::one();
        }
        for i in s0 + 1..m {
            transition[(i, i - 1)] = T::one();
        }
        selector[(s0, 2)] = T::one();
        disturbance = DVector::from_vec(vec![variances.level, variances.slope, variances.seasonal]);
    }

    Ok(SystemMatrices {
        layout,
        z,
        transition,
        selector,
        disturbance,
        obs_variance: variances.observation,
        offset,
    })
}

impl<T: Real> SystemMatrices<T> {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn periods(&self) -> usize {
        self.offset.len()
    }

    /// `R Q R'`, the state noise covariance.
    pub fn state_noise(&self) -> DMatrix<T> {
        let rq = &self.selector * DMatrix::from_diagonal(&self.disturbance);
        rq * self.selector.transpose()
    }

    /// Same system with all variances raised to `floor`.
    pub fn floored(&self, floor: T) -> Self {
        let mut out = self.clone();
        out.disturbance.apply(|v| *v = v.max(floor));
        out.obs_variance = out.obs_variance.max(floor);
        out
    }

    /// `T s + R eta`.
    pub fn advance(&self, state: &DVector<T>, eta: &DVector<T>) -> DVector<T> {
        &self.transition * state + &self.selector * eta
    }

    /// Signal `Z s` (without regression offset or noise).
    pub fn signal(&self, state: &DVector<T>) -> T {
        self.z.dot(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{kalman_filter, InitialState, ObservationPlan};
    use proptest::prelude::*;

    fn vars(s: f64) -> VarianceSet<f64> {
        VarianceSet::new(0.5, 0.1, 0.01, s)
    }

    #[test]
    fn dimensions() {
        assert_eq!(state_dimension(&ComponentSet::new(4, 0).unwrap()), 5);
        assert_eq!(state_dimension(&ComponentSet::new(1, 0).unwrap()), 2);
        assert_eq!(state_dimension(&ComponentSet::new(12, 0).unwrap()), 13);
        assert!(ComponentSet::new(0, 0).is_err());
    }

    #[test]
    fn quarterly_seasonal_block() {
        let sys = assemble_system(&ComponentSet::new(4, 0).unwrap(), &vars(0.2), &[], None, 10).unwrap();
        assert_eq!(sys.dim(), 5);
        assert_eq!(sys.transition.row(2).columns(2, 3).iter().copied().collect::<Vec<_>>(), vec![-1.0; 3]);
        assert_eq!(sys.transition[(3, 2)], 1.0);
        assert_eq!(sys.transition[(4, 3)], 1.0);
        assert_eq!(sys.z.iter().filter(|v| **v != 0.0).count(), 2);
        assert_eq!(sys.disturbance.as_slice(), &[0.1, 0.01, 0.2]);
    }

    #[test]
    fn pure_local_linear_trend() {
        let sys = assemble_system(&ComponentSet::new(1, 0).unwrap(), &vars(0.0), &[], None, 10).unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.z.as_slice(), &[1.0, 0.0]);
        assert_eq!(sys.transition, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
        assert_eq!(sys.disturbance.len(), 2);
    }

    #[test]
    fn zero_coefficients_match_no_regression() {
        let n = 12;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i + 3 * j) % 5) as f64 - 2.0);
        let with = assemble_system(&ComponentSet::new(4, 2).unwrap(), &vars(0.2), &[0.0, 0.0], Some(&x), n).unwrap();
        let without = assemble_system(&ComponentSet::new(4, 0).unwrap(), &vars(0.2), &[], None, n).unwrap();
        assert!(with.offset.iter().all(|v| *v == 0.0));
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let init = InitialState::diffuse(5);
        let a = kalman_filter(&with, &ObservationPlan::observed_all(&y, &with.offset), &init).unwrap();
        let b = kalman_filter(&without, &ObservationPlan::observed_all(&y, &without.offset), &init).unwrap();
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = ComponentSet::new(4, 1).unwrap();
        let x = DMatrix::from_element(8, 1, 1.0);
        assert!(assemble_system(&c, &VarianceSet::new(-1.0, 0.0, 0.0, 0.0), &[0.0], Some(&x), 8).is_err());
        assert!(assemble_system(&c, &vars(0.1), &[0.0, 1.0], Some(&x), 8).is_err());
        assert!(assemble_system(&c, &vars(0.1), &[0.0], None, 8).is_err());
        assert!(assemble_system(&c, &vars(0.1), &[0.0], Some(&x), 9).is_err());
    }

    #[test]
    fn noiseless_recursions_follow_the_model() {
        let sys = assemble_system(&ComponentSet::new(4, 0).unwrap(), &vars(0.1), &[], None, 20).unwrap();
        let zero = DVector::zeros(3);
        let mut s = DVector::from_vec(vec![10.0, 0.5, 2.0, -1.5, 0.25]);
        for _ in 0..20 {
            let next = sys.advance(&s, &zero);
            assert_eq!(next[0], s[0] + s[1]);
            assert_eq!(next[1], s[1]);
            assert_eq!(next[2], -(s[2] + s[3] + s[4]));
            assert_eq!(next[3], s[2]);
            assert_eq!(next[4], s[3]);
            s = next;
        }
    }

    proptest! {
        #[test]
        fn seasonal_contributions_sum_to_zero(
            seasons in 2usize..13,
            init in prop::collection::vec(-5.0f64..5.0, 12),
            start in 0usize..30,
        ) {
            let sys = assemble_system(&ComponentSet::new(seasons, 0).unwrap(), &vars(0.1), &[], None, 1).unwrap();
            let m = sys.dim();
            let mut s = DVector::zeros(m);
            // seasonal block γ_t..γ_{t-S+2}; choose the implied γ_{t-S+1} so the
            // full cycle sums to zero, which the recursion then preserves
            for j in 2..m {
                s[j] = init[j - 2];
            }
            let zero = DVector::zeros(3);
            let mut gammas = Vec::new();
            for _ in 0..start + 2 * seasons {
                gammas.push(s[2]);
                s = sys.advance(&s, &zero);
            }
            for w in gammas[1..].windows(seasons) {
                let total: f64 = w.iter().sum();
                prop_assert!(total.abs() < 1e-9, "sum {}", total);
            }
        }
    }
}
