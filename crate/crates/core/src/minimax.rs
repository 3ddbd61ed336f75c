//! Upper and lower minimax expectations over the measure family.
//!
//! For payoffs monotone in `S_T` the extremes are attained by the constant
//! controls `+-k`; [`extremal_price`] uses that directly, either on a
//! bundle or in closed form for GBM calls and puts.

use rayon::prelude::*;

use crate::choquet::Capacity;
use crate::error::{invalid, Error, Result};
use crate::measures::{closed_under_negation, constant_grid, expectation_under, girsanov_weights, ThetaControl};
use crate::paths::{MarketModel, PathBundle};
use crate::payoff::{Monotonicity, Payoff, PayoffShape};
use crate::stats::{normal_cdf, pooled_tolerance, Estimate};

/// Sup and inf of `E_Q[X]` over a finite family.
#[derive(Debug, Clone)]
pub struct MinimaxResult {
    pub upper: Estimate,
    pub lower: Estimate,
    pub argmax_control: ThetaControl,
    pub argmin_control: ThetaControl,
    /// `E_Q[X]` for every member, in family order.
    pub profile: Vec<Estimate>,
}

impl MinimaxResult {
    pub fn std_errors(&self) -> (f64, f64) {
        (self.upper.std_error, self.lower.std_error)
    }

    fn from_profile(family: &[ThetaControl], profile: Vec<Estimate>) -> Self {
        // first index wins ties so results do not depend on evaluation order
        let mut imax = 0;
        let mut imin = 0;
        for (i, e) in profile.iter().enumerate() {
            if e.value > profile[imax].value {
                imax = i;
            }
            if e.value < profile[imin].value {
                imin = i;
            }
        }
        Self {
            upper: profile[imax],
            lower: profile[imin],
            argmax_control: family[imax].clone(),
            argmin_control: family[imin].clone(),
            profile,
        }
    }
}

fn check_family(family: &[ThetaControl]) -> Result<()> {
    if family.is_empty() {
        return Err(invalid("minimax needs a nonempty family"));
    }
    if !closed_under_negation(family) {
        return Err(invalid("family must be closed under theta -> -theta"));
    }
    Ok(())
}

/// Minimax expectation of a terminal payoff on a simulated bundle.
pub fn minimax_expectation(payoff: &Payoff, family: &[ThetaControl], bundle: &PathBundle) -> Result<MinimaxResult> {
    let values = payoff.eval_all(&bundle.terminal_states()?);
    minimax_of_values(&values, family, bundle)
}

/// Minimax expectation of arbitrary per-path values.
pub fn minimax_of_values(values: &[f64], family: &[ThetaControl], bundle: &PathBundle) -> Result<MinimaxResult> {
    check_family(family)?;
    let profile = family
        .par_iter()
        .map(|c| expectation_under(values, &girsanov_weights(c, bundle)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(MinimaxResult::from_profile(family, profile))
}

/// Minimax expectation reusing the weights cached in a capacity.
pub fn minimax_with_capacity(values: &[f64], capacity: &Capacity) -> Result<MinimaxResult> {
    let family = capacity.family();
    check_family(family)?;
    let profile = (0..family.len())
        .map(|i| expectation_under(values, capacity.member_weights(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MinimaxResult::from_profile(family, profile))
}

/// Where [`extremal_price`] evaluates `E_{Q_{+-k}}`.
#[derive(Debug, Clone, Copy)]
pub enum ExtremalSource<'a> {
    Bundle(&'a PathBundle),
    /// Lognormal closed form; GBM calls and puts only.
    ClosedForm,
}

/// Upper/lower prices at the extremal measures `Q_{+k}`, `Q_{-k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalPrice {
    pub upper: Estimate,
    pub lower: Estimate,
}

/// Increasing payoffs take the upper price under `Q_{+k}` and the lower
/// under `Q_{-k}`; decreasing payoffs swap the roles.
pub fn extremal_price(payoff: &Payoff, model: &MarketModel, source: ExtremalSource<'_>) -> Result<ExtremalPrice> {
    let k = model.ambiguity();
    let (up_theta, down_theta) = match payoff.monotonicity() {
        Monotonicity::Increasing => (k, -k),
        Monotonicity::Decreasing => (-k, k),
        Monotonicity::None => {
            return Err(Error::NotApplicable(format!(
                "{} is not monotone; use minimax_expectation",
                payoff.name()
            )))
        }
    };
    let price_at = |theta: f64| -> Result<Estimate> {
        match source {
            ExtremalSource::Bundle(bundle) => {
                if bundle.grid().horizon() != model.horizon() {
                    return Err(invalid("bundle horizon differs from model horizon"));
                }
                let values = payoff.eval_all(&bundle.terminal_states()?);
                let w = girsanov_weights(&ThetaControl::constant(theta, k)?, bundle)?;
                expectation_under(&values, &w)
            }
            ExtremalSource::ClosedForm => closed_form_price(payoff, model, theta).map(Estimate::exact),
        }
    };
    Ok(ExtremalPrice {
        upper: price_at(up_theta)?,
        lower: price_at(down_theta)?,
    })
}

/// Undiscounted price of a GBM call/put under the measure with constant
/// kernel `theta`, i.e. with drift `mu + theta * sigma`.
pub fn closed_form_price(payoff: &Payoff, model: &MarketModel, theta: f64) -> Result<f64> {
    let c = model
        .gbm_constants()
        .ok_or_else(|| invalid("closed form needs constant GBM coefficients"))?;
    let drift = c.mu + theta * c.sigma;
    let (s0, t) = (model.s0(), model.horizon());
    match payoff.shape() {
        PayoffShape::Call { strike } => Ok(lognormal_call(s0, drift, c.sigma, t, strike)),
        PayoffShape::Put { strike } => Ok(lognormal_put(s0, drift, c.sigma, t, strike)),
        _ => Err(invalid(format!("no closed form for {}", payoff.name()))),
    }
}

/// `E[(S_T - K)^+]` for `S_T = s0 exp((m - v^2/2) T + v W_T)`.
pub fn lognormal_call(s0: f64, drift: f64, vol: f64, horizon: f64, strike: f64) -> f64 {
    let fwd = s0 * (drift * horizon).exp();
    let sd = vol * horizon.sqrt();
    if sd == 0.0 {
        return (fwd - strike).max(0.0);
    }
    if strike <= 0.0 {
        return fwd - strike;
    }
    let d1 = ((fwd / strike).ln() + 0.5 * sd * sd) / sd;
    fwd * normal_cdf(d1) - strike * normal_cdf(d1 - sd)
}

/// `E[(K - S_T)^+]`, same dynamics as [`lognormal_call`].
pub fn lognormal_put(s0: f64, drift: f64, vol: f64, horizon: f64, strike: f64) -> f64 {
    let fwd = s0 * (drift * horizon).exp();
    let sd = vol * horizon.sqrt();
    if sd == 0.0 {
        return (strike - fwd).max(0.0);
    }
    if strike <= 0.0 {
        return 0.0;
    }
    let d1 = ((fwd / strike).ln() + 0.5 * sd * sd) / sd;
    strike * normal_cdf(sd - d1) - fwd * normal_cdf(-d1)
}

/// Profile of `theta -> E_{Q^theta}[Phi]` over constants on `[-k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttainmentReport {
    pub thetas: Vec<f64>,
    pub profile: Vec<Estimate>,
    pub argmax_theta: f64,
    pub argmin_theta: f64,
    /// Max at the endpoint predicted by the monotonicity, within pooled SE.
    pub max_at_endpoint: bool,
    /// Profile monotone in the predicted direction, within pooled SE.
    pub monotone: bool,
    /// False for payoffs without declared monotonicity (nothing to assert).
    pub applicable: bool,
}

impl AttainmentReport {
    pub fn passed(&self) -> bool {
        !self.applicable || (self.max_at_endpoint && self.monotone)
    }
}

pub fn attainment_check(payoff: &Payoff, fine_grid_count: usize, bundle: &PathBundle, k: f64) -> Result<AttainmentReport> {
    if fine_grid_count < 11 {
        return Err(invalid(format!("fine grid needs at least 11 points, got {fine_grid_count}")));
    }
    let family = constant_grid(k, fine_grid_count)?;
    let thetas: Vec<f64> = family.iter().map(|c| c.value_at(0.0)).collect();
    let values = payoff.eval_all(&bundle.terminal_states()?);
    let result = minimax_of_values(&values, &family, bundle)?;
    let profile = result.profile.clone();
    let argmax_theta = result.argmax_control.value_at(0.0);
    let argmin_theta = result.argmin_control.value_at(0.0);

    let sign = match payoff.monotonicity() {
        Monotonicity::Increasing => 1.0,
        Monotonicity::Decreasing => -1.0,
        Monotonicity::None => 0.0,
    };
    let applicable = sign != 0.0;
    let monotone = profile
        .windows(2)
        .all(|w| sign * (w[1].value - w[0].value) >= -pooled_tolerance(w[0].std_error, w[1].std_error));
    let endpoint = if sign >= 0.0 { *profile.last().expect("nonempty") } else { profile[0] };
    let max_at_endpoint = endpoint.value >= result.upper.value - pooled_tolerance(endpoint.std_error, result.upper.std_error);
    Ok(AttainmentReport {
        thetas,
        profile,
        argmax_theta,
        argmin_theta,
        max_at_endpoint,
        monotone,
        applicable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::standard_family;
    use crate::paths::simulate;

    #[test]
    fn non_monotone_payoff_has_no_extremal_price() {
        let m = MarketModel::gbm(100.0, 0.0, 0.2, 0.1, 1.0).unwrap();
        let err = extremal_price(&Payoff::straddle(100.0), &m, ExtremalSource::ClosedForm).unwrap_err();
        assert!(matches!(err, Error::NotApplicable(_)));
    }

    #[test]
    fn closed_form_rejects_custom_shape() {
        let m = MarketModel::gbm(100.0, 0.0, 0.2, 0.1, 1.0).unwrap();
        assert!(extremal_price(&Payoff::affine(0.0, 1.0), &m, ExtremalSource::ClosedForm).is_err());
    }

    #[test]
    fn family_must_be_symmetric() {
        let m = MarketModel::gbm(100.0, 0.0, 0.2, 0.1, 1.0).unwrap();
        let b = simulate(&m, m.grid(2).unwrap(), 10, 1).unwrap();
        let lopsided = vec![ThetaControl::constant(0.1, 0.1).unwrap()];
        assert!(minimax_expectation(&Payoff::call(100.0), &lopsided, &b).is_err());
        assert!(minimax_expectation(&Payoff::call(100.0), &[], &b).is_err());
    }

    #[test]
    fn degenerate_family_gives_plain_mean() {
        let m = MarketModel::gbm(100.0, 0.0, 0.2, 0.0, 1.0).unwrap();
        let b = simulate(&m, m.grid(4).unwrap(), 5000, 2).unwrap();
        let fam = standard_family(0.0, 21, 1.0).unwrap();
        let r = minimax_expectation(&Payoff::call(100.0), &fam, &b).unwrap();
        let st = b.terminal_states().unwrap();
        let plain = crate::stats::mean_and_se(st.len(), |i| (st[i] - 100.0).max(0.0));
        assert_eq!(r.upper, plain);
        assert_eq!(r.lower, plain);
    }

    #[test]
    fn fine_grid_minimum() {
        let m = MarketModel::gbm(100.0, 0.0, 0.2, 0.1, 1.0).unwrap();
        let b = simulate(&m, m.grid(2).unwrap(), 10, 1).unwrap();
        assert!(attainment_check(&Payoff::call(100.0), 10, &b, 0.1).is_err());
    }
}
