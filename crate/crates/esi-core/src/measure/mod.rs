//! Distribution models, scale functions, and annealed expectations.
//!
//! The annealed expectation `A^eta[X] = (1/eta) log E[e^{eta X}]` is the
//! quantity every certificate in this library ultimately bounds: `X` has a
//! strong exponential certificate at weight `eta` against `Y` exactly when
//! `A^eta[X - Y] <= 0`.

pub mod model;
pub mod scale;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{AnalyticFamily, MgfDomain, Moments, RandomVariableModel, TransformOp};
pub use scale::{scale_points, GridSpec, ScaleClass, ScaleFunction};

/// Errors from model validation and numeric evaluation.
#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("eta must be positive, got {eta}")]
    NonpositiveEta { eta: f64 },
    #[error("model has no mass (empty sample, empty atom list, or zero-copy sum)")]
    EmptyModel,
    #[error("eta = {eta} is outside the MGF domain (finite up to {eta_hi})")]
    DomainViolation { eta: f64, eta_hi: f64 },
    #[error("operation requires a finite second moment")]
    InfiniteMoment,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid scale function: {0}")]
    InvalidScale(String),
    #[error("model cannot be evaluated exactly: {0}")]
    Unresolvable(String),
    #[error("integral diverges")]
    DivergentIntegral,
    #[error("numeric evaluation failed: {0}")]
    Numeric(String),
}

/// How a reported number was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EvalMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo { sample_count: u64, seed: u64 },
}

/// An annealed expectation with provenance.
///
/// `value` is `+inf` when `eta` lies outside the model's MGF domain — that
/// is a legitimate value of the functional, not an error. `standard_error`
/// is nonzero only for plug-in evaluation on empirical samples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnnealedValue {
    #[serde(with = "crate::serde_float")]
    pub value: f64,
    pub standard_error: f64,
    pub method: EvalMethod,
}

/// `A^eta[X] = (1/eta) log E[e^{eta X}]` for `eta > 0`.
pub fn annealed_expectation(model: &RandomVariableModel, eta: f64) -> Result<AnnealedValue, MeasureError> {
    if !(eta > 0.0) {
        return Err(MeasureError::NonpositiveEta { eta });
    }
    model.validate()?;
    let lm = model.log_mgf_se(eta)?;
    let method = if lm.stochastic {
        EvalMethod::MonteCarlo { sample_count: lm.sample_count, seed: 0 }
    } else if lm.used_quadrature {
        EvalMethod::Quadrature
    } else {
        EvalMethod::ClosedForm
    };
    Ok(AnnealedValue { value: lm.lm / eta, standard_error: lm.se / eta, method })
}

/// Second-order expansion residual of the MGF at weight `eta`:
/// `r(eta') = E[e^{eta X}] - 1 - eta E[X] - (eta^2 / 2) E[X^2 e^{eta' X}]`.
///
/// The exact remainder corresponds to *some* intermediate weight
/// `eta' in [0, eta]`; evaluating the residual at the two endpoints gives a
/// bracket, and a sign change (or an exact zero) witnesses that such a
/// weight exists for this model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TaylorResidual {
    pub exists_intermediate_weight: bool,
    #[serde(with = "crate::serde_float")]
    pub residual_at_zero: f64,
    #[serde(with = "crate::serde_float")]
    pub residual_at_eta: f64,
}

/// Probe the second-order MGF expansion at weight `eta`.
///
/// Requires `eta` strictly inside the MGF domain and a finite second
/// moment; fails with `DomainViolation` / `InfiniteMoment` otherwise.
pub fn extended_taylor_residual(model: &RandomVariableModel, eta: f64) -> Result<TaylorResidual, MeasureError> {
    if !(eta > 0.0) {
        return Err(MeasureError::NonpositiveEta { eta });
    }
    model.validate()?;
    let domain = model.mgf_domain()?;
    if !domain.contains(eta) {
        return Err(MeasureError::DomainViolation { eta, eta_hi: domain.eta_hi });
    }
    let moments = model.moments()?;
    if !moments.second_moment.is_finite() {
        return Err(MeasureError::InfiniteMoment);
    }
    let mgf = model.log_mgf_se(eta)?.lm.exp();
    let residual = |eta_prime: f64| -> Result<f64, MeasureError> {
        let weighted_second = if eta_prime == 0.0 {
            moments.second_moment
        } else {
            model.expect_fn(|x| x * x * (eta_prime * x).exp(), &[])?
        };
        Ok(mgf - 1.0 - eta * moments.mean - 0.5 * eta * eta * weighted_second)
    };
    let r0 = residual(0.0)?;
    let re = residual(eta)?;
    Ok(TaylorResidual {
        exists_intermediate_weight: r0 == 0.0 || re == 0.0 || (r0 < 0.0) != (re < 0.0),
        residual_at_zero: r0,
        residual_at_eta: re,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annealed_gaussian_is_closed_form() {
        let m = RandomVariableModel::gaussian(0.0, 1.0);
        let a = annealed_expectation(&m, 1.0).unwrap();
        assert!((a.value - 0.5).abs() < 1e-14);
        assert_eq!(a.method, EvalMethod::ClosedForm);
        assert_eq!(a.standard_error, 0.0);
        // Monotone in eta: A^eta[Z] = eta/2.
        let a2 = annealed_expectation(&m, 2.0).unwrap();
        assert!(a2.value > a.value);
    }

    #[test]
    fn annealed_dominates_mean() {
        for m in [
            RandomVariableModel::rademacher(),
            RandomVariableModel::exponential(3.0),
            RandomVariableModel::two_point(-2.0, 0.5, 2.0),
            RandomVariableModel::Empirical { sample: vec![-1.0, 0.5, 2.0, 0.25] },
        ] {
            let mean = m.moments().unwrap().mean;
            for &eta in &[0.1, 0.5, 1.0] {
                let a = annealed_expectation(&m, eta).unwrap();
                assert!(
                    a.value >= mean - 1e-12,
                    "annealed {} at eta={eta} fell below mean {mean}",
                    a.value
                );
            }
        }
    }

    #[test]
    fn annealed_outside_domain_is_infinite_not_error() {
        let m = RandomVariableModel::exponential(1.0);
        let a = annealed_expectation(&m, 2.0).unwrap();
        assert!(a.value.is_infinite() && a.value > 0.0);
        assert!(annealed_expectation(&m, 0.0).is_err());
        assert!(annealed_expectation(&m, -1.0).is_err());
    }

    #[test]
    fn pareto_annealed_matches_logarithmic_envelope() {
        // E[e^{1·U}] <= 1 + e^{x_nu} across the whole family, so
        // A^1[U] <= log(1 + e^{x_nu}).
        for &nu in &[2.6, 2.75, 2.9] {
            let m = RandomVariableModel::pareto_left_atom(nu);
            let a = annealed_expectation(&m, 1.0).unwrap();
            let cap = (1.0 + AnalyticFamily::pareto_atom_location(nu).exp()).ln();
            assert!(a.value <= cap, "nu={nu}: {} > {cap}", a.value);
            assert!(a.value > 0.0);
            assert_eq!(a.method, EvalMethod::Quadrature);
        }
    }

    #[test]
    fn taylor_residual_brackets_for_gaussian_and_two_point() {
        // Frozen anchors from the closed-form weighted second moments:
        // Gaussian(0,1), eta = 0.5, E[X^2 e^{sX}] = e^{s^2/2}(1 + s^2):
        //   r(0)   = e^{1/8} - 1 - 1/8
        //   r(eta) = e^{1/8} - 1 - (1/8) e^{1/8} (5/4)
        let g = RandomVariableModel::gaussian(0.0, 1.0);
        let t = extended_taylor_residual(&g, 0.5).unwrap();
        assert!((t.residual_at_zero - 8.148_453_066_826_316e-3).abs() < 1e-10);
        assert!((t.residual_at_eta + 4.390_599_272_486_53e-2).abs() < 1e-9);
        assert!(t.exists_intermediate_weight);

        let tp = RandomVariableModel::two_point(-2.0, 0.5, 2.0);
        let t2 = extended_taylor_residual(&tp, 0.25).unwrap();
        assert!((t2.residual_at_zero - 2.625_965_206_380_785e-3).abs() < 1e-12);
        assert!((t2.residual_at_eta + 1.332_728_044_441_681e-2).abs() < 1e-12);
        assert!(t2.exists_intermediate_weight);
    }

    #[test]
    fn taylor_residual_preconditions() {
        let e = RandomVariableModel::exponential(1.0);
        assert!(matches!(
            extended_taylor_residual(&e, 1.5),
            Err(MeasureError::DomainViolation { .. })
        ));
        let p = RandomVariableModel::pareto_left_atom(2.75);
        assert!(matches!(extended_taylor_residual(&p, 1.0), Err(MeasureError::InfiniteMoment)));
    }

    #[test]
    fn eval_method_serializes_with_kind_tag() {
        let m = EvalMethod::MonteCarlo { sample_count: 100, seed: 7 };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"monte_carlo\""), "{s}");
        let a = AnnealedValue { value: f64::INFINITY, standard_error: 0.0, method: EvalMethod::ClosedForm };
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.contains("\"inf\""), "{s}");
    }
}
