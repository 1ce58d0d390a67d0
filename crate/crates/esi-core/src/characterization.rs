//! Conversions among the equivalent descriptions of an ESI family.
//!
//! A family certified against any scale function can be re-expressed as a
//! uniform strong certificate for its centered members, as a `(c, v)`
//! subgamma right-tail envelope, as a linear-capped scale, and as an
//! exponential tail bound — and each description converts back. This module
//! implements the individual conversions and
//! [`characterization_roundtrip`], which chains them and re-verifies every
//! leg numerically.
//!
//! The subgamma envelope is the annealed-expectation bound
//! `A^eta[X - E X] <= (1/2) v eta / (1 - c eta)` for `0 <= c eta < 1`;
//! `c = 0` is the subGaussian limit.

use serde::{Deserialize, Serialize};

use crate::exec::EvalBudget;
use crate::measure::model::Moments;
use crate::measure::{annealed_expectation, GridSpec, MeasureError, RandomVariableModel, ScaleFunction};
use crate::verify::{tail_to_esi, verify_esi, CertRhs, EsiCertificate, Verdict, VerifyError, NUMERIC_GRACE};

/// Errors for the conversion operations.
#[derive(Debug, thiserror::Error)]
pub enum CharacterizationError {
    /// The variance proxy is unbounded, so no subgamma fit exists. This is
    /// not a numerical failure: a family whose members have infinite second
    /// moments genuinely has no `(c, v)` envelope.
    #[error("infinite variance: the subgamma fit needs a finite second moment")]
    InfiniteVariance,
    /// A member failed its entry certificate, so there is nothing to
    /// convert.
    #[error("not an ESI family: {0}")]
    NotAnEsiFamily(String),
    /// A family must contain at least one member.
    #[error("members: empty")]
    EmptyFamily,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// Parameters of a `(c, v)` subgamma right tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgammaParams {
    /// Tail heaviness; `0` is the subGaussian limit.
    pub c: f64,
    /// Variance proxy; strictly positive.
    pub v: f64,
}

impl SubgammaParams {
    pub fn new(c: f64, v: f64) -> Result<SubgammaParams, CharacterizationError> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(CharacterizationError::InvalidParams(format!("subgamma c must be finite and nonnegative, got {c}")));
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(CharacterizationError::InvalidParams(format!("subgamma v must be finite and positive, got {v}")));
        }
        Ok(SubgammaParams { c, v })
    }

    /// The annealed-expectation envelope `(1/2) v eta / (1 - c eta)`.
    ///
    /// Returns `+inf` at and beyond the pole `c eta = 1`, where the
    /// envelope imposes no constraint.
    pub fn envelope(&self, eta: f64) -> f64 {
        if !(eta >= 0.0) {
            return f64::NAN;
        }
        if self.c * eta >= 1.0 {
            return f64::INFINITY;
        }
        0.5 * self.v * eta / (1.0 - self.c * eta)
    }
}

/// A family of models with cached moments and the two structural flags the
/// characterization needs: `regular` (uniformly bounded second moments) and
/// `subcentered` (all means nonpositive).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    pub members: Vec<RandomVariableModel>,
    pub moments: Vec<Moments>,
    pub regular: bool,
    pub subcentered: bool,
}

impl FamilySpec {
    pub fn new(members: Vec<RandomVariableModel>) -> Result<FamilySpec, CharacterizationError> {
        if members.is_empty() {
            return Err(CharacterizationError::EmptyFamily);
        }
        let mut moments = Vec::with_capacity(members.len());
        for (i, m) in members.iter().enumerate() {
            m.validate()?;
            let mom = m.moments()?;
            if !mom.mean.is_finite() {
                return Err(CharacterizationError::InvalidParams(format!(
                    "member {i} has non-finite mean {}; centering is undefined",
                    mom.mean
                )));
            }
            moments.push(mom);
        }
        let regular = moments.iter().all(|m| m.second_moment.is_finite());
        let subcentered = moments.iter().all(|m| m.mean <= 0.0);
        Ok(FamilySpec { members, moments, regular, subcentered })
    }

    /// Largest member variance (`+inf` when the family is not regular).
    pub fn sup_variance(&self) -> f64 {
        self.moments.iter().map(|m| m.variance).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest member mean.
    pub fn min_mean(&self) -> f64 {
        self.moments.iter().map(|m| m.mean).fold(f64::INFINITY, f64::min)
    }

    /// Member `i` shifted to mean zero.
    pub fn centered_member(&self, i: usize) -> RandomVariableModel {
        self.members[i].clone().shifted(-self.moments[i].mean)
    }
}

/// Fit subgamma parameters from a uniform strong certificate
/// `X - E[X] esi_{eta_star} cert_constant`.
///
/// Returns `(c, v) = (1/eta_star, variance + 2 e^{eta_star cert_constant})`,
/// valid for all `0 < eta <= eta_star`. `variance` must be the (supremum of
/// the) member variance(s); if it is infinite the fit does not exist and
/// the call fails with [`CharacterizationError::InfiniteVariance`].
pub fn fit_subgamma_from_strong(variance: f64, eta_star: f64, cert_constant: f64) -> Result<SubgammaParams, CharacterizationError> {
    if !(eta_star > 0.0 && eta_star.is_finite()) {
        return Err(CharacterizationError::InvalidParams(format!("eta_star must be finite and positive, got {eta_star}")));
    }
    if !cert_constant.is_finite() {
        return Err(CharacterizationError::InvalidParams(format!("certificate constant must be finite, got {cert_constant}")));
    }
    if variance.is_nan() || variance < 0.0 {
        return Err(CharacterizationError::InvalidParams(format!("variance must be nonnegative, got {variance}")));
    }
    if !variance.is_finite() {
        return Err(CharacterizationError::InfiniteVariance);
    }
    SubgammaParams::new(1.0 / eta_star, variance + 2.0 * (eta_star * cert_constant).exp())
}

/// Map subgamma parameters to the linear-capped scale
/// `h(eps) = eps/(2v) ∧ 1/(2c)` under which the centered members satisfy a
/// general ESI against zero.
///
/// `c = 0` maps to an uncapped linear scale (the cap is the explicit `+inf`
/// sentinel, never a large float).
pub fn subgamma_to_scale(params: &SubgammaParams) -> ScaleFunction {
    let cap = if params.c == 0.0 { f64::INFINITY } else { 1.0 / (2.0 * params.c) };
    ScaleFunction::LinearCapped { slope: 1.0 / (2.0 * params.v), cap }
}

/// High-probability tail radius `sqrt(2 v log(1/delta)) + c log(1/delta)`:
/// a `(c, v)`-subgamma variable exceeds it with probability at most
/// `delta`.
///
/// # Panics
/// If `delta` is outside `(0, 1]`.
pub fn subgamma_tail_bound(params: &SubgammaParams, delta: f64) -> f64 {
    assert!(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1], got {delta}");
    let w = -delta.ln();
    (2.0 * params.v * w).sqrt() + params.c * w
}

/// Companion diagnostic for the infinite-variance counterexample: the
/// ratio `(E[e^{eta X}] - 1) / eta^2` along an `eta` grid.
///
/// For a centered model with a `(c, v)`-subgamma right tail the ratio stays
/// bounded (it tends to `v/2` as `eta` decreases); divergence along a
/// decreasing grid certifies that no subgamma fit exists even when every
/// individual MGF value is finite.
pub fn subgamma_divergence_probe(model: &RandomVariableModel, etas: &[f64]) -> Result<Vec<(f64, f64)>, CharacterizationError> {
    let mut out = Vec::with_capacity(etas.len());
    for &eta in etas {
        let a = annealed_expectation(model, eta)?;
        let ratio = (eta * a.value).exp_m1() / (eta * eta);
        out.push((eta, ratio));
    }
    Ok(out)
}

/// One sampled slack of the subgamma envelope.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub eta: f64,
    /// `envelope(eta) - A^eta[X - E X]`; nonnegative when the fit is valid.
    #[serde(with = "crate::serde_float")]
    pub margin: f64,
    pub se: f64,
}

/// Margin profile of the subgamma envelope for one model: the slack
/// `(1/2) v eta / (1 - c eta) - A^eta[X - E X]` on an evenly spaced `eta`
/// grid of `(0, eta_star]`.
pub fn subgamma_margin_profile(
    model: &RandomVariableModel,
    params: &SubgammaParams,
    eta_star: f64,
    points: u32,
) -> Result<Vec<EnvelopePoint>, CharacterizationError> {
    if !(eta_star > 0.0 && eta_star.is_finite()) {
        return Err(CharacterizationError::InvalidParams(format!("eta_star must be finite and positive, got {eta_star}")));
    }
    if points == 0 {
        return Err(CharacterizationError::InvalidParams("margin profile needs at least one grid point".into()));
    }
    let mean = model.moments()?.mean;
    if !mean.is_finite() {
        return Err(CharacterizationError::InvalidParams(format!("model has non-finite mean {mean}; centering is undefined")));
    }
    let centered = model.clone().shifted(-mean);
    let mut out = Vec::with_capacity(points as usize);
    for j in 1..=points {
        let eta = eta_star * j as f64 / points as f64;
        let a = annealed_expectation(&centered, eta)?;
        out.push(EnvelopePoint { eta, margin: params.envelope(eta) - a.value, se: a.standard_error });
    }
    Ok(out)
}

/// Status of one leg of the roundtrip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegStatus {
    Passed,
    Failed,
    /// Not runnable because an earlier leg failed to produce its output.
    Skipped,
}

/// One leg of the roundtrip with a human-readable outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LegReport {
    pub name: String,
    pub status: LegStatus,
    pub detail: String,
}

/// Configuration for [`characterization_roundtrip`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripConfig {
    /// The certified entry scale: every member satisfies `X_f esi_u 0`.
    pub scale: ScaleFunction,
    pub grid: GridSpec,
    pub budget: EvalBudget,
    /// Quantile levels for the tail-bound leg.
    pub deltas: Vec<f64>,
    /// Size of the `eta` grid for the subgamma envelope leg.
    pub envelope_points: u32,
}

impl RoundtripConfig {
    pub fn new(scale: ScaleFunction) -> RoundtripConfig {
        RoundtripConfig {
            scale,
            grid: GridSpec::default(),
            budget: EvalBudget::default(),
            deltas: vec![0.1, 0.01],
            envelope_points: 64,
        }
    }
}

/// Result of the full conversion cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripReport {
    /// Strong-certificate weight extracted from the entry scale.
    pub eta_star: f64,
    /// Strong-certificate constant for the centered members.
    pub c_star: f64,
    /// Subgamma fit, when the family is regular.
    pub params: Option<SubgammaParams>,
    /// Linear-capped scale derived from the fit.
    pub derived_scale: Option<ScaleFunction>,
    pub legs: Vec<LegReport>,
    /// True when every leg passed.
    pub passed: bool,
}

/// Run the conversion cycle on a certified family and re-verify each leg.
///
/// Starting from per-member certificates against `config.scale`, the cycle
/// (1) extracts a uniform strong certificate for the centered members,
/// (2) fits subgamma parameters, (3) maps them to a linear-capped scale and
/// re-verifies every member against it, and (4) closes the loop with the
/// quantile bound and the exponential-tail conversion.
///
/// The strong-certificate extraction picks the smallest grid slack `eps`
/// whose scale value reaches half of the scale's value at the top of the
/// grid; that keeps the constant small while keeping the weight bounded
/// away from zero. The cycle fails (with the leg marked) rather than errors
/// when a conversion's premise is genuinely violated — an irregular family
/// fails the subgamma leg exactly as it should.
///
/// Errors with [`CharacterizationError::NotAnEsiFamily`] when a member
/// fails the entry verification.
pub fn characterization_roundtrip(family: &FamilySpec, config: &RoundtripConfig) -> Result<RoundtripReport, CharacterizationError> {
    config.scale.validate()?;
    config.grid.validate()?;
    for &d in &config.deltas {
        if !(d > 0.0 && d <= 1.0) {
            return Err(CharacterizationError::InvalidParams(format!("quantile delta must lie in (0, 1], got {d}")));
        }
    }

    // Entry: every member must carry a valid certificate against the scale.
    for (i, m) in family.members.iter().enumerate() {
        let cert = EsiCertificate {
            label: format!("member {i} entry"),
            lhs: m.clone(),
            rhs: CertRhs::zero(),
            scale: config.scale.clone(),
        };
        let rep = verify_esi(&cert, &config.grid, &config.budget)?;
        if rep.verdict != Verdict::Holds {
            return Err(CharacterizationError::NotAnEsiFamily(format!(
                "member {i} entry verification: {:?} (worst margin {:.3e} at eps {:.3e})",
                rep.verdict, rep.worst_margin, rep.worst_eps
            )));
        }
    }

    let mut legs: Vec<LegReport> = Vec::new();
    let push = |legs: &mut Vec<LegReport>, name: &str, status: LegStatus, detail: String| {
        legs.push(LegReport { name: name.to_string(), status, detail });
    };

    // Leg 1: general scale -> uniform strong certificate for the centered
    // members. Pick the smallest grid eps whose scale value reaches half
    // the top-of-grid value; the certificate weight is the scale there and
    // the constant absorbs the worst centering shift.
    let pts = config.grid.points_vec();
    let u_top = config.scale.eval(*pts.last().expect("grid is nonempty"));
    let c_dd = pts
        .iter()
        .copied()
        .find(|&e| config.scale.eval(e) >= 0.5 * u_top)
        .unwrap_or(*pts.last().expect("grid is nonempty"));
    let eta_star = config.scale.eval(c_dd);
    let c_prime = -family.min_mean();
    let c_star = c_dd + c_prime;

    let mut leg_ok = true;
    let mut worst = f64::INFINITY;
    for i in 0..family.members.len() {
        let cert = EsiCertificate::strong(
            format!("member {i} centered strong"),
            family.centered_member(i),
            CertRhs::constant(c_star),
            eta_star,
        );
        let rep = verify_esi(&cert, &config.grid, &config.budget)?;
        worst = worst.min(rep.worst_margin);
        leg_ok &= rep.verdict == Verdict::Holds;
    }
    push(
        &mut legs,
        "general to strong",
        if leg_ok { LegStatus::Passed } else { LegStatus::Failed },
        format!("eta_star = {eta_star:.6e}, c_star = {c_star:.6e}, worst margin {worst:.3e}"),
    );

    // Leg 2: strong certificate -> subgamma fit. Needs the family regular;
    // an unbounded variance proxy is a genuine counterexample, not an
    // error, so it fails the leg and skips the rest of the cycle.
    let fit = fit_subgamma_from_strong(family.sup_variance(), eta_star, c_star);
    let params = match fit {
        Ok(p) => {
            let mut leg_ok = true;
            let mut worst = f64::INFINITY;
            for m in &family.members {
                for pt in subgamma_margin_profile(m, &p, eta_star, config.envelope_points)? {
                    let tol = NUMERIC_GRACE + config.budget.k_sigma * pt.se;
                    if pt.margin.is_finite() {
                        worst = worst.min(pt.margin);
                    }
                    leg_ok &= pt.margin >= -tol;
                }
            }
            push(
                &mut legs,
                "strong to subgamma",
                if leg_ok { LegStatus::Passed } else { LegStatus::Failed },
                format!("(c, v) = ({:.6e}, {:.6e}), worst envelope margin {worst:.3e}", p.c, p.v),
            );
            Some(p)
        }
        Err(CharacterizationError::InfiniteVariance) => {
            push(
                &mut legs,
                "strong to subgamma",
                LegStatus::Failed,
                "family is not regular: supremum of second moments is infinite".to_string(),
            );
            None
        }
        Err(e) => return Err(e),
    };

    // Legs 3-6 need the fit.
    let derived_scale = params.map(|p| subgamma_to_scale(&p));
    match (params, &derived_scale) {
        (Some(p), Some(h)) => {
            // Leg 3: subgamma -> linear-capped scale. The defining
            // inequality: at eta = h(eps) the envelope is at most eps.
            let mut leg_ok = true;
            let mut worst = f64::INFINITY;
            for &eps in &pts {
                let eta = h.eval(eps);
                let env = p.envelope(eta);
                if env.is_finite() {
                    worst = worst.min(eps - env);
                }
                leg_ok &= env <= eps + NUMERIC_GRACE;
            }
            push(
                &mut legs,
                "subgamma to scale",
                if leg_ok { LegStatus::Passed } else { LegStatus::Failed },
                format!("h = {h:?}, worst envelope slack {worst:.3e}"),
            );

            // Leg 4: the derived scale closes the loop — every centered
            // member satisfies a general ESI against zero under h.
            let mut leg_ok = true;
            let mut worst = f64::INFINITY;
            for i in 0..family.members.len() {
                let cert = EsiCertificate {
                    label: format!("member {i} under derived scale"),
                    lhs: family.centered_member(i),
                    rhs: CertRhs::zero(),
                    scale: h.clone(),
                };
                let rep = verify_esi(&cert, &config.grid, &config.budget)?;
                worst = worst.min(rep.worst_margin);
                leg_ok &= rep.verdict == Verdict::Holds;
            }
            push(
                &mut legs,
                "scale closes the loop",
                if leg_ok { LegStatus::Passed } else { LegStatus::Failed },
                format!("worst margin {worst:.3e}"),
            );

            // Leg 5: quantile form. Each centered member exceeds the
            // subgamma tail radius with probability at most delta.
            let mut leg_ok = true;
            let mut detail = String::new();
            for &delta in &config.deltas {
                let t = subgamma_tail_bound(&p, delta);
                let mut worst_p: f64 = 0.0;
                for i in 0..family.members.len() {
                    let (below, at) = family.centered_member(i).cdf_parts(t)?;
                    worst_p = worst_p.max((1.0 - below - at).max(0.0));
                }
                leg_ok &= worst_p <= delta + NUMERIC_GRACE;
                detail.push_str(&format!("delta {delta:.3e}: radius {t:.4e}, worst tail prob {worst_p:.4e}; "));
            }
            push(&mut legs, "quantile bound", if leg_ok { LegStatus::Passed } else { LegStatus::Failed }, detail);

            // Leg 6: exponential-tail conversion. The strong certificate
            // gives P(X - E X >= t) <= e^{eta_star c_star} e^{-eta_star t}
            // for every t; converting that tail back at weight eta_star/2
            // must yield a certificate that re-verifies.
            let conv = tail_to_esi((eta_star * c_star).exp(), eta_star, 0.5 * eta_star)?;
            let mut leg_ok = true;
            let mut worst = f64::INFINITY;
            for i in 0..family.members.len() {
                let cert = conv.certificate(family.centered_member(i));
                let rep = verify_esi(&cert, &config.grid, &config.budget)?;
                worst = worst.min(rep.worst_margin);
                leg_ok &= rep.verdict == Verdict::Holds;
            }
            push(
                &mut legs,
                "tail fit",
                if leg_ok { LegStatus::Passed } else { LegStatus::Failed },
                format!("constant {:.6e} at eta {:.6e}, worst margin {worst:.3e}", conv.constant, conv.eta),
            );
        }
        _ => {
            for name in ["subgamma to scale", "scale closes the loop", "quantile bound", "tail fit"] {
                push(&mut legs, name, LegStatus::Skipped, "no subgamma fit available".to_string());
            }
        }
    }

    let passed = legs.iter().all(|l| l.status == LegStatus::Passed);
    Ok(RoundtripReport { eta_star, c_star, params, derived_scale, legs, passed })
}
