//! Certificates and their numeric verification.
//!
//! A certificate asserts `X ≼_u RHS`: for every slack `eps > 0`,
//! `E[exp(u(eps) (X - RHS))] <= exp(u(eps) eps)`, where the right-hand side
//! is a body (zero, a constant, or an independent model) plus an offset of
//! the form `constant + over_u / u(eps)`. Verification evaluates the margin
//!
//! ```text
//! margin(eps) = u(eps) (eps + constant) + over_u - log E[e^{u(eps) D}]
//! ```
//!
//! with `D = X - body`; the certificate holds exactly when the margin is
//! nonnegative for every slack. Constant scales collapse to the single
//! slack-free margin `-log E[e^{eta D}] + eta constant + over_u`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::EvalBudget;
use crate::measure::{
    EvalMethod, GridSpec, MeasureError, RandomVariableModel, ScaleClass, ScaleFunction,
};
use crate::num::{golden, xlog1_over_x};

/// Tolerance absorbing quadrature and rounding error when an exact
/// evaluation sits on the boundary: exactly-tight certificates (margin 0 in
/// exact arithmetic) must verify as holding.
pub const NUMERIC_GRACE: f64 = 1e-9;

/// Errors from certificate construction and verification.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("annealed expectation is infinite at eta = {eta} (MGF domain exceeded)")]
    MgfDomainExceeded { eta: f64 },
    #[error("models cannot be compared: {0}")]
    IncomparableModels(String),
    #[error("prerequisite certificate does not hold: {0}")]
    UncertifiedInput(String),
    #[error("eta = {eta} outside the admissible range (0, {limit})")]
    EtaOutOfRange { eta: f64, limit: f64 },
    #[error("certificate has the wrong shape: {0}")]
    WrongShape(String),
    #[error("threshold must be positive, got {a}")]
    NegativeA { a: f64 },
    #[error("delta = {delta} outside (0, 1]")]
    DeltaOutOfRange { delta: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Right-hand side body of a certificate.
///
/// An `IndependentModel` is compared through the product rule
/// `log E[e^{eta(X - Y)}] = log E[e^{eta X}] + log E[e^{-eta Y}]`; coupled
/// pairs must be expressed by putting the joint difference on the left-hand
/// side with a `Zero` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsBody {
    Zero,
    Constant(f64),
    IndependentModel(RandomVariableModel),
}

/// Deterministic offset added to the body: `constant + over_u / u(eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RhsOffset {
    pub constant: f64,
    pub over_u: f64,
}

impl RhsOffset {
    pub fn none() -> RhsOffset {
        RhsOffset { constant: 0.0, over_u: 0.0 }
    }
    pub fn constant(c: f64) -> RhsOffset {
        RhsOffset { constant: c, over_u: 0.0 }
    }
    pub fn over_u(k: f64) -> RhsOffset {
        RhsOffset { constant: 0.0, over_u: k }
    }
}

/// The full right-hand side: body plus offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertRhs {
    pub body: RhsBody,
    #[serde(default)]
    pub offset: RhsOffset,
}

impl CertRhs {
    pub fn zero() -> CertRhs {
        CertRhs { body: RhsBody::Zero, offset: RhsOffset::none() }
    }
    pub fn constant(c: f64) -> CertRhs {
        CertRhs { body: RhsBody::Constant(c), offset: RhsOffset::none() }
    }
}

/// A claimed exponential stochastic inequality `lhs ≼_scale rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsiCertificate {
    /// Short human-readable description of where the claim came from.
    pub label: String,
    pub lhs: RandomVariableModel,
    pub rhs: CertRhs,
    pub scale: ScaleFunction,
}

impl EsiCertificate {
    pub fn strong(label: impl Into<String>, lhs: RandomVariableModel, rhs: CertRhs, eta: f64) -> EsiCertificate {
        EsiCertificate { label: label.into(), lhs, rhs, scale: ScaleFunction::constant(eta) }
    }

    pub fn validate(&self) -> Result<(), VerifyError> {
        self.lhs.validate()?;
        if let RhsBody::IndependentModel(m) = &self.rhs.body {
            m.validate()?;
        }
        if let RhsBody::Constant(c) = self.rhs.body {
            if !c.is_finite() {
                return Err(VerifyError::WrongShape(format!("constant right-hand side must be finite, got {c}")));
            }
        }
        if !(self.rhs.offset.constant.is_finite() && self.rhs.offset.over_u.is_finite()) {
            return Err(VerifyError::WrongShape("certificate offset must be finite".into()));
        }
        self.scale.validate()?;
        Ok(())
    }
}

/// Outcome of a verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

/// One sampled slack with its margin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarginPoint {
    pub eps: f64,
    #[serde(with = "crate::serde_float")]
    pub margin: f64,
    pub se: f64,
}

/// Verification result: the worst margin over the slack grid, the full
/// margin curve, and the verdict.
///
/// Exact evaluations (closed form / quadrature) decide `Holds` versus
/// `Fails` with the [`NUMERIC_GRACE`] boundary tolerance. Stochastic
/// evaluations use the `k_sigma` band: margins within `k_sigma` standard
/// errors of zero are `Inconclusive`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub label: String,
    pub verdict: Verdict,
    #[serde(with = "crate::serde_float")]
    pub worst_margin: f64,
    pub worst_eps: f64,
    pub worst_se: f64,
    pub points: Vec<MarginPoint>,
    pub method: EvalMethod,
    pub k_sigma: f64,
    pub notes: Vec<String>,
}

/// Aggregated evaluation provenance across the difference model.
struct DiffEval {
    lm: f64,
    se: f64,
    stochastic: bool,
    quadrature: bool,
    sample_count: u64,
}

fn difference_log_mgf(lhs: &RandomVariableModel, body: &RhsBody, eta: f64) -> Result<DiffEval, MeasureError> {
    let l = lhs.log_mgf_se(eta)?;
    let mut out = DiffEval {
        lm: l.lm,
        se: l.se,
        stochastic: l.stochastic,
        quadrature: l.used_quadrature,
        sample_count: l.sample_count,
    };
    match body {
        RhsBody::Zero => {}
        RhsBody::Constant(y) => out.lm += -eta * y,
        RhsBody::IndependentModel(m) => {
            let r = m.log_mgf_se(-eta)?;
            out.lm += r.lm;
            out.se = (out.se * out.se + r.se * r.se).sqrt();
            out.stochastic |= r.stochastic;
            out.quadrature |= r.used_quadrature;
            out.sample_count = out.sample_count.max(r.sample_count);
        }
    }
    Ok(out)
}

/// Margin at one slack: `u (eps + constant) + over_u - log E[e^{u D}]`.
fn margin_at(cert: &EsiCertificate, eps: f64, u_eps: f64) -> Result<(MarginPoint, DiffEval), MeasureError> {
    let d = difference_log_mgf(&cert.lhs, &cert.rhs.body, u_eps)?;
    let margin = u_eps * (eps + cert.rhs.offset.constant) + cert.rhs.offset.over_u - d.lm;
    Ok((MarginPoint { eps, margin, se: d.se }, d))
}

/// Verify a certificate numerically.
///
/// Constant scales check the single slack-free margin; other scales sweep
/// the slack grid and refine around the worst point.
pub fn verify_esi(cert: &EsiCertificate, grid: &GridSpec, budget: &EvalBudget) -> Result<VerificationReport, VerifyError> {
    cert.validate()?;
    grid.validate()?;

    let mut notes: Vec<String> = Vec::new();
    let mut stochastic = false;
    let mut quadrature = false;
    let mut sample_count = 0u64;

    let points: Vec<MarginPoint> = if let Some(eta) = cert.scale.as_constant() {
        // Strong form: inf over eps of u*eps is 0, so the binding margin is
        // the eps-free one; report it at eps = 0.
        let d = difference_log_mgf(&cert.lhs, &cert.rhs.body, eta)?;
        stochastic |= d.stochastic;
        quadrature |= d.quadrature;
        sample_count = sample_count.max(d.sample_count);
        let margin = eta * cert.rhs.offset.constant + cert.rhs.offset.over_u - d.lm;
        vec![MarginPoint { eps: 0.0, margin, se: d.se }]
    } else {
        let mut pts = Vec::new();
        let base = grid.points_vec();
        for &eps in &base {
            let (p, d) = margin_at(cert, eps, cert.scale.eval(eps))?;
            stochastic |= d.stochastic;
            quadrature |= d.quadrature;
            sample_count = sample_count.max(d.sample_count);
            pts.push(p);
        }
        // Refine around the current worst slack.
        let worst_idx = worst_point(&pts);
        for eps in grid.refined_around(&base, worst_idx) {
            if pts.iter().any(|p| p.eps == eps) {
                continue;
            }
            let (p, d) = margin_at(cert, eps, cert.scale.eval(eps))?;
            stochastic |= d.stochastic;
            quadrature |= d.quadrature;
            sample_count = sample_count.max(d.sample_count);
            pts.push(p);
        }
        pts.sort_by(|x, y| x.eps.total_cmp(&y.eps));
        pts
    };

    let worst = points[worst_point(&points)];
    if worst.margin == f64::NEG_INFINITY {
        notes.push(format!(
            "MGF of the difference is infinite at eps = {} (scale weight {}); the inequality cannot hold there",
            worst.eps,
            cert.scale.eval(worst.eps.max(f64::MIN_POSITIVE))
        ));
    }

    let verdict = if stochastic {
        let band = budget.k_sigma * worst.se;
        if worst.margin >= band {
            Verdict::Holds
        } else if worst.margin <= -band {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        }
    } else if worst.margin >= -NUMERIC_GRACE {
        Verdict::Holds
    } else {
        Verdict::Fails
    };

    let method = if stochastic {
        EvalMethod::MonteCarlo { sample_count, seed: budget.seed }
    } else if quadrature {
        EvalMethod::Quadrature
    } else {
        EvalMethod::ClosedForm
    };

    Ok(VerificationReport {
        label: cert.label.clone(),
        verdict,
        worst_margin: worst.margin,
        worst_eps: worst.eps,
        worst_se: worst.se,
        points,
        method,
        k_sigma: budget.k_sigma,
        notes,
    })
}

fn worst_point(pts: &[MarginPoint]) -> usize {
    let mut idx = 0;
    for (i, p) in pts.iter().enumerate() {
        if p.margin < pts[idx].margin {
            idx = i;
        }
    }
    idx
}

/// One extracted deviation bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundEntry {
    pub delta: f64,
    /// `X <= body + bound` with probability at least `1 - delta`.
    #[serde(with = "crate::serde_float")]
    pub bound: f64,
    /// Slack attaining the bound (0 for constant scales: boundary infimum).
    pub eps_star: f64,
}

/// Deviation and in-expectation bounds extracted from a certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub label: String,
    pub scale_class: ScaleClass,
    /// `E[X] <= E[body] + expectation_bound`.
    #[serde(with = "crate::serde_float")]
    pub expectation_bound: f64,
    pub entries: Vec<BoundEntry>,
}

/// Extract high-probability and in-expectation bounds from a certificate.
///
/// For confidence `1 - delta` the bound is
/// `constant + inf_eps (eps + (over_u + log(1/delta)) / u(eps))`; constant
/// scales evaluate the infimum exactly (it is the `eps -> 0` limit), other
/// scales search the slack grid range with golden-section refinement. The
/// in-expectation bound is the same expression at `log(1/delta) = 0`.
pub fn extract_bounds(cert: &EsiCertificate, deltas: &[f64], grid: &GridSpec) -> Result<BoundReport, VerifyError> {
    cert.validate()?;
    grid.validate()?;
    for &d in deltas {
        if !(d > 0.0 && d <= 1.0) {
            return Err(VerifyError::DeltaOutOfRange { delta: d });
        }
    }
    let offset = cert.rhs.offset;
    let infimum = |w: f64| -> (f64, f64) {
        // inf over eps of eps + (over_u + w) / u(eps), with its argmin.
        let k = offset.over_u + w;
        if let Some(eta) = cert.scale.as_constant() {
            return (k / eta, 0.0);
        }
        if k == 0.0 {
            // Pure slack: the infimum is the eps -> 0 boundary value.
            return (0.0, 0.0);
        }
        let (eps, value) = golden::minimize_log(|e| e + k / cert.scale.eval(e), grid.eps_min, grid.eps_max, 1e-10);
        (value, eps)
    };

    let (exp_inf, _) = infimum(0.0);
    let entries = deltas
        .iter()
        .map(|&delta| {
            let w = (1.0 / delta).ln();
            let (inf, eps_star) = infimum(w);
            BoundEntry { delta, bound: offset.constant + inf, eps_star }
        })
        .collect();

    Ok(BoundReport {
        label: cert.label.clone(),
        scale_class: cert.scale.classify(),
        expectation_bound: offset.constant + exp_inf,
        entries,
    })
}

/// Build the exactly-tight centering certificate `X - A^eta[X] ≼_eta 0`
/// (expressed as `X ≼_eta A^eta[X]`).
pub fn annealed_center(model: &RandomVariableModel, eta: f64) -> Result<EsiCertificate, VerifyError> {
    if !(eta > 0.0) {
        return Err(VerifyError::EtaOutOfRange { eta, limit: f64::INFINITY });
    }
    let a = crate::measure::annealed_expectation(model, eta)?;
    if !a.value.is_finite() {
        return Err(VerifyError::MgfDomainExceeded { eta });
    }
    Ok(EsiCertificate::strong("annealed-center", model.clone(), CertRhs::constant(a.value), eta))
}

/// A tail bound `P(Z >= eps) <= prefactor * e^{-rate * eps}` converted to a
/// certificate constant at weight `eta`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailConversion {
    pub eta: f64,
    /// `Z ≼_eta constant`.
    pub constant: f64,
}

/// Convert an exponential tail bound into a strong certificate.
///
/// Any `eta` strictly inside `(0, rate)` works; the constant is
/// `(1/eta) log(1 + prefactor * eta / (rate - eta))`.
pub fn tail_to_esi(prefactor: f64, rate: f64, eta: f64) -> Result<TailConversion, VerifyError> {
    if !(prefactor > 0.0 && prefactor.is_finite()) {
        return Err(VerifyError::WrongShape(format!("tail prefactor must be positive and finite, got {prefactor}")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(VerifyError::WrongShape(format!("tail rate must be positive and finite, got {rate}")));
    }
    if !(eta > 0.0 && eta < rate) {
        return Err(VerifyError::EtaOutOfRange { eta, limit: rate });
    }
    Ok(TailConversion { eta, constant: (1.0 + prefactor * eta / (rate - eta)).ln() / eta })
}

impl TailConversion {
    /// Attach the conversion to a concrete model of `Z`.
    pub fn certificate(&self, model: RandomVariableModel) -> EsiCertificate {
        EsiCertificate::strong("tail-to-esi", model, CertRhs::constant(self.constant), self.eta)
    }
}

/// Bound on the expected positive part implied by a strong certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivePartBound {
    /// `E[(X - RHS)_+] <= bound = 1 / (e * eta)`.
    pub bound: f64,
    /// Exact value of `E[(X - RHS)_+]` when the right-hand side is
    /// deterministic and the model evaluates exactly.
    #[serde(with = "crate::serde_float::opt")]
    pub exact: Option<f64>,
    pub cert_verdict: Verdict,
}

/// `E[(X - RHS)_+] <= 1/(e eta)` for a holding strong certificate, from the
/// pointwise inequality `x_+ <= e^{eta x} / (e eta)`.
pub fn positive_part_bound(cert: &EsiCertificate, budget: &EvalBudget) -> Result<PositivePartBound, VerifyError> {
    cert.validate()?;
    let Some(eta) = cert.scale.as_constant() else {
        return Err(VerifyError::WrongShape(
            "positive-part extraction needs a constant scale; general scales do not fix a single weight".into(),
        ));
    };
    let report = verify_esi(cert, &GridSpec::default(), budget)?;
    if report.verdict == Verdict::Fails {
        return Err(VerifyError::UncertifiedInput(format!(
            "certificate '{}' fails with margin {}",
            cert.label, report.worst_margin
        )));
    }
    let threshold = match cert.rhs.body {
        RhsBody::Zero => Some(0.0),
        RhsBody::Constant(c) => Some(c),
        RhsBody::IndependentModel(_) => None,
    }
    .map(|c| c + cert.rhs.offset.constant + cert.rhs.offset.over_u / eta);
    let exact = match threshold {
        Some(t) => match cert.lhs.expect_fn(|x| (x - t).max(0.0), &[t]) {
            Ok(v) => Some(v),
            Err(MeasureError::Unresolvable(_)) => None,
            Err(e) => return Err(e.into()),
        },
        None => None,
    };
    Ok(PositivePartBound { bound: 1.0 / (std::f64::consts::E * eta), exact, cert_verdict: report.verdict })
}

/// Markov-type probability bound for a variable with a controlled negative
/// part.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovBound {
    pub threshold: f64,
    pub prob_negative: f64,
    /// `P(X >= a) <= mean/a + p log(1/p) / (eta a)`.
    pub refined: f64,
    /// The `p`-free relaxation `mean/a + 1/(e eta a)`.
    pub relaxed: f64,
}

/// Markov's inequality refined for variables that may be negative, using
/// the lower-tail certificate `0 ≼_eta X` (that is, `E[e^{-eta X}] <= 1`)
/// to control the negative part. `p log(1/p)` is taken as 0 at `p = 0`.
pub fn esi_markov(model: &RandomVariableModel, eta: f64, a: f64, budget: &EvalBudget) -> Result<MarkovBound, VerifyError> {
    if !(a > 0.0) {
        return Err(VerifyError::NegativeA { a });
    }
    if !(eta > 0.0) {
        return Err(VerifyError::EtaOutOfRange { eta, limit: f64::INFINITY });
    }
    model.validate()?;

    // Prerequisite: E[e^{-eta X}] <= 1.
    let lower = EsiCertificate::strong("markov-prerequisite", model.clone().negated(), CertRhs::zero(), eta);
    let report = verify_esi(&lower, &GridSpec::default(), budget)?;
    if report.verdict == Verdict::Fails {
        return Err(VerifyError::UncertifiedInput(format!(
            "E[e^(-{eta} X)] > 1 (margin {}); the negative part is not controlled at this weight",
            report.worst_margin
        )));
    }

    let moments = model.moments()?;
    let p = moments.prob_negative.ok_or_else(|| {
        MeasureError::Unresolvable("P(X < 0) has no exact evaluation for this model".into())
    })?;
    let refined = moments.mean / a + xlog1_over_x(p) / (eta * a);
    let relaxed = moments.mean / a + 1.0 / (std::f64::consts::E * eta * a);
    Ok(MarkovBound { threshold: a, prob_negative: p, refined, relaxed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> EvalBudget {
        EvalBudget::default()
    }

    #[test]
    fn annealed_center_is_exactly_tight() {
        let m = RandomVariableModel::gaussian(0.3, 1.7);
        let cert = annealed_center(&m, 0.7).unwrap();
        let r = verify_esi(&cert, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.worst_margin.abs() <= NUMERIC_GRACE, "margin {}", r.worst_margin);
        assert_eq!(r.method, EvalMethod::ClosedForm);
        // A^eta[X] for a Gaussian is mean + eta var / 2.
        match cert.rhs.body {
            RhsBody::Constant(c) => assert!((c - (0.3 + 0.35 * 1.7)).abs() < 1e-12),
            _ => panic!("expected constant rhs"),
        }
    }

    #[test]
    fn strong_failure_reports_margin() {
        let m = RandomVariableModel::gaussian(0.1, 1.0);
        let cert = EsiCertificate::strong("bad-claim", m, CertRhs::zero(), 1.0);
        let r = verify_esi(&cert, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!((r.worst_margin + 0.6).abs() < 1e-12);
    }

    #[test]
    fn linear_scale_subgaussian_holds_and_oversized_variance_fails() {
        let scale = ScaleFunction::LinearCapped { slope: 1.0, cap: f64::INFINITY };
        let good = EsiCertificate {
            label: "subgaussian".into(),
            lhs: RandomVariableModel::gaussian(0.0, 1.0),
            rhs: CertRhs::zero(),
            scale: scale.clone(),
        };
        let r = verify_esi(&good, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.worst_eps < 2e-4, "worst slack should be the grid floor, got {}", r.worst_eps);

        let bad = EsiCertificate {
            label: "oversized".into(),
            lhs: RandomVariableModel::gaussian(0.0, 2.5),
            rhs: CertRhs::zero(),
            scale,
        };
        let r = verify_esi(&bad, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        // margin(eps) = eps^2 - 1.25 eps^2, worst at the top of the grid.
        assert!((r.worst_margin + 0.25 * 1e4).abs() < 1e-6);
    }

    #[test]
    fn independent_rhs_uses_product_rule() {
        let cert = EsiCertificate::strong(
            "independent",
            RandomVariableModel::gaussian(0.0, 1.0),
            CertRhs { body: RhsBody::IndependentModel(RandomVariableModel::gaussian(1.0, 1.0)), offset: RhsOffset::none() },
            0.5,
        );
        let r = verify_esi(&cert, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        // log E[e^{eta(X-Y)}] = eta(-1) + eta^2 (1+1)/2 = -0.25.
        assert!((r.worst_margin - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stochastic_tight_margin_is_inconclusive() {
        let sample = vec![-1.0, 1.0];
        let lm = 1.0f64.cosh().ln();
        let cert = EsiCertificate::strong(
            "plug-in",
            RandomVariableModel::Empirical { sample },
            CertRhs::constant(lm),
            1.0,
        );
        let r = verify_esi(&cert, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(matches!(r.method, EvalMethod::MonteCarlo { sample_count: 2, .. }));
        assert!(r.worst_se > 0.0);
    }

    #[test]
    fn domain_violation_fails_with_note() {
        let cert = EsiCertificate::strong("beyond-domain", RandomVariableModel::exponential(1.0), CertRhs::zero(), 2.0);
        let r = verify_esi(&cert, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(r.worst_margin == f64::NEG_INFINITY);
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn strong_bounds_are_exact() {
        let cert = EsiCertificate::strong("strong", RandomVariableModel::gaussian(0.0, 1.0), CertRhs::zero(), 2.0);
        let b = extract_bounds(&cert, &[0.05, 1.0], &GridSpec::default()).unwrap();
        assert_eq!(b.scale_class, ScaleClass::Strong);
        assert!((b.entries[0].bound - (20.0f64).ln() / 2.0).abs() < 1e-15);
        assert_eq!(b.entries[0].eps_star, 0.0);
        assert_eq!(b.entries[1].bound, 0.0); // delta = 1: in-probability at no conf
        assert_eq!(b.expectation_bound, 0.0);
    }

    #[test]
    fn linear_capped_bound_matches_analytic_minimum() {
        // inf_eps eps + w/(s eps) = 2 sqrt(w/s) when the cap is not binding.
        let cert = EsiCertificate {
            label: "linear".into(),
            lhs: RandomVariableModel::gaussian(0.0, 1.0),
            rhs: CertRhs::zero(),
            scale: ScaleFunction::LinearCapped { slope: 0.5, cap: 10.0 },
        };
        let delta = 0.1f64;
        let w = (1.0 / delta).ln();
        let b = extract_bounds(&cert, &[delta], &GridSpec::default()).unwrap();
        let want = 2.0 * (w / 0.5).sqrt();
        assert!((b.entries[0].bound - want).abs() < 1e-6, "{} vs {want}", b.entries[0].bound);
        assert!((b.entries[0].eps_star - (w / 0.5).sqrt()).abs() < 1e-3);
        assert_eq!(b.expectation_bound, 0.0);
        assert!(extract_bounds(&cert, &[0.0], &GridSpec::default()).is_err());
        assert!(extract_bounds(&cert, &[1.5], &GridSpec::default()).is_err());
    }

    #[test]
    fn tail_conversion_instance() {
        // prefactor 1, rate eta, weight eta/2 gives (2/eta) log 2.
        let eta = 3.0;
        let t = tail_to_esi(1.0, eta, eta / 2.0).unwrap();
        assert!((t.constant - 2.0 / eta * 2.0f64.ln()).abs() < 1e-14);
        assert!(matches!(tail_to_esi(1.0, eta, eta), Err(VerifyError::EtaOutOfRange { .. })));
        assert!(matches!(tail_to_esi(1.0, eta, -0.1), Err(VerifyError::EtaOutOfRange { .. })));
        assert!(matches!(tail_to_esi(0.0, eta, 1.0), Err(VerifyError::WrongShape(_))));
    }

    #[test]
    fn positive_part_extraction() {
        let m = RandomVariableModel::gaussian(0.0, 1.0);
        let cert = annealed_center(&m, 1.0).unwrap();
        let b = positive_part_bound(&cert, &budget()).unwrap();
        assert!((b.bound - 1.0 / std::f64::consts::E).abs() < 1e-15);
        // E[(Z - 1/2)_+] = phi(1/2) - (1/2)(1 - Phi(1/2)).
        let phi = (-0.125f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let upper = 0.5 * libm::erfc(0.5 / std::f64::consts::SQRT_2);
        let want = phi - 0.5 * upper;
        let exact = b.exact.unwrap();
        assert!((exact - want).abs() < 1e-9, "{exact} vs {want}");
        assert!(exact <= b.bound);

        let general = EsiCertificate {
            label: "general".into(),
            lhs: RandomVariableModel::gaussian(0.0, 1.0),
            rhs: CertRhs::zero(),
            scale: ScaleFunction::LinearCapped { slope: 1.0, cap: f64::INFINITY },
        };
        assert!(matches!(positive_part_bound(&general, &budget()), Err(VerifyError::WrongShape(_))));
    }

    #[test]
    fn markov_refinement() {
        // Nonnegative variable: p = 0 and the refined bound is plain Markov.
        let e = RandomVariableModel::exponential(1.0);
        let b = esi_markov(&e, 0.5, 4.0, &budget()).unwrap();
        assert_eq!(b.prob_negative, 0.0);
        assert!((b.refined - 0.25).abs() < 1e-12);
        assert!((b.relaxed - (0.25 + 1.0 / (std::f64::consts::E * 0.5 * 4.0))).abs() < 1e-12);
        assert!(b.refined <= b.relaxed);

        // Two-point with a negative atom: prerequisite holds at eta = 1.
        let tp = RandomVariableModel::two_point(-0.5, 0.2, 2.0);
        let b = esi_markov(&tp, 1.0, 3.0, &budget()).unwrap();
        assert!((b.prob_negative - 0.2).abs() < 1e-12);
        let want = 1.5 / 3.0 + 0.2 * 5.0f64.ln() / 3.0;
        assert!((b.refined - want).abs() < 1e-12);

        // Threshold must be positive.
        assert!(matches!(esi_markov(&e, 0.5, 0.0, &budget()), Err(VerifyError::NegativeA { .. })));
        // A model with a heavy uncontrolled negative part is rejected.
        let heavy = RandomVariableModel::gaussian(-3.0, 9.0);
        assert!(matches!(esi_markov(&heavy, 1.0, 1.0, &budget()), Err(VerifyError::UncertifiedInput(_))));
    }
}
