//! Composition laws for certified inequalities.
//!
//! Certified claims compose: sums of certified variables are certified at a
//! combined weight, chains of pairwise claims collapse to a single claim,
//! and a chained high-probability bound beats the union bound by an
//! explicit logarithmic saving. This module also converts a power scale
//! `u(eps) = C* eps^gamma ∧ eta*` to its equivalent weight-indexed form
//! `X esi_eta C° eta^{1/gamma}` and optimizes the high-probability bound
//! over the slack to expose convergence-rate exponents.
//!
//! Derived certificates are labeled `derived:` and are not re-verified by
//! construction — the composition rules are identities, and re-running
//! [`verify_esi`](crate::verify::verify_esi) on the output is an optional
//! oracle cross-check for analytic inputs. Where a derived certificate
//! must carry a concrete left-hand model, sums are instantiated under the
//! independent coupling: the derived *scale* is valid for any coupling the
//! mode admits, while the concrete model makes the optional numeric check
//! possible.

use serde::{Deserialize, Serialize};

use crate::measure::{MeasureError, RandomVariableModel, ScaleFunction, TransformOp};
use crate::num::{golden, ols_slope};
use crate::verify::{CertRhs, EsiCertificate, RhsBody, RhsOffset, VerifyError};

/// Errors for composition operations.
#[derive(Debug, thiserror::Error)]
pub enum AlgebraError {
    #[error("composition needs at least one certificate")]
    EmptyInput,
    /// The dependent-sum rule is stated for constant weights only.
    #[error("dependent composition needs constant scales: {0}")]
    MixedScalesUnderDependentMode(String),
    #[error("this operation needs constant scales: {0}")]
    NonConstantScale(String),
    /// iid averaging needs identical certificates across inputs.
    #[error("iid average needs identical inputs: {0}")]
    IidInputMismatch(String),
    #[error("composition inputs must claim `lhs esi 0`: {0}")]
    NonzeroRhs(String),
    /// The middle of a transitivity chain must match.
    #[error("chain middle mismatch: {0}")]
    ChainMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// How a set of certified variables is allowed to interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    /// No assumption on the joint law; weights combine harmonically.
    Dependent,
    /// Negative association or independence; the weakest weight survives.
    NegativelyAssociatedOrIndependent,
    /// Independent copies of one certified claim, averaged; the scale
    /// multiplies by the copy count.
    IidAverage,
}

fn require_zero_rhs(certs: &[EsiCertificate]) -> Result<(), AlgebraError> {
    for (i, c) in certs.iter().enumerate() {
        let zero_body = matches!(c.rhs.body, RhsBody::Zero);
        if !zero_body || c.rhs.offset.constant != 0.0 || c.rhs.offset.over_u != 0.0 {
            return Err(AlgebraError::NonzeroRhs(format!("certificate {i} ({}) has a nonzero right-hand side", c.label)));
        }
    }
    Ok(())
}

/// Sum model for the derived certificate: `SumOfIidCopies` when every input
/// shares one model, otherwise a fold of independent additions.
fn sum_model(models: &[&RandomVariableModel]) -> RandomVariableModel {
    let first = models[0];
    if models.iter().all(|m| *m == first) {
        return first.clone().transformed(TransformOp::SumOfIidCopies { n: models.len() as u32 });
    }
    let mut acc = first.clone();
    for m in &models[1..] {
        acc = acc.plus_independent((*m).clone());
    }
    acc
}

/// Combine per-variable certificates `X_i esi 0` into one certificate for
/// their sum (or average, under [`CompositionMode::IidAverage`]).
///
/// * `Dependent`: constant weights only; the sum is certified at the
///   harmonic combination `eta = (sum_i 1/eta_i)^{-1}` under *any* joint
///   law of the inputs.
/// * `NegativelyAssociatedOrIndependent`: constant weights only; the sum
///   is certified at `min_i eta_i`.
/// * `IidAverage`: identical certificates; the average of `n` independent
///   copies is certified against the scale `n * u`.
pub fn combine(certs: &[EsiCertificate], mode: CompositionMode) -> Result<EsiCertificate, AlgebraError> {
    if certs.is_empty() {
        return Err(AlgebraError::EmptyInput);
    }
    for c in certs {
        c.validate()?;
    }
    require_zero_rhs(certs)?;
    let models: Vec<&RandomVariableModel> = certs.iter().map(|c| &c.lhs).collect();
    match mode {
        CompositionMode::Dependent => {
            let mut inv_sum = 0.0;
            for (i, c) in certs.iter().enumerate() {
                let eta = c.scale.as_constant().ok_or_else(|| {
                    AlgebraError::MixedScalesUnderDependentMode(format!(
                        "certificate {i} ({}) has scale {:?}",
                        c.label, c.scale
                    ))
                })?;
                inv_sum += 1.0 / eta;
            }
            Ok(EsiCertificate::strong(
                format!("derived: dependent sum of {} certificates", certs.len()),
                sum_model(&models),
                CertRhs::zero(),
                1.0 / inv_sum,
            ))
        }
        CompositionMode::NegativelyAssociatedOrIndependent => {
            let mut eta_min = f64::INFINITY;
            for (i, c) in certs.iter().enumerate() {
                let eta = c.scale.as_constant().ok_or_else(|| {
                    AlgebraError::NonConstantScale(format!("certificate {i} ({}) has scale {:?}", c.label, c.scale))
                })?;
                eta_min = eta_min.min(eta);
            }
            Ok(EsiCertificate::strong(
                format!("derived: independent sum of {} certificates", certs.len()),
                sum_model(&models),
                CertRhs::zero(),
                eta_min,
            ))
        }
        CompositionMode::IidAverage => {
            let first = &certs[0];
            for (i, c) in certs.iter().enumerate().skip(1) {
                if c.scale != first.scale {
                    return Err(AlgebraError::IidInputMismatch(format!(
                        "certificate {i} scale {:?} differs from certificate 0 scale {:?}",
                        c.scale, first.scale
                    )));
                }
                if c.lhs != first.lhs {
                    return Err(AlgebraError::IidInputMismatch(format!(
                        "certificate {i} model differs from certificate 0"
                    )));
                }
            }
            let n = certs.len() as u32;
            let mean_model = first
                .lhs
                .clone()
                .transformed(TransformOp::SumOfIidCopies { n })
                .transformed(TransformOp::AffineScale { a: 1.0 / n as f64, b: 0.0 });
            Ok(EsiCertificate {
                label: format!("derived: average of {n} iid certificates"),
                lhs: mean_model,
                rhs: CertRhs::zero(),
                scale: first.scale.scaled(n as f64),
            })
        }
    }
}

/// The model a certificate's right-hand side denotes, with constant-scale
/// offsets folded in (`over_u` at weight `eta` is the constant `over_u /
/// eta`).
fn rhs_as_model(rhs: &CertRhs, eta: f64) -> RandomVariableModel {
    let shift = rhs.offset.constant + if rhs.offset.over_u == 0.0 { 0.0 } else { rhs.offset.over_u / eta };
    match &rhs.body {
        RhsBody::Zero => RandomVariableModel::constant(shift),
        RhsBody::Constant(c) => RandomVariableModel::constant(c + shift),
        RhsBody::IndependentModel(m) => {
            if shift == 0.0 {
                m.clone()
            } else {
                m.clone().shifted(shift)
            }
        }
    }
}

/// Chain `X esi_{eta1} Y` and `Y esi_{eta2} Z` into `X esi Z`.
///
/// The combined weight is harmonic, `(1/eta1 + 1/eta2)^{-1}`, or
/// `min(eta1, eta2)` when the two differences are negatively associated
/// (`associated = true`). A scale `Constant { eta: +inf }` is accepted as
/// the almost-sure-domination sentinel: it contributes nothing to the
/// harmonic sum, and a chain of two such links keeps the sentinel (the
/// result then states an almost-sure inequality and is not numerically
/// verifiable).
///
/// Both middles must denote the same model; offsets on `c1`'s right-hand
/// side are folded into constants at `eta1` before comparing.
pub fn chain(c1: &EsiCertificate, c2: &EsiCertificate, associated: bool) -> Result<EsiCertificate, AlgebraError> {
    let eta1 = c1
        .scale
        .as_constant()
        .ok_or_else(|| AlgebraError::NonConstantScale(format!("first link has scale {:?}", c1.scale)))?;
    let eta2 = c2
        .scale
        .as_constant()
        .ok_or_else(|| AlgebraError::NonConstantScale(format!("second link has scale {:?}", c2.scale)))?;
    if !(eta1 > 0.0) || !(eta2 > 0.0) {
        return Err(AlgebraError::InvalidParams(format!("chain weights must be positive, got {eta1} and {eta2}")));
    }
    let middle = rhs_as_model(&c1.rhs, eta1);
    if middle != c2.lhs {
        return Err(AlgebraError::ChainMismatch(format!(
            "first link's right-hand side {middle:?} is not the second link's left-hand side {:?}",
            c2.lhs
        )));
    }
    let eta = if associated { eta1.min(eta2) } else { 1.0 / (1.0 / eta1 + 1.0 / eta2) };
    // Fold c2's over_u into a constant at eta2 so the claim survives the
    // weight change.
    let offset_constant = c2.rhs.offset.constant + if c2.rhs.offset.over_u == 0.0 { 0.0 } else { c2.rhs.offset.over_u / eta2 };
    Ok(EsiCertificate {
        label: format!("derived: chain of `{}` and `{}`", c1.label, c2.label),
        lhs: c1.lhs.clone(),
        rhs: CertRhs { body: c2.rhs.body.clone(), offset: RhsOffset::constant(offset_constant) },
        scale: ScaleFunction::Constant { eta },
    })
}

/// High-probability radii of a `k`-link chain versus the union bound over
/// the same links.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UnionBoundComparison {
    /// `(k/eta) log(1/delta)`: chain first, apply the tail bound once.
    pub chained_bound: f64,
    /// `(k/eta) log(k/delta)`: per-link tail bounds at `delta/k` summed.
    pub union_bound: f64,
    /// `union_bound - chained_bound = (k/eta) log k`, computed in the
    /// factored form so it is exact.
    pub saving: f64,
}

/// Compare the chained high-probability bound against the union bound for
/// `k` links of weight `eta` at confidence `delta`.
pub fn compare_union_bound(eta: f64, k_links: u32, delta: f64) -> Result<UnionBoundComparison, AlgebraError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(AlgebraError::InvalidParams(format!("eta must be finite and positive, got {eta}")));
    }
    if k_links < 2 {
        return Err(AlgebraError::InvalidParams(format!("the comparison needs at least 2 links, got {k_links}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(AlgebraError::InvalidParams(format!("delta must lie in (0, 1], got {delta}")));
    }
    let k = k_links as f64;
    let w = -delta.ln();
    Ok(UnionBoundComparison {
        chained_bound: k / eta * w,
        union_bound: k / eta * (k.ln() + w),
        saving: k / eta * k.ln(),
    })
}

/// The weight-indexed form of a power scale: `X esi_eta C° eta^{1/gamma}`
/// for `0 < eta <= eta°`, equivalent to `X esi_u 0` with
/// `u(eps) = C* eps^gamma ∧ eta*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaStrongForm {
    pub eta_circ: f64,
    /// `C* ^ {-1/gamma}`; unused (zero) when `gamma = 0`.
    pub c_circ: f64,
    pub gamma: f64,
}

impl GammaStrongForm {
    /// The offset `C° eta^{1/gamma}` at weight `eta`, with the `gamma = 0`
    /// convention `eta^{1/0} := 0` (the offset vanishes and the claim is a
    /// strong ESI).
    pub fn offset(&self, eta: f64) -> f64 {
        if self.gamma == 0.0 {
            0.0
        } else {
            self.c_circ * eta.powf(1.0 / self.gamma)
        }
    }

    /// Recover `(c_star, gamma, eta_star)`; `None` for `gamma = 0`, where
    /// the coefficient is not identifiable from the vanished offset.
    pub fn invert(&self) -> Option<(f64, f64, f64)> {
        if self.gamma == 0.0 {
            return None;
        }
        Some((self.c_circ.powf(-self.gamma), self.gamma, self.eta_circ))
    }
}

/// Convert a power-scale family `u(eps) = C* eps^gamma ∧ eta*` to its
/// weight-indexed form.
///
/// Back-substituting `eta = C* eps^gamma` gives `eps = (eta/C*)^{1/gamma} =
/// C*^{-1/gamma} eta^{1/gamma}`, so `C° = C*^{-1/gamma}` and `eta° = eta*`.
/// `gamma = 0` routes to the convention `eta^{1/0} := 0`: the offset is
/// identically zero and the form is a strong ESI at `eta*`.
pub fn gamma_strong_convert(c_star: f64, gamma: f64, eta_star: f64) -> Result<GammaStrongForm, AlgebraError> {
    if !(c_star > 0.0 && c_star.is_finite()) {
        return Err(AlgebraError::InvalidParams(format!("C* must be finite and positive, got {c_star}")));
    }
    if !(eta_star > 0.0 && eta_star.is_finite()) {
        return Err(AlgebraError::InvalidParams(format!("eta* must be finite and positive, got {eta_star}")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(AlgebraError::InvalidParams(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let c_circ = if gamma == 0.0 { 0.0 } else { c_star.powf(-1.0 / gamma) };
    Ok(GammaStrongForm { eta_circ: eta_star, c_circ, gamma })
}

/// One evaluated sample size in a rate study.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: u64,
    pub bound: f64,
    /// Minimizing slack; `0` marks the exact boundary infimum of a
    /// constant scale.
    pub eps_star: f64,
    /// True when the minimizer sits strictly below the scale's cap (always
    /// true for uncapped or constant scales).
    pub on_power_branch: bool,
}

/// Rate-exponent study: the optimized bound across a decade grid of sample
/// sizes and the fitted convergence exponent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult {
    /// Power exponent of the scale (`NaN` for tabulated scales).
    #[serde(with = "crate::serde_float")]
    pub gamma: f64,
    /// The theoretical rate exponent `1/(1 + gamma)`.
    #[serde(with = "crate::serde_float")]
    pub alpha: f64,
    /// Least-squares slope of `log bound` on `log n`; approximately
    /// `-alpha` when every minimizer sits on the power branch.
    #[serde(with = "crate::serde_float")]
    pub fitted_slope: f64,
    /// True when every point's minimizer sits on the power branch.
    pub on_power_branch: bool,
    pub points: Vec<RatePoint>,
}

/// Search window for the slack minimization, deliberately wider than the
/// default verification grid: rate studies at large `n` push the minimizer
/// toward very small slacks.
const RATE_EPS_LO: f64 = 1e-9;
const RATE_EPS_HI: f64 = 1e4;

/// Minimize the high-probability radius `eps + (comp + log(1/delta)) /
/// (n u(eps))` over the slack, across the decade grid `n * 10^{-4..0}`
/// (clamped below at 1), and fit the convergence exponent.
///
/// Constant scales take the exact boundary infimum at `eps = 0`; other
/// scales use golden-section search on `log eps` to relative tolerance
/// `1e-10`.
pub fn optimize_rate(u: &ScaleFunction, n: u64, delta: f64, comp: f64) -> Result<RateResult, AlgebraError> {
    u.validate()?;
    if n < 1 {
        return Err(AlgebraError::InvalidParams("rate study needs n >= 1".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(AlgebraError::InvalidParams(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(comp >= 0.0 && comp.is_finite()) {
        return Err(AlgebraError::InvalidParams(format!("complexity must be finite and nonnegative, got {comp}")));
    }
    let w = comp - delta.ln();
    let cap = u.sup();

    let mut grid: Vec<u64> = (0..=4).map(|j| ((n as f64) * 10f64.powi(j - 4)).round().max(1.0) as u64).collect();
    grid.dedup();

    let mut points = Vec::with_capacity(grid.len());
    for &m in &grid {
        let point = if let Some(eta) = u.as_constant() {
            RatePoint { n: m, bound: w / (m as f64 * eta), eps_star: 0.0, on_power_branch: true }
        } else {
            let objective = |eps: f64| eps + w / (m as f64 * u.eval(eps));
            let (eps_star, bound) = golden::minimize_log(objective, RATE_EPS_LO, RATE_EPS_HI, 1e-10);
            RatePoint { n: m, bound, eps_star, on_power_branch: !cap.is_finite() || u.eval(eps_star) < cap }
        };
        points.push(point);
    }

    let gamma = match u {
        ScaleFunction::Constant { .. } => 0.0,
        ScaleFunction::LinearCapped { .. } => 1.0,
        ScaleFunction::PowerCapped { gamma, .. } => *gamma,
        ScaleFunction::Tabulated { .. } => f64::NAN,
    };
    let logs_n: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let logs_b: Vec<f64> = points.iter().map(|p| p.bound.ln()).collect();
    let fitted_slope = if points.len() >= 2 && logs_b.iter().all(|b| b.is_finite()) {
        ols_slope(&logs_n, &logs_b)
    } else {
        f64::NAN
    };
    Ok(RateResult {
        gamma,
        alpha: 1.0 / (1.0 + gamma),
        fitted_slope,
        on_power_branch: points.iter().all(|p| p.on_power_branch),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::EvalBudget;
    use crate::measure::{EvalMethod, GridSpec};
    use crate::verify::{verify_esi, Verdict};

    fn strong_cert(label: &str, model: RandomVariableModel, eta: f64) -> EsiCertificate {
        EsiCertificate::strong(label, model, CertRhs::zero(), eta)
    }

    #[test]
    fn dependent_combination_is_harmonic() {
        let c1 = strong_cert("a", RandomVariableModel::gaussian(-0.5, 1.0), 1.0);
        let c2 = strong_cert("b", RandomVariableModel::gaussian(-0.5, 1.0), 1.0);
        let out = combine(&[c1.clone(), c2.clone()], CompositionMode::Dependent).unwrap();
        assert_eq!(out.scale.as_constant(), Some(0.5));
        assert!(out.label.starts_with("derived:"));

        let c3 = strong_cert("c", RandomVariableModel::constant(-1.0), 3.0);
        let out = combine(&[c1, c3], CompositionMode::Dependent).unwrap();
        assert!((out.scale.as_constant().unwrap() - 0.75).abs() < 1e-15);

        assert!(matches!(combine(&[], CompositionMode::Dependent), Err(AlgebraError::EmptyInput)));
        let weak = EsiCertificate {
            label: "weak".into(),
            lhs: RandomVariableModel::rademacher(),
            rhs: CertRhs::zero(),
            scale: ScaleFunction::LinearCapped { slope: 0.5, cap: f64::INFINITY },
        };
        assert!(matches!(
            combine(&[weak], CompositionMode::Dependent),
            Err(AlgebraError::MixedScalesUnderDependentMode(_))
        ));
    }

    #[test]
    fn independent_combination_takes_weakest_weight_and_reverifies() {
        // Each Gaussian(-1/2, 1) is exactly tight at eta = 1; the
        // independent sum stays tight at the minimum weight.
        let c1 = strong_cert("a", RandomVariableModel::gaussian(-0.5, 1.0), 2.0);
        let c2 = strong_cert("b", RandomVariableModel::gaussian(-0.5, 1.0), 0.5);
        let out = combine(&[c1, c2], CompositionMode::NegativelyAssociatedOrIndependent).unwrap();
        assert_eq!(out.scale.as_constant(), Some(0.5));
        let rep = verify_esi(&out, &GridSpec::default(), &EvalBudget::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds);

        // Heterogeneous models fold into an independent-sum transform whose
        // log-MGF is the sum of the parts.
        let c3 = strong_cert("c", RandomVariableModel::gaussian(-0.5, 1.0), 1.0);
        let c4 = strong_cert("d", RandomVariableModel::two_point(-1.0, 0.5, 0.4), 1.0);
        let out = combine(&[c3, c4], CompositionMode::NegativelyAssociatedOrIndependent).unwrap();
        let rep = verify_esi(&out, &GridSpec::default(), &EvalBudget::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds);
    }

    #[test]
    fn iid_average_multiplies_the_scale() {
        // 100 Rademacher draws with u(eps) = eps/2: the average satisfies
        // the 100-fold scale, re-verified through the closed-form
        // (cosh(w/100))^100 evaluation.
        let u = ScaleFunction::LinearCapped { slope: 0.5, cap: f64::INFINITY };
        let one = EsiCertificate {
            label: "rademacher".into(),
            lhs: RandomVariableModel::rademacher(),
            rhs: CertRhs::zero(),
            scale: u,
        };
        let certs = vec![one; 100];
        let out = combine(&certs, CompositionMode::IidAverage).unwrap();
        match out.scale {
            ScaleFunction::LinearCapped { slope, cap } => {
                assert!((slope - 50.0).abs() < 1e-12);
                assert!(cap.is_infinite());
            }
            other => panic!("expected scaled linear scale, got {other:?}"),
        }
        let rep = verify_esi(&out, &GridSpec::default(), &EvalBudget::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds, "{rep:?}");
        assert!(matches!(rep.method, EvalMethod::ClosedForm));

        let mut mixed = certs.clone();
        mixed[3] = strong_cert("other scale", RandomVariableModel::rademacher(), 1.0);
        assert!(matches!(combine(&mixed, CompositionMode::IidAverage), Err(AlgebraError::IidInputMismatch(_))));

        let mut mixed_model = certs;
        mixed_model[7].lhs = RandomVariableModel::gaussian(0.0, 1.0);
        assert!(matches!(combine(&mixed_model, CompositionMode::IidAverage), Err(AlgebraError::IidInputMismatch(_))));
    }

    #[test]
    fn chain_weights_combine_harmonically() {
        let x = RandomVariableModel::gaussian(0.0, 1.0);
        let y = RandomVariableModel::gaussian(1.0, 1.0);
        let c1 = EsiCertificate {
            label: "x vs y".into(),
            lhs: x.clone(),
            rhs: CertRhs { body: RhsBody::IndependentModel(y.clone()), offset: RhsOffset::none() },
            scale: ScaleFunction::constant(1.0),
        };
        let c2 = EsiCertificate {
            label: "y vs const".into(),
            lhs: y,
            rhs: CertRhs::constant(2.0),
            scale: ScaleFunction::constant(1.0),
        };
        let out = chain(&c1, &c2, false).unwrap();
        assert_eq!(out.scale.as_constant(), Some(0.5));
        assert_eq!(out.lhs, x);
        assert!(matches!(out.rhs.body, RhsBody::Constant(c) if c == 2.0));

        let assoc = chain(&c1, &c2, true).unwrap();
        assert_eq!(assoc.scale.as_constant(), Some(1.0));

        // Three identical links: repeated dependent chaining gives eta/3.
        let mk = |label: &str, lhs: f64, rhs: f64| EsiCertificate {
            label: label.into(),
            lhs: RandomVariableModel::constant(lhs),
            rhs: CertRhs::constant(rhs),
            scale: ScaleFunction::constant(1.0),
        };
        let l1 = mk("1", 0.0, 1.0);
        let l2 = mk("2", 1.0, 2.0);
        let l3 = mk("3", 2.0, 3.0);
        let out = chain(&chain(&l1, &l2, false).unwrap(), &l3, false).unwrap();
        assert!((out.scale.as_constant().unwrap() - 1.0 / 3.0).abs() < 1e-15);

        // Mismatched middle is rejected.
        let bad = mk("bad", 5.0, 6.0);
        assert!(matches!(chain(&l1, &bad, false), Err(AlgebraError::ChainMismatch(_))));
    }

    #[test]
    fn almost_sure_link_passes_weight_through() {
        // X <= Y almost surely enters as the infinite-weight sentinel and
        // leaves the second link's weight untouched.
        let c1 = EsiCertificate {
            label: "as-domination".into(),
            lhs: RandomVariableModel::constant(-1.0),
            rhs: CertRhs::constant(0.0),
            scale: ScaleFunction::Constant { eta: f64::INFINITY },
        };
        let c2 = EsiCertificate {
            label: "step".into(),
            lhs: RandomVariableModel::constant(0.0),
            rhs: CertRhs::constant(1.0),
            scale: ScaleFunction::constant(2.0),
        };
        let out = chain(&c1, &c2, false).unwrap();
        assert_eq!(out.scale.as_constant(), Some(2.0));
    }

    #[test]
    fn union_bound_comparison_matches_formulas() {
        let r = compare_union_bound(1.0, 2, 0.05).unwrap();
        assert!((r.union_bound - r.chained_bound - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let r = compare_union_bound(1.0, 10, 0.05).unwrap();
        assert!((r.saving - 10.0 * 10.0f64.ln()).abs() < 1e-12);
        assert!((r.chained_bound - 10.0 * 20.0f64.ln()).abs() < 1e-12);

        // delta = 1: the chained radius vanishes, the union radius does not.
        let r = compare_union_bound(2.0, 3, 1.0).unwrap();
        assert_eq!(r.chained_bound, 0.0);
        assert!(r.union_bound > 0.0);

        for k in 2..=10 {
            for delta in [0.5, 0.1, 1e-3] {
                let r = compare_union_bound(0.7, k, delta).unwrap();
                assert!(r.saving > 0.0);
                assert!((r.saving - k as f64 / 0.7 * (k as f64).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gamma_conversion_and_roundtrip() {
        let f = gamma_strong_convert(1.0, 1.0, 2.0).unwrap();
        assert_eq!(f.c_circ, 1.0);
        assert_eq!(f.eta_circ, 2.0);

        let f = gamma_strong_convert(4.0, 0.5, 1.0).unwrap();
        assert!((f.c_circ - 1.0 / 16.0).abs() < 1e-15);
        // Back-substitution: on the power branch eta = C* eps^gamma, the
        // offset C° eta^{1/gamma} recovers eps itself.
        for eps in GridSpec::default().points_vec() {
            let eta = 4.0 * eps.sqrt();
            if eta < 1.0 {
                assert!((f.offset(eta) - eps).abs() <= 1e-12 * eps.max(1.0));
            }
        }
        let (c_star, gamma, eta_star) = f.invert().unwrap();
        assert!((c_star - 4.0).abs() < 1e-12);
        assert_eq!(gamma, 0.5);
        assert_eq!(eta_star, 1.0);

        // Roundtrip identity across parameter combinations.
        for &(c, g, e) in &[(0.3, 0.25, 1.5), (7.0, 1.0, 0.2), (2.0, 0.75, 3.0)] {
            let f = gamma_strong_convert(c, g, e).unwrap();
            let (c2, g2, e2) = f.invert().unwrap();
            assert!((c2 - c).abs() < 1e-12 && g2 == g && e2 == e);
        }

        // gamma = 0 routes to the vanished-offset convention.
        let f = gamma_strong_convert(5.0, 0.0, 1.0).unwrap();
        assert_eq!(f.offset(0.5), 0.0);
        assert_eq!(f.offset(1.0), 0.0);
        assert!(f.invert().is_none());
    }

    #[test]
    fn rate_study_constant_scale_is_exact_inverse_n() {
        let r = optimize_rate(&ScaleFunction::constant(2.0), 100_000, (-1.0f64).exp(), 1.0).unwrap();
        assert_eq!(r.gamma, 0.0);
        assert_eq!(r.alpha, 1.0);
        for p in &r.points {
            assert_eq!(p.eps_star, 0.0);
            assert!((p.bound - 1.0 / p.n as f64).abs() < 1e-15 * p.bound);
        }
        assert!((r.fitted_slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_study_power_half_slope() {
        let u = ScaleFunction::PowerCapped { coeff: 1.0, gamma: 0.5, cap: 1.0 };
        let r = optimize_rate(&u, 1_000_000, 0.05, 0.0).unwrap();
        assert!((r.fitted_slope + 2.0 / 3.0).abs() <= 0.05, "slope {}", r.fitted_slope);
        assert!(r.on_power_branch);
        assert_eq!(r.points.len(), 5);
        // Interior minimizer matches the stationarity solution
        // eps* = (gamma w / (n C*))^{1/(1+gamma)}.
        let w = -(0.05f64).ln();
        for p in &r.points {
            let want = (0.5 * w / p.n as f64).powf(2.0 / 3.0);
            assert!((p.eps_star - want).abs() < 1e-6 * want.max(1e-9), "n={} eps*={} want {want}", p.n, p.eps_star);
        }
    }

    #[test]
    fn rate_study_linear_scale_slope() {
        let u = ScaleFunction::LinearCapped { slope: 1.0, cap: 1.0 };
        let r = optimize_rate(&u, 1_000_000, 0.05, 0.0).unwrap();
        assert_eq!(r.gamma, 1.0);
        assert_eq!(r.alpha, 0.5);
        assert!((r.fitted_slope + 0.5).abs() <= 0.05, "slope {}", r.fitted_slope);
    }
}
