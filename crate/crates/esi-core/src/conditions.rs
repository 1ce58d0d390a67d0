//! Fast-rate condition machinery.
//!
//! A certified family converges quickly when two different tails are under
//! control: the right tail through the certified scale, and the left tail
//! through a *witness* condition saying the heavy part of the loss
//! contributes at most a fixed fraction of its mean. This module measures
//! Bernstein constants, checks the witness and squared-witness conditions,
//! instantiates the small-ball lemma, performs the witnessed recentering
//! (subtracting a fraction of the mean at half the scale), and runs the
//! numerical equivalence suite connecting Bernstein feasibility to
//! power-scale certificates.

use serde::{Deserialize, Serialize};

use crate::characterization::FamilySpec;
use crate::exec::{mc_mean, EvalBudget};
use crate::measure::{GridSpec, MeasureError, RandomVariableModel, ScaleFunction, TransformOp};
use crate::verify::{verify_esi, CertRhs, EsiCertificate, Verdict, VerifyError, NUMERIC_GRACE};

/// Errors for condition checks.
#[derive(Debug, thiserror::Error)]
pub enum ConditionsError {
    /// A loss with negative mean violates the Bernstein premise.
    #[error("negative loss mean: {0}")]
    NegativeMean(String),
    /// The small-ball lemma needs a nonnegative variable.
    #[error("model is not nonnegative: {0}")]
    NonNonnegativeModel(String),
    /// The plain witness condition failed where an operation requires it.
    #[error("witness condition failed: {0}")]
    WitnessFailed(String),
    /// No recentering fraction on the scan grid produced verifying
    /// certificates.
    #[error("no feasible recentering fraction: {0}")]
    NoFeasibleCStar(String),
    /// A family member fails to verify against the supplied scale.
    #[error("not a certified family: {0}")]
    NotAnEsiFamily(String),
    /// The equivalence suite needs a uniformly bounded second moment.
    #[error("family is not regular: {0}")]
    NotRegular(String),
    /// Neither the members nor their negative parts satisfy the
    /// squared-witness condition.
    #[error("squared-witness condition failed: {0}")]
    SquaredWitnessFailed(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

// ---------------------------------------------------------------------------
// Bernstein fits
// ---------------------------------------------------------------------------

/// The measured Bernstein constant at one exponent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BernsteinFit {
    pub beta: f64,
    /// `sup_f E[L_f^2] / (E[L_f])^beta`; `+inf` marks an infeasible
    /// exponent.
    #[serde(with = "crate::serde_float")]
    pub b: f64,
    pub feasible: bool,
}

/// Bernstein fits across an exponent grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub fits: Vec<BernsteinFit>,
    /// Largest grid exponent with a finite constant.
    pub largest_feasible_beta: Option<f64>,
}

/// `sup E[L^2]/(E[L])^beta` over `(mean, second-moment)` pairs of losses.
///
/// Conventions: a loss with `E[L] = 0` and `E[L^2] = 0` constrains nothing
/// (the inequality holds with any constant); `E[L] = 0` with `E[L^2] > 0`
/// is infeasible for `beta > 0` (the right-hand side is forced to zero).
fn bernstein_constant(loss_moments: &[(f64, f64)], beta: f64) -> f64 {
    let mut sup = 0.0f64;
    for &(mean, second) in loss_moments {
        if second == 0.0 {
            continue;
        }
        let denom = mean.powf(beta);
        sup = sup.max(if denom == 0.0 { f64::INFINITY } else { second / denom });
    }
    sup
}

/// Measure the Bernstein constant `B(beta) = sup_f E[L_f^2]/(E[L_f])^beta`
/// for each exponent on the grid. The family members are the losses
/// themselves; every loss mean must be nonnegative.
pub fn bernstein_fit(losses: &FamilySpec, beta_grid: &[f64]) -> Result<BernsteinReport, ConditionsError> {
    for (i, m) in losses.moments.iter().enumerate() {
        if m.mean < 0.0 {
            return Err(ConditionsError::NegativeMean(format!("loss {i} has mean {}", m.mean)));
        }
    }
    for &beta in beta_grid {
        if !(0.0..=1.0).contains(&beta) {
            return Err(ConditionsError::InvalidParams(format!("beta must lie in [0, 1], got {beta}")));
        }
    }
    let pairs: Vec<(f64, f64)> = losses.moments.iter().map(|m| (m.mean, m.second_moment)).collect();
    let fits: Vec<BernsteinFit> = beta_grid
        .iter()
        .map(|&beta| {
            let b = bernstein_constant(&pairs, beta);
            BernsteinFit { beta, b, feasible: b.is_finite() }
        })
        .collect();
    let largest_feasible_beta =
        fits.iter().filter(|f| f.feasible).map(|f| f.beta).fold(None, |acc: Option<f64>, b| {
            Some(acc.map_or(b, |a| a.max(b)))
        });
    Ok(BernsteinReport { fits, largest_feasible_beta })
}

// ---------------------------------------------------------------------------
// Witness conditions
// ---------------------------------------------------------------------------

/// Which witness inequality to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessVariant {
    /// `E[(-X) 1{-X >= C}] <= c E[-X]` — the heavy left tail contributes
    /// at most a `c`-fraction of the mean. Meaningful only for `E[X] <= 0`.
    Plain,
    /// `E[X^2 1{X^2 >= C}] <= c E[X^2]` — the same control for squares.
    Squared,
}

/// Witness-condition parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WitnessParams {
    /// Allowed tail fraction, strictly inside (0, 1).
    pub c: f64,
    /// Truncation threshold (`C` in the inequality), positive.
    pub threshold: f64,
    pub variant: WitnessVariant,
}

impl WitnessParams {
    pub fn new(c: f64, threshold: f64, variant: WitnessVariant) -> Result<WitnessParams, ConditionsError> {
        if !(c > 0.0 && c < 1.0) {
            return Err(ConditionsError::InvalidParams(format!("witness fraction c must lie in (0, 1), got {c}")));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(ConditionsError::InvalidParams(format!(
                "witness threshold must be finite and positive, got {threshold}"
            )));
        }
        Ok(WitnessParams { c, threshold, variant })
    }
}

/// One member's witness evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WitnessMemberResult {
    pub index: usize,
    /// Truncated expectation (the inequality's left side).
    pub tail_part: f64,
    /// Full expectation the fraction applies to (`E[-X]` or `E[X^2]`).
    pub total: f64,
    /// Standard error of `tail_part` when it was estimated by sampling.
    pub se: f64,
    /// `tail_part / total`; `NaN` when the denominator vanishes.
    #[serde(with = "crate::serde_float")]
    pub ratio: f64,
    pub zero_denominator: bool,
    pub pass: bool,
}

/// Family-level witness report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessReport {
    pub params: WitnessParams,
    pub members: Vec<WitnessMemberResult>,
    pub all_pass: bool,
    /// True when any member needed Monte-Carlo evaluation.
    pub stochastic: bool,
}

/// `E[g(X)]` with breaks, falling back to Monte Carlo when the model has
/// no exact representation. Returns `(value, se)`.
fn expect_or_sample<F: Fn(f64) -> f64 + Sync>(
    model: &RandomVariableModel,
    g: F,
    breaks: &[f64],
    budget: &EvalBudget,
    tag: u64,
) -> Result<(f64, f64), MeasureError> {
    match model.expect_fn(&g, breaks) {
        Ok(v) => Ok((v, 0.0)),
        Err(MeasureError::Unresolvable(_)) => {
            let est = mc_mean(budget, tag, |rng| g(model.sample(rng)));
            Ok((est.mean, est.se))
        }
        Err(e) => Err(e),
    }
}

/// Evaluate the witness condition for every family member.
///
/// With a zero denominator the inequality itself is still well-defined —
/// the right side is zero, so the member passes exactly when its truncated
/// expectation vanishes (an almost-surely-zero member passes vacuously);
/// the `zero_denominator` flag marks that the *ratio* is undefined there.
pub fn witness_check(
    family: &FamilySpec,
    params: &WitnessParams,
    budget: &EvalBudget,
) -> Result<WitnessReport, ConditionsError> {
    WitnessParams::new(params.c, params.threshold, params.variant)?;
    let cap = params.threshold;
    let mut members = Vec::with_capacity(family.members.len());
    let mut stochastic = false;
    for (i, (model, mom)) in family.members.iter().zip(&family.moments).enumerate() {
        let (tail_part, se, total) = match params.variant {
            WitnessVariant::Plain => {
                if mom.mean > 0.0 {
                    return Err(ConditionsError::InvalidParams(format!(
                        "plain witness needs E[X] <= 0; member {i} has mean {}",
                        mom.mean
                    )));
                }
                let g = |x: f64| if -x >= cap { -x } else { 0.0 };
                let (v, se) = expect_or_sample(model, g, &[-cap], budget, 0x57_49_54 + i as u64)?;
                (v, se, -mom.mean)
            }
            WitnessVariant::Squared => {
                let root = cap.sqrt();
                let g = |x: f64| if x * x >= cap { x * x } else { 0.0 };
                let (v, se) = expect_or_sample(model, g, &[-root, root], budget, 0x57_49_54 + i as u64)?;
                (v, se, mom.second_moment)
            }
        };
        stochastic |= se > 0.0;
        let zero_denominator = total == 0.0;
        let pass = tail_part <= params.c * total + NUMERIC_GRACE + budget.k_sigma * se;
        members.push(WitnessMemberResult {
            index: i,
            tail_part,
            total,
            se,
            ratio: if zero_denominator { f64::NAN } else { tail_part / total },
            zero_denominator,
            pass,
        });
    }
    let all_pass = members.iter().all(|m| m.pass);
    Ok(WitnessReport { params: *params, members, all_pass, stochastic })
}

// ---------------------------------------------------------------------------
// Small-ball lemma
// ---------------------------------------------------------------------------

/// Constants of the small-ball inequality.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmallBallParams {
    pub c: f64,
    pub delta: f64,
    /// Truncation level `K = c^{-(1+delta)/delta} * E[Z^2]`.
    pub k: f64,
    /// Head-mean inflation `Ccap = 1/(1-c)`.
    pub ccap: f64,
}

impl SmallBallParams {
    pub fn new(z2bar: f64, c: f64, delta: f64) -> Result<SmallBallParams, ConditionsError> {
        if !(c > 0.0 && c < 1.0) {
            return Err(ConditionsError::InvalidParams(format!("c must lie in (0, 1), got {c}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(ConditionsError::InvalidParams(format!("delta must be finite and positive, got {delta}")));
        }
        if !(z2bar >= 0.0 && z2bar.is_finite()) {
            return Err(ConditionsError::InvalidParams(format!(
                "second moment must be finite and nonnegative, got {z2bar}"
            )));
        }
        Ok(SmallBallParams { c, delta, k: c.powf(-(1.0 + delta) / delta) * z2bar, ccap: 1.0 / (1.0 - c) })
    }
}

/// Small-ball check on one nonnegative model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmallBallReport {
    pub params: SmallBallParams,
    /// `E[Z^2]`.
    pub z2bar: f64,
    /// `E[Z]`.
    pub mean: f64,
    /// `E[1{Z >= K} Z]`.
    pub tail_mean: f64,
    /// `E[1{Z < K} Z]`.
    pub head_mean: f64,
    /// `E[1{Z>=K} Z] <= c (E[1{Z>=K} Z])^{1-delta}`.
    pub first_holds: bool,
    /// `E[Z] <= Ccap E[1{Z<K} Z]` — the mean is recovered from the small
    /// ball alone.
    pub second_holds: bool,
}

/// Instantiate the small-ball constants for a nonnegative model and verify
/// both inequalities on it.
pub fn smallball(model: &RandomVariableModel, c: f64, delta: f64) -> Result<SmallBallReport, ConditionsError> {
    model.validate()?;
    let (below, _) = model.cdf_parts(0.0)?;
    if below > 0.0 {
        return Err(ConditionsError::NonNonnegativeModel(format!("P(Z < 0) = {below}")));
    }
    let mom = model.moments()?;
    if !mom.second_moment.is_finite() {
        return Err(ConditionsError::InvalidParams(format!(
            "small-ball needs a finite second moment, got {}",
            mom.second_moment
        )));
    }
    let params = SmallBallParams::new(mom.second_moment, c, delta)?;
    let k = params.k;
    let tail_mean = model.expect_fn(|z| if z >= k { z } else { 0.0 }, &[k])?;
    let head_mean = model.expect_fn(|z| if z < k { z } else { 0.0 }, &[k])?;
    Ok(SmallBallReport {
        params,
        z2bar: mom.second_moment,
        mean: mom.mean,
        tail_mean,
        head_mean,
        first_holds: tail_mean <= c * tail_mean.powf(1.0 - delta) + NUMERIC_GRACE,
        second_holds: mom.mean <= params.ccap * head_mean + NUMERIC_GRACE,
    })
}

// ---------------------------------------------------------------------------
// Witnessed recentering
// ---------------------------------------------------------------------------

/// Result of the witnessed recentering: the largest scanned fraction `c*`
/// whose derived certificates all verify at half the scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmTransformResult {
    pub c_star: f64,
    /// `X_f - c* E[X_f]` certified against `u/2`, one per member.
    pub certificates: Vec<EsiCertificate>,
    pub witness: WitnessReport,
    /// True when some scan step was blocked by Monte-Carlo inconclusiveness
    /// rather than an outright failure.
    pub mc_inconclusive: bool,
}

const C_STAR_STEPS: u32 = 20;

/// Recenter a certified family: given `X_f esi_u 0` with bounded scale and
/// a passing plain witness condition, find the largest `c*` on the
/// 20-step grid of (0, 1] such that `X_f - c* E[X_f] esi_{u/2} 0` verifies
/// for every member.
pub fn gm_transform(
    family: &FamilySpec,
    u: &ScaleFunction,
    witness: &WitnessParams,
    grid: &GridSpec,
    budget: &EvalBudget,
) -> Result<GmTransformResult, ConditionsError> {
    u.validate()?;
    if !u.sup().is_finite() {
        return Err(ConditionsError::InvalidParams(
            "recentering needs sup u < inf; reexpress the family against a capped scale".into(),
        ));
    }
    if witness.variant != WitnessVariant::Plain {
        return Err(ConditionsError::InvalidParams("recentering uses the plain witness variant".into()));
    }
    // Entry: the family premise `X_f esi_u 0` must itself verify.
    for (i, model) in family.members.iter().enumerate() {
        let cert = EsiCertificate {
            label: format!("entry member {i}"),
            lhs: model.clone(),
            rhs: CertRhs::zero(),
            scale: u.clone(),
        };
        let rep = verify_esi(&cert, grid, budget)?;
        if rep.verdict != Verdict::Holds {
            return Err(ConditionsError::NotAnEsiFamily(format!(
                "member {i} verdict {:?} against the supplied scale (worst margin {} at eps {})",
                rep.verdict, rep.worst_margin, rep.worst_eps
            )));
        }
    }
    let witness_report = witness_check(family, witness, budget)?;
    if !witness_report.all_pass {
        let worst = witness_report
            .members
            .iter()
            .filter(|m| !m.pass)
            .map(|m| format!("member {} ratio {}", m.index, m.ratio))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(ConditionsError::WitnessFailed(worst));
    }

    let half = u.scaled(0.5);
    let mut mc_inconclusive = false;
    let mut worst_failure: Option<(f64, usize, f64)> = None;
    for step in (1..=C_STAR_STEPS).rev() {
        let c_star = step as f64 / C_STAR_STEPS as f64;
        let mut certs = Vec::with_capacity(family.members.len());
        let mut all_hold = true;
        for (i, (model, mom)) in family.members.iter().zip(&family.moments).enumerate() {
            let cert = EsiCertificate {
                label: format!("derived: member {i} recentered by c* = {c_star}"),
                lhs: model.clone().shifted(-c_star * mom.mean),
                rhs: CertRhs::zero(),
                scale: half.clone(),
            };
            let rep = verify_esi(&cert, grid, budget)?;
            match rep.verdict {
                Verdict::Holds => certs.push(cert),
                Verdict::Inconclusive => {
                    mc_inconclusive = true;
                    all_hold = false;
                    break;
                }
                Verdict::Fails => {
                    worst_failure = Some((c_star, i, rep.worst_margin));
                    all_hold = false;
                    break;
                }
            }
        }
        if all_hold {
            return Ok(GmTransformResult { c_star, certificates: certs, witness: witness_report, mc_inconclusive });
        }
    }
    let detail = match worst_failure {
        Some((c_star, i, margin)) => {
            format!("smallest scanned c* = {c_star} fails on member {i} (worst margin {margin})")
        }
        None => "every scan step was Monte-Carlo inconclusive".to_string(),
    };
    Err(ConditionsError::NoFeasibleCStar(if mc_inconclusive {
        format!("{detail}; Monte-Carlo inconclusiveness blocked at least one step")
    } else {
        detail
    }))
}

// ---------------------------------------------------------------------------
// Equivalence suite
// ---------------------------------------------------------------------------

/// Which family the squared-witness condition was established on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquaredWitnessOn {
    Members,
    NegativeParts,
}

/// Outcome of one implication direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionStatus {
    Passed,
    Failed,
    /// Holds by construction rather than by a separate computation.
    Asserted,
    /// Premise unavailable; nothing to check.
    Skipped,
}

/// One direction's outcome with its explanation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionReport {
    pub status: DirectionStatus,
    pub detail: String,
}

/// One `(beta, c, c_star)` cell of the augmented-statement search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentedCell {
    pub beta: f64,
    pub c: f64,
    pub c_star: f64,
    /// Weight ceiling at which the smallest constant was found.
    pub eta_circ: f64,
    /// Smallest constant `C°` making the augmented statement hold on the
    /// weight grid; `+inf` when no ladder step produced a finite constant.
    #[serde(with = "crate::serde_float")]
    pub c_circ: f64,
    pub pass: bool,
}

/// Configuration for [`equivalence_suite`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    /// Exponents to test; all must lie in `[0, b)`.
    pub beta_grid: Vec<f64>,
    /// Square-augmentation coefficients (`c` in `X + c eta X^2`).
    pub c_values: Vec<f64>,
    /// Mean-recentering fractions (`c*`), each in `[0, 1)`.
    pub c_star_values: Vec<f64>,
    /// Top of the weight-ceiling ladder `{eta_star / 2^j}`.
    pub eta_star: f64,
    /// Ladder depth (`j = 0..=depth`).
    pub ladder_depth: u32,
    /// Number of weights tested inside each `(0, eta_circ]`.
    pub eta_points: usize,
    pub budget: EvalBudget,
}

impl EquivalenceConfig {
    /// Defaults: `beta` in `{0, 0.25, 0.5, 0.75}` clipped below `b`,
    /// `c` in `{0, 0.1}`, `c*` in `{0, 0.5, 0.9}`, a 7-step ladder, and 16
    /// weights per ceiling.
    pub fn new(b: f64, eta_star: f64) -> EquivalenceConfig {
        EquivalenceConfig {
            beta_grid: [0.0, 0.25, 0.5, 0.75].iter().copied().filter(|&beta| beta < b).collect(),
            c_values: vec![0.0, 0.1],
            c_star_values: vec![0.0, 0.5, 0.9],
            eta_star,
            ladder_depth: 6,
            eta_points: 16,
            budget: EvalBudget::default(),
        }
    }
}

/// Equivalence-suite report for the Bernstein / power-scale correspondence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub witness_on: SquaredWitnessOn,
    /// Bernstein fits of the losses `-X_f` on the exponent grid.
    pub bernstein: Vec<BernsteinFit>,
    /// Augmented-statement search results per `(beta, c, c_star)`.
    pub forward_cells: Vec<AugmentedCell>,
    /// Bernstein + certified family ⇒ augmented statement.
    pub forward: DirectionReport,
    /// Augmented statement ⇒ plain power-scale statement (drop the
    /// augmentation).
    pub reduction: DirectionReport,
    /// Power-scale statement ⇒ Bernstein feasibility.
    pub converse: DirectionReport,
    /// `sup E[|X|^{2+k} e^{eta X}] / (E[X^2])^{1-delta}` over the grids
    /// (`k` in {0, 2}, `delta = 1 - beta`).
    #[serde(with = "crate::serde_float")]
    pub c1_constant: f64,
    /// `sup E[X^2] / E[X^2 e^{eta X}]` over the weight grid.
    #[serde(with = "crate::serde_float")]
    pub c2_constant: f64,
    pub c1_holds: bool,
    pub c2_holds: bool,
    pub all_pass: bool,
}

/// Annealed value of the augmented variable `X + c eta X^2 - c* E[X]` at
/// weight `eta`: `(1/eta) log E[exp(eta X + c eta^2 X^2)] - c* E[X]`.
/// `+inf` when the expectation diverges.
fn augmented_annealed(
    model: &RandomVariableModel,
    mean: f64,
    eta: f64,
    c: f64,
    c_star: f64,
) -> Result<f64, MeasureError> {
    let g = |x: f64| (eta * x + c * eta * eta * x * x).exp();
    let v = match model.expect_fn(g, &[]) {
        Ok(v) => v,
        // A diverging square-augmented integral shows up as a quadrature
        // failure; the honest value is +inf (no finite certificate).
        Err(MeasureError::DivergentIntegral) | Err(MeasureError::Numeric(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    if !(v > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(v.ln() / eta - c_star * mean)
}

/// Smallest constant making the augmented statement hold for every member
/// at every weight in `(0, eta_circ]`: `sup_{f, eta} annealed / eta^{1/(1-beta)}`.
fn needed_constant(
    family: &FamilySpec,
    eta_circ: f64,
    eta_points: usize,
    beta: f64,
    c: f64,
    c_star: f64,
) -> Result<f64, MeasureError> {
    let exponent = 1.0 / (1.0 - beta);
    // Low-weight behavior is decided by the mean: the ratio tends to
    // -inf when E[X] < 0, but for a mean-zero member with mass the
    // annealed value is of order eta while the divisor is eta^{1/(1-beta)},
    // so for beta > 0 no finite constant covers the whole interval. A
    // finite weight grid cannot see that divergence; rule it out exactly.
    if beta > 0.0 && family.moments.iter().any(|m| m.mean == 0.0 && m.second_moment > 0.0) {
        return Ok(f64::INFINITY);
    }
    let mut sup = f64::NEG_INFINITY;
    for j in 1..=eta_points {
        // Log-spaced weights ending exactly at the ceiling.
        let eta = eta_circ * 2f64.powf(-(eta_points as f64 - j as f64) / 2.0);
        for (model, mom) in family.members.iter().zip(&family.moments) {
            let a = augmented_annealed(model, mom.mean, eta, c, c_star)?;
            if a.is_infinite() {
                return Ok(f64::INFINITY);
            }
            sup = sup.max(a / eta.powf(exponent));
        }
    }
    Ok(sup)
}

/// Run the numerical equivalence suite on a regular family satisfying the
/// squared-witness condition (checked on the members, then on their
/// negative parts).
///
/// Directions: *forward* — Bernstein feasibility on the exponent grid plus
/// the certified-family premise imply the augmented statement `X + c eta
/// X^2 - c* E[X] esi_eta C° eta^{1/(1-beta)}`, established by searching a
/// ceiling ladder for the smallest finite `C°` per `(beta, c, c*)`;
/// *reduction* — dropping the augmentation is the `(c, c*) = (0, 0)` cell,
/// asserted; *converse* — the power-scale statement back to Bernstein
/// feasibility at every grid exponent, cross-checked cell against fit. The
/// regularity conclusions are measured as the constants `c1_constant` and
/// `c2_constant`.
pub fn equivalence_suite(
    family: &FamilySpec,
    b: f64,
    witness: &WitnessParams,
    config: &EquivalenceConfig,
) -> Result<EquivalenceReport, ConditionsError> {
    if !(b > 0.0 && b < 1.0) {
        return Err(ConditionsError::InvalidParams(format!("b must lie in (0, 1), got {b}")));
    }
    if !family.regular {
        let worst = family
            .moments
            .iter()
            .enumerate()
            .find(|(_, m)| !m.second_moment.is_finite())
            .map(|(i, m)| format!("member {i} has second moment {}", m.second_moment))
            .unwrap_or_default();
        return Err(ConditionsError::NotRegular(worst));
    }
    for &beta in &config.beta_grid {
        if !(0.0..1.0).contains(&beta) || beta >= b {
            return Err(ConditionsError::InvalidParams(format!("beta grid value {beta} outside [0, {b})")));
        }
    }
    if !(config.eta_star > 0.0 && config.eta_star.is_finite()) {
        return Err(ConditionsError::InvalidParams(format!("eta_star must be finite and positive, got {}", config.eta_star)));
    }
    if config.eta_points == 0 {
        return Err(ConditionsError::InvalidParams("eta_points must be at least 1".into()));
    }
    if !config.c_values.contains(&0.0) || !config.c_star_values.contains(&0.0) {
        return Err(ConditionsError::InvalidParams(
            "the search grids must contain c = 0 and c* = 0 (the reduction direction needs that cell)".into(),
        ));
    }

    // Squared witness on the members, else on their negative parts.
    let squared = WitnessParams { variant: WitnessVariant::Squared, ..*witness };
    let on_members = witness_check(family, &squared, &config.budget)?;
    let (witness_on, witness_report) = if on_members.all_pass {
        (SquaredWitnessOn::Members, on_members)
    } else {
        let negatives = FamilySpec::new(
            family
                .members
                .iter()
                .map(|m| m.clone().negated().transformed(TransformOp::PositivePart))
                .collect(),
        )
        .map_err(|e| ConditionsError::InvalidParams(format!("negative-part family: {e}")))?;
        let on_negatives = witness_check(&negatives, &squared, &config.budget)?;
        if !on_negatives.all_pass {
            let fails = |r: &WitnessReport| {
                r.members.iter().filter(|m| !m.pass).map(|m| m.index.to_string()).collect::<Vec<_>>().join(", ")
            };
            return Err(ConditionsError::SquaredWitnessFailed(format!(
                "members failing on X: [{}]; on (X)_-: [{}]",
                fails(&on_members),
                fails(&on_negatives)
            )));
        }
        (SquaredWitnessOn::NegativeParts, on_negatives)
    };
    let _ = witness_report;

    // Bernstein fits of the losses -X_f, straight from the family moments.
    let loss_pairs: Vec<(f64, f64)> = family.moments.iter().map(|m| (-m.mean, m.second_moment)).collect();
    if let Some((i, _)) = loss_pairs.iter().enumerate().find(|(_, p)| p.0 < 0.0) {
        return Err(ConditionsError::NegativeMean(format!(
            "member {i} has positive mean; the loss family violates the Bernstein premise"
        )));
    }
    let bernstein: Vec<BernsteinFit> = config
        .beta_grid
        .iter()
        .map(|&beta| {
            let bc = bernstein_constant(&loss_pairs, beta);
            BernsteinFit { beta, b: bc, feasible: bc.is_finite() }
        })
        .collect();

    // Forward: search (eta_circ, C_circ) per (beta, c, c*) cell.
    let mut forward_cells = Vec::new();
    for fit in &bernstein {
        for &c in &config.c_values {
            for &c_star in &config.c_star_values {
                if !(0.0..1.0).contains(&c_star) || c < 0.0 {
                    return Err(ConditionsError::InvalidParams(format!(
                        "augmentation grids need c >= 0 and c* in [0, 1); got c = {c}, c* = {c_star}"
                    )));
                }
                let mut best: Option<(f64, f64)> = None;
                for j in 0..=config.ladder_depth {
                    let eta_circ = config.eta_star / 2f64.powi(j as i32);
                    let needed = needed_constant(family, eta_circ, config.eta_points, fit.beta, c, c_star)?;
                    if needed.is_finite() {
                        let c_circ = needed.max(0.0);
                        if best.map_or(true, |(_, bc)| c_circ < bc) {
                            best = Some((eta_circ, c_circ));
                        }
                    }
                }
                let (eta_circ, c_circ) = best.unwrap_or((f64::NAN, f64::INFINITY));
                forward_cells.push(AugmentedCell {
                    beta: fit.beta,
                    c,
                    c_star,
                    eta_circ,
                    c_circ,
                    // The cell is claimed only where its Bernstein premise
                    // is feasible.
                    pass: fit.feasible && c_circ.is_finite(),
                });
            }
        }
    }

    let infeasible_betas: Vec<f64> = bernstein.iter().filter(|f| !f.feasible).map(|f| f.beta).collect();
    let feasible_at = |beta: f64| bernstein.iter().any(|f| f.beta == beta && f.feasible);
    let feasible_cell_count = forward_cells.iter().filter(|cell| feasible_at(cell.beta)).count();
    let feasible_cells_pass = forward_cells.iter().filter(|cell| feasible_at(cell.beta)).all(|cell| cell.pass);
    let forward = if !infeasible_betas.is_empty() && feasible_cell_count == 0 {
        DirectionReport {
            status: DirectionStatus::Skipped,
            detail: format!("Bernstein premise infeasible at every grid exponent {infeasible_betas:?}"),
        }
    } else if feasible_cells_pass {
        if infeasible_betas.is_empty() {
            DirectionReport {
                status: DirectionStatus::Passed,
                detail: "finite (eta_circ, C_circ) found for every (beta, c, c*) cell".into(),
            }
        } else {
            DirectionReport {
                status: DirectionStatus::Skipped,
                detail: format!(
                    "premise infeasible at beta {infeasible_betas:?}; all remaining cells found finite constants"
                ),
            }
        }
    } else {
        let bad: Vec<String> = forward_cells
            .iter()
            .filter(|cell| !cell.pass && feasible_at(cell.beta))
            .map(|cell| format!("(beta={}, c={}, c*={})", cell.beta, cell.c, cell.c_star))
            .collect();
        DirectionReport {
            status: DirectionStatus::Failed,
            detail: format!("no finite constant at {}", bad.join(", ")),
        }
    };

    // Reduction: statement 3 is the (c, c*) = (0, 0) cell verbatim, so the
    // implication is structural; the only way to contradict it numerically
    // is an augmented cell with a finite constant whose (0, 0) cell has
    // none.
    let zero_cells: Vec<&AugmentedCell> =
        forward_cells.iter().filter(|cell| cell.c == 0.0 && cell.c_star == 0.0).collect();
    let contradiction = forward_cells.iter().find(|cell| {
        cell.c_circ.is_finite()
            && zero_cells.iter().any(|z| z.beta == cell.beta && !z.c_circ.is_finite())
    });
    let reduction = match contradiction {
        None => DirectionReport {
            status: DirectionStatus::Asserted,
            detail: "dropping the augmentation is the (c, c*) = (0, 0) cell; x^2 >= 0 makes it no stronger".into(),
        },
        Some(cell) => DirectionReport {
            status: DirectionStatus::Failed,
            detail: format!(
                "cell (beta={}, c={}, c*={}) has a finite constant while its (0, 0) cell has none",
                cell.beta, cell.c, cell.c_star
            ),
        },
    };

    // Converse: power-scale statement per beta (the (0,0) cell) against
    // Bernstein feasibility at the same beta.
    let mut converse_notes = Vec::new();
    let mut converse_ok = true;
    for fit in &bernstein {
        let stmt3 = zero_cells.iter().find(|cell| cell.beta == fit.beta).map(|cell| cell.c_circ.is_finite());
        match (stmt3, fit.feasible) {
            (Some(true), true) => {
                converse_notes.push(format!("beta={}: power-scale statement and Bernstein both hold", fit.beta))
            }
            (Some(true), false) => {
                converse_ok = false;
                converse_notes.push(format!(
                    "beta={}: power-scale statement holds but Bernstein is infeasible — equivalence violated",
                    fit.beta
                ));
            }
            (Some(false), false) => converse_notes.push(format!(
                "beta={}: Bernstein infeasible and no finite power-scale constant (consistent)",
                fit.beta
            )),
            (Some(false), true) => {
                converse_ok = false;
                converse_notes.push(format!(
                    "beta={}: Bernstein feasible but the power-scale search found no constant",
                    fit.beta
                ));
            }
            (None, _) => {
                converse_ok = false;
                converse_notes.push(format!("beta={}: no (0,0) cell evaluated", fit.beta));
            }
        }
    }
    let converse = DirectionReport {
        status: if converse_ok { DirectionStatus::Passed } else { DirectionStatus::Failed },
        detail: converse_notes.join("; "),
    };

    // Regularity conclusions as measured constants over the weight grid at
    // the top ceiling.
    let mut c1_constant = f64::NEG_INFINITY;
    let mut c2_constant = f64::NEG_INFINITY;
    for j in 1..=config.eta_points {
        let eta = config.eta_star * 2f64.powf(-(config.eta_points as f64 - j as f64) / 2.0);
        for (model, mom) in family.members.iter().zip(&family.moments) {
            let x2 = mom.second_moment;
            for k in [0.0, 2.0] {
                let num = model.expect_fn(|x| x.abs().powf(2.0 + k) * (eta * x).exp(), &[])?;
                for &beta in &config.beta_grid {
                    let delta = 1.0 - beta;
                    let denom = x2.powf(1.0 - delta);
                    if denom == 0.0 && num == 0.0 {
                        continue;
                    }
                    c1_constant = c1_constant.max(num / denom);
                }
            }
            let tilted = model.expect_fn(|x| x * x * (eta * x).exp(), &[])?;
            if x2 == 0.0 {
                continue;
            }
            c2_constant = c2_constant.max(x2 / tilted);
        }
    }
    let c1_holds = c1_constant.is_finite();
    let c2_holds = c2_constant.is_finite();

    let all_pass = matches!(forward.status, DirectionStatus::Passed)
        && matches!(reduction.status, DirectionStatus::Asserted)
        && matches!(converse.status, DirectionStatus::Passed)
        && c1_holds
        && c2_holds;
    Ok(EquivalenceReport {
        witness_on,
        bernstein,
        forward_cells,
        forward,
        reduction,
        converse,
        c1_constant,
        c2_constant,
        c1_holds,
        c2_holds,
        all_pass,
    })
}
