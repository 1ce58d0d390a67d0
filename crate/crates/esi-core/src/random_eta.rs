//! Exponential inequalities whose scale is itself data-dependent.
//!
//! Here the weight is not a fixed `eta` but a random `η̂` taking values in a
//! finite grid `G` of positive reals, chosen per draw by a *selector* that
//! may depend on everything else in the draw. The claim
//! `X_η̂ ≼_η̂ Y_η̂` is shorthand for `E[e^{η̂ (X_η̂ − Y_η̂)}] ≤ 1`, i.e. the
//! scaled difference satisfies a strong inequality at weight one.
//!
//! What survives the substitution of a random weight:
//!
//! * the deviation bound still reads `log(1/δ)/η̂` at the *realized* weight
//!   ([`random_eta_bounds`]);
//! * the in-expectation reading picks up an additive `1/η̂`:
//!   `E[X_η̂] ≤ E[Y_η̂ + 1/η̂]`. The correction is unavoidable —
//!   [`unbounded_mean_scenario`] builds a two-state joint law whose
//!   exponential moment is a constant `< 1` while `E[W_η̂]` grows without
//!   bound;
//! * a partial converse: the family of deviation bounds at every `δ` implies
//!   `X_η̂ ≼_{η̂/2} Y_η̂ + (2 log 2)/η̂`;
//! * sums of conditionally certified variables obey
//!   `E[Σ_i X_{i,η̂}] ≤ E[(log|G| + 1)/η̂]` for *any* selector
//!   ([`random_eta_sum`]);
//! * per-weight certificates `X_η ≼_η 0` combine into a random-weight
//!   certificate at the price of the posterior/prior log-ratio at the
//!   realized weight ([`pacbayes_on_eta`]), `−log π0(η̂)` for a degenerate
//!   posterior.
//!
//! Scenarios are *joint* generators — one draw yields the selected weight
//! and the whole `W` family — because all of the above quantify over
//! arbitrary dependence between the selector and the variables.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{mc_multi, EvalBudget};
use crate::measure::model::RandomVariableModel;
use crate::measure::scale::GridSpec;
use crate::measure::{EvalMethod, MeasureError};
use crate::pacbayes::{DiscreteMeasure, PacBayesError};
use crate::verify::{
    verify_esi, CertRhs, EsiCertificate, MarginPoint, Verdict, VerificationReport, VerifyError, NUMERIC_GRACE,
};

/// Errors from random-weight operations.
#[derive(Debug, Error)]
pub enum RandomEtaError {
    /// The weight grid has no members.
    #[error("the weight grid is empty")]
    EmptyGrid,
    /// Bound extraction was asked for on a scenario that does not verify.
    #[error("unverified scenario: {0}")]
    UnverifiedScenario(String),
    /// A required per-weight or per-slot inequality could not be certified.
    #[error("assumption unverified: {0}")]
    AssumptionUnverified(String),
    /// The posterior can charge a weight the prior excludes.
    #[error("support violation: {0}")]
    SupportViolation(String),
    /// Malformed scenario or parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    PacBayes(#[from] PacBayesError),
}

/// One outcome of an explicit finite joint law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteOutcome {
    pub prob: f64,
    /// Index into the grid of the weight this outcome selects.
    pub eta_index: usize,
    /// One `W` value per grid weight (the whole family, selected or not).
    pub w: Vec<f64>,
}

/// How a shared-draw scenario picks its weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectorRule {
    /// Always the same grid index (the fixed-weight special case).
    Constant { index: usize },
    /// `index = #{cuts ≤ z}` for ascending `cuts` of length `|G| − 1`.
    Threshold { cuts: Vec<f64> },
    /// Adversarial: the index maximizing the selected exponent `η·W_η`.
    GreedyExponent,
}

/// How [`RandomEtaJoint::IndependentMembers`] forms its posterior on the
/// grid, per draw, from the drawn member values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PosteriorRule {
    /// Posterior = prior; the density ratio is identically one.
    Prior,
    /// Point mass on a fixed index.
    Constant { index: usize },
    /// Point mass on the smallest drawn member value (the "lucky" pick).
    ArgminMember,
    /// `π̂(η) ∝ π0(η) e^{−temperature · X_η}`.
    ExponentialWeights { temperature: f64 },
}

/// The joint law of one draw: the selected weight and the `W` family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RandomEtaJoint {
    /// Explicit finite support: exact enumeration available.
    FiniteDiscrete { outcomes: Vec<DiscreteOutcome> },
    /// One shared Gaussian draw `Z ~ N(mean, variance)`;
    /// `W_η = (Z − mean) − η·variance/2 − penalties[k]`, so each fixed
    /// weight satisfies `E[e^{η W_η}] = e^{−η·penalty} ≤ 1` when the
    /// penalty is nonnegative. The selector sees `Z` (or the exponents).
    SharedGaussian { mean: f64, variance: f64, penalties: Vec<f64>, selector: SelectorRule },
    /// Independent per-weight draws `X_η ~ members[k]`; a posterior on the
    /// grid is formed from the drawn values, the weight is sampled from it,
    /// and `W_η̂ = X_η̂ − log(π̂(η̂)/π0(η̂))/η̂` embeds the likelihood-ratio
    /// penalty.
    IndependentMembers { members: Vec<RandomVariableModel>, prior: DiscreteMeasure, posterior: PosteriorRule },
}

/// A random-weight inequality scenario: grid, joint law, and a free-text
/// description of how the selector depends on the draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomEtaScenario {
    pub grid: Vec<f64>,
    pub joint: RandomEtaJoint,
    pub selector_note: String,
}

impl RandomEtaScenario {
    pub fn validate(&self) -> Result<(), RandomEtaError> {
        if self.grid.is_empty() {
            return Err(RandomEtaError::EmptyGrid);
        }
        for (k, &eta) in self.grid.iter().enumerate() {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(RandomEtaError::InvalidParams(format!(
                    "grid weight {k} must be a finite positive real, got {eta}"
                )));
            }
        }
        let m = self.grid.len();
        match &self.joint {
            RandomEtaJoint::FiniteDiscrete { outcomes } => {
                if outcomes.is_empty() {
                    return Err(RandomEtaError::InvalidParams("finite joint law needs at least one outcome".into()));
                }
                let mut sum = 0.0;
                for (o, out) in outcomes.iter().enumerate() {
                    if !(out.prob.is_finite() && out.prob >= 0.0) {
                        return Err(RandomEtaError::InvalidParams(format!(
                            "outcome {o} probability must be a finite nonnegative real, got {}",
                            out.prob
                        )));
                    }
                    sum += out.prob;
                    if out.eta_index >= m {
                        return Err(RandomEtaError::InvalidParams(format!(
                            "outcome {o} selects weight index {} but the grid has {m} entries",
                            out.eta_index
                        )));
                    }
                    if out.w.len() != m {
                        return Err(RandomEtaError::InvalidParams(format!(
                            "outcome {o} carries {} W values for a grid of {m}",
                            out.w.len()
                        )));
                    }
                    if out.w.iter().any(|v| !v.is_finite()) {
                        return Err(RandomEtaError::InvalidParams(format!("outcome {o} has a non-finite W value")));
                    }
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(RandomEtaError::InvalidParams(format!(
                        "outcome probabilities must sum to 1 within 1e-12, got {sum}"
                    )));
                }
            }
            RandomEtaJoint::SharedGaussian { mean, variance, penalties, selector } => {
                if !(mean.is_finite() && variance.is_finite() && *variance > 0.0) {
                    return Err(RandomEtaError::InvalidParams(format!(
                        "shared Gaussian needs finite mean and positive variance, got ({mean}, {variance})"
                    )));
                }
                if penalties.len() != m {
                    return Err(RandomEtaError::InvalidParams(format!(
                        "got {} penalties for a grid of {m}; one per weight",
                        penalties.len()
                    )));
                }
                if penalties.iter().any(|p| !p.is_finite()) {
                    return Err(RandomEtaError::InvalidParams("penalties must be finite".into()));
                }
                validate_selector(selector, m)?;
            }
            RandomEtaJoint::IndependentMembers { members, prior, posterior } => {
                if members.len() != m {
                    return Err(RandomEtaError::InvalidParams(format!(
                        "got {} member models for a grid of {m}; one per weight",
                        members.len()
                    )));
                }
                for member in members {
                    member.validate()?;
                }
                if prior.len() != m {
                    return Err(RandomEtaError::InvalidParams(format!(
                        "prior has {} weights for a grid of {m}",
                        prior.len()
                    )));
                }
                match posterior {
                    PosteriorRule::Prior => {}
                    PosteriorRule::Constant { index } => {
                        if *index >= m {
                            return Err(RandomEtaError::InvalidParams(format!(
                                "posterior point mass on index {index}, grid has {m} entries"
                            )));
                        }
                        if prior.weights()[*index] == 0.0 {
                            return Err(RandomEtaError::SupportViolation(format!(
                                "posterior puts mass on weight index {index} where the prior weight is 0"
                            )));
                        }
                    }
                    PosteriorRule::ArgminMember => {
                        if let Some(k) = prior.weights().iter().position(|&p| p == 0.0) {
                            return Err(RandomEtaError::SupportViolation(format!(
                                "the argmin pick can select weight index {k} where the prior weight is 0"
                            )));
                        }
                    }
                    PosteriorRule::ExponentialWeights { temperature } => {
                        if !temperature.is_finite() {
                            return Err(RandomEtaError::InvalidParams(format!(
                                "exponential-weights temperature must be finite, got {temperature}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact enumeration `(prob, selected index, W_η̂)` when the joint law is
    /// finite; `None` for simulation-only scenarios.
    pub fn closed_form(&self) -> Option<Vec<(f64, usize, f64)>> {
        match &self.joint {
            RandomEtaJoint::FiniteDiscrete { outcomes } => {
                Some(outcomes.iter().map(|o| (o.prob, o.eta_index, o.w[o.eta_index])).collect())
            }
            _ => None,
        }
    }

    /// The exact exponential moment `E[e^{η̂ W_η̂}]` when enumerable.
    pub fn closed_form_moment(&self) -> Option<f64> {
        self.closed_form().map(|rows| {
            rows.iter().map(|&(p, k, w)| p * (self.grid[k] * w).exp()).sum()
        })
    }

    /// One draw: the selected grid index and the selected `W` value.
    fn draw(&self, rng: &mut ChaCha12Rng) -> (usize, f64) {
        use rand::Rng;
        match &self.joint {
            RandomEtaJoint::FiniteDiscrete { outcomes } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for out in outcomes {
                    acc += out.prob;
                    if u < acc {
                        return (out.eta_index, out.w[out.eta_index]);
                    }
                }
                let last = outcomes.last().expect("validated nonempty");
                (last.eta_index, last.w[last.eta_index])
            }
            RandomEtaJoint::SharedGaussian { mean, variance, penalties, selector } => {
                let z: f64 = mean + variance.sqrt() * rand_distr::StandardNormal.sample_from(rng);
                let w_at = |k: usize| (z - mean) - self.grid[k] * variance / 2.0 - penalties[k];
                let k = match selector {
                    SelectorRule::Constant { index } => *index,
                    SelectorRule::Threshold { cuts } => cuts.iter().filter(|&&c| z >= c).count(),
                    SelectorRule::GreedyExponent => {
                        let mut best = 0;
                        for k in 1..self.grid.len() {
                            if self.grid[k] * w_at(k) > self.grid[best] * w_at(best) {
                                best = k;
                            }
                        }
                        best
                    }
                };
                (k, w_at(k))
            }
            RandomEtaJoint::IndependentMembers { members, prior, posterior } => {
                let x: Vec<f64> = members.iter().map(|m| m.sample(rng)).collect();
                let p0 = prior.weights();
                let (k, ratio) = match posterior {
                    PosteriorRule::Prior => (prior.sample_index(rng), 1.0),
                    PosteriorRule::Constant { index } => (*index, 1.0 / p0[*index]),
                    PosteriorRule::ArgminMember => {
                        let mut best = 0;
                        for k in 1..x.len() {
                            if x[k] < x[best] {
                                best = k;
                            }
                        }
                        (best, 1.0 / p0[best])
                    }
                    PosteriorRule::ExponentialWeights { temperature } => {
                        let logits: Vec<f64> = x.iter().map(|&v| -temperature * v).collect();
                        let top = logits
                            .iter()
                            .zip(p0)
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(&l, _)| l)
                            .fold(f64::NEG_INFINITY, f64::max);
                        let weights: Vec<f64> =
                            logits.iter().zip(p0).map(|(&l, &p)| p * (l - top).exp()).collect();
                        let z: f64 = weights.iter().sum();
                        let u: f64 = rng.gen::<f64>() * z;
                        let mut acc = 0.0;
                        let mut k = weights.len() - 1;
                        for (i, &wt) in weights.iter().enumerate() {
                            acc += wt;
                            if u < acc {
                                k = i;
                                break;
                            }
                        }
                        // ratio = π̂(k)/π0(k) = e^{logit_k − top} / z.
                        ((k), (logits[k] - top).exp() / z)
                    }
                };
                (k, x[k] - ratio.ln() / self.grid[k])
            }
        }
    }
}

fn validate_selector(selector: &SelectorRule, m: usize) -> Result<(), RandomEtaError> {
    match selector {
        SelectorRule::Constant { index } => {
            if *index >= m {
                return Err(RandomEtaError::InvalidParams(format!(
                    "selector index {index} out of range for a grid of {m}"
                )));
            }
        }
        SelectorRule::Threshold { cuts } => {
            if cuts.len() + 1 != m {
                return Err(RandomEtaError::InvalidParams(format!(
                    "threshold selector needs {} cuts for a grid of {m}, got {}",
                    m - 1,
                    cuts.len()
                )));
            }
            if cuts.windows(2).any(|w| w[0] > w[1]) || cuts.iter().any(|c| !c.is_finite()) {
                return Err(RandomEtaError::InvalidParams("threshold cuts must be finite and ascending".into()));
            }
        }
        SelectorRule::GreedyExponent => {}
    }
    Ok(())
}

// rand_distr's Distribution trait via a tiny shim so the call sites stay
// explicit about what is being sampled.
trait SampleFrom {
    fn sample_from(self, rng: &mut ChaCha12Rng) -> f64;
}

impl SampleFrom for rand_distr::StandardNormal {
    fn sample_from(self, rng: &mut ChaCha12Rng) -> f64 {
        rand_distr::Distribution::sample(&self, rng)
    }
}

/// The two-state joint law whose exponential moment ignores its parameters.
///
/// Grid `{1/(−c1), 1/c2}` with `c1 < 0 < c2`; the low weight is selected
/// with probability `p_low` and sees `W ≡ c1`, the high weight sees
/// `W ≡ c2`. Then `E[e^{η̂ W_η̂}] = p_low·e^{−1} + (1 − p_low)·e` whatever
/// `(c1, c2)` are, while `E[W_η̂] = p_low·c1 + (1 − p_low)·c2` grows
/// linearly in `c2` — the additive `1/η̂` in the in-expectation reading
/// cannot be dropped.
pub fn unbounded_mean_scenario(c1: f64, c2: f64, p_low: f64) -> Result<RandomEtaScenario, RandomEtaError> {
    if !(c1.is_finite() && c2.is_finite() && c1 < 0.0 && c2 > 0.0) {
        return Err(RandomEtaError::InvalidParams(format!("need c1 < 0 < c2, got ({c1}, {c2})")));
    }
    if !(p_low.is_finite() && (0.0..=1.0).contains(&p_low)) {
        return Err(RandomEtaError::InvalidParams(format!("p_low must lie in [0, 1], got {p_low}")));
    }
    let scenario = RandomEtaScenario {
        grid: vec![1.0 / (-c1), 1.0 / c2],
        joint: RandomEtaJoint::FiniteDiscrete {
            outcomes: vec![
                DiscreteOutcome { prob: p_low, eta_index: 0, w: vec![c1, c2] },
                DiscreteOutcome { prob: 1.0 - p_low, eta_index: 1, w: vec![c1, c2] },
            ],
        },
        selector_note: format!(
            "two-state selector: weight 1/(-c1) with probability {p_low} seeing W = c1, else weight 1/c2 seeing W = c2"
        ),
    };
    scenario.validate()?;
    Ok(scenario)
}

const TAG_VERIFY: u64 = 0x7261_6e64_0001;
const TAG_BOUNDS: u64 = 0x7261_6e64_0002;
const TAG_SUM: u64 = 0x7261_6e64_0003;

/// Verify `E[e^{η̂ W_η̂}] ≤ 1` for a scenario.
///
/// Finite joint laws are enumerated exactly (routed through the fixed-scale
/// verifier on the scaled variable `η̂·W_η̂` at weight one); simulation
/// scenarios are estimated by Monte Carlo with the standard verdict bands.
/// The reported margin is `−log E[e^{η̂ W_η̂}]`, so `Holds` means the moment
/// is at most one.
pub fn verify_random_eta(
    scenario: &RandomEtaScenario,
    budget: &EvalBudget,
) -> Result<VerificationReport, RandomEtaError> {
    scenario.validate()?;
    let label = format!(
        "random-weight inequality over a grid of {} ({})",
        scenario.grid.len(),
        scenario.selector_note
    );

    if let Some(rows) = scenario.closed_form() {
        // The scaled variable η̂·W_η̂ is itself finite-discrete.
        let atoms: Vec<(f64, f64)> = rows.iter().map(|&(p, k, w)| (scenario.grid[k] * w, p)).collect();
        let cert = EsiCertificate::strong(label, RandomVariableModel::finite_discrete(atoms), CertRhs::zero(), 1.0);
        let grid = GridSpec::default();
        return Ok(verify_esi(&cert, &grid, budget)?);
    }

    let est = mc_multi(budget, TAG_VERIFY, 1, |rng, out| {
        let (k, w) = scenario.draw(rng);
        out[0] = (scenario.grid[k] * w).exp();
    })
    .remove(0);
    // Margin on the log scale, se by the delta method.
    let margin = -est.mean.ln();
    let se = if est.mean > 0.0 { est.se / est.mean } else { f64::INFINITY };
    let band = budget.k_sigma * se;
    let verdict = if margin >= band {
        Verdict::Holds
    } else if margin <= -band {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };
    Ok(VerificationReport {
        label,
        verdict,
        worst_margin: margin,
        worst_eps: 0.0,
        worst_se: se,
        points: vec![MarginPoint { eps: 0.0, margin, se }],
        method: EvalMethod::MonteCarlo { sample_count: est.n, seed: budget.seed },
        k_sigma: budget.k_sigma,
        notes: vec!["margin is −log E[exp(selected weight × selected W)]".into()],
    })
}

/// Deviation, in-expectation, and partial-converse checks for a verified
/// scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomEtaBounds {
    pub delta: f64,
    /// Frequency of `{W_η̂ ≤ log(1/δ)/η̂}`; must reach `1 − δ`.
    pub hp_frequency: f64,
    pub hp_required: f64,
    pub hp_se: f64,
    pub hp_pass: bool,
    /// `E[W_η̂]` against `E[1/η̂]` — the in-expectation reading keeps the
    /// additive `1/η̂`.
    #[serde(with = "crate::serde_float")]
    pub expectation_lhs: f64,
    #[serde(with = "crate::serde_float")]
    pub expectation_rhs: f64,
    /// Standard error of the paired difference `W_η̂ − 1/η̂`.
    pub expectation_se: f64,
    pub expectation_pass: bool,
    /// `log 2 − log E[e^{(η̂/2) W_η̂}]`: nonnegative iff the half-weight
    /// inequality with offset `(2 log 2)/η̂` holds.
    #[serde(with = "crate::serde_float")]
    pub converse_margin: f64,
    pub converse_se: f64,
    pub converse_pass: bool,
    pub method: EvalMethod,
}

/// Extract the random-weight consequences of a verified scenario.
///
/// Requires `verify_random_eta` to return `Holds` (else
/// [`RandomEtaError::UnverifiedScenario`]). Checks, at confidence `delta`:
/// the deviation bound `P(W_η̂ ≤ log(1/δ)/η̂) ≥ 1 − δ`; the in-expectation
/// bound `E[W_η̂] ≤ E[1/η̂]`; and the partial converse
/// `W_η̂ ≼_{η̂/2} (2 log 2)/η̂`, which is implied by the deviation bounds
/// alone (at every `δ` simultaneously) without the exponential-moment
/// premise.
pub fn random_eta_bounds(
    scenario: &RandomEtaScenario,
    delta: f64,
    budget: &EvalBudget,
) -> Result<RandomEtaBounds, RandomEtaError> {
    let report = verify_random_eta(scenario, budget)?;
    if report.verdict != Verdict::Holds {
        return Err(RandomEtaError::UnverifiedScenario(format!(
            "verification verdict is {:?} with worst margin {}; bounds need a verified scenario",
            report.verdict, report.worst_margin
        )));
    }
    bounds_for_verified(scenario, delta, budget)
}

/// The bound computations without the verification gate, for callers that
/// hold a structural proof of the scenario (a theorem-derived construction)
/// rather than a numerical verdict. Boundary scenarios with
/// `E[e^{η̂ W_η̂}] = 1` exactly are legitimate there but can never clear a
/// Monte-Carlo `Holds` band.
fn bounds_for_verified(
    scenario: &RandomEtaScenario,
    delta: f64,
    budget: &EvalBudget,
) -> Result<RandomEtaBounds, RandomEtaError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(RandomEtaError::InvalidParams(format!("delta must lie in (0, 1), got {delta}")));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let ln2 = std::f64::consts::LN_2;

    if let Some(rows) = scenario.closed_form() {
        let mut freq = 0.0;
        let mut e_w = 0.0;
        let mut e_inv = 0.0;
        let mut half_moment = 0.0;
        for &(p, k, w) in &rows {
            let eta = scenario.grid[k];
            if w <= log_inv_delta / eta + NUMERIC_GRACE {
                freq += p;
            }
            e_w += p * w;
            e_inv += p / eta;
            half_moment += p * (eta / 2.0 * w).exp();
        }
        return Ok(RandomEtaBounds {
            delta,
            hp_frequency: freq,
            hp_required: 1.0 - delta,
            hp_se: 0.0,
            hp_pass: freq >= 1.0 - delta - NUMERIC_GRACE,
            expectation_lhs: e_w,
            expectation_rhs: e_inv,
            expectation_se: 0.0,
            expectation_pass: e_w <= e_inv + NUMERIC_GRACE,
            converse_margin: ln2 - half_moment.ln(),
            converse_se: 0.0,
            converse_pass: ln2 - half_moment.ln() >= -NUMERIC_GRACE,
            method: EvalMethod::ClosedForm,
        });
    }

    // Single pass, five statistics: indicator, W, 1/η̂, the paired
    // difference, and the half-weight exponent.
    let est = mc_multi(budget, TAG_BOUNDS, 5, |rng, out| {
        let (k, w) = scenario.draw(rng);
        let eta = scenario.grid[k];
        out[0] = if w <= log_inv_delta / eta { 1.0 } else { 0.0 };
        out[1] = w;
        out[2] = 1.0 / eta;
        out[3] = w - 1.0 / eta;
        out[4] = (eta / 2.0 * w).exp();
    });
    let (ind, e_w, e_inv, diff, half) = (est[0], est[1], est[2], est[3], est[4]);
    let k_sig = budget.k_sigma;
    let converse_margin = ln2 - half.mean.ln();
    let converse_se = if half.mean > 0.0 { half.se / half.mean } else { f64::INFINITY };
    Ok(RandomEtaBounds {
        delta,
        hp_frequency: ind.mean,
        hp_required: 1.0 - delta,
        hp_se: ind.se,
        hp_pass: ind.mean >= 1.0 - delta - k_sig * ind.se,
        expectation_lhs: e_w.mean,
        expectation_rhs: e_inv.mean,
        expectation_se: diff.se,
        expectation_pass: diff.mean <= k_sig * diff.se,
        converse_margin,
        converse_se,
        converse_pass: converse_margin >= -k_sig * converse_se,
        method: EvalMethod::MonteCarlo { sample_count: ind.n, seed: budget.seed },
    })
}

/// Whether conditional inequalities are verified or trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionMode {
    /// Verify each per-slot, per-weight inequality before simulating.
    #[default]
    Strict,
    /// Trust the caller's assertion that the inequalities hold.
    Permissive,
}

/// How the sum scenario picks its weight from the drawn slot values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SumSelector {
    Constant { index: usize },
    /// `index = #{cuts ≤ Σ_i X_{i, at_index}}` for ascending cuts.
    ThresholdOnSum { at_index: usize, cuts: Vec<f64> },
    /// Adversarial: the index maximizing `η_k · Σ_i X_{i,k}`.
    GreedyExponent,
}

/// A sum of per-slot variables with a data-dependent weight.
///
/// `members` holds one model per grid weight (one row, broadcast to all `n`
/// slots) or one row per slot (`n` rows). Slot draws are independent across
/// slots; within a slot, the per-weight values are drawn independently too.
/// Because each `X_{i,η}` depends only on its own slot's draw, the
/// conditional inequality given all other slots coincides with the marginal
/// one, which is what strict mode verifies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomEtaSumSpec {
    pub grid: Vec<f64>,
    pub n: u32,
    pub members: Vec<Vec<RandomVariableModel>>,
    pub selector: SumSelector,
    #[serde(default)]
    pub mode: AssumptionMode,
}

/// Monte-Carlo comparison of `E[Σ_i X_{i,η̂}]` with `E[(log|G| + 1)/η̂]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomEtaSumReport {
    /// `E[Σ_i X_{i,η̂}]`.
    #[serde(with = "crate::serde_float")]
    pub lhs: f64,
    /// `E[(log|G| + 1)/η̂]`.
    #[serde(with = "crate::serde_float")]
    pub rhs: f64,
    /// Standard error of the paired difference `lhs − rhs`.
    pub margin_se: f64,
    pub pass: bool,
    pub sample_count: u64,
    pub assumption_notes: Vec<String>,
}

/// Certify and measure the sum bound with a data-dependent weight.
///
/// For any selector of `η̂ ∈ G` from the drawn slot values, provided every
/// per-slot variable satisfies `X_{i,η} ≼_η 0` conditionally on the other
/// slots, the sum obeys `E[Σ_i X_{i,η̂}] ≤ E[(log|G| + 1)/η̂]`. Strict mode
/// verifies the per-slot inequalities (on marginals, which here coincide
/// with the conditionals) and fails with
/// [`RandomEtaError::AssumptionUnverified`] if any does not hold; permissive
/// mode trusts the caller. The report asserts `lhs ≤ rhs` within the
/// `k_sigma` band.
pub fn random_eta_sum(spec: &RandomEtaSumSpec, budget: &EvalBudget) -> Result<RandomEtaSumReport, RandomEtaError> {
    if spec.grid.is_empty() {
        return Err(RandomEtaError::EmptyGrid);
    }
    for &eta in &spec.grid {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(RandomEtaError::InvalidParams(format!("grid weights must be finite positive reals, got {eta}")));
        }
    }
    if spec.n == 0 {
        return Err(RandomEtaError::InvalidParams("the sum needs at least one slot".into()));
    }
    let m = spec.grid.len();
    let n = spec.n as usize;
    if spec.members.len() != 1 && spec.members.len() != n {
        return Err(RandomEtaError::InvalidParams(format!(
            "members must have 1 row (broadcast) or {n} rows, got {}",
            spec.members.len()
        )));
    }
    for (i, row) in spec.members.iter().enumerate() {
        if row.len() != m {
            return Err(RandomEtaError::InvalidParams(format!(
                "member row {i} has {} models for a grid of {m}",
                row.len()
            )));
        }
    }
    match &spec.selector {
        SumSelector::Constant { index } if *index >= m => {
            return Err(RandomEtaError::InvalidParams(format!("selector index {index} out of range for a grid of {m}")));
        }
        SumSelector::ThresholdOnSum { at_index, cuts } => {
            if *at_index >= m {
                return Err(RandomEtaError::InvalidParams(format!(
                    "selector reference index {at_index} out of range for a grid of {m}"
                )));
            }
            if cuts.len() + 1 != m {
                return Err(RandomEtaError::InvalidParams(format!(
                    "threshold selector needs {} cuts for a grid of {m}, got {}",
                    m - 1,
                    cuts.len()
                )));
            }
            if cuts.windows(2).any(|w| w[0] > w[1]) || cuts.iter().any(|c| !c.is_finite()) {
                return Err(RandomEtaError::InvalidParams("threshold cuts must be finite and ascending".into()));
            }
        }
        _ => {}
    }

    let mut notes = Vec::new();
    match spec.mode {
        AssumptionMode::Strict => {
            let grid_spec = GridSpec { eps_min: 1e-6, eps_max: 10.0, points: 16, refine: 2 };
            for (i, row) in spec.members.iter().enumerate() {
                for (k, model) in row.iter().enumerate() {
                    let cert = EsiCertificate::strong(
                        format!("slot {i} at weight {}", spec.grid[k]),
                        model.clone(),
                        CertRhs::zero(),
                        spec.grid[k],
                    );
                    let report = verify_esi(&cert, &grid_spec, budget)?;
                    if report.verdict != Verdict::Holds {
                        return Err(RandomEtaError::AssumptionUnverified(format!(
                            "slot row {i}, weight {} ({}): verdict {:?}, worst margin {}",
                            spec.grid[k], cert.label, report.verdict, report.worst_margin
                        )));
                    }
                }
            }
            notes.push(format!(
                "strict mode: {} per-slot inequalities verified on marginals (own-slot dependence makes conditionals coincide)",
                spec.members.len() * m
            ));
        }
        AssumptionMode::Permissive => {
            notes.push("permissive mode: per-slot inequalities asserted by the caller, not verified".into());
        }
    }

    let penalty = ( (m as f64).ln() + 1.0, );
    let est = mc_multi(budget, TAG_SUM, 3, |rng, out| {
        // Draw the full n × m matrix of slot values.
        let mut sums = vec![0.0; m];
        let mut matrix = vec![0.0; n * m];
        for i in 0..n {
            let row = if spec.members.len() == 1 { &spec.members[0] } else { &spec.members[i] };
            for k in 0..m {
                let v = row[k].sample(rng);
                matrix[i * m + k] = v;
                sums[k] += v;
            }
        }
        let k_hat = match &spec.selector {
            SumSelector::Constant { index } => *index,
            SumSelector::ThresholdOnSum { at_index, cuts } => cuts.iter().filter(|&&c| sums[*at_index] >= c).count(),
            SumSelector::GreedyExponent => {
                let mut best = 0;
                for k in 1..m {
                    if spec.grid[k] * sums[k] > spec.grid[best] * sums[best] {
                        best = k;
                    }
                }
                best
            }
        };
        let lhs = sums[k_hat];
        let rhs = penalty.0 / spec.grid[k_hat];
        out[0] = lhs;
        out[1] = rhs;
        out[2] = lhs - rhs;
        let _ = &matrix;
    });
    let (lhs, rhs, diff) = (est[0], est[1], est[2]);
    Ok(RandomEtaSumReport {
        lhs: lhs.mean,
        rhs: rhs.mean,
        margin_se: diff.se,
        pass: diff.mean <= budget.k_sigma * diff.se,
        sample_count: lhs.n,
        assumption_notes: notes,
    })
}

/// A random-weight certificate derived from per-weight certificates, with
/// its verification and extracted bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomEtaPacBayes {
    /// The derived scenario: `W_η̂ = X_η̂ − log(dΠ̂/dΠ0)|_η̂ / η̂`.
    pub scenario: RandomEtaScenario,
    pub penalty_description: String,
    /// Verification of `E[e^{η̂ W_η̂}] ≤ 1`.
    pub verification: VerificationReport,
    /// The corollary's deviation bound (penalty + log(1/δ), all over η̂) and
    /// in-expectation bound (penalty + 1, over η̂).
    pub bounds: RandomEtaBounds,
}

/// Combine per-weight certificates into a random-weight certificate.
///
/// Given `X_η ≼_η 0` for every grid weight (verified here; failure is
/// [`RandomEtaError::AssumptionUnverified`]), a prior on the grid, and a
/// per-draw posterior rule absolutely continuous w.r.t. the prior, the
/// selected weight `η̂ ~ Π̂` satisfies
///
/// ```text
/// X_η̂ ≼_η̂ log(dΠ̂/dΠ0)|_η̂ / η̂,
/// ```
///
/// with the penalty reducing to `−log π0(η̂)` for a degenerate posterior.
/// The derived scenario couples the members independently (the claim holds
/// for any coupling) and embeds the penalty; its verification and the
/// corollary bounds at `delta` are returned. With a single grid weight and
/// posterior = prior this is the identity transform on the input
/// certificate.
pub fn pacbayes_on_eta(
    grid: &[f64],
    prior: &DiscreteMeasure,
    posterior: &PosteriorRule,
    certs: &[EsiCertificate],
    delta: f64,
    budget: &EvalBudget,
) -> Result<RandomEtaPacBayes, RandomEtaError> {
    if grid.is_empty() {
        return Err(RandomEtaError::EmptyGrid);
    }
    if certs.len() != grid.len() {
        return Err(RandomEtaError::InvalidParams(format!(
            "got {} certificates for a grid of {}; one per weight",
            certs.len(),
            grid.len()
        )));
    }
    let grid_spec = GridSpec { eps_min: 1e-6, eps_max: 10.0, points: 16, refine: 2 };
    let mut members = Vec::with_capacity(certs.len());
    for (k, cert) in certs.iter().enumerate() {
        let eta = cert.scale.as_constant().ok_or_else(|| {
            RandomEtaError::InvalidParams(format!("certificate {k} must carry a constant scale"))
        })?;
        if (eta - grid[k]).abs() > 1e-12 {
            return Err(RandomEtaError::InvalidParams(format!(
                "certificate {k} has weight {eta} but grid entry {k} is {}",
                grid[k]
            )));
        }
        let zero_rhs = matches!(cert.rhs.body, crate::verify::RhsBody::Zero)
            && cert.rhs.offset.constant == 0.0
            && cert.rhs.offset.over_u == 0.0;
        if !zero_rhs {
            return Err(RandomEtaError::InvalidParams(format!(
                "certificate {k} must claim ≼ 0 (zero body, zero offsets); fold constants into the left-hand side"
            )));
        }
        let report = verify_esi(cert, &grid_spec, budget)?;
        if report.verdict != Verdict::Holds {
            return Err(RandomEtaError::AssumptionUnverified(format!(
                "certificate {k} (weight {}) has verdict {:?}, worst margin {}",
                grid[k], report.verdict, report.worst_margin
            )));
        }
        members.push(cert.lhs.clone());
    }

    let penalty_description = match posterior {
        PosteriorRule::Prior => "posterior equals the prior: the log-ratio penalty is identically zero".to_string(),
        PosteriorRule::Constant { index } => format!(
            "degenerate posterior on weight index {index}: penalty −log π0(η̂) = {}",
            -prior.weights().get(*index).copied().unwrap_or(f64::NAN).ln()
        ),
        PosteriorRule::ArgminMember => {
            "degenerate posterior on the smallest drawn member: penalty −log π0(η̂) at the realized pick".to_string()
        }
        PosteriorRule::ExponentialWeights { temperature } => format!(
            "exponential-weights posterior at temperature {temperature}: penalty log(π̂(η̂)/π0(η̂)) per draw"
        ),
    };

    let scenario = RandomEtaScenario {
        grid: grid.to_vec(),
        joint: RandomEtaJoint::IndependentMembers {
            members,
            prior: prior.clone(),
            posterior: posterior.clone(),
        },
        selector_note: penalty_description.clone(),
    };
    scenario.validate()?;

    let verification = verify_random_eta(&scenario, budget)?;
    if verification.verdict == Verdict::Fails {
        return Err(RandomEtaError::UnverifiedScenario(format!(
            "derived random-weight certificate fails verification with margin {}",
            verification.worst_margin
        )));
    }
    // The per-weight premises were verified above, so the combination
    // theorem certifies the derived scenario structurally; `Inconclusive`
    // here only means the moment sits at its boundary value of one (e.g.
    // posterior = prior), which Monte Carlo cannot resolve into `Holds`.
    let bounds = bounds_for_verified(&scenario, delta, budget)?;
    Ok(RandomEtaPacBayes { scenario, penalty_description, verification, bounds })
}
