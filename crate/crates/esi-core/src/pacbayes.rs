//! PAC-Bayesian combinators over finite hypothesis families.
//!
//! Given a finite family of per-member random losses, a prior weighting, and
//! a posterior weighting, these combinators certify exponential inequalities
//! for the *posterior-averaged* loss. The price of averaging is always the
//! same: a `KL(posterior ‖ prior) / eta` offset on the right-hand side.
//! Three variants are offered, differing in what they assume and in the
//! annealed correction they carry:
//!
//! * **part 1** — no assumption on the members; the bound carries an
//!   annealed term computed over the *prior mixture*.
//! * **part 2** — every member must already satisfy `X_f ≼_eta 0`; the bound
//!   is the bare `KL / eta` offset.
//! * **part 3** — no assumption; each member is recentered by its own
//!   annealed expectation, so the bound carries the *posterior-expected*
//!   annealed term. This is part 2 applied to the recentered family.
//!
//! With `n_copies > 1` every member is first replaced by the average of `n`
//! independent copies, and the scale is raised to `n·eta`; the averaged
//! member's annealed expectation at `n·eta` coincides with the single-copy
//! value at `eta`, which is what makes the excess-risk reading of
//! [`zhang_bound`] work: the offset decays like `KL / (n·eta)` while the
//! annealed center stays put.
//!
//! The emitted certificates instantiate the posterior average under the
//! independent coupling of the members. The underlying inequalities hold for
//! *any* joint coupling (their proof bounds the posterior-averaged exponent
//! pointwise per outcome), so the independent instance is one concrete,
//! numerically checkable witness of the claim.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characterization::FamilySpec;
use crate::exec::{mc_mean, EvalBudget};
use crate::measure::model::{RandomVariableModel, TransformOp};
use crate::measure::{annealed_expectation, MeasureError};
use crate::verify::{CertRhs, EsiCertificate, RhsBody, RhsOffset, VerifyError, NUMERIC_GRACE};

/// Sum-to-one tolerance for [`DiscreteMeasure`] weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Errors from the PAC-Bayes combinators.
#[derive(Debug, Error)]
pub enum PacBayesError {
    /// The posterior charges a member the prior gives zero weight.
    #[error("support violation: {0}")]
    SupportViolation(String),
    /// Part 2 requires every member to be certified `X_f ≼_eta 0` first.
    #[error("missing certificates: {0}")]
    MissingCertificates(String),
    /// A loss model puts mass outside `[0, 1]`.
    #[error("loss out of range: {0}")]
    LossOutOfRange(String),
    /// Malformed inputs (weights, eta, copies, lengths).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// A finite probability measure over family members, indexed by position.
///
/// Weights are nonnegative and sum to one within [`WEIGHT_SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validate and wrap a weight vector.
    pub fn new(weights: Vec<f64>) -> Result<DiscreteMeasure, PacBayesError> {
        if weights.is_empty() {
            return Err(PacBayesError::InvalidParams("a discrete measure needs at least one weight".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(PacBayesError::InvalidParams(format!(
                    "weight {i} must be a finite nonnegative real, got {w}"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(PacBayesError::InvalidParams(format!(
                "weights must sum to 1 within {WEIGHT_SUM_TOL:e}, got {sum}"
            )));
        }
        Ok(DiscreteMeasure { weights })
    }

    /// The uniform measure on `m` members.
    pub fn uniform(m: usize) -> Result<DiscreteMeasure, PacBayesError> {
        if m == 0 {
            return Err(PacBayesError::InvalidParams("uniform measure needs at least one member".into()));
        }
        DiscreteMeasure::new(vec![1.0 / m as f64; m])
    }

    /// The point mass on member `at` among `m` members.
    pub fn degenerate(m: usize, at: usize) -> Result<DiscreteMeasure, PacBayesError> {
        if at >= m {
            return Err(PacBayesError::InvalidParams(format!("point mass index {at} out of range for {m} members")));
        }
        let mut w = vec![0.0; m];
        w[at] = 1.0;
        DiscreteMeasure::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Draw a member index with probability equal to its weight.
    pub fn sample_index(&self, rng: &mut ChaCha12Rng) -> usize {
        use rand::Rng;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

impl TryFrom<Vec<f64>> for DiscreteMeasure {
    type Error = PacBayesError;
    fn try_from(weights: Vec<f64>) -> Result<DiscreteMeasure, PacBayesError> {
        DiscreteMeasure::new(weights)
    }
}

impl From<DiscreteMeasure> for Vec<f64> {
    fn from(m: DiscreteMeasure) -> Vec<f64> {
        m.weights
    }
}

/// `KL(posterior ‖ prior) = Σ_i q_i log(q_i / p_i)` with `0·log 0 = 0`.
///
/// Fails with [`PacBayesError::SupportViolation`] when the posterior charges
/// a member outside the prior's support.
pub fn kl_discrete(posterior: &DiscreteMeasure, prior: &DiscreteMeasure) -> Result<f64, PacBayesError> {
    if posterior.len() != prior.len() {
        return Err(PacBayesError::InvalidParams(format!(
            "posterior has {} weights but prior has {}",
            posterior.len(),
            prior.len()
        )));
    }
    let mut kl = 0.0;
    for (i, (&q, &p)) in posterior.weights.iter().zip(&prior.weights).enumerate() {
        if q == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Err(PacBayesError::SupportViolation(format!(
                "posterior weight {q} on member {i} where the prior weight is 0"
            )));
        }
        kl += q * (q / p).ln();
    }
    Ok(kl)
}

/// Which PAC-Bayes statement a bound instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum PacBayesPart {
    /// Prior-mixture annealed term, no assumption on the members.
    One,
    /// Bare `KL / eta` offset; members must satisfy `X_f ≼_eta 0`.
    Two,
    /// Posterior-expected annealed term via per-member recentering.
    Three,
}

impl From<PacBayesPart> for u8 {
    fn from(p: PacBayesPart) -> u8 {
        match p {
            PacBayesPart::One => 1,
            PacBayesPart::Two => 2,
            PacBayesPart::Three => 3,
        }
    }
}

impl TryFrom<u8> for PacBayesPart {
    type Error = String;
    fn try_from(v: u8) -> Result<PacBayesPart, String> {
        match v {
            1 => Ok(PacBayesPart::One),
            2 => Ok(PacBayesPart::Two),
            3 => Ok(PacBayesPart::Three),
            other => Err(format!("part must be 1, 2, or 3, got {other}")),
        }
    }
}

/// A numeric PAC-Bayes bound on the posterior-averaged variable.
///
/// `bound_value` is the deterministic right-hand side certified for the
/// posterior average: `kl / eta` plus the part's annealed term (absent for
/// part 2). `eta` is the *effective* weight, i.e. `n_copies` times the
/// per-copy weight when averaging was applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacBayesBound {
    pub part: PacBayesPart,
    #[serde(with = "crate::serde_float")]
    pub eta: f64,
    #[serde(with = "crate::serde_float")]
    pub kl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annealed_term: Option<f64>,
    #[serde(with = "crate::serde_float")]
    pub bound_value: f64,
}

fn check_alignment(
    family: &FamilySpec,
    prior: &DiscreteMeasure,
    posterior: &DiscreteMeasure,
) -> Result<(), PacBayesError> {
    let m = family.members.len();
    if prior.len() != m || posterior.len() != m {
        return Err(PacBayesError::InvalidParams(format!(
            "family has {m} members but prior has {} weights and posterior has {}",
            prior.len(),
            posterior.len()
        )));
    }
    Ok(())
}

/// Average of `n` independent copies of `member`, as a model.
fn averaged_member(member: &RandomVariableModel, n_copies: u32) -> RandomVariableModel {
    if n_copies == 1 {
        return member.clone();
    }
    member
        .clone()
        .transformed(TransformOp::SumOfIidCopies { n: n_copies })
        .transformed(TransformOp::AffineScale { a: 1.0 / n_copies as f64, b: 0.0 })
}

/// Posterior-weighted average `Σ_f q_f X_f` under the independent coupling.
fn posterior_average(
    members: &[RandomVariableModel],
    posterior: &DiscreteMeasure,
) -> Result<RandomVariableModel, PacBayesError> {
    let mut acc: Option<RandomVariableModel> = None;
    for (model, &q) in members.iter().zip(posterior.weights()) {
        if q == 0.0 {
            continue;
        }
        let scaled = if q == 1.0 {
            model.clone()
        } else {
            model.clone().transformed(TransformOp::AffineScale { a: q, b: 0.0 })
        };
        acc = Some(match acc {
            None => scaled,
            Some(prev) => prev.plus_independent(scaled),
        });
    }
    acc.ok_or_else(|| PacBayesError::InvalidParams("posterior assigns zero weight to every member".into()))
}

/// Finite annealed expectation of `model` at `eta`, or an error naming the
/// member when the bound it would feed is vacuous.
fn finite_annealed(model: &RandomVariableModel, eta: f64, index: usize) -> Result<f64, PacBayesError> {
    let a = annealed_expectation(model, eta)?;
    if !a.value.is_finite() {
        return Err(PacBayesError::InvalidParams(format!(
            "annealed expectation of member {index} diverges at weight {eta}; the bound would be vacuous"
        )));
    }
    Ok(a.value)
}

/// Certify a posterior-averaged exponential inequality.
///
/// The returned certificate claims, at effective weight `n_copies · eta`:
///
/// * part 1: `Σ_f q_f X̄_f ≼ A_mix + KL/eta_eff`, where `A_mix` is the
///   annealed expectation of the prior mixture;
/// * part 2: `Σ_f q_f X̄_f ≼ KL/eta_eff`, requiring every member to satisfy
///   `X_f ≼_eta 0` (checked here; failure is `MissingCertificates`);
/// * part 3: `Σ_f q_f (X̄_f − A_f) ≼ KL/eta_eff` with `A_f` the member's own
///   annealed expectation.
///
/// `X̄_f` is the average of `n_copies` independent copies of member `f`. The
/// `KL` offset is stored in scale-portable form ([`RhsOffset::over_u`]), so
/// extraction at confidence `delta` adds `(KL + log(1/delta)) / eta_eff`.
pub fn pacbayes_combine(
    part: PacBayesPart,
    family: &FamilySpec,
    prior: &DiscreteMeasure,
    posterior: &DiscreteMeasure,
    eta: f64,
    n_copies: u32,
    budget: &EvalBudget,
) -> Result<(PacBayesBound, EsiCertificate), PacBayesError> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(PacBayesError::InvalidParams(format!("weight eta must be a finite positive real, got {eta}")));
    }
    if n_copies == 0 {
        return Err(PacBayesError::InvalidParams("n_copies must be at least 1".into()));
    }
    check_alignment(family, prior, posterior)?;
    let kl = kl_discrete(posterior, prior)?;
    let eta_eff = eta * n_copies as f64;

    let averaged: Vec<RandomVariableModel> =
        family.members.iter().map(|m| averaged_member(m, n_copies)).collect();

    let copies_note = if n_copies > 1 { format!(" of {n_copies}-copy averages") } else { String::new() };
    let m = family.members.len();

    let (annealed_term, lhs, body) = match part {
        PacBayesPart::One => {
            // Prior-mixture annealed term: (1/eta) log Σ_f p_f E[e^{eta X̄_f}],
            // assembled by log-sum-exp over the per-member annealed values.
            let mut terms: Vec<f64> = Vec::new();
            for (i, (model, &p)) in averaged.iter().zip(prior.weights()).enumerate() {
                if p == 0.0 {
                    continue;
                }
                terms.push(p.ln() + eta_eff * finite_annealed(model, eta_eff, i)?);
            }
            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let a_mix = (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()) / eta_eff;
            (Some(a_mix), posterior_average(&averaged, posterior)?, RhsBody::Constant(a_mix))
        }
        PacBayesPart::Two => {
            for (i, member) in family.members.iter().enumerate() {
                let a = annealed_expectation(member, eta)?;
                let certified = if a.standard_error > 0.0 {
                    a.value + budget.k_sigma * a.standard_error <= NUMERIC_GRACE
                } else {
                    a.value <= NUMERIC_GRACE
                };
                if !certified {
                    return Err(PacBayesError::MissingCertificates(format!(
                        "member {i} is not certified ≼ 0 at weight {eta}: annealed expectation {} (se {})",
                        a.value, a.standard_error
                    )));
                }
            }
            (None, posterior_average(&averaged, posterior)?, RhsBody::Zero)
        }
        PacBayesPart::Three => {
            let mut recentered = Vec::with_capacity(m);
            let mut posterior_annealed = 0.0;
            for (i, (model, &q)) in averaged.iter().zip(posterior.weights()).enumerate() {
                if q == 0.0 {
                    // Never enters the average; keep a placeholder so indices align.
                    recentered.push(model.clone());
                    continue;
                }
                let a = finite_annealed(model, eta_eff, i)?;
                posterior_annealed += q * a;
                recentered.push(model.clone().shifted(-a));
            }
            (Some(posterior_annealed), posterior_average(&recentered, posterior)?, RhsBody::Zero)
        }
    };

    let part_no: u8 = part.into();
    let cert = EsiCertificate::strong(
        format!("derived: posterior-weighted average{copies_note} of {m} members, variant {part_no}, kl offset {kl}"),
        lhs,
        CertRhs { body, offset: RhsOffset::over_u(kl) },
        eta_eff,
    );
    cert.validate()?;

    let bound_value = kl / eta_eff + annealed_term.unwrap_or(0.0);
    Ok((PacBayesBound { part, eta: eta_eff, kl, annealed_term, bound_value }, cert))
}

/// Excess-risk bound for `n`-sample empirical averages.
///
/// Certifies, at weight `n·eta`, that the posterior-averaged empirical mean
/// of `n` draws exceeds the posterior-averaged annealed expectation (taken at
/// the per-draw weight `eta`) by at most `KL/(n·eta)` in the exponential
/// sense: this is the recentering variant applied after copy-averaging, and
/// the offset shrinks like `1/n` while the annealed center is `n`-free.
pub fn zhang_bound(
    family: &FamilySpec,
    prior: &DiscreteMeasure,
    posterior: &DiscreteMeasure,
    eta: f64,
    n: u32,
    budget: &EvalBudget,
) -> Result<(PacBayesBound, EsiCertificate), PacBayesError> {
    let (bound, mut cert) = pacbayes_combine(PacBayesPart::Three, family, prior, posterior, eta, n, budget)?;
    cert.label = format!(
        "derived: excess risk of the posterior-averaged {n}-sample empirical mean over its annealed center, kl offset {} at weight {}",
        bound.kl, bound.eta
    );
    Ok((bound, cert))
}

/// Binary relative entropy `KL(Ber(q) ‖ Ber(p))` with `0·log 0 = 0`.
///
/// Returns `+inf` when `q` charges an outcome that `p` excludes.
pub fn bernoulli_kl(q: f64, p: f64) -> f64 {
    if q == p {
        return 0.0;
    }
    let mut kl = 0.0;
    if q > 0.0 {
        if p == 0.0 {
            return f64::INFINITY;
        }
        kl += q * (q / p).ln();
    }
    if q < 1.0 {
        if p == 1.0 {
            return f64::INFINITY;
        }
        kl += (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln();
    }
    kl
}

/// A divergence bound for posterior-averaged empirical means of `[0,1]`
/// losses.
///
/// `bound` dominates the binary relative entropy between the posterior
/// empirical mean and the posterior true mean; `annealed_n_divergence` is the
/// Monte-Carlo estimate of the annealed expectation, over a prior-drawn
/// member and its `n`-sample empirical mean, of `n` times that divergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeginBound {
    #[serde(with = "crate::serde_float")]
    pub bound: f64,
    #[serde(with = "crate::serde_float")]
    pub annealed_n_divergence: f64,
    #[serde(with = "crate::serde_float")]
    pub kl: f64,
    /// Standard error of `bound` (propagated from the annealed estimate).
    pub standard_error: f64,
    pub sample_count: u64,
}

/// Bound the divergence between posterior-averaged empirical and true means.
///
/// For losses supported on `[0, 1]`, certifies
///
/// ```text
/// KL(Ber(E_post[empirical mean]) ‖ Ber(E_post[true mean]))
///     ≼_eta  (1/n) ( A + KL(posterior ‖ prior) / eta )
/// ```
///
/// where `A` is the annealed expectation, over a member drawn from the
/// *prior* and `n` independent losses from that member, of `n` times the
/// binary divergence between the empirical and the true mean. The left-hand
/// side follows from joint convexity of the divergence (Jensen); `A` is
/// estimated by Monte Carlo under `budget`.
pub fn begin_bound(
    losses: &FamilySpec,
    prior: &DiscreteMeasure,
    posterior: &DiscreteMeasure,
    eta: f64,
    n: u32,
    budget: &EvalBudget,
) -> Result<BeginBound, PacBayesError> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(PacBayesError::InvalidParams(format!("weight eta must be a finite positive real, got {eta}")));
    }
    if n == 0 {
        return Err(PacBayesError::InvalidParams("sample size n must be at least 1".into()));
    }
    check_alignment(losses, prior, posterior)?;
    let kl = kl_discrete(posterior, prior)?;

    let mut means = Vec::with_capacity(losses.members.len());
    for (i, member) in losses.members.iter().enumerate() {
        let (below_zero, _) = member.cdf_parts(0.0)?;
        let (below_one, at_one) = member.cdf_parts(1.0)?;
        let above_one = 1.0 - below_one - at_one;
        if below_zero > 0.0 || above_one > WEIGHT_SUM_TOL {
            return Err(PacBayesError::LossOutOfRange(format!(
                "member {i} puts mass {below_zero} below 0 and {above_one} above 1; losses must live on [0, 1]"
            )));
        }
        means.push(member.moments()?.mean);
    }

    // A = (1/eta) log E[e^{eta · n · KL(Ber(empirical) ‖ Ber(true))}] with the
    // member drawn from the prior and the losses drawn from the member.
    let est = mc_mean(budget, 0x5042_4547, |rng| {
        let f = prior.sample_index(rng);
        let model = &losses.members[f];
        let mut sum = 0.0;
        for _ in 0..n {
            sum += model.sample(rng);
        }
        (eta * n as f64 * bernoulli_kl(sum / n as f64, means[f])).exp()
    });
    let annealed = est.mean.ln() / eta;
    let se_annealed = if est.mean > 0.0 { est.se / (eta * est.mean) } else { f64::INFINITY };

    Ok(BeginBound {
        bound: (annealed + kl / eta) / n as f64,
        annealed_n_divergence: annealed,
        kl,
        standard_error: se_annealed / n as f64,
        sample_count: est.n,
    })
}
