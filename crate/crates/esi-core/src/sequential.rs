//! Conditional inequalities on adapted sequences and what survives
//! optional stopping.
//!
//! A process is described by an increment rule (how `X_t` depends on the
//! realized past), a horizon `T`, a stopping rule, and a weight `eta`. The
//! conditional claim `X_t ≼_{η, t−1} 0` says the conditional annealed
//! expectation `A^η[X_t | past] = (1/η) log E[e^{η X_t} | past]` is ≤ 0 at
//! every history — equivalently, the running product
//! `M_t = Π_{s≤t} e^{η X_s}` is a nonnegative supermartingale. Three
//! consequences are checked here:
//!
//! * [`conditional_esi_check`] estimates the conditional annealed
//!   expectation at sampled histories and asserts the structural
//!   properties: a past-measurable increment must itself be ≤ 0, the
//!   conditional claim implies the unconditional one, and conditioning on a
//!   coarser past (a truncated history) preserves the claim.
//! * [`stopped_sum_check`] verifies `E[e^{η S_τ}] ≤ 1` for the stopped sum
//!   `S_τ`, any stopping rule capped at the horizon. With recentered
//!   increments `Z_i = X_i − A^η[X]` this is the sequential identity
//!   `Σ_{i≤τ} X_i − τ·A^η[X] ≼_η 0`, valid at every bounded stopping time.
//! * [`ville_bound`] checks the maximal inequality: the running product
//!   crosses `1/δ` with frequency at most `δ`, and emits the derived
//!   supremum certificate `sup_t X_t ≼_η c` for `η < η*`, with `c` from the
//!   exponential-tail conversion at prefactor 1 and rate `η*`.
//!
//! History enters the increment rules through the running sum `S_{t−1}` —
//! enough to exhibit genuine dependence on the past while keeping every
//! conditional law exactly enumerable. Stopping rules are pure functions of
//! the realized prefix, and the horizon cap enforces the almost-surely
//! bounded hypothesis: an unbounded rule is rejected, not approximated.
//!
//! Paths simulate independently; path `i` draws from a substream derived
//! from `(seed, i)`, and partial sums reduce in fixed path order, so every
//! report is byte-identical across worker-thread counts.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{substream, worker_count, EvalBudget, McEstimate};
use crate::measure::model::RandomVariableModel;
use crate::measure::{annealed_expectation, MeasureError};
use crate::verify::{tail_to_esi, TailConversion, Verdict, VerifyError, NUMERIC_GRACE};

/// Errors from process construction and sequential checks.
#[derive(Debug, Error)]
pub enum SequentialError {
    /// The horizon is zero: no increments, no process.
    #[error("the horizon must be at least 1")]
    HorizonZero,
    /// The stopping rule cannot fire before the cap (statically, or on
    /// every simulated path).
    #[error("stopping rule never fires: {0}")]
    StoppingRuleNeverFires(String),
    /// Malformed process or parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// How the next increment depends on the realized past.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IncrementRule {
    /// Independent draws from a fixed law; the conditional law ignores the
    /// past entirely.
    Iid { model: RandomVariableModel },
    /// Independent draws recentered by their own annealed expectation at
    /// the process weight: `Z_t = X_t − A^η[X]`, so `A^η[Z_t | past] = 0`
    /// exactly — the running product is a martingale.
    IidCentered { model: RandomVariableModel },
    /// A constant increment: past-measurable, so the conditional claim
    /// forces the sign of the value itself.
    Deterministic { value: f64 },
    /// A history-dependent two-point increment on `{low, high}` with
    /// `P(high | past) = p_max · σ(S_{t−1})`, where `σ` is the logistic
    /// function and `p_max` is the largest probability keeping the
    /// conditional annealed expectation at the process weight ≤ 0. The
    /// conditional law at any history is exactly enumerable.
    BoundedTwoPoint { low: f64, high: f64 },
}

/// When the process stops. The horizon always caps `τ`, so every rule
/// yields an almost-surely bounded stopping time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StoppingRule {
    /// `τ ≡ T`: stop only at the cap.
    AtHorizon,
    /// `τ ≡ min(t, T)` for a fixed `t ≥ 1`.
    FixedTime { t: u32 },
    /// First time the running sum reaches `level` (then the cap).
    SumAbove { level: f64 },
    /// First time the running sum falls to `level` (then the cap).
    SumBelow { level: f64 },
}

/// An adapted process with a stopping rule and a weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub increments: IncrementRule,
    pub horizon: u32,
    pub stopping: StoppingRule,
    pub eta: f64,
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<(), SequentialError> {
        if self.horizon == 0 {
            return Err(SequentialError::HorizonZero);
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(SequentialError::InvalidParams(format!(
                "the process weight must be a finite positive real, got {}",
                self.eta
            )));
        }
        match &self.increments {
            IncrementRule::Iid { model } | IncrementRule::IidCentered { model } => model.validate()?,
            IncrementRule::Deterministic { value } => {
                if !value.is_finite() {
                    return Err(SequentialError::InvalidParams(format!(
                        "deterministic increment must be finite, got {value}"
                    )));
                }
            }
            IncrementRule::BoundedTwoPoint { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low < 0.0 && *high > 0.0) {
                    return Err(SequentialError::InvalidParams(format!(
                        "two-point increment needs low < 0 < high, got ({low}, {high})"
                    )));
                }
            }
        }
        match &self.stopping {
            StoppingRule::FixedTime { t } => {
                if *t == 0 {
                    return Err(SequentialError::InvalidParams("fixed stopping time must be at least 1".into()));
                }
                if *t > self.horizon {
                    return Err(SequentialError::StoppingRuleNeverFires(format!(
                        "fixed time {t} lies beyond the horizon {}",
                        self.horizon
                    )));
                }
            }
            StoppingRule::SumAbove { level } | StoppingRule::SumBelow { level } => {
                if !level.is_finite() {
                    return Err(SequentialError::InvalidParams(format!("stopping level must be finite, got {level}")));
                }
            }
            StoppingRule::AtHorizon => {}
        }
        Ok(())
    }
}

/// A validated process with precomputed per-step constants.
struct Driver<'a> {
    spec: &'a ProcessSpec,
    /// For recentered increments, `A^η[X]`; zero otherwise.
    center: f64,
    /// For the two-point rule, the largest admissible high-probability.
    p_max: f64,
}

impl<'a> Driver<'a> {
    fn new(spec: &'a ProcessSpec) -> Result<Self, SequentialError> {
        spec.validate()?;
        let center = match &spec.increments {
            IncrementRule::IidCentered { model } => {
                let a = annealed_expectation(model, spec.eta)?;
                if !a.value.is_finite() {
                    return Err(SequentialError::InvalidParams(format!(
                        "the increment law has no finite annealed expectation at weight {}",
                        spec.eta
                    )));
                }
                a.value
            }
            _ => 0.0,
        };
        let p_max = match &spec.increments {
            IncrementRule::BoundedTwoPoint { low, high } => {
                let el = (spec.eta * low).exp();
                let eh = (spec.eta * high).exp();
                (1.0 - el) / (eh - el)
            }
            _ => 0.0,
        };
        Ok(Driver { spec, center, p_max })
    }

    /// `P(high | past)` for the two-point rule, as a function of the
    /// running sum: a logistic squash strictly below the critical value.
    fn two_point_p(&self, sum: f64) -> f64 {
        let s = if sum >= 0.0 { 1.0 / (1.0 + (-sum).exp()) } else { sum.exp() / (1.0 + sum.exp()) };
        self.p_max * s
    }

    /// Draw the next increment given the running sum of the past.
    fn step(&self, sum: f64, rng: &mut ChaCha12Rng) -> f64 {
        match &self.spec.increments {
            IncrementRule::Iid { model } => model.sample(rng),
            IncrementRule::IidCentered { model } => model.sample(rng) - self.center,
            IncrementRule::Deterministic { value } => *value,
            IncrementRule::BoundedTwoPoint { low, high } => {
                if rng.gen::<f64>() < self.two_point_p(sum) {
                    *high
                } else {
                    *low
                }
            }
        }
    }

    /// The exact conditional law of the next increment at a history with
    /// running sum `sum`.
    fn conditional_model(&self, sum: f64) -> RandomVariableModel {
        match &self.spec.increments {
            IncrementRule::Iid { model } => model.clone(),
            IncrementRule::IidCentered { model } => model.clone().shifted(-self.center),
            IncrementRule::Deterministic { value } => RandomVariableModel::finite_discrete(vec![(*value, 1.0)]),
            IncrementRule::BoundedTwoPoint { low, high } => {
                let p = self.two_point_p(sum);
                RandomVariableModel::two_point(*low, 1.0 - p, *high)
            }
        }
    }

    /// Simulate a prefix of `len` increments; returns the running sum.
    fn prefix_sum(&self, len: u32, rng: &mut ChaCha12Rng) -> f64 {
        let mut sum = 0.0;
        for _ in 0..len {
            sum += self.step(sum, rng);
        }
        sum
    }

    /// Whether the rule's own trigger fires at time `t` with running sum
    /// `sum` (the horizon cap is handled by the caller).
    fn fires(&self, t: u32, sum: f64) -> bool {
        match &self.spec.stopping {
            StoppingRule::AtHorizon => false,
            StoppingRule::FixedTime { t: t0 } => t >= *t0,
            StoppingRule::SumAbove { level } => sum >= *level,
            StoppingRule::SumBelow { level } => sum <= *level,
        }
    }
}

const TAG_COND: u64 = 0x7365_7100_0001;
const TAG_COND_UNCOND: u64 = 0x7365_7100_0002;
const TAG_COND_TOWER: u64 = 0x7365_7100_0003;
const TAG_STOPPED: u64 = 0x7365_7100_0004;
const TAG_VILLE: u64 = 0x7365_7100_0005;

/// Per-path simulation driver: path `i` draws from the `(seed, i)`
/// substream; partial sums accumulate over fixed path ranges and reduce in
/// range order, so the result depends on `(seed, n_paths, mc_chunks)` only,
/// never on the worker count.
fn per_path_stats<F>(
    n_paths: u64,
    budget: &EvalBudget,
    tag: u64,
    n_stats: usize,
    per_path: F,
) -> Vec<McEstimate>
where
    F: Fn(&mut ChaCha12Rng, &mut [f64]) + Sync,
{
    let chunks = (budget.mc_chunks.max(1) as u64).min(n_paths.max(1));
    let per_chunk = n_paths.div_ceil(chunks);

    let run_range = |ci: u64| -> (Vec<f64>, Vec<f64>) {
        let lo = ci * per_chunk;
        let hi = ((ci + 1) * per_chunk).min(n_paths);
        let mut sum = vec![0.0; n_stats];
        let mut sumsq = vec![0.0; n_stats];
        let mut scratch = vec![0.0; n_stats];
        for path in lo..hi {
            let mut rng = substream(budget.seed, path, tag);
            per_path(&mut rng, &mut scratch);
            for (k, &v) in scratch.iter().enumerate() {
                sum[k] += v;
                sumsq[k] += v * v;
            }
        }
        (sum, sumsq)
    };

    let workers = worker_count(budget).min(chunks as usize).max(1);
    let mut partials: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; chunks as usize];
    if workers <= 1 {
        for (ci, slot) in partials.iter_mut().enumerate() {
            *slot = Some(run_range(ci as u64));
        }
    } else {
        let next = std::sync::atomic::AtomicU64::new(0);
        let results: Vec<Vec<(u64, (Vec<f64>, Vec<f64>))>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut local = Vec::new();
                        loop {
                            let ci = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                            if ci >= chunks {
                                break;
                            }
                            local.push((ci, run_range(ci)));
                        }
                        local
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("path worker panicked")).collect()
        });
        for worker_out in results {
            for (ci, sums) in worker_out {
                partials[ci as usize] = Some(sums);
            }
        }
    }

    let mut sum = vec![0.0; n_stats];
    let mut sumsq = vec![0.0; n_stats];
    for slot in partials {
        let (s, q) = slot.expect("path range never ran");
        for k in 0..n_stats {
            sum[k] += s[k];
            sumsq[k] += q[k];
        }
    }
    (0..n_stats)
        .map(|k| {
            let n = n_paths as f64;
            let mean = sum[k] / n;
            let var = if n_paths > 1 { ((sumsq[k] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            McEstimate { mean, se: (var / n).sqrt(), n: n_paths }
        })
        .collect()
}

/// Result of sampling the conditional annealed expectation across
/// histories and asserting the structural conditional-claim properties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalEsiReport {
    pub eta: f64,
    pub horizon: u32,
    pub histories_checked: u32,
    /// Largest exact conditional annealed expectation over all sampled
    /// `(t, history)` pairs; the claim needs this ≤ 0.
    #[serde(with = "crate::serde_float")]
    pub conditional_worst: f64,
    /// Pooled |simulated − exact| z-score for the conditional moments
    /// across all histories, standardized by the exact per-draw variance
    /// (the re-estimation cross-check).
    #[serde(with = "crate::serde_float")]
    pub mc_agreement_z: f64,
    /// Unconditional annealed expectation of the final increment, with its
    /// standard error: conditional ⇒ unconditional.
    #[serde(with = "crate::serde_float")]
    pub unconditional_annealed: f64,
    pub unconditional_se: f64,
    /// Worst conditional annealed expectation after truncating histories
    /// (conditioning on a coarser past), with the worst standard error.
    #[serde(with = "crate::serde_float")]
    pub tower_worst: f64,
    pub tower_worst_se: f64,
    /// For past-measurable increments only: whether the increment value
    /// itself is ≤ 0 (forced by the conditional claim).
    pub sign_check: Option<bool>,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Estimate `A^η[X_t | past] ≤ 0` at sampled histories.
///
/// Histories are simulated from the process itself, cycling the increment
/// index `t` through `1..=T`. The conditional law at each sampled history
/// is exactly enumerable for every increment rule, so the primary assertion
/// is exact; `n_conditional_draws` additionally re-estimates each
/// conditional moment by Monte Carlo, and the exact-vs-simulated
/// differences are pooled across histories into one z-score. Per-history
/// tower assertions across `J` histories use a maximum band of
/// `k_sigma + sqrt(2 log J)` standard errors to keep the family of checks
/// calibrated.
pub fn conditional_esi_check(
    spec: &ProcessSpec,
    n_histories: u32,
    n_conditional_draws: u32,
    budget: &EvalBudget,
) -> Result<ConditionalEsiReport, SequentialError> {
    let driver = Driver::new(spec)?;
    if n_histories == 0 || n_conditional_draws == 0 {
        return Err(SequentialError::InvalidParams(
            "need at least one history and one conditional draw".into(),
        ));
    }
    let eta = spec.eta;
    let z_max = budget.k_sigma + (2.0 * (n_histories.max(2) as f64).ln()).sqrt();
    let mut notes = vec![format!(
        "per-history tower bands widened to {z_max:.2} standard errors for simultaneous checks; the moment cross-check pools all {n_histories} histories"
    )];

    // Primary sweep: exact conditional annealed at sampled (t, history),
    // plus a pooled Monte-Carlo cross-check of the conditional moments.
    // Pooling uses the exact per-draw variance (second exponential moment
    // at 2η), which stays honest at histories whose conditional law puts
    // vanishing mass on one atom — a finite sample from such a law shows
    // no variability at all, so a sample-variance z-score would be
    // degenerate there.
    let mut conditional_worst = f64::NEG_INFINITY;
    let mut pooled_diff = 0.0;
    let mut pooled_var = 0.0;
    for j in 0..n_histories {
        let mut rng = substream(budget.seed, j as u64, TAG_COND);
        let t = 1 + (j % spec.horizon);
        let sum = driver.prefix_sum(t - 1, &mut rng);
        let model = driver.conditional_model(sum);
        let exact = annealed_expectation(&model, eta)?;
        conditional_worst = conditional_worst.max(exact.value);

        let m = n_conditional_draws as f64;
        let mut acc = 0.0;
        let mut accsq = 0.0;
        for _ in 0..n_conditional_draws {
            let v = (eta * model.sample(&mut rng)).exp();
            acc += v;
            accsq += v * v;
        }
        let mean = acc / m;
        let moment_exact = (eta * exact.value).exp();
        let second = annealed_expectation(&model, 2.0 * eta)?.value;
        let var_exact = if second.is_finite() {
            ((2.0 * eta * second).exp() - moment_exact * moment_exact).max(0.0)
        } else if n_conditional_draws > 1 {
            ((accsq - m * mean * mean) / (m - 1.0)).max(0.0)
        } else {
            0.0
        };
        pooled_diff += mean - moment_exact;
        pooled_var += var_exact / m;
    }
    let pooled_se = pooled_var.sqrt() / n_histories as f64;
    let mean_diff = (pooled_diff / n_histories as f64).abs();
    let mc_agreement_z = if pooled_se > 0.0 {
        mean_diff / pooled_se
    } else if mean_diff <= NUMERIC_GRACE {
        0.0
    } else {
        f64::INFINITY
    };

    // Conditional ⇒ unconditional: average the exact conditional moment
    // over fresh full-length histories.
    let mut acc = 0.0;
    let mut accsq = 0.0;
    for j in 0..n_histories {
        let mut rng = substream(budget.seed, j as u64, TAG_COND_UNCOND);
        let sum = driver.prefix_sum(spec.horizon - 1, &mut rng);
        let exact = annealed_expectation(&driver.conditional_model(sum), eta)?;
        let v = (eta * exact.value).exp();
        acc += v;
        accsq += v * v;
    }
    let m = n_histories as f64;
    let mean = acc / m;
    let var = if n_histories > 1 { ((accsq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
    let unconditional_se = if mean > 0.0 { (var / m).sqrt() / (eta * mean) } else { f64::INFINITY };
    let unconditional_annealed = mean.ln() / eta;

    // Tower to a coarser past: truncate the final history, average the
    // conditional moment over re-simulated suffixes, and assert the
    // coarsened conditional annealed stays ≤ 0 at each truncated history.
    let truncate = (spec.horizon - 1).min(2);
    let prefix_len = spec.horizon - 1 - truncate;
    let tower_histories = n_histories.min(16).max(1);
    let mut tower_worst = f64::NEG_INFINITY;
    let mut tower_worst_se = 0.0;
    for j in 0..tower_histories {
        let mut rng = substream(budget.seed, j as u64, TAG_COND_TOWER);
        let base = driver.prefix_sum(prefix_len, &mut rng);
        let mut acc = 0.0;
        let mut accsq = 0.0;
        for _ in 0..n_conditional_draws {
            let mut sum = base;
            for _ in 0..truncate {
                sum += driver.step(sum, &mut rng);
            }
            let exact = annealed_expectation(&driver.conditional_model(sum), eta)?;
            let v = (eta * exact.value).exp();
            acc += v;
            accsq += v * v;
        }
        let m = n_conditional_draws as f64;
        let mean = acc / m;
        let var = if n_conditional_draws > 1 { ((accsq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
        let se = if mean > 0.0 { (var / m).sqrt() / (eta * mean) } else { f64::INFINITY };
        let value = mean.ln() / eta;
        if value > tower_worst {
            tower_worst = value;
            tower_worst_se = se;
        }
    }

    let sign_check = match &spec.increments {
        IncrementRule::Deterministic { value } => Some(*value <= NUMERIC_GRACE),
        _ => None,
    };
    if sign_check.is_some() {
        notes.push("past-measurable increment: the conditional claim forces the value itself ≤ 0".into());
    }

    let pass = conditional_worst <= NUMERIC_GRACE
        && mc_agreement_z <= budget.k_sigma
        && unconditional_annealed <= NUMERIC_GRACE + budget.k_sigma * unconditional_se
        && tower_worst <= NUMERIC_GRACE + z_max * tower_worst_se
        && sign_check != Some(false);

    Ok(ConditionalEsiReport {
        eta,
        horizon: spec.horizon,
        histories_checked: n_histories,
        conditional_worst,
        mc_agreement_z,
        unconditional_annealed,
        unconditional_se,
        tower_worst,
        tower_worst_se,
        sign_check,
        pass,
        notes,
    })
}

/// Monte-Carlo verdict on `E[e^{η S_τ}] ≤ 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppedSumReport {
    /// Estimate of `E[e^{η S_τ}]`.
    #[serde(with = "crate::serde_float")]
    pub estimate: f64,
    pub se: f64,
    /// One-sided: `Holds` iff the estimate is ≤ 1 + k_sigma standard
    /// errors. The boundary value 1 is the theorem's equality case (a
    /// martingale with a bounded stopping time), so no inconclusive band.
    pub verdict: Verdict,
    pub mean_stopping_time: f64,
    /// Fraction of paths on which the rule's own trigger fired before the
    /// horizon cap.
    pub trigger_frequency: f64,
    pub sample_count: u64,
}

/// Simulate stopped sums and assert the optional-stopping inequality.
///
/// Requires the conditional claim (checked or asserted by the caller —
/// see [`conditional_esi_check`]). Each path runs until the stopping rule
/// fires or the horizon cap is reached; the horizon enforces the bounded
/// stopping-time hypothesis. If a trigger-based rule fires on no path at
/// all, the scenario is reported as [`SequentialError::StoppingRuleNeverFires`]
/// rather than silently degenerating to the horizon rule.
pub fn stopped_sum_check(
    spec: &ProcessSpec,
    n_paths: u64,
    budget: &EvalBudget,
) -> Result<StoppedSumReport, SequentialError> {
    let driver = Driver::new(spec)?;
    if n_paths == 0 {
        return Err(SequentialError::InvalidParams("need at least one path".into()));
    }
    let est = per_path_stats(n_paths, budget, TAG_STOPPED, 3, |rng, out| {
        let mut sum = 0.0;
        let mut tau = spec.horizon;
        let mut triggered = false;
        for t in 1..=spec.horizon {
            sum += driver.step(sum, rng);
            if driver.fires(t, sum) {
                tau = t;
                triggered = true;
                break;
            }
        }
        out[0] = (spec.eta * sum).exp();
        out[1] = tau as f64;
        out[2] = if triggered { 1.0 } else { 0.0 };
    });
    let (moment, tau, trig) = (est[0], est[1], est[2]);
    if trig.mean == 0.0 && !matches!(spec.stopping, StoppingRule::AtHorizon) {
        return Err(SequentialError::StoppingRuleNeverFires(format!(
            "the trigger fired on none of {n_paths} paths before the horizon {}; use the horizon rule if that is intended",
            spec.horizon
        )));
    }
    let verdict = if moment.mean <= 1.0 + budget.k_sigma * moment.se { Verdict::Holds } else { Verdict::Fails };
    Ok(StoppedSumReport {
        estimate: moment.mean,
        se: moment.se,
        verdict,
        mean_stopping_time: tau.mean,
        trigger_frequency: trig.mean,
        sample_count: moment.n,
    })
}

/// Result of the maximal-inequality check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VilleReport {
    pub delta: f64,
    /// The running product must reach `1/δ`; compared on the log scale.
    #[serde(with = "crate::serde_float")]
    pub log_threshold: f64,
    /// Fraction of paths whose running product ever reaches `1/δ` within
    /// the horizon; the maximal inequality bounds this by `δ`.
    pub crossing_frequency: f64,
    pub se: f64,
    pub pass: bool,
    /// The derived supremum certificate `sup_t X_t ≼_η c`, stated at
    /// `η = η*/2` via the exponential-tail conversion with prefactor 1 and
    /// rate `η*`.
    pub sup_certificate: TailConversion,
    pub sample_count: u64,
    pub notes: Vec<String>,
}

/// Check the maximal inequality for the running product and emit the
/// supremum certificate.
///
/// Requires the conditional claim at the process weight `η*` (checked or
/// asserted by the caller). Simulates full-horizon paths — stopping plays
/// no role here — and compares the frequency of
/// `sup_{t≤T} Π_{s≤t} e^{η* X_s} ≥ 1/δ` against `δ` with the `k_sigma`
/// band. The supremum certificate follows the proof route: the maximal
/// inequality gives `P(sup_t X_t ≥ x) ≤ e^{−η* x}`, an exponential tail
/// with prefactor 1 and rate `η*`, which converts into `sup_t X_t ≼_η c`
/// for any `η < η*`; the emitted constant is at `η = η*/2`, where
/// `c = (2/η*) log 2`.
pub fn ville_bound(
    spec: &ProcessSpec,
    delta: f64,
    n_paths: u64,
    budget: &EvalBudget,
) -> Result<VilleReport, SequentialError> {
    let driver = Driver::new(spec)?;
    if n_paths == 0 {
        return Err(SequentialError::InvalidParams("need at least one path".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(SequentialError::InvalidParams(format!("delta must lie in (0, 1], got {delta}")));
    }
    let log_threshold = (1.0 / delta).ln();
    let est = per_path_stats(n_paths, budget, TAG_VILLE, 1, |rng, out| {
        let mut sum = 0.0;
        let mut sup_log = f64::NEG_INFINITY;
        for _ in 1..=spec.horizon {
            sum += driver.step(sum, rng);
            sup_log = sup_log.max(spec.eta * sum);
        }
        out[0] = if sup_log >= log_threshold { 1.0 } else { 0.0 };
    })
    .remove(0);
    let pass = est.mean <= delta + budget.k_sigma * est.se;
    let sup_certificate = tail_to_esi(1.0, spec.eta, spec.eta / 2.0)?;
    Ok(VilleReport {
        delta,
        log_threshold,
        crossing_frequency: est.mean,
        se: est.se,
        pass,
        sup_certificate,
        sample_count: est.n,
        notes: vec![format!(
            "supremum certificate: sup of the increments is ≼ at weight {} with constant {} (tail prefactor 1, rate {})",
            spec.eta / 2.0,
            (2.0 / spec.eta) * std::f64::consts::LN_2,
            spec.eta
        )],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{combine, CompositionMode};
    use crate::exec::EvalBudget;
    use crate::pacbayes::{kl_discrete, pacbayes_combine, DiscreteMeasure, PacBayesPart};
    use crate::verify::{verify_esi, CertRhs, EsiCertificate};
    use crate::measure::scale::GridSpec;

    fn budget() -> EvalBudget {
        EvalBudget { seed: 31, mc_samples: 100_000, mc_chunks: 64, ..EvalBudget::default() }
    }

    fn centered_gaussian_spec(stopping: StoppingRule) -> ProcessSpec {
        ProcessSpec {
            increments: IncrementRule::IidCentered { model: RandomVariableModel::gaussian(0.0, 1.0) },
            horizon: 100,
            stopping,
            eta: 0.5,
        }
    }

    #[test]
    fn conditional_check_on_centered_gaussian_is_exactly_zero() {
        let spec = centered_gaussian_spec(StoppingRule::AtHorizon);
        let report = conditional_esi_check(&spec, 60, 4_000, &budget()).unwrap();
        // A^η[Z | past] = 0 at every history, exactly.
        assert!(report.conditional_worst.abs() < 1e-12, "worst {}", report.conditional_worst);
        assert!(report.pass, "{report:?}");
        assert!(report.unconditional_annealed.abs() <= 1e-9 + 3.0 * report.unconditional_se);
        assert_eq!(report.sign_check, None);
    }

    #[test]
    fn conditional_check_deterministic_has_margin_minus_one() {
        let spec = ProcessSpec {
            increments: IncrementRule::Deterministic { value: -1.0 },
            horizon: 10,
            stopping: StoppingRule::AtHorizon,
            eta: 1.0,
        };
        let report = conditional_esi_check(&spec, 20, 100, &budget()).unwrap();
        assert!((report.conditional_worst + 1.0).abs() < 1e-12);
        assert_eq!(report.sign_check, Some(true));
        assert!(report.pass);

        // A past-measurable increment with a positive value violates the
        // claim, and the sign check says so.
        let bad = ProcessSpec { increments: IncrementRule::Deterministic { value: 0.1 }, ..spec };
        let report = conditional_esi_check(&bad, 20, 100, &budget()).unwrap();
        assert_eq!(report.sign_check, Some(false));
        assert!(!report.pass);
        assert!((report.conditional_worst - 0.1).abs() < 1e-12);
    }

    #[test]
    fn conditional_check_two_point_by_enumeration() {
        let spec = ProcessSpec {
            increments: IncrementRule::BoundedTwoPoint { low: -1.0, high: 1.0 },
            horizon: 30,
            stopping: StoppingRule::AtHorizon,
            eta: 0.7,
        };
        let report = conditional_esi_check(&spec, 90, 2_000, &budget()).unwrap();
        // Strictly below the critical probability at every history.
        assert!(report.conditional_worst <= 0.0, "worst {}", report.conditional_worst);
        assert!(report.pass, "{report:?}");

        // Supermartingale property at sampled histories: the conditional
        // mean of the next product factor is ≤ 1 everywhere, exactly.
        let driver = Driver::new(&spec).unwrap();
        for j in 0..50u64 {
            let mut rng = substream(7, j, 0x7465_7374);
            let t = 1 + (j as u32 % spec.horizon);
            let sum = driver.prefix_sum(t - 1, &mut rng);
            let exact = annealed_expectation(&driver.conditional_model(sum), spec.eta).unwrap();
            assert!((spec.eta * exact.value).exp() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn horizon_zero_and_bad_rules_are_rejected() {
        let mut spec = centered_gaussian_spec(StoppingRule::AtHorizon);
        spec.horizon = 0;
        assert!(matches!(spec.validate(), Err(SequentialError::HorizonZero)));

        let beyond = ProcessSpec {
            horizon: 3,
            stopping: StoppingRule::FixedTime { t: 5 },
            ..centered_gaussian_spec(StoppingRule::AtHorizon)
        };
        assert!(matches!(beyond.validate(), Err(SequentialError::StoppingRuleNeverFires(_))));
    }

    #[test]
    fn stopped_sum_at_fixed_time_one_is_a_single_step_claim() {
        let spec = ProcessSpec {
            increments: IncrementRule::Iid { model: RandomVariableModel::gaussian(-0.5, 1.0) },
            horizon: 10,
            stopping: StoppingRule::FixedTime { t: 1 },
            eta: 0.5,
        };
        let report = stopped_sum_check(&spec, 50_000, &budget()).unwrap();
        // E[e^{ηX}] = e^{ημ + η²v/2} = e^{−0.125} for one step.
        let exact = (-0.125f64).exp();
        assert!(
            (report.estimate - exact).abs() <= 3.0 * report.se,
            "estimate {} vs {exact} (se {})",
            report.estimate,
            report.se
        );
        assert_eq!(report.verdict, Verdict::Holds);
        assert!((report.mean_stopping_time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stopped_sum_with_threshold_rule_is_a_martingale_at_one() {
        // Recentered Gaussian increments make the running product a
        // martingale; with a bounded stopping time the stopped mean is 1
        // exactly, and the inequality verdict must hold.
        let spec = centered_gaussian_spec(StoppingRule::SumAbove { level: 1.0 });
        let report = stopped_sum_check(&spec, 40_000, &budget()).unwrap();
        assert_eq!(report.verdict, Verdict::Holds, "estimate {} se {}", report.estimate, report.se);
        assert!((report.estimate - 1.0).abs() <= 3.0 * report.se, "estimate {} se {}", report.estimate, report.se);
        // The maximal inequality itself caps the crossing probability at
        // e^{-0.5} ≈ 0.61; the finite-horizon walk lands well below that
        // but must fire on a nontrivial fraction of paths.
        assert!(report.trigger_frequency > 0.2, "trigger frequency {}", report.trigger_frequency);
        assert!(report.mean_stopping_time < 100.0);
    }

    #[test]
    fn stopping_rule_that_never_fires_is_reported() {
        let spec = centered_gaussian_spec(StoppingRule::SumAbove { level: 1e9 });
        assert!(matches!(
            stopped_sum_check(&spec, 2_000, &budget()),
            Err(SequentialError::StoppingRuleNeverFires(_))
        ));
    }

    #[test]
    fn stopped_sum_at_horizon_matches_the_n_fold_combination() {
        // τ ≡ T on iid certified increments is the n-fold sum: compare the
        // simulation against the closed form and the combined certificate.
        let model = RandomVariableModel::gaussian(-0.5, 1.0);
        let (eta, t) = (0.5, 5u32);
        let spec = ProcessSpec {
            increments: IncrementRule::Iid { model: model.clone() },
            horizon: t,
            stopping: StoppingRule::AtHorizon,
            eta,
        };
        let report = stopped_sum_check(&spec, 60_000, &budget()).unwrap();
        let per_step = annealed_expectation(&model, eta).unwrap().value;
        let exact = (eta * t as f64 * per_step).exp();
        assert!(
            (report.estimate - exact).abs() <= 3.0 * report.se,
            "estimate {} vs {exact} (se {})",
            report.estimate,
            report.se
        );

        let certs: Vec<EsiCertificate> = (0..t)
            .map(|i| EsiCertificate::strong(format!("step {i}"), model.clone(), CertRhs::zero(), eta))
            .collect();
        let combined = combine(&certs, CompositionMode::NegativelyAssociatedOrIndependent).unwrap();
        let verified = verify_esi(&combined, &GridSpec::default(), &budget()).unwrap();
        assert_eq!(verified.verdict, Verdict::Holds);
        // The combined certificate's exact margin is −log E[e^{ηS_T}].
        assert!((verified.worst_margin - (-exact.ln())).abs() < 1e-9);
    }

    #[test]
    fn ville_bound_is_trivial_at_delta_one() {
        let spec = centered_gaussian_spec(StoppingRule::AtHorizon);
        let report = ville_bound(&spec, 1.0, 2_000, &budget()).unwrap();
        assert_eq!(report.log_threshold, 0.0);
        assert!(report.pass);
        assert!(report.crossing_frequency <= 1.0);
    }

    #[test]
    fn ville_bound_gaussian_crossing_stays_below_delta() {
        let spec = centered_gaussian_spec(StoppingRule::AtHorizon);
        let report = ville_bound(&spec, 0.05, 20_000, &budget()).unwrap();
        assert!(report.pass, "frequency {} se {}", report.crossing_frequency, report.se);
        assert!(report.crossing_frequency <= 0.05 + 3.0 * report.se);
        // Crossing a positive threshold has positive probability here.
        assert!(report.crossing_frequency > 0.0);
        // The supremum certificate at η*/2: c = (2/η*) log 2.
        assert!((report.sup_certificate.eta - 0.25).abs() < 1e-15);
        assert!((report.sup_certificate.constant - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ville_crossing_frequency_is_monotone_in_the_threshold() {
        let spec = centered_gaussian_spec(StoppingRule::AtHorizon);
        let mut last = f64::INFINITY;
        for delta in [0.5, 0.2, 0.05, 0.01] {
            let report = ville_bound(&spec, delta, 20_000, &budget()).unwrap();
            assert!(report.crossing_frequency <= last + 1e-12);
            assert!(report.pass, "delta {delta}: frequency {} se {}", report.crossing_frequency, report.se);
            last = report.crossing_frequency;
        }
    }

    #[test]
    fn stopped_composite_bound_survives_optional_stopping() {
        // Two members sharing one data stream: X_{f,i} = a_f Z_i + b_f with
        // Z_i standard normal. Per-member recentered stopped sums satisfy
        // the claim at any bounded stopping time; averaging under a fixed
        // posterior and paying the divergence keeps it valid. The static
        // combined certificate supplies the divergence and the recenters.
        let (a, b) = ([1.0, 0.5], [-0.1, 0.2]);
        let eta = 0.5;
        let members = vec![
            RandomVariableModel::gaussian(b[0], a[0] * a[0]),
            RandomVariableModel::gaussian(b[1], a[1] * a[1]),
        ];
        let family = crate::characterization::FamilySpec::new(members.clone()).unwrap();
        let prior = DiscreteMeasure::uniform(2).unwrap();
        let posterior = DiscreteMeasure::new(vec![0.3, 0.7]).unwrap();
        let (bound, _cert) =
            pacbayes_combine(PacBayesPart::Three, &family, &prior, &posterior, eta, 1, &budget()).unwrap();
        let kl = kl_discrete(&posterior, &prior).unwrap();
        assert!((bound.kl - kl).abs() < 1e-12);
        let centers: Vec<f64> =
            members.iter().map(|m| annealed_expectation(m, eta).unwrap().value).collect();
        assert!((bound.annealed_term.unwrap() - (0.3 * centers[0] + 0.7 * centers[1])).abs() < 1e-12);

        // Simulate the τ-stopped composite: τ = first t with Σ Z_i ≥ 1,
        // capped at 100.
        let q = posterior.weights().to_vec();
        let est = per_path_stats(40_000, &budget(), 0x7761_6c64, 1, |rng, out| {
            let mut z_sum = 0.0;
            let mut tau = 100u32;
            for t in 1..=100u32 {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                z_sum += z;
                if z_sum >= 1.0 {
                    tau = t;
                    break;
                }
            }
            // S_{f,τ} = a_f · Σ Z_i + τ b_f; the composite recenters each by
            // τ · A^η[X_f] and pays KL/η once.
            let composite: f64 = (0..2)
                .map(|f| q[f] * (a[f] * z_sum + tau as f64 * (b[f] - centers[f])))
                .sum::<f64>()
                - kl / eta;
            out[0] = (eta * composite).exp();
        })
        .remove(0);
        assert!(
            est.mean <= 1.0 + 3.0 * est.se,
            "stopped composite moment {} (se {})",
            est.mean,
            est.se
        );
    }

    #[test]
    fn reports_are_identical_across_worker_counts() {
        let spec = centered_gaussian_spec(StoppingRule::SumAbove { level: 1.0 });
        let mut b1 = budget();
        b1.threads = Some(1);
        let mut b4 = budget();
        b4.threads = Some(4);
        let r1 = stopped_sum_check(&spec, 10_000, &b1).unwrap();
        let r4 = stopped_sum_check(&spec, 10_000, &b4).unwrap();
        assert_eq!(r1.estimate.to_bits(), r4.estimate.to_bits());
        assert_eq!(r1.se.to_bits(), r4.se.to_bits());
        assert_eq!(r1.mean_stopping_time.to_bits(), r4.mean_stopping_time.to_bits());
    }

    #[test]
    fn process_specs_roundtrip_through_serde() {
        let spec = ProcessSpec {
            increments: IncrementRule::BoundedTwoPoint { low: -2.0, high: 0.5 },
            horizon: 25,
            stopping: StoppingRule::SumBelow { level: -4.0 },
            eta: 1.25,
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: ProcessSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.horizon, spec.horizon);
        assert_eq!(back.eta, spec.eta);
        assert!(matches!(back.increments, IncrementRule::BoundedTwoPoint { low, high } if low == -2.0 && high == 0.5));
    }
}
