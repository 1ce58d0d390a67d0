//! Scenario files: the versioned JSON input format shared by every verb.
//!
//! A scenario is one JSON object with four top-level fields:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "seed": 7,
//!   "budget": { "mc_samples": 100000, "mc_chunks": 64, "k_sigma": 3.0 },
//!   "task": "verify",
//!   "payload": { ... }
//! }
//! ```
//!
//! `schema_version` must be the integer `1`. `seed` is mandatory and is the
//! only randomness root: it overwrites `budget.seed`, and the `--seed` flag
//! overwrites it in turn. `budget` is optional (defaults apply) and carries
//! sample counts, chunk counts, the verdict band width `k_sigma`, and an
//! optional in-process thread cap. `task` selects the payload schema below
//! and must match the subcommand that loads the file.
//!
//! Payloads mirror the library inputs: certificates, models, scales, and
//! measures use exactly the serialization of their library types, so a
//! payload is the JSON form of the arguments one would pass in code.
//! Parsing is strict — unknown fields, missing fields, and out-of-range
//! values are rejected with a diagnostic naming the offending field, and
//! every rejection exits with code 3.

use serde::Deserialize;
use serde_json::Value;

use esi_core::algebra::CompositionMode;
use esi_core::conditions::WitnessParams;
use esi_core::exec::EvalBudget;
use esi_core::measure::{GridSpec, RandomVariableModel, ScaleFunction};
use esi_core::pacbayes::{DiscreteMeasure, PacBayesPart};
use esi_core::random_eta::RandomEtaScenario;
use esi_core::sequential::ProcessSpec;
use esi_core::verify::EsiCertificate;

/// Input-side failure: anything that prevents a well-posed run. Maps to
/// exit code 3.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input(msg: impl Into<String>) -> InputError {
    InputError(msg.into())
}

/// The version this binary reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Raw top-level scenario shape. The payload stays untyped until the task
/// string routes it to one of the structs below.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    seed: u64,
    #[serde(default)]
    budget: EvalBudget,
    task: String,
    payload: Value,
}

/// A fully parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Effective seed: file value unless overridden on the command line.
    pub seed: u64,
    /// Effective budget; `budget.seed` always equals `seed`.
    pub budget: EvalBudget,
    /// Task name as written in the file.
    pub task: String,
    /// The typed payload.
    pub payload: TaskPayload,
    /// Echo of the file content as parsed, for the report.
    pub echo: Value,
}

/// One payload per task.
#[derive(Debug, Clone)]
pub enum TaskPayload {
    Verify(VerifyPayload),
    Bounds(BoundsPayload),
    Compose(ComposePayload),
    Characterize(CharacterizePayload),
    Conditions(ConditionsPayload),
    Pacbayes(PacbayesPayload),
    RandomEta(RandomEtaPayload),
    Sequential(SequentialPayload),
}

/// `verify`: check one certificate over a slack grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPayload {
    pub certificate: EsiCertificate,
    #[serde(default)]
    pub grid: GridSpec,
}

/// `bounds`: extract tail quantiles and the expectation bound from a
/// certificate; optionally run a rate study on its scale.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsPayload {
    pub certificate: EsiCertificate,
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub rate_study: Option<RateStudy>,
}

/// Optional rate study attached to a `bounds` run: optimizes the extracted
/// bound over slack for sample sizes on a decade grid up to `n`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStudy {
    pub n: u64,
    pub delta: f64,
    #[serde(default)]
    pub complexity: f64,
}

/// `compose`: combine certificates under a joint-law assumption, or chain
/// two certificates whose right and left sides meet. Exactly one of `mode`
/// and `chain` must be present.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposePayload {
    pub certificates: Vec<EsiCertificate>,
    #[serde(default)]
    pub mode: Option<CompositionMode>,
    #[serde(default)]
    pub chain: Option<ChainOpts>,
    #[serde(default)]
    pub grid: GridSpec,
}

/// Chaining options: `associated: true` keeps the weaker of the two
/// weights (monotone-association assumption); `false` combines them
/// harmonically.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainOpts {
    pub associated: bool,
}

/// `characterize`: round-trip a certified family through the tail,
/// subgamma, and scale conversions and check every leg.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterizePayload {
    pub family: Vec<RandomVariableModel>,
    pub scale: ScaleFunction,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_envelope_points")]
    pub envelope_points: u32,
}

fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.01]
}

fn default_envelope_points() -> u32 {
    64
}

/// `conditions`: one of four checks, selected by the `check` field.
#[derive(Debug, Clone)]
pub enum ConditionsPayload {
    Smallball(SmallballPayload),
    Bernstein(BernsteinPayload),
    Witness(WitnessCheckPayload),
    Equivalence(EquivalencePayload),
}

/// `check: "smallball"`: paired small-ball constants for one nonnegative
/// model.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallballPayload {
    pub model: RandomVariableModel,
    pub c: f64,
    pub delta: f64,
}

/// `check: "bernstein"`: fit the Bernstein-style second-moment constant
/// over an exponent grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernsteinPayload {
    pub family: Vec<RandomVariableModel>,
    pub beta_grid: Vec<f64>,
}

/// `check: "witness"`: tail-witness lower bounds per family member.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessCheckPayload {
    pub family: Vec<RandomVariableModel>,
    pub params: WitnessParams,
}

/// `check: "equivalence"`: the full forward/reduction/converse suite.
/// Optional fields override the defaults of the suite configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalencePayload {
    pub family: Vec<RandomVariableModel>,
    pub b: f64,
    pub witness: WitnessParams,
    pub eta_star: f64,
    #[serde(default)]
    pub beta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub c_values: Option<Vec<f64>>,
    #[serde(default)]
    pub c_star_values: Option<Vec<f64>>,
    #[serde(default)]
    pub ladder_depth: Option<u32>,
    #[serde(default)]
    pub eta_points: Option<usize>,
}

/// `pacbayes`: posterior-average combination at a fixed part (1, 2, or 3),
/// followed by verification of the derived certificate.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacbayesPayload {
    pub part: PacBayesPart,
    pub family: Vec<RandomVariableModel>,
    pub prior: DiscreteMeasure,
    pub posterior: DiscreteMeasure,
    pub eta: f64,
    #[serde(default = "default_n_copies")]
    pub n_copies: u32,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_n_copies() -> u32 {
    1
}

/// `random_eta`: verify a random-weight inequality; when `delta` is given
/// and the verification holds, also extract the deviation, expectation,
/// and partial-converse bounds at that confidence.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEtaPayload {
    pub scenario: RandomEtaScenario,
    #[serde(default)]
    pub delta: Option<f64>,
}

/// `sequential`: one of three checks, selected by the `check` field.
#[derive(Debug, Clone)]
pub enum SequentialPayload {
    StoppedSum(StoppedSumPayload),
    Ville(VillePayload),
    Conditional(ConditionalPayload),
}

/// `check: "stopped_sum"`: optional stopping at the rule in `spec`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppedSumPayload {
    pub spec: ProcessSpec,
    pub n_paths: u64,
}

/// `check: "ville"`: maximal inequality for the running product, plus the
/// derived supremum certificate.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VillePayload {
    pub spec: ProcessSpec,
    pub delta: f64,
    pub n_paths: u64,
}

/// `check: "conditional"`: exact conditional-claim checks at sampled
/// histories, with a Monte Carlo re-estimation cross-check.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalPayload {
    pub spec: ProcessSpec,
    pub n_histories: u32,
    pub n_conditional_draws: u32,
}

/// All task names, for diagnostics.
pub const TASK_NAMES: [&str; 8] =
    ["verify", "bounds", "compose", "characterize", "conditions", "pacbayes", "random_eta", "sequential"];

/// Parse a scenario file's content and apply command-line overrides.
///
/// `verb` is the subcommand name; the file's `task` must match it. The
/// returned scenario has `budget.seed` already set to the effective seed.
pub fn parse_scenario(
    content: &str,
    verb: &str,
    seed_override: Option<u64>,
    samples_override: Option<u64>,
) -> Result<Scenario, InputError> {
    let echo: Value = serde_json::from_str(content).map_err(|e| input(format!("scenario parse error: {e}")))?;
    let raw: RawScenario =
        serde_json::from_value(echo.clone()).map_err(|e| input(format!("scenario schema error: {e}")))?;

    if raw.schema_version != SCHEMA_VERSION {
        return Err(input(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            raw.schema_version
        )));
    }
    if !TASK_NAMES.contains(&raw.task.as_str()) {
        return Err(input(format!(
            "task: unknown task `{}`; expected one of {}",
            raw.task,
            TASK_NAMES.join(", ")
        )));
    }
    if raw.task != verb {
        return Err(input(format!(
            "task: scenario declares `{}` but the `{verb}` subcommand was invoked",
            raw.task
        )));
    }

    let seed = seed_override.unwrap_or(raw.seed);
    let mut budget = raw.budget;
    budget.seed = seed;
    if let Some(samples) = samples_override {
        if samples == 0 {
            return Err(input("--samples: must be at least 1"));
        }
        budget.mc_samples = samples;
    }

    let payload = parse_payload(&raw.task, raw.payload.clone())?;
    Ok(Scenario { seed, budget, task: raw.task, payload, echo })
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, InputError> {
    serde_json::from_value(v).map_err(|e| input(format!("payload: {e}")))
}

/// Pull the `check` selector out of a payload object, returning the
/// selector and the remaining fields.
fn split_check(payload: Value, known: &[&str]) -> Result<(String, Value), InputError> {
    let Value::Object(mut map) = payload else {
        return Err(input("payload: expected a JSON object"));
    };
    let check = match map.remove("check") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(input(format!("payload.check: expected a string, got {other}"))),
        None => return Err(input("payload.check: missing; expected one of ".to_owned() + &known.join(", "))),
    };
    if !known.contains(&check.as_str()) {
        return Err(input(format!(
            "payload.check: unknown check `{check}`; expected one of {}",
            known.join(", ")
        )));
    }
    Ok((check, Value::Object(map)))
}

fn parse_payload(task: &str, payload: Value) -> Result<TaskPayload, InputError> {
    match task {
        "verify" => Ok(TaskPayload::Verify(from_value(payload)?)),
        "bounds" => {
            let p: BoundsPayload = from_value(payload)?;
            if p.deltas.is_empty() {
                return Err(input("payload.deltas: empty; need at least one confidence level"));
            }
            Ok(TaskPayload::Bounds(p))
        }
        "compose" => {
            let p: ComposePayload = from_value(payload)?;
            if p.certificates.is_empty() {
                return Err(input("payload.certificates: empty; need at least one certificate"));
            }
            match (&p.mode, &p.chain) {
                (Some(_), Some(_)) => {
                    return Err(input("payload: `mode` and `chain` are mutually exclusive; give exactly one"))
                }
                (None, None) => return Err(input("payload: one of `mode` or `chain` is required")),
                (None, Some(_)) if p.certificates.len() != 2 => {
                    return Err(input(format!(
                        "payload.certificates: chaining needs exactly 2 certificates, got {}",
                        p.certificates.len()
                    )))
                }
                _ => {}
            }
            Ok(TaskPayload::Compose(p))
        }
        "characterize" => {
            let p: CharacterizePayload = from_value(payload)?;
            check_family(&p.family)?;
            Ok(TaskPayload::Characterize(p))
        }
        "conditions" => {
            let (check, rest) = split_check(payload, &["smallball", "bernstein", "witness", "equivalence"])?;
            let inner = match check.as_str() {
                "smallball" => ConditionsPayload::Smallball(from_value(rest)?),
                "bernstein" => {
                    let p: BernsteinPayload = from_value(rest)?;
                    check_family(&p.family)?;
                    ConditionsPayload::Bernstein(p)
                }
                "witness" => {
                    let p: WitnessCheckPayload = from_value(rest)?;
                    check_family(&p.family)?;
                    ConditionsPayload::Witness(p)
                }
                _ => {
                    let p: EquivalencePayload = from_value(rest)?;
                    check_family(&p.family)?;
                    ConditionsPayload::Equivalence(p)
                }
            };
            Ok(TaskPayload::Conditions(inner))
        }
        "pacbayes" => {
            let p: PacbayesPayload = from_value(payload)?;
            check_family(&p.family)?;
            Ok(TaskPayload::Pacbayes(p))
        }
        "random_eta" => {
            let p: RandomEtaPayload = from_value(payload)?;
            if let Some(d) = p.delta {
                if !(d > 0.0 && d < 1.0) {
                    return Err(input(format!("payload.delta: must lie in (0, 1), got {d}")));
                }
            }
            Ok(TaskPayload::RandomEta(p))
        }
        "sequential" => {
            let (check, rest) = split_check(payload, &["stopped_sum", "ville", "conditional"])?;
            let inner = match check.as_str() {
                "stopped_sum" => SequentialPayload::StoppedSum(from_value(rest)?),
                "ville" => SequentialPayload::Ville(from_value(rest)?),
                _ => SequentialPayload::Conditional(from_value(rest)?),
            };
            Ok(TaskPayload::Sequential(inner))
        }
        other => Err(input(format!("task: unknown task `{other}`"))),
    }
}

fn check_family(family: &[RandomVariableModel]) -> Result<(), InputError> {
    if family.is_empty() {
        return Err(input("members: empty"));
    }
    Ok(())
}
