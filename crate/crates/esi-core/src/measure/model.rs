//! Random-variable models: analytic families, empirical samples, and
//! transforms, with exact moments, MGF evaluation, and sampling.
//!
//! Internally every model is *resolved* to a mixture of point atoms and
//! continuous density pieces. Discrete models stay exact finite sums;
//! continuous pieces integrate through the adaptive quadrature kernel.
//! Closed forms are used wherever the family admits one, so quadrature only
//! carries the cases that genuinely need it (the heavy-left-tail family and
//! positive-part transforms of continuous models).

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::num::quad;
use crate::num::log_sum_exp_weighted;

/// Largest atom count a discrete convolution may produce before the model is
/// declared unresolvable.
const MAX_CONV_ATOMS: usize = 200_000;

/// Built-in analytic distribution families.
///
/// `ParetoLeftAtom` is the zero-mean, infinite-variance family with density
/// `1/|u|^nu` on `u <= -1` and a balancing atom at `x_nu = (nu-1)/(nu-2)^2`;
/// it exists as a first-class family because two characterization results
/// use it as the counterexample with `E[U^2] = inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticFamily {
    Constant(f64),
    TwoPoint { x1: f64, p1: f64, x2: f64 },
    Rademacher,
    Gaussian { mean: f64, variance: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { a: f64, b: f64 },
    FiniteDiscrete { atoms: Vec<(f64, f64)> },
    ParetoLeftAtom { nu: f64 },
}

/// Model-to-model transforms.
///
/// `AffineScale { a, b }` maps `X` to `a*X + b`; `Shifted { delta }` to
/// `X + delta`; `PositivePart` to `max(X, 0)`; `SumOfIidCopies { n }` to the
/// sum of `n` independent copies; `AddIndependent(other)` to the sum of `X`
/// and an independent draw from `other`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformOp {
    Negate,
    AffineScale { a: f64, b: f64 },
    PositivePart,
    SumOfIidCopies { n: u32 },
    Shifted { delta: f64 },
    AddIndependent(Box<RandomVariableModel>),
}

/// A random variable: analytic family, empirical sample, or a transform of
/// another model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomVariableModel {
    Analytic(AnalyticFamily),
    Empirical { sample: Vec<f64> },
    Transform { op: TransformOp, base: Box<RandomVariableModel> },
}

/// Maximal interval around 0 on which `E[e^{eta X}]` is finite.
///
/// `eta = 0` always counts as inside (the MGF is 1 there); `eta_lo = 0`
/// encodes families whose MGF diverges for every negative `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfDomain {
    #[serde(with = "crate::serde_float")]
    pub eta_lo: f64,
    #[serde(with = "crate::serde_float")]
    pub eta_hi: f64,
}

impl MgfDomain {
    pub const ALL: MgfDomain = MgfDomain { eta_lo: f64::NEG_INFINITY, eta_hi: f64::INFINITY };

    pub fn contains(&self, eta: f64) -> bool {
        eta == 0.0 || (eta > self.eta_lo && eta < self.eta_hi)
    }
}

/// Exact moments with explicit infinity flags.
///
/// `prob_negative` is `None` only for transform chains with no exact
/// evaluation path (iid sums of families without a closed sum law).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Moments {
    #[serde(with = "crate::serde_float")]
    pub mean: f64,
    #[serde(with = "crate::serde_float")]
    pub second_moment: f64,
    #[serde(with = "crate::serde_float")]
    pub variance: f64,
    #[serde(with = "crate::serde_float::opt")]
    pub prob_negative: Option<f64>,
}

/// Log-MGF value with evaluation provenance.
pub(crate) struct LogMgf {
    /// `log E[e^{eta X}]`; `+inf` when eta is outside the MGF domain.
    pub lm: f64,
    /// Delta-method standard error of `lm` (0 for analytic evaluation).
    pub se: f64,
    pub used_quadrature: bool,
    /// True when `lm` is a plug-in estimate from an empirical sample.
    pub stochastic: bool,
    /// Sample size behind a stochastic value (0 otherwise).
    pub sample_count: u64,
}

impl LogMgf {
    fn exact(lm: f64) -> LogMgf {
        LogMgf { lm, se: 0.0, used_quadrature: false, stochastic: false, sample_count: 0 }
    }
    fn quad(lm: f64) -> LogMgf {
        LogMgf { lm, se: 0.0, used_quadrature: true, stochastic: false, sample_count: 0 }
    }
}

// ---------------------------------------------------------------------------
// Resolved representation
// ---------------------------------------------------------------------------

/// Continuous base densities a piece can carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ContBase {
    Gaussian { mean: f64, sd: f64 },
    /// Gamma(shape, rate) on [0, inf); Exponential is shape = 1.
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Sub-density `|v|^{-nu}` on `(-inf, -1]` with total mass `1/(nu-1)`.
    ParetoNegTail { nu: f64 },
}

impl ContBase {
    fn support(&self) -> (f64, f64) {
        match *self {
            ContBase::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ContBase::Gamma { .. } => (0.0, f64::INFINITY),
            ContBase::Uniform { lo, hi } => (lo, hi),
            ContBase::ParetoNegTail { .. } => (f64::NEG_INFINITY, -1.0),
        }
    }

    /// A point near the bulk of the mass, used to seed truncation scans.
    fn anchor(&self) -> f64 {
        match *self {
            ContBase::Gaussian { mean, .. } => mean,
            ContBase::Gamma { shape, rate } => ((shape - 1.0) / rate).max(0.0),
            ContBase::Uniform { lo, hi } => 0.5 * (lo + hi),
            ContBase::ParetoNegTail { .. } => -1.0,
        }
    }

    fn pdf(&self, v: f64) -> f64 {
        match *self {
            ContBase::Gaussian { mean, sd } => {
                let z = (v - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            ContBase::Gamma { shape, rate } => {
                if v < 0.0 {
                    0.0
                } else if v == 0.0 {
                    // Finite only for shape >= 1; shape 1 gives the
                    // exponential's density `rate` at the origin.
                    if shape > 1.0 {
                        0.0
                    } else if shape == 1.0 {
                        rate
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (shape * rate.ln() + (shape - 1.0) * v.ln() - rate * v - libm::lgamma(shape)).exp()
                }
            }
            ContBase::Uniform { lo, hi } => {
                if v >= lo && v <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            ContBase::ParetoNegTail { nu } => {
                if v <= -1.0 {
                    (-v).powf(-nu)
                } else {
                    0.0
                }
            }
        }
    }

    /// Mass of `[v1, v2]` under this (sub-)density. Closed form except for
    /// Gamma, which integrates its own pdf.
    fn mass_between(&self, v1: f64, v2: f64) -> Result<f64, MeasureError> {
        if v2 <= v1 {
            return Ok(0.0);
        }
        let (lo, hi) = self.support();
        let a = v1.max(lo);
        let b = v2.min(hi);
        if b <= a {
            return Ok(0.0);
        }
        match *self {
            ContBase::Gaussian { mean, sd } => {
                let phi = |x: f64| 0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2));
                Ok((phi(b) - phi(a)).clamp(0.0, 1.0))
            }
            ContBase::Gamma { shape, rate } => {
                if shape == 1.0 {
                    // Exponential: 1 - e^{-rate v}.
                    let cdf = |v: f64| if v <= 0.0 { 0.0 } else { -libm::expm1(-rate * v) };
                    return Ok((cdf(b) - cdf(a)).clamp(0.0, 1.0));
                }
                let anchor = self.anchor().clamp(a, if b.is_finite() { b } else { a + 1.0 });
                let r = quad::integrate(|v| self.pdf(v), a, b, anchor, 1e-12)
                    .map_err(|e| MeasureError::Numeric(e.to_string()))?;
                Ok(r.value.clamp(0.0, 1.0))
            }
            ContBase::Uniform { lo, hi } => Ok(((b - a) / (hi - lo)).clamp(0.0, 1.0)),
            ContBase::ParetoNegTail { nu } => {
                // Mass below v on the tail is T(v) = |v|^{1-nu}/(nu-1), the
                // antiderivative of |v|^{-nu} evaluated from -inf.
                let tail = |v: f64| {
                    if v >= -1.0 {
                        1.0 / (nu - 1.0)
                    } else {
                        (-v).powf(1.0 - nu) / (nu - 1.0)
                    }
                };
                Ok((tail(b) - tail(a)).max(0.0))
            }
        }
    }

    /// Whether `E[|V|^k]` restricted to an unbounded window is finite.
    fn polynomial_moment_finite(&self, k: u32) -> bool {
        match *self {
            ContBase::ParetoNegTail { nu } => (k as f64) < nu - 1.0,
            _ => true,
        }
    }
}

/// One continuous component: the value is `x = a*v + b` with `v` distributed
/// per `base` restricted to the window `[v_lo, v_hi]` (a sub-probability
/// slice after clipping transforms).
#[derive(Debug, Clone)]
pub(crate) struct Piece {
    pub base: ContBase,
    pub a: f64,
    pub b: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Piece {
    fn full(base: ContBase) -> Piece {
        let (lo, hi) = base.support();
        Piece { base, a: 1.0, b: 0.0, v_lo: lo, v_hi: hi }
    }

    fn is_full_window(&self) -> bool {
        let (lo, hi) = self.base.support();
        self.v_lo == lo && self.v_hi == hi
    }

    pub fn mass(&self) -> Result<f64, MeasureError> {
        self.base.mass_between(self.v_lo, self.v_hi)
    }

    fn x_of_v(&self, v: f64) -> f64 {
        self.a * v + self.b
    }

    /// Map an x-space point back to v-space (a != 0 by construction).
    fn v_of_x(&self, x: f64) -> f64 {
        (x - self.b) / self.a
    }

    /// `E[g(X); X in this piece]`, splitting the integral at the v-images of
    /// `x_breaks` so integrand kinks or jumps never straddle a panel.
    fn expect<F: Fn(f64) -> f64>(&self, g: &F, x_breaks: &[f64]) -> Result<f64, MeasureError> {
        if let ContBase::ParetoNegTail { nu } = self.base {
            return self.expect_pareto(nu, g, x_breaks);
        }
        let mut cuts: Vec<f64> = vec![self.v_lo, self.v_hi];
        for &xb in x_breaks {
            let v = self.v_of_x(xb);
            if v.is_finite() && v > self.v_lo && v < self.v_hi {
                cuts.push(v);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let anchor = self
                .base
                .anchor()
                .clamp(if lo.is_finite() { lo } else { f64::NEG_INFINITY }, if hi.is_finite() { hi } else { f64::INFINITY });
            let anchor = if anchor.is_finite() {
                anchor
            } else if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                0.0
            };
            let r = quad::integrate(|v| g(self.x_of_v(v)) * self.base.pdf(v), lo, hi, anchor, quad::DEFAULT_TOL)
                .map_err(|e| match e {
                    quad::QuadError::Divergent => MeasureError::DivergentIntegral,
                    other => MeasureError::Numeric(other.to_string()),
                })?;
            total += r.value;
        }
        Ok(total)
    }

    /// Pareto-tail expectation via the substitution `w = -1/v`.
    ///
    /// The tail decays like `|v|^{-nu}` with `nu < 3`, so direct truncation
    /// at the running-peak cutoff leaves ~1e-7 of slowly-decaying mass
    /// behind. Substituting `w = -1/v` maps the window into `(0, 1]` with
    /// `|v|^{-nu} dv = w^{nu-2} dw`, a finite interval whose endpoint
    /// singularity the adaptive driver resolves to full tolerance.
    fn expect_pareto<F: Fn(f64) -> f64>(&self, nu: f64, g: &F, x_breaks: &[f64]) -> Result<f64, MeasureError> {
        let w_lo = if self.v_lo.is_finite() { -1.0 / self.v_lo } else { 0.0 };
        let w_hi = -1.0 / self.v_hi;
        if !(w_hi > w_lo) {
            return Ok(0.0);
        }
        let mut cuts: Vec<f64> = vec![w_lo, w_hi];
        for &xb in x_breaks {
            let vb = self.v_of_x(xb);
            if vb <= -1.0 {
                let wb = -1.0 / vb;
                if wb > w_lo && wb < w_hi {
                    cuts.push(wb);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for win in cuts.windows(2) {
            let r = quad::integrate(
                |w| g(self.x_of_v(-1.0 / w)) * w.powf(nu - 2.0),
                win[0],
                win[1],
                win[1],
                quad::DEFAULT_TOL,
            )
            .map_err(|e| match e {
                quad::QuadError::Divergent => MeasureError::DivergentIntegral,
                other => MeasureError::Numeric(other.to_string()),
            })?;
            total += r.value;
        }
        Ok(total)
    }
}

/// A model reduced to atoms plus continuous pieces.
#[derive(Debug, Clone, Default)]
pub(crate) struct Resolved {
    /// (value, mass) pairs; masses positive, values deduplicated.
    pub atoms: Vec<(f64, f64)>,
    pub pieces: Vec<Piece>,
}

impl Resolved {
    fn pure_atoms(atoms: Vec<(f64, f64)>) -> Resolved {
        Resolved { atoms: merge_atoms(atoms), pieces: Vec::new() }
    }

    pub fn is_discrete(&self) -> bool {
        self.pieces.is_empty()
    }

    /// `E[g(X)]` with integrand splits at `x_breaks`.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: &F, x_breaks: &[f64]) -> Result<f64, MeasureError> {
        let mut total = 0.0;
        for &(x, m) in &self.atoms {
            total += m * g(x);
        }
        for p in &self.pieces {
            total += p.expect(g, x_breaks)?;
        }
        Ok(total)
    }

    /// Total mass strictly below `x`, plus the point mass at `x`.
    pub fn cdf_parts(&self, x: f64) -> Result<(f64, f64), MeasureError> {
        let mut below = 0.0;
        let mut at = 0.0;
        for &(v, m) in &self.atoms {
            if v < x {
                below += m;
            } else if v == x {
                at += m;
            }
        }
        for p in &self.pieces {
            let v = p.v_of_x(x);
            let (wlo, whi) = if p.a > 0.0 { (p.v_lo, v.min(p.v_hi)) } else { (v.max(p.v_lo), p.v_hi) };
            below += p.base.mass_between(wlo, whi)?;
        }
        Ok((below, at))
    }
}

/// Sort by value and merge duplicates; drop zero-mass entries. `-0.0` is
/// normalized to `0.0` first so the two merge.
fn merge_atoms(atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut list: Vec<(f64, f64)> = atoms.into_iter().map(|(v, m)| (v + 0.0, m)).filter(|&(_, m)| m != 0.0).collect();
    list.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(list.len());
    for (v, m) in list {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += m,
            _ => out.push((v, m)),
        }
    }
    out
}

/// Convolution of two atom lists (sum of independent discrete variables).
fn convolve_atoms(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, MeasureError> {
    if a.len().saturating_mul(b.len()) > 4 * MAX_CONV_ATOMS {
        return Err(MeasureError::Unresolvable(format!(
            "discrete convolution would visit {} products",
            a.len() * b.len()
        )));
    }
    let mut map: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for &(va, ma) in a {
        for &(vb, mb) in b {
            let v = va + vb + 0.0;
            *map.entry(v.to_bits()).or_insert(0.0) += ma * mb;
        }
    }
    if map.len() > MAX_CONV_ATOMS {
        return Err(MeasureError::Unresolvable(format!("convolution support grew to {} atoms", map.len())));
    }
    let mut out: Vec<(f64, f64)> = map.into_iter().map(|(bits, m)| (f64::from_bits(bits), m)).collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

/// n-fold self-convolution by binary exponentiation.
fn convolve_n(base: &[(f64, f64)], n: u32) -> Result<Vec<(f64, f64)>, MeasureError> {
    let mut result: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    let mut power = base.to_vec();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            result = convolve_atoms(&result, &power)?;
        }
        k >>= 1;
        if k > 0 {
            power = convolve_atoms(&power, &power)?;
        }
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Family-level closed forms
// ---------------------------------------------------------------------------

impl AnalyticFamily {
    fn validate(&self) -> Result<(), MeasureError> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(MeasureError::InvalidModel(format!("{what} must be finite, got {v}")))
            }
        };
        match self {
            AnalyticFamily::Constant(c) => finite(*c, "constant value"),
            AnalyticFamily::TwoPoint { x1, p1, x2 } => {
                finite(*x1, "x1")?;
                finite(*x2, "x2")?;
                if !(0.0..=1.0).contains(p1) {
                    return Err(MeasureError::InvalidModel(format!("two-point probability {p1} outside [0,1]")));
                }
                Ok(())
            }
            AnalyticFamily::Rademacher => Ok(()),
            AnalyticFamily::Gaussian { mean, variance } => {
                finite(*mean, "mean")?;
                if !(variance.is_finite() && *variance > 0.0) {
                    return Err(MeasureError::InvalidModel(format!("gaussian variance {variance} must be positive")));
                }
                Ok(())
            }
            AnalyticFamily::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(MeasureError::InvalidModel(format!("exponential rate {rate} must be positive")));
                }
                Ok(())
            }
            AnalyticFamily::Gamma { shape, rate } => {
                if !(shape.is_finite() && *shape > 0.0 && rate.is_finite() && *rate > 0.0) {
                    return Err(MeasureError::InvalidModel(format!("gamma(shape={shape}, rate={rate}) must have positive parameters")));
                }
                Ok(())
            }
            AnalyticFamily::Uniform { a, b } => {
                finite(*a, "a")?;
                finite(*b, "b")?;
                if a >= b {
                    return Err(MeasureError::InvalidModel(format!("uniform needs a < b, got [{a}, {b}]")));
                }
                Ok(())
            }
            AnalyticFamily::FiniteDiscrete { atoms } => {
                if atoms.is_empty() {
                    return Err(MeasureError::EmptyModel);
                }
                let mut sum = 0.0;
                for &(v, p) in atoms {
                    finite(v, "atom value")?;
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(MeasureError::InvalidModel(format!("atom probability {p} must be nonnegative")));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(MeasureError::InvalidModel(format!("atom probabilities sum to {sum}, not 1")));
                }
                Ok(())
            }
            AnalyticFamily::ParetoLeftAtom { nu } => {
                if !(nu.is_finite() && *nu > 2.5 && *nu < 3.0) {
                    return Err(MeasureError::InvalidModel(format!("pareto_left_atom needs nu in (2.5, 3), got {nu}")));
                }
                Ok(())
            }
        }
    }

    /// Location of the balancing atom of `ParetoLeftAtom`.
    pub fn pareto_atom_location(nu: f64) -> f64 {
        (nu - 1.0) / ((nu - 2.0) * (nu - 2.0))
    }

    fn mgf_domain(&self) -> MgfDomain {
        match *self {
            AnalyticFamily::Exponential { rate } => MgfDomain { eta_lo: f64::NEG_INFINITY, eta_hi: rate },
            AnalyticFamily::Gamma { rate, .. } => MgfDomain { eta_lo: f64::NEG_INFINITY, eta_hi: rate },
            AnalyticFamily::ParetoLeftAtom { .. } => MgfDomain { eta_lo: 0.0, eta_hi: f64::INFINITY },
            _ => MgfDomain::ALL,
        }
    }

    fn log_mgf(&self, eta: f64) -> Result<LogMgf, MeasureError> {
        if eta == 0.0 {
            return Ok(LogMgf::exact(0.0));
        }
        if !self.mgf_domain().contains(eta) {
            return Ok(LogMgf::exact(f64::INFINITY));
        }
        match *self {
            AnalyticFamily::Constant(c) => Ok(LogMgf::exact(eta * c)),
            AnalyticFamily::TwoPoint { x1, p1, x2 } => {
                Ok(LogMgf::exact(log_sum_exp_weighted([(p1, eta * x1), (1.0 - p1, eta * x2)].into_iter())))
            }
            AnalyticFamily::Rademacher => {
                // log cosh(eta), stable for large |eta|.
                let t = eta.abs();
                Ok(LogMgf::exact(t - std::f64::consts::LN_2 + libm::log1p((-2.0 * t).exp())))
            }
            AnalyticFamily::Gaussian { mean, variance } => Ok(LogMgf::exact(eta * mean + 0.5 * eta * eta * variance)),
            AnalyticFamily::Exponential { rate } => Ok(LogMgf::exact(-libm::log1p(-eta / rate))),
            AnalyticFamily::Gamma { shape, rate } => Ok(LogMgf::exact(-shape * libm::log1p(-eta / rate))),
            AnalyticFamily::Uniform { a, b } => {
                // E[e^{eta X}] = e^{eta m} (1 - e^{-|w|})/|w| with m the
                // endpoint favored by the sign of eta, w = |eta| (b - a).
                let w = (eta * (b - a)).abs();
                let m = if eta > 0.0 { b } else { a };
                let log_frac = if w < 1e-4 {
                    // log((1 - e^{-w})/w) = -w/2 + log(sinh(x)/x), x = w/2;
                    // the series keeps full precision where the direct form
                    // loses it to the log's input quantization near 1.
                    -0.5 * w + w * w / 24.0 - w.powi(4) / 2880.0
                } else {
                    ((-libm::expm1(-w)) / w).ln()
                };
                Ok(LogMgf::exact(eta * m + log_frac))
            }
            AnalyticFamily::FiniteDiscrete { ref atoms } => {
                Ok(LogMgf::exact(log_sum_exp_weighted(atoms.iter().map(|&(v, p)| (p, eta * v)))))
            }
            AnalyticFamily::ParetoLeftAtom { nu } => {
                // E[e^{eta U}] = \int_1^inf e^{-eta t} t^{-nu} dt
                //              + (nu-2)/(nu-1) * e^{eta x_nu},  eta > 0.
                let x_nu = Self::pareto_atom_location(nu);
                let atom_mass = (nu - 2.0) / (nu - 1.0);
                let tail = quad::integrate(|t: f64| (-eta * t).exp() * t.powf(-nu), 1.0, f64::INFINITY, 1.0, quad::DEFAULT_TOL)
                    .map_err(|e| MeasureError::Numeric(e.to_string()))?;
                Ok(LogMgf::quad((tail.value + atom_mass * (eta * x_nu).exp()).ln()))
            }
        }
    }

    /// (mean, second moment); infinities are explicit values.
    fn raw_moments(&self) -> (f64, f64) {
        match *self {
            AnalyticFamily::Constant(c) => (c, c * c),
            AnalyticFamily::TwoPoint { x1, p1, x2 } => {
                (p1 * x1 + (1.0 - p1) * x2, p1 * x1 * x1 + (1.0 - p1) * x2 * x2)
            }
            AnalyticFamily::Rademacher => (0.0, 1.0),
            AnalyticFamily::Gaussian { mean, variance } => (mean, mean * mean + variance),
            AnalyticFamily::Exponential { rate } => (1.0 / rate, 2.0 / (rate * rate)),
            AnalyticFamily::Gamma { shape, rate } => (shape / rate, shape * (shape + 1.0) / (rate * rate)),
            AnalyticFamily::Uniform { a, b } => ((a + b) / 2.0, (a * a + a * b + b * b) / 3.0),
            AnalyticFamily::FiniteDiscrete { ref atoms } => {
                let mean = atoms.iter().map(|&(v, p)| p * v).sum();
                let second = atoms.iter().map(|&(v, p)| p * v * v).sum();
                (mean, second)
            }
            AnalyticFamily::ParetoLeftAtom { .. } => (0.0, f64::INFINITY),
        }
    }

    fn resolve(&self) -> Resolved {
        match *self {
            AnalyticFamily::Constant(c) => Resolved::pure_atoms(vec![(c, 1.0)]),
            AnalyticFamily::TwoPoint { x1, p1, x2 } => Resolved::pure_atoms(vec![(x1, p1), (x2, 1.0 - p1)]),
            AnalyticFamily::Rademacher => Resolved::pure_atoms(vec![(-1.0, 0.5), (1.0, 0.5)]),
            AnalyticFamily::Gaussian { mean, variance } => Resolved {
                atoms: Vec::new(),
                pieces: vec![Piece::full(ContBase::Gaussian { mean, sd: variance.sqrt() })],
            },
            AnalyticFamily::Exponential { rate } => Resolved {
                atoms: Vec::new(),
                pieces: vec![Piece::full(ContBase::Gamma { shape: 1.0, rate })],
            },
            AnalyticFamily::Gamma { shape, rate } => Resolved {
                atoms: Vec::new(),
                pieces: vec![Piece::full(ContBase::Gamma { shape, rate })],
            },
            AnalyticFamily::Uniform { a, b } => Resolved {
                atoms: Vec::new(),
                pieces: vec![Piece::full(ContBase::Uniform { lo: a, hi: b })],
            },
            AnalyticFamily::FiniteDiscrete { ref atoms } => Resolved::pure_atoms(atoms.clone()),
            AnalyticFamily::ParetoLeftAtom { nu } => Resolved {
                atoms: vec![(Self::pareto_atom_location(nu), (nu - 2.0) / (nu - 1.0))],
                pieces: vec![Piece::full(ContBase::ParetoNegTail { nu })],
            },
        }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        use rand_distr::Distribution;
        match *self {
            AnalyticFamily::Constant(c) => c,
            AnalyticFamily::TwoPoint { x1, p1, x2 } => {
                if rng.gen::<f64>() < p1 {
                    x1
                } else {
                    x2
                }
            }
            AnalyticFamily::Rademacher => {
                if rng.gen::<f64>() < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            AnalyticFamily::Gaussian { mean, variance } => {
                rand_distr::Normal::new(mean, variance.sqrt()).expect("validated").sample(rng)
            }
            AnalyticFamily::Exponential { rate } => rand_distr::Exp::new(rate).expect("validated").sample(rng),
            AnalyticFamily::Gamma { shape, rate } => {
                rand_distr::Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng)
            }
            AnalyticFamily::Uniform { a, b } => rng.gen_range(a..b),
            AnalyticFamily::FiniteDiscrete { ref atoms } => {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                atoms.last().expect("validated nonempty").0
            }
            AnalyticFamily::ParetoLeftAtom { nu } => {
                let left_mass = 1.0 / (nu - 1.0);
                if rng.gen::<f64>() < left_mass {
                    // Inverse CDF of the conditional left tail: |U| = w^{-1/(nu-1)}.
                    let w: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
                    -w.powf(-1.0 / (nu - 1.0))
                } else {
                    Self::pareto_atom_location(nu)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Model-level recursion
// ---------------------------------------------------------------------------

impl RandomVariableModel {
    /// Shorthand constructors.
    pub fn constant(c: f64) -> Self {
        RandomVariableModel::Analytic(AnalyticFamily::Constant(c))
    }
    pub fn gaussian(mean: f64, variance: f64) -> Self {
        RandomVariableModel::Analytic(AnalyticFamily::Gaussian { mean, variance })
    }
    pub fn exponential(rate: f64) -> Self {
        RandomVariableModel::Analytic(AnalyticFamily::Exponential { rate })
    }
    pub fn rademacher() -> Self {
        RandomVariableModel::Analytic(AnalyticFamily::Rademacher)
    }
    pub fn two_point(x1: f64, p1: f64, x2: f64) -> Self {
        RandomVariableModel::Analytic(AnalyticFamily::TwoPoint { x1, p1, x2 })
    }
    pub fn finite_discrete(atoms: Vec<(f64, f64)>) -> Self {
        RandomVariableModel::Analytic(AnalyticFamily::FiniteDiscrete { atoms })
    }
    pub fn pareto_left_atom(nu: f64) -> Self {
        RandomVariableModel::Analytic(AnalyticFamily::ParetoLeftAtom { nu })
    }
    pub fn transformed(self, op: TransformOp) -> Self {
        RandomVariableModel::Transform { op, base: Box::new(self) }
    }
    /// `X - delta`, the usual centering step.
    /// `X + Y` for an independent `Y`.
    pub fn plus_independent(self, other: RandomVariableModel) -> Self {
        self.transformed(TransformOp::AddIndependent(Box::new(other)))
    }

    pub fn shifted(self, delta: f64) -> Self {
        self.transformed(TransformOp::Shifted { delta })
    }
    pub fn negated(self) -> Self {
        self.transformed(TransformOp::Negate)
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        match self {
            RandomVariableModel::Analytic(f) => f.validate(),
            RandomVariableModel::Empirical { sample } => {
                if sample.is_empty() {
                    return Err(MeasureError::EmptyModel);
                }
                if sample.iter().any(|v| !v.is_finite()) {
                    return Err(MeasureError::InvalidModel("empirical sample contains a non-finite value".into()));
                }
                Ok(())
            }
            RandomVariableModel::Transform { op, base } => {
                match op {
                    TransformOp::SumOfIidCopies { n } if *n == 0 => return Err(MeasureError::EmptyModel),
                    TransformOp::AffineScale { a, b } if !(a.is_finite() && b.is_finite()) => {
                        return Err(MeasureError::InvalidModel("affine coefficients must be finite".into()))
                    }
                    TransformOp::Shifted { delta } if !delta.is_finite() => {
                        return Err(MeasureError::InvalidModel("shift must be finite".into()))
                    }
                    TransformOp::AddIndependent(other) => other.validate()?,
                    _ => {}
                }
                base.validate()
            }
        }
    }

    /// The sample behind this model when it is an empirical sample under
    /// pointwise value maps only (negate/affine/shift/positive-part).
    fn pointwise_sample(&self) -> Option<Vec<f64>> {
        match self {
            RandomVariableModel::Empirical { sample } => Some(sample.clone()),
            RandomVariableModel::Transform { op, base } => {
                let s = base.pointwise_sample()?;
                match op {
                    TransformOp::Negate => Some(s.into_iter().map(|x| -x).collect()),
                    TransformOp::AffineScale { a, b } => Some(s.into_iter().map(|x| a * x + b).collect()),
                    TransformOp::Shifted { delta } => Some(s.into_iter().map(|x| x + delta).collect()),
                    TransformOp::PositivePart => Some(s.into_iter().map(|x| x.max(0.0)).collect()),
                    TransformOp::SumOfIidCopies { .. } | TransformOp::AddIndependent(_) => None,
                }
            }
            RandomVariableModel::Analytic(_) => None,
        }
    }

    /// Whether any leaf is an empirical sample (stochastic provenance).
    pub fn contains_empirical(&self) -> bool {
        match self {
            RandomVariableModel::Empirical { .. } => true,
            RandomVariableModel::Analytic(_) => false,
            RandomVariableModel::Transform { op, base } => {
                let other_empirical = match op {
                    TransformOp::AddIndependent(other) => other.contains_empirical(),
                    _ => false,
                };
                other_empirical || base.contains_empirical()
            }
        }
    }

    pub fn mgf_domain(&self) -> Result<MgfDomain, MeasureError> {
        self.validate()?;
        Ok(self.mgf_domain_unchecked())
    }

    fn mgf_domain_unchecked(&self) -> MgfDomain {
        match self {
            RandomVariableModel::Analytic(f) => f.mgf_domain(),
            RandomVariableModel::Empirical { .. } => MgfDomain::ALL,
            RandomVariableModel::Transform { op, base } => {
                let d = base.mgf_domain_unchecked();
                match op {
                    TransformOp::Negate => MgfDomain { eta_lo: -d.eta_hi, eta_hi: -d.eta_lo },
                    TransformOp::AffineScale { a, .. } => {
                        if *a == 0.0 {
                            MgfDomain::ALL
                        } else if *a > 0.0 {
                            MgfDomain { eta_lo: d.eta_lo / a, eta_hi: d.eta_hi / a }
                        } else {
                            MgfDomain { eta_lo: d.eta_hi / a, eta_hi: d.eta_lo / a }
                        }
                    }
                    TransformOp::Shifted { .. } => d,
                    TransformOp::SumOfIidCopies { .. } => d,
                    // max(X, 0) is bounded below, so every eta < 0 is fine;
                    // the right edge is inherited from the base.
                    TransformOp::PositivePart => MgfDomain { eta_lo: f64::NEG_INFINITY, eta_hi: d.eta_hi },
                    // E|e^{eta(X+Y)}| = E[e^{eta X}] E[e^{eta Y}] under
                    // independence: both factors must be finite.
                    TransformOp::AddIndependent(other) => {
                        let o = other.mgf_domain_unchecked();
                        MgfDomain { eta_lo: d.eta_lo.max(o.eta_lo), eta_hi: d.eta_hi.min(o.eta_hi) }
                    }
                }
            }
        }
    }

    /// `log E[e^{eta X}]` with provenance; `+inf` outside the MGF domain.
    /// Defined for any real `eta` (internal recursion flips signs).
    pub(crate) fn log_mgf_se(&self, eta: f64) -> Result<LogMgf, MeasureError> {
        if eta == 0.0 {
            return Ok(LogMgf::exact(0.0));
        }
        if let Some(sample) = self.pointwise_sample() {
            return Ok(plugin_log_mgf(&sample, eta));
        }
        match self {
            RandomVariableModel::Analytic(f) => f.log_mgf(eta),
            // Unreachable: pointwise_sample covers the empirical leaf.
            RandomVariableModel::Empirical { sample } => Ok(plugin_log_mgf(sample, eta)),
            RandomVariableModel::Transform { op, base } => match op {
                TransformOp::Negate => base.log_mgf_se(-eta),
                TransformOp::AffineScale { a, b } => {
                    let mut r = base.log_mgf_se(eta * a)?;
                    r.lm += eta * b;
                    Ok(r)
                }
                TransformOp::Shifted { delta } => {
                    let mut r = base.log_mgf_se(eta)?;
                    r.lm += eta * delta;
                    Ok(r)
                }
                TransformOp::SumOfIidCopies { n } => {
                    let mut r = base.log_mgf_se(eta)?;
                    r.lm *= *n as f64;
                    r.se *= *n as f64;
                    Ok(r)
                }
                TransformOp::AddIndependent(other) => {
                    let mut r = base.log_mgf_se(eta)?;
                    let o = other.log_mgf_se(eta)?;
                    r.lm += o.lm;
                    r.se = r.se.hypot(o.se);
                    r.used_quadrature |= o.used_quadrature;
                    r.stochastic |= o.stochastic;
                    r.sample_count = r.sample_count.max(o.sample_count);
                    Ok(r)
                }
                TransformOp::PositivePart => {
                    if !self.mgf_domain_unchecked().contains(eta) {
                        return Ok(LogMgf::exact(f64::INFINITY));
                    }
                    let resolved = self.resolve()?;
                    if resolved.is_discrete() {
                        return Ok(LogMgf::exact(log_sum_exp_weighted(
                            resolved.atoms.iter().map(|&(v, m)| (m, eta * v)),
                        )));
                    }
                    let value = resolved.expect(&|x| (eta * x).exp(), &[0.0])?;
                    Ok(LogMgf::quad(value.ln()))
                }
            },
        }
    }

    /// Exact moments; see [`Moments`] for the infinity conventions.
    pub fn moments(&self) -> Result<Moments, MeasureError> {
        self.validate()?;
        let (mean, second) = self.raw_moments()?;
        let variance = if second.is_finite() { (second - mean * mean).max(0.0) } else { f64::INFINITY };
        let prob_negative = match self.resolve() {
            Ok(resolved) => Some(resolved.cdf_parts(0.0)?.0),
            Err(MeasureError::Unresolvable(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Moments { mean, second_moment: second, variance, prob_negative })
    }

    fn raw_moments(&self) -> Result<(f64, f64), MeasureError> {
        match self {
            RandomVariableModel::Analytic(f) => Ok(f.raw_moments()),
            RandomVariableModel::Empirical { sample } => {
                let n = sample.len() as f64;
                let mean = sample.iter().sum::<f64>() / n;
                let second = sample.iter().map(|x| x * x).sum::<f64>() / n;
                Ok((mean, second))
            }
            RandomVariableModel::Transform { op, base } => {
                match op {
                    TransformOp::Negate => {
                        let (m, s) = base.raw_moments()?;
                        Ok((-m, s))
                    }
                    TransformOp::AffineScale { a, b } => {
                        let (m, s) = base.raw_moments()?;
                        if s.is_finite() {
                            Ok((a * m + b, a * a * s + 2.0 * a * b * m + b * b))
                        } else {
                            Ok((a * m + b, if *a == 0.0 { b * b } else { f64::INFINITY }))
                        }
                    }
                    TransformOp::Shifted { delta } => {
                        let (m, s) = base.raw_moments()?;
                        if s.is_finite() {
                            Ok((m + delta, s + 2.0 * delta * m + delta * delta))
                        } else {
                            Ok((m + delta, f64::INFINITY))
                        }
                    }
                    TransformOp::SumOfIidCopies { n } => {
                        let (m, s) = base.raw_moments()?;
                        let nf = *n as f64;
                        if s.is_finite() {
                            Ok((nf * m, nf * s + nf * (nf - 1.0) * m * m))
                        } else {
                            Ok((nf * m, f64::INFINITY))
                        }
                    }
                    TransformOp::AddIndependent(other) => {
                        let (ma, sa) = base.raw_moments()?;
                        let (mb, sb) = other.raw_moments()?;
                        if sa.is_finite() && sb.is_finite() {
                            Ok((ma + mb, sa + 2.0 * ma * mb + sb))
                        } else {
                            Ok((ma + mb, f64::INFINITY))
                        }
                    }
                    TransformOp::PositivePart => {
                        let resolved = self.resolve()?;
                        let mut mean = 0.0;
                        let mut second = 0.0;
                        for &(x, m) in &resolved.atoms {
                            mean += m * x;
                            second += m * x * x;
                        }
                        for p in &resolved.pieces {
                            if !p.base.polynomial_moment_finite(2) && (p.v_lo == f64::NEG_INFINITY || p.v_hi == f64::INFINITY)
                            {
                                // Heavy tail survives the clipping: moments diverge.
                                second = f64::INFINITY;
                                if !p.base.polynomial_moment_finite(1) {
                                    mean = f64::INFINITY;
                                    continue;
                                }
                            }
                            mean += p.expect(&|x| x, &[])?;
                            if second.is_finite() {
                                second += p.expect(&|x| x * x, &[])?;
                            }
                        }
                        Ok((mean, second))
                    }
                }
            }
        }
    }

    /// Reduce to atoms + continuous pieces. Fails with `Unresolvable` for
    /// transform chains with no exact representation (iid sums of families
    /// without a closed sum law, oversize convolutions).
    pub(crate) fn resolve(&self) -> Result<Resolved, MeasureError> {
        match self {
            RandomVariableModel::Analytic(f) => Ok(f.resolve()),
            RandomVariableModel::Empirical { sample } => {
                let w = 1.0 / sample.len() as f64;
                Ok(Resolved::pure_atoms(sample.iter().map(|&v| (v, w)).collect()))
            }
            RandomVariableModel::Transform { op, base } => {
                match op {
                    TransformOp::Negate => {
                        let r = base.resolve()?;
                        Ok(Resolved {
                            atoms: merge_atoms(r.atoms.into_iter().map(|(v, m)| (-v, m)).collect()),
                            pieces: r.pieces.into_iter().map(|p| Piece { a: -p.a, b: -p.b, ..p }).collect(),
                        })
                    }
                    &TransformOp::AffineScale { a, b } => {
                        if a == 0.0 {
                            return Ok(Resolved::pure_atoms(vec![(b, 1.0)]));
                        }
                        let r = base.resolve()?;
                        Ok(Resolved {
                            atoms: merge_atoms(r.atoms.into_iter().map(|(v, m)| (a * v + b, m)).collect()),
                            pieces: r.pieces.into_iter().map(|p| Piece { a: a * p.a, b: a * p.b + b, ..p }).collect(),
                        })
                    }
                    TransformOp::Shifted { delta } => {
                        let r = base.resolve()?;
                        Ok(Resolved {
                            atoms: merge_atoms(r.atoms.into_iter().map(|(v, m)| (v + delta, m)).collect()),
                            pieces: r.pieces.into_iter().map(|p| Piece { b: p.b + delta, ..p }).collect(),
                        })
                    }
                    TransformOp::PositivePart => {
                        let r = base.resolve()?;
                        let mut zero_mass = 0.0;
                        let mut atoms: Vec<(f64, f64)> = Vec::new();
                        for (v, m) in r.atoms {
                            if v > 0.0 {
                                atoms.push((v, m));
                            } else {
                                zero_mass += m;
                            }
                        }
                        let mut pieces = Vec::new();
                        for p in r.pieces {
                            // Keep the window where x = a v + b > 0; clipped
                            // mass collapses onto the atom at 0.
                            let v0 = p.v_of_x(0.0);
                            let (klo, khi) = if p.a > 0.0 {
                                (v0.max(p.v_lo), p.v_hi)
                            } else {
                                (p.v_lo, v0.min(p.v_hi))
                            };
                            let full = p.mass()?;
                            if khi > klo {
                                let kept = Piece { v_lo: klo, v_hi: khi, ..p };
                                zero_mass += (full - kept.mass()?).max(0.0);
                                pieces.push(kept);
                            } else {
                                zero_mass += full;
                            }
                        }
                        if zero_mass > 0.0 {
                            atoms.push((0.0, zero_mass));
                        }
                        Ok(Resolved { atoms: merge_atoms(atoms), pieces })
                    }
                    &TransformOp::SumOfIidCopies { n } => {
                        if n == 1 {
                            return base.resolve();
                        }
                        let r = base.resolve()?;
                        if r.is_discrete() {
                            return Ok(Resolved { atoms: convolve_n(&r.atoms, n)?, pieces: Vec::new() });
                        }
                        if r.atoms.is_empty() && r.pieces.len() == 1 && r.pieces[0].is_full_window() {
                            let p = &r.pieces[0];
                            let nf = n as f64;
                            // sum_i (a V_i + b) = a (sum_i V_i) + n b, and the
                            // base sum has a closed law for Gaussian/Gamma.
                            let summed = match p.base {
                                ContBase::Gaussian { mean, sd } => {
                                    Some(ContBase::Gaussian { mean: nf * mean, sd: sd * nf.sqrt() })
                                }
                                ContBase::Gamma { shape, rate } => Some(ContBase::Gamma { shape: nf * shape, rate }),
                                _ => None,
                            };
                            if let Some(sum_base) = summed {
                                return Ok(Resolved {
                                    atoms: Vec::new(),
                                    pieces: vec![Piece {
                                        base: sum_base,
                                        a: p.a,
                                        b: p.b * nf,
                                        v_lo: sum_base.support().0,
                                        v_hi: sum_base.support().1,
                                    }],
                                });
                            }
                        }
                        Err(MeasureError::Unresolvable(
                            "iid sum of this base has no closed-form law; use sampling-based operations".into(),
                        ))
                    }
                    TransformOp::AddIndependent(other) => {
                        let ra = base.resolve()?;
                        let rb = other.resolve()?;
                        if ra.is_discrete() && rb.is_discrete() {
                            return Ok(Resolved {
                                atoms: convolve_atoms(&ra.atoms, &rb.atoms)?,
                                pieces: Vec::new(),
                            });
                        }
                        // A single-atom side is a deterministic shift, which
                        // keeps continuous pieces exact.
                        let as_shift =
                            |r: &Resolved| if r.pieces.is_empty() && r.atoms.len() == 1 { Some(r.atoms[0].0) } else { None };
                        let (r, c) = if let Some(c) = as_shift(&rb) {
                            (ra, c)
                        } else if let Some(c) = as_shift(&ra) {
                            (rb, c)
                        } else {
                            return Err(MeasureError::Unresolvable(
                                "independent sum with a continuous side has no exact representation; use sampling-based operations"
                                    .into(),
                            ));
                        };
                        Ok(Resolved {
                            atoms: merge_atoms(r.atoms.into_iter().map(|(v, m)| (v + c, m)).collect()),
                            pieces: r.pieces.into_iter().map(|p| Piece { b: p.b + c, ..p }).collect(),
                        })
                    }
                }
            }
        }
    }

    /// `E[g(X)]`, exact on atoms, adaptive quadrature on continuous pieces,
    /// with panel splits at `x_breaks` (pass the discontinuities of `g`).
    pub fn expect_fn<F: Fn(f64) -> f64>(&self, g: F, x_breaks: &[f64]) -> Result<f64, MeasureError> {
        self.validate()?;
        self.resolve()?.expect(&g, x_breaks)
    }

    /// `P(X < x)` and `P(X = x)`.
    pub fn cdf_parts(&self, x: f64) -> Result<(f64, f64), MeasureError> {
        self.validate()?;
        self.resolve()?.cdf_parts(x)
    }

    /// Draw one value.
    pub fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            RandomVariableModel::Analytic(f) => f.sample(rng),
            RandomVariableModel::Empirical { sample } => {
                let i = rng.gen_range(0..sample.len());
                sample[i]
            }
            RandomVariableModel::Transform { op, base } => match op {
                TransformOp::Negate => -base.sample(rng),
                TransformOp::AffineScale { a, b } => a * base.sample(rng) + b,
                TransformOp::Shifted { delta } => base.sample(rng) + delta,
                TransformOp::PositivePart => base.sample(rng).max(0.0),
                TransformOp::SumOfIidCopies { n } => (0..*n).map(|_| base.sample(rng)).sum(),
                TransformOp::AddIndependent(other) => base.sample(rng) + other.sample(rng),
            },
        }
    }

    /// The deterministic value of this model, if it is one.
    pub fn as_constant(&self) -> Option<f64> {
        match self.resolve() {
            Ok(r) if r.pieces.is_empty() && r.atoms.len() == 1 => Some(r.atoms[0].0),
            _ => None,
        }
    }
}

/// Plug-in sample log-MGF with its delta-method standard error.
fn plugin_log_mgf(sample: &[f64], eta: f64) -> LogMgf {
    let n = sample.len() as f64;
    let m = sample.iter().map(|&x| eta * x).fold(f64::NEG_INFINITY, f64::max);
    let zs: Vec<f64> = sample.iter().map(|&x| (eta * x - m).exp()).collect();
    let mean_z = zs.iter().sum::<f64>() / n;
    let var_z = if sample.len() > 1 {
        zs.iter().map(|z| (z - mean_z) * (z - mean_z)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    LogMgf {
        lm: m + mean_z.ln(),
        se: (var_z / n).sqrt() / mean_z,
        used_quadrature: false,
        stochastic: true,
        sample_count: sample.len() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::substream;

    fn model_expect(m: &RandomVariableModel, g: impl Fn(f64) -> f64) -> f64 {
        m.expect_fn(g, &[]).unwrap()
    }

    #[test]
    fn independent_sum_adds_log_mgf_and_moments() {
        let a = RandomVariableModel::rademacher();
        let b = RandomVariableModel::two_point(-0.5, 0.25, 1.7);
        let s = a.clone().plus_independent(b.clone());
        let eta = 0.7;
        let want = a.log_mgf_se(eta).unwrap().lm + b.log_mgf_se(eta).unwrap().lm;
        assert!((s.log_mgf_se(eta).unwrap().lm - want).abs() < 1e-14);

        let (ma, mb, ms) = (a.moments().unwrap(), b.moments().unwrap(), s.moments().unwrap());
        assert!((ms.mean - (ma.mean + mb.mean)).abs() < 1e-14);
        assert!((ms.variance - (ma.variance + mb.variance)).abs() < 1e-13);

        // Exact convolution: 2 x 2 distinct support points.
        let atoms = s.resolve().unwrap().atoms;
        assert_eq!(atoms.len(), 4);
        assert!((atoms.iter().map(|&(_, m)| m).sum::<f64>() - 1.0).abs() < 1e-14);

        // A single-atom side acts as a deterministic shift on continuous laws.
        let g = RandomVariableModel::gaussian(1.0, 2.0).plus_independent(RandomVariableModel::constant(3.0));
        assert!((g.moments().unwrap().mean - 4.0).abs() < 1e-12);
        assert!((g.cdf_parts(4.0).unwrap().0 - 0.5).abs() < 1e-12);

        // Continuous + continuous has no exact reduction.
        let gg = RandomVariableModel::gaussian(0.0, 1.0).plus_independent(RandomVariableModel::exponential(1.0));
        assert!(matches!(gg.resolve(), Err(MeasureError::Unresolvable(_))));
        // ... but the MGF domain still intersects correctly: the
        // exponential factor caps eta at its rate.
        let d = gg.mgf_domain().unwrap();
        assert_eq!(d.eta_hi, 1.0);
        assert_eq!(d.eta_lo, f64::NEG_INFINITY);
    }

    #[test]
    fn pareto_family_matches_paper_arithmetic() {
        let nu = 2.75;
        let x_nu = AnalyticFamily::pareto_atom_location(nu);
        assert!((x_nu - 1.75 / 0.5625).abs() < 1e-12);
        let m = RandomVariableModel::pareto_left_atom(nu);
        let mom = m.moments().unwrap();
        assert!(mom.mean.abs() < 1e-12);
        assert!(mom.second_moment.is_infinite());
        assert!((mom.prob_negative.unwrap() - 1.0 / (nu - 1.0)).abs() < 1e-10);
        // E[U 1{U <= -1}] = -1/(nu-2) = -4/3.
        let left_mean = model_expect(&m, |x| if x <= -1.0 { x } else { 0.0 });
        assert!((left_mean + 4.0 / 3.0).abs() < 1e-8, "got {left_mean}");
    }

    #[test]
    fn positive_part_of_gaussian_has_exact_zero_atom() {
        let m = RandomVariableModel::gaussian(0.0, 1.0).transformed(TransformOp::PositivePart);
        let (below, at) = m.cdf_parts(0.0).unwrap();
        assert_eq!(below, 0.0);
        assert!((at - 0.5).abs() < 1e-12);
        let mom = m.moments().unwrap();
        // E[max(Z,0)] = 1/sqrt(2 pi), E[max(Z,0)^2] = 1/2.
        assert!((mom.mean - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
        assert!((mom.second_moment - 0.5).abs() < 1e-9);
    }

    #[test]
    fn iid_sum_reductions() {
        // Gaussian sums stay Gaussian.
        let g = RandomVariableModel::gaussian(0.5, 2.0).transformed(TransformOp::SumOfIidCopies { n: 7 });
        let mom = g.moments().unwrap();
        assert!((mom.mean - 3.5).abs() < 1e-12);
        assert!((mom.variance - 14.0).abs() < 1e-12);
        let lm = g.log_mgf_se(0.3).unwrap();
        assert!((lm.lm - 7.0 * (0.3 * 0.5 + 0.5 * 0.09 * 2.0)).abs() < 1e-12);
        // Rademacher sums convolve exactly: support of size n+1.
        let r = RandomVariableModel::rademacher().transformed(TransformOp::SumOfIidCopies { n: 100 });
        let resolved = r.resolve().unwrap();
        assert_eq!(resolved.atoms.len(), 101);
        let p_neg = r.moments().unwrap().prob_negative.unwrap();
        // P(S_100 < 0) by symmetry: (1 - P(S = 0)) / 2.
        let p0: f64 = resolved.atoms.iter().find(|&&(v, _)| v == 0.0).unwrap().1;
        assert!((p_neg - 0.5 * (1.0 - p0)).abs() < 1e-12);
    }

    #[test]
    fn empirical_log_mgf_has_delta_method_se() {
        let m = RandomVariableModel::Empirical { sample: vec![1.0, 2.0, 3.0] };
        let mom = m.moments().unwrap();
        assert!((mom.mean - 2.0).abs() < 1e-15);
        assert!((mom.second_moment - 14.0 / 3.0).abs() < 1e-15);
        let r = m.log_mgf_se(0.5).unwrap();
        let direct: f64 = (0.5f64.exp() + 1.0f64.exp() + 1.5f64.exp()) / 3.0;
        assert!((r.lm - direct.ln()).abs() < 1e-12);
        assert!(r.stochastic && r.se > 0.0);
    }

    #[test]
    fn mgf_domain_tracks_transforms() {
        let e = RandomVariableModel::exponential(2.0);
        let d = e.mgf_domain().unwrap();
        assert_eq!(d.eta_hi, 2.0);
        let neg = e.clone().negated();
        let dn = neg.mgf_domain().unwrap();
        assert_eq!(dn.eta_lo, -2.0);
        assert_eq!(dn.eta_hi, f64::INFINITY);
        assert!(e.log_mgf_se(2.0).unwrap().lm.is_infinite());
        let p = RandomVariableModel::pareto_left_atom(2.75);
        assert!(p.log_mgf_se(-0.1).unwrap().lm.is_infinite());
        assert!(p.mgf_domain().unwrap().contains(0.0));
    }

    #[test]
    fn sampling_tracks_moments() {
        let models = [
            RandomVariableModel::gaussian(-0.5, 2.0),
            RandomVariableModel::exponential(1.5),
            RandomVariableModel::Analytic(AnalyticFamily::Gamma { shape: 2.0, rate: 1.0 }),
            RandomVariableModel::pareto_left_atom(2.8),
            RandomVariableModel::two_point(-1.0, 0.25, 2.0),
        ];
        for (i, m) in models.iter().enumerate() {
            let mut rng = substream(17, i as u64, 0);
            let n = 200_000;
            let mean: f64 = (0..n).map(|_| m.sample(&mut rng)).sum::<f64>() / n as f64;
            let want = m.moments().unwrap().mean;
            assert!((mean - want).abs() < 0.05, "model {i}: sample mean {mean} vs {want}");
        }
    }

    #[test]
    fn uniform_log_mgf_is_stable_near_zero() {
        let u = RandomVariableModel::Analytic(AnalyticFamily::Uniform { a: -1.0, b: 3.0 });
        // Moderate eta: direct evaluation of (e^{3 eta} - e^{-eta})/(4 eta).
        for &eta in &[0.5, -0.5, 40.0, -40.0] {
            let lm = u.log_mgf_se(eta).unwrap().lm;
            let direct = ((eta * 3.0f64).exp() - (-eta).exp()) / (eta * 4.0);
            assert!((lm - direct.ln()).abs() < 1e-12, "eta={eta}: {lm} vs {}", direct.ln());
        }
        // Tiny eta: cumulant series eta k1 + eta^2 k2 / 2 with k1 = 1,
        // k2 = (b-a)^2/12 = 4/3 (higher terms are below f64 resolution).
        for &eta in &[1e-12f64, 1e-6] {
            let lm = u.log_mgf_se(eta).unwrap().lm;
            let series = eta + eta * eta * (2.0 / 3.0);
            assert!((lm - series).abs() < 1e-15 * 1.0f64.max(series.abs()), "eta={eta}: {lm} vs {series}");
        }
    }
}
