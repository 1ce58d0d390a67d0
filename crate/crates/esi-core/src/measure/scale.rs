//! Rate-scale functions `u(eps)` and their classification.
//!
//! A scale function maps a slack `eps > 0` to the exponent weight used at
//! that slack. The three regimes are: *strong* (constant weight, slack-free
//! statements), *weak* (weight vanishing as eps -> 0, so the inequality
//! costs an arbitrarily small additive slack), and *general* (everything
//! else). Classification is structural, from the parametric form, not from
//! sampling the curve.

use serde::{Deserialize, Serialize};

use super::MeasureError;

/// Parametric scale functions.
///
/// * `Constant`: `u(eps) = eta`.
/// * `LinearCapped`: `u(eps) = min(slope * eps, cap)`.
/// * `PowerCapped`: `u(eps) = min(coeff * eps^gamma, cap)`; `gamma = 0`
///   degenerates to the constant `min(coeff, cap)`.
/// * `Tabulated`: piecewise-linear interpolation through `(eps, u)` knots,
///   constant extrapolation beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFunction {
    Constant {
        eta: f64,
    },
    LinearCapped {
        slope: f64,
        #[serde(with = "crate::serde_float")]
        cap: f64,
    },
    PowerCapped {
        coeff: f64,
        gamma: f64,
        #[serde(with = "crate::serde_float")]
        cap: f64,
    },
    Tabulated {
        knots: Vec<(f64, f64)>,
    },
}

/// Structural class of a scale function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleClass {
    Strong,
    Weak,
    General,
}

impl ScaleFunction {
    pub fn constant(eta: f64) -> ScaleFunction {
        ScaleFunction::Constant { eta }
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        let bad = |msg: String| Err(MeasureError::InvalidScale(msg));
        match self {
            ScaleFunction::Constant { eta } => {
                if !(eta.is_finite() && *eta > 0.0) {
                    return bad(format!("constant scale needs eta > 0, got {eta}"));
                }
            }
            ScaleFunction::LinearCapped { slope, cap } => {
                if !(slope.is_finite() && *slope > 0.0) {
                    return bad(format!("linear scale needs slope > 0, got {slope}"));
                }
                if !(*cap > 0.0) || cap.is_nan() {
                    return bad(format!("linear scale needs cap > 0, got {cap}"));
                }
            }
            ScaleFunction::PowerCapped { coeff, gamma, cap } => {
                if !(coeff.is_finite() && *coeff > 0.0) {
                    return bad(format!("power scale needs coeff > 0, got {coeff}"));
                }
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return bad(format!("power scale needs gamma >= 0, got {gamma}"));
                }
                if !(*cap > 0.0) || cap.is_nan() {
                    return bad(format!("power scale needs cap > 0, got {cap}"));
                }
            }
            ScaleFunction::Tabulated { knots } => {
                if knots.len() < 2 {
                    return bad(format!("tabulated scale needs at least 2 knots, got {}", knots.len()));
                }
                for w in knots.windows(2) {
                    if !(w[0].0 < w[1].0) {
                        return bad(format!("tabulated eps grid must increase strictly: {} then {}", w[0].0, w[1].0));
                    }
                }
                for &(e, u) in knots {
                    if !(e.is_finite() && e > 0.0 && u.is_finite() && u > 0.0) {
                        return bad(format!("tabulated knot ({e}, {u}) must be finite and positive"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Evaluate at `eps > 0`.
    pub fn eval(&self, eps: f64) -> f64 {
        debug_assert!(eps > 0.0, "scale functions are defined for eps > 0");
        match self {
            ScaleFunction::Constant { eta } => *eta,
            ScaleFunction::LinearCapped { slope, cap } => (slope * eps).min(*cap),
            ScaleFunction::PowerCapped { coeff, gamma, cap } => (coeff * eps.powf(*gamma)).min(*cap),
            ScaleFunction::Tabulated { knots } => {
                if eps <= knots[0].0 {
                    return knots[0].1;
                }
                if eps >= knots[knots.len() - 1].0 {
                    return knots[knots.len() - 1].1;
                }
                let i = knots.partition_point(|&(e, _)| e <= eps);
                let (e0, u0) = knots[i - 1];
                let (e1, u1) = knots[i];
                u0 + (u1 - u0) * (eps - e0) / (e1 - e0)
            }
        }
    }

    /// Structural regime. Strong means constant-form; weak means the form
    /// forces `u(eps) -> 0` as `eps -> 0` (linear, or power with gamma > 0).
    /// Tabulated curves carry no limit information, so they classify as
    /// general even if their left knot is tiny.
    pub fn classify(&self) -> ScaleClass {
        match self {
            ScaleFunction::Constant { .. } => ScaleClass::Strong,
            ScaleFunction::LinearCapped { .. } => ScaleClass::Weak,
            ScaleFunction::PowerCapped { gamma, .. } => {
                if *gamma > 0.0 {
                    ScaleClass::Weak
                } else {
                    ScaleClass::General
                }
            }
            ScaleFunction::Tabulated { .. } => ScaleClass::General,
        }
    }

    /// The scale `eps -> k * u(eps)`, `k > 0`, staying in the same family.
    pub fn scaled(&self, k: f64) -> ScaleFunction {
        match self {
            ScaleFunction::Constant { eta } => ScaleFunction::Constant { eta: k * eta },
            ScaleFunction::LinearCapped { slope, cap } => {
                ScaleFunction::LinearCapped { slope: k * slope, cap: k * cap }
            }
            ScaleFunction::PowerCapped { coeff, gamma, cap } => {
                ScaleFunction::PowerCapped { coeff: k * coeff, gamma: *gamma, cap: k * cap }
            }
            ScaleFunction::Tabulated { knots } => {
                ScaleFunction::Tabulated { knots: knots.iter().map(|&(e, u)| (e, k * u)).collect() }
            }
        }
    }

    /// Supremum of `u` over `eps > 0` (`+inf` for uncapped linear growth).
    pub fn sup(&self) -> f64 {
        match self {
            ScaleFunction::Constant { eta } => *eta,
            ScaleFunction::LinearCapped { cap, .. } => *cap,
            ScaleFunction::PowerCapped { coeff, gamma, cap } => {
                if *gamma == 0.0 {
                    coeff.min(*cap)
                } else {
                    *cap
                }
            }
            ScaleFunction::Tabulated { knots } => knots.iter().map(|&(_, u)| u).fold(0.0, f64::max),
        }
    }

    /// The constant weight if this scale is constant-form.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScaleFunction::Constant { eta } => Some(*eta),
            _ => None,
        }
    }
}

/// Logarithmic eps grid for scale sweeps and bound optimization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub eps_min: f64,
    pub eps_max: f64,
    pub points: u32,
    /// Refinement factor applied around the incumbent best point.
    pub refine: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { eps_min: 1e-4, eps_max: 1e2, points: 64, refine: 4 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(self.eps_min.is_finite() && self.eps_min > 0.0 && self.eps_max.is_finite() && self.eps_max > self.eps_min) {
            return Err(MeasureError::InvalidScale(format!(
                "grid needs 0 < eps_min < eps_max, got [{}, {}]",
                self.eps_min, self.eps_max
            )));
        }
        if self.points < 2 {
            return Err(MeasureError::InvalidScale(format!("grid needs at least 2 points, got {}", self.points)));
        }
        Ok(())
    }

    /// Log-spaced grid points, inclusive of both ends.
    pub fn points_vec(&self) -> Vec<f64> {
        let n = self.points as usize;
        let (llo, lhi) = (self.eps_min.ln(), self.eps_max.ln());
        (0..n)
            .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    /// Denser log grid spanning the neighbors of index `i` in `pts`.
    pub fn refined_around(&self, pts: &[f64], i: usize) -> Vec<f64> {
        let lo = if i == 0 { pts[0] } else { pts[i - 1] };
        let hi = if i + 1 >= pts.len() { pts[pts.len() - 1] } else { pts[i + 1] };
        if !(hi > lo) {
            return vec![pts[i]];
        }
        let n = (self.refine.max(1) as usize) * 2 + 1;
        let (llo, lhi) = (lo.ln(), hi.ln());
        (0..n)
            .map(|k| (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// Tabulate `u` on the grid: `(eps, u(eps))` pairs.
pub fn scale_points(u: &ScaleFunction, grid: &GridSpec) -> Result<Vec<(f64, f64)>, MeasureError> {
    u.validate()?;
    grid.validate()?;
    Ok(grid.points_vec().into_iter().map(|e| (e, u.eval(e))).collect())
}
