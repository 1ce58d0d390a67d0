//! Exponential stochastic inequality calculus.
//!
//! An exponential stochastic inequality (ESI) between random quantities `X`
//! and `Y` is the certificate `E[e^{u(eps)(X - Y)}] <= e^{u(eps) eps}` for
//! every slack `eps > 0`, where `u` is a [`measure::ScaleFunction`]. It
//! simultaneously encodes an in-expectation comparison and a full family of
//! high-probability deviation bounds, and it composes algebraically: sums,
//! mixtures, posterior averages, randomized weights, and stopped sequential
//! sums all preserve it with explicit bookkeeping.
//!
//! The crate is organized bottom-up:
//!
//! * [`measure`] — distribution models, scale functions, annealed
//!   expectations `A^eta[X] = (1/eta) log E[e^{eta X}]`.
//! * [`verify`] — certificates, numeric verification verdicts, deviation
//!   and expectation bound extraction, tail-to-certificate conversion.
//! * [`characterization`] — sub-gamma parameter fits and the round trip
//!   between certificates, tail bounds, and sub-gamma envelopes.
//! * [`algebra`] — sums and chains of certificates, union-bound
//!   comparisons, strengthening of power-scale certificates, rate
//!   optimization over sample size.
//! * [`conditions`] — second-moment regularity conditions (Bernstein
//!   ratios, witness and small-ball checks) and their equivalence suite.
//! * [`pacbayes`] — discrete-mixture posterior bounds.
//! * [`random_eta`] — certificates with randomized exponent weight.
//! * [`sequential`] — conditional certificates, stopped sums, and
//!   crossing-probability bounds.
//! * [`exec`] — deterministic chunked Monte Carlo execution.
//!
//! Determinism is a hard contract: every stochastic evaluation derives its
//! stream from `(seed, chunk, tag)` and reduces in fixed order, so results
//! are byte-identical across runs and worker counts.

pub mod algebra;
pub mod characterization;
pub mod conditions;
pub mod exec;
pub mod pacbayes;
pub mod random_eta;
pub mod sequential;
pub mod verify;
pub mod measure;
pub mod num;
pub mod serde_float;
