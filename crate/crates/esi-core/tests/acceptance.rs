//! Acceptance gate: twelve end-to-end criteria, one printed PASS/FAIL line
//! each, with the stated runtime budget enforced per criterion.
//!
//! Every stochastic criterion runs on a fixed seed and a fixed chunk count,
//! so its report is reproducible byte-for-byte; criterion 12 asserts that
//! reproducibility directly (two runs, and one versus four worker threads).
//! Oracle values are computed inline from independent closed-form
//! expressions, never by calling the code under test twice.

use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;

use esi_core::algebra::{compare_union_bound, optimize_rate};
use esi_core::characterization::{
    fit_subgamma_from_strong, subgamma_margin_profile, subgamma_to_scale, FamilySpec,
};
use esi_core::conditions::{
    equivalence_suite, smallball, ConditionsError, DirectionStatus, EquivalenceConfig,
    WitnessParams, WitnessVariant,
};
use esi_core::exec::{mc_multi, substream, EvalBudget, McEstimate};
use esi_core::measure::{
    annealed_expectation, EvalMethod, GridSpec, RandomVariableModel, ScaleFunction,
};
use esi_core::pacbayes::{pacbayes_combine, DiscreteMeasure, PacBayesBound, PacBayesPart};
use esi_core::random_eta::{random_eta_bounds, unbounded_mean_scenario, RandomEtaBounds};
use esi_core::sequential::{
    stopped_sum_check, ville_bound, IncrementRule, ProcessSpec, StoppedSumReport, StoppingRule,
    VilleReport,
};
use esi_core::verify::{esi_markov, tail_to_esi, verify_esi, CertRhs, EsiCertificate, Verdict};

/// Run one criterion body, print exactly one PASS/FAIL line, and enforce
/// the runtime budget. The body returns a short detail string for the
/// PASS line; any assertion failure inside it becomes the FAIL line.
fn criterion(no: u8, label: &str, limit_s: f64, body: impl FnOnce() -> String) {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let dt = t0.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            if dt <= limit_s {
                println!("[acceptance] criterion {no:02} ({label}): PASS in {dt:.2}s — {detail}");
            } else {
                println!(
                    "[acceptance] criterion {no:02} ({label}): FAIL — runtime {dt:.2}s exceeds the {limit_s}s budget"
                );
                panic!("criterion {no:02} exceeded its runtime budget: {dt:.2}s > {limit_s}s");
            }
        }
        Err(cause) => {
            println!("[acceptance] criterion {no:02} ({label}): FAIL in {dt:.2}s");
            resume_unwind(cause);
        }
    }
}

// -------------------------------------------------------------------------
// 1. Symmetric two-point moment bound, closed form on a 200-point slack grid.
// -------------------------------------------------------------------------

#[test]
fn criterion_01_cosh_inequality() {
    criterion(1, "cosh moment bound", 1.0, || {
        let rad = RandomVariableModel::rademacher();
        let mut worst = f64::NEG_INFINITY;
        for j in 0..200 {
            // 200 log-spaced slacks across [1e-3, 10].
            let eps = 10f64.powf(-3.0 + 4.0 * j as f64 / 199.0);
            let a = annealed_expectation(&rad, eps / 2.0).unwrap();
            assert_eq!(a.method, EvalMethod::ClosedForm, "eps {eps}");
            assert_eq!(a.standard_error, 0.0);
            // Independent oracle: A^{eps/2} = (2/eps) log cosh(eps/2).
            let oracle = (2.0 / eps) * (eps / 2.0).cosh().ln();
            assert!(
                (a.value - oracle).abs() <= 1e-12 * oracle.max(1.0),
                "closed form {} vs oracle {oracle} at eps {eps}",
                a.value
            );
            let gap = a.value - eps;
            assert!(gap <= 1e-12, "A^{{eps/2}} - eps = {gap} > 1e-12 at eps {eps}");
            worst = worst.max(gap);
        }
        format!("200 slacks in [1e-3, 10], worst A - eps = {worst:.3e} <= 1e-12")
    });
}

// -------------------------------------------------------------------------
// 2. Tail-to-moment conversion round trip on the unit exponential law.
// -------------------------------------------------------------------------

#[test]
fn criterion_02_tail_conversion_roundtrip() {
    criterion(2, "tail conversion round trip", 1.0, || {
        let conv = tail_to_esi(1.0, 1.0, 0.5).unwrap();
        let two_log_two = 2.0 * std::f64::consts::LN_2;
        assert_eq!(conv.eta, 0.5);
        assert!(
            (conv.constant - two_log_two).abs() <= 1e-12,
            "constant {} vs 2 log 2 = {two_log_two}",
            conv.constant
        );
        // E[e^{0.5 (Z - c)}] for Z ~ Exponential(1): closed form gives
        // e^{-c/2} / (1 - 1/2) = 2 e^{-log 2} = 1 exactly.
        let shifted = RandomVariableModel::exponential(1.0).shifted(-conv.constant);
        let a = annealed_expectation(&shifted, 0.5).unwrap();
        assert_eq!(a.method, EvalMethod::ClosedForm);
        let moment = (0.5 * a.value).exp();
        assert!((moment - 1.0).abs() <= 1e-9, "E[e^(0.5 (Z - c))] = {moment}, expected 1");
        format!("c = {:.12} = 2 log 2, moment at the converted constant = {moment:.12}", conv.constant)
    });
}

// -------------------------------------------------------------------------
// 3. Two-parameter envelope constants for the standard Gaussian.
// -------------------------------------------------------------------------

#[test]
fn criterion_03_envelope_constants() {
    criterion(3, "envelope constants", 5.0, || {
        // Tight strong certificate for Gaussian(0,1) at weight 1 has
        // constant A^1[X] = 1/2; the fit must return (c, v) = (1, 1 + 2 e^{1/2}).
        let params = fit_subgamma_from_strong(1.0, 1.0, 0.5).unwrap();
        assert_eq!(params.c, 1.0);
        let v_oracle = 1.0 + 2.0 * 0.5f64.exp();
        assert!((params.v - v_oracle).abs() <= 1e-12, "v = {} vs {v_oracle}", params.v);

        // Envelope inequality on the 64-point weight grid of (0, 1]:
        // A^eta[X - E X] - (v eta / 2) / (1 - c eta) <= 0 within 1e-9.
        // `margin` stores envelope minus annealed, so the deficiency is its
        // negation.
        let profile =
            subgamma_margin_profile(&RandomVariableModel::gaussian(0.0, 1.0), &params, 1.0, 64)
                .unwrap();
        assert_eq!(profile.len(), 64);
        let mut worst_deficiency = f64::NEG_INFINITY;
        for pt in &profile {
            assert_eq!(pt.se, 0.0, "grid point {} is not closed-form", pt.eta);
            let deficiency = -pt.margin;
            assert!(deficiency <= 1e-9, "envelope violated at eta {}: {deficiency}", pt.eta);
            worst_deficiency = worst_deficiency.max(deficiency);
        }

        // The derived slack-indexed scale re-verifies the general claim
        // X - E[X] at the default verification grid.
        let scale = subgamma_to_scale(&params);
        match scale {
            ScaleFunction::LinearCapped { slope, cap } => {
                assert!((slope - 1.0 / (2.0 * v_oracle)).abs() <= 1e-12);
                assert!((cap - 0.5).abs() <= 1e-15);
            }
            ref other => panic!("expected a linear-capped scale, got {other:?}"),
        }
        let cert = EsiCertificate {
            label: "acceptance: envelope-derived general claim for Gaussian(0,1)".into(),
            lhs: RandomVariableModel::gaussian(0.0, 1.0),
            rhs: CertRhs::zero(),
            scale,
        };
        let report = verify_esi(&cert, &GridSpec::default(), &EvalBudget::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Holds, "re-verification: {:?}", report.notes);
        format!(
            "(c, v) = (1, 1 + 2e^0.5), worst envelope deficiency {worst_deficiency:.3e}, derived scale re-verifies: {:?}",
            report.verdict
        )
    });
}

// -------------------------------------------------------------------------
// 4. Convergence-rate exponents across the power-scale family.
// -------------------------------------------------------------------------

#[test]
fn criterion_04_rate_exponents() {
    criterion(4, "rate exponents", 5.0, || {
        let delta = 0.05;
        let w = -(delta as f64).ln();
        let mut detail = Vec::new();
        for &gamma in &[0.0, 0.5, 1.0] {
            // u(eps) = min(C* eps^gamma, eta*) with C* = eta* = 1.
            let scale = match gamma {
                g if g == 0.0 => ScaleFunction::Constant { eta: 1.0 },
                g if g == 1.0 => ScaleFunction::LinearCapped { slope: 1.0, cap: 1.0 },
                g => ScaleFunction::PowerCapped { coeff: 1.0, gamma: g, cap: 1.0 },
            };
            let rate = optimize_rate(&scale, 1_000_000, delta, 0.0).unwrap();
            // The study's own decade grid spans {1e2, ..., 1e6}.
            let ns: Vec<u64> = rate.points.iter().map(|p| p.n).collect();
            assert_eq!(ns, vec![100, 1_000, 10_000, 100_000, 1_000_000]);
            let alpha = 1.0 / (1.0 + gamma);
            assert!(
                (rate.fitted_slope + alpha).abs() <= 0.05,
                "gamma {gamma}: fitted slope {} vs -{alpha}",
                rate.fitted_slope
            );
            assert!(rate.on_power_branch, "gamma {gamma}: a minimizer hit the weight cap");
            if gamma == 0.0 {
                // Constant scale follows the exact 1/n law: bound = w/n at
                // every grid point and the fitted slope is -1 to rounding.
                for p in &rate.points {
                    let exact = w / p.n as f64;
                    assert!(
                        (p.bound - exact).abs() <= 1e-12 * exact,
                        "n {}: bound {} vs exact {exact}",
                        p.n,
                        p.bound
                    );
                    assert_eq!(p.eps_star, 0.0);
                }
                assert!((rate.fitted_slope + 1.0).abs() <= 1e-12);
            }
            detail.push(format!("gamma {gamma}: slope {:.4} ~ -{alpha:.3}", rate.fitted_slope));
        }
        detail.join("; ")
    });
}

// -------------------------------------------------------------------------
// 5. Chained links beat the union bound by exactly (k / eta) log k.
// -------------------------------------------------------------------------

#[test]
fn criterion_05_chaining_saving() {
    criterion(5, "chaining vs union bound", 1.0, || {
        let mut checked = 0;
        for &eta in &[0.1, 0.7, 2.5] {
            for &delta in &[0.05, 0.5] {
                for k in 2..=10u32 {
                    let cmp = compare_union_bound(eta, k, delta).unwrap();
                    let oracle = k as f64 / eta * (k as f64).ln();
                    assert!(
                        (cmp.saving - oracle).abs() <= 1e-12,
                        "k {k}, eta {eta}: saving {} vs (k/eta) log k = {oracle}",
                        cmp.saving
                    );
                    assert!(
                        ((cmp.union_bound - cmp.chained_bound) - cmp.saving).abs() <= 1e-12,
                        "k {k}, eta {eta}: saving is not the bound difference"
                    );
                    checked += 1;
                }
            }
        }
        format!("{checked} (eta, delta, k) cells, saving = (k/eta) log k to 1e-12")
    });
}

// -------------------------------------------------------------------------
// 6. Markov-type bound soundness on randomized finite laws, by enumeration.
// -------------------------------------------------------------------------

#[test]
fn criterion_06_markov_soundness() {
    criterion(6, "Markov bound soundness", 10.0, || {
        let budget = EvalBudget::default();
        let mut rng = substream(9001, 0, 0xACC6);
        let mut models = 0u32;
        let mut checks = 0u32;
        while models < 120 {
            // Random atoms, then a shift that enforces the lower-tail
            // premise E[e^{-eta X}] = e^{-0.01} < 1 exactly.
            let eta: f64 = rng.gen_range(0.25..2.0);
            let n_atoms = rng.gen_range(2..=8usize);
            let raw: Vec<(f64, f64)> = (0..n_atoms)
                .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(0.05..1.0)))
                .collect();
            let total: f64 = raw.iter().map(|&(_, p)| p).sum();
            let probs: Vec<f64> = raw.iter().map(|&(_, p)| p / total).collect();
            let moment: f64 =
                raw.iter().zip(&probs).map(|(&(x, _), &p)| p * (-eta * x).exp()).sum();
            let shift = moment.ln() / eta + 0.01 / eta;
            let atoms: Vec<(f64, f64)> =
                raw.iter().zip(&probs).map(|(&(x, _), &p)| (x + shift, p)).collect();
            let model = RandomVariableModel::finite_discrete(atoms.clone());

            // The premise forces E[X] >= 0, so the support reaches above 0.
            let x_max = atoms.iter().map(|&(x, _)| x).fold(f64::NEG_INFINITY, f64::max);
            assert!(x_max > 0.0, "premise-satisfying law with nonpositive support");
            for k in 1..=5 {
                let a = x_max * k as f64 / 4.0;
                let bound = esi_markov(&model, eta, a, &budget).unwrap();
                // Exact enumeration of P(X >= a) over the atoms.
                let p_exact: f64 =
                    atoms.iter().filter(|&&(x, _)| x >= a).map(|&(_, p)| p).sum();
                assert!(
                    bound.refined + 1e-12 >= p_exact,
                    "refined bound {} < exact P(X >= {a}) = {p_exact} (eta {eta}, atoms {atoms:?})",
                    bound.refined
                );
                assert!(
                    bound.relaxed + 1e-12 >= bound.refined,
                    "relaxation {} fell below the refined bound {}",
                    bound.relaxed,
                    bound.refined
                );
                checks += 1;
            }
            models += 1;
        }
        format!("{models} randomized finite laws x 5 thresholds = {checks} enumerated checks, zero violations")
    });
}

// -------------------------------------------------------------------------
// 7. Small-ball truncation constants on the unit exponential law.
// -------------------------------------------------------------------------

#[test]
fn criterion_07_small_ball() {
    criterion(7, "small-ball truncation", 1.0, || {
        let report = smallball(&RandomVariableModel::exponential(1.0), 0.5, 1.0).unwrap();
        // K = c^{-(1+delta)/delta} E[Z^2] = 4 * 2 = 8; Ccap = 1/(1-c) = 2.
        assert!((report.params.k - 8.0).abs() <= 1e-9, "K = {}", report.params.k);
        assert!((report.params.ccap - 2.0).abs() <= 1e-15);
        assert!((report.z2bar - 2.0).abs() <= 1e-9, "E[Z^2] = {}", report.z2bar);
        // Closed-form truncated integral: E[1{Z<8} Z] = 1 - 9 e^{-8}.
        let head_oracle = 1.0 - 9.0 * (-8.0f64).exp();
        assert!((report.mean - 1.0).abs() <= 1e-12);
        assert!(
            (report.head_mean - head_oracle).abs() <= 1e-9,
            "E[1{{Z<8}} Z] = {} vs {head_oracle}",
            report.head_mean
        );
        assert!(
            report.mean <= 2.0 * report.head_mean + 1e-9,
            "E[Z] = {} exceeds 2 E[1{{Z<K}} Z] = {}",
            report.mean,
            2.0 * report.head_mean
        );
        assert!(report.first_holds && report.second_holds);
        format!(
            "K = {}, E[Z] = {} <= 2 * {:.9} = Ccap * head mean",
            report.params.k, report.mean, report.head_mean
        )
    });
}

// -------------------------------------------------------------------------
// 8. Random-weight counterexample: the + 1/weight term is necessary.
// -------------------------------------------------------------------------

#[test]
fn criterion_08_random_weight_counterexample() {
    criterion(8, "random-weight counterexample", 1.0, || {
        let budget = EvalBudget { seed: 8, ..EvalBudget::default() };
        // Two-state selector: probability 3/4 of weight 1 seeing W = -1,
        // else weight 1/C2 seeing W = C2; the joint moment is
        // (3/4) e^{-1} + (1/4) e, independent of C2.
        let moment_oracle = 0.75 * (-1.0f64).exp() + 0.25 * 1.0f64.exp();
        assert!((moment_oracle - 0.9555).abs() <= 1e-4);
        let mut lhs_by_c2 = Vec::new();
        for &c2 in &[10.0, 100.0, 1000.0] {
            let scenario = unbounded_mean_scenario(-1.0, c2, 0.75).unwrap();
            let moment = scenario.closed_form_moment().unwrap();
            assert!(
                (moment - moment_oracle).abs() <= 1e-12,
                "C2 {c2}: moment {moment} vs {moment_oracle}"
            );
            assert!(moment <= 1.0);
            let bounds = random_eta_bounds(&scenario, 0.05, &budget).unwrap();
            assert_eq!(bounds.method, EvalMethod::ClosedForm);
            // In-expectation reading: E[W] <= E[1/weight], exactly
            // (3/4)(-1) + C2/4 <= 3/4 + C2/4.
            assert!(bounds.expectation_pass, "expectation bound failed at C2 {c2}");
            let lhs_oracle = -0.75 + 0.25 * c2;
            let rhs_oracle = 0.75 + 0.25 * c2;
            assert!((bounds.expectation_lhs - lhs_oracle).abs() <= 1e-9);
            assert!((bounds.expectation_rhs - rhs_oracle).abs() <= 1e-9);
            assert!(bounds.hp_pass && bounds.converse_pass);
            lhs_by_c2.push(bounds.expectation_lhs);
        }
        // E[W] grows linearly in C2: successive decade increments scale by 10.
        let growth = (lhs_by_c2[2] - lhs_by_c2[1]) / (lhs_by_c2[1] - lhs_by_c2[0]);
        assert!((growth - 10.0).abs() <= 1e-9, "E[W] growth ratio {growth} is not linear in C2");
        format!(
            "moment = {moment_oracle:.6} <= 1 for every C2; E[W] = {:?} grows linearly",
            lhs_by_c2
        )
    });
}

// -------------------------------------------------------------------------
// 9. Optional stopping and the maximal inequality on the Gaussian e-process.
// -------------------------------------------------------------------------

/// The criterion's process: centered Gaussian increments at weight 1/2 over
/// horizon 100 — the running exponential is an exact martingale.
fn gaussian_eprocess(stopping: StoppingRule) -> ProcessSpec {
    ProcessSpec {
        increments: IncrementRule::IidCentered { model: RandomVariableModel::gaussian(0.0, 1.0) },
        horizon: 100,
        stopping,
        eta: 0.5,
    }
}

fn criterion_09_budget() -> EvalBudget {
    EvalBudget { seed: 90, ..EvalBudget::default() }
}

const EPROCESS_PATHS: u64 = 100_000;

#[test]
fn criterion_09_optional_stopping_and_ville() {
    criterion(9, "optional stopping / maximal inequality", 60.0, || {
        let budget = criterion_09_budget();
        // Threshold stopping rule: stop when the running sum reaches 1.
        let stopped = stopped_sum_check(
            &gaussian_eprocess(StoppingRule::SumAbove { level: 1.0 }),
            EPROCESS_PATHS,
            &budget,
        )
        .unwrap();
        assert!(
            stopped.estimate <= 1.0 + 3.0 * stopped.se,
            "E[e^(eta S_tau)] = {} > 1 + 3 x {}",
            stopped.estimate,
            stopped.se
        );
        assert_eq!(stopped.verdict, Verdict::Holds);

        let ville = ville_bound(
            &gaussian_eprocess(StoppingRule::AtHorizon),
            0.05,
            EPROCESS_PATHS,
            &budget,
        )
        .unwrap();
        assert!(
            ville.crossing_frequency <= 0.05 + 3.0 * ville.se,
            "crossing frequency {} > 0.05 + 3 x {}",
            ville.crossing_frequency,
            ville.se
        );
        assert!(ville.pass);
        // The maximal inequality converts to a strong claim on the
        // supremum at half the weight with constant (2/eta) log 2.
        assert!((ville.sup_certificate.eta - 0.25).abs() <= 1e-15);
        assert!((ville.sup_certificate.constant - 4.0 * std::f64::consts::LN_2).abs() <= 1e-12);
        format!(
            "stopped moment {:.5} (se {:.5}) <= 1 + 3se; crossing frequency {:.5} (se {:.5}) <= 0.05 + 3se over {EPROCESS_PATHS} paths",
            stopped.estimate, stopped.se, ville.crossing_frequency, ville.se
        )
    });
}

// -------------------------------------------------------------------------
// 10. Posterior-averaged composition: exact offsets and a seeded re-check.
// -------------------------------------------------------------------------

/// Two-member Gaussian family with both members holding the strong claim
/// at weight 1, a uniform prior, and a (1/4, 3/4) posterior.
fn two_member_setup() -> (FamilySpec, DiscreteMeasure, DiscreteMeasure) {
    let family = FamilySpec::new(vec![
        RandomVariableModel::gaussian(-0.4, 0.64),
        RandomVariableModel::gaussian(-0.3, 0.36),
    ])
    .unwrap();
    let prior = DiscreteMeasure::uniform(2).unwrap();
    let posterior = DiscreteMeasure::new(vec![0.25, 0.75]).unwrap();
    (family, prior, posterior)
}

/// Seeded Monte-Carlo re-verification of the posterior-composed claim:
/// sample the composed left side and average e^{eta (L - KL/eta)}.
fn composed_cert_mc(cert: &EsiCertificate, kl: f64, budget: &EvalBudget) -> McEstimate {
    let eta = cert.scale.as_constant().expect("composed certificate has a constant scale");
    let threshold = kl / eta;
    let stats = mc_multi(budget, 0xACC_10, 1, |rng, out| {
        let l = cert.lhs.sample(rng);
        out[0] = (eta * (l - threshold)).exp();
    });
    stats[0]
}

fn criterion_10_budget() -> EvalBudget {
    EvalBudget { seed: 100, mc_samples: 100_000, ..EvalBudget::default() }
}

/// The part-2 / part-3 pair used by criteria 10 and 12.
fn composed_bounds() -> (PacBayesBound, PacBayesBound, EsiCertificate) {
    let (family, prior, posterior) = two_member_setup();
    let budget = criterion_10_budget();
    let (p2, _) =
        pacbayes_combine(PacBayesPart::Two, &family, &prior, &posterior, 1.0, 1, &budget).unwrap();
    let (p3, cert3) =
        pacbayes_combine(PacBayesPart::Three, &family, &prior, &posterior, 1.0, 1, &budget)
            .unwrap();
    (p2, p3, cert3)
}

#[test]
fn criterion_10_posterior_composition() {
    criterion(10, "posterior-averaged composition", 60.0, || {
        // Part 2 with a uniform prior over 16 members and a point-mass
        // posterior: the bound is exactly (log 16)/eta. Members are
        // Gaussians with mean -eta * variance / 2, each exactly tight.
        let eta = 0.8;
        let members: Vec<RandomVariableModel> = (0..16)
            .map(|i| {
                let variance = 0.5 + 0.1 * i as f64;
                RandomVariableModel::gaussian(-eta * variance / 2.0, variance)
            })
            .collect();
        let family16 = FamilySpec::new(members).unwrap();
        let prior16 = DiscreteMeasure::uniform(16).unwrap();
        let posterior16 = DiscreteMeasure::degenerate(16, 3).unwrap();
        let budget = criterion_10_budget();
        let (p2_16, _) = pacbayes_combine(
            PacBayesPart::Two,
            &family16,
            &prior16,
            &posterior16,
            eta,
            1,
            &budget,
        )
        .unwrap();
        // 1/16 is exact in binary, so the divergence and the bound are the
        // identical arithmetic expressions — equality is exact, not toleranced.
        assert!(p2_16.kl == 16f64.ln(), "KL = {} vs log 16 = {}", p2_16.kl, 16f64.ln());
        assert!(p2_16.bound_value == 16f64.ln() / eta);

        // Part 3 minus part 2 on the two-member family is the
        // posterior-expected annealed term.
        let (p2, p3, cert3) = composed_bounds();
        let ann_oracle = 0.25 * (-0.4 + 0.5 * 0.64) + 0.75 * (-0.3 + 0.5 * 0.36);
        let diff = p3.bound_value - p2.bound_value;
        assert!(
            (diff - ann_oracle).abs() <= 1e-12,
            "part 3 - part 2 = {diff} vs posterior-expected annealed term {ann_oracle}"
        );
        assert!((p3.annealed_term.unwrap() - ann_oracle).abs() <= 1e-12);

        // Seeded Monte-Carlo re-verification of the composed claim.
        let est = composed_cert_mc(&cert3, p3.kl, &budget);
        assert!(
            est.mean <= 1.0 + 3.0 * est.se,
            "composed moment {} (se {}) fails the 3 sigma re-check",
            est.mean,
            est.se
        );
        // Closed-form cross-check: the posterior-weighted recentered sum of
        // independent Gaussians is Gaussian, so the moment is
        // exp(eta^2/2 (sum q^2 s^2 - sum q s^2) - KL) at eta = 1.
        let q = [0.25, 0.75];
        let s2 = [0.64, 0.36];
        let moment_oracle =
            (0.5 * (q[0] * q[0] * s2[0] + q[1] * q[1] * s2[1] - (q[0] * s2[0] + q[1] * s2[1]))
                - p3.kl)
                .exp();
        assert!(
            (est.mean - moment_oracle).abs() <= 3.0 * est.se,
            "Monte-Carlo moment {} vs closed form {moment_oracle} (se {})",
            est.mean,
            est.se
        );
        format!(
            "part-2 bound = log(16)/eta exactly; part3 - part2 = {diff:.12}; composed moment {:.5} (se {:.5}, n {}) vs closed form {moment_oracle:.5}",
            est.mean, est.se, est.n
        )
    });
}

// -------------------------------------------------------------------------
// 11. Equivalence suite on a bounded family; the heavy-tailed member trips
//     the regularity guard.
// -------------------------------------------------------------------------

#[test]
fn criterion_11_equivalence_suite() {
    criterion(11, "equivalence suite", 120.0, || {
        let family = FamilySpec::new(vec![
            RandomVariableModel::two_point(-0.5, 0.6, 0.2),
            RandomVariableModel::two_point(-0.8, 0.5, 0.1),
        ])
        .unwrap();
        let witness = WitnessParams::new(0.5, 1.5, WitnessVariant::Squared).unwrap();
        let config = EquivalenceConfig::new(0.9, 0.2);
        assert_eq!(config.beta_grid, vec![0.0, 0.25, 0.5, 0.75]);
        let report = equivalence_suite(&family, 0.9, &witness, &config).unwrap();
        // Forward direction (feasibility to augmented claim) and converse
        // (plain power-scale claim back to feasibility) both pass; the
        // two-point expectations are exact enumerations, never sampled.
        assert!(report.bernstein.iter().all(|f| f.feasible));
        assert_eq!(report.forward.status, DirectionStatus::Passed, "{}", report.forward.detail);
        assert_eq!(report.converse.status, DirectionStatus::Passed, "{}", report.converse.detail);
        assert_eq!(report.reduction.status, DirectionStatus::Asserted);
        assert!(report.forward_cells.iter().all(|cell| cell.c_circ.is_finite()));
        assert!(report.c1_holds && report.c2_holds && report.all_pass);

        // The infinite-variance member is rejected by the regularity guard
        // before any direction is attempted.
        let heavy = FamilySpec::new(vec![RandomVariableModel::pareto_left_atom(2.75)]).unwrap();
        let err = equivalence_suite(&heavy, 0.9, &witness, &config).unwrap_err();
        assert!(matches!(err, ConditionsError::NotRegular(_)), "unexpected error: {err}");
        format!(
            "forward {:?} / converse {:?} over beta {:?}; infinite-variance member rejected: NotRegular",
            report.forward.status, report.converse.status, config.beta_grid
        )
    });
}

// -------------------------------------------------------------------------
// 12. Byte-identical stochastic reports across runs and worker counts.
// -------------------------------------------------------------------------

/// Serialize every stochastic criterion's report under a given worker-thread
/// cap. Fixed (seed, chunk count) must make this string byte-stable.
fn stochastic_reports(threads: Option<usize>) -> String {
    let b9 = EvalBudget { threads, ..criterion_09_budget() };
    let stopped: StoppedSumReport = stopped_sum_check(
        &gaussian_eprocess(StoppingRule::SumAbove { level: 1.0 }),
        EPROCESS_PATHS,
        &b9,
    )
    .unwrap();
    let ville: VilleReport =
        ville_bound(&gaussian_eprocess(StoppingRule::AtHorizon), 0.05, EPROCESS_PATHS, &b9)
            .unwrap();

    let b10 = EvalBudget { threads, ..criterion_10_budget() };
    let (_, p3, cert3) = composed_bounds();
    let est = composed_cert_mc(&cert3, p3.kl, &b10);

    let b8 = EvalBudget { threads, seed: 8, ..EvalBudget::default() };
    let scenario = unbounded_mean_scenario(-1.0, 100.0, 0.75).unwrap();
    let bounds: RandomEtaBounds = random_eta_bounds(&scenario, 0.05, &b8).unwrap();

    [
        serde_json::to_string(&stopped).unwrap(),
        serde_json::to_string(&ville).unwrap(),
        serde_json::to_string(&est).unwrap(),
        serde_json::to_string(&bounds).unwrap(),
    ]
    .join("\n")
}

#[test]
fn criterion_12_determinism() {
    criterion(12, "byte-identical stochastic reports", f64::INFINITY, || {
        let single_a = stochastic_reports(Some(1));
        let single_b = stochastic_reports(Some(1));
        assert_eq!(single_a, single_b, "same seed and chunk count, two runs, different bytes");
        let multi = stochastic_reports(Some(4));
        assert_eq!(single_a, multi, "1 vs 4 worker threads changed the report bytes");
        format!(
            "{} report bytes identical across two runs and 1 vs 4 worker threads",
            single_a.len()
        )
    });
}
