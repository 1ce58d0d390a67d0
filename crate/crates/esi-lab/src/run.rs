//! Task dispatch: run one parsed scenario against the library and assemble
//! the report.
//!
//! Exit-code policy: verdicts decide 0/1/2 (`holds`/`fails`/
//! `inconclusive`); every error the library reports — malformed models,
//! unverifiable premises, stopping rules that never fire — is an input
//! error (exit 3), because it means the scenario asked for an ill-posed
//! computation rather than a check that came out negative.

use serde_json::json;

use esi_core::algebra::{chain, combine, optimize_rate, CompositionMode};
use esi_core::characterization::{characterization_roundtrip, FamilySpec, LegStatus, RoundtripConfig};
use esi_core::conditions::{
    bernstein_fit, equivalence_suite, smallball, witness_check, EquivalenceConfig,
};
use esi_core::measure::{EvalMethod, ScaleClass};
use esi_core::pacbayes::pacbayes_combine;
use esi_core::random_eta::{random_eta_bounds, verify_random_eta};
use esi_core::sequential::{conditional_esi_check, stopped_sum_check, ville_bound};
use esi_core::verify::{extract_bounds, verify_esi, VerificationReport, Verdict};

use crate::report::{MarginRow, Outcome, RateRow, Report, TailRow};
use crate::scenario::{
    ConditionsPayload, InputError, Scenario, SequentialPayload, TaskPayload,
};

fn lib_err(e: impl std::fmt::Display) -> InputError {
    InputError(e.to_string())
}

fn verdict_outcome(v: Verdict) -> Outcome {
    match v {
        Verdict::Holds => Outcome::Holds,
        Verdict::Fails => Outcome::Fails,
        Verdict::Inconclusive => Outcome::Inconclusive,
    }
}

fn pass_outcome(pass: bool) -> Outcome {
    if pass {
        Outcome::Holds
    } else {
        Outcome::Fails
    }
}

fn method_tag(m: &EvalMethod) -> &'static str {
    match m {
        EvalMethod::ClosedForm => "closed_form",
        EvalMethod::Quadrature => "quadrature",
        EvalMethod::MonteCarlo { .. } => "monte_carlo",
    }
}

fn method_samples(m: &EvalMethod) -> u64 {
    if let EvalMethod::MonteCarlo { sample_count, .. } = m {
        *sample_count
    } else {
        0
    }
}

fn push_method(report: &mut Report, tag: &str) {
    if !report.methods.iter().any(|m| m == tag) {
        report.methods.push(tag.to_owned());
    }
}

fn margin_table(vr: &VerificationReport) -> Vec<MarginRow> {
    vr.points.iter().map(|p| MarginRow { eps: p.eps, margin: p.margin, se: p.se }).collect()
}

fn absorb_verification(report: &mut Report, vr: &VerificationReport) {
    report.set_outcome(verdict_outcome(vr.verdict));
    report.tables.margin_vs_eps = Some(margin_table(vr));
    push_method(report, method_tag(&vr.method));
    report.sample_count += method_samples(&vr.method);
}

fn scale_class_word(class: ScaleClass) -> &'static str {
    match class {
        ScaleClass::Strong => "strong",
        ScaleClass::Weak => "weak",
        ScaleClass::General => "general",
    }
}

fn leg_status_word(status: LegStatus) -> &'static str {
    match status {
        LegStatus::Passed => "passed",
        LegStatus::Failed => "failed",
        LegStatus::Skipped => "skipped",
    }
}

/// Run the scenario and build the full report. The report's `exit_code`
/// is the process exit code.
pub fn run_task(sc: &Scenario) -> Result<Report, InputError> {
    let mut report = Report::new(&sc.task, sc.seed, &sc.budget, sc.echo.clone());
    match &sc.payload {
        TaskPayload::Verify(p) => {
            let vr = verify_esi(&p.certificate, &p.grid, &sc.budget).map_err(lib_err)?;
            absorb_verification(&mut report, &vr);
            report.headline = format!(
                "certificate `{}` {}: worst margin {} at slack {}",
                p.certificate.label,
                report.outcome.word(),
                vr.worst_margin,
                vr.worst_eps
            );
            report.provenance.push(format!("input certificate: {}", p.certificate.label));
            report.details = json!({ "verification": vr });
        }

        TaskPayload::Bounds(p) => {
            let br = extract_bounds(&p.certificate, &p.deltas, &p.grid).map_err(lib_err)?;
            report.set_outcome(Outcome::Holds);
            push_method(&mut report, "closed_form");
            report.tables.tail_quantiles = Some(
                br.entries
                    .iter()
                    .map(|e| TailRow { delta: e.delta, bound: e.bound, eps_star: e.eps_star })
                    .collect(),
            );
            report.headline = format!(
                "extracted {} tail quantiles from `{}` ({} scale); expectation bound {}",
                br.entries.len(),
                br.label,
                scale_class_word(br.scale_class),
                br.expectation_bound
            );
            report.provenance.push(format!("input certificate: {}", p.certificate.label));
            report
                .provenance
                .push(format!("tail quantiles at deltas {:?} via the optimized slack per level", p.deltas));
            let mut details = json!({ "bounds": br });
            if let Some(rs) = &p.rate_study {
                let rr = optimize_rate(&p.certificate.scale, rs.n, rs.delta, rs.complexity).map_err(lib_err)?;
                report.tables.bound_vs_n = Some(
                    rr.points
                        .iter()
                        .map(|pt| RateRow { n: pt.n, bound: pt.bound, eps_star: pt.eps_star })
                        .collect(),
                );
                report.provenance.push(format!(
                    "rate study: optimized bound on a decade grid up to n={} at delta={} (fitted slope {})",
                    rs.n, rs.delta, rr.fitted_slope
                ));
                details["rate"] = json!(rr);
            }
            report.details = details;
        }

        TaskPayload::Compose(p) => {
            for c in &p.certificates {
                report.provenance.push(format!("input certificate: {}", c.label));
            }
            let composed = match (&p.mode, &p.chain) {
                (Some(mode), None) => {
                    report.provenance.push(format!("composition rule: {}", mode_word(*mode)));
                    combine(&p.certificates, *mode).map_err(lib_err)?
                }
                (None, Some(opts)) => {
                    report.provenance.push(format!(
                        "chaining rule: {}",
                        if opts.associated {
                            "associated (weaker weight survives)"
                        } else {
                            "dependent (harmonic weights)"
                        }
                    ));
                    chain(&p.certificates[0], &p.certificates[1], opts.associated).map_err(lib_err)?
                }
                _ => unreachable!("parse_scenario enforces exactly one of mode/chain"),
            };
            report.provenance.push(format!("derived certificate: {}", composed.label));
            let vr = verify_esi(&composed, &p.grid, &sc.budget).map_err(lib_err)?;
            absorb_verification(&mut report, &vr);
            report.headline = format!(
                "composed certificate `{}` {}: worst margin {} at slack {}",
                composed.label,
                report.outcome.word(),
                vr.worst_margin,
                vr.worst_eps
            );
            report.details = json!({ "composed": composed, "verification": vr });
        }

        TaskPayload::Characterize(p) => {
            let family = FamilySpec::new(p.family.clone()).map_err(lib_err)?;
            let config = RoundtripConfig {
                scale: p.scale.clone(),
                grid: p.grid.clone(),
                budget: sc.budget.clone(),
                deltas: p.deltas.clone(),
                envelope_points: p.envelope_points,
            };
            let rr = characterization_roundtrip(&family, &config).map_err(lib_err)?;
            report.set_outcome(pass_outcome(rr.passed));
            for leg in &rr.legs {
                report.provenance.push(format!("leg `{}`: {} — {}", leg.name, leg_status_word(leg.status), leg.detail));
            }
            report.headline = format!(
                "round trip over {} members {}: {} of {} legs passed (eta_star {}, c_star {})",
                p.family.len(),
                report.outcome.word(),
                rr.legs.iter().filter(|l| l.status == LegStatus::Passed).count(),
                rr.legs.len(),
                rr.eta_star,
                rr.c_star
            );
            report.details = json!({ "roundtrip": rr });
        }

        TaskPayload::Conditions(inner) => run_conditions(sc, inner, &mut report)?,

        TaskPayload::Pacbayes(p) => {
            let family = FamilySpec::new(p.family.clone()).map_err(lib_err)?;
            let (bound, cert) =
                pacbayes_combine(p.part, &family, &p.prior, &p.posterior, p.eta, p.n_copies, &sc.budget)
                    .map_err(lib_err)?;
            report.provenance.push(format!(
                "posterior combination (part {}) over {} members at eta {} with {} copies",
                u8::from(p.part),
                p.family.len(),
                p.eta,
                p.n_copies
            ));
            report.provenance.push(format!("derived certificate: {}", cert.label));
            let vr = verify_esi(&cert, &p.grid, &sc.budget).map_err(lib_err)?;
            absorb_verification(&mut report, &vr);
            report.headline = format!(
                "part-{} combined bound {} (KL {}) {}",
                u8::from(p.part),
                bound.bound_value,
                bound.kl,
                report.outcome.word()
            );
            report.details = json!({ "bound": bound, "certificate": cert, "verification": vr });
        }

        TaskPayload::RandomEta(p) => {
            let vr = verify_random_eta(&p.scenario, &sc.budget).map_err(lib_err)?;
            absorb_verification(&mut report, &vr);
            report.provenance.push(format!(
                "random-weight scenario over a grid of {} weights ({})",
                p.scenario.grid.len(),
                p.scenario.selector_note
            ));
            let mut details = json!({ "verification": vr });
            let mut bound_note = String::new();
            if let Some(delta) = p.delta {
                if vr.verdict == Verdict::Holds {
                    let b = random_eta_bounds(&p.scenario, delta, &sc.budget).map_err(lib_err)?;
                    push_method(&mut report, method_tag(&b.method));
                    if !(b.hp_pass && b.expectation_pass && b.converse_pass) {
                        report.set_outcome(Outcome::Fails);
                    }
                    bound_note = format!(
                        "; bounds at delta {}: deviation {}, expectation {}, converse {}",
                        delta,
                        if b.hp_pass { "pass" } else { "fail" },
                        if b.expectation_pass { "pass" } else { "fail" },
                        if b.converse_pass { "pass" } else { "fail" }
                    );
                    report.provenance.push(format!(
                        "extracted bounds at delta {delta}: deviation frequency {} (needs >= {}), E[W] {} vs E[1/eta] {}",
                        b.hp_frequency, b.hp_required, b.expectation_lhs, b.expectation_rhs
                    ));
                    details["bounds"] = json!(b);
                } else {
                    report.provenance.push("bounds skipped: verification did not hold".to_owned());
                }
            }
            report.headline = format!(
                "random-weight inequality {}: worst margin {}{}",
                report.outcome.word(),
                vr.worst_margin,
                bound_note
            );
            report.details = details;
        }

        TaskPayload::Sequential(inner) => run_sequential(sc, inner, &mut report)?,
    }
    Ok(report)
}

fn mode_word(mode: CompositionMode) -> &'static str {
    match mode {
        CompositionMode::Dependent => "dependent (harmonic weights)",
        CompositionMode::NegativelyAssociatedOrIndependent => {
            "negatively_associated_or_independent (weakest weight survives)"
        }
        CompositionMode::IidAverage => "iid_average (weight scales by copy count)",
    }
}

fn run_conditions(sc: &Scenario, inner: &ConditionsPayload, report: &mut Report) -> Result<(), InputError> {
    match inner {
        ConditionsPayload::Smallball(p) => {
            let r = smallball(&p.model, p.c, p.delta).map_err(lib_err)?;
            report.set_outcome(pass_outcome(r.first_holds && r.second_holds));
            push_method(report, "closed_form");
            report.headline = format!(
                "small-ball pair at c {} delta {} {}: mean {}, truncated-head mean {}",
                p.c,
                p.delta,
                report.outcome.word(),
                r.mean,
                r.head_mean
            );
            report.provenance.push("small-ball constants from the paired-tail construction".to_owned());
            report.details = json!({ "smallball": r });
        }
        ConditionsPayload::Bernstein(p) => {
            let family = FamilySpec::new(p.family.clone()).map_err(lib_err)?;
            let r = bernstein_fit(&family, &p.beta_grid).map_err(lib_err)?;
            report.set_outcome(pass_outcome(r.largest_feasible_beta.is_some()));
            push_method(report, "closed_form");
            report.headline = format!(
                "second-moment fit over {} exponents {}: largest feasible exponent {}",
                p.beta_grid.len(),
                report.outcome.word(),
                r.largest_feasible_beta.map_or("none".to_owned(), |b| b.to_string())
            );
            report.details = json!({ "bernstein": r });
        }
        ConditionsPayload::Witness(p) => {
            let family = FamilySpec::new(p.family.clone()).map_err(lib_err)?;
            let r = witness_check(&family, &p.params, &sc.budget).map_err(lib_err)?;
            report.set_outcome(pass_outcome(r.all_pass));
            push_method(report, if r.stochastic { "monte_carlo" } else { "closed_form" });
            report.headline = format!(
                "tail-witness check over {} members {}",
                p.family.len(),
                report.outcome.word()
            );
            report.details = json!({ "witness": r });
        }
        ConditionsPayload::Equivalence(p) => {
            let family = FamilySpec::new(p.family.clone()).map_err(lib_err)?;
            let mut config = EquivalenceConfig::new(p.b, p.eta_star);
            if let Some(v) = &p.beta_grid {
                config.beta_grid = v.clone();
            }
            if let Some(v) = &p.c_values {
                config.c_values = v.clone();
            }
            if let Some(v) = &p.c_star_values {
                config.c_star_values = v.clone();
            }
            if let Some(v) = p.ladder_depth {
                config.ladder_depth = v;
            }
            if let Some(v) = p.eta_points {
                config.eta_points = v;
            }
            config.budget = sc.budget.clone();
            let r = equivalence_suite(&family, p.b, &p.witness, &config).map_err(lib_err)?;
            report.set_outcome(pass_outcome(r.all_pass));
            report.provenance.push(format!("forward direction: {} — {}", direction_word(r.forward.status), r.forward.detail));
            report.provenance.push(format!("reduction: {} — {}", direction_word(r.reduction.status), r.reduction.detail));
            report.provenance.push(format!("converse direction: {} — {}", direction_word(r.converse.status), r.converse.detail));
            report.headline = format!(
                "equivalence suite over {} members {}: forward {}, reduction {}, converse {}",
                p.family.len(),
                report.outcome.word(),
                direction_word(r.forward.status),
                direction_word(r.reduction.status),
                direction_word(r.converse.status)
            );
            report.details = json!({ "equivalence": r });
        }
    }
    Ok(())
}

fn direction_word(status: esi_core::conditions::DirectionStatus) -> &'static str {
    use esi_core::conditions::DirectionStatus::*;
    match status {
        Passed => "passed",
        Failed => "failed",
        Asserted => "asserted",
        Skipped => "skipped",
    }
}

fn run_sequential(sc: &Scenario, inner: &SequentialPayload, report: &mut Report) -> Result<(), InputError> {
    match inner {
        SequentialPayload::StoppedSum(p) => {
            let r = stopped_sum_check(&p.spec, p.n_paths, &sc.budget).map_err(lib_err)?;
            report.set_outcome(verdict_outcome(r.verdict));
            push_method(report, "monte_carlo");
            report.sample_count += r.sample_count;
            report.headline = format!(
                "optional-stopping moment {}: estimate {} (se {}), mean stopping time {}",
                report.outcome.word(),
                r.estimate,
                r.se,
                r.mean_stopping_time
            );
            report.provenance.push(format!(
                "stopped sums over {} paths at horizon {} (trigger frequency {})",
                p.n_paths, p.spec.horizon, r.trigger_frequency
            ));
            report.details = json!({ "stopped_sum": r });
        }
        SequentialPayload::Ville(p) => {
            let r = ville_bound(&p.spec, p.delta, p.n_paths, &sc.budget).map_err(lib_err)?;
            report.set_outcome(pass_outcome(r.pass));
            push_method(report, "monte_carlo");
            report.sample_count += r.sample_count;
            report.headline = format!(
                "maximal inequality at delta {} {}: crossing frequency {} (se {})",
                p.delta,
                report.outcome.word(),
                r.crossing_frequency,
                r.se
            );
            report.provenance.push(format!(
                "derived supremum certificate: sup of the running sum at weight {} with constant {}",
                r.sup_certificate.eta, r.sup_certificate.constant
            ));
            report.details = json!({ "ville": r });
        }
        SequentialPayload::Conditional(p) => {
            let r = conditional_esi_check(&p.spec, p.n_histories, p.n_conditional_draws, &sc.budget)
                .map_err(lib_err)?;
            report.set_outcome(pass_outcome(r.pass));
            push_method(report, "monte_carlo");
            push_method(report, "closed_form");
            report.sample_count += u64::from(p.n_histories) * u64::from(p.n_conditional_draws);
            report.headline = format!(
                "conditional claim across {} histories {}: worst conditional annealed value {}",
                r.histories_checked,
                report.outcome.word(),
                r.conditional_worst
            );
            report.provenance.push(
                "conditional laws enumerated exactly per history; Monte Carlo re-estimation cross-check pooled into one z-score"
                    .to_owned(),
            );
            report.details = json!({ "conditional": r });
        }
    }
    Ok(())
}
