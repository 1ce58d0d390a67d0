//! Run reports: one deterministic JSON document per run, a plain-text
//! summary, and CSV emitters for the numeric tables.
//!
//! Determinism contract: for a fixed scenario file and effective seed, the
//! serialized report is byte-identical across runs and across worker-thread
//! counts. Nothing time- or host-dependent is stored in the report — wall
//! clock goes to stdout only.

use serde::Serialize;

use crate::scenario::SCHEMA_VERSION;

/// Overall outcome, aligned with the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The checked claim holds (or the requested extraction succeeded).
    Holds,
    /// The checked claim fails.
    Fails,
    /// A stochastic check landed inside the verdict band.
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Holds => 0,
            Outcome::Fails => 1,
            Outcome::Inconclusive => 2,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            Outcome::Holds => "holds",
            Outcome::Fails => "fails",
            Outcome::Inconclusive => "inconclusive",
        }
    }
}

/// Row of the rate-study table: the optimized bound at sample size `n`.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub n: u64,
    #[serde(with = "esi_core::serde_float")]
    pub bound: f64,
    #[serde(with = "esi_core::serde_float")]
    pub eps_star: f64,
}

/// Row of the margin curve: verification margin at slack `eps`, with the
/// standard error of the estimate (zero for exact evaluation).
#[derive(Debug, Clone, Serialize)]
pub struct MarginRow {
    pub eps: f64,
    #[serde(with = "esi_core::serde_float")]
    pub margin: f64,
    pub se: f64,
}

/// Row of the tail-quantile table: the high-probability bound at
/// confidence `delta` and its minimizing slack.
#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub delta: f64,
    #[serde(with = "esi_core::serde_float")]
    pub bound: f64,
    #[serde(with = "esi_core::serde_float")]
    pub eps_star: f64,
}

/// The numeric tables a run may produce. Absent tables are omitted from
/// the JSON document.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Tables {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_vs_n: Option<Vec<RateRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_vs_eps: Option<Vec<MarginRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_quantiles: Option<Vec<TailRow>>,
}

/// The full report document written to `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub task: String,
    /// Effective seed after command-line overrides.
    pub seed: u64,
    /// Effective evaluation budget after overrides; every stochastic
    /// number in the report derives from this budget and the seed.
    pub budget: esi_core::exec::EvalBudget,
    pub outcome: Outcome,
    pub exit_code: i32,
    /// One-line statement of what was decided.
    pub headline: String,
    /// How each derived object came to be: inputs, rules, outputs.
    pub provenance: Vec<String>,
    /// Total Monte Carlo draws consumed (zero for fully exact runs).
    pub sample_count: u64,
    /// Evaluation method tags present in this run (for stochastic entries
    /// the per-entry tags and standard errors live in `details`).
    pub methods: Vec<String>,
    pub tables: Tables,
    /// The task module's own report(s), verbatim.
    pub details: serde_json::Value,
    /// The scenario file as parsed, echoed back.
    pub scenario: serde_json::Value,
}

impl Report {
    pub fn new(task: &str, seed: u64, budget: &esi_core::exec::EvalBudget, scenario_echo: serde_json::Value) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            task: task.to_owned(),
            seed,
            budget: budget.clone(),
            outcome: Outcome::Holds,
            exit_code: 0,
            headline: String::new(),
            provenance: Vec::new(),
            sample_count: 0,
            methods: Vec::new(),
            tables: Tables::default(),
            details: serde_json::Value::Null,
            scenario: scenario_echo,
        }
    }

    pub fn set_outcome(&mut self, outcome: Outcome) {
        self.outcome = outcome;
        self.exit_code = outcome.exit_code();
    }

    /// Serialize for `report.json`: pretty-printed, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }
}

/// Which table to export as CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    BoundVsN,
    MarginVsEps,
    TailQuantiles,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::BoundVsN, PlotKind::MarginVsEps, PlotKind::TailQuantiles];

    /// Table name; also the CSV file stem.
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::BoundVsN => "bound_vs_n",
            PlotKind::MarginVsEps => "margin_vs_eps",
            PlotKind::TailQuantiles => "tail_quantiles",
        }
    }
}

/// The requested table is not part of this report.
#[derive(Debug)]
pub struct MissingTable(pub &'static str);

impl std::fmt::Display for MissingTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "report has no `{}` table", self.0)
    }
}

impl std::error::Error for MissingTable {}

/// Render one numeric table as CSV: a header row naming the columns, one
/// row per entry, shortest-round-trip decimal floats, every line
/// newline-terminated.
pub fn emit_plot_data(report: &Report, which: PlotKind) -> Result<String, MissingTable> {
    match which {
        PlotKind::BoundVsN => {
            let rows = report.tables.bound_vs_n.as_ref().ok_or(MissingTable(which.name()))?;
            let mut out = String::from("n,bound,eps_star\n");
            for r in rows {
                out.push_str(&format!("{},{},{}\n", r.n, r.bound, r.eps_star));
            }
            Ok(out)
        }
        PlotKind::MarginVsEps => {
            let rows = report.tables.margin_vs_eps.as_ref().ok_or(MissingTable(which.name()))?;
            let mut out = String::from("eps,margin,se\n");
            for r in rows {
                out.push_str(&format!("{},{},{}\n", r.eps, r.margin, r.se));
            }
            Ok(out)
        }
        PlotKind::TailQuantiles => {
            let rows = report.tables.tail_quantiles.as_ref().ok_or(MissingTable(which.name()))?;
            let mut out = String::from("delta,bound,eps_star\n");
            for r in rows {
                out.push_str(&format!("{},{},{}\n", r.delta, r.bound, r.eps_star));
            }
            Ok(out)
        }
    }
}

/// Render the human-readable `summary.txt`. Deterministic for the same
/// report.
pub fn render_summary(report: &Report) -> String {
    let mut s = String::new();
    s.push_str(&format!("task:       {}\n", report.task));
    s.push_str(&format!("outcome:    {} (exit {})\n", report.outcome.word(), report.exit_code));
    s.push_str(&format!("headline:   {}\n", report.headline));
    s.push_str(&format!("seed:       {}\n", report.seed));
    s.push_str(&format!(
        "budget:     mc_samples={} mc_chunks={} k_sigma={}\n",
        report.budget.mc_samples, report.budget.mc_chunks, report.budget.k_sigma
    ));
    s.push_str(&format!("samples:    {} Monte Carlo draws\n", report.sample_count));
    s.push_str(&format!(
        "methods:    {}\n",
        if report.methods.is_empty() { "exact".to_owned() } else { report.methods.join(", ") }
    ));

    let mut table_names: Vec<&str> = Vec::new();
    if let Some(t) = &report.tables.bound_vs_n {
        table_names.push("bound_vs_n");
        let _ = t;
    }
    if report.tables.margin_vs_eps.is_some() {
        table_names.push("margin_vs_eps");
    }
    if report.tables.tail_quantiles.is_some() {
        table_names.push("tail_quantiles");
    }
    s.push_str(&format!(
        "tables:     {}\n",
        if table_names.is_empty() { "none".to_owned() } else { table_names.join(", ") }
    ));
    if !report.provenance.is_empty() {
        s.push_str("provenance:\n");
        for line in &report.provenance {
            s.push_str(&format!("  - {line}\n"));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank() -> Report {
        Report::new("verify", 7, &esi_core::exec::EvalBudget::default(), serde_json::Value::Null)
    }

    #[test]
    fn missing_table_is_an_error() {
        let r = blank();
        for kind in PlotKind::ALL {
            let err = emit_plot_data(&r, kind).unwrap_err();
            assert!(err.to_string().contains(kind.name()));
        }
    }

    #[test]
    fn csv_has_header_and_trailing_newline() {
        let mut r = blank();
        r.tables.margin_vs_eps = Some(vec![
            MarginRow { eps: 0.5, margin: 0.25, se: 0.0 },
            MarginRow { eps: 1.0, margin: f64::INFINITY, se: 0.0 },
        ]);
        let csv = emit_plot_data(&r, PlotKind::MarginVsEps).unwrap();
        assert_eq!(csv, "eps,margin,se\n0.5,0.25,0\n1,inf,0\n");
    }

    #[test]
    fn non_finite_table_values_serialize_as_tagged_strings() {
        let mut r = blank();
        r.tables.tail_quantiles = Some(vec![TailRow { delta: 0.1, bound: f64::INFINITY, eps_star: 0.0 }]);
        let json = r.to_json();
        assert!(json.contains("\"inf\""));
        assert!(json.ends_with('\n'));
    }
}
