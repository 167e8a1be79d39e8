//! Machine-readable run reports: one JSON document per solve and a CSV row
//! per method for comparisons.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::pipeline::{Outcome, Run};
use crate::power::PowerBreakdown;
use crate::scenario::Scenario;
use crate::solution::{GreedyStats, Solution};
use crate::solver::BnbStatus;
use crate::span::Direction;
use crate::verify::verify;

/// Tolerance of the feasibility verdict attached to reports.
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanEntry {
    pub node: u32,
    pub direction: Direction,
    /// Channel ids.
    pub channels: Vec<u32>,
    pub span_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopEntry {
    pub tx: u32,
    pub rx: u32,
    /// `(channel id, Mbps)` for each channel carrying the session.
    pub channels: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub session: usize,
    pub source: u32,
    pub dest: u32,
    pub rate_mbps: f64,
    pub hops: Vec<HopEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub outcome: Outcome,
    pub objective_w: Option<f64>,
    pub bnb_status: Option<BnbStatus>,
    pub lower_bound_w: Option<f64>,
    pub gap: Option<f64>,
    pub bnb_nodes: Option<usize>,
    /// Objective under the index span model the MILP optimises.
    pub model_objective_w: Option<f64>,
    pub breakdown: Option<PowerBreakdown>,
    pub spans: Vec<SpanEntry>,
    pub routes: Vec<RouteEntry>,
    pub greedy: Option<GreedyStats>,
    pub feasible: Option<bool>,
    pub violations: Vec<String>,
    pub error: Option<String>,
    pub seed: u64,
    pub runtime_s: f64,
}

impl SolveReport {
    pub fn new(scenario: &Scenario, run: &Run) -> Self {
        let mut report = SolveReport {
            method: run.method.name().to_string(),
            outcome: run.outcome(),
            objective_w: None,
            bnb_status: None,
            lower_bound_w: None,
            gap: None,
            bnb_nodes: None,
            model_objective_w: None,
            breakdown: None,
            spans: Vec::new(),
            routes: Vec::new(),
            greedy: None,
            feasible: None,
            violations: Vec::new(),
            error: None,
            seed: run.seed,
            runtime_s: run.runtime.as_secs_f64(),
        };
        match &run.result {
            Ok(sol) => report.fill(scenario, sol),
            Err(e) => {
                report.error = Some(e.to_string());
                if let Some(b) = bnb_of_error(e) {
                    report.bnb_status = Some(b.status);
                    report.lower_bound_w = b.lower_bound.is_finite().then_some(b.lower_bound);
                    report.bnb_nodes = Some(b.nodes);
                }
            }
        }
        report
    }

    fn fill(&mut self, scenario: &Scenario, sol: &Solution) {
        self.objective_w = Some(sol.total());
        self.breakdown = Some(sol.breakdown);
        self.model_objective_w = sol.model_objective;
        if let Some(b) = &sol.bnb {
            self.bnb_status = Some(b.status);
            self.lower_bound_w = Some(b.lower_bound);
            self.gap = Some(b.gap);
            self.bnb_nodes = Some(b.nodes);
        }
        self.greedy = sol.greedy;
        self.spans = span_table(scenario, sol);
        self.routes = routes(scenario, sol);
        let verdict = verify(scenario, sol, VERIFY_TOL);
        self.feasible = Some(verdict.ok());
        self.violations = verdict.violations;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

fn bnb_of_error(e: &crate::pipeline::RunError) -> Option<&crate::solver::BnbResult> {
    use crate::greedy::GreedyError;
    use crate::milp::MilpError;
    use crate::pipeline::RunError;
    match e {
        RunError::Milp(MilpError::Infeasible(b) | MilpError::NoIncumbent(b))
        | RunError::Greedy(GreedyError::Milp(MilpError::Infeasible(b) | MilpError::NoIncumbent(b))) => Some(b),
        _ => None,
    }
}

fn span_table(scenario: &Scenario, sol: &Solution) -> Vec<SpanEntry> {
    let ids = |chans: &[usize]| chans.iter().map(|&m| scenario.channels[m].id).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, ns) in sol.spans.nodes.iter().enumerate() {
        for (direction, chans, span) in
            [(Direction::Tx, &ns.tx_channels, ns.tx_mhz), (Direction::Rx, &ns.rx_channels, ns.rx_mhz)]
        {
            if !chans.is_empty() {
                rows.push(SpanEntry { node: scenario.nodes[i].id, direction, channels: ids(chans), span_mhz: span });
            }
        }
    }
    rows
}

fn routes(scenario: &Scenario, sol: &Solution) -> Vec<RouteEntry> {
    scenario
        .sessions
        .iter()
        .enumerate()
        .map(|(l, s)| RouteEntry {
            session: l,
            source: scenario.nodes[s.source].id,
            dest: scenario.nodes[s.dest].id,
            rate_mbps: s.rate_mbps,
            hops: sol
                .session_links(l)
                .into_iter()
                .map(|e| HopEntry {
                    tx: scenario.nodes[scenario.links[e].tx].id,
                    rx: scenario.nodes[scenario.links[e].rx].id,
                    channels: (0..scenario.channels.len())
                        .filter(|&m| sol.flows[e][m][l] > 0.0)
                        .map(|m| (scenario.channels[m].id, sol.flows[e][m][l]))
                        .collect(),
                })
                .collect(),
        })
        .collect()
}

/// Comparison table columns, in order.
pub const COMPARE_COLUMNS: [&str; 10] = [
    "method",
    "outcome",
    "tx_rf_w",
    "circuit_w",
    "total_w",
    "total_span_mhz",
    "max_span_mhz",
    "ratio_to_first",
    "feasible",
    "error",
];

/// Writes one row per report. `ratio_to_first` divides each total by the
/// first row's total, when both exist.
pub fn write_compare_csv<W: Write>(out: W, reports: &[SolveReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_COLUMNS)?;
    let first = reports.first().and_then(|r| r.objective_w);
    let num = |v: Option<f64>| v.map(|v| format!("{v:.9e}")).unwrap_or_default();
    for r in reports {
        let spans: Vec<f64> = r.spans.iter().map(|s| s.span_mhz).collect();
        let has = r.breakdown.is_some();
        w.write_record([
            r.method.clone(),
            serde_json::to_value(r.outcome).expect("plain enum").as_str().unwrap_or_default().to_string(),
            num(r.breakdown.map(|b| b.tx_rf)),
            num(r.breakdown.map(|b| b.circuit())),
            num(r.objective_w),
            if has { format!("{:.3}", spans.iter().sum::<f64>()) } else { String::new() },
            if has { format!("{:.3}", spans.iter().copied().fold(0.0, f64::max)) } else { String::new() },
            match (r.objective_w, first) {
                (Some(v), Some(f)) if f > 0.0 => format!("{:.6}", v / f),
                _ => String::new(),
            },
            r.feasible.map(|f| f.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{alternating_link, minimal_pair};
    use crate::pipeline::{run_method, Method, RunOptions};

    #[test]
    fn objective_equals_breakdown_total() {
        let s = minimal_pair();
        let run = run_method(&s, Method::Greedy, &RunOptions::default());
        let r = SolveReport::new(&s, &run);
        assert_eq!(r.objective_w, Some(r.breakdown.unwrap().total));
        assert_eq!(r.feasible, Some(true));
        assert_eq!(r.spans.len(), 2);
        assert_eq!(r.routes[0].hops, vec![HopEntry { tx: 1, rx: 2, channels: vec![(1, 1.0)] }]);
    }

    #[test]
    fn json_round_trip() {
        let s = alternating_link(4, 1).unwrap();
        let run = run_method(&s, Method::Bnb, &RunOptions::default());
        let r = SolveReport::new(&s, &run);
        let back: SolveReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.gap.unwrap() <= 1e-4);
    }

    #[test]
    fn error_reports_carry_message() {
        let s = alternating_link(4, 1).unwrap();
        let run = run_method(&s, Method::BestChan, &RunOptions::default());
        assert!(run.result.is_ok());
        let multi = crate::fixtures::wichita_twelve_node(1).unwrap();
        let run = run_method(&multi, Method::BestChan, &RunOptions::default());
        let r = SolveReport::new(&multi, &run);
        assert_eq!(r.outcome, Outcome::Error);
        assert!(r.error.unwrap().contains("one link"));
        assert!(r.objective_w.is_none());
    }

    #[test]
    fn compare_csv_shape() {
        let s = alternating_link(6, 1).unwrap();
        let reports: Vec<SolveReport> = [Method::TxMin, Method::Greedy]
            .into_iter()
            .map(|m| SolveReport::new(&s, &run_method(&s, m, &RunOptions::default())))
            .collect();
        let mut buf = Vec::new();
        write_compare_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], COMPARE_COLUMNS.join(","));
        assert!(lines[1].starts_with("txmin,solved,"));
        assert!(lines[1].contains(",1.000000,"));
    }
}
