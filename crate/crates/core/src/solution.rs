//! Solver-independent solution container.

use serde::{Deserialize, Serialize};

use crate::allocation::{node_breakdowns, SpanModel};
use crate::power::PowerBreakdown;
use crate::scenario::Scenario;
use crate::solver::BnbResult;
use crate::span::{node_spans, Schedule, SpanResult};

/// Work counters of the greedy heuristic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyStats {
    pub passes: usize,
    pub commits: usize,
    /// Channel candidates scored.
    pub candidate_evaluations: usize,
    /// Link-channel pairs inspected by interference checks.
    pub interference_scans: usize,
    /// The fixed-schedule optimisation failed and the provisional
    /// allocation was kept.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub method: String,
    pub schedule: Schedule,
    /// `powers[e][m]` (W).
    pub powers: Vec<Vec<f64>>,
    /// `flows[e][m][l]` (Mbps).
    pub flows: Vec<Vec<Vec<f64>>>,
    /// Frequency spans.
    pub spans: SpanResult,
    pub nodes: Vec<PowerBreakdown>,
    pub breakdown: PowerBreakdown,
    /// Objective with index spans, the quantity the MILP bounds.
    pub model_objective: Option<f64>,
    pub bnb: Option<BnbResult>,
    pub greedy: Option<GreedyStats>,
}

impl Solution {
    /// Builds the report quantities (frequency spans, per-node power) for a
    /// schedule with its flows and powers.
    pub fn assemble(
        scenario: &Scenario,
        method: &str,
        schedule: Schedule,
        flows: Vec<Vec<Vec<f64>>>,
        powers: Vec<Vec<f64>>,
    ) -> Self {
        let spans = node_spans(&schedule, scenario);
        let nodes = node_breakdowns(scenario, &schedule, &powers, SpanModel::Frequency);
        let breakdown = nodes.iter().copied().sum();
        Solution {
            method: method.to_string(),
            schedule,
            powers,
            flows,
            spans,
            nodes,
            breakdown,
            model_objective: None,
            bnb: None,
            greedy: None,
        }
    }

    pub fn total(&self) -> f64 {
        self.breakdown.total
    }

    /// Scheduled channel indices of link `e`.
    pub fn channels_of(&self, e: usize) -> Vec<usize> {
        self.schedule.channels_of(e)
    }

    /// Links carrying flow of session `l`, in link order.
    pub fn session_links(&self, l: usize) -> Vec<usize> {
        (0..self.flows.len())
            .filter(|&e| self.flows[e].iter().any(|per_l| per_l[l] > 0.0))
            .collect()
    }
}
