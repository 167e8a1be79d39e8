//! Spectrum spans of node channel sets.

use serde::{Deserialize, Serialize};

use crate::scenario::{Channel, Scenario};

/// Link-channel assignment `x[e][m]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    x: Vec<Vec<bool>>,
}

impl Schedule {
    pub fn empty(scenario: &Scenario) -> Self {
        Self::new(scenario.links.len(), scenario.channels.len())
    }

    pub fn new(links: usize, channels: usize) -> Self {
        Self { x: vec![vec![false; channels]; links] }
    }

    pub fn get(&self, e: usize, m: usize) -> bool {
        self.x[e][m]
    }

    pub fn set(&mut self, e: usize, m: usize, on: bool) {
        self.x[e][m] = on;
    }

    pub fn num_links(&self) -> usize {
        self.x.len()
    }

    pub fn channels_of(&self, e: usize) -> Vec<usize> {
        (0..self.x[e].len()).filter(|&m| self.x[e][m]).collect()
    }

    pub fn count(&self, e: usize) -> usize {
        self.x[e].iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.x.iter().all(|r| r.iter().all(|b| !b))
    }

    /// Every scheduled `(link, channel)` pair in index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.x
            .iter()
            .enumerate()
            .flat_map(|(e, row)| row.iter().enumerate().filter(|(_, b)| **b).map(move |(m, _)| (e, m)))
    }

    /// Channels node `i` transmits on (`x_t`), ascending.
    pub fn tx_channels(&self, scenario: &Scenario, i: usize) -> Vec<usize> {
        self.union(scenario.out_links(i))
    }

    /// Channels node `i` receives on (`x_r`), ascending.
    pub fn rx_channels(&self, scenario: &Scenario, i: usize) -> Vec<usize> {
        self.union(scenario.in_links(i))
    }

    fn union(&self, links: &[usize]) -> Vec<usize> {
        let width = self.x.first().map_or(0, Vec::len);
        (0..width).filter(|&m| links.iter().any(|&e| self.x[e][m])).collect()
    }

    /// First `(node, channel)` where a node both sends and receives.
    pub fn half_duplex_conflict(&self, scenario: &Scenario) -> Option<(usize, usize)> {
        (0..scenario.nodes.len()).find_map(|i| {
            let tx = self.tx_channels(scenario, i);
            let rx = self.rx_channels(scenario, i);
            tx.into_iter().find(|m| rx.contains(m)).map(|m| (i, m))
        })
    }
}

/// Distance between the outer edges of `used` (MHz); zero when empty.
pub fn span_frequency<'a>(used: impl IntoIterator<Item = &'a Channel>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in used {
        lo = lo.min(c.low_edge());
        hi = hi.max(c.high_edge());
    }
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// `W (max - min + 1)` over model indices; zero when empty.
pub fn span_index(indices: &[i64], width_mhz: f64) -> f64 {
    match (indices.iter().min(), indices.iter().max()) {
        (Some(lo), Some(hi)) => width_mhz * (hi - lo + 1) as f64,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Tx,
    Rx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpan {
    pub tx_channels: Vec<usize>,
    pub rx_channels: Vec<usize>,
    pub tx_mhz: f64,
    pub rx_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanResult {
    pub nodes: Vec<NodeSpan>,
    /// `(node, direction)` pairs whose span exceeds `q_max`.
    pub violations: Vec<(usize, Direction)>,
}

impl SpanResult {
    pub fn bundle_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Frequency spans of every node's transmit and receive sets.
pub fn node_spans(schedule: &Schedule, scenario: &Scenario) -> SpanResult {
    let q_max = scenario.limits.q_max_mhz;
    let mut violations = Vec::new();
    let nodes = (0..scenario.nodes.len())
        .map(|i| {
            let tx_channels = schedule.tx_channels(scenario, i);
            let rx_channels = schedule.rx_channels(scenario, i);
            let tx_mhz = span_frequency(tx_channels.iter().map(|&m| &scenario.channels[m]));
            let rx_mhz = span_frequency(rx_channels.iter().map(|&m| &scenario.channels[m]));
            if tx_mhz > q_max + 1e-9 {
                violations.push((i, Direction::Tx));
            }
            if rx_mhz > q_max + 1e-9 {
                violations.push((i, Direction::Rx));
            }
            NodeSpan { tx_channels, rx_channels, tx_mhz, rx_mhz }
        })
        .collect();
    SpanResult { nodes, violations }
}
