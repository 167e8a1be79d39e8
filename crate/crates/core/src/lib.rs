//! System-power-aware channel scheduling, power control and routing for
//! multi-hop NC-OFDMA networks.

pub mod allocation;
pub mod fixtures;
pub mod greedy;
pub mod milp;
pub mod pipeline;
pub mod power;
pub mod relaxation;
pub mod report;
pub mod scenario;
pub mod solution;
pub mod solver;
pub mod span;
pub mod verify;
