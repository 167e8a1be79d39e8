//! Channel plans and reference networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::power::RadioProfile;
use crate::scenario::{
    generate_scenario, Channel, GeneratorParams, Layout, Limits, Link, Node, Scenario, ScenarioError, Session,
};

/// Seven vacant TV channels in Wichita, KS: `(channel, center MHz)`.
pub const WICHITA_TV: [(u32, f64); 7] =
    [(2, 57.0), (5, 79.0), (6, 85.0), (17, 491.0), (23, 527.0), (24, 533.0), (47, 671.0)];

pub const TV_WIDTH_MHZ: f64 = 6.0;

pub fn wichita_channels() -> Vec<Channel> {
    WICHITA_TV
        .iter()
        .map(|&(id, center_mhz)| Channel { id, center_mhz, width_mhz: TV_WIDTH_MHZ })
        .collect()
}

/// `count` adjacent channels numbered from 1.
pub fn contiguous_channels(count: usize, width_mhz: f64, first_center_mhz: f64) -> Vec<Channel> {
    (0..count)
        .map(|k| Channel {
            id: k as u32 + 1,
            center_mhz: first_center_mhz + k as f64 * width_mhz,
            width_mhz,
        })
        .collect()
}

/// Seed of the shipped fixture files.
pub const FIXTURE_SEED: u64 = 1;

/// Grid spacing of the twelve-node network (m).
pub const GRID_SPACING_M: f64 = 4000.0;

/// 4 x 3 grid on the Wichita plan with three 10 Mbps corner-to-corner
/// sessions (1 -> 12, 2 -> 11, 3 -> 10). Only grid neighbours are linked.
pub fn wichita_twelve_node_params(seed: u64) -> GeneratorParams {
    GeneratorParams {
        layout: Layout::Grid { cols: 4, rows: 3, spacing_m: GRID_SPACING_M },
        link_range_m: Some(1.01 * GRID_SPACING_M),
        path_loss_exponent: 3.0,
        shadowing_db: 12.0,
        channels: wichita_channels(),
        sessions: vec![(1, 12, 10.0), (2, 11, 10.0), (3, 10, 10.0)],
        limits: Limits::typical(TV_WIDTH_MHZ, 650.0),
        radio: RadioProfile::high_slope(),
        seed,
    }
}

pub fn wichita_twelve_node(seed: u64) -> Result<Scenario, ScenarioError> {
    generate_scenario(&wichita_twelve_node_params(seed))
}

/// Nominal gain of the strong channels in [`alternating_link`].
pub const ALTERNATING_GOOD_GAIN: f64 = 3.1e-12;

/// One link over `channels` contiguous 3 MHz channels carrying 18 Mbps.
/// Even-indexed channels are strong, odd ones 10 dB weaker; every gain gets
/// a seeded +-0.25 dB jitter so that no two channels tie.
pub fn alternating_link(channels: usize, seed: u64) -> Result<Scenario, ScenarioError> {
    let width = 3.0;
    let plan = contiguous_channels(channels, width, 0.5 * width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = (0..channels)
        .map(|k| {
            let base = if k % 2 == 0 { ALTERNATING_GOOD_GAIN } else { ALTERNATING_GOOD_GAIN / 10.0 };
            let jitter_db: f64 = rng.gen_range(-0.25..=0.25);
            Some(base * 10f64.powf(jitter_db / 10.0))
        })
        .collect();
    let all: Vec<usize> = (0..channels).collect();
    Scenario::new(
        vec![
            Node { id: 1, position: [0.0, 0.0], channels: all.clone() },
            Node { id: 2, position: [1000.0, 0.0], channels: all },
        ],
        vec![Link { tx: 0, rx: 1, gains }],
        plan,
        vec![Session { source: 0, dest: 1, rate_mbps: 18.0 }],
        Limits::typical(width, channels as f64 * width),
        RadioProfile::high_slope(),
        seed,
    )
}

/// Two nodes, one channel, one 1 Mbps session.
pub fn minimal_pair() -> Scenario {
    let plan = contiguous_channels(1, TV_WIDTH_MHZ, 3.0);
    Scenario::new(
        vec![
            Node { id: 1, position: [0.0, 0.0], channels: vec![0] },
            Node { id: 2, position: [100.0, 0.0], channels: vec![0] },
        ],
        vec![Link { tx: 0, rx: 1, gains: vec![Some(1e-9)] }],
        plan,
        vec![Session { source: 0, dest: 1, rate_mbps: 1.0 }],
        Limits::typical(TV_WIDTH_MHZ, 6.0),
        RadioProfile::high_slope(),
        0,
    )
    .expect("static fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_node_topology() {
        let s = wichita_twelve_node(1).unwrap();
        assert_eq!(s.nodes.len(), 12);
        // 3 rows x 3 horizontal gaps + 4 columns x 2 vertical gaps, both directions.
        assert_eq!(s.links.len(), 34);
        assert_eq!(s.sessions.len(), 3);
        assert_eq!(s.nodes[s.sessions[0].source].id, 1);
        assert_eq!(s.nodes[s.sessions[0].dest].id, 12);
        assert_eq!(s.nodes[2].position, [0.0, 2.0 * GRID_SPACING_M]);
        assert_eq!(s.nodes[3].position, [GRID_SPACING_M, 0.0]);
    }

    #[test]
    fn alternating_link_shape() {
        let s = alternating_link(20, 5).unwrap();
        assert_eq!(s.channels.len(), 20);
        let g: Vec<f64> = s.links[0].gains.iter().map(|g| g.unwrap()).collect();
        for k in 0..20 {
            let base = if k % 2 == 0 { ALTERNATING_GOOD_GAIN } else { ALTERNATING_GOOD_GAIN / 10.0 };
            assert!((10.0 * (g[k] / base).log10()).abs() <= 0.25 + 1e-12);
        }
        assert_eq!(s.limits.q_max_mhz, 60.0);
    }
}
