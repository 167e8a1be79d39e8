//! Network scenarios: channels, nodes, links, sessions and hardware limits.
//!
//! Gains are linear inside [`Scenario`] and in dB on disk. The set of
//! channels a link can use is always derived from its endpoints' channel
//! lists and never stored separately.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::{PowerError, RadioProfile};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("validation failed: {0}")]
    Invalid(String),
    #[error("radio profile: {0}")]
    Radio(#[from] PowerError),
    #[error("degenerate geometry: nodes {0} and {1} share a position")]
    DegenerateGeometry(u32, u32),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    /// External label, e.g. the TV channel number.
    pub id: u32,
    pub center_mhz: f64,
    pub width_mhz: f64,
}

impl Channel {
    pub fn low_edge(&self) -> f64 {
        self.center_mhz - 0.5 * self.width_mhz
    }

    pub fn high_edge(&self) -> f64 {
        self.center_mhz + 0.5 * self.width_mhz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u32,
    /// Metres.
    pub position: [f64; 2],
    /// Indices into [`Scenario::channels`], ascending.
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
    /// Linear power gain per scenario channel; `Some` exactly on the
    /// channels shared by both endpoints.
    pub gains: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session {
    pub source: usize,
    pub dest: usize,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Noise spectral density (W/Hz).
    pub n0: f64,
    /// Interference threshold (W).
    pub p_i: f64,
    /// Per-link-channel transmit power cap (W).
    pub p_max: f64,
    /// Power/schedule coupling constant (W).
    pub big_m: f64,
    /// Maximum spectrum span of any transmit or receive path (MHz).
    pub q_max_mhz: f64,
}

impl Limits {
    /// Thermal noise at -174 dBm/Hz, interference threshold one tenth of the
    /// noise floor, 4 W fixed-device cap.
    pub fn typical(width_mhz: f64, q_max_mhz: f64) -> Self {
        let n0 = 4.0e-21;
        Self {
            n0,
            p_i: 0.1 * n0 * width_mhz * 1e6,
            p_max: 4.0,
            big_m: 4.0,
            q_max_mhz,
        }
    }
}

/// Immutable, validated network description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub channels: Vec<Channel>,
    pub sessions: Vec<Session>,
    pub limits: Limits,
    pub radio: RadioProfile,
    pub seed: u64,
    link_lookup: BTreeMap<(usize, usize), usize>,
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
}

impl Scenario {
    /// Validates the parts and builds the derived lookups.
    pub fn new(
        nodes: Vec<Node>,
        links: Vec<Link>,
        channels: Vec<Channel>,
        sessions: Vec<Session>,
        limits: Limits,
        radio: RadioProfile,
        seed: u64,
    ) -> Result<Self, ScenarioError> {
        let mut scenario = Scenario {
            nodes,
            links,
            channels,
            sessions,
            limits,
            radio,
            seed,
            link_lookup: BTreeMap::new(),
            out_links: Vec::new(),
            in_links: Vec::new(),
        };
        scenario.validate()?;
        scenario.out_links = vec![Vec::new(); scenario.nodes.len()];
        scenario.in_links = vec![Vec::new(); scenario.nodes.len()];
        for (e, link) in scenario.links.iter().enumerate() {
            scenario.link_lookup.insert((link.tx, link.rx), e);
            scenario.out_links[link.tx].push(e);
            scenario.in_links[link.rx].push(e);
        }
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.channels.is_empty() {
            return invalid("no channels");
        }
        for c in &self.channels {
            if !(c.width_mhz > 0.0) || !c.width_mhz.is_finite() || !c.center_mhz.is_finite() {
                return invalid(format!("channel {} must have finite center and width > 0", c.id));
            }
        }
        let width = self.channels[0].width_mhz;
        for pair in self.channels.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.id == b.id {
                return invalid(format!("duplicate channel id {}", a.id));
            }
            if !(b.center_mhz > a.center_mhz) {
                return invalid(format!(
                    "channel centers must be strictly increasing ({} then {})",
                    a.id, b.id
                ));
            }
            if b.low_edge() < a.high_edge() - 1e-9 {
                return invalid(format!("channel overlap between {} and {}", a.id, b.id));
            }
        }
        let mut ids: Vec<u32> = self.channels.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.channels.len() {
            return invalid("duplicate channel id");
        }
        if self.channels.iter().any(|c| (c.width_mhz - width).abs() > 1e-9 * width) {
            return invalid("all channels must share one width");
        }

        let mut node_ids: Vec<u32> = self.nodes.iter().map(|n| n.id).collect();
        node_ids.sort_unstable();
        node_ids.dedup();
        if node_ids.len() != self.nodes.len() {
            return invalid("duplicate node id");
        }
        for n in &self.nodes {
            if !n.position.iter().all(|v| v.is_finite()) {
                return invalid(format!("node {} has a non-finite position", n.id));
            }
            if n.channels.iter().any(|&m| m >= self.channels.len()) {
                return invalid(format!("node {} lists an unknown channel", n.id));
            }
            if n.channels.windows(2).any(|w| w[0] >= w[1]) {
                return invalid(format!("node {} channel list must be ascending and unique", n.id));
            }
        }

        let mut seen = BTreeMap::new();
        for link in &self.links {
            if link.tx >= self.nodes.len() || link.rx >= self.nodes.len() {
                return invalid("link references an unknown node");
            }
            let (tx, rx) = (&self.nodes[link.tx], &self.nodes[link.rx]);
            if link.tx == link.rx {
                return invalid(format!("self link at node {}", tx.id));
            }
            if seen.insert((link.tx, link.rx), ()).is_some() {
                return invalid(format!("duplicate link {} -> {}", tx.id, rx.id));
            }
            if link.gains.len() != self.channels.len() {
                return invalid(format!("link {} -> {} gain table has wrong length", tx.id, rx.id));
            }
            let common = intersect(&tx.channels, &rx.channels);
            if common.is_empty() {
                return invalid(format!("link {} -> {} has no common channel", tx.id, rx.id));
            }
            for (m, g) in link.gains.iter().enumerate() {
                let shared = common.binary_search(&m).is_ok();
                match (shared, g) {
                    (true, None) => {
                        return invalid(format!(
                            "link {} -> {} is missing a gain on channel {}",
                            tx.id, rx.id, self.channels[m].id
                        ))
                    }
                    (false, Some(_)) => {
                        return invalid(format!(
                            "link {} -> {} has a gain on channel {} outside the common set",
                            tx.id, rx.id, self.channels[m].id
                        ))
                    }
                    (true, Some(g)) if !(*g > 0.0) || !g.is_finite() => {
                        return invalid(format!("link {} -> {} has non-positive gain", tx.id, rx.id))
                    }
                    _ => {}
                }
            }
        }

        for s in &self.sessions {
            if s.source >= self.nodes.len() || s.dest >= self.nodes.len() {
                return invalid("session references an unknown node");
            }
            if s.source == s.dest {
                return invalid(format!("session source equals destination ({})", self.nodes[s.source].id));
            }
            if !(s.rate_mbps > 0.0) || !s.rate_mbps.is_finite() {
                return invalid("session rate must be > 0");
            }
        }

        let l = &self.limits;
        for (name, v) in [("n0", l.n0), ("p_max", l.p_max), ("big_m", l.big_m), ("q_max", l.q_max_mhz)] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be finite and > 0"));
            }
        }
        if !(l.p_i >= 0.0) {
            return invalid("interference threshold must be >= 0");
        }
        for c in &self.channels {
            if !(l.p_i < l.n0 * c.width_mhz * 1e6) {
                return invalid(format!(
                    "interference threshold must be below the noise power N0*W on channel {}",
                    c.id
                ));
            }
            if l.q_max_mhz < c.width_mhz {
                return invalid("q_max is smaller than a channel width");
            }
        }
        if l.big_m < l.p_max {
            return invalid("big_m must be at least p_max");
        }
        self.radio.validate()?;
        Ok(())
    }

    /// Common channel width (MHz).
    pub fn width_mhz(&self) -> f64 {
        self.channels[0].width_mhz
    }

    /// Noise power `N0 W` in one channel (W).
    pub fn noise_w(&self) -> f64 {
        self.limits.n0 * self.width_mhz() * 1e6
    }

    pub fn node_index(&self, id: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn channel_index(&self, id: u32) -> Option<usize> {
        self.channels.iter().position(|c| c.id == id)
    }

    pub fn find_link(&self, tx: usize, rx: usize) -> Option<usize> {
        self.link_lookup.get(&(tx, rx)).copied()
    }

    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.out_links[node]
    }

    pub fn in_links(&self, node: usize) -> &[usize] {
        &self.in_links[node]
    }

    /// Channels usable by link `e` (both endpoints have them).
    pub fn link_channels(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        self.links[e]
            .gains
            .iter()
            .enumerate()
            .filter_map(|(m, g)| g.map(|_| m))
    }

    pub fn gain(&self, e: usize, m: usize) -> Option<f64> {
        self.links[e].gains[m]
    }

    /// Gain from `from` to `to` on channel `m`; zero when the pair has no
    /// link (out of range) or the channel is not shared.
    pub fn cross_gain(&self, from: usize, to: usize, m: usize) -> f64 {
        self.find_link(from, to)
            .and_then(|e| self.gain(e, m))
            .unwrap_or(0.0)
    }

    /// Channel-averaged linear gain of link `e`.
    pub fn mean_gain(&self, e: usize) -> f64 {
        let gains: Vec<f64> = self.links[e].gains.iter().flatten().copied().collect();
        gains.iter().sum::<f64>() / gains.len() as f64
    }

    /// Whether session `l` may carry flow on link `e` (never into its source
    /// or out of its destination).
    pub fn flow_allowed(&self, e: usize, l: usize) -> bool {
        let link = &self.links[e];
        let s = &self.sessions[l];
        link.tx != s.dest && link.rx != s.source
    }

    /// Model indices used by the index-linear span encoding.
    pub fn model_indices(&self) -> Vec<i64> {
        remap_channel_indices(&self.channels)
    }

    /// Same scenario with a different radio profile.
    pub fn with_radio(&self, radio: RadioProfile) -> Scenario {
        Scenario { radio, ..self.clone() }
    }

    pub fn with_limits(&self, limits: Limits) -> Result<Scenario, ScenarioError> {
        Scenario::new(
            self.nodes.clone(),
            self.links.clone(),
            self.channels.clone(),
            self.sessions.clone(),
            limits,
            self.radio,
            self.seed,
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} nodes, {} links, {} channels ({} MHz), {} sessions",
            self.nodes.len(),
            self.links.len(),
            self.channels.len(),
            self.width_mhz(),
            self.sessions.len()
        )
    }
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|m| b.binary_search(m).is_ok()).copied().collect()
}

/// `floor(center / width)` for each channel.
///
/// Irregular TV-band spacing makes index differences only approximate
/// frequency differences; the result is used by the index-linear span
/// encoding and nowhere else.
pub fn remap_channel_indices(channels: &[Channel]) -> Vec<i64> {
    channels
        .iter()
        .map(|c| (c.center_mhz / c.width_mhz).floor() as i64)
        .collect()
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: u64,
    limits: LimitsFile,
    radio: RadioFile,
    channels: Vec<ChannelFile>,
    nodes: Vec<NodeFile>,
    links: Vec<LinkFile>,
    #[serde(default)]
    sessions: Vec<SessionFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsFile {
    n0_w_per_hz: f64,
    p_i_w: f64,
    p_max_w: f64,
    big_m_w: f64,
    q_max_mhz: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dac_intercept_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dac_slope_w_per_msps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adc_intercept_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adc_slope_w_per_msps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tx_fixed_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rx_fixed_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    papr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drain_efficiency: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    id: u32,
    center_mhz: f64,
    width_mhz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: u32,
    x_m: f64,
    y_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    tx: u32,
    rx: u32,
    /// `[channel id, gain dB]` pairs.
    gains_db: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionFile {
    source: u32,
    dest: u32,
    rate_mbps: f64,
}

impl RadioFile {
    fn into_profile(self) -> Result<RadioProfile, ScenarioError> {
        let custom = [
            self.dac_intercept_w,
            self.dac_slope_w_per_msps,
            self.adc_intercept_w,
            self.adc_slope_w_per_msps,
            self.tx_fixed_w,
            self.rx_fixed_w,
            self.papr_db,
            self.drain_efficiency,
        ];
        match self.preset {
            Some(name) => {
                if custom.iter().any(Option::is_some) {
                    return invalid("radio: give either a preset or explicit fields, not both");
                }
                RadioProfile::preset(&name)
                    .ok_or_else(|| ScenarioError::Invalid(format!("unknown radio preset {name:?}")))
            }
            None => {
                if custom.iter().any(Option::is_none) {
                    return invalid("radio: explicit profile needs every field");
                }
                let v: Vec<f64> = custom.iter().map(|v| v.unwrap()).collect();
                Ok(RadioProfile {
                    dac_intercept: v[0],
                    dac_slope: v[1],
                    adc_intercept: v[2],
                    adc_slope: v[3],
                    tx_fixed: v[4],
                    rx_fixed: v[5],
                    papr_db: v[6],
                    drain_efficiency: v[7],
                })
            }
        }
    }

    fn from_profile(p: &RadioProfile) -> Self {
        RadioFile {
            preset: None,
            dac_intercept_w: Some(p.dac_intercept),
            dac_slope_w_per_msps: Some(p.dac_slope),
            adc_intercept_w: Some(p.adc_intercept),
            adc_slope_w_per_msps: Some(p.adc_slope),
            tx_fixed_w: Some(p.tx_fixed),
            rx_fixed_w: Some(p.rx_fixed),
            papr_db: Some(p.papr_db),
            drain_efficiency: Some(p.drain_efficiency),
        }
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text)?;
    let channels: Vec<Channel> = file
        .channels
        .iter()
        .map(|c| Channel { id: c.id, center_mhz: c.center_mhz, width_mhz: c.width_mhz })
        .collect();
    let channel_of = |id: u32| -> Result<usize, ScenarioError> {
        channels
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown channel id {id}")))
    };
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for n in &file.nodes {
        let mut list = match &n.channels {
            Some(ids) => ids.iter().map(|&id| channel_of(id)).collect::<Result<Vec<_>, _>>()?,
            None => (0..channels.len()).collect(),
        };
        let before = list.len();
        list.sort_unstable();
        list.dedup();
        if list.len() != before {
            return invalid(format!("node {} lists a channel twice", n.id));
        }
        nodes.push(Node { id: n.id, position: [n.x_m, n.y_m], channels: list });
    }
    let node_of = |id: u32| -> Result<usize, ScenarioError> {
        nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown node id {id}")))
    };
    let mut links = Vec::with_capacity(file.links.len());
    for l in &file.links {
        let mut gains = vec![None; channels.len()];
        for &(cid, db) in &l.gains_db {
            let m = channel_of(cid)?;
            if gains[m].is_some() {
                return invalid(format!("link {} -> {} repeats channel {cid}", l.tx, l.rx));
            }
            if !db.is_finite() {
                return invalid(format!("link {} -> {} has a non-finite gain", l.tx, l.rx));
            }
            gains[m] = Some(10f64.powf(db / 10.0));
        }
        links.push(Link { tx: node_of(l.tx)?, rx: node_of(l.rx)?, gains });
    }
    let sessions = file
        .sessions
        .iter()
        .map(|s| {
            Ok(Session { source: node_of(s.source)?, dest: node_of(s.dest)?, rate_mbps: s.rate_mbps })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let limits = Limits {
        n0: file.limits.n0_w_per_hz,
        p_i: file.limits.p_i_w,
        p_max: file.limits.p_max_w,
        big_m: file.limits.big_m_w,
        q_max_mhz: file.limits.q_max_mhz,
    };
    let radio = file.radio.into_profile()?;
    Scenario::new(nodes, links, channels, sessions, limits, radio, file.seed)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Renders a scenario in the on-disk format (gains in dB, radio spelled out).
pub fn render_scenario(s: &Scenario) -> Result<String, ScenarioError> {
    let file = ScenarioFile {
        seed: s.seed,
        limits: LimitsFile {
            n0_w_per_hz: s.limits.n0,
            p_i_w: s.limits.p_i,
            p_max_w: s.limits.p_max,
            big_m_w: s.limits.big_m,
            q_max_mhz: s.limits.q_max_mhz,
        },
        radio: RadioFile::from_profile(&s.radio),
        channels: s
            .channels
            .iter()
            .map(|c| ChannelFile { id: c.id, center_mhz: c.center_mhz, width_mhz: c.width_mhz })
            .collect(),
        nodes: s
            .nodes
            .iter()
            .map(|n| NodeFile {
                id: n.id,
                x_m: n.position[0],
                y_m: n.position[1],
                channels: Some(n.channels.iter().map(|&m| s.channels[m].id).collect()),
            })
            .collect(),
        links: s
            .links
            .iter()
            .map(|l| LinkFile {
                tx: s.nodes[l.tx].id,
                rx: s.nodes[l.rx].id,
                gains_db: l
                    .gains
                    .iter()
                    .enumerate()
                    .filter_map(|(m, g)| g.map(|g| (s.channels[m].id, 10.0 * g.log10())))
                    .collect(),
            })
            .collect(),
        sessions: s
            .sessions
            .iter()
            .map(|x| SessionFile {
                source: s.nodes[x.source].id,
                dest: s.nodes[x.dest].id,
                rate_mbps: x.rate_mbps,
            })
            .collect(),
    };
    Ok(toml::to_string(&file)?)
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    std::fs::write(path, render_scenario(s)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Generator

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// `cols x rows` lattice numbered column by column, so the first column
    /// holds nodes `1..=rows`.
    Grid { cols: usize, rows: usize, spacing_m: f64 },
    /// Uniformly random positions in a rectangle.
    Uniform { count: usize, width_m: f64, height_m: f64 },
    Explicit(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub layout: Layout,
    /// Only node pairs at most this far apart get a link; `None` links all.
    pub link_range_m: Option<f64>,
    pub path_loss_exponent: f64,
    /// Peak-to-peak spread of the uniform per-channel fluctuation (dB).
    pub shadowing_db: f64,
    pub channels: Vec<Channel>,
    /// `(source, dest, Mbps)` with 1-based node ids.
    pub sessions: Vec<(u32, u32, f64)>,
    pub limits: Limits,
    pub radio: RadioProfile,
    pub seed: u64,
}

/// Draws a scenario: `g = d^-n * 10^(X/10)` with `X ~ U[-s/2, s/2]` drawn
/// independently per ordered pair and channel.
pub fn generate_scenario(p: &GeneratorParams) -> Result<Scenario, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let positions: Vec<[f64; 2]> = match &p.layout {
        Layout::Grid { cols, rows, spacing_m } => (0..cols * rows)
            .map(|k| [(k / rows) as f64 * spacing_m, (k % rows) as f64 * spacing_m])
            .collect(),
        Layout::Uniform { count, width_m, height_m } => (0..*count)
            .map(|_| [rng.gen::<f64>() * width_m, rng.gen::<f64>() * height_m])
            .collect(),
        Layout::Explicit(v) => v.clone(),
    };
    let all: Vec<usize> = (0..p.channels.len()).collect();
    let nodes: Vec<Node> = positions
        .iter()
        .enumerate()
        .map(|(k, &position)| Node { id: k as u32 + 1, position, channels: all.clone() })
        .collect();
    let mut links = Vec::new();
    for i in 0..nodes.len() {
        for j in 0..nodes.len() {
            if i == j {
                continue;
            }
            let d = distance(nodes[i].position, nodes[j].position);
            if d == 0.0 {
                return Err(ScenarioError::DegenerateGeometry(nodes[i].id, nodes[j].id));
            }
            if p.link_range_m.is_some_and(|r| d > r) {
                continue;
            }
            let path = d.powf(-p.path_loss_exponent);
            let gains = p
                .channels
                .iter()
                .map(|_| {
                    let x = if p.shadowing_db > 0.0 {
                        rng.gen_range(-0.5 * p.shadowing_db..=0.5 * p.shadowing_db)
                    } else {
                        0.0
                    };
                    Some(path * 10f64.powf(x / 10.0))
                })
                .collect();
            links.push(Link { tx: i, rx: j, gains });
        }
    }
    let sessions = p
        .sessions
        .iter()
        .map(|&(s, d, r)| {
            let idx = |id: u32| {
                (id as usize)
                    .checked_sub(1)
                    .filter(|&k| k < nodes.len())
                    .ok_or_else(|| ScenarioError::Invalid(format!("session node {id} does not exist")))
            };
            Ok(Session { source: idx(s)?, dest: idx(d)?, rate_mbps: r })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    Scenario::new(nodes, links, p.channels.clone(), sessions, p.limits, p.radio, p.seed)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const TWO_NODE: &str = r#"
seed = 7

[limits]
n0_w_per_hz = 4e-21
p_i_w = 2.4e-15
p_max_w = 4.0
big_m_w = 4.0
q_max_mhz = 60.0

[radio]
preset = "high-slope"

[[channels]]
id = 1
center_mhz = 3.0
width_mhz = 6.0

[[channels]]
id = 2
center_mhz = 9.0
width_mhz = 6.0

[[nodes]]
id = 1
x_m = 0.0
y_m = 0.0

[[nodes]]
id = 2
x_m = 100.0
y_m = 0.0

[[links]]
tx = 1
rx = 2
gains_db = [[1, -60.0], [2, -63.0]]

[[sessions]]
source = 1
dest = 2
rate_mbps = 10.0
"#;

    #[test]
    fn minimal_file_loads() {
        let s = parse_scenario(TWO_NODE).unwrap();
        assert_eq!(s.links.len(), 1);
        assert_eq!(s.channels.len(), 2);
        assert!((s.gain(0, 0).unwrap() - 1e-6).abs() < 1e-18);
        assert!((s.gain(0, 1).unwrap() - 10f64.powf(-6.3)).abs() < 1e-18);
        assert_eq!(s.link_channels(0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(s.find_link(0, 1), Some(0));
        assert_eq!(s.find_link(1, 0), None);
        assert_eq!(s.cross_gain(1, 0, 0), 0.0);
    }

    #[test]
    fn overlapping_channels_are_rejected() {
        let text = TWO_NODE.replace("center_mhz = 9.0", "center_mhz = 7.0");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("channel overlap"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = TWO_NODE.replace("seed = 7", "seed = 7\ncolour = \"red\"");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Parse(_))));
        let text = TWO_NODE.replace("rate_mbps = 10.0", "rate_mbps = 10.0\nprio = 1");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn gain_outside_common_set_is_rejected() {
        let text = TWO_NODE.replace("y_m = 0.0\n\n[[nodes]]\nid = 2", "y_m = 0.0\nchannels = [1]\n\n[[nodes]]\nid = 2");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("outside the common set"), "{err}");
    }

    #[test]
    fn missing_gain_is_rejected() {
        let text = TWO_NODE.replace("gains_db = [[1, -60.0], [2, -63.0]]", "gains_db = [[1, -60.0]]");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("missing a gain"), "{err}");
    }

    #[test]
    fn session_to_unknown_node_is_rejected() {
        let text = TWO_NODE.replace("dest = 2", "dest = 9");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("unknown node id 9"), "{err}");
    }

    #[test]
    fn limits_invariants_are_checked() {
        let loud = TWO_NODE.replace("p_i_w = 2.4e-15", "p_i_w = 1e-12");
        assert!(parse_scenario(&loud).unwrap_err().to_string().contains("noise power"));
        let small_m = TWO_NODE.replace("big_m_w = 4.0", "big_m_w = 1.0");
        assert!(parse_scenario(&small_m).unwrap_err().to_string().contains("big_m"));
        let narrow = TWO_NODE.replace("q_max_mhz = 60.0", "q_max_mhz = 5.0");
        assert!(parse_scenario(&narrow).unwrap_err().to_string().contains("q_max"));
    }

    #[test]
    fn radio_preset_and_fields_are_exclusive() {
        let text = TWO_NODE.replace("preset = \"high-slope\"", "preset = \"high-slope\"\npapr_db = 8.0");
        assert!(parse_scenario(&text).unwrap_err().to_string().contains("not both"));
        let text = TWO_NODE.replace("preset = \"high-slope\"", "preset = \"turbo\"");
        assert!(parse_scenario(&text).unwrap_err().to_string().contains("unknown radio preset"));
    }

    #[test]
    fn wichita_plan_has_seven_channels() {
        let s = fixtures::wichita_twelve_node(1).unwrap();
        assert_eq!(s.channels.len(), 7);
        let ids: Vec<u32> = s.channels.iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![2, 5, 6, 17, 23, 24, 47]);
        let centers: Vec<f64> = s.channels.iter().map(|c| c.center_mhz).collect();
        assert_eq!(centers, vec![57.0, 79.0, 85.0, 491.0, 527.0, 533.0, 671.0]);
    }

    #[test]
    fn remap_matches_tv_index_set() {
        let plan = fixtures::wichita_channels();
        assert_eq!(remap_channel_indices(&plan), vec![9, 13, 14, 81, 87, 88, 111]);
        let one = [Channel { id: 1, center_mhz: 6.0, width_mhz: 6.0 }];
        assert_eq!(remap_channel_indices(&one), vec![1]);
        let contiguous = fixtures::contiguous_channels(3, 6.0, 3.0);
        assert_eq!(remap_channel_indices(&contiguous), vec![0, 1, 2]);
    }

    #[test]
    fn unit_distance_without_shadowing_has_unit_gain() {
        let params = GeneratorParams {
            layout: Layout::Explicit(vec![[0.0, 0.0], [1.0, 0.0]]),
            link_range_m: None,
            path_loss_exponent: 3.0,
            shadowing_db: 0.0,
            channels: fixtures::wichita_channels(),
            sessions: vec![(1, 2, 1.0)],
            limits: Limits::typical(6.0, 650.0),
            radio: RadioProfile::high_slope(),
            seed: 3,
        };
        let s = generate_scenario(&params).unwrap();
        assert_eq!(s.links.len(), 2);
        for link in &s.links {
            assert!(link.gains.iter().all(|g| *g == Some(1.0)));
        }
    }

    #[test]
    fn coincident_nodes_are_degenerate() {
        let params = GeneratorParams {
            layout: Layout::Explicit(vec![[5.0, 5.0], [5.0, 5.0]]),
            link_range_m: None,
            path_loss_exponent: 3.0,
            shadowing_db: 12.0,
            channels: fixtures::wichita_channels(),
            sessions: vec![],
            limits: Limits::typical(6.0, 650.0),
            radio: RadioProfile::high_slope(),
            seed: 3,
        };
        assert!(matches!(generate_scenario(&params), Err(ScenarioError::DegenerateGeometry(1, 2))));
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let a = fixtures::wichita_twelve_node(1).unwrap();
        let b = fixtures::wichita_twelve_node(1).unwrap();
        let c = fixtures::wichita_twelve_node(2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.links[0].gains, c.links[0].gains);
    }

    #[test]
    fn shadowing_stays_within_spread() {
        let s = fixtures::wichita_twelve_node(5).unwrap();
        for link in &s.links {
            let d = distance(s.nodes[link.tx].position, s.nodes[link.rx].position);
            let path = d.powf(-3.0);
            for g in link.gains.iter().flatten() {
                let db = 10.0 * (g / path).log10();
                assert!(db.abs() <= 6.0 + 1e-9, "{db}");
            }
        }
    }

    #[test]
    fn render_then_parse_round_trips() {
        let s = fixtures::wichita_twelve_node(4).unwrap();
        let back = parse_scenario(&render_scenario(&s).unwrap()).unwrap();
        assert_eq!(back.nodes, s.nodes);
        assert_eq!(back.channels, s.channels);
        assert_eq!(back.sessions, s.sessions);
        assert_eq!(back.limits, s.limits);
        assert_eq!(back.radio, s.radio);
        for (a, b) in back.links.iter().zip(&s.links) {
            assert_eq!((a.tx, a.rx), (b.tx, b.rx));
            for (ga, gb) in a.gains.iter().zip(&b.gains) {
                let (ga, gb) = (ga.unwrap(), gb.unwrap());
                assert!((ga - gb).abs() <= 1e-12 * gb);
            }
        }
    }
}
