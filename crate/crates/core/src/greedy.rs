//! Polynomial-time heuristic: shortest-path routing, greedy channel
//! assignment under the interference rule, then exact power allocation on
//! the chosen schedule. Also the two baselines it is compared against.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::allocation::{allocate, check_schedule, power_for_flow, prune_idle, AllocationError, SpanModel};
use crate::milp::{add_strengthening_rows, build_milp, MilpError, VariableMap};
use crate::power::{node_power, RadioProfile};
use crate::scenario::Scenario;
use crate::solution::{GreedyStats, Solution};
use crate::solver::{branch_and_bound, BnbLimits, BnbResult, BnbStatus};
use crate::span::{span_frequency, Schedule};

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("session {session} ({source_id} -> {dest_id}) has no route")]
    NoRoute { session: usize, source_id: u32, dest_id: u32 },
    #[error("link {tx} -> {rx} received no channel: {reason}")]
    Unserved { tx: u32, rx: u32, reason: Block },
    #[error("{0}")]
    Unsupported(String),
    #[error("rate {rate} Mbps needs {power} W on the best channel, above the cap")]
    PowerLimit { rate: f64, power: f64 },
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

/// Why a channel candidate was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    PowerCap,
    Bundle,
    HalfDuplex,
    Interference,
    NoImprovement,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Block::PowerCap => "power cap",
            Block::Bundle => "bundle limit",
            Block::HalfDuplex => "half-duplex conflict",
            Block::Interference => "interference",
            Block::NoImprovement => "no channel lowered system power",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingState {
    /// Links of each session's path, source first.
    pub paths: Vec<Vec<usize>>,
    /// `on_path[e][l]`.
    pub on_path: Vec<Vec<bool>>,
    /// Aggregate demand per link (Mbps).
    pub demand: Vec<f64>,
    /// Links with positive demand, ascending.
    pub active: Vec<usize>,
}

#[derive(PartialEq)]
struct Dist(f64, usize);
impl Eq for Dist {}
impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// One shortest path per session with link weight `1 / mean gain`.
pub fn initial_routes(scenario: &Scenario) -> Result<RoutingState, GreedyError> {
    let n = scenario.nodes.len();
    let weights: Vec<f64> = (0..scenario.links.len()).map(|e| 1.0 / scenario.mean_gain(e)).collect();
    let mut paths = Vec::new();
    for (l, s) in scenario.sessions.iter().enumerate() {
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[s.source] = 0.0;
        heap.push(Reverse(Dist(0.0, s.source)));
        while let Some(Reverse(Dist(d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in scenario.out_links(u) {
                let v = scenario.links[e].rx;
                let nd = d + weights[e];
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Some(e);
                    heap.push(Reverse(Dist(nd, v)));
                }
            }
        }
        if !dist[s.dest].is_finite() {
            return Err(GreedyError::NoRoute {
                session: l,
                source_id: scenario.nodes[s.source].id,
                dest_id: scenario.nodes[s.dest].id,
            });
        }
        let mut path = Vec::new();
        let mut v = s.dest;
        while let Some(e) = pred[v] {
            path.push(e);
            v = scenario.links[e].tx;
        }
        path.reverse();
        paths.push(path);
    }
    let mut on_path = vec![vec![false; scenario.sessions.len()]; scenario.links.len()];
    let mut demand = vec![0.0; scenario.links.len()];
    for (l, path) in paths.iter().enumerate() {
        for &e in path {
            on_path[e][l] = true;
            demand[e] += scenario.sessions[l].rate_mbps;
        }
    }
    let active = (0..scenario.links.len()).filter(|&e| demand[e] > 0.0).collect();
    Ok(RoutingState { paths, on_path, demand, active })
}

/// Result of the assignment loop before the final optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedySchedule {
    pub schedule: Schedule,
    /// Equal-split powers of the committed channels.
    pub powers: Vec<Vec<f64>>,
    pub stats: GreedyStats,
    /// System power after each commit.
    pub trace: Vec<f64>,
}

/// Whether assigning channel `m` at power `p` to link `e` is blocked by the
/// interference rule or a half-duplex conflict.
pub fn interference_check(
    scenario: &Scenario,
    schedule: &Schedule,
    powers: &[Vec<f64>],
    e: usize,
    m: usize,
    p: f64,
    scans: &mut usize,
) -> Option<Block> {
    let (a, b) = (scenario.links[e].tx, scenario.links[e].rx);
    if scenario.in_links(a).iter().any(|&k| schedule.get(k, m))
        || scenario.out_links(b).iter().any(|&k| schedule.get(k, m))
    {
        return Some(Block::HalfDuplex);
    }
    let limit = scenario.limits.p_i;
    for k in 0..scenario.links.len() {
        if k == e || !schedule.get(k, m) {
            continue;
        }
        *scans += 1;
        let (t, h) = (scenario.links[k].tx, scenario.links[k].rx);
        if h != b && p * scenario.cross_gain(a, h, m) > limit {
            return Some(Block::Interference);
        }
        if t != a && powers[k][m] * scenario.cross_gain(t, b, m) > limit {
            return Some(Block::Interference);
        }
    }
    None
}

struct Tracker<'a> {
    scenario: &'a Scenario,
    schedule: Schedule,
    powers: Vec<Vec<f64>>,
    node_power: Vec<f64>,
    unserved: usize,
}

impl<'a> Tracker<'a> {
    fn node_total(&self, i: usize, schedule: &Schedule, powers: &[Vec<f64>]) -> f64 {
        let s = self.scenario;
        let tx = schedule.tx_channels(s, i);
        let rx = schedule.rx_channels(s, i);
        let qt = span_frequency(tx.iter().map(|&m| &s.channels[m]));
        let qr = span_frequency(rx.iter().map(|&m| &s.channels[m]));
        let p: Vec<f64> = s.out_links(i).iter().flat_map(|&e| schedule.channels_of(e).into_iter().map(move |m| powers[e][m])).collect();
        node_power(&s.radio, qt, qr, !tx.is_empty(), !rx.is_empty(), &p)
            .expect("non-negative inputs")
            .total
    }

    fn total(&self) -> f64 {
        self.node_power.iter().sum()
    }
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1 - 1e-12 * b.1.abs())
}

/// Greedy channel assignment over the routed links.
pub fn greedy_schedule(scenario: &Scenario, routing: &RoutingState, seed: u64) -> Result<GreedySchedule, GreedyError> {
    let nm = scenario.channels.len();
    let noise = scenario.noise_w();
    let w = scenario.width_mhz();
    let p_cap = scenario.limits.p_max.min(scenario.limits.big_m);
    let q_max = scenario.limits.q_max_mhz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GreedyStats::default();
    let mut tr = Tracker {
        scenario,
        schedule: Schedule::empty(scenario),
        powers: vec![vec![0.0; nm]; scenario.links.len()],
        node_power: vec![0.0; scenario.nodes.len()],
        unserved: routing.active.len(),
    };
    let mut trace = Vec::new();
    let mut last_block = vec![Block::NoImprovement; scenario.links.len()];

    loop {
        let mut order = routing.active.clone();
        order.shuffle(&mut rng);
        let mut flag = 0;
        stats.passes += 1;
        for &e in &order {
            let link = &scenario.links[e];
            let current = (tr.unserved, tr.total());
            let assigned = tr.schedule.channels_of(e);
            let per_channel = routing.demand[e] / (assigned.len() + 1) as f64;
            let mut best: Option<((usize, f64), usize, Vec<f64>)> = None;
            for m in scenario.link_channels(e) {
                if tr.schedule.get(e, m) {
                    continue;
                }
                stats.candidate_evaluations += 1;
                let mut cand = assigned.clone();
                cand.push(m);
                let powers: Vec<f64> = cand
                    .iter()
                    .map(|&k| power_for_flow(noise, scenario.gain(e, k).expect("usable"), w, per_channel))
                    .collect();
                if powers.iter().any(|&p| p > p_cap) {
                    last_block[e] = Block::PowerCap;
                    continue;
                }
                let mut tx = tr.schedule.tx_channels(scenario, link.tx);
                tx.push(m);
                let mut rx = tr.schedule.rx_channels(scenario, link.rx);
                rx.push(m);
                if span_frequency(tx.iter().map(|&k| &scenario.channels[k])) > q_max + 1e-9
                    || span_frequency(rx.iter().map(|&k| &scenario.channels[k])) > q_max + 1e-9
                {
                    last_block[e] = Block::Bundle;
                    continue;
                }
                let p_new = *powers.last().expect("candidate included");
                if let Some(b) =
                    interference_check(scenario, &tr.schedule, &tr.powers, e, m, p_new, &mut stats.interference_scans)
                {
                    last_block[e] = b;
                    continue;
                }
                let mut sched = tr.schedule.clone();
                sched.set(e, m, true);
                let mut pw = tr.powers.clone();
                for (&k, &p) in cand.iter().zip(&powers) {
                    pw[e][k] = p;
                }
                let before = tr.node_power[link.tx] + tr.node_power[link.rx];
                let after = tr.node_total(link.tx, &sched, &pw) + tr.node_total(link.rx, &sched, &pw);
                let unserved = tr.unserved - usize::from(assigned.is_empty());
                let score = (unserved, current.1 - before + after);
                if best.as_ref().map_or(true, |(s, _, _)| better(score, *s)) {
                    best = Some((score, m, powers));
                }
            }
            match best {
                Some((score, m, powers)) if better(score, current) => {
                    tr.schedule.set(e, m, true);
                    let chans = tr.schedule.channels_of(e);
                    // `powers` follows assignment order: old channels, then m.
                    let mut order_chans = assigned.clone();
                    order_chans.push(m);
                    for (&k, &p) in order_chans.iter().zip(&powers) {
                        tr.powers[e][k] = p;
                    }
                    debug_assert_eq!(chans.len(), order_chans.len());
                    let (a, b) = (link.tx, link.rx);
                    tr.node_power[a] = tr.node_total(a, &tr.schedule, &tr.powers);
                    tr.node_power[b] = tr.node_total(b, &tr.schedule, &tr.powers);
                    if assigned.is_empty() {
                        tr.unserved -= 1;
                    }
                    stats.commits += 1;
                    trace.push(tr.total());
                }
                _ => flag += 1,
            }
        }
        if flag == routing.active.len() {
            break;
        }
    }
    if let Some(&e) = routing.active.iter().find(|&&e| tr.schedule.count(e) == 0) {
        let link = &scenario.links[e];
        return Err(GreedyError::Unserved {
            tx: scenario.nodes[link.tx].id,
            rx: scenario.nodes[link.rx].id,
            reason: last_block[e],
        });
    }
    Ok(GreedySchedule { schedule: tr.schedule, powers: tr.powers, stats, trace })
}

/// Equal-split flows of the routed sessions over each link's channels.
fn provisional_flows(scenario: &Scenario, routing: &RoutingState, schedule: &Schedule) -> Vec<Vec<Vec<f64>>> {
    let mut flows = vec![vec![vec![0.0; scenario.sessions.len()]; scenario.channels.len()]; scenario.links.len()];
    for (l, path) in routing.paths.iter().enumerate() {
        for &e in path {
            let chans = schedule.channels_of(e);
            for &m in &chans {
                flows[e][m][l] = scenario.sessions[l].rate_mbps / chans.len() as f64;
            }
        }
    }
    flows
}

/// Optimal flows and powers on the fixed greedy schedule; channels left
/// without flow are released. Falls back to the provisional allocation if
/// the fixed-schedule problem fails.
pub fn final_optimize(scenario: &Scenario, routing: &RoutingState, greedy: &GreedySchedule) -> Solution {
    let mut stats = greedy.stats;
    let sol = match allocate(scenario, &greedy.schedule) {
        Ok(alloc) => {
            let pruned = prune_idle(&greedy.schedule, &alloc);
            let (schedule, alloc) = if pruned != greedy.schedule {
                match allocate(scenario, &pruned) {
                    Ok(a) => (pruned, a),
                    Err(_) => (greedy.schedule.clone(), alloc),
                }
            } else {
                (pruned, alloc)
            };
            Solution::assemble(scenario, "greedy", schedule, alloc.flows, alloc.powers)
        }
        Err(err) => {
            log::warn!("fixed-schedule optimisation failed ({err}); keeping the provisional allocation");
            stats.fell_back = true;
            let flows = provisional_flows(scenario, routing, &greedy.schedule);
            Solution::assemble(scenario, "greedy", greedy.schedule.clone(), flows, greedy.powers.clone())
        }
    };
    Solution { greedy: Some(stats), ..sol }
}

/// Routing, greedy assignment and final optimisation.
pub fn greedy_sys_power_min(scenario: &Scenario, seed: u64) -> Result<Solution, GreedyError> {
    let routing = initial_routes(scenario)?;
    let sched = greedy_schedule(scenario, &routing, seed)?;
    Ok(final_optimize(scenario, &routing, &sched))
}

/// Transmit-power-only baseline: the MILP with every circuit term removed,
/// then every non-conflicting channel opened on the used links and powers
/// water-filled over them. The result is costed with the true radio.
pub fn tx_power_min(scenario: &Scenario, limits: &BnbLimits) -> Result<Solution, GreedyError> {
    let bare = scenario.with_radio(RadioProfile::without_circuit(&scenario.radio));
    let (mut lp, vars) = build_milp(&bare).map_err(GreedyError::Milp)?;
    add_strengthening_rows(&mut lp, &vars, &bare);
    let result = branch_and_bound(&lp, &vars.binaries(), limits).map_err(MilpError::from)?;
    let Some(x) = result.x.clone() else {
        let boxed = Box::new(result.clone());
        return Err(GreedyError::Milp(if result.status == BnbStatus::Infeasible {
            MilpError::Infeasible(boxed)
        } else {
            MilpError::NoIncumbent(boxed)
        }));
    };
    let base = vars.schedule_from(&bare, &x);
    let alloc = allocate(&bare, &base)?;
    let used_links = carrying_links(&vars, &x, scenario);
    let expanded = expand(scenario, &base, &alloc.powers, &used_links);
    let alloc = allocate(&bare, &expanded)?;
    let pruned = prune_idle(&expanded, &alloc);
    let alloc = allocate(&bare, &pruned)?;
    let mut sol = Solution::assemble(scenario, "txmin", pruned, alloc.flows, alloc.powers);
    sol.bnb = Some(BnbResult { x: None, ..result });
    Ok(sol)
}

fn carrying_links(vars: &VariableMap, x: &[f64], scenario: &Scenario) -> Vec<usize> {
    let mut links: Vec<usize> = vars
        .link_channels
        .iter()
        .filter(|v| v.flows.iter().flatten().any(|&f| x[f] > 1e-9))
        .map(|v| v.link)
        .collect();
    links.sort_unstable();
    links.dedup();
    links.retain(|&e| e < scenario.links.len());
    links
}

/// Adds every channel of `links` that keeps the schedule valid under the
/// current powers.
fn expand(scenario: &Scenario, base: &Schedule, powers: &[Vec<f64>], links: &[usize]) -> Schedule {
    let mut sched = base.clone();
    for &e in links {
        let le = &scenario.links[e];
        for m in scenario.link_channels(e).collect::<Vec<_>>() {
            if sched.get(e, m) {
                continue;
            }
            let conflict = sched.pairs().any(|(k, mk)| {
                if mk != m || k == e {
                    return false;
                }
                let lk = &scenario.links[k];
                if lk.tx == le.tx || lk.tx == le.rx || lk.rx == le.tx || lk.rx == le.rx {
                    return lk.rx == le.tx || lk.tx == le.rx;
                }
                powers[k][m] * scenario.cross_gain(lk.tx, le.rx, m) > scenario.limits.p_i
            });
            if conflict {
                continue;
            }
            sched.set(e, m, true);
            if check_schedule(scenario, &sched, SpanModel::Frequency).is_err() {
                sched.set(e, m, false);
            }
        }
    }
    sched
}

/// Point-to-point baseline: the single best-gain channel (lowest index on
/// ties) at the power that exactly meets the rate.
pub fn best_channel_min(scenario: &Scenario) -> Result<Solution, GreedyError> {
    if scenario.links.len() != 1 || scenario.sessions.len() != 1 {
        return Err(GreedyError::Unsupported(
            "best-channel baseline needs exactly one link and one session".into(),
        ));
    }
    let s = &scenario.sessions[0];
    if scenario.links[0].tx != s.source || scenario.links[0].rx != s.dest {
        return Err(GreedyError::Unsupported("the session must run over the only link".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for m in scenario.link_channels(0) {
        let g = scenario.gain(0, m).expect("usable");
        if best.map_or(true, |(_, bg)| g > bg) {
            best = Some((m, g));
        }
    }
    let (m, g) = best.expect("validated links have a channel");
    let p = power_for_flow(scenario.noise_w(), g, scenario.width_mhz(), s.rate_mbps);
    if p > scenario.limits.p_max.min(scenario.limits.big_m) {
        return Err(GreedyError::PowerLimit { rate: s.rate_mbps, power: p });
    }
    let mut schedule = Schedule::empty(scenario);
    schedule.set(0, m, true);
    let mut flows = vec![vec![vec![0.0; 1]; scenario.channels.len()]; 1];
    flows[0][m][0] = s.rate_mbps;
    let mut powers = vec![vec![0.0; scenario.channels.len()]; 1];
    powers[0][m] = p;
    Ok(Solution::assemble(scenario, "bestchan", schedule, flows, powers))
}
