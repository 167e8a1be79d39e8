//! Mixed-integer model of joint scheduling, routing and power control, and
//! its branch-and-bound solution.
//!
//! Transmit powers are not variables: with `s = g p / (N0 W)` the power of a
//! link-channel is `kappa * s` with `kappa = N0 W / g`, so every power term
//! is written through `s`. Capacity `W log2(1 + s)` is modelled as
//! `(W / ln 2) c` with `c` bounded by the hull of `ln(1 + s)`.

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{
    self, add_flow_rows, check_schedule, evaluate_schedule, exp2_m1, link_rate_cap, power_caps, prune_idle,
    AllocationError, SpanModel,
};
use crate::relaxation::{build_hull, linearize_span_constraints, RelaxationError, MAX_SNR};
use crate::scenario::Scenario;
use crate::solution::Solution;
use crate::solver::bnb::relative_gap;
use crate::solver::{branch_and_bound_with, BnbHooks, BnbLimits, BnbResult, BnbStatus, LinearProgram, LpError, Sense};
use crate::span::Schedule;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error("no feasible schedule exists")]
    Infeasible(Box<BnbResult>),
    #[error("search stopped ({:?}) before any feasible schedule was found", .0.status)]
    NoIncumbent(Box<BnbResult>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepairError {
    #[error("repaired power {power} W on link {link} channel {channel} exceeds the cap {cap} W")]
    PowerCap { link: usize, channel: usize, power: f64, cap: f64 },
    #[error("repaired power on link {link} channel {channel} interferes at node index {victim}")]
    Interference { link: usize, channel: usize, victim: usize },
}

/// Model handles of one link-channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannelVars {
    pub link: usize,
    pub channel: usize,
    pub x: usize,
    pub s: usize,
    pub c: usize,
    /// Per session; `None` where the session may not use the link.
    pub flows: Vec<Option<usize>>,
    pub s_hi: f64,
    /// `N0 W / g`, watts per unit SNR.
    pub kappa: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeVars {
    /// Per channel, present where the node has an outgoing link-channel.
    pub xt: Vec<Option<usize>>,
    pub xr: Vec<Option<usize>>,
    pub qt: Option<usize>,
    pub qr: Option<usize>,
    pub a1: Option<usize>,
    pub b1: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    pub link_channels: Vec<LinkChannelVars>,
    pub by_pair: BTreeMap<(usize, usize), usize>,
    pub nodes: Vec<NodeVars>,
    pub p_tot: usize,
}

impl VariableMap {
    pub fn binaries(&self) -> Vec<usize> {
        self.link_channels.iter().map(|v| v.x).collect()
    }

    pub fn schedule_from(&self, scenario: &Scenario, x: &[f64]) -> Schedule {
        let mut s = Schedule::empty(scenario);
        for v in &self.link_channels {
            if x[v.x] > 0.5 {
                s.set(v.link, v.channel, true);
            }
        }
        s
    }

    /// A point with the binaries of `schedule` set and everything else zero.
    pub fn binary_point(&self, num_vars: usize, schedule: &Schedule) -> Vec<f64> {
        let mut x = vec![0.0; num_vars];
        for v in &self.link_channels {
            if schedule.get(v.link, v.channel) {
                x[v.x] = 1.0;
            }
        }
        x
    }
}

/// Row count of [`build_milp`] for a complete digraph on `n` nodes where
/// every node has all `m` channels, every ordered pair of disjoint links
/// interferes on every channel, and there are `l` sessions.
pub fn expected_row_count(n: usize, m: usize, l: usize) -> usize {
    let e = n * (n - 1);
    let disjoint_pairs = n * (n - 1) * n.saturating_sub(2) * n.saturating_sub(3);
    8 * e * m + 3 * n * m + 2 * n * m * m + l * n + m * disjoint_pairs + 1
}

/// Builds the MILP: minimise total power subject to half-duplex,
/// interference, power/schedule coupling, demand and conservation, capacity
/// (through the hull), fixed power, index-linear span and bundle rows.
pub fn build_milp(scenario: &Scenario) -> Result<(LinearProgram, VariableMap), MilpError> {
    let radio = &scenario.radio;
    let w = scenario.width_mhz();
    let noise = scenario.noise_w();
    let lim = &scenario.limits;
    let p_cap = lim.p_max.min(lim.big_m);
    let idx = scenario.model_indices();
    let guard = idx.iter().copied().max().unwrap_or(1).max(1);
    let cap_factor = w / std::f64::consts::LN_2;
    let nm = scenario.channels.len();

    let mut lp = LinearProgram::new();
    let mut lcs = Vec::new();
    let mut by_pair = BTreeMap::new();
    for e in 0..scenario.links.len() {
        let rate_cap = link_rate_cap(scenario, e);
        for m in scenario.link_channels(e).collect::<Vec<_>>() {
            let g = scenario.gain(e, m).expect("usable channel has a gain");
            let mut s_hi = (g * p_cap / noise).min(MAX_SNR);
            if rate_cap > 0.0 {
                s_hi = s_hi.min(exp2_m1(rate_cap / w));
            }
            let x = lp.add_var(format!("x[{e},{m}]"), 0.0, 1.0, 0.0);
            let s = lp.add_var(format!("s[{e},{m}]"), 0.0, s_hi, 0.0);
            let c = lp.add_var(format!("c[{e},{m}]"), 0.0, s_hi.ln_1p(), 0.0);
            let flows = scenario
                .sessions
                .iter()
                .enumerate()
                .map(|(l, sess)| {
                    scenario
                        .flow_allowed(e, l)
                        .then(|| lp.add_var(format!("f[{e},{m},{l}]"), 0.0, sess.rate_mbps, 0.0))
                })
                .collect();
            by_pair.insert((e, m), lcs.len());
            lcs.push(LinkChannelVars { link: e, channel: m, x, s, c, flows, s_hi, kappa: noise / g });
        }
    }

    for v in &lcs {
        lp.add_row(vec![(v.s, 1.0), (v.x, -v.s_hi)], Sense::Le, 0.0);
        let mut cap: Vec<(usize, f64)> = v.flows.iter().flatten().map(|&f| (f, 1.0)).collect();
        cap.push((v.c, -cap_factor));
        lp.add_row(cap, Sense::Le, 0.0);
        let hull = build_hull(0.0, v.s_hi)?;
        for r in hull.rows {
            lp.add_row(vec![(v.c, r.coef_c), (v.s, r.coef_s)], r.sense, r.rhs);
        }
    }

    let mut nodes = vec![NodeVars::default(); scenario.nodes.len()];
    let (alpha1, alpha2, beta1, beta2) = (radio.alpha1(), radio.alpha2(), radio.beta1(), radio.beta2());
    let mut p_tot_terms = Vec::new();
    for (i, nv) in nodes.iter_mut().enumerate() {
        nv.xt = vec![None; nm];
        nv.xr = vec![None; nm];
        for m in 0..nm {
            let outs: Vec<usize> = scenario.out_links(i).iter().filter_map(|&e| by_pair.get(&(e, m)).copied()).collect();
            let ins: Vec<usize> = scenario.in_links(i).iter().filter_map(|&e| by_pair.get(&(e, m)).copied()).collect();
            if !outs.is_empty() {
                let xt = lp.add_var(format!("xt[{i},{m}]"), 0.0, 1.0, 0.0);
                for k in outs {
                    lp.add_row(vec![(xt, 1.0), (lcs[k].x, -1.0)], Sense::Ge, 0.0);
                }
                nv.xt[m] = Some(xt);
            }
            if !ins.is_empty() {
                let xr = lp.add_var(format!("xr[{i},{m}]"), 0.0, 1.0, 0.0);
                for k in ins {
                    lp.add_row(vec![(xr, 1.0), (lcs[k].x, -1.0)], Sense::Ge, 0.0);
                }
                nv.xr[m] = Some(xr);
            }
            let hd: Vec<(usize, f64)> = [nv.xt[m], nv.xr[m]].into_iter().flatten().map(|v| (v, 1.0)).collect();
            if !hd.is_empty() {
                lp.add_row(hd, Sense::Le, 1.0);
            }
        }
        for (dir, chans) in [("t", nv.xt.clone()), ("r", nv.xr.clone())] {
            let active: Vec<(usize, usize)> =
                chans.iter().enumerate().filter_map(|(m, v)| v.map(|v| (m, v))).collect();
            if active.is_empty() {
                continue;
            }
            let q = lp.add_var(format!("q{dir}[{i}]"), 0.0, lim.q_max_mhz, 0.0);
            let indices: Vec<i64> = active.iter().map(|&(m, _)| idx[m]).collect();
            for row in linearize_span_constraints(&indices, guard, w) {
                let mut coefs = vec![(q, 1.0)];
                coefs.extend(row.x_coefs.iter().map(|&(k, a)| (active[k].1, a)));
                lp.add_row(coefs, Sense::Ge, row.rhs);
            }
            let (fixed, slope) = if dir == "t" { (alpha1, alpha2) } else { (beta1, beta2) };
            let f = lp.add_var(format!("{}[{i}]", if dir == "t" { "a1" } else { "b1" }), 0.0, fixed, 0.0);
            for &(_, xv) in &active {
                lp.add_row(vec![(f, 1.0), (xv, -fixed)], Sense::Ge, 0.0);
            }
            p_tot_terms.push((f, -1.0));
            p_tot_terms.push((q, -2.0 * slope));
            if dir == "t" {
                nv.qt = Some(q);
                nv.a1 = Some(f);
            } else {
                nv.qr = Some(q);
                nv.b1 = Some(f);
            }
        }
    }

    let pairs: Vec<(usize, usize)> = lcs.iter().map(|v| (v.link, v.channel)).collect();
    let fvar: Vec<Vec<Option<usize>>> = lcs.iter().map(|v| v.flows.clone()).collect();
    if let Some(l) = add_flow_rows(&mut lp, scenario, &pairs, &fvar, true) {
        log::warn!("session {l} has no usable link at its source or destination; the model is infeasible");
    }

    // x_e = 1 caps every disjoint co-channel transmitter k at P_I / g(k -> rx_e).
    for ve in &lcs {
        let le = &scenario.links[ve.link];
        for vk in &lcs {
            if vk.channel != ve.channel || vk.link == ve.link {
                continue;
            }
            let lk = &scenario.links[vk.link];
            if lk.tx == le.tx || lk.tx == le.rx || lk.rx == le.tx || lk.rx == le.rx {
                continue;
            }
            let g = scenario.cross_gain(lk.tx, le.rx, ve.channel);
            if g <= 0.0 {
                continue;
            }
            let u = p_cap.min(vk.kappa * vk.s_hi);
            let coef = u - lim.p_i / g;
            if coef <= 0.0 {
                continue;
            }
            lp.add_row(vec![(vk.s, 1.0), (ve.x, coef / vk.kappa)], Sense::Le, u / vk.kappa);
        }
    }

    let k_pa = radio.k_pa();
    let p_tot = lp.add_var("P_tot", 0.0, f64::INFINITY, 1.0);
    let mut row = vec![(p_tot, 1.0)];
    row.extend(p_tot_terms);
    row.extend(lcs.iter().map(|v| (v.s, -k_pa * v.kappa)));
    lp.add_row(row, Sense::Ge, 0.0);

    Ok((lp, VariableMap { link_channels: lcs, by_pair, nodes, p_tot }))
}

/// Cuts that leave the optimum unchanged but tighten the relaxation: flow
/// on a link-channel is bounded by the link's demand times its binary, and
/// each session's throughput at a node (at most its rate once circulations
/// are cancelled) pays the node's fixed circuit power and one channel of
/// span in proportion.
pub fn add_strengthening_rows(lp: &mut LinearProgram, vars: &VariableMap, scenario: &Scenario) {
    for v in &vars.link_channels {
        let rate_cap = link_rate_cap(scenario, v.link);
        if rate_cap <= 0.0 {
            continue;
        }
        let mut row: Vec<(usize, f64)> = v.flows.iter().flatten().map(|&f| (f, 1.0)).collect();
        row.push((v.x, -rate_cap));
        lp.add_row(row, Sense::Le, 0.0);
    }
    let radio = &scenario.radio;
    for (i, nv) in vars.nodes.iter().enumerate() {
        for (fixed, act, q, outgoing) in [(radio.alpha1(), nv.a1, nv.qt, true), (radio.beta1(), nv.b1, nv.qr, false)] {
            let (Some(act), Some(q)) = (act, q) else { continue };
            if fixed <= 0.0 {
                continue;
            }
            // an active converter spans at least one channel
            lp.add_row(vec![(q, fixed), (act, -scenario.width_mhz())], Sense::Ge, 0.0);
            for (l, sess) in scenario.sessions.iter().enumerate() {
                let mut row: Vec<(usize, f64)> = vars
                    .link_channels
                    .iter()
                    .filter(|v| {
                        let link = &scenario.links[v.link];
                        if outgoing { link.tx == i } else { link.rx == i }
                    })
                    .filter_map(|v| v.flows[l])
                    .map(|f| (f, fixed))
                    .collect();
                if row.is_empty() {
                    continue;
                }
                row.push((act, -sess.rate_mbps));
                lp.add_row(row, Sense::Le, 0.0);
            }
        }
    }
}

/// How integral nodes are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafMode {
    /// Integral nodes are costed by the exact fixed-schedule optimum, so the
    /// search is exact up to the gap limit.
    #[default]
    Exact,
    /// The relaxation's own value is used and powers are repaired afterwards.
    Relaxed,
}

#[derive(Debug, Clone, Default)]
pub struct BnbOptions {
    pub limits: BnbLimits,
    pub mode: LeafMode,
    pub warm_start: Option<Schedule>,
}

impl BnbOptions {
    pub fn with_gap(gap: f64) -> Self {
        Self { limits: BnbLimits { gap, ..Default::default() }, ..Default::default() }
    }

    pub fn time_limit(mut self, t: Duration) -> Self {
        self.limits.time_limit = Some(t);
        self
    }
}

/// Cost of a schedule as the MILP measures it, or `None` when infeasible.
/// Frequency spans must also respect the bundle limit.
fn model_cost(scenario: &Scenario, schedule: &Schedule) -> Option<f64> {
    check_schedule(scenario, schedule, SpanModel::Frequency).ok()?;
    evaluate_schedule(scenario, schedule, SpanModel::Index).ok().map(|(v, _)| v)
}

pub fn solve_bnb(scenario: &Scenario, options: &BnbOptions) -> Result<Solution, MilpError> {
    let (mut lp, vars) = build_milp(scenario)?;
    add_strengthening_rows(&mut lp, &vars, scenario);
    let binaries = vars.binaries();
    let mut cache: HashMap<Schedule, Option<f64>> = HashMap::new();
    let warm = match (&options.warm_start, options.mode) {
        (Some(s), LeafMode::Exact) => {
            model_cost(scenario, s).map(|v| (v, vars.binary_point(lp.num_vars(), s)))
        }
        _ => None,
    };
    let hooks = match options.mode {
        LeafMode::Exact => BnbHooks {
            warm_start: warm,
            leaf: Some(Box::new(|x: &[f64]| {
                let sched = vars.schedule_from(scenario, x);
                *cache.entry(sched.clone()).or_insert_with(|| model_cost(scenario, &sched))
            })),
        },
        LeafMode::Relaxed => BnbHooks::default(),
    };
    let mut result = branch_and_bound_with(&lp, &binaries, &options.limits, hooks)?;
    log::info!(
        "branch-and-bound: {:?}, incumbent {:?}, bound {:.6}, {} nodes",
        result.status,
        result.incumbent,
        result.lower_bound,
        result.nodes
    );
    let Some(x) = result.x.clone() else {
        return Err(if result.status == BnbStatus::Infeasible {
            MilpError::Infeasible(Box::new(result))
        } else {
            MilpError::NoIncumbent(Box::new(result))
        });
    };
    let schedule = vars.schedule_from(scenario, &x);
    let mut sol = match options.mode {
        LeafMode::Exact => {
            let (mut value, mut alloc) = evaluate_schedule(scenario, &schedule, SpanModel::Index)?;
            let mut schedule = schedule;
            let pruned = prune_idle(&schedule, &alloc);
            if pruned != schedule {
                if let Some((v, a)) = evaluate_schedule(scenario, &pruned, SpanModel::Index)
                    .ok()
                    .filter(|(v, _)| *v <= value)
                    .filter(|_| check_schedule(scenario, &pruned, SpanModel::Frequency).is_ok())
                {
                    value = v;
                    alloc = a;
                    schedule = pruned;
                }
            }
            let powers = repair_powers(&alloc.flows, &schedule, scenario)?;
            result.incumbent = Some(value);
            result.lower_bound = result.lower_bound.min(value);
            result.gap = relative_gap(value, result.lower_bound);
            let mut sol = Solution::assemble(scenario, "bnb", schedule, alloc.flows, powers);
            sol.model_objective = Some(value);
            sol
        }
        LeafMode::Relaxed => {
            let mut flows = vec![vec![vec![0.0; scenario.sessions.len()]; scenario.channels.len()]; scenario.links.len()];
            for v in &vars.link_channels {
                if !schedule.get(v.link, v.channel) {
                    continue;
                }
                for (l, f) in v.flows.iter().enumerate() {
                    if let Some(f) = f {
                        let val = x[*f];
                        flows[v.link][v.channel][l] = if val > allocation::IDLE_FLOW_MBPS { val } else { 0.0 };
                    }
                }
            }
            let powers = repair_powers(&flows, &schedule, scenario)?;
            let mut sol = Solution::assemble(scenario, "bnb", schedule, flows, powers);
            sol.model_objective = result.incumbent;
            sol
        }
    };
    sol.bnb = Some(result);
    Ok(sol)
}

/// Powers at which every scheduled channel's capacity equals its aggregate
/// flow: `p = (N0 W / g)(2^(F/W) - 1)`.
pub fn repair_powers(
    flows: &[Vec<Vec<f64>>],
    schedule: &Schedule,
    scenario: &Scenario,
) -> Result<Vec<Vec<f64>>, RepairError> {
    let noise = scenario.noise_w();
    let w = scenario.width_mhz();
    let mut powers = vec![vec![0.0; scenario.channels.len()]; scenario.links.len()];
    for (e, m) in schedule.pairs() {
        let f: f64 = flows[e][m].iter().sum();
        let g = scenario.gain(e, m).expect("scheduled channel is usable");
        powers[e][m] = allocation::power_for_flow(noise, g, w, f);
    }
    let caps = power_caps(scenario, schedule);
    let base = scenario.limits.p_max.min(scenario.limits.big_m);
    const SLACK: f64 = 1e-9;
    for (e, m) in schedule.pairs() {
        let p = powers[e][m];
        if p > base * (1.0 + SLACK) {
            return Err(RepairError::PowerCap { link: e, channel: m, power: p, cap: base });
        }
        if p > caps[e][m] * (1.0 + SLACK) {
            let victim = schedule
                .pairs()
                .filter(|&(k, mk)| mk == m && k != e)
                .map(|(k, _)| scenario.links[k].rx)
                .find(|&rx| p * scenario.cross_gain(scenario.links[e].tx, rx, m) > scenario.limits.p_i * (1.0 + SLACK))
                .unwrap_or(usize::MAX);
            return Err(RepairError::Interference { link: e, channel: m, victim });
        }
        powers[e][m] = p.min(caps[e][m]);
    }
    Ok(powers)
}
