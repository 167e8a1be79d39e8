//! Exact flow and power allocation for a fixed schedule.
//!
//! With the schedule frozen, circuit power is constant and the remaining
//! problem is a separable convex program in the per-channel aggregate flows
//! `F`: minimise `sum k_pa (N0 W / g)(2^(F/W) - 1)` subject to routing and
//! the power caps implied by the interference rule. It is solved by outer
//! linearisation (tangent cuts on the exponential cost) until the cut model
//! and the true cost agree.

use thiserror::Error;

use crate::power::{node_power, PowerBreakdown};
use crate::scenario::Scenario;
use crate::solver::{solve_lp, LinearProgram, LpError, LpOutcome, Sense};
use crate::span::{span_frequency, span_index, Direction, Schedule};

const MAX_ROUNDS: usize = 400;
const REL_TOL: f64 = 1e-9;
const STALL_ROUNDS: usize = 10;
/// Aggregate flow (Mbps) below which a scheduled channel counts as unused.
pub const IDLE_FLOW_MBPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("node {node} transmits and receives on channel {channel}")]
    HalfDuplex { node: u32, channel: u32 },
    #[error("node {node} {dir:?} span {span_mhz} MHz exceeds the bundle limit")]
    Bundle { node: u32, dir: Direction, span_mhz: f64 },
    #[error("session {0} cannot be routed over the scheduled channels")]
    Unroutable(usize),
    #[error("schedule cannot carry the demands within the power limits")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// How node spans are measured when costing a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanModel {
    /// Outer channel edges.
    Frequency,
    /// `W (max - min + 1)` over remapped indices, as in the MILP.
    Index,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `flows[e][m][l]` (Mbps).
    pub flows: Vec<Vec<Vec<f64>>>,
    /// `powers[e][m]` (W).
    pub powers: Vec<Vec<f64>>,
    /// `k_pa * sum(p)`.
    pub rf_cost: f64,
}

impl Allocation {
    pub fn aggregate(&self, e: usize, m: usize) -> f64 {
        self.flows[e][m].iter().sum()
    }
}

/// `(N0 W / g)(2^(F/W) - 1)`, the power at which capacity equals `F`.
pub fn power_for_flow(noise_w: f64, gain: f64, width_mhz: f64, flow_mbps: f64) -> f64 {
    noise_w / gain * exp2_m1(flow_mbps / width_mhz)
}

/// `2^y - 1` without cancellation for small `y`.
pub fn exp2_m1(y: f64) -> f64 {
    (y * std::f64::consts::LN_2).exp_m1()
}

/// Capacity (Mbps) of a channel at power `p`.
pub fn capacity_mbps(noise_w: f64, gain: f64, width_mhz: f64, p: f64) -> f64 {
    width_mhz * (gain * p / noise_w).ln_1p() / std::f64::consts::LN_2
}

/// Largest power each scheduled link-channel may use: `min(P_max, A)` and
/// `P_I / g` towards the receiver of every co-channel link with disjoint
/// endpoints.
pub fn power_caps(scenario: &Scenario, schedule: &Schedule) -> Vec<Vec<f64>> {
    let base = scenario.limits.p_max.min(scenario.limits.big_m);
    let mut caps = vec![vec![0.0; scenario.channels.len()]; scenario.links.len()];
    let pairs: Vec<(usize, usize)> = schedule.pairs().collect();
    for &(e, m) in &pairs {
        let le = &scenario.links[e];
        let mut cap = base;
        for &(k, mk) in &pairs {
            if mk != m || k == e {
                continue;
            }
            let lk = &scenario.links[k];
            if lk.tx == le.tx || lk.tx == le.rx || lk.rx == le.tx || lk.rx == le.rx {
                continue;
            }
            let g = scenario.cross_gain(le.tx, lk.rx, m);
            if g > 0.0 {
                cap = cap.min(scenario.limits.p_i / g);
            }
        }
        caps[e][m] = cap;
    }
    caps
}

/// Sum of the demands of sessions that may use link `e`.
pub fn link_rate_cap(scenario: &Scenario, e: usize) -> f64 {
    (0..scenario.sessions.len())
        .filter(|&l| scenario.flow_allowed(e, l))
        .map(|l| scenario.sessions[l].rate_mbps)
        .sum()
}

/// Adds demand and conservation rows for every session. `pairs` lists the
/// link-channels carrying flow and `fvar[k][l]` the flow variable of
/// session `l` on `pairs[k]`. Returns the session whose source or
/// destination has no usable link-channel, if any.
pub(crate) fn add_flow_rows(
    lp: &mut LinearProgram,
    scenario: &Scenario,
    pairs: &[(usize, usize)],
    fvar: &[Vec<Option<usize>>],
    keep_empty: bool,
) -> Option<usize> {
    let mut stranded = None;
    for (l, s) in scenario.sessions.iter().enumerate() {
        for node in 0..scenario.nodes.len() {
            let mut coefs = Vec::new();
            for (k, &(e, _)) in pairs.iter().enumerate() {
                let Some(v) = fvar[k][l] else { continue };
                let link = &scenario.links[e];
                if node == s.source {
                    if link.tx == node {
                        coefs.push((v, 1.0));
                    }
                } else if node == s.dest {
                    if link.rx == node {
                        coefs.push((v, 1.0));
                    }
                } else if link.rx == node {
                    coefs.push((v, 1.0));
                } else if link.tx == node {
                    coefs.push((v, -1.0));
                }
            }
            let endpoint = node == s.source || node == s.dest;
            if endpoint && coefs.is_empty() {
                stranded.get_or_insert(l);
            }
            if coefs.is_empty() && !keep_empty {
                continue;
            }
            if endpoint {
                lp.add_row(coefs, Sense::Ge, s.rate_mbps);
            } else {
                lp.add_row(coefs, Sense::Eq, 0.0);
            }
        }
    }
    stranded
}

/// Minimum-RF flows and powers for `schedule`.
pub fn allocate(scenario: &Scenario, schedule: &Schedule) -> Result<Allocation, AllocationError> {
    let pairs: Vec<(usize, usize)> = schedule.pairs().collect();
    let nl = scenario.sessions.len();
    let noise = scenario.noise_w();
    let w = scenario.width_mhz();
    let k_pa = scenario.radio.k_pa();
    let caps = power_caps(scenario, schedule);

    let mut lp = LinearProgram::new();
    let mut fvar = vec![vec![None; nl]; pairs.len()];
    let mut tvar = Vec::with_capacity(pairs.len());
    let mut fcap = Vec::with_capacity(pairs.len());
    let mut kappa = Vec::with_capacity(pairs.len());
    for (k, &(e, m)) in pairs.iter().enumerate() {
        let g = scenario.gain(e, m).expect("scheduled channel is usable");
        kappa.push(k_pa * noise / g);
        fcap.push(capacity_mbps(noise, g, w, caps[e][m]).min(link_rate_cap(scenario, e)));
        for (l, s) in scenario.sessions.iter().enumerate() {
            if scenario.flow_allowed(e, l) {
                fvar[k][l] = Some(lp.add_var(format!("f[{e},{m},{l}]"), 0.0, s.rate_mbps, 0.0));
            }
        }
        tvar.push(lp.add_var(format!("t[{e},{m}]"), 0.0, f64::INFINITY, 1.0));
    }
    if let Some(l) = add_flow_rows(&mut lp, scenario, &pairs, &fvar, false) {
        return Err(AllocationError::Unroutable(l));
    }
    let flow_terms = |k: usize| -> Vec<(usize, f64)> { fvar[k].iter().flatten().map(|&v| (v, 1.0)).collect() };
    for k in 0..pairs.len() {
        let terms = flow_terms(k);
        if !terms.is_empty() {
            lp.add_row(terms, Sense::Le, fcap[k]);
        }
    }
    // cost h(F) = kappa (2^(F/W) - 1); cut: t - h'(F0) F >= h(F0) - h'(F0) F0
    let h = |k: usize, f: f64| kappa[k] * exp2_m1(f / w);
    let dh = |k: usize, f: f64| kappa[k] * std::f64::consts::LN_2 / w * (f / w).exp2();
    let add_cut = |lp: &mut LinearProgram, k: usize, f0: f64| {
        let slope = dh(k, f0);
        let mut coefs = vec![(tvar[k], 1.0)];
        coefs.extend(flow_terms(k).into_iter().map(|(v, _)| (v, -slope)));
        lp.add_row(coefs, Sense::Ge, h(k, f0) - slope * f0);
    };
    for k in 0..pairs.len() {
        for frac in [0.0, 0.5, 1.0] {
            add_cut(&mut lp, k, frac * fcap[k]);
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut gap = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..MAX_ROUNDS {
        let sol = match solve_lp(&lp)? {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible => return Err(AllocationError::Infeasible),
            LpOutcome::Unbounded => return Err(LpError::Unbounded.into()),
        };
        let agg: Vec<f64> = (0..pairs.len())
            .map(|k| fvar[k].iter().flatten().map(|&v| sol.x[v]).sum::<f64>().clamp(0.0, fcap[k]))
            .collect();
        let upper: f64 = (0..pairs.len()).map(|k| h(k, agg[k])).sum();
        if best.as_ref().map_or(true, |(b, _)| upper < *b) {
            best = Some((upper, sol.x.clone()));
        }
        let best_upper = best.as_ref().expect("just set").0;
        let new_gap = best_upper - sol.objective;
        // the LP solver's own precision floors the gap
        stalled = if new_gap < 0.5 * gap { 0 } else { stalled + 1 };
        gap = gap.min(new_gap);
        if gap <= REL_TOL * best_upper.max(1e-300) || stalled >= STALL_ROUNDS {
            break;
        }
        let mut added = false;
        for k in 0..pairs.len() {
            if h(k, agg[k]) - sol.x[tvar[k]] > 0.1 * REL_TOL * best_upper {
                add_cut(&mut lp, k, agg[k]);
                added = true;
            }
        }
        if !added {
            break;
        }
    }
    let (_, x) = best.ok_or(AllocationError::Infeasible)?;
    if gap > 1e-6 * x.len() as f64 {
        // Only reached on pathological scaling; the point is still feasible.
        log::warn!("allocation stopped with cut gap {gap:e}");
    }

    let mut flows = vec![vec![vec![0.0; nl]; scenario.channels.len()]; scenario.links.len()];
    let mut powers = vec![vec![0.0; scenario.channels.len()]; scenario.links.len()];
    for (k, &(e, m)) in pairs.iter().enumerate() {
        for l in 0..nl {
            if let Some(v) = fvar[k][l] {
                flows[e][m][l] = x[v].max(0.0);
            }
        }
    }
    for per_m in flows.iter_mut() {
        for per_l in per_m.iter_mut() {
            for f in per_l.iter_mut() {
                if *f < IDLE_FLOW_MBPS {
                    *f = 0.0;
                }
            }
        }
    }
    let mut rf = 0.0;
    for &(e, m) in &pairs {
        let f: f64 = flows[e][m].iter().sum();
        let g = scenario.gain(e, m).expect("scheduled channel is usable");
        let p = power_for_flow(noise, g, w, f).min(caps[e][m]);
        powers[e][m] = p;
        rf += k_pa * p;
    }
    Ok(Allocation { flows, powers, rf_cost: rf })
}

/// Circuit and RF power of every node, spans measured with `model`.
pub fn node_breakdowns(
    scenario: &Scenario,
    schedule: &Schedule,
    powers: &[Vec<f64>],
    model: SpanModel,
) -> Vec<PowerBreakdown> {
    let idx = scenario.model_indices();
    let w = scenario.width_mhz();
    let span = |chs: &[usize]| match model {
        SpanModel::Frequency => span_frequency(chs.iter().map(|&m| &scenario.channels[m])),
        SpanModel::Index => span_index(&chs.iter().map(|&m| idx[m]).collect::<Vec<_>>(), w),
    };
    (0..scenario.nodes.len())
        .map(|i| {
            let tx = schedule.tx_channels(scenario, i);
            let rx = schedule.rx_channels(scenario, i);
            let p: Vec<f64> = scenario
                .out_links(i)
                .iter()
                .flat_map(|&e| schedule.channels_of(e).into_iter().map(move |m| powers[e][m]))
                .collect();
            node_power(&scenario.radio, span(&tx), span(&rx), !tx.is_empty(), !rx.is_empty(), &p)
                .expect("allocated powers and spans are non-negative")
        })
        .collect()
}

/// Checks the schedule-only constraints: half-duplex and the bundle limit.
pub fn check_schedule(scenario: &Scenario, schedule: &Schedule, model: SpanModel) -> Result<(), AllocationError> {
    if let Some((i, m)) = schedule.half_duplex_conflict(scenario) {
        return Err(AllocationError::HalfDuplex { node: scenario.nodes[i].id, channel: scenario.channels[m].id });
    }
    let idx = scenario.model_indices();
    let w = scenario.width_mhz();
    for i in 0..scenario.nodes.len() {
        for (dir, chs) in [
            (Direction::Tx, schedule.tx_channels(scenario, i)),
            (Direction::Rx, schedule.rx_channels(scenario, i)),
        ] {
            let span = match model {
                SpanModel::Frequency => span_frequency(chs.iter().map(|&m| &scenario.channels[m])),
                SpanModel::Index => span_index(&chs.iter().map(|&m| idx[m]).collect::<Vec<_>>(), w),
            };
            if span > scenario.limits.q_max_mhz + 1e-9 {
                return Err(AllocationError::Bundle { node: scenario.nodes[i].id, dir, span_mhz: span });
            }
        }
    }
    Ok(())
}

/// Exact system power of `schedule` with optimal flows and powers.
pub fn evaluate_schedule(
    scenario: &Scenario,
    schedule: &Schedule,
    model: SpanModel,
) -> Result<(f64, Allocation), AllocationError> {
    check_schedule(scenario, schedule, model)?;
    if schedule.is_empty() && !scenario.sessions.is_empty() {
        return Err(AllocationError::Unroutable(0));
    }
    let alloc = allocate(scenario, schedule)?;
    let total = node_breakdowns(scenario, schedule, &alloc.powers, model)
        .into_iter()
        .map(|b| b.total)
        .sum();
    Ok((total, alloc))
}

/// Drops scheduled channels that carry no flow.
pub fn prune_idle(schedule: &Schedule, alloc: &Allocation) -> Schedule {
    let mut out = schedule.clone();
    for (e, m) in schedule.pairs() {
        if alloc.aggregate(e, m) <= IDLE_FLOW_MBPS {
            out.set(e, m, false);
        }
    }
    out
}
