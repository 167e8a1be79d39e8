//! Independent feasibility checker.
//!
//! Recomputes everything from the scenario and the solution's schedule,
//! flows and powers; nothing computed by a solver is trusted.

use crate::scenario::Scenario;
use crate::solution::Solution;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub violations: Vec<String>,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn edges(scenario: &Scenario, chans: &[usize]) -> f64 {
    if chans.is_empty() {
        return 0.0;
    }
    let lo = chans
        .iter()
        .map(|&m| scenario.channels[m].center_mhz - scenario.channels[m].width_mhz / 2.0)
        .fold(f64::INFINITY, f64::min);
    let hi = chans
        .iter()
        .map(|&m| scenario.channels[m].center_mhz + scenario.channels[m].width_mhz / 2.0)
        .fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Checks scheduling, half-duplex, power limits and coupling, the
/// interference rule, flow placement, demands and conservation, capacity,
/// the bundle limit and the reported power breakdown, all at relative
/// tolerance `tol`.
pub fn verify(scenario: &Scenario, sol: &Solution, tol: f64) -> Verdict {
    let mut v = Vec::new();
    let n_e = scenario.links.len();
    let n_m = scenario.channels.len();
    let n_l = scenario.sessions.len();
    let noise = scenario.limits.n0 * scenario.width_mhz() * 1e6;
    let width = scenario.width_mhz();
    let node_id = |i: usize| scenario.nodes[i].id;
    let ch_id = |m: usize| scenario.channels[m].id;

    if sol.schedule.num_links() != n_e || sol.powers.len() != n_e || sol.flows.len() != n_e {
        return Verdict { violations: vec!["solution shape does not match the scenario".into()] };
    }
    let on = |e: usize, m: usize| sol.schedule.get(e, m);

    let mut tx_on = vec![vec![false; n_m]; scenario.nodes.len()];
    let mut rx_on = vec![vec![false; n_m]; scenario.nodes.len()];
    for e in 0..n_e {
        let link = &scenario.links[e];
        for m in 0..n_m {
            let p = sol.powers[e][m];
            if on(e, m) {
                if link.gains[m].is_none() {
                    v.push(format!("link {}->{} scheduled on unusable channel {}", node_id(link.tx), node_id(link.rx), ch_id(m)));
                }
                tx_on[link.tx][m] = true;
                rx_on[link.rx][m] = true;
            }
            if !(p >= 0.0) {
                v.push(format!("negative power on link {e} channel {}", ch_id(m)));
            }
            if !on(e, m) && p > 0.0 {
                v.push(format!("power on unscheduled link {e} channel {}", ch_id(m)));
            }
            let cap = scenario.limits.p_max.min(scenario.limits.big_m);
            if p > cap * (1.0 + tol) {
                v.push(format!("power {p} above cap {cap} on link {e} channel {}", ch_id(m)));
            }
        }
    }
    for i in 0..scenario.nodes.len() {
        for m in 0..n_m {
            if tx_on[i][m] && rx_on[i][m] {
                v.push(format!("node {} both transmits and receives on channel {}", node_id(i), ch_id(m)));
            }
        }
    }

    for e in 0..n_e {
        for k in 0..n_e {
            if e == k {
                continue;
            }
            let (a, b) = (&scenario.links[e], &scenario.links[k]);
            if a.tx == b.tx || a.tx == b.rx || a.rx == b.tx || a.rx == b.rx {
                continue;
            }
            for m in 0..n_m {
                if !(on(e, m) && on(k, m)) {
                    continue;
                }
                let g = scenario
                    .find_link(a.tx, b.rx)
                    .and_then(|c| scenario.links[c].gains[m])
                    .unwrap_or(0.0);
                let received = sol.powers[e][m] * g;
                if received > scenario.limits.p_i * (1.0 + tol) {
                    v.push(format!(
                        "node {} interferes at node {} on channel {} ({received:e} W)",
                        node_id(a.tx),
                        node_id(b.rx),
                        ch_id(m)
                    ));
                }
            }
        }
    }

    for e in 0..n_e {
        let link = &scenario.links[e];
        for m in 0..n_m {
            if sol.flows[e][m].len() != n_l {
                v.push(format!("flow vector of link {e} has wrong length"));
                continue;
            }
            let mut total = 0.0;
            for (l, &f) in sol.flows[e][m].iter().enumerate() {
                if !(f >= 0.0) {
                    v.push(format!("negative flow of session {l} on link {e}"));
                }
                let s = &scenario.sessions[l];
                if f > 0.0 && (link.tx == s.dest || link.rx == s.source) {
                    v.push(format!("session {l} flows out of its destination or into its source on link {e}"));
                }
                total += f;
            }
            if total > 0.0 && !on(e, m) {
                v.push(format!("flow on unscheduled link {e} channel {}", ch_id(m)));
            }
            if on(e, m) {
                if let Some(g) = link.gains[m] {
                    let cap = width * (1.0 + g * sol.powers[e][m] / noise).log2();
                    if total > cap * (1.0 + tol) + tol {
                        v.push(format!("flow {total} exceeds capacity {cap} on link {e} channel {}", ch_id(m)));
                    }
                }
            }
        }
    }

    for (l, s) in scenario.sessions.iter().enumerate() {
        let mut inflow = vec![0.0; scenario.nodes.len()];
        let mut outflow = vec![0.0; scenario.nodes.len()];
        for e in 0..n_e {
            let f: f64 = (0..n_m).map(|m| sol.flows[e][m].get(l).copied().unwrap_or(0.0)).sum();
            outflow[scenario.links[e].tx] += f;
            inflow[scenario.links[e].rx] += f;
        }
        let r = s.rate_mbps;
        if outflow[s.source] < r * (1.0 - tol) {
            v.push(format!("session {l} leaves its source at {} < {r}", outflow[s.source]));
        }
        if inflow[s.dest] < r * (1.0 - tol) {
            v.push(format!("session {l} reaches its destination at {} < {r}", inflow[s.dest]));
        }
        for i in 0..scenario.nodes.len() {
            if i != s.source && i != s.dest && (inflow[i] - outflow[i]).abs() > tol * r {
                v.push(format!("session {l} not conserved at node {}", node_id(i)));
            }
        }
    }

    let radio = &scenario.radio;
    let k_pa = 10f64.powf(radio.papr_db / 10.0) / radio.drain_efficiency;
    let (mut rf, mut tx_c, mut rx_c) = (0.0, 0.0, 0.0);
    for i in 0..scenario.nodes.len() {
        let txs: Vec<usize> = (0..n_m).filter(|&m| tx_on[i][m]).collect();
        let rxs: Vec<usize> = (0..n_m).filter(|&m| rx_on[i][m]).collect();
        let (qt, qr) = (edges(scenario, &txs), edges(scenario, &rxs));
        for (dir, q) in [("transmit", qt), ("receive", qr)] {
            if q > scenario.limits.q_max_mhz * (1.0 + tol) {
                v.push(format!("node {} {dir} span {q} MHz above limit", node_id(i)));
            }
        }
        if !txs.is_empty() {
            tx_c += radio.dac_intercept + radio.tx_fixed + radio.dac_slope * 2.0 * qt;
        }
        if !rxs.is_empty() {
            rx_c += radio.adc_intercept + radio.rx_fixed + radio.adc_slope * 2.0 * qr;
        }
    }
    for e in 0..n_e {
        rf += k_pa * sol.powers[e].iter().sum::<f64>();
    }
    let total = rf + tx_c + rx_c;
    let b = &sol.breakdown;
    for (name, want, got) in [
        ("transmit RF", rf, b.tx_rf),
        ("transmit circuit", tx_c, b.tx_circuit),
        ("receive circuit", rx_c, b.rx_circuit),
        ("total", total, b.total),
    ] {
        if (want - got).abs() > tol * want.abs().max(1e-12) {
            v.push(format!("reported {name} power {got} differs from recomputed {want}"));
        }
    }
    Verdict { violations: v }
}
