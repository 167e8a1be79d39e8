//! Test oracles written against the scenario data only; none of them calls
//! solver code.

#![allow(dead_code)]

use ncospan_core::fixtures::contiguous_channels;
use ncospan_core::power::RadioProfile;
use ncospan_core::scenario::{Limits, Link, Node, Scenario, Session};
use ncospan_core::span::Schedule;
use rand::Rng;

/// Minimum of `sum kappa_m (2^(f_m/W) - 1)` over `sum f_m = total`,
/// `0 <= f_m <= cap_m`, by bisection on the marginal cost. `None` when the
/// caps cannot carry `total`.
pub fn capped_waterfill(kappa: &[f64], cap: &[f64], width: f64, total: f64) -> Option<(f64, Vec<f64>)> {
    if total <= 0.0 {
        return Some((0.0, vec![0.0; kappa.len()]));
    }
    if cap.iter().sum::<f64>() < total * (1.0 - 1e-12) {
        return None;
    }
    let ln2 = std::f64::consts::LN_2;
    // f_m(nu) = W log2(nu W / (kappa_m ln 2)) clamped; log-space bisection.
    let flows = |log_nu: f64| -> Vec<f64> {
        kappa
            .iter()
            .zip(cap)
            .map(|(&k, &c)| (width * (log_nu + (width / (k * ln2)).ln()) / ln2).clamp(0.0, c))
            .collect()
    };
    let (mut lo, mut hi) = (-800.0, 800.0);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if flows(mid).iter().sum::<f64>() < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut f = flows(hi);
    // put the bisection residue on the channel with the most headroom
    let excess = f.iter().sum::<f64>() - total;
    if let Some(k) = (0..f.len()).filter(|&k| f[k] > excess).max_by(|&a, &b| f[a].total_cmp(&f[b])) {
        f[k] -= excess;
    }
    let cost = kappa.iter().zip(&f).map(|(&k, &x)| k * ((x / width).exp2() - 1.0)).sum();
    Some((cost, f))
}

/// Every simple path from `s` to `d` as link lists.
pub fn simple_paths(sc: &Scenario, s: usize, d: usize) -> Vec<Vec<usize>> {
    fn go(sc: &Scenario, at: usize, d: usize, seen: &mut Vec<usize>, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if at == d {
            out.push(path.clone());
            return;
        }
        for (e, l) in sc.links.iter().enumerate() {
            if l.tx == at && !seen.contains(&l.rx) {
                seen.push(l.rx);
                path.push(e);
                go(sc, l.rx, d, seen, path, out);
                path.pop();
                seen.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(sc, s, d, &mut vec![s], &mut Vec::new(), &mut out);
    out
}

fn edges_mhz(sc: &Scenario, chans: &[usize]) -> f64 {
    if chans.is_empty() {
        return 0.0;
    }
    let lo = chans.iter().map(|&m| sc.channels[m].center_mhz - sc.channels[m].width_mhz / 2.0).fold(f64::INFINITY, f64::min);
    let hi = chans.iter().map(|&m| sc.channels[m].center_mhz + sc.channels[m].width_mhz / 2.0).fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Exact system power of a schedule on a scenario where every session has
/// a single simple path, so flows are fixed and each link water-fills on
/// its own. `None` if the schedule is infeasible.
pub fn schedule_cost(sc: &Scenario, sched: &Schedule) -> Option<f64> {
    let nm = sc.channels.len();
    let w = sc.channels[0].width_mhz;
    let noise = sc.limits.n0 * w * 1e6;
    let r = &sc.radio;
    let mut demand = vec![0.0; sc.links.len()];
    for s in &sc.sessions {
        let paths = simple_paths(sc, s.source, s.dest);
        assert_eq!(paths.len(), 1, "oracle needs unique paths");
        for &e in &paths[0] {
            demand[e] += s.rate_mbps;
        }
    }
    let mut tx = vec![Vec::new(); sc.nodes.len()];
    let mut rx = vec![Vec::new(); sc.nodes.len()];
    for (e, l) in sc.links.iter().enumerate() {
        for m in 0..nm {
            if sched.get(e, m) {
                l.gains[m]?;
                tx[l.tx].push(m);
                rx[l.rx].push(m);
            }
        }
    }
    let mut circuit = 0.0;
    for i in 0..sc.nodes.len() {
        if tx[i].iter().any(|m| rx[i].contains(m)) {
            return None;
        }
        let (qt, qr) = (edges_mhz(sc, &tx[i]), edges_mhz(sc, &rx[i]));
        if qt > sc.limits.q_max_mhz + 1e-9 || qr > sc.limits.q_max_mhz + 1e-9 {
            return None;
        }
        if !tx[i].is_empty() {
            circuit += r.dac_intercept + r.tx_fixed + 2.0 * r.dac_slope * qt;
        }
        if !rx[i].is_empty() {
            circuit += r.adc_intercept + r.rx_fixed + 2.0 * r.adc_slope * qr;
        }
    }
    let mut rf = 0.0;
    for (e, l) in sc.links.iter().enumerate() {
        let chans: Vec<usize> = (0..nm).filter(|&m| sched.get(e, m)).collect();
        if demand[e] > 0.0 && chans.is_empty() {
            return None;
        }
        let mut kappa = Vec::new();
        let mut cap = Vec::new();
        for &m in &chans {
            let g = l.gains[m].unwrap();
            let mut p_cap = sc.limits.p_max.min(sc.limits.big_m);
            for (k, lk) in sc.links.iter().enumerate() {
                if k == e || !sched.get(k, m) {
                    continue;
                }
                if [lk.tx, lk.rx].iter().any(|n| *n == l.tx || *n == l.rx) {
                    continue;
                }
                let cross = sc.links.iter().find(|c| c.tx == l.tx && c.rx == lk.rx).and_then(|c| c.gains[m]);
                if let Some(gc) = cross {
                    p_cap = p_cap.min(sc.limits.p_i / gc);
                }
            }
            kappa.push(noise / g);
            cap.push(w * (1.0 + g * p_cap / noise).log2());
        }
        let (cost, _) = capped_waterfill(&kappa, &cap, w, demand[e])?;
        rf += cost;
    }
    let k_pa = 10f64.powf(r.papr_db / 10.0) / r.drain_efficiency;
    Some(k_pa * rf + circuit)
}

/// Minimum over all schedules by enumeration.
pub fn enumerate_optimum(sc: &Scenario) -> Option<(f64, Schedule)> {
    let pairs: Vec<(usize, usize)> = (0..sc.links.len())
        .flat_map(|e| (0..sc.channels.len()).filter(move |&m| sc.links[e].gains[m].is_some()).map(move |m| (e, m)))
        .collect();
    assert!(pairs.len() <= 16);
    let mut best: Option<(f64, Schedule)> = None;
    for mask in 0u32..1 << pairs.len() {
        let mut s = Schedule::empty(sc);
        for (k, &(e, m)) in pairs.iter().enumerate() {
            if mask >> k & 1 == 1 {
                s.set(e, m, true);
            }
        }
        if let Some(c) = schedule_cost(sc, &s) {
            if best.as_ref().map_or(true, |(b, _)| c < *b) {
                best = Some((c, s));
            }
        }
    }
    best
}

/// Random instance with at most 3 links, 4 channels and 2 sessions, each
/// session having exactly one simple path.
pub fn random_small_instance(rng: &mut impl Rng, seed: u64) -> Scenario {
    loop {
        let n = rng.gen_range(2..=4usize);
        let m = rng.gen_range(1..=4usize);
        let width = [3.0, 6.0][rng.gen_range(0..2)];
        let channels = contiguous_channels(m, width, 100.0);
        let nodes: Vec<Node> = (0..n)
            .map(|k| Node { id: k as u32 + 1, position: [k as f64 * 500.0, 0.0], channels: (0..m).collect() })
            .collect();
        let mut links: Vec<Link> = Vec::new();
        let n_links = rng.gen_range(1..=3usize);
        let mut tries = 0;
        while links.len() < n_links && tries < 50 {
            tries += 1;
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a == b || links.iter().any(|l| l.tx == a && l.rx == b) {
                continue;
            }
            let gains = (0..m).map(|_| Some(10f64.powf(-rng.gen_range(95.0..125.0) / 10.0))).collect();
            links.push(Link { tx: a, rx: b, gains });
        }
        let mut sessions = Vec::new();
        for _ in 0..rng.gen_range(1..=2usize) {
            let e = rng.gen_range(0..links.len());
            let (s, d) = if rng.gen_bool(0.5) {
                (links[e].tx, links[e].rx)
            } else {
                (rng.gen_range(0..n), rng.gen_range(0..n))
            };
            if s != d && !sessions.iter().any(|x: &Session| x.source == s && x.dest == d) {
                sessions.push(Session { source: s, dest: d, rate_mbps: rng.gen_range(0.5..3.0) * width });
            }
        }
        if sessions.is_empty() {
            continue;
        }
        let radio = RadioProfile::high_slope().with_slopes_scaled([0.0, 0.05, 1.0, 20.0][rng.gen_range(0..4)]);
        let q_max = width * rng.gen_range(1..=m) as f64;
        let Ok(sc) = Scenario::new(nodes, links, channels, sessions, Limits::typical(width, q_max), radio, seed) else {
            continue;
        };
        if sc.sessions.iter().all(|s| simple_paths(&sc, s.source, s.dest).len() == 1) {
            return sc;
        }
    }
}

/// Brute-force transmit-power-optimal channel set of a single link: the
/// subset whose all-active water-filling is cheapest.
pub fn tx_optimal_set(sc: &Scenario) -> Vec<usize> {
    let m = sc.channels.len();
    let w = sc.channels[0].width_mhz;
    let noise = sc.limits.n0 * w * 1e6;
    let rate = sc.sessions[0].rate_mbps;
    let kappa: Vec<f64> = (0..m).map(|k| noise / sc.links[0].gains[k].unwrap()).collect();
    let lk: Vec<f64> = kappa.iter().map(|k| k.log2()).collect();
    let mut best = (f64::INFINITY, 0u32);
    for mask in 1u32..1 << m {
        let set: Vec<usize> = (0..m).filter(|k| mask >> k & 1 == 1).collect();
        // all-active optimum: kappa_k 2^(f_k/W) equal across the set
        let n = set.len() as f64;
        let level = (rate / w + set.iter().map(|&k| lk[k]).sum::<f64>()) / n;
        let f: Vec<f64> = set.iter().map(|&k| w * (level - lk[k])).collect();
        if f.iter().any(|&x| x <= 0.0) {
            continue;
        }
        let cost: f64 = set.iter().zip(&f).map(|(&k, &x)| kappa[k] * ((x / w).exp2() - 1.0)).sum();
        if cost < best.0 {
            best = (cost, mask);
        }
    }
    (0..m).filter(|k| best.1 >> k & 1 == 1).collect()
}
