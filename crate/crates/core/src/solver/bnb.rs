//! Best-bound branch-and-bound over binary variables of a [`LinearProgram`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::lp::{LinearProgram, LpSession, SessionOutcome};
use super::{LpError, INTEGRALITY_TOL};

/// Open nodes beyond this count drop their LP state and are re-solved from
/// the root when popped.
const MAX_STORED_STATES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnbLimits {
    /// Relative gap `(incumbent - bound) / incumbent` at which to stop.
    pub gap: f64,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    /// Run a rounding dive at the root and then every this many processed
    /// nodes; 0 disables diving.
    pub dive_period: usize,
}

impl Default for BnbLimits {
    fn default() -> Self {
        Self { gap: 1e-4, max_nodes: 200_000, time_limit: None, dive_period: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnbStatus {
    Optimal,
    GapLimit,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub incumbent: Option<f64>,
    pub lower_bound: f64,
    /// `(incumbent - lower_bound) / incumbent`; infinite without incumbent.
    pub gap: f64,
    #[serde(skip)]
    pub x: Option<Vec<f64>>,
    /// LP relaxations solved.
    pub nodes: usize,
}

impl BnbResult {
    pub fn has_incumbent(&self) -> bool {
        self.incumbent.is_some()
    }
}

/// Scores an integral point; `None` marks it infeasible.
pub type LeafEvaluator<'a> = dyn FnMut(&[f64]) -> Option<f64> + 'a;

#[derive(Default)]
pub struct BnbHooks<'a> {
    /// Known feasible point and its objective value.
    pub warm_start: Option<(f64, Vec<f64>)>,
    /// When set, integral nodes are scored by this function instead of the
    /// LP objective, and nodes whose LP bound is below the score keep being
    /// split on their free binaries. Use this when the LP is a relaxation of
    /// the true objective even at integral points.
    pub leaf: Option<Box<LeafEvaluator<'a>>>,
}

struct OpenNode {
    bound: f64,
    id: usize,
    fixes: Vec<(usize, f64)>,
    state: Option<LpSession>,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for OpenNode {}
impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenNode {
    // Max-heap: the smallest bound, then the oldest node, is the greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

pub fn branch_and_bound(
    lp: &LinearProgram,
    binaries: &[usize],
    limits: &BnbLimits,
) -> Result<BnbResult, LpError> {
    branch_and_bound_with(lp, binaries, limits, BnbHooks::default())
}

pub fn branch_and_bound_with(
    lp: &LinearProgram,
    binaries: &[usize],
    limits: &BnbLimits,
    mut hooks: BnbHooks<'_>,
) -> Result<BnbResult, LpError> {
    for &b in binaries {
        let v = lp
            .vars
            .get(b)
            .ok_or_else(|| LpError::Malformed(format!("binary {b} is not a variable")))?;
        if v.lower < 0.0 || v.upper > 1.0 {
            return Err(LpError::Malformed(format!("binary {} must lie in [0, 1]", v.name)));
        }
    }
    let started = Instant::now();
    let lp = Arc::new(lp.clone());
    let mut nodes = 1;
    let root = match LpSession::start(lp.clone())? {
        SessionOutcome::Optimal(s) => s,
        SessionOutcome::Infeasible => {
            return Ok(finish(BnbStatus::Infeasible, hooks.warm_start, f64::INFINITY, nodes))
        }
        SessionOutcome::Unbounded => return Err(LpError::Unbounded),
    };

    let mut incumbent = hooks.warm_start.take();
    let mut heap = BinaryHeap::new();
    let mut stored = 1;
    let mut next_id = 1;
    let mut processed = 0usize;
    let mut lower = root.objective();
    heap.push(OpenNode { bound: root.objective(), id: 0, fixes: Vec::new(), state: Some(root.clone()) });

    let status = loop {
        let inc = incumbent.as_ref().map(|(v, _)| *v);
        let Some(best) = heap.peek() else {
            break if inc.is_some() { BnbStatus::Optimal } else { BnbStatus::Infeasible };
        };
        lower = lower.max(best.bound);
        if let Some(inc) = inc {
            if best.bound >= inc - prune_tol(inc) {
                heap.clear();
                break BnbStatus::Optimal;
            }
            if relative_gap(inc, lower) <= limits.gap {
                break BnbStatus::GapLimit;
            }
        }
        if nodes >= limits.max_nodes {
            break BnbStatus::NodeLimit;
        }
        if limits.time_limit.is_some_and(|t| started.elapsed() >= t) {
            break BnbStatus::TimeLimit;
        }

        let node = heap.pop().expect("peeked");
        let session = match node.state {
            Some(s) => {
                stored -= 1;
                s
            }
            None => {
                nodes += 1;
                match rebuild(&root, &node.fixes)? {
                    Some(s) => s,
                    None => continue,
                }
            }
        };
        processed += 1;
        if limits.dive_period > 0 && (processed - 1) % limits.dive_period == 0 {
            dive(&session, binaries, &mut hooks, &mut incumbent, &mut nodes, limits.max_nodes)?;
        }
        let x = session.values();

        let mut branch_var = None;
        let mut worst = INTEGRALITY_TOL;
        for &b in binaries {
            let frac = (x[b] - x[b].round()).abs();
            if frac > worst {
                worst = frac;
                branch_var = Some(b);
            }
        }

        if branch_var.is_none() {
            let mut point = x.to_vec();
            for &b in binaries {
                point[b] = point[b].round();
            }
            let value = match hooks.leaf.as_mut() {
                Some(eval) => eval(&point),
                None => Some(node.bound.max(session.objective())),
            };
            if let Some(v) = value {
                if incumbent.as_ref().map_or(true, |(iv, _)| v < *iv) {
                    log::debug!("incumbent {v:.6e} after {nodes} nodes");
                    incumbent = Some((v, point));
                }
            }
            if hooks.leaf.is_none() {
                continue;
            }
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
            if node.bound >= inc - prune_tol(inc) {
                continue;
            }
            branch_var = binaries.iter().copied().find(|&b| {
                let v = &lp.vars[b];
                v.lower < v.upper && !node.fixes.iter().any(|&(j, _)| j == b)
            });
            if branch_var.is_none() {
                continue;
            }
        }

        let var = branch_var.expect("set above");
        for value in [0.0, 1.0] {
            nodes += 1;
            let child = session.clone().fix(var, value)?;
            let SessionOutcome::Optimal(s) = child else { continue };
            let bound = s.objective().max(node.bound);
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
            if bound >= inc - prune_tol(inc) {
                continue;
            }
            let mut fixes = node.fixes.clone();
            fixes.push((var, value));
            let state = if stored < MAX_STORED_STATES {
                stored += 1;
                Some(s)
            } else {
                None
            };
            heap.push(OpenNode { bound, id: next_id, fixes, state });
            next_id += 1;
        }
    };

    let open_bound = heap.peek().map_or(f64::INFINITY, |n| n.bound.max(lower));
    Ok(finish(status, incumbent, open_bound, nodes))
}

/// Fractional diving: repeatedly rounds the least fractional binary to its
/// nearest value (the other value if that is infeasible) until the point is
/// integral.
fn dive(
    start: &LpSession,
    binaries: &[usize],
    hooks: &mut BnbHooks<'_>,
    incumbent: &mut Option<(f64, Vec<f64>)>,
    nodes: &mut usize,
    max_nodes: usize,
) -> Result<(), LpError> {
    let mut s = start.clone();
    loop {
        let inc = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        if s.objective() >= inc - prune_tol(inc) || *nodes >= max_nodes {
            return Ok(());
        }
        let x = s.values();
        let mut pick: Option<(usize, f64)> = None;
        for &b in binaries {
            let frac = (x[b] - x[b].round()).abs();
            if frac > INTEGRALITY_TOL && pick.map_or(true, |(_, f)| frac < f) {
                pick = Some((b, frac));
            }
        }
        let Some((var, _)) = pick else {
            let mut point = x.to_vec();
            for &b in binaries {
                point[b] = point[b].round();
            }
            let value = match hooks.leaf.as_mut() {
                Some(eval) => eval(&point),
                None => Some(s.objective()),
            };
            if let Some(v) = value.filter(|&v| v < inc) {
                log::debug!("dive incumbent {v:.6e} after {nodes} nodes");
                *incumbent = Some((v, point));
            }
            return Ok(());
        };
        let near = x[var].round();
        *nodes += 1;
        s = match s.clone().fix(var, near)? {
            SessionOutcome::Optimal(n) => n,
            _ => {
                *nodes += 1;
                match s.fix(var, 1.0 - near)? {
                    SessionOutcome::Optimal(n) => n,
                    _ => return Ok(()),
                }
            }
        };
    }
}

fn finish(
    status: BnbStatus,
    incumbent: Option<(f64, Vec<f64>)>,
    open_bound: f64,
    nodes: usize,
) -> BnbResult {
    match incumbent {
        Some((v, x)) => {
            let lower_bound = if status == BnbStatus::Optimal { v } else { open_bound.min(v) };
            BnbResult {
                status,
                incumbent: Some(v),
                lower_bound,
                gap: relative_gap(v, lower_bound),
                x: Some(x),
                nodes,
            }
        }
        None => BnbResult {
            status,
            incumbent: None,
            lower_bound: open_bound,
            gap: f64::INFINITY,
            x: None,
            nodes,
        },
    }
}

fn rebuild(root: &LpSession, fixes: &[(usize, f64)]) -> Result<Option<LpSession>, LpError> {
    let mut s = root.clone();
    for &(j, v) in fixes {
        s = match s.fix(j, v)? {
            SessionOutcome::Optimal(s) => s,
            _ => return Ok(None),
        };
    }
    Ok(Some(s))
}

fn prune_tol(inc: f64) -> f64 {
    1e-9 * inc.abs().max(1e-12)
}

pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1e-300)).max(0.0)
}
