//! Sparse linear programs and a warm-startable solving session.

use std::sync::Arc;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::{Deserialize, Serialize};

use super::{LpError, FEASIBILITY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub name: String,
    pub lower: f64,
    /// `f64::INFINITY` for no upper bound.
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Absolute violation, zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Magnitude used to make violations relative.
    pub fn scale(&self, x: &[f64]) -> f64 {
        self.coefs
            .iter()
            .map(|&(j, a)| (a * x[j]).abs())
            .fold(self.rhs.abs().max(1.0), f64::max)
    }
}

/// Minimisation problem over bounded continuous variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub vars: Vec<VarDef>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.vars.push(VarDef { name: name.into(), lower, upper });
        self.objective.push(cost);
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { coefs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks bounds and rows at relative tolerance `tol`; reports the first
    /// violation found.
    pub fn check_feasible(&self, x: &[f64], tol: f64) -> Result<(), String> {
        if x.len() != self.vars.len() {
            return Err(format!("expected {} values, got {}", self.vars.len(), x.len()));
        }
        for (v, &val) in self.vars.iter().zip(x) {
            let t = tol * val.abs().max(1.0);
            if !val.is_finite() || val < v.lower - t || val > v.upper + t {
                return Err(format!("{} = {val} outside [{}, {}]", v.name, v.lower, v.upper));
            }
        }
        for (k, row) in self.rows.iter().enumerate() {
            let viol = row.violation(x);
            if viol > tol * row.scale(x) {
                return Err(format!("row {k} violated by {viol:e}"));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.vars.len() {
            return Err(LpError::Malformed("objective length differs from variable count".into()));
        }
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || v.lower == f64::INFINITY {
                return Err(LpError::Malformed(format!("bad bounds on {}", v.name)));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        for (k, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {k} has a non-finite rhs")));
            }
            for &(j, a) in &row.coefs {
                if j >= self.vars.len() || !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {k} references a bad term")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// Solves `lp` from scratch.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    Ok(match LpSession::start(Arc::new(lp.clone()))? {
        SessionOutcome::Optimal(s) => LpOutcome::Optimal(s.solution()),
        SessionOutcome::Infeasible => LpOutcome::Infeasible,
        SessionOutcome::Unbounded => LpOutcome::Unbounded,
    })
}

pub enum SessionOutcome {
    Optimal(LpSession),
    Infeasible,
    Unbounded,
}

/// A solved LP that can be tightened by fixing variables or adding rows,
/// re-optimising from the previous basis.
#[derive(Clone)]
pub struct LpSession {
    lp: Arc<LinearProgram>,
    handles: Arc<Vec<Variable>>,
    inner: microlp::Solution,
    fixed: Vec<(usize, f64)>,
    extra_rows: Vec<Row>,
    x: Vec<f64>,
    objective: f64,
}

impl LpSession {
    pub fn start(lp: Arc<LinearProgram>) -> Result<SessionOutcome, LpError> {
        lp.validate()?;
        let scale = lp.objective.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let handles: Vec<Variable> = lp
            .vars
            .iter()
            .zip(&lp.objective)
            .map(|(v, c)| problem.add_var(c / scale, (v.lower, v.upper)))
            .collect();
        for row in &lp.rows {
            let t = terms(&handles, &row.coefs);
            if t.is_empty() {
                let ok = match row.sense {
                    Sense::Le => 0.0 <= row.rhs,
                    Sense::Ge => 0.0 >= row.rhs,
                    Sense::Eq => row.rhs == 0.0,
                };
                if !ok {
                    return Ok(SessionOutcome::Infeasible);
                }
                continue;
            }
            problem.add_constraint(t, op(row.sense), row.rhs);
        }
        let outcome = problem.solve();
        Self::wrap(lp, Arc::new(handles), Vec::new(), Vec::new(), outcome)
    }

    fn wrap(
        lp: Arc<LinearProgram>,
        handles: Arc<Vec<Variable>>,
        fixed: Vec<(usize, f64)>,
        extra_rows: Vec<Row>,
        outcome: Result<microlp::SolveOutcome, microlp::Error>,
    ) -> Result<SessionOutcome, LpError> {
        let inner = match outcome {
            Ok(o) => o
                .into_solution()
                .map_err(|_| LpError::Numerical("solve interrupted".into()))?,
            Err(microlp::Error::Infeasible) => return Ok(SessionOutcome::Infeasible),
            Err(microlp::Error::Unbounded) => return Ok(SessionOutcome::Unbounded),
            Err(e) => return Err(LpError::Numerical(e.to_string())),
        };
        let x: Vec<f64> = handles.iter().map(|&h| inner.var_value_raw(h)).collect();
        let objective = lp.objective_value(&x);
        let session = LpSession { lp, handles, inner, fixed, extra_rows, x, objective };
        session.post_check()?;
        Ok(SessionOutcome::Optimal(session))
    }

    fn post_check(&self) -> Result<(), LpError> {
        let tol = FEASIBILITY_TOL;
        self.lp
            .check_feasible(&self.x, tol)
            .map_err(|e| LpError::Numerical(format!("returned point infeasible: {e}")))?;
        for &(j, v) in &self.fixed {
            if (self.x[j] - v).abs() > tol * v.abs().max(1.0) {
                return Err(LpError::Numerical(format!("fixed variable {j} drifted")));
            }
        }
        for row in &self.extra_rows {
            if row.violation(&self.x) > tol * row.scale(&self.x) {
                return Err(LpError::Numerical("added row violated".into()));
            }
        }
        Ok(())
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn fixed(&self) -> &[(usize, f64)] {
        &self.fixed
    }

    pub fn solution(&self) -> LpSolution {
        LpSolution { objective: self.objective, x: self.x.clone() }
    }

    /// Fixes variable `var` to `value` and re-optimises.
    pub fn fix(self, var: usize, value: f64) -> Result<SessionOutcome, LpError> {
        let LpSession { lp, handles, inner, mut fixed, extra_rows, .. } = self;
        let outcome = inner.fix_var(handles[var], value);
        fixed.retain(|&(j, _)| j != var);
        fixed.push((var, value));
        Self::wrap(lp, handles, fixed, extra_rows, outcome)
    }

    /// Adds a row and re-optimises.
    pub fn add_row(self, row: Row) -> Result<SessionOutcome, LpError> {
        let LpSession { lp, handles, inner, fixed, mut extra_rows, .. } = self;
        let outcome = inner.add_constraint(terms(&handles, &row.coefs), op(row.sense), row.rhs);
        extra_rows.push(row);
        Self::wrap(lp, handles, fixed, extra_rows, outcome)
    }
}

fn terms(handles: &[Variable], coefs: &[(usize, f64)]) -> Vec<(Variable, f64)> {
    let mut merged: Vec<(usize, f64)> = coefs.to_vec();
    merged.sort_by_key(|&(j, _)| j);
    merged.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    merged
        .into_iter()
        .filter(|&(_, a)| a != 0.0)
        .map(|(j, a)| (handles[j], a))
        .collect()
}

fn op(sense: Sense) -> ComparisonOp {
    match sense {
        Sense::Le => ComparisonOp::Le,
        Sense::Eq => ComparisonOp::Eq,
        Sense::Ge => ComparisonOp::Ge,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_lower_bound_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 3.0);
        let sol = solve_lp(&lp).unwrap().optimal().unwrap();
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_corner() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, -1.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let sol = solve_lp(&lp).unwrap().optimal().unwrap();
        assert!((sol.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Le, 2.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn empty_rows_are_checked_directly() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_row(vec![], Sense::Ge, 1.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpOutcome::Infeasible);
        lp.rows[0].rhs = 0.0;
        assert!(matches!(solve_lp(&lp).unwrap(), LpOutcome::Optimal(_)));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", 0.0, 1.0, 1.0);
        lp.add_row(vec![(3, 1.0)], Sense::Le, 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::Malformed(_))));
    }

    #[test]
    fn session_fix_and_cut_reoptimise() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 4.0, -1.0);
        let y = lp.add_var("y", 0.0, 4.0, -2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 5.0);
        let SessionOutcome::Optimal(s) = LpSession::start(Arc::new(lp)).unwrap() else { panic!() };
        assert!((s.objective() + 9.0).abs() < 1e-9);
        let SessionOutcome::Optimal(s2) = s.clone().fix(y, 1.0).unwrap() else { panic!() };
        assert!((s2.objective() + 6.0).abs() < 1e-9);
        let cut = Row { coefs: vec![(x, 1.0)], sense: Sense::Le, rhs: 0.5 };
        let SessionOutcome::Optimal(s3) = s.add_row(cut).unwrap() else { panic!() };
        assert!((s3.objective() + 8.5).abs() < 1e-9);
    }

    /// Minimum over all vertices of `{x in [0, u]^n : A x <= b}` by brute
    /// force: every choice of n active constraints among rows and bounds.
    fn vertex_oracle(a: &[Vec<f64>], b: &[f64], u: f64, c: &[f64]) -> Option<f64> {
        let n = c.len();
        let mut planes: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), 0.0));
            planes.push((e, u));
        }
        let mut best: Option<f64> = None;
        let k = planes.len();
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut m: Vec<Vec<f64>> = idx.iter().map(|&i| {
                let mut r = planes[i].0.clone();
                r.push(planes[i].1);
                r
            }).collect();
            if let Some(x) = gauss(&mut m, n) {
                let inside = x.iter().all(|&v| v >= -1e-9 && v <= u + 1e-9)
                    && a.iter().zip(b).all(|(r, &bi)| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-9);
                if inside {
                    let val: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(val, |b: f64| b.min(val)));
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < k - n + i {
                    idx[i] += 1;
                    for t in i + 1..n {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss(m: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
            if m[piv][col].abs() < 1e-10 {
                return None;
            }
            m.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for cc in col..=n {
                        m[r][cc] -= f * m[col][cc];
                    }
                }
            }
        }
        Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_vertex_enumeration(
            n in 1usize..=4,
            rows in proptest::collection::vec(proptest::collection::vec(-5i32..=5, 4), 1..=4),
            rhs in proptest::collection::vec(-3i32..=10, 4),
            cost in proptest::collection::vec(-5i32..=5, 4),
        ) {
            let a: Vec<Vec<f64>> = rows.iter().map(|r| r[..n].iter().map(|&v| v as f64).collect()).collect();
            let b: Vec<f64> = rhs[..a.len()].iter().map(|&v| v as f64).collect();
            let c: Vec<f64> = cost[..n].iter().map(|&v| v as f64).collect();
            let u = 3.0;
            let mut lp = LinearProgram::new();
            for j in 0..n {
                lp.add_var(format!("x{j}"), 0.0, u, c[j]);
            }
            for (r, &bi) in a.iter().zip(&b) {
                lp.add_row(r.iter().copied().enumerate().collect(), Sense::Le, bi);
            }
            let oracle = vertex_oracle(&a, &b, u, &c);
            match (solve_lp(&lp).unwrap(), oracle) {
                (LpOutcome::Optimal(s), Some(v)) => {
                    prop_assert!((s.objective - v).abs() <= 1e-7 * (1.0 + v.abs()), "{} vs {}", s.objective, v);
                    prop_assert!(lp.check_feasible(&s.x, 1e-7).is_ok());
                }
                (LpOutcome::Infeasible, None) => {}
                (got, want) => prop_assert!(false, "{got:?} vs {want:?}"),
            }
        }
    }
}
