//! Linear outer approximation of `c = ln(1 + s)` and the index-linear span
//! constraints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::Sense;

/// SNR above which the hull is refused.
pub const MAX_SNR: f64 = 1e15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxationError {
    #[error("SNR bounds must satisfy 0 <= sL < sU (got {0}, {1})")]
    BadBounds(f64, f64),
    #[error("upper SNR bound {0} exceeds the supported range")]
    Overflow(f64),
}

/// `coef_c * c + coef_s * s  (sense)  rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullRow {
    pub coef_c: f64,
    pub coef_s: f64,
    pub rhs: f64,
    pub sense: Sense,
}

impl HullRow {
    pub fn violation(&self, s: f64, c: f64) -> f64 {
        let lhs = self.coef_c * c + self.coef_s * s;
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Three tangents (at `sL`, `beta`, `sU`) above the curve and the chord below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullSegments {
    pub s_lo: f64,
    pub s_hi: f64,
    pub beta: f64,
    pub rows: [HullRow; 4],
}

impl HullSegments {
    pub fn contains(&self, s: f64, c: f64, tol: f64) -> bool {
        self.rows.iter().all(|r| r.violation(s, c) <= tol)
    }

    /// Largest `c` the hull admits at `s`.
    pub fn upper(&self, s: f64) -> f64 {
        self.rows[..3]
            .iter()
            .map(|r| (r.rhs - r.coef_s * s) / r.coef_c)
            .fold(f64::INFINITY, f64::min)
    }
}

fn tangent(t: f64) -> HullRow {
    // (1+t) c - s <= (1+t) ln(1+t) - t, divided by (1+t).
    HullRow {
        coef_c: 1.0,
        coef_s: -1.0 / (1.0 + t),
        rhs: t.ln_1p() - t / (1.0 + t),
        sense: Sense::Le,
    }
}

pub fn build_hull(s_lo: f64, s_hi: f64) -> Result<HullSegments, RelaxationError> {
    if !(s_lo >= 0.0) || !(s_hi > s_lo) {
        return Err(RelaxationError::BadBounds(s_lo, s_hi));
    }
    if !(s_hi <= MAX_SNR) {
        return Err(RelaxationError::Overflow(s_hi));
    }
    let d = s_hi - s_lo;
    // ln(1+sU) - ln(1+sL) without cancellation.
    let dlog = (d / (1.0 + s_lo)).ln_1p();
    let beta = ((1.0 + s_hi) * (1.0 + s_lo) * dlog / d - 1.0).clamp(s_lo, s_hi);
    let slope = dlog / d;
    let chord = HullRow {
        coef_c: 1.0,
        coef_s: -slope,
        rhs: s_lo.ln_1p() - slope * s_lo,
        sense: Sense::Ge,
    };
    Ok(HullSegments {
        s_lo,
        s_hi,
        beta,
        rows: [tangent(s_lo), tangent(beta), tangent(s_hi), chord],
    })
}

/// `q + sum(coef * x[k]) >= rhs`, with `k` indexing the node's channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanRow {
    pub x_coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// One row per ordered pair `(m1, m2)` of the node's model indices:
/// `q + W(m2 x2 + G(1 - x2)) >= W(m1 x1 + 1)`.
///
/// `guard` must be at least every index in `indices`, otherwise rows for
/// inactive `m2` cut off feasible spans.
pub fn linearize_span_constraints(indices: &[i64], guard: i64, width_mhz: f64) -> Vec<SpanRow> {
    let w = width_mhz;
    let g = guard as f64;
    let mut rows = Vec::with_capacity(indices.len() * indices.len());
    for (k1, &m1) in indices.iter().enumerate() {
        for (k2, &m2) in indices.iter().enumerate() {
            let mut x_coefs = vec![(k2, w * (m2 as f64 - g))];
            if k1 == k2 {
                x_coefs[0].1 -= w * m1 as f64;
            } else {
                x_coefs.push((k1, -w * m1 as f64));
            }
            rows.push(SpanRow { x_coefs, rhs: w - w * g });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn beta_for_unit_log_range() {
        let e = std::f64::consts::E;
        let h = build_hull(0.0, e - 1.0).unwrap();
        assert!((h.beta - 1.0 / (e - 1.0)).abs() < 1e-12);
        assert!((h.beta - 0.58198).abs() < 1e-5);
    }

    #[test]
    fn first_tangent_at_zero_is_identity() {
        let h = build_hull(0.0, 10.0).unwrap();
        let r = h.rows[0];
        assert_eq!((r.coef_c, r.coef_s, r.rhs), (1.0, -1.0, 0.0));
    }

    #[test]
    fn upper_endpoint_is_tight_on_last_tangent_and_chord() {
        for (lo, hi) in [(0.0, 3.0), (0.5, 100.0), (2.0, 2.5)] {
            let h = build_hull(lo, hi).unwrap();
            let c = f64::ln_1p(hi);
            assert!(h.contains(hi, c, 1e-12));
            for k in [2, 3] {
                let r = h.rows[k];
                assert!((r.coef_c * c + r.coef_s * hi - r.rhs).abs() < 1e-12);
            }
            let r = h.rows[3];
            assert!((r.coef_c * lo.ln_1p() + r.coef_s * lo - r.rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_bounds_are_rejected() {
        assert!(build_hull(1.0, 1.0).is_err());
        assert!(build_hull(-1.0, 1.0).is_err());
        assert!(build_hull(0.0, f64::INFINITY).is_err());
        assert!(matches!(build_hull(0.0, 1e16), Err(RelaxationError::Overflow(_))));
    }

    #[test]
    fn hull_contains_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let lo = if rng.gen_bool(0.3) { 0.0 } else { 10f64.powf(rng.gen_range(-4.0..3.0)) };
            let hi = lo + 10f64.powf(rng.gen_range(-6.0..6.0));
            let h = build_hull(lo, hi).unwrap();
            assert!(h.s_lo <= h.beta && h.beta <= h.s_hi);
            for _ in 0..20 {
                let s = rng.gen_range(lo..=hi);
                assert!(h.contains(s, s.ln_1p(), 1e-9));
            }
        }
    }

    /// Smallest q satisfying every row for the given activity pattern.
    fn min_q(rows: &[SpanRow], x: &[f64]) -> f64 {
        rows.iter()
            .map(|r| r.rhs - r.x_coefs.iter().map(|&(k, a)| a * x[k]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    #[test]
    fn span_rows_reproduce_index_span() {
        let cases: [&[i64]; 4] = [&[9, 13, 14, 81, 87, 111], &[0, 1, 2, 3], &[5], &[1, 4, 6, 7, 20, 21]];
        for idx in cases {
            let guard = (*idx.iter().max().unwrap()).max(1);
            let rows = linearize_span_constraints(idx, guard, 6.0);
            assert_eq!(rows.len(), idx.len() * idx.len());
            for mask in 0u32..1 << idx.len() {
                let x: Vec<f64> = (0..idx.len()).map(|k| (mask >> k & 1) as f64).collect();
                let active: Vec<i64> = idx.iter().enumerate().filter(|(k, _)| x[*k] == 1.0).map(|(_, &m)| m).collect();
                let want = crate::span::span_index(&active, 6.0);
                assert!((min_q(&rows, &x) - want).abs() < 1e-9, "{idx:?} {mask:b}");
            }
        }
    }

    #[test]
    fn span_row_examples() {
        let rows = linearize_span_constraints(&[42], 42, 6.0);
        assert_eq!(min_q(&rows, &[1.0]), 6.0);
        assert_eq!(min_q(&rows, &[0.0]), 0.0);
        let rows = linearize_span_constraints(&[9, 111], 111, 6.0);
        assert_eq!(min_q(&rows, &[1.0, 1.0]), 618.0);
    }
}
