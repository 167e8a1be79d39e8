//! Radio front-end power accounting.
//!
//! Converter power is affine in the sampling rate, every other block is a
//! constant while the path is active, and the amplifier scales the emitted RF
//! power by `PAPR / η`. Sampling rates are in MS/s and spans in MHz; a path
//! sampling a span of `q` MHz runs at `2q` MS/s.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transmit filter power (W).
pub const TX_FILTER_W: f64 = 5.0e-3;
/// Mixer power (W).
pub const MIXER_W: f64 = 30.3e-3;
/// Receive filter power (W).
pub const RX_FILTER_W: f64 = 7.5e-3;
/// Intermediate-frequency amplifier power (W).
pub const IFA_W: f64 = 3.0e-3;
/// Low-noise amplifier power (W).
pub const LNA_W: f64 = 20.0e-3;

/// Class-B (or better) drain efficiency.
pub const DEFAULT_DRAIN_EFFICIENCY: f64 = 0.75;
/// Worst-case OFDM PAPR after coding gain, in dB.
pub const DEFAULT_PAPR_DB: f64 = 9.0;

/// AD9777 DAC: 1056 mW at 150 MS/s.
pub const AD9777_POINT: (f64, f64) = (150.0, 1.056);
/// ADS62P4 ADC: 908 mW at 125 MS/s.
pub const ADS62P4_POINT: (f64, f64) = (125.0, 0.908);

/// Slope multiplier applied to the high-slope converters to obtain the
/// low-slope preset.
pub const LOW_SLOPE_SCALE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("affine fit needs at least one point")]
    NoPoints,
    #[error("all sampling rates are identical ({rate} MS/s) but the powers differ")]
    DegenerateRates { rate: f64 },
    #[error("negative transmit power {0} W")]
    NegativePower(f64),
    #[error("negative span {0} MHz")]
    NegativeSpan(f64),
    #[error("invalid PAPR query: {0}")]
    InvalidPaprQuery(String),
    #[error("PAPR equation has no root in the search bracket")]
    NoPaprRoot,
    #[error("invalid radio profile: {0}")]
    InvalidProfile(String),
}

/// Front-end hardware constants of one radio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioProfile {
    /// DAC power at zero sampling rate (W).
    pub dac_intercept: f64,
    /// DAC power per MS/s.
    pub dac_slope: f64,
    /// ADC power at zero sampling rate (W).
    pub adc_intercept: f64,
    /// ADC power per MS/s.
    pub adc_slope: f64,
    /// Transmit filters and mixer (W).
    pub tx_fixed: f64,
    /// Receive filters, mixer, IFA and LNA (W).
    pub rx_fixed: f64,
    pub papr_db: f64,
    pub drain_efficiency: f64,
}

impl RadioProfile {
    /// USRP-class converters (AD9777 DAC, ADS62P4 ADC), single-point fits.
    pub fn high_slope() -> Self {
        let (dac_intercept, dac_slope) =
            fit_affine_from_points(&[AD9777_POINT]).expect("one point always fits");
        let (adc_intercept, adc_slope) =
            fit_affine_from_points(&[ADS62P4_POINT]).expect("one point always fits");
        Self {
            dac_intercept,
            dac_slope,
            adc_intercept,
            adc_slope,
            tx_fixed: TX_FILTER_W + MIXER_W,
            rx_fixed: RX_FILTER_W + MIXER_W + IFA_W + LNA_W,
            papr_db: DEFAULT_PAPR_DB,
            drain_efficiency: DEFAULT_DRAIN_EFFICIENCY,
        }
    }

    /// Low-power converters. The slopes are the high-slope fits scaled by
    /// [`LOW_SLOPE_SCALE`]; this approximates the DAC3162/ADS4249 curves.
    pub fn low_slope() -> Self {
        let high = Self::high_slope();
        Self {
            dac_slope: high.dac_slope * LOW_SLOPE_SCALE,
            adc_slope: high.adc_slope * LOW_SLOPE_SCALE,
            ..high
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "high-slope" => Some(Self::high_slope()),
            "low-slope" => Some(Self::low_slope()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        let fields = [
            ("dac_intercept", self.dac_intercept),
            ("dac_slope", self.dac_slope),
            ("adc_intercept", self.adc_intercept),
            ("adc_slope", self.adc_slope),
            ("tx_fixed", self.tx_fixed),
            ("rx_fixed", self.rx_fixed),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(PowerError::InvalidProfile(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.papr_db.is_finite() {
            return Err(PowerError::InvalidProfile("papr_db must be finite".into()));
        }
        if !(self.drain_efficiency > 0.0 && self.drain_efficiency <= 1.0) {
            return Err(PowerError::InvalidProfile(format!(
                "drain efficiency must lie in (0, 1], got {}",
                self.drain_efficiency
            )));
        }
        Ok(())
    }

    /// Fixed transmit-path power, `k1 + k_t`.
    pub fn alpha1(&self) -> f64 {
        self.dac_intercept + self.tx_fixed
    }

    /// Transmit-path power per MS/s.
    pub fn alpha2(&self) -> f64 {
        self.dac_slope
    }

    /// Fixed receive-path power, `k3 + k_r`.
    pub fn beta1(&self) -> f64 {
        self.adc_intercept + self.rx_fixed
    }

    pub fn beta2(&self) -> f64 {
        self.adc_slope
    }

    /// Amplifier consumption per emitted watt, `PAPR / η`.
    pub fn k_pa(&self) -> f64 {
        10f64.powf(self.papr_db / 10.0) / self.drain_efficiency
    }

    /// Same amplifier, no circuit consumption at all.
    pub fn without_circuit(&self) -> Self {
        Self {
            dac_intercept: 0.0,
            dac_slope: 0.0,
            adc_intercept: 0.0,
            adc_slope: 0.0,
            tx_fixed: 0.0,
            rx_fixed: 0.0,
            ..*self
        }
    }

    /// Converter slopes multiplied by `factor`.
    pub fn with_slopes_scaled(&self, factor: f64) -> Self {
        Self {
            dac_slope: self.dac_slope * factor,
            adc_slope: self.adc_slope * factor,
            ..*self
        }
    }
}

/// Least-squares affine fit `power = intercept + slope * rate`.
///
/// A single point is fitted through the origin. A negative slope is clamped
/// to zero and the intercept becomes the mean power.
pub fn fit_affine_from_points(points: &[(f64, f64)]) -> Result<(f64, f64), PowerError> {
    if points.is_empty() {
        return Err(PowerError::NoPoints);
    }
    let n = points.len() as f64;
    let mean_r = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_p = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_r).powi(2)).sum();
    if sxx == 0.0 {
        let distinct = points.iter().any(|p| p.1 != points[0].1);
        if distinct {
            return Err(PowerError::DegenerateRates { rate: points[0].0 });
        }
        let (rate, power) = points[0];
        if rate == 0.0 {
            return Ok((power, 0.0));
        }
        return Ok((0.0, power / rate));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_r) * (p.1 - mean_p)).sum();
    let slope = sxy / sxx;
    if slope < 0.0 {
        log::warn!("affine fit produced negative slope {slope}; clamping to 0");
        return Ok((mean_p, 0.0));
    }
    Ok((mean_p - slope * mean_r, slope))
}

/// Worst-case PAPR (dB) for `n_subcarriers`, solving
/// `1 - exp(-N e^{-x} sqrt(pi x / 3)) = gamma` on the decreasing branch of the
/// tail, then subtracting the coding gain.
pub fn papr_db_worstcase(n_subcarriers: f64, gamma: f64, coding_gain_db: f64) -> Result<f64, PowerError> {
    if !(n_subcarriers >= 1.0) || !n_subcarriers.is_finite() {
        return Err(PowerError::InvalidPaprQuery(format!("n_subcarriers = {n_subcarriers}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(PowerError::InvalidPaprQuery(format!("gamma = {gamma}")));
    }
    // N e^{-x} sqrt(pi x/3) = -ln(1 - gamma); the left side peaks at x = 1/2.
    let target = -(-gamma).ln_1p();
    let tail = |x: f64| n_subcarriers * (-x).exp() * (std::f64::consts::PI * x / 3.0).sqrt() - target;
    let (mut lo, mut hi) = (0.5, 1.0e3);
    if tail(lo) < 0.0 || tail(hi) > 0.0 {
        return Err(PowerError::NoPaprRoot);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(10.0 * (0.5 * (lo + hi)).log10() - coding_gain_db)
}

/// Power consumed by one node, broken down by term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    /// Amplifier consumption, `k_pa * sum(p)`.
    pub tx_rf: f64,
    pub tx_circuit: f64,
    pub rx_circuit: f64,
    pub total: f64,
}

impl PowerBreakdown {
    pub fn circuit(&self) -> f64 {
        self.tx_circuit + self.rx_circuit
    }

    fn add(&mut self, other: &PowerBreakdown) {
        self.tx_rf += other.tx_rf;
        self.tx_circuit += other.tx_circuit;
        self.rx_circuit += other.rx_circuit;
        self.total = self.tx_rf + self.tx_circuit + self.rx_circuit;
    }
}

impl std::iter::Sum for PowerBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = PowerBreakdown::default();
        for b in iter {
            acc.add(&b);
        }
        acc
    }
}

/// Contribution of one node to the system power.
///
/// `tx_span` and `rx_span` are in MHz; `tx_powers` are emitted RF powers (W)
/// on the node's outgoing link-channels.
pub fn node_power(
    profile: &RadioProfile,
    tx_span: f64,
    rx_span: f64,
    tx_active: bool,
    rx_active: bool,
    tx_powers: &[f64],
) -> Result<PowerBreakdown, PowerError> {
    if let Some(&p) = tx_powers.iter().find(|p| !(**p >= 0.0)) {
        return Err(PowerError::NegativePower(p));
    }
    for span in [tx_span, rx_span] {
        if !(span >= 0.0) {
            return Err(PowerError::NegativeSpan(span));
        }
    }
    let tx_circuit = if tx_active {
        profile.alpha1() + profile.alpha2() * 2.0 * tx_span
    } else {
        0.0
    };
    let rx_circuit = if rx_active {
        profile.beta1() + profile.beta2() * 2.0 * rx_span
    } else {
        0.0
    };
    let tx_rf = profile.k_pa() * tx_powers.iter().sum::<f64>();
    Ok(PowerBreakdown {
        tx_rf,
        tx_circuit,
        rx_circuit,
        total: tx_rf + tx_circuit + rx_circuit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn single_point_fits_pass_through_origin() {
        let (i, s) = fit_affine_from_points(&[(150.0, 1.056)]).unwrap();
        assert_eq!(i, 0.0);
        assert!(close(s, 0.00704, 1e-12));
        let (i, s) = fit_affine_from_points(&[(125.0, 0.908)]).unwrap();
        assert_eq!(i, 0.0);
        assert!(close(s, 0.007264, 1e-12));
    }

    #[test]
    fn flat_curve_has_zero_slope() {
        let (i, s) = fit_affine_from_points(&[(0.0, 0.1), (100.0, 0.1)]).unwrap();
        assert!(close(i, 0.1, 1e-12));
        assert_eq!(s, 0.0);
    }

    #[test]
    fn exact_line_is_recovered() {
        let pts: Vec<_> = (0..5).map(|k| (k as f64 * 10.0, 0.2 + 0.003 * k as f64 * 10.0)).collect();
        let (i, s) = fit_affine_from_points(&pts).unwrap();
        assert!(close(i, 0.2, 1e-12));
        assert!(close(s, 0.003, 1e-12));
    }

    #[test]
    fn negative_slope_is_clamped() {
        let (i, s) = fit_affine_from_points(&[(10.0, 0.3), (20.0, 0.1)]).unwrap();
        assert_eq!(s, 0.0);
        assert!(close(i, 0.2, 1e-12));
    }

    #[test]
    fn identical_rates_with_distinct_powers_is_an_error() {
        assert_eq!(
            fit_affine_from_points(&[(50.0, 0.1), (50.0, 0.2)]),
            Err(PowerError::DegenerateRates { rate: 50.0 })
        );
        assert_eq!(fit_affine_from_points(&[]), Err(PowerError::NoPoints));
    }

    #[test]
    fn block_constants_sum_as_expected() {
        let p = RadioProfile::high_slope();
        assert!(close(p.tx_fixed, 0.0353, 1e-12));
        assert!(close(p.rx_fixed, 0.0608, 1e-12));
        assert!(close(p.alpha1(), 0.0353, 1e-12));
        assert!(close(p.beta1(), 0.0608, 1e-12));
        assert!(close(p.k_pa(), 10f64.powf(0.9) / 0.75, 1e-12));
        let low = RadioProfile::low_slope();
        assert!(close(low.alpha2(), 0.00704 * 0.05, 1e-12));
        assert_eq!(low.alpha1(), p.alpha1());
    }

    #[test]
    fn papr_for_whole_tv_band_is_about_nine_db() {
        let n = 2000.0 * (698.0 - 54.0) / 6.0;
        let db = papr_db_worstcase(n, 0.005, 3.5).unwrap();
        assert!((db - 9.0).abs() <= 0.5, "got {db}");
    }

    #[test]
    fn papr_root_satisfies_equation() {
        let n = 5000.0;
        let gamma = 0.01;
        let db = papr_db_worstcase(n, gamma, 0.0).unwrap();
        let x = 10f64.powf(db / 10.0);
        let prob = 1.0 - (-n * (-x).exp() * (std::f64::consts::PI * x / 3.0).sqrt()).exp();
        assert!(close(prob, gamma, 1e-9), "{prob}");
    }

    #[test]
    fn papr_grows_with_subcarrier_count() {
        let mut last = f64::NEG_INFINITY;
        for n in [10.0, 100.0, 1e3, 1e4, 1e5, 1e6] {
            let v = papr_db_worstcase(n, 0.005, 0.0).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn single_subcarrier_at_even_odds_has_no_root() {
        // The tail peaks at about 0.44 < ln 2, so nothing crosses.
        assert_eq!(papr_db_worstcase(1.0, 0.5, 0.0), Err(PowerError::NoPaprRoot));
        assert!(papr_db_worstcase(0.0, 0.5, 0.0).is_err());
        assert!(papr_db_worstcase(10.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn idle_node_consumes_nothing() {
        let b = node_power(&RadioProfile::high_slope(), 0.0, 0.0, false, false, &[]).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn active_transmitter_pays_fixed_and_span_terms() {
        let profile = RadioProfile {
            dac_intercept: 0.0,
            dac_slope: 0.007264,
            tx_fixed: 0.1,
            ..RadioProfile::high_slope()
        };
        let b = node_power(&profile, 42.0, 0.0, true, false, &[0.0]).unwrap();
        assert!(close(b.total, 0.1 + 0.007264 * 84.0, 1e-12));
        assert!((b.total - 0.710).abs() < 1e-3);
    }

    #[test]
    fn amplifier_term_scales_emitted_power() {
        let profile = RadioProfile::high_slope().without_circuit();
        let b = node_power(&profile, 0.0, 0.0, true, false, &[0.01]).unwrap();
        assert!(close(b.tx_rf, 0.10593, 1e-4));
        assert_eq!(b.total, b.tx_rf);
    }

    #[test]
    fn negative_power_is_rejected() {
        let err = node_power(&RadioProfile::high_slope(), 0.0, 0.0, true, false, &[-1.0]).unwrap_err();
        assert_eq!(err, PowerError::NegativePower(-1.0));
    }

    #[test]
    fn node_power_is_linear_in_span_and_power() {
        let p = RadioProfile::high_slope();
        let f = |q: f64, pw: f64| node_power(&p, q, 2.0 * q, true, true, &[pw]).unwrap().total;
        let a = f(6.0, 0.01);
        let b = f(18.0, 0.05);
        let mid = f(12.0, 0.03);
        assert!(close(mid, 0.5 * (a + b), 1e-12));
    }

    #[test]
    fn flat_converters_make_span_irrelevant() {
        let p = RadioProfile::high_slope().with_slopes_scaled(0.0);
        let narrow = node_power(&p, 6.0, 6.0, true, true, &[0.02]).unwrap();
        let wide = node_power(&p, 600.0, 300.0, true, true, &[0.02]).unwrap();
        assert_eq!(narrow.total, wide.total);
    }
}
