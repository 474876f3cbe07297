//! Closed-form interference quantities for a homogeneous FMCW network.
//!
//! Covers signal-to-interference ratios for the three cross-system cases
//! (radar-to-radar, communication-to-radar, radar-to-communication),
//! vulnerable periods, the two-radar interference probability, the
//! periodic time ratios of the communication cases, detection probability
//! of a non-fluctuating target and QAM symbol error rates.
//!
//! All ratios are linear; conversion to dB is left to the caller.

use std::f64::consts::PI;

use statrs::function::erf::erfc;

use crate::error::ConfigError;
use crate::waveform::{CommConfig, RadarWaveformConfig};

/// Distances and velocities of the desired target and the interferer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceGeometry {
    /// Target distance (m).
    pub d: f64,
    /// Interferer distance (m).
    pub d_i: f64,
    /// Target relative velocity (m/s).
    pub v: f64,
    /// Interferer relative velocity (m/s).
    pub v_i: f64,
    /// Longest interference path as a multiple of the maximum round trip.
    pub alpha_d: f64,
}

impl InterferenceGeometry {
    pub fn new(d: f64, d_i: f64) -> Self {
        Self { d, d_i, v: 0.0, v_i: 0.0, alpha_d: 1.0 }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.d > 0.0) {
            return Err(ConfigError::invalid("geometry.d", "target distance must be positive"));
        }
        if !(self.d_i > 0.0) {
            return Err(ConfigError::invalid("geometry.d_i", "interferer distance must be positive"));
        }
        if !(self.alpha_d > 0.0) {
            return Err(ConfigError::invalid("geometry.alpha_d", "path factor must be positive"));
        }
        Ok(())
    }
}

/// Echo-to-direct-interference power ratio between two identical radars.
pub fn sir_r2r(geom: &InterferenceGeometry, radar: &RadarWaveformConfig) -> f64 {
    radar.rcs_m2 * geom.d_i.powi(2) / (4.0 * PI * geom.d.powi(4))
}

/// Radar echo versus a communication transmitter at `d_i`. `+inf` when `P_c = 0`.
pub fn sir_c2r(geom: &InterferenceGeometry, radar: &RadarWaveformConfig, comm: &CommConfig) -> f64 {
    let num = radar.tx_power_w * radar.rcs_m2 * geom.d_i.powi(2);
    let den = comm.tx_power_w * 4.0 * PI * geom.d.powi(4);
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Communication link at `d` versus a radar at `d_i`. `+inf` when `P_r = 0`.
pub fn sir_r2c(geom: &InterferenceGeometry, radar: &RadarWaveformConfig, comm: &CommConfig) -> f64 {
    let num = comm.tx_power_w * geom.d_i.powi(2);
    let den = radar.tx_power_w * geom.d.powi(2);
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Interval of interferer start offsets (relative to the victim chirp) that
/// land inside the victim's beat band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VulnerablePeriod {
    pub lo: f64,
    pub hi: f64,
}

impl VulnerablePeriod {
    pub fn duration(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, tau: f64) -> bool {
        self.lo < tau && tau < self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VulnerableMode {
    /// `[-alpha_d * T_max, T_max]`.
    #[default]
    Approximate,
    /// Both ends widened by the Doppler delay bound `1 / (4 B_r)`.
    Exact,
}

pub fn vulnerable_period_r2r(
    radar: &RadarWaveformConfig,
    alpha_d: f64,
    mode: VulnerableMode,
) -> VulnerablePeriod {
    let t_max = radar.max_delay_s();
    let pad = match mode {
        VulnerableMode::Approximate => 0.0,
        VulnerableMode::Exact => 1.0 / (4.0 * radar.sweep_bandwidth_hz),
    };
    VulnerablePeriod { lo: -alpha_d * t_max - pad, hi: t_max + pad }
}

/// Size of the union of per-chirp vulnerable periods over a whole frame,
/// `k = -(N-1) ..= N-1`.
///
/// Equals `(2N-1)(1+alpha_d)T_max` while neighbouring periods are disjoint;
/// once they overlap the union is contiguous.
pub fn frame_vulnerable_duration(radar: &RadarWaveformConfig, alpha_d: f64) -> f64 {
    let width = (1.0 + alpha_d) * radar.max_delay_s();
    let gaps = 2.0 * f64::from(radar.chirps_per_frame - 1);
    gaps * width.min(radar.chirp_duration_s) + width
}

/// Probability that a second radar with a uniformly random frame offset
/// interferes with at least one chirp of the victim frame.
pub fn p_r2r(radar: &RadarWaveformConfig, alpha_d: f64) -> f64 {
    clamp_probability("p_r2r", frame_vulnerable_duration(radar, alpha_d) / radar.frame_duration_s)
}

/// Fraction of time a radar receiver sees a continuously transmitting
/// communication signal in its beat band.
pub fn c2r_time_ratio(radar: &RadarWaveformConfig, comm: &CommConfig) -> f64 {
    let b_r = radar.sweep_bandwidth_hz;
    let occupied = (radar.bandwidth_of_interest_hz + comm.bandwidth_hz).min(b_r);
    clamp_probability("c2r_time_ratio", radar.duty_cycle() * occupied / b_r)
}

/// Fraction of time a communication receiver sees radar chirps in its band.
pub fn r2c_time_ratio(radar: &RadarWaveformConfig, comm: &CommConfig) -> f64 {
    let b_r = radar.sweep_bandwidth_hz;
    clamp_probability("r2c_time_ratio", radar.duty_cycle() * comm.bandwidth_hz.min(b_r) / b_r)
}

/// Periodic window inside chirp `k` during which a signal disturbs the other system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VulnerableWindow {
    pub start_s: f64,
    pub duration_s: f64,
}

/// Window of chirp `k` during which communication at Doppler `f_d_c` falls
/// into the radar beat band.
pub fn c2r_vulnerable_window(
    radar: &RadarWaveformConfig,
    comm: &CommConfig,
    k: u32,
    f_d_c: f64,
) -> VulnerableWindow {
    let b_r = radar.sweep_bandwidth_hz;
    let t = radar.chirp_duration_s;
    let offset = (comm.carrier_hz + f_d_c - radar.carrier_hz - comm.bandwidth_hz / 2.0) / b_r;
    VulnerableWindow {
        start_s: (f64::from(k) + offset) * t,
        duration_s: (radar.bandwidth_of_interest_hz + comm.bandwidth_hz).min(b_r) / b_r * t,
    }
}

/// Window of chirp `k` during which a radar at Doppler `f_d_i` sweeps
/// through the communication band.
pub fn r2c_vulnerable_window(
    radar: &RadarWaveformConfig,
    comm: &CommConfig,
    k: u32,
    f_d_i: f64,
) -> VulnerableWindow {
    let b_r = radar.sweep_bandwidth_hz;
    let t = radar.chirp_duration_s;
    let offset = (comm.carrier_hz - radar.carrier_hz - f_d_i - comm.bandwidth_hz / 2.0) / b_r;
    VulnerableWindow {
        start_s: (f64::from(k) + offset) * t,
        duration_s: comm.bandwidth_hz.min(b_r) / b_r * t,
    }
}

/// Detection probability of a non-fluctuating target in a square-law
/// detector at the given false-alarm probability and linear SINR.
pub fn pd_from_sinr(pfa: f64, sinr: f64) -> Result<f64, ConfigError> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(ConfigError::invalid("pfa", format!("must lie in (0, 1), got {pfa}")));
    }
    if !(sinr >= 0.0) {
        return Err(ConfigError::invalid("sinr", format!("must be non-negative, got {sinr}")));
    }
    let x = erfc_inv(2.0 * pfa);
    Ok(clamp_probability("pd", 0.5 * erfc(x - sinr.sqrt())))
}

/// Inverse complementary error function on `(0, 2)`.
///
/// Safeguarded Newton iteration on `erfc`, falling back to bisection when a
/// step leaves the bracket. Converges to ~1e-15 relative.
pub fn erfc_inv(y: f64) -> f64 {
    if y <= 0.0 {
        return f64::INFINITY;
    }
    if y >= 2.0 {
        return f64::NEG_INFINITY;
    }
    if y == 1.0 {
        return 0.0;
    }
    // erfc is strictly decreasing: erfc(lo) > y > erfc(hi).
    let (mut lo, mut hi) = (-1.0, 1.0);
    while erfc(lo) <= y {
        lo *= 2.0;
    }
    while erfc(hi) >= y {
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let e = erfc(x);
        if e == y {
            return x;
        }
        if e > y {
            lo = x;
        } else {
            hi = x;
        }
        // Newton on ln erfc keeps the step well scaled deep in the tail.
        let slope = -2.0 / PI.sqrt() * (-x * x).exp() / e;
        let mut next = x - (e.ln() - y.ln()) / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * x.abs() {
            break;
        }
    }
    x
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Symbol error rate of Gray-mapped rectangular QAM in AWGN at linear
/// symbol SNR `snr`.
///
/// Square constellations use the exact `1 - (1 - 2(1 - 1/sqrt(M)) Q(sqrt(3 snr/(M-1))))^2`;
/// odd bit counts split into an `I x J` grid with `I = 2J`.
pub fn ser_qam(constellation_size: u32, snr: f64) -> Result<f64, ConfigError> {
    if constellation_size < 2 || !constellation_size.is_power_of_two() {
        return Err(ConfigError::invalid(
            "constellation_size",
            format!("must be a power of two >= 2, got {constellation_size}"),
        ));
    }
    if !(snr >= 0.0) {
        return Err(ConfigError::invalid("snr", format!("must be non-negative, got {snr}")));
    }
    let (i, j) = qam_grid(constellation_size);
    let (i, j) = (f64::from(i), f64::from(j));
    let arg = (6.0 * snr / (i * i + j * j - 2.0)).sqrt();
    let q = q_function(arg);
    let p_i = 2.0 * (1.0 - 1.0 / i) * q;
    let p_j = 2.0 * (1.0 - 1.0 / j) * q;
    Ok(clamp_probability("ser_qam", 1.0 - (1.0 - p_i) * (1.0 - p_j)))
}

/// Points per in-phase and quadrature axis.
pub fn qam_grid(constellation_size: u32) -> (u32, u32) {
    let bits = constellation_size.trailing_zeros();
    (1 << bits.div_ceil(2), 1 << (bits / 2))
}

/// Upper bound on SER when a fraction `alpha_int` of symbols is corrupted
/// by interference: `alpha_int + ps (1 - alpha_int)`.
pub fn ser_with_interference(ps: f64, alpha_int: f64) -> Result<f64, ConfigError> {
    if !(0.0..=1.0).contains(&ps) {
        return Err(ConfigError::invalid("ps", format!("must lie in [0, 1], got {ps}")));
    }
    if !(0.0..=1.0).contains(&alpha_int) {
        return Err(ConfigError::invalid("alpha_int", format!("must lie in [0, 1], got {alpha_int}")));
    }
    Ok(alpha_int + ps * (1.0 - alpha_int))
}

/// Low-SINR approximation of the interfered-symbol fraction, `B_c / B_r`.
pub fn alpha_int_low_sinr(radar: &RadarWaveformConfig, comm: &CommConfig) -> f64 {
    (comm.bandwidth_hz / radar.sweep_bandwidth_hz).min(1.0)
}

pub(crate) fn clamp_probability(name: &str, p: f64) -> f64 {
    if p.is_nan() {
        log::warn!("{name}: NaN probability clamped to 0");
        return 0.0;
    }
    if !(0.0..=1.0).contains(&p) {
        log::debug!("{name}: probability {p} clamped to [0, 1]");
    }
    p.clamp(0.0, 1.0)
}
