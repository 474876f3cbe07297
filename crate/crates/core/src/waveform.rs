//! FMCW chirp-sequence and control-channel parameters.
//!
//! Every other module consumes [`RadarWaveformConfig`] and [`CommConfig`]
//! through [`derive_quantities`], which validates both and computes the
//! quantities the interference analysis and the MAC timing depend on:
//! maximum reflection delay, detectable range/velocity, resolutions, the
//! two duty cycles and the control-packet airtime.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Parameters of a sawtooth FMCW chirp sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarWaveformConfig {
    /// Start frequency of each chirp (Hz).
    pub carrier_hz: f64,
    /// Sweep bandwidth of one chirp (Hz).
    pub sweep_bandwidth_hz: f64,
    /// Chirp duration (s).
    pub chirp_duration_s: f64,
    /// Chirps per frame.
    pub chirps_per_frame: u32,
    /// Frame duration including idle time (s).
    pub frame_duration_s: f64,
    /// Receiver bandwidth of interest, i.e. width of the beat band (Hz).
    pub bandwidth_of_interest_hz: f64,
    /// Complex ADC bandwidth (Hz).
    pub adc_bandwidth_hz: f64,
    /// Transmit power (W).
    pub tx_power_w: f64,
    /// Target radar cross section (m^2).
    pub rcs_m2: f64,
}

impl Default for RadarWaveformConfig {
    /// 77 GHz automotive operating point: 20 µs chirps, 99 chirps in a
    /// 20 ms frame, 0.96 GHz sweep, 50 MHz beat band, 100 MHz ADC.
    fn default() -> Self {
        Self {
            carrier_hz: 77e9,
            sweep_bandwidth_hz: 0.96e9,
            chirp_duration_s: 20e-6,
            chirps_per_frame: 99,
            frame_duration_s: 20e-3,
            bandwidth_of_interest_hz: 50e6,
            adc_bandwidth_hz: 100e6,
            tx_power_w: 5e-3,
            rcs_m2: 100.0,
        }
    }
}

impl RadarWaveformConfig {
    /// Checks the structural invariants of the chirp sequence.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("radar.carrier_hz", self.carrier_hz)?;
        positive("radar.sweep_bandwidth_hz", self.sweep_bandwidth_hz)?;
        positive("radar.chirp_duration_s", self.chirp_duration_s)?;
        positive("radar.frame_duration_s", self.frame_duration_s)?;
        positive("radar.adc_bandwidth_hz", self.adc_bandwidth_hz)?;
        non_negative("radar.bandwidth_of_interest_hz", self.bandwidth_of_interest_hz)?;
        non_negative("radar.tx_power_w", self.tx_power_w)?;
        non_negative("radar.rcs_m2", self.rcs_m2)?;
        if self.chirps_per_frame == 0 {
            return Err(ConfigError::invalid("radar.chirps_per_frame", "must be at least 1"));
        }
        if self.bandwidth_of_interest_hz > self.adc_bandwidth_hz {
            return Err(ConfigError::invalid(
                "radar.bandwidth_of_interest_hz",
                format!(
                    "{} Hz exceeds the ADC bandwidth {} Hz",
                    self.bandwidth_of_interest_hz, self.adc_bandwidth_hz
                ),
            ));
        }
        let slot = f64::from(self.chirps_per_frame + 1) * self.chirp_duration_s;
        // (N+1)T <= T_f also implies N*T <= T_f.
        if slot > self.frame_duration_s * (1.0 + 1e-12) {
            return Err(ConfigError::invalid(
                "radar.frame_duration_s",
                format!(
                    "frame of {} s cannot hold (N+1)*T = {} s",
                    self.frame_duration_s, slot
                ),
            ));
        }
        Ok(())
    }

    /// Maximum delay of intended reflections, `T * B_max / B_r`.
    pub fn max_delay_s(&self) -> f64 {
        self.chirp_duration_s * self.bandwidth_of_interest_hz / self.sweep_bandwidth_hz
    }

    /// Chirp slope (Hz/s).
    pub fn slope(&self) -> f64 {
        self.sweep_bandwidth_hz / self.chirp_duration_s
    }

    /// Radar duty cycle `N*T/T_f`.
    pub fn duty_cycle(&self) -> f64 {
        f64::from(self.chirps_per_frame) * self.chirp_duration_s / self.frame_duration_s
    }

    /// Duty cycle of a scheduling slot, `(N+1)*T/T_f`.
    pub fn modified_duty_cycle(&self) -> f64 {
        f64::from(self.chirps_per_frame + 1) * self.chirp_duration_s / self.frame_duration_s
    }

    /// Duration of one scheduling slot, `(N+1)*T`.
    pub fn slot_duration_s(&self) -> f64 {
        f64::from(self.chirps_per_frame + 1) * self.chirp_duration_s
    }

    /// Radar wavelength at the chirp start frequency.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Fast-time samples per chirp, `floor(T * f_s)`.
    pub fn samples_per_chirp(&self) -> usize {
        // Guard against T*f_s landing a hair below an integer.
        (self.chirp_duration_s * self.adc_bandwidth_hz * (1.0 + 1e-12)).floor() as usize
    }
}

/// Parameters of the communication subchannel and its CSMA contention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommConfig {
    /// Communication carrier (Hz).
    pub carrier_hz: f64,
    /// Occupied bandwidth (Hz).
    pub bandwidth_hz: f64,
    /// Transmit power (W).
    pub tx_power_w: f64,
    /// QAM constellation size.
    pub constellation_size: u32,
    /// Pulse-shaping roll-off.
    pub rolloff: f64,
    /// Control packet size in bits.
    pub packet_bits: u32,
    /// CSMA slot time (s).
    pub slot_time_s: f64,
    /// Maximum contention window at backoff stage 0.
    pub max_contention_window: u32,
    /// Maximum backoff stage.
    pub max_backoff_stage: u32,
}

impl Default for CommConfig {
    /// 40 MHz 16-QAM control channel carved from the top of a 1 GHz band,
    /// 4800-bit packets, 10 µs slot time, `W0 = 6`, three backoff stages.
    fn default() -> Self {
        Self {
            carrier_hz: 77.98e9,
            bandwidth_hz: 40e6,
            tx_power_w: 5e-3,
            constellation_size: 16,
            rolloff: 0.0,
            packet_bits: 4800,
            slot_time_s: 10e-6,
            max_contention_window: 6,
            max_backoff_stage: 3,
        }
    }
}

impl CommConfig {
    pub fn validate(&self, radar: &RadarWaveformConfig) -> Result<(), ConfigError> {
        positive("comm.carrier_hz", self.carrier_hz)?;
        non_negative("comm.bandwidth_hz", self.bandwidth_hz)?;
        non_negative("comm.tx_power_w", self.tx_power_w)?;
        non_negative("comm.rolloff", self.rolloff)?;
        positive("comm.slot_time_s", self.slot_time_s)?;
        if self.bandwidth_hz > radar.adc_bandwidth_hz {
            return Err(ConfigError::invalid(
                "comm.bandwidth_hz",
                format!(
                    "{} Hz exceeds the ADC bandwidth {} Hz",
                    self.bandwidth_hz, radar.adc_bandwidth_hz
                ),
            ));
        }
        if self.constellation_size < 2 || !self.constellation_size.is_power_of_two() {
            return Err(ConfigError::invalid(
                "comm.constellation_size",
                "must be a power of two and at least 2",
            ));
        }
        if self.max_contention_window == 0 {
            return Err(ConfigError::invalid("comm.max_contention_window", "must be at least 1"));
        }
        if self.max_backoff_stage > 16 {
            return Err(ConfigError::invalid("comm.max_backoff_stage", "must be at most 16"));
        }
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.constellation_size.trailing_zeros()
    }

    /// Symbol rate `B_c / (1 + alpha)`.
    pub fn symbol_rate(&self) -> f64 {
        self.bandwidth_hz / (1.0 + self.rolloff)
    }

    /// Airtime of one control packet. Infinite when the channel has no bandwidth.
    pub fn packet_duration_s(&self) -> f64 {
        let symbols = f64::from(self.packet_bits) / f64::from(self.bits_per_symbol());
        symbols / self.symbol_rate()
    }

    /// Largest contention window at the given backoff stage, `2^b * W0`.
    pub fn contention_window(&self, stage: u32) -> u64 {
        (1u64 << stage.min(self.max_backoff_stage)) * u64::from(self.max_contention_window)
    }
}

/// Quantities derived from a validated radar/comm pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedQuantities {
    pub t_max_s: f64,
    pub d_max_m: f64,
    pub v_max_mps: f64,
    pub range_resolution_m: f64,
    pub velocity_resolution_mps: f64,
    pub duty_cycle: f64,
    pub modified_duty_cycle: f64,
    pub packet_duration_s: f64,
}

pub fn derive_quantities(
    radar: &RadarWaveformConfig,
    comm: &CommConfig,
) -> Result<DerivedQuantities, ConfigError> {
    radar.validate()?;
    comm.validate(radar)?;
    let t_max_s = radar.max_delay_s();
    Ok(DerivedQuantities {
        t_max_s,
        d_max_m: SPEED_OF_LIGHT * t_max_s / 2.0,
        v_max_mps: SPEED_OF_LIGHT / (4.0 * radar.carrier_hz * radar.chirp_duration_s),
        range_resolution_m: SPEED_OF_LIGHT / (2.0 * radar.sweep_bandwidth_hz),
        velocity_resolution_mps: SPEED_OF_LIGHT
            / (2.0
                * radar.carrier_hz
                * f64::from(radar.chirps_per_frame)
                * radar.chirp_duration_s),
        duty_cycle: radar.duty_cycle(),
        modified_duty_cycle: radar.modified_duty_cycle(),
        packet_duration_s: comm.packet_duration_s(),
    })
}

/// Instantaneous transmit frequency `t` seconds into a chirp.
pub fn instantaneous_frequency(radar: &RadarWaveformConfig, t: f64) -> Result<f64, ConfigError> {
    if !(0.0..=radar.chirp_duration_s).contains(&t) {
        return Err(ConfigError::invalid(
            "t",
            format!("{t} s lies outside the chirp [0, {}]", radar.chirp_duration_s),
        ));
    }
    Ok(radar.carrier_hz + radar.slope() * t)
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be positive and finite, got {value}")))
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be non-negative and finite, got {value}")))
    }
}
