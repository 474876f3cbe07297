//! Baseband signal chain: dechirped echoes and interference, range-Doppler
//! processing, greatest-of CA-CFAR detection and a QAM symbol-error Monte
//! Carlo under chirp interference.
//!
//! Complex samples are in volts across a unit load, so `|x|^2` is watts.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::analytic::{qam_grid, InterferenceGeometry};
use crate::error::{ConfigError, PhyError};
use crate::waveform::{CommConfig, RadarWaveformConfig, SPEED_OF_LIGHT};

const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann if n <= 1 => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// Front-end and detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyConfig {
    /// Gain of each of the transmit and receive antennas (dBi).
    pub antenna_gain_dbi: f64,
    pub noise_figure_db: f64,
    pub noise_temperature_k: f64,
    /// Multiplies the thermal noise power.
    pub noise_scale: f64,
    pub window: Window,
    /// CFAR training cells, split evenly across both sides.
    pub cfar_training: usize,
    /// CFAR guard cells, split evenly across both sides.
    pub cfar_guard: usize,
    pub cfar_pfa: f64,
    /// Coherent gain applied to the echo (not to noise or interference) when
    /// forming the target-cell SINR for detection curves.
    pub processing_gain: f64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            antenna_gain_dbi: 20.0,
            noise_figure_db: 4.5,
            noise_temperature_k: 290.0,
            noise_scale: 1.0,
            window: Window::Hann,
            cfar_training: 50,
            cfar_guard: 2,
            cfar_pfa: 1e-6,
            processing_gain: 99.0,
        }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.antenna_gain_dbi.is_finite() {
            return Err(ConfigError::invalid("phy.antenna_gain_dbi", "must be finite"));
        }
        if !(self.noise_temperature_k > 0.0) {
            return Err(ConfigError::invalid("phy.noise_temperature_k", "must be positive"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(ConfigError::invalid("phy.noise_scale", "must be non-negative"));
        }
        if !(self.cfar_pfa > 0.0 && self.cfar_pfa < 1.0) {
            return Err(ConfigError::invalid("phy.cfar_pfa", "must lie in (0, 1)"));
        }
        if self.cfar_training == 0 || self.cfar_training % 2 == 1 {
            return Err(ConfigError::invalid("phy.cfar_training", "must be even and positive"));
        }
        if self.cfar_guard % 2 == 1 {
            return Err(ConfigError::invalid("phy.cfar_guard", "must be even"));
        }
        if !(self.processing_gain >= 1.0) {
            return Err(ConfigError::invalid("phy.processing_gain", "must be at least 1"));
        }
        Ok(())
    }

    pub fn antenna_gain(&self) -> f64 {
        10f64.powf(self.antenna_gain_dbi / 10.0)
    }

    /// `k T0 F B` times the noise scale.
    pub fn noise_power_w(&self, bandwidth_hz: f64) -> f64 {
        let f = 10f64.powf(self.noise_figure_db / 10.0);
        BOLTZMANN * self.noise_temperature_k * f * bandwidth_hz * self.noise_scale
    }
}

/// Echo amplitude from the radar equation, `sqrt(P G^2 sigma lambda^2 / ((4 pi)^3 d^4))`.
pub fn echo_amplitude(radar: &RadarWaveformConfig, phy: &PhyConfig, d: f64) -> f64 {
    let g = phy.antenna_gain();
    let lambda = radar.wavelength_m();
    (radar.tx_power_w * g * g * radar.rcs_m2 * lambda * lambda / ((4.0 * PI).powi(3) * d.powi(4))).sqrt()
}

/// One-way line-of-sight amplitude of a transmitter with power `power_w` at `d`.
pub fn los_amplitude(power_w: f64, wavelength_m: f64, phy: &PhyConfig, d: f64) -> f64 {
    let g = phy.antenna_gain();
    (power_w * g * g * wavelength_m * wavelength_m / (4.0 * PI * d).powi(2)).sqrt()
}

/// Chirp-major sampled baseband, `samples[k * per_chirp + n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub t0: f64,
    pub n_chirps: usize,
    pub per_chirp: usize,
}

impl BasebandSignal {
    pub fn zeros(n_chirps: usize, per_chirp: usize, sample_rate: f64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); n_chirps * per_chirp],
            sample_rate,
            t0: 0.0,
            n_chirps,
            per_chirp,
        }
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len().max(1) as f64
    }

    fn check_shape(&self) -> Result<(), PhyError> {
        let expected = self.n_chirps * self.per_chirp;
        if self.samples.len() != expected || expected == 0 {
            return Err(PhyError::ShapeMismatch {
                expected,
                actual: self.samples.len(),
                chirps: self.n_chirps,
                per_chirp: self.per_chirp,
            });
        }
        Ok(())
    }
}

/// Dechirped echo of a point target:
/// `a exp(j 2 pi [-(2 d0/c)(B_r/T) t + 2 f_D k T - (2 d0/c) f_r])`.
pub fn synth_dechirped_echo(
    radar: &RadarWaveformConfig,
    d0: f64,
    v: f64,
    amplitude: f64,
    n_chirps: usize,
) -> Result<BasebandSignal, PhyError> {
    if !(amplitude >= 0.0) {
        return Err(PhyError::NegativeAmplitude(amplitude));
    }
    if !(d0 >= 0.0) {
        return Err(ConfigError::invalid("target.d0", format!("must be non-negative, got {d0}")).into());
    }
    let per_chirp = radar.samples_per_chirp();
    let fs = radar.adc_bandwidth_hz;
    let mut sig = BasebandSignal::zeros(n_chirps, per_chirp, fs);
    let tau = 2.0 * d0 / SPEED_OF_LIGHT;
    let f_beat = -tau * radar.slope();
    let f_d = v * radar.carrier_hz / SPEED_OF_LIGHT;
    let phase0 = cycles(-tau * radar.carrier_hz);
    for k in 0..n_chirps {
        let slow = cycles(2.0 * f_d * k as f64 * radar.chirp_duration_s);
        for n in 0..per_chirp {
            let t = n as f64 / fs;
            let ph = cycles(f_beat * t) + slow + phase0;
            sig.samples[k * per_chirp + n] = Complex64::from_polar(amplitude, 2.0 * PI * ph);
        }
    }
    Ok(sig)
}

/// Adds circular complex Gaussian noise of total power `noise_power_w`.
pub fn add_awgn<R: Rng + ?Sized>(signal: &mut BasebandSignal, noise_power_w: f64, rng: &mut R) {
    let s = (noise_power_w / 2.0).sqrt();
    for x in &mut signal.samples {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *x += Complex64::new(re * s, im * s);
    }
}

/// Adds the dechirped one-way signal of an identical radar whose first chirp
/// starts `tau` seconds after the victim's, at distance `d_i` closing at `v_i`.
/// Only the parts whose beat frequency lies in `[-B_max, 0]` pass the
/// receive filter.
pub fn inject_r2r_interferer(
    victim: &BasebandSignal,
    radar: &RadarWaveformConfig,
    d_i: f64,
    v_i: f64,
    tau: f64,
    amplitude: f64,
) -> Result<BasebandSignal, PhyError> {
    victim.check_shape()?;
    if !(amplitude >= 0.0) {
        return Err(PhyError::NegativeAmplitude(amplitude));
    }
    let mut out = victim.clone();
    let t_chirp = radar.chirp_duration_s;
    let slope = radar.slope();
    let f_d = v_i * radar.carrier_hz / SPEED_OF_LIGHT;
    let b_max = radar.bandwidth_of_interest_hz;
    let n_i = i64::from(radar.chirps_per_frame);
    let delay = tau + d_i / SPEED_OF_LIGHT;
    for k in 0..victim.n_chirps {
        for n in 0..victim.per_chirp {
            let u = n as f64 / victim.sample_rate;
            let t = k as f64 * t_chirp + u;
            let j = ((t - delay) / t_chirp).floor() as i64;
            if j < 0 || j >= n_i {
                continue;
            }
            let dlt = delay + (j - k as i64) as f64 * t_chirp;
            let beat = -slope * dlt + f_d;
            if !(-b_max..=0.0).contains(&beat) {
                continue;
            }
            let ph = cycles(-radar.carrier_hz * dlt)
                + cycles(slope / 2.0 * (dlt * dlt - 2.0 * u * dlt))
                + cycles(f_d * t);
            out.samples[k * victim.per_chirp + n] += Complex64::from_polar(amplitude, 2.0 * PI * ph);
        }
    }
    Ok(out)
}

/// Fractional part of a phase in cycles.
fn cycles(x: f64) -> f64 {
    x - x.floor()
}

/// Periodogram over fast and slow time. `power[v * n_range + r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub power: Vec<f64>,
    /// Ascending range of each column (m).
    pub range_axis: Vec<f64>,
    /// Ascending velocity of each row (m/s).
    pub velocity_axis: Vec<f64>,
}

impl RangeDopplerMap {
    pub fn n_range(&self) -> usize {
        self.range_axis.len()
    }

    pub fn n_velocity(&self) -> usize {
        self.velocity_axis.len()
    }

    pub fn at(&self, v: usize, r: usize) -> f64 {
        self.power[v * self.n_range() + r]
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// `(velocity row, range column)` of the strongest cell.
    pub fn argmax(&self) -> (usize, usize) {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        (i / self.n_range(), i % self.n_range())
    }

    /// Nearest cell to a range/velocity pair.
    pub fn cell_of(&self, range: f64, velocity: f64) -> (usize, usize) {
        (nearest(&self.velocity_axis, velocity), nearest(&self.range_axis, range))
    }

    /// Power summed over a `(2h+1) x (2h+1)` neighbourhood, clipped to the map.
    pub fn neighbourhood_power(&self, v: usize, r: usize, h: usize) -> f64 {
        let mut sum = 0.0;
        for vi in v.saturating_sub(h)..=(v + h).min(self.n_velocity() - 1) {
            for ri in r.saturating_sub(h)..=(r + h).min(self.n_range() - 1) {
                sum += self.at(vi, ri);
            }
        }
        sum
    }

    /// CSV with one row per velocity cell and power in dB; the first line
    /// holds the range axis.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("velocity_mps");
        for r in &self.range_axis {
            out.push_str(&format!(",{r:.4}"));
        }
        out.push('\n');
        for (vi, v) in self.velocity_axis.iter().enumerate() {
            out.push_str(&format!("{v:.4}"));
            for ri in 0..self.n_range() {
                let p = self.at(vi, ri);
                let db = if p > 0.0 { 10.0 * p.log10() } else { -400.0 };
                out.push_str(&format!(",{db:.3}"));
            }
            out.push('\n');
        }
        out
    }
}

fn nearest(axis: &[f64], x: f64) -> usize {
    let i = axis.partition_point(|&a| a < x);
    if i == 0 {
        0
    } else if i == axis.len() || (x - axis[i - 1]) <= (axis[i] - x) {
        i - 1
    } else {
        i
    }
}

/// Windowed 2-D FFT. Cells hold `|X|^2 / (n_fast n_slow)`, so the map total
/// equals the windowed signal energy.
pub fn range_doppler(
    signal: &BasebandSignal,
    radar: &RadarWaveformConfig,
    window: Window,
) -> Result<RangeDopplerMap, PhyError> {
    signal.check_shape()?;
    let (ns, nf) = (signal.n_chirps, signal.per_chirp);
    let wf = window.coefficients(nf);
    let ws = window.coefficients(ns);
    let mut data: Vec<Complex64> = signal
        .samples
        .iter()
        .enumerate()
        .map(|(i, &x)| x * (wf[i % nf] * ws[i / nf]))
        .collect();

    let mut planner = FftPlanner::new();
    let fast = planner.plan_fft_forward(nf);
    fast.process(&mut data);
    let slow = planner.plan_fft_forward(ns);
    let mut column = vec![Complex64::new(0.0, 0.0); ns];
    for c in 0..nf {
        for k in 0..ns {
            column[k] = data[k * nf + c];
        }
        slow.process(&mut column);
        for k in 0..ns {
            data[k * nf + c] = column[k];
        }
    }

    let scale = 1.0 / (nf * ns) as f64;
    let half_f = nf / 2;
    let half_s = ns / 2;
    let mut power = vec![0.0; nf * ns];
    for row in 0..ns {
        // Row `row` holds slow-time bin `row - half_s`.
        let kb = (row + ns - half_s) % ns;
        for col in 0..nf {
            // Columns run through the shifted fast-time bins backwards, so
            // range (minus beat frequency) ascends.
            let shifted = nf - 1 - col;
            let fb = (shifted + nf - half_f) % nf;
            power[row * nf + col] = data[kb * nf + fb].norm_sqr() * scale;
        }
    }
    let fs = signal.sample_rate;
    let range_axis = (0..nf)
        .map(|col| {
            let f = ((nf - 1 - col) as f64 - half_f as f64) * fs / nf as f64;
            -f * SPEED_OF_LIGHT / (2.0 * radar.slope())
        })
        .collect();
    let velocity_axis = (0..ns)
        .map(|row| {
            let f = (row as f64 - half_s as f64) / (ns as f64 * radar.chirp_duration_s);
            f * SPEED_OF_LIGHT / (2.0 * radar.carrier_hz)
        })
        .collect();
    Ok(RangeDopplerMap { power, range_axis, velocity_axis })
}

/// Windowed signal energy, the Parseval counterpart of [`RangeDopplerMap::total_power`].
pub fn windowed_energy(signal: &BasebandSignal, window: Window) -> f64 {
    let wf = window.coefficients(signal.per_chirp);
    let ws = window.coefficients(signal.n_chirps);
    signal
        .samples
        .iter()
        .enumerate()
        .map(|(i, x)| x.norm_sqr() * (wf[i % signal.per_chirp] * ws[i / signal.per_chirp]).powi(2))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub range: f64,
    pub velocity: f64,
    pub power: f64,
    pub velocity_cell: usize,
    pub range_cell: usize,
}

/// Multiplier on the larger per-side training sum for a greatest-of CA-CFAR
/// with `n` cells per side in exponential noise, found by bisection on
/// `Pfa = 2 (1+T)^-n - 2 sum_{k<n} C(n-1+k, k) (2+T)^-(n+k)`.
pub fn goca_sum_multiplier(n: usize, pfa: f64) -> f64 {
    let pfa_of = |t: f64| {
        let nf = n as f64;
        let mut sum = 0.0;
        let mut binom = 1.0;
        for k in 0..n {
            if k > 0 {
                binom *= (nf - 1.0 + k as f64) / k as f64;
            }
            sum += binom * (2.0 + t).powf(-(nf + k as f64));
        }
        2.0 * (1.0 + t).powf(-nf) - 2.0 * sum
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while pfa_of(hi) > pfa {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pfa_of(mid) > pfa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Greatest-of CA-CFAR along range in every velocity row. Cells above
/// threshold are grouped into 8-connected clusters, each reported at its
/// strongest cell.
pub fn goca_cfar(
    map: &RangeDopplerMap,
    training: usize,
    guard: usize,
    pfa: f64,
) -> Result<Vec<Detection>, PhyError> {
    if training == 0 || training % 2 == 1 {
        return Err(PhyError::OddWindow { what: "training", count: training });
    }
    if guard % 2 == 1 {
        return Err(PhyError::OddWindow { what: "guard", count: guard });
    }
    let nr = map.n_range();
    let window = training + guard + 1;
    if window > nr {
        return Err(PhyError::MapTooSmall { window, row: nr });
    }
    let (nt, ng) = (training / 2, guard / 2);
    let scale = goca_sum_multiplier(nt, pfa);
    let reach = nt + ng;
    let nv = map.n_velocity();
    let mut hit = vec![false; nv * nr];
    for v in 0..nv {
        let row = &map.power[v * nr..(v + 1) * nr];
        let mut prefix = vec![0.0; nr + 1];
        for (i, &p) in row.iter().enumerate() {
            prefix[i + 1] = prefix[i] + p;
        }
        for r in reach..nr - reach {
            let lead = prefix[r - ng] - prefix[r - reach];
            let lag = prefix[r + reach + 1] - prefix[r + ng + 1];
            if row[r] > scale * lead.max(lag) {
                hit[v * nr + r] = true;
            }
        }
    }

    let mut seen = vec![false; nv * nr];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..nv * nr {
        if !hit[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut best = start;
        while let Some(c) = stack.pop() {
            if map.power[c] > map.power[best] {
                best = c;
            }
            let (cv, cr) = ((c / nr) as i64, (c % nr) as i64);
            for dv in -1..=1 {
                for dr in -1..=1 {
                    let (v2, r2) = (cv + dv, cr + dr);
                    if v2 < 0 || r2 < 0 || v2 >= nv as i64 || r2 >= nr as i64 {
                        continue;
                    }
                    let n2 = v2 as usize * nr + r2 as usize;
                    if hit[n2] && !seen[n2] {
                        seen[n2] = true;
                        stack.push(n2);
                    }
                }
            }
        }
        let (v, r) = (best / nr, best % nr);
        out.push(Detection {
            range: map.range_axis[r],
            velocity: map.velocity_axis[v],
            power: map.power[best],
            velocity_cell: v,
            range_cell: r,
        });
    }
    Ok(out)
}

/// Target-cell SINR for detection curves: the echo gets the configured
/// processing gain, thermal noise over the ADC band and (optionally) the
/// full received communication power do not.
pub fn target_cell_sinr(
    radar: &RadarWaveformConfig,
    comm: &CommConfig,
    phy: &PhyConfig,
    geom: &InterferenceGeometry,
    with_interference: bool,
) -> f64 {
    let s = echo_amplitude(radar, phy, geom.d).powi(2) * phy.processing_gain;
    let n = phy.noise_power_w(radar.adc_bandwidth_hz);
    let i = if with_interference {
        let lambda_c = SPEED_OF_LIGHT / comm.carrier_hz;
        los_amplitude(comm.tx_power_w, lambda_c, phy, geom.d_i).powi(2)
    } else {
        0.0
    };
    if n + i == 0.0 {
        f64::INFINITY
    } else {
        s / (n + i)
    }
}

/// Unit-energy rectangular QAM.
#[derive(Debug, Clone)]
pub struct QamConstellation {
    pub i_levels: u32,
    pub q_levels: u32,
    pub scale: f64,
}

impl QamConstellation {
    pub fn new(size: u32) -> Self {
        let (i, q) = qam_grid(size);
        let energy = (f64::from(i * i - 1) + f64::from(q * q - 1)) / 3.0;
        Self { i_levels: i, q_levels: q, scale: 1.0 / energy.sqrt() }
    }

    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }

    pub fn point(&self, a: u32, b: u32) -> Complex64 {
        let lv = |x: u32, m: u32| f64::from(2 * x) - f64::from(m - 1);
        Complex64::new(lv(a, self.i_levels), lv(b, self.q_levels)) * self.scale
    }

    /// Minimum-distance decision.
    pub fn decide(&self, y: Complex64) -> (u32, u32) {
        let idx = |x: f64, m: u32| {
            let k = ((x / self.scale + f64::from(m - 1)) / 2.0).round();
            k.clamp(0.0, f64::from(m - 1)) as u32
        };
        (idx(y.re, self.i_levels), idx(y.im, self.q_levels))
    }
}

/// Link conditions for the symbol-error Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerSetup {
    /// Symbol SNR (linear).
    pub snr: f64,
    /// Signal-to-radar-interference ratio (linear).
    pub sir: f64,
    /// Radial velocity of the interfering radar (m/s).
    pub v_i: f64,
}

impl SerSetup {
    /// SNR and SIR from free-space budgets over the communication band.
    pub fn from_link(
        radar: &RadarWaveformConfig,
        comm: &CommConfig,
        phy: &PhyConfig,
        geom: &InterferenceGeometry,
    ) -> Self {
        let lambda_c = SPEED_OF_LIGHT / comm.carrier_hz;
        let s = los_amplitude(comm.tx_power_w, lambda_c, phy, geom.d).powi(2);
        let i = los_amplitude(radar.tx_power_w, radar.wavelength_m(), phy, geom.d_i).powi(2);
        let n = phy.noise_power_w(comm.bandwidth_hz);
        Self {
            snr: if n > 0.0 { s / n } else { f64::INFINITY },
            sir: if i > 0.0 { s / i } else { f64::INFINITY },
            v_i: geom.v_i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerEstimate {
    pub ser: f64,
    pub errors: u64,
    pub symbols: u64,
    /// Share of symbols hit by interference stronger than half the minimum distance.
    pub alpha_int_measured: f64,
}

impl SerEstimate {
    /// Binomial standard error of `ser`.
    pub fn std_error(&self) -> f64 {
        (self.ser * (1.0 - self.ser) / self.symbols.max(1) as f64).sqrt()
    }
}

/// QAM symbols at one sample per symbol, AWGN, and optionally a
/// continuously chirping radar whose baseband image is kept only while its
/// instantaneous frequency lies in `[-B_c/2, B_c/2]`.
pub fn ser_monte_carlo(
    comm: &CommConfig,
    radar: &RadarWaveformConfig,
    setup: &SerSetup,
    n_symbols: u64,
    with_interference: bool,
    seed: u64,
) -> Result<SerEstimate, PhyError> {
    radar.validate()?;
    if comm.constellation_size < 2 || !comm.constellation_size.is_power_of_two() {
        return Err(ConfigError::invalid("comm.constellation_size", "must be a power of two >= 2").into());
    }
    if !(setup.snr > 0.0) {
        return Err(ConfigError::invalid("setup.snr", "must be positive").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qam = QamConstellation::new(comm.constellation_size);
    let sigma = (0.5 / setup.snr).sqrt();
    let amp = if setup.sir.is_finite() { (1.0 / setup.sir).sqrt() } else { 0.0 };
    let half_dmin = qam.min_distance() / 2.0;

    let rs = comm.symbol_rate();
    let t_chirp = radar.chirp_duration_s;
    let slope = radar.slope();
    let f_off = radar.carrier_hz + setup.v_i * radar.carrier_hz / SPEED_OF_LIGHT - comm.carrier_hz;
    let half_band = comm.bandwidth_hz / 2.0;
    let start: f64 = rng.random_range(0.0..t_chirp);

    let mut errors = 0u64;
    let mut hit = 0u64;
    for n in 0..n_symbols {
        let a = rng.random_range(0..qam.i_levels);
        let b = rng.random_range(0..qam.q_levels);
        let x = qam.point(a, b);
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let mut y = x + Complex64::new(re * sigma, im * sigma);
        if with_interference && amp > 0.0 {
            let t = n as f64 / rs + start;
            let u = t.rem_euclid(t_chirp);
            let f_inst = f_off + slope * u;
            if f_inst.abs() <= half_band {
                let ph = cycles(f_off * t) + cycles(slope / 2.0 * u * u);
                y += Complex64::from_polar(amp, 2.0 * PI * ph);
                if amp > half_dmin {
                    hit += 1;
                }
            }
        }
        if qam.decide(y) != (a, b) {
            errors += 1;
        }
    }
    let symbols = n_symbols.max(1);
    Ok(SerEstimate {
        ser: errors as f64 / symbols as f64,
        errors,
        symbols,
        alpha_int_measured: hit as f64 / symbols as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::ser_qam;

    fn radar_1g() -> RadarWaveformConfig {
        RadarWaveformConfig { sweep_bandwidth_hz: 1e9, ..Default::default() }
    }

    #[test]
    fn zero_range_echo_is_constant() {
        let s = synth_dechirped_echo(&radar_1g(), 0.0, 0.0, 2.0, 3).unwrap();
        assert!(s.samples.iter().all(|x| (x - Complex64::new(2.0, 0.0)).norm() < 1e-12));
        assert!(synth_dechirped_echo(&radar_1g(), 10.0, 0.0, -1.0, 3).is_err());
    }

    #[test]
    fn echo_peaks_at_target_cell() {
        let radar = radar_1g();
        let s = synth_dechirped_echo(&radar, 100.0, 30.0, 1.0, 99).unwrap();
        let map = range_doppler(&s, &radar, Window::Hann).unwrap();
        let (v, r) = map.argmax();
        assert!((map.range_axis[r] - 100.0).abs() <= 0.15, "{}", map.range_axis[r]);
        assert!((map.velocity_axis[v] - 30.0).abs() <= 0.99, "{}", map.velocity_axis[v]);
    }

    #[test]
    fn beat_frequency_at_100m() {
        let radar = radar_1g();
        let f = 2.0 * 100.0 / SPEED_OF_LIGHT * radar.slope();
        assert!((f - 33.356e6).abs() < 1e3);
    }

    #[test]
    fn echo_amplitude_scales_with_inverse_square_distance() {
        let (r, p) = (radar_1g(), PhyConfig::default());
        let ratio = echo_amplitude(&r, &p, 50.0) / echo_amplitude(&r, &p, 100.0);
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_map() {
        let radar = radar_1g();
        let s = BasebandSignal::zeros(4, radar.samples_per_chirp(), radar.adc_bandwidth_hz);
        let map = range_doppler(&s, &radar, Window::Hann).unwrap();
        assert!(map.power.iter().all(|&p| p == 0.0));
        let bad = BasebandSignal { n_chirps: 5, ..s };
        assert!(matches!(range_doppler(&bad, &radar, Window::Hann), Err(PhyError::ShapeMismatch { .. })));
    }

    #[test]
    fn axes_are_ascending() {
        let radar = radar_1g();
        let s = BasebandSignal::zeros(8, radar.samples_per_chirp(), radar.adc_bandwidth_hz);
        let map = range_doppler(&s, &radar, Window::Rectangular).unwrap();
        assert!(map.range_axis.windows(2).all(|w| w[1] > w[0]));
        assert!(map.velocity_axis.windows(2).all(|w| w[1] > w[0]));
        let step = map.range_axis[1] - map.range_axis[0];
        assert!((step - SPEED_OF_LIGHT / 2e9).abs() < 1e-9);
    }

    #[test]
    fn goca_multiplier_matches_single_cell_limit() {
        // One cell per side: Pfa = 2/(1+T) - 2/(2+T).
        let t = goca_sum_multiplier(1, 0.1);
        let pfa = 2.0 / (1.0 + t) - 2.0 / (2.0 + t);
        assert!((pfa - 0.1).abs() < 1e-12);
        assert!(goca_sum_multiplier(25, 1e-6) > goca_sum_multiplier(25, 1e-3));
    }

    #[test]
    fn cfar_on_constant_map_is_silent() {
        let map = RangeDopplerMap {
            power: vec![1.0; 4 * 200],
            range_axis: (0..200).map(f64::from).collect(),
            velocity_axis: (0..4).map(f64::from).collect(),
        };
        assert!(goca_cfar(&map, 50, 2, 1e-6).unwrap().is_empty());
        assert!(matches!(goca_cfar(&map, 51, 2, 1e-6), Err(PhyError::OddWindow { .. })));
        assert!(matches!(goca_cfar(&map, 250, 2, 1e-6), Err(PhyError::MapTooSmall { .. })));
    }

    #[test]
    fn qam_decisions_round_trip() {
        for m in [4, 16, 32, 64] {
            let q = QamConstellation::new(m);
            let mut e = 0.0;
            for a in 0..q.i_levels {
                for b in 0..q.q_levels {
                    let p = q.point(a, b);
                    e += p.norm_sqr();
                    assert_eq!(q.decide(p), (a, b));
                }
            }
            assert!((e / f64::from(m) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ser_without_interference_tracks_analytic() {
        let comm = CommConfig::default();
        let setup = SerSetup { snr: 10f64.powf(1.2), sir: f64::INFINITY, v_i: 0.0 };
        let est = ser_monte_carlo(&comm, &radar_1g(), &setup, 200_000, false, 4).unwrap();
        let ps = ser_qam(16, setup.snr).unwrap();
        assert!((est.ser - ps).abs() <= 3.0 * est.std_error().max(1e-4), "{} vs {ps}", est.ser);
        assert_eq!(est.alpha_int_measured, 0.0);
    }
}
