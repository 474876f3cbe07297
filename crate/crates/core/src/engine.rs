//! Discrete-event network simulator.
//!
//! One trial places `M` vehicles (one radar unit each) on a shared control
//! channel, runs the event loop for `n_frames` radar frames and scores every
//! radar frame with the geometric vulnerable-period oracle. Trials are
//! independent and run on the rayon pool; results are reduced in trial order,
//! so output does not depend on worker scheduling.
//!
//! Each unit keeps its schedule in its own clock. A unit with clock offset `o`
//! fires an event scheduled at local time `t` at true time `t - o`. Control
//! packets carry local times, which is how synchronization error enters.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::protocol::{
    quantized_vulnerable_sides, ControlPacket, CsmaAction, MacState, SlotPlan, Ticks, TimeGrid,
};
use crate::waveform::{CommConfig, RadarWaveformConfig};

/// Who hears whom on the control channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    #[default]
    FullMesh,
    /// Symmetric adjacency lists, one per vehicle.
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub vehicles: u32,
    pub alpha_d: f64,
    /// Probability that a vehicle runs the protocol.
    pub penetration: f64,
    /// Width of the clock-offset distribution in seconds; offsets are uniform
    /// in `[-eps/2, eps/2]`, so any two clocks differ by at most `eps`.
    pub sync_error_bound_s: f64,
    pub n_frames: u32,
    pub n_trials: u32,
    pub seed: u64,
    pub tick_s: f64,
    pub topology: Topology,
    /// Sweep bandwidth of radars without the protocol.
    pub legacy_sweep_bandwidth_hz: f64,
    pub per_slot_capacity: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            vehicles: 70,
            alpha_d: 1.0,
            penetration: 1.0,
            sync_error_bound_s: 0.0,
            n_frames: 20,
            n_trials: 100,
            seed: 1,
            tick_s: 0.2e-6,
            topology: Topology::FullMesh,
            legacy_sweep_bandwidth_hz: 1e9,
            per_slot_capacity: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.vehicles < 1 {
            return Err(ConfigError::invalid("network.vehicles", "at least one vehicle is required"));
        }
        if !(self.alpha_d >= 0.0 && self.alpha_d.is_finite()) {
            return Err(ConfigError::invalid("network.alpha_d", format!("must be finite and non-negative, got {}", self.alpha_d)));
        }
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(ConfigError::invalid("network.penetration", format!("must lie in [0, 1], got {}", self.penetration)));
        }
        if !(self.sync_error_bound_s >= 0.0 && self.sync_error_bound_s.is_finite()) {
            return Err(ConfigError::invalid("network.sync_error_bound_s", "must be finite and non-negative"));
        }
        if self.n_frames < 1 {
            return Err(ConfigError::invalid("network.n_frames", "at least one frame is required"));
        }
        if self.n_trials < 1 {
            return Err(ConfigError::invalid("network.n_trials", "at least one trial is required"));
        }
        if !(self.tick_s > 0.0 && self.tick_s.is_finite()) {
            return Err(ConfigError::invalid("network.tick_s", format!("must be positive, got {}", self.tick_s)));
        }
        if !(self.legacy_sweep_bandwidth_hz > 0.0 && self.legacy_sweep_bandwidth_hz.is_finite()) {
            return Err(ConfigError::invalid("network.legacy_sweep_bandwidth_hz", "must be positive"));
        }
        if self.per_slot_capacity < 1 {
            return Err(ConfigError::invalid("network.per_slot_capacity", "must be at least 1"));
        }
        if let Topology::Explicit(adj) = &self.topology {
            let m = self.vehicles as usize;
            if adj.len() != m {
                return Err(ConfigError::invalid("network.topology", format!("{} adjacency lists for {m} vehicles", adj.len())));
            }
            for (a, list) in adj.iter().enumerate() {
                for &b in list {
                    if b >= m || b == a {
                        return Err(ConfigError::invalid("network.topology", format!("vehicle {a} lists invalid neighbour {b}")));
                    }
                    if !adj[b].contains(&a) {
                        return Err(ConfigError::invalid("network.topology", format!("link {a}-{b} is not symmetric")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Radar parameters used by units without the protocol.
    pub fn legacy_radar(&self, radar: &RadarWaveformConfig) -> RadarWaveformConfig {
        RadarWaveformConfig { sweep_bandwidth_hz: self.legacy_sweep_bandwidth_hz, ..*radar }
    }
}

/// Non-fatal configuration concerns; each is also logged.
pub fn scenario_warnings(radar: &RadarWaveformConfig) -> Vec<String> {
    let mut out = Vec::new();
    let u_mod = radar.modified_duty_cycle();
    if u_mod > 1.0 / 3.0 {
        out.push(format!(
            "modified duty cycle {u_mod:.4} exceeds 1/3; a free contention slot cannot be guaranteed"
        ));
    }
    for w in &out {
        log::warn!("{w}");
    }
    out
}

/// Whether a chirp sequence started at offset `tau` from the victim's
/// overlaps a vulnerable period of any victim chirp: some
/// `k in [-(N-1), N-1]` with `kT - lo < tau < kT + hi`.
pub fn offset_interferes(tau: Ticks, lo: Ticks, hi: Ticks, chirp: Ticks, chirps: u32) -> bool {
    let k_max_all = Ticks::from(chirps) - 1;
    let k_min = ((tau - hi).div_euclid(chirp) + 1).max(-k_max_all);
    let k_max = (tau + lo - 1).div_euclid(chirp).min(k_max_all);
    k_min <= k_max
}

/// Frame-level oracle: any interferer start inside the victim's union of
/// vulnerable periods. `sides` are the victim's `(lo, hi)` in ticks.
pub fn interference_oracle(
    victim_start: Ticks,
    interferer_starts: &[Ticks],
    sides: (Ticks, Ticks),
    chirp: Ticks,
    chirps: u32,
) -> bool {
    interferer_starts
        .iter()
        .any(|&s| offset_interferes(s - victim_start, sides.0, sides.1, chirp, chirps))
}

/// Per-trial outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    /// `interfered[frame][unit]`.
    pub interfered: Vec<Vec<bool>>,
    /// Per unit: one past its last interfered frame, 0 if never interfered.
    pub unit_t_final: Vec<u32>,
    /// One past the last frame in which any unit was interfered.
    pub t_final: u32,
    /// The last simulated frame was clean.
    pub converged: bool,
    /// Largest deviation of a frame interval from `T_f`, seconds.
    pub jitter_s: f64,
    /// Same, restricted to intervals starting at or after `t_final`.
    pub steady_jitter_s: f64,
    pub protocol_units: Vec<bool>,
    pub realized_penetration: f64,
    /// Interfered `(victim, interferer)` pairs per frame.
    pub pair_hits: Vec<u64>,
    /// Checked `(victim, interferer)` pairs per frame.
    pub pair_checks: Vec<u64>,
    pub saturated_units: u32,
    pub packets_sent: u64,
    pub packets_delivered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    RadarFrameStart,
    CommTxStart,
    CommTxEnd,
    CarrierSense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: Ticks,
    sequence: u64,
    kind: EventKind,
    unit: usize,
    generation: u32,
}

struct Queue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
}

impl Queue {
    fn push(&mut self, time: Ticks, kind: EventKind, unit: usize, generation: u32) {
        self.heap.push(Reverse(Event { time, sequence: self.next_seq, kind, unit, generation }));
        self.next_seq += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }
}

struct Transmission {
    sender: usize,
    start: Ticks,
    end: Ticks,
    packet: ControlPacket,
}

struct Unit {
    mac: Option<MacState>,
    /// Next frame start (local clock) for units without the protocol.
    legacy_t_rs: Ticks,
    offset: Ticks,
    sides: (Ticks, Ticks),
    frame_starts: Vec<Ticks>,
    generation: u32,
}

impl Unit {
    fn true_time(&self, local: Ticks) -> Ticks {
        local - self.offset
    }
}

struct Timing {
    chirp: Ticks,
    chirps: u32,
    active: Ticks,
    frame: Ticks,
    packet: Ticks,
    slot_time: Ticks,
}

struct Trial<'a> {
    comm: &'a CommConfig,
    plan: SlotPlan,
    timing: Timing,
    adjacency: Option<Vec<Vec<bool>>>,
    units: Vec<Unit>,
    queue: Queue,
    air: Vec<Transmission>,
    rng: ChaCha8Rng,
    packets_sent: u64,
    packets_delivered: u64,
}

fn align_up(t: Ticks, step: Ticks) -> Ticks {
    (t + step - 1).div_euclid(step) * step
}

impl Trial<'_> {
    fn adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.adjacency.as_ref().is_none_or(|m| m[a][b])
    }

    /// Schedules the contention for the unit's upcoming frame, starting no
    /// earlier than `now`.
    fn schedule_contention(&mut self, u: usize, now: Ticks) {
        let Timing { packet, slot_time, .. } = self.timing;
        let unit = &mut self.units[u];
        let Some(mac) = unit.mac.as_mut() else { return };
        let now_local = now + unit.offset;
        let mut t_cs = align_up(mac.contention_start(&self.plan, packet, slot_time), slot_time);
        if t_cs < now_local {
            t_cs = align_up(now_local, slot_time);
        }
        mac.t_cs = t_cs;
        if t_cs + packet > mac.t_rs {
            mac.reset_backoff(self.comm, &mut self.rng);
            return;
        }
        let at = t_cs - unit.offset;
        self.queue.push(at, EventKind::CarrierSense, u, unit.generation);
    }

    fn channel_busy(&self, u: usize, now: Ticks) -> bool {
        let since = now - self.timing.slot_time;
        self.air
            .iter()
            .any(|tx| tx.start < now && tx.end > since && self.adjacent(tx.sender, u))
    }

    fn radar_active(&self, u: usize, start: Ticks, end: Ticks) -> bool {
        self.units[u]
            .frame_starts
            .last()
            .is_some_and(|&s| s < end && s + self.timing.active > start)
    }

    fn on_frame_start(&mut self, u: usize, now: Ticks) {
        let frame = self.timing.frame;
        let unit = &mut self.units[u];
        unit.frame_starts.push(now);
        let next = match unit.mac.as_mut() {
            Some(mac) => {
                mac.t_rs += frame;
                mac.t_rs
            }
            None => {
                unit.legacy_t_rs += frame;
                unit.legacy_t_rs
            }
        };
        let at = unit.true_time(next);
        let generation = unit.generation;
        self.queue.push(at, EventKind::RadarFrameStart, u, generation);
        self.schedule_contention(u, now);
    }

    fn on_carrier_sense(&mut self, u: usize, now: Ticks) {
        let busy = self.channel_busy(u, now);
        let Timing { packet, slot_time, .. } = self.timing;
        let unit = &mut self.units[u];
        let Some(mac) = unit.mac.as_mut() else { return };
        match mac.csma_step(busy, self.comm, slot_time, &mut self.rng) {
            CsmaAction::Transmit => {
                self.queue.push(now, EventKind::CommTxStart, u, unit.generation);
            }
            CsmaAction::Defer(mut t_cs) => {
                if mac.counter == 0 {
                    t_cs += slot_time;
                    mac.t_cs = t_cs;
                }
                if t_cs + packet > mac.t_rs {
                    mac.reset_backoff(self.comm, &mut self.rng);
                } else {
                    let at = t_cs - unit.offset;
                    self.queue.push(at, EventKind::CarrierSense, u, unit.generation);
                }
            }
        }
    }

    fn on_tx_start(&mut self, u: usize, now: Ticks) {
        let horizon = now - self.timing.packet - self.timing.slot_time;
        self.air.retain(|tx| tx.end >= horizon);
        let Some(mac) = self.units[u].mac.as_mut() else { return };
        mac.self_assign(&self.plan);
        mac.reset_backoff(self.comm, &mut self.rng);
        let packet = mac.packet();
        let end = now + self.timing.packet;
        self.air.push(Transmission { sender: u, start: now, end, packet });
        self.packets_sent += 1;
        self.queue.push(end, EventKind::CommTxEnd, u, 0);
    }

    fn on_tx_end(&mut self, u: usize, now: Ticks) {
        let Some(idx) = self.air.iter().position(|tx| tx.sender == u && tx.end == now) else {
            return;
        };
        let (start, end) = (self.air[idx].start, self.air[idx].end);
        let receivers: Vec<usize> = (0..self.units.len())
            .filter(|&r| {
                self.units[r].mac.is_some()
                    && self.adjacent(u, r)
                    && !self.radar_active(r, start, end)
                    && !self.air.iter().enumerate().any(|(j, tx)| {
                        j != idx
                            && tx.start < end
                            && tx.end > start
                            && (tx.sender == r || self.adjacent(tx.sender, r))
                    })
            })
            .collect();
        let packet = self.air[idx].packet.clone();
        for r in receivers {
            self.packets_delivered += 1;
            let frame = self.timing.frame;
            let unit = &mut self.units[r];
            let mac = unit.mac.as_mut().expect("receivers run the protocol");
            let outcome = mac.process_control_packet(&packet, &self.plan);
            if outcome.reassigned && mac.si != 0 {
                let now_local = now + unit.offset;
                mac.t_rs = now_local + 1 + (mac.t_rs - now_local - 1).rem_euclid(frame);
                unit.generation += 1;
                let at = mac.t_rs - unit.offset;
                let generation = unit.generation;
                self.queue.push(at, EventKind::RadarFrameStart, r, generation);
                self.schedule_contention(r, now);
            }
        }
    }

    fn run(&mut self, horizon: Ticks) {
        while let Some(ev) = self.queue.pop() {
            if ev.time >= horizon {
                break;
            }
            let stale = matches!(ev.kind, EventKind::RadarFrameStart | EventKind::CarrierSense)
                && ev.generation != self.units[ev.unit].generation;
            if stale {
                continue;
            }
            match ev.kind {
                EventKind::RadarFrameStart => self.on_frame_start(ev.unit, ev.time),
                EventKind::CarrierSense => self.on_carrier_sense(ev.unit, ev.time),
                EventKind::CommTxStart => self.on_tx_start(ev.unit, ev.time),
                EventKind::CommTxEnd => self.on_tx_end(ev.unit, ev.time),
            }
        }
    }
}

/// Runs trial `trial` of a scenario. Pure function of its arguments.
pub fn run_trial(
    scenario: &ScenarioConfig,
    radar: &RadarWaveformConfig,
    comm: &CommConfig,
    trial: u64,
) -> Result<TrialMetrics, ConfigError> {
    scenario.validate()?;
    radar.validate()?;
    comm.validate(radar)?;
    let legacy = scenario.legacy_radar(radar);
    legacy.validate()?;

    let grid = TimeGrid::new(scenario.tick_s);
    let plan = SlotPlan::new(radar, scenario.alpha_d, scenario.per_slot_capacity, &grid);
    let timing = Timing {
        chirp: grid.round(radar.chirp_duration_s),
        chirps: radar.chirps_per_frame,
        active: grid.round(radar.chirp_duration_s * f64::from(radar.chirps_per_frame)),
        frame: plan.frame_ticks,
        packet: grid.ceil(comm.packet_duration_s()),
        slot_time: grid.round(comm.slot_time_s).max(1),
    };
    if timing.chirp < 1 || timing.frame < 1 {
        return Err(ConfigError::invalid("network.tick_s", "tick is coarser than the chirp duration"));
    }
    let sides_protocol = quantized_vulnerable_sides(radar, scenario.alpha_d, &grid);
    let sides_legacy = quantized_vulnerable_sides(&legacy, scenario.alpha_d, &grid);

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(trial);

    let m = scenario.vehicles as usize;
    let half_eps = 0.5 * scenario.sync_error_bound_s;
    let mut units = Vec::with_capacity(m);
    for v in 0..m {
        let protocol = scenario.penetration >= 1.0 || rng.random_bool(scenario.penetration);
        let offset_s = if half_eps > 0.0 { rng.random_range(-half_eps..=half_eps) } else { 0.0 };
        let offset = grid.round(offset_s);
        let (mac, legacy_t_rs, sides) = if protocol {
            let mac = MacState::init(v as u32, v, &plan, comm, &mut rng);
            (Some(mac), 0, sides_protocol)
        } else {
            (None, rng.random_range(0..timing.frame), sides_legacy)
        };
        units.push(Unit {
            mac,
            legacy_t_rs,
            offset,
            sides,
            frame_starts: Vec::with_capacity(scenario.n_frames as usize + 2),
            generation: 0,
        });
    }

    let adjacency = match &scenario.topology {
        Topology::FullMesh => None,
        Topology::Explicit(lists) => {
            let mut mat = vec![vec![false; m]; m];
            for (a, list) in lists.iter().enumerate() {
                for &b in list {
                    mat[a][b] = true;
                }
            }
            Some(mat)
        }
    };

    let mut sim = Trial {
        comm,
        plan,
        timing,
        adjacency,
        units,
        queue: Queue { heap: BinaryHeap::new(), next_seq: 0 },
        air: Vec::new(),
        rng,
        packets_sent: 0,
        packets_delivered: 0,
    };
    // Radars are already running when the network forms; each unit starts
    // contending after its first frame.
    for u in 0..m {
        let unit = &sim.units[u];
        let local = unit.mac.as_ref().map_or(unit.legacy_t_rs, |mac| mac.t_rs);
        let at = unit.true_time(local);
        sim.queue.push(at, EventKind::RadarFrameStart, u, 0);
    }
    let n_frames = scenario.n_frames as usize;
    sim.run((n_frames as Ticks + 1) * sim.timing.frame);

    Ok(score(&sim, n_frames, scenario.tick_s))
}

fn score(sim: &Trial<'_>, n_frames: usize, tick_s: f64) -> TrialMetrics {
    let Timing { chirp, chirps, frame, .. } = sim.timing;
    let m = sim.units.len();
    let mut interfered = vec![vec![false; m]; n_frames];
    let mut pair_hits = vec![0u64; n_frames];
    let mut pair_checks = vec![0u64; n_frames];
    let reach = Ticks::from(chirps.saturating_sub(1)) * chirp;

    for (v, victim) in sim.units.iter().enumerate() {
        let (lo, hi) = victim.sides;
        for &s in &victim.frame_starts {
            let f = s.div_euclid(frame);
            if f < 0 || f as usize >= n_frames {
                continue;
            }
            let f = f as usize;
            for (i, other) in sim.units.iter().enumerate() {
                if i == v {
                    continue;
                }
                let starts = &other.frame_starts;
                let first = starts.partition_point(|&x| x <= s - reach - lo);
                let hit = starts[first..]
                    .iter()
                    .take_while(|&&x| x < s + reach + hi)
                    .any(|&x| offset_interferes(x - s, lo, hi, chirp, chirps));
                pair_checks[f] += 1;
                if hit {
                    pair_hits[f] += 1;
                    interfered[f][v] = true;
                }
            }
        }
    }

    let unit_t_final: Vec<u32> = (0..m)
        .map(|u| (0..n_frames).rev().find(|&f| interfered[f][u]).map_or(0, |f| f as u32 + 1))
        .collect();
    let t_final = unit_t_final.iter().copied().max().unwrap_or(0);
    let converged = !interfered[n_frames - 1].iter().any(|&x| x);

    let mut jitter = 0;
    let mut steady = 0;
    for unit in &sim.units {
        for w in unit.frame_starts.windows(2) {
            let dev = (w[1] - w[0] - frame).abs();
            jitter = jitter.max(dev);
            if w[0].div_euclid(frame) >= Ticks::from(t_final) {
                steady = steady.max(dev);
            }
        }
    }

    let protocol_units: Vec<bool> = sim.units.iter().map(|u| u.mac.is_some()).collect();
    let realized_penetration = protocol_units.iter().filter(|&&r| r).count() as f64 / m as f64;
    let saturated_units = sim
        .units
        .iter()
        .filter_map(|u| u.mac.as_ref())
        .filter(|mac| mac.saturated || mac.si == 0)
        .count() as u32;

    TrialMetrics {
        interfered,
        unit_t_final,
        t_final,
        converged,
        jitter_s: jitter as f64 * tick_s,
        steady_jitter_s: steady as f64 * tick_s,
        protocol_units,
        realized_penetration,
        pair_hits,
        pair_checks,
        saturated_units,
        packets_sent: sim.packets_sent,
        packets_delivered: sim.packets_delivered,
    }
}

/// Per-trial summary row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub trial: u64,
    pub t_final: u32,
    pub converged: bool,
    pub realized_penetration: f64,
    pub mean_unit_t_final: f64,
    pub jitter_s: f64,
    pub steady_jitter_s: f64,
    pub saturated_units: u32,
}

/// Aggregated Monte Carlo result.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    /// Mean over trials and units of the per-frame interference indicator:
    /// the probability that a given vehicle is interfered in that frame.
    pub per_frame_probability: Vec<f64>,
    /// Fraction of trials with at least one interfered unit in that frame.
    pub per_frame_any_victim: Vec<f64>,
    /// Interfered share of checked `(victim, interferer)` pairs per frame.
    pub per_frame_pair_rate: Vec<f64>,
    pub pair_hits: Vec<u64>,
    pub pair_checks: Vec<u64>,
    /// Number of `(trial, unit)` indicator samples behind each frame value.
    pub samples_per_frame: u64,
    pub t_final_min: u32,
    pub t_final_mean: f64,
    pub t_final_max: u32,
    /// Mean over trials and units of the per-unit convergence frame.
    pub unit_t_final_mean: f64,
    pub converged_trials: u64,
    pub max_jitter_s: f64,
    pub max_steady_jitter_s: f64,
    pub trials: Vec<TrialSummary>,
}

/// Runs all trials of a scenario on the current rayon pool.
pub fn run_monte_carlo(
    scenario: &ScenarioConfig,
    radar: &RadarWaveformConfig,
    comm: &CommConfig,
) -> Result<MonteCarloResult, ConfigError> {
    scenario.validate()?;
    scenario_warnings(radar);
    let trials: Vec<TrialMetrics> = (0..u64::from(scenario.n_trials))
        .into_par_iter()
        .map(|t| run_trial(scenario, radar, comm, t))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(&trials))
}

/// Reduces trial metrics in index order.
pub fn aggregate(trials: &[TrialMetrics]) -> MonteCarloResult {
    let n_frames = trials.first().map_or(0, |t| t.interfered.len());
    let mut victims = vec![0u64; n_frames];
    let mut any = vec![0u64; n_frames];
    let mut pair_hits = vec![0u64; n_frames];
    let mut pair_checks = vec![0u64; n_frames];
    let mut samples = 0u64;
    let mut summaries = Vec::with_capacity(trials.len());
    let mut unit_t_final_sum = 0u64;
    for (i, t) in trials.iter().enumerate() {
        samples += t.unit_t_final.len() as u64;
        for f in 0..n_frames {
            let count = t.interfered[f].iter().filter(|&&x| x).count() as u64;
            victims[f] += count;
            any[f] += u64::from(count > 0);
            pair_hits[f] += t.pair_hits[f];
            pair_checks[f] += t.pair_checks[f];
        }
        let unit_sum: u64 = t.unit_t_final.iter().map(|&x| u64::from(x)).sum();
        unit_t_final_sum += unit_sum;
        summaries.push(TrialSummary {
            trial: i as u64,
            t_final: t.t_final,
            converged: t.converged,
            realized_penetration: t.realized_penetration,
            mean_unit_t_final: unit_sum as f64 / t.unit_t_final.len().max(1) as f64,
            jitter_s: t.jitter_s,
            steady_jitter_s: t.steady_jitter_s,
            saturated_units: t.saturated_units,
        });
    }
    let n = trials.len().max(1) as f64;
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    MonteCarloResult {
        per_frame_probability: victims.iter().map(|&v| ratio(v, samples)).collect(),
        per_frame_any_victim: any.iter().map(|&a| a as f64 / n).collect(),
        per_frame_pair_rate: pair_hits.iter().zip(&pair_checks).map(|(&h, &c)| ratio(h, c)).collect(),
        pair_hits,
        pair_checks,
        samples_per_frame: samples,
        t_final_min: trials.iter().map(|t| t.t_final).min().unwrap_or(0),
        t_final_mean: trials.iter().map(|t| f64::from(t.t_final)).sum::<f64>() / n,
        t_final_max: trials.iter().map(|t| t.t_final).max().unwrap_or(0),
        unit_t_final_mean: ratio(unit_t_final_sum, samples),
        converged_trials: trials.iter().filter(|t| t.converged).count() as u64,
        max_jitter_s: trials.iter().map(|t| t.jitter_s).fold(0.0, f64::max),
        max_steady_jitter_s: trials.iter().map(|t| t.steady_jitter_s).fold(0.0, f64::max),
        trials: summaries,
    }
}
