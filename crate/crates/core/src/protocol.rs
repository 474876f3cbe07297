//! Slot-scheduling MAC for FMCW radars sharing a control subchannel.
//!
//! Every radar unit owns a [`MacState`]: a time-reference identifier, a slot
//! index inside that reference, the radar start time derived from it, a
//! strength counter that lets the most widely shared reference win, and the
//! CSMA/BEB contention state used to broadcast [`ControlPacket`]s.
//!
//! A reference is a lattice of radar start times: slot index `si` maps to
//! scheduling slot `K = ceil(si / C)` (each `(N+1)T` long) and position
//! `kappa = si mod C` inside it, spaced one vulnerable period apart, where `C`
//! is the number of concurrent radars per scheduling slot.
//!
//! Times are integer ticks; the engine picks the tick length.

use rand::Rng;

use crate::analytic::VulnerableMode;
use crate::error::ProtocolError;
use crate::waveform::{CommConfig, RadarWaveformConfig};

pub type Ticks = i64;
pub type UnitId = usize;

/// Conversion between seconds and integer ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub tick_s: f64,
}

impl TimeGrid {
    pub fn new(tick_s: f64) -> Self {
        assert!(tick_s > 0.0, "tick must be positive");
        Self { tick_s }
    }

    /// Nearest tick.
    pub fn round(&self, seconds: f64) -> Ticks {
        (seconds / self.tick_s).round() as Ticks
    }

    /// Smallest tick count covering `seconds`. Values within 1e-9 ticks of an
    /// integer are treated as exact.
    pub fn ceil(&self, seconds: f64) -> Ticks {
        let x = seconds / self.tick_s;
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            r as Ticks
        } else {
            x.ceil() as Ticks
        }
    }

    pub fn seconds(&self, ticks: Ticks) -> f64 {
        ticks as f64 * self.tick_s
    }
}

/// Layout of slot indices over a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotPlan {
    /// Concurrent radars per scheduling slot.
    pub per_slot_capacity: u32,
    /// Scheduling slots per frame, `floor(1/U')`.
    pub slots_per_frame: u32,
    /// `(N+1) T` in ticks.
    pub slot_ticks: Ticks,
    /// Spacing of neighbouring positions inside a slot (one vulnerable period).
    pub spacing_ticks: Ticks,
    pub frame_ticks: Ticks,
}

impl SlotPlan {
    /// Builds the plan for a radar configuration on a time grid. The spacing
    /// is the vulnerable period with each side rounded up to whole ticks.
    pub fn new(
        radar: &RadarWaveformConfig,
        alpha_d: f64,
        per_slot_capacity: u32,
        grid: &TimeGrid,
    ) -> Self {
        let (lo, hi) = quantized_vulnerable_sides(radar, alpha_d, grid);
        Self {
            per_slot_capacity,
            slots_per_frame: slots_per_frame(radar),
            slot_ticks: grid.round(radar.slot_duration_s()),
            spacing_ticks: lo + hi,
            frame_ticks: grid.round(radar.frame_duration_s),
        }
    }

    /// Maximum number of assignable slot indices, `M_max`.
    pub fn capacity(&self) -> u32 {
        self.per_slot_capacity * self.slots_per_frame
    }

    /// `(kappa, K)` of an assigned slot index.
    pub fn decompose(&self, si: u32) -> Result<(u32, u32), ProtocolError> {
        if si == 0 {
            return Err(ProtocolError::Unassigned);
        }
        let c = self.per_slot_capacity;
        Ok((si % c, si.div_ceil(c)))
    }

    /// Position of `si` relative to the start of scheduling slot 1.
    pub fn offset(&self, si: u32) -> Result<Ticks, ProtocolError> {
        let (kappa, k) = self.decompose(si)?;
        Ok(Ticks::from(k - 1) * self.slot_ticks + Ticks::from(kappa) * self.spacing_ticks)
    }

    /// Slot indices belonging to scheduling slot `k` (1-based), lowest first.
    pub fn indices_in_slot(&self, k: u32) -> impl Iterator<Item = u32> {
        let c = self.per_slot_capacity;
        (k - 1) * c + 1..=k * c
    }

    /// Scheduling slot containing time `t` in the lattice anchored by
    /// `(base_t_rs, base_si)`.
    pub fn slot_containing(&self, t: Ticks, base_t_rs: Ticks, base_si: u32) -> Option<u32> {
        let origin = base_t_rs - self.offset(base_si).ok()?;
        let within = (t - origin).rem_euclid(self.frame_ticks);
        let k = (within / self.slot_ticks).min(Ticks::from(self.slots_per_frame) - 1);
        Some(k as u32 + 1)
    }
}

/// Ticks before and after a chirp start that are vulnerable, each side
/// rounded up: `(ceil(alpha_d T_max), ceil(T_max))`.
pub fn quantized_vulnerable_sides(
    radar: &RadarWaveformConfig,
    alpha_d: f64,
    grid: &TimeGrid,
) -> (Ticks, Ticks) {
    let v = crate::analytic::vulnerable_period_r2r(radar, alpha_d, VulnerableMode::Approximate);
    (grid.ceil(-v.lo), grid.ceil(v.hi))
}

/// Whole scheduling slots in a frame, `floor(T_f / ((N+1)T))`.
pub fn slots_per_frame(radar: &RadarWaveformConfig) -> u32 {
    (radar.frame_duration_s / radar.slot_duration_s() + 1e-9).floor() as u32
}

/// Operating capacity and the bandwidth-limited bound, reported side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacity {
    /// `per_slot_capacity * floor(1/U')`.
    pub m_max: u32,
    /// `floor(1/U') * floor(B_r / ((1 + alpha_d) B_max))`.
    pub bound: u32,
}

pub fn capacity(plan: &SlotPlan, radar: &RadarWaveformConfig, alpha_d: f64) -> Capacity {
    let slots = slots_per_frame(radar);
    let per_slot_bound = if radar.bandwidth_of_interest_hz > 0.0 {
        let ratio = radar.sweep_bandwidth_hz / ((1.0 + alpha_d) * radar.bandwidth_of_interest_hz);
        (ratio + 1e-9).floor().min(f64::from(u32::MAX)) as u32
    } else {
        u32::MAX
    };
    Capacity {
        m_max: plan.per_slot_capacity * slots,
        bound: slots.saturating_mul(per_slot_bound),
    }
}

/// Scheduling broadcast on the control channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ControlPacket {
    pub sender: UnitId,
    /// Time reference the sender follows.
    pub id: u32,
    /// Slot indices used by all units on the sender's vehicle, ascending.
    pub si_set: Vec<u32>,
    pub strength: u64,
    /// Radar start time of the sender's base unit.
    pub base_t_rs: Ticks,
    /// Slot index of the sender's base unit.
    pub base_si: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Record {
    id: u32,
    sis: Vec<u32>,
    strength: u64,
}

/// Everything a unit has heard, one record per `(sender, id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Database {
    by_sender: Vec<Vec<Record>>,
}

impl Database {
    fn upsert(&mut self, packet: &ControlPacket) {
        if self.by_sender.len() <= packet.sender {
            self.by_sender.resize_with(packet.sender + 1, Vec::new);
        }
        let records = &mut self.by_sender[packet.sender];
        match records.iter_mut().find(|r| r.id == packet.id) {
            Some(r) => {
                r.strength = packet.strength;
                if r.sis != packet.si_set {
                    r.sis.clone_from(&packet.si_set);
                }
            }
            None => records.push(Record {
                id: packet.id,
                sis: packet.si_set.clone(),
                strength: packet.strength,
            }),
        }
    }

    /// Slot indices known to be used under time reference `id`, as a bitmask
    /// over `1..=128` plus an overflow list.
    fn used_under(&self, id: u32) -> UsedSet {
        let mut used = UsedSet::default();
        for r in self.by_sender.iter().flatten().filter(|r| r.id == id) {
            for &si in &r.sis {
                used.insert(si);
            }
        }
        used
    }

    /// Number of `(sender, id)` records.
    pub fn len(&self) -> usize {
        self.by_sender.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Slot indices recorded for `sender` under reference `id`.
    pub fn slots_of(&self, sender: UnitId, id: u32) -> Option<&[u32]> {
        self.by_sender
            .get(sender)?
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.sis.as_slice())
    }
}

#[derive(Debug, Default)]
struct UsedSet {
    low: u128,
    high: Vec<u32>,
}

impl UsedSet {
    fn insert(&mut self, si: u32) {
        match si {
            0 => {}
            1..=128 => self.low |= 1 << (si - 1),
            _ => self.high.push(si),
        }
    }

    fn contains(&self, si: u32) -> bool {
        match si {
            0 => false,
            1..=128 => self.low & (1 << (si - 1)) != 0,
            _ => self.high.contains(&si),
        }
    }
}

/// Result of processing one control packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PacketOutcome {
    /// `(id, si)` changed.
    pub reassigned: bool,
    /// `t_rs` moved.
    pub rescheduled: bool,
    /// No free slot index was left under the adopted reference.
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsmaAction {
    Transmit,
    /// Channel busy; sense again at the contained (updated) `t_cs`.
    Defer(Ticks),
}

/// Per-unit protocol state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MacState {
    pub unit: UnitId,
    /// Time reference identifier; starts as the vehicle index.
    pub id: u32,
    /// Slot index, 0 while unassigned.
    pub si: u32,
    /// Next radar start time in this unit's clock.
    pub t_rs: Ticks,
    pub strength: u64,
    pub counter: u32,
    pub backoff_stage: u32,
    /// Next carrier-sense time.
    pub t_cs: Ticks,
    /// Slot indices held by the other units on the same vehicle.
    pub sibling_sis: Vec<u32>,
    pub database: Database,
    pub saturated: bool,
}

impl MacState {
    /// Fresh unit with a uniform radar start in `[0, T_f)` and a stage-0
    /// backoff counter.
    pub fn init<R: Rng + ?Sized>(
        vehicle_index: u32,
        unit: UnitId,
        plan: &SlotPlan,
        comm: &CommConfig,
        rng: &mut R,
    ) -> Self {
        let t_rs = rng.random_range(0..plan.frame_ticks);
        let counter = rng.random_range(0..comm.max_contention_window);
        Self {
            unit,
            id: vehicle_index,
            si: 0,
            t_rs,
            strength: 0,
            counter,
            backoff_stage: 0,
            t_cs: 0,
            sibling_sis: Vec::new(),
            database: Database::default(),
            saturated: false,
        }
    }

    /// `t_rs - (N+1)T - T_pkt + delta * counter`.
    pub fn contention_start(&self, plan: &SlotPlan, packet_ticks: Ticks, slot_time: Ticks) -> Ticks {
        self.t_rs - plan.slot_ticks - packet_ticks + slot_time * Ticks::from(self.counter)
    }

    /// Packet describing this unit (single-unit vehicle unless siblings are set).
    pub fn packet(&self) -> ControlPacket {
        let mut si_set: Vec<u32> = self.sibling_sis.iter().copied().chain([self.si]).filter(|&s| s != 0).collect();
        si_set.sort_unstable();
        si_set.dedup();
        ControlPacket {
            sender: self.unit,
            id: self.id,
            si_set,
            strength: self.strength,
            base_t_rs: self.t_rs,
            base_si: self.si,
        }
    }

    /// Claims a slot index in this unit's own reference before its first
    /// broadcast. The current `t_rs` anchors the lattice, so it does not move.
    /// Returns false when the pool is exhausted.
    pub fn self_assign(&mut self, plan: &SlotPlan) -> bool {
        if self.si != 0 {
            return true;
        }
        let used = self.excluded(self.id);
        match (1..=plan.capacity()).find(|&si| !used.contains(si)) {
            Some(si) => {
                self.si = si;
                self.saturated = false;
                true
            }
            None => {
                self.saturated = true;
                false
            }
        }
    }

    /// Applies a received control packet.
    pub fn process_control_packet(&mut self, packet: &ControlPacket, plan: &SlotPlan) -> PacketOutcome {
        self.database.upsert(packet);
        let before = (self.id, self.si);
        let mut outcome = PacketOutcome::default();

        if self.si == 0 {
            self.id = packet.id;
            self.strength = self.strength.max(packet.strength + 1);
            outcome.saturated = !self.pick_si(packet, plan);
        } else if self.id == packet.id {
            self.strength = self.strength.max(packet.strength) + 1;
            if packet.si_set.contains(&self.si) {
                outcome.saturated = !self.pick_si(packet, plan);
            }
        } else if packet.strength > self.strength {
            self.id = packet.id;
            self.strength = packet.strength + 1;
            outcome.saturated = !self.pick_si(packet, plan);
        }

        outcome.reassigned = (self.id, self.si) != before;
        if outcome.reassigned && self.si != 0 {
            if let Ok(t_rs) = compute_radar_start(self.si, packet, plan) {
                outcome.rescheduled = t_rs != self.t_rs;
                self.t_rs = t_rs;
            }
        }
        outcome
    }

    /// Busy channel: advance the backoff stage and redraw the counter.
    pub fn csma_step<R: Rng + ?Sized>(
        &mut self,
        channel_busy: bool,
        comm: &CommConfig,
        slot_time: Ticks,
        rng: &mut R,
    ) -> CsmaAction {
        if !channel_busy {
            return CsmaAction::Transmit;
        }
        self.backoff_stage = (self.backoff_stage + 1).min(comm.max_backoff_stage);
        let window = comm.contention_window(self.backoff_stage);
        self.counter = rng.random_range(0..window) as u32;
        self.t_cs += slot_time * Ticks::from(self.counter);
        CsmaAction::Defer(self.t_cs)
    }

    /// End of the contention slot: back to stage 0 with a fresh counter.
    pub fn reset_backoff<R: Rng + ?Sized>(&mut self, comm: &CommConfig, rng: &mut R) {
        self.backoff_stage = 0;
        self.counter = rng.random_range(0..comm.max_contention_window);
    }

    fn excluded(&self, id: u32) -> UsedSet {
        let mut used = self.database.used_under(id);
        for &s in &self.sibling_sis {
            used.insert(s);
        }
        used
    }

    /// Lowest free index in the scheduling slot this unit currently sits in
    /// (measured in the packet's lattice), else the lowest free index in the
    /// frame. On exhaustion the unit drops to `si = 0`.
    fn pick_si(&mut self, packet: &ControlPacket, plan: &SlotPlan) -> bool {
        let used = self.excluded(self.id);
        let preferred = plan.slot_containing(self.t_rs, packet.base_t_rs, packet.base_si);
        let choice = preferred
            .and_then(|k| plan.indices_in_slot(k).find(|&si| !used.contains(si)))
            .or_else(|| (1..=plan.capacity()).find(|&si| !used.contains(si)));
        match choice {
            Some(si) => {
                self.si = si;
                self.saturated = false;
                true
            }
            None => {
                self.si = 0;
                self.saturated = true;
                false
            }
        }
    }
}

/// Radar start for `receiver_si` in the lattice of `packet`:
/// `base_t_rs + (N+1)T (K_j - K_i) + |V| (kappa_j - kappa_i)`.
pub fn compute_radar_start(
    receiver_si: u32,
    packet: &ControlPacket,
    plan: &SlotPlan,
) -> Result<Ticks, ProtocolError> {
    let (kappa_j, k_j) = plan.decompose(receiver_si)?;
    let (kappa_i, k_i) = plan.decompose(packet.base_si)?;
    let dk = Ticks::from(k_j) - Ticks::from(k_i);
    let dkappa = Ticks::from(kappa_j) - Ticks::from(kappa_i);
    Ok(packet.base_t_rs + plan.slot_ticks * dk + plan.spacing_ticks * dkappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plan() -> SlotPlan {
        SlotPlan::new(&RadarWaveformConfig::default(), 1.0, 7, &TimeGrid::new(0.2e-6))
    }

    fn packet(sender: UnitId, id: u32, si: u32, strength: u64, t_rs: Ticks) -> ControlPacket {
        ControlPacket { sender, id, si_set: vec![si], strength, base_t_rs: t_rs, base_si: si }
    }

    fn fresh(unit: UnitId, t_rs: Ticks) -> MacState {
        let mut rng = ChaCha8Rng::seed_from_u64(unit as u64);
        let mut s = MacState::init(unit as u32, unit, &plan(), &CommConfig::default(), &mut rng);
        s.t_rs = t_rs;
        s
    }

    #[test]
    fn plan_matches_operating_point() {
        let p = plan();
        assert_eq!(p.slots_per_frame, 10);
        assert_eq!(p.slot_ticks, 10_000);
        assert_eq!(p.spacing_ticks, 12);
        assert_eq!(p.capacity(), 70);
    }

    #[test]
    fn decompose_examples() {
        let p = plan();
        assert_eq!(p.decompose(8), Ok((1, 2)));
        assert_eq!(p.decompose(7), Ok((0, 1)));
        assert_eq!(p.decompose(1), Ok((1, 1)));
        assert_eq!(p.decompose(0), Err(ProtocolError::Unassigned));
    }

    #[test]
    fn radar_start_examples() {
        // 0.1 ns grid keeps the unrounded 2.0833 us spacing.
        let grid = TimeGrid::new(1e-10);
        let p = SlotPlan { spacing_ticks: grid.round(2.0833e-6), ..SlotPlan::new(&RadarWaveformConfig::default(), 1.0, 7, &grid) };
        let base = 1_234_567;
        let pk = packet(9, 3, 1, 0, base);
        assert_eq!(compute_radar_start(1, &pk, &p), Ok(base));
        assert_eq!(compute_radar_start(8, &pk, &p), Ok(base + grid.round(2e-3)));
        assert_eq!(compute_radar_start(2, &pk, &p), Ok(base + grid.round(2.0833e-6)));
        assert!(compute_radar_start(0, &pk, &p).is_err());
        let unassigned = packet(9, 3, 0, 0, base);
        assert!(compute_radar_start(2, &unassigned, &p).is_err());
    }

    #[test]
    fn init_examples() {
        let p = plan();
        let comm = CommConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = MacState::init(0, 0, &p, &comm, &mut rng);
        let b = MacState::init(1, 1, &p, &comm, &mut rng);
        assert_eq!((a.si, a.strength, a.id), (0, 0, 0));
        assert_ne!(a.t_rs, b.t_rs);
        for _ in 0..1000 {
            let s = MacState::init(2, 2, &p, &comm, &mut rng);
            assert!((0..p.frame_ticks).contains(&s.t_rs));
            assert!(s.counter < comm.max_contention_window);
        }
    }

    #[test]
    fn fresh_unit_adopts_sender_reference() {
        let p = plan();
        let mut s = fresh(0, 50_000);
        let out = s.process_control_packet(&packet(1, 3, 1, 5, 1_000), &p);
        assert_eq!(s.id, 3);
        assert_eq!(s.strength, 6);
        assert_ne!(s.si, 1);
        assert!(s.si != 0 && out.reassigned);
        assert_eq!(Ok(s.t_rs), compute_radar_start(s.si, &packet(1, 3, 1, 5, 1_000), &p));
    }

    #[test]
    fn adoption_prefers_current_slot() {
        let p = plan();
        // Base unit at slot 1 position 1, receiver sits ~3.5 slots later.
        let mut s = fresh(0, 1_000 + 35_000);
        s.process_control_packet(&packet(1, 3, 1, 0, 1_000), &p);
        assert_eq!(p.decompose(s.si).unwrap().1, 4);
        assert_eq!(s.si, 22);
    }

    #[test]
    fn same_reference_collision_repicks_around_database() {
        let p = plan();
        let mut s = fresh(0, 1_000);
        s.process_control_packet(&packet(1, 3, 1, 0, 1_000), &p);
        assert_eq!(s.si, 2);
        s.process_control_packet(&packet(2, 3, 3, 1, 1_024), &p);
        assert_eq!(s.si, 2);
        let out = s.process_control_packet(&packet(4, 3, 2, 1, 1_012), &p);
        assert!(out.reassigned);
        assert_eq!(s.si, 4);
    }

    #[test]
    fn weaker_foreign_reference_is_ignored() {
        let p = plan();
        let mut s = fresh(0, 1_000);
        s.process_control_packet(&packet(1, 3, 1, 4, 1_000), &p);
        let snapshot = (s.id, s.si, s.t_rs, s.strength);
        let out = s.process_control_packet(&packet(2, 9, 1, snapshot.3, 7_000), &p);
        assert_eq!((s.id, s.si, s.t_rs, s.strength), snapshot);
        assert!(!out.reassigned);
        assert_eq!(s.database.len(), 2);

        s.process_control_packet(&packet(2, 9, 1, snapshot.3 + 1, 7_000), &p);
        assert_eq!(s.id, 9);
        assert_eq!(s.strength, snapshot.3 + 2);
    }

    #[test]
    fn sibling_slots_are_avoided() {
        let p = plan();
        let mut s = fresh(0, 1_000);
        s.sibling_sis = vec![2, 3];
        s.process_control_packet(&packet(1, 3, 1, 0, 1_000), &p);
        assert_eq!(s.si, 4);
        assert_eq!(s.packet().si_set, vec![2, 3, 4]);
    }

    #[test]
    fn exhausted_pool_reports_saturation() {
        let p = SlotPlan { per_slot_capacity: 1, slots_per_frame: 2, ..plan() };
        let mut s = fresh(0, 1_000);
        s.process_control_packet(&packet(1, 3, 1, 0, 1_000), &p);
        assert_eq!(s.si, 2);
        let mut t = fresh(5, 1_000);
        t.process_control_packet(&packet(1, 3, 1, 0, 1_000), &p);
        let out = t.process_control_packet(&packet(0, 3, 2, 1, 11_000), &p);
        assert!(out.saturated && t.saturated);
        assert_eq!(t.si, 0);
    }

    #[test]
    fn self_assign_takes_lowest_free_index() {
        let p = plan();
        let mut s = fresh(0, 777);
        assert!(s.self_assign(&p));
        assert_eq!((s.si, s.t_rs), (1, 777));
    }

    #[test]
    fn csma_backoff_windows() {
        let comm = CommConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = fresh(0, 100_000);
        s.t_cs = 1_000;
        s.counter = 0;
        assert_eq!(s.csma_step(false, &comm, 50, &mut rng), CsmaAction::Transmit);
        for _ in 0..200 {
            let mut u = s.clone();
            u.csma_step(true, &comm, 50, &mut rng);
            assert_eq!(u.backoff_stage, 1);
            assert!(u.counter <= 11);
        }
        let mut max_seen = 0;
        for _ in 0..2000 {
            let mut u = s.clone();
            for _ in 0..3 {
                u.csma_step(true, &comm, 50, &mut rng);
            }
            assert_eq!(u.backoff_stage, 3);
            assert!(u.counter <= 47);
            max_seen = max_seen.max(u.counter);
            u.csma_step(true, &comm, 50, &mut rng);
            assert_eq!(u.backoff_stage, 3);
        }
        assert_eq!(max_seen, 47);
        s.backoff_stage = 3;
        s.reset_backoff(&comm, &mut rng);
        assert_eq!(s.backoff_stage, 0);
        assert!(s.counter < 6);
    }

    #[test]
    fn capacity_examples() {
        let radar = RadarWaveformConfig::default();
        let c = capacity(&plan(), &radar, 1.0);
        assert_eq!(c.m_max, 70);
        assert_eq!(c.bound, 90);

        let full = RadarWaveformConfig { frame_duration_s: 100.0 * radar.chirp_duration_s, ..radar };
        let p = SlotPlan::new(&full, 1.0, 7, &TimeGrid::new(0.2e-6));
        assert_eq!(capacity(&p, &full, 1.0).m_max, 7);
    }
}
