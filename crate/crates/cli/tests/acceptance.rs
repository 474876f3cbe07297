//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashSet;
use std::process::Command;
use std::time::Instant;

use coexist_cli::commands::{ghost_demo, roc_demo, ser_demo};
use coexist_cli::ExperimentConfig;
use coexist_core::analytic::{p_r2r, pd_from_sinr, ser_qam, ser_with_interference, vulnerable_period_r2r, VulnerableMode};
use coexist_core::engine::{interference_oracle, run_monte_carlo, run_trial, MonteCarloResult, ScenarioConfig};
use coexist_core::protocol::{quantized_vulnerable_sides, ControlPacket, MacState, SlotPlan, Ticks, TimeGrid};
use coexist_core::waveform::{CommConfig, RadarWaveformConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn two_radar_probability() -> Outcome {
    let trials = 100_000u32;
    let mut worst: f64 = 0.0;
    let mut all = true;
    let mut lines = Vec::new();
    for b_max in [10e6, 50e6, 100e6] {
        for u in [0.05, 0.099, 0.2] {
            let mut radar = RadarWaveformConfig {
                sweep_bandwidth_hz: 1e9,
                chirps_per_frame: 99,
                bandwidth_of_interest_hz: b_max,
                adc_bandwidth_hz: b_max,
                ..Default::default()
            };
            radar.frame_duration_s = f64::from(radar.chirps_per_frame) * radar.chirp_duration_s / u;
            let grid = TimeGrid::new(0.1e-9);
            let sides = quantized_vulnerable_sides(&radar, 1.0, &grid);
            let chirp = grid.round(radar.chirp_duration_s);
            let frame = grid.round(radar.frame_duration_s);
            let mut rng = ChaCha8Rng::seed_from_u64((b_max as u64) ^ (u * 1e3) as u64);
            let hits = (0..trials)
                .filter(|_| {
                    let tau: Ticks = rng.random_range(0..frame);
                    interference_oracle(0, &[tau - frame, tau], sides, chirp, radar.chirps_per_frame)
                })
                .count();
            let est = hits as f64 / f64::from(trials);
            let p = p_r2r(&radar, 1.0);
            let sigma = (p * (1.0 - p) / f64::from(trials)).sqrt();
            let z = (est - p).abs() / sigma;
            worst = worst.max(z);
            all &= z <= 3.0;
            lines.push(format!("B_max={}MHz U={u}: {est:.5} vs {p:.5}", b_max / 1e6));
        }
    }
    outcome(all, format!("max deviation {worst:.2} sigma; {}", lines.join("; ")))
}

fn vulnerable_period() -> Outcome {
    let radar = RadarWaveformConfig::default();
    let v = vulnerable_period_r2r(&radar, 1.0, VulnerableMode::Approximate).duration();
    let grid = TimeGrid::new(0.2e-6);
    let (lo, hi) = quantized_vulnerable_sides(&radar, 1.0, &grid);
    let effective = grid.seconds(lo + hi);
    let pass = (v - 2.0833e-6).abs() <= 0.01e-6 && lo + hi == 12;
    outcome(pass, format!("|V| = {:.4} us, effective {:.4} us ({} + {} ticks)", v * 1e6, effective * 1e6, lo, hi))
}

fn monte_carlo(scenario: ScenarioConfig, comm: CommConfig) -> MonteCarloResult {
    run_monte_carlo(&scenario, &RadarWaveformConfig::default(), &comm).expect("valid scenario")
}

fn tail_mean(p: &[f64], n: usize) -> f64 {
    let t = &p[p.len() - n..];
    t.iter().sum::<f64>() / n as f64
}

fn headline() -> Outcome {
    let s = ScenarioConfig { vehicles: 70, n_trials: 1000, n_frames: 20, ..Default::default() };
    let r = monte_carlo(s, CommConfig { max_contention_window: 64, ..Default::default() });
    let after = r.per_frame_probability[4..].iter().copied().fold(0.0, f64::max);
    outcome(
        after < 1e-3,
        format!(
            "p[0..6] = {:?}; max from frame 4 on = {after:.2e}",
            r.per_frame_probability[..6].iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn convergence_shape(r: &MonteCarloResult) -> Outcome {
    let p = &r.per_frame_probability;
    let factor = p[0] / p[1].max(1e-300);
    let pass = factor >= 10.0 && r.unit_t_final_mean <= 1.0 && r.t_final_max <= 13;
    outcome(
        pass,
        format!(
            "p0 = {:.3}, p1 = {:.2e} (factor {factor:.1}); mean t_final {:.3} frames; max t_final {}",
            p[0], p[1], r.unit_t_final_mean, r.t_final_max
        ),
    )
}

fn sync_sensitivity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.6e-6, 1.2e-6] {
        let s = ScenarioConfig { sync_error_bound_s: eps, n_trials: 500, n_frames: 20, ..Default::default() };
        let steady = tail_mean(&monte_carlo(s, CommConfig::default()).per_frame_probability, 10);
        ok &= steady < 1e-3;
        parts.push(format!("eps={:.1}us steady {steady:.2e}", eps * 1e6));
    }
    let s = ScenarioConfig { sync_error_bound_s: 20e-6, n_trials: 500, n_frames: 20, ..Default::default() };
    let p = monte_carlo(s, CommConfig::default()).per_frame_probability;
    let floor = p[p.len() - 10..].iter().copied().fold(1.0, f64::min);
    ok &= floor > 1e-2;
    parts.push(format!("eps=20us min over last 10 frames {floor:.3}"));
    outcome(ok, parts.join("; "))
}

/// Mean per-trial pair rate and its standard error.
fn legacy_pair_rate(b_r: f64, seed: u64, trials: u32) -> (f64, f64) {
    let s = ScenarioConfig {
        penetration: 0.0,
        legacy_sweep_bandwidth_hz: b_r,
        tick_s: 1e-9,
        n_frames: 1,
        n_trials: trials,
        seed,
        ..Default::default()
    };
    let radar = RadarWaveformConfig::default();
    let comm = CommConfig::default();
    let rates: Vec<f64> = (0..u64::from(trials))
        .map(|t| {
            let m = run_trial(&s, &radar, &comm, t).expect("valid scenario");
            m.pair_hits[0] as f64 / m.pair_checks[0] as f64
        })
        .collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn penetration(full: &MonteCarloResult) -> Outcome {
    let steady = tail_mean(&full.per_frame_probability, 10);
    let (p96, s96) = legacy_pair_rate(0.96e9, 11, 2000);
    let (p100, s100) = legacy_pair_rate(1e9, 12, 2000);
    let ratio = p96 / p100;
    let sigma = ratio * ((s96 / p96).powi(2) + (s100 / p100).powi(2)).sqrt();
    let target = 1.0 / 0.96;
    let pass = steady < 1e-3 && p96 > p100 && (ratio - target).abs() <= 3.0 * sigma;
    outcome(
        pass,
        format!(
            "penetration 1 steady {steady:.2e}; penetration 0: {p96:.5} (0.96 GHz) vs {p100:.5} (1 GHz), ratio {ratio:.4} vs {target:.4} (sigma {sigma:.4})"
        ),
    )
}

fn ghost() -> Outcome {
    let cfg = ExperimentConfig::default();
    let demo = ghost_demo(&cfg).expect("ghost demo");
    let dr = demo.map.range_axis[1] - demo.map.range_axis[0];
    let dv = demo.map.velocity_axis[1] - demo.map.velocity_axis[0];
    let near = |r: f64, v: f64| {
        demo.detections.iter().any(|d| (d.range - r).abs() <= dr && (d.velocity - v).abs() <= dv)
    };
    let listed: Vec<String> = demo.detections.iter().map(|d| format!("({:.2} m, {:.2} m/s)", d.range, d.velocity)).collect();
    outcome(near(50.0, 15.0) && near(100.0, 30.0), format!("detections {}", listed.join(" ")))
}

fn parse_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(2)
        .map(|l| l.split(',').map(|c| c.parse().expect("number")).collect())
        .collect()
}

fn detection_math() -> Outcome {
    let pfas = [1e-1, 1e-3, 1e-6, 1e-9, 1e-12];
    let zero_ok = pfas.iter().all(|&pfa| (pd_from_sinr(pfa, 0.0).unwrap() - pfa).abs() <= 1e-12);
    let mut monotone = true;
    for &pfa in &pfas {
        let mut prev = 0.0;
        for i in 0..=400 {
            let sinr = 10f64.powf(-3.0 + i as f64 * 0.0125);
            let pd = pd_from_sinr(pfa, sinr).unwrap();
            monotone &= pd >= prev;
            prev = pd;
        }
    }
    let rows = parse_rows(roc_demo(&ExperimentConfig::default()).expect("roc demo").as_str());
    let below = rows.iter().all(|r| r[3] < r[2]);
    let cfg = ExperimentConfig::default();
    let mut ordered = true;
    for &pfa in &cfg.demo.roc_pfa {
        let pd: Vec<f64> = rows.iter().filter(|r| r[1] == pfa).map(|r| r[3]).collect();
        ordered &= pd.len() == cfg.demo.roc_distances_m.len() && pd.windows(2).all(|w| w[1] < w[0]);
    }
    outcome(
        zero_ok && monotone && below && ordered,
        format!("pd(pfa,0)=pfa: {zero_ok}; monotone: {monotone}; interfered below free: {below}; interfered Pd falls with d: {ordered}"),
    )
}

fn ser_bounds() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.radar.sweep_bandwidth_hz = 1e9;
    let rows = parse_rows(ser_demo(&cfg).expect("ser demo").as_str());
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &rows {
        let (snr_db, ps, emp, se, alpha, bound) = (r[0], r[1], r[3], r[4], r[5], r[6]);
        let snr = 10f64.powf(snr_db / 10.0);
        let ps_check = ser_qam(16, snr).unwrap();
        let bound_check = ser_with_interference(ps_check, alpha).unwrap();
        ok &= (ps - ps_check).abs() <= 1e-9 && (bound - bound_check).abs() <= 1e-9;
        ok &= ps <= emp && emp <= bound + 3.0 * se;
        ok &= (alpha - 0.04).abs() <= 0.3 * 0.04;
        parts.push(format!("{snr_db} dB: {ps:.3e} <= {emp:.3e} <= {bound:.3e} (alpha {alpha:.4})"));
    }
    outcome(ok && rows.len() == 4, parts.join("; "))
}

fn broadcast(units: &mut [MacState], sender: usize, plan: &SlotPlan) {
    units[sender].self_assign(plan);
    let pk = units[sender].packet();
    for (r, u) in units.iter_mut().enumerate() {
        if r != sender {
            u.process_control_packet(&pk, plan);
        }
    }
}

fn converged(units: &[MacState], plan: &SlotPlan) -> bool {
    let mut seen = HashSet::new();
    let distinct = units.iter().all(|u| u.id == units[0].id && u.si != 0 && seen.insert(u.si));
    distinct
        && units.iter().enumerate().all(|(i, a)| {
            units[i + 1..].iter().all(|b| {
                let d = (a.t_rs - b.t_rs).rem_euclid(plan.frame_ticks);
                d.min(plan.frame_ticks - d) >= plan.spacing_ticks
            })
        })
}

fn orders(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for o in orders(m - 1) {
        for pos in 0..=o.len() {
            let mut v = o.clone();
            v.insert(pos, m - 1);
            out.push(v);
        }
    }
    out
}

fn schedule(units: &[MacState]) -> Vec<(u32, u32, Ticks)> {
    units.iter().map(|u| (u.id, u.si, u.t_rs)).collect()
}

fn protocol_properties() -> Outcome {
    let radar = RadarWaveformConfig::default();
    let comm = CommConfig::default();
    let plan = SlotPlan::new(&radar, 1.0, 7, &TimeGrid::new(0.2e-6));
    let mk = |i: usize, t_rs: Ticks| {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mut s = MacState::init(i as u32, i, &plan, &comm, &mut rng);
        s.t_rs = t_rs;
        s
    };

    let layouts: [[Ticks; 5]; 3] = [[0; 5], [0, 10_000, 20_000, 30_000, 40_000], [5, 99_990, 35_000, 12, 35_003]];
    let mut exhaustive = true;
    let mut explored = 0usize;
    'outer: for m in 1..=5 {
        let all = orders(m);
        for layout in &layouts {
            let mut frontier: HashSet<Vec<MacState>> = HashSet::from([(0..m).map(|i| mk(i, layout[i])).collect()]);
            for _ in 0..m {
                let mut next = HashSet::new();
                for state in &frontier {
                    for order in &all {
                        let mut s = state.clone();
                        order.iter().for_each(|&u| broadcast(&mut s, u, &plan));
                        explored += 1;
                        if !converged(&s, &plan) {
                            next.insert(s);
                            continue;
                        }
                        for again in &all {
                            let mut t = s.clone();
                            again.iter().for_each(|&u| broadcast(&mut t, u, &plan));
                            if schedule(&t) != schedule(&s) {
                                exhaustive = false;
                                break 'outer;
                            }
                        }
                    }
                }
                frontier = next;
                if frontier.is_empty() {
                    break;
                }
            }
            if !frontier.is_empty() {
                exhaustive = false;
                break 'outer;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut idempotent = true;
    let mut monotone = true;
    for _ in 0..10_000 {
        let mut s = mk(0, rng.random_range(0..100_000));
        let len = rng.random_range(1..16);
        for _ in 0..len {
            let mut set: Vec<u32> = (0..rng.random_range(0..3)).map(|_| rng.random_range(1..=70)).collect();
            set.sort_unstable();
            set.dedup();
            let base_si = if set.is_empty() { 0 } else { set[rng.random_range(0..set.len())] };
            let pk = ControlPacket {
                sender: rng.random_range(1..6),
                id: rng.random_range(0..4),
                si_set: set,
                strength: rng.random_range(0..12),
                base_t_rs: rng.random_range(0..100_000),
                base_si,
            };
            let before = s.strength;
            s.process_control_packet(&pk, &plan);
            monotone &= s.strength >= before;
            let snap = (s.id, s.si, s.t_rs);
            let mut again = s.clone();
            again.process_control_packet(&pk, &plan);
            idempotent &= (again.id, again.si, again.t_rs) == snap;
        }
    }
    outcome(
        exhaustive && idempotent && monotone,
        format!("exhaustive M<=5 ({explored} rounds explored): {exhaustive}; idempotent: {idempotent}; strength monotone: {monotone}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_coexist"))
            .args(["simulate", "--seed", "77", "--trials", "40", "--frames", "8", "--out"])
            .arg(&out)
            .args(extra)
            .output()
            .expect("run coexist");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        ["per_frame.csv", "t_final.csv", "summary.csv", "config.toml"]
            .map(|f| std::fs::read(out.join(f)).expect("output file"))
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--parallel", "1"]);
    let reparsed = ExperimentConfig::parse(std::str::from_utf8(&a[3]).unwrap()).expect("config re-parses");
    let round_trip = reparsed.to_toml().unwrap().as_bytes() == a[3].as_slice();
    let identical = a == b && a == c;
    outcome(identical && round_trip, format!("repeat identical: {}; single worker identical: {}; config round-trip: {round_trip}", a == b, a == c))
}

fn main() {
    let mut failures = 0;
    let mut report = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name} [{:.1}s]: {}", t.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    report(1, "two-radar interference probability", &mut two_radar_probability);
    report(2, "vulnerable period", &mut vulnerable_period);
    report(3, "convergence headline", &mut headline);
    let w6 = monte_carlo(ScenarioConfig { vehicles: 70, n_trials: 1000, n_frames: 20, ..Default::default() }, CommConfig::default());
    report(4, "convergence shape", &mut || convergence_shape(&w6));
    report(5, "synchronization sensitivity", &mut sync_sensitivity);
    report(6, "penetration", &mut || penetration(&w6));
    report(7, "ghost target", &mut ghost);
    report(8, "detection math", &mut detection_math);
    report(9, "symbol error bounds", &mut ser_bounds);
    report(10, "protocol properties", &mut protocol_properties);
    report(11, "determinism", &mut determinism);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
