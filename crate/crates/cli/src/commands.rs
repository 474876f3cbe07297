//! Subcommand implementations. Each returns the CSV documents it produced
//! so callers can print or persist them.

use std::path::{Path, PathBuf};

use coexist_core::analytic::{
    alpha_int_low_sinr, c2r_time_ratio, p_r2r, pd_from_sinr, r2c_time_ratio, ser_qam, ser_with_interference,
    sir_c2r, sir_r2c, sir_r2r, vulnerable_period_r2r, InterferenceGeometry, VulnerableMode,
};
use coexist_core::engine::{run_monte_carlo, MonteCarloResult};
use coexist_core::phy::{
    add_awgn, echo_amplitude, goca_cfar, inject_r2r_interferer, los_amplitude, range_doppler, ser_monte_carlo,
    synth_dechirped_echo, target_cell_sinr, Detection, RangeDopplerMap, SerSetup,
};
use coexist_core::protocol::{capacity, quantized_vulnerable_sides, slots_per_frame, SlotPlan, TimeGrid};
use coexist_core::waveform::{derive_quantities, CommConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::output::{num, probability, Csv};
use crate::CliError;

/// Options shared by the Monte Carlo subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub allow_saturation: bool,
    /// Worker threads for trials; `None` uses all cores.
    pub parallel: Option<usize>,
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Closed-form report as `quantity,value,unit` rows.
pub fn cmd_analytic(cfg: &ExperimentConfig) -> Result<Csv, CliError> {
    cfg.validate()?;
    let (radar, comm, net) = (&cfg.radar, &cfg.comm, &cfg.network);
    let q = derive_quantities(radar, comm)?;
    let geom = cfg.geometry.interference(net.alpha_d);
    geom.validate()?;
    let grid = TimeGrid::new(net.tick_s);
    let v = vulnerable_period_r2r(radar, net.alpha_d, VulnerableMode::Approximate);
    let v_exact = vulnerable_period_r2r(radar, net.alpha_d, VulnerableMode::Exact);
    let (lo, hi) = quantized_vulnerable_sides(radar, net.alpha_d, &grid);
    let plan = SlotPlan::new(radar, net.alpha_d, net.per_slot_capacity, &grid);
    let cap = capacity(&plan, radar, net.alpha_d);

    let rows: Vec<(&str, f64, &str)> = vec![
        ("t_max", q.t_max_s, "s"),
        ("d_max", q.d_max_m, "m"),
        ("v_max", q.v_max_mps, "m/s"),
        ("range_resolution", q.range_resolution_m, "m"),
        ("velocity_resolution", q.velocity_resolution_mps, "m/s"),
        ("duty_cycle", q.duty_cycle, "1"),
        ("modified_duty_cycle", q.modified_duty_cycle, "1"),
        ("vulnerable_period", v.duration(), "s"),
        ("vulnerable_period_doppler_padded", v_exact.duration(), "s"),
        ("vulnerable_period_quantized", grid.seconds(lo + hi), "s"),
        ("p_r2r", p_r2r(radar, net.alpha_d), "1"),
        ("sir_r2r", sir_r2r(&geom, radar), "1"),
        ("sir_r2r_db", db(sir_r2r(&geom, radar)), "dB"),
        ("sir_c2r", sir_c2r(&geom, radar, comm), "1"),
        ("sir_c2r_db", db(sir_c2r(&geom, radar, comm)), "dB"),
        ("sir_r2c", sir_r2c(&geom, radar, comm), "1"),
        ("sir_r2c_db", db(sir_r2c(&geom, radar, comm)), "dB"),
        ("c2r_time_ratio", c2r_time_ratio(radar, comm), "1"),
        ("r2c_time_ratio", r2c_time_ratio(radar, comm), "1"),
        ("alpha_int_low_sinr", alpha_int_low_sinr(radar, comm), "1"),
        ("slots_per_frame", f64::from(slots_per_frame(radar)), "1"),
        ("per_slot_capacity", f64::from(net.per_slot_capacity), "1"),
        ("capacity_m_max", f64::from(cap.m_max), "vehicles"),
        ("capacity_bound", f64::from(cap.bound), "vehicles"),
        ("packet_duration", q.packet_duration_s, "s"),
    ];
    let mut csv = Csv::new(&cfg.hash()?, net.seed, &["quantity", "value", "unit"]);
    for (name, value, unit) in rows {
        csv.row(&[name.to_string(), num(value), unit.to_string()]);
    }
    Ok(csv)
}

/// Per-frame, per-trial and summary tables of one Monte Carlo run.
pub struct SimulationOutput {
    pub result: MonteCarloResult,
    pub per_frame: Csv,
    pub t_final: Csv,
    pub summary: Csv,
}

fn check_capacity(cfg: &ExperimentConfig, allow: bool) -> Result<(), CliError> {
    let net = &cfg.network;
    let plan = SlotPlan::new(&cfg.radar, net.alpha_d, net.per_slot_capacity, &TimeGrid::new(net.tick_s));
    let cap = capacity(&plan, &cfg.radar, net.alpha_d);
    if net.vehicles > cap.m_max {
        let msg = format!("{} vehicles exceed the capacity of {} slot indices", net.vehicles, cap.m_max);
        if !allow {
            return Err(CliError::Saturation(format!("{msg}; pass --allow-saturation to run anyway")));
        }
        log::warn!("{msg}");
    }
    Ok(())
}

fn with_pool<T: Send>(parallel: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match parallel {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the base scenario of `cfg` without writing anything.
pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SimulationOutput, CliError> {
    cfg.validate()?;
    check_capacity(cfg, opts.allow_saturation)?;
    let result = with_pool(opts.parallel, || run_monte_carlo(&cfg.network, &cfg.radar, &cfg.comm))??;
    let hash = cfg.hash()?;
    let seed = cfg.network.seed;

    let mut per_frame = Csv::new(
        &hash,
        seed,
        &["frame_index", "interference_probability", "below_floor", "any_victim_fraction", "pair_interference_rate"],
    );
    for f in 0..result.per_frame_probability.len() {
        let (p, clamped) = probability(result.per_frame_probability[f]);
        let (any, c2) = probability(result.per_frame_any_victim[f]);
        let (pair, c3) = probability(result.per_frame_pair_rate[f]);
        let flag = if clamped || c2 || c3 { "1" } else { "0" };
        per_frame.row(&[f.to_string(), p, flag.to_string(), any, pair]);
    }

    let mut t_final = Csv::new(
        &hash,
        seed,
        &[
            "trial",
            "t_final_frames",
            "converged",
            "realized_penetration",
            "mean_unit_t_final_frames",
            "jitter_s",
            "steady_jitter_s",
            "saturated_units",
        ],
    );
    for t in &result.trials {
        t_final.row(&[
            t.trial.to_string(),
            t.t_final.to_string(),
            u8::from(t.converged).to_string(),
            num(t.realized_penetration),
            num(t.mean_unit_t_final),
            num(t.jitter_s),
            num(t.steady_jitter_s),
            t.saturated_units.to_string(),
        ]);
    }

    let mut summary = Csv::new(&hash, seed, &["metric", "value"]);
    let n = result.per_frame_probability.len();
    let tail = &result.per_frame_probability[n / 2..];
    let rows = [
        ("trials", result.trials.len() as f64),
        ("frames", n as f64),
        ("final_probability", result.per_frame_probability[n - 1]),
        ("steady_probability", tail.iter().sum::<f64>() / tail.len() as f64),
        ("t_final_min", f64::from(result.t_final_min)),
        ("t_final_mean", result.t_final_mean),
        ("t_final_max", f64::from(result.t_final_max)),
        ("unit_t_final_mean", result.unit_t_final_mean),
        ("converged_trials", result.converged_trials as f64),
        ("max_jitter_s", result.max_jitter_s),
        ("max_steady_jitter_s", result.max_steady_jitter_s),
        ("saturated_trials", result.trials.iter().filter(|t| t.saturated_units > 0).count() as f64),
    ];
    for (k, v) in rows {
        summary.row(&[k.to_string(), num(v)]);
    }
    Ok(SimulationOutput { result, per_frame, t_final, summary })
}

fn write_simulation(dir: &Path, cfg: &ExperimentConfig, sim: &SimulationOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| CliError::io(&cfg_path, e))?;
    sim.per_frame.write(&dir.join("per_frame.csv"))?;
    sim.t_final.write(&dir.join("t_final.csv"))?;
    sim.summary.write(&dir.join("summary.csv"))
}

fn saturation_after_run(sim: &SimulationOutput, allow: bool) -> Result<(), CliError> {
    let saturated = sim.result.trials.iter().filter(|t| t.saturated_units > 0).count();
    if saturated > 0 && !allow {
        return Err(CliError::Saturation(format!("{saturated} trials ended with units lacking a slot index")));
    }
    Ok(())
}

/// `simulate`: runs the base scenario and writes `config.toml`,
/// `per_frame.csv`, `t_final.csv` and `summary.csv` under `opts.out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SimulationOutput, CliError> {
    let mut base = cfg.clone();
    base.sweep.clear();
    let sim = simulate(&base, opts)?;
    write_simulation(&opts.out, &base, &sim)?;
    saturation_after_run(&sim, opts.allow_saturation)?;
    Ok(sim)
}

/// `sweep`: one simulation per point of the sweep product, each in its
/// own `point_NNN` directory, plus an overview `sweep.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Csv, CliError> {
    if cfg.sweep.is_empty() {
        return Err(CliError::Config("no sweep axes given".into()));
    }
    let points = cfg.sweep_points()?;
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(cfg.sweep.iter().map(|a| a.path.clone()));
    header.extend(
        [
            "config_hash",
            "final_probability",
            "steady_probability",
            "t_final_mean",
            "t_final_max",
            "unit_t_final_mean",
            "converged_trials",
            "saturated_trials",
        ]
        .map(String::from),
    );
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut overview = Csv::new(&cfg.hash()?, cfg.network.seed, &header_refs);
    let mut saturated_points = 0;
    for (i, (assignments, point)) in points.iter().enumerate() {
        log::info!("sweep point {i}: {assignments:?}");
        let sim = simulate(point, opts)?;
        write_simulation(&opts.out.join(format!("point_{i:03}")), point, &sim)?;
        let r = &sim.result;
        let n = r.per_frame_probability.len();
        let tail = &r.per_frame_probability[n / 2..];
        let saturated = r.trials.iter().filter(|t| t.saturated_units > 0).count();
        saturated_points += usize::from(saturated > 0);
        let mut row = vec![i.to_string()];
        row.extend(assignments.iter().map(|(_, v)| v.to_string()));
        row.extend([
            point.hash()?,
            probability(r.per_frame_probability[n - 1]).0,
            probability(tail.iter().sum::<f64>() / tail.len() as f64).0,
            num(r.t_final_mean),
            r.t_final_max.to_string(),
            num(r.unit_t_final_mean),
            r.converged_trials.to_string(),
            saturated.to_string(),
        ]);
        overview.row(&row);
    }
    overview.write(&opts.out.join("sweep.csv"))?;
    if saturated_points > 0 && !opts.allow_saturation {
        return Err(CliError::Saturation(format!("{saturated_points} sweep points had saturated trials")));
    }
    Ok(overview)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DemoKind {
    Ghost,
    Roc,
    Ser,
}

/// Range-Doppler map of the configured geometry with a same-parameter
/// interfering radar, and its CFAR detections.
pub struct GhostDemo {
    pub map: RangeDopplerMap,
    pub detections: Vec<Detection>,
}

pub fn ghost_demo(cfg: &ExperimentConfig) -> Result<GhostDemo, CliError> {
    cfg.validate()?;
    let (radar, phy, g) = (&cfg.radar, &cfg.phy, &cfg.geometry);
    let n = radar.chirps_per_frame as usize;
    let echo = synth_dechirped_echo(radar, g.target_range_m, g.target_velocity_mps, echo_amplitude(radar, phy, g.target_range_m), n)?;
    let amp = los_amplitude(radar.tx_power_w, radar.wavelength_m(), phy, g.interferer_range_m);
    let mut sig = inject_r2r_interferer(&echo, radar, g.interferer_range_m, g.interferer_velocity_mps, g.interferer_delay_s, amp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.demo.seed);
    add_awgn(&mut sig, phy.noise_power_w(radar.adc_bandwidth_hz), &mut rng);
    let map = range_doppler(&sig, radar, phy.window)?;
    let detections = goca_cfar(&map, phy.cfar_training, phy.cfar_guard, phy.cfar_pfa)?;
    Ok(GhostDemo { map, detections })
}

/// Detection probability against false-alarm rate at each demo distance,
/// with and without a communication interferer at the same distance.
pub fn roc_demo(cfg: &ExperimentConfig) -> Result<Csv, CliError> {
    cfg.validate()?;
    let comm = CommConfig { carrier_hz: cfg.demo.roc_comm_carrier_hz, ..cfg.comm };
    let mut csv = Csv::new(
        &cfg.hash()?,
        cfg.demo.seed,
        &["distance_m", "pfa", "pd_interference_free", "pd_interfered", "sinr_free_db", "sinr_interfered_db"],
    );
    for &d in &cfg.demo.roc_distances_m {
        let geom = InterferenceGeometry { alpha_d: cfg.network.alpha_d, ..InterferenceGeometry::new(d, d) };
        geom.validate()?;
        let free = target_cell_sinr(&cfg.radar, &comm, &cfg.phy, &geom, false);
        let hit = target_cell_sinr(&cfg.radar, &comm, &cfg.phy, &geom, true);
        for &pfa in &cfg.demo.roc_pfa {
            csv.row(&[
                num(d),
                num(pfa),
                num(pd_from_sinr(pfa, free)?),
                num(pd_from_sinr(pfa, hit)?),
                num(db(free)),
                num(db(hit)),
            ]);
        }
    }
    Ok(csv)
}

/// Symbol error rate of the communication link against SNR.
pub fn ser_demo(cfg: &ExperimentConfig) -> Result<Csv, CliError> {
    cfg.validate()?;
    let comm = CommConfig { carrier_hz: cfg.demo.ser_comm_carrier_hz, ..cfg.comm };
    comm.validate(&cfg.radar)?;
    let mut csv = Csv::new(
        &cfg.hash()?,
        cfg.demo.seed,
        &[
            "snr_db",
            "ser_analytic",
            "ser_free",
            "ser_interfered",
            "ser_interfered_std_error",
            "alpha_int_measured",
            "ser_bound",
        ],
    );
    for (i, &snr_db) in cfg.demo.ser_snr_db.iter().enumerate() {
        let snr = 10f64.powf(snr_db / 10.0);
        let setup = SerSetup { snr, sir: cfg.demo.ser_sir, v_i: cfg.geometry.interferer_velocity_mps };
        let seed = cfg.demo.seed.wrapping_add(i as u64);
        let free = ser_monte_carlo(&comm, &cfg.radar, &setup, cfg.demo.ser_symbols, false, seed)?;
        let hit = ser_monte_carlo(&comm, &cfg.radar, &setup, cfg.demo.ser_symbols, true, seed)?;
        let ps = ser_qam(comm.constellation_size, snr)?;
        csv.row(&[
            num(snr_db),
            num(ps),
            num(free.ser),
            num(hit.ser),
            num(hit.std_error()),
            num(hit.alpha_int_measured),
            num(ser_with_interference(ps, hit.alpha_int_measured)?),
        ]);
    }
    Ok(csv)
}

/// `phy-demo`: writes the demo's CSV files under `out` and returns them by name.
pub fn cmd_phy_demo(kind: DemoKind, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(String, Csv)>, CliError> {
    let hash = cfg.hash()?;
    let files = match kind {
        DemoKind::Ghost => {
            let demo = ghost_demo(cfg)?;
            let mut header = vec!["velocity_mps".to_string()];
            header.extend(demo.map.range_axis.iter().map(|&r| num(r)));
            let refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut map = Csv::new(&hash, cfg.demo.seed, &refs);
            for (v, &vel) in demo.map.velocity_axis.iter().enumerate() {
                let mut row = vec![num(vel)];
                row.extend((0..demo.map.n_range()).map(|r| num(db(demo.map.at(v, r)))));
                map.row(&row);
            }
            let mut dets = Csv::new(&hash, cfg.demo.seed, &["range_m", "velocity_mps", "power_db"]);
            for d in &demo.detections {
                dets.row(&[num(d.range), num(d.velocity), num(db(d.power))]);
            }
            vec![("range_doppler.csv".to_string(), map), ("detections.csv".to_string(), dets)]
        }
        DemoKind::Roc => vec![("roc.csv".to_string(), roc_demo(cfg)?)],
        DemoKind::Ser => vec![("ser.csv".to_string(), ser_demo(cfg)?)],
    };
    for (name, csv) in &files {
        csv.write(&out.join(name))?;
    }
    Ok(files)
}
