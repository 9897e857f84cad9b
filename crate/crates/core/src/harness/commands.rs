use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::agent::{mask_actions, train_with, EgoEnv, EpisodeRecord};
use crate::codec::{encode, GridSpec};
use crate::dp::{extract_trajectory, solve, DpProblem};
use crate::error::{Error, Result};
use crate::nn::{config_hash, load_checkpoint_for, save_checkpoint, MlpParams, Q_LAYERS};
use crate::seed;
use crate::shield::shield;
use crate::sim::{
    detect_collisions, generate_mixed_scenario, generate_scenario, sense, with_estimated_speeds, SensedEnvironment,
    SimConfig, VehicleId, WorldState,
};

use super::config::ExperimentConfig;
use super::episode::{run_scenario, GreedyPolicy, Policy, RandomPolicy, ReplayPolicy, RunOptions};
use super::metrics::{compute_metrics, write_metrics_csv, Metrics, ScenarioLog, Setting};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TABLE_FILE: &str = "table.txt";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const FLOW_FILE: &str = "flow.csv";
pub const SPEED_PROFILE_FILE: &str = "speed_profile.csv";

pub struct TrainReport {
    pub net: MlpParams,
    pub log: Vec<EpisodeRecord>,
    pub env_steps: u64,
    pub summary: String,
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Trains the agent on the configured scenario recipe and writes the
/// checkpoint and the per-episode log to the output directory.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    cfg.validate()?;
    create_out(&cfg.out_dir)?;
    let hp = cfg.hyperparams();
    let outcome = train_with(&cfg.sim, &hp, &cfg.reward, cfg.seed, |_| {})?;
    let agent = outcome.agent;
    let bytes = save_checkpoint(&agent.online, &agent.opt, agent.grad_steps, config_hash(&cfg.to_toml()));
    fs::write(cfg.out_dir.join(CHECKPOINT_FILE), bytes)?;
    let mut w = csv::Writer::from_path(cfg.out_dir.join(TRAIN_LOG_FILE))?;
    for rec in &outcome.log {
        w.serialize(rec)?;
    }
    w.flush()?;
    let tail = &outcome.log[outcome.log.len().saturating_sub(100)..];
    let tail_ret = if tail.is_empty() { 0.0 } else { tail.iter().map(|r| r.ret).sum::<f64>() / tail.len() as f64 };
    let summary = format!(
        "trained {} steps over {} episodes; mean return of last {} episodes {:.1}",
        outcome.env_steps,
        outcome.log.len(),
        tail.len(),
        tail_ret
    );
    Ok(TrainReport { net: agent.online, log: outcome.log, env_steps: outcome.env_steps, summary })
}

pub fn load_network(path: &Path) -> Result<MlpParams> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    Ok(load_checkpoint_for(&bytes, &Q_LAYERS)?.0)
}

fn collision_gap(cfg: &ExperimentConfig, shielded: bool) -> f64 {
    if shielded {
        cfg.safety.collision_gap
    } else {
        cfg.reward.delta0
    }
}

fn run_options(cfg: &ExperimentConfig, sim: &SimConfig, shielded: bool) -> RunOptions {
    RunOptions {
        steps: sim.episode_len,
        shield: shielded.then_some(cfg.safety),
        collision_gap: collision_gap(cfg, shielded),
    }
}

fn eval_env(cfg: &ExperimentConfig, sim: &SimConfig, i: u64) -> Result<EgoEnv> {
    EgoEnv::new(
        sim,
        &cfg.reward,
        seed::derive(cfg.seed, seed::DOMAIN_EVAL_SCENARIO, i),
        seed::rng(cfg.seed, seed::DOMAIN_EVAL_NOISE, i),
    )
}

/// Which policy drives the ego in [`evaluate`].
#[derive(Clone, Copy)]
pub enum PolicyKind<'a> {
    Greedy(&'a MlpParams),
    Random,
}

/// Evaluates one setting over `cfg.n_scenarios` seeded scenarios.
pub fn evaluate(cfg: &ExperimentConfig, sim: &SimConfig, policy: PolicyKind<'_>, shielded: bool) -> Result<(Metrics, Vec<ScenarioLog>)> {
    let opts = run_options(cfg, sim, shielded);
    let logs = (0..cfg.n_scenarios as u64)
        .into_par_iter()
        .map(|i| {
            let mut env = eval_env(cfg, sim, i)?;
            match policy {
                PolicyKind::Greedy(net) => run_scenario(&mut env, &mut GreedyPolicy { net }, &opts, i),
                PolicyKind::Random => {
                    let rng = seed::rng(cfg.seed, seed::DOMAIN_POLICY, i);
                    run_scenario(&mut env, &mut RandomPolicy { rng }, &opts, i)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let name = match policy {
        PolicyKind::Greedy(_) => "rl",
        PolicyKind::Random => "random",
    };
    let setting = Setting { policy: name.into(), density: sim.entry_period_s, shield: shielded, noise: sim.noise_pct };
    Ok((compute_metrics(&logs, &setting, sim.ego_desired_v, cfg.desired_tolerance), logs))
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    policy: &'a str,
    density: f64,
    shield: bool,
    noise: f64,
    #[serde(flatten)]
    log: &'a ScenarioLog,
}

fn write_trajectories(path: &Path, runs: &[(&Metrics, &[ScenarioLog])], keep: usize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (m, logs) in runs {
        for log in logs.iter().take(keep) {
            let s = &m.setting;
            let line = TrajectoryLine { policy: &s.policy, density: s.density, shield: s.shield, noise: s.noise, log };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_csv_file(path: &Path, metrics: &[Metrics]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_metrics_csv(file, metrics)
}

/// Result table with one column per density.
pub fn format_table(title: &str, metrics: &[Metrics]) -> String {
    let mut densities: Vec<f64> = Vec::new();
    let mut policies: Vec<String> = Vec::new();
    for m in metrics {
        if !densities.contains(&m.setting.density) {
            densities.push(m.setting.density);
        }
        if !policies.contains(&m.setting.policy) {
            policies.push(m.setting.policy.clone());
        }
    }
    let cell = |p: &str, d: f64, f: &dyn Fn(&Metrics) -> String| {
        metrics
            .iter()
            .find(|m| m.setting.policy == p && m.setting.density == d)
            .map(f)
            .unwrap_or_else(|| "-".into())
    };
    let blocks: [(&str, &dyn Fn(&Metrics) -> String); 5] = [
        ("Collisions", &|m| format!("{} ({} ego-caused)", m.collisions, m.ego_caused)),
        ("Lane changes", &|m| m.lane_changes.to_string()),
        ("Desired speed (%)", &|m| format!("{:.1}", m.pct_desired_speed)),
        ("Average speed (m/s)", &|m| format!("{:.2}", m.avg_speed)),
        ("Scenarios", &|m| m.scenarios.len().to_string()),
    ];
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<22}", "");
    for d in &densities {
        let _ = write!(out, "{:>24}", format!("1 veh / {d} s"));
    }
    out.push('\n');
    for (name, f) in blocks {
        let _ = writeln!(out, "{name}");
        for p in &policies {
            let _ = write!(out, "  {:<20}", p);
            for &d in &densities {
                let _ = write!(out, "{:>24}", cell(p, d, f));
            }
            out.push('\n');
        }
    }
    out
}

fn describe(cfg: &ExperimentConfig) -> String {
    format!(
        "mode {:?}, sigma {}, noise {}, shield {}, {} scenarios, seed {}",
        cfg.sim.mode,
        cfg.sim.sigma,
        cfg.sim.noise_pct,
        if cfg.shield { "on" } else { "off" },
        cfg.n_scenarios,
        cfg.seed
    )
}

/// Greedy evaluation at every configured density.
pub fn run_eval(cfg: &ExperimentConfig, net: &MlpParams) -> Result<Vec<Metrics>> {
    cfg.validate()?;
    create_out(&cfg.out_dir)?;
    let mut all = Vec::new();
    let mut logs = Vec::new();
    for &d in &cfg.densities {
        let (m, l) = evaluate(cfg, &cfg.sim_at(d), PolicyKind::Greedy(net), cfg.shield)?;
        all.push(m);
        logs.push(l);
    }
    write_csv_file(&cfg.out_dir.join(METRICS_FILE), &all)?;
    fs::write(cfg.out_dir.join(TABLE_FILE), format_table(&format!("Evaluation: {}", describe(cfg)), &all))?;
    let runs: Vec<_> = all.iter().zip(logs.iter().map(|l| l.as_slice())).collect();
    write_trajectories(&cfg.out_dir.join(TRAJECTORIES_FILE), &runs, cfg.trajectory_scenarios)?;
    Ok(all)
}

/// Start of a matched scenario: the ego has entered and its speed is
/// rounded onto the planner's integer grid.
pub fn matched_world(cfg: &ExperimentConfig, sim: &SimConfig, i: u64) -> Result<WorldState> {
    let mut world = generate_scenario(sim, seed::derive(cfg.seed, seed::DOMAIN_EVAL_SCENARIO, i))?;
    world.advance_until_ego(sim)?;
    let ego = world.ego_id.ok_or_else(|| Error::Config("scenario has no ego".into()))?;
    let v = world.vehicle_mut(ego).ok_or(Error::UnknownVehicle(ego))?;
    v.v = v.v.round().clamp(0.0, sim.ego_max_speed);
    Ok(world)
}

/// Optimal action sequence for a matched scenario.
pub fn plan(cfg: &ExperimentConfig, sim: &SimConfig, world: &WorldState) -> Result<Vec<Action>> {
    let horizon = sim.episode_len;
    let problem = DpProblem::from_world(world, sim, &cfg.reward, horizon)?;
    let grid = crate::dp::DpGrid { horizon, ..cfg.dp };
    let table = solve(&problem, &grid)?;
    Ok(extract_trajectory(&table, &problem)?.actions)
}

/// DP and greedy RL on identical scenarios, one pair of settings per
/// density. The planner always drives unshielded.
pub fn dp_compare(cfg: &ExperimentConfig, net: &MlpParams) -> Result<(Vec<Metrics>, Vec<Vec<ScenarioLog>>)> {
    let mut all = Vec::new();
    let mut all_logs = Vec::new();
    for &d in &cfg.densities {
        let sim = cfg.sim_at(d);
        let pairs = (0..cfg.n_scenarios as u64)
            .into_par_iter()
            .map(|i| {
                let world = matched_world(cfg, &sim, i)?;
                let noise = || seed::rng(cfg.seed, seed::DOMAIN_EVAL_NOISE, i);
                let actions = plan(cfg, &sim, &world)?;
                let mut env = EgoEnv::from_world(world.clone(), &sim, &cfg.reward, noise())?;
                let dp = run_scenario(&mut env, &mut ReplayPolicy { actions }, &run_options(cfg, &sim, false), i)?;
                let mut env = EgoEnv::from_world(world, &sim, &cfg.reward, noise())?;
                let rl = run_scenario(&mut env, &mut GreedyPolicy { net }, &run_options(cfg, &sim, cfg.shield), i)?;
                Ok((dp, rl))
            })
            .collect::<Result<Vec<_>>>()?;
        let (dp, rl): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let setting = |policy: &str, shield| Setting { policy: policy.into(), density: d, shield, noise: sim.noise_pct };
        let vd = sim.ego_desired_v;
        all.push(compute_metrics(&dp, &setting("dp", false), vd, cfg.desired_tolerance));
        all.push(compute_metrics(&rl, &setting("rl", cfg.shield), vd, cfg.desired_tolerance));
        all_logs.push(dp);
        all_logs.push(rl);
    }
    Ok((all, all_logs))
}

pub fn run_dp_compare(cfg: &ExperimentConfig, net: &MlpParams) -> Result<Vec<Metrics>> {
    cfg.validate()?;
    create_out(&cfg.out_dir)?;
    let (all, logs) = dp_compare(cfg, net)?;
    write_csv_file(&cfg.out_dir.join(METRICS_FILE), &all)?;
    let title = format!("Driving behavior of the DP and RL policies: {}", describe(cfg));
    fs::write(cfg.out_dir.join(TABLE_FILE), format_table(&title, &all))?;
    let runs: Vec<_> = all.iter().zip(logs.iter().map(|l| l.as_slice())).collect();
    write_trajectories(&cfg.out_dir.join(TRAJECTORIES_FILE), &runs, cfg.trajectory_scenarios)?;
    Ok(all)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub schema: u32,
    pub penetration: f64,
    pub scenario: u64,
    pub controlled: u64,
    pub vehicles: u64,
    /// Mean speed over every (vehicle, step) sample.
    pub avg_speed: f64,
    /// Counted collisions caused by a policy-driven vehicle.
    pub collisions: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowResult {
    pub penetration: f64,
    pub avg_speed: f64,
    /// Relative change against the 0% baseline, in percent.
    pub improvement_pct: f64,
    pub collisions: u64,
    pub rows: Vec<FlowRow>,
}

/// One mixed-traffic scenario; every policy-driven vehicle observes the
/// road through its own sensors and is shielded.
pub fn flow_scenario(cfg: &ExperimentConfig, net: &MlpParams, penetration: f64, i: u64) -> Result<FlowRow> {
    let sim = cfg.flow_sim();
    let mut world = generate_mixed_scenario(&sim, seed::derive(cfg.seed, seed::DOMAIN_FLOW_SCENARIO, i), penetration)?;
    let mut noise = seed::rng(cfg.seed, seed::DOMAIN_FLOW_NOISE, i);
    let mut history: Vec<(VehicleId, SensedEnvironment)> = Vec::new();
    let (mut speed_sum, mut samples, mut collisions) = (0.0, 0u64, 0u64);
    let mut seen: Vec<VehicleId> = Vec::new();
    for _ in 0..sim.episode_len {
        let mut actions = Vec::new();
        let mut next_history = Vec::new();
        for id in world.controlled_ids() {
            let raw = sense(&world, id, sim.noise_pct, &mut noise)?;
            let prev = history.iter().find(|(h, _)| *h == id).map(|(_, s)| s);
            let sensed = with_estimated_speeds(prev, raw, sim.dt);
            let state = encode(&sensed, &GridSpec::STANDARD);
            let mask = mask_actions(&sensed);
            let mut policy = GreedyPolicy { net };
            let proposed = policy.act(&super::episode::Observation { t: world.t, sensed: &sensed, state: &state, mask })?;
            actions.push((id, shield(&sensed, proposed, &cfg.safety, sim.dt).action));
            next_history.push((id, sensed));
        }
        history = next_history;
        world.step(&actions, &sim)?;
        collisions += detect_collisions(&world, cfg.safety.collision_gap).iter().filter(|c| c.ego_caused).count() as u64;
        for v in &world.vehicles {
            speed_sum += v.v;
            samples += 1;
            if !seen.contains(&v.id) {
                seen.push(v.id);
            }
        }
    }
    let controlled = seen.iter().filter(|id| world.vehicle(**id).map_or(false, |v| v.controlled)).count() as u64;
    Ok(FlowRow {
        schema: super::metrics::METRICS_SCHEMA,
        penetration,
        scenario: i,
        controlled,
        vehicles: seen.len() as u64,
        avg_speed: if samples > 0 { speed_sum / samples as f64 } else { 0.0 },
        collisions,
    })
}

pub fn traffic_flow(cfg: &ExperimentConfig, net: &MlpParams) -> Result<Vec<FlowResult>> {
    let mut pens = cfg.flow.penetrations.clone();
    if !pens.contains(&0.0) {
        pens.insert(0, 0.0);
    }
    let mut results: Vec<FlowResult> = Vec::new();
    for &p in &pens {
        let rows = (0..cfg.n_scenarios as u64)
            .into_par_iter()
            .map(|i| flow_scenario(cfg, net, p, i))
            .collect::<Result<Vec<_>>>()?;
        let avg_speed = rows.iter().map(|r| r.avg_speed).sum::<f64>() / rows.len() as f64;
        let collisions = rows.iter().map(|r| r.collisions).sum();
        results.push(FlowResult { penetration: p, avg_speed, improvement_pct: 0.0, collisions, rows });
    }
    let base = results.iter().find(|r| r.penetration == 0.0).map(|r| r.avg_speed).unwrap_or(f64::NAN);
    for r in &mut results {
        r.improvement_pct = 100.0 * (r.avg_speed - base) / base;
    }
    Ok(results)
}

pub fn format_flow_table(cfg: &ExperimentConfig, results: &[FlowResult]) -> String {
    let mut out = format!(
        "Effect of autonomous vehicles: sigma {}, noise {}, manual desired speed {} m/s, {} scenarios of {} s\n",
        cfg.flow.sigma, cfg.sim.noise_pct, cfg.flow.manual_desired_v, cfg.n_scenarios, cfg.flow.episode_len
    );
    let _ = writeln!(out, "{:>12}{:>18}{:>22}{:>12}", "Penetration", "Avg speed (m/s)", "Improvement over 0%", "Collisions");
    for r in results {
        let _ = writeln!(
            out,
            "{:>11.0}%{:>18.2}{:>21.1}%{:>12}",
            100.0 * r.penetration,
            r.avg_speed,
            r.improvement_pct,
            r.collisions
        );
    }
    out
}

/// Network speed per penetration rate in mixed traffic.
pub fn run_traffic_flow(cfg: &ExperimentConfig, net: &MlpParams) -> Result<Vec<FlowResult>> {
    cfg.validate()?;
    create_out(&cfg.out_dir)?;
    let results = traffic_flow(cfg, net)?;
    let mut w = csv::Writer::from_path(cfg.out_dir.join(FLOW_FILE))?;
    for r in &results {
        for row in &r.rows {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    fs::write(cfg.out_dir.join(TABLE_FILE), format_flow_table(cfg, &results))?;
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfileRow {
    pub density: f64,
    pub t: u64,
    /// Scenarios still running at this step.
    pub n: u64,
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation of the ego speed per step.
pub fn speed_profile(density: f64, logs: &[ScenarioLog], steps: usize) -> Vec<SpeedProfileRow> {
    (0..steps)
        .filter_map(|t| {
            let vs: Vec<f64> = logs.iter().filter_map(|l| l.steps.get(t).map(|s| s.v)).collect();
            if vs.is_empty() {
                return None;
            }
            let n = vs.len() as f64;
            let mean = vs.iter().sum::<f64>() / n;
            let var = vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            Some(SpeedProfileRow { density, t: t as u64, n: vs.len() as u64, mean, std: var.sqrt() })
        })
        .collect()
}

/// Per-step ego speed statistics of the greedy policy for plotting.
pub fn run_plot_data(cfg: &ExperimentConfig, net: &MlpParams) -> Result<Vec<SpeedProfileRow>> {
    cfg.validate()?;
    create_out(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for &d in &cfg.densities {
        let sim = cfg.sim_at(d);
        let (_, logs) = evaluate(cfg, &sim, PolicyKind::Greedy(net), cfg.shield)?;
        rows.extend(speed_profile(d, &logs, sim.episode_len));
    }
    let mut w = csv::Writer::from_path(cfg.out_dir.join(SPEED_PROFILE_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::StepRecord;

    #[test]
    fn speed_profile_statistics() {
        let log = |vs: &[f64]| ScenarioLog {
            scenario: 0,
            start_lane: 0,
            start_v: 0.0,
            steps: vs
                .iter()
                .enumerate()
                .map(|(t, &v)| StepRecord {
                    t: t as u64,
                    proposed: Action::Keep,
                    action: Action::Keep,
                    overridden: false,
                    lane: 0,
                    x: 0.0,
                    v,
                    reward: 0.0,
                })
                .collect(),
            collision: false,
            ego_caused: false,
        };
        let rows = speed_profile(2.0, &[log(&[10.0, 12.0]), log(&[14.0])], 3);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].n, rows[0].mean, rows[0].std), (2, 12.0, 2.0));
        assert_eq!((rows[1].n, rows[1].mean, rows[1].std), (1, 12.0, 0.0));
    }

    #[test]
    fn table_has_a_column_per_density() {
        let m = |p: &str, d| compute_metrics(&[], &Setting { policy: p.into(), density: d, shield: false, noise: 0.0 }, 21.0, 0.5);
        let t = format_table("t", &[m("dp", 8.0), m("rl", 8.0), m("dp", 4.0), m("rl", 4.0)]);
        assert!(t.contains("1 veh / 8 s") && t.contains("1 veh / 4 s"));
        assert_eq!(t.matches("  dp").count(), 5);
    }
}
