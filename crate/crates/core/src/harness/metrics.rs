use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};

/// Version tag written in every metrics row.
pub const METRICS_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub proposed: Action,
    pub action: Action,
    pub overridden: bool,
    /// Ego state after the step.
    pub lane: usize,
    pub x: f64,
    pub v: f64,
    pub reward: f64,
}

/// Everything logged while driving one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub scenario: u64,
    pub start_lane: usize,
    pub start_v: f64,
    pub steps: Vec<StepRecord>,
    /// Set when the run ended on a counted collision.
    pub collision: bool,
    pub ego_caused: bool,
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub schema: u32,
    pub policy: String,
    pub density: f64,
    pub shield: bool,
    pub noise: f64,
    pub scenario: u64,
    pub steps: u64,
    pub collision: bool,
    pub ego_caused: bool,
    pub lane_changes: u64,
    pub overrides: u64,
    pub desired_steps: u64,
    pub speed_sum: f64,
    pub avg_speed: f64,
}

/// Label of an evaluation setting, repeated on each of its rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub policy: String,
    pub density: f64,
    pub shield: bool,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub setting: Setting,
    pub scenarios: Vec<ScenarioMetrics>,
    pub collisions: u64,
    pub ego_caused: u64,
    pub collision_rate: f64,
    pub lane_changes: u64,
    pub steps: u64,
    pub pct_desired_speed: f64,
    /// Mean over scenarios of each scenario's average speed.
    pub avg_speed: f64,
}

pub fn scenario_metrics(log: &ScenarioLog, setting: &Setting, v_desired: f64, tolerance: f64) -> ScenarioMetrics {
    let mut lane = log.start_lane;
    let (mut lane_changes, mut overrides, mut desired, mut speed_sum) = (0, 0, 0, 0.0);
    for s in &log.steps {
        if s.lane != lane {
            lane_changes += 1;
            lane = s.lane;
        }
        overrides += s.overridden as u64;
        desired += ((s.v - v_desired).abs() <= tolerance) as u64;
        speed_sum += s.v;
    }
    let steps = log.steps.len() as u64;
    ScenarioMetrics {
        schema: METRICS_SCHEMA,
        policy: setting.policy.clone(),
        density: setting.density,
        shield: setting.shield,
        noise: setting.noise,
        scenario: log.scenario,
        steps,
        collision: log.collision,
        ego_caused: log.ego_caused,
        lane_changes,
        overrides,
        desired_steps: desired,
        speed_sum,
        avg_speed: if steps > 0 { speed_sum / steps as f64 } else { 0.0 },
    }
}

pub fn compute_metrics(logs: &[ScenarioLog], setting: &Setting, v_desired: f64, tolerance: f64) -> Metrics {
    let rows = logs.iter().map(|l| scenario_metrics(l, setting, v_desired, tolerance)).collect();
    aggregate(setting.clone(), rows)
}

/// Reduces per-scenario rows in scenario order.
pub fn aggregate(setting: Setting, mut scenarios: Vec<ScenarioMetrics>) -> Metrics {
    scenarios.sort_by_key(|s| s.scenario);
    let n = scenarios.len();
    let collisions = scenarios.iter().filter(|s| s.collision).count() as u64;
    let ego_caused = scenarios.iter().filter(|s| s.ego_caused).count() as u64;
    let steps: u64 = scenarios.iter().map(|s| s.steps).sum();
    let desired: u64 = scenarios.iter().map(|s| s.desired_steps).sum();
    let avg_speed = if n > 0 { scenarios.iter().map(|s| s.avg_speed).sum::<f64>() / n as f64 } else { 0.0 };
    Metrics {
        setting,
        collisions,
        ego_caused,
        collision_rate: if n > 0 { collisions as f64 / n as f64 } else { 0.0 },
        lane_changes: scenarios.iter().map(|s| s.lane_changes).sum(),
        steps,
        pct_desired_speed: if steps > 0 { 100.0 * desired as f64 / steps as f64 } else { 0.0 },
        avg_speed,
        scenarios,
    }
}

pub fn write_metrics_csv<W: Write>(out: W, metrics: &[Metrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for m in metrics {
        for row in &m.scenarios {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses `metrics.csv` back into one [`Metrics`] per setting, in order of
/// first appearance.
pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<Metrics>> {
    let mut r = csv::Reader::from_reader(input);
    let mut groups: Vec<(Setting, Vec<ScenarioMetrics>)> = Vec::new();
    for row in r.deserialize() {
        let row: ScenarioMetrics = row?;
        if row.schema != METRICS_SCHEMA {
            return Err(Error::Config(format!("unsupported metrics schema {}", row.schema)));
        }
        let setting = Setting { policy: row.policy.clone(), density: row.density, shield: row.shield, noise: row.noise };
        match groups.iter_mut().find(|(s, _)| *s == setting) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((setting, vec![row])),
        }
    }
    Ok(groups.into_iter().map(|(s, rows)| aggregate(s, rows)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setting() -> Setting {
        Setting { policy: "rl".into(), density: 2.0, shield: false, noise: 0.0 }
    }

    fn step(t: u64, lane: usize, v: f64) -> StepRecord {
        StepRecord { t, proposed: Action::Keep, action: Action::Keep, overridden: false, lane, x: 0.0, v, reward: 0.0 }
    }

    #[test]
    fn constant_desired_speed_is_full_score() {
        let log = ScenarioLog {
            scenario: 0,
            start_lane: 1,
            start_v: 21.0,
            steps: (0..60).map(|t| step(t, 1, 21.0)).collect(),
            collision: false,
            ego_caused: false,
        };
        let m = compute_metrics(&[log], &setting(), 21.0, 0.5);
        assert_eq!(m.pct_desired_speed, 100.0);
        assert_eq!(m.lane_changes, 0);
        assert_eq!(m.avg_speed, 21.0);
    }

    #[test]
    fn hand_built_logs() {
        let a = ScenarioLog {
            scenario: 1,
            start_lane: 1,
            start_v: 20.0,
            steps: vec![step(0, 1, 20.5), step(1, 2, 21.0), step(2, 2, 22.0)],
            collision: false,
            ego_caused: false,
        };
        let b = ScenarioLog {
            scenario: 0,
            start_lane: 0,
            start_v: 16.0,
            steps: vec![step(0, 0, 18.0)],
            collision: true,
            ego_caused: true,
        };
        let m = compute_metrics(&[a, b], &setting(), 21.0, 0.5);
        assert_eq!(m.scenarios[0].scenario, 0);
        assert_eq!(m.collisions, 1);
        assert_eq!(m.ego_caused, 1);
        assert_eq!(m.collision_rate, 0.5);
        assert_eq!(m.lane_changes, 1);
        assert_eq!(m.steps, 4);
        assert_eq!(m.pct_desired_speed, 50.0);
        let want = ((20.5 + 21.0 + 22.0) / 3.0 + 18.0) / 2.0;
        assert!((m.avg_speed - want).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let log = ScenarioLog {
            scenario: 3,
            start_lane: 2,
            start_v: 14.3,
            steps: vec![step(0, 1, 14.3 + 0.1), step(1, 1, 1.0 / 3.0)],
            collision: false,
            ego_caused: false,
        };
        let other = Setting { shield: true, ..setting() };
        let m = vec![compute_metrics(&[log.clone()], &setting(), 21.0, 0.5), compute_metrics(&[log], &other, 21.0, 0.5)];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &m).unwrap();
        let back = read_metrics_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
