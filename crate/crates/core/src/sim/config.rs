use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vehicle::VehicleKind;

/// How uncontrolled vehicles move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrafficMode {
    /// Constant speed, fixed lane. Manual trajectories are fully predictable.
    ConstantSpeed,
    /// Krauss-style safe-speed following with driver imperfection and
    /// speed-gain lane changes.
    CarFollowing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherScale {
    pub speed_factor: f64,
    pub accel_factor: f64,
}

impl WeatherScale {
    pub const CLEAR: WeatherScale = WeatherScale { speed_factor: 1.0, accel_factor: 1.0 };
    /// Desired speeds −10 %, acceleration and deceleration −30 %.
    pub const RAIN: WeatherScale = WeatherScale { speed_factor: 0.9, accel_factor: 0.7 };
}

impl Default for WeatherScale {
    fn default() -> Self {
        WeatherScale::CLEAR
    }
}

/// One entry of the traffic mix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindSpec {
    pub kind: VehicleKind,
    pub fraction: f64,
    pub length: f64,
    pub desired_speed: f64,
}

impl KindSpec {
    pub fn new(kind: VehicleKind, fraction: f64, desired_speed: f64) -> Self {
        KindSpec { kind, fraction, length: kind.default_length(), desired_speed }
    }
}

/// Slow passenger cars only; the mix used for training.
pub fn passenger_mix() -> Vec<KindSpec> {
    vec![KindSpec::new(VehicleKind::ManualSlow, 1.0, 16.0)]
}

/// Half slower, half faster than the ego's desired speed.
pub fn slow_fast_mix(slow_speed: f64) -> Vec<KindSpec> {
    vec![
        KindSpec::new(VehicleKind::ManualSlow, 0.5, slow_speed),
        KindSpec::new(VehicleKind::ManualFast, 0.5, 25.0),
    ]
}

/// Passenger cars mixed with trucks, buses and motorcycles.
pub fn mixed_types() -> Vec<KindSpec> {
    vec![
        KindSpec::new(VehicleKind::ManualSlow, 0.40, 16.0),
        KindSpec::new(VehicleKind::ManualFast, 0.40, 25.0),
        KindSpec::new(VehicleKind::Truck, 0.05, 14.0),
        KindSpec::new(VehicleKind::Bus, 0.05, 16.0),
        KindSpec::new(VehicleKind::Motorcycle, 0.10, 21.0),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_lanes: usize,
    /// Decision interval in seconds.
    pub dt: f64,
    /// Controlled-vehicle decisions per episode.
    pub episode_len: usize,
    pub entry_period_s: f64,
    pub entry_speed_range: (f64, f64),
    /// 1-based position of the ego in the entry order.
    pub ego_entry_index: usize,
    pub ego_desired_v: f64,
    pub ego_length: f64,
    pub ego_max_speed: f64,
    /// Driver imperfection in [0, 1]; CarFollowing mode only.
    pub sigma: f64,
    /// Proportional sensing noise on relative positions.
    pub noise_pct: f64,
    pub mode: TrafficMode,
    pub weather_scale: WeatherScale,
    pub kind_mix: Vec<KindSpec>,
    /// Free space beyond a vehicle's own length required at the entry point.
    pub entry_gap: f64,
    /// Manual maximum acceleration (m/s²).
    pub manual_accel: f64,
    /// Manual comfortable deceleration used in the safe-speed rule (m/s²).
    pub manual_decel: f64,
    /// Driver reaction time in the safe-speed rule (s).
    pub reaction_time: f64,
    pub road_length: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_lanes: 3,
            dt: 1.0,
            episode_len: 60,
            entry_period_s: 2.0,
            entry_speed_range: (12.0, 17.0),
            ego_entry_index: 10,
            ego_desired_v: 21.0,
            ego_length: 5.0,
            ego_max_speed: 30.0,
            sigma: 0.0,
            noise_pct: 0.0,
            mode: TrafficMode::ConstantSpeed,
            weather_scale: WeatherScale::CLEAR,
            kind_mix: passenger_mix(),
            entry_gap: 10.0,
            manual_accel: 2.0,
            manual_decel: 2.0,
            reaction_time: 1.0,
            road_length: 5000.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_lanes != 3 {
            return fail(format!("sim.n_lanes must be 3, got {}", self.n_lanes));
        }
        if !(self.dt > 0.0) {
            return fail(format!("sim.dt must be positive, got {}", self.dt));
        }
        if !(self.entry_period_s > 0.0) {
            return fail(format!("sim.entry_period_s must be positive, got {}", self.entry_period_s));
        }
        let (lo, hi) = self.entry_speed_range;
        if !(lo >= 0.0 && hi >= lo) {
            return fail(format!("sim.entry_speed_range must satisfy 0 <= lo <= hi, got ({lo}, {hi})"));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return fail(format!("sim.sigma must lie in [0, 1], got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.noise_pct) {
            return fail(format!("sim.noise_pct must lie in [0, 1), got {}", self.noise_pct));
        }
        if self.ego_entry_index == 0 {
            return fail("sim.ego_entry_index is 1-based and must be at least 1".into());
        }
        if !(self.ego_length > 0.0) {
            return fail(format!("sim.ego_length must be positive, got {}", self.ego_length));
        }
        if self.kind_mix.is_empty() {
            return fail("sim.kind_mix must list at least one vehicle kind".into());
        }
        let mut total = 0.0;
        for spec in &self.kind_mix {
            if spec.kind == VehicleKind::Ego {
                return fail("sim.kind_mix may not contain the Ego kind".into());
            }
            if !(spec.length > 0.0) || !(spec.fraction >= 0.0) {
                return fail(format!("sim.kind_mix entry {:?} needs length > 0 and fraction >= 0", spec.kind));
            }
            total += spec.fraction;
        }
        if !(total > 0.0) {
            return fail("sim.kind_mix fractions must sum to a positive value".into());
        }
        let min_road = 25.0 * self.episode_len as f64 * self.dt * 1.5;
        if self.road_length < min_road {
            return fail(format!("sim.road_length must be at least {min_road} m, got {}", self.road_length));
        }
        Ok(())
    }

    /// Samples a manual vehicle kind according to the mix fractions.
    pub(crate) fn pick_kind(&self, u: f64) -> KindSpec {
        let total: f64 = self.kind_mix.iter().map(|k| k.fraction).sum();
        let mut acc = 0.0;
        for spec in &self.kind_mix {
            acc += spec.fraction / total;
            if u < acc {
                return *spec;
            }
        }
        *self.kind_mix.last().expect("validated non-empty mix")
    }
}

/// Scales manual desired speeds and accelerations by the weather factors.
/// The controlled vehicle's parameters are left untouched; the returned
/// config carries an identity weather scale so it cannot be applied twice.
pub fn apply_weather(config: &SimConfig) -> SimConfig {
    let WeatherScale { speed_factor, accel_factor } = config.weather_scale;
    let mut out = config.clone();
    for spec in &mut out.kind_mix {
        spec.desired_speed *= speed_factor;
    }
    out.manual_accel *= accel_factor;
    out.manual_decel *= accel_factor;
    out.weather_scale = WeatherScale::CLEAR;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clear_weather_is_identity() {
        let cfg = SimConfig { kind_mix: mixed_types(), ..SimConfig::default() };
        assert_eq!(apply_weather(&cfg), cfg);
    }

    #[test]
    fn rain_scales_manual_only() {
        let cfg = SimConfig { weather_scale: WeatherScale::RAIN, ..SimConfig::default() };
        let wet = apply_weather(&cfg);
        assert!((wet.kind_mix[0].desired_speed - 14.4).abs() < 1e-12);
        assert!((wet.manual_accel - 1.4).abs() < 1e-12);
        assert!((wet.manual_decel - 1.4).abs() < 1e-12);
        assert_eq!(wet.ego_desired_v, 21.0);
        assert_eq!(wet.weather_scale, WeatherScale::CLEAR);
    }

    #[test]
    fn validation_names_field() {
        let cfg = SimConfig { sigma: 1.5, ..SimConfig::default() };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("sim.sigma"), "{err}");
        let cfg = SimConfig { entry_period_s: 0.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn kind_sampling_follows_fractions() {
        let cfg = SimConfig { kind_mix: mixed_types(), ..SimConfig::default() };
        assert_eq!(cfg.pick_kind(0.0).kind, VehicleKind::ManualSlow);
        assert_eq!(cfg.pick_kind(0.5).kind, VehicleKind::ManualFast);
        assert_eq!(cfg.pick_kind(0.82).kind, VehicleKind::Truck);
        assert_eq!(cfg.pick_kind(0.87).kind, VehicleKind::Bus);
        assert_eq!(cfg.pick_kind(0.95).kind, VehicleKind::Motorcycle);
    }
}
