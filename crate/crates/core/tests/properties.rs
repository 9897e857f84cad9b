use proptest::prelude::*;

use highway_lab::agent::{epsilon, mask_actions, Hyperparams};
use highway_lab::codec::{decode_debug, encode, parse_debug, GridSpec, STATE_LEN};
use highway_lab::harness::{compute_metrics, ScenarioLog, Setting, StepRecord};
use highway_lab::per::compute_priority;
use highway_lab::reward::{obstacle_penalty, total_reward, Obstacle, RewardConfig};
use highway_lab::shield::{min_time_gap, shield, SafetyConfig};
use highway_lab::sim::{EgoSnapshot, Neighbor, SensedEnvironment};
use highway_lab::Action;

fn obstacles() -> impl Strategy<Value = Vec<Obstacle>> {
    prop::collection::vec((0.0..80.0f64, 0usize..3).prop_map(|(gap, lane)| Obstacle { gap, lane }), 0..8)
}

fn scene() -> impl Strategy<Value = SensedEnvironment> {
    let neighbor = (0usize..3, -60.0..100.0f64, 0.0..30.0f64);
    (0usize..3, 0.0..30.0f64, prop::collection::vec(neighbor, 0..10)).prop_map(|(lane, v, others)| {
        let neighbors = others
            .into_iter()
            .enumerate()
            .filter(|(_, (l, _, _))| l.abs_diff(lane) <= 1)
            .map(|(i, (l, rel_x, speed))| Neighbor { id: i as u32 + 2, rel_x, lane: l, speed: Some(speed), length: 5.0 })
            .collect();
        SensedEnvironment {
            ego: EgoSnapshot { id: 1, lane, x: 500.0, v, length: 5.0 },
            neighbors,
            offroad_left: lane == 0,
            offroad_right: lane == 2,
        }
    })
}

proptest! {
    #[test]
    fn reward_is_never_positive(obs in obstacles(), v in 0.0..30.0f64, vp in 0.0..30.0f64, l in 0usize..3, lp in 0usize..3) {
        let r = total_reward(&obs, v, vp, l, lp, &RewardConfig::default());
        prop_assert!(r.total <= 0.0);
    }

    #[test]
    fn obstacle_penalty_decreases_with_gap(a in 0.0..80.0f64, b in 0.0..80.0f64) {
        prop_assume!(a < b);
        prop_assert!(obstacle_penalty(a, 1, 1, 10.0) > obstacle_penalty(b, 1, 1, 10.0));
        prop_assert_eq!(obstacle_penalty(a, 1, 2, 10.0), 0.0);
    }

    #[test]
    fn closing_a_gap_never_lowers_the_collision_count(obs in obstacles(), i in 0usize..8, shrink in 0.0..1.0f64) {
        prop_assume!(!obs.is_empty());
        let cfg = RewardConfig::default();
        let before = total_reward(&obs, 20.0, 20.0, 1, 1, &cfg).collision_count;
        let mut closer = obs.clone();
        let k = i % closer.len();
        closer[k].gap *= shrink;
        prop_assert!(total_reward(&closer, 20.0, 20.0, 1, 1, &cfg).collision_count >= before);
    }

    #[test]
    fn priority_grows_with_error(a in 0.0..100.0f64, b in 0.0..100.0f64) {
        prop_assume!(a < b);
        prop_assert!(compute_priority(a, 0.6, 0.01) < compute_priority(b, 0.6, 0.01));
        prop_assert!(compute_priority(0.0, 0.6, 0.01) > 0.0);
    }

    #[test]
    fn epsilon_is_bounded_and_decreasing(k in 0u64..5_000_000) {
        let hp = Hyperparams::default();
        let e = epsilon(k, &hp);
        prop_assert!(e >= hp.eps_min && e <= hp.eps_max);
        prop_assert!(epsilon(k + 1, &hp) <= e);
    }

    #[test]
    fn harder_braking_shortens_the_time_gap(ve in 0.0..30.0f64, vl in 0.0..30.0f64, d in 0.5..4.0f64) {
        prop_assert!(min_time_gap(ve, vl, 2.0 * d) <= min_time_gap(ve, vl, d));
        prop_assert!(min_time_gap(ve, vl, d) >= 0.0);
    }

    #[test]
    fn shield_never_emits_a_masked_lane_change(sensed in scene(), a in 0usize..7) {
        let proposed = Action::from_index(a).unwrap();
        let d = shield(&sensed, proposed, &SafetyConfig::default(), 1.0);
        if d.action.is_lane_change() {
            prop_assert!(mask_actions(&sensed).contains(d.action));
        }
        let again = shield(&sensed, d.action, &SafetyConfig::default(), 1.0);
        prop_assert_eq!(again.action, d.action);
    }

    #[test]
    fn encoding_has_fixed_shape_and_round_trips(sensed in scene()) {
        let spec = GridSpec::STANDARD;
        let s = encode(&sensed, &spec);
        prop_assert_eq!(s.len(), STATE_LEN);
        prop_assert!(s.as_slice().iter().all(|&x| x == -1.0 || x >= 0.0));
        let back = parse_debug(&decode_debug(s.as_slice(), &spec).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn metrics_stay_in_range(vs in prop::collection::vec((0.0..30.0f64, 0usize..3), 1..60), crash in any::<bool>()) {
        let steps = vs
            .iter()
            .enumerate()
            .map(|(t, &(v, lane))| StepRecord {
                t: t as u64,
                proposed: Action::Keep,
                action: Action::Keep,
                overridden: false,
                lane,
                x: 0.0,
                v,
                reward: 0.0,
            })
            .collect();
        let log = ScenarioLog { scenario: 0, start_lane: 1, start_v: 20.0, steps, collision: crash, ego_caused: false };
        let setting = Setting { policy: "rl".into(), density: 2.0, shield: false, noise: 0.0 };
        let m = compute_metrics(&[log], &setting, 21.0, 0.5);
        prop_assert!((0.0..=100.0).contains(&m.pct_desired_speed));
        prop_assert!((0.0..=1.0).contains(&m.collision_rate));
        prop_assert!(m.lane_changes as usize <= vs.len());
    }
}
