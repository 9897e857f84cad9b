use crate::action::Action;
use crate::error::{Error, Result};

use super::problem::{DpProblem, EgoGridState};

pub const ORACLE_MAX_HORIZON: usize = 6;

/// Exhaustive search over every permitted action sequence. Ties go to the
/// sequence that is lexicographically smallest by action index.
pub fn brute_force_oracle(problem: &DpProblem, horizon: usize) -> Result<(f64, Vec<Action>)> {
    if horizon > ORACLE_MAX_HORIZON {
        return Err(Error::Planner(format!("oracle horizon {horizon} exceeds {ORACLE_MAX_HORIZON}")));
    }
    if problem.horizon() < horizon {
        return Err(Error::Planner(format!("traffic predicted for {} steps, need {horizon}", problem.horizon())));
    }
    Ok(search(problem, 0, horizon, problem.start))
}

fn search(problem: &DpProblem, t: usize, horizon: usize, s: EgoGridState) -> (f64, Vec<Action>) {
    if t == horizon {
        return (0.0, Vec::new());
    }
    let mut best: Option<(f64, Vec<Action>)> = None;
    for a in Action::ALL {
        if !problem.permitted(t, s, a) {
            continue;
        }
        let (n, c) = problem.stage_cost(t, s, a).expect("permitted actions stay on the road");
        let (rest, mut seq) = search(problem, t + 1, horizon, n);
        let total = c + rest;
        if best.as_ref().map_or(true, |(b, _)| total < *b) {
            seq.insert(0, a);
            best = Some((total, seq));
        }
    }
    best.expect("longitudinal actions are always permitted")
}

/// Cost of a given action sequence from the start state, accumulated from
/// the last step backwards. Fails on a masked action.
pub fn sequence_cost(problem: &DpProblem, actions: &[Action]) -> Result<f64> {
    if problem.horizon() < actions.len() {
        return Err(Error::Planner("sequence longer than the predicted traffic".into()));
    }
    let mut s = problem.start;
    let mut costs = Vec::with_capacity(actions.len());
    for (t, &a) in actions.iter().enumerate() {
        if !problem.permitted(t, s, a) {
            return Err(Error::Planner(format!("action {a} is masked at step {t}")));
        }
        let (n, c) = problem.stage_cost(t, s, a).expect("permitted");
        costs.push(c);
        s = n;
    }
    Ok(costs.iter().rev().fold(0.0, |acc, c| c + acc))
}
