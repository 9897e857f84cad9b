use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{Error, Result};

use super::problem::{DpProblem, EgoGridState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpGrid {
    pub horizon: usize,
    /// Keep the cost-to-go of every step rather than only step 0.
    pub keep_values: bool,
}

impl Default for DpGrid {
    fn default() -> Self {
        DpGrid { horizon: 60, keep_values: false }
    }
}

/// Bounding box of the states reachable at one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slice {
    v_lo: u32,
    v_hi: u32,
    p_lo: i64,
    p_hi: i64,
    lanes: usize,
}

impl Slice {
    fn nv(&self) -> usize {
        (self.v_hi - self.v_lo + 1) as usize
    }

    fn np(&self) -> usize {
        (self.p_hi - self.p_lo + 1) as usize
    }

    fn len(&self) -> usize {
        self.lanes * self.nv() * self.np()
    }

    fn index(&self, s: EgoGridState) -> Option<usize> {
        if s.lane >= self.lanes || s.v < self.v_lo || s.v > self.v_hi || s.pos < self.p_lo || s.pos > self.p_hi {
            return None;
        }
        Some((s.lane * self.nv() + (s.v - self.v_lo) as usize) * self.np() + (s.pos - self.p_lo) as usize)
    }
}

/// Reachable boxes: speeds within ±2 per step of the start, positions
/// between the full-braking and full-acceleration paths. The box is
/// closed under every action.
fn slices(problem: &DpProblem, horizon: usize) -> Vec<Slice> {
    let max = problem.max_speed;
    let mut out = Vec::with_capacity(horizon + 1);
    let (mut v_lo, mut v_hi) = (problem.start.v, problem.start.v);
    let (mut p_lo, mut p_hi) = (problem.start.pos, problem.start.pos);
    for _ in 0..=horizon {
        out.push(Slice { v_lo, v_hi, p_lo, p_hi, lanes: problem.n_lanes });
        let (nlo, nhi) = (v_lo.saturating_sub(2), (v_hi + 2).min(max));
        p_lo += (v_lo + nlo) as i64;
        p_hi += (v_hi + nhi) as i64;
        v_lo = nlo;
        v_hi = nhi;
    }
    out
}

/// Optimal policy (all steps) and cost-to-go.
#[derive(Clone, Debug)]
pub struct ValueTable {
    slices: Vec<Slice>,
    policy: Vec<Vec<u8>>,
    values: Vec<Vec<f64>>,
    keep_values: bool,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.slices.len() - 1
    }

    /// Optimal cost-to-go, when stored for step `t`.
    pub fn value(&self, t: usize, s: EgoGridState) -> Option<f64> {
        if t == self.horizon() {
            return self.slices[t].index(s).map(|_| 0.0);
        }
        let stored = if self.keep_values { t } else if t == 0 { 0 } else { return None };
        let i = self.slices.get(t)?.index(s)?;
        self.values.get(stored).map(|v| v[i])
    }

    pub fn action(&self, t: usize, s: EgoGridState) -> Option<Action> {
        let i = self.slices.get(t)?.index(s)?;
        self.policy.get(t).and_then(|p| Action::from_index(p[i] as usize))
    }
}

/// Backward induction over the reachable grid. Ties between actions go to
/// the lowest action index.
pub fn solve(problem: &DpProblem, grid: &DpGrid) -> Result<ValueTable> {
    let h = grid.horizon;
    if problem.horizon() < h {
        return Err(Error::Planner(format!("traffic predicted for {} steps, need {h}", problem.horizon())));
    }
    if problem.start.lane >= problem.n_lanes || problem.start.v > problem.max_speed {
        return Err(Error::Planner("initial state is off the grid".into()));
    }
    let slices = slices(problem, h);
    let mut policy: Vec<Vec<u8>> = vec![Vec::new(); h];
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut next_values = vec![0.0; slices[h].len()];

    for t in (0..h).rev() {
        let cur = slices[t];
        let nxt = slices[t + 1];
        // Obstacle terms at the arrival step, per (lane, position).
        let mut terms = Vec::with_capacity(nxt.lanes * nxt.np());
        for lane in 0..nxt.lanes {
            for pos in nxt.p_lo..=nxt.p_hi {
                terms.push(problem.obstacle_terms(t + 1, lane, pos));
            }
        }
        let mut blocked = Vec::with_capacity(cur.lanes * cur.np());
        for lane in 0..cur.lanes {
            for pos in cur.p_lo..=cur.p_hi {
                blocked.push(problem.overlaps(t, lane, pos));
            }
        }

        let mut values = vec![0.0; cur.len()];
        let mut pol = vec![0u8; cur.len()];
        for lane in 0..cur.lanes {
            for v in cur.v_lo..=cur.v_hi {
                for pos in cur.p_lo..=cur.p_hi {
                    let s = EgoGridState { lane, v, pos };
                    let mut best = f64::INFINITY;
                    let mut best_a = Action::Keep;
                    for a in Action::ALL {
                        let Some(n) = problem.transition(s, a) else { continue };
                        if a.is_lane_change() && blocked[n.lane * cur.np() + (pos - cur.p_lo) as usize] {
                            continue;
                        }
                        let ni = nxt.index(n).expect("reachable box is closed under the dynamics");
                        let term = terms[n.lane * nxt.np() + (n.pos - nxt.p_lo) as usize];
                        let c = problem.stage_cost_from(s, n, term) + next_values[ni];
                        if c < best {
                            best = c;
                            best_a = a;
                        }
                    }
                    let i = cur.index(s).unwrap();
                    values[i] = best;
                    pol[i] = best_a.index() as u8;
                }
            }
        }
        policy[t] = pol;
        if grid.keep_values {
            kept.push(std::mem::take(&mut next_values));
        }
        next_values = values;
    }
    if grid.keep_values {
        kept.push(next_values);
        kept.reverse();
        // kept[t] now holds step t for t in 0..=h.
        kept.pop();
    } else {
        kept.push(next_values);
    }
    Ok(ValueTable { slices, policy, values: kept, keep_values: grid.keep_values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub actions: Vec<Action>,
    /// States at steps `0..=horizon`.
    pub states: Vec<EgoGridState>,
    pub costs: Vec<f64>,
    /// Sum of stage costs, accumulated from the last step backwards.
    pub total: f64,
}

impl PlannedTrajectory {
    pub fn lane_changes(&self) -> usize {
        self.actions.iter().filter(|a| a.is_lane_change()).count()
    }
}

/// Follows the stored argmin actions from the problem's start state.
pub fn extract_trajectory(table: &ValueTable, problem: &DpProblem) -> Result<PlannedTrajectory> {
    let mut s = problem.start;
    let mut actions = Vec::new();
    let mut states = vec![s];
    let mut costs = Vec::new();
    for t in 0..table.horizon() {
        let a = table.action(t, s).ok_or_else(|| Error::Planner(format!("no policy entry at step {t}")))?;
        let (n, c) = problem.stage_cost(t, s, a).ok_or_else(|| Error::Planner("policy left the road".into()))?;
        actions.push(a);
        costs.push(c);
        states.push(n);
        s = n;
    }
    let total = costs.iter().rev().fold(0.0, |acc, c| c + acc);
    Ok(PlannedTrajectory { actions, states, costs, total })
}
