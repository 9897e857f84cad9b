//! Occupancy-grid state encoding.
//!
//! The sensed strip (three lanes, 60 m behind to 100 m ahead of the ego's
//! rear bumper) is cut into 1 m tiles. Ego tiles carry the ego speed,
//! tiles under other vehicles carry their estimated speed, free road is 0
//! and off-road tiles are −1. Rows are ordered left, ego lane, right in the
//! ego's own frame; column 0 is the farthest tile behind.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SensedEnvironment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub behind: usize,
    pub ahead: usize,
    pub rows: usize,
}

impl GridSpec {
    pub const STANDARD: GridSpec = GridSpec { behind: 60, ahead: 100, rows: 3 };

    pub const fn cols(&self) -> usize {
        self.behind + self.ahead
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols()
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::STANDARD
    }
}

pub const STATE_LEN: usize = GridSpec::STANDARD.len();

/// Row-major (row × column) state vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn zeros(spec: &GridSpec) -> Self {
        StateVector(vec![0.0; spec.len()])
    }

    pub fn from_vec(values: Vec<f64>, spec: &GridSpec) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Dimension { expected: spec.len(), got: values.len() });
        }
        Ok(StateVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Tiles whose centre lies inside `[start, start + length)`, in relative
/// metres, clipped to the window.
fn covered_columns(spec: &GridSpec, start: f64, length: f64) -> std::ops::Range<usize> {
    let offset = spec.behind as f64;
    // Centre of column c sits at c + 0.5 - behind.
    let first = (start + offset - 0.5).ceil().max(0.0);
    let last = (start + length + offset - 0.5).ceil().min(spec.cols() as f64);
    if last <= first {
        return 0..0;
    }
    first as usize..last as usize
}

pub fn encode(sensed: &SensedEnvironment, spec: &GridSpec) -> StateVector {
    let cols = spec.cols();
    let mut grid = vec![0.0; spec.len()];
    let ego_lane = sensed.ego.lane as i64;
    let row_of = |lane: usize| -> Option<usize> {
        let r = lane as i64 - ego_lane + 1;
        (0..spec.rows as i64).contains(&r).then_some(r as usize)
    };

    if sensed.offroad_left {
        grid[..cols].fill(-1.0);
    }
    if sensed.offroad_right {
        grid[2 * cols..3 * cols].fill(-1.0);
    }

    // Farthest first so nearer vehicles win tile conflicts.
    let mut order: Vec<_> = sensed.neighbors.iter().collect();
    order.sort_by(|a, b| sensed.gap(b).abs().total_cmp(&sensed.gap(a).abs()).then(b.id.cmp(&a.id)));
    for n in order {
        let Some(row) = row_of(n.lane) else { continue };
        let speed = sensed.speed_of(n);
        for c in covered_columns(spec, n.rel_x, n.length) {
            grid[row * cols + c] = speed;
        }
    }
    for c in covered_columns(spec, 0.0, sensed.ego.length) {
        grid[cols + c] = sensed.ego.v;
    }
    StateVector(grid)
}

const ROW_LABELS: [char; 3] = ['L', 'E', 'R'];

/// Printable dump: a character strip per row followed by a run-length
/// listing of every non-zero tile that [`parse_debug`] reads back exactly.
pub fn decode_debug(state: &[f64], spec: &GridSpec) -> Result<String> {
    if state.len() != spec.len() {
        return Err(Error::Dimension { expected: spec.len(), got: state.len() });
    }
    let cols = spec.cols();
    let mut out = String::new();
    writeln!(out, "grid rows={} behind={} ahead={}", spec.rows, spec.behind, spec.ahead).unwrap();
    for r in 0..spec.rows {
        let label = ROW_LABELS.get(r).copied().unwrap_or('?');
        out.push(label);
        out.push(' ');
        for (c, &v) in state[r * cols..(r + 1) * cols].iter().enumerate() {
            let ch = if v < 0.0 {
                '#'
            } else if v == 0.0 {
                if c == spec.behind { '|' } else { '.' }
            } else {
                'o'
            };
            out.push(ch);
        }
        out.push('\n');
    }
    for r in 0..spec.rows {
        let row = &state[r * cols..(r + 1) * cols];
        let mut c = 0;
        while c < cols {
            let v = row[c];
            let mut end = c + 1;
            while end < cols && row[end].to_bits() == v.to_bits() {
                end += 1;
            }
            if v != 0.0 {
                writeln!(out, "run {r} {c} {end} {v:?}").unwrap();
            }
            c = end;
        }
    }
    Ok(out)
}

pub fn parse_debug(dump: &str) -> Result<StateVector> {
    let mut lines = dump.lines();
    let header = lines.next().ok_or_else(|| Error::GridParse("empty dump".into()))?;
    let mut dims = [0usize; 3];
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "grid" {
        return Err(Error::GridParse(format!("bad header `{header}`")));
    }
    for (slot, (field, key)) in dims.iter_mut().zip(fields[1..].iter().zip(["rows=", "behind=", "ahead="])) {
        *slot = field
            .strip_prefix(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::GridParse(format!("bad header field `{field}`")))?;
    }
    let spec = GridSpec { rows: dims[0], behind: dims[1], ahead: dims[2] };
    let cols = spec.cols();
    let mut grid = vec![0.0; spec.len()];
    for line in lines.filter(|l| l.starts_with("run ")) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::GridParse(format!("bad run `{line}`"));
        if parts.len() != 5 {
            return Err(bad());
        }
        let r: usize = parts[1].parse().map_err(|_| bad())?;
        let start: usize = parts[2].parse().map_err(|_| bad())?;
        let end: usize = parts[3].parse().map_err(|_| bad())?;
        let v: f64 = parts[4].parse().map_err(|_| bad())?;
        if r >= spec.rows || start >= end || end > cols {
            return Err(bad());
        }
        grid[r * cols + start..r * cols + end].fill(v);
    }
    StateVector::from_vec(grid, &spec)
}
