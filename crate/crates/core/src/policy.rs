//! Stochastic scheduling policies: a probability 4-vector per state over the
//! decisions (local, offload, both, idle), plus the three reference baselines.

use crate::chain::Decision;
use crate::error::{Error, Result};
use crate::model::{cloud_time, StateSpace, SysState, SystemParams};

/// Tolerance for the per-state normalization `sum_k g^k = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A stationary randomized policy: one probability vector per state, stored
/// densely over the whole space (unreachable states default to pure idle).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    space: StateSpace,
    rows: Vec<[f64; 4]>,
}

impl Policy {
    /// The always-idle policy (the only feasible choice at q = 0).
    pub fn all_idle(space: StateSpace) -> Self {
        Self { space, rows: vec![[0.0, 0.0, 0.0, 1.0]; space.len()] }
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, state_idx: usize) -> &[f64; 4] {
        &self.rows[state_idx]
    }

    pub fn set_row(&mut self, state_idx: usize, g: [f64; 4]) {
        self.rows[state_idx] = g;
    }

    /// Probability of decision `d` in the state with index `state_idx`.
    pub fn prob(&self, state_idx: usize, d: Decision) -> f64 {
        self.rows[state_idx][d.idx()]
    }

    /// Check normalization and feasibility masks; returns every violation.
    pub fn validate(&self, params: &SystemParams) -> Vec<Violation> {
        let mut violations = Vec::new();
        let space = params.state_space();
        if space != self.space {
            violations.push(Violation {
                state: SysState::new(0, 0, 0),
                kind: ViolationKind::DimensionMismatch,
            });
            return violations;
        }
        for (si, g) in self.rows.iter().enumerate() {
            let state = space.state(si);
            let mut total = 0.0;
            for d in Decision::ALL {
                let p = g[d.idx()];
                total += p;
                if !(p.is_finite() && p >= 0.0) {
                    violations.push(Violation {
                        state,
                        kind: ViolationKind::NegativeProbability { k: d.k(), value: p },
                    });
                } else if p > 0.0 && !d.is_feasible(state) {
                    violations.push(Violation {
                        state,
                        kind: ViolationKind::InfeasibleMass { k: d.k(), value: p },
                    });
                }
            }
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                violations.push(Violation { state, kind: ViolationKind::NotNormalized { total } });
            }
        }
        violations
    }

    /// Serialize as CSV: one record per state, probabilities at 17
    /// significant digits so the table round-trips bit-exactly.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "q,c_t,c_l,g1,g2,g3,g4")?;
        for (si, g) in self.rows.iter().enumerate() {
            let s = self.space.state(si);
            writeln!(
                w,
                "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.q, s.c_t, s.c_l, g[0], g[1], g[2], g[3]
            )?;
        }
        Ok(())
    }

    /// Parse the CSV form produced by [`Policy::write_csv`]. Every state of
    /// the space must appear exactly once.
    pub fn read_csv<R: std::io::BufRead>(r: R, space: StateSpace) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::PolicyFormat("empty file".into()))?
            .map_err(Error::Io)?;
        if header.trim() != "q,c_t,c_l,g1,g2,g3,g4" {
            return Err(Error::PolicyFormat(format!(
                "unexpected header `{}` (expected `q,c_t,c_l,g1,g2,g3,g4`)",
                header.trim()
            )));
        }
        let mut rows: Vec<Option<[f64; 4]>> = vec![None; space.len()];
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::PolicyFormat(format!(
                    "line {lineno}: expected 7 fields, found {}",
                    fields.len()
                )));
            }
            let parse_usize = |s: &str, what: &str| {
                s.trim().parse::<usize>().map_err(|_| {
                    Error::PolicyFormat(format!("line {lineno}: bad {what} `{}`", s.trim()))
                })
            };
            let parse_f64 = |s: &str, what: &str| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::PolicyFormat(format!("line {lineno}: bad {what} `{}`", s.trim()))
                })
            };
            let state = SysState::new(
                parse_usize(fields[0], "q")?,
                parse_usize(fields[1], "c_t")?,
                parse_usize(fields[2], "c_l")?,
            );
            if !space.contains(state) {
                return Err(Error::PolicyFormat(format!(
                    "line {lineno}: state {state} outside the configured space"
                )));
            }
            let g = [
                parse_f64(fields[3], "g1")?,
                parse_f64(fields[4], "g2")?,
                parse_f64(fields[5], "g3")?,
                parse_f64(fields[6], "g4")?,
            ];
            let si = space.index(state);
            if rows[si].replace(g).is_some() {
                return Err(Error::PolicyFormat(format!("line {lineno}: duplicate state {state}")));
            }
        }
        let mut table = Vec::with_capacity(space.len());
        for (si, row) in rows.into_iter().enumerate() {
            match row {
                Some(g) => table.push(g),
                None => {
                    return Err(Error::PolicyFormat(format!(
                        "missing state {}",
                        space.state(si)
                    )))
                }
            }
        }
        Ok(Self { space, rows: table })
    }
}

/// A single policy-table violation, reported by [`Policy::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub state: SysState,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    DimensionMismatch,
    NegativeProbability { k: usize, value: f64 },
    InfeasibleMass { k: usize, value: f64 },
    NotNormalized { total: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ViolationKind::DimensionMismatch => {
                write!(f, "policy table does not match the parameter state space")
            }
            ViolationKind::NegativeProbability { k, value } => {
                write!(f, "state {}: g{k} = {value} is not a probability", self.state)
            }
            ViolationKind::InfeasibleMass { k, value } => {
                write!(f, "state {}: g{k} = {value} on an infeasible decision", self.state)
            }
            ViolationKind::NotNormalized { total } => {
                write!(f, "state {}: probabilities sum to {total}", self.state)
            }
        }
    }
}

/// The three reference scheduling policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Execute every task on the local CPU.
    Local,
    /// Offload every task to the server.
    Cloud,
    /// Schedule a waiting task whenever a unit is idle.
    Greedy,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Baseline::Local),
            "cloud" => Ok(Baseline::Cloud),
            "greedy" => Ok(Baseline::Greedy),
            other => Err(Error::InvalidParameter(format!(
                "unknown baseline policy `{other}` (expected local, cloud or greedy)"
            ))),
        }
    }
}

/// Build one of the baseline policies for the given parameters.
///
/// The greedy policy prefers starting two tasks at once; with a single queued
/// task and both units idle it picks the unit with the smaller expected
/// completion time (the server iff `t_c < N`).
pub fn make_baseline(baseline: Baseline, params: &SystemParams) -> Policy {
    let space = params.state_space();
    let mut policy = Policy::all_idle(space);
    let cloud_faster = match cloud_time(params) {
        Ok(t_c) => t_c < params.local_slots as f64,
        Err(_) => false,
    };
    for si in 0..space.len() {
        let state = space.state(si);
        let g = match baseline {
            Baseline::Local => {
                if Decision::Local.is_feasible(state) {
                    [1.0, 0.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 1.0]
                }
            }
            Baseline::Cloud => {
                if Decision::Offload.is_feasible(state) {
                    [0.0, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 1.0]
                }
            }
            Baseline::Greedy => {
                let local_ok = Decision::Local.is_feasible(state);
                let offload_ok = Decision::Offload.is_feasible(state);
                if Decision::Both.is_feasible(state) {
                    [0.0, 0.0, 1.0, 0.0]
                } else if local_ok && offload_ok {
                    // Exactly one task queued, both units idle.
                    if cloud_faster {
                        [0.0, 1.0, 0.0, 0.0]
                    } else {
                        [1.0, 0.0, 0.0, 0.0]
                    }
                } else if local_ok {
                    [1.0, 0.0, 0.0, 0.0]
                } else if offload_ok {
                    [0.0, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 1.0]
                }
            }
        };
        policy.set_row(si, g);
    }
    policy
}
