//! Optimal-policy synthesis.
//!
//! For a fixed local-execution fraction `eta`, the power-constrained
//! delay-minimization problem is linear in the occupation measure
//! `x[state][k] = pi[state] * g[state][k]`:
//!
//! * objective: `E[q] / alpha` (the queueing delay), plus the constant
//!   processing term `eta * N + (1 - eta) * t_c`;
//! * a power budget row with one slack variable;
//! * a coupling row that forces the scheduling throughput split to match
//!   `eta`;
//! * the stationary balance equations under the decision-conditioned kernel;
//! * normalization.
//!
//! The delay-optimal policy is then found by a one-dimensional grid search
//! over `eta` and recovered state-wise as `g = x / sum_k x`.

use crate::analysis::{self, decision_power_coeffs, OVERFLOW_VALIDITY_THRESHOLD};
use crate::chain::{policy_kernel, steady_state, Decision, DecisionKernel};
use crate::error::{Error, Result};
use crate::lpcore::{self, LpProblem, LpStatus};
use crate::model::{cloud_time, StateSpace, SystemParams};
use crate::policy::Policy;

/// Threshold below which a state's total occupation mass is treated as zero
/// when recovering the policy (such states default to pure idle).
pub const RECOVERY_MASS_FLOOR: f64 = 1e-12;

/// Mapping between LP variables and feasible (state, decision) pairs. The
/// power-budget slack is the final variable.
#[derive(Debug, Clone)]
pub struct VarMap {
    space: StateSpace,
    pairs: Vec<(usize, Decision)>,
    by_state: Vec<[Option<usize>; 4]>,
}

impl VarMap {
    fn build(kernel: &DecisionKernel, space: StateSpace) -> Self {
        let mut pairs = Vec::new();
        let mut by_state = vec![[None; 4]; space.len()];
        for (si, d) in kernel.feasible_pairs() {
            by_state[si][d.idx()] = Some(pairs.len());
            pairs.push((si, d));
        }
        Self { space, pairs, by_state }
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    /// Feasible (state index, decision) pairs in variable order.
    pub fn pairs(&self) -> &[(usize, Decision)] {
        &self.pairs
    }

    /// LP variable index of a feasible pair.
    pub fn var(&self, state_idx: usize, d: Decision) -> Option<usize> {
        self.by_state[state_idx][d.idx()]
    }

    /// Index of the power slack variable.
    pub fn slack_var(&self) -> usize {
        self.pairs.len()
    }

    /// Total LP variable count (pairs plus slack).
    pub fn n_vars(&self) -> usize {
        self.pairs.len() + 1
    }
}

/// The stationary state-decision distribution `x[state][k]`.
#[derive(Debug, Clone)]
pub struct OccupationMeasure {
    vars: VarMap,
    values: Vec<f64>,
}

impl OccupationMeasure {
    pub fn new(vars: VarMap, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), vars.pairs().len());
        Self { vars, values }
    }

    pub fn vars(&self) -> &VarMap {
        &self.vars
    }

    pub fn get(&self, state_idx: usize, d: Decision) -> f64 {
        self.vars.var(state_idx, d).map_or(0.0, |v| self.values[v])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// State marginals `pi[state] = sum_k x[state][k]`.
    pub fn marginals(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.vars.space.len()];
        for (&(si, _), &v) in self.vars.pairs().iter().zip(&self.values) {
            pi[si] += v;
        }
        pi
    }
}

/// A P2 instance at fixed eta: the LP, the variable map, and the constant
/// processing-time term to add to the LP objective.
pub struct P2Instance {
    pub problem: LpProblem,
    pub vars: VarMap,
    pub objective_constant: f64,
}

/// Assembles P2 instances for one parameter set, sharing everything that
/// does not depend on eta.
pub struct P2Builder {
    params: SystemParams,
    space: StateSpace,
    kernel: DecisionKernel,
    vars: VarMap,
    objective: Vec<f64>,
    /// Power row, balance rows (one dropped), and normalization; the
    /// eta-coupling row is patched in per instance as row 1.
    static_rows: Vec<Vec<(usize, f64)>>,
    static_rhs: Vec<f64>,
    cloud_time: f64,
}

/// Index of the balance row dropped in favour of normalization (the rows are
/// linearly dependent). State 0 is (0,0,0).
const DROPPED_BALANCE_STATE: usize = 0;

impl P2Builder {
    pub fn new(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        if params.alpha <= 0.0 {
            return Err(Error::UndefinedDelay);
        }
        let space = params.state_space();
        let kernel = DecisionKernel::build(params)?;
        let vars = VarMap::build(&kernel, space);
        let n_states = space.len();

        let mut objective = vec![0.0; vars.n_vars()];
        for (v, &(si, _)) in vars.pairs().iter().enumerate() {
            objective[v] = space.state(si).q as f64 / params.alpha;
        }

        // Row 0: power budget with slack.
        let mut power_row: Vec<(usize, f64)> = Vec::new();
        for (v, &(si, d)) in vars.pairs().iter().enumerate() {
            let (cpu, tx) = decision_power_coeffs(space.state(si), d);
            let coeff = cpu * params.p_loc + params.beta * tx * params.p_tx;
            if coeff != 0.0 {
                power_row.push((v, coeff));
            }
        }
        power_row.push((vars.slack_var(), 1.0));

        // Balance rows: inflow minus outflow per state, one row dropped.
        let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_states];
        for (v, &(si, d)) in vars.pairs().iter().enumerate() {
            for &(dest, w) in kernel.row(si, d).expect("feasible pair") {
                balance[dest].push((v, w));
            }
            balance[si].push((v, -1.0));
        }
        let mut static_rows = Vec::with_capacity(n_states + 2);
        let mut static_rhs = Vec::with_capacity(n_states + 2);
        static_rows.push(power_row);
        static_rhs.push(params.p_max);
        for (si, mut row) in balance.into_iter().enumerate() {
            if si == DROPPED_BALANCE_STATE {
                continue;
            }
            row.sort_by_key(|&(v, _)| v);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            row.retain(|&(_, w)| w != 0.0);
            static_rows.push(row);
            static_rhs.push(0.0);
        }
        // Normalization over the occupation variables (slack excluded).
        static_rows.push((0..vars.pairs().len()).map(|v| (v, 1.0)).collect());
        static_rhs.push(1.0);

        Ok(Self {
            params: params.clone(),
            space,
            kernel,
            vars,
            objective,
            static_rows,
            static_rhs,
            cloud_time: cloud_time(params)?,
        })
    }

    pub fn vars(&self) -> &VarMap {
        &self.vars
    }

    pub fn kernel(&self) -> &DecisionKernel {
        &self.kernel
    }

    /// The constant part of the objective: `eta * N + (1 - eta) * t_c`.
    pub fn objective_constant(&self, eta: f64) -> f64 {
        eta * self.params.local_slots as f64 + (1.0 - eta) * self.cloud_time
    }

    /// The LP without the eta coupling: power budget, balance rows, and
    /// normalization. Grid searches warm-start from its optimum.
    pub fn base_problem(&self) -> LpProblem {
        LpProblem {
            n_vars: self.vars.n_vars(),
            objective: self.objective.clone(),
            rows: self.static_rows.clone(),
            rhs: self.static_rhs.clone(),
        }
    }

    /// The eta-coupling row: `(1-eta) sum x^1 - eta sum x^2 + (1-2eta) sum x^3 = 0`,
    /// which pins the local share of the scheduling throughput to eta.
    pub fn coupling_row(&self, eta: f64) -> Vec<(usize, f64)> {
        let mut row = Vec::new();
        for (v, &(_, d)) in self.vars.pairs().iter().enumerate() {
            let coeff = match d {
                Decision::Local => 1.0 - eta,
                Decision::Offload => -eta,
                Decision::Both => 1.0 - 2.0 * eta,
                Decision::Idle => 0.0,
            };
            if coeff != 0.0 {
                row.push((v, coeff));
            }
        }
        row
    }

    /// Assemble the LP at a fixed eta.
    pub fn instance(&self, eta: f64) -> P2Instance {
        assert!((0.0..=1.0).contains(&eta), "eta outside [0, 1]");
        let mut rows = Vec::with_capacity(self.static_rows.len() + 1);
        let mut rhs = Vec::with_capacity(self.static_rhs.len() + 1);
        rows.push(self.static_rows[0].clone());
        rhs.push(self.static_rhs[0]);
        rows.push(self.coupling_row(eta));
        rhs.push(0.0);
        rows.extend_from_slice(&self.static_rows[1..]);
        rhs.extend_from_slice(&self.static_rhs[1..]);
        P2Instance {
            problem: LpProblem {
                n_vars: self.vars.n_vars(),
                objective: self.objective.clone(),
                rows,
                rhs,
            },
            vars: self.vars.clone(),
            objective_constant: self.objective_constant(eta),
        }
    }

    /// Verify the occupation-measure invariants of an LP solution and wrap it.
    fn accept_solution(&self, eta: f64, x: &[f64]) -> Result<OccupationMeasure> {
        let values: Vec<f64> = x[..self.vars.pairs().len()].to_vec();
        let occupation = OccupationMeasure::new(self.vars.clone(), values);
        let total = occupation.total();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::NumericalFailure(format!(
                "occupation mass {total} deviates from 1 beyond 1e-8"
            )));
        }
        // Balance residual over every state, including the dropped row.
        let mut residual = vec![0.0; self.space.len()];
        for (v, &(si, d)) in self.vars.pairs().iter().enumerate() {
            let xv = occupation.values[v];
            if xv == 0.0 {
                continue;
            }
            residual[si] -= xv;
            for &(dest, w) in self.kernel.row(si, d).expect("feasible pair") {
                residual[dest] += xv * w;
            }
        }
        let worst = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if worst > 1e-7 {
            return Err(Error::NumericalFailure(format!(
                "balance residual {worst:.3e} exceeds 1e-7"
            )));
        }
        // Eta coupling.
        let coupling: f64 = self
            .coupling_row(eta)
            .iter()
            .map(|&(v, c)| c * occupation.values.get(v).copied().unwrap_or(0.0))
            .sum();
        if coupling.abs() > 1e-7 {
            return Err(Error::NumericalFailure(format!(
                "eta coupling residual {coupling:.3e} exceeds 1e-7"
            )));
        }
        Ok(occupation)
    }
}

/// One-shot assembly of the P2 LP at a fixed eta.
pub fn build_p2(params: &SystemParams, eta: f64) -> Result<P2Instance> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter("eta must lie in [0, 1]".into()));
    }
    Ok(P2Builder::new(params)?.instance(eta))
}

/// Recover the stochastic policy `g = x / sum_k x`, treating states whose
/// total mass is at most `floor` as unresolved.
///
/// Unresolved states get a draining action (start whatever a free unit can
/// take) rather than idle: an LP solution truncates the exponentially small
/// tail of the occupation measure at the solver tolerance, and idling just
/// outside that truncated support would turn the full-buffer region into an
/// absorbing class that captures the infinite-horizon chain through a
/// tolerance-sized leak. Draining sends any such excursion back into the
/// support, keeping the recovered chain's stationary law at the LP marginals.
pub fn recover_policy_with_floor(x: &OccupationMeasure, floor: f64) -> Policy {
    let space = x.vars().space();
    let mut policy = Policy::all_idle(space);
    for si in 0..space.len() {
        let state = space.state(si);
        let mut g = [0.0; 4];
        let mut total = 0.0;
        for d in Decision::ALL {
            let v = x.get(si, d);
            g[d.idx()] = v;
            total += v;
        }
        if total > floor {
            for p in g.iter_mut() {
                *p /= total;
            }
        } else {
            g = [0.0; 4];
            let drain = [Decision::Both, Decision::Local, Decision::Offload]
                .into_iter()
                .find(|d| d.is_feasible(state))
                .unwrap_or(Decision::Idle);
            g[drain.idx()] = 1.0;
        }
        policy.set_row(si, g);
    }
    policy
}

/// [`recover_policy_with_floor`] at the default mass floor.
pub fn recover_policy(x: &OccupationMeasure) -> Policy {
    recover_policy_with_floor(x, RECOVERY_MASS_FLOOR)
}

/// Outcome of one grid point of the eta search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStatus {
    /// LP solved and the no-overflow validity gate passed.
    Optimal,
    /// LP infeasible (the power budget cannot be met at this eta).
    Infeasible,
    /// LP solved, but the buffer-full mass violates the model assumptions.
    Overflow,
    /// The LP solver failed numerically.
    Failed,
}

impl GridStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GridStatus::Optimal => "optimal",
            GridStatus::Infeasible => "infeasible",
            GridStatus::Overflow => "overflow",
            GridStatus::Failed => "failed",
        }
    }
}

/// One record of the search trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub eta: f64,
    pub status: GridStatus,
    /// Total delay `T'(eta)` where the LP solved (also for overflow-gated
    /// points, for inspection).
    pub t_bar: Option<f64>,
}

/// Result of the one-dimensional search.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub eta_star: f64,
    pub policy: Policy,
    pub occupation: OccupationMeasure,
    /// Optimal total delay, in slots.
    pub t_bar_star: f64,
    pub trace: Vec<TracePoint>,
}

impl SynthesisResult {
    /// Serialize the search trace as CSV.
    pub fn write_trace_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "eta,status,t_bar")?;
        for point in &self.trace {
            match point.t_bar {
                Some(t) => writeln!(
                    w,
                    "{},{},{}",
                    analysis::sig12(point.eta),
                    point.status.as_str(),
                    analysis::sig12(t)
                )?,
                None => writeln!(w, "{},{},", analysis::sig12(point.eta), point.status.as_str())?,
            }
        }
        Ok(())
    }
}

/// Grid search over `eta in {0, 1/grid, ..., 1}`, keeping the admissible
/// point with the smallest total delay (lowest eta wins ties).
///
/// The returned policy is verified end to end: the occupation-measure
/// invariants hold, its chain's stationary distribution matches the LP
/// marginals within 1e-6 total variation, and the power budget is met.
pub fn search_optimal(params: &SystemParams, grid: usize) -> Result<SynthesisResult> {
    if grid == 0 {
        return Err(Error::InvalidParameter("grid must be at least 1".into()));
    }
    let builder = P2Builder::new(params)?;
    let space = builder.vars().space();
    let mut trace = Vec::with_capacity(grid + 1);
    let mut best: Option<(f64, f64)> = None; // (t_bar, eta)
    let mut first_failure: Option<String> = None;

    for j in 0..=grid {
        let eta = j as f64 / grid as f64;
        let instance = builder.instance(eta);
        let solution = match lpcore::solve_scan(&instance.problem) {
            Ok(s) => s,
            Err(e) => {
                if first_failure.is_none() {
                    first_failure = Some(e.to_string());
                }
                trace.push(TracePoint { eta, status: GridStatus::Failed, t_bar: None });
                continue;
            }
        };
        match solution.status {
            LpStatus::Optimal => {
                let t_bar = solution.objective + instance.objective_constant;
                let overflow: f64 = builder
                    .vars()
                    .pairs()
                    .iter()
                    .zip(&solution.x)
                    .filter(|(&(si, _), _)| space.state(si).q == space.buffer_cap())
                    .map(|(_, &x)| x)
                    .sum();
                if overflow >= OVERFLOW_VALIDITY_THRESHOLD {
                    trace.push(TracePoint { eta, status: GridStatus::Overflow, t_bar: Some(t_bar) });
                    continue;
                }
                trace.push(TracePoint { eta, status: GridStatus::Optimal, t_bar: Some(t_bar) });
                let better = match &best {
                    Some((incumbent, _)) => t_bar < *incumbent,
                    None => true,
                };
                if better {
                    best = Some((t_bar, eta));
                }
            }
            LpStatus::Infeasible => {
                trace.push(TracePoint { eta, status: GridStatus::Infeasible, t_bar: None });
            }
            LpStatus::Unbounded => {
                // The feasible set lies in the probability simplex; an
                // unbounded report is a solver failure.
                if first_failure.is_none() {
                    first_failure = Some("LP reported unbounded on a bounded program".into());
                }
                trace.push(TracePoint { eta, status: GridStatus::Failed, t_bar: None });
            }
        }
    }

    let (_, eta_star) = best.ok_or_else(|| {
        let infeasible = trace.iter().filter(|p| p.status == GridStatus::Infeasible).count();
        let overflow = trace.iter().filter(|p| p.status == GridStatus::Overflow).count();
        let failed = trace.iter().filter(|p| p.status == GridStatus::Failed).count();
        let mut msg = format!(
            "no admissible eta on the grid ({infeasible} infeasible, {overflow} overflow, {failed} failed \
             of {} points); the power budget may be too tight or the arrival rate too high for the buffer",
            trace.len()
        );
        if let Some(f) = first_failure {
            msg.push_str(&format!("; first failure: {f}"));
        }
        Error::SynthesisInfeasible(msg)
    })?;

    // Re-solve the winning grid point to the strict tolerances before
    // extracting the occupation measure.
    let instance = builder.instance(eta_star);
    let solution = lpcore::solve(&instance.problem)?;
    if solution.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!(
            "winning grid point eta={eta_star} did not re-solve to optimality ({:?})",
            solution.status
        )));
    }
    let t_bar_star = solution.objective + instance.objective_constant;
    let occupation = builder.accept_solution(eta_star, &solution.x)?;
    let marginals = occupation.marginals();

    // Round trip: the recovered policy's chain must reproduce the LP
    // marginals and respect the power budget. The solver resolves the
    // occupation measure only down to its tolerance, so states carrying less
    // mass than that are recovered from coarser and coarser floors until the
    // reproduction check passes.
    let mut outcome = None;
    let mut best_tv = f64::INFINITY;
    for floor in [RECOVERY_MASS_FLOOR, 1e-10, 1e-8, 1e-6, 1e-4] {
        let policy = recover_policy_with_floor(&occupation, floor);
        let chi = policy_kernel(builder.kernel(), &policy);
        let pi = match steady_state(&chi) {
            Ok(pi) => pi,
            // Tolerance junk can make the chain look multichain; a coarser
            // floor removes it.
            Err(Error::AmbiguousChain(_)) => continue,
            Err(e) => return Err(e),
        };
        let tv: f64 =
            pi.pi.iter().zip(&marginals).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        best_tv = best_tv.min(tv);
        if tv > 1e-6 {
            continue;
        }
        let metrics = analysis::metrics_from_steady_state(&pi, &policy, &space, params)?;
        if metrics.p_bar > params.p_max + 1e-6 {
            continue;
        }
        outcome = Some(policy);
        break;
    }
    let policy = outcome.ok_or_else(|| {
        Error::NumericalFailure(format!(
            "recovered policy's stationary law deviates from the LP marginals \
             (best total variation {best_tv:.3e} > 1e-6)"
        ))
    })?;

    Ok(SynthesisResult { eta_star, policy, occupation, t_bar_star, trace })
}
