//! The slot-level stochastic update of the device state, decision-conditioned
//! and policy-averaged transition kernels, and the stationary distribution.
//!
//! [`step`] is the single source of truth for the dynamics; the kernels are
//! built by enumerating its four (arrival, channel) outcomes per decision and
//! merging common destinations.

use crate::error::{Error, Result};
use crate::linalg::gth_stationary;
use crate::model::{SysState, SystemParams};
use crate::policy::Policy;
use petgraph::graph::{DiGraph, NodeIndex};

/// One of the four per-slot scheduling decisions.
///
/// The numbering follows the chain's decision index k = 1..4, encoding
/// (offload-start, local-start) = (0,1), (1,0), (1,1), (0,0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    /// k=1: start one task on the local CPU.
    Local,
    /// k=2: start offloading one task to the server.
    Offload,
    /// k=3: start one task locally and offload another.
    Both,
    /// k=4: schedule nothing.
    Idle,
}

impl Decision {
    pub const ALL: [Decision; 4] = [Decision::Local, Decision::Offload, Decision::Both, Decision::Idle];

    /// 1-based decision index k.
    pub fn k(self) -> usize {
        self.idx() + 1
    }

    /// 0-based index into policy rows.
    pub fn idx(self) -> usize {
        match self {
            Decision::Local => 0,
            Decision::Offload => 1,
            Decision::Both => 2,
            Decision::Idle => 3,
        }
    }

    pub fn from_k(k: usize) -> Option<Decision> {
        Decision::ALL.get(k.wrapping_sub(1)).copied()
    }

    /// Whether a local execution starts under this decision.
    pub fn starts_local(self) -> bool {
        matches!(self, Decision::Local | Decision::Both)
    }

    /// Whether an offload starts under this decision.
    pub fn starts_offload(self) -> bool {
        matches!(self, Decision::Offload | Decision::Both)
    }

    /// Decision feasibility mask: a unit can only accept a task when idle,
    /// and enough tasks must be queued.
    pub fn is_feasible(self, s: SysState) -> bool {
        match self {
            Decision::Local => s.q >= 1 && s.c_l == 0,
            Decision::Offload => s.q >= 1 && s.c_t == 0,
            Decision::Both => s.q >= 2 && s.c_l == 0 && s.c_t == 0,
            Decision::Idle => true,
        }
    }
}

/// The state mapping that wraps a finished unit back to idle:
/// `x` for `x < limit`, `0` at `x == limit`.
#[inline]
fn wrap_at(x: usize, limit: usize) -> usize {
    debug_assert!(x <= limit);
    if x < limit {
        x
    } else {
        0
    }
}

/// Deterministic slot update given the decision and the two exogenous bits.
///
/// Returns the successor state and whether the arriving task was dropped on a
/// full buffer (the analysis assumes this never happens; the flag feeds the
/// overflow diagnostics).
pub fn step_with_drop(
    state: SysState,
    decision: Decision,
    arrival: bool,
    channel_ok: bool,
    params: &SystemParams,
) -> Result<(SysState, bool)> {
    if !decision.is_feasible(state) {
        return Err(Error::InfeasibleDecision { state, k: decision.k() });
    }
    let scheduled = decision.starts_local() as usize + decision.starts_offload() as usize;
    let after_service = state.q - scheduled;
    let (q, dropped) = if arrival {
        if after_service == params.buffer_cap {
            (params.buffer_cap, true)
        } else {
            (after_service + 1, false)
        }
    } else {
        (after_service, false)
    };

    let c_l = if state.c_l > 0 {
        wrap_at(state.c_l + 1, params.local_slots)
    } else if decision.starts_local() {
        wrap_at(1, params.local_slots)
    } else {
        0
    };

    let pending = if state.c_t > 0 {
        state.c_t
    } else if decision.starts_offload() {
        1
    } else {
        0
    };
    let c_t = if pending == 0 {
        0
    } else if channel_ok {
        wrap_at(pending + 1, params.packets_per_task + 1)
    } else {
        pending
    };

    Ok((SysState { q, c_t, c_l }, dropped))
}

/// Deterministic slot update; see [`step_with_drop`].
pub fn step(
    state: SysState,
    decision: Decision,
    arrival: bool,
    channel_ok: bool,
    params: &SystemParams,
) -> Result<SysState> {
    step_with_drop(state, decision, arrival, channel_ok, params).map(|(s, _)| s)
}

/// Decision-conditioned transition kernel: for every state and feasible
/// decision, the sparse distribution over successor states.
pub struct DecisionKernel {
    n_states: usize,
    rows: Vec<Option<Vec<(usize, f64)>>>,
}

impl DecisionKernel {
    /// Enumerate the four (arrival, channel) outcomes through [`step`] for
    /// every feasible (state, decision) pair and merge common destinations.
    pub fn build(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let space = params.state_space();
        let n = space.len();
        let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; n * 4];
        for si in 0..n {
            let state = space.state(si);
            for d in Decision::ALL {
                if !d.is_feasible(state) {
                    continue;
                }
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
                for (arrival, wa) in [(false, 1.0 - params.alpha), (true, params.alpha)] {
                    for (channel, wc) in [(false, 1.0 - params.beta), (true, params.beta)] {
                        let w = wa * wc;
                        if w == 0.0 {
                            continue;
                        }
                        let (next, _) = step_with_drop(state, d, arrival, channel, params)?;
                        row.push((space.index(next), w));
                    }
                }
                row.sort_by_key(|&(j, _)| j);
                row.dedup_by(|b, a| {
                    if a.0 == b.0 {
                        a.1 += b.1;
                        true
                    } else {
                        false
                    }
                });
                rows[si * 4 + d.idx()] = Some(row);
            }
        }
        Ok(Self { n_states: n, rows })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn is_feasible(&self, state_idx: usize, d: Decision) -> bool {
        self.rows[state_idx * 4 + d.idx()].is_some()
    }

    /// The successor distribution for a feasible (state, decision) pair.
    pub fn row(&self, state_idx: usize, d: Decision) -> Option<&[(usize, f64)]> {
        self.rows[state_idx * 4 + d.idx()].as_deref()
    }

    /// All feasible (state index, decision) pairs in enumeration order.
    pub fn feasible_pairs(&self) -> impl Iterator<Item = (usize, Decision)> + '_ {
        (0..self.n_states).flat_map(move |si| {
            Decision::ALL
                .iter()
                .copied()
                .filter(move |d| self.is_feasible(si, *d))
                .map(move |d| (si, d))
        })
    }
}

/// Policy-averaged one-step transition matrix, sparse and row-stochastic.
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    /// Assemble from explicit sparse rows; each row must be a probability
    /// distribution over state indices.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, state_idx: usize) -> &[(usize, f64)] {
        &self.rows[state_idx]
    }

    /// Write the matrix as `row_state_index col_state_index probability`
    /// lines, suitable for external inspection.
    pub fn dump<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                writeln!(w, "{i} {j} {p:.15e}")?;
            }
        }
        Ok(())
    }
}

/// Average the decision kernel under a policy: `chi_{s,s'} = sum_k g_s^k *
/// kernel_{s,s',k}`.
pub fn policy_kernel(kernel: &DecisionKernel, policy: &Policy) -> TransitionMatrix {
    let n = kernel.n_states();
    assert_eq!(n, policy.n_states(), "policy and kernel state spaces differ");
    let mut rows = Vec::with_capacity(n);
    for si in 0..n {
        let g = policy.row(si);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(8);
        for d in Decision::ALL {
            let weight = g[d.idx()];
            if weight == 0.0 {
                continue;
            }
            let support = kernel
                .row(si, d)
                .expect("policy puts mass on an infeasible decision");
            for &(j, p) in support {
                row.push((j, weight * p));
            }
        }
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        rows.push(row);
    }
    TransitionMatrix { rows }
}

/// Stationary distribution over state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub pi: Vec<f64>,
}

impl SteadyState {
    /// Marginal probability mass assigned by `pi` to states selected by `f`.
    pub fn mass_where<F: Fn(usize) -> bool>(&self, f: F) -> f64 {
        self.pi
            .iter()
            .enumerate()
            .filter(|(i, _)| f(*i))
            .map(|(_, p)| p)
            .sum()
    }
}

/// Solve `pi^T chi = pi^T, sum pi = 1` by a direct banded solve.
///
/// The system starts empty, so for a reducible chain the distribution is the
/// stationary law of the recurrent class reachable from state (0,0,0); all
/// other states carry zero mass. More than one reachable recurrent class is
/// reported as an error.
pub fn steady_state(chi: &TransitionMatrix) -> Result<SteadyState> {
    steady_state_from(chi, 0) // lexicographic index of (0,0,0)
}

/// [`steady_state`] with an explicit start state, for matrices whose rows are
/// not in the canonical enumeration order.
pub fn steady_state_from(chi: &TransitionMatrix, start: usize) -> Result<SteadyState> {
    let n = chi.n_states();

    // Breadth-first closure of the start state.
    let mut reachable = vec![false; n];
    reachable[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for &(j, p) in chi.row(i) {
            if p > 0.0 && !reachable[j] {
                reachable[j] = true;
                queue.push_back(j);
            }
        }
    }

    // Recurrent classes are the terminal strongly connected components of
    // the reachable subgraph.
    let order: Vec<usize> = (0..n).filter(|&i| reachable[i]).collect();
    let mut local = vec![usize::MAX; n];
    for (li, &gi) in order.iter().enumerate() {
        local[gi] = li;
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(order.len(), order.len() * 4);
    let nodes: Vec<NodeIndex> = order.iter().map(|_| graph.add_node(())).collect();
    for &gi in &order {
        for &(gj, p) in chi.row(gi) {
            if p > 0.0 {
                graph.add_edge(nodes[local[gi]], nodes[local[gj]], ());
            }
        }
    }
    let sccs = petgraph::algo::tarjan_scc(&graph);
    let mut scc_of = vec![usize::MAX; order.len()];
    for (ci, comp) in sccs.iter().enumerate() {
        for &node in comp {
            scc_of[node.index()] = ci;
        }
    }
    let mut terminal = vec![true; sccs.len()];
    for edge in graph.raw_edges() {
        let (a, b) = (scc_of[edge.source().index()], scc_of[edge.target().index()]);
        if a != b {
            terminal[a] = false;
        }
    }
    let terminal_classes: Vec<usize> = (0..sccs.len()).filter(|&c| terminal[c]).collect();
    if terminal_classes.len() != 1 {
        return Err(Error::AmbiguousChain(format!(
            "{} recurrent classes reachable from the empty state",
            terminal_classes.len()
        )));
    }

    // Global indices of the recurrent class, ascending.
    let mut class: Vec<usize> = sccs[terminal_classes[0]]
        .iter()
        .map(|node| order[node.index()])
        .collect();
    class.sort_unstable();
    let nc = class.len();
    let mut class_local = vec![usize::MAX; n];
    for (li, &gi) in class.iter().enumerate() {
        class_local[gi] = li;
    }

    let mut pi = vec![0.0; n];
    if nc == 1 {
        pi[class[0]] = 1.0;
    } else {
        // GTH state reduction on the class, in compact local indices. Being
        // subtraction-free it stays entrywise accurate even when the
        // stationary mass spans many orders of magnitude.
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
        for (li, &gi) in class.iter().enumerate() {
            for &(gj, p) in chi.row(gi) {
                let lj = class_local[gj];
                debug_assert!(lj != usize::MAX, "recurrent class is not closed");
                rows[li].push((lj, p));
            }
        }
        let local_pi = gth_stationary(nc, &rows)?;
        for (li, &gi) in class.iter().enumerate() {
            pi[gi] = local_pi[li];
        }
    }

    // Verify the balance residual.
    let mut residual = vec![0.0; n];
    for i in 0..n {
        residual[i] -= pi[i];
        if pi[i] > 0.0 {
            for &(j, p) in chi.row(i) {
                residual[j] += pi[i] * p;
            }
        }
    }
    let res_norm = residual.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if res_norm >= 1e-9 {
        return Err(Error::NumericalFailure(format!(
            "steady state residual {res_norm:.3e} exceeds 1e-9"
        )));
    }
    Ok(SteadyState { pi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateSpace;
    use crate::policy::{make_baseline, Baseline, Policy};
    use crate::testutil::{reference_params, tiny_params};
    use proptest::prelude::*;

    fn s(q: usize, c_t: usize, c_l: usize) -> SysState {
        SysState { q, c_t, c_l }
    }

    #[test]
    fn step_matches_reference_transitions() {
        let p = reference_params(0.2);
        // Both units start; arrival absent, channel good.
        assert_eq!(step(s(2, 0, 0), Decision::Both, false, true, &p).unwrap(), s(0, 0, 1));
        // Idle on empty state, arrival only.
        assert_eq!(step(s(0, 0, 0), Decision::Idle, true, false, &p).unwrap(), s(1, 0, 0));
        // Both units busy, no events: CPU advances, packet retries.
        assert_eq!(step(s(1, 1, 5), Decision::Idle, false, false, &p).unwrap(), s(1, 1, 6));
        // Local start while the transmitter finishes its packet.
        assert_eq!(step(s(1, 1, 0), Decision::Local, false, true, &p).unwrap(), s(0, 0, 1));
        // Offload start with a failed slot leaves packet 1 pending.
        assert_eq!(step(s(1, 0, 0), Decision::Offload, false, false, &p).unwrap(), s(0, 1, 0));
    }

    #[test]
    fn step_wraps_single_slot_cpu_and_clamps_queue() {
        let mut p = reference_params(0.2);
        p.local_slots = 1;
        // N=1: a locally started task finishes within the slot.
        assert_eq!(step(s(1, 0, 0), Decision::Local, false, false, &p).unwrap(), s(0, 0, 0));

        let p = reference_params(0.2);
        let full = s(p.buffer_cap, 1, 3);
        let (next, dropped) = step_with_drop(full, Decision::Idle, true, false, &p).unwrap();
        assert_eq!(next.q, p.buffer_cap);
        assert!(dropped);
    }

    #[test]
    fn step_rejects_infeasible_decisions() {
        let p = reference_params(0.2);
        assert!(step(s(0, 0, 0), Decision::Local, false, false, &p).is_err());
        assert!(step(s(1, 0, 0), Decision::Both, false, false, &p).is_err());
        assert!(step(s(2, 1, 0), Decision::Both, false, false, &p).is_err());
        assert!(step(s(2, 0, 3), Decision::Local, false, false, &p).is_err());
    }

    #[test]
    fn kernel_row_both_decision() {
        let p = SystemParams { alpha: 0.6, ..reference_params(0.2) };
        let kernel = DecisionKernel::build(&p).unwrap();
        let space = p.state_space();
        let row = kernel.row(space.index(s(2, 0, 0)), Decision::Both).unwrap();
        let expect = [
            (space.index(s(0, 0, 1)), 0.16),
            (space.index(s(0, 1, 1)), 0.24),
            (space.index(s(1, 0, 1)), 0.24),
            (space.index(s(1, 1, 1)), 0.36),
        ];
        assert_eq!(row.len(), 4);
        for ((j, p), (ej, ep)) in row.iter().zip(expect) {
            assert_eq!(*j, ej);
            assert!((p - ep).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_row_empty_buffer_busy_transmitter() {
        let p = SystemParams { alpha: 0.3, ..reference_params(0.2) };
        let kernel = DecisionKernel::build(&p).unwrap();
        let space = p.state_space();
        let row = kernel.row(space.index(s(0, 1, 0)), Decision::Idle).unwrap();
        let expect = [
            (space.index(s(0, 0, 0)), 0.28),
            (space.index(s(0, 1, 0)), 0.42),
            (space.index(s(1, 0, 0)), 0.12),
            (space.index(s(1, 1, 0)), 0.18),
        ];
        for ((j, p), (ej, ep)) in row.iter().zip(expect) {
            assert_eq!(*j, ej);
            assert!((p - ep).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_degenerate_no_arrivals() {
        let p = SystemParams { alpha: 0.0, ..reference_params(0.2) };
        let kernel = DecisionKernel::build(&p).unwrap();
        let row = kernel.row(0, Decision::Idle).unwrap();
        assert_eq!(row, &[(0, 1.0)]);
    }

    #[test]
    fn policy_kernel_mixed_row() {
        // State (1,0,0) with g = (0.5, 0.5, 0, 0), alpha = 0, beta = 0.4.
        let mut p = reference_params(0.2);
        p.alpha = 0.0;
        let kernel = DecisionKernel::build(&p).unwrap();
        let space = p.state_space();
        let mut policy = make_baseline(Baseline::Local, &p);
        let si = space.index(s(1, 0, 0));
        policy.set_row(si, [0.5, 0.5, 0.0, 0.0]);
        let chi = policy_kernel(&kernel, &policy);
        let row = chi.row(si);
        let expect = [
            (space.index(s(0, 0, 0)), 0.2),
            (space.index(s(0, 0, 1)), 0.5),
            (space.index(s(0, 1, 0)), 0.3),
        ];
        assert_eq!(row.len(), 3);
        for ((j, p), (ej, ep)) in row.iter().zip(expect) {
            assert_eq!(*j, ej);
            assert!((p - ep).abs() < 1e-15);
        }
    }

    #[test]
    fn steady_state_absorbing_empty() {
        let p = SystemParams { alpha: 0.0, ..reference_params(0.2) };
        let kernel = DecisionKernel::build(&p).unwrap();
        let policy = make_baseline(Baseline::Greedy, &p);
        let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
        assert_eq!(pi.pi[0], 1.0);
        assert_eq!(pi.pi.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn steady_state_birth_death_two_levels() {
        // N=1, M=1, local-only: a queued task is served every slot, so from
        // q >= 1 the queue moves down w.p. 1-alpha and stays w.p. alpha, and
        // never moves up. Cut balance gives pi(0) = 1-alpha, pi(1) = alpha,
        // zero above.
        let alpha = 1.0 / 3.0;
        let p = SystemParams {
            alpha,
            local_slots: 1,
            buffer_cap: 40,
            ..reference_params(0.2)
        };
        let policy = make_baseline(Baseline::Local, &p);
        let kernel = DecisionKernel::build(&p).unwrap();
        let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
        let space = p.state_space();
        let mass_at = |i: usize| pi.mass_where(|idx| space.state(idx).q == i);
        assert!((mass_at(0) - (1.0 - alpha)).abs() < 1e-12);
        assert!((mass_at(1) - alpha).abs() < 1e-12);
        for i in 2..10 {
            assert!(mass_at(i).abs() < 1e-15, "pi(q={i}) = {}", mass_at(i));
        }
    }

    #[test]
    fn steady_state_detects_ambiguous_chains() {
        // A hand-built matrix with two absorbing states, both reachable.
        let chi = TransitionMatrix {
            rows: vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]],
        };
        assert!(matches!(steady_state(&chi), Err(Error::AmbiguousChain(_))));
    }

    #[test]
    fn steady_state_residual_reference_policies() {
        for alpha in [0.05, 0.2, 0.35] {
            let p = reference_params(alpha);
            let kernel = DecisionKernel::build(&p).unwrap();
            for b in [Baseline::Local, Baseline::Cloud, Baseline::Greedy] {
                let chi = policy_kernel(&kernel, &make_baseline(b, &p));
                let pi = steady_state(&chi).unwrap();
                let total: f64 = pi.pi.iter().sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn kernel_rows_are_stochastic(
            alpha in 0.0f64..=1.0,
            beta in 0.05f64..=1.0,
            q in 1usize..6,
            m in 1usize..4,
            n in 1usize..5,
        ) {
            let p = SystemParams {
                alpha,
                beta,
                buffer_cap: q,
                packets_per_task: m,
                local_slots: n,
                ..reference_params(0.2)
            };
            let kernel = DecisionKernel::build(&p).unwrap();
            let space = p.state_space();
            for (si, d) in kernel.feasible_pairs() {
                let row = kernel.row(si, d).unwrap();
                let mass: f64 = row.iter().map(|(_, w)| w).sum();
                prop_assert!((mass - 1.0).abs() < 1e-12);
                prop_assert!(row.len() <= 4);
                for &(j, _) in row {
                    prop_assert!(space.contains(space.state(j)));
                }
                let _ = si;
            }
        }

        #[test]
        fn step_stays_in_range(
            q in 0usize..4,
            c_t in 0usize..2,
            c_l in 0usize..2,
            k in 1usize..=4,
            arrival: bool,
            channel: bool,
        ) {
            let p = tiny_params();
            let state = s(q, c_t, c_l);
            let d = Decision::from_k(k).unwrap();
            if d.is_feasible(state) {
                let next = step(state, d, arrival, channel, &p).unwrap();
                prop_assert!(next.q <= p.buffer_cap);
                prop_assert!(next.c_t <= p.packets_per_task);
                prop_assert!(next.c_l < p.local_slots);
            }
        }
    }

    #[test]
    fn policy_rows_sum_to_one_under_any_policy() {
        let p = tiny_params();
        let kernel = DecisionKernel::build(&p).unwrap();
        let space: StateSpace = p.state_space();
        // A fixed arbitrary feasible policy.
        let mut policy = Policy::all_idle(space);
        for si in 0..space.len() {
            let st = space.state(si);
            let mut g = [0.0; 4];
            let feasible: Vec<_> = Decision::ALL.iter().filter(|d| d.is_feasible(st)).collect();
            let w = 1.0 / feasible.len() as f64;
            for d in feasible {
                g[d.idx()] = w;
            }
            policy.set_row(si, g);
        }
        let chi = policy_kernel(&kernel, &policy);
        for si in 0..space.len() {
            let mass: f64 = chi.row(si).iter().map(|(_, w)| w).sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }
}
