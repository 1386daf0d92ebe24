//! Closed-form performance metrics of a policy: queueing delay via Little's
//! theorem, the local-execution fraction, processing time, total delay, and
//! average power, all computed from the stationary distribution.

use crate::chain::{policy_kernel, steady_state, Decision, DecisionKernel, SteadyState};
use crate::error::{Error, Result};
use crate::model::{cloud_time, StateSpace, SysState, SystemParams};
use crate::policy::Policy;

/// Threshold on the buffer-full mass above which the no-overflow assumption
/// behind the delay formulas is considered violated.
pub const OVERFLOW_VALIDITY_THRESHOLD: f64 = 1e-3;

/// Steady-state performance metrics of one (policy, parameters) pair.
/// Times are in slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Average queueing delay.
    pub t_q: f64,
    /// Long-run fraction of tasks executed locally.
    pub eta: f64,
    /// Average processing time.
    pub t_p: f64,
    /// Average total delay `t_q + t_p`.
    pub t_bar: f64,
    /// Probability that the CPU draws power in a slot.
    pub nu_loc: f64,
    /// Probability that a packet transmission succeeds in a slot (channel
    /// success folded in).
    pub nu_tx: f64,
    /// Average device power, watts.
    pub p_bar: f64,
    /// Stationary probability of a full buffer.
    pub overflow_mass: f64,
}

impl Metrics {
    /// Whether the no-overflow assumption behind the formulas holds.
    pub fn is_valid(&self) -> bool {
        self.overflow_mass < OVERFLOW_VALIDITY_THRESHOLD
    }

    pub const CSV_HEADER: &'static str =
        "alpha,beta,policy,t_q,eta,t_p,t_bar,nu_loc,nu_tx,p_bar,overflow_mass,t_q_ms,t_p_ms,t_bar_ms";

    /// One CSV row (12 significant digits); slot-denominated values are
    /// repeated in milliseconds.
    pub fn csv_row(&self, alpha: f64, beta: f64, policy: &str, slot_len: f64) -> String {
        let ms = slot_len * 1e3;
        format!(
            "{},{},{policy},{},{},{},{},{},{},{},{},{},{},{}",
            sig12(alpha),
            sig12(beta),
            sig12(self.t_q),
            sig12(self.eta),
            sig12(self.t_p),
            sig12(self.t_bar),
            sig12(self.nu_loc),
            sig12(self.nu_tx),
            sig12(self.p_bar),
            sig12(self.overflow_mass),
            sig12(self.t_q * ms),
            sig12(self.t_p * ms),
            sig12(self.t_bar * ms),
        )
    }
}

/// Format with 12 significant digits, the crate-wide CSV convention.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Average queueing delay by Little's theorem: `E[q] / alpha`.
pub fn queue_delay(pi: &SteadyState, space: &StateSpace, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::UndefinedDelay);
    }
    let mean_q: f64 = pi
        .pi
        .iter()
        .enumerate()
        .map(|(idx, p)| space.state(idx).q as f64 * p)
        .sum();
    Ok(mean_q / alpha)
}

/// Long-run fraction of tasks executed locally.
///
/// Scheduling throughput splits into local starts (decision 1 where the CPU
/// is idle), offload starts (decision 2 where the transmitter is idle), and
/// dual starts (decision 3), which count toward both.
pub fn local_fraction(pi: &SteadyState, policy: &Policy, space: &StateSpace) -> Result<f64> {
    let mut local = 0.0;
    let mut offload = 0.0;
    let mut dual = 0.0;
    for (idx, &mass) in pi.pi.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let state = space.state(idx);
        let g = policy.row(idx);
        if Decision::Local.is_feasible(state) {
            local += mass * g[Decision::Local.idx()];
        }
        if Decision::Offload.is_feasible(state) {
            offload += mass * g[Decision::Offload.idx()];
        }
        if Decision::Both.is_feasible(state) {
            dual += mass * g[Decision::Both.idx()];
        }
    }
    let denominator = local + offload + 2.0 * dual;
    if denominator <= 0.0 {
        return Err(Error::NoThroughput);
    }
    Ok((local + dual) / denominator)
}

/// Average processing time `eta * N + (1 - eta) * t_c` in slots.
pub fn processing_time(eta: f64, params: &SystemParams) -> Result<f64> {
    Ok(eta * params.local_slots as f64 + (1.0 - eta) * cloud_time(params)?)
}

/// Total delay: queueing plus processing.
pub fn total_delay(t_q: f64, t_p: f64) -> f64 {
    t_q + t_p
}

/// Per-decision power indicators for one state: whether the CPU draws power
/// this slot, and whether a packet transmission is attempted (the channel
/// success probability is *not* folded in here).
pub fn decision_power_coeffs(state: SysState, d: Decision) -> (f64, f64) {
    let cpu = state.c_l > 0 || (d.starts_local() && d.is_feasible(state));
    let tx = state.c_t > 0 || (d.starts_offload() && d.is_feasible(state));
    (cpu as u8 as f64, tx as u8 as f64)
}

/// Power coefficients of one state under a policy row: the probability of
/// local computation and of a *successful* packet transmission.
pub fn power_coefficients(state: SysState, g: &[f64; 4], beta: f64) -> (f64, f64) {
    let mut mu_loc = 0.0;
    let mut mu_tx_attempt = 0.0;
    for d in Decision::ALL {
        let (cpu, tx) = decision_power_coeffs(state, d);
        mu_loc += g[d.idx()] * cpu;
        mu_tx_attempt += g[d.idx()] * tx;
    }
    (mu_loc, beta * mu_tx_attempt)
}

/// Average power coefficients and consumption:
/// `(nu_loc, nu_tx, p_bar = nu_loc * P_loc + nu_tx * P_tx)`.
pub fn average_power(
    pi: &SteadyState,
    policy: &Policy,
    space: &StateSpace,
    params: &SystemParams,
) -> (f64, f64, f64) {
    let mut nu_loc = 0.0;
    let mut nu_tx = 0.0;
    for (idx, &mass) in pi.pi.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let (mu_loc, mu_tx) = power_coefficients(space.state(idx), policy.row(idx), params.beta);
        nu_loc += mass * mu_loc;
        nu_tx += mass * mu_tx;
    }
    (nu_loc, nu_tx, nu_loc * params.p_loc + nu_tx * params.p_tx)
}

/// Full analytical evaluation: kernel, stationary distribution, metrics.
pub fn evaluate(policy: &Policy, params: &SystemParams) -> Result<Metrics> {
    params.validate()?;
    if params.alpha <= 0.0 {
        return Err(Error::UndefinedDelay);
    }
    let violations = policy.validate(params);
    if !violations.is_empty() {
        return Err(Error::InvalidPolicy(format!(
            "{} violation(s), first: {}",
            violations.len(),
            violations[0]
        )));
    }
    let space = params.state_space();
    let kernel = DecisionKernel::build(params)?;
    let chi = policy_kernel(&kernel, policy);
    let pi = steady_state(&chi)?;
    metrics_from_steady_state(&pi, policy, &space, params)
}

/// Metrics from an existing stationary distribution.
pub fn metrics_from_steady_state(
    pi: &SteadyState,
    policy: &Policy,
    space: &StateSpace,
    params: &SystemParams,
) -> Result<Metrics> {
    let t_q = queue_delay(pi, space, params.alpha)?;
    let eta = local_fraction(pi, policy, space)?;
    let t_p = processing_time(eta, params)?;
    let (nu_loc, nu_tx, p_bar) = average_power(pi, policy, space, params);
    let overflow_mass = pi.mass_where(|idx| space.state(idx).q == space.buffer_cap());
    Ok(Metrics {
        t_q,
        eta,
        t_p,
        t_bar: total_delay(t_q, t_p),
        nu_loc,
        nu_tx,
        p_bar,
        overflow_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{policy_kernel, steady_state_from, DecisionKernel};
    use crate::policy::{make_baseline, Baseline, Policy};
    use crate::testutil::{reference_params, tiny_params};

    #[test]
    fn queue_delay_examples() {
        let p = tiny_params();
        let space = p.state_space();
        let mut all_empty = vec![0.0; space.len()];
        all_empty[space.index(SysState::new(0, 1, 1))] = 1.0;
        let pi = SteadyState { pi: all_empty };
        assert_eq!(queue_delay(&pi, &space, 0.5).unwrap(), 0.0);

        // Uniform over q in {0,1}: E[q] = 0.5, alpha = 0.25 -> 2 slots.
        let mut uniform = vec![0.0; space.len()];
        uniform[space.index(SysState::new(0, 0, 1))] = 0.5;
        uniform[space.index(SysState::new(1, 1, 0))] = 0.5;
        let pi = SteadyState { pi: uniform };
        assert_eq!(queue_delay(&pi, &space, 0.25).unwrap(), 2.0);

        assert!(matches!(queue_delay(&pi, &space, 0.0), Err(Error::UndefinedDelay)));
    }

    #[test]
    fn queue_delay_birth_death() {
        // N=1, M=1, local-only: pi(q) = (1-alpha, alpha, 0, ...), so
        // E[q] = alpha and t_q = E[q] / alpha = 1 slot regardless of alpha
        // (each task waits exactly the slot in which it arrived).
        for alpha in [0.15, 1.0 / 3.0, 0.8] {
            let p = SystemParams {
                alpha,
                local_slots: 1,
                buffer_cap: 40,
                ..reference_params(0.2)
            };
            let policy = make_baseline(Baseline::Local, &p);
            let kernel = DecisionKernel::build(&p).unwrap();
            let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
            let t_q = queue_delay(&pi, &p.state_space(), p.alpha).unwrap();
            assert!((t_q - 1.0).abs() < 1e-10, "t_q = {t_q}");
        }
    }

    #[test]
    fn local_fraction_pure_baselines() {
        let p = reference_params(0.05);
        let space = p.state_space();
        let kernel = DecisionKernel::build(&p).unwrap();
        for (b, expect) in [(Baseline::Local, 1.0), (Baseline::Cloud, 0.0)] {
            let policy = make_baseline(b, &p);
            let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
            let eta = local_fraction(&pi, &policy, &space).unwrap();
            assert_eq!(eta, expect, "{b:?}");
        }
    }

    #[test]
    fn local_fraction_dual_only_policy() {
        // All scheduling mass on decision 3: eta = 1/2 exactly.
        let p = tiny_params();
        let space = p.state_space();
        let mut policy = Policy::all_idle(space);
        for si in 0..space.len() {
            if Decision::Both.is_feasible(space.state(si)) {
                policy.set_row(si, [0.0, 0.0, 1.0, 0.0]);
            }
        }
        let kernel = DecisionKernel::build(&p).unwrap();
        let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
        let eta = local_fraction(&pi, &policy, &space).unwrap();
        assert_eq!(eta, 0.5);
    }

    #[test]
    fn local_fraction_requires_throughput() {
        let p = tiny_params();
        let space = p.state_space();
        let policy = Policy::all_idle(space);
        let kernel = DecisionKernel::build(&p).unwrap();
        let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
        assert!(matches!(
            local_fraction(&pi, &policy, &space),
            Err(Error::NoThroughput)
        ));
    }

    #[test]
    fn processing_time_affine() {
        let p = reference_params(0.2);
        assert_eq!(processing_time(1.0, &p).unwrap(), 17.0);
        assert_eq!(processing_time(0.0, &p).unwrap(), 3.5);
        assert_eq!(processing_time(0.5, &p).unwrap(), 10.25);
    }

    #[test]
    fn power_coefficient_cases() {
        let beta = 0.4;
        let idle_g = [0.0, 0.0, 0.0, 1.0];
        // CPU busy, transmitter idle, empty buffer.
        assert_eq!(power_coefficients(SysState::new(0, 0, 5), &idle_g, beta), (1.0, 0.0));
        // Both units busy.
        assert_eq!(power_coefficients(SysState::new(4, 1, 9), &idle_g, beta), (1.0, beta));
        // Fully idle system.
        assert_eq!(power_coefficients(SysState::new(0, 0, 0), &idle_g, beta), (0.0, 0.0));
        // Mixed policy row at (3,0,0).
        let g = [0.2, 0.3, 0.4, 0.1];
        let (mu_loc, mu_tx) = power_coefficients(SysState::new(3, 0, 0), &g, beta);
        assert!((mu_loc - 0.6).abs() < 1e-15);
        assert!((mu_tx - 0.28).abs() < 1e-15);
    }

    #[test]
    fn average_power_degenerate_cases() {
        let p = SystemParams { alpha: 0.0, ..reference_params(0.2) };
        let space = p.state_space();
        let policy = make_baseline(Baseline::Greedy, &p);
        let kernel = DecisionKernel::build(&p).unwrap();
        let pi = steady_state(&policy_kernel(&kernel, &policy)).unwrap();
        let (_, _, p_bar) = average_power(&pi, &policy, &space, &p);
        assert_eq!(p_bar, 0.0);

        // Artificial point mass on a CPU-busy state.
        let mut point = vec![0.0; space.len()];
        point[space.index(SysState::new(0, 0, 5))] = 1.0;
        let pi = SteadyState { pi: point };
        let (nu_loc, nu_tx, p_bar) = average_power(&pi, &policy, &space, &p);
        assert_eq!((nu_loc, nu_tx), (1.0, 0.0));
        assert!((p_bar - 0.8).abs() < 1e-15);
    }

    #[test]
    fn power_bounded_by_always_on() {
        for alpha in [0.05, 0.2, 0.35] {
            let p = reference_params(alpha);
            for b in [Baseline::Local, Baseline::Cloud, Baseline::Greedy] {
                let m = evaluate(&make_baseline(b, &p), &p).unwrap();
                assert!(m.p_bar <= p.p_loc + p.beta * p.p_tx + 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_cloud_reference() {
        let p = reference_params(0.2);
        let m = evaluate(&make_baseline(Baseline::Cloud, &p), &p).unwrap();
        assert_eq!(m.eta, 0.0);
        assert_eq!(m.t_p, 3.5);
        assert!(m.is_valid(), "overflow mass {}", m.overflow_mass);
        assert!(m.t_q > 0.0);
    }

    #[test]
    fn evaluate_flags_unstable_local() {
        // alpha = 0.1 > 1/N = 1/17: the local queue is unstable.
        let p = reference_params(0.1);
        let m = evaluate(&make_baseline(Baseline::Local, &p), &p).unwrap();
        assert!(!m.is_valid());
    }

    #[test]
    fn evaluate_rejects_zero_alpha_and_bad_policy() {
        let p = SystemParams { alpha: 0.0, ..reference_params(0.2) };
        let policy = make_baseline(Baseline::Cloud, &p);
        assert!(matches!(evaluate(&policy, &p), Err(Error::UndefinedDelay)));

        let p = tiny_params();
        let space = p.state_space();
        let mut bad = Policy::all_idle(space);
        bad.set_row(0, [0.5, 0.0, 0.0, 0.5]);
        assert!(matches!(evaluate(&bad, &p), Err(Error::InvalidPolicy(_))));
    }

    #[test]
    fn metrics_independent_of_enumeration_order() {
        // Permute the transition matrix; the steady state must permute along
        // and leave every metric unchanged.
        let p = tiny_params();
        let space = p.state_space();
        let policy = make_baseline(Baseline::Greedy, &p);
        let kernel = DecisionKernel::build(&p).unwrap();
        let chi = policy_kernel(&kernel, &policy);
        let pi = steady_state(&chi).unwrap();
        let t_q = queue_delay(&pi, &space, p.alpha).unwrap();

        let n = space.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect(); // 7 coprime to 16
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            let mut row: Vec<(usize, f64)> =
                chi.row(i).iter().map(|&(j, w)| (perm[j], w)).collect();
            row.sort_by_key(|&(j, _)| j);
            rows[perm[i]] = row;
        }
        let permuted = crate::chain::TransitionMatrix::from_rows(rows);
        let pi_perm = steady_state_from(&permuted, perm[0]).unwrap();
        for i in 0..n {
            assert!((pi.pi[i] - pi_perm.pi[perm[i]]).abs() < 1e-12);
        }
        let mean_q: f64 = (0..n).map(|i| space.state(i).q as f64 * pi_perm.pi[perm[i]]).sum();
        assert!((mean_q / p.alpha - t_q).abs() < 1e-12);
    }

    #[test]
    fn csv_row_shape() {
        let p = reference_params(0.2);
        let m = evaluate(&make_baseline(Baseline::Cloud, &p), &p).unwrap();
        let row = m.csv_row(p.alpha, p.beta, "cloud", p.slot_len);
        assert_eq!(row.split(',').count(), Metrics::CSV_HEADER.split(',').count());
        assert!(row.contains("cloud"));
    }
}
