//! Slot-level Monte Carlo execution of a policy, with per-task delay
//! accounting (including server-side completion), power measurement, and
//! state-occupancy estimation.
//!
//! Three independent ChaCha streams drive arrivals, channel outcomes and
//! decision sampling, and all three are advanced once per slot regardless of
//! use, so runs with different policies see identical arrival and channel
//! sample paths (common random numbers).

use crate::chain::{step_with_drop, Decision};
use crate::error::{Error, Result};
use crate::model::{SysState, SystemParams};
use crate::policy::Policy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Horizon, warmup and seed of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    /// Total simulated slots.
    pub slots: u64,
    /// Leading slots excluded from every statistic.
    pub warmup: u64,
    /// RNG seed.
    pub seed: u64,
}

impl SimConfig {
    /// Config with the default warmup of 10% of the horizon.
    pub fn new(slots: u64, seed: u64) -> Self {
        Self { slots, warmup: slots / 10, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::InvalidParameter("simulation horizon must be positive".into()));
        }
        if self.warmup >= self.slots {
            return Err(Error::InvalidParameter(format!(
                "warmup {} must be smaller than the horizon {}",
                self.warmup, self.slots
            )));
        }
        Ok(())
    }
}

/// Where a task was executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Venue {
    Local,
    Cloud,
}

impl Venue {
    pub fn as_str(self) -> &'static str {
        match self {
            Venue::Local => "local",
            Venue::Cloud => "cloud",
        }
    }
}

/// One completed task, for the optional per-task trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    pub arrival_slot: u64,
    pub start_slot: u64,
    /// Slot at whose end the result is available; fractional when the
    /// feedback time is not a whole number of slots.
    pub completion_slot: f64,
    pub venue: Venue,
    /// Buffer wait plus processing, in slots.
    pub delay_slots: f64,
}

/// Empirical counterparts of the analytical metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    /// Mean per-task delay (wait + processing), slots. NaN when no task
    /// completed.
    pub mean_delay: f64,
    /// 95% half-width for `mean_delay` (batch means).
    pub delay_ci95: f64,
    /// Mean buffer occupancy over slots.
    pub mean_queue_len: f64,
    /// Mean buffer wait of started tasks, slots.
    pub mean_wait: f64,
    /// Fraction of started tasks executed locally.
    pub local_fraction: f64,
    /// Mean device power, watts.
    pub mean_power: f64,
    /// 95% half-width for `mean_power` (batch means).
    pub power_ci95: f64,
    /// Empirical distribution over state indices at slot starts.
    pub occupancy: Vec<f64>,
    /// Arrivals rejected by a full buffer.
    pub dropped_tasks: u64,
    /// Tasks whose completion time is known within the horizon.
    pub tasks_completed: u64,
    /// Total arrivals, including dropped ones.
    pub arrivals: u64,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    arrival: u64,
    start: u64,
}

const CI_BATCHES: usize = 32;
// 97.5% normal quantile, for the large-sample batch-means intervals.
const Z_975: f64 = 1.959963984540054;

fn batch_means_ci(samples: &[f64]) -> f64 {
    if samples.len() < 2 * CI_BATCHES {
        return f64::NAN;
    }
    let per = samples.len() / CI_BATCHES;
    let used = per * CI_BATCHES;
    let means: Vec<f64> = (0..CI_BATCHES)
        .map(|b| samples[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / CI_BATCHES as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (CI_BATCHES - 1) as f64;
    let _ = used;
    Z_975 * (var / CI_BATCHES as f64).sqrt()
}

/// Run the simulator; see [`run_traced`] for the task-level trace.
pub fn run(policy: &Policy, params: &SystemParams, cfg: &SimConfig) -> Result<SimReport> {
    run_traced(policy, params, cfg).map(|(report, _)| report)
}

/// Run the simulator, also returning every completed task.
///
/// Slot order: observe the state, sample the decision, resolve the channel,
/// advance the units, then append the arrival (a task arriving in slot t is
/// first schedulable in slot t+1). A task's delay is its buffer wait plus its
/// processing time; cloud processing ends `N_cloud + t_rx` after the last
/// packet is delivered. Tasks still in flight at the horizon are excluded
/// from the delay statistics but remain counted as arrivals.
pub fn run_traced(
    policy: &Policy,
    params: &SystemParams,
    cfg: &SimConfig,
) -> Result<(SimReport, Vec<TaskRecord>)> {
    params.validate()?;
    cfg.validate()?;
    let violations = policy.validate(params);
    if !violations.is_empty() {
        return Err(Error::InvalidPolicy(format!(
            "{} violation(s), first: {}",
            violations.len(),
            violations[0]
        )));
    }

    let space = params.state_space();
    let mut arrivals_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    arrivals_rng.set_stream(1);
    let mut channel_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    channel_rng.set_stream(2);
    let mut decision_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    decision_rng.set_stream(3);

    let mut state = SysState::new(0, 0, 0);
    let mut buffer: std::collections::VecDeque<u64> = std::collections::VecDeque::new();
    let mut cpu: Option<InFlight> = None;
    let mut tu: Option<InFlight> = None;

    let mut occupancy = vec![0u64; space.len()];
    let mut queue_len_sum = 0.0f64;
    let mut power_sum = 0.0f64;
    let mut power_batches = vec![(0.0f64, 0u64); CI_BATCHES];
    let mut delays: Vec<f64> = Vec::new();
    let mut waits_sum = 0.0f64;
    let mut waits_count = 0u64;
    let mut local_starts = 0u64;
    let mut cloud_starts = 0u64;
    let mut dropped = 0u64;
    let mut arrivals = 0u64;
    let mut trace = Vec::new();

    let n_local = params.local_slots as u64;
    let measured_slots = cfg.slots - cfg.warmup;

    for t in 0..cfg.slots {
        let measured = t >= cfg.warmup;
        let si = space.index(state);
        if measured {
            occupancy[si] += 1;
            queue_len_sum += state.q as f64;
        }

        // One draw per stream per slot, used or not.
        let arrival = arrivals_rng.random_bool(params.alpha);
        let channel_ok = channel_rng.random_bool(params.beta);
        let u = decision_rng.random::<f64>();

        // Sample the decision from the policy row.
        let g = policy.row(si);
        let mut decision = Decision::Idle;
        let mut acc = 0.0;
        for d in Decision::ALL {
            acc += g[d.idx()];
            if u < acc {
                decision = d;
                break;
            }
        }
        debug_assert!(decision.is_feasible(state));

        // Task bookkeeping mirrors the state update below.
        let attempt_packet = if state.c_t > 0 {
            state.c_t
        } else if decision.starts_offload() {
            1
        } else {
            0
        };
        let transmitting = attempt_packet > 0;
        let delivered = transmitting && channel_ok && attempt_packet == params.packets_per_task;

        if decision.starts_local() {
            let arrival_slot = buffer.pop_front().expect("feasible local start");
            if arrival_slot >= cfg.warmup {
                waits_sum += (t - arrival_slot) as f64;
                waits_count += 1;
            }
            if measured {
                local_starts += 1;
            }
            cpu = Some(InFlight { arrival: arrival_slot, start: t });
        }
        if decision.starts_offload() {
            let arrival_slot = buffer.pop_front().expect("feasible offload start");
            if arrival_slot >= cfg.warmup {
                waits_sum += (t - arrival_slot) as f64;
                waits_count += 1;
            }
            if measured {
                cloud_starts += 1;
            }
            tu = Some(InFlight { arrival: arrival_slot, start: t });
        }

        // Local completion at the CPU's N-th slot of work.
        if let Some(task) = cpu {
            if t == task.start + n_local - 1 {
                let delay = (t - task.arrival + 1) as f64;
                if task.arrival >= cfg.warmup {
                    delays.push(delay);
                }
                trace.push(TaskRecord {
                    arrival_slot: task.arrival,
                    start_slot: task.start,
                    completion_slot: t as f64,
                    venue: Venue::Local,
                    delay_slots: delay,
                });
                cpu = None;
            }
        }
        // Cloud completion once the last packet is through.
        if delivered {
            let task = tu.take().expect("delivery without an offload in flight");
            let completion = t as f64 + params.cloud_slots as f64 + params.feedback_slots;
            let delay = completion - task.arrival as f64 + 1.0;
            if task.arrival >= cfg.warmup {
                delays.push(delay);
            }
            trace.push(TaskRecord {
                arrival_slot: task.arrival,
                start_slot: task.start,
                completion_slot: completion,
                venue: Venue::Cloud,
                delay_slots: delay,
            });
        }

        if measured {
            let cpu_active = state.c_l > 0 || decision.starts_local();
            let mut power = 0.0;
            if cpu_active {
                power += params.p_loc;
            }
            if transmitting && channel_ok {
                power += params.p_tx;
            }
            power_sum += power;
            let batch = ((t - cfg.warmup) * CI_BATCHES as u64 / measured_slots) as usize;
            let slot = &mut power_batches[batch.min(CI_BATCHES - 1)];
            slot.0 += power;
            slot.1 += 1;
        }

        let (next, dropped_now) = step_with_drop(state, decision, arrival, channel_ok, params)?;
        if arrival {
            arrivals += 1;
            if dropped_now {
                if measured {
                    dropped += 1;
                }
            } else {
                buffer.push_back(t);
            }
        }
        state = next;
        debug_assert_eq!(state.q, buffer.len());
        debug_assert_eq!(state.c_l > 0, cpu.is_some());
        debug_assert_eq!(state.c_t > 0, tu.is_some());
    }

    let occupancy: Vec<f64> =
        occupancy.iter().map(|&c| c as f64 / measured_slots as f64).collect();
    let mean_delay = if delays.is_empty() {
        f64::NAN
    } else {
        delays.iter().sum::<f64>() / delays.len() as f64
    };
    let power_batch_means: Vec<f64> = power_batches
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|(sum, n)| sum / *n as f64)
        .collect();
    let power_ci95 = if power_batch_means.len() == CI_BATCHES {
        let grand = power_batch_means.iter().sum::<f64>() / CI_BATCHES as f64;
        let var = power_batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>()
            / (CI_BATCHES - 1) as f64;
        Z_975 * (var / CI_BATCHES as f64).sqrt()
    } else {
        f64::NAN
    };
    let started = local_starts + cloud_starts;
    let report = SimReport {
        mean_delay,
        delay_ci95: batch_means_ci(&delays),
        mean_queue_len: queue_len_sum / measured_slots as f64,
        mean_wait: if waits_count == 0 { f64::NAN } else { waits_sum / waits_count as f64 },
        local_fraction: if started == 0 { 0.0 } else { local_starts as f64 / started as f64 },
        mean_power: power_sum / measured_slots as f64,
        power_ci95,
        occupancy,
        dropped_tasks: dropped,
        tasks_completed: delays.len() as u64,
        arrivals,
    };
    Ok((report, trace))
}

/// Write the per-task trace as CSV.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TaskRecord], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "arrival_slot,start_slot,completion_slot,venue,delay_slots")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.arrival_slot,
            r.start_slot,
            crate::analysis::sig12(r.completion_slot),
            r.venue.as_str(),
            crate::analysis::sig12(r.delay_slots)
        )?;
    }
    Ok(())
}
