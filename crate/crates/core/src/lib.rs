//! Delay-optimal, power-constrained task scheduling for a mobile device
//! backed by an edge server.
//!
//! The device holds arriving computation tasks in a finite buffer and, each
//! slot, may start one task on its own CPU, start offloading one task over an
//! on-off wireless channel, do both, or idle. The crate models the resulting
//! queue/transmitter/CPU Markov chain exactly and provides:
//!
//! * [`analysis`] — closed-form evaluation of any stochastic policy
//!   (mean delay, local-execution fraction, average power),
//! * [`synth`] — synthesis of the delay-optimal policy under an average
//!   power budget, via an occupation-measure LP and a one-dimensional
//!   search over the local-execution fraction,
//! * [`sim`] — a slot-level Monte Carlo simulator used as an independent
//!   cross-check of the analytical pipeline.

pub mod analysis;
pub mod chain;
pub mod config;
pub mod error;
pub mod linalg;
pub mod lpcore;
pub mod model;
pub mod policy;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::model::SystemParams;

    /// Reference parameter set used across unit tests: M=1, beta=0.4, N=17,
    /// N_cloud=1, t_rx=0, P_loc=0.8 W, P_tx=1 W, 20 ms slots, Q=50.
    pub fn reference_params(alpha: f64) -> SystemParams {
        SystemParams {
            alpha,
            beta: 0.4,
            slot_len: 0.02,
            buffer_cap: 50,
            packets_per_task: 1,
            local_slots: 17,
            cloud_slots: 1,
            feedback_slots: 0.0,
            p_loc: 0.8,
            p_tx: 1.0,
            p_max: 1.2,
        }
    }

    /// Small instance (16 states) that keeps brute-force checks cheap.
    pub fn tiny_params() -> SystemParams {
        SystemParams {
            alpha: 0.3,
            beta: 0.5,
            slot_len: 0.02,
            buffer_cap: 3,
            packets_per_task: 1,
            local_slots: 2,
            cloud_slots: 1,
            feedback_slots: 0.0,
            p_loc: 0.8,
            p_tx: 1.0,
            p_max: 1.8,
        }
    }
}
