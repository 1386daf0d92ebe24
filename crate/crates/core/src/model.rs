//! System parameters, derived slot-level constants, and the Markov state
//! space of the device (task buffer, transmitter, local CPU).
//!
//! All times are kept in slot units internally; conversion to seconds
//! (multiplication by `slot_len`) happens only when reporting.

use crate::error::{Error, Result};

/// All slot-level inputs of the scheduling model.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Probability of one task arrival per slot.
    pub alpha: f64,
    /// Probability per slot that the channel is not in outage.
    pub beta: f64,
    /// Slot length in seconds.
    pub slot_len: f64,
    /// Task buffer capacity Q.
    pub buffer_cap: usize,
    /// Number M of packets forming one task's input data.
    pub packets_per_task: usize,
    /// Slots N to finish one task on the local CPU.
    pub local_slots: usize,
    /// Slots N_cloud to finish one task on the MEC server.
    pub cloud_slots: usize,
    /// Slots to feed the computation result back (real-valued, may be zero).
    pub feedback_slots: f64,
    /// Local CPU power while executing, watts.
    pub p_loc: f64,
    /// Transmit power while sending, watts.
    pub p_tx: f64,
    /// Average power budget, watts.
    pub p_max: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        fn check(cond: bool, msg: &str) -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.to_string()))
            }
        }
        check(
            self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha),
            "alpha must lie in [0, 1]",
        )?;
        check(
            self.beta.is_finite() && self.beta > 0.0 && self.beta <= 1.0,
            "beta must lie in (0, 1]",
        )?;
        check(
            self.slot_len.is_finite() && self.slot_len > 0.0,
            "slot_len must be positive",
        )?;
        check(self.buffer_cap >= 1, "buffer_cap must be at least 1")?;
        check(self.packets_per_task >= 1, "packets_per_task must be at least 1")?;
        check(self.local_slots >= 1, "local_slots must be at least 1")?;
        check(self.cloud_slots >= 1, "cloud_slots must be at least 1")?;
        check(
            self.feedback_slots.is_finite() && self.feedback_slots >= 0.0,
            "feedback_slots must be non-negative",
        )?;
        check(self.p_loc.is_finite() && self.p_loc >= 0.0, "p_loc must be non-negative")?;
        check(self.p_tx.is_finite() && self.p_tx >= 0.0, "p_tx must be non-negative")?;
        check(self.p_max.is_finite() && self.p_max >= 0.0, "p_max must be non-negative")?;
        Ok(())
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace {
            buffer_cap: self.buffer_cap,
            packets: self.packets_per_task,
            local_slots: self.local_slots,
        }
    }
}

/// Raw physical inputs from which the slot-level constants can be derived.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalInputs {
    /// Input data size L of one task, bits.
    pub data_bits: f64,
    /// CPU cycles C required per task.
    pub cycles_per_task: f64,
    /// Local CPU frequency, Hz.
    pub f_loc: f64,
    /// Server CPU frequency, Hz.
    pub f_ser: f64,
    /// System bandwidth B, Hz.
    pub bandwidth: f64,
    /// Receiver noise power N0 * B, watts.
    pub noise_power: f64,
    /// Transmit power, watts.
    pub tx_power: f64,
    /// Mean channel power gain (Rayleigh helper).
    pub mean_gain: f64,
    /// CPU power coefficient kappa in P_loc ~ kappa * f_loc^3, watts per Hz^3.
    pub kappa: f64,
}

impl PhysicalInputs {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            (self.data_bits, "data_bits"),
            (self.cycles_per_task, "cycles_per_task"),
            (self.f_loc, "f_loc"),
            (self.f_ser, "f_ser"),
            (self.bandwidth, "bandwidth"),
            (self.noise_power, "noise_power"),
            (self.tx_power, "tx_power"),
            (self.mean_gain, "mean_gain"),
            (self.kappa, "kappa"),
        ];
        for (value, name) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be strictly positive")));
            }
        }
        Ok(())
    }
}

/// Slot and budget settings that accompany [`PhysicalInputs`] when deriving
/// a full [`SystemParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeriveSettings {
    pub slot_len: f64,
    pub alpha: f64,
    pub buffer_cap: usize,
    pub packets_per_task: usize,
    pub feedback_slots: f64,
    pub p_max: f64,
}

/// Number of whole slots needed to run `cycles` CPU cycles at `freq` Hz.
pub fn slots_needed(cycles: f64, freq: f64, slot_len: f64) -> Result<usize> {
    if !(cycles > 0.0 && freq > 0.0 && slot_len > 0.0) {
        return Err(Error::InvalidParameter(
            "slots_needed requires positive cycles, frequency and slot length".into(),
        ));
    }
    Ok((cycles / (freq * slot_len)).ceil() as usize)
}

/// Dynamic CPU power `kappa * f^3` in watts.
pub fn cpu_power(kappa: f64, f_loc: f64) -> f64 {
    kappa * f_loc.powi(3)
}

/// Per-packet rate threshold `L / (M * slot_len)` in bits/s: one of the M
/// equal packets of a task must fit into one slot.
pub fn rate_threshold(data_bits: f64, packets_per_task: usize, slot_len: f64) -> f64 {
    data_bits / (packets_per_task as f64 * slot_len)
}

/// Channel success probability under the Rayleigh-fading helper.
///
/// The transmission succeeds when `B log2(1 + gain * P_tx / noise) >= R`,
/// i.e. when the channel gain clears `gain_th = (2^(R/B) - 1) * noise / P_tx`.
/// With exponentially distributed gain the success probability is
/// `exp(-gain_th / mean_gain)`, clamped into (0, 1].
pub fn outage_success_prob(
    phys: &PhysicalInputs,
    packets_per_task: usize,
    slot_len: f64,
) -> Result<f64> {
    phys.validate()?;
    if packets_per_task == 0 || slot_len <= 0.0 {
        return Err(Error::InvalidParameter(
            "outage_success_prob requires packets_per_task >= 1 and slot_len > 0".into(),
        ));
    }
    let rate = rate_threshold(phys.data_bits, packets_per_task, slot_len);
    let gain_th = (2f64.powf(rate / phys.bandwidth) - 1.0) * phys.noise_power / phys.tx_power;
    let beta = (-gain_th / phys.mean_gain).exp();
    Ok(beta.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Build a full [`SystemParams`] out of raw physical inputs.
///
/// `N = ceil(C / (f_loc * slot_len))`, `N_cloud = ceil(C / (f_ser * slot_len))`,
/// `P_loc = kappa * f_loc^3`. `beta_override` bypasses the Rayleigh helper:
/// the analysis depends on the channel only through beta, which measurement
/// or reproduction runs usually pin directly.
pub fn derive_constants(
    phys: &PhysicalInputs,
    settings: &DeriveSettings,
    beta_override: Option<f64>,
) -> Result<SystemParams> {
    phys.validate()?;
    let beta = match beta_override {
        Some(b) => b,
        None => outage_success_prob(phys, settings.packets_per_task, settings.slot_len)?,
    };
    let params = SystemParams {
        alpha: settings.alpha,
        beta,
        slot_len: settings.slot_len,
        buffer_cap: settings.buffer_cap,
        packets_per_task: settings.packets_per_task,
        local_slots: slots_needed(phys.cycles_per_task, phys.f_loc, settings.slot_len)?,
        cloud_slots: slots_needed(phys.cycles_per_task, phys.f_ser, settings.slot_len)?,
        feedback_slots: settings.feedback_slots,
        p_loc: cpu_power(phys.kappa, phys.f_loc),
        p_tx: phys.tx_power,
        p_max: settings.p_max,
    };
    params.validate()?;
    Ok(params)
}

/// Average number of slots to deliver one task's M packets: each packet takes
/// a geometric number of slots with success probability beta, so the mean is
/// `M / beta`.
pub fn transmission_time(params: &SystemParams) -> Result<f64> {
    if params.beta <= 0.0 {
        return Err(Error::DivergentTransmission);
    }
    Ok(params.packets_per_task as f64 / params.beta)
}

/// Average cloud processing time `t_c = t_tx + N_cloud + t_rx` in slots.
pub fn cloud_time(params: &SystemParams) -> Result<f64> {
    Ok(transmission_time(params)? + params.cloud_slots as f64 + params.feedback_slots)
}

/// One state of the device Markov chain: queued tasks, transmitter state,
/// CPU state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SysState {
    /// Tasks waiting in the buffer, in {0..Q}.
    pub q: usize,
    /// Transmitter: 0 = idle, m = packet m of a task pending, in {0..M}.
    pub c_t: usize,
    /// CPU: 0 = idle, n = task in progress with N-n slots remaining, in {0..N-1}.
    pub c_l: usize,
}

impl SysState {
    pub fn new(q: usize, c_t: usize, c_l: usize) -> Self {
        Self { q, c_t, c_l }
    }
}

impl std::fmt::Display for SysState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.q, self.c_t, self.c_l)
    }
}

/// The finite state space `{0..Q} x {0..M} x {0..N-1}` with a fixed
/// lexicographic enumeration in (q, c_t, c_l).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    buffer_cap: usize,
    packets: usize,
    local_slots: usize,
}

impl StateSpace {
    pub fn new(buffer_cap: usize, packets: usize, local_slots: usize) -> Self {
        Self { buffer_cap, packets, local_slots }
    }

    pub fn buffer_cap(&self) -> usize {
        self.buffer_cap
    }

    pub fn packets(&self) -> usize {
        self.packets
    }

    pub fn local_slots(&self) -> usize {
        self.local_slots
    }

    /// Total number of states `(Q+1) * (M+1) * N`.
    pub fn len(&self) -> usize {
        (self.buffer_cap + 1) * (self.packets + 1) * self.local_slots
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: SysState) -> bool {
        s.q <= self.buffer_cap && s.c_t <= self.packets && s.c_l < self.local_slots
    }

    /// Index of a state in the lexicographic enumeration.
    pub fn index(&self, s: SysState) -> usize {
        debug_assert!(self.contains(s), "state {s} outside space");
        (s.q * (self.packets + 1) + s.c_t) * self.local_slots + s.c_l
    }

    /// Inverse of [`StateSpace::index`].
    pub fn state(&self, idx: usize) -> SysState {
        debug_assert!(idx < self.len());
        let c_l = idx % self.local_slots;
        let rest = idx / self.local_slots;
        let c_t = rest % (self.packets + 1);
        let q = rest / (self.packets + 1);
        SysState { q, c_t, c_l }
    }

    /// All states in enumeration order.
    pub fn states(&self) -> impl Iterator<Item = SysState> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }
}

/// Ordered list of all states, mostly useful for inspection and dumps.
pub fn enumerate_states(params: &SystemParams) -> Vec<SysState> {
    params.state_space().states().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::reference_params;

    fn reference_phys() -> PhysicalInputs {
        PhysicalInputs {
            data_bits: 5e5,
            cycles_per_task: 1300.0 * 5e5,
            f_loc: 2e9,
            f_ser: 1e11,
            bandwidth: 5e6,
            noise_power: 1e-9,
            tx_power: 1.0,
            mean_gain: 1.6e-7,
            kappa: 1e-28,
        }
    }

    fn reference_settings() -> DeriveSettings {
        DeriveSettings {
            slot_len: 0.02,
            alpha: 0.2,
            buffer_cap: 50,
            packets_per_task: 1,
            feedback_slots: 0.0,
            p_max: 1.2,
        }
    }

    #[test]
    fn derive_reference_constants() {
        let params = derive_constants(&reference_phys(), &reference_settings(), Some(0.4)).unwrap();
        assert_eq!(params.local_slots, 17);
        assert_eq!(params.cloud_slots, 1);
        assert!((params.p_loc - 0.8).abs() < 1e-15);
        assert_eq!(params.beta, 0.4);
    }

    #[test]
    fn derive_exact_multiple_gives_one_slot() {
        // C = f * slot_len exactly: ceiling of 1.
        assert_eq!(slots_needed(4e7, 2e9, 0.02).unwrap(), 1);
    }

    #[test]
    fn derive_monotone_in_cycles_and_frequency() {
        let n1 = slots_needed(6.5e8, 2e9, 0.02).unwrap();
        let n2 = slots_needed(7.0e8, 2e9, 0.02).unwrap();
        assert!(n2 >= n1);
        let n3 = slots_needed(6.5e8, 4e9, 0.02).unwrap();
        assert!(n3 <= n1);
        assert_eq!(n3, 9); // ceil(16.25 / 2)
    }

    #[test]
    fn outage_threshold_at_mean_gain() {
        // Constructed so that gain_th = mean_gain: beta = exp(-1).
        // R/B = 1 -> gain_th = noise/P_tx = 0.5; mean_gain = 0.5.
        let phys = PhysicalInputs {
            data_bits: 1e6,
            cycles_per_task: 1.0,
            f_loc: 1.0,
            f_ser: 1.0,
            bandwidth: 1e6,
            noise_power: 0.5,
            tx_power: 1.0,
            mean_gain: 0.5,
            kappa: 1.0,
        };
        let beta = outage_success_prob(&phys, 1, 1.0).unwrap();
        assert!((beta - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn outage_zero_threshold_gives_one() {
        // Huge bandwidth drives R/B -> 0 and the threshold to 0.
        let phys = PhysicalInputs { bandwidth: 1e30, ..reference_phys() };
        let beta = outage_success_prob(&phys, 1, 0.02).unwrap();
        assert!((beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outage_reference_threshold_value() {
        // B=5 MHz, R/B=5, noise=1e-9 W, P_tx=1 W -> gain_th = 31e-9.
        let phys = reference_phys();
        let rate = rate_threshold(phys.data_bits, 1, 0.02);
        assert!((rate / phys.bandwidth - 5.0).abs() < 1e-12);
        let gain_th = (2f64.powf(rate / phys.bandwidth) - 1.0) * phys.noise_power / phys.tx_power;
        assert!((gain_th - 3.1e-8).abs() < 1e-20);
        // Success probability decreases as the threshold grows.
        let tighter = PhysicalInputs { noise_power: 2e-9, ..reference_phys() };
        let beta_loose = outage_success_prob(&phys, 1, 0.02).unwrap();
        let beta_tight = outage_success_prob(&tighter, 1, 0.02).unwrap();
        assert!(beta_tight < beta_loose);
        assert!(beta_loose <= 1.0 && beta_loose > 0.0);
    }

    #[test]
    fn transmission_and_cloud_times() {
        let params = reference_params(0.2);
        let t_tx = transmission_time(&params).unwrap();
        assert_eq!(t_tx, 2.5);
        assert_eq!(cloud_time(&params).unwrap(), 3.5);

        let det = SystemParams { beta: 1.0, packets_per_task: 3, ..reference_params(0.2) };
        assert_eq!(transmission_time(&det).unwrap(), 3.0);

        let half = SystemParams { beta: 0.5, packets_per_task: 2, ..reference_params(0.2) };
        assert_eq!(transmission_time(&half).unwrap(), 4.0);
    }

    #[test]
    fn transmission_time_rejects_zero_beta() {
        let params = SystemParams { beta: 0.0, ..reference_params(0.2) };
        assert!(matches!(transmission_time(&params), Err(Error::DivergentTransmission)));
    }

    #[test]
    fn enumeration_tiny_space() {
        let space = StateSpace::new(1, 1, 1);
        let states: Vec<_> = space.states().collect();
        assert_eq!(
            states,
            vec![
                SysState::new(0, 0, 0),
                SysState::new(0, 1, 0),
                SysState::new(1, 0, 0),
                SysState::new(1, 1, 0)
            ]
        );
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(StateSpace::new(50, 1, 17).len(), 1734);
        assert_eq!(StateSpace::new(3, 1, 2).len(), 16);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = reference_params(0.2);
        p.alpha = 1.5;
        assert!(p.validate().is_err());
        let mut p = reference_params(0.2);
        p.beta = 0.0;
        assert!(p.validate().is_err());
        let mut p = reference_params(0.2);
        p.local_slots = 0;
        assert!(p.validate().is_err());
    }
}
