//! Flat key-value configuration files.
//!
//! A config is a sequence of `key = value` lines (`#` starts a comment).
//! Keys are exactly the snake_case field names of [`SystemParams`] and
//! [`PhysicalInputs`]; unknown keys are an error. Two layouts are accepted:
//!
//! * direct — the [`SystemParams`] fields are given as-is;
//! * derived — [`PhysicalInputs`] fields are given together with the slot,
//!   arrival and budget settings, and the remaining constants are derived
//!   (`local_slots`, `cloud_slots`, `p_loc`, and `beta` unless pinned).
//!
//! `beta` may always be given explicitly, which bypasses the Rayleigh
//! channel helper. Defaults: `buffer_cap` 50, `feedback_slots` 0, and
//! `p_max = p_loc + beta * p_tx` (the policy-independent power ceiling,
//! which makes the budget non-binding unless tightened).

use crate::error::{Error, Result};
use crate::model::{
    cpu_power, outage_success_prob, slots_needed, PhysicalInputs, SystemParams,
};
use std::collections::BTreeMap;
use std::path::Path;

const SYSTEM_KEYS: [&str; 11] = [
    "alpha",
    "beta",
    "slot_len",
    "buffer_cap",
    "packets_per_task",
    "local_slots",
    "cloud_slots",
    "feedback_slots",
    "p_loc",
    "p_tx",
    "p_max",
];

const PHYSICAL_KEYS: [&str; 9] = [
    "data_bits",
    "cycles_per_task",
    "f_loc",
    "f_ser",
    "bandwidth",
    "noise_power",
    "tx_power",
    "mean_gain",
    "kappa",
];

/// A loaded configuration: the resolved parameters plus, in derived mode with
/// a full channel description, the raw physical inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: SystemParams,
    pub phys: Option<PhysicalInputs>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        let values = scan(text)?;
        let get = |key: &str| values.get(key).map(|&(_, v)| v);
        let physical_present = PHYSICAL_KEYS.iter().any(|k| values.contains_key(*k));

        let require = |key: &str| {
            get(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        };
        let require_count = |key: &str| -> Result<usize> {
            let v = require(key)?;
            if v.fract() != 0.0 || v < 0.0 || v > usize::MAX as f64 {
                return Err(Error::Config(format!(
                    "key `{key}` must be a non-negative integer, got {v}"
                )));
            }
            Ok(v as usize)
        };

        let alpha = require("alpha")?;
        let slot_len = require("slot_len")?;
        let packets_per_task = require_count("packets_per_task")?;
        let buffer_cap = match get("buffer_cap") {
            Some(_) => require_count("buffer_cap")?,
            None => 50,
        };
        let feedback_slots = get("feedback_slots").unwrap_or(0.0);

        let (beta, local_slots, cloud_slots, p_loc, p_tx, phys);
        if physical_present {
            for key in ["local_slots", "cloud_slots", "p_loc", "p_tx"] {
                if let Some(&(line, _)) = values.get(key) {
                    return Err(Error::Config(format!(
                        "line {line}: key `{key}` conflicts with physical inputs (it would be derived)"
                    )));
                }
            }
            let cycles = require("cycles_per_task")?;
            let f_loc = require("f_loc")?;
            let f_ser = require("f_ser")?;
            let kappa = require("kappa")?;
            let tx_power = require("tx_power")?;
            let data_bits = require("data_bits")?;
            let channel_complete =
                ["bandwidth", "noise_power", "mean_gain"].iter().all(|k| get(k).is_some());
            phys = if channel_complete {
                Some(PhysicalInputs {
                    data_bits,
                    cycles_per_task: cycles,
                    f_loc,
                    f_ser,
                    bandwidth: require("bandwidth")?,
                    noise_power: require("noise_power")?,
                    tx_power,
                    mean_gain: require("mean_gain")?,
                    kappa,
                })
            } else {
                None
            };
            beta = match get("beta") {
                Some(b) => b,
                None => {
                    let phys = phys.as_ref().ok_or_else(|| {
                        Error::Config(
                            "missing required key `beta` (or the channel inputs \
                             `bandwidth`, `noise_power`, `mean_gain` to derive it)"
                                .into(),
                        )
                    })?;
                    outage_success_prob(phys, packets_per_task, slot_len)?
                }
            };
            local_slots = slots_needed(cycles, f_loc, slot_len)?;
            cloud_slots = slots_needed(cycles, f_ser, slot_len)?;
            p_loc = cpu_power(kappa, f_loc);
            p_tx = tx_power;
        } else {
            beta = require("beta")?;
            local_slots = require_count("local_slots")?;
            cloud_slots = require_count("cloud_slots")?;
            p_loc = require("p_loc")?;
            p_tx = require("p_tx")?;
            phys = None;
        }

        let p_max = get("p_max").unwrap_or(p_loc + beta * p_tx);
        let params = SystemParams {
            alpha,
            beta,
            slot_len,
            buffer_cap,
            packets_per_task,
            local_slots,
            cloud_slots,
            feedback_slots,
            p_loc,
            p_tx,
            p_max,
        };
        params.validate()?;
        Ok(Config { params, phys })
    }
}

/// First pass: syntax, known keys, duplicates. Returns key -> (line, value).
fn scan(text: &str) -> Result<BTreeMap<&str, (usize, f64)>> {
    let mut values: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {line_no}: expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim();
        let known = SYSTEM_KEYS
            .iter()
            .chain(PHYSICAL_KEYS.iter())
            .find(|k| **k == key)
            .copied()
            .ok_or_else(|| Error::Config(format!("line {line_no}: unknown key `{key}`")))?;
        let value: f64 = value.trim().parse().map_err(|_| {
            Error::Config(format!(
                "line {line_no}: value for `{key}` is not a number: `{}`",
                value.trim()
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::Config(format!("line {line_no}: value for `{key}` is not finite")));
        }
        if values.insert(known, (line_no, value)).is_some() {
            return Err(Error::Config(format!("line {line_no}: duplicate key `{key}`")));
        }
    }
    Ok(values)
}
