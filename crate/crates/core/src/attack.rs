//! False-data-injection waveforms and their injection points.
//!
//! Attacks corrupt sensor measurements or in-flight communication values
//! additively; every corrupted channel gets a ground-truth label so traces
//! can be scored sample by sample.

use serde::{Deserialize, Serialize};

use crate::comms::{CommGraph, CommMessage, MessageKind};
use crate::error::{Error, Result};
use crate::plant::PlantMeasurement;

/// Which channel an attack corrupts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackTarget {
    SensorCurrent { converter: usize },
    SensorVoltage { converter: usize },
    CommLink { sender: usize, receiver: usize },
}

/// Additive corruption shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum WaveShape {
    /// Constant offset while active.
    Bias { magnitude: f64 },
    /// Offset growing at `slope` per second, saturating at `cap`.
    Ramp { slope: f64, cap: f64 },
}

/// A corruption waveform with its active window `[t_start, t_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackWaveform {
    #[serde(flatten)]
    pub shape: WaveShape,
    pub t_start: f64,
    /// Exclusive end time; `f64::INFINITY` keeps the attack on forever.
    #[serde(default = "infinite_end")]
    pub t_end: f64,
}

fn infinite_end() -> f64 {
    f64::INFINITY
}

/// One attack: target channel plus waveform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub target: AttackTarget,
    pub waveform: AttackWaveform,
}

impl AttackSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        let ids_ok = match self.target {
            AttackTarget::SensorCurrent { converter } | AttackTarget::SensorVoltage { converter } => {
                converter < k
            }
            AttackTarget::CommLink { sender, receiver } => {
                sender < k && receiver < k && sender != receiver
            }
        };
        if !ids_ok {
            return Err(Error::config(format!("attack target {:?} invalid for k={k}", self.target)));
        }
        if !(self.waveform.t_start < self.waveform.t_end) {
            return Err(Error::config("attack window needs t_start < t_end"));
        }
        if let WaveShape::Ramp { cap, .. } = self.waveform.shape {
            if cap < 0.0 {
                return Err(Error::config("ramp cap must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Offset contributed by a waveform at time `t`; zero outside the window.
pub fn attack_offset(w: &AttackWaveform, t: f64) -> f64 {
    if t < w.t_start || t >= w.t_end {
        return 0.0;
    }
    match w.shape {
        WaveShape::Bias { magnitude } => magnitude,
        WaveShape::Ramp { slope, cap } => (slope * (t - w.t_start)).min(cap),
    }
}

/// Ground-truth per-channel labels for one sample: true while the channel
/// carries a nonzero offset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelLabels {
    pub sensor_current: Vec<bool>,
    pub sensor_voltage: Vec<bool>,
    /// Aligned with `CommGraph::links` order.
    pub comm: Vec<bool>,
}

impl ChannelLabels {
    pub fn all_false(k: usize, n_links: usize) -> Self {
        Self {
            sensor_current: vec![false; k],
            sensor_voltage: vec![false; k],
            comm: vec![false; n_links],
        }
    }

    pub fn any(&self) -> bool {
        self.sensor_current.iter().chain(&self.sensor_voltage).chain(&self.comm).any(|&b| b)
    }
}

/// Apply every active attack at time `t`.
///
/// Sensor offsets land on the returned copies of the measurements;
/// communication offsets land on the outgoing current messages (so the
/// corruption arrives with the usual one-sample delay). Untargeted
/// channels pass through bit-identically: no arithmetic touches them.
pub fn apply_attacks(
    specs: &[AttackSpec],
    measurements: &[PlantMeasurement],
    messages: &[CommMessage],
    graph: &CommGraph,
    t: f64,
) -> Result<(Vec<PlantMeasurement>, Vec<CommMessage>, ChannelLabels)> {
    let k = measurements.len();
    let mut meas = measurements.to_vec();
    let mut msgs = messages.to_vec();
    let mut labels = ChannelLabels::all_false(k, graph.links.len());

    for spec in specs {
        spec.validate(k)?;
        let offset = attack_offset(&spec.waveform, t);
        if offset == 0.0 {
            continue;
        }
        match spec.target {
            AttackTarget::SensorCurrent { converter } => {
                meas[converter].i_k += offset;
                labels.sensor_current[converter] = true;
            }
            AttackTarget::SensorVoltage { converter } => {
                meas[converter].v_k += offset;
                labels.sensor_voltage[converter] = true;
            }
            AttackTarget::CommLink { sender, receiver } => {
                let idx = graph.link_index(sender, receiver).ok_or_else(|| {
                    Error::config(format!("attacked link {sender}->{receiver} not in topology"))
                })?;
                for m in msgs.iter_mut() {
                    if m.sender == sender
                        && m.receiver == receiver
                        && m.kind == MessageKind::Current
                    {
                        m.value += offset;
                    }
                }
                labels.comm[idx] = true;
            }
        }
    }
    Ok((meas, msgs, labels))
}
