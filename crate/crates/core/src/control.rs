//! Hierarchical per-converter control.
//!
//! Primary layer: cascade PI (outer voltage loop feeding the inner current
//! loop), discretized with the Tustin method in incremental form. Secondary
//! layer: droop plus average-current power sharing on the low-pass-filtered
//! output current, and a slow distributed bus-voltage restoration integrator
//! that lifts the common reference until the measured bus recovers the
//! nominal setpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PI gains and output clamp.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    /// Integral gain, 1/s.
    pub ki: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl PiGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min < self.u_max) {
            return Err(Error::config(format!(
                "PI clamp must satisfy u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if self.ki < 0.0 || !self.kp.is_finite() || !self.ki.is_finite() {
            return Err(Error::config("PI gains must be finite with ki >= 0"));
        }
        Ok(())
    }
}

/// Incremental-form PI state. The integral lives implicitly in `u_prev`,
/// so storing the clamped output is what suspends integration while
/// saturated.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PiState {
    pub u_prev: f64,
    pub e_prev: f64,
    pub saturated: bool,
}

/// One Tustin PI update:
/// `u = u_prev + kp*(e - e_prev) + (ki*t_s/2)*(e + e_prev)`, clamped.
pub fn pi_step(state: &mut PiState, gains: &PiGains, e: f64, t_s: f64) -> Result<f64> {
    if !e.is_finite() {
        return Err(Error::sim_fault(0, format!("non-finite PI error {e}")));
    }
    if !(t_s > 0.0) {
        return Err(Error::config(format!("PI needs t_s > 0, got {t_s}")));
    }
    let raw = state.u_prev
        + gains.kp * (e - state.e_prev)
        + 0.5 * gains.ki * t_s * (e + state.e_prev);
    let u = raw.clamp(gains.u_min, gains.u_max);
    state.saturated = raw != u;
    state.u_prev = u;
    state.e_prev = e;
    Ok(u)
}

/// One Tustin first-order low-pass update with unit DC gain:
/// `y = a*y_prev + b*(x + x_prev)` with `a = (2 - w*t_s)/(2 + w*t_s)` and
/// `b = w*t_s/(2 + w*t_s)`.
pub fn lpf_step(y_prev: f64, x: f64, x_prev: f64, cutoff: f64, t_s: f64) -> f64 {
    let wt = cutoff * t_s;
    debug_assert!(wt > 0.0 && wt < 2.0, "Tustin low-pass needs 0 < w*t_s < 2");
    let a = (2.0 - wt) / (2.0 + wt);
    let b = wt / (2.0 + wt);
    a * y_prev + b * (x + x_prev)
}

/// Streaming wrapper around [`lpf_step`].
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LowPass {
    pub y_prev: f64,
    pub x_prev: f64,
}

impl LowPass {
    pub fn seeded(value: f64) -> Self {
        Self {
            y_prev: value,
            x_prev: value,
        }
    }

    pub fn step(&mut self, x: f64, cutoff: f64, t_s: f64) -> f64 {
        let y = lpf_step(self.y_prev, x, self.x_prev, cutoff, t_s);
        self.y_prev = y;
        self.x_prev = x;
        y
    }

    pub fn output(&self) -> f64 {
        self.y_prev
    }
}

/// Droop and power-sharing configuration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DroopConfig {
    /// Nominal voltage reference, V.
    pub v_ref: f64,
    /// Droop gain, Ohm.
    pub r_d: f64,
    /// Current-smoothing low-pass cutoff, rad/s.
    pub lpf_cutoff: f64,
    /// Average-current correction gain, V/A.
    pub k_share: f64,
    /// Bus restoration integrator gain, 1/s. Zero disables restoration.
    pub restore_gain: f64,
    /// Clamp on the restoration lift, V.
    pub restore_max: f64,
}

impl Default for DroopConfig {
    fn default() -> Self {
        Self {
            v_ref: 39.0,
            r_d: 0.2,
            lpf_cutoff: 2.0 * std::f64::consts::PI * 30.0,
            k_share: 4.0,
            restore_gain: 50.0,
            restore_max: 6.0,
        }
    }
}

impl DroopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_d < 0.0 {
            return Err(Error::config("droop gain r_d must be >= 0"));
        }
        if !(self.lpf_cutoff > 0.0) {
            return Err(Error::config("lpf_cutoff must be positive"));
        }
        Ok(())
    }
}

/// Per-converter droop reference:
/// `v_ref_k = v_ref - r_d*i_filtered + k_share*(i_avg - i_filtered)`.
pub fn droop_reference(cfg: &DroopConfig, i_filtered: f64, i_avg: f64) -> f64 {
    cfg.v_ref - cfg.r_d * i_filtered + cfg.k_share * (i_avg - i_filtered)
}

/// Measurement set consumed by one control step. Values may already have
/// been substituted by the mitigation layer.
#[derive(Clone, Copy, Debug)]
pub struct ControlSample {
    /// Output current fed to the controller, A.
    pub i_meas: f64,
    /// Output voltage fed to the controller, V.
    pub v_meas: f64,
    /// Average current from the communication layer, A.
    pub i_avg: f64,
    /// Measured bus voltage for restoration, V.
    pub v_bus: f64,
    /// Control period, s.
    pub t_s: f64,
}

/// Full controller state for one converter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConverterControl {
    pub droop: DroopConfig,
    pub gains_v: PiGains,
    pub gains_i: PiGains,
    pub pi_v: PiState,
    pub pi_i: PiState,
    pub lpf: LowPass,
    /// Accumulated restoration lift, V.
    pub v_restore: f64,
}

impl ConverterControl {
    pub fn new(droop: DroopConfig, gains_v: PiGains, gains_i: PiGains) -> Self {
        Self {
            droop,
            gains_v,
            gains_i,
            pi_v: PiState::default(),
            pi_i: PiState::default(),
            lpf: LowPass::default(),
            v_restore: 0.0,
        }
    }

    /// Filtered local current from the previous step, used by the
    /// communication layer when averaging.
    pub fn filtered_current(&self) -> f64 {
        self.lpf.output()
    }

    /// Preload all internal state to an operating point so a run can start
    /// in steady state.
    pub fn seed_steady(&mut self, i_out: f64, duty: f64, v_restore: f64) {
        self.lpf = LowPass::seeded(i_out);
        self.pi_v = PiState {
            u_prev: i_out,
            e_prev: 0.0,
            saturated: false,
        };
        self.pi_i = PiState {
            u_prev: duty,
            e_prev: 0.0,
            saturated: false,
        };
        self.v_restore = v_restore;
    }

    /// One cascaded control update; returns the duty command in [0, 1].
    pub fn control_step(&mut self, sample: &ControlSample) -> Result<f64> {
        for (name, v) in [
            ("i_meas", sample.i_meas),
            ("v_meas", sample.v_meas),
            ("i_avg", sample.i_avg),
            ("v_bus", sample.v_bus),
        ] {
            if !v.is_finite() {
                return Err(Error::sim_fault(0, format!("non-finite control input {name}={v}")));
            }
        }
        let i_f = self.lpf.step(sample.i_meas, self.droop.lpf_cutoff, sample.t_s);

        if self.droop.restore_gain > 0.0 {
            self.v_restore += self.droop.restore_gain * (self.droop.v_ref - sample.v_bus) * sample.t_s;
            self.v_restore = self.v_restore.clamp(-self.droop.restore_max, self.droop.restore_max);
        }
        let lifted = DroopConfig {
            v_ref: self.droop.v_ref + self.v_restore,
            ..self.droop
        };
        let v_ref_k = droop_reference(&lifted, i_f, sample.i_avg);

        let e_v = v_ref_k - sample.v_meas;
        let i_ref = pi_step(&mut self.pi_v, &self.gains_v, e_v, sample.t_s)?;
        let e_i = i_ref - sample.i_meas;
        pi_step(&mut self.pi_i, &self.gains_i, e_i, sample.t_s)
    }

    /// Effective (lifted) reference from the last step, for detector use.
    pub fn effective_v_ref(&self) -> f64 {
        self.droop.v_ref + self.v_restore
    }
}

/// Default voltage-loop gains: current reference clamped to +/- 2x rated.
pub fn default_voltage_gains(i_rated: f64) -> PiGains {
    PiGains {
        kp: 0.5,
        ki: 200.0,
        u_min: -2.0 * i_rated,
        u_max: 2.0 * i_rated,
    }
}

/// Default current-loop gains: duty clamped to [0, 1].
pub fn default_current_gains() -> PiGains {
    PiGains {
        kp: 0.05,
        ki: 50.0,
        u_min: 0.0,
        u_max: 1.0,
    }
}
