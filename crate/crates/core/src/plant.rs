//! Averaged electrical model of k parallel buck converters feeding a common
//! DC bus through unequal line resistors.
//!
//! Each converter is reduced to its duty-cycle-averaged dynamics
//!
//! ```text
//! L di_l/dt = d*v_in - v_c
//! C dv_c/dt = i_l - i_out
//! ```
//!
//! with the bus voltage obtained from the nodal equation of the resistive
//! star network at every step. Integration is semi-implicit Euler: the
//! inductor current is advanced first and the fresh value feeds the
//! capacitor update, which keeps the discrete LC pair stable at the
//! default 20 us step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical parameters of one averaged buck converter.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConverterParams {
    /// Input (source) voltage, V.
    pub v_in: f64,
    /// Buck inductor, H.
    pub l_buck: f64,
    /// Output capacitor, F.
    pub c_buck: f64,
    /// Switching frequency, Hz. Sets the upper bound on the plant step.
    pub f_s: f64,
    /// Rated output power, W.
    pub p_rated: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self {
            v_in: 80.0,
            l_buck: 2e-3,
            c_buck: 100e-6,
            f_s: 25e3,
            p_rated: 150.0,
        }
    }
}

impl ConverterParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_in", self.v_in),
            ("l_buck", self.l_buck),
            ("c_buck", self.c_buck),
            ("f_s", self.f_s),
            ("p_rated", self.p_rated),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "converter parameter {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Dynamic state of one converter: inductor current and capacitor voltage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConverterState {
    /// Inductor current, A.
    pub i_l: f64,
    /// Output capacitor voltage, V.
    pub v_c: f64,
}

/// Resistive network joining the converters to the bus and the bus load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Line resistance between each converter output and the bus, Ohm.
    pub r_line: Vec<f64>,
    /// Bus load resistance, Ohm. Load steps rewrite this value.
    pub r_load: f64,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        if self.r_line.is_empty() {
            return Err(Error::config("network needs at least one line resistor"));
        }
        for (i, r) in self.r_line.iter().enumerate() {
            if !(r.is_finite() && *r > 0.0) {
                return Err(Error::config(format!("r_line[{i}] must be positive, got {r}")));
            }
        }
        if !(self.r_load.is_finite() && self.r_load > 0.0) {
            return Err(Error::config(format!("r_load must be positive, got {}", self.r_load)));
        }
        Ok(())
    }
}

/// One converter's sensed electrical quantities after a plant step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantMeasurement {
    /// Converter output voltage (capacitor voltage), V.
    pub v_k: f64,
    /// Converter output branch current into the bus, A.
    pub i_k: f64,
    /// Common bus voltage, V.
    pub v_bus: f64,
    /// Control-rate sample index the measurement belongs to.
    pub sample_index: u64,
}

/// Solve the star network for the bus voltage and branch currents.
///
/// `v_bus = (sum v_c[j]/r_line[j]) / (1/r_load + sum 1/r_line[j])` and
/// `i_out[j] = (v_c[j] - v_bus)/r_line[j]`.
pub fn solve_bus(v_c_all: &[f64], net: &NetworkParams) -> Result<(f64, Vec<f64>)> {
    if v_c_all.is_empty() || v_c_all.len() != net.r_line.len() {
        return Err(Error::config(format!(
            "solve_bus: {} node voltages for {} lines",
            v_c_all.len(),
            net.r_line.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 1.0 / net.r_load;
    for (v, r) in v_c_all.iter().zip(&net.r_line) {
        if !v.is_finite() {
            return Err(Error::sim_fault(0, format!("non-finite node voltage {v}")));
        }
        num += v / r;
        den += 1.0 / r;
    }
    let v_bus = num / den;
    let i_out = v_c_all
        .iter()
        .zip(&net.r_line)
        .map(|(v, r)| (v - v_bus) / r)
        .collect();
    Ok((v_bus, i_out))
}

/// Advance every converter by one plant step of length `dt`.
///
/// Semi-implicit update: the branch currents are taken from the pre-step
/// node voltages, the inductor currents advance on the old capacitor
/// voltages, and the capacitor update consumes the fresh inductor
/// currents. Returned measurements reflect the post-step network solution.
///
/// `i_l_floor_eps` bounds how far the averaged inductor current may swing
/// negative (diode-like limit), i.e. `i_l >= -i_l_floor_eps`.
pub fn plant_step(
    states: &mut [ConverterState],
    duties: &[f64],
    params: &[ConverterParams],
    net: &NetworkParams,
    dt: f64,
    step: u64,
    i_l_floor_eps: f64,
) -> Result<Vec<PlantMeasurement>> {
    let k = states.len();
    if duties.len() != k || params.len() != k || net.r_line.len() != k {
        return Err(Error::config("plant_step: mismatched array lengths"));
    }
    if !(dt > 0.0) {
        return Err(Error::config(format!("plant step dt must be positive, got {dt}")));
    }

    let v_c_pre: Vec<f64> = states.iter().map(|s| s.v_c).collect();
    let (_, i_out_pre) = solve_bus(&v_c_pre, net)?;

    for (j, st) in states.iter_mut().enumerate() {
        let p = &params[j];
        let d = duties[j].clamp(0.0, 1.0);
        st.i_l += dt * (d * p.v_in - st.v_c) / p.l_buck;
        if st.i_l < -i_l_floor_eps {
            st.i_l = -i_l_floor_eps;
        }
        st.v_c += dt * (st.i_l - i_out_pre[j]) / p.c_buck;
        if !st.i_l.is_finite() || !st.v_c.is_finite() || st.v_c.abs() > 10.0 * p.v_in {
            return Err(Error::sim_fault(
                step,
                format!(
                    "converter {j} diverged: i_l={}, v_c={} (limit {})",
                    st.i_l,
                    st.v_c,
                    10.0 * p.v_in
                ),
            ));
        }
    }

    let v_c_post: Vec<f64> = states.iter().map(|s| s.v_c).collect();
    let (v_bus, i_out) = solve_bus(&v_c_post, net)?;
    Ok(states
        .iter()
        .enumerate()
        .map(|(j, s)| PlantMeasurement {
            v_k: s.v_c,
            i_k: i_out[j],
            v_bus,
            sample_index: step,
        })
        .collect())
}

/// Total stored magnetic plus electric energy, J.
pub fn stored_energy(states: &[ConverterState], params: &[ConverterParams]) -> f64 {
    states
        .iter()
        .zip(params)
        .map(|(s, p)| 0.5 * p.l_buck * s.i_l * s.i_l + 0.5 * p.c_buck * s.v_c * s.v_c)
        .sum()
}

/// Dense Gaussian elimination with partial pivoting. `a` is row-major n x n.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::config("singular network in steady-state solve"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in (row + 1)..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Full algebraic steady-state solution of the DC network.
#[derive(Clone, Debug)]
pub struct DcSolution {
    pub v_c: Vec<f64>,
    pub i_out: Vec<f64>,
    pub v_bus: f64,
    /// Duty commands that hold this operating point (`v_c / v_in`).
    pub duties: Vec<f64>,
    /// Common reference lift supplied by bus-voltage restoration, V.
    pub v_restore: f64,
}

impl DcSolution {
    pub fn measurements(&self) -> Vec<PlantMeasurement> {
        self.v_c
            .iter()
            .zip(&self.i_out)
            .map(|(v, i)| PlantMeasurement {
                v_k: *v,
                i_k: *i,
                v_bus: self.v_bus,
                sample_index: 0,
            })
            .collect()
    }
}

/// Steady state for fixed duty commands, via a direct linear solve of the
/// zero-derivative equations. Independent of [`solve_bus`]'s closed form.
///
/// Unknowns are `[v_c[0..k], i_out[0..k], v_bus]`.
pub fn dc_steady_state_from_duties(
    duties: &[f64],
    params: &[ConverterParams],
    net: &NetworkParams,
) -> Result<DcSolution> {
    let k = duties.len();
    if params.len() != k || net.r_line.len() != k {
        return Err(Error::config("dc oracle: mismatched array lengths"));
    }
    let n = 2 * k + 1;
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for j in 0..k {
        // d*v_in - v_c = 0
        a[j][j] = 1.0;
        b[j] = duties[j].clamp(0.0, 1.0) * params[j].v_in;
        // v_c - r_line*i - v_bus = 0
        a[k + j][j] = 1.0;
        a[k + j][k + j] = -net.r_line[j];
        a[k + j][2 * k] = -1.0;
    }
    // sum i - v_bus/r_load = 0
    for j in 0..k {
        a[2 * k][k + j] = 1.0;
    }
    a[2 * k][2 * k] = -1.0 / net.r_load;

    let x = solve_linear(a, b)?;
    Ok(DcSolution {
        v_c: x[0..k].to_vec(),
        i_out: x[k..2 * k].to_vec(),
        v_bus: x[2 * k],
        duties: duties.iter().map(|d| d.clamp(0.0, 1.0)).collect(),
        v_restore: 0.0,
    })
}

/// Droop-side constants needed to pose the closed-loop steady state.
#[derive(Clone, Copy, Debug)]
pub struct DroopSteadyInputs {
    pub v_ref: f64,
    pub r_d: f64,
    pub k_share: f64,
}

/// Closed-loop steady state under droop + average-current sharing, with the
/// integrators settled (zero tracking error). `neighbors[j]` lists the
/// converters whose currents converter `j` averages with its own.
///
/// With `restoration` the shared reference lift is an extra unknown and the
/// bus is pinned at `v_ref`; without it the lift is zero.
pub fn dc_steady_state_closed_loop(
    droop: &DroopSteadyInputs,
    neighbors: &[Vec<usize>],
    params: &[ConverterParams],
    net: &NetworkParams,
    restoration: bool,
) -> Result<DcSolution> {
    let k = neighbors.len();
    if params.len() != k || net.r_line.len() != k {
        return Err(Error::config("dc oracle: mismatched array lengths"));
    }
    // Unknowns: v_c[0..k], i[0..k], v_bus, and optionally the restore lift.
    let n = 2 * k + 1 + usize::from(restoration);
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for j in 0..k {
        // v_c + r_d*i - k_share*(avg - i) = v_ref + lift
        a[j][j] = 1.0;
        a[j][k + j] += droop.r_d + droop.k_share;
        let m = 1.0 + neighbors[j].len() as f64;
        a[j][k + j] -= droop.k_share / m;
        for &s in &neighbors[j] {
            a[j][k + s] -= droop.k_share / m;
        }
        if restoration {
            a[j][2 * k + 1] = -1.0;
        }
        b[j] = droop.v_ref;
        // v_c - r_line*i - v_bus = 0
        a[k + j][j] = 1.0;
        a[k + j][k + j] = -net.r_line[j];
        a[k + j][2 * k] = -1.0;
    }
    for j in 0..k {
        a[2 * k][k + j] = 1.0;
    }
    a[2 * k][2 * k] = -1.0 / net.r_load;
    if restoration {
        // v_bus pinned to the nominal reference.
        a[2 * k + 1][2 * k] = 1.0;
        b[2 * k + 1] = droop.v_ref;
    }

    let x = solve_linear(a, b)?;
    let v_c = x[0..k].to_vec();
    let duties = v_c
        .iter()
        .zip(params)
        .map(|(v, p)| (v / p.v_in).clamp(0.0, 1.0))
        .collect();
    Ok(DcSolution {
        duties,
        i_out: x[k..2 * k].to_vec(),
        v_bus: x[2 * k],
        v_restore: if restoration { x[2 * k + 1] } else { 0.0 },
        v_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table1_net() -> NetworkParams {
        NetworkParams {
            r_line: vec![0.7, 0.6, 0.5, 0.4],
            r_load: 2.54,
        }
    }

    #[test]
    fn solve_bus_two_equal_converters() {
        let net = NetworkParams {
            r_line: vec![1.0, 1.0],
            r_load: 1.0,
        };
        let (v_bus, i_out) = solve_bus(&[3.0, 3.0], &net).unwrap();
        assert!((v_bus - 2.0).abs() < 1e-12);
        assert!((i_out[0] - 1.0).abs() < 1e-12);
        assert!((i_out[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_bus_single_converter_divider() {
        let net = NetworkParams {
            r_line: vec![0.5],
            r_load: 2.0,
        };
        let (v_bus, i_out) = solve_bus(&[40.0], &net).unwrap();
        assert!((v_bus - 32.0).abs() < 1e-12);
        assert!((i_out[0] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn solve_bus_open_load_carries_no_current() {
        let net = NetworkParams {
            r_line: vec![0.7, 0.6, 0.5, 0.4],
            r_load: 1e12,
        };
        let (v_bus, i_out) = solve_bus(&[40.0; 4], &net).unwrap();
        assert!((v_bus - 40.0).abs() < 1e-9);
        for i in i_out {
            assert!(i.abs() < 1e-9);
        }
    }

    #[test]
    fn solve_bus_rejects_non_finite() {
        let net = table1_net();
        assert!(solve_bus(&[f64::NAN, 1.0, 1.0, 1.0], &net).is_err());
    }

    proptest! {
        #[test]
        fn kcl_residual_below_1e9_relative(
            v in proptest::collection::vec(0.0f64..80.0, 4),
            r_load in 0.5f64..50.0,
        ) {
            let net = NetworkParams { r_line: vec![0.7, 0.6, 0.5, 0.4], r_load };
            let (v_bus, i_out) = solve_bus(&v, &net).unwrap();
            let total: f64 = i_out.iter().sum();
            let load = v_bus / net.r_load;
            let scale = load.abs().max(1.0);
            prop_assert!((total - load).abs() / scale < 1e-9);
        }
    }

    #[test]
    fn plant_step_equilibrium_is_fixed_point() {
        let params = [ConverterParams::default()];
        let net = NetworkParams {
            r_line: vec![0.5],
            r_load: 2.0,
        };
        // Pick v_c, derive the network current, then set i_l = i_out and
        // d = v_c/v_in so both derivatives vanish.
        let v_c = 40.0;
        let (_, i_out) = solve_bus(&[v_c], &net).unwrap();
        let mut states = [ConverterState { i_l: i_out[0], v_c }];
        let duties = [v_c / params[0].v_in];
        let before = states[0];
        plant_step(&mut states, &duties, &params, &net, 20e-6, 0, 0.5).unwrap();
        assert!((states[0].i_l - before.i_l).abs() < 1e-12);
        assert!((states[0].v_c - before.v_c).abs() < 1e-12);
    }

    #[test]
    fn zero_duty_discharges_monotonically() {
        let params = [ConverterParams::default()];
        let net = NetworkParams {
            r_line: vec![0.7],
            r_load: 2.54,
        };
        let mut states = [ConverterState { i_l: 0.0, v_c: 39.0 }];
        let mut prev = states[0].v_c;
        let mut reached_low = false;
        for step in 0..20_000 {
            plant_step(&mut states, &[0.0], &params, &net, 20e-6, step, 0.5).unwrap();
            if prev > 0.05 {
                assert!(
                    states[0].v_c <= prev + 1e-12,
                    "v_c rose during discharge at step {step}: {} -> {}",
                    prev,
                    states[0].v_c
                );
            }
            if states[0].v_c < 0.5 {
                reached_low = true;
                break;
            }
            prev = states[0].v_c;
        }
        assert!(reached_low, "capacitor never discharged: v_c={}", states[0].v_c);
    }

    #[test]
    fn energy_non_increasing_with_zero_duty() {
        let params = [ConverterParams::default(); 4];
        let net = table1_net();
        let mut states = [
            ConverterState { i_l: 3.0, v_c: 39.0 },
            ConverterState { i_l: 2.5, v_c: 38.5 },
            ConverterState { i_l: 4.0, v_c: 39.5 },
            ConverterState { i_l: 3.5, v_c: 38.8 },
        ];
        let mut prev = stored_energy(&states, &params);
        for step in 0..50_000 {
            plant_step(&mut states, &[0.0; 4], &params, &net, 20e-6, step, 0.5).unwrap();
            let e = stored_energy(&states, &params);
            assert!(e <= prev * (1.0 + 1e-12) + 1e-12, "energy rose at step {step}");
            prev = e;
        }
    }

    #[test]
    fn divergence_reports_step_index() {
        // An absurd load step far above v_in cannot happen physically, so
        // force divergence with a broken state instead.
        let params = [ConverterParams::default()];
        let net = NetworkParams {
            r_line: vec![0.5],
            r_load: 2.0,
        };
        let mut states = [ConverterState { i_l: 1e9, v_c: 790.0 }];
        let err = plant_step(&mut states, &[1.0], &params, &net, 20e-6, 7, 0.5).unwrap_err();
        match err {
            Error::SimFault { step, .. } => assert_eq!(step, 7),
            other => panic!("expected SimFault, got {other:?}"),
        }
    }

    #[test]
    fn dc_oracle_matches_solve_bus_examples() {
        // Same node voltages as the solve_bus unit cases, posed as duties.
        let params = [ConverterParams::default(); 2];
        let net = NetworkParams {
            r_line: vec![1.0, 1.0],
            r_load: 1.0,
        };
        let duties = [3.0 / 80.0, 3.0 / 80.0];
        let sol = dc_steady_state_from_duties(&duties, &params, &net).unwrap();
        let (v_bus, i_out) = solve_bus(&sol.v_c, &net).unwrap();
        assert!((sol.v_bus - v_bus).abs() < 1e-9);
        for (a, b) in sol.i_out.iter().zip(&i_out) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((sol.v_bus - 2.0).abs() < 1e-9);
    }

    #[test]
    fn dc_oracle_table1_all_forty_volts() {
        let params = [ConverterParams::default(); 4];
        let net = table1_net();
        let duties = [0.5; 4]; // 40 V nodes
        let sol = dc_steady_state_from_duties(&duties, &params, &net).unwrap();
        // Hand nodal value: 40 * 7.595238 / 7.988939
        assert!((sol.v_bus - 38.0288).abs() < 1e-3, "v_bus={}", sol.v_bus);
    }

    #[test]
    fn dc_oracle_symmetry_gives_equal_currents() {
        let params = [ConverterParams::default(); 3];
        let net = NetworkParams {
            r_line: vec![0.5; 3],
            r_load: 3.0,
        };
        let sol = dc_steady_state_from_duties(&[0.5; 3], &params, &net).unwrap();
        for w in sol.i_out.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_loop_oracle_pins_bus_with_restoration() {
        let params = [ConverterParams::default(); 4];
        let net = table1_net();
        let droop = DroopSteadyInputs {
            v_ref: 39.0,
            r_d: 0.2,
            k_share: 4.0,
        };
        let neighbors = vec![vec![3, 1], vec![0, 2], vec![1, 3], vec![2, 0]];
        let sol = dc_steady_state_closed_loop(&droop, &neighbors, &params, &net, true).unwrap();
        assert!((sol.v_bus - 39.0).abs() < 1e-9);
        let total: f64 = sol.i_out.iter().sum();
        assert!((total - 39.0 / 2.54).abs() < 1e-9);
        // Unequal lines with strong sharing: currents match within 10%.
        let mean = total / 4.0;
        for i in &sol.i_out {
            assert!((i - mean).abs() / mean < 0.10, "i={i} mean={mean}");
        }
    }

    #[test]
    fn closed_loop_oracle_without_restoration_sags() {
        let params = [ConverterParams::default(); 4];
        let net = table1_net();
        let droop = DroopSteadyInputs {
            v_ref: 39.0,
            r_d: 0.2,
            k_share: 4.0,
        };
        let neighbors = vec![vec![3, 1], vec![0, 2], vec![1, 3], vec![2, 0]];
        let sol = dc_steady_state_closed_loop(&droop, &neighbors, &params, &net, false).unwrap();
        assert!(sol.v_bus < 39.0);
        assert_eq!(sol.v_restore, 0.0);
    }
}
