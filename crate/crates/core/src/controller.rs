//! The shared modular controller.
//!
//! One small network is instantiated at every actuator voxel of a body. Its
//! input is the local view of that voxel: the signals of the 3x3 Moore
//! neighborhood (own cell first, then the ring in row-major order; three
//! signals per cell), a periodic time signal, the voxel's own touch flag,
//! and optionally a goal-direction input. The output squashes to an
//! actuation factor in (0.6, 1.6) that scales the voxel's rest length along
//! its actuated axis.
//!
//! Parameters are a flat vector laid out as
//! `[W1 row-major (n_in x 10), b1 (10), W2 (10), b2 (1)]`, so a controller
//! is 321 numbers without the direction sensor and 331 with it. The flat
//! layout is what evolution mutates, what Bayesian optimization searches,
//! and what gradient learning updates; it round-trips exactly through JSON.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morphology::GRID;

/// Hidden layer width.
pub const HIDDEN: usize = 10;
/// Control steps per period of the time signal.
pub const TIME_PERIOD: u32 = 25;
/// Input count without the direction sensor: 9 cells x 3 signals + sin + cos
/// + own touch.
pub const INPUTS_BASE: usize = 30;
/// Lower bound of the actuation factor.
pub const ACTUATION_MIN: f64 = 0.6;
/// Upper bound of the actuation factor.
pub const ACTUATION_MAX: f64 = 1.6;

/// Whether controllers receive the goal direction as a 31st input.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    None,
    Direction,
}

impl SensorMode {
    pub fn input_count(self) -> usize {
        match self {
            SensorMode::None => INPUTS_BASE,
            SensorMode::Direction => INPUTS_BASE + 1,
        }
    }
}

/// Total parameter count for a sensor mode: n_in * 10 + 10 + 10 + 1.
pub fn param_count(sensor: SensorMode) -> usize {
    sensor.input_count() * HIDDEN + HIDDEN + HIDDEN + 1
}

/// Periodic time signal: c = step mod 25, angle = 2 pi c / 25, returned as
/// (sin, cos).
pub fn time_signal(step: u32) -> (f64, f64) {
    let c = (step % TIME_PERIOD) as f64;
    let angle = std::f64::consts::TAU * c / TIME_PERIOD as f64;
    (angle.sin(), angle.cos())
}

/// Per-voxel signals exposed to controllers: mean corner velocity, area
/// ratio against rest, and ground contact. Absent grid cells read as all
/// zeros.
#[derive(Clone, Copy, Default, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelSignals {
    pub vx: f64,
    pub vy: f64,
    pub volume: f64,
    pub touch: bool,
}

/// Snapshot of every grid cell's signals at one control step.
#[derive(Clone, Copy, Default, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationGrid {
    cells: [[Option<VoxelSignals>; GRID]; GRID],
}

impl ObservationGrid {
    pub fn set(&mut self, row: usize, col: usize, signals: VoxelSignals) {
        self.cells[row][col] = Some(signals);
    }

    /// Zero-extension: queries outside the grid or at empty cells return the
    /// all-zero signals.
    pub fn get(&self, row: isize, col: isize) -> VoxelSignals {
        if (0..GRID as isize).contains(&row) && (0..GRID as isize).contains(&col) {
            self.cells[row as usize][col as usize].unwrap_or_default()
        } else {
            VoxelSignals::default()
        }
    }

    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.cells[row][col].is_some()
    }
}

/// Moore ring offsets in row-major order (own cell excluded).
const RING: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Builds the input vector for the controller instance at `(row, col)`:
/// own signals first, then the ring row-major, three signals per cell, then
/// the time signal, the own touch flag, and the goal sign when the direction
/// sensor is on.
pub fn assemble_observation(
    grid: &ObservationGrid,
    row: usize,
    col: usize,
    step: u32,
    goal_sign: f64,
    sensor: SensorMode,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(sensor.input_count());
    let own = grid.get(row as isize, col as isize);
    out.extend_from_slice(&[own.vx, own.vy, own.volume]);
    for (dr, dc) in RING {
        let s = grid.get(row as isize + dr, col as isize + dc);
        out.extend_from_slice(&[s.vx, s.vy, s.volume]);
    }
    let (sin, cos) = time_signal(step);
    out.push(sin);
    out.push(cos);
    out.push(if own.touch { 1.0 } else { 0.0 });
    if sensor == SensorMode::Direction {
        out.push(goal_sign);
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { got: usize, expected: usize },
    #[error("observation vector has length {got}, expected {expected}")]
    ObservationLength { got: usize, expected: usize },
}

/// Flat parameter vector plus the sensor mode that fixes its layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    sensor: SensorMode,
    values: Vec<f64>,
}

impl ControllerParams {
    pub fn new(sensor: SensorMode, values: Vec<f64>) -> Result<ControllerParams, ControllerError> {
        let expected = param_count(sensor);
        if values.len() != expected {
            return Err(ControllerError::ParamLength {
                got: values.len(),
                expected,
            });
        }
        Ok(ControllerParams { sensor, values })
    }

    pub fn zeros(sensor: SensorMode) -> ControllerParams {
        ControllerParams {
            sensor,
            values: vec![0.0; param_count(sensor)],
        }
    }

    pub fn sensor(&self) -> SensorMode {
        self.sensor
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn n_inputs(&self) -> usize {
        self.sensor.input_count()
    }

    /// Index of W1[input i][hidden j] in the flat vector.
    #[inline]
    pub fn w1(&self, i: usize, j: usize) -> usize {
        i * HIDDEN + j
    }

    /// Index of b1[hidden j].
    #[inline]
    pub fn b1(&self, j: usize) -> usize {
        self.n_inputs() * HIDDEN + j
    }

    /// Index of W2[hidden j].
    #[inline]
    pub fn w2(&self, j: usize) -> usize {
        self.n_inputs() * HIDDEN + HIDDEN + j
    }

    /// Index of b2.
    #[inline]
    pub fn b2(&self) -> usize {
        self.n_inputs() * HIDDEN + HIDDEN + HIDDEN
    }

    /// One inference pass: ReLU hidden layer, sigmoid output, shifted into
    /// the actuation range as 0.6 + sigmoid(z).
    pub fn forward(&self, obs: &[f64]) -> Result<f64, ControllerError> {
        let n_in = self.n_inputs();
        if obs.len() != n_in {
            return Err(ControllerError::ObservationLength {
                got: obs.len(),
                expected: n_in,
            });
        }
        let w = &self.values;
        let mut z_out = w[self.b2()];
        for j in 0..HIDDEN {
            let mut z = w[self.b1(j)];
            for (i, &x) in obs.iter().enumerate() {
                z += x * w[self.w1(i, j)];
            }
            if z > 0.0 {
                z_out += z * w[self.w2(j)];
            }
        }
        Ok(ACTUATION_MIN + sigmoid(z_out))
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn param_counts_match_layout() {
        assert_eq!(param_count(SensorMode::None), 321);
        assert_eq!(param_count(SensorMode::Direction), 331);
    }

    #[test]
    fn time_signal_period_and_values() {
        assert_eq!(time_signal(0), (0.0, 1.0));
        assert_eq!(time_signal(25), (0.0, 1.0));
        assert_eq!(time_signal(7), time_signal(32));
        let (s, c) = time_signal(5);
        assert_relative_eq!(s, 0.95106, max_relative = 1e-4);
        assert_relative_eq!(c, 0.30902, max_relative = 1e-4);
        for k in 0..100 {
            let (s, c) = time_signal(k);
            assert_relative_eq!(s * s + c * c, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_params_yield_neutral_actuation() {
        let p = ControllerParams::zeros(SensorMode::None);
        let obs = vec![0.3; INPUTS_BASE];
        assert_eq!(p.forward(&obs).unwrap(), 0.6 + 0.5);
    }

    #[test]
    fn hand_wired_single_path() {
        // One input routed through one hidden unit with unit weights: the
        // output must be 0.6 + sigmoid(relu(1)).
        let mut p = ControllerParams::zeros(SensorMode::None);
        let (w1, w2) = (p.w1(0, 0), p.w2(0));
        p.values_mut()[w1] = 1.0;
        p.values_mut()[w2] = 1.0;
        let mut obs = vec![0.0; INPUTS_BASE];
        obs[0] = 1.0;
        let u = p.forward(&obs).unwrap();
        assert_relative_eq!(u, 1.3310585786300049, epsilon = 1e-12);
        assert_relative_eq!(u, 1.33106, max_relative = 1e-5);
    }

    #[test]
    fn negative_preactivation_is_gated_by_relu() {
        let mut p = ControllerParams::zeros(SensorMode::None);
        let (w1, w2) = (p.w1(0, 0), p.w2(0));
        p.values_mut()[w1] = 1.0;
        p.values_mut()[w2] = 5.0;
        let mut obs = vec![0.0; INPUTS_BASE];
        obs[0] = -2.0;
        assert_eq!(p.forward(&obs).unwrap(), 0.6 + 0.5);
    }

    #[test]
    fn output_always_inside_actuation_range() {
        let mut rng = stream(21, &[0]);
        for _ in 0..10_000 {
            let sensor = if rng.gen_bool(0.5) {
                SensorMode::None
            } else {
                SensorMode::Direction
            };
            let values: Vec<f64> = (0..param_count(sensor))
                .map(|_| rng.gen_range(-5.0..=5.0))
                .collect();
            let p = ControllerParams::new(sensor, values).unwrap();
            let obs: Vec<f64> = (0..sensor.input_count())
                .map(|_| rng.gen_range(-3.0..=3.0))
                .collect();
            // The sigmoid saturates to exactly 0.0 or 1.0 in f64, so the
            // closed interval is the honest invariant.
            let u = p.forward(&obs).unwrap();
            assert!((ACTUATION_MIN..=ACTUATION_MAX).contains(&u), "u = {u}");
        }
    }

    #[test]
    fn length_mismatches_are_rejected() {
        assert_eq!(
            ControllerParams::new(SensorMode::None, vec![0.0; 100]).unwrap_err(),
            ControllerError::ParamLength {
                got: 100,
                expected: 321
            }
        );
        let p = ControllerParams::zeros(SensorMode::Direction);
        assert_eq!(
            p.forward(&vec![0.0; 30]).unwrap_err(),
            ControllerError::ObservationLength {
                got: 30,
                expected: 31
            }
        );
    }

    /// Straight-line reimplementation of the forward pass used as an
    /// independent oracle.
    fn naive_forward(sensor: SensorMode, w: &[f64], obs: &[f64]) -> f64 {
        let n_in = sensor.input_count();
        let w1 = &w[0..n_in * HIDDEN];
        let b1 = &w[n_in * HIDDEN..n_in * HIDDEN + HIDDEN];
        let w2 = &w[n_in * HIDDEN + HIDDEN..n_in * HIDDEN + 2 * HIDDEN];
        let b2 = w[n_in * HIDDEN + 2 * HIDDEN];
        let mut z_out = b2;
        for j in 0..HIDDEN {
            let mut z = b1[j];
            for i in 0..n_in {
                z += obs[i] * w1[i * HIDDEN + j];
            }
            z_out += z.max(0.0) * w2[j];
        }
        0.6 + 1.0 / (1.0 + (-z_out).exp())
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        let mut rng = stream(22, &[1]);
        for _ in 0..100 {
            let sensor = if rng.gen_bool(0.5) {
                SensorMode::None
            } else {
                SensorMode::Direction
            };
            let values: Vec<f64> = (0..param_count(sensor))
                .map(|_| rng.gen_range(-2.0..=2.0))
                .collect();
            let obs: Vec<f64> = (0..sensor.input_count())
                .map(|_| rng.gen_range(-2.0..=2.0))
                .collect();
            let p = ControllerParams::new(sensor, values.clone()).unwrap();
            assert_relative_eq!(
                p.forward(&obs).unwrap(),
                naive_forward(sensor, &values, &obs),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn assemble_isolated_voxel_at_rest() {
        let mut grid = ObservationGrid::default();
        grid.set(
            2,
            2,
            VoxelSignals {
                vx: 0.0,
                vy: 0.0,
                volume: 1.0,
                touch: true,
            },
        );
        let obs = assemble_observation(&grid, 2, 2, 0, 1.0, SensorMode::None);
        assert_eq!(obs.len(), INPUTS_BASE);
        // Own cell: velocities zero, volume one.
        assert_eq!(&obs[0..3], &[0.0, 0.0, 1.0]);
        // Every neighbor slot zero.
        assert!(obs[3..27].iter().all(|&x| x == 0.0));
        // Time signal at k = 0, then touch.
        assert_eq!(&obs[27..30], &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn assemble_orders_ring_row_major() {
        let mut grid = ObservationGrid::default();
        let mut tag = 10.0;
        for r in 0..3 {
            for c in 0..3 {
                grid.set(
                    r,
                    c,
                    VoxelSignals {
                        vx: tag,
                        vy: 0.0,
                        volume: 1.0,
                        touch: false,
                    },
                );
                tag += 1.0;
            }
        }
        let obs = assemble_observation(&grid, 1, 1, 0, 1.0, SensorMode::None);
        // Own cell (tag 14) first, then the ring in row-major order.
        let vxs: Vec<f64> = (0..9).map(|i| obs[3 * i]).collect();
        assert_eq!(vxs, vec![14.0, 10.0, 11.0, 12.0, 13.0, 15.0, 16.0, 17.0, 18.0]);
    }

    #[test]
    fn direction_sensor_appends_goal_sign() {
        let grid = ObservationGrid::default();
        let obs = assemble_observation(&grid, 0, 0, 3, -1.0, SensorMode::Direction);
        assert_eq!(obs.len(), INPUTS_BASE + 1);
        assert_eq!(*obs.last().unwrap(), -1.0);
        let obs = assemble_observation(&grid, 0, 0, 3, 1.0, SensorMode::Direction);
        assert_eq!(*obs.last().unwrap(), 1.0);
    }

    #[test]
    fn edge_voxel_sees_zero_extension_outside_grid() {
        let mut grid = ObservationGrid::default();
        grid.set(
            0,
            0,
            VoxelSignals {
                vx: 1.0,
                vy: 2.0,
                volume: 1.5,
                touch: false,
            },
        );
        let obs = assemble_observation(&grid, 0, 0, 0, 1.0, SensorMode::None);
        // All ring cells are off-grid or empty.
        assert!(obs[3..27].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn params_serde_round_trip_is_exact() {
        let mut rng = stream(23, &[2]);
        let values: Vec<f64> = (0..param_count(SensorMode::Direction))
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        let p = ControllerParams::new(SensorMode::Direction, values).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: ControllerParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
