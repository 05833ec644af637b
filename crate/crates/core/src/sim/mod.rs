//! 2D mass-spring simulation of voxel soft robots.
//!
//! Integration is semi-implicit Euler at a fixed substep: accelerations
//! update velocities, velocities update positions, and ground contact is
//! resolved by projection afterwards (penetrating masses move to the
//! surface, their inward normal velocity is zeroed, and a Coulomb friction
//! impulse caps the tangential velocity change). Every control action spans
//! a fixed number of substeps. All state is f64 and every loop runs in a
//! fixed order, so trajectories are bit-reproducible.

mod body;
mod episode;

pub use body::{Spring, Voxel};
pub use episode::{run_episode, EpisodeError, EpisodeResult, TrajectorySummary, EPISODE_STEPS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ObservationGrid, VoxelSignals, ACTUATION_MAX, ACTUATION_MIN};
use crate::env::{EnvInstance, Terrain, HEIGHT_MIN};
use crate::morphology::{MorphGenome, VoxelKind, GRID};

/// Terrain position index where rugged episodes start (inside the flat
/// platform, one cell of margin).
pub const START_POS_RUGGED: usize = 1;
/// Position where flat episodes start: the center of a 200-position plane.
pub const START_POS_FLAT: usize = 100;

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration substep in seconds.
    pub dt: f64,
    /// Substeps per control action.
    pub substeps: usize,
    /// Gravity magnitude, pulling along -y.
    pub gravity: f64,
    /// Voxel edge length in meters.
    pub voxel_size: f64,
    /// Mass of one voxel, split over its four corners.
    pub voxel_mass: f64,
    /// Structural and shear stiffness of soft and actuator voxels.
    pub stiffness_soft: f64,
    /// Stiffness of rigid voxels.
    pub stiffness_rigid: f64,
    /// Spring damping along the spring axis.
    pub damping: f64,
    /// Global velocity decay per second.
    pub velocity_damping: f64,
    /// Coulomb friction coefficient at ground contacts.
    pub friction: f64,
    /// Distance below which a mass counts as touching the ground.
    pub contact_eps: f64,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            dt: 1e-3,
            substeps: 10,
            gravity: 9.81,
            voxel_size: 0.1,
            voxel_mass: 0.04,
            stiffness_soft: 150.0,
            stiffness_rigid: 1500.0,
            damping: 0.6,
            velocity_damping: 0.4,
            friction: 0.5,
            contact_eps: 1e-9,
        }
    }
}

impl SimConfig {
    pub fn stiffness(&self, kind: VoxelKind) -> f64 {
        match kind {
            VoxelKind::Rigid => self.stiffness_rigid,
            _ => self.stiffness_soft,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("genome is not a valid body (size or connectivity)")]
    InvalidGenome,
    #[error("expected {expected} actions, got {got}")]
    ActionCount { got: usize, expected: usize },
    #[error("action {index} is {value}, outside [{ACTUATION_MIN}, {ACTUATION_MAX}]")]
    ActionOutOfRange { index: usize, value: f64 },
}

/// Ground elevation profile. Heightfields are staircases: one flat segment
/// per terrain position, clamped beyond both ends.
#[derive(Clone, Debug)]
pub enum GroundProfile {
    Flat { y: f64 },
    Heightfield { surface: Vec<f64>, cell: f64 },
}

impl GroundProfile {
    pub fn from_env(env: &EnvInstance, voxel_size: f64) -> GroundProfile {
        match &env.terrain {
            Some(terrain) => GroundProfile::from_terrain(terrain, voxel_size),
            None => GroundProfile::Flat {
                y: HEIGHT_MIN as f64 * voxel_size,
            },
        }
    }

    pub fn from_terrain(terrain: &Terrain, voxel_size: f64) -> GroundProfile {
        GroundProfile::Heightfield {
            surface: terrain
                .heights()
                .iter()
                .map(|&h| h as f64 * voxel_size)
                .collect(),
            cell: voxel_size,
        }
    }

    pub fn height_at(&self, x: f64) -> f64 {
        match self {
            GroundProfile::Flat { y } => *y,
            GroundProfile::Heightfield { surface, cell } => {
                let idx = (x / cell).floor();
                let idx = (idx.max(0.0) as usize).min(surface.len() - 1);
                surface[idx]
            }
        }
    }
}

#[derive(Debug)]
pub struct Sim {
    config: SimConfig,
    ground: GroundProfile,
    voxels: Vec<Voxel>,
    springs: Vec<Spring>,
    masses: Vec<f64>,
    inv_mass: Vec<f64>,
    pos: Vec<[f64; 2]>,
    vel: Vec<[f64; 2]>,
    /// Per-mass: touched the ground during the current control step.
    contact: Vec<bool>,
    forces: Vec<[f64; 2]>,
    grid_index: [[Option<usize>; GRID]; GRID],
    n_actions: usize,
    rest_area: f64,
    step_index: u32,
}

impl Sim {
    /// Builds the body and rests it on the ground: the leftmost occupied
    /// column sits at the environment's start position and the lowest corner
    /// row exactly touches the surface.
    pub fn new(
        genome: &MorphGenome,
        env: &EnvInstance,
        config: &SimConfig,
    ) -> Result<Sim, SimError> {
        if !genome.is_valid() {
            return Err(SimError::InvalidGenome);
        }
        let ground = GroundProfile::from_env(env, config.voxel_size);
        let start_pos = if env.terrain.is_some() {
            START_POS_RUGGED
        } else {
            START_POS_FLAT
        };
        let layout = body::build(genome, config);

        let min_col = genome.occupied().map(|(_, c, _)| c).min().unwrap();
        let max_row = genome.occupied().map(|(r, _, _)| r).max().unwrap();
        let start_x = start_pos as f64 * config.voxel_size;
        let ground_y = ground.height_at(start_x + 0.5 * config.voxel_size);
        // Local coordinates put vertex column c at c * s and the grid bottom
        // at y = 0; shift so the body's own bounding box lands at the start.
        let dx = start_x - min_col as f64 * config.voxel_size;
        let dy = ground_y - (GRID - (max_row + 1)) as f64 * config.voxel_size;

        let pos: Vec<[f64; 2]> = layout
            .positions
            .iter()
            .map(|&[x, y]| [x + dx, y + dy])
            .collect();
        let n = pos.len();
        let contact = pos
            .iter()
            .map(|&[x, y]| y - ground.height_at(x) <= config.contact_eps)
            .collect();
        let inv_mass = layout.masses.iter().map(|&m| 1.0 / m).collect();

        Ok(Sim {
            config: *config,
            ground,
            voxels: layout.voxels,
            springs: layout.springs,
            masses: layout.masses,
            inv_mass,
            pos,
            vel: vec![[0.0; 2]; n],
            contact,
            forces: vec![[0.0; 2]; n],
            grid_index: layout.grid_index,
            n_actions: layout.n_actions,
            rest_area: config.voxel_size * config.voxel_size,
            step_index: 0,
        })
    }

    pub fn num_masses(&self) -> usize {
        self.masses.len()
    }

    pub fn num_voxels(&self) -> usize {
        self.voxels.len()
    }

    pub fn num_actuators(&self) -> usize {
        self.n_actions
    }

    pub fn step_index(&self) -> u32 {
        self.step_index
    }

    pub fn springs(&self) -> &[Spring] {
        &self.springs
    }

    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.pos
    }

    pub fn ground(&self) -> &GroundProfile {
        &self.ground
    }

    /// Advances one control step: validates the actions, then runs the
    /// configured number of physics substeps. Contact flags are refreshed
    /// over this step.
    pub fn step(&mut self, actions: &[f64]) -> Result<(), SimError> {
        if actions.len() != self.n_actions {
            return Err(SimError::ActionCount {
                got: actions.len(),
                expected: self.n_actions,
            });
        }
        for (index, &value) in actions.iter().enumerate() {
            if !(ACTUATION_MIN..=ACTUATION_MAX).contains(&value) {
                return Err(SimError::ActionOutOfRange { index, value });
            }
        }
        self.contact.iter_mut().for_each(|c| *c = false);
        for _ in 0..self.config.substeps {
            self.substep(actions);
        }
        self.step_index += 1;
        Ok(())
    }

    fn substep(&mut self, actions: &[f64]) {
        let dt = self.config.dt;
        let g = self.config.gravity;

        for (i, f) in self.forces.iter_mut().enumerate() {
            *f = [0.0, -g * self.masses[i]];
        }
        for spring in &self.springs {
            let (a, b) = (spring.a, spring.b);
            let dx = self.pos[b][0] - self.pos[a][0];
            let dy = self.pos[b][1] - self.pos[a][1];
            let len = (dx * dx + dy * dy).sqrt();
            if len < 1e-12 {
                continue;
            }
            let (nx, ny) = (dx / len, dy / len);
            let rest = match spring.action {
                Some(slot) => spring.rest * actions[slot],
                None => spring.rest,
            };
            let v_rel = (self.vel[b][0] - self.vel[a][0]) * nx
                + (self.vel[b][1] - self.vel[a][1]) * ny;
            let f = spring.stiffness * (len - rest) + self.config.damping * v_rel;
            self.forces[a][0] += f * nx;
            self.forces[a][1] += f * ny;
            self.forces[b][0] -= f * nx;
            self.forces[b][1] -= f * ny;
        }

        let decay = 1.0 / (1.0 + self.config.velocity_damping * dt);
        for i in 0..self.pos.len() {
            self.vel[i][0] = (self.vel[i][0] + dt * self.forces[i][0] * self.inv_mass[i]) * decay;
            self.vel[i][1] = (self.vel[i][1] + dt * self.forces[i][1] * self.inv_mass[i]) * decay;
            self.pos[i][0] += dt * self.vel[i][0];
            self.pos[i][1] += dt * self.vel[i][1];
        }

        // Contact projection with Coulomb friction: the tangential speed
        // change is capped by friction times the normal impulse.
        for i in 0..self.pos.len() {
            let surface = self.ground.height_at(self.pos[i][0]);
            if self.pos[i][1] < surface {
                self.pos[i][1] = surface;
                let normal_impulse = if self.vel[i][1] < 0.0 {
                    let imp = -self.vel[i][1];
                    self.vel[i][1] = 0.0;
                    imp
                } else {
                    0.0
                };
                let max_tangential = self.config.friction * normal_impulse;
                let vx = self.vel[i][0];
                self.vel[i][0] = vx.signum() * (vx.abs() - max_tangential).max(0.0);
                self.contact[i] = true;
            } else if self.pos[i][1] - surface <= self.config.contact_eps {
                self.contact[i] = true;
            }
        }
    }

    /// Per-voxel signals for the controller: mean corner velocity, area
    /// ratio against rest, and whether any corner touched the ground during
    /// the last control step.
    pub fn observe(&self) -> ObservationGrid {
        let mut grid = ObservationGrid::default();
        for voxel in &self.voxels {
            let [tl, tr, bl, br] = voxel.corners;
            let mut vx = 0.0;
            let mut vy = 0.0;
            for &i in &voxel.corners {
                vx += self.vel[i][0];
                vy += self.vel[i][1];
            }
            let area = quad_area(self.pos[bl], self.pos[br], self.pos[tr], self.pos[tl]);
            grid.set(
                voxel.row,
                voxel.col,
                VoxelSignals {
                    vx: vx / 4.0,
                    vy: vy / 4.0,
                    volume: area / self.rest_area,
                    touch: voxel.corners.iter().any(|&i| self.contact[i]),
                },
            );
        }
        grid
    }

    /// Mass-weighted center of mass, x component.
    pub fn com_x(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &m) in self.masses.iter().enumerate() {
            num += m * self.pos[i][0];
            den += m;
        }
        num / den
    }

    /// Kinetic + gravitational + elastic energy under the given actions.
    /// Pass the neutral action (all 1.0) or an empty slice for passive
    /// bodies.
    pub fn mechanical_energy(&self, actions: &[f64]) -> f64 {
        let mut e = 0.0;
        for (i, &m) in self.masses.iter().enumerate() {
            let v2 = self.vel[i][0] * self.vel[i][0] + self.vel[i][1] * self.vel[i][1];
            e += 0.5 * m * v2 + m * self.config.gravity * self.pos[i][1];
        }
        for spring in &self.springs {
            let dx = self.pos[spring.b][0] - self.pos[spring.a][0];
            let dy = self.pos[spring.b][1] - self.pos[spring.a][1];
            let len = (dx * dx + dy * dy).sqrt();
            let rest = match spring.action {
                Some(slot) if slot < actions.len() => spring.rest * actions[slot],
                _ => spring.rest,
            };
            e += 0.5 * spring.stiffness * (len - rest) * (len - rest);
        }
        e
    }

    /// Voxel index at a grid cell, if occupied.
    pub fn voxel_at(&self, row: usize, col: usize) -> Option<usize> {
        self.grid_index[row][col]
    }
}

/// Shoelace area of a quad given counterclockwise in a y-up frame.
fn quad_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2], p3: [f64; 2]) -> f64 {
    let pts = [p0, p1, p2, p3];
    let mut acc = 0.0;
    for i in 0..4 {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % 4];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc.abs()
}
