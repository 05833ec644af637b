//! Environments and their change across generations.
//!
//! Two families: rugged heightfields that drift generation to generation
//! under a change rate `c`, and a flat bidirectional task whose goal
//! direction alternates every generation. Terrain evolution works in delta
//! space: each height step of the previous terrain is preserved with
//! probability 1 - c, otherwise redrawn, and any delta that became invalid
//! against the new prefix is repaired by a uniform draw from the currently
//! valid options.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::SensorMode;

/// Number of terrain positions.
pub const TERRAIN_LEN: usize = 100;
/// Leading positions fixed at height 1 (the start platform).
pub const FLAT_PREFIX: usize = 10;
/// Inclusive height bounds, in voxel units.
pub const HEIGHT_MIN: i32 = 1;
pub const HEIGHT_MAX: i32 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("terrain must have {TERRAIN_LEN} heights, got {0}")]
    BadLength(usize),
    #[error("terrain height {value} at position {pos} outside [{HEIGHT_MIN}, {HEIGHT_MAX}]")]
    HeightOutOfBounds { pos: usize, value: i32 },
    #[error("terrain position {0} breaks the flat start platform")]
    BrokenPrefix(usize),
    #[error("terrain step of {delta} at position {pos} exceeds unit height")]
    StepTooLarge { pos: usize, delta: i32 },
    #[error("terrain has consecutive steps at positions {0} and {1}")]
    ConsecutiveSteps(usize, usize),
    #[error("environment for generation {0} needs the previous terrain")]
    MissingPrev(u32),
}

/// A rugged heightfield: integer heights in voxel units, one per position.
/// Serializes as a bare JSON array of 100 integers.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<i32>", into = "Vec<i32>")]
pub struct Terrain {
    heights: Vec<i32>,
}

impl Terrain {
    /// Validates every structural invariant: length, the flat start
    /// platform, height bounds, unit steps, and no two consecutive steps.
    pub fn new(heights: Vec<i32>) -> Result<Terrain, EnvError> {
        if heights.len() != TERRAIN_LEN {
            return Err(EnvError::BadLength(heights.len()));
        }
        for (pos, &h) in heights.iter().enumerate() {
            if !(HEIGHT_MIN..=HEIGHT_MAX).contains(&h) {
                return Err(EnvError::HeightOutOfBounds { pos, value: h });
            }
            if pos < FLAT_PREFIX && h != HEIGHT_MIN {
                return Err(EnvError::BrokenPrefix(pos));
            }
        }
        let mut last_step: Option<usize> = None;
        for pos in 1..TERRAIN_LEN {
            let delta = heights[pos] - heights[pos - 1];
            if delta.abs() > 1 {
                return Err(EnvError::StepTooLarge { pos, delta });
            }
            if delta != 0 {
                if let Some(prev) = last_step {
                    if prev + 1 == pos {
                        return Err(EnvError::ConsecutiveSteps(prev, pos));
                    }
                }
                last_step = Some(pos);
            }
        }
        Ok(Terrain { heights })
    }

    pub fn heights(&self) -> &[i32] {
        &self.heights
    }
}

impl TryFrom<Vec<i32>> for Terrain {
    type Error = EnvError;
    fn try_from(v: Vec<i32>) -> Result<Terrain, EnvError> {
        Terrain::new(v)
    }
}

impl From<Terrain> for Vec<i32> {
    fn from(t: Terrain) -> Vec<i32> {
        t.heights
    }
}

/// Deltas valid at a position given the running height and whether the
/// previous position already stepped. Never empty: 0 is always allowed.
fn valid_deltas(height: i32, prev_stepped: bool) -> Vec<i32> {
    let mut out = vec![0];
    if !prev_stepped {
        if height > HEIGHT_MIN {
            out.insert(0, -1);
        }
        if height < HEIGHT_MAX {
            out.push(1);
        }
    }
    out
}

fn pick(rng: &mut impl Rng, options: &[i32]) -> i32 {
    options[rng.gen_range(0..options.len())]
}

/// Walks left to right from the flat platform choosing each delta uniformly
/// among the currently valid options.
pub fn gen_initial_terrain(rng: &mut impl Rng) -> Terrain {
    let mut heights = vec![HEIGHT_MIN; TERRAIN_LEN];
    let mut prev_stepped = false;
    for pos in FLAT_PREFIX..TERRAIN_LEN {
        let h = heights[pos - 1];
        let delta = pick(rng, &valid_deltas(h, prev_stepped));
        heights[pos] = h + delta;
        prev_stepped = delta != 0;
    }
    Terrain::new(heights).expect("generated terrain violates its own invariants")
}

/// Branch statistics from one terrain evolution, for auditing the change
/// rate: how often the preserve branch was taken out of all positions.
#[derive(Clone, Copy, Default, Debug)]
pub struct EvolveStats {
    pub positions: usize,
    pub preserved: usize,
}

/// Evolves `prev` under change rate `c`. Each of the previous terrain's
/// deltas survives with probability 1 - c; redrawn deltas sample the valid
/// set directly, so only preserved deltas can need repair.
pub fn evolve_terrain_with_stats(
    prev: &Terrain,
    c: f64,
    rng: &mut impl Rng,
) -> (Terrain, EvolveStats) {
    let mut stats = EvolveStats::default();
    let mut heights = vec![HEIGHT_MIN; TERRAIN_LEN];
    let mut prev_stepped = false;
    for pos in FLAT_PREFIX..TERRAIN_LEN {
        let h = heights[pos - 1];
        let options = valid_deltas(h, prev_stepped);
        let preserve = rng.gen_bool(1.0 - c);
        stats.positions += 1;
        let mut delta = if preserve {
            stats.preserved += 1;
            prev.heights[pos] - prev.heights[pos - 1]
        } else {
            pick(rng, &options)
        };
        if !options.contains(&delta) {
            delta = pick(rng, &options);
        }
        heights[pos] = h + delta;
        prev_stepped = delta != 0;
    }
    let terrain = Terrain::new(heights).expect("evolved terrain violates its own invariants");
    (terrain, stats)
}

pub fn evolve_terrain(prev: &Terrain, c: f64, rng: &mut impl Rng) -> Terrain {
    evolve_terrain_with_stats(prev, c, rng).0
}

/// How environments change over a run.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSchedule {
    /// Rugged heightfields drifting at change rate `c` per generation.
    Rugged { c: f64 },
    /// Flat ground, goal direction alternating each generation (rightward
    /// first), optionally exposed to controllers as an input.
    Bidirectional { sensor: SensorMode },
    /// Flat ground, rightward goal every generation.
    StaticFlat,
}

/// Ground profile plus task framing for one generation.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct EnvInstance {
    /// Heightfield for rugged environments; None means unbounded flat ground
    /// at height 1.
    pub terrain: Option<Terrain>,
    /// +1.0 rightward, -1.0 leftward.
    pub goal_sign: f64,
    pub sensor: SensorMode,
}

/// Environment for generation `g`. Rugged schedules need the previous
/// instance for g > 0; the other schedules are memoryless.
pub fn env_for_generation(
    schedule: &EnvSchedule,
    g: u32,
    prev: Option<&EnvInstance>,
    rng: &mut impl Rng,
) -> Result<EnvInstance, EnvError> {
    match schedule {
        EnvSchedule::Rugged { c } => {
            let terrain = if g == 0 {
                gen_initial_terrain(rng)
            } else {
                let prev_terrain = prev
                    .and_then(|e| e.terrain.as_ref())
                    .ok_or(EnvError::MissingPrev(g))?;
                evolve_terrain(prev_terrain, *c, rng)
            };
            Ok(EnvInstance {
                terrain: Some(terrain),
                goal_sign: 1.0,
                sensor: SensorMode::None,
            })
        }
        EnvSchedule::Bidirectional { sensor } => Ok(EnvInstance {
            terrain: None,
            goal_sign: if g.is_multiple_of(2) { 1.0 } else { -1.0 },
            sensor: *sensor,
        }),
        EnvSchedule::StaticFlat => Ok(EnvInstance {
            terrain: None,
            goal_sign: 1.0,
            sensor: SensorMode::None,
        }),
    }
}
