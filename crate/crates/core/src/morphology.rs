//! Morphology genotypes: 5x5 grids of optional voxel kinds.
//!
//! A body is a connected patch of 5 to 25 voxels on a fixed 5x5 grid.
//! Row 0 is the top of the grid; cells are indexed row-major. Genomes
//! serialize to a 25-character string (`.RSHV`), which is the canonical
//! on-disk form.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Grid side length.
pub const GRID: usize = 5;
/// Number of grid cells.
pub const CELLS: usize = GRID * GRID;
/// Smallest body that stays in the population.
pub const MIN_VOXELS: usize = 5;
/// Largest body (the full grid).
pub const MAX_VOXELS: usize = CELLS;

const INIT_MIN: usize = 10;
const INIT_MAX: usize = 20;
const MAX_EDITS: usize = 3;
const MUTATE_RETRIES: usize = 100;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum VoxelKind {
    Rigid,
    SoftPassive,
    ActuatorHorizontal,
    ActuatorVertical,
}

impl VoxelKind {
    pub const ALL: [VoxelKind; 4] = [
        VoxelKind::Rigid,
        VoxelKind::SoftPassive,
        VoxelKind::ActuatorHorizontal,
        VoxelKind::ActuatorVertical,
    ];

    pub fn is_actuator(self) -> bool {
        matches!(
            self,
            VoxelKind::ActuatorHorizontal | VoxelKind::ActuatorVertical
        )
    }

    pub fn to_char(self) -> char {
        match self {
            VoxelKind::Rigid => 'R',
            VoxelKind::SoftPassive => 'S',
            VoxelKind::ActuatorHorizontal => 'H',
            VoxelKind::ActuatorVertical => 'V',
        }
    }

    pub fn from_char(ch: char) -> Option<VoxelKind> {
        match ch {
            'R' => Some(VoxelKind::Rigid),
            'S' => Some(VoxelKind::SoftPassive),
            'H' => Some(VoxelKind::ActuatorHorizontal),
            'V' => Some(VoxelKind::ActuatorVertical),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MorphError {
    #[error("genome string must be {CELLS} characters, got {0}")]
    BadLength(usize),
    #[error("genome string has invalid character {0:?} at cell {1}")]
    BadChar(char, usize),
}

/// A 5x5 body plan. `cells[r * GRID + c]`, row 0 at the top.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MorphGenome {
    cells: [Option<VoxelKind>; CELLS],
}

impl MorphGenome {
    pub fn from_cells(cells: [Option<VoxelKind>; CELLS]) -> MorphGenome {
        MorphGenome { cells }
    }

    pub fn cells(&self) -> &[Option<VoxelKind>; CELLS] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Option<VoxelKind> {
        self.cells[row * GRID + col]
    }

    pub fn count_voxels(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Occupied positions as (row, col) in row-major order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize, VoxelKind)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.map(|k| (i / GRID, i % GRID, k)))
    }

    /// Actuator positions as (row, col, kind), row-major. This is the action
    /// ordering used everywhere downstream.
    pub fn actuators(&self) -> impl Iterator<Item = (usize, usize, VoxelKind)> + '_ {
        self.occupied().filter(|(_, _, k)| k.is_actuator())
    }

    pub fn count_actuators(&self) -> usize {
        self.actuators().count()
    }

    /// Size within bounds and occupancy forms one orthogonally connected
    /// component.
    pub fn is_valid(&self) -> bool {
        let n = self.count_voxels();
        (MIN_VOXELS..=MAX_VOXELS).contains(&n) && self.is_connected()
    }

    /// Breadth-first search over orthogonal adjacency. An empty grid is
    /// vacuously connected (validity separately requires MIN_VOXELS).
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.cells.iter().position(|c| c.is_some()) else {
            return true;
        };
        let mut seen = [false; CELLS];
        let mut queue = vec![start];
        seen[start] = true;
        let mut reached = 0usize;
        while let Some(i) = queue.pop() {
            reached += 1;
            let (r, c) = (i / GRID, i % GRID);
            for (nr, nc) in orthogonal_neighbors(r, c) {
                let j = nr * GRID + nc;
                if self.cells[j].is_some() && !seen[j] {
                    seen[j] = true;
                    queue.push(j);
                }
            }
        }
        reached == self.count_voxels()
    }

    /// Grows a connected patch of 10 to 20 voxels with uniformly random
    /// kinds: one random start cell, then repeated uniform picks among the
    /// empty cells orthogonally adjacent to the patch.
    pub fn random_init(rng: &mut impl Rng) -> MorphGenome {
        let target = rng.gen_range(INIT_MIN..=INIT_MAX);
        let mut cells = [None; CELLS];
        let first = rng.gen_range(0..CELLS);
        cells[first] = Some(random_kind(rng));
        for _ in 1..target {
            let frontier: Vec<usize> = (0..CELLS)
                .filter(|&i| cells[i].is_none() && has_occupied_neighbor(&cells, i))
                .collect();
            let pick = frontier[rng.gen_range(0..frontier.len())];
            cells[pick] = Some(random_kind(rng));
        }
        MorphGenome { cells }
    }

    /// Applies 1 to 3 sequential edits (add / remove / change kind) and keeps
    /// the result only if it is a valid body. Invalid results retry the whole
    /// mutation with fresh randomness, up to a cap; a body that exhausts the
    /// cap is returned unchanged with a warning.
    pub fn mutate(&self, rng: &mut impl Rng) -> MorphGenome {
        for _ in 0..MUTATE_RETRIES {
            if let Some(child) = self.try_edits(rng) {
                if child.is_valid() {
                    return child;
                }
            }
        }
        log::warn!(
            "morphology mutation produced no valid child in {MUTATE_RETRIES} attempts; keeping parent"
        );
        *self
    }

    fn try_edits(&self, rng: &mut impl Rng) -> Option<MorphGenome> {
        let n_edits = rng.gen_range(1..=MAX_EDITS);
        let mut cells = self.cells;
        for _ in 0..n_edits {
            apply_random_edit(&mut cells, rng)?;
        }
        Some(MorphGenome { cells })
    }
}

fn random_kind(rng: &mut impl Rng) -> VoxelKind {
    VoxelKind::ALL[rng.gen_range(0..VoxelKind::ALL.len())]
}

fn orthogonal_neighbors(r: usize, c: usize) -> impl Iterator<Item = (usize, usize)> {
    const OFFSETS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    OFFSETS.iter().filter_map(move |&(dr, dc)| {
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        if (0..GRID as isize).contains(&nr) && (0..GRID as isize).contains(&nc) {
            Some((nr as usize, nc as usize))
        } else {
            None
        }
    })
}

fn has_occupied_neighbor(cells: &[Option<VoxelKind>; CELLS], i: usize) -> bool {
    orthogonal_neighbors(i / GRID, i % GRID).any(|(r, c)| cells[r * GRID + c].is_some())
}

/// One edit against the current (mid-sequence) occupancy. Returns None when
/// the chosen edit has no applicable site, which fails the whole attempt.
fn apply_random_edit(cells: &mut [Option<VoxelKind>; CELLS], rng: &mut impl Rng) -> Option<()> {
    match rng.gen_range(0..3u8) {
        0 => {
            // Add a voxel on the frontier.
            let frontier: Vec<usize> = (0..CELLS)
                .filter(|&i| cells[i].is_none() && has_occupied_neighbor(cells, i))
                .collect();
            if frontier.is_empty() {
                return None;
            }
            let pick = frontier[rng.gen_range(0..frontier.len())];
            cells[pick] = Some(random_kind(rng));
        }
        1 => {
            // Remove an occupied voxel.
            let occupied: Vec<usize> = (0..CELLS).filter(|&i| cells[i].is_some()).collect();
            if occupied.is_empty() {
                return None;
            }
            let pick = occupied[rng.gen_range(0..occupied.len())];
            cells[pick] = None;
        }
        _ => {
            // Change an occupied voxel to a different kind.
            let occupied: Vec<usize> = (0..CELLS).filter(|&i| cells[i].is_some()).collect();
            if occupied.is_empty() {
                return None;
            }
            let pick = occupied[rng.gen_range(0..occupied.len())];
            let current = cells[pick].unwrap();
            let others: Vec<VoxelKind> = VoxelKind::ALL
                .iter()
                .copied()
                .filter(|&k| k != current)
                .collect();
            cells[pick] = Some(others[rng.gen_range(0..others.len())]);
        }
    }
    Some(())
}

impl fmt::Display for MorphGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for cell in &self.cells {
            f.write_str(match cell {
                None => ".",
                Some(k) => match k {
                    VoxelKind::Rigid => "R",
                    VoxelKind::SoftPassive => "S",
                    VoxelKind::ActuatorHorizontal => "H",
                    VoxelKind::ActuatorVertical => "V",
                },
            })?;
        }
        Ok(())
    }
}

impl FromStr for MorphGenome {
    type Err = MorphError;

    /// Parses format only; semantic validity (size, connectivity) is
    /// `is_valid`, so invalid body plans remain representable.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != CELLS {
            return Err(MorphError::BadLength(chars.len()));
        }
        let mut cells = [None; CELLS];
        for (i, &ch) in chars.iter().enumerate() {
            cells[i] = match ch {
                '.' => None,
                _ => Some(VoxelKind::from_char(ch).ok_or(MorphError::BadChar(ch, i))?),
            };
        }
        Ok(MorphGenome { cells })
    }
}

impl Serialize for MorphGenome {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MorphGenome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn parse(s: &str) -> MorphGenome {
        s.parse().unwrap()
    }

    #[test]
    fn string_round_trip() {
        let s = "RS.HVS....RRRRR..S.V....H";
        assert_eq!(parse(s).to_string(), s);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert_eq!(
            "R".repeat(24).parse::<MorphGenome>(),
            Err(MorphError::BadLength(24))
        );
        let mut s = ".".repeat(25);
        s.replace_range(3..4, "X");
        assert_eq!(s.parse::<MorphGenome>(), Err(MorphError::BadChar('X', 3)));
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let mut rng = stream(11, &[0]);
        for _ in 0..50 {
            let g = MorphGenome::random_init(&mut rng);
            let json = serde_json::to_string(&g).unwrap();
            let back: MorphGenome = serde_json::from_str(&json).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn full_grid_is_valid() {
        assert!(parse(&"R".repeat(25)).is_valid());
    }

    #[test]
    fn diagonal_chain_is_not_connected() {
        let g = parse("R.....R....R....R....R...");
        assert_eq!(g.count_voxels(), 5);
        assert!(!g.is_connected());
        assert!(!g.is_valid());
    }

    #[test]
    fn four_in_a_row_is_too_small() {
        let g = parse("RRRR.....................");
        assert!(g.is_connected());
        assert!(!g.is_valid());
    }

    #[test]
    fn random_init_respects_size_and_connectivity() {
        for seed in 0..100u64 {
            let g = MorphGenome::random_init(&mut stream(seed, &[1]));
            let n = g.count_voxels();
            assert!((INIT_MIN..=INIT_MAX).contains(&n), "size {n}");
            assert!(g.is_valid());
        }
    }

    #[test]
    fn random_init_is_deterministic() {
        let a = MorphGenome::random_init(&mut stream(7, &[2]));
        let b = MorphGenome::random_init(&mut stream(7, &[2]));
        assert_eq!(a, b);
    }

    fn cell_diff(a: &MorphGenome, b: &MorphGenome) -> usize {
        a.cells()
            .iter()
            .zip(b.cells().iter())
            .filter(|(x, y)| x != y)
            .count()
    }

    #[test]
    fn mutation_closure_over_many_draws() {
        let mut rng = stream(3, &[4]);
        let mut parent = MorphGenome::random_init(&mut rng);
        for _ in 0..2000 {
            let child = parent.mutate(&mut rng);
            assert!(child.is_valid());
            assert!(
                cell_diff(&parent, &child) <= MAX_EDITS,
                "edit distance above cap"
            );
            parent = child;
        }
    }

    #[test]
    fn mutation_never_shrinks_below_minimum() {
        let g = parse("RRRRR....................");
        assert_eq!(g.count_voxels(), MIN_VOXELS);
        let mut rng = stream(9, &[5]);
        for _ in 0..500 {
            assert!(g.mutate(&mut rng).count_voxels() >= MIN_VOXELS);
        }
    }

    #[test]
    fn change_edit_always_picks_a_different_kind() {
        // On a 1-voxel grid only a change edit keeps the count at 1, so any
        // outcome with one voxel at the same cell must carry a new kind.
        let mut seen_change = false;
        for seed in 0..200u64 {
            let mut cells = [None; CELLS];
            cells[12] = Some(VoxelKind::SoftPassive);
            let mut r = stream(seed, &[7]);
            if apply_random_edit(&mut cells, &mut r).is_some()
                && cells.iter().filter(|c| c.is_some()).count() == 1
                && cells[12].is_some()
            {
                seen_change = true;
                assert_ne!(cells[12], Some(VoxelKind::SoftPassive));
            }
        }
        assert!(seen_change, "no change edit sampled in 200 seeds");
    }

    /// Independent connectivity oracle: union-find over orthogonal adjacency.
    fn union_find_connected(cells: &[Option<VoxelKind>; CELLS]) -> bool {
        let mut parent: Vec<usize> = (0..CELLS).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for r in 0..GRID {
            for c in 0..GRID {
                let i = r * GRID + c;
                if cells[i].is_none() {
                    continue;
                }
                for (nr, nc) in [(r + 1, c), (r, c + 1)] {
                    if nr < GRID && nc < GRID && cells[nr * GRID + nc].is_some() {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, nr * GRID + nc));
                        parent[a] = b;
                    }
                }
            }
        }
        let mut roots = std::collections::HashSet::new();
        for (i, cell) in cells.iter().enumerate() {
            if cell.is_some() {
                let root = find(&mut parent, i);
                roots.insert(root);
            }
        }
        roots.len() <= 1
    }

    #[test]
    fn connectivity_matches_union_find_on_all_3x3_patterns() {
        // Every occupancy pattern on the top-left 3x3 subgrid.
        for mask in 0u32..512 {
            let mut cells = [None; CELLS];
            for bit in 0..9 {
                if mask & (1 << bit) != 0 {
                    let (r, c) = (bit / 3, bit % 3);
                    cells[r * GRID + c] = Some(VoxelKind::Rigid);
                }
            }
            let g = MorphGenome::from_cells(cells);
            assert_eq!(
                g.is_connected(),
                union_find_connected(&cells),
                "disagreement on mask {mask:#011b}"
            );
        }
    }

    proptest! {
        #[test]
        fn prop_string_round_trip(s in "[.RSHV]{25}") {
            let g: MorphGenome = s.parse().unwrap();
            prop_assert_eq!(g.to_string(), s);
        }

        #[test]
        fn prop_mutate_stays_valid(seed in 0u64..5000) {
            let mut rng = stream(seed, &[8]);
            let parent = MorphGenome::random_init(&mut rng);
            let child = parent.mutate(&mut rng);
            prop_assert!(child.is_valid());
            prop_assert!(cell_diff(&parent, &child) <= MAX_EDITS);
        }
    }
}
