//! Mass-spring assembly of a body from its genome.
//!
//! Adjacent voxels share corner point masses: one mass per occupied grid
//! vertex, carrying a quarter of each adjacent voxel's mass. Every voxel
//! contributes its own 4 structural edge springs and 2 shear diagonals, so
//! an edge shared by two voxels carries two springs and stiffens naturally.
//! Actuator voxels scale the rest length of the two edges along their
//! actuated axis (top and bottom edges for horizontal actuators, left and
//! right for vertical ones); shear springs never change rest length.

use crate::morphology::{MorphGenome, VoxelKind, GRID};

use super::SimConfig;

#[derive(Clone, Copy, Debug)]
pub struct Voxel {
    pub row: usize,
    pub col: usize,
    pub kind: VoxelKind,
    /// Mass indices: top-left, top-right, bottom-left, bottom-right.
    pub corners: [usize; 4],
    /// Actuator slot in row-major actuator order, None for passive kinds.
    pub action: Option<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub rest: f64,
    pub stiffness: f64,
    pub shear: bool,
    /// Actuator slot whose factor scales this spring's rest length.
    pub action: Option<usize>,
}

pub struct BodyLayout {
    pub voxels: Vec<Voxel>,
    pub springs: Vec<Spring>,
    pub masses: Vec<f64>,
    /// Local vertex coordinates before world placement; x right, y up,
    /// bottom vertex row at y = 0.
    pub positions: Vec<[f64; 2]>,
    pub grid_index: [[Option<usize>; GRID]; GRID],
    pub n_actions: usize,
}

/// Builds the rest-shape assembly in local coordinates. Caller places it in
/// the world. Assumes a valid genome.
pub fn build(genome: &MorphGenome, config: &SimConfig) -> BodyLayout {
    let s = config.voxel_size;
    let verts = GRID + 1;

    // A vertex exists when at least one adjacent voxel is occupied.
    let mut vertex_id = vec![None; verts * verts];
    let mut masses = Vec::new();
    let mut positions = Vec::new();
    for vr in 0..verts {
        for vc in 0..verts {
            let mut m = 0.0;
            for (r, c) in adjacent_voxels(vr, vc) {
                if genome.get(r, c).is_some() {
                    m += config.voxel_mass / 4.0;
                }
            }
            if m > 0.0 {
                vertex_id[vr * verts + vc] = Some(masses.len());
                masses.push(m);
                // Row 0 is the top of the grid; flip so y grows upward.
                positions.push([vc as f64 * s, (GRID - vr) as f64 * s]);
            }
        }
    }

    let id = |vr: usize, vc: usize| vertex_id[vr * verts + vc].expect("corner of occupied voxel");

    let mut voxels = Vec::new();
    let mut springs = Vec::new();
    let mut grid_index = [[None; GRID]; GRID];
    let mut n_actions = 0;
    for (row, col, kind) in genome.occupied() {
        let corners = [
            id(row, col),         // top-left
            id(row, col + 1),     // top-right
            id(row + 1, col),     // bottom-left
            id(row + 1, col + 1), // bottom-right
        ];
        let action = if kind.is_actuator() {
            let slot = n_actions;
            n_actions += 1;
            Some(slot)
        } else {
            None
        };
        grid_index[row][col] = Some(voxels.len());
        voxels.push(Voxel {
            row,
            col,
            kind,
            corners,
            action,
        });

        let stiffness = config.stiffness(kind);
        let [tl, tr, bl, br] = corners;
        let (horizontal_action, vertical_action) = match kind {
            VoxelKind::ActuatorHorizontal => (action, None),
            VoxelKind::ActuatorVertical => (None, action),
            _ => (None, None),
        };
        let edge = |a, b, action| Spring {
            a,
            b,
            rest: s,
            stiffness,
            shear: false,
            action,
        };
        springs.push(edge(tl, tr, horizontal_action)); // top
        springs.push(edge(bl, br, horizontal_action)); // bottom
        springs.push(edge(tl, bl, vertical_action)); // left
        springs.push(edge(tr, br, vertical_action)); // right
        let diag = |a, b| Spring {
            a,
            b,
            rest: s * std::f64::consts::SQRT_2,
            stiffness,
            shear: true,
            action: None,
        };
        springs.push(diag(tl, br));
        springs.push(diag(tr, bl));
    }

    BodyLayout {
        voxels,
        springs,
        masses,
        positions,
        grid_index,
        n_actions,
    }
}

/// Voxel grid cells adjacent to vertex (vr, vc).
fn adjacent_voxels(vr: usize, vc: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(4);
    for r in [vr.checked_sub(1), (vr < GRID).then_some(vr)].into_iter().flatten() {
        for c in [vc.checked_sub(1), (vc < GRID).then_some(vc)].into_iter().flatten() {
            out.push((r, c));
        }
    }
    out
}
