use serde::{Deserialize, Serialize};

/// Value-level view of the slot memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceState {
    pub k: usize,
    pub d: usize,
    /// Row-major `[k][d]`.
    pub slots: Vec<f64>,
    pub occupied: Vec<bool>,
    pub capacity_scale: f64,
}

/// Number of usable slots for a capacity scale: `round(k * scale)`, so
/// 0.25, 0.5 and 0.75 of four slots give 1, 2 and 3.
pub fn active_slots(k: usize, capacity_scale: f64) -> usize {
    ((k as f64 * capacity_scale.clamp(0.0, 1.0)).round() as usize).min(k)
}

/// Slot that receives the next write: the first empty active slot, else
/// slot 0. `None` when no slot is active.
pub fn write_target(occupied: &[bool], active: usize) -> Option<usize> {
    if active == 0 {
        return None;
    }
    Some(occupied[..active].iter().position(|o| !o).unwrap_or(0))
}

impl WorkspaceState {
    pub fn new(k: usize, d: usize, capacity_scale: f64) -> Self {
        Self {
            k,
            d,
            slots: vec![0.0; k * d],
            occupied: vec![false; k],
            capacity_scale,
        }
    }

    pub fn active(&self) -> usize {
        active_slots(self.k, self.capacity_scale)
    }

    pub fn slot(&self, i: usize) -> &[f64] {
        &self.slots[i * self.d..(i + 1) * self.d]
    }

    /// Flattened `k * d` vector and the `d`-dim mean over active slots.
    pub fn broadcast(&self) -> (Vec<f64>, Vec<f64>) {
        workspace_read(self)
    }
}

pub fn workspace_write(ws: &WorkspaceState, write_vec: &[f64]) -> WorkspaceState {
    assert_eq!(write_vec.len(), ws.d, "write vector length");
    let mut out = ws.clone();
    if let Some(i) = write_target(&ws.occupied, ws.active()) {
        out.slots[i * ws.d..(i + 1) * ws.d].copy_from_slice(write_vec);
        out.occupied[i] = true;
    }
    out
}

pub fn workspace_read(ws: &WorkspaceState) -> (Vec<f64>, Vec<f64>) {
    let active = ws.active();
    let mut summary = vec![0.0; ws.d];
    if active > 0 {
        for i in 0..active {
            for (s, v) in summary.iter_mut().zip(ws.slot(i)) {
                *s += v;
            }
        }
        summary.iter_mut().for_each(|s| *s /= active as f64);
    }
    (ws.slots.clone(), summary)
}
