use serde::{Deserialize, Serialize};

use super::{EnvError, ObsTensor, CUE_DIM};

/// Where the cue channel of an observation is delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CueWiring {
    /// Cues stay in the trunk input; nothing is routed separately.
    Trunk,
    /// Strong-lesion wiring: cues are removed from the trunk input and
    /// delivered only to the workspace write path.
    WorkspaceOnly,
    /// Cues are removed and delivered nowhere. This is what a
    /// workspace-free agent sees on a strong-lesion task.
    Dropped,
}

/// Splits an observation into the trunk's view and the cue channel that
/// feeds the workspace write. With `Trunk` wiring the observation passes
/// through unchanged and the cue channel is empty.
pub fn strong_lesion_route(
    obs: &ObsTensor,
    wiring: CueWiring,
    has_workspace: bool,
) -> Result<(ObsTensor, Vec<f64>), EnvError> {
    match wiring {
        CueWiring::Trunk => Ok((obs.clone(), Vec::new())),
        CueWiring::WorkspaceOnly => {
            if !has_workspace {
                return Err(EnvError::NoWorkspace(wiring));
            }
            let mut trunk = obs.clone();
            trunk.cue = [0.0; CUE_DIM];
            Ok((trunk, obs.cue.to_vec()))
        }
        CueWiring::Dropped => {
            let mut trunk = obs.clone();
            trunk.cue = [0.0; CUE_DIM];
            Ok((trunk, Vec::new()))
        }
    }
}
