use serde::{Deserialize, Serialize};

use crate::device::MDM_DEGREE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeSlot {
    pub lane: usize,
    /// Spatial mode index, TE0..TE3.
    pub mode: usize,
}

/// Placement of subarray groups on multimode computation waveguides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeAssignment {
    pub lanes: usize,
    pub groups: Vec<ModeSlot>,
}

pub fn assign_modes(groups: usize) -> Result<ModeAssignment> {
    if !(1..=64).contains(&groups) {
        return Err(Error::domain(format!("group count must be in 1..=64, got {groups}")));
    }
    Ok(ModeAssignment {
        lanes: groups.div_ceil(MDM_DEGREE),
        groups: (0..groups).map(|g| ModeSlot { lane: g / MDM_DEGREE, mode: g % MDM_DEGREE }).collect(),
    })
}
