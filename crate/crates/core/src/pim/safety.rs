use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{GroupMacBatch, OutputTag};

/// First (group, wavelength, slot) where two different outputs met.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub bank: usize,
    pub group: usize,
    pub wavelength: usize,
    pub slot: u64,
    pub tags: (OutputTag, OutputTag),
}

impl std::fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "bank {} group {} wavelength {} slot {}: outputs {} and {} share one sum",
            self.bank, self.group, self.wavelength, self.slot, self.tags.0, self.tags.1
        )
    }
}

/// Incremental form of [`check_interference_safety`], for schedules that
/// are generated and consumed slot by slot.
#[derive(Debug, Default)]
pub struct SafetyChecker {
    seen: HashMap<(usize, usize, u64, usize), OutputTag>,
}

impl SafetyChecker {
    pub fn observe(&mut self, batch: &GroupMacBatch) -> Result<(), ViolationReport> {
        for d in &batch.drives {
            for (i, tag) in d.tags.iter().enumerate() {
                let Some(tag) = *tag else { continue };
                let w = d.offset + i;
                let prev = *self.seen.entry((batch.bank, batch.group, batch.slot, w)).or_insert(tag);
                if prev != tag {
                    return Err(ViolationReport {
                        bank: batch.bank,
                        group: batch.group,
                        wavelength: w,
                        slot: batch.slot,
                        tags: (prev, tag),
                    });
                }
            }
        }
        Ok(())
    }

    /// Forget everything; reuse between independent schedules.
    pub fn clear(&mut self) {
        self.seen.clear();
    }
}

/// Passes iff every (group, wavelength, slot) carries products of a single
/// output element.
pub fn check_interference_safety<'a, I>(schedule: I) -> Result<(), ViolationReport>
where
    I: IntoIterator<Item = &'a GroupMacBatch>,
{
    let mut checker = SafetyChecker::default();
    schedule.into_iter().try_for_each(|b| checker.observe(b))
}
