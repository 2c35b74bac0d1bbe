//! In-memory computation semantics: per-wavelength multiply through cell
//! transmission, same-wavelength accumulation across the subarrays of one
//! group, and the aggregation unit (bias correction, ADC, shift-and-add).

mod arith;
mod mac;
mod modes;
mod safety;

use serde::{Deserialize, Serialize};

pub use arith::{nibble_decompose, shift_add_combine, Aggregator};
pub use mac::{
    adc_quantize, bias_correct, interfere_mac, interfere_mac_exact, AggregationConfig, WavelengthSum,
};
pub use modes::{assign_modes, ModeAssignment, ModeSlot};
pub use safety::{check_interference_safety, SafetyChecker, ViolationReport};

/// Identity of the output element a product contributes to. Products may
/// share a wavelength sum only when their tags are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutputTag(pub u64);

impl std::fmt::Display for OutputTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Levels driven onto consecutive wavelengths by one subarray's MDLs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WavelengthVector(pub Vec<u8>);

impl WavelengthVector {
    pub fn validate(&self, columns: usize, bit_density: u32) -> crate::Result<()> {
        if self.0.len() > columns {
            return Err(crate::Error::domain(format!(
                "{} wavelengths exceed {columns} columns",
                self.0.len()
            )));
        }
        if self.0.iter().any(|&v| u32::from(v) >> bit_density != 0) {
            return Err(crate::Error::domain(format!("value exceeds {bit_density}-bit range")));
        }
        Ok(())
    }
}

/// One subarray's contribution to a slot: a window of its PIM-active cell
/// row starting at wavelength `offset`, the levels driven onto those
/// wavelengths, and the output each product belongs to (`None` = idle).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarrayDrive {
    pub subarray: usize,
    pub offset: usize,
    pub stored: Vec<u8>,
    pub input: WavelengthVector,
    pub tags: Vec<Option<OutputTag>>,
}

impl SubarrayDrive {
    /// Drive covering wavelengths `0..stored.len()`, every product tagged.
    pub fn dense(subarray: usize, stored: Vec<u8>, input: Vec<u8>, tags: Vec<OutputTag>) -> Self {
        Self {
            subarray,
            offset: 0,
            stored,
            input: WavelengthVector(input),
            tags: tags.into_iter().map(Some).collect(),
        }
    }

    fn len(&self) -> usize {
        self.stored.len()
    }
}

/// Everything one subarray group computes in one time slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMacBatch {
    pub bank: usize,
    pub group: usize,
    pub slot: u64,
    pub drives: Vec<SubarrayDrive>,
}

impl GroupMacBatch {
    pub fn validate(&self, columns: usize, bit_density: u32) -> crate::Result<()> {
        for d in &self.drives {
            if d.input.0.len() != d.len() || d.tags.len() != d.len() {
                return Err(crate::Error::domain("drive vectors differ in length"));
            }
            if d.offset + d.len() > columns {
                return Err(crate::Error::domain("drive runs past the last wavelength"));
            }
            d.input.validate(columns, bit_density)?;
            if d.stored.iter().any(|&v| u32::from(v) >> bit_density != 0) {
                return Err(crate::Error::domain(format!("stored level exceeds {bit_density}-bit range")));
            }
        }
        Ok(())
    }

    /// Half-open wavelength range touched by any drive.
    pub fn span(&self) -> (usize, usize) {
        let lo = self.drives.iter().map(|d| d.offset).min().unwrap_or(0);
        let hi = self.drives.iter().map(|d| d.offset + d.len()).max().unwrap_or(0);
        (lo, hi.max(lo))
    }
}
