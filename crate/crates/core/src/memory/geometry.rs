use serde::{Deserialize, Serialize};

use crate::device::MDM_DEGREE;
use crate::error::{Error, Result};

/// Physical organization of the OPCM main memory.
///
/// Each bank holds an `S x S` grid of subarrays; each subarray an `R x C`
/// cell array. Subarray rows are split evenly into `group_count` groups and
/// one subarray row per group can run PIM at a time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryGeometry {
    pub banks: usize,
    pub subarray_grid: usize,
    pub rows_per_subarray: usize,
    pub cols_per_subarray: usize,
    pub bit_density: u32,
    pub group_count: usize,
}

impl Default for MemoryGeometry {
    fn default() -> Self {
        Self {
            banks: 4,
            subarray_grid: 64,
            rows_per_subarray: 256,
            cols_per_subarray: 512,
            bit_density: 4,
            group_count: 16,
        }
    }
}

impl MemoryGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.banks == 0 || self.banks > MDM_DEGREE {
            return Err(Error::config(format!(
                "banks must be in 1..={MDM_DEGREE} (one mode per bank), got {}",
                self.banks
            )));
        }
        if self.subarray_grid == 0 || self.rows_per_subarray == 0 || self.cols_per_subarray == 0 {
            return Err(Error::config("geometry dimensions must be positive"));
        }
        if self.bit_density == 0 || self.bit_density > 8 {
            return Err(Error::config("bit_density must be in 1..=8"));
        }
        if self.group_count == 0
            || self.group_count > self.subarray_grid
            || !self.subarray_grid.is_multiple_of(self.group_count)
        {
            return Err(Error::config(format!(
                "group_count {} must evenly divide the {} subarray rows",
                self.group_count, self.subarray_grid
            )));
        }
        Ok(())
    }

    pub fn with_groups(&self, group_count: usize) -> Self {
        Self { group_count, ..self.clone() }
    }

    /// `B · S² · R · C · bit_density`.
    pub fn capacity_bits(&self) -> u64 {
        (self.banks * self.subarray_grid * self.subarray_grid) as u64
            * (self.rows_per_subarray * self.cols_per_subarray) as u64
            * u64::from(self.bit_density)
    }

    pub fn subarray_rows_per_group(&self) -> usize {
        self.subarray_grid / self.group_count
    }

    pub fn group_of_subarray_row(&self, subarray_row: usize) -> usize {
        subarray_row / self.subarray_rows_per_group()
    }

    /// Independent PIM engines: one active subarray row per group per bank.
    pub fn engines(&self) -> usize {
        self.banks * self.group_count
    }

    /// Subarray rows left for ordinary reads and writes while PIM runs.
    pub fn available_memory_rows(&self) -> usize {
        self.subarray_grid - self.group_count
    }
}

/// Free-function form of [`MemoryGeometry::capacity_bits`].
pub fn capacity_bits(geometry: &MemoryGeometry) -> u64 {
    geometry.capacity_bits()
}

pub fn available_memory_rows(geometry: &MemoryGeometry) -> usize {
    geometry.available_memory_rows()
}
