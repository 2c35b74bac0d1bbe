//! Stored contents, PIM/memory partitioning and access accounting.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::path::{build_read_path, FloorplanParams, LightSource};
use super::{CellLocation, MemoryGeometry};
use crate::device::{EnergyParams, LossParams};
use crate::error::{Error, Result};
use crate::perf::TimingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowRole {
    PimActive,
    MemoryAvailable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingWrite {
    pub location: CellLocation,
    pub levels: Vec<u8>,
}

/// Per-bank role of every subarray row plus writes waiting on a PIM phase.
#[derive(Debug, Clone)]
pub struct BankState {
    pub rows: Vec<RowRole>,
    pub pending: VecDeque<PendingWrite>,
}

impl BankState {
    fn new(subarray_grid: usize) -> Self {
        Self { rows: vec![RowRole::MemoryAvailable; subarray_grid], pending: VecDeque::new() }
    }

    pub fn pim_active_rows(&self) -> usize {
        self.rows.iter().filter(|r| **r == RowRole::PimActive).count()
    }
}

type RowKey = (usize, usize, usize, usize);

/// Sparse cell contents (unwritten cells read as level 0) and bank states.
#[derive(Debug, Clone)]
pub struct MemoryState {
    geometry: MemoryGeometry,
    banks: Vec<BankState>,
    cells: HashMap<RowKey, Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AccessKind {
    Read { len: usize },
    Write { levels: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessOutcome {
    pub data: Option<Vec<u8>>,
    pub latency_ns: f64,
    pub energy_pj: f64,
    pub changed_cells: usize,
}

/// Parameters an access needs; all borrowed from the run configuration.
#[derive(Debug, Clone, Copy)]
pub struct AccessContext<'a> {
    pub loss: &'a LossParams,
    pub energy: &'a EnergyParams,
    pub timing: &'a TimingParams,
    pub floorplan: &'a FloorplanParams,
}

impl MemoryState {
    pub fn new(geometry: &MemoryGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry: geometry.clone(),
            banks: (0..geometry.banks).map(|_| BankState::new(geometry.subarray_grid)).collect(),
            cells: HashMap::new(),
        })
    }

    pub fn geometry(&self) -> &MemoryGeometry {
        &self.geometry
    }

    pub fn bank(&self, bank: usize) -> &BankState {
        &self.banks[bank]
    }

    /// Flag one subarray row per group as PIM-active in every bank. `phase`
    /// selects which row of each group (modulo the group height).
    pub fn begin_pim(&mut self, phase: usize) {
        let per_group = self.geometry.subarray_rows_per_group();
        for bank in &mut self.banks {
            bank.rows.fill(RowRole::MemoryAvailable);
            for g in 0..self.geometry.group_count {
                bank.rows[g * per_group + phase % per_group] = RowRole::PimActive;
            }
        }
    }

    /// Release the PIM rows and return the queued writes in arrival order.
    pub fn end_pim(&mut self) -> Vec<PendingWrite> {
        let mut drained = Vec::new();
        for bank in &mut self.banks {
            bank.rows.fill(RowRole::MemoryAvailable);
            drained.extend(bank.pending.drain(..));
        }
        drained
    }

    pub fn is_pim_active(&self, bank: usize, subarray_row: usize) -> bool {
        self.banks[bank].rows[subarray_row] == RowRole::PimActive
    }

    /// Queue a write behind the current PIM phase.
    pub fn enqueue_write(&mut self, location: CellLocation, levels: Vec<u8>) {
        self.banks[location.bank].pending.push_back(PendingWrite { location, levels });
    }

    pub fn stored_level(&self, loc: &CellLocation) -> u8 {
        self.cells
            .get(&(loc.bank, loc.subarray_row, loc.subarray_col, loc.row))
            .map_or(0, |r| r[loc.col])
    }
}

/// One read or write against main memory.
///
/// Reads return `len` levels starting at `location.col`; writes program the
/// given levels there. A PIM-active subarray row is refused with
/// [`Error::Conflict`] and left untouched.
pub fn mem_access(
    state: &mut MemoryState,
    location: &CellLocation,
    kind: &AccessKind,
    ctx: AccessContext<'_>,
) -> Result<AccessOutcome> {
    let g = state.geometry.clone();
    location.validate(&g)?;
    let span = match kind {
        AccessKind::Read { len } => *len,
        AccessKind::Write { levels } => levels.len(),
    };
    if span == 0 || location.col + span > g.cols_per_subarray {
        return Err(Error::domain(format!("access of {span} cells at {location} leaves the row")));
    }
    if state.is_pim_active(location.bank, location.subarray_row) {
        return Err(Error::Conflict { bank: location.bank, subarray_row: location.subarray_row });
    }
    let key = (location.bank, location.subarray_row, location.subarray_col, location.row);
    match kind {
        AccessKind::Read { len } => {
            let data = state
                .cells
                .get(&key)
                .map_or_else(|| vec![0; *len], |r| r[location.col..location.col + len].to_vec());
            let far = CellLocation { col: location.col + len - 1, ..*location };
            let path = build_read_path(&far, &g, LightSource::ExternalLaser, ctx.floorplan, ctx.loss)?;
            let latency_ns =
                path.propagation_ns(ctx.floorplan.group_index) + ctx.timing.eo_switch_ns + ctx.timing.mem_read_ns;
            Ok(AccessOutcome {
                data: Some(data),
                latency_ns,
                energy_pj: *len as f64 * ctx.energy.opcm_read_pj,
                changed_cells: 0,
            })
        }
        AccessKind::Write { levels } => {
            let max = 1u16 << g.bit_density;
            if levels.iter().any(|&l| u16::from(l) >= max) {
                return Err(Error::domain("write level exceeds the cell bit density"));
            }
            let row = state.cells.entry(key).or_insert_with(|| vec![0; g.cols_per_subarray]);
            let mut changed = 0usize;
            for (cell, &lvl) in row[location.col..].iter_mut().zip(levels) {
                if *cell != lvl {
                    *cell = lvl;
                    changed += 1;
                }
            }
            let pulses = changed.div_ceil(ctx.timing.write_cells_per_row_pulse);
            Ok(AccessOutcome {
                data: None,
                latency_ns: pulses as f64 * ctx.timing.opcm_write_pulse_ns,
                energy_pj: changed as f64 * ctx.energy.opcm_write_pj,
                changed_cells: changed,
            })
        }
    }
}

/// Stall-and-retry wrapper around [`mem_access`] for throughput runs.
///
/// On a conflict it charges `stall_ns`, lets `on_stall` advance the PIM
/// schedule (typically by calling [`MemoryState::end_pim`]) and retries, up
/// to `max_retries` times.
pub fn mem_access_with_stall(
    state: &mut MemoryState,
    location: &CellLocation,
    kind: &AccessKind,
    ctx: AccessContext<'_>,
    stall_ns: f64,
    max_retries: usize,
    mut on_stall: impl FnMut(&mut MemoryState),
) -> Result<AccessOutcome> {
    let mut waited = 0.0;
    for attempt in 0..=max_retries {
        match mem_access(state, location, kind, ctx) {
            Ok(mut out) => {
                out.latency_ns += waited;
                return Ok(out);
            }
            Err(Error::Conflict { .. }) if attempt < max_retries => {
                waited += stall_ns;
                on_stall(state);
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last attempt")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event: String,
    pub location: CellLocation,
    pub latency_ns: f64,
    pub energy_pj: f64,
}

/// Recorded memory events, exportable as CSV.
#[derive(Debug, Clone, Default)]
pub struct MemoryTrace {
    pub events: Vec<TraceEvent>,
}

impl MemoryTrace {
    pub fn record(&mut self, kind: &AccessKind, location: &CellLocation, outcome: &AccessOutcome) {
        let event = match kind {
            AccessKind::Read { .. } => "read",
            AccessKind::Write { .. } => "write",
        };
        self.events.push(TraceEvent {
            event: event.to_string(),
            location: *location,
            latency_ns: outcome.latency_ns,
            energy_pj: outcome.energy_pj,
        });
    }

    /// Columns: `event,location,latency_ns,energy_pj`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("event,location,latency_ns,energy_pj\n");
        for e in &self.events {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", e.event, e.location, e.latency_ns, e.energy_pj);
        }
        s
    }
}
