use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::MemoryGeometry;

/// Static and per-unit power draws. Defaults equal the shipped calibration
/// (`data/calibration.json`), which is fitted rather than measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerParams {
    pub external_laser_w: f64,
    pub mdl_mw_per_laser: f64,
    pub eo_tuning_mw_per_mr: f64,
    /// Electro-optic rings held on resonance per bank for memory access.
    pub memory_tuned_mrs_per_bank: usize,
    pub soa_count: usize,
    pub soa_bias_mw: f64,
    /// Aggregation cost of one multimode computation lane.
    pub aggregation_w_per_group_lane: f64,
    /// Mode/group demultiplexing cost, charged per `G * log2(G)` unit.
    pub demux_w_per_unit: f64,
    /// E-O-E controller power independent of the group count.
    pub eoe_interface_w: f64,
    pub eoe_w_per_group: f64,
    /// Partial-sum SRAM in the aggregation units.
    pub sram_w: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            external_laser_w: 1.5,
            mdl_mw_per_laser: 0.01,
            eo_tuning_mw_per_mr: 1.25,
            memory_tuned_mrs_per_bank: 64,
            soa_count: 16,
            soa_bias_mw: 50.0,
            aggregation_w_per_group_lane: 0.1,
            demux_w_per_unit: 0.15,
            eoe_interface_w: 1.0,
            eoe_w_per_group: 0.95,
            sram_w: 0.3,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.external_laser_w,
            self.mdl_mw_per_laser,
            self.eo_tuning_mw_per_mr,
            self.soa_bias_mw,
            self.aggregation_w_per_group_lane,
            self.demux_w_per_unit,
            self.eoe_interface_w,
            self.eoe_w_per_group,
            self.sram_w,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("power parameters must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// The shipped power calibration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub version: u32,
    pub description: String,
    pub target_total_w: f64,
    pub target_best_groups: usize,
    pub power: PowerParams,
}

const CALIBRATION_JSON: &str = include_str!("../../data/calibration.json");

impl Calibration {
    pub fn shipped() -> Self {
        serde_json::from_str(CALIBRATION_JSON).expect("shipped calibration parses")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let c: Calibration =
            serde_json::from_str(text).map_err(|e| Error::Parse { path: origin.into(), message: e.to_string() })?;
        c.power.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    MemoryOnly,
    PimOnly,
    #[default]
    Both,
}

/// Power per category in watts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub external_laser_w: f64,
    pub mdl_w: f64,
    pub eo_tuning_w: f64,
    pub soa_w: f64,
    pub aggregation_w: f64,
    pub eoe_w: f64,
}

impl PowerBreakdown {
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("external_laser", self.external_laser_w),
            ("mdl_array", self.mdl_w),
            ("eo_tuning", self.eo_tuning_w),
            ("soa", self.soa_w),
            ("aggregation", self.aggregation_w),
            ("eoe_interface", self.eoe_w),
        ]
    }

    pub fn total_w(&self) -> f64 {
        self.entries().iter().map(|(_, v)| v).sum()
    }
}

/// Power by category for the geometry's group count. A group count of zero
/// stands for a memory with PIM disabled.
pub fn power_breakdown(geometry: &MemoryGeometry, p: &PowerParams, mode: PowerMode) -> PowerBreakdown {
    let g = geometry.group_count as f64;
    let pim = mode != PowerMode::MemoryOnly && geometry.group_count > 0;
    let mem = mode != PowerMode::PimOnly;
    let banks = geometry.banks as f64;
    let (s, c) = (geometry.subarray_grid as f64, geometry.cols_per_subarray as f64);
    let on = |b: bool| if b { 1.0 } else { 0.0 };
    let lanes = geometry.group_count.div_ceil(crate::device::MDM_DEGREE) as f64;
    let demux = if g > 0.0 { g * g.log2() } else { 0.0 };
    PowerBreakdown {
        external_laser_w: on(mem) * p.external_laser_w,
        mdl_w: on(pim) * banks * g * s * c * p.mdl_mw_per_laser * 1e-3,
        eo_tuning_w: (on(mem) * banks * p.memory_tuned_mrs_per_bank as f64 + on(pim) * banks * g * s)
            * p.eo_tuning_mw_per_mr
            * 1e-3,
        soa_w: p.soa_count as f64 * p.soa_bias_mw * 1e-3,
        aggregation_w: on(pim) * (lanes * p.aggregation_w_per_group_lane + demux * p.demux_w_per_unit + p.sram_w),
        eoe_w: p.eoe_interface_w + on(pim) * g * p.eoe_w_per_group,
    }
}

/// One point of the grouping sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseRow {
    pub groups: usize,
    pub power_w: f64,
    pub normalized_power: f64,
    /// MACs per second with every engine busy.
    pub mac_throughput: f64,
    pub rows_available: usize,
    pub mac_per_watt: f64,
}

pub const DEFAULT_GROUP_CANDIDATES: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

/// Power, peak throughput and free memory rows for each group count.
pub fn dse_grouping(
    geometry: &MemoryGeometry,
    params: &PowerParams,
    pim_cycle_hz: f64,
    candidates: &[usize],
) -> Result<Vec<DseRow>> {
    use rayon::prelude::*;
    if candidates.is_empty() {
        return Err(Error::config("no group candidates"));
    }
    let mut rows = candidates
        .par_iter()
        .map(|&g| {
            let geo = geometry.with_groups(g);
            geo.validate().map_err(|e| Error::config(format!("group candidate {g}: {e}")))?;
            let power = power_breakdown(&geo, params, PowerMode::Both).total_w();
            let thr = (geo.banks * g * geo.subarray_grid * geo.cols_per_subarray) as f64 * pim_cycle_hz;
            Ok(DseRow {
                groups: g,
                power_w: power,
                normalized_power: 0.0,
                mac_throughput: thr,
                rows_available: geo.available_memory_rows(),
                mac_per_watt: thr / power,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let peak = rows.iter().map(|r| r.power_w).fold(0.0, f64::max);
    for r in &mut rows {
        r.normalized_power = r.power_w / peak;
    }
    Ok(rows)
}

/// Group count with the best MACs per watt; ties go to the fewer groups.
pub fn best_grouping(rows: &[DseRow]) -> Option<usize> {
    rows.iter()
        .fold(None::<&DseRow>, |best, r| match best {
            Some(b) if b.mac_per_watt >= r.mac_per_watt => Some(b),
            _ => Some(r),
        })
        .map(|r| r.groups)
}
