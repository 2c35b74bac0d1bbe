use serde::{Deserialize, Serialize};

use super::power::{power_breakdown, PowerBreakdown, PowerMode, PowerParams};
use super::TimingParams;
use crate::device::EnergyParams;
use crate::error::{Error, Result};
use crate::mapper::MappingPlan;
use crate::memory::MemoryGeometry;

/// Everything the accounting needs besides the plan.
#[derive(Debug, Clone, Default)]
pub struct PerfModels {
    pub geometry: MemoryGeometry,
    pub energy: EnergyParams,
    pub timing: TimingParams,
    pub power: PowerParams,
}

/// Energy per component in picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub opcm_read: f64,
    pub opcm_write: f64,
    pub adc: f64,
    pub dac: f64,
    pub mdl: f64,
    pub eo_tuning: f64,
    pub soa: f64,
    pub aggregation: f64,
    pub eoe: f64,
}

impl EnergyBreakdown {
    pub const NAMES: [&'static str; 9] =
        ["opcm_read", "opcm_write", "adc", "dac", "mdl", "eo_tuning", "soa", "aggregation", "eoe"];

    pub fn values(&self) -> [f64; 9] {
        [
            self.opcm_read,
            self.opcm_write,
            self.adc,
            self.dac,
            self.mdl,
            self.eo_tuning,
            self.soa,
            self.aggregation,
            self.eoe,
        ]
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }

    pub fn accumulate(&mut self, o: &EnergyBreakdown) {
        self.opcm_read += o.opcm_read;
        self.opcm_write += o.opcm_write;
        self.adc += o.adc;
        self.dac += o.dac;
        self.mdl += o.mdl;
        self.eo_tuning += o.eo_tuning;
        self.soa += o.soa;
        self.aggregation += o.aggregation;
        self.eoe += o.eoe;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: String,
    pub kind: String,
    pub operand_bits: u32,
    pub processing_latency_ns: f64,
    pub writeback_latency_ns: f64,
    pub energy: EnergyBreakdown,
    pub mac_count: u64,
    pub slot_count: u64,
    pub utilization: f64,
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        u64::BITS - (n - 1).leading_zeros()
    }
}

/// `(processing, writeback)` latency of one layer in nanoseconds.
///
/// Processing is the slot stream plus the tail of the last ADC conversion
/// and the adder tree that merges an output's partial sums. Writeback is
/// the E-O-E transfer and digital stage followed by programming the output
/// cells, `banks * groups * write_cells_per_row_pulse` cells per pulse.
pub fn layer_latency(plan: &MappingPlan, geometry: &MemoryGeometry, timing: &TimingParams) -> (f64, f64) {
    let processing = if plan.slot_count == 0 {
        0.0
    } else {
        plan.slot_count as f64 * timing.cycle_ns()
            + timing.adc_conversion_ns
            + f64::from(ceil_log2(plan.max_partials)) * timing.aggregation_add_ns
    };
    let wb = &plan.writeback;
    let lanes = timing.eoe_lanes as u64;
    let digital = wb.digital_elements.div_ceil(lanes) as f64 * timing.nonlinearity_ns
        + (wb.digital_elements * u64::from(plan.operand_bits)) as f64 * timing.eoe_transfer_ns_per_bit / lanes as f64;
    let per_pulse = (geometry.banks * geometry.group_count.max(1) * timing.write_cells_per_row_pulse) as u64;
    let pulses = wb.cells_to_program.div_ceil(per_pulse);
    (processing, digital + pulses as f64 * timing.opcm_write_pulse_ns)
}

/// Energy of one layer. Event energies come from the device table; powered
/// blocks are charged for the time they are active.
pub fn layer_energy(
    plan: &MappingPlan,
    geometry: &MemoryGeometry,
    energy: &EnergyParams,
    power: &PowerParams,
    timing: &TimingParams,
) -> EnergyBreakdown {
    let (proc_ns, wb_ns) = layer_latency(plan, geometry, timing);
    let pim = power_breakdown(geometry, power, PowerMode::PimOnly);
    let both = power_breakdown(geometry, power, PowerMode::Both);
    let mem = power_breakdown(geometry, power, PowerMode::MemoryOnly);
    let conv = plan.conversions as f64;
    let products = plan.products as f64;
    // W * ns = nJ; report pJ.
    let pj = |w: f64, ns: f64| w * ns * 1e3;
    let PowerBreakdown { mdl_w, aggregation_w, soa_w, eoe_w, .. } = both;
    EnergyBreakdown {
        opcm_read: products * energy.opcm_read_pj,
        opcm_write: plan.writeback.cells_to_program as f64 * energy.opcm_write_pj,
        adc: conv * energy.adc_pj_per_conversion(),
        dac: products * f64::from(geometry.bit_density) * energy.dac_pj_per_bit
            + conv * f64::from(energy.adc_bits) * energy.dac_pj_per_bit,
        mdl: pj(mdl_w, proc_ns),
        eo_tuning: pj(pim.eo_tuning_w, proc_ns) + pj(mem.eo_tuning_w, wb_ns),
        soa: pj(soa_w, proc_ns + wb_ns),
        aggregation: pj(aggregation_w, proc_ns) + conv * energy.sram_access_pj,
        eoe: pj(eoe_w, proc_ns + wb_ns),
    }
}

pub fn evaluate_plan(plan: &MappingPlan, m: &PerfModels) -> LayerResult {
    let (p, w) = layer_latency(plan, &m.geometry, &m.timing);
    LayerResult {
        layer: plan.layer.clone(),
        kind: plan.kind.clone(),
        operand_bits: plan.operand_bits,
        processing_latency_ns: p,
        writeback_latency_ns: w,
        energy: layer_energy(plan, &m.geometry, &m.energy, &m.power, &m.timing),
        mac_count: plan.mac_count,
        slot_count: plan.slot_count,
        utilization: plan.utilization,
    }
}

/// Whole-network totals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkTotals {
    pub processing_latency_ns: f64,
    pub writeback_latency_ns: f64,
    pub energy: EnergyBreakdown,
    pub mac_count: u64,
    pub slot_count: u64,
    /// `mac_count * operand_bits` summed over layers.
    pub bits_processed: u64,
}

impl NetworkTotals {
    pub fn from_results(results: &[LayerResult]) -> Self {
        let mut t = NetworkTotals::default();
        for r in results {
            t.processing_latency_ns += r.processing_latency_ns;
            t.writeback_latency_ns += r.writeback_latency_ns;
            t.energy.accumulate(&r.energy);
            t.mac_count += r.mac_count;
            t.slot_count += r.slot_count;
            t.bits_processed += r.mac_count * u64::from(r.operand_bits);
        }
        t
    }

    pub fn latency_ns(&self) -> f64 {
        self.processing_latency_ns + self.writeback_latency_ns
    }

    /// Processing time per MAC.
    pub fn processing_ns_per_mac(&self) -> f64 {
        self.processing_latency_ns / self.mac_count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub epb_j_per_bit: f64,
    pub fps: f64,
    pub fps_per_watt: f64,
}

/// Energy per bit (bits = MACs times operand width), frames per second for
/// one inference at a time, and frames per second per watt.
pub fn efficiency_metrics(totals: &NetworkTotals, power_w: f64) -> Result<Efficiency> {
    let latency_s = totals.latency_ns() * 1e-9;
    if !(latency_s > 0.0) || totals.bits_processed == 0 || !(power_w > 0.0) {
        return Err(Error::domain("efficiency needs nonzero latency, bits and power"));
    }
    let fps = 1.0 / latency_s;
    Ok(Efficiency {
        epb_j_per_bit: totals.energy.total() * 1e-12 / totals.bits_processed as f64,
        fps,
        fps_per_watt: fps / power_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{map_conv_layer, LayerSpec};

    fn models() -> PerfModels {
        PerfModels::default()
    }

    #[test]
    fn minimal_plan_latency() {
        let m = models();
        let plan = map_conv_layer(&LayerSpec::conv("c", [1, 1, 1, 1], 1, 0), [1, 1, 1], 4, &m.geometry).unwrap();
        assert_eq!(plan.slot_count, 1);
        let (p, _) = layer_latency(&plan, &m.geometry, &m.timing);
        assert!((p - (0.2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn read_energy_and_ratio() {
        let m = models();
        let mut plan = map_conv_layer(&LayerSpec::conv("c", [1, 1, 1, 1], 1, 0), [1, 1, 1], 4, &m.geometry).unwrap();
        plan.products = 1000;
        let e = layer_energy(&plan, &m.geometry, &m.energy, &m.power, &m.timing);
        assert!((e.opcm_read - 5000.0).abs() < 1e-9);
        assert_eq!(m.energy.opcm_write_pj / m.energy.opcm_read_pj, 50.0);
        assert!((e.total() - e.values().iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn writeback_scales_with_ofm() {
        let m = models();
        let a = map_conv_layer(&LayerSpec::conv("c", [3, 3, 8, 64], 1, 1), [64, 64, 8], 4, &m.geometry).unwrap();
        let b = map_conv_layer(&LayerSpec::conv("c", [3, 3, 8, 128], 1, 1), [64, 64, 8], 4, &m.geometry).unwrap();
        let ea = layer_energy(&a, &m.geometry, &m.energy, &m.power, &m.timing);
        let eb = layer_energy(&b, &m.geometry, &m.energy, &m.power, &m.timing);
        assert!((eb.opcm_write - 2.0 * ea.opcm_write).abs() < 1e-6);
        let wa = layer_latency(&a, &m.geometry, &m.timing).1;
        let wb = layer_latency(&b, &m.geometry, &m.timing).1;
        assert!((wb - 2.0 * wa).abs() < 1e-6);
    }

    #[test]
    fn efficiency_examples() {
        let mut t = NetworkTotals { processing_latency_ns: 1e6, bits_processed: 1_000_000_000, ..Default::default() };
        t.energy.opcm_read = 1e12;
        let e = efficiency_metrics(&t, 10.0).unwrap();
        assert!((e.epb_j_per_bit - 1e-9).abs() < 1e-21);
        let mut half = t.clone();
        half.processing_latency_ns /= 2.0;
        let h = efficiency_metrics(&half, 10.0).unwrap();
        assert!((h.fps - 2.0 * e.fps).abs() < 1e-9 && (h.fps_per_watt - 2.0 * e.fps_per_watt).abs() < 1e-9);
        assert!(efficiency_metrics(&NetworkTotals::default(), 1.0).is_err());
    }
}
