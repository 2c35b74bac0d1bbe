use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time constants. None of these are characterized device values; they are
/// named assumptions kept in one place so sweeps can override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingParams {
    /// MDL modulation / readout rate; one PIM slot per cycle.
    pub pim_cycle_hz: f64,
    /// Duration of one OPCM programming pulse.
    pub opcm_write_pulse_ns: f64,
    /// Cells one subarray-row write programs per pulse. Four banks times
    /// sixteen groups times 64 cells keeps concurrent write power near 10 W.
    pub write_cells_per_row_pulse: usize,
    /// Latency of one (time-interleaved) ADC conversion.
    pub adc_conversion_ns: f64,
    /// One digital add in the aggregation unit.
    pub aggregation_add_ns: f64,
    /// Serialization to the E-O-E controller.
    pub eoe_transfer_ns_per_bit: f64,
    /// Parallel lanes of the E-O-E controller.
    pub eoe_lanes: usize,
    /// Digital nonlinearity / pooling per element per lane.
    pub nonlinearity_ns: f64,
    /// Receiver demodulation on a memory read.
    pub mem_read_ns: f64,
    /// Electro-optic MR switching.
    pub eo_switch_ns: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            pim_cycle_hz: 5e9,
            opcm_write_pulse_ns: 100.0,
            write_cells_per_row_pulse: 64,
            adc_conversion_ns: 1.0,
            aggregation_add_ns: 0.1,
            eoe_transfer_ns_per_bit: 0.01,
            eoe_lanes: 64,
            nonlinearity_ns: 0.5,
            mem_read_ns: 0.5,
            eo_switch_ns: 0.1,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        let floats = [
            ("pim_cycle_hz", self.pim_cycle_hz),
            ("opcm_write_pulse_ns", self.opcm_write_pulse_ns),
            ("adc_conversion_ns", self.adc_conversion_ns),
            ("aggregation_add_ns", self.aggregation_add_ns),
            ("eoe_transfer_ns_per_bit", self.eoe_transfer_ns_per_bit),
            ("nonlinearity_ns", self.nonlinearity_ns),
            ("mem_read_ns", self.mem_read_ns),
            ("eo_switch_ns", self.eo_switch_ns),
        ];
        for (name, v) in floats {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.write_cells_per_row_pulse == 0 || self.eoe_lanes == 0 {
            return Err(Error::config("write_cells_per_row_pulse and eoe_lanes must be positive"));
        }
        Ok(())
    }

    pub fn cycle_ns(&self) -> f64 {
        1e9 / self.pim_cycle_hz
    }
}
