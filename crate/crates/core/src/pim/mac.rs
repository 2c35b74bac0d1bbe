use serde::{Deserialize, Serialize};

use super::{GroupMacBatch, OutputTag, SafetyChecker};
use crate::device::{CellMode, OpcmCellModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Settings of one bank's aggregation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub adc_bits: u32,
    /// Analog sum mapped to the top ADC code, in units of integer products.
    pub adc_full_scale: f64,
    /// Bypass ADC quantization; sums stay exact integers.
    pub exact_mode: bool,
    /// Left shift applied to each TDM pass, in pass order.
    pub shifts: Vec<u32>,
    pub bias_correction: bool,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self { adc_bits: 5, adc_full_scale: 64.0 * 225.0, exact_mode: true, shifts: vec![0], bias_correction: true }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.adc_bits == 0 || self.adc_bits > 32 {
            return Err(Error::config(format!("adc_bits must be in 1..=32, got {}", self.adc_bits)));
        }
        if !(self.adc_full_scale > 0.0) {
            return Err(Error::config("adc_full_scale must be positive"));
        }
        Ok(())
    }

    pub fn max_code(&self) -> u64 {
        (1u64 << self.adc_bits) - 1
    }

    /// Analog value represented by an ADC code.
    pub fn reconstruct(&self, code: u64) -> f64 {
        if self.exact_mode {
            code as f64
        } else {
            code as f64 * self.adc_full_scale / self.max_code() as f64
        }
    }
}

/// Photodetected sum on one wavelength of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthSum<V> {
    pub wavelength: usize,
    pub tag: OutputTag,
    pub value: V,
    /// Sum of the drive amplitudes (or integer inputs) that reached this
    /// wavelength; the aggregation unit needs it to remove the cell offset.
    pub input_sum: V,
    pub contributors: usize,
}

fn accumulate<V: Copy>(
    batch: &GroupMacBatch,
    zero: V,
    mut product: impl FnMut(u8, u8) -> (V, V),
    add: impl Fn(V, V) -> V,
) -> Result<Vec<WavelengthSum<V>>> {
    let mut checker = SafetyChecker::default();
    checker.observe(batch).map_err(Error::Interference)?;
    let (lo, hi) = batch.span();
    let mut cells: Vec<Option<WavelengthSum<V>>> = vec![None; hi - lo];
    for d in &batch.drives {
        for (i, tag) in d.tags.iter().enumerate() {
            let Some(tag) = *tag else { continue };
            let w = d.offset + i;
            let (p, a) = product(d.stored[i], d.input.0[i]);
            let e = cells[w - lo].get_or_insert(WavelengthSum {
                wavelength: w,
                tag,
                value: zero,
                input_sum: zero,
                contributors: 0,
            });
            e.value = add(e.value, p);
            e.input_sum = add(e.input_sum, a);
            e.contributors += 1;
        }
    }
    Ok(cells.into_iter().flatten().collect())
}

/// Incoherent accumulation: each wavelength sums, over the subarrays that
/// drive it, cell transmission times drive amplitude. Amplitudes are the
/// input level over the top level of the cell.
pub fn interfere_mac<T: Scalar>(batch: &GroupMacBatch, cell: &OpcmCellModel<T>) -> Result<Vec<WavelengthSum<T>>> {
    let top = T::of(cell.max_level() as f64);
    let limit = cell.levels();
    let mut bad = None;
    let sums = accumulate(
        batch,
        T::ZERO,
        |s, x| {
            if u32::from(s) >= limit || u32::from(x) >= limit {
                bad = Some((s, x));
            }
            let amp = T::of(f64::from(x)) / top;
            (cell.transmission_unchecked(u32::from(s).min(limit - 1)) * amp, amp)
        },
        |a, b| a + b,
    )?;
    if let Some((s, x)) = bad {
        return Err(Error::domain(format!("levels ({s}, {x}) exceed a {}-bit cell", cell.bit_density)));
    }
    Ok(sums)
}

/// Integer form of [`interfere_mac`] in ideal mode, already rescaled by
/// `(2^b - 1)^2`: each wavelength carries `sum(stored * input)`.
pub fn interfere_mac_exact(batch: &GroupMacBatch) -> Result<Vec<WavelengthSum<u64>>> {
    accumulate(batch, 0u64, |s, x| (u64::from(s) * u64::from(x), u64::from(x)), |a, b| a + b)
}

/// Remove the crystalline transmission floor from physical-mode sums:
/// `(raw - t_c * sum(amplitude)) / contrast`. Ideal-mode sums pass through.
pub fn bias_correct<T: Scalar>(sums: &[WavelengthSum<T>], cell: &OpcmCellModel<T>) -> Vec<T> {
    match cell.mode {
        CellMode::Ideal => sums.iter().map(|s| s.value).collect(),
        CellMode::Physical => {
            let c = cell.contrast();
            sums.iter().map(|s| (s.value - cell.t_crystalline * s.input_sum) / c).collect()
        }
    }
}

/// Convert a nonnegative analog sum to an ADC code.
pub fn adc_quantize<T: Scalar>(value: T, config: &AggregationConfig) -> Result<u64> {
    let v = value.to_f64_lossy();
    if !(v >= 0.0) {
        return Err(Error::domain(format!("ADC input must be nonnegative, got {v}")));
    }
    if config.exact_mode {
        return Ok(v.round() as u64);
    }
    let max = config.max_code();
    let code = (v / config.adc_full_scale * max as f64).floor();
    Ok((code as u64).min(max))
}
