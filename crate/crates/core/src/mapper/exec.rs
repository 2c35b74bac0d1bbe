//! Functional execution of mapping plans through the PIM compute model.

use super::plan::{ConvTiling, FcTiling, MappingPlan, TdmPass};
use super::quant::{auto_shift, requantize, LayerWeights, QTensor};
use crate::device::OpcmCellModel;
use crate::error::{Error, Result};
use crate::memory::MemoryGeometry;
use crate::pim::{
    adc_quantize, bias_correct, interfere_mac, interfere_mac_exact, AggregationConfig, Aggregator, GroupMacBatch,
    OutputTag, SafetyChecker, SubarrayDrive, WavelengthVector,
};

#[inline]
fn nibble(v: u16, index: u32, cell_bits: u32) -> u8 {
    ((v >> (index * cell_bits)) & ((1 << cell_bits) - 1)) as u8
}

/// Output of phase `phase` whose window covers column `x`, with the kernel
/// column it meets there.
fn covering_output(x: usize, t: &ConvTiling, phase: usize) -> Option<(usize, usize)> {
    let (s, p, kw, wo) = (t.stride, t.padding, t.kernel[1], t.output[1]);
    let reach = x + p;
    let lo = (reach + 1).saturating_sub(kw).div_ceil(s);
    let hi = (reach / s).min(wo.checked_sub(1)?);
    (lo..=hi).find(|xo| xo % t.phases == phase).map(|xo| (xo, reach - xo * s))
}

/// Visit the batches of a conv plan in slot order. Each batch is passed with
/// the shift of its TDM pass.
pub fn for_each_conv_batch(
    plan: &MappingPlan,
    geometry: &MemoryGeometry,
    x: &QTensor,
    w: &LayerWeights,
    mut f: impl FnMut(&GroupMacBatch, u32) -> Result<()>,
) -> Result<()> {
    let t = plan.conv.as_ref().ok_or_else(|| Error::mapping("plan is not a conv plan"))?;
    let tdm = plan.tdm.as_ref().expect("conv plans carry a TDM plan");
    let cb = geometry.bit_density;
    let [h, wdt, _] = t.input;
    let [_, kw, cig, co] = t.kernel;
    let kh = t.kernel[0];
    let [ho, wo, _] = t.output;
    let cog = co / t.groups;
    let l = t.lines_per_band;
    let positions = geometry.engines() * t.segments;
    let mut slot = 0u64;
    for (ly, &jobs_max) in t.layer_jobs.iter().enumerate() {
        let tiles: Vec<usize> = (ly * positions..((ly + 1) * positions).min(t.tiles)).collect();
        // Column coverage per (tile, phase) does not depend on the slot.
        let cover: Vec<Vec<Vec<Option<(usize, usize)>>>> = tiles
            .iter()
            .map(|&tile| {
                let x0 = (tile % t.col_tiles) * t.col_tile_width;
                let width = t.col_tile_width.min(wdt - x0);
                (0..t.phases).map(|ph| (x0..x0 + width).map(|xx| covering_output(xx, t, ph)).collect()).collect()
            })
            .collect();
        for pass in &tdm.passes {
            for i in 0..cog {
                for j in 0..jobs_max {
                    for phase in 0..t.phases {
                        let mut batches: Vec<GroupMacBatch> = Vec::new();
                        for (k, &tile) in tiles.iter().enumerate() {
                            let pos = tile - ly * positions;
                            let (engine, seg) = (pos / t.segments, pos % t.segments);
                            let ct = tile % t.col_tiles;
                            let band = (tile / t.col_tiles) % t.bands;
                            let chunk = (tile / (t.col_tiles * t.bands)) % t.chunks_per_group;
                            let g = tile / (t.col_tiles * t.bands * t.chunks_per_group);
                            let Some(&yo) = t.band_jobs[band].get(j) else { continue };
                            let oc = g * cog + i;
                            let y0 = band * l;
                            let c0 = chunk * t.channels_per_chunk;
                            let x0 = ct * t.col_tile_width;
                            let cov = &cover[k][phase];
                            let mut drives = Vec::new();
                            for dc in 0..t.channels_per_chunk.min(cig - c0) {
                                let ci = c0 + dc;
                                for dy in 0..l.min(h - y0) {
                                    let y = y0 + dy;
                                    let ky = (y + t.padding) as isize - (yo * t.stride) as isize;
                                    if ky < 0 || ky as usize >= kh {
                                        continue;
                                    }
                                    let ky = ky as usize;
                                    let n = cov.len();
                                    let mut stored = vec![0u8; n];
                                    let mut input = vec![0u8; n];
                                    let mut tags = vec![None; n];
                                    for (dx, c) in cov.iter().enumerate() {
                                        let Some((xo, kx)) = *c else { continue };
                                        stored[dx] = nibble(x.at(g * cig + ci, y, x0 + dx), pass.stored_nibble, cb);
                                        let wi = ((oc * cig + ci) * kh + ky) * kw + kx;
                                        input[dx] = nibble(w.weights[wi], pass.input_nibble, cb);
                                        tags[dx] = Some(OutputTag(((oc * ho + yo) * wo + xo) as u64));
                                    }
                                    if tags.iter().any(Option::is_some) {
                                        drives.push(SubarrayDrive {
                                            subarray: dy + l * dc,
                                            offset: seg * t.col_tile_width,
                                            stored,
                                            input: WavelengthVector(input),
                                            tags,
                                        });
                                    }
                                }
                            }
                            if drives.is_empty() {
                                continue;
                            }
                            let (bank, group) = (engine / geometry.group_count, engine % geometry.group_count);
                            match batches.iter_mut().find(|b| b.bank == bank && b.group == group) {
                                Some(b) => b.drives.extend(drives),
                                None => batches.push(GroupMacBatch { bank, group, slot, drives }),
                            }
                        }
                        for b in &batches {
                            f(b, pass.shift)?;
                        }
                        slot += 1;
                    }
                }
            }
        }
    }
    debug_assert_eq!(slot, plan.slot_count);
    Ok(())
}

/// Visit the batches of an FC plan in slot order.
pub fn for_each_fc_batch(
    plan: &MappingPlan,
    geometry: &MemoryGeometry,
    x: &QTensor,
    w: &LayerWeights,
    mut f: impl FnMut(&GroupMacBatch, u32) -> Result<()>,
) -> Result<()> {
    let t: &FcTiling = plan.fc.as_ref().ok_or_else(|| Error::mapping("plan is not an fc plan"))?;
    let tdm = plan.tdm.as_ref().expect("fc plans carry a TDM plan");
    let (s, c, cb) = (geometry.subarray_grid, geometry.cols_per_subarray, geometry.bit_density);
    let engines = geometry.engines();
    let mut slot = 0u64;
    for ly in 0..t.layers {
        for pass in &tdm.passes {
            let TdmPass { stored_nibble, input_nibble, shift } = *pass;
            for engine in 0..engines {
                let start = ly * engines * c + engine * c;
                let end = (start + c).min(t.columns);
                if start >= end {
                    break;
                }
                let drives: Vec<SubarrayDrive> = (0..s)
                    .filter_map(|sigma| {
                        let n = end - start;
                        let mut stored = vec![0u8; n];
                        let mut input = vec![0u8; n];
                        let mut tags = vec![None; n];
                        for (k, col) in (start..end).enumerate() {
                            let (o, slice) = (col / t.slices, col % t.slices);
                            let i = slice * s + sigma;
                            if i >= t.in_features {
                                continue;
                            }
                            stored[k] = nibble(w.weights[o * t.in_features + i], stored_nibble, cb);
                            input[k] = nibble(x.data[i], input_nibble, cb);
                            tags[k] = Some(OutputTag(o as u64));
                        }
                        tags.iter().any(Option::is_some).then_some(SubarrayDrive {
                            subarray: sigma,
                            offset: 0,
                            stored,
                            input: WavelengthVector(input),
                            tags,
                        })
                    })
                    .collect();
                let batch = GroupMacBatch {
                    bank: engine / geometry.group_count,
                    group: engine % geometry.group_count,
                    slot,
                    drives,
                };
                f(&batch, shift)?;
            }
            slot += 1;
        }
    }
    Ok(())
}

/// How wavelength sums are read out.
#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub exact_mode: bool,
    pub cell: OpcmCellModel<f64>,
    pub adc_bits: u32,
    /// Check the interference rule across the whole schedule, not just
    /// within each batch.
    pub full_safety_check: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { exact_mode: true, cell: OpcmCellModel::default(), adc_bits: 5, full_safety_check: true }
    }
}

/// Counters observed while executing a plan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub batches: u64,
    pub conversions: u64,
    pub products: u64,
}

/// Raw per-output sums `Σ q_x q_w` of one PIM layer, aggregated over
/// wavelengths, tiles and TDM passes.
pub fn execute_raw(
    plan: &MappingPlan,
    geometry: &MemoryGeometry,
    x: &QTensor,
    w: &LayerWeights,
    opts: &ExecOptions,
) -> Result<(Vec<i128>, ExecStats)> {
    let outputs = plan.writeback.element_count as usize;
    let mut agg = Aggregator::new(outputs);
    let mut stats = ExecStats::default();
    let mut checker = SafetyChecker::default();
    let top = f64::from(opts.cell.max_level());
    let adc = AggregationConfig {
        adc_bits: opts.adc_bits,
        adc_full_scale: (plan.max_contributors.max(1) as f64) * top * top,
        exact_mode: opts.exact_mode,
        shifts: plan.tdm.as_ref().map(|t| t.shifts()).unwrap_or_default(),
        bias_correction: true,
    };
    let mut visit = |b: &GroupMacBatch, shift: u32| -> Result<()> {
        if opts.full_safety_check {
            checker.observe(b).map_err(Error::Interference)?;
        }
        stats.batches += 1;
        stats.products += b.drives.iter().map(|d| d.tags.iter().flatten().count() as u64).sum::<u64>();
        if opts.exact_mode {
            for s in interfere_mac_exact(b)? {
                agg.add(s.tag, i128::from(s.value), shift)?;
                stats.conversions += 1;
            }
        } else {
            let sums = interfere_mac(b, &opts.cell)?;
            let corrected = bias_correct(&sums, &opts.cell);
            for (s, v) in sums.iter().zip(corrected) {
                let code = adc_quantize((v * top * top).max(0.0), &adc)?;
                agg.add(s.tag, adc.reconstruct(code).round() as i128, shift)?;
                stats.conversions += 1;
            }
        }
        Ok(())
    };
    if plan.conv.is_some() {
        for_each_conv_batch(plan, geometry, x, w, &mut visit)?;
    } else {
        for_each_fc_batch(plan, geometry, x, w, &mut visit)?;
    }
    Ok((agg.into_values(), stats))
}

/// Run a conv or FC layer on the substrate and finish it digitally: remove
/// the zero-point cross terms, add bias and requantize.
pub fn execute_pim_layer(
    plan: &MappingPlan,
    geometry: &MemoryGeometry,
    input: &QTensor,
    w: &LayerWeights,
    requant_shift: Option<u32>,
    opts: &ExecOptions,
) -> Result<(QTensor, ExecStats)> {
    let bits = plan.operand_bits;
    let x = input.convert_bits(bits);
    let (raw, stats) = execute_raw(plan, geometry, &x, w, opts)?;
    let (zx, zw) = (x.zero, w.zero);
    let to_i64 = |v: i128| i64::try_from(v).map_err(|_| Error::domain("accumulator exceeds 64 bits"));
    if let Some(t) = &plan.conv {
        let [kh, kw, cig, co] = t.kernel;
        let [h, wdt, _] = t.input;
        let [ho, wo, _] = t.output;
        let cog = co / t.groups;
        let shift = requant_shift.unwrap_or_else(|| auto_shift(bits, kh * kw * cig));
        let mut out = QTensor::zeros(t.output, bits, 1 << (bits - 1));
        for oc in 0..co {
            let g = oc / cog;
            for yo in 0..ho {
                let (ylo, yhi) = super::plan::clipped_window(yo, kh, t.stride, t.padding, h);
                for xo in 0..wo {
                    let (xlo, xhi) = super::plan::clipped_window(xo, kw, t.stride, t.padding, wdt);
                    let (mut sx, mut sw, mut n) = (0i64, 0i64, 0i64);
                    for ci in 0..cig {
                        for y in ylo..yhi {
                            let ky = y + t.padding - yo * t.stride;
                            for xx in xlo..xhi {
                                let kx = xx + t.padding - xo * t.stride;
                                sx += i64::from(x.at(g * cig + ci, y, xx));
                                sw += i64::from(w.weights[((oc * cig + ci) * kh + ky) * kw + kx]);
                                n += 1;
                            }
                        }
                    }
                    let e = (oc * ho + yo) * wo + xo;
                    let acc = to_i64(raw[e])? - zw * sx - zx * sw + n * zx * zw + w.bias[oc];
                    out.data[e] = requantize(acc, shift, bits);
                }
            }
        }
        Ok((out, stats))
    } else {
        let t = plan.fc.as_ref().ok_or_else(|| Error::mapping("plan has no PIM mapping"))?;
        let shift = requant_shift.unwrap_or_else(|| auto_shift(bits, t.in_features));
        let sx: i64 = x.data.iter().map(|&v| i64::from(v)).sum();
        let n = t.in_features as i64;
        let mut out = QTensor::zeros([1, 1, t.out_features], bits, 1 << (bits - 1));
        for o in 0..t.out_features {
            let sw: i64 = w.weights[o * t.in_features..(o + 1) * t.in_features].iter().map(|&v| i64::from(v)).sum();
            let acc = to_i64(raw[o])? - zw * sx - zx * sw + n * zx * zw + w.bias[o];
            out.data[o] = requantize(acc, shift, bits);
        }
        Ok((out, stats))
    }
}
