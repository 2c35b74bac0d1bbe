//! Lowering of layers onto the PIM substrate.
//!
//! Conv layers are input stationary. A feature map line `(c, y)` lives in
//! one subarray; a *tile* is a band of `L` consecutive lines by `Cs`
//! channels by a column window of width `Wt`, placed so that line
//! `(y0 + dy, c0 + dc)` sits in subarray `dy + L * dc` and column `x` on
//! wavelength `q * Wt + (x - x0)` of segment `q`. Tiles fill the
//! `engines * segments` positions of one cell row, then move to the next.
//!
//! All engines advance in lockstep through slots indexed by
//! `(cell row, TDM pass, output channel, output row job, column phase)`.
//! In a slot each tile drives, on every wavelength, the kernel weight that
//! pairs its stored pixel with the single output of the current phase
//! whose window covers it. Outputs of one phase are at least `k_w` columns
//! apart, so each wavelength sum belongs to exactly one output element.
//!
//! FC layers are weight stationary: column `o * K + k` stores weights
//! `W[o][k*S .. (k+1)*S]` down the `S` subarrays and the activation slice is
//! driven on the same wavelength of every subarray.

use serde::{Deserialize, Serialize};

use super::network::{LayerOp, LayerSpec, NetworkSpec, ResolvedLayer, Shape};
use crate::error::{Error, Result};
use crate::memory::{CellLocation, MemoryGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdmPass {
    /// Nibble index of the stationary operand (held in a separate cell row).
    pub stored_nibble: u32,
    /// Nibble index of the operand driven on the MDLs.
    pub input_nibble: u32,
    pub shift: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdmPlan {
    pub nibbles: u32,
    pub passes: Vec<TdmPass>,
}

impl TdmPlan {
    pub fn shifts(&self) -> Vec<u32> {
        self.passes.iter().map(|p| p.shift).collect()
    }
}

/// Every nibble of one operand against every nibble of the other, low
/// shifts first.
pub fn plan_tdm(operand_bits: u32, cell_bits: u32) -> Result<TdmPlan> {
    if cell_bits == 0 || operand_bits == 0 || !operand_bits.is_multiple_of(cell_bits) {
        return Err(Error::mapping(format!(
            "operand width {operand_bits} is not a multiple of the {cell_bits}-bit cell"
        )));
    }
    let n = operand_bits / cell_bits;
    let mut passes: Vec<TdmPass> = (0..n)
        .flat_map(|a| {
            (0..n).map(move |b| TdmPass { stored_nibble: a, input_nibble: b, shift: cell_bits * (a + b) })
        })
        .collect();
    passes.sort_by_key(|p| (p.shift, p.stored_nibble));
    Ok(TdmPlan { nibbles: n, passes })
}

/// Placement parameters of an input-stationary conv mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvTiling {
    pub input: Shape,
    pub output: Shape,
    pub kernel: [usize; 4],
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    /// Feature-map lines per band (`L`).
    pub lines_per_band: usize,
    /// Channels per tile (`Cs`).
    pub channels_per_chunk: usize,
    pub chunks_per_group: usize,
    pub bands: usize,
    pub col_tile_width: usize,
    pub col_tiles: usize,
    /// Tiles sharing one cell row of one engine.
    pub segments: usize,
    pub tiles: usize,
    /// Cell-row layers of tiles (before nibble splitting).
    pub layers: usize,
    /// Column phases per output row.
    pub phases: usize,
    /// Output rows touching each band, ascending.
    pub band_jobs: Vec<Vec<usize>>,
    /// Longest job list among the tiles of each layer.
    pub layer_jobs: Vec<usize>,
}

/// Placement parameters of a weight-stationary FC mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcTiling {
    pub in_features: usize,
    pub out_features: usize,
    /// Subarray-height slices per output (`K`).
    pub slices: usize,
    pub columns: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WritebackPlan {
    pub element_count: u64,
    /// Upper bound: every nibble cell of every element reprogrammed.
    pub cells_to_program: u64,
    pub cells_per_element: u32,
    /// Elements passing through the E-O-E controller's digital stage.
    pub digital_elements: u64,
    /// Consumer layers whose placement the output is written in.
    pub destinations: Vec<String>,
}

/// Per-layer schedule and its statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub layer: String,
    pub kind: String,
    pub operand_bits: u32,
    pub tdm: Option<TdmPlan>,
    pub slot_count: u64,
    /// MACs between valid (non-padding) operands.
    pub mac_count: u64,
    /// Cell-level products fired (MACs times TDM passes); one cell read each.
    pub products: u64,
    /// Non-empty wavelength sums, one ADC conversion each.
    pub conversions: u64,
    /// Largest number of partial sums any output element collects.
    pub max_partials: u64,
    /// Most subarrays contributing to one wavelength sum.
    pub max_contributors: usize,
    pub engines_used: usize,
    pub cell_rows_used: usize,
    /// Products over the subarray-column-slots of the engaged tiles (conv)
    /// or columns (FC).
    pub utilization: f64,
    pub conv: Option<ConvTiling>,
    pub fc: Option<FcTiling>,
    pub writeback: WritebackPlan,
}

impl MappingPlan {
    pub fn tdm_passes(&self) -> usize {
        self.tdm.as_ref().map_or(0, |t| t.passes.len())
    }
}

/// Window rows (or columns) of output `o` clipped to `[0, n)`.
#[inline]
pub(crate) fn clipped_window(o: usize, k: usize, stride: usize, pad: usize, n: usize) -> (usize, usize) {
    let start = (o * stride) as isize - pad as isize;
    let lo = start.max(0) as usize;
    let hi = ((start + k as isize).max(0) as usize).min(n);
    (lo, hi.max(lo))
}

struct ConvCounts {
    slots: u64,
    /// Tile-slots: each layer's slot count times the tiles it holds.
    occupancy: u64,
    layers: usize,
    band_jobs: Vec<Vec<usize>>,
    layer_jobs: Vec<usize>,
    cs: usize,
    chunks: usize,
    bands: usize,
}

#[allow(clippy::too_many_arguments)]
fn conv_counts(
    l: usize,
    h: usize,
    ho: usize,
    kh: usize,
    stride: usize,
    pad: usize,
    cig: usize,
    groups: usize,
    cog: usize,
    col_tiles: usize,
    positions: usize,
    phases: usize,
    passes: usize,
    s: usize,
) -> ConvCounts {
    let cs = cig.min(s / l);
    let chunks = cig.div_ceil(cs);
    let bands = h.div_ceil(l);
    let mut band_jobs = vec![Vec::new(); bands];
    for yo in 0..ho {
        let (lo, hi) = clipped_window(yo, kh, stride, pad, h);
        if hi > lo {
            for jobs in &mut band_jobs[lo / l..=(hi - 1) / l] {
                jobs.push(yo);
            }
        }
    }
    let tiles = groups * chunks * bands * col_tiles;
    let layers = tiles.div_ceil(positions);
    let layer_jobs: Vec<usize> = (0..layers)
        .map(|ly| {
            (ly * positions..((ly + 1) * positions).min(tiles))
                .map(|t| band_jobs[(t / col_tiles) % bands].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let layer_slots = |j: usize| (passes * cog * j * phases) as u64;
    let slots = layer_jobs.iter().map(|&j| layer_slots(j)).sum();
    let occupancy = layer_jobs
        .iter()
        .enumerate()
        .map(|(ly, &j)| layer_slots(j) * (tiles - ly * positions).min(positions) as u64)
        .sum();
    ConvCounts { slots, occupancy, layers, band_jobs, layer_jobs, cs, chunks, bands }
}

fn capacity_rows(g: &MemoryGeometry) -> usize {
    g.rows_per_subarray * g.subarray_rows_per_group()
}

pub fn map_conv_layer(layer: &LayerSpec, input: Shape, operand_bits: u32, geometry: &MemoryGeometry) -> Result<MappingPlan> {
    let LayerOp::Conv { kernel: [kh, kw, cig, co], stride, padding, groups } = layer.op else {
        return Err(Error::mapping(format!("layer `{}` is not a conv", layer.name)));
    };
    geometry.validate()?;
    let output = super::network::ofm_dims(layer, input).map_err(|e| Error::mapping(e.to_string()))?;
    let (s, c) = (geometry.subarray_grid, geometry.cols_per_subarray);
    if kw > c {
        return Err(Error::mapping(format!(
            "layer `{}`: kernel row of {kw} exceeds the {c}-column subarray row",
            layer.name
        )));
    }
    let tdm = plan_tdm(operand_bits, geometry.bit_density)?;
    let passes = tdm.passes.len();
    let [h, w, _] = input;
    let [ho, wo, _] = output;
    let cog = co / groups;
    let wt = w.min(c);
    let col_tiles = w.div_ceil(wt);
    let segments = c / wt;
    let engines = geometry.engines();
    let positions = engines * segments;
    let phases = kw.div_ceil(stride).min(wo).max(1);

    let mut best: Option<(usize, ConvCounts)> = None;
    for l in 1..=kh.min(s).min(h) {
        let cc = conv_counts(l, h, ho, kh, stride, padding, cig, groups, cog, col_tiles, positions, phases, passes, s);
        if cc.layers * tdm.nibbles as usize > capacity_rows(geometry) {
            continue;
        }
        // Fewest tile-slots keeps the most subarrays free for other work;
        // then fewest slots, then the taller band.
        if best.as_ref().is_none_or(|(_, b)| (cc.occupancy, cc.slots) <= (b.occupancy, b.slots)) {
            best = Some((l, cc));
        }
    }
    let (l, cc) = best.ok_or_else(|| {
        Error::mapping(format!("layer `{}`: feature map does not fit the PIM rows of the groups", layer.name))
    })?;

    // Valid window extents along each axis, summed over outputs.
    let axis = |n_out: usize, k: usize, n: usize| -> Vec<usize> {
        (0..n_out).map(|o| {
            let (lo, hi) = clipped_window(o, k, stride, padding, n);
            hi - lo
        }).collect()
    };
    let vy = axis(ho, kh, h);
    let vx = axis(wo, kw, w);
    let bands_touched: Vec<usize> = (0..ho)
        .map(|yo| {
            let (lo, hi) = clipped_window(yo, kh, stride, padding, h);
            if hi > lo { (hi - 1) / l - lo / l + 1 } else { 0 }
        })
        .collect();
    let sum = |v: &[usize]| v.iter().sum::<usize>() as u64;
    let max = |v: &[usize]| v.iter().copied().max().unwrap_or(0) as u64;
    let mac_count = co as u64 * cig as u64 * sum(&vy) * sum(&vx);
    let p = passes as u64;
    let products = mac_count * p;
    let conversions = p * co as u64 * cc.chunks as u64 * sum(&bands_touched) * sum(&vx);
    let max_partials = p * cc.chunks as u64 * max(&bands_touched) * max(&vx);
    let tiles = groups * cc.chunks * cc.bands * col_tiles;
    let utilization = products as f64 / (cc.occupancy as f64 * (s * wt) as f64);
    let elements = output.iter().product::<usize>() as u64;
    Ok(MappingPlan {
        layer: layer.name.clone(),
        kind: "conv".into(),
        operand_bits,
        slot_count: cc.slots,
        mac_count,
        products,
        conversions,
        max_partials,
        max_contributors: l.min(kh) * cc.cs,
        engines_used: engines.min(tiles.div_ceil(segments)),
        cell_rows_used: cc.layers * tdm.nibbles as usize,
        utilization,
        tdm: Some(tdm.clone()),
        conv: Some(ConvTiling {
            input,
            output,
            kernel: [kh, kw, cig, co],
            stride,
            padding,
            groups,
            lines_per_band: l,
            channels_per_chunk: cc.cs,
            chunks_per_group: cc.chunks,
            bands: cc.bands,
            col_tile_width: wt,
            col_tiles,
            segments,
            tiles,
            layers: cc.layers,
            phases,
            band_jobs: cc.band_jobs,
            layer_jobs: cc.layer_jobs,
        }),
        fc: None,
        writeback: WritebackPlan {
            element_count: elements,
            cells_to_program: elements * u64::from(tdm.nibbles),
            cells_per_element: tdm.nibbles,
            digital_elements: elements,
            destinations: Vec::new(),
        },
    })
}

pub fn map_fc_layer(layer: &LayerSpec, operand_bits: u32, geometry: &MemoryGeometry) -> Result<MappingPlan> {
    let LayerOp::Fc { in_features, out_features } = layer.op else {
        return Err(Error::mapping(format!("layer `{}` is not fc", layer.name)));
    };
    geometry.validate()?;
    let tdm = plan_tdm(operand_bits, geometry.bit_density)?;
    let (s, c, engines) = (geometry.subarray_grid, geometry.cols_per_subarray, geometry.engines());
    let slices = in_features.div_ceil(s);
    let columns = out_features * slices;
    let layers = columns.div_ceil(engines * c);
    if layers * tdm.nibbles as usize > capacity_rows(geometry) {
        return Err(Error::mapping(format!("layer `{}`: weights exceed the PIM rows", layer.name)));
    }
    let p = tdm.passes.len() as u64;
    let slot_count = p * layers as u64;
    let mac_count = (in_features * out_features) as u64;
    let elements = out_features as u64;
    Ok(MappingPlan {
        layer: layer.name.clone(),
        kind: "fc".into(),
        operand_bits,
        slot_count,
        mac_count,
        products: mac_count * p,
        conversions: columns as u64 * p,
        max_partials: slices as u64 * p,
        max_contributors: s.min(in_features),
        engines_used: engines.min(columns.div_ceil(c)),
        cell_rows_used: layers * tdm.nibbles as usize,
        utilization: (mac_count * p) as f64 / (p * (columns * s) as u64) as f64,
        tdm: Some(tdm.clone()),
        conv: None,
        fc: Some(FcTiling { in_features, out_features, slices, columns, layers }),
        writeback: WritebackPlan {
            element_count: elements,
            cells_to_program: elements * u64::from(tdm.nibbles),
            cells_per_element: tdm.nibbles,
            digital_elements: elements,
            destinations: Vec::new(),
        },
    })
}

fn digital_plan(layer: &LayerSpec, r: &ResolvedLayer, cell_bits: u32) -> MappingPlan {
    let elements = r.output.iter().product::<usize>() as u64;
    let nib = r.operand_bits.div_ceil(cell_bits);
    // Activations run on the producer's output on its way to memory, so
    // they add E-O-E work but no extra cell writes.
    let cells = if matches!(layer.op, LayerOp::Activation(_)) { 0 } else { elements * u64::from(nib) };
    MappingPlan {
        layer: layer.name.clone(),
        kind: layer.op.kind().into(),
        operand_bits: r.operand_bits,
        tdm: None,
        slot_count: 0,
        mac_count: 0,
        products: 0,
        conversions: 0,
        max_partials: 0,
        max_contributors: 0,
        engines_used: 0,
        cell_rows_used: 0,
        utilization: 0.0,
        conv: None,
        fc: None,
        writeback: WritebackPlan {
            element_count: elements,
            cells_to_program: cells,
            cells_per_element: nib,
            digital_elements: r.input_shapes.iter().map(|s| s.iter().product::<usize>() as u64).sum(),
            destinations: Vec::new(),
        },
    }
}

/// Plan one resolved layer.
pub fn map_layer(layer: &LayerSpec, r: &ResolvedLayer, geometry: &MemoryGeometry) -> Result<MappingPlan> {
    match layer.op {
        LayerOp::Conv { .. } => map_conv_layer(layer, r.input_shapes[0], r.operand_bits, geometry),
        LayerOp::Fc { .. } => map_fc_layer(layer, r.operand_bits, geometry),
        _ => Ok(digital_plan(layer, r, geometry.bit_density)),
    }
}

/// Plans for every layer, in layer order. Layers are planned in parallel.
pub fn map_network(network: &NetworkSpec, geometry: &MemoryGeometry) -> Result<Vec<MappingPlan>> {
    use rayon::prelude::*;
    let resolved = network.resolve()?;
    let mut plans = network
        .layers
        .par_iter()
        .zip(resolved.par_iter())
        .map(|(l, r)| map_layer(l, r, geometry))
        .collect::<Result<Vec<_>>>()?;
    for (i, r) in resolved.iter().enumerate() {
        for s in &r.sources {
            if let super::network::Source::Layer(j) = s {
                let name = network.layers[i].name.clone();
                plans[*j].writeback.destinations.push(name);
            }
        }
    }
    Ok(plans)
}

/// Memory location of feature-map pixel `(c, y, x)` under a conv tiling,
/// for nibble `nibble` of the stored value.
pub fn conv_pixel_location(
    t: &ConvTiling,
    geometry: &MemoryGeometry,
    nibbles: u32,
    c: usize,
    y: usize,
    x: usize,
    nibble: u32,
) -> CellLocation {
    let cig = t.kernel[2];
    let (g, ci) = (c / cig, c % cig);
    let (chunk, dc) = (ci / t.channels_per_chunk, ci % t.channels_per_chunk);
    let (band, dy) = (y / t.lines_per_band, y % t.lines_per_band);
    let (ct, dx) = (x / t.col_tile_width, x % t.col_tile_width);
    let tile = ((g * t.chunks_per_group + chunk) * t.bands + band) * t.col_tiles + ct;
    let positions = geometry.engines() * t.segments;
    let (layer, pos) = (tile / positions, tile % positions);
    let (engine, seg) = (pos / t.segments, pos % t.segments);
    let cell_row = layer * nibbles as usize + nibble as usize;
    let per_group = geometry.subarray_rows_per_group();
    CellLocation {
        bank: engine / geometry.group_count,
        subarray_row: (engine % geometry.group_count) * per_group + cell_row / geometry.rows_per_subarray,
        subarray_col: dy + t.lines_per_band * dc,
        row: cell_row % geometry.rows_per_subarray,
        col: seg * t.col_tile_width + dx,
    }
}
