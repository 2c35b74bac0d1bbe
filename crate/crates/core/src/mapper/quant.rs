//! Affine integer tensors, synthetic weights and an independent integer
//! reference inference used as the functional oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{LayerOp, NetworkSpec, PoolOp, Shape, Source};
use crate::error::{Error, Result};

/// Unsigned affine tensor stored channel-major (`[c][y][x]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QTensor {
    pub shape: Shape,
    pub bits: u32,
    pub zero: i64,
    pub data: Vec<u16>,
}

impl QTensor {
    pub fn zeros(shape: Shape, bits: u32, zero: i64) -> Self {
        Self { shape, bits, zero, data: vec![0; shape.iter().product()] }
    }

    /// Uniform random levels with zero point 0, as a network input.
    pub fn random(shape: Shape, bits: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max = (1u32 << bits) as u16;
        let mut t = Self::zeros(shape, bits, 0);
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(0..max));
        t
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape[0] + y) * self.shape[1] + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> u16 {
        self.data[self.idx(c, y, x)]
    }

    /// Value with the zero point removed.
    #[inline]
    pub fn signed(&self, c: usize, y: usize, x: usize) -> i64 {
        i64::from(self.at(c, y, x)) - self.zero
    }

    pub fn max_level(&self) -> i64 {
        (1i64 << self.bits) - 1
    }

    /// Same real values at another width: shift around the zero point and
    /// move to the standard zero point of the new width.
    pub fn convert_bits(&self, bits: u32) -> QTensor {
        if bits == self.bits {
            return self.clone();
        }
        let z = if self.zero == 0 { 0 } else { 1i64 << (bits - 1) };
        let max = (1i64 << bits) - 1;
        let data = self
            .data
            .iter()
            .map(|&q| {
                let s = i64::from(q) - self.zero;
                let v = if bits > self.bits { s << (bits - self.bits) } else { s >> (self.bits - bits) };
                (v + z).clamp(0, max) as u16
            })
            .collect();
        QTensor { shape: self.shape, bits, zero: z, data }
    }
}

/// Integer weights of one conv or FC layer. Conv layout is
/// `[c_out][c_in per group][k_h][k_w]`, FC layout `[out][in]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub bits: u32,
    pub zero: i64,
    pub weights: Vec<u16>,
    pub bias: Vec<i64>,
}

impl LayerWeights {
    #[inline]
    pub fn signed(&self, i: usize) -> i64 {
        i64::from(self.weights[i]) - self.zero
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkWeights {
    /// One entry per layer; `None` for layers without parameters.
    pub layers: Vec<Option<LayerWeights>>,
}

impl NetworkWeights {
    /// Seeded synthetic weights at each layer's operand width. Weight zero
    /// point is the mid level; biases are drawn on the accumulator scale.
    pub fn random(network: &NetworkSpec, seed: u64) -> Result<Self> {
        let resolved = network.resolve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let layers = network
            .layers
            .iter()
            .zip(&resolved)
            .map(|(l, r)| {
                let (n, outs) = match l.op {
                    LayerOp::Conv { kernel: [kh, kw, ci, co], .. } => (kh * kw * ci * co, co),
                    LayerOp::Fc { in_features, out_features } => (in_features * out_features, out_features),
                    _ => return None,
                };
                let bits = r.operand_bits;
                let max = (1u32 << bits) as u16;
                let weights = (0..n).map(|_| rng.gen_range(0..max)).collect();
                let span = 1i64 << (2 * bits + 2);
                let bias = (0..outs).map(|_| if l.has_bias { rng.gen_range(-span..=span) } else { 0 }).collect();
                Some(LayerWeights { bits, zero: 1 << (bits - 1), weights, bias })
            })
            .collect();
        Ok(Self { layers })
    }
}

/// Default requantization shift for a dot product of length `k`.
pub fn auto_shift(bits: u32, k: usize) -> u32 {
    let log = usize::BITS - (k.max(1) - 1).leading_zeros();
    bits + log / 2
}

/// Arithmetic right shift onto the mid-level zero point, saturating.
#[inline]
pub fn requantize(acc: i64, shift: u32, bits: u32) -> u16 {
    let z = 1i64 << (bits - 1);
    ((acc >> shift) + z).clamp(0, (1i64 << bits) - 1) as u16
}

pub fn relu(t: &QTensor) -> QTensor {
    let z = t.zero.clamp(0, t.max_level()) as u16;
    QTensor { data: t.data.iter().map(|&q| q.max(z)).collect(), ..t.clone() }
}

pub fn pool(t: &QTensor, op: PoolOp, size: usize, stride: usize, padding: usize, global: bool, out: Shape) -> QTensor {
    let [h, w, c] = t.shape;
    let (size_h, size_w, stride, padding) = if global { (h, w, 1, 0) } else { (size, size, stride, padding) };
    let mut o = QTensor::zeros(out, t.bits, t.zero);
    for ch in 0..c {
        for yo in 0..out[0] {
            for xo in 0..out[1] {
                let (mut sum, mut cnt, mut best) = (0u64, 0u64, 0u16);
                for ky in 0..size_h {
                    for kx in 0..size_w {
                        let (y, x) = ((yo * stride + ky) as isize - padding as isize, (xo * stride + kx) as isize - padding as isize);
                        if y < 0 || x < 0 || y as usize >= h || x as usize >= w {
                            continue;
                        }
                        let v = t.at(ch, y as usize, x as usize);
                        sum += u64::from(v);
                        cnt += 1;
                        best = best.max(v);
                    }
                }
                let i = o.idx(ch, yo, xo);
                o.data[i] = match op {
                    PoolOp::Max => best,
                    PoolOp::Avg => ((sum + cnt / 2) / cnt.max(1)) as u16,
                };
            }
        }
    }
    o
}

pub fn add(a: &QTensor, b: &QTensor) -> QTensor {
    let bits = a.bits;
    let b = b.convert_bits(bits);
    let z = 1i64 << (bits - 1);
    let max = a.max_level();
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| ((i64::from(x) - a.zero) + (i64::from(y) - b.zero) + z).clamp(0, max) as u16)
        .collect();
    QTensor { shape: a.shape, bits, zero: z, data }
}

pub fn concat(parts: &[&QTensor], bits: u32) -> QTensor {
    let z = 1i64 << (bits - 1);
    let max = (1i64 << bits) - 1;
    let shape = [parts[0].shape[0], parts[0].shape[1], parts.iter().map(|p| p.shape[2]).sum()];
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        let p = p.convert_bits(bits);
        data.extend(p.data.iter().map(|&q| (i64::from(q) - p.zero + z).clamp(0, max) as u16));
    }
    QTensor { shape, bits, zero: z, data }
}

/// Result of running a digital (non-PIM) layer.
pub fn digital_layer(op: &LayerOp, inputs: &[&QTensor], out: Shape, bits: u32) -> Result<QTensor> {
    Ok(match *op {
        LayerOp::Activation(_) => relu(inputs[0]),
        LayerOp::Pool { op, size, stride, padding, global } => pool(inputs[0], op, size, stride, padding, global, out),
        LayerOp::Add => add(&inputs[0].convert_bits(bits), inputs[1]),
        LayerOp::Concat => concat(inputs, bits),
        _ => return Err(Error::domain("conv and fc are not digital layers")),
    })
}

/// Integer reference inference: direct convolution and GEMV loops followed
/// by the same requantization the aggregation unit applies.
pub fn reference_inference(network: &NetworkSpec, weights: &NetworkWeights, input: &QTensor) -> Result<Vec<QTensor>> {
    let resolved = network.resolve()?;
    if input.shape != network.input {
        return Err(Error::domain(format!("input shape {:?} differs from {:?}", input.shape, network.input)));
    }
    let mut outs: Vec<QTensor> = Vec::with_capacity(resolved.len());
    for (li, (layer, r)) in network.layers.iter().zip(&resolved).enumerate() {
        let srcs: Vec<&QTensor> = r
            .sources
            .iter()
            .map(|s| match s {
                Source::Input => input,
                Source::Layer(j) => &outs[*j],
            })
            .collect();
        let bits = r.operand_bits;
        let out = match layer.op {
            LayerOp::Conv { kernel: [kh, kw, cig, co], stride, padding, groups } => {
                let x = srcs[0].convert_bits(bits);
                let lw = weights.layers[li].as_ref().ok_or_else(|| Error::domain("missing conv weights"))?;
                let shift = layer.requant_shift.unwrap_or_else(|| auto_shift(bits, kh * kw * cig));
                let [ho, wo, _] = r.output;
                let [h, w, _] = x.shape;
                let cog = co / groups;
                let mut o = QTensor::zeros(r.output, bits, 1 << (bits - 1));
                for oc in 0..co {
                    let g = oc / cog;
                    for yo in 0..ho {
                        for xo in 0..wo {
                            let mut acc = lw.bias[oc];
                            for ci in 0..cig {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let y = (yo * stride + ky) as isize - padding as isize;
                                        let xx = (xo * stride + kx) as isize - padding as isize;
                                        if y < 0 || xx < 0 || y as usize >= h || xx as usize >= w {
                                            continue;
                                        }
                                        let wi = ((oc * cig + ci) * kh + ky) * kw + kx;
                                        acc += x.signed(g * cig + ci, y as usize, xx as usize) * lw.signed(wi);
                                    }
                                }
                            }
                            let i = o.idx(oc, yo, xo);
                            o.data[i] = requantize(acc, shift, bits);
                        }
                    }
                }
                o
            }
            LayerOp::Fc { in_features, out_features } => {
                let x = srcs[0].convert_bits(bits);
                let lw = weights.layers[li].as_ref().ok_or_else(|| Error::domain("missing fc weights"))?;
                let shift = layer.requant_shift.unwrap_or_else(|| auto_shift(bits, in_features));
                let mut o = QTensor::zeros(r.output, bits, 1 << (bits - 1));
                for oo in 0..out_features {
                    let mut acc = lw.bias[oo];
                    for i in 0..in_features {
                        acc += (i64::from(x.data[i]) - x.zero) * lw.signed(oo * in_features + i);
                    }
                    o.data[oo] = requantize(acc, shift, bits);
                }
                o
            }
            _ => digital_layer(&layer.op, &srcs, r.output, bits)?,
        };
        outs.push(out);
    }
    Ok(outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::network::LayerSpec;

    #[test]
    fn shift_rule() {
        assert_eq!(auto_shift(4, 1), 4);
        assert_eq!(auto_shift(4, 9), 6);
        assert_eq!(auto_shift(8, 4096), 14);
    }

    #[test]
    fn requantize_saturates() {
        assert_eq!(requantize(0, 4, 4), 8);
        assert_eq!(requantize(1 << 20, 4, 4), 15);
        assert_eq!(requantize(-(1 << 20), 4, 4), 0);
        assert_eq!(requantize(-1, 0, 4), 7);
    }

    #[test]
    fn identity_fc_reference() {
        let net = NetworkSpec {
            name: "id".into(),
            description: String::new(),
            declared_parameter_count: None,
            input: [1, 1, 4],
            operand_bits: 4,
            layers: vec![LayerSpec { requant_shift: Some(0), ..LayerSpec::fc("f", 4, 4) }],
        };
        // Signed weight 1 on the diagonal, 0 elsewhere.
        let mut w = vec![8u16; 16];
        for i in 0..4 {
            w[i * 4 + i] = 9;
        }
        let weights = NetworkWeights { layers: vec![Some(LayerWeights { bits: 4, zero: 8, weights: w, bias: vec![0; 4] })] };
        let x = QTensor { shape: [1, 1, 4], bits: 4, zero: 8, data: vec![3, 8, 12, 15] };
        let out = reference_inference(&net, &weights, &x).unwrap();
        assert_eq!(out[0].data, x.data);
    }

    #[test]
    fn digital_ops() {
        let t = QTensor { shape: [2, 2, 1], bits: 4, zero: 8, data: vec![1, 9, 12, 7] };
        assert_eq!(relu(&t).data, vec![8, 9, 12, 8]);
        assert_eq!(pool(&t, PoolOp::Max, 2, 2, 0, false, [1, 1, 1]).data, vec![12]);
        assert_eq!(pool(&t, PoolOp::Avg, 0, 1, 0, true, [1, 1, 1]).data, vec![7]);
        assert_eq!(add(&t, &t).data, vec![0, 10, 15, 6]);
        let input = QTensor { shape: [2, 2, 1], bits: 4, zero: 0, data: vec![0, 1, 2, 3] };
        assert_eq!(concat(&[&t, &input], 4).data, vec![1, 9, 12, 7, 8, 9, 10, 11]);
        let wide = t.convert_bits(8);
        assert_eq!((wide.zero, wide.data[0]), (128, 16));
        assert_eq!(wide.convert_bits(4), t);
    }
}
