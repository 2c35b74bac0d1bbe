use num_bigint::BigInt;

use super::OutputTag;
use crate::error::{Error, Result};

/// Split `value` into `operand_bits / cell_bits` nibbles, least significant
/// first, each paired with its left shift.
pub fn nibble_decompose(value: u64, operand_bits: u32, cell_bits: u32) -> Result<Vec<(u64, u32)>> {
    if cell_bits == 0 || operand_bits == 0 || !operand_bits.is_multiple_of(cell_bits) || operand_bits > 64 {
        return Err(Error::domain(format!(
            "operand width {operand_bits} is not a multiple of the {cell_bits}-bit cell"
        )));
    }
    if operand_bits < 64 && value >> operand_bits != 0 {
        return Err(Error::domain(format!("{value} does not fit in {operand_bits} bits")));
    }
    let mask = if cell_bits == 64 { u64::MAX } else { (1u64 << cell_bits) - 1 };
    Ok((0..operand_bits / cell_bits)
        .map(|i| {
            let shift = i * cell_bits;
            ((value >> shift) & mask, shift)
        })
        .collect())
}

/// `sum(value * 2^shift)` without overflow.
pub fn shift_add_combine<I>(partials: I) -> BigInt
where
    I: IntoIterator<Item = (i128, u32)>,
{
    partials.into_iter().fold(BigInt::from(0), |acc, (v, s)| acc + (BigInt::from(v) << s))
}

/// Per-output digital accumulator of the aggregation unit. Partial sums
/// arrive tagged with their output element and TDM shift.
#[derive(Debug, Clone)]
pub struct Aggregator {
    acc: Vec<i128>,
    partials: u64,
}

impl Aggregator {
    pub fn new(outputs: usize) -> Self {
        Self { acc: vec![0; outputs], partials: 0 }
    }

    pub fn add(&mut self, tag: OutputTag, value: i128, shift: u32) -> Result<()> {
        let slot = self
            .acc
            .get_mut(tag.0 as usize)
            .ok_or_else(|| Error::domain(format!("tag {tag} outside the output tensor")))?;
        *slot = value
            .checked_shl(shift)
            .and_then(|v| slot.checked_add(v))
            .ok_or_else(|| Error::domain("aggregation overflow"))?;
        self.partials += 1;
        Ok(())
    }

    /// Number of partial sums received so far.
    pub fn partials(&self) -> u64 {
        self.partials
    }

    pub fn into_values(self) -> Vec<i128> {
        self.acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_split() {
        assert_eq!(nibble_decompose(0xB7, 8, 4).unwrap(), vec![(0x7, 0), (0xB, 4)]);
        assert_eq!(nibble_decompose(0, 16, 4).unwrap(), vec![(0, 0), (0, 4), (0, 8), (0, 12)]);
        assert!(nibble_decompose(256, 8, 4).is_err());
        assert!(nibble_decompose(3, 6, 4).is_err());
    }

    #[test]
    fn recompose_all_bytes() {
        for v in 0..256u64 {
            let parts = nibble_decompose(v, 8, 4).unwrap();
            assert!(parts.iter().all(|(n, _)| *n < 16));
            assert_eq!(parts.iter().map(|(n, s)| n << s).sum::<u64>(), v);
        }
    }

    fn cross(a: u64, b: u64, bits: u32) -> BigInt {
        let na = nibble_decompose(a, bits, 4).unwrap();
        let nb = nibble_decompose(b, bits, 4).unwrap();
        shift_add_combine(
            na.iter().flat_map(|&(x, sx)| nb.iter().map(move |&(y, sy)| ((x * y) as i128, sx + sy))),
        )
    }

    #[test]
    fn worked_product() {
        assert_eq!(cross(183, 90, 8), BigInt::from(16470));
        assert_eq!(shift_add_combine([(42, 0)]), BigInt::from(42));
    }

    #[test]
    fn all_byte_pairs() {
        for a in 0..256u64 {
            for b in 0..256u64 {
                assert_eq!(cross(a, b, 8), BigInt::from(a * b));
            }
        }
    }

    proptest! {
        #[test]
        fn sixteen_bit_pairs(a in 0u64..65536, b in 0u64..65536) {
            prop_assert_eq!(cross(a, b, 16), BigInt::from(a * b));
        }
    }

    #[test]
    fn aggregator_shifts() {
        let mut agg = Aggregator::new(2);
        agg.add(OutputTag(1), 3, 4).unwrap();
        agg.add(OutputTag(1), -1, 0).unwrap();
        assert_eq!(agg.partials(), 2);
        assert_eq!(agg.into_values(), vec![0, 47]);
        assert!(Aggregator::new(1).add(OutputTag(1), 0, 0).is_err());
    }
}
