//! Byte address <-> cell location decoding.
//!
//! Addresses are decoded as a mixed-radix number. The default field order,
//! most significant first, is `bank ‖ subarray_row ‖ subarray_col ‖ row ‖ byte`;
//! the interleaved order moves the bank field just above the in-row byte so
//! consecutive rows land in different banks.

use serde::{Deserialize, Serialize};

use super::MemoryGeometry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellLocation {
    pub bank: usize,
    pub subarray_row: usize,
    pub subarray_col: usize,
    pub row: usize,
    pub col: usize,
}

impl CellLocation {
    pub fn validate(&self, g: &MemoryGeometry) -> Result<()> {
        if self.bank >= g.banks
            || self.subarray_row >= g.subarray_grid
            || self.subarray_col >= g.subarray_grid
            || self.row >= g.rows_per_subarray
            || self.col >= g.cols_per_subarray
        {
            return Err(Error::domain(format!("location {self} outside the geometry")));
        }
        Ok(())
    }
}

impl std::fmt::Display for CellLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "b{}/sr{}/sc{}/r{}/c{}",
            self.bank, self.subarray_row, self.subarray_col, self.row, self.col
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressOrder {
    #[default]
    BankMajor,
    BankInterleaved,
}

/// Decodes and encodes byte addresses for one geometry.
#[derive(Debug, Clone)]
pub struct AddressMap {
    geometry: MemoryGeometry,
    order: AddressOrder,
    cells_per_byte: usize,
    bytes_per_row: u64,
}

impl AddressMap {
    pub fn new(geometry: &MemoryGeometry, order: AddressOrder) -> Result<Self> {
        geometry.validate()?;
        let bd = geometry.bit_density as usize;
        if 8 % bd != 0 {
            return Err(Error::config(format!(
                "byte addressing needs a bit density dividing 8, got {bd}"
            )));
        }
        let cells_per_byte = 8 / bd;
        if !geometry.cols_per_subarray.is_multiple_of(cells_per_byte) {
            return Err(Error::config("subarray rows must hold a whole number of bytes"));
        }
        Ok(Self {
            geometry: geometry.clone(),
            order,
            cells_per_byte,
            bytes_per_row: (geometry.cols_per_subarray / cells_per_byte) as u64,
        })
    }

    pub fn capacity_bytes(&self) -> u64 {
        let g = &self.geometry;
        (g.banks * g.subarray_grid * g.subarray_grid * g.rows_per_subarray) as u64 * self.bytes_per_row
    }

    pub fn cells_per_byte(&self) -> usize {
        self.cells_per_byte
    }

    /// Location of the first cell holding the byte at `address`.
    pub fn decode(&self, address: u64) -> Result<CellLocation> {
        if address >= self.capacity_bytes() {
            return Err(Error::domain(format!(
                "address {address:#x} beyond capacity {:#x}",
                self.capacity_bytes()
            )));
        }
        let g = &self.geometry;
        let mut a = address;
        let mut take = |radix: usize| {
            let r = radix as u64;
            let d = (a % r) as usize;
            a /= r;
            d
        };
        let byte = take(self.bytes_per_row as usize);
        let loc = match self.order {
            AddressOrder::BankMajor => {
                let row = take(g.rows_per_subarray);
                let subarray_col = take(g.subarray_grid);
                let subarray_row = take(g.subarray_grid);
                let bank = take(g.banks);
                CellLocation { bank, subarray_row, subarray_col, row, col: byte * self.cells_per_byte }
            }
            AddressOrder::BankInterleaved => {
                let bank = take(g.banks);
                let row = take(g.rows_per_subarray);
                let subarray_col = take(g.subarray_grid);
                let subarray_row = take(g.subarray_grid);
                CellLocation { bank, subarray_row, subarray_col, row, col: byte * self.cells_per_byte }
            }
        };
        Ok(loc)
    }

    /// Inverse of [`decode`](Self::decode); `col` must start a byte.
    pub fn encode(&self, loc: &CellLocation) -> Result<u64> {
        loc.validate(&self.geometry)?;
        if !loc.col.is_multiple_of(self.cells_per_byte) {
            return Err(Error::domain(format!("column {} does not start a byte", loc.col)));
        }
        let g = &self.geometry;
        let byte = (loc.col / self.cells_per_byte) as u64;
        let fields: [(usize, usize); 4] = match self.order {
            AddressOrder::BankMajor => [
                (loc.bank, g.banks),
                (loc.subarray_row, g.subarray_grid),
                (loc.subarray_col, g.subarray_grid),
                (loc.row, g.rows_per_subarray),
            ],
            AddressOrder::BankInterleaved => [
                (loc.subarray_row, g.subarray_grid),
                (loc.subarray_col, g.subarray_grid),
                (loc.row, g.rows_per_subarray),
                (loc.bank, g.banks),
            ],
        };
        let mut a = 0u64;
        for (digit, radix) in fields {
            a = a * radix as u64 + digit as u64;
        }
        Ok(a * self.bytes_per_row + byte)
    }
}

/// Decode with the default (bank-major) order.
pub fn decode_address(address: u64, geometry: &MemoryGeometry) -> Result<CellLocation> {
    AddressMap::new(geometry, AddressOrder::BankMajor)?.decode(address)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn origin_and_boundary() {
        let g = MemoryGeometry::default();
        let origin = decode_address(0, &g).unwrap();
        assert_eq!(origin, CellLocation { bank: 0, subarray_row: 0, subarray_col: 0, row: 0, col: 0 });
        let map = AddressMap::new(&g, AddressOrder::BankMajor).unwrap();
        assert_eq!(map.capacity_bytes(), 1 << 30);
        let last = map.decode(map.capacity_bytes() - 1).unwrap();
        assert_eq!(last, CellLocation { bank: 3, subarray_row: 63, subarray_col: 63, row: 255, col: 510 });
        assert!(map.decode(map.capacity_bytes()).is_err());
    }

    #[test]
    fn sampled_round_trip_both_orders() {
        let g = MemoryGeometry::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for order in [AddressOrder::BankMajor, AddressOrder::BankInterleaved] {
            let map = AddressMap::new(&g, order).unwrap();
            for _ in 0..1_000_000 {
                let a = rng.gen_range(0..map.capacity_bytes());
                assert_eq!(map.encode(&map.decode(a).unwrap()).unwrap(), a);
            }
        }
    }

    #[test]
    fn exhaustive_small_geometry() {
        let g = MemoryGeometry {
            banks: 2,
            subarray_grid: 4,
            rows_per_subarray: 3,
            cols_per_subarray: 8,
            bit_density: 2,
            group_count: 2,
        };
        for order in [AddressOrder::BankMajor, AddressOrder::BankInterleaved] {
            let map = AddressMap::new(&g, order).unwrap();
            let mut seen = std::collections::HashSet::new();
            for a in 0..map.capacity_bytes() {
                let loc = map.decode(a).unwrap();
                assert!(seen.insert(loc));
                assert_eq!(map.encode(&loc).unwrap(), a);
            }
            assert_eq!(seen.len() as u64, g.capacity_bits() / 8);
        }
    }

    #[test]
    fn interleaving_spreads_rows_across_banks() {
        let g = MemoryGeometry::default();
        let map = AddressMap::new(&g, AddressOrder::BankInterleaved).unwrap();
        let banks: Vec<usize> = (0..4).map(|i| map.decode(i * 256).unwrap().bank).collect();
        assert_eq!(banks, vec![0, 1, 2, 3]);
    }

    #[test]
    fn unaligned_column_rejected() {
        let map = AddressMap::new(&MemoryGeometry::default(), AddressOrder::BankMajor).unwrap();
        let loc = CellLocation { bank: 0, subarray_row: 0, subarray_col: 0, row: 0, col: 1 };
        assert!(map.encode(&loc).is_err());
    }
}
