//! Addressable OPCM main memory: geometry, address decoding, optical path
//! budgeting and read/write accounting.

mod address;
mod geometry;
pub mod path;
mod state;

pub use address::{decode_address, AddressMap, AddressOrder, CellLocation};
pub use geometry::{available_memory_rows, capacity_bits, MemoryGeometry};
pub use path::{
    build_read_path, path_loss_db, required_laser_power, FloorplanParams, LightSource, PathElement, SignalPath,
};
pub use state::{
    mem_access, mem_access_with_stall, AccessContext, AccessKind, AccessOutcome, BankState, MemoryState,
    MemoryTrace, PendingWrite, RowRole, TraceEvent,
};
