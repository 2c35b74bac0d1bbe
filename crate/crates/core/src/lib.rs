//! Functional and analytical simulator of an optical processing-in-memory
//! architecture built from multi-level OPCM cells.

pub mod config;
pub mod device;
pub mod error;
pub mod mapper;
pub mod memory;
pub mod perf;
pub mod pim;
pub mod report;
pub mod scalar;
pub mod validation;
pub mod workloads;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use workloads::{load_network, validate_catalog, WorkloadCatalog};

pub type OpcmCell = device::OpcmCellModel<f64>;
pub type OpcmCellF32 = device::OpcmCellModel<f32>;
pub type Mr = device::MrModel<f64>;
pub type Devices = device::DeviceParams<f64>;
