//! Run configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::NetworkSpec;
use crate::memory::{FloorplanParams, MemoryGeometry};
use crate::perf::{PerfModels, PowerParams, TimingParams, DEFAULT_GROUP_CANDIDATES};
use crate::workloads::{load_network, WorkloadCatalog};
use crate::Devices;

/// Everything one CLI run needs. Omitted fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: MemoryGeometry,
    pub device: Devices,
    pub timing: TimingParams,
    pub power: PowerParams,
    pub floorplan: FloorplanParams,
    /// Built-in model name or path to a network JSON file.
    pub workload: String,
    pub operand_bits: u32,
    /// Also run the bit-exact functional simulation and compare it with the
    /// integer reference.
    pub exact_mode: bool,
    pub out: PathBuf,
    pub seed: u64,
    pub dse_groups: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: MemoryGeometry::default(),
            device: Devices::default(),
            timing: TimingParams::default(),
            power: PowerParams::default(),
            floorplan: FloorplanParams::default(),
            workload: "resnet18".into(),
            operand_bits: 4,
            exact_mode: false,
            out: PathBuf::from("out"),
            seed: 0,
            dse_groups: DEFAULT_GROUP_CANDIDATES.to_vec(),
        }
    }
}

/// The shipped full-defaults document.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../data/config.defaults.json");

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse { path: origin.into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.device.validate(self.geometry.cols_per_subarray)?;
        self.timing.validate()?;
        self.power.validate()?;
        self.floorplan.validate()?;
        if self.device.cell.bit_density != self.geometry.bit_density {
            return Err(Error::config(format!(
                "device.cell.bit_density {} differs from geometry.bit_density {}",
                self.device.cell.bit_density, self.geometry.bit_density
            )));
        }
        if self.device.mdl.per_laser_power_mw != self.power.mdl_mw_per_laser {
            return Err(Error::config("device.mdl.per_laser_power_mw differs from power.mdl_mw_per_laser"));
        }
        if self.operand_bits != 4 && self.operand_bits != 8 {
            return Err(Error::config(format!("operand_bits must be 4 or 8, got {}", self.operand_bits)));
        }
        if self.workload.trim().is_empty() {
            return Err(Error::config("workload is empty"));
        }
        if self.dse_groups.is_empty() {
            return Err(Error::config("dse_groups is empty"));
        }
        Ok(())
    }

    pub fn models(&self) -> PerfModels {
        PerfModels {
            geometry: self.geometry.clone(),
            energy: self.device.energy.clone(),
            timing: self.timing.clone(),
            power: self.power.clone(),
        }
    }

    /// The selected workload at `operand_bits`. Names of built-in models win
    /// over files of the same name.
    pub fn network(&self) -> Result<NetworkSpec> {
        let catalog = WorkloadCatalog::builtin()?;
        if catalog.get(&self.workload).is_some() {
            return catalog.variant(&self.workload, self.operand_bits);
        }
        let path = Path::new(&self.workload);
        if !path.is_file() {
            return Err(Error::config(format!(
                "workload `{}` is neither a built-in model ({}) nor a readable file",
                self.workload,
                catalog.names().collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(load_network(path)?.with_operand_bits(self.operand_bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_equal_code_defaults() {
        assert_eq!(RunConfig::from_json(DEFAULT_CONFIG_JSON, "defaults").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_documents_fill_in_defaults() {
        let c = RunConfig::from_json(r#"{"operand_bits": 8, "timing": {"eoe_lanes": 8}}"#, "t").unwrap();
        assert_eq!(c.operand_bits, 8);
        assert_eq!(c.timing.eoe_lanes, 8);
        assert_eq!(c.timing.opcm_write_pulse_ns, TimingParams::default().opcm_write_pulse_ns);
        assert_eq!(c.geometry, MemoryGeometry::default());
    }

    #[test]
    fn rejects_bad_values() {
        let neg = r#"{"device": {"loss": {"mr_drop_db": -0.5}}}"#;
        assert!(matches!(RunConfig::from_json(neg, "t"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"operand_bits": 6}"#, "t"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"bogus": 1}"#, "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_workload_names_the_path() {
        let c = RunConfig { workload: "/no/such/net.json".into(), ..Default::default() };
        let e = c.network().unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("/no/such/net.json"));
    }
}
