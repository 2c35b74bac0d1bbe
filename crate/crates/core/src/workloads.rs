//! Built-in network specifications and loading of user-supplied network
//! JSON files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mapper::NetworkSpec;

const BUILTIN: [(&str, &str); 5] = [
    ("resnet18", include_str!("../data/networks/resnet18.json")),
    ("inceptionv2", include_str!("../data/networks/inceptionv2.json")),
    ("mobilenet", include_str!("../data/networks/mobilenet.json")),
    ("squeezenet", include_str!("../data/networks/squeezenet.json")),
    ("vgg16", include_str!("../data/networks/vgg16.json")),
];

/// Machine-checkable JSON schema of the network file format.
pub const NETWORK_SCHEMA: &str = include_str!("../data/network.schema.json");

/// Read and fully validate a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    NetworkSpec::from_json(&text, &path.display().to_string())
}

pub fn save_network(spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, spec.to_json() + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

/// The shipped models, keyed by lowercase name.
#[derive(Debug, Clone)]
pub struct WorkloadCatalog {
    models: BTreeMap<String, NetworkSpec>,
}

impl WorkloadCatalog {
    pub fn builtin() -> Result<Self> {
        Self::from_sources(BUILTIN.iter().map(|(n, t)| (n.to_string(), t.to_string())))
    }

    /// Catalog from `(name, json)` pairs.
    pub fn from_sources(sources: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut models = BTreeMap::new();
        for (name, text) in sources {
            let spec = NetworkSpec::from_json(&text, &format!("catalog entry `{name}`"))?;
            models.insert(name, spec);
        }
        Ok(Self { models })
    }

    /// Catalog from every `*.json` file in `dir`, named by file stem.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let io = |e| Error::io(dir.display().to_string(), e);
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .map_err(io)?;
        files.retain(|p| p.extension().is_some_and(|x| x == "json"));
        files.sort();
        let mut sources = Vec::with_capacity(files.len());
        for p in files {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().to_ascii_lowercase();
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(p.display().to_string(), e))?;
            sources.push((name, text));
        }
        Self::from_sources(sources)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&NetworkSpec> {
        self.models.get(&name.to_ascii_lowercase())
    }

    /// Model at the requested operand width.
    pub fn variant(&self, name: &str, bits: u32) -> Result<NetworkSpec> {
        if bits != 4 && bits != 8 {
            return Err(Error::config(format!("operand width {bits} is not one of 4, 8")));
        }
        let spec = self.get(name).ok_or_else(|| Error::config(format!("no built-in workload `{name}`")))?;
        Ok(spec.with_operand_bits(bits))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NetworkSpec)> {
        self.models.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Compare computed parameter counts with the declared ones.
    pub fn validate(&self) -> CatalogReport {
        CatalogReport {
            entries: self
                .iter()
                .map(|(name, spec)| CatalogEntry {
                    name: name.to_string(),
                    computed: spec.param_count(),
                    declared: spec.declared_parameter_count,
                })
                .collect(),
        }
    }
}

/// Validate the shipped catalog.
pub fn validate_catalog() -> Result<CatalogReport> {
    let report = WorkloadCatalog::builtin()?.validate();
    report.check()?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub computed: u64,
    pub declared: Option<u64>,
}

impl CatalogEntry {
    pub fn matches(&self) -> bool {
        self.declared == Some(self.computed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogReport {
    pub entries: Vec<CatalogEntry>,
}

impl CatalogReport {
    pub fn matched(&self) -> usize {
        self.entries.iter().filter(|e| e.matches()).count()
    }

    pub fn check(&self) -> Result<()> {
        let bad: Vec<String> = self
            .entries
            .iter()
            .filter(|e| !e.matches())
            .map(|e| match e.declared {
                Some(d) => format!("{}: computed {} declared {} (delta {})", e.name, e.computed, d, e.computed as i64 - d as i64),
                None => format!("{}: no declared count", e.name),
            })
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }
}

impl fmt::Display for CatalogReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let declared = e.declared.map_or_else(|| "-".to_string(), |d| d.to_string());
            let verdict = if e.matches() { "match" } else { "MISMATCH" };
            writeln!(f, "{:<12} computed {:>11} declared {:>11} {verdict}", e.name, e.computed, declared)?;
        }
        write!(f, "{}/{} match", self.matched(), self.entries.len())
    }
}
