//! Simulation pipelines behind the CLI and the artifacts they emit.
//!
//! Every artifact is rendered to a string first; floats use fixed formats so
//! identical inputs give byte-identical files whatever the thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mapper::{
    map_network, reference_inference, simulate_network, ExecOptions, MappingPlan, NetworkSpec, NetworkWeights,
    QTensor,
};
use crate::perf::{
    best_grouping, dse_grouping, efficiency_metrics, evaluate_plan, power_breakdown, DseRow, EnergyBreakdown,
    LayerResult, NetworkTotals, PerfModels, PowerBreakdown, PowerMode,
};
use crate::workloads::WorkloadCatalog;

/// A named file body.
pub type Artifact = (String, String);

/// Whole-network figures of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub workload: String,
    pub operand_bits: u32,
    pub parameters: u64,
    pub layers: usize,
    pub mac_count: u64,
    pub slot_count: u64,
    pub processing_latency_ns: f64,
    pub writeback_latency_ns: f64,
    pub latency_ns: f64,
    pub processing_ns_per_mac: f64,
    /// MAC-weighted mean utilization of the PIM layers.
    pub utilization: f64,
    pub energy_pj: f64,
    pub power_w: f64,
    pub epb_j_per_bit: f64,
    pub fps: f64,
    pub fps_per_watt: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionalCheck {
    pub seed: u64,
    pub layers: usize,
    pub mismatched: Vec<String>,
}

impl FunctionalCheck {
    pub fn passed(&self) -> bool {
        self.mismatched.is_empty()
    }

    pub fn render(&self) -> String {
        if self.passed() {
            format!("PASS: {}/{} layer outputs equal the integer reference (seed {})\n", self.layers, self.layers, self.seed)
        } else {
            format!(
                "FAIL: {} of {} layer outputs differ from the integer reference (seed {}): {}\n",
                self.mismatched.len(),
                self.layers,
                self.seed,
                self.mismatched.join(", ")
            )
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub plans: Vec<MappingPlan>,
    pub results: Vec<LayerResult>,
    pub totals: NetworkTotals,
    pub power: PowerBreakdown,
    pub summary: Summary,
    pub functional: Option<FunctionalCheck>,
}

fn mac_weighted_utilization(results: &[LayerResult]) -> f64 {
    let macs: u64 = results.iter().map(|r| r.mac_count).sum();
    if macs == 0 {
        return 0.0;
    }
    results.iter().map(|r| r.utilization * r.mac_count as f64).sum::<f64>() / macs as f64
}

/// Plan and account `network` under `models`.
pub fn evaluate_network(network: &NetworkSpec, models: &PerfModels) -> Result<SimulationReport> {
    let plans = map_network(network, &models.geometry)?;
    let results: Vec<LayerResult> = plans.iter().map(|p| evaluate_plan(p, models)).collect();
    let totals = NetworkTotals::from_results(&results);
    let power = power_breakdown(&models.geometry, &models.power, PowerMode::Both);
    let eff = efficiency_metrics(&totals, power.total_w())?;
    let summary = Summary {
        workload: network.name.clone(),
        operand_bits: network.operand_bits,
        parameters: network.param_count(),
        layers: network.layers.len(),
        mac_count: totals.mac_count,
        slot_count: totals.slot_count,
        processing_latency_ns: totals.processing_latency_ns,
        writeback_latency_ns: totals.writeback_latency_ns,
        latency_ns: totals.latency_ns(),
        processing_ns_per_mac: totals.processing_ns_per_mac(),
        utilization: mac_weighted_utilization(&results),
        energy_pj: totals.energy.total(),
        power_w: power.total_w(),
        epb_j_per_bit: eff.epb_j_per_bit,
        fps: eff.fps,
        fps_per_watt: eff.fps_per_watt,
    };
    Ok(SimulationReport { plans, results, totals, power, summary, functional: None })
}

/// Bit-exact functional run on seeded synthetic weights and input, compared
/// layer by layer with the integer reference.
pub fn functional_check(network: &NetworkSpec, models: &PerfModels, seed: u64) -> Result<FunctionalCheck> {
    let weights = NetworkWeights::random(network, seed)?;
    let input = QTensor::random(network.input, network.operand_bits, seed.wrapping_add(1));
    let opts = ExecOptions { exact_mode: true, ..Default::default() };
    let run = simulate_network(network, models, &input, &weights, &opts)?;
    let reference = reference_inference(network, &weights, &input)?;
    let mismatched = network
        .layers
        .iter()
        .zip(run.outputs.iter().zip(&reference))
        .filter(|(_, (a, b))| a != b)
        .map(|(l, _)| l.name.clone())
        .collect();
    Ok(FunctionalCheck { seed, layers: network.layers.len(), mismatched })
}

/// The `simulate` pipeline.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let network = cfg.network()?;
    let models = cfg.models();
    let mut report = evaluate_network(&network, &models)?;
    if cfg.exact_mode {
        report.functional = Some(functional_check(&network, &models, cfg.seed)?);
    }
    Ok(report)
}

pub const LAYER_CSV_HEADER: &str = "index,layer,kind,operand_bits,mac_count,slot_count,utilization,\
processing_latency_ns,writeback_latency_ns,energy_pj";

pub fn layers_csv(results: &[LayerResult]) -> String {
    let mut s = String::from(LAYER_CSV_HEADER);
    s.push('\n');
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{:.6},{:.3},{:.3},{:.3}",
            r.layer,
            r.kind,
            r.operand_bits,
            r.mac_count,
            r.slot_count,
            r.utilization,
            r.processing_latency_ns,
            r.writeback_latency_ns,
            r.energy.total()
        );
    }
    s
}

/// Whitespace-separated columns for stacked processing/writeback bars.
pub fn latency_plot(results: &[LayerResult]) -> String {
    let mut s = String::from("# index processing_ns writeback_ns cumulative_ns layer\n");
    let mut cum = 0.0;
    for (i, r) in results.iter().enumerate() {
        cum += r.processing_latency_ns + r.writeback_latency_ns;
        let _ = writeln!(s, "{i} {:.3} {:.3} {cum:.3} {}", r.processing_latency_ns, r.writeback_latency_ns, r.layer);
    }
    s
}

pub fn energy_csv(e: &EnergyBreakdown) -> String {
    let total = e.total();
    let mut s = String::from("component,energy_pj,share\n");
    for (name, v) in EnergyBreakdown::NAMES.iter().zip(e.values()) {
        let share = if total > 0.0 { v / total } else { 0.0 };
        let _ = writeln!(s, "{name},{v:.3},{share:.6}");
    }
    let _ = writeln!(s, "total,{total:.3},1.000000");
    s
}

pub fn power_csv(p: &PowerBreakdown) -> String {
    let total = p.total_w();
    let mut s = String::from("category,power_w,share\n");
    for (name, v) in p.entries() {
        let _ = writeln!(s, "{name},{v:.6},{:.6}", v / total);
    }
    let _ = writeln!(s, "total,{total:.6},1.000000");
    s
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

impl SimulationReport {
    pub fn artifacts(&self) -> Vec<Artifact> {
        let mut a = vec![
            ("layers.csv".to_string(), layers_csv(&self.results)),
            ("latency_breakdown.dat".to_string(), latency_plot(&self.results)),
            ("energy_breakdown.csv".to_string(), energy_csv(&self.totals.energy)),
            ("power_breakdown.csv".to_string(), power_csv(&self.power)),
            ("summary.json".to_string(), json(&self.summary)),
        ];
        if let Some(f) = &self.functional {
            a.push(("functional.txt".to_string(), f.render()));
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DseReport {
    pub rows: Vec<DseRow>,
    pub best: usize,
}

pub const DSE_CSV_HEADER: &str = "groups,power_w,normalized_power,mac_throughput,rows_available,mac_per_watt";

/// The `dse` pipeline: sweep the group count over `cfg.dse_groups`.
pub fn dse(cfg: &RunConfig) -> Result<DseReport> {
    cfg.validate()?;
    let rows = dse_grouping(&cfg.geometry, &cfg.power, cfg.timing.pim_cycle_hz, &cfg.dse_groups)?;
    let best = best_grouping(&rows).ok_or_else(|| Error::config("empty sweep"))?;
    Ok(DseReport { rows, best })
}

impl DseReport {
    pub fn csv(&self) -> String {
        let mut s = String::from(DSE_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6e},{},{:.6e}",
                r.groups, r.power_w, r.normalized_power, r.mac_throughput, r.rows_available, r.mac_per_watt
            );
        }
        s
    }

    /// Normalized power and normalized MACs per watt against the group count.
    pub fn plot(&self) -> String {
        let peak = self.rows.iter().map(|r| r.mac_per_watt).fold(0.0, f64::max);
        let mut s = String::from("# groups normalized_power normalized_mac_per_watt\n");
        for r in &self.rows {
            let _ = writeln!(s, "{} {:.6} {:.6}", r.groups, r.normalized_power, r.mac_per_watt / peak);
        }
        s
    }

    pub fn artifacts(&self) -> Vec<Artifact> {
        vec![
            ("dse.csv".to_string(), self.csv()),
            ("dse_plot.dat".to_string(), self.plot()),
            ("dse_best.txt".to_string(), format!("best_groups {}\n", self.best)),
        ]
    }
}

pub const MODELS_CSV_HEADER: &str = "model,operand_bits,parameters,mac_count,slot_count,processing_latency_ns,\
writeback_latency_ns,latency_ns,processing_ns_per_mac,utilization,energy_pj,epb_j_per_bit,fps,fps_per_watt";

/// The `report` pipeline: every built-in model at 4 and 8 bits under the
/// configured hardware.
pub fn model_report(cfg: &RunConfig) -> Result<Vec<Summary>> {
    use rayon::prelude::*;
    cfg.validate()?;
    let catalog = WorkloadCatalog::builtin()?;
    let models = cfg.models();
    let jobs: Vec<(String, u32)> = catalog.names().flat_map(|n| [4, 8].map(|b| (n.to_string(), b))).collect();
    jobs.par_iter()
        .map(|(name, bits)| Ok(evaluate_network(&catalog.variant(name, *bits)?, &models)?.summary))
        .collect()
}

pub fn models_csv(rows: &[Summary]) -> String {
    let mut s = String::from(MODELS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.3},{:.3},{:.3},{:.6e},{:.6},{:.3},{:.6e},{:.6},{:.6}",
            r.workload,
            r.operand_bits,
            r.parameters,
            r.mac_count,
            r.slot_count,
            r.processing_latency_ns,
            r.writeback_latency_ns,
            r.latency_ns,
            r.processing_ns_per_mac,
            r.utilization,
            r.energy_pj,
            r.epb_j_per_bit,
            r.fps,
            r.fps_per_watt
        );
    }
    s
}

pub fn catalog_csv(catalog: &WorkloadCatalog) -> String {
    let mut s = String::from("model,computed,declared,match\n");
    for e in catalog.validate().entries {
        let declared = e.declared.map_or_else(String::new, |d| d.to_string());
        let _ = writeln!(s, "{},{},{declared},{}", e.name, e.computed, e.matches());
    }
    s
}

/// Write artifacts into `dir`, one after the other, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    artifacts
        .iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(p.display().to_string(), e))?;
            Ok(p)
        })
        .collect()
}
