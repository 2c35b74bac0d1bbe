//! Latency, energy, power and efficiency accounting over mapping plans.

mod model;
mod power;
mod timing;

pub use model::{
    efficiency_metrics, evaluate_plan, layer_energy, layer_latency, Efficiency, EnergyBreakdown, LayerResult,
    NetworkTotals, PerfModels,
};
pub use power::{
    best_grouping, dse_grouping, power_breakdown, Calibration, DseRow, PowerBreakdown, PowerMode, PowerParams,
    DEFAULT_GROUP_CANDIDATES,
};
pub use timing::TimingParams;
