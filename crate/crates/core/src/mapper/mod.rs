//! Lowering of CNN layer graphs onto the PIM substrate and end-to-end
//! functional simulation.

pub mod exec;
mod network;
mod plan;
pub mod quant;

pub use exec::{execute_pim_layer, ExecOptions, ExecStats};
pub use network::{
    ofm_dims, param_count, Activation, LayerOp, LayerSpec, NetworkSpec, PoolOp, ResolvedLayer, Shape, Source,
};
pub use plan::{
    conv_pixel_location, map_conv_layer, map_fc_layer, map_layer, map_network, plan_tdm, ConvTiling, FcTiling,
    MappingPlan, TdmPass, TdmPlan, WritebackPlan,
};
pub use quant::{reference_inference, LayerWeights, NetworkWeights, QTensor};

use crate::error::{Error, Result};
use crate::perf::{evaluate_plan, LayerResult, PerfModels};

/// Outputs, plans and accounting of one simulated inference.
#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub outputs: Vec<QTensor>,
    pub plans: Vec<MappingPlan>,
    pub results: Vec<LayerResult>,
    pub stats: Vec<ExecStats>,
}

/// Run `network` on `input`: conv and FC layers through the PIM compute
/// model, everything else in the E-O-E controller's digital stage.
pub fn simulate_network(
    network: &NetworkSpec,
    models: &PerfModels,
    input: &QTensor,
    weights: &NetworkWeights,
    opts: &ExecOptions,
) -> Result<NetworkRun> {
    let resolved = network.resolve()?;
    if input.shape != network.input {
        return Err(Error::domain(format!("input shape {:?} differs from {:?}", input.shape, network.input)));
    }
    if weights.layers.len() != network.layers.len() {
        return Err(Error::domain("weights do not match the network"));
    }
    let plans = map_network(network, &models.geometry)?;
    let mut outputs: Vec<QTensor> = Vec::with_capacity(plans.len());
    let mut stats = Vec::with_capacity(plans.len());
    for (i, (layer, r)) in network.layers.iter().zip(&resolved).enumerate() {
        let srcs: Vec<&QTensor> = r
            .sources
            .iter()
            .map(|s| match s {
                Source::Input => input,
                Source::Layer(j) => &outputs[*j],
            })
            .collect();
        let (out, st) = if layer.op.is_pim() {
            let w = weights.layers[i].as_ref().ok_or_else(|| Error::domain(format!("no weights for `{}`", layer.name)))?;
            execute_pim_layer(&plans[i], &models.geometry, srcs[0], w, layer.requant_shift, opts)?
        } else {
            (quant::digital_layer(&layer.op, &srcs, r.output, r.operand_bits)?, ExecStats::default())
        };
        outputs.push(out);
        stats.push(st);
    }
    let results = plans.iter().map(|p| evaluate_plan(p, models)).collect();
    Ok(NetworkRun { outputs, plans, results, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::MemoryGeometry;
    use crate::pim::check_interference_safety;

    fn small_geometry() -> MemoryGeometry {
        MemoryGeometry { banks: 2, subarray_grid: 8, rows_per_subarray: 16, cols_per_subarray: 16, bit_density: 4, group_count: 2 }
    }

    fn toy(bits: u32) -> NetworkSpec {
        NetworkSpec {
            name: "toy".into(),
            description: String::new(),
            declared_parameter_count: None,
            input: [6, 6, 2],
            operand_bits: bits,
            layers: vec![
                LayerSpec::conv("c", [2, 2, 2, 3], 1, 0).with_bias(),
                LayerSpec::relu("r"),
                LayerSpec::fc("f", 75, 4).with_bias(),
            ],
        }
    }

    fn check(net: &NetworkSpec, geo: MemoryGeometry, seed: u64) -> NetworkRun {
        let models = PerfModels { geometry: geo, ..Default::default() };
        let w = NetworkWeights::random(net, seed).unwrap();
        let x = QTensor::random(net.input, net.operand_bits, seed + 1);
        let run = simulate_network(net, &models, &x, &w, &ExecOptions::default()).unwrap();
        let reference = reference_inference(net, &w, &x).unwrap();
        assert_eq!(run.outputs, reference);
        for (p, s) in run.plans.iter().zip(&run.stats) {
            if p.slot_count > 0 {
                assert_eq!(s.conversions, p.conversions, "layer {}", p.layer);
                assert_eq!(s.products, p.products, "layer {}", p.layer);
            }
        }
        run
    }

    #[test]
    fn toy_net_matches_reference() {
        for seed in 0..3 {
            check(&toy(4), MemoryGeometry::default(), seed);
            check(&toy(4), small_geometry(), seed);
            check(&toy(8), small_geometry(), seed);
        }
    }

    #[test]
    fn strided_padded_grouped_and_wide() {
        let net = NetworkSpec {
            name: "mix".into(),
            description: String::new(),
            declared_parameter_count: None,
            input: [9, 21, 4],
            operand_bits: 8,
            layers: vec![
                LayerSpec::conv("a", [3, 3, 4, 6], 2, 1).with_bias(),
                LayerSpec::conv("dw", [3, 3, 1, 6], 1, 1).with_groups(6),
                LayerSpec::conv("pw", [1, 1, 6, 5], 1, 0),
                LayerSpec::conv("b", [5, 5, 4, 2], 1, 2).with_from(&["input"]),
                LayerSpec::conv("b2", [1, 1, 2, 5], 2, 0),
                LayerSpec::new("sum", LayerOp::Add).with_from(&["pw", "b2"]),
                LayerSpec::new("cat", LayerOp::Concat).with_from(&["sum", "a"]),
            ],
        };
        check(&net, small_geometry(), 7);
        check(&net, MemoryGeometry::default(), 8);
    }

    #[test]
    fn all_zero_input_gives_bias_only_outputs() {
        let mut net = toy(4);
        net.layers.truncate(1);
        net.layers[0].has_bias = false;
        let models = PerfModels::default();
        let w = NetworkWeights::random(&net, 3).unwrap();
        let x = QTensor::zeros(net.input, 4, 0);
        // With a zero input every pre-activation is zero: the output sits
        // exactly at the zero point.
        let run = simulate_network(&net, &models, &x, &w, &ExecOptions::default()).unwrap();
        assert!(run.outputs[0].data.iter().all(|&q| i64::from(q) == run.outputs[0].zero));
    }

    #[test]
    fn emitted_schedules_are_safe() {
        let net = toy(8);
        let geo = small_geometry();
        let w = NetworkWeights::random(&net, 1).unwrap();
        let x = QTensor::random(net.input, 8, 2);
        let plans = map_network(&net, &geo).unwrap();
        let mut batches = Vec::new();
        exec::for_each_conv_batch(&plans[0], &geo, &x, w.layers[0].as_ref().unwrap(), |b, _| {
            batches.push(b.clone());
            Ok(())
        })
        .unwrap();
        assert!(!batches.is_empty());
        assert!(check_interference_safety(&batches).is_ok());
    }

    #[test]
    fn analog_mode_is_close_but_not_required_exact() {
        let net = toy(4);
        let models = PerfModels::default();
        let w = NetworkWeights::random(&net, 4).unwrap();
        let x = QTensor::random(net.input, 4, 5);
        let opts = ExecOptions { exact_mode: false, adc_bits: 16, ..Default::default() };
        let run = simulate_network(&net, &models, &x, &w, &opts).unwrap();
        let reference = reference_inference(&net, &w, &x).unwrap();
        let diff: i64 = run.outputs[0]
            .data
            .iter()
            .zip(&reference[0].data)
            .map(|(a, b)| (i64::from(*a) - i64::from(*b)).abs())
            .max()
            .unwrap();
        assert!(diff <= 1, "max deviation {diff}");
    }
}
