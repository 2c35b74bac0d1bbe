use approx::assert_relative_eq;
use opima::mapper::{map_fc_layer, LayerSpec};
use opima::memory::MemoryGeometry;
use opima::perf::{
    best_grouping, dse_grouping, efficiency_metrics, evaluate_plan, power_breakdown, NetworkTotals, PerfModels,
    PowerMode, DEFAULT_GROUP_CANDIDATES,
};
use proptest::prelude::*;

/// 64x32 FC at 8 bits worked by hand: 4 slots of 0.2 ns, 4 partials per
/// output, 32 outputs of 2 cells each.
#[test]
fn fc_layer_spreadsheet() {
    let m = PerfModels::default();
    let plan = map_fc_layer(&LayerSpec::fc("f", 64, 32), 8, &m.geometry).unwrap();
    let r = evaluate_plan(&plan, &m);
    // 4*0.2 + 1.0 (ADC) + 2 adder levels * 0.1
    assert_relative_eq!(r.processing_latency_ns, 2.0, max_relative = 1e-12);
    // 0.5 (one lane round) + 32*8*0.01/64 + one 100 ns pulse
    assert_relative_eq!(r.writeback_latency_ns, 100.54, max_relative = 1e-12);
    let e = r.energy;
    let expect = [
        (e.opcm_read, 8192.0 * 5.0),
        (e.opcm_write, 64.0 * 250.0),
        (e.adc, 128.0 * 0.7808),
        (e.dac, 8192.0 * 4.0 * 2.0 + 128.0 * 5.0 * 2.0),
        (e.mdl, 20.97152 * 2.0 * 1e3),
        (e.eo_tuning, 5.12 * 2.0 * 1e3 + 0.32 * 100.54 * 1e3),
        (e.soa, 0.8 * 102.54 * 1e3),
        (e.aggregation, 10.3 * 2.0 * 1e3 + 128.0 * 0.05),
        (e.eoe, 16.2 * 102.54 * 1e3),
    ];
    for (got, want) in expect {
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }
    assert_eq!((r.mac_count, r.slot_count), (2048, 4));
}

#[test]
fn totals_and_efficiency() {
    let m = PerfModels::default();
    let plan = map_fc_layer(&LayerSpec::fc("f", 64, 32), 8, &m.geometry).unwrap();
    let r = evaluate_plan(&plan, &m);
    let t = NetworkTotals::from_results(&[r.clone(), r.clone()]);
    assert_relative_eq!(t.latency_ns(), 2.0 * 102.54, max_relative = 1e-12);
    assert_eq!(t.bits_processed, 2 * 2048 * 8);
    let eff = efficiency_metrics(&t, 55.0).unwrap();
    assert_relative_eq!(eff.fps, 1e9 / 205.08, max_relative = 1e-12);
    assert_relative_eq!(eff.epb_j_per_bit, 2.0 * r.energy.total() * 1e-12 / 32768.0, max_relative = 1e-12);
    assert_relative_eq!(eff.fps_per_watt, eff.fps / 55.0, max_relative = 1e-12);
    assert!(efficiency_metrics(&NetworkTotals::default(), 1.0).is_err());
}

#[test]
fn calibrated_power_at_sixteen_groups() {
    let m = PerfModels::default();
    let p = power_breakdown(&m.geometry, &m.power, PowerMode::Both);
    // 1.5 + 20.97152 + 5.44 + 0.8 + 10.3 + 16.2
    assert_relative_eq!(p.total_w(), 55.21152, max_relative = 1e-12);
    let mut shares = p.entries().to_vec();
    shares.sort_by(|a, b| b.1.total_cmp(&a.1));
    assert_eq!((shares[0].0, shares[1].0), ("mdl_array", "eoe_interface"));
    let mem = power_breakdown(&m.geometry.with_groups(0), &m.power, PowerMode::Both);
    assert_eq!(mem.mdl_w, 0.0);
    assert!(mem.total_w() < p.total_w());
}

#[test]
fn dse_picks_sixteen() {
    let m = PerfModels::default();
    let rows = dse_grouping(&m.geometry, &m.power, m.timing.pim_cycle_hz, &DEFAULT_GROUP_CANDIDATES).unwrap();
    assert_eq!(rows.len(), 7);
    assert_eq!(best_grouping(&rows), Some(16));
    assert!(rows.windows(2).all(|w| w[0].mac_throughput < w[1].mac_throughput));
    assert!(rows.windows(2).all(|w| w[0].rows_available >= w[1].rows_available));
    assert_relative_eq!(rows.iter().map(|r| r.normalized_power).fold(0.0, f64::max), 1.0);
    let single = dse_grouping(&m.geometry, &m.power, m.timing.pim_cycle_hz, &[4]).unwrap();
    assert_eq!(best_grouping(&single), Some(4));
    assert!(dse_grouping(&m.geometry, &m.power, 5e9, &[]).is_err());
}

proptest! {
    #[test]
    fn power_grows_with_groups(g in 1usize..64) {
        let geo = MemoryGeometry::default();
        let p = PerfModels::default().power;
        let a = power_breakdown(&geo.with_groups(g), &p, PowerMode::Both).total_w();
        let b = power_breakdown(&geo.with_groups(g + 1), &p, PowerMode::Both).total_w();
        prop_assert!(b > a);
    }
}
