use approx::assert_relative_eq;
use opima::device::{
    db_fraction_convert, db_to_fraction, fraction_to_db, CellMode, DbDirection, EnergyParams, LossParams, Tuning,
};
use opima::{Devices, Mr, OpcmCell, OpcmCellF32};
use proptest::prelude::*;

#[test]
fn level_map_examples() {
    let ideal = OpcmCell::default();
    assert_eq!(ideal.transmission_of_level(9).unwrap(), 0.6);
    assert_eq!(ideal.transmission_of_level(0).unwrap(), 0.0);
    assert_eq!(ideal.transmission_of_level(15).unwrap(), 1.0);
    assert!(ideal.transmission_of_level(16).is_err());
    let phys = ideal.with_mode(CellMode::Physical);
    assert_relative_eq!(phys.transmission_of_level(0).unwrap(), 0.04);
    assert_relative_eq!(phys.transmission_of_level(15).unwrap(), 1.0);
    assert_relative_eq!(phys.contrast(), 0.96);
    let f32_cell = OpcmCellF32::default();
    assert_relative_eq!(f32_cell.transmission_of_level(9).unwrap(), 0.6f32);
}

#[test]
fn resonance_examples() {
    let mr = Mr::new(2.4, 10.0, Tuning::ElectroOptic).unwrap();
    assert_relative_eq!(mr.resonant_wavelength().unwrap(), 150.796_447_372_310_07, max_relative = 1e-15);
    let unit = Mr::new(1.0, 1.0 / std::f64::consts::TAU, Tuning::ThermoOptic).unwrap();
    assert_relative_eq!(unit.resonant_wavelength().unwrap(), 1.0, max_relative = 1e-15);
    assert!(Mr::new(2.4, 0.0, Tuning::ElectroOptic).is_err());
    assert!(Mr::new(0.5, 1.0, Tuning::ElectroOptic).is_err());
}

#[test]
fn db_examples() {
    assert_relative_eq!(fraction_to_db(0.5f64).unwrap(), 3.010_299_956_639_812, max_relative = 1e-12);
    assert_eq!(fraction_to_db(1.0f64).unwrap(), 0.0);
    assert_relative_eq!(db_to_fraction(0.02f64), 0.995_405_417_351_527_6, max_relative = 1e-12);
    assert!(fraction_to_db(0.0f64).is_err());
    assert_relative_eq!(db_fraction_convert(0.5f64, DbDirection::FractionToDb).unwrap(), 3.0103, epsilon = 1e-4);
}

#[test]
fn write_energy_counts_changed_cells() {
    let cell = OpcmCell::default();
    let targets = [0u32, 3, 0, 15, 7, 0, 0, 1, 2, 0, 9, 0, 0, 0, 4, 0];
    let k = targets.iter().filter(|&&t| t != 0).count() as f64;
    let total: f64 = targets.iter().map(|&t| cell.cell_write_energy(0, t).unwrap()).sum();
    assert_eq!(total, k * 250.0);
}

#[test]
fn table_ratios_and_adc() {
    let e = EnergyParams::default();
    assert_eq!(e.opcm_write_pj / e.opcm_read_pj, 50.0);
    assert_relative_eq!(e.adc_pj_per_conversion(), 0.7808, max_relative = 1e-12);
    let l = LossParams::default();
    assert_relative_eq!(l.crossing_db(), -10.0 * (1.0f64 - 1e-5).log10(), max_relative = 1e-15);
}

#[test]
fn device_json_defaults_and_rejection() {
    let d = Devices::from_json("{}").unwrap();
    assert_eq!(d, Devices::default());
    let neg = Devices::from_json(r#"{"loss": {"eo_mr_drop_db": -1.0}}"#).unwrap();
    assert!(neg.validate(512).is_err());
    assert!(Devices::from_json(r#"{"cell": {"nope": 1}}"#).is_err());
}

proptest! {
    #[test]
    fn transmission_is_monotone(a in 0u32..16, b in 0u32..16, physical in any::<bool>()) {
        let mode = if physical { CellMode::Physical } else { CellMode::Ideal };
        let cell = OpcmCell::default().with_mode(mode);
        let (ta, tb) = (cell.transmission_of_level(a).unwrap(), cell.transmission_of_level(b).unwrap());
        prop_assert_eq!(a.cmp(&b), ta.partial_cmp(&tb).unwrap());
        prop_assert!((0.0..=1.0).contains(&ta));
    }

    #[test]
    fn db_round_trip(f in 1e-6f64..=1.0) {
        let back = db_to_fraction(fraction_to_db(f).unwrap());
        prop_assert!((back - f).abs() <= 1e-12 * f.max(1e-3));
    }

    #[test]
    fn perturbation_stays_bounded(level in 0u32..16, seed in any::<u64>()) {
        use rand::SeedableRng;
        let cell = OpcmCell::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = cell.perturbed_transmission(level, &mut rng).unwrap();
        let ideal = cell.transmission_of_level(level).unwrap();
        prop_assert!((t - ideal).abs() <= cell.scatter_bound + 1e-15);
        prop_assert!((0.0..=1.0).contains(&t));
    }
}
