//! Behavioral models of the photonic devices: multi-level OPCM cells,
//! microrings, microdisk lasers, mode converters and the dB loss budget
//! primitives shared by every optical path.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a stored level maps to optical transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellMode {
    /// Level 0 is fully opaque; the top level transmits everything.
    #[default]
    Ideal,
    /// Levels span `[t_crystalline, t_amorphous]`; the crystalline offset is
    /// removed later by the aggregation unit.
    Physical,
}

/// One multi-level OPCM (GST) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpcmCellModel<T> {
    pub bit_density: u32,
    pub t_amorphous: T,
    pub t_crystalline: T,
    pub scatter_bound: T,
    pub read_energy_pj: f64,
    pub write_energy_pj: f64,
    pub mode: CellMode,
}

impl<T: Scalar> Default for OpcmCellModel<T> {
    fn default() -> Self {
        Self {
            bit_density: 4,
            t_amorphous: T::ONE,
            t_crystalline: T::of(0.04),
            scatter_bound: T::of(0.05),
            read_energy_pj: 5.0,
            write_energy_pj: 250.0,
            mode: CellMode::Ideal,
        }
    }
}

impl<T: Scalar> OpcmCellModel<T> {
    pub fn with_mode(mut self, mode: CellMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bit_density == 0 || self.bit_density > 8 {
            return Err(Error::config(format!(
                "bit_density must be in 1..=8, got {}",
                self.bit_density
            )));
        }
        let (ta, tc) = (self.t_amorphous, self.t_crystalline);
        if !(T::ZERO <= tc && tc < ta && ta <= T::ONE) {
            return Err(Error::config(format!(
                "need 0 <= t_crystalline < t_amorphous <= 1, got t_c={tc}, t_a={ta}"
            )));
        }
        if !(self.scatter_bound >= T::ZERO && self.scatter_bound < self.contrast()) {
            return Err(Error::config("scatter_bound must be in [0, contrast)"));
        }
        if self.read_energy_pj < 0.0 || self.write_energy_pj < 0.0 {
            return Err(Error::config("cell energies must be nonnegative"));
        }
        Ok(())
    }

    /// `t_amorphous - t_crystalline`.
    pub fn contrast(&self) -> T {
        self.t_amorphous - self.t_crystalline
    }

    pub fn levels(&self) -> u32 {
        1 << self.bit_density
    }

    pub fn max_level(&self) -> u32 {
        self.levels() - 1
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level >= self.levels() {
            return Err(Error::domain(format!(
                "level {level} out of range for a {}-bit cell",
                self.bit_density
            )));
        }
        Ok(())
    }

    /// Normalized transmission of a programmed level (linear level spacing).
    pub fn transmission_of_level(&self, level: u32) -> Result<T> {
        self.check_level(level)?;
        Ok(self.transmission_unchecked(level))
    }

    #[inline]
    pub(crate) fn transmission_unchecked(&self, level: u32) -> T {
        let frac = T::of(level as f64) / T::of(self.max_level() as f64);
        match self.mode {
            CellMode::Ideal => frac,
            CellMode::Physical => self.t_crystalline + frac * self.contrast(),
        }
    }

    /// Transmission with an unwanted scatter/back-reflection change drawn
    /// uniformly from `±scatter_bound`, clamped to `[0, 1]`.
    pub fn perturbed_transmission<R: Rng + ?Sized>(&self, level: u32, rng: &mut R) -> Result<T> {
        let t = self.transmission_of_level(level)?;
        let sb = self.scatter_bound.to_f64_lossy();
        let delta = if sb > 0.0 { rng.gen_range(-sb..=sb) } else { 0.0 };
        Ok((t + T::of(delta)).max(T::ZERO).min(T::ONE))
    }

    /// Energy to move a cell between levels; a same-level write issues no pulse.
    pub fn cell_write_energy(&self, from_level: u32, to_level: u32) -> Result<f64> {
        self.check_level(from_level)?;
        self.check_level(to_level)?;
        Ok(if from_level == to_level { 0.0 } else { self.write_energy_pj })
    }
}

/// Direction for [`db_fraction_convert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbDirection {
    FractionToDb,
    DbToFraction,
}

/// Loss in dB of a power fraction: `-10 log10(fraction)`.
pub fn fraction_to_db<T: Scalar>(fraction: T) -> Result<T> {
    if !(fraction > T::ZERO) || fraction.is_nan() {
        return Err(Error::domain(format!("fraction must be positive, got {fraction}")));
    }
    Ok(-T::TEN * fraction.log10())
}

/// Inverse of [`fraction_to_db`].
pub fn db_to_fraction<T: Scalar>(db: T) -> T {
    T::TEN.powf(-db / T::TEN)
}

pub fn db_fraction_convert<T: Scalar>(value: T, direction: DbDirection) -> Result<T> {
    match direction {
        DbDirection::FractionToDb => fraction_to_db(value),
        DbDirection::DbToFraction => Ok(db_to_fraction(value)),
    }
}

/// Insertion losses of every passive and active path element.
///
/// This is the only place loss figures live; path budgeting reads nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    pub directional_coupler_db: f64,
    pub mr_drop_db: f64,
    pub mr_through_db: f64,
    pub propagation_db_per_cm: f64,
    pub bend_db_per_90deg: f64,
    pub eo_mr_drop_db: f64,
    pub eo_mr_through_db: f64,
    pub soa_gain_db: f64,
    pub crossing_loss_fraction: f64,
    pub crossing_crosstalk_db: f64,
    /// Not characterized in the device table; 0.5 dB is an assumption.
    pub gst_switch_db: f64,
    /// Insertion loss of a cell at its most transparent level.
    pub opcm_cell_db: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            directional_coupler_db: 0.02,
            mr_drop_db: 0.5,
            mr_through_db: 0.02,
            propagation_db_per_cm: 0.1,
            bend_db_per_90deg: 0.01,
            eo_mr_drop_db: 1.6,
            eo_mr_through_db: 0.33,
            soa_gain_db: 20.0,
            crossing_loss_fraction: 1e-5,
            crossing_crosstalk_db: -40.0,
            gst_switch_db: 0.5,
            opcm_cell_db: 0.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("directional_coupler_db", self.directional_coupler_db),
            ("mr_drop_db", self.mr_drop_db),
            ("mr_through_db", self.mr_through_db),
            ("propagation_db_per_cm", self.propagation_db_per_cm),
            ("bend_db_per_90deg", self.bend_db_per_90deg),
            ("eo_mr_drop_db", self.eo_mr_drop_db),
            ("eo_mr_through_db", self.eo_mr_through_db),
            ("soa_gain_db", self.soa_gain_db),
            ("gst_switch_db", self.gst_switch_db),
            ("opcm_cell_db", self.opcm_cell_db),
        ];
        for (name, v) in entries {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.crossing_loss_fraction) {
            return Err(Error::config("crossing_loss_fraction must be in [0, 1)"));
        }
        Ok(())
    }

    /// Insertion loss of one waveguide crossing in dB.
    pub fn crossing_db(&self) -> f64 {
        -10.0 * (1.0 - self.crossing_loss_fraction).log10()
    }
}

/// Conversion and access energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    pub opcm_read_pj: f64,
    pub opcm_write_pj: f64,
    pub adc_fj_per_step: f64,
    pub adc_bits: u32,
    pub dac_pj_per_bit: f64,
    /// Reference only; nothing in the simulator touches DRAM.
    pub dram_access_pj_per_bit: f64,
    /// Aggregation-unit partial-sum cache access.
    pub sram_access_pj: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            opcm_read_pj: 5.0,
            opcm_write_pj: 250.0,
            adc_fj_per_step: 24.4,
            adc_bits: 5,
            dac_pj_per_bit: 2.0,
            dram_access_pj_per_bit: 20.0,
            sram_access_pj: 0.05,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let entries = [
            self.opcm_read_pj,
            self.opcm_write_pj,
            self.adc_fj_per_step,
            self.dac_pj_per_bit,
            self.dram_access_pj_per_bit,
            self.sram_access_pj,
        ];
        if entries.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("energy parameters must be finite and >= 0"));
        }
        if self.adc_bits == 0 || self.adc_bits > 24 {
            return Err(Error::config("adc_bits must be in 1..=24"));
        }
        Ok(())
    }

    /// Energy of one ADC conversion: `fJ/step * 2^bits`, in picojoules.
    pub fn adc_pj_per_conversion(&self) -> f64 {
        self.adc_fj_per_step * f64::from(1u32 << self.adc_bits) * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    ThermoOptic,
    #[default]
    ElectroOptic,
}

/// Microring resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MrModel<T> {
    pub effective_index: T,
    /// Micrometers.
    pub radius: T,
    pub tuning: Tuning,
}

impl<T: Scalar> Default for MrModel<T> {
    fn default() -> Self {
        Self { effective_index: T::of(2.4), radius: T::of(5.0), tuning: Tuning::ElectroOptic }
    }
}

impl<T: Scalar> MrModel<T> {
    pub fn new(effective_index: T, radius: T, tuning: Tuning) -> Result<Self> {
        let mr = Self { effective_index, radius, tuning };
        mr.validate()?;
        Ok(mr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.effective_index >= T::ONE) {
            return Err(Error::config("MR effective index must be at least 1"));
        }
        if !(self.radius > T::ZERO) {
            return Err(Error::config("MR radius must be positive"));
        }
        Ok(())
    }

    /// Resonant wavelength in micrometers, `2π · n_eff · R`.
    ///
    /// The usual resonance condition carries an integer mode order
    /// (`m λ = 2π n_eff R`); this returns the `m = 1` value.
    pub fn resonant_wavelength(&self) -> Result<T> {
        self.validate()?;
        Ok(T::TAU() * self.effective_index * self.radius)
    }
}

/// Per-subarray microdisk laser array used for PIM reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdlModel {
    pub per_laser_power_mw: f64,
    pub count_per_subarray: usize,
    pub modulation_rate_hz: f64,
}

impl Default for MdlModel {
    fn default() -> Self {
        Self { per_laser_power_mw: 0.01, count_per_subarray: 512, modulation_rate_hz: 5e9 }
    }
}

impl MdlModel {
    pub fn validate(&self, subarray_columns: usize) -> Result<()> {
        if !(self.per_laser_power_mw > 0.0) {
            return Err(Error::config("per_laser_power_mw must be positive"));
        }
        if self.count_per_subarray != subarray_columns {
            return Err(Error::config(format!(
                "MDL count per subarray ({}) must equal subarray columns ({subarray_columns})",
                self.count_per_subarray
            )));
        }
        Ok(())
    }
}

/// Inverse-designed TE mode converter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeConverterModel {
    pub max_modes: usize,
    pub insertion_loss_db: f64,
}

/// Highest usable mode-division multiplexing degree.
pub const MDM_DEGREE: usize = 4;

impl Default for ModeConverterModel {
    fn default() -> Self {
        Self { max_modes: MDM_DEGREE, insertion_loss_db: 0.1 }
    }
}

impl ModeConverterModel {
    pub fn validate(&self) -> Result<()> {
        if self.max_modes != MDM_DEGREE {
            return Err(Error::config(format!("max_modes is fixed at {MDM_DEGREE}")));
        }
        if !(self.insertion_loss_db >= 0.0) {
            return Err(Error::config("mode converter loss must be >= 0"));
        }
        Ok(())
    }
}

/// Every device parameter section, as loaded from a config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct DeviceParams<T> {
    pub cell: OpcmCellModel<T>,
    pub loss: LossParams,
    pub energy: EnergyParams,
    pub mr: MrModel<T>,
    pub mdl: MdlModel,
    pub mode_converter: ModeConverterModel,
}

impl<T: Scalar> Default for DeviceParams<T> {
    fn default() -> Self {
        Self {
            cell: OpcmCellModel::default(),
            loss: LossParams::default(),
            energy: EnergyParams::default(),
            mr: MrModel::default(),
            mdl: MdlModel::default(),
            mode_converter: ModeConverterModel::default(),
        }
    }
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> DeviceParams<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { path: "<device params>".into(), message: e.to_string() })
    }
}

impl<T: Scalar> DeviceParams<T> {
    pub fn validate(&self, subarray_columns: usize) -> Result<()> {
        self.cell.validate()?;
        self.loss.validate()?;
        self.energy.validate()?;
        self.mr.validate()?;
        self.mdl.validate(subarray_columns)?;
        self.mode_converter.validate()?;
        if (self.cell.read_energy_pj - self.energy.opcm_read_pj).abs() > 0.0
            || (self.cell.write_energy_pj - self.energy.opcm_write_pj).abs() > 0.0
        {
            return Err(Error::config("cell read/write energies disagree with the energy section"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn physical() -> OpcmCellModel<f64> {
        OpcmCellModel::default().with_mode(CellMode::Physical)
    }

    #[test]
    fn physical_endpoints_and_contrast() {
        let cell = physical();
        assert_relative_eq!(cell.transmission_of_level(15).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(cell.transmission_of_level(0).unwrap(), 0.04, epsilon = 1e-12);
        assert_relative_eq!(cell.contrast(), 0.96, epsilon = 1e-12);
    }

    #[test]
    fn ideal_levels() {
        let cell = OpcmCellModel::<f64>::default();
        assert_eq!(cell.transmission_of_level(0).unwrap(), 0.0);
        assert_eq!(cell.transmission_of_level(9).unwrap(), 9.0 / 15.0);
        assert_relative_eq!(cell.transmission_of_level(9).unwrap(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn level_out_of_range() {
        let cell = OpcmCellModel::<f32>::default();
        assert!(matches!(cell.transmission_of_level(16), Err(Error::Domain(_))));
        assert!(cell.cell_write_energy(0, 16).is_err());
    }

    #[test]
    fn transmission_monotone_and_offset() {
        for cell in [OpcmCellModel::<f64>::default(), physical()] {
            let t: Vec<f64> = (0..16).map(|l| cell.transmission_of_level(l).unwrap()).collect();
            assert!(t.windows(2).all(|w| w[1] > w[0]));
            assert_relative_eq!(t[15] - t[0], if cell.mode == CellMode::Ideal { 1.0 } else { 0.96 }, epsilon = 1e-12);
        }
        let ideal = OpcmCellModel::<f64>::default();
        let phys = physical();
        for l in 0..16 {
            let d = phys.transmission_of_level(l).unwrap() - ideal.transmission_of_level(l).unwrap() * phys.contrast();
            assert_relative_eq!(d, 0.04, epsilon = 1e-12);
        }
    }

    #[test]
    fn resonance_relation() {
        let mr = MrModel::new(2.4f64, 10.0, Tuning::ElectroOptic).unwrap();
        assert_relative_eq!(mr.resonant_wavelength().unwrap(), 150.79644737231007, epsilon = 1e-9);
        let unit = MrModel::new(1.0f64, 1.0 / (2.0 * std::f64::consts::PI), Tuning::ThermoOptic).unwrap();
        assert_relative_eq!(unit.resonant_wavelength().unwrap(), 1.0, epsilon = 1e-15);
        assert!(MrModel::new(2.4f64, 0.0, Tuning::ElectroOptic).is_err());
        assert!(MrModel::new(0.9f64, 1.0, Tuning::ElectroOptic).is_err());
    }

    #[test]
    fn db_conversions() {
        assert_relative_eq!(fraction_to_db(0.5f64).unwrap(), 3.010299956639812, epsilon = 1e-12);
        assert_eq!(fraction_to_db(1.0f64).unwrap(), 0.0);
        assert_relative_eq!(db_to_fraction(0.02f64), 0.995405417351527, epsilon = 1e-12);
        assert!(fraction_to_db(0.0f64).is_err());
        assert!(fraction_to_db(-0.1f32).is_err());
        assert_eq!(db_fraction_convert(1.0f64, DbDirection::FractionToDb).unwrap(), 0.0);
    }

    #[test]
    fn write_energy() {
        let cell = OpcmCellModel::<f64>::default();
        assert_eq!(cell.cell_write_energy(3, 12).unwrap(), 250.0);
        assert_eq!(cell.cell_write_energy(7, 7).unwrap(), 0.0);
    }

    #[test]
    fn row_write_energy_counts_nonzero_targets() {
        use rand::SeedableRng;
        let cell = OpcmCellModel::<f64>::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let targets: Vec<u32> = (0..16).map(|_| rng.gen_range(0..16)).collect();
        let k = targets.iter().filter(|&&t| t != 0).count();
        let total: f64 = targets.iter().map(|&t| cell.cell_write_energy(0, t).unwrap()).sum();
        assert_eq!(total, k as f64 * 250.0);
    }

    #[test]
    fn scatter_perturbation_stays_bounded() {
        use rand::SeedableRng;
        let cell = physical();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for l in 0..16 {
            let t = cell.transmission_of_level(l).unwrap();
            let p = cell.perturbed_transmission(l, &mut rng).unwrap();
            assert!((p - t).abs() <= 0.05 + 1e-12 && (0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn table_defaults_and_validation() {
        let p = DeviceParams::<f64>::default();
        p.validate(512).unwrap();
        assert_eq!(p.energy.opcm_write_pj / p.energy.opcm_read_pj, 50.0);
        assert_relative_eq!(p.energy.adc_pj_per_conversion(), 0.7808, epsilon = 1e-12);
        assert_relative_eq!(p.loss.crossing_db(), -10.0 * (1.0f64 - 1e-5).log10(), epsilon = 0.0);

        let mut bad = p.clone();
        bad.loss.mr_drop_db = -0.5;
        assert!(matches!(bad.validate(512), Err(Error::Config(_))));
        assert!(p.mdl.validate(256).is_err());
        let bad_cell = OpcmCellModel::<f64> { t_crystalline: 1.0, ..Default::default() };
        assert!(bad_cell.validate().is_err());
    }

    #[test]
    fn device_json_partial_override() {
        let p = DeviceParams::<f64>::from_json(r#"{"loss": {"gst_switch_db": 0.8}}"#).unwrap();
        assert_eq!(p.loss.gst_switch_db, 0.8);
        assert_eq!(p.loss.soa_gain_db, 20.0);
        assert!(DeviceParams::<f64>::from_json(r#"{"loss": {"bogus": 1}}"#).is_err());
    }

    proptest! {
        #[test]
        fn db_round_trip(f in 1e-6f64..=1.0) {
            let back = db_to_fraction(fraction_to_db(f).unwrap());
            prop_assert!(((back - f) / f).abs() < 1e-12);
        }
    }
}
