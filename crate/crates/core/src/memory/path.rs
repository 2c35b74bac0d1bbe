//! Optical read paths and their loss / laser-power budgets.
//!
//! Path composition (fixed per geometry):
//!
//! * external laser: coupler, bank mode filter (MR drop), bank GST switch,
//!   trunk propagation, bend, subarray GST switch, one EO-MR through per row
//!   passed, access EO-MR drop, cell, readout EO-MR drop, readout propagation,
//!   bend.
//! * local MDL: coupler, one EO-MR through per row passed, access EO-MR drop,
//!   cell, readout EO-MR drop, propagation to the aggregation side, one
//!   crossing per subarray column passed on the computation waveguide.
//!
//! Trunk length is `hop_pitch_cm · (1 + subarray_row + subarray_col)` plus
//! `cell_pitch_cm · col`. An SOA is inserted whenever the loss accumulated
//! since the previous SOA reaches `soa_interval_db`.

use serde::{Deserialize, Serialize};

use super::{CellLocation, MemoryGeometry};
use crate::device::LossParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "element", rename_all = "snake_case")]
pub enum PathElement {
    DirectionalCoupler,
    MrDrop,
    MrThrough,
    EoMrDrop,
    EoMrThrough,
    Propagation { length_cm: f64 },
    Bend,
    Crossing,
    GstSwitch,
    OpcmCell,
    Soa,
}

impl PathElement {
    /// Net loss in dB; amplifiers return a negative value.
    pub fn loss_db(&self, p: &LossParams) -> f64 {
        match *self {
            PathElement::DirectionalCoupler => p.directional_coupler_db,
            PathElement::MrDrop => p.mr_drop_db,
            PathElement::MrThrough => p.mr_through_db,
            PathElement::EoMrDrop => p.eo_mr_drop_db,
            PathElement::EoMrThrough => p.eo_mr_through_db,
            PathElement::Propagation { length_cm } => length_cm * p.propagation_db_per_cm,
            PathElement::Bend => p.bend_db_per_90deg,
            PathElement::Crossing => p.crossing_db(),
            PathElement::GstSwitch => p.gst_switch_db,
            PathElement::OpcmCell => p.opcm_cell_db,
            PathElement::Soa => -p.soa_gain_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightSource {
    ExternalLaser,
    LocalMdl,
}

/// Floorplan and receiver assumptions; none of these are characterized
/// device values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloorplanParams {
    pub hop_pitch_cm: f64,
    pub cell_pitch_cm: f64,
    pub soa_interval_db: f64,
    pub group_index: f64,
    pub pd_sensitivity_dbm: f64,
    pub margin_db: f64,
    pub per_wavelength_power_cap_dbm: f64,
}

impl Default for FloorplanParams {
    fn default() -> Self {
        Self {
            hop_pitch_cm: 0.05,
            cell_pitch_cm: 0.001,
            soa_interval_db: 15.0,
            group_index: 4.2,
            pd_sensitivity_dbm: -20.0,
            margin_db: 3.0,
            per_wavelength_power_cap_dbm: 10.0,
        }
    }
}

impl FloorplanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_pitch_cm > 0.0 && self.cell_pitch_cm >= 0.0) {
            return Err(Error::config("pitches must be positive"));
        }
        if !(self.soa_interval_db > 0.0 && self.group_index >= 1.0) {
            return Err(Error::config("soa_interval_db must be positive and group_index >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalPath {
    pub elements: Vec<PathElement>,
}

impl SignalPath {
    pub fn new(elements: Vec<PathElement>) -> Result<Self> {
        let path = Self { elements };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::domain("signal path must not be empty"));
        }
        for e in &self.elements {
            if let PathElement::Propagation { length_cm } = e {
                if !(*length_cm > 0.0) {
                    return Err(Error::domain("propagation lengths must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn concat(&self, other: &SignalPath) -> SignalPath {
        let mut elements = self.elements.clone();
        elements.extend_from_slice(&other.elements);
        SignalPath { elements }
    }

    pub fn count(&self, pred: impl Fn(&PathElement) -> bool) -> usize {
        self.elements.iter().filter(|e| pred(e)).count()
    }

    pub fn length_cm(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| match e {
                PathElement::Propagation { length_cm } => *length_cm,
                _ => 0.0,
            })
            .sum()
    }

    /// Time of flight through the waveguides in nanoseconds.
    pub fn propagation_ns(&self, group_index: f64) -> f64 {
        const C_CM_PER_NS: f64 = 29.979_245_8;
        self.length_cm() * group_index / C_CM_PER_NS
    }
}

/// Sum of element losses minus SOA gains.
pub fn path_loss_db(path: &SignalPath, loss: &LossParams) -> f64 {
    path.elements.iter().map(|e| e.loss_db(loss)).sum()
}

/// Laser power in dBm needed to land `pd_sensitivity_dbm` at the detector.
pub fn required_laser_power(
    path: &SignalPath,
    loss: &LossParams,
    pd_sensitivity_dbm: f64,
    margin_db: f64,
) -> Result<f64> {
    let l = path_loss_db(path, loss);
    if !l.is_finite() {
        return Err(Error::domain("path loss is not finite"));
    }
    Ok(pd_sensitivity_dbm + l + margin_db)
}

/// Build the deterministic read path for `location`.
pub fn build_read_path(
    location: &CellLocation,
    geometry: &MemoryGeometry,
    source: LightSource,
    floorplan: &FloorplanParams,
    loss: &LossParams,
) -> Result<SignalPath> {
    location.validate(geometry)?;
    use PathElement::*;
    let hops = 1 + location.subarray_row + location.subarray_col;
    let trunk = floorplan.hop_pitch_cm * hops as f64;
    let in_row = floorplan.cell_pitch_cm * location.col as f64;
    let mut raw = Vec::with_capacity(16 + location.row + location.subarray_col);
    match source {
        LightSource::ExternalLaser => {
            raw.extend([DirectionalCoupler, MrDrop, GstSwitch, Propagation { length_cm: trunk }, Bend, GstSwitch]);
            raw.extend(std::iter::repeat_n(EoMrThrough, location.row));
            raw.extend([EoMrDrop, OpcmCell, EoMrDrop]);
            raw.push(Propagation { length_cm: floorplan.hop_pitch_cm + in_row });
            raw.push(Bend);
        }
        LightSource::LocalMdl => {
            raw.push(DirectionalCoupler);
            raw.extend(std::iter::repeat_n(EoMrThrough, location.row));
            raw.extend([EoMrDrop, OpcmCell, EoMrDrop]);
            raw.push(Propagation { length_cm: trunk + in_row });
            raw.extend(std::iter::repeat_n(Crossing, location.subarray_col));
        }
    }
    let elements = insert_soas(raw, loss, floorplan.soa_interval_db);
    SignalPath::new(elements)
}

fn insert_soas(raw: Vec<PathElement>, loss: &LossParams, interval_db: f64) -> Vec<PathElement> {
    let mut out = Vec::with_capacity(raw.len() + 4);
    let mut acc = 0.0;
    for e in raw {
        acc += e.loss_db(loss);
        out.push(e);
        if acc >= interval_db {
            out.push(PathElement::Soa);
            acc = 0.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use PathElement::*;

    fn loc(sr: usize, sc: usize, row: usize, col: usize) -> CellLocation {
        CellLocation { bank: 0, subarray_row: sr, subarray_col: sc, row, col }
    }

    fn setup() -> (MemoryGeometry, FloorplanParams, LossParams) {
        (MemoryGeometry::default(), FloorplanParams::default(), LossParams::default())
    }

    #[test]
    fn hand_summed_loss() {
        let lp = LossParams::default();
        let p = SignalPath::new(vec![DirectionalCoupler, MrDrop, Propagation { length_cm: 0.5 }]).unwrap();
        assert_relative_eq!(path_loss_db(&p, &lp), 0.57, epsilon = 1e-12);
        let with_soa = p.concat(&SignalPath { elements: vec![Soa] });
        assert_relative_eq!(path_loss_db(&with_soa, &lp), 0.57 - 20.0, epsilon = 1e-12);
        let tiny = SignalPath { elements: vec![Propagation { length_cm: 1e-300 }] };
        assert_relative_eq!(path_loss_db(&tiny, &lp), 0.0, epsilon = 1e-12);
        assert!(SignalPath::new(vec![]).is_err());
        assert!(SignalPath::new(vec![Propagation { length_cm: 0.0 }]).is_err());
    }

    #[test]
    fn nearest_mdl_path_shape() {
        let (g, f, lp) = setup();
        let p = build_read_path(&loc(0, 0, 0, 0), &g, LightSource::LocalMdl, &f, &lp).unwrap();
        assert_eq!(
            p.elements,
            vec![DirectionalCoupler, EoMrDrop, OpcmCell, EoMrDrop, Propagation { length_cm: f.hop_pitch_cm }]
        );
    }

    #[test]
    fn farther_cells_lose_more() {
        let (g, f, lp) = setup();
        for source in [LightSource::LocalMdl, LightSource::ExternalLaser] {
            let near = build_read_path(&loc(0, 0, 0, 0), &g, source, &f, &lp).unwrap();
            let far = build_read_path(&loc(63, 63, 10, 511), &g, source, &f, &lp).unwrap();
            assert!(path_loss_db(&far, &lp) > path_loss_db(&near, &lp));
        }
    }

    #[test]
    fn one_more_crossing() {
        let (g, f, lp) = setup();
        let a = build_read_path(&loc(0, 3, 0, 0), &g, LightSource::LocalMdl, &f, &lp).unwrap();
        let mut b = a.clone();
        b.elements.push(Crossing);
        let delta = path_loss_db(&b, &lp) - path_loss_db(&a, &lp);
        assert_relative_eq!(delta, -10.0 * (1.0f64 - 1e-5).log10(), epsilon = 1e-15);
    }

    #[test]
    fn laser_power_budget() {
        let lp = LossParams::default();
        // 10 dB of loss from ten 1 dB-equivalent elements: use propagation.
        let p = SignalPath::new(vec![Propagation { length_cm: 100.0 }]).unwrap();
        assert_relative_eq!(required_laser_power(&p, &lp, -20.0, 3.0).unwrap(), -7.0, epsilon = 1e-12);
        let zero = SignalPath::new(vec![OpcmCell]).unwrap();
        assert_eq!(required_laser_power(&zero, &lp, -20.0, 0.0).unwrap(), -20.0);
        let amplified = p.concat(&SignalPath { elements: vec![Soa] });
        let d = required_laser_power(&p, &lp, -20.0, 3.0).unwrap()
            - required_laser_power(&amplified, &lp, -20.0, 3.0).unwrap();
        assert_relative_eq!(d, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn soa_placement_keeps_power_under_cap() {
        let (g, f, lp) = setup();
        for source in [LightSource::LocalMdl, LightSource::ExternalLaser] {
            for &(sr, sc, row, col) in &[(0, 0, 0, 0), (63, 63, 255, 511), (17, 40, 128, 300), (0, 63, 255, 0)] {
                let p = build_read_path(&loc(sr, sc, row, col), &g, source, &f, &lp).unwrap();
                let dbm = required_laser_power(&p, &lp, f.pd_sensitivity_dbm, f.margin_db).unwrap();
                assert!(dbm.is_finite() && dbm <= f.per_wavelength_power_cap_dbm, "{dbm} dBm");
            }
        }
    }

    #[test]
    fn loss_is_additive_over_concatenation() {
        let (g, f, lp) = setup();
        let a = build_read_path(&loc(1, 2, 3, 4), &g, LightSource::ExternalLaser, &f, &lp).unwrap();
        let b = build_read_path(&loc(5, 6, 7, 8), &g, LightSource::LocalMdl, &f, &lp).unwrap();
        assert_relative_eq!(
            path_loss_db(&a.concat(&b), &lp),
            path_loss_db(&a, &lp) + path_loss_db(&b, &lp),
            epsilon = 1e-9
        );
        let mut rev = a.clone();
        rev.elements.reverse();
        assert_relative_eq!(path_loss_db(&rev, &lp), path_loss_db(&a, &lp), epsilon = 1e-9);
    }
}
