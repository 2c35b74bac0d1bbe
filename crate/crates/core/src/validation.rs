//! Self-checks run by `opima validate`: catalog counts, exhaustive
//! nibble arithmetic, the 2x2-kernel mapping example and loss-budget sums.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use serde::Serialize;

use crate::device::LossParams;
use crate::error::{Error, Result};
use crate::mapper::exec::for_each_conv_batch;
use crate::mapper::{map_conv_layer, LayerSpec, LayerWeights, QTensor};
use crate::memory::path::{path_loss_db, PathElement, SignalPath};
use crate::memory::MemoryGeometry;
use crate::pim::{interfere_mac_exact, OutputTag, nibble_decompose, shift_add_combine};
use crate::workloads::WorkloadCatalog;

/// One line of the validation matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<16} {}", self.name, self.detail)
    }
}

fn to_check(name: &str, r: Result<String>) -> CheckResult {
    match r {
        Ok(detail) => CheckResult { name: name.into(), passed: true, detail },
        Err(e) => CheckResult { name: name.into(), passed: false, detail: e.to_string() },
    }
}

/// Every operand pair at `bits` recombined from its cell-width cross
/// products. Returns the number of pairs checked.
pub fn exhaustive_shift_add(bits: u32, cell_bits: u32) -> Result<u64> {
    let n = 1u64 << bits;
    let digits: Vec<Vec<(u64, u32)>> =
        (0..n).map(|v| nibble_decompose(v, bits, cell_bits)).collect::<Result<_>>()?;
    for a in 0..n {
        for b in 0..n {
            let partials = digits[a as usize]
                .iter()
                .flat_map(|&(x, sx)| digits[b as usize].iter().map(move |&(y, sy)| ((x * y) as i128, sx + sy)));
            if shift_add_combine(partials) != BigInt::from(a * b) {
                return Err(Error::Validation(format!("{a} x {b} does not recombine")));
            }
        }
    }
    Ok(n * n)
}

/// A symbolic product: stored feature name times driven kernel name.
pub type Term = (String, String);

/// Slot 0 of the 2x2 kernel over a 2x4 single-channel feature map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkedExample {
    /// Terms per wavelength, for the wavelengths of the first output.
    pub symbolic: BTreeMap<usize, Vec<Term>>,
    pub numeric: BTreeMap<usize, u64>,
    pub features: [[u16; 4]; 2],
    pub kernel: [[u16; 2]; 2],
}

impl WorkedExample {
    /// Sums the hand derivation predicts for wavelengths 0 and 1.
    pub fn expected(&self) -> (BTreeMap<usize, Vec<Term>>, BTreeMap<usize, u64>) {
        let t = |k: &str, f: &str| (f.to_string(), k.to_string());
        let symbolic = BTreeMap::from([
            (0, vec![t("k00", "f00"), t("k10", "f10")]),
            (1, vec![t("k01", "f01"), t("k11", "f11")]),
        ]);
        let (f, k) = (self.features, self.kernel);
        let m = |a: u16, b: u16| u64::from(a) * u64::from(b);
        let numeric =
            BTreeMap::from([(0, m(k[0][0], f[0][0]) + m(k[1][0], f[1][0])), (1, m(k[0][1], f[0][1]) + m(k[1][1], f[1][1]))]);
        (symbolic, numeric)
    }
}

/// Map the example through the conv mapper and read back slot 0.
///
/// Features and kernel entries get pairwise distinct levels so every stored
/// and driven value names its symbol unambiguously.
pub fn worked_example() -> Result<WorkedExample> {
    let features: [[u16; 4]; 2] = [[1, 2, 3, 4], [5, 6, 7, 8]];
    let kernel: [[u16; 2]; 2] = [[9, 10], [11, 12]];
    let geometry = MemoryGeometry::default();
    let layer = LayerSpec::conv("example", [2, 2, 1, 1], 1, 0);
    let plan = map_conv_layer(&layer, [2, 4, 1], 4, &geometry)?;
    let x = QTensor { shape: [2, 4, 1], bits: 4, zero: 0, data: features.iter().flatten().copied().collect() };
    let w = LayerWeights { bits: 4, zero: 8, weights: kernel.iter().flatten().copied().collect(), bias: vec![0] };
    let fname: BTreeMap<u16, String> =
        (0..2).flat_map(|y| (0..4).map(move |x| (features[y][x], format!("f{y}{x}")))).collect();
    let kname: BTreeMap<u16, String> =
        (0..2).flat_map(|y| (0..2).map(move |x| (kernel[y][x], format!("k{y}{x}")))).collect();
    let mut symbolic: BTreeMap<usize, Vec<Term>> = BTreeMap::new();
    let mut numeric = BTreeMap::new();
    for_each_conv_batch(&plan, &geometry, &x, &w, |batch, _| {
        if batch.slot != 0 {
            return Ok(());
        }
        for d in &batch.drives {
            for (i, tag) in d.tags.iter().enumerate() {
                // Only the wavelengths of output element 0.
                if tag.map(|t| t.0) == Some(0) {
                    let f = &fname[&u16::from(d.stored[i])];
                    let k = &kname[&u16::from(d.input.0[i])];
                    symbolic.entry(d.offset + i).or_default().push((f.clone(), k.clone()));
                }
            }
        }
        for s in interfere_mac_exact(batch)? {
            if s.tag == OutputTag(0) {
                numeric.insert(s.wavelength, s.value);
            }
        }
        Ok(())
    })?;
    for terms in symbolic.values_mut() {
        terms.sort();
    }
    Ok(WorkedExample { symbolic, numeric, features, kernel })
}

/// Loss sums of the device table checked against hand-computed values:
/// coupler + drop + 0.5 cm of waveguide, the same with one SOA, and the
/// increment of one crossing.
pub fn loss_golden_sums(loss: &LossParams) -> Result<String> {
    use PathElement::*;
    const BASE_DB: f64 = 0.02 + 0.5 + 0.05;
    const SOA_DB: f64 = BASE_DB - 20.0;
    let crossing_db = -10.0 * (1.0 - 1e-5f64).log10();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let base = SignalPath::new(vec![DirectionalCoupler, MrDrop, Propagation { length_cm: 0.5 }])?;
    let got = path_loss_db(&base, loss);
    if !close(got, BASE_DB) {
        return Err(Error::Validation(format!("coupler + drop + 0.5 cm = {got} dB, expected {BASE_DB}")));
    }
    let amplified = path_loss_db(&base.concat(&SignalPath::new(vec![Soa])?), loss);
    if !close(amplified, SOA_DB) {
        return Err(Error::Validation(format!("with SOA {amplified} dB, expected {SOA_DB}")));
    }
    let crossed = path_loss_db(&base.concat(&SignalPath::new(vec![Crossing])?), loss);
    if !close(crossed - got, crossing_db) {
        return Err(Error::Validation(format!("crossing adds {} dB, expected {crossing_db}", crossed - got)));
    }
    Ok(format!("{got:.2} dB, {amplified:.2} dB with SOA, +{crossing_db:.4e} dB per crossing"))
}

/// Run every check; never stops early.
pub fn run_suite(catalog: Result<WorkloadCatalog>, loss: &LossParams) -> Vec<CheckResult> {
    let catalog_check = catalog.and_then(|c| {
        let report = c.validate();
        report.check()?;
        Ok(format!("{}/{} models match their declared parameter counts", report.matched(), report.entries.len()))
    });
    let shift_add = exhaustive_shift_add(8, 4).map(|n| format!("{n} 8-bit pairs exact"));
    let example = worked_example().and_then(|ex| {
        let (sym, num) = ex.expected();
        if ex.symbolic != sym || ex.numeric != num {
            return Err(Error::Validation(format!(
                "slot 0 gives {:?} / {:?}, expected {:?} / {:?}",
                ex.symbolic, ex.numeric, sym, num
            )));
        }
        Ok(format!("lambda0 = k00*f00 + k10*f10 = {}, lambda1 = k01*f01 + k11*f11 = {}", num[&0], num[&1]))
    });
    vec![
        to_check("catalog", catalog_check),
        to_check("shift_add", shift_add),
        to_check("worked_example", example),
        to_check("loss_budget", loss_golden_sums(loss)),
    ]
}
