//! Network descriptions: layer specs, JSON form, shape checking and
//! parameter counting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor shape as (height, width, channels).
pub type Shape = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolOp {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

/// What a layer computes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerOp {
    /// `kernel` is `[k_h, k_w, c_in per group, c_out]`.
    Conv { kernel: [usize; 4], stride: usize, padding: usize, groups: usize },
    Fc { in_features: usize, out_features: usize },
    Activation(Activation),
    Pool { op: PoolOp, size: usize, stride: usize, padding: usize, global: bool },
    /// Elementwise sum of two equally shaped producers.
    Add,
    /// Channel concatenation of producers with equal spatial size.
    Concat,
}

impl LayerOp {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerOp::Conv { .. } => "conv",
            LayerOp::Fc { .. } => "fc",
            LayerOp::Activation(_) => "activation",
            LayerOp::Pool { .. } => "pool",
            LayerOp::Add => "add",
            LayerOp::Concat => "concat",
        }
    }

    /// Conv and FC layers run on the photonic substrate; the rest are digital.
    pub fn is_pim(&self) -> bool {
        matches!(self, LayerOp::Conv { .. } | LayerOp::Fc { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer", into = "RawLayer")]
pub struct LayerSpec {
    pub name: String,
    pub op: LayerOp,
    /// Expected input shape; checked against the producer when present.
    pub input: Option<Shape>,
    /// Producers by layer name; empty means the previous layer. `"input"`
    /// names the network input.
    pub from: Vec<String>,
    pub has_bias: bool,
    /// Overrides the network operand width.
    pub operand_bits: Option<u32>,
    /// Overrides the automatic requantization shift.
    pub requant_shift: Option<u32>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, op: LayerOp) -> Self {
        Self {
            name: name.into(),
            op,
            input: None,
            from: Vec::new(),
            has_bias: false,
            operand_bits: None,
            requant_shift: None,
        }
    }

    pub fn conv(name: &str, kernel: [usize; 4], stride: usize, padding: usize) -> Self {
        Self::new(name, LayerOp::Conv { kernel, stride, padding, groups: 1 })
    }

    pub fn fc(name: &str, in_features: usize, out_features: usize) -> Self {
        Self::new(name, LayerOp::Fc { in_features, out_features })
    }

    pub fn relu(name: &str) -> Self {
        Self::new(name, LayerOp::Activation(Activation::Relu))
    }

    pub fn with_bias(mut self) -> Self {
        self.has_bias = true;
        self
    }

    pub fn with_from(mut self, from: &[&str]) -> Self {
        self.from = from.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_groups(mut self, g: usize) -> Self {
        if let LayerOp::Conv { groups, .. } = &mut self.op {
            *groups = g;
        }
        self
    }

    /// Weight plus bias element count.
    pub fn param_count(&self) -> u64 {
        let (w, b) = match self.op {
            LayerOp::Conv { kernel: [kh, kw, ci, co], .. } => ((kh * kw * ci * co) as u64, co as u64),
            LayerOp::Fc { in_features, out_features } => ((in_features * out_features) as u64, out_features as u64),
            _ => return 0,
        };
        if self.has_bias {
            w + b
        } else {
            w
        }
    }
}

/// Flat on-disk form of a layer; every kind-specific field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    groups: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    function: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    op: Option<PoolOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    global: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    has_bias: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    from: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    operand_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    requant_shift: Option<u32>,
}

pub(crate) const LAYER_KINDS: [&str; 6] = ["conv", "fc", "activation", "pool", "add", "concat"];

impl TryFrom<RawLayer> for LayerSpec {
    type Error = String;

    fn try_from(r: RawLayer) -> std::result::Result<Self, String> {
        let need = |v: Option<usize>, f: &str| v.ok_or_else(|| format!("layer `{}` needs `{f}`", r.name));
        let op = match r.kind.as_str() {
            "conv" => LayerOp::Conv {
                kernel: r.kernel.ok_or_else(|| format!("layer `{}` needs `kernel`", r.name))?,
                stride: r.stride.unwrap_or(1),
                padding: r.padding.unwrap_or(0),
                groups: r.groups.unwrap_or(1),
            },
            "fc" => LayerOp::Fc {
                in_features: need(r.in_features, "in_features")?,
                out_features: need(r.out_features, "out_features")?,
            },
            "activation" => LayerOp::Activation(r.function.unwrap_or(Activation::Relu)),
            "pool" => {
                let size = if r.global { 0 } else { need(r.size, "size")? };
                LayerOp::Pool {
                    op: r.op.unwrap_or(PoolOp::Max),
                    size,
                    stride: r.stride.unwrap_or(size.max(1)),
                    padding: r.padding.unwrap_or(0),
                    global: r.global,
                }
            }
            "add" => LayerOp::Add,
            "concat" => LayerOp::Concat,
            other => return Err(format!("unknown layer kind `{other}`")),
        };
        Ok(LayerSpec {
            name: r.name,
            op,
            input: r.input,
            from: r.from,
            has_bias: r.has_bias,
            operand_bits: r.operand_bits,
            requant_shift: r.requant_shift,
        })
    }
}

impl From<LayerSpec> for RawLayer {
    fn from(l: LayerSpec) -> Self {
        let mut r = RawLayer {
            name: l.name,
            kind: l.op.kind().to_string(),
            input: l.input,
            has_bias: l.has_bias,
            from: l.from,
            operand_bits: l.operand_bits,
            requant_shift: l.requant_shift,
            ..RawLayer::default()
        };
        match l.op {
            LayerOp::Conv { kernel, stride, padding, groups } => {
                r.kernel = Some(kernel);
                r.stride = Some(stride);
                r.padding = Some(padding);
                r.groups = (groups != 1).then_some(groups);
            }
            LayerOp::Fc { in_features, out_features } => {
                r.in_features = Some(in_features);
                r.out_features = Some(out_features);
            }
            LayerOp::Activation(f) => r.function = Some(f),
            LayerOp::Pool { op, size, stride, padding, global } => {
                r.op = Some(op);
                r.global = global;
                if !global {
                    r.size = Some(size);
                    r.stride = Some(stride);
                    r.padding = Some(padding);
                }
            }
            LayerOp::Add | LayerOp::Concat => {}
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_parameter_count: Option<u64>,
    pub input: Shape,
    #[serde(default = "default_bits")]
    pub operand_bits: u32,
    pub layers: Vec<LayerSpec>,
}

fn default_bits() -> u32 {
    4
}

/// Where a layer reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

/// A layer with its producers and shapes resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedLayer {
    pub sources: Vec<Source>,
    pub input_shapes: Vec<Shape>,
    pub output: Shape,
    pub operand_bits: u32,
}

/// Output size of a sliding window along one axis.
pub(crate) fn window_out(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let span = n + 2 * pad;
    (stride > 0 && k > 0 && span >= k).then(|| (span - k) / stride + 1)
}

/// Output dims of a conv layer applied to `input`.
pub fn ofm_dims(layer: &LayerSpec, input: Shape) -> Result<Shape> {
    let LayerOp::Conv { kernel: [kh, kw, _, co], stride, padding, .. } = layer.op else {
        return Err(Error::domain(format!("layer `{}` is not a conv", layer.name)));
    };
    let [h, w, _] = input;
    match (window_out(h, kh, stride, padding), window_out(w, kw, stride, padding)) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 && co > 0 => Ok([ho, wo, co]),
        _ => Err(Error::domain(format!(
            "layer `{}`: {kh}x{kw} stride {stride} pad {padding} over {h}x{w} leaves no output",
            layer.name
        ))),
    }
}

impl NetworkSpec {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse { path: origin.into(), message: e.to_string() })?;
        if let Some(layers) = value.get("layers").and_then(|l| l.as_array()) {
            for l in layers {
                if let Some(kind) = l.get("kind").and_then(|k| k.as_str()) {
                    if !LAYER_KINDS.contains(&kind) {
                        return Err(Error::UnknownLayerKind(kind.to_string()));
                    }
                }
            }
        }
        let spec: NetworkSpec =
            serde_json::from_value(value).map_err(|e| Error::Parse { path: origin.into(), message: e.to_string() })?;
        spec.resolve()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network specs always serialize")
    }

    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Same network with every layer at `bits`.
    pub fn with_operand_bits(&self, bits: u32) -> Self {
        let mut n = self.clone();
        n.operand_bits = bits;
        for l in &mut n.layers {
            l.operand_bits = None;
        }
        n
    }

    fn label(&self, s: Source) -> String {
        match s {
            Source::Input => "input".to_string(),
            Source::Layer(i) => format!("{} (#{})", self.layers[i].name, i + 1),
        }
    }

    /// Resolve producers and check that every layer's shapes chain.
    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>> {
        if self.input.contains(&0) {
            return Err(Error::config(format!("network `{}` has an empty input shape", self.name)));
        }
        if self.layers.is_empty() {
            return Err(Error::config(format!("network `{}` has no layers", self.name)));
        }
        let mut out: Vec<ResolvedLayer> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let to = format!("{} (#{})", layer.name, i + 1);
            let shape_err = |from: String, detail: String| Error::Shape { from, to: to.clone(), detail };
            if self.layers[..i].iter().any(|l| l.name == layer.name) || layer.name == "input" {
                return Err(Error::config(format!("duplicate or reserved layer name `{}`", layer.name)));
            }
            let sources: Vec<Source> = if layer.from.is_empty() {
                vec![if i == 0 { Source::Input } else { Source::Layer(i - 1) }]
            } else {
                layer
                    .from
                    .iter()
                    .map(|n| {
                        if n == "input" {
                            Ok(Source::Input)
                        } else {
                            self.layers[..i]
                                .iter()
                                .position(|l| &l.name == n)
                                .map(Source::Layer)
                                .ok_or_else(|| Error::config(format!("layer `{}` reads unknown `{n}`", layer.name)))
                        }
                    })
                    .collect::<Result<_>>()?
            };
            let shapes: Vec<Shape> = sources
                .iter()
                .map(|s| match s {
                    Source::Input => self.input,
                    Source::Layer(j) => out[*j].output,
                })
                .collect();
            let bits = layer.operand_bits.unwrap_or(self.operand_bits);
            if bits == 0 || bits > 16 {
                return Err(Error::config(format!("layer `{}` operand width {bits} unsupported", layer.name)));
            }
            let first = shapes[0];
            let from0 = self.label(sources[0]);
            if let Some(expected) = layer.input {
                if expected != first {
                    return Err(shape_err(from0, format!("declared input {expected:?}, producer gives {first:?}")));
                }
            }
            let single = |what: &str| -> Result<()> {
                if sources.len() != 1 {
                    return Err(Error::config(format!("{what} layer `{}` takes exactly one input", layer.name)));
                }
                Ok(())
            };
            let output = match layer.op {
                LayerOp::Conv { kernel: [kh, kw, ci, co], groups, .. } => {
                    single("conv")?;
                    if kh == 0 || kw == 0 || ci == 0 || co == 0 || groups == 0 {
                        return Err(Error::config(format!("conv `{}` has a zero dimension", layer.name)));
                    }
                    if first[2] != ci * groups || co % groups != 0 {
                        return Err(shape_err(
                            from0,
                            format!("conv expects {} input channels in {groups} group(s), got {}", ci * groups, first[2]),
                        ));
                    }
                    ofm_dims(layer, first).map_err(|e| shape_err(self.label(sources[0]), e.to_string()))?
                }
                LayerOp::Fc { in_features, out_features } => {
                    single("fc")?;
                    let flat = first.iter().product::<usize>();
                    if flat != in_features || out_features == 0 {
                        return Err(shape_err(from0, format!("fc expects {in_features} features, got {flat}")));
                    }
                    [1, 1, out_features]
                }
                LayerOp::Activation(_) => {
                    single("activation")?;
                    first
                }
                LayerOp::Pool { size, stride, padding, global, .. } => {
                    single("pool")?;
                    if global {
                        [1, 1, first[2]]
                    } else {
                        match (window_out(first[0], size, stride, padding), window_out(first[1], size, stride, padding)) {
                            (Some(h), Some(w)) if padding < size => [h, w, first[2]],
                            _ => return Err(shape_err(from0, format!("pool {size}/{stride} does not fit {first:?}"))),
                        }
                    }
                }
                LayerOp::Add => {
                    if sources.len() != 2 {
                        return Err(Error::config(format!("add layer `{}` takes two inputs", layer.name)));
                    }
                    if shapes[0] != shapes[1] {
                        return Err(shape_err(
                            self.label(sources[1]),
                            format!("add operands {:?} and {:?} differ", shapes[0], shapes[1]),
                        ));
                    }
                    first
                }
                LayerOp::Concat => {
                    if sources.len() < 2 {
                        return Err(Error::config(format!("concat layer `{}` needs two or more inputs", layer.name)));
                    }
                    for (s, sh) in sources.iter().zip(&shapes).skip(1) {
                        if sh[..2] != first[..2] {
                            return Err(shape_err(self.label(*s), format!("concat spatial {sh:?} vs {first:?}")));
                        }
                    }
                    [first[0], first[1], shapes.iter().map(|s| s[2]).sum()]
                }
            };
            out.push(ResolvedLayer { sources, input_shapes: shapes, output, operand_bits: bits });
        }
        Ok(out)
    }

    /// The network's final output shape.
    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.resolve()?.last().expect("resolve rejects empty networks").output)
    }
}

/// `Σ` over layers of weight and bias elements.
pub fn param_count(network: &NetworkSpec) -> u64 {
    network.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(layers: Vec<LayerSpec>, input: Shape) -> NetworkSpec {
        NetworkSpec { name: "t".into(), description: String::new(), declared_parameter_count: None, input, operand_bits: 4, layers }
    }

    #[test]
    fn ofm_examples() {
        let c = |k, s, p| LayerSpec::conv("c", [k, k, 1, 1], s, p);
        assert_eq!(ofm_dims(&c(2, 1, 0), [4, 4, 1]).unwrap(), [3, 3, 1]);
        assert_eq!(ofm_dims(&c(3, 1, 1), [32, 32, 1]).unwrap(), [32, 32, 1]);
        assert_eq!(ofm_dims(&c(3, 2, 0), [7, 7, 1]).unwrap(), [3, 3, 1]);
        assert!(ofm_dims(&c(5, 1, 0), [3, 3, 1]).is_err());
    }

    #[test]
    fn single_conv_param_count() {
        let n = net(vec![LayerSpec::conv("c", [3, 3, 2, 4], 1, 1).with_bias()], [5, 5, 2]);
        assert_eq!(param_count(&n), 76);
    }

    #[test]
    fn shape_error_names_layers() {
        let n = net(
            vec![
                LayerSpec::conv("c1", [3, 3, 3, 8], 1, 1),
                LayerSpec::relu("r1"),
                LayerSpec::conv("c2", [3, 3, 8, 16], 1, 1),
                LayerSpec::conv("c3", [3, 3, 8, 16], 1, 1),
            ],
            [8, 8, 3],
        );
        match n.resolve() {
            Err(Error::Shape { from, to, .. }) => {
                assert_eq!(from, "c2 (#3)");
                assert_eq!(to, "c3 (#4)");
            }
            other => panic!("expected a shape error, got {other:?}"),
        }
    }

    #[test]
    fn dag_shapes() {
        let n = net(
            vec![
                LayerSpec::conv("a", [1, 1, 4, 6], 1, 0),
                LayerSpec::conv("b", [3, 3, 4, 2], 1, 1).with_from(&["input"]),
                LayerSpec::new("cat", LayerOp::Concat).with_from(&["a", "b"]),
                LayerSpec::conv("dw", [3, 3, 1, 8], 2, 1).with_groups(8),
                LayerSpec::new("g", LayerOp::Pool { op: PoolOp::Avg, size: 0, stride: 1, padding: 0, global: true }),
                LayerSpec::fc("fc", 8, 3),
            ],
            [6, 6, 4],
        );
        let r = n.resolve().unwrap();
        assert_eq!(r[2].output, [6, 6, 8]);
        assert_eq!(r[3].output, [3, 3, 8]);
        assert_eq!(r[5].output, [1, 1, 3]);
        assert_eq!(r[1].sources, vec![Source::Input]);
    }

    #[test]
    fn json_round_trip_and_unknown_kind() {
        let n = net(
            vec![
                LayerSpec::conv("c", [2, 2, 1, 3], 1, 0).with_bias(),
                LayerSpec::new("p", LayerOp::Pool { op: PoolOp::Max, size: 2, stride: 1, padding: 0, global: false }),
                LayerSpec::fc("f", 12, 2),
            ],
            [4, 4, 1],
        );
        let back = NetworkSpec::from_json(&n.to_json(), "mem").unwrap();
        assert_eq!(back, n);
        let bad = r#"{"name":"x","input":[2,2,1],"layers":[{"name":"l","kind":"lstm"}]}"#;
        assert!(matches!(NetworkSpec::from_json(bad, "mem"), Err(Error::UnknownLayerKind(k)) if k == "lstm"));
        assert!(matches!(NetworkSpec::from_json("{", "f.json"), Err(Error::Parse { .. })));
    }
}
