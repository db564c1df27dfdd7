//! Declarative network description in compact notation.
//!
//! Tokens are joined by `-`:
//!
//! | token      | layer                                             |
//! |------------|---------------------------------------------------|
//! | `32C3`     | 3×3 convolution with 32 outputs + leaky ReLU      |
//! | `lrelu0.2` | sets the slope of the preceding convolution's ReLU |
//! | `MP2`      | disjoint 2×2 max pooling                          |
//! | `SSMP1.5`  | stochastic max pooling with α = 1.5               |
//! | `drop0.1`  | dropout with rate 0.1                             |
//! | `Output`   | linear layer onto the categories (also `Linear`)  |
//!
//! Every convolution is followed by a leaky ReLU with slope 0.333 unless an
//! explicit `lrelu` token follows it.

use std::fmt;

use super::ssmp::{ssmp_output_len, SsmpStrategy};
use crate::error::{Error, Result};

pub const DEFAULT_SLOPE: f64 = 0.333;

pub const PRESET_BASELINE: &str = "32C3-MP2-64C3-96C3-MP2-128C3-160C3-MP2-192C3-224C3-MP2-256C3-Output";
pub const PRESET_SSMP: &str =
    "32C3-MP2-64C3-96C3-SSMP1.5-128C3-SSMP1.5-160C3-SSMP1.5-192C3-SSMP1.5-224C3-MP2-256C2-Output";
/// Small network used for gradient checks.
pub const PRESET_TOY: &str = "8C3-MP2-12C3-SSMP1.5-Output";
/// Desk-scale SSMP network for 16×16 to 20×20 feature maps.
pub const PRESET_SMALL: &str = "16C3-MP2-32C2-SSMP1.5-64C2-SSMP1.5-96C2-drop0.1-Output";

/// Expands a preset name to its notation; other strings pass through.
pub fn resolve_preset(name: &str) -> &str {
    match name {
        "baseline" => PRESET_BASELINE,
        "ssmp" => PRESET_SSMP,
        "toy" => PRESET_TOY,
        "small" => PRESET_SMALL,
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize },
    LeakyRelu { slope: f64 },
    MaxPool2,
    Ssmp { alpha: f64 },
    Dropout { p: f64 },
    Linear { outputs: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub grid: usize,
    pub layers: Vec<LayerSpec>,
    pub ssmp_strategy: SsmpStrategy,
}

/// Output shape of a layer: `(channels, height, width)` or a flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Map(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Map(c, h, w) => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, token: &str) -> Result<T> {
    s.parse().map_err(|_| Error::config(format!("bad number in layer token `{token}`")))
}

impl NetworkSpec {
    /// Parses compact notation (or a preset name) for a given input and
    /// category count, and validates the shape chain.
    pub fn parse(notation: &str, input_channels: usize, grid: usize, categories: usize) -> Result<Self> {
        let notation = resolve_preset(notation.trim());
        let mut layers = Vec::new();
        for token in notation.split('-').map(str::trim) {
            let lower = token.to_ascii_lowercase();
            let layer = if lower == "mp2" {
                LayerSpec::MaxPool2
            } else if lower == "output" || lower == "linear" {
                LayerSpec::Linear { outputs: categories }
            } else if let Some(a) = lower.strip_prefix("ssmp") {
                LayerSpec::Ssmp { alpha: parse_num(a, token)? }
            } else if let Some(p) = lower.strip_prefix("drop") {
                LayerSpec::Dropout { p: parse_num(p, token)? }
            } else if let Some(a) = lower.strip_prefix("lrelu") {
                let slope = parse_num(a, token)?;
                match layers.last_mut() {
                    Some(LayerSpec::LeakyRelu { slope: s }) => {
                        *s = slope;
                        continue;
                    }
                    _ => return Err(Error::config(format!("`{token}` must directly follow a convolution"))),
                }
            } else if let Some((n, k)) = lower.split_once('c') {
                layers.push(LayerSpec::Conv { out_channels: parse_num(n, token)?, kernel: parse_num(k, token)? });
                LayerSpec::LeakyRelu { slope: DEFAULT_SLOPE }
            } else {
                return Err(Error::config(format!("unknown layer token `{token}`")));
            };
            layers.push(layer);
        }
        let spec = NetworkSpec { input_channels, grid, layers, ssmp_strategy: SsmpStrategy::Ssmp1 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_strategy(mut self, strategy: SsmpStrategy) -> Self {
        self.ssmp_strategy = strategy;
        self
    }

    pub fn categories(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Linear { outputs }) => *outputs,
            _ => 0,
        }
    }

    /// Shape after every layer, checking each step.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shape = Shape::Map(self.input_channels, self.grid, self.grid);
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |msg: String| Error::shape(format!("layer {i} ({layer:?}): {msg}"));
            shape = match (*layer, shape) {
                (LayerSpec::Conv { out_channels, kernel }, Shape::Map(_, h, w)) => {
                    if !(kernel == 2 || kernel == 3) || out_channels == 0 {
                        return Err(fail("convolutions need a 2x2 or 3x3 kernel and >= 1 output".into()));
                    }
                    if h < kernel || w < kernel {
                        return Err(fail(format!("{h}x{w} input is smaller than the kernel")));
                    }
                    Shape::Map(out_channels, h - kernel + 1, w - kernel + 1)
                }
                (LayerSpec::MaxPool2, Shape::Map(c, h, w)) => {
                    if h % 2 != 0 || w % 2 != 0 || h < 2 {
                        return Err(fail(format!("2x2 max pooling needs even extents, got {h}x{w}")));
                    }
                    Shape::Map(c, h / 2, w / 2)
                }
                (LayerSpec::Ssmp { alpha }, Shape::Map(c, h, w)) => {
                    if !(alpha > 1.0 && alpha <= 2.0) {
                        return Err(fail(format!("alpha {alpha} outside (1, 2]")));
                    }
                    if h < 3 || w < 3 {
                        return Err(fail(format!("{h}x{w} input too small")));
                    }
                    Shape::Map(c, ssmp_output_len(h, alpha), ssmp_output_len(w, alpha))
                }
                (LayerSpec::LeakyRelu { slope }, s) => {
                    if !(slope > 0.0 && slope < 1.0) {
                        return Err(fail(format!("leaky slope {slope} outside (0, 1)")));
                    }
                    s
                }
                (LayerSpec::Dropout { p }, s) => {
                    if !(0.0..1.0).contains(&p) {
                        return Err(fail(format!("dropout rate {p} outside [0, 1)")));
                    }
                    s
                }
                (LayerSpec::Linear { outputs }, s) => {
                    if i + 1 != self.layers.len() {
                        return Err(fail("the linear output layer must be last".into()));
                    }
                    if outputs < 2 {
                        return Err(fail("need at least two categories".into()));
                    }
                    if s.is_empty() {
                        return Err(fail("empty input".into()));
                    }
                    Shape::Flat(outputs)
                }
                (_, Shape::Flat(_)) => return Err(fail("spatial layer after the output layer".into())),
            };
            out.push(shape);
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Linear { .. })) {
            return Err(Error::shape("network must end with an Output layer"));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.grid == 0 {
            return Err(Error::shape("empty network input"));
        }
        self.shapes().map(|_| ())
    }

    /// Shapes of the trainable tensors, in order, with their layer index.
    pub fn param_shapes(&self) -> Result<Vec<(usize, &'static str, Vec<usize>)>> {
        let shapes = self.shapes()?;
        let mut prev = Shape::Map(self.input_channels, self.grid, self.grid);
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match (*layer, prev) {
                (LayerSpec::Conv { out_channels, kernel }, Shape::Map(c, _, _)) => {
                    out.push((i, "weight", vec![out_channels, c, kernel, kernel]));
                    out.push((i, "bias", vec![out_channels]));
                }
                (LayerSpec::Linear { outputs }, s) => {
                    out.push((i, "weight", vec![outputs, s.len()]));
                    out.push((i, "bias", vec![outputs]));
                }
                _ => {}
            }
            prev = shapes[i];
        }
        Ok(out)
    }

    /// Compact notation; the inverse of [`NetworkSpec::parse`].
    pub fn notation(&self) -> String {
        let mut tokens: Vec<String> = Vec::new();
        let mut after_conv = false;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv { out_channels, kernel } => tokens.push(format!("{out_channels}C{kernel}")),
                LayerSpec::LeakyRelu { slope } => {
                    if !after_conv || slope != DEFAULT_SLOPE {
                        tokens.push(format!("lrelu{slope}"));
                    }
                }
                LayerSpec::MaxPool2 => tokens.push("MP2".into()),
                LayerSpec::Ssmp { alpha } => tokens.push(format!("SSMP{alpha}")),
                LayerSpec::Dropout { p } => tokens.push(format!("drop{p}")),
                LayerSpec::Linear { .. } => tokens.push("Output".into()),
            }
            after_conv = matches!(layer, LayerSpec::Conv { .. });
        }
        tokens.join("-")
    }

    pub fn has_stochastic_pooling(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::Ssmp { .. }))
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Input({}x{}x{})-{}", self.input_channels, self.grid, self.grid, self.notation())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Notation with activations shown, for comparing against the
    /// architecture strings.
    fn skeleton(spec: &NetworkSpec) -> String {
        spec.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv { out_channels, kernel } => Some(format!("{out_channels}C{kernel}")),
                LayerSpec::MaxPool2 => Some("MP2".into()),
                LayerSpec::Ssmp { alpha } => Some(format!("SSMP{alpha}")),
                LayerSpec::Linear { .. } => Some("Linear".into()),
                _ => None,
            })
            .collect::<Vec<_>>()
            .join("-")
    }

    #[test]
    fn baseline_preset() {
        // unpadded convolutions need a 106-pixel grid for this chain
        let spec = NetworkSpec::parse("baseline", 1, 106, 10).unwrap();
        assert_eq!(skeleton(&spec), "32C3-MP2-64C3-96C3-MP2-128C3-160C3-MP2-192C3-224C3-MP2-256C3-Linear");
        assert!(spec
            .layers
            .windows(2)
            .filter(|w| matches!(w[0], LayerSpec::Conv { .. }))
            .all(|w| w[1] == LayerSpec::LeakyRelu { slope: 0.333 }));
        assert!(NetworkSpec::parse("baseline", 1, 64, 10).is_err());
    }

    #[test]
    fn ssmp_preset() {
        let grid =
            (40..200).find(|&g| NetworkSpec::parse("ssmp", 1, g, 10).is_ok()).expect("some grid fits the SSMP preset");
        let spec = NetworkSpec::parse("ssmp", 121, grid, 10).unwrap();
        let s = skeleton(&spec);
        assert!(s.starts_with("32C3-MP2-64C3-96C3-SSMP1.5-128C3-SSMP1.5"));
        assert!(s.ends_with("224C3-MP2-256C2-Linear"), "{s}");
    }

    #[test]
    fn notation_round_trip() {
        for n in [PRESET_TOY, PRESET_SMALL, "8C3-lrelu0.1-MP2-12C2-drop0.25-Output"] {
            let spec = NetworkSpec::parse(n, 3, 20, 4).unwrap();
            assert_eq!(spec.notation(), n);
            assert_eq!(NetworkSpec::parse(&spec.notation(), 3, 20, 4).unwrap(), spec);
        }
    }

    #[test]
    fn shape_chain() {
        let spec = NetworkSpec::parse("toy", 2, 12, 4).unwrap();
        let shapes = spec.shapes().unwrap();
        // 12 -C3-> 10 -MP2-> 5 -C3-> 3 -SSMP1.5-> 2
        assert_eq!(shapes[0], Shape::Map(8, 10, 10));
        assert_eq!(shapes[2], Shape::Map(8, 5, 5));
        assert_eq!(shapes[5], Shape::Map(12, 2, 2));
        assert_eq!(shapes[6], Shape::Flat(4));
        let params = spec.param_shapes().unwrap();
        assert_eq!(params[params.len() - 2].2, vec![4, 48]);
    }

    #[test]
    fn validation_errors() {
        assert!(NetworkSpec::parse("8C3-MP2", 1, 12, 4).is_err());
        assert!(NetworkSpec::parse("8C5-Output", 1, 12, 4).is_err());
        assert!(NetworkSpec::parse("8C3-Output-MP2", 1, 12, 4).is_err());
        assert!(NetworkSpec::parse("SSMP2.5-Output", 1, 12, 4).is_err());
        assert!(NetworkSpec::parse("MP2-lrelu0.2-Output", 1, 12, 4).is_err());
        assert!(NetworkSpec::parse("8C3-foo-Output", 1, 12, 4).is_err());
        assert!(NetworkSpec::parse("8C3-MP2-Output", 1, 11, 4).is_err());
    }
}
