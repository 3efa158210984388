use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::conv_output_size;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        affine: bool,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    L2Normalize,
}

/// Ordered layer list plus the square input size it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

/// `(channels, spatial size)` after a layer.
pub type ShapeTrace = Vec<(usize, usize)>;

fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> LayerSpec {
    LayerSpec::Conv {
        in_ch,
        out_ch,
        kernel,
        stride,
        padding,
    }
}

const BN: LayerSpec = LayerSpec::BatchNorm { affine: false };

impl ArchitectureSpec {
    /// The seven-convolution L2Net/HardNet stack on 32×32 inputs.
    pub fn hardnet(dropout_rate: f64) -> Self {
        let mut layers = Vec::new();
        for (i, o, s) in [
            (1, 32, 1),
            (32, 32, 1),
            (32, 64, 2),
            (64, 64, 1),
            (64, 128, 2),
            (128, 128, 1),
        ] {
            layers.extend([conv(i, o, 3, s, 1), BN, LayerSpec::Relu]);
        }
        layers.extend([
            LayerSpec::Dropout { rate: dropout_rate },
            conv(128, 128, 8, 1, 0),
            BN,
            LayerSpec::L2Normalize,
        ]);
        Self { input_size: 32, layers }
    }

    /// Small network on 8×8 inputs for finite-difference checks: two
    /// conv-BN-ReLU blocks, an unpadded final conv and L2 normalization.
    pub fn reduced() -> Self {
        Self {
            input_size: 8,
            layers: vec![
                conv(1, 4, 3, 1, 1),
                BN,
                LayerSpec::Relu,
                conv(4, 6, 3, 2, 1),
                BN,
                LayerSpec::Relu,
                conv(6, 8, 4, 1, 0),
                LayerSpec::L2Normalize,
            ],
        }
    }

    /// Replaces the rate of every dropout layer.
    pub fn with_dropout_rate(mut self, rate: f64) -> Self {
        for layer in &mut self.layers {
            if let LayerSpec::Dropout { rate: r } = layer {
                *r = rate;
            }
        }
        self
    }

    pub fn conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. }))
            .count()
    }

    /// Checks the channel chain and spatial sizes; returns the shape after
    /// every layer, starting from a single-channel input.
    pub fn validate(&self) -> Result<ShapeTrace> {
        if self.input_size == 0 {
            return Err(Error::Architecture("input size must be positive".into()));
        }
        let mut channels = 1;
        let mut size = self.input_size;
        let mut trace = Vec::with_capacity(self.layers.len());
        let last = self.layers.len().saturating_sub(1);
        for (idx, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                } => {
                    if in_ch != channels {
                        return Err(Error::Architecture(format!(
                            "layer {idx}: conv expects {in_ch} input channels but receives {channels}"
                        )));
                    }
                    if out_ch == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::Architecture(format!("layer {idx}: degenerate conv {layer:?}")));
                    }
                    size = conv_output_size(size, kernel, stride, padding)
                        .map_err(|e| Error::Architecture(format!("layer {idx}: {e}")))?;
                    channels = out_ch;
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::Architecture(format!(
                            "layer {idx}: dropout rate {rate} outside [0, 1)"
                        )));
                    }
                }
                LayerSpec::L2Normalize => {
                    if idx != last {
                        return Err(Error::Architecture(format!(
                            "layer {idx}: l2norm must be the final layer"
                        )));
                    }
                    if size != 1 {
                        return Err(Error::Architecture(format!(
                            "l2norm needs a 1x1 spatial map, got {size}x{size}"
                        )));
                    }
                }
                LayerSpec::BatchNorm { .. } | LayerSpec::Relu => {}
            }
            trace.push((channels, size));
        }
        if self.conv_count() == 0 {
            return Err(Error::Architecture("no convolution layers".into()));
        }
        if self.layers.last() != Some(&LayerSpec::L2Normalize) {
            return Err(Error::Architecture("final layer must be l2norm".into()));
        }
        Ok(trace)
    }

    /// Output descriptor length.
    pub fn descriptor_dim(&self) -> Result<usize> {
        Ok(self.validate()?.last().map(|&(c, _)| c).unwrap_or(0))
    }

    /// Weights plus biases of every conv (BN layers add `2·c` when affine).
    pub fn parameter_count(&self) -> Result<usize> {
        let trace = self.validate()?;
        let mut total = 0;
        for (idx, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    in_ch, out_ch, kernel, ..
                } => total += out_ch * in_ch * kernel * kernel + out_ch,
                LayerSpec::BatchNorm { affine: true } => total += 2 * trace[idx].0,
                _ => {}
            }
        }
        Ok(total)
    }

    /// Line-oriented canonical form, stored in model files.
    pub fn to_text(&self) -> String {
        let mut s = format!("input {}\n", self.input_size);
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    padding,
                } => writeln!(s, "conv {in_ch} {out_ch} {kernel} {stride} {padding}"),
                LayerSpec::BatchNorm { affine } => writeln!(s, "bn {}", u8::from(*affine)),
                LayerSpec::Relu => writeln!(s, "relu"),
                LayerSpec::Dropout { rate } => writeln!(s, "dropout {rate:?}"),
                LayerSpec::L2Normalize => writeln!(s, "l2norm"),
            }
            .expect("writing to a String");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Architecture(format!("cannot parse layer line `{line}`"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Architecture("empty architecture text".into()))?;
        let input_size = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["input", n] => n.parse().map_err(|_| bad(header))?,
            _ => return Err(bad(header)),
        };
        let mut layers = Vec::new();
        for line in lines {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let num =
                |i: usize| -> Result<usize> { tokens.get(i).and_then(|t| t.parse().ok()).ok_or_else(|| bad(line)) };
            let layer = match tokens[0] {
                "conv" if tokens.len() == 6 => conv(num(1)?, num(2)?, num(3)?, num(4)?, num(5)?),
                "bn" if tokens.len() == 2 => LayerSpec::BatchNorm {
                    affine: match tokens[1] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(bad(line)),
                    },
                },
                "relu" if tokens.len() == 1 => LayerSpec::Relu,
                "dropout" if tokens.len() == 2 => LayerSpec::Dropout {
                    rate: tokens[1].parse().map_err(|_| bad(line))?,
                },
                "l2norm" if tokens.len() == 1 => LayerSpec::L2Normalize,
                _ => return Err(bad(line)),
            };
            layers.push(layer);
        }
        Ok(Self { input_size, layers })
    }
}
