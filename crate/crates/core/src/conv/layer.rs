//! Lowering of a 2-D multi-channel convolution layer to 1-D packed problems.
//!
//! Valid (unpadded), stride-1 cross-correlation:
//! `out[o][y][x] = sum_{c,dy,dx} in[c][y+dy][x+dx] * w[o][c][dy][dx]`.
//! Each `(o, y, c, dy)` contributes one 1-D problem: the input row convolved
//! with the reversed kernel row, whose outputs `k-1 .. W-1` are the valid
//! correlation window. Rows are accumulated with scalar adds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packing::{PackingPlan, QuantizedTensor};
use crate::simd::{Emulator, InstrCounts};

use super::{slbc, ConvProblem, Variant};

/// Shape of one convolution layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.height, self.width, self.in_channels, self.out_channels, self.kernel_size];
        if dims.contains(&0) {
            return Err(Error::DimMismatch(format!("layer `{}` has a zero dimension", self.name)));
        }
        if self.kernel_size > self.height || self.kernel_size > self.width {
            return Err(Error::DimMismatch(format!(
                "layer `{}`: kernel {} larger than {}x{} input",
                self.name, self.kernel_size, self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn out_height(&self) -> usize {
        self.height + 1 - self.kernel_size
    }

    pub fn out_width(&self) -> usize {
        self.width + 1 - self.kernel_size
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_size * self.kernel_size
    }

    pub fn input_activations(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn output_activations(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    /// Number of 1-D row convolutions the layer lowers to.
    pub fn row_problems(&self) -> usize {
        self.out_channels * self.out_height() * self.in_channels * self.kernel_size
    }

    pub fn macs(&self) -> usize {
        self.output_activations() * self.in_channels * self.kernel_size * self.kernel_size
    }
}

/// Activations laid out `[channel][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: QuantizedTensor,
}

impl FeatureMap {
    fn row(&self, c: usize, y: usize) -> &[u32] {
        let start = (c * self.height + y) * self.width;
        &self.data.values()[start..start + self.width]
    }
}

/// Weights laid out `[out][in][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    pub data: QuantizedTensor,
}

impl Weights {
    fn row(&self, o: usize, c: usize, dy: usize) -> &[u32] {
        let k = self.kernel_size;
        let start = ((o * self.in_channels + c) * k + dy) * k;
        &self.data.values()[start..start + k]
    }
}

fn check_dims(inputs: &FeatureMap, weights: &Weights, layer: &LayerSpec) -> Result<()> {
    layer.validate()?;
    let ok = inputs.channels == layer.in_channels
        && inputs.height == layer.height
        && inputs.width == layer.width
        && inputs.data.len() == layer.input_activations()
        && weights.in_channels == layer.in_channels
        && weights.out_channels == layer.out_channels
        && weights.kernel_size == layer.kernel_size
        && weights.data.len() == layer.weight_count();
    if ok {
        Ok(())
    } else {
        Err(Error::DimMismatch(format!("tensors do not match layer `{}`", layer.name)))
    }
}

/// Runs the layer through the packed kernel; returns outputs laid out
/// `[out][row][col]` and the aggregate instruction counts.
pub fn conv_layer(
    inputs: &FeatureMap,
    weights: &Weights,
    layer: &LayerSpec,
    plan: &PackingPlan,
    variant: Variant,
    emu: &mut Emulator,
) -> Result<(Vec<u64>, InstrCounts)> {
    check_dims(inputs, weights, layer)?;
    let before = emu.read_counters();
    let (k, ow, oh) = (layer.kernel_size, layer.out_width(), layer.out_height());
    let mut out = vec![0u64; layer.out_channels * oh * ow];
    for o in 0..layer.out_channels {
        for y in 0..oh {
            let dst = &mut out[(o * oh + y) * ow..(o * oh + y + 1) * ow];
            for c in 0..layer.in_channels {
                for dy in 0..k {
                    let seq = QuantizedTensor::new(inputs.row(c, y + dy).to_vec(), inputs.data.bits())?;
                    let mut taps = weights.row(o, c, dy).to_vec();
                    taps.reverse();
                    let ker = QuantizedTensor::new(taps, weights.data.bits())?;
                    let r = slbc(&ConvProblem::new(seq, ker, *plan)?, variant, emu)?;
                    for (x, d) in dst.iter_mut().enumerate() {
                        *d = emu.sisd_add(*d, r.outputs[x + k - 1]);
                    }
                }
            }
        }
    }
    Ok((out, emu.read_counters() - before))
}

/// Direct wide-integer 2-D correlation, the oracle for [`conv_layer`].
pub fn direct_conv2d(inputs: &FeatureMap, weights: &Weights, layer: &LayerSpec) -> Result<Vec<u64>> {
    check_dims(inputs, weights, layer)?;
    let (k, ow, oh) = (layer.kernel_size, layer.out_width(), layer.out_height());
    let mut out = vec![0u64; layer.out_channels * oh * ow];
    for o in 0..layer.out_channels {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0u64;
                for c in 0..layer.in_channels {
                    for dy in 0..k {
                        let row = inputs.row(c, y + dy);
                        let w = weights.row(o, c, dy);
                        for dx in 0..k {
                            acc += row[x + dx] as u64 * w[dx] as u64;
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    Ok(out)
}
