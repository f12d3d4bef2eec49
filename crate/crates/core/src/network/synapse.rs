//! Synaptic transforms turning a batch of input spike rows into currents.
//!
//! Inputs are laid out as `[rows, features]` where one row is one
//! (sample, time step) pair. Conv features are channel-major (`c, y, x`).

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }

    pub fn size(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d { kernel_h: usize, kernel_w: usize, stride: usize },
}

/// Output shape of a valid-padding convolution.
pub fn conv_output_shape(
    input: Shape3,
    filters: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
) -> Result<Shape3> {
    if stride == 0 || kernel_h == 0 || kernel_w == 0 {
        return Err(Error::invalid("conv", "kernel and stride must be positive"));
    }
    if kernel_h > input.height || kernel_w > input.width {
        return Err(Error::shape(
            "conv kernel",
            format!("at most {}x{}", input.height, input.width),
            format!("{kernel_h}x{kernel_w}"),
        ));
    }
    Ok(Shape3::new(
        filters,
        (input.height - kernel_h) / stride + 1,
        (input.width - kernel_w) / stride + 1,
    ))
}

/// Geometry of one conv layer, shared by the forward and backward passes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub input: Shape3,
    pub output: Shape3,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.input.channels * self.kh * self.kw
    }

    /// Unfolds `[rows, c*h*w]` into `[rows * oh * ow, c*kh*kw]`.
    pub fn im2col(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let rows = x.nrows();
        let positions = self.output.spatial();
        let patch = self.patch();
        let mut cols = Array2::<f64>::zeros((rows * positions, patch));
        let (ih, iw) = (self.input.height, self.input.width);
        for r in 0..rows {
            let src = x.row(r);
            for oy in 0..self.output.height {
                for ox in 0..self.output.width {
                    let mut dst = cols.row_mut(r * positions + oy * self.output.width + ox);
                    let mut k = 0;
                    for c in 0..self.input.channels {
                        for ky in 0..self.kh {
                            let base = c * ih * iw + (oy * self.stride + ky) * iw + ox * self.stride;
                            for kx in 0..self.kw {
                                dst[k] = src[base + kx];
                                k += 1;
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Self::im2col`]: scatters column gradients back onto the input.
    pub fn col2im(&self, cols: ArrayView2<f64>, rows: usize) -> Array2<f64> {
        let positions = self.output.spatial();
        let mut x = Array2::<f64>::zeros((rows, self.input.size()));
        let (ih, iw) = (self.input.height, self.input.width);
        for r in 0..rows {
            let mut dst = x.row_mut(r);
            for oy in 0..self.output.height {
                for ox in 0..self.output.width {
                    let src = cols.row(r * positions + oy * self.output.width + ox);
                    let mut k = 0;
                    for c in 0..self.input.channels {
                        for ky in 0..self.kh {
                            let base = c * ih * iw + (oy * self.stride + ky) * iw + ox * self.stride;
                            for kx in 0..self.kw {
                                dst[base + kx] += src[k];
                                k += 1;
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

/// Currents for all rows: `x W^T + b` for dense, im2col matmul for conv.
pub(crate) fn currents(
    kind: LayerKind,
    in_shape: Shape3,
    out_shape: Shape3,
    weights: &[f64],
    bias: &[f64],
    x: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if x.ncols() != in_shape.size() {
        return Err(Error::shape("layer input", in_shape.size(), x.ncols()));
    }
    match kind {
        LayerKind::Dense => {
            let w = ArrayView2::from_shape((out_shape.size(), in_shape.size()), weights)
                .map_err(|e| Error::Format(e.to_string()))?;
            let mut out = x.dot(&w.t());
            for mut row in out.rows_mut() {
                row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
            }
            Ok(out)
        }
        LayerKind::Conv2d {
            kernel_h,
            kernel_w,
            stride,
        } => {
            let g = ConvGeom {
                input: in_shape,
                output: out_shape,
                kh: kernel_h,
                kw: kernel_w,
                stride,
            };
            let w = ArrayView2::from_shape((out_shape.channels, g.patch()), weights)
                .map_err(|e| Error::Format(e.to_string()))?;
            let cols = g.im2col(x);
            let per_pos = cols.dot(&w.t());
            Ok(fold_positions(&g, per_pos.view(), x.nrows(), Some(bias)))
        }
    }
}

/// `[rows * P, oc]` -> `[rows, oc * P]`, optionally adding a per-channel bias.
fn fold_positions(g: &ConvGeom, per_pos: ArrayView2<f64>, rows: usize, bias: Option<&[f64]>) -> Array2<f64> {
    let p = g.output.spatial();
    let oc = g.output.channels;
    let mut out = Array2::<f64>::zeros((rows, oc * p));
    for r in 0..rows {
        let mut dst = out.row_mut(r);
        for pos in 0..p {
            let src = per_pos.row(r * p + pos);
            for c in 0..oc {
                dst[c * p + pos] = src[c] + bias.map_or(0.0, |b| b[c]);
            }
        }
    }
    out
}

fn unfold_positions(g: &ConvGeom, d: ArrayView2<f64>) -> Array2<f64> {
    let p = g.output.spatial();
    let oc = g.output.channels;
    let rows = d.nrows();
    let mut out = Array2::<f64>::zeros((rows * p, oc));
    for r in 0..rows {
        let src = d.row(r);
        for pos in 0..p {
            let mut dst = out.row_mut(r * p + pos);
            for c in 0..oc {
                dst[c] = src[c * p + pos];
            }
        }
    }
    out
}

/// Gradients of the synaptic transform given d(loss)/d(currents).
pub(crate) struct SynapseGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Array2<f64>>,
}

pub(crate) fn backward(
    kind: LayerKind,
    in_shape: Shape3,
    out_shape: Shape3,
    weights: &[f64],
    x: ArrayView2<f64>,
    d_currents: ArrayView2<f64>,
    want_input: bool,
) -> Result<SynapseGrads> {
    match kind {
        LayerKind::Dense => {
            let w = ArrayView2::from_shape((out_shape.size(), in_shape.size()), weights)
                .map_err(|e| Error::Format(e.to_string()))?;
            let dw = d_currents.t().dot(&x);
            let db = d_currents.sum_axis(Axis(0));
            let dx = want_input.then(|| d_currents.dot(&w));
            Ok(SynapseGrads {
                weights: dw.as_standard_layout().iter().copied().collect(),
                bias: db.to_vec(),
                input: dx,
            })
        }
        LayerKind::Conv2d {
            kernel_h,
            kernel_w,
            stride,
        } => {
            let g = ConvGeom {
                input: in_shape,
                output: out_shape,
                kh: kernel_h,
                kw: kernel_w,
                stride,
            };
            let w = ArrayView2::from_shape((out_shape.channels, g.patch()), weights)
                .map_err(|e| Error::Format(e.to_string()))?;
            let cols = g.im2col(x);
            let d_pos = unfold_positions(&g, d_currents);
            let dw = d_pos.t().dot(&cols);
            let db = d_pos.sum_axis(Axis(0));
            let dx = want_input.then(|| {
                let d_cols = d_pos.dot(&w);
                g.col2im(d_cols.view(), x.nrows())
            });
            Ok(SynapseGrads {
                weights: dw.as_standard_layout().iter().copied().collect(),
                bias: db.to_vec(),
                input: dx,
            })
        }
    }
}
