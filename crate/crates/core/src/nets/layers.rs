//! Dense and 3x3 convolution layers with hand-derived backward passes.
//! Everything runs in f64 so analytic gradients can be checked against
//! central finite differences at tight tolerance.

use serde::{Deserialize, Serialize};

/// 3x3 convolution, padding 1, configurable stride, ReLU activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub weights: Vec<f64>, // [out_ch][in_ch][3][3]
    pub bias: Vec<f64>,    // [out_ch]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub relu: bool,
    pub weights: Vec<f64>, // [out_dim][in_dim]
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub ch: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.ch * self.h * self.w
    }
}

pub fn conv_out_shape(input: Shape, out_ch: usize, stride: usize) -> Shape {
    Shape {
        ch: out_ch,
        h: (input.h - 1) / stride + 1,
        w: (input.w - 1) / stride + 1,
    }
}

/// Zero-pad a (ch, h, w) tensor by one pixel on each side.
pub fn pad1(input: &[f64], shape: Shape) -> Vec<f64> {
    let (ch, h, w) = (shape.ch, shape.h, shape.w);
    let (ph, pw) = (h + 2, w + 2);
    let mut padded = vec![0.0; ch * ph * pw];
    for c in 0..ch {
        for y in 0..h {
            let src = c * h * w + y * w;
            let dst = c * ph * pw + (y + 1) * pw + 1;
            padded[dst..dst + w].copy_from_slice(&input[src..src + w]);
        }
    }
    padded
}

impl ConvLayer {
    /// Forward from the padded input; output is post-ReLU.
    pub fn forward(&self, padded: &[f64], in_shape: Shape) -> (Vec<f64>, Shape) {
        let out_shape = conv_out_shape(in_shape, self.out_ch, self.stride);
        let (oh, ow) = (out_shape.h, out_shape.w);
        let (ph, pw) = (in_shape.h + 2, in_shape.w + 2);
        let mut out = vec![0.0; self.out_ch * oh * ow];
        for oc in 0..self.out_ch {
            let bias = self.bias[oc];
            for oy in 0..oh {
                let iy = oy * self.stride;
                let row_base = (oc * oh + oy) * ow;
                for ox in 0..ow {
                    let ix = ox * self.stride;
                    let mut acc = bias;
                    for ic in 0..self.in_ch {
                        let wb = (oc * self.in_ch + ic) * 9;
                        let pb = ic * ph * pw + iy * pw + ix;
                        acc += self.weights[wb] * padded[pb]
                            + self.weights[wb + 1] * padded[pb + 1]
                            + self.weights[wb + 2] * padded[pb + 2]
                            + self.weights[wb + 3] * padded[pb + pw]
                            + self.weights[wb + 4] * padded[pb + pw + 1]
                            + self.weights[wb + 5] * padded[pb + pw + 2]
                            + self.weights[wb + 6] * padded[pb + 2 * pw]
                            + self.weights[wb + 7] * padded[pb + 2 * pw + 1]
                            + self.weights[wb + 8] * padded[pb + 2 * pw + 2];
                    }
                    out[row_base + ox] = if acc > 0.0 { acc } else { 0.0 };
                }
            }
        }
        (out, out_shape)
    }

    /// Backward pass. `d_out` must already include the ReLU mask. Returns
    /// gradients for this layer and, when `need_input_grad`, the gradient
    /// with respect to the unpadded input.
    pub fn backward(
        &self,
        padded: &[f64],
        in_shape: Shape,
        d_out: &[f64],
        out_shape: Shape,
        need_input_grad: bool,
    ) -> (ConvGrads, Option<Vec<f64>>) {
        let (oh, ow) = (out_shape.h, out_shape.w);
        let (ph, pw) = (in_shape.h + 2, in_shape.w + 2);
        let mut dw = vec![0.0; self.weights.len()];
        let mut db = vec![0.0; self.out_ch];
        let mut d_padded = if need_input_grad {
            vec![0.0; self.in_ch * ph * pw]
        } else {
            Vec::new()
        };
        for oc in 0..self.out_ch {
            for oy in 0..oh {
                let iy = oy * self.stride;
                for ox in 0..ow {
                    let g = d_out[(oc * oh + oy) * ow + ox];
                    if g == 0.0 {
                        continue;
                    }
                    let ix = ox * self.stride;
                    db[oc] += g;
                    for ic in 0..self.in_ch {
                        let wb = (oc * self.in_ch + ic) * 9;
                        let pb = ic * ph * pw + iy * pw + ix;
                        for ky in 0..3 {
                            let prow = pb + ky * pw;
                            let wrow = wb + ky * 3;
                            dw[wrow] += g * padded[prow];
                            dw[wrow + 1] += g * padded[prow + 1];
                            dw[wrow + 2] += g * padded[prow + 2];
                            if need_input_grad {
                                d_padded[prow] += g * self.weights[wrow];
                                d_padded[prow + 1] += g * self.weights[wrow + 1];
                                d_padded[prow + 2] += g * self.weights[wrow + 2];
                            }
                        }
                    }
                }
            }
        }
        let d_input = if need_input_grad {
            let (ch, h, w) = (in_shape.ch, in_shape.h, in_shape.w);
            let mut d_in = vec![0.0; ch * h * w];
            for c in 0..ch {
                for y in 0..h {
                    let src = c * ph * pw + (y + 1) * pw + 1;
                    let dst = c * h * w + y * w;
                    d_in[dst..dst + w].copy_from_slice(&d_padded[src..src + w]);
                }
            }
            Some(d_in)
        } else {
            None
        };
        (ConvGrads { dw, db }, d_input)
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl DenseLayer {
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(if self.relu && acc < 0.0 { 0.0 } else { acc });
        }
        out
    }

    /// `d_out` must already include the ReLU mask when `self.relu`.
    pub fn backward(&self, input: &[f64], d_out: &[f64]) -> (DenseGrads, Vec<f64>) {
        let mut dw = vec![0.0; self.weights.len()];
        let mut d_in = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let g = d_out[o];
            if g == 0.0 {
                continue;
            }
            let base = o * self.in_dim;
            for i in 0..self.in_dim {
                dw[base + i] += g * input[i];
                d_in[i] += g * self.weights[base + i];
            }
        }
        (
            DenseGrads {
                dw,
                db: d_out.to_vec(),
            },
            d_in,
        )
    }
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

pub fn global_avg_pool(input: &[f64], shape: Shape) -> Vec<f64> {
    let plane = shape.h * shape.w;
    (0..shape.ch)
        .map(|c| input[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64)
        .collect()
}

pub fn global_avg_pool_backward(d_out: &[f64], shape: Shape) -> Vec<f64> {
    let plane = shape.h * shape.w;
    let mut d_in = vec![0.0; shape.len()];
    for c in 0..shape.ch {
        let g = d_out[c] / plane as f64;
        for v in &mut d_in[c * plane..(c + 1) * plane] {
            *v = g;
        }
    }
    d_in
}

/// Mask a gradient by ReLU activity: zero where the activation was clipped.
pub fn relu_mask(d: &mut [f64], post_activation: &[f64]) {
    for (g, a) in d.iter_mut().zip(post_activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
