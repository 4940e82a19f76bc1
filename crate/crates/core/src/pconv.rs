//! Partial convolution: masked convolution with renormalization and mask
//! propagation.
//!
//! At each output location the filter sees only unmasked pixels. With `msum`
//! the count of valid mask pixels in the sliding window, the output is
//! `W'(X (.) M) * scale + b` when `msum > 0` and `0` otherwise, and the
//! propagated mask is `1` wherever `msum > 0`. Padding counts as masked.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::conv as convraw;
use crate::autodiff::{conv2d, Tensor};
use crate::error::{Result, SdrError};

/// Renormalization of the masked window sum.
///
/// `Paper` scales by `1/sum(M)`; `WindowRatio` scales by `k^2/sum(M)` as in
/// the original inpainting formulation. The difference is a per-layer gain
/// only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Renorm {
    Paper,
    WindowRatio,
}

/// One partial-convolution layer. Kernel is square and odd (3, 5 or 7) with
/// padding fixed to `(k-1)/2`, so spatial dims follow the stride alone.
pub struct PConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub renorm: Renorm,
}

impl PConvLayer {
    pub fn new(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        renorm: Renorm,
        rng: &mut impl Rng,
    ) -> Result<PConvLayer> {
        if k % 2 == 0 || !(3..=7).contains(&k) {
            return Err(SdrError::Contract(format!(
                "partial conv kernel must be odd in 3..=7, got {}",
                k
            )));
        }
        let fan_in = (cin * k * k) as f32;
        let std = (2.0 / fan_in).sqrt();
        let normal = Normal::new(0.0, std as f64).unwrap();
        let weight: Vec<f32> = (0..cout * cin * k * k)
            .map(|_| normal.sample(rng) as f32)
            .collect();
        Ok(PConvLayer {
            weight: Tensor::leaf(weight, vec![cout, cin, k, k], true),
            bias: Tensor::leaf(vec![0.0; cout], vec![cout], true),
            stride,
            padding: (k - 1) / 2,
            renorm,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![self.weight.clone(), self.bias.clone()]
    }

    /// Masked convolution of `x: [N,C,H,W]` under `mask: [N,1,H,W]`,
    /// returning the new features and the propagated mask.
    ///
    /// The mask must be strictly binary; it is shared across channels and is
    /// not differentiated through.
    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        let xs = x.shape();
        let ms = mask.shape();
        if ms.len() != 4 || ms[1] != 1 || ms[0] != xs[0] || ms[2] != xs[2] || ms[3] != xs[3] {
            return Err(SdrError::dimension(
                "pconv",
                format!("mask {:?} does not match input {:?}", ms, xs),
            ));
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(SdrError::Contract(
                "partial conv mask must be binary; binarize/detach before calling".into(),
            ));
        }
        let d = convraw::conv_dims(
            "pconv",
            &xs,
            &self.weight.shape(),
            self.bias.numel(),
            self.stride,
            self.padding,
        )?;
        let k2 = (d.k * d.k) as f32;

        // Valid-pixel count per window: box filter over the mask.
        let mask_dims = convraw::ConvDims { cin: 1, f: 1, ..d };
        let ones = vec![1.0f32; d.k * d.k];
        let msum = {
            let md = mask.data();
            convraw::conv_forward_raw(&md, &ones, None, &mask_dims)
        };
        let scale: Vec<f32> = msum
            .iter()
            .map(|&s| {
                if s > 0.0 {
                    match self.renorm {
                        Renorm::Paper => 1.0 / s,
                        Renorm::WindowRatio => k2 / s,
                    }
                } else {
                    0.0
                }
            })
            .collect();
        let mask_out: Vec<f32> = msum.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
        let new_mask = Tensor::leaf(mask_out, vec![d.n, 1, d.oh, d.ow], false);

        let masked_x = {
            let xd = x.data();
            let md = mask.data();
            masked_values(&xd, &md, &d)
        };
        let mut out = {
            let wd = self.weight.data();
            convraw::conv_forward_raw(&masked_x, &wd, None, &d)
        };
        {
            let bd = self.bias.data();
            let plane = d.oh * d.ow;
            for n in 0..d.n {
                for f in 0..d.f {
                    let base = (n * d.f + f) * plane;
                    for (i, o) in out[base..base + plane].iter_mut().enumerate() {
                        let s = scale[n * plane + i];
                        *o = if s > 0.0 { *o * s + bd[f] } else { 0.0 };
                    }
                }
            }
        }

        let mask_data = mask.to_vec();
        let out = Tensor::from_op(
            out,
            vec![d.n, d.f, d.oh, d.ow],
            vec![x.clone(), self.weight.clone(), self.bias.clone()],
            Box::new(move |inner, parents| {
                let dy = inner.grad_slice();
                let plane = d.oh * d.ow;
                // Upstream gradient rescaled per window; zero branch passes nothing.
                let mut dys = vec![0.0f32; dy.len()];
                for n in 0..d.n {
                    for f in 0..d.f {
                        let base = (n * d.f + f) * plane;
                        for i in 0..plane {
                            dys[base + i] = dy[base + i] * scale[n * plane + i];
                        }
                    }
                }
                if parents[0].requires_grad() {
                    let dxm = {
                        let wd = parents[1].data();
                        convraw::conv_backward_x_raw(&dys, &wd, &d)
                    };
                    let mut dx = dxm;
                    apply_mask_inplace(&mut dx, &mask_data, &d);
                    parents[0].add_grad(&dx);
                }
                if parents[1].requires_grad() {
                    let masked_x = {
                        let xd = parents[0].data();
                        masked_values(&xd, &mask_data, &d)
                    };
                    let dw = convraw::conv_backward_w_raw(&masked_x, &dys, &d);
                    parents[1].add_grad(&dw);
                }
                if parents[2].requires_grad() {
                    let mut db = vec![0.0f32; d.f];
                    for n in 0..d.n {
                        for f in 0..d.f {
                            let base = (n * d.f + f) * plane;
                            for i in 0..plane {
                                if scale[n * plane + i] > 0.0 {
                                    db[f] += dy[base + i];
                                }
                            }
                        }
                    }
                    parents[2].add_grad(&db);
                }
            }),
        );
        Ok((out, new_mask))
    }
}

fn masked_values(xd: &[f32], md: &[f32], d: &convraw::ConvDims) -> Vec<f32> {
    let plane = d.h * d.w;
    let mut out = vec![0.0f32; xd.len()];
    for n in 0..d.n {
        for c in 0..d.cin {
            let base = (n * d.cin + c) * plane;
            let mbase = n * plane;
            for i in 0..plane {
                out[base + i] = xd[base + i] * md[mbase + i];
            }
        }
    }
    out
}

fn apply_mask_inplace(g: &mut [f32], mask: &[f32], d: &convraw::ConvDims) {
    let plane = d.h * d.w;
    for n in 0..d.n {
        for c in 0..d.cin {
            let base = (n * d.cin + c) * plane;
            let mbase = n * plane;
            for i in 0..plane {
                g[base + i] *= mask[mbase + i];
            }
        }
    }
}

/// Reference check helper: a full mask makes the paper-renorm partial conv
/// equal a standard convolution scaled by `1/k^2` (plus bias).
pub fn full_mask_reference(x: &Tensor, layer: &PConvLayer) -> Result<Tensor> {
    let k2 = (layer.kernel() * layer.kernel()) as f32;
    let scaled = layer.weight.scale(1.0 / k2);
    conv2d(x, &scaled, &layer.bias, layer.stride, layer.padding)
}

#[cfg(test)]
mod tests;
