//! 2-d cross-correlation with stride and zero padding.
//!
//! The raw kernels work on flat row-major buffers and are shared with the
//! partial-convolution layer, which pre-masks its input and rescales the
//! upstream gradient before calling back into them.

use super::Tensor;
use crate::error::{Result, SdrError};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

pub(crate) fn conv_dims(
    op: &'static str,
    x_shape: &[usize],
    w_shape: &[usize],
    b_len: usize,
    stride: usize,
    pad: usize,
) -> Result<ConvDims> {
    if x_shape.len() != 4 {
        return Err(SdrError::dimension(
            op,
            format!("input must be [N,C,H,W], got {:?}", x_shape),
        ));
    }
    if w_shape.len() != 4 || w_shape[2] != w_shape[3] {
        return Err(SdrError::dimension(
            op,
            format!("weight must be [F,C,k,k], got {:?}", w_shape),
        ));
    }
    let (n, cin, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (f, wc, k) = (w_shape[0], w_shape[1], w_shape[2]);
    if wc != cin {
        return Err(SdrError::dimension(
            op,
            format!("input channels {} != weight channels {}", cin, wc),
        ));
    }
    if b_len != f {
        return Err(SdrError::dimension(
            op,
            format!("bias length {} != filters {}", b_len, f),
        ));
    }
    if stride < 1 {
        return Err(SdrError::dimension(op, "stride must be >= 1".to_string()));
    }
    if k > h + 2 * pad || k > w + 2 * pad {
        return Err(SdrError::dimension(
            op,
            format!("kernel {} exceeds padded input {}x{}", k, h + 2 * pad, w + 2 * pad),
        ));
    }
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    Ok(ConvDims {
        n,
        cin,
        h,
        w,
        f,
        k,
        stride,
        pad,
        oh,
        ow,
    })
}

fn pad_image(x: &[f32], d: &ConvDims, n: usize, out: &mut [f32]) {
    let (ph, pw) = (d.h + 2 * d.pad, d.w + 2 * d.pad);
    out.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..d.cin {
        for y in 0..d.h {
            let src = &x[((n * d.cin + c) * d.h + y) * d.w..][..d.w];
            let dst = &mut out[(c * ph + y + d.pad) * pw + d.pad..][..d.w];
            dst.copy_from_slice(src);
        }
    }
}

pub(crate) fn conv_forward_raw(x: &[f32], wt: &[f32], bias: Option<&[f32]>, d: &ConvDims) -> Vec<f32> {
    let (ph, pw) = (d.h + 2 * d.pad, d.w + 2 * d.pad);
    let mut out = vec![0.0f32; d.n * d.f * d.oh * d.ow];
    let mut padded = vec![0.0f32; d.cin * ph * pw];
    for n in 0..d.n {
        pad_image(x, d, n, &mut padded);
        for f in 0..d.f {
            let ob = ((n * d.f + f) * d.oh) * d.ow;
            for c in 0..d.cin {
                for ky in 0..d.k {
                    for kx in 0..d.k {
                        let wv = wt[((f * d.cin + c) * d.k + ky) * d.k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..d.oh {
                            let src = &padded[(c * ph + oy * d.stride + ky) * pw + kx..];
                            let dst = &mut out[ob + oy * d.ow..][..d.ow];
                            if d.stride == 1 {
                                for (dv, sv) in dst.iter_mut().zip(&src[..d.ow]) {
                                    *dv += wv * sv;
                                }
                            } else {
                                for (ox, dv) in dst.iter_mut().enumerate() {
                                    *dv += wv * src[ox * d.stride];
                                }
                            }
                        }
                    }
                }
            }
            if let Some(b) = bias {
                let bv = b[f];
                out[ob..ob + d.oh * d.ow].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

pub(crate) fn conv_backward_x_raw(dy: &[f32], wt: &[f32], d: &ConvDims) -> Vec<f32> {
    let (ph, pw) = (d.h + 2 * d.pad, d.w + 2 * d.pad);
    let mut dx = vec![0.0f32; d.n * d.cin * d.h * d.w];
    let mut dpad = vec![0.0f32; d.cin * ph * pw];
    for n in 0..d.n {
        dpad.iter_mut().for_each(|v| *v = 0.0);
        for f in 0..d.f {
            let ob = ((n * d.f + f) * d.oh) * d.ow;
            for c in 0..d.cin {
                for ky in 0..d.k {
                    for kx in 0..d.k {
                        let wv = wt[((f * d.cin + c) * d.k + ky) * d.k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..d.oh {
                            let src = &dy[ob + oy * d.ow..][..d.ow];
                            let dst = &mut dpad[(c * ph + oy * d.stride + ky) * pw + kx..];
                            if d.stride == 1 {
                                for (sv, dv) in src.iter().zip(dst.iter_mut()) {
                                    *dv += wv * sv;
                                }
                            } else {
                                for (ox, sv) in src.iter().enumerate() {
                                    dst[ox * d.stride] += wv * sv;
                                }
                            }
                        }
                    }
                }
            }
        }
        for c in 0..d.cin {
            for y in 0..d.h {
                let src = &dpad[(c * ph + y + d.pad) * pw + d.pad..][..d.w];
                let dst = &mut dx[((n * d.cin + c) * d.h + y) * d.w..][..d.w];
                for (dv, sv) in dst.iter_mut().zip(src) {
                    *dv += sv;
                }
            }
        }
    }
    dx
}

pub(crate) fn conv_backward_w_raw(x: &[f32], dy: &[f32], d: &ConvDims) -> Vec<f32> {
    let (ph, pw) = (d.h + 2 * d.pad, d.w + 2 * d.pad);
    let mut dw = vec![0.0f32; d.f * d.cin * d.k * d.k];
    let mut padded = vec![0.0f32; d.cin * ph * pw];
    for n in 0..d.n {
        pad_image(x, d, n, &mut padded);
        for f in 0..d.f {
            let ob = ((n * d.f + f) * d.oh) * d.ow;
            for c in 0..d.cin {
                for ky in 0..d.k {
                    for kx in 0..d.k {
                        let mut acc = 0.0f32;
                        for oy in 0..d.oh {
                            let src = &padded[(c * ph + oy * d.stride + ky) * pw + kx..];
                            let dyr = &dy[ob + oy * d.ow..][..d.ow];
                            if d.stride == 1 {
                                for (sv, dv) in src[..d.ow].iter().zip(dyr) {
                                    acc += sv * dv;
                                }
                            } else {
                                for (ox, dv) in dyr.iter().enumerate() {
                                    acc += src[ox * d.stride] * dv;
                                }
                            }
                        }
                        dw[((f * d.cin + c) * d.k + ky) * d.k + kx] += acc;
                    }
                }
            }
        }
    }
    dw
}

pub(crate) fn conv_backward_b_raw(dy: &[f32], d: &ConvDims) -> Vec<f32> {
    let mut db = vec![0.0f32; d.f];
    for n in 0..d.n {
        for f in 0..d.f {
            let ob = ((n * d.f + f) * d.oh) * d.ow;
            db[f] += dy[ob..ob + d.oh * d.ow].iter().sum::<f32>();
        }
    }
    db
}

/// Standard 2-d cross-correlation of `x: [N,C,H,W]` with `weight: [F,C,k,k]`
/// plus `bias: [F]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let d = conv_dims("conv2d", &x.shape(), &weight.shape(), bias.numel(), stride, pad)?;
    let out = {
        let xd = x.data();
        let wd = weight.data();
        let bd = bias.data();
        conv_forward_raw(&xd, &wd, Some(&bd), &d)
    };
    Ok(Tensor::from_op(
        out,
        vec![d.n, d.f, d.oh, d.ow],
        vec![x.clone(), weight.clone(), bias.clone()],
        Box::new(move |inner, parents| {
            let dy = inner.grad_slice();
            if parents[0].requires_grad() {
                let dx = {
                    let wd = parents[1].data();
                    conv_backward_x_raw(dy, &wd, &d)
                };
                parents[0].add_grad(&dx);
            }
            if parents[1].requires_grad() {
                let dw = {
                    let xd = parents[0].data();
                    conv_backward_w_raw(&xd, dy, &d)
                };
                parents[1].add_grad(&dw);
            }
            if parents[2].requires_grad() {
                parents[2].add_grad(&conv_backward_b_raw(dy, &d));
            }
        }),
    ))
}
