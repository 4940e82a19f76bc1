//! Elementwise, scalar-broadcast and reduction operations.
//!
//! Broadcasting is deliberately restricted to equal shapes and
//! scalar-with-tensor; nothing in the toolkit needs more.

use super::Tensor;
use crate::error::{Result, SdrError};

#[derive(Clone, Copy, PartialEq)]
enum Bc {
    Equal,
    ScalarLhs,
    ScalarRhs,
}

fn bc_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(Bc, Vec<usize>)> {
    let (sa, sb) = (a.shape(), b.shape());
    let (na, nb) = (a.numel(), b.numel());
    if sa == sb {
        Ok((Bc::Equal, sa))
    } else if na == 1 {
        Ok((Bc::ScalarLhs, sb))
    } else if nb == 1 {
        Ok((Bc::ScalarRhs, sa))
    } else {
        Err(SdrError::dimension(
            op,
            format!("incompatible shapes {:?} vs {:?}", sa, sb),
        ))
    }
}

fn reduce_or_pass(kind_scalar: bool, g: Vec<f32>) -> Vec<f32> {
    if kind_scalar {
        vec![g.iter().sum()]
    } else {
        g
    }
}

macro_rules! binary_data {
    ($a:expr, $b:expr, $kind:expr, $f:expr) => {{
        let ad = $a.data();
        let bd = $b.data();
        match $kind {
            Bc::Equal => ad.iter().zip(bd.iter()).map(|(&x, &y)| $f(x, y)).collect(),
            Bc::ScalarLhs => bd.iter().map(|&y| $f(ad[0], y)).collect(),
            Bc::ScalarRhs => ad.iter().map(|&x| $f(x, bd[0])).collect(),
        }
    }};
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (kind, shape) = bc_kind("add", self, other)?;
        let out: Vec<f32> = binary_data!(self, other, kind, |x: f32, y: f32| x + y);
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |inner, parents| {
                let dy = inner.grad_slice().to_vec();
                parents[0].add_grad(&reduce_or_pass(kind == Bc::ScalarLhs, dy.clone()));
                parents[1].add_grad(&reduce_or_pass(kind == Bc::ScalarRhs, dy));
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let (kind, shape) = bc_kind("sub", self, other)?;
        let out: Vec<f32> = binary_data!(self, other, kind, |x: f32, y: f32| x - y);
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |inner, parents| {
                let dy = inner.grad_slice().to_vec();
                let neg: Vec<f32> = dy.iter().map(|v| -v).collect();
                parents[0].add_grad(&reduce_or_pass(kind == Bc::ScalarLhs, dy));
                parents[1].add_grad(&reduce_or_pass(kind == Bc::ScalarRhs, neg));
            }),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (kind, shape) = bc_kind("mul", self, other)?;
        let out: Vec<f32> = binary_data!(self, other, kind, |x: f32, y: f32| x * y);
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |inner, parents| {
                let dy = inner.grad_slice();
                let ga: Vec<f32> = {
                    let bd = parents[1].data();
                    match kind {
                        Bc::Equal | Bc::ScalarRhs => dy
                            .iter()
                            .enumerate()
                            .map(|(i, &d)| d * bd[if kind == Bc::Equal { i } else { 0 }])
                            .collect(),
                        Bc::ScalarLhs => dy.iter().zip(bd.iter()).map(|(&d, &y)| d * y).collect(),
                    }
                };
                let gb: Vec<f32> = {
                    let ad = parents[0].data();
                    match kind {
                        Bc::Equal | Bc::ScalarLhs => dy
                            .iter()
                            .enumerate()
                            .map(|(i, &d)| d * ad[if kind == Bc::Equal { i } else { 0 }])
                            .collect(),
                        Bc::ScalarRhs => dy.iter().zip(ad.iter()).map(|(&d, &x)| d * x).collect(),
                    }
                };
                parents[0].add_grad(&reduce_or_pass(kind == Bc::ScalarLhs, ga));
                parents[1].add_grad(&reduce_or_pass(kind == Bc::ScalarRhs, gb));
            }),
        ))
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        let (kind, shape) = bc_kind("div", self, other)?;
        let out: Vec<f32> = binary_data!(self, other, kind, |x: f32, y: f32| x / y);
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |inner, parents| {
                let dy = inner.grad_slice();
                let at = |s: &[f32], i: usize, scalar: bool| s[if scalar { 0 } else { i }];
                let ga: Vec<f32> = {
                    let bd = parents[1].data();
                    dy.iter()
                        .enumerate()
                        .map(|(i, &d)| d / at(&bd, i, kind == Bc::ScalarRhs))
                        .collect()
                };
                let gb: Vec<f32> = {
                    let ad = parents[0].data();
                    let bd = parents[1].data();
                    dy.iter()
                        .enumerate()
                        .map(|(i, &d)| {
                            let x = at(&ad, i, kind == Bc::ScalarLhs);
                            let y = at(&bd, i, kind == Bc::ScalarRhs);
                            -d * x / (y * y)
                        })
                        .collect()
                };
                parents[0].add_grad(&reduce_or_pass(kind == Bc::ScalarLhs, ga));
                parents[1].add_grad(&reduce_or_pass(kind == Bc::ScalarRhs, gb));
            }),
        ))
    }

    /// Natural log. The whole input must be strictly positive; callers clamp
    /// first.
    pub fn log(&self) -> Result<Tensor> {
        if self.data().iter().any(|&v| v <= 0.0) {
            return Err(SdrError::Domain(
                "log of non-positive input; clamp before calling".into(),
            ));
        }
        let out: Vec<f32> = self.data().iter().map(|v| v.ln()).collect();
        Ok(Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(|inner, parents| {
                let g: Vec<f32> = {
                    let x = parents[0].data();
                    inner
                        .grad_slice()
                        .iter()
                        .zip(x.iter())
                        .map(|(&d, &v)| d / v)
                        .collect()
                };
                parents[0].add_grad(&g);
            }),
        ))
    }

    pub fn sigmoid(&self) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|&v| stable_sigmoid(v)).collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(|inner, parents| {
                let g: Vec<f32> = inner
                    .grad_slice()
                    .iter()
                    .zip(inner.data.iter())
                    .map(|(&d, &y)| d * y * (1.0 - y))
                    .collect();
                parents[0].add_grad(&g);
            }),
        )
    }

    /// `ln(1 + exp(x))`, numerically stable.
    pub fn softplus(&self) -> Tensor {
        let out: Vec<f32> = self
            .data()
            .iter()
            .map(|&v| v.max(0.0) + (-v.abs()).exp().ln_1p())
            .collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(|inner, parents| {
                let g: Vec<f32> = {
                    let x = parents[0].data();
                    inner
                        .grad_slice()
                        .iter()
                        .zip(x.iter())
                        .map(|(&d, &v)| d * stable_sigmoid(v))
                        .collect()
                };
                parents[0].add_grad(&g);
            }),
        )
    }

    pub fn relu(&self) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(|inner, parents| {
                let g: Vec<f32> = {
                    let x = parents[0].data();
                    inner
                        .grad_slice()
                        .iter()
                        .zip(x.iter())
                        .map(|(&d, &v)| if v > 0.0 { d } else { 0.0 })
                        .collect()
                };
                parents[0].add_grad(&g);
            }),
        )
    }

    pub fn leaky_relu(&self, alpha: f32) -> Tensor {
        let out: Vec<f32> = self
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { alpha * v })
            .collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(move |inner, parents| {
                let g: Vec<f32> = {
                    let x = parents[0].data();
                    inner
                        .grad_slice()
                        .iter()
                        .zip(x.iter())
                        .map(|(&d, &v)| if v > 0.0 { d } else { alpha * d })
                        .collect()
                };
                parents[0].add_grad(&g);
            }),
        )
    }

    /// Clamp to `[lo, hi]`; gradient passes unchanged inside the interval and
    /// is zero outside.
    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|&v| v.min(hi).max(lo)).collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(move |inner, parents| {
                let g: Vec<f32> = {
                    let x = parents[0].data();
                    inner
                        .grad_slice()
                        .iter()
                        .zip(x.iter())
                        .map(|(&d, &v)| if v >= lo && v <= hi { d } else { 0.0 })
                        .collect()
                };
                parents[0].add_grad(&g);
            }),
        )
    }

    pub fn abs(&self) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|v| v.abs()).collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(|inner, parents| {
                let g: Vec<f32> = {
                    let x = parents[0].data();
                    inner
                        .grad_slice()
                        .iter()
                        .zip(x.iter())
                        .map(|(&d, &v)| {
                            if v > 0.0 {
                                d
                            } else if v < 0.0 {
                                -d
                            } else {
                                0.0
                            }
                        })
                        .collect()
                };
                parents[0].add_grad(&g);
            }),
        )
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self) -> Tensor {
        let s: f32 = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![s],
            vec![1],
            vec![self.clone()],
            Box::new(move |inner, parents| {
                let d = inner.grad_slice()[0];
                parents[0].add_grad(&vec![d; n]);
            }),
        )
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        let s: f32 = self.data().iter().sum();
        Tensor::from_op(
            vec![s / n as f32],
            vec![1],
            vec![self.clone()],
            Box::new(move |inner, parents| {
                let d = inner.grad_slice()[0] / n as f32;
                parents[0].add_grad(&vec![d; n]);
            }),
        )
    }

    pub fn add_scalar(&self, c: f32) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|v| v + c).collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(|inner, parents| {
                parents[0].add_grad(inner.grad_slice());
            }),
        )
    }

    pub fn scale(&self, c: f32) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(move |inner, parents| {
                let g: Vec<f32> = inner.grad_slice().iter().map(|d| d * c).collect();
                parents[0].add_grad(&g);
            }),
        )
    }

    /// `c - self`.
    pub fn rsub_scalar(&self, c: f32) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|v| c - v).collect();
        Tensor::from_op(
            out,
            self.shape(),
            vec![self.clone()],
            Box::new(|inner, parents| {
                let g: Vec<f32> = inner.grad_slice().iter().map(|d| -d).collect();
                parents[0].add_grad(&g);
            }),
        )
    }

    /// Total variation over the trailing two dimensions: sum over adjacent
    /// horizontal and vertical pairs of squared differences. `normalized`
    /// divides by the pixel count.
    pub fn tv2d(&self, normalized: bool) -> Result<Tensor> {
        let (h, w) = spatial_dims("tv2d", self)?;
        let npix = (h * w) as f32;
        let k = if normalized { 1.0 / npix } else { 1.0 };
        let raw = {
            let x = self.data();
            tv_value(&x, h, w)
        };
        Ok(Tensor::from_op(
            vec![raw * k],
            vec![1],
            vec![self.clone()],
            Box::new(move |inner, parents| {
                let d = inner.grad_slice()[0] * k;
                let g: Vec<f32> = {
                    let x = parents[0].data();
                    tv_grad(&x, h, w, d)
                };
                parents[0].add_grad(&g);
            }),
        ))
    }
}

/// Total variation restricted to a region: an adjacent pair contributes when
/// either endpoint has nonzero region weight. Used for the smooth-transition
/// term around inpainting holes.
pub fn masked_tv2d(x: &Tensor, region: &[f32]) -> Result<Tensor> {
    let (h, w) = spatial_dims("masked_tv2d", x)?;
    if region.len() != h * w {
        return Err(SdrError::dimension(
            "masked_tv2d",
            format!("region length {} != {}x{}", region.len(), h, w),
        ));
    }
    let region = region.to_vec();
    let raw = {
        let d = x.data();
        masked_tv_value(&d, &region, h, w)
    };
    let region_b = region.clone();
    Ok(Tensor::from_op(
        vec![raw],
        vec![1],
        vec![x.clone()],
        Box::new(move |inner, parents| {
            let dy = inner.grad_slice()[0];
            let g: Vec<f32> = {
                let d = parents[0].data();
                masked_tv_grad(&d, &region_b, h, w, dy)
            };
            parents[0].add_grad(&g);
        }),
    ))
}

fn spatial_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    let shape = t.shape();
    if shape.len() < 2 {
        return Err(SdrError::dimension(op, format!("need >=2 dims, got {:?}", shape)));
    }
    let w = shape[shape.len() - 1];
    let h = shape[shape.len() - 2];
    if h * w != t.numel() {
        return Err(SdrError::dimension(
            op,
            format!("leading dimensions must be 1, got {:?}", shape),
        ));
    }
    Ok((h, w))
}

fn tv_value(x: &[f32], h: usize, w: usize) -> f32 {
    let mut acc = 0.0f32;
    for i in 0..h {
        for j in 0..w {
            let v = x[i * w + j];
            if j + 1 < w {
                let d = v - x[i * w + j + 1];
                acc += d * d;
            }
            if i + 1 < h {
                let d = v - x[(i + 1) * w + j];
                acc += d * d;
            }
        }
    }
    acc
}

fn tv_grad(x: &[f32], h: usize, w: usize, dy: f32) -> Vec<f32> {
    let mut g = vec![0.0f32; h * w];
    for i in 0..h {
        for j in 0..w {
            let v = x[i * w + j];
            if j + 1 < w {
                let d = 2.0 * (v - x[i * w + j + 1]) * dy;
                g[i * w + j] += d;
                g[i * w + j + 1] -= d;
            }
            if i + 1 < h {
                let d = 2.0 * (v - x[(i + 1) * w + j]) * dy;
                g[i * w + j] += d;
                g[(i + 1) * w + j] -= d;
            }
        }
    }
    g
}

fn masked_tv_value(x: &[f32], r: &[f32], h: usize, w: usize) -> f32 {
    let mut acc = 0.0f32;
    for i in 0..h {
        for j in 0..w {
            let idx = i * w + j;
            if j + 1 < w && (r[idx] != 0.0 || r[idx + 1] != 0.0) {
                let d = x[idx] - x[idx + 1];
                acc += d * d;
            }
            if i + 1 < h && (r[idx] != 0.0 || r[idx + w] != 0.0) {
                let d = x[idx] - x[idx + w];
                acc += d * d;
            }
        }
    }
    acc
}

fn masked_tv_grad(x: &[f32], r: &[f32], h: usize, w: usize, dy: f32) -> Vec<f32> {
    let mut g = vec![0.0f32; h * w];
    for i in 0..h {
        for j in 0..w {
            let idx = i * w + j;
            if j + 1 < w && (r[idx] != 0.0 || r[idx + 1] != 0.0) {
                let d = 2.0 * (x[idx] - x[idx + 1]) * dy;
                g[idx] += d;
                g[idx + 1] -= d;
            }
            if i + 1 < h && (r[idx] != 0.0 || r[idx + w] != 0.0) {
                let d = 2.0 * (x[idx] - x[idx + w]) * dy;
                g[idx] += d;
                g[idx + w] -= d;
            }
        }
    }
    g
}

pub(crate) fn stable_sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
