//! Pooling, upsampling, concatenation and global average pooling.

use super::Tensor;
use crate::error::{Result, SdrError};

/// Non-overlapping max pooling with window `k`; spatial dims must divide by
/// `k`. The backward pass routes gradient to the first (row-major) argmax.
pub fn maxpool2d(x: &Tensor, k: usize) -> Result<Tensor> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(SdrError::dimension(
            "maxpool2d",
            format!("input must be [N,C,H,W], got {:?}", shape),
        ));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if h % k != 0 || w % k != 0 {
        return Err(SdrError::dimension(
            "maxpool2d",
            format!("spatial dims {}x{} not divisible by {}", h, w, k),
        ));
    }
    let (oh, ow) = (h / k, w / k);
    let mut out = vec![0.0f32; n * c * oh * ow];
    let mut argmax = vec![0usize; n * c * oh * ow];
    {
        let xd = x.data();
        for nc in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for dy in 0..k {
                        for dx in 0..k {
                            let idx = (nc * h + oy * k + dy) * w + ox * k + dx;
                            let v = xd[idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (nc * oh + oy) * ow + ox;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    let in_len = n * c * h * w;
    Ok(Tensor::from_op(
        out,
        vec![n, c, oh, ow],
        vec![x.clone()],
        Box::new(move |inner, parents| {
            let dy = inner.grad_slice();
            let mut g = vec![0.0f32; in_len];
            for (o, &src) in argmax.iter().enumerate() {
                g[src] += dy[o];
            }
            parents[0].add_grad(&g);
        }),
    ))
}

/// Nearest-neighbor upsampling by an integer factor.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(SdrError::dimension(
            "upsample_nearest",
            format!("input must be [N,C,H,W], got {:?}", shape),
        ));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = vec![0.0f32; n * c * oh * ow];
    {
        let xd = x.data();
        for nc in 0..n * c {
            for oy in 0..oh {
                let src = &xd[(nc * h + oy / factor) * w..][..w];
                let dst = &mut out[(nc * oh + oy) * ow..][..ow];
                for (ox, dv) in dst.iter_mut().enumerate() {
                    *dv = src[ox / factor];
                }
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![n, c, oh, ow],
        vec![x.clone()],
        Box::new(move |inner, parents| {
            let dy = inner.grad_slice();
            let mut g = vec![0.0f32; n * c * h * w];
            for nc in 0..n * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        g[(nc * h + oy / factor) * w + ox / factor] +=
                            dy[(nc * oh + oy) * ow + ox];
                    }
                }
            }
            parents[0].add_grad(&g);
        }),
    ))
}

/// Concatenate along `axis`; every other dimension must agree.
pub fn concat(inputs: &[Tensor], axis: usize) -> Result<Tensor> {
    if inputs.is_empty() {
        return Err(SdrError::dimension("concat", "no inputs".to_string()));
    }
    let first = inputs[0].shape();
    if axis >= first.len() {
        return Err(SdrError::dimension(
            "concat",
            format!("axis {} out of range for shape {:?}", axis, first),
        ));
    }
    let mut out_shape = first.clone();
    let mut axis_sizes = vec![first[axis]];
    for t in &inputs[1..] {
        let s = t.shape();
        if s.len() != first.len() {
            return Err(SdrError::dimension(
                "concat",
                format!("rank mismatch {:?} vs {:?}", first, s),
            ));
        }
        for (i, (&a, &b)) in first.iter().zip(s.iter()).enumerate() {
            if i != axis && a != b {
                return Err(SdrError::dimension(
                    "concat",
                    format!("axis {} differs: {:?} vs {:?}", i, first, s),
                ));
            }
        }
        out_shape[axis] += s[axis];
        axis_sizes.push(s[axis]);
    }

    let outer: usize = first[..axis].iter().product();
    let inner_len: usize = first[axis + 1..].iter().product();
    let total_axis = out_shape[axis];
    let mut out = vec![0.0f32; outer * total_axis * inner_len];
    let mut offset = 0usize;
    for (t, &asz) in inputs.iter().zip(&axis_sizes) {
        let td = t.data();
        for o in 0..outer {
            let src = &td[o * asz * inner_len..][..asz * inner_len];
            let dst = &mut out[(o * total_axis + offset) * inner_len..][..asz * inner_len];
            dst.copy_from_slice(src);
        }
        offset += asz;
    }

    Ok(Tensor::from_op(
        out,
        out_shape,
        inputs.to_vec(),
        Box::new(move |inner, parents| {
            let dy = inner.grad_slice();
            let mut offset = 0usize;
            for (p, &asz) in parents.iter().zip(&axis_sizes) {
                if p.requires_grad() {
                    let mut g = vec![0.0f32; outer * asz * inner_len];
                    for o in 0..outer {
                        let src = &dy[(o * total_axis + offset) * inner_len..][..asz * inner_len];
                        g[o * asz * inner_len..][..asz * inner_len].copy_from_slice(src);
                    }
                    p.add_grad(&g);
                }
                offset += asz;
            }
        }),
    ))
}

/// Global average pooling: `[N,C,H,W] -> [N,C,1,1]`.
pub fn gap2d(x: &Tensor) -> Result<Tensor> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(SdrError::dimension(
            "gap2d",
            format!("input must be [N,C,H,W], got {:?}", shape),
        ));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let hw = (h * w) as f32;
    let mut out = vec![0.0f32; n * c];
    {
        let xd = x.data();
        for nc in 0..n * c {
            out[nc] = xd[nc * h * w..(nc + 1) * h * w].iter().sum::<f32>() / hw;
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![n, c, 1, 1],
        vec![x.clone()],
        Box::new(move |inner, parents| {
            let dy = inner.grad_slice();
            let mut g = vec![0.0f32; n * c * h * w];
            for nc in 0..n * c {
                let d = dy[nc] / hw;
                g[nc * h * w..(nc + 1) * h * w]
                    .iter_mut()
                    .for_each(|v| *v = d);
            }
            parents[0].add_grad(&g);
        }),
    ))
}
