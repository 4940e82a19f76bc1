//! 2-d batch normalization with running statistics.

use std::cell::RefCell;

use super::Tensor;
use crate::error::{Result, SdrError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalization over `[N,C,H,W]`.
///
/// Train mode normalizes by batch statistics (biased variance) and updates
/// the running estimates with momentum; eval mode normalizes by the running
/// estimates. `eps` keeps zero-variance channels finite.
pub struct BatchNorm2d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: RefCell<Vec<f32>>,
    pub running_var: RefCell<Vec<f32>>,
    pub eps: f32,
    pub momentum: f32,
    channels: usize,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> BatchNorm2d {
        BatchNorm2d {
            gamma: Tensor::leaf(vec![1.0; channels], vec![channels], true),
            beta: Tensor::leaf(vec![0.0; channels], vec![channels], true),
            running_mean: RefCell::new(vec![0.0; channels]),
            running_var: RefCell::new(vec![1.0; channels]),
            eps: 1e-5,
            momentum: 0.9,
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![self.gamma.clone(), self.beta.clone()]
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(SdrError::dimension(
                "batchnorm2d",
                format!(
                    "input {:?} does not match {} channels",
                    shape, self.channels
                ),
            ));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let plane = h * w;
        let count = (n * plane) as f32;

        let (mean, var) = match mode {
            Mode::Train => {
                let xd = x.data();
                let mut mean = vec![0.0f32; c];
                let mut var = vec![0.0f32; c];
                for ch in 0..c {
                    let mut acc = 0.0f32;
                    for b in 0..n {
                        acc += xd[((b * c + ch) * plane)..][..plane].iter().sum::<f32>();
                    }
                    mean[ch] = acc / count;
                    let mut vacc = 0.0f32;
                    for b in 0..n {
                        for &v in &xd[((b * c + ch) * plane)..][..plane] {
                            let d = v - mean[ch];
                            vacc += d * d;
                        }
                    }
                    var[ch] = vacc / count;
                }
                drop(xd);
                {
                    let mut rm = self.running_mean.borrow_mut();
                    let mut rv = self.running_var.borrow_mut();
                    for ch in 0..c {
                        rm[ch] = self.momentum * rm[ch] + (1.0 - self.momentum) * mean[ch];
                        rv[ch] = self.momentum * rv[ch] + (1.0 - self.momentum) * var[ch];
                    }
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.borrow().clone(),
                self.running_var.borrow().clone(),
            ),
        };

        let eps = self.eps;
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0f32; n * c * plane];
        let mut out = vec![0.0f32; n * c * plane];
        {
            let xd = x.data();
            let g = self.gamma.data();
            let bt = self.beta.data();
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * plane;
                    for i in 0..plane {
                        let xh = (xd[base + i] - mean[ch]) * inv_std[ch];
                        xhat[base + i] = xh;
                        out[base + i] = g[ch] * xh + bt[ch];
                    }
                }
            }
        }

        let train = mode == Mode::Train;
        Ok(Tensor::from_op(
            out,
            shape.clone(),
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            Box::new(move |inner, parents| {
                let dy = inner.grad_slice();
                // d_gamma, d_beta.
                let mut dg = vec![0.0f32; c];
                let mut db = vec![0.0f32; c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * plane;
                        for i in 0..plane {
                            dg[ch] += dy[base + i] * xhat[base + i];
                            db[ch] += dy[base + i];
                        }
                    }
                }
                if parents[0].requires_grad() {
                    let gamma = parents[1].data().to_vec();
                    let mut dx = vec![0.0f32; n * c * plane];
                    if train {
                        // dx = gamma*inv_std*(dy - mean(dy) - xhat*mean(dy*xhat))
                        for ch in 0..c {
                            let mdy = db[ch] / count;
                            let mdyx = dg[ch] / count;
                            let k = gamma[ch] * inv_std[ch];
                            for b in 0..n {
                                let base = (b * c + ch) * plane;
                                for i in 0..plane {
                                    dx[base + i] =
                                        k * (dy[base + i] - mdy - xhat[base + i] * mdyx);
                                }
                            }
                        }
                    } else {
                        for ch in 0..c {
                            let k = gamma[ch] * inv_std[ch];
                            for b in 0..n {
                                let base = (b * c + ch) * plane;
                                for i in 0..plane {
                                    dx[base + i] = k * dy[base + i];
                                }
                            }
                        }
                    }
                    parents[0].add_grad(&dx);
                }
                parents[1].add_grad(&dg);
                parents[2].add_grad(&db);
            }),
        ))
    }
}
