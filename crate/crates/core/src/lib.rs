//! Inpainting-based saliency attribution for binary image classifiers.
//!
//! The toolkit finds the smallest image region whose removal — realized as
//! partial-convolution inpainting rather than blurring or noise — flips a
//! binary classifier's decision. It ships its own reverse-mode tensor
//! engine, a partial-convolution U-Net inpainter, a small CNN classifier
//! with a global-average-pooling head, the per-image mask optimizer, the
//! gradient (SAL) and class-activation (CAM) baseline visualizations, a
//! synthetic benchmark generator and a quantitative evaluation harness.

pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod inpaint;
pub mod parallel;
pub mod pconv;
pub mod rng;
pub mod saliency;
pub mod synth;

pub use error::{Result, SdrError};
