//! Gradient descent with global-norm clipping and a plateau-based learning
//! rate schedule.

use super::params::ParamSet;
use super::tape::dot;

/// Euclidean norm of all gradients taken together.
pub fn global_grad_norm(params: &ParamSet) -> f64 {
    let mut total = 0.0;
    for (_, p) in params.iter() {
        let g = p.grad().data();
        total += dot(g, g);
    }
    total.sqrt()
}

/// Performs one SGD step `value -= lr * grad`, first rescaling the full
/// gradient to norm `clip` whenever it is larger. Returns the norm measured
/// before clipping.
pub fn clip_and_step(params: &mut ParamSet, lr: f64, clip: f64) -> f64 {
    assert!(clip > 0.0, "clip threshold must be positive");
    let norm = global_grad_norm(params);
    let scale = if norm > clip { clip / norm } else { 1.0 };
    params.apply_step(lr, scale);
    norm
}

/// Learning rate that decays multiplicatively when the observed development
/// loss stops improving.
///
/// The plateau clock is measured in minibatches. Any strict improvement of
/// the best seen loss resets the clock; once `window` minibatches elapse
/// without one, the rate is multiplied by `decay` and the clock resets.
#[derive(Debug, Clone)]
pub struct LrSchedule {
    lr: f64,
    decay: f64,
    window: usize,
    best: Option<f64>,
    last_reset: usize,
}

impl LrSchedule {
    pub fn new(lr0: f64, decay: f64, window: usize) -> Self {
        LrSchedule {
            lr: lr0,
            decay,
            window,
            best: None,
            last_reset: 0,
        }
    }

    pub fn current(&self) -> f64 {
        self.lr
    }

    /// Records a development-loss measurement taken after `minibatch`
    /// updates and returns the rate to use from now on.
    pub fn observe(&mut self, minibatch: usize, dev_loss: f64) -> f64 {
        let improved = self.best.is_none_or(|b| dev_loss < b);
        if improved {
            self.best = Some(dev_loss);
            self.last_reset = minibatch;
        } else if minibatch.saturating_sub(self.last_reset) >= self.window {
            self.lr *= self.decay;
            self.last_reset = minibatch;
        }
        self.lr
    }
}
