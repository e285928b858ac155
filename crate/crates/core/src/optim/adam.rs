use serde::{Deserialize, Serialize};

use crate::field::{Gradient, RadianceGrid};

/// Exponential decay from `initial` to `final_lr` over `total` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub final_lr: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.02,
            final_lr: 0.002,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.initial;
        }
        let frac = step as f64 / (total - 1) as f64;
        self.initial * (self.final_lr / self.initial).powf(frac)
    }
}

/// Adaptive-moment optimizer state over every grid parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(grid: &RadianceGrid) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            first: vec![0.0; grid.param_count()],
            second: vec![0.0; grid.param_count()],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Returns false if any updated parameter left the finite range.
    pub fn step(&mut self, grid: &mut RadianceGrid, grad: &Gradient, lr: f64) -> bool {
        debug_assert_eq!(grad.values.len(), self.first.len());
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (m, v) = (&mut self.first, &mut self.second);
        let eps = self.eps;
        let mut finite = true;
        grid.update_raw(|i, p| {
            let g = grad.values[i];
            if g == 0.0 && m[i] == 0.0 {
                return;
            }
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            *p -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            finite &= p.is_finite();
        });
        finite
    }
}
