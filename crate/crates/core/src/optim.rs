//! Adam-style optimizer over named parameter groups.
//!
//! State is kept per scalar entry (first/second moments plus a step count)
//! so groups can grow when Gaussians are appended and shrink on pruning,
//! with new entries starting from zero moments.

/// Per-group optimizer hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct ParamGroupConfig {
    pub name: &'static str,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl ParamGroupConfig {
    pub fn new(name: &'static str, lr: f64) -> Self {
        assert!(lr > 0.0);
        Self {
            name,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment state for one parameter group.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: Vec<u64>,
    /// Entries skipped because their gradient was non-finite.
    pub skipped_non_finite: usize,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: vec![0; len],
            skipped_non_finite: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Grow to `len` entries; new entries start with zero moments.
    pub fn grow(&mut self, len: usize) {
        assert!(len >= self.m.len());
        self.m.resize(len, 0.0);
        self.v.resize(len, 0.0);
        self.steps.resize(len, 0);
    }

    /// Keep state entries whose parameter block survives pruning.
    /// `keep` has one flag per block of `stride` scalars.
    pub fn retain_blocks(&mut self, keep: &[bool], stride: usize) {
        assert_eq!(keep.len() * stride, self.m.len());
        let filter = |data: &mut Vec<f64>| {
            let mut i = 0;
            data.retain(|_| {
                let k = keep[i / stride];
                i += 1;
                k
            });
        };
        filter(&mut self.m);
        filter(&mut self.v);
        let mut i = 0;
        self.steps.retain(|_| {
            let k = keep[i / stride];
            i += 1;
            k
        });
    }

    pub fn first_moment(&self, i: usize) -> f64 {
        self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> f64 {
        self.v[i]
    }

    /// One bias-corrected update. Entries with non-finite gradients are
    /// skipped and counted.
    pub fn step(&mut self, cfg: &ParamGroupConfig, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        for i in 0..params.len() {
            let g = grads[i];
            if !g.is_finite() {
                self.skipped_non_finite += 1;
                continue;
            }
            self.steps[i] += 1;
            let t = self.steps[i] as f64;
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / (1.0 - cfg.beta1.powf(t));
            let v_hat = self.v[i] / (1.0 - cfg.beta2.powf(t));
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Default learning rates for the Gaussian parameter groups.
#[derive(Clone, Copy, Debug)]
pub struct GaussianLearningRates {
    pub mean: f64,
    pub rotation: f64,
    pub log_scales: f64,
    pub opacity_logit: f64,
    pub color: f64,
}

impl Default for GaussianLearningRates {
    fn default() -> Self {
        Self {
            mean: 1e-3,
            rotation: 1e-3,
            log_scales: 5e-3,
            opacity_logit: 5e-2,
            color: 2.5e-3,
        }
    }
}

/// Default learning rates for tracking pose optimization.
#[derive(Clone, Copy, Debug)]
pub struct PoseLearningRates {
    pub translation: f64,
    pub rotation: f64,
}

impl Default for PoseLearningRates {
    fn default() -> Self {
        Self {
            translation: 2e-3,
            rotation: 1e-3,
        }
    }
}
