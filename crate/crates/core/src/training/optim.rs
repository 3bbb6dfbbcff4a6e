use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};
use crate::training::TrainConfig;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction and the conventional default constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    /// Completed updates.
    pub t: u64,
}

impl<T: Real> Adam<T> {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[&Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update of every parameter with its gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Length(format!(
                "Adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
        let c1 = T::of(1.0 - ADAM_BETA1.powi(self.t as i32));
        let c2 = T::of(1.0 - ADAM_BETA2.powi(self.t as i32));
        let (lr, eps) = (T::of(lr), T::of(ADAM_EPS));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() {
                return Err(Error::dims("adam", p.shape(), g.shape()));
            }
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup to the peak, then cosine decay to zero at the final step,
/// times the plateau `scale`.
pub fn lr_at(step: usize, cfg: &TrainConfig, scale: f64) -> f64 {
    let base = if step < cfg.warmup {
        cfg.peak_lr * step as f64 / cfg.warmup as f64
    } else {
        let span = (cfg.steps - cfg.warmup).max(1) as f64;
        let progress = ((step - cfg.warmup) as f64 / span).min(1.0);
        cfg.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    };
    base * scale
}

/// Reduce-on-plateau state: the schedule is multiplied by `factor` after
/// `patience` consecutive evaluations without an improvement of at least
/// `min_delta` nats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plateau {
    pub best: f64,
    pub stalls: usize,
    pub scale: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            best: f64::INFINITY,
            stalls: 0,
            scale: 1.0,
        }
    }
}

impl Plateau {
    /// Records a validation loss; returns true when the scale was reduced.
    pub fn observe(&mut self, val: f64, cfg: &TrainConfig) -> bool {
        if val < self.best - cfg.plateau_min_delta {
            self.best = val;
            self.stalls = 0;
            return false;
        }
        self.stalls += 1;
        if self.stalls >= cfg.plateau_patience {
            self.scale *= cfg.plateau_factor;
            self.stalls = 0;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig {
            steps: 1000,
            warmup: 100,
            peak_lr: 3e-4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_endpoints() {
        let c = cfg();
        assert_eq!(lr_at(0, &c, 1.0), 0.0);
        assert!((lr_at(100, &c, 1.0) - 3e-4).abs() < 1e-18);
        assert!(lr_at(1000, &c, 1.0).abs() < 1e-18);
        assert!((lr_at(50, &c, 1.0) - 1.5e-4).abs() < 1e-18);
        assert!((lr_at(550, &c, 1.0) - 1.5e-4).abs() < 1e-12);
        assert!((lr_at(550, &c, 0.5) - 0.75e-4).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f64>::from_fn(&[3], |i| i as f64);
        let before = p.clone();
        let mut adam = Adam::new(&[&p]);
        for _ in 0..5 {
            adam.step(&mut [&mut p], &[Tensor::zeros(&[3])], 0.1).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::<f64>::zeros(&[2]);
        let mut adam = Adam::new(&[&p]);
        let g = Tensor::new(&[2], vec![0.3, -7.0]).unwrap();
        adam.step(&mut [&mut p], &[g], 1e-3).unwrap();
        assert!((p.data()[0] + 1e-3).abs() < 1e-10);
        assert!((p.data()[1] - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn plateau_halves_after_patience() {
        let c = cfg();
        let mut pl = Plateau::default();
        assert!(!pl.observe(2.0, &c));
        assert!(!pl.observe(1.9995, &c));
        assert!(!pl.observe(2.1, &c));
        assert!(pl.observe(1.9999, &c));
        assert_eq!(pl.scale, 0.5);
        assert!(!pl.observe(1.5, &c));
        assert_eq!(pl.stalls, 0);
    }
}
