use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One-cycle learning-rate schedule: cosine rise from `max_lr / initial_div`
/// to `max_lr` over the warmup fraction, then cosine anneal down to
/// `max_lr / final_div`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneCycleSchedule {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
    pub initial_div: f64,
    pub final_div: f64,
}

impl OneCycleSchedule {
    pub fn new(max_lr: f64, total_steps: usize) -> Result<Self> {
        let sched = Self {
            max_lr,
            total_steps,
            warmup_frac: 0.3,
            initial_div: 25.0,
            final_div: 1e4,
        };
        sched.validate()?;
        Ok(sched)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_lr <= 0.0 || self.total_steps < 2 {
            return Err(Error::Config(
                "one-cycle schedule needs max_lr > 0 and at least 2 steps".into(),
            ));
        }
        if !(0.0 < self.warmup_frac && self.warmup_frac < 1.0) {
            return Err(Error::Config("warmup_frac must be in (0, 1)".into()));
        }
        if self.initial_div < 1.0 || self.final_div < 1.0 {
            return Err(Error::Config("divisors must be >= 1".into()));
        }
        Ok(())
    }

    /// Index of the step at which the schedule reaches `max_lr`.
    pub fn warmup_end(&self) -> usize {
        let end = ((self.total_steps - 1) as f64 * self.warmup_frac).round() as usize;
        end.max(1)
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        if step >= self.total_steps {
            return Err(Error::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        let warm = self.warmup_end();
        let initial = self.max_lr / self.initial_div;
        let fin = self.max_lr / self.final_div;
        let lr = if step == warm {
            self.max_lr
        } else if step < warm {
            let p = step as f64 / warm as f64;
            initial + (self.max_lr - initial) * (1.0 - (std::f64::consts::PI * p).cos()) / 2.0
        } else {
            let span = (self.total_steps - 1 - warm) as f64;
            let p = (step - warm) as f64 / span;
            fin + (self.max_lr - fin) * (1.0 + (std::f64::consts::PI * p).cos()) / 2.0
        };
        debug_assert!(lr > 0.0);
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_lr_at_end_of_warmup() {
        let s = OneCycleSchedule::new(1e-3, 1000).unwrap();
        let lr = s.lr(s.warmup_end()).unwrap();
        assert_eq!(lr, 1e-3);
    }

    #[test]
    fn initial_lr_is_max_over_divisor() {
        let s = OneCycleSchedule::new(1e-3, 1000).unwrap();
        let lr = s.lr(0).unwrap();
        assert!((lr - 4e-5).abs() < 1e-18, "lr = {lr}");
    }

    #[test]
    fn final_lr_not_above_initial() {
        let s = OneCycleSchedule::new(1e-3, 1000).unwrap();
        assert!(s.lr(999).unwrap() <= s.lr(0).unwrap());
    }

    #[test]
    fn all_lrs_positive_and_bounded_by_max() {
        let s = OneCycleSchedule::new(1e-3, 317).unwrap();
        for step in 0..317 {
            let lr = s.lr(step).unwrap();
            assert!(lr > 0.0);
            assert!(lr <= 1e-3 + 1e-18);
        }
    }

    #[test]
    fn out_of_range_step_errors() {
        let s = OneCycleSchedule::new(1e-3, 10).unwrap();
        assert!(matches!(
            s.lr(10).unwrap_err(),
            Error::StepOutOfRange { .. }
        ));
    }
}
