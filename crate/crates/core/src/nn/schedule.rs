use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine one-cycle learning-rate policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div: f64,
}

fn cos_anneal(from: f64, to: f64, pct: f64) -> f64 {
    to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * pct).cos())
}

impl OneCycle {
    pub fn new(max_lr: f64, total_steps: usize) -> Self {
        Self {
            max_lr,
            total_steps,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div: 1e4,
        }
    }

    /// Rises from `max_lr / div_factor` to `max_lr` over the warmup
    /// fraction, then anneals to `max_lr / final_div`. Steps past the end
    /// return the final value.
    pub fn lr(&self, step: usize) -> f64 {
        let total = self.total_steps.max(1) as f64;
        let step = (step as f64).min(total);
        let warm = self.pct_start * total;
        let start = self.max_lr / self.div_factor;
        let end = self.max_lr / self.final_div;
        if step <= warm {
            cos_anneal(start, self.max_lr, step / warm)
        } else {
            cos_anneal(self.max_lr, end, (step - warm) / (total - warm))
        }
    }
}

pub fn onecycle_lr(step: usize, total_steps: usize, max_lr: f64) -> f64 {
    OneCycle::new(max_lr, total_steps).lr(step)
}

/// Exponentially decaying Gumbel temperature with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau0: f64,
    pub decay: f64,
    pub tau_min: f64,
}

impl TemperatureSchedule {
    pub fn at(&self, step: usize) -> f64 {
        (self.tau0 * (-self.decay * step as f64).exp()).max(self.tau_min)
    }
}

pub fn gumbel_temperature(step: usize, cfg: &TemperatureSchedule) -> f64 {
    cfg.at(step)
}

/// Learning-rate and temperature settings for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub visual_max_lr: f64,
    pub text_max_lr: f64,
    pub warmup_frac: f64,
    pub tau0: f64,
    /// Exponential decay rate per step; `None` derives it so that the
    /// temperature reaches `tau_min` at `tau_floor_at` of training.
    pub tau_decay: Option<f64>,
    pub tau_min: f64,
    pub tau_floor_at: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            visual_max_lr: 0.25,
            text_max_lr: 1e-3,
            warmup_frac: 0.3,
            tau0: 1.0,
            tau_decay: None,
            tau_min: 0.5,
            tau_floor_at: 0.6,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0) {
            return Err(Error::contract(format!("tau_min must be > 0, got {}", self.tau_min)));
        }
        if self.tau_decay.is_some_and(|r| !(r >= 0.0)) {
            return Err(Error::contract("tau decay rate must be ≥ 0"));
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return Err(Error::contract(format!("warmup fraction must lie in (0,1), got {}", self.warmup_frac)));
        }
        if !(self.tau_floor_at > 0.0) || !(self.tau0 > 0.0) {
            return Err(Error::contract("temperature schedule needs tau0 > 0 and tau_floor_at > 0"));
        }
        Ok(())
    }

    pub fn temperature(&self, total_steps: usize) -> TemperatureSchedule {
        let decay = self.tau_decay.unwrap_or_else(|| {
            let horizon = (self.tau_floor_at * total_steps.max(1) as f64).max(1.0);
            (self.tau0 / self.tau_min).ln().max(0.0) / horizon
        });
        TemperatureSchedule {
            tau0: self.tau0,
            decay,
            tau_min: self.tau_min,
        }
    }

    pub fn one_cycle(&self, max_lr: f64, total_steps: usize) -> OneCycle {
        OneCycle {
            pct_start: self.warmup_frac,
            ..OneCycle::new(max_lr, total_steps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_cycle_shape() {
        let s = OneCycle::new(0.25, 1000);
        assert!((s.lr(0) - 0.25 / 25.0).abs() < 1e-15);
        assert!((s.lr(300) - 0.25).abs() < 1e-15);
        assert!((s.lr(1000) - 0.25 / 1e4).abs() < 1e-15);
        assert_eq!(s.lr(5000), s.lr(1000));
        for step in 0..1000 {
            assert!((s.lr(step + 1) - s.lr(step)).abs() <= 0.25 / 100.0);
        }
        assert_eq!(onecycle_lr(300, 1000, 0.001), 0.001);
    }

    #[test]
    fn temperature_decays_to_floor() {
        let cfg = ScheduleConfig::default();
        let t = cfg.temperature(1000);
        assert_eq!(t.at(0), 1.0);
        assert!((t.at(600) - 0.5).abs() < 1e-12);
        assert_eq!(gumbel_temperature(1_000_000, &t), 0.5);
        let mut prev = f64::INFINITY;
        for step in 0..2000 {
            let v = t.at(step);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn validation() {
        assert!(ScheduleConfig::default().validate().is_ok());
        assert!(ScheduleConfig { tau_min: 0.0, ..Default::default() }.validate().is_err());
        assert!(ScheduleConfig { warmup_frac: 1.0, ..Default::default() }.validate().is_err());
        assert!(ScheduleConfig { tau_decay: Some(-0.1), ..Default::default() }.validate().is_err());
    }
}
