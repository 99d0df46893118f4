//! Neural building blocks: initializers, Gumbel sigmoid, 1.5-entmax,
//! positional encoding, optimizers and schedules.

mod entmax;
mod gumbel;
mod init;
mod optim;
mod pe;
mod schedule;

pub use entmax::{entmax15, ENTMAX_ALPHA};
pub use gumbel::{gumbel_sigmoid, gumbel_sigmoid_with_uniform, logistic_noise, NOISE_CLAMP};
pub use init::{xavier_uniform, zeros_param};
pub use optim::{AdaDeltaConfig, AdamWConfig, Optimizer, OptimizerKind};
pub use pe::sinusoidal_pe;
pub use schedule::{gumbel_temperature, onecycle_lr, OneCycle, ScheduleConfig, TemperatureSchedule};
