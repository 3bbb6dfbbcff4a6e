//! Reverse-mode gradients, Adam, the warmup/cosine/plateau schedule, the
//! training loop and finite-difference gradient verification.

mod gradcheck;
mod optim;
pub mod tape;
mod trainer;

pub use gradcheck::{check_gradients, finite_diff_check, GradCheckReport};
pub use optim::{lr_at, Adam, Plateau, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{GradTape, Gradients, Var};
pub use trainer::{evaluate_examples, per_position_csv, EvalRecord, HistoryRow, TrainConfig, Trainer};
