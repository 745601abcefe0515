//! Signal models and a bounded Levenberg–Marquardt solver.

mod data;
mod guess;
mod lm;
mod model;

pub use data::{parse_csv, read_csv_path, Dataset};
pub use guess::{estimate_frequency, initial_guess, Guess};
pub use lm::{fit, fit_auto, Bounds, FitOptions, FitResult};
pub use model::{evaluate, synthesize, wrap_phase, DecayModel, ModelKind};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("{kind} takes {expected} parameters, got {got}")]
    Arity { kind: ModelKind, expected: usize, got: usize },
    #[error("parameter {name} = {value}: {reason}")]
    InvalidParam { name: &'static str, value: f64, reason: &'static str },
    #[error("{kind} needs at least {needed} points, got {got}")]
    InsufficientData { kind: ModelKind, needed: usize, got: usize },
    #[error("x, y and sigma lengths differ ({x}, {y}, {sigma})")]
    LengthMismatch { x: usize, y: usize, sigma: usize },
    #[error("initial {name} = {value} outside bounds [{lower}, {upper}]")]
    InitOutOfBounds { name: &'static str, value: f64, lower: f64, upper: f64 },
    #[error("bad data: {0}")]
    BadData(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
}
