use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("EIT condition violated: gamma = {gamma} must exceed 2*sqrt(2)*omega = {bound} (γ > 2√2·Ω)")]
    EitConditionViolated { gamma: f64, bound: f64 },

    #[error("adiabaticity violated: pulse bandwidth / transparency width = {ratio:.4} exceeds {limit}")]
    AdiabaticityViolated { ratio: f64, limit: f64 },

    #[error("rf regime violated: {0}")]
    RfRegimeViolated(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("control field amplitude is zero")]
    ZeroControlField,

    #[error("complex damping rates: discriminant gamma^2/4 - omega^2 = {discriminant} < 0 (underdamped)")]
    ComplexRates { discriminant: f64 },

    #[error("time step {dt} exceeds the stability/accuracy bound {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("march unstable at z = {z}: |psi| = {magnitude:e} exceeds 10x the input peak")]
    UnstableMarch { z: f64, magnitude: f64 },

    #[error("point (z = {z}, t = {t}) lies outside the modelled window")]
    OutOfWindow { z: f64, t: f64 },

    #[error("no peak: slice at index {index} is identically below threshold")]
    NoPeak { index: usize },

    #[error("profile is not unimodal: {segments} segments above half maximum")]
    NotUnimodal { segments: usize },

    #[error("empty signal")]
    EmptySignal,

    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("missing required key `{0}`")]
    MissingRequired(String),

    #[error("output sink: {0}")]
    Sink(#[from] io::Error),
}

impl Error {
    /// True for errors caused by the user's inputs (config, parameters,
    /// grid or schedule) rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::EitConditionViolated { .. }
                | Error::AdiabaticityViolated { .. }
                | Error::RfRegimeViolated(_)
                | Error::InvalidParams(_)
                | Error::ZeroControlField
                | Error::ComplexRates { .. }
                | Error::StepTooLarge { .. }
                | Error::InvalidGrid(_)
                | Error::InvalidSchedule(_)
                | Error::Syntax { .. }
                | Error::UnknownKey(_)
                | Error::DuplicateKey(_)
                | Error::MissingRequired(_)
        )
    }
}
