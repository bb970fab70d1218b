//! Step-size schedules α_k.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// α_k = scale / (offset + k), k = 0, 1, 2, …
    Harmonic { scale: f64, offset: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant(a) => a >= 0.0 && a.is_finite(),
            StepSchedule::Harmonic { scale, offset } => {
                scale >= 0.0 && scale.is_finite() && offset > 0.0 && offset.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid step schedule {self}")))
        }
    }

    pub fn step_size(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::Harmonic { scale, offset } => scale / (offset + k as f64),
        }
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::Constant(a) => write!(f, "constant({a})"),
            StepSchedule::Harmonic { scale, offset } => write!(f, "harmonic({scale}, {offset})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_decays_like_one_over_k() {
        let s = StepSchedule::Harmonic { scale: 1.0, offset: 1.0 };
        assert_eq!(s.step_size(0), 1.0);
        assert_eq!(s.step_size(3), 0.25);
        assert!(StepSchedule::Harmonic { scale: 1.0, offset: 0.0 }.validate().is_err());
        assert!(StepSchedule::Constant(-0.1).validate().is_err());
        assert!(StepSchedule::Constant(0.0).validate().is_ok());
    }
}
