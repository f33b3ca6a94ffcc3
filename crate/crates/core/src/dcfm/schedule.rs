use std::f64::consts::FRAC_PI_2;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Interpolant `z_t = a(t) z0 + b(t) z1` with `(a, b)` going from `(1, 0)` to `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Schedule {
    /// `a = 1 - t`, `b = t`.
    #[default]
    Linear,
    /// `a = cos(πt/2)`, `b = sin(πt/2)`.
    Trig,
}

impl Schedule {
    pub fn a(self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0 - t,
            Schedule::Trig => (FRAC_PI_2 * t).cos(),
        }
    }

    pub fn b(self, t: f64) -> f64 {
        match self {
            Schedule::Linear => t,
            Schedule::Trig => (FRAC_PI_2 * t).sin(),
        }
    }

    pub fn a_dot(self, t: f64) -> f64 {
        match self {
            Schedule::Linear => -1.0,
            Schedule::Trig => -FRAC_PI_2 * (FRAC_PI_2 * t).sin(),
        }
    }

    pub fn b_dot(self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0,
            Schedule::Trig => FRAC_PI_2 * (FRAC_PI_2 * t).cos(),
        }
    }

    /// Identifier stored in checkpoints.
    pub fn id(self) -> u32 {
        match self {
            Schedule::Linear => 0,
            Schedule::Trig => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Schedule::Linear),
            1 => Some(Schedule::Trig),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Schedule::Linear => "linear",
            Schedule::Trig => "trig",
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Schedule::Linear),
            "trig" => Ok(Schedule::Trig),
            other => Err(Error::Config {
                field: "schedule",
                message: format!("unknown schedule `{other}` (expected linear or trig)"),
            }),
        }
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("time {t} outside [0, 1]")))
    }
}

/// Returns `(z_t, v_t)` with `v_t = ȧ(t) z0 + ḃ(t) z1`.
pub fn interpolate(
    s: Schedule,
    z0: ArrayView1<f64>,
    z1: ArrayView1<f64>,
    t: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_time(t)?;
    if z0.len() != z1.len() {
        return Err(Error::shape("interpolant endpoints", z0.len(), z1.len()));
    }
    let (a, b, ad, bd) = (s.a(t), s.b(t), s.a_dot(t), s.b_dot(t));
    let zt = &z0 * a + &z1 * b;
    let vt = &z0 * ad + &z1 * bd;
    Ok((zt, vt))
}
