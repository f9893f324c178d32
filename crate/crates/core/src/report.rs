use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::fockspace::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// A precondition or runtime failure prevented the check from running.
    Error,
}

/// Parameter record attached to every residual.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckParams {
    #[serde(with = "crate::complex_serde::option", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<C64>,
    #[serde(with = "crate::complex_serde::option", default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<C64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
}

impl CheckParams {
    pub fn model(p: &ModelParams) -> Self {
        Self {
            sites: Some(p.sites),
            cutoff: Some(p.cutoff),
            kappa: Some(p.kappa),
            delta: Some(p.delta),
            ..Self::default()
        }
    }

    pub fn lambda(mut self, l: C64) -> Self {
        self.lambda = Some(l);
        self
    }

    pub fn mu(mut self, m: C64) -> Self {
        self.mu = Some(m);
        self
    }

    pub fn sector(mut self, m: usize) -> Self {
        self.sector = Some(m);
        self
    }

    pub fn site(mut self, n: usize) -> Self {
        self.site = Some(n);
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub params: CheckParams,
    /// NaN for checks that could not run; encoded as `null`.
    #[serde(with = "nan_as_null")]
    pub residual: f64,
    pub tolerance: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl PartialEq for ResidualReport {
    fn eq(&self, other: &Self) -> bool {
        let same_residual = self.residual == other.residual
            || (self.residual.is_nan() && other.residual.is_nan());
        self.name == other.name
            && self.params == other.params
            && same_residual
            && self.tolerance == other.tolerance
            && self.status == other.status
            && self.message == other.message
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl ResidualReport {
    pub fn new(name: impl Into<String>, params: CheckParams, residual: f64, tolerance: f64) -> Self {
        let status = if residual.is_finite() && residual <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name: name.into(),
            params,
            residual,
            tolerance,
            status,
            message: None,
        }
    }

    pub fn error(name: impl Into<String>, params: CheckParams, tolerance: f64, message: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params,
            residual: f64::NAN,
            tolerance,
            status: Status::Error,
            message: Some(message.into()),
        }
    }

    pub fn with_message(mut self, message: impl Into<String>) -> Self {
        self.message = Some(message.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// Re-judges the residual against another tolerance; errors stay errors.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        if self.status != Status::Error {
            self.status = if self.residual.is_finite() && self.residual <= tolerance {
                Status::Pass
            } else {
                Status::Fail
            };
        }
        self
    }
}

/// `‖lhs − rhs‖ / max(1, ‖rhs‖)` given the two norms' ingredients.
pub fn relative(diff_norm: f64, rhs_norm: f64) -> f64 {
    diff_norm / rhs_norm.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_iff_within_tolerance() {
        let p = CheckParams::default();
        assert!(ResidualReport::new("a", p.clone(), 1e-12, 1e-11).passed());
        assert!(!ResidualReport::new("a", p.clone(), 1e-10, 1e-11).passed());
        assert!(!ResidualReport::new("a", p, f64::NAN, 1.0).passed());
    }
}
