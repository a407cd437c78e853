use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::OmegaRegion;

/// Known time factor `sigma(t)` of a separated source.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    /// `e^t`
    Exp,
    Constant(f64),
    /// `t^2 (T - t)^2`, vanishing at both ends of `[0, T]`.
    Beta { horizon: f64 },
    /// Time derivative of [`TimeProfile::Beta`].
    BetaDerivative { horizon: f64 },
    /// Values at the nodes `m * dt`; evaluated piecewise linearly.
    Nodal { dt: f64, values: Vec<f64> },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Exp => libm::exp(t),
            TimeProfile::Constant(v) => *v,
            TimeProfile::Beta { horizon } => {
                let s = t * (horizon - t);
                s * s
            }
            TimeProfile::BetaDerivative { horizon } => 2.0 * t * (horizon - t) * (horizon - 2.0 * t),
            TimeProfile::Nodal { dt, values } => {
                if values.is_empty() {
                    return 0.0;
                }
                let s = (t / dt).max(0.0);
                let i = libm::floor(s) as usize;
                if i + 1 >= values.len() {
                    return *values.last().unwrap();
                }
                let w = s - i as f64;
                (1.0 - w) * values[i] + w * values[i + 1]
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            TimeProfile::Constant(v) => *v == 0.0,
            TimeProfile::Nodal { values, .. } => values.iter().all(|&v| v == 0.0),
            _ => false,
        }
    }
}

/// Separated source `F(x, t) = sigma(t) f(x)` with `f` nodal P1, supported
/// on the vertices of tagged triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub sigma: TimeProfile,
    pub f: VectorField,
}

impl SourceSpec {
    pub fn new(sigma: TimeProfile, f: VectorField, omega: &OmegaRegion) -> Result<Self> {
        if f.num_vertices() != omega.vertices.len() {
            return Err(Error::InvalidInput("source field size does not match the mesh".into()));
        }
        if !f.supported_in(omega) {
            return Err(Error::InvalidInput("source field must vanish outside omega".into()));
        }
        Ok(Self { sigma, f })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_derivative_matches_difference_quotient() {
        let beta = TimeProfile::Beta { horizon: 1.0 };
        let dbeta = TimeProfile::BetaDerivative { horizon: 1.0 };
        for t in [0.1, 0.35, 0.8] {
            let h = 1e-6;
            let fd = (beta.eval(t + h) - beta.eval(t - h)) / (2.0 * h);
            assert!((fd - dbeta.eval(t)).abs() < 1e-8);
        }
        assert_eq!(beta.eval(0.0), 0.0);
        assert_eq!(beta.eval(1.0), 0.0);
    }

    #[test]
    fn nodal_profile_interpolates() {
        let p = TimeProfile::Nodal { dt: 0.5, values: alloc::vec![0.0, 1.0, 3.0] };
        assert_eq!(p.eval(0.25), 0.5);
        assert_eq!(p.eval(1.0), 3.0);
        assert_eq!(p.eval(7.0), 3.0);
        assert!(!p.is_identically_zero());
        assert!(TimeProfile::Constant(0.0).is_identically_zero());
    }
}
