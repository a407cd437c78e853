use alloc::format;

use crate::error::{Error, Result};

/// Scalars of the discretization and of the reconstruction loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Kinematic viscosity.
    pub nu: f64,
    /// Penalty parameter of `div u = eps p`.
    pub eps: f64,
    /// Time step.
    pub dt: f64,
    /// Final time.
    pub t_final: f64,
    /// Tikhonov weight.
    pub lambda: f64,
    /// Tuning constant of the fixed-point update.
    pub c: f64,
    /// Relative-change stopping tolerance.
    pub tau: f64,
    /// Multiplicative noise level.
    pub delta: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            eps: 1e-9,
            dt: 0.07,
            t_final: 1.0,
            lambda: 1e-5,
            c: 0.01,
            tau: 1e-3,
            delta: 0.01,
            seed: 42,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("eps", self.eps),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("c", self.c),
            ("tau", self.tau),
        ];
        for (name, value) in positive {
            // `tau = inf` is allowed: it stops after the first update.
            if !(value > 0.0) || value.is_nan() {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {value}")));
            }
        }
        for (name, value) in [("lambda", self.lambda), ("delta", self.delta)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {value}")));
            }
        }
        if !self.dt.is_finite() || !self.t_final.is_finite() || self.dt > self.t_final {
            return Err(Error::InvalidConfig(format!(
                "need dt <= t_final, got dt={} t_final={}",
                self.dt, self.t_final
            )));
        }
        Ok(())
    }

    /// Number of backward-Euler steps, `round(t_final / dt)`.
    pub fn num_steps(&self) -> usize {
        libm::round(self.t_final / self.dt) as usize
    }

    /// Time of node `m`. Nodes are uniformly spaced by `dt`, so the last
    /// node is `num_steps() * dt`, which can differ slightly from `t_final`.
    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_fourteen_steps() {
        let cfg = SolverConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.num_steps(), 14);
        // 15 snapshots including t = 0, i.e. ceil(1 / 0.07).
        assert_eq!(cfg.num_steps() + 1, libm::ceil(1.0 / 0.07) as usize);
    }

    #[test]
    fn rejects_bad_values() {
        let d = SolverConfig::default();
        assert!(SolverConfig { dt: 2.0, ..d }.validate().is_err());
        assert!(SolverConfig { eps: 0.0, ..d }.validate().is_err());
        assert!(SolverConfig { lambda: -1.0, ..d }.validate().is_err());
        assert!(SolverConfig { tau: f64::INFINITY, ..d }.validate().is_ok());
    }
}
